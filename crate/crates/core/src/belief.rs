//! Sampled belief model over the unknown truth.
//!
//! A [`BeliefEnsemble`] is a finite set of unimodal candidate curves with
//! posterior weights. Observations reweight the curves by their Gaussian
//! likelihood, and the weighted ensemble yields the comparison probabilities
//! used by the posterior over the maximizer location:
//!
//! - `g(x, y)`: probability that a noisy comparison of `x` and `y` reports the
//!   true ordering of the underlying values;
//! - `g_bar(x_l, x_r)`: probability of observing `f̂(x_l) > f̂(x_r)` given the
//!   maximizer lies strictly between the two points.

use std::f64::consts::SQRT_2;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::Interval;
use crate::error::{Error, Result};
use crate::{normal, PROB_EPS};

const ARGMAX_SCAN_POINTS: usize = 4096;
const ARGMAX_GOLDEN_ITERS: usize = 40;
const UNIMODAL_CHECK_POINTS: usize = 1024;

/// Shape of a candidate curve before scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CurveShape {
    GaussianPdf {
        mean: f64,
        sd: f64,
    },
    /// Gamma density with shape `k` and rate `lambda`.
    GammaPdf {
        shape: f64,
        rate: f64,
    },
    BetaPdf {
        alpha: f64,
        beta: f64,
    },
    /// `-curvature * (x - center)^2`.
    Quadratic {
        center: f64,
        curvature: f64,
    },
    /// Linear interpolation through `(xs, ys)`, constant beyond the ends.
    Tabulated {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
}

impl CurveShape {
    /// Loads a two-column `x,f(x)` CSV (header optional) with strictly
    /// increasing `x`.
    pub fn tabulated_from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            if rec.len() != 2 {
                return Err(Error::InvalidInput(format!(
                    "{}: row {} has {} columns, expected 2",
                    path.display(),
                    row + 1,
                    rec.len()
                )));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    xs.push(x);
                    ys.push(y);
                }
                // a non-numeric first row is a header
                _ if row == 0 => continue,
                _ => return Err(Error::InvalidInput(format!("{}: row {} is not numeric", path.display(), row + 1))),
            }
        }
        let shape = CurveShape::Tabulated { xs, ys };
        shape.validate()?;
        Ok(shape)
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(what.to_string()));
        match *self {
            CurveShape::GaussianPdf { mean, sd } => {
                if !(mean.is_finite() && sd > 0.0 && sd.is_finite()) {
                    return bad("gaussian-pdf needs finite mean and sd > 0");
                }
            }
            CurveShape::GammaPdf { shape, rate } => {
                if !(shape >= 1.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
                    return bad("gamma-pdf needs shape >= 1 and rate > 0");
                }
            }
            CurveShape::BetaPdf { alpha, beta } => {
                if !(alpha >= 1.0 && beta >= 1.0 && alpha.is_finite() && beta.is_finite()) {
                    return bad("beta-pdf needs alpha, beta >= 1");
                }
            }
            CurveShape::Quadratic { center, curvature } => {
                if !(center.is_finite() && curvature > 0.0 && curvature.is_finite()) {
                    return bad("quadratic needs finite center and curvature > 0");
                }
            }
            CurveShape::Tabulated { ref xs, ref ys } => {
                if xs.len() < 2 || xs.len() != ys.len() {
                    return bad("tabulated curve needs >= 2 rows of (x, y)");
                }
                if xs.windows(2).any(|w| !(w[0] < w[1])) {
                    return bad("tabulated x values must be strictly increasing");
                }
                if xs.iter().chain(ys).any(|v| !v.is_finite()) {
                    return bad("tabulated values must be finite");
                }
            }
        }
        Ok(())
    }

    fn compile(&self) -> Compiled {
        match *self {
            CurveShape::GaussianPdf { mean, sd } => Compiled::Gaussian {
                mean,
                inv_two_var: 1.0 / (2.0 * sd * sd),
                norm: 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt()),
            },
            CurveShape::GammaPdf { shape, rate } => {
                Compiled::Gamma { k_minus_one: shape - 1.0, rate, log_norm: shape * rate.ln() - libm::lgamma(shape) }
            }
            CurveShape::BetaPdf { alpha, beta } => Compiled::Beta {
                a_minus_one: alpha - 1.0,
                b_minus_one: beta - 1.0,
                log_norm: libm::lgamma(alpha + beta) - libm::lgamma(alpha) - libm::lgamma(beta),
            },
            CurveShape::Quadratic { center, curvature } => Compiled::Quadratic { center, curvature },
            CurveShape::Tabulated { ref xs, ref ys } => {
                Compiled::Table { xs: xs.clone().into(), ys: ys.clone().into() }
            }
        }
    }

    /// Closed-form maximizer on the real line, when one exists.
    fn analytic_argmax(&self) -> Option<f64> {
        match *self {
            CurveShape::GaussianPdf { mean, .. } => Some(mean),
            CurveShape::GammaPdf { shape, rate } => Some((shape - 1.0) / rate),
            CurveShape::BetaPdf { alpha, beta } => {
                if alpha + beta > 2.0 {
                    Some((alpha - 1.0) / (alpha + beta - 2.0))
                } else {
                    None
                }
            }
            CurveShape::Quadratic { center, .. } => Some(center),
            // a linear interpolant peaks at a knot
            CurveShape::Tabulated { ref xs, ref ys } => {
                let mut best = 0;
                for (i, y) in ys.iter().enumerate() {
                    if *y > ys[best] {
                        best = i;
                    }
                }
                Some(xs[best])
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Compiled {
    Gaussian { mean: f64, inv_two_var: f64, norm: f64 },
    Gamma { k_minus_one: f64, rate: f64, log_norm: f64 },
    Beta { a_minus_one: f64, b_minus_one: f64, log_norm: f64 },
    Quadratic { center: f64, curvature: f64 },
    Table { xs: Arc<[f64]>, ys: Arc<[f64]> },
}

impl Compiled {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            Compiled::Gaussian { mean, inv_two_var, norm } => {
                let d = x - mean;
                norm * (-d * d * inv_two_var).exp()
            }
            Compiled::Gamma { k_minus_one, rate, log_norm } => {
                if x < 0.0 {
                    0.0
                } else if x == 0.0 {
                    if k_minus_one == 0.0 {
                        log_norm.exp()
                    } else {
                        0.0
                    }
                } else {
                    (k_minus_one * x.ln() - rate * x + log_norm).exp()
                }
            }
            Compiled::Beta { a_minus_one, b_minus_one, log_norm } => {
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                let term = |p: f64, v: f64| if p == 0.0 { 0.0 } else { p * v.ln() };
                (term(a_minus_one, x) + term(b_minus_one, 1.0 - x) + log_norm).exp()
            }
            Compiled::Quadratic { center, curvature } => {
                let d = x - center;
                -curvature * d * d
            }
            Compiled::Table { ref xs, ref ys } => interpolate(xs, ys, x),
        }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// One candidate truth `f_k(x) = offset + scale * shape(x)`.
#[derive(Debug, Clone)]
pub struct BeliefCurve {
    label: String,
    shape: CurveShape,
    scale: f64,
    offset: f64,
    argmax: f64,
    compiled: Compiled,
}

impl BeliefCurve {
    pub fn new(label: impl Into<String>, shape: CurveShape, domain: Interval) -> Result<Self> {
        Self::scaled(label, shape, 1.0, 0.0, domain)
    }

    /// Builds the curve, locates its maximizer on `domain` and checks it is
    /// unimodal there.
    pub fn scaled(
        label: impl Into<String>,
        shape: CurveShape,
        scale: f64,
        offset: f64,
        domain: Interval,
    ) -> Result<Self> {
        shape.validate()?;
        if !(scale > 0.0 && scale.is_finite() && offset.is_finite()) {
            return Err(Error::InvalidInput("curve scale must be > 0, offset finite".into()));
        }
        let compiled = shape.compile();
        let mut curve = Self { label: label.into(), shape, scale, offset, argmax: f64::NAN, compiled };
        if !is_unimodal(|x| curve.evaluate(x), domain) {
            return Err(Error::NotUnimodal { label: curve.label });
        }
        curve.argmax = match curve.shape.analytic_argmax() {
            Some(x) => domain.clamp(x),
            None => locate_argmax(|x| curve.evaluate(x), domain),
        };
        if domain.grid(ARGMAX_SCAN_POINTS).any(|x| !curve.evaluate(x).is_finite()) {
            return Err(Error::InvalidInput(format!("curve `{}` is not finite on the domain", curve.label)));
        }
        Ok(curve)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn shape(&self) -> &CurveShape {
        &self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    #[inline]
    pub fn evaluate(&self, x: f64) -> f64 {
        self.offset + self.scale * self.compiled.eval(x)
    }

    pub fn argmax_location(&self) -> f64 {
        self.argmax
    }
}

/// Grid scan followed by golden-section refinement around the best grid point.
pub(crate) fn locate_argmax(f: impl Fn(f64) -> f64, domain: Interval) -> f64 {
    let grid: Vec<f64> = domain.grid(ARGMAX_SCAN_POINTS).collect();
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &x) in grid.iter().enumerate() {
        let v = f(x);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(grid.len() - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..ARGMAX_GOLDEN_ITERS {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let refined = 0.5 * (lo + hi);
    if f(refined) >= best_val {
        refined
    } else {
        grid[best]
    }
}

/// Nondecreasing then nonincreasing on a 1024-point grid; differences below
/// `1e-12` of the curve's range are treated as flat.
pub(crate) fn is_unimodal(f: impl Fn(f64) -> f64, domain: Interval) -> bool {
    let vals: Vec<f64> = domain.grid(UNIMODAL_CHECK_POINTS).map(f).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let (mn, mx) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let tol = 1e-12 * (mx - mn).max(f64::MIN_POSITIVE);
    let mut descending = false;
    for w in vals.windows(2) {
        let d = w[1] - w[0];
        if d > tol {
            if descending {
                return false;
            }
        } else if d < -tol {
            descending = true;
        }
    }
    true
}

/// Probability that a noisy comparison of `x` and `y` under a single curve
/// reports the true ordering. Always in `[0.5, 1]`.
pub fn g_single(curve: &BeliefCurve, x: f64, y: f64, sigma: f64) -> f64 {
    g_from_values(curve.evaluate(x), curve.evaluate(y), sigma)
}

#[inline]
pub(crate) fn g_from_values(fx: f64, fy: f64, sigma: f64) -> f64 {
    let gap = (fx - fy).abs();
    if sigma == 0.0 {
        return if gap == 0.0 { 0.5 } else { 1.0 };
    }
    normal::cdf(gap / (SQRT_2 * sigma))
}

/// Probability of observing `f̂(x_l) > f̂(x_r)` under a single curve.
#[inline]
pub(crate) fn left_wins(fl: f64, fr: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return if fl > fr {
            1.0
        } else if fl < fr {
            0.0
        } else {
            0.5
        };
    }
    normal::cdf((fl - fr) / (SQRT_2 * sigma))
}

#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Weighted set of candidate curves with known homoscedastic noise.
#[derive(Debug, Clone)]
pub struct BeliefEnsemble {
    domain: Interval,
    curves: Arc<[BeliefCurve]>,
    log_weights: Vec<f64>,
    noise_sigma: f64,
}

impl BeliefEnsemble {
    /// Uniform prior over `curves`. Optimizers must be pairwise distinct.
    pub fn new(domain: Interval, curves: Vec<BeliefCurve>, noise_sigma: f64) -> Result<Self> {
        let ens = Self::with_shared_optimizers(domain, curves, noise_sigma)?;
        let tol = domain.merge_tol();
        let mut order: Vec<usize> = (0..ens.len()).collect();
        order.sort_by(|&a, &b| ens.curves[a].argmax.total_cmp(&ens.curves[b].argmax));
        for w in order.windows(2) {
            let (a, b) = (&ens.curves[w[0]], &ens.curves[w[1]]);
            if (b.argmax - a.argmax).abs() < tol {
                return Err(Error::DuplicateOptimizer { first: a.label.clone(), second: b.label.clone(), x: a.argmax });
            }
        }
        Ok(ens)
    }

    /// Like [`BeliefEnsemble::new`] but allows several curves to share an
    /// optimizer, as happens when one shape is replicated over a scale grid.
    pub fn with_shared_optimizers(domain: Interval, curves: Vec<BeliefCurve>, noise_sigma: f64) -> Result<Self> {
        if curves.len() < 2 {
            return Err(Error::InvalidInput(format!("ensemble needs K >= 2 curves, got {}", curves.len())));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("noise sigma must be >= 0, got {noise_sigma}")));
        }
        if let Some(c) = curves.iter().find(|c| !domain.contains(c.argmax)) {
            return Err(Error::OutOfDomain { x: c.argmax, lo: domain.lo(), hi: domain.hi() });
        }
        let k = curves.len();
        Ok(Self { domain, curves: curves.into(), log_weights: vec![-(k as f64).ln(); k], noise_sigma })
    }

    /// Replaces the weights; they must be nonnegative and sum to one.
    pub fn with_weights(mut self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::InvalidInput("weight count does not match curve count".into()));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("weights must be nonnegative and sum to 1".into()));
        }
        self.log_weights = weights.iter().map(|w| (w / sum).ln()).collect();
        Ok(self)
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn curves(&self) -> &[BeliefCurve] {
        &self.curves
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.log_weights[k].exp()
    }

    /// `f_k(x)` for every curve, in curve order.
    pub fn evaluate_all(&self, x: f64) -> Vec<f64> {
        self.curves.iter().map(|c| c.evaluate(x)).collect()
    }

    /// Index of the highest-weight curve (lowest index on ties).
    pub fn map_index(&self) -> usize {
        let mut best = 0;
        for (k, lw) in self.log_weights.iter().enumerate() {
            if *lw > self.log_weights[best] {
                best = k;
            }
        }
        best
    }

    /// Bayesian reweighting after observing `observed` at `x`.
    pub fn update_weights(&self, x: f64, observed: f64) -> Result<Self> {
        self.domain.check(x)?;
        let values = self.evaluate_all(x);
        let mut next = self.clone();
        next.observe_values(&values, x, observed)?;
        Ok(next)
    }

    /// In-place update with precomputed `f_k(x)` values.
    pub(crate) fn observe_values(&mut self, values: &[f64], x: f64, observed: f64) -> Result<()> {
        if !observed.is_finite() {
            return Err(Error::NonFiniteObservation { x, value: observed });
        }
        debug_assert_eq!(values.len(), self.len());
        if self.noise_sigma > 0.0 {
            let inv = 1.0 / (2.0 * self.noise_sigma * self.noise_sigma);
            for (lw, v) in self.log_weights.iter_mut().zip(values) {
                let r = observed - v;
                *lw -= r * r * inv;
            }
        } else {
            // σ → 0 limit: only the surviving curves closest to the data keep mass
            let best = self
                .log_weights
                .iter()
                .zip(values)
                .filter(|(lw, _)| lw.is_finite())
                .map(|(_, v)| (observed - v).abs())
                .fold(f64::INFINITY, f64::min);
            let tol = 1e-12 * best.max(observed.abs()).max(1.0);
            for (lw, v) in self.log_weights.iter_mut().zip(values) {
                if (observed - v).abs() > best + tol {
                    *lw = f64::NEG_INFINITY;
                }
            }
        }
        self.renormalize();
        Ok(())
    }

    fn renormalize(&mut self) {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            // every weight vanished; fall back to uniform
            let k = self.len() as f64;
            self.log_weights.iter_mut().for_each(|lw| *lw = -k.ln());
            return;
        }
        let sum: f64 = self.log_weights.iter().map(|lw| (lw - max).exp()).sum();
        let log_sum = sum.ln();
        self.log_weights.iter_mut().for_each(|lw| *lw = (*lw - max) - log_sum);
    }

    /// Mixture probability of a correct comparison between `x` and `y`.
    pub fn g_mixture(&self, x: f64, y: f64) -> f64 {
        self.g_mixture_values(&self.evaluate_all(x), &self.evaluate_all(y))
    }

    pub(crate) fn g_mixture_values(&self, fx: &[f64], fy: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((lw, a), b) in self.log_weights.iter().zip(fx).zip(fy) {
            let p = lw.exp();
            if p > 0.0 {
                acc += p * g_from_values(*a, *b, self.noise_sigma);
            }
        }
        clamp_prob(acc)
    }

    /// Probability of `f̂(x_l) > f̂(x_r)` given the maximizer lies in
    /// `(x_l, x_r)`; 1/2 when no curve's optimizer lies there.
    pub fn g_bar(&self, x_l: f64, x_r: f64) -> Result<f64> {
        if !(x_l < x_r) {
            return Err(Error::InvalidInput(format!("g_bar needs x_l < x_r, got ({x_l}, {x_r})")));
        }
        Ok(self.g_bar_values(x_l, x_r, &self.evaluate_all(x_l), &self.evaluate_all(x_r)))
    }

    pub(crate) fn g_bar_values(&self, x_l: f64, x_r: f64, fl: &[f64], fr: &[f64]) -> f64 {
        let mut mass = 0.0;
        let mut acc = 0.0;
        for (k, curve) in self.curves.iter().enumerate() {
            if curve.argmax > x_l && curve.argmax < x_r {
                let p = self.log_weights[k].exp();
                mass += p;
                acc += p * left_wins(fl[k], fr[k], self.noise_sigma);
            }
        }
        if mass > 0.0 {
            clamp_prob(acc / mass)
        } else {
            0.5
        }
    }
}

/// Parametric families available for ensemble construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    GaussianPdf,
    GammaPdf,
    BetaPdf,
    Quadratic,
    Tabulated,
}

/// Cross-product description of an ensemble: every parameter tuple times
/// every scale (times every offset).
///
/// Parameter tuples are `[mean, sd]`, `[shape, rate]`, `[alpha, beta]` or
/// `[center, curvature]` depending on the family. Tabulated families take
/// their curves from `tables` (CSV paths) instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricFamilySpec {
    pub family: FamilyKind,
    #[serde(default)]
    pub parameter_grid: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tables: Vec<String>,
}

impl ParametricFamilySpec {
    pub fn new(family: FamilyKind, parameter_grid: Vec<Vec<f64>>) -> Self {
        Self { family, parameter_grid, scale_grid: None, offset_grid: None, tables: Vec::new() }
    }

    pub fn with_scales(mut self, scales: Vec<f64>) -> Self {
        self.scale_grid = Some(scales);
        self
    }

    pub fn with_offsets(mut self, offsets: Vec<f64>) -> Self {
        self.offset_grid = Some(offsets);
        self
    }

    fn shapes(&self) -> Result<Vec<(String, CurveShape)>> {
        let arity = |p: &Vec<f64>| -> Result<(f64, f64)> {
            match p.as_slice() {
                [a, b] => Ok((*a, *b)),
                _ => Err(Error::InvalidInput(format!("{:?} expects 2 parameters, got {p:?}", self.family))),
            }
        };
        if self.family == FamilyKind::Tabulated {
            return self.tables.iter().map(|path| Ok((path.clone(), CurveShape::tabulated_from_csv(path)?))).collect();
        }
        self.parameter_grid
            .iter()
            .map(|p| {
                let (a, b) = arity(p)?;
                let (label, shape) = match self.family {
                    FamilyKind::GaussianPdf => {
                        (format!("gaussian({a},{b})"), CurveShape::GaussianPdf { mean: a, sd: b })
                    }
                    FamilyKind::GammaPdf => (format!("gamma({a},{b})"), CurveShape::GammaPdf { shape: a, rate: b }),
                    FamilyKind::BetaPdf => (format!("beta({a},{b})"), CurveShape::BetaPdf { alpha: a, beta: b }),
                    FamilyKind::Quadratic => {
                        (format!("quadratic({a},{b})"), CurveShape::Quadratic { center: a, curvature: b })
                    }
                    FamilyKind::Tabulated => unreachable!(),
                };
                Ok((label, shape))
            })
            .collect()
    }

    /// Number of curves the expansion produces.
    pub fn size(&self) -> usize {
        let base = if self.family == FamilyKind::Tabulated { self.tables.len() } else { self.parameter_grid.len() };
        base * self.scale_grid.as_ref().map_or(1, Vec::len) * self.offset_grid.as_ref().map_or(1, Vec::len)
    }

    pub fn expand(&self, domain: Interval) -> Result<Vec<BeliefCurve>> {
        let scales = self.scale_grid.clone().unwrap_or_else(|| vec![1.0]);
        let offsets = self.offset_grid.clone().unwrap_or_else(|| vec![0.0]);
        let mut out = Vec::with_capacity(self.size());
        for (label, shape) in self.shapes()? {
            for &s in &scales {
                for &o in &offsets {
                    let l = match (scales.len() > 1, offsets.len() > 1) {
                        (false, false) => label.clone(),
                        (true, false) => format!("{label}*{s}"),
                        (false, true) => format!("{label}+{o}"),
                        (true, true) => format!("{label}*{s}+{o}"),
                    };
                    out.push(BeliefCurve::scaled(l, shape.clone(), s, o, domain)?);
                }
            }
        }
        Ok(out)
    }

    /// Expands and builds a uniform-prior ensemble. Optimizer distinctness is
    /// enforced unless a scale or offset grid replicates shapes.
    pub fn build(&self, domain: Interval, noise_sigma: f64) -> Result<BeliefEnsemble> {
        let curves = self.expand(domain)?;
        let replicated = self.scale_grid.as_ref().is_some_and(|s| s.len() > 1)
            || self.offset_grid.as_ref().is_some_and(|o| o.len() > 1);
        if replicated {
            BeliefEnsemble::with_shared_optimizers(domain, curves, noise_sigma)
        } else {
            BeliefEnsemble::new(domain, curves, noise_sigma)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    fn table(xs: &[f64], ys: &[f64]) -> CurveShape {
        CurveShape::Tabulated { xs: xs.to_vec(), ys: ys.to_vec() }
    }

    /// Two tabulated curves whose values at x = 0.5 are prescribed.
    fn pair_at_half(v1: f64, v2: f64, sigma: f64) -> BeliefEnsemble {
        let d = unit();
        let c1 = BeliefCurve::new("a", table(&[0.0, 0.25, 0.5, 1.0], &[v1 - 1.0, v1 + 1.0, v1, v1 - 3.0]), d).unwrap();
        let c2 = BeliefCurve::new("b", table(&[0.0, 0.5, 0.75, 1.0], &[v2 - 1.0, v2, v2 + 1.0, v2 - 1.0]), d).unwrap();
        BeliefEnsemble::new(d, vec![c1, c2], sigma).unwrap()
    }

    #[test]
    fn equal_likelihoods_leave_weights_unchanged() {
        let d = unit();
        let c1 = BeliefCurve::new("a", table(&[0.0, 0.25, 0.5, 1.0], &[0.0, 1.0, 0.5, 0.0]), d).unwrap();
        let c2 = BeliefCurve::new("b", table(&[0.0, 0.5, 0.75, 1.0], &[0.0, 0.5, 1.0, 0.0]), d).unwrap();
        let ens = BeliefEnsemble::new(d, vec![c1, c2], 0.3).unwrap();
        assert_eq!(ens.curves()[0].evaluate(0.5), ens.curves()[1].evaluate(0.5));
        let next = ens.update_weights(0.5, 17.0).unwrap();
        assert!((next.weight(0) - 0.5).abs() < 1e-15);
        assert!((next.weight(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_curve_likelihood_ratio() {
        let ens = pair_at_half(0.3, 1.1, 0.7);
        let fx = ens.evaluate_all(0.5);
        let next = ens.update_weights(0.5, fx[0]).unwrap();
        let gap = fx[1] - fx[0];
        let expected = 1.0 / (1.0 + (-gap * gap / (2.0 * 0.49)).exp());
        assert!((next.weight(0) - expected).abs() < 1e-12);
    }

    #[test]
    fn likelihood_ratio_reference_value() {
        // f_1(x) = 0, f_2(x) = 2, sigma = 1, observed 0: p_1 = 1/(1 + e^-2)
        let ens = pair_at_half(0.0, 2.0, 1.0);
        assert_eq!(ens.evaluate_all(0.5), vec![0.0, 2.0]);
        let next = ens.update_weights(0.5, 0.0).unwrap();
        assert!((next.weight(0) - 0.880_797_077_977_882_3).abs() < 1e-12);
        assert!((next.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn consistent_data_drives_weight_to_one_monotonically() {
        let d = unit();
        let c1 = BeliefCurve::new("truth", CurveShape::Quadratic { center: 0.4, curvature: 1.0 }, d).unwrap();
        let c2 = BeliefCurve::new("alt", CurveShape::Quadratic { center: 0.6, curvature: 1.0 }, d).unwrap();
        let mut ens = BeliefEnsemble::new(d, vec![c1, c2], 0.05).unwrap();
        let mut last = ens.weight(0);
        for i in 0..30 {
            let x = (i as f64 * 0.37).fract();
            let y = ens.curves()[0].evaluate(x);
            ens = ens.update_weights(x, y).unwrap();
            assert!(ens.weight(0) >= last - 1e-15);
            last = ens.weight(0);
        }
        assert!(last > 1.0 - 1e-6);
    }

    #[test]
    fn underflowing_likelihoods_still_normalize() {
        let ens = pair_at_half(0.0, 1.0, 1e-9);
        let next = ens.update_weights(0.5, 0.5e3).unwrap();
        let w = next.weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn rejects_out_of_domain_and_nan() {
        let ens = pair_at_half(0.0, 1.0, 1.0);
        assert!(matches!(ens.update_weights(1.5, 0.0), Err(Error::OutOfDomain { .. })));
        assert!(matches!(ens.update_weights(0.5, f64::NAN), Err(Error::NonFiniteObservation { .. })));
    }

    #[test]
    fn zero_noise_keeps_exact_matches() {
        let d = unit();
        let curves = (0..3)
            .map(|i| {
                BeliefCurve::new(
                    format!("q{i}"),
                    CurveShape::Quadratic { center: 0.2 + 0.3 * i as f64, curvature: 1.0 },
                    d,
                )
                .unwrap()
            })
            .collect();
        let ens = BeliefEnsemble::new(d, curves, 0.0).unwrap();
        let y = ens.curves()[1].evaluate(0.1);
        let next = ens.update_weights(0.1, y).unwrap();
        assert_eq!(next.weights(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn g_single_reference_values() {
        let d = unit();
        let c = BeliefCurve::new("lin", table(&[0.0, 1.0], &[0.0, 1.0]), d).unwrap();
        assert_eq!(g_single(&c, 0.3, 0.3, 0.7), 0.5);
        // f(x) - f(y) = sqrt(2) * sigma  => Φ(1)
        let sigma = 0.25;
        let gap = SQRT_2 * sigma;
        let g = g_single(&c, 0.1 + gap, 0.1, sigma);
        assert!((g - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert_eq!(g_single(&c, 0.9, 0.1, 0.0), 1.0);
        assert_eq!(g_single(&c, 0.4, 0.4, 0.0), 0.5);
        // sigma limits relative to the curve range
        assert!((g_single(&c, 0.9, 0.1, 1e8) - 0.5).abs() < 1e-8);
        assert!((g_single(&c, 0.9, 0.1, 1e-8) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn g_mixture_collapses_and_averages() {
        let d = unit();
        let shape = table(&[0.0, 0.5, 1.0], &[0.0, 1.0, 0.5]);
        let a = BeliefCurve::new("a", shape.clone(), d).unwrap();
        let single = g_single(&a, 0.2, 0.9, 0.3);
        let same = BeliefEnsemble::with_shared_optimizers(d, vec![a.clone(), a.clone()], 0.3).unwrap();
        assert!((same.g_mixture(0.2, 0.9) - single).abs() < 1e-15);

        // per-curve g = 0.6 and 0.8 at (0, 1): pick gaps from the normal quantiles
        let sigma = 1.0;
        let gap_for = |g: f64| {
            // invert Φ by bisection
            let (mut lo, mut hi) = (0.0, 10.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if normal::cdf(mid) < g {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            0.5 * (lo + hi) * SQRT_2 * sigma
        };
        let c1 = BeliefCurve::new("c1", table(&[0.0, 0.4, 1.0], &[0.0, 5.0, gap_for(0.6)]), d).unwrap();
        let c2 = BeliefCurve::new("c2", table(&[0.0, 0.6, 1.0], &[0.0, 5.0, gap_for(0.8)]), d).unwrap();
        let ens = BeliefEnsemble::new(d, vec![c1, c2], sigma).unwrap();
        assert!((ens.g_mixture(0.0, 1.0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn g_bar_conventions() {
        let d = unit();
        let c1 = BeliefCurve::new("left", CurveShape::Quadratic { center: 0.1, curvature: 1.0 }, d).unwrap();
        let c2 = BeliefCurve::new("mid", CurveShape::Quadratic { center: 0.5, curvature: 1.0 }, d).unwrap();
        let ens = BeliefEnsemble::new(d, vec![c1, c2], 0.2).unwrap();
        // no optimizer strictly inside (0.6, 0.9)
        assert_eq!(ens.g_bar(0.6, 0.9).unwrap(), 0.5);
        // symmetric about the interior optimizer
        assert!((ens.g_bar(0.3, 0.7).unwrap() - 0.5).abs() < 1e-15);
        assert!(ens.g_bar(0.7, 0.3).is_err());
        assert!(ens.g_bar(0.3, 0.3).is_err());
    }

    #[test]
    fn g_bar_restricted_weighted_average() {
        // two interior curves with restricted weights (0.25, 0.75) and
        // per-curve left-win probabilities (0.9, 0.3): 0.25*0.9 + 0.75*0.3
        let d = unit();
        let sigma = 1.0;
        let quantile = |g: f64| {
            let (mut lo, mut hi) = (-10.0, 10.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if normal::cdf(mid) < g {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            0.5 * (lo + hi) * SQRT_2 * sigma
        };
        let g1 = quantile(0.9);
        let g2 = quantile(0.3);
        let c1 = BeliefCurve::new("in1", table(&[0.0, 0.4, 1.0], &[g1, 10.0, 0.0]), d).unwrap();
        let c2 = BeliefCurve::new("in2", table(&[0.0, 0.6, 1.0], &[g2, 10.0, 0.0]), d).unwrap();
        let c3 = BeliefCurve::new("out", table(&[0.0, 1.0], &[0.0, 1.0]), d).unwrap();
        let ens = BeliefEnsemble::new(d, vec![c1, c2, c3], sigma).unwrap().with_weights(&[0.1, 0.3, 0.6]).unwrap();
        let gb = ens.g_bar(0.0, 1.0).unwrap();
        assert!((gb - 0.45).abs() < 1e-12, "{gb}");
    }

    #[test]
    fn construction_validates_shape_and_spacing() {
        let d = unit();
        let valley = table(&[0.0, 0.5, 1.0], &[1.0, 0.0, 1.0]);
        assert!(matches!(BeliefCurve::new("v", valley, d), Err(Error::NotUnimodal { .. })));
        let a = BeliefCurve::new("a", CurveShape::Quadratic { center: 0.5, curvature: 1.0 }, d).unwrap();
        let b = BeliefCurve::new("b", CurveShape::Quadratic { center: 0.5, curvature: 2.0 }, d).unwrap();
        assert!(matches!(BeliefEnsemble::new(d, vec![a.clone(), b], 0.1), Err(Error::DuplicateOptimizer { .. })));
        assert!(BeliefEnsemble::new(d, vec![a], 0.1).is_err());
    }

    #[test]
    fn argmax_from_scan_matches_analytic() {
        let d = Interval::new(0.0, 20.0).unwrap();
        let gamma = CurveShape::GammaPdf { shape: 9.0, rate: 1.0 };
        let compiled = gamma.compile();
        let scanned = locate_argmax(|x| compiled.eval(x), d);
        assert!((scanned - 8.0).abs() < 1e-6, "{scanned}");
        let curve = BeliefCurve::new("g", gamma, d).unwrap();
        assert_eq!(curve.argmax_location(), 8.0);
        let tab = BeliefCurve::new("t", table(&[0.0, 3.3, 20.0], &[0.0, 1.0, 0.0]), d).unwrap();
        assert!((tab.argmax_location() - 3.3).abs() < 1e-6);
    }

    #[test]
    fn densities_match_closed_forms() {
        let d = Interval::new(0.0, 1.0).unwrap();
        let beta = BeliefCurve::new("b", CurveShape::BetaPdf { alpha: 3.0, beta: 18.0 }, d).unwrap();
        // B(3,18) = 2! 17! / 20! = 1/3420
        let x: f64 = 0.2;
        let expected = 3420.0 * x * x * (1.0 - x).powi(17);
        assert!((beta.evaluate(x) - expected).abs() < 1e-9 * expected);
        assert!((beta.argmax_location() - 2.0 / 19.0).abs() < 1e-15);
        let g = BeliefCurve::new("n", CurveShape::GaussianPdf { mean: 0.5, sd: 0.1 }, d).unwrap();
        assert!((g.evaluate(0.5) - 1.0 / (0.1 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn family_expansion_cross_product() {
        let d = Interval::new(0.0, 15.0).unwrap();
        let spec =
            ParametricFamilySpec::new(FamilyKind::GaussianPdf, vec![vec![5.0, 1.0], vec![7.5, 1.0], vec![10.0, 2.0]])
                .with_scales(vec![0.5, 1.0]);
        assert_eq!(spec.size(), 6);
        let ens = spec.build(d, 0.1).unwrap();
        assert_eq!(ens.len(), 6);
        assert!((ens.curves()[0].evaluate(5.0) * 2.0 - ens.curves()[1].evaluate(5.0)).abs() < 1e-15);
        let json = serde_json::to_string(&spec).unwrap();
        let back: ParametricFamilySpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn tabulated_csv_loading() {
        let dir = std::env::temp_dir().join(format!("sbes-belief-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("curve.csv");
        std::fs::write(&path, "x,f\n0,0\n0.5,2\n1,1\n").unwrap();
        let shape = CurveShape::tabulated_from_csv(&path).unwrap();
        let c = BeliefCurve::new("t", shape, unit()).unwrap();
        assert!((c.evaluate(0.25) - 1.0).abs() < 1e-15);
        assert!((c.argmax_location() - 0.5).abs() < 1e-6);
        std::fs::write(&path, "0,0\n0.5,2\n0.4,1\n").unwrap();
        assert!(CurveShape::tabulated_from_csv(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
