//! Stochastic gradient ascent with finite-difference gradients, comparing
//! SBES line searches against fixed stepsize formulas.

pub mod functions;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use sbes_core::{optimize, BeliefCurve, BeliefEnsemble, CurveShape, Interval, OptimizeConfig};
use serde::{Deserialize, Serialize};

pub use functions::{suite, MultiObjective, Suite};

use crate::experiment::derive_seed;
use crate::{stats, BenchError, Result};

/// Noise standard deviation of the stepsize study.
pub const DEFAULT_NOISE: f64 = 0.1;
pub const DEFAULT_ITERATIONS: usize = 10;
/// Inner SBES iterations per line search.
pub const DEFAULT_INNER_BUDGET: usize = 5;
/// FDSA perturbation as a fraction of the axis width.
pub const FDSA_FRACTION: f64 = 0.05;
const MAX_INIT_DRAWS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Close,
    Medium,
    Far,
}

impl Band {
    /// `(r1, r2)` as fractions of the farthest-vertex distance.
    pub fn radii(self) -> (f64, f64) {
        match self {
            Band::Close => (0.0, 0.25),
            Band::Medium => (0.25, 0.75),
            Band::Far => (0.75, 1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Band::Close => "close",
            Band::Medium => "medium",
            Band::Far => "far",
        }
    }
}

impl std::str::FromStr for Band {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "close" => Ok(Band::Close),
            "medium" => Ok(Band::Medium),
            "far" => Ok(Band::Far),
            _ => Err(format!("unknown band `{s}` (close, medium, far)")),
        }
    }
}

/// Curve family of the SBES-single line search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineFamily {
    Quadratic,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepsizeRule {
    /// `a / (a + t)` times the gradient.
    Harmonic {
        a: f64,
    },
    AdaGrad {
        rate: f64,
        eps: f64,
    },
    RmsProp {
        rate: f64,
        decay: f64,
        eps: f64,
    },
    /// Shifted copies of one curve along the ray.
    SbesSingle {
        curves: usize,
        family: LineFamily,
        inner_budget: usize,
        m: usize,
    },
    /// Quadratics plus Gaussian bumps of three widths along the ray.
    SbesMix {
        curves_per_family: usize,
        inner_budget: usize,
        m: usize,
    },
}

impl StepsizeRule {
    pub fn harmonic() -> Self {
        StepsizeRule::Harmonic { a: 5.0 }
    }

    pub fn adagrad() -> Self {
        StepsizeRule::AdaGrad { rate: 0.5, eps: 1e-8 }
    }

    pub fn rmsprop() -> Self {
        StepsizeRule::RmsProp { rate: 0.1, decay: 0.9, eps: 1e-8 }
    }

    pub fn sbes_single(family: LineFamily) -> Self {
        StepsizeRule::SbesSingle { curves: 16, family, inner_budget: DEFAULT_INNER_BUDGET, m: 20 }
    }

    pub fn sbes_mix() -> Self {
        StepsizeRule::SbesMix { curves_per_family: 8, inner_budget: DEFAULT_INNER_BUDGET, m: 20 }
    }

    /// Table order: harmonic, RMSProp, AdaGrad, SBES-single, SBES-mix.
    /// SBES-single uses quadratics on the convex suite and equal-width
    /// Gaussian bumps on the nonconvex one.
    pub fn defaults(suite: Suite) -> Vec<Self> {
        let family = match suite {
            Suite::Convex => LineFamily::Quadratic,
            Suite::Nonconvex => LineFamily::Gaussian,
        };
        vec![Self::harmonic(), Self::rmsprop(), Self::adagrad(), Self::sbes_single(family), Self::sbes_mix()]
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StepsizeRule::Harmonic { .. } => "harmonic",
            StepsizeRule::AdaGrad { .. } => "adagrad",
            StepsizeRule::RmsProp { .. } => "rmsprop",
            StepsizeRule::SbesSingle { .. } => "sbes-single",
            StepsizeRule::SbesMix { .. } => "sbes-mix",
        }
    }
}

/// Central-difference gradient from `2 d` noisy evaluations, plus the mean
/// of those evaluations (an estimate of `f(x)`). Perturbations are clipped
/// to the box and the divisor uses the clipped spacing.
pub fn fdsa_gradient<R: Rng + ?Sized>(
    obj: &MultiObjective,
    sigma: f64,
    x: &[f64],
    c: f64,
    rng: &mut R,
) -> (Vec<f64>, f64) {
    let (lo, hi) = obj.bounds();
    let mut grad = vec![0.0; x.len()];
    let mut level = 0.0;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let plus = (x[i] + c).min(hi);
        let minus = (x[i] - c).max(lo);
        probe[i] = plus;
        let fp = noisy(obj, sigma, &probe, rng);
        probe[i] = minus;
        let fm = noisy(obj, sigma, &probe, rng);
        probe[i] = x[i];
        if plus > minus {
            grad[i] = (fp - fm) / (plus - minus);
        }
        level += fp + fm;
    }
    (grad, level / (2 * x.len()) as f64)
}

fn noisy<R: Rng + ?Sized>(obj: &MultiObjective, sigma: f64, x: &[f64], rng: &mut R) -> f64 {
    let f = obj.evaluate(x);
    if sigma == 0.0 {
        return f;
    }
    let e: f64 = rng.sample(StandardNormal);
    f + sigma * e
}

/// Largest `alpha` with `x + alpha * dir` inside the box.
pub fn ray_length(obj: &MultiObjective, x: &[f64], dir: &[f64]) -> f64 {
    let (lo, hi) = obj.bounds();
    let mut t = f64::INFINITY;
    for (xi, di) in x.iter().zip(dir) {
        if *di > 0.0 {
            t = t.min((hi - xi) / di);
        } else if *di < 0.0 {
            t = t.min((lo - xi) / di);
        }
    }
    t.max(0.0)
}

/// Belief curves for `phi(alpha)` on `[0, alpha_max]`, all passing through
/// `(0, level)`.
fn line_beliefs(rule: &StepsizeRule, alpha_max: f64, level: f64, slope: f64, sigma: f64) -> Result<BeliefEnsemble> {
    let domain = Interval::new(0.0, alpha_max)?;
    let centers = |n: usize| (0..n).map(move |k| alpha_max * (k as f64 + 0.5) / n as f64);
    // common curvature: the middle curve has the observed slope at 0
    let kappa = slope / alpha_max;
    let w = alpha_max / 4.0;
    let norm = 1.0 / (w * (2.0 * std::f64::consts::PI).sqrt());
    let shifted = |c: f64| {
        BeliefCurve::scaled(
            format!("q({c:.4})"),
            CurveShape::Quadratic { center: c, curvature: kappa },
            1.0,
            level + kappa * c * c,
            domain,
        )
    };
    let curves = match *rule {
        StepsizeRule::SbesSingle { curves, family: LineFamily::Quadratic, .. } => {
            centers(curves).map(shifted).collect::<sbes_core::Result<Vec<_>>>()?
        }
        StepsizeRule::SbesSingle { curves, family: LineFamily::Gaussian, .. } => {
            // one amplitude for all: the middle bump rises by slope * alpha_max / 4
            let scale = 0.25 * slope * alpha_max / (norm - norm * (-0.5 * 4.0f64).exp());
            centers(curves)
                .map(|c| {
                    let at0 = norm * (-0.5 * (c / w).powi(2)).exp();
                    BeliefCurve::scaled(
                        format!("g({c:.4})"),
                        CurveShape::GaussianPdf { mean: c, sd: w },
                        scale,
                        level - scale * at0,
                        domain,
                    )
                })
                .collect::<sbes_core::Result<Vec<_>>>()?
        }
        StepsizeRule::SbesMix { curves_per_family: n, .. } => {
            let mut v = Vec::with_capacity(4 * n);
            for c in centers(n) {
                v.push(shifted(c)?);
                // bumps of three widths, each rising by slope * c / 2 from 0 to its peak
                for sd in [0.5 * w, w, 2.0 * w] {
                    let peak = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
                    let at0 = peak * (-0.5 * (c / sd).powi(2)).exp();
                    let scale = 0.5 * slope * c / (peak - at0);
                    v.push(BeliefCurve::scaled(
                        format!("g({c:.4},{sd:.4})"),
                        CurveShape::GaussianPdf { mean: c, sd },
                        scale,
                        level - scale * at0,
                        domain,
                    )?);
                }
            }
            v
        }
        _ => return Err(BenchError::Config(format!("{} is not an SBES rule", rule.kind()))),
    };
    Ok(BeliefEnsemble::with_shared_optimizers(domain, curves, sigma)?)
}

/// Outcome of one line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub alpha: f64,
    pub alpha_max: f64,
    pub evaluations: usize,
}

/// Runs SBES on `phi(alpha) = f̂(x + alpha * dir)` over `[0, alpha_max]`,
/// with `dir` a unit ascent direction, and returns the recommended step.
/// `level` and `slope` anchor the beliefs: an estimate of `f(x)` and of the
/// directional derivative at `alpha = 0`.
#[allow(clippy::too_many_arguments)]
pub fn sbes_linesearch<R: Rng + ?Sized>(
    obj: &MultiObjective,
    sigma: f64,
    x: &[f64],
    dir: &[f64],
    rule: &StepsizeRule,
    level: f64,
    slope: f64,
    rng: &mut R,
) -> Result<LineSearch> {
    let (inner_budget, m) = match *rule {
        StepsizeRule::SbesSingle { inner_budget, m, .. } | StepsizeRule::SbesMix { inner_budget, m, .. } => {
            (inner_budget, m)
        }
        _ => return Err(BenchError::Config(format!("{} is not an SBES rule", rule.kind()))),
    };
    let alpha_max = ray_length(obj, x, dir);
    // NaN slopes fall through to the zero step
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(alpha_max > 1e-12 * obj.width()) || !(slope > 0.0) {
        return Ok(LineSearch { alpha: 0.0, alpha_max, evaluations: 0 });
    }
    let ensemble = line_beliefs(rule, alpha_max, level, slope, sigma)?;
    let mut cfg = OptimizeConfig::new(ensemble, inner_budget, rng.gen());
    cfg.candidates = m;
    let mut point = x.to_vec();
    let mut evaluations = 0;
    let mut phi = |alpha: f64| {
        for ((p, xi), di) in point.iter_mut().zip(x).zip(dir) {
            *p = xi + alpha * di;
        }
        obj.clip(&mut point);
        evaluations += 1;
        noisy(obj, sigma, &point, rng)
    };
    let out = optimize(&mut phi, &cfg)?;
    Ok(LineSearch { alpha: out.recommendation, alpha_max, evaluations })
}

/// Iterates, distances to the optimum and step multipliers of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdTrace {
    /// `x_0` through `x_T`.
    pub iterates: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
    /// Scalar multiplier of each step: the rate for harmonic and SBES, the
    /// mean per-coordinate rate for AdaGrad and RMSProp.
    pub stepsizes: Vec<f64>,
    /// Evaluations spent by iteration `t`, cumulative.
    pub evaluations: Vec<usize>,
}

impl SgdTrace {
    pub fn reduction(&self) -> f64 {
        self.distances[0] - self.distances[self.distances.len() - 1]
    }
}

/// `iterations` rounds of `x <- clip(x + step)` from `x0`.
pub fn run_sgd<R: Rng + ?Sized>(
    obj: &MultiObjective,
    sigma: f64,
    rule: &StepsizeRule,
    x0: &[f64],
    iterations: usize,
    rng: &mut R,
) -> Result<SgdTrace> {
    let d = x0.len();
    let c = FDSA_FRACTION * obj.width();
    let mut x = x0.to_vec();
    obj.clip(&mut x);
    let mut trace = SgdTrace {
        iterates: vec![x.clone()],
        distances: vec![obj.distance_to_optimum(&x)],
        stepsizes: Vec::with_capacity(iterations),
        evaluations: Vec::with_capacity(iterations),
    };
    let mut accum = vec![0.0; d];
    let mut used = 0;
    for t in 0..iterations {
        let (grad, level) = fdsa_gradient(obj, sigma, &x, c, rng);
        used += 2 * d;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let mut alpha = 0.0;
        if norm > 0.0 {
            match *rule {
                StepsizeRule::Harmonic { a } => {
                    alpha = a / (a + t as f64);
                    x.iter_mut().zip(&grad).for_each(|(xi, g)| *xi += alpha * g);
                }
                StepsizeRule::AdaGrad { rate, eps } => {
                    let mut sum = 0.0;
                    for i in 0..d {
                        accum[i] += grad[i] * grad[i];
                        let r = rate / (accum[i].sqrt() + eps);
                        x[i] += r * grad[i];
                        sum += r;
                    }
                    alpha = sum / d as f64;
                }
                StepsizeRule::RmsProp { rate, decay, eps } => {
                    let mut sum = 0.0;
                    for i in 0..d {
                        accum[i] = decay * accum[i] + (1.0 - decay) * grad[i] * grad[i];
                        let r = rate / (accum[i].sqrt() + eps);
                        x[i] += r * grad[i];
                        sum += r;
                    }
                    alpha = sum / d as f64;
                }
                StepsizeRule::SbesSingle { .. } | StepsizeRule::SbesMix { .. } => {
                    let dir: Vec<f64> = grad.iter().map(|g| g / norm).collect();
                    let ls = sbes_linesearch(obj, sigma, &x, &dir, rule, level, norm, rng)?;
                    used += ls.evaluations;
                    alpha = ls.alpha;
                    x.iter_mut().zip(&dir).for_each(|(xi, di)| *xi += alpha * di);
                }
            }
            obj.clip(&mut x);
        }
        trace.stepsizes.push(alpha);
        trace.evaluations.push(used);
        trace.distances.push(obj.distance_to_optimum(&x));
        trace.iterates.push(x.clone());
    }
    Ok(trace)
}

/// Gibbs sweeps used when rejection from the box fails.
const GIBBS_SWEEPS: usize = 200;

/// Point in the box whose distance to the optimum lies in the band.
///
/// Rejection from the uniform box distribution comes first. In high
/// dimension the band can hold a vanishing share of the box volume, so the
/// fallback is a coordinate-wise Gibbs chain with uniform stationary law on
/// box ∩ shell, started on the segment towards the farthest vertex. Each
/// conditional is a union of at most two intervals and is sampled exactly.
pub fn init_sampler<R: Rng + ?Sized>(obj: &MultiObjective, band: Band, rng: &mut R) -> Result<Vec<f64>> {
    let (r1, r2) = band.radii();
    let (inner, outer) = (r1 * obj.d_max(), r2 * obj.d_max());
    let (a, b) = obj.bounds();
    let mut x = vec![0.0; obj.dim()];
    for _ in 0..MAX_INIT_DRAWS {
        x.iter_mut().for_each(|v| *v = rng.gen_range(a..=b));
        let dist = obj.distance_to_optimum(&x);
        if dist >= inner && dist <= outer {
            return Ok(x);
        }
    }
    let c = obj.x_star();
    let t = 0.5 * (r1 + r2);
    for (v, ci) in x.iter_mut().zip(c) {
        let vertex = if ci - a > b - ci { a } else { b };
        *v = ci + t * (vertex - ci);
    }
    let dist = obj.distance_to_optimum(&x);
    if !(dist >= inner && dist <= outer) {
        return Err(BenchError::Sampling(format!(
            "{} (d = {}) {} band does not meet the box",
            obj.name(),
            obj.dim(),
            band.as_str()
        )));
    }
    let mut s: f64 = x.iter().zip(c).map(|(v, ci)| (v - ci).powi(2)).sum();
    for _ in 0..GIBBS_SWEEPS {
        for i in 0..x.len() {
            let rest = (s - (x[i] - c[i]).powi(2)).max(0.0);
            let near = (inner * inner - rest).max(0.0).sqrt();
            let far = (outer * outer - rest).max(0.0).sqrt();
            let left = ((c[i] - far).max(a), (c[i] - near).min(b));
            let right = ((c[i] + near).max(a), (c[i] + far).min(b));
            let len_l = (left.1 - left.0).max(0.0);
            let len_r = (right.1 - right.0).max(0.0);
            if len_l + len_r <= 0.0 {
                continue;
            }
            let u = rng.gen::<f64>() * (len_l + len_r);
            x[i] = if u < len_l { left.0 + u } else { right.0 + (u - len_l) };
            s = rest + (x[i] - c[i]).powi(2);
        }
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct StepsizeConfig {
    pub suite: Suite,
    pub band: Band,
    pub inits: usize,
    pub reps: usize,
    pub iterations: usize,
    pub sigma: f64,
    pub seed: u64,
    pub rules: Vec<StepsizeRule>,
    /// Restrict to these objectives (by position in the suite).
    pub only: Option<Vec<usize>>,
}

impl StepsizeConfig {
    pub fn new(suite: Suite, band: Band, seed: u64) -> Self {
        Self {
            suite,
            band,
            inits: 20,
            reps: 1,
            iterations: DEFAULT_ITERATIONS,
            sigma: DEFAULT_NOISE,
            seed,
            rules: StepsizeRule::defaults(suite),
            only: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsizeRunRow {
    pub rule: String,
    pub objective: String,
    pub dim: usize,
    pub band: String,
    pub init_id: usize,
    pub rep: usize,
    pub dist0: f64,
    pub dist10: f64,
    pub reduction: f64,
}

/// Every rule from the same starting points with the same noise seeds.
pub fn run_stepsize(cfg: &StepsizeConfig) -> Result<Vec<StepsizeRunRow>> {
    let objectives: Vec<(usize, MultiObjective)> = suite(cfg.suite)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| cfg.only.as_ref().is_none_or(|o| o.contains(i)))
        .collect();
    let mut starts = Vec::new();
    for (oi, obj) in &objectives {
        for init in 0..cfg.inits {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, (*oi as u64) << 32 | init as u64));
            starts.push(init_sampler(obj, cfg.band, &mut rng)?);
        }
    }
    let mut jobs = Vec::new();
    for (si, (oi, _)) in objectives.iter().enumerate() {
        for init in 0..cfg.inits {
            for rep in 0..cfg.reps {
                for rule in 0..cfg.rules.len() {
                    jobs.push((si, *oi, init, rep, rule));
                }
            }
        }
    }
    jobs.into_par_iter()
        .map(|(si, oi, init, rep, ri)| {
            let obj = &objectives[si].1;
            let rule = &cfg.rules[ri];
            let x0 = &starts[si * cfg.inits + init];
            let key = (oi as u64) << 40 | (init as u64) << 20 | rep as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed ^ 0x57e9, key));
            let trace = run_sgd(obj, cfg.sigma, rule, x0, cfg.iterations, &mut rng)?;
            Ok(StepsizeRunRow {
                rule: rule.kind().to_string(),
                objective: obj.name().to_string(),
                dim: obj.dim(),
                band: cfg.band.as_str().to_string(),
                init_id: init,
                rep,
                dist0: trace.distances[0],
                dist10: *trace.distances.last().unwrap(),
                reduction: trace.reduction(),
            })
        })
        .collect()
}

/// Mean reduction per (objective, dimension) cell and rule, followed by the
/// uniform average over cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepsizeSummaryRow {
    pub suite: String,
    pub band: String,
    pub objective: String,
    pub dim: String,
    pub harmonic: f64,
    pub rmsprop: f64,
    pub adagrad: f64,
    #[serde(rename = "sbes-single")]
    pub sbes_single: f64,
    #[serde(rename = "sbes-mix")]
    pub sbes_mix: f64,
}

pub fn summarize_stepsize(suite: Suite, rows: &[StepsizeRunRow]) -> Vec<StepsizeSummaryRow> {
    let mut cells: Vec<(String, usize, String)> = Vec::new();
    for r in rows {
        let key = (r.objective.clone(), r.dim, r.band.clone());
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    let cell_mean = |obj: &str, dim: usize, band: &str, rule: &str| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.objective == obj && r.dim == dim && r.band == band && r.rule == rule)
            .map(|r| r.reduction)
            .collect();
        if v.is_empty() {
            f64::NAN
        } else {
            stats::mean(&v)
        }
    };
    let mut out: Vec<StepsizeSummaryRow> = cells
        .iter()
        .map(|(o, d, b)| StepsizeSummaryRow {
            suite: suite.as_str().to_string(),
            band: b.clone(),
            objective: o.clone(),
            dim: d.to_string(),
            harmonic: cell_mean(o, *d, b, "harmonic"),
            rmsprop: cell_mean(o, *d, b, "rmsprop"),
            adagrad: cell_mean(o, *d, b, "adagrad"),
            sbes_single: cell_mean(o, *d, b, "sbes-single"),
            sbes_mix: cell_mean(o, *d, b, "sbes-mix"),
        })
        .collect();
    let mut bands: Vec<String> = Vec::new();
    for (_, _, b) in &cells {
        if !bands.contains(b) {
            bands.push(b.clone());
        }
    }
    for b in bands {
        let rs: Vec<&StepsizeSummaryRow> = out.iter().filter(|r| r.band == b).collect();
        let avg = |f: fn(&StepsizeSummaryRow) -> f64| stats::mean(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
        let row = StepsizeSummaryRow {
            suite: suite.as_str().to_string(),
            band: b.clone(),
            objective: "average".into(),
            dim: "all".into(),
            harmonic: avg(|r| r.harmonic),
            rmsprop: avg(|r| r.rmsprop),
            adagrad: avg(|r| r.adagrad),
            sbes_single: avg(|r| r.sbes_single),
            sbes_mix: avg(|r| r.sbes_mix),
        };
        out.push(row);
    }
    out
}

pub fn write_stepsize(dir: &Path, suite: Suite, rows: &[StepsizeRunRow]) -> Result<Vec<StepsizeSummaryRow>> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("stepsize_runs.csv"))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let summary = summarize_stepsize(suite, rows);
    let mut w = csv::Writer::from_path(dir.join("stepsize_summary.csv"))?;
    for r in &summary {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(summary)
}
