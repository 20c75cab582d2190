//! Piecewise-constant density over the maximizer location.
//!
//! Comparison updates multiply three regions (left of `x_l`, between the pair,
//! right of `x_r`) by constant factors, so the family of piecewise-constant
//! densities is closed under updates and entropy, CDF and inverse CDF are all
//! exact. Every update adds at most two breakpoints.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Interval;
use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-9;
const MIN_NORMALIZER: f64 = 1e-300;
const MAX_SAMPLE_ATTEMPTS: usize = 100;

/// Result of comparing the two evaluations of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOutcome {
    /// `true` iff `f̂(x_l) <= f̂(x_r)`.
    pub y_hat: bool,
    pub x_l: f64,
    pub x_r: f64,
}

impl ComparisonOutcome {
    pub fn new(y_hat: bool, x_l: f64, x_r: f64) -> Result<Self> {
        if !(x_l < x_r) {
            return Err(Error::InvalidInput(format!("comparison needs x_l < x_r, got ({x_l}, {x_r})")));
        }
        Ok(Self { y_hat, x_l, x_r })
    }

    /// Orders the two observations; ties count as `y_hat = true`.
    pub fn from_observations(x_a: f64, f_a: f64, x_b: f64, f_b: f64) -> Result<Self> {
        let ((x_l, f_l), (x_r, f_r)) = if x_a < x_b { ((x_a, f_a), (x_b, f_b)) } else { ((x_b, f_b), (x_a, f_a)) };
        Self::new(f_l <= f_r, x_l, x_r)
    }
}

/// Density over `[a, b]`, constant between consecutive edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityRepr", into = "DensityRepr")]
pub struct PiecewiseDensity {
    domain: Interval,
    /// `a`, the interior breakpoints, then `b`.
    edges: Vec<f64>,
    densities: Vec<f64>,
    /// `cumulative[i]` is the mass left of `edges[i]`.
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DensityRepr {
    domain: Interval,
    breakpoints: Vec<f64>,
    densities: Vec<f64>,
}

impl TryFrom<DensityRepr> for PiecewiseDensity {
    type Error = Error;

    fn try_from(r: DensityRepr) -> Result<Self> {
        PiecewiseDensity::from_parts(r.domain, r.breakpoints, r.densities)
    }
}

impl From<PiecewiseDensity> for DensityRepr {
    fn from(p: PiecewiseDensity) -> Self {
        DensityRepr { domain: p.domain, breakpoints: p.breakpoints().to_vec(), densities: p.densities }
    }
}

impl PiecewiseDensity {
    pub fn uniform(domain: Interval) -> Self {
        Self::build(domain, vec![domain.lo(), domain.hi()], vec![1.0 / domain.width()])
    }

    /// Validates a density given its interior breakpoints and one density
    /// value per interval.
    pub fn from_parts(domain: Interval, breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if densities.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidDensity(format!(
                "{} breakpoints need {} densities, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                densities.len()
            )));
        }
        let mut edges = Vec::with_capacity(breakpoints.len() + 2);
        edges.push(domain.lo());
        edges.extend_from_slice(&breakpoints);
        edges.push(domain.hi());
        let tol = domain.merge_tol();
        if edges.windows(2).any(|w| !(w[1] - w[0] >= tol)) {
            return Err(Error::InvalidDensity("breakpoints must be strictly inside the domain and increasing".into()));
        }
        let p = Self::build(domain, edges, densities);
        p.validate()?;
        Ok(p)
    }

    fn build(domain: Interval, edges: Vec<f64>, densities: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(edges.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for (w, d) in edges.windows(2).zip(&densities) {
            acc += d * (w[1] - w[0]);
            cumulative.push(acc);
        }
        Self { domain, edges, densities, cumulative }
    }

    fn validate(&self) -> Result<()> {
        if let Some(d) = self.densities.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidDensity(format!("density value {d}")));
        }
        let mass = self.total_mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDensity(format!("total mass {mass}")));
        }
        Ok(())
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.edges[1..self.edges.len() - 1]
    }

    /// Domain endpoints plus breakpoints.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn num_intervals(&self) -> usize {
        self.densities.len()
    }

    /// Probability mass of each interval.
    pub fn masses(&self) -> Vec<f64> {
        self.cumulative.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn total_mass(&self) -> f64 {
        *self.cumulative.last().expect("at least one interval")
    }

    /// Density value at `x` (right-continuous at breakpoints).
    pub fn density_at(&self, x: f64) -> f64 {
        let i = self.interval_index(x);
        self.densities[i]
    }

    fn interval_index(&self, x: f64) -> usize {
        let n = self.densities.len();
        (self.edges.partition_point(|&e| e <= x).max(1) - 1).min(n - 1)
    }

    /// Mass in `[a, x]`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.domain.check(x)?;
        Ok(self.cdf_unchecked(x))
    }

    pub(crate) fn cdf_unchecked(&self, x: f64) -> f64 {
        if x <= self.domain.lo() {
            return 0.0;
        }
        if x >= self.domain.hi() {
            return self.total_mass();
        }
        let i = self.interval_index(x);
        self.cumulative[i] + self.densities[i] * (x - self.edges[i])
    }

    /// Smallest `x` with `cdf(x) = u`, for `u` in `[0, 1]`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let total = self.total_mass();
        let target = u.clamp(0.0, 1.0) * total;
        // first interval whose cumulative upper end reaches the target and carries mass
        let n = self.densities.len();
        let mut i = self.cumulative[1..].partition_point(|&c| c < target).min(n - 1);
        while i + 1 < n && self.densities[i] == 0.0 {
            i += 1;
        }
        if self.densities[i] == 0.0 {
            return self.edges[i];
        }
        let x = self.edges[i] + (target - self.cumulative[i]) / self.densities[i];
        x.clamp(self.edges[i], self.edges[i + 1])
    }

    /// Inserts `x` as a breakpoint unless an edge already lies within the
    /// merge tolerance; returns the edge index now standing for `x`.
    fn insert_edge(&mut self, x: f64) -> usize {
        let tol = self.domain.merge_tol();
        let pos = self.edges.partition_point(|&e| e < x);
        if pos < self.edges.len() && self.edges[pos] - x < tol {
            return pos;
        }
        if pos > 0 && x - self.edges[pos - 1] < tol {
            return pos - 1;
        }
        // pos is in 1..len here, so interval pos - 1 is split in two
        let d = self.densities[pos - 1];
        self.edges.insert(pos, x);
        self.densities.insert(pos - 1, d);
        pos
    }

    /// Multiplies the mass left of `left_edge`, between the edges and right of
    /// `right_edge` by `factors`, then renormalizes. Returns the new density
    /// and the normalizer `Σ factor · mass`.
    pub fn reweight(&self, left_edge: f64, right_edge: f64, factors: [f64; 3]) -> Result<(Self, f64)> {
        self.domain.check(left_edge)?;
        self.domain.check(right_edge)?;
        if left_edge > right_edge {
            return Err(Error::InvalidInput(format!("region edges out of order: {left_edge} > {right_edge}")));
        }
        if factors.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return Err(Error::InvalidInput(format!("region factors must be finite and >= 0: {factors:?}")));
        }
        let mut next = self.clone();
        let li = next.insert_edge(left_edge);
        let ri = next.insert_edge(right_edge).max(li);
        for (i, d) in next.densities.iter_mut().enumerate() {
            let f = if i < li {
                factors[0]
            } else if i < ri {
                factors[1]
            } else {
                factors[2]
            };
            *d *= f;
        }
        let edges = std::mem::take(&mut next.edges);
        let densities = std::mem::take(&mut next.densities);
        let unnormalized = Self::build(self.domain, edges, densities);
        let normalizer = unnormalized.total_mass();
        if !(normalizer >= MIN_NORMALIZER) {
            return Err(Error::DegenerateUpdate(normalizer));
        }
        let PiecewiseDensity { edges, mut densities, .. } = unnormalized;
        densities.iter_mut().for_each(|d| *d /= normalizer);
        let out = Self::build(self.domain, edges, densities);
        out.validate()?;
        Ok((out, normalizer))
    }

    /// `(U1, U0)`: predictive probabilities of `y_hat = 1` and `y_hat = 0`.
    pub fn normalizers(&self, x_l: f64, x_r: f64, g: f64, g_bar: f64) -> (f64, f64) {
        let f_l = self.cdf_unchecked(x_l);
        let f_r = self.cdf_unchecked(x_r);
        region_normalizers(f_l, f_r - f_l, 1.0 - f_r, g, g_bar)
    }

    /// Bayesian update after a comparison, with `g` and `g_bar` for the pair.
    pub fn update(&self, outcome: &ComparisonOutcome, g: f64, g_bar: f64) -> Result<Self> {
        Ok(self.update_with_normalizer(outcome, g, g_bar)?.0)
    }

    pub fn update_with_normalizer(&self, outcome: &ComparisonOutcome, g: f64, g_bar: f64) -> Result<(Self, f64)> {
        if !(g > 0.0 && g < 1.0 && g_bar > 0.0 && g_bar < 1.0) {
            return Err(Error::InvalidInput(format!("g = {g}, g_bar = {g_bar} must lie in (0, 1)")));
        }
        if !(outcome.x_l < outcome.x_r) {
            return Err(Error::InvalidInput("comparison needs x_l < x_r".into()));
        }
        self.reweight(outcome.x_l, outcome.x_r, region_factors(outcome.y_hat, g, g_bar))
    }

    /// Differential entropy in bits, exact for a piecewise-constant density.
    pub fn entropy_bits(&self) -> f64 {
        self.masses()
            .iter()
            .zip(&self.densities)
            .filter(|(m, d)| **m > 0.0 && **d > 0.0)
            .map(|(m, d)| -m * d.log2())
            .sum()
    }

    /// KL divergence from the uniform density on the domain, in bits.
    pub fn kl_to_uniform(&self) -> f64 {
        self.domain.width().log2() - self.entropy_bits()
    }

    /// `count` independent inverse-CDF draws.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        (0..count).map(|_| self.inverse_cdf(open_unit(rng))).collect()
    }

    /// Draws `count` points at least the merge tolerance away from `avoid`
    /// and from each other. A draw that keeps colliding is redrawn up to 100
    /// times, then nudged outwards in multiples of `jitter`; fails only when
    /// every nudge collides.
    pub fn sample_avoiding<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
        avoid: &[f64],
        jitter: f64,
    ) -> Result<Vec<f64>> {
        let tol = self.domain.merge_tol();
        let mut out: Vec<f64> = Vec::with_capacity(count);
        let clear = |x: f64, out: &[f64]| avoid.iter().chain(out).all(|&h| (h - x).abs() >= tol);
        for _ in 0..count {
            let mut last = f64::NAN;
            let mut accepted = None;
            for _ in 0..MAX_SAMPLE_ATTEMPTS {
                last = self.inverse_cdf(open_unit(rng));
                if clear(last, &out) {
                    accepted = Some(last);
                    break;
                }
            }
            let x = match accepted {
                Some(x) => x,
                // step outwards; earlier draws may already sit at the first offsets
                None => (1..=avoid.len() + out.len() + 1)
                    .flat_map(|k| [last + k as f64 * jitter, last - k as f64 * jitter])
                    .map(|x| self.domain.clamp(x))
                    .find(|&x| clear(x, &out))
                    .ok_or(Error::NoValidCandidate)?,
            };
            out.push(x);
        }
        Ok(out)
    }

    /// Midpoint of the highest-density run of intervals. Ties go to the run
    /// with more mass, then to the leftmost.
    pub fn recommend(&self) -> f64 {
        let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        // maximal runs of equal density: (start edge, end edge, density)
        let mut runs: Vec<(usize, usize, f64)> = Vec::new();
        for (i, &d) in self.densities.iter().enumerate() {
            match runs.last_mut() {
                Some(run) if same(run.2, d) => run.1 = i + 1,
                _ => runs.push((i, i + 1, d)),
            }
        }
        let mass = |r: &(usize, usize, f64)| self.cumulative[r.1] - self.cumulative[r.0];
        let mut best = runs[0];
        for r in runs.iter().skip(1) {
            if r.2 > best.2 && !same(r.2, best.2) || same(r.2, best.2) && mass(r) > mass(&best) {
                best = *r;
            }
        }
        0.5 * (self.edges[best.0] + self.edges[best.1])
    }
}

/// `(U1, U0)` from the prior masses left of, between and right of the pair.
#[inline]
pub(crate) fn region_normalizers(left: f64, mid: f64, right: f64, g: f64, g_bar: f64) -> (f64, f64) {
    let u1 = (1.0 - g) * left + (1.0 - g_bar) * mid + g * right;
    let u0 = g * left + g_bar * mid + (1.0 - g) * right;
    (u1, u0)
}

/// Likelihood of the outcome in the three regions.
#[inline]
pub(crate) fn region_factors(y_hat: bool, g: f64, g_bar: f64) -> [f64; 3] {
    if y_hat {
        [1.0 - g, 1.0 - g_bar, g]
    } else {
        [g, g_bar, 1.0 - g]
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}
