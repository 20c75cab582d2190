//! One-step lookahead entropy search over pairs `(h, z)`.
//!
//! At every iteration one new point `z` is evaluated and compared against a
//! point `h` from the history. The pair is chosen to minimize
//! `ν(h, z) = E[H(P^{n+1})] - H(P^n)`, which has a closed form in terms of the
//! comparison probabilities and the posterior CDF at the pair.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefEnsemble;
use crate::domain::Interval;
use crate::error::{Error, Result};
use crate::posterior::{region_normalizers, ComparisonOutcome, PiecewiseDensity};

/// Default number of candidate points sampled from the posterior.
pub const DEFAULT_CANDIDATES: usize = 20;

/// Acquisition values above this are reported as violations of the
/// nonnegative-information property.
pub const NU_TOLERANCE: f64 = 1e-9;

/// Default initial pair as fractions of the domain width.
pub const INITIAL_FRACTIONS: (f64, f64) = (0.382, 0.618);

/// `h` is reused from the history, `z` is the new query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub h: f64,
    pub z: f64,
}

impl Decision {
    pub fn x_l(&self) -> f64 {
        self.h.min(self.z)
    }

    pub fn x_r(&self) -> f64 {
        self.h.max(self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionValue {
    pub decision: Decision,
    /// Expected one-step entropy change in bits.
    pub nu: f64,
}

/// Summary of one pair search.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub best: AcquisitionValue,
    /// Largest ν among all evaluated pairs.
    pub max_nu: f64,
    pub pairs_evaluated: usize,
}

/// `x log2 x` with `0 log 0 = 0`.
#[inline]
fn xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Closed-form `ν` from the comparison probabilities and the prior mass left
/// of (`F(x_l)`) and between (`F(x_r) - F(x_l)`) the pair.
pub fn nu_closed_form(g: f64, g_bar: f64, mass_left: f64, mass_mid: f64) -> f64 {
    let mass_right = 1.0 - mass_left - mass_mid;
    let (u1, u0) = region_normalizers(mass_left, mass_mid, mass_right, g, g_bar);
    let neg_h_g = xlog2x(g) + xlog2x(1.0 - g);
    let neg_h_gbar = xlog2x(g_bar) + xlog2x(1.0 - g_bar);
    neg_h_g * (mass_mid - 1.0) - neg_h_gbar * mass_mid + xlog2x(u1) + xlog2x(u0)
}

/// Exhaustive argmin of `nu` over `history × candidates`. Ties go to the
/// smaller `z`, then the smaller `h`. Pairs for which `nu` returns `None` are
/// skipped.
pub fn select_min_pair(
    history: &[f64],
    candidates: &[f64],
    mut nu: impl FnMut(usize, usize) -> Option<f64>,
) -> Option<Proposal> {
    let mut best: Option<AcquisitionValue> = None;
    let mut max_nu = f64::NEG_INFINITY;
    let mut count = 0;
    for (zi, &z) in candidates.iter().enumerate() {
        for (hi, &h) in history.iter().enumerate() {
            let Some(v) = nu(hi, zi) else { continue };
            count += 1;
            max_nu = max_nu.max(v);
            let better = match best {
                None => true,
                Some(b) => v < b.nu || v == b.nu && (z < b.decision.z || z == b.decision.z && h < b.decision.h),
            };
            if better {
                best = Some(AcquisitionValue { decision: Decision { h, z }, nu: v });
            }
        }
    }
    best.map(|best| Proposal { best, max_nu, pairs_evaluated: count })
}

/// Everything the policy knows after `iteration` rounds.
#[derive(Debug, Clone)]
pub struct SearchState {
    posterior: PiecewiseDensity,
    history_points: Vec<f64>,
    history_values: Vec<f64>,
    /// `f_k(h)` for every history point, cached for pair evaluation.
    history_curve_values: Vec<Vec<f64>>,
    ensemble: BeliefEnsemble,
    iteration: usize,
    evaluations_used: usize,
}

/// What a transition did, for tracing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub outcome: ComparisonOutcome,
    pub g: f64,
    pub g_bar: f64,
    /// Predictive probability of the observed outcome.
    pub normalizer: f64,
}

impl SearchState {
    /// State before any evaluation: uniform posterior, empty history.
    pub fn prior(ensemble: BeliefEnsemble) -> Self {
        Self {
            posterior: PiecewiseDensity::uniform(ensemble.domain()),
            history_points: Vec::new(),
            history_values: Vec::new(),
            history_curve_values: Vec::new(),
            ensemble,
            iteration: 0,
            evaluations_used: 0,
        }
    }

    /// Evaluates the initial pair, applies one comparison update and both
    /// weight updates. Costs two evaluations and yields iteration 1.
    pub fn initialize(
        ensemble: BeliefEnsemble,
        x0_pair: Option<(f64, f64)>,
        evaluator: &mut dyn FnMut(f64) -> f64,
    ) -> Result<Self> {
        Ok(Self::initialize_traced(ensemble, x0_pair, evaluator)?.0)
    }

    pub(crate) fn initialize_traced(
        ensemble: BeliefEnsemble,
        x0_pair: Option<(f64, f64)>,
        evaluator: &mut dyn FnMut(f64) -> f64,
    ) -> Result<(Self, StepReport, f64)> {
        let domain = ensemble.domain();
        let (a, b) = x0_pair.unwrap_or_else(|| default_initial_pair(domain));
        domain.check(a)?;
        domain.check(b)?;
        if (a - b).abs() < domain.merge_tol() {
            return Err(Error::InvalidInput(format!("initial points {a} and {b} coincide")));
        }
        let mut state = Self::prior(ensemble);
        let nu = state.acquisition_nu(a, b)?;
        let fa = observe(evaluator, a)?;
        let fb = observe(evaluator, b)?;
        let va = state.ensemble.evaluate_all(a);
        let vb = state.ensemble.evaluate_all(b);
        let report = state.compare_and_update(a, fa, &va, b, fb, &vb)?;
        for (x, f, v) in [(a, fa, va), (b, fb, vb)] {
            state.ensemble.observe_values(&v, x, f)?;
            state.history_points.push(x);
            state.history_values.push(f);
            state.history_curve_values.push(v);
        }
        state.iteration = 1;
        state.evaluations_used = 2;
        Ok((state, report, nu))
    }

    pub fn posterior(&self) -> &PiecewiseDensity {
        &self.posterior
    }

    pub fn ensemble(&self) -> &BeliefEnsemble {
        &self.ensemble
    }

    pub fn domain(&self) -> Interval {
        self.ensemble.domain()
    }

    pub fn history_points(&self) -> &[f64] {
        &self.history_points
    }

    pub fn history_values(&self) -> &[f64] {
        &self.history_values
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn evaluations_used(&self) -> usize {
        self.evaluations_used
    }

    /// Replaces the posterior, e.g. to evaluate the acquisition on a chosen
    /// density. The domain must match.
    pub fn with_posterior(mut self, posterior: PiecewiseDensity) -> Result<Self> {
        if posterior.domain() != self.domain() {
            return Err(Error::InvalidInput("posterior domain does not match the ensemble".into()));
        }
        self.posterior = posterior;
        Ok(self)
    }

    fn history_index(&self, h: f64) -> Option<usize> {
        let tol = self.domain().merge_tol();
        self.history_points.iter().position(|&p| (p - h).abs() < tol)
    }

    /// Closed-form expected entropy change for evaluating the pair `(h, z)`.
    pub fn acquisition_nu(&self, h: f64, z: f64) -> Result<f64> {
        let domain = self.domain();
        domain.check(h)?;
        domain.check(z)?;
        if (h - z).abs() < domain.merge_tol() {
            return Err(Error::InvalidInput(format!("pair points {h} and {z} coincide")));
        }
        let fh = self.ensemble.evaluate_all(h);
        let fz = self.ensemble.evaluate_all(z);
        Ok(self.nu_with_values(h, &fh, self.posterior.cdf_unchecked(h), z, &fz, self.posterior.cdf_unchecked(z)))
    }

    fn nu_with_values(&self, h: f64, fh: &[f64], cdf_h: f64, z: f64, fz: &[f64], cdf_z: f64) -> f64 {
        let g = self.ensemble.g_mixture_values(fh, fz);
        let (x_l, f_l, c_l, x_r, f_r, c_r) =
            if h < z { (h, fh, cdf_h, z, fz, cdf_z) } else { (z, fz, cdf_z, h, fh, cdf_h) };
        let g_bar = self.ensemble.g_bar_values(x_l, x_r, f_l, f_r);
        nu_closed_form(g, g_bar, c_l, c_r - c_l)
    }

    /// Evaluates ν for every `(h, z)` with `h` in the history and `z` in
    /// `candidates`, and returns the minimizing pair.
    pub fn propose_from_candidates(&self, candidates: &[f64]) -> Result<Proposal> {
        let domain = self.domain();
        for &z in candidates {
            domain.check(z)?;
        }
        let cdf_h: Vec<f64> = self.history_points.iter().map(|&h| self.posterior.cdf_unchecked(h)).collect();
        let cand_values: Vec<Vec<f64>> = candidates.iter().map(|&z| self.ensemble.evaluate_all(z)).collect();
        let cdf_z: Vec<f64> = candidates.iter().map(|&z| self.posterior.cdf_unchecked(z)).collect();
        let tol = domain.merge_tol();
        select_min_pair(&self.history_points, candidates, |hi, zi| {
            let (h, z) = (self.history_points[hi], candidates[zi]);
            if (h - z).abs() < tol {
                return None;
            }
            Some(self.nu_with_values(h, &self.history_curve_values[hi], cdf_h[hi], z, &cand_values[zi], cdf_z[zi]))
        })
        .ok_or(Error::NoValidCandidate)
    }

    /// Samples `m` candidates from the posterior (away from the history) and
    /// returns the best pair.
    pub fn propose<R: rand::Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Proposal> {
        if self.history_points.is_empty() {
            return Err(Error::InvalidInput("propose needs an initialized state".into()));
        }
        if m == 0 {
            return Err(Error::InvalidInput("candidate count must be >= 1".into()));
        }
        let tol = self.domain().merge_tol();
        let candidates = match self.posterior.sample_avoiding(m, rng, &self.history_points, tol) {
            Ok(c) => c,
            // widen the jitter once
            Err(Error::NoValidCandidate) => self.posterior.sample_avoiding(m, rng, &self.history_points, 1e3 * tol)?,
            Err(e) => return Err(e),
        };
        self.propose_from_candidates(&candidates)
    }

    fn compare_and_update(&mut self, a: f64, fa: f64, va: &[f64], b: f64, fb: f64, vb: &[f64]) -> Result<StepReport> {
        let outcome = ComparisonOutcome::from_observations(a, fa, b, fb)?;
        let g = self.ensemble.g_mixture_values(va, vb);
        let (vl, vr) = if a < b { (va, vb) } else { (vb, va) };
        let g_bar = self.ensemble.g_bar_values(outcome.x_l, outcome.x_r, vl, vr);
        let (posterior, normalizer) = self.posterior.update_with_normalizer(&outcome, g, g_bar)?;
        self.posterior = posterior;
        Ok(StepReport { outcome, g, g_bar, normalizer })
    }

    /// Transition after observing `observed_z` at `decision.z`.
    pub fn step(&self, decision: Decision, observed_z: f64) -> Result<Self> {
        Ok(self.step_traced(decision, observed_z)?.0)
    }

    pub fn step_traced(&self, decision: Decision, observed_z: f64) -> Result<(Self, StepReport)> {
        let domain = self.domain();
        domain.check(decision.z)?;
        let hi = self
            .history_index(decision.h)
            .ok_or_else(|| Error::DecisionMismatch(format!("h = {} is not a history point", decision.h)))?;
        if self.history_index(decision.z).is_some() {
            return Err(Error::DecisionMismatch(format!("z = {} was already evaluated", decision.z)));
        }
        if !observed_z.is_finite() {
            return Err(Error::NonFiniteObservation { x: decision.z, value: observed_z });
        }
        let mut next = self.clone();
        let h = self.history_points[hi];
        let fh = self.history_values[hi];
        let vz = next.ensemble.evaluate_all(decision.z);
        let vh = std::mem::take(&mut next.history_curve_values[hi]);
        let report = next.compare_and_update(h, fh, &vh, decision.z, observed_z, &vz);
        next.history_curve_values[hi] = vh;
        let report = report?;
        next.ensemble.observe_values(&vz, decision.z, observed_z)?;
        next.history_points.push(decision.z);
        next.history_values.push(observed_z);
        next.history_curve_values.push(vz);
        next.iteration += 1;
        next.evaluations_used += 1;
        Ok((next, report))
    }
}

fn observe(evaluator: &mut dyn FnMut(f64) -> f64, x: f64) -> Result<f64> {
    let v = evaluator(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteObservation { x, value: v })
    }
}

pub fn default_initial_pair(domain: Interval) -> (f64, f64) {
    let (a, b) = INITIAL_FRACTIONS;
    (domain.lo() + a * domain.width(), domain.lo() + b * domain.width())
}

#[derive(Debug, Clone)]
pub struct OptimizeConfig {
    pub ensemble: BeliefEnsemble,
    /// Number of iterations `N`; the run uses `N + 1` evaluations.
    pub budget: usize,
    pub candidates: usize,
    pub seed: u64,
    pub x0_pair: Option<(f64, f64)>,
    /// Keep a copy of the posterior after every iteration.
    pub keep_posteriors: bool,
}

impl OptimizeConfig {
    pub fn new(ensemble: BeliefEnsemble, budget: usize, seed: u64) -> Self {
        Self { ensemble, budget, candidates: DEFAULT_CANDIDATES, seed, x0_pair: None, keep_posteriors: false }
    }
}

/// One row of the optimization trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    pub h: f64,
    pub z: f64,
    pub y_hat: bool,
    /// ν of the chosen pair.
    pub nu_bits: f64,
    /// Largest ν over every pair evaluated this iteration.
    pub max_nu_bits: f64,
    pub entropy_bits: f64,
    pub kl_bits: f64,
    pub recommend: f64,
    pub evaluations: usize,
    pub posterior_mass: f64,
    pub min_density: f64,
    pub map_curve: String,
    pub map_weight: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub recommendation: f64,
    pub trace: Vec<IterationRecord>,
    pub state: SearchState,
    /// Posterior after each iteration, when requested.
    pub posteriors: Vec<PiecewiseDensity>,
}

fn record(state: &SearchState, h: f64, z: f64, report: &StepReport, nu: f64, max_nu: f64) -> IterationRecord {
    let p = state.posterior();
    let map = state.ensemble().map_index();
    IterationRecord {
        n: state.iteration(),
        h,
        z,
        y_hat: report.outcome.y_hat,
        nu_bits: nu,
        max_nu_bits: max_nu,
        entropy_bits: p.entropy_bits(),
        kl_bits: p.kl_to_uniform(),
        recommend: p.recommend(),
        evaluations: state.evaluations_used(),
        posterior_mass: p.total_mass(),
        min_density: p.densities().iter().copied().fold(f64::INFINITY, f64::min),
        map_curve: state.ensemble().curves()[map].label().to_string(),
        map_weight: state.ensemble().weight(map),
    }
}

/// Runs the full search: initialization, then `budget - 1` propose/step
/// rounds. Deterministic for a fixed config and evaluator.
pub fn optimize(evaluator: &mut dyn FnMut(f64) -> f64, config: &OptimizeConfig) -> Result<OptimizeOutcome> {
    if config.budget < 2 {
        return Err(Error::InvalidInput(format!("budget must be >= 2, got {}", config.budget)));
    }
    if config.candidates == 0 {
        return Err(Error::InvalidInput("candidate count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut state, report, nu0) = SearchState::initialize_traced(config.ensemble.clone(), config.x0_pair, evaluator)?;
    let (a, b) = (state.history_points[0], state.history_points[1]);
    let mut trace = vec![record(&state, a, b, &report, nu0, nu0)];
    let mut posteriors = Vec::new();
    if config.keep_posteriors {
        posteriors.push(state.posterior().clone());
    }
    for _ in 1..config.budget {
        let proposal = state.propose(config.candidates, &mut rng)?;
        let decision = proposal.best.decision;
        let observed = observe(evaluator, decision.z)?;
        let (next, report) = state.step_traced(decision, observed)?;
        state = next;
        trace.push(record(&state, decision.h, decision.z, &report, proposal.best.nu, proposal.max_nu));
        if config.keep_posteriors {
            posteriors.push(state.posterior().clone());
        }
    }
    Ok(OptimizeOutcome { recommendation: state.posterior().recommend(), trace, state, posteriors })
}
