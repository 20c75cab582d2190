//! Batch runner: every (initialization, replication) pair of one config,
//! run in parallel and collected in index order.

use std::fs;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sbes_core::policy::NU_TOLERANCE;
use sbes_core::{optimize, BeliefEnsemble, IterationRecord, OptimizeConfig, OptimizeOutcome, ParametricFamilySpec};
use serde::{Deserialize, Serialize};

use crate::baseline;
use crate::objective::{in_model_family, make_objective, noisy_eval, scale_family, NoiseSpec, Objective};
use crate::stats;
use crate::{BenchError, Result};

/// Regrets below this are floored before taking logs.
pub const REGRET_FLOOR: f64 = 1e-16;

/// Posterior mass must stay within this of one.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Sbes,
    SbesScale,
    RandomSearch,
    GridEqual,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Sbes => "sbes",
            PolicyKind::SbesScale => "sbes-scale",
            PolicyKind::RandomSearch => "random-search",
            PolicyKind::GridEqual => "grid-equal",
        }
    }

    pub fn uses_beliefs(self) -> bool {
        matches!(self, PolicyKind::Sbes | PolicyKind::SbesScale)
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sbes" => Ok(PolicyKind::Sbes),
            "sbes-scale" => Ok(PolicyKind::SbesScale),
            "random-search" => Ok(PolicyKind::RandomSearch),
            "grid-equal" => Ok(PolicyKind::GridEqual),
            _ => Err(BenchError::Config(format!("unknown policy `{s}`"))),
        }
    }
}

fn default_m() -> usize {
    sbes_core::policy::DEFAULT_CANDIDATES
}
fn default_k() -> usize {
    32
}
fn default_inits() -> usize {
    15
}
fn default_replications() -> usize {
    20
}

/// One experiment: a policy on an objective at one noise ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: String,
    pub policy: PolicyKind,
    /// Noise ratio `sigma / |f_max - f_min|`.
    pub gamma: f64,
    /// Iterations `N`; each run spends `N + 1` evaluations.
    pub budget: usize,
    /// Posterior samples per iteration.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Ensemble size used when `family` is absent.
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<ParametricFamilySpec>,
    #[serde(default = "default_inits")]
    pub inits: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed: u64,
    /// Grid size for `grid-equal`; about `sqrt(N + 1)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    /// Write one trace CSV per run.
    #[serde(default)]
    pub traces: bool,
}

impl ExperimentConfig {
    pub fn new(objective: &str, policy: PolicyKind, gamma: f64, budget: usize, seed: u64) -> Self {
        Self {
            objective: objective.to_string(),
            policy,
            gamma,
            budget,
            m: default_m(),
            k: default_k(),
            family: None,
            inits: default_inits(),
            replications: default_replications(),
            seed,
            grid_points: None,
            traces: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.budget < 2 {
            return bad(format!("budget must be >= 2, got {}", self.budget));
        }
        if self.m == 0 || self.inits == 0 || self.replications == 0 {
            return bad("m, inits and replications must be positive".into());
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if self.policy.uses_beliefs() && self.family.is_none() && self.k < 2 {
            return bad(format!("k must be >= 2, got {}", self.k));
        }
        Ok(())
    }

    pub fn runs(&self) -> usize {
        self.inits * self.replications
    }

    /// The belief family this config runs with, for the belief policies.
    pub fn family_for(&self, obj: &Objective) -> Option<ParametricFamilySpec> {
        if !self.policy.uses_beliefs() {
            return None;
        }
        if let Some(f) = &self.family {
            return Some(f.clone());
        }
        match self.policy {
            PolicyKind::Sbes => in_model_family(obj.name(), self.k).or_else(|| Some(scale_family(obj, self.k))),
            _ => Some(scale_family(obj, self.k)),
        }
    }

    pub fn ensemble(&self, obj: &Objective, noise: NoiseSpec) -> Result<Option<BeliefEnsemble>> {
        match self.family_for(obj) {
            Some(f) => Ok(Some(f.build(obj.domain(), noise.sigma)?)),
            None => Ok(None),
        }
    }
}

/// Seed of run `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index + 1);
    rng.next_u64()
}

/// `n` initial pairs from a two-dimensional Latin hypercube over the domain.
pub fn latin_hypercube_pairs(obj: &Objective, n: usize, seed: u64) -> Vec<(f64, f64)> {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = obj.domain();
    let mut cols: [Vec<usize>; 2] = [(0..n).collect(), (0..n).collect()];
    for c in cols.iter_mut() {
        c.shuffle(&mut rng);
    }
    let tol = d.merge_tol();
    (0..n)
        .map(|i| {
            let a = d.lo() + d.width() * (cols[0][i] as f64 + rng.gen::<f64>()) / n as f64;
            let mut b = d.lo() + d.width() * (cols[1][i] as f64 + rng.gen::<f64>()) / n as f64;
            if (a - b).abs() < 1e3 * tol {
                b = if a + 0.5 * d.width() <= d.hi() { a + 0.5 * d.width() } else { a - 0.5 * d.width() };
            }
            (a, b)
        })
        .collect()
}

/// One finished run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: usize,
    pub policy: PolicyKind,
    pub objective: String,
    pub gamma: f64,
    pub budget: usize,
    pub m: usize,
    /// Ensemble size; 0 for the baselines.
    pub k: usize,
    pub seed: u64,
    pub init: usize,
    pub replication: usize,
    pub recommendation: f64,
    pub regret: f64,
    pub evaluations: usize,
    /// Largest ν over every pair the run evaluated.
    pub max_nu_bits: f64,
    /// Iterations whose ν exceeded the tolerance.
    pub nu_violations: usize,
    /// Iterations whose posterior lost normalization or went negative.
    pub posterior_violations: usize,
    pub trace: Vec<IterationRecord>,
}

/// The fixed `runs.csv` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_id: usize,
    pub policy: String,
    pub objective: String,
    pub gamma: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub recommendation: f64,
    pub regret: f64,
}

impl From<&RunRecord> for RunRow {
    fn from(r: &RunRecord) -> Self {
        RunRow {
            run_id: r.run_id,
            policy: r.policy.as_str().to_string(),
            objective: r.objective.clone(),
            gamma: r.gamma,
            n: r.budget,
            m: r.m,
            k: r.k,
            seed: r.seed,
            recommendation: r.recommendation,
            regret: r.regret,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub run_id: usize,
    pub n: usize,
    pub h: f64,
    pub z: f64,
    pub y_hat: u8,
    pub nu_bits: f64,
    pub entropy_bits: f64,
    pub kl_bits: f64,
    pub recommend: f64,
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub objective: String,
    pub gamma: f64,
    pub sigma: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub runs: usize,
    pub mean_regret: f64,
    pub log10_mean_regret: f64,
    pub mean_log10_regret: f64,
    pub median_regret: f64,
    pub max_nu_bits: f64,
    pub nu_violations: usize,
    pub posterior_violations: usize,
    pub domain_lo: f64,
    pub domain_hi: f64,
    pub x_star: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub records: Vec<RunRecord>,
    pub summary: SummaryRow,
}

impl ExperimentOutput {
    pub fn regrets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.regret).collect()
    }

    /// Errors if any run broke the acquisition sign or posterior validity.
    pub fn check_invariants(&self) -> Result<()> {
        let s = &self.summary;
        if s.nu_violations > 0 || s.posterior_violations > 0 {
            return Err(BenchError::Invariant(format!(
                "{} on {}: {} acquisition values above {NU_TOLERANCE:e} (max {}), {} invalid posteriors",
                s.policy, s.objective, s.nu_violations, s.max_nu_bits, s.posterior_violations
            )));
        }
        Ok(())
    }

    pub fn trace_rows(&self, record: &RunRecord) -> Result<Vec<TraceRow>> {
        let obj = make_objective(&self.config.objective)?;
        Ok(trace_rows(&obj, record.run_id, &record.trace))
    }
}

pub fn trace_rows(obj: &Objective, run_id: usize, trace: &[IterationRecord]) -> Vec<TraceRow> {
    trace
        .iter()
        .map(|t| TraceRow {
            run_id,
            n: t.n,
            h: t.h,
            z: t.z,
            y_hat: u8::from(t.y_hat),
            nu_bits: t.nu_bits,
            entropy_bits: t.entropy_bits,
            kl_bits: t.kl_bits,
            recommend: t.recommend,
            regret: obj.regret(t.recommend),
        })
        .collect()
}

/// Counts `(nu violations, posterior violations, max nu)` over a trace.
pub fn audit_trace(trace: &[IterationRecord]) -> (usize, usize, f64) {
    let mut nu = 0;
    let mut post = 0;
    let mut max_nu = f64::NEG_INFINITY;
    for t in trace {
        max_nu = max_nu.max(t.max_nu_bits);
        nu += usize::from(t.max_nu_bits > NU_TOLERANCE);
        post += usize::from((t.posterior_mass - 1.0).abs() > MASS_TOLERANCE || t.min_density < 0.0);
    }
    (nu, post, max_nu)
}

/// A single SBES search on `obj` with a ready ensemble.
#[allow(clippy::too_many_arguments)]
pub fn run_sbes(
    obj: &Objective,
    noise: NoiseSpec,
    ensemble: BeliefEnsemble,
    budget: usize,
    m: usize,
    seed: u64,
    x0_pair: Option<(f64, f64)>,
    keep_posteriors: bool,
) -> Result<OptimizeOutcome> {
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let mut cfg = OptimizeConfig::new(ensemble, budget, seed);
    cfg.candidates = m;
    cfg.x0_pair = x0_pair;
    cfg.keep_posteriors = keep_posteriors;
    let mut eval = |x: f64| noisy_eval(obj, noise, x, &mut noise_rng);
    Ok(optimize(&mut eval, &cfg)?)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let obj = make_objective(&config.objective)?;
    let noise = NoiseSpec::for_objective(config.gamma, &obj)?;
    let ensemble = config.ensemble(&obj, noise)?;
    let k = ensemble.as_ref().map_or(0, BeliefEnsemble::len);
    let pairs = latin_hypercube_pairs(&obj, config.inits, derive_seed(config.seed, u64::MAX - 1));
    let grid_points = config.grid_points.unwrap_or_else(|| baseline::default_grid_points(config.budget));

    let records = (0..config.runs())
        .into_par_iter()
        .map(|run_id| {
            let (init, replication) = (run_id / config.replications, run_id % config.replications);
            let seed = derive_seed(config.seed, run_id as u64);
            let mut rec = RunRecord {
                run_id,
                policy: config.policy,
                objective: config.objective.clone(),
                gamma: config.gamma,
                budget: config.budget,
                m: config.m,
                k,
                seed,
                init,
                replication,
                recommendation: f64::NAN,
                regret: f64::NAN,
                evaluations: config.budget + 1,
                max_nu_bits: f64::NAN,
                nu_violations: 0,
                posterior_violations: 0,
                trace: Vec::new(),
            };
            match &ensemble {
                Some(ens) => {
                    let out =
                        run_sbes(&obj, noise, ens.clone(), config.budget, config.m, seed, Some(pairs[init]), false)?;
                    let (nu, post, max_nu) = audit_trace(&out.trace);
                    rec.recommendation = out.recommendation;
                    rec.evaluations = out.state.evaluations_used();
                    rec.nu_violations = nu;
                    rec.posterior_violations = post;
                    rec.max_nu_bits = max_nu;
                    rec.trace = out.trace;
                }
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rec.recommendation = match config.policy {
                        PolicyKind::GridEqual => {
                            baseline::grid_equal(&obj, noise, config.budget, grid_points, &mut rng)
                        }
                        _ => baseline::random_search(&obj, noise, config.budget, &mut rng),
                    };
                }
            }
            rec.regret = obj.regret(rec.recommendation);
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = summarize(config, &obj, noise, k, &records);
    Ok(ExperimentOutput { config: config.clone(), records, summary })
}

fn summarize(
    config: &ExperimentConfig,
    obj: &Objective,
    noise: NoiseSpec,
    k: usize,
    records: &[RunRecord],
) -> SummaryRow {
    let regrets: Vec<f64> = records.iter().map(|r| r.regret).collect();
    let mean = stats::mean(&regrets);
    let max_nu = records.iter().map(|r| r.max_nu_bits).filter(|v| !v.is_nan()).fold(f64::NAN, f64::max);
    SummaryRow {
        policy: config.policy.as_str().to_string(),
        objective: config.objective.clone(),
        gamma: config.gamma,
        sigma: noise.sigma,
        n: config.budget,
        m: config.m,
        k,
        runs: records.len(),
        mean_regret: mean,
        log10_mean_regret: mean.max(REGRET_FLOOR).log10(),
        mean_log10_regret: stats::mean(&regrets.iter().map(|r| r.max(REGRET_FLOOR).log10()).collect::<Vec<_>>()),
        median_regret: stats::median(&regrets),
        max_nu_bits: max_nu,
        nu_violations: records.iter().map(|r| r.nu_violations).sum(),
        posterior_violations: records.iter().map(|r| r.posterior_violations).sum(),
        domain_lo: obj.domain().lo(),
        domain_hi: obj.domain().hi(),
        x_star: obj.known_max_location(),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
}

/// Writes `runs.csv`, `summary.csv` and, when the configs ask for it,
/// `traces/run_<config>_<run>.csv` under `dir`. Several configs share one
/// pair of files.
pub fn write_outputs(dir: &Path, outputs: &[ExperimentOutput]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut runs = csv_writer(&dir.join("runs.csv"))?;
    let mut summary = csv_writer(&dir.join("summary.csv"))?;
    for (ci, out) in outputs.iter().enumerate() {
        for r in &out.records {
            runs.serialize(RunRow::from(r))?;
        }
        summary.serialize(&out.summary)?;
        if out.config.traces {
            let tdir = dir.join("traces");
            fs::create_dir_all(&tdir)?;
            let obj = make_objective(&out.config.objective)?;
            for r in out.records.iter().filter(|r| !r.trace.is_empty()) {
                let mut w = csv_writer(&tdir.join(format!("run_{ci:02}_{:05}.csv", r.run_id)))?;
                for row in trace_rows(&obj, r.run_id, &r.trace) {
                    w.serialize(row)?;
                }
                w.flush()?;
            }
        }
    }
    runs.flush()?;
    summary.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let mut cfg = ExperimentConfig::new("gaussian-pdf", PolicyKind::Sbes, 0.005, 30, 7);
        cfg.inits = 3;
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        let minimal = r#"{"objective":"beta-pdf","policy":"random-search","gamma":0.1,"budget":10,"seed":1}"#;
        let c = ExperimentConfig::from_json(minimal).unwrap();
        assert_eq!((c.m, c.k, c.inits, c.replications), (20, 32, 15, 20));
        assert!(ExperimentConfig::from_json(
            r#"{"objective":"x","policy":"sbes","gamma":0.1,"budget":10,"seed":1,"typo":1}"#
        )
        .is_err());
    }

    #[test]
    fn seeds_differ_per_run_and_repeat() {
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
        assert_ne!(derive_seed(5, 3), derive_seed(5, 4));
        assert_ne!(derive_seed(5, 3), derive_seed(6, 3));
    }

    #[test]
    fn latin_hypercube_fills_every_stratum() {
        let obj = make_objective("gamma-pdf").unwrap();
        let pairs = latin_hypercube_pairs(&obj, 15, 1);
        let w = obj.domain().width() / 15.0;
        for col in 0..2 {
            let mut hit = [false; 15];
            for p in &pairs {
                let x = if col == 0 { p.0 } else { p.1 };
                hit[((x / w) as usize).min(14)] = true;
            }
            assert!(hit.iter().all(|h| *h));
        }
        assert!(pairs.iter().all(|(a, b)| a != b));
    }

    #[test]
    fn small_experiment_is_deterministic_and_clean() {
        let mut cfg = ExperimentConfig::new("gaussian-pdf", PolicyKind::Sbes, 0.06, 6, 11);
        cfg.inits = 2;
        cfg.replications = 3;
        cfg.k = 8;
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.regrets(), b.regrets());
        assert_eq!(a.records.len(), 6);
        assert!(a.records.iter().all(|r| r.evaluations == 7 && r.trace.len() == 6));
        a.check_invariants().unwrap();
        assert!(a.summary.mean_regret >= 0.0);
    }

    #[test]
    fn baseline_runs_report_zero_k() {
        let mut cfg = ExperimentConfig::new("beta-pdf", PolicyKind::GridEqual, 0.06, 10, 2);
        cfg.inits = 1;
        cfg.replications = 4;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.summary.k, 0);
        assert!(out.records.iter().all(|r| r.trace.is_empty() && r.regret >= 0.0));
    }
}
