//! Synthetic 1-D truths and the additive Gaussian noise model.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use sbes_core::{CurveShape, FamilyKind, Interval, ParametricFamilySpec};

use crate::{BenchError, Result};

const RANGE_SCAN_POINTS: usize = 4096;

/// Registered objective names.
pub const OBJECTIVES: [&str; 5] = ["gamma-pdf", "beta-pdf", "gaussian-pdf", "mccormick-1d", "ackley-1d"];

/// A noiseless truth to be maximized.
#[derive(Clone)]
pub struct Objective {
    name: String,
    domain: Interval,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    x_star: f64,
    f_star: f64,
    range_span: f64,
    /// The parametric shape, when the truth belongs to a family.
    shape: Option<CurveShape>,
}

impl fmt::Debug for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Objective")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("x_star", &self.x_star)
            .field("range_span", &self.range_span)
            .finish()
    }
}

impl Objective {
    /// `x_star` is the known maximizer; the value range is measured on a
    /// dense grid.
    pub fn new(
        name: impl Into<String>,
        domain: Interval,
        x_star: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let (lo, hi) = domain
            .grid(RANGE_SCAN_POINTS)
            .chain(std::iter::once(x_star))
            .map(&f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        Self { name: name.into(), domain, f_star: f(x_star), f: Arc::new(f), x_star, range_span: hi - lo, shape: None }
    }

    fn from_shape(name: &str, domain: Interval, shape: CurveShape) -> Result<Self> {
        let curve = sbes_core::BeliefCurve::new(name, shape.clone(), domain)?;
        let x_star = curve.argmax_location();
        let mut obj = Self::new(name, domain, x_star, move |x| curve.evaluate(x));
        obj.shape = Some(shape);
        Ok(obj)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    #[inline]
    pub fn evaluate(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn known_max_location(&self) -> f64 {
        self.x_star
    }

    pub fn max_value(&self) -> f64 {
        self.f_star
    }

    /// `|f_max - f_min|` over the domain.
    pub fn range_span(&self) -> f64 {
        self.range_span
    }

    pub fn shape(&self) -> Option<&CurveShape> {
        self.shape.as_ref()
    }

    /// Immediate regret of recommending `x`.
    pub fn regret(&self, x: f64) -> f64 {
        (self.f_star - self.evaluate(x)).max(0.0)
    }
}

/// Looks up a registered truth.
pub fn make_objective(name: &str) -> Result<Objective> {
    let iv = |a, b| Interval::new(a, b).expect("static domain");
    match name {
        "gamma-pdf" => Objective::from_shape(name, iv(0.0, 20.0), CurveShape::GammaPdf { shape: 9.0, rate: 1.0 }),
        "beta-pdf" => Objective::from_shape(name, iv(0.0, 1.0), CurveShape::BetaPdf { alpha: 3.0, beta: 18.0 }),
        "gaussian-pdf" => Objective::from_shape(name, iv(0.0, 15.0), CurveShape::GaussianPdf { mean: 7.5, sd: 1.0 }),
        "mccormick-1d" => {
            let f = |x: f64| -x.sin() - x * x + 1.5 * x + 10.0;
            let domain = iv(-1.5, 4.0);
            // root of -cos x - 2x + 1.5 by bisection; f is strictly concave here
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if -mid.cos() - 2.0 * mid + 1.5 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(Objective::new(name, domain, 0.5 * (lo + hi), f))
        }
        "ackley-1d" => {
            let f = |x: f64| 4.0 * (-x.abs()).exp() + x.cos().exp() - 4.0 - std::f64::consts::E;
            Ok(Objective::new(name, iv(-3.0, 3.0), 0.0, f))
        }
        _ => Err(BenchError::UnknownObjective(name.to_string())),
    }
}

/// Noise level as a fraction of the truth's value range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub gamma: f64,
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn new(gamma: f64, range_span: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(BenchError::Config(format!("noise ratio must be >= 0, got {gamma}")));
        }
        Ok(Self { gamma, sigma: gamma * range_span })
    }

    pub fn for_objective(gamma: f64, obj: &Objective) -> Result<Self> {
        Self::new(gamma, obj.range_span())
    }
}

/// `f(x) + sigma * N(0, 1)`.
pub fn noisy_eval<R: Rng + ?Sized>(obj: &Objective, noise: NoiseSpec, x: f64, rng: &mut R) -> f64 {
    let f = obj.evaluate(x);
    if noise.sigma == 0.0 {
        return f;
    }
    let e: f64 = rng.sample(StandardNormal);
    f + noise.sigma * e
}

/// `k` points `center + step * (i - k/2)`, so `center` is always included
/// when `k >= 1`.
fn centered_grid(center: f64, step: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| center + step * (i as f64 - (k / 2) as f64)).collect()
}

/// The in-model ensemble: the truth's family with `k` parameter values that
/// include the true one. `None` for the black-box objectives.
pub fn in_model_family(name: &str, k: usize) -> Option<ParametricFamilySpec> {
    let k = k.max(2);
    let spec = match name {
        // K = 32 gives means 1.1, 1.5, …, 13.5
        "gaussian-pdf" => ParametricFamilySpec::new(
            FamilyKind::GaussianPdf,
            centered_grid(7.5, 12.8 / k as f64, k).into_iter().map(|m| vec![m, 1.0]).collect(),
        ),
        "gamma-pdf" => ParametricFamilySpec::new(
            FamilyKind::GammaPdf,
            centered_grid(9.0, 16.0 / k as f64, k).into_iter().map(|s| vec![s, 1.0]).collect(),
        ),
        "beta-pdf" => ParametricFamilySpec::new(
            FamilyKind::BetaPdf,
            centered_grid(18.0, 32.0 / k as f64, k).into_iter().map(|b| vec![3.0, b]).collect(),
        ),
        _ => return None,
    };
    Some(spec)
}

/// Scale multipliers searched by the scale-learning variant.
pub const SCALE_GRID: [f64; 4] = [0.5, 1.0, 1.5, 2.0];

/// Default ensemble for the scale-learning variant with `k` curves in total:
/// `k / 4` shapes times [`SCALE_GRID`]. Black-box objectives get a grid of
/// quadratics anchored at a level read off the truth's range.
pub fn scale_family(obj: &Objective, k: usize) -> ParametricFamilySpec {
    let shapes = (k / SCALE_GRID.len()).max(2);
    if let Some(spec) = in_model_family(obj.name(), shapes) {
        return spec.with_scales(SCALE_GRID.to_vec());
    }
    let d = obj.domain();
    let centers: Vec<Vec<f64>> =
        (0..shapes).map(|i| vec![d.lo() + d.width() * (i as f64 + 0.5) / shapes as f64, 1.0]).collect();
    // unit curvature scaled so the drop over half the domain matches the
    // truth's range
    let base = obj.range_span() / (0.25 * d.width() * d.width());
    ParametricFamilySpec::new(FamilyKind::Quadratic, centers)
        .with_scales(SCALE_GRID.iter().map(|s| s * base).collect())
        .with_offsets(vec![obj.max_value()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn known_maximizers() {
        assert_eq!(make_objective("gaussian-pdf").unwrap().known_max_location(), 7.5);
        assert_eq!(make_objective("gamma-pdf").unwrap().known_max_location(), 8.0);
        let beta = make_objective("beta-pdf").unwrap().known_max_location();
        assert!((beta - 2.0 / 19.0).abs() < 1e-15);
        let mc = make_objective("mccormick-1d").unwrap();
        let x = mc.known_max_location();
        assert!((-x.cos() - 2.0 * x + 1.5).abs() < 1e-12);
        assert_eq!(make_objective("ackley-1d").unwrap().known_max_location(), 0.0);
        assert!(make_objective("rosenbrock").is_err());
    }

    #[test]
    fn every_objective_is_unimodal_with_max_at_x_star() {
        for name in OBJECTIVES {
            let obj = make_objective(name).unwrap();
            let xs: Vec<f64> = obj.domain().grid(4096).collect();
            let vals: Vec<f64> = xs.iter().map(|&x| obj.evaluate(x)).collect();
            let mut falling = false;
            for w in vals.windows(2) {
                if w[1] < w[0] {
                    falling = true;
                } else if w[1] > w[0] {
                    assert!(!falling, "{name} rises after falling");
                }
            }
            assert!(vals.iter().all(|v| *v <= obj.max_value() + 1e-12), "{name}");
        }
    }

    #[test]
    fn noise_ratio_sets_sigma() {
        let n = NoiseSpec::new(0.5, 1000.0).unwrap();
        assert_eq!(n.sigma, 500.0);
        assert!(NoiseSpec::new(-0.1, 1.0).is_err());
    }

    #[test]
    fn zero_noise_is_exact() {
        let obj = make_objective("gamma-pdf").unwrap();
        let noise = NoiseSpec::for_objective(0.0, &obj).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(noisy_eval(&obj, noise, 3.0, &mut rng), obj.evaluate(3.0));
    }

    #[test]
    fn noisy_mean_is_unbiased() {
        let obj = make_objective("gaussian-pdf").unwrap();
        let noise = NoiseSpec::for_objective(0.3, &obj).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mean = (0..n).map(|_| noisy_eval(&obj, noise, 7.0, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - obj.evaluate(7.0)).abs() < 4.0 * noise.sigma / (n as f64).sqrt());
    }

    #[test]
    fn in_model_grids_contain_the_truth() {
        let fam = in_model_family("gaussian-pdf", 32).unwrap();
        assert_eq!(fam.size(), 32);
        assert!((fam.parameter_grid[0][0] - 1.1).abs() < 1e-12);
        assert!(fam.parameter_grid.iter().any(|p| p[0] == 7.5));
        assert!(in_model_family("gamma-pdf", 32).unwrap().parameter_grid.iter().any(|p| p[0] == 9.0));
        assert!(in_model_family("beta-pdf", 32).unwrap().parameter_grid.iter().any(|p| p[1] == 18.0));
        for name in ["gaussian-pdf", "gamma-pdf", "beta-pdf"] {
            let obj = make_objective(name).unwrap();
            in_model_family(name, 32).unwrap().build(obj.domain(), 0.1).unwrap();
            let s = scale_family(&obj, 32);
            assert_eq!(s.size(), 32);
            s.build(obj.domain(), 0.1).unwrap();
        }
        for name in ["mccormick-1d", "ackley-1d"] {
            let obj = make_objective(name).unwrap();
            assert!(in_model_family(name, 32).is_none());
            scale_family(&obj, 32).build(obj.domain(), 0.1).unwrap();
        }
    }
}
