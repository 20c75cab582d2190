//! Sanity baselines that ignore the belief model.

use rand::Rng;

use crate::objective::{noisy_eval, NoiseSpec, Objective};

/// `N + 1` uniform draws; recommends the point with the best observation.
pub fn random_search<R: Rng + ?Sized>(obj: &Objective, noise: NoiseSpec, budget: usize, rng: &mut R) -> f64 {
    let d = obj.domain();
    let mut best = (f64::NEG_INFINITY, d.midpoint());
    for _ in 0..=budget {
        let x = rng.gen_range(d.lo()..=d.hi());
        let y = noisy_eval(obj, noise, x, rng);
        if y > best.0 {
            best = (y, x);
        }
    }
    best.1
}

/// Default grid size for `N + 1` evaluations: about `sqrt(N + 1)` points,
/// each sampled equally often.
pub fn default_grid_points(budget: usize) -> usize {
    ((budget + 1) as f64).sqrt().ceil() as usize
}

/// Cell midpoints of `points` equal cells, each evaluated
/// `(N + 1) / points` times; recommends the best sample mean. Leftover
/// evaluations are not spent.
pub fn grid_equal<R: Rng + ?Sized>(
    obj: &Objective,
    noise: NoiseSpec,
    budget: usize,
    points: usize,
    rng: &mut R,
) -> f64 {
    let d = obj.domain();
    let points = points.clamp(1, budget + 1);
    let reps = (budget + 1) / points;
    let mut best = (f64::NEG_INFINITY, d.midpoint());
    for i in 0..points {
        let x = d.lo() + d.width() * (i as f64 + 0.5) / points as f64;
        let mean = (0..reps).map(|_| noisy_eval(obj, noise, x, rng)).sum::<f64>() / reps as f64;
        if mean > best.0 {
            best = (mean, x);
        }
    }
    best.1
}
