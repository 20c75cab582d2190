//! Monte Carlo behaviour of in-model runs: truth is one of the curves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sbes_core::{BeliefCurve, BeliefEnsemble, CurveShape, Interval, SearchState};

const REPS: usize = 200;
const CHECKPOINTS: [usize; 3] = [5, 15, 30];

struct Snapshot {
    truth_weight: f64,
    kl_bits: f64,
    mass_near_truth: f64,
}

fn ensemble(sigma: f64) -> BeliefEnsemble {
    let domain = Interval::new(0.0, 15.0).unwrap();
    let curves = (0..8)
        .map(|k| {
            let mean = 2.0 + 11.0 * k as f64 / 7.0;
            BeliefCurve::new(format!("n{k}"), CurveShape::GaussianPdf { mean, sd: 1.0 }, domain).unwrap()
        })
        .collect();
    BeliefEnsemble::new(domain, curves, sigma).unwrap()
}

/// One run; snapshots at every checkpoint iteration.
fn run(truth: usize, sigma: f64, seed: u64) -> Vec<Snapshot> {
    let ens = ensemble(sigma);
    let curve = ens.curves()[truth].clone();
    let x_star = curve.argmax_location();
    let width = ens.domain().width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let eval = |x: f64, rng: &mut ChaCha8Rng| curve.evaluate(x) + noise.sample(rng);
    let mut state = {
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        SearchState::initialize(ens, None, &mut |x| eval(x, &mut init_rng)).unwrap()
    };
    let mut out = Vec::new();
    while state.iteration() < 30 {
        let d = state.propose(20, &mut rng).unwrap().best.decision;
        let y = eval(d.z, &mut rng);
        state = state.step(d, y).unwrap();
        if CHECKPOINTS.contains(&state.iteration()) {
            let p = state.posterior();
            let lo = (x_star - 0.05 * width).max(0.0);
            let hi = (x_star + 0.05 * width).min(15.0);
            out.push(Snapshot {
                truth_weight: state.ensemble().weight(truth),
                kl_bits: p.kl_to_uniform(),
                mass_near_truth: p.cdf(hi).unwrap() - p.cdf(lo).unwrap(),
            });
        }
    }
    out
}

fn averages(truth: usize, sigma: f64) -> Vec<[f64; 3]> {
    let runs: Vec<Vec<Snapshot>> = (0..REPS).map(|r| run(truth, sigma, 1000 + r as u64)).collect();
    (0..CHECKPOINTS.len())
        .map(|i| {
            let n = REPS as f64;
            [
                runs.iter().map(|s| s[i].truth_weight).sum::<f64>() / n,
                runs.iter().map(|s| s[i].kl_bits).sum::<f64>() / n,
                runs.iter().map(|s| s[i].mass_near_truth).sum::<f64>() / n,
            ]
        })
        .collect()
}

#[test]
fn truth_weight_and_information_grow() {
    // noise around a tenth of the curve height
    let avg = averages(3, 0.04);
    for w in avg.windows(2) {
        assert!(w[1][0] >= w[0][0] - 0.02, "truth weight {:?}", avg);
        assert!(w[1][1] >= w[0][1] - 0.02, "KL {:?}", avg);
    }
}

#[test]
fn low_noise_posterior_concentrates_by_iteration_15() {
    let avg = averages(5, 0.002);
    assert!(avg[1][2] > 0.9, "mass near the optimum {:?}", avg);
}
