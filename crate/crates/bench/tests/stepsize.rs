use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbes_bench::stats::{mean, sign_test_greater};
use sbes_bench::stepsize::{
    run_stepsize, sbes_linesearch, Band, LineFamily, MultiObjective, StepsizeConfig, StepsizeRule, StepsizeRunRow,
    Suite,
};

fn by_rule(rows: &[StepsizeRunRow], rule: &str) -> Vec<f64> {
    rows.iter().filter(|r| r.rule == rule).map(|r| r.reduction).collect()
}

#[test]
fn gaussian_2d_far_mix_beats_fixed_rules() {
    let mut cfg = StepsizeConfig::new(Suite::Nonconvex, Band::Far, 7);
    cfg.only = Some(vec![0]);
    let rows = run_stepsize(&cfg).unwrap();
    assert_eq!(rows.len(), 20 * 5);
    let mix = by_rule(&rows, "sbes-mix");
    for rule in ["harmonic", "rmsprop", "adagrad"] {
        let other = by_rule(&rows, rule);
        let t = sign_test_greater(&mix, &other);
        assert!(t.p_value < 0.05, "{rule}: {:.3} vs {:.3}, {t:?}", mean(&mix), mean(&other));
    }
}

#[test]
fn convex_far_mix_reduces_distance() {
    let mut cfg = StepsizeConfig::new(Suite::Convex, Band::Far, 11);
    cfg.inits = 5;
    cfg.rules = vec![StepsizeRule::sbes_mix()];
    let rows = run_stepsize(&cfg).unwrap();
    assert_eq!(rows.len(), 7 * 5);
    assert!(mean(&by_rule(&rows, "sbes-mix")) > 0.0);
}

#[test]
fn rows_share_starting_points_across_rules() {
    let mut cfg = StepsizeConfig::new(Suite::Nonconvex, Band::Medium, 3);
    cfg.inits = 3;
    let rows = run_stepsize(&cfg).unwrap();
    for r in &rows {
        let first =
            rows.iter().find(|o| o.objective == r.objective && o.dim == r.dim && o.init_id == r.init_id).unwrap();
        assert_eq!(r.dist0, first.dist0);
        assert!((r.dist0 - r.dist10 - r.reduction).abs() < 1e-12);
    }
}

// The same profile stretched over twice the ray, with beliefs anchored on
// the stretched slope, gives twice the stepsize.
#[test]
fn doubling_the_ray_doubles_the_step() {
    let profile = |t: f64| -(t - 0.62f64).powi(2) + 0.62f64.powi(2);
    let step = |len: f64| {
        let obj = MultiObjective::new("ray", 0.0, len, vec![0.62 * len], move |x| profile(x[0] / len));
        let rule = StepsizeRule::sbes_single(LineFamily::Quadratic);
        let slope = 2.0 * 0.62 / len;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        sbes_linesearch(&obj, 0.0, &[0.0], &[1.0], &rule, 0.0, slope, &mut rng).unwrap()
    };
    let (a, b) = (step(3.0), step(6.0));
    assert_eq!(b.alpha_max, 2.0 * a.alpha_max);
    assert!((b.alpha - 2.0 * a.alpha).abs() <= 1e-6 * b.alpha_max, "{a:?} {b:?}");
}
