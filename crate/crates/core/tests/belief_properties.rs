use proptest::prelude::*;
use sbes_core::belief::g_single;
use sbes_core::{BeliefCurve, BeliefEnsemble, CurveShape, Interval};

fn domain() -> Interval {
    Interval::new(0.0, 10.0).unwrap()
}

fn quadratic(center: f64, curvature: f64) -> BeliefCurve {
    BeliefCurve::new(format!("q{center}"), CurveShape::Quadratic { center, curvature }, domain()).unwrap()
}

fn arb_ensemble() -> impl Strategy<Value = BeliefEnsemble> {
    (prop::collection::btree_set(0u32..100, 2..7), 0.1f64..3.0, 0.01f64..5.0).prop_map(|(centers, curv, sigma)| {
        let curves = centers.iter().map(|c| quadratic(*c as f64 / 10.0, curv)).collect();
        BeliefEnsemble::new(domain(), curves, sigma).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn weights_stay_on_the_simplex(
        ens in arb_ensemble(),
        obs in prop::collection::vec((0.0f64..=10.0, -60.0f64..20.0), 1..40),
    ) {
        let mut e = ens;
        for (x, y) in obs {
            e = e.update_weights(x, y).unwrap();
            let w = e.weights();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(w.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn single_curve_probability_is_at_least_half_and_monotone(
        c in 0.0f64..10.0, k in 0.01f64..5.0, sigma in 1e-3f64..10.0,
        x in 0.0f64..=10.0, y in 0.0f64..=10.0, y2 in 0.0f64..=10.0,
    ) {
        let curve = quadratic(c, k);
        let g1 = g_single(&curve, x, y, sigma);
        let g2 = g_single(&curve, x, y2, sigma);
        prop_assert!(g1 >= 0.5 && g2 >= 0.5);
        let gap1 = (curve.evaluate(x) - curve.evaluate(y)).abs();
        let gap2 = (curve.evaluate(x) - curve.evaluate(y2)).abs();
        if gap1 <= gap2 {
            prop_assert!(g1 <= g2);
        } else {
            prop_assert!(g1 >= g2);
        }
    }

    #[test]
    fn mixture_is_symmetric(ens in arb_ensemble(), x in 0.0f64..=10.0, y in 0.0f64..=10.0) {
        prop_assert_eq!(ens.g_mixture(x, y).to_bits(), ens.g_mixture(y, x).to_bits());
    }

    #[test]
    fn noise_limits(c in 0.0f64..10.0, k in 0.1f64..5.0, x in 0.0f64..=10.0, y in 0.0f64..=10.0) {
        let curve = quadratic(c, k);
        let gap = (curve.evaluate(x) - curve.evaluate(y)).abs();
        // range of a quadratic over the domain
        let span = k * (c.max(10.0 - c)).powi(2);
        prop_assert!((g_single(&curve, x, y, 1e8 * span) - 0.5).abs() < 1e-6);
        if gap > 1e-6 * span {
            prop_assert!(g_single(&curve, x, y, 1e-8 * span) == 1.0);
        }
    }

    #[test]
    fn g_bar_stays_in_unit_interval(ens in arb_ensemble(), a in 0.0f64..=10.0, b in 0.0f64..=10.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let gb = ens.g_bar(a.min(b), a.max(b)).unwrap();
        prop_assert!((0.0..=1.0).contains(&gb));
    }
}
