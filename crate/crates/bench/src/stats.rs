//! Small summary statistics and the paired sign test.

use statrs::distribution::{Binomial, DiscreteCDF};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Outcome of a one-sided paired sign test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    /// `P(Binomial(wins + losses, 1/2) >= wins)`.
    pub p_value: f64,
}

/// Tests whether `a[i] < b[i]` more often than chance (smaller is better,
/// as for regret). Ties are dropped.
pub fn sign_test_less(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len(), "paired samples");
    let wins = a.iter().zip(b).filter(|(x, y)| x < y).count() as u64;
    let losses = a.iter().zip(b).filter(|(x, y)| x > y).count() as u64;
    let ties = a.len() as u64 - wins - losses;
    let n = wins + losses;
    let p_value = if n == 0 || wins == 0 {
        1.0
    } else {
        let bin = Binomial::new(0.5, n).expect("valid binomial");
        bin.sf(wins - 1)
    };
    SignTest { wins, losses, ties, p_value }
}

/// Same test with larger values counted as wins.
pub fn sign_test_greater(a: &[f64], b: &[f64]) -> SignTest {
    let na: Vec<f64> = a.iter().map(|x| -x).collect();
    let nb: Vec<f64> = b.iter().map(|x| -x).collect();
    sign_test_less(&na, &nb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn sign_test_tail() {
        // 15 of 20: P(X >= 15) = 21700 / 2^20
        let a: Vec<f64> = (0..20).map(|i| if i < 15 { 0.0 } else { 2.0 }).collect();
        let b = vec![1.0; 20];
        let t = sign_test_less(&a, &b);
        assert_eq!((t.wins, t.losses, t.ties), (15, 5, 0));
        assert!((t.p_value - 21_700.0 / 1_048_576.0).abs() < 1e-12);
        let t = sign_test_greater(&b, &a);
        assert_eq!(t.wins, 15);
    }

    #[test]
    fn ties_are_dropped() {
        let t = sign_test_less(&[1.0, 1.0, 0.0], &[1.0, 1.0, 1.0]);
        assert_eq!((t.wins, t.losses, t.ties), (1, 0, 2));
        assert!((t.p_value - 0.5).abs() < 1e-12);
    }
}
