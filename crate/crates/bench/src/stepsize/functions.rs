//! Multidimensional unimodal test functions on hypercubes.
//!
//! Everything is oriented for maximization: the convex functions are negated.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Convex,
    Nonconvex,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Convex => "convex",
            Suite::Nonconvex => "nonconvex",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "convex" => Ok(Suite::Convex),
            "nonconvex" => Ok(Suite::Nonconvex),
            _ => Err(format!("unknown suite `{s}` (convex, nonconvex)")),
        }
    }
}

type VectorFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct MultiObjective {
    name: &'static str,
    lo: f64,
    hi: f64,
    x_star: Vec<f64>,
    d_max: f64,
    f: VectorFn,
}

impl fmt::Debug for MultiObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiObjective")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("box", &(self.lo, self.hi))
            .finish()
    }
}

impl MultiObjective {
    pub fn new(
        name: &'static str,
        lo: f64,
        hi: f64,
        x_star: Vec<f64>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let d_max = x_star.iter().map(|&c| (c - lo).abs().max((hi - c).abs()).powi(2)).sum::<f64>().sqrt();
        Self { name, lo, hi, x_star, d_max, f: Arc::new(f) }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    /// Bounds shared by every axis.
    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    /// Distance from the optimum to the farthest vertex.
    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    #[inline]
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn clip(&self, x: &mut [f64]) {
        for v in x {
            *v = v.clamp(self.lo, self.hi);
        }
    }

    pub fn distance_to_optimum(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.x_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }
}

pub fn bohachevsky() -> MultiObjective {
    MultiObjective::new("bohachevsky", -100.0, 100.0, vec![0.0, 0.0], |x| {
        -(x[0] * x[0] + 2.0 * x[1] * x[1] - 0.3 * (3.0 * PI * x[0]).cos() - 0.4 * (4.0 * PI * x[1]).cos() + 0.7)
    })
}

/// `sum_i sum_{j <= i} x_j^2`.
pub fn rotated_hyper_ellipsoid(dim: usize) -> MultiObjective {
    MultiObjective::new("rotated-hyper-ellipsoid", -65.536, 65.536, vec![0.0; dim], move |x| {
        -x.iter().enumerate().map(|(j, v)| (dim - j) as f64 * v * v).sum::<f64>()
    })
}

/// `sum_i |x_i|^(i + 1)` with 1-based `i`.
pub fn sum_of_different_powers(dim: usize) -> MultiObjective {
    MultiObjective::new("sum-of-different-powers", -1.0, 1.0, vec![0.0; dim], |x| {
        -x.iter().enumerate().map(|(i, v)| v.abs().powi(i as i32 + 2)).sum::<f64>()
    })
}

/// Gaussian density shape on `[0, 5]^d`, scaled to unit peak height.
/// `precision` is the inverse covariance, row-major.
pub fn gaussian_density(name: &'static str, mean: Vec<f64>, precision: Vec<f64>) -> MultiObjective {
    let d = mean.len();
    assert_eq!(precision.len(), d * d, "precision must be d x d");
    let mu = mean.clone();
    MultiObjective::new(name, 0.0, 5.0, mean, move |x| {
        let diff: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let mut q = 0.0;
        for i in 0..d {
            let row = &precision[i * d..(i + 1) * d];
            q += diff[i] * row.iter().zip(&diff).map(|(p, v)| p * v).sum::<f64>();
        }
        (-0.5 * q).exp()
    })
}

/// Covariance `[[2.0, 0.6], [0.6, 1.5]]` centred at `(3.0, 2.0)`.
pub fn gaussian_2d() -> MultiObjective {
    let (a, b, c) = (2.0, 0.6, 1.5);
    let det = a * c - b * b;
    gaussian_density("gaussian-density", vec![3.0, 2.0], vec![c / det, -b / det, -b / det, a / det])
}

/// Independent axes with variances cycling through 1.5, 2.0, 2.5.
pub fn gaussian_10d() -> MultiObjective {
    let d = 10;
    let mean: Vec<f64> = (0..d).map(|i| 2.5 + 0.8 * (i as f64).sin()).collect();
    let mut precision = vec![0.0; d * d];
    for i in 0..d {
        precision[i * d + i] = 1.0 / (1.5 + 0.5 * (i % 3) as f64);
    }
    gaussian_density("gaussian-density", mean, precision)
}

pub fn suite(s: Suite) -> Vec<MultiObjective> {
    match s {
        Suite::Convex => {
            let mut v = vec![bohachevsky()];
            v.extend([5, 10, 20].map(rotated_hyper_ellipsoid));
            v.extend([5, 10, 20].map(sum_of_different_powers));
            v
        }
        Suite::Nonconvex => vec![gaussian_2d(), gaussian_10d()],
    }
}
