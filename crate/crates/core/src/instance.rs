//! Random Euclidean instances: status quo, ideal points, noisy starts, and
//! the quality of a winning coalition.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::dynamics::Coalition;
use crate::metric::{Distance, MetricError, Point};

/// Side length of the square everything is sampled in.
pub const BOX: f64 = 200.0;
/// Upper bound of per-component standard deviations.
pub const GMM_STD_MAX: f64 = 50.0;
/// Upper bound of the per-axis initial noise deviation.
pub const NOISE_STD_MAX: f64 = 10.0;

/// Where ideal points come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub means: Vec<[f64; 2]>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GmmSpec {
    /// Means ~ U(0,200)², stds ~ U(0,50), weights ~ Dirichlet(1,..,1).
    pub fn sample<R: Rng + ?Sized>(g: usize, rng: &mut R) -> GmmSpec {
        let coord = Uniform::new(0.0, BOX).expect("valid range");
        let std = Uniform::new(0.0, GMM_STD_MAX).expect("valid range");
        let means = (0..g)
            .map(|_| [coord.sample(rng), coord.sample(rng)])
            .collect();
        let stds = (0..g).map(|_| std.sample(rng)).collect();
        // normalised unit exponentials are Dirichlet(1,..,1)
        let raw: Vec<f64> = (0..g).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / total).collect();
        GmmSpec {
            means,
            stds,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (k, w) in self.weights.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            last = k;
            acc += w;
            if u < acc {
                return k;
            }
        }
        last
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let k = self.pick(rng);
        let [mx, my] = self.means[k];
        let s = self.stds[k];
        let z = Normal::new(0.0, 1.0).expect("unit normal");
        let x = mx + s * z.sample(rng);
        let y = my + s * z.sample(rng);
        Point::xy(x, y)
    }
}

pub fn sample_status_quo<R: Rng + ?Sized>(rng: &mut R) -> Point {
    let u = Uniform::new(0.0, BOX).expect("valid range");
    Point::xy(u.sample(rng), u.sample(rng))
}

/// `g = 0` means uniform on the box; otherwise a fresh `g`-component
/// mixture is drawn for the instance and every agent samples from it.
pub fn sample_ideal_points<R: Rng + ?Sized>(n: usize, g: usize, rng: &mut R) -> Vec<Point> {
    if g == 0 {
        let u = Uniform::new(0.0, BOX).expect("valid range");
        return (0..n)
            .map(|_| Point::xy(u.sample(rng), u.sample(rng)))
            .collect();
    }
    let gmm = GmmSpec::sample(g, rng);
    (0..n).map(|_| gmm.sample_point(rng)).collect()
}

/// The ideal point plus axis-aligned Gaussian noise with deviations drawn
/// from U(0,10) per agent.
pub fn sample_initial_noise<R: Rng + ?Sized>(ideal: &Point, rng: &mut R) -> Point {
    let u = Uniform::new(0.0, NOISE_STD_MAX).expect("valid range");
    let z = Normal::new(0.0, 1.0).expect("unit normal");
    let sx: f64 = u.sample(rng);
    let sy: f64 = u.sample(rng);
    let c = ideal.coords();
    Point::xy(c[0] + sx * z.sample(rng), c[1] + sy * z.sample(rng))
}

/// Mean distance of the winner's members' ideals to the winner's point.
pub fn quality_metric<D: Distance + ?Sized>(
    winner: &Coalition,
    ideals: &[Point],
    metric: &D,
) -> Result<f64, MetricError> {
    if winner.members.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut total = 0.0;
    for &m in &winner.members {
        total += metric.dist(&ideals[m], &winner.point)?;
    }
    Ok(total / winner.members.len() as f64)
}
