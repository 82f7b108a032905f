//! Points, distance functions and weighted aggregation.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector has no direction under the sqrt-cosine metric")]
    ZeroVector,
    #[error("point has no coordinates")]
    EmptyPoint,
    #[error("non-finite coordinate at index {0}")]
    NonFinite(usize),
    #[error("no points to aggregate")]
    EmptyInput,
    #[error("{points} points but {weights} weights")]
    LengthMismatch { points: usize, weights: usize },
    #[error("weights must be nonnegative and sum to a positive value")]
    BadWeights,
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error("point {0} is not in the distance table")]
    UnknownPoint(String),
}

/// An element of the space: a 2D coordinate or an embedding vector.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self, MetricError> {
        if coords.is_empty() {
            return Err(MetricError::EmptyPoint);
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(MetricError::NonFinite(i));
        }
        Ok(Point(coords))
    }

    /// Planar point. Panics on non-finite input.
    pub fn xy(x: f64, y: f64) -> Self {
        Point::new(alloc::vec![x, y]).expect("finite coordinates")
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    fn check_dim(&self, other: &Point) -> Result<(), MetricError> {
        if self.dim() != other.dim() {
            return Err(MetricError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = MetricError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// Anything that can measure the distance between two points.
pub trait Distance {
    fn dist(&self, a: &Point, b: &Point) -> Result<f64, MetricError>;
}

impl<D: Distance + ?Sized> Distance for &D {
    fn dist(&self, a: &Point, b: &Point) -> Result<f64, MetricError> {
        (**self).dist(a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// Plain l2 distance; a true metric.
    EuclideanL2,
    /// `sqrt(2 - 2 cos(a, b))`. A pseudo-metric: colinear vectors are at
    /// distance zero whatever their lengths.
    SqrtCosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metric {
    pub kind: MetricKind,
    pub dimension: usize,
}

impl Metric {
    pub fn euclidean(dimension: usize) -> Self {
        Metric {
            kind: MetricKind::EuclideanL2,
            dimension,
        }
    }

    pub fn sqrt_cosine(dimension: usize) -> Self {
        Metric {
            kind: MetricKind::SqrtCosine,
            dimension,
        }
    }

    fn check(&self, p: &Point) -> Result<(), MetricError> {
        if p.dim() != self.dimension {
            return Err(MetricError::DimensionMismatch {
                left: p.dim(),
                right: self.dimension,
            });
        }
        Ok(())
    }
}

impl Distance for Metric {
    fn dist(&self, a: &Point, b: &Point) -> Result<f64, MetricError> {
        self.check(a)?;
        self.check(b)?;
        match self.kind {
            MetricKind::EuclideanL2 => Ok(euclidean(a.coords(), b.coords())),
            MetricKind::SqrtCosine => sqrt_cosine(a.coords(), b.coords()),
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    libm::sqrt(sq)
}

/// `sqrt(2 - 2 cos)` equals the distance between the unit vectors; that form
/// has no cancellation near zero.
fn sqrt_cosine(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    let na = libm::sqrt(a.iter().map(|x| x * x).sum::<f64>());
    let nb = libm::sqrt(b.iter().map(|y| y * y).sum::<f64>());
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    let sq: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x / na - y / nb;
            d * d
        })
        .sum();
    Ok(libm::sqrt(sq).min(2.0))
}

/// Finite metric given as an explicit distance table over named points.
///
/// A point of this space is the one-coordinate vector holding the label's
/// index; use [`TableMetric::point`] to build them. Pairs missing from the
/// table are errors rather than guesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetric {
    labels: Vec<String>,
    table: Vec<Option<f64>>,
}

impl TableMetric {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        let mut table = alloc::vec![None; n * n];
        for i in 0..n {
            table[i * n + i] = Some(0.0);
        }
        TableMetric { labels, table }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn index(&self, label: &str) -> Result<usize, MetricError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| MetricError::UnknownPoint(label.into()))
    }

    /// Records a symmetric entry.
    pub fn set(&mut self, a: &str, b: &str, d: f64) -> Result<(), MetricError> {
        if !d.is_finite() || d < 0.0 {
            return Err(MetricError::NonFinite(0));
        }
        let (i, j) = (self.index(a)?, self.index(b)?);
        let n = self.labels.len();
        self.table[i * n + j] = Some(d);
        self.table[j * n + i] = Some(d);
        Ok(())
    }

    pub fn point(&self, label: &str) -> Result<Point, MetricError> {
        let i = self.index(label)?;
        Point::new(alloc::vec![i as f64])
    }

    pub fn label_of(&self, p: &Point) -> Option<&str> {
        self.slot(p).ok().map(|i| self.labels[i].as_str())
    }

    fn slot(&self, p: &Point) -> Result<usize, MetricError> {
        let c = p.coords();
        let unknown = || MetricError::UnknownPoint(alloc::format!("{:?}", c));
        if c.len() != 1 || c[0] < 0.0 || c[0] != libm::trunc(c[0]) {
            return Err(unknown());
        }
        let i = c[0] as usize;
        if i >= self.labels.len() {
            return Err(unknown());
        }
        Ok(i)
    }
}

impl Distance for TableMetric {
    fn dist(&self, a: &Point, b: &Point) -> Result<f64, MetricError> {
        let (i, j) = (self.slot(a)?, self.slot(b)?);
        self.table[i * self.labels.len() + j].ok_or_else(|| {
            MetricError::UnknownPoint(alloc::format!(
                "{}-{}",
                self.labels[i],
                self.labels[j]
            ))
        })
    }
}

fn check_weighted(points: &[Point], weights: &[f64]) -> Result<f64, MetricError> {
    if points.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if points.len() != weights.len() {
        return Err(MetricError::LengthMismatch {
            points: points.len(),
            weights: weights.len(),
        });
    }
    for p in &points[1..] {
        points[0].check_dim(p)?;
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(MetricError::BadWeights);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(MetricError::BadWeights);
    }
    Ok(total)
}

/// Coordinate-wise `sum(w_k x_k) / sum(w_k)`.
pub fn weighted_mean(points: &[Point], weights: &[f64]) -> Result<Point, MetricError> {
    let total = check_weighted(points, weights)?;
    let mut acc = alloc::vec![0.0; points[0].dim()];
    for (p, w) in points.iter().zip(weights) {
        for (a, x) in acc.iter_mut().zip(p.coords()) {
            *a += w * x;
        }
    }
    for a in &mut acc {
        *a /= total;
    }
    Point::new(acc)
}

/// `sum_k w_k * |x - p_k|` under the Euclidean metric.
pub fn weighted_distance_sum(x: &Point, points: &[Point], weights: &[f64]) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(p, w)| w * euclidean(x.coords(), p.coords()))
        .sum()
}

pub const WEISZFELD_TOL: f64 = 1e-9;
pub const WEISZFELD_MAX_ITER: usize = 1_000;

/// Weighted geometric median by Weiszfeld iteration, started at the weighted
/// mean.
///
/// When an iterate lands within `tol` of an input point, that point is
/// returned if it satisfies the vertex optimality condition
/// `|sum_{j != k} w_j (p_j - p_k) / |p_j - p_k|| <= w_k`; otherwise the step
/// proceeds with the coincident point left out.
pub fn geometric_median(
    points: &[Point],
    weights: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Point, MetricError> {
    check_weighted(points, weights)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(MetricError::BadTolerance);
    }
    let dim = points[0].dim();
    let mut x = weighted_mean(points, weights)?.into_coords();
    for _ in 0..max_iter {
        let mut num = alloc::vec![0.0; dim];
        let mut denom = 0.0;
        let mut coincident = None;
        for (k, (p, &w)) in points.iter().zip(weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            let d = euclidean(&x, p.coords());
            if d < tol {
                coincident = Some(k);
                continue;
            }
            for (n, c) in num.iter_mut().zip(p.coords()) {
                *n += w * c / d;
            }
            denom += w / d;
        }
        if let Some(k) = coincident {
            if vertex_is_optimal(points, weights, k) {
                return Ok(points[k].clone());
            }
        }
        if denom == 0.0 {
            break;
        }
        let next: Vec<f64> = num.iter().map(|n| n / denom).collect();
        let step = euclidean(&next, &x);
        x = next;
        if step < tol {
            break;
        }
    }
    Point::new(x)
}

fn vertex_is_optimal(points: &[Point], weights: &[f64], k: usize) -> bool {
    let pk = points[k].coords();
    let mut pull = alloc::vec![0.0; pk.len()];
    let mut own = 0.0;
    for (p, &w) in points.iter().zip(weights) {
        let d = euclidean(p.coords(), pk);
        if d == 0.0 {
            own += w;
            continue;
        }
        for ((g, c), o) in pull.iter_mut().zip(p.coords()).zip(pk) {
            *g += w * (c - o) / d;
        }
    }
    libm::sqrt(pull.iter().map(|g| g * g).sum::<f64>()) <= own
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn p(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    #[test]
    fn sqrt_cosine_examples() {
        let m = Metric::sqrt_cosine(3);
        let a = p(&[1.0, 2.0, 3.0]);
        assert_eq!(m.dist(&a, &a).unwrap(), 0.0);
        assert_eq!(m.dist(&a, &p(&[2.0, 4.0, 6.0])).unwrap(), 0.0);
        let ortho = m.dist(&p(&[1.0, 0.0, 0.0]), &p(&[0.0, 1.0, 0.0])).unwrap();
        assert!((ortho - core::f64::consts::SQRT_2).abs() < 1e-7);
        assert_eq!(m.dist(&a, &p(&[-1.0, -2.0, -3.0])).unwrap(), 2.0);
    }

    #[test]
    fn l2_three_four_five() {
        let m = Metric::euclidean(2);
        assert_eq!(m.dist(&Point::xy(0.0, 0.0), &Point::xy(3.0, 4.0)).unwrap(), 5.0);
    }

    #[test]
    fn dist_errors() {
        let m = Metric::sqrt_cosine(2);
        assert_eq!(
            m.dist(&Point::xy(0.0, 0.0), &Point::xy(1.0, 0.0)),
            Err(MetricError::ZeroVector)
        );
        assert!(matches!(
            m.dist(&Point::xy(1.0, 0.0), &p(&[1.0, 0.0, 0.0])),
            Err(MetricError::DimensionMismatch { .. })
        ));
        assert_eq!(Point::new(vec![f64::NAN]), Err(MetricError::NonFinite(0)));
        assert_eq!(Point::new(vec![]), Err(MetricError::EmptyPoint));
    }

    #[test]
    fn weighted_mean_examples() {
        let pts = [Point::xy(0.0, 0.0), Point::xy(2.0, 2.0)];
        assert_eq!(weighted_mean(&pts, &[1.0, 1.0]).unwrap(), Point::xy(1.0, 1.0));
        let pts = [Point::xy(0.0, 0.0), Point::xy(4.0, 0.0)];
        assert_eq!(weighted_mean(&pts, &[3.0, 1.0]).unwrap(), Point::xy(1.0, 0.0));
        let one = [Point::xy(7.5, -2.0)];
        assert_eq!(weighted_mean(&one, &[0.3]).unwrap(), one[0]);
        assert_eq!(weighted_mean(&[], &[]), Err(MetricError::EmptyInput));
        assert_eq!(
            weighted_mean(&pts, &[0.0, 0.0]),
            Err(MetricError::BadWeights)
        );
    }

    #[test]
    fn median_of_one_point() {
        let one = [Point::xy(3.0, 4.0)];
        let m = geometric_median(&one, &[2.0], WEISZFELD_TOL, WEISZFELD_MAX_ITER).unwrap();
        assert_eq!(m, one[0]);
    }

    #[test]
    fn median_two_points_stays_at_mean() {
        let pts = [Point::xy(0.0, 0.0), Point::xy(2.0, 0.0)];
        let m = geometric_median(&pts, &[1.0, 1.0], WEISZFELD_TOL, WEISZFELD_MAX_ITER).unwrap();
        assert_eq!(m, Point::xy(1.0, 0.0));
    }

    #[test]
    fn median_matches_grid_search_fermat_point() {
        // Brute-force oracle: objective minimum over a 1e-3 grid on the
        // bounding box [0,1]x[0,1].
        let pts = [Point::xy(0.0, 0.0), Point::xy(1.0, 0.0), Point::xy(0.5, 1.0)];
        let w = [1.0, 1.0, 1.0];
        let mut best = f64::INFINITY;
        for i in 0..=1000 {
            for j in 0..=1000 {
                let x = Point::xy(i as f64 * 1e-3, j as f64 * 1e-3);
                best = best.min(weighted_distance_sum(&x, &pts, &w));
            }
        }
        let m = geometric_median(&pts, &w, WEISZFELD_TOL, WEISZFELD_MAX_ITER).unwrap();
        let obj = weighted_distance_sum(&m, &pts, &w);
        assert!(obj <= best + 1e-6, "{obj} vs grid {best}");
        assert!((best - obj).abs() < 1e-6);
    }

    #[test]
    fn median_snaps_to_dominant_vertex() {
        let pts = [Point::xy(0.0, 0.0), Point::xy(1.0, 0.0), Point::xy(0.0, 1.0)];
        let m = geometric_median(&pts, &[10.0, 1.0, 1.0], WEISZFELD_TOL, WEISZFELD_MAX_ITER)
            .unwrap();
        assert!(euclidean(m.coords(), &[0.0, 0.0]) < 1e-6);
    }

    #[test]
    fn table_metric_lookup() {
        let mut t = TableMetric::new(vec!["a".into(), "b".into(), "c".into()]);
        t.set("a", "b", 3.0).unwrap();
        let (a, b, c) = (t.point("a").unwrap(), t.point("b").unwrap(), t.point("c").unwrap());
        assert_eq!(t.dist(&a, &b).unwrap(), 3.0);
        assert_eq!(t.dist(&b, &a).unwrap(), 3.0);
        assert_eq!(t.dist(&c, &c).unwrap(), 0.0);
        assert!(matches!(t.dist(&a, &c), Err(MetricError::UnknownPoint(_))));
        assert_eq!(t.label_of(&b), Some("b"));
    }
}
