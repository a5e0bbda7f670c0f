//! Metric spaces that instances live in.

use serde_json::{json, Value};
use thiserror::Error;

use crate::scalar::{NumericMode, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Matrix,
    Line,
    Euclidean,
    Ring,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Matrix => "matrix",
            MetricKind::Line => "line",
            MetricKind::Euclidean => "euclidean",
            MetricKind::Ring => "ring",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "matrix" => Some(MetricKind::Matrix),
            "line" => Some(MetricKind::Line),
            "euclidean" => Some(MetricKind::Euclidean),
            "ring" => Some(MetricKind::Ring),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Metric<S> {
    /// Explicit pairwise distances over points `0..n`.
    Matrix(Vec<Vec<S>>),
    /// The real line with `|a - b|`.
    Line,
    /// The Euclidean plane. Float mode only.
    Euclidean,
    /// A continuous ring of the given circumference.
    Ring { circumference: S },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Point<S> {
    Index(usize),
    Line(S),
    Plane(S, S),
    /// Arc position, normalized into `[0, h)`.
    Ring(S),
}

/// The first property a metric fails.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricViolation {
    #[error("matrix is not square (row {row} has {len} entries, expected {expected})")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("negative distance at ({0}, {1})")]
    Negative(usize, usize),
    #[error("nonzero self-distance at {0}")]
    Identity(usize),
    #[error("asymmetry at ({0}, {1})")]
    Asymmetry(usize, usize),
    #[error("triangle inequality fails at ({a}, {c}) via {b}")]
    Triangle { a: usize, b: usize, c: usize },
    #[error("ring circumference must be positive")]
    NonPositiveCircumference,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("point {point} is not valid for a {kind} metric")]
    InvalidPoint { point: String, kind: &'static str },
    #[error("euclidean metrics are supported in float mode only")]
    ExactEuclidean,
    #[error(transparent)]
    Violation(#[from] MetricViolation),
}

impl<S: Scalar> Metric<S> {
    pub fn kind(&self) -> MetricKind {
        match self {
            Metric::Matrix(_) => MetricKind::Matrix,
            Metric::Line => MetricKind::Line,
            Metric::Euclidean => MetricKind::Euclidean,
            Metric::Ring { .. } => MetricKind::Ring,
        }
    }

    pub fn ring(circumference: S) -> Self {
        Metric::Ring { circumference }
    }

    /// Builds a ring point, reducing `position` modulo the circumference.
    /// Returns `None` if this is not a ring metric.
    pub fn ring_point(&self, position: S) -> Option<Point<S>> {
        match self {
            Metric::Ring { circumference: h } => {
                let turns = (position.clone() / h.clone()).floor();
                Some(Point::Ring(position - turns * h.clone()))
            }
            _ => None,
        }
    }

    pub fn check_point(&self, p: &Point<S>) -> Result<(), MetricError> {
        let ok = match (self, p) {
            (Metric::Matrix(rows), Point::Index(i)) => *i < rows.len(),
            (Metric::Line, Point::Line(_)) => true,
            (Metric::Euclidean, Point::Plane(..)) => true,
            (Metric::Ring { circumference: h }, Point::Ring(x)) => {
                !x.is_negative() && x < h
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(MetricError::InvalidPoint {
                point: format!("{p:?}"),
                kind: self.kind().as_str(),
            })
        }
    }

    pub fn distance(&self, a: &Point<S>, b: &Point<S>) -> Result<S, MetricError> {
        self.check_point(a)?;
        self.check_point(b)?;
        let d = match (self, a, b) {
            (Metric::Matrix(rows), Point::Index(i), Point::Index(j)) => rows[*i][*j].clone(),
            (Metric::Line, Point::Line(x), Point::Line(y)) => (x.clone() - y.clone()).abs(),
            (Metric::Euclidean, Point::Plane(x1, y1), Point::Plane(x2, y2)) => {
                let dx = x1.clone() - x2.clone();
                let dy = y1.clone() - y2.clone();
                (dx.clone() * dx + dy.clone() * dy)
                    .sqrt()
                    .ok_or(MetricError::ExactEuclidean)?
            }
            (Metric::Ring { circumference: h }, Point::Ring(x), Point::Ring(y)) => {
                let d = (x.clone() - y.clone()).abs();
                S::min_of(d.clone(), h.clone() - d)
            }
            _ => unreachable!("point kinds checked above"),
        };
        Ok(d)
    }

    /// Checks identity, symmetry, non-negativity and the triangle inequality.
    /// Only matrices need the exhaustive check; the other kinds are metrics by
    /// construction.
    pub fn validate(&self) -> Result<(), MetricViolation> {
        match self {
            Metric::Matrix(rows) => validate_matrix(rows),
            Metric::Ring { circumference } if !circumference.is_positive() => {
                Err(MetricViolation::NonPositiveCircumference)
            }
            _ => Ok(()),
        }
    }

    /// Rejects metric/mode combinations the engine cannot run.
    pub fn check_mode(&self) -> Result<(), MetricError> {
        if S::MODE == NumericMode::Exact && matches!(self, Metric::Euclidean) {
            return Err(MetricError::ExactEuclidean);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        match self {
            Metric::Matrix(rows) => json!({
                "kind": "matrix",
                "dist": rows
                    .iter()
                    .map(|r| r.iter().map(S::to_json).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
            }),
            Metric::Line => json!({ "kind": "line" }),
            Metric::Euclidean => json!({ "kind": "euclidean" }),
            Metric::Ring { circumference } => json!({ "kind": "ring", "h": circumference.to_json() }),
        }
    }
}

impl<S: Scalar> Point<S> {
    pub fn to_json(&self) -> Value {
        match self {
            Point::Index(i) => json!(i),
            Point::Line(x) | Point::Ring(x) => x.to_json(),
            Point::Plane(x, y) => json!([x.to_json(), y.to_json()]),
        }
    }
}

fn validate_matrix<S: Scalar>(rows: &[Vec<S>]) -> Result<(), MetricViolation> {
    let n = rows.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(MetricViolation::NotSquare {
                row: i,
                len: row.len(),
                expected: n,
            });
        }
    }
    for i in 0..n {
        if !rows[i][i].is_zero() {
            return Err(MetricViolation::Identity(i));
        }
        for j in 0..n {
            if rows[i][j].is_negative() {
                return Err(MetricViolation::Negative(i, j));
            }
            if rows[i][j] != rows[j][i] {
                return Err(MetricViolation::Asymmetry(i.min(j), i.max(j)));
            }
        }
    }
    for a in 0..n {
        for c in a + 1..n {
            for b in 0..n {
                if rows[a][c] > rows[a][b].clone() + rows[b][c].clone() {
                    return Err(MetricViolation::Triangle { a, b, c });
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Exact;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    fn matrix(rows: &[&[i64]]) -> Metric<Exact> {
        Metric::Matrix(
            rows.iter()
                .map(|r| r.iter().map(|&x| Exact::from_int(x)).collect())
                .collect(),
        )
    }

    #[test]
    fn line_distance() {
        let d = Metric::<Exact>::Line
            .distance(&Point::Line(q(3, 1)), &Point::Line(q(7, 1)))
            .unwrap();
        assert_eq!(d, q(4, 1));
    }

    #[test]
    fn ring_distance_takes_shorter_arc() {
        let m = Metric::ring(q(8, 1));
        let a = m.ring_point(q(1, 1)).unwrap();
        let b = m.ring_point(q(7, 1)).unwrap();
        assert_eq!(m.distance(&a, &b).unwrap(), q(2, 1));
    }

    #[test]
    fn ring_points_are_normalized() {
        let m = Metric::ring(q(1, 1));
        assert_eq!(m.ring_point(q(5, 4)), Some(Point::Ring(q(1, 4))));
        assert_eq!(m.ring_point(q(-1, 4)), Some(Point::Ring(q(3, 4))));
        assert_eq!(m.ring_point(q(1, 1)), Some(Point::Ring(q(0, 1))));
    }

    #[test]
    fn matrix_distance() {
        let m = matrix(&[&[0, 2], &[2, 0]]);
        assert_eq!(m.distance(&Point::Index(0), &Point::Index(1)).unwrap(), q(2, 1));
    }

    #[test]
    fn point_kind_mismatch() {
        let m = matrix(&[&[0, 2], &[2, 0]]);
        assert!(matches!(
            m.distance(&Point::Line(q(0, 1)), &Point::Index(1)),
            Err(MetricError::InvalidPoint { .. })
        ));
        assert!(m.distance(&Point::Index(0), &Point::Index(2)).is_err());
    }

    #[test]
    fn validate_examples() {
        assert_eq!(matrix(&[&[0, 1], &[1, 0]]).validate(), Ok(()));
        assert_eq!(
            matrix(&[&[0, 5], &[4, 0]]).validate(),
            Err(MetricViolation::Asymmetry(0, 1))
        );
        assert_eq!(
            matrix(&[&[0, 1, 10], &[1, 0, 1], &[10, 1, 0]]).validate(),
            Err(MetricViolation::Triangle { a: 0, b: 1, c: 2 })
        );
        assert_eq!(
            matrix(&[&[1, 1], &[1, 0]]).validate(),
            Err(MetricViolation::Identity(0))
        );
        assert!(matches!(
            matrix(&[&[0, 1], &[1]]).validate(),
            Err(MetricViolation::NotSquare { .. })
        ));
    }

    #[test]
    fn euclidean_needs_float_mode() {
        assert_eq!(Metric::<Exact>::Euclidean.check_mode(), Err(MetricError::ExactEuclidean));
        assert_eq!(Metric::<f64>::Euclidean.check_mode(), Ok(()));
        let d = Metric::<f64>::Euclidean
            .distance(&Point::Plane(0.0, 0.0), &Point::Plane(3.0, 4.0))
            .unwrap();
        assert!((d - 5.0).abs() < 1e-12);
    }

    fn assert_metric_axioms<S: Scalar>(m: &Metric<S>, a: &Point<S>, b: &Point<S>, c: &Point<S>) {
        let ab = m.distance(a, b).unwrap();
        let ba = m.distance(b, a).unwrap();
        let ac = m.distance(a, c).unwrap();
        let cb = m.distance(c, b).unwrap();
        assert!(S::approx_eq(&ab, &ba));
        assert!(m.distance(a, a).unwrap().is_zero());
        assert!(!ab.is_negative());
        assert!(S::approx_le(&ab, &(ac + cb)));
    }

    proptest! {
        #[test]
        fn line_axioms(a in -50i64..50, b in -50i64..50, c in -50i64..50, d in 1i64..5) {
            let m = Metric::<Exact>::Line;
            assert_metric_axioms(&m, &Point::Line(q(a, d)), &Point::Line(q(b, d)), &Point::Line(q(c, d)));
        }

        #[test]
        fn ring_axioms(h in 1i64..20, a in -100i64..100, b in -100i64..100, c in -100i64..100) {
            let m = Metric::ring(q(h, 1));
            let p = |x: i64| m.ring_point(q(x, 4)).unwrap();
            assert_metric_axioms(&m, &p(a), &p(b), &p(c));
        }

        #[test]
        fn plane_axioms(v in proptest::array::uniform6(-100.0f64..100.0)) {
            let m = Metric::<f64>::Euclidean;
            assert_metric_axioms(
                &m,
                &Point::Plane(v[0], v[1]),
                &Point::Plane(v[2], v[3]),
                &Point::Plane(v[4], v[5]),
            );
        }
    }
}
