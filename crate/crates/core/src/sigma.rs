//! The world function and its interval structure.
//!
//! `sigma(P, Q)` is the sole geometric primitive: a symmetric two-point scalar
//! with zero diagonal, equal to half the squared separation. Everything else in
//! the crate (scalar products, Gram determinants, objects) is built from it.
//!
//! Symmetry is structural, not approximate: every implementation evaluates a
//! form that produces bit-identical results under argument swap.

use crate::chart::Point;
use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Causal classification of a point pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalClass {
    /// Identical points.
    Coincident,
    /// sigma > 0.
    Timelike,
    /// sigma = 0 with distinct points.
    Lightlike,
    /// sigma < 0.
    Spacelike,
}

/// Interval data for one pair: sigma, the separation s when defined, class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub sigma: f64,
    /// sqrt(2 sigma); `None` when sigma < 0.
    pub s: Option<f64>,
    pub class: CausalClass,
}

/// A world function over points of a fixed dimension.
pub trait WorldFunction: Sync + Send {
    fn dimension(&self) -> usize;

    /// Two-point scalar. Symmetric with zero diagonal.
    fn sigma(&self, p: &Point, q: &Point) -> Result<f64>;

    fn interval(&self, p: &Point, q: &Point) -> Result<Interval> {
        let sigma = self.sigma(p, q)?;
        let class = if p == q {
            CausalClass::Coincident
        } else if sigma > 0.0 {
            CausalClass::Timelike
        } else if sigma < 0.0 {
            CausalClass::Spacelike
        } else {
            CausalClass::Lightlike
        };
        let s = if sigma >= 0.0 {
            Some((2.0 * sigma).sqrt())
        } else {
            None
        };
        Ok(Interval { sigma, s, class })
    }

    /// Scalar product of the vectors P0->Pi and P0->Pk:
    /// sigma(P0,Pi) + sigma(P0,Pk) - sigma(Pi,Pk).
    fn scalar_product(&self, p0: &Point, pi: &Point, pk: &Point) -> Result<f64> {
        let a = self.sigma(p0, pi)?;
        let b = self.sigma(p0, pk)?;
        let c = self.sigma(pi, pk)?;
        Ok(a + b - c)
    }
}

pub(crate) fn check_dim(expected: usize, p: &Point) -> Result<()> {
    if p.dim() != expected {
        return Err(Error::ChartMismatch {
            expected,
            got: p.dim(),
        });
    }
    Ok(())
}

/// Flat positive-definite space: sigma = |p - q|^2 / 2.
#[derive(Debug, Clone)]
pub struct Euclidean {
    dim: usize,
}

impl Euclidean {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                reason: "euclidean dimension must be positive".into(),
            });
        }
        Ok(Euclidean { dim })
    }
}

impl WorldFunction for Euclidean {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn sigma(&self, p: &Point, q: &Point) -> Result<f64> {
        check_dim(self.dim, p)?;
        check_dim(self.dim, q)?;
        // (a - b)^2 is bit-identical to (b - a)^2, so the sum is symmetric.
        let mut acc = 0.0;
        for (a, b) in p.coords().iter().zip(q.coords()) {
            let d = a - b;
            acc += d * d;
        }
        Ok(0.5 * acc)
    }
}

/// Flat spacetime with signature (+, -, -, ...): coordinate 0 is timelike.
#[derive(Debug, Clone)]
pub struct Minkowski {
    dim: usize,
}

impl Minkowski {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter {
                reason: "minkowski dimension must be at least 2".into(),
            });
        }
        Ok(Minkowski { dim })
    }

    /// sigma for raw coordinate slices; shared with the deformed model.
    pub(crate) fn sigma_coords(p: &[f64], q: &[f64]) -> f64 {
        let dt = p[0] - q[0];
        let mut acc = dt * dt;
        for (a, b) in p[1..].iter().zip(&q[1..]) {
            let d = a - b;
            acc -= d * d;
        }
        0.5 * acc
    }
}

impl WorldFunction for Minkowski {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn sigma(&self, p: &Point, q: &Point) -> Result<f64> {
        check_dim(self.dim, p)?;
        check_dim(self.dim, q)?;
        Ok(Minkowski::sigma_coords(p.coords(), q.coords()))
    }
}

/// World function given by an explicit symmetric value table over a point list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabulatedSigma {
    points: Vec<Point>,
    values: Vec<Vec<f64>>,
}

impl TabulatedSigma {
    /// Validates shape, finiteness, zero diagonal, and exact symmetry.
    pub fn new(points: Vec<Point>, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::TabulatedInvalid {
                reason: "empty point list".into(),
            });
        }
        let dim = points[0].dim();
        if points.iter().any(|p| p.dim() != dim) {
            return Err(Error::TabulatedInvalid {
                reason: "points of mixed dimension".into(),
            });
        }
        if values.len() != n || values.iter().any(|row| row.len() != n) {
            return Err(Error::TabulatedInvalid {
                reason: format!("value table must be {n}x{n}"),
            });
        }
        for i in 0..n {
            if values[i][i] != 0.0 {
                return Err(Error::TabulatedInvalid {
                    reason: format!("diagonal entry ({i},{i}) is {}", values[i][i]),
                });
            }
            for j in 0..n {
                if !values[i][j].is_finite() {
                    return Err(Error::TabulatedInvalid {
                        reason: format!("non-finite entry at ({i},{j})"),
                    });
                }
                if values[i][j] != values[j][i] {
                    return Err(Error::TabulatedInvalid {
                        reason: format!("asymmetric entries at ({i},{j})"),
                    });
                }
            }
        }
        Ok(TabulatedSigma { points, values })
    }

    /// Skips validation. Intended for fault injection in diagnostics and tests;
    /// the loading path always goes through `new`.
    pub fn from_parts_unchecked(points: Vec<Point>, values: Vec<Vec<f64>>) -> Self {
        TabulatedSigma { points, values }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    fn index_of(&self, p: &Point) -> Result<usize> {
        self.points
            .iter()
            .position(|q| q == p)
            .ok_or(Error::PointNotTabulated)
    }
}

impl WorldFunction for TabulatedSigma {
    fn dimension(&self) -> usize {
        self.points[0].dim()
    }

    fn sigma(&self, p: &Point, q: &Point) -> Result<f64> {
        let i = self.index_of(p)?;
        let j = self.index_of(q)?;
        Ok(self.values[i][j])
    }
}
