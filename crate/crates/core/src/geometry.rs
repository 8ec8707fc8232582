//! Serializable geometry descriptions and their construction.
//!
//! A `GeometrySpec` is the JSON-facing recipe for a world function. The CLI
//! and test fixtures go through it; library callers can also construct the
//! concrete types directly.

use crate::chart::{Point, PointChart};
use crate::error::Error;
use crate::models::{CutPlane, DeformedParams, DeformedSpacetime, GapPolicy};
use crate::riemann::{sigma_from_metric, MetricField, MetricKind};
use crate::sigma::{Euclidean, Minkowski, TabulatedSigma, WorldFunction};
use crate::Result;
use serde::{Deserialize, Serialize};

/// World function induced by geodesics of a metric field. Each sigma call is
/// a boundary-value solve, so evaluations are comparatively expensive and
/// symmetric only to solver tolerance, not bitwise.
pub struct MetricWorld {
    field: MetricField,
}

impl MetricWorld {
    pub fn new(field: MetricField) -> Self {
        MetricWorld { field }
    }

    pub fn field(&self) -> &MetricField {
        &self.field
    }
}

impl WorldFunction for MetricWorld {
    fn dimension(&self) -> usize {
        self.field.dimension
    }

    fn sigma(&self, p: &Point, q: &Point) -> Result<f64> {
        sigma_from_metric(&self.field, p, q)
    }
}

fn default_deformed_dimension() -> usize {
    4
}

/// JSON description of a geometry. Tagged by `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    Euclidean {
        dimension: usize,
    },
    Minkowski {
        dimension: usize,
    },
    Deformed {
        d0: f64,
        /// Defaults to d0 (or 1.0 when d0 = 0).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma0: Option<f64>,
        #[serde(default)]
        gap_policy: GapPolicy,
        #[serde(default = "default_deformed_dimension")]
        dimension: usize,
    },
    CutPlane,
    Tabulated {
        points: Vec<Point>,
        values: Vec<Vec<f64>>,
    },
    Riemann {
        metric: MetricKind,
        domain: PointChart,
    },
}

fn invalid(e: Error) -> Error {
    Error::GeometrySpec {
        reason: e.to_string(),
    }
}

impl GeometrySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::GeometrySpec {
            reason: e.to_string(),
        })
    }

    pub fn dimension(&self) -> usize {
        match self {
            GeometrySpec::Euclidean { dimension } | GeometrySpec::Minkowski { dimension } => {
                *dimension
            }
            GeometrySpec::Deformed { dimension, .. } => *dimension,
            GeometrySpec::CutPlane => 2,
            GeometrySpec::Tabulated { points, .. } => {
                points.first().map(Point::dim).unwrap_or(0)
            }
            GeometrySpec::Riemann { domain, .. } => domain.dim(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn WorldFunction>> {
        match self {
            GeometrySpec::Euclidean { dimension } => Ok(Box::new(
                Euclidean::new(*dimension).map_err(invalid)?,
            )),
            GeometrySpec::Minkowski { dimension } => Ok(Box::new(
                Minkowski::new(*dimension).map_err(invalid)?,
            )),
            GeometrySpec::Deformed {
                d0,
                sigma0,
                gap_policy,
                dimension,
            } => {
                let params = match sigma0 {
                    Some(s) => DeformedParams::new(*d0, *s, *gap_policy, *dimension),
                    None => DeformedParams::with_d0(*d0, *gap_policy, *dimension),
                }
                .map_err(invalid)?;
                Ok(Box::new(DeformedSpacetime::new(params)))
            }
            GeometrySpec::CutPlane => Ok(Box::new(CutPlane::new())),
            GeometrySpec::Tabulated { points, values } => Ok(Box::new(
                TabulatedSigma::new(points.clone(), values.clone()).map_err(invalid)?,
            )),
            GeometrySpec::Riemann { metric, domain } => Ok(Box::new(MetricWorld::new(
                MetricField::new(metric.clone(), domain.clone()).map_err(invalid)?,
            ))),
        }
    }
}
