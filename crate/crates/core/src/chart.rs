//! Points and rectangular coordinate charts.
//!
//! A chart is an axis-aligned box with a per-axis sample count. Sampling
//! produces a deterministic row-major lattice (first axis slowest), which every
//! sweep in the crate relies on for reproducible ordering.

use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// A point in chart coordinates. Coordinates are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        for (index, c) in coords.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::NonFinitePoint { index });
            }
        }
        Ok(Point(coords))
    }

    /// Panics on non-finite input; use in code paths that already validated.
    pub fn from_slice(coords: &[f64]) -> Self {
        Point::new(coords.to_vec()).expect("finite coordinates")
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Euclidean distance in chart coordinates (not a geometric statement).
    pub fn coord_distance(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Total lexicographic order; used to canonicalize unordered pairs.
    pub fn lex_cmp(&self, other: &Point) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Rectangular sampling region: per-axis closed bounds plus sample counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointChart {
    pub bounds: Vec<(f64, f64)>,
    pub resolution: Vec<usize>,
}

impl PointChart {
    pub fn new(bounds: Vec<(f64, f64)>, resolution: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidChart {
                reason: "chart needs at least one axis".into(),
            });
        }
        if bounds.len() != resolution.len() {
            return Err(Error::InvalidChart {
                reason: format!(
                    "{} bound intervals but {} resolution entries",
                    bounds.len(),
                    resolution.len()
                ),
            });
        }
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidChart {
                    reason: format!("axis {i} bounds [{lo}, {hi}] empty or non-finite"),
                });
            }
        }
        if let Some(i) = resolution.iter().position(|&r| r < 2) {
            return Err(Error::InvalidChart {
                reason: format!("axis {i} resolution must be at least 2"),
            });
        }
        Ok(PointChart { bounds, resolution })
    }

    /// Uniform chart: same bounds and resolution on every axis.
    pub fn uniform(dim: usize, lo: f64, hi: f64, resolution: usize) -> Result<Self> {
        PointChart::new(vec![(lo, hi); dim], vec![resolution; dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest axis span; derivative steps are scaled relative to this.
    pub fn extent(&self) -> f64 {
        self.bounds
            .iter()
            .map(|(lo, hi)| hi - lo)
            .fold(0.0, f64::max)
    }

    /// Coordinate of sample `k` on `axis`. Computed as lo + span * (k / (n-1))
    /// so that exactly representable fractions land exactly.
    pub fn coordinate(&self, axis: usize, k: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        let n = self.resolution[axis];
        lo + (hi - lo) * (k as f64 / (n - 1) as f64)
    }

    /// Point for a flat row-major index (first axis slowest).
    pub fn point_at(&self, mut index: usize) -> Point {
        let dim = self.dim();
        let mut coords = vec![0.0; dim];
        for axis in (0..dim).rev() {
            let n = self.resolution[axis];
            coords[axis] = self.coordinate(axis, index % n);
            index /= n;
        }
        Point(coords)
    }

    /// Full lattice in row-major order.
    pub fn sample(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.point_at(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_lattice_endpoints_and_midpoint() {
        let chart = PointChart::new(vec![(0.0, 1.0)], vec![3]).unwrap();
        let pts = chart.sample();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0].coords(), &[0.0]);
        assert_eq!(pts[1].coords(), &[0.5]);
        assert_eq!(pts[2].coords(), &[1.0]);
    }

    #[test]
    fn row_major_order_first_axis_slowest() {
        let chart = PointChart::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![2, 2]).unwrap();
        let pts = chart.sample();
        assert_eq!(pts[0].coords(), &[0.0, 0.0]);
        assert_eq!(pts[1].coords(), &[0.0, 1.0]);
        assert_eq!(pts[2].coords(), &[1.0, 0.0]);
        assert_eq!(pts[3].coords(), &[1.0, 1.0]);
    }

    #[test]
    fn lattice_hits_exact_fractions() {
        // 102/255 is exactly 0.4; the sample formula must reproduce the same
        // double as parsing "0.4".
        let chart = PointChart::new(vec![(0.0, 1.0)], vec![256]).unwrap();
        assert_eq!(chart.coordinate(0, 102), 0.4);
    }

    #[test]
    fn rejects_bad_charts() {
        assert!(PointChart::new(vec![], vec![]).is_err());
        assert!(PointChart::new(vec![(0.0, 1.0)], vec![1]).is_err());
        assert!(PointChart::new(vec![(1.0, 0.0)], vec![4]).is_err());
        assert!(PointChart::new(vec![(0.0, f64::NAN)], vec![4]).is_err());
        assert!(PointChart::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![4]).is_err());
    }

    #[test]
    fn point_rejects_non_finite() {
        assert!(Point::new(vec![0.0, f64::INFINITY]).is_err());
        assert!(Point::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn degenerate_axis_interval_is_allowed() {
        let chart = PointChart::new(vec![(2.0, 2.0), (0.0, 1.0)], vec![2, 2]).unwrap();
        for p in chart.sample() {
            assert_eq!(p.coords()[0], 2.0);
        }
    }
}
