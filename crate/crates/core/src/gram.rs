//! Gram matrices of sigma-derived scalar products and the linear-dependence
//! test built on their determinants.
//!
//! The determinant F_n of the n x n matrix (P0Pi . P0Pk) vanishes exactly when
//! the vectors P0->Pi are linearly dependent. That zero set is what defines
//! lines and planes here, so the test is tolerance-based and reports a scale-
//! normalized residual alongside the verdict.

use crate::chart::Point;
use crate::error::Error;
use crate::sigma::WorldFunction;
use crate::Result;
use nalgebra::DMatrix;

/// Relative determinant tolerance. Small enough to keep lattice points one
/// grid step off a line out of the zero set on unit-scale charts, large enough
/// to absorb rounding in the sigma arithmetic feeding the entries.
pub const DEFAULT_GRAM_TOL: f64 = 1e-8;

/// Scalar-product Gram matrix for a base point and a list of tips.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub base: Point,
    pub tips: Vec<Point>,
    pub entries: DMatrix<f64>,
    /// Determinant via LU with partial pivoting.
    pub det: f64,
    /// Product of max(1, |diagonal entry|); normalizes the determinant test.
    pub scale: f64,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.tips.len()
    }
}

/// Builds the Gram matrix of (P0Pi . P0Pk) for all tip pairs.
///
/// Entries come out exactly symmetric because sigma is, so only the upper
/// triangle is evaluated.
pub fn gram<W: WorldFunction + ?Sized>(
    wf: &W,
    base: &Point,
    tips: &[Point],
) -> Result<GramMatrix> {
    if tips.is_empty() {
        return Err(Error::InvalidParameter {
            reason: "gram matrix needs at least one tip".into(),
        });
    }
    let n = tips.len();
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in i..n {
            let v = wf.scalar_product(base, &tips[i], &tips[k])?;
            entries[(i, k)] = v;
            entries[(k, i)] = v;
        }
    }
    let scale = (0..n).map(|i| entries[(i, i)].abs().max(1.0)).product();
    let det = entries.clone().lu().determinant();
    Ok(GramMatrix {
        base: base.clone(),
        tips: tips.to_vec(),
        entries,
        det,
        scale,
    })
}

/// Outcome of the relative-zero determinant test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DependenceCheck {
    pub dependent: bool,
    /// |det| / scale; compare against the tolerance used.
    pub residual: f64,
}

/// Tolerance test |det| <= tol * scale.
pub fn is_linearly_dependent(g: &GramMatrix, tol: f64) -> DependenceCheck {
    let residual = g.det.abs() / g.scale;
    DependenceCheck {
        dependent: residual <= tol,
        residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigma::{Euclidean, Minkowski};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(coords: &[f64]) -> Point {
        Point::from_slice(coords)
    }

    #[test]
    fn orthonormal_tips_give_unit_determinant() {
        let e = Euclidean::new(2).unwrap();
        let g = gram(
            &e,
            &pt(&[0.0, 0.0]),
            &[pt(&[1.0, 0.0]), pt(&[0.0, 1.0])],
        )
        .unwrap();
        assert_eq!(g.entries[(0, 0)], 1.0);
        assert_eq!(g.entries[(1, 1)], 1.0);
        assert_eq!(g.entries[(0, 1)], 0.0);
        assert_eq!(g.det, 1.0);
        let check = is_linearly_dependent(&g, DEFAULT_GRAM_TOL);
        assert!(!check.dependent);
    }

    #[test]
    fn single_tip_determinant_is_twice_sigma() {
        let e = Euclidean::new(2).unwrap();
        let p0 = pt(&[0.0, 0.0]);
        let p1 = pt(&[3.0, 4.0]);
        let g = gram(&e, &p0, &[p1.clone()]).unwrap();
        assert_eq!(g.det, 2.0 * e.sigma(&p0, &p1).unwrap());
    }

    #[test]
    fn collinear_tips_are_dependent() {
        let e = Euclidean::new(2).unwrap();
        let g = gram(
            &e,
            &pt(&[0.0, 0.0]),
            &[pt(&[1.0, 0.0]), pt(&[2.0, 0.0])],
        )
        .unwrap();
        let check = is_linearly_dependent(&g, DEFAULT_GRAM_TOL);
        assert!(check.dependent);
        assert!(check.residual <= 1e-12);
    }

    #[test]
    fn minkowski_dependence_without_coordinate_collinearity() {
        // Axis tip (0,1,0,0) is spacelike; (1,0,1,0) is not a multiple of it,
        // yet the Gram determinant vanishes: the indefinite scalar product
        // admits a degenerate two-vector span.
        let m = Minkowski::new(4).unwrap();
        let p0 = pt(&[0.0, 0.0, 0.0, 0.0]);
        let tip = pt(&[0.0, 1.0, 0.0, 0.0]);
        let r = pt(&[1.0, 0.0, 1.0, 0.0]);
        let g = gram(&m, &p0, &[tip, r]).unwrap();
        assert_eq!(g.det, 0.0);
        assert!(is_linearly_dependent(&g, DEFAULT_GRAM_TOL).dependent);
    }

    #[test]
    fn duplicate_tip_forces_dependence() {
        let e = Euclidean::new(3).unwrap();
        let p1 = pt(&[1.3, -0.2, 0.7]);
        let g = gram(&e, &pt(&[0.0, 0.0, 0.0]), &[p1.clone(), p1.clone()]).unwrap();
        let check = is_linearly_dependent(&g, DEFAULT_GRAM_TOL);
        assert!(check.dependent);
        assert!(check.residual <= 1e-10);
    }

    #[test]
    fn tip_permutation_preserves_absolute_determinant() {
        let e = Euclidean::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p0 = pt(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0]);
            let tips: Vec<Point> = (0..3)
                .map(|_| {
                    pt(&[
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    ])
                })
                .collect();
            let g0 = gram(&e, &p0, &tips).unwrap();
            let permuted = vec![tips[2].clone(), tips[0].clone(), tips[1].clone()];
            let g1 = gram(&e, &p0, &permuted).unwrap();
            let scale = g0.det.abs().max(1.0);
            assert!(
                (g0.det.abs() - g1.det.abs()).abs() <= 1e-12 * scale,
                "permutation changed |det|: {} vs {}",
                g0.det,
                g1.det
            );
        }
    }

    /// Independent oracle for the Euclidean case: rank of the coordinate
    /// difference matrix by singular-value thresholding.
    fn svd_full_rank(p0: &Point, tips: &[Point]) -> bool {
        let n = tips.len();
        let dim = p0.dim();
        let mat = DMatrix::from_fn(n, dim, |i, j| tips[i].coords()[j] - p0.coords()[j]);
        let sv = mat.svd(false, false).singular_values;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return false;
        }
        sv.iter().filter(|&&s| s > 1e-8 * max).count() == n
    }

    #[test]
    fn euclidean_dependence_agrees_with_svd_rank_oracle() {
        let e = Euclidean::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p0 = pt(&[0.0, 0.0, 0.0]);
        for trial in 0..1000 {
            let mut tips: Vec<Point> = (0..2)
                .map(|_| {
                    pt(&[
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    ])
                })
                .collect();
            let dependent_case = trial % 2 == 0;
            if dependent_case {
                // Last tip is an exact linear combination of the others.
                let a = rng.gen_range(-1.5..1.5);
                let b = rng.gen_range(-1.5..1.5);
                let combo: Vec<f64> = (0..3)
                    .map(|i| a * tips[0].coords()[i] + b * tips[1].coords()[i])
                    .collect();
                tips.push(pt(&combo));
            } else {
                tips.push(pt(&[
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ]));
            }
            let g = gram(&e, &p0, &tips).unwrap();
            let gram_dependent = is_linearly_dependent(&g, DEFAULT_GRAM_TOL).dependent;
            let oracle_dependent = !svd_full_rank(&p0, &tips);
            assert_eq!(
                gram_dependent, oracle_dependent,
                "trial {trial}: gram and svd oracle disagree (det {})",
                g.det
            );
        }
    }
}
