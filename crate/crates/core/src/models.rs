//! Concrete non-flat world-function models: the deformed flat spacetime with a
//! constant quantum offset, and the plane with a circular obstruction whose
//! sigma comes from shortest escape paths.

use crate::chart::Point;
use crate::error::Error;
use crate::gram::{gram, GramMatrix};
use crate::sigma::{check_dim, Minkowski, WorldFunction};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// What to do when the deformed sigma is queried in its undetermined band
/// 0 < sigma_M <= sigma0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    /// Refuse with an error.
    #[default]
    Error,
    /// Interpolate linearly: sigma_M * (1 + d0 / sigma0). Continuous at both
    /// ends of the band.
    LinearRamp,
}

/// Parameters of the deformed spacetime. `d0` is the single opaque deformation
/// constant added above the threshold; callers never pass its physical
/// ingredients separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformedParams {
    pub d0: f64,
    pub sigma0: f64,
    pub gap_policy: GapPolicy,
    pub dimension: usize,
}

impl DeformedParams {
    pub fn new(d0: f64, sigma0: f64, gap_policy: GapPolicy, dimension: usize) -> Result<Self> {
        if !d0.is_finite() || d0 < 0.0 {
            return Err(Error::InvalidParameter {
                reason: format!("d0 must be finite and nonnegative, got {d0}"),
            });
        }
        if !sigma0.is_finite() || sigma0 <= 0.0 {
            return Err(Error::InvalidParameter {
                reason: format!("sigma0 must be finite and positive, got {sigma0}"),
            });
        }
        if dimension < 2 {
            return Err(Error::InvalidParameter {
                reason: "deformed spacetime dimension must be at least 2".into(),
            });
        }
        Ok(DeformedParams {
            d0,
            sigma0,
            gap_policy,
            dimension,
        })
    }

    /// sigma0 defaults to d0. A zero d0 means the undeformed limit; the band
    /// is empty then and sigma0 is irrelevant.
    pub fn with_d0(d0: f64, gap_policy: GapPolicy, dimension: usize) -> Result<Self> {
        let sigma0 = if d0 > 0.0 { d0 } else { 1.0 };
        DeformedParams::new(d0, sigma0, gap_policy, dimension)
    }
}

/// Flat spacetime sigma shifted by a constant above the threshold:
/// sigma = sigma_M + d0 for sigma_M > sigma0, sigma_M for sigma_M < 0, and the
/// gap policy decides the band in between. Spacelike intervals are untouched.
#[derive(Debug, Clone)]
pub struct DeformedSpacetime {
    pub params: DeformedParams,
}

impl DeformedSpacetime {
    pub fn new(params: DeformedParams) -> Self {
        DeformedSpacetime { params }
    }

    /// Branch logic over a precomputed flat value. Exposed so derivative
    /// pipelines can drive it with raw coordinates.
    pub fn apply(&self, sigma_m: f64) -> Result<f64> {
        let p = &self.params;
        if p.d0 == 0.0 {
            return Ok(sigma_m);
        }
        if sigma_m < 0.0 {
            Ok(sigma_m)
        } else if sigma_m == 0.0 {
            // Both branch limits vanish here; the diagonal stays exactly zero.
            Ok(0.0)
        } else if sigma_m > p.sigma0 {
            Ok(sigma_m + p.d0)
        } else {
            match p.gap_policy {
                GapPolicy::Error => Err(Error::GapUndefined),
                GapPolicy::LinearRamp => Ok(sigma_m * (1.0 + p.d0 / p.sigma0)),
            }
        }
    }

    pub fn sigma_coords(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        self.apply(Minkowski::sigma_coords(p, q))
    }
}

impl WorldFunction for DeformedSpacetime {
    fn dimension(&self) -> usize {
        self.params.dimension
    }

    fn sigma(&self, p: &Point, q: &Point) -> Result<f64> {
        check_dim(self.params.dimension, p)?;
        check_dim(self.params.dimension, q)?;
        self.sigma_coords(p.coords(), q.coords())
    }
}

/// Result of the transverse root search for the deformed tube shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessResult {
    /// Smallest positive offset where F2 crosses zero; 0 when it never does.
    pub thickness: f64,
    /// Bracket that certified the sign change, when one was found.
    pub bracket: Option<(f64, f64)>,
    /// Scale-normalized |F2| at the returned offset.
    pub residual: f64,
}

fn f2_at_offset(
    wf: &DeformedSpacetime,
    p0: &Point,
    p1: &Point,
    ray_base: &[f64],
    direction: &[f64],
    d: f64,
) -> Result<GramMatrix> {
    let coords: Vec<f64> = ray_base
        .iter()
        .zip(direction)
        .map(|(b, dir)| b + d * dir)
        .collect();
    let r = Point::new(coords)?;
    gram(wf, p0, &[p1.clone(), r])
}

/// Root-finds F2(P0, P1, R(d)) = 0 along R(d) = midpoint(P0,P1) + d * direction.
///
/// The offset d is measured in units of the direction vector as given. The scan
/// looks for the first strict sign change inside `search_bounds`; absence of
/// one means the tube has collapsed onto its axis and the thickness is zero.
pub fn tube_thickness(
    params: DeformedParams,
    axis: (&Point, &Point),
    direction: &Point,
    search_bounds: (f64, f64),
) -> Result<ThicknessResult> {
    let wf = DeformedSpacetime::new(params);
    let (p0, p1) = axis;
    check_dim(params.dimension, p0)?;
    check_dim(params.dimension, p1)?;
    check_dim(params.dimension, direction)?;
    let sigma_m_axis = Minkowski::sigma_coords(p0.coords(), p1.coords());
    if sigma_m_axis <= params.sigma0 && params.d0 > 0.0 {
        return Err(Error::InvalidParameter {
            reason: format!(
                "axis must be timelike with flat sigma above sigma0 (got {sigma_m_axis})"
            ),
        });
    }
    if sigma_m_axis <= 0.0 {
        return Err(Error::InvalidParameter {
            reason: "axis must be timelike".into(),
        });
    }
    let (lo, hi) = search_bounds;
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::InvalidParameter {
            reason: format!("empty search bounds [{lo}, {hi}]"),
        });
    }

    let ray_base: Vec<f64> = p0
        .coords()
        .iter()
        .zip(p1.coords())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let f2 = |d: f64| -> Result<f64> {
        Ok(f2_at_offset(&wf, p0, p1, &ray_base, direction.coords(), d)?.det)
    };

    const SCAN_STEPS: usize = 512;
    let step = (hi - lo) / SCAN_STEPS as f64;
    let mut prev_d = lo;
    let mut prev_f = f2(prev_d)?;
    let mut bracket = None;
    for i in 1..=SCAN_STEPS {
        let d = lo + step * i as f64;
        let f = f2(d)?;
        if prev_f > 0.0 && f < 0.0 || prev_f < 0.0 && f > 0.0 {
            bracket = Some((prev_d, d));
            break;
        }
        prev_d = d;
        prev_f = f;
    }

    let Some((mut a, mut b)) = bracket else {
        return Ok(ThicknessResult {
            thickness: 0.0,
            bracket: None,
            residual: 0.0,
        });
    };

    let mut fa = f2(a)?;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f2(mid)?;
        if fa > 0.0 && fm > 0.0 || fa < 0.0 && fm < 0.0 {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    let root = 0.5 * (a + b);
    let g = f2_at_offset(&wf, p0, p1, &ray_base, direction.coords(), root)?;
    Ok(ThicknessResult {
        thickness: root,
        bracket: Some((a, b)),
        residual: g.det.abs() / g.scale,
    })
}

/// The plane with the closed unit disk removed; sigma is half the squared
/// length of the shortest path that stays outside the disk.
#[derive(Debug, Clone, Default)]
pub struct CutPlane;

impl CutPlane {
    pub fn new() -> Self {
        CutPlane
    }

    fn require_outside(p: &Point) -> Result<()> {
        let r2: f64 = p.coords().iter().map(|c| c * c).sum();
        if r2 <= 1.0 {
            return Err(Error::PointNotInCutRegion);
        }
        Ok(())
    }

    /// Distance from the origin to the closed segment pq.
    fn segment_distance_to_origin(p: &[f64], q: &[f64]) -> f64 {
        let dx = q[0] - p[0];
        let dy = q[1] - p[1];
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (-(p[0] * dx + p[1] * dy) / len2).clamp(0.0, 1.0)
        };
        let cx = p[0] + t * dx;
        let cy = p[1] + t * dy;
        (cx * cx + cy * cy).sqrt()
    }

    /// True when the straight chord pq dips into the open unit disk.
    pub fn chord_crosses_disk(p: &Point, q: &Point) -> bool {
        CutPlane::segment_distance_to_origin(p.coords(), q.coords()) < 1.0
    }

    /// Shortest-path length outside the disk: the chord when it clears the
    /// disk, otherwise tangent + arc + tangent the short way around.
    pub fn path_length(p: &Point, q: &Point) -> Result<f64> {
        CutPlane::require_outside(p)?;
        CutPlane::require_outside(q)?;
        // Canonical argument order makes the evaluation bit-symmetric.
        let (a, b) = match p.lex_cmp(q) {
            Ordering::Greater => (q.coords(), p.coords()),
            _ => (p.coords(), q.coords()),
        };
        if CutPlane::segment_distance_to_origin(a, b) >= 1.0 {
            let dx = a[0] - b[0];
            let dy = a[1] - b[1];
            return Ok((dx * dx + dy * dy).sqrt());
        }
        let ra = (a[0] * a[0] + a[1] * a[1]).sqrt();
        let rb = (b[0] * b[0] + b[1] * b[1]).sqrt();
        let tangent_a = (ra * ra - 1.0).sqrt();
        let tangent_b = (rb * rb - 1.0).sqrt();
        let cos_gamma = ((a[0] * b[0] + a[1] * b[1]) / (ra * rb)).clamp(-1.0, 1.0);
        let gamma = cos_gamma.acos();
        let arc = gamma - (1.0 / ra).acos() - (1.0 / rb).acos();
        Ok(tangent_a + tangent_b + arc.max(0.0))
    }
}

impl WorldFunction for CutPlane {
    fn dimension(&self) -> usize {
        2
    }

    fn sigma(&self, p: &Point, q: &Point) -> Result<f64> {
        check_dim(2, p)?;
        check_dim(2, q)?;
        let len = CutPlane::path_length(p, q)?;
        Ok(0.5 * len * len)
    }
}

/// One sampled pair in a convexity comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityRow {
    pub p: Point,
    pub q: Point,
    pub crosses_disk: bool,
    pub sigma_cut: f64,
    pub sigma_euclid: f64,
    /// sigma_cut - sigma_euclid; nonnegative because detours never shorten.
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub rows: Vec<ConvexityRow>,
    pub crossing_count: usize,
    pub missing_count: usize,
    pub max_miss_discrepancy: f64,
    pub min_cross_discrepancy: f64,
    pub max_cross_discrepancy: f64,
}

/// Compares the obstructed sigma against the flat one over explicit pairs.
pub fn convexity_discrepancy(pairs: &[(Point, Point)]) -> Result<ConvexityReport> {
    let cut = CutPlane::new();
    let flat = crate::sigma::Euclidean::new(2)?;
    let mut rows = Vec::with_capacity(pairs.len());
    let mut crossing_count = 0;
    let mut max_miss: f64 = 0.0;
    let mut min_cross = f64::INFINITY;
    let mut max_cross: f64 = 0.0;
    for (p, q) in pairs {
        let sigma_cut = cut.sigma(p, q)?;
        let sigma_euclid = flat.sigma(p, q)?;
        let crosses_disk = CutPlane::chord_crosses_disk(p, q);
        let discrepancy = sigma_cut - sigma_euclid;
        if crosses_disk {
            crossing_count += 1;
            min_cross = min_cross.min(discrepancy);
            max_cross = max_cross.max(discrepancy);
        } else {
            max_miss = max_miss.max(discrepancy.abs());
        }
        rows.push(ConvexityRow {
            p: p.clone(),
            q: q.clone(),
            crosses_disk,
            sigma_cut,
            sigma_euclid,
            discrepancy,
        });
    }
    let missing_count = rows.len() - crossing_count;
    Ok(ConvexityReport {
        rows,
        crossing_count,
        missing_count,
        max_miss_discrepancy: max_miss,
        min_cross_discrepancy: if crossing_count == 0 { 0.0 } else { min_cross },
        max_cross_discrepancy: max_cross,
    })
}

/// Chart-driven convexity comparison: keeps the lattice points lying outside
/// the unit disk and samples seeded pairs among them.
pub fn convexity_discrepancy_on_chart(
    chart: &crate::chart::PointChart,
    pairs: usize,
    seed: u64,
) -> Result<ConvexityReport> {
    use rand::{Rng, SeedableRng};
    if chart.dim() != 2 {
        return Err(Error::ChartMismatch {
            expected: 2,
            got: chart.dim(),
        });
    }
    let outside: Vec<Point> = chart
        .sample()
        .into_iter()
        .filter(|p| p.coords().iter().map(|c| c * c).sum::<f64>() > 1.0)
        .collect();
    if outside.len() < 2 {
        return Err(Error::InvalidParameter {
            reason: "chart has fewer than two points outside the disk".into(),
        });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut sampled = Vec::with_capacity(pairs);
    while sampled.len() < pairs {
        let i = rng.gen_range(0..outside.len());
        let j = rng.gen_range(0..outside.len());
        if i != j {
            sampled.push((outside[i].clone(), outside[j].clone()));
        }
    }
    convexity_discrepancy(&sampled)
}

/// Seeded rejection sampler for points outside the unit disk inside a box.
pub fn sample_outside_disk(
    seed: u64,
    count: usize,
    lo: f64,
    hi: f64,
) -> Result<Vec<Point>> {
    use rand::{Rng, SeedableRng};
    if !(lo < hi) || lo.is_nan() || hi.is_nan() {
        return Err(Error::InvalidParameter {
            reason: format!("empty sample box [{lo}, {hi}]"),
        });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = rng.gen_range(lo..hi);
        let y = rng.gen_range(lo..hi);
        if x * x + y * y > 1.0 {
            out.push(Point::from_slice(&[x, y]));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pt(coords: &[f64]) -> Point {
        Point::from_slice(coords)
    }

    fn params(d0: f64, policy: GapPolicy) -> DeformedParams {
        DeformedParams::with_d0(d0, policy, 4).unwrap()
    }

    #[test]
    fn deformed_branches() {
        let wf = DeformedSpacetime::new(params(0.1, GapPolicy::Error));
        // Timelike above the threshold: sigma_M = 1 -> 1 + d0.
        let p = pt(&[0.0, 0.0, 0.0, 0.0]);
        let q = pt(&[2.0, 1.0, 1.0, 0.0]);
        assert_eq!(wf.sigma(&p, &q).unwrap(), 1.0 + 0.1);
        // Spacelike untouched, bit for bit.
        let s = pt(&[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(wf.sigma(&p, &s).unwrap().to_bits(), (-0.5f64).to_bits());
        // Diagonal exactly zero.
        assert_eq!(wf.sigma(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn gap_policies() {
        let erroring = DeformedSpacetime::new(params(0.1, GapPolicy::Error));
        assert!(matches!(erroring.apply(0.05), Err(Error::GapUndefined)));
        let ramp = DeformedSpacetime::new(params(0.1, GapPolicy::LinearRamp));
        assert_eq!(ramp.apply(0.05).unwrap(), 0.1);
    }

    #[test]
    fn gap_error_message_mentions_the_gap() {
        let wf = DeformedSpacetime::new(params(0.1, GapPolicy::Error));
        let msg = wf.apply(0.05).unwrap_err().to_string();
        assert!(msg.contains("undefined in gap"), "got: {msg}");
    }

    #[test]
    fn ramp_is_continuous_at_band_edges() {
        let wf = DeformedSpacetime::new(params(0.1, GapPolicy::LinearRamp));
        let eps = 1e-9;
        let at = |s: f64| wf.apply(s).unwrap();
        assert!((at(eps) - at(0.0)).abs() <= 3e-9);
        assert!((at(-eps) - at(0.0)).abs() <= 3e-9);
        assert!((at(0.1 + eps) - at(0.1)).abs() <= 3e-9);
    }

    #[test]
    fn zero_d0_reduces_to_flat_exactly() {
        let wf = DeformedSpacetime::new(params(0.0, GapPolicy::Error));
        let m = Minkowski::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = pt(&[
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ]);
            let q = pt(&[
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ]);
            assert_eq!(
                wf.sigma(&p, &q).unwrap().to_bits(),
                m.sigma(&p, &q).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn deformed_symmetry_is_bit_exact() {
        let wf = DeformedSpacetime::new(params(0.1, GapPolicy::LinearRamp));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = pt(&[
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ]);
            let q = pt(&[
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ]);
            assert_eq!(
                wf.sigma(&p, &q).unwrap().to_bits(),
                wf.sigma(&q, &p).unwrap().to_bits()
            );
        }
    }

    fn thickness_for(d0: f64) -> ThicknessResult {
        let p0 = pt(&[0.0, 0.0, 0.0, 0.0]);
        let p1 = pt(&[2.0, 0.0, 0.0, 0.0]);
        let dir = pt(&[0.0, 1.0, 0.0, 0.0]);
        tube_thickness(
            params(d0, GapPolicy::Error),
            (&p0, &p1),
            &dir,
            (0.0, 0.75),
        )
        .unwrap()
    }

    #[test]
    fn thickness_vanishes_without_deformation() {
        let t = thickness_for(0.0);
        assert_eq!(t.thickness, 0.0);
        assert!(t.bracket.is_none());
    }

    #[test]
    fn thickness_matches_closed_form_shell_radius() {
        // At the axis midpoint the shell radius solves
        // (T^2 + 2 d0) rho^2 = 2 d0 (T^2 - T t + t^2) + 3 d0^2 with T = 2, t = 1.
        for (d0, expected) in [
            (0.05, 0.075f64.sqrt()),
            (0.1, 0.15f64.sqrt()),
            (0.2, 0.3f64.sqrt()),
        ] {
            let t = thickness_for(d0);
            assert!(
                (t.thickness - expected).abs() <= 1e-8,
                "d0 = {d0}: got {} want {expected}",
                t.thickness
            );
            assert!(t.bracket.is_some());
            assert!(t.residual <= 1e-8, "d0 = {d0}: residual {}", t.residual);
        }
    }

    #[test]
    fn thickness_rejects_sub_threshold_axis() {
        let p0 = pt(&[0.0, 0.0, 0.0, 0.0]);
        let p1 = pt(&[0.1, 0.0, 0.0, 0.0]);
        let dir = pt(&[0.0, 1.0, 0.0, 0.0]);
        assert!(tube_thickness(
            params(0.1, GapPolicy::Error),
            (&p0, &p1),
            &dir,
            (0.0, 0.5)
        )
        .is_err());
    }

    #[test]
    fn cutplane_worked_pair() {
        let cut = CutPlane::new();
        let p = pt(&[-2.0, 0.0]);
        let q = pt(&[2.0, 0.0]);
        let expected_len = 2.0 * 3.0f64.sqrt() + PI / 3.0;
        let len = CutPlane::path_length(&p, &q).unwrap();
        assert!((len - expected_len).abs() <= 1e-12 * expected_len);
        let sigma = cut.sigma(&p, &q).unwrap();
        let expected_sigma = 0.5 * expected_len * expected_len;
        assert!((sigma - expected_sigma).abs() <= 1e-12 * expected_sigma);
        // Displayed reference values.
        assert!((sigma - 10.176).abs() < 1e-3);
        assert!((sigma - 8.0 - 2.176).abs() < 1e-3);
    }

    #[test]
    fn cutplane_clear_chord_is_exactly_flat() {
        let cut = CutPlane::new();
        let flat = crate::sigma::Euclidean::new(2).unwrap();
        let p = pt(&[1.2, 1.1]);
        let q = pt(&[2.5, 1.7]);
        assert!(!CutPlane::chord_crosses_disk(&p, &q));
        assert_eq!(
            cut.sigma(&p, &q).unwrap().to_bits(),
            flat.sigma(&p, &q).unwrap().to_bits()
        );
    }

    #[test]
    fn cutplane_rejects_disk_points() {
        let cut = CutPlane::new();
        let inside = pt(&[0.5, 0.0]);
        let outside = pt(&[2.0, 0.0]);
        let err = cut.sigma(&inside, &outside).unwrap_err();
        assert_eq!(err.to_string(), "point not in L2o");
        // Boundary points are excluded too: the region is open.
        let boundary = pt(&[1.0, 0.0]);
        assert!(cut.sigma(&boundary, &outside).is_err());
    }

    #[test]
    fn cutplane_symmetry_and_diagonal() {
        let cut = CutPlane::new();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let pts = sample_outside_disk(rng.gen(), 60, -3.0, 3.0).unwrap();
        for i in 0..pts.len() {
            assert_eq!(cut.sigma(&pts[i], &pts[i]).unwrap(), 0.0);
            for j in (i + 1)..pts.len() {
                assert_eq!(
                    cut.sigma(&pts[i], &pts[j]).unwrap().to_bits(),
                    cut.sigma(&pts[j], &pts[i]).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn cutplane_never_shorter_than_flat() {
        let flat = crate::sigma::Euclidean::new(2).unwrap();
        let cut = CutPlane::new();
        let pts = sample_outside_disk(77, 80, -3.0, 3.0).unwrap();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let sc = cut.sigma(&pts[i], &pts[j]).unwrap();
                let se = flat.sigma(&pts[i], &pts[j]).unwrap();
                assert!(sc >= se - 1e-12 * se.abs().max(1.0));
                if CutPlane::chord_crosses_disk(&pts[i], &pts[j]) {
                    assert!(sc > se);
                }
            }
        }
    }

    #[test]
    fn cutplane_path_metric_triangle_inequality() {
        let cut = CutPlane::new();
        let pts = sample_outside_disk(5, 40, -2.5, 2.5).unwrap();
        let rho = |a: &Point, b: &Point| (2.0 * cut.sigma(a, b).unwrap()).sqrt();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                for k in 0..pts.len() {
                    let lhs = rho(&pts[i], &pts[k]);
                    let rhs = rho(&pts[i], &pts[j]) + rho(&pts[j], &pts[k]);
                    assert!(
                        lhs <= rhs + 1e-12 * lhs.max(1.0),
                        "triangle violated at ({i},{j},{k})"
                    );
                }
            }
        }
    }

    #[test]
    fn cutplane_unobstructed_frozen_value() {
        let cut = CutPlane::new();
        let sigma = cut.sigma(&pt(&[0.0, 2.0]), &pt(&[3.0, 2.0])).unwrap();
        assert_eq!(sigma, 4.5);
    }

    #[test]
    fn convexity_on_chart_spans_both_classes() {
        let chart = crate::chart::PointChart::new(
            vec![(-3.0, 3.0), (-3.0, 3.0)],
            vec![13, 13],
        )
        .unwrap();
        let report = convexity_discrepancy_on_chart(&chart, 200, 9).unwrap();
        assert_eq!(report.rows.len(), 200);
        assert!(report.crossing_count > 0);
        assert!(report.missing_count > 0);
        assert!(report.max_miss_discrepancy <= 1e-12);
        assert!(report.min_cross_discrepancy > 0.0);
    }

    #[test]
    fn convexity_report_classifies_both_ways() {
        let pairs = vec![
            (pt(&[-2.0, 0.0]), pt(&[2.0, 0.0])),
            (pt(&[1.5, 1.5]), pt(&[2.5, 1.5])),
        ];
        let report = convexity_discrepancy(&pairs).unwrap();
        assert_eq!(report.crossing_count, 1);
        assert_eq!(report.missing_count, 1);
        assert!(report.max_miss_discrepancy <= 1e-12);
        assert!(report.min_cross_discrepancy > 0.0);
        assert!(report.rows[0].crosses_disk);
        assert!(!report.rows[1].crosses_disk);
    }
}
