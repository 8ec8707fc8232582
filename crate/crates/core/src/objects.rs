//! Geometric objects built from sigma alone: tubes, planes, segments,
//! sections, broken lines, parallelism, and the dimension probe for sampled
//! point sets. Membership is always a predicate plus a normalized residual so
//! lattice sweeps can report how close the near-misses come.

use crate::chart::{Point, PointChart};
use crate::error::Error;
use crate::gram::{gram, is_linearly_dependent};
use crate::models::{DeformedParams, DeformedSpacetime};
use crate::sigma::WorldFunction;
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Triangle-equality tolerance; gentler than the Gram test because no
/// near-singular determinant is involved.
pub const DEFAULT_SEGMENT_TOL: f64 = 1e-9;
/// Tolerance on the sigma-equalities defining a section.
pub const DEFAULT_SECTION_TOL: f64 = 1e-9;
/// Tolerance on | |cosine| - 1 | for parallelism.
pub const DEFAULT_PARALLEL_TOL: f64 = 1e-9;
/// Spread directions below this fraction of the dominant spread count as
/// lattice noise, not extent.
pub const SPREAD_THRESHOLD: f64 = 0.05;
/// A spread spectrum needs several samples per dimension to mean anything.
pub const MIN_WINDOW_POPULATION_PER_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    /// Normalized defining-function value; comparable against the tolerance
    /// that produced `member`.
    pub residual: f64,
}

fn dependency_membership(
    wf: &dyn WorldFunction,
    p0: &Point,
    tips: &[Point],
    tol: f64,
) -> Result<Membership> {
    let g = gram(wf, p0, tips)?;
    let check = is_linearly_dependent(&g, tol);
    Ok(Membership {
        member: check.dependent,
        residual: check.residual,
    })
}

/// Is r on the tube with axis p0, p1? True iff the Gram determinant of the
/// two vectors from p0 vanishes.
pub fn tube_membership(
    wf: &dyn WorldFunction,
    p0: &Point,
    p1: &Point,
    r: &Point,
    tol: f64,
) -> Result<Membership> {
    // Exact comparison: a tube axis is degenerate only when sigma is exactly
    // zero (coincident points, or a lightlike pair in indefinite signature).
    if wf.sigma(p0, p1)? == 0.0 {
        return Err(Error::DegenerateAxis);
    }
    dependency_membership(wf, p0, &[p1.clone(), r.clone()], tol)
}

/// Is r on the n-plane determined by pn = [p0, tips...]? True iff appending r
/// makes the determining vectors linearly dependent. With a single tip this
/// is the tube predicate, evaluated through the same code path so the two
/// agree bit for bit.
pub fn plane_membership(
    wf: &dyn WorldFunction,
    pn: &[Point],
    r: &Point,
    tol: f64,
) -> Result<Membership> {
    if pn.len() < 2 {
        return Err(Error::InvalidParameter {
            reason: "plane needs a base point and at least one determining tip".into(),
        });
    }
    let (p0, tips) = pn.split_first().expect("len checked");
    let determining = gram(wf, p0, tips)?;
    if is_linearly_dependent(&determining, tol).dependent {
        return Err(Error::DependentDeterminingSet);
    }
    let mut with_r = tips.to_vec();
    with_r.push(r.clone());
    dependency_membership(wf, p0, &with_r, tol)
}

/// Is r between p and q, in the triangle-equality sense
/// S(p,r) + S(r,q) = S(p,q)? Residual is relative to S(p,q).
pub fn segment_membership(
    wf: &dyn WorldFunction,
    p: &Point,
    q: &Point,
    r: &Point,
    tol: f64,
) -> Result<Membership> {
    let spq = wf.sigma(p, q)?;
    if spq < 0.0 {
        return Err(Error::SpacelikeSegmentLeg);
    }
    if spq == 0.0 {
        return Err(Error::DegenerateAxis);
    }
    let spr = wf.sigma(p, r)?;
    let srq = wf.sigma(r, q)?;
    if spr < 0.0 || srq < 0.0 {
        return Err(Error::SpacelikeSegmentLeg);
    }
    let s_pq = (2.0 * spq).sqrt();
    let defect = (2.0 * spr).sqrt() + (2.0 * srq).sqrt() - s_pq;
    let residual = defect.abs() / s_pq;
    Ok(Membership {
        member: residual <= tol,
        residual,
    })
}

/// sigma(P0,Q1) + sigma(P1,Q0) - sigma(P0,Q0) - sigma(P1,Q1).
///
/// In Euclidean coordinates this expands to exactly (P1-P0)·(Q1-Q0); the same
/// combination read through any other sigma defines the scalar product of two
/// vectors with distinct origins. With q0 = p0 the grouping below reduces to
/// the one-origin scalar product bit for bit (sigma(p0,p0) is exactly zero and
/// f64 addition commutes).
pub fn two_origin_scalar_product(
    wf: &dyn WorldFunction,
    p0: &Point,
    p1: &Point,
    q0: &Point,
    q1: &Point,
) -> Result<f64> {
    Ok(((wf.sigma(p0, q1)? + wf.sigma(p1, q0)?) - wf.sigma(p0, q0)?) - wf.sigma(p1, q1)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelismCheck {
    pub cosine: f64,
    /// | |cosine| - 1 |; antiparallel counts as parallel because orientation
    /// is not part of the line objects being compared.
    pub deviation: f64,
    pub parallel: bool,
}

/// Parallelism of the vectors p0->p1 and q0->q1 through sigma alone.
/// Defined only for strictly positive squared lengths; zero, lightlike, and
/// spacelike legs are refused.
pub fn parallel(
    wf: &dyn WorldFunction,
    p0: &Point,
    p1: &Point,
    q0: &Point,
    q1: &Point,
    tol: f64,
) -> Result<ParallelismCheck> {
    let sp2 = 2.0 * wf.sigma(p0, p1)?;
    let sq2 = 2.0 * wf.sigma(q0, q1)?;
    if !(sp2 > 0.0) || !(sq2 > 0.0) {
        return Err(Error::ParallelismUndefined);
    }
    let product = two_origin_scalar_product(wf, p0, p1, q0, q1)?;
    // One sqrt of the product keeps parallel(v, v) at cosine exactly 1.
    let cosine = product / (sp2 * sq2).sqrt();
    let deviation = (cosine.abs() - 1.0).abs();
    Ok(ParallelismCheck {
        cosine,
        deviation,
        parallel: deviation <= tol,
    })
}

/// Three mutually checked segments exhibiting a ~ b, b ~ c, a !~ c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntransitivityWitness {
    pub a: (Point, Point),
    pub b: (Point, Point),
    pub c: (Point, Point),
    pub ab: ParallelismCheck,
    pub bc: ParallelismCheck,
    pub ac: ParallelismCheck,
}

/// Searches for an intransitivity witness among timelike segments of the
/// deformed spacetime.
///
/// Candidates are built analytically: three segments of equal flat squared
/// length u at rapidities 0, phi, 2phi with cosh(phi) = 1 + 2 d0 / u, which
/// makes the deformed cosine of adjacent pairs exactly 1; the seeded sampler
/// varies u. Each candidate is then verified through the actual parallelism
/// predicate. Without deformation phi collapses to 0 and no candidate can
/// succeed, so the search returns None.
pub fn find_intransitivity_witness(
    params: DeformedParams,
    seed: u64,
    tol: f64,
) -> Result<Option<IntransitivityWitness>> {
    let wf = DeformedSpacetime::new(params);
    let dim = params.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let make_point = |t: f64, x: f64| {
        let mut coords = vec![0.0; dim];
        coords[0] = t;
        coords[1] = x;
        Point::from_slice(&coords)
    };
    for _ in 0..32 {
        // Flat squared length, kept well above the undetermined band.
        let u = 2.0 * params.sigma0.max(0.25) * rng.gen_range(2.0..10.0);
        let tau = u.sqrt();
        let phi = (1.0 + 2.0 * params.d0 / u).acosh();
        // Stacking along t keeps every cross interval timelike and far above
        // sigma0, so the constant offsets cancel in the two-origin product.
        let off = 10.0 * tau.max(1.0);
        let a = (make_point(0.0, 0.0), make_point(tau, 0.0));
        let b = (
            make_point(off, 0.0),
            make_point(off + tau * phi.cosh(), tau * phi.sinh()),
        );
        let c = (
            make_point(2.0 * off, 0.0),
            make_point(2.0 * off + tau * (2.0 * phi).cosh(), tau * (2.0 * phi).sinh()),
        );
        let ab = parallel(&wf, &a.0, &a.1, &b.0, &b.1, tol)?;
        let bc = parallel(&wf, &b.0, &b.1, &c.0, &c.1, tol)?;
        let ac = parallel(&wf, &a.0, &a.1, &c.0, &c.1, tol)?;
        if ab.parallel && bc.parallel && !ac.parallel {
            return Ok(Some(IntransitivityWitness { a, b, c, ab, bc, ac }));
        }
    }
    Ok(None)
}

/// Seeded stress test of parallelism transitivity in an arbitrary geometry.
///
/// Each trial builds three segments sharing one coordinate direction (scaled
/// copies at shifted origins), so that a ~ b and b ~ c hold by construction
/// wherever the geometry reproduces Euclidean behavior, then checks a ~ c.
/// Returns the first chain whose closing check fails, or None once the trial
/// budget is spent. Trials whose legs are not timelike are skipped, which
/// keeps the sweep meaningful for indefinite geometries.
pub fn transitivity_search(
    wf: &dyn WorldFunction,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<Option<IntransitivityWitness>> {
    let dim = wf.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(lo..hi)).collect()
    };
    for _ in 0..trials {
        let base_a = draw(&mut rng, -3.0, 3.0);
        let base_b = draw(&mut rng, -3.0, 3.0);
        let base_c = draw(&mut rng, -3.0, 3.0);
        let v = draw(&mut rng, -1.0, 1.0);
        if v.iter().map(|c| c * c).sum::<f64>() < 1e-2 {
            continue;
        }
        let s1 = rng.gen_range(0.3..3.0);
        let s2 = rng.gen_range(0.3..3.0);
        let tip = |base: &[f64], scale: f64| {
            Point::from_slice(
                &base
                    .iter()
                    .zip(&v)
                    .map(|(b, c)| b + scale * c)
                    .collect::<Vec<_>>(),
            )
        };
        let a = (Point::from_slice(&base_a), tip(&base_a, 1.0));
        let b = (Point::from_slice(&base_b), tip(&base_b, s1));
        let c = (Point::from_slice(&base_c), tip(&base_c, s1 * s2));
        let checks = (
            parallel(wf, &a.0, &a.1, &b.0, &b.1, tol),
            parallel(wf, &b.0, &b.1, &c.0, &c.1, tol),
            parallel(wf, &a.0, &a.1, &c.0, &c.1, tol),
        );
        let (Ok(ab), Ok(bc), Ok(ac)) = checks else {
            continue;
        };
        if ab.parallel && bc.parallel && !ac.parallel {
            return Ok(Some(IntransitivityWitness { a, b, c, ab, bc, ac }));
        }
    }
    Ok(None)
}

/// What a lattice sweep is looking for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectKind {
    Tube {
        p0: Point,
        p1: Point,
    },
    /// Base point first, then the determining tips.
    Plane {
        points: Vec<Point>,
    },
    Segment {
        p: Point,
        q: Point,
    },
    Section {
        p0: Point,
        p1: Point,
        through: Point,
    },
    BrokenLine {
        vertices: Vec<Point>,
    },
}

// No deny_unknown_fields here: it cannot coexist with the flattened tag.
// Typos in object fields surface as missing-field errors instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    #[serde(flatten)]
    pub kind: ObjectKind,
    pub tol: f64,
}

/// Lattice points passing a membership predicate, in row-major chart order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSample {
    pub spec: ObjectSpec,
    pub chart: PointChart,
    pub members: Vec<Point>,
    pub residuals: Vec<f64>,
}

impl ObjectSample {
    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    /// CSV with header x0,...,x{n-1},residual; floats carry full precision so
    /// reruns can be compared byte for byte.
    pub fn to_csv(&self) -> String {
        let dim = self.chart.dim();
        let mut out = String::new();
        for axis in 0..dim {
            let _ = write!(out, "x{axis},");
        }
        out.push_str("residual\n");
        for (point, residual) in self.members.iter().zip(&self.residuals) {
            for c in point.coords() {
                let _ = write!(out, "{c:.16e},");
            }
            let _ = writeln!(out, "{residual:.16e}");
        }
        out
    }

    pub fn summary<'a>(
        &'a self,
        dimension_estimate: Option<&'a DimensionEstimate>,
    ) -> SampleSummary<'a> {
        SampleSummary {
            spec: &self.spec,
            member_count: self.member_count(),
            dimension_estimate,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary<'a> {
    pub spec: &'a ObjectSpec,
    pub member_count: usize,
    pub dimension_estimate: Option<&'a DimensionEstimate>,
}

/// Row-major sweep of a predicate over the whole chart. The lattice is
/// partitioned across workers but reassembled in index order, so the output
/// does not depend on the worker count.
fn scan<F>(chart: &PointChart, eval: F) -> Result<(Vec<usize>, Vec<f64>)>
where
    F: Fn(&Point) -> Result<Option<f64>> + Sync,
{
    let hits: Vec<Option<(usize, f64)>> = (0..chart.len())
        .into_par_iter()
        .map(|i| {
            let point = chart.point_at(i);
            eval(&point).map(|hit| hit.map(|residual| (i, residual)))
        })
        .collect::<Result<_>>()?;
    let mut indices = Vec::new();
    let mut residuals = Vec::new();
    for (i, residual) in hits.into_iter().flatten() {
        indices.push(i);
        residuals.push(residual);
    }
    Ok((indices, residuals))
}

fn member_hit(m: Membership) -> Option<f64> {
    if m.member {
        Some(m.residual)
    } else {
        None
    }
}

fn scan_segment(
    wf: &dyn WorldFunction,
    chart: &PointChart,
    p: &Point,
    q: &Point,
    tol: f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    // Vet the leg itself up front so a spacelike or degenerate pair still
    // errors; unreachable lattice points are merely non-members.
    let spq = wf.sigma(p, q)?;
    if spq < 0.0 {
        return Err(Error::SpacelikeSegmentLeg);
    }
    if spq == 0.0 {
        return Err(Error::DegenerateAxis);
    }
    scan(chart, |r| match segment_membership(wf, p, q, r, tol) {
        Ok(m) => Ok(member_hit(m)),
        Err(Error::SpacelikeSegmentLeg) => Ok(None),
        Err(e) => Err(e),
    })
}

/// Sweeps the chart for the points of a geometric object.
pub fn sample_object(
    wf: &dyn WorldFunction,
    chart: &PointChart,
    spec: &ObjectSpec,
) -> Result<ObjectSample> {
    if chart.dim() != wf.dimension() {
        return Err(Error::ChartMismatch {
            expected: wf.dimension(),
            got: chart.dim(),
        });
    }
    let tol = spec.tol;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            reason: format!("membership tolerance must be positive, got {tol}"),
        });
    }
    let (indices, residuals) = match &spec.kind {
        ObjectKind::Tube { p0, p1 } => {
            if wf.sigma(p0, p1)? == 0.0 {
                return Err(Error::DegenerateAxis);
            }
            scan(chart, |r| {
                dependency_membership(wf, p0, &[p1.clone(), r.clone()], tol).map(member_hit)
            })?
        }
        ObjectKind::Plane { points } => {
            if points.len() < 2 {
                return Err(Error::InvalidParameter {
                    reason: "plane needs a base point and at least one determining tip".into(),
                });
            }
            let (p0, tips) = points.split_first().expect("len checked");
            let determining = gram(wf, p0, tips)?;
            if is_linearly_dependent(&determining, tol).dependent {
                return Err(Error::DependentDeterminingSet);
            }
            scan(chart, |r| {
                let mut with_r = tips.to_vec();
                with_r.push(r.clone());
                dependency_membership(wf, p0, &with_r, tol).map(member_hit)
            })?
        }
        ObjectKind::Segment { p, q } => scan_segment(wf, chart, p, q, tol)?,
        ObjectKind::Section { p0, p1, through } => {
            if !tube_membership(wf, p0, p1, through, tol)?.member {
                return Err(Error::PointNotOnTube);
            }
            let s0 = wf.sigma(p0, through)?;
            let s1 = wf.sigma(p1, through)?;
            let scale0 = s0.abs().max(1.0);
            let scale1 = s1.abs().max(1.0);
            scan(chart, |r| {
                let r0 = (wf.sigma(p0, r)? - s0).abs() / scale0;
                let r1 = (wf.sigma(p1, r)? - s1).abs() / scale1;
                Ok(if r0 <= tol && r1 <= tol {
                    Some(r0.max(r1))
                } else {
                    None
                })
            })?
        }
        ObjectKind::BrokenLine { vertices } => {
            if vertices.len() < 2 {
                return Err(Error::InvalidParameter {
                    reason: "broken line needs at least two vertices".into(),
                });
            }
            // Union of the leg samples; a point on several legs keeps its
            // best residual. BTreeMap restores row-major order.
            let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
            for pair in vertices.windows(2) {
                let (idx, res) = scan_segment(wf, chart, &pair[0], &pair[1], tol)?;
                for (i, r) in idx.into_iter().zip(res) {
                    merged
                        .entry(i)
                        .and_modify(|best| *best = best.min(r))
                        .or_insert(r);
                }
            }
            (merged.keys().copied().collect(), merged.values().copied().collect())
        }
    };
    Ok(ObjectSample {
        spec: spec.clone(),
        chart: chart.clone(),
        members: indices.iter().map(|&i| chart.point_at(i)).collect(),
        residuals,
    })
}

/// Section of the tube (p0,p1) through p: chart points whose sigma to each
/// axis endpoint matches p's, relative tolerance against max(1, |sigma|).
pub fn section(
    wf: &dyn WorldFunction,
    tube_axis: (&Point, &Point),
    p: &Point,
    chart: &PointChart,
    tol: f64,
) -> Result<ObjectSample> {
    sample_object(
        wf,
        chart,
        &ObjectSpec {
            kind: ObjectKind::Section {
                p0: tube_axis.0.clone(),
                p1: tube_axis.1.clone(),
                through: p.clone(),
            },
            tol,
        },
    )
}

/// Union of segment samples over consecutive vertices.
pub fn broken_line(
    wf: &dyn WorldFunction,
    vertices: &[Point],
    chart: &PointChart,
    tol: f64,
) -> Result<ObjectSample> {
    sample_object(
        wf,
        chart,
        &ObjectSpec {
            kind: ObjectKind::BrokenLine {
                vertices: vertices.to_vec(),
            },
            tol,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefinitenessReport {
    pub trials: usize,
    pub passes: usize,
    pub failures: usize,
    /// Trials abandoned because no usable pair came up (sigma identically
    /// zero between every sampled pair).
    pub skipped: usize,
    /// Largest parent-tube residual among points that a sub-tube contained
    /// but the parent did not.
    pub worst_violation: f64,
}

fn tube_member_indices(
    wf: &dyn WorldFunction,
    chart: &PointChart,
    p0: &Point,
    p1: &Point,
    tol: f64,
) -> Result<Vec<(usize, f64)>> {
    if wf.sigma(p0, p1)? == 0.0 {
        return Err(Error::DegenerateAxis);
    }
    let (idx, res) = scan(chart, |r| {
        dependency_membership(wf, p0, &[p1.clone(), r.clone()], tol).map(member_hit)
    })?;
    Ok(idx.into_iter().zip(res).collect())
}

/// Probes whether sub-tubes between tube points stay inside the tube: for
/// sampled pairs (Q0,Q1) of members with sigma(Q0,Q1) != 0, every chart
/// member of the tube over (Q0,Q1) must already be a member over (P0,P1).
/// The report is diagnostic; failures are information, not a panic.
pub fn definiteness_check(
    wf: &dyn WorldFunction,
    p0: &Point,
    p1: &Point,
    chart: &PointChart,
    tol: f64,
    trials: usize,
    seed: u64,
) -> Result<DefinitenessReport> {
    if chart.dim() != wf.dimension() {
        return Err(Error::ChartMismatch {
            expected: wf.dimension(),
            got: chart.dim(),
        });
    }
    let parent = tube_member_indices(wf, chart, p0, p1, tol)?;
    if parent.len() < 2 {
        return Err(Error::TubeSampleTooSparse);
    }
    let parent_set: std::collections::BTreeSet<usize> =
        parent.iter().map(|&(i, _)| i).collect();
    let members: Vec<(usize, Point)> = parent
        .iter()
        .map(|&(i, _)| (i, chart.point_at(i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DefinitenessReport {
        trials,
        passes: 0,
        failures: 0,
        skipped: 0,
        worst_violation: 0.0,
    };
    for _ in 0..trials {
        let mut pair = None;
        for _ in 0..256 {
            let i = rng.gen_range(0..members.len());
            let j = rng.gen_range(0..members.len());
            if i == j {
                continue;
            }
            if wf.sigma(&members[i].1, &members[j].1)? != 0.0 {
                pair = Some((i, j));
                break;
            }
        }
        let Some((i, j)) = pair else {
            report.skipped += 1;
            continue;
        };
        let sub = tube_member_indices(wf, chart, &members[i].1, &members[j].1, tol)?;
        let mut violated = false;
        for (idx, _) in sub {
            if !parent_set.contains(&idx) {
                violated = true;
                let outside = chart.point_at(idx);
                let m = tube_membership(wf, p0, p1, &outside, tol)?;
                report.worst_violation = report.worst_violation.max(m.residual);
            }
        }
        if violated {
            report.failures += 1;
        } else {
            report.passes += 1;
        }
    }
    Ok(report)
}

/// Local dimension of a sampled object around `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    /// Count of principal spread directions above threshold.
    pub value: f64,
    pub method: String,
    pub window: f64,
    /// Points that fell inside the window.
    pub support: usize,
    /// Principal spreads, largest first.
    pub spreads: Vec<f64>,
}

pub const DIMENSION_METHOD: &str = "local principal-spread thresholding";

/// Counts the principal spread directions of the members near `center` that
/// exceed the noise threshold. A line scores 1, a plane 2, a filled region
/// the full chart dimension.
pub fn estimate_dimension(
    sample: &ObjectSample,
    center: &Point,
    window: f64,
) -> Result<DimensionEstimate> {
    let dim = sample.chart.dim();
    if center.dim() != dim {
        return Err(Error::ChartMismatch {
            expected: dim,
            got: center.dim(),
        });
    }
    if !(window > 0.0) {
        return Err(Error::InvalidParameter {
            reason: format!("window must be positive, got {window}"),
        });
    }
    let local: Vec<&Point> = sample
        .members
        .iter()
        .filter(|m| m.coord_distance(center) <= window)
        .collect();
    let needed = MIN_WINDOW_POPULATION_PER_DIM * dim;
    if local.len() < needed {
        return Err(Error::WindowUnderpopulated {
            found: local.len(),
            needed,
        });
    }
    let pop = local.len();
    let mut mean = vec![0.0; dim];
    for p in &local {
        for (m, c) in mean.iter_mut().zip(p.coords()) {
            *m += c;
        }
    }
    for m in &mut mean {
        *m /= pop as f64;
    }
    let mut centered = nalgebra::DMatrix::<f64>::zeros(pop, dim);
    for (row, p) in local.iter().enumerate() {
        for (col, c) in p.coords().iter().enumerate() {
            centered[(row, col)] = c - mean[col];
        }
    }
    let mut spreads: Vec<f64> = centered.singular_values().iter().copied().collect();
    spreads.sort_by(|a, b| b.total_cmp(a));
    let top = spreads[0];
    let value = if top > 0.0 {
        spreads.iter().filter(|&&s| s > SPREAD_THRESHOLD * top).count() as f64
    } else {
        0.0
    };
    Ok(DimensionEstimate {
        value,
        method: DIMENSION_METHOD.to_string(),
        window,
        support: pop,
        spreads,
    })
}
