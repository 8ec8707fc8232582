//! Axiom sweeps over finite point sets: the two sigma-space identities
//! (zero diagonal, symmetry) for any world function, and the classical
//! metric-space axioms for rho = sqrt(2 sigma) where they apply. Failures are
//! report content with recomputable witnesses, never errors.

use crate::chart::Point;
use crate::error::Error;
use crate::sigma::WorldFunction;
use crate::Result;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Above this many points the sweeps subsample, since the triangle check is
/// cubic in the point count.
pub const AXIOM_POINT_CAP: usize = 200;
/// Fixed subsample seed keeps reports deterministic for a given input set.
const SUBSAMPLE_SEED: u64 = 0x0a71_0a71;
/// Relative slack on the triangle inequality so exact-equality chains do not
/// fail by a rounding ulp.
pub const TRIANGLE_SLACK: f64 = 1e-12;
/// At most this many witnesses are stored per check; the violation count is
/// still exact.
const WITNESS_CAP: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxiomStatus {
    Holds,
    Fails,
    /// The axiom set does not apply to this world function on this point set
    /// (negative sigma present); a witness shows why.
    NotApplicable,
}

/// Offending tuple with the values that convict it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub name: String,
    pub status: AxiomStatus,
    pub tuples_tested: usize,
    pub violations: usize,
    /// Largest violation magnitude seen, 0 when none.
    pub worst: f64,
    pub witnesses: Vec<Witness>,
}

impl AxiomCheck {
    fn new(name: &str) -> Self {
        AxiomCheck {
            name: name.to_string(),
            status: AxiomStatus::Holds,
            tuples_tested: 0,
            violations: 0,
            worst: 0.0,
            witnesses: Vec::new(),
        }
    }

    fn record(&mut self, witness: Witness, magnitude: f64) {
        self.status = AxiomStatus::Fails;
        self.violations += 1;
        self.worst = self.worst.max(magnitude);
        if self.witnesses.len() < WITNESS_CAP {
            self.witnesses.push(witness);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    /// Points supplied by the caller.
    pub point_count: usize,
    /// Points actually swept (capped subsample when large).
    pub used_points: usize,
    pub sampled: bool,
    pub checks: Vec<AxiomCheck>,
}

impl AxiomReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.status == AxiomStatus::Holds)
    }

    pub fn check(&self, name: &str) -> Option<&AxiomCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn validate_points(wf: &dyn WorldFunction, points: &[Point]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidParameter {
            reason: "axiom check needs at least one point".into(),
        });
    }
    for p in points {
        if p.dim() != wf.dimension() {
            return Err(Error::ChartMismatch {
                expected: wf.dimension(),
                got: p.dim(),
            });
        }
    }
    Ok(())
}

/// Order-preserving seeded subsample once past the cap.
fn select_points(points: &[Point]) -> (Vec<Point>, bool) {
    if points.len() <= AXIOM_POINT_CAP {
        return (points.to_vec(), false);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SUBSAMPLE_SEED);
    let mut indices: Vec<usize> = (0..points.len()).collect();
    indices.shuffle(&mut rng);
    let mut chosen: Vec<usize> = indices[..AXIOM_POINT_CAP].to_vec();
    chosen.sort_unstable();
    (chosen.into_iter().map(|i| points[i].clone()).collect(), true)
}

/// Full sigma matrix in row-major pair order; entry (i,j) evaluates
/// sigma(points[i], points[j]) independently of (j,i) so asymmetry is
/// observable.
fn sigma_matrix(wf: &dyn WorldFunction, points: &[Point]) -> Result<Vec<Vec<f64>>> {
    points
        .par_iter()
        .map(|pi| points.iter().map(|pj| wf.sigma(pi, pj)).collect())
        .collect()
}

/// Checks the two defining identities of a sigma space on every pair:
/// zero diagonal and symmetry, with finiteness as a precondition check.
pub fn check_sigma_space(wf: &dyn WorldFunction, points: &[Point]) -> Result<AxiomReport> {
    validate_points(wf, points)?;
    let (pts, sampled) = select_points(points);
    let n = pts.len();
    let sigma = sigma_matrix(wf, &pts)?;

    let mut finite = AxiomCheck::new("sigma finite");
    let mut diagonal = AxiomCheck::new("sigma zero diagonal");
    let mut symmetry = AxiomCheck::new("sigma symmetry");
    finite.tuples_tested = n * n;
    diagonal.tuples_tested = n;
    symmetry.tuples_tested = n * (n - 1) / 2;

    for (i, row) in sigma.iter().enumerate() {
        for (j, &value) in row.iter().enumerate() {
            if !value.is_finite() {
                finite.record(
                    Witness {
                        points: vec![pts[i].clone(), pts[j].clone()],
                        values: vec![value],
                        detail: "sigma is not finite".into(),
                    },
                    f64::INFINITY,
                );
            }
        }
    }
    for (i, p) in pts.iter().enumerate() {
        let value = sigma[i][i];
        if value != 0.0 {
            diagonal.record(
                Witness {
                    points: vec![p.clone()],
                    values: vec![value],
                    detail: "sigma(P,P) differs from zero".into(),
                },
                value.abs(),
            );
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let forward = sigma[i][j];
            let backward = sigma[j][i];
            if forward != backward && !(forward.is_nan() && backward.is_nan()) {
                symmetry.record(
                    Witness {
                        points: vec![pts[i].clone(), pts[j].clone()],
                        values: vec![forward, backward],
                        detail: "sigma(P,Q) differs from sigma(Q,P)".into(),
                    },
                    (forward - backward).abs(),
                );
            }
        }
    }

    Ok(AxiomReport {
        point_count: points.len(),
        used_points: n,
        sampled,
        checks: vec![finite, diagonal, symmetry],
    })
}

/// Checks the metric-space axioms for rho = sqrt(2 sigma). If any pair has
/// negative sigma the whole set is marked not applicable, with the first such
/// pair (in row-major order) as witness.
pub fn check_metric_axioms(wf: &dyn WorldFunction, points: &[Point]) -> Result<AxiomReport> {
    validate_points(wf, points)?;
    let (pts, sampled) = select_points(points);
    let n = pts.len();
    let sigma = sigma_matrix(wf, &pts)?;

    let mut nonneg = AxiomCheck::new("rho nonnegative");
    let mut identity = AxiomCheck::new("identity of indiscernibles");
    let mut triangle = AxiomCheck::new("triangle inequality");
    nonneg.tuples_tested = n * (n + 1) / 2;
    identity.tuples_tested = n * (n + 1) / 2;
    triangle.tuples_tested = n * n * n;

    let mut negative = None;
    'scan: for i in 0..n {
        for j in i..n {
            if sigma[i][j] < 0.0 {
                negative = Some((i, j));
                break 'scan;
            }
        }
    }
    if let Some((i, j)) = negative {
        let witness = Witness {
            points: vec![pts[i].clone(), pts[j].clone()],
            values: vec![sigma[i][j]],
            detail: "negative sigma: rho is not real, metric axioms do not apply".into(),
        };
        for check in [&mut nonneg, &mut identity, &mut triangle] {
            check.status = AxiomStatus::NotApplicable;
            check.witnesses = vec![witness.clone()];
        }
        return Ok(AxiomReport {
            point_count: points.len(),
            used_points: n,
            sampled,
            checks: vec![nonneg, identity, triangle],
        });
    }

    let rho: Vec<Vec<f64>> = sigma
        .iter()
        .map(|row| row.iter().map(|&s| (2.0 * s).sqrt()).collect())
        .collect();

    // Nonnegativity holds by construction once sigma >= 0; sweep anyway so a
    // NaN from a corrupt table is caught.
    for i in 0..n {
        for j in i..n {
            let r = rho[i][j];
            if !(r >= 0.0) {
                nonneg.record(
                    Witness {
                        points: vec![pts[i].clone(), pts[j].clone()],
                        values: vec![r],
                        detail: "rho not a nonnegative real".into(),
                    },
                    f64::INFINITY,
                );
            }
        }
    }

    for i in 0..n {
        for j in i..n {
            let r = rho[i][j];
            let coincident = pts[i] == pts[j];
            if coincident && r != 0.0 {
                identity.record(
                    Witness {
                        points: vec![pts[i].clone(), pts[j].clone()],
                        values: vec![r],
                        detail: "coincident points at nonzero distance".into(),
                    },
                    r.abs(),
                );
            } else if !coincident && r == 0.0 {
                identity.record(
                    Witness {
                        points: vec![pts[i].clone(), pts[j].clone()],
                        values: vec![r],
                        detail: "distinct points at zero distance".into(),
                    },
                    0.0,
                );
            }
        }
    }

    // Cubic sweep, parallel over the outer index; merge preserves i order so
    // witnesses are deterministic.
    let per_i: Vec<(usize, f64, Vec<(usize, usize, usize, f64)>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut violations = 0;
            let mut worst = 0.0f64;
            let mut local = Vec::new();
            for j in 0..n {
                for k in 0..n {
                    let lhs = rho[i][k];
                    let rhs = rho[i][j] + rho[j][k];
                    let defect = lhs - rhs;
                    if defect > TRIANGLE_SLACK * lhs.max(1.0) {
                        violations += 1;
                        worst = worst.max(defect);
                        if local.len() < WITNESS_CAP {
                            local.push((i, j, k, defect));
                        }
                    }
                }
            }
            (violations, worst, local)
        })
        .collect();
    for (violations, worst, local) in per_i {
        if violations == 0 {
            continue;
        }
        triangle.status = AxiomStatus::Fails;
        triangle.violations += violations;
        triangle.worst = triangle.worst.max(worst);
        for (i, j, k, defect) in local {
            if triangle.witnesses.len() < WITNESS_CAP {
                triangle.witnesses.push(Witness {
                    points: vec![pts[i].clone(), pts[j].clone(), pts[k].clone()],
                    values: vec![rho[i][k], rho[i][j], rho[j][k]],
                    detail: format!("rho(P,R) exceeds rho(P,Q)+rho(Q,R) by {defect:.3e}"),
                });
            }
        }
    }

    Ok(AxiomReport {
        point_count: points.len(),
        used_points: n,
        sampled,
        checks: vec![nonneg, identity, triangle],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::PointChart;
    use crate::models::{sample_outside_disk, CutPlane, DeformedParams, DeformedSpacetime, GapPolicy};
    use crate::sigma::{Euclidean, Minkowski, TabulatedSigma};

    fn pt(coords: &[f64]) -> Point {
        Point::from_slice(coords)
    }

    #[test]
    fn euclidean_lattice_satisfies_everything() {
        let e2 = Euclidean::new(2).unwrap();
        let points = PointChart::uniform(2, 0.0, 1.0, 5).unwrap().sample();
        let sigma_report = check_sigma_space(&e2, &points).unwrap();
        assert!(sigma_report.all_hold());
        assert!(!sigma_report.sampled);
        let metric_report = check_metric_axioms(&e2, &points).unwrap();
        assert!(metric_report.all_hold());
        assert_eq!(
            metric_report.check("triangle inequality").unwrap().tuples_tested,
            25 * 25 * 25
        );
    }

    #[test]
    fn minkowski_lattice_is_not_a_metric_space() {
        let m2 = Minkowski::new(2).unwrap();
        let points = PointChart::uniform(2, 0.0, 1.0, 3).unwrap().sample();
        let report = check_metric_axioms(&m2, &points).unwrap();
        for check in &report.checks {
            assert_eq!(check.status, AxiomStatus::NotApplicable);
            assert_eq!(check.witnesses.len(), 1);
            assert!(check.witnesses[0].values[0] < 0.0);
        }
        // The sigma-space identities still hold.
        assert!(check_sigma_space(&m2, &points).unwrap().all_hold());
    }

    #[test]
    fn first_negative_witness_is_deterministic() {
        let m2 = Minkowski::new(2).unwrap();
        let points = PointChart::uniform(2, 0.0, 1.0, 3).unwrap().sample();
        let a = check_metric_axioms(&m2, &points).unwrap();
        let b = check_metric_axioms(&m2, &points).unwrap();
        assert_eq!(a, b);
        // Row-major first spacelike pair on this lattice: (0,0) vs (0,0.5).
        let w = &a.checks[0].witnesses[0];
        assert_eq!(w.points[0], pt(&[0.0, 0.0]));
        assert_eq!(w.points[1], pt(&[0.0, 0.5]));
    }

    #[test]
    fn injected_asymmetry_is_caught_with_the_pair_as_witness() {
        let points = vec![pt(&[0.0]), pt(&[1.0]), pt(&[2.0])];
        let mut values = vec![
            vec![0.0, 0.5, 2.0],
            vec![0.5, 0.0, 0.5],
            vec![2.0, 0.5, 0.0],
        ];
        values[0][1] = 0.75; // break sigma(P0,P1) only
        let wf = TabulatedSigma::from_parts_unchecked(points.clone(), values);
        let report = check_sigma_space(&wf, &points).unwrap();
        let symmetry = report.check("sigma symmetry").unwrap();
        assert_eq!(symmetry.status, AxiomStatus::Fails);
        assert_eq!(symmetry.violations, 1);
        assert_eq!(symmetry.witnesses[0].points, vec![pt(&[0.0]), pt(&[1.0])]);
        assert_eq!(symmetry.witnesses[0].values, vec![0.75, 0.5]);
    }

    #[test]
    fn injected_diagonal_and_nan_are_caught() {
        let points = vec![pt(&[0.0]), pt(&[1.0])];
        let values = vec![vec![0.25, f64::NAN], vec![f64::NAN, 0.0]];
        let wf = TabulatedSigma::from_parts_unchecked(points.clone(), values);
        let report = check_sigma_space(&wf, &points).unwrap();
        assert_eq!(
            report.check("sigma zero diagonal").unwrap().status,
            AxiomStatus::Fails
        );
        assert_eq!(report.check("sigma finite").unwrap().status, AxiomStatus::Fails);
    }

    #[test]
    fn lightlike_pairs_fail_identity_of_indiscernibles() {
        // A table with sigma = 0 between distinct points and no negative
        // entries: the metric axioms apply but (a distinct) zero distance
        // convicts the identity axiom.
        let points = vec![pt(&[0.0]), pt(&[1.0])];
        let values = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let wf = TabulatedSigma::from_parts_unchecked(points.clone(), values);
        let report = check_metric_axioms(&wf, &points).unwrap();
        let identity = report.check("identity of indiscernibles").unwrap();
        assert_eq!(identity.status, AxiomStatus::Fails);
        assert_eq!(identity.violations, 1);
    }

    #[test]
    fn deformed_ramp_keeps_sigma_space_identities() {
        use rand::{Rng, SeedableRng};
        let params = DeformedParams::with_d0(0.1, GapPolicy::LinearRamp, 4).unwrap();
        let wf = DeformedSpacetime::new(params);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let points: Vec<Point> = (0..40)
            .map(|_| {
                pt(&[
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                ])
            })
            .collect();
        assert!(check_sigma_space(&wf, &points).unwrap().all_hold());
    }

    #[test]
    fn cutplane_is_a_genuine_metric_space() {
        let cut = CutPlane::new();
        let points = sample_outside_disk(23, 60, -3.0, 3.0).unwrap();
        let report = check_metric_axioms(&cut, &points).unwrap();
        assert!(report.all_hold(), "report: {report:?}");
        assert!(check_sigma_space(&cut, &points).unwrap().all_hold());
    }

    #[test]
    fn oversized_sets_are_subsampled_deterministically() {
        let e2 = Euclidean::new(2).unwrap();
        let points = PointChart::uniform(2, 0.0, 1.0, 18).unwrap().sample();
        assert_eq!(points.len(), 324);
        let a = check_sigma_space(&e2, &points).unwrap();
        assert!(a.sampled);
        assert_eq!(a.used_points, AXIOM_POINT_CAP);
        assert_eq!(a.point_count, 324);
        let b = check_sigma_space(&e2, &points).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn collinear_chains_do_not_trip_the_slack() {
        let e1 = Euclidean::new(1).unwrap();
        let points: Vec<Point> = (0..30).map(|k| pt(&[k as f64 * 0.37])).collect();
        let report = check_metric_axioms(&e1, &points).unwrap();
        assert!(report.check("triangle inequality").unwrap().status == AxiomStatus::Holds);
    }

    #[test]
    fn report_serializes_to_json() {
        let e2 = Euclidean::new(2).unwrap();
        let points = PointChart::uniform(2, 0.0, 1.0, 3).unwrap().sample();
        let report = check_metric_axioms(&e2, &points).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"status\":\"holds\""));
        let back: AxiomReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
