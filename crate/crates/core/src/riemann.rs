//! Metric-induced world functions and their consistency checks.
//!
//! A metric field defines sigma through a two-point boundary-value problem:
//! integrate the geodesic equation from x' with a trial velocity, correct the
//! velocity by Newton iteration on the boundary miss, and read off
//! sigma = 1/2 g(x')(v0, v0) in the affine normalization where the geodesic
//! reaches x at parameter 1. First-variation equations are integrated
//! alongside the state, so the solver knows d(endpoint)/d(velocity) exactly;
//! that sensitivity both drives the Newton step and supplies high-accuracy
//! mixed sigma derivatives where plain finite differences would drown in
//! solver noise.

use crate::chart::{Point, PointChart};
use crate::error::Error;
use crate::Result;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fixed RK4 step count; a power of two keeps flat-path arithmetic exact.
const RK4_STEPS: usize = 128;
/// Newton tolerance on the scaled boundary miss.
const BVP_TOL: f64 = 1e-12;
const BVP_MAX_ITERS: usize = 60;
/// Relative step for derivative stencils, times the chart extent.
pub const DEFAULT_FD_SCALE: f64 = 1e-3;

/// Coefficients of a quadratic polynomial in two variables:
/// c0 + cx x + cy y + cxx x^2 + cxy x y + cyy y^2.
pub type PhiCoefficients = [f64; 6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MetricKind {
    EuclideanFlat,
    MinkowskiFlat,
    /// Colatitude/longitude chart on the unit sphere; keep theta away from
    /// the poles.
    UnitSphere,
    /// g = e^{2 phi} delta on the plane, phi a quadratic polynomial.
    ConformalFlat { phi: PhiCoefficients },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricField {
    pub kind: MetricKind,
    pub dimension: usize,
    pub domain: PointChart,
}

impl MetricField {
    pub fn new(kind: MetricKind, domain: PointChart) -> Result<Self> {
        let dimension = domain.dim();
        match kind {
            MetricKind::UnitSphere | MetricKind::ConformalFlat { .. } => {
                if dimension != 2 {
                    return Err(Error::InvalidParameter {
                        reason: "this metric is two-dimensional".into(),
                    });
                }
            }
            MetricKind::MinkowskiFlat => {
                if dimension < 2 {
                    return Err(Error::InvalidParameter {
                        reason: "indefinite metric needs dimension at least 2".into(),
                    });
                }
            }
            MetricKind::EuclideanFlat => {}
        }
        if let MetricKind::ConformalFlat { phi } = &kind {
            if phi.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter {
                    reason: "conformal coefficients must be finite".into(),
                });
            }
        }
        Ok(MetricField {
            kind,
            dimension,
            domain,
        })
    }

    pub fn is_flat(&self) -> bool {
        matches!(
            self.kind,
            MetricKind::EuclideanFlat | MetricKind::MinkowskiFlat
        )
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension
            && x.iter()
                .zip(&self.domain.bounds)
                .all(|(c, (lo, hi))| *c >= *lo && *c <= *hi)
    }

    fn contains_with_margin(&self, x: &[f64], margin: f64) -> bool {
        x.len() == self.dimension
            && x.iter()
                .zip(&self.domain.bounds)
                .all(|(c, (lo, hi))| *c >= *lo + margin && *c <= *hi - margin)
    }

    pub fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dimension;
        let mut g = DMatrix::zeros(n, n);
        match &self.kind {
            MetricKind::EuclideanFlat => {
                for i in 0..n {
                    g[(i, i)] = 1.0;
                }
            }
            MetricKind::MinkowskiFlat => {
                g[(0, 0)] = 1.0;
                for i in 1..n {
                    g[(i, i)] = -1.0;
                }
            }
            MetricKind::UnitSphere => {
                g[(0, 0)] = 1.0;
                g[(1, 1)] = x[0].sin().powi(2);
            }
            MetricKind::ConformalFlat { phi } => {
                let f = (2.0 * phi_value(phi, x)).exp();
                g[(0, 0)] = f;
                g[(1, 1)] = f;
            }
        }
        g
    }

    pub fn metric_inverse(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dimension;
        let mut g = DMatrix::zeros(n, n);
        match &self.kind {
            MetricKind::EuclideanFlat => {
                for i in 0..n {
                    g[(i, i)] = 1.0;
                }
            }
            MetricKind::MinkowskiFlat => {
                g[(0, 0)] = 1.0;
                for i in 1..n {
                    g[(i, i)] = -1.0;
                }
            }
            MetricKind::UnitSphere => {
                g[(0, 0)] = 1.0;
                g[(1, 1)] = 1.0 / x[0].sin().powi(2);
            }
            MetricKind::ConformalFlat { phi } => {
                let f = (-2.0 * phi_value(phi, x)).exp();
                g[(0, 0)] = f;
                g[(1, 1)] = f;
            }
        }
        g
    }

    /// Connection coefficients, flattened [i][j][k] -> i*n*n + j*n + k.
    fn christoffel_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dimension;
        out.fill(0.0);
        match &self.kind {
            MetricKind::EuclideanFlat | MetricKind::MinkowskiFlat => {}
            MetricKind::UnitSphere => {
                let (sin, cos) = x[0].sin_cos();
                out[0 * n * n + 1 * n + 1] = -sin * cos;
                let cot = cos / sin;
                out[1 * n * n + 0 * n + 1] = cot;
                out[1 * n * n + 1 * n + 0] = cot;
            }
            MetricKind::ConformalFlat { phi } => {
                let grad = phi_gradient(phi, x);
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let mut v = 0.0;
                            if i == j {
                                v += grad[k];
                            }
                            if i == k {
                                v += grad[j];
                            }
                            if j == k {
                                v -= grad[i];
                            }
                            out[i * n * n + j * n + k] = v;
                        }
                    }
                }
            }
        }
    }

    /// Coordinate derivatives of the connection, flattened
    /// [l][i][j][k] -> ((l*n + i)*n + j)*n + k.
    fn dchristoffel_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dimension;
        out.fill(0.0);
        match &self.kind {
            MetricKind::EuclideanFlat | MetricKind::MinkowskiFlat => {}
            MetricKind::UnitSphere => {
                let theta = x[0];
                out[((0 * n + 0) * n + 1) * n + 1] = -(2.0 * theta).cos();
                let d_cot = -1.0 / theta.sin().powi(2);
                out[((0 * n + 1) * n + 0) * n + 1] = d_cot;
                out[((0 * n + 1) * n + 1) * n + 0] = d_cot;
            }
            MetricKind::ConformalFlat { phi } => {
                let hess = phi_hessian(phi);
                for l in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            for k in 0..n {
                                let mut v = 0.0;
                                if i == j {
                                    v += hess[k][l];
                                }
                                if i == k {
                                    v += hess[j][l];
                                }
                                if j == k {
                                    v -= hess[i][l];
                                }
                                out[((l * n + i) * n + j) * n + k] = v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn phi_value(c: &PhiCoefficients, x: &[f64]) -> f64 {
    c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[0] + c[4] * x[0] * x[1] + c[5] * x[1] * x[1]
}

fn phi_gradient(c: &PhiCoefficients, x: &[f64]) -> [f64; 2] {
    [
        c[1] + 2.0 * c[3] * x[0] + c[4] * x[1],
        c[2] + c[4] * x[0] + 2.0 * c[5] * x[1],
    ]
}

fn phi_hessian(c: &PhiCoefficients) -> [[f64; 2]; 2] {
    [[2.0 * c[3], c[4]], [c[4], 2.0 * c[5]]]
}

/// Endpoint data of one integrated geodesic together with its sensitivity to
/// the initial velocity.
struct Flow {
    x1: Vec<f64>,
    u1: Vec<f64>,
    /// d x1^i / d v0^m, flattened i*n + m.
    j1: Vec<f64>,
    /// d u1^i / d v0^m, flattened i*n + m.
    v1: Vec<f64>,
}

/// Right-hand side of the geodesic flow together with its first variation
/// with respect to the initial velocity. Layout: [x, u, J, V].
fn flow_rhs(m: &MetricField, gamma: &mut [f64], dgamma: &mut [f64], y: &[f64], out: &mut [f64]) {
    let n = m.dimension;
    let (x, rest) = y.split_at(n);
    let (u, jv) = rest.split_at(n);
    let (jmat, vmat) = jv.split_at(n * n);
    m.christoffel_into(x, gamma);
    m.dchristoffel_into(x, dgamma);
    // x' = u
    out[..n].copy_from_slice(u);
    // u'^i = -Gamma^i_jk u^j u^k
    for i in 0..n {
        let mut a = 0.0;
        for j in 0..n {
            for k in 0..n {
                a -= gamma[i * n * n + j * n + k] * u[j] * u[k];
            }
        }
        out[n + i] = a;
    }
    // J' = V
    out[2 * n..2 * n + n * n].copy_from_slice(vmat);
    // V'^i_m = -dGamma^i_jk/dx^l J^l_m u^j u^k - 2 Gamma^i_jk u^j V^k_m
    let vout = &mut out[2 * n + n * n..];
    for i in 0..n {
        for m_idx in 0..n {
            let mut a = 0.0;
            for l in 0..n {
                let jl = jmat[l * n + m_idx];
                if jl != 0.0 {
                    for j in 0..n {
                        for k in 0..n {
                            a -= dgamma[((l * n + i) * n + j) * n + k] * jl * u[j] * u[k];
                        }
                    }
                }
            }
            for j in 0..n {
                for k in 0..n {
                    a -= 2.0 * gamma[i * n * n + j * n + k] * u[j] * vmat[k * n + m_idx];
                }
            }
            vout[i * n + m_idx] = a;
        }
    }
}

fn integrate_flow(m: &MetricField, xp: &[f64], v0: &[f64]) -> Flow {
    let n = m.dimension;
    let state = 2 * n + 2 * n * n;
    let mut gamma = vec![0.0; n * n * n];
    let mut dgamma = vec![0.0; n * n * n * n];
    let mut y = vec![0.0; state];
    y[..n].copy_from_slice(xp);
    y[n..2 * n].copy_from_slice(v0);
    // J(0) = 0, V(0) = I.
    for i in 0..n {
        y[2 * n + n * n + i * n + i] = 1.0;
    }
    let mut k1 = vec![0.0; state];
    let mut k2 = vec![0.0; state];
    let mut k3 = vec![0.0; state];
    let mut k4 = vec![0.0; state];
    let mut ytmp = vec![0.0; state];
    let h = 1.0 / RK4_STEPS as f64;
    for _ in 0..RK4_STEPS {
        flow_rhs(m, &mut gamma, &mut dgamma, &y, &mut k1);
        for s in 0..state {
            ytmp[s] = y[s] + 0.5 * h * k1[s];
        }
        flow_rhs(m, &mut gamma, &mut dgamma, &ytmp, &mut k2);
        for s in 0..state {
            ytmp[s] = y[s] + 0.5 * h * k2[s];
        }
        flow_rhs(m, &mut gamma, &mut dgamma, &ytmp, &mut k3);
        for s in 0..state {
            ytmp[s] = y[s] + h * k3[s];
        }
        flow_rhs(m, &mut gamma, &mut dgamma, &ytmp, &mut k4);
        for s in 0..state {
            y[s] += h / 6.0 * (k1[s] + 2.0 * k2[s] + 2.0 * k3[s] + k4[s]);
        }
    }
    Flow {
        x1: y[..n].to_vec(),
        u1: y[n..2 * n].to_vec(),
        j1: y[2 * n..2 * n + n * n].to_vec(),
        v1: y[2 * n + n * n..].to_vec(),
    }
}

struct Bvp {
    v0: Vec<f64>,
    flow: Flow,
}

enum BvpOutcome {
    Converged(Bvp),
    Stalled { residual: f64 },
}

fn miss_norm(x1: &[f64], target: &[f64]) -> f64 {
    x1.iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Shooting solve for the geodesic from xp to x in affine time 1.
fn solve_bvp(
    m: &MetricField,
    x: &[f64],
    xp: &[f64],
    v0_guess: Option<&[f64]>,
) -> Result<BvpOutcome> {
    let n = m.dimension;
    if m.is_flat() {
        // The geodesic flow is exactly linear: accept the straight chord, with
        // identity sensitivities. Sigma stays an exact quadratic in the
        // endpoint coordinates, which downstream difference stencils rely on.
        let v0: Vec<f64> = x.iter().zip(xp).map(|(a, b)| a - b).collect();
        let mut j1 = vec![0.0; n * n];
        let mut v1 = vec![0.0; n * n];
        for i in 0..n {
            j1[i * n + i] = 1.0;
            v1[i * n + i] = 1.0;
        }
        return Ok(BvpOutcome::Converged(Bvp {
            flow: Flow {
                x1: x.to_vec(),
                u1: v0.clone(),
                j1,
                v1,
            },
            v0,
        }));
    }
    let scale = 1.0f64.max(miss_norm(x, xp));
    let mut v0: Vec<f64> = match v0_guess {
        Some(g) => g.to_vec(),
        None => x.iter().zip(xp).map(|(a, b)| a - b).collect(),
    };
    let mut flow = integrate_flow(m, xp, &v0);
    let mut norm = miss_norm(&flow.x1, x);
    for _ in 0..BVP_MAX_ITERS {
        if norm <= BVP_TOL * scale {
            return Ok(BvpOutcome::Converged(Bvp { v0, flow }));
        }
        let jac = DMatrix::from_fn(n, n, |i, mcol| flow.j1[i * n + mcol]);
        let miss = nalgebra::DVector::from_fn(n, |i, _| flow.x1[i] - x[i]);
        let Some(delta) = jac.lu().solve(&miss) else {
            return Err(Error::DegenerateMixedHessian);
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..6 {
            let v0_try: Vec<f64> = v0
                .iter()
                .enumerate()
                .map(|(i, v)| v - lambda * delta[i])
                .collect();
            let flow_try = integrate_flow(m, xp, &v0_try);
            let norm_try = miss_norm(&flow_try.x1, x);
            if norm_try < norm {
                v0 = v0_try;
                flow = flow_try;
                norm = norm_try;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Ok(BvpOutcome::Stalled { residual: norm });
        }
    }
    if norm <= BVP_TOL * scale {
        return Ok(BvpOutcome::Converged(Bvp { v0, flow }));
    }
    Ok(BvpOutcome::Stalled { residual: norm })
}

fn quadratic_form(g: &DMatrix<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[(i, j)] * v[i] * v[j];
        }
    }
    s
}

/// One solved two-point geodesic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSolution {
    pub x: Point,
    pub xp: Point,
    /// Discretized curve from xp to x (when converged).
    pub path: Vec<Point>,
    /// Proper length magnitude sqrt(2 |sigma|).
    pub length: f64,
    pub sigma: f64,
    pub converged: bool,
    /// Final boundary miss distance.
    pub residual: f64,
    pub initial_velocity: Vec<f64>,
}

fn check_in_domain(m: &MetricField, x: &[f64]) -> Result<()> {
    if !m.contains(x) {
        return Err(Error::InvalidParameter {
            reason: "point outside metric domain".into(),
        });
    }
    Ok(())
}

/// Positions-only re-integration for the reported path.
fn trace_path(m: &MetricField, xp: &[f64], v0: &[f64]) -> Vec<Point> {
    let n = m.dimension;
    if m.is_flat() {
        return (0..=RK4_STEPS)
            .map(|s| {
                let t = s as f64 / RK4_STEPS as f64;
                Point::from_slice(
                    &xp.iter()
                        .zip(v0)
                        .map(|(p, v)| p + t * v)
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
    }
    let mut gamma = vec![0.0; n * n * n];
    let mut path = Vec::with_capacity(RK4_STEPS + 1);
    let mut x = xp.to_vec();
    let mut u = v0.to_vec();
    path.push(Point::from_slice(&x));
    let h = 1.0 / RK4_STEPS as f64;
    let accel = |m: &MetricField, gamma: &mut Vec<f64>, x: &[f64], u: &[f64], out: &mut [f64]| {
        m.christoffel_into(x, gamma);
        for i in 0..n {
            let mut a = 0.0;
            for j in 0..n {
                for k in 0..n {
                    a -= gamma[i * n * n + j * n + k] * u[j] * u[k];
                }
            }
            out[i] = a;
        }
    };
    let mut a1 = vec![0.0; n];
    let mut a2 = vec![0.0; n];
    let mut a3 = vec![0.0; n];
    let mut a4 = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let mut ut = vec![0.0; n];
    for _ in 0..RK4_STEPS {
        accel(m, &mut gamma, &x, &u, &mut a1);
        for i in 0..n {
            xt[i] = x[i] + 0.5 * h * u[i];
            ut[i] = u[i] + 0.5 * h * a1[i];
        }
        let u2 = ut.clone();
        accel(m, &mut gamma, &xt, &u2, &mut a2);
        for i in 0..n {
            xt[i] = x[i] + 0.5 * h * u2[i];
            ut[i] = u[i] + 0.5 * h * a2[i];
        }
        let u3 = ut.clone();
        accel(m, &mut gamma, &xt, &u3, &mut a3);
        for i in 0..n {
            xt[i] = x[i] + h * u3[i];
            ut[i] = u[i] + h * a3[i];
        }
        let u4 = ut.clone();
        accel(m, &mut gamma, &xt, &u4, &mut a4);
        for i in 0..n {
            let du = (u[i] + 2.0 * u2[i] + 2.0 * u3[i] + u4[i]) / 6.0;
            let da = (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]) / 6.0;
            x[i] += h * du;
            u[i] += h * da;
        }
        path.push(Point::from_slice(&x));
    }
    path
}

/// Two-point boundary solve; non-convergence is reported in the solution, not
/// as an error.
pub fn solve_geodesic(m: &MetricField, x: &Point, xp: &Point) -> Result<GeodesicSolution> {
    check_in_domain(m, x.coords())?;
    check_in_domain(m, xp.coords())?;
    if x == xp {
        return Ok(GeodesicSolution {
            x: x.clone(),
            xp: xp.clone(),
            path: vec![xp.clone(), x.clone()],
            length: 0.0,
            sigma: 0.0,
            converged: true,
            residual: 0.0,
            initial_velocity: vec![0.0; m.dimension],
        });
    }
    match solve_bvp(m, x.coords(), xp.coords(), None)? {
        BvpOutcome::Converged(bvp) => {
            let g = m.metric(xp.coords());
            let sigma = 0.5 * quadratic_form(&g, &bvp.v0);
            let path = trace_path(m, xp.coords(), &bvp.v0);
            let residual = miss_norm(&bvp.flow.x1, x.coords());
            Ok(GeodesicSolution {
                x: x.clone(),
                xp: xp.clone(),
                path,
                length: (2.0 * sigma.abs()).sqrt(),
                sigma,
                converged: true,
                residual,
                initial_velocity: bvp.v0,
            })
        }
        BvpOutcome::Stalled { residual } => Ok(GeodesicSolution {
            x: x.clone(),
            xp: xp.clone(),
            path: Vec::new(),
            length: f64::NAN,
            sigma: f64::NAN,
            converged: false,
            residual,
            initial_velocity: Vec::new(),
        }),
    }
}

fn sigma_value(m: &MetricField, x: &[f64], xp: &[f64]) -> Result<f64> {
    if x == xp {
        return Ok(0.0);
    }
    match solve_bvp(m, x, xp, None)? {
        BvpOutcome::Converged(bvp) => {
            let g = m.metric(xp);
            Ok(0.5 * quadratic_form(&g, &bvp.v0))
        }
        BvpOutcome::Stalled { residual } => Err(Error::SolverDiverged { residual }),
    }
}

/// sigma = 1/2 S^2 from the converged geodesic solve.
pub fn sigma_from_metric(m: &MetricField, x: &Point, xp: &Point) -> Result<f64> {
    check_in_domain(m, x.coords())?;
    check_in_domain(m, xp.coords())?;
    sigma_value(m, x.coords(), xp.coords())
}

/// Where a derivative pipeline gets its sigma values: a metric solve, or a
/// closed-form coordinate function (for feeding non-metric sigmas through the
/// same checks).
pub enum SigmaSource<'a> {
    Metric(&'a MetricField),
    Direct {
        dimension: usize,
        eval: &'a (dyn Fn(&[f64], &[f64]) -> Result<f64> + Sync),
    },
}

impl<'a> SigmaSource<'a> {
    pub fn dimension(&self) -> usize {
        match self {
            SigmaSource::Metric(m) => m.dimension,
            SigmaSource::Direct { dimension, .. } => *dimension,
        }
    }

    pub fn value(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        match self {
            SigmaSource::Metric(m) => sigma_value(m, x, xp),
            SigmaSource::Direct { eval, .. } => eval(x, xp),
        }
    }

    fn check_stencil(&self, x: &[f64], xp: &[f64], h: f64) -> Result<()> {
        if let SigmaSource::Metric(m) = self {
            // Nested stencils shift a coordinate by up to 2h.
            if !m.contains_with_margin(x, 2.0 * h) || !m.contains_with_margin(xp, 2.0 * h) {
                return Err(Error::InvalidParameter {
                    reason: "difference stencil leaves metric domain".into(),
                });
            }
        }
        Ok(())
    }
}

fn shifted(x: &[f64], axis: usize, delta: f64) -> Vec<f64> {
    let mut s = x.to_vec();
    s[axis] += delta;
    s
}

/// Variational-identity mixed block: sigma_{l k'} = -(g(xp) J^{-1})
/// transposed into [l][k'] order. Only available for metric sources.
fn mixed_block_variational(m: &MetricField, x: &[f64], xp: &[f64]) -> Result<DMatrix<f64>> {
    let n = m.dimension;
    let bvp = match solve_bvp(m, x, xp, None)? {
        BvpOutcome::Converged(b) => b,
        BvpOutcome::Stalled { residual } => return Err(Error::SolverDiverged { residual }),
    };
    let j1 = DMatrix::from_fn(n, n, |i, mcol| bvp.flow.j1[i * n + mcol]);
    let jinv = j1.lu().try_inverse().ok_or(Error::DegenerateMixedHessian)?;
    let g = m.metric(xp);
    // d v0 / d x = J^{-1}; sigma_{k'} = -g(xp) v0; entry [l][k'].
    let gj = &g * &jinv;
    Ok(DMatrix::from_fn(n, n, |l, kp| -gj[(kp, l)]))
}

/// d sigma_i / d x^k via the arrival-velocity identity
/// sigma_i = g_ij(x) u1^j, with du1/dx = V1 J1^{-1}.
fn sigma_xx_variational(m: &MetricField, x: &[f64], xp: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.dimension;
    let bvp = match solve_bvp(m, x, xp, None)? {
        BvpOutcome::Converged(b) => b,
        BvpOutcome::Stalled { residual } => return Err(Error::SolverDiverged { residual }),
    };
    let j1 = DMatrix::from_fn(n, n, |i, mcol| bvp.flow.j1[i * n + mcol]);
    let v1 = DMatrix::from_fn(n, n, |i, mcol| bvp.flow.v1[i * n + mcol]);
    let jinv = j1.lu().try_inverse().ok_or(Error::DegenerateMixedHessian)?;
    let du1_dx = &v1 * &jinv;
    let g = m.metric(x);
    let sigma_i: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| g[(i, j)] * bvp.flow.u1[j]).sum())
        .collect();
    // sigma_{ik} = dg_ij/dx^k u1^j + g_ij du1^j/dx^k; the metric derivative by
    // a tight central difference of the analytic metric (exact to rounding
    // for the shipped zoo's smooth entries).
    let hg = 1e-6;
    let mut sigma_ik = DMatrix::zeros(n, n);
    for k in 0..n {
        let gp = m.metric(&shifted(x, k, hg));
        let gm = m.metric(&shifted(x, k, -hg));
        for i in 0..n {
            let mut v = 0.0;
            for j in 0..n {
                v += (gp[(i, j)] - gm[(i, j)]) / (2.0 * hg) * bvp.flow.u1[j];
            }
            sigma_ik[(i, k)] = v;
        }
    }
    for i in 0..n {
        for k in 0..n {
            let mut v = sigma_ik[(i, k)];
            for j in 0..n {
                v += g[(i, j)] * du1_dx[(j, k)];
            }
            sigma_ik[(i, k)] = v;
        }
    }
    Ok((sigma_i, sigma_ik))
}

/// All derivative blocks of sigma at (x, xp).
///
/// First and mixed-second derivatives come from plain central differences of
/// sigma itself, so their convergence is the textbook h^2 story. The
/// third-derivative block, the connection, and G are assembled from
/// variational identities (metric sources) or nested differences (direct
/// closed-form sources), because differencing a noisy solver output three
/// times has no accuracy left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaDerivatives {
    pub sigma: f64,
    /// d sigma / d x^i.
    pub sigma_i: Vec<f64>,
    /// d sigma / d x'^k.
    pub sigma_kp: Vec<f64>,
    /// Mixed second derivatives, [l][k'].
    pub sigma_lkp: Vec<Vec<f64>>,
    /// Inverse block: sum_k' sigma_inv[i][k'] sigma_lkp[l][k'] = delta_il.
    pub sigma_inv: Vec<Vec<f64>>,
    /// Third derivatives d^3 sigma / dx^k dx^l dx'^j, [k][l][j'].
    pub sigma_klj: Vec<Vec<Vec<f64>>>,
    /// Two-point connection Gamma^i_kl = sigma_inv[i][j'] sigma_klj[k][l][j'].
    pub christoffel: Vec<Vec<Vec<f64>>>,
    /// G_ik = d sigma_i / d x^k - Gamma^l_ik sigma_l.
    pub g_ik: Vec<Vec<f64>>,
}

fn invert_mixed(mixed: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // Need X with X * mixed^T = I.
    mixed
        .transpose()
        .lu()
        .try_inverse()
        .ok_or(Error::DegenerateMixedHessian)
}

fn fd_mixed_block(src: &SigmaSource, x: &[f64], xp: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let n = src.dimension();
    let mut mixed = DMatrix::zeros(n, n);
    for l in 0..n {
        for k in 0..n {
            let pp = src.value(&shifted(x, l, h), &shifted(xp, k, h))?;
            let pm = src.value(&shifted(x, l, h), &shifted(xp, k, -h))?;
            let mp = src.value(&shifted(x, l, -h), &shifted(xp, k, h))?;
            let mm = src.value(&shifted(x, l, -h), &shifted(xp, k, -h))?;
            mixed[(l, k)] = ((pp - pm) - (mp - mm)) / (4.0 * h * h);
        }
    }
    Ok(mixed)
}

pub fn sigma_derivatives(
    src: &SigmaSource,
    x: &Point,
    xp: &Point,
    h: f64,
) -> Result<SigmaDerivatives> {
    let n = src.dimension();
    if x.dim() != n || xp.dim() != n {
        return Err(Error::ChartMismatch {
            expected: n,
            got: if x.dim() != n { x.dim() } else { xp.dim() },
        });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter {
            reason: format!("difference step must be positive, got {h}"),
        });
    }
    let xc = x.coords();
    let xpc = xp.coords();
    src.check_stencil(xc, xpc, h)?;

    let sigma = src.value(xc, xpc)?;
    let mut sigma_i = vec![0.0; n];
    let mut sigma_kp = vec![0.0; n];
    for i in 0..n {
        sigma_i[i] = (src.value(&shifted(xc, i, h), xpc)? - src.value(&shifted(xc, i, -h), xpc)?)
            / (2.0 * h);
        sigma_kp[i] = (src.value(xc, &shifted(xpc, i, h))? - src.value(xc, &shifted(xpc, i, -h))?)
            / (2.0 * h);
    }
    let mixed_fd = fd_mixed_block(src, xc, xpc, h)?;
    let inv_fd = invert_mixed(&mixed_fd)?;

    // Third-derivative layer: one difference of the best available mixed
    // block over x^k.
    let mixed_at = |xk: &[f64]| -> Result<DMatrix<f64>> {
        match src {
            SigmaSource::Metric(m) => mixed_block_variational(m, xk, xpc),
            SigmaSource::Direct { .. } => fd_mixed_block(src, xk, xpc, h),
        }
    };
    let mut sigma_klj = vec![vec![vec![0.0; n]; n]; n];
    for k in 0..n {
        let plus = mixed_at(&shifted(xc, k, h))?;
        let minus = mixed_at(&shifted(xc, k, -h))?;
        for l in 0..n {
            for j in 0..n {
                sigma_klj[k][l][j] = (plus[(l, j)] - minus[(l, j)]) / (2.0 * h);
            }
        }
    }

    // Connection from the best mixed inverse at the center point.
    let inv_best = match src {
        SigmaSource::Metric(m) => invert_mixed(&mixed_block_variational(m, xc, xpc)?)?,
        SigmaSource::Direct { .. } => inv_fd.clone(),
    };
    let mut christoffel = vec![vec![vec![0.0; n]; n]; n];
    for i in 0..n {
        for k in 0..n {
            for l in 0..n {
                let mut v = 0.0;
                for j in 0..n {
                    v += inv_best[(i, j)] * sigma_klj[k][l][j];
                }
                christoffel[i][k][l] = v;
            }
        }
    }

    // G assembly; the first-derivative vector and x-x Hessian come from the
    // matching-precision path.
    let (sigma_l_best, sigma_ik) = match src {
        SigmaSource::Metric(m) => sigma_xx_variational(m, xc, xpc)?,
        SigmaSource::Direct { .. } => {
            let mut hess = DMatrix::zeros(n, n);
            for i in 0..n {
                for k in 0..n {
                    if i == k {
                        let p = src.value(&shifted(xc, i, h), xpc)?;
                        let m0 = sigma;
                        let mi = src.value(&shifted(xc, i, -h), xpc)?;
                        hess[(i, k)] = (p - 2.0 * m0 + mi) / (h * h);
                    } else {
                        let pp = src.value(&shifted(&shifted(xc, i, h), k, h), xpc)?;
                        let pm = src.value(&shifted(&shifted(xc, i, h), k, -h), xpc)?;
                        let mp = src.value(&shifted(&shifted(xc, i, -h), k, h), xpc)?;
                        let mm = src.value(&shifted(&shifted(xc, i, -h), k, -h), xpc)?;
                        hess[(i, k)] = ((pp - pm) - (mp - mm)) / (4.0 * h * h);
                    }
                }
            }
            (sigma_i.clone(), hess)
        }
    };
    let mut g_ik = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let mut v = sigma_ik[(i, k)];
            for l in 0..n {
                v -= christoffel[l][i][k] * sigma_l_best[l];
            }
            g_ik[i][k] = v;
        }
    }

    Ok(SigmaDerivatives {
        sigma,
        sigma_i,
        sigma_kp,
        sigma_lkp: (0..n)
            .map(|l| (0..n).map(|k| mixed_fd[(l, k)]).collect())
            .collect(),
        sigma_inv: (0..n)
            .map(|i| (0..n).map(|k| inv_fd[(i, k)]).collect())
            .collect(),
        sigma_klj,
        christoffel,
        g_ik,
    })
}

/// |sigma_i g^{ik}(x) sigma_k - 2 sigma| / max(1, |2 sigma|), all first
/// derivatives at x by central differences.
pub fn jacobi_hamilton_residual(m: &MetricField, x: &Point, xp: &Point, h: f64) -> Result<f64> {
    jh_residual_impl(&SigmaSource::Metric(m), m, x, xp, h)
}

/// Same residual for a closed-form sigma contracted with an explicitly
/// supplied metric (the detector for sigmas no metric can induce).
pub fn jacobi_hamilton_residual_direct(
    eval: &(dyn Fn(&[f64], &[f64]) -> Result<f64> + Sync),
    contraction_metric: &MetricField,
    x: &Point,
    xp: &Point,
    h: f64,
) -> Result<f64> {
    let src = SigmaSource::Direct {
        dimension: contraction_metric.dimension,
        eval,
    };
    jh_residual_impl(&src, contraction_metric, x, xp, h)
}

fn jh_residual_impl(
    src: &SigmaSource,
    g_of: &MetricField,
    x: &Point,
    xp: &Point,
    h: f64,
) -> Result<f64> {
    let n = src.dimension();
    let xc = x.coords();
    let xpc = xp.coords();
    src.check_stencil(xc, xpc, h)?;
    let sigma = src.value(xc, xpc)?;
    let mut sigma_i = vec![0.0; n];
    for i in 0..n {
        sigma_i[i] = (src.value(&shifted(xc, i, h), xpc)? - src.value(&shifted(xc, i, -h), xpc)?)
            / (2.0 * h);
    }
    let ginv = g_of.metric_inverse(xc);
    let mut contracted = 0.0;
    for i in 0..n {
        for k in 0..n {
            contracted += sigma_i[i] * ginv[(i, k)] * sigma_i[k];
        }
    }
    Ok((contracted - 2.0 * sigma).abs() / (2.0 * sigma).abs().max(1.0))
}

/// Residuals of the world-function consistency system for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResiduals {
    pub x: Point,
    pub xp: Point,
    /// |sigma_i sigma^{i,k'} sigma_k' - 2 sigma| / max(1, |2 sigma|).
    pub closure: f64,
    /// |sigma(x,x') - sigma(x',x)| / max(1, |sigma|).
    pub symmetry: f64,
    /// max(|sigma(x,x)|, |sigma(x',x')|).
    pub diagonal: f64,
    /// max |G_ik covariantly differenced along x|; None when the source has
    /// no derivative backend precise enough to support it (direct sigmas).
    pub gcov_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiemannReport {
    pub h: f64,
    pub rows: Vec<PairResiduals>,
}

impl RiemannReport {
    pub fn worst_closure(&self) -> f64 {
        self.rows.iter().map(|r| r.closure).fold(0.0, f64::max)
    }
    pub fn worst_symmetry(&self) -> f64 {
        self.rows.iter().map(|r| r.symmetry).fold(0.0, f64::max)
    }
    pub fn worst_diagonal(&self) -> f64 {
        self.rows.iter().map(|r| r.diagonal).fold(0.0, f64::max)
    }
    pub fn worst_gcov(&self) -> Option<f64> {
        let vals: Vec<f64> = self.rows.iter().filter_map(|r| r.gcov_max).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.into_iter().fold(0.0, f64::max))
        }
    }
}

fn assemble_g(m: &MetricField, x: &[f64], xp: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let n = m.dimension;
    let (sigma_l, sigma_ik) = sigma_xx_variational(m, x, xp)?;
    let inv = invert_mixed(&mixed_block_variational(m, x, xp)?)?;
    let mut gmat = DMatrix::zeros(n, n);
    // Gamma^l_ik needs the third-derivative layer at this x.
    let mut klj = vec![0.0; n * n * n];
    for k in 0..n {
        let plus = mixed_block_variational(m, &shifted(x, k, h), xp)?;
        let minus = mixed_block_variational(m, &shifted(x, k, -h), xp)?;
        for l in 0..n {
            for j in 0..n {
                klj[(k * n + l) * n + j] = (plus[(l, j)] - minus[(l, j)]) / (2.0 * h);
            }
        }
    }
    for i in 0..n {
        for k in 0..n {
            let mut v = sigma_ik[(i, k)];
            for l in 0..n {
                let mut gamma_lik = 0.0;
                for j in 0..n {
                    gamma_lik += inv[(l, j)] * klj[(i * n + k) * n + j];
                }
                v -= gamma_lik * sigma_l[l];
            }
            gmat[(i, k)] = v;
        }
    }
    Ok(gmat)
}

fn gcov_max(m: &MetricField, x: &[f64], xp: &[f64], h: f64, d: &SigmaDerivatives) -> Result<f64> {
    let n = m.dimension;
    // dG/dx^l by one central difference of the assembled G.
    let mut dg = vec![DMatrix::zeros(n, n); n];
    for l in 0..n {
        let plus = assemble_g(m, &shifted(x, l, h), xp, h)?;
        let minus = assemble_g(m, &shifted(x, l, -h), xp, h)?;
        dg[l] = (plus - minus) / (2.0 * h);
    }
    let mut worst = 0.0f64;
    for i in 0..n {
        for k in 0..n {
            for l in 0..n {
                let mut v = dg[l][(i, k)];
                for mm in 0..n {
                    v -= d.christoffel[mm][i][l] * d.g_ik[mm][k];
                    v -= d.christoffel[mm][k][l] * d.g_ik[i][mm];
                }
                worst = worst.max(v.abs());
            }
        }
    }
    Ok(worst)
}

/// Runs the consistency system over pairs at one step size.
pub fn riemann_consistency(
    src: &SigmaSource,
    pairs: &[(Point, Point)],
    h: f64,
) -> Result<RiemannReport> {
    let rows: Vec<PairResiduals> = pairs
        .par_iter()
        .map(|(x, xp)| -> Result<PairResiduals> {
            let d = sigma_derivatives(src, x, xp, h)?;
            let n = src.dimension();
            let mut contracted = 0.0;
            for i in 0..n {
                for k in 0..n {
                    contracted += d.sigma_i[i] * d.sigma_inv[i][k] * d.sigma_kp[k];
                }
            }
            let closure =
                (contracted - 2.0 * d.sigma).abs() / (2.0 * d.sigma).abs().max(1.0);
            let forward = d.sigma;
            let backward = src.value(xp.coords(), x.coords())?;
            let symmetry = (forward - backward).abs() / forward.abs().max(1.0);
            let diagonal = src
                .value(x.coords(), x.coords())?
                .abs()
                .max(src.value(xp.coords(), xp.coords())?.abs());
            let gcov = match src {
                SigmaSource::Metric(m) => Some(gcov_max(m, x.coords(), xp.coords(), h, &d)?),
                SigmaSource::Direct { .. } => None,
            };
            Ok(PairResiduals {
                x: x.clone(),
                xp: xp.clone(),
                closure,
                symmetry,
                diagonal,
                gcov_max: gcov,
            })
        })
        .collect::<Result<_>>()?;
    Ok(RiemannReport { h, rows })
}

/// Geodesic recovered from the algebraic system sigma_{k'}(x, xp) = b_k' tau,
/// solved for x by damped Newton with continuation along the tau list.
pub fn geodesic_from_algebraic(
    m: &MetricField,
    xp: &Point,
    b: &[f64],
    taus: &[f64],
) -> Result<Vec<Point>> {
    let n = m.dimension;
    if b.len() != n {
        return Err(Error::ChartMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if b.iter().all(|c| *c == 0.0) {
        return Err(Error::InvalidParameter {
            reason: "direction vector b must be nonzero".into(),
        });
    }
    check_in_domain(m, xp.coords())?;
    let xpc = xp.coords();
    let g = m.metric(xpc);
    let sigma_kp = |x: &[f64]| -> Result<Vec<f64>> {
        if x == xpc {
            return Ok(vec![0.0; n]);
        }
        match solve_bvp(m, x, xpc, None)? {
            BvpOutcome::Converged(bvp) => Ok((0..n)
                .map(|k| -(0..n).map(|j| g[(k, j)] * bvp.v0[j]).sum::<f64>())
                .collect()),
            BvpOutcome::Stalled { residual } => Err(Error::RootSearchFailed {
                reason: format!("geodesic solve stalled at residual {residual:e}"),
            }),
        }
    };
    let mut out = Vec::with_capacity(taus.len());
    let mut x_curr = xpc.to_vec();
    for &tau in taus {
        if tau == 0.0 {
            out.push(xp.clone());
            continue;
        }
        let rhs: Vec<f64> = b.iter().map(|c| c * tau).collect();
        let scale = 1.0f64.max(rhs.iter().map(|c| c * c).sum::<f64>().sqrt());
        // Continuation seed: previous solution nudged along -g^{-1} b,
        // clamped into the domain box so the first residual is evaluable.
        if x_curr == xpc {
            let ginv = m.metric_inverse(xpc);
            for i in 0..n {
                let mut step = 0.0;
                for j in 0..n {
                    step += ginv[(i, j)] * rhs[j];
                }
                let (lo, hi) = m.domain.bounds[i];
                x_curr[i] = (xpc[i] - step).clamp(lo, hi);
            }
        }
        let mut converged = false;
        let mut f = {
            let s = sigma_kp(&x_curr)?;
            s.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>()
        };
        for _ in 0..40 {
            let fnorm = f.iter().map(|c| c * c).sum::<f64>().sqrt();
            if fnorm <= 1e-10 * scale {
                converged = true;
                break;
            }
            let mixed =
                mixed_block_variational(m, &x_curr, xpc).map_err(|e| Error::RootSearchFailed {
                    reason: format!("mixed derivative block unavailable: {e}"),
                })?;
            // d sigma_{k'} / d x^l is mixed[(l, k)] transposed into the
            // Jacobian J[k][l].
            let jac = DMatrix::from_fn(n, n, |k, l| mixed[(l, k)]);
            let fvec = nalgebra::DVector::from_column_slice(&f);
            let Some(delta) = jac.lu().solve(&fvec) else {
                return Err(Error::RootSearchFailed {
                    reason: "singular Jacobian in algebraic geodesic solve".into(),
                });
            };
            let mut lambda = 1.0;
            let mut improved = false;
            for _ in 0..6 {
                let x_try: Vec<f64> = x_curr
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v - lambda * delta[i])
                    .collect();
                if !m.contains(&x_try) {
                    lambda *= 0.5;
                    continue;
                }
                let s = sigma_kp(&x_try)?;
                let f_try: Vec<f64> = s.iter().zip(&rhs).map(|(a, b)| a - b).collect();
                let try_norm = f_try.iter().map(|c| c * c).sum::<f64>().sqrt();
                if try_norm < fnorm {
                    x_curr = x_try;
                    f = f_try;
                    improved = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !improved {
                return Err(Error::RootSearchFailed {
                    reason: format!("no descent at tau {tau}, last residual {fnorm:e}"),
                });
            }
        }
        if !converged {
            let fnorm = f.iter().map(|c| c * c).sum::<f64>().sqrt();
            if fnorm > 1e-10 * scale {
                return Err(Error::RootSearchFailed {
                    reason: format!("iteration cap at tau {tau}, residual {fnorm:e}"),
                });
            }
        }
        if !m.contains(&x_curr) {
            return Err(Error::RootSearchFailed {
                reason: format!("solution at tau {tau} leaves the metric domain"),
            });
        }
        out.push(Point::from_slice(&x_curr));
    }
    Ok(out)
}

/// Least-squares slope of ln(residual) against ln(h); the observed
/// convergence order of a refinement study.
pub fn observed_order(hs: &[f64], residuals: &[f64]) -> Result<f64> {
    if hs.len() != residuals.len() || hs.len() < 2 {
        return Err(Error::InvalidParameter {
            reason: "order fit needs matching lists of at least two levels".into(),
        });
    }
    if hs.iter().any(|h| !(h > &0.0)) || residuals.iter().any(|r| !(r > &0.0)) {
        return Err(Error::InvalidParameter {
            reason: "order fit needs positive steps and residuals".into(),
        });
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.ln()).collect();
    let nf = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DeformedParams, DeformedSpacetime, GapPolicy};
    use crate::sigma::WorldFunction;
    use std::f64::consts::PI;

    fn pt(coords: &[f64]) -> Point {
        Point::from_slice(coords)
    }

    fn flat2() -> MetricField {
        let domain = PointChart::new(vec![(-5.0, 5.0), (-5.0, 5.0)], vec![2, 2]).unwrap();
        MetricField::new(MetricKind::EuclideanFlat, domain).unwrap()
    }

    fn sphere() -> MetricField {
        let domain =
            PointChart::new(vec![(0.1, PI - 0.1), (-6.0, 6.0)], vec![2, 2]).unwrap();
        MetricField::new(MetricKind::UnitSphere, domain).unwrap()
    }

    fn conformal() -> MetricField {
        let domain = PointChart::new(vec![(-2.0, 2.0), (-2.0, 2.0)], vec![2, 2]).unwrap();
        MetricField::new(
            MetricKind::ConformalFlat {
                phi: [0.0, 0.1, -0.05, 0.05, 0.02, -0.03],
            },
            domain,
        )
        .unwrap()
    }

    fn great_circle_arc(a: &[f64], b: &[f64]) -> f64 {
        let c = a[0].cos() * b[0].cos() + a[0].sin() * b[0].sin() * (a[1] - b[1]).cos();
        c.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn flat_geodesic_is_exact() {
        let m = flat2();
        let sol = solve_geodesic(&m, &pt(&[3.0, 4.0]), &pt(&[0.0, 0.0])).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.length, 5.0);
        assert_eq!(sol.sigma, 12.5);
        assert_eq!(sol.path.first().unwrap(), &pt(&[0.0, 0.0]));
        assert_eq!(sol.path.last().unwrap(), &pt(&[3.0, 4.0]));
        let mid = &sol.path[RK4_STEPS / 2];
        assert!((mid.coords()[0] - 1.5).abs() <= 1e-12);
        assert!((mid.coords()[1] - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn coincident_points_give_zero() {
        let m = flat2();
        let p = pt(&[1.0, -1.0]);
        let sol = solve_geodesic(&m, &p, &p).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.length, 0.0);
        assert_eq!(sigma_from_metric(&m, &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn flat_sigma_matches_euclidean_analytic() {
        use rand::{Rng, SeedableRng};
        let m = flat2();
        let e2 = crate::sigma::Euclidean::new(2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(101);
        for _ in 0..1000 {
            let x = pt(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
            let xp = pt(&[rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]);
            let via_metric = sigma_from_metric(&m, &x, &xp).unwrap();
            let analytic = e2.sigma(&x, &xp).unwrap();
            assert!(
                (via_metric - analytic).abs() <= 1e-8 * analytic.max(1.0),
                "{via_metric} vs {analytic}"
            );
        }
    }

    #[test]
    fn minkowski_flat_signs_sigma_by_causal_class() {
        let domain = PointChart::new(
            vec![(-5.0, 5.0), (-5.0, 5.0), (-5.0, 5.0), (-5.0, 5.0)],
            vec![2, 2, 2, 2],
        )
        .unwrap();
        let m = MetricField::new(MetricKind::MinkowskiFlat, domain).unwrap();
        let o = pt(&[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            sigma_from_metric(&m, &pt(&[2.0, 0.0, 0.0, 0.0]), &o).unwrap(),
            2.0
        );
        assert_eq!(
            sigma_from_metric(&m, &pt(&[0.0, 1.0, 0.0, 0.0]), &o).unwrap(),
            -0.5
        );
    }

    #[test]
    fn sphere_quarter_circle_length() {
        let m = sphere();
        let x = pt(&[3.0 * PI / 4.0, 1.0]);
        let xp = pt(&[PI / 4.0, 1.0]);
        let sol = solve_geodesic(&m, &x, &xp).unwrap();
        assert!(sol.converged, "residual {}", sol.residual);
        assert!((sol.length - PI / 2.0).abs() <= 1e-7, "S = {}", sol.length);
        let sigma = sigma_from_metric(&m, &x, &xp).unwrap();
        assert!((sigma - PI * PI / 8.0).abs() <= 1e-7);
    }

    #[test]
    fn sphere_matches_great_circle_oracle() {
        use rand::{Rng, SeedableRng};
        let m = sphere();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 25 {
            let x = [rng.gen_range(0.6..PI - 0.6), rng.gen_range(-1.5..1.5)];
            let xp = [rng.gen_range(0.6..PI - 0.6), rng.gen_range(-1.5..1.5)];
            let arc = great_circle_arc(&x, &xp);
            if arc < 0.05 || arc > 2.6 {
                continue;
            }
            let sol = solve_geodesic(&m, &pt(&x), &pt(&xp)).unwrap();
            assert!(sol.converged);
            assert!(
                (sol.length - arc).abs() <= 1e-6,
                "S {} vs arc {arc}",
                sol.length
            );
            checked += 1;
        }
    }

    #[test]
    fn sphere_sigma_is_symmetric() {
        // The two directions integrate different discretized flows, so they
        // agree to the integrator truncation level, not bitwise.
        let m = sphere();
        let x = pt(&[0.7, 0.3]);
        let xp = pt(&[2.1, 1.4]);
        let a = sigma_from_metric(&m, &x, &xp).unwrap();
        let b = sigma_from_metric(&m, &xp, &x).unwrap();
        assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn flat_derivatives_hit_the_closed_forms() {
        let m = flat2();
        let src = SigmaSource::Metric(&m);
        let x = pt(&[1.0, 2.0]);
        let xp = pt(&[-0.5, 0.25]);
        let d = sigma_derivatives(&src, &x, &xp, 1e-3).unwrap();
        // sigma_i = (x - xp)_i, sigma_k' = (xp - x)_k, sigma_lk' = -I.
        for i in 0..2 {
            let diff = x.coords()[i] - xp.coords()[i];
            assert!((d.sigma_i[i] - diff).abs() <= 1e-9);
            assert!((d.sigma_kp[i] + diff).abs() <= 1e-9);
            for k in 0..2 {
                let expect = if i == k { -1.0 } else { 0.0 };
                assert!((d.sigma_lkp[i][k] - expect).abs() <= 1e-9);
                assert!((d.sigma_inv[i][k] - expect).abs() <= 1e-9);
            }
        }
        // Quadratic sigma: all third derivatives and the connection vanish.
        for k in 0..2 {
            for l in 0..2 {
                for j in 0..2 {
                    assert!(d.sigma_klj[k][l][j].abs() <= 1e-9);
                    assert!(d.christoffel[k][l][j].abs() <= 1e-9);
                }
            }
        }
        // G reduces to the identity.
        for i in 0..2 {
            for k in 0..2 {
                let expect = if i == k { 1.0 } else { 0.0 };
                assert!((d.g_ik[i][k] - expect).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn mixed_block_agrees_between_differences_and_variational() {
        let m = sphere();
        let x = [1.9, 1.1];
        let xp = [0.9, 0.4];
        let src = SigmaSource::Metric(&m);
        let fd = fd_mixed_block(&src, &x, &xp, 1e-3).unwrap();
        let var = mixed_block_variational(&m, &x, &xp).unwrap();
        for l in 0..2 {
            for k in 0..2 {
                assert!(
                    (fd[(l, k)] - var[(l, k)]).abs() <= 1e-5,
                    "({l},{k}): {} vs {}",
                    fd[(l, k)],
                    var[(l, k)]
                );
            }
        }
    }

    #[test]
    fn jacobi_hamilton_residuals_across_the_zoo() {
        let m = flat2();
        let r = jacobi_hamilton_residual(&m, &pt(&[1.5, -2.0]), &pt(&[0.25, 0.5]), 1e-4).unwrap();
        assert!(r <= 1e-8, "flat residual {r}");
        let s = sphere();
        let r = jacobi_hamilton_residual(&s, &pt(&[1.9, 1.1]), &pt(&[0.9, 0.4]), 1e-3).unwrap();
        assert!(r <= 1e-5, "sphere residual {r}");
        let c = conformal();
        let r = jacobi_hamilton_residual(&c, &pt(&[0.8, -0.3]), &pt(&[-0.4, 0.5]), 1e-3).unwrap();
        assert!(r <= 1e-5, "conformal residual {r}");
    }

    #[test]
    fn deformed_sigma_fails_the_detector_by_exactly_the_lump() {
        let params = DeformedParams::with_d0(0.1, GapPolicy::Error, 4).unwrap();
        let wf = DeformedSpacetime::new(params);
        let eval = move |x: &[f64], xp: &[f64]| wf.sigma_coords(x, xp);
        let domain = PointChart::new(
            vec![(-5.0, 5.0), (-5.0, 5.0), (-5.0, 5.0), (-5.0, 5.0)],
            vec![2, 2, 2, 2],
        )
        .unwrap();
        let mink = MetricField::new(MetricKind::MinkowskiFlat, domain).unwrap();
        let x = pt(&[2.0, 1.0, 1.0, 0.0]); // sigma_M = 1, upper branch
        let xp = pt(&[0.0, 0.0, 0.0, 0.0]);
        let r = jacobi_hamilton_residual_direct(&eval, &mink, &x, &xp, 1e-3).unwrap();
        let expected = 2.0 * 0.1 / (2.0 * 1.1);
        assert!((r - expected).abs() <= 1e-9, "{r} vs {expected}");
        assert!(r >= 0.01);
    }

    #[test]
    fn flat_consistency_residuals_are_tiny() {
        let m = flat2();
        let src = SigmaSource::Metric(&m);
        let pairs = vec![
            (pt(&[1.0, 2.0]), pt(&[-0.5, 0.25])),
            (pt(&[-1.5, 0.5]), pt(&[2.0, -2.0])),
        ];
        let report = riemann_consistency(&src, &pairs, 1e-3).unwrap();
        assert!(report.worst_closure() <= 1e-6);
        assert!(report.worst_symmetry() <= 1e-6);
        assert!(report.worst_diagonal() <= 1e-6);
        assert!(report.worst_gcov().unwrap() <= 1e-6);
    }

    #[test]
    fn sphere_consistency_converges_under_refinement() {
        let m = sphere();
        let src = SigmaSource::Metric(&m);
        let pairs = vec![(pt(&[1.9, 1.1]), pt(&[0.9, 0.4]))];
        let hs = [4e-3, 2e-3, 1e-3];
        let mut closure = Vec::new();
        let mut gcov = Vec::new();
        for &h in &hs {
            let report = riemann_consistency(&src, &pairs, h).unwrap();
            closure.push(report.worst_closure());
            gcov.push(report.worst_gcov().unwrap());
        }
        let closure_order = observed_order(&hs, &closure).unwrap();
        let gcov_order = observed_order(&hs, &gcov).unwrap();
        assert!(
            closure_order >= 1.5,
            "closure {closure:?} order {closure_order}"
        );
        assert!(gcov_order >= 1.5, "gcov {gcov:?} order {gcov_order}");
    }

    #[test]
    fn deformed_consistency_flags_closure_only() {
        let params = DeformedParams::with_d0(0.1, GapPolicy::Error, 4).unwrap();
        let wf = DeformedSpacetime::new(params);
        let eval = move |x: &[f64], xp: &[f64]| wf.sigma_coords(x, xp);
        let src = SigmaSource::Direct {
            dimension: 4,
            eval: &eval,
        };
        let pairs = vec![(pt(&[2.0, 1.0, 1.0, 0.0]), pt(&[0.0, 0.0, 0.0, 0.0]))];
        let report = riemann_consistency(&src, &pairs, 1e-3).unwrap();
        let expected = 2.0 * 0.1 / (2.0 * 1.1);
        assert!((report.worst_closure() - expected).abs() <= 1e-8);
        assert!(report.worst_symmetry() <= 1e-12);
        assert!(report.worst_diagonal() == 0.0);
        assert!(report.worst_gcov().is_none());
    }

    #[test]
    fn algebraic_geodesic_is_straight_on_flat() {
        let m = flat2();
        let xp = pt(&[1.0, 1.0]);
        let b = [-2.0, -1.0];
        let taus = [0.0, 0.25, 0.5, 1.0];
        let points = geodesic_from_algebraic(&m, &xp, &b, &taus).unwrap();
        for (point, &tau) in points.iter().zip(&taus) {
            // Flat: x(tau) = xp - b tau.
            for i in 0..2 {
                let expect = xp.coords()[i] - b[i] * tau;
                assert!((point.coords()[i] - expect).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn algebraic_geodesic_tracks_the_flow_on_the_sphere() {
        let m = sphere();
        let xp = pt(&[PI / 2.0, 0.5]);
        let v0 = [0.3, 0.4];
        // b = -g(xp) v0 makes the algebraic solutions the flow points x(tau).
        let g = m.metric(xp.coords());
        let b: Vec<f64> = (0..2)
            .map(|k| -(0..2).map(|j| g[(k, j)] * v0[j]).sum::<f64>())
            .collect();
        let taus = [0.25, 0.5, 0.75, 1.0];
        let points = geodesic_from_algebraic(&m, &xp, &b, &taus).unwrap();
        for (point, &tau) in points.iter().zip(&taus) {
            let scaled: Vec<f64> = v0.iter().map(|v| v * tau).collect();
            let flow = integrate_flow(&m, xp.coords(), &scaled);
            for i in 0..2 {
                assert!(
                    (point.coords()[i] - flow.x1[i]).abs() <= 1e-6,
                    "tau {tau} axis {i}: {} vs {}",
                    point.coords()[i],
                    flow.x1[i]
                );
            }
        }
    }

    #[test]
    fn algebraic_geodesic_rejects_zero_direction() {
        let m = flat2();
        assert!(geodesic_from_algebraic(&m, &pt(&[0.0, 0.0]), &[0.0, 0.0], &[0.5]).is_err());
    }

    #[test]
    fn algebraic_geodesic_fails_cleanly_outside_the_domain() {
        let m = flat2();
        let err =
            geodesic_from_algebraic(&m, &pt(&[0.0, 0.0]), &[-1.0, 0.0], &[20.0]).unwrap_err();
        match err {
            Error::RootSearchFailed { .. } | Error::InvalidParameter { .. } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn stencil_domain_guard_fires() {
        let m = sphere();
        let src = SigmaSource::Metric(&m);
        let near_edge = pt(&[0.1005, 0.0]);
        let err = sigma_derivatives(&src, &near_edge, &pt(&[1.0, 0.5]), 1e-3).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }));
    }

    #[test]
    fn observed_order_recovers_a_quadratic_law() {
        let hs = [4e-3, 2e-3, 1e-3];
        let rs: Vec<f64> = hs.iter().map(|h| 3.0 * h * h).collect();
        let order = observed_order(&hs, &rs).unwrap();
        assert!((order - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn metric_kind_serializes_with_a_tag() {
        let m = conformal();
        let json = serde_json::to_string(&m.kind).unwrap();
        assert!(json.contains("\"family\":\"conformal_flat\""));
        let back: MetricKind = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m.kind);
    }
}
