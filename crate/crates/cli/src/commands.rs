//! One function per subcommand. Each returns the process exit code, or a
//! `Failure` carrying one; success and property-holds are 0, a failed check
//! is 1, everything else goes through the shared error mapping.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wfgeom::axioms::{check_metric_axioms, check_sigma_space, AxiomReport};
use wfgeom::chart::{Point, PointChart};
use wfgeom::geometry::GeometrySpec;
use wfgeom::gram::DEFAULT_GRAM_TOL;
use wfgeom::models::{
    convexity_discrepancy, sample_outside_disk, tube_thickness, CutPlane, GapPolicy,
};
use wfgeom::objects::{
    estimate_dimension, find_intransitivity_witness, sample_object, transitivity_search,
    DimensionEstimate, ObjectKind, ObjectSpec, DEFAULT_SECTION_TOL, DEFAULT_SEGMENT_TOL,
};
use wfgeom::riemann::{
    observed_order, riemann_consistency, solve_geodesic, MetricField, MetricKind, RiemannReport,
    SigmaSource,
};
use wfgeom::WorldFunction;

use crate::config::{
    csv_float, deformed_params, parse_chart, parse_point, require_chart, require_geometry,
    require_point, ChartArg, Emitter, Failure, PointArg, RunConfig,
};

/// Merged global state every command reads: manifest, output routing, and the
/// already-merged seed and tolerance overrides.
pub struct Ctx {
    pub cfg: RunConfig,
    pub emitter: Emitter,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

impl Ctx {
    fn seed(&self) -> Result<u64, Failure> {
        self.seed.ok_or(Failure {
            code: 2,
            message: wfgeom::Error::SeedRequired.to_string(),
        })
    }

    fn tol_or(&self, default: f64) -> f64 {
        self.tol.unwrap_or(default)
    }
}

fn midpoint(p: &Point, q: &Point) -> Point {
    let coords: Vec<f64> = p
        .coords()
        .iter()
        .zip(q.coords())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    Point::from_slice(&coords)
}

fn centroid(points: &[Point]) -> Point {
    let dim = points[0].dim();
    let mut coords = vec![0.0; dim];
    for p in points {
        for (c, v) in coords.iter_mut().zip(p.coords()) {
            *c += v;
        }
    }
    for c in &mut coords {
        *c /= points.len() as f64;
    }
    Point::from_slice(&coords)
}

/// Shared tail of the four object-sampling commands: sweep the chart, attempt
/// a local dimension estimate (advisory, never fatal), emit sample + summary.
fn run_sample(
    ctx: &Ctx,
    spec: &GeometrySpec,
    chart: &PointChart,
    object: ObjectSpec,
    center: Point,
    window: Option<f64>,
) -> Result<i32, Failure> {
    let wf = spec.build()?;
    let sample = sample_object(&*wf, chart, &object)?;
    let window = window
        .or(ctx.cfg.window)
        .unwrap_or(0.25 * chart.extent());
    let (estimate, note): (Option<DimensionEstimate>, Option<String>) =
        match estimate_dimension(&sample, &center, window) {
            Ok(e) => (Some(e), None),
            Err(e) => (None, Some(e.to_string())),
        };

    let csv = sample.to_csv();
    let mut json_body = serde_json::to_string_pretty(&sample)?;
    json_body.push('\n');
    let in_file = ctx.emitter.primary(csv, json_body)?;

    let mut summary = json!({
        "member_count": sample.member_count(),
        "dimension_estimate": estimate,
        "window": window,
    });
    if let Some(note) = note {
        summary["estimate_note"] = json!(note);
    }
    ctx.emitter.summary(in_file, serde_json::to_string(&summary)?);
    Ok(0)
}

#[derive(Args)]
pub struct TubeArgs {
    /// Geometry: shorthand name, spec file, or inline JSON.
    #[arg(long)]
    pub geometry: Option<String>,
    /// Lattice to sweep: lo:hi:res per axis, comma separated, or inline JSON.
    #[arg(long, value_parser = parse_chart)]
    pub chart: Option<ChartArg>,
    /// First axis point, comma-separated coordinates.
    #[arg(long, value_parser = parse_point)]
    pub p0: Option<PointArg>,
    /// Second axis point.
    #[arg(long, value_parser = parse_point)]
    pub p1: Option<PointArg>,
    /// Dimension-estimate window radius (default: a quarter of the chart extent).
    #[arg(long)]
    pub window: Option<f64>,
}

pub fn tube(args: &TubeArgs, ctx: &Ctx) -> Result<i32, Failure> {
    let spec = require_geometry(
        args.geometry.as_deref(),
        ctx.cfg.geometry.as_ref(),
        ctx.cfg.dimension,
        ctx.cfg.d0,
    )?;
    let chart = require_chart(args.chart.as_ref(), ctx.cfg.chart.as_ref())?;
    let p0 = require_point(args.p0.as_ref(), ctx.cfg.p0.as_ref(), "p0")?;
    let p1 = require_point(args.p1.as_ref(), ctx.cfg.p1.as_ref(), "p1")?;
    let center = midpoint(&p0, &p1);
    let object = ObjectSpec {
        kind: ObjectKind::Tube { p0, p1 },
        tol: ctx.tol_or(DEFAULT_GRAM_TOL),
    };
    run_sample(ctx, &spec, &chart, object, center, args.window)
}

#[derive(Args)]
pub struct PlaneArgs {
    #[arg(long)]
    pub geometry: Option<String>,
    #[arg(long, value_parser = parse_chart)]
    pub chart: Option<ChartArg>,
    /// Determining point, repeatable; base point first, then the tips.
    #[arg(long = "point", value_parser = parse_point)]
    pub points: Vec<PointArg>,
    #[arg(long)]
    pub window: Option<f64>,
}

pub fn plane(args: &PlaneArgs, ctx: &Ctx) -> Result<i32, Failure> {
    let spec = require_geometry(
        args.geometry.as_deref(),
        ctx.cfg.geometry.as_ref(),
        ctx.cfg.dimension,
        ctx.cfg.d0,
    )?;
    let chart = require_chart(args.chart.as_ref(), ctx.cfg.chart.as_ref())?;
    let coords: Vec<Vec<f64>> = if !args.points.is_empty() {
        args.points.iter().map(|p| p.0.clone()).collect()
    } else {
        ctx.cfg.points.clone().ok_or_else(|| {
            Failure::usage("missing --point list (or \"points\" in the config)")
        })?
    };
    let points = coords
        .into_iter()
        .map(Point::new)
        .collect::<wfgeom::Result<Vec<Point>>>()?;
    if points.len() < 2 {
        return Err(Failure::usage("a plane needs a base point and at least one tip"));
    }
    let center = centroid(&points);
    let object = ObjectSpec {
        kind: ObjectKind::Plane { points },
        tol: ctx.tol_or(DEFAULT_GRAM_TOL),
    };
    run_sample(ctx, &spec, &chart, object, center, args.window)
}

#[derive(Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub geometry: Option<String>,
    #[arg(long, value_parser = parse_chart)]
    pub chart: Option<ChartArg>,
    /// One endpoint.
    #[arg(long, value_parser = parse_point)]
    pub p: Option<PointArg>,
    /// The other endpoint.
    #[arg(long, value_parser = parse_point)]
    pub q: Option<PointArg>,
    #[arg(long)]
    pub window: Option<f64>,
}

pub fn segment(args: &SegmentArgs, ctx: &Ctx) -> Result<i32, Failure> {
    let spec = require_geometry(
        args.geometry.as_deref(),
        ctx.cfg.geometry.as_ref(),
        ctx.cfg.dimension,
        ctx.cfg.d0,
    )?;
    let chart = require_chart(args.chart.as_ref(), ctx.cfg.chart.as_ref())?;
    let p = require_point(args.p.as_ref(), ctx.cfg.p.as_ref(), "p")?;
    let q = require_point(args.q.as_ref(), ctx.cfg.q.as_ref(), "q")?;
    let center = midpoint(&p, &q);
    let object = ObjectSpec {
        kind: ObjectKind::Segment { p, q },
        tol: ctx.tol_or(DEFAULT_SEGMENT_TOL),
    };
    run_sample(ctx, &spec, &chart, object, center, args.window)
}

#[derive(Args)]
pub struct SectionArgs {
    #[arg(long)]
    pub geometry: Option<String>,
    #[arg(long, value_parser = parse_chart)]
    pub chart: Option<ChartArg>,
    /// First tube-axis point.
    #[arg(long, value_parser = parse_point)]
    pub p0: Option<PointArg>,
    /// Second tube-axis point.
    #[arg(long, value_parser = parse_point)]
    pub p1: Option<PointArg>,
    /// Point the section passes through.
    #[arg(long, value_parser = parse_point)]
    pub through: Option<PointArg>,
    #[arg(long)]
    pub window: Option<f64>,
}

pub fn section(args: &SectionArgs, ctx: &Ctx) -> Result<i32, Failure> {
    let spec = require_geometry(
        args.geometry.as_deref(),
        ctx.cfg.geometry.as_ref(),
        ctx.cfg.dimension,
        ctx.cfg.d0,
    )?;
    let chart = require_chart(args.chart.as_ref(), ctx.cfg.chart.as_ref())?;
    let p0 = require_point(args.p0.as_ref(), ctx.cfg.p0.as_ref(), "p0")?;
    let p1 = require_point(args.p1.as_ref(), ctx.cfg.p1.as_ref(), "p1")?;
    let through = require_point(args.through.as_ref(), ctx.cfg.through.as_ref(), "through")?;
    let center = through.clone();
    let object = ObjectSpec {
        kind: ObjectKind::Section { p0, p1, through },
        tol: ctx.tol_or(DEFAULT_SECTION_TOL),
    };
    run_sample(ctx, &spec, &chart, object, center, args.window)
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricChoice {
    /// Flat Euclidean metric on a box.
    Flat,
    /// Unit sphere in colatitude/longitude away from the poles.
    Sphere,
}

/// How pairs are drawn for a sigma given directly rather than via a metric.
enum DirectPairs {
    Euclidean,
    /// Timelike separations with flat sigma at least this far above zero,
    /// keeping finite-difference probes clear of causal boundaries and gaps.
    Timelike { sigma_lo: f64 },
}

enum VerifySource {
    Metric(MetricField),
    Direct {
        wf: Box<dyn WorldFunction>,
        pairs: DirectPairs,
    },
}

fn builtin_metric(choice: MetricChoice, dimension: Option<usize>) -> Result<MetricField, Failure> {
    match choice {
        MetricChoice::Flat => {
            let dim = dimension.unwrap_or(3);
            Ok(MetricField::new(
                MetricKind::EuclideanFlat,
                PointChart::uniform(dim, -10.0, 10.0, 2)?,
            )?)
        }
        MetricChoice::Sphere => Ok(MetricField::new(
            MetricKind::UnitSphere,
            PointChart::new(vec![(0.1, PI - 0.1), (-6.0, 6.0)], vec![2, 2])?,
        )?),
    }
}

fn verify_source(
    metric: Option<MetricChoice>,
    geometry: Option<&str>,
    ctx: &Ctx,
    dimension: Option<usize>,
    d0: Option<f64>,
) -> Result<VerifySource, Failure> {
    // Flag layer first; the config layer only speaks when no flag chose.
    let (metric, geometry_text) = if metric.is_some() || geometry.is_some() {
        (metric, geometry.map(str::to_owned))
    } else {
        let cfg_metric = match ctx.cfg.metric.as_deref() {
            None => None,
            Some("flat") => Some(MetricChoice::Flat),
            Some("sphere") => Some(MetricChoice::Sphere),
            Some(other) => {
                return Err(Failure::usage(format!(
                    "unknown metric {other:?}: expected flat or sphere"
                )))
            }
        };
        let cfg_geometry = ctx.cfg.geometry.as_ref();
        if cfg_metric.is_some() && cfg_geometry.is_some() {
            return Err(Failure::usage(
                "config sets both \"metric\" and \"geometry\"; keep one",
            ));
        }
        match (cfg_metric, cfg_geometry) {
            (Some(m), _) => (Some(m), None),
            (None, Some(serde_json::Value::String(s))) => (None, Some(s.clone())),
            (None, Some(v)) => (None, Some(v.to_string())),
            (None, None) => {
                return Err(Failure::usage("pass --metric or --geometry"));
            }
        }
    };

    if let Some(choice) = metric {
        return Ok(VerifySource::Metric(builtin_metric(
            choice,
            dimension.or(ctx.cfg.dimension),
        )?));
    }
    let spec = require_geometry(
        geometry_text.as_deref(),
        None,
        dimension.or(ctx.cfg.dimension),
        d0.or(ctx.cfg.d0),
    )?;
    match &spec {
        GeometrySpec::Riemann { metric, domain } => Ok(VerifySource::Metric(MetricField::new(
            metric.clone(),
            domain.clone(),
        )?)),
        GeometrySpec::Euclidean { .. } => Ok(VerifySource::Direct {
            wf: spec.build()?,
            pairs: DirectPairs::Euclidean,
        }),
        GeometrySpec::Minkowski { .. } => Ok(VerifySource::Direct {
            wf: spec.build()?,
            pairs: DirectPairs::Timelike { sigma_lo: 0.5 },
        }),
        GeometrySpec::Deformed { .. } => {
            let params = deformed_params(&spec).expect("deformed spec")?;
            Ok(VerifySource::Direct {
                wf: spec.build()?,
                pairs: DirectPairs::Timelike {
                    sigma_lo: (params.sigma0 + 0.25).max(0.5),
                },
            })
        }
        GeometrySpec::CutPlane => Err(Failure::usage(
            "cut-plane sigma is not differentiable across the shadow boundary; \
             nothing smooth to verify",
        )),
        GeometrySpec::Tabulated { .. } => Err(Failure::usage(
            "tabulated sigma has no neighborhood to difference",
        )),
    }
}

/// Pairs interior to the metric domain, margins wide enough that every
/// finite-difference probe stays inside.
fn metric_pairs(
    m: &MetricField,
    count: usize,
    h: f64,
    seed: u64,
) -> Result<Vec<(Point, Point)>, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while pairs.len() < count {
        attempts += 1;
        if attempts > 10_000 + 1_000 * count {
            return Err(Failure::numerical(
                "pair sampler stalled; domain too tight for the separation floor",
            ));
        }
        let mut x = Vec::with_capacity(m.dimension);
        let mut xp = Vec::with_capacity(m.dimension);
        for (lo, hi) in &m.domain.bounds {
            let span = hi - lo;
            let margin = 0.05 * span + 2.0 * h;
            if !(lo + margin < hi - margin) {
                return Err(Failure::usage(
                    "metric domain too small for finite-difference probes",
                ));
            }
            let a = rng.gen_range((lo + margin)..(hi - margin));
            let off = (0.2 * span).min(0.5);
            let b = (a + rng.gen_range(-off..off)).clamp(lo + margin, hi - margin);
            x.push(a);
            xp.push(b);
        }
        let sep2: f64 = x.iter().zip(&xp).map(|(a, b)| (a - b) * (a - b)).sum();
        if sep2 < 0.01 {
            continue;
        }
        pairs.push((Point::from_slice(&x), Point::from_slice(&xp)));
    }
    Ok(pairs)
}

fn direct_pairs(
    kind: &DirectPairs,
    dim: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(Point, Point)>, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count);
    match kind {
        DirectPairs::Euclidean => {
            while pairs.len() < count {
                let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let xp: Vec<f64> = x.iter().map(|a| a + rng.gen_range(-0.5..0.5)).collect();
                let sep2: f64 = x.iter().zip(&xp).map(|(a, b)| (a - b) * (a - b)).sum();
                if sep2 < 0.01 {
                    continue;
                }
                pairs.push((Point::from_slice(&x), Point::from_slice(&xp)));
            }
        }
        DirectPairs::Timelike { sigma_lo } => {
            for _ in 0..count {
                let xp: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let s: Vec<f64> = (0..dim - 1).map(|_| rng.gen_range(-0.2..0.2)).collect();
                let sigma_m = rng.gen_range(*sigma_lo..(sigma_lo + 1.5));
                let s2: f64 = s.iter().map(|v| v * v).sum();
                let dt = (2.0 * sigma_m + s2).sqrt();
                let mut x = xp.clone();
                x[0] += dt;
                for (xi, si) in x[1..].iter_mut().zip(&s) {
                    *xi += si;
                }
                pairs.push((Point::from_slice(&x), Point::from_slice(&xp)));
            }
        }
    }
    Ok(pairs)
}

fn report_csv(report: &RiemannReport, dim: usize) -> String {
    let mut out = String::new();
    for axis in 0..dim {
        let _ = write!(out, "x{axis},");
    }
    for axis in 0..dim {
        let _ = write!(out, "xp{axis},");
    }
    out.push_str("closure,symmetry,diagonal,gcov_max\n");
    for row in &report.rows {
        for c in row.x.coords() {
            out.push_str(&csv_float(*c));
            out.push(',');
        }
        for c in row.xp.coords() {
            out.push_str(&csv_float(*c));
            out.push(',');
        }
        let _ = write!(
            out,
            "{},{},{},",
            csv_float(row.closure),
            csv_float(row.symmetry),
            csv_float(row.diagonal)
        );
        if let Some(g) = row.gcov_max {
            out.push_str(&csv_float(g));
        }
        out.push('\n');
    }
    out
}

#[derive(Args)]
pub struct RiemannVerifyArgs {
    /// Built-in metric to check.
    #[arg(long, value_enum, conflicts_with = "geometry")]
    pub metric: Option<MetricChoice>,
    /// Geometry whose sigma should satisfy the differential identities.
    #[arg(long)]
    pub geometry: Option<String>,
    /// Random point pairs to test.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Finite-difference step.
    #[arg(long)]
    pub h: Option<f64>,
    /// Run at 4h, 2h, h and fit convergence orders instead of thresholding.
    #[arg(long)]
    pub h_sweep: bool,
    /// Worst residual allowed at a single step size.
    #[arg(long)]
    pub max_residual: Option<f64>,
    /// Smallest acceptable convergence order under --h-sweep.
    #[arg(long)]
    pub min_order: Option<f64>,
    /// Dimension for flat built-ins and geometry shorthands.
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Deformation constant for the deformed shorthand.
    #[arg(long)]
    pub d0: Option<f64>,
}

pub fn riemann_verify(args: &RiemannVerifyArgs, ctx: &Ctx) -> Result<i32, Failure> {
    let seed = ctx.seed()?;
    let count = args.pairs.or(ctx.cfg.pairs).unwrap_or(20);
    let h = args.h.or(ctx.cfg.h).unwrap_or(1e-3);
    if !(h > 0.0) || !h.is_finite() {
        return Err(Failure::usage("h must be a positive finite step"));
    }
    let sweep = args.h_sweep || ctx.cfg.h_sweep.unwrap_or(false);
    let max_residual = args.max_residual.or(ctx.cfg.max_residual).unwrap_or(1e-6);
    let min_order = args.min_order.or(ctx.cfg.min_order);

    let source = verify_source(args.metric, args.geometry.as_deref(), ctx, args.dimension, args.d0)?;
    // The sweep reruns at 4h, so pairs must clear the widest probe stencil.
    let margin_h = if sweep { 4.0 * h } else { h };
    let (pairs, dim) = match &source {
        VerifySource::Metric(m) => (metric_pairs(m, count, margin_h, seed)?, m.dimension),
        VerifySource::Direct { wf, pairs } => {
            (direct_pairs(pairs, wf.dimension(), count, seed)?, wf.dimension())
        }
    };

    // Owned closure must outlive the borrowing SigmaSource below.
    let direct_eval = match &source {
        VerifySource::Direct { wf, .. } => {
            let wf = &**wf;
            Some(move |a: &[f64], b: &[f64]| -> wfgeom::Result<f64> {
                wf.sigma(&Point::new(a.to_vec())?, &Point::new(b.to_vec())?)
            })
        }
        VerifySource::Metric(_) => None,
    };
    let src = match &source {
        VerifySource::Metric(m) => SigmaSource::Metric(m),
        VerifySource::Direct { wf, .. } => SigmaSource::Direct {
            dimension: wf.dimension(),
            eval: direct_eval.as_ref().expect("direct eval"),
        },
    };

    if sweep {
        let hs = [4.0 * h, 2.0 * h, h];
        let mut reports = Vec::with_capacity(hs.len());
        for level in hs {
            reports.push(riemann_consistency(&src, &pairs, level)?);
        }
        let closures: Vec<f64> = reports.iter().map(|r| r.worst_closure()).collect();
        let closure_order = observed_order(&hs, &closures).ok();
        let gcovs: Option<Vec<f64>> = reports.iter().map(|r| r.worst_gcov()).collect();
        let gcov_order = gcovs.and_then(|g| observed_order(&hs, &g).ok());

        let holds = match min_order {
            None => true,
            Some(floor) => {
                let closure_ok = closure_order.is_some_and(|o| o >= floor);
                // gcov participates only where the source can produce it.
                let gcov_ok = match &src {
                    SigmaSource::Metric(_) => gcov_order.is_some_and(|o| o >= floor),
                    SigmaSource::Direct { .. } => true,
                };
                closure_ok && gcov_ok
            }
        };

        let mut csv = String::from("h,worst_closure,worst_symmetry,worst_diagonal,worst_gcov\n");
        for r in &reports {
            let _ = write!(
                csv,
                "{},{},{},{},",
                csv_float(r.h),
                csv_float(r.worst_closure()),
                csv_float(r.worst_symmetry()),
                csv_float(r.worst_diagonal())
            );
            if let Some(g) = r.worst_gcov() {
                csv.push_str(&csv_float(g));
            }
            csv.push('\n');
        }
        let mut json_body = serde_json::to_string_pretty(&json!({
            "levels": reports,
            "closure_order": closure_order,
            "gcov_order": gcov_order,
        }))?;
        json_body.push('\n');
        let in_file = ctx.emitter.primary(csv, json_body)?;
        let summary = json!({
            "hs": hs,
            "pairs": pairs.len(),
            "closure_order": closure_order,
            "gcov_order": gcov_order,
            "min_order": min_order,
            "holds": holds,
        });
        ctx.emitter.summary(in_file, serde_json::to_string(&summary)?);
        return Ok(if holds { 0 } else { 1 });
    }

    let report = riemann_consistency(&src, &pairs, h)?;
    let worst_gcov = report.worst_gcov();
    let holds = report.worst_closure() <= max_residual
        && report.worst_symmetry() <= max_residual
        && report.worst_diagonal() <= max_residual
        && worst_gcov.is_none_or(|g| g <= max_residual);

    let csv = report_csv(&report, dim);
    let mut json_body = serde_json::to_string_pretty(&report)?;
    json_body.push('\n');
    let in_file = ctx.emitter.primary(csv, json_body)?;
    let summary = json!({
        "h": h,
        "pairs": report.rows.len(),
        "worst_closure": report.worst_closure(),
        "worst_symmetry": report.worst_symmetry(),
        "worst_diagonal": report.worst_diagonal(),
        "worst_gcov": worst_gcov,
        "max_residual": max_residual,
        "holds": holds,
    });
    ctx.emitter.summary(in_file, serde_json::to_string(&summary)?);
    Ok(if holds { 0 } else { 1 })
}

#[derive(Args)]
pub struct GeodesicArgs {
    /// Built-in metric to integrate on.
    #[arg(long, value_enum, conflicts_with = "geometry")]
    pub metric: Option<MetricChoice>,
    /// Metric-backed geometry spec (other kinds have no metric to integrate).
    #[arg(long)]
    pub geometry: Option<String>,
    /// Endpoint the geodesic arrives at.
    #[arg(long, value_parser = parse_point)]
    pub x: Option<PointArg>,
    /// Endpoint the geodesic leaves from.
    #[arg(long, value_parser = parse_point)]
    pub xp: Option<PointArg>,
    /// Dimension for the flat built-in.
    #[arg(long)]
    pub dimension: Option<usize>,
}

pub fn geodesic(args: &GeodesicArgs, ctx: &Ctx) -> Result<i32, Failure> {
    let m = match (args.metric, args.geometry.as_deref()) {
        (Some(choice), _) => builtin_metric(choice, args.dimension.or(ctx.cfg.dimension))?,
        (None, Some(text)) => {
            match require_geometry(Some(text), None, args.dimension.or(ctx.cfg.dimension), None)? {
                GeometrySpec::Riemann { metric, domain } => MetricField::new(metric, domain)?,
                _ => {
                    return Err(Failure::usage(
                        "geodesic needs a metric: pass --metric or a riemann geometry",
                    ))
                }
            }
        }
        (None, None) => match ctx.cfg.metric.as_deref() {
            Some("flat") => builtin_metric(MetricChoice::Flat, args.dimension.or(ctx.cfg.dimension))?,
            Some("sphere") => builtin_metric(MetricChoice::Sphere, None)?,
            Some(other) => {
                return Err(Failure::usage(format!(
                    "unknown metric {other:?}: expected flat or sphere"
                )))
            }
            None => return Err(Failure::usage("pass --metric or --geometry")),
        },
    };
    let x = require_point(args.x.as_ref(), ctx.cfg.x.as_ref(), "x")?;
    let xp = require_point(args.xp.as_ref(), ctx.cfg.xp.as_ref(), "xp")?;
    let sol = solve_geodesic(&m, &x, &xp)?;
    if !sol.converged {
        return Err(Failure::numerical(format!(
            "geodesic solver stalled at residual {:e}",
            sol.residual
        )));
    }

    let mut csv = String::new();
    for axis in 0..m.dimension {
        if axis > 0 {
            csv.push(',');
        }
        let _ = write!(csv, "x{axis}");
    }
    csv.push('\n');
    for point in &sol.path {
        for (i, c) in point.coords().iter().enumerate() {
            if i > 0 {
                csv.push(',');
            }
            csv.push_str(&csv_float(*c));
        }
        csv.push('\n');
    }
    let mut json_body = serde_json::to_string_pretty(&sol)?;
    json_body.push('\n');
    let in_file = ctx.emitter.primary(csv, json_body)?;
    let summary = json!({
        "length": sol.length,
        "sigma": sol.sigma,
        "converged": sol.converged,
        "residual": sol.residual,
    });
    ctx.emitter.summary(in_file, serde_json::to_string(&summary)?);
    Ok(0)
}

#[derive(Args)]
pub struct ConvexityArgs {
    /// Random pairs to draw outside the unit disk.
    #[arg(long)]
    pub count: Option<usize>,
    /// Keep only pairs whose chord misses the disk (drops the worked example).
    #[arg(long)]
    pub pairs_miss_only: bool,
}

pub fn convexity_demo(args: &ConvexityArgs, ctx: &Ctx) -> Result<i32, Failure> {
    let seed = ctx.seed()?;
    let count = args.count.or(ctx.cfg.count).unwrap_or(40);
    let miss_only = args.pairs_miss_only || ctx.cfg.pairs_miss_only.unwrap_or(false);

    let points = sample_outside_disk(seed, 2 * count, -3.0, 3.0)?;
    let mut pairs: Vec<(Point, Point)> = Vec::with_capacity(count + 1);
    if !miss_only {
        // Diametral pair whose detour length is known in closed form.
        pairs.push((Point::from_slice(&[-2.0, 0.0]), Point::from_slice(&[2.0, 0.0])));
    }
    for chunk in points.chunks_exact(2) {
        let (p, q) = (chunk[0].clone(), chunk[1].clone());
        if miss_only && CutPlane::chord_crosses_disk(&p, &q) {
            continue;
        }
        pairs.push((p, q));
    }
    let report = convexity_discrepancy(&pairs)?;

    let mut csv =
        String::from("px,py,qx,qy,crosses_disk,sigma_cut,sigma_euclid,discrepancy\n");
    for row in &report.rows {
        let _ = write!(
            csv,
            "{},{},{},{},{},{},{},{}\n",
            csv_float(row.p.coords()[0]),
            csv_float(row.p.coords()[1]),
            csv_float(row.q.coords()[0]),
            csv_float(row.q.coords()[1]),
            row.crosses_disk,
            csv_float(row.sigma_cut),
            csv_float(row.sigma_euclid),
            csv_float(row.discrepancy)
        );
    }
    let mut json_body = serde_json::to_string_pretty(&report)?;
    json_body.push('\n');
    let in_file = ctx.emitter.primary(csv, json_body)?;
    let summary = json!({
        "pairs": report.rows.len(),
        "crossing_count": report.crossing_count,
        "max_miss_discrepancy": report.max_miss_discrepancy,
        "min_cross_discrepancy": finite_or_null(report.min_cross_discrepancy),
        "max_cross_discrepancy": report.max_cross_discrepancy,
    });
    ctx.emitter.summary(in_file, serde_json::to_string(&summary)?);
    Ok(0)
}

/// serde_json writes non-finite floats as null anyway; make it explicit.
fn finite_or_null(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Args)]
pub struct ParallelArgs {
    /// Geometry to probe for transitivity of parallelism.
    #[arg(long)]
    pub geometry: Option<String>,
    /// Random chain trials for the generic search (the deformed model uses a
    /// targeted construction instead).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Dimension for geometry shorthands.
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Deformation constant for the deformed shorthand.
    #[arg(long)]
    pub d0: Option<f64>,
}

pub fn parallel_witness(args: &ParallelArgs, ctx: &Ctx) -> Result<i32, Failure> {
    let seed = ctx.seed()?;
    let trials = args.trials.or(ctx.cfg.trials).unwrap_or(100_000);
    let tol = ctx.tol_or(1e-6);
    let spec = require_geometry(
        args.geometry.as_deref(),
        ctx.cfg.geometry.as_ref(),
        args.dimension.or(ctx.cfg.dimension),
        args.d0.or(ctx.cfg.d0),
    )?;
    let (witness, trials_run) = match deformed_params(&spec) {
        Some(params) => (find_intransitivity_witness(params?, seed, tol)?, None),
        None => {
            let wf = spec.build()?;
            (transitivity_search(&*wf, trials, seed, tol)?, Some(trials))
        }
    };

    // Structured result; always JSON regardless of --format.
    let body = json!({
        "witness": witness,
        "trials": trials_run,
        "tol": tol,
    });
    let mut json_body = serde_json::to_string_pretty(&body)?;
    json_body.push('\n');
    let in_file = ctx.emitter.primary(json_body.clone(), json_body)?;
    let summary = match &witness {
        Some(w) => json!({
            "witness_found": true,
            "ab_deviation": w.ab.deviation,
            "bc_deviation": w.bc.deviation,
            "ac_deviation": w.ac.deviation,
        }),
        None => json!({ "witness_found": false, "trials": trials_run }),
    };
    ctx.emitter.summary(in_file, serde_json::to_string(&summary)?);
    Ok(if witness.is_some() { 0 } else { 1 })
}

#[derive(Args)]
pub struct AxiomArgs {
    /// Geometry to audit.
    #[arg(long)]
    pub geometry: Option<String>,
    /// Take the point set from a lattice chart.
    #[arg(long, value_parser = parse_chart)]
    pub chart: Option<ChartArg>,
    /// Take the point set from a JSON file holding an array of coordinate rows.
    #[arg(long)]
    pub points_file: Option<PathBuf>,
    /// Draw this many random points outside the unit disk (cut plane only).
    #[arg(long)]
    pub sample_outside_disk: Option<usize>,
    /// Dimension for geometry shorthands.
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Deformation constant for the deformed shorthand.
    #[arg(long)]
    pub d0: Option<f64>,
}

enum PointSource {
    Chart(ChartArg),
    File(PathBuf),
    Disk(usize),
}

fn axiom_points(source: PointSource, ctx: &Ctx) -> Result<Vec<Point>, Failure> {
    match source {
        PointSource::Chart(chart) => Ok(chart.0.build()?.sample()),
        PointSource::File(path) => {
            let body = fs::read_to_string(&path)
                .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
            let rows: Vec<Vec<f64>> = serde_json::from_str(&body)
                .map_err(|e| Failure::usage(format!("bad points file {}: {e}", path.display())))?;
            Ok(rows
                .into_iter()
                .map(Point::new)
                .collect::<wfgeom::Result<Vec<Point>>>()?)
        }
        PointSource::Disk(count) => {
            let seed = ctx.seed()?;
            Ok(sample_outside_disk(seed, count, -3.0, 3.0)?)
        }
    }
}

pub fn axioms(args: &AxiomArgs, ctx: &Ctx) -> Result<i32, Failure> {
    let spec = require_geometry(
        args.geometry.as_deref(),
        ctx.cfg.geometry.as_ref(),
        args.dimension.or(ctx.cfg.dimension),
        args.d0.or(ctx.cfg.d0),
    )?;
    let wf = spec.build()?;

    let mut flag_sources: Vec<PointSource> = Vec::new();
    if let Some(c) = &args.chart {
        flag_sources.push(PointSource::Chart(c.clone()));
    }
    if let Some(p) = &args.points_file {
        flag_sources.push(PointSource::File(p.clone()));
    }
    if let Some(n) = args.sample_outside_disk {
        flag_sources.push(PointSource::Disk(n));
    }
    let source = if !flag_sources.is_empty() {
        if flag_sources.len() > 1 {
            return Err(Failure::usage(
                "pass exactly one of --chart, --points-file, --sample-outside-disk",
            ));
        }
        flag_sources.remove(0)
    } else {
        let mut cfg_sources: Vec<PointSource> = Vec::new();
        if let Some(c) = &ctx.cfg.chart {
            cfg_sources.push(PointSource::Chart(ChartArg(c.clone())));
        }
        if let Some(p) = &ctx.cfg.points_file {
            cfg_sources.push(PointSource::File(p.clone()));
        }
        if let Some(n) = ctx.cfg.sample_outside_disk {
            cfg_sources.push(PointSource::Disk(n));
        }
        match cfg_sources.len() {
            1 => cfg_sources.remove(0),
            0 => {
                return Err(Failure::usage(
                    "pass one of --chart, --points-file, --sample-outside-disk",
                ))
            }
            _ => {
                return Err(Failure::usage(
                    "config sets more than one point source; keep one of \
                     \"chart\", \"points_file\", \"sample_outside_disk\"",
                ))
            }
        }
    };
    let points = axiom_points(source, ctx)?;

    let sigma_report = check_sigma_space(&*wf, &points)?;
    let metric_report = check_metric_axioms(&*wf, &points)?;
    let holds = sigma_report.all_hold() && metric_report.all_hold();

    let mut csv = String::from("report,check,status,tuples_tested,violations,worst\n");
    let push_rows = |label: &str, report: &AxiomReport, csv: &mut String| {
        for check in &report.checks {
            let status = serde_json::to_value(&check.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default();
            let _ = write!(
                csv,
                "{label},{},{status},{},{},{}\n",
                check.name,
                check.tuples_tested,
                check.violations,
                csv_float(check.worst)
            );
        }
    };
    push_rows("sigma_space", &sigma_report, &mut csv);
    push_rows("metric", &metric_report, &mut csv);

    let mut json_body = serde_json::to_string_pretty(&json!({
        "sigma_space": sigma_report,
        "metric": metric_report,
    }))?;
    json_body.push('\n');
    let in_file = ctx.emitter.primary(csv, json_body)?;
    let summary = json!({
        "points": points.len(),
        "sampled": sigma_report.sampled,
        "sigma_space_holds": sigma_report.all_hold(),
        "metric_holds": metric_report.all_hold(),
    });
    ctx.emitter.summary(in_file, serde_json::to_string(&summary)?);
    Ok(if holds { 0 } else { 1 })
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GapPolicyArg {
    /// Refuse to evaluate inside the undetermined band.
    Error,
    /// Interpolate linearly across the band.
    LinearRamp,
}

impl From<GapPolicyArg> for GapPolicy {
    fn from(v: GapPolicyArg) -> Self {
        match v {
            GapPolicyArg::Error => GapPolicy::Error,
            GapPolicyArg::LinearRamp => GapPolicy::LinearRamp,
        }
    }
}

#[derive(Args)]
pub struct ThicknessArgs {
    /// Deformation constants to scan, one thickness per value.
    #[arg(long, num_args = 1..)]
    pub d0: Vec<f64>,
    /// First tube-axis point (default: origin).
    #[arg(long, value_parser = parse_point)]
    pub p0: Option<PointArg>,
    /// Second tube-axis point (default: two units along the time axis).
    #[arg(long, value_parser = parse_point)]
    pub p1: Option<PointArg>,
    /// Transverse ray direction from the axis midpoint (default: first
    /// spatial axis).
    #[arg(long, value_parser = parse_point)]
    pub direction: Option<PointArg>,
    /// Offset interval to scan for the boundary crossing.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub search: Vec<f64>,
    #[arg(long)]
    pub dimension: Option<usize>,
    #[arg(long, value_enum)]
    pub gap_policy: Option<GapPolicyArg>,
}

#[derive(serde::Serialize)]
struct ThicknessRow {
    d0: f64,
    thickness: f64,
    bracket: Option<(f64, f64)>,
    residual: f64,
}

pub fn thickness(args: &ThicknessArgs, ctx: &Ctx) -> Result<i32, Failure> {
    let d0s: Vec<f64> = if !args.d0.is_empty() {
        args.d0.clone()
    } else if let Some(v) = ctx.cfg.d0 {
        vec![v]
    } else {
        return Err(Failure::usage("missing --d0 (or \"d0\" in the config)"));
    };
    let dim = args.dimension.or(ctx.cfg.dimension).unwrap_or(4);
    if dim < 2 {
        return Err(Failure::usage("thickness needs at least a 1+1 dimensional model"));
    }
    let default_axis_p0 = vec![0.0; dim];
    let mut default_axis_p1 = vec![0.0; dim];
    default_axis_p1[0] = 2.0;
    let mut default_direction = vec![0.0; dim];
    default_direction[1] = 1.0;

    let p0 = match (&args.p0, &ctx.cfg.p0) {
        (Some(p), _) => Point::new(p.0.clone())?,
        (None, Some(p)) => Point::new(p.clone())?,
        (None, None) => Point::from_slice(&default_axis_p0),
    };
    let p1 = match (&args.p1, &ctx.cfg.p1) {
        (Some(p), _) => Point::new(p.0.clone())?,
        (None, Some(p)) => Point::new(p.clone())?,
        (None, None) => Point::from_slice(&default_axis_p1),
    };
    let direction = match (&args.direction, &ctx.cfg.direction) {
        (Some(p), _) => Point::new(p.0.clone())?,
        (None, Some(p)) => Point::new(p.clone())?,
        (None, None) => Point::from_slice(&default_direction),
    };
    let search = if args.search.len() == 2 {
        (args.search[0], args.search[1])
    } else if let Some(s) = &ctx.cfg.search {
        if s.len() != 2 {
            return Err(Failure::usage("\"search\" in the config needs exactly two numbers"));
        }
        (s[0], s[1])
    } else {
        (0.0, 0.75)
    };
    let gap_policy: GapPolicy = args.gap_policy.map(Into::into).unwrap_or_default();

    let mut rows = Vec::with_capacity(d0s.len());
    for &d0 in &d0s {
        let params = wfgeom::models::DeformedParams::with_d0(d0, gap_policy, dim)?;
        let result = tube_thickness(params, (&p0, &p1), &direction, search)?;
        rows.push(ThicknessRow {
            d0,
            thickness: result.thickness,
            bracket: result.bracket,
            residual: result.residual,
        });
    }

    let mut csv = String::from("d0,thickness,bracket_lo,bracket_hi,residual\n");
    for row in &rows {
        let _ = write!(csv, "{},{},", csv_float(row.d0), csv_float(row.thickness));
        if let Some((lo, hi)) = row.bracket {
            let _ = write!(csv, "{},{}", csv_float(lo), csv_float(hi));
        } else {
            csv.push(',');
        }
        let _ = write!(csv, ",{}\n", csv_float(row.residual));
    }
    let mut json_body = serde_json::to_string_pretty(&rows)?;
    json_body.push('\n');
    let in_file = ctx.emitter.primary(csv, json_body)?;
    let summary = json!({ "runs": rows.len() });
    ctx.emitter.summary(in_file, serde_json::to_string(&summary)?);
    Ok(0)
}
