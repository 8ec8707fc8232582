//! Run manifests and the plumbing shared by every subcommand: config-file
//! merging, geometry and chart resolution, output routing, exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;
use wfgeom::chart::PointChart;
use wfgeom::geometry::GeometrySpec;
use wfgeom::models::{DeformedParams, GapPolicy};
use wfgeom::Point;

/// A subcommand outcome the process should report and die with.
///
/// Exit codes are disjoint by cause: 0 success or property-holds, 1 a checked
/// property failed, 2 bad usage or config, 3 numerical failure.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<wfgeom::Error> for Failure {
    fn from(err: wfgeom::Error) -> Self {
        use wfgeom::Error as E;
        let code = match err {
            // Bad input shape: the run never started.
            E::ChartMismatch { .. }
            | E::NonFinitePoint { .. }
            | E::InvalidChart { .. }
            | E::InvalidParameter { .. }
            | E::TabulatedInvalid { .. }
            | E::GeometrySpec { .. }
            | E::SeedRequired => 2,
            // Well-posed input the numerics could not carry through.
            _ => 3,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::usage(err.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(err: serde_json::Error) -> Self {
        Failure::usage(err.to_string())
    }
}

/// Chart description as written in manifests and flags; always rebuilt through
/// the validating constructor.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub bounds: Vec<(f64, f64)>,
    pub resolution: Vec<usize>,
}

impl ChartConfig {
    pub fn build(&self) -> Result<PointChart, Failure> {
        Ok(PointChart::new(self.bounds.clone(), self.resolution.clone())?)
    }
}

/// JSON run manifest. Every key is optional; command-line flags override.
/// Unknown keys are rejected so a typo cannot silently revert a parameter to
/// its default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Geometry: inline spec object, shorthand name, or spec file path.
    pub geometry: Option<serde_json::Value>,
    pub chart: Option<ChartConfig>,
    pub metric: Option<String>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub workers: Option<usize>,
    pub h: Option<f64>,
    pub h_sweep: Option<bool>,
    pub pairs: Option<usize>,
    pub trials: Option<usize>,
    pub count: Option<usize>,
    pub max_residual: Option<f64>,
    pub min_order: Option<f64>,
    pub window: Option<f64>,
    pub dimension: Option<usize>,
    pub d0: Option<f64>,
    pub pairs_miss_only: Option<bool>,
    pub p0: Option<Vec<f64>>,
    pub p1: Option<Vec<f64>>,
    pub p: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub through: Option<Vec<f64>>,
    pub x: Option<Vec<f64>>,
    pub xp: Option<Vec<f64>>,
    pub direction: Option<Vec<f64>>,
    pub points: Option<Vec<Vec<f64>>>,
    pub search: Option<Vec<f64>>,
    pub points_file: Option<PathBuf>,
    pub sample_outside_disk: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let body = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&body)
            .map_err(|e| Failure::usage(format!("bad config {}: {e}", path.display())))
    }
}

/// A point given on the command line as comma-separated coordinates.
#[derive(Debug, Clone)]
pub struct PointArg(pub Vec<f64>);

pub fn parse_point(s: &str) -> Result<PointArg, String> {
    let coords: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match coords {
        Ok(c) if !c.is_empty() => Ok(PointArg(c)),
        _ => Err(format!("expected comma-separated coordinates, got {s:?}")),
    }
}

/// Resolves a point from flag or manifest; the name keeps usage errors exact.
pub fn require_point(
    flag: Option<&PointArg>,
    cfg: Option<&Vec<f64>>,
    name: &str,
) -> Result<Point, Failure> {
    let coords = flag
        .map(|p| p.0.clone())
        .or_else(|| cfg.cloned())
        .ok_or_else(|| Failure::usage(format!("missing --{name} (or \"{name}\" in the config)")))?;
    Ok(Point::new(coords)?)
}

/// Chart given on the command line: inline JSON or compact lo:hi:res per axis,
/// axes separated by commas (e.g. 0:1:64,0:1:64).
#[derive(Debug, Clone)]
pub struct ChartArg(pub ChartConfig);

pub fn parse_chart(s: &str) -> Result<ChartArg, String> {
    let t = s.trim();
    if t.starts_with('{') {
        return serde_json::from_str(t).map(ChartArg).map_err(|e| e.to_string());
    }
    let mut bounds = Vec::new();
    let mut resolution = Vec::new();
    for axis in t.split(',') {
        let parts: Vec<&str> = axis.split(':').collect();
        let [lo, hi, res] = parts[..] else {
            return Err(format!("axis {axis:?} is not lo:hi:res"));
        };
        let lo: f64 = lo.trim().parse().map_err(|_| format!("bad bound {lo:?}"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| format!("bad bound {hi:?}"))?;
        let res: usize = res.trim().parse().map_err(|_| format!("bad resolution {res:?}"))?;
        bounds.push((lo, hi));
        resolution.push(res);
    }
    Ok(ChartArg(ChartConfig { bounds, resolution }))
}

pub fn require_chart(
    flag: Option<&ChartArg>,
    cfg: Option<&ChartConfig>,
) -> Result<PointChart, Failure> {
    let config = flag
        .map(|c| c.0.clone())
        .or_else(|| cfg.cloned())
        .ok_or_else(|| Failure::usage("missing --chart (or \"chart\" in the config)"))?;
    config.build()
}

/// Geometry source text: inline JSON, a spec file path, or a shorthand name.
/// Shorthands fill unstated parameters from --dimension / --d0.
pub fn geometry_spec(
    text: &str,
    dimension: Option<usize>,
    d0: Option<f64>,
) -> Result<GeometrySpec, Failure> {
    let t = text.trim();
    if t.starts_with('{') {
        return Ok(GeometrySpec::from_json(t)?);
    }
    let path = Path::new(t);
    if path.is_file() {
        let body = fs::read_to_string(path)?;
        return Ok(GeometrySpec::from_json(&body)?);
    }
    match t.to_ascii_lowercase().as_str() {
        "euclidean" => Ok(GeometrySpec::Euclidean {
            dimension: dimension.unwrap_or(2),
        }),
        "minkowski" => Ok(GeometrySpec::Minkowski {
            dimension: dimension.unwrap_or(4),
        }),
        "cut_plane" | "cutplane" | "cut-plane" => Ok(GeometrySpec::CutPlane),
        "deformed" => Ok(GeometrySpec::Deformed {
            d0: d0.unwrap_or(0.1),
            sigma0: None,
            gap_policy: GapPolicy::default(),
            dimension: dimension.unwrap_or(4),
        }),
        other => Err(Failure::usage(format!(
            "unrecognized geometry {other:?}: pass inline JSON, a spec file path, \
             or one of euclidean, minkowski, cut_plane, deformed"
        ))),
    }
}

/// Flag (wins) or manifest geometry entry.
pub fn require_geometry(
    flag: Option<&str>,
    cfg: Option<&serde_json::Value>,
    dimension: Option<usize>,
    d0: Option<f64>,
) -> Result<GeometrySpec, Failure> {
    if let Some(text) = flag {
        return geometry_spec(text, dimension, d0);
    }
    match cfg {
        Some(serde_json::Value::String(s)) => geometry_spec(s, dimension, d0),
        Some(value) => Ok(serde_json::from_value::<GeometrySpec>(value.clone())
            .map_err(|e| Failure::usage(format!("bad geometry in config: {e}")))?),
        None => Err(Failure::usage(
            "missing --geometry (or \"geometry\" in the config)",
        )),
    }
}

/// The deformed-model parameters behind a spec, when it is one.
pub fn deformed_params(spec: &GeometrySpec) -> Option<Result<DeformedParams, Failure>> {
    if let GeometrySpec::Deformed {
        d0,
        sigma0,
        gap_policy,
        dimension,
    } = spec
    {
        let built = match sigma0 {
            Some(s) => DeformedParams::new(*d0, *s, *gap_policy, *dimension),
            None => DeformedParams::with_d0(*d0, *gap_policy, *dimension),
        };
        Some(built.map_err(Failure::from))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Routes the primary payload and the one-line summary.
///
/// The primary goes to --out when given, stdout otherwise. The summary goes to
/// the remaining stream: stdout when the primary is in a file, stderr when the
/// primary occupies stdout, so piped output stays machine-readable.
pub struct Emitter {
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Emitter {
    pub fn new(
        flag_out: Option<PathBuf>,
        cfg_out: Option<PathBuf>,
        flag_format: Option<OutputFormat>,
        cfg_format: Option<OutputFormat>,
    ) -> Self {
        Emitter {
            out: flag_out.or(cfg_out),
            format: flag_format.or(cfg_format).unwrap_or(OutputFormat::Csv),
        }
    }

    /// Writes the primary payload; returns true when it went to a file.
    pub fn primary(&self, csv: String, json: String) -> Result<bool, Failure> {
        let body = match self.format {
            OutputFormat::Csv => csv,
            OutputFormat::Json => json,
        };
        match &self.out {
            Some(path) => {
                fs::write(path, body)
                    .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
                Ok(true)
            }
            None => {
                print!("{body}");
                Ok(false)
            }
        }
    }

    pub fn summary(&self, primary_in_file: bool, line: String) {
        if primary_in_file {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
}

/// CSV cell with full float precision, so reruns diff byte for byte.
pub fn csv_float(value: f64) -> String {
    format!("{value:.16e}")
}
