//! wfgeom: geometry through the world function alone, on the command line.
//!
//! Every command reads an optional JSON manifest (--config) and lets flags
//! override it. The primary payload goes to stdout or --out; a one-line JSON
//! summary goes to whichever of stdout/stderr the payload left free. Runs
//! with the same seed and inputs reproduce byte for byte.
//!
//! Exit codes: 0 success or property-holds, 1 a checked property failed,
//! 2 bad usage or config, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::Ctx;
use config::{Emitter, Failure, OutputFormat, RunConfig};

#[derive(Parser)]
#[command(name = "wfgeom", version, about = "World-function geometry toolkit")]
struct Cli {
    /// JSON run manifest; command-line flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores; the WFGEOM_WORKERS variable also
    /// sets this).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write the primary output to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Primary output format.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Seed for randomized sampling; commands that draw points require one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tolerance override for membership and parallelism predicates.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the tube through two points and estimate its local dimension.
    Tube(commands::TubeArgs),
    /// Sample the plane determined by a base point and tips.
    Plane(commands::PlaneArgs),
    /// Sample the segment between two points.
    Segment(commands::SegmentArgs),
    /// Sample the section of a tube through a chosen point.
    Section(commands::SectionArgs),
    /// Check the differential identities a metric-induced sigma must satisfy.
    RiemannVerify(commands::RiemannVerifyArgs),
    /// Solve the two-point geodesic problem and report sigma and the path.
    Geodesic(commands::GeodesicArgs),
    /// Compare obstructed and straight sigma on the plane with a disk removed.
    ConvexityDemo(commands::ConvexityArgs),
    /// Hunt for a violation of parallelism transitivity.
    ParallelWitness(commands::ParallelArgs),
    /// Audit sigma-space and metric-space axioms over a point set.
    Axioms(commands::AxiomArgs),
    /// Tube thickness as a function of the deformation constant.
    Thickness(commands::ThicknessArgs),
}

fn init_workers(requested: Option<usize>) {
    let n = requested.or_else(|| {
        std::env::var("WFGEOM_WORKERS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = n.filter(|n| *n > 0) {
        // Ignore failure: the pool can already be set in tests or embeddings.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn run(cli: Cli) -> Result<i32, Failure> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    init_workers(cli.workers.or(cfg.workers));
    let emitter = Emitter::new(cli.out, cfg.out.clone(), cli.format, cfg.format);
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed),
        tol: cli.tol.or(cfg.tol),
        cfg,
        emitter,
    };
    match &cli.command {
        Command::Tube(args) => commands::tube(args, &ctx),
        Command::Plane(args) => commands::plane(args, &ctx),
        Command::Segment(args) => commands::segment(args, &ctx),
        Command::Section(args) => commands::section(args, &ctx),
        Command::RiemannVerify(args) => commands::riemann_verify(args, &ctx),
        Command::Geodesic(args) => commands::geodesic(args, &ctx),
        Command::ConvexityDemo(args) => commands::convexity_demo(args, &ctx),
        Command::ParallelWitness(args) => commands::parallel_witness(args, &ctx),
        Command::Axioms(args) => commands::axioms(args, &ctx),
        Command::Thickness(args) => commands::thickness(args, &ctx),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    };
    std::process::exit(code);
}
