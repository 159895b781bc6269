//! `beltlab`: build models, certify them, run dynamics experiments, plot.
//!
//! Exit codes: 0 success, 1 certificate failure, 2 usage or input error.

mod commands;
mod files;
mod plot;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "beltlab",
    version,
    about = "Beltrami fields, geodesible flows and plugs on explicit charts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a construction (running its build certificates) and write a model file.
    Build(BuildArgs),
    /// Run certificates on a model file.
    Verify(VerifyArgs),
    /// Integrate one orbit and write it as CSV.
    Flow(FlowArgs),
    /// Sweep the entry face of a plug and classify every orbit as exit or trapped.
    Trap(TrapArgs),
    /// Search for periodic orbits through the model's Poincare section.
    Periodic(PeriodicArgs),
    /// Render an SVG plot.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConstructionName {
    /// Contact binding `cos(2 pi z) dx - sin(2 pi z) dy` on the 3-torus.
    T3Contact,
    /// Constant-slope flow on a torus; needs `--v`.
    Suspension,
    /// Binding times a disk; `--binding` picks the binding.
    BindingNeighborhood,
    /// Wilson plug trapping a set of positive measure.
    StandardPlug,
    /// Volume-preserving Wilson plug.
    VpPlug,
    /// Chart around a round-Morse critical circle.
    RoundMorse,
    /// vp plug inserted on the critical circle of the round-Morse chart.
    Aperiodic,
    /// vp plug inserted far out in the T^3 binding neighborhood.
    BindingFar,
    /// Contact form wrapped around a circle.
    ContactWrap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BindingName {
    T3Contact,
    Suspension,
}

#[derive(Args)]
pub struct BuildArgs {
    pub construction: ConstructionName,
    /// Dimension parameter (plugs: ambient dimension; round-morse, contact-wrap: half the disk dimension).
    #[arg(long)]
    pub n: Option<usize>,
    /// Slope vector of a suspension, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub v: Option<Vec<f64>>,
    /// Morse index of a round-Morse chart.
    #[arg(long)]
    pub index: Option<usize>,
    /// Use the second-step (index 0, rotated) round-Morse model.
    #[arg(long)]
    pub step2: bool,
    /// Binding of a binding neighborhood.
    #[arg(long)]
    pub binding: Option<BindingName>,
    /// Width of the outer plateau of the radial profile of a binding neighborhood.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Plug parameter `b` (defaults to the golden ratio).
    #[arg(long)]
    pub b: Option<f64>,
    /// Free-text note stored in the model annotations.
    #[arg(long)]
    pub note: Option<String>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct SamplingArgs {
    /// Number of low-discrepancy samples.
    #[arg(long, env = "BELTLAB_SAMPLES", default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct VerifyArgs {
    pub model: PathBuf,
    /// Certificates to run: gluck, beltrami, ses, volume, euler_constB.
    #[arg(long, value_delimiter = ',', default_value = "beltrami")]
    pub checks: Vec<String>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Residual tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Report path (JSON goes to stdout otherwise).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct IntegrationArgs {
    #[arg(long, default_value_t = 1e-10)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub atol: f64,
    /// Step ceiling.
    #[arg(long, default_value_t = 0.02)]
    pub h_max: f64,
}

#[derive(Args)]
pub struct FlowArgs {
    pub model: PathBuf,
    /// Initial point, comma separated, one value per chart coordinate.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub from: Vec<f64>,
    /// Integration time.
    #[arg(short = 'T', long = "time")]
    pub time: f64,
    /// Keep integrating past interval faces of the chart.
    #[arg(long)]
    pub through_faces: bool,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    /// Orbit CSV (stdout otherwise).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// JSON summary (stderr otherwise).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrapArgs {
    pub model: PathBuf,
    /// Cells per side of the entry-face grid.
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    /// Time budget per orbit.
    #[arg(long = "Tmax", default_value_t = 1000.0)]
    pub t_max: f64,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    /// Grid CSV (stdout otherwise).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// JSON summary (stderr otherwise).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct PeriodicArgs {
    pub model: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub max_period: usize,
    /// Fixed-point residual accepted as a candidate.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Offset of the three-point seed lattice from the centre of each free
    /// section coordinate.
    #[arg(long, default_value_t = 0.1)]
    pub spread: f64,
    /// Candidates CSV (stdout otherwise).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// JSON summary (stderr otherwise).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Level curves of the plug Hamiltonian on the (r, z) rectangle (model file).
    Hfield,
    /// Radial profiles f and h on [0, 1] (no input).
    Profiles,
    /// 2-D projections of an orbit (flow CSV).
    Orbit,
    /// Entry-face outcome grid (trap CSV).
    Trapgrid,
}

#[derive(Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub kind: PlotKind,
    /// Model file or CSV, depending on the kind.
    pub input: Option<PathBuf>,
    /// Coordinate names to project on (orbit plots), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub axes: Option<Vec<String>>,
    /// SVG path (stdout otherwise).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// How a command ended when it did not error.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CertificateFailure,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Build(a) => commands::build(a),
        Command::Verify(a) => commands::verify(a),
        Command::Flow(a) => commands::flow(a),
        Command::Trap(a) => commands::trap(a),
        Command::Periodic(a) => commands::periodic(a),
        Command::Plot(a) => plot::plot(a),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CertificateFailure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
