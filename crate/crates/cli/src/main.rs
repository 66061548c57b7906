//! `podi`: build, check and serve POD-RBF reduced-order models.

mod commands;
mod error;

use clap::{Args, Parser, Subcommand};
use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "podi", version, about = "POD-RBF reduced-order models for LVAD hemodynamics")]
struct Cli {
    /// Print results and errors as JSON on stdout
    #[arg(long, global = true)]
    json: bool,
    /// Seed for synthetic data, overriding the manifest
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic snapshot set
    Synth(SynthArgs),
    /// Build a snapshot set from CSV files
    Import(ImportArgs),
    /// Train a model from a snapshot set
    Train(TrainArgs),
    /// Compare a model against held-out snapshots
    Validate(ValidateArgs),
    /// Reconstruct one field at a parameter
    Evaluate(EvaluateArgs),
    /// HeartMate 3 pump-curve calculations
    #[command(subcommand)]
    Pump(PumpCommand),
    /// Integrate a three-element Windkessel outlet under constant flow
    Windkessel(WindkesselArgs),
    /// Run the HTTP service
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// TOML manifest describing the synthetic manifold
    #[arg(long, conflicts_with = "lvad", required_unless_present = "lvad")]
    spec: Option<PathBuf>,
    /// Built-in five-field LVAD-like manifold
    #[arg(long)]
    lvad: bool,
    /// Degrees of freedom per field for --lvad
    #[arg(long, default_value_t = 1000, requires = "lvad")]
    n_dof: usize,
    /// Uniform noise amplitude
    #[arg(long)]
    noise: Option<f64>,
    /// Parameter samples replacing the manifest's, one per flag, comma-separated coordinates
    #[arg(long = "params", value_name = "X[,Y..]", allow_hyphen_values = true)]
    params: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ImportArgs {
    /// CSV with one parameter point per row
    #[arg(long)]
    params: PathBuf,
    /// Field CSV, one row per degree of freedom and one column per snapshot
    #[arg(long = "field", value_name = "LABEL=PATH", required = true)]
    fields: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    snapshots: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Cumulative energy threshold for the truncation rank
    #[arg(long, default_value_t = 0.99)]
    energy: f64,
    /// Fixed rank for a field
    #[arg(long = "rank", value_name = "FIELD=K")]
    ranks: Vec<String>,
    /// Gaussian shape parameter in normalized coordinates
    #[arg(long)]
    shape: Option<f64>,
    /// Diagonal regularization of the kernel matrix
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    /// Skip per-axis normalization of parameters
    #[arg(long)]
    no_normalize: bool,
    /// Declared admissible interval, one per parameter coordinate
    #[arg(long = "range", value_name = "MIN:MAX", allow_hyphen_values = true)]
    ranges: Vec<String>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    heldout: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    field: String,
    /// Parameter coordinates, comma-separated
    #[arg(long = "param", value_name = "X[,Y..]", allow_hyphen_values = true)]
    param: String,
    /// Include every stride-th value in JSON output
    #[arg(long)]
    stride: Option<usize>,
    /// Write all values, one per line
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum PumpCommand {
    /// Head (mmHg) from speed (rpm) and flow (l/min)
    Forward {
        #[arg(long)]
        omega: f64,
        #[arg(long)]
        pf: f64,
    },
    /// Flow (l/min) from speed and head, checked against the admissible range
    Inverse {
        #[arg(long)]
        omega: f64,
        #[arg(long)]
        dp: f64,
    },
    /// Head at a measured operating point; with --omega-new, the flow at the new speed
    Calibrate {
        #[arg(long)]
        omega: f64,
        #[arg(long)]
        pf: f64,
        #[arg(long)]
        omega_new: Option<f64>,
    },
    /// Equispaced head samples over the admissible flow range
    Curve {
        #[arg(long)]
        omega: f64,
        #[arg(long, default_value_t = 50)]
        n: usize,
    },
}

#[derive(Debug, Args)]
struct WindkesselArgs {
    /// Named outlet
    #[arg(long, default_value = "descending_aorta")]
    outlet: String,
    /// Proximal resistance, dyne s/cm^5 (overrides the outlet)
    #[arg(long)]
    rp: Option<f64>,
    /// Distal resistance, dyne s/cm^5
    #[arg(long)]
    rd: Option<f64>,
    /// Compliance, cm^5/dyne
    #[arg(long)]
    c: Option<f64>,
    /// Distal pressure, dyne/cm^2
    #[arg(long)]
    pd: Option<f64>,
    /// Constant inflow, cm^3/s
    #[arg(long)]
    flow: f64,
    /// Time step, s; defaults to a twentieth of the time constant
    #[arg(long)]
    dt: Option<f64>,
    /// End time, s; defaults to five time constants
    #[arg(long)]
    t_end: Option<f64>,
    /// Initial proximal pressure, dyne/cm^2
    #[arg(long, default_value_t = 0.0)]
    p0: f64,
    /// Write the trace as CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Directory of *.podi models loaded at startup
    #[arg(long, env = "PODI_MODEL_DIR")]
    models: Option<PathBuf>,
    #[arg(long, env = "PODI_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "PODI_BIND", default_value = "127.0.0.1")]
    bind: IpAddr,
    /// Request body limit, bytes
    #[arg(long, env = "PODI_MAX_PAYLOAD", default_value_t = 64 * 1024 * 1024)]
    max_payload: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                let body = serde_json::json!({ "error": { "code": e.code, "message": e.message } });
                println!("{body}");
            } else {
                eprintln!("{e}");
            }
            ExitCode::FAILURE
        }
    }
}
