mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Hubbard-cluster Green's functions on a simulated quantum computer.
#[derive(Debug, Parser)]
#[command(name = "hubbard-gf", version)]
struct Cli {
    /// TOML file with the same keys as the flags (`-` written as `_`); flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: $HUBBARD_GF_OUT, else ./out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Energy landscape of the one-layer dimer ansatz over (alpha, beta).
    VhaSweep(VhaSweepArgs),
    /// The y2-y2, y3-y3 and x3-y2 dimer correlators for one protocol.
    Correlator(CorrelatorArgs),
    /// Check correlator CSVs against the closed forms and the Trotter bound.
    Compare(CompareArgs),
    /// Noisy run of the dimer correlators, raw versus mitigated.
    ZneDemo(ZneArgs),
    /// Print a circuit stage by stage with gate counts.
    DumpCircuit(DumpArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Hopping amplitude [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// On-site repulsion [default: 4]
    #[arg(long, allow_negative_numbers = true)]
    pub u: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VhaSweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Points per axis; alpha spans [-pi, pi], beta [0, pi/2] [default: 101]
    #[arg(long)]
    pub grid: Option<usize>,
    /// Shots per energy term; 0 evaluates exactly [default: 0]
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrotterArgs {
    /// Time step [default: 0.314]
    #[arg(long)]
    pub dtau: Option<f64>,
    /// Number of steps; the grid has steps + 1 points [default: 25]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Direct-protocol ancilla angle [default: pi/2]
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CorrelatorArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub trotter: TrotterArgs,
    /// retarded or keldysh [default: retarded]
    #[arg(long)]
    pub kind: Option<String>,
    /// direct, hadamard or advanced_hadamard [default: direct]
    #[arg(long)]
    pub protocol: Option<String>,
    /// trotter or exact [default: trotter]
    #[arg(long)]
    pub evolution: Option<String>,
    /// Shots per time point; 0 uses exact probabilities [default: 0]
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Correlator CSVs, or directories holding them
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Reinterpret the records with this time step
    #[arg(long)]
    pub dtau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ZneArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub trotter: TrotterArgs,
    /// Device calibration file [default: bundled five-qubit model]
    #[arg(long)]
    pub noise_model: Option<PathBuf>,
    /// Subset of y2-y2, y3-y3, x3-y2 [default: all three]
    #[arg(long, value_delimiter = ',')]
    pub correlators: Option<Vec<String>>,
    /// Invert readout confusion [default: on]
    #[arg(long)]
    pub readout: Option<bool>,
    /// Pauli-twirl variants per circuit [default: 100]
    #[arg(long)]
    pub twirls: Option<usize>,
    /// Dynamical decoupling: none or xx [default: xx when the model has idle noise]
    #[arg(long)]
    pub dd: Option<String>,
    /// Noise scale factors [default: 1,1.5,2,2.5,3]
    #[arg(long, value_delimiter = ',')]
    pub zne_scales: Option<Vec<f64>>,
    /// Extrapolation polynomial order [default: 2]
    #[arg(long)]
    pub zne_order: Option<usize>,
    /// Required fraction of points where mitigation wins [default: 0.8]
    #[arg(long)]
    pub min_win: Option<f64>,
    /// Reference for the A/B: noiseless or analytic [default: noiseless]
    #[arg(long)]
    pub reference: Option<String>,
    /// Shots per circuit [default: 4096]
    #[arg(long)]
    pub shots: Option<u64>,
    /// Independent runs averaged per point [default: 3]
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub trotter: TrotterArgs,
    /// ground, step or protocol
    #[arg(long, default_value = "protocol")]
    pub circuit: String,
    /// Correlator for the protocol circuit
    #[arg(long, default_value = "y2-y2")]
    pub correlator: String,
    /// Time index for the protocol circuit
    #[arg(long, default_value_t = 1)]
    pub index: usize,
    /// retarded or keldysh [default: retarded]
    #[arg(long)]
    pub kind: Option<String>,
    /// direct, hadamard or advanced_hadamard [default: direct]
    #[arg(long)]
    pub protocol: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = config::ConfigFile::load(cli.config.as_deref()).and_then(|file| {
        let out = config::out_dir(cli.out, file.out.clone());
        match cli.command {
            Command::VhaSweep(a) => commands::vha_sweep(a, &file, &out),
            Command::Correlator(a) => commands::correlator(a, &file, &out),
            Command::Compare(a) => commands::compare(a, &file, &out),
            Command::ZneDemo(a) => commands::zne_demo(a, &file, &out),
            Command::DumpCircuit(a) => commands::dump_circuit(a, &file),
        }
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hubbard-gf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
