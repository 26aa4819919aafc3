mod commands;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "posmap", version, about = "Positive maps, definite sets, averaging and separability checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON input file.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,
    /// Target residual of separable decompositions.
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub eps: f64,
    /// Iteration budget (decomposition iterations, or the power cap of `average`).
    #[arg(long = "max-iter", global = true)]
    pub max_iter: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Table,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Choi matrix of a map with its positivity data.
    Choi,
    /// Dual functional of a map, checked against Tr(φ(a)bᵗ) on matrix units.
    Dual,
    /// Definite set of a unital map.
    DefiniteSet,
    /// Entanglement breaking against abelian range and dual separability.
    Theorem4,
    /// Averaging projection, fixed points and invariant state.
    Average,
    /// Projection onto the abelian algebra of a resolution of the identity.
    Prop7Verify,
    /// Separability check of a bipartite state.
    SepCheck(SepCheckArgs),
    /// Cone comparison for an algebra against sampled positive maps.
    Lemma9(Lemma9Args),
    /// Per-level separability scan of a tower state.
    TowerScan(TowerScanArgs),
    /// Seeded random map.
    RandomMap(RandomMapArgs),
}

#[derive(Args, Debug)]
pub struct SepCheckArgs {
    /// Bipartite dimensions `n,m`; required when the input is not annotated.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', default_values_t = [Criterion::Ppt, Criterion::Realign, Criterion::Witness, Criterion::Decompose])]
    pub criteria: Vec<Criterion>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    Ppt,
    Realign,
    Witness,
    Decompose,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criterion::Ppt => "ppt",
            Criterion::Realign => "realign",
            Criterion::Witness => "witness",
            Criterion::Decompose => "decompose",
        })
    }
}

#[derive(Args, Debug)]
pub struct Lemma9Args {
    /// Dimension of the second Hilbert space.
    #[arg(long = "dim-h")]
    pub dim_h: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct TowerScanArgs {
    #[arg(long = "A-dim", default_value_t = 2)]
    pub a_dim: usize,
    #[arg(long = "K", default_value_t = 2)]
    pub level_k: usize,
    /// Kind of sampled state when no input is given.
    #[arg(long, value_enum, default_value_t = SampleKind::Generic)]
    pub kind: SampleKind,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleKind {
    Separable,
    Bell,
    ScalarA,
    Generic,
}

#[derive(Args, Debug)]
pub struct RandomMapArgs {
    #[arg(long, value_enum, default_value_t = MapKind::Cp)]
    pub kind: MapKind,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Output dimension; defaults to `n`.
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of Kraus operators or terms.
    #[arg(long, default_value_t = 2)]
    pub size: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    Cp,
    UnitalCp,
    Eb,
    BlockEb,
    Decomposable,
    Copositive,
    Hardened,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
