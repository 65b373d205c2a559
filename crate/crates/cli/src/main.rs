mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_VIOLATION: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "pwl-regions", version, about = "Linear regions of piecewise-linear networks")]
pub struct Cli {
    /// Base seed; commands derive their streams from it
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Format of tabular results
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Initialize a network and save it
    Init(InitArgs),
    /// Build the sawtooth network and count its pieces, with perturbations
    Sawtooth(SawtoothArgs),
    /// Add Gaussian noise to every weight and bias of a network
    Perturb(PerturbArgs),
    /// Count regions along lines or a segment
    CountLine(CountLineArgs),
    /// Enumerate the regions of a 2-D slice
    EnumeratePlane(EnumeratePlaneArgs),
    /// Distances from sample points to the nearest region boundary
    Distance(DistanceArgs),
    /// Monte-Carlo checks of the expected-complexity identities and bounds
    VerifyTheory(VerifyTheoryArgs),
    /// Train a network and track region complexity at checkpoints
    Train(TrainArgs),
    /// Render a 2-D slice as SVG
    Render(RenderArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ArchArgs {
    #[arg(long)]
    pub input_dim: Option<usize>,
    /// Hidden widths, comma separated
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub output_dim: Option<usize>,
    /// relu, hard-tanh or leaky-relu:<slope>
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long, value_enum)]
    pub weight_law: Option<WeightLawArg>,
    /// Weight variance is gain / fan_in
    #[arg(long)]
    pub gain: Option<f64>,
    /// Bias standard deviation for every layer
    #[arg(long)]
    pub bias_sd: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightLawArg {
    Normal,
    TwoPoint,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
pub enum EncodingArg {
    #[default]
    Decimal,
    HexLe,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// JSON file with a full initialization spec; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[arg(long, value_enum, default_value_t)]
    pub encoding: EncodingArg,
}

#[derive(Debug, Args)]
pub struct SawtoothArgs {
    /// Depth parameter: 2^n teeth from 3n+4 neurons
    #[arg(long)]
    pub n: usize,
    /// Noise sd for the perturbation trials
    #[arg(long, default_value_t = 0.1)]
    pub perturb_sd: f64,
    /// Number of perturbation trials
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t)]
    pub encoding: EncodingArg,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[arg(long)]
    pub sd: f64,
    #[arg(long, value_enum, default_value_t)]
    pub encoding: EncodingArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PointSource {
    /// Training images
    Mnist,
    /// Test images
    MnistTest,
    /// Standard normal
    Gaussian,
    /// Uniform on [0, 1]^n
    Uniform,
}

#[derive(Debug, Args)]
pub struct CountLineArgs {
    #[arg(long)]
    pub net: PathBuf,
    /// Lines pass through the origin and a random point; otherwise through a
    /// random point in a random direction
    #[arg(long)]
    pub through_origin: bool,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub random_point: PointSource,
    #[arg(long, default_value_t = 100)]
    pub lines: usize,
    /// Count a single segment from this point (comma separated)
    #[arg(long, value_delimiter = ',', requires = "to", allow_hyphen_values = true)]
    pub from: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', requires = "from", allow_hyphen_values = true)]
    pub to: Option<Vec<f64>>,
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlaneArgs {
    /// Three training indices spanning the slice
    #[arg(long, value_delimiter = ',')]
    pub through: Option<Vec<usize>>,
    /// Use the first training example of each of three classes
    #[arg(long, value_delimiter = ',')]
    pub exemplars: Option<Vec<usize>>,
    /// JSON file holding three points spanning the slice
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Two input coordinates spanning an axis-aligned slice through the origin
    #[arg(long, value_delimiter = ',')]
    pub axes: Option<Vec<usize>>,
    /// Side of the square; defaults to twice the circumradius for point
    /// slices and 2 for axis slices
    #[arg(long)]
    pub side: Option<f64>,
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnumeratePlaneArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[command(flatten)]
    pub plane: PlaneArgs,
    /// Skip writing the full arena
    #[arg(long)]
    pub no_arena: bool,
    /// Also render the slice
    #[arg(long)]
    pub svg: bool,
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistanceSource {
    /// Normal with the training set's per-coordinate moments
    Gaussian,
    Train,
    Test,
    Uniform,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[arg(long, value_enum, default_value = "uniform")]
    pub source: DistanceSource,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Cube bounds for uniform samples
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub hi: f64,
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    GradMoment,
    PreactMoment,
    OpenPath,
    LogGrad,
    Crossings,
    Corollary,
    DistanceBound,
    Tube,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyTheoryArgs {
    /// Checks to run, comma separated
    #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
    pub check: Vec<Check>,
    /// Ensemble size (networks, or bias draws for crossings)
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Stratum dimension for the corollary check (1 or 2)
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Monte-Carlo points per arena for the tube check
    #[arg(long, default_value_t = 100_000)]
    pub mc_points: usize,
    /// Sample points for the distance bound
    #[arg(long, default_value_t = 2_000)]
    pub samples: usize,
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    #[command(flatten)]
    pub arch: ArchArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    CrossEntropy,
    Mse,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub net: PathBuf,
    /// JSON file with a full training config; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mnist_dir: Option<PathBuf>,
    /// Synthetic data instead of MNIST: classes,per_class,dim,separation
    #[arg(long, value_delimiter = ',')]
    pub blobs: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Checkpoint epoch fractions, comma separated; defaults to 0..0.5 in
    /// steps of 0.05 and then every epoch
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<f64>>,
    /// Cap on examples used for loss and accuracy at checkpoints
    #[arg(long)]
    pub eval_limit: Option<usize>,
    /// Lines through the origin used for regions per neuron
    #[arg(long, default_value_t = 100)]
    pub track_lines: usize,
    /// Training points used for boundary distances
    #[arg(long, default_value_t = 1000)]
    pub track_points: usize,
    /// Save the network at every checkpoint
    #[arg(long)]
    pub save_checkpoints: bool,
    #[arg(long, value_enum, default_value_t)]
    pub encoding: EncodingArg,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Arena written by enumerate-plane
    #[arg(long, conflicts_with = "net")]
    pub arena: Option<PathBuf>,
    #[arg(long)]
    pub net: Option<PathBuf>,
    #[command(flatten)]
    pub plane: PlaneArgs,
    /// Image side in pixels
    #[arg(long, default_value_t = 800.0)]
    pub size: f64,
    /// Hide the anchor markers
    #[arg(long)]
    pub no_anchors: bool,
    /// Draw region outlines in this color
    #[arg(long)]
    pub stroke: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(commands::Outcome::Ok) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Violation) => ExitCode::from(EXIT_VIOLATION),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
