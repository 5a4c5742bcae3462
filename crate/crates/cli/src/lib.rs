//! `psyman`: command-line front end for the explanation toolkit.
//!
//! Every command writes its outputs plus a [`manifest::RunManifest`] beside
//! each one. Exit codes: 0 success, 2 usage or data error, 3 internal
//! invariant failure. `PSYMAN_THREADS` caps worker threads (0 or unset = auto).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod demo;
pub mod manifest;
pub mod svg;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or inconsistent inputs.
    Data(String),
    /// A result broke an invariant the pipeline guarantees.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Data(m) => write!(f, "{m}"),
            CliError::Internal(m) => write!(f, "internal invariant failed: {m}"),
        }
    }
}

impl From<psyman_core::Error> for CliError {
    fn from(e: psyman_core::Error) -> Self {
        match e {
            psyman_core::Error::Optimization { .. } => CliError::Internal(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

pub(crate) trait Context<T> {
    fn context(self, what: impl std::fmt::Display) -> Result<T, CliError>;
}

impl<T> Context<T> for psyman_core::Result<T> {
    fn context(self, what: impl std::fmt::Display) -> Result<T, CliError> {
        self.map_err(|e| match CliError::from(e) {
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Internal(m) => CliError::Internal(format!("{what}: {m}")),
        })
    }
}

pub(crate) fn ensure(cond: bool, what: impl FnOnce() -> String) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Internal(what()))
    }
}

pub(crate) fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(name = "psyman", version, about = "Explanation analytics for facial-attribute models")]
pub struct Cli {
    /// Seed for every random draw the command makes.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-attribute Pearson correlation between predictions and ratings.
    Power(PowerArgs),
    /// Ward-clustered attribute correlation heatmap.
    Heatmap(HeatmapArgs),
    /// 2D/3D t-SNE or stress embedding with a scatter plot.
    Embed(EmbedArgs),
    /// Grad-CAM overlay from activation and gradient tensors.
    Gradcam(GradcamArgs),
    /// Self-contained pipeline on synthetic faces.
    Demo(DemoArgs),
    /// Rerun a manifest and check its outputs are reproduced exactly.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// Predictions CSV (image_id plus one column per attribute).
    pub pred: PathBuf,
    /// Ground-truth ratings CSV with the same layout.
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    pub ratings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Merge table CSV; defaults to the SVG path with a `.dendrogram.csv` extension.
    #[arg(long)]
    pub dendrogram: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Tsne,
    Stress,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tsne => "tsne",
            Method::Stress => "stress",
        }
    }
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Feature rows: ratings-style CSV or a 2D `.pst` tensor.
    pub features: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Tsne)]
    pub method: Method,
    /// Per-image values used to colour the points.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Column of the labels CSV to colour by; required when it has several.
    #[arg(long)]
    pub attribute: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    /// Defaults to 1000 for t-SNE and 2000 for stress.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Defaults to 200 for t-SNE and 0.01 for stress.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Stress only: restrict the objective to k-nearest-neighbour pairs.
    #[arg(long)]
    pub neighbors: Option<usize>,
    /// Camera for 3D plots, `azimuth,elevation` in degrees.
    #[arg(long, default_value = "-60,30", allow_hyphen_values = true)]
    pub view: String,
    /// Coordinates CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Scatter plot; defaults to the CSV path with an `.svg` extension.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcamArgs {
    /// Feature maps `[K, H, W]`.
    pub activations: PathBuf,
    /// Target-score gradients with the same dims.
    pub gradients: PathBuf,
    /// Grayscale image `[H, W]` or `[1, H, W]`, values in [0, 1].
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Name of the explained output, recorded in the manifest.
    #[arg(long, default_value = "target")]
    pub target: String,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Artifact directory; a temporary one is used and removed when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = match std::env::var("PSYMAN_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Data(format!("PSYMAN_THREADS must be a non-negative integer, got {v:?}")))?,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))
}

/// Runs one command and returns its process exit code.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_DATA } else { EXIT_OK };
        }
    };
    let result = thread_pool().and_then(|pool| pool.install(|| dispatch(cli)));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("psyman: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Power(a) => commands::power(&a, seed),
        Command::Heatmap(a) => commands::heatmap(&a, seed),
        Command::Embed(a) => commands::embed(&a, seed),
        Command::Gradcam(a) => commands::gradcam(&a, seed),
        Command::Demo(a) => demo::demo(&a, seed),
        Command::Replay(a) => commands::replay(&a),
    }
}
