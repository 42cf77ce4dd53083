use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pairsdf", version, about = "Joint SDF reconstruction under pairwise contact and gap constraints")]
pub struct Cli {
    /// RNG seed; overrides `solver.seed` of a scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker thread cap (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a bundled synthetic scenario directory.
    Synth(SynthArgs),
    /// Build a PCA shape space (BASIS1) from masks or distance volumes.
    FitSpace(FitSpaceArgs),
    /// Stage 1: fit each component's latent to its reference independently.
    FitLatent(FitLatentArgs),
    /// Stage 2: joint constrained refinement.
    Refine(RefineArgs),
    /// Extract OBJ meshes of every component.
    Mesh(MeshArgs),
    /// Write a metrics report.
    Eval(EvalArgs),
    /// Cross-check fast paths against brute-force oracles.
    OracleCheck(OracleCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    SpherePair,
    HeartPair,
    SpineStack,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub kind: SynthKind,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Instance count (heart-pair and spine-stack).
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
}

#[derive(Debug, Args)]
pub struct FitSpaceArgs {
    /// Training VOX1 files (masks are converted to distances first).
    #[arg(required = true)]
    pub volumes: Vec<PathBuf>,
    /// Number of principal directions.
    #[arg(long, short)]
    pub k: usize,
    /// Output BASIS1 file.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write each training volume's latent code as JSON.
    #[arg(long)]
    pub codes: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossName {
    Contact,
    Ncontact,
    Intersecting,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerName {
    Adam,
    GradientDescent,
}

/// Overrides for scenario keys; each flag replaces the file's value.
#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(long)]
    pub scenario: PathBuf,

    /// solver.iterations
    #[arg(long)]
    pub iterations: Option<usize>,
    /// solver.step
    #[arg(long)]
    pub step: Option<f64>,
    /// solver.resample_every
    #[arg(long)]
    pub resample_every: Option<usize>,
    /// solver.mining_points
    #[arg(long)]
    pub mining_points: Option<usize>,
    /// solver.data_points_per_component
    #[arg(long)]
    pub data_points_per_component: Option<usize>,
    /// solver.near_fraction
    #[arg(long)]
    pub near_fraction: Option<f64>,
    /// solver.band_sigma
    #[arg(long)]
    pub band_sigma: Option<f64>,
    /// solver.weights.intersecting (also weights the minimum-gap hinge)
    #[arg(long)]
    pub weight_intersecting: Option<f64>,
    /// solver.weights.contact
    #[arg(long)]
    pub weight_contact: Option<f64>,
    /// solver.weights.ncontact
    #[arg(long)]
    pub weight_ncontact: Option<f64>,
    /// solver.weights.data
    #[arg(long)]
    pub weight_data: Option<f64>,
    /// solver.optimizer
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerName>,
    /// solver.tolerance (0 disables early stopping)
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// solver.backtracking
    #[arg(long)]
    pub backtracking: Option<bool>,

    /// fit.iterations
    #[arg(long)]
    pub fit_iterations: Option<usize>,
    /// fit.step
    #[arg(long)]
    pub fit_step: Option<f64>,
    /// fit.optimizer
    #[arg(long, value_enum)]
    pub fit_optimizer: Option<OptimizerName>,
    /// fit.tolerance
    #[arg(long)]
    pub fit_tolerance: Option<f64>,

    /// constraints[].p of every contact-ratio constraint
    #[arg(long)]
    pub p: Option<f64>,
    /// constraints[].epsilon of every contact-ratio constraint
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// constraints[].d of every minimum-gap constraint
    #[arg(long)]
    pub d: Option<f64>,

    /// Zero a loss weight (repeatable).
    #[arg(long, value_enum)]
    pub disable_loss: Vec<LossName>,
}

#[derive(Debug, Args)]
pub struct FitLatentArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output latents JSON.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Start from these latents instead of running stage 1.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Output directory for latents and the iteration log.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Latents JSON; the scenario's initial latents when absent.
    #[arg(long)]
    pub latents: Option<PathBuf>,
    /// Mesh the reference shapes instead.
    #[arg(long)]
    pub reference: bool,
    /// Lattice resolution per axis.
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
    /// Output directory, one `<component>.obj` per component.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scenario to evaluate (with --latents); compares to references and checks constraints.
    #[arg(long, conflicts_with_all = ["pred", "gt"])]
    pub scenario: Option<PathBuf>,
    #[arg(long, requires = "scenario")]
    pub latents: Option<PathBuf>,
    /// Predicted OBJ mesh.
    #[arg(long, requires = "gt")]
    pub pred: Option<PathBuf>,
    /// Ground-truth OBJ mesh.
    #[arg(long, requires = "pred")]
    pub gt: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
    /// Surface samples per mesh for Chamfer and normal consistency.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    /// Report file (JSON lines); standard output when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleKind {
    /// Sampled contact ratio vs the dense lattice on two unit spheres.
    ContactRatio,
    /// Fast distance transform vs exhaustive search on random masks.
    Edt,
    /// Sampled intersection volume vs the closed-form lens.
    Lens,
}

#[derive(Debug, Args)]
pub struct OracleCheckArgs {
    #[arg(value_enum, default_values_t = [OracleKind::ContactRatio, OracleKind::Edt, OracleKind::Lens])]
    pub checks: Vec<OracleKind>,
    /// Random masks for the EDT check.
    #[arg(long, default_value_t = 100)]
    pub masks: usize,
}
