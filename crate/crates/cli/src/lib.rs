//! Command-line pipeline: synthesis, shape spaces, fitting, refinement,
//! meshing and evaluation.

pub mod args;
pub mod commands;
pub mod pipeline;

use args::{Cli, Command};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_OPTIMIZATION: u8 = 3;

/// Exit status for a failed run: optimization failures are 3, everything else 2.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<pairsdf::Error>() {
        Some(pairsdf::Error::Optimization { .. }) => EXIT_OPTIMIZATION,
        _ => EXIT_VALIDATION,
    }
}

/// Run one parsed invocation; `Ok(false)` means a check reported failure.
pub fn run(cli: &Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    let seed = cli.seed;
    match &cli.command {
        Command::Synth(a) => commands::synth(a, seed)?,
        Command::FitSpace(a) => commands::fit_space(a)?,
        Command::FitLatent(a) => commands::fit_latent(a, seed)?,
        Command::Refine(a) => commands::refine_cmd(a, seed)?,
        Command::Mesh(a) => commands::mesh(a, seed)?,
        Command::Eval(a) => commands::eval(a, seed)?,
        Command::OracleCheck(a) => return commands::oracle_check(a, seed),
    }
    Ok(true)
}
