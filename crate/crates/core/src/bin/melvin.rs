use clap::{Parser, Subcommand};
use melvin::cli::{run, Command, Overrides, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "melvin", version, about = "Neutral-particle dynamics in the Schwarzschild-Melvin spacetime")]
struct Args {
    /// Defaults to the command named in the config file.
    #[command(subcommand)]
    verb: Option<Verb>,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    tol_abs: Option<f64>,
    #[arg(long, global = true)]
    tol_rel: Option<f64>,
    /// Field strength.
    #[arg(long, global = true)]
    b: Option<f64>,
    /// Axial angular momentum.
    #[arg(long, global = true)]
    l: Option<f64>,
    /// Energy.
    #[arg(long, global = true)]
    e: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Magnetic force lines and energy density.
    Fieldlines,
    /// Bifurcation curves of circular orbits.
    Equilibria,
    /// Hill region classification.
    Hill,
    /// Integrate the regularized flow.
    Trajectory,
    /// Poincare map point clouds.
    Poincare,
    /// Fixed points and bifurcations of the map.
    Fixedpoints,
    /// Stable and unstable manifolds of the hyperbolic point.
    Separatrix,
    /// Melnikov integral table.
    Melnikov,
}

impl From<Verb> for Command {
    fn from(v: Verb) -> Self {
        match v {
            Verb::Fieldlines => Command::Fieldlines,
            Verb::Equilibria => Command::Equilibria,
            Verb::Hill => Command::Hill,
            Verb::Trajectory => Command::Trajectory,
            Verb::Poincare => Command::Poincare,
            Verb::Fixedpoints => Command::Fixedpoints,
            Verb::Separatrix => Command::Separatrix,
            Verb::Melnikov => Command::Melnikov,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = args.config.as_deref().map(RunConfig::load).transpose();
    let result = cfg.and_then(|cfg| {
        let mut cfg = cfg.unwrap_or_default();
        if let Some(v) = args.verb {
            let verb = Command::from(v);
            if let Some(c) = cfg.command.filter(|&c| c != verb) {
                eprintln!("note: config was written for '{}', running '{}'", c.name(), verb.name());
            }
            cfg.command = Some(verb);
        }
        cfg.apply(&Overrides { b: args.b, l: args.l, e: args.e, tol_abs: args.tol_abs, tol_rel: args.tol_rel, out: args.out.clone(), workers: args.workers });
        run(&cfg)
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
