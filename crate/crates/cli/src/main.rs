use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use cppe::design::{solve_g_optimal_detailed, DEFAULT_DESIGN_MAX_ITER, DEFAULT_DESIGN_TOL};
use cppe::hard_instance::{hard_instance, HardRegime};
use cppe::harness::{read_actions_csv, run_experiment, write_actions_csv, write_design_csv, ExperimentConfig};
use cppe::policies::epsilon_net;
use cppe::rng::rng_from_seed;
use cppe::{Algorithm, HarnessError};

#[derive(Parser)]
#[command(name = "cppe", version, about = "Multi-agent linear bandit simulations with CP-PE, Fed-PE and Ind-PE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for traces, summary and event log.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Compute a G-optimal design for the actions in a CSV file.
    Design {
        #[arg(long)]
        actions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DESIGN_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_DESIGN_MAX_ITER)]
        max_iter: usize,
        /// Write weights here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write an eps-net of the unit ball as CSV.
    Net {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the vertices of a rotated-hypercube hard instance as CSV.
    Hard(HardArgs),
}

#[derive(Args)]
struct HardArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: u64,
    /// Data-rich exponent.
    #[arg(long, conflicts_with = "gamma", required_unless_present = "gamma")]
    alpha: Option<f64>,
    /// Middle-regime exponent; needs --m.
    #[arg(long, requires = "m")]
    gamma: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    c1: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Error tagged with the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

fn runtime_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn harness_error(error: HarnessError) -> Failure {
    if error.is_config() {
        config_error(error)
    } else {
        runtime_error(error)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { config, out, workers } => run(&config, &out, workers),
        Command::Design {
            actions,
            tol,
            max_iter,
            out,
        } => design(&actions, tol, max_iter, out.as_deref()),
        Command::Net { d, eps, out } => net(d, eps, &out),
        Command::Hard(args) => hard(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(runtime_error)
}

fn run(config: &Path, out: &Path, workers: Option<usize>) -> Result<(), Failure> {
    let cfg = ExperimentConfig::from_path(config).map_err(harness_error)?;
    if workers == Some(0) {
        return Err(config_error(anyhow!("--workers must be at least 1")));
    }
    let output = run_experiment(&cfg, Some(out), workers).map_err(harness_error)?;

    let unit = if output.summary.normalized { "per-user" } else { "joint" };
    println!("final mean {unit} cumulative regret over {} rounds:", cfg.n);
    for alg in &cfg.algorithms {
        if let Some(s) = output.summary.get(*alg) {
            let t = s.mean.len() - 1;
            println!("  {alg:<6} {:>12.4} +- {:<10.4} ({} reps)", s.mean[t], s.std[t], s.reps);
        }
    }
    if cfg.algorithms.contains(&Algorithm::Cppe) && !output.collaborative_phases.is_empty() {
        let mut counts = std::collections::BTreeMap::new();
        for (_, l) in &output.collaborative_phases {
            *counts.entry(*l).or_insert(0usize) += 1;
        }
        let hist: Vec<String> = counts.iter().map(|(l, c)| format!("{l}:{c}")).collect();
        println!("cppe collaborative phases (count:reps): {}", hist.join(" "));
    }
    if !output.failures.is_empty() {
        eprintln!("{} algorithm runs failed; see failures.csv", output.failures.len());
    }
    println!("wrote results to {}", out.display());
    Ok(())
}

fn design(actions: &Path, tol: f64, max_iter: usize, out: Option<&Path>) -> Result<(), Failure> {
    let set = read_actions_csv(actions).map_err(config_error)?;
    let opt = solve_g_optimal_detailed(&set, tol, max_iter).map_err(|e| match e {
        cppe::DesignError::InvalidTolerance(_) => config_error(e),
        other => runtime_error(other),
    })?;
    let summary = format!(
        "g = {:.6} (rank {}, support {}, {} iterations)",
        opt.g_value,
        opt.rank,
        opt.design.support_size(),
        opt.iterations
    );
    match out {
        Some(path) => {
            write_design_csv(create(path)?, &opt.design).map_err(harness_error)?;
            println!("{summary}");
        }
        None => {
            write_design_csv(io::stdout().lock(), &opt.design).map_err(harness_error)?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn net(d: usize, eps: f64, out: &Path) -> Result<(), Failure> {
    let set = epsilon_net(d, eps).map_err(config_error)?;
    write_actions_csv(create(out)?, &set).map_err(harness_error)?;
    println!("wrote {} points to {}", set.len(), out.display());
    Ok(())
}

fn hard(args: &HardArgs) -> Result<(), Failure> {
    let regime = match (args.alpha, args.gamma, args.m) {
        (Some(alpha), None, _) => HardRegime::DataRich { alpha },
        (None, Some(gamma), Some(m)) => HardRegime::Middle { gamma, m },
        _ => return Err(config_error(anyhow!("give --alpha, or --gamma with --m"))),
    };
    let mut rng = rng_from_seed(args.seed);
    let h = hard_instance(args.d, args.n, regime, args.c1, &mut rng).map_err(config_error)?;

    let mut w = create(&args.out)?;
    let write = |w: &mut BufWriter<File>| -> io::Result<()> {
        writeln!(
            w,
            "# theta0_norm={},eta={},c3={},c4={},sigma={}",
            h.theta0_norm(),
            h.eta(),
            h.c3(),
            h.c4(),
            h.sigma()
        )?;
        let coords: Vec<String> = (1..=args.d).map(|j| format!("x{j}")).collect();
        writeln!(w, "z,{}", coords.join(","))?;
        for (i, v) in h.vertices().iter().enumerate() {
            let z: String = h.signs(i).iter().map(|&s| if s > 0 { '+' } else { '-' }).collect();
            let xs: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{z},{}", xs.join(","))?;
        }
        w.flush()
    };
    write(&mut w)
        .with_context(|| format!("cannot write {}", args.out.display()))
        .map_err(runtime_error)?;
    println!("wrote {} vertices to {}", h.vertices().len(), args.out.display());
    Ok(())
}
