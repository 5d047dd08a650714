use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use mmot_core::decompose::Verdict;
use mmot_core::scenario::{execute, output_dir, sweep, write_reports, Scenario};
use rayon::prelude::*;

/// Run multi-marginal optimal transport scenarios.
#[derive(Parser)]
#[command(name = "mmot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file, or every *.json scenario in a directory.
    Run {
        path: PathBuf,
        /// Report directory. With a directory input, one subdirectory per scenario.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scenarios to run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Re-run a generated scenario at several resolutions.
    Sweep {
        path: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        resolutions: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Outcome {
    Consistent,
    Inconsistent,
}

fn run_one(path: &Path, out: Option<&Path>) -> anyhow::Result<Outcome> {
    let scenario = Scenario::load(path)?;
    let result = execute(&scenario).with_context(|| format!("running {}", path.display()))?;
    let dir = output_dir(&scenario, out);
    write_reports(&result, &scenario, &dir)?;
    let s = &result.summary;
    let mut line = format!("{}: hash {}", scenario.name, &s.instance_hash[..12]);
    if let (Some(p), Some(g)) = (s.primal, s.gap) {
        line += &format!(" primal {p:.9e} gap {g:.3e}");
    }
    if let Some(m) = s.m_observed {
        line += &format!(" m {m}");
    }
    if let Some(k) = s.k {
        line += &format!(" k {k}");
    }
    if let Some(v) = s.verdict {
        line += &format!(" {}", if v == Verdict::Consistent { "consistent" } else { "inconsistent" });
    }
    println!("{line} -> {}", dir.display());
    Ok(match s.verdict {
        Some(Verdict::Inconsistent) => Outcome::Inconsistent,
        _ => Outcome::Consistent,
    })
}

fn scenario_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no scenario files in {}", dir.display());
    }
    Ok(files)
}

fn run(path: &Path, out: Option<&Path>, jobs: usize) -> anyhow::Result<Outcome> {
    if !path.is_dir() {
        return run_one(path, out);
    }
    let files = scenario_files(path)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let results: Vec<anyhow::Result<Outcome>> = pool.install(|| {
        files
            .par_iter()
            .map(|f| {
                let sub = out.map(|o| o.join(f.file_stem().unwrap_or_default()));
                run_one(f, sub.as_deref())
            })
            .collect()
    });
    let mut outcome = Outcome::Consistent;
    for r in results {
        if let Outcome::Inconsistent = r? {
            outcome = Outcome::Inconsistent;
        }
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { path, out, jobs } => run(&path, out.as_deref(), jobs),
        Command::Sweep { path, resolutions, out } => (|| {
            let scenario = Scenario::load(&path)?;
            let report = sweep(&scenario, &resolutions)?;
            let dir = out.unwrap_or_else(|| PathBuf::from("reports").join(format!("{}-sweep", scenario.name)));
            report.write(&dir)?;
            print!("{}", report.to_csv());
            Ok(if report.rows.iter().any(|r| r.verdict == Verdict::Inconsistent) {
                Outcome::Inconsistent
            } else {
                Outcome::Consistent
            })
        })(),
    };
    match result {
        Ok(Outcome::Consistent) => ExitCode::SUCCESS,
        Ok(Outcome::Inconsistent) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
