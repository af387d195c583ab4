use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use decopt::acceptance::{run_all, run_criterion, CriterionOutcome};
use decopt::harness::{
    read_json, read_sweep, run_experiment, run_sweep, write_csv, write_json, write_sweep, ExperimentConfig,
    SweepConfig, SweepResult, TraceDocument,
};
use decopt::trace::RunTrace;
use decopt::Error;

/// Deterministic simulator for parallel and decentralized convex optimization.
#[derive(Parser)]
#[command(name = "decopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write its traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the paths in the config's `output` section.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep config and write per-cell CSVs plus `sweep.json`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Exit nonzero if any cell or fit failed.
        #[arg(long)]
        assert: bool,
    },
    /// Print the slope table of a sweep directory or summaries of trace files.
    Report {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Run the built-in acceptance checks and exit nonzero on any failure.
        #[arg(long)]
        assert: bool,
        /// Comma-separated criterion ids to run with `--assert`.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, out } => run(&config, out.as_deref()),
        Command::Sweep { config, out, assert } => sweep(&config, &out, assert),
        Command::Report { input, assert, only } => report(input.as_deref(), assert, &only),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run(config_path: &Path, out: Option<&Path>) -> Result<bool> {
    let cfg = ExperimentConfig::from_json(&read_text(config_path)?)?;
    match run_experiment(&cfg) {
        Ok(outcome) => {
            for (i, trace) in outcome.traces.iter().enumerate() {
                println!("{}", summary(trace));
                save_trace(&cfg, trace, i, out)?;
            }
            Ok(true)
        }
        Err(Error::Divergence { round, trace }) => {
            save_trace(&cfg, &trace, 0, out)?;
            bail!("divergence detected at round {round}; partial trace written")
        }
        Err(Error::BudgetExhausted(trace)) => {
            save_trace(&cfg, &trace, 0, out)?;
            bail!("budget exhausted before the method finished; partial trace written")
        }
        Err(e) => Err(e.into()),
    }
}

fn summary(trace: &RunTrace) -> String {
    let last = trace.last();
    format!(
        "{} seed {}: {} rounds, {} comm rounds, final subopt {:.3e}, stop {:?}",
        trace.algorithm,
        trace.seed,
        last.map_or(0, |r| r.round),
        last.map_or(0, |r| r.comm_rounds),
        trace.final_subopt(),
        trace.stop
    )
}

/// Destination paths for repeat `index`: `--out` wins over the config's `output` section.
fn trace_paths(cfg: &ExperimentConfig, index: usize, out: Option<&Path>) -> (Option<PathBuf>, Option<PathBuf>) {
    if let Some(dir) = out {
        let stem = format!("run{index:02}");
        return (Some(dir.join(format!("{stem}.csv"))), Some(dir.join(format!("{stem}.json"))));
    }
    let suffixed = |p: &String| {
        let path = PathBuf::from(p);
        if cfg.repeats == 1 {
            return path;
        }
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let name = match path.extension() {
            Some(ext) => format!("{stem}_rep{index:02}.{}", ext.to_string_lossy()),
            None => format!("{stem}_rep{index:02}"),
        };
        path.with_file_name(name)
    };
    (cfg.output.csv.as_ref().map(suffixed), cfg.output.json.as_ref().map(suffixed))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn save_trace(cfg: &ExperimentConfig, trace: &RunTrace, index: usize, out: Option<&Path>) -> Result<()> {
    let (csv, json) = trace_paths(cfg, index, out);
    if let Some(path) = csv {
        write_csv(trace, create(&path)?)?;
    }
    if let Some(path) = json {
        let doc = TraceDocument { config: Some(cfg.clone()), trace: trace.clone() };
        write_json(&doc, create(&path)?)?;
    }
    Ok(())
}

fn sweep(config_path: &Path, out: &Path, assert: bool) -> Result<bool> {
    let cfg = SweepConfig::from_json(&read_text(config_path)?)?;
    let result = run_sweep(&cfg)?;
    write_sweep(&result, out)?;
    print_sweep(&result);
    let failed_cells = result.cells.iter().filter(|c| c.error.is_some()).count();
    Ok(!assert || (failed_cells == 0 && result.fit_errors.is_empty()))
}

fn print_sweep(result: &SweepResult) {
    let failed = result.cells.iter().filter(|c| c.error.is_some()).count();
    println!("{} cells, {failed} failed", result.cells.len());
    for (i, cell) in result.cells.iter().enumerate() {
        if let Some(e) = &cell.error {
            println!("  cell {i}: {e}");
        }
    }
    if !result.fits.is_empty() {
        println!("{:<40} {:<32} {:>9} {:>9} {:>6}", "y", "x", "slope", "std err", "points");
        for f in &result.fits {
            println!("{:<40} {:<32} {:>9.4} {:>9.4} {:>6}", f.y_name, f.x_name, f.slope, f.std_error, f.points);
        }
    }
    for e in &result.fit_errors {
        println!("fit failed: {e}");
    }
}

fn report(input: Option<&Path>, assert: bool, only: &[u8]) -> Result<bool> {
    if input.is_none() && !assert {
        bail!("report needs --in <dir> and/or --assert");
    }
    if let Some(dir) = input {
        report_dir(dir)?;
    }
    if !assert {
        return Ok(true);
    }
    let outcomes: Vec<CriterionOutcome> =
        if only.is_empty() { run_all() } else { only.iter().map(|&id| run_criterion(id)).collect() };
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    Ok(failed == 0)
}

fn report_dir(dir: &Path) -> Result<()> {
    if dir.join("sweep.json").exists() {
        print_sweep(&read_sweep(dir)?);
        return Ok(());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "json"));
    paths.sort();
    if paths.is_empty() {
        bail!("{} holds neither sweep.json nor trace JSON files", dir.display());
    }
    for path in paths {
        let doc = read_json(&path).with_context(|| format!("reading {}", path.display()))?;
        println!("{}: {}", path.display(), summary(&doc.trace));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"{
        "version": 1,
        "seed": 1,
        "repeats": 2,
        "problem": {"generator": {"family": "quadratic", "nodes": 2, "dim": 3, "mu": 0.5, "l": 1.0}},
        "algorithm": {"name": "accelerated_gradient"},
        "budget": {"max_rounds": 5},
        "output": {"csv": "traces/out.csv"}
    }"#;

    #[test]
    fn repeat_paths_get_suffixes() {
        let cfg = ExperimentConfig::from_json(CONFIG).unwrap();
        let (csv, json) = trace_paths(&cfg, 1, None);
        assert_eq!(csv.unwrap(), PathBuf::from("traces/out_rep01.csv"));
        assert!(json.is_none());
        let (csv, json) = trace_paths(&cfg, 0, Some(Path::new("d")));
        assert_eq!(csv.unwrap(), PathBuf::from("d/run00.csv"));
        assert_eq!(json.unwrap(), PathBuf::from("d/run00.json"));
    }

    #[test]
    fn run_then_report() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("config.json");
        fs::write(&config, CONFIG).unwrap();
        let out = dir.path().join("out");
        assert!(run(&config, Some(&out)).unwrap());
        assert!(out.join("run00.csv").exists() && out.join("run01.json").exists());
        let doc = read_json(&out.join("run01.json")).unwrap();
        assert_eq!(doc.trace.records.len(), 6);
        report_dir(&out).unwrap();
        assert!(report(None, false, &[]).is_err());
    }
}
