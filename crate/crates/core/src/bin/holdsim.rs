use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use holdsim::control::StrategySpec;
use holdsim::experiment::{
    default_out_dir, format_table, run_cell, table_cells, timing, write_summary, Cell, RunOptions, SummaryMetadata,
    OUT_DIR_ENV, TABLE_DEFAULT_REPS,
};
use holdsim::scenario::{load_scenario_ref, StrategyKind};

#[derive(Parser)]
#[command(name = "holdsim", version, about = "Holding control on a circular bus line")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded replications of one strategy.
    Run(RunArgs),
    /// Run one of the canned sweeps (table6, table8, table11).
    Table(TableArgs),
    /// Report wall-clock per replication and per decision for a range of depths.
    Timing(TimingArgs),
    /// Print a scenario as TOML.
    Show {
        #[arg(long, default_value = "builtin:he2019")]
        scenario: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file or `builtin:<name>`.
    #[arg(long, default_value = "builtin:he2019")]
    scenario: String,
    #[arg(long, value_parser = clap::value_parser!(StrategyKind))]
    strategy: Option<StrategyKind>,
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated holding times applied at every control stop.
    #[arg(long, value_delimiter = ',')]
    action_set: Option<Vec<f64>>,
    /// Comma-separated stop ids used as control points, or `all`.
    #[arg(long)]
    control_stops: Option<String>,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Write one trajectory file per replication.
    #[arg(long)]
    trajectories: bool,
    /// Write one decision log per replication.
    #[arg(long)]
    decisions: bool,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    parallel: usize,
    /// Fill the wall-clock columns of the summary.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct TableArgs {
    name: String,
    #[arg(long, default_value_t = TABLE_DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "builtin:he2019")]
    scenario: String,
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    parallel: usize,
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct TimingArgs {
    /// Depths to time, e.g. `1..5` or `3`.
    #[arg(long, default_value = "1..5")]
    stages: String,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "builtin:he2019")]
    scenario: String,
}

fn parse_range(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let parse = |x: &str| x.trim().parse::<usize>().with_context(|| format!("bad stage count `{x}`"));
    let r = match s.split_once("..") {
        Some((a, b)) => parse(a)?..=parse(b.trim_start_matches('='))?,
        None => {
            let n = parse(s)?;
            n..=n
        }
    };
    if r.is_empty() || *r.start() == 0 {
        bail!("stage range `{s}` must be non-empty and start at 1 or more");
    }
    Ok(r)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let scenario = load_scenario_ref(&a.scenario)?;
    let mut spec = StrategySpec::from_scenario(&scenario);
    if let Some(k) = a.strategy {
        spec.kind = k;
    }
    if let Some(n) = a.stages {
        spec.stages = n;
    }
    if let Some(g) = a.gamma {
        spec.gamma = g;
    }
    let mut cell = Cell::new(spec, a.reps, a.seed);
    cell.action_set = a.action_set;
    cell.control_stops = match a.control_stops.as_deref() {
        None => None,
        Some("all") => Some((1..=scenario.n_stops()).collect()),
        Some(list) => Some(
            list.split(',')
                .map(|x| x.trim().parse::<usize>().with_context(|| format!("bad stop id `{x}`")))
                .collect::<Result<_>>()?,
        ),
    };
    cell.validate()?;
    let out = a.out.unwrap_or_else(default_out_dir);
    let opts =
        RunOptions { parallel: a.parallel, trajectories: a.trajectories, decisions: a.decisions, timing: a.timing };
    let outcome = run_cell(&scenario, &cell, opts, Some(&out))?;
    let meta = SummaryMetadata::new(&a.scenario, &scenario, a.seed, a.reps);
    let (csv, _) = write_summary(&out, "summary", std::slice::from_ref(&outcome.row), &meta)?;
    print!("{}", format_table(&[outcome.row]));
    eprintln!("wrote {}", csv.display());
    Ok(())
}

fn cmd_table(a: TableArgs) -> Result<()> {
    let scenario = load_scenario_ref(&a.scenario)?;
    let cells = table_cells(&a.name, &scenario, a.reps, a.seed)?;
    let opts = RunOptions { parallel: a.parallel, timing: a.timing, ..RunOptions::default() };
    let mut rows = Vec::new();
    for cell in &cells {
        eprintln!("{} ({} reps)", cell.label, cell.reps);
        rows.push(run_cell(&scenario, cell, opts, None)?.row);
    }
    let out = a.out.unwrap_or_else(default_out_dir);
    let meta = SummaryMetadata::new(&a.scenario, &scenario, a.seed, a.reps);
    let (csv, _) = write_summary(&out, &a.name, &rows, &meta)?;
    print!("{}", format_table(&rows));
    eprintln!("wrote {}", csv.display());
    Ok(())
}

fn cmd_timing(a: TimingArgs) -> Result<()> {
    let scenario = load_scenario_ref(&a.scenario)?;
    let rows = timing(&scenario, parse_range(&a.stages)?, a.reps, a.seed)?;
    println!("{:>6} {:>14} {:>16}", "stages", "s_per_rep", "s_per_decision");
    for r in rows {
        println!("{:>6} {:>14.4} {:>16.6}", r.stages, r.sim_s_per_rep, r.decision_s_mean);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Table(a) => cmd_table(a),
        Command::Timing(a) => cmd_timing(a),
        Command::Show { scenario } => {
            load_scenario_ref(&scenario).map(|s| print!("{}", s.to_toml())).map_err(Into::into)
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
