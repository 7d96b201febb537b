//! Seeded replication batches and the canned sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::control::StrategySpec;
use crate::engine::{run_replication, ReplicationOutput};
use crate::metrics::{aggregate, ReplicationMetrics, SummaryRow};
use crate::scenario::{Scenario, StrategyKind, HE2019_ACTION_SETS, HE2019_CONTROL_SETS};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HOLDSIM_OUT";
pub const DEFAULT_OUT_DIR: &str = "holdsim-out";
pub const TABLES: &[&str] = &["table6", "table8", "table11"];
pub const TABLE_DEFAULT_REPS: usize = 50;

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// One row of an experiment: a strategy plus optional scenario overrides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub label: String,
    pub strategy: StrategySpec,
    pub action_set: Option<Vec<f64>>,
    pub control_stops: Option<Vec<usize>>,
    pub reps: usize,
    pub master_seed: u64,
}

impl Cell {
    pub fn new(strategy: StrategySpec, reps: usize, master_seed: u64) -> Cell {
        Cell { label: strategy.label(), strategy, action_set: None, control_stops: None, reps, master_seed }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.reps >= 1, "reps must be at least 1");
        if self.strategy.kind == StrategyKind::Nsla {
            ensure!(self.strategy.stages >= 1, "stages must be at least 1 (got {})", self.strategy.stages);
        }
        let g = self.strategy.gamma;
        ensure!(g > 0.0 && g <= 1.0, "gamma must lie in (0, 1] (got {g})");
        Ok(())
    }

    /// The base scenario with this cell's overrides applied.
    pub fn scenario(&self, base: &Scenario) -> Result<Scenario> {
        let mut s = base.clone();
        if let Some(stops) = &self.control_stops {
            s = s.with_control_stops(stops).with_context(|| format!("control stops of {}", self.label))?;
        }
        if let Some(set) = &self.action_set {
            s = s.with_action_set(set).with_context(|| format!("action set of {}", self.label))?;
        }
        Ok(s)
    }

    fn stages_column(&self) -> Option<usize> {
        (self.strategy.kind == StrategyKind::Nsla).then_some(self.strategy.stages)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads; 0 lets the pool decide.
    pub parallel: usize,
    pub trajectories: bool,
    pub decisions: bool,
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: Cell,
    pub row: SummaryRow,
    /// Per-replication metrics in replication order.
    pub reps: Vec<ReplicationMetrics>,
}

/// Runs every replication of `cell`, handing each output to `sink` before
/// it is dropped. Results come back in replication order whatever the
/// thread count.
pub fn run_cell_with<F>(
    base: &Scenario,
    cell: &Cell,
    parallel: usize,
    with_timing: bool,
    sink: F,
) -> Result<CellOutcome>
where
    F: Fn(u64, &ReplicationOutput) -> Result<()> + Sync,
{
    cell.validate()?;
    let scenario = cell.scenario(base)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallel).build().context("building the worker pool")?;
    let reps: Vec<ReplicationMetrics> = pool.install(|| {
        (0..cell.reps as u64)
            .into_par_iter()
            .map(|k| {
                let mut strategy = cell.strategy.build();
                let out =
                    run_replication(&scenario, strategy.as_mut(), cell.master_seed, k, scenario.observation_period_s)
                        .with_context(|| format!("{} replication {k}", cell.label))?;
                sink(k, &out)?;
                Ok(ReplicationMetrics::from_output(&out, scenario.bunching)?)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let row = aggregate(&cell.label, cell.stages_column(), &reps, with_timing);
    Ok(CellOutcome { cell: cell.clone(), row, reps })
}

/// Runs a cell, writing per-replication files under `dir` when asked.
pub fn run_cell(base: &Scenario, cell: &Cell, opts: RunOptions, dir: Option<&Path>) -> Result<CellOutcome> {
    if let Some(d) = dir {
        if opts.trajectories || opts.decisions {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
    }
    run_cell_with(base, cell, opts.parallel, opts.timing, |k, out| {
        let Some(d) = dir else { return Ok(()) };
        if opts.trajectories {
            let p = d.join(format!("trajectory_rep{k:03}.tsv"));
            fs::write(&p, out.log.trajectory_tsv()).with_context(|| format!("writing {}", p.display()))?;
        }
        if opts.decisions {
            let p = d.join(format!("decisions_rep{k:03}.tsv"));
            fs::write(&p, decision_log_tsv(out)).with_context(|| format!("writing {}", p.display()))?;
        }
        Ok(())
    })
}

/// One line per CTP: who was released where, the hold, and the headway spread.
pub fn decision_log_tsv(out: &ReplicationOutput) -> String {
    let mut s = String::from("time_s\tbus_id\tstop_id\tholding_s\tsigma_h_s\tmin_headway_s\tvalue\n");
    for c in &out.ctps {
        let value = c.record.as_ref().and_then(|r| r.value).map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.time_s,
            c.bus_id,
            c.stop_id,
            c.holding_s,
            c.snapshot.sigma,
            c.snapshot.min_headway(),
            value
        );
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryMetadata {
    pub scenario: String,
    pub master_seed: u64,
    pub reps: usize,
    pub observation_period_s: f64,
    pub passenger_sd: &'static str,
    pub bunching_threshold_frac: f64,
    pub bunching_window_ctps: usize,
}

impl SummaryMetadata {
    pub fn new(scenario_ref: &str, scenario: &Scenario, master_seed: u64, reps: usize) -> SummaryMetadata {
        SummaryMetadata {
            scenario: scenario_ref.to_string(),
            master_seed,
            reps,
            observation_period_s: scenario.observation_period_s,
            passenger_sd: "per replication, then averaged across replications",
            bunching_threshold_frac: scenario.bunching.threshold_frac,
            bunching_window_ctps: scenario.bunching.window_ctps,
        }
    }
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    metadata: &'a SummaryMetadata,
    rows: &'a [SummaryRow],
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_summary(
    dir: &Path,
    stem: &str,
    rows: &[SummaryRow],
    metadata: &SummaryMetadata,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&csv_path, summary_csv(rows)?).with_context(|| format!("writing {}", csv_path.display()))?;
    let mut json = serde_json::to_string_pretty(&SummaryDoc { metadata, rows })?;
    json.push('\n');
    fs::write(&json_path, json).with_context(|| format!("writing {}", json_path.display()))?;
    Ok((csv_path, json_path))
}

/// Cells of a canned sweep over the fixture.
pub fn table_cells(name: &str, base: &Scenario, reps: usize, master_seed: u64) -> Result<Vec<Cell>> {
    let nsla = |stages| StrategySpec { kind: StrategyKind::Nsla, stages, ..StrategySpec::from_scenario(base) };
    let cells = match name {
        "table6" => {
            let mut v = vec![
                StrategySpec { kind: StrategyKind::None, ..StrategySpec::from_scenario(base) },
                StrategySpec { kind: StrategyKind::Tshs, ..StrategySpec::from_scenario(base) },
            ];
            v.extend((1..=5).map(nsla));
            v.into_iter().map(|s| Cell::new(s, reps, master_seed)).collect()
        }
        "table8" => HE2019_ACTION_SETS
            .iter()
            .enumerate()
            .map(|(i, set)| Cell {
                label: format!("3SLA/set{}", i + 1),
                action_set: Some(set.to_vec()),
                ..Cell::new(nsla(3), reps, master_seed)
            })
            .collect(),
        "table11" => HE2019_CONTROL_SETS
            .iter()
            .map(|(name, stops)| Cell {
                label: format!("3SLA/{name}"),
                control_stops: Some(stops.to_vec()),
                ..Cell::new(nsla(3), reps, master_seed)
            })
            .collect(),
        other => bail!("unknown table `{other}` (expected one of {})", TABLES.join(", ")),
    };
    Ok(cells)
}

/// Fixed-width rendering of summary rows for the terminal.
pub fn format_table(rows: &[SummaryRow]) -> String {
    fn opt(x: Option<f64>) -> String {
        x.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
    }
    let mut s = format!(
        "{:<16} {:>8} {:>8} {:>8} {:>9} {:>7} {:>7} {:>6} {:>9} {:>8} {:>8} {:>8}\n",
        "strategy", "c_H", "sigma_c", "n_T", "a_sum", "a_mean", "a_sd", "bunch", "n_P", "W_mean", "R_mean", "Tr_mean"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<16} {:>8.2} {:>8} {:>8.1} {:>9.1} {:>7.2} {:>7.2} {:>6.2} {:>9.1} {:>8} {:>8} {:>8}",
            r.strategy,
            r.c_h,
            opt(r.sigma_c),
            r.n_t,
            r.a_sum,
            r.a_mean,
            r.a_sd,
            r.bunch_fraction,
            r.n_p,
            opt(r.w_mean),
            opt(r.r_mean),
            opt(r.tr_mean)
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingRow {
    pub stages: usize,
    pub sim_s_per_rep: f64,
    pub decision_s_mean: f64,
}

/// Wall-clock of `reps` sequential look-ahead replications for each depth.
pub fn timing(
    base: &Scenario,
    stages: impl IntoIterator<Item = usize>,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<TimingRow>> {
    ensure!(reps >= 1, "reps must be at least 1");
    let mut rows = Vec::new();
    for n in stages {
        let cell = Cell::new(
            StrategySpec { kind: StrategyKind::Nsla, stages: n, ..StrategySpec::from_scenario(base) },
            reps,
            master_seed,
        );
        cell.validate()?;
        let started = Instant::now();
        let outcome = run_cell_with(base, &cell, 1, true, |_, _| Ok(()))?;
        let total = started.elapsed().as_secs_f64();
        rows.push(TimingRow {
            stages: n,
            sim_s_per_rep: total / reps as f64,
            decision_s_mean: outcome.row.decision_s_mean.unwrap_or(0.0),
        });
    }
    Ok(rows)
}
