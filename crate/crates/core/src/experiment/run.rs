//! The `train`, `eval`, `baseline`, `sweep` and `plot` commands.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::config::{ExperimentConfig, Point};
use super::csv::{self, ResultRow, ResultsWriter, Scheme};
use super::svg::{Chart, Series};
use crate::baselines::{ergodic_capacity, optimize_ir_rate_with, optimize_statistical_rates_with};
use crate::checkpoint;
use crate::ddpg::{Agent, Trainer, TrainingLog};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::protocol::{simulate_ltat_run, FixedRates, LtatRun, RatePolicy};
use crate::seed;
use crate::stats::{mean_stderr, Estimate};

pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const CONFIG_SNAPSHOT_FILE: &str = "config.toml";
pub const EVAL_FILE: &str = "eval.csv";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const PLOT_FILE: &str = "ltat.svg";

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary file so a crash never leaves a torn file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write(&tmp, contents)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub agent: Agent,
    pub log: TrainingLog,
    pub checkpoint: PathBuf,
    pub training_log: PathBuf,
    pub config_snapshot: PathBuf,
}

/// Trains one agent at the config's single point with the master seed.
///
/// The checkpoint and training log are rewritten after every epoch. With
/// `resume`, an existing checkpoint in the output directory is continued;
/// the configuration must match its snapshot.
pub fn cmd_train(cfg: &ExperimentConfig, resume: bool) -> Result<TrainSummary> {
    cfg.validate()?;
    let point = cfg.single_point()?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    let log_path = dir.join(TRAINING_LOG_FILE);
    let snap = dir.join(CONFIG_SNAPSHOT_FILE);
    let snapshot = cfg.to_toml()?;

    let mut trainer = Trainer::new(cfg.train_config()?, point.link(cfg.channel.rate_cap)?, point.fading()?, cfg.seed)?;
    if resume && ckpt.exists() {
        let previous = checkpoint::read_file(&snap)?;
        if ExperimentConfig::from_toml(&previous)? != *cfg {
            return Err(Error::config("config", "differs from the snapshot of the run being resumed"));
        }
        checkpoint::restore_trainer(&mut trainer, &checkpoint::read_file(&ckpt)?)?;
    }
    write(&snap, &snapshot)?;

    let with_wall = cfg.train.record_wall_time;
    let mut io_err = None;
    trainer.run(|t| {
        if io_err.is_some() {
            return;
        }
        let res = write_atomic(&ckpt, &checkpoint::trainer_to_string(t, with_wall))
            .and_then(|_| write_atomic(&log_path, &csv::training_log_to_string(&t.log.epochs, with_wall)));
        if let Err(e) = res {
            io_err = Some(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    // a resumed, already-finished run still leaves consistent files
    write_atomic(&ckpt, &checkpoint::trainer_to_string(&trainer, with_wall))?;
    write_atomic(&log_path, &csv::training_log_to_string(&trainer.log.epochs, with_wall))?;
    Ok(TrainSummary {
        agent: trainer.agent,
        log: trainer.log,
        checkpoint: ckpt,
        training_log: log_path,
        config_snapshot: snap,
    })
}

/// Greedy evaluation of `agent` over `eval_slots` slots.
pub fn evaluate_agent(agent: &Agent, cfg: &ExperimentConfig, point: Point, eval_seed: u64) -> Result<LtatRun> {
    let link = point.link(cfg.channel.rate_cap)?;
    if agent.params.rate_cap != link.rate_cap {
        return Err(Error::config("rate_cap", "differs from the checkpoint's rate cap"));
    }
    if agent.params.feature != cfg.channel.channel_feature {
        return Err(Error::ShapeMismatch {
            expected: cfg.channel.channel_feature.state_width(),
            got: agent.state_width(),
        });
    }
    evaluate(&mut agent.greedy(&link), cfg, point, eval_seed)
}

fn evaluate<P: RatePolicy + ?Sized>(policy: &mut P, cfg: &ExperimentConfig, point: Point, eval_seed: u64) -> Result<LtatRun> {
    let link = point.link(cfg.channel.rate_cap)?;
    let mut rng = seed::rng_from(eval_seed);
    Ok(simulate_ltat_run(policy, &link, point.fading()?, cfg.eval.eval_slots, &mut rng))
}

fn row(point: Point, scheme: Scheme, seed: usize, ltat: Estimate, rates: Vec<f64>) -> ResultRow {
    ResultRow {
        snr_db: point.snr_db,
        rho: point.rho,
        k: point.k,
        scheme,
        seed,
        ltat: ltat.mean,
        ltat_stderr: ltat.stderr,
        rates,
    }
}

/// Evaluates the checkpointed agent and writes a one-row results file.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint_path: &Path) -> Result<ResultRow> {
    cfg.validate()?;
    let point = cfg.single_point()?;
    let agent = checkpoint::agent_from_str(&checkpoint::read_file(checkpoint_path)?)?;
    if agent.params.hidden != cfg.train.hidden {
        return Err(Error::ShapeMismatch {
            expected: cfg.train.hidden.iter().sum(),
            got: agent.params.hidden.iter().sum(),
        });
    }
    let run = evaluate_agent(&agent, cfg, point, seed::derive(cfg.seed, seed::EVAL))?;
    let r = row(point, Scheme::DrlXp, 0, run.ltat, Vec::new());
    ensure_dir(&cfg.output_dir)?;
    csv::write_results(&cfg.output_dir.join(EVAL_FILE), std::slice::from_ref(&r))?;
    Ok(r)
}

/// Seed of replica `index` at `point`.
pub fn unit_seed(cfg: &ExperimentConfig, point: Point, index: usize) -> u64 {
    seed::derive_indexed(cfg.seed, &point.label(), index as u64)
}

/// Everything computed for one replica of one point.
#[derive(Debug, Clone)]
pub struct UnitResult {
    pub rows: Vec<ResultRow>,
    pub training_log: Option<TrainingLog>,
}

/// Runs `schemes` for replica `index` at `point`. All evaluations share the
/// same channel realisation; baselines are optimised on their own stream.
pub fn run_unit(cfg: &ExperimentConfig, point: Point, index: usize, schemes: &[Scheme]) -> Result<UnitResult> {
    let link = point.link(cfg.channel.rate_cap)?;
    let fading = point.fading()?;
    let master = unit_seed(cfg, point, index);
    let eval_seed = seed::derive(master, seed::EVAL);
    let baseline_seed = seed::derive(master, seed::BASELINE);
    let mut rows = Vec::new();
    let mut training_log = None;
    for &scheme in schemes {
        match scheme {
            Scheme::DrlXp => {
                let mut trainer = Trainer::new(cfg.train_config()?, link, fading, master)?;
                trainer.run(|_| {})?;
                let run = evaluate_agent(&trainer.agent, cfg, point, eval_seed)?;
                rows.push(row(point, scheme, index, run.ltat, Vec::new()));
                training_log = Some(trainer.log);
            }
            Scheme::ScsiXp | Scheme::HarqIr => {
                let opt = if scheme == Scheme::ScsiXp {
                    optimize_statistical_rates_with(Exec::Sequential, &link, fading, cfg.eval.n_mc, baseline_seed)
                } else {
                    optimize_ir_rate_with(Exec::Sequential, &link, fading, cfg.eval.n_mc, baseline_seed)
                };
                let rates = opt.rates.0;
                let run = evaluate(&mut FixedRates(rates.clone()), cfg, point, eval_seed)?;
                rows.push(row(point, scheme, index, run.ltat, rates));
            }
            Scheme::Capacity => {
                rows.push(row(point, scheme, index, Estimate::exact(ergodic_capacity(link.snr)), Vec::new()));
            }
        }
    }
    Ok(UnitResult { rows, training_log })
}

fn unit_key(r: &ResultRow) -> (u64, u64, usize, usize) {
    (r.snr_db.to_bits(), r.rho.to_bits(), r.k, r.seed)
}

/// Runs every (point, replica) unit not yet present in `path`, appending
/// each unit's rows as soon as it finishes, then rewrites the file in
/// canonical order.
fn run_grid(cfg: &ExperimentConfig, path: &Path, schemes: &[Scheme]) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    ensure_dir(&cfg.output_dir)?;
    let existing = if path.exists() { csv::read_results(path)? } else { Vec::new() };
    let done: BTreeSet<_> = existing
        .iter()
        .map(unit_key)
        .filter(|key| {
            let have: BTreeSet<Scheme> = existing
                .iter()
                .filter(|r| unit_key(r) == *key)
                .map(|r| r.scheme)
                .collect();
            schemes.iter().all(|s| have.contains(s))
        })
        .collect();
    // keep complete units only; partial ones are recomputed
    let mut rows: Vec<ResultRow> = existing
        .into_iter()
        .filter(|r| done.contains(&unit_key(r)))
        .collect();
    csv::write_results(path, &rows)?;

    let units: Vec<(Point, usize)> = cfg
        .points()
        .into_iter()
        .flat_map(|p| (0..cfg.eval.seeds).map(move |i| (p, i)))
        .filter(|(p, i)| {
            let probe = row(*p, Scheme::Capacity, *i, Estimate::exact(0.0), Vec::new());
            !done.contains(&unit_key(&probe))
        })
        .collect();

    let writer = Mutex::new(ResultsWriter::append(path)?);
    let results = par::map_slice_workers(cfg.eval.workers, &units, |&(p, i)| -> Result<Vec<ResultRow>> {
        let unit = run_unit(cfg, p, i, schemes)?;
        writer.lock().expect("writer lock").write_rows(&unit.rows)?;
        Ok(unit.rows)
    });
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by_key(|r| r.sort_key());
    csv::write_results(path, &rows)?;
    Ok(rows)
}

/// Statistical-CSI XP-HARQ, HARQ-IR and capacity at every configured point.
pub fn cmd_baseline(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let path = cfg.output_dir.join(BASELINE_FILE);
    run_grid(cfg, &path, &[Scheme::ScsiXp, Scheme::HarqIr, Scheme::Capacity])
}

/// All four schemes at every grid point, plus the LTAT plot.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let c = &cfg.channel;
    if !(c.snr_db.is_list() || c.rho.is_list() || c.k.is_list()) {
        return Err(Error::config("snr_db", "a sweep needs a list in snr_db, rho or k"));
    }
    let path = cfg.output_dir.join(RESULTS_FILE);
    let rows = run_grid(cfg, &path, &Scheme::ALL)?;
    write(&cfg.output_dir.join(PLOT_FILE), &chart(&rows).render())?;
    Ok(rows)
}

/// Renders `results` (a results CSV) to `out`.
pub fn cmd_plot(results: &Path, out: &Path) -> Result<()> {
    let rows = csv::read_results(results)?;
    if rows.is_empty() {
        return Err(Error::Csv(format!("{} has no rows", results.display())));
    }
    write(out, &chart(&rows).render())
}

/// Mean LTAT over replicas with the standard error across replicas.
pub fn replica_mean(rows: &[ResultRow], point: Point, scheme: Scheme) -> Estimate {
    let xs: Vec<f64> = rows
        .iter()
        .filter(|r| r.scheme == scheme && r.snr_db == point.snr_db && r.rho == point.rho && r.k == point.k)
        .map(|r| r.ltat)
        .collect();
    mean_stderr(&xs)
}

#[derive(Clone, Copy, PartialEq)]
enum XAxis {
    Snr,
    Rho,
    K,
}

/// One series per scheme and fixed combination of the other axes; x is
/// the swept axis with the most distinct values (SNR on ties).
pub fn chart(rows: &[ResultRow]) -> Chart {
    let distinct = |f: &dyn Fn(&ResultRow) -> u64| rows.iter().map(f).collect::<BTreeSet<_>>().len();
    let n_snr = distinct(&|r| r.snr_db.to_bits());
    let n_rho = distinct(&|r| r.rho.to_bits());
    let n_k = distinct(&|r| r.k as u64);
    let axis = if n_snr >= n_rho && n_snr >= n_k {
        XAxis::Snr
    } else if n_rho >= n_k {
        XAxis::Rho
    } else {
        XAxis::K
    };
    let x_of = |r: &ResultRow| match axis {
        XAxis::Snr => r.snr_db,
        XAxis::Rho => r.rho,
        XAxis::K => r.k as f64,
    };
    let mut groups: BTreeMap<(Scheme, String), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.scheme, series_name(r, axis, n_snr, n_rho, n_k)))
            .or_default()
            .entry(csv::ordered(x_of(r)))
            .or_default()
            .push(r.ltat);
    }
    let series = groups
        .into_iter()
        .map(|((_, name), by_x)| Series {
            name,
            points: by_x
                .into_iter()
                .map(|(xb, ys)| (csv::unordered(xb), ys.iter().sum::<f64>() / ys.len() as f64))
                .collect(),
        })
        .collect();
    let x_label = match axis {
        XAxis::Snr => "average SNR (dB)",
        XAxis::Rho => "time correlation rho",
        XAxis::K => "maximum rounds K",
    };
    Chart {
        title: "Long-term average throughput".into(),
        x_label: x_label.into(),
        y_label: "LTAT (bps/Hz)".into(),
        series,
    }
}

fn series_name(r: &ResultRow, axis: XAxis, n_snr: usize, n_rho: usize, n_k: usize) -> String {
    let mut name = r.scheme.to_string();
    if axis != XAxis::K && n_k > 1 {
        name.push_str(&format!(" K={}", r.k));
    }
    if axis != XAxis::Rho && n_rho > 1 {
        name.push_str(&format!(" rho={}", r.rho));
    }
    if axis != XAxis::Snr && n_snr > 1 {
        name.push_str(&format!(" snr={}dB", r.snr_db));
    }
    name
}
