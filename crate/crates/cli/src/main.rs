//! `xpharq` command-line entry point.
//!
//! Every configuration key can be given as `--key value`; precedence is
//! flag over `XPHARQ_OUTPUT_DIR` (output directory only) over the
//! `--config` file over built-in defaults. Failures print a single
//! `error kind=<kind> msg="<message>"` line on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use xpharq::experiment::{self, csv::fmt_float, ExperimentConfig};
use xpharq::Error;

const OUTPUT_DIR_ENV: &str = "XPHARQ_OUTPUT_DIR";

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    msg: String,
    code: u8,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig { .. } | Error::ConfigParse(_) => 2,
            _ => 1,
        };
        CliError {
            kind: e.kind(),
            msg: e.to_string(),
            code,
        }
    }
}

fn config_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .help("TOML experiment configuration"),
    );
    ExperimentConfig::KEYS.iter().fold(cmd, |cmd, key| {
        let arg = Arg::new(*key).long(*key).value_name("VALUE").help_heading("Config overrides");
        let arg = if *key == "k" { arg.alias("K") } else { arg };
        cmd.arg(arg)
    })
}

fn cli() -> Command {
    Command::new("xpharq")
        .about("DRL rate selection for cross-packet HARQ: training, evaluation, baselines and sweeps")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .subcommand(
            config_args(Command::new("train").about("Train one agent; writes checkpoint, training log and config snapshot")).arg(
                Arg::new("resume")
                    .long("resume")
                    .action(ArgAction::SetTrue)
                    .help("Continue from the checkpoint in the output directory"),
            ),
        )
        .subcommand(
            config_args(Command::new("eval").about("Evaluate a checkpoint's deterministic policy")).arg(
                Arg::new("checkpoint")
                    .long("checkpoint")
                    .value_name("FILE")
                    .required(true),
            ),
        )
        .subcommand(config_args(
            Command::new("baseline").about("Optimise and evaluate statistical-CSI XP-HARQ, HARQ-IR and capacity"),
        ))
        .subcommand(config_args(
            Command::new("sweep").about("Train and evaluate every scheme over the snr_db / rho / k grid"),
        ))
        .subcommand(
            Command::new("plot")
                .about("Render a results CSV as an SVG line chart")
                .arg(Arg::new("results").long("results").value_name("FILE").required(true))
                .arg(Arg::new("out").long("out").value_name("FILE")),
        )
}

fn load_config(m: &ArgMatches) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => ExperimentConfig::load(Path::new(path))?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
        cfg.output_dir = PathBuf::from(dir);
    }
    for key in ExperimentConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(m: &ArgMatches) -> Result<(), CliError> {
    match m.subcommand() {
        Some(("train", m)) => {
            let cfg = load_config(m)?;
            let s = experiment::cmd_train(&cfg, m.get_flag("resume"))?;
            let last = s.log.epochs.last().expect("at least one epoch");
            println!(
                "train epochs={} mean_reward={} checkpoint={} log={} config={}",
                last.epoch,
                fmt_float(last.mean_reward),
                s.checkpoint.display(),
                s.training_log.display(),
                s.config_snapshot.display()
            );
        }
        Some(("eval", m)) => {
            let cfg = load_config(m)?;
            let ckpt = m.get_one::<String>("checkpoint").expect("required");
            let r = experiment::cmd_eval(&cfg, Path::new(ckpt))?;
            println!("eval ltat={} ltat_stderr={}", fmt_float(r.ltat), fmt_float(r.ltat_stderr));
        }
        Some(("baseline", m)) => {
            let cfg = load_config(m)?;
            for r in experiment::cmd_baseline(&cfg)? {
                println!("{}", r.to_line());
            }
        }
        Some(("sweep", m)) => {
            let cfg = load_config(m)?;
            let rows = experiment::cmd_sweep(&cfg)?;
            println!(
                "sweep rows={} results={} plot={}",
                rows.len(),
                cfg.output_dir.join(experiment::run::RESULTS_FILE).display(),
                cfg.output_dir.join(experiment::run::PLOT_FILE).display()
            );
        }
        Some(("plot", m)) => {
            let results = PathBuf::from(m.get_one::<String>("results").expect("required"));
            let out = match m.get_one::<String>("out") {
                Some(o) => PathBuf::from(o),
                None => results.with_file_name(experiment::run::PLOT_FILE),
            };
            experiment::cmd_plot(&results, &out)?;
            println!("plot out={}", out.display());
        }
        _ => unreachable!("subcommand required"),
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").replace('"', "'")
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage msg=\"{}\"", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} msg=\"{}\"", e.kind, one_line(&e.msg));
            ExitCode::from(e.code)
        }
    }
}
