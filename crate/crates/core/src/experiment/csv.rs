//! Results and training-log CSV files.
//!
//! Results: `snr_db,rho,k,scheme,seed,ltat,ltat_stderr,rates`, where `seed`
//! is the replica index within a point and `rates` is a `;`-joined rate
//! vector (empty for the learned policy and for capacity). Floats are
//! written with nine significant digits.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::ddpg::EpochLog;
use crate::error::{Error, Result};

pub const RESULTS_HEADER: &str = "snr_db,rho,k,scheme,seed,ltat,ltat_stderr,rates";
pub const TRAINING_LOG_HEADER: &str = "epoch,mean_reward,critic_loss,actor_objective,wall_time";

/// Nine significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    DrlXp,
    ScsiXp,
    HarqIr,
    Capacity,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::DrlXp, Scheme::ScsiXp, Scheme::HarqIr, Scheme::Capacity];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::DrlXp => "drl-xp",
            Scheme::ScsiXp => "scsi-xp",
            Scheme::HarqIr => "harq-ir",
            Scheme::Capacity => "capacity",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Csv(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub snr_db: f64,
    pub rho: f64,
    pub k: usize,
    pub scheme: Scheme,
    pub seed: usize,
    pub ltat: f64,
    pub ltat_stderr: f64,
    pub rates: Vec<f64>,
}

impl ResultRow {
    pub fn to_line(&self) -> String {
        let rates: Vec<String> = self.rates.iter().map(|&r| fmt_float(r)).collect();
        format!(
            "{},{},{},{},{},{},{},{}",
            fmt_float(self.snr_db),
            fmt_float(self.rho),
            self.k,
            self.scheme,
            self.seed,
            fmt_float(self.ltat),
            fmt_float(self.ltat_stderr),
            rates.join(";")
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Csv(format!("expected 8 columns, got {}: `{line}`", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|_| Error::Csv(format!("bad number `{}` in `{line}`", f[i])))
        };
        let int = |i: usize| -> Result<usize> {
            f[i].parse()
                .map_err(|_| Error::Csv(format!("bad integer `{}` in `{line}`", f[i])))
        };
        let rates = f[7]
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Csv(format!("bad rate `{s}`"))))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            snr_db: num(0)?,
            rho: num(1)?,
            k: int(2)?,
            scheme: f[3].parse()?,
            seed: int(4)?,
            ltat: num(5)?,
            ltat_stderr: num(6)?,
            rates,
        })
    }

    /// Canonical sort key: point, then seed, then scheme.
    pub fn sort_key(&self) -> (u64, u64, usize, usize, Scheme) {
        (
            ordered(self.snr_db),
            ordered(self.rho),
            self.k,
            self.seed,
            self.scheme,
        )
    }
}

/// Order-preserving bit pattern for finite floats.
pub(crate) fn ordered(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

pub(crate) fn unordered(b: u64) -> f64 {
    f64::from_bits(if b >> 63 == 1 { b & !(1 << 63) } else { !b })
}

pub fn results_to_string(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

pub fn parse_results(s: &str) -> Result<Vec<ResultRow>> {
    let mut lines = s.lines();
    match lines.next() {
        Some(h) if h == RESULTS_HEADER => {}
        Some(h) => return Err(Error::Csv(format!("unexpected header `{h}`"))),
        None => return Ok(Vec::new()),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(ResultRow::parse_line)
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results(&s)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    std::fs::write(path, results_to_string(rows)).map_err(|e| Error::io(path, e))
}

/// Append-only results file, flushed after every write.
pub struct ResultsWriter {
    file: File,
    path: std::path::PathBuf,
}

impl ResultsWriter {
    /// Opens `path` for appending, writing the header if the file is new or empty.
    pub fn append(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let empty = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
        if empty {
            writeln!(file, "{RESULTS_HEADER}").map_err(|e| Error::io(path, e))?;
        }
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn write_rows(&mut self, rows: &[ResultRow]) -> Result<()> {
        let mut s = String::new();
        for r in rows {
            s.push_str(&r.to_line());
            s.push('\n');
        }
        self.file
            .write_all(s.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Training log; `wall_time` is left empty unless `with_wall_time`.
pub fn training_log_to_string(epochs: &[EpochLog], with_wall_time: bool) -> String {
    let mut out = String::from(TRAINING_LOG_HEADER);
    out.push('\n');
    for e in epochs {
        let wall = if with_wall_time { fmt_float(e.wall_time) } else { String::new() };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch,
            fmt_float(e.mean_reward),
            fmt_float(e.critic_loss),
            fmt_float(e.actor_objective),
            wall
        ));
    }
    out
}
