//! Experiment configuration file.
//!
//! TOML with three sections; unknown keys are rejected. Every key is unique
//! across sections so it can also be set as a flat `key = value` override.
//!
//! ```toml
//! seed = 1
//! output_dir = "results"
//!
//! [channel]
//! snr_db = [15, 25, 35]   # scalar or list
//! rho = 0.4               # scalar or list
//! k = 5                   # scalar or list
//! rate_cap = 10.0
//! channel_feature = "magnitude"
//!
//! [train]
//! epochs = 100
//! slots_per_epoch = 6000
//! buffer_capacity = 20000
//! batch_size = 512
//! gamma = 0.9
//! tau = 0.01
//! beta = 0.5
//! noise_var = 0.2
//! lr_actor = 0.001
//! lr_critic = 0.001
//! epsilon_p = 0.0001
//! hidden = [100, 50, 30]
//! record_wall_time = false
//!
//! [eval]
//! eval_slots = 1000000
//! n_mc = 100000
//! seeds = 3
//! workers = 1
//! ```

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::DEFAULT_MC_CYCLES;
use crate::channel::{FadingParams, LinkParams};
use crate::ddpg::{AgentParams, TrainConfig};
use crate::error::{Error, Result};
use crate::mdp::ChannelFeature;

/// One value or a list of values to sweep over.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis<T>(pub Vec<T>);

impl<T> Axis<T> {
    pub fn one(x: T) -> Self {
        Self(vec![x])
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn is_list(&self) -> bool {
        self.0.len() > 1
    }

    /// The value when the axis is not swept.
    pub fn single(&self, field: &str) -> Result<&T> {
        match self.0.as_slice() {
            [x] => Ok(x),
            _ => Err(Error::config(field, "expected a single value here")),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Serialize + Clone> Serialize for Axis<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0.as_slice() {
            [x] => OneOrMany::One(x.clone()).serialize(s),
            xs => OneOrMany::Many(xs.to_vec()).serialize(s),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Axis<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match OneOrMany::deserialize(d)? {
            OneOrMany::One(x) => Axis(vec![x]),
            OneOrMany::Many(xs) => Axis(xs),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub snr_db: Axis<f64>,
    pub rho: Axis<f64>,
    #[serde(alias = "K")]
    pub k: Axis<usize>,
    pub rate_cap: f64,
    pub channel_feature: ChannelFeature,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            snr_db: Axis::one(35.0),
            rho: Axis::one(0.4),
            k: Axis::one(5),
            rate_cap: 10.0,
            channel_feature: ChannelFeature::Magnitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub slots_per_epoch: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub beta: f64,
    pub noise_var: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub epsilon_p: f64,
    pub hidden: Vec<usize>,
    /// Fill the `wall_time` column of the training log. Off by default so
    /// the log is byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            slots_per_epoch: t.slots_per_epoch,
            buffer_capacity: t.buffer_capacity,
            batch_size: t.batch_size,
            gamma: t.agent.gamma,
            tau: t.agent.tau,
            beta: t.beta,
            noise_var: t.agent.noise_var,
            lr_actor: t.agent.lr_actor,
            lr_critic: t.agent.lr_critic,
            epsilon_p: t.epsilon_p,
            hidden: t.agent.hidden,
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Slots per greedy / fixed-rate evaluation.
    pub eval_slots: usize,
    /// Monte Carlo cycles behind each baseline optimisation.
    pub n_mc: usize,
    /// Independent seeds per sweep point.
    pub seeds: usize,
    /// Sweep points processed concurrently.
    pub workers: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            eval_slots: 1_000_000,
            n_mc: DEFAULT_MC_CYCLES,
            seeds: 3,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub channel: ChannelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("results"),
            channel: ChannelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// One (snr, rho, K) combination of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub snr_db: f64,
    pub rho: f64,
    pub k: usize,
}

impl Point {
    pub fn link(&self, rate_cap: f64) -> Result<LinkParams> {
        LinkParams::from_db(self.snr_db, self.k, rate_cap)
    }

    pub fn fading(&self) -> Result<FadingParams> {
        FadingParams::new(self.rho)
    }

    /// Seed label; stable under reordering of the sweep lists.
    pub fn label(&self) -> String {
        format!("point/{}/{}/{}", self.snr_db, self.rho, self.k)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl ExperimentConfig {
    /// Every key accepted by [`ExperimentConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "output_dir",
        "snr_db",
        "rho",
        "k",
        "rate_cap",
        "channel_feature",
        "epochs",
        "slots_per_epoch",
        "buffer_capacity",
        "batch_size",
        "gamma",
        "tau",
        "beta",
        "noise_var",
        "lr_actor",
        "lr_critic",
        "epsilon_p",
        "hidden",
        "record_wall_time",
        "eval_slots",
        "n_mc",
        "seeds",
        "workers",
    ];

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::ConfigParse(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Overrides one field from its textual form. Lists are comma separated.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let k = key.as_str();
        let (c, t, e) = (&mut self.channel, &mut self.train, &mut self.eval);
        match k {
            "seed" => self.seed = parse(k, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "snr_db" => c.snr_db = Axis(parse_list(k, value)?),
            "rho" => c.rho = Axis(parse_list(k, value)?),
            "k" | "K" => c.k = Axis(parse_list(k, value)?),
            "rate_cap" => c.rate_cap = parse(k, value)?,
            "channel_feature" => {
                c.channel_feature = match value.trim() {
                    "magnitude" => ChannelFeature::Magnitude,
                    "complex" => ChannelFeature::Complex,
                    other => return Err(Error::config(k, format!("unknown feature `{other}`"))),
                }
            }
            "epochs" => t.epochs = parse(k, value)?,
            "slots_per_epoch" => t.slots_per_epoch = parse(k, value)?,
            "buffer_capacity" => t.buffer_capacity = parse(k, value)?,
            "batch_size" => t.batch_size = parse(k, value)?,
            "gamma" => t.gamma = parse(k, value)?,
            "tau" => t.tau = parse(k, value)?,
            "beta" => t.beta = parse(k, value)?,
            "noise_var" => t.noise_var = parse(k, value)?,
            "lr_actor" => t.lr_actor = parse(k, value)?,
            "lr_critic" => t.lr_critic = parse(k, value)?,
            "epsilon_p" => t.epsilon_p = parse(k, value)?,
            "hidden" => t.hidden = parse_list(k, value)?,
            "record_wall_time" => t.record_wall_time = parse(k, value)?,
            "eval_slots" => e.eval_slots = parse(k, value)?,
            "n_mc" => e.n_mc = parse(k, value)?,
            "seeds" => e.seeds = parse(k, value)?,
            "workers" => e.workers = parse(k, value)?,
            _ => return Err(Error::config(k, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.channel;
        if c.snr_db.0.is_empty() || c.snr_db.0.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("snr_db", "needs at least one finite value"));
        }
        if c.rho.0.is_empty() || c.rho.0.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config("rho", "values must lie in [0, 1]"));
        }
        if c.k.0.is_empty() || c.k.0.contains(&0) {
            return Err(Error::config("k", "values must be at least 1"));
        }
        if !(c.rate_cap > 0.0 && c.rate_cap.is_finite()) {
            return Err(Error::config("rate_cap", "must be positive"));
        }
        if (self.seed as i64) < 0 {
            return Err(Error::config("seed", "must fit in a signed 64-bit integer"));
        }
        let e = &self.eval;
        if e.eval_slots == 0 {
            return Err(Error::config("eval_slots", "must be at least 1"));
        }
        if e.n_mc == 0 {
            return Err(Error::config("n_mc", "must be at least 1"));
        }
        if e.seeds == 0 {
            return Err(Error::config("seeds", "must be at least 1"));
        }
        if e.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        self.train_config()?.validate()
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        Ok(TrainConfig {
            epochs: t.epochs,
            slots_per_epoch: t.slots_per_epoch,
            buffer_capacity: t.buffer_capacity,
            batch_size: t.batch_size,
            beta: t.beta,
            epsilon_p: t.epsilon_p,
            agent: AgentParams {
                gamma: t.gamma,
                tau: t.tau,
                noise_var: t.noise_var,
                rate_cap: self.channel.rate_cap,
                lr_actor: t.lr_actor,
                lr_critic: t.lr_critic,
                hidden: t.hidden.clone(),
                feature: self.channel.channel_feature,
            },
        })
    }

    /// Grid points in snr-major, then rho, then K order.
    pub fn points(&self) -> Vec<Point> {
        let c = &self.channel;
        let mut out = Vec::new();
        for &snr_db in c.snr_db.values() {
            for &rho in c.rho.values() {
                for &k in c.k.values() {
                    out.push(Point { snr_db, rho, k });
                }
            }
        }
        out
    }

    /// The single point of a non-sweep config.
    pub fn single_point(&self) -> Result<Point> {
        let c = &self.channel;
        Ok(Point {
            snr_db: *c.snr_db.single("snr_db")?,
            rho: *c.rho.single("rho")?,
            k: *c.k.single("k")?,
        })
    }
}
