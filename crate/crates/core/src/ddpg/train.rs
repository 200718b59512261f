use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::replay::{ReplayBuffer, DEFAULT_EPSILON};
use super::{Agent, AgentParams};
use crate::channel::{FadingParams, LinkParams};
use crate::error::{Error, Result};
use crate::mdp::{encode, Env, Transition};
use crate::seed::{self, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub slots_per_epoch: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub beta: f64,
    pub epsilon_p: f64,
    pub agent: AgentParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            slots_per_epoch: 6000,
            buffer_capacity: 20_000,
            batch_size: 512,
            beta: 0.5,
            epsilon_p: DEFAULT_EPSILON,
            agent: AgentParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.slots_per_epoch == 0 {
            return Err(Error::config("slots_per_epoch", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(Error::config("buffer_capacity", "must be at least batch_size"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config("beta", "must lie in [0, 1]"));
        }
        if !(self.epsilon_p > 0.0 && self.epsilon_p.is_finite()) {
            return Err(Error::config("epsilon_p", "must be positive"));
        }
        self.agent.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub mean_reward: f64,
    /// Mean over the epoch's critic updates; NaN before warm-up ends.
    pub critic_loss: f64,
    pub actor_objective: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn mean_reward_window(&self, range: std::ops::Range<usize>) -> f64 {
        let xs = &self.epochs[range];
        xs.iter().map(|e| e.mean_reward).sum::<f64>() / xs.len() as f64
    }
}

/// Full training state; everything needed to continue a run bit-exactly.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub link: LinkParams,
    pub fading: FadingParams,
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub env: Env<SimRng>,
    pub explore_rng: SimRng,
    pub replay_rng: SimRng,
    pub log: TrainingLog,
}

impl Trainer {
    pub fn new(config: TrainConfig, link: LinkParams, fading: FadingParams, master_seed: u64) -> Result<Self> {
        config.validate()?;
        if (config.agent.rate_cap - link.rate_cap).abs() > 0.0 {
            return Err(Error::config("rate_cap", "agent and link rate caps differ"));
        }
        let agent = Agent::new(config.agent.clone(), &mut seed::rng(master_seed, seed::INIT))?;
        let buffer = ReplayBuffer::new(config.buffer_capacity, config.epsilon_p, config.beta);
        let env = Env::new(link, fading, seed::rng(master_seed, seed::CHANNEL));
        Ok(Self {
            config,
            link,
            fading,
            agent,
            buffer,
            env,
            explore_rng: seed::rng(master_seed, seed::EXPLORATION),
            replay_rng: seed::rng(master_seed, seed::REPLAY),
            log: TrainingLog::default(),
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.log.epochs.len()
    }

    pub fn is_finished(&self) -> bool {
        self.epochs_done() >= self.config.epochs
    }

    /// One epoch: reset the link, then act / step / store / learn every slot.
    pub fn run_epoch(&mut self) -> Result<&EpochLog> {
        let start = Instant::now();
        let feature = self.config.agent.feature;
        let batch_size = self.config.batch_size;
        let slots = self.config.slots_per_epoch;

        let mut obs = self.env.reset();
        let mut reward_sum = 0.0;
        let (mut loss_sum, mut j_sum, mut updates) = (0.0, 0.0, 0usize);
        for t in 0..slots {
            let s = encode(&obs, &self.link, feature);
            let a = self.agent.act(&s, true, &mut self.explore_rng)?;
            let step = self.env.step(a)?;
            reward_sum += step.reward;
            self.buffer.push(Transition {
                s,
                a,
                r: step.reward,
                s_next: encode(&step.obs, &self.link, feature),
                boundary: t + 1 == slots,
            });
            obs = step.obs;

            if self.buffer.len() >= batch_size {
                let batch = self.buffer.sample(batch_size, &mut self.replay_rng)?;
                let critic = self.agent.critic_update(&batch)?;
                let j = self.agent.actor_update(&batch)?;
                self.buffer.update_priorities(&batch.indices, &critic.td_errors);
                self.agent.soft_update();
                loss_sum += critic.loss;
                j_sum += j;
                updates += 1;
            }
        }
        let per_update = |x: f64| if updates == 0 { f64::NAN } else { x / updates as f64 };
        self.log.epochs.push(EpochLog {
            epoch: self.epochs_done() + 1,
            mean_reward: reward_sum / slots as f64,
            critic_loss: per_update(loss_sum),
            actor_objective: per_update(j_sum),
            wall_time: start.elapsed().as_secs_f64(),
        });
        Ok(self.log.epochs.last().unwrap())
    }

    /// Runs the remaining epochs, calling `on_epoch` after each.
    pub fn run<F: FnMut(&Trainer)>(&mut self, mut on_epoch: F) -> Result<()> {
        while !self.is_finished() {
            self.run_epoch()?;
            on_epoch(self);
        }
        Ok(())
    }
}

/// Trains from scratch and returns the agent with its per-epoch log.
pub fn train(config: &TrainConfig, link: LinkParams, fading: FadingParams, master_seed: u64) -> Result<(Agent, TrainingLog)> {
    let mut trainer = Trainer::new(config.clone(), link, fading, master_seed)?;
    trainer.run(|_| {})?;
    Ok((trainer.agent, trainer.log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            slots_per_epoch: 300,
            buffer_capacity: 500,
            batch_size: 32,
            agent: AgentParams {
                hidden: vec![8, 8],
                ..AgentParams::default()
            },
            ..TrainConfig::default()
        }
    }

    fn link() -> LinkParams {
        LinkParams::from_db(10.0, 3, 10.0).unwrap()
    }

    #[test]
    fn same_seed_same_log() {
        let fad = FadingParams::new(0.4).unwrap();
        let strip = |mut l: TrainingLog| {
            l.epochs.iter_mut().for_each(|e| e.wall_time = 0.0);
            l
        };
        let (a1, l1) = train(&tiny(), link(), fad, 5).unwrap();
        let (a2, l2) = train(&tiny(), link(), fad, 5).unwrap();
        assert_eq!(strip(l1), strip(l2));
        assert_eq!(a1, a2);
    }

    #[test]
    fn stored_actions_within_cap() {
        let mut t = Trainer::new(tiny(), link(), FadingParams::new(0.4).unwrap(), 1).unwrap();
        t.run_epoch().unwrap();
        assert!(t.buffer.entries().iter().all(|e| (0.0..=10.0).contains(&e.a)));
        // boundary only on the last slot of the epoch
        let boundaries = t.buffer.entries().iter().filter(|e| e.boundary).count();
        assert_eq!(boundaries, 1);
    }

    #[test]
    fn config_validation() {
        let mut c = tiny();
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.buffer_capacity = 4;
        assert!(c.validate().is_err());
    }
}
