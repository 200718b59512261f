//! The slot-level decision process seen by the rate-selection agent.
//!
//! At every slot the transmitter observes the accumulated rate and mutual
//! information of the running cycle (zeros at a cycle start) and the channel
//! of the previous slot, picks the rate of new bits for this round, and is
//! rewarded with the delivered accumulated rate when the cycle decodes.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelState, FadingParams, LinkParams};
use crate::error::{Error, Result};
use crate::protocol::{CycleState, RoundOutcome, RoundStatus};

/// What the transmitter knows before choosing the next rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Rounds already sent in the running cycle. Not fed to the networks.
    pub round: usize,
    pub acc_rate: f64,
    pub acc_mi: f64,
    /// Channel of the previous slot (outdated CSI).
    pub h_prev: Complex64,
}

impl Observation {
    pub fn h_prev_mag(&self) -> f64 {
        self.h_prev.norm()
    }

    pub fn is_cycle_start(&self) -> bool {
        self.round == 0
    }
}

pub fn observe(cycle: &CycleState, h_prev: ChannelState) -> Observation {
    if cycle.round == 0 {
        Observation {
            round: 0,
            acc_rate: 0.0,
            acc_mi: 0.0,
            h_prev: h_prev.h,
        }
    } else {
        Observation {
            round: cycle.round,
            acc_rate: cycle.acc_rate,
            acc_mi: cycle.acc_mi,
            h_prev: h_prev.h,
        }
    }
}

/// How the outdated channel enters the network input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelFeature {
    /// `|h_{t-1}|` clipped to `[0, 4]`.
    #[default]
    Magnitude,
    /// Real and imaginary parts, each clipped to `[-4, 4]`.
    Complex,
}

impl ChannelFeature {
    pub fn state_width(self) -> usize {
        match self {
            ChannelFeature::Magnitude => 3,
            ChannelFeature::Complex => 4,
        }
    }
}

pub const MAX_STATE_WIDTH: usize = 4;
const MI_CLIP: f64 = 2.0;
const H_CLIP: f64 = 4.0;

/// Normalised network input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodedState {
    x: [f64; MAX_STATE_WIDTH],
    width: usize,
}

impl EncodedState {
    pub fn from_slice(values: &[f64]) -> Self {
        assert!(values.len() <= MAX_STATE_WIDTH);
        let mut x = [0.0; MAX_STATE_WIDTH];
        x[..values.len()].copy_from_slice(values);
        Self {
            x,
            width: values.len(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x[..self.width]
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

pub fn encode(obs: &Observation, link: &LinkParams, feature: ChannelFeature) -> EncodedState {
    let scale = link.max_rounds as f64 * link.rate_cap;
    let rate = (obs.acc_rate / scale).clamp(0.0, 1.0);
    let mi = (obs.acc_mi / scale).clamp(0.0, MI_CLIP);
    match feature {
        ChannelFeature::Magnitude => {
            EncodedState::from_slice(&[rate, mi, obs.h_prev_mag().min(H_CLIP)])
        }
        ChannelFeature::Complex => EncodedState::from_slice(&[
            rate,
            mi,
            obs.h_prev.re.clamp(-H_CLIP, H_CLIP),
            obs.h_prev.im.clamp(-H_CLIP, H_CLIP),
        ]),
    }
}

/// One experience tuple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: EncodedState,
    pub a: f64,
    pub r: f64,
    pub s_next: EncodedState,
    /// End of an epoch: no bootstrapping past this transition.
    pub boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub outcome: RoundOutcome,
}

/// XP-HARQ link as a sequential environment. Owns its channel stream.
#[derive(Debug, Clone)]
pub struct Env<R> {
    link: LinkParams,
    fading: FadingParams,
    cycle: CycleState,
    h_prev: ChannelState,
    rng: R,
}

impl<R: Rng> Env<R> {
    /// Fresh stationary channel draw and an empty cycle.
    pub fn new(link: LinkParams, fading: FadingParams, mut rng: R) -> Self {
        let h_prev = channel::init_state(&mut rng);
        Self {
            link,
            fading,
            cycle: CycleState::new(),
            h_prev,
            rng,
        }
    }

    pub fn reset(&mut self) -> Observation {
        self.h_prev = channel::init_state(&mut self.rng);
        self.cycle.reset();
        self.observation()
    }

    pub fn observation(&self) -> Observation {
        observe(&self.cycle, self.h_prev)
    }

    pub fn link(&self) -> &LinkParams {
        &self.link
    }

    pub fn rng(&self) -> &R {
        &self.rng
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }

    pub fn cycle(&self) -> &CycleState {
        &self.cycle
    }

    pub fn h_prev(&self) -> ChannelState {
        self.h_prev
    }

    /// Restores a saved position (checkpoint resume).
    pub fn restore(&mut self, cycle: CycleState, h_prev: ChannelState) {
        self.cycle = cycle;
        self.h_prev = h_prev;
    }

    /// Advances one slot with `action` new bits per channel use.
    pub fn step(&mut self, action: f64) -> Result<StepResult> {
        if !(0.0..=self.link.rate_cap).contains(&action) {
            return Err(Error::ActionOutOfRange {
                action,
                cap: self.link.rate_cap,
            });
        }
        let h = channel::step(self.h_prev, self.fading, &mut self.rng);
        let mi = channel::mutual_info(h, &self.link);
        let outcome = self.cycle.xp_round(action, mi, self.link.max_rounds)?;
        if outcome.cycle_ended {
            self.cycle.reset();
        }
        self.h_prev = h;
        debug_assert!(outcome.reward == 0.0 || outcome.status == RoundStatus::Success);
        Ok(StepResult {
            obs: self.observation(),
            reward: outcome.reward,
            outcome,
        })
    }
}

/// Functional alias for [`Env::step`].
pub fn env_step<R: Rng>(env: &mut Env<R>, action: f64) -> Result<(Observation, f64)> {
    env.step(action).map(|s| (s.obs, s.reward))
}
