//! Deep deterministic policy gradient with prioritized replay.
//!
//! Four networks: the actor `mu(s)`, the critic `Q(s, a)` and a slowly
//! tracking target copy of each. The critic is trained on the
//! importance-weighted squared TD error, the actor by gradient ascent on the
//! critic's value of its own action, and targets follow by soft updates.
//!
//! The critic sees the encoded state with the normalised action `a / cap`
//! appended as the last input column.

mod replay;
mod sum_tree;
mod train;

pub use replay::{ReplayBuffer, SampleIndex, SampledBatch, DEFAULT_EPSILON};
pub use sum_tree::SumTree;
pub use train::{train, EpochLog, TrainConfig, Trainer, TrainingLog};

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::LinkParams;
use crate::error::{Error, Result};
use crate::mdp::{encode, ChannelFeature, EncodedState, Observation, Transition};
use crate::nn::{Direction, Gradients, Mlp, OutputActivation};
use crate::protocol::RatePolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub gamma: f64,
    pub tau: f64,
    /// Variance of the Gaussian exploration noise.
    pub noise_var: f64,
    pub rate_cap: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub hidden: Vec<usize>,
    pub feature: ChannelFeature,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            tau: 0.01,
            noise_var: 0.2,
            rate_cap: 10.0,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            hidden: vec![100, 50, 30],
            feature: ChannelFeature::Magnitude,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", "must lie in [0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("tau", "must lie in (0, 1]"));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::config("noise_var", "must be finite and >= 0"));
        }
        if !(self.rate_cap > 0.0 && self.rate_cap.is_finite()) {
            return Err(Error::config("rate_cap", "must be positive"));
        }
        if self.lr_actor.is_nan() || self.lr_actor <= 0.0 {
            return Err(Error::config("lr_actor", "must be positive"));
        }
        if self.lr_critic.is_nan() || self.lr_critic <= 0.0 {
            return Err(Error::config("lr_critic", "must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden", "layer widths must be positive"));
        }
        Ok(())
    }

    pub fn actor_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.feature.state_width()];
        v.extend(&self.hidden);
        v.push(1);
        v
    }

    pub fn critic_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.feature.state_width() + 1];
        v.extend(&self.hidden);
        v.push(1);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub params: AgentParams,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
}

/// Result of one critic step.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticStats {
    /// Weighted loss before the step.
    pub loss: f64,
    pub td_errors: Vec<f64>,
}

/// Mini-batch unpacked into matrices.
struct BatchArrays {
    states: Array2<f64>,
    actions: Array1<f64>,
    rewards: Array1<f64>,
    next_states: Array2<f64>,
    bootstrap: Array1<f64>,
}

fn states_matrix<'a>(states: impl ExactSizeIterator<Item = &'a EncodedState>, width: usize) -> Result<Array2<f64>> {
    let n = states.len();
    let mut m = Array2::zeros((n, width));
    for (mut row, s) in m.rows_mut().into_iter().zip(states) {
        if s.width() != width {
            return Err(Error::ShapeMismatch {
                expected: width,
                got: s.width(),
            });
        }
        row.iter_mut().zip(s.as_slice()).for_each(|(d, &v)| *d = v);
    }
    Ok(m)
}

impl Agent {
    /// Fresh networks; the targets start as exact copies.
    pub fn new<R: Rng + ?Sized>(params: AgentParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let actor = Mlp::new(&params.actor_sizes(), OutputActivation::SigmoidScaled(params.rate_cap), rng);
        let critic = Mlp::new(&params.critic_sizes(), OutputActivation::Identity, rng);
        Ok(Self::from_networks(params, actor, critic))
    }

    pub fn from_networks(params: AgentParams, actor: Mlp, critic: Mlp) -> Self {
        Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            params,
            actor,
            critic,
        }
    }

    pub fn state_width(&self) -> usize {
        self.params.feature.state_width()
    }

    /// Actor output, plus Gaussian exploration noise when `explore`, clamped
    /// to `[0, cap]`. Exploring always consumes one normal variate.
    pub fn act<R: Rng + ?Sized>(&self, s: &EncodedState, explore: bool, rng: &mut R) -> Result<f64> {
        if !explore {
            return self.greedy_action(s);
        }
        let z: f64 = rng.sample(StandardNormal);
        let a = self.actor.forward(s.as_slice())?[0] + self.params.noise_var.sqrt() * z;
        Ok(a.clamp(0.0, self.params.rate_cap))
    }

    pub fn greedy_action(&self, s: &EncodedState) -> Result<f64> {
        Ok(self.actor.forward(s.as_slice())?[0].clamp(0.0, self.params.rate_cap))
    }

    fn critic_input(&self, states: &Array2<f64>, actions: &Array1<f64>) -> Array2<f64> {
        let w = states.ncols();
        let mut x = Array2::zeros((states.nrows(), w + 1));
        x.slice_mut(s![.., ..w]).assign(states);
        x.column_mut(w).assign(&(actions / self.params.rate_cap));
        x
    }

    fn arrays(&self, transitions: &[Transition]) -> Result<BatchArrays> {
        let w = self.state_width();
        Ok(BatchArrays {
            states: states_matrix(transitions.iter().map(|t| &t.s), w)?,
            actions: transitions.iter().map(|t| t.a).collect(),
            rewards: transitions.iter().map(|t| t.r).collect(),
            next_states: states_matrix(transitions.iter().map(|t| &t.s_next), w)?,
            bootstrap: transitions
                .iter()
                .map(|t| if t.boundary { 0.0 } else { 1.0 })
                .collect(),
        })
    }

    /// `Q(s', mu'(s'))` under the target networks.
    fn target_values(&self, next_states: &Array2<f64>) -> Result<Array1<f64>> {
        let next_actions = self.target_actor.forward_batch(next_states.view())?.column(0).to_owned();
        let q = self
            .target_critic
            .forward_batch(self.critic_input(next_states, &next_actions).view())?;
        Ok(q.column(0).to_owned())
    }

    /// `delta = Q(s, a) - r - gamma * Q'(s', mu'(s'))`, without the
    /// bootstrap term at an epoch boundary.
    pub fn td_error(&self, tr: &Transition) -> Result<f64> {
        Ok(self.td_errors(std::slice::from_ref(tr))?[0])
    }

    pub fn td_errors(&self, transitions: &[Transition]) -> Result<Vec<f64>> {
        let b = self.arrays(transitions)?;
        let q = self
            .critic
            .forward_batch(self.critic_input(&b.states, &b.actions).view())?;
        let target = self.target_values(&b.next_states)?;
        Ok((0..transitions.len())
            .map(|i| q[[i, 0]] - b.rewards[i] - self.params.gamma * b.bootstrap[i] * target[i])
            .collect())
    }

    /// Weighted TD loss `(1 / 2B) sum w delta^2` and its gradient w.r.t. the
    /// critic parameters.
    pub fn critic_loss_gradient(&self, batch: &SampledBatch) -> Result<(CriticStats, Gradients)> {
        let n = batch.len();
        let b = self.arrays(&batch.transitions)?;
        let trace = self
            .critic
            .forward_trace(self.critic_input(&b.states, &b.actions).view())?;
        let target = self.target_values(&b.next_states)?;
        let q = trace.output();
        let mut td = Vec::with_capacity(n);
        let mut upstream = Array2::zeros((n, 1));
        let mut loss = 0.0;
        for i in 0..n {
            let delta = q[[i, 0]] - b.rewards[i] - self.params.gamma * b.bootstrap[i] * target[i];
            let w = batch.weights[i];
            loss += w * delta * delta;
            upstream[[i, 0]] = w * delta / n as f64;
            td.push(delta);
        }
        loss /= 2.0 * n as f64;
        let grads = self.critic.backward_trace(&trace, upstream.view())?;
        Ok((CriticStats { loss, td_errors: td }, grads))
    }

    pub fn critic_update(&mut self, batch: &SampledBatch) -> Result<CriticStats> {
        if batch.is_empty() {
            return Err(Error::Underfull { len: 0, needed: 1 });
        }
        let (stats, grads) = self.critic_loss_gradient(batch)?;
        self.critic.adam_step(&grads, self.params.lr_critic, Direction::Descend);
        Ok(stats)
    }

    /// `J = (1/B) sum Q(s, mu(s))` and its gradient w.r.t. the actor
    /// parameters, chained through the critic's action input.
    pub fn actor_objective_gradient(&self, states: ArrayView2<f64>) -> Result<(f64, Gradients)> {
        let n = states.nrows();
        let actor_trace = self.actor.forward_trace(states)?;
        let actions = actor_trace.output().column(0).to_owned();
        let states = states.to_owned();
        let critic_trace = self
            .critic
            .forward_trace(self.critic_input(&states, &actions).view())?;
        let j = critic_trace.output().column(0).sum() / n as f64;
        let upstream = Array2::from_elem((n, 1), 1.0 / n as f64);
        let dq_dx = self.critic.input_gradient(&critic_trace, upstream.view())?;
        let w = self.state_width();
        let dq_da = (dq_dx.column(w).to_owned() / self.params.rate_cap).insert_axis(ndarray::Axis(1));
        let grads = self.actor.backward_trace(&actor_trace, dq_da.view())?;
        Ok((j, grads))
    }

    pub fn actor_update(&mut self, batch: &SampledBatch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Underfull { len: 0, needed: 1 });
        }
        let states = states_matrix(batch.transitions.iter().map(|t| &t.s), self.state_width())?;
        let (j, grads) = self.actor_objective_gradient(states.view())?;
        self.actor.adam_step(&grads, self.params.lr_actor, Direction::Ascend);
        Ok(j)
    }

    pub fn soft_update(&mut self) {
        let tau = self.params.tau;
        self.target_critic.soft_update_from(&self.critic, tau);
        self.target_actor.soft_update_from(&self.actor, tau);
    }

    /// Noise-free policy for evaluation.
    pub fn greedy<'a>(&'a self, link: &'a LinkParams) -> GreedyPolicy<'a> {
        GreedyPolicy { agent: self, link }
    }
}

pub struct GreedyPolicy<'a> {
    agent: &'a Agent,
    link: &'a LinkParams,
}

impl RatePolicy for GreedyPolicy<'_> {
    fn rate(&mut self, obs: &Observation) -> f64 {
        let s = encode(obs, self.link, self.agent.params.feature);
        self.agent
            .greedy_action(&s)
            .expect("encoded width matches the actor")
    }
}
