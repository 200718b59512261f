//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng;
use xpharq::ddpg::{Agent, AgentParams, SampledBatch};
use xpharq::mdp::{EncodedState, Transition};
use xpharq::nn::Mlp;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x)` by its power series (accurate for `x <= 5`).
pub fn e1(x: f64) -> f64 {
    assert!(x > 0.0 && x <= 5.0);
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        term *= -x / k as f64;
        sum += term / k as f64;
    }
    -EULER_GAMMA - x.ln() - sum
}

/// Ergodic capacity of Rayleigh fading: `log2(e) e^{1/snr} E1(1/snr)`.
pub fn capacity_oracle(snr: f64) -> f64 {
    std::f64::consts::LOG2_E * (1.0 / snr).exp() * e1(1.0 / snr)
}

/// One-shot outage `Pr[log2(1 + snr X) < R]` with `X ~ Exp(1)`.
pub fn rayleigh_outage(rate: f64, snr: f64) -> f64 {
    1.0 - (-(rate.exp2() - 1.0) / snr).exp()
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// 0.1% critical value of the one-sample KS statistic.
pub fn ks_critical(n: usize) -> f64 {
    1.95 / (n as f64).sqrt()
}

pub const FD_STEP: f64 = 1e-5;
/// Absolute slack for partials that are zero up to rounding.
pub const FD_FLOOR: f64 = 1e-8;

/// Largest relative discrepancy between `grad` and central differences of
/// `f` at `theta`. Each partial's error is scaled by `max(|g|, |fd|)`,
/// floored at `FD_FLOOR / 1e-4` so rounding noise on vanishing partials
/// does not dominate.
pub fn fd_max_rel_error(f: impl Fn(&[f64]) -> f64, theta: &[f64], grad: &[f64]) -> f64 {
    assert_eq!(theta.len(), grad.len());
    let mut x = theta.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let up = f(&x);
        x[i] = orig - FD_STEP;
        let down = f(&x);
        x[i] = orig;
        let fd = (up - down) / (2.0 * FD_STEP);
        let scale = grad[i].abs().max(fd.abs()).max(FD_FLOOR / 1e-4);
        worst = worst.max((grad[i] - fd).abs() / scale);
    }
    worst
}

/// Redraws every parameter uniformly in `[-1, 1]`, so no ReLU input sits
/// exactly on the kink (zero biases can make a pre-activation exactly 0).
pub fn randomize<R: Rng>(net: &mut Mlp, rng: &mut R) {
    let p: Vec<f64> = (0..net.param_count()).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    net.set_params_flat(&p).unwrap();
}

/// Random layer widths for a tiny net: input, 1-2 hidden layers, one output.
pub fn tiny_sizes<R: Rng>(rng: &mut R, input: usize) -> Vec<usize> {
    let mut s = vec![input];
    for _ in 0..rng.random_range(1..=2) {
        s.push(rng.random_range(2..=5));
    }
    s.push(1);
    s
}

/// Random agent with tiny networks; online and target nets differ.
pub fn tiny_agent<R: Rng>(rng: &mut R) -> Agent {
    let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=5)).collect();
    let params = AgentParams {
        hidden,
        rate_cap: 10.0,
        ..AgentParams::default()
    };
    let mut agent = Agent::new(params.clone(), rng).unwrap();
    for net in [&mut agent.actor, &mut agent.critic, &mut agent.target_actor, &mut agent.target_critic] {
        randomize(net, rng);
    }
    agent
}

pub fn random_state<R: Rng>(rng: &mut R) -> EncodedState {
    EncodedState::from_slice(&[rng.random::<f64>(), 2.0 * rng.random::<f64>(), 3.0 * rng.random::<f64>()])
}

pub fn random_batch<R: Rng>(rng: &mut R, n: usize) -> SampledBatch {
    let transitions = (0..n)
        .map(|_| Transition {
            s: random_state(rng),
            a: 10.0 * rng.random::<f64>(),
            r: 5.0 * rng.random::<f64>(),
            s_next: random_state(rng),
            boundary: rng.random_bool(0.2),
        })
        .collect();
    let mut b = SampledBatch::uniform(transitions);
    b.weights.iter_mut().for_each(|w| *w = 0.2 + 0.8 * rng.random::<f64>());
    b
}

pub fn states_of(batch: &SampledBatch) -> Array2<f64> {
    let rows: Vec<f64> = batch.transitions.iter().flat_map(|t| t.s.as_slice().to_vec()).collect();
    Array2::from_shape_vec((batch.len(), 3), rows).unwrap()
}
