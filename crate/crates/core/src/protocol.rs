//! HARQ cycle state machines and throughput accounting.
//!
//! Decoding follows the Shannon threshold: after round `k` of a cycle the
//! concatenated message decodes iff the accumulated mutual information
//! reaches the accumulated rate. XP-HARQ adds fresh information bits in
//! every round; HARQ-IR is the special case that sends new bits only in
//! round one.
//!
//! Every round occupies one channel slot and a new cycle starts in the slot
//! right after the previous one ends. A message that fails K rounds is dropped.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelState, FadingParams, LinkParams, Slots};
use crate::error::{Error, Result};
use crate::mdp::{observe, Observation};
use crate::par::{self, Exec};
use crate::seed;
use crate::stats::{BatchMeans, Estimate};

/// Accumulators of the cycle in progress.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleState {
    /// Rounds already transmitted (0 before the first round).
    pub round: usize,
    pub acc_rate: f64,
    pub acc_mi: f64,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundStatus {
    Success,
    Continue,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOutcome {
    pub status: RoundStatus,
    /// Delivered bits per channel use: the accumulated rate on success, else 0.
    pub reward: f64,
    pub cycle_ended: bool,
}

/// `f[k-1]` is the probability that the first `k` rounds all fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageProfile {
    pub f: Vec<f64>,
}

impl OutageProfile {
    pub fn is_nested(&self) -> bool {
        self.f.first().is_none_or(|&f1| f1 <= 1.0)
            && self.f.windows(2).all(|w| w[0] >= w[1])
            && self.f.last().is_none_or(|&fk| fk >= 0.0)
    }
}

pub fn new_cycle() -> CycleState {
    CycleState::default()
}

impl CycleState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Back to the empty cycle, keeping the rate buffer's allocation.
    pub fn reset(&mut self) {
        self.round = 0;
        self.acc_rate = 0.0;
        self.acc_mi = 0.0;
        self.rates.clear();
    }

    /// One XP-HARQ round carrying `rate` new bits per channel use over a
    /// slot with mutual information `slot_mi`.
    pub fn xp_round(&mut self, rate: f64, slot_mi: f64, max_rounds: usize) -> Result<RoundOutcome> {
        if self.round >= max_rounds {
            return Err(Error::Protocol(format!(
                "cycle already used all {max_rounds} rounds"
            )));
        }
        if rate.is_nan() || rate < 0.0 || slot_mi.is_nan() || slot_mi < 0.0 {
            return Err(Error::Protocol(format!(
                "rate {rate} and slot mutual information {slot_mi} must be non-negative"
            )));
        }
        self.round += 1;
        self.acc_rate += rate;
        self.acc_mi += slot_mi;
        self.rates.push(rate);
        let outcome = if self.acc_mi >= self.acc_rate {
            RoundOutcome {
                status: RoundStatus::Success,
                reward: self.acc_rate,
                cycle_ended: true,
            }
        } else if self.round == max_rounds {
            RoundOutcome {
                status: RoundStatus::Failure,
                reward: 0.0,
                cycle_ended: true,
            }
        } else {
            RoundOutcome {
                status: RoundStatus::Continue,
                reward: 0.0,
                cycle_ended: false,
            }
        };
        Ok(outcome)
    }

    /// One HARQ-IR round: `initial_rate` in round one, pure redundancy after.
    pub fn ir_round(&mut self, initial_rate: f64, slot_mi: f64, max_rounds: usize) -> Result<RoundOutcome> {
        let rate = if self.round == 0 { initial_rate } else { 0.0 };
        self.xp_round(rate, slot_mi, max_rounds)
    }
}

/// Functional form of [`CycleState::xp_round`].
pub fn xp_round(
    cycle: &CycleState,
    rate: f64,
    slot_mi: f64,
    max_rounds: usize,
) -> Result<(CycleState, RoundOutcome)> {
    let mut next = cycle.clone();
    let out = next.xp_round(rate, slot_mi, max_rounds)?;
    Ok((next, out))
}

/// Functional form of [`CycleState::ir_round`].
pub fn ir_round(
    cycle: &CycleState,
    initial_rate: f64,
    slot_mi: f64,
    max_rounds: usize,
) -> Result<(CycleState, RoundOutcome)> {
    let mut next = cycle.clone();
    let out = next.ir_round(initial_rate, slot_mi, max_rounds)?;
    Ok((next, out))
}

/// Cycles simulated per independent Monte Carlo chunk.
pub const CYCLES_PER_CHUNK: usize = 1 << 14;

/// Counts, for one chunk, how many cycles failed each of the first k rounds.
///
/// `slots` yields the mutual information of consecutive slots; the walk stops after
/// `cycles` complete cycles.
pub(crate) fn count_outages<I>(rates: &[f64], cycles: usize, slots: I) -> Vec<u64>
where
    I: IntoIterator<Item = f64>,
{
    let k_max = rates.len();
    let mut fails = vec![0u64; k_max];
    let mut slot_mi = slots.into_iter();
    for _ in 0..cycles {
        let mut acc_rate = 0.0;
        let mut acc_mi = 0.0;
        for (k, &r) in rates.iter().enumerate() {
            acc_rate += r;
            acc_mi += slot_mi.next().expect("slot source exhausted");
            if acc_mi >= acc_rate {
                break;
            }
            fails[k] += 1;
        }
    }
    fails
}

/// Monte Carlo outage profile for a fixed rate vector.
///
/// The channel runs continuously across rounds and cycles. Work is cut
/// into chunks of [`CYCLES_PER_CHUNK`] cycles, each with its own stationary
/// start and a seed derived from one draw of `rng`.
pub fn outage_mc<R: RngCore + ?Sized>(
    rates: &[f64],
    link: &LinkParams,
    fading: FadingParams,
    n_cycles: usize,
    rng: &mut R,
) -> OutageProfile {
    outage_mc_with(Exec::default(), rates, link, fading, n_cycles, rng.next_u64())
}

pub fn outage_mc_with(
    exec: Exec,
    rates: &[f64],
    link: &LinkParams,
    fading: FadingParams,
    n_cycles: usize,
    base_seed: u64,
) -> OutageProfile {
    let chunks = par::chunk_sizes(n_cycles, CYCLES_PER_CHUNK);
    let counts = par::map_range(exec, chunks.len(), |i| {
        let mut rng = seed::rng_from(seed::derive_indexed(base_seed, "outage", i as u64));
        let slots = Slots::new(fading, &mut rng).map(|h| channel::mutual_info(h, link));
        count_outages(rates, chunks[i], slots)
    });
    let mut total = vec![0u64; rates.len()];
    for c in counts {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    OutageProfile {
        f: total.iter().map(|&c| c as f64 / n_cycles as f64).collect(),
    }
}

/// Long-term average throughput from the renewal-reward identity, with `f_0 = 1`.
pub fn ltat_renewal(rates: &[f64], profile: &OutageProfile) -> f64 {
    let k = rates.len();
    assert_eq!(k, profile.f.len(), "rates and outage profile lengths differ");
    if k == 0 {
        return 0.0;
    }
    let f = |i: usize| if i == 0 { 1.0 } else { profile.f[i - 1] };
    let f_k = f(k);
    let num: f64 = rates
        .iter()
        .enumerate()
        .map(|(i, r)| r * (f(i) - f_k))
        .sum();
    let den = 1.0 + (1..k).map(f).sum::<f64>();
    num / den
}

/// Chooses the rate of the next round from what the transmitter knows.
pub trait RatePolicy {
    fn rate(&mut self, obs: &Observation) -> f64;
}

impl<F: FnMut(&Observation) -> f64> RatePolicy for F {
    fn rate(&mut self, obs: &Observation) -> f64 {
        self(obs)
    }
}

/// Fixed per-round rate vector (the statistical-CSI policy family).
#[derive(Debug, Clone, PartialEq)]
pub struct FixedRates(pub Vec<f64>);

impl FixedRates {
    /// HARQ-IR: `initial_rate` first, zeros after.
    pub fn ir(initial_rate: f64, max_rounds: usize) -> Self {
        let mut v = vec![0.0; max_rounds];
        v[0] = initial_rate;
        Self(v)
    }
}

impl RatePolicy for FixedRates {
    fn rate(&mut self, obs: &Observation) -> f64 {
        self.0[obs.round]
    }
}

/// Outcome of a slot-level simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtatRun {
    pub ltat: Estimate,
    pub slots: usize,
    pub total_reward: f64,
    pub cycles_completed: usize,
    pub successes: usize,
    /// Sum of `acc_rate` over cycles that decoded.
    pub delivered: f64,
}

/// Batches used for the batch-means standard error.
pub const LTAT_BATCHES: usize = 50;

/// Slot loop over an explicit channel sequence. `h0` is the state the
/// transmitter sees as outdated CSI before the first slot.
pub fn simulate_on<P, I>(policy: &mut P, link: &LinkParams, h0: ChannelState, slots: I, n_slots: usize) -> LtatRun
where
    P: RatePolicy + ?Sized,
    I: IntoIterator<Item = ChannelState>,
{
    let mut cycle = CycleState::new();
    let mut h_prev = h0;
    let mut acc = BatchMeans::new(n_slots, LTAT_BATCHES);
    let (mut cycles_completed, mut successes, mut delivered, mut used) = (0, 0, 0.0, 0);
    for h in slots.into_iter().take(n_slots) {
        let obs = observe(&cycle, h_prev);
        let rate = clamp_rate(policy.rate(&obs), link.rate_cap);
        let out = cycle
            .xp_round(rate, channel::mutual_info(h, link), link.max_rounds)
            .expect("cycle is reset before it can exceed K rounds");
        acc.push(out.reward);
        if out.cycle_ended {
            cycles_completed += 1;
            if out.status == RoundStatus::Success {
                successes += 1;
                delivered += cycle.acc_rate;
            }
            cycle.reset();
        }
        h_prev = h;
        used += 1;
    }
    LtatRun {
        ltat: acc.finish(),
        slots: used,
        total_reward: acc.total(),
        cycles_completed,
        successes,
        delivered,
    }
}

/// Time-averaged reward of `policy` over `n_slots` slots of a fresh
/// stationary channel drawn from `rng`.
pub fn simulate_ltat<P, R>(
    policy: &mut P,
    link: &LinkParams,
    fading: FadingParams,
    n_slots: usize,
    rng: &mut R,
) -> f64
where
    P: RatePolicy + ?Sized,
    R: Rng,
{
    simulate_ltat_run(policy, link, fading, n_slots, rng).ltat.mean
}

pub fn simulate_ltat_run<P, R>(
    policy: &mut P,
    link: &LinkParams,
    fading: FadingParams,
    n_slots: usize,
    rng: &mut R,
) -> LtatRun
where
    P: RatePolicy + ?Sized,
    R: Rng,
{
    let mut slots = Slots::new(fading, rng);
    let h0 = slots.current();
    simulate_on(policy, link, h0, &mut slots, n_slots)
}

/// Clamps into `[0, cap]`; NaN maps to 0.
pub fn clamp_rate(rate: f64, cap: f64) -> f64 {
    if rate.is_nan() {
        0.0
    } else {
        rate.clamp(0.0, cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn link(snr: f64, k: usize) -> LinkParams {
        LinkParams::new(snr, k, 10.0).unwrap()
    }

    #[test]
    fn new_cycle_is_empty() {
        let c = new_cycle();
        assert_eq!((c.round, c.acc_rate, c.acc_mi), (0, 0.0, 0.0));
        assert!(c.rates.is_empty());
        assert_eq!(new_cycle(), new_cycle());
    }

    #[test]
    fn zero_rate_always_decodes() {
        let (_, out) = xp_round(&new_cycle(), 0.0, 0.0, 3).unwrap();
        assert_eq!(out.status, RoundStatus::Success);
        assert_eq!(out.reward, 0.0);
    }

    #[test]
    fn xp_first_round_success() {
        let (c, out) = xp_round(&new_cycle(), 2.0, 3.0, 3).unwrap();
        assert_eq!(out.status, RoundStatus::Success);
        assert_eq!(out.reward, 2.0);
        assert!(out.cycle_ended);
        assert_eq!(c.round, 1);
    }

    #[test]
    fn xp_last_round_failure() {
        let c = CycleState {
            round: 2,
            acc_rate: 6.0,
            acc_mi: 4.0,
            rates: vec![3.0, 3.0],
        };
        let (c, out) = xp_round(&c, 1.0, 1.0, 3).unwrap();
        assert_eq!((c.round, c.acc_rate, c.acc_mi), (3, 7.0, 5.0));
        assert_eq!(out.status, RoundStatus::Failure);
        assert_eq!(out.reward, 0.0);
        assert!(out.cycle_ended);
    }

    #[test]
    fn xp_redundancy_round_can_rescue() {
        let mut c = new_cycle();
        assert_eq!(c.xp_round(4.0, 3.0, 3).unwrap().status, RoundStatus::Continue);
        let out = c.xp_round(0.0, 1.5, 3).unwrap();
        assert_eq!(c.acc_rate, 4.0);
        assert_eq!(out.status, RoundStatus::Success);
        assert_eq!(out.reward, 4.0);
    }

    #[test]
    fn xp_rejects_round_beyond_k() {
        let mut c = new_cycle();
        c.xp_round(5.0, 0.0, 1).unwrap();
        assert!(c.xp_round(1.0, 1.0, 1).is_err());
    }

    #[test]
    fn ir_cumulative_threshold() {
        let mut c = new_cycle();
        let outs: Vec<_> = [1.5, 1.5, 1.5]
            .iter()
            .map(|&mi| c.ir_round(4.0, mi, 3).unwrap())
            .collect();
        assert_eq!(outs[1].status, RoundStatus::Continue);
        assert_eq!(outs[2].status, RoundStatus::Success);
        assert_eq!(outs[2].reward, 4.0);

        let mut c = new_cycle();
        let last = [1.0, 1.0, 1.0]
            .iter()
            .map(|&mi| c.ir_round(4.0, mi, 3).unwrap())
            .last()
            .unwrap();
        assert_eq!(last.status, RoundStatus::Failure);
        assert_eq!(last.reward, 0.0);
    }

    #[test]
    fn ir_single_round_is_one_shot() {
        let mut c = new_cycle();
        assert_eq!(c.ir_round(2.0, 1.0, 1).unwrap().status, RoundStatus::Failure);
        let mut c = new_cycle();
        assert_eq!(c.ir_round(2.0, 2.5, 1).unwrap().status, RoundStatus::Success);
    }

    #[test]
    fn renewal_reductions() {
        let p = OutageProfile { f: vec![0.3] };
        assert!((ltat_renewal(&[2.0], &p) - 1.4).abs() < 1e-15);
        let p = OutageProfile { f: vec![0.5, 0.25] };
        assert!((ltat_renewal(&[1.0, 1.0], &p) - 1.0 / 1.5).abs() < 1e-15);
        let p = OutageProfile { f: vec![0.0; 3] };
        assert_eq!(ltat_renewal(&[3.0, 2.0, 1.0], &p), 3.0);
    }

    #[test]
    fn outage_all_zero_rates() {
        let p = outage_mc(&[0.0; 3], &link(1.0, 3), FadingParams::new(0.4).unwrap(), 10_000, &mut rng_from(1));
        assert_eq!(p.f, vec![0.0; 3]);
    }

    #[test]
    fn outage_huge_snr() {
        let p = outage_mc(&[2.0; 3], &link(1e6, 3), FadingParams::new(0.4).unwrap(), 20_000, &mut rng_from(2));
        assert!(p.f[0] < 1e-3, "{:?}", p.f);
    }

    #[test]
    fn outage_sequential_matches_parallel() {
        let l = link(3.0, 3);
        let fad = FadingParams::new(0.7).unwrap();
        let a = outage_mc_with(Exec::Sequential, &[1.0, 2.0, 1.0], &l, fad, 50_000, 11);
        let b = outage_mc_with(Exec::Parallel, &[1.0, 2.0, 1.0], &l, fad, 50_000, 11);
        assert_eq!(a, b);
        assert!(a.is_nested());
    }

    #[test]
    fn zero_policy_has_zero_ltat() {
        let v = simulate_ltat(&mut |_: &Observation| 0.0, &link(10.0, 3), FadingParams::new(0.4).unwrap(), 1000, &mut rng_from(5));
        assert_eq!(v, 0.0);
    }

    #[test]
    fn reward_accounting_is_exact() {
        let l = link(2.0, 4);
        let run = simulate_ltat_run(
            &mut FixedRates(vec![2.0, 1.0, 0.5, 0.0]),
            &l,
            FadingParams::new(0.4).unwrap(),
            20_000,
            &mut rng_from(8),
        );
        assert_eq!(run.total_reward, run.delivered);
        assert_eq!(run.slots, 20_000);
    }

    #[test]
    fn ir_policy_trace_matches_ir_round() {
        // xp_round under the IR rate pattern must reproduce ir_round exactly.
        let l = link(1.5, 3);
        let fad = FadingParams::new(0.4).unwrap();
        let mut rng = rng_from(21);
        let mut slots = Slots::new(fad, &mut rng);
        let mut xp = new_cycle();
        let mut ir = new_cycle();
        for _ in 0..5000 {
            let mi = channel::mutual_info(slots.next().unwrap(), &l);
            let rate = FixedRates::ir(3.0, 3).0[xp.round];
            let a = xp.xp_round(rate, mi, 3).unwrap();
            let b = ir.ir_round(3.0, mi, 3).unwrap();
            assert_eq!(a, b);
            assert_eq!(xp, ir);
            if a.cycle_ended {
                xp.reset();
                ir.reset();
            }
        }
    }
}
