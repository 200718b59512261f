//! Reference schemes: XP-HARQ with statistical CSI (one fixed rate vector
//! for every cycle), fixed-rate HARQ-IR, and the ergodic capacity.
//!
//! Rate vectors are optimised by a coarse grid over `[0, cap]^K` followed by
//! compass pattern search with step halving. Every candidate is scored on the
//! same pre-drawn channel realisations (common random numbers), so the search
//! is deterministic for a given seed.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelState, FadingParams, LinkParams, Slots};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::protocol::{self, simulate_on, FixedRates, OutageProfile, CYCLES_PER_CHUNK};
use crate::seed;

pub const COARSE_STEP: f64 = 0.5;
pub const FINE_STEP: f64 = 0.05;
/// Largest grid enumerated exhaustively; bigger ones use coordinate ascent.
pub const FULL_GRID_LIMIT: usize = 10_000;
pub const DEFAULT_MC_CYCLES: usize = 100_000;

/// Per-round rates, each within `[0, cap]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVector(pub Vec<f64>);

impl RateVector {
    pub fn new(rates: Vec<f64>, cap: f64) -> Result<Self> {
        if let Some(r) = rates.iter().find(|r| !(0.0..=cap).contains(*r)) {
            return Err(Error::config("rates", format!("{r} outside [0, {cap}]")));
        }
        Ok(Self(rates))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub rates: RateVector,
    pub ltat: f64,
    pub outage: OutageProfile,
    pub snr_db: f64,
    /// Best objective among the coarse grid points evaluated.
    pub grid_best: f64,
}

struct BankChunk {
    h0: ChannelState,
    slots: Vec<ChannelState>,
    mi: Vec<f64>,
    cycles: usize,
}

/// Pre-drawn channel realisations shared by all candidates.
///
/// Chunks use the same seeds and slot order as
/// [`protocol::outage_mc_with`], so `bank.outage(r)` equals that function's
/// result for the same base seed.
pub struct SlotBank {
    link: LinkParams,
    chunks: Vec<BankChunk>,
}

impl SlotBank {
    pub fn generate(exec: Exec, link: &LinkParams, fading: FadingParams, n_cycles: usize, base_seed: u64) -> Self {
        let k = link.max_rounds;
        let sizes = par::chunk_sizes(n_cycles, CYCLES_PER_CHUNK);
        let chunks = par::map_range(exec, sizes.len(), |i| {
            let mut rng = seed::rng_from(seed::derive_indexed(base_seed, "outage", i as u64));
            let it = Slots::new(fading, &mut rng);
            let h0 = it.current();
            let slots: Vec<ChannelState> = it.take(sizes[i] * k).collect();
            let mi = slots.iter().map(|&h| channel::mutual_info(h, link)).collect();
            BankChunk {
                h0,
                slots,
                mi,
                cycles: sizes[i],
            }
        });
        Self { link: *link, chunks }
    }

    pub fn n_cycles(&self) -> usize {
        self.chunks.iter().map(|c| c.cycles).sum()
    }

    pub fn outage(&self, rates: &[f64]) -> OutageProfile {
        let mut fails = vec![0u64; rates.len()];
        for c in &self.chunks {
            let counts = protocol::count_outages(rates, c.cycles, c.mi.iter().copied());
            fails.iter_mut().zip(counts).for_each(|(t, v)| *t += v);
        }
        let n = self.n_cycles() as f64;
        OutageProfile {
            f: fails.iter().map(|&c| c as f64 / n).collect(),
        }
    }

    pub fn renewal_ltat(&self, rates: &[f64]) -> f64 {
        protocol::ltat_renewal(rates, &self.outage(rates))
    }

    /// Slot-level time-average reward of a fixed rate pattern over every
    /// slot in the bank.
    pub fn simulated_ltat(&self, rates: &[f64]) -> f64 {
        let mut policy = FixedRates(rates.to_vec());
        let (mut reward, mut slots) = (0.0, 0usize);
        for c in &self.chunks {
            let run = simulate_on(&mut policy, &self.link, c.h0, c.slots.iter().copied(), c.slots.len());
            reward += run.total_reward;
            slots += run.slots;
        }
        reward / slots as f64
    }
}

/// Outcome of a box-constrained maximisation.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grid_best: f64,
    pub evaluations: usize,
}

pub fn grid_values(cap: f64, step: f64) -> Vec<f64> {
    let n = (cap / step + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    if cap - v[n] > 1e-9 {
        v.push(cap);
    }
    v
}

/// Maximises `objective` over `[0, cap]^dim`: coarse grid (exhaustive when
/// small, coordinate ascent otherwise) then compass search whose step
/// halves from `COARSE_STEP / 2` until it drops below `FINE_STEP`.
pub fn maximize<F>(exec: Exec, dim: usize, cap: f64, objective: F) -> SearchResult
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    assert!(dim >= 1);
    let grid = grid_values(cap, COARSE_STEP);
    let g = grid.len();
    let mut evaluations = 0;

    // argmax with first-index tie break
    let best_of = |cands: &[Vec<f64>], evaluations: &mut usize| -> (usize, f64) {
        *evaluations += cands.len();
        let vals = par::map_slice(exec, cands, |x| objective(x));
        vals.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
    };

    let (mut x, mut value) = match g.checked_pow(dim as u32).filter(|&n| n <= FULL_GRID_LIMIT) {
        Some(total) => {
            let cands: Vec<Vec<f64>> = (0..total)
                .map(|mut idx| {
                    (0..dim)
                        .map(|_| {
                            let v = grid[idx % g];
                            idx /= g;
                            v
                        })
                        .collect()
                })
                .collect();
            let (i, v) = best_of(&cands, &mut evaluations);
            (cands[i].clone(), v)
        }
        None => {
            let diag: Vec<Vec<f64>> = grid.iter().map(|&r| vec![r; dim]).collect();
            let (i, mut v) = best_of(&diag, &mut evaluations);
            let mut x = diag[i].clone();
            loop {
                let mut moved = false;
                for d in 0..dim {
                    let cands: Vec<Vec<f64>> = grid
                        .iter()
                        .map(|&r| {
                            let mut c = x.clone();
                            c[d] = r;
                            c
                        })
                        .collect();
                    let (i, cv) = best_of(&cands, &mut evaluations);
                    if cv > v {
                        x = cands[i].clone();
                        v = cv;
                        moved = true;
                    }
                }
                if !moved {
                    break;
                }
            }
            (x, v)
        }
    };
    let grid_best = value;

    let mut step = COARSE_STEP / 2.0;
    loop {
        loop {
            let mut cands = Vec::with_capacity(2 * dim);
            for d in 0..dim {
                for sign in [-1.0, 1.0] {
                    let v = (x[d] + sign * step).clamp(0.0, cap);
                    if v != x[d] {
                        let mut c = x.clone();
                        c[d] = v;
                        cands.push(c);
                    }
                }
            }
            if cands.is_empty() {
                break;
            }
            let (i, cv) = best_of(&cands, &mut evaluations);
            if cv > value {
                x = cands[i].clone();
                value = cv;
            } else {
                break;
            }
        }
        if step < FINE_STEP {
            break;
        }
        step /= 2.0;
    }

    SearchResult {
        x,
        value,
        grid_best,
        evaluations,
    }
}

/// Fixed rate vector maximising the renewal-reward throughput computed from
/// Monte Carlo outage estimates (`n_mc` cycles, common random numbers).
pub fn optimize_statistical_rates<R: RngCore + ?Sized>(
    link: &LinkParams,
    fading: FadingParams,
    n_mc: usize,
    rng: &mut R,
) -> BaselineResult {
    optimize_statistical_rates_with(Exec::default(), link, fading, n_mc, rng.next_u64())
}

pub fn optimize_statistical_rates_with(
    exec: Exec,
    link: &LinkParams,
    fading: FadingParams,
    n_mc: usize,
    base_seed: u64,
) -> BaselineResult {
    let bank = SlotBank::generate(exec, link, fading, n_mc, base_seed);
    let res = maximize(exec, link.max_rounds, link.rate_cap, |r| bank.renewal_ltat(r));
    BaselineResult {
        outage: bank.outage(&res.x),
        rates: RateVector(res.x),
        ltat: res.value,
        snr_db: to_db(link.snr),
        grid_best: res.grid_best,
    }
}

/// Initial rate of HARQ-IR maximising its slot-level simulated throughput.
pub fn optimize_ir_rate<R: RngCore + ?Sized>(
    link: &LinkParams,
    fading: FadingParams,
    n_mc: usize,
    rng: &mut R,
) -> BaselineResult {
    optimize_ir_rate_with(Exec::default(), link, fading, n_mc, rng.next_u64())
}

pub fn optimize_ir_rate_with(
    exec: Exec,
    link: &LinkParams,
    fading: FadingParams,
    n_mc: usize,
    base_seed: u64,
) -> BaselineResult {
    let k = link.max_rounds;
    let bank = SlotBank::generate(exec, link, fading, n_mc, base_seed);
    let pattern = |r1: f64| FixedRates::ir(r1, k).0;
    let res = maximize(exec, 1, link.rate_cap, |x| bank.simulated_ltat(&pattern(x[0])));
    let rates = pattern(res.x[0]);
    BaselineResult {
        outage: bank.outage(&rates),
        rates: RateVector(rates),
        ltat: res.value,
        snr_db: to_db(link.snr),
        grid_best: res.grid_best,
    }
}

fn to_db(snr: f64) -> f64 {
    10.0 * snr.log10()
}

// 15-point Kronrod nodes on [-1, 1] (non-negative half) and weights, with
// the embedded 7-point Gauss weights for the odd-indexed nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gauss_kronrod(f, a, b);
    if err <= tol || depth == 0 {
        return value;
    }
    let m = 0.5 * (a + b);
    adaptive(f, a, m, tol / 2.0, depth - 1) + adaptive(f, m, b, tol / 2.0, depth - 1)
}

/// Adaptive Gauss-Kronrod quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adaptive(&f, a, b, tol, 40)
}

/// `E[log2(1 + snr |h|^2)]` for unit-power Rayleigh fading, integrated
/// over `x = t / (1 - t)`, `t in [0, 1)`.
pub fn ergodic_capacity(snr: f64) -> f64 {
    assert!(snr > 0.0, "snr must be positive");
    let f = |t: f64| {
        let x = t / (1.0 - t);
        channel::mi_from_gain(x, snr) * (-x).exp() / ((1.0 - t) * (1.0 - t))
    };
    integrate(f, 0.0, 1.0, 1e-10)
}
