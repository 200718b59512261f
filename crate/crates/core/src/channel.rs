//! Time-correlated Rayleigh flat fading.
//!
//! The fading coefficient follows a first-order Gauss-Markov recursion
//! `h_t = rho * h_{t-1} + sqrt(1 - rho^2) * w_t` with unit-variance circularly
//! symmetric complex Gaussian innovations, so the process is stationary with
//! `E|h|^2 = 1` whenever it starts from [`init_state`].

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub h: Complex64,
}

impl ChannelState {
    pub fn new(h: Complex64) -> Self {
        Self { h }
    }

    pub fn gain(&self) -> f64 {
        self.h.norm_sqr()
    }

    pub fn magnitude(&self) -> f64 {
        self.h.norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingParams {
    pub rho: f64,
}

impl FadingParams {
    pub fn new(rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::config("rho", format!("{rho} not in [0, 1]")));
        }
        Ok(Self { rho })
    }

    /// Innovation scale `sqrt(1 - rho^2)`.
    fn innovation_scale(&self) -> f64 {
        (1.0 - self.rho * self.rho).max(0.0).sqrt()
    }
}

/// Per-link constants shared by every round: equal power, `max_rounds` (K)
/// and the per-round rate cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Linear average SNR, `P / sigma^2`.
    pub snr: f64,
    pub max_rounds: usize,
    pub rate_cap: f64,
}

impl LinkParams {
    pub fn new(snr: f64, max_rounds: usize, rate_cap: f64) -> Result<Self> {
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(Error::config("snr_db", "snr must be positive and finite"));
        }
        if max_rounds == 0 {
            return Err(Error::config("max_rounds", "must be at least 1"));
        }
        if !(rate_cap > 0.0 && rate_cap.is_finite()) {
            return Err(Error::config("rate_cap", "must be positive and finite"));
        }
        Ok(Self {
            snr,
            max_rounds,
            rate_cap,
        })
    }

    pub fn from_db(snr_db: f64, max_rounds: usize, rate_cap: f64) -> Result<Self> {
        Self::new(db_to_linear(snr_db), max_rounds, rate_cap)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Stationary draw, `h ~ CN(0, 1)`.
pub fn init_state<R: Rng + ?Sized>(rng: &mut R) -> ChannelState {
    ChannelState::new(complex_gaussian(rng))
}

/// One slot of the AR(1) recursion.
///
/// With `rho == 1` no innovation is drawn, so the state (and the RNG) are
/// left untouched; any other value consumes exactly one complex variate.
pub fn step<R: Rng + ?Sized>(state: ChannelState, params: FadingParams, rng: &mut R) -> ChannelState {
    if params.rho >= 1.0 {
        return state;
    }
    let w = complex_gaussian(rng);
    ChannelState::new(state.h * params.rho + w * params.innovation_scale())
}

/// Single-slot mutual information `log2(1 + |h|^2 snr)` in bps/Hz.
pub fn mutual_info(state: ChannelState, link: &LinkParams) -> f64 {
    mi_from_gain(state.gain(), link.snr)
}

pub fn mi_from_gain(gain: f64, snr: f64) -> f64 {
    (gain * snr).ln_1p() / std::f64::consts::LN_2
}

/// Iterator over the per-slot channel states `h_1, h_2, ...` that follow a
/// stationary initial draw `h_0`.
pub struct Slots<'a, R: Rng> {
    state: ChannelState,
    params: FadingParams,
    rng: &'a mut R,
}

impl<'a, R: Rng> Slots<'a, R> {
    pub fn new(params: FadingParams, rng: &'a mut R) -> Self {
        let state = init_state(rng);
        Self { state, params, rng }
    }

    pub fn current(&self) -> ChannelState {
        self.state
    }
}

impl<R: Rng> Iterator for Slots<'_, R> {
    type Item = ChannelState;

    fn next(&mut self) -> Option<ChannelState> {
        self.state = step(self.state, self.params, self.rng);
        Some(self.state)
    }
}
