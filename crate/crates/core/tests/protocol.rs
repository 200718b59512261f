mod common;

use xpharq::channel::{FadingParams, LinkParams};
use xpharq::mdp::{Env, Observation};
use xpharq::par::Exec;
use xpharq::protocol::{
    ltat_renewal, outage_mc, outage_mc_with, simulate_ltat, simulate_ltat_run, FixedRates, OutageProfile, RatePolicy,
};
use xpharq::seed::rng_from;

#[test]
fn k1_outage_matches_closed_form() {
    let n = 200_000;
    for (rate, snr) in [(1.0, 1.0), (0.5, 10.0), (3.0, 100.0)] {
        let link = LinkParams::new(snr, 1, 10.0).unwrap();
        let p = outage_mc(&[rate], &link, FadingParams::new(0.4).unwrap(), n, &mut rng_from(1));
        let f = common::rayleigh_outage(rate, snr);
        let se = (f * (1.0 - f) / n as f64).sqrt();
        assert!((p.f[0] - f).abs() < 3.0 * se, "R={rate} snr={snr}: {} vs {f}", p.f[0]);
    }
}

#[test]
fn k2_hand_renewal() {
    let p = OutageProfile { f: vec![0.5, 0.25] };
    assert!((ltat_renewal(&[1.0, 1.0], &p) - 1.0 / 1.5).abs() < 1e-15);
}

#[test]
fn renewal_equivalence_at_rho_zero() {
    let fad = FadingParams::new(0.0).unwrap();
    for (k, rates) in [(1, vec![2.0]), (3, vec![3.0, 1.5, 0.5])] {
        let link = LinkParams::from_db(10.0, k, 10.0).unwrap();
        let prof = outage_mc(&rates, &link, fad, 400_000, &mut rng_from(2));
        let renewal = ltat_renewal(&rates, &prof);
        let sim = simulate_ltat(&mut FixedRates(rates.clone()), &link, fad, 1_000_000, &mut rng_from(3));
        assert!((sim - renewal).abs() / renewal < 0.02, "K={k}: {sim} vs {renewal}");
    }
}

#[test]
fn k1_ltat_closed_form() {
    let link = LinkParams::new(1.0, 1, 10.0).unwrap();
    for rate in [0.5, 1.0, 2.0] {
        let run = simulate_ltat_run(&mut FixedRates(vec![rate]), &link, FadingParams::new(0.4).unwrap(), 1_000_000, &mut rng_from(4));
        let expect = rate * (-(rate.exp2() - 1.0)).exp();
        assert!((run.ltat.mean - expect).abs() < 4.0 * run.ltat.stderr, "R={rate}: {:?} vs {expect}", run.ltat);
    }
}

#[test]
fn outage_is_nested_and_exec_independent() {
    let link = LinkParams::from_db(5.0, 4, 10.0).unwrap();
    let fad = FadingParams::new(0.7).unwrap();
    let rates = [4.0, 2.0, 1.0, 0.5];
    let a = outage_mc_with(Exec::Sequential, &rates, &link, fad, 50_000, 17);
    let b = outage_mc_with(Exec::Parallel, &rates, &link, fad, 50_000, 17);
    assert_eq!(a, b);
    assert!(a.is_nested());
}

struct StateAware;

impl RatePolicy for StateAware {
    fn rate(&mut self, obs: &Observation) -> f64 {
        1.0 + obs.h_prev_mag() + 0.3 * obs.acc_mi - 0.1 * obs.acc_rate
    }
}

#[test]
fn env_reward_average_equals_simulate_ltat_exactly() {
    let link = LinkParams::from_db(8.0, 3, 10.0).unwrap();
    let fad = FadingParams::new(0.6).unwrap();
    let n = 50_000;
    let sim = simulate_ltat(&mut StateAware, &link, fad, n, &mut rng_from(8));

    let mut env = Env::new(link, fad, rng_from(8));
    let mut total = 0.0;
    let mut obs = env.observation();
    for _ in 0..n {
        let a = StateAware.rate(&obs).clamp(0.0, link.rate_cap);
        let step = env.step(a).unwrap();
        total += step.reward;
        obs = step.obs;
    }
    assert_eq!(total / n as f64, sim);
}
