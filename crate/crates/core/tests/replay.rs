use rand::Rng;
use xpharq::ddpg::{ReplayBuffer, SampleIndex};
use xpharq::mdp::{EncodedState, Transition};
use xpharq::seed::rng_from;

fn tr(a: f64) -> Transition {
    let s = EncodedState::from_slice(&[0.0, 0.0, 1.0]);
    Transition {
        s,
        a,
        r: 0.0,
        s_next: s,
        boundary: false,
    }
}

fn all_indices(b: &ReplayBuffer) -> Vec<SampleIndex> {
    // sampling the whole buffer once at uniform priority yields each slot's generation
    let mut rng = rng_from(0);
    let mut out: Vec<SampleIndex> = b.sample(b.len(), &mut rng).unwrap().indices;
    out.sort_by_key(|i| i.slot);
    out.dedup_by_key(|i| i.slot);
    assert_eq!(out.len(), b.len());
    out
}

fn buffer_with(priorities: &[f64], beta: f64) -> ReplayBuffer {
    let mut b = ReplayBuffer::new(priorities.len(), 1e-4, beta);
    for i in 0..priorities.len() {
        b.push(tr(i as f64));
    }
    let idx = all_indices(&b);
    let td: Vec<f64> = priorities.iter().map(|p| p - 1e-4).collect();
    b.update_priorities(&idx, &td);
    b
}

#[test]
fn sampling_frequencies_follow_priorities() {
    let prios = [1.0, 2.0, 3.0, 4.0];
    let b = buffer_with(&prios, 0.5);
    let mut rng = rng_from(1);
    let mut counts = [0usize; 4];
    let draws = 100_000;
    for _ in 0..draws / 4 {
        for i in b.sample(4, &mut rng).unwrap().indices {
            counts[i.slot] += 1;
        }
    }
    for (slot, &c) in counts.iter().enumerate() {
        let p = prios[slot] / 10.0;
        let freq = c as f64 / draws as f64;
        assert!((freq - p).abs() < 0.01, "slot {slot}: {freq} vs {p}");
    }
}

#[test]
fn single_draw_frequencies_within_three_standard_errors() {
    let mut rng = rng_from(2);
    let prios: Vec<f64> = (0..16).map(|_| 0.1 + 5.0 * rng.random::<f64>()).collect();
    let b = buffer_with(&prios, 0.5);
    let total = b.total_priority();
    let draws = 100_000;
    let mut counts = vec![0usize; prios.len()];
    for _ in 0..draws {
        counts[b.sample(1, &mut rng).unwrap().indices[0].slot] += 1;
    }
    for (slot, &c) in counts.iter().enumerate() {
        let p = b.priority(slot) / total;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((c as f64 / draws as f64 - p).abs() < 3.0 * se, "slot {slot}");
    }
}

#[test]
fn importance_weights() {
    let b = buffer_with(&[1.0, 2.0, 3.0, 4.0], 0.5);
    let s = b.sample(4, &mut rng_from(3)).unwrap();
    let n = 4.0;
    let raw: Vec<f64> = s.indices.iter().map(|i| (n * b.priority(i.slot) / b.total_priority()).powf(-0.5)).collect();
    let max = raw.iter().cloned().fold(f64::MIN, f64::max);
    for (w, r) in s.weights.iter().zip(&raw) {
        assert!((w - r / max).abs() < 1e-15);
    }

    let flat = buffer_with(&[1.0, 2.0, 3.0, 4.0], 0.0);
    let s = flat.sample(4, &mut rng_from(3)).unwrap();
    assert!(s.weights.iter().all(|&w| w == 1.0));
}

#[test]
fn root_sum_exact_after_many_updates() {
    let mut rng = rng_from(4);
    let mut b = ReplayBuffer::new(1000, 1e-4, 0.5);
    for i in 0..1000 {
        b.push(tr(i as f64));
    }
    let idx = all_indices(&b);
    for _ in 0..10_000 {
        let i = idx[rng.random_range(0..idx.len())];
        b.update_priorities(&[i], &[10.0 * rng.random::<f64>()]);
    }
    assert_eq!(b.total_priority(), b.tree().recomputed_total());
    let leaf_sum: f64 = b.tree().leaves().iter().sum();
    assert!((b.total_priority() - leaf_sum).abs() < 1e-9 * leaf_sum);
}
