//! Deterministic synthetic corpora.
//!
//! [`movielens_like`] builds a 943 × 1682 matrix with exactly 100,000 star
//! ratings whose shape mirrors the classic MovieLens 100K corpus: every user
//! rates at least 21 films, every film is rated between 20 and 250 times, and
//! ratings follow a low-rank user/item taste model plus noise, calibrated so
//! that plain kNN (k = 100) lands in the familiar MAE band on the
//! leave-one-out protocol. [`corpus`] prefers the real `u.data` when a path
//! is supplied via `PPNS_ML100K` and falls back to the generator, so the test
//! and experiment suites run the same protocol either way.
//!
//! [`unique_target_fixture`] is a small matrix tailored to attack studies:
//! one target whose ratings no other user shares, surrounded by a homogeneous
//! crowd that rates the target's items differently.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ratings::{ingest_movielens, RatingMatrix, UserId};
use crate::seeds;

pub const ML_USERS: usize = 943;
pub const ML_ITEMS: usize = 1682;
pub const ML_RATINGS: usize = 100_000;
pub const DEFAULT_CORPUS_SEED: u64 = 0x6d6c_3130_306b; // "ml100k"

const MIN_USER_DEGREE: usize = 21;
const MAX_USER_DEGREE: usize = 650;
const MIN_ITEM_DEGREE: usize = 20;
const MAX_ITEM_DEGREE: usize = 250;

// Rating model calibration.
const GLOBAL_MEAN: f64 = 3.55;
const USER_BIAS_SD: f64 = 0.40;
const ITEM_BIAS_SD: f64 = 0.50;
const LATENT_DIM: usize = 6;
const LATENT_SD: f64 = 0.58;
const NOISE_SD: f64 = 0.45;

fn normal<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    let u1: f64 = rng.random::<f64>().clamp(f64::MIN_POSITIVE, 1.0);
    let u2: f64 = rng.random();
    sd * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fenwick tree over nonnegative weights supporting O(log n) weighted draws.
struct WeightedIndex {
    tree: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedIndex {
    fn new(weights: &[f64]) -> Self {
        let mut t = WeightedIndex {
            tree: vec![0.0; weights.len() + 1],
            weights: vec![0.0; weights.len()],
        };
        for (i, &w) in weights.iter().enumerate() {
            t.set(i, w);
        }
        t
    }

    fn set(&mut self, i: usize, w: f64) {
        let delta = w - self.weights[i];
        self.weights[i] = w;
        let mut idx = i + 1;
        while idx < self.tree.len() {
            self.tree[idx] += delta;
            idx += idx & idx.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut sum = 0.0;
        let mut idx = self.tree.len() - 1;
        while idx > 0 {
            sum += self.tree[idx];
            idx &= idx - 1;
        }
        sum
    }

    /// Smallest index whose cumulative weight exceeds `u`.
    fn locate(&self, mut u: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                u -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }
}

/// Split `extra` units over `weights.len()` bins proportionally to the
/// weights, on top of `base` each, never exceeding `cap`.
fn proportional_degrees(
    count: usize,
    extra: usize,
    weights: &[f64],
    base: usize,
    cap: usize,
) -> Vec<usize> {
    assert!(count * cap >= count * base + extra, "caps cannot absorb the total");
    let w_total: f64 = weights.iter().sum();
    let mut degrees: Vec<usize> = weights
        .iter()
        .map(|w| (extra as f64 * w / w_total).floor() as usize)
        .collect();
    // order by fractional remainder to place what flooring dropped
    let mut frac: Vec<(usize, f64)> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let exact = extra as f64 * w / w_total;
            (i, exact - exact.floor())
        })
        .collect();
    frac.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let assigned: usize = degrees.iter().sum();
    for &(i, _) in frac.iter().take(extra - assigned) {
        degrees[i] += 1;
    }
    for d in &mut degrees {
        *d += base;
    }
    // push cap overflow onto the heaviest uncapped bins
    loop {
        let mut overflow = 0;
        for d in &mut degrees {
            if *d > cap {
                overflow += *d - cap;
                *d = cap;
            }
        }
        if overflow == 0 {
            break;
        }
        let mut order: Vec<usize> = (0..count).filter(|&i| degrees[i] < cap).collect();
        order.sort_by(|&a, &b| weights[b].partial_cmp(&weights[a]).unwrap().then(a.cmp(&b)));
        let mut idx = 0;
        while overflow > 0 {
            let i = order[idx % order.len()];
            if degrees[i] < cap {
                degrees[i] += 1;
                overflow -= 1;
            }
            idx += 1;
        }
    }
    degrees
}

/// A MovieLens-100K-shaped synthetic corpus: deterministic in `seed`.
pub fn movielens_like(seed: u64) -> RatingMatrix {
    let mut rng = seeds::rng(seed, &[0x5e7]);

    // Item popularity: Zipf-ish over a shuffled rank order.
    let mut item_rank: Vec<usize> = (0..ML_ITEMS).collect();
    shuffle(&mut item_rank, &mut rng);
    let mut item_weight = vec![0.0; ML_ITEMS];
    for (rank, &item) in item_rank.iter().enumerate() {
        item_weight[item] = 1.0 / (rank as f64 + 2.0).powf(0.85);
    }
    let item_degree = proportional_degrees(
        ML_ITEMS,
        ML_RATINGS - ML_ITEMS * MIN_ITEM_DEGREE,
        &item_weight,
        MIN_ITEM_DEGREE,
        MAX_ITEM_DEGREE,
    );

    // User activity: heavy-tailed.
    let user_weight: Vec<f64> = (0..ML_USERS).map(|_| normal(&mut rng, 0.9).exp()).collect();
    let user_degree = proportional_degrees(
        ML_USERS,
        ML_RATINGS - ML_USERS * MIN_USER_DEGREE,
        &user_weight,
        MIN_USER_DEGREE,
        MAX_USER_DEGREE,
    );

    // Assign each user a distinct item set by capacity-weighted draws.
    let mut capacity = WeightedIndex::new(
        &item_degree.iter().map(|&d| d as f64).collect::<Vec<f64>>(),
    );
    let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(ML_RATINGS);
    for (u, &want) in user_degree.iter().enumerate() {
        let mut taken: Vec<(usize, f64)> = Vec::with_capacity(want);
        for _ in 0..want {
            let total = capacity.total();
            if total <= 0.0 {
                break;
            }
            let item = capacity.locate(rng.random::<f64>() * total);
            taken.push((item, capacity.weights[item]));
            capacity.set(item, 0.0); // distinct within the user
        }
        for &(item, w) in &taken {
            capacity.set(item, (w - 1.0).max(0.0)); // consume one slot
            pairs.push((u as u32, item as u32));
        }
    }
    // Capacity exhaustion in the tail: place leftovers anywhere distinct.
    if pairs.len() < ML_RATINGS {
        let mut rated: Vec<std::collections::BTreeSet<u32>> =
            vec![std::collections::BTreeSet::new(); ML_USERS];
        for &(u, i) in &pairs {
            rated[u as usize].insert(i);
        }
        let mut u = 0usize;
        while pairs.len() < ML_RATINGS {
            let user_items = &mut rated[u % ML_USERS];
            if user_items.len() < ML_ITEMS {
                for item in 0..ML_ITEMS as u32 {
                    if user_items.insert(item) {
                        pairs.push(((u % ML_USERS) as u32, item));
                        break;
                    }
                }
            }
            u += 1;
        }
    }

    // Taste model: biases plus a low-rank interaction.
    let user_bias: Vec<f64> = (0..ML_USERS).map(|_| normal(&mut rng, USER_BIAS_SD)).collect();
    let item_bias: Vec<f64> = (0..ML_ITEMS).map(|_| normal(&mut rng, ITEM_BIAS_SD)).collect();
    let user_factors: Vec<f64> = (0..ML_USERS * LATENT_DIM)
        .map(|_| normal(&mut rng, LATENT_SD))
        .collect();
    let item_factors: Vec<f64> = (0..ML_ITEMS * LATENT_DIM)
        .map(|_| normal(&mut rng, LATENT_SD))
        .collect();

    let entries: Vec<(u64, u64, u8)> = pairs
        .iter()
        .map(|&(u, i)| {
            let (u, i) = (u as usize, i as usize);
            let dot: f64 = (0..LATENT_DIM)
                .map(|l| user_factors[u * LATENT_DIM + l] * item_factors[i * LATENT_DIM + l])
                .sum();
            let score =
                GLOBAL_MEAN + user_bias[u] + item_bias[i] + dot + normal(&mut rng, NOISE_SD);
            let stars = score.round().clamp(1.0, 5.0) as u8;
            (u as u64 + 1, i as u64 + 1, stars)
        })
        .collect();

    RatingMatrix::from_entries(entries).expect("generated corpus is valid")
}

fn shuffle<T>(slice: &mut [T], rng: &mut ChaCha8Rng) {
    use rand::seq::SliceRandom;
    slice.shuffle(rng);
}

/// The evaluation corpus: the real MovieLens 100K `u.data` when the
/// `PPNS_ML100K` environment variable points at it, otherwise the
/// deterministic synthetic stand-in with the same shape.
pub fn corpus() -> RatingMatrix {
    if let Ok(path) = std::env::var("PPNS_ML100K") {
        match ingest_movielens(std::path::Path::new(&path)) {
            Ok(m) => return m,
            Err(e) => {
                log::warn!("PPNS_ML100K set but unusable ({e}); using the synthetic corpus");
            }
        }
    }
    movielens_like(DEFAULT_CORPUS_SEED)
}

/// A 200-user matrix with a uniquely-rated target for attack studies.
///
/// The target (external user 1) rates items 1..=20 with five stars; every
/// other user rates those items with one star, so no candidate shares the
/// target's ratings, any clone of the target's items outranks every real
/// user, and every real user disagrees with the target on every item the
/// target rated. Real users also rate 20 personal items from a wider pool.
pub fn unique_target_fixture(seed: u64) -> (RatingMatrix, UserId) {
    let mut rng = seeds::rng(seed, &[0xa77ac4]);
    let mut entries: Vec<(u64, u64, u8)> = Vec::new();
    for item in 1..=20u64 {
        entries.push((1, item, 5));
    }
    for user in 2..=200u64 {
        for item in 1..=20u64 {
            entries.push((user, item, 1));
        }
        let mut extra: Vec<u64> = (21..=60).collect();
        shuffle(&mut extra, &mut rng);
        for &item in extra.iter().take(20) {
            entries.push((user, item, rng.random_range(1..=5)));
        }
    }
    let m = RatingMatrix::from_entries(entries).expect("fixture is valid");
    let target = m.user_by_external(1).expect("target exists");
    (m, target)
}
