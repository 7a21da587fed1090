//! Weighted sampling without replacement and the mean of the Wallenius
//! non-central hypergeometric distribution.
//!
//! A population has `c` categories; category `i` holds `m_i` individuals of
//! weight `ω_i`. Sampling draws `k` individuals sequentially, each draw
//! proportional to the remaining weights. The approximate mean of the
//! per-category counts solves
//!
//! ```text
//! (1 − μ₁/m₁)^(1/ω₁) = (1 − μ₂/m₂)^(1/ω₂) = … ,   Σ μᵢ = k.
//! ```
//!
//! Writing the common value as `t` turns this into the scalar root problem
//! `Σ mᵢ(1 − t^ωᵢ) = k` on `t ∈ [0, 1]`, whose left side is strictly
//! decreasing in `t`, so bracketed bisection converges unconditionally.
//! The approximation is exact when all weights are equal; for unequal
//! weights it deviates from the true mean (see
//! [`exact_inclusion_probabilities`] for a brute-force reference on small
//! instances).

use rand::Rng;

use crate::{Error, Result};

/// Smallest weight accepted by the solver; inputs are clamped up to this to
/// keep the `ω > 0` validity condition meaningful in floating point.
pub const MIN_WEIGHT: f64 = 1e-12;

/// Residual tolerance on `Σ μ − k` required from the solver.
pub const SOLVER_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Category {
    pub size: usize,
    pub weight: f64,
}

/// A validated Wallenius population.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    categories: Vec<Category>,
    draws: usize,
}

impl Population {
    pub fn new(categories: Vec<Category>, draws: usize) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::validation("population needs at least one category"));
        }
        let mut total = 0usize;
        for (i, c) in categories.iter().enumerate() {
            if c.size == 0 {
                return Err(Error::validation(format!("category {i} has size 0")));
            }
            if c.weight <= 0.0 || !c.weight.is_finite() {
                return Err(Error::validation(format!(
                    "category {i} weight {} is not a positive finite number",
                    c.weight
                )));
            }
            total += c.size;
        }
        if draws > total {
            return Err(Error::validation(format!(
                "cannot draw {draws} from a population of {total}"
            )));
        }
        let categories = categories
            .into_iter()
            .map(|c| Category {
                size: c.size,
                weight: c.weight.max(MIN_WEIGHT),
            })
            .collect();
        Ok(Population { categories, draws })
    }

    /// One category of size 1 per weight.
    pub fn singletons(weights: &[f64], draws: usize) -> Result<Self> {
        Population::new(
            weights.iter().map(|&w| Category { size: 1, weight: w }).collect(),
            draws,
        )
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn total_size(&self) -> usize {
        self.categories.iter().map(|c| c.size).sum()
    }
}

/// Approximate per-category means of the draw counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector {
    pub per_category: Vec<f64>,
}

impl MeanVector {
    pub fn total(&self) -> f64 {
        self.per_category.iter().sum()
    }
}

/// Solve `Σ mᵢ(1 − t^ωᵢ) = k` and return `μᵢ = mᵢ(1 − t^ωᵢ)`.
pub fn wallenius_mean(pop: &Population) -> Result<MeanVector> {
    let k = pop.draws as f64;
    let total = pop.total_size() as f64;

    let mu_at = |t: f64| -> Vec<f64> {
        pop.categories
            .iter()
            .map(|c| c.size as f64 * (1.0 - t.powf(c.weight)))
            .collect()
    };

    if pop.draws == 0 {
        return Ok(MeanVector {
            per_category: vec![0.0; pop.categories.len()],
        });
    }
    if pop.draws == pop.total_size() {
        return Ok(MeanVector {
            per_category: pop.categories.iter().map(|c| c.size as f64).collect(),
        });
    }

    let g = |t: f64| -> f64 { mu_at(t).iter().sum::<f64>() - k };

    // g is strictly decreasing with g(0) = Σm − k > 0 and g(1) = −k < 0.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let per_category = mu_at(t);
    let residual = (per_category.iter().sum::<f64>() - k).abs();
    if residual > SOLVER_TOLERANCE * total.max(1.0) {
        return Err(Error::validation(format!(
            "mean solver residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(MeanVector { per_category })
}

/// Draw `k` distinct ids, each draw proportional to the remaining weights.
pub fn sample_without_replacement<I: Copy, R: Rng + ?Sized>(
    items: &[(I, f64)],
    k: usize,
    rng: &mut R,
) -> Result<Vec<I>> {
    if k > items.len() {
        return Err(Error::validation(format!(
            "cannot draw {k} items from {}",
            items.len()
        )));
    }
    for &(_, w) in items {
        if w <= 0.0 || !w.is_finite() {
            return Err(Error::validation(format!(
                "sampling weight {w} is not a positive finite number"
            )));
        }
    }
    let mut pool: Vec<(I, f64)> = items.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = pool.iter().map(|&(_, w)| w).sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = pool.len() - 1;
        for (idx, &(_, w)) in pool.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = idx;
                break;
            }
        }
        let (id, _) = pool.swap_remove(pick);
        out.push(id);
    }
    Ok(out)
}

/// Maximum population size accepted by the brute-force oracle.
pub const ENUMERATION_LIMIT: usize = 12;

/// Exact per-id inclusion probabilities for a draw of `k`, by enumerating
/// draw sequences (grouped by drawn set) and summing path probabilities.
/// Small instances only; the per-id probabilities sum to `k`.
pub fn exact_inclusion_probabilities<I: Copy>(items: &[(I, f64)], k: usize) -> Result<Vec<(I, f64)>> {
    let n = items.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::validation(format!(
            "enumeration supports at most {ENUMERATION_LIMIT} items, got {n}"
        )));
    }
    if k > n {
        return Err(Error::validation(format!("cannot draw {k} items from {n}")));
    }
    for &(_, w) in items {
        if w <= 0.0 || !w.is_finite() {
            return Err(Error::validation(format!(
                "enumeration weight {w} is not a positive finite number"
            )));
        }
    }

    let total: f64 = items.iter().map(|&(_, w)| w).sum();
    // prob[mask] = probability that the first popcount(mask) draws produced
    // exactly the set `mask`.
    let mut prob = vec![0.0_f64; 1 << n];
    prob[0] = 1.0;
    let mut inclusion = vec![0.0_f64; n];
    for mask in 0..(1usize << n) {
        let p = prob[mask];
        if p == 0.0 {
            continue;
        }
        let drawn = mask.count_ones() as usize;
        if drawn == k {
            for (i, incl) in inclusion.iter_mut().enumerate() {
                if mask & (1 << i) != 0 {
                    *incl += p;
                }
            }
            continue;
        }
        let drawn_weight: f64 = items
            .iter()
            .enumerate()
            .filter(|&(i, _)| mask & (1 << i) != 0)
            .map(|(_, &(_, w))| w)
            .sum();
        let remaining = total - drawn_weight;
        for (i, &(_, w)) in items.iter().enumerate() {
            if mask & (1 << i) == 0 {
                prob[mask | (1 << i)] += p * w / remaining;
            }
        }
    }
    Ok(items
        .iter()
        .zip(inclusion)
        .map(|(&(id, _), p)| (id, p))
        .collect())
}
