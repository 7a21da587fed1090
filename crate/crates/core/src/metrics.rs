//! Accuracy and security metrics for neighbour selection.
//!
//! The accuracy metric `α` of a selection strategy is the expected sum of the
//! selected neighbours' similarities; the security metric `β` is the number
//! of partitions the neighbours are drawn across. For partitioned selection,
//! `α = Σ_i α_i` with `α_i = Σ_j sim_j·μ_j` over partition `i`, where the
//! `μ_j` are per-candidate Wallenius means (one size-1 category per
//! candidate, `f_β(i)` draws).
//!
//! [`verify_allocation_optimality`] brute-forces every feasible allocation on
//! small instances to confirm the closed-form `(k−1, 0, …, 0, 1)` allocation
//! attains the maximum expected `α` (ties allowed).

use std::io::Write;

use crate::seeds;
use crate::selection::{ppns_allocation, AllocationVector, NeighbourSet};
use crate::similarity::{Candidate, SelectionWeights, SimilarityRow};
use crate::wallenius::{wallenius_mean, Population};
use crate::{Error, Result};

/// How an accuracy estimate was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaMethod {
    WalleniusMean,
    Enumeration,
    Empirical,
}

/// Expected (or estimated) similarity sum of a `k`-neighbour selection.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyEstimate {
    pub alpha: f64,
    pub per_partition: Vec<f64>,
    pub method: AlphaMethod,
    /// Standard error of the estimate; only set for empirical estimates.
    pub std_error: Option<f64>,
}

/// Number of user partitions the `k` neighbours are drawn across.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecurityLevel {
    pub beta: usize,
}

impl SecurityLevel {
    pub fn new(beta: usize) -> Result<Self> {
        if beta == 0 {
            return Err(Error::validation("beta must be at least 1"));
        }
        Ok(SecurityLevel { beta })
    }
}

/// Expected similarity sum when drawing `draws` from `pool` (one Wallenius
/// category of size 1 per candidate).
pub fn expected_pool_similarity_sum(
    pool: &[Candidate],
    omegas: &[f64],
    draws: usize,
) -> Result<f64> {
    if draws == 0 {
        return Ok(0.0);
    }
    if draws > pool.len() || omegas.len() != pool.len() {
        return Err(Error::validation(format!(
            "cannot draw {draws} from a pool of {} with {} weights",
            pool.len(),
            omegas.len()
        )));
    }
    let mu = wallenius_mean(&Population::singletons(omegas, draws)?)?;
    Ok(pool
        .iter()
        .zip(&mu.per_category)
        .map(|(c, &m)| c.sim * m)
        .sum())
}

/// Expected `α` of a partitioned selection under `allocation`, using the
/// Wallenius mean within each partition.
pub fn alpha_expected(
    row: &SimilarityRow,
    allocation: &AllocationVector,
    weights: &SelectionWeights,
) -> Result<AccuracyEstimate> {
    let k = allocation.k();
    let beta = allocation.beta();
    if row.len() < beta * k {
        return Err(Error::validation(format!(
            "allocation over {beta} partitions of {k} needs {} candidates, row has {}",
            beta * k,
            row.len()
        )));
    }
    if weights.omegas.len() != row.len() {
        return Err(Error::validation(
            "weights are not aligned with the candidate row".to_string(),
        ));
    }
    let mut per_partition = Vec::with_capacity(beta);
    for (p, &draws) in allocation.counts().iter().enumerate() {
        if draws == 0 {
            per_partition.push(0.0);
            continue;
        }
        let span = p * k..(p + 1) * k;
        per_partition.push(expected_pool_similarity_sum(
            &row.candidates[span.clone()],
            &weights.omegas[span],
            draws,
        )?);
    }
    Ok(AccuracyEstimate {
        alpha: per_partition.iter().sum(),
        per_partition,
        method: AlphaMethod::WalleniusMean,
        std_error: None,
    })
}

/// Monte-Carlo `α`: mean similarity sum of the sets produced by `select`
/// under derived per-trial seeds.
pub fn alpha_empirical<F>(select: F, trials: usize, seed: u64) -> Result<AccuracyEstimate>
where
    F: Fn(u64) -> Result<NeighbourSet>,
{
    if trials == 0 {
        return Err(Error::validation("trials must be at least 1"));
    }
    let mut sums = Vec::with_capacity(trials);
    let mut per_partition: Vec<f64> = Vec::new();
    for t in 0..trials {
        let set = select(seeds::derive(seed, &[t as u64]))?;
        sums.push(set.members.iter().map(|m| m.sim).sum::<f64>());
        for m in &set.members {
            if per_partition.len() <= m.partition {
                per_partition.resize(m.partition + 1, 0.0);
            }
            per_partition[m.partition] += m.sim;
        }
    }
    let n = trials as f64;
    let mean = sums.iter().sum::<f64>() / n;
    let var = sums.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    for p in &mut per_partition {
        *p /= n;
    }
    Ok(AccuracyEstimate {
        alpha: mean,
        per_partition,
        method: AlphaMethod::Empirical,
        std_error: Some((var / n).sqrt()),
    })
}

/// One evaluated allocation in an optimality report.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityEntry {
    pub allocation: AllocationVector,
    pub alpha: f64,
}

/// Outcome of brute-forcing every feasible allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub k: usize,
    pub beta: usize,
    pub entries: Vec<OptimalityEntry>,
    pub best_alpha: f64,
    /// Allocations attaining the maximum within tolerance.
    pub optimal: Vec<AllocationVector>,
    pub closed_form: AllocationVector,
    pub closed_form_alpha: f64,
    pub closed_form_is_optimal: bool,
}

const TIE_TOLERANCE: f64 = 1e-9;

/// Enumerate every allocation satisfying `Σf = k`, `f(β) ≥ 1`,
/// `f(i) ≤ k − 1` otherwise; evaluate each with [`alpha_expected`] and check
/// that the closed-form allocation attains the maximum (ties reported).
pub fn verify_allocation_optimality(
    row: &SimilarityRow,
    k: usize,
    beta: usize,
    weights: &SelectionWeights,
) -> Result<OptimalityReport> {
    if k == 0 || k > 6 || beta == 0 || beta > 5 {
        return Err(Error::validation(format!(
            "enumeration supports 1 ≤ k ≤ 6 and 1 ≤ beta ≤ 5, got k = {k}, beta = {beta}"
        )));
    }
    let mut entries = Vec::new();
    let mut stack = vec![0usize; beta];
    enumerate_allocations(k, beta, 0, k, &mut stack, &mut |counts| {
        let allocation = AllocationVector::new(counts.to_vec(), k)?;
        let alpha = alpha_expected(row, &allocation, weights)?.alpha;
        entries.push(OptimalityEntry { allocation, alpha });
        Ok(())
    })?;

    let best_alpha = entries.iter().map(|e| e.alpha).fold(f64::NEG_INFINITY, f64::max);
    let optimal: Vec<AllocationVector> = entries
        .iter()
        .filter(|e| e.alpha >= best_alpha - TIE_TOLERANCE)
        .map(|e| e.allocation.clone())
        .collect();
    let closed_form = ppns_allocation(k, beta);
    let closed_form_alpha = entries
        .iter()
        .find(|e| e.allocation == closed_form)
        .map(|e| e.alpha)
        .expect("closed-form allocation is always feasible");
    Ok(OptimalityReport {
        k,
        beta,
        best_alpha,
        closed_form_is_optimal: closed_form_alpha >= best_alpha - TIE_TOLERANCE,
        closed_form,
        closed_form_alpha,
        optimal,
        entries,
    })
}

fn enumerate_allocations(
    k: usize,
    beta: usize,
    index: usize,
    remaining: usize,
    stack: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    if index == beta - 1 {
        // last partition takes the rest; it must draw at least once
        if remaining >= 1 && remaining <= k {
            stack[index] = remaining;
            visit(stack)?;
        }
        return Ok(());
    }
    let cap = remaining.min(k.saturating_sub(1));
    for f in 0..=cap {
        stack[index] = f;
        enumerate_allocations(k, beta, index + 1, remaining - f, stack, visit)?;
    }
    Ok(())
}

/// CSV `k,beta,allocation,alpha`, one row per evaluated allocation.
pub fn write_optimality_csv<W: Write>(report: &OptimalityReport, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["k", "beta", "allocation", "alpha"])?;
    for entry in &report.entries {
        wtr.write_record(&[
            report.k.to_string(),
            report.beta.to_string(),
            entry.allocation.to_string(),
            format!("{:.9}", entry.alpha),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
