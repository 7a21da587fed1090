//! Rating prediction and MAE evaluation.
//!
//! A rating is predicted as the similarity-weighted average of the
//! neighbours' ratings on the item. When no selected neighbour rated the item
//! (or the weight sum is zero) the prediction falls back to the target's mean
//! rating, then to the global mean; abstaining would silently shrink the
//! evaluation denominator.
//!
//! Evaluation is leave-one-out per cell: the evaluated rating is masked
//! before the target's similarity row (and the selection-weight sensitivity)
//! is computed, so the held-out label cannot leak through the target's norms
//! or fallback means. Only cells with a stored rating are scored.

use rayon::prelude::*;

use crate::ratings::{ItemId, RatingMatrix, UserId};
use crate::seeds;
use crate::selection::{Method, NeighbourSet, SelectionPolicy};
use crate::similarity::{target_local_sensitivity, SelectionWeights, TargetRowBuilder};
use crate::{Error, Result};

/// Where a predicted value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSource {
    /// Weighted average over neighbours who rated the item.
    Neighbours,
    /// No usable rater; the target's own mean rating.
    TargetMean,
    /// Target had no other ratings either; the global mean.
    GlobalMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub target: UserId,
    pub item: ItemId,
    pub value: f64,
    /// Neighbours whose rating on the item contributed.
    pub raters: usize,
    pub source: PredictionSource,
}

/// Predict the target's rating on `item` from a selected neighbour set.
pub fn predict_rating(m: &RatingMatrix, neighbours: &NeighbourSet, item: ItemId) -> Prediction {
    let profile = m.user_profile(neighbours.target);
    let target_mean = if profile.n_rated > 0 {
        Some(profile.mean_rating)
    } else {
        None
    };
    predict_with_fallback(m, neighbours, item, target_mean, m.global_mean())
}

fn predict_with_fallback(
    m: &RatingMatrix,
    neighbours: &NeighbourSet,
    item: ItemId,
    target_mean: Option<f64>,
    global_mean: f64,
) -> Prediction {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut raters = 0;
    for member in &neighbours.members {
        if let Some(r) = m.rating(member.user, item) {
            num += member.sim * f64::from(r);
            den += member.sim.abs();
            raters += 1;
        }
    }
    let (value, source) = if raters > 0 && den > 0.0 {
        (num / den, PredictionSource::Neighbours)
    } else {
        match target_mean {
            Some(mean) => (mean, PredictionSource::TargetMean),
            None => (global_mean, PredictionSource::GlobalMean),
        }
    };
    Prediction {
        target: neighbours.target,
        item,
        value,
        raters,
        source,
    }
}

/// Per-target slice of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetMae {
    pub target: UserId,
    pub mae: f64,
    pub n_predictions: usize,
}

/// Mean absolute error over every scored cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub mae: f64,
    pub n_predictions: usize,
    pub per_target: Vec<TargetMae>,
}

/// Draw evaluation targets without replacement.
pub fn sample_targets(m: &RatingMatrix, count: usize, seed: u64) -> Result<Vec<UserId>> {
    use rand::seq::SliceRandom;
    if count > m.n_users() {
        return Err(Error::validation(format!(
            "cannot sample {count} targets from {} users",
            m.n_users()
        )));
    }
    let mut users: Vec<UserId> = m.users().collect();
    let mut rng = seeds::rng(seed, &[0x7a26e75]);
    users.shuffle(&mut rng);
    users.truncate(count);
    Ok(users)
}

/// Evaluate one policy; see [`evaluate_mae_multi`].
pub fn evaluate_mae(
    m: &RatingMatrix,
    policy: &SelectionPolicy,
    targets: &[UserId],
    items: Option<&[ItemId]>,
    seed: u64,
) -> Result<EvaluationReport> {
    evaluate_mae_multi(m, std::slice::from_ref(policy), targets, items, seed)
        .map(|mut v| v.pop().expect("one report per policy"))
}

/// Leave-one-out MAE of several policies over the targets' stored ratings,
/// sharing the per-cell masked rows across policies.
///
/// For each scored cell the evaluated rating is masked, the target's
/// similarity row and local sensitivity are recomputed, each policy selects
/// its neighbours under a seed derived from `(target, item)`, and the
/// prediction is compared against the held-out rating. The cell seed is
/// shared across the policies (common random numbers), so paired policy
/// comparisons are not drowned by independent draw noise.
pub fn evaluate_mae_multi(
    m: &RatingMatrix,
    policies: &[SelectionPolicy],
    targets: &[UserId],
    items: Option<&[ItemId]>,
    seed: u64,
) -> Result<Vec<EvaluationReport>> {
    if policies.is_empty() {
        return Err(Error::validation("no policies to evaluate"));
    }
    for policy in policies {
        policy.validate()?;
    }
    for &t in targets {
        if !m.contains_user(t) {
            return Err(Error::validation(format!("unknown target user {t}")));
        }
    }
    let needs_sensitivity = policies.iter().any(|p| p.method != Method::Knn);
    let items_filter: Option<std::collections::BTreeSet<ItemId>> =
        items.map(|list| list.iter().copied().collect());

    let global_sum = m.rating_sum() as f64;

    // per-policy (abs error sum, count) for one target
    type TargetErrors = (UserId, Vec<(f64, usize)>);
    let per_target: Vec<Result<TargetErrors>> = targets
        .par_iter()
        .map(|&target| -> Result<TargetErrors> {
            let builder = TargetRowBuilder::new(m, target);
            let profile = m.user_profile(target);
            let mut acc = vec![(0.0_f64, 0usize); policies.len()];
            for &(item, truth) in m.user_ratings(target) {
                if let Some(filter) = &items_filter {
                    if !filter.contains(&item) {
                        continue;
                    }
                }
                let truth = f64::from(truth);
                let row = builder.masked_row(item);
                let rs = if needs_sensitivity {
                    let v = target_local_sensitivity(m, target, Some(item));
                    if v > 0.0 {
                        Some(v)
                    } else {
                        None
                    }
                } else {
                    None
                };
                // Fallback means with the evaluated cell held out.
                let target_mean = if profile.n_rated > 1 {
                    Some(
                        (profile.mean_rating * profile.n_rated as f64 - truth)
                            / (profile.n_rated - 1) as f64,
                    )
                } else {
                    None
                };
                let global_mean = if m.n_entries() > 1 {
                    (global_sum - truth) / (m.n_entries() - 1) as f64
                } else {
                    0.0
                };

                for (p_idx, policy) in policies.iter().enumerate() {
                    let neighbours = select_masked(&row, policy, rs, seed, target, item)?;
                    let pred = predict_with_fallback(
                        m,
                        &neighbours,
                        item,
                        target_mean,
                        global_mean,
                    );
                    acc[p_idx].0 += (truth - pred.value).abs();
                    acc[p_idx].1 += 1;
                }
            }
            Ok((target, acc))
        })
        .collect();

    let mut reports: Vec<EvaluationReport> = (0..policies.len())
        .map(|_| EvaluationReport {
            mae: 0.0,
            n_predictions: 0,
            per_target: Vec::with_capacity(targets.len()),
        })
        .collect();
    let mut sums = vec![0.0_f64; policies.len()];
    for entry in per_target {
        let (target, acc) = entry?;
        for (p_idx, &(err_sum, n)) in acc.iter().enumerate() {
            sums[p_idx] += err_sum;
            reports[p_idx].n_predictions += n;
            reports[p_idx].per_target.push(TargetMae {
                target,
                mae: if n > 0 { err_sum / n as f64 } else { 0.0 },
                n_predictions: n,
            });
        }
    }
    for (report, sum) in reports.iter_mut().zip(sums) {
        if report.n_predictions == 0 {
            return Err(Error::validation(
                "no scoreable cells: every requested target/item pair is unrated".to_string(),
            ));
        }
        report.mae = sum / report.n_predictions as f64;
    }
    Ok(reports)
}

fn select_masked(
    row: &crate::similarity::SimilarityRow,
    policy: &SelectionPolicy,
    rs: Option<f64>,
    seed: u64,
    target: UserId,
    item: ItemId,
) -> Result<NeighbourSet> {
    let cell_seed = seeds::derive(seed, &[u64::from(target.0), u64::from(item.0)]);
    if policy.method == Method::Knn {
        return crate::selection::select_knn(row, policy.k);
    }
    // A degenerate masked row (all-zero sims) has no defined sensitivity;
    // weights collapse to uniform.
    let rs = rs.unwrap_or(1.0);
    let weights = SelectionWeights::compute(row, policy.epsilon, policy.k, rs)?;
    let mut rng = seeds::rng_from(cell_seed);
    match policy.method {
        Method::Ppns => {
            crate::selection::select_ppns(row, policy.k, policy.beta, &weights, &mut rng)
        }
        Method::Npns => {
            crate::selection::select_npns(row, policy.k, Some(policy.beta), &weights, &mut rng)
        }
        Method::Pncf => crate::selection::select_pncf(row, policy, &weights, rs, &mut rng),
        Method::Knn => unreachable!(),
    }
}
