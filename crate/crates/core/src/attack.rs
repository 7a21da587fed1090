//! kNN-attack simulator.
//!
//! The attacker knows the recommender's algorithm and its `k`, plus `m` of
//! the target's ratings. It registers `k` fake users who copy exactly those
//! `m` ratings, making each fake's nearest neighbours the other fakes plus
//! the target. One fake acts as the observer receiving recommendations; if
//! the target is the only real user among the observer's neighbours, every
//! prediction on an item the fakes left unrated reproduces the target's
//! rating exactly: full disclosure. The simulator runs any selection policy
//! in that layout and measures how often and how precisely it leaks.

use rand::Rng;

use crate::predict::predict_rating;
use crate::ratings::{ItemId, RatingMatrix, UserId};
use crate::seeds;
use crate::selection::{select, Method, SelectionPolicy};
use crate::similarity::{similarity_row, target_local_sensitivity};
use crate::{Error, Result};

/// Where the exponential-mechanism sensitivity comes from during trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensitivityMode {
    /// Recompute on the augmented (fakes included) matrix per trial: the
    /// sensitivity is a data function, and the data now contains the fakes.
    RefreshOnAugmented,
    /// Freeze the value computed once on the pristine matrix around the
    /// target (ablation).
    FrozenFromOriginal,
    /// Manual override.
    Fixed(f64),
}

/// Attack scenario description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub target: UserId,
    /// Number of the target's ratings known to (and cloned by) the attacker.
    pub m: usize,
    /// The recommender's policy; `policy.k` is also the number of fakes.
    pub policy: SelectionPolicy,
    pub trials: usize,
    pub seed: u64,
    pub sensitivity: SensitivityMode,
}

impl AttackConfig {
    pub fn new(target: UserId, m: usize, policy: SelectionPolicy, trials: usize, seed: u64) -> Self {
        AttackConfig {
            target,
            m,
            policy,
            trials,
            seed,
            sensitivity: SensitivityMode::RefreshOnAugmented,
        }
    }
}

/// An augmented matrix with attacker bookkeeping.
#[derive(Debug, Clone)]
pub struct ForgedMatrix {
    pub matrix: RatingMatrix,
    pub target: UserId,
    pub fakes: Vec<UserId>,
    /// The target items copied to every fake (the attacker's knowledge).
    pub cloned_items: Vec<ItemId>,
    /// The target's remaining rated items: what the attack tries to learn.
    pub sensitive_items: Vec<ItemId>,
}

/// Register `policy.k` fake users who copy `m` seeded-drawn ratings of the
/// target. The input matrix is untouched; fake external ids continue after
/// the existing ones, so real users keep their dense ids.
pub fn forge_profiles(m: &RatingMatrix, config: &AttackConfig) -> Result<ForgedMatrix> {
    if !m.contains_user(config.target) {
        return Err(Error::validation(format!("unknown target user {}", config.target)));
    }
    let rated = m.user_ratings(config.target);
    if config.m == 0 {
        return Err(Error::validation("the attacker must know at least one rating"));
    }
    if config.m > rated.len() {
        return Err(Error::validation(format!(
            "attacker knowledge m = {} exceeds the target's {} ratings",
            config.m,
            rated.len()
        )));
    }
    let k_fakes = config.policy.k;
    if k_fakes == 0 {
        return Err(Error::validation("k must be at least 1"));
    }

    let mut order: Vec<usize> = (0..rated.len()).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = seeds::rng(config.seed, &[0xf03d]);
        order.shuffle(&mut rng);
    }
    let cloned: Vec<(ItemId, u8)> = order[..config.m].iter().map(|&i| rated[i]).collect();
    let cloned_items: Vec<ItemId> = cloned.iter().map(|&(i, _)| i).collect();
    let sensitive_items: Vec<ItemId> = rated
        .iter()
        .map(|&(i, _)| i)
        .filter(|i| !cloned_items.contains(i))
        .collect();

    let max_ext = (0..m.n_users() as u32)
        .map(|u| m.external_user(UserId(u)))
        .max()
        .unwrap_or(0);
    let mut entries: Vec<(u64, u64, u8)> = Vec::with_capacity(m.n_entries() + k_fakes * config.m);
    for u in m.users() {
        let ext_u = m.external_user(u);
        for &(item, r) in m.user_ratings(u) {
            entries.push((ext_u, m.external_item(item), r));
        }
    }
    for f in 0..k_fakes {
        let ext_fake = max_ext + 1 + f as u64;
        for &(item, r) in &cloned {
            entries.push((ext_fake, m.external_item(item), r));
        }
    }
    let augmented = RatingMatrix::from_entries(entries)?;
    let fakes: Vec<UserId> = (0..k_fakes)
        .map(|f| {
            augmented
                .user_by_external(max_ext + 1 + f as u64)
                .expect("fake was just inserted")
        })
        .collect();
    let target = augmented
        .user_by_external(m.external_user(config.target))
        .expect("target survives augmentation");
    let cloned_items = cloned_items
        .iter()
        .map(|&i| augmented_item(m, &augmented, i))
        .collect();
    let sensitive_items = sensitive_items
        .iter()
        .map(|&i| augmented_item(m, &augmented, i))
        .collect();
    Ok(ForgedMatrix {
        matrix: augmented,
        target,
        fakes,
        cloned_items,
        sensitive_items,
    })
}

fn augmented_item(original: &RatingMatrix, augmented: &RatingMatrix, item: ItemId) -> ItemId {
    augmented
        .item_by_external(original.external_item(item))
        .expect("items are preserved by augmentation")
}

/// One simulated attack round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub observer: UserId,
    pub target_in_neighbours: bool,
    /// The target was selected and no other real user was.
    pub sole_real_neighbour: bool,
    /// MAE between predictions on the sensitive items and the target's true
    /// ratings; `None` when there is nothing sensitive left to predict.
    pub mae: Option<f64>,
}

/// Aggregated attack outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DisclosureReport {
    pub trials: usize,
    /// Fraction of trials whose neighbour set contained the target.
    pub target_in_neighbours: f64,
    /// Fraction of trials where the target was the only real neighbour.
    pub sole_real_neighbour: f64,
    /// Absolute error pooled over every sensitive prediction in every trial.
    pub attack_mae: f64,
    pub n_sensitive_predictions: usize,
    pub per_trial: Vec<TrialOutcome>,
}

/// Simulate `config.trials` attack rounds. Each round re-forges the fakes
/// under a derived seed, picks a random fake as the observer, runs the
/// policy for the observer, and predicts every sensitive item.
pub fn run_attack(m: &RatingMatrix, config: &AttackConfig) -> Result<DisclosureReport> {
    config.policy.validate()?;
    if config.trials == 0 {
        return Err(Error::validation("trials must be at least 1"));
    }
    let frozen_rs = match config.sensitivity {
        SensitivityMode::FrozenFromOriginal => {
            Some(target_local_sensitivity(m, config.target, None))
        }
        _ => None,
    };

    let mut per_trial = Vec::with_capacity(config.trials);
    let mut err_sum = 0.0;
    let mut err_n = 0usize;
    for trial in 0..config.trials {
        let trial_seed = seeds::derive(config.seed, &[trial as u64]);
        let trial_config = AttackConfig {
            seed: seeds::derive(trial_seed, &[0]),
            ..*config
        };
        let forged = forge_profiles(m, &trial_config)?;
        let aug = &forged.matrix;

        let observer = {
            let mut rng = seeds::rng(trial_seed, &[1]);
            forged.fakes[rng.random_range(0..forged.fakes.len())]
        };
        let row = similarity_row(aug, observer)?;

        let rs = if config.policy.method == Method::Knn {
            None
        } else {
            let value = match config.sensitivity {
                SensitivityMode::RefreshOnAugmented => {
                    target_local_sensitivity(aug, observer, None)
                }
                SensitivityMode::FrozenFromOriginal => frozen_rs.unwrap(),
                SensitivityMode::Fixed(v) => v,
            };
            if value > 0.0 {
                Some(value)
            } else {
                log::warn!("degenerate sensitivity in attack trial {trial}; using 1.0");
                Some(1.0)
            }
        };
        let neighbours = select(&row, &config.policy, rs, seeds::derive(trial_seed, &[2]))?;

        let target_in = neighbours.contains(forged.target);
        let fake_set: std::collections::BTreeSet<UserId> = forged.fakes.iter().copied().collect();
        let other_real = neighbours
            .users()
            .any(|u| u != forged.target && !fake_set.contains(&u));
        let sole_real = target_in && !other_real;

        let mae = if forged.sensitive_items.is_empty() {
            None
        } else {
            let mut sum = 0.0;
            for &item in &forged.sensitive_items {
                let truth = f64::from(
                    aug.rating(forged.target, item).expect("sensitive items are rated"),
                );
                let pred = predict_rating(aug, &neighbours, item);
                sum += (truth - pred.value).abs();
            }
            err_sum += sum;
            err_n += forged.sensitive_items.len();
            Some(sum / forged.sensitive_items.len() as f64)
        };
        per_trial.push(TrialOutcome {
            observer,
            target_in_neighbours: target_in,
            sole_real_neighbour: sole_real,
            mae,
        });
    }

    let n = config.trials as f64;
    Ok(DisclosureReport {
        trials: config.trials,
        target_in_neighbours: per_trial.iter().filter(|t| t.target_in_neighbours).count() as f64 / n,
        sole_real_neighbour: per_trial.iter().filter(|t| t.sole_real_neighbour).count() as f64 / n,
        attack_mae: if err_n > 0 { err_sum / err_n as f64 } else { 0.0 },
        n_sensitive_predictions: err_n,
        per_trial,
    })
}
