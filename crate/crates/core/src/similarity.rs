//! Cosine similarity, sorted candidate rows, and exponential-mechanism
//! selection weights with their recommendation-aware sensitivity.
//!
//! The similarity between two users divides the dot product over co-rated
//! items by the product of the users' full rating-vector norms, so it lies in
//! `[0, 1]` for star ratings. Candidate rows are sorted descending by
//! similarity with ties broken by ascending user id; every stochastic
//! selection strategy downstream relies on that deterministic order.
//!
//! The sensitivity bounds how much the score function (the similarity) can
//! change when one rating is removed. The primed norms `‖r′‖` are read as
//! leave-one-item-out: the norm of the rating vector with the single item
//! under consideration removed. Pairs with fewer than two co-rated items are
//! skipped, which also guarantees every primed norm is positive.

use std::io::{Read, Write};

use crate::ratings::{ItemId, RatingMatrix, UserId};
use crate::{Error, Result};

/// One scored candidate in a similarity row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub user: UserId,
    pub sim: f64,
}

/// A target user's scored candidate list, sorted descending by similarity
/// (ties by ascending user id). The target itself is excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRow {
    pub target: UserId,
    pub candidates: Vec<Candidate>,
}

impl SimilarityRow {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Similarity of the `rank`-th candidate (1-based), i.e. `sim_k` for
    /// `rank = k`.
    pub fn sim_at_rank(&self, rank: usize) -> Option<f64> {
        self.candidates.get(rank.checked_sub(1)?).map(|c| c.sim)
    }
}

/// Descending similarity, ties broken by ascending user id.
pub(crate) fn sort_candidates(candidates: &mut [Candidate]) {
    candidates.sort_unstable_by(|a, b| {
        b.sim
            .partial_cmp(&a.sim)
            .expect("similarities are finite")
            .then(a.user.cmp(&b.user))
    });
}

/// Cosine similarity between two users' rating vectors.
///
/// Zero when the users share no co-rated item or either vector is empty;
/// symmetric; in `[0, 1]` for star ratings.
pub fn cosine_similarity(m: &RatingMatrix, i: UserId, j: UserId) -> f64 {
    let dot = corated_dot(m.user_ratings(i), m.user_ratings(j));
    let denom_sq = m.norm_sq(i) * m.norm_sq(j);
    if dot == 0.0 || denom_sq == 0.0 {
        0.0
    } else {
        dot / denom_sq.sqrt()
    }
}

fn corated_dot(a: &[(ItemId, u8)], b: &[(ItemId, u8)]) -> f64 {
    let mut dot = 0.0;
    let (mut x, mut y) = (0, 0);
    while x < a.len() && y < b.len() {
        match a[x].0.cmp(&b[y].0) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                dot += f64::from(a[x].1) * f64::from(b[y].1);
                x += 1;
                y += 1;
            }
        }
    }
    dot
}

/// Score every other user against `target` and sort.
pub fn similarity_row(m: &RatingMatrix, target: UserId) -> Result<SimilarityRow> {
    if !m.contains_user(target) {
        return Err(Error::validation(format!("unknown target user {target}")));
    }
    Ok(TargetRowBuilder::new(m, target).row())
}

/// Precomputed per-target state for building (possibly masked) similarity
/// rows cheaply: the co-rated dot products against every user plus all norms.
pub struct TargetRowBuilder<'m> {
    m: &'m RatingMatrix,
    target: UserId,
    dots: Vec<f64>,
    norms: Vec<f64>,
    target_norm_sq: f64,
}

impl<'m> TargetRowBuilder<'m> {
    pub fn new(m: &'m RatingMatrix, target: UserId) -> Self {
        let mut dots = vec![0.0; m.n_users()];
        for &(item, r_t) in m.user_ratings(target) {
            let r_t = f64::from(r_t);
            for &(user, r_u) in m.item_ratings(item) {
                dots[user.0 as usize] += r_t * f64::from(r_u);
            }
        }
        let norms = m.users().map(|u| m.norm_sq(u).sqrt()).collect();
        TargetRowBuilder {
            m,
            target,
            dots,
            norms,
            target_norm_sq: m.norm_sq(target),
        }
    }

    pub fn row(&self) -> SimilarityRow {
        self.build(None)
    }

    /// Row with the target's rating on `item` held out. Only the target's
    /// profile changes: its norm shrinks and the item drops out of every
    /// co-rated dot product involving the target.
    pub fn masked_row(&self, item: ItemId) -> SimilarityRow {
        self.build(self.m.rating(self.target, item).map(|r| (item, r)))
    }

    /// Target norm (squared) after masking `item`, if it is rated.
    pub fn masked_norm_sq(&self, item: ItemId) -> f64 {
        match self.m.rating(self.target, item) {
            Some(r) => self.target_norm_sq - f64::from(r) * f64::from(r),
            None => self.target_norm_sq,
        }
    }

    fn build(&self, mask: Option<(ItemId, u8)>) -> SimilarityRow {
        let n = self.m.n_users();
        let (masked_norm_sq, masked) = match mask {
            Some((item, r)) => {
                let r = f64::from(r);
                (self.target_norm_sq - r * r, Some((item, r)))
            }
            None => (self.target_norm_sq, None),
        };
        let target_norm = if masked_norm_sq > 0.0 {
            masked_norm_sq.sqrt()
        } else {
            0.0
        };

        // Corrections to the dot products for the masked item's raters.
        let mut candidates = Vec::with_capacity(n.saturating_sub(1));
        let mut corrections: Vec<f64> = Vec::new();
        if let Some((item, r_t)) = masked {
            corrections = vec![0.0; n];
            for &(user, r_u) in self.m.item_ratings(item) {
                corrections[user.0 as usize] = r_t * f64::from(r_u);
            }
        }

        for u in 0..n {
            if u == self.target.0 as usize {
                continue;
            }
            let mut dot = self.dots[u];
            if !corrections.is_empty() {
                dot -= corrections[u];
            }
            let denom = target_norm * self.norms[u];
            let sim = if dot > 0.0 && denom > 0.0 {
                dot / denom
            } else {
                0.0
            };
            candidates.push(Candidate {
                user: UserId(u as u32),
                sim,
            });
        }
        sort_candidates(&mut candidates);
        SimilarityRow {
            target: self.target,
            candidates,
        }
    }
}

/// Which user pairs a sensitivity value maximizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityScope {
    /// One specific pair.
    Pairwise(UserId, UserId),
    /// Every pair involving the target (the per-query default).
    TargetLocal(UserId),
    /// Every pair in the matrix. Quadratic in the number of users.
    Global,
}

/// Recommendation-aware sensitivity of the similarity score function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    pub value: f64,
    pub scope: SensitivityScope,
}

/// Maximum over in-scope pairs `(i, j)` and co-rated items `s` of the two
/// rating-removal terms. Pairs with at most one co-rated item are skipped.
pub fn recommendation_sensitivity(m: &RatingMatrix, scope: SensitivityScope) -> Result<Sensitivity> {
    let value = match scope {
        SensitivityScope::Pairwise(i, j) => {
            check_user(m, i)?;
            check_user(m, j)?;
            pair_max_term(m, i, j).unwrap_or(0.0)
        }
        SensitivityScope::TargetLocal(target) => {
            check_user(m, target)?;
            target_local_sensitivity(m, target, None)
        }
        SensitivityScope::Global => {
            let mut best = 0.0_f64;
            for u in m.users() {
                best = best.max(target_local_sensitivity(m, u, None));
            }
            best
        }
    };
    if value <= 0.0 {
        return Err(Error::Config(
            "no user pair with at least two co-rated items in scope; \
             supply a manual sensitivity override"
                .into(),
        ));
    }
    Ok(Sensitivity { value, scope })
}

fn check_user(m: &RatingMatrix, u: UserId) -> Result<()> {
    if m.contains_user(u) {
        Ok(())
    } else {
        Err(Error::validation(format!("unknown user {u}")))
    }
}

fn pair_max_term(m: &RatingMatrix, i: UserId, j: UserId) -> Option<f64> {
    if i == j {
        return None;
    }
    let (ri, rj) = (m.user_ratings(i), m.user_ratings(j));
    let mut pairs = Vec::new();
    let (mut x, mut y) = (0, 0);
    while x < ri.len() && y < rj.len() {
        match ri[x].0.cmp(&rj[y].0) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                pairs.push((f64::from(ri[x].1), f64::from(rj[y].1)));
                x += 1;
                y += 1;
            }
        }
    }
    if pairs.len() < 2 {
        return None;
    }
    let (ni_sq, nj_sq) = (m.norm_sq(i), m.norm_sq(j));
    let full = (ni_sq * nj_sq).sqrt();
    let mut best = 0.0_f64;
    for &(ris, rjs) in &pairs {
        best = best.max(removal_terms(ris, rjs, ni_sq, nj_sq, full));
    }
    Some(best)
}

/// `max(term1, term2)` for rating pair `(r_is, r_js)` on one co-rated item:
/// `term1 = r_is·r_js / (‖r_i′‖‖r_j′‖)` and
/// `term2 = r_is·r_js (‖r_i‖‖r_j‖ − ‖r_i′‖‖r_j′‖) / (‖r_i‖‖r_j‖‖r_i′‖‖r_j′‖)`.
fn removal_terms(ris: f64, rjs: f64, ni_sq: f64, nj_sq: f64, full: f64) -> f64 {
    let primed_sq = (ni_sq - ris * ris) * (nj_sq - rjs * rjs);
    if primed_sq <= 0.0 {
        return 0.0;
    }
    let primed = primed_sq.sqrt();
    let rr = ris * rjs;
    let term1 = rr / primed;
    let term2 = rr * (full - primed) / (full * primed);
    term1.max(term2)
}

/// Target-local sensitivity, optionally with one of the target's ratings
/// masked (used by the leave-one-out evaluation protocol). Returns 0 when no
/// pair qualifies.
pub(crate) fn target_local_sensitivity(
    m: &RatingMatrix,
    target: UserId,
    masked_item: Option<ItemId>,
) -> f64 {
    let t_row = m.user_ratings(target);
    let mut t_norm_sq = m.norm_sq(target);
    if let Some(item) = masked_item {
        if let Some(r) = m.rating(target, item) {
            t_norm_sq -= f64::from(r) * f64::from(r);
        }
    }
    if t_norm_sq <= 0.0 {
        return 0.0;
    }
    let t_norm = t_norm_sq.sqrt();

    // Pass 1: co-rated counts, so pairs with fewer than two shared items
    // can be skipped.
    let mut corated = vec![0u32; m.n_users()];
    for &(item, _) in t_row {
        if Some(item) == masked_item {
            continue;
        }
        for &(user, _) in m.item_ratings(item) {
            corated[user.0 as usize] += 1;
        }
    }
    corated[target.0 as usize] = 0;

    let mut best = 0.0_f64;
    for &(item, r_t) in t_row {
        if Some(item) == masked_item {
            continue;
        }
        let r_t = f64::from(r_t);
        let t_primed_sq = t_norm_sq - r_t * r_t;
        if t_primed_sq <= 0.0 {
            continue;
        }
        for &(user, r_u) in m.item_ratings(item) {
            let u = user.0 as usize;
            if user == target || corated[u] < 2 {
                continue;
            }
            let u_norm_sq = m.norm_sq(user);
            let r_u = f64::from(r_u);
            let full = t_norm * u_norm_sq.sqrt();
            let primed_sq = t_primed_sq * (u_norm_sq - r_u * r_u);
            if primed_sq <= 0.0 {
                continue;
            }
            let primed = primed_sq.sqrt();
            let rr = r_t * r_u;
            let term1 = rr / primed;
            let term2 = rr * (full - primed) / (full * primed);
            best = best.max(term1.max(term2));
        }
    }
    best
}

/// Exponential-mechanism selection weights `ω_i = exp(ε·sim(a,i) / (4k·rs))`,
/// aligned index-for-index with the row's candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionWeights {
    pub omegas: Vec<f64>,
    pub epsilon: f64,
    pub k: usize,
    pub sensitivity: f64,
}

impl SelectionWeights {
    pub fn compute(row: &SimilarityRow, epsilon: f64, k: usize, sensitivity: f64) -> Result<Self> {
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(Error::validation(format!("epsilon must be positive, got {epsilon}")));
        }
        if k == 0 {
            return Err(Error::validation("k must be at least 1".to_string()));
        }
        if sensitivity <= 0.0 || !sensitivity.is_finite() {
            return Err(Error::validation(format!(
                "sensitivity must be positive, got {sensitivity}"
            )));
        }
        let scale = epsilon / (4.0 * k as f64 * sensitivity);
        let omegas = row.candidates.iter().map(|c| (scale * c.sim).exp()).collect();
        Ok(SelectionWeights {
            omegas,
            epsilon,
            k,
            sensitivity,
        })
    }
}

/// Write rows as CSV `target,candidate,sim` (external ids, 12 significant
/// digits).
pub fn write_row_cache<W: Write>(m: &RatingMatrix, rows: &[SimilarityRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["target", "candidate", "sim"])?;
    for row in rows {
        for c in &row.candidates {
            wtr.write_record(&[
                m.external_user(row.target).to_string(),
                m.external_user(c.user).to_string(),
                format!("{:.11e}", c.sim),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Read rows written by [`write_row_cache`]. Candidate order is restored by
/// the canonical sort, not trusted from the file.
pub fn read_row_cache<R: Read>(m: &RatingMatrix, r: R) -> Result<Vec<SimilarityRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let mut rows: Vec<SimilarityRow> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let ext_t: u64 = record[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid target id `{}`", &record[0]),
        })?;
        let ext_c: u64 = record[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid candidate id `{}`", &record[1]),
        })?;
        let sim: f64 = record[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid sim `{}`", &record[2]),
        })?;
        let target = m
            .user_by_external(ext_t)
            .ok_or_else(|| Error::validation(format!("unknown cached user {ext_t}")))?;
        let user = m
            .user_by_external(ext_c)
            .ok_or_else(|| Error::validation(format!("unknown cached user {ext_c}")))?;
        match rows.last_mut() {
            Some(row) if row.target == target => row.candidates.push(Candidate { user, sim }),
            _ => rows.push(SimilarityRow {
                target,
                candidates: vec![Candidate { user, sim }],
            }),
        }
    }
    for row in &mut rows {
        sort_candidates(&mut row.candidates);
    }
    Ok(rows)
}
