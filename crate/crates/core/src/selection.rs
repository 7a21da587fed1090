//! The four neighbour-selection strategies.
//!
//! All strategies operate on a sorted candidate row. The sorted list is cut
//! into consecutive partitions of size `k` (partition 1 = the `k` nearest);
//! the security parameter `β` is the number of partitions the `k` neighbours
//! are drawn across.
//!
//! * `kNN`: the deterministic top-`k` prefix.
//! * `nPNS`: a weighted sample of `k` from the top `β·k` candidates.
//! * `PNCF`: deterministic prefix above `sim_k + λ`, a weighted sample from
//!   the `[sim_k − λ, sim_k + λ]` band, then Laplace noise on the selected
//!   members' similarities.
//! * `PPNS`: `k − 1` weighted draws from partition 1 plus one draw from
//!   partition `β`, the allocation that maximises the expected similarity sum
//!   subject to touching `β` partitions.

use rand::Rng;

use crate::ratings::UserId;
use crate::seeds;
use crate::similarity::{Candidate, SelectionWeights, SimilarityRow};
use crate::wallenius::sample_without_replacement;
use crate::{Error, Result};

/// Selection strategy identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Knn,
    Npns,
    Pncf,
    Ppns,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Knn => "knn",
            Method::Npns => "npns",
            Method::Pncf => "pncf",
            Method::Ppns => "ppns",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(Method::Knn),
            "npns" => Ok(Method::Npns),
            "pncf" => Ok(Method::Pncf),
            "ppns" => Ok(Method::Ppns),
            other => Err(Error::validation(format!(
                "unknown method `{other}` (expected knn, npns, pncf or ppns)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How PNCF's truncation width λ is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode {
    /// `λ = min(sim_k, (4k·rs/ε)·ln(k(n−k)/ρ))` with `ρ ∈ (0,1)`.
    Formula { rho: f64 },
    /// `λ = sim_k − sim_{βk}`, pinning the eligible pool to the top `β·k`.
    Attack,
}

/// Strategy descriptor shared by the experiment harness and the attack
/// simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionPolicy {
    pub method: Method,
    pub k: usize,
    pub epsilon: f64,
    pub beta: usize,
    pub lambda_mode: LambdaMode,
    /// PNCF similarity-noise scale. `None` uses the sensitivity-proportional
    /// default `2·rs/ε`; `Some(0.0)` disables the noise step.
    pub pncf_laplace_scale: Option<f64>,
    pub seed: u64,
}

impl SelectionPolicy {
    pub fn new(method: Method, k: usize, epsilon: f64, beta: usize, seed: u64) -> Self {
        SelectionPolicy {
            method,
            k,
            epsilon,
            beta,
            lambda_mode: LambdaMode::Attack,
            pncf_laplace_scale: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::validation("k must be at least 1"));
        }
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(Error::validation(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.beta == 0 {
            return Err(Error::validation("beta must be at least 1"));
        }
        if let LambdaMode::Formula { rho } = self.lambda_mode {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::validation(format!("rho must lie in (0,1), got {rho}")));
            }
        }
        if let Some(scale) = self.pncf_laplace_scale {
            if scale < 0.0 || !scale.is_finite() {
                return Err(Error::validation(format!(
                    "laplace scale must be a nonnegative finite number, got {scale}"
                )));
            }
        }
        Ok(())
    }
}

/// Neighbours drawn per partition; sums to `k` with at least one draw from
/// the last partition and at most `k − 1` from any earlier one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationVector {
    counts: Vec<usize>,
}

impl AllocationVector {
    pub fn new(counts: Vec<usize>, k: usize) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::validation("allocation needs at least one partition"));
        }
        let total: usize = counts.iter().sum();
        if total != k {
            return Err(Error::validation(format!(
                "allocation sums to {total}, expected k = {k}"
            )));
        }
        let beta = counts.len();
        if counts[beta - 1] < 1 {
            return Err(Error::validation(
                "allocation must draw at least one neighbour from the last partition".to_string(),
            ));
        }
        if beta > 1 && counts[..beta - 1].iter().any(|&f| f > k - 1) {
            return Err(Error::validation(format!(
                "allocation may draw at most k − 1 = {} from a non-final partition",
                k - 1
            )));
        }
        Ok(AllocationVector { counts })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn beta(&self) -> usize {
        self.counts.len()
    }

    pub fn k(&self) -> usize {
        self.counts.iter().sum()
    }
}

impl std::fmt::Display for AllocationVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.counts.iter().map(|c| c.to_string()).collect();
        write!(f, "{}", parts.join("|"))
    }
}

/// The accuracy-optimal allocation for drawing `k` neighbours across `β`
/// partitions: everything but one draw from partition 1, one draw from
/// partition `β`.
pub fn ppns_allocation(k: usize, beta: usize) -> AllocationVector {
    assert!(k >= 1, "k must be at least 1");
    assert!(beta >= 1, "beta must be at least 1");
    let counts = if beta == 1 {
        vec![k]
    } else {
        let mut v = vec![0; beta];
        v[0] = k - 1;
        v[beta - 1] = 1;
        v
    };
    AllocationVector { counts }
}

/// One selected neighbour: the user, the similarity carried into prediction
/// (possibly noisy for PNCF), and the candidate-partition it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Member {
    pub user: UserId,
    pub sim: f64,
    pub partition: usize,
}

/// A target user's selected `k`-neighbour set, sorted descending by the
/// carried similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighbourSet {
    pub target: UserId,
    pub members: Vec<Member>,
}

impl NeighbourSet {
    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, user: UserId) -> bool {
        self.members.iter().any(|m| m.user == user)
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.members.iter().map(|m| m.user)
    }

    /// Members drawn from each partition index.
    pub fn partition_counts(&self) -> Vec<usize> {
        let max = self.members.iter().map(|m| m.partition).max().unwrap_or(0);
        let mut counts = vec![0; max + 1];
        for m in &self.members {
            counts[m.partition] += 1;
        }
        counts
    }

    fn finalize(mut self) -> Self {
        self.members.sort_unstable_by(|a, b| {
            b.sim
                .partial_cmp(&a.sim)
                .expect("similarities are finite")
                .then(a.user.cmp(&b.user))
        });
        debug_assert!(self.members.len() == {
            let mut ids: Vec<UserId> = self.members.iter().map(|m| m.user).collect();
            ids.sort_unstable();
            ids.dedup();
            ids.len()
        });
        self
    }
}

fn member_at(row: &SimilarityRow, idx: usize, k: usize) -> Member {
    let c: Candidate = row.candidates[idx];
    Member {
        user: c.user,
        sim: c.sim,
        partition: idx / k,
    }
}

/// Deterministic top-`k` selection.
pub fn select_knn(row: &SimilarityRow, k: usize) -> Result<NeighbourSet> {
    if k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    if row.len() < k {
        return Err(Error::validation(format!(
            "need {k} candidates, row has {}",
            row.len()
        )));
    }
    let members = (0..k).map(|i| member_at(row, i, k)).collect();
    Ok(NeighbourSet {
        target: row.target,
        members,
    }
    .finalize())
}

fn check_partitions(row: &SimilarityRow, k: usize, beta: usize) -> Result<()> {
    if k == 0 || beta == 0 {
        return Err(Error::validation("k and beta must be at least 1"));
    }
    if row.len() < beta * k {
        return Err(Error::validation(format!(
            "beta = {beta} needs {}*{k} = {} candidates but the row has {}; \
             the far tail is useless (near-zero similarity), so keep beta \
             within its upper bound of U/2k",
            beta,
            beta * k,
            row.len()
        )));
    }
    Ok(())
}

/// Partitioned probabilistic selection: draw `f_β(i)` members from partition
/// `i` by weighted sampling without replacement. With `β = 1` this is exactly
/// the deterministic top-`k`.
pub fn select_ppns<R: Rng + ?Sized>(
    row: &SimilarityRow,
    k: usize,
    beta: usize,
    weights: &SelectionWeights,
    rng: &mut R,
) -> Result<NeighbourSet> {
    check_partitions(row, k, beta)?;
    if beta == 1 {
        return select_knn(row, k);
    }
    debug_assert_eq!(weights.omegas.len(), row.len());
    let allocation = ppns_allocation(k, beta);
    let mut members = Vec::with_capacity(k);
    for (p, &draws) in allocation.counts().iter().enumerate() {
        if draws == 0 {
            continue;
        }
        let start = p * k;
        let pool: Vec<(usize, f64)> = (start..start + k)
            .map(|idx| (idx, weights.omegas[idx]))
            .collect();
        for idx in sample_without_replacement(&pool, draws, rng)? {
            members.push(member_at(row, idx, k));
        }
    }
    let set = NeighbourSet {
        target: row.target,
        members,
    }
    .finalize();
    debug_assert_eq!(
        {
            let mut c = set.partition_counts();
            c.resize(beta, 0);
            c
        },
        allocation.counts()
    );
    Ok(set)
}

/// Naive probabilistic selection: a weighted sample of `k` from the top
/// `β·k` candidates. `beta = None` samples from the whole list (global
/// randomness).
pub fn select_npns<R: Rng + ?Sized>(
    row: &SimilarityRow,
    k: usize,
    beta: Option<usize>,
    weights: &SelectionWeights,
    rng: &mut R,
) -> Result<NeighbourSet> {
    let pool_len = match beta {
        Some(beta) => {
            check_partitions(row, k, beta)?;
            beta * k
        }
        None => {
            if row.len() < k {
                return Err(Error::validation(format!(
                    "need {k} candidates, row has {}",
                    row.len()
                )));
            }
            row.len()
        }
    };
    debug_assert_eq!(weights.omegas.len(), row.len());
    let pool: Vec<(usize, f64)> = (0..pool_len).map(|idx| (idx, weights.omegas[idx])).collect();
    let members = sample_without_replacement(&pool, k, rng)?
        .into_iter()
        .map(|idx| member_at(row, idx, k))
        .collect();
    Ok(NeighbourSet {
        target: row.target,
        members,
    }
    .finalize())
}

/// PNCF's truncation width for this row.
pub fn pncf_lambda(row: &SimilarityRow, policy: &SelectionPolicy, rs: f64) -> Result<f64> {
    let (k, n) = (policy.k, row.len());
    let sim_k = row
        .sim_at_rank(k)
        .ok_or_else(|| Error::validation(format!("need {k} candidates, row has {n}")))?;
    match policy.lambda_mode {
        LambdaMode::Formula { rho } => {
            if n <= k {
                return Ok(0.0);
            }
            let envelope =
                (4.0 * k as f64 * rs / policy.epsilon) * ((k * (n - k)) as f64 / rho).ln();
            Ok(sim_k.min(envelope))
        }
        LambdaMode::Attack => {
            check_partitions(row, k, policy.beta)?;
            let sim_bk = row.sim_at_rank(policy.beta * k).expect("checked above");
            Ok(sim_k - sim_bk)
        }
    }
}

fn laplace_noise<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    let arg = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
    -scale * u.signum() * arg.ln()
}

/// Private neighbour CF: keep every candidate above `sim_k + λ`, fill the
/// remainder by weighted sampling from the `[sim_k − λ, sim_k + λ]` band,
/// then perturb the selected members' similarities with zero-mean Laplace
/// noise (clamped at zero). A degenerate band (`λ ≤ 0`) reduces to the plain
/// top-`k` prefix.
pub fn select_pncf<R: Rng + ?Sized>(
    row: &SimilarityRow,
    policy: &SelectionPolicy,
    weights: &SelectionWeights,
    rs: f64,
    rng: &mut R,
) -> Result<NeighbourSet> {
    let k = policy.k;
    if row.len() < k {
        return Err(Error::validation(format!(
            "need {k} candidates, row has {}",
            row.len()
        )));
    }
    let lambda = pncf_lambda(row, policy, rs)?;
    if lambda <= 0.0 {
        return select_knn(row, k);
    }
    let sim_k = row.sim_at_rank(k).expect("row length checked");

    let prefix_end = row.candidates.partition_point(|c| c.sim > sim_k + lambda);
    let band_end = row.candidates.partition_point(|c| c.sim >= sim_k - lambda);
    let mut picked = band_fill(&weights.omegas, prefix_end, band_end, k, rng)?;

    let scale = policy.pncf_laplace_scale.unwrap_or(2.0 * rs / policy.epsilon);
    let mut members: Vec<Member> = Vec::with_capacity(k);
    picked.sort_unstable();
    for idx in picked {
        let mut m = member_at(row, idx, k);
        if scale > 0.0 {
            m.sim = (m.sim + laplace_noise(scale, rng)).max(0.0);
        }
        members.push(m);
    }
    Ok(NeighbourSet {
        target: row.target,
        members,
    }
    .finalize())
}

/// Deterministic prefix plus a weighted draw from the band; falls back to the
/// nearest remaining candidates if the band cannot cover the fill.
fn band_fill<R: Rng + ?Sized>(
    omegas: &[f64],
    prefix_end: usize,
    band_end: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut picked: Vec<usize> = (0..prefix_end).collect();
    let need = k - picked.len();
    let band: Vec<(usize, f64)> = (prefix_end..band_end).map(|i| (i, omegas[i])).collect();
    if band.len() < need {
        log::warn!(
            "candidate band holds {} of the {} needed neighbours; filling with nearest candidates",
            band.len(),
            need
        );
        picked.extend(band.iter().map(|&(i, _)| i));
        let missing = k - picked.len();
        picked.extend(band_end..band_end + missing);
        return Ok(picked);
    }
    picked.extend(sample_without_replacement(&band, need, rng)?);
    Ok(picked)
}

/// Run the policy's strategy on a row. `rs` is the sensitivity backing the
/// selection weights; it is not consulted for plain kNN.
pub fn select(
    row: &SimilarityRow,
    policy: &SelectionPolicy,
    rs: Option<f64>,
    seed: u64,
) -> Result<NeighbourSet> {
    policy.validate()?;
    if policy.method == Method::Knn {
        return select_knn(row, policy.k);
    }
    let rs = rs.ok_or_else(|| {
        Error::validation(format!("{} selection needs a sensitivity value", policy.method))
    })?;
    let weights = SelectionWeights::compute(row, policy.epsilon, policy.k, rs)?;
    let mut rng = seeds::rng_from(seed);
    match policy.method {
        Method::Ppns => select_ppns(row, policy.k, policy.beta, &weights, &mut rng),
        Method::Npns => select_npns(row, policy.k, Some(policy.beta), &weights, &mut rng),
        Method::Pncf => select_pncf(row, policy, &weights, rs, &mut rng),
        Method::Knn => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::Candidate;
    use crate::wallenius::exact_inclusion_probabilities;

    fn row_from_sims(sims: &[f64]) -> SimilarityRow {
        SimilarityRow {
            target: UserId(0),
            candidates: sims
                .iter()
                .enumerate()
                .map(|(i, &sim)| Candidate {
                    user: UserId(i as u32 + 1),
                    sim,
                })
                .collect(),
        }
    }

    fn weights_for(row: &SimilarityRow, epsilon: f64, k: usize) -> SelectionWeights {
        SelectionWeights::compute(row, epsilon, k, 1.0).unwrap()
    }

    #[test]
    fn knn_takes_the_prefix() {
        let row = row_from_sims(&[0.9, 0.8, 0.7, 0.1]);
        let set = select_knn(&row, 2).unwrap();
        let users: Vec<UserId> = set.users().collect();
        assert_eq!(users, vec![UserId(1), UserId(2)]);
    }

    #[test]
    fn knn_ties_break_by_user_id() {
        let row = row_from_sims(&[0.5, 0.5, 0.5, 0.5]);
        let set = select_knn(&row, 2).unwrap();
        let users: Vec<UserId> = set.users().collect();
        assert_eq!(users, vec![UserId(1), UserId(2)]);
    }

    #[test]
    fn knn_needs_enough_candidates() {
        let row = row_from_sims(&[0.5]);
        assert!(select_knn(&row, 2).is_err());
    }

    #[test]
    fn allocation_closed_form() {
        assert_eq!(ppns_allocation(5, 3).counts(), &[4, 0, 1]);
        assert_eq!(ppns_allocation(5, 1).counts(), &[5]);
        assert_eq!(ppns_allocation(2, 2).counts(), &[1, 1]);
        assert_eq!(ppns_allocation(1, 3).counts(), &[0, 0, 1]);
    }

    #[test]
    fn allocation_validation() {
        assert!(AllocationVector::new(vec![4, 0, 1], 5).is_ok());
        assert!(AllocationVector::new(vec![4, 1, 0], 5).is_err()); // last partition empty
        assert!(AllocationVector::new(vec![5, 0, 1], 5).is_err()); // sums to 6
        assert!(AllocationVector::new(vec![], 0).is_err());
        assert!(AllocationVector::new(vec![3, 0], 3).is_err()); // first holds k
    }

    #[test]
    fn ppns_beta_one_is_knn() {
        let row = row_from_sims(&[0.9, 0.8, 0.7, 0.6, 0.5, 0.1]);
        let w = weights_for(&row, 1.0, 3);
        for seed in 0..20 {
            let mut rng = seeds::rng_from(seed);
            let ppns = select_ppns(&row, 3, 1, &w, &mut rng).unwrap();
            let knn = select_knn(&row, 3).unwrap();
            assert_eq!(ppns, knn);
        }
    }

    #[test]
    fn ppns_respects_allocation_provenance() {
        let row = row_from_sims(&[0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]);
        let w = weights_for(&row, 1.0, 3);
        let mut rng = seeds::rng_from(7);
        let set = select_ppns(&row, 3, 3, &w, &mut rng).unwrap();
        let mut counts = set.partition_counts();
        counts.resize(3, 0);
        assert_eq!(counts, vec![2, 0, 1]);
        assert_eq!(set.k(), 3);
    }

    #[test]
    fn ppns_rejects_short_rows_naming_the_bound() {
        let row = row_from_sims(&[0.9, 0.8, 0.7]);
        let w = weights_for(&row, 1.0, 2);
        let mut rng = seeds::rng_from(0);
        let err = select_ppns(&row, 2, 2, &w, &mut rng).unwrap_err();
        assert!(err.to_string().contains("U/2k"), "{err}");
    }

    #[test]
    fn ppns_pick_frequencies_match_enumeration() {
        // k = 2, beta = 2, sims (0.9, 0.8 | 0.5, 0.4): partition 1 drops one
        // member, partition 2 contributes one. Compare per-candidate
        // frequencies over 10⁴ seeds against the exact inclusion
        // probabilities of the ω weights, within 4σ.
        let row = row_from_sims(&[0.9, 0.8, 0.5, 0.4]);
        let k = 2;
        let w = weights_for(&row, 1.0, k);
        let trials = 10_000;
        let mut counts = [0usize; 4];
        for seed in 0..trials {
            let mut rng = seeds::rng_from(seed as u64);
            let set = select_ppns(&row, k, 2, &w, &mut rng).unwrap();
            for m in set.members {
                counts[m.user.0 as usize - 1] += 1;
            }
        }
        let part1: Vec<(usize, f64)> = vec![(0, w.omegas[0]), (1, w.omegas[1])];
        let part2: Vec<(usize, f64)> = vec![(2, w.omegas[2]), (3, w.omegas[3])];
        let mut expected = [0.0f64; 4];
        for (idx, p) in exact_inclusion_probabilities(&part1, 1).unwrap() {
            expected[idx] = p;
        }
        for (idx, p) in exact_inclusion_probabilities(&part2, 1).unwrap() {
            expected[idx] = p;
        }
        for i in 0..4 {
            let freq = counts[i] as f64 / trials as f64;
            let sigma = (expected[i] * (1.0 - expected[i]) / trials as f64).sqrt();
            assert!(
                (freq - expected[i]).abs() <= 4.0 * sigma,
                "candidate {i}: freq {freq} vs {} (4σ = {})",
                expected[i],
                4.0 * sigma
            );
        }
    }

    #[test]
    fn ppns_large_epsilon_degenerates_to_argmax() {
        let row = row_from_sims(&[0.9, 0.8, 0.5, 0.4]);
        let k = 2;
        let w = weights_for(&row, 1e3, k);
        let trials = 2_000;
        let mut top_pair = 0usize;
        for seed in 0..trials {
            let mut rng = seeds::rng_from(seed as u64);
            let set = select_ppns(&row, k, 2, &w, &mut rng).unwrap();
            let users: Vec<UserId> = set.users().collect();
            if users == vec![UserId(1), UserId(3)] {
                top_pair += 1;
            }
        }
        let freq = top_pair as f64 / trials as f64;
        assert!(freq > 0.999, "argmax frequency {freq}");
    }

    #[test]
    fn npns_of_pool_k_is_knn() {
        let row = row_from_sims(&[0.9, 0.8, 0.7, 0.6]);
        let w = weights_for(&row, 1.0, 2);
        let mut rng = seeds::rng_from(3);
        let set = select_npns(&row, 2, Some(1), &w, &mut rng).unwrap();
        assert_eq!(set, select_knn(&row, 2).unwrap());
    }

    #[test]
    fn npns_whole_list_sentinel_matches_explicit_pool() {
        let row = row_from_sims(&[0.9, 0.8, 0.7, 0.6, 0.5, 0.4]);
        let w = weights_for(&row, 1.0, 2);
        let a = select_npns(&row, 2, None, &w, &mut seeds::rng_from(11)).unwrap();
        let b = select_npns(&row, 2, Some(3), &w, &mut seeds::rng_from(11)).unwrap();
        assert_eq!(a, b); // 3 * 2 = 6 = whole list
    }

    #[test]
    fn npns_subset_frequencies_match_enumeration() {
        // k = 2 of the top 4 with unequal weights; subset frequencies against
        // the enumeration oracle within 4σ over 10⁵ seeds.
        let row = row_from_sims(&[0.95, 0.7, 0.4, 0.2, 0.1, 0.05]);
        let k = 2;
        let w = SelectionWeights::compute(&row, 8.0, k, 0.5).unwrap();
        let trials = 100_000;
        let mut counts = [0usize; 4];
        for seed in 0..trials {
            let mut rng = seeds::rng_from(seed as u64);
            let set = select_npns(&row, k, Some(2), &w, &mut rng).unwrap();
            for m in set.members {
                counts[m.user.0 as usize - 1] += 1;
            }
        }
        let pool: Vec<(usize, f64)> = (0..4).map(|i| (i, w.omegas[i])).collect();
        let exact = exact_inclusion_probabilities(&pool, k).unwrap();
        for (i, &(_, p)) in exact.iter().enumerate() {
            let freq = counts[i] as f64 / trials as f64;
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            assert!(
                (freq - p).abs() <= 4.0 * sigma,
                "candidate {i}: freq {freq} vs exact {p}"
            );
        }
    }

    fn pncf_policy(k: usize, beta: usize, epsilon: f64) -> SelectionPolicy {
        SelectionPolicy {
            method: Method::Pncf,
            k,
            epsilon,
            beta,
            lambda_mode: LambdaMode::Attack,
            pncf_laplace_scale: Some(0.0),
            seed: 0,
        }
    }

    #[test]
    fn pncf_zero_lambda_is_knn() {
        let row = row_from_sims(&[0.9, 0.8, 0.7, 0.6]);
        let mut policy = pncf_policy(2, 1, 1.0);
        policy.lambda_mode = LambdaMode::Attack; // beta = 1 → λ = 0
        let w = weights_for(&row, 1.0, 2);
        let mut rng = seeds::rng_from(5);
        let set = select_pncf(&row, &policy, &w, 1.0, &mut rng).unwrap();
        assert_eq!(set, select_knn(&row, 2).unwrap());
    }

    #[test]
    fn pncf_attack_lambda_pool_is_top_beta_k() {
        let row = row_from_sims(&[0.9, 0.8, 0.64, 0.5, 0.4, 0.3, 0.2, 0.1]);
        let policy = pncf_policy(2, 2, 1.0);
        let w = weights_for(&row, 1.0, 2);
        let lambda = pncf_lambda(&row, &policy, 1.0).unwrap();
        assert!((lambda - (0.8 - 0.5)).abs() < 1e-12);
        for seed in 0..200 {
            let mut rng = seeds::rng_from(seed);
            let set = select_pncf(&row, &policy, &w, 1.0, &mut rng).unwrap();
            // eligible pool is exactly the top βk = 4 candidates
            assert!(set.users().all(|u| u.0 <= 4), "{set:?}");
            // candidates above sim_k + λ are always kept (none here: 0.9 < 0.8 + 0.3 = 1.1)
        }
    }

    #[test]
    fn pncf_keeps_candidates_above_band() {
        let row = row_from_sims(&[0.99, 0.7, 0.65, 0.6, 0.55, 0.5]);
        let policy = pncf_policy(3, 2, 1.0);
        let w = weights_for(&row, 1.0, 3);
        // sim_k = 0.65, λ = 0.65 − sim_6 = 0.15; prefix = sims > 0.8 = {0.99}
        for seed in 0..100 {
            let mut rng = seeds::rng_from(seed);
            let set = select_pncf(&row, &policy, &w, 1.0, &mut rng).unwrap();
            assert!(set.contains(UserId(1)), "prefix candidate must be kept");
        }
    }

    #[test]
    fn pncf_formula_saturates_at_sim_k_for_tiny_epsilon() {
        let row = row_from_sims(&[0.9, 0.8, 0.7, 0.6, 0.5]);
        let policy = SelectionPolicy {
            method: Method::Pncf,
            k: 2,
            epsilon: 1e-6,
            beta: 1,
            lambda_mode: LambdaMode::Formula { rho: 0.5 },
            pncf_laplace_scale: Some(0.0),
            seed: 0,
        };
        let lambda = pncf_lambda(&row, &policy, 1.0).unwrap();
        assert_eq!(lambda, 0.8); // min's first arm: sim_k
    }

    #[test]
    fn band_fallback_fills_with_nearest() {
        // Artificial band smaller than the fill: prefix 1, band of 1, k = 3.
        let row = row_from_sims(&[0.9, 0.5, 0.3, 0.2]);
        let w = weights_for(&row, 1.0, 3);
        let mut rng = seeds::rng_from(0);
        let picked = band_fill(&w.omegas, 1, 2, 3, &mut rng).unwrap();
        assert_eq!(picked, vec![0, 1, 2]);
    }

    #[test]
    fn pncf_laplace_perturbs_sims_but_not_membership() {
        let row = row_from_sims(&[0.9, 0.8, 0.7, 0.6]);
        let mut policy = pncf_policy(2, 2, 1.0);
        policy.pncf_laplace_scale = None; // default 2·rs/ε
        let w = weights_for(&row, 1.0, 2);
        let mut with_noise = Vec::new();
        let mut without = Vec::new();
        for seed in 0..50 {
            let mut rng = seeds::rng_from(seed);
            let noisy = select_pncf(&row, &policy, &w, 1.0, &mut rng).unwrap();
            let mut quiet_policy = policy;
            quiet_policy.pncf_laplace_scale = Some(0.0);
            let mut rng = seeds::rng_from(seed);
            let quiet = select_pncf(&row, &quiet_policy, &w, 1.0, &mut rng).unwrap();
            let mut a: Vec<UserId> = noisy.users().collect();
            let mut b: Vec<UserId> = quiet.users().collect();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b, "noise must not change membership");
            assert!(noisy.members.iter().all(|m| m.sim >= 0.0));
            with_noise.extend(noisy.members.iter().map(|m| m.sim));
            without.extend(quiet.members.iter().map(|m| m.sim));
        }
        assert_ne!(with_noise, without);
    }

    #[test]
    fn dispatcher_is_seed_deterministic() {
        let row = row_from_sims(&[0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2]);
        for method in [Method::Knn, Method::Npns, Method::Pncf, Method::Ppns] {
            let policy = SelectionPolicy::new(method, 2, 1.0, 2, 0);
            let a = select(&row, &policy, Some(0.8), 42).unwrap();
            let b = select(&row, &policy, Some(0.8), 42).unwrap();
            assert_eq!(a, b, "{method}");
            assert_eq!(a.k(), 2);
        }
    }

    #[test]
    fn dispatcher_validates_policy() {
        let row = row_from_sims(&[0.9, 0.8]);
        let mut policy = SelectionPolicy::new(Method::Ppns, 1, 0.0, 1, 0);
        assert!(select(&row, &policy, Some(1.0), 0).is_err());
        policy.epsilon = 1.0;
        policy.beta = 0;
        assert!(select(&row, &policy, Some(1.0), 0).is_err());
        policy.beta = 1;
        assert!(select(&row, &policy, None, 0).is_err()); // sensitivity required
    }
}
