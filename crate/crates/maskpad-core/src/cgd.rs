//! Context-guided channel dropout.
//!
//! For every positive pair the squared, L2-normalised online and target
//! embeddings are compared channel by channel; each pair nominates its
//! `m = floor(p_d * n)` most dissimilar channels, the nominations are
//! tallied across the batch, and the `m` most-voted channels are zeroed in
//! *all* embeddings of the batch. Surviving channels are rescaled by
//! `1 / (1 - p_d)`. The drop rate decays with a half-period cosine and is
//! zero from mid-training on.
//!
//! Two ablation variants invert the selection: `reverse` drops the most
//! similar channels, `bobe` drops both extremes.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgdVariant {
    Standard,
    Reverse,
    /// "Break out both ends": half the budget from each extreme.
    Bobe,
    Off,
}

impl CgdVariant {
    pub fn parse(s: &str) -> Option<CgdVariant> {
        match s {
            "standard" => Some(CgdVariant::Standard),
            "reverse" => Some(CgdVariant::Reverse),
            "bobe" => Some(CgdVariant::Bobe),
            "off" => Some(CgdVariant::Off),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CgdVariant::Standard => "standard",
            CgdVariant::Reverse => "reverse",
            CgdVariant::Bobe => "bobe",
            CgdVariant::Off => "off",
        }
    }
}

/// Static dropout settings; the effective rate for an epoch comes from
/// [`decay_pd`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgdConfig {
    /// Base drop proportion in `[0, 1)`.
    pub p_d_base: f64,
    pub variant: CgdVariant,
}

impl Default for CgdConfig {
    fn default() -> Self {
        CgdConfig {
            p_d_base: 0.15,
            variant: CgdVariant::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CgdError {
    #[error("zero-norm embedding; channel differences are undefined")]
    DegenerateEmbedding,
    #[error("cannot drop {m} of {n} channels")]
    BudgetExceedsChannels { m: usize, n: usize },
    #[error("channel index {index} outside 0..{n}")]
    ChannelOutOfRange { index: usize, n: usize },
}

/// Batch-level drop decision: the channels to zero and the compensation
/// scale for the survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct CgdMask {
    /// Sorted, 0-based channel indices to zero.
    pub top_k: Vec<usize>,
    /// `1 / (1 - p_d_effective)`; 1.0 when the mask is empty.
    pub scale: f64,
}

impl CgdMask {
    pub fn empty() -> CgdMask {
        CgdMask {
            top_k: Vec::new(),
            scale: 1.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.top_k.is_empty()
    }
}

/// Per-channel dissimilarity of a positive embedding pair:
/// `delta_t = |(z_t/(‖z‖))^2 - (p_t/(‖p‖))^2|`.
///
/// Each side sums to 1 after squaring, so every entry lies in `[0, 1]`.
pub fn pair_diff_vector(z: &[f64], p: &[f64]) -> Result<Vec<f64>, CgdError> {
    debug_assert_eq!(z.len(), p.len());
    let nz = math::norm2(z);
    let np = math::norm2(p);
    if nz == 0.0 || np == 0.0 {
        return Err(CgdError::DegenerateEmbedding);
    }
    Ok(z.iter()
        .zip(p)
        .map(|(&zv, &pv)| {
            let a = zv / nz;
            let b = pv / np;
            math::fabs(a * a - b * b)
        })
        .collect())
}

/// Channels one pair nominates for dropping, by variant. Exactly `m`
/// indices; ties break towards the smaller index.
pub fn pair_drop_indices(
    delta: &[f64],
    m: usize,
    variant: CgdVariant,
) -> Result<Vec<usize>, CgdError> {
    let n = delta.len();
    if m > n {
        return Err(CgdError::BudgetExceedsChannels { m, n });
    }
    if m == 0 || variant == CgdVariant::Off {
        return Ok(Vec::new());
    }
    let desc = math::argsort_desc(delta);
    let asc = math::argsort_asc(delta);
    let picked = match variant {
        CgdVariant::Standard => desc[..m].to_vec(),
        CgdVariant::Reverse => asc[..m].to_vec(),
        CgdVariant::Bobe => {
            // ceil(m/2) from the dissimilar end, floor(m/2) from the similar
            // end; overlaps deduplicate and backfill from the next ranks,
            // alternating ends.
            let take_desc = m.div_ceil(2);
            let take_asc = m / 2;
            let mut selected = vec![false; n];
            let mut out = Vec::with_capacity(m);
            for &i in desc.iter().take(take_desc) {
                if !selected[i] {
                    selected[i] = true;
                    out.push(i);
                }
            }
            for &i in asc.iter().take(take_asc) {
                if !selected[i] {
                    selected[i] = true;
                    out.push(i);
                }
            }
            let mut next_desc = take_desc;
            let mut next_asc = take_asc;
            let mut from_desc = true;
            while out.len() < m {
                let src = if from_desc { &desc } else { &asc };
                let cursor = if from_desc {
                    &mut next_desc
                } else {
                    &mut next_asc
                };
                while *cursor < n && selected[src[*cursor]] {
                    *cursor += 1;
                }
                if *cursor < n {
                    let i = src[*cursor];
                    selected[i] = true;
                    out.push(i);
                    *cursor += 1;
                }
                from_desc = !from_desc;
            }
            out
        }
        CgdVariant::Off => unreachable!(),
    };
    let mut sorted = picked;
    sorted.sort_unstable();
    Ok(sorted)
}

/// Tally per-pair nominations and keep the `m` most voted channels; ties
/// break towards the smaller index. No nominations means no mask.
pub fn batch_vote_topk(
    nominations: &[Vec<usize>],
    n: usize,
    m: usize,
) -> Result<Vec<usize>, CgdError> {
    if m > n {
        return Err(CgdError::BudgetExceedsChannels { m, n });
    }
    if nominations.is_empty() || m == 0 {
        return Ok(Vec::new());
    }
    let mut votes = vec![0.0f64; n];
    for set in nominations {
        for &index in set {
            if index >= n {
                return Err(CgdError::ChannelOutOfRange { index, n });
            }
            votes[index] += 1.0;
        }
    }
    let mut top: Vec<usize> = math::argsort_desc(&votes)[..m].to_vec();
    top.sort_unstable();
    Ok(top)
}

/// Zero the masked channels of one embedding and rescale the rest.
pub fn apply_cgd(embedding: &[f64], mask: &CgdMask) -> Vec<f64> {
    if mask.is_empty() && mask.scale == 1.0 {
        return embedding.to_vec();
    }
    let mut out: Vec<f64> = embedding.iter().map(|&v| v * mask.scale).collect();
    for &i in &mask.top_k {
        if i < out.len() {
            out[i] = 0.0;
        }
    }
    out
}

/// Cosine-decayed effective drop rate for an epoch:
/// `p_d(q_cur) = p_d_base / 2 * (1 + cos(2 pi q_cur / q))` while
/// `q_cur < q / 2`, and zero afterwards. Always computed from the constant
/// base, never compounded.
pub fn decay_pd(p_d_base: f64, q_cur: u32, q: u32) -> f64 {
    assert!(q >= 1, "total epochs must be at least 1");
    if (q_cur as f64) >= (q as f64) / 2.0 {
        return 0.0;
    }
    p_d_base / 2.0 * (1.0 + math::cos(2.0 * math::PI * q_cur as f64 / q as f64))
}

/// Drop budget for an effective rate: `m = floor(p_d * n)`.
pub fn drop_budget(p_d_effective: f64, n: usize) -> usize {
    math::floor(p_d_effective * n as f64) as usize
}

/// Compute the batch mask from the positive pairs' embedding cross terms
/// `(z1, p2)` and `(z2, p1)`.
///
/// Pairs with a zero-norm embedding contribute no nominations; their count
/// is returned alongside the mask. With no positive pairs (or `variant ==
/// Off`, or a zero budget) the mask is empty and the scale is 1.
pub fn compute_batch_mask(
    positive_cross_terms: &[(&[f64], &[f64])],
    n: usize,
    p_d_effective: f64,
    variant: CgdVariant,
) -> Result<(CgdMask, u32), CgdError> {
    if variant == CgdVariant::Off || positive_cross_terms.is_empty() {
        return Ok((CgdMask::empty(), 0));
    }
    let m = drop_budget(p_d_effective, n);
    if m > n {
        return Err(CgdError::BudgetExceedsChannels { m, n });
    }
    let mut nominations = Vec::new();
    let mut degenerate = 0u32;
    for &(z, p) in positive_cross_terms {
        match pair_diff_vector(z, p) {
            Ok(delta) => nominations.push(pair_drop_indices(&delta, m, variant)?),
            Err(CgdError::DegenerateEmbedding) => degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    if nominations.is_empty() || m == 0 {
        return Ok((CgdMask::empty(), degenerate));
    }
    let top_k = batch_vote_topk(&nominations, n, m)?;
    Ok((
        CgdMask {
            top_k,
            scale: 1.0 / (1.0 - p_d_effective),
        },
        degenerate,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diff_vector_identical_inputs_is_zero() {
        let z = [0.3, -0.7, 2.0];
        let delta = pair_diff_vector(&z, &z).unwrap();
        assert!(delta.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn diff_vector_unit_vectors() {
        let z = [1.0, 0.0, 0.0, 0.0];
        let p = [0.0, 1.0, 0.0, 0.0];
        assert_eq!(pair_diff_vector(&z, &p).unwrap(), vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn diff_vector_hand_example() {
        let delta = pair_diff_vector(&[3.0, 4.0], &[4.0, 3.0]).unwrap();
        assert_relative_eq!(delta[0], 0.28, max_relative = 1e-12);
        assert_relative_eq!(delta[1], 0.28, max_relative = 1e-12);
    }

    #[test]
    fn diff_vector_rejects_zero_norm() {
        assert_eq!(
            pair_diff_vector(&[0.0, 0.0], &[1.0, 0.0]),
            Err(CgdError::DegenerateEmbedding)
        );
    }

    #[test]
    fn drop_indices_variants() {
        let delta = [0.5, 0.2, 0.9, 0.1];
        assert_eq!(
            pair_drop_indices(&delta, 1, CgdVariant::Standard).unwrap(),
            vec![2]
        );
        assert_eq!(
            pair_drop_indices(&delta, 1, CgdVariant::Reverse).unwrap(),
            vec![3]
        );
        assert_eq!(
            pair_drop_indices(&delta, 2, CgdVariant::Bobe).unwrap(),
            vec![2, 3]
        );
        assert_eq!(
            pair_drop_indices(&delta, 3, CgdVariant::Bobe).unwrap(),
            vec![0, 2, 3]
        );
    }

    #[test]
    fn drop_indices_tie_break_prefers_smaller_index() {
        let delta = [1.0, 1.0, 0.0, 0.0];
        assert_eq!(
            pair_drop_indices(&delta, 1, CgdVariant::Standard).unwrap(),
            vec![0]
        );
        assert_eq!(
            pair_drop_indices(&delta, 1, CgdVariant::Reverse).unwrap(),
            vec![2]
        );
    }

    #[test]
    fn drop_indices_budget_checks() {
        let delta = [0.5, 0.2];
        assert!(pair_drop_indices(&delta, 3, CgdVariant::Standard).is_err());
        assert_eq!(
            pair_drop_indices(&delta, 0, CgdVariant::Standard).unwrap(),
            Vec::<usize>::new()
        );
        assert_eq!(
            pair_drop_indices(&delta, 2, CgdVariant::Off).unwrap(),
            Vec::<usize>::new()
        );
    }

    #[test]
    fn bobe_overlap_keeps_exact_budget() {
        // With m = n the two ends fully overlap; dedup + backfill must still
        // produce n distinct indices.
        let delta = [0.4, 0.1, 0.9];
        let picked = pair_drop_indices(&delta, 3, CgdVariant::Bobe).unwrap();
        assert_eq!(picked, vec![0, 1, 2]);
    }

    #[test]
    fn vote_examples() {
        let sets = vec![vec![0], vec![0], vec![1]];
        assert_eq!(batch_vote_topk(&sets, 4, 1).unwrap(), vec![0]);
        assert_eq!(batch_vote_topk(&[], 4, 1).unwrap(), Vec::<usize>::new());
        let sets = vec![vec![0], vec![1]];
        assert_eq!(batch_vote_topk(&sets, 2, 1).unwrap(), vec![0]);
        assert!(batch_vote_topk(&sets, 2, 3).is_err());
        assert!(batch_vote_topk(&[vec![5]], 2, 1).is_err());
    }

    #[test]
    fn apply_examples() {
        let z = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(apply_cgd(&z, &CgdMask::empty()), z.to_vec());

        let mask = CgdMask {
            top_k: vec![1],
            scale: 1.0 / (1.0 - 0.25),
        };
        let masked = apply_cgd(&z, &mask);
        assert_relative_eq!(masked[0], 4.0 / 3.0, max_relative = 1e-15);
        assert_eq!(masked[1], 0.0);
        assert_relative_eq!(masked[2], 4.0, max_relative = 1e-15);
        assert_relative_eq!(masked[3], 16.0 / 3.0, max_relative = 1e-15);

        assert_relative_eq!(
            1.0 / (1.0 - 0.15),
            1.176_470_588_235_294,
            max_relative = 1e-12
        );
    }

    #[test]
    fn decay_endpoints() {
        assert_eq!(decay_pd(0.15, 0, 30), 0.15);
        assert_relative_eq!(decay_pd(0.15, 5, 20), 0.075, max_relative = 1e-15);
        assert_eq!(decay_pd(0.15, 15, 30), 0.0);
        assert_eq!(decay_pd(0.15, 29, 30), 0.0);
        // Odd epoch count: the cutoff is the real q/2, not an integer floor.
        assert!(decay_pd(0.2, 3, 7) > 0.0);
        assert_eq!(decay_pd(0.2, 4, 7), 0.0);
    }

    #[test]
    fn batch_mask_inert_cases() {
        let z1 = [1.0, 0.0];
        let p2 = [0.0, 1.0];
        let (mask, _) =
            compute_batch_mask(&[(&z1, &p2)], 2, 0.3, CgdVariant::Off).unwrap();
        assert!(mask.is_empty());
        assert_eq!(mask.scale, 1.0);

        let (mask, _) = compute_batch_mask(&[], 2, 0.3, CgdVariant::Standard).unwrap();
        assert!(mask.is_empty());

        let (mask, _) =
            compute_batch_mask(&[(&z1, &p2)], 2, 0.0, CgdVariant::Standard).unwrap();
        assert!(mask.is_empty());
        assert_eq!(mask.scale, 1.0);
    }

    #[test]
    fn batch_mask_counts_degenerate_pairs() {
        let z1 = [1.0, 0.0, 0.0, 0.0];
        let p2 = [0.0, 1.0, 0.0, 0.0];
        let zero = [0.0, 0.0, 0.0, 0.0];
        let terms: Vec<(&[f64], &[f64])> = vec![(&z1, &p2), (&zero, &p2)];
        let (mask, degenerate) =
            compute_batch_mask(&terms, 4, 0.25, CgdVariant::Standard).unwrap();
        assert_eq!(degenerate, 1);
        assert_eq!(mask.top_k.len(), 1);
        assert_relative_eq!(mask.scale, 1.0 / 0.75, max_relative = 1e-15);
    }
}
