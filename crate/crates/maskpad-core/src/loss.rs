//! Classification, contrastive and total losses.
//!
//! The classification loss is the mean binary cross entropy of the two
//! logits. The contrastive loss masks the embeddings with the batch dropout
//! decision, re-normalises them, and scores the signed cosine similarity
//! `f_D = (2 * [y1 != y2] - 1) * <u, v> + 1`, which lies in `[0, 2]`: a
//! positive pair is rewarded for alignment, a negative pair for
//! anti-alignment. The two cross terms `(z1, p2)` and `(z2, p1)` are
//! averaged. Target embeddings carry no gradient.

use crate::cgd::{apply_cgd, CgdMask};
use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("embedding has zero norm after masking")]
    ZeroNormEmbedding,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
}

/// Loss components of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_cls: f64,
    pub l_con: f64,
    pub l_total: f64,
    pub lambda_con: f64,
}

/// Numerically stable binary cross entropy on a logit.
pub fn bce_with_logit(logit: f64, target: f64) -> f64 {
    debug_assert!(target == 0.0 || target == 1.0);
    logit.max(0.0) - logit * target + math::log1p(math::exp(-math::fabs(logit)))
}

/// Mean BCE of the two pair members.
pub fn classification_loss(c1: f64, c2: f64, y1: bool, y2: bool) -> f64 {
    0.5 * (bce_with_logit(c1, f64::from(y1)) + bce_with_logit(c2, f64::from(y2)))
}

/// Signed cosine similarity `f_D` of two (masked) embeddings. Both are
/// L2-normalised internally, so the value is scale invariant.
pub fn signed_similarity(
    z_hat: &[f64],
    p_hat: &[f64],
    y1: bool,
    y2: bool,
) -> Result<f64, LossError> {
    if z_hat.len() != p_hat.len() {
        return Err(LossError::DimMismatch(z_hat.len(), p_hat.len()));
    }
    let nz = math::norm2(z_hat);
    let np = math::norm2(p_hat);
    if nz == 0.0 || np == 0.0 {
        return Err(LossError::ZeroNormEmbedding);
    }
    let cosine = math::dot(z_hat, p_hat) / (nz * np);
    let sign = if y1 == y2 { -1.0 } else { 1.0 };
    Ok(sign * cosine + 1.0)
}

/// Contrastive loss of one pair: mask all four embeddings, then average the
/// signed similarities of the two cross terms.
pub fn contrastive_loss(
    z1: &[f64],
    z2: &[f64],
    p1: &[f64],
    p2: &[f64],
    y1: bool,
    y2: bool,
    mask: &CgdMask,
) -> Result<f64, LossError> {
    let z1_hat = apply_cgd(z1, mask);
    let z2_hat = apply_cgd(z2, mask);
    let p1_hat = apply_cgd(p1, mask);
    let p2_hat = apply_cgd(p2, mask);
    let fd_a = signed_similarity(&z1_hat, &p2_hat, y1, y2)?;
    let fd_b = signed_similarity(&z2_hat, &p1_hat, y1, y2)?;
    Ok(0.5 * (fd_a + fd_b))
}

/// `l_total = l_cls + lambda_con * l_con`.
pub fn total_loss(l_cls: f64, l_con: f64, lambda_con: f64) -> f64 {
    l_cls + lambda_con * l_con
}

pub fn breakdown(l_cls: f64, l_con: f64, lambda_con: f64) -> LossBreakdown {
    LossBreakdown {
        l_cls,
        l_con,
        l_total: total_loss(l_cls, l_con, lambda_con),
        lambda_con,
    }
}

/// Mean of per-pair contrastive values, zero when none survived masking.
pub fn mean_or_zero(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgd::CgdMask;
    use alloc::vec;
    use alloc::vec::Vec;
    use approx::assert_relative_eq;

    #[test]
    fn bce_uniform_prediction_is_ln2() {
        assert_relative_eq!(
            classification_loss(0.0, 0.0, true, false),
            core::f64::consts::LN_2,
            max_relative = 1e-15
        );
    }

    #[test]
    fn bce_confident_correct_tends_to_zero() {
        let l = classification_loss(50.0, 50.0, true, true);
        assert!(l < 1e-20);
    }

    #[test]
    fn bce_hand_example() {
        // sigmoid(c) = 0.9 for both; first label right, second wrong.
        let c = math::log(0.9 / 0.1);
        let l = classification_loss(c, c, true, false);
        let expected = 0.5 * (-math::log(0.9) - math::log(0.1));
        assert_relative_eq!(l, expected, max_relative = 1e-12);
        assert_relative_eq!(l, 1.2039728043259361, max_relative = 1e-12);
    }

    #[test]
    fn signed_similarity_examples() {
        let a = [0.6, 0.8];
        // Positive pair, identical embeddings: perfect alignment.
        assert_relative_eq!(
            signed_similarity(&a, &a, true, true).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        // Negative pair, orthogonal embeddings.
        let b = [0.8, -0.6];
        assert_relative_eq!(
            signed_similarity(&a, &b, true, false).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // Negative pair, identical embeddings: maximal penalty.
        assert_relative_eq!(
            signed_similarity(&a, &a, true, false).unwrap(),
            2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn signed_similarity_is_scale_invariant() {
        let a = [0.3, -1.2, 0.5];
        let b = [1.0, 0.2, -0.4];
        let base = signed_similarity(&a, &b, true, true).unwrap();
        let scaled: Vec<f64> = a.iter().map(|&v| 37.5 * v).collect();
        assert_relative_eq!(
            signed_similarity(&scaled, &b, true, true).unwrap(),
            base,
            max_relative = 1e-12
        );
    }

    #[test]
    fn signed_similarity_bounds_property() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            if math::norm2(&z) == 0.0 || math::norm2(&p) == 0.0 {
                continue;
            }
            for (y1, y2) in [(true, true), (true, false)] {
                let fd = signed_similarity(&z, &p, y1, y2).unwrap();
                assert!((-1e-12..=2.0 + 1e-12).contains(&fd));
            }
        }
    }

    #[test]
    fn contrastive_identical_positive_pair_is_zero() {
        let z = [0.1, 0.9, -0.3];
        let l = contrastive_loss(&z, &z, &z, &z, true, true, &CgdMask::empty()).unwrap();
        assert_relative_eq!(l, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn contrastive_orthogonal_positive_pair_is_one() {
        let z1 = [1.0, 0.0];
        let p2 = [0.0, 1.0];
        let z2 = [0.0, 1.0];
        let p1 = [1.0, 0.0];
        let l = contrastive_loss(&z1, &z2, &p1, &p2, true, true, &CgdMask::empty()).unwrap();
        assert_relative_eq!(l, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn contrastive_mask_branches() {
        let z1 = [1.0, 0.0, 0.0, 0.0];
        let p2 = [1.0, 0.0, 0.0, 0.0];
        let z2 = [0.0, 0.0, 1.0, 0.0];
        let p1 = [0.0, 0.0, 1.0, 0.0];
        // Dropping channel 0 zeroes z1 and p2 entirely: error path.
        let mask = CgdMask {
            top_k: vec![0],
            scale: 1.0 / 0.75,
        };
        assert_eq!(
            contrastive_loss(&z1, &z2, &p1, &p2, true, true, &mask),
            Err(LossError::ZeroNormEmbedding)
        );
        // Dropping channel 1 leaves the alignment intact.
        let mask = CgdMask {
            top_k: vec![1],
            scale: 1.0 / 0.75,
        };
        let l = contrastive_loss(&z1, &z2, &p1, &p2, true, true, &mask).unwrap();
        assert_relative_eq!(l, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(1.0, 2.0, 0.5), 2.0);
        assert_eq!(total_loss(1.0, 2.0, 0.0), 1.0);
        assert_eq!(total_loss(1.0, 2.0, 0.7), 1.0 + 0.7 * 2.0);
    }

    #[test]
    fn pair_symmetry() {
        // Swapping the two members leaves both losses unchanged.
        let z1 = [0.2, -0.5, 0.8];
        let z2 = [-0.1, 0.4, 0.3];
        let p1 = [0.6, 0.1, -0.2];
        let p2 = [-0.3, 0.9, 0.5];
        let (c1, c2) = (0.7, -1.2);
        let (y1, y2) = (true, false);
        let mask = CgdMask::empty();
        assert_relative_eq!(
            classification_loss(c1, c2, y1, y2),
            classification_loss(c2, c1, y2, y1),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            contrastive_loss(&z1, &z2, &p1, &p2, y1, y2, &mask).unwrap(),
            contrastive_loss(&z2, &z1, &p2, &p1, y2, y1, &mask).unwrap(),
            max_relative = 1e-15
        );
    }
}
