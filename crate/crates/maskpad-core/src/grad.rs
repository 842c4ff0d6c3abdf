//! Reverse-mode derivatives for the fixed architecture.
//!
//! Gradients accumulate into a flat vector aligned with the online
//! parameter layout. The target parameters are never differentiated: the
//! loss treats `p1`/`p2` as constants, which is the stop-gradient contract.

use alloc::vec;
use alloc::vec::Vec;

use crate::cgd::CgdMask;
use crate::loss::LossError;
use crate::math;
use crate::model::{
    affine_t, HeadCache, ModelDims, OnlineCache, ParamLayout, Seg, PRED_SEGS, PROJ_SEGS,
};

/// Rank-one update `grad_w += d ⊗ input` plus `grad_b += d`.
fn accumulate_affine(
    layout: &ParamLayout,
    grad: &mut [f64],
    w_seg: Seg,
    b_seg: Seg,
    d_out: &[f64],
    input: &[f64],
) {
    let w_range = layout.range(w_seg);
    let cols = input.len();
    let gw = &mut grad[w_range];
    for (r, &d) in d_out.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &mut gw[r * cols..(r + 1) * cols];
        for (g, &x) in row.iter_mut().zip(input) {
            *g += d * x;
        }
    }
    let gb = &mut grad[layout.range(b_seg)];
    for (g, &d) in gb.iter_mut().zip(d_out) {
        *g += d;
    }
}

/// Backward through one projector/predictor head; returns the gradient
/// w.r.t. the head input.
fn head_backward(
    layout: &ParamLayout,
    theta: &[f64],
    segs: (Seg, Seg, Seg, Seg, Seg, Seg),
    cache: &HeadCache,
    d_out: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let (w1, b1, gamma_seg, beta_seg, w2, b2) = segs;
    let hp = cache.hidden.len();
    let n_out = d_out.len();

    accumulate_affine(layout, grad, w2, b2, d_out, &cache.hidden);
    let d_hidden = affine_t(layout.slice(theta, w2), d_out, n_out, hp);

    // ReLU on the normalised pre-activation.
    let d_normed: Vec<f64> = d_hidden
        .iter()
        .zip(&cache.normed)
        .map(|(&d, &t)| if t > 0.0 { d } else { 0.0 })
        .collect();

    // Layer norm backward.
    let gamma = layout.slice(theta, gamma_seg);
    {
        let g_gamma = &mut grad[layout.range(gamma_seg)];
        for ((g, &d), &xh) in g_gamma.iter_mut().zip(&d_normed).zip(&cache.ln_xhat) {
            *g += d * xh;
        }
    }
    {
        let g_beta = &mut grad[layout.range(beta_seg)];
        for (g, &d) in g_beta.iter_mut().zip(&d_normed) {
            *g += d;
        }
    }
    let d_xhat: Vec<f64> = d_normed.iter().zip(gamma).map(|(&d, &g)| d * g).collect();
    let m1 = math::mean(&d_xhat);
    let m2 = math::mean(
        &d_xhat
            .iter()
            .zip(&cache.ln_xhat)
            .map(|(&d, &xh)| d * xh)
            .collect::<Vec<f64>>(),
    );
    let d_pre: Vec<f64> = d_xhat
        .iter()
        .zip(&cache.ln_xhat)
        .map(|(&d, &xh)| (d - m1 - xh * m2) / cache.ln_sigma)
        .collect();

    accumulate_affine(layout, grad, w1, b1, &d_pre, &cache.input);
    affine_t(layout.slice(theta, w1), &d_pre, hp, cache.input.len())
}

fn encoder_backward(
    dims: &ModelDims,
    layout: &ParamLayout,
    theta: &[f64],
    cache: &OnlineCache,
    d_fx: &[f64],
    grad: &mut [f64],
) {
    let [e1, e2] = dims.enc_hidden;
    let n = dims.embed_dim;
    let enc = &cache.enc;

    accumulate_affine(layout, grad, Seg::EncW3, Seg::EncB3, d_fx, &enc.act2);
    let d_act2 = affine_t(layout.slice(theta, Seg::EncW3), d_fx, n, e2);
    let d_pre2: Vec<f64> = d_act2
        .iter()
        .zip(&enc.pre2)
        .map(|(&d, &p)| if p > 0.0 { d } else { 0.0 })
        .collect();

    accumulate_affine(layout, grad, Seg::EncW2, Seg::EncB2, &d_pre2, &enc.act1);
    let d_act1 = affine_t(layout.slice(theta, Seg::EncW2), &d_pre2, e2, e1);
    let d_pre1: Vec<f64> = d_act1
        .iter()
        .zip(&enc.pre1)
        .map(|(&d, &p)| if p > 0.0 { d } else { 0.0 })
        .collect();

    accumulate_affine(layout, grad, Seg::EncW1, Seg::EncB1, &d_pre1, &enc.x);
}

/// Backward through classifier, predictor, projector and encoder for one
/// sample, given the loss gradients w.r.t. the logit and the embedding.
pub fn backward_online(
    dims: &ModelDims,
    layout: &ParamLayout,
    theta: &[f64],
    cache: &OnlineCache,
    d_logit: f64,
    d_z: &[f64],
    grad: &mut [f64],
) {
    let n = dims.embed_dim;

    // Classifier branch.
    let mut d_fx = vec![0.0; n];
    if d_logit != 0.0 {
        let cls_w = layout.slice(theta, Seg::ClsW);
        {
            let g_w = &mut grad[layout.range(Seg::ClsW)];
            for (g, &f) in g_w.iter_mut().zip(&cache.enc.out) {
                *g += d_logit * f;
            }
        }
        grad[layout.range(Seg::ClsB)][0] += d_logit;
        for (d, &w) in d_fx.iter_mut().zip(cls_w) {
            *d += d_logit * w;
        }
    }

    // Contrastive branch: predictor then projector.
    if d_z.iter().any(|&v| v != 0.0) {
        let d_proj_out = head_backward(layout, theta, PRED_SEGS, &cache.pred, d_z, grad);
        let d_fx_proj = head_backward(layout, theta, PROJ_SEGS, &cache.proj, &d_proj_out, grad);
        for (d, &v) in d_fx.iter_mut().zip(&d_fx_proj) {
            *d += v;
        }
    }

    if d_fx.iter().any(|&v| v != 0.0) {
        encoder_backward(dims, layout, theta, cache, &d_fx, grad);
    }
}

/// Value and gradient of `f_D` w.r.t. the *unmasked* online embedding `z`.
///
/// The masked embedding is `z_hat = scale * z` outside the dropped channels
/// and zero inside, so the chain rule zeroes dropped channels and scales the
/// rest. The target side is a constant.
pub fn signed_similarity_grad(
    z_hat: &[f64],
    p_hat: &[f64],
    y1: bool,
    y2: bool,
    mask: &CgdMask,
) -> Result<(f64, Vec<f64>), LossError> {
    if z_hat.len() != p_hat.len() {
        return Err(LossError::DimMismatch(z_hat.len(), p_hat.len()));
    }
    let nz = math::norm2(z_hat);
    let np = math::norm2(p_hat);
    if nz == 0.0 || np == 0.0 {
        return Err(LossError::ZeroNormEmbedding);
    }
    let u: Vec<f64> = z_hat.iter().map(|&v| v / nz).collect();
    let v: Vec<f64> = p_hat.iter().map(|&w| w / np).collect();
    let cosine = math::dot(&u, &v);
    let sign = if y1 == y2 { -1.0 } else { 1.0 };
    let value = sign * cosine + 1.0;

    // d<u, v>/dz_hat = (v - <u, v> u) / ||z_hat||, then through the mask.
    let mut d_z: Vec<f64> = u
        .iter()
        .zip(&v)
        .map(|(&ui, &vi)| sign * (vi - cosine * ui) / nz * mask.scale)
        .collect();
    for &i in &mask.top_k {
        d_z[i] = 0.0;
    }
    Ok((value, d_z))
}

/// `d BCE / d logit = sigmoid(logit) - target`.
pub fn bce_grad(logit: f64, target: f64) -> f64 {
    math::sigmoid(logit) - target
}
