//! Online and target networks over a flat parameter vector.
//!
//! The online network is an encoder `f` (two hidden ReLU layers and a final
//! affine map to the embedding), a projector `g` and predictor `h` (affine →
//! layer norm → ReLU → affine, identical shapes), and a one-logit classifier
//! head `l` on the encoder output. The target network holds its own copy of
//! the `(f, g)` parameters, updated only by the exponential moving average —
//! no gradient ever reaches it.
//!
//! Parameters live in one flat `f64` vector; the `(f, g)` block occupies the
//! prefix so the target vector is index-compatible with the online one.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::math;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Width configuration of the whole model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub input_dim: usize,
    pub enc_hidden: [usize; 2],
    /// Encoder output and embedding dimension `n`.
    pub embed_dim: usize,
    /// Hidden width of projector and predictor.
    pub head_hidden: usize,
}

impl ModelDims {
    /// Desk-scale defaults: 64-64 encoder, 32-d embedding, 64 head hidden.
    pub fn desk(input_dim: usize) -> ModelDims {
        ModelDims {
            input_dim,
            enc_hidden: [64, 64],
            embed_dim: 32,
            head_hidden: 64,
        }
    }

    /// Full-scale head preset: 128-d embedding with a 512 hidden projector.
    pub fn full_heads(input_dim: usize) -> ModelDims {
        ModelDims {
            input_dim,
            enc_hidden: [64, 64],
            embed_dim: 128,
            head_hidden: 512,
        }
    }
}

/// Named parameter segments, in flat-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seg {
    EncW1,
    EncB1,
    EncW2,
    EncB2,
    EncW3,
    EncB3,
    ProjW1,
    ProjB1,
    ProjGamma,
    ProjBeta,
    ProjW2,
    ProjB2,
    PredW1,
    PredB1,
    PredGamma,
    PredBeta,
    PredW2,
    PredB2,
    ClsW,
    ClsB,
}

const SEG_COUNT: usize = 20;

const SEG_ORDER: [Seg; SEG_COUNT] = [
    Seg::EncW1,
    Seg::EncB1,
    Seg::EncW2,
    Seg::EncB2,
    Seg::EncW3,
    Seg::EncB3,
    Seg::ProjW1,
    Seg::ProjB1,
    Seg::ProjGamma,
    Seg::ProjBeta,
    Seg::ProjW2,
    Seg::ProjB2,
    Seg::PredW1,
    Seg::PredB1,
    Seg::PredGamma,
    Seg::PredBeta,
    Seg::PredW2,
    Seg::PredB2,
    Seg::ClsW,
    Seg::ClsB,
];

/// Offsets of every segment within the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    offsets: [(usize, usize); SEG_COUNT],
    pub total_len: usize,
    /// Length of the `(f, g)` prefix mirrored by the target network.
    pub target_len: usize,
}

impl ParamLayout {
    pub fn new(dims: &ModelDims) -> ParamLayout {
        let d = dims.input_dim;
        let [e1, e2] = dims.enc_hidden;
        let n = dims.embed_dim;
        let hp = dims.head_hidden;
        // (rows, cols) per segment; vectors are (len, 1).
        let shapes: [(usize, usize); SEG_COUNT] = [
            (e1, d),
            (e1, 1),
            (e2, e1),
            (e2, 1),
            (n, e2),
            (n, 1),
            (hp, n),
            (hp, 1),
            (hp, 1),
            (hp, 1),
            (n, hp),
            (n, 1),
            (hp, n),
            (hp, 1),
            (hp, 1),
            (hp, 1),
            (n, hp),
            (n, 1),
            (1, n),
            (1, 1),
        ];
        let mut offsets = [(0usize, 0usize); SEG_COUNT];
        let mut cursor = 0;
        let mut target_len = 0;
        for (i, (rows, cols)) in shapes.iter().enumerate() {
            let len = rows * cols;
            offsets[i] = (cursor, len);
            cursor += len;
            if SEG_ORDER[i] == Seg::ProjB2 {
                target_len = cursor;
            }
        }
        ParamLayout {
            offsets,
            total_len: cursor,
            target_len,
        }
    }

    fn seg_index(seg: Seg) -> usize {
        SEG_ORDER.iter().position(|&s| s == seg).unwrap()
    }

    pub fn range(&self, seg: Seg) -> core::ops::Range<usize> {
        let (off, len) = self.offsets[Self::seg_index(seg)];
        off..off + len
    }

    pub fn slice<'a>(&self, theta: &'a [f64], seg: Seg) -> &'a [f64] {
        &theta[self.range(seg)]
    }

    pub fn slice_mut<'a>(&self, theta: &'a mut [f64], seg: Seg) -> &'a mut [f64] {
        &mut theta[self.range(seg)]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("input has dimension {found}, expected {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("parameter vector has length {found}, expected {expected}")]
    ParamLen { expected: usize, found: usize },
    #[error("step {step} exceeds max steps {max_steps}")]
    StepBeyondMax { step: u64, max_steps: u64 },
    #[error("max steps must be at least 1")]
    BadMaxSteps,
    #[error("tau {0} outside [0, 1]")]
    BadTau(f64),
}

/// Online parameters, target parameters and schedule counters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub dims: ModelDims,
    pub theta: Vec<f64>,
    pub theta_prime: Vec<f64>,
    pub step: u64,
    pub max_steps: u64,
    pub tau_base: f64,
}

impl ModelState {
    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.dims)
    }
}

/// Fan-in scaled uniform initialisation; the target network starts as an
/// exact copy of the online `(f, g)` block.
pub fn init_model(dims: &ModelDims, seed: u64, tau_base: f64, max_steps: u64) -> ModelState {
    let layout = ParamLayout::new(dims);
    let mut theta = vec![0.0; layout.total_len];
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let d = dims.input_dim;
    let [e1, e2] = dims.enc_hidden;
    let n = dims.embed_dim;
    let hp = dims.head_hidden;
    // (weight segment, bias segment, fan-in) per affine layer.
    let affine_layers: [(Seg, Seg, usize); 7] = [
        (Seg::EncW1, Seg::EncB1, d),
        (Seg::EncW2, Seg::EncB2, e1),
        (Seg::EncW3, Seg::EncB3, e2),
        (Seg::ProjW1, Seg::ProjB1, n),
        (Seg::ProjW2, Seg::ProjB2, hp),
        (Seg::PredW1, Seg::PredB1, n),
        (Seg::PredW2, Seg::PredB2, hp),
    ];
    for (w_seg, b_seg, fan_in) in affine_layers {
        let bound = 1.0 / math::sqrt(fan_in as f64);
        for v in layout.slice_mut(&mut theta, w_seg) {
            *v = rng.random_range(-bound..bound);
        }
        for v in layout.slice_mut(&mut theta, b_seg) {
            *v = rng.random_range(-bound..bound);
        }
    }
    let cls_bound = 1.0 / math::sqrt(n as f64);
    for v in layout.slice_mut(&mut theta, Seg::ClsW) {
        *v = rng.random_range(-cls_bound..cls_bound);
    }
    for v in layout.slice_mut(&mut theta, Seg::ClsB) {
        *v = rng.random_range(-cls_bound..cls_bound);
    }
    for v in layout.slice_mut(&mut theta, Seg::ProjGamma) {
        *v = 1.0;
    }
    for v in layout.slice_mut(&mut theta, Seg::PredGamma) {
        *v = 1.0;
    }
    let theta_prime = theta[..layout.target_len].to_vec();
    ModelState {
        dims: *dims,
        theta,
        theta_prime,
        step: 0,
        max_steps,
        tau_base,
    }
}

pub(crate) fn affine(w: &[f64], b: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(b.len(), rows);
    debug_assert_eq!(x.len(), cols);
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        out.push(math::dot(row, x) + b[r]);
    }
    out
}

/// `wᵀ d` for a (rows x cols) matrix; gradient w.r.t. the affine input.
pub(crate) fn affine_t(w: &[f64], d: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out[c] += row[c] * d[r];
        }
    }
    out
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

#[derive(Debug, Clone)]
pub struct EncCache {
    pub x: Vec<f64>,
    pub pre1: Vec<f64>,
    pub act1: Vec<f64>,
    pub pre2: Vec<f64>,
    pub act2: Vec<f64>,
    /// Encoder output `f(x)`.
    pub out: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    pub input: Vec<f64>,
    /// Hidden pre-activation (before the layer norm).
    pub pre_hidden: Vec<f64>,
    pub ln_xhat: Vec<f64>,
    pub ln_sigma: f64,
    /// Normalised, scaled pre-activation (input of the ReLU).
    pub normed: Vec<f64>,
    /// ReLU output.
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OnlineCache {
    pub enc: EncCache,
    pub proj: HeadCache,
    pub pred: HeadCache,
    pub logit: f64,
}

fn encoder_forward(dims: &ModelDims, layout: &ParamLayout, theta: &[f64], x: &[f64]) -> EncCache {
    let d = dims.input_dim;
    let [e1, e2] = dims.enc_hidden;
    let n = dims.embed_dim;
    let pre1 = affine(
        layout.slice(theta, Seg::EncW1),
        layout.slice(theta, Seg::EncB1),
        x,
        e1,
        d,
    );
    let act1 = relu(&pre1);
    let pre2 = affine(
        layout.slice(theta, Seg::EncW2),
        layout.slice(theta, Seg::EncB2),
        &act1,
        e2,
        e1,
    );
    let act2 = relu(&pre2);
    let out = affine(
        layout.slice(theta, Seg::EncW3),
        layout.slice(theta, Seg::EncB3),
        &act2,
        n,
        e2,
    );
    EncCache {
        x: x.to_vec(),
        pre1,
        act1,
        pre2,
        act2,
        out,
    }
}

fn layer_norm(pre: &[f64], gamma: &[f64], beta: &[f64]) -> (Vec<f64>, f64, Vec<f64>) {
    let mu = math::mean(pre);
    let var = math::variance(pre);
    let sigma = math::sqrt(var + LAYER_NORM_EPS);
    let xhat: Vec<f64> = pre.iter().map(|&v| (v - mu) / sigma).collect();
    let normed: Vec<f64> = xhat
        .iter()
        .zip(gamma)
        .zip(beta)
        .map(|((&xh, &g), &b)| g * xh + b)
        .collect();
    (xhat, sigma, normed)
}

fn head_forward(
    dims: &ModelDims,
    layout: &ParamLayout,
    theta: &[f64],
    segs: (Seg, Seg, Seg, Seg, Seg, Seg),
    input: &[f64],
) -> HeadCache {
    let n = dims.embed_dim;
    let hp = dims.head_hidden;
    let (w1, b1, gamma, beta, w2, b2) = segs;
    let pre_hidden = affine(
        layout.slice(theta, w1),
        layout.slice(theta, b1),
        input,
        hp,
        n,
    );
    let (ln_xhat, ln_sigma, normed) = layer_norm(
        &pre_hidden,
        layout.slice(theta, gamma),
        layout.slice(theta, beta),
    );
    let hidden = relu(&normed);
    let out = affine(
        layout.slice(theta, w2),
        layout.slice(theta, b2),
        &hidden,
        n,
        hp,
    );
    HeadCache {
        input: input.to_vec(),
        pre_hidden,
        ln_xhat,
        ln_sigma,
        normed,
        hidden,
        out,
    }
}

pub(crate) const PROJ_SEGS: (Seg, Seg, Seg, Seg, Seg, Seg) = (
    Seg::ProjW1,
    Seg::ProjB1,
    Seg::ProjGamma,
    Seg::ProjBeta,
    Seg::ProjW2,
    Seg::ProjB2,
);

pub(crate) const PRED_SEGS: (Seg, Seg, Seg, Seg, Seg, Seg) = (
    Seg::PredW1,
    Seg::PredB1,
    Seg::PredGamma,
    Seg::PredBeta,
    Seg::PredW2,
    Seg::PredB2,
);

/// Online forward with all intermediate activations kept for the backward
/// pass.
pub fn forward_online_cached(
    dims: &ModelDims,
    layout: &ParamLayout,
    theta: &[f64],
    x: &[f64],
) -> Result<OnlineCache, ModelError> {
    if x.len() != dims.input_dim {
        return Err(ModelError::InputDim {
            expected: dims.input_dim,
            found: x.len(),
        });
    }
    if theta.len() != layout.total_len {
        return Err(ModelError::ParamLen {
            expected: layout.total_len,
            found: theta.len(),
        });
    }
    let enc = encoder_forward(dims, layout, theta, x);
    let logit = math::dot(layout.slice(theta, Seg::ClsW), &enc.out)
        + layout.slice(theta, Seg::ClsB)[0];
    let proj = head_forward(dims, layout, theta, PROJ_SEGS, &enc.out);
    let pred = head_forward(dims, layout, theta, PRED_SEGS, &proj.out);
    Ok(OnlineCache {
        enc,
        proj,
        pred,
        logit,
    })
}

/// Online forward: classifier logit `c = l(f(x))` and embedding
/// `z = h(g(f(x)))`.
pub fn forward_online(
    dims: &ModelDims,
    theta: &[f64],
    x: &[f64],
) -> Result<(f64, Vec<f64>), ModelError> {
    let layout = ParamLayout::new(dims);
    let cache = forward_online_cached(dims, &layout, theta, x)?;
    Ok((cache.logit, cache.pred.out))
}

/// Target forward `p = g'(f'(x))`. The result carries no gradient; the
/// caller must never write derivatives into `theta_prime`.
pub fn forward_target(
    dims: &ModelDims,
    theta_prime: &[f64],
    x: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let layout = ParamLayout::new(dims);
    if x.len() != dims.input_dim {
        return Err(ModelError::InputDim {
            expected: dims.input_dim,
            found: x.len(),
        });
    }
    if theta_prime.len() != layout.target_len {
        return Err(ModelError::ParamLen {
            expected: layout.target_len,
            found: theta_prime.len(),
        });
    }
    let enc = encoder_forward(dims, &layout, theta_prime, x);
    let proj = head_forward(dims, &layout, theta_prime, PROJ_SEGS, &enc.out);
    Ok(proj.out)
}

/// Classifier probability `sigmoid(l(f(x)))` used for scoring.
pub fn liveness_score(dims: &ModelDims, theta: &[f64], x: &[f64]) -> Result<f64, ModelError> {
    let layout = ParamLayout::new(dims);
    if x.len() != dims.input_dim {
        return Err(ModelError::InputDim {
            expected: dims.input_dim,
            found: x.len(),
        });
    }
    let enc = encoder_forward(dims, &layout, theta, x);
    let logit = math::dot(layout.slice(theta, Seg::ClsW), &enc.out)
        + layout.slice(theta, Seg::ClsB)[0];
    Ok(math::sigmoid(logit))
}

/// Momentum decay schedule: `tau(s) = 1 - (1 - tau_base) * (cos(pi s / S) + 1) / 2`.
///
/// Monotone non-decreasing with `tau(0) = tau_base` and `tau(S) = 1`.
pub fn tau_schedule(step: u64, max_steps: u64, tau_base: f64) -> Result<f64, ModelError> {
    if max_steps < 1 {
        return Err(ModelError::BadMaxSteps);
    }
    if step > max_steps {
        return Err(ModelError::StepBeyondMax { step, max_steps });
    }
    let frac = step as f64 / max_steps as f64;
    Ok(1.0 - (1.0 - tau_base) * (math::cos(math::PI * frac) + 1.0) / 2.0)
}

/// In-place exponential moving average `theta' <- tau theta' + (1 - tau) theta`.
///
/// `theta_fg` must be the `(f, g)` prefix of the online vector.
pub fn ema_update(theta_fg: &[f64], theta_prime: &mut [f64], tau: f64) -> Result<(), ModelError> {
    if theta_fg.len() != theta_prime.len() {
        return Err(ModelError::ParamLen {
            expected: theta_prime.len(),
            found: theta_fg.len(),
        });
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(ModelError::BadTau(tau));
    }
    for (tp, &t) in theta_prime.iter_mut().zip(theta_fg) {
        *tp = tau * *tp + (1.0 - tau) * t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_dims() -> ModelDims {
        ModelDims {
            input_dim: 4,
            enc_hidden: [5, 6],
            embed_dim: 3,
            head_hidden: 7,
        }
    }

    #[test]
    fn layout_lengths_are_consistent() {
        let dims = tiny_dims();
        let layout = ParamLayout::new(&dims);
        let expected_target = 5 * 4 + 5 + 6 * 5 + 6 + 3 * 6 + 3 // encoder
            + 7 * 3 + 7 + 7 + 7 + 3 * 7 + 3; // projector
        assert_eq!(layout.target_len, expected_target);
        let expected_total = expected_target
            + 7 * 3 + 7 + 7 + 7 + 3 * 7 + 3 // predictor
            + 3 + 1; // classifier
        assert_eq!(layout.total_len, expected_total);
        assert_eq!(layout.range(Seg::EncW1).start, 0);
        assert_eq!(layout.range(Seg::ClsB).end, layout.total_len);
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let dims = tiny_dims();
        let layout = ParamLayout::new(&dims);
        let theta = vec![0.0; layout.total_len];
        let x = vec![0.0; dims.input_dim];
        let (c, z) = forward_online(&dims, &theta, &x).unwrap();
        assert_eq!(c, 0.0);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let dims = tiny_dims();
        let state = init_model(&dims, 42, 0.996, 100);
        let x: Vec<f64> = (0..dims.input_dim).map(|i| i as f64 * 0.3 - 0.5).collect();
        let (c1, z1) = forward_online(&dims, &state.theta, &x).unwrap();
        let (c2, z2) = forward_online(&dims, &state.theta, &x).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(z1, z2);
    }

    #[test]
    fn full_head_preset_dims() {
        let dims = ModelDims::full_heads(64);
        assert_eq!(dims.embed_dim, 128);
        assert_eq!(dims.head_hidden, 512);
        let state = init_model(&dims, 1, 0.996, 10);
        let x = vec![0.1; 64];
        let (_, z) = forward_online(&dims, &state.theta, &x).unwrap();
        assert_eq!(z.len(), 128);
        let p = forward_target(&dims, &state.theta_prime, &x).unwrap();
        assert_eq!(p.len(), 128);
    }

    #[test]
    fn target_equals_projection_at_init() {
        let dims = tiny_dims();
        let state = init_model(&dims, 7, 0.996, 100);
        let layout = state.layout();
        assert_eq!(state.theta_prime, state.theta[..layout.target_len].to_vec());
        let x: Vec<f64> = (0..dims.input_dim).map(|i| (i as f64).sin()).collect();
        let p = forward_target(&dims, &state.theta_prime, &x).unwrap();
        let via_online = forward_target(&dims, &state.theta[..layout.target_len], &x).unwrap();
        assert_eq!(p, via_online);
    }

    #[test]
    fn tau_schedule_endpoints_and_monotonicity() {
        assert_eq!(tau_schedule(0, 100, 0.996).unwrap(), 0.996);
        assert_eq!(tau_schedule(100, 100, 0.996).unwrap(), 1.0);
        let mid = tau_schedule(50, 100, 0.996).unwrap();
        assert_relative_eq!(mid, 0.998, max_relative = 1e-15);
        let mut prev = 0.0;
        for s in 0..=100 {
            let tau = tau_schedule(s, 100, 0.996).unwrap();
            assert!(tau >= prev);
            prev = tau;
        }
        assert!(matches!(
            tau_schedule(101, 100, 0.996),
            Err(ModelError::StepBeyondMax { .. })
        ));
        assert!(matches!(
            tau_schedule(0, 0, 0.996),
            Err(ModelError::BadMaxSteps)
        ));
    }

    #[test]
    fn ema_update_examples() {
        let theta = vec![0.0, 0.0];
        let mut prime = vec![1.0, 1.0];
        ema_update(&theta, &mut prime, 0.5).unwrap();
        assert_eq!(prime, vec![0.5, 0.5]);

        let mut prime = vec![1.0, 2.0];
        ema_update(&theta, &mut prime, 1.0).unwrap();
        assert_eq!(prime, vec![1.0, 2.0]);

        let theta = vec![3.0, 4.0];
        let mut prime = vec![1.0, 2.0];
        ema_update(&theta, &mut prime, 0.0).unwrap();
        assert_eq!(prime, theta);

        let mut prime = vec![1.0];
        assert!(ema_update(&theta, &mut prime, 0.5).is_err());
        let mut prime = vec![1.0, 2.0];
        assert!(ema_update(&theta, &mut prime, 1.5).is_err());
    }

    #[test]
    fn ema_contracts_towards_fixed_theta() {
        let dims = tiny_dims();
        let state = init_model(&dims, 3, 0.996, 100);
        let layout = state.layout();
        let theta_fg = &state.theta[..layout.target_len];
        let mut prime: Vec<f64> = theta_fg.iter().map(|&v| v + 1.0).collect();
        let dist = |a: &[f64], b: &[f64]| {
            math::sqrt(
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>(),
            )
        };
        let tau = 0.9;
        let mut prev = dist(&prime, theta_fg);
        for _ in 0..50 {
            ema_update(theta_fg, &mut prime, tau).unwrap();
            let now = dist(&prime, theta_fg);
            assert!(now <= tau * prev + 1e-12);
            prev = now;
        }
        // Geometric convergence: 0.9^50 ~ 5e-3 of the initial distance.
        assert!(prev < 1e-2 * dist(&vec![1.0; layout.target_len], &vec![0.0; layout.target_len]));
    }

    #[test]
    fn input_dim_mismatch_is_reported() {
        let dims = tiny_dims();
        let state = init_model(&dims, 3, 0.996, 100);
        let x = vec![0.0; dims.input_dim + 1];
        assert!(matches!(
            forward_online(&dims, &state.theta, &x),
            Err(ModelError::InputDim { .. })
        ));
        assert!(matches!(
            forward_target(&dims, &state.theta_prime, &x),
            Err(ModelError::InputDim { .. })
        ));
    }
}
