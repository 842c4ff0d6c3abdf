//! The full training loop: batch sampling, dual forward passes, batch-level
//! channel dropout, losses, SGD with momentum and weight decay, the EMA
//! target update, and the three schedules (learning rate per epoch, drop
//! rate per epoch, momentum decay per step).
//!
//! Everything is a pure function of `(catalog, split, config)`; two runs
//! with the same inputs produce bit-identical models.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::catalog::Catalog;
use crate::cgd::{self, CgdConfig, CgdError, CgdMask, CgdVariant};
use crate::grad::{backward_online, bce_grad, signed_similarity_grad};
use crate::loss::{self, LossBreakdown, LossError};
use crate::model::{
    self, ema_update, forward_online_cached, forward_target, init_model, tau_schedule, ModelDims,
    ModelError, ModelState, OnlineCache, ParamLayout,
};
use crate::pairs::{BatchBuilder, ContextPair, PairError, PairPattern};
use crate::protocol::{ProtocolSplit, Subset};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cgd(#[from] CgdError),
    #[error("embedding dimensions diverged: {0}")]
    Loss(LossError),
    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("training split contains no records")]
    NoTrainingData,
    #[error("subject set is empty or matches no records")]
    EmptySubjectSet,
}

/// Full training configuration with the optimiser defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    /// Pairs per batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs at which the learning rate is multiplied by `gamma`.
    pub milestones: Vec<u32>,
    pub gamma: f64,
    pub lambda_con: f64,
    pub cgd: CgdConfig,
    pub tau_base: f64,
    pub seed: u64,
    /// Enabled pattern ids (1..=6).
    pub patterns: Vec<u8>,
    /// Sampling weights per pattern; empty means uniform.
    pub pattern_weights: Vec<f64>,
    pub balance_polarity: bool,
    pub enc_hidden: [usize; 2],
    pub embed_dim: usize,
    pub head_hidden: usize,
    /// Keep the per-step drop decisions in the log.
    pub collect_cgd_audit: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            milestones: vec![15, 21, 26],
            gamma: 0.2,
            lambda_con: 0.7,
            cgd: CgdConfig::default(),
            tau_base: 0.996,
            seed: 0,
            patterns: vec![1, 2, 3, 4, 5, 6],
            pattern_weights: Vec::new(),
            balance_polarity: false,
            enc_hidden: [64, 64],
            embed_dim: 32,
            head_hidden: 64,
            collect_cgd_audit: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |msg: &str| Err(TrainError::Config(String::from(msg)));
        if self.epochs == 0 {
            return err("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return err("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return err("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return err("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return err("weight_decay must be non-negative");
        }
        if !self.milestones.windows(2).all(|w| w[0] < w[1]) {
            return err("milestones must be strictly increasing");
        }
        if self.milestones.iter().any(|&m| m >= self.epochs) {
            return err("milestones must be below the epoch count");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return err("gamma must lie in (0, 1)");
        }
        if !(self.lambda_con >= 0.0) {
            return err("lambda_con must be non-negative");
        }
        if !(0.0..1.0).contains(&self.cgd.p_d_base) {
            return err("p_d_base must lie in [0, 1)");
        }
        if !(self.tau_base > 0.0 && self.tau_base <= 1.0) {
            return err("tau_base must lie in (0, 1]");
        }
        if self.patterns.is_empty() {
            return err("at least one pattern must be enabled");
        }
        if self.patterns.iter().any(|&p| PairPattern::new(p).is_none()) {
            return err("pattern ids must lie in 1..=6");
        }
        if !self.pattern_weights.is_empty() && self.pattern_weights.len() != self.patterns.len() {
            return err("pattern_weights must match patterns in length");
        }
        if self.embed_dim == 0 || self.head_hidden == 0 || self.enc_hidden.contains(&0) {
            return err("model dimensions must be positive");
        }
        Ok(())
    }

    pub fn dims(&self, input_dim: usize) -> ModelDims {
        ModelDims {
            input_dim,
            enc_hidden: self.enc_hidden,
            embed_dim: self.embed_dim,
            head_hidden: self.head_hidden,
        }
    }

    /// Learning rate for an epoch: the base rate decayed by `gamma` at every
    /// passed milestone.
    pub fn learning_rate_at(&self, epoch: u32) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| m <= epoch).count();
        let mut lr = self.learning_rate;
        for _ in 0..passed {
            lr *= self.gamma;
        }
        lr
    }

    fn resolved_weights(&self) -> Vec<f64> {
        if self.pattern_weights.is_empty() {
            vec![1.0; self.patterns.len()]
        } else {
            self.pattern_weights.clone()
        }
    }
}

/// Dropout decision inputs for one step.
#[derive(Debug, Clone, Copy)]
pub struct CgdStepSettings {
    pub p_d_effective: f64,
    pub variant: CgdVariant,
}

/// Everything one optimisation step produces besides the parameter update.
#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub losses: LossBreakdown,
    /// `d l_total / d theta`, present when requested.
    pub d_theta: Option<Vec<f64>>,
    pub mask: CgdMask,
    /// Pairs whose contrastive term was skipped (zero norm after masking).
    pub skipped_contrastive: u32,
    /// Positive pairs that could not vote (zero-norm raw embedding).
    pub degenerate_vote_pairs: u32,
    pub positive_pairs: u32,
}

impl BatchOutput {
    /// Gradient w.r.t. the target parameters. The loss reads the target
    /// embeddings but never differentiates them, so this is identically
    /// zero by construction.
    pub fn d_theta_prime(&self, target_len: usize) -> Vec<f64> {
        vec![0.0; target_len]
    }
}

struct PairForward {
    cache1: OnlineCache,
    cache2: OnlineCache,
    p1: Vec<f64>,
    p2: Vec<f64>,
    y1: bool,
    y2: bool,
}

/// Forward the batch, derive the dropout mask from the positive pairs,
/// evaluate both losses, and (optionally) backpropagate into the online
/// parameters. The mask is recomputed from the current parameters, so the
/// value is a pure function of `(theta, theta_prime, batch)`.
pub fn compute_batch(
    dims: &ModelDims,
    layout: &ParamLayout,
    theta: &[f64],
    theta_prime: &[f64],
    catalog: &Catalog,
    batch: &[ContextPair],
    cgd_step: CgdStepSettings,
    lambda_con: f64,
    want_grad: bool,
) -> Result<BatchOutput, TrainError> {
    let n_pairs = batch.len();
    assert!(n_pairs > 0, "batch must not be empty");

    let mut forwards = Vec::with_capacity(n_pairs);
    for pair in batch {
        let r1 = &catalog.records[pair.first];
        let r2 = &catalog.records[pair.second];
        let x1 = r1.feature_f64();
        let x2 = r2.feature_f64();
        let cache1 = forward_online_cached(dims, layout, theta, &x1)?;
        let cache2 = forward_online_cached(dims, layout, theta, &x2)?;
        let p1 = forward_target(dims, theta_prime, &x1)?;
        let p2 = forward_target(dims, theta_prime, &x2)?;
        forwards.push(PairForward {
            cache1,
            cache2,
            p1,
            p2,
            y1: r1.is_live(),
            y2: r2.is_live(),
        });
    }

    // Positive pairs nominate channels from both cross terms.
    let mut cross_terms: Vec<(&[f64], &[f64])> = Vec::new();
    let mut positive_pairs = 0u32;
    for fwd in &forwards {
        if fwd.y1 == fwd.y2 {
            positive_pairs += 1;
            cross_terms.push((&fwd.cache1.pred.out, &fwd.p2));
            cross_terms.push((&fwd.cache2.pred.out, &fwd.p1));
        }
    }
    let (mask, degenerate_vote_pairs) = cgd::compute_batch_mask(
        &cross_terms,
        dims.embed_dim,
        cgd_step.p_d_effective,
        cgd_step.variant,
    )?;

    // Classification loss over all pairs.
    let mut l_cls_sum = 0.0;
    for fwd in &forwards {
        l_cls_sum += loss::classification_loss(
            fwd.cache1.logit,
            fwd.cache2.logit,
            fwd.y1,
            fwd.y2,
        );
    }
    let l_cls = l_cls_sum / n_pairs as f64;

    // Contrastive loss over the pairs that survive masking.
    struct ConTerm {
        pair_index: usize,
        d_z1: Vec<f64>,
        d_z2: Vec<f64>,
    }
    let mut con_values = Vec::with_capacity(n_pairs);
    let mut con_terms = Vec::with_capacity(n_pairs);
    let mut skipped_contrastive = 0u32;
    for (pair_index, fwd) in forwards.iter().enumerate() {
        let z1_hat = cgd::apply_cgd(&fwd.cache1.pred.out, &mask);
        let z2_hat = cgd::apply_cgd(&fwd.cache2.pred.out, &mask);
        let p1_hat = cgd::apply_cgd(&fwd.p1, &mask);
        let p2_hat = cgd::apply_cgd(&fwd.p2, &mask);
        let term_a = signed_similarity_grad(&z1_hat, &p2_hat, fwd.y1, fwd.y2, &mask);
        let term_b = signed_similarity_grad(&z2_hat, &p1_hat, fwd.y1, fwd.y2, &mask);
        match (term_a, term_b) {
            (Ok((fd_a, d_z1)), Ok((fd_b, d_z2))) => {
                con_values.push(0.5 * (fd_a + fd_b));
                con_terms.push(ConTerm {
                    pair_index,
                    d_z1,
                    d_z2,
                });
            }
            (Err(LossError::ZeroNormEmbedding), _) | (_, Err(LossError::ZeroNormEmbedding)) => {
                skipped_contrastive += 1;
            }
            (Err(e), _) | (_, Err(e)) => return Err(TrainError::Loss(e)),
        }
    }
    let l_con = loss::mean_or_zero(&con_values);
    let losses = loss::breakdown(l_cls, l_con, lambda_con);

    let d_theta = if want_grad {
        let mut grad = vec![0.0; layout.total_len];
        // d l_cls / d logit, including the 1/2 of the pair mean and the 1/N
        // of the batch mean.
        let cls_scale = 0.5 / n_pairs as f64;
        let mut d_z: Vec<Vec<f64>> = vec![Vec::new(); 2 * n_pairs];
        if lambda_con > 0.0 && !con_terms.is_empty() {
            let con_scale = lambda_con * 0.5 / con_terms.len() as f64;
            for term in &con_terms {
                d_z[2 * term.pair_index] =
                    term.d_z1.iter().map(|&v| v * con_scale).collect();
                d_z[2 * term.pair_index + 1] =
                    term.d_z2.iter().map(|&v| v * con_scale).collect();
            }
        }
        let zero = vec![0.0; dims.embed_dim];
        for (pair_index, fwd) in forwards.iter().enumerate() {
            let d_c1 = cls_scale * bce_grad(fwd.cache1.logit, f64::from(fwd.y1));
            let d_c2 = cls_scale * bce_grad(fwd.cache2.logit, f64::from(fwd.y2));
            let d_z1 = if d_z[2 * pair_index].is_empty() {
                &zero
            } else {
                &d_z[2 * pair_index]
            };
            let d_z2 = if d_z[2 * pair_index + 1].is_empty() {
                &zero
            } else {
                &d_z[2 * pair_index + 1]
            };
            backward_online(dims, layout, theta, &fwd.cache1, d_c1, d_z1, &mut grad);
            backward_online(dims, layout, theta, &fwd.cache2, d_c2, d_z2, &mut grad);
        }
        Some(grad)
    } else {
        None
    };

    Ok(BatchOutput {
        losses,
        d_theta,
        mask,
        skipped_contrastive,
        degenerate_vote_pairs,
        positive_pairs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub epoch: u32,
    pub step: u64,
    pub l_cls: f64,
    pub l_con: f64,
    pub l_total: f64,
    pub p_d_effective: f64,
    pub tau: f64,
    pub lr: f64,
    pub skipped_contrastive: u32,
    pub masked_channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    pub mean_l_cls: f64,
    pub mean_l_con: f64,
    pub mean_l_total: f64,
    pub lr: f64,
    pub p_d_effective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgdAuditRecord {
    pub epoch: u32,
    pub step: u64,
    pub p_d_effective: f64,
    pub top_k: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Enabled patterns that had no valid pair and were dropped.
    pub skipped_patterns: Vec<u8>,
    pub cgd_audit: Option<Vec<CgdAuditRecord>>,
}

/// Batches per epoch: `ceil(records / (2 * batch_size))` — each batch
/// consumes `2 * batch_size` record slots.
pub fn steps_per_epoch(train_records: usize, batch_size: usize) -> u64 {
    (train_records as u64).div_ceil(2 * batch_size as u64).max(1)
}

/// Run the full training loop on the split's train subset.
pub fn train(
    catalog: &Catalog,
    split: &ProtocolSplit,
    config: &TrainConfig,
) -> Result<(ModelState, TrainLog), TrainError> {
    config.validate()?;
    let train_view = split.view(catalog, Subset::Train);
    if train_view.is_empty() {
        return Err(TrainError::NoTrainingData);
    }

    let dims = config.dims(catalog.feature_dim);
    let layout = ParamLayout::new(&dims);
    let patterns: Vec<PairPattern> = config
        .patterns
        .iter()
        .map(|&id| PairPattern::new(id).expect("validated"))
        .collect();
    let weights = config.resolved_weights();
    let builder = BatchBuilder::new(&train_view, &patterns, &weights, config.balance_polarity)?;

    let per_epoch = steps_per_epoch(train_view.len(), config.batch_size);
    let max_steps = per_epoch * config.epochs as u64;

    let mut master = ChaCha12Rng::seed_from_u64(config.seed);
    let model_seed: u64 = master.random();
    let batch_seed: u64 = master.random();
    let mut batch_rng = ChaCha12Rng::seed_from_u64(batch_seed);

    let mut state = init_model(&dims, model_seed, config.tau_base, max_steps);
    let mut momentum_buf = vec![0.0; layout.total_len];
    let mut log = TrainLog {
        skipped_patterns: builder.skipped_patterns.clone(),
        cgd_audit: config.collect_cgd_audit.then(Vec::new),
        ..TrainLog::default()
    };

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        let p_d_effective = if config.cgd.variant == CgdVariant::Off {
            0.0
        } else {
            cgd::decay_pd(config.cgd.p_d_base, epoch, config.epochs)
        };
        let cgd_step = CgdStepSettings {
            p_d_effective,
            variant: config.cgd.variant,
        };
        let mut epoch_sums = (0.0, 0.0, 0.0);

        for _ in 0..per_epoch {
            let batch = builder.build_batch(&train_view, config.batch_size, &mut batch_rng)?;
            let out = compute_batch(
                &dims,
                &layout,
                &state.theta,
                &state.theta_prime,
                catalog,
                &batch,
                cgd_step,
                config.lambda_con,
                true,
            )?;
            if !out.losses.l_total.is_finite() {
                return Err(TrainError::NonFiniteLoss { step: state.step });
            }
            let grad = out.d_theta.as_ref().expect("gradient requested");

            // SGD with weight decay and momentum.
            for i in 0..layout.total_len {
                let g = grad[i] + config.weight_decay * state.theta[i];
                momentum_buf[i] = config.momentum * momentum_buf[i] + g;
                state.theta[i] -= lr * momentum_buf[i];
            }

            // EMA of the (f, g) block, decayed along the step schedule.
            let tau = tau_schedule(state.step, max_steps, config.tau_base)?;
            ema_update(
                &state.theta[..layout.target_len],
                &mut state.theta_prime,
                tau,
            )?;

            log.steps.push(StepRecord {
                epoch,
                step: state.step,
                l_cls: out.losses.l_cls,
                l_con: out.losses.l_con,
                l_total: out.losses.l_total,
                p_d_effective,
                tau,
                lr,
                skipped_contrastive: out.skipped_contrastive,
                masked_channels: out.mask.top_k.len(),
            });
            if let Some(audit) = &mut log.cgd_audit {
                audit.push(CgdAuditRecord {
                    epoch,
                    step: state.step,
                    p_d_effective,
                    top_k: out.mask.top_k.clone(),
                });
            }
            epoch_sums.0 += out.losses.l_cls;
            epoch_sums.1 += out.losses.l_con;
            epoch_sums.2 += out.losses.l_total;
            state.step += 1;
        }

        let denom = per_epoch as f64;
        log.epochs.push(EpochRecord {
            epoch,
            mean_l_cls: epoch_sums.0 / denom,
            mean_l_con: epoch_sums.1 / denom,
            mean_l_total: epoch_sums.2 / denom,
            lr,
            p_d_effective,
        });
    }

    Ok((state, log))
}

/// Per-sample liveness scores of an immutable model over a subject set.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochEval {
    /// `(sample_id, sigmoid(logit), is_live)` per record, catalog order.
    pub scores: Vec<(String, f64, bool)>,
    pub mean_score: f64,
}

/// Score every record of the given subjects with the online classifier.
pub fn evaluate_epoch(
    state: &ModelState,
    catalog: &Catalog,
    subjects: &BTreeSet<u32>,
) -> Result<EpochEval, TrainError> {
    if subjects.is_empty() {
        return Err(TrainError::EmptySubjectSet);
    }
    let mut scores = Vec::new();
    let mut sum = 0.0;
    for record in &catalog.records {
        if !subjects.contains(&record.attrs.subject) {
            continue;
        }
        let score = model::liveness_score(&state.dims, &state.theta, &record.feature_f64())?;
        sum += score;
        scores.push((record.sample_id.clone(), score, record.is_live()));
    }
    if scores.is_empty() {
        return Err(TrainError::EmptySubjectSet);
    }
    let mean_score = sum / scores.len() as f64;
    Ok(EpochEval { scores, mean_score })
}
