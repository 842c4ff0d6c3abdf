//! Presentation-attack-detection metrics and protocol evaluation.
//!
//! Scores are liveness probabilities in `[0, 1]`; a sample is classified
//! live iff `score >= theta`. APCER is the percentage of attacks accepted,
//! BPCER the percentage of bonafides rejected, ACER their mean. Thresholds
//! are selected on a development set — at the equal-error point or at a
//! BPCER target — over the finite candidate grid of midpoints between
//! adjacent distinct scores plus the boundaries 0 and 1. AUC is the
//! probability that a random live sample outscores a random attack (ties
//! count half).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::catalog::{Catalog, CatalogView};
use crate::math;
use crate::model::{self, ModelError, ModelState};
use crate::protocol::{
    build_protocol_split_with, P3Restriction, ProtocolId, SplitError, Subset,
};

/// Scored samples with their ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub entries: Vec<ScoreEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub id: String,
    pub score: f64,
    pub is_live: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("score set needs at least one live and one attack sample")]
    EmptyClass,
    #[error("threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("target rate {0} outside (0, 1)")]
    BadTarget(f64),
    #[error("fixed threshold rule needs a value in [0, 1], got {0}")]
    BadRule(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Split(#[from] SplitError),
}

impl ScoreSet {
    pub fn new(entries: Vec<ScoreEntry>) -> ScoreSet {
        ScoreSet { entries }
    }

    pub fn live_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_live).count()
    }

    pub fn attack_count(&self) -> usize {
        self.entries.len() - self.live_count()
    }

    fn require_both_classes(&self) -> Result<(), MetricError> {
        if self.live_count() == 0 || self.attack_count() == 0 {
            return Err(MetricError::EmptyClass);
        }
        Ok(())
    }

    /// Candidate decision thresholds: midpoints between adjacent distinct
    /// scores plus the boundary points 0 and 1, ascending.
    pub fn candidate_thresholds(&self) -> Vec<f64> {
        let mut scores: Vec<f64> = self.entries.iter().map(|e| e.score).collect();
        scores.sort_unstable_by(f64::total_cmp);
        scores.dedup();
        let mut candidates = Vec::with_capacity(scores.len() + 1);
        candidates.push(0.0);
        for w in scores.windows(2) {
            candidates.push(0.5 * (w[0] + w[1]));
        }
        candidates.push(1.0);
        candidates.sort_unstable_by(f64::total_cmp);
        candidates.dedup();
        candidates
    }
}

/// APCER, BPCER and ACER (percentages) at a fixed threshold.
pub fn threshold_metrics(set: &ScoreSet, theta: f64) -> Result<(f64, f64, f64), MetricError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(MetricError::BadThreshold(theta));
    }
    set.require_both_classes()?;
    let mut attacks = 0usize;
    let mut attacks_accepted = 0usize;
    let mut lives = 0usize;
    let mut lives_rejected = 0usize;
    for e in &set.entries {
        if e.is_live {
            lives += 1;
            if e.score < theta {
                lives_rejected += 1;
            }
        } else {
            attacks += 1;
            if e.score >= theta {
                attacks_accepted += 1;
            }
        }
    }
    let apcer = 100.0 * attacks_accepted as f64 / attacks as f64;
    let bpcer = 100.0 * lives_rejected as f64 / lives as f64;
    Ok((apcer, bpcer, (apcer + bpcer) / 2.0))
}

/// Threshold minimising `|APCER - BPCER|` over the candidate grid; ties go
/// to the smallest threshold.
pub fn eer_threshold(dev: &ScoreSet) -> Result<f64, MetricError> {
    dev.require_both_classes()?;
    let mut best = (f64::INFINITY, 0.0);
    for theta in dev.candidate_thresholds() {
        let (apcer, bpcer, _) = threshold_metrics(dev, theta)?;
        let gap = math::fabs(apcer - bpcer);
        if gap < best.0 {
            best = (gap, theta);
        }
    }
    Ok(best.1)
}

/// Largest candidate threshold whose BPCER stays within `target` (a rate in
/// (0, 1)). Returns the threshold and a flag that is set when the score
/// granularity cannot realise any positive BPCER within the target, i.e.
/// the returned operating point simply accepts every bonafide sample.
pub fn bpcer_target_threshold(dev: &ScoreSet, target: f64) -> Result<(f64, bool), MetricError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(MetricError::BadTarget(target));
    }
    dev.require_both_classes()?;
    let target_pct = 100.0 * target;
    let mut chosen = 0.0;
    let mut chosen_bpcer = 0.0;
    let mut min_positive_bpcer = f64::INFINITY;
    for theta in dev.candidate_thresholds() {
        let (_, bpcer, _) = threshold_metrics(dev, theta)?;
        if bpcer > 0.0 && bpcer < min_positive_bpcer {
            min_positive_bpcer = bpcer;
        }
        if bpcer <= target_pct {
            chosen = theta;
            chosen_bpcer = bpcer;
        }
    }
    let flagged = chosen_bpcer == 0.0 && min_positive_bpcer > target_pct;
    Ok((chosen, flagged))
}

/// Rank-statistic AUC with midranks for ties.
pub fn auc(set: &ScoreSet) -> Result<f64, MetricError> {
    set.require_both_classes()?;
    let mut indexed: Vec<(f64, bool)> = set.entries.iter().map(|e| (e.score, e.is_live)).collect();
    indexed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let n = indexed.len();
    let mut rank_sum_live = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && indexed[j + 1].0 == indexed[i].0 {
            j += 1;
        }
        // Average 1-based rank of the tie group [i, j].
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for item in &indexed[i..=j] {
            if item.1 {
                rank_sum_live += midrank;
            }
        }
        i = j + 1;
    }
    let lives = set.live_count() as f64;
    let attacks = set.attack_count() as f64;
    let u = rank_sum_live - lives * (lives + 1.0) / 2.0;
    Ok(u / (lives * attacks))
}

/// Half total error rate at a fixed threshold: `(FAR + FRR) / 2`, which is
/// ACER under the liveness-score convention. Returned as a percentage.
pub fn hter(test: &ScoreSet, theta: f64) -> Result<f64, MetricError> {
    let (_, _, acer) = threshold_metrics(test, theta)?;
    Ok(acer)
}

/// How the decision threshold is picked on the development set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    /// Equal-error point (the default intra-dataset rule).
    Eer,
    /// Smallest BPCER target, e.g. 0.01.
    BpcerTarget(f64),
    /// Fixed threshold, for cross-set or diagnostic runs.
    Fixed(f64),
}

impl ThresholdRule {
    pub fn apply(&self, dev: &ScoreSet) -> Result<(f64, bool), MetricError> {
        match *self {
            ThresholdRule::Eer => Ok((eer_threshold(dev)?, false)),
            ThresholdRule::BpcerTarget(target) => bpcer_target_threshold(dev, target),
            ThresholdRule::Fixed(theta) => {
                if !(0.0..=1.0).contains(&theta) {
                    return Err(MetricError::BadRule(theta));
                }
                Ok((theta, false))
            }
        }
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::Eer => f.write_str("eer"),
            ThresholdRule::BpcerTarget(t) => write!(f, "bpcer@{t}"),
            ThresholdRule::Fixed(t) => write!(f, "fixed@{t}"),
        }
    }
}

/// Population standard deviations of the sub-protocol metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateStd {
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
    pub auc: f64,
}

/// Metrics of one protocol run; an aggregate report carries the
/// per-subprotocol reports plus mean and spread.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub protocol: String,
    /// Dev-selected threshold; absent on aggregate reports.
    pub threshold: Option<f64>,
    pub threshold_rule: ThresholdRule,
    /// Set when a BPCER target was unattainable at the dev granularity.
    pub threshold_flagged: bool,
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
    pub auc: f64,
    pub hter: f64,
    pub sub_reports: Vec<EvalReport>,
    pub spread: Option<AggregateStd>,
}

/// Protocol selector for evaluation runs; `P2Aggregate` runs the three
/// leave-one-type-out subprotocols and reports mean +/- std.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalProtocol {
    Single(ProtocolId),
    P2Aggregate,
}

impl EvalProtocol {
    pub fn parse(s: &str) -> Option<EvalProtocol> {
        if s == "2" || s == "P2" {
            return Some(EvalProtocol::P2Aggregate);
        }
        ProtocolId::parse(s).map(EvalProtocol::Single)
    }
}

impl fmt::Display for EvalProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalProtocol::Single(id) => write!(f, "{id}"),
            EvalProtocol::P2Aggregate => f.write_str("2"),
        }
    }
}

/// Score a catalog subset at video granularity: one entry per video, its
/// score the mean of the frame scores.
pub fn video_scores(state: &ModelState, view: &CatalogView<'_>) -> Result<ScoreSet, MetricError> {
    let mut groups: BTreeMap<String, (f64, usize, bool)> = BTreeMap::new();
    for (_, record) in view.iter() {
        let score = model::liveness_score(&state.dims, &state.theta, &record.feature_f64())?;
        let entry = groups
            .entry(record.folder_name())
            .or_insert((0.0, 0, record.is_live()));
        entry.0 += score;
        entry.1 += 1;
    }
    Ok(ScoreSet::new(
        groups
            .into_iter()
            .map(|(id, (sum, count, is_live))| ScoreEntry {
                id,
                score: sum / count as f64,
                is_live,
            })
            .collect(),
    ))
}

fn population_std(values: &[f64]) -> f64 {
    math::sqrt(math::variance(values))
}

fn single_report(
    state: &ModelState,
    catalog: &Catalog,
    protocol_id: ProtocolId,
    split_seed: u64,
    rule: ThresholdRule,
    p3: &P3Restriction,
) -> Result<EvalReport, MetricError> {
    let split = build_protocol_split_with(protocol_id, catalog, split_seed, p3)?;
    let dev = video_scores(state, &split.view(catalog, Subset::Dev))?;
    let test = video_scores(state, &split.view(catalog, Subset::Test))?;
    let (theta, flagged) = rule.apply(&dev)?;
    let (apcer, bpcer, acer) = threshold_metrics(&test, theta)?;
    let auc_value = auc(&test)?;
    let hter_value = hter(&test, theta)?;
    Ok(EvalReport {
        protocol: format!("{protocol_id}"),
        threshold: Some(theta),
        threshold_rule: rule,
        threshold_flagged: flagged,
        apcer,
        bpcer,
        acer,
        auc: auc_value,
        hter: hter_value,
        sub_reports: Vec::new(),
        spread: None,
    })
}

/// Combine the three leave-one-type-out reports into mean +/- population
/// std.
pub fn aggregate_reports(protocol: &str, subs: Vec<EvalReport>) -> EvalReport {
    let collect = |f: fn(&EvalReport) -> f64| subs.iter().map(f).collect::<Vec<f64>>();
    let apcers = collect(|r| r.apcer);
    let bpcers = collect(|r| r.bpcer);
    let acers = collect(|r| r.acer);
    let aucs = collect(|r| r.auc);
    let hters = collect(|r| r.hter);
    let rule = subs.first().map(|r| r.threshold_rule).unwrap_or(ThresholdRule::Eer);
    EvalReport {
        protocol: String::from(protocol),
        threshold: None,
        threshold_rule: rule,
        threshold_flagged: subs.iter().any(|r| r.threshold_flagged),
        apcer: math::mean(&apcers),
        bpcer: math::mean(&bpcers),
        acer: math::mean(&acers),
        auc: math::mean(&aucs),
        hter: math::mean(&hters),
        spread: Some(AggregateStd {
            apcer: population_std(&apcers),
            bpcer: population_std(&bpcers),
            acer: population_std(&acers),
            auc: population_std(&aucs),
        }),
        sub_reports: subs,
    }
}

/// Evaluate a trained model under a protocol: score dev and test at video
/// level, pick the threshold on dev, report test metrics. The aggregate
/// protocol evaluates the same model across the three subprotocol splits.
pub fn run_protocol(
    state: &ModelState,
    catalog: &Catalog,
    protocol: EvalProtocol,
    split_seed: u64,
    rule: ThresholdRule,
) -> Result<EvalReport, MetricError> {
    run_protocol_with(
        state,
        catalog,
        protocol,
        split_seed,
        rule,
        &P3Restriction::default(),
    )
}

/// [`run_protocol`] with an explicit P3 train/dev scene/lighting subset.
pub fn run_protocol_with(
    state: &ModelState,
    catalog: &Catalog,
    protocol: EvalProtocol,
    split_seed: u64,
    rule: ThresholdRule,
    p3: &P3Restriction,
) -> Result<EvalReport, MetricError> {
    match protocol {
        EvalProtocol::Single(id) => single_report(state, catalog, id, split_seed, rule, p3),
        EvalProtocol::P2Aggregate => {
            let mut subs = Vec::with_capacity(3);
            for id in [ProtocolId::P2_1, ProtocolId::P2_2, ProtocolId::P2_3] {
                subs.push(single_report(state, catalog, id, split_seed, rule, p3)?);
            }
            Ok(aggregate_reports("2", subs))
        }
    }
}
