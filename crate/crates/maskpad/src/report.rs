//! Text artifacts: evaluation reports, score/log CSVs and the pairs dump.

use std::fmt::Write as _;

use maskpad_core::metrics::{EvalReport, ScoreSet};
use maskpad_core::pairs::ContextPair;
use maskpad_core::train::TrainLog;
use maskpad_core::Catalog;

/// Flat key-value rendering of an evaluation report; sub-reports are
/// prefixed with their protocol id.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    render_report_into(&mut out, report, "");
    out
}

fn render_report_into(out: &mut String, report: &EvalReport, prefix: &str) {
    let _ = writeln!(out, "{prefix}protocol={}", report.protocol);
    let _ = writeln!(out, "{prefix}threshold_rule={}", report.threshold_rule);
    match report.threshold {
        Some(theta) => {
            let _ = writeln!(out, "{prefix}threshold={theta}");
        }
        None => {
            let _ = writeln!(out, "{prefix}threshold=per-subprotocol");
        }
    }
    let _ = writeln!(out, "{prefix}threshold_flagged={}", report.threshold_flagged);
    let _ = writeln!(out, "{prefix}apcer={}", report.apcer);
    let _ = writeln!(out, "{prefix}bpcer={}", report.bpcer);
    let _ = writeln!(out, "{prefix}acer={}", report.acer);
    let _ = writeln!(out, "{prefix}auc={}", report.auc);
    let _ = writeln!(out, "{prefix}hter={}", report.hter);
    if let Some(spread) = &report.spread {
        let _ = writeln!(out, "{prefix}apcer_std={}", spread.apcer);
        let _ = writeln!(out, "{prefix}bpcer_std={}", spread.bpcer);
        let _ = writeln!(out, "{prefix}acer_std={}", spread.acer);
        let _ = writeln!(out, "{prefix}auc_std={}", spread.auc);
    }
    for sub in &report.sub_reports {
        render_report_into(out, sub, &format!("{prefix}p{}.", sub.protocol));
    }
}

/// `sample_id,score,label` rows for external ROC plotting.
pub fn render_scores_csv(scores: &ScoreSet) -> String {
    let mut out = String::from("sample_id,score,label\n");
    for entry in &scores.entries {
        let _ = writeln!(
            out,
            "{},{},{}",
            entry.id,
            entry.score,
            if entry.is_live { 1 } else { 0 }
        );
    }
    out
}

/// Per-step training log.
pub fn render_train_log_csv(log: &TrainLog) -> String {
    let mut out = String::from("epoch,step,l_cls,l_con,l_total,p_d_effective,tau\n");
    for s in &log.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.epoch, s.step, s.l_cls, s.l_con, s.l_total, s.p_d_effective, s.tau
        );
    }
    out
}

/// Per-step drop decisions; channel indices are 0-based and `;`-joined.
pub fn render_cgd_audit_csv(log: &TrainLog) -> Option<String> {
    let audit = log.cgd_audit.as_ref()?;
    let mut out = String::from("epoch,step,p_d_effective,topK\n");
    for record in audit {
        let channels = record
            .top_k
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{},{},{},{}",
            record.epoch, record.step, record.p_d_effective, channels
        );
    }
    Some(out)
}

/// Audit dump of sampled pairs.
pub fn render_pairs_csv(catalog: &Catalog, pairs: &[ContextPair]) -> String {
    let mut out = String::from("pattern_id,sample_id_a,sample_id_b,pair_label\n");
    for pair in pairs {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            pair.pattern_id,
            catalog.records[pair.first].sample_id,
            catalog.records[pair.second].sample_id,
            pair.pair_label
        );
    }
    out
}
