//! Leave-one-subject-out evaluation, classification metrics and rater
//! agreement.

mod loso;
mod metrics;
mod report;

pub use loso::{
    evaluate_fold_maps, evaluate_fold_sequences, loso_split, run_loso_maps, run_loso_sequences, split_fold, EvalMode,
    EvaluationReport, FoldResult, FoldSpec, LosoConfig, SamplePrediction, SubjectScoped, TrainingView,
};
pub use metrics::{accuracy, auc, cohen_kappa, pearson};
pub use report::{render_table, table_title, TableRow};

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RaterAgreement {
    pub kappa: f64,
    pub pearson: f64,
}

/// Kappa over the raters' categories and Pearson over their totals.
pub fn rater_agreement(r1: &[crate::ingest::NipsAssessment], r2: &[crate::ingest::NipsAssessment]) -> Result<RaterAgreement> {
    use crate::ingest::score_nips;
    let s1 = r1.iter().map(score_nips).collect::<Result<Vec<_>>>()?;
    let s2 = r2.iter().map(score_nips).collect::<Result<Vec<_>>>()?;
    let c1: Vec<_> = s1.iter().map(|s| s.1).collect();
    let c2: Vec<_> = s2.iter().map(|s| s.1).collect();
    let t1: Vec<f64> = s1.iter().map(|s| s.0 as f64).collect();
    let t2: Vec<f64> = s2.iter().map(|s| s.0 as f64).collect();
    Ok(RaterAgreement {
        kappa: cohen_kappa(&c1, &c2)?,
        pearson: pearson(&t1, &t2)?,
    })
}
