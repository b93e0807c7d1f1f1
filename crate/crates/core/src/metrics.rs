//! Evaluation measures and the negative-transfer report.
//!
//! Conventions, stated here because they are asserted by tests:
//!
//! * Macro F1 averages per-class (or per-attribute) F1 over **all** classes
//!   of the schema; a class with zero true and zero predicted positives
//!   contributes F1 = 0, it is not skipped.
//! * Average accuracy (AA) is the macro average of per-class recall over
//!   the classes present in the ground truth.
//! * AFA is the arithmetic mean of macro F1 and accuracy.
//! * Attribute metrics are computed per attribute over unmasked cells only
//!   and then macro-averaged; attributes with no unmasked cells are
//!   excluded. Attribute decisions are thresholded at 0.5 upstream.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// The four measures reported for one task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskMetrics {
    pub accuracy: f64,
    pub average_accuracy: f64,
    pub macro_f1: f64,
    pub afa: f64,
}

impl TaskMetrics {
    fn new(accuracy: f64, average_accuracy: f64, macro_f1: f64) -> TaskMetrics {
        TaskMetrics {
            accuracy,
            average_accuracy,
            macro_f1,
            afa: (macro_f1 + accuracy) / 2.0,
        }
    }

    pub fn get(&self, metric: MetricName) -> f64 {
        match metric {
            MetricName::Accuracy => self.accuracy,
            MetricName::AverageAccuracy => self.average_accuracy,
            MetricName::MacroF1 => self.macro_f1,
            MetricName::Afa => self.afa,
        }
    }
}

/// Which of the two tasks a score belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Classes,
    Attributes,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Classes => "classes",
            TaskKind::Attributes => "attributes",
        }
    }
}

/// Name of one measure inside [`TaskMetrics`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricName {
    Accuracy,
    AverageAccuracy,
    MacroF1,
    Afa,
}

impl MetricName {
    pub const ALL: [MetricName; 4] = [
        MetricName::Accuracy,
        MetricName::AverageAccuracy,
        MetricName::MacroF1,
        MetricName::Afa,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricName::Accuracy => "accuracy",
            MetricName::AverageAccuracy => "average_accuracy",
            MetricName::MacroF1 => "macro_f1",
            MetricName::Afa => "afa",
        }
    }

    pub fn parse(name: &str) -> Result<MetricName> {
        match name {
            "accuracy" | "acc" => Ok(MetricName::Accuracy),
            "average_accuracy" | "aa" => Ok(MetricName::AverageAccuracy),
            "macro_f1" | "f1" => Ok(MetricName::MacroF1),
            "afa" => Ok(MetricName::Afa),
            other => Err(Error::Config(format!("unknown metric name {other:?}"))),
        }
    }
}

fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    // zero true and zero predicted positives count as 0, not skipped
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Metrics for the K-way classification task from predicted and true class
/// indices.
pub fn classification_metrics(
    pred_classes: &[usize],
    true_classes: &[usize],
    num_classes: usize,
) -> Result<TaskMetrics> {
    if pred_classes.is_empty() || pred_classes.len() != true_classes.len() {
        return Err(Error::Metric(format!(
            "need equal nonempty label vectors, got {} and {}",
            pred_classes.len(),
            true_classes.len()
        )));
    }
    if pred_classes
        .iter()
        .chain(true_classes)
        .any(|&c| c >= num_classes)
    {
        return Err(Error::Metric(format!(
            "labels must lie in [0, {num_classes})"
        )));
    }

    let mut tp = vec![0u64; num_classes];
    let mut fp = vec![0u64; num_classes];
    let mut fn_ = vec![0u64; num_classes];
    let mut truth_count = vec![0u64; num_classes];
    let mut correct = 0u64;
    for (&p, &t) in pred_classes.iter().zip(true_classes) {
        truth_count[t] += 1;
        if p == t {
            correct += 1;
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }

    let accuracy = correct as f64 / pred_classes.len() as f64;
    let present: Vec<usize> = (0..num_classes).filter(|&c| truth_count[c] > 0).collect();
    let average_accuracy = present
        .iter()
        .map(|&c| tp[c] as f64 / truth_count[c] as f64)
        .sum::<f64>()
        / present.len() as f64;
    let macro_f1 = (0..num_classes)
        .map(|c| f1_from_counts(tp[c], fp[c], fn_[c]))
        .sum::<f64>()
        / num_classes as f64;
    Ok(TaskMetrics::new(accuracy, average_accuracy, macro_f1))
}

/// Metrics for the binary attribute task from thresholded predictions,
/// ground truth, and the annotation mask (all B x M with 0/1 entries).
/// Only unmasked cells count; attributes with no unmasked cells at all are
/// excluded from the macro averages.
pub fn attribute_metrics(
    pred_binary: &Matrix,
    truth: &Matrix,
    mask: &Matrix,
) -> Result<TaskMetrics> {
    let (b, m) = (truth.rows(), truth.cols());
    if pred_binary.rows() != b || pred_binary.cols() != m || mask.rows() != b || mask.cols() != m {
        return Err(Error::Metric(
            "attribute matrices must share one shape".into(),
        ));
    }
    for v in pred_binary
        .values()
        .iter()
        .chain(truth.values())
        .chain(mask.values())
    {
        if *v != 0.0 && *v != 1.0 {
            return Err(Error::Metric(
                "attribute predictions, truth and mask must be 0/1".into(),
            ));
        }
    }

    let mut acc_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut counted = 0usize;
    for i in 0..m {
        let mut cells = 0u64;
        let mut correct = 0u64;
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        let mut positives = 0u64;
        for j in 0..b {
            if mask.get(j, i) == 0.0 {
                continue;
            }
            cells += 1;
            let (p, t) = (pred_binary.get(j, i), truth.get(j, i));
            if p == t {
                correct += 1;
            }
            if t == 1.0 {
                positives += 1;
                if p == 1.0 {
                    tp += 1;
                } else {
                    fn_ += 1;
                }
            } else if p == 1.0 {
                fp += 1;
            }
        }
        if cells == 0 {
            continue;
        }
        counted += 1;
        acc_sum += correct as f64 / cells as f64;
        recall_sum += if positives > 0 {
            tp as f64 / positives as f64
        } else {
            0.0
        };
        f1_sum += f1_from_counts(tp, fp, fn_);
    }
    if counted == 0 {
        return Err(Error::Metric(
            "no attribute has any unmasked cell to evaluate".into(),
        ));
    }
    let n = counted as f64;
    Ok(TaskMetrics::new(acc_sum / n, recall_sum / n, f1_sum / n))
}

/// Per-task metrics for whichever of the two tasks a dataset annotates.
#[derive(Clone, Copy, Debug, Default)]
pub struct TaskScores {
    pub cls: Option<TaskMetrics>,
    pub att: Option<TaskMetrics>,
}

/// One task's single-task/multi-task comparison.
#[derive(Clone, Copy, Debug)]
pub struct TaskTransfer {
    pub task: TaskKind,
    pub st_score: f64,
    pub mt_score: f64,
    /// Strictly worse than the single-task model on the primary metric.
    pub negative_transfer: bool,
}

/// Negative-transfer report over the tasks present in both score sets.
#[derive(Clone, Debug)]
pub struct TransferReport {
    pub tasks: Vec<TaskTransfer>,
    pub any_negative: bool,
}

/// Compares a multi-task model against single-task baselines on the given
/// primary metric. Tasks present in only one of the two score sets are
/// skipped; comparing disjoint score sets is an error.
pub fn transfer_report(
    st: &TaskScores,
    mt: &TaskScores,
    primary_metric: MetricName,
) -> Result<TransferReport> {
    let mut tasks = Vec::new();
    if let (Some(s), Some(m)) = (st.cls, mt.cls) {
        let (st_score, mt_score) = (s.get(primary_metric), m.get(primary_metric));
        tasks.push(TaskTransfer {
            task: TaskKind::Classes,
            st_score,
            mt_score,
            negative_transfer: mt_score < st_score,
        });
    }
    if let (Some(s), Some(m)) = (st.att, mt.att) {
        let (st_score, mt_score) = (s.get(primary_metric), m.get(primary_metric));
        tasks.push(TaskTransfer {
            task: TaskKind::Attributes,
            st_score,
            mt_score,
            negative_transfer: mt_score < st_score,
        });
    }
    if tasks.is_empty() {
        return Err(Error::Metric(
            "no task is scored in both the single-task and multi-task results".into(),
        ));
    }
    let any_negative = tasks.iter().any(|t| t.negative_transfer);
    Ok(TransferReport {
        tasks,
        any_negative,
    })
}

/// Flat CSV rows in the shared format `run_id,mode,seed,task,metric,value`.
pub fn metrics_csv_rows(
    run_id: &str,
    mode: &str,
    seed: u64,
    task: TaskKind,
    metrics: &TaskMetrics,
) -> String {
    let mut out = String::new();
    for metric in MetricName::ALL {
        out.push_str(&format!(
            "{run_id},{mode},{seed},{},{},{}\n",
            task.as_str(),
            metric.as_str(),
            metrics.get(metric)
        ));
    }
    out
}
