//! Training harness: the optimizer loop, the five experiment modes,
//! evaluation, the student-teacher baseline, and multi-seed suites.
//!
//! Every run is strictly single-threaded and fully determined by its
//! config: the same config and seed produce byte-identical logs and
//! checkpoints.

pub mod config;
pub mod optim;

use std::fmt::Write as _;

pub use config::{
    default_synth_config, parse_synth_section, DataConfig, ExperimentConfig, Mode, OptimizerConfig,
    RelatednessSource,
};
pub use optim::{OptAlgorithm, Optimizer};

use crate::data::{gen_synthetic, load_dataset, BatchStream, Dataset, Sample, Schema};
use crate::error::{Error, Result};
use crate::losses::{total_loss, LossReport};
use crate::metrics::{
    attribute_metrics, classification_metrics, metrics_csv_rows, transfer_report, MetricName,
    TaskKind, TaskScores,
};
use crate::model::{MlpConfig, MlpParams};
use crate::numerics::{Matrix, SeededRng};
use crate::relatedness::{infer_relatedness, IndicatorWeights, MixtureMatrix, RelatednessSpec};

/// Primary metric per task used in transfer comparisons: macro F1 for the
/// class task, AFA for the attribute task.
pub const PRIMARY_CLS_METRIC: MetricName = MetricName::MacroF1;
pub const PRIMARY_ATT_METRIC: MetricName = MetricName::Afa;

const EVAL_CHUNK: usize = 512;

/// One evaluation record of a training run: window-averaged training
/// losses since the previous record, plus test metrics.
#[derive(Clone, Debug)]
pub struct RunLogRecord {
    pub step: usize,
    pub l_cls: f64,
    pub l_att: f64,
    pub l_dm: f64,
    pub l_sca: f64,
    pub l_total: f64,
    pub cls: Option<crate::metrics::TaskMetrics>,
    pub att: Option<crate::metrics::TaskMetrics>,
}

/// Chronological evaluation records plus an optional checkpoint reference
/// (set by callers that persist the parameters).
#[derive(Clone, Debug, Default)]
pub struct RunLog {
    pub records: Vec<RunLogRecord>,
    pub checkpoint: Option<String>,
}

impl RunLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "step,l_cls,l_att,l_dm,l_sca,l_total,\
             cls_accuracy,cls_average_accuracy,cls_macro_f1,cls_afa,\
             att_accuracy,att_average_accuracy,att_macro_f1,att_afa\n",
        );
        for r in &self.records {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                r.step, r.l_cls, r.l_att, r.l_dm, r.l_sca, r.l_total
            );
            for task in [&r.cls, &r.att] {
                match task {
                    Some(m) => {
                        let _ = write!(
                            out,
                            ",{},{},{},{}",
                            m.accuracy, m.average_accuracy, m.macro_f1, m.afa
                        );
                    }
                    None => out.push_str(",,,,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Result of one training run.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub log: RunLog,
    pub params: MlpParams,
    pub final_scores: TaskScores,
}

/// Datasets (and, for synthetic data, the generator's ground-truth
/// relatedness) resolved from a config.
#[derive(Clone, Debug)]
pub struct ResolvedData {
    pub train_cls: Option<Dataset>,
    pub train_att: Option<Dataset>,
    pub train_joint: Option<Dataset>,
    pub test: Dataset,
    pub oracle: Option<RelatednessSpec>,
}

impl ResolvedData {
    fn schema(&self) -> &Schema {
        self.test.schema()
    }
}

/// Loads or generates the datasets named by the config.
pub fn resolve_data(cfg: &ExperimentConfig) -> Result<ResolvedData> {
    match &cfg.data {
        DataConfig::Synth(synth) => {
            let data = gen_synthetic(synth)?;
            Ok(ResolvedData {
                train_cls: data.train_cls_only,
                train_att: data.train_att_only,
                train_joint: data.train_joint,
                test: data.test,
                oracle: Some(synth.relatedness.clone()),
            })
        }
        DataConfig::Files {
            train_cls,
            train_att,
            train_joint,
            test,
            schema,
        } => {
            let schema = Schema::from_file(schema)?;
            let load = |path: &Option<std::path::PathBuf>| -> Result<Option<Dataset>> {
                path.as_ref().map(|p| load_dataset(p, &schema)).transpose()
            };
            Ok(ResolvedData {
                train_cls: load(train_cls)?,
                train_att: load(train_att)?,
                train_joint: load(train_joint)?,
                test: load_dataset(test, &schema)?,
                oracle: None,
            })
        }
    }
}

fn resolve_relatedness(
    cfg: &ExperimentConfig,
    data: &ResolvedData,
) -> Result<(MixtureMatrix, IndicatorWeights)> {
    let source = cfg.relatedness.as_ref().ok_or_else(|| {
        Error::Config("the coupling losses are enabled but no relatedness source is set".into())
    })?;
    let spec = match source {
        RelatednessSource::Oracle => data.oracle.clone().ok_or_else(|| {
            Error::Config("relatedness `oracle` is only available with synthetic data".into())
        })?,
        RelatednessSource::File(path) => RelatednessSpec::from_file(path)?,
        RelatednessSource::EmpiricalJoint => {
            let joint = data.train_joint.as_ref().ok_or_else(|| {
                Error::Config(
                    "relatedness `empirical joint` needs a jointly annotated training split".into(),
                )
            })?;
            infer_relatedness(joint)?
        }
        RelatednessSource::EmpiricalFile(path) => {
            let schema = data.schema();
            infer_relatedness(&load_dataset(path, schema)?)?
        }
    };
    let schema = data.schema();
    if spec.class_names() != schema.class_names()
        || spec.attribute_names() != schema.attribute_names()
    {
        return Err(Error::Config(
            "relatedness class/attribute names do not match the dataset schema".into(),
        ));
    }
    Ok((
        spec.mixture_matrix_with_threshold(cfg.relatedness_tau),
        spec.indicator_weights(),
    ))
}

/// The training splits a mode sees: single-task modes train only on data
/// annotated for their task, multi-task modes pool everything.
fn training_sets<'a>(mode: Mode, data: &'a ResolvedData) -> Result<Vec<&'a Dataset>> {
    let mut sets: Vec<&Dataset> = Vec::new();
    let mut push = |ds: &'a Option<Dataset>| {
        if let Some(ds) = ds {
            sets.push(ds);
        }
    };
    match mode {
        Mode::StCls => {
            push(&data.train_cls);
            push(&data.train_joint);
        }
        Mode::StAtt => {
            push(&data.train_att);
            push(&data.train_joint);
        }
        Mode::MtNc | Mode::MtC | Mode::StTeacherMt => {
            push(&data.train_cls);
            push(&data.train_att);
            push(&data.train_joint);
        }
    }
    if sets.is_empty() {
        return Err(Error::Config(format!(
            "no training data available for mode {mode}"
        )));
    }
    Ok(sets)
}

/// Trains per the config. `st_teacher_mt` dispatches to
/// [`student_teacher_pipeline`]; every other mode is a single optimizer
/// loop.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let data = resolve_data(cfg)?;
    if cfg.mode == Mode::StTeacherMt {
        student_teacher_pipeline_on(cfg, &data)
    } else {
        train_on(cfg, &data)
    }
}

/// Trains on already resolved data (no dispatch).
pub fn train_on(cfg: &ExperimentConfig, data: &ResolvedData) -> Result<TrainOutput> {
    cfg.validate()?;
    let lambdas = cfg.effective_lambdas();
    let coupling = lambdas.dm > 0.0 || lambdas.sca > 0.0;
    let rel = if coupling {
        Some(resolve_relatedness(cfg, data)?)
    } else {
        None
    };
    let (mix, iw) = match &rel {
        Some((m, i)) => (Some(m), Some(i)),
        None => (None, None),
    };

    let schema = data.schema();
    let mlp_cfg = MlpConfig {
        input_dim: schema.feature_dim(),
        hidden_dims: cfg.hidden_dims.clone(),
        num_classes: schema.num_classes(),
        num_attributes: schema.num_attributes(),
        init_seed: cfg.init_seed.unwrap_or(cfg.seed),
    };
    let mut params = MlpParams::init_from_seed(mlp_cfg)?;
    let mut optimizer = Optimizer::new(
        cfg.optimizer.algorithm,
        cfg.optimizer.learning_rate,
        &params,
    )?;
    let sets = training_sets(cfg.mode, data)?;
    let mut stream = BatchStream::new(&sets, cfg.optimizer.batch_size, SeededRng::new(cfg.seed))?;

    let mut log = RunLog::default();
    let mut window = [0.0f64; 5]; // cls, att, dm, sca, total
    let mut window_steps = 0usize;
    for step in 1..=cfg.optimizer.steps {
        let batch = stream.next_batch();
        let step_result: Result<LossReport> = (|| {
            let (preds, cache) = params.forward(&batch.features)?;
            let report = total_loss(&preds, &batch.labels, mix, iw, &lambdas, &cfg.loss_options)?;
            let grads =
                params.backward(&cache, &report.grad_cls_logits, &report.grad_att_logits)?;
            optimizer.step(&mut params, &grads);
            Ok(report)
        })();
        let report = match step_result {
            Ok(r) => r,
            // a non-finite value mid-loop means the optimization blew up
            Err(Error::InvalidInput(message)) => return Err(Error::Diverged { step, message }),
            Err(e) => return Err(e),
        };
        window[0] += report.l_cls;
        window[1] += report.l_att;
        window[2] += report.l_dm;
        window[3] += report.l_sca;
        window[4] += report.l_total;
        window_steps += 1;

        if step % cfg.eval_every == 0 || step == cfg.optimizer.steps {
            let scores = evaluate(&params, &data.test)?;
            let n = window_steps as f64;
            log.records.push(RunLogRecord {
                step,
                l_cls: window[0] / n,
                l_att: window[1] / n,
                l_dm: window[2] / n,
                l_sca: window[3] / n,
                l_total: window[4] / n,
                cls: scores.cls,
                att: scores.att,
            });
            window = [0.0; 5];
            window_steps = 0;
        }
    }

    let last = log
        .records
        .last()
        .expect("at least the final record exists");
    let final_scores = TaskScores {
        cls: last.cls,
        att: last.att,
    };
    Ok(TrainOutput {
        log,
        params,
        final_scores,
    })
}

/// Forward pass over a dataset followed by mask-respecting metrics:
/// argmax for the class task over class-labeled samples, 0.5-thresholded
/// attribute decisions over annotated cells. Tasks the dataset does not
/// annotate are absent from the result.
pub fn evaluate(params: &MlpParams, dataset: &Dataset) -> Result<TaskScores> {
    let schema = dataset.schema();
    if schema.feature_dim() != params.config().input_dim
        || schema.num_classes() != params.config().num_classes
        || schema.num_attributes() != params.config().num_attributes
    {
        return Err(Error::Shape(
            "dataset schema does not match the model architecture".into(),
        ));
    }
    let m = schema.num_attributes();
    let n = dataset.len();

    let mut cls_pred = Vec::new();
    let mut cls_truth = Vec::new();
    let mut att_pred = Matrix::zeros(n, m);
    let mut att_truth = Matrix::zeros(n, m);
    let mut att_mask = Matrix::zeros(n, m);

    let samples = dataset.samples();
    let mut row = 0usize;
    while row < n {
        let take = EVAL_CHUNK.min(n - row);
        let chunk = &samples[row..row + take];
        let mut features = Matrix::zeros(take, schema.feature_dim());
        for (r, s) in chunk.iter().enumerate() {
            features.row_mut(r).copy_from_slice(&s.features);
        }
        let (preds, _) = params.forward(&features)?;
        for (r, s) in chunk.iter().enumerate() {
            if let Some(y) = s.cls_label {
                let p_row = preds.cls_probs().row(r);
                let argmax = (0..p_row.len())
                    .max_by(|&a, &b| p_row[a].partial_cmp(&p_row[b]).expect("finite probs"))
                    .expect("nonempty row");
                cls_pred.push(argmax);
                cls_truth.push(y);
            }
            for i in 0..m {
                att_pred.set(row + r, i, f64::from(preds.att_probs().get(r, i) >= 0.5));
                att_truth.set(row + r, i, f64::from(s.att_labels[i]));
                att_mask.set(row + r, i, f64::from(s.att_mask[i]));
            }
        }
        row += take;
    }

    let cls = if cls_truth.is_empty() {
        None
    } else {
        Some(classification_metrics(
            &cls_pred,
            &cls_truth,
            schema.num_classes(),
        )?)
    };
    let att = if att_mask.values().contains(&1.0) {
        Some(attribute_metrics(&att_pred, &att_truth, &att_mask)?)
    } else {
        None
    };
    Ok(TaskScores { cls, att })
}

/// Fills missing class labels of a dataset with a teacher's argmax
/// predictions.
pub fn pseudo_label_classes(teacher: &MlpParams, dataset: &Dataset) -> Result<Dataset> {
    let features = dataset.features_matrix();
    let mut samples: Vec<Sample> = dataset.samples().to_vec();
    let mut row = 0usize;
    while row < samples.len() {
        let take = EVAL_CHUNK.min(samples.len() - row);
        let chunk = slice_rows(&features, row, take);
        let (preds, _) = teacher.forward(&chunk)?;
        for r in 0..take {
            if samples[row + r].cls_label.is_none() {
                let p_row = preds.cls_probs().row(r);
                let argmax = (0..p_row.len())
                    .max_by(|&a, &b| p_row[a].partial_cmp(&p_row[b]).expect("finite probs"))
                    .expect("nonempty row");
                samples[row + r].cls_label = Some(argmax);
            }
        }
        row += take;
    }
    Dataset::new(dataset.schema().clone(), samples)
}

/// Fills unannotated attributes of a dataset with a teacher's
/// 0.5-thresholded predictions, leaving existing annotations untouched;
/// the result is fully annotated.
pub fn pseudo_label_attributes(teacher: &MlpParams, dataset: &Dataset) -> Result<Dataset> {
    let features = dataset.features_matrix();
    let mut samples: Vec<Sample> = dataset.samples().to_vec();
    let m = dataset.schema().num_attributes();
    let mut row = 0usize;
    while row < samples.len() {
        let take = EVAL_CHUNK.min(samples.len() - row);
        let chunk = slice_rows(&features, row, take);
        let (preds, _) = teacher.forward(&chunk)?;
        for r in 0..take {
            let s = &mut samples[row + r];
            for i in 0..m {
                if s.att_mask[i] == 0 {
                    s.att_labels[i] = u8::from(preds.att_probs().get(r, i) >= 0.5);
                    s.att_mask[i] = 1;
                }
            }
        }
        row += take;
    }
    Dataset::new(dataset.schema().clone(), samples)
}

fn slice_rows(m: &Matrix, start: usize, count: usize) -> Matrix {
    let cols = m.cols();
    Matrix::from_vec(
        count,
        cols,
        m.values()[start * cols..(start + count) * cols].to_vec(),
    )
    .expect("row slice of a valid matrix")
}

/// The student-teacher baseline: train a single-task class teacher and a
/// single-task attribute teacher, pseudo-label the opposite splits into a
/// fully annotated union, then train an uncoupled multi-task student on
/// it.
pub fn student_teacher_pipeline(cfg: &ExperimentConfig) -> Result<TrainOutput> {
    let data = resolve_data(cfg)?;
    student_teacher_pipeline_on(cfg, &data)
}

fn student_teacher_pipeline_on(cfg: &ExperimentConfig, data: &ResolvedData) -> Result<TrainOutput> {
    let (Some(train_cls), Some(train_att)) = (&data.train_cls, &data.train_att) else {
        return Err(Error::Config(
            "the student-teacher pipeline needs both a class-only and an attribute-only training split".into(),
        ));
    };

    let root = SeededRng::new(cfg.seed);
    let teacher_cls_cfg = ExperimentConfig {
        mode: Mode::StCls,
        seed: root.derive(101).seed(),
        init_seed: None,
        relatedness: None,
        ..cfg.clone()
    };
    let teacher_att_cfg = ExperimentConfig {
        mode: Mode::StAtt,
        seed: root.derive(102).seed(),
        init_seed: None,
        relatedness: None,
        ..cfg.clone()
    };
    let teacher_cls = train_on(&teacher_cls_cfg, data)?;
    let teacher_att = train_on(&teacher_att_cfg, data)?;

    let union = ResolvedData {
        train_cls: Some(pseudo_label_attributes(&teacher_att.params, train_cls)?),
        train_att: Some(pseudo_label_classes(&teacher_cls.params, train_att)?),
        train_joint: data.train_joint.clone(),
        test: data.test.clone(),
        oracle: data.oracle.clone(),
    };
    let student_cfg = ExperimentConfig {
        mode: Mode::StTeacherMt,
        relatedness: None,
        ..cfg.clone()
    };
    train_on(&student_cfg, &union)
}

/// One run of a suite.
#[derive(Clone, Debug)]
pub struct SuiteRun {
    pub mode: Mode,
    pub seed: u64,
    pub outcome: std::result::Result<RunSummary, String>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub scores: TaskScores,
    pub log: RunLog,
}

/// Mean and spread of one metric over the successful runs of a mode.
#[derive(Clone, Copy, Debug)]
pub struct AggregateRow {
    pub mode: Mode,
    pub task: TaskKind,
    pub metric: MetricName,
    pub mean: f64,
    /// Sample standard deviation over seeds (0 for a single run).
    pub spread: f64,
    pub n: usize,
}

/// A multi-task mode compared against the single-task baseline of one
/// task, on that task's primary metric.
#[derive(Clone, Copy, Debug)]
pub struct TransferSummary {
    pub mode: Mode,
    pub task: TaskKind,
    pub metric: MetricName,
    pub st_mean: f64,
    pub mt_mean: f64,
    /// Negative transfer on the seed means.
    pub negative_transfer: bool,
    /// Seeds in which this mode was flagged against the baseline.
    pub seeds_flagged: usize,
    pub seeds_compared: usize,
}

/// Results of [`run_suite`].
#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub modes: Vec<Mode>,
    pub base_seed: u64,
    pub n_seeds: u64,
    pub runs: Vec<SuiteRun>,
}

/// Runs every mode with seeds `base.seed .. base.seed + n_seeds`,
/// sequentially. For synthetic data the generator seed follows the run
/// seed, so all modes of one seed share identical datasets. A failed run
/// is recorded and does not abort the suite.
pub fn run_suite(base: &ExperimentConfig, modes: &[Mode], n_seeds: u64) -> Result<SuiteResult> {
    if modes.is_empty() {
        return Err(Error::Config("suite needs at least one mode".into()));
    }
    if n_seeds == 0 {
        return Err(Error::Config("suite needs at least one seed".into()));
    }
    let mut runs = Vec::new();
    for &mode in modes {
        for offset in 0..n_seeds {
            let seed = base.seed + offset;
            let mut cfg = base.clone();
            cfg.mode = mode;
            cfg.seed = seed;
            if let DataConfig::Synth(synth) = &mut cfg.data {
                synth.seed = seed;
            }
            let outcome = match train(&cfg) {
                Ok(out) => Ok(RunSummary {
                    scores: out.final_scores,
                    log: out.log,
                }),
                Err(e) => Err(e.to_string()),
            };
            runs.push(SuiteRun {
                mode,
                seed,
                outcome,
            });
        }
    }
    Ok(SuiteResult {
        modes: modes.to_vec(),
        base_seed: base.seed,
        n_seeds,
        runs,
    })
}

fn mean_and_spread(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl SuiteResult {
    pub fn scores(&self, mode: Mode, seed: u64) -> Option<&TaskScores> {
        self.runs.iter().find_map(|r| {
            if r.mode == mode && r.seed == seed {
                r.outcome.as_ref().ok().map(|s| &s.scores)
            } else {
                None
            }
        })
    }

    fn metric_values(&self, mode: Mode, task: TaskKind, metric: MetricName) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.mode == mode)
            .filter_map(|r| r.outcome.as_ref().ok())
            .filter_map(|s| match task {
                TaskKind::Classes => s.scores.cls,
                TaskKind::Attributes => s.scores.att,
            })
            .map(|m| m.get(metric))
            .collect()
    }

    /// Mean over seeds of one mode/task/metric, if any run succeeded.
    pub fn mean_metric(&self, mode: Mode, task: TaskKind, metric: MetricName) -> Option<f64> {
        let values = self.metric_values(mode, task, metric);
        (!values.is_empty()).then(|| mean_and_spread(&values).0)
    }

    /// Aggregate rows for every mode, task, and metric with data.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut rows = Vec::new();
        for &mode in &self.modes {
            for task in [TaskKind::Classes, TaskKind::Attributes] {
                for metric in MetricName::ALL {
                    let values = self.metric_values(mode, task, metric);
                    if values.is_empty() {
                        continue;
                    }
                    let (mean, spread) = mean_and_spread(&values);
                    rows.push(AggregateRow {
                        mode,
                        task,
                        metric,
                        mean,
                        spread,
                        n: values.len(),
                    });
                }
            }
        }
        rows
    }

    /// Transfer comparisons of every multi-task mode in the suite against
    /// the single-task baselines, using the per-task primary metrics.
    pub fn transfer_summaries(&self) -> Vec<TransferSummary> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            if mode == Mode::StCls || mode == Mode::StAtt {
                continue;
            }
            for (task, st_mode, metric) in [
                (TaskKind::Classes, Mode::StCls, PRIMARY_CLS_METRIC),
                (TaskKind::Attributes, Mode::StAtt, PRIMARY_ATT_METRIC),
            ] {
                if !self.modes.contains(&st_mode) {
                    continue;
                }
                let mut st_values = Vec::new();
                let mut mt_values = Vec::new();
                let mut seeds_flagged = 0usize;
                let mut seeds_compared = 0usize;
                for offset in 0..self.n_seeds {
                    let seed = self.base_seed + offset;
                    let (Some(st), Some(mt)) =
                        (self.scores(st_mode, seed), self.scores(mode, seed))
                    else {
                        continue;
                    };
                    let per_task = |scores: &TaskScores| TaskScores {
                        cls: if task == TaskKind::Classes {
                            scores.cls
                        } else {
                            None
                        },
                        att: if task == TaskKind::Attributes {
                            scores.att
                        } else {
                            None
                        },
                    };
                    let Ok(report) = transfer_report(&per_task(st), &per_task(mt), metric) else {
                        continue;
                    };
                    seeds_compared += 1;
                    st_values.push(report.tasks[0].st_score);
                    mt_values.push(report.tasks[0].mt_score);
                    if report.any_negative {
                        seeds_flagged += 1;
                    }
                }
                if seeds_compared == 0 {
                    continue;
                }
                let (st_mean, _) = mean_and_spread(&st_values);
                let (mt_mean, _) = mean_and_spread(&mt_values);
                out.push(TransferSummary {
                    mode,
                    task,
                    metric,
                    st_mean,
                    mt_mean,
                    negative_transfer: mt_mean < st_mean,
                    seeds_flagged,
                    seeds_compared,
                });
            }
        }
        out
    }

    /// Flat per-run metric rows (`run_id,mode,seed,task,metric,value`).
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("run_id,mode,seed,task,metric,value\n");
        for run in &self.runs {
            let Ok(summary) = &run.outcome else { continue };
            let run_id = format!("{}-s{}", run.mode, run.seed);
            if let Some(m) = &summary.scores.cls {
                out.push_str(&metrics_csv_rows(
                    &run_id,
                    run.mode.as_str(),
                    run.seed,
                    TaskKind::Classes,
                    m,
                ));
            }
            if let Some(m) = &summary.scores.att {
                out.push_str(&metrics_csv_rows(
                    &run_id,
                    run.mode.as_str(),
                    run.seed,
                    TaskKind::Attributes,
                    m,
                ));
            }
        }
        out
    }

    /// Aggregated comparison table as CSV.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("mode,task,metric,mean,spread,n\n");
        for row in self.aggregate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                row.mode,
                row.task.as_str(),
                row.metric.as_str(),
                row.mean,
                row.spread,
                row.n
            );
        }
        out
    }

    /// Human-readable comparison table with the transfer report and any
    /// failed runs.
    pub fn table_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:<11} {:>17} {:>17} {:>17} {:>17}",
            "mode", "task", "accuracy", "avg_accuracy", "macro_f1", "afa"
        );
        for &mode in &self.modes {
            for task in [TaskKind::Classes, TaskKind::Attributes] {
                let cells: Vec<String> = MetricName::ALL
                    .iter()
                    .map(|&metric| {
                        let values = self.metric_values(mode, task, metric);
                        if values.is_empty() {
                            return "-".to_string();
                        }
                        let (mean, spread) = mean_and_spread(&values);
                        format!("{mean:.4}±{spread:.4}")
                    })
                    .collect();
                if cells.iter().all(|c| c == "-") {
                    continue;
                }
                let _ = writeln!(
                    out,
                    "{:<14} {:<11} {:>17} {:>17} {:>17} {:>17}",
                    mode.as_str(),
                    task.as_str(),
                    cells[0],
                    cells[1],
                    cells[2],
                    cells[3]
                );
            }
        }

        let transfers = self.transfer_summaries();
        if !transfers.is_empty() {
            let _ = writeln!(
                out,
                "\ntransfer vs single-task baselines (classes: {}, attributes: {}):",
                PRIMARY_CLS_METRIC.as_str(),
                PRIMARY_ATT_METRIC.as_str()
            );
            for t in transfers {
                let _ = writeln!(
                    out,
                    "  {:<14} {:<11} st {:.4}  mt {:.4}  {} ({}/{} seeds flagged)",
                    t.mode.as_str(),
                    t.task.as_str(),
                    t.st_mean,
                    t.mt_mean,
                    if t.negative_transfer {
                        "NEGATIVE TRANSFER"
                    } else {
                        "ok"
                    },
                    t.seeds_flagged,
                    t.seeds_compared
                );
            }
        }

        let failures: Vec<&SuiteRun> = self.runs.iter().filter(|r| r.outcome.is_err()).collect();
        if !failures.is_empty() {
            let _ = writeln!(out, "\nfailed runs:");
            for run in failures {
                let _ = writeln!(
                    out,
                    "  {}-s{}: {}",
                    run.mode,
                    run.seed,
                    run.outcome.as_ref().unwrap_err()
                );
            }
        }
        out
    }
}
