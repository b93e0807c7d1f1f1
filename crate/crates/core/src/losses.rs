//! The four training loss terms and their exact gradients with respect to
//! both heads' logits.
//!
//! * [`classification_loss`]: cross entropy over the samples that carry a
//!   class label.
//! * [`attribute_loss`]: masked binary cross entropy over annotated
//!   attributes, normalized per sample by the number of annotations.
//! * [`distribution_matching_loss`]: couples the heads through
//!   predictions: attribute predictions are matched against the mixture of
//!   per-class attribute profiles weighted by the class predictions.
//! * [`soft_co_annotation_loss`]: couples the heads through labels:
//!   ground-truth attribute labels are scored into a soft class label
//!   (see [`soft_class_labels`]) and the class predictions are matched
//!   against it.
//!
//! All cross-entropy values clamp probabilities via `log(max(x, eps))`
//! before the log, so a zero mixture entry can never produce an infinite
//! loss. Gradients are derived for the clamped objective, which makes them
//! exact almost everywhere; they are verified against central finite
//! differences in the tests and in the acceptance suite.

use crate::error::{Error, Result};
use crate::numerics::{sigmoid, softmax, softmax_rows, validate_log_eps, Matrix};
use crate::relatedness::{IndicatorWeights, MixtureMatrix};

/// Model outputs for one batch: class probabilities (each row on the
/// simplex) and per-attribute sigmoid scores.
#[derive(Clone, Debug)]
pub struct Predictions {
    cls_probs: Matrix,
    att_probs: Matrix,
}

impl Predictions {
    pub fn new(cls_probs: Matrix, att_probs: Matrix) -> Result<Predictions> {
        if cls_probs.rows() != att_probs.rows() {
            return Err(Error::Shape(format!(
                "class and attribute predictions disagree on batch size: {} vs {}",
                cls_probs.rows(),
                att_probs.rows()
            )));
        }
        for r in 0..cls_probs.rows() {
            let row = cls_probs.row(r);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidInput(format!(
                    "class probability row {r} is not on the simplex"
                )));
            }
        }
        if att_probs
            .values()
            .iter()
            .any(|&p| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::InvalidInput(
                "attribute probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(Predictions {
            cls_probs,
            att_probs,
        })
    }

    pub fn cls_probs(&self) -> &Matrix {
        &self.cls_probs
    }

    pub fn att_probs(&self) -> &Matrix {
        &self.att_probs
    }

    pub fn batch_size(&self) -> usize {
        self.cls_probs.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.cls_probs.cols()
    }

    pub fn num_attributes(&self) -> usize {
        self.att_probs.cols()
    }
}

/// Maps raw head logits to [`Predictions`] (row softmax / elementwise
/// sigmoid).
pub fn predictions_from_logits(cls_logits: &Matrix, att_logits: &Matrix) -> Result<Predictions> {
    Predictions::new(softmax_rows(cls_logits)?, att_logits.map(sigmoid))
}

/// Ground-truth annotations for one batch. `att_mask` holds the per-sample,
/// per-attribute annotation indicators; labels are zero wherever the mask
/// is zero.
#[derive(Clone, Debug)]
pub struct BatchLabels {
    pub cls_labels: Vec<Option<usize>>,
    pub att_labels: Matrix,
    pub att_mask: Matrix,
}

impl BatchLabels {
    pub fn new(
        cls_labels: Vec<Option<usize>>,
        att_labels: Matrix,
        att_mask: Matrix,
    ) -> Result<BatchLabels> {
        let b = cls_labels.len();
        if att_labels.rows() != b || att_mask.rows() != b || att_labels.cols() != att_mask.cols() {
            return Err(Error::Shape(format!(
                "label shapes disagree: {b} class labels, {}x{} attribute labels, {}x{} mask",
                att_labels.rows(),
                att_labels.cols(),
                att_mask.rows(),
                att_mask.cols()
            )));
        }
        for (l, d) in att_labels.values().iter().zip(att_mask.values()) {
            if (*l != 0.0 && *l != 1.0) || (*d != 0.0 && *d != 1.0) {
                return Err(Error::Label(
                    "attribute labels and masks must be exactly 0 or 1".into(),
                ));
            }
            if *d == 0.0 && *l != 0.0 {
                return Err(Error::Label(
                    "attribute labels must be zero where the mask is zero".into(),
                ));
            }
        }
        let any_annotation =
            cls_labels.iter().any(Option::is_some) || att_mask.values().contains(&1.0);
        if !any_annotation {
            return Err(Error::Label(
                "batch has no annotations for either task".into(),
            ));
        }
        Ok(BatchLabels {
            cls_labels,
            att_labels,
            att_mask,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.cls_labels.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.att_labels.cols()
    }

    /// Number of annotated attributes per sample.
    pub fn mask_counts(&self) -> Vec<f64> {
        (0..self.batch_size())
            .map(|r| self.att_mask.row(r).iter().sum())
            .collect()
    }

    /// Samples with at least one annotated attribute.
    pub fn attribute_annotated(&self) -> Vec<bool> {
        self.mask_counts().iter().map(|&c| c > 0.0).collect()
    }
}

/// Weights of the four loss terms in the total objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lambdas {
    pub cls: f64,
    pub att: f64,
    pub dm: f64,
    pub sca: f64,
}

impl Default for Lambdas {
    fn default() -> Self {
        Lambdas {
            cls: 1.0,
            att: 1.0,
            dm: 1.0,
            sca: 1.0,
        }
    }
}

impl Lambdas {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cls", self.cls),
            ("att", self.att),
            ("dm", self.dm),
            ("sca", self.sca),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "lambda_{name} must be a finite number >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Behavioral switches of the loss layer. The defaults follow the plain
/// formulation; the flags exist for ablations.
#[derive(Clone, Copy, Debug)]
pub struct LossOptions {
    /// Floor for every `log(probability)`.
    pub log_eps: f64,
    /// Add the complementary `-(1-p) log(1-q)` term to distribution
    /// matching (symmetric binary cross entropy) instead of the default
    /// single-sided form.
    pub symmetric_dm: bool,
    /// Stop distribution-matching gradients from reaching the class head.
    pub dm_stop_cls_grad: bool,
    /// Normalize indicator scores over the annotated attributes only,
    /// instead of over all attribute weights of the class.
    pub renorm_observed: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            log_eps: 1e-8,
            symmetric_dm: false,
            dm_stop_cls_grad: false,
            renorm_observed: false,
        }
    }
}

impl LossOptions {
    pub fn validate(&self) -> Result<()> {
        validate_log_eps(self.log_eps)
    }
}

/// One loss term: its value and its gradient with respect to both heads'
/// logits (zero where the term does not touch a head).
#[derive(Clone, Debug)]
pub struct LossTerm {
    pub value: f64,
    pub grad_cls_logits: Matrix,
    pub grad_att_logits: Matrix,
}

impl LossTerm {
    fn zeros(batch: usize, num_classes: usize, num_attributes: usize) -> LossTerm {
        LossTerm {
            value: 0.0,
            grad_cls_logits: Matrix::zeros(batch, num_classes),
            grad_att_logits: Matrix::zeros(batch, num_attributes),
        }
    }
}

/// Values and logit gradients of all four terms plus their weighted total.
#[derive(Clone, Debug)]
pub struct LossReport {
    pub l_cls: f64,
    pub l_att: f64,
    pub l_dm: f64,
    pub l_sca: f64,
    pub l_total: f64,
    pub grad_cls_logits: Matrix,
    pub grad_att_logits: Matrix,
}

/// Soft class labels derived from ground-truth attribute annotations.
/// Rows of `probs` are valid simplices (the softmax of the indicator
/// `scores`); samples without any attribute annotation are marked
/// ineligible (their rows are placeholders and must not be used).
#[derive(Clone, Debug)]
pub struct SoftClassLabels {
    pub probs: Matrix,
    /// Raw indicator scores in `[0, 1]`, before the softmax.
    pub scores: Matrix,
    pub eligible: Vec<bool>,
}

#[inline]
fn log_clamped(x: f64, eps: f64) -> f64 {
    x.max(eps).ln()
}

/// VJP of a softmax row: given dL/dp, writes dL/dz with
/// `dz_k = p_k (g_k - sum_c g_c p_c)`.
fn softmax_vjp_row(p: &[f64], g_p: &[f64], out: &mut [f64]) {
    let dot: f64 = p.iter().zip(g_p).map(|(a, b)| a * b).sum();
    for ((o, &pk), &gk) in out.iter_mut().zip(p).zip(g_p) {
        *o = pk * (gk - dot);
    }
}

fn check_batch_shapes(preds: &Predictions, labels: &BatchLabels) -> Result<()> {
    if preds.batch_size() != labels.batch_size() {
        return Err(Error::Shape(format!(
            "predictions cover {} samples but labels cover {}",
            preds.batch_size(),
            labels.batch_size()
        )));
    }
    if preds.num_attributes() != labels.num_attributes() {
        return Err(Error::Shape(format!(
            "predictions have {} attributes but labels have {}",
            preds.num_attributes(),
            labels.num_attributes()
        )));
    }
    Ok(())
}

/// Cross entropy over class-labeled samples: the mean of
/// `-log p(true class)`. Samples without a class label contribute nothing,
/// to value or gradient; a batch with no class labels yields zero.
pub fn classification_loss(
    preds: &Predictions,
    labels: &BatchLabels,
    opts: &LossOptions,
) -> Result<LossTerm> {
    check_batch_shapes(preds, labels)?;
    opts.validate()?;
    let (b, k, m) = (
        preds.batch_size(),
        preds.num_classes(),
        preds.num_attributes(),
    );
    let n_labeled = labels.cls_labels.iter().flatten().count();
    let mut term = LossTerm::zeros(b, k, m);
    if n_labeled == 0 {
        return Ok(term);
    }

    let scale = 1.0 / n_labeled as f64;
    let mut value = 0.0;
    for (j, label) in labels.cls_labels.iter().enumerate() {
        let Some(y) = *label else { continue };
        if y >= k {
            return Err(Error::Label(format!(
                "sample {j}: class index {y} out of range for {k} classes"
            )));
        }
        let p_row = preds.cls_probs.row(j);
        value -= log_clamped(p_row[y], opts.log_eps);
        // softmax + cross entropy collapse to p - onehot
        let g_row = term.grad_cls_logits.row_mut(j);
        for (gk, &pk) in g_row.iter_mut().zip(p_row) {
            *gk = pk * scale;
        }
        g_row[y] -= scale;
    }
    term.value = value * scale;
    Ok(term)
}

/// Masked binary cross entropy over annotated attributes. Each sample with
/// at least one annotation contributes its per-annotation mean; the batch
/// value is the mean over contributing samples.
pub fn attribute_loss(
    preds: &Predictions,
    labels: &BatchLabels,
    opts: &LossOptions,
) -> Result<LossTerm> {
    check_batch_shapes(preds, labels)?;
    opts.validate()?;
    let (b, k, m) = (
        preds.batch_size(),
        preds.num_classes(),
        preds.num_attributes(),
    );
    let mask_counts = labels.mask_counts();
    let n_contrib = mask_counts.iter().filter(|&&c| c > 0.0).count();
    let mut term = LossTerm::zeros(b, k, m);
    if n_contrib == 0 {
        return Ok(term);
    }

    let outer = 1.0 / n_contrib as f64;
    let mut value = 0.0;
    for j in 0..b {
        if mask_counts[j] == 0.0 {
            continue;
        }
        let inv_count = 1.0 / mask_counts[j];
        let p_row = preds.att_probs.row(j);
        let y_row = labels.att_labels.row(j);
        let d_row = labels.att_mask.row(j);
        let g_row = term.grad_att_logits.row_mut(j);
        let mut sample_value = 0.0;
        for i in 0..m {
            if d_row[i] == 0.0 {
                continue;
            }
            let (p, y) = (p_row[i], y_row[i]);
            sample_value -=
                y * log_clamped(p, opts.log_eps) + (1.0 - y) * log_clamped(1.0 - p, opts.log_eps);
            // sigmoid + binary cross entropy collapse to p - y
            g_row[i] = (p - y) * inv_count * outer;
        }
        value += sample_value * inv_count;
    }
    term.value = value * outer;
    Ok(term)
}

/// Distribution matching. The expected attribute activations under the
/// class predictions are `q = cls_probs x mixture`; the loss is the mean
/// over the whole batch of `sum_i -att_prob_i log q_i`, the cross entropy
/// with `q` as the soft target.
///
/// Gradients flow into both heads: into the attribute head through the
/// `-p log q` weights, and into the class head through `q` (unless
/// `dm_stop_cls_grad` is set). With `symmetric_dm` the complementary
/// `-(1-p) log(1-q)` term is added.
pub fn distribution_matching_loss(
    preds: &Predictions,
    mix: &MixtureMatrix,
    opts: &LossOptions,
) -> Result<LossTerm> {
    opts.validate()?;
    let (b, k, m) = (
        preds.batch_size(),
        preds.num_classes(),
        preds.num_attributes(),
    );
    if mix.num_classes() != k || mix.num_attributes() != m {
        return Err(Error::Shape(format!(
            "mixture matrix is {}x{} but predictions imply {k}x{m}",
            mix.num_classes(),
            mix.num_attributes()
        )));
    }
    let eps = opts.log_eps;
    let q = preds.cls_probs.matmul(mix.values())?;

    let mut term = LossTerm::zeros(b, k, m);
    let scale = 1.0 / b as f64;
    let mut value = 0.0;
    // dL/dq, accumulated so the class-side pass below can fold it through
    // the mixture and the softmax in one sweep.
    let mut dq = Matrix::zeros(b, m);
    for j in 0..b {
        let s_row = preds.att_probs.row(j);
        let q_row = q.row(j);
        let g_att = term.grad_att_logits.row_mut(j);
        let dq_row = dq.row_mut(j);
        for i in 0..m {
            let (s, qi) = (s_row[i], q_row[i]);
            let log_q = log_clamped(qi, eps);
            value -= s * log_q;
            let mut d_s = -log_q;
            if qi > eps {
                dq_row[i] = -s / qi;
            }
            if opts.symmetric_dm {
                let one_minus = 1.0 - qi;
                let log_1q = log_clamped(one_minus, eps);
                value -= (1.0 - s) * log_1q;
                d_s += log_1q;
                if one_minus > eps {
                    dq_row[i] += (1.0 - s) / one_minus;
                }
            }
            g_att[i] = d_s * s * (1.0 - s) * scale;
        }
    }
    term.value = value * scale;

    if !opts.dm_stop_cls_grad {
        let mut g_p = vec![0.0; k];
        for j in 0..b {
            let dq_row = dq.row(j);
            for (c, g) in g_p.iter_mut().enumerate() {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += dq_row[i] * mix.values().get(c, i);
                }
                *g = acc * scale;
            }
            softmax_vjp_row(
                preds.cls_probs.row(j),
                &g_p,
                term.grad_cls_logits.row_mut(j),
            );
        }
    }
    Ok(term)
}

/// Indicator scores turned into soft class labels.
///
/// For every sample with at least one annotated attribute, each class is
/// scored by how many of its weighted attributes are active,
/// `I(c) = sum_i w[c,i] y_i / sum_i w[c,i]` (unannotated attributes count
/// as inactive; classes with an all-zero weight row score 0), and the
/// scores are softmaxed into a distribution over classes. Samples without
/// attribute annotations are flagged ineligible.
pub fn soft_class_labels(
    labels: &BatchLabels,
    iw: &IndicatorWeights,
    opts: &LossOptions,
) -> Result<SoftClassLabels> {
    opts.validate()?;
    let (b, m) = (labels.batch_size(), labels.num_attributes());
    let k = iw.values().rows();
    if iw.values().cols() != m {
        return Err(Error::Shape(format!(
            "indicator weights cover {} attributes but labels have {m}",
            iw.values().cols()
        )));
    }

    let mut probs = Matrix::zeros(b, k);
    let mut scores = Matrix::zeros(b, k);
    let eligible = labels.attribute_annotated();
    for j in 0..b {
        if !eligible[j] {
            // uniform placeholder; callers must skip ineligible rows
            for v in probs.row_mut(j) {
                *v = 1.0 / k as f64;
            }
            continue;
        }
        let y_row = labels.att_labels.row(j);
        let d_row = labels.att_mask.row(j);
        for c in 0..k {
            let w_row = iw.values().row(c);
            let denom = if opts.renorm_observed {
                w_row.iter().zip(d_row).map(|(&w, &d)| w * d).sum::<f64>()
            } else {
                iw.row_sums()[c]
            };
            if denom > 0.0 {
                // labels are stored as zero where unannotated, so the
                // numerator needs no masking
                let num: f64 = w_row.iter().zip(y_row).map(|(&w, &y)| w * y).sum();
                scores.set(j, c, num / denom);
            }
        }
        probs.row_mut(j).copy_from_slice(&softmax(scores.row(j))?);
    }
    Ok(SoftClassLabels {
        probs,
        scores,
        eligible,
    })
}

/// Soft co-annotation: cross entropy between the class predictions and the
/// soft class labels, averaged over eligible samples. The soft labels are
/// constants built from ground-truth attribute annotations, so gradients
/// flow only into the classification head.
pub fn soft_co_annotation_loss(
    preds: &Predictions,
    soft: &SoftClassLabels,
    opts: &LossOptions,
) -> Result<LossTerm> {
    opts.validate()?;
    let (b, k, m) = (
        preds.batch_size(),
        preds.num_classes(),
        preds.num_attributes(),
    );
    if soft.probs.rows() != b || soft.probs.cols() != k || soft.eligible.len() != b {
        return Err(Error::Shape(format!(
            "soft labels are {}x{} for a {b}x{k} prediction batch",
            soft.probs.rows(),
            soft.probs.cols()
        )));
    }
    let n_eligible = soft.eligible.iter().filter(|&&e| e).count();
    let mut term = LossTerm::zeros(b, k, m);
    if n_eligible == 0 {
        return Ok(term);
    }

    let scale = 1.0 / n_eligible as f64;
    let mut value = 0.0;
    let mut g_p = vec![0.0; k];
    for j in 0..b {
        if !soft.eligible[j] {
            continue;
        }
        let p_row = preds.cls_probs.row(j);
        let q_row = soft.probs.row(j);
        for c in 0..k {
            let log_q = log_clamped(q_row[c], opts.log_eps);
            value -= p_row[c] * log_q;
            g_p[c] = -log_q * scale;
        }
        softmax_vjp_row(p_row, &g_p, term.grad_cls_logits.row_mut(j));
    }
    term.value = value * scale;
    Ok(term)
}

/// The full multi-task objective: the lambda-weighted sum of the four
/// terms. Terms with a zero weight are skipped entirely (their reported
/// value is zero). The coupling terms require the corresponding
/// relatedness matrix.
pub fn total_loss(
    preds: &Predictions,
    labels: &BatchLabels,
    mix: Option<&MixtureMatrix>,
    iw: Option<&IndicatorWeights>,
    lambdas: &Lambdas,
    opts: &LossOptions,
) -> Result<LossReport> {
    lambdas.validate()?;
    opts.validate()?;
    check_batch_shapes(preds, labels)?;
    let (b, k, m) = (
        preds.batch_size(),
        preds.num_classes(),
        preds.num_attributes(),
    );

    let mut report = LossReport {
        l_cls: 0.0,
        l_att: 0.0,
        l_dm: 0.0,
        l_sca: 0.0,
        l_total: 0.0,
        grad_cls_logits: Matrix::zeros(b, k),
        grad_att_logits: Matrix::zeros(b, m),
    };

    let accumulate = |report: &mut LossReport, term: &LossTerm, lambda: f64| {
        for (acc, g) in report
            .grad_cls_logits
            .values_mut()
            .iter_mut()
            .zip(term.grad_cls_logits.values())
        {
            *acc += lambda * g;
        }
        for (acc, g) in report
            .grad_att_logits
            .values_mut()
            .iter_mut()
            .zip(term.grad_att_logits.values())
        {
            *acc += lambda * g;
        }
    };

    if lambdas.cls > 0.0 {
        let term = classification_loss(preds, labels, opts)?;
        report.l_cls = term.value;
        accumulate(&mut report, &term, lambdas.cls);
    }
    if lambdas.att > 0.0 {
        let term = attribute_loss(preds, labels, opts)?;
        report.l_att = term.value;
        accumulate(&mut report, &term, lambdas.att);
    }
    if lambdas.dm > 0.0 {
        let mix = mix.ok_or_else(|| {
            Error::Config("distribution matching is enabled but no relatedness is given".into())
        })?;
        let term = distribution_matching_loss(preds, mix, opts)?;
        report.l_dm = term.value;
        accumulate(&mut report, &term, lambdas.dm);
    }
    if lambdas.sca > 0.0 {
        let iw = iw.ok_or_else(|| {
            Error::Config("soft co-annotation is enabled but no relatedness is given".into())
        })?;
        let soft = soft_class_labels(labels, iw, opts)?;
        let term = soft_co_annotation_loss(preds, &soft, opts)?;
        report.l_sca = term.value;
        accumulate(&mut report, &term, lambdas.sca);
    }

    report.l_total = lambdas.cls * report.l_cls
        + lambdas.att * report.l_att
        + lambdas.dm * report.l_dm
        + lambdas.sca * report.l_sca;
    if !report.l_total.is_finite() {
        return Err(Error::InvalidInput("loss is not finite".into()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_rel_err};
    use crate::numerics::SeededRng;
    use crate::relatedness::RelatednessSpec;

    const OPTS: LossOptions = LossOptions {
        log_eps: 1e-8,
        symmetric_dm: false,
        dm_stop_cls_grad: false,
        renorm_observed: false,
    };

    fn rand_logits(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| 2.0 * rng.next_gaussian())
                .collect(),
        )
        .unwrap()
    }

    fn rand_labels(rng: &mut SeededRng, b: usize, k: usize, m: usize) -> BatchLabels {
        loop {
            let cls_labels: Vec<Option<usize>> = (0..b)
                .map(|_| rng.bernoulli(0.6).then(|| rng.next_below(k)))
                .collect();
            let mut att_labels = Matrix::zeros(b, m);
            let mut att_mask = Matrix::zeros(b, m);
            for j in 0..b {
                for i in 0..m {
                    if rng.bernoulli(0.7) {
                        att_mask.set(j, i, 1.0);
                        att_labels.set(j, i, f64::from(rng.bernoulli(0.5)));
                    }
                }
            }
            if let Ok(labels) = BatchLabels::new(cls_labels, att_labels, att_mask) {
                return labels;
            }
        }
    }

    fn rand_spec(rng: &mut SeededRng, k: usize, m: usize) -> RelatednessSpec {
        let class_names = (0..k).map(|c| format!("c{c}")).collect();
        let attribute_names = (0..m).map(|a| format!("a{a}")).collect();
        let entries = (0..k * m)
            .map(|_| {
                if rng.bernoulli(0.5) {
                    crate::relatedness::Relation {
                        kind: crate::relatedness::RelationKind::Empirical,
                        weight: 0.05 + 0.95 * rng.next_f64(),
                    }
                } else {
                    crate::relatedness::Relation::NONE
                }
            })
            .collect();
        RelatednessSpec::new(class_names, attribute_names, entries).unwrap()
    }

    /// Flattens (cls_logits, att_logits) into one vector for FD probing.
    fn loss_of_flat_logits(
        flat: &[f64],
        b: usize,
        k: usize,
        m: usize,
        eval: &dyn Fn(&Predictions) -> f64,
    ) -> f64 {
        let cls = Matrix::from_vec(b, k, flat[..b * k].to_vec()).unwrap();
        let att = Matrix::from_vec(b, m, flat[b * k..].to_vec()).unwrap();
        let preds = predictions_from_logits(&cls, &att).unwrap();
        eval(&preds)
    }

    /// Checks a loss term's analytic logit gradients against central
    /// differences.
    fn check_gradients(
        cls_logits: &Matrix,
        att_logits: &Matrix,
        term_of: &dyn Fn(&Predictions) -> LossTerm,
    ) -> f64 {
        let (b, k) = (cls_logits.rows(), cls_logits.cols());
        let m = att_logits.cols();
        let preds = predictions_from_logits(cls_logits, att_logits).unwrap();
        let term = term_of(&preds);

        let mut flat = cls_logits.values().to_vec();
        flat.extend_from_slice(att_logits.values());
        let numeric = central_difference(
            |x| loss_of_flat_logits(x, b, k, m, &|p| term_of(p).value),
            &flat,
            1e-6,
        );
        let mut analytic = term.grad_cls_logits.values().to_vec();
        analytic.extend_from_slice(term.grad_att_logits.values());
        max_rel_err(&analytic, &numeric, 1e-2)
    }

    #[test]
    fn classification_loss_worked_examples() {
        let labels = BatchLabels::new(
            vec![Some(0)],
            Matrix::zeros(1, 2),
            Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(),
        )
        .unwrap();

        let onehot = Predictions::new(
            Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(),
            Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        assert_eq!(
            classification_loss(&onehot, &labels, &OPTS).unwrap().value,
            0.0
        );

        let uniform = Predictions::new(
            Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap(),
            Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        let term = classification_loss(&uniform, &labels, &OPTS).unwrap();
        assert!((term.value - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn classification_loss_rejects_out_of_range_labels() {
        let preds = predictions_from_logits(&Matrix::zeros(1, 2), &Matrix::zeros(1, 2)).unwrap();
        let labels = BatchLabels::new(vec![Some(5)], Matrix::zeros(1, 2), Matrix::zeros(1, 2));
        // ctor accepts (class index range is unknown there)...
        let labels = labels.unwrap();
        assert!(matches!(
            classification_loss(&preds, &labels, &OPTS),
            Err(Error::Label(_))
        ));
    }

    #[test]
    fn classification_loss_without_labels_is_zero() {
        let preds = predictions_from_logits(&Matrix::zeros(2, 3), &Matrix::zeros(2, 2)).unwrap();
        let labels = BatchLabels::new(
            vec![None, None],
            Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap(),
            Matrix::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap(),
        )
        .unwrap();
        let term = classification_loss(&preds, &labels, &OPTS).unwrap();
        assert_eq!(term.value, 0.0);
        assert!(term.grad_cls_logits.values().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn attribute_loss_worked_examples() {
        // one sample, M=1, annotated positive, p=0.5 -> ln 2
        let preds = Predictions::new(
            Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap(),
            Matrix::from_vec(1, 1, vec![0.5]).unwrap(),
        )
        .unwrap();
        let labels = BatchLabels::new(
            vec![None],
            Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
        )
        .unwrap();
        let term = attribute_loss(&preds, &labels, &OPTS).unwrap();
        assert!((term.value - std::f64::consts::LN_2).abs() < 1e-12);

        // an all-masked sample contributes nothing
        let preds2 = Predictions::new(
            Matrix::from_vec(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap(),
            Matrix::from_vec(2, 1, vec![0.9, 0.5]).unwrap(),
        )
        .unwrap();
        let labels2 = BatchLabels::new(
            vec![Some(0), None],
            Matrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap(),
            Matrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap(),
        )
        .unwrap();
        let term2 = attribute_loss(&preds2, &labels2, &OPTS).unwrap();
        assert!((term2.value - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(term2.grad_att_logits.get(0, 0), 0.0);
        assert!(term2.grad_att_logits.get(1, 0) != 0.0);
    }

    #[test]
    fn masked_samples_get_exactly_zero_gradients() {
        let mut rng = SeededRng::new(99);
        let (b, k, m) = (6, 4, 5);
        let cls_logits = rand_logits(&mut rng, b, k);
        let att_logits = rand_logits(&mut rng, b, m);
        let preds = predictions_from_logits(&cls_logits, &att_logits).unwrap();

        // row 0: class-only; row 1: attribute-only; rest mixed
        let mut cls_labels: Vec<Option<usize>> = vec![Some(1), None];
        let mut att_mask = Matrix::zeros(b, m);
        let mut att_labels = Matrix::zeros(b, m);
        for i in 0..m {
            att_mask.set(1, i, 1.0);
            att_labels.set(1, i, f64::from(rng.bernoulli(0.5)));
        }
        for j in 2..b {
            cls_labels.push(Some(rng.next_below(k)));
            for i in 0..m {
                att_mask.set(j, i, 1.0);
                att_labels.set(j, i, f64::from(rng.bernoulli(0.5)));
            }
        }
        let labels = BatchLabels::new(cls_labels, att_labels, att_mask).unwrap();

        let cls_term = classification_loss(&preds, &labels, &OPTS).unwrap();
        assert!(cls_term.grad_cls_logits.row(1).iter().all(|&g| g == 0.0));

        let att_term = attribute_loss(&preds, &labels, &OPTS).unwrap();
        assert!(att_term.grad_att_logits.row(0).iter().all(|&g| g == 0.0));

        let iw = rand_spec(&mut rng, k, m).indicator_weights();
        let soft = soft_class_labels(&labels, &iw, &OPTS).unwrap();
        assert!(!soft.eligible[0]);
        let sca_term = soft_co_annotation_loss(&preds, &soft, &OPTS).unwrap();
        assert!(sca_term.grad_cls_logits.row(0).iter().all(|&g| g == 0.0));
        assert!(sca_term.grad_att_logits.values().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn distribution_matching_worked_examples() {
        let spec = RelatednessSpec::bundled_domain();
        let mix = spec.mixture_matrix();
        let (k, m) = (spec.num_classes(), spec.num_attributes());
        let hap = spec
            .class_names()
            .iter()
            .position(|n| n == "happiness")
            .unwrap();

        // one-hot happiness: q is exactly the happiness mixture row
        let mut cls = Matrix::zeros(1, k);
        cls.set(0, hap, 1.0);
        let preds =
            Predictions::new(cls.clone(), Matrix::from_vec(1, m, vec![0.5; m]).unwrap()).unwrap();
        let q = preds.cls_probs().matmul(mix.values()).unwrap();
        for (i, name) in spec.attribute_names().iter().enumerate() {
            let expected = if ["AU12", "AU25", "AU6"].contains(&name.as_str()) {
                1.0
            } else {
                0.0
            };
            assert_eq!(q.get(0, i), expected, "q({name})");
        }

        // mass split over surprise and fear: q(AU2) is the sum
        let sur = spec
            .class_names()
            .iter()
            .position(|n| n == "surprise")
            .unwrap();
        let fear = spec.class_names().iter().position(|n| n == "fear").unwrap();
        let au2 = spec
            .attribute_names()
            .iter()
            .position(|n| n == "AU2")
            .unwrap();
        let mut cls2 = Matrix::zeros(1, k);
        cls2.set(0, sur, 0.3);
        cls2.set(0, fear, 0.45);
        cls2.set(0, hap, 0.25);
        let preds2 = Predictions::new(cls2, Matrix::from_vec(1, m, vec![0.5; m]).unwrap()).unwrap();
        let q2 = preds2.cls_probs().matmul(mix.values()).unwrap();
        assert!((q2.get(0, au2) - 0.75).abs() < 1e-12);

        // near-zero attribute probabilities give a near-zero loss
        let tiny = Predictions::new(cls, Matrix::from_vec(1, m, vec![1e-12; m]).unwrap()).unwrap();
        let term = distribution_matching_loss(&tiny, &mix, &OPTS).unwrap();
        assert!(term.value.abs() < 1e-9);
    }

    #[test]
    fn distribution_matching_is_zero_when_predictions_are_consistent() {
        // one-hot class, attribute predictions ~1 exactly on the related
        // attributes and ~0 elsewhere
        let spec = RelatednessSpec::bundled_domain();
        let mix = spec.mixture_matrix();
        let (k, m) = (spec.num_classes(), spec.num_attributes());
        let hap = spec
            .class_names()
            .iter()
            .position(|n| n == "happiness")
            .unwrap();
        let mut cls = Matrix::zeros(1, k);
        cls.set(0, hap, 1.0);
        let mut att = Matrix::zeros(1, m);
        for i in 0..m {
            let related = mix.values().get(hap, i) == 1.0;
            att.set(0, i, if related { 1.0 - 1e-13 } else { 1e-13 });
        }
        let preds = Predictions::new(cls, att).unwrap();
        let term = distribution_matching_loss(&preds, &mix, &OPTS).unwrap();
        // unrelated attributes contribute att * -ln(eps) ~ 1e-13 * 18.4
        assert!(term.value.abs() < 1e-10, "value {}", term.value);
    }

    #[test]
    fn distribution_matching_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(1234);
        for trial in 0..20 {
            let (b, k, m) = (
                1 + rng.next_below(4),
                2 + rng.next_below(4),
                1 + rng.next_below(5),
            );
            let spec = rand_spec(&mut rng, k, m);
            let mix = spec.mixture_matrix();
            let cls_logits = rand_logits(&mut rng, b, k);
            let att_logits = rand_logits(&mut rng, b, m);
            for opts in [
                OPTS,
                LossOptions {
                    symmetric_dm: true,
                    ..OPTS
                },
            ] {
                let err = check_gradients(&cls_logits, &att_logits, &|preds| {
                    distribution_matching_loss(preds, &mix, &opts).unwrap()
                });
                assert!(err < 1e-5, "trial {trial}: rel err {err}");
            }
        }
    }

    #[test]
    fn distribution_matching_rejects_mismatched_shapes() {
        let mut rng = SeededRng::new(6);
        let spec = rand_spec(&mut rng, 3, 4);
        let mix = spec.mixture_matrix();
        // predictions claim 5 attributes, the mixture covers 4
        let preds =
            predictions_from_logits(&rand_logits(&mut rng, 2, 3), &rand_logits(&mut rng, 2, 5))
                .unwrap();
        assert!(matches!(
            distribution_matching_loss(&preds, &mix, &OPTS),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn dm_stop_class_gradient_flag() {
        let mut rng = SeededRng::new(5);
        let spec = rand_spec(&mut rng, 3, 4);
        let mix = spec.mixture_matrix();
        let preds =
            predictions_from_logits(&rand_logits(&mut rng, 2, 3), &rand_logits(&mut rng, 2, 4))
                .unwrap();
        let stopped = distribution_matching_loss(
            &preds,
            &mix,
            &LossOptions {
                dm_stop_cls_grad: true,
                ..OPTS
            },
        )
        .unwrap();
        assert!(stopped.grad_cls_logits.values().iter().all(|&g| g == 0.0));
        let flowing = distribution_matching_loss(&preds, &mix, &OPTS).unwrap();
        assert!(flowing.grad_cls_logits.values().iter().any(|&g| g != 0.0));
        assert_eq!(stopped.value, flowing.value);
    }

    #[test]
    fn soft_labels_worked_examples() {
        let spec = RelatednessSpec::bundled_domain();
        let iw = spec.indicator_weights();
        let (k, m) = (spec.num_classes(), spec.num_attributes());
        let idx = |name: &str| {
            spec.attribute_names()
                .iter()
                .position(|n| n == name)
                .unwrap()
        };

        // active AU12, AU25, AU6 -> indicator for happiness is exactly 1
        let mut att_labels = Matrix::zeros(1, m);
        for name in ["AU12", "AU25", "AU6"] {
            att_labels.set(0, idx(name), 1.0);
        }
        let labels = BatchLabels::new(
            vec![None],
            att_labels,
            Matrix::from_vec(1, m, vec![1.0; m]).unwrap(),
        )
        .unwrap();
        let hap = spec
            .class_names()
            .iter()
            .position(|n| n == "happiness")
            .unwrap();
        let w_row = iw.values().row(hap);
        let num: f64 = w_row
            .iter()
            .zip(labels.att_labels.row(0))
            .map(|(&w, &y)| w * y)
            .sum();
        assert_eq!(num / iw.row_sums()[hap], 1.0);

        let soft = soft_class_labels(&labels, &iw, &OPTS).unwrap();
        assert!(soft.eligible[0]);
        let row = soft.probs.row(0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // happiness is the strongest class in the soft label
        let argmax = (0..k)
            .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
            .unwrap();
        assert_eq!(argmax, hap);

        // all-zero attribute labels give the uniform soft label
        let labels0 = BatchLabels::new(
            vec![None],
            Matrix::zeros(1, m),
            Matrix::from_vec(1, m, vec![1.0; m]).unwrap(),
        )
        .unwrap();
        let soft0 = soft_class_labels(&labels0, &iw, &OPTS).unwrap();
        for &p in soft0.probs.row(0) {
            assert!((p - 1.0 / k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_labels_match_scalar_oracle() {
        // direct scalar evaluation of the indicator + softmax construction
        let spec = RelatednessSpec::bundled_domain();
        let iw = spec.indicator_weights();
        let (k, m) = (spec.num_classes(), spec.num_attributes());
        let mut rng = SeededRng::new(321);
        for _ in 0..50 {
            let ys: Vec<f64> = (0..m).map(|_| f64::from(rng.bernoulli(0.4))).collect();
            let labels = BatchLabels::new(
                vec![None],
                Matrix::from_vec(1, m, ys.clone()).unwrap(),
                Matrix::from_vec(1, m, vec![1.0; m]).unwrap(),
            )
            .unwrap();
            let soft = soft_class_labels(&labels, &iw, &OPTS).unwrap();

            let mut scores = vec![0.0; k];
            for c in 0..k {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..m {
                    num += iw.values().get(c, i) * ys[i];
                    den += iw.values().get(c, i);
                }
                scores[c] = if den > 0.0 { num / den } else { 0.0 };
            }
            let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            let z: f64 = exp.iter().sum();
            for c in 0..k {
                assert!((soft.probs.get(0, c) - exp[c] / z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn renorm_observed_changes_the_denominator() {
        let spec = RelatednessSpec::parse(
            "classes: a,b\nattributes: x,y\na: obs=x:0.5,y:0.5\nb: proto=y\n",
        )
        .unwrap();
        let iw = spec.indicator_weights();
        // only x annotated (and active); y unannotated
        let labels = BatchLabels::new(
            vec![None],
            Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(),
            Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(),
        )
        .unwrap();
        let plain = soft_class_labels(&labels, &iw, &OPTS).unwrap();
        let renormed = soft_class_labels(
            &labels,
            &iw,
            &LossOptions {
                renorm_observed: true,
                ..OPTS
            },
        )
        .unwrap();
        // plain: I(a) = 0.5/1.0; renormed: I(a) = 0.5/0.5 = 1
        assert!(plain.probs.get(0, 0) < renormed.probs.get(0, 0));
    }

    #[test]
    fn soft_co_annotation_worked_examples() {
        let k = 4;
        let uniform = Matrix::from_vec(1, k, vec![0.25; k]).unwrap();
        let preds = Predictions::new(
            uniform.clone(),
            Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        let soft = SoftClassLabels {
            probs: uniform,
            scores: Matrix::zeros(1, k),
            eligible: vec![true],
        };
        let term = soft_co_annotation_loss(&preds, &soft, &OPTS).unwrap();
        assert!((term.value - (k as f64).ln()).abs() < 1e-12);

        // one-hot prediction onto a soft label with mass 1 at that class
        let mut onehot = Matrix::zeros(1, k);
        onehot.set(0, 2, 1.0);
        let preds2 = Predictions::new(
            onehot.clone(),
            Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap(),
        )
        .unwrap();
        let soft2 = SoftClassLabels {
            probs: onehot,
            scores: Matrix::zeros(1, k),
            eligible: vec![true],
        };
        let term2 = soft_co_annotation_loss(&preds2, &soft2, &OPTS).unwrap();
        assert_eq!(term2.value, 0.0);

        // no eligible samples -> zero loss, zero gradient
        let soft3 = SoftClassLabels {
            probs: Matrix::from_vec(1, k, vec![0.25; k]).unwrap(),
            scores: Matrix::zeros(1, k),
            eligible: vec![false],
        };
        let term3 = soft_co_annotation_loss(&preds2, &soft3, &OPTS).unwrap();
        assert_eq!(term3.value, 0.0);
        assert!(term3.grad_cls_logits.values().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn per_loss_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(777);
        for trial in 0..25 {
            let (b, k, m) = (
                1 + rng.next_below(5),
                2 + rng.next_below(5),
                1 + rng.next_below(6),
            );
            let labels = rand_labels(&mut rng, b, k, m);
            let spec = rand_spec(&mut rng, k, m);
            let iw = spec.indicator_weights();
            let soft = soft_class_labels(&labels, &iw, &OPTS).unwrap();
            let cls_logits = rand_logits(&mut rng, b, k);
            let att_logits = rand_logits(&mut rng, b, m);

            let cases: Vec<(&str, Box<dyn Fn(&Predictions) -> LossTerm>)> = vec![
                (
                    "cls",
                    Box::new({
                        let labels = labels.clone();
                        move |p: &Predictions| classification_loss(p, &labels, &OPTS).unwrap()
                    }),
                ),
                (
                    "att",
                    Box::new({
                        let labels = labels.clone();
                        move |p: &Predictions| attribute_loss(p, &labels, &OPTS).unwrap()
                    }),
                ),
                (
                    "sca",
                    Box::new({
                        let soft = soft.clone();
                        move |p: &Predictions| soft_co_annotation_loss(p, &soft, &OPTS).unwrap()
                    }),
                ),
            ];
            for (name, term_of) in &cases {
                let err = check_gradients(&cls_logits, &att_logits, term_of.as_ref());
                assert!(err < 1e-5, "trial {trial} loss {name}: rel err {err}");
            }
        }
    }

    #[test]
    fn total_loss_is_a_weighted_sum_with_selector_lambdas() {
        let mut rng = SeededRng::new(42);
        let (b, k, m) = (5, 3, 4);
        let labels = rand_labels(&mut rng, b, k, m);
        let spec = rand_spec(&mut rng, k, m);
        let (mix, iw) = (spec.mixture_matrix(), spec.indicator_weights());
        let preds =
            predictions_from_logits(&rand_logits(&mut rng, b, k), &rand_logits(&mut rng, b, m))
                .unwrap();

        // selector: only the classification term
        let only_cls = total_loss(
            &preds,
            &labels,
            None,
            None,
            &Lambdas {
                cls: 1.0,
                att: 0.0,
                dm: 0.0,
                sca: 0.0,
            },
            &OPTS,
        )
        .unwrap();
        let cls_term = classification_loss(&preds, &labels, &OPTS).unwrap();
        assert_eq!(only_cls.l_total, cls_term.value);
        assert_eq!(only_cls.grad_cls_logits, cls_term.grad_cls_logits);
        assert_eq!(only_cls.l_dm, 0.0);

        // full report: total equals the weighted sum, gradients equal the
        // sum of the component gradients
        let lambdas = Lambdas {
            cls: 1.0,
            att: 0.7,
            dm: 0.4,
            sca: 1.3,
        };
        let report = total_loss(&preds, &labels, Some(&mix), Some(&iw), &lambdas, &OPTS).unwrap();
        let expect_total = lambdas.cls * report.l_cls
            + lambdas.att * report.l_att
            + lambdas.dm * report.l_dm
            + lambdas.sca * report.l_sca;
        assert!((report.l_total - expect_total).abs() < 1e-12);

        let att_term = attribute_loss(&preds, &labels, &OPTS).unwrap();
        let dm_term = distribution_matching_loss(&preds, &mix, &OPTS).unwrap();
        let soft = soft_class_labels(&labels, &iw, &OPTS).unwrap();
        let sca_term = soft_co_annotation_loss(&preds, &soft, &OPTS).unwrap();
        for idx in 0..b * k {
            let expect = lambdas.cls * cls_term.grad_cls_logits.values()[idx]
                + lambdas.att * att_term.grad_cls_logits.values()[idx]
                + lambdas.dm * dm_term.grad_cls_logits.values()[idx]
                + lambdas.sca * sca_term.grad_cls_logits.values()[idx];
            assert!((report.grad_cls_logits.values()[idx] - expect).abs() < 1e-12);
        }
        for idx in 0..b * m {
            let expect = lambdas.att * att_term.grad_att_logits.values()[idx]
                + lambdas.dm * dm_term.grad_att_logits.values()[idx];
            assert!((report.grad_att_logits.values()[idx] - expect).abs() < 1e-12);
        }

        // every component is nonnegative
        for v in [report.l_cls, report.l_att, report.l_dm, report.l_sca] {
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn uncoupled_total_equals_sum_of_task_losses() {
        // fully annotated batch, coupling off
        let mut rng = SeededRng::new(31);
        let (b, k, m) = (6, 3, 4);
        let cls_labels: Vec<Option<usize>> = (0..b).map(|_| Some(rng.next_below(k))).collect();
        let mut att_labels = Matrix::zeros(b, m);
        for v in att_labels.values_mut() {
            *v = f64::from(rng.bernoulli(0.5));
        }
        let att_mask = Matrix::from_vec(b, m, vec![1.0; b * m]).unwrap();
        let labels = BatchLabels::new(cls_labels, att_labels, att_mask).unwrap();
        let preds =
            predictions_from_logits(&rand_logits(&mut rng, b, k), &rand_logits(&mut rng, b, m))
                .unwrap();
        let report = total_loss(
            &preds,
            &labels,
            None,
            None,
            &Lambdas {
                cls: 1.0,
                att: 1.0,
                dm: 0.0,
                sca: 0.0,
            },
            &OPTS,
        )
        .unwrap();
        let cls = classification_loss(&preds, &labels, &OPTS).unwrap().value;
        let att = attribute_loss(&preds, &labels, &OPTS).unwrap().value;
        assert!((report.l_total - (cls + att)).abs() < 1e-12);
    }

    #[test]
    fn total_loss_validates_configuration() {
        let preds = predictions_from_logits(&Matrix::zeros(1, 2), &Matrix::zeros(1, 2)).unwrap();
        let labels =
            BatchLabels::new(vec![Some(0)], Matrix::zeros(1, 2), Matrix::zeros(1, 2)).unwrap();
        let negative = Lambdas {
            cls: -1.0,
            ..Lambdas::default()
        };
        assert!(matches!(
            total_loss(&preds, &labels, None, None, &negative, &OPTS),
            Err(Error::Config(_))
        ));
        // coupling enabled without relatedness
        assert!(matches!(
            total_loss(&preds, &labels, None, None, &Lambdas::default(), &OPTS),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn losses_are_invariant_to_batch_permutation() {
        let mut rng = SeededRng::new(17);
        let (b, k, m) = (8, 4, 5);
        let labels = rand_labels(&mut rng, b, k, m);
        let spec = rand_spec(&mut rng, k, m);
        let (mix, iw) = (spec.mixture_matrix(), spec.indicator_weights());
        let cls_logits = rand_logits(&mut rng, b, k);
        let att_logits = rand_logits(&mut rng, b, m);
        let preds = predictions_from_logits(&cls_logits, &att_logits).unwrap();
        let report = total_loss(
            &preds,
            &labels,
            Some(&mix),
            Some(&iw),
            &Lambdas::default(),
            &OPTS,
        )
        .unwrap();

        let mut perm: Vec<usize> = (0..b).collect();
        rng.shuffle(&mut perm);
        let permute = |mat: &Matrix| {
            let mut out = Matrix::zeros(b, mat.cols());
            for (to, &from) in perm.iter().enumerate() {
                out.row_mut(to).copy_from_slice(mat.row(from));
            }
            out
        };
        let p_labels = BatchLabels::new(
            perm.iter().map(|&j| labels.cls_labels[j]).collect(),
            permute(&labels.att_labels),
            permute(&labels.att_mask),
        )
        .unwrap();
        let p_preds =
            predictions_from_logits(&permute(&cls_logits), &permute(&att_logits)).unwrap();
        let p_report = total_loss(
            &p_preds,
            &p_labels,
            Some(&mix),
            Some(&iw),
            &Lambdas::default(),
            &OPTS,
        )
        .unwrap();
        for (a, b) in [
            (report.l_cls, p_report.l_cls),
            (report.l_att, p_report.l_att),
            (report.l_dm, p_report.l_dm),
            (report.l_sca, p_report.l_sca),
            (report.l_total, p_report.l_total),
        ] {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
