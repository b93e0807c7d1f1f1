//! Annotation schema, dataset CSV parsing, masked batching, and a
//! synthetic generator for the non-overlapping-annotation regime.
//!
//! # Dataset CSV format
//!
//! Header `id,x0,...,x{d-1},cls,att_<name>,...`, one sample per row. An
//! empty `cls` cell means the sample has no class label; an empty
//! attribute cell means that attribute is unannotated (mask 0). Attribute
//! cells must otherwise be `0` or `1`; the class cell holds a class name
//! or index. A sample must carry at least one annotation.
//!
//! # Schema sidecar
//!
//! `classes = ...`, `attributes = ...`, `feature_dim = N` in plain
//! `key = value` lines.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::BatchLabels;
use crate::numerics::{Matrix, SeededRng};
use crate::relatedness::{validate_name_list, RelatednessSpec};

/// Names and dimensions every sample of a dataset conforms to.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    class_names: Vec<String>,
    attribute_names: Vec<String>,
    feature_dim: usize,
}

impl Schema {
    pub fn new(
        class_names: Vec<String>,
        attribute_names: Vec<String>,
        feature_dim: usize,
    ) -> Result<Schema> {
        if class_names.len() < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                class_names.len()
            )));
        }
        if attribute_names.is_empty() {
            return Err(Error::Config("need at least 1 attribute".into()));
        }
        if feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        validate_name_list("class", &class_names)?;
        validate_name_list("attribute", &attribute_names)?;
        Ok(Schema {
            class_names,
            attribute_names,
            feature_dim,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }

    pub fn to_text(&self) -> String {
        format!(
            "classes = {}\nattributes = {}\nfeature_dim = {}\n",
            self.class_names.join(","),
            self.attribute_names.join(","),
            self.feature_dim
        )
    }

    pub fn parse(text: &str) -> Result<Schema> {
        let mut classes = None;
        let mut attributes = None;
        let mut dim = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected `key = value`".into(),
            })?;
            let value = value.trim();
            match key.trim() {
                "classes" => {
                    classes = Some(
                        value
                            .split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect::<Vec<_>>(),
                    )
                }
                "attributes" => {
                    attributes = Some(
                        value
                            .split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect::<Vec<_>>(),
                    )
                }
                "feature_dim" => {
                    dim = Some(value.parse::<usize>().map_err(|_| Error::Parse {
                        line: idx + 1,
                        message: format!("bad feature_dim {value:?}"),
                    })?)
                }
                other => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        message: format!("unknown schema key {other:?}"),
                    })
                }
            }
        }
        Schema::new(
            classes.ok_or_else(|| Error::Config("schema is missing `classes`".into()))?,
            attributes.ok_or_else(|| Error::Config("schema is missing `attributes`".into()))?,
            dim.ok_or_else(|| Error::Config("schema is missing `feature_dim`".into()))?,
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Schema> {
        Schema::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// One partially annotated sample. Attribute labels are only meaningful
/// where the mask is 1 and are stored as 0 elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub cls_label: Option<usize>,
    pub att_labels: Vec<u8>,
    pub att_mask: Vec<u8>,
}

impl Sample {
    pub fn has_attribute_annotations(&self) -> bool {
        self.att_mask.contains(&1)
    }
}

/// A nonempty list of samples conforming to one schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Schema,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(schema: Schema, samples: Vec<Sample>) -> Result<Dataset> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("dataset must be nonempty".into()));
        }
        for (idx, s) in samples.iter().enumerate() {
            if s.features.len() != schema.feature_dim() {
                return Err(Error::Shape(format!(
                    "sample {idx}: expected {} features, got {}",
                    schema.feature_dim(),
                    s.features.len()
                )));
            }
            if !s.features.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "sample {idx}: features must be finite"
                )));
            }
            if s.att_labels.len() != schema.num_attributes()
                || s.att_mask.len() != schema.num_attributes()
            {
                return Err(Error::Shape(format!(
                    "sample {idx}: attribute vectors must have length {}",
                    schema.num_attributes()
                )));
            }
            if let Some(c) = s.cls_label {
                if c >= schema.num_classes() {
                    return Err(Error::Label(format!(
                        "sample {idx}: class index {c} out of range"
                    )));
                }
            }
            for (i, (&l, &m)) in s.att_labels.iter().zip(&s.att_mask).enumerate() {
                if l > 1 || m > 1 {
                    return Err(Error::Label(format!(
                        "sample {idx}: attribute {i} label/mask must be 0 or 1"
                    )));
                }
                if m == 0 && l != 0 {
                    return Err(Error::Label(format!(
                        "sample {idx}: attribute {i} label set but unannotated"
                    )));
                }
            }
            if s.cls_label.is_none() && !s.has_attribute_annotations() {
                return Err(Error::Label(format!(
                    "sample {idx}: sample has no annotations at all"
                )));
            }
        }
        Ok(Dataset { schema, samples })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_class_labels(&self) -> bool {
        self.samples.iter().any(|s| s.cls_label.is_some())
    }

    pub fn has_attribute_labels(&self) -> bool {
        self.samples.iter().any(Sample::has_attribute_annotations)
    }

    /// Features of all samples as one |samples| x d matrix.
    pub fn features_matrix(&self) -> Matrix {
        let d = self.schema.feature_dim();
        let mut values = Vec::with_capacity(self.len() * d);
        for s in &self.samples {
            values.extend_from_slice(&s.features);
        }
        Matrix::from_vec(self.len(), d, values).expect("validated on construction")
    }
}

/// Parses a dataset CSV against a schema. Errors carry the 1-based file
/// line number.
pub fn parse_dataset(text: &str, schema: &Schema) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty dataset file".into(),
    })?;
    let expected_header = csv_header(schema);
    if header.trim() != expected_header {
        return Err(Error::Parse {
            line: 1,
            message: format!("header does not match schema; expected {expected_header:?}"),
        });
    }

    let d = schema.feature_dim();
    let m = schema.num_attributes();
    let width = 1 + d + 1 + m;
    let mut samples = Vec::new();

    for (idx, raw) in lines {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {width} cells, got {}", cells.len()),
            });
        }
        let mut features = Vec::with_capacity(d);
        for (j, cell) in cells[1..1 + d].iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("feature x{j} is not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("feature x{j} must be finite"),
                });
            }
            features.push(v);
        }
        let cls_cell = cells[1 + d];
        let cls_label = if cls_cell.is_empty() {
            None
        } else if let Some(idx) = schema.class_index(cls_cell) {
            Some(idx)
        } else if let Ok(idx) = cls_cell.parse::<usize>() {
            if idx >= schema.num_classes() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("class index {idx} out of range"),
                });
            }
            Some(idx)
        } else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unknown class {cls_cell:?}"),
            });
        };
        let mut att_labels = Vec::with_capacity(m);
        let mut att_mask = Vec::with_capacity(m);
        for (i, cell) in cells[2 + d..].iter().enumerate() {
            match *cell {
                "" => {
                    att_labels.push(0);
                    att_mask.push(0);
                }
                "0" => {
                    att_labels.push(0);
                    att_mask.push(1);
                }
                "1" => {
                    att_labels.push(1);
                    att_mask.push(1);
                }
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!(
                            "attribute {} must be empty, 0 or 1, got {other:?}",
                            schema.attribute_names()[i]
                        ),
                    })
                }
            }
        }
        if cls_label.is_none() && att_mask.iter().all(|&v| v == 0) {
            return Err(Error::Parse {
                line: line_no,
                message: "sample has no annotations at all".into(),
            });
        }
        samples.push(Sample {
            features,
            cls_label,
            att_labels,
            att_mask,
        });
    }

    Dataset::new(schema.clone(), samples)
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    parse_dataset(&std::fs::read_to_string(path)?, schema)
}

fn csv_header(schema: &Schema) -> String {
    let mut header = String::from("id");
    for j in 0..schema.feature_dim() {
        let _ = write!(header, ",x{j}");
    }
    header.push_str(",cls");
    for name in schema.attribute_names() {
        let _ = write!(header, ",att_{name}");
    }
    header
}

/// Serializes a dataset to the CSV format; floats print in shortest
/// round-trip form so write -> parse reproduces the dataset exactly.
pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let schema = dataset.schema();
    let mut out = csv_header(schema);
    out.push('\n');
    for (idx, s) in dataset.samples().iter().enumerate() {
        let _ = write!(out, "{idx}");
        for v in &s.features {
            let _ = write!(out, ",{v}");
        }
        match s.cls_label {
            Some(c) => {
                let _ = write!(out, ",{}", schema.class_names()[c]);
            }
            None => out.push(','),
        }
        for (&l, &m) in s.att_labels.iter().zip(&s.att_mask) {
            if m == 0 {
                out.push(',');
            } else {
                let _ = write!(out, ",{l}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset_to_csv(dataset))?;
    Ok(())
}

/// Configuration of the synthetic generator.
///
/// Samples are drawn from a Gaussian mixture: a uniformly chosen class
/// places its centroid (one of K well-separated unit directions scaled by
/// `class_sep`), each attribute activates independently with probability
/// `p(attribute | class)` from the ground-truth relatedness, active
/// attributes shift the features along fixed random directions scaled by
/// `att_effect`, and isotropic noise with `noise_sd` is added on top.
///
/// The generated pool is split into a class-only part (attribute
/// annotations stripped), an attribute-only part (class labels stripped),
/// a jointly annotated part, and a fully annotated test set.
#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub relatedness: RelatednessSpec,
    pub feature_dim: usize,
    pub n_cls_only: usize,
    pub n_att_only: usize,
    pub n_joint: usize,
    pub n_test: usize,
    pub class_sep: f64,
    pub att_effect: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_test == 0 {
            return Err(Error::Config("n_test must be at least 1".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if !(self.class_sep.is_finite() && self.class_sep > 0.0) {
            return Err(Error::Config("class_sep must be a positive number".into()));
        }
        if !(self.att_effect.is_finite() && self.att_effect >= 0.0) {
            return Err(Error::Config(
                "att_effect must be a finite number >= 0".into(),
            ));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd > 0.0) {
            return Err(Error::Config("noise_sd must be a positive number".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        Schema::new(
            self.relatedness.class_names().to_vec(),
            self.relatedness.attribute_names().to_vec(),
            self.feature_dim,
        )
        .expect("relatedness spec names form a valid schema")
    }
}

/// The four splits produced by [`gen_synthetic`]. Splits with a zero count
/// are absent.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub train_cls_only: Option<Dataset>,
    pub train_att_only: Option<Dataset>,
    pub train_joint: Option<Dataset>,
    pub test: Dataset,
}

fn unit_vector(rng: &mut SeededRng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// K class directions; orthonormalized when K <= d so centroids are
/// maximally separated, plain unit vectors otherwise.
fn class_directions(rng: &mut SeededRng, k: usize, d: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(k);
    while dirs.len() < k {
        let mut v = unit_vector(rng, d);
        if k <= d {
            for prev in &dirs {
                let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (x, p) in v.iter_mut().zip(prev) {
                    *x -= dot * p;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                continue; // collinear draw; try again
            }
            for x in &mut v {
                *x /= norm;
            }
        }
        dirs.push(v);
    }
    dirs
}

/// Generates the synthetic splits. Fully determined by the config,
/// including its seed: the sampling sequence per sample is fixed (class,
/// then M attribute draws, then d noise draws), so label stripping never
/// alters features.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let schema = cfg.schema();
    let (k, m, d) = (
        schema.num_classes(),
        schema.num_attributes(),
        schema.feature_dim(),
    );
    let mix = cfg.relatedness.mixture_matrix();

    let mut rng = SeededRng::new(cfg.seed);
    let class_dirs = class_directions(&mut rng, k, d);
    let att_dirs: Vec<Vec<f64>> = (0..m).map(|_| unit_vector(&mut rng, d)).collect();

    let total = cfg.n_cls_only + cfg.n_att_only + cfg.n_joint + cfg.n_test;
    let mut full = Vec::with_capacity(total);
    for _ in 0..total {
        let c = rng.next_below(k);
        let atts: Vec<u8> = (0..m)
            .map(|i| u8::from(rng.bernoulli(mix.values().get(c, i))))
            .collect();
        let mut x: Vec<f64> = class_dirs[c].iter().map(|v| v * cfg.class_sep).collect();
        for (i, &active) in atts.iter().enumerate() {
            if active == 1 {
                for (xj, vj) in x.iter_mut().zip(&att_dirs[i]) {
                    *xj += cfg.att_effect * vj;
                }
            }
        }
        for xj in &mut x {
            *xj += cfg.noise_sd * rng.next_gaussian();
        }
        full.push(Sample {
            features: x,
            cls_label: Some(c),
            att_labels: atts,
            att_mask: vec![1; m],
        });
    }

    let mut it = full.into_iter();
    let cls_only: Vec<Sample> = it
        .by_ref()
        .take(cfg.n_cls_only)
        .map(|mut s| {
            s.att_labels = vec![0; m];
            s.att_mask = vec![0; m];
            s
        })
        .collect();
    let att_only: Vec<Sample> = it
        .by_ref()
        .take(cfg.n_att_only)
        .map(|mut s| {
            s.cls_label = None;
            s
        })
        .collect();
    let joint: Vec<Sample> = it.by_ref().take(cfg.n_joint).collect();
    let test: Vec<Sample> = it.collect();

    let wrap = |samples: Vec<Sample>| -> Result<Option<Dataset>> {
        if samples.is_empty() {
            Ok(None)
        } else {
            Dataset::new(schema.clone(), samples).map(Some)
        }
    };
    Ok(SynthData {
        train_cls_only: wrap(cls_only)?,
        train_att_only: wrap(att_only)?,
        train_joint: wrap(joint)?,
        test: Dataset::new(schema, test)?,
    })
}

/// One minibatch: features plus masked labels, with the pool indices of
/// the samples it was drawn from.
#[derive(Clone, Debug)]
pub struct Batch {
    pub features: Matrix,
    pub labels: BatchLabels,
    pub indices: Vec<usize>,
}

/// Endless stream of shuffled minibatches over the pooled samples of one
/// or more datasets.
///
/// Each epoch visits every pooled sample exactly once in a fresh seeded
/// permutation; the final batch of an epoch may be short. The stream is
/// fully determined by the generator seed.
pub struct BatchStream<'a> {
    pool: Vec<&'a Sample>,
    schema: Schema,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    rng: SeededRng,
}

impl<'a> BatchStream<'a> {
    pub fn new(datasets: &[&'a Dataset], batch_size: usize, rng: SeededRng) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let first = datasets
            .first()
            .ok_or_else(|| Error::Config("batch stream needs at least one dataset".into()))?;
        let schema = first.schema().clone();
        let mut pool = Vec::new();
        for ds in datasets {
            if ds.schema() != &schema {
                return Err(Error::Config(
                    "all datasets in a batch stream must share one schema".into(),
                ));
            }
            pool.extend(ds.samples().iter());
        }
        let order = (0..pool.len()).collect();
        Ok(BatchStream {
            pool,
            schema,
            order,
            pos: 0,
            batch_size,
            rng,
        })
    }

    /// Number of samples visited per epoch.
    pub fn pool_size(&self) -> usize {
        self.pool.len()
    }

    pub fn next_batch(&mut self) -> Batch {
        if self.pos == 0 {
            self.rng.shuffle(&mut self.order);
        }
        let take = self.batch_size.min(self.order.len() - self.pos);
        let indices: Vec<usize> = self.order[self.pos..self.pos + take].to_vec();
        self.pos += take;
        if self.pos == self.order.len() {
            self.pos = 0;
        }

        let (d, m) = (self.schema.feature_dim(), self.schema.num_attributes());
        let mut features = Matrix::zeros(take, d);
        let mut cls_labels = Vec::with_capacity(take);
        let mut att_labels = Matrix::zeros(take, m);
        let mut att_mask = Matrix::zeros(take, m);
        for (r, &idx) in indices.iter().enumerate() {
            let s = self.pool[idx];
            features.row_mut(r).copy_from_slice(&s.features);
            cls_labels.push(s.cls_label);
            for i in 0..m {
                att_labels.set(r, i, f64::from(s.att_labels[i]));
                att_mask.set(r, i, f64::from(s.att_mask[i]));
            }
        }
        let labels = BatchLabels::new(cls_labels, att_labels, att_mask)
            .expect("dataset invariants guarantee a valid batch");
        Batch {
            features,
            labels,
            indices,
        }
    }
}
