//! Class-attribute relatedness: representation, file format, empirical
//! inference, and the two derived matrices the coupling losses consume.
//!
//! A [`RelatednessSpec`] records, for every (class, attribute) pair, whether
//! the attribute is *prototypical* for the class (always active),
//! *observational* (active with some weight), *empirical* (activation
//! frequency measured from a jointly annotated dataset), or unrelated.
//! From it the losses take:
//!
//! * [`MixtureMatrix`]: `p(attribute | class)`, used to mix class
//!   predictions into expected attribute activations;
//! * [`IndicatorWeights`]: the per-class weights that score how well a
//!   sample's attribute labels indicate each class.
//!
//! # File format
//!
//! UTF-8 text, `#` starts a comment. Two header lines name the classes and
//! attributes, then one line per class:
//!
//! ```text
//! classes: happiness,sadness
//! attributes: AU4,AU12,AU25
//! happiness: proto=AU12,AU25; obs=AU4:0.3
//! sadness: emp=AU4:0.53
//! ```
//!
//! A class line with an empty body means the class has no related
//! attributes; classes listed in the header but missing a body line get the
//! same all-unrelated row.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// How a class and an attribute are related.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelationKind {
    /// Always active for the class; weight is fixed at 1.
    Prototypical,
    /// Active for a known fraction of the class, given by the weight.
    Observational,
    /// Activation frequency measured from jointly annotated data.
    Empirical,
    /// No known relation; weight is fixed at 0.
    Unrelated,
}

/// One (class, attribute) relatedness entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Relation {
    pub kind: RelationKind,
    pub weight: f64,
}

impl Relation {
    pub const NONE: Relation = Relation {
        kind: RelationKind::Unrelated,
        weight: 0.0,
    };
}

/// `p(attribute_i | class)` for every pair, as a K x M matrix with entries
/// in `[0, 1]`. For domain-knowledge specs the entries are exactly 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureMatrix {
    values: Matrix,
}

impl MixtureMatrix {
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn num_classes(&self) -> usize {
        self.values.rows()
    }

    pub fn num_attributes(&self) -> usize {
        self.values.cols()
    }
}

/// Per-class indicator weights with their precomputed row sums.
///
/// Row sums are the normalizers of the indicator score; a class whose row
/// sums to zero is scored 0 directly, which keeps the downstream soft
/// labels well defined.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorWeights {
    values: Matrix,
    row_sums: Vec<f64>,
}

impl IndicatorWeights {
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn row_sums(&self) -> &[f64] {
        &self.row_sums
    }

    /// Classes whose weight row sums to zero (no related attributes).
    pub fn zero_sum_classes(&self) -> Vec<usize> {
        self.row_sums
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0.0)
            .map(|(c, _)| c)
            .collect()
    }
}

/// Validated class-attribute relatedness table.
#[derive(Clone, Debug, PartialEq)]
pub struct RelatednessSpec {
    class_names: Vec<String>,
    attribute_names: Vec<String>,
    entries: Vec<Relation>, // K x M, row-major
}

pub(crate) fn validate_name_list(what: &str, names: &[String]) -> Result<()> {
    for name in names {
        if name.is_empty() {
            return Err(Error::Config(format!("{what} names must be nonempty")));
        }
        if name
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, ',' | ':' | ';' | '=' | '#'))
        {
            return Err(Error::Config(format!(
                "{what} name {name:?} contains a reserved character"
            )));
        }
    }
    for (i, name) in names.iter().enumerate() {
        if names[..i].contains(name) {
            return Err(Error::Config(format!("duplicate {what} name {name:?}")));
        }
    }
    Ok(())
}

impl RelatednessSpec {
    /// Builds and validates a spec from a full K x M entry table.
    pub fn new(
        class_names: Vec<String>,
        attribute_names: Vec<String>,
        entries: Vec<Relation>,
    ) -> Result<RelatednessSpec> {
        if class_names.len() < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                class_names.len()
            )));
        }
        if attribute_names.is_empty() {
            return Err(Error::Config("need at least 1 attribute".into()));
        }
        validate_name_list("class", &class_names)?;
        validate_name_list("attribute", &attribute_names)?;
        if entries.len() != class_names.len() * attribute_names.len() {
            return Err(Error::Shape(format!(
                "expected {} relatedness entries, got {}",
                class_names.len() * attribute_names.len(),
                entries.len()
            )));
        }
        for (idx, e) in entries.iter().enumerate() {
            let (c, a) = (idx / attribute_names.len(), idx % attribute_names.len());
            let ok = match e.kind {
                RelationKind::Prototypical => e.weight == 1.0,
                RelationKind::Unrelated => e.weight == 0.0,
                RelationKind::Observational | RelationKind::Empirical => {
                    e.weight > 0.0 && e.weight <= 1.0
                }
            };
            if !ok {
                return Err(Error::Config(format!(
                    "invalid weight {} for {:?} relation ({}, {})",
                    e.weight, e.kind, class_names[c], attribute_names[a]
                )));
            }
        }
        Ok(RelatednessSpec {
            class_names,
            attribute_names,
            entries,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn relation(&self, class: usize, attribute: usize) -> Relation {
        self.entries[class * self.attribute_names.len() + attribute]
    }

    /// Parses the relatedness file format described in the module docs.
    pub fn parse(text: &str) -> Result<RelatednessSpec> {
        let mut class_names: Option<(Vec<String>, usize)> = None;
        let mut attribute_names: Option<Vec<String>> = None;
        let mut rows: Vec<(usize, String, String)> = Vec::new(); // (line, class, body)

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (head, body) = line.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: "expected `name: body`".into(),
            })?;
            let head = head.trim();
            let body = body.trim();
            if class_names.is_none() {
                if head != "classes" {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "first entry must be the `classes:` header".into(),
                    });
                }
                class_names = Some((split_names(body), line_no));
                continue;
            }
            if attribute_names.is_none() {
                if head != "attributes" {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "second entry must be the `attributes:` header".into(),
                    });
                }
                attribute_names = Some(split_names(body));
                continue;
            }
            rows.push((line_no, head.to_string(), body.to_string()));
        }

        let (classes, classes_line) = class_names.ok_or(Error::Parse {
            line: 1,
            message: "missing `classes:` header".into(),
        })?;
        let attributes = attribute_names.ok_or(Error::Parse {
            line: 1,
            message: "missing `attributes:` header".into(),
        })?;
        if classes.len() < 2 {
            return Err(Error::Parse {
                line: classes_line,
                message: format!("need at least 2 classes, got {}", classes.len()),
            });
        }

        let (k, m) = (classes.len(), attributes.len());
        let mut entries = vec![Relation::NONE; k * m];
        let mut seen_class = vec![false; k];

        for (line, class, body) in rows {
            let c = classes
                .iter()
                .position(|n| *n == class)
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("unknown class {class:?}"),
                })?;
            if seen_class[c] {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate row for class {class:?}"),
                });
            }
            seen_class[c] = true;

            for segment in body.split(';') {
                let segment = segment.trim();
                if segment.is_empty() {
                    continue;
                }
                let (key, list) = segment.split_once('=').ok_or_else(|| Error::Parse {
                    line,
                    message: format!("expected `proto=`, `obs=` or `emp=` in {segment:?}"),
                })?;
                let kind = match key.trim() {
                    "proto" => RelationKind::Prototypical,
                    "obs" => RelationKind::Observational,
                    "emp" => RelationKind::Empirical,
                    other => {
                        return Err(Error::Parse {
                            line,
                            message: format!("unknown relation kind {other:?}"),
                        })
                    }
                };
                for item in list.split(',') {
                    let item = item.trim();
                    if item.is_empty() {
                        continue;
                    }
                    let (name, weight) = if kind == RelationKind::Prototypical {
                        (item, 1.0)
                    } else {
                        let (name, w) = item.split_once(':').ok_or_else(|| Error::Parse {
                            line,
                            message: format!("expected `attribute:weight` in {item:?}"),
                        })?;
                        let w: f64 = w.trim().parse().map_err(|_| Error::Parse {
                            line,
                            message: format!("bad weight in {item:?}"),
                        })?;
                        (name.trim(), w)
                    };
                    let a =
                        attributes
                            .iter()
                            .position(|n| *n == name)
                            .ok_or_else(|| Error::Parse {
                                line,
                                message: format!("unknown attribute {name:?}"),
                            })?;
                    if entries[c * m + a] != Relation::NONE {
                        return Err(Error::Parse {
                            line,
                            message: format!("duplicate entry for ({class}, {name})"),
                        });
                    }
                    if !(weight > 0.0 && weight <= 1.0) {
                        return Err(Error::Parse {
                            line,
                            message: format!(
                                "weight for ({class}, {name}) must be in (0, 1], got {weight}"
                            ),
                        });
                    }
                    entries[c * m + a] = Relation { kind, weight };
                }
            }
        }

        RelatednessSpec::new(classes, attributes, entries)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<RelatednessSpec> {
        RelatednessSpec::parse(&std::fs::read_to_string(path)?)
    }

    /// Serializes back to the file format. Weights print in shortest
    /// round-trip form, so parse(to_text(spec)) reproduces the spec exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "classes: {}", self.class_names.join(","));
        let _ = writeln!(out, "attributes: {}", self.attribute_names.join(","));
        for (c, class) in self.class_names.iter().enumerate() {
            let mut segments: Vec<String> = Vec::new();
            for (label, kind) in [
                ("proto", RelationKind::Prototypical),
                ("obs", RelationKind::Observational),
                ("emp", RelationKind::Empirical),
            ] {
                let items: Vec<String> = self
                    .attribute_names
                    .iter()
                    .enumerate()
                    .filter(|(a, _)| self.relation(c, *a).kind == kind)
                    .map(|(a, name)| {
                        if kind == RelationKind::Prototypical {
                            name.clone()
                        } else {
                            format!("{}:{}", name, self.relation(c, a).weight)
                        }
                    })
                    .collect();
                if !items.is_empty() {
                    segments.push(format!("{label}={}", items.join(",")));
                }
            }
            let _ = writeln!(out, "{class}: {}", segments.join("; "));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// `p(attribute | class)`: 1 for prototypical and observational
    /// relations, the stored frequency for empirical ones, 0 otherwise.
    pub fn mixture_matrix(&self) -> MixtureMatrix {
        self.mixture_matrix_with_threshold(None)
    }

    /// Like [`RelatednessSpec::mixture_matrix`], optionally binarizing
    /// empirical weights at a threshold: weights at or above it become 1,
    /// the rest 0. Domain-knowledge entries are unaffected.
    pub fn mixture_matrix_with_threshold(&self, tau: Option<f64>) -> MixtureMatrix {
        let (k, m) = (self.num_classes(), self.num_attributes());
        let mut values = Matrix::zeros(k, m);
        for c in 0..k {
            for a in 0..m {
                let e = self.relation(c, a);
                let v = match e.kind {
                    RelationKind::Prototypical | RelationKind::Observational => 1.0,
                    RelationKind::Empirical => match tau {
                        Some(t) => {
                            if e.weight >= t {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        None => e.weight,
                    },
                    RelationKind::Unrelated => 0.0,
                };
                values.set(c, a, v);
            }
        }
        MixtureMatrix { values }
    }

    /// Indicator weights: 1 for prototypical, the stored weight for
    /// observational and empirical relations, 0 otherwise.
    pub fn indicator_weights(&self) -> IndicatorWeights {
        let (k, m) = (self.num_classes(), self.num_attributes());
        let mut values = Matrix::zeros(k, m);
        for c in 0..k {
            for a in 0..m {
                let e = self.relation(c, a);
                let v = match e.kind {
                    RelationKind::Prototypical => 1.0,
                    RelationKind::Observational | RelationKind::Empirical => e.weight,
                    RelationKind::Unrelated => 0.0,
                };
                values.set(c, a, v);
            }
        }
        let row_sums = (0..k).map(|c| values.row(c).iter().sum()).collect();
        IndicatorWeights { values, row_sums }
    }

    /// Domain-knowledge expression/AU table bundled with the crate
    /// (7 classes, 17 AUs).
    pub fn bundled_domain() -> RelatednessSpec {
        RelatednessSpec::parse(include_str!("../data/table1_domain.rel"))
            .expect("bundled domain relatedness must parse")
    }

    /// Empirical expression/AU table measured on Aff-Wild2, bundled with
    /// the crate (7 classes, 17 AUs).
    pub fn bundled_affwild2() -> RelatednessSpec {
        RelatednessSpec::parse(include_str!("../data/table1_affwild2.rel"))
            .expect("bundled affwild2 relatedness must parse")
    }

    /// Default ground truth for the synthetic generator (6 classes, 10
    /// attributes, shaped like the domain-knowledge table).
    pub fn bundled_synth_default() -> RelatednessSpec {
        RelatednessSpec::parse(include_str!("../data/synth_default.rel"))
            .expect("bundled synthetic relatedness must parse")
    }
}

fn split_names(body: &str) -> Vec<String> {
    body.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Infers an empirical relatedness spec from a jointly annotated dataset:
/// `weight(c, i)` is the fraction of class-`c` samples, among those where
/// attribute `i` is annotated, in which the attribute is active.
///
/// Every sample must carry a class label. A (class, attribute) pair with no
/// annotated samples at all makes the ratio undefined and is reported as an
/// inference error.
pub fn infer_relatedness(dataset: &Dataset) -> Result<RelatednessSpec> {
    let schema = dataset.schema();
    let (k, m) = (schema.num_classes(), schema.num_attributes());
    let mut active = vec![0u64; k * m];
    let mut annotated = vec![0u64; k * m];

    for (idx, sample) in dataset.samples().iter().enumerate() {
        let c = sample.cls_label.ok_or_else(|| {
            Error::Inference(format!(
                "sample {idx} has no class label; empirical inference needs fully class-labeled data"
            ))
        })?;
        for i in 0..m {
            if sample.att_mask[i] == 1 {
                annotated[c * m + i] += 1;
                if sample.att_labels[i] == 1 {
                    active[c * m + i] += 1;
                }
            }
        }
    }

    let mut entries = Vec::with_capacity(k * m);
    for c in 0..k {
        for i in 0..m {
            let den = annotated[c * m + i];
            if den == 0 {
                return Err(Error::Inference(format!(
                    "class {:?} has no samples with attribute {:?} annotated",
                    schema.class_names()[c],
                    schema.attribute_names()[i]
                )));
            }
            let w = active[c * m + i] as f64 / den as f64;
            entries.push(if w > 0.0 {
                Relation {
                    kind: RelationKind::Empirical,
                    weight: w,
                }
            } else {
                Relation::NONE
            });
        }
    }

    RelatednessSpec::new(
        schema.class_names().to_vec(),
        schema.attribute_names().to_vec(),
        entries,
    )
}
