//! Two-headed multilayer perceptron: a shared rectifier trunk feeding a
//! K-way softmax head and an M-way sigmoid head.
//!
//! The forward and backward passes are explicit; there is no autodiff.
//! The loss layer produces gradients with respect to the two heads'
//! logits; [`MlpParams::backward`] turns those into parameter gradients,
//! with the trunk receiving the sum of both heads' contributions. The
//! full chain is verified against finite differences in the tests and the
//! acceptance suite.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::{predictions_from_logits, Predictions};
use crate::numerics::{Matrix, SeededRng};

/// Architecture of the network. `hidden_dims` may be empty, in which case
/// both heads are linear maps of the input.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub num_attributes: usize,
    pub init_seed: u64,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 || self.num_attributes == 0 {
            return Err(Error::Config(
                "input_dim, num_classes and num_attributes must be positive".into(),
            ));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    fn trunk_output_dim(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.input_dim)
    }
}

/// One dense layer (or the gradients for one): `in_dim x out_dim` weights
/// plus a bias row.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> DenseLayer {
        DenseLayer {
            weights: Matrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
        }
    }

    fn init(in_dim: usize, out_dim: usize, rng: &mut SeededRng) -> DenseLayer {
        // zero-mean Gaussian with variance 2 / fan_in; biases start at zero
        let std = (2.0 / in_dim as f64).sqrt();
        let values = (0..in_dim * out_dim)
            .map(|_| std * rng.next_gaussian())
            .collect();
        DenseLayer {
            weights: Matrix::from_vec(in_dim, out_dim, values).expect("finite init draws"),
            bias: vec![0.0; out_dim],
        }
    }

    /// `x . W + b` for a batch of rows.
    fn affine(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&self.weights)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }
}

/// Trunk activations retained by [`MlpParams::forward`] for the backward
/// pass. A cache is only valid for the batch it was produced from.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    input: Matrix,
    trunk_pre: Vec<Matrix>,
    trunk_act: Vec<Matrix>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    fn trunk_output(&self) -> &Matrix {
        self.trunk_act.last().unwrap_or(&self.input)
    }
}

/// Parameter gradients, mirroring [`MlpParams`] shapes.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub trunk: Vec<DenseLayer>,
    pub cls_head: DenseLayer,
    pub att_head: DenseLayer,
}

impl MlpGrads {
    /// Flat views over all gradient tensors, in the same order as
    /// [`MlpParams::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.trunk {
            out.push(layer.weights.values());
            out.push(layer.bias.as_slice());
        }
        for layer in [&self.cls_head, &self.att_head] {
            out.push(layer.weights.values());
            out.push(layer.bias.as_slice());
        }
        out
    }
}

/// All parameters of the two-headed MLP, together with its architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    cfg: MlpConfig,
    trunk: Vec<DenseLayer>,
    cls_head: DenseLayer,
    att_head: DenseLayer,
}

impl MlpParams {
    /// Draws fresh parameters from the given generator: weights are
    /// zero-mean Gaussian with variance `2 / fan_in`, biases zero.
    pub fn init(cfg: MlpConfig, rng: &mut SeededRng) -> Result<MlpParams> {
        cfg.validate()?;
        let mut trunk = Vec::with_capacity(cfg.hidden_dims.len());
        let mut in_dim = cfg.input_dim;
        for &h in &cfg.hidden_dims {
            trunk.push(DenseLayer::init(in_dim, h, rng));
            in_dim = h;
        }
        let cls_head = DenseLayer::init(in_dim, cfg.num_classes, rng);
        let att_head = DenseLayer::init(in_dim, cfg.num_attributes, rng);
        Ok(MlpParams {
            cfg,
            trunk,
            cls_head,
            att_head,
        })
    }

    /// Deterministic init from the seed recorded in the config.
    pub fn init_from_seed(cfg: MlpConfig) -> Result<MlpParams> {
        let mut rng = SeededRng::new(cfg.init_seed);
        MlpParams::init(cfg, &mut rng)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.cfg
    }

    pub fn trunk(&self) -> &[DenseLayer] {
        &self.trunk
    }

    pub fn cls_head(&self) -> &DenseLayer {
        &self.cls_head
    }

    pub fn att_head(&self) -> &DenseLayer {
        &self.att_head
    }

    /// Forward pass over a batch of feature rows. Returns the predictions
    /// and the cache needed by [`MlpParams::backward`].
    pub fn forward(&self, x: &Matrix) -> Result<(Predictions, ForwardCache)> {
        if x.cols() != self.cfg.input_dim {
            return Err(Error::Shape(format!(
                "input width {} does not match model input_dim {}",
                x.cols(),
                self.cfg.input_dim
            )));
        }
        let mut trunk_pre = Vec::with_capacity(self.trunk.len());
        let mut trunk_act = Vec::with_capacity(self.trunk.len());
        let mut a = x.clone();
        for layer in &self.trunk {
            let z = layer.affine(&a)?;
            a = z.map(|v| v.max(0.0));
            trunk_pre.push(z);
            trunk_act.push(a.clone());
        }
        let cls_logits = self.cls_head.affine(&a)?;
        let att_logits = self.att_head.affine(&a)?;
        let preds = predictions_from_logits(&cls_logits, &att_logits)?;
        Ok((
            preds,
            ForwardCache {
                input: x.clone(),
                trunk_pre,
                trunk_act,
            },
        ))
    }

    /// Reverse-mode pass: turns logit gradients from the loss layer into
    /// parameter gradients. The trunk gradient is the sum of both heads'
    /// contributions.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_cls_logits: &Matrix,
        grad_att_logits: &Matrix,
    ) -> Result<MlpGrads> {
        let b = cache.batch_size();
        if cache.trunk_pre.len() != self.trunk.len() {
            return Err(Error::State(
                "forward cache does not belong to this architecture".into(),
            ));
        }
        if grad_cls_logits.rows() != b
            || grad_att_logits.rows() != b
            || grad_cls_logits.cols() != self.cfg.num_classes
            || grad_att_logits.cols() != self.cfg.num_attributes
        {
            return Err(Error::State(format!(
                "logit gradients ({}x{}, {}x{}) do not match the cached batch of {b} samples",
                grad_cls_logits.rows(),
                grad_cls_logits.cols(),
                grad_att_logits.rows(),
                grad_att_logits.cols()
            )));
        }

        let trunk_out = cache.trunk_output();
        let trunk_out_t = trunk_out.transposed();
        let cls_head = DenseLayer {
            weights: trunk_out_t.matmul(grad_cls_logits)?,
            bias: grad_cls_logits.col_sums(),
        };
        let att_head = DenseLayer {
            weights: trunk_out_t.matmul(grad_att_logits)?,
            bias: grad_att_logits.col_sums(),
        };

        // d(trunk output) collects both heads
        let mut d_act = grad_cls_logits.matmul(&self.cls_head.weights.transposed())?;
        let d_from_att = grad_att_logits.matmul(&self.att_head.weights.transposed())?;
        for (a, b) in d_act.values_mut().iter_mut().zip(d_from_att.values()) {
            *a += b;
        }

        let mut trunk: Vec<DenseLayer> = (0..self.trunk.len())
            .map(|_| DenseLayer::zeros(1, 1))
            .collect();
        for l in (0..self.trunk.len()).rev() {
            // rectifier gate
            let mut d_pre = d_act;
            for (g, &z) in d_pre
                .values_mut()
                .iter_mut()
                .zip(cache.trunk_pre[l].values())
            {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
            let layer_in = if l == 0 {
                &cache.input
            } else {
                &cache.trunk_act[l - 1]
            };
            trunk[l] = DenseLayer {
                weights: layer_in.transposed().matmul(&d_pre)?,
                bias: d_pre.col_sums(),
            };
            d_act = d_pre.matmul(&self.trunk[l].weights.transposed())?;
        }

        Ok(MlpGrads {
            trunk,
            cls_head,
            att_head,
        })
    }

    /// Flat immutable views over all parameter tensors, in a fixed order
    /// (trunk layers bottom-up, then class head, then attribute head; each
    /// as weights then bias).
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.trunk {
            out.push(layer.weights.values());
            out.push(layer.bias.as_slice());
        }
        for layer in [&self.cls_head, &self.att_head] {
            out.push(layer.weights.values());
            out.push(layer.bias.as_slice());
        }
        out
    }

    /// Flat mutable views, same order as [`MlpParams::param_slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.trunk {
            out.push(layer.weights.values_mut());
            out.push(layer.bias.as_mut_slice());
        }
        out.push(self.cls_head.weights.values_mut());
        out.push(self.cls_head.bias.as_mut_slice());
        out.push(self.att_head.weights.values_mut());
        out.push(self.att_head.bias.as_mut_slice());
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..self.trunk.len() {
            names.push(format!("trunk{l}.weight"));
            names.push(format!("trunk{l}.bias"));
        }
        for head in ["cls", "att"] {
            names.push(format!("{head}.weight"));
            names.push(format!("{head}.bias"));
        }
        names
    }

    /// Serializes to the versioned checkpoint format. Values are written
    /// as raw bit patterns, so save -> load round-trips bit-exactly.
    pub fn save_to_string(&self) -> String {
        let mut out = String::from("cotask-checkpoint v1\n");
        let _ = writeln!(out, "input_dim = {}", self.cfg.input_dim);
        let hidden: Vec<String> = self.cfg.hidden_dims.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(out, "hidden_dims = {}", hidden.join(","));
        let _ = writeln!(out, "num_classes = {}", self.cfg.num_classes);
        let _ = writeln!(out, "num_attributes = {}", self.cfg.num_attributes);
        let _ = writeln!(out, "init_seed = {}", self.cfg.init_seed);
        let names = self.tensor_names();
        let mut dims: Vec<(usize, usize)> = Vec::new();
        for layer in self.trunk.iter().chain([&self.cls_head, &self.att_head]) {
            dims.push((layer.weights.rows(), layer.weights.cols()));
            dims.push((1, layer.bias.len()));
        }
        for ((name, (r, c)), slice) in names.iter().zip(dims).zip(self.param_slices()) {
            let _ = write!(out, "tensor {name} {r} {c}");
            for v in slice {
                let _ = write!(out, " {:016x}", v.to_bits());
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.save_to_string())?;
        Ok(())
    }

    /// Parses the checkpoint format written by [`MlpParams::save_to_string`].
    pub fn parse(text: &str) -> Result<MlpParams> {
        let mut lines = text.lines().enumerate();
        let (_, magic) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty checkpoint".into(),
        })?;
        if magic.trim() != "cotask-checkpoint v1" {
            return Err(Error::Parse {
                line: 1,
                message: format!("unsupported checkpoint header {magic:?}"),
            });
        }

        let mut header = std::collections::HashMap::new();
        let mut tensors: Vec<(String, usize, usize, Vec<f64>)> = Vec::new();
        let mut saw_end = false;
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if line == "end" {
                saw_end = true;
                break;
            }
            if let Some(rest) = line.strip_prefix("tensor ") {
                let mut parts = rest.split_whitespace();
                let name = parts.next().unwrap_or_default().to_string();
                let parse_dim = |s: Option<&str>| -> Result<usize> {
                    s.and_then(|v| v.parse().ok()).ok_or(Error::Parse {
                        line: line_no,
                        message: "bad tensor dimensions".into(),
                    })
                };
                let r = parse_dim(parts.next())?;
                let c = parse_dim(parts.next())?;
                let mut values = Vec::with_capacity(r * c);
                for tok in parts {
                    let bits = u64::from_str_radix(tok, 16).map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("bad value token {tok:?}"),
                    })?;
                    values.push(f64::from_bits(bits));
                }
                if values.len() != r * c {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!(
                            "tensor {name} declares {r}x{c} but has {} values",
                            values.len()
                        ),
                    });
                }
                tensors.push((name, r, c, values));
            } else if let Some((key, value)) = line.split_once('=') {
                header.insert(key.trim().to_string(), value.trim().to_string());
            } else {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unexpected line {line:?}"),
                });
            }
        }
        if !saw_end {
            return Err(Error::Parse {
                line: 1,
                message: "checkpoint is truncated (missing `end`)".into(),
            });
        }

        let get = |key: &str| -> Result<&String> {
            header
                .get(key)
                .ok_or_else(|| Error::Config(format!("checkpoint is missing `{key}`")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::Config(format!("bad `{key}` in checkpoint")))
        };
        let hidden_raw = get("hidden_dims")?;
        let hidden_dims: Vec<usize> = if hidden_raw.is_empty() {
            Vec::new()
        } else {
            hidden_raw
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config("bad `hidden_dims` in checkpoint".into()))
                })
                .collect::<Result<_>>()?
        };
        let cfg = MlpConfig {
            input_dim: parse_usize("input_dim")?,
            hidden_dims,
            num_classes: parse_usize("num_classes")?,
            num_attributes: parse_usize("num_attributes")?,
            init_seed: get("init_seed")?
                .parse()
                .map_err(|_| Error::Config("bad `init_seed` in checkpoint".into()))?,
        };
        cfg.validate()?;

        // rebuild with the right shapes, then fill tensors by name
        let mut params = MlpParams {
            cfg: cfg.clone(),
            trunk: {
                let mut trunk = Vec::new();
                let mut in_dim = cfg.input_dim;
                for &h in &cfg.hidden_dims {
                    trunk.push(DenseLayer::zeros(in_dim, h));
                    in_dim = h;
                }
                trunk
            },
            cls_head: DenseLayer::zeros(cfg.trunk_output_dim(), cfg.num_classes),
            att_head: DenseLayer::zeros(cfg.trunk_output_dim(), cfg.num_attributes),
        };
        let expected = params.tensor_names();
        if tensors.len() != expected.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors, architecture needs {}",
                tensors.len(),
                expected.len()
            )));
        }
        for ((name, r, c, values), (expect_name, slot)) in tensors
            .into_iter()
            .zip(expected.iter().zip(params.param_slices_mut()))
        {
            if &name != expect_name {
                return Err(Error::Config(format!(
                    "unexpected tensor {name}, expected {expect_name}"
                )));
            }
            if r * c != slot.len() {
                return Err(Error::Config(format!(
                    "tensor {name} is {r}x{c}, expected {} values",
                    slot.len()
                )));
            }
            slot.copy_from_slice(&values);
        }
        Ok(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MlpParams> {
        MlpParams::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_rel_err};
    use crate::losses::{total_loss, BatchLabels, Lambdas, LossOptions};
    use crate::numerics::{sigmoid, SeededRng};
    use crate::relatedness::RelatednessSpec;

    fn small_cfg() -> MlpConfig {
        MlpConfig {
            input_dim: 5,
            hidden_dims: vec![4],
            num_classes: 3,
            num_attributes: 4,
            init_seed: 12,
        }
    }

    fn rand_input(rng: &mut SeededRng, b: usize, d: usize) -> Matrix {
        Matrix::from_vec(b, d, (0..b * d).map(|_| rng.next_gaussian()).collect()).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = MlpParams::init_from_seed(small_cfg()).unwrap();
        let b = MlpParams::init_from_seed(small_cfg()).unwrap();
        assert_eq!(a, b);
        let c = MlpParams::init_from_seed(MlpConfig {
            init_seed: 13,
            ..small_cfg()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn linear_model_has_head_only_shapes() {
        let params = MlpParams::init_from_seed(MlpConfig {
            input_dim: 6,
            hidden_dims: vec![],
            num_classes: 3,
            num_attributes: 2,
            init_seed: 0,
        })
        .unwrap();
        assert!(params.trunk().is_empty());
        assert_eq!(params.cls_head().weights.rows(), 6);
        assert_eq!(params.cls_head().weights.cols(), 3);
        assert_eq!(params.att_head().weights.rows(), 6);
        assert_eq!(params.att_head().weights.cols(), 2);
    }

    #[test]
    fn init_variance_matches_fan_in_rule() {
        let params = MlpParams::init_from_seed(MlpConfig {
            input_dim: 256,
            hidden_dims: vec![64],
            num_classes: 2,
            num_attributes: 1,
            init_seed: 5,
        })
        .unwrap();
        let w = params.trunk()[0].weights.values();
        let mean: f64 = w.iter().sum::<f64>() / w.len() as f64;
        let var: f64 =
            w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (w.len() - 1) as f64;
        let target = 2.0 / 256.0;
        assert!(
            (var - target).abs() / target < 0.2,
            "sample variance {var}, target {target}"
        );
        assert!(params.trunk()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zeroed_model_predicts_uniform_and_half() {
        let mut params = MlpParams::init_from_seed(small_cfg()).unwrap();
        for slice in params.param_slices_mut() {
            slice.fill(0.0);
        }
        let x = rand_input(&mut SeededRng::new(3), 4, 5);
        let (preds, _) = params.forward(&x).unwrap();
        for r in 0..4 {
            for &p in preds.cls_probs().row(r) {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
            for &p in preds.att_probs().row(r) {
                assert_eq!(p, 0.5);
            }
        }
    }

    #[test]
    fn identical_rows_give_identical_predictions() {
        let params = MlpParams::init_from_seed(small_cfg()).unwrap();
        let row: Vec<f64> = vec![0.3, -1.0, 0.7, 2.0, -0.2];
        let mut values = row.clone();
        values.extend_from_slice(&row);
        let x = Matrix::from_vec(2, 5, values).unwrap();
        let (preds, _) = params.forward(&x).unwrap();
        assert_eq!(preds.cls_probs().row(0), preds.cls_probs().row(1));
        assert_eq!(preds.att_probs().row(0), preds.att_probs().row(1));
    }

    #[test]
    fn forward_matches_scalar_reimplementation() {
        // independent per-sample scalar evaluation, including its own
        // softmax
        let params = MlpParams::init_from_seed(small_cfg()).unwrap();
        let mut rng = SeededRng::new(8);
        let x = rand_input(&mut rng, 3, 5);
        let (preds, _) = params.forward(&x).unwrap();

        for j in 0..3 {
            let mut a: Vec<f64> = x.row(j).to_vec();
            for layer in params.trunk() {
                let mut next = vec![0.0; layer.bias.len()];
                for (o, out) in next.iter_mut().enumerate() {
                    let mut acc = layer.bias[o];
                    for (i, &ai) in a.iter().enumerate() {
                        acc += ai * layer.weights.get(i, o);
                    }
                    *out = if acc > 0.0 { acc } else { 0.0 };
                }
                a = next;
            }
            let head = |layer: &DenseLayer| -> Vec<f64> {
                (0..layer.bias.len())
                    .map(|o| {
                        let mut acc = layer.bias[o];
                        for (i, &ai) in a.iter().enumerate() {
                            acc += ai * layer.weights.get(i, o);
                        }
                        acc
                    })
                    .collect()
            };
            let cls_logits = head(params.cls_head());
            let max = cls_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = cls_logits.iter().map(|z| (z - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (c, &e) in exps.iter().enumerate() {
                assert!((preds.cls_probs().get(j, c) - e / z).abs() < 1e-12);
            }
            for (i, &l) in head(params.att_head()).iter().enumerate() {
                assert!((preds.att_probs().get(j, i) - sigmoid(l)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gradients_give_zero_parameter_gradients() {
        let params = MlpParams::init_from_seed(small_cfg()).unwrap();
        let x = rand_input(&mut SeededRng::new(1), 4, 5);
        let (_, cache) = params.forward(&x).unwrap();
        let grads = params
            .backward(&cache, &Matrix::zeros(4, 3), &Matrix::zeros(4, 4))
            .unwrap();
        for slice in grads.slices() {
            assert!(slice.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn class_only_upstream_leaves_attribute_head_untouched() {
        let params = MlpParams::init_from_seed(small_cfg()).unwrap();
        let mut rng = SeededRng::new(2);
        let x = rand_input(&mut rng, 4, 5);
        let (_, cache) = params.forward(&x).unwrap();
        let g_cls = Matrix::from_vec(4, 3, (0..12).map(|_| rng.next_gaussian()).collect()).unwrap();
        let grads = params
            .backward(&cache, &g_cls, &Matrix::zeros(4, 4))
            .unwrap();
        assert!(grads.att_head.weights.values().iter().all(|&g| g == 0.0));
        assert!(grads.att_head.bias.iter().all(|&g| g == 0.0));
        assert!(grads.cls_head.weights.values().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_batches() {
        let params = MlpParams::init_from_seed(small_cfg()).unwrap();
        let x = rand_input(&mut SeededRng::new(1), 4, 5);
        let (_, cache) = params.forward(&x).unwrap();
        assert!(matches!(
            params.backward(&cache, &Matrix::zeros(3, 3), &Matrix::zeros(4, 4)),
            Err(Error::State(_))
        ));
        assert!(matches!(
            params.backward(&cache, &Matrix::zeros(4, 2), &Matrix::zeros(4, 4)),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn full_pipeline_gradients_match_finite_differences() {
        // d=5, hidden=[4], K=3, M=4, B=6; all four losses active
        let mut rng = SeededRng::new(2024);
        let params = MlpParams::init_from_seed(small_cfg()).unwrap();
        let x = rand_input(&mut rng, 6, 5);
        let spec = RelatednessSpec::parse(
            "classes: a,b,c\nattributes: w,x,y,z\n\
             a: proto=w; obs=x:0.5\nb: proto=y; obs=z:0.4\nc: emp=w:0.3,z:0.9\n",
        )
        .unwrap();
        let (mix, iw) = (spec.mixture_matrix(), spec.indicator_weights());
        let labels = BatchLabels::new(
            vec![Some(0), None, Some(2), Some(1), None, Some(0)],
            Matrix::from_vec(
                6,
                4,
                vec![
                    1.0, 0.0, 0.0, 1.0, //
                    0.0, 1.0, 1.0, 0.0, //
                    0.0, 0.0, 0.0, 0.0, //
                    1.0, 0.0, 1.0, 0.0, //
                    0.0, 0.0, 1.0, 1.0, //
                    0.0, 0.0, 0.0, 0.0, //
                ],
            )
            .unwrap(),
            Matrix::from_vec(
                6,
                4,
                vec![
                    1.0, 1.0, 0.0, 1.0, //
                    1.0, 1.0, 1.0, 1.0, //
                    0.0, 0.0, 0.0, 0.0, //
                    1.0, 0.0, 1.0, 1.0, //
                    0.0, 1.0, 1.0, 1.0, //
                    0.0, 0.0, 0.0, 0.0, //
                ],
            )
            .unwrap(),
        )
        .unwrap();
        let opts = LossOptions::default();
        let lambdas = Lambdas::default();

        let loss_of = |p: &MlpParams| -> f64 {
            let (preds, _) = p.forward(&x).unwrap();
            total_loss(&preds, &labels, Some(&mix), Some(&iw), &lambdas, &opts)
                .unwrap()
                .l_total
        };

        let (preds, cache) = params.forward(&x).unwrap();
        let report = total_loss(&preds, &labels, Some(&mix), Some(&iw), &lambdas, &opts).unwrap();
        let grads = params
            .backward(&cache, &report.grad_cls_logits, &report.grad_att_logits)
            .unwrap();

        let analytic: Vec<f64> = grads.slices().concat();
        let flat: Vec<f64> = params.param_slices().concat();
        let numeric = central_difference(
            |probe| {
                let mut perturbed = params.clone();
                let mut offset = 0;
                for slice in perturbed.param_slices_mut() {
                    slice.copy_from_slice(&probe[offset..offset + slice.len()]);
                    offset += slice.len();
                }
                loss_of(&perturbed)
            },
            &flat,
            1e-6,
        );
        let err = max_rel_err(&analytic, &numeric, 1e-2);
        assert!(err < 1e-5, "max rel err {err}");
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let params = MlpParams::init_from_seed(small_cfg()).unwrap();
        let text = params.save_to_string();
        let reloaded = MlpParams::parse(&text).unwrap();
        assert_eq!(params, reloaded);
        assert_eq!(text, reloaded.save_to_string());

        // a linear model round-trips too (empty hidden_dims)
        let linear = MlpParams::init_from_seed(MlpConfig {
            input_dim: 3,
            hidden_dims: vec![],
            num_classes: 2,
            num_attributes: 2,
            init_seed: 9,
        })
        .unwrap();
        assert_eq!(MlpParams::parse(&linear.save_to_string()).unwrap(), linear);
    }

    #[test]
    fn checkpoint_parse_rejects_corruption() {
        let params = MlpParams::init_from_seed(small_cfg()).unwrap();
        let text = params.save_to_string();
        assert!(MlpParams::parse(&text.replace("cotask-checkpoint v1", "v0")).is_err());
        assert!(MlpParams::parse(text.trim_end_matches("end\n")).is_err());
    }
}
