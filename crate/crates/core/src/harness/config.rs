//! Experiment configuration: the flat `key = value` config file format
//! with `[section]` headers, and the in-memory [`ExperimentConfig`].
//!
//! Sections and keys (all optional unless noted):
//!
//! ```text
//! [experiment]
//! mode = st_cls | st_att | mt_nc | mt_c | st_teacher_mt   # required
//! seed = 0
//! lambda_cls = 1.0
//! lambda_att = 1.0
//! lambda_dm = 1.0
//! lambda_sca = 1.0
//! relatedness = oracle | file <path> | empirical joint | empirical <path>
//! relatedness_tau = 0.5       # optional: binarize the mixture at tau
//! eval_every = 200
//!
//! [losses]
//! log_eps = 1e-8
//! symmetric_dm = false
//! dm_stop_cls_grad = false
//! renorm_observed = false
//!
//! [model]
//! hidden_dims = 24            # comma list; empty means a linear model
//! init_seed = 7               # defaults to the experiment seed
//!
//! [optimizer]
//! algorithm = adam | sgd
//! learning_rate = 0.001
//! steps = 1500
//! batch_size = 64
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//!
//! [data]                      # file-backed experiments
//! train_cls = cls.csv
//! train_att = att.csv
//! train_joint = joint.csv
//! test = test.csv             # required in [data]
//! schema = schema.txt         # required in [data]
//!
//! [synth]                     # generated experiments (exclusive with [data])
//! relatedness_file = truth.rel   # defaults to the bundled 6x10 table
//! feature_dim = 16
//! n_cls_only = 400
//! n_att_only = 4000
//! n_joint = 0
//! n_test = 2000
//! class_sep = 1.1
//! att_effect = 2.2
//! noise_sd = 1.0
//! seed = 0
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::SynthConfig;
use crate::error::{Error, Result};
use crate::losses::{Lambdas, LossOptions};
use crate::relatedness::RelatednessSpec;

use super::optim::OptAlgorithm;

/// The five experiment modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Single-task classification: the attribute head is frozen.
    StCls,
    /// Single-task attributes: the classification head is frozen.
    StAtt,
    /// Multi-task without coupling (both task losses, no relatedness).
    MtNc,
    /// Multi-task with the coupling losses.
    MtC,
    /// Student-teacher: single-task teachers pseudo-label the opposite
    /// split, then an uncoupled multi-task student trains on the union.
    StTeacherMt,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::StCls,
        Mode::StAtt,
        Mode::MtNc,
        Mode::MtC,
        Mode::StTeacherMt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::StCls => "st_cls",
            Mode::StAtt => "st_att",
            Mode::MtNc => "mt_nc",
            Mode::MtC => "mt_c",
            Mode::StTeacherMt => "st_teacher_mt",
        }
    }

    pub fn parse(name: &str) -> Result<Mode> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == name)
            .ok_or_else(|| Error::Config(format!("unknown mode {name:?}")))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the relatedness used by the coupling losses comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum RelatednessSource {
    /// The ground-truth spec of the synthetic generator.
    Oracle,
    /// A relatedness file.
    File(PathBuf),
    /// Inferred from the jointly annotated training split.
    EmpiricalJoint,
    /// Inferred from a dataset CSV (must be fully class-labeled).
    EmpiricalFile(PathBuf),
}

impl RelatednessSource {
    fn parse(value: &str, base_dir: &Path) -> Result<RelatednessSource> {
        let mut parts = value.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some("oracle"), None, _) => Ok(RelatednessSource::Oracle),
            (Some("file"), Some(path), None) => {
                Ok(RelatednessSource::File(base_dir.join(path)))
            }
            (Some("empirical"), Some("joint"), None) => Ok(RelatednessSource::EmpiricalJoint),
            (Some("empirical"), Some(path), None) => {
                Ok(RelatednessSource::EmpiricalFile(base_dir.join(path)))
            }
            _ => Err(Error::Config(format!(
                "relatedness must be `oracle`, `file <path>`, `empirical joint` or `empirical <path>`, got {value:?}"
            ))),
        }
    }
}

/// Optimization hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub algorithm: OptAlgorithm,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            algorithm: OptAlgorithm::default_adam(),
            learning_rate: 1e-3,
            steps: 1500,
            batch_size: 64,
        }
    }
}

/// Where training and test data come from.
#[derive(Clone, Debug)]
pub enum DataConfig {
    Synth(SynthConfig),
    Files {
        train_cls: Option<PathBuf>,
        train_att: Option<PathBuf>,
        train_joint: Option<PathBuf>,
        test: PathBuf,
        schema: PathBuf,
    },
}

/// Everything a training run needs.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub lambdas: Lambdas,
    pub relatedness: Option<RelatednessSource>,
    /// Binarization threshold for the distribution-matching mixture:
    /// empirical relatedness weights at or above it count as fully related.
    /// `None` uses the raw weights.
    pub relatedness_tau: Option<f64>,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
    /// Seed for parameter init; defaults to `seed`.
    pub init_seed: Option<u64>,
    pub eval_every: usize,
    pub loss_options: LossOptions,
    pub data: DataConfig,
}

impl ExperimentConfig {
    /// The weights actually applied during training: single-task modes
    /// force the other head's weight (and the coupling) to zero, and the
    /// uncoupled modes force the coupling weights to zero.
    pub fn effective_lambdas(&self) -> Lambdas {
        let l = self.lambdas;
        match self.mode {
            Mode::StCls => Lambdas {
                cls: l.cls,
                att: 0.0,
                dm: 0.0,
                sca: 0.0,
            },
            Mode::StAtt => Lambdas {
                cls: 0.0,
                att: l.att,
                dm: 0.0,
                sca: 0.0,
            },
            Mode::MtNc | Mode::StTeacherMt => Lambdas {
                cls: l.cls,
                att: l.att,
                dm: 0.0,
                sca: 0.0,
            },
            Mode::MtC => l,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lambdas.validate()?;
        self.loss_options.validate()?;
        if !(self.optimizer.learning_rate.is_finite() && self.optimizer.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.optimizer.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.optimizer.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.mode == Mode::MtC && self.relatedness.is_none() {
            return Err(Error::Config(
                "mt_c requires a relatedness source (`relatedness = ...`)".into(),
            ));
        }
        if let Some(tau) = self.relatedness_tau {
            if !(tau.is_finite() && (0.0..=1.0).contains(&tau)) {
                return Err(Error::Config(format!(
                    "relatedness_tau must be in [0, 1], got {tau}"
                )));
            }
        }
        if let DataConfig::Synth(synth) = &self.data {
            synth.validate()?;
        }
        Ok(())
    }

    /// The tuned default synthetic experiment: ten times more
    /// attribute-only than class-only data over the bundled 6-class,
    /// 10-attribute relatedness, with a trunk narrow enough that the
    /// attribute task crowds out the class task when trained uncoupled.
    ///
    /// The coupling weights compensate for scale differences between the
    /// terms: distribution matching sums over all M attributes while the
    /// attribute loss averages per sample, so `lambda_dm` sits well below
    /// 1, and the soft co-annotation targets are low-contrast (indicator
    /// scores live in [0, 1] before the softmax), so `lambda_sca` sits
    /// well above 1.
    pub fn default_synthetic(mode: Mode, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            mode,
            lambdas: Lambdas {
                cls: 1.0,
                att: 1.0,
                dm: 0.03,
                sca: 8.0,
            },
            relatedness: Some(RelatednessSource::Oracle),
            relatedness_tau: None,
            optimizer: OptimizerConfig::default(),
            seed,
            hidden_dims: vec![14],
            init_seed: None,
            eval_every: 500,
            loss_options: LossOptions::default(),
            data: DataConfig::Synth(default_synth_config(seed)),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::from_ini(&text, base)
    }

    /// Parses the config file format; relative paths resolve against
    /// `base_dir`.
    pub fn from_ini(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
        let ini = Ini::parse(text)?;
        ini.check_known(&[
            (
                "experiment",
                &[
                    "mode",
                    "seed",
                    "lambda_cls",
                    "lambda_att",
                    "lambda_dm",
                    "lambda_sca",
                    "relatedness",
                    "relatedness_tau",
                    "eval_every",
                ],
            ),
            (
                "losses",
                &[
                    "log_eps",
                    "symmetric_dm",
                    "dm_stop_cls_grad",
                    "renorm_observed",
                ],
            ),
            ("model", &["hidden_dims", "init_seed"]),
            (
                "optimizer",
                &[
                    "algorithm",
                    "learning_rate",
                    "steps",
                    "batch_size",
                    "beta1",
                    "beta2",
                    "eps",
                ],
            ),
            (
                "data",
                &["train_cls", "train_att", "train_joint", "test", "schema"],
            ),
            (
                "synth",
                &[
                    "relatedness_file",
                    "feature_dim",
                    "n_cls_only",
                    "n_att_only",
                    "n_joint",
                    "n_test",
                    "class_sep",
                    "att_effect",
                    "noise_sd",
                    "seed",
                ],
            ),
        ])?;

        let exp = ini.section("experiment");
        let mode = Mode::parse(&exp.require("mode")?)?;
        let seed = exp.get_u64("seed")?.unwrap_or(0);
        let lambdas = Lambdas {
            cls: exp.get_f64("lambda_cls")?.unwrap_or(1.0),
            att: exp.get_f64("lambda_att")?.unwrap_or(1.0),
            dm: exp.get_f64("lambda_dm")?.unwrap_or(1.0),
            sca: exp.get_f64("lambda_sca")?.unwrap_or(1.0),
        };
        let relatedness = exp
            .get("relatedness")
            .map(|v| RelatednessSource::parse(&v, base_dir))
            .transpose()?;
        let relatedness_tau = exp.get_f64("relatedness_tau")?;
        let eval_every = exp.get_usize("eval_every")?.unwrap_or(200);

        let losses = ini.section("losses");
        let defaults = LossOptions::default();
        let loss_options = LossOptions {
            log_eps: losses.get_f64("log_eps")?.unwrap_or(defaults.log_eps),
            symmetric_dm: losses.get_bool("symmetric_dm")?.unwrap_or(false),
            dm_stop_cls_grad: losses.get_bool("dm_stop_cls_grad")?.unwrap_or(false),
            renorm_observed: losses.get_bool("renorm_observed")?.unwrap_or(false),
        };

        let model = ini.section("model");
        let hidden_dims = match model.get("hidden_dims") {
            Some(raw) => parse_dim_list(&raw)?,
            None => vec![24],
        };
        let init_seed = model.get_u64("init_seed")?;

        let opt = ini.section("optimizer");
        let algorithm = match opt.get("algorithm").as_deref() {
            None | Some("adam") => OptAlgorithm::Adam {
                beta1: opt.get_f64("beta1")?.unwrap_or(0.9),
                beta2: opt.get_f64("beta2")?.unwrap_or(0.999),
                eps: opt.get_f64("eps")?.unwrap_or(1e-8),
            },
            Some("sgd") => OptAlgorithm::Sgd,
            Some(other) => return Err(Error::Config(format!("unknown optimizer {other:?}"))),
        };
        let optimizer = OptimizerConfig {
            algorithm,
            learning_rate: opt.get_f64("learning_rate")?.unwrap_or(1e-3),
            steps: opt.get_usize("steps")?.unwrap_or(1500),
            batch_size: opt.get_usize("batch_size")?.unwrap_or(64),
        };

        let has_data = ini.has_section("data");
        let has_synth = ini.has_section("synth");
        let data = match (has_data, has_synth) {
            (true, true) => {
                return Err(Error::Config(
                    "config has both [data] and [synth]; pick one".into(),
                ))
            }
            (false, false) => {
                return Err(Error::Config(
                    "config needs a [data] or [synth] section".into(),
                ))
            }
            (true, false) => {
                let d = ini.section("data");
                DataConfig::Files {
                    train_cls: d.get("train_cls").map(|p| base_dir.join(p)),
                    train_att: d.get("train_att").map(|p| base_dir.join(p)),
                    train_joint: d.get("train_joint").map(|p| base_dir.join(p)),
                    test: base_dir.join(d.require("test")?),
                    schema: base_dir.join(d.require("schema")?),
                }
            }
            (false, true) => DataConfig::Synth(parse_synth_section(&ini, base_dir)?),
        };

        let cfg = ExperimentConfig {
            mode,
            lambdas,
            relatedness,
            relatedness_tau,
            optimizer,
            seed,
            hidden_dims,
            init_seed,
            eval_every,
            loss_options,
            data,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Default synthetic generator settings used by the multi-seed suite: the
/// attribute task has ten times the labeled data of the class task and no
/// annotation overlap. The test split is large so that per-seed metric
/// comparisons are not dominated by evaluation sampling noise.
pub fn default_synth_config(seed: u64) -> SynthConfig {
    SynthConfig {
        relatedness: RelatednessSpec::bundled_synth_default(),
        feature_dim: 16,
        n_cls_only: 300,
        n_att_only: 3000,
        n_joint: 0,
        n_test: 6000,
        class_sep: 1.1,
        att_effect: 2.4,
        noise_sd: 1.0,
        seed,
    }
}

/// Parses the `[synth]` section of a config (also used by the standalone
/// generator command).
pub fn parse_synth_section(ini: &Ini, base_dir: &Path) -> Result<SynthConfig> {
    let s = ini.section("synth");
    let relatedness = match s.get("relatedness_file") {
        Some(path) => RelatednessSpec::from_file(base_dir.join(path))?,
        None => RelatednessSpec::bundled_synth_default(),
    };
    let defaults = default_synth_config(0);
    let cfg = SynthConfig {
        relatedness,
        feature_dim: s.get_usize("feature_dim")?.unwrap_or(defaults.feature_dim),
        n_cls_only: s.get_usize("n_cls_only")?.unwrap_or(defaults.n_cls_only),
        n_att_only: s.get_usize("n_att_only")?.unwrap_or(defaults.n_att_only),
        n_joint: s.get_usize("n_joint")?.unwrap_or(defaults.n_joint),
        n_test: s.get_usize("n_test")?.unwrap_or(defaults.n_test),
        class_sep: s.get_f64("class_sep")?.unwrap_or(defaults.class_sep),
        att_effect: s.get_f64("att_effect")?.unwrap_or(defaults.att_effect),
        noise_sd: s.get_f64("noise_sd")?.unwrap_or(defaults.noise_sd),
        seed: s.get_u64("seed")?.unwrap_or(0),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_dim_list(raw: &str) -> Result<Vec<usize>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad hidden dimension {s:?}")))
        })
        .collect()
}

/// Parsed `key = value` file with `[section]` headers and `#` comments.
#[derive(Debug, Default)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

/// View over one section; absent sections read as empty.
pub struct SectionView<'a> {
    name: &'a str,
    entries: Option<&'a BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Ini> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(Error::Parse {
                    line: line_no,
                    message: "unterminated [section] header".into(),
                })?;
                let name = name.trim().to_string();
                if sections.contains_key(&name) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("duplicate section [{name}]"),
                    });
                }
                sections.insert(name.clone(), BTreeMap::new());
                current = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            let section = current.as_ref().ok_or(Error::Parse {
                line: line_no,
                message: "key outside of any [section]".into(),
            })?;
            let key = key.trim().to_string();
            let entries = sections.get_mut(section).expect("section was inserted");
            if entries.contains_key(&key) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate key {key:?} in [{section}]"),
                });
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(Ini { sections })
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    pub fn section<'a>(&'a self, name: &'a str) -> SectionView<'a> {
        SectionView {
            name,
            entries: self.sections.get(name),
        }
    }

    /// Rejects unknown sections and unknown keys, naming the offender.
    pub fn check_known(&self, known: &[(&str, &[&str])]) -> Result<()> {
        for (section, entries) in &self.sections {
            let Some((_, keys)) = known.iter().find(|(name, _)| name == section) else {
                return Err(Error::Config(format!("unknown config section [{section}]")));
            };
            for key in entries.keys() {
                if !keys.contains(&key.as_str()) {
                    return Err(Error::Config(format!(
                        "unknown key {key:?} in section [{section}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl SectionView<'_> {
    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.and_then(|e| e.get(key).cloned())
    }

    pub fn require(&self, key: &str) -> Result<String> {
        self.get(key).ok_or_else(|| {
            Error::Config(format!(
                "missing required key {key:?} in section [{}]",
                self.name
            ))
        })
    }

    fn parse_with<T>(
        &self,
        key: &str,
        what: &str,
        f: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => f(&raw).map(Some).ok_or_else(|| {
                Error::Config(format!(
                    "key {key:?} in [{}] must be {what}, got {raw:?}",
                    self.name
                ))
            }),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.parse_with(key, "a number", |s| s.parse().ok())
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.parse_with(key, "an unsigned integer", |s| s.parse().ok())
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.parse_with(key, "an unsigned integer", |s| s.parse().ok())
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.parse_with(key, "true or false", |s| match s {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = "\
            [experiment]\n\
            mode = mt_c\n\
            seed = 7\n\
            lambda_dm = 0.5\n\
            relatedness = oracle\n\
            eval_every = 100\n\
            \n\
            [model]\n\
            hidden_dims = 8,4\n\
            \n\
            [optimizer]\n\
            algorithm = adam\n\
            learning_rate = 0.01\n\
            steps = 10\n\
            batch_size = 5\n\
            \n\
            [synth]\n\
            n_cls_only = 20\n\
            n_att_only = 30\n\
            n_test = 10\n\
            seed = 3\n";
        let cfg = ExperimentConfig::from_ini(text, Path::new(".")).unwrap();
        assert_eq!(cfg.mode, Mode::MtC);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.lambdas.dm, 0.5);
        assert_eq!(cfg.lambdas.cls, 1.0);
        assert_eq!(cfg.hidden_dims, vec![8, 4]);
        assert_eq!(cfg.optimizer.steps, 10);
        assert_eq!(cfg.relatedness, Some(RelatednessSource::Oracle));
        match cfg.data {
            DataConfig::Synth(s) => {
                assert_eq!(s.n_cls_only, 20);
                assert_eq!(s.seed, 3);
            }
            DataConfig::Files { .. } => panic!("expected synth data"),
        }
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        let bad_key = "[experiment]\nmode = mt_nc\nmystery = 1\n[synth]\nn_test = 5\n";
        assert!(matches!(
            ExperimentConfig::from_ini(bad_key, Path::new(".")),
            Err(Error::Config(_))
        ));
        let bad_section = "[experiment]\nmode = mt_nc\n[wat]\nx = 1\n";
        assert!(matches!(
            ExperimentConfig::from_ini(bad_section, Path::new(".")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mt_c_requires_relatedness() {
        let text = "[experiment]\nmode = mt_c\n[synth]\nn_test = 5\n";
        assert!(matches!(
            ExperimentConfig::from_ini(text, Path::new(".")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn data_and_synth_are_exclusive() {
        let text = "\
            [experiment]\nmode = mt_nc\n\
            [data]\ntest = t.csv\nschema = s.txt\n\
            [synth]\nn_test = 5\n";
        assert!(ExperimentConfig::from_ini(text, Path::new(".")).is_err());
        let neither = "[experiment]\nmode = mt_nc\n";
        assert!(ExperimentConfig::from_ini(neither, Path::new(".")).is_err());
    }

    #[test]
    fn single_task_modes_zero_the_other_head() {
        let mut cfg = ExperimentConfig::default_synthetic(Mode::StCls, 0);
        let l = cfg.effective_lambdas();
        assert_eq!((l.cls, l.att, l.dm, l.sca), (1.0, 0.0, 0.0, 0.0));
        cfg.mode = Mode::StAtt;
        let l = cfg.effective_lambdas();
        assert_eq!((l.cls, l.att, l.dm, l.sca), (0.0, 1.0, 0.0, 0.0));
        cfg.mode = Mode::MtNc;
        let l = cfg.effective_lambdas();
        assert_eq!((l.cls, l.att, l.dm, l.sca), (1.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn relatedness_source_forms() {
        let base = Path::new("/base");
        assert_eq!(
            RelatednessSource::parse("oracle", base).unwrap(),
            RelatednessSource::Oracle
        );
        assert_eq!(
            RelatednessSource::parse("file rel.txt", base).unwrap(),
            RelatednessSource::File(PathBuf::from("/base/rel.txt"))
        );
        assert_eq!(
            RelatednessSource::parse("empirical joint", base).unwrap(),
            RelatednessSource::EmpiricalJoint
        );
        assert_eq!(
            RelatednessSource::parse("empirical joint.csv", base).unwrap(),
            RelatednessSource::EmpiricalFile(PathBuf::from("/base/joint.csv"))
        );
        assert!(RelatednessSource::parse("nonsense x y", base).is_err());
    }

    #[test]
    fn ini_errors_carry_line_numbers() {
        assert!(matches!(
            Ini::parse("[experiment\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Ini::parse("[a]\nkey\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            Ini::parse("x = 1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Ini::parse("[a]\nx = 1\nx = 2\n"),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
