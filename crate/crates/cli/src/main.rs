//! `cotask`: train and compare coupled multi-task models from the
//! command line.
//!
//! Subcommands: `gen-synth` writes a synthetic dataset to CSV files,
//! `infer-rel` measures class-attribute relatedness from a jointly
//! annotated CSV, `train` runs one experiment, `eval` scores a checkpoint
//! on a dataset, and `suite` runs a multi-seed mode comparison with a
//! negative-transfer report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use cotask::data::{dataset_to_csv, gen_synthetic, load_dataset, Schema};
use cotask::harness::config::Ini;
use cotask::harness::{evaluate, parse_synth_section, run_suite, train, ExperimentConfig, Mode};
use cotask::metrics::{metrics_csv_rows, TaskKind};
use cotask::model::MlpParams;
use cotask::relatedness::infer_relatedness;
use cotask::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cotask",
    version,
    about = "Coupled multi-task learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic dataset splits from the `[synth]` section of a
    /// config file.
    GenSynth {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the CSV splits, schema, and true
        /// relatedness.
        #[arg(long)]
        out: PathBuf,
    },
    /// Infer empirical class-attribute relatedness from a jointly
    /// annotated dataset.
    InferRel {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one training experiment.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for runlog.csv, metrics.csv and
        /// checkpoint.ckpt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Schema sidecar; without it the schema is reconstructed from
        /// the CSV header and the checkpoint dimensions.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Also dump per-sample predictions to this CSV.
        #[arg(long)]
        dump_preds: Option<PathBuf>,
    },
    /// Run several modes over consecutive seeds and compare them.
    Suite {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated modes, e.g. `st_cls,st_att,mt_nc,mt_c`.
        #[arg(long)]
        modes: String,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenSynth { config, out } => gen_synth_cmd(&config, &out),
        Command::InferRel { data, schema, out } => infer_rel_cmd(&data, &schema, &out),
        Command::Train { config, out } => train_cmd(&config, &out),
        Command::Eval {
            checkpoint,
            data,
            schema,
            dump_preds,
        } => eval_cmd(&checkpoint, &data, schema.as_deref(), dump_preds.as_deref()),
        Command::Suite {
            config,
            modes,
            seeds,
            out,
        } => suite_cmd(&config, &modes, seeds, &out),
    }
}

fn gen_synth_cmd(config: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config)?;
    let base_dir = config.parent().unwrap_or(Path::new("."));
    let ini = Ini::parse(&text)?;
    if !ini.has_section("synth") {
        return Err(Error::Config("config has no [synth] section".into()));
    }
    let synth = parse_synth_section(&ini, base_dir)?;
    let data = gen_synthetic(&synth)?;

    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (name, ds) in [
        ("train_cls.csv", &data.train_cls_only),
        ("train_att.csv", &data.train_att_only),
        ("train_joint.csv", &data.train_joint),
    ] {
        if let Some(ds) = ds {
            std::fs::write(out.join(name), dataset_to_csv(ds))?;
            written.push(name);
        }
    }
    std::fs::write(out.join("test.csv"), dataset_to_csv(&data.test))?;
    written.push("test.csv");
    synth.schema().save(out.join("schema.txt"))?;
    synth.relatedness.save(out.join("relatedness_true.rel"))?;
    written.extend(["schema.txt", "relatedness_true.rel"]);
    println!("wrote {} to {}", written.join(", "), out.display());
    Ok(())
}

fn infer_rel_cmd(data: &Path, schema: &Path, out: &Path) -> Result<()> {
    let schema = Schema::from_file(schema)?;
    let dataset = load_dataset(data, &schema)?;
    let spec = infer_relatedness(&dataset)?;
    spec.save(out)?;
    println!(
        "inferred relatedness for {} classes x {} attributes from {} samples -> {}",
        spec.num_classes(),
        spec.num_attributes(),
        dataset.len(),
        out.display()
    );
    Ok(())
}

fn train_cmd(config: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::from_file(config)?;
    let output = train(&cfg)?;
    std::fs::create_dir_all(out)?;

    let checkpoint_path = out.join("checkpoint.ckpt");
    output.params.save(&checkpoint_path)?;
    let mut log = output.log;
    log.checkpoint = Some(checkpoint_path.display().to_string());
    std::fs::write(out.join("runlog.csv"), log.to_csv())?;

    let run_id = format!("{}-s{}", cfg.mode, cfg.seed);
    let mut metrics = String::from("run_id,mode,seed,task,metric,value\n");
    if let Some(m) = &output.final_scores.cls {
        metrics.push_str(&metrics_csv_rows(
            &run_id,
            cfg.mode.as_str(),
            cfg.seed,
            TaskKind::Classes,
            m,
        ));
    }
    if let Some(m) = &output.final_scores.att {
        metrics.push_str(&metrics_csv_rows(
            &run_id,
            cfg.mode.as_str(),
            cfg.seed,
            TaskKind::Attributes,
            m,
        ));
    }
    std::fs::write(out.join("metrics.csv"), &metrics)?;
    print!("{metrics}");
    Ok(())
}

/// Rebuilds a schema from a dataset CSV header plus the checkpoint's class
/// count (class names become c0..c{K-1}).
fn schema_from_header(csv_path: &Path, num_classes: usize) -> Result<Schema> {
    let text = std::fs::read_to_string(csv_path)?;
    let header = text.lines().next().ok_or(Error::Parse {
        line: 1,
        message: "empty dataset file".into(),
    })?;
    let mut feature_dim = 0usize;
    let mut attributes = Vec::new();
    for cell in header.split(',') {
        let cell = cell.trim();
        if cell.starts_with('x') && cell[1..].parse::<usize>().is_ok() {
            feature_dim += 1;
        } else if let Some(name) = cell.strip_prefix("att_") {
            attributes.push(name.to_string());
        }
    }
    let classes = (0..num_classes).map(|c| format!("c{c}")).collect();
    Schema::new(classes, attributes, feature_dim)
}

fn eval_cmd(
    checkpoint: &Path,
    data: &Path,
    schema: Option<&Path>,
    dump_preds: Option<&Path>,
) -> Result<()> {
    let params = MlpParams::load(checkpoint)?;
    let schema = match schema {
        Some(path) => Schema::from_file(path)?,
        None => schema_from_header(data, params.config().num_classes)?,
    };
    let dataset = load_dataset(data, &schema)?;
    let scores = evaluate(&params, &dataset)?;

    let run_id = "eval";
    let mut out = String::from("run_id,mode,seed,task,metric,value\n");
    if let Some(m) = &scores.cls {
        out.push_str(&metrics_csv_rows(run_id, "eval", 0, TaskKind::Classes, m));
    }
    if let Some(m) = &scores.att {
        out.push_str(&metrics_csv_rows(
            run_id,
            "eval",
            0,
            TaskKind::Attributes,
            m,
        ));
    }
    print!("{out}");

    if let Some(path) = dump_preds {
        let features = dataset.features_matrix();
        let (preds, _) = params.forward(&features)?;
        let mut dump = String::from("id,pred_cls");
        for name in schema.attribute_names() {
            let _ = write!(dump, ",att_{name}");
        }
        dump.push('\n');
        for j in 0..dataset.len() {
            let row = preds.cls_probs().row(j);
            let argmax = (0..row.len())
                .max_by(|&a, &b| row[a].partial_cmp(&row[b]).expect("finite probs"))
                .expect("nonempty row");
            let _ = write!(dump, "{j},{argmax}");
            for i in 0..schema.num_attributes() {
                let _ = write!(dump, ",{}", preds.att_probs().get(j, i));
            }
            dump.push('\n');
        }
        std::fs::write(path, dump)?;
    }
    Ok(())
}

fn suite_cmd(config: &Path, modes: &str, seeds: u64, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::from_file(config)?;
    let modes: Vec<Mode> = modes
        .split(',')
        .map(|m| Mode::parse(m.trim()))
        .collect::<Result<_>>()?;
    let suite = run_suite(&cfg, &modes, seeds)?;

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("metrics.csv"), suite.metrics_csv())?;
    std::fs::write(out.join("summary.csv"), suite.summary_csv())?;
    let table = suite.table_text();
    std::fs::write(out.join("table.txt"), &table)?;

    let mut transfer = String::from(
        "mode,task,metric,st_mean,mt_mean,negative_transfer,seeds_flagged,seeds_compared\n",
    );
    for t in suite.transfer_summaries() {
        let _ = writeln!(
            transfer,
            "{},{},{},{},{},{},{},{}",
            t.mode,
            t.task.as_str(),
            t.metric.as_str(),
            t.st_mean,
            t.mt_mean,
            t.negative_transfer,
            t.seeds_flagged,
            t.seeds_compared
        );
    }
    std::fs::write(out.join("transfer.csv"), transfer)?;

    print!("{table}");
    let failed = suite.runs.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        return Err(Error::Config(format!("{failed} suite runs failed")));
    }
    Ok(())
}
