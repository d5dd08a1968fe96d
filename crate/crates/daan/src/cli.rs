//! Command-line interface: dataset synthesis, training, evaluation,
//! attention-overlay rendering, and vote aggregation.
//!
//! Every command is deterministic given its flags, input files and seeds.
//! Errors go to standard error with exit code 1 (bad flags exit 2 with a
//! usage string); nothing is partially written on the error paths. Relative
//! `--out` paths resolve against `DAAN_OUT_ROOT` when that variable is set.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use ndarray::{Array2, Array3, Ix2, Ix4};

use crate::attention::{cam_file_name, compute_cam, normalize_map, render_cam, save_overlay};
use crate::autograd::{ParamMode, Tape};
use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::data::synth::{synth_generate, synth_test_sets};
use crate::data::{
    aggregate_votes, load_manifest, load_votes, resolve_out, save_image, write_manifest, Dataset,
    Domain, ManifestRow, Split,
};
use crate::metrics::{evaluate_model, render_report, ReportFormat};
use crate::model::{Heads, Model, ModelConfig};
use crate::schema::{parse_schema, AttributeSchema};
use crate::trainer::{Method, Trainer};

/// Environment variable naming the directory that relative `--out` paths
/// resolve against.
pub const OUT_ROOT_VAR: &str = "DAAN_OUT_ROOT";

#[derive(Parser)]
#[command(
    name = "daan",
    about = "Domain-adaptive attribute recognition on a synthetic two-domain dataset",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset: images, manifests and the schema file.
    Synth {
        /// Experiment config file (desk-scale defaults when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write checkpoints plus a per-step loss log.
    Train {
        /// Experiment config file (desk-scale defaults when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training method; overrides the config file.
        #[arg(long)]
        method: Option<String>,
        /// Grouped heads on/off; overrides the config file.
        #[arg(long)]
        multitask: Option<String>,
        /// Seed override for model init and batch order.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default `run_<method>_seed<seed>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a labeled manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest with labels for every row.
        #[arg(long)]
        manifest: PathBuf,
        /// Write the per-attribute CSV report here (stdout shows macros).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render attention overlays for chosen samples and classes.
    Cam {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated sample ids.
        #[arg(long)]
        ids: String,
        /// Comma-separated `group:class` pairs (bare attribute names for a
        /// flat-head checkpoint).
        #[arg(long)]
        classes: String,
        /// Output directory for the PNG overlays.
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a multi-annotator vote file into majority labels.
    Votes {
        /// Vote CSV: rows `id,annotator,bit_1,...,bit_N`.
        votes: PathBuf,
        /// Experiment config naming the schema (defaults when omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the label CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Binary entry point: parse, dispatch, map errors to stderr + exit 1.
pub fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out } => cmd_synth(config.as_deref(), &out),
        Command::Train { config, method, multitask, seed, out } => cmd_train(
            config.as_deref(),
            method.as_deref(),
            multitask.as_deref(),
            seed,
            out.as_deref(),
        ),
        Command::Eval { checkpoint, manifest, out } => {
            cmd_eval(&checkpoint, &manifest, out.as_deref())
        }
        Command::Cam { checkpoint, manifest, ids, classes, out } => {
            cmd_cam(&checkpoint, &manifest, &ids, &classes, &out)
        }
        Command::Votes { votes, config, out } => cmd_votes(&votes, config.as_deref(), out.as_deref()),
    }
}

fn out_root() -> Option<PathBuf> {
    std::env::var_os(OUT_ROOT_VAR).map(PathBuf::from)
}

fn rooted(path: &Path) -> PathBuf {
    resolve_out(out_root().as_deref(), path)
}

/// Load the config file (or take defaults) and fold a `schema_file`, if
/// named, into the synthetic group spec. The schema file resolves relative
/// to the config file's directory.
pub fn load_experiment(config: Option<&Path>) -> Result<ExperimentConfig> {
    let mut experiment = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk_default(),
    };
    if let Some(file) = experiment.schema_file.clone() {
        let base = config.and_then(Path::parent).unwrap_or_else(|| Path::new("."));
        let path = base.join(&file);
        experiment.synth.group_spec = std::fs::read_to_string(&path)
            .with_context(|| format!("reading schema file {}", path.display()))?;
    }
    Ok(experiment)
}

/// Rebuild the trained model from a checkpoint's embedded config and schema.
pub fn model_from_checkpoint(ckpt: &Checkpoint) -> Result<(Model, ExperimentConfig, AttributeSchema)> {
    let experiment = ExperimentConfig::parse(&ckpt.config_text, "<checkpoint config>")?;
    let schema = parse_schema(&ckpt.schema_text)?;
    ckpt.verify_schema(&schema)?;
    let model_config = ModelConfig { image_size: experiment.synth.image_size, ..ModelConfig::desk() };
    let mut model = Model::new(model_config, &schema, experiment.train.multitask, 0)?;
    ckpt.unpack_params(&mut model.store)?;
    Ok((model, experiment, schema))
}

/// Render the synthetic dataset: one `images/` directory, a `schema.txt`,
/// and four manifests (train + test per domain). The training target
/// manifest is written without labels — that is the adaptation input —
/// while the target test manifest keeps its oracle labels for evaluation.
pub fn cmd_synth(config: Option<&Path>, out: &Path) -> Result<()> {
    let experiment = load_experiment(config)?;
    let out = rooted(out);
    let (source_train, target_train) = synth_generate(&experiment.synth)?;
    let (source_test, target_test) = synth_test_sets(&experiment.synth)?;
    let schema = source_train.schema.clone();

    let images = out.join("images");
    std::fs::create_dir_all(&images)
        .with_context(|| format!("creating {}", images.display()))?;
    std::fs::write(out.join("schema.txt"), schema.to_text())
        .with_context(|| format!("writing {}", out.join("schema.txt").display()))?;

    let sets: [(&Dataset, &str, bool); 4] = [
        (&source_train, "source_train", true),
        (&target_train, "target_train", false),
        (&source_test, "source_test", true),
        (&target_test, "target_test", true),
    ];
    let mut n_images = 0usize;
    for (dataset, name, labeled) in sets {
        let mut rows = Vec::with_capacity(dataset.len());
        for sample in &dataset.samples {
            let file = format!("{}.png", sample.id);
            save_image(&images.join(&file), &sample.image)?;
            n_images += 1;
            rows.push(ManifestRow {
                id: sample.id.clone(),
                image_rel: format!("images/{file}"),
                labels: if labeled { sample.labels.clone() } else { None },
            });
        }
        write_manifest(&out.join(format!("{name}.csv")), &schema, &rows)?;
    }
    println!(
        "wrote 4 manifests, schema.txt and {} images to {}",
        n_images,
        out.display()
    );
    Ok(())
}

fn parse_on_off(value: &str) -> Result<bool> {
    match value {
        "on" => Ok(true),
        "off" => Ok(false),
        other => bail!("--multitask expects on or off, got {other}"),
    }
}

/// Train per the config (plus flag overrides) on the in-memory synthetic
/// dataset; write `config.txt`, `train_log.csv` and checkpoints.
pub fn cmd_train(
    config: Option<&Path>,
    method: Option<&str>,
    multitask: Option<&str>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let mut experiment = load_experiment(config)?;
    if let Some(name) = method {
        experiment.train.method = Method::parse(name).ok_or_else(|| {
            let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            anyhow!("unknown method {name}; expected one of {}", names.join(", "))
        })?;
    }
    if let Some(value) = multitask {
        experiment.train.multitask = parse_on_off(value)?;
    }
    if let Some(s) = seed {
        experiment.train.seed = s;
    }

    let default_dir = PathBuf::from(format!(
        "run_{}_seed{}",
        experiment.train.method.name(),
        experiment.train.seed
    ));
    let out = rooted(out.unwrap_or(&default_dir));

    let schema = experiment.synth.schema()?;
    let model_config = ModelConfig { image_size: experiment.synth.image_size, ..ModelConfig::desk() };
    let mut trainer = Trainer::new(
        experiment.train.clone(),
        model_config,
        &schema,
        Some(&experiment.synth),
    )?;
    trainer.config_text = experiment.to_text();

    let (source, mut target) = synth_generate(&experiment.synth)?;
    // Only the supervised upper bound may see target labels.
    if experiment.train.method != Method::TargetOnly {
        for sample in &mut target.samples {
            sample.labels = None;
        }
    }

    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("config.txt"), trainer.config_text.as_bytes())
        .with_context(|| format!("writing {}", out.join("config.txt").display()))?;
    let (ckpt, history) = trainer.fit(&source, &target, Some(&out))?;
    match history.last() {
        Some(last) => println!(
            "trained {} for {} steps (final total loss {:.6}); artifacts in {}",
            experiment.train.method.name(),
            ckpt.step,
            last.total,
            out.display()
        ),
        None => println!(
            "wrote initial checkpoint (0 steps) for {} to {}",
            experiment.train.method.name(),
            out.display()
        ),
    }
    Ok(())
}

/// Evaluate a checkpoint on a labeled manifest: per-attribute CSV to
/// `--out` (if given), macro averages to stdout.
pub fn cmd_eval(checkpoint: &Path, manifest: &Path, out: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let (model, experiment, schema) = model_from_checkpoint(&ckpt)?;
    let dataset = load_manifest(manifest, &schema, Domain::Target, Split::Test)?;
    let metrics = evaluate_model(&model, &dataset, experiment.train.batch_size)?;
    let (macro_acc, macro_f1) = metrics.macro_average();
    if let Some(path) = out {
        let path = rooted(path);
        std::fs::write(&path, render_report(&metrics, ReportFormat::Csv))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "step {} on {} samples: macro_acc {:.6} macro_f1 {:.6}",
        ckpt.step,
        dataset.len(),
        macro_acc,
        macro_f1
    );
    Ok(())
}

/// Attention channels as addressable names: `group:class` pairs for grouped
/// heads, bare attribute names for a flat head.
fn channel_names(schema: &AttributeSchema, heads: &Heads) -> Vec<(String, String)> {
    match heads {
        Heads::Grouped(_) => schema.class_index(),
        Heads::Flat(_) => schema
            .attributes()
            .iter()
            .map(|a| (a.clone(), a.clone()))
            .collect(),
    }
}

fn parse_class_list(
    spec: &str,
    names: &[(String, String)],
    grouped: bool,
) -> Result<Vec<usize>> {
    let valid = || {
        names
            .iter()
            .map(|(g, c)| if grouped { format!("{g}:{c}") } else { g.clone() })
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut rows = Vec::new();
    for entry in spec.split(',').map(str::trim).filter(|e| !e.is_empty()) {
        let row = if grouped {
            let (group, class) = entry
                .split_once(':')
                .ok_or_else(|| anyhow!("class {entry} is not group:class; valid: {}", valid()))?;
            names
                .iter()
                .position(|(g, c)| g == group.trim() && c == class.trim())
        } else {
            names.iter().position(|(g, _)| g == entry)
        };
        rows.push(row.ok_or_else(|| anyhow!("unknown class {entry}; valid: {}", valid()))?);
    }
    if rows.is_empty() {
        bail!("no classes requested");
    }
    Ok(rows)
}

/// Write one heat overlay PNG per (sample id, class): file names are
/// `<id>_<group>_<class>.png`, pixels deterministic for a fixed checkpoint.
pub fn cmd_cam(
    checkpoint: &Path,
    manifest: &Path,
    ids: &str,
    classes: &str,
    out: &Path,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let (model, _, schema) = model_from_checkpoint(&ckpt)?;
    let dataset = load_manifest(manifest, &schema, Domain::Target, Split::Test)?;

    let names = channel_names(&schema, &model.heads);
    let grouped = matches!(model.heads, Heads::Grouped(_));
    let rows = parse_class_list(classes, &names, grouped)?;
    let ids: Vec<&str> = ids.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if ids.is_empty() {
        bail!("no sample ids requested");
    }

    // One frozen pass gives the weight matrix shared by every sample.
    let weight_matrix: Array2<f32> = {
        let mut tape = Tape::new(&model.store);
        let w = model.heads.stacked_weights(&mut tape, &model.store, ParamMode::Frozen);
        tape.value(w).clone().into_dimensionality::<Ix2>().expect("weights are [rows, C_f]")
    };

    let out = rooted(out);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = 0usize;
    for id in ids {
        let index = dataset
            .samples
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| anyhow!("sample id {id} is not in {}", manifest.display()))?;
        let sample = &dataset.samples[index];

        let mut tape = Tape::new(&model.store);
        let x = model.input(&mut tape, &dataset.stack_images(&[index]))?;
        let feats = model.extract(&mut tape, x, ParamMode::Frozen)?;
        let spatial4 = tape
            .value(feats.spatial)
            .clone()
            .into_dimensionality::<Ix4>()
            .expect("spatial features are [1, C, H, W]");
        let spatial: Array3<f32> = spatial4.index_axis_move(ndarray::Axis(0), 0);

        for &row in &rows {
            let w_row: Vec<f32> = weight_matrix.row(row).to_vec();
            let cam = compute_cam(&spatial, &w_row)?;
            let overlay = render_cam(&normalize_map(&cam), &sample.image);
            let (group, class) = &names[row];
            save_overlay(&out.join(cam_file_name(id, group, class)), &overlay)?;
            written += 1;
        }
    }
    println!("wrote {} overlays to {}", written, out.display());
    Ok(())
}

/// Aggregate a vote file into one majority label row per sample id.
pub fn cmd_votes(votes: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let experiment = load_experiment(config)?;
    let schema = parse_schema(&experiment.synth.group_spec)?;
    let table = load_votes(votes, schema.n_attributes())?;
    let labels = aggregate_votes(&table)?;

    let mut text = String::from("id");
    for attr in schema.attributes() {
        text.push_str(",label_");
        text.push_str(attr);
    }
    text.push('\n');
    for (id, bits) in &labels {
        text.push_str(id);
        for b in bits {
            text.push(',');
            text.push(if *b != 0 { '1' } else { '0' });
        }
        text.push('\n');
    }
    match out {
        Some(path) => {
            let path = rooted(path);
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            println!("aggregated {} samples to {}", labels.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
