//! `ov3d` command line: every pipeline stage as a subcommand over the
//! shared manifest formats.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ov3d::eval::{evaluate, report_table, LabeledBox3D};
use ov3d::io::{
    self, load_boxes2d, load_boxes3d_collection, load_calibration, load_cloud,
    load_embedding_manifest, load_index, load_vocab, save_boxes3d, save_embedding_manifest,
    save_vocab, Box3dManifest, EmbeddingEntry, EmbeddingManifest, SCHEMA_VERSION,
};
use ov3d::lifting::{lift_box, FitMode, LiftParams, LiftRejection};
use ov3d::losses::{contrastive_loss, loc_loss, total_loss, FeatureVec, Modality, PositiveMap};
use ov3d::parallel::{map_items, with_thread_pool};
use ov3d::prompts::{expand_prompts, mean_class_feature, sample_vocab, PromptTemplateSet};
use ov3d::scene::Scene;
use ov3d::synth::{generate_scene, write_dataset, SynthSpec};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (schema ", "1", ")");

#[derive(Parser)]
#[command(name = "ov3d", version = VERSION, about = "Open-vocabulary 3D detection toolkit")]
struct Cli {
    /// Worker threads for scene-level parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Emit machine-readable JSON instead of tables where applicable.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with exact ground truth.
    Synth(SynthArgs),
    /// Lift 2D detection boxes into 3D pseudo-label boxes.
    Lift(LiftArgs),
    /// Score 3D detections against ground truth (mAP / AR).
    Eval(EvalArgs),
    /// Compute localization, recognition, and total losses.
    Loss(LossArgs),
    /// Prompt vocabulary machinery.
    Prompts(PromptsArgs),
    /// Validate a dataset directory against the schemas.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of scenes (overrides the spec file).
    #[arg(long)]
    scenes: Option<usize>,
    /// Base seed (overrides the spec file).
    #[arg(long)]
    seed: Option<u64>,
    /// JSON spec file; defaults apply when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Gaussian point noise sigma in meters.
    #[arg(long)]
    noise: Option<f64>,
    /// Clutter fraction in [0, 1).
    #[arg(long)]
    clutter: Option<f64>,
}

#[derive(Args)]
struct LiftArgs {
    /// Dataset directory (index.json plus per-scene files).
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for pseudo-label box files.
    #[arg(long)]
    out: PathBuf,
    /// DBSCAN neighborhood radius in meters.
    #[arg(long, default_value_t = 0.15)]
    eps: f64,
    /// DBSCAN core-point threshold.
    #[arg(long, default_value_t = 10)]
    min_pts: usize,
    /// Minimum cluster size for a valid lift.
    #[arg(long, default_value_t = 20)]
    min_cluster: usize,
    /// Box fitting mode: axis-aligned or bev-pca.
    #[arg(long, default_value = "axis-aligned")]
    fit_mode: String,
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions: a directory of per-scene box files or a single file.
    #[arg(long)]
    pred: PathBuf,
    /// Ground truth: same shapes as --pred.
    #[arg(long)]
    gt: PathBuf,
    /// Comma-separated IoU thresholds.
    #[arg(long, default_value = "0.25,0.5")]
    iou: String,
}

#[derive(Args)]
struct LossArgs {
    /// Predicted 3D boxes (file or directory).
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Target 3D boxes (file or directory).
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Point-cloud embedding manifest.
    #[arg(long)]
    pc: Option<PathBuf>,
    /// 2D image embedding manifest.
    #[arg(long)]
    f2d: Option<PathBuf>,
    /// Text embedding manifest.
    #[arg(long)]
    ft: Option<PathBuf>,
    /// Contrastive temperature.
    #[arg(long, default_value_t = 0.07)]
    tau: f64,
    /// Average the localization loss over matched pairs instead of summing.
    #[arg(long)]
    mean_loc: bool,
}

#[derive(Args)]
struct PromptsArgs {
    #[command(subcommand)]
    action: PromptsAction,
}

#[derive(Subcommand)]
enum PromptsAction {
    /// Expand templates over a vocabulary, one prompt file per category.
    Expand {
        /// Vocabulary file, one category per line.
        #[arg(long)]
        vocab: PathBuf,
        /// Template file, one template per line; built-ins when omitted.
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Keep only the first K prompts per category.
        #[arg(long)]
        limit_per_class: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a random sub-vocabulary, reproducibly.
    Sample {
        #[arg(long)]
        vocab: PathBuf,
        /// Number of classes to draw.
        #[arg(long)]
        sample_m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output vocabulary file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean per-category features from an embedding manifest.
    Aggregate {
        /// Input embedding manifest.
        #[arg(long)]
        embeddings: PathBuf,
        /// Output embedding manifest of one mean feature per category.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Synth(args) => cmd_synth(args, cli.threads),
        Command::Lift(args) => cmd_lift(args, cli.threads),
        Command::Eval(args) => cmd_eval(args, cli.json),
        Command::Loss(args) => cmd_loss(args),
        Command::Prompts(args) => cmd_prompts(args),
        Command::Validate(args) => cmd_validate(args, cli.json),
    }
}

fn cmd_synth(args: SynthArgs, threads: usize) -> Result<i32> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading spec {}", path.display()))?;
            serde_json::from_str::<SynthSpec>(&text)
                .with_context(|| format!("parsing spec {}", path.display()))?
        }
        None => SynthSpec::default(),
    };
    if let Some(n) = args.scenes {
        spec.n_scenes = n;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.noise {
        spec.noise_sigma = n;
    }
    if let Some(c) = args.clutter {
        spec.clutter_fraction = c;
    }
    spec.validate()?;

    let indices: Vec<usize> = (0..spec.n_scenes).collect();
    let spec_ref = &spec;
    let scenes = with_thread_pool(threads, || {
        map_items(indices, |i| generate_scene(spec_ref, i))
    });
    let scenes: Vec<_> = scenes.into_iter().collect::<ov3d::Result<_>>()?;
    write_dataset(&args.out, &scenes)?;
    println!(
        "wrote {} scenes to {} (seed {})",
        scenes.len(),
        args.out.display(),
        spec.seed
    );
    Ok(0)
}

fn load_scene(dir: &Path, id: &str) -> Result<(Scene, Vec<ov3d::Box2D>)> {
    let cloud = load_cloud(&dir.join(format!("{id}.ply")))?;
    let camera = load_calibration(&dir.join(format!("{id}.calib.json")))?;
    let manifest = load_boxes2d(&dir.join(format!("{id}.boxes2d.json")))?;
    Ok((Scene::new(id, cloud, camera)?, manifest.boxes))
}

fn cmd_lift(args: LiftArgs, threads: usize) -> Result<i32> {
    let fit_mode = match args.fit_mode.as_str() {
        "axis-aligned" => FitMode::AxisAligned,
        "bev-pca" => FitMode::BevPca,
        other => bail!("unknown --fit-mode {other:?} (expected axis-aligned or bev-pca)"),
    };
    let params = LiftParams { eps: args.eps, min_pts: args.min_pts, min_cluster: args.min_cluster, fit_mode };
    params.validate()?;

    let index = load_index(&args.dataset.join("index.json"))?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let dataset = &args.dataset;
    let params_ref = &params;
    let results = with_thread_pool(threads, || {
        map_items(index.scenes.clone(), |id| -> Result<_> {
            let (scene, boxes) = load_scene(dataset, &id)?;
            let mut lifted = Vec::new();
            let mut rejections: BTreeMap<LiftRejection, usize> = BTreeMap::new();
            for b in &boxes {
                match lift_box(&scene, b, params_ref) {
                    Ok(bbox) => lifted.push(LabeledBox3D {
                        bbox,
                        category: b.phrase.clone().unwrap_or_else(|| "object".to_string()),
                        score: Some(b.score.unwrap_or(1.0)),
                    }),
                    Err(reason) => *rejections.entry(reason).or_default() += 1,
                }
            }
            Ok((id, boxes.len(), lifted, rejections))
        })
    });

    let mut total_in = 0usize;
    let mut total_lifted = 0usize;
    let mut total_rejections: BTreeMap<String, usize> = BTreeMap::new();
    for r in results {
        let (id, n_in, lifted, rejections) = r?;
        total_in += n_in;
        total_lifted += lifted.len();
        for (reason, n) in rejections {
            *total_rejections.entry(reason.to_string()).or_default() += n;
        }
        save_boxes3d(
            &args.out.join(format!("{id}.pred.json")),
            &Box3dManifest::from_labeled(&id, &lifted),
        )?;
    }
    println!("boxes in: {total_in}, lifted: {total_lifted}, rejected: {}", total_in - total_lifted);
    for (reason, n) in &total_rejections {
        println!("  {reason}: {n}");
    }
    Ok(0)
}

fn parse_thresholds(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("bad IoU threshold {t:?}"))
        })
        .collect()
}

fn cmd_eval(args: EvalArgs, json: bool) -> Result<i32> {
    let thresholds = parse_thresholds(&args.iou)?;
    let preds = load_boxes3d_collection(&args.pred)?;
    let gts = load_boxes3d_collection(&args.gt)?;
    let report = evaluate(&preds, &gts, &thresholds)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report_table(&report));
        if !report.unknown_categories.is_empty() {
            println!("unknown prediction categories: {:?}", report.unknown_categories);
        }
    }
    Ok(0)
}

/// When OV3D_EMBEDDINGS_ENDPOINT is set, manifest paths may instead be
/// comma-separated id lists fetched over HTTP.
fn load_features(path: &Path) -> Result<Vec<FeatureVec>> {
    if let Ok(endpoint) = std::env::var("OV3D_EMBEDDINGS_ENDPOINT") {
        let ids: Vec<String> = path
            .to_string_lossy()
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let cfg = io::ProviderConfig::http(endpoint, std::time::Duration::from_secs(30));
        return Ok(io::load_embeddings(&cfg, &ids)?);
    }
    Ok(load_embedding_manifest(path)?.to_features()?)
}

fn cmd_loss(args: LossArgs) -> Result<i32> {
    let mut l_loc = 0.0;
    if let (Some(pred), Some(gt)) = (&args.pred, &args.gt) {
        let preds = load_boxes3d_collection(pred)?;
        let gts = load_boxes3d_collection(gt)?;
        for (id, pred_boxes) in &preds {
            let empty = Vec::new();
            let gt_boxes = gts.get(id).unwrap_or(&empty);
            let p: Vec<_> = pred_boxes.iter().map(|b| b.bbox).collect();
            let t: Vec<_> = gt_boxes.iter().map(|b| b.bbox).collect();
            l_loc += loc_loss(&p, &t, args.mean_loc).0;
        }
    }

    let mut l_recog = 0.0;
    if let Some(pc) = &args.pc {
        let f_pc = load_features(pc)?;
        let add_term = |other: &Path| -> Result<f64> {
            let f_other = load_features(other)?;
            let positives = PositiveMap::from_categories(&f_pc, &f_other)?;
            Ok(contrastive_loss(&f_pc, &f_other, &positives, args.tau)?.0)
        };
        if let Some(f2d) = &args.f2d {
            l_recog += add_term(f2d)?;
        }
        if let Some(ft) = &args.ft {
            l_recog += add_term(ft)?;
        }
    }

    let out = serde_json::json!({
        "l_loc": l_loc,
        "l_recog": l_recog,
        "l_total": total_loss(l_loc, l_recog),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}

fn cmd_prompts(args: PromptsArgs) -> Result<i32> {
    match args.action {
        PromptsAction::Expand { vocab, templates, limit_per_class, out } => {
            let vocab = load_vocab(&vocab)?;
            let templates = match templates {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    PromptTemplateSet::new(
                        text.lines().filter(|l| !l.trim().is_empty()).map(String::from).collect(),
                    )?
                }
                None => PromptTemplateSet::builtin(),
            };
            let mut prompts = expand_prompts(&vocab, &templates)?;
            if let Some(k) = limit_per_class {
                prompts = prompts.limit_per_class(k);
            }
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (category, lines) in prompts.entries() {
                let path = out.join(format!("{category}.txt"));
                std::fs::write(&path, lines.join("\n") + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            println!("wrote {} prompts across {} categories", prompts.total_prompts(), prompts.entries().len());
        }
        PromptsAction::Sample { vocab, sample_m, seed, out } => {
            let vocab = load_vocab(&vocab)?;
            let sampled = sample_vocab(&vocab, sample_m, seed)?;
            match out {
                Some(path) => save_vocab(&path, &sampled)?,
                None => {
                    for name in sampled.names() {
                        println!("{name}");
                    }
                }
            }
        }
        PromptsAction::Aggregate { embeddings, out } => {
            let manifest = load_embedding_manifest(&embeddings)?;
            let feats = manifest.to_features()?;
            let mut categories: Vec<String> = Vec::new();
            for f in &feats {
                if let Some(c) = &f.category {
                    if !categories.contains(c) {
                        categories.push(c.clone());
                    }
                }
            }
            if categories.is_empty() {
                bail!("no categorized entries in {}", embeddings.display());
            }
            let entries = categories
                .iter()
                .map(|c| {
                    let mean = mean_class_feature(&feats, c)?;
                    Ok(EmbeddingEntry {
                        id: mean.id.clone(),
                        modality: Modality::Text,
                        category: Some(c.clone()),
                        vector: mean.values,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let out_manifest = EmbeddingManifest { dim: manifest.dim, entries };
            save_embedding_manifest(&out, &out_manifest)?;
            println!("wrote {} mean features to {}", out_manifest.entries.len(), out.display());
        }
    }
    Ok(0)
}

fn cmd_validate(args: ValidateArgs, json: bool) -> Result<i32> {
    let violations = io::validate_dataset(&args.dataset)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&violations)?);
    } else if violations.is_empty() {
        println!("ok: no violations");
    } else {
        for v in &violations {
            println!("{v}");
        }
    }
    let errors = violations.iter().filter(|v| v.severity == io::Severity::Error).count();
    Ok(if errors > 0 { 1 } else { 0 })
}

// keep the schema version in the --version string honest
const _: () = assert!(SCHEMA_VERSION.len() == 1 && SCHEMA_VERSION.as_bytes()[0] == b'1');
