use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

use scenenet::audio::load_wav;
use scenenet::classes::{SceneClass, SCENE_LABELS};
use scenenet::eval::{
    align_dumps, ensemble_geomean, predict_clip, select_ensemble, Candidate, DumpRow, PredictionDump, Report,
};
use scenenet::features::{self, FeatureCache, FeatureVariant};
use scenenet::fsutil::write_atomic;
use scenenet::models::{load_checkpoint, save_checkpoint, Model};
use scenenet::par::with_workers;
use scenenet::pipeline::{
    fit_clip, predict_dataset, DatasetManifest, FeatureStore, TrainConfig, TrainHistory, TrainOptions, Trainer,
};

/// Acoustic scene classification with log-mel CNNs.
#[derive(Debug, Parser)]
#[command(name = "scenenet", version)]
struct Cli {
    /// Worker threads for extraction and batched math (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Feature cache directory.
    #[arg(long, global = true, env = "SCENENET_CACHE")]
    cache: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract log-mel features for every clip in a manifest into the cache.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        variant: FeatureVariant,
    },
    /// Train a model from a key=value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from last.spck and history.csv in the checkpoint directory.
        #[arg(long)]
        resume: bool,
    },
    /// Write fused per-clip predictions and a confusion matrix for a manifest.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick diverse members from prediction dumps and combine them.
    Ensemble {
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        dumps: Vec<PathBuf>,
        /// Minimum macro accuracy in percent a member must exceed.
        #[arg(long)]
        baseline: f64,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Optional output file for the combined predictions.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify one WAV file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        wav: PathBuf,
    },
    /// Class-wise accuracy table for one or more prediction dumps.
    Report {
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        dumps: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let workers = cli.workers;
    match with_workers(workers, move || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cache = cli.cache;
    match cli.command {
        Command::Extract { manifest, variant } => extract(&manifest, variant, cache),
        Command::Train { config, resume } => train(&config, resume, cache),
        Command::Evaluate { checkpoint, manifest, out } => evaluate(&checkpoint, &manifest, &out, cache),
        Command::Ensemble { dumps, baseline, k, out } => ensemble(&dumps, baseline, k, out.as_deref()),
        Command::Predict { checkpoint, wav } => predict(&checkpoint, &wav),
        Command::Report { dumps, out } => report(&dumps, &out),
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn extract(manifest: &Path, variant: FeatureVariant, cache: Option<PathBuf>) -> Result<()> {
    require_file(manifest, "manifest")?;
    let Some(dir) = cache else {
        bail!("extract needs a cache directory: pass --cache or set SCENENET_CACHE");
    };
    let manifest = DatasetManifest::load(manifest)?;
    let store = FeatureStore::new(Some(FeatureCache::new(dir)));
    let results = store
        .exec
        .map(manifest.len(), |i| store.spectrogram(&manifest.entries[i].path, variant).map(|(_, fresh)| fresh));
    let mut written = 0;
    let mut failures = Vec::new();
    for (e, r) in manifest.entries.iter().zip(results) {
        match r {
            Ok(true) => written += 1,
            Ok(false) => {}
            Err(err) => failures.push(format!("{}: {err}", e.clip_id)),
        }
    }
    println!(
        "{} clips, {written} extracted, {} up to date, {} failed",
        manifest.len(),
        manifest.len() - written - failures.len(),
        failures.len()
    );
    if !failures.is_empty() {
        bail!("{} clips failed:\n  {}", failures.len(), failures.join("\n  "));
    }
    Ok(())
}

fn train(config: &Path, resume: bool, cache: Option<PathBuf>) -> Result<()> {
    require_file(config, "config")?;
    let cfg = TrainConfig::load(config)?;
    require_file(&cfg.train_manifest, "train manifest")?;
    require_file(&cfg.val_manifest, "validation manifest")?;
    let train_m = DatasetManifest::load(&cfg.train_manifest)?;
    let val_m = DatasetManifest::load(&cfg.val_manifest)?;
    train_m.check_disjoint(&val_m)?;

    let store = FeatureStore::new(cfg.cache_dir.clone().or(cache).map(FeatureCache::new));
    let train_set = store.dataset(&train_m, cfg.variant)?;
    let val_set = store.dataset(&val_m, cfg.variant)?;
    info!(
        "{}: {} training segments, {} validation clips",
        cfg.model,
        train_set.segment_count(),
        val_set.clips.len()
    );

    let options = TrainOptions { batch_size: cfg.batch_size, epochs: cfg.epochs, seed: cfg.seed };
    let dir = &cfg.checkpoint_dir;
    let (last_path, best_path, hist_path) = (dir.join("last.spck"), dir.join("best.spck"), dir.join("history.csv"));
    let mut trainer = if resume {
        let model = load_checkpoint(&last_path)?;
        if model.graph != cfg.model.graph() {
            bail!("{} was not trained as {}", last_path.display(), cfg.model);
        }
        let text = std::fs::read_to_string(&hist_path).with_context(|| format!("reading {}", hist_path.display()))?;
        let history = TrainHistory::parse_csv(&text)?;
        let best = if best_path.is_file() { Some(load_checkpoint(&best_path)?) } else { None };
        info!("resuming after epoch {}", history.len());
        Trainer::resume(model, history, best, options)
    } else {
        Trainer::new(Model::new(cfg.model.graph(), cfg.seed)?, options)
    };

    trainer.fit(&train_set, &val_set, |t, r| {
        info!(
            "epoch {:>3}: loss {:.4}, train segments {:.1}%, validation {:.1}%",
            r.epoch + 1,
            r.train_loss,
            100.0 * r.train_seg_acc,
            100.0 * r.val_macro_acc
        );
        save_checkpoint(&t.model, &last_path)?;
        if let Some(best) = t.best() {
            if t.history().best_epoch() == Some(r.epoch) {
                save_checkpoint(best, &best_path)?;
            }
        }
        write_atomic(&hist_path, t.history().to_csv().as_bytes())
            .map_err(|source| scenenet::pipeline::PipelineError::Io { path: hist_path.clone(), source })
    })?;

    let h = trainer.history();
    match h.best_epoch() {
        Some(b) => println!(
            "best validation macro accuracy {:.1}% at epoch {} ({})",
            100.0 * h.records[b].val_macro_acc,
            b + 1,
            best_path.display()
        ),
        None => println!("no epochs run"),
    }
    Ok(())
}

fn evaluate(checkpoint: &Path, manifest: &Path, out: &Path, cache: Option<PathBuf>) -> Result<()> {
    require_file(checkpoint, "checkpoint")?;
    require_file(manifest, "manifest")?;
    let model = load_checkpoint(checkpoint)?;
    let manifest = DatasetManifest::load(manifest)?;
    let store = FeatureStore::new(cache.map(FeatureCache::new));
    let data = store.dataset(&manifest, model.variant())?;
    let dump = predict_dataset(&model, &data)?;
    let cm = dump.confusion();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_text(&out.join("predictions.csv"), &dump.to_csv()?)?;
    write_text(&out.join("confusion.csv"), &cm.to_csv())?;
    for (label, acc) in SCENE_LABELS.iter().zip(cm.class_accuracy()) {
        if let Some(a) = acc {
            println!("{label:<20} {:>5.1}", 100.0 * a);
        }
    }
    println!("{:<20} {:>5.1}", "macro accuracy", 100.0 * cm.macro_accuracy()?);
    Ok(())
}

fn load_dumps(paths: &[PathBuf]) -> Result<Vec<PredictionDump>> {
    paths
        .iter()
        .map(|p| {
            require_file(p, "prediction dump")?;
            Ok(PredictionDump::load(p)?)
        })
        .collect()
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn ensemble(paths: &[PathBuf], baseline: f64, k: usize, out: Option<&Path>) -> Result<()> {
    if paths.len() < 2 {
        bail!("ensemble needs at least two prediction dumps");
    }
    if !(0.0..=100.0).contains(&baseline) {
        bail!("baseline {baseline} is not a percentage");
    }
    let dumps = align_dumps(&load_dumps(paths)?)?;
    let mut cands = Vec::with_capacity(dumps.len());
    for (p, d) in paths.iter().zip(&dumps) {
        cands.push(Candidate { name: stem(p), accuracy: d.confusion().macro_accuracy()?, predictions: d.argmaxes() });
    }
    let spec = select_ensemble(&cands, baseline / 100.0, k)?;
    for &m in &spec.members {
        println!("member {:<24} {:>5.1}", cands[m].name, 100.0 * cands[m].accuracy);
    }
    println!("mean pairwise disagreement {:.3}", spec.diversity);

    let rows = (0..dumps[0].rows.len())
        .map(|i| {
            let dists: Vec<_> = spec.members.iter().map(|&m| &dumps[m].rows[i].dist).collect();
            let r = &dumps[0].rows[i];
            Ok(DumpRow { clip_id: r.clip_id.clone(), truth: r.truth, dist: ensemble_geomean(&dists)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let combined = PredictionDump { rows };
    println!("ensemble macro accuracy {:.1}", 100.0 * combined.confusion().macro_accuracy()?);
    if let Some(out) = out {
        write_text(out, &combined.to_csv()?)?;
    }
    Ok(())
}

fn predict(checkpoint: &Path, wav: &Path) -> Result<()> {
    require_file(checkpoint, "checkpoint")?;
    require_file(wav, "audio file")?;
    let model = load_checkpoint(checkpoint)?;
    let clip = load_wav(wav)?;
    let (clip, note) = fit_clip(&clip);
    if let Some(note) = note {
        warn!("{}: {note}", wav.display());
    }
    let spec = features::extract(&clip, model.variant())?.quantized();
    let segments = features::segment(&spec, wav.display().to_string())?;
    let dist = predict_clip(&model, &segments)?;
    let top = SceneClass::new(dist.argmax()).expect("class index in range");
    println!("{}", top.label());
    for (label, p) in SCENE_LABELS.iter().zip(dist.probs()) {
        println!("  {label:<20} {p:.6}");
    }
    Ok(())
}

fn report(paths: &[PathBuf], out: &Path) -> Result<()> {
    let dumps = load_dumps(paths)?;
    let mut r = Report::new();
    for (p, d) in paths.iter().zip(&dumps) {
        r.add(stem(p), d.confusion());
    }
    let text = r.to_text()?;
    print!("{text}");
    if out.extension().is_some_and(|e| e == "csv") {
        write_text(out, &r.to_csv()?)
    } else {
        write_text(out, &text)
    }
}
