//! `tmqa`: command-line driver for the tone-mapped image quality pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use tmqa::config::{PipelineConfig, CONFIG_ENV};
use tmqa::corpus::{self, CorpusManifest, Split};
use tmqa::eval::split_protocol;
use tmqa::features::{extract_features, read_feature_csv, write_feature_csv, FeatureVector};
use tmqa::mapnet::{self, ModelSet};
use tmqa::oracle::distortion_maps;
use tmqa::svr::{grid_search, svr_train, SvrModel};
use tmqa::tonemap::{tonemap, Operator};
use tmqa::{hdrio, DistortionMapSet, MapKind};

#[derive(Parser)]
#[command(name = "tmqa", version, about = "No-reference quality scores for tone-mapped HDR images")]
struct Cli {
    /// Pipeline config (TOML or JSON). Flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    /// Master seed; overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render an HDR image to an 8-bit PNG.
    Tonemap {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        operator: Option<Operator>,
    },
    /// Write procedural HDR scenes.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
    },
    /// Tone-map every scene, label it with the oracle and write a manifest.
    BuildCorpus {
        #[arg(long)]
        hdr_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the six ground-truth distortion maps for an HDR/LDR pair.
    Oracle {
        hdr: PathBuf,
        ldr: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train distortion-map networks on a corpus.
    TrainCnn {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Map kind to train, or `all`.
        #[arg(long, default_value = "all")]
        map: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Predict the six distortion maps of a tone-mapped image.
    PredictMaps {
        image: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract feature vectors for every corpus image.
    Features {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Use predicted maps from these networks instead of oracle maps.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the synthetic quality score of every corpus image.
    Mos {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search and fit the score regressor.
    TrainSvr {
        #[command(flatten)]
        data: Dataset,
        /// Defaults to `svr.json` in the models directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the quality score of a tone-mapped image.
    Score {
        image: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Also write the predicted maps as PNG previews here.
        #[arg(long)]
        emit_maps: Option<PathBuf>,
    },
    /// Repeated random-split evaluation; writes a JSON summary.
    Evaluate {
        #[command(flatten)]
        data: Dataset,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Dataset {
    /// Feature CSV from `features`.
    #[arg(long)]
    features: PathBuf,
    /// Score CSV (`id,mos`) from `mos`.
    #[arg(long)]
    mos: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.apply_seed(s);
    }
    Ok(cfg)
}

/// Prints the effective configuration so a run can be repeated exactly.
fn echo(cfg: &PipelineConfig) -> anyhow::Result<()> {
    cfg.validate()?;
    eprintln!("seed: {}", cfg.seed);
    eprintln!("config: {}", serde_json::to_string(cfg)?);
    Ok(())
}

fn pick(flag: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    flag.clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| anyhow!("no {what} given (flag or config paths)"))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Tonemap { input, output, operator } => {
            if let Some(op) = operator {
                if *op != cfg.tonemap.operator {
                    let key = cfg.tonemap.key;
                    cfg.tonemap = tmqa::tonemap::TmoParams::for_operator(*op);
                    cfg.tonemap.key = key;
                }
            }
            echo(&cfg)?;
            let hdr = hdrio::read_hdr(input)?;
            hdrio::write_png(output, &tonemap(&hdr, &cfg.tonemap)?)?;
        }
        Command::Synth { out, count, size } => {
            echo(&cfg)?;
            let files = corpus::synth_scenes(out, *count, *size, cfg.seed)?;
            println!("wrote {} scenes to {}", files.len(), out.display());
        }
        Command::BuildCorpus { hdr_dir, out } => {
            let hdr_dir = pick(hdr_dir, &cfg.paths.hdr_dir, "HDR directory")?;
            let out = pick(out, &cfg.paths.corpus_dir, "corpus directory")?;
            echo(&cfg)?;
            let m = corpus::build_corpus(&hdr_dir, &out, &cfg.corpus)?;
            let count = |s| m.split(s).count();
            println!(
                "{} entries (train {}, val {}, test {}) in {}",
                m.entries.len(),
                count(Split::Train),
                count(Split::Val),
                count(Split::Test),
                out.display()
            );
        }
        Command::Oracle { hdr, ldr, out } => {
            echo(&cfg)?;
            let maps = distortion_maps(&hdrio::read_hdr(hdr)?, &hdrio::read_png(ldr)?, &cfg.oracle)?;
            write_maps(out, &maps, true)?;
        }
        Command::TrainCnn {
            corpus: dir,
            map,
            out,
            epochs,
            lr,
            max_steps,
        } => {
            let root = pick(dir, &cfg.paths.corpus_dir, "corpus directory")?;
            let out = pick(out, &cfg.paths.models_dir, "models directory")?;
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if let Some(r) = lr {
                cfg.train.learning_rate = *r;
            }
            if max_steps.is_some() {
                cfg.train.max_steps = *max_steps;
            }
            echo(&cfg)?;
            let kinds: Vec<MapKind> = if map == "all" {
                MapKind::ALL.to_vec()
            } else {
                vec![map.parse()?]
            };
            let manifest = CorpusManifest::load(&root)?;
            for kind in kinds {
                let patches =
                    corpus::patch_extract(&manifest, &root, Split::Train, kind, cfg.train.patch, cfg.train.stride)?;
                log::info!("{kind}: {} training patches", patches.len());
                let net = mapnet::train(&patches, kind, &cfg.train)?;
                let path = ModelSet::model_path(&out, kind);
                net.save(&path)?;
                let last = net.meta.loss_curve.last().copied().unwrap_or(f64::NAN);
                println!("{kind}: {} steps, final loss {last:.6e} -> {}", net.meta.steps, path.display());
            }
        }
        Command::PredictMaps { image, models, out } => {
            let models = pick(models, &cfg.paths.models_dir, "models directory")?;
            echo(&cfg)?;
            let set = ModelSet::load_dir(&models)?;
            let maps = mapnet::predict_image(&set, &hdrio::read_png(image)?, &cfg.tiles)?;
            write_maps(out, &maps, true)?;
        }
        Command::Features { corpus: dir, models, out } => {
            let root = pick(dir, &cfg.paths.corpus_dir, "corpus directory")?;
            echo(&cfg)?;
            let manifest = CorpusManifest::load(&root)?;
            let set = models.as_ref().map(|m| ModelSet::load_dir(m)).transpose()?;
            let mut rows = Vec::with_capacity(manifest.entries.len());
            for e in &manifest.entries {
                let ldr = hdrio::read_png(root.join(&e.ldr))?;
                let maps = match &set {
                    Some(s) => mapnet::predict_image(s, &ldr, &cfg.tiles)?,
                    None => corpus::load_maps(&root, e)?,
                };
                let fv = extract_features(&ldr, &maps, &cfg.features)
                    .with_context(|| format!("{}/{}", e.scene, e.tmo))?;
                rows.push((entry_id(e), fv));
            }
            let mut buf = Vec::new();
            write_feature_csv(&mut buf, &rows)?;
            fs::write(out, buf).with_context(|| format!("writing {}", out.display()))?;
            println!("{} feature rows -> {}", rows.len(), out.display());
        }
        Command::Mos { corpus: dir, out } => {
            let root = pick(dir, &cfg.paths.corpus_dir, "corpus directory")?;
            echo(&cfg)?;
            let manifest = CorpusManifest::load(&root)?;
            let mut text = String::from("id,mos\n");
            for e in &manifest.entries {
                let mos = corpus::synthetic_mos(&corpus::load_maps(&root, e)?);
                text.push_str(&format!("{},{mos}\n", entry_id(e)));
            }
            fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::TrainSvr { data, out } => {
            let out = match out {
                Some(o) => o.clone(),
                None => pick(&None, &cfg.paths.models_dir, "models directory")?.join("svr.json"),
            };
            echo(&cfg)?;
            let (x, y) = load_dataset(data)?;
            let grid = grid_search(&x, &y, &cfg.eval.grid, cfg.eval.folds, cfg.seed)?;
            let model = svr_train(&x, &y, &grid.best)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&out, serde_json::to_string(&model)?)?;
            println!(
                "C={} gamma={} epsilon={} (cv rmse {:.4}) -> {}",
                grid.best.c,
                grid.best.gamma,
                grid.best.epsilon,
                grid.best_rmse,
                out.display()
            );
        }
        Command::Score { image, models, emit_maps } => {
            let models = pick(models, &cfg.paths.models_dir, "models directory")?;
            echo(&cfg)?;
            let set = ModelSet::load_dir(&models)?;
            let svr_path = models.join("svr.json");
            let svr: SvrModel = serde_json::from_str(
                &fs::read_to_string(&svr_path).with_context(|| format!("reading {}", svr_path.display()))?,
            )?;
            let ldr = hdrio::read_png(image)?;
            let maps = mapnet::predict_image(&set, &ldr, &cfg.tiles)?;
            let fv = extract_features(&ldr, &maps, &cfg.features)?;
            if let Some(dir) = emit_maps {
                write_maps(dir, &maps, false)?;
            }
            println!("{}", svr.predict(fv.as_slice()));
        }
        Command::Evaluate { data, trials, out } => {
            if let Some(t) = trials {
                cfg.eval.trials = *t;
            }
            echo(&cfg)?;
            let (x, y) = load_dataset(data)?;
            let summary = split_protocol(&x, &y, &cfg.eval)?;
            eprint!("{}", summary.table());
            let json = serde_json::to_string_pretty(&summary)?;
            match out {
                Some(p) => fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}

fn entry_id(e: &corpus::ManifestEntry) -> String {
    format!("{}/{}", e.scene, e.tmo)
}

/// PNG previews always; PFM copies when `exact` is set.
fn write_maps(dir: &Path, maps: &DistortionMapSet, exact: bool) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (kind, m) in maps.iter() {
        hdrio::write_map_png(dir.join(format!("{}.png", kind.name())), m)?;
        if exact {
            hdrio::write_pfm_plane(dir.join(format!("{}.pfm", kind.name())), m)?;
        }
    }
    Ok(())
}

/// Joins feature rows with scores by id, in feature-file order.
fn load_dataset(d: &Dataset) -> anyhow::Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let feats: Vec<(String, FeatureVector)> = read_feature_csv(
        &fs::read_to_string(&d.features).with_context(|| format!("reading {}", d.features.display()))?,
    )?;
    let text = fs::read_to_string(&d.mos).with_context(|| format!("reading {}", d.mos.display()))?;
    let mut scores = std::collections::HashMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let (id, v) = line
            .split_once(',')
            .ok_or_else(|| anyhow!("{} line {}: expected id,mos", d.mos.display(), i + 1))?;
        let v: f64 = v.trim().parse().with_context(|| format!("{} line {}", d.mos.display(), i + 1))?;
        scores.insert(id.to_string(), v);
    }
    let mut x = Vec::with_capacity(feats.len());
    let mut y = Vec::with_capacity(feats.len());
    for (id, fv) in feats {
        match scores.get(&id) {
            Some(&s) => {
                x.push(fv.0.to_vec());
                y.push(s);
            }
            None => bail!("no score for feature row '{id}'"),
        }
    }
    Ok((x, y))
}
