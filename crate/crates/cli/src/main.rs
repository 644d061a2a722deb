use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use kftser_core::dataset::{build_manifest, generate_synthetic_dataset, split_manifest, SynthSpec};
use kftser_core::kalman::tune_qr_ratio;
use kftser_core::mlp::{frame_accuracy, load_checkpoint, save_checkpoint};
use kftser_core::pipeline::{
    check_class_order, evaluate_indices, extract_file, feature_path, load_features, stack_frames, train_model,
    trajectory_for_file, FeatureFormat,
};
use kftser_core::{EmotionClass, Error, FusionRule, Manifest, PipelineConfig, Result, NUM_CLASSES};

#[derive(Parser, Debug)]
#[command(name = "kftser", version, about = "Speech emotion recognition with Kalman-smoothed frame posteriors")]
struct Cli {
    /// Flat JSON pipeline configuration; flags given here take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for splitting, initialization, shuffling and synthesis.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan a RAVDESS-style tree and write a split manifest.
    Manifest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Extract 41-dim frame features for every manifest record.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory, one file per record index.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Bin)]
        format: Format,
    },
    /// Train the frame classifier on the training split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Training curve CSV; defaults to `<out>.trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate filter + fusion on a split and write reports.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        #[arg(long)]
        fusion: Option<FusionRule>,
    },
    /// Write raw and filtered posteriors of one audio file as CSV.
    Trajectory {
        #[arg(long)]
        audio: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search the Q/R ratio by utterance accuracy.
    Tune {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated Q/R ratios.
        #[arg(long, default_value = "1e-4,1e-3,1e-2,1e-1,1,10")]
        grid: String,
        #[arg(long, value_enum, default_value_t = Split::Train)]
        split: Split,
        #[arg(long)]
        fusion: Option<FusionRule>,
        /// Result JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a small synthetic dataset with RAVDESS-style names.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        per_class: usize,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, default_value_t = 22_050)]
        sample_rate: u32,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory written by `extract`.
    #[arg(long)]
    features: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Bin,
    Csv,
}

impl From<Format> for FeatureFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Bin => FeatureFormat::Binary,
            Format::Csv => FeatureFormat::Csv,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Train,
    Test,
}

impl Split {
    fn indices(self, m: &Manifest) -> &[usize] {
        match self {
            Split::Train => &m.train_indices,
            Split::Test => &m.test_indices,
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| match e {
            Error::Json(j) => Error::Argument(format!("config {}: {j}", path.display())),
            other => other,
        })?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_with(path, |w| writeln!(w, "{text}"))
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Argument(format!("grid value `{s}` is not a number")))
        })
        .collect()
}

fn cmd_manifest(cfg: &PipelineConfig, root: &Path, out: &Path, test_fraction: f64) -> Result<()> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Argument(format!("--test-fraction must lie in (0, 1), got {test_fraction}")));
    }
    let manifest = split_manifest(&build_manifest(root)?, test_fraction, cfg.seed)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    manifest.save(out)?;
    println!(
        "{} records ({}/{})",
        manifest.records.len(),
        manifest.train_indices.len(),
        manifest.test_indices.len()
    );
    Ok(())
}

fn cmd_extract(cfg: &PipelineConfig, manifest_path: &Path, out: &Path, format: FeatureFormat) -> Result<()> {
    let manifest = Manifest::load(manifest_path)?;
    let extractor = cfg.feature_extractor()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let results: Vec<Result<(PathBuf, usize)>> = manifest
        .records
        .par_iter()
        .enumerate()
        .map(|(i, record)| {
            if !record.file_path.is_file() {
                return Err(Error::io(
                    &record.file_path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "audio file not found"),
                ));
            }
            let features = extract_file(&record.file_path, &extractor, cfg)?;
            let path = feature_path(out, i, format);
            features.save(&path)?;
            Ok((path, features.num_frames()))
        })
        .collect();

    if let Some(pos) = results.iter().position(Result::is_err) {
        for (path, _) in results.iter().flatten() {
            let _ = fs::remove_file(path);
        }
        return Err(results.into_iter().nth(pos).unwrap().unwrap_err());
    }

    let mut frames = [0usize; NUM_CLASSES];
    let mut files = [0usize; NUM_CLASSES];
    for (record, (_, n)) in manifest.records.iter().zip(results.iter().flatten()) {
        frames[record.emotion.index()] += n;
        files[record.emotion.index()] += 1;
    }
    println!("{} feature files in {}", manifest.records.len(), out.display());
    for class in EmotionClass::ALL {
        let c = class.index();
        println!("{:<6} {:>5} files {:>8} frames", class.name(), files[c], frames[c]);
    }
    Ok(())
}

fn cmd_train(
    cfg: &PipelineConfig,
    data: &DataArgs,
    out: &Path,
    trace_path: Option<&Path>,
) -> Result<()> {
    let manifest = Manifest::load(&data.manifest)?;
    if manifest.train_indices.is_empty() {
        return Err(Error::EmptyDataset("manifest has no training split".into()));
    }
    let train_set = load_features(&manifest, &manifest.train_indices, &data.features)?;
    let (model, trace) = train_model(&train_set, cfg)?;
    let (raw, labels) = stack_frames(&train_set)?;
    let accuracy = frame_accuracy(&model, raw.view(), &labels)?;

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    save_checkpoint(&model, out)?;
    let trace_path = trace_path.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".trace.csv");
        PathBuf::from(p)
    });
    write_with(&trace_path, |w| trace.write_csv(w))?;

    if let Some(loss) = trace.loss.last() {
        println!("epochs {} final loss {loss:.6}", trace.epochs());
    } else {
        println!("epochs 0 (initialized model only)");
    }
    println!("train frame accuracy {accuracy:.4} over {} frames", labels.len());
    Ok(())
}

fn cmd_evaluate(
    cfg: &PipelineConfig,
    data: &DataArgs,
    checkpoint: &Path,
    out: &Path,
    split: Split,
) -> Result<()> {
    let manifest = Manifest::load(&data.manifest)?;
    let model = load_checkpoint(checkpoint)?;
    let ev = evaluate_indices(&model, &manifest, split.indices(&manifest), &data.features, cfg)?;

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("report.json"), &ev.utterance_report)?;
    write_json(&out.join("frame_report.json"), &ev.frame_report)?;
    write_json(&out.join("gain.json"), &ev.gain)?;
    write_with(&out.join("confusion.csv"), |w| ev.utterance_report.confusion.write_csv(w))?;

    print!("{}", ev.utterance_report.to_table());
    println!(
        "frame accuracy {:.4}, filtered frame accuracy {:.4}, utterance accuracy {:.4}, gain {:+.1} pp",
        ev.gain.frame_level_accuracy,
        ev.filtered_frame_accuracy,
        ev.gain.utterance_level_accuracy,
        ev.gain.gain_percentage_points()
    );
    Ok(())
}

fn cmd_trajectory(cfg: &PipelineConfig, audio: &Path, checkpoint: &Path, out: &Path) -> Result<()> {
    let model = load_checkpoint(checkpoint)?;
    let traj = trajectory_for_file(audio, &model, cfg)?;
    write_with(out, |w| traj.write_csv(w))?;
    println!("{} frames written to {}", traj.raw.len(), out.display());
    Ok(())
}

fn cmd_tune(
    cfg: &PipelineConfig,
    data: &DataArgs,
    checkpoint: &Path,
    grid: &[f64],
    split: Split,
    out: &Path,
) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Argument("--grid is empty".into()));
    }
    let manifest = Manifest::load(&data.manifest)?;
    let model = load_checkpoint(checkpoint)?;
    check_class_order(&model)?;
    let indices = split.indices(&manifest);
    if indices.is_empty() {
        return Err(Error::EmptyDataset("tuning split is empty".into()));
    }
    let data = load_features(&manifest, indices, &data.features)?;
    let trajectories = data
        .iter()
        .map(|(f, _)| model.predict_frames(f))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = data.iter().map(|(_, c)| c.index()).collect();
    let result = tune_qr_ratio(&trajectories, &labels, grid, &cfg.kalman_config()?, cfg.fusion)?;
    write_json(out, &result)?;
    for (r, a) in result.ratios.iter().zip(&result.accuracies) {
        println!("q/r {r:<10e} utterance accuracy {a:.4}");
    }
    println!("best q/r {:e} (accuracy {:.4})", result.best_ratio, result.best_accuracy);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Manifest { ref root, ref out, test_fraction } => cmd_manifest(&cfg, root, out, test_fraction),
        Command::Extract { ref manifest, ref out, format } => cmd_extract(&cfg, manifest, out, format.into()),
        Command::Train { ref data, ref out, ref trace, epochs } => {
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            cfg.validate()?;
            cmd_train(&cfg, data, out, trace.as_deref())
        }
        Command::Evaluate { ref data, ref checkpoint, ref out, split, fusion } => {
            if let Some(f) = fusion {
                cfg.fusion = f;
            }
            cmd_evaluate(&cfg, data, checkpoint, out, split)
        }
        Command::Trajectory { ref audio, ref checkpoint, ref out } => cmd_trajectory(&cfg, audio, checkpoint, out),
        Command::Tune { ref data, ref checkpoint, ref grid, split, fusion, ref out } => {
            if let Some(f) = fusion {
                cfg.fusion = f;
            }
            cmd_tune(&cfg, data, checkpoint, &parse_grid(grid)?, split, out)
        }
        Command::Synth { ref out, per_class, duration, sample_rate, test_fraction } => {
            let spec = SynthSpec {
                per_class,
                sample_rate,
                duration_secs: duration,
                test_fraction,
            };
            let m = generate_synthetic_dataset(&spec, out, cfg.seed)?;
            println!(
                "{} files in {} ({}/{} train/test), manifest {}",
                m.records.len(),
                out.display(),
                m.train_indices.len(),
                m.test_indices.len(),
                out.join("manifest.json").display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KFTSER_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
