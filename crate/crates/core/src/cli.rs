//! The `cgvqm` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid data or failed check,
//! 3 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;

use crate::calibrate::{calibrate, CalibrationConfig, PatchPooling, RatedSample};
use crate::error::Error;
use crate::eval::{self, benchmark, format_reports, BootstrapConfig, Rating};
use crate::io::export::export_error_map;
use crate::io::frames::{read_frames, DEFAULT_FRAME_PATTERN};
use crate::io::manifest::{DatasetManifest, Split};
use crate::io::profile::{profile_to_json, read_profile};
use crate::io::scores::read_scores;
use crate::io::FeatureCache;
use crate::metric::{analyze, AnalyzeOptions, PatchSize, WeightProfile, DEFAULT_ALPHA};
use crate::model::{self, golden_parity, GoldenSet, NetworkModel, TapSelection};
use crate::tensor::{self, BatchNorm, ConvSpec, VideoTensor};

#[derive(Debug, Parser)]
#[command(name = "cgvqm", version, about = "Full-reference video quality metric on 3D-CNN features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score a distorted video against its reference.
    Score(ScoreArgs),
    /// Write the per-pixel error map of a video pair.
    ErrorMap(ErrorMapArgs),
    /// Cache pooled feature differences for every pair in a manifest.
    ExtractFeatures(ExtractArgs),
    /// Learn channel weights from cached features and ratings.
    Calibrate(CalibrateArgs),
    /// Benchmark metric scores against ratings.
    Evaluate(EvaluateArgs),
    /// Check inference parity against golden activations and run kernel oracles.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Variant {
    Cgvqm5,
    Cgvqm2,
}

impl Variant {
    fn taps(self) -> TapSelection {
        match self {
            Variant::Cgvqm5 => TapSelection::cgvqm5(),
            Variant::Cgvqm2 => TapSelection::cgvqm2(),
        }
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Network weights (CGWT). Defaults to the built-in synthetic checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    /// Calibrated weight profile (JSON). Defaults to uniform weights.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Feature taps for uniform weights; ignored with --weights.
    #[arg(long, value_enum, default_value = "cgvqm5")]
    taps: Variant,
    /// Quality ceiling; overrides the profile's value.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Args)]
struct PairArgs {
    /// Reference frame directory.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Distorted frame directory.
    #[arg(long)]
    dist: PathBuf,
    #[arg(long, default_value = DEFAULT_FRAME_PATTERN)]
    frame_pattern: String,
    /// Patch size as F,H,W.
    #[arg(long, default_value_t = PatchSize::default())]
    patch_size: PatchSize,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    profile: ProfileArgs,
    #[command(flatten)]
    pair: PairArgs,
    /// Write the JSON result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ErrorMapArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    profile: ProfileArgs,
    #[command(flatten)]
    pair: PairArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Value shown as white; defaults to the 99.9th percentile.
    #[arg(long)]
    vmax: Option<f32>,
    /// Display scaling `max(0, gain * e + offset)` applied before export.
    #[arg(long, default_value_t = 1.0)]
    display_gain: f32,
    #[arg(long, default_value_t = 0.0)]
    display_offset: f32,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "cgvqm5")]
    taps: Variant,
    #[arg(long, default_value = DEFAULT_FRAME_PATTERN)]
    frame_pattern: String,
    #[arg(long, default_value_t = PatchSize::default())]
    patch_size: PatchSize,
    /// Feature cache to write (CGTV).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Pooling {
    Min,
    Mean,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Feature cache written by extract-features.
    #[arg(long)]
    cache: PathBuf,
    /// Weight profile to write (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV; defaults to the profile path with a `.history.csv` extension.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-6)]
    lr: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Half-width of the seeded perturbation of the initial weights.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, value_enum, default_value = "min")]
    pooling: Pooling,
    #[arg(long, default_value = "calibrated")]
    label: String,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Score tables (CSV: video_id, metric_name, score).
    #[arg(long, required = true, num_args = 1..)]
    scores: Vec<PathBuf>,
    /// Bootstrap iterations.
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the reports as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Golden activations (CGTV).
    #[arg(long)]
    golden: PathBuf,
}

/// Runs the tool on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Score(a) => score(a),
        Command::ErrorMap(a) => error_map(a),
        Command::ExtractFeatures(a) => extract_features(a),
        Command::Calibrate(a) => run_calibration(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Selftest(a) => selftest(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Numeric(_)) => 3,
        _ => 2,
    }
}

fn load_network(args: &ModelArgs) -> anyhow::Result<NetworkModel> {
    match &args.model {
        Some(path) => model::load_model_file(path).with_context(|| format!("loading {}", path.display())),
        None => {
            warn!("no --model given; using the built-in synthetic checkpoint");
            Ok(model::synthetic::model())
        }
    }
}

fn load_profile(args: &ProfileArgs) -> anyhow::Result<WeightProfile> {
    let profile = match &args.weights {
        Some(path) => read_profile(path).with_context(|| format!("reading {}", path.display()))?,
        None => WeightProfile::uniform(args.taps.taps(), DEFAULT_ALPHA),
    };
    Ok(match args.alpha {
        Some(a) if !a.is_finite() => bail!(Error::invalid(format!("alpha {a} is not finite"))),
        Some(a) => profile.with_alpha(a),
        None => profile,
    })
}

fn load_pair(args: &PairArgs) -> anyhow::Result<(VideoTensor, VideoTensor)> {
    let r = read_frames(&args.reference, &args.frame_pattern)
        .with_context(|| format!("reading {}", args.reference.display()))?;
    let d = read_frames(&args.dist, &args.frame_pattern).with_context(|| format!("reading {}", args.dist.display()))?;
    Ok((r, d))
}

fn write_output(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct PatchOut {
    origin: [usize; 3],
    extent: [usize; 3],
    quality: f64,
}

#[derive(Serialize)]
struct ScoreOut {
    label: String,
    alpha: f64,
    quality: f64,
    per_patch: Vec<f64>,
    patches: Vec<PatchOut>,
}

fn score(a: ScoreArgs) -> anyhow::Result<i32> {
    let network = load_network(&a.model)?;
    let profile = load_profile(&a.profile)?;
    let (r, d) = load_pair(&a.pair)?;
    let opts = AnalyzeOptions {
        patch: a.pair.patch_size,
        error_map: false,
    };
    let analysis = analyze(&r, &d, &network, &profile, opts)?;
    let patches = analysis
        .windows
        .iter()
        .zip(&analysis.per_patch)
        .map(|(w, &quality)| PatchOut {
            origin: w.origin.into(),
            extent: w.extent.into(),
            quality,
        })
        .collect();
    let out = ScoreOut {
        label: profile.label().to_string(),
        alpha: profile.alpha(),
        quality: analysis.quality,
        per_patch: analysis.per_patch.clone(),
        patches,
    };
    let mut text = serde_json::to_string_pretty(&out)?;
    text.push('\n');
    write_output(a.out.as_deref(), &text)?;
    Ok(0)
}

fn error_map(a: ErrorMapArgs) -> anyhow::Result<i32> {
    let network = load_network(&a.model)?;
    let profile = load_profile(&a.profile)?;
    let (r, d) = load_pair(&a.pair)?;
    let opts = AnalyzeOptions {
        patch: a.pair.patch_size,
        error_map: true,
    };
    let analysis = analyze(&r, &d, &network, &profile, opts)?;
    let mut map = analysis.error_map.context("error map was not computed")?;
    if a.display_gain != 1.0 || a.display_offset != 0.0 {
        map = map.rescaled(a.display_gain, a.display_offset)?;
    }
    let vmax = export_error_map(&map, &a.out, a.vmax).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}", serde_json::json!({ "quality": analysis.quality, "vmax": vmax }));
    Ok(0)
}

fn extract_features(a: ExtractArgs) -> anyhow::Result<i32> {
    let manifest = DatasetManifest::load(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    manifest.check_paths()?;
    let network = load_network(&a.model)?;
    let profile = WeightProfile::uniform(a.taps.taps(), DEFAULT_ALPHA);
    let mut cache = FeatureCache::new(a.taps.taps());
    let opts = AnalyzeOptions {
        patch: a.patch_size,
        error_map: false,
    };
    for (row, rec) in manifest.records().iter().enumerate() {
        let ctx = || format!("manifest row {row} ({}/{})", rec.dataset_id, rec.video_id);
        let r = read_frames(manifest.resolve(&rec.ref_path), &a.frame_pattern).with_context(ctx)?;
        let d = read_frames(manifest.resolve(&rec.dist_path), &a.frame_pattern).with_context(ctx)?;
        let analysis = analyze(&r, &d, &network, &profile, opts).with_context(ctx)?;
        cache.insert(&rec.dataset_id, &rec.video_id, analysis.pooled)?;
    }
    cache.write(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(0)
}

fn run_calibration(a: CalibrateArgs) -> anyhow::Result<i32> {
    let manifest = DatasetManifest::load(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let cache = FeatureCache::read(&a.cache).with_context(|| format!("reading {}", a.cache.display()))?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (row, rec) in manifest.records().iter().enumerate() {
        let patches = cache.get(&rec.dataset_id, &rec.video_id).ok_or_else(|| {
            Error::invalid(format!(
                "manifest row {row} ({}/{}) is missing from the feature cache",
                rec.dataset_id, rec.video_id
            ))
        })?;
        let sample = RatedSample::new(&rec.video_id, &rec.dataset_id, patches, rec.dmos)?;
        match rec.split {
            Split::Train => train.push(sample),
            Split::Test => test.push(sample),
        }
    }
    if test.is_empty() {
        bail!(Error::degenerate("manifest has no test split"));
    }
    let cfg = CalibrationConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        alpha: a.alpha,
        seed: a.seed,
        init_jitter: a.jitter,
        pooling: match a.pooling {
            Pooling::Min => PatchPooling::Min,
            Pooling::Mean => PatchPooling::Mean,
        },
        ..CalibrationConfig::default()
    };
    let result = calibrate(&train, &test, &cfg)?;
    let profile = WeightProfile::new(cache.taps().clone(), result.omega_best, a.alpha, &a.label)?;
    fs::write(&a.out, profile_to_json(&profile)?).with_context(|| format!("writing {}", a.out.display()))?;

    let history = a.history.unwrap_or_else(|| a.out.with_extension("history.csv"));
    let mut w = csv::Writer::from_path(&history).with_context(|| format!("writing {}", history.display()))?;
    w.write_record(["epoch", "train_loss", "test_loss"])?;
    for e in &result.history {
        w.write_record([e.epoch.to_string(), e.train_loss.to_string(), e.test_loss.to_string()])?;
    }
    w.flush()?;
    Ok(0)
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<i32> {
    let manifest = DatasetManifest::load(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let ratings: Vec<Rating> = manifest
        .records()
        .iter()
        .map(|r| Rating {
            dataset_id: r.dataset_id.clone(),
            video_id: r.video_id.clone(),
            dmos: r.dmos,
        })
        .collect();
    let mut scores = Vec::new();
    for path in &a.scores {
        scores.extend(read_scores(path).with_context(|| format!("reading {}", path.display()))?);
    }
    let cfg = BootstrapConfig {
        iters: a.iters,
        seed: a.seed,
        fit: true,
    };
    let reports = benchmark(&ratings, &scores, &cfg)?;
    print!("{}", format_reports(&reports));
    if let Some(out) = &a.out {
        let mut text = serde_json::to_string_pretty(&reports)?;
        text.push('\n');
        fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(0)
}

fn selftest(a: SelftestArgs) -> anyhow::Result<i32> {
    let network = load_network(&a.model)?;
    let golden = GoldenSet::read(&a.golden).with_context(|| format!("reading {}", a.golden.display()))?;
    let mut ok = true;
    for tap in golden_parity(&network, &golden)? {
        let pass = tap.passes();
        ok &= pass;
        println!(
            "{} {:<11} {:?} max-abs {:.3e} mean-abs {:.3e}",
            if pass { "PASS" } else { "FAIL" },
            tap.name,
            tap.shape,
            tap.max_abs,
            tap.mean_abs
        );
    }
    for (name, pass) in oracle_checks()? {
        ok &= pass;
        println!("{} {name}", if pass { "PASS" } else { "FAIL" });
    }
    Ok(if ok { 0 } else { 2 })
}

/// Direct-summation convolution used as an oracle.
fn naive_conv(x: &VideoTensor, spec: &ConvSpec) -> Vec<f64> {
    let [kf, kh, kw] = spec.kernel();
    let [sf, sh, sw] = spec.stride();
    let [pf, ph, pw] = spec.padding();
    let (of, oh, ow) = spec.output_extent(x.frames(), x.height(), x.width()).unwrap_or((0, 0, 0));
    let mut out = Vec::with_capacity(spec.out_channels() * of * oh * ow);
    for o in 0..spec.out_channels() {
        for f in 0..of {
            for y in 0..oh {
                for z in 0..ow {
                    let mut acc = f64::from(spec.bias()[o]);
                    for i in 0..spec.in_channels() {
                        for a in 0..kf {
                            for b in 0..kh {
                                for c in 0..kw {
                                    let (fi, yi, zi) = (
                                        (f * sf + a) as isize - pf as isize,
                                        (y * sh + b) as isize - ph as isize,
                                        (z * sw + c) as isize - pw as isize,
                                    );
                                    if fi < 0
                                        || yi < 0
                                        || zi < 0
                                        || fi >= x.frames() as isize
                                        || yi >= x.height() as isize
                                        || zi >= x.width() as isize
                                    {
                                        continue;
                                    }
                                    let w = spec.weights()[(((o * spec.in_channels() + i) * kf + a) * kh + b) * kw + c];
                                    acc += f64::from(w) * f64::from(x.get(i, fi as usize, yi as usize, zi as usize));
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn oracle_checks() -> anyhow::Result<Vec<(&'static str, bool)>> {
    let x = VideoTensor::from_fn([2, 5, 6, 7], |c, f, h, w| ((c * 31 + f * 7 + h * 3 + w) as f32 * 0.37).sin());
    let weights: Vec<f32> = (0..3 * 2 * 27).map(|i| ((i * 13 % 17) as f32 - 8.0) / 10.0).collect();
    let spec = ConvSpec::new(2, 3, [3, 3, 3], [1, 2, 2], [1, 1, 1], weights, vec![0.1, -0.2, 0.3])?;
    let got = tensor::conv3d(&x, &spec)?;
    let want = naive_conv(&x, &spec);
    let conv_ok = got.data().iter().zip(&want).all(|(g, w)| (f64::from(*g) - w).abs() < 1e-4);

    let bn = BatchNorm {
        gamma: vec![1.5, 0.5, 2.0],
        beta: vec![0.1, 0.0, -0.1],
        running_mean: vec![0.2, -0.3, 0.0],
        running_var: vec![0.9, 1.1, 0.5],
        eps: model::BATCHNORM_EPS,
    };
    let folded = tensor::fold_batchnorm(&spec, &bn)?;
    let fused = tensor::conv3d(&x, &folded)?;
    let per_channel = got.locations();
    let bn_ok = fused.data().iter().enumerate().all(|(i, v)| {
        let c = i / per_channel;
        let raw = f64::from(got.data()[i]);
        let expect = (raw - f64::from(bn.running_mean[c])) / (f64::from(bn.running_var[c]) + f64::from(bn.eps)).sqrt()
            * f64::from(bn.gamma[c])
            + f64::from(bn.beta[c]);
        (f64::from(*v) - expect).abs() < 1e-4
    });

    let n = tensor::channel_unit_normalize(&got, tensor::NORMALIZE_EPS)?;
    let again = tensor::channel_unit_normalize(&n, tensor::NORMALIZE_EPS)?;
    let norm_ok = n.data().iter().zip(again.data()).all(|(a, b)| (a - b).abs() < 1e-6);

    let stats_ok = (eval::plcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0])? - 0.8).abs() < 1e-12
        && (eval::krcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0])? - 4.0 / 6.0).abs() < 1e-12;

    Ok(vec![
        ("conv3d matches direct summation", conv_ok),
        ("batch-norm folding matches two-pass evaluation", bn_ok),
        ("channel normalisation is idempotent", norm_ok),
        ("correlation statistics match closed forms", stats_ok),
    ])
}
