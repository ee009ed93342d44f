//! `flowbridge` command line: data generation, training, translation,
//! evaluation, ablation and latent diagnostics.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric abort.

mod io;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowbridge::bridge::sample_prior;
use flowbridge::diagnostics::{encode_at, overlap_curve, pca_2d, DEFAULT_TAUS};
use flowbridge::domains::{corpus_path, gen_phantom_set, load_corpus_dir, save_pgm, PhantomImageDomain};
use flowbridge::experiment::{
    ablation_grid, build_data, derive_seed, phantom_poses, score_outputs, to_image_space, to_model_space,
    translate_set, DataBundle,
};
use flowbridge::metrics::{rank_methods_with, Better, FeatureExtractor, MethodScores, REALISM_METRICS, STRUCTURE_METRICS};
use flowbridge::persist::{load_checkpoint, parse_config, parse_phantom_domain, save_checkpoint, DataConfig, DataKind, RunConfig};
use flowbridge::{BridgeConfig, DomainLabel, EncodeGuidance, ModelField, ModelSpec, SampleSet, VectorFieldModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::io::{create_dir, load_set, read_points, write_image, write_points, write_rows, write_text, Loaded};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<flowbridge::Error> for Failure {
    fn from(e: flowbridge::Error) -> Self {
        use flowbridge::Error::*;
        let code = match e {
            Config(_) | ConfigLine { .. } | Label { .. } => 2,
            Numeric(_) | NonFiniteGradient { .. } | NonFiniteLoss { .. } | Integration { .. } => 4,
            _ => 3,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "flowbridge", version, about = "Conditional flow-matching bridge for unpaired domain translation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a conditional vector field and write a checkpoint plus a loss CSV.
    Train(TrainArgs),
    /// Sample from the prior under one domain label.
    Generate(GenerateArgs),
    /// Encode inputs under the source label and decode them under the target label.
    Translate(TranslateArgs),
    /// Score generated sets against a reference and rank them.
    Evaluate(EvaluateArgs),
    /// Evaluate a grid of taus and guidance weights.
    Ablate(AblateArgs),
    /// MMD between two encoded domains at several taus.
    Diagnose(DiagnoseArgs),
    /// Write a toy dataset or a phantom PGM corpus with its split manifest.
    MakeData(MakeDataArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Dataset root written by `make-data`.
    #[arg(long, conflicts_with = "toy")]
    data: Option<PathBuf>,
    /// Comma-separated point generators to train on, generated in memory.
    #[arg(long)]
    toy: Option<String>,
    /// Defaults to the checkpoint path with a `.loss.csv` extension.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct InferenceArgs {
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long = "cfg-weight", default_value_t = 8.5)]
    cfg_weight: f32,
    #[arg(long, default_value = "guided")]
    encode_guidance: String,
    /// Use the live weights instead of the EMA copy.
    #[arg(long)]
    no_ema: bool,
}

impl InferenceArgs {
    fn bridge(&self, tau: f32) -> CliResult<BridgeConfig> {
        let cfg = BridgeConfig {
            tau,
            steps: self.steps,
            guidance_weight: self.cfg_weight,
            encode_guidance: self.encode_guidance.parse::<EncodeGuidance>()?,
        };
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    domain: String,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// A directory of PGMs for image checkpoints, a CSV file otherwise.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    source_domain: String,
    #[arg(long)]
    target_domain: String,
    #[arg(long, default_value_t = 0.45)]
    tau: f32,
    /// A directory of PGMs, one PGM, or a CSV of points.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the intermediate latents under `<out>/latents`.
    #[arg(long)]
    emit_latents: bool,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    real: PathBuf,
    /// `name=path` or `path`; repeat to rank several methods.
    #[arg(long, required = true)]
    gen: Vec<String>,
    /// The untranslated inputs, paired with every generated set by order.
    #[arg(long)]
    source: PathBuf,
    /// Report prefix: writes `<out>.txt` and `<out>.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    source_domain: String,
    #[arg(long)]
    target_domain: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    real: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.45, 0.6])]
    taus: Vec<f32>,
    #[arg(long = "cfg-weights", value_delimiter = ',', default_values_t = [6.5, 7.5, 8.5, 9.5])]
    cfg_weights: Vec<f32>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    domain_a: String,
    #[arg(long)]
    in_a: PathBuf,
    #[arg(long)]
    domain_b: String,
    #[arg(long)]
    in_b: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_TAUS)]
    taus: Vec<f32>,
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Optional PCA scatter of the latents, for plotting.
    #[arg(long)]
    scatter: Option<PathBuf>,
    #[command(flatten)]
    inference: InferenceArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Points,
    #[value(alias = "phantom")]
    Phantoms,
}

#[derive(Args)]
struct MakeDataArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to two_moons,two_rings or synthetic/high,real/normal.
    #[arg(long, value_delimiter = ',')]
    domains: Option<Vec<String>>,
    /// Points per domain, or poses drawn from the grid.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 32)]
    resolution: usize,
    #[arg(long, default_value_t = 1)]
    shots: usize,
    #[arg(long, default_value_t = 0.15)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))
        }
    }
}

const MANIFEST: &str = "split.csv";

fn read_manifest(root: &Path) -> CliResult<Vec<(String, String)>> {
    let path = root.join(MANIFEST);
    let bad = |e: csv::Error| Failure::data(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(&path).map_err(bad)?;
    r.records().map(|rec| rec.map(|rec| (rec[0].to_string(), rec[1].to_string())).map_err(bad)).collect()
}

fn write_manifest(root: &Path, rows: &[(String, &str)]) -> CliResult {
    let path = root.join(MANIFEST);
    let bad = |e: csv::Error| Failure::data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(bad)?;
    w.write_record(["item", "split"]).map_err(bad)?;
    for (item, split) in rows {
        w.write_record([item.as_str(), split]).map_err(bad)?;
    }
    w.flush().map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// Training sets from a `make-data` root, in model space.
fn load_training(root: &Path, data: &DataConfig) -> CliResult<Vec<SampleSet>> {
    if !root.is_dir() {
        return Err(Failure::data(format!("data root {} does not exist", root.display())));
    }
    match data.kind {
        DataKind::Points => data.domains.iter().map(|d| read_points(&root.join(d).join("train.csv"))).collect(),
        DataKind::Phantom => {
            let train: BTreeSet<String> =
                read_manifest(root)?.into_iter().filter(|(_, s)| s == "train").map(|(p, _)| p).collect();
            let mut sets = Vec::new();
            for name in &data.domains {
                let (style, dose) = parse_phantom_domain(name)?;
                let images: Vec<_> = load_corpus_dir(root, style.name(), dose.name())?
                    .into_iter()
                    .filter(|c| train.contains(&c.pose_id))
                    .collect();
                let first = images
                    .first()
                    .ok_or_else(|| Failure::data(format!("no training images for {name} under {}", root.display())))?;
                let rows: Vec<&[f32]> = images.iter().map(|c| c.image.data()).collect();
                let set = SampleSet::from_samples(&rows, first.image.shape(), name.as_str())?;
                sets.push(to_model_space(&set));
            }
            Ok(sets)
        }
    }
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let mut cfg = read_config(a.config.as_deref())?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(toy) = &a.toy {
        cfg.data.kind = DataKind::Points;
        cfg.data.domains = toy.split(',').map(|s| s.trim().to_string()).collect();
    }
    let sets = match &a.data {
        Some(root) => {
            cfg.data.validate()?;
            load_training(root, &cfg.data)?
        }
        None => build_data(&cfg.data)?.train,
    };
    let spec = ModelSpec::new(sets[0].dim(), cfg.hidden.clone(), sets.len());
    let mut model = VectorFieldModel::new(spec, cfg.train.seed)?;
    let names = cfg.data.domains.clone();
    let out = a.out.clone();
    let outcome = flowbridge::train::train(&mut model, &sets, &cfg.train, |step, m| {
        eprintln!("checkpoint at step {step} -> {}", out.display());
        save_checkpoint(m, &names, &out)
    })?;

    let mut csv = String::from("step,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        let _ = writeln!(csv, "{},{l}", i + 1);
    }
    let loss_path = a.loss_csv.unwrap_or_else(|| a.out.with_extension("loss.csv"));
    write_text(&loss_path, &csv)?;
    println!(
        "trained {} steps over {} domains; final loss {}",
        outcome.total_steps,
        names.len(),
        outcome.losses.last().map_or("n/a".to_string(), |l| l.to_string())
    );
    Ok(())
}

fn open_model(path: &Path) -> CliResult<(VectorFieldModel, Vec<String>)> {
    let ckpt = load_checkpoint(path, None)?;
    Ok((ckpt.model, ckpt.domain_names))
}

fn label(names: &[String], name: &str) -> CliResult<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Failure::config(format!("unknown domain `{name}` (checkpoint has {})", names.join(", "))))
}

/// Image checkpoints are the ones trained on `style/dose` domains.
fn image_side(model: &VectorFieldModel, names: &[String]) -> Option<usize> {
    let side = (model.data_dim() as f64).sqrt().round() as usize;
    (side * side == model.data_dim() && names.iter().all(|n| parse_phantom_domain(n).is_ok())).then_some(side)
}

fn cmd_generate(a: GenerateArgs) -> CliResult {
    let (model, names) = open_model(&a.ckpt)?;
    let to = label(&names, &a.domain)?;
    let cfg = a.inference.bridge(0.45)?;
    let field = ModelField::new(&model, !a.inference.no_ema);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let x = sample_prior(&field, DomainLabel::Domain(to), a.n, &cfg, &mut rng)?;
    match image_side(&model, &names) {
        Some(side) => {
            let set = to_image_space(&SampleSet::new(x.reshape(vec![a.n, side, side])?, a.domain.as_str())?);
            create_dir(&a.out)?;
            for (i, row) in set.iter().enumerate() {
                write_image(&a.out.join(format!("sample_{i:04}.pgm")), &[side, side], row)?;
            }
        }
        None => write_points(&a.out, &SampleSet::new(x, a.domain.as_str())?)?,
    }
    println!("wrote {} samples of {} to {}", a.n, a.domain, a.out.display());
    Ok(())
}

fn model_space(l: &Loaded) -> SampleSet {
    if l.images {
        to_model_space(&l.set)
    } else {
        l.set.clone()
    }
}

fn output_space(l: &Loaded, set: &SampleSet) -> SampleSet {
    if l.images {
        to_image_space(set)
    } else {
        set.clone()
    }
}

fn check_dim(model: &VectorFieldModel, set: &SampleSet, path: &Path) -> CliResult {
    if set.dim() != model.data_dim() {
        return Err(Failure::data(format!(
            "{} holds samples of dim {}, the checkpoint expects {}",
            path.display(),
            set.dim(),
            model.data_dim()
        )));
    }
    Ok(())
}

fn file_name(p: &Path) -> &std::ffi::OsStr {
    p.file_name().unwrap_or(p.as_os_str())
}

fn cmd_translate(a: TranslateArgs) -> CliResult {
    let (model, names) = open_model(&a.ckpt)?;
    let from = label(&names, &a.source_domain)?;
    let to = label(&names, &a.target_domain)?;
    let cfg = a.inference.bridge(a.tau)?;
    cfg.validate()?;
    let input = load_set(&a.input)?;
    check_dim(&model, &input.set, &a.input)?;
    let field = ModelField::new(&model, !a.inference.no_ema);
    let (z, x_hat) = translate_set(&field, &model_space(&input), from, to, &cfg)?;
    let out_set = output_space(&input, &x_hat);

    create_dir(&a.out)?;
    let latent_dir = a.out.join("latents");
    if a.emit_latents {
        create_dir(&latent_dir)?;
    }
    if input.images {
        let shape = input.set.sample_shape().to_vec();
        for (i, f) in input.files.iter().enumerate() {
            write_image(&a.out.join(file_name(f)), &shape, out_set.sample(i))?;
            if a.emit_latents {
                let w = shape[1];
                let name = Path::new(file_name(f)).with_extension("csv");
                write_rows(&latent_dir.join(name), z.sample(i).chunks(w), w)?;
            }
        }
    } else {
        let name = file_name(&input.files[0]);
        write_points(&a.out.join(name), &out_set)?;
        if a.emit_latents {
            write_points(&latent_dir.join(name), &z)?;
        }
    }
    println!(
        "translated {} samples {} -> {} at tau {} ({} steps, guidance {})",
        input.set.len(),
        a.source_domain,
        a.target_domain,
        cfg.tau,
        cfg.steps,
        cfg.guidance_weight
    );
    Ok(())
}

fn structure_group(images: bool) -> Vec<(&'static str, Better)> {
    if images {
        STRUCTURE_METRICS.to_vec()
    } else {
        vec![("source_l2", Better::Lower)]
    }
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult {
    let real = load_set(&a.real)?;
    let source = load_set(&a.source)?;
    let features = FeatureExtractor::default_for_dim(real.set.dim());
    let mut scores = Vec::new();
    for entry in &a.gen {
        let (name, path) = match entry.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(entry);
                (file_name(&p).to_string_lossy().into_owned(), p)
            }
        };
        let gen = load_set(&path)?;
        let metrics = score_outputs(&gen.set, Some(&source.set), &real.set, &features)?;
        let mut s = MethodScores::new(name);
        s.metrics = metrics;
        scores.push(s);
    }
    let report = rank_methods_with(&scores, &REALISM_METRICS, &structure_group(real.images))?;
    write_text(&a.out.with_extension("txt"), &report.to_key_value())?;
    write_text(&a.out.with_extension("csv"), &report.to_csv())?;
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> CliResult {
    let (model, names) = open_model(&a.ckpt)?;
    let from = label(&names, &a.source_domain)?;
    let to = label(&names, &a.target_domain)?;
    let input = load_set(&a.input)?;
    check_dim(&model, &input.set, &a.input)?;
    let real = load_set(&a.real)?;
    let bundle = DataBundle {
        names: names.clone(),
        train: Vec::new(),
        test: Vec::new(),
        images: input.images,
        test_poses: Vec::new(),
    };
    let field = ModelField::new(&model, !a.inference.no_ema);
    let features = FeatureExtractor::default_for_dim(real.set.dim());
    let base = a.inference.bridge(a.taus.first().copied().unwrap_or(0.45))?;
    let source = model_space(&input);
    let grid = ablation_grid(&field, &bundle, &source, from, to, &real.set, &a.taus, &a.cfg_weights, &base, &features)?;
    let mut text = grid.to_csv();
    let summary = grid.trend_summary();
    if summary.is_empty() {
        text.push_str("# no trend checks: the grid needs two taus or two guidance weights\n");
    }
    for line in summary.lines() {
        let _ = writeln!(text, "# {line}");
    }
    write_text(&a.out, &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_diagnose(a: DiagnoseArgs) -> CliResult {
    flowbridge::diagnostics::check_taus(&a.taus)?;
    let (model, names) = open_model(&a.ckpt)?;
    let la = DomainLabel::Domain(label(&names, &a.domain_a)?);
    let lb = DomainLabel::Domain(label(&names, &a.domain_b)?);
    let (sa, sb) = (load_set(&a.in_a)?, load_set(&a.in_b)?);
    check_dim(&model, &sa.set, &a.in_a)?;
    check_dim(&model, &sb.set, &a.in_b)?;
    let (xa, xb) = (model_space(&sa), model_space(&sb));
    let field = ModelField::new(&model, !a.inference.no_ema);
    let cfg = a.inference.bridge(0.45)?;
    let curve = overlap_curve(&field, &xa, la, &xb, lb, &a.taus, &cfg, a.bootstrap, a.seed)?;
    write_text(&a.out, &curve.to_csv())?;
    print!("{}", curve.to_csv());

    if let Some(path) = &a.scatter {
        let mut text = String::from("tau,domain,pc1,pc2\n");
        for &tau in &a.taus {
            let za = encode_at(&field, &xa, la, tau, &cfg)?;
            let zb = encode_at(&field, &xb, lb, tau, &cfg)?;
            for (points, name) in pca_2d(&[&za, &zb])?.iter().zip([&a.domain_a, &a.domain_b]) {
                for p in points {
                    let _ = writeln!(text, "{tau},{name},{},{}", p[0], p[1]);
                }
            }
        }
        write_text(path, &text)?;
    }
    Ok(())
}

fn cmd_make_data(a: MakeDataArgs) -> CliResult {
    let kind = match a.kind {
        Kind::Points => DataKind::Points,
        Kind::Phantoms => DataKind::Phantom,
    };
    let defaults = DataConfig::default();
    let domains = a.domains.clone().unwrap_or_else(|| match kind {
        DataKind::Points => defaults.domains.clone(),
        DataKind::Phantom => vec!["synthetic/high".into(), "real/normal".into()],
    });
    let cfg = DataConfig {
        kind,
        domains,
        n: a.n.unwrap_or(match kind {
            DataKind::Points => defaults.n,
            DataKind::Phantom => 729,
        }),
        noise: a.noise,
        seed: a.seed,
        resolution: a.resolution,
        shots: a.shots,
        test_fraction: a.test_fraction,
    };
    cfg.validate()?;
    create_dir(&a.out)?;
    let mut manifest: Vec<(String, &str)> = Vec::new();
    match kind {
        DataKind::Points => {
            let bundle = build_data(&cfg)?;
            for (i, name) in cfg.domains.iter().enumerate() {
                let dir = a.out.join(name);
                create_dir(&dir)?;
                write_points(&dir.join("train.csv"), &bundle.train[i])?;
                write_points(&dir.join("test.csv"), &bundle.test[i])?;
                manifest.push((format!("{name}/train.csv"), "train"));
                manifest.push((format!("{name}/test.csv"), "test"));
            }
        }
        DataKind::Phantom => {
            let (train, test) = phantom_poses(cfg.n, cfg.test_fraction, cfg.seed)?;
            let mut poses: Vec<_> = train.iter().map(|p| (*p, "train")).chain(test.iter().map(|p| (*p, "test"))).collect();
            poses.sort();
            let all: Vec<_> = poses.iter().map(|(p, _)| *p).collect();
            for name in &cfg.domains {
                let (style, dose) = parse_phantom_domain(name)?;
                let domain = PhantomImageDomain { resolution: cfg.resolution, style, dose };
                create_dir(&a.out.join(style.name()).join(dose.name()))?;
                // same noise seed as the in-memory pipeline
                for r in gen_phantom_set(&domain, &all, cfg.shots as u64, derive_seed(cfg.seed, &[3]))? {
                    save_pgm(&r.image, &corpus_path(&a.out, style.name(), dose.name(), &r.pose.to_string(), r.shot))?;
                }
            }
            manifest = poses.into_iter().map(|(p, s)| (p.to_string(), s)).collect();
        }
    }
    write_manifest(&a.out, &manifest)?;
    println!("wrote {} domains to {}", cfg.domains.len(), a.out.display());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Translate(a) => cmd_translate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::MakeData(a) => cmd_make_data(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
