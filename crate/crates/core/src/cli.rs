//! File formats and the `fsn` command-line runs.
//!
//! Embedding files are UTF-8 CSV with a `label,dim_0,...,dim_{m-1}` header
//! and one item per row. Exit codes: 0 success, 1 usage or configuration,
//! 2 data, 3 numeric failure.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, cumulative_energy, mean_center_by_cluster, pairwise_grassmannian_matrix};
use crate::encoder::{self, EncoderParams, Model, TrainConfig, WeightNetParams};
use crate::episodes::{self, EpisodeShape, EvalReport, EvalSettings, LabeledEmbeddingDataset};
use crate::error::{FsnError, Result};
use crate::geometry::EmbeddingVector;
use crate::labelstats::{self, Fixture, JointLabelCounts, MarginalConcentrationTable};
use crate::representations::{HeadConfig, HeadKind};
use crate::synthetic::{self, CurveDatasetSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Maps an error onto the documented exit codes.
pub fn exit_code(err: &FsnError) -> i32 {
    match err {
        FsnError::Config(_) | FsnError::Json(_) => EXIT_USAGE,
        FsnError::NonFiniteTensor(_) | FsnError::DegenerateSimplex | FsnError::ZeroEnergy => EXIT_NUMERIC,
        FsnError::Evaluation { source, .. } => exit_code(source),
        _ => EXIT_DATA,
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> FsnError {
    FsnError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses the embedding CSV format.
pub fn read_embeddings<R: Read>(input: R) -> Result<LabeledEmbeddingDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.is_empty() || header.len() < 2 || &header[0] != "label" {
        return Err(parse_err(1, "header must be label,dim_0,...,dim_{m-1}"));
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("dim_{j}") {
            return Err(parse_err(1, format!("expected column 'dim_{j}', found '{name}'")));
        }
    }
    let dim = header.len() - 1;
    let mut items = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(items.len() + 2, |p| p.line() as usize);
        if record.len() != dim + 1 {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", dim + 1, record.len()),
            ));
        }
        let coords = record
            .iter()
            .skip(1)
            .map(|cell| {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(line, format!("non-numeric value '{cell}'")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(line, format!("non-finite value '{cell}'")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        items.push((EmbeddingVector::new(coords)?, record[0].to_string()));
    }
    if items.is_empty() {
        return Err(parse_err(1, "file has no data rows"));
    }
    LabeledEmbeddingDataset::new(items)
}

pub fn ingest_embeddings(path: &Path) -> Result<LabeledEmbeddingDataset> {
    read_embeddings(BufReader::new(File::open(path)?))
}

pub fn write_embeddings<W: Write>(out: W, items: &[(EmbeddingVector, String)]) -> Result<()> {
    let io_err = |e: csv::Error| FsnError::Io(io::Error::other(e));
    let mut w = csv::Writer::from_writer(out);
    let dim = items.first().map_or(0, |(v, _)| v.dim());
    let mut header = vec!["label".to_string()];
    header.extend((0..dim).map(|j| format!("dim_{j}")));
    w.write_record(&header).map_err(io_err)?;
    for (v, label) in items {
        let mut row = vec![label.clone()];
        row.extend(v.coords().iter().map(|c| c.to_string()));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Optional class restriction and named class splits.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    #[serde(default)]
    pub splits: BTreeMap<String, Vec<String>>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        manifest.check_disjoint()?;
        Ok(manifest)
    }

    /// Classes may belong to at most one split.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for (split, classes) in &self.splits {
            for c in classes {
                if let Some(prev) = owner.insert(c, split) {
                    return Err(FsnError::Config(format!(
                        "class '{c}' appears in splits '{prev}' and '{split}'"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, data: &LabeledEmbeddingDataset, split: Option<&str>) -> Result<LabeledEmbeddingDataset> {
        let mut data = match &self.classes {
            Some(classes) => data.restrict(classes)?,
            None => data.clone(),
        };
        if let Some(split) = split {
            let classes = self
                .splits
                .get(split)
                .ok_or_else(|| FsnError::Config(format!("manifest has no split '{split}'")))?;
            data = data.restrict(classes)?;
        }
        Ok(data)
    }
}

fn load_dataset(input: &Path, manifest: Option<&Path>, split: Option<&str>) -> Result<LabeledEmbeddingDataset> {
    let data = ingest_embeddings(input)?;
    match manifest {
        Some(path) => Manifest::load(path)?.apply(&data, split),
        None if split.is_some() => Err(FsnError::Config("--split requires --manifest".into())),
        None => Ok(data),
    }
}

/// Hyperparameter ranges of the reference sweep. Values outside them are
/// accepted with a warning.
pub fn hyperparameter_warnings(head: &HeadConfig, lr: Option<f64>, width: Option<usize>, blocks: Option<usize>) -> Vec<String> {
    let mut w = Vec::new();
    if let Some(lr) = lr {
        if !(1e-6..=1e-1).contains(&lr) {
            w.push(format!("learning rate {lr} outside the swept range [1e-6, 1e-1]"));
        }
    }
    match head.kind {
        HeadKind::Subspace if !(1..=4).contains(&head.subspace_dim) => {
            w.push(format!("subspace dimension {} outside the swept range 1..=4", head.subspace_dim));
        }
        HeadKind::Fsn | HeadKind::FsnLearned if ![1, 2, 7, 8].contains(&head.simplex_dim) => {
            w.push(format!("simplex dimension {} outside the swept set {{1, 2, 7, 8}}", head.simplex_dim));
        }
        _ => {}
    }
    if head.kind == HeadKind::FsnLearned {
        if let Some(width) = width {
            if !(256..=1024).contains(&width) {
                w.push(format!("width {width} outside the swept range 256..=1024"));
            }
        }
        if let Some(blocks) = blocks {
            if !(1..=5).contains(&blocks) {
                w.push(format!("blocks {blocks} outside the swept range 1..=5"));
            }
        }
    }
    w
}

#[derive(Debug, Parser)]
#[command(name = "fsn", version, about = "Few-shot classification with fuzzy simplicial complexes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Episodic evaluation of a head over an embedding file.
    Eval(EvalArgs),
    /// Episodic training of the encoder.
    Train(TrainArgs),
    /// Mutual information between two labelings.
    Mi(MiArgs),
    /// Cumulative singular-value energy curve.
    Energy(EnergyArgs),
    /// Pairwise Grassmannian distances between per-class PCA subspaces.
    Grassmann(GrassmannArgs),
    /// Subtract each class mean from its members.
    Center(CenterArgs),
    /// Write a synthetic curve dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct HeadArgs {
    #[arg(long, default_value = "fsn")]
    pub head: String,
    /// Simplex dimension k.
    #[arg(long = "simplex-dim", visible_alias = "k", default_value_t = 8)]
    pub simplex_dim: usize,
    /// Subspace dimension d (PCA components).
    #[arg(long = "subspace-dim", visible_alias = "d", default_value_t = 2)]
    pub subspace_dim: usize,
    /// Regularizer in the inverse-volume membership.
    #[arg(long, default_value_t = crate::representations::DEFAULT_VOLUME_EPSILON)]
    pub eps: f64,
}

impl HeadArgs {
    fn config(&self) -> Result<HeadConfig> {
        Ok(HeadConfig {
            kind: self.head.parse()?,
            simplex_dim: self.simplex_dim,
            subspace_dim: self.subspace_dim,
            volume_epsilon: self.eps,
            weight_net: None,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct EpisodeArgs {
    #[arg(long, default_value_t = 10)]
    pub shots: usize,
    #[arg(long, default_value_t = 5)]
    pub ways: usize,
    #[arg(long, default_value_t = 200)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum query items per class.
    #[arg(long, default_value_t = episodes::DEFAULT_MAX_QUERIES)]
    pub queries: usize,
}

impl EpisodeArgs {
    fn shape(&self) -> EpisodeShape {
        EpisodeShape {
            shots: self.shots,
            ways: self.ways,
            max_queries: self.queries,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Embedding CSV (raw inputs when --checkpoint is given).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Encode the input with a trained checkpoint first.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub head: HeadArgs,
    #[command(flatten)]
    pub episode: EpisodeArgs,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Raw-input CSV in the embedding format.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    #[command(flatten)]
    pub head: HeadArgs,
    #[command(flatten)]
    pub episode: EpisodeArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Hidden width of the encoder.
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Embedding dimension m.
    #[arg(long = "embed-dim", default_value_t = 16)]
    pub embed_dim: usize,
    /// Weight-net width w (fsn-learned).
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    /// Weight-net hidden blocks b (fsn-learned).
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    #[arg(long = "grad-clip")]
    pub grad_clip: Option<f64>,
    /// Output directory for checkpoint.json and loss.csv.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MiArgs {
    /// Bundled label-statistics fixture.
    #[arg(long, conflicts_with_all = ["table", "labels"])]
    pub fixture: Option<String>,
    /// CSV of class,count,positive_concentration.
    #[arg(long, conflicts_with = "labels")]
    pub table: Option<PathBuf>,
    /// Two-column CSV of labels, one item per row.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EnergyArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Restrict to one class.
    #[arg(long)]
    pub class: Option<String>,
    /// Mean-center each class before computing the curve.
    #[arg(long)]
    pub center_classes: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GrassmannArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long = "subspace-dim", visible_alias = "d", default_value_t = 2)]
    pub subspace_dim: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CenterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long = "per-class", default_value_t = 30)]
    pub per_class: usize,
    #[arg(long, default_value_t = 16)]
    pub ambient: usize,
    /// Disjoint curve segments per class.
    #[arg(long, default_value_t = 1)]
    pub clusters: usize,
    /// Standard deviation of the curve anchors.
    #[arg(long, default_value_t = 0.3)]
    pub spread: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn require_input(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(FsnError::Config(format!("dataset '{}' does not exist", path.display())))
    }
}

pub fn run_eval(args: &EvalArgs) -> Result<EvalReport> {
    if args.episode.episodes == 0 {
        return Err(FsnError::Config("--episodes must be at least 1".into()));
    }
    require_input(&args.input)?;
    let mut head = args.head.config()?;
    let raw = load_dataset(&args.input, args.manifest.as_deref(), args.split.as_deref())?;
    let data = match &args.checkpoint {
        Some(path) => {
            let model = encoder::load_checkpoint(path)?;
            if let Some(net) = &model.weight_net {
                head.weight_net = Some(Arc::new(net.clone()));
            }
            model.encode_dataset(&raw)?
        }
        None => raw,
    };
    if head.kind == HeadKind::FsnLearned && head.weight_net.is_none() {
        return Err(FsnError::Config("fsn-learned evaluation needs a --checkpoint with a weight network".into()));
    }
    let settings = EvalSettings {
        shape: args.episode.shape(),
        episodes: args.episode.episodes,
        seed: args.episode.seed,
        threads: args.threads,
    };
    let mut report = episodes::evaluate(&data, &head, &settings)?;
    let mut warnings = hyperparameter_warnings(&head, None, None, None);
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    let inputs = &mut report.config.inputs;
    inputs.insert("input".into(), args.input.display().to_string());
    if let Some(m) = &args.manifest {
        inputs.insert("manifest".into(), m.display().to_string());
    }
    if let Some(s) = &args.split {
        inputs.insert("split".into(), s.clone());
    }
    if let Some(c) = &args.checkpoint {
        inputs.insert("checkpoint".into(), c.display().to_string());
    }
    let mut out = open_output(args.output.as_deref())?;
    out.write_all(report.to_json()?.as_bytes())?;
    out.flush()?;
    Ok(report)
}

/// Resolved training configuration embedded in the checkpoint.
#[derive(Debug, Serialize)]
struct TrainRecord<'a> {
    input: String,
    manifest: Option<String>,
    split: Option<String>,
    hidden: usize,
    embed_dim: usize,
    width: Option<usize>,
    blocks: Option<usize>,
    train: &'a TrainConfig,
    warnings: Vec<String>,
    final_loss: Option<f64>,
}

pub struct TrainRun {
    pub model: Model,
    pub losses: Vec<f64>,
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
}

pub fn run_train(args: &TrainArgs) -> Result<TrainRun> {
    if args.episode.episodes == 0 {
        return Err(FsnError::Config("--episodes must be at least 1".into()));
    }
    require_input(&args.input)?;
    let head = args.head.config()?;
    let data = load_dataset(&args.input, args.manifest.as_deref(), args.split.as_deref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.episode.seed);
    let mut model = Model::new(EncoderParams::init(data.dim(), args.hidden, args.embed_dim, &mut rng));
    let learned = head.kind == HeadKind::FsnLearned;
    if learned {
        model = model.with_weight_net(WeightNetParams::init(head.simplex_dim, args.width, args.blocks, &mut rng));
    }
    let config = TrainConfig {
        learning_rate: args.lr,
        episodes: args.episode.episodes,
        shape: args.episode.shape(),
        head: head.clone(),
        seed: args.episode.seed,
        grad_clip: args.grad_clip,
    };
    let mut warnings = hyperparameter_warnings(&head, Some(args.lr), Some(args.width), Some(args.blocks));
    warnings.extend(head.warnings_for(args.episode.shots, args.embed_dim));
    for w in &warnings {
        log::warn!("{w}");
    }
    let outcome = encoder::train(model, &data, &config)?;

    std::fs::create_dir_all(&args.output)?;
    let checkpoint = args.output.join("checkpoint.json");
    let loss_csv = args.output.join("loss.csv");
    let record = TrainRecord {
        input: args.input.display().to_string(),
        manifest: args.manifest.as_ref().map(|p| p.display().to_string()),
        split: args.split.clone(),
        hidden: args.hidden,
        embed_dim: args.embed_dim,
        width: learned.then_some(args.width),
        blocks: learned.then_some(args.blocks),
        train: &config,
        warnings,
        final_loss: outcome.losses.last().copied(),
    };
    let mut out = BufWriter::new(File::create(&checkpoint)?);
    encoder::write_checkpoint(&mut out, &outcome.model, &serde_json::to_value(&record)?)?;
    out.write_all(b"\n")?;
    out.flush()?;
    encoder::write_loss_csv(BufWriter::new(File::create(&loss_csv)?), &outcome.losses)?;
    Ok(TrainRun {
        model: outcome.model,
        losses: outcome.losses,
        checkpoint,
        loss_csv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiReport {
    pub source: String,
    pub mutual_information_bits: f64,
    pub independence_gap: f64,
    pub row_entropy_bits: f64,
    pub col_entropy_bits: f64,
    pub total: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_bits: Option<f64>,
}

pub fn mi_report(joint: &JointLabelCounts, source: String, reference_bits: Option<f64>) -> MiReport {
    MiReport {
        source,
        mutual_information_bits: labelstats::mutual_information(joint),
        independence_gap: labelstats::independence_gap(joint),
        row_entropy_bits: labelstats::entropy_bits(&joint.row_totals()),
        col_entropy_bits: labelstats::entropy_bits(&joint.col_totals()),
        total: joint.total(),
        reference_bits,
    }
}

pub fn run_mi<W: Write>(args: &MiArgs, mut stdout: W) -> Result<MiReport> {
    let report = match (&args.fixture, &args.table, &args.labels) {
        (Some(name), None, None) => {
            let fixture: Fixture = name.parse()?;
            let joint = labelstats::joint_from_concentrations(&fixture.table());
            mi_report(&joint, format!("fixture:{name}"), Some(fixture.reference_bits()))
        }
        (None, Some(path), None) => {
            let table = MarginalConcentrationTable::from_csv(BufReader::new(File::open(path)?))?;
            let joint = labelstats::joint_from_concentrations(&table);
            mi_report(&joint, path.display().to_string(), None)
        }
        (None, None, Some(path)) => {
            let joint = labelstats::read_label_pairs(BufReader::new(File::open(path)?))?;
            mi_report(&joint, path.display().to_string(), None)
        }
        _ => return Err(FsnError::Config("give exactly one of --fixture, --table, --labels".into())),
    };
    writeln!(stdout, "mutual_information_bits: {:.3}", report.mutual_information_bits)?;
    writeln!(stdout, "independence_gap: {:.6}", report.independence_gap)?;
    if let Some(r) = report.reference_bits {
        writeln!(stdout, "reference_bits: {r:.3}")?;
    }
    if let Some(path) = &args.json {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, &report)?;
        f.write_all(b"\n")?;
        f.flush()?;
    }
    Ok(report)
}

fn split_points(data: &LabeledEmbeddingDataset) -> (Vec<EmbeddingVector>, Vec<String>) {
    data.items().iter().cloned().unzip()
}

pub fn run_energy(args: &EnergyArgs) -> Result<analysis::EnergyCurve> {
    let mut data = ingest_embeddings(&args.input)?;
    if let Some(class) = &args.class {
        data = data.restrict(std::slice::from_ref(class))?;
    }
    let (mut points, labels) = split_points(&data);
    if args.center_classes {
        points = mean_center_by_cluster(&points, &labels)?;
    }
    let curve = cumulative_energy(&points)?;
    curve.write_csv(open_output(args.output.as_deref())?)?;
    Ok(curve)
}

pub fn run_grassmann(args: &GrassmannArgs) -> Result<nalgebra::DMatrix<f64>> {
    let data = ingest_embeddings(&args.input)?;
    let labels: Vec<String> = data.classes().into_iter().map(String::from).collect();
    let subspaces = labels
        .iter()
        .map(|c| {
            let points: Vec<EmbeddingVector> = data.class_items(c).into_iter().cloned().collect();
            analysis::principal_subspace(&points, args.subspace_dim)
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = pairwise_grassmannian_matrix(&subspaces)?;
    analysis::write_matrix_csv(open_output(args.output.as_deref())?, &labels, &matrix)?;
    Ok(matrix)
}

pub fn run_center(args: &CenterArgs) -> Result<()> {
    let data = ingest_embeddings(&args.input)?;
    let (points, labels) = split_points(&data);
    let centered = mean_center_by_cluster(&points, &labels)?;
    let items: Vec<_> = centered.into_iter().zip(labels).collect();
    write_embeddings(open_output(args.output.as_deref())?, &items)
}

pub fn run_synth(args: &SynthArgs) -> Result<()> {
    let spec = CurveDatasetSpec {
        classes: args.classes,
        per_class: args.per_class,
        ambient: args.ambient,
        clusters_per_class: args.clusters,
        spread: args.spread,
        noise: args.noise,
        seed: args.seed,
        ..Default::default()
    };
    let data = synthetic::curve_dataset(&spec)?;
    write_embeddings(open_output(args.output.as_deref())?, data.items())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Eval(a) => run_eval(a).map(|r| {
            for w in &r.warnings {
                log::warn!("{w}");
            }
        }),
        Command::Train(a) => run_train(a).map(|_| ()),
        Command::Mi(a) => run_mi(a, io::stdout().lock()).map(|_| ()),
        Command::Energy(a) => run_energy(a).map(|_| ()),
        Command::Grassmann(a) => run_grassmann(a).map(|_| ()),
        Command::Center(a) => run_center(a),
        Command::Synth(a) => run_synth(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
