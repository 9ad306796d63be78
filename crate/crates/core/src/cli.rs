//! Command-line front end.
//!
//! Exit codes: 0 success, 1 internal error, 2 data error, 64 usage error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::autoencoder::{self, ArchSpec, AutoencoderError, AutoencoderModel, TrainingConfig};
use crate::barcode::{BarcodeError, Method};
use crate::imageio::{load_grayscale, DatasetManifest, ImageIoError, ManifestError, RawRaster};
use crate::index::{IndexError, LshConfig, LshTables};
use crate::irma::{build_branching, IrmaCode, IrmaError};
use crate::pipeline::{self, FeatureSpec, PipelineError};
use crate::radon::{flatten, RadonConfig};
use crate::store::{self, IndexParams, LshSidecar, StoreError, StoredIndex};
use crate::synth::{self, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_errors!(
    ImageIoError,
    ManifestError,
    StoreError,
    PipelineError,
    IndexError,
    IrmaError,
    BarcodeError
);

impl From<AutoencoderError> for CliError {
    fn from(e: AutoencoderError) -> Self {
        match e {
            AutoencoderError::InvalidArchSpec(_) | AutoencoderError::InvalidConfig(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "arbc", version, about = "Radon barcode image retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write normalized Radon feature vectors for a manifest.
    Prep(PrepArgs),
    /// Train an autoencoder on the Radon features of a manifest.
    Train(TrainArgs),
    /// Encode a manifest into a barcode index.
    Encode(EncodeArgs),
    /// Query an index with an image.
    Search(SearchArgs),
    /// Top-1 retrieval of a test manifest against a train manifest, scored
    /// with the hierarchical IRMA error.
    Evaluate(EvaluateArgs),
    /// Per-image timing of barcode generation.
    Bench(BenchArgs),
    /// Render a labelled synthetic dataset with train/test manifests.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Side of the normalized raster (32 or 64).
    #[arg(long = "size")]
    pub size: Option<usize>,
    /// Number of projection angles (8 or 16).
    #[arg(long = "angles")]
    pub angles: Option<usize>,
    /// Hidden layers relative to the input size, e.g. `h/2` or `h/2,h/4,h/2`.
    #[arg(long, default_value = "h/2")]
    pub arch: String,
    #[arg(long, default_value_t = autoencoder::DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = autoencoder::DEFAULT_BATCH_SIZE)]
    pub batch: usize,
    #[arg(long, default_value_t = autoencoder::DEFAULT_LEARNING_RATE)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep the training order fixed instead of reshuffling every epoch.
    #[arg(long)]
    pub no_shuffle: bool,
    /// Trained model file (required for `arbc:N`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// `rbc` or `arbc:N` (N = 1-based hidden layer).
    #[arg(long, default_value = "rbc")]
    pub method: String,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

const ALLOWED_SIDES: [usize; 2] = [32, 64];
const ALLOWED_ANGLES: [usize; 2] = [8, 16];

impl Common {
    fn feature_spec(&self) -> Result<FeatureSpec, CliError> {
        let side = self.size.unwrap_or(crate::imageio::DEFAULT_SIDE);
        let angles = self.angles.unwrap_or(crate::radon::DEFAULT_NUM_ANGLES);
        if !ALLOWED_SIDES.contains(&side) {
            return Err(CliError::Usage(format!(
                "--size must be 32 or 64, got {side}"
            )));
        }
        if !ALLOWED_ANGLES.contains(&angles) {
            return Err(CliError::Usage(format!(
                "--angles must be 8 or 16, got {angles}"
            )));
        }
        Ok(FeatureSpec {
            side,
            radon: RadonConfig::new(angles).map_err(|e| CliError::Usage(e.to_string()))?,
        })
    }

    fn method(&self) -> Result<Method, CliError> {
        self.method
            .parse()
            .map_err(|e: BarcodeError| CliError::Usage(e.to_string()))
    }

    fn arch(&self) -> Result<ArchSpec, CliError> {
        ArchSpec::parse(&self.arch).map_err(|e| CliError::Usage(e.to_string()))
    }

    fn training(&self) -> Result<TrainingConfig, CliError> {
        let cfg = TrainingConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            seed: shuffle_seed(self.seed),
            shuffle_each_epoch: !self.no_shuffle,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads the model when the method needs one.
    fn model_for(&self, method: Method) -> Result<Option<AutoencoderModel>, CliError> {
        match (method, &self.model) {
            (Method::Rbc, _) => Ok(None),
            (Method::Arbc(_), None) => {
                Err(CliError::Usage(format!("method {method} requires --model")))
            }
            (Method::Arbc(layer), Some(p)) => {
                let m = store::load_model(p)?;
                if layer > m.num_hidden() {
                    return Err(CliError::Usage(format!(
                        "model has {} hidden layer(s), cannot use layer {layer}",
                        m.num_hidden()
                    )));
                }
                Ok(Some(m))
            }
        }
    }
}

// Separate stream for shuffling so it does not replay the init draws.
fn shuffle_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace output (`epoch<TAB>loss`); defaults to `<out>.loss.tsv`.
    #[arg(long)]
    pub loss: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct LshArgs {
    /// Use bit-sampling LSH.
    #[arg(long)]
    pub lsh: bool,
    #[arg(long, default_value_t = crate::index::DEFAULT_LSH_TABLES)]
    pub tables: usize,
    /// Key size is the barcode length divided by this.
    #[arg(long, default_value_t = crate::index::DEFAULT_KEY_FRACTION)]
    pub keyfrac: usize,
}

impl LshArgs {
    fn config(&self, barcode_length: usize, seed: u64) -> Result<LshConfig, CliError> {
        if self.keyfrac == 0 {
            return Err(CliError::Usage("--keyfrac must be at least 1".into()));
        }
        let cfg = LshConfig {
            num_tables: self.tables,
            key_size: (barcode_length / self.keyfrac).max(1),
            seed,
        };
        cfg.validate(barcode_length)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Index output path; with `--lsh` a sidecar `<out>.lsh` is written too.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub lsh: LshArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Query image file.
    #[arg(long)]
    pub query: PathBuf,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    /// With `--lsh`, do not fall back to the exhaustive scan on an empty
    /// candidate set.
    #[arg(long)]
    pub no_fallback: bool,
    #[command(flatten)]
    pub lsh: LshArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Error report output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Branching table to use instead of the one derived from the manifests.
    #[arg(long)]
    pub branching_table: Option<PathBuf>,
    /// Also write the derived (or supplied) branching table here.
    #[arg(long)]
    pub branching_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Number of measured passes.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (images/, train.tsv, test.tsv).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub count: usize,
    #[arg(long, default_value_t = 300)]
    pub train: usize,
    /// Side of the rendered images in pixels.
    #[arg(long, default_value_t = 64)]
    pub raster_side: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => return clap_exit(e),
    };
    finish(run(cli))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(c) => finish(run(c)),
        Err(e) => clap_exit(e),
    }
}

fn clap_exit(e: clap::Error) -> i32 {
    use clap::error::ErrorKind;
    let _ = e.print();
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
        _ => EXIT_USAGE,
    }
}

fn finish(result: Result<(), CliError>) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let jobs = match &cli.command {
        Command::Prep(a) => a.common.jobs,
        Command::Train(a) => a.common.jobs,
        Command::Encode(a) => a.common.jobs,
        Command::Search(a) => a.common.jobs,
        Command::Evaluate(a) => a.common.jobs,
        Command::Bench(a) => a.common.jobs,
        Command::Synth(_) => None,
    };
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // only the first call can size the global pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Prep(a) => cmd_prep(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Encode(a) => cmd_encode(&a),
        Command::Search(a) => cmd_search(&a, &mut out),
        Command::Evaluate(a) => cmd_evaluate(&a, &mut out),
        Command::Bench(a) => cmd_bench(&a, &mut out),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    Ok(DatasetManifest::load(path)?)
}

fn ids_of(manifest: &DatasetManifest) -> Vec<String> {
    manifest
        .entries
        .iter()
        .map(|e| e.image_id.clone())
        .collect()
}

fn cmd_prep(a: &PrepArgs) -> Result<(), CliError> {
    let spec = a.common.feature_spec()?;
    let manifest = load_manifest(&a.manifest)?;
    let features = pipeline::manifest_features(&manifest, &spec)?;
    let mut text = String::new();
    for (e, f) in manifest.entries.iter().zip(&features) {
        let v: Vec<String> = flatten(f).iter().map(f64::to_string).collect();
        text.push_str(&e.image_id);
        text.push('\t');
        text.push_str(&v.join(" "));
        text.push('\n');
    }
    store::write_atomic(&a.out, &text)?;
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let spec = a.common.feature_spec()?;
    let arch = a.common.arch()?;
    let cfg = a.common.training()?;
    let manifest = load_manifest(&a.manifest)?;
    if manifest.is_empty() {
        return Err(CliError::Data(AutoencoderError::EmptyDataset.to_string()));
    }
    let dims = arch.layer_dims(spec.feature_len())?;
    let features = pipeline::manifest_features(&manifest, &spec)?;
    let data = pipeline::feature_vectors(&features);
    let model = autoencoder::init_model(&dims, a.common.seed)?;
    log::info!(
        "training {dims:?} on {} images for {} epochs",
        data.len(),
        cfg.epochs
    );
    let outcome = autoencoder::train(model, &data, &cfg)?;
    store::save_model(&outcome.model, &a.out)?;
    let loss_path = a
        .loss
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".loss.tsv"));
    store::write_atomic(loss_path, &store::loss_trace_to_string(&outcome.loss_trace))?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_encode(a: &EncodeArgs) -> Result<(), CliError> {
    let spec = a.common.feature_spec()?;
    let method = a.common.method()?;
    let model = a.common.model_for(method)?;
    let manifest = load_manifest(&a.manifest)?;
    let ids = ids_of(&manifest);
    let features = pipeline::manifest_features(&manifest, &spec)?;
    let codes = pipeline::encode_all(&ids, &features, method, model.as_ref())?;
    let length = pipeline::barcode_length(&spec, method, model.as_ref());
    let index = pipeline::build_index(&ids, codes, method, length)?;
    if a.lsh.lsh {
        let cfg = a.lsh.config(length, a.common.seed)?;
        let tables = LshTables::build(&index, &cfg)?;
        store::save_lsh(
            &LshSidecar {
                config: cfg,
                positions: tables.positions().to_vec(),
            },
            with_suffix(&a.out, ".lsh"),
        )?;
    }
    let stored = StoredIndex {
        params: IndexParams {
            side: spec.side,
            num_angles: spec.radon.num_angles(),
        },
        index,
    };
    store::save_index(&stored, &a.out)?;
    Ok(())
}

fn cmd_search(a: &SearchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.k == 0 {
        return Err(CliError::Usage("-k must be at least 1".into()));
    }
    let stored = store::load_index(&a.index)?;
    let params = stored.params;
    let index = stored.index;
    if let Some(s) = a.common.size {
        if s != params.side {
            return Err(CliError::Data(format!(
                "index was built with --size {}, query requested {s}",
                params.side
            )));
        }
    }
    if let Some(n) = a.common.angles {
        if n != params.num_angles {
            return Err(CliError::Data(format!(
                "index was built with --angles {}, query requested {n}",
                params.num_angles
            )));
        }
    }
    let method = index.method();
    let spec = FeatureSpec {
        side: params.side,
        radon: RadonConfig::new(params.num_angles)
            .map_err(|e| CliError::Data(format!("index header: {e}")))?,
    };
    let model = a.common.model_for(method)?;
    let raster = load_grayscale(&a.query)?;
    let features = pipeline::raster_features(&raster, &spec)?;
    let query = pipeline::encode_one(&features, method, model.as_ref())?;
    if query.len() != index.barcode_length() {
        return Err(CliError::Data(format!(
            "query barcode has {} bits, index holds {}",
            query.len(),
            index.barcode_length()
        )));
    }

    let hits = if a.lsh.lsh {
        let sidecar = with_suffix(&a.index, ".lsh");
        let tables = if sidecar.exists() {
            let s = store::load_lsh(&sidecar)?;
            LshTables::with_positions(&index, s.config, s.positions)?
        } else {
            LshTables::build(
                &index,
                &a.lsh.config(index.barcode_length(), a.common.seed)?,
            )?
        };
        let hits = if index.is_empty() {
            Vec::new()
        } else {
            tables.search(&index, &query, a.k)?
        };
        if hits.is_empty() {
            if a.no_fallback {
                eprintln!("warning: no LSH bucket matched the query; returning no results");
                hits
            } else {
                eprintln!(
                    "warning: no LSH bucket matched the query; falling back to exhaustive search"
                );
                index.search_exhaustive(&query, a.k)?
            }
        } else {
            hits
        }
    } else {
        index.search_exhaustive(&query, a.k)?
    };
    for (rank, h) in hits.iter().enumerate() {
        writeln!(out, "{}\t{}\t{}", rank + 1, h.image_id, h.distance)?;
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = a.common.feature_spec()?;
    let method = a.common.method()?;
    let model = a.common.model_for(method)?;
    let train_m = load_manifest(&a.train)?;
    let test_m = load_manifest(&a.test)?;
    if train_m.is_empty() || test_m.is_empty() {
        return Err(CliError::Data(
            "train and test manifests must be nonempty".into(),
        ));
    }
    let train_codes = pipeline::manifest_codes(&train_m)?;
    let test_codes = pipeline::manifest_codes(&test_m)?;

    let table = match &a.branching_table {
        Some(p) => store::load_branching(p)?,
        None => build_branching(train_codes.iter().chain(&test_codes))?,
    };
    if let Some(p) = &a.branching_out {
        store::save_branching(&table, p)?;
    }

    let train_ids = ids_of(&train_m);
    let test_ids = ids_of(&test_m);
    let train_features = pipeline::manifest_features(&train_m, &spec)?;
    let test_features = pipeline::manifest_features(&test_m, &spec)?;
    let length = pipeline::barcode_length(&spec, method, model.as_ref());
    let train_bits = pipeline::encode_all(&train_ids, &train_features, method, model.as_ref())?;
    let test_bits = pipeline::encode_all(&test_ids, &test_features, method, model.as_ref())?;
    let index = pipeline::build_index(&train_ids, train_bits, method, length)?;

    let labels: HashMap<String, IrmaCode> = train_ids.iter().cloned().zip(train_codes).collect();
    let queries: Vec<_> = test_ids
        .into_iter()
        .zip(test_bits)
        .zip(test_codes)
        .map(|((id, bits), code)| (id, bits, code))
        .collect();
    let report = pipeline::evaluate_top1(&index, &labels, &queries, &table)?;
    store::write_atomic(&a.out, &store::report_to_string(&report))?;
    writeln!(out, "TOTAL\t{}", report.total_error)?;
    Ok(())
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.repeat == 0 {
        return Err(CliError::Usage("--repeat must be at least 1".into()));
    }
    let spec = a.common.feature_spec()?;
    let arch = a.common.arch()?;
    let manifest = load_manifest(&a.manifest)?;
    if manifest.is_empty() {
        return Err(CliError::Data("manifest is empty".into()));
    }
    let rasters = manifest
        .entries
        .iter()
        .map(|e| {
            load_grayscale(&e.image_path).map_err(|source| PipelineError::Image {
                id: e.image_id.clone(),
                source,
            })
        })
        .collect::<Result<Vec<RawRaster>, _>>()?;

    let dims = arch.layer_dims(spec.feature_len())?;
    let model = autoencoder::init_model(&dims, a.common.seed)?;
    let one_epoch = TrainingConfig {
        epochs: 1,
        ..a.common.training()?
    };

    let mut rbc = Vec::new();
    let mut arbc_encode = Vec::new();
    let mut arbc_epoch = Vec::new();
    for _ in 0..a.repeat {
        let mut vectors = Vec::with_capacity(rasters.len());
        for r in &rasters {
            let t = Instant::now();
            let f = pipeline::raster_features(r, &spec)?;
            let bits = pipeline::encode_one(&f, Method::Rbc, None)?;
            rbc.push(t.elapsed().as_secs_f64());
            std::hint::black_box(bits);
            vectors.push(flatten(&f));
        }
        let t = Instant::now();
        let trained = autoencoder::train(model.clone(), &vectors, &one_epoch)?;
        arbc_epoch.push(t.elapsed().as_secs_f64() / vectors.len() as f64);
        for r in &rasters {
            let t = Instant::now();
            let f = pipeline::raster_features(r, &spec)?;
            let bits = pipeline::encode_one(&f, Method::Arbc(1), Some(&trained.model))?;
            arbc_encode.push(t.elapsed().as_secs_f64());
            std::hint::black_box(bits);
        }
    }

    writeln!(
        out,
        "# size {} angles {} arch {} images {} repeat {}",
        spec.side,
        spec.radon.num_angles(),
        arch,
        rasters.len(),
        a.repeat
    )?;
    writeln!(out, "method\tmean_s\tstd_s\tsamples")?;
    for (name, samples) in [
        ("rbc", &rbc),
        ("arbc-encode", &arbc_encode),
        ("arbc-epoch", &arbc_epoch),
    ] {
        let (m, s) = mean_std(samples);
        writeln!(out, "{name}\t{m:.6}\t{s:.6}\t{}", samples.len())?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    if a.train > a.count {
        return Err(CliError::Usage("--train cannot exceed --count".into()));
    }
    if a.raster_side == 0 || a.noise < 0.0 || !a.noise.is_finite() {
        return Err(CliError::Usage(
            "--raster-side must be positive and --noise nonnegative".into(),
        ));
    }
    let cfg = SynthConfig {
        num_images: a.count,
        num_train: a.train,
        side: a.raster_side,
        noise_std: a.noise,
        seed: a.seed,
    };
    std::fs::create_dir_all(&a.out)?;
    synth::write_dataset(&synth::generate(&cfg), &a.out)?;
    Ok(())
}
