use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use adnlf::data::{load_triples, rescale_positive, LoadedTriples, Role};
use adnlf::eval::{grid_sweep, rmse, write_sweep, SweepOptions};
use adnlf::model::{export_model, import_model, ModelFile};
use adnlf::pso::{self, run_adaptive, AdaptiveOptions};
use adnlf::{sgd, FactorState, HdiDataset, Hyperparams};

use crate::config::{initial_position, DataConfig, Fallback, Mode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::index::ModelIndex;

pub const MODEL_FILE: &str = "model.bin";
pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const SWEEP_FILE: &str = "sweep.csv";

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Path of the id sidecar that accompanies `model`.
pub fn index_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".index");
    PathBuf::from(s)
}

/// Delimiter used when writing files that mirror the input.
fn output_delimiter(d: char) -> char {
    if d == ' ' {
        '\t'
    } else {
        d
    }
}

struct Loaded {
    raw: LoadedTriples,
    dataset: HdiDataset,
}

fn load_dataset(data: &DataConfig) -> CliResult<Loaded> {
    let raw = load_triples(open(&data.input)?, data.delimiter, data.header)?;
    let (scaled, scaling) = rescale_positive(&raw.triples, data.min_target)?;
    let dataset = HdiDataset::split(&scaled, raw.n_rows(), raw.n_cols(), scaling, data.seed)?;
    let s = dataset.stats();
    log::info!(
        "{}: {}×{} with {} known entries (density {:.4}%), split {}/{}/{}",
        data.input.display(),
        s.n_rows,
        s.n_cols,
        s.known,
        s.density * 100.0,
        s.train,
        s.validation,
        s.test
    );
    Ok(Loaded { raw, dataset })
}

pub fn split(data: &DataConfig) -> CliResult<()> {
    let Loaded { raw, dataset } = load_dataset(data)?;
    ensure_dir(&data.out_dir)?;
    let d = output_delimiter(data.delimiter);
    let mut sinks = Vec::new();
    for role in [Role::Train, Role::Validation, Role::Test] {
        let path = data.out_dir.join(format!("{}.csv", role.name()));
        sinks.push((role, path.clone(), create(&path)?));
    }
    for (t, &subset) in raw.triples.iter().zip(dataset.assignment()) {
        let role = Role::of_subset(subset);
        let (_, path, sink) = sinks
            .iter_mut()
            .find(|(r, _, _)| *r == role)
            .expect("every role has a sink");
        let row = raw.rows.id(t.row).unwrap_or_default();
        let col = raw.cols.id(t.col).unwrap_or_default();
        writeln!(sink, "{row}{d}{col}{d}{}", t.value).map_err(|e| CliError::io(path, e))?;
    }
    for (_, path, mut sink) in sinks {
        sink.flush().map_err(|e| CliError::io(&path, e))?;
    }

    let manifest = data.out_dir.join("manifest.csv");
    dataset.write_manifest(create(&manifest)?)?;
    let scaling_path = data.out_dir.join("scaling.txt");
    let mut sink = create(&scaling_path)?;
    let scaling = dataset.scaling();
    writeln!(sink, "offset={}\nscale={}", scaling.offset, scaling.scale)
        .and_then(|_| sink.flush())
        .map_err(|e| CliError::io(&scaling_path, e))?;
    println!(
        "train={} validation={} test={} out={}",
        dataset.train().len(),
        dataset.validation().len(),
        dataset.test().len(),
        data.out_dir.display()
    );
    Ok(())
}

/// Table III style summary of one training run.
struct Report {
    mode: Mode,
    hyperparams: Hyperparams,
    test_rmse: f64,
    validation_rmse: f64,
    iterations: usize,
    seconds_per_iteration: f64,
    total_seconds: f64,
}

impl Report {
    fn write<W: Write>(&self, mut sink: W) -> io::Result<()> {
        let mode = match self.mode {
            Mode::Adaptive => "adaptive",
            Mode::Manual => "manual",
            Mode::Sweep => "sweep",
        };
        let h = &self.hyperparams;
        writeln!(sink, "mode={mode}")?;
        writeln!(sink, "test_rmse={}", self.test_rmse)?;
        writeln!(sink, "validation_rmse={}", self.validation_rmse)?;
        writeln!(sink, "iterations={}", self.iterations)?;
        writeln!(sink, "seconds_per_iteration={}", self.seconds_per_iteration)?;
        writeln!(sink, "total_seconds={}", self.total_seconds)?;
        writeln!(sink, "alpha={}\nbeta={}\neta={}\nlambda={}", h.alpha, h.beta, h.eta, h.lambda)?;
        sink.flush()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn train(cfg: &RunConfig) -> CliResult<()> {
    if cfg.mode == Mode::Sweep {
        return sweep(cfg);
    }
    let Loaded { raw, dataset } = load_dataset(&cfg.data)?;
    let init = FactorState::init(dataset.n_rows(), dataset.n_cols(), cfg.rank, cfg.data.seed)?;
    ensure_dir(&cfg.data.out_dir)?;
    let trace_path = cfg.data.out_dir.join(TRACE_FILE);

    let (state, hyperparams, iterations, seconds_per_iteration, total_seconds) = match cfg.mode {
        Mode::Manual => {
            let hp = cfg.manual_hyperparams()?;
            let run = sgd::train_manual(&dataset, init, &hp, &cfg.bridge, &cfg.train_options())?;
            sgd::write_trace(&run.trace, create(&trace_path)?)?;
            report_audit(run.trace.iter().filter_map(|r| r.audit_violations));
            let per = mean(run.trace.iter().map(|r| r.seconds));
            (run.state, hp, run.epochs_run, per, run.total_seconds)
        }
        Mode::Adaptive => {
            let opts = AdaptiveOptions {
                max_iters: cfg.max_iters,
                tol: cfg.tol,
                patience: cfg.patience,
                seed: cfg.data.seed,
                threads: cfg.threads,
                initial_position: initial_position(cfg),
                audit: cfg.audit,
            };
            let run = run_adaptive(&dataset, &init, &cfg.swarm, &cfg.bridge, &opts)?;
            pso::write_trace(&run.trace, create(&trace_path)?)?;
            report_audit(
                run.trace
                    .iter()
                    .flat_map(|r| r.particles.iter().filter_map(|p| p.audit_violations)),
            );
            let per = mean(run.trace.iter().map(|r| r.seconds));
            (run.state, run.hyperparams, run.iterations, per, run.total_seconds)
        }
        Mode::Sweep => unreachable!("handled above"),
    };

    let scaling = dataset.scaling();
    let report = Report {
        mode: cfg.mode,
        hyperparams,
        test_rmse: rmse(&state, dataset.test(), &cfg.bridge, &scaling, true)?,
        validation_rmse: rmse(&state, dataset.validation(), &cfg.bridge, &scaling, true)?,
        iterations,
        seconds_per_iteration,
        total_seconds,
    };

    let model_path = cfg.data.out_dir.join(MODEL_FILE);
    export_model(&state, &cfg.bridge, &scaling, create(&model_path)?)?;
    let index_file = index_path(&model_path);
    ModelIndex::from_loaded(&raw, dataset.train_mean_raw())
        .write(create(&index_file)?)
        .map_err(|e| CliError::io(&index_file, e))?;
    let report_path = cfg.data.out_dir.join(REPORT_FILE);
    report
        .write(create(&report_path)?)
        .map_err(|e| CliError::io(&report_path, e))?;
    report
        .write(io::stdout().lock())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    Ok(())
}

fn report_audit(violations: impl Iterator<Item = usize>) {
    let total: usize = violations.sum();
    if total > 0 {
        log::warn!("{total} derived factor values fell outside {{0}} ∪ [iota, 1)");
    }
}

pub fn sweep(cfg: &RunConfig) -> CliResult<()> {
    let Loaded { dataset, .. } = load_dataset(&cfg.data)?;
    let init = FactorState::init(dataset.n_rows(), dataset.n_cols(), cfg.rank, cfg.data.seed)?;
    let (eta, lambda) = match (cfg.hyper[2], cfg.hyper[3]) {
        (Some(e), Some(l)) => (e, l),
        _ => return Err(CliError::Config("sweep needs eta and lambda".into())),
    };
    let opts = SweepOptions {
        eta,
        lambda,
        train: cfg.train_options(),
        threads: cfg.threads,
    };
    let result = grid_sweep(&dataset, &cfg.alphas, &cfg.betas, &init, &cfg.bridge, &opts)?;
    ensure_dir(&cfg.data.out_dir)?;
    let path = cfg.data.out_dir.join(SWEEP_FILE);
    let d = output_delimiter(cfg.data.delimiter);
    write_sweep(&result, d, create(&path)?)?;
    write_sweep(&result, d, io::stdout().lock())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unknown {
    Row,
    Col,
    Both,
}

impl Unknown {
    fn describe(self) -> &'static str {
        match self {
            Unknown::Row => "unknown row id",
            Unknown::Col => "unknown column id",
            Unknown::Both => "unknown row and column ids",
        }
    }
}

struct Predictor {
    model: ModelFile,
    index: ModelIndex,
    fallback: Fallback,
}

impl Predictor {
    fn load(model_path: &Path, index: Option<&Path>, fallback: Fallback) -> CliResult<Self> {
        let model = import_model(open(model_path)?)?;
        let index_file = index.map_or_else(|| index_path(model_path), Path::to_path_buf);
        let index = ModelIndex::read(open(&index_file)?)?;
        Ok(Self {
            model,
            index,
            fallback,
        })
    }

    /// Raw-scale prediction, or why none could be made.
    fn predict(&self, row: &str, col: &str) -> CliResult<Result<f64, Unknown>> {
        let u = self.index.rows.get(row).copied();
        let i = self.index.cols.get(col).copied();
        match (u, i) {
            (Some(u), Some(i)) => {
                let scaled = self.model.state.predict(u, i, &self.model.bridge)?;
                Ok(Ok(self.model.scaling.to_raw(scaled)))
            }
            (u, i) => {
                let why = match (u, i) {
                    (None, None) => Unknown::Both,
                    (None, _) => Unknown::Row,
                    _ => Unknown::Col,
                };
                Ok(match self.fallback {
                    Fallback::Mean => Ok(self.index.train_mean),
                    Fallback::Error => Err(why),
                })
            }
        }
    }
}

pub struct PredictRequest<'a> {
    pub model: &'a Path,
    pub index: Option<&'a Path>,
    pub pairs: &'a Path,
    pub delimiter: char,
    pub header: bool,
    pub fallback: Fallback,
    pub output: Option<&'a Path>,
}

/// Writes `row,col,prediction` per pair. Pairs that cannot be predicted get
/// an `ERROR <reason>` marker in place of the value, and the command fails
/// with the fallback exit status once every pair is written.
pub fn predict(req: &PredictRequest) -> CliResult<()> {
    let predictor = Predictor::load(req.model, req.index, req.fallback)?;
    let mut sink: Box<dyn Write> = match req.output {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let out_name = req.output.unwrap_or(Path::new("<stdout>")).to_path_buf();
    let d = output_delimiter(req.delimiter);
    let mut failures = 0;
    let mut header_pending = req.header;
    for (n, line) in open(req.pairs)?.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(req.pairs, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields: Vec<&str> = if req.delimiter == ' ' {
            trimmed.split_whitespace().collect()
        } else {
            trimmed.split(req.delimiter).map(str::trim).collect()
        };
        if fields.len() < 2 {
            return Err(adnlf::Error::Parse {
                line: n + 1,
                message: format!("expected row and column ids, found {} field(s)", fields.len()),
            }
            .into());
        }
        let (row, col) = (fields[0], fields[1]);
        let written = match predictor.predict(row, col)? {
            Ok(v) => writeln!(sink, "{row}{d}{col}{d}{v}"),
            Err(why) => {
                failures += 1;
                writeln!(sink, "{row}{d}{col}{d}ERROR {}", why.describe())
            }
        };
        written.map_err(|e| CliError::io(&out_name, e))?;
    }
    sink.flush().map_err(|e| CliError::io(&out_name, e))?;
    if failures > 0 {
        return Err(CliError::Fallback(failures));
    }
    Ok(())
}

pub struct EvaluateRequest<'a> {
    pub model: &'a Path,
    pub index: Option<&'a Path>,
    pub triples: &'a Path,
    pub delimiter: char,
    pub header: bool,
    pub fallback: Fallback,
}

/// RMSE of raw-scale predictions against the raw values of `triples`.
pub fn evaluate(req: &EvaluateRequest) -> CliResult<()> {
    let predictor = Predictor::load(req.model, req.index, req.fallback)?;
    let loaded = load_triples(open(req.triples)?, req.delimiter, req.header)?;
    let mut sum = 0.0;
    let mut failures = 0;
    let mut fallbacks = 0;
    for t in &loaded.triples {
        let row = loaded.rows.id(t.row).unwrap_or_default();
        let col = loaded.cols.id(t.col).unwrap_or_default();
        if !(predictor.index.rows.contains_key(row) && predictor.index.cols.contains_key(col)) {
            fallbacks += 1;
        }
        match predictor.predict(row, col)? {
            Ok(v) => sum += (t.value - v) * (t.value - v),
            Err(_) => failures += 1,
        }
    }
    if failures > 0 {
        return Err(CliError::Fallback(failures));
    }
    let n = loaded.triples.len();
    println!("rmse={}", (sum / n as f64).sqrt());
    println!("n={n}");
    if fallbacks > 0 {
        println!("fallback_predictions={fallbacks}");
    }
    Ok(())
}
