//! Run configuration: command-line flags layered over an optional flat
//! `key = value` file, validated into a [`RunConfig`].

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use adnlf::data::DEFAULT_MIN_TARGET;
use adnlf::model::DEFAULT_RANK;
use adnlf::pso::{DIMS, DIM_NAMES};
use adnlf::sgd::{Hyperparams, TrainOptions};
use adnlf::{BridgeConfig, SwarmConfig};
use clap::{Args, ValueEnum};

use crate::error::{CliError, CliResult};

pub const OUT_DIR_ENV: &str = "ADNLF_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "adnlf-out";
const DEFAULT_GRID: [f64; 5] = [0.1, 0.5, 1.0, 1.2, 1.5];
const ADAPTIVE_MAX_ITERS: usize = 100;

const KNOWN_KEYS: &[&str] = &[
    "delimiter", "header", "min_target", "seed", "out", "mode", "alpha", "beta", "eta", "lambda",
    "f", "iota", "max_iters", "tol", "patience", "threads", "particles", "w", "c1", "c2",
    "alphas", "betas", "audit",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Adaptive,
    Manual,
    Sweep,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Mode as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Fallback {
    #[default]
    Error,
    Mean,
}

/// Flags shared by every command that reads a rating file.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Rating triples: row id, column id, value (extra fields are ignored).
    pub input: PathBuf,
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Field delimiter: a single character, or `tab`, `space`, `whitespace`.
    #[arg(long)]
    pub delimiter: Option<String>,
    /// Skip the first record.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub header: Option<bool>,
    /// Smallest value after the positive shift.
    #[arg(long)]
    pub min_target: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: $ADNLF_OUT_DIR, else ./adnlf-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Model, budget and swarm flags for `train` and `sweep`.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Learning rate.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Regularization coefficient.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Latent rank [default: 20].
    #[arg(long)]
    pub f: Option<usize>,
    /// Bridge threshold [default: 5e-5].
    #[arg(long)]
    pub iota: Option<f64>,
    /// Outer iterations (adaptive) or epochs per model (manual, sweep).
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Convergence tolerance on the validation RMSE [default: 1e-5].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Consecutive stalled iterations before stopping [default: 2].
    #[arg(long)]
    pub patience: Option<usize>,
    /// Worker threads for particles or sweep cells; 0 uses all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Swarm size q [default: 10].
    #[arg(long)]
    pub particles: Option<usize>,
    /// Inertia weight [default: 0.729].
    #[arg(long)]
    pub w: Option<f64>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    /// Comma-separated α grid for sweeps.
    #[arg(long)]
    pub alphas: Option<String>,
    /// Comma-separated β grid for sweeps.
    #[arg(long)]
    pub betas: Option<String>,
    /// Record range violations of the derived factors after every epoch.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub audit: Option<bool>,
}

/// Parsed `key = value` file. Keys accept `-` or `_`.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("config line {}: expected key = value", n + 1))
            })?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("config line {}: unknown key {key:?}", n + 1)));
            }
            if values.insert(key.clone(), value.trim().to_owned()).is_some() {
                return Err(CliError::Config(format!("config line {}: {key} set twice", n + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::Config(format!("{key} = {v:?}: {e}")))
            })
            .transpose()
    }

    /// The flag value when given, else the file value.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}

pub fn parse_delimiter(s: &str) -> CliResult<char> {
    match s {
        "tab" | "\\t" => Ok('\t'),
        "space" | "whitespace" => Ok(' '),
        _ => {
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(CliError::Config(format!("delimiter must be one character, got {s:?}"))),
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DataConfig {
    pub input: PathBuf,
    pub delimiter: char,
    pub header: bool,
    pub min_target: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: DataConfig,
    pub mode: Mode,
    /// `(α, β, η, λ)` as supplied; absent coordinates are `None`.
    pub hyper: [Option<f64>; DIMS],
    pub swarm: SwarmConfig,
    pub rank: usize,
    pub bridge: BridgeConfig,
    pub max_iters: usize,
    pub tol: f64,
    pub patience: usize,
    pub threads: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub audit: bool,
}

impl RunConfig {
    /// Complete manual hyper-parameters; only valid after resolution in
    /// manual mode.
    pub fn manual_hyperparams(&self) -> CliResult<Hyperparams> {
        let [a, b, e, l] = self.hyper;
        match (a, b, e, l) {
            (Some(a), Some(b), Some(e), Some(l)) => {
                Hyperparams::new(a, b, e, l).map_err(|e| CliError::Config(e.to_string()))
            }
            _ => Err(CliError::Config("manual mode needs alpha, beta, eta and lambda".into())),
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            max_epochs: self.max_iters,
            tol: self.tol,
            patience: self.patience,
            seed: self.data.seed,
            audit: self.audit,
        }
    }
}

fn file_for(path: Option<&Path>) -> CliResult<ConfigFile> {
    path.map_or_else(|| Ok(ConfigFile::default()), ConfigFile::load)
}

fn parse_grid(s: &str, key: &str) -> CliResult<Vec<f64>> {
    let grid = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("{key}: {v:?}: {e}")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    if grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(CliError::Config(format!("{key} values must be positive")));
    }
    Ok(grid)
}

impl DataArgs {
    pub fn resolve(&self) -> CliResult<DataConfig> {
        let file = file_for(self.config.as_deref())?;
        self.resolve_with(&file)
    }

    fn resolve_with(&self, file: &ConfigFile) -> CliResult<DataConfig> {
        let delimiter = match file.pick(self.delimiter.clone(), "delimiter")? {
            Some(s) => parse_delimiter(&s)?,
            None => ',',
        };
        let min_target = file.pick(self.min_target, "min_target")?.unwrap_or(DEFAULT_MIN_TARGET);
        if !(min_target > 0.0 && min_target.is_finite()) {
            return Err(CliError::Config(format!("min_target must be positive, got {min_target}")));
        }
        let out_dir = match file.pick(self.out.clone(), "out")? {
            Some(p) => p,
            None => std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        };
        Ok(DataConfig {
            input: self.input.clone(),
            delimiter,
            header: file.pick(self.header, "header")?.unwrap_or(false),
            min_target,
            seed: file.pick(self.seed, "seed")?.unwrap_or(0),
            out_dir,
        })
    }
}

/// Merges flags over the config file and validates mode-specific fields.
/// `forced` pins the mode (the `sweep` command).
pub fn resolve_run(data: &DataArgs, model: &ModelArgs, forced: Option<Mode>) -> CliResult<RunConfig> {
    let file = file_for(data.config.as_deref())?;
    resolve_run_with(&file, data, model, forced)
}

fn resolve_run_with(
    file: &ConfigFile,
    data: &DataArgs,
    model: &ModelArgs,
    forced: Option<Mode>,
) -> CliResult<RunConfig> {
    let data_cfg = data.resolve_with(file)?;
    let mode = match forced {
        Some(m) => m,
        None => file.pick(model.mode, "mode")?.unwrap_or(Mode::Adaptive),
    };
    let hyper = [
        file.pick(model.alpha, "alpha")?,
        file.pick(model.beta, "beta")?,
        file.pick(model.eta, "eta")?,
        file.pick(model.lambda, "lambda")?,
    ];

    let mut swarm = SwarmConfig::default();
    swarm.particles = file.pick(model.particles, "particles")?.unwrap_or(swarm.particles);
    swarm.w = file.pick(model.w, "w")?.unwrap_or(swarm.w);
    swarm.c1 = file.pick(model.c1, "c1")?.unwrap_or(swarm.c1);
    swarm.c2 = file.pick(model.c2, "c2")?.unwrap_or(swarm.c2);
    swarm.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let rank = file.pick(model.f, "f")?.unwrap_or(DEFAULT_RANK);
    if rank == 0 {
        return Err(CliError::Config("f must be at least 1".into()));
    }
    let iota = file.pick(model.iota, "iota")?.unwrap_or(BridgeConfig::default().iota());
    let bridge = BridgeConfig::new(iota).map_err(|e| CliError::Config(e.to_string()))?;

    let default_budget = match mode {
        Mode::Adaptive => ADAPTIVE_MAX_ITERS,
        Mode::Manual | Mode::Sweep => TrainOptions::default().max_epochs,
    };
    let tol = file.pick(model.tol, "tol")?.unwrap_or(TrainOptions::default().tol);
    if tol.is_nan() || tol < 0.0 {
        return Err(CliError::Config(format!("tol must be non-negative, got {tol}")));
    }
    let patience = file.pick(model.patience, "patience")?.unwrap_or(2);
    if patience == 0 {
        return Err(CliError::Config("patience must be at least 1".into()));
    }
    let grid = |flag: &Option<String>, key: &str| -> CliResult<Vec<f64>> {
        match file.pick(flag.clone(), key)? {
            Some(s) => parse_grid(&s, key),
            None => Ok(DEFAULT_GRID.to_vec()),
        }
    };

    let cfg = RunConfig {
        data: data_cfg,
        mode,
        hyper,
        swarm,
        rank,
        bridge,
        max_iters: file.pick(model.max_iters, "max_iters")?.unwrap_or(default_budget),
        tol,
        patience,
        threads: file.pick(model.threads, "threads")?.unwrap_or(0),
        alphas: grid(&model.alphas, "alphas")?,
        betas: grid(&model.betas, "betas")?,
        audit: file.pick(model.audit, "audit")?.unwrap_or(false),
    };
    validate_mode(&cfg)?;
    Ok(cfg)
}

fn validate_mode(cfg: &RunConfig) -> CliResult<()> {
    match cfg.mode {
        Mode::Manual => cfg.manual_hyperparams().map(|_| ()),
        Mode::Sweep => {
            let (eta, lambda) = match (cfg.hyper[2], cfg.hyper[3]) {
                (Some(e), Some(l)) => (e, l),
                _ => return Err(CliError::Config("sweep needs eta and lambda".into())),
            };
            Hyperparams::new(1.0, 1.0, eta, lambda)
                .map(|_| ())
                .map_err(|e| CliError::Config(e.to_string()))
        }
        Mode::Adaptive => {
            let search = &cfg.swarm.search;
            for (d, v) in cfg.hyper.iter().enumerate() {
                if let Some(v) = *v {
                    if !(v >= search.lower[d] && v <= search.upper[d]) {
                        return Err(CliError::Config(format!(
                            "{} = {v} lies outside the search range [{}, {}]",
                            DIM_NAMES[d], search.lower[d], search.upper[d]
                        )));
                    }
                }
            }
            let given = cfg.hyper.iter().filter(|v| v.is_some()).count();
            if given != 0 && given != DIMS {
                return Err(CliError::Config(
                    "adaptive mode takes either all of alpha, beta, eta, lambda (the first \
                     particle's starting point) or none"
                        .into(),
                ));
            }
            Ok(())
        }
    }
}

/// Starting point for the first particle when all four were supplied.
pub fn initial_position(cfg: &RunConfig) -> Option<Hyperparams> {
    match cfg.hyper {
        [Some(a), Some(b), Some(e), Some(l)] => Some(Hyperparams::from_array([a, b, e, l])),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_args() -> DataArgs {
        DataArgs {
            input: PathBuf::from("ratings.csv"),
            config: None,
            delimiter: None,
            header: None,
            min_target: None,
            seed: None,
            out: Some(PathBuf::from("out")),
        }
    }

    fn resolve_text(text: &str, model: &ModelArgs) -> CliResult<RunConfig> {
        resolve_run_with(&ConfigFile::parse(text)?, &data_args(), model, None)
    }

    #[test]
    fn parses_flat_file() {
        let f = ConfigFile::parse("# comment\nalpha = 0.5\nmax-iters=7\n\n").unwrap();
        assert_eq!(f.get::<f64>("alpha").unwrap(), Some(0.5));
        assert_eq!(f.get::<usize>("max_iters").unwrap(), Some(7));
        assert_eq!(f.get::<f64>("beta").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        assert!(matches!(ConfigFile::parse("speed = 3"), Err(CliError::Config(_))));
        assert!(matches!(ConfigFile::parse("f = 3\nf = 4"), Err(CliError::Config(_))));
        assert!(matches!(ConfigFile::parse("just words"), Err(CliError::Config(_))));
    }

    #[test]
    fn flag_overrides_file() {
        let f = ConfigFile::parse("eta = 0.01").unwrap();
        assert_eq!(f.pick(Some(0.02), "eta").unwrap(), Some(0.02));
        assert_eq!(f.pick(None::<f64>, "eta").unwrap(), Some(0.01));
        let bad = ConfigFile::parse("eta = fast").unwrap();
        assert!(bad.pick(None::<f64>, "eta").is_err());
    }

    #[test]
    fn delimiters() {
        assert_eq!(parse_delimiter(",").unwrap(), ',');
        assert_eq!(parse_delimiter("tab").unwrap(), '\t');
        assert_eq!(parse_delimiter("whitespace").unwrap(), ' ');
        assert!(parse_delimiter("::").is_err());
    }

    #[test]
    fn file_values_reach_the_run() {
        let cfg = resolve_text("mode = manual\nalpha=0.5\nbeta=1\neta=0.01\nlambda=0.02\nf=4\nheader=true\ndelimiter=tab", &ModelArgs::default()).unwrap();
        assert_eq!(cfg.mode, Mode::Manual);
        assert_eq!(cfg.rank, 4);
        assert!(cfg.data.header);
        assert_eq!(cfg.data.delimiter, '\t');
        let cli = ModelArgs {
            f: Some(6),
            ..Default::default()
        };
        let cfg = resolve_text("mode = manual\nalpha=0.5\nbeta=1\neta=0.01\nlambda=0.02\nf=4", &cli).unwrap();
        assert_eq!(cfg.rank, 6);
    }

    #[test]
    fn adaptive_defaults() {
        let cfg = resolve_text("", &ModelArgs::default()).unwrap();
        assert_eq!(cfg.mode, Mode::Adaptive);
        assert_eq!(cfg.swarm.particles, 10);
        assert_eq!(cfg.swarm.w, 0.729);
        assert_eq!((cfg.swarm.c1, cfg.swarm.c2), (2.0, 2.0));
        assert_eq!(cfg.rank, 20);
        assert_eq!(cfg.bridge.iota(), 5e-5);
        assert_eq!(cfg.max_iters, 100);
        assert!(initial_position(&cfg).is_none());
    }

    #[test]
    fn adaptive_rejects_eta_outside_box() {
        let model = ModelArgs {
            eta: Some(0.5),
            ..Default::default()
        };
        let err = resolve_run(&data_args(), &model, None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("eta"));
    }

    #[test]
    fn adaptive_full_point_seeds_first_particle() {
        let model = ModelArgs {
            alpha: Some(1.0),
            beta: Some(1.0),
            eta: Some(0.01),
            lambda: Some(0.05),
            ..Default::default()
        };
        let cfg = resolve_run(&data_args(), &model, None).unwrap();
        assert_eq!(initial_position(&cfg), Some(Hyperparams::from_array([1.0, 1.0, 0.01, 0.05])));
        let partial = ModelArgs {
            alpha: Some(1.0),
            ..Default::default()
        };
        assert!(resolve_run(&data_args(), &partial, None).is_err());
    }

    #[test]
    fn manual_needs_all_four() {
        let model = ModelArgs {
            mode: Some(Mode::Manual),
            alpha: Some(1.0),
            beta: Some(1.0),
            eta: Some(0.01),
            ..Default::default()
        };
        assert!(resolve_run(&data_args(), &model, None).is_err());
        let model = ModelArgs {
            lambda: Some(0.0),
            ..model
        };
        let cfg = resolve_run(&data_args(), &model, None).unwrap();
        assert_eq!(cfg.max_iters, 1000);
        assert_eq!(cfg.manual_hyperparams().unwrap(), Hyperparams::from_array([1.0, 1.0, 0.01, 0.0]));
    }

    #[test]
    fn sweep_needs_eta_lambda_and_positive_grid() {
        let model = ModelArgs {
            eta: Some(0.01),
            ..Default::default()
        };
        assert!(resolve_run(&data_args(), &model, Some(Mode::Sweep)).is_err());
        let model = ModelArgs {
            lambda: Some(0.01),
            alphas: Some("1, 0.5".into()),
            ..model
        };
        let cfg = resolve_run(&data_args(), &model, Some(Mode::Sweep)).unwrap();
        assert_eq!(cfg.alphas, vec![1.0, 0.5]);
        assert_eq!(cfg.betas.len(), 5);
        let bad = ModelArgs {
            betas: Some("1,-2".into()),
            ..model
        };
        assert!(resolve_run(&data_args(), &bad, Some(Mode::Sweep)).is_err());
    }

    #[test]
    fn invalid_numbers_are_config_errors() {
        for model in [
            ModelArgs { f: Some(0), ..Default::default() },
            ModelArgs { iota: Some(0.7), ..Default::default() },
            ModelArgs { tol: Some(-1.0), ..Default::default() },
            ModelArgs { particles: Some(1), ..Default::default() },
        ] {
            let err = resolve_run(&data_args(), &model, None).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{err}");
        }
    }
}
