//! Experiment configuration and the method x setting evaluation grid.
//!
//! Configs are flat `key=value` text files; `#` starts a comment and blank
//! lines are skipped. Every key can be overridden on the command line with
//! repeated `--set key=value` flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{builtin_transition, make_gaussian_mixture, OrdinaryDataset, TransitionSpec};
use crate::error::{Error, Result};
use crate::io::{read_ordinary_csv, write_results_csv, write_summary_csv};
use crate::model::{Arch, ModelConfig};
use crate::priors::BbeConfig;
use crate::train::{mean_std, run_trials, Method, PriorsSource, TrainConfig};

/// Everything one evaluation run needs: the data source, the transition
/// settings, the methods, the model and optimizer, the priors source, and
/// the seed protocol.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data_csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    pub classes: usize,
    pub n_per_class: usize,
    pub test_n_per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub transitions: Vec<String>,
    pub methods: Vec<Method>,
    pub arch: Arch,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub priors_source: String,
    pub priors_sigma: f64,
    pub seed: u64,
    pub seeds: usize,
    pub jobs: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_csv: None,
            test_csv: None,
            classes: 4,
            n_per_class: 1000,
            test_n_per_class: 500,
            dim: 2,
            separation: 6.0,
            transitions: vec!["uniform".into()],
            methods: vec![Method::Nu(crate::risk::Correction::Abs)],
            arch: Arch::Mlp { hidden: vec![64] },
            epochs: 200,
            batch_size: 256,
            lr: 1e-3,
            weight_decay: 1e-5,
            priors_source: "given".into(),
            priors_sigma: 0.0,
            seed: 1,
            seeds: 5,
            jobs: 1,
            out_dir: PathBuf::from("results"),
        }
    }
}

fn parse_pairs(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected key=value, got '{line}'"),
            });
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Parses a comma-separated hidden-width list; "none" selects the linear
/// model.
pub fn parse_arch(hidden: &str) -> Result<Arch> {
    if hidden == "none" || hidden == "linear" {
        return Ok(Arch::Linear);
    }
    let widths: Vec<usize> = hidden
        .split(',')
        .map(|w| {
            w.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("hidden width '{w}' is not an integer")))
        })
        .collect::<Result<_>>()?;
    if widths.is_empty() {
        return Err(Error::invalid("hidden width list is empty"));
    }
    Ok(Arch::Mlp { hidden: widths })
}

impl ExperimentConfig {
    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut pairs = parse_pairs(&text, path)?;
        pairs.extend(overrides.iter().cloned());
        let mut config = ExperimentConfig::default();
        for (key, value) in &pairs {
            config.apply(key, value)?;
        }
        Ok(config)
    }

    pub fn from_pairs(overrides: &[(String, String)]) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (key, value) in overrides {
            config.apply(key, value)?;
        }
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad_num = |k: &str, v: &str| Error::invalid(format!("{k}: '{v}' is not a number"));
        match key {
            "data.csv" => self.data_csv = Some(PathBuf::from(value)),
            "data.test_csv" => self.test_csv = Some(PathBuf::from(value)),
            "data.q" => self.classes = value.parse().map_err(|_| bad_num(key, value))?,
            "data.n_per_class" => {
                self.n_per_class = value.parse().map_err(|_| bad_num(key, value))?
            }
            "data.test_n_per_class" => {
                self.test_n_per_class = value.parse().map_err(|_| bad_num(key, value))?
            }
            "data.dim" => self.dim = value.parse().map_err(|_| bad_num(key, value))?,
            "data.separation" => {
                self.separation = value.parse().map_err(|_| bad_num(key, value))?
            }
            "transitions" => {
                self.transitions = value.split(',').map(|s| s.trim().to_string()).collect()
            }
            "methods" => {
                self.methods = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?
            }
            "model.hidden" => self.arch = parse_arch(value)?,
            "train.epochs" => self.epochs = value.parse().map_err(|_| bad_num(key, value))?,
            "train.batch_size" => {
                self.batch_size = value.parse().map_err(|_| bad_num(key, value))?
            }
            "train.lr" => self.lr = value.parse().map_err(|_| bad_num(key, value))?,
            "train.weight_decay" => {
                self.weight_decay = value.parse().map_err(|_| bad_num(key, value))?
            }
            "priors.source" => {
                if !matches!(value, "given" | "estimated" | "corrupted") {
                    return Err(Error::invalid(format!(
                        "priors.source must be given, estimated, or corrupted; got '{value}'"
                    )));
                }
                self.priors_source = value.to_string();
            }
            "priors.sigma" => {
                self.priors_sigma = value.parse().map_err(|_| bad_num(key, value))?
            }
            "seed" => self.seed = value.parse().map_err(|_| bad_num(key, value))?,
            "seeds" => self.seeds = value.parse().map_err(|_| bad_num(key, value))?,
            "jobs" => self.jobs = value.parse().map_err(|_| bad_num(key, value))?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::invalid(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    fn load_data(&self) -> Result<(OrdinaryDataset, OrdinaryDataset)> {
        match &self.data_csv {
            Some(path) => {
                let train = read_ordinary_csv(path, Some(self.classes))?;
                let test_path = self.test_csv.as_ref().ok_or_else(|| {
                    Error::invalid("data.test_csv is required when data.csv is set")
                })?;
                let test = read_ordinary_csv(test_path, Some(self.classes))?;
                Ok((train, test))
            }
            None => {
                let train = make_gaussian_mixture(
                    self.classes,
                    self.n_per_class,
                    self.dim,
                    self.separation,
                    self.seed,
                )?;
                let test = make_gaussian_mixture(
                    self.classes,
                    self.test_n_per_class,
                    self.dim,
                    self.separation,
                    self.seed.wrapping_add(0x5eed),
                )?;
                Ok((train, test))
            }
        }
    }

    fn priors_source(&self) -> PriorsSource {
        match self.priors_source.as_str() {
            "estimated" => PriorsSource::Estimated(BbeConfig::default()),
            "corrupted" => PriorsSource::Corrupted {
                sigma: self.priors_sigma,
            },
            _ => PriorsSource::True,
        }
    }

    /// Runs the full method x setting grid and writes `results.csv`
    /// (per-seed accuracies) and `summary.csv` (mean and standard
    /// deviation) into the output directory.
    pub fn run(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::invalid("seeds must be at least 1"));
        }
        let (train, test) = self.load_data()?;
        let model = ModelConfig {
            arch: self.arch.clone(),
            input_dim: train.dim(),
            output_dim: train.class_count(),
        };
        let base = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            record_curves: false,
            ..TrainConfig::default()
        };
        let seeds: Vec<u64> = (0..self.seeds as u64).map(|i| self.seed + i).collect();
        let priors_source = self.priors_source();

        let mut rows = Vec::new();
        let mut summary = Vec::new();
        for setting in &self.transitions {
            let transition = self.resolve_transition(setting, &train)?;
            for &method in &self.methods {
                let accs = run_trials(
                    &train,
                    &test,
                    &transition,
                    method,
                    &priors_source,
                    &model,
                    &base,
                    &seeds,
                    self.jobs,
                )?;
                for (seed, acc) in seeds.iter().zip(&accs) {
                    rows.push((method.name().to_string(), setting.clone(), *seed, *acc));
                }
                let (mean, std) = mean_std(&accs);
                summary.push((method.name().to_string(), setting.clone(), mean, std));
            }
        }
        fs::create_dir_all(&self.out_dir)?;
        write_results_csv(&self.out_dir.join("results.csv"), &rows)?;
        write_summary_csv(&self.out_dir.join("summary.csv"), &summary)?;
        Ok(())
    }

    fn resolve_transition(&self, name: &str, train: &OrdinaryDataset) -> Result<TransitionSpec> {
        if let Some(list) = name.strip_prefix("scar-independent:") {
            return TransitionSpec::scar_independent(parse_prob_list(list)?);
        }
        if let Some(list) = name.strip_prefix("scar-single:") {
            return TransitionSpec::scar_single(parse_prob_list(list)?);
        }
        builtin_transition(name, &train.empirical_priors())
    }
}

/// Writes the default config with every key spelled out, as a starting
/// point for edits.
pub fn write_default_config(path: &Path) -> Result<()> {
    let config = ExperimentConfig::default();
    let mut map = BTreeMap::new();
    map.insert("data.q", config.classes.to_string());
    map.insert("data.n_per_class", config.n_per_class.to_string());
    map.insert("data.test_n_per_class", config.test_n_per_class.to_string());
    map.insert("data.dim", config.dim.to_string());
    map.insert("data.separation", config.separation.to_string());
    map.insert("transitions", config.transitions.join(","));
    map.insert("methods", "conu,ure,supervised".to_string());
    map.insert("model.hidden", "64".to_string());
    map.insert("train.epochs", config.epochs.to_string());
    map.insert("train.batch_size", config.batch_size.to_string());
    map.insert("train.lr", config.lr.to_string());
    map.insert("train.weight_decay", config.weight_decay.to_string());
    map.insert("priors.source", config.priors_source.clone());
    map.insert("priors.sigma", config.priors_sigma.to_string());
    map.insert("seed", config.seed.to_string());
    map.insert("seeds", config.seeds.to_string());
    map.insert("jobs", config.jobs.to_string());
    map.insert("out_dir", config.out_dir.display().to_string());
    let mut text = String::from("# experiment configuration (key=value)\n");
    for (key, value) in map {
        text.push_str(&format!("{key}={value}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

fn parse_prob_list(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("flag probability '{v}' is not a number")))
        })
        .collect()
}
