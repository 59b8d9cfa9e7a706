//! Training loops: the corrected/unbiased negative-unlabeled trainer, the
//! supervised one-versus-rest baseline, prediction, and the multi-seed
//! evaluation protocol.

use ndarray::Axis;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::{
    corrupt_priors, gen_complementary, true_priors, BinaryDecomposition, ClassPriors,
    ComplementaryDataset, OrdinaryDataset, TransitionSpec,
};
use crate::error::{Error, Result};
use crate::model::{adam_step, AdamState, ModelConfig, ModelParams};
use crate::priors::{estimate_priors, BbeConfig};
use crate::risk::{corrected_risk, ovr_empirical_risk, Correction, RiskSpec};
use crate::rng::indexed_stream_rng;

/// Optimizer and loop settings shared by both trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub correction: Correction,
    /// When false the per-epoch full-train risk is skipped (the test
    /// accuracy series is always recorded).
    pub record_curves: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            lr: 1e-3,
            weight_decay: 1e-5,
            seed: 0,
            correction: Correction::Abs,
            record_curves: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Per-epoch series: full-train risk at epoch end and test accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_risk: Vec<f64>,
    pub test_acc: Vec<f64>,
}

impl TrainReport {
    /// Mean test accuracy over the last `window` epochs (or all of them if
    /// fewer were run).
    pub fn tail_accuracy(&self, window: usize) -> f64 {
        let take = window.min(self.test_acc.len()).max(1);
        let tail = &self.test_acc[self.test_acc.len() - take..];
        tail.iter().sum::<f64>() / take as f64
    }
}

/// Trains the one-versus-rest scorer on complementary labels by minimizing
/// the corrected risk per mini-batch (the unbiased estimator when the
/// correction is `Identity`). Each epoch shuffles the rows with a stream
/// derived from `(seed, epoch)`; the recorded train risk is the
/// full-dataset risk at epoch end, not a running batch average.
pub fn train_conu(
    cds: &ComplementaryDataset,
    priors: &ClassPriors,
    model_config: &ModelConfig,
    config: &TrainConfig,
    test: &OrdinaryDataset,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    let q = cds.class_count();
    if priors.class_count() != q {
        return Err(Error::invalid(format!(
            "priors cover {} classes but the dataset has {q}",
            priors.class_count()
        )));
    }
    if model_config.output_dim != q || model_config.input_dim != cds.dim() {
        return Err(Error::invalid(format!(
            "model is {}x{} but the dataset needs {}x{q}",
            model_config.input_dim, model_config.output_dim,
            cds.dim()
        )));
    }
    if test.dim() != cds.dim() {
        return Err(Error::invalid(format!(
            "test features have dimension {} but training data has {}",
            test.dim(),
            cds.dim()
        )));
    }

    let spec = RiskSpec::new(config.correction, priors.clone());
    let full_decomp = BinaryDecomposition::from_bits(cds.comp_labels());
    let mut params = model_config.init_params(config.seed)?;
    let mut adam = AdamState::new(params.len(), config.lr, config.weight_decay);
    let mut report = TrainReport {
        train_risk: Vec::new(),
        test_acc: Vec::with_capacity(config.epochs),
    };

    let n = cds.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut indexed_stream_rng(config.seed, "shuffle", epoch as u64));
        for chunk in order.chunks(config.batch_size) {
            let batch_x = cds.features().select(Axis(0), chunk);
            let decomp = BinaryDecomposition::from_bit_rows(cds.comp_labels(), chunk);
            let (_, grad) = params.risk_and_grad(&batch_x.view(), &decomp, &spec)?;
            adam_step(&mut adam, &mut params, &grad)?;
        }
        if config.record_curves {
            let scores = params.forward(&cds.features().view())?;
            report.train_risk.push(corrected_risk(
                &scores.view(),
                &full_decomp,
                priors,
                config.correction,
            )?);
        }
        report.test_acc.push(accuracy(&params, test)?);
    }
    Ok((params, report))
}

/// Supervised one-versus-rest baseline on ordinary labels, same loop
/// structure as [`train_conu`].
pub fn train_supervised(
    ds: &OrdinaryDataset,
    model_config: &ModelConfig,
    config: &TrainConfig,
    test: &OrdinaryDataset,
) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    let q = ds.class_count();
    if model_config.output_dim != q || model_config.input_dim != ds.dim() {
        return Err(Error::invalid(format!(
            "model is {}x{} but the dataset needs {}x{q}",
            model_config.input_dim, model_config.output_dim,
            ds.dim()
        )));
    }
    if test.dim() != ds.dim() {
        return Err(Error::invalid(format!(
            "test features have dimension {} but training data has {}",
            test.dim(),
            ds.dim()
        )));
    }

    let mut params = model_config.init_params(config.seed)?;
    let mut adam = AdamState::new(params.len(), config.lr, config.weight_decay);
    let mut report = TrainReport {
        train_risk: Vec::new(),
        test_acc: Vec::with_capacity(config.epochs),
    };

    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut indexed_stream_rng(config.seed, "shuffle", epoch as u64));
        for chunk in order.chunks(config.batch_size) {
            let batch_x = ds.features().select(Axis(0), chunk);
            let batch_y: Vec<usize> = chunk.iter().map(|&i| ds.labels()[i]).collect();
            let (_, grad) = params.supervised_risk_and_grad(&batch_x.view(), &batch_y)?;
            adam_step(&mut adam, &mut params, &grad)?;
        }
        if config.record_curves {
            let scores = params.forward(&ds.features().view())?;
            report
                .train_risk
                .push(ovr_empirical_risk(&scores.view(), ds.labels())?);
        }
        report.test_acc.push(accuracy(&params, test)?);
    }
    Ok((params, report))
}

/// Argmax over score columns, ties broken toward the smallest class index.
pub fn predict(params: &ModelParams, x: &ndarray::ArrayView2<f64>) -> Result<Vec<usize>> {
    let scores = params.forward(x)?;
    Ok(scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_score = row[0];
            for (k, &s) in row.iter().enumerate().skip(1) {
                if s > best_score {
                    best = k;
                    best_score = s;
                }
            }
            best
        })
        .collect())
}

/// Fraction of test rows predicted correctly.
pub fn accuracy(params: &ModelParams, test: &OrdinaryDataset) -> Result<f64> {
    let predictions = predict(params, &test.features().view())?;
    let correct = predictions
        .iter()
        .zip(test.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// How a trial obtains the priors fed to the risk.
#[derive(Debug, Clone)]
pub enum PriorsSource {
    /// Exact priors implied by the data's class frequencies and the
    /// transition spec.
    True,
    /// A fixed vector supplied by the caller.
    Given(ClassPriors),
    /// Estimated from the trial's complementary labels.
    Estimated(BbeConfig),
    /// Exact priors perturbed multiplicatively with the given sigma.
    Corrupted { sigma: f64 },
}

/// What a trial trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Negative-unlabeled training with the given correction.
    Nu(Correction),
    /// Fully supervised baseline on the ordinary labels.
    Supervised,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nu(Correction::Abs) => "conu",
            Method::Nu(Correction::Relu) => "conu-relu",
            Method::Nu(Correction::Identity) => "ure",
            Method::Supervised => "supervised",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conu" => Ok(Method::Nu(Correction::Abs)),
            "conu-relu" => Ok(Method::Nu(Correction::Relu)),
            "ure" => Ok(Method::Nu(Correction::Identity)),
            "supervised" => Ok(Method::Supervised),
            other => Err(Error::invalid(format!(
                "unknown method '{other}'; expected conu, conu-relu, ure, or supervised"
            ))),
        }
    }
}

/// Number of trailing epochs averaged into a trial's accuracy.
pub const ACCURACY_WINDOW: usize = 10;

/// One experiment cell: a fixed feature sample evaluated over several
/// seeds. Each seed redraws the complementary labels and the parameter
/// initialization; the trial accuracy is the mean test accuracy over the
/// last [`ACCURACY_WINDOW`] epochs.
pub fn run_trials(
    ds: &OrdinaryDataset,
    test: &OrdinaryDataset,
    transition: &TransitionSpec,
    method: Method,
    priors_source: &PriorsSource,
    model_config: &ModelConfig,
    base_config: &TrainConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<f64>> {
    if seeds.is_empty() {
        return Err(Error::invalid("need at least one seed"));
    }
    let run_one = |&seed: &u64| -> Result<f64> {
        let mut config = base_config.clone();
        config.seed = seed;
        let report = match method {
            Method::Supervised => train_supervised(ds, model_config, &config, test)?.1,
            Method::Nu(correction) => {
                config.correction = correction;
                let cds = gen_complementary(ds, transition, seed)?;
                let priors = resolve_priors(ds, &cds, transition, priors_source, seed)?;
                train_conu(&cds, &priors, model_config, &config, test)?.1
            }
        };
        Ok(report.tail_accuracy(ACCURACY_WINDOW))
    };
    if jobs <= 1 {
        seeds.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid(format!("failed to build thread pool: {e}")))?;
        pool.install(|| seeds.par_iter().map(run_one).collect())
    }
}

fn resolve_priors(
    ds: &OrdinaryDataset,
    cds: &ComplementaryDataset,
    transition: &TransitionSpec,
    source: &PriorsSource,
    seed: u64,
) -> Result<ClassPriors> {
    match source {
        PriorsSource::True => true_priors(&ds.empirical_priors(), transition),
        PriorsSource::Given(priors) => Ok(priors.clone()),
        PriorsSource::Estimated(config) => estimate_priors(cds, config, seed),
        PriorsSource::Corrupted { sigma } => {
            let exact = true_priors(&ds.empirical_priors(), transition)?;
            corrupt_priors(&exact, *sigma, seed)
        }
    }
}

/// Mean and sample standard deviation; a single value has deviation 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    assert!(n > 0, "mean of an empty slice");
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
