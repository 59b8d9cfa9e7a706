//! Class-prior estimation from complementary labels.
//!
//! Each class is treated as a mixture-proportion problem with the roles of
//! positive and negative interchanged: the rows flagged with class k form
//! a sample of the known component (data not in class k), and the
//! unflagged rows form the mixture. A positive-versus-unlabeled scorer is
//! trained to separate the two samples, and the best-bin estimator reads
//! the mixture proportion off the validation score distributions. The
//! component weight `theta_k` then recovers `1 - pi_k` through
//! `1 - pi_k = pi_bar_k + theta_k * (1 - pi_bar_k)`, and the recovered
//! priors are normalized onto the simplex.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::data::{
    complementary_priors, decompose, split, ClassPriors, ComplementaryDataset,
};
use crate::error::{Error, Result};
use crate::model::{adam_step, AdamState, ModelParams};
use crate::risk::logistic_loss;
use crate::rng::indexed_stream_rng;

/// Optimizer settings for the positive-versus-unlabeled scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct PvuTrain {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for PvuTrain {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 256,
            lr: 1e-3,
            weight_decay: 1e-5,
        }
    }
}

/// Which sample plays the mixture for class k.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureSource {
    /// The unflagged rows. The estimator returns the component weight
    /// inside their conditional, and `1 - pi_k` is recovered from it.
    Unlabeled,
    /// All rows. The estimator then returns `1 - pi_k` directly.
    All,
}

/// Estimation hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BbeConfig {
    /// Confidence-penalty multiplier in the bin-selection objective.
    pub gamma: f64,
    /// Confidence level of the penalty term.
    pub delta: f64,
    /// Fraction of rows used to train the scorer; the rest are scored.
    pub split_fraction: f64,
    pub mixture: MixtureSource,
    /// Hidden widths of the scorer.
    pub pvu_hidden: Vec<usize>,
    pub pvu_train: PvuTrain,
}

impl Default for BbeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            delta: 0.1,
            split_fraction: 0.8,
            mixture: MixtureSource::Unlabeled,
            pvu_hidden: vec![64, 64],
            pvu_train: PvuTrain::default(),
        }
    }
}

impl BbeConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "split fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        if self.pvu_train.epochs == 0 || self.pvu_train.batch_size == 0 {
            return Err(Error::invalid("scorer training needs epochs, batch_size >= 1"));
        }
        Ok(())
    }
}

/// Binary scorer with outputs squashed to [0, 1].
#[derive(Debug, Clone)]
pub struct PvuScorer {
    params: ModelParams,
}

impl PvuScorer {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Sigmoid scores for a batch.
    pub fn scores(&self, x: &ArrayView2<f64>) -> Result<Vec<f64>> {
        let raw = self.params.forward(x)?;
        Ok(raw
            .column(0)
            .iter()
            .map(|&z| 1.0 / (1.0 + (-z).exp()))
            .collect())
    }
}

/// Trains a scorer to separate the component sample (target 1) from the
/// mixture sample (target 0) with the logistic loss. Deterministic per
/// seed.
pub fn train_pvu(
    component: &ArrayView2<f64>,
    mixture: &ArrayView2<f64>,
    config: &BbeConfig,
    seed: u64,
) -> Result<PvuScorer> {
    config.validate()?;
    if component.nrows() == 0 || mixture.nrows() == 0 {
        return Err(Error::invalid(
            "both the component and the mixture sample must be non-empty",
        ));
    }
    if component.ncols() != mixture.ncols() || component.ncols() == 0 {
        return Err(Error::invalid(format!(
            "component ({}) and mixture ({}) feature dimensions disagree",
            component.ncols(),
            mixture.ncols()
        )));
    }
    let d = component.ncols();
    let n = component.nrows() + mixture.nrows();

    let mut features = Array2::zeros((n, d));
    let mut targets = Vec::with_capacity(n);
    for (i, row) in component.rows().into_iter().enumerate() {
        features.row_mut(i).assign(&row);
        targets.push(1.0);
    }
    for (i, row) in mixture.rows().into_iter().enumerate() {
        features.row_mut(component.nrows() + i).assign(&row);
        targets.push(-1.0);
    }

    let mut dims = vec![d];
    dims.extend_from_slice(&config.pvu_hidden);
    dims.push(1);
    let mut params = ModelParams::init(dims, seed ^ 0x7075_7655)?;
    let mut adam = AdamState::new(params.len(), config.pvu_train.lr, config.pvu_train.weight_decay);

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.pvu_train.epochs {
        order.shuffle(&mut indexed_stream_rng(seed, "pvu-shuffle", epoch as u64));
        for chunk in order.chunks(config.pvu_train.batch_size) {
            let batch_x = features.select(Axis(0), chunk);
            let batch_t: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let (_, grad) = params.objective_grad(&batch_x.view(), |scores| {
                let m = scores.nrows();
                let scale = 1.0 / m as f64;
                let mut value = 0.0;
                let mut d_scores = Array2::zeros(scores.dim());
                for i in 0..m {
                    let t = batch_t[i];
                    let (loss, deriv) = logistic_loss(t * scores[(i, 0)]);
                    value += scale * loss;
                    d_scores[(i, 0)] = scale * t * deriv;
                }
                Ok((value, d_scores))
            })?;
            adam_step(&mut adam, &mut params, &grad)?;
        }
    }
    Ok(PvuScorer { params })
}

/// Fraction of scores at or above `z`.
pub fn empirical_upper_cdf(scores: &[f64], z: f64) -> f64 {
    assert!(!scores.is_empty(), "upper cdf of an empty score set");
    scores.iter().filter(|&&s| s >= z).count() as f64 / scores.len() as f64
}

/// Best-bin mixture-proportion estimate from component scores `z_p` and
/// mixture scores `z_u`. The threshold is chosen over the observed score
/// grid by minimizing the upper confidence bound
///
/// ```text
/// qU(z)/qP(z) + (1 + gamma)/qP(z) * (sqrt(ln(4/delta)/(2 nP)) + sqrt(ln(4/delta)/(2 nU)))
/// ```
///
/// and the estimate is `qU(z)/qP(z)` there, clipped to [0, 1].
pub fn bbe_theta(z_p: &[f64], z_u: &[f64], gamma: f64, delta: f64) -> Result<f64> {
    if z_p.is_empty() || z_u.is_empty() {
        return Err(Error::invalid("both score sets must be non-empty"));
    }
    if !(gamma >= 0.0) {
        return Err(Error::invalid(format!("gamma must be non-negative, got {gamma}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    let mut grid: Vec<f64> = z_p.iter().chain(z_u).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let n_p = z_p.len() as f64;
    let n_u = z_u.len() as f64;
    let spread = (4.0 / delta).ln();
    let penalty = (1.0 + gamma) * ((spread / (2.0 * n_p)).sqrt() + (spread / (2.0 * n_u)).sqrt());

    let mut best: Option<(f64, f64)> = None;
    for &z in &grid {
        let q_p = empirical_upper_cdf(z_p, z);
        if q_p == 0.0 {
            continue;
        }
        let ratio = empirical_upper_cdf(z_u, z) / q_p;
        let objective = ratio + penalty / q_p;
        match best {
            Some((obj, _)) if obj <= objective => {}
            _ => best = Some((objective, ratio)),
        }
    }
    let (_, ratio) = best.ok_or_else(|| {
        Error::invalid("no admissible threshold: the component never scores at any grid point")
    })?;
    Ok(ratio.clamp(0.0, 1.0))
}

/// `1 - pi_k` recovered from the component weight of the unflagged-rows
/// mixture.
pub fn recover_one_minus_pi(theta: f64, pi_bar: f64) -> f64 {
    pi_bar + theta * (1.0 - pi_bar)
}

/// Per-class estimates before simplex normalization, kept for inspection.
#[derive(Debug, Clone)]
pub struct PriorEstimate {
    pub theta: Vec<f64>,
    pub raw_pi: Vec<f64>,
    pub priors: ClassPriors,
}

/// Estimates class priors from a complementary-label dataset: split, train
/// one scorer per class on the training part, run the best-bin estimator
/// on the validation scores, recover each prior, and normalize. The
/// returned `pi_bar` is the empirical flag fraction of the full dataset.
pub fn estimate_priors(
    cds: &ComplementaryDataset,
    config: &BbeConfig,
    seed: u64,
) -> Result<ClassPriors> {
    Ok(estimate_priors_detailed(cds, config, seed)?.priors)
}

/// [`estimate_priors`] with the per-class intermediates.
pub fn estimate_priors_detailed(
    cds: &ComplementaryDataset,
    config: &BbeConfig,
    seed: u64,
) -> Result<PriorEstimate> {
    config.validate()?;
    let q = cds.class_count();
    let pi_bar = complementary_priors(cds);

    let (train, val) = split(cds, config.split_fraction, seed)?;
    let train_decomp = decompose(&train);
    let val_decomp = decompose(&val);

    let mut theta = Vec::with_capacity(q);
    let mut raw_pi = Vec::with_capacity(q);
    for k in 0..q {
        if train_decomp.neg_count(k) == 0 {
            return Err(Error::invalid(format!(
                "class {}: no flagged examples in the training split",
                k + 1
            )));
        }
        if val_decomp.neg_count(k) == 0 {
            return Err(Error::invalid(format!(
                "class {}: no flagged examples in the validation split",
                k + 1
            )));
        }
        if train_decomp.unl_count(k) == 0 || val_decomp.unl_count(k) == 0 {
            return Err(Error::invalid(format!(
                "class {}: every example is flagged; the mixture sample is empty",
                k + 1
            )));
        }

        let component = train.features().select(Axis(0), train_decomp.neg(k));
        let mixture = match config.mixture {
            MixtureSource::Unlabeled => train.features().select(Axis(0), train_decomp.unl(k)),
            MixtureSource::All => train.features().clone(),
        };
        let scorer = train_pvu(
            &component.view(),
            &mixture.view(),
            config,
            seed.wrapping_add(k as u64),
        )?;

        let val_component = val.features().select(Axis(0), val_decomp.neg(k));
        let z_p = scorer.scores(&val_component.view())?;
        let z_u = match config.mixture {
            MixtureSource::Unlabeled => {
                let val_mixture = val.features().select(Axis(0), val_decomp.unl(k));
                scorer.scores(&val_mixture.view())?
            }
            MixtureSource::All => scorer.scores(&val.features().view())?,
        };
        let theta_k = bbe_theta(&z_p, &z_u, config.gamma, config.delta)?;
        theta.push(theta_k);

        let one_minus_pi = match config.mixture {
            MixtureSource::Unlabeled => recover_one_minus_pi(theta_k, pi_bar[k]),
            MixtureSource::All => theta_k,
        };
        raw_pi.push((1.0 - one_minus_pi).clamp(0.0, 1.0));
    }

    let total: f64 = raw_pi.iter().sum();
    let pi: Vec<f64> = if total > 0.0 {
        raw_pi.iter().map(|&p| p / total).collect()
    } else {
        // Every estimate degenerated to zero; fall back to uniform.
        vec![1.0 / q as f64; q]
    };

    // Normalization can push an estimate past 1 - pi_bar_k, a pair no
    // generation process produces; project pi_bar down to keep the priors
    // mutually consistent.
    let pi_bar_consistent: Vec<f64> = pi_bar
        .iter()
        .zip(&pi)
        .map(|(&pb, &p)| pb.min((1.0 - p).max(0.0)))
        .collect();
    let priors = ClassPriors::new(pi, pi_bar_consistent)?;
    Ok(PriorEstimate {
        theta,
        raw_pi,
        priors,
    })
}
