//! Binary losses, the one-versus-rest risk, negative-unlabeled risk
//! estimators, and an exact finite-distribution oracle.
//!
//! For class k with prior `pi_k` and complementary-label marginal
//! `pi_bar_k`, the flagged rows N_k and the remaining rows U_k of a batch
//! define the positive-part statistic
//!
//! ```text
//! P_k = (pi_bar_k + pi_k - 1) * mean_N loss(f_k) + (1 - pi_bar_k) * mean_U loss(f_k)
//! ```
//!
//! whose expectation is the non-negative quantity
//! `pi_k * E[loss(f_k) | y = k]`, although the statistic itself can go
//! negative. The unbiased estimator of the one-versus-rest risk sums
//! `P_k + (1 - pi_k) * mean_N loss(-f_k)` over classes; the corrected
//! estimator wraps `P_k` in a non-negative correction function first.

use ndarray::{Array2, ArrayView2};

use crate::data::{BinaryDecomposition, ClassPriors, OrdinaryDataset};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Logistic loss `ln(1 + exp(-z))` and its derivative `-sigmoid(-z)`,
/// both computed in overflow-safe form.
pub fn logistic_loss(z: f64) -> (f64, f64) {
    let value = if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    };
    let derivative = if z >= 0.0 {
        -(-z).exp() / (1.0 + (-z).exp())
    } else {
        -1.0 / (1.0 + z.exp())
    };
    (value, derivative)
}

/// Non-negative correction wrapped around the positive-part statistic.
/// `Identity` leaves the statistic untouched and recovers the unbiased
/// estimator exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correction {
    Abs,
    Relu,
    Identity,
}

impl Correction {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Correction::Abs => z.abs(),
            Correction::Relu => z.max(0.0),
            Correction::Identity => z,
        }
    }

    /// Subgradient, fixed to the right derivative at the kink so that ties
    /// are deterministic: `d|z| = 1` and `d relu(z) = 1` at z = 0.
    pub fn subgrad(self, z: f64) -> f64 {
        match self {
            Correction::Abs => {
                if z < 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
            Correction::Relu => {
                if z < 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            Correction::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Correction::Abs => "abs",
            Correction::Relu => "relu",
            Correction::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" => Ok(Correction::Abs),
            "relu" => Ok(Correction::Relu),
            "identity" => Ok(Correction::Identity),
            other => Err(Error::invalid(format!(
                "unknown correction '{other}'; expected abs, relu, or identity"
            ))),
        }
    }
}

/// Everything needed to evaluate the negative-unlabeled risk of a batch.
#[derive(Debug, Clone)]
pub struct RiskSpec {
    pub correction: Correction,
    pub priors: ClassPriors,
}

impl RiskSpec {
    pub fn new(correction: Correction, priors: ClassPriors) -> Self {
        Self {
            correction,
            priors,
        }
    }
}

/// Empirical one-versus-rest risk of fully labeled data:
/// `mean_i [ loss(f_{y_i}(x_i)) + sum_{k != y_i} loss(-f_k(x_i)) ]`.
pub fn ovr_empirical_risk(scores: &ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    Ok(ovr_risk_grad(scores, labels)?.0)
}

/// One-versus-rest risk together with its gradient in the scores.
pub fn ovr_risk_grad(scores: &ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, q) = scores.dim();
    if n == 0 {
        return Err(Error::invalid("cannot evaluate the risk of an empty batch"));
    }
    if labels.len() != n {
        return Err(Error::invalid(format!(
            "scores have {n} rows but {} labels were given",
            labels.len()
        )));
    }
    let scale = 1.0 / n as f64;
    let mut risk = 0.0;
    let mut grad = Array2::zeros((n, q));
    for (i, &y) in labels.iter().enumerate() {
        if y >= q {
            return Err(Error::invalid(format!(
                "label {} out of range for {q} classes",
                y + 1
            )));
        }
        for k in 0..q {
            let s = scores[(i, k)];
            if k == y {
                let (value, deriv) = logistic_loss(s);
                risk += scale * value;
                grad[(i, k)] += scale * deriv;
            } else {
                let (value, deriv) = logistic_loss(-s);
                risk += scale * value;
                grad[(i, k)] -= scale * deriv;
            }
        }
    }
    Ok((risk, grad))
}

fn check_decomposition(
    scores: &ArrayView2<f64>,
    decomp: &BinaryDecomposition,
    priors: &ClassPriors,
) -> Result<()> {
    let (n, q) = scores.dim();
    if decomp.class_count() != q || priors.class_count() != q {
        return Err(Error::invalid(format!(
            "scores have {q} columns but the decomposition covers {} classes and the priors {}",
            decomp.class_count(),
            priors.class_count()
        )));
    }
    if decomp.row_count() != n {
        return Err(Error::invalid(format!(
            "scores have {n} rows but the decomposition covers {}",
            decomp.row_count()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("cannot evaluate the risk of an empty batch"));
    }
    Ok(())
}

/// Positive-part statistic of class k. When a batch has no flagged (or no
/// unflagged) rows for k, the corresponding term is dropped; a class with
/// both sides empty is an error.
pub fn positive_part(
    scores: &ArrayView2<f64>,
    decomp: &BinaryDecomposition,
    priors: &ClassPriors,
    k: usize,
) -> Result<f64> {
    check_decomposition(scores, decomp, priors)?;
    positive_part_unchecked(scores, decomp, priors, k)
}

fn positive_part_unchecked(
    scores: &ArrayView2<f64>,
    decomp: &BinaryDecomposition,
    priors: &ClassPriors,
    k: usize,
) -> Result<f64> {
    let neg = decomp.neg(k);
    let unl = decomp.unl(k);
    if neg.is_empty() && unl.is_empty() {
        return Err(Error::invalid(format!(
            "class {}: batch has neither flagged nor unlabeled rows",
            k + 1
        )));
    }
    let neg_coeff = priors.pi_bar()[k] + priors.pi()[k] - 1.0;
    let unl_coeff = 1.0 - priors.pi_bar()[k];
    let mut value = 0.0;
    if !neg.is_empty() {
        let mean: f64 = neg
            .iter()
            .map(|&i| logistic_loss(scores[(i, k)]).0)
            .sum::<f64>()
            / neg.len() as f64;
        value += neg_coeff * mean;
    }
    if !unl.is_empty() {
        let mean: f64 = unl
            .iter()
            .map(|&i| logistic_loss(scores[(i, k)]).0)
            .sum::<f64>()
            / unl.len() as f64;
        value += unl_coeff * mean;
    }
    Ok(value)
}

/// Unbiased negative-unlabeled estimate of the one-versus-rest risk.
pub fn ure_risk(
    scores: &ArrayView2<f64>,
    decomp: &BinaryDecomposition,
    priors: &ClassPriors,
) -> Result<f64> {
    corrected_risk(scores, decomp, priors, Correction::Identity)
}

/// Corrected estimate: each class contributes
/// `g(P_k) + (1 - pi_k) * mean_N loss(-f_k)`.
pub fn corrected_risk(
    scores: &ArrayView2<f64>,
    decomp: &BinaryDecomposition,
    priors: &ClassPriors,
    correction: Correction,
) -> Result<f64> {
    check_decomposition(scores, decomp, priors)?;
    let q = scores.ncols();
    let mut total = 0.0;
    for k in 0..q {
        let pp = positive_part_unchecked(scores, decomp, priors, k)?;
        total += correction.apply(pp);
        let neg = decomp.neg(k);
        if !neg.is_empty() {
            let mean: f64 = neg
                .iter()
                .map(|&i| logistic_loss(-scores[(i, k)]).0)
                .sum::<f64>()
                / neg.len() as f64;
            total += (1.0 - priors.pi()[k]) * mean;
        }
    }
    Ok(total)
}

/// Corrected (or, with `Identity`, unbiased) risk of a batch together with
/// its gradient in the scores.
pub fn nu_risk_grad(
    scores: &ArrayView2<f64>,
    decomp: &BinaryDecomposition,
    spec: &RiskSpec,
) -> Result<(f64, Array2<f64>)> {
    check_decomposition(scores, decomp, &spec.priors)?;
    let (n, q) = scores.dim();
    let mut risk = 0.0;
    let mut grad = Array2::zeros((n, q));
    for k in 0..q {
        let neg = decomp.neg(k);
        let unl = decomp.unl(k);
        if neg.is_empty() && unl.is_empty() {
            return Err(Error::invalid(format!(
                "class {}: batch has neither flagged nor unlabeled rows",
                k + 1
            )));
        }
        let neg_coeff = spec.priors.pi_bar()[k] + spec.priors.pi()[k] - 1.0;
        let unl_coeff = 1.0 - spec.priors.pi_bar()[k];
        let rev_coeff = 1.0 - spec.priors.pi()[k];

        let mut pp = 0.0;
        if !neg.is_empty() {
            let scale = neg_coeff / neg.len() as f64;
            for &i in neg {
                pp += scale * logistic_loss(scores[(i, k)]).0;
            }
        }
        if !unl.is_empty() {
            let scale = unl_coeff / unl.len() as f64;
            for &i in unl {
                pp += scale * logistic_loss(scores[(i, k)]).0;
            }
        }
        let slope = spec.correction.subgrad(pp);
        risk += spec.correction.apply(pp);

        if !neg.is_empty() {
            let pp_scale = slope * neg_coeff / neg.len() as f64;
            let rev_scale = rev_coeff / neg.len() as f64;
            for &i in neg {
                let s = scores[(i, k)];
                grad[(i, k)] += pp_scale * logistic_loss(s).1;
                let (value, deriv) = logistic_loss(-s);
                risk += rev_scale * value;
                grad[(i, k)] -= rev_scale * deriv;
            }
        }
        if !unl.is_empty() {
            let pp_scale = slope * unl_coeff / unl.len() as f64;
            for &i in unl {
                grad[(i, k)] += pp_scale * logistic_loss(scores[(i, k)]).1;
            }
        }
    }
    Ok((risk, grad))
}

/// Smallest |P_k| over classes. The finite-difference gradient checker
/// uses this to skip configurations near a correction kink.
pub fn min_abs_positive_part(
    scores: &ArrayView2<f64>,
    decomp: &BinaryDecomposition,
    priors: &ClassPriors,
) -> Result<f64> {
    check_decomposition(scores, decomp, priors)?;
    let mut min = f64::INFINITY;
    for k in 0..scores.ncols() {
        let pp = positive_part_unchecked(scores, decomp, priors, k)?;
        min = min.min(pp.abs());
    }
    Ok(min)
}

/// Finite distribution with known truth, flag probabilities, and exact
/// conditionals. Serves as a brute-force oracle for the risk rewrite and
/// as a population to resample from in Monte Carlo checks.
#[derive(Debug, Clone)]
pub struct DiscreteDistribution {
    points: Array2<f64>,
    labels: Vec<usize>,
    masses: Vec<f64>,
    flag_probs: Vec<f64>,
    class_count: usize,
}

impl DiscreteDistribution {
    pub fn new(
        points: Array2<f64>,
        labels: Vec<usize>,
        masses: Vec<f64>,
        flag_probs: Vec<f64>,
        class_count: usize,
    ) -> Result<Self> {
        let (m, d) = points.dim();
        if m == 0 || d == 0 {
            return Err(Error::invalid("support must be non-empty"));
        }
        if labels.len() != m || masses.len() != m {
            return Err(Error::invalid(format!(
                "support size {m} disagrees with {} labels and {} masses",
                labels.len(),
                masses.len()
            )));
        }
        if class_count < 2 || flag_probs.len() != class_count {
            return Err(Error::invalid(format!(
                "need one flag probability per class, got {} for {class_count} classes",
                flag_probs.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::invalid(format!(
                "label {} out of range for {class_count} classes",
                bad + 1
            )));
        }
        if let Some(&bad) = masses.iter().find(|&&w| !(w > 0.0)) {
            return Err(Error::invalid(format!("masses must be positive, got {bad}")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "masses sum to {total}, expected 1 within 1e-12"
            )));
        }
        if let Some(&bad) = flag_probs.iter().find(|&&c| !(0.0..1.0).contains(&c)) {
            return Err(Error::invalid(format!(
                "flag probabilities must lie in [0, 1), got {bad}"
            )));
        }
        let dist = Self {
            points,
            labels,
            masses,
            flag_probs,
            class_count,
        };
        for k in 0..class_count {
            // The flagged-conditional of class k is undefined when nothing
            // outside k can ever be flagged.
            if dist.off_class_mass(k) > 0.0 && dist.flag_probs[k] == 0.0 {
                return Err(Error::invalid(format!(
                    "class {} has off-class mass but zero flag probability",
                    k + 1
                )));
            }
        }
        Ok(dist)
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn flag_probs(&self) -> &[f64] {
        &self.flag_probs
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    fn off_class_mass(&self, k: usize) -> f64 {
        self.labels
            .iter()
            .zip(&self.masses)
            .filter(|(&y, _)| y != k)
            .map(|(_, &w)| w)
            .sum()
    }

    /// Exact class priors and the flag marginals `c_k * (1 - pi_k)`.
    pub fn class_priors(&self) -> ClassPriors {
        let mut pi = vec![0.0; self.class_count];
        for (&y, &w) in self.labels.iter().zip(&self.masses) {
            pi[y] += w;
        }
        let pi_bar: Vec<f64> = pi
            .iter()
            .zip(&self.flag_probs)
            .map(|(&p, &c)| c * (1.0 - p))
            .collect();
        ClassPriors::new(pi, pi_bar).expect("exact priors of a valid distribution")
    }

    /// I.i.d. sample of `n` labeled points.
    pub fn sample(&self, n: usize, rng: &mut impl rand::Rng) -> Result<OrdinaryDataset> {
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        let d = self.points.ncols();
        let mut features = Array2::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let mut u = rng.random::<f64>();
            let mut idx = self.masses.len() - 1;
            for (j, &w) in self.masses.iter().enumerate() {
                if u < w {
                    idx = j;
                    break;
                }
                u -= w;
            }
            features.row_mut(i).assign(&self.points.row(idx));
            labels.push(self.labels[idx]);
        }
        OrdinaryDataset::new(features, labels, self.class_count)
    }
}

/// Evaluates the one-versus-rest risk of `params` on the distribution two
/// ways: directly from the joint (lhs), and through the per-class
/// negative/unlabeled conditionals with exact priors (rhs). The two are
/// equal by the risk rewrite; callers compare them.
pub fn exact_risks(dist: &DiscreteDistribution, params: &ModelParams) -> Result<(f64, f64)> {
    let scores = params.forward(&dist.points.view())?;
    exact_risks_from_scores(dist, &scores.view())
}

/// [`exact_risks`] with the support already scored.
pub fn exact_risks_from_scores(
    dist: &DiscreteDistribution,
    scores: &ArrayView2<f64>,
) -> Result<(f64, f64)> {
    let (m, q) = scores.dim();
    if m != dist.points.nrows() || q != dist.class_count {
        return Err(Error::invalid(format!(
            "scores of shape {m}x{q} do not match the distribution"
        )));
    }

    let mut lhs = 0.0;
    for (i, (&y, &w)) in dist.labels.iter().zip(&dist.masses).enumerate() {
        for k in 0..q {
            let s = scores[(i, k)];
            lhs += w * logistic_loss(if k == y { s } else { -s }).0;
        }
    }

    let priors = dist.class_priors();
    let mut rhs = 0.0;
    for k in 0..q {
        let pi_k = priors.pi()[k];
        let pi_bar_k = priors.pi_bar()[k];
        let c_k = dist.flag_probs[k];

        // Flagged conditional: mass proportional to the off-class joint.
        if pi_bar_k > 0.0 {
            let off_mass = 1.0 - pi_k;
            let mut flagged_term = 0.0;
            for (i, (&y, &w)) in dist.labels.iter().zip(&dist.masses).enumerate() {
                if y == k {
                    continue;
                }
                let s = scores[(i, k)];
                let density = w / off_mass;
                flagged_term += density
                    * ((1.0 - pi_k) * logistic_loss(-s).0
                        + (pi_bar_k + pi_k - 1.0) * logistic_loss(s).0);
            }
            rhs += flagged_term;
        }

        // Unflagged conditional: in-class mass plus the never-flagged share
        // of the off-class mass.
        let unflagged_mass = 1.0 - pi_bar_k;
        let mut unflagged_term = 0.0;
        for (i, (&y, &w)) in dist.labels.iter().zip(&dist.masses).enumerate() {
            let joint = if y == k { w } else { (1.0 - c_k) * w };
            if joint == 0.0 {
                continue;
            }
            let density = joint / unflagged_mass;
            unflagged_term += density * (1.0 - pi_bar_k) * logistic_loss(scores[(i, k)]).0;
        }
        rhs += unflagged_term;
    }
    Ok((lhs, rhs))
}
