//! Datasets, complementary-label generation, per-class negative/unlabeled
//! decomposition, and class-prior bookkeeping.
//!
//! A complementary label marks a class an example does *not* belong to. Each
//! row of a [`ComplementaryDataset`] carries a q-bit vector with anywhere
//! from zero to q-1 bits set; the bit of the latent true class is never set.
//! Class indices are 0-based in memory and 1-based in CSV files.

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Tolerance for simplex and probability-vector checks.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Row-sum tolerance for transition matrices. Loose enough to accept
/// matrices printed to three decimal places, whose rows sum to 0.999;
/// sampling normalizes by the actual row sum.
pub const ROW_SUM_TOL: f64 = 5e-3;

/// Cap on rejection-sampling attempts per row when a single complementary
/// label is required.
const SINGLE_LABEL_MAX_ATTEMPTS: usize = 1_000_000;

/// Fully labeled training or test data.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinaryDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl OrdinaryDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!(
                "dataset must be non-empty, got {n} rows of dimension {d}"
            )));
        }
        if class_count < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 classes, got {class_count}"
            )));
        }
        if labels.len() != n {
            return Err(Error::invalid(format!(
                "feature rows ({n}) and labels ({}) disagree",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::invalid(format!(
                "label {} out of range for {class_count} classes",
                bad + 1
            )));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Empirical class frequencies.
    pub fn empirical_priors(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.class_count];
        for &y in &self.labels {
            counts[y] += 1;
        }
        let n = self.len() as f64;
        counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Feature matrix plus one q-bit complementary-label vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementaryDataset {
    features: Array2<f64>,
    comp_labels: Array2<bool>,
}

impl ComplementaryDataset {
    pub fn new(features: Array2<f64>, comp_labels: Array2<bool>) -> Result<Self> {
        let (n, d) = features.dim();
        let (cn, q) = comp_labels.dim();
        if n == 0 || d == 0 {
            return Err(Error::invalid(format!(
                "dataset must be non-empty, got {n} rows of dimension {d}"
            )));
        }
        if cn != n {
            return Err(Error::invalid(format!(
                "feature rows ({n}) and label rows ({cn}) disagree"
            )));
        }
        if q < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {q}")));
        }
        for (i, row) in comp_labels.rows().into_iter().enumerate() {
            if row.iter().all(|&b| b) {
                return Err(Error::invalid(format!(
                    "row {} marks every class as complementary",
                    i + 1
                )));
            }
        }
        Ok(Self {
            features,
            comp_labels,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn comp_labels(&self) -> &Array2<bool> {
        &self.comp_labels
    }

    pub fn comp_row(&self, i: usize) -> ArrayView1<'_, bool> {
        self.comp_labels.row(i)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.comp_labels.ncols()
    }

    /// New dataset holding the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("row selection is empty"));
        }
        Self::new(
            self.features.select(Axis(0), rows),
            self.comp_labels.select(Axis(0), rows),
        )
    }
}

/// How complementary labels are drawn given the true label.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionSpec {
    /// One complementary label per row, uniform over the q-1 other classes.
    Uniform,
    /// One complementary label per row, drawn from the row of a transition
    /// matrix indexed by the true label.
    Biased(Array2<f64>),
    /// For each class k != y independently, flag k with probability c_k.
    /// Rows may end up with zero or several complementary labels.
    ScarIndependent(Vec<f64>),
    /// Independent flags redrawn until exactly one is set.
    ScarSingle(Vec<f64>),
}

impl TransitionSpec {
    pub fn biased(matrix: Array2<f64>) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        if rows != cols || rows < 2 {
            return Err(Error::invalid(format!(
                "transition matrix must be square with q >= 2, got {rows}x{cols}"
            )));
        }
        for (i, row) in matrix.rows().into_iter().enumerate() {
            if matrix[(i, i)] != 0.0 {
                return Err(Error::invalid(format!(
                    "transition matrix diagonal must be zero, row {} has {}",
                    i + 1,
                    matrix[(i, i)]
                )));
            }
            if let Some(&bad) = row.iter().find(|&&v| v < 0.0) {
                return Err(Error::invalid(format!(
                    "transition matrix entries must be non-negative, row {} has {bad}",
                    i + 1
                )));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid(format!(
                    "transition matrix row {} sums to {sum}, expected 1",
                    i + 1
                )));
            }
        }
        Ok(TransitionSpec::Biased(matrix))
    }

    pub fn scar_independent(flag_probs: Vec<f64>) -> Result<Self> {
        validate_flag_probs(&flag_probs)?;
        Ok(TransitionSpec::ScarIndependent(flag_probs))
    }

    pub fn scar_single(flag_probs: Vec<f64>) -> Result<Self> {
        validate_flag_probs(&flag_probs)?;
        if flag_probs.iter().all(|&c| c == 0.0) {
            return Err(Error::Unsatisfiable(
                "single-label generation needs at least one positive flag probability".into(),
            ));
        }
        Ok(TransitionSpec::ScarSingle(flag_probs))
    }

    /// Class count the spec is wired for, if it fixes one.
    pub fn class_count(&self) -> Option<usize> {
        match self {
            TransitionSpec::Uniform => None,
            TransitionSpec::Biased(m) => Some(m.nrows()),
            TransitionSpec::ScarIndependent(c) | TransitionSpec::ScarSingle(c) => Some(c.len()),
        }
    }
}

fn validate_flag_probs(flag_probs: &[f64]) -> Result<()> {
    if flag_probs.len() < 2 {
        return Err(Error::invalid(format!(
            "need flag probabilities for at least 2 classes, got {}",
            flag_probs.len()
        )));
    }
    if let Some(&bad) = flag_probs.iter().find(|&&c| !(0.0..1.0).contains(&c)) {
        return Err(Error::invalid(format!(
            "flag probabilities must lie in [0, 1), got {bad}"
        )));
    }
    Ok(())
}

/// Class priors `pi` together with the complementary-label marginals
/// `pi_bar` (`pi_bar[k]` = probability that class k is flagged).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPriors {
    pi: Vec<f64>,
    pi_bar: Vec<f64>,
}

impl ClassPriors {
    /// Validates that `pi` lies on the simplex, each `pi_bar[k]` is in
    /// [0, 1), and `pi_bar[k] + pi[k] <= 1` (the flagging rate of a class
    /// cannot exceed the mass of data outside it).
    pub fn new(pi: Vec<f64>, pi_bar: Vec<f64>) -> Result<Self> {
        if pi.len() != pi_bar.len() || pi.len() < 2 {
            return Err(Error::invalid(format!(
                "prior vectors must share a length >= 2, got {} and {}",
                pi.len(),
                pi_bar.len()
            )));
        }
        validate_simplex(&pi)?;
        for (k, (&p, &pb)) in pi.iter().zip(&pi_bar).enumerate() {
            if !(0.0..1.0).contains(&pb) {
                return Err(Error::invalid(format!(
                    "pi_bar[{}] = {pb} outside [0, 1)",
                    k + 1
                )));
            }
            if pb + p > 1.0 + SIMPLEX_TOL {
                return Err(Error::invalid(format!(
                    "pi_bar[{}] + pi[{}] = {} exceeds 1",
                    k + 1,
                    k + 1,
                    pb + p
                )));
            }
        }
        Ok(Self { pi, pi_bar })
    }

    /// Builds priors without the `pi + pi_bar <= 1` consistency check.
    /// Perturbed or estimated priors may legitimately violate it; the risk
    /// estimators stay well-defined either way. `pi` must still be a
    /// simplex vector and `pi_bar` must be componentwise in [0, 1).
    pub(crate) fn new_relaxed(pi: Vec<f64>, pi_bar: Vec<f64>) -> Result<Self> {
        if pi.len() != pi_bar.len() || pi.len() < 2 {
            return Err(Error::invalid("prior vectors must share a length >= 2"));
        }
        validate_simplex(&pi)?;
        if let Some(&bad) = pi_bar.iter().find(|&&pb| !(0.0..1.0).contains(&pb)) {
            return Err(Error::invalid(format!("pi_bar entry {bad} outside [0, 1)")));
        }
        Ok(Self { pi, pi_bar })
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn pi_bar(&self) -> &[f64] {
        &self.pi_bar
    }

    pub fn class_count(&self) -> usize {
        self.pi.len()
    }
}

fn validate_simplex(v: &[f64]) -> Result<()> {
    if let Some(&bad) = v.iter().find(|&&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::invalid(format!("prior entry {bad} is not in [0, 1]")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(format!("priors sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Per-class split of rows into negative (flagged) and unlabeled (rest).
/// A row may appear in the negative sets of several classes; for every
/// class the two sets partition the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDecomposition {
    neg: Vec<Vec<usize>>,
    unl: Vec<Vec<usize>>,
    row_count: usize,
}

impl BinaryDecomposition {
    pub fn from_bits(comp_labels: &Array2<bool>) -> Self {
        let (n, q) = comp_labels.dim();
        let mut neg = vec![Vec::new(); q];
        let mut unl = vec![Vec::new(); q];
        for (i, row) in comp_labels.rows().into_iter().enumerate() {
            for (k, &flagged) in row.iter().enumerate() {
                if flagged {
                    neg[k].push(i);
                } else {
                    unl[k].push(i);
                }
            }
        }
        Self {
            neg,
            unl,
            row_count: n,
        }
    }

    /// Decomposition of a subset of rows, re-indexed to 0..rows.len().
    pub fn from_bit_rows(comp_labels: &Array2<bool>, rows: &[usize]) -> Self {
        let q = comp_labels.ncols();
        let mut neg = vec![Vec::new(); q];
        let mut unl = vec![Vec::new(); q];
        for (local, &row) in rows.iter().enumerate() {
            for k in 0..q {
                if comp_labels[(row, k)] {
                    neg[k].push(local);
                } else {
                    unl[k].push(local);
                }
            }
        }
        Self {
            neg,
            unl,
            row_count: rows.len(),
        }
    }

    pub fn class_count(&self) -> usize {
        self.neg.len()
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    /// Rows flagged with class k.
    pub fn neg(&self, k: usize) -> &[usize] {
        &self.neg[k]
    }

    /// Rows not flagged with class k.
    pub fn unl(&self, k: usize) -> &[usize] {
        &self.unl[k]
    }

    pub fn neg_count(&self, k: usize) -> usize {
        self.neg[k].len()
    }

    pub fn unl_count(&self, k: usize) -> usize {
        self.unl[k].len()
    }
}

/// Splits every row by its complementary-label bits.
pub fn decompose(cds: &ComplementaryDataset) -> BinaryDecomposition {
    BinaryDecomposition::from_bits(cds.comp_labels())
}

/// Gaussian class centers: on the unit circle for d = 2, on coordinate
/// axes for d >= q, and at +/-separation for the 1-D two-class case.
/// These layouts have a known Bayes boundary, which the verification
/// benchmarks rely on.
pub fn class_centers(q: usize, d: usize, separation: f64) -> Result<Vec<Vec<f64>>> {
    if q < 2 || d == 0 {
        return Err(Error::invalid(format!(
            "need q >= 2 and d >= 1, got q = {q}, d = {d}"
        )));
    }
    if !(separation >= 0.0) {
        return Err(Error::invalid(format!(
            "separation must be non-negative, got {separation}"
        )));
    }
    if d == 2 {
        let centers = (0..q)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / q as f64;
                vec![separation * angle.cos(), separation * angle.sin()]
            })
            .collect();
        return Ok(centers);
    }
    if d >= q {
        let centers = (0..q)
            .map(|k| {
                let mut c = vec![0.0; d];
                c[k] = separation;
                c
            })
            .collect();
        return Ok(centers);
    }
    if d == 1 && q == 2 {
        return Ok(vec![vec![separation], vec![-separation]]);
    }
    Err(Error::invalid(format!(
        "no center layout for q = {q} classes in {d} dimensions"
    )))
}

/// Balanced mixture of q unit-variance isotropic Gaussians, one per class.
/// Rows are grouped by class; draws are deterministic given the seed.
pub fn make_gaussian_mixture(
    q: usize,
    n_per_class: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<OrdinaryDataset> {
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be at least 1"));
    }
    let centers = class_centers(q, d, separation)?;
    let mut rng = stream_rng(seed, "data");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = q * n_per_class;
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for k in 0..q {
        for i in 0..n_per_class {
            let row = k * n_per_class + i;
            for j in 0..d {
                features[(row, j)] = centers[k][j] + normal.sample(&mut rng);
            }
            labels.push(k);
        }
    }
    OrdinaryDataset::new(features, labels, q)
}

/// Draws complementary labels for every row of `ds` according to `spec`.
/// The true class of a row is never flagged.
pub fn gen_complementary(
    ds: &OrdinaryDataset,
    spec: &TransitionSpec,
    seed: u64,
) -> Result<ComplementaryDataset> {
    let q = ds.class_count();
    if let Some(spec_q) = spec.class_count() {
        if spec_q != q {
            return Err(Error::invalid(format!(
                "transition spec is for {spec_q} classes but the dataset has {q}"
            )));
        }
    }
    let mut rng = stream_rng(seed, "labels");
    let n = ds.len();
    let mut comp = Array2::from_elem((n, q), false);
    for (i, &y) in ds.labels().iter().enumerate() {
        match spec {
            TransitionSpec::Uniform => {
                let r = rng.random_range(0..q - 1);
                let k = if r < y { r } else { r + 1 };
                comp[(i, k)] = true;
            }
            TransitionSpec::Biased(matrix) => {
                let row = matrix.row(y);
                let total: f64 = row.sum();
                if total <= 0.0 {
                    return Err(Error::invalid(format!(
                        "transition matrix row {} has no mass",
                        y + 1
                    )));
                }
                let mut u = rng.random::<f64>() * total;
                let mut chosen = q - 1;
                for (k, &p) in row.iter().enumerate() {
                    if k == y {
                        continue;
                    }
                    if u < p {
                        chosen = k;
                        break;
                    }
                    u -= p;
                }
                if chosen == y {
                    chosen = if y == q - 1 { q - 2 } else { q - 1 };
                }
                comp[(i, chosen)] = true;
            }
            TransitionSpec::ScarIndependent(flag_probs) => {
                for (k, &c) in flag_probs.iter().enumerate() {
                    if k != y && rng.random_bool(c) {
                        comp[(i, k)] = true;
                    }
                }
            }
            TransitionSpec::ScarSingle(flag_probs) => {
                if flag_probs
                    .iter()
                    .enumerate()
                    .all(|(k, &c)| k == y || c == 0.0)
                {
                    return Err(Error::Unsatisfiable(format!(
                        "row {}: every class other than the true one has zero flag probability",
                        i + 1
                    )));
                }
                let mut accepted = false;
                let mut flags = vec![false; q];
                for _ in 0..SINGLE_LABEL_MAX_ATTEMPTS {
                    let mut count = 0;
                    for (k, &c) in flag_probs.iter().enumerate() {
                        let hit = k != y && rng.random_bool(c);
                        flags[k] = hit;
                        if hit {
                            count += 1;
                        }
                    }
                    if count == 1 {
                        accepted = true;
                        break;
                    }
                }
                if !accepted {
                    return Err(Error::Unsatisfiable(format!(
                        "row {}: no single-label draw accepted after {SINGLE_LABEL_MAX_ATTEMPTS} attempts",
                        i + 1
                    )));
                }
                for (k, &hit) in flags.iter().enumerate() {
                    comp[(i, k)] = hit;
                }
            }
        }
    }
    ComplementaryDataset::new(ds.features().clone(), comp)
}

/// Empirical complementary-label marginals: the fraction of rows flagging
/// each class.
pub fn complementary_priors(cds: &ComplementaryDataset) -> Vec<f64> {
    let n = cds.len() as f64;
    (0..cds.class_count())
        .map(|k| cds.comp_labels().column(k).iter().filter(|&&b| b).count() as f64 / n)
        .collect()
}

/// Exact complementary-label marginals implied by class priors and a
/// transition spec.
pub fn true_label_priors(class_priors: &[f64], spec: &TransitionSpec) -> Result<Vec<f64>> {
    validate_simplex(class_priors)?;
    let q = class_priors.len();
    if let Some(spec_q) = spec.class_count() {
        if spec_q != q {
            return Err(Error::invalid(format!(
                "transition spec is for {spec_q} classes but priors have {q}"
            )));
        }
    }
    let mut pi_bar = vec![0.0; q];
    match spec {
        TransitionSpec::Uniform => {
            for k in 0..q {
                pi_bar[k] = (1.0 - class_priors[k]) / (q as f64 - 1.0);
            }
        }
        TransitionSpec::Biased(matrix) => {
            for (y, &p) in class_priors.iter().enumerate() {
                let total: f64 = matrix.row(y).sum();
                for k in 0..q {
                    pi_bar[k] += p * matrix[(y, k)] / total;
                }
            }
        }
        TransitionSpec::ScarIndependent(c) => {
            for k in 0..q {
                pi_bar[k] = c[k] * (1.0 - class_priors[k]);
            }
        }
        TransitionSpec::ScarSingle(c) => {
            // Conditioning on exactly one flag reweights the marginals:
            // P(flag = k | y) = c_k prod_{j != k,y} (1 - c_j), normalized
            // over k != y.
            for (y, &p) in class_priors.iter().enumerate() {
                let mut weights = vec![0.0; q];
                let mut total = 0.0;
                for k in 0..q {
                    if k == y {
                        continue;
                    }
                    let mut w = c[k];
                    for j in 0..q {
                        if j != k && j != y {
                            w *= 1.0 - c[j];
                        }
                    }
                    weights[k] = w;
                    total += w;
                }
                if total <= 0.0 {
                    return Err(Error::Unsatisfiable(format!(
                        "class {}: no other class can be flagged",
                        y + 1
                    )));
                }
                for k in 0..q {
                    pi_bar[k] += p * weights[k] / total;
                }
            }
        }
    }
    Ok(pi_bar)
}

/// Exact priors pair for a generation setup.
pub fn true_priors(class_priors: &[f64], spec: &TransitionSpec) -> Result<ClassPriors> {
    let pi_bar = true_label_priors(class_priors, spec)?;
    ClassPriors::new(class_priors.to_vec(), pi_bar)
}

/// Flag probabilities recovering the given complementary-label marginals:
/// `c_k = pi_bar[k] / (1 - pi[k])`.
pub fn scar_flag_probs(label_priors: &[f64], class_priors: &[f64]) -> Result<Vec<f64>> {
    if label_priors.len() != class_priors.len() {
        return Err(Error::invalid(format!(
            "label priors ({}) and class priors ({}) disagree in length",
            label_priors.len(),
            class_priors.len()
        )));
    }
    validate_simplex(class_priors)?;
    let mut c = Vec::with_capacity(label_priors.len());
    for (k, (&pb, &p)) in label_priors.iter().zip(class_priors).enumerate() {
        if p >= 1.0 {
            return Err(Error::invalid(format!(
                "class {} has prior 1; its flag probability is undefined",
                k + 1
            )));
        }
        let ck = pb / (1.0 - p);
        if !(0.0..1.0).contains(&ck) {
            return Err(Error::invalid(format!(
                "class {}: implied flag probability {ck} outside [0, 1)",
                k + 1
            )));
        }
        c.push(ck);
    }
    Ok(c)
}

/// Multiplies each prior by a `N(1, sigma^2)` draw, clamps at zero, and
/// renormalizes. Models working with inaccurate class priors; `pi_bar`
/// passes through unchanged, so the perturbed pair may break the
/// `pi + pi_bar <= 1` consistency that exact priors satisfy.
pub fn corrupt_priors(priors: &ClassPriors, sigma: f64, seed: u64) -> Result<ClassPriors> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be non-negative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(priors.clone());
    }
    let mut rng = stream_rng(seed, "priors");
    let normal = Normal::new(1.0, sigma).expect("validated sigma");
    loop {
        let eps: Vec<f64> = (0..priors.class_count())
            .map(|_| normal.sample(&mut rng))
            .collect();
        if let Some(corrupted) = apply_corruption(priors, &eps) {
            return Ok(corrupted);
        }
        // All entries clamped to zero; resample.
    }
}

/// Deterministic core of [`corrupt_priors`]; `None` when every perturbed
/// entry clamps to zero.
pub(crate) fn apply_corruption(priors: &ClassPriors, eps: &[f64]) -> Option<ClassPriors> {
    let scaled: Vec<f64> = priors
        .pi()
        .iter()
        .zip(eps)
        .map(|(&p, &e)| (p * e).max(0.0))
        .collect();
    let sum: f64 = scaled.iter().sum();
    if sum <= 0.0 {
        return None;
    }
    let pi: Vec<f64> = scaled.iter().map(|&p| p / sum).collect();
    Some(
        ClassPriors::new_relaxed(pi, priors.pi_bar().to_vec())
            .expect("renormalized priors are a simplex vector"),
    )
}

/// Deterministic shuffled split into two disjoint, exhaustive parts of
/// sizes `floor(n * fraction)` and the remainder.
pub fn split(
    cds: &ComplementaryDataset,
    fraction: f64,
    seed: u64,
) -> Result<(ComplementaryDataset, ComplementaryDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = cds.len();
    let first = (n as f64 * fraction).floor() as usize;
    if first == 0 || first == n {
        return Err(Error::invalid(format!(
            "split of {n} rows at fraction {fraction} leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, "split"));
    let mut head = order[..first].to_vec();
    let mut tail = order[first..].to_vec();
    head.sort_unstable();
    tail.sort_unstable();
    Ok((cds.select_rows(&head)?, cds.select_rows(&tail)?))
}

/// Transition matrix for the "biased-a" ten-class setting, stored to three
/// decimal places exactly as published.
pub fn biased_a_matrix() -> Array2<f64> {
    let rows: [[f64; 10]; 10] = [
        [0.0, 0.250, 0.043, 0.040, 0.043, 0.040, 0.250, 0.040, 0.250, 0.043],
        [0.043, 0.0, 0.250, 0.043, 0.040, 0.043, 0.040, 0.250, 0.040, 0.250],
        [0.250, 0.043, 0.0, 0.250, 0.043, 0.040, 0.043, 0.040, 0.250, 0.040],
        [0.040, 0.250, 0.043, 0.0, 0.250, 0.043, 0.040, 0.043, 0.040, 0.250],
        [0.250, 0.040, 0.250, 0.043, 0.0, 0.250, 0.043, 0.040, 0.043, 0.040],
        [0.040, 0.250, 0.040, 0.250, 0.043, 0.0, 0.250, 0.043, 0.040, 0.043],
        [0.043, 0.040, 0.250, 0.040, 0.250, 0.043, 0.0, 0.250, 0.043, 0.040],
        [0.040, 0.043, 0.040, 0.250, 0.040, 0.250, 0.043, 0.0, 0.250, 0.043],
        [0.043, 0.040, 0.043, 0.040, 0.250, 0.040, 0.250, 0.043, 0.0, 0.250],
        [0.250, 0.043, 0.040, 0.043, 0.040, 0.250, 0.040, 0.250, 0.043, 0.0],
    ];
    Array2::from_shape_fn((10, 10), |(i, j)| rows[i][j])
}

/// Transition matrix for the "biased-b" ten-class setting.
pub fn biased_b_matrix() -> Array2<f64> {
    let rows: [[f64; 10]; 10] = [
        [0.0, 0.220, 0.080, 0.033, 0.080, 0.033, 0.220, 0.033, 0.220, 0.080],
        [0.080, 0.0, 0.220, 0.080, 0.033, 0.080, 0.033, 0.220, 0.033, 0.220],
        [0.220, 0.080, 0.0, 0.220, 0.080, 0.033, 0.080, 0.033, 0.220, 0.033],
        [0.033, 0.220, 0.080, 0.0, 0.220, 0.080, 0.033, 0.080, 0.033, 0.220],
        [0.220, 0.033, 0.220, 0.080, 0.0, 0.220, 0.080, 0.033, 0.080, 0.033],
        [0.033, 0.220, 0.033, 0.220, 0.080, 0.0, 0.220, 0.080, 0.033, 0.080],
        [0.080, 0.033, 0.220, 0.033, 0.220, 0.080, 0.0, 0.220, 0.080, 0.033],
        [0.033, 0.080, 0.033, 0.220, 0.033, 0.220, 0.080, 0.0, 0.220, 0.080],
        [0.080, 0.033, 0.080, 0.033, 0.220, 0.033, 0.220, 0.080, 0.0, 0.220],
        [0.220, 0.080, 0.033, 0.080, 0.033, 0.220, 0.033, 0.220, 0.080, 0.0],
    ];
    Array2::from_shape_fn((10, 10), |(i, j)| rows[i][j])
}

/// Complementary-label marginals for the "scar-a" ten-class setting.
pub fn scar_a_label_priors() -> Vec<f64> {
    vec![0.05, 0.05, 0.2, 0.2, 0.1, 0.1, 0.05, 0.05, 0.1, 0.1]
}

/// Complementary-label marginals for the "scar-b" ten-class setting.
pub fn scar_b_label_priors() -> Vec<f64> {
    vec![0.1, 0.1, 0.2, 0.05, 0.05, 0.1, 0.1, 0.2, 0.05, 0.05]
}

/// Builds a named transition spec. The scar settings publish label
/// marginals rather than flag probabilities, so they need the class priors
/// of the data they will be applied to; each example then receives exactly
/// one complementary label.
pub fn builtin_transition(name: &str, class_priors: &[f64]) -> Result<TransitionSpec> {
    match name {
        "uniform" => Ok(TransitionSpec::Uniform),
        "biased-a" => TransitionSpec::biased(biased_a_matrix()),
        "biased-b" => TransitionSpec::biased(biased_b_matrix()),
        "scar-a" => {
            TransitionSpec::scar_single(scar_flag_probs(&scar_a_label_priors(), class_priors)?)
        }
        "scar-b" => {
            TransitionSpec::scar_single(scar_flag_probs(&scar_b_label_priors(), class_priors)?)
        }
        other => Err(Error::invalid(format!(
            "unknown transition '{other}'; expected uniform, biased-a, biased-b, scar-a, or scar-b"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn bits(rows: &[&[usize]], q: usize) -> Array2<bool> {
        let mut comp = Array2::from_elem((rows.len(), q), false);
        for (i, row) in rows.iter().enumerate() {
            for &k in row.iter() {
                comp[(i, k)] = true;
            }
        }
        comp
    }

    fn cds_from_bits(rows: &[&[usize]], q: usize) -> ComplementaryDataset {
        let features = Array2::from_shape_fn((rows.len(), 2), |(i, j)| (i * 2 + j) as f64);
        ComplementaryDataset::new(features, bits(rows, q)).unwrap()
    }

    #[test]
    fn gaussian_mixture_zero_separation_one_dim() {
        let ds = make_gaussian_mixture(2, 1, 1, 0.0, 3).unwrap();
        assert_eq!(ds.features().dim(), (2, 1));
        assert_eq!(ds.labels(), &[0, 1]);
        // Zero separation: both rows are plain unit-normal draws.
        assert!(ds.features().iter().all(|v| v.abs() < 6.0));
    }

    #[test]
    fn gaussian_mixture_same_seed_identical() {
        let a = make_gaussian_mixture(3, 50, 4, 2.0, 9).unwrap();
        let b = make_gaussian_mixture(3, 50, 4, 2.0, 9).unwrap();
        assert_eq!(a, b);
        let c = make_gaussian_mixture(3, 50, 4, 2.0, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_mixture_separated_classes_are_centroid_separable() {
        let train = make_gaussian_mixture(4, 1000, 2, 6.0, 11).unwrap();
        let test = make_gaussian_mixture(4, 250, 2, 6.0, 12).unwrap();
        // Independent check: classify test rows by the nearest class mean
        // of the training sample.
        let mut centroids = vec![[0.0f64; 2]; 4];
        let mut counts = [0usize; 4];
        for (row, &y) in train.features().rows().into_iter().zip(train.labels()) {
            centroids[y][0] += row[0];
            centroids[y][1] += row[1];
            counts[y] += 1;
        }
        for (c, &n) in centroids.iter_mut().zip(&counts) {
            c[0] /= n as f64;
            c[1] /= n as f64;
        }
        let mut correct = 0;
        for (row, &y) in test.features().rows().into_iter().zip(test.labels()) {
            let best = (0..4)
                .min_by(|&a, &b| {
                    let da = (row[0] - centroids[a][0]).powi(2) + (row[1] - centroids[a][1]).powi(2);
                    let db = (row[0] - centroids[b][0]).powi(2) + (row[1] - centroids[b][1]).powi(2);
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best == y {
                correct += 1;
            }
        }
        let acc = correct as f64 / test.len() as f64;
        assert!(acc >= 0.99, "nearest-centroid accuracy {acc}");
    }

    #[test]
    fn gaussian_mixture_rejects_bad_sizes() {
        assert!(make_gaussian_mixture(1, 10, 2, 1.0, 0).is_err());
        assert!(make_gaussian_mixture(4, 0, 2, 1.0, 0).is_err());
        assert!(make_gaussian_mixture(4, 10, 0, 1.0, 0).is_err());
        assert!(make_gaussian_mixture(4, 10, 2, -1.0, 0).is_err());
        // Three classes cannot be laid out in one dimension.
        assert!(make_gaussian_mixture(3, 10, 1, 1.0, 0).is_err());
    }

    #[test]
    fn uniform_two_classes_always_flags_the_other() {
        let ds = make_gaussian_mixture(2, 100, 2, 1.0, 5).unwrap();
        let cds = gen_complementary(&ds, &TransitionSpec::Uniform, 6).unwrap();
        for (i, &y) in ds.labels().iter().enumerate() {
            assert!(!cds.comp_row(i)[y]);
            assert!(cds.comp_row(i)[1 - y]);
        }
    }

    #[test]
    fn biased_a_entry_matches_published_value() {
        let matrix = biased_a_matrix();
        assert_eq!(matrix[(0, 1)], 0.250);
        assert_eq!(matrix[(0, 0)], 0.0);
        // Printed to three decimals: rows sum to 0.999.
        for row in matrix.rows() {
            assert!((row.sum() - 0.999).abs() < 1e-12);
        }
        assert!(TransitionSpec::biased(matrix).is_ok());
        assert!(TransitionSpec::biased(biased_b_matrix()).is_ok());
    }

    #[test]
    fn biased_sampling_follows_row_frequencies() {
        // All rows share true label 1 (0-based 0); the empirical frequency
        // of complementary label 2 must match the normalized first row.
        let n = 200_000;
        let features = Array2::zeros((n, 1));
        let ds = OrdinaryDataset::new(features, vec![0; n], 10).unwrap();
        let spec = TransitionSpec::biased(biased_a_matrix()).unwrap();
        let cds = gen_complementary(&ds, &spec, 17).unwrap();
        let freq = complementary_priors(&cds);
        let expected = 0.250 / 0.999;
        assert!((freq[1] - expected).abs() < 0.005, "freq {}", freq[1]);
        assert!(freq[0] == 0.0, "true label must never be flagged");
        let per_row: f64 = freq.iter().sum();
        assert!((per_row - 1.0).abs() < 1e-12, "exactly one label per row");
    }

    #[test]
    fn biased_rejects_malformed_matrices() {
        let bad_diag = array![[0.5, 0.5], [1.0, 0.0]];
        assert!(TransitionSpec::biased(bad_diag).is_err());
        let bad_sum = array![[0.0, 0.9], [0.9, 0.0]];
        assert!(TransitionSpec::biased(bad_sum).is_err());
        let negative = array![[0.0, 1.5, -0.5], [1.0, 0.0, 0.0], [0.5, 0.5, 0.0]];
        assert!(TransitionSpec::biased(negative).is_err());
    }

    #[test]
    fn scar_independent_flag_frequency_matches_probability() {
        let q = 10;
        let n_per_class = 10_000;
        let ds = make_gaussian_mixture(q, n_per_class, 2, 1.0, 21).unwrap();
        let c: Vec<f64> = (0..q).map(|k| 0.05 + 0.03 * k as f64).collect();
        let spec = TransitionSpec::scar_independent(c.clone()).unwrap();
        let cds = gen_complementary(&ds, &spec, 22).unwrap();
        for k in 0..q {
            let mut eligible = 0usize;
            let mut flagged = 0usize;
            for (i, &y) in ds.labels().iter().enumerate() {
                if y != k {
                    eligible += 1;
                    if cds.comp_row(i)[k] {
                        flagged += 1;
                    }
                }
            }
            let freq = flagged as f64 / eligible as f64;
            let se = (c[k] * (1.0 - c[k]) / eligible as f64).sqrt();
            assert!(
                (freq - c[k]).abs() <= (3.0 * se).max(0.01),
                "class {k}: freq {freq} vs c {}",
                c[k]
            );
        }
    }

    #[test]
    fn generation_never_flags_the_true_label() {
        let ds = make_gaussian_mixture(5, 400, 5, 1.0, 33).unwrap();
        let c = vec![0.3, 0.2, 0.4, 0.25, 0.35];
        let specs = [
            TransitionSpec::Uniform,
            TransitionSpec::scar_independent(c.clone()).unwrap(),
            TransitionSpec::scar_single(c).unwrap(),
        ];
        for spec in &specs {
            let cds = gen_complementary(&ds, spec, 34).unwrap();
            for (i, &y) in ds.labels().iter().enumerate() {
                assert!(!cds.comp_row(i)[y], "spec {spec:?} flagged the true label");
            }
        }
    }

    #[test]
    fn scar_single_yields_exactly_one_flag() {
        let ds = make_gaussian_mixture(6, 300, 6, 1.0, 35).unwrap();
        let spec = TransitionSpec::scar_single(vec![0.15; 6]).unwrap();
        let cds = gen_complementary(&ds, &spec, 36).unwrap();
        for i in 0..cds.len() {
            assert_eq!(cds.comp_row(i).iter().filter(|&&b| b).count(), 1);
        }
    }

    #[test]
    fn scar_single_rejects_all_zero_probabilities() {
        assert!(matches!(
            TransitionSpec::scar_single(vec![0.0, 0.0, 0.0]),
            Err(Error::Unsatisfiable(_))
        ));
    }

    #[test]
    fn scar_single_errors_when_only_the_true_label_is_flaggable() {
        let features = Array2::zeros((2, 1));
        let ds = OrdinaryDataset::new(features, vec![0, 0], 3).unwrap();
        let spec = TransitionSpec::scar_single(vec![0.5, 0.0, 0.0]).unwrap();
        assert!(matches!(
            gen_complementary(&ds, &spec, 1),
            Err(Error::Unsatisfiable(_))
        ));
    }

    #[test]
    fn gen_then_decompose_is_deterministic() {
        let ds = make_gaussian_mixture(4, 100, 2, 2.0, 40).unwrap();
        let spec = TransitionSpec::scar_independent(vec![0.2, 0.3, 0.4, 0.1]).unwrap();
        let a = decompose(&gen_complementary(&ds, &spec, 41).unwrap());
        let b = decompose(&gen_complementary(&ds, &spec, 41).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn complementary_priors_counts_flags() {
        let cds = cds_from_bits(&[&[1], &[1, 2], &[1], &[0]], 3);
        let pf = complementary_priors(&cds);
        assert_eq!(pf, vec![0.25, 0.75, 0.25]);
    }

    #[test]
    fn complementary_priors_all_zero_rows() {
        let cds = cds_from_bits(&[&[], &[], &[]], 3);
        assert_eq!(complementary_priors(&cds), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn complementary_priors_uniform_single_label_approach_one_over_q() {
        let q = 10;
        let ds = make_gaussian_mixture(q, 10_000, 2, 1.0, 43).unwrap();
        let cds = gen_complementary(&ds, &TransitionSpec::Uniform, 44).unwrap();
        for (k, &p) in complementary_priors(&cds).iter().enumerate() {
            assert!((p - 0.1).abs() < 0.01, "class {k}: {p}");
        }
    }

    #[test]
    fn label_priors_match_scar_algebra() {
        let q = 4;
        let ds = make_gaussian_mixture(q, 25_000, 2, 1.0, 45).unwrap();
        let c = vec![0.2, 0.5, 0.35, 0.1];
        let spec = TransitionSpec::scar_independent(c.clone()).unwrap();
        let cds = gen_complementary(&ds, &spec, 46).unwrap();
        let empirical = complementary_priors(&cds);
        let n = cds.len() as f64;
        for k in 0..q {
            let expected = c[k] * (1.0 - 0.25);
            let se = (expected * (1.0 - expected) / n).sqrt();
            assert!(
                (empirical[k] - expected).abs() <= 3.0 * se,
                "class {k}: {} vs {expected}",
                empirical[k]
            );
        }
        // Exact marginals from the same algebra.
        let exact = true_label_priors(&ds.empirical_priors(), &spec).unwrap();
        for k in 0..q {
            assert!((exact[k] - c[k] * 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn decompose_matches_flag_membership() {
        // Rows flag classes {2}, {1,3}, {} (1-based).
        let cds = cds_from_bits(&[&[1], &[0, 2], &[]], 3);
        let decomp = decompose(&cds);
        assert_eq!(decomp.neg(0), &[1]);
        assert_eq!(decomp.unl(0), &[0, 2]);
        assert_eq!(decomp.neg(1), &[0]);
        assert_eq!(decomp.unl(1), &[1, 2]);
        assert_eq!(decomp.neg(2), &[1]);
        assert_eq!(decomp.unl(2), &[0, 2]);
    }

    #[test]
    fn decompose_all_unflagged() {
        let cds = cds_from_bits(&[&[], &[], &[], &[]], 3);
        let decomp = decompose(&cds);
        for k in 0..3 {
            assert!(decomp.neg(k).is_empty());
            assert_eq!(decomp.unl(k).len(), 4);
        }
    }

    #[test]
    fn corrupt_with_zero_sigma_is_identity() {
        let priors = ClassPriors::new(vec![0.3, 0.7], vec![0.2, 0.1]).unwrap();
        let out = corrupt_priors(&priors, 0.0, 99).unwrap();
        assert_eq!(out, priors);
    }

    #[test]
    fn corrupt_with_injected_noise_matches_hand_arithmetic() {
        let priors = ClassPriors::new(vec![0.5, 0.5], vec![0.2, 0.2]).unwrap();
        let out = apply_corruption(&priors, &[1.2, 0.8]).unwrap();
        assert!((out.pi()[0] - 0.6).abs() < 1e-12);
        assert!((out.pi()[1] - 0.4).abs() < 1e-12);
        assert_eq!(out.pi_bar(), priors.pi_bar());
    }

    #[test]
    fn corrupt_output_stays_on_the_simplex() {
        let priors = ClassPriors::new(vec![0.1, 0.2, 0.3, 0.4], vec![0.3, 0.3, 0.2, 0.1]).unwrap();
        for seed in 0..20 {
            let out = corrupt_priors(&priors, 0.5, seed).unwrap();
            let sum: f64 = out.pi().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(out.pi().iter().all(|&p| p >= 0.0));
        }
        assert!(corrupt_priors(&priors, -0.1, 0).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let rows: Vec<&[usize]> = (0..10).map(|_| &[0usize][..]).collect();
        let cds = cds_from_bits(&rows, 3);
        let (a, b) = split(&cds, 0.8, 7).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(b.len(), 2);
        // Disjoint and exhaustive: every original row appears exactly once.
        let mut seen: Vec<f64> = a
            .features()
            .column(0)
            .iter()
            .chain(b.features().column(0).iter())
            .copied()
            .collect();
        seen.sort_by(f64::total_cmp);
        let mut expected: Vec<f64> = cds.features().column(0).iter().copied().collect();
        expected.sort_by(f64::total_cmp);
        assert_eq!(seen, expected);
        // Deterministic.
        let (a2, b2) = split(&cds, 0.8, 7).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let cds = cds_from_bits(&[&[0], &[1]], 2);
        assert!(split(&cds, 0.0, 1).is_err());
        assert!(split(&cds, 1.0, 1).is_err());
        assert!(split(&cds, 0.3, 1).is_err(), "floor(2*0.3)=0 leaves a part empty");
    }

    #[test]
    fn class_priors_validation() {
        assert!(ClassPriors::new(vec![0.6, 0.6], vec![0.1, 0.1]).is_err());
        assert!(ClassPriors::new(vec![0.5, 0.5], vec![0.6, 0.1]).is_err());
        assert!(ClassPriors::new(vec![0.5, 0.5], vec![0.5, 0.5]).is_ok());
        assert!(ClassPriors::new(vec![-0.1, 1.1], vec![0.1, 0.1]).is_err());
    }

    #[test]
    fn scar_flag_probs_invert_the_marginals() {
        let c = scar_flag_probs(&[0.05, 0.08], &[0.1, 0.9]).unwrap();
        assert!((c[0] - 0.05 / 0.9).abs() < 1e-15);
        assert!((c[1] - 0.08 / 0.1).abs() < 1e-15);
    }

    #[test]
    fn scar_flag_probs_reject_out_of_range() {
        // pi_bar = 0.5 with pi = 0.5 would need a flag probability of 1.
        assert!(scar_flag_probs(&[0.5, 0.5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn builtin_transitions_by_name() {
        let balanced = vec![0.1; 10];
        assert!(matches!(
            builtin_transition("uniform", &balanced).unwrap(),
            TransitionSpec::Uniform
        ));
        assert!(matches!(
            builtin_transition("biased-a", &balanced).unwrap(),
            TransitionSpec::Biased(_)
        ));
        let scar = builtin_transition("scar-a", &balanced).unwrap();
        if let TransitionSpec::ScarSingle(c) = &scar {
            assert!((c[0] - 0.05 / 0.9).abs() < 1e-12);
            assert!((c[2] - 0.2 / 0.9).abs() < 1e-12);
        } else {
            panic!("scar-a should be a single-label scar spec");
        }
        assert!(builtin_transition("nope", &balanced).is_err());
    }

    #[test]
    fn uniform_label_priors_formula() {
        let pi = vec![0.1, 0.2, 0.3, 0.4];
        let pi_bar = true_label_priors(&pi, &TransitionSpec::Uniform).unwrap();
        for k in 0..4 {
            assert!((pi_bar[k] - (1.0 - pi[k]) / 3.0).abs() < 1e-15);
        }
        // Single-label scar with equal flag probabilities reduces to the
        // uniform marginals.
        let scar = TransitionSpec::scar_single(vec![0.3; 4]).unwrap();
        let scar_bar = true_label_priors(&pi, &scar).unwrap();
        for k in 0..4 {
            assert!((scar_bar[k] - pi_bar[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn datasets_reject_malformed_inputs() {
        assert!(OrdinaryDataset::new(Array2::zeros((0, 2)), vec![], 2).is_err());
        assert!(OrdinaryDataset::new(Array2::zeros((2, 2)), vec![0, 2], 2).is_err());
        assert!(OrdinaryDataset::new(Array2::zeros((2, 2)), vec![0], 2).is_err());
        let all_true = Array2::from_elem((1, 3), true);
        assert!(ComplementaryDataset::new(Array2::zeros((1, 2)), all_true).is_err());
    }

    proptest! {
        #[test]
        fn decomposition_partitions_every_class(
            rows in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 4), 1..40)
        ) {
            let n = rows.len();
            let mut comp = Array2::from_elem((n, 4), false);
            for (i, row) in rows.iter().enumerate() {
                for (k, &b) in row.iter().enumerate() {
                    comp[(i, k)] = b && k != 3; // keep at least one bit clear
                }
            }
            let decomp = BinaryDecomposition::from_bits(&comp);
            for k in 0..4 {
                prop_assert_eq!(decomp.neg_count(k) + decomp.unl_count(k), n);
                let mut all: Vec<usize> =
                    decomp.neg(k).iter().chain(decomp.unl(k)).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }

        #[test]
        fn split_is_a_partition(n in 3usize..60, fraction in 0.2f64..0.8, seed in 0u64..50) {
            let rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i % 2]).collect();
            let refs: Vec<&[usize]> = rows.iter().map(|r| r.as_slice()).collect();
            let cds = cds_from_bits(&refs, 3);
            prop_assume!((n as f64 * fraction).floor() as usize >= 1);
            prop_assume!(((n as f64 * fraction).floor() as usize) < n);
            let (a, b) = split(&cds, fraction, seed).unwrap();
            prop_assert_eq!(a.len() + b.len(), n);
        }
    }
}
