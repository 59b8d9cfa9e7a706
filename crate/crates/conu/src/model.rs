//! Differentiable scorers: a linear map or a ReLU multilayer perceptron
//! whose shared hidden layers feed one output head per class. Gradients
//! are exact reverse-mode derivatives; a central-difference checker
//! verifies them. Everything is double precision and deterministic per
//! seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::data::BinaryDecomposition;
use crate::error::{Error, Result};
use crate::risk::{nu_risk_grad, ovr_risk_grad, RiskSpec};
use crate::rng::stream_rng;

/// Scorer architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arch {
    Linear,
    Mlp { hidden: Vec<usize> },
}

/// Architecture plus input/output dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub arch: Arch,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl ModelConfig {
    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self {
            arch: Arch::Linear,
            input_dim,
            output_dim,
        }
    }

    pub fn mlp(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Self {
            arch: Arch::Mlp { hidden },
            input_dim,
            output_dim,
        }
    }

    /// Layer size chain, input through output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        if let Arch::Mlp { hidden } = &self.arch {
            dims.extend_from_slice(hidden);
        }
        dims.push(self.output_dim);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        if self.output_dim < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 output heads, got {}",
                self.output_dim
            )));
        }
        if let Arch::Mlp { hidden } = &self.arch {
            if hidden.iter().any(|&w| w == 0) {
                return Err(Error::invalid("hidden widths must be at least 1"));
            }
        }
        Ok(())
    }

    /// Glorot-uniform weights, zero biases, deterministic per seed.
    pub fn init_params(&self, seed: u64) -> Result<ModelParams> {
        self.validate()?;
        ModelParams::init(self.dims(), seed)
    }
}

/// Flat parameter vector plus the layer size chain describing its layout.
/// Each layer stores its weight matrix row-major (input x output) followed
/// by its bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    values: Vec<f64>,
    dims: Vec<usize>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl ModelParams {
    /// Low-level initializer on a raw size chain; `dims` must have at least
    /// two entries, all positive. Single-output scorers are allowed here.
    pub fn init(dims: Vec<usize>, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!(
                "layer sizes must be positive with at least input and output, got {dims:?}"
            )));
        }
        let mut rng = stream_rng(seed, "init");
        let mut values = Vec::with_capacity(param_count(&dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                values.push(rng.random_range(-bound..bound));
            }
            values.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(Self { values, dims })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!(
                "layer sizes must be positive with at least input and output, got {dims:?}"
            )));
        }
        let count = param_count(&dims);
        Ok(Self {
            values: vec![0.0; count],
            dims,
        })
    }

    pub fn from_values(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!(
                "layer sizes must be positive with at least input and output, got {dims:?}"
            )));
        }
        let expected = param_count(&dims);
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "layout {dims:?} needs {expected} parameters, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(Self { values, dims })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("dims has at least two entries")
    }

    fn layer_view(&self, offset: usize, fan_in: usize, fan_out: usize) -> (ArrayView2<'_, f64>, &[f64]) {
        let w_len = fan_in * fan_out;
        let weights = ArrayView2::from_shape((fan_in, fan_out), &self.values[offset..offset + w_len])
            .expect("layout matches dims");
        let biases = &self.values[offset + w_len..offset + w_len + fan_out];
        (weights, biases)
    }

    /// Scores for a batch: one row per example, one column per head.
    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.1)
    }

    /// Forward pass keeping every pre-activation for the backward pass.
    fn forward_cached(&self, x: &ArrayView2<f64>) -> Result<(Vec<Array2<f64>>, Array2<f64>)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} columns but the model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let layers = self.dims.len() - 1;
        let mut pre_acts = Vec::with_capacity(layers);
        let mut activation = x.to_owned();
        let mut offset = 0;
        for (l, w) in self.dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let (weights, biases) = self.layer_view(offset, fan_in, fan_out);
            offset += fan_in * fan_out + fan_out;
            let mut z = activation.dot(&weights);
            for mut row in z.rows_mut() {
                for (v, &b) in row.iter_mut().zip(biases) {
                    *v += b;
                }
            }
            let last = l == layers - 1;
            if !last {
                activation = z.mapv(|v| v.max(0.0));
            } else {
                activation = z.clone();
            }
            pre_acts.push(z);
        }
        let scores = activation;
        Ok((pre_acts, scores))
    }

    /// Value and parameter gradient of any differentiable objective of the
    /// scores. The closure returns the objective and its gradient in the
    /// scores; reverse mode propagates the rest.
    pub fn objective_grad<F>(&self, x: &ArrayView2<f64>, objective: F) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(&Array2<f64>) -> Result<(f64, Array2<f64>)>,
    {
        let (pre_acts, scores) = self.forward_cached(x)?;
        let (value, d_scores) = objective(&scores)?;
        if d_scores.dim() != scores.dim() {
            return Err(Error::invalid(format!(
                "objective gradient shape {:?} does not match scores {:?}",
                d_scores.dim(),
                scores.dim()
            )));
        }

        let layers = self.dims.len() - 1;
        let mut grad = vec![0.0; self.values.len()];
        let mut layer_offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.dims.windows(2) {
            layer_offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }

        let mut delta = d_scores;
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let prev_activation = if l == 0 {
                x.to_owned()
            } else {
                pre_acts[l - 1].mapv(|v| v.max(0.0))
            };
            let d_weights = prev_activation.t().dot(&delta);
            let off = layer_offsets[l];
            for i in 0..fan_in {
                for j in 0..fan_out {
                    grad[off + i * fan_out + j] = d_weights[(i, j)];
                }
            }
            for j in 0..fan_out {
                grad[off + fan_in * fan_out + j] = delta.column(j).sum();
            }
            if l > 0 {
                let (weights, _) = self.layer_view(off, fan_in, fan_out);
                let mut d_prev = delta.dot(&weights.t());
                // ReLU mask: inactive units pass no gradient.
                d_prev.zip_mut_with(&pre_acts[l - 1], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = d_prev;
            }
        }
        Ok((value, grad))
    }

    /// Negative-unlabeled risk of a batch and its exact parameter gradient.
    pub fn risk_and_grad(
        &self,
        x: &ArrayView2<f64>,
        decomp: &BinaryDecomposition,
        spec: &RiskSpec,
    ) -> Result<(f64, Vec<f64>)> {
        self.objective_grad(x, |scores| nu_risk_grad(&scores.view(), decomp, spec))
    }

    /// Supervised one-versus-rest risk and its exact parameter gradient.
    pub fn supervised_risk_and_grad(
        &self,
        x: &ArrayView2<f64>,
        labels: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        self.objective_grad(x, |scores| ovr_risk_grad(&scores.view(), labels))
    }

    /// Writes a one-line text header describing the layout, then the raw
    /// little-endian parameter values.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = BufWriter::new(File::create(path)?);
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        writeln!(file, "conu-params v1 dims={} count={}", dims.join(","), self.len())?;
        for &v in &self.values {
            file.write_all(&v.to_le_bytes())?;
        }
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = BufReader::new(File::open(path)?);
        let mut header = Vec::new();
        loop {
            let mut byte = [0u8; 1];
            file.read_exact(&mut byte).map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "missing checkpoint header".into(),
            })?;
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
        }
        let header = String::from_utf8(header).map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "checkpoint header is not UTF-8".into(),
        })?;
        let parse_err = |message: &str| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: message.into(),
        };
        let mut fields = header.split_whitespace();
        if fields.next() != Some("conu-params") || fields.next() != Some("v1") {
            return Err(parse_err("not a conu-params v1 checkpoint"));
        }
        let mut dims = None;
        let mut count = None;
        for field in fields {
            if let Some(list) = field.strip_prefix("dims=") {
                let parsed: std::result::Result<Vec<usize>, _> =
                    list.split(',').map(str::parse).collect();
                dims = Some(parsed.map_err(|_| parse_err("malformed dims list"))?);
            } else if let Some(value) = field.strip_prefix("count=") {
                count = Some(value.parse::<usize>().map_err(|_| parse_err("malformed count"))?);
            }
        }
        let dims = dims.ok_or_else(|| parse_err("header is missing dims"))?;
        let count = count.ok_or_else(|| parse_err("header is missing count"))?;
        if count != param_count(&dims) {
            return Err(parse_err("count does not match dims"));
        }
        let mut values = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            file.read_exact(&mut buf).map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: "checkpoint truncated".into(),
            })?;
            values.push(f64::from_le_bytes(buf));
        }
        if file.read(&mut buf)? != 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: "trailing bytes after parameters".into(),
            });
        }
        ModelParams::from_values(dims, values)
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamState {
    step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            step: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One update. Weight decay shrinks the parameters before the moment-based
/// delta is applied.
pub fn adam_step(state: &mut AdamState, params: &mut ModelParams, grads: &[f64]) -> Result<()> {
    if grads.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(Error::invalid(format!(
            "gradient length {} does not match {} parameters",
            grads.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let m_corr = 1.0 - state.beta1.powi(t);
    let v_corr = 1.0 - state.beta2.powi(t);
    let values = params.values_mut();
    for i in 0..values.len() {
        if state.weight_decay != 0.0 {
            values[i] -= state.lr * state.weight_decay * values[i];
        }
        let g = grads[i];
        state.first_moment[i] = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        state.second_moment[i] =
            state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.first_moment[i] / m_corr;
        let v_hat = state.second_moment[i] / v_corr;
        values[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Maximum relative error between the closure's analytic gradient and a
/// central finite difference, over all coordinates (or 256 evenly spaced
/// ones for large models). The error is scaled by
/// `max(|analytic|, |numeric|, 1)`. `guard` is evaluated at each perturbed
/// point; coordinates where it rejects (e.g. near a correction kink) are
/// skipped.
pub fn grad_check_guarded<F, G>(params: &ModelParams, f: F, h: f64, guard: G) -> Result<f64>
where
    F: Fn(&ModelParams) -> Result<(f64, Vec<f64>)>,
    G: Fn(&ModelParams) -> Result<bool>,
{
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step size must be positive, got {h}")));
    }
    let (_, analytic) = f(params)?;
    if analytic.len() != params.len() {
        return Err(Error::invalid(format!(
            "closure returned {} gradient entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let n = params.len();
    let coords: Vec<usize> = if n <= 512 {
        (0..n).collect()
    } else {
        let samples = 256;
        (0..samples).map(|i| i * (n - 1) / (samples - 1)).collect()
    };
    let mut max_rel = 0.0f64;
    let mut perturbed = params.clone();
    for &i in &coords {
        let original = params.values()[i];
        perturbed.values_mut()[i] = original + h;
        let ok_plus = guard(&perturbed)?;
        let plus = f(&perturbed)?.0;
        perturbed.values_mut()[i] = original - h;
        let ok_minus = guard(&perturbed)?;
        let minus = f(&perturbed)?.0;
        perturbed.values_mut()[i] = original;
        if !(ok_plus && ok_minus) {
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1.0);
        max_rel = max_rel.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(max_rel)
}

/// [`grad_check_guarded`] with no exclusions.
pub fn grad_check<F>(params: &ModelParams, f: F, h: f64) -> Result<f64>
where
    F: Fn(&ModelParams) -> Result<(f64, Vec<f64>)>,
{
    grad_check_guarded(params, f, h, |_| Ok(true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_complementary, make_gaussian_mixture, true_priors, ClassPriors, TransitionSpec};
    use crate::risk::{min_abs_positive_part, Correction};
    use ndarray::{array, Array2};

    #[test]
    fn linear_parameter_count() {
        let params = ModelConfig::linear(2, 3).init_params(1).unwrap();
        assert_eq!(params.len(), 2 * 3 + 3);
    }

    #[test]
    fn mlp_parameter_count() {
        let params = ModelConfig::mlp(784, vec![300, 300, 300], 10).init_params(1).unwrap();
        assert_eq!(params.len(), 784 * 300 + 300 + 2 * (300 * 300 + 300) + 300 * 10 + 10);
        assert_eq!(params.len(), 419_110);
    }

    #[test]
    fn init_is_deterministic_and_biases_are_zero() {
        let config = ModelConfig::mlp(5, vec![7], 3);
        let a = config.init_params(11).unwrap();
        let b = config.init_params(11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, config.init_params(12).unwrap());
        // First layer biases sit right after the 5x7 weight block.
        let bound = (6.0f64 / 12.0).sqrt();
        assert!(a.values()[..35].iter().all(|w| w.abs() < bound));
        assert!(a.values()[35..42].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn forward_zero_params_gives_zero_scores() {
        let params = ModelParams::zeros(vec![3, 4, 2]).unwrap();
        let x = Array2::from_elem((5, 3), 1.7);
        let scores = params.forward(&x.view()).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn forward_matches_hand_linear_arithmetic() {
        // One feature, two heads: w = (2, -1), b = (0, 1), x = 3.
        let params = ModelParams::from_values(vec![1, 2], vec![2.0, -1.0, 0.0, 1.0]).unwrap();
        let scores = params.forward(&array![[3.0]].view()).unwrap();
        assert!((scores[(0, 0)] - 6.0).abs() < 1e-12);
        assert!((scores[(0, 1)] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn relu_blocks_negative_preactivations() {
        // Hidden unit gets -2 at x = 3, so only the output bias survives.
        let params = ModelParams::from_values(vec![1, 1, 1], vec![1.0, -5.0, 7.0, 0.25]).unwrap();
        let scores = params.forward(&array![[3.0]].view()).unwrap();
        assert_eq!(scores[(0, 0)], 0.25);
        // Positive pre-activation passes through.
        let scores = params.forward(&array![[6.0]].view()).unwrap();
        assert_eq!(scores[(0, 0)], 7.0 * 1.0 + 0.25);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let params = ModelParams::zeros(vec![3, 2]).unwrap();
        let x = Array2::zeros((4, 2));
        assert!(params.forward(&x.view()).is_err());
    }

    fn hand_nu_setup() -> (Array2<f64>, crate::data::BinaryDecomposition, ClassPriors) {
        let x = array![[1.0, 0.5], [-0.5, 1.0], [0.25, -1.0], [2.0, 0.5], [0.5, 2.0], [-1.0, -1.5]];
        let bits = array![
            [true, false, false],
            [false, true, false],
            [false, false, true],
            [true, false, false],
            [false, true, false],
            [false, false, false]
        ];
        let decomp = crate::data::BinaryDecomposition::from_bits(&bits);
        let priors = ClassPriors::new(vec![0.2, 0.3, 0.5], vec![0.3, 0.3, 0.2]).unwrap();
        (x, decomp, priors)
    }

    #[test]
    fn bias_gradient_at_zero_params_matches_hand_derivation() {
        // At zero parameters every score is 0, the loss derivative is
        // -1/2, and the positive part is pi_k ln2 > 0, so the class-k
        // bias gradient collapses to (1 - 2 pi_k) / 2 regardless of the
        // batch composition.
        let (x, decomp, priors) = hand_nu_setup();
        let params = ModelParams::zeros(vec![2, 3]).unwrap();
        let spec = crate::risk::RiskSpec::new(Correction::Abs, priors.clone());
        let (_, grad) = params.risk_and_grad(&x.view(), &decomp, &spec).unwrap();
        for k in 0..3 {
            let expected = (1.0 - 2.0 * priors.pi()[k]) / 2.0;
            let bias = grad[2 * 3 + k];
            assert!((bias - expected).abs() < 1e-12, "class {k}: {bias} vs {expected}");
        }
    }

    #[test]
    fn risk_value_matches_standalone_risk() {
        let (x, decomp, priors) = hand_nu_setup();
        let params = ModelConfig::mlp(2, vec![8], 3).init_params(3).unwrap();
        let spec = crate::risk::RiskSpec::new(Correction::Abs, priors.clone());
        let (value, _) = params.risk_and_grad(&x.view(), &decomp, &spec).unwrap();
        let scores = params.forward(&x.view()).unwrap();
        let direct =
            crate::risk::corrected_risk(&scores.view(), &decomp, &priors, Correction::Abs).unwrap();
        assert!((value - direct).abs() < 1e-14);
    }

    #[test]
    fn grad_check_passes_for_linear_models() {
        let ds = make_gaussian_mixture(3, 12, 3, 1.5, 21).unwrap();
        let cds = gen_complementary(&ds, &TransitionSpec::Uniform, 22).unwrap();
        let decomp = crate::data::BinaryDecomposition::from_bits(cds.comp_labels());
        let priors = true_priors(&ds.empirical_priors(), &TransitionSpec::Uniform).unwrap();
        let x = cds.features().view();
        let params = ModelConfig::linear(3, 3).init_params(23).unwrap();

        let spec = crate::risk::RiskSpec::new(Correction::Identity, priors.clone());
        let err = grad_check(&params, |p| p.risk_and_grad(&x, &decomp, &spec), 1e-5).unwrap();
        assert!(err < 1e-5, "unbiased risk: {err}");

        let labels = ds.labels().to_vec();
        let err = grad_check(&params, |p| p.supervised_risk_and_grad(&x, &labels), 1e-5).unwrap();
        assert!(err < 1e-5, "supervised risk: {err}");
    }

    #[test]
    fn grad_check_handles_negative_positive_parts_away_from_kinks() {
        // A hand-built two-layer net computing the identity map, with the
        // flagged rows of class 1 placed where its scores are strongly
        // negative: the class-1 positive part is well below zero while
        // class 2 stays positive, so the absolute-value branch is
        // exercised on both sides.
        let params = ModelParams::from_values(
            vec![2, 4, 2],
            vec![
                1.0, 0.0, -1.0, 0.0, // W1 row for x0
                0.0, 1.0, 0.0, -1.0, // W1 row for x1
                0.0, 0.0, 0.0, 0.0, // b1
                1.0, 0.0, // W2 rows: h0 -> s0
                0.0, 1.0, // h1 -> s1
                -1.0, 0.0, // h2 -> -s0
                0.0, -1.0, // h3 -> -s1
                0.0, 0.0, // b2
            ],
        )
        .unwrap();
        let x = array![[-3.0, 3.0], [3.0, -3.0], [3.0, 3.0], [-3.0, -3.0]];
        let bits = array![[true, false], [false, true], [false, false], [false, false]];
        let decomp = crate::data::BinaryDecomposition::from_bits(&bits);
        let priors = ClassPriors::new(vec![0.3, 0.7], vec![0.2, 0.1]).unwrap();
        let scores = params.forward(&x.view()).unwrap();
        let pp0 = crate::risk::positive_part(&scores.view(), &decomp, &priors, 0).unwrap();
        assert!(pp0 < -0.1, "setup must produce a negative positive part, got {pp0}");
        assert!(min_abs_positive_part(&scores.view(), &decomp, &priors).unwrap() > 1e-3);

        let spec = crate::risk::RiskSpec::new(Correction::Abs, priors.clone());
        let err = grad_check_guarded(
            &params,
            |p| p.risk_and_grad(&x.view(), &decomp, &spec),
            1e-5,
            |p| {
                let scores = p.forward(&x.view())?;
                Ok(min_abs_positive_part(&scores.view(), &decomp, &priors)? > 1e-3)
            },
        )
        .unwrap();
        assert!(err < 1e-4, "corrected risk near negative positive part: {err}");
    }

    #[test]
    fn grad_check_constant_closure_is_zero() {
        let params = ModelConfig::linear(2, 2).init_params(5).unwrap();
        let n = params.len();
        let err = grad_check(&params, |_| Ok((2.5, vec![0.0; n])), 1e-5).unwrap();
        assert!(err < 1e-9);
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut params = ModelConfig::linear(3, 2).init_params(7).unwrap();
        let before = params.clone();
        let mut adam = AdamState::new(params.len(), 1e-3, 0.0);
        let zeros = vec![0.0; params.len()];
        for _ in 0..5 {
            adam_step(&mut adam, &mut params, &zeros).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut params = ModelParams::zeros(vec![2, 2]).unwrap();
        let mut adam = AdamState::new(params.len(), 1e-3, 0.0);
        let grads = vec![1.0, -2.0, 0.5, -0.25];
        adam_step(&mut adam, &mut params, &grads).unwrap();
        for (v, g) in params.values().iter().zip(&grads) {
            assert!((v.abs() - 1e-3).abs() < 1e-6, "|delta| {} vs lr", v.abs());
            assert_eq!(v.signum(), -g.signum());
        }
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn adam_weight_decay_is_decoupled() {
        let mut params = ModelParams::from_values(vec![1, 1], vec![2.0, 0.0]).unwrap();
        let mut adam = AdamState::new(2, 0.1, 0.5);
        adam_step(&mut adam, &mut params, &[0.0, 0.0]).unwrap();
        // Zero gradient: only the decay term acts, p <- p - lr*wd*p.
        assert!((params.values()[0] - 2.0 * (1.0 - 0.1 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_length_mismatch() {
        let mut params = ModelParams::zeros(vec![2, 2]).unwrap();
        let mut adam = AdamState::new(params.len(), 1e-3, 0.0);
        assert!(adam_step(&mut adam, &mut params, &[0.0]).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let params = ModelConfig::mlp(4, vec![6, 5], 3).init_params(31).unwrap();
        params.save(&path).unwrap();
        let loaded = ModelParams::load(&path).unwrap();
        assert_eq!(params, loaded);
        // Header is a single readable line.
        let bytes = std::fs::read(&path).unwrap();
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header = std::str::from_utf8(&bytes[..newline]).unwrap();
        assert_eq!(header, format!("conu-params v1 dims=4,6,5,3 count={}", params.len()));
        assert_eq!(bytes.len() - newline - 1, params.len() * 8);
    }

    #[test]
    fn checkpoint_load_rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"not a checkpoint\n").unwrap();
        assert!(matches!(ModelParams::load(&path), Err(crate::Error::Parse { .. })));
        std::fs::write(&path, b"conu-params v1 dims=2,2 count=6\n\x00\x00").unwrap();
        assert!(ModelParams::load(&path).is_err());
    }

    #[test]
    fn objective_grad_rejects_bad_gradient_shape() {
        let params = ModelParams::zeros(vec![2, 2]).unwrap();
        let x = Array2::zeros((3, 2));
        let result = params.objective_grad(&x.view(), |_| Ok((0.0, Array2::zeros((1, 1)))));
        assert!(result.is_err());
    }
}
