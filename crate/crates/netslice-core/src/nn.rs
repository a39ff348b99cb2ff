//! Minimal differentiable-function substrate: fixed-topology MLPs with
//! analytic gradients, an adaptive-moment optimizer, and a mean-field
//! Gaussian variational wrapper for probabilistic regression.
//!
//! There is no general autodiff graph here; the topology is a plain chain
//! of affine layers with rectifier hidden activations, which is all the
//! policy, critic, estimator, and modifier networks need.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    /// Squash every output into (0, 1).
    Sigmoid,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`], with the argument clamped away from {0, 1}.
pub fn logit(y: f64) -> f64 {
    let y = y.clamp(1e-9, 1.0 - 1e-9);
    (y / (1.0 - y)).ln()
}

/// One affine layer; `w` is row-major `[rows × cols]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
            rows,
            cols,
        }
    }
}

/// Fixed-topology multilayer perceptron with rectifier hidden units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// `[input, hidden..., output]` widths.
    pub dims: Vec<usize>,
    pub output: OutputActivation,
    pub layers: Vec<Layer>,
}

/// Intermediate activations kept for backpropagation.
pub struct ForwardCache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl ForwardCache {
    /// Smallest |pre-activation| over all hidden (rectified) layers, or
    /// +inf when the net has none. Gradients are exact only away from the
    /// rectifier kink, so finite-difference checks should skip inputs
    /// where this is within the perturbation scale of zero.
    pub fn min_hidden_pre_magnitude(&self) -> f64 {
        self.pre[..self.pre.len().saturating_sub(1)]
            .iter()
            .flat_map(|z| z.iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Parameter gradients, same shapes as [`Mlp::layers`], plus the gradient
/// with respect to the network input.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
    pub input: Vec<f64>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.rows, l.cols))
                .collect(),
            input: vec![0.0; net.dims[0]],
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            for (x, y) in a.w.iter_mut().zip(b.w.iter()) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(b.b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in self.layers.iter_mut() {
            for x in l.w.iter_mut() {
                *x *= s;
            }
            for x in l.b.iter_mut() {
                *x *= s;
            }
        }
    }
}

impl Mlp {
    /// All-zero parameters; call [`Mlp::init`] for a trainable start.
    pub fn zeros(dims: &[usize], output: OutputActivation) -> Self {
        assert!(dims.len() >= 2, "need at least input and output widths");
        let layers = dims
            .windows(2)
            .map(|w| Layer::zeros(w[1], w[0]))
            .collect();
        Mlp {
            dims: dims.to_vec(),
            output,
            layers,
        }
    }

    /// Fan-in-scaled uniform initialization.
    pub fn init<R: Rng>(dims: &[usize], output: OutputActivation, rng: &mut R) -> Self {
        let mut net = Self::zeros(dims, output);
        for layer in net.layers.iter_mut() {
            let bound = (1.0 / layer.cols as f64).sqrt();
            for w in layer.w.iter_mut() {
                *w = rng.gen_range(-bound..bound);
            }
            for b in layer.b.iter_mut() {
                *b = 0.0;
            }
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).output
    }

    pub fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        assert_eq!(
            x.len(),
            self.input_dim(),
            "input width mismatch: expected {}, got {}",
            self.input_dim(),
            x.len()
        );
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut cur = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = layer.b.clone();
            for r in 0..layer.rows {
                let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                let mut acc = 0.0;
                for (wv, xv) in row.iter().zip(cur.iter()) {
                    acc += wv * xv;
                }
                z[r] += acc;
            }
            inputs.push(std::mem::take(&mut cur));
            let last = li + 1 == n_layers;
            cur = if last {
                match self.output {
                    OutputActivation::Identity => z.clone(),
                    OutputActivation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
                }
            } else {
                z.iter().map(|&v| v.max(0.0)).collect()
            };
            pre.push(z);
        }
        ForwardCache {
            inputs,
            pre,
            output: cur,
        }
    }

    /// Analytic gradient of `upstream · output` with respect to every
    /// parameter (and the input), given a cache from [`Mlp::forward_cached`].
    pub fn backprop(&self, cache: &ForwardCache, upstream: &[f64]) -> MlpGrads {
        assert_eq!(upstream.len(), self.output_dim());
        let mut grads = MlpGrads::zeros_like(self);
        // Delta at the last layer's pre-activation.
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = match self.output {
            OutputActivation::Identity => upstream.to_vec(),
            OutputActivation::Sigmoid => upstream
                .iter()
                .zip(cache.output.iter())
                .map(|(&u, &y)| u * y * (1.0 - y))
                .collect(),
        };
        for li in (0..=last).rev() {
            let layer = &self.layers[li];
            if li != last {
                for (d, z) in delta.iter_mut().zip(cache.pre[li].iter()) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let g = &mut grads.layers[li];
            let input = &cache.inputs[li];
            for r in 0..layer.rows {
                let d = delta[r];
                g.b[r] = d;
                let grow = &mut g.w[r * layer.cols..(r + 1) * layer.cols];
                for (gw, xv) in grow.iter_mut().zip(input.iter()) {
                    *gw = d * xv;
                }
            }
            // Propagate delta to the layer input.
            let mut next = vec![0.0; layer.cols];
            for r in 0..layer.rows {
                let d = delta[r];
                let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                for (nv, wv) in next.iter_mut().zip(row.iter()) {
                    *nv += d * wv;
                }
            }
            if li == 0 {
                grads.input = next;
                break;
            }
            delta = next;
        }
        grads
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn copy_to_flat(&self, out: &mut Vec<f64>) {
        out.clear();
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
    }

    pub fn copy_from_flat(&mut self, src: &[f64]) {
        let mut i = 0;
        for l in self.layers.iter_mut() {
            let nw = l.w.len();
            l.w.copy_from_slice(&src[i..i + nw]);
            i += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&src[i..i + nb]);
            i += nb;
        }
        debug_assert_eq!(i, src.len());
    }
}

impl MlpGrads {
    pub fn copy_to_flat(&self, out: &mut Vec<f64>) {
        out.clear();
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
    }
}

/// Adaptive-moment first-order optimizer over a flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// One bias-corrected update; `params` and `grads` are flat views.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Convenience owner pairing an [`Mlp`] with its optimizer state and the
/// scratch flats the update needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedMlp {
    pub net: Mlp,
    pub opt: Adam,
    #[serde(skip)]
    flat_p: Vec<f64>,
    #[serde(skip)]
    flat_g: Vec<f64>,
}

impl TrainedMlp {
    pub fn new(net: Mlp, lr: f64) -> Self {
        let n = net.param_count();
        TrainedMlp {
            net,
            opt: Adam::new(lr, n),
            flat_p: Vec::with_capacity(n),
            flat_g: Vec::with_capacity(n),
        }
    }

    pub fn apply(&mut self, grads: &MlpGrads) {
        self.net.copy_to_flat(&mut self.flat_p);
        grads.copy_to_flat(&mut self.flat_g);
        self.opt.step(&mut self.flat_p, &self.flat_g);
        self.net.copy_from_flat(&self.flat_p);
    }
}

/// Mean-field Gaussian distribution over the parameters of an MLP, with a
/// learned homoscedastic observation-noise scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianParamDist {
    pub mean: Mlp,
    /// Per-parameter log standard deviation, stored in an MLP of the same
    /// shape as `mean`.
    pub log_std: Mlp,
    /// Prior is N(0, prior_std^2) per parameter.
    pub prior_std: f64,
    pub log_obs_noise: f64,
}

/// Gradients of the negative ELBO with respect to the variational parameters.
#[derive(Debug, Clone)]
pub struct DistGrads {
    pub mean: MlpGrads,
    pub log_std: MlpGrads,
    pub log_obs_noise: f64,
}

const LOG_STD_MIN: f64 = -8.0;
const LOG_STD_MAX: f64 = 2.0;

impl GaussianParamDist {
    pub fn new<R: Rng>(
        dims: &[usize],
        prior_std: f64,
        init_log_std: f64,
        rng: &mut R,
    ) -> Self {
        let mean = Mlp::init(dims, OutputActivation::Identity, rng);
        let mut log_std = Mlp::zeros(dims, OutputActivation::Identity);
        for l in log_std.layers.iter_mut() {
            for w in l.w.iter_mut() {
                *w = init_log_std;
            }
            for b in l.b.iter_mut() {
                *b = init_log_std;
            }
        }
        GaussianParamDist {
            mean,
            log_std,
            prior_std,
            log_obs_noise: (0.1f64).ln(),
        }
    }

    /// Reparameterized sample: `param = mean + std * xi`, with the noise
    /// vector returned so gradients can be routed back through the sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Mlp, Vec<f64>) {
        let mut mean_flat = Vec::new();
        let mut std_flat = Vec::new();
        self.mean.copy_to_flat(&mut mean_flat);
        self.log_std.copy_to_flat(&mut std_flat);
        let mut xi = Vec::with_capacity(mean_flat.len());
        for i in 0..mean_flat.len() {
            let z: f64 = StandardNormal.sample(rng);
            xi.push(z);
            let sd = std_flat[i].clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
            mean_flat[i] += sd * z;
        }
        let mut net = self.mean.clone();
        net.copy_from_flat(&mean_flat);
        (net, xi)
    }

    /// Closed-form KL divergence from the variational posterior to the
    /// N(0, prior_std^2) prior, summed over all parameters. Non-negative.
    pub fn kl_to_prior(&self) -> f64 {
        let mut mean_flat = Vec::new();
        let mut ls_flat = Vec::new();
        self.mean.copy_to_flat(&mut mean_flat);
        self.log_std.copy_to_flat(&mut ls_flat);
        let sp = self.prior_std;
        let mut kl = 0.0;
        for (mu, ls) in mean_flat.iter().zip(ls_flat.iter()) {
            let ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let sq = ls.exp();
            kl += sp.ln() - ls + (sq * sq + mu * mu) / (2.0 * sp * sp) - 0.5;
        }
        kl
    }

    pub fn obs_noise_std(&self) -> f64 {
        self.log_obs_noise.exp().max(1e-6)
    }

    /// Monte-Carlo predictive mean and standard deviation at one input.
    /// The returned sigma combines parameter uncertainty with the learned
    /// observation noise. Deterministic given the RNG state.
    pub fn predict<R: Rng + ?Sized>(&self, x: &[f64], n_samples: usize, rng: &mut R) -> (f64, f64) {
        assert!(n_samples >= 1);
        let mut ys = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let (net, _) = self.sample(rng);
            ys.push(net.forward(x)[0]);
        }
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = if ys.len() > 1 {
            ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (ys.len() - 1) as f64
        } else {
            0.0
        };
        let obs = self.obs_noise_std();
        (mean, (var + obs * obs).sqrt())
    }
}

/// Negative ELBO and its gradients: reparameterized Gaussian likelihood plus
/// the analytic KL term weighted by `kl_weight`.
///
/// `targets` are scalar per input; inputs are rows of `xs`.
pub fn elbo_loss<R: Rng>(
    dist: &GaussianParamDist,
    xs: &[Vec<f64>],
    targets: &[f64],
    n_samples: usize,
    kl_weight: f64,
    rng: &mut R,
) -> (f64, DistGrads) {
    assert!(n_samples >= 1);
    assert_eq!(xs.len(), targets.len());
    assert!(!xs.is_empty());

    let mut mean_grads = MlpGrads::zeros_like(&dist.mean);
    let mut ls_grads = MlpGrads::zeros_like(&dist.log_std);
    let mut obs_grad = 0.0;
    let mut nll_total = 0.0;

    let s = dist.obs_noise_std();
    let inv_s2 = 1.0 / (s * s);
    let n_data = xs.len() as f64;

    let mut ls_flat = Vec::new();
    dist.log_std.copy_to_flat(&mut ls_flat);

    let mut sample_flat_g = Vec::new();
    for _ in 0..n_samples {
        let (net, xi) = dist.sample(rng);
        let mut per_sample = MlpGrads::zeros_like(&net);
        for (x, &y) in xs.iter().zip(targets.iter()) {
            let cache = net.forward_cached(x);
            let yhat = cache.output[0];
            let resid = yhat - y;
            nll_total += 0.5 * resid * resid * inv_s2 + s.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln();
            // d nll / d yhat
            let g = net.backprop(&cache, &[resid * inv_s2]);
            per_sample.accumulate(&g);
            // d nll / d log s = 1 - resid^2 / s^2
            obs_grad += 1.0 - resid * resid * inv_s2;
        }
        // Route the sampled-parameter gradient to mean and log-std.
        per_sample.copy_to_flat(&mut sample_flat_g);
        accumulate_flat(&mut mean_grads, &sample_flat_g);
        let mut ls_contrib = sample_flat_g.clone();
        for i in 0..ls_contrib.len() {
            let sd = ls_flat[i].clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
            ls_contrib[i] *= sd * xi[i];
        }
        accumulate_flat(&mut ls_grads, &ls_contrib);
    }

    let scale = 1.0 / (n_samples as f64 * n_data);
    mean_grads.scale(scale);
    ls_grads.scale(scale);
    obs_grad *= scale;
    let nll = nll_total * scale;

    // KL term and its gradients.
    let kl = dist.kl_to_prior();
    let mut mean_flat = Vec::new();
    dist.mean.copy_to_flat(&mut mean_flat);
    let sp2 = dist.prior_std * dist.prior_std;
    let mut mg_flat = Vec::new();
    mean_grads.copy_to_flat(&mut mg_flat);
    let mut lg_flat = Vec::new();
    ls_grads.copy_to_flat(&mut lg_flat);
    for i in 0..mean_flat.len() {
        mg_flat[i] += kl_weight * mean_flat[i] / sp2;
        let ls = ls_flat[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let sq = ls.exp();
        lg_flat[i] += kl_weight * (sq * sq / sp2 - 1.0);
    }
    copy_flat_into(&mut mean_grads, &mg_flat);
    copy_flat_into(&mut ls_grads, &lg_flat);

    let loss = nll + kl_weight * kl;
    (
        loss,
        DistGrads {
            mean: mean_grads,
            log_std: ls_grads,
            log_obs_noise: obs_grad,
        },
    )
}

fn accumulate_flat(grads: &mut MlpGrads, flat: &[f64]) {
    let mut i = 0;
    for l in grads.layers.iter_mut() {
        for x in l.w.iter_mut() {
            *x += flat[i];
            i += 1;
        }
        for x in l.b.iter_mut() {
            *x += flat[i];
            i += 1;
        }
    }
}

fn copy_flat_into(grads: &mut MlpGrads, flat: &[f64]) {
    let mut i = 0;
    for l in grads.layers.iter_mut() {
        for x in l.w.iter_mut() {
            *x = flat[i];
            i += 1;
        }
        for x in l.b.iter_mut() {
            *x = flat[i];
            i += 1;
        }
    }
}

/// Trainer bundling a [`GaussianParamDist`] with optimizers for its mean,
/// log-std, and observation-noise parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationalTrainer {
    pub dist: GaussianParamDist,
    opt_mean: Adam,
    opt_ls: Adam,
    opt_obs: Adam,
    #[serde(skip)]
    flat_p: Vec<f64>,
    #[serde(skip)]
    flat_g: Vec<f64>,
}

impl VariationalTrainer {
    pub fn new(dist: GaussianParamDist, lr: f64) -> Self {
        let n = dist.mean.param_count();
        VariationalTrainer {
            dist,
            opt_mean: Adam::new(lr, n),
            opt_ls: Adam::new(lr, n),
            opt_obs: Adam::new(lr, 1),
            flat_p: Vec::new(),
            flat_g: Vec::new(),
        }
    }

    pub fn apply(&mut self, grads: &DistGrads) {
        self.dist.mean.copy_to_flat(&mut self.flat_p);
        grads.mean.copy_to_flat(&mut self.flat_g);
        self.opt_mean.step(&mut self.flat_p, &self.flat_g);
        self.dist.mean.copy_from_flat(&self.flat_p);

        self.dist.log_std.copy_to_flat(&mut self.flat_p);
        grads.log_std.copy_to_flat(&mut self.flat_g);
        self.opt_ls.step(&mut self.flat_p, &self.flat_g);
        for v in self.flat_p.iter_mut() {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
        self.dist.log_std.copy_from_flat(&self.flat_p);

        let mut p = [self.dist.log_obs_noise];
        self.opt_obs.step(&mut p, &[grads.log_obs_noise]);
        self.dist.log_obs_noise = p[0].clamp(LOG_STD_MIN, LOG_STD_MAX);
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format: JSON with named row-major tensors.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ArchDoc {
    dims: Vec<usize>,
    hidden: String,
    output: OutputActivation,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    schema_version: u32,
    #[serde(default)]
    variational: bool,
    arch: ArchDoc,
    tensors: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    scalars: BTreeMap<String, f64>,
}

pub fn mlp_to_json(net: &Mlp) -> serde_json::Value {
    let mut tensors = BTreeMap::new();
    for (i, l) in net.layers.iter().enumerate() {
        tensors.insert(format!("layer{i}.w"), l.w.clone());
        tensors.insert(format!("layer{i}.b"), l.b.clone());
    }
    serde_json::to_value(CheckpointDoc {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        variational: false,
        arch: ArchDoc {
            dims: net.dims.clone(),
            hidden: "relu".into(),
            output: net.output,
        },
        tensors,
        scalars: BTreeMap::new(),
    })
    .expect("checkpoint serialization cannot fail")
}

pub fn mlp_from_json(value: &serde_json::Value) -> Result<Mlp, NnError> {
    let doc: CheckpointDoc = serde_json::from_value(value.clone())
        .map_err(|e| NnError::MalformedCheckpoint(e.to_string()))?;
    if doc.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(NnError::MalformedCheckpoint(format!(
            "unsupported schema_version {}",
            doc.schema_version
        )));
    }
    let mut net = Mlp::zeros(&doc.arch.dims, doc.arch.output);
    for (i, l) in net.layers.iter_mut().enumerate() {
        let w = doc
            .tensors
            .get(&format!("layer{i}.w"))
            .ok_or_else(|| NnError::MalformedCheckpoint(format!("missing layer{i}.w")))?;
        let b = doc
            .tensors
            .get(&format!("layer{i}.b"))
            .ok_or_else(|| NnError::MalformedCheckpoint(format!("missing layer{i}.b")))?;
        if w.len() != l.w.len() || b.len() != l.b.len() {
            return Err(NnError::MalformedCheckpoint(format!(
                "tensor size mismatch at layer {i}"
            )));
        }
        l.w.copy_from_slice(w);
        l.b.copy_from_slice(b);
    }
    Ok(net)
}

pub fn dist_to_json(dist: &GaussianParamDist) -> serde_json::Value {
    let mut tensors = BTreeMap::new();
    for (i, l) in dist.mean.layers.iter().enumerate() {
        tensors.insert(format!("mean.layer{i}.w"), l.w.clone());
        tensors.insert(format!("mean.layer{i}.b"), l.b.clone());
    }
    for (i, l) in dist.log_std.layers.iter().enumerate() {
        tensors.insert(format!("log_std.layer{i}.w"), l.w.clone());
        tensors.insert(format!("log_std.layer{i}.b"), l.b.clone());
    }
    let mut scalars = BTreeMap::new();
    scalars.insert("prior_std".to_string(), dist.prior_std);
    scalars.insert("log_obs_noise".to_string(), dist.log_obs_noise);
    serde_json::to_value(CheckpointDoc {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        variational: true,
        arch: ArchDoc {
            dims: dist.mean.dims.clone(),
            hidden: "relu".into(),
            output: dist.mean.output,
        },
        tensors,
        scalars,
    })
    .expect("checkpoint serialization cannot fail")
}

pub fn dist_from_json(value: &serde_json::Value) -> Result<GaussianParamDist, NnError> {
    let doc: CheckpointDoc = serde_json::from_value(value.clone())
        .map_err(|e| NnError::MalformedCheckpoint(e.to_string()))?;
    if !doc.variational {
        return Err(NnError::MalformedCheckpoint(
            "expected a variational checkpoint".into(),
        ));
    }
    let load = |prefix: &str| -> Result<Mlp, NnError> {
        let mut net = Mlp::zeros(&doc.arch.dims, doc.arch.output);
        for (i, l) in net.layers.iter_mut().enumerate() {
            let w = doc
                .tensors
                .get(&format!("{prefix}.layer{i}.w"))
                .ok_or_else(|| NnError::MalformedCheckpoint(format!("missing {prefix}.layer{i}.w")))?;
            let b = doc
                .tensors
                .get(&format!("{prefix}.layer{i}.b"))
                .ok_or_else(|| NnError::MalformedCheckpoint(format!("missing {prefix}.layer{i}.b")))?;
            l.w.copy_from_slice(w);
            l.b.copy_from_slice(b);
        }
        Ok(net)
    };
    Ok(GaussianParamDist {
        mean: load("mean")?,
        log_std: load("log_std")?,
        prior_std: *doc
            .scalars
            .get("prior_std")
            .ok_or_else(|| NnError::MalformedCheckpoint("missing prior_std".into()))?,
        log_obs_noise: *doc
            .scalars
            .get("log_obs_noise")
            .ok_or_else(|| NnError::MalformedCheckpoint("missing log_obs_noise".into()))?,
    })
}
