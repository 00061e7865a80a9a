//! Simplex-valued ReLU networks.
//!
//! A [`SimplexNet`] is a dense ReLU MLP whose output logits are hard-clamped
//! to `[−M, M]` and pushed through a softmax; the resulting probability
//! vector is read as barycentric coefficients over a [`SimplexFrame`], so
//! the network maps every input into the simplex. Weight magnitudes are kept
//! within `[−J, J]` by clipping after every update. The sparsity budget of
//! the theoretical network class is reported (`param_stats`) but not
//! enforced during optimization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contrastive::hinge_grad_factor;
use crate::error::{Error, Result};
use crate::pairgen::PairwiseSample;
use crate::rng::stream;
use crate::simplex::SimplexFrame;

/// Entries at or below this magnitude count as structural zeros in the
/// sparsity report.
pub const SPARSITY_EPS: f64 = 1e-12;

/// Parameters of a dense ReLU MLP: `L` affine layers with ReLU between them
/// (`layer_dims` has length `L + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_dims: Vec<usize>,
    /// `weights[l]` is `layer_dims[l+1] × layer_dims[l]`, row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    /// Max-magnitude bound `J`; enforced by clipping.
    max_weight: f64,
    /// Logit clamp `M`; enforces the sup-norm bound architecturally.
    logit_clamp: f64,
}

impl MlpParams {
    pub fn zeros(layer_dims: Vec<usize>, max_weight: f64, logit_clamp: f64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::invalid("an MLP needs at least one affine layer"));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if !(max_weight > 0.0) || !(logit_clamp > 0.0) {
            return Err(Error::invalid("J and M must be positive"));
        }
        let weights = (0..layer_dims.len() - 1)
            .map(|l| vec![0.0; layer_dims[l + 1] * layer_dims[l]])
            .collect();
        let biases = (0..layer_dims.len() - 1)
            .map(|l| vec![0.0; layer_dims[l + 1]])
            .collect();
        Ok(MlpParams {
            layer_dims,
            weights,
            biases,
            max_weight,
            logit_clamp,
        })
    }

    /// He-style deterministic initialization: weights uniform in
    /// `±min(J, √(6/fan_in))`, biases zero.
    pub fn he_init(
        layer_dims: Vec<usize>,
        max_weight: f64,
        logit_clamp: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, max_weight, logit_clamp)?;
        let mut rng = stream(seed, 0);
        use rand::Rng;
        for l in 0..net.weights.len() {
            let fan_in = net.layer_dims[l] as f64;
            let bound = (6.0 / fan_in).sqrt().min(net.max_weight);
            for w in &mut net.weights[l] {
                *w = bound * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        Ok(net)
    }

    /// Number of affine layers `L`.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn max_weight_bound(&self) -> f64 {
        self.max_weight
    }

    pub fn logit_clamp(&self) -> f64 {
        self.logit_clamp
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Clamps every weight and bias into `[−J, J]`. Idempotent.
    pub fn clip(&mut self) {
        let j = self.max_weight;
        for layer in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for w in layer {
                *w = w.clamp(-j, j);
            }
        }
    }
}

/// Pure report of the network-class parameters realized by a net.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamStats {
    /// Number of affine layers.
    pub depth: usize,
    /// Largest weight/bias magnitude.
    pub max_magnitude: f64,
    /// Count of entries with magnitude above [`SPARSITY_EPS`].
    pub sparsity: usize,
    /// Logit clamp `M`.
    pub logit_bound: f64,
    /// Weight bound `J`.
    pub weight_bound: f64,
}

/// Gradient of the empirical risk with the same shapes as the network
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(mlp: &MlpParams) -> Self {
        Gradients {
            weights: mlp.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn scale(&mut self, factor: f64) {
        for layer in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for g in layer {
                *g *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|layer| layer.iter().all(|g| g.is_finite()))
    }

    /// Flattens into one vector (weights then biases, layer by layer); used
    /// by the finite-difference checks.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in self.weights.iter().chain(self.biases.iter()) {
            out.extend_from_slice(layer);
        }
        out
    }
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Clamped logits, entrywise in `[−M, M]`.
    pub logits: Vec<f64>,
    /// Softmax of the clamped logits: the barycentric coefficients.
    pub probs: Vec<f64>,
    /// The embedded point `Σ_i probs_i · v_i ∈ Δ^d`.
    pub point: Vec<f64>,
}

/// Reusable per-branch buffers for forward/backward passes.
#[derive(Debug, Clone, Default)]
struct BranchCache {
    /// Pre-activation of each layer (before ReLU; last one is the raw logits).
    preacts: Vec<Vec<f64>>,
    /// Post-activation input of each layer (`acts[0]` is the network input).
    acts: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

/// A ReLU MLP composed with the logit clamp, softmax head and simplex
/// embedding. Mutated only through [`apply_update`]; forward passes are
/// pure.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexNet {
    pub mlp: MlpParams,
    pub frame: SimplexFrame,
}

impl SimplexNet {
    /// Wires an MLP to a frame; the MLP output width must be `d1`.
    pub fn new(mlp: MlpParams, frame: SimplexFrame) -> Result<Self> {
        if mlp.output_dim() != frame.d1() {
            return Err(Error::DimensionMismatch(format!(
                "network outputs {} logits, frame has {} vertices",
                mlp.output_dim(),
                frame.d1()
            )));
        }
        Ok(SimplexNet { mlp, frame })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    /// Forward pass: clamped logits, softmax coefficients and the embedded
    /// simplex point.
    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        if x.len() != self.mlp.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.mlp.input_dim()
            )));
        }
        let mut cache = BranchCache::default();
        self.forward_cached(x, &mut cache);
        let m = self.mlp.logit_clamp;
        let logits = cache
            .preacts
            .last()
            .unwrap()
            .iter()
            .map(|&z| z.clamp(-m, m))
            .collect();
        let point = self.frame.embed_unchecked(&cache.probs);
        Ok(Forward {
            logits,
            probs: cache.probs,
            point,
        })
    }

    /// Barycentric coefficients of the output at `x` (softmax probabilities).
    /// Panics on dimension mismatch; used on hot paths.
    pub fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.mlp.input_dim(), "input dimension mismatch");
        let mut cache = BranchCache::default();
        self.forward_cached(x, &mut cache);
        cache.probs
    }

    fn forward_cached(&self, x: &[f64], cache: &mut BranchCache) {
        let mlp = &self.mlp;
        let depth = mlp.depth();
        cache.preacts.resize(depth, Vec::new());
        cache.acts.resize(depth, Vec::new());
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        for l in 0..depth {
            let (n_in, n_out) = (mlp.layer_dims[l], mlp.layer_dims[l + 1]);
            // Split borrows: the input of layer l and its preact buffer.
            let input = std::mem::take(&mut cache.acts[l]);
            let pre = &mut cache.preacts[l];
            pre.resize(n_out, 0.0);
            for o in 0..n_out {
                let row = &mlp.weights[l][o * n_in..(o + 1) * n_in];
                let mut acc = mlp.biases[l][o];
                for (w, v) in row.iter().zip(&input) {
                    acc += w * v;
                }
                pre[o] = acc;
            }
            cache.acts[l] = input;
            if l + 1 < depth {
                let next = &mut cache.acts[l + 1];
                next.clear();
                next.extend(cache.preacts[l].iter().map(|&z| z.max(0.0)));
            }
        }

        // Clamp then softmax (max-shifted for stability).
        let m = mlp.logit_clamp;
        let logits = cache.preacts.last().unwrap();
        cache.probs.clear();
        cache
            .probs
            .extend(logits.iter().map(|&z| z.clamp(-m, m)));
        let top = cache.probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for p in &mut cache.probs {
            *p = (*p - top).exp();
            total += *p;
        }
        for p in &mut cache.probs {
            *p /= total;
        }
    }

    /// Backpropagates `d(loss)/d(probs)` through softmax, clamp and the MLP
    /// for one branch, accumulating parameter gradients.
    fn backward_branch(&self, cache: &BranchCache, dprobs: &[f64], grads: &mut Gradients) {
        let mlp = &self.mlp;
        let depth = mlp.depth();
        let m = mlp.logit_clamp;

        // Softmax Jacobian: dz_j = p_j (u_j − Σ_k u_k p_k).
        let probs = &cache.probs;
        let inner: f64 = dprobs.iter().zip(probs).map(|(u, p)| u * p).sum();
        let raw_logits = cache.preacts.last().unwrap();
        let mut delta: Vec<f64> = probs
            .iter()
            .zip(dprobs)
            .zip(raw_logits)
            .map(|((p, u), z)| {
                // Zero gradient where the clamp saturates.
                if z.abs() <= m {
                    p * (u - inner)
                } else {
                    0.0
                }
            })
            .collect();

        for l in (0..depth).rev() {
            let (n_in, n_out) = (mlp.layer_dims[l], mlp.layer_dims[l + 1]);
            let input = &cache.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &mut grads.weights[l][o * n_in..(o + 1) * n_in];
                    for (g, v) in row.iter_mut().zip(input) {
                        *g += d * v;
                    }
                }
                grads.biases[l][o] += d;
            }
            if l > 0 {
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d != 0.0 {
                        let row = &mlp.weights[l][o * n_in..(o + 1) * n_in];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += d * w;
                        }
                    }
                }
                for (p, z) in prev.iter_mut().zip(&cache.preacts[l - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
}

/// Returns a copy of the net whose output logits are permuted:
/// `z̃_i = z_{perm[i]}`. Permuting the head relabels which vertex receives
/// each unit of softmax mass while leaving all pairwise distances — and
/// hence the empirical hinge risk — unchanged.
pub fn permute_logits(net: &SimplexNet, perm: &[usize]) -> Result<SimplexNet> {
    let d1 = net.mlp.output_dim();
    let mut seen = vec![false; d1];
    for &p in perm {
        if p >= d1 || std::mem::replace(&mut seen[p], true) {
            seen.clear();
            break;
        }
    }
    if perm.len() != d1 || seen.len() != d1 || seen.iter().any(|s| !s) {
        return Err(Error::invalid(format!(
            "{perm:?} is not a permutation of 0..{d1}"
        )));
    }
    let mut out = net.clone();
    let last = net.mlp.weights.len() - 1;
    let n_in = net.mlp.layer_dims[last];
    for (i, &src) in perm.iter().enumerate() {
        out.mlp.weights[last][i * n_in..(i + 1) * n_in]
            .copy_from_slice(&net.mlp.weights[last][src * n_in..(src + 1) * n_in]);
        out.mlp.biases[last][i] = net.mlp.biases[last][src];
    }
    Ok(out)
}

/// Subgradient of the empirical contrastive hinge risk over `batch`,
/// together with the batch mean loss. The hinge kink contributes zero
/// subgradient and the clamp has zero gradient where it saturates.
pub fn loss_gradient(net: &SimplexNet, batch: &[PairwiseSample]) -> Result<(Gradients, f64)> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let frame = &net.frame;
    let ratio = frame.coeff_ratio();
    let mut grads = Gradients::zeros_like(&net.mlp);
    let mut cache_x = BranchCache::default();
    let mut cache_xp = BranchCache::default();
    let mut loss_sum = 0.0;

    for sample in batch {
        net.forward_cached(&sample.x, &mut cache_x);
        net.forward_cached(&sample.xp, &mut cache_xp);
        let diff: Vec<f64> = cache_x
            .probs
            .iter()
            .zip(&cache_xp.probs)
            .map(|(a, b)| a - b)
            .collect();
        let rho = ratio * diff.iter().map(|d| d * d).sum::<f64>();
        let (loss, dl_drho) = hinge_grad_factor(frame, rho, sample.y);
        loss_sum += loss;
        if dl_drho != 0.0 {
            let scale = dl_drho * 2.0 * ratio;
            let dprobs_x: Vec<f64> = diff.iter().map(|d| scale * d).collect();
            let dprobs_xp: Vec<f64> = diff.iter().map(|d| -scale * d).collect();
            net.backward_branch(&cache_x, &dprobs_x, &mut grads);
            net.backward_branch(&cache_xp, &dprobs_xp, &mut grads);
        }
    }

    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((grads, loss_sum * inv))
}

/// One subgradient step: `θ ← clip(θ − lr·g)`. Errors on non-finite
/// gradients before touching the parameters.
pub fn apply_update(net: &mut SimplexNet, grads: &Gradients, learning_rate: f64) -> Result<()> {
    if grads.weights.len() != net.mlp.weights.len()
        || grads.biases.len() != net.mlp.biases.len()
        || grads
            .weights
            .iter()
            .zip(&net.mlp.weights)
            .any(|(g, w)| g.len() != w.len())
        || grads
            .biases
            .iter()
            .zip(&net.mlp.biases)
            .any(|(g, b)| g.len() != b.len())
    {
        return Err(Error::DimensionMismatch(
            "gradient shapes do not match the network".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    for (w, g) in net.mlp.weights.iter_mut().zip(&grads.weights) {
        for (wi, gi) in w.iter_mut().zip(g) {
            *wi -= learning_rate * gi;
        }
    }
    for (b, g) in net.mlp.biases.iter_mut().zip(&grads.biases) {
        for (bi, gi) in b.iter_mut().zip(g) {
            *bi -= learning_rate * gi;
        }
    }
    net.mlp.clip();
    Ok(())
}

/// Central finite differences of the batch loss over every parameter, in
/// [`Gradients::flatten`] order. Diagnostic companion to [`loss_gradient`].
pub fn finite_difference_gradient(
    net: &SimplexNet,
    batch: &[PairwiseSample],
    step: f64,
) -> Result<Vec<f64>> {
    let eval = |net: &SimplexNet| -> Result<f64> { Ok(loss_gradient(net, batch)?.1) };
    let mut out = Vec::with_capacity(net.mlp.param_count());
    for l in 0..net.mlp.weights.len() {
        for k in 0..net.mlp.weights[l].len() {
            let mut plus = net.clone();
            plus.mlp.weights[l][k] += step;
            let mut minus = net.clone();
            minus.mlp.weights[l][k] -= step;
            out.push((eval(&plus)? - eval(&minus)?) / (2.0 * step));
        }
    }
    for l in 0..net.mlp.biases.len() {
        for k in 0..net.mlp.biases[l].len() {
            let mut plus = net.clone();
            plus.mlp.biases[l][k] += step;
            let mut minus = net.clone();
            minus.mlp.biases[l][k] -= step;
            out.push((eval(&plus)? - eval(&minus)?) / (2.0 * step));
        }
    }
    Ok(out)
}

/// True when every sample of the batch keeps a `margin` away from the hinge
/// kink, the clamp boundary and all ReLU kinks on both branches, so the
/// loss is smooth in a finite-difference neighborhood.
pub fn batch_is_smooth(net: &SimplexNet, batch: &[PairwiseSample], margin: f64) -> bool {
    let frame = &net.frame;
    let ratio = frame.coeff_ratio();
    let mut cache = BranchCache::default();
    for s in batch {
        for x in [&s.x, &s.xp] {
            net.forward_cached(x, &mut cache);
            for pre in &cache.preacts[..cache.preacts.len() - 1] {
                if pre.iter().any(|z| z.abs() <= margin) {
                    return false;
                }
            }
            if cache
                .preacts
                .last()
                .unwrap()
                .iter()
                .any(|z| (z.abs() - net.mlp.logit_clamp).abs() <= margin)
            {
                return false;
            }
        }
        let pa = net.coefficients(&s.x);
        let pb = net.coefficients(&s.xp);
        let rho = ratio
            * pa.iter()
                .zip(&pb)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        let psi = 1.0 - 2.0 * rho / frame.diameter_sq();
        if (1.0 - f64::from(s.y) * psi).abs() <= margin {
            return false;
        }
    }
    true
}

/// Depth, max magnitude, effective sparsity `S₀` and the bound constants.
pub fn param_stats(net: &SimplexNet) -> ParamStats {
    let mlp = &net.mlp;
    let mut max_mag = 0.0f64;
    let mut nonzero = 0usize;
    for layer in mlp.weights.iter().chain(mlp.biases.iter()) {
        for w in layer {
            max_mag = max_mag.max(w.abs());
            if w.abs() > SPARSITY_EPS {
                nonzero += 1;
            }
        }
    }
    ParamStats {
        depth: mlp.depth(),
        max_magnitude: max_mag,
        sparsity: nonzero,
        logit_bound: mlp.logit_clamp,
        weight_bound: mlp.max_weight,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    max_weight: f64,
    logit_clamp: f64,
    frame_d1: usize,
}

/// Serializes a net to the JSON checkpoint format (row-major weights; the
/// frame is regenerated from `d1` on load since its construction is
/// deterministic).
pub fn to_checkpoint_json(net: &SimplexNet) -> Result<String> {
    Ok(serde_json::to_string_pretty(&CheckpointDoc {
        layer_dims: net.mlp.layer_dims.clone(),
        weights: net.mlp.weights.clone(),
        biases: net.mlp.biases.clone(),
        max_weight: net.mlp.max_weight,
        logit_clamp: net.mlp.logit_clamp,
        frame_d1: net.frame.d1(),
    })?)
}

pub fn from_checkpoint_json(json: &str) -> Result<SimplexNet> {
    let doc: CheckpointDoc = serde_json::from_str(json)?;
    let mut mlp = MlpParams::zeros(doc.layer_dims, doc.max_weight, doc.logit_clamp)?;
    if doc.weights.len() != mlp.weights.len()
        || doc
            .weights
            .iter()
            .zip(&mlp.weights)
            .any(|(a, b)| a.len() != b.len())
        || doc.biases.len() != mlp.biases.len()
        || doc
            .biases
            .iter()
            .zip(&mlp.biases)
            .any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::Parse("checkpoint weight shapes are inconsistent".into()));
    }
    mlp.weights = doc.weights;
    mlp.biases = doc.biases;
    let frame = SimplexFrame::build(doc.frame_d1)?;
    SimplexNet::new(mlp, frame)
}

pub fn save_checkpoint(net: &SimplexNet, path: &Path) -> Result<()> {
    std::fs::write(path, to_checkpoint_json(net)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SimplexNet> {
    from_checkpoint_json(&std::fs::read_to_string(path)?)
}
