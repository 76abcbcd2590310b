//! Mixture density network: a plain feedforward net whose output layer
//! parameterizes one Gaussian mixture per service. Trained by mini-batch
//! gradient descent with adaptive-moment updates on the mixture negative
//! log-likelihood.

use super::{GmmComponent, GmmParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error, PartialEq)]
pub enum MdnError {
    #[error("feature length {got} does not match model input width {expected}")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("model file is malformed: {0}")]
    BadModelFile(String),
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    /// Row-major `out x in`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    n_in: usize,
    n_out: usize,
}

impl Dense {
    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            out.push(z + self.biases[o]);
        }
    }
}

/// The network plus the output-head transforms that force valid mixture
/// parameters: softmax weights, linear means, exp-clamped stddevs.
#[derive(Debug, Clone, PartialEq)]
pub struct MdnModel {
    layers: Vec<Dense>,
    pub n_services: usize,
    pub k: usize,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdnHyperparams {
    pub k: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Fraction of the dataset held out for validation-based model selection.
    pub val_fraction: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

impl Default for MdnHyperparams {
    fn default() -> Self {
        MdnHyperparams {
            k: 3,
            epochs: 100,
            batch_size: 64,
            learning_rate: 0.001,
            seed: 0,
            val_fraction: 0.3,
            sigma_lo: 1e-3,
            sigma_hi: 100.0,
        }
    }
}

/// One training sample: telemetry features and the realized extra-RB count
/// per service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

impl MdnModel {
    /// Fan-in-scaled normal weight init, zero biases.
    pub fn init(
        input_width: usize,
        hidden: &[usize],
        n_services: usize,
        k: usize,
        sigma_lo: f64,
        sigma_hi: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![input_width];
        widths.extend_from_slice(hidden);
        widths.push(3 * k * n_services);
        let layers = widths
            .windows(2)
            .map(|pair| {
                let (n_in, n_out) = (pair[0], pair[1]);
                let scale = (2.0 / n_in as f64).sqrt();
                let weights = (0..n_in * n_out)
                    .map(|_| gauss(&mut rng) * scale)
                    .collect();
                Dense { weights, biases: vec![0.0; n_out], n_in, n_out }
            })
            .collect();
        MdnModel { layers, n_services, k, sigma_lo, sigma_hi }
    }

    /// Paper-scale architecture: hidden widths 256, 256, 64.
    pub fn init_default_arch(n_services: usize, k: usize, sigma_hi: f64, seed: u64) -> Self {
        Self::init(8 * n_services, &[256, 256, 64], n_services, k, 1e-3, sigma_hi, seed)
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// (weight count, bias count) of one layer, for external gradient checks.
    pub fn param_counts(&self, layer: usize) -> (usize, usize) {
        (self.layers[layer].weights.len(), self.layers[layer].biases.len())
    }

    /// Adds `delta` to one weight (or bias), for finite-difference probes.
    pub fn nudge_param(&mut self, layer: usize, bias: bool, idx: usize, delta: f64) {
        let slot = if bias {
            &mut self.layers[layer].biases[idx]
        } else {
            &mut self.layers[layer].weights[idx]
        };
        *slot += delta;
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].n_in];
        w.extend(self.layers.iter().map(|l| l.n_out));
        w
    }

    fn check_input(&self, features: &[f64]) -> Result<(), MdnError> {
        if features.len() != self.input_width() {
            return Err(MdnError::ShapeMismatch {
                got: features.len(),
                expected: self.input_width(),
            });
        }
        Ok(())
    }

    /// Raw network output plus per-layer activations (for backprop).
    fn forward_raw(&self, features: &[f64]) -> Vec<Vec<f64>> {
        let mut activations: Vec<Vec<f64>> = vec![features.to_vec()];
        let mut buf = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward(activations.last().unwrap(), &mut buf);
            if l < last {
                for z in buf.iter_mut() {
                    if *z < 0.0 {
                        *z = 0.0;
                    }
                }
            }
            activations.push(buf.clone());
        }
        activations
    }

    fn heads(&self, output: &[f64]) -> Vec<GmmParams> {
        let k = self.k;
        (0..self.n_services)
            .map(|m| {
                let block = &output[3 * k * m..3 * k * (m + 1)];
                let logits = &block[..k];
                let means = &block[k..2 * k];
                let raw_sigma = &block[2 * k..3 * k];
                let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|&a| (a - max_logit).exp()).collect();
                let z: f64 = exps.iter().sum();
                (0..k)
                    .map(|i| GmmComponent {
                        weight: exps[i] / z,
                        mean: means[i],
                        stddev: raw_sigma[i].exp().clamp(self.sigma_lo, self.sigma_hi),
                    })
                    .collect()
            })
            .collect()
    }

    /// Deterministic forward pass; outputs satisfy the GMM invariants by
    /// construction of the head transforms.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<GmmParams>, MdnError> {
        self.check_input(features)?;
        let activations = self.forward_raw(features);
        Ok(self.heads(activations.last().unwrap()))
    }

    /// Mixture NLL of one sample, summed over services.
    pub fn nll(&self, sample: &TrainSample) -> Result<f64, MdnError> {
        self.check_input(&sample.features)?;
        let activations = self.forward_raw(&sample.features);
        Ok(self.nll_and_output_grad(activations.last().unwrap(), &sample.labels).0)
    }

    /// Loss and its gradient w.r.t. the raw output vector.
    fn nll_and_output_grad(&self, output: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
        let k = self.k;
        let mut grad = vec![0.0f64; output.len()];
        let mut loss = 0.0f64;
        for m in 0..self.n_services {
            let base = 3 * k * m;
            let block = &output[base..base + 3 * k];
            let logits = &block[..k];
            let means = &block[k..2 * k];
            let raw_sigma = &block[2 * k..3 * k];
            let y = labels[m];

            let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&a| (a - max_logit).exp()).collect();
            let z: f64 = exps.iter().sum();
            let log_z = max_logit + z.ln();

            // log of each weighted component density, with clamp bookkeeping
            let mut terms = Vec::with_capacity(k);
            let mut sigmas = Vec::with_capacity(k);
            let mut clamped = Vec::with_capacity(k);
            for i in 0..k {
                let raw = raw_sigma[i].exp();
                let sigma = raw.clamp(self.sigma_lo, self.sigma_hi);
                clamped.push(raw != sigma);
                sigmas.push(sigma);
                let log_w = logits[i] - log_z;
                let d = (y - means[i]) / sigma;
                let log_n = -LN_SQRT_2PI - sigma.ln() - 0.5 * d * d;
                terms.push(log_w + log_n);
            }
            let max_t = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum_t: f64 = terms.iter().map(|&t| (t - max_t).exp()).sum();
            loss -= max_t + sum_t.ln();

            for i in 0..k {
                let gamma = (terms[i] - max_t).exp() / sum_t;
                let w = exps[i] / z;
                grad[base + i] = w - gamma;
                let d = (y - means[i]) / sigmas[i];
                grad[base + k + i] = -gamma * d / sigmas[i];
                grad[base + 2 * k + i] = if clamped[i] {
                    0.0
                } else {
                    gamma * (1.0 - d * d)
                };
            }
        }
        (loss, grad)
    }

    /// Loss and gradients w.r.t. every weight and bias, for one sample.
    /// Kept public so the finite-difference gradient check stays outside
    /// the training path.
    pub fn loss_and_grad(
        &self,
        sample: &TrainSample,
    ) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>), MdnError> {
        self.check_input(&sample.features)?;
        let activations = self.forward_raw(&sample.features);
        let (loss, out_grad) = self.nll_and_output_grad(activations.last().unwrap(), &sample.labels);

        let mut w_grads: Vec<Vec<f64>> = self
            .layers
            .iter()
            .map(|l| vec![0.0; l.weights.len()])
            .collect();
        let mut b_grads: Vec<Vec<f64>> = self
            .layers
            .iter()
            .map(|l| vec![0.0; l.biases.len()])
            .collect();

        let mut delta = out_grad;
        for l in (0..self.layers.len()).rev() {
            let input = &activations[l];
            let layer = &self.layers[l];
            for o in 0..layer.n_out {
                let d = delta[o];
                b_grads[l][o] = d;
                let row = &mut w_grads[l][o * layer.n_in..(o + 1) * layer.n_in];
                for (g, &x) in row.iter_mut().zip(input) {
                    *g = d * x;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0f64; layer.n_in];
                for o in 0..layer.n_out {
                    let d = delta[o];
                    let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // ReLU mask of the post-activation values of layer l-1.
                for (p, &a) in prev.iter_mut().zip(&activations[l]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((loss, w_grads, b_grads))
    }

    pub fn save_to_string(&self) -> String {
        let mut out = String::from("oranus-mdn v1\n");
        out.push_str(&format!(
            "services {} components {} sigma_lo {} sigma_hi {}\n",
            self.n_services, self.k, self.sigma_lo, self.sigma_hi
        ));
        let widths = self.widths();
        out.push_str("widths");
        for w in &widths {
            out.push_str(&format!(" {w}"));
        }
        out.push('\n');
        for (i, layer) in self.layers.iter().enumerate() {
            out.push_str(&format!("layer {i} weights\n"));
            for o in 0..layer.n_out {
                let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&cells.join(" "));
                out.push('\n');
            }
            out.push_str(&format!("layer {i} biases\n"));
            let cells: Vec<String> = layer.biases.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn load_from_string(text: &str) -> Result<Self, MdnError> {
        let bad = |msg: &str| MdnError::BadModelFile(msg.to_string());
        let mut lines = text.lines();
        if lines.next() != Some("oranus-mdn v1") {
            return Err(bad("missing `oranus-mdn v1` header"));
        }
        let meta: Vec<&str> = lines.next().ok_or_else(|| bad("missing meta line"))?.split_whitespace().collect();
        if meta.len() != 8 || meta[0] != "services" || meta[2] != "components" {
            return Err(bad("malformed meta line"));
        }
        let n_services: usize = meta[1].parse().map_err(|_| bad("bad service count"))?;
        let k: usize = meta[3].parse().map_err(|_| bad("bad component count"))?;
        let sigma_lo: f64 = meta[5].parse().map_err(|_| bad("bad sigma_lo"))?;
        let sigma_hi: f64 = meta[7].parse().map_err(|_| bad("bad sigma_hi"))?;
        let widths_line = lines.next().ok_or_else(|| bad("missing widths line"))?;
        let widths: Vec<usize> = widths_line
            .strip_prefix("widths")
            .ok_or_else(|| bad("missing widths line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad width")))
            .collect::<Result<_, _>>()?;
        if widths.len() < 2 {
            return Err(bad("need at least input and output widths"));
        }
        let mut layers = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let header = lines.next().ok_or_else(|| bad("truncated file"))?;
            if header != format!("layer {i} weights") {
                return Err(bad(&format!("expected `layer {i} weights`, got `{header}`")));
            }
            let mut weights = Vec::with_capacity(n_in * n_out);
            for _ in 0..n_out {
                let row = lines.next().ok_or_else(|| bad("truncated weight rows"))?;
                for tok in row.split_whitespace() {
                    weights.push(tok.parse().map_err(|_| bad("bad weight value"))?);
                }
            }
            if weights.len() != n_in * n_out {
                return Err(bad("weight row length mismatch"));
            }
            let header = lines.next().ok_or_else(|| bad("truncated file"))?;
            if header != format!("layer {i} biases") {
                return Err(bad(&format!("expected `layer {i} biases`, got `{header}`")));
            }
            let brow = lines.next().ok_or_else(|| bad("truncated biases"))?;
            let biases: Vec<f64> = brow
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad bias value")))
                .collect::<Result<_, _>>()?;
            if biases.len() != n_out {
                return Err(bad("bias length mismatch"));
            }
            layers.push(Dense { weights, biases, n_in, n_out });
        }
        Ok(MdnModel { layers, n_services, k, sigma_lo, sigma_hi })
    }
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(shapes: &[usize], lr: f64) -> Self {
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[&[f64]]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
            }
        }
    }
}

/// Trains an MDN on (features, realized extra-RB counts) pairs.
///
/// Deterministic given the seed; returns the parameters with the best
/// validation loss seen across epochs. Zero epochs returns the initialized
/// model unchanged.
pub fn mdn_train(
    dataset: &[TrainSample],
    input_width: usize,
    hidden: &[usize],
    n_services: usize,
    hp: &MdnHyperparams,
) -> Result<MdnModel, MdnError> {
    if dataset.is_empty() {
        return Err(MdnError::EmptyDataset);
    }
    let mut model = MdnModel::init(
        input_width,
        hidden,
        n_services,
        hp.k,
        hp.sigma_lo,
        hp.sigma_hi,
        hp.seed,
    );
    if hp.epochs == 0 {
        return Ok(model);
    }
    model.check_input(&dataset[0].features)?;

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    shuffle(&mut order, &mut rng);
    let n_val = ((dataset.len() as f64 * hp.val_fraction) as usize).min(dataset.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let shapes: Vec<usize> = model
        .layers
        .iter()
        .flat_map(|l| [l.weights.len(), l.biases.len()])
        .collect();
    let mut opt = Adam::new(&shapes, hp.learning_rate);

    let mut best_model = model.clone();
    let mut best_val = val_loss(&model, dataset, &val_idx)?;

    for epoch in 0..hp.epochs {
        shuffle(&mut train_idx, &mut rng);
        for batch in train_idx.chunks(hp.batch_size.max(1)) {
            let mut w_acc: Vec<Vec<f64>> =
                model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
            let mut b_acc: Vec<Vec<f64>> =
                model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect();
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let (loss, wg, bg) = model.loss_and_grad(&dataset[i])?;
                batch_loss += loss;
                for (acc, g) in w_acc.iter_mut().zip(&wg) {
                    for (a, &v) in acc.iter_mut().zip(g) {
                        *a += v * scale;
                    }
                }
                for (acc, g) in b_acc.iter_mut().zip(&bg) {
                    for (a, &v) in acc.iter_mut().zip(g) {
                        *a += v * scale;
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(MdnError::DivergedLoss { epoch });
            }
            let mut params: Vec<&mut Vec<f64>> = Vec::new();
            for layer in model.layers.iter_mut() {
                params.push(&mut layer.weights);
                params.push(&mut layer.biases);
            }
            let grads: Vec<&[f64]> = w_acc
                .iter()
                .zip(&b_acc)
                .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
                .collect();
            opt.step(&mut params, &grads);
        }
        let v = val_loss(&model, dataset, &val_idx)?;
        if !v.is_finite() {
            return Err(MdnError::DivergedLoss { epoch });
        }
        if v < best_val {
            best_val = v;
            best_model = model.clone();
        }
    }
    Ok(best_model)
}

fn val_loss(model: &MdnModel, dataset: &[TrainSample], idx: &[usize]) -> Result<f64, MdnError> {
    if idx.is_empty() {
        return Ok(f64::INFINITY);
    }
    let mut total = 0.0;
    for &i in idx {
        total += model.nll(&dataset[i])?;
    }
    Ok(total / idx.len() as f64)
}

fn shuffle<R: Rng>(items: &mut [usize], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
