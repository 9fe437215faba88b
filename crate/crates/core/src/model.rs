//! Multitask GCN: a shared graph-convolutional encoder feeding a GCN node
//! classifier and a linear-sigmoid anomaly score predictor.
//!
//! Forward pass, for normalized adjacency `Â`:
//!
//! ```text
//! H⁽ˡ⁺¹⁾ = relu(Â H⁽ˡ⁾ W⁽ˡ⁾),   H⁽⁰⁾ = X
//! Z      = softmax_rows(Â H Wᴺ)
//! p      = sigmoid(H wᴬ + bᴬ)
//! ```
//!
//! Gradients are derived by hand; [`loss_and_gradients`] is checked
//! against central finite differences in the tests.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{normalize_adjacency, Graph, NormalizedAdjacency};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty labeled set for {0}")]
    EmptyLabeled(&'static str),
    #[error("non-finite {what} at optimizer step {step}")]
    NonFinite { what: String, step: u64 },
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the classification loss.
    pub alpha: f64,
    /// Weight of the anomaly detection loss.
    pub beta: f64,
    /// Weight of the predictor term in the hybrid score.
    pub phi: f64,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub uncertainty_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 2.0,
            phi: 2.0,
            learning_rate: 0.01,
            hidden_dim: 64,
            encoder_layers: 1,
            dropout: 0.0,
            weight_decay: 0.0,
            max_epochs: 300,
            patience: 20,
            uncertainty_loss: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.phi > 0.0) {
            return Err("alpha, beta and phi must be positive".into());
        }
        if self.patience == 0 {
            return Err("patience must be at least 1".into());
        }
        if self.hidden_dim == 0 || self.encoder_layers == 0 {
            return Err("hidden_dim and encoder_layers must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err("dropout must lie in [0, 1)".into());
        }
        if !(self.learning_rate >= 0.0 && self.weight_decay >= 0.0) {
            return Err("learning_rate and weight_decay must be non-negative".into());
        }
        Ok(())
    }
}

/// All trainable tensors. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub encoder: Vec<Array2<f64>>,
    pub classifier: Array2<f64>,
    pub predictor_weight: Array1<f64>,
    pub predictor_bias: f64,
}

impl Params {
    /// Glorot-uniform initialization; the predictor bias starts at zero.
    pub fn init<R: Rng>(
        attr_dim: usize,
        hidden_dim: usize,
        layers: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Self {
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-limit..limit))
        };
        let mut encoder = Vec::with_capacity(layers);
        let mut fan_in = attr_dim;
        for _ in 0..layers {
            encoder.push(glorot(fan_in, hidden_dim));
            fan_in = hidden_dim;
        }
        let classifier = glorot(hidden_dim, num_classes);
        let predictor_weight = glorot(hidden_dim, 1).column(0).to_owned();
        Self {
            encoder,
            classifier,
            predictor_weight,
            predictor_bias: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self
                .encoder
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            classifier: Array2::zeros(self.classifier.raw_dim()),
            predictor_weight: Array1::zeros(self.predictor_weight.len()),
            predictor_bias: 0.0,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.classifier.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.ncols()
    }

    /// Flat views of every tensor in a fixed order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self
            .encoder
            .iter()
            .map(|w| w.as_slice().expect("standard layout"))
            .collect();
        out.push(self.classifier.as_slice().expect("standard layout"));
        out.push(self.predictor_weight.as_slice().expect("standard layout"));
        out.push(std::slice::from_ref(&self.predictor_bias));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .encoder
            .iter_mut()
            .map(|w| w.as_slice_mut().expect("standard layout"))
            .collect();
        out.push(self.classifier.as_slice_mut().expect("standard layout"));
        out.push(
            self.predictor_weight
                .as_slice_mut()
                .expect("standard layout"),
        );
        out.push(std::slice::from_mut(&mut self.predictor_bias));
        out
    }

    pub fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Parameters plus Adam state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub params: Params,
    first_moment: Params,
    second_moment: Params,
    pub adam: AdamConfig,
    step: u64,
}

impl ModelState {
    pub fn new<R: Rng>(
        attr_dim: usize,
        num_classes: usize,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Self {
        Self::from_params(Params::init(
            attr_dim,
            cfg.hidden_dim,
            cfg.encoder_layers,
            num_classes,
            rng,
        ))
    }

    pub fn from_params(params: Params) -> Self {
        let zeros = params.zeros_like();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            params,
            adam: AdamConfig::default(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update with bias correction.
    pub fn apply_gradients(&mut self, grads: &Params, lr: f64, weight_decay: f64) {
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.adam;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let grads = grads.slices();
        let params = self.params.slices_mut();
        let ms = self.first_moment.slices_mut();
        let vs = self.second_moment.slices_mut();
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(ms).zip(vs) {
            for i in 0..p.len() {
                let grad = g[i] + weight_decay * p[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad;
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad * grad;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            state: self.clone(),
        };
        fs::write(path, serde_json::to_string(&ckpt)?)?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let ckpt: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(ModelError::Version(ckpt.version));
        }
        Ok(ckpt.state)
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    state: ModelState,
}

/// Normalized adjacency plus the cached first propagation `Â X`, which is
/// constant for a static graph.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub adj: NormalizedAdjacency,
    pub features: Array2<f64>,
    pub propagated: Array2<f64>,
}

impl GraphInput {
    pub fn new(g: &Graph) -> Self {
        let adj = normalize_adjacency(g);
        let propagated = adj.matmul(g.features());
        Self {
            adj,
            features: g.features().clone(),
            propagated,
        }
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }
}

/// Intermediate values from one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `Â H⁽ˡ⁾` for every encoder layer input.
    aggregated: Vec<Array2<f64>>,
    /// Pre-activations `Â H⁽ˡ⁾ W⁽ˡ⁾`.
    pre: Vec<Array2<f64>>,
    /// Dropout scaling per encoder layer (training only).
    masks: Vec<Option<Array2<f64>>>,
    pub h: Array2<f64>,
    aggregated_h: Array2<f64>,
    pub z: Array2<f64>,
    anomaly_logit: Vec<f64>,
    pub p: Vec<f64>,
}

fn check_shapes(input: &GraphInput, params: &Params) -> Result<(), ModelError> {
    let first = params
        .encoder
        .first()
        .ok_or_else(|| ModelError::Shape("encoder has no layers".into()))?;
    if first.nrows() != input.features.ncols() {
        return Err(ModelError::Shape(format!(
            "first encoder layer expects {} inputs, features have {}",
            first.nrows(),
            input.features.ncols()
        )));
    }
    for pair in params.encoder.windows(2) {
        if pair[0].ncols() != pair[1].nrows() {
            return Err(ModelError::Shape("encoder layer widths disagree".into()));
        }
    }
    let hidden = params.encoder.last().map(|w| w.ncols()).unwrap_or(0);
    if params.classifier.nrows() != hidden || params.predictor_weight.len() != hidden {
        return Err(ModelError::Shape("heads do not match encoder width".into()));
    }
    if input.adj.n() != input.features.nrows() {
        return Err(ModelError::Shape(
            "adjacency and features disagree on n".into(),
        ));
    }
    Ok(())
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

fn forward_impl<R: Rng>(
    input: &GraphInput,
    params: &Params,
    dropout: Option<(f64, &mut R)>,
) -> Result<Forward, ModelError> {
    check_shapes(input, params)?;
    let layers = params.encoder.len();
    let mut aggregated = Vec::with_capacity(layers);
    let mut pre = Vec::with_capacity(layers);
    let mut masks = Vec::with_capacity(layers);
    let mut dropout = dropout.filter(|(rate, _)| *rate > 0.0);
    let mut h = Array2::zeros((0, 0));
    for (l, w) in params.encoder.iter().enumerate() {
        let agg = if l == 0 {
            input.propagated.clone()
        } else {
            input.adj.matmul(&h)
        };
        let a = agg.dot(w);
        h = relu(&a);
        let mask = dropout.as_mut().map(|(rate, rng)| {
            let keep = 1.0 - *rate;
            Array2::from_shape_simple_fn(h.raw_dim(), || {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        });
        if let Some(m) = &mask {
            h *= m;
        }
        aggregated.push(agg);
        pre.push(a);
        masks.push(mask);
    }
    let aggregated_h = input.adj.matmul(&h);
    let z = softmax_rows(&aggregated_h.dot(&params.classifier));
    let anomaly_logit: Vec<f64> = h
        .dot(&params.predictor_weight)
        .iter()
        .map(|v| v + params.predictor_bias)
        .collect();
    let p = anomaly_logit.iter().map(|&v| sigmoid(v)).collect();
    Ok(Forward {
        aggregated,
        pre,
        masks,
        h,
        aggregated_h,
        z,
        anomaly_logit,
        p,
    })
}

/// Deterministic (no dropout) forward pass.
pub fn forward(input: &GraphInput, params: &Params) -> Result<Forward, ModelError> {
    forward_impl::<rand::rngs::ThreadRng>(input, params, None)
}

/// Encoder output `H` for raw `Â` and `X`.
pub fn encoder_forward(
    adj: &NormalizedAdjacency,
    features: &Array2<f64>,
    params: &Params,
) -> Result<Array2<f64>, ModelError> {
    if adj.n() != features.nrows() {
        return Err(ModelError::Shape(
            "adjacency and features disagree on n".into(),
        ));
    }
    let mut h = features.clone();
    for w in &params.encoder {
        if h.ncols() != w.nrows() {
            return Err(ModelError::Shape(format!(
                "layer expects {} inputs, got {}",
                w.nrows(),
                h.ncols()
            )));
        }
        h = relu(&adj.matmul(&h).dot(w));
    }
    Ok(h)
}

pub fn classify(
    adj: &NormalizedAdjacency,
    h: &Array2<f64>,
    params: &Params,
) -> Result<Array2<f64>, ModelError> {
    if h.ncols() != params.classifier.nrows() || h.nrows() != adj.n() {
        return Err(ModelError::Shape(
            "embedding does not match classifier".into(),
        ));
    }
    Ok(softmax_rows(&adj.matmul(h).dot(&params.classifier)))
}

pub fn predict_anomaly(h: &Array2<f64>, params: &Params) -> Result<Vec<f64>, ModelError> {
    if h.ncols() != params.predictor_weight.len() {
        return Err(ModelError::Shape(
            "embedding does not match predictor".into(),
        ));
    }
    Ok(h.rows()
        .into_iter()
        .map(|row| sigmoid(row.dot(&params.predictor_weight) + params.predictor_bias))
        .collect())
}

fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Row entropies in nats, with `0 ln 0 = 0`.
pub fn entropy_scores(z: &Array2<f64>) -> Vec<f64> {
    z.rows()
        .into_iter()
        .map(|r| -r.iter().map(|&v| xlnx(v)).sum::<f64>())
        .collect()
}

/// Z-score with population standard deviation. Returns zeros when the
/// spread is degenerate.
pub fn znorm(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - mean) / std).collect()
}

pub fn hybrid_score(entropy: &[f64], anomaly: &[f64], phi: f64) -> Vec<f64> {
    assert_eq!(entropy.len(), anomaly.len());
    znorm(entropy)
        .into_iter()
        .zip(znorm(anomaly))
        .map(|(e, p)| e + phi * p)
        .collect()
}

/// Per-node model outputs and the anomaly evidence derived from them.
#[derive(Debug, Clone)]
pub struct ScoreBundle {
    pub z: Array2<f64>,
    pub h: Array2<f64>,
    pub entropy: Vec<f64>,
    pub anomaly: Vec<f64>,
    /// Z-scored entropy.
    pub conf_classifier: Vec<f64>,
    /// Z-scored anomaly score.
    pub conf_predictor: Vec<f64>,
    pub conf_difference: Vec<f64>,
    pub hybrid: Vec<f64>,
}

impl ScoreBundle {
    pub fn new(z: Array2<f64>, h: Array2<f64>, anomaly: Vec<f64>, phi: f64) -> Self {
        let entropy = entropy_scores(&z);
        let conf_classifier = znorm(&entropy);
        let conf_predictor = znorm(&anomaly);
        let conf_difference = conf_classifier
            .iter()
            .zip(&conf_predictor)
            .map(|(n, a)| (a - n).abs())
            .collect();
        let hybrid = conf_classifier
            .iter()
            .zip(&conf_predictor)
            .map(|(e, p)| e + phi * p)
            .collect();
        Self {
            z,
            h,
            entropy,
            anomaly,
            conf_classifier,
            conf_predictor,
            conf_difference,
            hybrid,
        }
    }

    pub fn from_forward(fwd: Forward, phi: f64) -> Self {
        Self::new(fwd.z, fwd.h, fwd.p, phi)
    }
}

/// Label sets entering the losses for one training step.
#[derive(Debug, Clone, Copy)]
pub struct LossTargets<'a> {
    /// `(node, class)` pairs with classification labels.
    pub class_labeled: &'a [(usize, usize)],
    /// `(node, is_anomaly)` pairs with anomaly labels.
    pub ad_labeled: &'a [(usize, bool)],
    pub normal_ids: &'a [usize],
    pub anomaly_ids: &'a [usize],
}

const PROB_FLOOR: f64 = 1e-300;

pub fn loss_nc(z: &Array2<f64>, class_labeled: &[(usize, usize)]) -> Result<f64, ModelError> {
    if class_labeled.is_empty() {
        return Err(ModelError::EmptyLabeled("classification loss"));
    }
    let total: f64 = class_labeled
        .iter()
        .map(|&(i, y)| -z[[i, y]].max(PROB_FLOOR).ln())
        .sum();
    Ok(total / class_labeled.len() as f64)
}

/// Weight of the positive term: labeled anomalies over labeled normals,
/// zero when no anomaly has been labeled.
pub fn anomaly_weight(ad_labeled: &[(usize, bool)]) -> f64 {
    let anomalies = ad_labeled.iter().filter(|(_, y)| *y).count();
    let normals = ad_labeled.len() - anomalies;
    if anomalies == 0 || normals == 0 {
        0.0
    } else {
        anomalies as f64 / normals as f64
    }
}

pub fn loss_ad(p: &[f64], ad_labeled: &[(usize, bool)]) -> Result<f64, ModelError> {
    if ad_labeled.is_empty() {
        return Err(ModelError::EmptyLabeled("anomaly loss"));
    }
    let gamma = anomaly_weight(ad_labeled);
    let eps = 1e-15;
    let total: f64 = ad_labeled
        .iter()
        .map(|&(i, y)| {
            let pi = p[i].clamp(eps, 1.0 - eps);
            if y {
                gamma * pi.ln()
            } else {
                (1.0 - pi).ln()
            }
        })
        .sum();
    Ok(-total / ad_labeled.len() as f64)
}

/// Mean entropy of labeled normals minus mean entropy of labeled anomalies.
pub fn loss_un(z: &Array2<f64>, normal_ids: &[usize], anomaly_ids: &[usize]) -> f64 {
    let mean_entropy = |ids: &[usize]| {
        if ids.is_empty() {
            return 0.0;
        }
        let s: f64 = ids
            .iter()
            .map(|&i| -z.row(i).iter().map(|&v| xlnx(v)).sum::<f64>())
            .sum();
        s / ids.len() as f64
    };
    mean_entropy(normal_ids) - mean_entropy(anomaly_ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub nc: f64,
    pub ad: f64,
    pub un: f64,
}

pub fn total_loss(parts: LossParts, alpha: f64, beta: f64) -> f64 {
    alpha * parts.nc + beta * parts.ad + parts.un
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub parts: LossParts,
    pub total: f64,
}

fn compute_losses(
    fwd: &Forward,
    targets: &LossTargets<'_>,
    cfg: &TrainConfig,
) -> Result<LossReport, ModelError> {
    let parts = LossParts {
        nc: loss_nc(&fwd.z, targets.class_labeled)?,
        ad: loss_ad(&fwd.p, targets.ad_labeled)?,
        un: if cfg.uncertainty_loss {
            loss_un(&fwd.z, targets.normal_ids, targets.anomaly_ids)
        } else {
            0.0
        },
    };
    Ok(LossReport {
        parts,
        total: total_loss(parts, cfg.alpha, cfg.beta),
    })
}

/// Total loss at `params` without computing gradients.
pub fn evaluate_loss(
    input: &GraphInput,
    params: &Params,
    targets: &LossTargets<'_>,
    cfg: &TrainConfig,
) -> Result<LossReport, ModelError> {
    compute_losses(&forward(input, params)?, targets, cfg)
}

fn backward(
    input: &GraphInput,
    params: &Params,
    fwd: &Forward,
    targets: &LossTargets<'_>,
    cfg: &TrainConfig,
) -> Params {
    let n = fwd.z.nrows();
    let classes = fwd.z.ncols();

    // d total / d classifier logits
    let mut g_logits = Array2::<f64>::zeros((n, classes));
    let nc_scale = cfg.alpha / targets.class_labeled.len() as f64;
    for &(i, y) in targets.class_labeled {
        let mut row = g_logits.row_mut(i);
        Zip::from(&mut row)
            .and(fwd.z.row(i))
            .for_each(|g, &z| *g += nc_scale * z);
        row[y] -= nc_scale;
    }
    if cfg.uncertainty_loss {
        // d e_i / d logit_ij = -z_ij (ln z_ij + e_i)
        let mut add_entropy_grad = |ids: &[usize], coef: f64| {
            for &i in ids {
                let zi = fwd.z.row(i);
                let e: f64 = -zi.iter().map(|&v| xlnx(v)).sum::<f64>();
                let mut row = g_logits.row_mut(i);
                Zip::from(&mut row).and(zi).for_each(|g, &z| {
                    if z > 0.0 {
                        *g += coef * (-z * (z.ln() + e));
                    }
                });
            }
        };
        if !targets.normal_ids.is_empty() {
            add_entropy_grad(targets.normal_ids, 1.0 / targets.normal_ids.len() as f64);
        }
        if !targets.anomaly_ids.is_empty() {
            add_entropy_grad(targets.anomaly_ids, -1.0 / targets.anomaly_ids.len() as f64);
        }
    }

    // d total / d anomaly logit
    let gamma = anomaly_weight(targets.ad_labeled);
    let ad_scale = cfg.beta / targets.ad_labeled.len() as f64;
    let mut g_anom = Array1::<f64>::zeros(n);
    for &(i, y) in targets.ad_labeled {
        let p = fwd.p[i];
        g_anom[i] += if y {
            -ad_scale * gamma * (1.0 - p)
        } else {
            ad_scale * p
        };
    }
    debug_assert_eq!(fwd.anomaly_logit.len(), n);

    let mut grads = params.zeros_like();
    grads.classifier = fwd.aggregated_h.t().dot(&g_logits);
    grads.predictor_weight = fwd.h.t().dot(&g_anom);
    grads.predictor_bias = g_anom.sum();

    // Â is symmetric, so Âᵀ G = Â G
    let mut g_h = input.adj.matmul(&g_logits.dot(&params.classifier.t()));
    Zip::from(g_h.rows_mut())
        .and(&g_anom)
        .for_each(|mut row, &ga| row.scaled_add(ga, &params.predictor_weight));

    for l in (0..params.encoder.len()).rev() {
        if let Some(mask) = &fwd.masks[l] {
            g_h *= mask;
        }
        let mut g_pre = g_h;
        Zip::from(&mut g_pre).and(&fwd.pre[l]).for_each(|g, &a| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
        grads.encoder[l] = fwd.aggregated[l].t().dot(&g_pre);
        g_h = if l > 0 {
            input.adj.matmul(&g_pre.dot(&params.encoder[l].t()))
        } else {
            Array2::zeros((0, 0))
        };
    }
    grads
}

/// Loss and exact analytic gradients at `params` (no dropout).
pub fn loss_and_gradients(
    input: &GraphInput,
    params: &Params,
    targets: &LossTargets<'_>,
    cfg: &TrainConfig,
) -> Result<(LossReport, Params), ModelError> {
    let fwd = forward(input, params)?;
    let report = compute_losses(&fwd, targets, cfg)?;
    Ok((report, backward(input, params, &fwd, targets, cfg)))
}

/// Forward, backward and one Adam update. The returned report holds the
/// loss before the update.
pub fn backward_and_step<R: Rng>(
    state: &mut ModelState,
    input: &GraphInput,
    targets: &LossTargets<'_>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LossReport, ModelError> {
    let fwd = forward_impl(input, &state.params, Some((cfg.dropout, rng)))?;
    let report = compute_losses(&fwd, targets, cfg)?;
    if !report.total.is_finite() {
        return Err(ModelError::NonFinite {
            what: format!("loss ({:?})", report.parts),
            step: state.step,
        });
    }
    let grads = backward(input, &state.params, &fwd, targets, cfg);
    if !grads.all_finite() {
        return Err(ModelError::NonFinite {
            what: "gradient".into(),
            step: state.step,
        });
    }
    state.apply_gradients(&grads, cfg.learning_rate, cfg.weight_decay);
    if !state.params.all_finite() {
        return Err(ModelError::NonFinite {
            what: "parameter".into(),
            step: state.step,
        });
    }
    Ok(report)
}

/// Column sums of `Z`; handy for sanity checks.
pub fn class_mass(z: &Array2<f64>) -> Array1<f64> {
    z.sum_axis(Axis(0))
}
