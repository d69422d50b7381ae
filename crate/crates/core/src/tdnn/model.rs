//! The window classifier: fusion layer, a stack of dilated convolutions
//! (each followed by ReLU then batch normalization), and a two-layer head
//! applied with shared weights to every output channel.
//!
//! All arithmetic is f64. Each conv layer is evaluated as an im2col matrix
//! product: for input `Z` (`in × L`) the column matrix has row `i·k + j`
//! equal to `Z[i, t + j·d]`, and the weight matrix is stored `out × (in·k)`
//! in the same order.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{TdnnConfig, TdnnError};
use crate::fusion::FusionLayer;
use crate::types::{PunctClass, NUM_CLASSES};

/// Probability floor applied inside the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch norm normalizes with batch statistics.
    Train,
    /// Batch norm normalizes with running statistics.
    Eval,
}

/// Every trainable tensor. Also used for gradients and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub fusion: FusionLayer,
    pub conv_w: Vec<Array2<f64>>,
    pub conv_b: Vec<Array1<f64>>,
    pub bn_gamma: Vec<Array1<f64>>,
    pub bn_beta: Vec<Array1<f64>>,
    /// `head_hidden × output_len`
    pub head_w1: Array2<f64>,
    pub head_b1: Array1<f64>,
    pub head_w2: Array1<f64>,
    pub head_b2: Array1<f64>,
}

impl Params {
    pub fn zeros(cfg: &TdnnConfig) -> Result<Self, TdnnError> {
        let out_len = cfg.output_len()?;
        Ok(Self {
            fusion: FusionLayer::zeros(cfg.d_fused, cfg.input_dim),
            conv_w: cfg.convs.iter().map(|c| Array2::zeros((c.out_channels, c.in_channels * c.kernel))).collect(),
            conv_b: cfg.convs.iter().map(|c| Array1::zeros(c.out_channels)).collect(),
            bn_gamma: cfg.convs.iter().map(|c| Array1::zeros(c.out_channels)).collect(),
            bn_beta: cfg.convs.iter().map(|c| Array1::zeros(c.out_channels)).collect(),
            head_w1: Array2::zeros((cfg.head_hidden, out_len)),
            head_b1: Array1::zeros(cfg.head_hidden),
            head_w2: Array1::zeros(cfg.head_hidden),
            head_b2: Array1::zeros(1),
        })
    }

    /// Names in canonical order; matches `tensors` and `tensors_mut`.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["fusion.weight".to_string(), "fusion.bias".to_string()];
        for l in 0..self.conv_w.len() {
            names.push(format!("conv{l}.weight"));
            names.push(format!("conv{l}.bias"));
            names.push(format!("bn{l}.gamma"));
            names.push(format!("bn{l}.beta"));
        }
        names.extend(["head.linear1.weight", "head.linear1.bias", "head.linear2.weight", "head.linear2.bias"].map(String::from));
        names
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![slice(&self.fusion.weight), slice1(&self.fusion.bias)];
        for l in 0..self.conv_w.len() {
            out.push(slice(&self.conv_w[l]));
            out.push(slice1(&self.conv_b[l]));
            out.push(slice1(&self.bn_gamma[l]));
            out.push(slice1(&self.bn_beta[l]));
        }
        out.extend([slice(&self.head_w1), slice1(&self.head_b1), slice1(&self.head_w2), slice1(&self.head_b2)]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.fusion.weight.as_slice_mut().unwrap(),
            self.fusion.bias.as_slice_mut().unwrap(),
        ];
        for (((w, b), g), be) in self
            .conv_w
            .iter_mut()
            .zip(self.conv_b.iter_mut())
            .zip(self.bn_gamma.iter_mut())
            .zip(self.bn_beta.iter_mut())
        {
            out.push(w.as_slice_mut().unwrap());
            out.push(b.as_slice_mut().unwrap());
            out.push(g.as_slice_mut().unwrap());
            out.push(be.as_slice_mut().unwrap());
        }
        out.push(self.head_w1.as_slice_mut().unwrap());
        out.push(self.head_b1.as_slice_mut().unwrap());
        out.push(self.head_w2.as_slice_mut().unwrap());
        out.push(self.head_b2.as_slice_mut().unwrap());
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

/// Batch-norm buffers for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

/// Trainable parameter count of one named tensor group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCount {
    pub name: String,
    pub params: usize,
}

/// Exact per-layer trainable parameter counts; running statistics are
/// buffers and not counted.
pub fn parameter_breakdown(cfg: &TdnnConfig) -> Result<Vec<LayerCount>, TdnnError> {
    let out_len = cfg.output_len()?;
    let mut rows = vec![LayerCount { name: "fusion".into(), params: cfg.d_fused * cfg.input_dim + cfg.d_fused }];
    for (l, c) in cfg.convs.iter().enumerate() {
        rows.push(LayerCount { name: format!("conv{l}"), params: c.out_channels * c.in_channels * c.kernel + c.out_channels });
        rows.push(LayerCount { name: format!("bn{l}"), params: 2 * c.out_channels });
    }
    rows.push(LayerCount { name: "head.linear1".into(), params: cfg.head_hidden * out_len + cfg.head_hidden });
    rows.push(LayerCount { name: "head.linear2".into(), params: cfg.head_hidden + 1 });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdnnModel {
    config: TdnnConfig,
    params: Params,
    running: Vec<RunningStats>,
    pub mode: Mode,
    version: u64,
}

impl TdnnModel {
    /// Fan-in scaled uniform initialization: weights of a layer with fan-in
    /// `n` are drawn from `U(-1/√n, 1/√n)` and biases start at zero; batch
    /// norm starts at `γ = 1, β = 0` with running mean 0 and variance 1.
    pub fn init(config: TdnnConfig, seed: u64) -> Result<Self, TdnnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(&config)?;
        let mut fill = |values: &mut [f64], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in values {
                *v = rng.random_range(-bound..bound);
            }
        };
        let fusion_fan = config.input_dim;
        fill(params.fusion.weight.as_slice_mut().unwrap(), fusion_fan);
        for (l, c) in config.convs.iter().enumerate() {
            fill(params.conv_w[l].as_slice_mut().unwrap(), c.in_channels * c.kernel);
            params.bn_gamma[l].fill(1.0);
        }
        fill(params.head_w1.as_slice_mut().unwrap(), config.output_len()?);
        fill(params.head_w2.as_slice_mut().unwrap(), config.head_hidden);
        let running = default_running(&config);
        Ok(Self { config, params, running, mode: Mode::Train, version: 0 })
    }

    /// Assembles a model from explicit tensors, checking every shape.
    pub fn from_parts(config: TdnnConfig, params: Params, running: Vec<RunningStats>) -> Result<Self, TdnnError> {
        config.validate()?;
        let template = Params::zeros(&config)?;
        let shapes_match = template.tensors().iter().zip(params.tensors()).all(|(a, b)| a.len() == b.len())
            && template.conv_w.iter().zip(&params.conv_w).all(|(a, b)| a.dim() == b.dim())
            && template.fusion.weight.dim() == params.fusion.weight.dim()
            && template.head_w1.dim() == params.head_w1.dim();
        let running_match = running.len() == config.convs.len()
            && running
                .iter()
                .zip(&config.convs)
                .all(|(r, c)| r.mean.len() == c.out_channels && r.var.len() == c.out_channels);
        if !shapes_match || !running_match {
            return Err(TdnnError::Shape("parameter tensors do not match the configuration".into()));
        }
        if !params.is_finite() || running.iter().any(|r| r.var.iter().any(|v| !(*v >= 0.0)) || r.mean.iter().any(|v| !v.is_finite())) {
            return Err(TdnnError::Shape("non-finite parameter or negative running variance".into()));
        }
        Ok(Self { config, params, running, mode: Mode::Train, version: 0 })
    }

    pub fn config(&self) -> &TdnnConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable parameter access. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut Params {
        self.version += 1;
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    pub fn running_stats_mut(&mut self) -> &mut [RunningStats] {
        self.version += 1;
        &mut self.running
    }

    pub fn num_params(&self) -> usize {
        self.params.count()
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn check_window(&self, w: &ArrayView2<'_, f32>) -> Result<(), TdnnError> {
        let expected = (self.config.input_dim, self.config.window_len);
        if w.dim() != expected {
            return Err(TdnnError::Shape(format!("window is {:?}, model expects {:?}", w.dim(), expected)));
        }
        Ok(())
    }

    /// Single-window forward pass in the current mode.
    pub fn forward<'a>(&self, window: ArrayView2<'a, f32>) -> Result<([f64; NUM_CLASSES], ForwardCache<'a>), TdnnError> {
        let cache = self.forward_batch(&[window])?;
        Ok((cache.probs[0], cache))
    }

    /// Forward pass over a batch. In `Train` mode batch norm uses the mean
    /// and biased variance over all examples and time steps of the batch.
    /// Running statistics are not touched; see
    /// [`TdnnModel::update_running_stats`].
    pub fn forward_batch<'a>(&self, windows: &[ArrayView2<'a, f32>]) -> Result<ForwardCache<'a>, TdnnError> {
        self.run(windows, self.mode)
    }

    fn run<'a>(&self, windows: &[ArrayView2<'a, f32>], mode: Mode) -> Result<ForwardCache<'a>, TdnnError> {
        if windows.is_empty() {
            return Err(TdnnError::Shape("empty batch".into()));
        }
        for w in windows {
            self.check_window(w)?;
        }
        let p = &self.params;
        let mut current: Vec<Array2<f64>> = windows
            .par_iter()
            .map(|w| p.fusion.apply(w.mapv(f64::from).view()))
            .collect();
        check_finite(&current, "fusion")?;

        let mut layers = Vec::with_capacity(self.config.convs.len());
        for (l, spec) in self.config.convs.iter().enumerate() {
            let w = &p.conv_w[l];
            let b = &p.conv_b[l];
            let relu: Vec<Array2<f64>> = current
                .par_iter()
                .map(|z| {
                    let mut y = w.dot(&im2col(z.view(), spec.kernel, spec.dilation));
                    for mut col in y.columns_mut() {
                        col += b;
                    }
                    y.mapv_inplace(|v| v.max(0.0));
                    y
                })
                .collect();

            let (mean, var, count) = match mode {
                Mode::Train => batch_moments(&relu),
                Mode::Eval => (self.running[l].mean.clone(), self.running[l].var.clone(), 0),
            };
            let invstd = var.mapv(|v| 1.0 / (v + self.config.batchnorm_eps).sqrt());
            let gamma = &p.bn_gamma[l];
            let beta = &p.bn_beta[l];
            let (xhat, out): (Vec<_>, Vec<_>) = relu
                .par_iter()
                .map(|r| {
                    let mut xhat = r.clone();
                    for (c, mut row) in xhat.axis_iter_mut(Axis(0)).enumerate() {
                        row.mapv_inplace(|v| (v - mean[c]) * invstd[c]);
                    }
                    let mut z = xhat.clone();
                    for (c, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
                        row.mapv_inplace(|v| gamma[c] * v + beta[c]);
                    }
                    (xhat, z)
                })
                .unzip();
            check_finite(&out, &format!("layer {l}"))?;
            let input = std::mem::replace(&mut current, out);
            layers.push(LayerCache { input, relu, xhat, mean, var, invstd, count });
        }

        let heads: Vec<HeadCache> = current
            .into_par_iter()
            .map(|z| {
                let mut h_pre = z.dot(&p.head_w1.t());
                for mut row in h_pre.rows_mut() {
                    row += &p.head_b1;
                }
                let h = h_pre.mapv(|v| v.max(0.0));
                let lg = h.dot(&p.head_w2);
                let mut logits = [0.0; NUM_CLASSES];
                for (dst, v) in logits.iter_mut().zip(lg.iter()) {
                    *dst = v + p.head_b2[0];
                }
                HeadCache { z, h_pre, h, logits }
            })
            .collect();
        let probs: Vec<[f64; NUM_CLASSES]> = heads.iter().map(|hc| softmax(&hc.logits)).collect();
        if probs.iter().flatten().any(|v| !v.is_finite()) || heads.iter().any(|h| h.logits.iter().any(|v| !v.is_finite())) {
            return Err(TdnnError::NonFiniteActivation { stage: "head".into() });
        }

        Ok(ForwardCache { windows: windows.to_vec(), layers, heads, probs, mode, version: self.version })
    }

    /// Exponential moving average of the batch statistics held in `cache`:
    /// `running ← (1 − m)·running + m·batch`. The biased batch variance is
    /// tracked, so a converged model normalizes identically in both modes.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<'_>) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = self.config.batchnorm_momentum;
        for (stats, layer) in self.running.iter_mut().zip(&cache.layers) {
            Zip::from(&mut stats.mean).and(&layer.mean).for_each(|r, &b| *r = (1.0 - m) * *r + m * b);
            Zip::from(&mut stats.var).and(&layer.var).for_each(|r, &b| *r = (1.0 - m) * *r + m * b);
        }
    }

    /// Class probabilities in `Eval` mode, evaluated in chunks.
    pub fn predict_proba(&self, windows: &[ArrayView2<'_, f32>], chunk: usize) -> Result<Vec<[f64; NUM_CLASSES]>, TdnnError> {
        let mut out = Vec::with_capacity(windows.len());
        for part in windows.chunks(chunk.max(1)) {
            out.extend(self.run(part, Mode::Eval)?.probs);
        }
        Ok(out)
    }

    /// Gradient of the mean cross-entropy over the batch in `cache`.
    pub fn backward(&self, cache: &ForwardCache<'_>, labels: &[PunctClass]) -> Result<Params, TdnnError> {
        if cache.version != self.version {
            return Err(TdnnError::StaleCache);
        }
        if cache.mode != Mode::Train {
            return Err(TdnnError::EvalCache);
        }
        if labels.len() != cache.probs.len() {
            return Err(TdnnError::Shape(format!("{} labels for a batch of {}", labels.len(), cache.probs.len())));
        }
        let p = &self.params;
        let batch = labels.len() as f64;
        let mut grads = Params::zeros(&self.config)?;

        // head, per example, then a fixed-order reduction
        let head_parts: Vec<(Params, Array2<f64>)> = cache
            .heads
            .par_iter()
            .zip(cache.probs.par_iter())
            .zip(labels.par_iter())
            .map(|((hc, probs), &label)| {
                let dlogits = logits_grad(probs, label).map(|g| g / batch);
                let mut g = Params::zeros(&self.config).expect("validated config");
                let dl = Array1::from(dlogits.to_vec());
                // logits_c = h_c · w2 + b2
                g.head_w2 = hc.h.t().dot(&dl);
                g.head_b2[0] = dl.sum();
                // dh_pre[c, j] = dl_c · w2_j · 1[h_pre > 0]
                let mut dh_pre = Array2::from_shape_fn(hc.h.dim(), |(c, j)| dl[c] * p.head_w2[j]);
                Zip::from(&mut dh_pre).and(&hc.h_pre).for_each(|d, &pre| {
                    if pre <= 0.0 {
                        *d = 0.0;
                    }
                });
                g.head_w1 = dh_pre.t().dot(&hc.z);
                g.head_b1 = dh_pre.sum_axis(Axis(0));
                let dz = dh_pre.dot(&p.head_w1);
                (g, dz)
            })
            .collect();
        let mut dz: Vec<Array2<f64>> = Vec::with_capacity(head_parts.len());
        for (g, d) in head_parts {
            grads.head_w1 += &g.head_w1;
            grads.head_b1 += &g.head_b1;
            grads.head_w2 += &g.head_w2;
            grads.head_b2 += &g.head_b2;
            dz.push(d);
        }

        for (l, spec) in self.config.convs.iter().enumerate().rev() {
            let lc = &cache.layers[l];
            let gamma = &p.bn_gamma[l];
            let channels = spec.out_channels;

            // batch-norm: reductions over batch and time per channel
            let mut dgamma = Array1::<f64>::zeros(channels);
            let mut dbeta = Array1::<f64>::zeros(channels);
            let mut sum_dxhat = Array1::<f64>::zeros(channels);
            let mut sum_dxhat_xhat = Array1::<f64>::zeros(channels);
            for (d, xhat) in dz.iter().zip(&lc.xhat) {
                for c in 0..channels {
                    let (drow, xrow) = (d.row(c), xhat.row(c));
                    let mut dg = 0.0;
                    let mut db = 0.0;
                    for (&dv, &xv) in drow.iter().zip(xrow.iter()) {
                        dg += dv * xv;
                        db += dv;
                    }
                    dgamma[c] += dg;
                    dbeta[c] += db;
                    sum_dxhat[c] += db * gamma[c];
                    sum_dxhat_xhat[c] += dg * gamma[c];
                }
            }
            grads.bn_gamma[l] = dgamma;
            grads.bn_beta[l] = dbeta;
            let n = lc.count as f64;

            let parts: Vec<(Array2<f64>, Array1<f64>, Array2<f64>)> = dz
                .par_iter()
                .zip(lc.xhat.par_iter())
                .zip(lc.relu.par_iter())
                .zip(lc.input.par_iter())
                .map(|(((d, xhat), relu), input)| {
                    // dR = invstd/N · (N·dxhat − Σdxhat − xhat·Σ(dxhat·xhat)), masked by ReLU
                    let mut dy = Array2::<f64>::zeros(d.dim());
                    Zip::indexed(&mut dy).and(d).and(xhat).and(relu).for_each(|(c, _), out, &dv, &xv, &rv| {
                        if rv > 0.0 {
                            let dxhat = dv * gamma[c];
                            *out = lc.invstd[c] / n * (n * dxhat - sum_dxhat[c] - xv * sum_dxhat_xhat[c]);
                        }
                    });
                    let cols = im2col(input.view(), spec.kernel, spec.dilation);
                    let dw = dy.dot(&cols.t());
                    let db = dy.sum_axis(Axis(1));
                    let dcols = p.conv_w[l].t().dot(&dy);
                    let dinput = col2im(dcols.view(), spec.in_channels, input.ncols(), spec.kernel, spec.dilation);
                    (dw, db, dinput)
                })
                .collect();
            let mut next = Vec::with_capacity(parts.len());
            for (dw, db, dinput) in parts {
                grads.conv_w[l] += &dw;
                grads.conv_b[l] += &db;
                next.push(dinput);
            }
            dz = next;
        }

        let fusion_parts: Vec<(Array2<f64>, Array1<f64>)> = dz
            .par_iter()
            .zip(cache.windows.par_iter())
            .map(|(d, w)| (d.dot(&w.mapv(f64::from).t()), d.sum_axis(Axis(1))))
            .collect();
        for (dw, db) in fusion_parts {
            grads.fusion.weight += &dw;
            grads.fusion.bias += &db;
        }
        Ok(grads)
    }
}

fn default_running(cfg: &TdnnConfig) -> Vec<RunningStats> {
    cfg.convs
        .iter()
        .map(|c| RunningStats { mean: Array1::zeros(c.out_channels), var: Array1::ones(c.out_channels) })
        .collect()
}

fn check_finite(values: &[Array2<f64>], stage: &str) -> Result<(), TdnnError> {
    if values.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
        return Err(TdnnError::NonFiniteActivation { stage: stage.to_string() });
    }
    Ok(())
}

/// Per-channel mean and biased variance over batch and time.
fn batch_moments(values: &[Array2<f64>]) -> (Array1<f64>, Array1<f64>, usize) {
    let channels = values[0].nrows();
    let count: usize = values.iter().map(|v| v.ncols()).sum();
    let n = count as f64;
    let mut mean = Array1::<f64>::zeros(channels);
    for v in values {
        mean += &v.sum_axis(Axis(1));
    }
    mean /= n;
    let mut var = Array1::<f64>::zeros(channels);
    for v in values {
        for (c, row) in v.axis_iter(Axis(0)).enumerate() {
            var[c] += row.iter().map(|x| (x - mean[c]).powi(2)).sum::<f64>();
        }
    }
    var /= n;
    (mean, var, count)
}

/// Column matrix for a valid dilated convolution over `z` (`in × L`).
pub(crate) fn im2col(z: ArrayView2<'_, f64>, kernel: usize, dilation: usize) -> Array2<f64> {
    let (channels, len) = z.dim();
    let out_len = len - (kernel - 1) * dilation;
    let mut cols = Array2::<f64>::zeros((channels * kernel, out_len));
    for i in 0..channels {
        for j in 0..kernel {
            let off = j * dilation;
            cols.row_mut(i * kernel + j).assign(&z.slice(s![i, off..off + out_len]));
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds column gradients back onto the input.
pub(crate) fn col2im(dcols: ArrayView2<'_, f64>, channels: usize, len: usize, kernel: usize, dilation: usize) -> Array2<f64> {
    let out_len = dcols.ncols();
    let mut dz = Array2::<f64>::zeros((channels, len));
    for i in 0..channels {
        for j in 0..kernel {
            let off = j * dilation;
            let mut dst = dz.slice_mut(s![i, off..off + out_len]);
            dst += &dcols.row(i * kernel + j);
        }
    }
    dz
}

pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|v| (v - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

/// `−ln(max(p[label], 1e-12))`.
pub fn cross_entropy(probs: &[f64; NUM_CLASSES], label: PunctClass) -> f64 {
    -probs[label.code()].max(PROB_FLOOR).ln()
}

/// Derivative of the cross-entropy of `softmax(logits)` with respect to the
/// logits: `probs − one_hot(label)`, or zero where the floor is active.
pub fn logits_grad(probs: &[f64; NUM_CLASSES], label: PunctClass) -> [f64; NUM_CLASSES] {
    if probs[label.code()] < PROB_FLOOR {
        return [0.0; NUM_CLASSES];
    }
    let mut g = *probs;
    g[label.code()] -= 1.0;
    g
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Vec<Array2<f64>>,
    relu: Vec<Array2<f64>>,
    xhat: Vec<Array2<f64>>,
    mean: Array1<f64>,
    var: Array1<f64>,
    invstd: Array1<f64>,
    count: usize,
}

#[derive(Debug, Clone)]
struct HeadCache {
    z: Array2<f64>,
    h_pre: Array2<f64>,
    h: Array2<f64>,
    logits: [f64; NUM_CLASSES],
}

/// Intermediates of one forward pass, consumed by [`TdnnModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<'a> {
    windows: Vec<ArrayView2<'a, f32>>,
    layers: Vec<LayerCache>,
    heads: Vec<HeadCache>,
    pub probs: Vec<[f64; NUM_CLASSES]>,
    pub mode: Mode,
    version: u64,
}

impl ForwardCache<'_> {
    pub fn logits(&self) -> Vec<[f64; NUM_CLASSES]> {
        self.heads.iter().map(|h| h.logits).collect()
    }

    /// ReLU on/off pattern of every layer, used to detect finite-difference
    /// probes that straddle a kink.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut bits = Vec::new();
        for layer in &self.layers {
            for r in &layer.relu {
                bits.extend(r.iter().map(|&v| v > 0.0));
            }
        }
        for h in &self.heads {
            bits.extend(h.h_pre.iter().map(|&v| v > 0.0));
        }
        bits
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, labels: &[PunctClass]) -> f64 {
        self.probs.iter().zip(labels).map(|(p, &l)| cross_entropy(p, l)).sum::<f64>() / labels.len() as f64
    }
}
