#![allow(dead_code)]

use ndarray::Array2;
use punctfuse::tdnn::{ConvSpec, TdnnConfig, TdnnModel};
use punctfuse::PunctClass;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_CHECK_SEED: u64 = 1;
pub const GRAD_CHECK_BATCH: usize = 2;
pub const GRAD_CHECK_STEP: f64 = 1e-3;

/// Miniature networks for gradient checks. Each exercises every layer type.
pub fn miniature_configs() -> Vec<TdnnConfig> {
    let base = |input_dim, d_fused, convs: Vec<ConvSpec>, head_hidden, window_len| TdnnConfig {
        input_dim,
        d_fused,
        convs,
        head_hidden,
        window_len,
        batchnorm_eps: 1e-5,
        batchnorm_momentum: 0.1,
    };
    vec![
        base(6, 8, vec![ConvSpec::new(8, 8, 3, 1), ConvSpec::new(8, 4, 3, 2), ConvSpec::new(4, 4, 3, 1)], 4, 17),
        base(5, 6, vec![ConvSpec::new(6, 5, 2, 1), ConvSpec::new(5, 4, 3, 2)], 3, 13),
        base(
            7,
            6,
            vec![ConvSpec::new(6, 6, 3, 1), ConvSpec::new(6, 5, 2, 2), ConvSpec::new(5, 4, 3, 1), ConvSpec::new(4, 4, 2, 2)],
            5,
            19,
        ),
    ]
}

pub fn random_batch(cfg: &TdnnConfig, n: usize, seed: u64) -> (Vec<Array2<f32>>, Vec<PunctClass>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let windows = (0..n)
        .map(|_| Array2::from_shape_fn((cfg.input_dim, cfg.window_len), |_| rng.random_range(-1.0f32..1.0)))
        .collect();
    let labels = (0..n).map(|i| PunctClass::ALL[(i + seed as usize) % 4]).collect();
    (windows, labels)
}

#[derive(Debug)]
pub struct TensorCheck {
    pub name: String,
    /// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)` over the probed entries.
    pub rel_err: f64,
    /// Largest entrywise `|a − n|`.
    pub max_abs_err: f64,
    pub checked: usize,
    pub total: usize,
}

#[derive(Debug)]
pub struct GradCheck {
    pub tensors: Vec<TensorCheck>,
    /// Probes whose ±h evaluations changed some ReLU on/off state.
    pub kink_probes: usize,
}

impl GradCheck {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.rel_err).fold(0.0, f64::max)
    }

    /// Smallest fraction of entries probed in any tensor.
    pub fn min_coverage(&self) -> f64 {
        self.tensors.iter().map(|t| t.checked as f64 / t.total as f64).fold(1.0, f64::min)
    }
}

/// Denominator floor, so tensors whose gradient vanishes identically compare
/// as equal.
pub const REL_ERR_FLOOR: f64 = 1e-8;

pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(REL_ERR_FLOOR)
}

/// Central differences (step `h`) of the Train-mode batch loss against the
/// analytic gradient, for every entry of every trainable tensor. Probes that
/// flip a ReLU are left out.
pub fn gradient_check(cfg: &TdnnConfig, seed: u64, batch: usize, h: f64) -> GradCheck {
    let mut model = TdnnModel::init(cfg.clone(), seed).unwrap();
    let (windows, labels) = random_batch(cfg, batch, seed + 100);
    let views: Vec<_> = windows.iter().map(|w| w.view()).collect();
    let (analytic, base_pattern) = {
        let cache = model.forward_batch(&views).unwrap();
        (model.backward(&cache, &labels).unwrap(), cache.activation_pattern())
    };
    let names = model.params().names();
    let sizes: Vec<usize> = model.params().tensors().iter().map(|t| t.len()).collect();

    let mut tensors = Vec::new();
    let mut kink_probes = 0;
    for (t, name) in names.iter().enumerate() {
        let (mut a, mut n) = (Vec::new(), Vec::new());
        for i in 0..sizes[t] {
            let original = model.params().tensors()[t][i];
            let mut eval = |value: f64| {
                model.params_mut().tensors_mut()[t][i] = value;
                let cache = model.forward_batch(&views).unwrap();
                (cache.loss(&labels), cache.activation_pattern())
            };
            let (up, up_pattern) = eval(original + h);
            let (down, down_pattern) = eval(original - h);
            model.params_mut().tensors_mut()[t][i] = original;
            if up_pattern != base_pattern || down_pattern != base_pattern {
                kink_probes += 1;
                continue;
            }
            a.push(analytic.tensors()[t][i]);
            n.push((up - down) / (2.0 * h));
        }
        let max_abs_err = a.iter().zip(&n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        tensors.push(TensorCheck { name: name.clone(), rel_err: rel_err(&a, &n), max_abs_err, checked: a.len(), total: sizes[t] });
    }
    GradCheck { tensors, kink_probes }
}
