use super::model::{Params, TdnnModel};
use super::TdnnError;

/// SGD with classical momentum. Velocity buffers mirror the parameter
/// tensors one for one.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub velocity: Params,
}

impl OptimizerState {
    pub const DEFAULT_LEARNING_RATE: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.9;

    pub fn new(model: &TdnnModel, learning_rate: f64, momentum: f64) -> Result<Self, TdnnError> {
        Ok(Self { learning_rate, momentum, velocity: Params::zeros(model.config())? })
    }

    pub fn with_defaults(model: &TdnnModel) -> Result<Self, TdnnError> {
        Self::new(model, Self::DEFAULT_LEARNING_RATE, Self::DEFAULT_MOMENTUM)
    }
}

/// `v ← μ·v + g; p ← p − η·v` for every trainable tensor. `grads` is
/// expected to be the batch-mean gradient.
pub fn sgd_step(model: &mut TdnnModel, grads: &Params, opt: &mut OptimizerState) -> Result<(), TdnnError> {
    let (lr, mu) = (opt.learning_rate, opt.momentum);
    let params = model.params_mut();
    let targets = params.tensors_mut();
    let velocities = opt.velocity.tensors_mut();
    let gradients = grads.tensors();
    if targets.len() != gradients.len() || targets.len() != velocities.len() {
        return Err(TdnnError::Shape("gradient and parameter tensor lists differ".into()));
    }
    for ((p, v), g) in targets.into_iter().zip(velocities).zip(gradients) {
        if p.len() != g.len() || p.len() != v.len() {
            return Err(TdnnError::Shape("gradient tensor shape mismatch".into()));
        }
        for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = mu * *vi + gi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tdnn::TdnnConfig;

    fn filled(model: &TdnnModel, value: f64) -> Params {
        let mut g = Params::zeros(model.config()).unwrap();
        for t in g.tensors_mut() {
            t.fill(value);
        }
        g
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut model = TdnnModel::init(TdnnConfig::mini(), 1).unwrap();
        let before = model.params().clone();
        let mut opt = OptimizerState::new(&model, 0.0, 0.9).unwrap();
        let g = filled(&model, 3.0);
        sgd_step(&mut model, &g, &mut opt).unwrap();
        assert_eq!(model.params(), &before);
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut model = TdnnModel::init(TdnnConfig::mini(), 1).unwrap();
        let before = model.params().clone();
        let mut opt = OptimizerState::new(&model, 0.5, 0.0).unwrap();
        let g = filled(&model, 2.0);
        sgd_step(&mut model, &g, &mut opt).unwrap();
        sgd_step(&mut model, &g, &mut opt).unwrap();
        for (a, b) in model.params().tensors().iter().zip(before.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - (y - 2.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn momentum_unrolls_to_2_9_g() {
        // v1 = g, v2 = 0.9 g + g; displacement = -(1 + 1.9) g with lr 1
        let mut model = TdnnModel::init(TdnnConfig::mini(), 1).unwrap();
        let before = model.params().clone();
        let mut opt = OptimizerState::new(&model, 1.0, 0.9).unwrap();
        let g = filled(&model, 0.25);
        sgd_step(&mut model, &g, &mut opt).unwrap();
        sgd_step(&mut model, &g, &mut opt).unwrap();
        for (a, b) in model.params().tensors().iter().zip(before.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y + 2.9 * 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut model = TdnnModel::init(TdnnConfig::mini(), 1).unwrap();
        let other = TdnnModel::init(TdnnConfig::default(), 1).unwrap();
        let mut opt = OptimizerState::with_defaults(&model).unwrap();
        assert!(sgd_step(&mut model, &filled(&other, 1.0), &mut opt).is_err());
    }
}
