//! Compares backpropagated gradients with central differences on a tiny
//! network. Probes whose perturbation flips a ReLU are skipped.

use ndarray::Array2;
use punctfuse::tdnn::{ConvSpec, TdnnConfig, TdnnModel};
use punctfuse::PunctClass;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = TdnnConfig {
        input_dim: 5,
        d_fused: 6,
        convs: vec![ConvSpec::new(6, 5, 3, 1), ConvSpec::new(5, 4, 3, 2)],
        head_hidden: 4,
        window_len: 15,
        batchnorm_eps: 1e-5,
        batchnorm_momentum: 0.1,
    };
    let mut model = TdnnModel::init(cfg.clone(), 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let windows: Vec<Array2<f32>> = (0..2)
        .map(|_| Array2::from_shape_fn((cfg.input_dim, cfg.window_len), |_| rng.random_range(-1.0..1.0)))
        .collect();
    let labels = [PunctClass::Comma, PunctClass::Question];
    let views: Vec<_> = windows.iter().map(|w| w.view()).collect();
    let probe = |m: &TdnnModel| {
        let cache = m.forward_batch(&views).unwrap();
        (cache.loss(&labels), cache.activation_pattern())
    };
    let base = model.forward_batch(&views)?;
    let grads = model.backward(&base, &labels)?;
    let pattern = base.activation_pattern();

    let h = 1e-3;
    let names = model.params().names();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    for (k, name) in names.iter().enumerate() {
        let (mut num_sq, mut diff_sq, mut skipped) = (0.0, 0.0, 0);
        for i in 0..analytic[k].len() {
            let orig = model.params().tensors()[k][i];
            model.params_mut().tensors_mut()[k][i] = orig + h;
            let (up, up_pattern) = probe(&model);
            model.params_mut().tensors_mut()[k][i] = orig - h;
            let (down, down_pattern) = probe(&model);
            model.params_mut().tensors_mut()[k][i] = orig;
            if up_pattern != pattern || down_pattern != pattern {
                skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            num_sq += numeric * numeric;
            diff_sq += (numeric - analytic[k][i]).powi(2);
        }
        println!(
            "{name:<20} |fd| {:>10.3e}  |g - fd| {:>10.3e}  skipped {skipped}/{}",
            num_sq.sqrt(),
            diff_sq.sqrt(),
            analytic[k].len()
        );
    }
    Ok(())
}
