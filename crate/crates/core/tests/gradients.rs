mod common;

use common::{gradient_check, miniature_configs, random_batch, GRAD_CHECK_BATCH, GRAD_CHECK_SEED, GRAD_CHECK_STEP};
use punctfuse::tdnn::{ConvSpec, TdnnConfig, TdnnModel};

#[test]
fn analytic_gradients_match_central_differences() {
    for (k, cfg) in miniature_configs().iter().enumerate() {
        let report = gradient_check(cfg, GRAD_CHECK_SEED, GRAD_CHECK_BATCH, GRAD_CHECK_STEP);
        for t in &report.tensors {
            println!(
                "config {k} {:<20} rel {:.2e}  max abs {:.2e}  probed {}/{}",
                t.name, t.rel_err, t.max_abs_err, t.checked, t.total
            );
        }
        assert!(report.max_rel_err() < 1e-4, "config {k}: {:.3e}", report.max_rel_err());
        assert!(report.min_coverage() >= 0.5, "config {k}: coverage {:.2}", report.min_coverage());
    }
}

#[test]
fn dead_path_has_zero_gradient() {
    let cfg = TdnnConfig {
        input_dim: 4,
        d_fused: 4,
        convs: vec![ConvSpec::new(4, 4, 3, 1), ConvSpec::new(4, 4, 3, 1)],
        head_hidden: 3,
        window_len: 9,
        batchnorm_eps: 1e-5,
        batchnorm_momentum: 0.1,
    };
    let mut model = TdnnModel::init(cfg.clone(), 3).unwrap();
    // channel 0 of the first layer never fires, so its normalized output is β = 0
    model.params_mut().conv_b[0][0] = -1e6;
    let (windows, labels) = random_batch(&cfg, 3, 9);
    let views: Vec<_> = windows.iter().map(|w| w.view()).collect();
    let cache = model.forward_batch(&views).unwrap();
    let loss = cache.loss(&labels);
    let grads = model.backward(&cache, &labels).unwrap();
    drop(cache);

    let k = cfg.convs[1].kernel;
    for o in 0..4 {
        for j in 0..k {
            assert_eq!(grads.conv_w[1][[o, j]], 0.0, "conv1 weight ({o}, in 0, tap {j})");
        }
    }
    model.params_mut().conv_w[1][[2, 1]] += 0.5;
    let perturbed = model.forward_batch(&views).unwrap().loss(&labels);
    assert_eq!(perturbed, loss);
}
