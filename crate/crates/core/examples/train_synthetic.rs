//! Trains the mini network on planted-cue synthetic data and scores a
//! held-out set.

use punctfuse::dataset::{build_windows, SamplerConfig, SamplingMode, WINDOW_LEN};
use punctfuse::ensemble::evaluate;
use punctfuse::synth::{generate, SynthSpec};
use punctfuse::tdnn::{predict_classes, train_with_callback, EpochLog, OptimizerState, TdnnConfig, TdnnModel, TrainOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec { num_utterances: 60, text_cue_magnitude: 0.0, ..SynthSpec::default() };
    let train_set = build_windows(&generate(&spec)?, spec.dims(), WINDOW_LEN)?;
    let held = SynthSpec { seed: 1, ..spec.clone() };
    let held_set = build_windows(&generate(&held)?, held.dims(), WINDOW_LEN)?;

    let mut model = TdnnModel::init(TdnnConfig::mini(), 0)?;
    let mut opt = OptimizerState::new(&model, 0.01, 0.9)?;
    let options = TrainOptions {
        epochs: 30,
        batch_size: 16,
        sampler: SamplerConfig { seed: 1, epoch_size: 256, mode: SamplingMode::Balanced },
        target_accuracy: Some(0.99),
        ..TrainOptions::default()
    };
    println!("{} training windows, {} parameters", train_set.len(), model.num_params());
    println!("{}", EpochLog::TSV_HEADER);
    train_with_callback(&mut model, &mut opt, &train_set, Some(&held_set), &options, &mut |e| println!("{}", e.tsv_row()))?;

    let preds = predict_classes(&model, &held_set)?;
    let golds: Vec<_> = held_set.iter().map(|e| e.label).collect();
    print!("{}", evaluate(&preds, &golds)?.table());
    Ok(())
}
