//! Cuts 301-frame windows around every transition of a synthetic corpus and
//! compares natural and class-balanced sampling.

use punctfuse::dataset::{build_windows, class_histogram, example_histogram, sample_epoch, SamplerConfig, SamplingMode, WINDOW_LEN};
use punctfuse::synth::{generate, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec { num_utterances: 30, ..SynthSpec::default() };
    let utterances = generate(&spec)?;
    let windows = build_windows(&utterances, spec.dims(), WINDOW_LEN)?;
    let first = &windows[0];
    println!("{} windows of shape {:?}", windows.len(), first.window.dim());
    println!("first: {} token {} centred on frame {} ({})", first.source.utterance, first.source.token_index, first.source.frame, first.label);
    println!("class counts (COMMA PERIOD QUESTION NONE): {:?}", example_histogram(&windows));

    for mode in [SamplingMode::Natural, SamplingMode::Balanced] {
        let cfg = SamplerConfig { seed: 1, epoch_size: 4000, mode };
        let drawn: Vec<_> = sample_epoch(&windows, &cfg)?.into_iter().map(|i| windows[i].label).collect();
        println!("{mode:?} sampling: {:?}", class_histogram(&drawn));
    }
    Ok(())
}
