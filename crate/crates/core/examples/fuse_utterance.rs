//! Aligns one synthetic utterance, concatenates the modalities frame by
//! frame and applies a fusion layer.

use ndarray::{Array1, Array2};
use punctfuse::fusion::{align_and_concat, fuse, FusionLayer};
use punctfuse::synth::{generate, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec { num_utterances: 1, seed: 3, ..SynthSpec::default() };
    let utt = generate(&spec)?.remove(0);
    let dims = spec.dims();
    let seq = align_and_concat(&utt.text, &utt.audio, &utt.alignment, dims)?;
    println!("{}: {} frames of width {} ({} acoustic + {} text)", utt.id, seq.num_frames(), seq.dim(), dims.audio, dims.text);
    for (e, tr) in utt.alignment.entries().iter().zip(&seq.transitions) {
        println!("  token {:>2} frames [{:>3}, {:>3})  transition at {:>3}  {}", e.token_index, e.start_frame, e.end_frame, tr.frame, tr.label);
    }

    let d_fused = 6;
    let weight = Array2::from_shape_fn((d_fused, seq.dim()), |(o, i)| if i % d_fused == o { 0.5 } else { 0.0 });
    let layer = FusionLayer::new(weight, Array1::from_elem(d_fused, 0.1))?;
    let fused = fuse(&seq, &layer)?;
    println!("fused: {} x {}", fused.nrows(), fused.ncols());
    Ok(())
}
