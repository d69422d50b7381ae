//! Blends two posterior streams that are each right on a different class
//! and sweeps the blend weight.

use punctfuse::ensemble::{alpha_sweep, format_sweep};
use punctfuse::{PosteriorRecord, PunctClass};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cases: [([f64; 4], [f64; 4], PunctClass, usize); 4] = [
        ([0.1, 0.1, 0.7, 0.1], [0.1, 0.5, 0.3, 0.1], PunctClass::Question, 10),
        ([0.3, 0.4, 0.2, 0.1], [0.7, 0.1, 0.1, 0.1], PunctClass::Comma, 15),
        ([0.1, 0.7, 0.1, 0.1], [0.2, 0.6, 0.1, 0.1], PunctClass::FullStop, 10),
        ([0.1, 0.1, 0.1, 0.7], [0.1, 0.1, 0.1, 0.7], PunctClass::NoPunct, 30),
    ];
    let (mut acoustic, mut text, mut golds) = (Vec::new(), Vec::new(), Vec::new());
    for (a, t, gold, n) in cases {
        for _ in 0..n {
            acoustic.push(PosteriorRecord::new(golds.len(), a)?);
            text.push(PosteriorRecord::new(golds.len(), t)?);
            golds.push(gold);
        }
    }
    let alphas = [0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0];
    let rows = alpha_sweep(&acoustic, &text, &golds, &alphas)?;
    print!("{}", format_sweep(&rows));
    Ok(())
}
