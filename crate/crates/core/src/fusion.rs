//! Frame-level fusion of token embeddings with acoustic embeddings.
//!
//! Each audio frame is paired with the text column of the token being
//! spoken at that frame and the two vectors are concatenated, acoustic
//! rows first. Frames in silence gaps reuse the most recent preceding
//! token; frames before the first token use token 0.

use ndarray::{Array1, Array2, ArrayView2};
use thiserror::Error;

use crate::types::{validate_pair_with, AlignmentTable, EmbeddingMatrix, ModalityDims, PunctClass, ValidationReport};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid input triple: {0}")]
    InvariantViolation(ValidationReport),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Boundary between token `token_index` and the next one, labelled with the
/// punctuation following `token_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub frame: usize,
    pub token_index: usize,
    pub label: PunctClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedSequence {
    /// `(audio_dim + text_dim) × T`; rows `0..audio_dim` are acoustic.
    pub frames: Array2<f32>,
    pub transitions: Vec<Transition>,
    pub audio_dim: usize,
}

impl FusedSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.ncols()
    }

    pub fn dim(&self) -> usize {
        self.frames.nrows()
    }
}

pub fn align_and_concat(
    text: &EmbeddingMatrix,
    audio: &EmbeddingMatrix,
    align: &AlignmentTable,
    dims: ModalityDims,
) -> Result<FusedSequence, FusionError> {
    let report = validate_pair_with(text, audio, align, dims);
    if !report.is_ok() {
        return Err(FusionError::InvariantViolation(report));
    }
    let entries = align.entries();
    let frames_total = audio.cols();
    let mut frames = Array2::<f32>::zeros((dims.fused(), frames_total));

    let mut token = 0;
    for t in 0..frames_total {
        while token + 1 < entries.len() && entries[token + 1].start_frame <= t {
            token += 1;
        }
        let mut col = frames.column_mut(t);
        for (dst, src) in col.iter_mut().zip(audio.column(t).iter().chain(text.column(token))) {
            *dst = *src;
        }
    }

    let mut transitions: Vec<Transition> = entries
        .windows(2)
        .map(|w| Transition { frame: w[1].start_frame, token_index: w[0].token_index, label: w[0].label })
        .collect();
    let last = entries.last().expect("validated alignment is non-empty");
    if last.end_frame <= frames_total {
        transitions.push(Transition { frame: last.end_frame, token_index: last.token_index, label: last.label });
    }

    Ok(FusedSequence { frames, transitions, audio_dim: dims.audio })
}

/// Affine map applied to every fused frame vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionLayer {
    /// `d_fused × input_dim`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl FusionLayer {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self, FusionError> {
        if weight.nrows() != bias.len() {
            return Err(FusionError::Shape(format!(
                "weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(FusionError::Shape("non-finite fusion parameter".into()));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(d_fused: usize, input_dim: usize) -> Self {
        Self { weight: Array2::zeros((d_fused, input_dim)), bias: Array1::zeros(d_fused) }
    }

    pub fn d_fused(&self) -> usize {
        self.weight.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    /// `weight · x + bias` column-wise, for `x` of shape `input_dim × T`.
    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = self.weight.dot(&x);
        for mut col in out.columns_mut() {
            col += &self.bias;
        }
        out
    }
}

pub fn fuse(seq: &FusedSequence, layer: &FusionLayer) -> Result<Array2<f64>, FusionError> {
    if layer.input_dim() != seq.dim() {
        return Err(FusionError::Shape(format!(
            "fusion layer expects {} input rows, sequence has {}",
            layer.input_dim(),
            seq.dim()
        )));
    }
    let x = seq.frames.mapv(f64::from);
    Ok(layer.apply(x.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AlignmentEntry, EmbeddingKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(spans: &[(usize, usize, PunctClass)]) -> AlignmentTable {
        let entries = spans
            .iter()
            .enumerate()
            .map(|(i, &(s, e, label))| AlignmentEntry {
                token_index: i,
                start_frame: s,
                end_frame: e,
                token_text: format!("t{i}"),
                label,
            })
            .collect();
        AlignmentTable::new(entries).unwrap()
    }

    // text column j is filled with 1000 + 10 j + r, audio frame t with t + r / 100
    fn fixture(dims: ModalityDims, tokens: usize, frames: usize) -> (EmbeddingMatrix, EmbeddingMatrix) {
        let text =
            EmbeddingMatrix::from_fn(EmbeddingKind::Text, dims.text, tokens, |r, c| 1000.0 + 10.0 * c as f32 + r as f32)
                .unwrap();
        let audio =
            EmbeddingMatrix::from_fn(EmbeddingKind::Audio, dims.audio, frames, |r, c| c as f32 + r as f32 / 100.0)
                .unwrap();
        (text, audio)
    }

    #[test]
    fn two_tokens_cover_all_frames() {
        let dims = ModalityDims::STANDARD;
        let (text, audio) = fixture(dims, 2, 10);
        let align = table(&[(0, 4, PunctClass::Comma), (4, 10, PunctClass::FullStop)]);
        let seq = align_and_concat(&text, &audio, &align, dims).unwrap();

        // hand-built expectation: frame t = audio column t ++ text column (t < 4 ? 0 : 1)
        let mut expected = Array2::<f32>::zeros((1792, 10));
        for t in 0..10 {
            let token = if t < 4 { 0 } else { 1 };
            for r in 0..1024 {
                expected[[r, t]] = t as f32 + r as f32 / 100.0;
            }
            for r in 0..768 {
                expected[[1024 + r, t]] = 1000.0 + 10.0 * token as f32 + r as f32;
            }
        }
        assert_eq!(seq.frames, expected);
        assert_eq!(
            seq.transitions,
            vec![
                Transition { frame: 4, token_index: 0, label: PunctClass::Comma },
                Transition { frame: 10, token_index: 1, label: PunctClass::FullStop },
            ]
        );
    }

    #[test]
    fn single_token_has_one_transition() {
        let dims = ModalityDims::MINI;
        let (text, audio) = fixture(dims, 1, 12);
        let align = table(&[(2, 9, PunctClass::Question)]);
        let seq = align_and_concat(&text, &audio, &align, dims).unwrap();
        assert_eq!(seq.transitions, vec![Transition { frame: 9, token_index: 0, label: PunctClass::Question }]);
        // leading and trailing silence both carry token 0
        for t in 0..12 {
            assert_eq!(seq.frames[[dims.audio, t]], 1000.0);
        }
    }

    #[test]
    fn gap_frames_reuse_preceding_token() {
        let dims = ModalityDims::MINI;
        let (text, audio) = fixture(dims, 2, 10);
        let align = table(&[(0, 3, PunctClass::NoPunct), (5, 10, PunctClass::FullStop)]);
        let seq = align_and_concat(&text, &audio, &align, dims).unwrap();
        let text_at = |t: usize| seq.frames[[dims.audio, t]];
        for t in 0..5 {
            assert_eq!(text_at(t), 1000.0, "frame {t}");
        }
        for t in 5..10 {
            assert_eq!(text_at(t), 1010.0, "frame {t}");
        }
        assert_eq!(seq.transitions[0].frame, 5);
        for t in 0..10 {
            for r in 0..dims.audio {
                assert_eq!(seq.frames[[r, t]], audio.get(r, t));
            }
        }
    }

    #[test]
    fn invalid_triple_is_rejected() {
        let dims = ModalityDims::MINI;
        let (text, audio) = fixture(dims, 3, 10);
        let align = table(&[(0, 4, PunctClass::NoPunct), (4, 10, PunctClass::FullStop)]);
        assert!(matches!(align_and_concat(&text, &audio, &align, dims), Err(FusionError::InvariantViolation(_))));
    }

    fn mini_seq() -> FusedSequence {
        let dims = ModalityDims::MINI;
        let (text, audio) = fixture(dims, 2, 6);
        let align = table(&[(0, 3, PunctClass::NoPunct), (3, 6, PunctClass::FullStop)]);
        align_and_concat(&text, &audio, &align, dims).unwrap()
    }

    #[test]
    fn zero_weight_yields_bias() {
        let seq = mini_seq();
        let mut layer = FusionLayer::zeros(3, seq.dim());
        layer.bias = Array1::from(vec![0.5, -1.0, 2.0]);
        let out = fuse(&seq, &layer).unwrap();
        for col in out.columns() {
            assert_eq!(col.to_vec(), vec![0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn identity_layer_is_identity() {
        let dims = ModalityDims::STANDARD;
        let (text, audio) = fixture(dims, 1, 3);
        let align = table(&[(0, 3, PunctClass::FullStop)]);
        let seq = align_and_concat(&text, &audio, &align, dims).unwrap();
        let layer = FusionLayer::new(Array2::eye(1792), Array1::zeros(1792)).unwrap();
        let out = fuse(&seq, &layer).unwrap();
        assert_eq!(out, seq.frames.mapv(f64::from));
    }

    #[test]
    fn matches_brute_force_matvec() {
        let dims = ModalityDims::STANDARD;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let text = EmbeddingMatrix::from_fn(EmbeddingKind::Text, 768, 1, |_, _| rng.random_range(-1.0..1.0)).unwrap();
        let audio = EmbeddingMatrix::from_fn(EmbeddingKind::Audio, 1024, 2, |_, _| rng.random_range(-1.0..1.0)).unwrap();
        let align = table(&[(0, 2, PunctClass::NoPunct)]);
        let seq = align_and_concat(&text, &audio, &align, dims).unwrap();
        let weight = Array2::from_shape_fn((4, 1792), |_| rng.random_range(-0.1..0.1));
        let bias = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
        let layer = FusionLayer::new(weight.clone(), bias.clone()).unwrap();
        let out = fuse(&seq, &layer).unwrap();

        for j in 0..2 {
            let x: Vec<f64> = audio.column(j).iter().chain(text.column(0)).map(|&v| v as f64).collect();
            for i in 0..4 {
                let mut acc = bias[i];
                for (k, xk) in x.iter().enumerate() {
                    acc += weight[[i, k]] * xk;
                }
                assert!((out[[i, j]] - acc).abs() < 1e-5, "({i},{j}) {} vs {acc}", out[[i, j]]);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let seq = mini_seq();
        let layer = FusionLayer::zeros(2, seq.dim() + 1);
        assert!(matches!(fuse(&seq, &layer), Err(FusionError::Shape(_))));
        assert!(FusionLayer::new(Array2::zeros((2, 3)), Array1::zeros(3)).is_err());
    }
}
