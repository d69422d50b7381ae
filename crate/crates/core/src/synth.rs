//! Synthetic utterances with planted punctuation cues.
//!
//! Acoustic rows `0..4` carry an energy track that is [`ENERGY_LEVEL`]
//! while a token is spoken and 0 in silence. Each token is followed by a
//! pause whose length encodes its label:
//!
//! | label    | pause after the token  | extra cue                          |
//! |----------|------------------------|------------------------------------|
//! | NoPunct  | none                   |                                    |
//! | Comma    | `pause_short_frames`   |                                    |
//! | FullStop | `pause_long_frames`    |                                    |
//! | Question | `pause_long_frames`    | ramp on acoustic rows `4..8` over the token's last `ramp_frames` frames, peaking at `pitch_rise_magnitude` |
//!
//! Text rows `0..4` of each token column carry `text_cue_magnitude` on the
//! row of the token's class code. The last token of an utterance is always
//! a FullStop or Question, drawn with their relative `class_weights`.
//! Gaussian noise of `noise_sigma` is added
//! to every embedding entry. Text-branch posteriors put their argmax on the
//! true label with probability `text_accuracy` and on a uniformly chosen
//! wrong label otherwise.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Manifest, ManifestEntry, Utterance, WINDOW_LEN};
use crate::ingest::{self, IngestError};
use crate::types::{
    AlignmentEntry, AlignmentTable, EmbeddingKind, EmbeddingMatrix, ModalityDims, PosteriorRecord, PunctClass,
    NUM_CLASSES,
};

pub const ENERGY_LEVEL: f32 = 1.0;
pub const CUE_ROWS: usize = 4;
pub const ENERGY_ROWS: std::ops::Range<usize> = 0..CUE_ROWS;
pub const PITCH_ROWS: std::ops::Range<usize> = CUE_ROWS..2 * CUE_ROWS;
pub const MANIFEST_NAME: &str = "manifest.tsv";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Mini,
    Standard,
}

impl Profile {
    pub fn dims(self) -> ModalityDims {
        match self {
            Profile::Mini => ModalityDims::MINI,
            Profile::Standard => ModalityDims::STANDARD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub seed: u64,
    pub num_utterances: usize,
    pub profile: Profile,
    /// Inclusive `[min, max]`.
    pub tokens_per_utterance: [usize; 2],
    /// Inclusive `[min, max]`.
    pub frames_per_token: [usize; 2],
    /// Silence before the first token.
    pub lead_in_frames: usize,
    pub pause_long_frames: usize,
    pub pause_short_frames: usize,
    pub ramp_frames: usize,
    pub pitch_rise_magnitude: f32,
    pub text_cue_magnitude: f32,
    pub noise_sigma: f32,
    pub text_accuracy: f64,
    /// Relative label frequencies in class-code order.
    pub class_weights: [f64; NUM_CLASSES],
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            num_utterances: 40,
            profile: Profile::Mini,
            tokens_per_utterance: [3, 8],
            frames_per_token: [35, 60],
            lead_in_frames: 10,
            pause_long_frames: 30,
            pause_short_frames: 10,
            ramp_frames: 12,
            pitch_rise_magnitude: 1.0,
            text_cue_magnitude: 0.5,
            noise_sigma: 0.1,
            text_accuracy: 0.8,
            class_weights: [0.25, 0.2, 0.15, 0.4],
        }
    }
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        let spec: Self = toml::from_str(text).map_err(|e| SynthError::Invalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn dims(&self) -> ModalityDims {
        self.profile.dims()
    }

    /// Frames of silence following a token with this label.
    pub fn pause_after(&self, label: PunctClass) -> usize {
        match label {
            PunctClass::NoPunct => 0,
            PunctClass::Comma => self.pause_short_frames,
            PunctClass::FullStop | PunctClass::Question => self.pause_long_frames,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: &str| Err(SynthError::Invalid(msg.to_string()));
        let range_ok = |r: [usize; 2]| r[0] >= 1 && r[0] <= r[1];
        if self.num_utterances == 0 {
            return bad("num_utterances must be positive");
        }
        if !range_ok(self.tokens_per_utterance) || !range_ok(self.frames_per_token) {
            return bad("ranges must satisfy 1 <= min <= max");
        }
        if self.pause_short_frames == 0 || self.pause_long_frames <= self.pause_short_frames {
            return bad("pauses must satisfy 0 < pause_short_frames < pause_long_frames");
        }
        if self.pause_long_frames >= WINDOW_LEN / 2 {
            return bad("pause_long_frames must fit in half a window");
        }
        if self.frames_per_token[0] <= self.pause_long_frames {
            return bad("tokens must be longer than the long pause");
        }
        if self.ramp_frames == 0 {
            return bad("ramp_frames must be positive");
        }
        let finite = [self.pitch_rise_magnitude, self.text_cue_magnitude, self.noise_sigma];
        if finite.iter().any(|v| !v.is_finite()) || self.noise_sigma < 0.0 {
            return bad("cue magnitudes must be finite and noise_sigma non-negative");
        }
        if !(0.0..=1.0).contains(&self.text_accuracy) {
            return bad("text_accuracy must lie in [0, 1]");
        }
        if self.class_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || self.class_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("class_weights must be non-negative with a positive sum");
        }
        if self.class_weights[PunctClass::FullStop.code()] + self.class_weights[PunctClass::Question.code()] <= 0.0 {
            return bad("FullStop and Question weights cannot both be zero");
        }
        let dims = self.dims();
        if dims.audio < 2 * CUE_ROWS || dims.text < CUE_ROWS {
            return bad("profile too narrow for the cue blocks");
        }
        Ok(())
    }
}

pub fn utterance_id(index: usize) -> String {
    format!("utt{index:04}")
}

/// Generates every utterance. Utterance `i` draws from ChaCha stream `i`
/// seeded with `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<Vec<Utterance>, SynthError> {
    spec.validate()?;
    (0..spec.num_utterances).into_par_iter().map(|i| generate_one(spec, i)).collect()
}

fn generate_one(spec: &SynthSpec, index: usize) -> Result<Utterance, SynthError> {
    let dims = spec.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let invalid = |e: rand_distr::weighted::Error| SynthError::Invalid(e.to_string());
    let class_dist = WeightedIndex::new(spec.class_weights).map_err(invalid)?;
    let mut final_weights = [0.0; NUM_CLASSES];
    for c in [PunctClass::FullStop, PunctClass::Question] {
        final_weights[c.code()] = spec.class_weights[c.code()];
    }
    let final_dist = WeightedIndex::new(final_weights).map_err(invalid)?;

    let n_tokens = rng.random_range(spec.tokens_per_utterance[0] as u64..=spec.tokens_per_utterance[1] as u64) as usize;
    let mut entries = Vec::with_capacity(n_tokens);
    let mut cursor = spec.lead_in_frames;
    for token_index in 0..n_tokens {
        let len = rng.random_range(spec.frames_per_token[0] as u64..=spec.frames_per_token[1] as u64) as usize;
        let dist = if token_index + 1 == n_tokens { &final_dist } else { &class_dist };
        let label = PunctClass::ALL[dist.sample(&mut rng)];
        entries.push(AlignmentEntry {
            token_index,
            start_frame: cursor,
            end_frame: cursor + len,
            token_text: format!("w{token_index}"),
            label,
        });
        cursor += len + spec.pause_after(label);
    }
    let frames = cursor;

    let mut audio = vec![0f32; dims.audio * frames];
    for e in &entries {
        for t in e.start_frame..e.end_frame {
            for r in ENERGY_ROWS {
                audio[t * dims.audio + r] = ENERGY_LEVEL;
            }
        }
        if e.label == PunctClass::Question {
            let ramp_start = e.end_frame as isize - spec.ramp_frames as isize;
            for t in ramp_start.max(e.start_frame as isize) as usize..e.end_frame {
                let step = (t as isize - ramp_start + 1) as f32 / spec.ramp_frames as f32;
                for r in PITCH_ROWS {
                    audio[t * dims.audio + r] = spec.pitch_rise_magnitude * step;
                }
            }
        }
    }
    let mut text = vec![0f32; dims.text * n_tokens];
    for e in &entries {
        text[e.token_index * dims.text + e.label.code()] = spec.text_cue_magnitude;
    }
    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0f32, spec.noise_sigma).map_err(|e| SynthError::Invalid(e.to_string()))?;
        for v in audio.iter_mut().chain(text.iter_mut()) {
            *v += noise.sample(&mut rng);
        }
    }

    let posteriors = entries.iter().map(|e| text_posterior(&mut rng, e.token_index, e.label, spec.text_accuracy)).collect();
    let matrix = |kind, rows, cols, data| EmbeddingMatrix::new(kind, rows, cols, data).map_err(|e| SynthError::Invalid(e.to_string()));
    let alignment = AlignmentTable::new(entries).map_err(|e| SynthError::Invalid(e.to_string()))?;
    Ok(Utterance {
        id: utterance_id(index),
        text: matrix(EmbeddingKind::Text, dims.text, n_tokens, text)?,
        audio: matrix(EmbeddingKind::Audio, dims.audio, frames, audio)?,
        alignment,
        posteriors: Some(posteriors),
    })
}

/// Softmax of standard normal logits, with the designated class lifted
/// above the others by a margin in `[0.2, 2)`.
fn text_posterior(rng: &mut ChaCha8Rng, token_index: usize, label: PunctClass, accuracy: f64) -> PosteriorRecord {
    let designated = if rng.random_bool(accuracy) {
        label.code()
    } else {
        let wrong = rng.random_range(0..NUM_CLASSES as u64 - 1) as usize;
        if wrong >= label.code() { wrong + 1 } else { wrong }
    };
    let normal = Normal::new(0.0f64, 1.0).expect("unit normal");
    let mut logits = [0.0f64; NUM_CLASSES];
    for v in logits.iter_mut() {
        *v = normal.sample(rng);
    }
    let others = (0..NUM_CLASSES).filter(|&c| c != designated).map(|c| logits[c]).fold(f64::NEG_INFINITY, f64::max);
    logits[designated] = others + rng.random_range(0.2..2.0);
    let max = logits[designated];
    let exps = logits.map(|z| (z - max).exp());
    let sum: f64 = exps.iter().sum();
    PosteriorRecord::new(token_index, exps.map(|e| e / sum)).expect("softmax output is a distribution")
}

/// Writes every utterance as `<id>.text.emb`, `<id>.audio.emb`,
/// `<id>.align.tsv` and `<id>.post.tsv` under `dir`, plus a manifest.
/// Returns the manifest path.
pub fn write_fixture(utterances: &[Utterance], dims: ModalityDims, dir: impl AsRef<Path>) -> Result<PathBuf, SynthError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| IngestError::Io { path: dir.to_path_buf(), source })?;
    let mut entries = Vec::with_capacity(utterances.len());
    for u in utterances {
        let name = |suffix: &str| PathBuf::from(format!("{}.{suffix}", u.id));
        let entry = ManifestEntry {
            utterance: u.id.clone(),
            text: name("text.emb"),
            audio: name("audio.emb"),
            alignment: name("align.tsv"),
            posteriors: u.posteriors.as_ref().map(|_| name("post.tsv")),
        };
        ingest::write_embeddings(&u.text, dir.join(&entry.text))?;
        ingest::write_embeddings(&u.audio, dir.join(&entry.audio))?;
        ingest::write_alignment(&u.alignment, dir.join(&entry.alignment))?;
        if let (Some(records), Some(path)) = (&u.posteriors, &entry.posteriors) {
            ingest::write_posteriors(records, dir.join(path))?;
        }
        entries.push(entry);
    }
    let manifest_path = dir.join(MANIFEST_NAME);
    let manifest = Manifest { dims, entries };
    fs::write(&manifest_path, manifest.format())
        .map_err(|source| IngestError::Io { path: manifest_path.clone(), source })?;
    Ok(manifest_path)
}
