//! Training examples: fixed-length windows centred on token transitions,
//! class-rebalanced sampling, and the manifest that ties utterance files
//! together.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::fusion::{align_and_concat, FusedSequence, FusionError};
use crate::ingest::{self, IngestError};
use crate::types::{AlignmentTable, EmbeddingMatrix, ModalityDims, PosteriorRecord, PunctClass, NUM_CLASSES};

/// Window length in frames (3 s at 10 ms per frame). The transition frame
/// sits at index `WINDOW_LEN / 2`.
pub const WINDOW_LEN: usize = 301;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("utterance {utterance}: {source}")]
    Fusion {
        utterance: String,
        #[source]
        source: FusionError,
    },
    #[error("{path}:{line}: {message}")]
    Manifest { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleSource {
    pub utterance: String,
    pub frame: usize,
    pub token_index: usize,
}

/// A `dim × window_len` slice of a fused sequence (before the fusion
/// layer) with the label of its centre transition.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowExample {
    pub window: Array2<f32>,
    pub label: PunctClass,
    pub source: ExampleSource,
}

/// One window per transition covering frames `[f - h, f + h]` with
/// `h = window_len / 2`. Frames outside the sequence are zero columns.
///
/// # Panics
/// If `window_len` is even.
pub fn extract_windows(seq: &FusedSequence, utterance: &str, window_len: usize) -> Vec<WindowExample> {
    assert!(window_len % 2 == 1, "window length must be odd, got {window_len}");
    let half = (window_len / 2) as isize;
    let total = seq.num_frames() as isize;
    seq.transitions
        .iter()
        .map(|tr| {
            let mut window = Array2::<f32>::zeros((seq.dim(), window_len));
            let first = tr.frame as isize - half;
            let lo = first.max(0);
            let hi = (first + window_len as isize).min(total);
            if lo < hi {
                let dst = (lo - first) as usize..(hi - first) as usize;
                window.slice_mut(s![.., dst]).assign(&seq.frames.slice(s![.., lo as usize..hi as usize]));
            }
            WindowExample {
                window,
                label: tr.label,
                source: ExampleSource { utterance: utterance.to_string(), frame: tr.frame, token_index: tr.token_index },
            }
        })
        .collect()
}

/// Exact per-class counts in class-code order.
pub fn class_histogram<'a>(labels: impl IntoIterator<Item = &'a PunctClass>) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for label in labels {
        counts[label.code()] += 1;
    }
    counts
}

pub fn example_histogram(examples: &[WindowExample]) -> [usize; NUM_CLASSES] {
    class_histogram(examples.iter().map(|e| &e.label))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Uniform over examples.
    Natural,
    /// Uniform over present classes, then uniform within the class.
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub seed: u64,
    pub epoch_size: usize,
    pub mode: SamplingMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { seed: 0, epoch_size: 1024, mode: SamplingMode::Balanced }
    }
}

/// Draws `cfg.epoch_size` example indices with replacement.
///
/// The generator is ChaCha8 seeded with `cfg.seed` on stream 0, and every
/// draw goes through `u64` ranges, so index sequences are identical on all
/// platforms.
pub fn sample_epoch(examples: &[WindowExample], cfg: &SamplerConfig) -> Result<Vec<usize>, DatasetError> {
    let labels: Vec<PunctClass> = examples.iter().map(|e| e.label).collect();
    sample_labels(&labels, cfg, 0)
}

/// Sampling over bare labels; `stream` selects an independent ChaCha
/// stream so successive epochs can share one seed.
pub fn sample_labels(labels: &[PunctClass], cfg: &SamplerConfig, stream: u64) -> Result<Vec<usize>, DatasetError> {
    if labels.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let mut draw = |n: usize| rng.random_range(0..n as u64) as usize;

    match cfg.mode {
        SamplingMode::Natural => Ok((0..cfg.epoch_size).map(|_| draw(labels.len())).collect()),
        SamplingMode::Balanced => {
            let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
            for (i, label) in labels.iter().enumerate() {
                by_class[label.code()].push(i);
            }
            let present: Vec<&Vec<usize>> = by_class.iter().filter(|v| !v.is_empty()).collect();
            Ok((0..cfg.epoch_size)
                .map(|_| {
                    let members = present[draw(present.len())];
                    members[draw(members.len())]
                })
                .collect())
        }
    }
}

/// One manifest row. Relative paths are resolved against the manifest's
/// directory when the manifest is read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utterance: String,
    pub text: PathBuf,
    pub audio: PathBuf,
    pub alignment: PathBuf,
    pub posteriors: Option<PathBuf>,
}

/// Utterance list driving dataset assembly.
///
/// ```text
/// @dims   8   16
/// # utterance  text  audio  alignment  [posteriors]
/// utt0000  utt0000.text.emb  utt0000.audio.emb  utt0000.align.tsv  utt0000.post.tsv
/// ```
///
/// The optional `@dims <text> <audio>` line declares the embedding widths;
/// without it the standard 768/1024 widths are expected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub dims: ModalityDims,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self, DatasetError> {
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let err = |line: usize, message: String| DatasetError::Manifest { path: path.to_path_buf(), line, message };
        let mut dims = ModalityDims::STANDARD;
        let mut entries: Vec<ManifestEntry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields[0] == "@dims" {
                let parsed: Option<Vec<usize>> = fields[1..].iter().map(|f| f.parse().ok()).collect();
                match parsed.as_deref() {
                    Some(&[t, a]) if t > 0 && a > 0 => dims = ModalityDims { text: t, audio: a },
                    _ => return Err(err(line, "expected `@dims <text> <audio>`".into())),
                }
                continue;
            }
            if !(4..=5).contains(&fields.len()) {
                return Err(err(line, format!("expected 4 or 5 fields, found {}", fields.len())));
            }
            if entries.iter().any(|e| e.utterance == fields[0]) {
                return Err(err(line, format!("duplicate utterance {:?}", fields[0])));
            }
            entries.push(ManifestEntry {
                utterance: fields[0].to_string(),
                text: base.join(fields[1]),
                audio: base.join(fields[2]),
                alignment: base.join(fields[3]),
                posteriors: fields.get(4).map(|p| base.join(p)),
            });
        }
        Ok(Self { dims, entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    /// Serialized form with paths written exactly as stored.
    pub fn format(&self) -> String {
        let mut out = String::new();
        if self.dims != ModalityDims::STANDARD {
            out.push_str(&format!("@dims\t{}\t{}\n", self.dims.text, self.dims.audio));
        }
        out.push_str("# utterance\ttext\taudio\talignment\tposteriors\n");
        for e in &self.entries {
            let mut row = format!("{}\t{}\t{}\t{}", e.utterance, e.text.display(), e.audio.display(), e.alignment.display());
            if let Some(p) = &e.posteriors {
                row.push('\t');
                row.push_str(&p.display().to_string());
            }
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

/// All inputs for one utterance.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub text: EmbeddingMatrix,
    pub audio: EmbeddingMatrix,
    pub alignment: AlignmentTable,
    pub posteriors: Option<Vec<PosteriorRecord>>,
}

impl Utterance {
    pub fn load(entry: &ManifestEntry) -> Result<Self, DatasetError> {
        Ok(Self {
            id: entry.utterance.clone(),
            text: ingest::read_embeddings(&entry.text)?,
            audio: ingest::read_embeddings(&entry.audio)?,
            alignment: ingest::read_alignment(&entry.alignment)?,
            posteriors: entry.posteriors.as_ref().map(ingest::read_posteriors).transpose()?,
        })
    }

    pub fn fuse(&self, dims: ModalityDims) -> Result<FusedSequence, DatasetError> {
        align_and_concat(&self.text, &self.audio, &self.alignment, dims)
            .map_err(|source| DatasetError::Fusion { utterance: self.id.clone(), source })
    }
}

pub fn load_utterances(manifest: &Manifest) -> Result<Vec<Utterance>, DatasetError> {
    manifest.entries.par_iter().map(Utterance::load).collect()
}

/// Windows for every transition of every utterance, in manifest order.
pub fn build_windows(utterances: &[Utterance], dims: ModalityDims, window_len: usize) -> Result<Vec<WindowExample>, DatasetError> {
    let per_utt: Vec<Vec<WindowExample>> = utterances
        .par_iter()
        .map(|u| Ok(extract_windows(&u.fuse(dims)?, &u.id, window_len)))
        .collect::<Result<_, DatasetError>>()?;
    Ok(per_utt.into_iter().flatten().collect())
}
