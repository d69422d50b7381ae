//! Domain vocabulary shared across the pipeline: punctuation classes,
//! embedding matrices, token-to-frame alignments and posterior vectors.

use std::fmt;

use thiserror::Error;

/// Duration of one acoustic frame. Window arithmetic assumes this is fixed.
pub const FRAME_DURATION_MS: u32 = 10;

/// Number of punctuation classes.
pub const NUM_CLASSES: usize = 4;

/// Punctuation following a word. Integer codes are part of every file
/// format and must never be reordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PunctClass {
    Comma = 0,
    FullStop = 1,
    Question = 2,
    NoPunct = 3,
}

impl PunctClass {
    pub const ALL: [PunctClass; NUM_CLASSES] = [
        PunctClass::Comma,
        PunctClass::FullStop,
        PunctClass::Question,
        PunctClass::NoPunct,
    ];

    /// The three classes that carry an actual punctuation mark.
    pub const MARKS: [PunctClass; 3] = [PunctClass::Comma, PunctClass::FullStop, PunctClass::Question];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    /// Label spelling used in alignment and prediction TSV files.
    pub fn tsv_name(self) -> &'static str {
        match self {
            PunctClass::Comma => "COMMA",
            PunctClass::FullStop => "PERIOD",
            PunctClass::Question => "QUESTION",
            PunctClass::NoPunct => "NONE",
        }
    }

    pub fn from_tsv_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.tsv_name() == name)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            PunctClass::Comma => ",",
            PunctClass::FullStop => ".",
            PunctClass::Question => "?",
            PunctClass::NoPunct => "",
        }
    }
}

impl fmt::Display for PunctClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tsv_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmbeddingKind {
    Text,
    Audio,
}

impl EmbeddingKind {
    pub fn code(self) -> u8 {
        match self {
            EmbeddingKind::Text => 0,
            EmbeddingKind::Audio => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(EmbeddingKind::Text),
            1 => Some(EmbeddingKind::Audio),
            _ => None,
        }
    }
}

/// Expected embedding widths for the two modalities.
///
/// `STANDARD` matches the production encoders (768-d token vectors,
/// 1024-d frame vectors). `MINI` is a scaled-down profile for fixtures and
/// fast tests; every rule other than the row counts is identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModalityDims {
    pub text: usize,
    pub audio: usize,
}

impl ModalityDims {
    pub const STANDARD: ModalityDims = ModalityDims { text: 768, audio: 1024 };
    pub const MINI: ModalityDims = ModalityDims { text: 8, audio: 16 };

    /// Width of one concatenated frame vector.
    pub fn fused(self) -> usize {
        self.text + self.audio
    }
}

impl Default for ModalityDims {
    fn default() -> Self {
        Self::STANDARD
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("matrix dimensions must be positive (got {rows}x{cols})")]
    ZeroDim { rows: usize, cols: usize },
    #[error("data length {len} does not match {rows}x{cols}")]
    LengthMismatch { rows: usize, cols: usize, len: usize },
    #[error("non-finite value at element {index}")]
    NonFinite { index: usize },
}

/// Dense f32 matrix whose columns are token or frame vectors, stored
/// column-major; `column(j)` is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    kind: EmbeddingKind,
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(kind: EmbeddingKind, rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, MatrixError> {
        if rows == 0 || cols == 0 {
            return Err(MatrixError::ZeroDim { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(MatrixError::LengthMismatch { rows, cols, len: data.len() });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite { index });
        }
        Ok(Self { kind, rows, cols, data })
    }

    pub fn zeros(kind: EmbeddingKind, rows: usize, cols: usize) -> Result<Self, MatrixError> {
        Self::new(kind, rows, cols, vec![0.0; rows * cols])
    }

    /// Builds a matrix column by column.
    pub fn from_fn(
        kind: EmbeddingKind,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self, MatrixError> {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self::new(kind, rows, cols, data)
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn column(&self, j: usize) -> &[f32] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[col * self.rows + row]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentEntry {
    pub token_index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    pub token_text: String,
    pub label: PunctClass,
}

/// Token-to-frame spans produced by a forced aligner, each token carrying
/// the punctuation that follows it. Spans are half-open, ordered and
/// non-overlapping; gaps between them (silence) are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentTable {
    entries: Vec<AlignmentEntry>,
}

impl AlignmentTable {
    pub fn new(entries: Vec<AlignmentEntry>) -> Result<Self, Issue> {
        match alignment_issues(&entries).into_iter().next() {
            Some(issue) => Err(issue),
            None => Ok(Self { entries }),
        }
    }

    pub fn entries(&self) -> &[AlignmentEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn frame_duration_ms(&self) -> u32 {
        FRAME_DURATION_MS
    }

    pub fn labels(&self) -> impl Iterator<Item = PunctClass> + '_ {
        self.entries.iter().map(|e| e.label)
    }
}

/// One violated consistency rule.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Issue {
    #[error("alignment has no tokens")]
    EmptyAlignment,
    #[error("token index {found} at position {position} breaks 0-based contiguity")]
    TokenIndexGap { position: usize, found: usize },
    #[error("empty span at token {token}")]
    EmptySpan { token: usize },
    #[error("overlap at token {token}")]
    Overlap { token: usize },
    #[error("text matrix has kind {found:?}, expected Text")]
    TextKind { found: EmbeddingKind },
    #[error("audio matrix has kind {found:?}, expected Audio")]
    AudioKind { found: EmbeddingKind },
    #[error("text rows must be {expected} (found {found})")]
    TextRows { expected: usize, found: usize },
    #[error("audio rows must be {expected} (found {found})")]
    AudioRows { expected: usize, found: usize },
    #[error("token count mismatch: alignment has {tokens} tokens, text has {text_cols} columns")]
    TokenCount { tokens: usize, text_cols: usize },
    #[error("span exceeds audio frames: token {token} ends at frame {end} but audio has {frames} frames")]
    SpanExceedsAudio { token: usize, end: usize, frames: usize },
}

/// Rules internal to an alignment, independent of any embeddings.
pub fn alignment_issues(entries: &[AlignmentEntry]) -> Vec<Issue> {
    let mut issues = Vec::new();
    if entries.is_empty() {
        issues.push(Issue::EmptyAlignment);
    }
    for (position, e) in entries.iter().enumerate() {
        if e.token_index != position {
            issues.push(Issue::TokenIndexGap { position, found: e.token_index });
        }
        if e.start_frame >= e.end_frame {
            issues.push(Issue::EmptySpan { token: e.token_index });
        }
        if position > 0 && entries[position - 1].end_frame > e.start_frame {
            issues.push(Issue::Overlap { token: e.token_index });
        }
    }
    issues
}

/// Every problem found in a (text, audio, alignment) triple. Empty iff the
/// triple is consistent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.issues.iter().map(|i| i.to_string()).collect()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.issues.iter().any(|i| i.to_string().contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("consistent");
        }
        let msgs = self.messages();
        f.write_str(&msgs.join("; "))
    }
}

/// Checks a triple against the standard 768/1024 embedding widths.
pub fn validate_pair(text: &EmbeddingMatrix, audio: &EmbeddingMatrix, align: &AlignmentTable) -> ValidationReport {
    validate_pair_with(text, audio, align, ModalityDims::STANDARD)
}

pub fn validate_pair_with(
    text: &EmbeddingMatrix,
    audio: &EmbeddingMatrix,
    align: &AlignmentTable,
    dims: ModalityDims,
) -> ValidationReport {
    let mut issues = Vec::new();
    if text.kind() != EmbeddingKind::Text {
        issues.push(Issue::TextKind { found: text.kind() });
    }
    if audio.kind() != EmbeddingKind::Audio {
        issues.push(Issue::AudioKind { found: audio.kind() });
    }
    if text.rows() != dims.text {
        issues.push(Issue::TextRows { expected: dims.text, found: text.rows() });
    }
    if audio.rows() != dims.audio {
        issues.push(Issue::AudioRows { expected: dims.audio, found: audio.rows() });
    }
    issues.extend(alignment_issues(align.entries()));
    if align.len() != text.cols() {
        issues.push(Issue::TokenCount { tokens: align.len(), text_cols: text.cols() });
    }
    for e in align.entries() {
        if e.end_frame > audio.cols() {
            issues.push(Issue::SpanExceedsAudio { token: e.token_index, end: e.end_frame, frames: audio.cols() });
        }
    }
    ValidationReport { issues }
}

/// Tolerance on the sum of a posterior vector.
pub const PROB_SUM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("not a probability vector: {probs:?}")]
pub struct NotAProbability {
    pub probs: [f64; NUM_CLASSES],
}

/// Class posterior for the transition following one token, in class-code
/// order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorRecord {
    pub token_index: usize,
    pub probs: [f64; NUM_CLASSES],
}

impl PosteriorRecord {
    pub fn new(token_index: usize, probs: [f64; NUM_CLASSES]) -> Result<Self, NotAProbability> {
        let in_range = probs.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p));
        let sum: f64 = probs.iter().sum();
        if !in_range || (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(NotAProbability { probs });
        }
        Ok(Self { token_index, probs })
    }

    /// Most probable class, ties resolved toward the lowest class code.
    pub fn argmax(&self) -> PunctClass {
        argmax(&self.probs)
    }
}

/// Index of the largest entry; the first one wins on ties.
pub fn argmax(values: &[f64; NUM_CLASSES]) -> PunctClass {
    let mut best = 0;
    for i in 1..NUM_CLASSES {
        if values[i] > values[best] {
            best = i;
        }
    }
    PunctClass::ALL[best]
}
