//! Readers and writers for the on-disk inputs.
//!
//! Embedding matrices use the EPEMB01 binary layout (all integers and
//! floats little-endian):
//!
//! | offset | size        | field                                  |
//! |--------|-------------|----------------------------------------|
//! | 0      | 8           | magic `b"EPEMB01\n"`                   |
//! | 8      | 1           | kind: 0 = text, 1 = audio              |
//! | 9      | 4           | rows (u32)                             |
//! | 13     | 4           | cols (u32)                             |
//! | 17     | 4·rows·cols | f32 payload, column-major              |
//!
//! Alignments and posteriors are whitespace-separated text, one row per
//! token; blank lines and lines starting with `#` are skipped. Writers emit
//! tab separators.
//!
//! ```text
//! # token_index  start_frame  end_frame_exclusive  token_text  label
//! 0   0   30  hello   NONE
//! 1   30  80  world   PERIOD
//! ```
//!
//! ```text
//! # token_index  p_comma  p_fullstop  p_question  p_nopunct
//! 0   0.1 0.6 0.2 0.1
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::types::{
    AlignmentEntry, AlignmentTable, EmbeddingKind, EmbeddingMatrix, Issue, MatrixError, PosteriorRecord, PunctClass,
    NUM_CLASSES,
};

pub const EMB_MAGIC: &[u8; 8] = b"EPEMB01\n";
pub const EMB_HEADER_LEN: usize = 17;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: bad magic at byte offset 0")]
    BadMagic { path: PathBuf },
    #[error("{path}: bad header at byte offset {offset}: {message}")]
    BadHeader { path: PathBuf, offset: usize, message: String },
    #[error("{path}: truncated file at byte offset {offset} (expected {expected} bytes)")]
    TruncatedFile { path: PathBuf, offset: usize, expected: usize },
    #[error("{path}: trailing data at byte offset {offset}")]
    TrailingData { path: PathBuf, offset: usize },
    #[error("{path}: non-finite value at byte offset {offset}")]
    NonFiniteValue { path: PathBuf, offset: usize },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: invariant violation: {issue}")]
    InvariantViolation { path: PathBuf, issue: Issue },
    #[error("{path}:{line}: row {row} is not a probability vector")]
    NotAProbability { path: PathBuf, line: usize, row: usize },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_path_buf(), source }
}

/// Serializes a matrix into its EPEMB01 byte image.
pub fn encode_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(EMB_HEADER_LEN + 4 * m.data().len());
    out.extend_from_slice(EMB_MAGIC);
    out.push(m.kind().code());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses an EPEMB01 byte image. `path` is used only for error messages.
pub fn decode_embeddings(bytes: &[u8], path: &Path) -> Result<EmbeddingMatrix, IngestError> {
    let path_buf = || path.to_path_buf();
    let magic_len = bytes.len().min(EMB_MAGIC.len());
    if bytes[..magic_len] != EMB_MAGIC[..magic_len] {
        return Err(IngestError::BadMagic { path: path_buf() });
    }
    if bytes.len() < EMB_HEADER_LEN {
        return Err(IngestError::TruncatedFile { path: path_buf(), offset: bytes.len(), expected: EMB_HEADER_LEN });
    }
    let kind = EmbeddingKind::from_code(bytes[8]).ok_or_else(|| IngestError::BadHeader {
        path: path_buf(),
        offset: 8,
        message: format!("unknown kind {}", bytes[8]),
    })?;
    let rows = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(IngestError::BadHeader {
            path: path_buf(),
            offset: if rows == 0 { 9 } else { 13 },
            message: format!("zero dimension {rows}x{cols}"),
        });
    }
    let expected = EMB_HEADER_LEN + 4 * rows * cols;
    if bytes.len() < expected {
        // offset of the first missing float
        let whole = (bytes.len() - EMB_HEADER_LEN) / 4;
        return Err(IngestError::TruncatedFile { path: path_buf(), offset: EMB_HEADER_LEN + 4 * whole, expected });
    }
    if bytes.len() > expected {
        return Err(IngestError::TrailingData { path: path_buf(), offset: expected });
    }
    let data: Vec<f32> = bytes[EMB_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingMatrix::new(kind, rows, cols, data).map_err(|e| match e {
        MatrixError::NonFinite { index } => {
            IngestError::NonFiniteValue { path: path_buf(), offset: EMB_HEADER_LEN + 4 * index }
        }
        other => IngestError::BadHeader { path: path_buf(), offset: 9, message: other.to_string() },
    })
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, IngestError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_embeddings(&bytes, path)
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    fs::write(path, encode_embeddings(m)).map_err(io_err(path))
}

/// Non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, path: &Path, line: usize) -> Result<T, IngestError> {
    field.parse().map_err(|_| IngestError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("invalid {name} {field:?}"),
    })
}

pub fn parse_alignment(text: &str, path: &Path) -> Result<AlignmentTable, IngestError> {
    let mut entries = Vec::new();
    for (line, content) in data_lines(text) {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(IngestError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let label = PunctClass::from_tsv_name(fields[4]).ok_or_else(|| IngestError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("unknown label {:?}", fields[4]),
        })?;
        entries.push(AlignmentEntry {
            token_index: parse_field(fields[0], "token_index", path, line)?,
            start_frame: parse_field(fields[1], "start_frame", path, line)?,
            end_frame: parse_field(fields[2], "end_frame_exclusive", path, line)?,
            token_text: fields[3].to_string(),
            label,
        });
    }
    AlignmentTable::new(entries).map_err(|issue| IngestError::InvariantViolation { path: path.to_path_buf(), issue })
}

pub fn read_alignment(path: impl AsRef<Path>) -> Result<AlignmentTable, IngestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_alignment(&text, path)
}

pub fn format_alignment(align: &AlignmentTable) -> String {
    let mut out = String::from("# token_index\tstart_frame\tend_frame_exclusive\ttoken_text\tlabel\n");
    for e in align.entries() {
        writeln!(out, "{}\t{}\t{}\t{}\t{}", e.token_index, e.start_frame, e.end_frame, e.token_text, e.label).unwrap();
    }
    out
}

pub fn write_alignment(align: &AlignmentTable, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    fs::write(path, format_alignment(align)).map_err(io_err(path))
}

pub fn parse_posteriors(text: &str, path: &Path) -> Result<Vec<PosteriorRecord>, IngestError> {
    let mut records = Vec::new();
    for (row, (line, content)) in data_lines(text).enumerate() {
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 1 + NUM_CLASSES {
            return Err(IngestError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", 1 + NUM_CLASSES, fields.len()),
            });
        }
        let token_index = parse_field(fields[0], "token_index", path, line)?;
        let mut probs = [0.0; NUM_CLASSES];
        for (p, field) in probs.iter_mut().zip(&fields[1..]) {
            *p = parse_field(field, "probability", path, line)?;
        }
        let record = PosteriorRecord::new(token_index, probs)
            .map_err(|_| IngestError::NotAProbability { path: path.to_path_buf(), line, row })?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_posteriors(path: impl AsRef<Path>) -> Result<Vec<PosteriorRecord>, IngestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_posteriors(&text, path)
}

pub fn format_posteriors(records: &[PosteriorRecord]) -> String {
    let mut out = String::from("# token_index\tp_comma\tp_fullstop\tp_question\tp_nopunct\n");
    for r in records {
        let [a, b, c, d] = r.probs;
        writeln!(out, "{}\t{a}\t{b}\t{c}\t{d}", r.token_index).unwrap();
    }
    out
}

pub fn write_posteriors(records: &[PosteriorRecord], path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    fs::write(path, format_posteriors(records)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("test")
    }

    #[test]
    fn file_sizes_follow_header_formula() {
        let dir = tempfile::tempdir().unwrap();
        let m = EmbeddingMatrix::zeros(EmbeddingKind::Text, 768, 1).unwrap();
        let path = dir.path().join("t.emb");
        write_embeddings(&m, &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 17 + 3072);

        let m = EmbeddingMatrix::zeros(EmbeddingKind::Audio, 1024, 2).unwrap();
        write_embeddings(&m, &path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 17 + 8192);
        assert_eq!(read_embeddings(&path).unwrap(), m);
    }

    #[test]
    fn header_fields_are_little_endian() {
        let m = EmbeddingMatrix::new(EmbeddingKind::Audio, 2, 1, vec![1.0, -2.5]).unwrap();
        let bytes = encode_embeddings(&m);
        assert_eq!(&bytes[..8], b"EPEMB01\n");
        assert_eq!(bytes[8], 1);
        assert_eq!(&bytes[9..13], &[2, 0, 0, 0]);
        assert_eq!(&bytes[13..17], &[1, 0, 0, 0]);
        assert_eq!(&bytes[17..21], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[21..25], &(-2.5f32).to_le_bytes());
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(decode_embeddings(b"XXXX", p()), Err(IngestError::BadMagic { .. })));
        let mut bytes = encode_embeddings(&EmbeddingMatrix::zeros(EmbeddingKind::Text, 2, 2).unwrap());
        bytes[3] = b'Z';
        assert!(matches!(decode_embeddings(&bytes, p()), Err(IngestError::BadMagic { .. })));
    }

    #[test]
    fn truncated_payload() {
        let m = EmbeddingMatrix::zeros(EmbeddingKind::Audio, 1024, 100).unwrap();
        let bytes = encode_embeddings(&m);
        let short = &bytes[..EMB_HEADER_LEN + 4 * 1024 * 99];
        match decode_embeddings(short, p()) {
            Err(IngestError::TruncatedFile { offset, expected, .. }) => {
                assert_eq!(offset, EMB_HEADER_LEN + 4 * 1024 * 99);
                assert_eq!(expected, bytes.len());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(decode_embeddings(&bytes[..12], p()), Err(IngestError::TruncatedFile { offset: 12, .. })));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_embeddings(&EmbeddingMatrix::zeros(EmbeddingKind::Text, 2, 2).unwrap());
        bytes.push(0);
        assert!(matches!(decode_embeddings(&bytes, p()), Err(IngestError::TrailingData { offset: 33, .. })));
    }

    #[test]
    fn non_finite_reports_offset() {
        let mut bytes = encode_embeddings(&EmbeddingMatrix::zeros(EmbeddingKind::Text, 2, 2).unwrap());
        bytes[EMB_HEADER_LEN + 8..EMB_HEADER_LEN + 12].copy_from_slice(&f32::INFINITY.to_le_bytes());
        match decode_embeddings(&bytes, p()) {
            Err(IngestError::NonFiniteValue { offset, .. }) => assert_eq!(offset, 25),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_kind_and_zero_dims() {
        let mut bytes = encode_embeddings(&EmbeddingMatrix::zeros(EmbeddingKind::Text, 2, 2).unwrap());
        bytes[8] = 7;
        assert!(matches!(decode_embeddings(&bytes, p()), Err(IngestError::BadHeader { offset: 8, .. })));
        let mut header = EMB_MAGIC.to_vec();
        header.push(0);
        header.extend_from_slice(&0u32.to_le_bytes());
        header.extend_from_slice(&3u32.to_le_bytes());
        assert!(matches!(decode_embeddings(&header, p()), Err(IngestError::BadHeader { offset: 9, .. })));
    }

    #[test]
    fn write_to_unwritable_path_names_it() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("missing-dir").join("x.emb");
        let m = EmbeddingMatrix::zeros(EmbeddingKind::Text, 2, 1).unwrap();
        let err = write_embeddings(&m, &target).unwrap_err();
        assert!(matches!(err, IngestError::Io { .. }));
        assert!(err.to_string().contains("missing-dir"));
    }

    #[test]
    fn alignment_parsing() {
        let table = parse_alignment("0 0 30 hello NONE\n1\t30\t80\tworld\tPERIOD\n", p()).unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.entries()[1].label, PunctClass::FullStop);
        assert_eq!(table.entries()[1].token_text, "world");
        assert_eq!((table.entries()[1].start_frame, table.entries()[1].end_frame), (30, 80));

        let with_comments = "# header\n\n0 0 30 hello COMMA\n";
        assert_eq!(parse_alignment(with_comments, p()).unwrap().len(), 1);

        match parse_alignment("0 0 40 a NONE\n1 30 80 b PERIOD\n", p()) {
            Err(IngestError::InvariantViolation { issue, .. }) => assert_eq!(issue.to_string(), "overlap at token 1"),
            other => panic!("unexpected {other:?}"),
        }
        match parse_alignment("0 0 30 a NONE\n1 30 80 b SEMICOLON\n", p()) {
            Err(IngestError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_alignment("0 0 x a NONE\n", p()), Err(IngestError::Parse { line: 1, .. })));
        assert!(matches!(parse_alignment("0 0 30 NONE\n", p()), Err(IngestError::Parse { .. })));
    }

    #[test]
    fn posterior_parsing() {
        let recs = parse_posteriors("0 0.1 0.6 0.2 0.1\n", p()).unwrap();
        assert_eq!(recs[0].probs, [0.1, 0.6, 0.2, 0.1]);
        assert!(matches!(
            parse_posteriors("0 0.5 0.5 0.5 0.5\n", p()),
            Err(IngestError::NotAProbability { row: 0, .. })
        ));
        let one_hot = parse_posteriors("0 1 0 0 0\n", p()).unwrap();
        assert_eq!(one_hot[0].argmax(), PunctClass::Comma);
        assert!(matches!(parse_posteriors("0 0.5 0.5\n", p()), Err(IngestError::Parse { .. })));
    }

    #[test]
    fn tsv_writers_round_trip() {
        let align = parse_alignment("0 0 30 hello COMMA\n1 35 80 world QUESTION\n", p()).unwrap();
        assert_eq!(parse_alignment(&format_alignment(&align), p()).unwrap(), align);

        let recs = vec![
            PosteriorRecord::new(0, [0.1, 0.6, 0.2, 0.1]).unwrap(),
            PosteriorRecord::new(1, [1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]).unwrap(),
        ];
        assert_eq!(parse_posteriors(&format_posteriors(&recs), p()).unwrap(), recs);
    }
}
