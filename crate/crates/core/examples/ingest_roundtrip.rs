//! Writes an embedding pair, alignment and text posteriors to disk, reads
//! them back and checks the triple for consistency.

use punctfuse::ingest::{read_alignment, read_embeddings, read_posteriors, write_alignment, write_embeddings, write_posteriors};
use punctfuse::types::validate_pair_with;
use punctfuse::{AlignmentEntry, AlignmentTable, EmbeddingKind, EmbeddingMatrix, ModalityDims, PosteriorRecord, PunctClass};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dims = ModalityDims::MINI;
    let words = [("so", PunctClass::Comma), ("that", PunctClass::NoPunct), ("works", PunctClass::FullStop)];
    let entries: Vec<AlignmentEntry> = words
        .iter()
        .enumerate()
        .map(|(i, &(w, label))| AlignmentEntry {
            token_index: i,
            start_frame: 20 * i + 5,
            end_frame: 20 * i + 20,
            token_text: w.to_string(),
            label,
        })
        .collect();
    let align = AlignmentTable::new(entries)?;
    let text = EmbeddingMatrix::from_fn(EmbeddingKind::Text, dims.text, words.len(), |r, c| (r + c) as f32 * 0.1)?;
    let audio = EmbeddingMatrix::from_fn(EmbeddingKind::Audio, dims.audio, 70, |r, c| ((r * c) % 7) as f32)?;
    let posteriors: Vec<PosteriorRecord> = (0..words.len())
        .map(|i| PosteriorRecord::new(i, [0.1, 0.2, 0.1, 0.6]))
        .collect::<Result<_, _>>()?;

    let dir = std::env::temp_dir().join("punctfuse-ingest-example");
    std::fs::create_dir_all(&dir)?;
    write_embeddings(&text, dir.join("u.text.emb"))?;
    write_embeddings(&audio, dir.join("u.audio.emb"))?;
    write_alignment(&align, dir.join("u.align.tsv"))?;
    write_posteriors(&posteriors, dir.join("u.post.tsv"))?;

    let text2 = read_embeddings(dir.join("u.text.emb"))?;
    let audio2 = read_embeddings(dir.join("u.audio.emb"))?;
    let align2 = read_alignment(dir.join("u.align.tsv"))?;
    let post2 = read_posteriors(dir.join("u.post.tsv"))?;
    assert_eq!((&text2, &audio2, &align2, &post2), (&text, &audio, &align, &posteriors));

    println!("text {}x{}, audio {}x{}, {} tokens", text2.rows(), text2.cols(), audio2.rows(), audio2.cols(), align2.len());
    println!("consistency: {}", validate_pair_with(&text2, &audio2, &align2, dims));
    println!("with standard widths: {}", validate_pair_with(&text2, &audio2, &align2, ModalityDims::STANDARD));
    Ok(())
}
