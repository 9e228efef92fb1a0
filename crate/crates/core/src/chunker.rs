//! Fixed-length, non-overlapping chunks of an encoded document.

use crate::alphabet::Base4Sequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkRecord {
    pub seq: Base4Sequence,
    pub doc_id: String,
    pub label: String,
    pub chunk_index: usize,
}

/// Cuts `doc` into `floor(len / size)` chunks of exactly `size` digits,
/// starting at offset 0. The shorter tail is dropped.
pub fn chunk(doc: &Base4Sequence, size: usize, label: &str) -> Result<Vec<ChunkRecord>> {
    if size == 0 {
        return Err(Error::Config("chunk size must be at least 1".into()));
    }
    Ok(doc
        .digits
        .chunks_exact(size)
        .enumerate()
        .map(|(i, digits)| ChunkRecord {
            seq: Base4Sequence {
                digits: digits.to_vec(),
                source_doc: doc.source_doc.clone(),
                offset: doc.offset + i * size,
            },
            doc_id: doc.source_doc.clone(),
            label: label.to_string(),
            chunk_index: i,
        })
        .collect())
}

/// The whole document as a single chunk, for corpora of short texts.
pub fn whole_document(doc: &Base4Sequence, k: usize, label: &str) -> Result<ChunkRecord> {
    if doc.len() < k {
        return Err(Error::SequenceTooShort { len: doc.len(), k });
    }
    Ok(ChunkRecord {
        seq: doc.clone(),
        doc_id: doc.source_doc.clone(),
        label: label.to_string(),
        chunk_index: 0,
    })
}

/// `chunk` for `size > 0`, `whole_document` for `size == 0`. Whole documents
/// too short for order `k` yield no chunks rather than an error.
pub fn split_document(
    doc: &Base4Sequence,
    size: usize,
    k: usize,
    label: &str,
) -> Result<Vec<ChunkRecord>> {
    if size == 0 {
        match whole_document(doc, k, label) {
            Ok(c) => Ok(vec![c]),
            Err(Error::SequenceTooShort { .. }) => Ok(Vec::new()),
            Err(e) => Err(e),
        }
    } else {
        chunk(doc, size, label)
    }
}
