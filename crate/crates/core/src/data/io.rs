//! Embedding and annotation files.
//!
//! Embeddings: `"DCAT"`, u32 version (1), u32 d, u64 n_frames, then
//! `n_frames * d` little-endian f32 values, row-major.
//!
//! Annotations: UTF-8 lines `frame_index,phase_id`, no header, frame indices
//! contiguous from 0.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{DacatError, Result};
use crate::types::{FeatureVector, PhaseTimeline};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"DCAT";
pub const EMBEDDING_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

/// Frame embeddings of one video, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(DacatError::DimensionMismatch {
                expected: dim,
                found: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn frames(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_vectors(&self) -> Vec<FeatureVector<f32>> {
        self.data
            .chunks_exact(self.dim)
            .map(|r| FeatureVector::new(r.to_vec()).expect("values checked on load"))
            .collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

pub fn write_embeddings<W: Write>(mut w: W, emb: &EmbeddingMatrix) -> Result<()> {
    w.write_all(&EMBEDDING_MAGIC)?;
    w.write_all(&EMBEDDING_VERSION.to_le_bytes())?;
    w.write_all(&(emb.dim as u32).to_le_bytes())?;
    w.write_all(&(emb.frames() as u64).to_le_bytes())?;
    for v in &emb.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingMatrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 4 {
        return Err(DacatError::Truncated("embedding header".into()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != EMBEDDING_MAGIC {
        return Err(DacatError::BadMagic {
            expected: EMBEDDING_MAGIC,
            found: magic,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(DacatError::Truncated("embedding header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != EMBEDDING_VERSION {
        return Err(DacatError::VersionMismatch {
            found: version,
            expected: EMBEDDING_VERSION,
        });
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let frames = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    if dim == 0 {
        return Err(DacatError::InvalidConfig("embedding dimension is zero".into()));
    }
    let payload = &bytes[HEADER_LEN..];
    let want = frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| DacatError::Truncated("embedding size overflows".into()))?;
    if payload.len() < want {
        return Err(DacatError::Truncated(format!(
            "expected {want} payload bytes, found {}",
            payload.len()
        )));
    }
    let data: Vec<f32> = payload[..want]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(DacatError::NonFiniteValue { index });
    }
    EmbeddingMatrix::new(dim, data)
}

pub fn save_embeddings(path: impl AsRef<Path>, emb: &EmbeddingMatrix) -> Result<()> {
    write_embeddings(BufWriter::new(File::create(path)?), emb)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    read_embeddings(BufReader::new(File::open(path)?))
}

/// Parses annotation text. `num_phases` bounds the phase ids.
pub fn parse_annotations(text: &str, num_phases: usize) -> Result<PhaseTimeline> {
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let line_no = lineno + 1;
        let parse_err = |message: String| DacatError::Parse {
            line: line_no,
            message,
        };
        let (idx, phase) = line
            .split_once(',')
            .ok_or_else(|| parse_err(format!("expected `frame_index,phase_id`, got {line:?}")))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("bad frame index: {e}")))?;
        let phase: usize = phase
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("bad phase id: {e}")))?;
        if idx != labels.len() {
            return Err(DacatError::NonContiguous {
                line: line_no,
                expected: labels.len(),
                found: idx,
            });
        }
        if phase >= num_phases {
            return Err(DacatError::LabelOutOfRange {
                label: phase,
                num_phases,
            });
        }
        labels.push(phase);
    }
    if labels.is_empty() {
        return Err(DacatError::EmptyInput("annotation file"));
    }
    PhaseTimeline::new(labels, num_phases)
}

pub fn format_annotations(timeline: &PhaseTimeline) -> String {
    let mut out = String::with_capacity(timeline.len() * 6);
    for (i, label) in timeline.labels().iter().enumerate() {
        out.push_str(&format!("{i},{label}\n"));
    }
    out
}

pub fn load_annotations(path: impl AsRef<Path>, num_phases: usize) -> Result<PhaseTimeline> {
    let text = std::fs::read_to_string(path)?;
    parse_annotations(&text, num_phases)
}

pub fn save_annotations(path: impl AsRef<Path>, timeline: &PhaseTimeline) -> Result<()> {
    std::fs::write(path, format_annotations(timeline))?;
    Ok(())
}
