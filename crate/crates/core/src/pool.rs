//! Temporal pooling of frame-level audio-encoder embeddings.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"EMBD";
pub const DEFAULT_FRAME_LEN_S: f64 = 0.1;

/// Guards the window index against `i / (rate * len)` landing a hair below
/// an integer.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("embedding matrix has no rows")]
    EmptyInput,
    #[error("window of {frame_len_s} s at {frame_rate_hz} Hz holds less than one frame")]
    WindowTooShort { frame_rate_hz: f64, frame_len_s: f64 },
    #[error("invalid embedding matrix: {0}")]
    Invalid(String),
    #[error("not an EMBD file")]
    BadMagic,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major `frames x dims` matrix sampled at `frame_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f32>,
    frames: usize,
    dims: usize,
    pub frame_rate_hz: f64,
}

impl EmbeddingMatrix {
    pub fn new(data: Vec<f32>, frames: usize, dims: usize, frame_rate_hz: f64) -> Result<Self, PoolError> {
        if data.len() != frames * dims {
            return Err(PoolError::Invalid(format!(
                "{} values for {frames} x {dims}",
                data.len()
            )));
        }
        if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
            return Err(PoolError::Invalid(format!("frame rate {frame_rate_hz}")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(PoolError::Invalid(format!(
                "non-finite value at row {}, col {}",
                pos / dims.max(1),
                pos % dims.max(1)
            )));
        }
        Ok(Self {
            data,
            frames,
            dims,
            frame_rate_hz,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>], frame_rate_hz: f64) -> Result<Self, PoolError> {
        let dims = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dims) {
            return Err(PoolError::Invalid("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(data, rows.len(), dims, frame_rate_hz)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn value_count(&self) -> usize {
        self.data.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.frame_rate_hz
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), PoolError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.frames as u32).to_le_bytes())?;
        w.write_all(&(self.dims as u32).to_le_bytes())?;
        w.write_all(&(self.frame_rate_hz as f32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, PoolError> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[..4] != MAGIC {
            return Err(PoolError::BadMagic);
        }
        let frames = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let dims = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let rate = f32::from_le_bytes(header[12..16].try_into().unwrap()) as f64;
        let mut bytes = vec![0u8; frames * dims * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(data, frames, dims, rate)
    }

    pub fn save(&self, path: &Path) -> Result<(), PoolError> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, PoolError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

/// Output window holding input row `i`.
pub fn window_index(i: usize, frame_rate_hz: f64, frame_len_s: f64) -> usize {
    (i as f64 / (frame_rate_hz * frame_len_s) + BOUNDARY_EPS).floor() as usize
}

/// Means the rows falling in each `[k*len, (k+1)*len)` interval of time.
/// A trailing partial window is kept.
pub fn pool_frames(emb: &EmbeddingMatrix, frame_len_s: f64) -> Result<EmbeddingMatrix, PoolError> {
    if emb.frames == 0 {
        return Err(PoolError::EmptyInput);
    }
    if !(frame_len_s > 0.0) || emb.frame_rate_hz * frame_len_s < 1.0 {
        return Err(PoolError::WindowTooShort {
            frame_rate_hz: emb.frame_rate_hz,
            frame_len_s,
        });
    }
    let dims = emb.dims;
    let n_out = window_index(emb.frames - 1, emb.frame_rate_hz, frame_len_s) + 1;
    let mut out = Vec::with_capacity(n_out * dims);
    let mut acc = vec![0.0f64; dims];
    let mut i = 0;
    for k in 0..n_out {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let mut count = 0usize;
        while i < emb.frames && window_index(i, emb.frame_rate_hz, frame_len_s) == k {
            for (a, v) in acc.iter_mut().zip(emb.row(i)) {
                *a += *v as f64;
            }
            count += 1;
            i += 1;
        }
        let inv = 1.0 / count.max(1) as f64;
        out.extend(acc.iter().map(|a| (a * inv) as f32));
    }
    EmbeddingMatrix::new(out, n_out, dims, 1.0 / frame_len_s)
}

/// Column-wise mean over all frames.
pub fn pool_global_mean(emb: &EmbeddingMatrix) -> Result<Vec<f32>, PoolError> {
    if emb.frames == 0 {
        return Err(PoolError::EmptyInput);
    }
    let mut acc = vec![0.0f64; emb.dims];
    for i in 0..emb.frames {
        for (a, v) in acc.iter_mut().zip(emb.row(i)) {
            *a += *v as f64;
        }
    }
    let n = emb.frames as f64;
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}
