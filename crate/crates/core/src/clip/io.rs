//! `.vclip` container and frame-strip export.
//!
//! Layout: `"VCLP"`, then little-endian u32 version, T, H, W, C, then
//! T·H·W·C payload bytes. The clip id is not stored; loaders take it from
//! the file stem.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::VideoClip;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VCLP";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

pub fn encode_clip(clip: &VideoClip) -> Vec<u8> {
    let (t, h, w, c) = clip.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + clip.data().len());
    out.extend_from_slice(MAGIC);
    for v in [VERSION, t as u32, h as u32, w as u32, c as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(clip.data());
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode_clip(id: impl Into<String>, bytes: &[u8]) -> Result<VideoClip> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        return Err(Error::Format(format!(
            "header needs {HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dims: Vec<usize> = (0..4).map(|i| read_u32(bytes, 8 + 4 * i) as usize).collect();
    let (t, h, w, c) = (dims[0], dims[1], dims[2], dims[3]);
    if t == 0 || h == 0 || w == 0 || c == 0 {
        return Err(Error::Validation(format!(
            "zero dimension in header: t={t} h={h} w={w} c={c}"
        )));
    }
    let expected = t
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::Validation("header dims overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    VideoClip::new(id, t, h, w, c, payload.to_vec())
}

pub fn load_clip(path: impl AsRef<Path>) -> Result<VideoClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_clip(id, &bytes)
}

pub fn save_clip(clip: &VideoClip, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_clip(clip))
}

/// Write via a temporary file in the destination directory, then rename,
/// so an interrupted write never leaves a partial file at `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Frames laid out left to right as binary PGM (C=1) or PPM (C=3).
pub fn encode_frame_strip(clip: &VideoClip) -> Vec<u8> {
    let (t, h, w, c) = clip.shape();
    let kind = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{kind}\n{} {h}\n255\n", t * w).into_bytes();
    let row = w * c;
    for y in 0..h {
        for f in 0..t {
            let frame = clip.frame(f);
            out.extend_from_slice(&frame[y * row..(y + 1) * row]);
        }
    }
    out
}

pub fn write_frame_strip(clip: &VideoClip, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_frame_strip(clip))
}
