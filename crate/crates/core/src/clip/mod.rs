//! Clip, mask and label data model.

mod boxes;
mod io;
mod label;

pub use boxes::{box_lines, load_box_file, parse_box_lines, rasterize_masks, BoxTrack, DetBox};
pub use io::{
    decode_clip, encode_clip, load_clip, save_clip, write_atomic, write_frame_strip,
    encode_frame_strip, HEADER_LEN, MAGIC, VERSION,
};
pub use label::{load_label_file, parse_label_lines, SoftLabel};

use crate::error::{Error, Result};

/// Spatial shape of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameDims {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl FrameDims {
    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, ch: usize) -> usize {
        (y * self.w + x) * self.c + ch
    }
}

/// A T×H×W×C volume of 8-bit pixels, frame-major, row-major,
/// channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoClip {
    id: String,
    t: usize,
    dims: FrameDims,
    data: Vec<u8>,
}

impl VideoClip {
    pub fn new(
        id: impl Into<String>,
        t: usize,
        h: usize,
        w: usize,
        c: usize,
        data: Vec<u8>,
    ) -> Result<Self> {
        if t == 0 || h == 0 || w == 0 {
            return Err(Error::Validation(format!(
                "clip dims must be non-zero, got t={t} h={h} w={w}"
            )));
        }
        if c != 1 && c != 3 {
            return Err(Error::Validation(format!("channels must be 1 or 3, got {c}")));
        }
        let expected = t * h * w * c;
        if data.len() != expected {
            return Err(Error::Validation(format!(
                "payload has {} bytes, dims need {expected}",
                data.len()
            )));
        }
        Ok(Self {
            id: id.into(),
            t,
            dims: FrameDims { h, w, c },
            data,
        })
    }

    pub fn filled(
        id: impl Into<String>,
        t: usize,
        h: usize,
        w: usize,
        c: usize,
        value: u8,
    ) -> Result<Self> {
        Self::new(id, t, h, w, c, vec![value; t * h * w * c])
    }

    /// Build a clip from equally-shaped frames.
    pub fn from_frames(id: impl Into<String>, dims: FrameDims, frames: Vec<Vec<u8>>) -> Result<Self> {
        let t = frames.len();
        let mut data = Vec::with_capacity(t * dims.len());
        for (i, f) in frames.into_iter().enumerate() {
            if f.len() != dims.len() {
                return Err(Error::Validation(format!(
                    "frame {i} has {} bytes, expected {}",
                    f.len(),
                    dims.len()
                )));
            }
            data.extend_from_slice(&f);
        }
        Self::new(id, t, dims.h, dims.w, dims.c, data)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn h(&self) -> usize {
        self.dims.h
    }

    pub fn w(&self) -> usize {
        self.dims.w
    }

    pub fn c(&self) -> usize {
        self.dims.c
    }

    pub fn dims(&self) -> FrameDims {
        self.dims
    }

    /// (t, h, w, c)
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.t, self.dims.h, self.dims.w, self.dims.c)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn frame(&self, f: usize) -> &[u8] {
        let n = self.dims.len();
        &self.data[f * n..(f + 1) * n]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[u8]> {
        self.data.chunks_exact(self.dims.len())
    }

    #[inline]
    pub fn get(&self, f: usize, y: usize, x: usize, ch: usize) -> u8 {
        self.data[f * self.dims.len() + self.dims.index(y, x, ch)]
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Same clip shape, new pixel data.
    pub(crate) fn with_data(&self, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            id: self.id.clone(),
            t: self.t,
            dims: self.dims,
            data,
        }
    }

    /// Assemble a clip of the same shape whose frame `i` is input frame
    /// `sources[i]`.
    pub(crate) fn gather_frames(&self, sources: &[usize]) -> Self {
        let n = self.dims.len();
        let mut data = Vec::with_capacity(sources.len() * n);
        for &s in sources {
            data.extend_from_slice(self.frame(s));
        }
        Self {
            id: self.id.clone(),
            t: sources.len(),
            dims: self.dims,
            data,
        }
    }
}

/// Binary actor mask over a clip's T×H×W voxels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HumanMask {
    t: usize,
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl HumanMask {
    pub fn zeros(t: usize, h: usize, w: usize) -> Self {
        Self {
            t,
            h,
            w,
            data: vec![0; t * h * w],
        }
    }

    pub fn ones(t: usize, h: usize, w: usize) -> Self {
        Self {
            t,
            h,
            w,
            data: vec![1; t * h * w],
        }
    }

    /// Values must be 0 or 1.
    pub fn from_vec(t: usize, h: usize, w: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != t * h * w {
            return Err(Error::Validation(format!(
                "mask has {} voxels, dims need {}",
                data.len(),
                t * h * w
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::Validation(format!("mask value {v} is not binary")));
        }
        Ok(Self { t, h, w, data })
    }

    /// Read a single-channel clip as a mask; non-zero pixels are actor.
    pub fn from_clip(clip: &VideoClip) -> Result<Self> {
        if clip.c() != 1 {
            return Err(Error::Validation("mask clips must have one channel".into()));
        }
        let data = clip.data().iter().map(|&v| u8::from(v != 0)).collect();
        Ok(Self {
            t: clip.t(),
            h: clip.h(),
            w: clip.w(),
            data,
        })
    }

    /// Single-channel clip with actor voxels at 255.
    pub fn to_clip(&self, id: impl Into<String>) -> VideoClip {
        let data = self.data.iter().map(|&v| v * 255).collect();
        VideoClip::new(id, self.t, self.h, self.w, 1, data).expect("mask dims are non-zero")
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.t, self.h, self.w)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, f: usize, y: usize, x: usize) -> u8 {
        self.data[(f * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, f: usize, y: usize, x: usize, v: bool) {
        self.data[(f * self.h + y) * self.w + x] = u8::from(v);
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// True when the mask covers exactly the clip's (t, h, w).
    pub fn matches(&self, clip: &VideoClip) -> bool {
        self.t == clip.t() && self.h == clip.h() && self.w == clip.w()
    }
}

/// Fraction of voxels marked as actor.
pub fn foreground_ratio(mask: &HumanMask) -> f64 {
    if mask.data.is_empty() {
        return 0.0;
    }
    mask.count() as f64 / mask.data.len() as f64
}

/// Round half to even, then clamp to the pixel range.
#[inline]
pub fn to_pixel(v: f64) -> u8 {
    let r = v.round_ties_even();
    if r <= 0.0 {
        0
    } else if r >= 255.0 {
        255
    } else {
        r as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_dims() {
        assert!(matches!(
            VideoClip::new("a", 0, 2, 2, 1, vec![]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            VideoClip::new("a", 1, 2, 2, 2, vec![0; 8]),
            Err(Error::Validation(_))
        ));
        assert!(VideoClip::new("a", 1, 2, 2, 1, vec![0; 3]).is_err());
    }

    #[test]
    fn ratio_endpoints_and_count() {
        assert_eq!(foreground_ratio(&HumanMask::ones(2, 3, 4)), 1.0);
        assert_eq!(foreground_ratio(&HumanMask::zeros(2, 3, 4)), 0.0);
        let m = HumanMask::from_vec(2, 2, 2, vec![1, 0, 1, 0, 1, 1, 0, 0]).unwrap();
        assert_eq!(foreground_ratio(&m), 0.5);
    }

    #[test]
    fn to_pixel_rounds_half_to_even_and_clamps() {
        assert_eq!(to_pixel(2.5), 2);
        assert_eq!(to_pixel(3.5), 4);
        assert_eq!(to_pixel(-4.0), 0);
        assert_eq!(to_pixel(300.2), 255);
        assert_eq!(to_pixel(254.5), 254);
    }

    #[test]
    fn mask_clip_round_trip() {
        let m = HumanMask::from_vec(1, 2, 2, vec![1, 0, 0, 1]).unwrap();
        let c = m.to_clip("m");
        assert_eq!(c.data(), &[255, 0, 0, 255]);
        assert_eq!(HumanMask::from_clip(&c).unwrap(), m);
        assert!(HumanMask::from_vec(1, 1, 2, vec![0, 2]).is_err());
    }
}
