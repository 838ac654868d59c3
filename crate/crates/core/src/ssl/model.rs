//! Average-pooled clip features and the linear softmax classifier.

use std::fs;
use std::path::Path;

use crate::clip::{write_atomic, SoftLabel, VideoClip};
use crate::error::{Error, Result};

/// Spatial grid each frame is pooled to.
pub const POOL: usize = 4;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VSSL";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_HEADER_LEN: usize = 16;

/// Feature length for clips of `t` frames and `c` channels.
pub fn feature_dim(t: usize, c: usize) -> usize {
    t * POOL * POOL * c
}

/// Average-pool every frame to a 4×4 grid, scale to [0, 1] and flatten in
/// (t, y, x, c) order. Cell `g` along a side of length `n` covers
/// `[g·n/4, (g+1)·n/4)`.
pub fn featurize(clip: &VideoClip) -> Result<Vec<f64>> {
    let (t, h, w, c) = clip.shape();
    if h < POOL || w < POOL {
        return Err(Error::Validation(format!(
            "frames must be at least {POOL}x{POOL} to pool, got {h}x{w}"
        )));
    }
    let dims = clip.dims();
    let mut out = vec![0.0; feature_dim(t, c)];
    let mut sums = vec![0u32; POOL * POOL * c];
    let row_cell: Vec<usize> = (0..h).map(|y| y * POOL / h).collect();
    let col_cell: Vec<usize> = (0..w).map(|x| x * POOL / w).collect();
    let mut counts = [0u32; POOL * POOL];
    for y in 0..h {
        for x in 0..w {
            counts[row_cell[y] * POOL + col_cell[x]] += 1;
        }
    }
    for (f, frame) in clip.frames().enumerate() {
        sums.iter_mut().for_each(|s| *s = 0);
        for y in 0..h {
            let gy = row_cell[y];
            for x in 0..w {
                let cell = gy * POOL + col_cell[x];
                let px = &frame[dims.index(y, x, 0)..dims.index(y, x, 0) + c];
                for (ch, &v) in px.iter().enumerate() {
                    sums[cell * c + ch] += v as u32;
                }
            }
        }
        let base = f * POOL * POOL * c;
        for cell in 0..POOL * POOL {
            let n = counts[cell] as f64 * 255.0;
            for ch in 0..c {
                out[base + cell * c + ch] = sums[cell * c + ch] as f64 / n;
            }
        }
    }
    Ok(out)
}

/// Centre crop to `(h, w)`; clips already that size are returned as is.
pub fn center_crop(clip: &VideoClip, h: usize, w: usize) -> Result<VideoClip> {
    let (t, ch, cw, c) = clip.shape();
    if (ch, cw) == (h, w) {
        return Ok(clip.clone());
    }
    if h > ch || w > cw {
        return Err(Error::Validation(format!("cannot crop {ch}x{cw} to {h}x{w}")));
    }
    let (oy, ox) = ((ch - h) / 2, (cw - w) / 2);
    let dims = clip.dims();
    let mut data = Vec::with_capacity(t * h * w * c);
    for frame in clip.frames() {
        for y in oy..oy + h {
            let start = dims.index(y, ox, 0);
            data.extend_from_slice(&frame[start..start + w * c]);
        }
    }
    VideoClip::new(clip.id(), t, h, w, c, data)
}

/// `softmax(W·x + b)` over K classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    k: usize,
    d: usize,
    /// Row-major K×D.
    weights: Vec<f64>,
    bias: Vec<f64>,
    /// Frame size seen in training; larger clips are centre-cropped to it.
    frame_size: Option<(usize, usize)>,
}

impl Classifier {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            k,
            d,
            weights: vec![0.0; k * d],
            bias: vec![0.0; k],
            frame_size: None,
        }
    }

    pub fn from_parts(k: usize, d: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if k < 2 || d == 0 || weights.len() != k * d || bias.len() != k {
            return Err(Error::Validation(format!(
                "classifier parts do not match K={k}, D={d}"
            )));
        }
        Ok(Self {
            k,
            d,
            weights,
            bias,
            frame_size: None,
        })
    }

    pub fn with_frame_size(mut self, h: usize, w: usize) -> Self {
        self.frame_size = Some((h, w));
        self
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn feature_len(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn frame_size(&self) -> Option<(usize, usize)> {
        self.frame_size
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.d);
        self.weights
            .chunks_exact(self.d)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Softmax probabilities for a feature vector.
    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Features for `clip`, centre-cropped to the training frame size.
    pub fn features(&self, clip: &VideoClip) -> Result<Vec<f64>> {
        let clip = match self.frame_size {
            Some((h, w)) if (clip.h(), clip.w()) != (h, w) => center_crop(clip, h, w)?,
            _ => clip.clone(),
        };
        let x = featurize(&clip)?;
        if x.len() != self.d {
            return Err(Error::Validation(format!(
                "clip '{}' gives {} features, the model expects {}",
                clip.id(),
                x.len(),
                self.d
            )));
        }
        Ok(x)
    }

    pub fn forward(&self, clip: &VideoClip) -> Result<SoftLabel> {
        if !self.is_finite() {
            return Err(Error::Numeric("classifier has non-finite parameters".into()));
        }
        let p = self.probs(&self.features(clip)?);
        SoftLabel::new(p)
    }

    /// Little-endian dump: magic, version, K, D, then W row-major and b.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CHECKPOINT_HEADER_LEN + 8 * (self.k * self.d + self.k));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for v in [CHECKPOINT_VERSION, self.k as u32, self.d as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.weights.iter().chain(&self.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CHECKPOINT_HEADER_LEN || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a classifier checkpoint".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        if word(1) != CHECKPOINT_VERSION as usize {
            return Err(Error::Format(format!("unsupported checkpoint version {}", word(1))));
        }
        let (k, d) = (word(2), word(3));
        let n = k * d + k;
        let body = &bytes[CHECKPOINT_HEADER_LEN..];
        if body.len() != 8 * n {
            return Err(Error::Truncated {
                expected: 8 * n,
                found: body.len(),
            });
        }
        let vals: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_parts(k, d, vals[..k * d].to_vec(), vals[k * d..].to_vec())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn featurize_constant_clips() {
        let z = VideoClip::filled("z", 2, 8, 8, 3, 0).unwrap();
        assert_eq!(featurize(&z).unwrap(), vec![0.0; feature_dim(2, 3)]);
        let o = VideoClip::filled("o", 2, 8, 8, 3, 255).unwrap();
        assert_eq!(featurize(&o).unwrap(), vec![1.0; feature_dim(2, 3)]);
    }

    #[test]
    fn featurize_pools_blocks() {
        // 8×8 frame: each pooled cell is a 2×2 block.
        let mut data = vec![0u8; 64];
        data[0] = 255;
        data[1] = 255;
        data[8] = 255;
        data[9] = 255;
        let clip = VideoClip::new("b", 1, 8, 8, 1, data).unwrap();
        let f = featurize(&clip).unwrap();
        assert_eq!(f[0], 1.0);
        assert_eq!(f.iter().filter(|&&v| v != 0.0).count(), 1);

        // a 4×4 quadrant covers a 2×2 group of cells
        let mut data = vec![0u8; 64];
        for y in 0..4 {
            for x in 4..8 {
                data[y * 8 + x] = 255;
            }
        }
        let f = featurize(&VideoClip::new("q", 1, 8, 8, 1, data).unwrap()).unwrap();
        let ones: Vec<usize> = (0..16).filter(|&i| f[i] == 1.0).collect();
        assert_eq!(ones, vec![2, 3, 6, 7]);
        assert_eq!(f.iter().filter(|&&v| v != 0.0).count(), 4);
    }

    #[test]
    fn featurize_rejects_tiny_frames() {
        assert!(featurize(&VideoClip::filled("t", 1, 3, 8, 1, 0).unwrap()).is_err());
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = Classifier::zeros(4, feature_dim(1, 1));
        let p = m.forward(&VideoClip::filled("c", 1, 4, 4, 1, 9).unwrap()).unwrap();
        assert!(p.probs().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn dominant_bias_gives_near_one_hot() {
        let mut m = Classifier::zeros(3, feature_dim(1, 1));
        m.bias_mut().copy_from_slice(&[10.0, -10.0, -10.0]);
        let p = m.forward(&VideoClip::filled("c", 1, 4, 4, 1, 9).unwrap()).unwrap();
        assert!(p.probs()[0] > 1.0 - 1e-8);
        assert_eq!(p.argmax(), 0);
    }

    #[test]
    fn non_finite_parameters_are_numeric_errors() {
        let mut m = Classifier::zeros(2, feature_dim(1, 1));
        m.weights_mut()[0] = f64::NAN;
        assert!(matches!(
            m.forward(&VideoClip::filled("c", 1, 4, 4, 1, 9).unwrap()),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn dim_mismatch_is_validation() {
        let m = Classifier::zeros(2, feature_dim(2, 3));
        assert!(matches!(
            m.forward(&VideoClip::filled("c", 1, 4, 4, 3, 0).unwrap()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn checkpoint_layout() {
        let m = Classifier::from_parts(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![-1.0, 0.5]).unwrap();
        let b = m.to_bytes();
        assert_eq!(b.len(), 16 + 8 * 8);
        assert_eq!(&b[..4], b"VSSL");
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..16], &3u32.to_le_bytes());
        assert_eq!(&b[16..24], &1.0f64.to_le_bytes());
        assert_eq!(Classifier::from_bytes(&b).unwrap(), m);
        assert!(Classifier::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(Classifier::from_bytes(b"nope").is_err());
    }

    #[test]
    fn center_crop_takes_middle() {
        let clip = VideoClip::new("g", 1, 4, 4, 1, (0..16).collect()).unwrap();
        assert_eq!(center_crop(&clip, 2, 2).unwrap().data(), &[5, 6, 9, 10]);
        assert!(center_crop(&clip, 5, 2).is_err());
    }
}
