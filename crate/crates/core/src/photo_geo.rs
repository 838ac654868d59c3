//! Photometric and geometric frame transforms.
//!
//! Magnitudes live in [0, 1] and map onto physical parameters:
//!
//! | op              | parameter                      | range            |
//! |-----------------|--------------------------------|------------------|
//! | Identity        | none                           |                  |
//! | AutoContrast    | none                           |                  |
//! | Equalize        | none                           |                  |
//! | Rotate          | angle, degrees, signed         | ±30·m            |
//! | Solarize        | threshold                      | 256·(1 − m)      |
//! | Posterize       | kept bits                      | 8 − round(4·m)   |
//! | ColorSaturation | blend factor, signed           | 1 ± m            |
//! | Contrast        | blend factor, signed           | 1 ± m            |
//! | Brightness      | blend factor, signed           | 1 ± m            |
//! | Sharpness       | blend factor, signed           | 1 ± m            |
//! | ShearX / ShearY | shear coefficient, signed      | ±0.3·m           |
//! | TranslateX / Y  | offset as fraction of the dim  | ±0.3·m           |
//!
//! Geometric ops resample nearest-neighbour about the frame centre and fill
//! uncovered pixels with 128.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clip::{to_pixel, FrameDims, VideoClip};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const FILL: u8 = 128;

pub const MAX_ROTATE_DEG: f64 = 30.0;
pub const MAX_SHEAR: f64 = 0.3;
pub const MAX_TRANSLATE: f64 = 0.3;
pub const MAX_POSTERIZE_DROP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    Identity,
    AutoContrast,
    Equalize,
    Rotate,
    Solarize,
    Posterize,
    ColorSaturation,
    Contrast,
    Brightness,
    Sharpness,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
}

impl OpKind {
    pub const ALL: [OpKind; 14] = [
        OpKind::Identity,
        OpKind::AutoContrast,
        OpKind::Equalize,
        OpKind::Rotate,
        OpKind::Solarize,
        OpKind::Posterize,
        OpKind::ColorSaturation,
        OpKind::Contrast,
        OpKind::Brightness,
        OpKind::Sharpness,
        OpKind::ShearX,
        OpKind::ShearY,
        OpKind::TranslateX,
        OpKind::TranslateY,
    ];

    /// Ops whose parameter takes a random sign at resolve time.
    pub fn is_signed(self) -> bool {
        use OpKind::*;
        matches!(
            self,
            Rotate | ColorSaturation | Contrast | Brightness | Sharpness | ShearX | ShearY | TranslateX | TranslateY
        )
    }

    /// Ops that move pixels.
    pub fn is_geometric(self) -> bool {
        use OpKind::*;
        matches!(self, Rotate | ShearX | ShearY | TranslateX | TranslateY)
    }

    pub fn name(self) -> &'static str {
        use OpKind::*;
        match self {
            Identity => "Identity",
            AutoContrast => "AutoContrast",
            Equalize => "Equalize",
            Rotate => "Rotate",
            Solarize => "Solarize",
            Posterize => "Posterize",
            ColorSaturation => "ColorSaturation",
            Contrast => "Contrast",
            Brightness => "Brightness",
            Sharpness => "Sharpness",
            ShearX => "ShearX",
            ShearY => "ShearY",
            TranslateX => "TranslateX",
            TranslateY => "TranslateY",
        }
    }

    /// Physical range `(lo, hi)` of the resolved parameter.
    pub fn param_range(self) -> (f64, f64) {
        use OpKind::*;
        match self {
            Identity | AutoContrast | Equalize => (0.0, 0.0),
            Rotate => (-MAX_ROTATE_DEG, MAX_ROTATE_DEG),
            Solarize => (0.0, 256.0),
            Posterize => (8.0 - MAX_POSTERIZE_DROP, 8.0),
            ColorSaturation | Contrast | Brightness | Sharpness => (0.0, 2.0),
            ShearX | ShearY => (-MAX_SHEAR, MAX_SHEAR),
            TranslateX | TranslateY => (-MAX_TRANSLATE, MAX_TRANSLATE),
        }
    }

    /// Parameter for magnitude `m` and sign `s` (ignored for unsigned ops).
    fn param(self, m: f64, s: f64) -> f64 {
        use OpKind::*;
        match self {
            Identity | AutoContrast | Equalize => 0.0,
            Rotate => s * MAX_ROTATE_DEG * m,
            Solarize => 256.0 * (1.0 - m),
            Posterize => 8.0 - (MAX_POSTERIZE_DROP * m).round(),
            ColorSaturation | Contrast | Brightness | Sharpness => 1.0 + s * m,
            ShearX | ShearY => s * MAX_SHEAR * m,
            TranslateX | TranslateY => s * MAX_TRANSLATE * m,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        OpKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == key)
            .or(match key.as_str() {
                "color" => Some(OpKind::ColorSaturation),
                _ => None,
            })
            .ok_or_else(|| Error::Config(format!("unknown photometric/geometric op '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotoGeoOp {
    pub kind: OpKind,
    pub magnitude: f64,
}

impl PhotoGeoOp {
    pub fn new(kind: OpKind, magnitude: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&magnitude) {
            return Err(Error::Validation(format!("magnitude {magnitude} outside [0, 1]")));
        }
        Ok(Self { kind, magnitude })
    }

    pub fn identity() -> Self {
        Self {
            kind: OpKind::Identity,
            magnitude: 0.0,
        }
    }
}

/// An op with its randomness frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedOp {
    pub op: PhotoGeoOp,
    /// ±1 for signed ops, +1 otherwise.
    pub sign: f64,
    pub param: f64,
}

impl ResolvedOp {
    pub fn identity() -> Self {
        Self {
            op: PhotoGeoOp::identity(),
            sign: 1.0,
            param: 0.0,
        }
    }

    /// Freeze an op at an explicit physical parameter.
    pub fn with_param(kind: OpKind, param: f64) -> Result<Self> {
        let (lo, hi) = kind.param_range();
        if !(lo..=hi).contains(&param) {
            return Err(Error::Validation(format!(
                "{kind} parameter {param} outside [{lo}, {hi}]"
            )));
        }
        let (magnitude, sign) = match kind {
            OpKind::Identity | OpKind::AutoContrast | OpKind::Equalize => (0.0, 1.0),
            OpKind::Rotate => (param.abs() / MAX_ROTATE_DEG, sign_of(param)),
            OpKind::Solarize => (1.0 - param / 256.0, 1.0),
            OpKind::Posterize => ((8.0 - param) / MAX_POSTERIZE_DROP, 1.0),
            OpKind::ColorSaturation | OpKind::Contrast | OpKind::Brightness | OpKind::Sharpness => {
                ((param - 1.0).abs(), sign_of(param - 1.0))
            }
            OpKind::ShearX | OpKind::ShearY => (param.abs() / MAX_SHEAR, sign_of(param)),
            OpKind::TranslateX | OpKind::TranslateY => (param.abs() / MAX_TRANSLATE, sign_of(param)),
        };
        Ok(Self {
            op: PhotoGeoOp { kind, magnitude },
            sign,
            param,
        })
    }
}

fn sign_of(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Draw the sign of a signed op; unsigned ops consume no randomness.
pub fn resolve(op: PhotoGeoOp, rng: &mut SeededRng) -> ResolvedOp {
    let sign = if op.kind.is_signed() { rng.sign() } else { 1.0 };
    ResolvedOp {
        op,
        sign,
        param: op.kind.param(op.magnitude, sign),
    }
}

/// Two independent uniform draws from `pool`, each with a uniform magnitude.
pub fn sample_two_ops(pool: &[OpKind], rng: &mut SeededRng) -> Result<(PhotoGeoOp, PhotoGeoOp)> {
    if pool.is_empty() {
        return Err(Error::Config("photometric/geometric pool is empty".into()));
    }
    let mut draw = || PhotoGeoOp {
        kind: pool[rng.below(pool.len())],
        magnitude: rng.uniform(),
    };
    let first = draw();
    let second = draw();
    Ok((first, second))
}

pub fn apply_frame(frame: &[u8], dims: FrameDims, rop: &ResolvedOp) -> Vec<u8> {
    debug_assert_eq!(frame.len(), dims.len());
    let p = rop.param;
    match rop.op.kind {
        OpKind::Identity => frame.to_vec(),
        OpKind::Brightness => frame.iter().map(|&v| to_pixel(p * v as f64)).collect(),
        OpKind::Contrast => {
            let mean = mean_luma(frame, dims);
            frame
                .iter()
                .map(|&v| to_pixel(mean + p * (v as f64 - mean)))
                .collect()
        }
        OpKind::ColorSaturation => color(frame, dims, p),
        OpKind::Sharpness => sharpness(frame, dims, p),
        OpKind::Solarize => frame
            .iter()
            .map(|&v| if v as f64 >= p { 255 - v } else { v })
            .collect(),
        OpKind::Posterize => {
            let keep = p as u32;
            let m = (0xFFu32 << (8 - keep)) as u8;
            frame.iter().map(|&v| v & m).collect()
        }
        OpKind::AutoContrast => per_channel_lut(frame, dims, autocontrast_lut),
        OpKind::Equalize => per_channel_lut(frame, dims, equalize_lut),
        OpKind::Rotate => {
            let (s, c) = p.to_radians().sin_cos();
            warp(frame, dims, |u, v| (c * u + s * v, -s * u + c * v))
        }
        OpKind::ShearX => warp(frame, dims, |u, v| (u + p * v, v)),
        OpKind::ShearY => warp(frame, dims, |u, v| (u, v + p * u)),
        OpKind::TranslateX => {
            let d = p * dims.w as f64;
            warp(frame, dims, |u, v| (u - d, v))
        }
        OpKind::TranslateY => {
            let d = p * dims.h as f64;
            warp(frame, dims, |u, v| (u, v - d))
        }
    }
}

/// Same resolved op on every frame.
pub fn apply_clip_coherent(clip: &VideoClip, rop: &ResolvedOp) -> VideoClip {
    if rop.op.kind == OpKind::Identity {
        return clip.clone();
    }
    let dims = clip.dims();
    let mut data = Vec::with_capacity(clip.data().len());
    for frame in clip.frames() {
        data.extend(apply_frame(frame, dims, rop));
    }
    clip.with_data(data)
}

/// A fresh resolution of `op` for each frame.
pub fn apply_clip_per_frame(clip: &VideoClip, op: PhotoGeoOp, rng: &mut SeededRng) -> VideoClip {
    let dims = clip.dims();
    let mut data = Vec::with_capacity(clip.data().len());
    for frame in clip.frames() {
        let rop = resolve(op, rng);
        data.extend(apply_frame(frame, dims, &rop));
    }
    clip.with_data(data)
}

fn luma(px: &[u8]) -> f64 {
    if px.len() == 3 {
        0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64
    } else {
        px[0] as f64
    }
}

fn mean_luma(frame: &[u8], dims: FrameDims) -> f64 {
    let n = dims.h * dims.w;
    frame.chunks_exact(dims.c).map(luma).sum::<f64>() / n as f64
}

fn color(frame: &[u8], dims: FrameDims, factor: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.len());
    for px in frame.chunks_exact(dims.c) {
        let g = luma(px);
        out.extend(px.iter().map(|&v| to_pixel(g + factor * (v as f64 - g))));
    }
    out
}

/// Blend with a 3×3 smoothing of the frame; border pixels keep their value
/// in the smoothed image.
fn sharpness(frame: &[u8], dims: FrameDims, factor: f64) -> Vec<u8> {
    let FrameDims { h, w, c } = dims;
    let mut out = frame.to_vec();
    if h < 3 || w < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            for ch in 0..c {
                let mut acc = 0.0;
                for dy in 0..3 {
                    for dx in 0..3 {
                        let wgt = if dy == 1 && dx == 1 { 5.0 } else { 1.0 };
                        acc += wgt * frame[dims.index(y + dy - 1, x + dx - 1, ch)] as f64;
                    }
                }
                let blurred = acc / 13.0;
                let v = frame[dims.index(y, x, ch)] as f64;
                out[dims.index(y, x, ch)] = to_pixel(blurred + factor * (v - blurred));
            }
        }
    }
    out
}

fn per_channel_lut(frame: &[u8], dims: FrameDims, make: fn(&[u32; 256]) -> [u8; 256]) -> Vec<u8> {
    let c = dims.c;
    let mut out = frame.to_vec();
    for ch in 0..c {
        let mut hist = [0u32; 256];
        for px in frame.chunks_exact(c) {
            hist[px[ch] as usize] += 1;
        }
        let lut = make(&hist);
        for (o, px) in out.chunks_exact_mut(c).zip(frame.chunks_exact(c)) {
            o[ch] = lut[px[ch] as usize];
        }
    }
    out
}

fn identity_lut() -> [u8; 256] {
    let mut lut = [0u8; 256];
    for (i, v) in lut.iter_mut().enumerate() {
        *v = i as u8;
    }
    lut
}

fn autocontrast_lut(hist: &[u32; 256]) -> [u8; 256] {
    let lo = hist.iter().position(|&n| n > 0).unwrap_or(0);
    let hi = hist.iter().rposition(|&n| n > 0).unwrap_or(255);
    if hi <= lo {
        return identity_lut();
    }
    let mut lut = [0u8; 256];
    for (i, v) in lut.iter_mut().enumerate() {
        *v = to_pixel((i as f64 - lo as f64) * 255.0 / (hi - lo) as f64);
    }
    lut
}

/// Cumulative-histogram equalization in the integer form image libraries use.
fn equalize_lut(hist: &[u32; 256]) -> [u8; 256] {
    let total: u32 = hist.iter().sum();
    let last = hist.iter().rposition(|&n| n > 0).map(|i| hist[i]).unwrap_or(0);
    let step = (total - last) / 255;
    if step == 0 {
        return identity_lut();
    }
    let mut lut = [0u8; 256];
    let mut n = step / 2;
    for (i, v) in lut.iter_mut().enumerate() {
        *v = (n / step).min(255) as u8;
        n += hist[i];
    }
    lut
}

/// Inverse-map every output pixel centre through `src` (centred coordinates)
/// and copy the nearest source pixel.
fn warp(frame: &[u8], dims: FrameDims, src: impl Fn(f64, f64) -> (f64, f64)) -> Vec<u8> {
    let FrameDims { h, w, c } = dims;
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut out = vec![FILL; frame.len()];
    for y in 0..h {
        let v = y as f64 + 0.5 - cy;
        for x in 0..w {
            let u = x as f64 + 0.5 - cx;
            let (su, sv) = src(u, v);
            let sx = (su + cx).floor();
            let sy = (sv + cy).floor();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                let from = dims.index(sy as usize, sx as usize, 0);
                let to = dims.index(y, x, 0);
                out[to..to + c].copy_from_slice(&frame[from..from + c]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const D1: FrameDims = FrameDims { h: 4, w: 4, c: 1 };

    #[test]
    fn identity_resolves_and_applies_as_identity() {
        let mut rng = SeededRng::new(1);
        let r = resolve(PhotoGeoOp::identity(), &mut rng);
        assert_eq!(r, ResolvedOp::identity());
        let f: Vec<u8> = (0..16).collect();
        assert_eq!(apply_frame(&f, D1, &r), f);
    }

    #[test]
    fn rotate_full_magnitude_hits_endpoint() {
        let op = PhotoGeoOp::new(OpKind::Rotate, 1.0).unwrap();
        for seed in 0..20 {
            let r = resolve(op, &mut SeededRng::new(seed));
            assert!(r.param == 30.0 || r.param == -30.0);
        }
    }

    #[test]
    fn resolve_is_deterministic() {
        let op = PhotoGeoOp::new(OpKind::ShearX, 0.4).unwrap();
        assert_eq!(resolve(op, &mut SeededRng::new(9)), resolve(op, &mut SeededRng::new(9)));
    }

    #[test]
    fn brightness_zero_blacks_out() {
        let r = ResolvedOp::with_param(OpKind::Brightness, 0.0).unwrap();
        assert_eq!(apply_frame(&[100; 16], D1, &r), vec![0; 16]);
        let r = ResolvedOp::with_param(OpKind::Brightness, 2.0).unwrap();
        assert_eq!(apply_frame(&[100; 16], D1, &r), vec![200; 16]);
    }

    #[test]
    fn solarize_threshold_256_is_noop() {
        let r = ResolvedOp::with_param(OpKind::Solarize, 256.0).unwrap();
        let f: Vec<u8> = (0..=255).collect();
        let d = FrameDims { h: 16, w: 16, c: 1 };
        assert_eq!(apply_frame(&f, d, &r), f);
        let r = ResolvedOp::with_param(OpKind::Solarize, 128.0).unwrap();
        let out = apply_frame(&f, d, &r);
        assert_eq!(out[127], 127);
        assert_eq!(out[128], 127);
        assert_eq!(out[255], 0);
    }

    #[test]
    fn posterize_masks_low_bits() {
        let r = ResolvedOp::with_param(OpKind::Posterize, 4.0).unwrap();
        assert_eq!(apply_frame(&[0xAB; 16], D1, &r), vec![0xA0; 16]);
        let r = resolve(PhotoGeoOp::new(OpKind::Posterize, 0.0).unwrap(), &mut SeededRng::new(0));
        assert_eq!(r.param, 8.0);
    }

    #[test]
    fn autocontrast_stretches() {
        let f = [50, 100, 150, 50, 100, 150, 50, 100, 150, 50, 100, 150, 50, 100, 150, 100];
        let r = ResolvedOp::with_param(OpKind::AutoContrast, 0.0).unwrap();
        let out = apply_frame(&f, D1, &r);
        assert_eq!(out[0], 0);
        assert_eq!(out[1], 128); // 127.5 rounds to even
        assert_eq!(out[2], 255);
        assert_eq!(apply_frame(&[7; 16], D1, &r), vec![7; 16]);
    }

    #[test]
    fn equalize_spreads_two_levels() {
        let mut f = vec![10u8; 8];
        f.extend(vec![20u8; 8]);
        let r = ResolvedOp::with_param(OpKind::Equalize, 0.0).unwrap();
        let out = apply_frame(&f, D1, &r);
        // step = (16 - 8) / 255 = 0 -> identity, as the integer recipe gives
        assert_eq!(out, f);
        let f: Vec<u8> = (0..=255).collect();
        let d = FrameDims { h: 16, w: 16, c: 1 };
        assert_eq!(apply_frame(&f, d, &r), f);
    }

    #[test]
    fn translate_shifts_and_fills() {
        let f: Vec<u8> = (1..=16).collect();
        // 0.25 of width 4 = one pixel to the right
        let r = ResolvedOp::with_param(OpKind::TranslateX, 0.25).unwrap();
        let out = apply_frame(&f, D1, &r);
        assert_eq!(&out[0..4], &[FILL, 1, 2, 3]);
        assert_eq!(&out[12..16], &[FILL, 13, 14, 15]);
    }

    #[test]
    fn zero_parameter_geometry_is_identity() {
        let f: Vec<u8> = (0..48).collect();
        let d = FrameDims { h: 4, w: 4, c: 3 };
        for kind in [OpKind::Rotate, OpKind::ShearX, OpKind::ShearY, OpKind::TranslateX, OpKind::TranslateY] {
            let r = ResolvedOp::with_param(kind, 0.0).unwrap();
            assert_eq!(apply_frame(&f, d, &r), f, "{kind}");
        }
    }

    #[test]
    fn rotate_quarter_inputs_stay_in_frame() {
        let d = FrameDims { h: 6, w: 6, c: 1 };
        let f: Vec<u8> = (0..36).map(|i| i as u8 + 1).collect();
        let r = ResolvedOp::with_param(OpKind::Rotate, 30.0).unwrap();
        let out = apply_frame(&f, d, &r);
        assert_eq!(out.len(), 36);
        assert!(out.contains(&FILL));
        // the centre pixel region is preserved under small rotations
        assert_eq!(out[d.index(3, 3, 0)], f[d.index(3, 3, 0)]);
    }

    #[test]
    fn color_is_noop_on_gray_pixels() {
        let r = ResolvedOp::with_param(OpKind::ColorSaturation, 0.0).unwrap();
        let d = FrameDims { h: 1, w: 2, c: 3 };
        assert_eq!(apply_frame(&[90, 90, 90, 200, 200, 200], d, &r), vec![90, 90, 90, 200, 200, 200]);
        let out = apply_frame(&[255, 0, 0, 0, 0, 255], d, &r);
        assert_eq!(out, vec![76, 76, 76, 29, 29, 29]);
    }

    #[test]
    fn parameter_range_is_enforced() {
        assert!(ResolvedOp::with_param(OpKind::Rotate, 31.0).is_err());
        assert!(ResolvedOp::with_param(OpKind::Brightness, -0.1).is_err());
        assert!(PhotoGeoOp::new(OpKind::Rotate, 1.1).is_err());
    }

    #[test]
    fn sampling_from_singleton_and_empty_pools() {
        let mut rng = SeededRng::new(4);
        let (a, b) = sample_two_ops(&[OpKind::Identity], &mut rng).unwrap();
        assert_eq!((a.kind, b.kind), (OpKind::Identity, OpKind::Identity));
        assert!(matches!(sample_two_ops(&[], &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn op_names_parse() {
        for k in OpKind::ALL {
            assert_eq!(k.name().parse::<OpKind>().unwrap(), k);
        }
        assert_eq!("translate_x".parse::<OpKind>().unwrap(), OpKind::TranslateX);
        assert!("Cutout".parse::<OpKind>().is_err());
    }
}
