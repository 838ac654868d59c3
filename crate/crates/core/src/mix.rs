//! Cross-clip mixing: ActorCutMix with foreground-ratio label smoothing,
//! and the CutMix / background-CutMix comparators.

use serde::{Deserialize, Serialize};

use crate::clip::{foreground_ratio, HumanMask, SoftLabel, VideoClip};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const DEFAULT_ALPHA: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    /// Exponent of the smoothing weight; must be positive.
    pub alpha: f64,
    pub smoothing: bool,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            smoothing: true,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Which pixel-mixing rule the cross-clip branch uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossOp {
    #[default]
    ActorCutMix,
    CutMix,
    BackgroundCutMix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixResult {
    pub clip: VideoClip,
    pub label: SoftLabel,
    pub lambda: f64,
    pub partner_id: String,
}

fn check_pair(a: &VideoClip, ma: Option<&HumanMask>, b: &VideoClip, mb: Option<&HumanMask>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Validation(format!(
            "clip shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    for (clip, mask) in [(a, ma), (b, mb)] {
        if let Some(m) = mask {
            if !m.matches(clip) {
                return Err(Error::Validation(format!(
                    "mask shape {:?} does not match clip '{}'",
                    m.shape(),
                    clip.id()
                )));
            }
        }
    }
    Ok(())
}

/// Per-voxel pixel rule applied across channels.
fn combine(
    a: &VideoClip,
    ma: &HumanMask,
    b: &VideoClip,
    mb: &HumanMask,
    rule: impl Fn(u8, u8, u8, u8) -> u8,
) -> VideoClip {
    let c = a.c();
    let mut out = Vec::with_capacity(a.data().len());
    for (v, (&m1, &m2)) in ma.data().iter().zip(mb.data()).enumerate() {
        let (pa, pb) = (&a.data()[v * c..(v + 1) * c], &b.data()[v * c..(v + 1) * c]);
        out.extend(pa.iter().zip(pb).map(|(&xa, &xb)| rule(m1, m2, xa, xb)));
    }
    a.with_data(out)
}

/// Swap backgrounds: each output keeps its own actor and takes the
/// partner's pixels where neither clip has an actor. Voxels covered only by
/// the partner's actor become 0.
pub fn actor_cutmix_pair(
    a: &VideoClip,
    ma: &HumanMask,
    b: &VideoClip,
    mb: &HumanMask,
) -> Result<(VideoClip, VideoClip)> {
    check_pair(a, Some(ma), b, Some(mb))?;
    let rule = |m1: u8, m2: u8, x1: u8, x2: u8| {
        if m1 == 1 {
            x1
        } else if m2 == 0 {
            x2
        } else {
            0
        }
    };
    Ok((combine(a, ma, b, mb, rule), combine(b, mb, a, ma, rule)))
}

/// Complement of [`actor_cutmix_pair`]: keep the own background and import
/// the partner's pixels where both clips have an actor.
pub fn background_cutmix_pair(
    a: &VideoClip,
    ma: &HumanMask,
    b: &VideoClip,
    mb: &HumanMask,
) -> Result<(VideoClip, VideoClip)> {
    check_pair(a, Some(ma), b, Some(mb))?;
    let rule = |m1: u8, m2: u8, x1: u8, x2: u8| {
        if m1 == 0 {
            x1
        } else if m2 == 1 {
            x2
        } else {
            0
        }
    };
    Ok((combine(a, ma, b, mb, rule), combine(b, mb, a, ma, rule)))
}

/// `λ = 1 − |1 − r|^α` for foreground ratio `r`.
pub fn smoothing_weight(ratio: f64, alpha: f64) -> f64 {
    1.0 - (1.0 - ratio).abs().powf(alpha)
}

/// `ỹ = λ·y_a + (1 − λ)·y_b` with λ from `mask_a`'s foreground ratio, or
/// `(y_a, 1)` when smoothing is off.
pub fn smooth_label(
    y_a: &SoftLabel,
    y_b: &SoftLabel,
    mask_a: &HumanMask,
    cfg: &MixConfig,
) -> Result<(SoftLabel, f64)> {
    cfg.validate()?;
    if y_a.num_classes() != y_b.num_classes() {
        return Err(Error::Validation(format!(
            "labels have {} and {} classes",
            y_a.num_classes(),
            y_b.num_classes()
        )));
    }
    if !cfg.smoothing {
        return Ok((y_a.clone(), 1.0));
    }
    let lambda = smoothing_weight(foreground_ratio(mask_a), cfg.alpha);
    Ok((y_a.mix(lambda, y_b)?, lambda))
}

fn check_batch(clips: &[VideoClip], masks: &[HumanMask], labels: &[SoftLabel]) -> Result<()> {
    if clips.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    if clips.len() != masks.len() || clips.len() != labels.len() {
        return Err(Error::Validation(format!(
            "batch lists differ in length: {} clips, {} masks, {} labels",
            clips.len(),
            masks.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Pair element `i` with element `n − 1 − i` and mix with `op`.
pub fn cross_mix_batch(
    op: CrossOp,
    clips: &[VideoClip],
    masks: &[HumanMask],
    labels: &[SoftLabel],
    cfg: &MixConfig,
    rng: &mut SeededRng,
) -> Result<Vec<MixResult>> {
    check_batch(clips, masks, labels)?;
    cfg.validate()?;
    let n = clips.len();
    let mut out: Vec<Option<MixResult>> = vec![None; n];
    for i in 0..n.div_ceil(2) {
        let j = n - 1 - i;
        let wrap = |e: Error| match e {
            Error::Validation(msg) => Error::Validation(format!("pair ({i}, {j}): {msg}")),
            other => other,
        };
        let (ca, cb) = (&clips[i], &clips[j]);
        let (ma, mb) = (&masks[i], &masks[j]);
        let (xa, xb, (la, lam_a), (lb, lam_b)) = match op {
            CrossOp::ActorCutMix | CrossOp::BackgroundCutMix => {
                let (xa, xb) = if op == CrossOp::ActorCutMix {
                    actor_cutmix_pair(ca, ma, cb, mb)
                } else {
                    background_cutmix_pair(ca, ma, cb, mb)
                }
                .map_err(wrap)?;
                let sa = smooth_label(&labels[i], &labels[j], ma, cfg).map_err(wrap)?;
                let sb = smooth_label(&labels[j], &labels[i], mb, cfg).map_err(wrap)?;
                (xa, xb, sa, sb)
            }
            CrossOp::CutMix => {
                let (xa, lam_a) = cutmix_pair(ca, cb, rng).map_err(wrap)?;
                let (xb, lam_b) = cutmix_pair(cb, ca, rng).map_err(wrap)?;
                let la = labels[i].mix(lam_a, &labels[j]).map_err(wrap)?;
                let lb = labels[j].mix(lam_b, &labels[i]).map_err(wrap)?;
                (xa, xb, (la, lam_a), (lb, lam_b))
            }
        };
        if i == j {
            out[i] = Some(MixResult {
                clip: xa,
                label: la,
                lambda: lam_a,
                partner_id: clips[j].id().to_string(),
            });
        } else {
            out[i] = Some(MixResult {
                clip: xa,
                label: la,
                lambda: lam_a,
                partner_id: clips[j].id().to_string(),
            });
            out[j] = Some(MixResult {
                clip: xb,
                label: lb,
                lambda: lam_b,
                partner_id: clips[i].id().to_string(),
            });
        }
    }
    Ok(out.into_iter().map(|r| r.expect("every slot is paired")).collect())
}

/// ActorCutMix over a batch paired by reversal.
pub fn actor_cutmix_batch(
    clips: &[VideoClip],
    masks: &[HumanMask],
    labels: &[SoftLabel],
    cfg: &MixConfig,
) -> Result<Vec<MixResult>> {
    // ActorCutMix draws nothing; the stream is a placeholder.
    let mut unused = SeededRng::new(0);
    cross_mix_batch(CrossOp::ActorCutMix, clips, masks, labels, cfg, &mut unused)
}

/// Axis-aligned rectangle, shared by all frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutRect {
    pub y0: usize,
    pub x0: usize,
    pub h: usize,
    pub w: usize,
}

impl CutRect {
    pub fn area(&self) -> usize {
        self.h * self.w
    }
}

/// Area fraction `u ~ U(0, 1)`; sides `round(dim·√u)` clamped to `[1, dim]`;
/// position uniform over placements that fit.
pub fn sample_cut_rect(h: usize, w: usize, rng: &mut SeededRng) -> CutRect {
    let u = rng.uniform();
    let side = |dim: usize| ((dim as f64 * u.sqrt()).round() as usize).clamp(1, dim);
    let (rh, rw) = (side(h), side(w));
    let y0 = rng.below(h - rh + 1);
    let x0 = rng.below(w - rw + 1);
    CutRect { y0, x0, h: rh, w: rw }
}

/// Paste `b`'s pixels inside `rect` onto `a`. Returns the mixed clip and
/// `1 − area / (h·w)`.
pub fn cutmix_with_rect(a: &VideoClip, b: &VideoClip, rect: CutRect) -> Result<(VideoClip, f64)> {
    check_pair(a, None, b, None)?;
    if rect.h == 0 || rect.w == 0 || rect.y0 + rect.h > a.h() || rect.x0 + rect.w > a.w() {
        return Err(Error::Validation(format!("cut rectangle {rect:?} does not fit the frame")));
    }
    let dims = a.dims();
    let mut data = a.data().to_vec();
    let n = dims.len();
    let row = rect.w * dims.c;
    for f in 0..a.t() {
        for y in rect.y0..rect.y0 + rect.h {
            let start = f * n + dims.index(y, rect.x0, 0);
            data[start..start + row].copy_from_slice(&b.data()[start..start + row]);
        }
    }
    let lambda = 1.0 - rect.area() as f64 / (a.h() * a.w()) as f64;
    Ok((a.with_data(data), lambda))
}

pub fn cutmix_pair(a: &VideoClip, b: &VideoClip, rng: &mut SeededRng) -> Result<(VideoClip, f64)> {
    check_pair(a, None, b, None)?;
    let rect = sample_cut_rect(a.h(), a.w(), rng);
    cutmix_with_rect(a, b, rect)
}
