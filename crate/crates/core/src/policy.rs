//! Augmentation composition: the weak view, the strong two-branch batch
//! strategy, and the ablation compositions.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clip::{HumanMask, SoftLabel, VideoClip};
use crate::error::{Error, Result};
use crate::mix::{cross_mix_batch, CrossOp, MixConfig, MixResult};
use crate::photo_geo::{apply_clip_coherent, apply_frame, resolve, sample_two_ops, OpKind};
use crate::rng::SeededRng;
use crate::temporal::{sample_temporal_from, TemporalKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugMode {
    /// One draw per batch: ActorCutMix on the whole batch, or the intra-clip
    /// cascade on every clip.
    #[serde(alias = "strong-alg1", alias = "sample-one")]
    Strong,
    IntraCascaded,
    IntraSampleOne,
    #[serde(alias = "actorcutmix")]
    CrossOnly,
    CascadedIntraCross,
    WeakOnly,
    PerFrame,
}

impl AugMode {
    pub const ALL: [AugMode; 7] = [
        AugMode::Strong,
        AugMode::IntraCascaded,
        AugMode::IntraSampleOne,
        AugMode::CrossOnly,
        AugMode::CascadedIntraCross,
        AugMode::WeakOnly,
        AugMode::PerFrame,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugMode::Strong => "strong",
            AugMode::IntraCascaded => "intra-cascaded",
            AugMode::IntraSampleOne => "intra-sample-one",
            AugMode::CrossOnly => "cross-only",
            AugMode::CascadedIntraCross => "cascaded-intra-cross",
            AugMode::WeakOnly => "weak-only",
            AugMode::PerFrame => "per-frame",
        }
    }

    /// Whether this mode can take the cross-clip branch.
    pub fn may_cross(self) -> bool {
        matches!(self, AugMode::Strong | AugMode::CrossOnly | AugMode::CascadedIntraCross)
    }
}

impl FromStr for AugMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase())).map_err(|_| {
            let names: Vec<_> = AugMode::ALL.iter().map(|m| m.name()).collect();
            Error::Config(format!("unknown mode '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeakAugConfig {
    pub flip_prob: f64,
    pub scale_range: (f64, f64),
    /// Output `(h, w)`; `None` keeps the input frame size.
    pub crop_size: Option<(usize, usize)>,
}

impl Default for WeakAugConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            scale_range: (1.0, 1.25),
            crop_size: None,
        }
    }
}

impl WeakAugConfig {
    /// No flip, no scaling, full-frame crop.
    pub fn identity() -> Self {
        Self {
            flip_prob: 0.0,
            scale_range: (1.0, 1.0),
            crop_size: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!("flip_prob {} outside [0, 1]", self.flip_prob)));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("bad scale range ({lo}, {hi})")));
        }
        Ok(())
    }

    fn crop_for(&self, h: usize, w: usize) -> (usize, usize) {
        self.crop_size.unwrap_or((h, w))
    }
}

/// Frozen weak-augmentation draws for one clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakParams {
    pub flip: bool,
    pub scale: f64,
    /// Crop origin `(y, x)` in the scaled frame.
    pub offset: (usize, usize),
}

fn scaled(dim: usize, s: f64) -> usize {
    ((dim as f64 * s).round() as usize).max(1)
}

pub fn sample_weak(cfg: &WeakAugConfig, h: usize, w: usize, rng: &mut SeededRng) -> Result<WeakParams> {
    cfg.validate()?;
    let (ch, cw) = cfg.crop_for(h, w);
    let (lo, hi) = cfg.scale_range;
    if ch == 0 || cw == 0 || ch > scaled(h, lo) || cw > scaled(w, lo) {
        return Err(Error::Validation(format!(
            "crop {ch}x{cw} does not fit a {h}x{w} frame scaled by {lo}"
        )));
    }
    let flip = rng.bernoulli(cfg.flip_prob);
    let scale = if hi > lo { rng.uniform_range(lo, hi) } else { lo };
    let (sh, sw) = (scaled(h, scale), scaled(w, scale));
    let oy = rng.below(sh - ch + 1);
    let ox = rng.below(sw - cw + 1);
    Ok(WeakParams {
        flip,
        scale,
        offset: (oy, ox),
    })
}

/// Flip, nearest-neighbour rescale, then crop; identical on every frame.
pub fn apply_weak(clip: &VideoClip, crop: (usize, usize), params: &WeakParams) -> Result<VideoClip> {
    let (t, h, w, c) = clip.shape();
    let (ch, cw) = crop;
    let (sh, sw) = (scaled(h, params.scale), scaled(w, params.scale));
    let (oy, ox) = params.offset;
    if oy + ch > sh || ox + cw > sw {
        return Err(Error::Validation(format!(
            "crop {ch}x{cw} at ({oy}, {ox}) exceeds the {sh}x{sw} scaled frame"
        )));
    }
    let src_y: Vec<usize> = (0..ch)
        .map(|y| ((((y + oy) as f64 + 0.5) * h as f64 / sh as f64) as usize).min(h - 1))
        .collect();
    let src_x: Vec<usize> = (0..cw)
        .map(|x| {
            let sx = ((((x + ox) as f64 + 0.5) * w as f64 / sw as f64) as usize).min(w - 1);
            if params.flip {
                w - 1 - sx
            } else {
                sx
            }
        })
        .collect();
    let dims = clip.dims();
    let mut data = Vec::with_capacity(t * ch * cw * c);
    for frame in clip.frames() {
        for &sy in &src_y {
            for &sx in &src_x {
                let i = dims.index(sy, sx, 0);
                data.extend_from_slice(&frame[i..i + c]);
            }
        }
    }
    VideoClip::new(clip.id(), t, ch, cw, c, data)
}

pub fn weak_augment(clip: &VideoClip, cfg: &WeakAugConfig, rng: &mut SeededRng) -> Result<VideoClip> {
    let params = sample_weak(cfg, clip.h(), clip.w(), rng)?;
    apply_weak(clip, cfg.crop_for(clip.h(), clip.w()), &params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugPolicy {
    pub mode: AugMode,
    pub photo_geo_pool: Vec<OpKind>,
    pub temporal_pool: Vec<TemporalKind>,
    pub cross: MixConfig,
    pub cross_op: CrossOp,
    /// Probability of the cross-clip branch in [`AugMode::Strong`].
    pub branch_prob: f64,
    pub weak: WeakAugConfig,
}

impl Default for AugPolicy {
    fn default() -> Self {
        Self::new(AugMode::Strong)
    }
}

impl AugPolicy {
    /// Full op pools and default parameters for `mode`.
    pub fn new(mode: AugMode) -> Self {
        Self {
            mode,
            photo_geo_pool: OpKind::ALL.to_vec(),
            temporal_pool: TemporalKind::ALL.to_vec(),
            cross: MixConfig::default(),
            cross_op: CrossOp::ActorCutMix,
            branch_prob: 0.5,
            weak: WeakAugConfig::default(),
        }
    }

    /// Pools reduced to identity; every intra-clip path is a no-op.
    pub fn identity(mode: AugMode) -> Self {
        Self {
            photo_geo_pool: vec![OpKind::Identity],
            temporal_pool: vec![TemporalKind::Identity],
            ..Self::new(mode)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.branch_prob) {
            return Err(Error::Config(format!("branch_prob {} outside [0, 1]", self.branch_prob)));
        }
        let intra = !matches!(self.mode, AugMode::CrossOnly | AugMode::WeakOnly);
        if intra && self.photo_geo_pool.is_empty() {
            return Err(Error::Config(format!("mode {} needs a photometric/geometric pool", self.mode.name())));
        }
        if intra && self.temporal_pool.is_empty() {
            return Err(Error::Config(format!("mode {} needs a temporal pool", self.mode.name())));
        }
        self.cross.validate()?;
        self.weak.validate()
    }

    /// True when the policy can draw a branch that reads actor masks.
    pub fn needs_masks(&self) -> bool {
        self.mode.may_cross() && self.cross_op != CrossOp::CutMix
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PolicyFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("policy file: {e}")))?;
        let policy = file.into_policy()?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = PolicyFile {
            mode: self.mode.name().to_string(),
            photo_geo_pool: self.photo_geo_pool.iter().map(|k| k.name().to_string()).collect(),
            temporal_pool: self.temporal_pool.iter().map(|k| k.name().to_string()).collect(),
            alpha: self.cross.alpha,
            smoothing: self.cross.smoothing,
            branch_prob: self.branch_prob,
            cross_op: self.cross_op,
            weak: self.weak,
        };
        serde_json::to_string_pretty(&file).expect("policy serializes")
    }
}

/// On-disk policy layout.
#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PolicyFile {
    mode: String,
    photo_geo_pool: Vec<String>,
    temporal_pool: Vec<String>,
    alpha: f64,
    smoothing: bool,
    branch_prob: f64,
    cross_op: CrossOp,
    weak: WeakAugConfig,
}

impl Default for PolicyFile {
    fn default() -> Self {
        let p = AugPolicy::default();
        Self {
            mode: p.mode.name().into(),
            photo_geo_pool: p.photo_geo_pool.iter().map(|k| k.name().into()).collect(),
            temporal_pool: p.temporal_pool.iter().map(|k| k.name().into()).collect(),
            alpha: p.cross.alpha,
            smoothing: p.cross.smoothing,
            branch_prob: p.branch_prob,
            cross_op: p.cross_op,
            weak: p.weak,
        }
    }
}

impl PolicyFile {
    fn into_policy(self) -> Result<AugPolicy> {
        Ok(AugPolicy {
            mode: self.mode.parse()?,
            photo_geo_pool: self.photo_geo_pool.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            temporal_pool: self.temporal_pool.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            cross: MixConfig {
                alpha: self.alpha,
                smoothing: self.smoothing,
            },
            cross_op: self.cross_op,
            branch_prob: self.branch_prob,
            weak: self.weak,
        })
    }
}

/// Which path produced an augmented clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Weak,
    Intra,
    Cross,
    IntraCross,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub clip: VideoClip,
    pub label: SoftLabel,
    /// Mixing weight of the clip's own label; 1 off the cross branch.
    pub lambda: f64,
    pub partner_id: Option<String>,
    pub branch: Branch,
}

impl Augmented {
    fn passthrough(clip: VideoClip, label: &SoftLabel, branch: Branch) -> Self {
        Self {
            clip,
            label: label.clone(),
            lambda: 1.0,
            partner_id: None,
            branch,
        }
    }

    fn from_mix(m: MixResult, branch: Branch) -> Self {
        Self {
            clip: m.clip,
            label: m.label,
            lambda: m.lambda,
            partner_id: Some(m.partner_id),
            branch,
        }
    }
}

/// Two ops from the photometric/geometric pool applied coherently in draw
/// order, then one op from the temporal pool.
pub fn intra_cascaded(clip: &VideoClip, policy: &AugPolicy, rng: &mut SeededRng) -> Result<VideoClip> {
    let (op1, op2) = sample_two_ops(&policy.photo_geo_pool, rng)?;
    let r1 = resolve(op1, rng);
    let r2 = resolve(op2, rng);
    let x = apply_clip_coherent(&apply_clip_coherent(clip, &r1), &r2);
    let top = sample_temporal_from(&policy.temporal_pool, rng)?;
    top.apply(&x, rng)
}

/// The cascade with an independent op pair drawn and resolved for every
/// frame, then one temporal op on the whole clip.
pub fn per_frame_cascaded(clip: &VideoClip, policy: &AugPolicy, rng: &mut SeededRng) -> Result<VideoClip> {
    let dims = clip.dims();
    let mut data = Vec::with_capacity(clip.data().len());
    for frame in clip.frames() {
        let (op1, op2) = sample_two_ops(&policy.photo_geo_pool, rng)?;
        let r1 = resolve(op1, rng);
        let r2 = resolve(op2, rng);
        data.extend(apply_frame(&apply_frame(frame, dims, &r1), dims, &r2));
    }
    let x = clip.with_data(data);
    let top = sample_temporal_from(&policy.temporal_pool, rng)?;
    top.apply(&x, rng)
}

/// Fair coin: the photometric/geometric pair alone (coin < 0.5) or the
/// temporal op alone.
pub fn intra_sample_one(clip: &VideoClip, policy: &AugPolicy, rng: &mut SeededRng) -> Result<VideoClip> {
    if rng.uniform() < 0.5 {
        let (op1, op2) = sample_two_ops(&policy.photo_geo_pool, rng)?;
        let r1 = resolve(op1, rng);
        let r2 = resolve(op2, rng);
        Ok(apply_clip_coherent(&apply_clip_coherent(clip, &r1), &r2))
    } else {
        let top = sample_temporal_from(&policy.temporal_pool, rng)?;
        top.apply(clip, rng)
    }
}

type ClipFn = fn(&VideoClip, &AugPolicy, &mut SeededRng) -> Result<VideoClip>;

/// Clip `i` uses the stream seeded `base_seed ^ i`, so the result does not
/// depend on how the work is scheduled.
fn per_clip(clips: &[VideoClip], policy: &AugPolicy, base_seed: u64, f: ClipFn) -> Result<Vec<VideoClip>> {
    clips
        .par_iter()
        .enumerate()
        .map(|(i, c)| f(c, policy, &mut SeededRng::for_worker(base_seed, i)))
        .collect()
}

fn check_aligned(clips: &[VideoClip], masks: Option<&[HumanMask]>, labels: &[SoftLabel]) -> Result<()> {
    if clips.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} clips but {} labels",
            clips.len(),
            labels.len()
        )));
    }
    if let Some(m) = masks {
        if m.len() != clips.len() {
            return Err(Error::Validation(format!("{} clips but {} masks", clips.len(), m.len())));
        }
    }
    Ok(())
}

fn masks_or_config<'a>(masks: Option<&'a [HumanMask]>, policy: &AugPolicy, clips: &[VideoClip]) -> Result<std::borrow::Cow<'a, [HumanMask]>> {
    match masks {
        Some(m) => Ok(std::borrow::Cow::Borrowed(m)),
        None if policy.cross_op == CrossOp::CutMix => Ok(std::borrow::Cow::Owned(
            clips.iter().map(|c| HumanMask::zeros(c.t(), c.h(), c.w())).collect(),
        )),
        None => Err(Error::Config("the cross-clip branch needs actor masks".into())),
    }
}

fn cross(
    clips: &[VideoClip],
    masks: Option<&[HumanMask]>,
    labels: &[SoftLabel],
    policy: &AugPolicy,
    rng: &mut SeededRng,
    branch: Branch,
) -> Result<Vec<Augmented>> {
    let masks = masks_or_config(masks, policy, clips)?;
    Ok(cross_mix_batch(policy.cross_op, clips, &masks, labels, &policy.cross, rng)?
        .into_iter()
        .map(|m| Augmented::from_mix(m, branch))
        .collect())
}

fn intra_batch(
    clips: &[VideoClip],
    labels: &[SoftLabel],
    policy: &AugPolicy,
    base_seed: u64,
    f: ClipFn,
) -> Result<Vec<Augmented>> {
    Ok(per_clip(clips, policy, base_seed, f)?
        .into_iter()
        .zip(labels)
        .map(|(c, y)| Augmented::passthrough(c, y, Branch::Intra))
        .collect())
}

/// One uniform draw `p` per batch; `p > 1 − branch_prob` (with the default
/// 0.5: `p > 0.5`) sends the whole batch through the cross-clip mix,
/// otherwise every clip gets the intra-clip cascade.
pub fn strong_augment_batch(
    clips: &[VideoClip],
    masks: Option<&[HumanMask]>,
    labels: &[SoftLabel],
    policy: &AugPolicy,
    rng: &mut SeededRng,
) -> Result<Vec<Augmented>> {
    if policy.mode != AugMode::Strong {
        return Err(Error::Config(format!(
            "strong_augment_batch needs mode strong, got {}",
            policy.mode.name()
        )));
    }
    augment_batch(clips, masks, labels, policy, rng)
}

/// Intra-clip cascade on every clip, then the cross-clip mix over the
/// results with the original masks.
pub fn cascaded_intra_cross(
    clips: &[VideoClip],
    masks: Option<&[HumanMask]>,
    labels: &[SoftLabel],
    policy: &AugPolicy,
    rng: &mut SeededRng,
) -> Result<Vec<Augmented>> {
    check_aligned(clips, masks, labels)?;
    let masks = masks_or_config(masks, policy, clips)?;
    let base = rng.next_u64();
    let intra = per_clip(clips, policy, base, intra_cascaded)?;
    cross(&intra, Some(&masks), labels, policy, rng, Branch::IntraCross)
}

/// Dispatch on `policy.mode`.
pub fn augment_batch(
    clips: &[VideoClip],
    masks: Option<&[HumanMask]>,
    labels: &[SoftLabel],
    policy: &AugPolicy,
    rng: &mut SeededRng,
) -> Result<Vec<Augmented>> {
    policy.validate()?;
    check_aligned(clips, masks, labels)?;
    if clips.is_empty() {
        return Ok(Vec::new());
    }
    match policy.mode {
        AugMode::Strong => {
            let p = rng.uniform();
            let base = rng.next_u64();
            if p > 1.0 - policy.branch_prob {
                cross(clips, masks, labels, policy, &mut SeededRng::new(base), Branch::Cross)
            } else {
                intra_batch(clips, labels, policy, base, intra_cascaded)
            }
        }
        AugMode::CrossOnly => cross(clips, masks, labels, policy, rng, Branch::Cross),
        AugMode::CascadedIntraCross => cascaded_intra_cross(clips, masks, labels, policy, rng),
        AugMode::IntraCascaded => intra_batch(clips, labels, policy, rng.next_u64(), intra_cascaded),
        AugMode::IntraSampleOne => intra_batch(clips, labels, policy, rng.next_u64(), intra_sample_one),
        AugMode::PerFrame => intra_batch(clips, labels, policy, rng.next_u64(), per_frame_cascaded),
        AugMode::WeakOnly => {
            let base = rng.next_u64();
            let weak = policy.weak;
            clips
                .par_iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (c, y))| {
                    let x = weak_augment(c, &weak, &mut SeededRng::for_worker(base, i))?;
                    Ok(Augmented::passthrough(x, y, Branch::Weak))
                })
                .collect()
        }
    }
}
