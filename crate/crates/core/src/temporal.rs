//! Whole-frame temporal transforms: T-Half, T-Drop, T-Reverse.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clip::VideoClip;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const DEFAULT_DROP_PROB: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemporalKind {
    Identity,
    THalf,
    TDrop,
    TReverse,
}

impl TemporalKind {
    pub const ALL: [TemporalKind; 4] = [
        TemporalKind::Identity,
        TemporalKind::THalf,
        TemporalKind::TDrop,
        TemporalKind::TReverse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemporalKind::Identity => "Identity",
            TemporalKind::THalf => "THalf",
            TemporalKind::TDrop => "TDrop",
            TemporalKind::TReverse => "TReverse",
        }
    }
}

impl fmt::Display for TemporalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemporalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        TemporalKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::Config(format!("unknown temporal op '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalOp {
    pub kind: TemporalKind,
    /// Only read by T-Drop.
    pub drop_prob: f64,
}

impl TemporalOp {
    pub fn new(kind: TemporalKind) -> Self {
        Self {
            kind,
            drop_prob: DEFAULT_DROP_PROB,
        }
    }

    pub fn identity() -> Self {
        Self::new(TemporalKind::Identity)
    }

    /// Apply to a clip. Clips too short for T-Half pass through unchanged.
    pub fn apply(&self, clip: &VideoClip, rng: &mut SeededRng) -> Result<VideoClip> {
        match self.kind {
            TemporalKind::Identity => Ok(clip.clone()),
            TemporalKind::THalf if clip.t() < 2 => Ok(clip.clone()),
            TemporalKind::THalf => t_half(clip),
            TemporalKind::TDrop => t_drop(clip, rng, self.drop_prob),
            TemporalKind::TReverse => Ok(t_reverse(clip)),
        }
    }
}

/// Keep the first ⌈t/2⌉ frames and refill the rest cyclically from them.
pub fn t_half(clip: &VideoClip) -> Result<VideoClip> {
    let t = clip.t();
    if t < 2 {
        return Err(Error::Validation(format!("T-Half needs at least 2 frames, got {t}")));
    }
    let keep = t.div_ceil(2);
    let sources: Vec<usize> = (0..t).map(|i| i % keep).collect();
    Ok(clip.gather_frames(&sources))
}

/// Frame source indices for T-Drop given per-frame drop decisions.
/// `drops[0]` is ignored: the first frame has no predecessor.
pub fn t_drop_indices(drops: &[bool]) -> Vec<usize> {
    let mut out = Vec::with_capacity(drops.len());
    for (i, &d) in drops.iter().enumerate() {
        if i > 0 && d {
            let prev = out[i - 1];
            out.push(prev);
        } else {
            out.push(i);
        }
    }
    out
}

/// Each frame after the first is replaced by the previous output frame with
/// probability `p`, so consecutive drops repeat the last kept frame.
pub fn t_drop(clip: &VideoClip, rng: &mut SeededRng, p: f64) -> Result<VideoClip> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Validation(format!("drop probability {p} outside [0, 1]")));
    }
    let mut drops = vec![false; clip.t()];
    for d in drops.iter_mut().skip(1) {
        *d = rng.bernoulli(p);
    }
    Ok(clip.gather_frames(&t_drop_indices(&drops)))
}

pub fn t_reverse(clip: &VideoClip) -> VideoClip {
    let t = clip.t();
    let sources: Vec<usize> = (0..t).rev().collect();
    clip.gather_frames(&sources)
}

/// Uniform draw from {Identity, T-Half, T-Drop, T-Reverse}.
pub fn sample_temporal_op(rng: &mut SeededRng) -> TemporalOp {
    TemporalOp::new(TemporalKind::ALL[rng.below(TemporalKind::ALL.len())])
}

/// Uniform draw from an arbitrary non-empty pool.
pub fn sample_temporal_from(pool: &[TemporalKind], rng: &mut SeededRng) -> Result<TemporalOp> {
    if pool.is_empty() {
        return Err(Error::Config("temporal pool is empty".into()));
    }
    Ok(TemporalOp::new(pool[rng.below(pool.len())]))
}
