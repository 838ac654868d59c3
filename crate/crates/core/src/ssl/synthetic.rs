//! Scene-biased synthetic action clips.
//!
//! The class of a clip is how a dark rectangular actor moves: it either
//! bobs vertically or pulses in height, following a time-symmetric profile
//! with one or two half-cycles and either sign. Position is random, so the
//! class survives translation, horizontal flips and time reversal.
//! The background is one of K textures; on biased splits it is the class's
//! own texture with probability `scene_bias` and otherwise uniform over the
//! other K−1, so a classifier can shortcut through the scene.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{LabeledClip, UnlabeledClip, BOXES_FILE, LABELS_FILE, SCENES_FILE};
use crate::clip::{box_lines, rasterize_masks, save_clip, write_atomic, BoxTrack, DetBox, HumanMask, VideoClip};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Number of distinct trajectories, and so the largest supported K.
pub const MAX_CLASSES: usize = 8;

const PALETTE: [[u8; 3]; MAX_CLASSES] = [
    [200, 70, 70],
    [70, 180, 70],
    [70, 90, 200],
    [190, 170, 60],
    [170, 70, 180],
    [60, 170, 170],
    [140, 140, 140],
    [220, 130, 60],
];

const STRIPE_AMP: i32 = 28;
const NOISE_AMP: i32 = 10;
/// Actor channels lie in [0, ACTOR_MAX], below every background pixel.
pub const ACTOR_MAX: u8 = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDatasetSpec {
    pub num_classes: usize,
    pub labeled_per_class: usize,
    pub unlabeled_per_class: usize,
    pub test_per_class: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    /// P(background = class texture) on the train and biased test splits.
    pub scene_bias: f64,
    /// Same probability on the decorrelated split; `None` means 1/K.
    pub test_bias: Option<f64>,
    /// Actor size as a fraction of the frame (height, width).
    pub actor_frac: (f64, f64),
    /// Peak vertical displacement (bob) or half-height change (pulse) as a
    /// fraction of the frame height.
    pub motion_frac: f64,
    /// Per-frame pixel noise amplitude.
    pub frame_noise: u8,
    /// Maximum per-edge error of emitted boxes, in pixels.
    pub box_jitter: usize,
    /// Probability that a frame's detection gets a score below 0.5.
    pub miss_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            num_classes: 8,
            labeled_per_class: 25,
            unlabeled_per_class: 225,
            test_per_class: 50,
            t: 8,
            h: 32,
            w: 32,
            c: 3,
            scene_bias: 0.9,
            test_bias: None,
            actor_frac: (0.5, 0.5625),
            motion_frac: 0.1,
            frame_noise: 16,
            box_jitter: 2,
            miss_rate: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn decorrelated_bias(&self) -> f64 {
        self.test_bias.unwrap_or(1.0 / self.num_classes as f64)
    }

    /// Actor (height, width) in pixels.
    pub fn actor_size(&self) -> (usize, usize) {
        let side = |frac: f64, n: usize| ((frac * n as f64).round() as usize).clamp(1, n - 1);
        (side(self.actor_frac.0, self.h), side(self.actor_frac.1, self.w))
    }

    pub fn motion_amplitude(&self) -> f64 {
        self.motion_frac * self.h as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if !(2..=MAX_CLASSES).contains(&self.num_classes) {
            return bad(format!("num_classes must be in 2..={MAX_CLASSES}, got {}", self.num_classes));
        }
        if self.t < 2 || self.h < 8 || self.w < 8 {
            return bad(format!(
                "clips must be at least 2x8x8, got {}x{}x{}",
                self.t, self.h, self.w
            ));
        }
        if self.c != 1 && self.c != 3 {
            return bad(format!("channels must be 1 or 3, got {}", self.c));
        }
        for (name, b) in [
            ("scene_bias", self.scene_bias),
            ("test_bias", self.decorrelated_bias()),
            ("miss_rate", self.miss_rate),
        ] {
            if !(0.0..=1.0).contains(&b) {
                return bad(format!("{name} {b} outside [0, 1]"));
            }
        }
        let (fh, fw) = self.actor_frac;
        if !(fh > 0.0 && fh < 1.0 && fw > 0.0 && fw < 1.0) {
            return bad(format!("actor fraction ({fh}, {fw}) must lie in (0, 1)"));
        }
        let (ah, _) = self.actor_size();
        if self.motion_frac.is_nan() || self.motion_frac < 0.0 || ah as f64 + 2.0 * self.motion_amplitude() > self.h as f64 {
            return bad(format!(
                "actor height {ah} with motion {:.2} px does not fit in {} rows",
                self.motion_amplitude(),
                self.h
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Labeled,
    Unlabeled,
    TestBiased,
    TestDecorrelated,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Labeled, Split::Unlabeled, Split::TestBiased, Split::TestDecorrelated];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Labeled => "labeled",
            Split::Unlabeled => "unlabeled",
            Split::TestBiased => "test_biased",
            Split::TestDecorrelated => "test_decorrelated",
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Split::Labeled => "lab",
            Split::Unlabeled => "unl",
            Split::TestBiased => "tb",
            Split::TestDecorrelated => "td",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }

    pub fn per_class(self, spec: &SyntheticDatasetSpec) -> usize {
        match self {
            Split::Labeled => spec.labeled_per_class,
            Split::Unlabeled => spec.unlabeled_per_class,
            Split::TestBiased | Split::TestDecorrelated => spec.test_per_class,
        }
    }

    pub fn bias(self, spec: &SyntheticDatasetSpec) -> f64 {
        match self {
            Split::TestDecorrelated => spec.decorrelated_bias(),
            _ => spec.scene_bias,
        }
    }
}

/// The cheap random choices of a clip, drawn before any pixel is rendered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipPlan {
    pub class: usize,
    pub texture: usize,
    /// Vertical centre of the actor as a fraction of the feasible range.
    pub center: f64,
    /// Left edge as a fraction of the feasible range.
    pub left: f64,
    /// Scale applied to the class's motion amplitude.
    pub amplitude: f64,
}

/// Class `class` keeps texture `class` with probability `bias`, otherwise
/// gets one of the other K−1 uniformly.
pub fn draw_texture(num_classes: usize, class: usize, bias: f64, rng: &mut SeededRng) -> usize {
    if rng.bernoulli(bias) {
        class
    } else {
        let o = rng.below(num_classes - 1);
        if o >= class {
            o + 1
        } else {
            o
        }
    }
}

fn plan_clip(spec: &SyntheticDatasetSpec, class: usize, bias: f64, rng: &mut SeededRng) -> ClipPlan {
    let texture = draw_texture(spec.num_classes, class, bias, rng);
    ClipPlan {
        class,
        texture,
        center: rng.uniform(),
        left: rng.uniform(),
        amplitude: rng.uniform_range(0.8, 1.0),
    }
}

fn clip_rng(spec: &SyntheticDatasetSpec, split: Split, index: usize) -> SeededRng {
    SeededRng::derived(spec.seed, &[split.tag(), index as u64])
}

/// Plans for the first `n` clips of a split (classes cycle `i mod K`),
/// identical to the ones [`generate_synthetic`] renders.
pub fn plan_split(spec: &SyntheticDatasetSpec, split: Split, n: usize) -> Vec<ClipPlan> {
    let bias = split.bias(spec);
    (0..n)
        .map(|i| plan_clip(spec, i % spec.num_classes, bias, &mut clip_rng(spec, split, i)))
        .collect()
}

/// What a class modulates over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    /// Vertical position.
    Bob,
    /// Actor height about a fixed centre.
    Pulse,
}

/// Class `k`: motion kind, number of half-cycles and sign of the profile.
pub fn class_motion(k: usize) -> (Motion, u32, f64) {
    let kind = if k < 4 { Motion::Bob } else { Motion::Pulse };
    let cycles = (k / 2) as u32 % 2 + 1;
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    (kind, cycles, sign)
}

/// `cos(cycles·π·u)` with `u = |2(f + ½)/t − 1|`: a profile symmetric in
/// time, so reversing a clip leaves it unchanged.
pub fn motion_profile(f: usize, t: usize, cycles: u32) -> f64 {
    let u = (2.0 * (f as f64 + 0.5) / t as f64 - 1.0).abs();
    (cycles as f64 * std::f64::consts::PI * u).cos()
}

/// One rendered clip with its ground-truth actor boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClip {
    pub clip: VideoClip,
    pub boxes: BoxTrack,
    pub mask: HumanMask,
    pub plan: ClipPlan,
}

impl SyntheticClip {
    pub fn labeled(&self) -> LabeledClip {
        LabeledClip {
            clip: self.clip.clone(),
            mask: Some(self.mask.clone()),
            label: self.plan.class,
        }
    }

    pub fn unlabeled(&self) -> UnlabeledClip {
        UnlabeledClip {
            clip: self.clip.clone(),
            mask: Some(self.mask.clone()),
        }
    }
}

fn luma(rgb: [u8; 3]) -> u8 {
    (0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64).round() as u8
}

fn render(spec: &SyntheticDatasetSpec, id: String, plan: ClipPlan, rng: &mut SeededRng) -> Result<SyntheticClip> {
    let (t, h, w, c) = (spec.t, spec.h, spec.w, spec.c);
    let (ah, aw) = spec.actor_size();
    let base = PALETTE[plan.texture];
    let period = 4 + plan.texture % 4;
    let vertical = plan.texture % 2 == 1;
    let stripe_shift = rng.below(period);

    let mut background = vec![0u8; h * w * c];
    for y in 0..h {
        for x in 0..w {
            let pos = if vertical { x } else { y } + stripe_shift;
            let stripe = if (pos % period) * 2 < period { STRIPE_AMP } else { -STRIPE_AMP };
            let noise = rng.below((2 * NOISE_AMP + 1) as usize) as i32 - NOISE_AMP;
            let px = &mut background[(y * w + x) * c..(y * w + x + 1) * c];
            if c == 3 {
                for (ch, v) in px.iter_mut().enumerate() {
                    *v = (base[ch] as i32 + stripe + noise).clamp(0, 255) as u8;
                }
            } else {
                px[0] = (luma(base) as i32 + stripe + noise).clamp(0, 255) as u8;
            }
        }
    }

    let actor: [u8; 3] = [
        rng.below(ACTOR_MAX as usize + 1) as u8,
        rng.below(ACTOR_MAX as usize + 1) as u8,
        rng.below(ACTOR_MAX as usize + 1) as u8,
    ];
    let (kind, cycles, sign) = class_motion(plan.class);
    let amp = spec.motion_amplitude() * plan.amplitude;
    // the centre range keeps the largest excursion inside the frame
    let half = ah as f64 / 2.0 + spec.motion_amplitude();
    let cy = half + plan.center * (h as f64 - 2.0 * half);
    let x0 = (plan.left * (w - aw) as f64).round() as usize;
    let mut data = Vec::with_capacity(t * h * w * c);
    let mut track = BoxTrack::new(id.clone());
    for f in 0..t {
        let m = sign * amp * motion_profile(f, t, cycles);
        let (mid, size) = match kind {
            Motion::Bob => (cy + m, ah as f64),
            Motion::Pulse => (cy, ah as f64 + 2.0 * m),
        };
        let y0 = (mid - size / 2.0).round().max(0.0) as usize;
        let y1 = ((mid + size / 2.0).round() as usize).min(h).max(y0 + 1);
        let mut frame = background.clone();
        for y in y0..y1 {
            for x in x0..x0 + aw {
                let px = &mut frame[(y * w + x) * c..(y * w + x + 1) * c];
                if c == 3 {
                    px.copy_from_slice(&actor);
                } else {
                    px[0] = luma(actor);
                }
            }
        }
        if spec.frame_noise > 0 {
            let n = spec.frame_noise as i32;
            for v in frame.iter_mut() {
                *v = (*v as i32 + rng.below(2 * n as usize + 1) as i32 - n).clamp(0, 255) as u8;
            }
        }
        data.extend_from_slice(&frame);
        track.boxes.push(detect(spec, f, (x0, y0, x0 + aw, y1), rng));
    }
    let clip = VideoClip::new(id, t, h, w, c, data)?;
    let mask = rasterize_masks(&track, t, h, w, 0.5)?;
    Ok(SyntheticClip {
        clip,
        boxes: track,
        mask,
        plan,
    })
}

/// A detector's view of the true box `(x0, y0, x1, y1)`: each edge off by
/// up to `box_jitter` pixels without losing the centroid, and with
/// probability `miss_rate` a score below 0.5.
fn detect(spec: &SyntheticDatasetSpec, frame: usize, b: (usize, usize, usize, usize), rng: &mut SeededRng) -> DetBox {
    let j = spec.box_jitter as i64;
    let mut edge = |v: usize, lo: i64, hi: i64| -> usize {
        let d = rng.below(2 * j as usize + 1) as i64 - j;
        (v as i64 + d).clamp(lo, hi) as usize
    };
    let (x0, y0, x1, y1) = b;
    let (cx, cy) = ((x0 + x1) / 2, (y0 + y1) / 2);
    let nx0 = edge(x0, 0, cx as i64);
    let ny0 = edge(y0, 0, cy as i64);
    let nx1 = edge(x1, cx as i64 + 1, spec.w as i64);
    let ny1 = edge(y1, cy as i64 + 1, spec.h as i64);
    let score = if rng.bernoulli(spec.miss_rate) {
        rng.uniform_range(0.05, 0.45)
    } else {
        rng.uniform_range(0.8, 1.0)
    };
    DetBox {
        frame,
        x0: nx0,
        y0: ny0,
        x1: nx1,
        y1: ny1,
        score,
    }
}

fn generate_split(spec: &SyntheticDatasetSpec, split: Split) -> Result<Vec<SyntheticClip>> {
    let n = split.per_class(spec) * spec.num_classes;
    let bias = split.bias(spec);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = clip_rng(spec, split, i);
            let plan = plan_clip(spec, i % spec.num_classes, bias, &mut rng);
            render(spec, format!("{}_{i:05}", split.prefix()), plan, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub spec: SyntheticDatasetSpec,
    pub labeled: Vec<SyntheticClip>,
    pub unlabeled: Vec<SyntheticClip>,
    pub test_biased: Vec<SyntheticClip>,
    pub test_decorrelated: Vec<SyntheticClip>,
}

impl SyntheticDataset {
    pub fn split(&self, split: Split) -> &[SyntheticClip] {
        match split {
            Split::Labeled => &self.labeled,
            Split::Unlabeled => &self.unlabeled,
            Split::TestBiased => &self.test_biased,
            Split::TestDecorrelated => &self.test_decorrelated,
        }
    }

    pub fn labeled_set(&self, split: Split) -> Vec<LabeledClip> {
        self.split(split).iter().map(SyntheticClip::labeled).collect()
    }

    pub fn unlabeled_set(&self) -> Vec<UnlabeledClip> {
        self.unlabeled.iter().map(SyntheticClip::unlabeled).collect()
    }

    /// One directory per split with clips, labels, boxes and scene ids. The
    /// unlabeled split gets no `labels.csv`.
    pub fn write(&self, root: impl AsRef<Path>) -> Result<()> {
        let root = root.as_ref();
        for split in Split::ALL {
            let dir = root.join(split.dir_name());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let items = self.split(split);
            items
                .par_iter()
                .try_for_each(|s| save_clip(&s.clip, dir.join(format!("{}.vclip", s.clip.id()))))?;
            let mut labels = String::from("clip_id,label\n");
            let mut scenes = String::from("clip_id,texture\n");
            for s in items {
                let _ = writeln!(labels, "{},{}", s.clip.id(), s.plan.class);
                let _ = writeln!(scenes, "{},{}", s.clip.id(), s.plan.texture);
            }
            if split != Split::Unlabeled {
                write_atomic(dir.join(LABELS_FILE), labels.as_bytes())?;
            }
            write_atomic(dir.join(SCENES_FILE), scenes.as_bytes())?;
            write_atomic(dir.join(BOXES_FILE), box_lines(items.iter().map(|s| &s.boxes)).as_bytes())?;
        }
        let spec = serde_json::to_string_pretty(&self.spec).expect("spec serializes");
        write_atomic(root.join("spec.json"), spec.as_bytes())
    }
}

/// Render all four splits. Every clip draws from its own stream keyed by
/// (seed, split, index), so the output does not depend on thread count.
pub fn generate_synthetic(spec: &SyntheticDatasetSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    Ok(SyntheticDataset {
        spec: spec.clone(),
        labeled: generate_split(spec, Split::Labeled)?,
        unlabeled: generate_split(spec, Split::Unlabeled)?,
        test_biased: generate_split(spec, Split::TestBiased)?,
        test_decorrelated: generate_split(spec, Split::TestDecorrelated)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticDatasetSpec {
        SyntheticDatasetSpec {
            labeled_per_class: 2,
            unlabeled_per_class: 3,
            test_per_class: 2,
            ..SyntheticDatasetSpec::default()
        }
    }

    #[test]
    fn split_sizes_and_balance() {
        let ds = generate_synthetic(&small()).unwrap();
        assert_eq!(ds.labeled.len(), 16);
        assert_eq!(ds.unlabeled.len(), 24);
        for k in 0..8 {
            assert_eq!(ds.labeled.iter().filter(|s| s.plan.class == k).count(), 2);
        }
        assert_eq!(ds.labeled[0].clip.shape(), (8, 32, 32, 3));
    }

    #[test]
    fn full_bias_matches_class_texture() {
        let spec = SyntheticDatasetSpec {
            scene_bias: 1.0,
            ..small()
        };
        let ds = generate_synthetic(&spec).unwrap();
        assert!(ds.labeled.iter().chain(&ds.unlabeled).all(|s| s.plan.texture == s.plan.class));
    }

    #[test]
    fn exact_detector_boxes_cover_the_actor() {
        let spec = SyntheticDatasetSpec {
            frame_noise: 0,
            box_jitter: 0,
            miss_rate: 0.0,
            ..small()
        };
        let ds = generate_synthetic(&spec).unwrap();
        for s in &ds.labeled {
            for b in &s.boxes.boxes {
                let (cx, cy) = ((b.x0 + b.x1) / 2, (b.y0 + b.y1) / 2);
                // the actor is the only near-black region
                assert!(s.clip.get(b.frame, cy, cx, 0) <= ACTOR_MAX);
                assert!(b.score >= 0.5);
            }
        }
    }

    #[test]
    fn noisy_detector_boxes_stay_valid() {
        let ds = generate_synthetic(&small()).unwrap();
        for s in ds.labeled.iter().chain(&ds.unlabeled) {
            assert_eq!(s.boxes.boxes.len(), s.clip.t());
            for b in &s.boxes.boxes {
                assert!(b.x0 < b.x1 && b.y0 < b.y1);
                assert!(b.x1 <= 32 && b.y1 <= 32);
            }
            assert!(s.mask.matches(&s.clip));
        }
    }

    #[test]
    fn motion_profile_is_time_symmetric() {
        for t in [2, 5, 8, 16] {
            for cycles in [1, 2] {
                for f in 0..t {
                    let (a, b) = (motion_profile(f, t, cycles), motion_profile(t - 1 - f, t, cycles));
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn class_motions_are_distinct() {
        let all: Vec<_> = (0..MAX_CLASSES).map(class_motion).collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn plans_match_rendered_clips() {
        let spec = small();
        let ds = generate_synthetic(&spec).unwrap();
        let plans = plan_split(&spec, Split::Unlabeled, ds.unlabeled.len());
        assert!(plans.iter().zip(&ds.unlabeled).all(|(p, s)| *p == s.plan));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a.test_decorrelated, b.test_decorrelated);
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        for spec in [
            SyntheticDatasetSpec { h: 4, ..small() },
            SyntheticDatasetSpec { num_classes: 9, ..small() },
            SyntheticDatasetSpec { scene_bias: 1.5, ..small() },
            SyntheticDatasetSpec { c: 2, ..small() },
        ] {
            assert!(matches!(generate_synthetic(&spec), Err(Error::Validation(_))));
        }
    }

    #[test]
    fn grayscale_renders() {
        let ds = generate_synthetic(&SyntheticDatasetSpec { c: 1, ..small() }).unwrap();
        assert_eq!(ds.labeled[0].clip.c(), 1);
    }
}
