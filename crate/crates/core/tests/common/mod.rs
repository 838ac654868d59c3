#![allow(dead_code)]

use vidaug::clip::BoxTrack;
use vidaug::clip::DetBox;
use vidaug::{HumanMask, SeededRng, SoftLabel, VideoClip};

pub fn random_clip(id: &str, t: usize, h: usize, w: usize, c: usize, seed: u64) -> VideoClip {
    let mut rng = SeededRng::new(seed);
    let data = (0..t * h * w * c).map(|_| rng.below(256) as u8).collect();
    VideoClip::new(id, t, h, w, c, data).unwrap()
}

/// Each voxel is actor with probability `p`.
pub fn random_mask(t: usize, h: usize, w: usize, p: f64, seed: u64) -> HumanMask {
    let mut rng = SeededRng::new(seed);
    let data = (0..t * h * w).map(|_| u8::from(rng.bernoulli(p))).collect();
    HumanMask::from_vec(t, h, w, data).unwrap()
}

pub fn random_box(frame: usize, h: usize, w: usize, rng: &mut SeededRng) -> DetBox {
    let x0 = rng.below(w);
    let y0 = rng.below(h);
    DetBox {
        frame,
        x0,
        y0,
        x1: x0 + 1 + rng.below(w - x0),
        y1: y0 + 1 + rng.below(h - y0),
        score: rng.uniform(),
    }
}

pub fn random_track(id: &str, t: usize, h: usize, w: usize, n: usize, seed: u64) -> BoxTrack {
    let mut rng = SeededRng::new(seed);
    let mut track = BoxTrack::new(id);
    for _ in 0..n {
        let f = rng.below(t);
        track.boxes.push(random_box(f, h, w, &mut rng));
    }
    track
}

pub fn one_hots(k: usize, n: usize) -> Vec<SoftLabel> {
    (0..n).map(|i| SoftLabel::one_hot(k, i % k).unwrap()).collect()
}
