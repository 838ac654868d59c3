mod common;

use common::{random_box, random_clip, random_track};
use proptest::prelude::*;
use vidaug::clip::{decode_clip, encode_clip, load_clip, rasterize_masks, save_clip, BoxTrack, DetBox};
use vidaug::{foreground_ratio, SeededRng};

#[test]
fn file_round_trip_for_100_clips() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SeededRng::new(7);
    for i in 0..100 {
        let (t, h, w) = (1 + rng.below(6), 1 + rng.below(9), 1 + rng.below(9));
        let c = if rng.bernoulli(0.5) { 1 } else { 3 };
        let clip = random_clip(&format!("c{i}"), t, h, w, c, i);
        let path = dir.path().join(format!("c{i}.vclip"));
        save_clip(&clip, &path).unwrap();
        assert_eq!(load_clip(&path).unwrap(), clip);
    }
}

#[test]
fn equal_seeds_give_equal_streams() {
    let (mut a, mut b) = (SeededRng::new(99), SeededRng::new(99));
    for _ in 0..10_000 {
        assert_eq!(a.next_u64(), b.next_u64());
    }
    let mut c = SeededRng::new(100);
    let mut a = SeededRng::new(99);
    assert!((0..16).any(|_| a.next_u64() != c.next_u64()));
}

proptest! {
    #[test]
    fn encode_decode_is_identity(t in 1usize..5, h in 1usize..7, w in 1usize..7, color in any::<bool>(), seed in any::<u64>()) {
        let clip = random_clip("x", t, h, w, if color { 3 } else { 1 }, seed);
        prop_assert_eq!(decode_clip("x", &encode_clip(&clip)).unwrap(), clip);
    }

    #[test]
    fn adding_a_box_never_clears_a_voxel(t in 1usize..4, h in 1usize..10, w in 1usize..10, n in 0usize..6, seed in any::<u64>(), thr in 0.0f64..=1.0) {
        let track = random_track("x", t, h, w, n, seed);
        let before = rasterize_masks(&track, t, h, w, thr).unwrap();
        let mut more = track.clone();
        let mut rng = SeededRng::new(seed ^ 1);
        let f = rng.below(t);
        more.boxes.push(random_box(f, h, w, &mut rng));
        let after = rasterize_masks(&more, t, h, w, thr).unwrap();
        for (a, b) in before.data().iter().zip(after.data()) {
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn full_frame_boxes_cover_everything(t in 1usize..5, h in 1usize..12, w in 1usize..12) {
        let mut track = BoxTrack::new("x");
        for f in 0..t {
            track.boxes.push(DetBox { frame: f, x0: 0, y0: 0, x1: w, y1: h, score: 1.0 });
        }
        let mask = rasterize_masks(&track, t, h, w, 0.5).unwrap();
        prop_assert_eq!(foreground_ratio(&mask), 1.0);
    }

    #[test]
    fn worker_streams_follow_the_xor_rule(base in any::<u64>(), i in 0usize..1000) {
        let mut a = SeededRng::for_worker(base, i);
        let mut b = SeededRng::new(base ^ i as u64);
        prop_assert_eq!(a.next_u64(), b.next_u64());
    }
}
