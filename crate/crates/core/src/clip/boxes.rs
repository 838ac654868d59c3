//! Cached detector boxes and their rasterization into actor masks.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HumanMask;
use crate::error::{Error, Result};

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)` on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetBox {
    pub frame: usize,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub score: f64,
}

impl DetBox {
    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.x0 <= x && x < self.x1 && self.y0 <= y && y < self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoxTrack {
    pub clip_id: String,
    pub boxes: Vec<DetBox>,
}

impl BoxTrack {
    pub fn new(clip_id: impl Into<String>) -> Self {
        Self {
            clip_id: clip_id.into(),
            boxes: Vec::new(),
        }
    }

    pub fn validate(&self, t: usize, h: usize, w: usize) -> Result<()> {
        for (i, b) in self.boxes.iter().enumerate() {
            let ok = b.frame < t
                && b.x0 < b.x1
                && b.x1 <= w
                && b.y0 < b.y1
                && b.y1 <= h
                && (0.0..=1.0).contains(&b.score);
            if !ok {
                return Err(Error::Validation(format!(
                    "box {i} of clip '{}' (frame {}, x {}..{}, y {}..{}, score {}) \
                     is outside a {t}x{h}x{w} clip",
                    self.clip_id, b.frame, b.x0, b.x1, b.y0, b.y1, b.score
                )));
            }
        }
        Ok(())
    }
}

/// Union of all boxes with `score >= score_threshold`, per frame.
pub fn rasterize_masks(
    track: &BoxTrack,
    t: usize,
    h: usize,
    w: usize,
    score_threshold: f64,
) -> Result<HumanMask> {
    if !(0.0..=1.0).contains(&score_threshold) {
        return Err(Error::Validation(format!(
            "score threshold {score_threshold} outside [0, 1]"
        )));
    }
    track.validate(t, h, w)?;
    let mut mask = HumanMask::zeros(t, h, w);
    for b in track.boxes.iter().filter(|b| b.score >= score_threshold) {
        for y in b.y0..b.y1 {
            for x in b.x0..b.x1 {
                mask.set(b.frame, y, x, true);
            }
        }
    }
    Ok(mask)
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxLine {
    clip_id: String,
    frame: usize,
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    score: f64,
}

/// Parse JSON-lines box records, grouped by clip id.
pub fn parse_box_lines(text: &str) -> Result<BTreeMap<String, BoxTrack>> {
    let mut tracks: BTreeMap<String, BoxTrack> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rec: BoxLine = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("box file line {}: {e}", n + 1)))?;
        tracks
            .entry(rec.clip_id.clone())
            .or_insert_with(|| BoxTrack::new(rec.clip_id.clone()))
            .boxes
            .push(DetBox {
                frame: rec.frame,
                x0: rec.x0,
                y0: rec.y0,
                x1: rec.x1,
                y1: rec.y1,
                score: rec.score,
            });
    }
    Ok(tracks)
}

pub fn load_box_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, BoxTrack>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_box_lines(&text)
}

/// Serialize tracks back to JSON lines, one box per line.
pub fn box_lines<'a>(tracks: impl IntoIterator<Item = &'a BoxTrack>) -> String {
    let mut out = String::new();
    for track in tracks {
        for b in &track.boxes {
            let rec = BoxLine {
                clip_id: track.clip_id.clone(),
                frame: b.frame,
                x0: b.x0,
                y0: b.y0,
                x1: b.x1,
                y1: b.y1,
                score: b.score,
            };
            out.push_str(&serde_json::to_string(&rec).expect("box record serializes"));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clip::foreground_ratio;

    fn bx(frame: usize, x0: usize, y0: usize, x1: usize, y1: usize, score: f64) -> DetBox {
        DetBox {
            frame,
            x0,
            y0,
            x1,
            y1,
            score,
        }
    }

    #[test]
    fn empty_track_gives_zero_mask() {
        let m = rasterize_masks(&BoxTrack::new("a"), 2, 3, 3, 0.5).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn full_frame_boxes_cover_everything() {
        let mut track = BoxTrack::new("a");
        for f in 0..3 {
            track.boxes.push(bx(f, 0, 0, 4, 5, 0.9));
        }
        let m = rasterize_masks(&track, 3, 5, 4, 0.5).unwrap();
        assert_eq!(foreground_ratio(&m), 1.0);
    }

    #[test]
    fn unit_box_marks_one_pixel() {
        let mut track = BoxTrack::new("a");
        track.boxes.push(bx(0, 0, 0, 1, 1, 1.0));
        let m = rasterize_masks(&track, 1, 2, 2, 0.5).unwrap();
        assert_eq!(m.data(), &[1, 0, 0, 0]);
    }

    #[test]
    fn threshold_filters_low_scores() {
        let mut track = BoxTrack::new("a");
        track.boxes.push(bx(0, 0, 0, 2, 2, 0.4));
        track.boxes.push(bx(0, 1, 1, 2, 2, 0.5));
        let m = rasterize_masks(&track, 1, 2, 2, 0.5).unwrap();
        assert_eq!(m.data(), &[0, 0, 0, 1]);
        let m = rasterize_masks(&track, 1, 2, 2, 0.0).unwrap();
        assert_eq!(m.count(), 4);
    }

    #[test]
    fn out_of_bounds_box_is_named() {
        let mut track = BoxTrack::new("clipz");
        track.boxes.push(bx(0, 0, 0, 1, 1, 1.0));
        track.boxes.push(bx(0, 0, 0, 5, 1, 1.0));
        let err = rasterize_masks(&track, 1, 2, 2, 0.5).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("box 1") && msg.contains("clipz"), "{msg}");

        let mut bad_frame = BoxTrack::new("b");
        bad_frame.boxes.push(bx(3, 0, 0, 1, 1, 1.0));
        assert!(rasterize_masks(&bad_frame, 1, 2, 2, 0.5).is_err());

        let mut empty = BoxTrack::new("c");
        empty.boxes.push(bx(0, 1, 0, 1, 1, 1.0));
        assert!(rasterize_masks(&empty, 1, 2, 2, 0.5).is_err());
        assert!(rasterize_masks(&BoxTrack::new("d"), 1, 2, 2, 1.5).is_err());
    }

    #[test]
    fn parses_json_lines() {
        let text = r#"{"clip_id": "a", "frame": 0, "x0": 0, "y0": 0, "x1": 2, "y1": 2, "score": 0.9}

{"clip_id": "b", "frame": 1, "x0": 1, "y0": 1, "x1": 3, "y1": 2, "score": 0.3}
{"clip_id": "a", "frame": 1, "x0": 0, "y0": 1, "x1": 1, "y1": 2, "score": 0.8}
"#;
        let tracks = parse_box_lines(text).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks["a"].boxes.len(), 2);
        assert_eq!(tracks["b"].boxes[0].x1, 3);
        let round = parse_box_lines(&box_lines(tracks.values())).unwrap();
        assert_eq!(round, tracks);

        assert!(matches!(parse_box_lines("{not json}"), Err(Error::Format(_))));
    }
}
