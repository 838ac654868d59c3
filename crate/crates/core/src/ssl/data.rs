//! Training examples and the on-disk split layout.
//!
//! A split directory holds `<clip_id>.vclip` files plus optional
//! `labels.csv` (`clip_id,label`), `boxes.jsonl` (detector boxes) and
//! `scenes.csv` (`clip_id,texture`, synthetic data only).

use std::fs;
use std::path::Path;

use crate::clip::{load_box_file, load_clip, load_label_file, rasterize_masks, HumanMask, VideoClip};
use crate::error::{Error, Result};

pub const LABELS_FILE: &str = "labels.csv";
pub const BOXES_FILE: &str = "boxes.jsonl";
pub const SCENES_FILE: &str = "scenes.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub clip: VideoClip,
    pub mask: Option<HumanMask>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledClip {
    pub clip: VideoClip,
    pub mask: Option<HumanMask>,
}

impl From<LabeledClip> for UnlabeledClip {
    fn from(c: LabeledClip) -> Self {
        Self {
            clip: c.clip,
            mask: c.mask,
        }
    }
}

/// A split read from disk, sorted by clip id.
#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub clips: Vec<VideoClip>,
    pub masks: Option<Vec<HumanMask>>,
    pub labels: Option<Vec<usize>>,
}

impl LoadedSplit {
    pub fn labeled(self) -> Result<Vec<LabeledClip>> {
        let labels = self
            .labels
            .ok_or_else(|| Error::Validation(format!("split has no {LABELS_FILE}")))?;
        let mut masks = self.masks.map(|m| m.into_iter());
        Ok(self
            .clips
            .into_iter()
            .zip(labels)
            .map(|(clip, label)| LabeledClip {
                clip,
                mask: masks.as_mut().and_then(|m| m.next()),
                label,
            })
            .collect())
    }

    pub fn unlabeled(self) -> Vec<UnlabeledClip> {
        let mut masks = self.masks.map(|m| m.into_iter());
        self.clips
            .into_iter()
            .map(|clip| UnlabeledClip {
                clip,
                mask: masks.as_mut().and_then(|m| m.next()),
            })
            .collect()
    }
}

/// Read every `.vclip` in `dir`; labels and masks are attached when the
/// sidecar files exist. Boxes below `score_threshold` are ignored.
pub fn load_split(dir: impl AsRef<Path>, score_threshold: f64) -> Result<LoadedSplit> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "vclip") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Validation(format!("no .vclip files in {}", dir.display())));
    }
    let clips = paths.iter().map(load_clip).collect::<Result<Vec<_>>>()?;

    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        let table = load_label_file(&labels_path)?;
        Some(
            clips
                .iter()
                .map(|c| {
                    table.get(c.id()).copied().ok_or_else(|| {
                        Error::Validation(format!("clip '{}' missing from {}", c.id(), labels_path.display()))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    let boxes_path = dir.join(BOXES_FILE);
    let masks = if boxes_path.exists() {
        let tracks = load_box_file(&boxes_path)?;
        Some(
            clips
                .iter()
                .map(|c| match tracks.get(c.id()) {
                    Some(track) => rasterize_masks(track, c.t(), c.h(), c.w(), score_threshold),
                    None => Ok(HumanMask::zeros(c.t(), c.h(), c.w())),
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(LoadedSplit { clips, masks, labels })
}
