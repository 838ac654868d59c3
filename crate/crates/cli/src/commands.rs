use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use vidaug::clip::{load_box_file, load_clip, load_label_file, rasterize_masks, save_clip, write_atomic, write_frame_strip, BoxTrack};
use vidaug::policy::{augment_batch, AugPolicy};
use vidaug::recipes::{run_recipe, strong_policy, Recipe, RecipeConfig};
use vidaug::ssl::data::{load_split, LabeledClip, UnlabeledClip};
use vidaug::ssl::synthetic::Split;
use vidaug::ssl::{evaluate, generate_synthetic, predict, train as run_train, train_supervised, write_metrics_csv};
use vidaug::ssl::{Classifier, SyntheticDatasetSpec, TrainConfig, TrainData};
use vidaug::{Error, HumanMask, Result, SeededRng, SoftLabel, VideoClip};

use crate::{AblateArgs, AugmentArgs, EvalArgs, GenDataArgs, InspectArgs, RasterizeArgs, TrainArgs};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Files as given, directories expanded to their `.vclip` files in name
/// order.
fn clip_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        let meta = fs::metadata(input).map_err(|e| io_err(input, e))?;
        if meta.is_dir() {
            let mut found = Vec::new();
            for entry in fs::read_dir(input).map_err(|e| io_err(input, e))? {
                let path = entry.map_err(|e| io_err(input, e))?.path();
                if path.extension().is_some_and(|e| e == "vclip") {
                    found.push(path);
                }
            }
            found.sort();
            out.extend(found);
        } else {
            out.push(input.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::Validation("no input clips".into()));
    }
    Ok(out)
}

fn load_clips(inputs: &[PathBuf]) -> Result<Vec<VideoClip>> {
    let clips = clip_paths(inputs)?.iter().map(load_clip).collect::<Result<Vec<_>>>()?;
    let mut seen = std::collections::BTreeSet::new();
    for c in &clips {
        if !seen.insert(c.id().to_string()) {
            return Err(Error::Validation(format!("duplicate clip id '{}'", c.id())));
        }
    }
    Ok(clips)
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Validation(format!("score threshold {t} outside [0, 1]")))
    }
}

/// Clips without a track get an empty mask.
fn masks_for(clips: &[VideoClip], tracks: &BTreeMap<String, BoxTrack>, threshold: f64) -> Result<Vec<HumanMask>> {
    clips
        .iter()
        .map(|c| {
            let empty = BoxTrack::new(c.id());
            let track = tracks.get(c.id()).unwrap_or(&empty);
            rasterize_masks(track, c.t(), c.h(), c.w(), threshold)
        })
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{what} {}: {e}", path.display())))
}

pub fn augment(a: &AugmentArgs) -> Result<()> {
    check_threshold(a.score_threshold)?;
    let mut policy = AugPolicy::load(&a.policy)?;
    if let Some(mode) = &a.mode {
        policy.mode = mode.parse()?;
        policy.validate()?;
    }
    if policy.needs_masks() && a.boxes.is_none() {
        return Err(Error::Validation(format!(
            "mode {} can mix clips and needs --boxes",
            policy.mode.name()
        )));
    }
    let clips = load_clips(&a.inputs)?;
    let masks = match &a.boxes {
        Some(path) => Some(masks_for(&clips, &load_box_file(path)?, a.score_threshold)?),
        None => None,
    };
    let table = match &a.labels {
        Some(path) => load_label_file(path)?,
        None => BTreeMap::new(),
    };
    let labels = clips
        .iter()
        .map(|c| match table.get(c.id()) {
            Some(&k) => SoftLabel::one_hot(a.num_classes, k),
            None => SoftLabel::uniform(a.num_classes),
        })
        .collect::<Result<Vec<_>>>()?;

    let out = augment_batch(&clips, masks.as_deref(), &labels, &policy, &mut SeededRng::new(a.seed))?;
    create_dir(&a.out)?;
    for (src, aug) in clips.iter().zip(&out) {
        let clip = aug.clip.clone().with_id(src.id());
        save_clip(&clip, a.out.join(format!("{}.vclip", src.id())))?;
        let sidecar = serde_json::json!({
            "clip_id": src.id(),
            "lambda": aug.lambda,
            "partner_id": aug.partner_id,
            "smoothed_label": aug.label.probs(),
            "branch": aug.branch,
        });
        let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes") + "\n";
        write_atomic(a.out.join(format!("{}.json", src.id())), text.as_bytes())?;
    }
    println!("augmented {} clips into {}", out.len(), a.out.display());
    Ok(())
}

pub fn rasterize(a: &RasterizeArgs) -> Result<()> {
    check_threshold(a.score_threshold)?;
    let tracks = load_box_file(&a.boxes)?;
    let clips = load_clips(&a.inputs)?;
    let masks = masks_for(&clips, &tracks, a.score_threshold)?;
    create_dir(&a.out)?;
    for (c, m) in clips.iter().zip(&masks) {
        save_clip(&m.to_clip(c.id()), a.out.join(format!("{}.vclip", c.id())))?;
    }
    println!("wrote {} masks into {}", masks.len(), a.out.display());
    Ok(())
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let mut spec: SyntheticDatasetSpec = match &a.spec {
        Some(path) => read_json(path, "dataset spec")?,
        None => SyntheticDatasetSpec::default(),
    };
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.num_classes {
        spec.num_classes = v;
    }
    if let Some(v) = a.labeled_per_class {
        spec.labeled_per_class = v;
    }
    if let Some(v) = a.unlabeled_per_class {
        spec.unlabeled_per_class = v;
    }
    if let Some(v) = a.test_per_class {
        spec.test_per_class = v;
    }
    if let Some(v) = a.scene_bias {
        spec.scene_bias = v;
    }
    let ds = generate_synthetic(&spec)?;
    ds.write(&a.out)?;
    println!(
        "wrote {} labeled, {} unlabeled, {}+{} test clips into {}",
        ds.labeled.len(),
        ds.unlabeled.len(),
        ds.test_biased.len(),
        ds.test_decorrelated.len(),
        a.out.display()
    );
    Ok(())
}

fn optional_split(root: &Path, split: Split, threshold: f64) -> Result<Option<vidaug::ssl::data::LoadedSplit>> {
    let dir = root.join(split.dir_name());
    if dir.is_dir() {
        load_split(dir, threshold).map(Some)
    } else {
        Ok(None)
    }
}

fn labeled_split(root: &Path, split: Split, threshold: f64) -> Result<Vec<LabeledClip>> {
    match optional_split(root, split, threshold)? {
        Some(s) => s.labeled(),
        None => Ok(Vec::new()),
    }
}

pub fn train(a: &TrainArgs) -> Result<()> {
    check_threshold(a.score_threshold)?;
    let mut cfg: TrainConfig = match &a.config {
        Some(path) => read_json(path, "train config")?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.tau {
        cfg.tau = v;
    }
    if let Some(v) = a.lambda_u {
        cfg.lambda_u = v;
    }
    if let Some(v) = a.num_classes {
        cfg.num_classes = v;
    }
    cfg.strong_labeled |= a.strong_labeled;
    cfg.validate()?;
    let policy = match &a.policy {
        Some(path) => AugPolicy::load(path)?,
        None => strong_policy(),
    };

    let labeled_dir = a.data.join(Split::Labeled.dir_name());
    let labeled = load_split(&labeled_dir, a.score_threshold)?.labeled()?;
    let unlabeled: Vec<UnlabeledClip> = if a.supervised {
        Vec::new()
    } else {
        optional_split(&a.data, Split::Unlabeled, a.score_threshold)?
            .map(|s| s.unlabeled())
            .unwrap_or_default()
    };
    let test_biased = labeled_split(&a.data, Split::TestBiased, a.score_threshold)?;
    let test_decorrelated = labeled_split(&a.data, Split::TestDecorrelated, a.score_threshold)?;
    let data = TrainData {
        labeled: &labeled,
        unlabeled: &unlabeled,
        test_biased: &test_biased,
        test_decorrelated: &test_decorrelated,
    };
    let outcome = if a.supervised {
        train_supervised(data, &cfg, &policy)?
    } else {
        run_train(data, &cfg, &policy)?
    };
    outcome.model.save(&a.checkpoint)?;
    if let Some(path) = &a.metrics {
        write_metrics_csv(path, &outcome.log)?;
    }
    let last = outcome.last();
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    println!(
        "epoch {} L_l {:.4} L_u {:.4} confident {:.3} acc_biased {} acc_decorrelated {}",
        last.epoch,
        last.loss_labeled,
        last.loss_unlabeled,
        last.confident_frac,
        fmt(last.acc_biased),
        fmt(last.acc_decorrelated)
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let model = Classifier::load(&a.checkpoint)?;
    let test = load_split(&a.data, 0.5)?.labeled()?;
    let acc = evaluate(&model, &test)?;
    if let Some(path) = &a.predictions {
        let clips: Vec<VideoClip> = test.iter().map(|c| c.clip.clone()).collect();
        let predicted = predict(&model, &clips)?;
        let mut csv = String::from("clip_id,label,predicted\n");
        for (c, p) in test.iter().zip(predicted) {
            let _ = writeln!(csv, "{},{},{p}", c.clip.id(), c.label);
        }
        write_atomic(path, csv.as_bytes())?;
    }
    println!("accuracy {acc:.6} over {} clips", test.len());
    Ok(())
}

fn default_checkpoint_dir(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().map_or_else(|| "ablate".into(), |s| s.to_string_lossy().into_owned());
    csv.with_file_name(format!("{stem}_checkpoints"))
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    let recipe: Recipe = a.recipe.parse()?;
    if a.seeds == 0 {
        return Err(Error::Validation("--seeds must be at least 1".into()));
    }
    let mut cfg = RecipeConfig::default();
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    cfg.train.validate()?;
    cfg.dataset.validate()?;
    let report = run_recipe(recipe, &cfg, a.seeds, a.base_seed)?;
    if let Some(parent) = a.out_csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    report.write_csv(&a.out_csv)?;
    let dir = a.checkpoint_dir.clone().unwrap_or_else(|| default_checkpoint_dir(&a.out_csv));
    report.write_checkpoints(&dir, recipe.name())?;
    print!("{}", report.csv());
    Ok(())
}

pub fn inspect(a: &InspectArgs) -> Result<()> {
    let clip = load_clip(&a.input)?;
    write_frame_strip(&clip, &a.strip_out)?;
    let (t, h, w, c) = clip.shape();
    println!("{} t={t} h={h} w={w} c={c} strip {}x{h}", clip.id(), t * w);
    Ok(())
}
