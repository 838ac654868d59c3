//! Desk-scale ablation recipes: named sets of policy variants trained on the
//! synthetic dataset over several seeds.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::clip::write_atomic;
use crate::error::{Error, Result};
use crate::mix::CrossOp;
use crate::photo_geo::OpKind;
use crate::policy::{AugMode, AugPolicy};
use crate::ssl::synthetic::Split;
use crate::ssl::{generate_synthetic, train, Classifier, EpochMetrics, SyntheticDatasetSpec, TrainConfig, TrainData};
use crate::temporal::TemporalKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Recipe {
    Coherence,
    Temporal,
    ActorCutMix,
    IntraCombine,
    IntraCross,
}

impl Recipe {
    pub const ALL: [Recipe; 5] = [
        Recipe::Coherence,
        Recipe::Temporal,
        Recipe::ActorCutMix,
        Recipe::IntraCombine,
        Recipe::IntraCross,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::Coherence => "coherence",
            Recipe::Temporal => "temporal",
            Recipe::ActorCutMix => "actorcutmix",
            Recipe::IntraCombine => "intra-combine",
            Recipe::IntraCross => "intra-cross",
        }
    }

    pub fn names() -> String {
        Self::ALL.map(Recipe::name).join(", ")
    }

    /// Variants in CSV row order; every recipe starts with the supervised
    /// baseline.
    pub fn variants(self) -> Vec<Variant> {
        let mut out = vec![Variant::supervised()];
        match self {
            Recipe::Coherence => {
                out.push(Variant::ssl("per-frame", per_frame_policy()));
                out.push(Variant::ssl("coherent", coherent_policy()));
            }
            Recipe::Temporal => {
                for (name, kind) in [
                    ("t-half", TemporalKind::THalf),
                    ("t-drop", TemporalKind::TDrop),
                    ("t-reverse", TemporalKind::TReverse),
                ] {
                    out.push(Variant::ssl(name, temporal_policy(vec![kind])));
                }
                out.push(Variant::ssl("temporal-all", temporal_policy(TemporalKind::ALL.to_vec())));
            }
            Recipe::ActorCutMix => {
                let mut cutmix = AugPolicy::new(AugMode::CrossOnly);
                cutmix.cross_op = CrossOp::CutMix;
                let mut bkg = AugPolicy::new(AugMode::CrossOnly);
                bkg.cross_op = CrossOp::BackgroundCutMix;
                let mut plain = AugPolicy::new(AugMode::CrossOnly);
                plain.cross.smoothing = false;
                out.push(Variant::ssl("cutmix", cutmix));
                out.push(Variant::ssl("bkg-cutmix", bkg));
                out.push(Variant::ssl("actorcutmix-no-smoothing", plain));
                out.push(Variant::ssl("actorcutmix", actorcutmix_policy()));
            }
            Recipe::IntraCombine => {
                out.push(Variant::ssl("sample-one", AugPolicy::new(AugMode::IntraSampleOne)));
                out.push(Variant::ssl("cascaded", AugPolicy::new(AugMode::IntraCascaded)));
            }
            Recipe::IntraCross => {
                out.push(Variant::ssl("intra-only", AugPolicy::new(AugMode::IntraCascaded)));
                out.push(Variant::ssl("cascaded", cascaded_intra_cross_policy()));
                out.push(Variant::ssl("sample-one", strong_policy()));
            }
        }
        out
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown recipe '{s}'; valid recipes: {}", Self::names())))
    }
}

/// Photometric/geometric cascade applied identically to every frame, no
/// temporal op.
pub fn coherent_policy() -> AugPolicy {
    let mut p = AugPolicy::new(AugMode::IntraCascaded);
    p.temporal_pool = vec![TemporalKind::Identity];
    p
}

/// The same cascade re-drawn for every frame.
pub fn per_frame_policy() -> AugPolicy {
    let mut p = AugPolicy::new(AugMode::PerFrame);
    p.temporal_pool = vec![TemporalKind::Identity];
    p
}

pub fn temporal_policy(pool: Vec<TemporalKind>) -> AugPolicy {
    let mut p = AugPolicy::new(AugMode::IntraCascaded);
    p.photo_geo_pool = vec![OpKind::Identity];
    p.temporal_pool = pool;
    p
}

pub fn actorcutmix_policy() -> AugPolicy {
    AugPolicy::new(AugMode::CrossOnly)
}

pub fn cascaded_intra_cross_policy() -> AugPolicy {
    AugPolicy::new(AugMode::CascadedIntraCross)
}

/// Intra-clip cascade or cross-clip swap, one coin per batch.
pub fn strong_policy() -> AugPolicy {
    AugPolicy::new(AugMode::Strong)
}

/// A named training setup; `policy: None` trains on labeled clips only.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub policy: Option<AugPolicy>,
}

impl Variant {
    pub fn supervised() -> Self {
        Self {
            name: "supervised".into(),
            policy: None,
        }
    }

    pub fn ssl(name: &str, policy: AugPolicy) -> Self {
        Self {
            name: name.into(),
            policy: Some(policy),
        }
    }
}

/// Dataset and trainer settings shared by all recipes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecipeConfig {
    pub dataset: SyntheticDatasetSpec,
    pub train: TrainConfig,
}

/// Epoch budget of the default recipe runs.
pub const DEFAULT_EPOCHS: usize = 50;

impl Default for RecipeConfig {
    fn default() -> Self {
        Self {
            dataset: SyntheticDatasetSpec::default(),
            train: TrainConfig {
                epochs: DEFAULT_EPOCHS,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub variant: String,
    pub seed: u64,
    pub acc_biased: f64,
    pub acc_decorrelated: f64,
    pub model: Classifier,
    pub log: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: String,
    pub mean_acc_biased: f64,
    pub std_acc_biased: f64,
    pub mean_acc_decorrelated: f64,
    pub std_acc_decorrelated: f64,
    pub n_seeds: usize,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct RecipeReport {
    pub runs: Vec<RunResult>,
    pub summary: Vec<VariantSummary>,
}

pub const SUMMARY_HEADER: &str =
    "variant,mean_acc_biased,std_acc_biased,mean_acc_decorrelated,std_acc_decorrelated,n_seeds";

impl RecipeReport {
    pub fn get(&self, variant: &str) -> Option<&VariantSummary> {
        self.summary.iter().find(|s| s.variant == variant)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{}",
                s.variant, s.mean_acc_biased, s.std_acc_biased, s.mean_acc_decorrelated, s.std_acc_decorrelated, s.n_seeds
            );
        }
        out
    }

    /// `<dir>/<prefix>_<variant>_seed<k>.vssl` for every run.
    pub fn write_checkpoints(&self, dir: impl AsRef<Path>, prefix: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for r in &self.runs {
            r.model.save(dir.join(format!("{prefix}_{}_seed{}.vssl", r.variant, r.seed)))?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.csv().as_bytes())
    }
}

/// Train every variant on seeds `base_seed .. base_seed + seeds`. Seed `k`
/// fixes both the dataset and the trainer, so variants of one seed see the
/// same clips.
pub fn run_variants(variants: &[Variant], cfg: &RecipeConfig, seeds: usize, base_seed: u64) -> Result<RecipeReport> {
    if seeds == 0 {
        return Err(Error::Config("need at least one seed".into()));
    }
    let mut runs = Vec::with_capacity(variants.len() * seeds);
    for k in 0..seeds as u64 {
        let seed = base_seed.wrapping_add(k);
        let spec = SyntheticDatasetSpec {
            seed,
            ..cfg.dataset.clone()
        };
        let ds = generate_synthetic(&spec)?;
        let labeled = ds.labeled_set(Split::Labeled);
        let unlabeled = ds.unlabeled_set();
        let test_biased = ds.labeled_set(Split::TestBiased);
        let test_decorrelated = ds.labeled_set(Split::TestDecorrelated);
        let train_cfg = TrainConfig {
            seed,
            num_classes: spec.num_classes,
            ..cfg.train.clone()
        };
        let seed_runs = variants
            .par_iter()
            .map(|v| {
                let data = TrainData {
                    labeled: &labeled,
                    unlabeled: if v.policy.is_some() { &unlabeled } else { &[] },
                    test_biased: &test_biased,
                    test_decorrelated: &test_decorrelated,
                };
                let policy = v.policy.clone().unwrap_or_default();
                let out = train(data, &train_cfg, &policy)?;
                let last = out.last().clone();
                Ok(RunResult {
                    variant: v.name.clone(),
                    seed,
                    acc_biased: last.acc_biased.unwrap_or(0.0),
                    acc_decorrelated: last.acc_decorrelated.unwrap_or(0.0),
                    model: out.model,
                    log: out.log,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        runs.extend(seed_runs);
    }
    let summary = variants
        .iter()
        .map(|v| {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.variant == v.name).collect();
            let (mb, sb) = mean_std(&mine.iter().map(|r| r.acc_biased).collect::<Vec<_>>());
            let (md, sd) = mean_std(&mine.iter().map(|r| r.acc_decorrelated).collect::<Vec<_>>());
            VariantSummary {
                variant: v.name.clone(),
                mean_acc_biased: mb,
                std_acc_biased: sb,
                mean_acc_decorrelated: md,
                std_acc_decorrelated: sd,
                n_seeds: mine.len(),
            }
        })
        .collect();
    Ok(RecipeReport { runs, summary })
}

pub fn run_recipe(recipe: Recipe, cfg: &RecipeConfig, seeds: usize, base_seed: u64) -> Result<RecipeReport> {
    run_variants(&recipe.variants(), cfg, seeds, base_seed)
}
