//! FixMatch-style semi-supervised training of a linear softmax probe.

pub mod data;
pub mod loss;
pub mod model;
pub mod synthetic;

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clip::{write_atomic, HumanMask, SoftLabel, VideoClip};
use crate::error::{Error, Result};
use crate::policy::AugPolicy;
use crate::rng::SeededRng;

pub use data::{LabeledClip, UnlabeledClip};
pub use loss::{
    confident_pseudo_labels, cross_entropy, gradient, labeled_loss, prepare_step, total_loss, unlabeled_loss, Batch,
    Gradient, LossParts, PseudoLabels, StepStats, StepTerms, Term, UnlabeledBatch, LOG_EPS,
};
pub use model::{center_crop, feature_dim, featurize, softmax, Classifier};
pub use synthetic::{generate_synthetic, SyntheticDataset, SyntheticDatasetSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub tau: f64,
    pub lambda_u: f64,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub num_classes: usize,
    /// Labeled clips get the strong policy instead of the weak view.
    pub strong_labeled: bool,
    /// Defaults to `ceil(labeled / batch_labeled)`.
    pub steps_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.95,
            lambda_u: 1.0,
            batch_labeled: 5,
            batch_unlabeled: 5,
            lr: 0.02,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 20,
            seed: 0,
            num_classes: 8,
            strong_labeled: false,
            steps_per_epoch: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        if !(self.lambda_u >= 0.0 && self.lambda_u.is_finite()) {
            return bad(format!("lambda_u {} must be a finite value >= 0", self.lambda_u));
        }
        if self.batch_labeled == 0 || self.batch_unlabeled == 0 {
            return bad("batch sizes must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("lr {} / momentum {} out of range", self.lr, self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay {} must be >= 0", self.weight_decay));
        }
        if self.num_classes < 2 {
            return bad("need at least 2 classes".into());
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps_per_epoch must be at least 1".into());
        }
        Ok(())
    }

    /// Cosine decay from `lr` to 0 over `total` steps.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        0.5 * self.lr * (1.0 + (PI * step as f64 / total.max(1) as f64).cos())
    }
}

/// Per-epoch training log row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub loss_labeled: f64,
    pub loss_unlabeled: f64,
    pub confident_frac: f64,
    /// Rate used by the last step of the epoch.
    pub lr: f64,
    pub acc_biased: Option<f64>,
    pub acc_decorrelated: Option<f64>,
}

pub const METRICS_HEADER: &str = "epoch,step,L_l,L_u,confident_frac,lr,test_acc_biased,test_acc_decorrelated";

pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let opt = |v: Option<f64>| v.map(|a| format!("{a:.6}")).unwrap_or_default();
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in log {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.8},{},{}",
            m.epoch,
            m.step,
            m.loss_labeled,
            m.loss_unlabeled,
            m.confident_frac,
            m.lr,
            opt(m.acc_biased),
            opt(m.acc_decorrelated)
        );
    }
    out
}

pub fn write_metrics_csv(path: impl AsRef<Path>, log: &[EpochMetrics]) -> Result<()> {
    write_atomic(path, metrics_csv(log).as_bytes())
}

/// Inputs to [`train`]; either test split may be empty.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub labeled: &'a [LabeledClip],
    pub unlabeled: &'a [UnlabeledClip],
    pub test_biased: &'a [LabeledClip],
    pub test_decorrelated: &'a [LabeledClip],
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Classifier,
    pub log: Vec<EpochMetrics>,
}

impl TrainOutcome {
    pub fn last(&self) -> &EpochMetrics {
        self.log.last().expect("training runs at least one epoch")
    }
}

const STREAM_LABELED_ORDER: u64 = 10;
const STREAM_UNLABELED_ORDER: u64 = 11;
const STREAM_STEP: u64 = 12;

/// Cursor over an index permutation that is reshuffled on every pass.
struct Cycler {
    n: usize,
    seed: u64,
    tag: u64,
    pass: u64,
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(n: usize, seed: u64, tag: u64) -> Self {
        Self {
            n,
            seed,
            tag,
            pass: 0,
            order: Vec::new(),
            pos: 0,
        }
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.n).collect();
        SeededRng::derived(self.seed, &[self.tag, self.pass]).shuffle(&mut self.order);
        self.pass += 1;
        self.pos = 0;
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if self.pos == self.order.len() {
                self.reshuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn gather_masks<'a>(masks: impl Iterator<Item = Option<&'a HumanMask>>) -> Option<Vec<HumanMask>> {
    masks.map(|m| m.cloned()).collect()
}

fn test_features(model: &Classifier, set: &[LabeledClip]) -> Result<Vec<(Vec<f64>, usize)>> {
    set.iter().map(|c| Ok((model.features(&c.clip)?, c.label))).collect()
}

fn accuracy(model: &Classifier, feats: &[(Vec<f64>, usize)]) -> Option<f64> {
    if feats.is_empty() {
        return None;
    }
    let hits = feats.iter().filter(|(x, y)| argmax(&model.logits(x)) == *y).count();
    Some(hits as f64 / feats.len() as f64)
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Momentum SGD with weight decay and a per-step cosine schedule. Every
/// random choice is keyed by `cfg.seed`, the epoch and the step, so the run
/// is a pure function of its inputs. With `lambda_u == 0` or no unlabeled
/// clips the unlabeled branch is never evaluated and the run is the
/// supervised baseline.
pub fn train(data: TrainData<'_>, cfg: &TrainConfig, policy: &AugPolicy) -> Result<TrainOutcome> {
    cfg.validate()?;
    policy.validate()?;
    let first = data
        .labeled
        .first()
        .ok_or_else(|| Error::Validation("labeled set is empty".into()))?;
    let (t, h, w, c) = first.clip.shape();
    for item in data.labeled.iter() {
        if item.label >= cfg.num_classes {
            return Err(Error::Validation(format!(
                "clip '{}' has class {} but K = {}",
                item.clip.id(),
                item.label,
                cfg.num_classes
            )));
        }
    }
    let mut model = Classifier::zeros(cfg.num_classes, feature_dim(t, c)).with_frame_size(h, w);
    let mut velocity_w = vec![0.0; model.weights().len()];
    let mut velocity_b = vec![0.0; model.bias().len()];

    let biased = test_features(&model, data.test_biased)?;
    let decorrelated = test_features(&model, data.test_decorrelated)?;

    let use_unlabeled = cfg.lambda_u != 0.0 && !data.unlabeled.is_empty();
    let steps = cfg
        .steps_per_epoch
        .unwrap_or_else(|| data.labeled.len().div_ceil(cfg.batch_labeled));
    let total_steps = steps * cfg.epochs;
    let mut labeled_order = Cycler::new(data.labeled.len(), cfg.seed, STREAM_LABELED_ORDER);
    let mut unlabeled_order = Cycler::new(data.unlabeled.len(), cfg.seed, STREAM_UNLABELED_ORDER);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut global = 0usize;

    for epoch in 1..=cfg.epochs {
        let (mut sum_l, mut sum_u, mut seen, mut confident) = (0.0, 0.0, 0usize, 0usize);
        let mut lr = cfg.lr;
        for _ in 0..steps {
            let li = labeled_order.take(cfg.batch_labeled);
            let clips: Vec<VideoClip> = li.iter().map(|&i| data.labeled[i].clip.clone()).collect();
            let labels = li
                .iter()
                .map(|&i| SoftLabel::one_hot(cfg.num_classes, data.labeled[i].label))
                .collect::<Result<Vec<_>>>()?;
            let masks = gather_masks(li.iter().map(|&i| data.labeled[i].mask.as_ref()));
            let (u_clips, u_masks) = if use_unlabeled {
                let ui = unlabeled_order.take(cfg.batch_unlabeled);
                (
                    ui.iter().map(|&i| data.unlabeled[i].clip.clone()).collect(),
                    gather_masks(ui.iter().map(|&i| data.unlabeled[i].mask.as_ref())),
                )
            } else {
                (Vec::new(), None)
            };
            let step_seed = SeededRng::derived(cfg.seed, &[STREAM_STEP, global as u64]).next_u64();
            let labeled = Batch {
                clips: &clips,
                masks: masks.as_deref(),
                labels: &labels,
            };
            let unlabeled = UnlabeledBatch {
                clips: &u_clips,
                masks: u_masks.as_deref(),
            };
            let (terms, stats) = prepare_step(&model, labeled, unlabeled, cfg, policy, step_seed)?;
            let parts = terms.losses(&model);
            if !parts.total.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss diverged at epoch {epoch}, step {global}"
                )));
            }
            let g = terms.gradient(&model, cfg.weight_decay);
            if !g.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at epoch {epoch}, step {global}"
                )));
            }
            lr = cfg.lr_at(global, total_steps);
            for ((p, v), gi) in model.weights_mut().iter_mut().zip(&mut velocity_w).zip(&g.weights) {
                *v = cfg.momentum * *v + gi;
                *p -= lr * *v;
            }
            for ((p, v), gi) in model.bias_mut().iter_mut().zip(&mut velocity_b).zip(&g.bias) {
                *v = cfg.momentum * *v + gi;
                *p -= lr * *v;
            }
            sum_l += parts.labeled;
            sum_u += parts.unlabeled;
            seen += stats.unlabeled_seen;
            confident += stats.confident;
            global += 1;
        }
        if !model.is_finite() {
            return Err(Error::Numeric(format!("parameters diverged in epoch {epoch}")));
        }
        log.push(EpochMetrics {
            epoch,
            step: global,
            loss_labeled: sum_l / steps as f64,
            loss_unlabeled: sum_u / steps as f64,
            confident_frac: if seen == 0 { 0.0 } else { confident as f64 / seen as f64 },
            lr,
            acc_biased: accuracy(&model, &biased),
            acc_decorrelated: accuracy(&model, &decorrelated),
        });
    }
    Ok(TrainOutcome { model, log })
}

/// The labeled-only trainer: [`train`] without the unlabeled set.
pub fn train_supervised(data: TrainData<'_>, cfg: &TrainConfig, policy: &AugPolicy) -> Result<TrainOutcome> {
    train(TrainData { unlabeled: &[], ..data }, cfg, policy)
}

/// Top-1 accuracy without augmentation (centre crop to the training size).
pub fn evaluate(model: &Classifier, test: &[LabeledClip]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Validation("test set is empty".into()));
    }
    let feats = test_features(model, test)?;
    Ok(accuracy(model, &feats).unwrap_or(0.0))
}

/// Per-clip argmax predictions.
pub fn predict(model: &Classifier, clips: &[VideoClip]) -> Result<Vec<usize>> {
    clips.iter().map(|c| Ok(argmax(&model.logits(&model.features(c)?)))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::AugMode;

    fn toy(n: usize) -> Vec<LabeledClip> {
        (0..n)
            .map(|i| LabeledClip {
                clip: VideoClip::filled(format!("c{i}"), 2, 4, 4, 1, if i % 2 == 0 { 20 } else { 230 }).unwrap(),
                mask: None,
                label: i % 2,
            })
            .collect()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            num_classes: 2,
            epochs: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0, 10), 0.02);
        assert!((c.lr_at(5, 10) - 0.01).abs() < 1e-15);
        assert!(c.lr_at(10, 10).abs() < 1e-15);
    }

    #[test]
    fn train_is_deterministic() {
        let lab = toy(10);
        let data = TrainData {
            labeled: &lab,
            unlabeled: &[],
            test_biased: &lab,
            test_decorrelated: &[],
        };
        let policy = AugPolicy::new(AugMode::IntraCascaded);
        let a = train(data, &cfg(), &policy).unwrap();
        let b = train(data, &cfg(), &policy).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.model, b.model);
        assert_eq!(a.log.len(), 5);
        assert_eq!(a.last().step, 10);
        assert_eq!(a.last().acc_decorrelated, None);
    }

    #[test]
    fn empty_labeled_set_is_rejected() {
        let data = TrainData {
            labeled: &[],
            unlabeled: &[],
            test_biased: &[],
            test_decorrelated: &[],
        };
        assert!(train(data, &cfg(), &AugPolicy::default()).is_err());
    }

    #[test]
    fn metrics_csv_layout() {
        let row = EpochMetrics {
            epoch: 1,
            step: 4,
            loss_labeled: 0.5,
            loss_unlabeled: 0.25,
            confident_frac: 0.1,
            lr: 0.02,
            acc_biased: Some(0.75),
            acc_decorrelated: None,
        };
        let csv = metrics_csv(&[row]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[1], "1,4,0.500000,0.250000,0.100000,0.02000000,0.750000,");
    }

    #[test]
    fn evaluate_constant_and_oracle() {
        let lab = toy(8);
        let mut m = Classifier::zeros(2, feature_dim(2, 1));
        m.bias_mut()[1] = 1.0;
        assert_eq!(evaluate(&m, &lab).unwrap(), 0.5);
        // weights on brightness separate the toy classes
        let d = m.feature_len();
        m.weights_mut()[d..].iter_mut().for_each(|w| *w = 4.0);
        m.bias_mut()[1] = -4.0 * d as f64 * 0.5;
        assert_eq!(evaluate(&m, &lab).unwrap(), 1.0);
        assert_eq!(evaluate(&m, &lab[..1]).unwrap(), 1.0);
        assert!(evaluate(&m, &[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { tau: 0.0, ..cfg() }.validate().is_err());
        assert!(TrainConfig { lambda_u: -1.0, ..cfg() }.validate().is_err());
        assert!(TrainConfig { batch_labeled: 0, ..cfg() }.validate().is_err());
        assert!(cfg().validate().is_ok());
    }
}
