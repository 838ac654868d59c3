//! Supervised, pseudo-label and combined objectives with their analytic
//! gradient through the linear softmax model.
//!
//! Augmentations and pseudo-labels are constants with respect to the
//! parameters; a step is first frozen into [`StepTerms`] (feature/target
//! pairs plus normalizers) and the loss and gradient are both read off it.

use rayon::prelude::*;

use super::model::Classifier;
use super::TrainConfig;
use crate::clip::{HumanMask, SoftLabel, VideoClip};
use crate::error::{Error, Result};
use crate::policy::{augment_batch, weak_augment, AugPolicy, WeakAugConfig};
use crate::rng::SeededRng;

/// Floor applied to probabilities inside `ln`.
pub const LOG_EPS: f64 = 1e-12;

const STREAM_LABELED: u64 = 1;
const STREAM_WEAK: u64 = 2;
const STREAM_STRONG: u64 = 3;
const STREAM_LABELED_STRONG: u64 = 4;

/// `−Σ y·ln max(p, ε)`.
pub fn cross_entropy(p: &[f64], y: &[f64]) -> f64 {
    -p.iter().zip(y).map(|(&p, &y)| if y == 0.0 { 0.0 } else { y * p.max(LOG_EPS).ln() }).sum::<f64>()
}

/// A labeled mini-batch; masks are only read by strong augmentation.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub clips: &'a [VideoClip],
    pub masks: Option<&'a [HumanMask]>,
    pub labels: &'a [SoftLabel],
}

#[derive(Debug, Clone, Copy)]
pub struct UnlabeledBatch<'a> {
    pub clips: &'a [VideoClip],
    pub masks: Option<&'a [HumanMask]>,
}

/// A frozen (features, target) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn weak_views(
    model: &Classifier,
    clips: &[VideoClip],
    weak: &WeakAugConfig,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<f64>>> {
    let base = rng.next_u64();
    clips
        .par_iter()
        .enumerate()
        .map(|(i, c)| model.features(&weak_augment(c, weak, &mut SeededRng::for_worker(base, i))?))
        .collect()
}

fn check_same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Validation(format!("{a} clips but {b} {what}")));
    }
    Ok(())
}

/// Weakly augmented labeled pairs.
pub fn labeled_terms(
    model: &Classifier,
    clips: &[VideoClip],
    labels: &[SoftLabel],
    weak: &WeakAugConfig,
    rng: &mut SeededRng,
) -> Result<Vec<Term>> {
    check_same_len(clips.len(), labels.len(), "labels")?;
    Ok(weak_views(model, clips, weak, rng)?
        .into_iter()
        .zip(labels)
        .map(|(x, y)| Term { x, y: y.probs().to_vec() })
        .collect())
}

fn mean_ce(model: &Classifier, terms: &[Term], normalizer: usize) -> f64 {
    if terms.is_empty() {
        return 0.0;
    }
    terms.iter().map(|t| cross_entropy(&model.probs(&t.x), &t.y)).sum::<f64>() / normalizer as f64
}

/// Mean cross-entropy of the model on weak views of the batch.
pub fn labeled_loss(
    model: &Classifier,
    clips: &[VideoClip],
    labels: &[SoftLabel],
    weak: &WeakAugConfig,
    rng: &mut SeededRng,
) -> Result<f64> {
    if clips.is_empty() {
        return Err(Error::Validation("labeled batch is empty".into()));
    }
    let terms = labeled_terms(model, clips, labels, weak, rng)?;
    Ok(mean_ce(model, &terms, clips.len()))
}

/// Argmax pseudo-labels for a whole unlabeled batch and which of them clear
/// the confidence threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    pub labels: Vec<SoftLabel>,
    pub max_prob: Vec<f64>,
    pub tau: f64,
}

impl PseudoLabels {
    pub fn is_confident(&self, i: usize) -> bool {
        self.max_prob[i] >= self.tau
    }

    pub fn count(&self) -> usize {
        (0..self.labels.len()).filter(|&i| self.is_confident(i)).count()
    }

    /// `(index, one-hot)` for the confident set, in batch order.
    pub fn confident(&self) -> Vec<(usize, SoftLabel)> {
        (0..self.labels.len())
            .filter(|&i| self.is_confident(i))
            .map(|i| (i, self.labels[i].clone()))
            .collect()
    }
}

/// One weak view per clip; the pseudo-label is the argmax one-hot of the
/// prediction and the clip is confident iff its max probability is ≥ `tau`.
pub fn confident_pseudo_labels(
    model: &Classifier,
    clips: &[VideoClip],
    tau: f64,
    weak: &WeakAugConfig,
    rng: &mut SeededRng,
) -> Result<PseudoLabels> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Validation(format!("tau {tau} outside (0, 1]")));
    }
    let views = weak_views(model, clips, weak, rng)?;
    pseudo_from_features(model, &views, tau)
}

fn pseudo_from_features(model: &Classifier, views: &[Vec<f64>], tau: f64) -> Result<PseudoLabels> {
    let k = model.num_classes();
    let mut labels = Vec::with_capacity(views.len());
    let mut max_prob = Vec::with_capacity(views.len());
    for x in views {
        let p = SoftLabel::new(model.probs(x))?;
        labels.push(SoftLabel::one_hot(k, p.argmax())?);
        max_prob.push(p.max());
    }
    Ok(PseudoLabels { labels, max_prob, tau })
}

/// Strong views of the whole batch against the pseudo-labels (smoothed on
/// the cross-clip branch), keeping only the confident items.
pub fn unlabeled_terms(
    model: &Classifier,
    batch: UnlabeledBatch<'_>,
    pseudo: &PseudoLabels,
    policy: &AugPolicy,
    rng: &mut SeededRng,
) -> Result<Vec<Term>> {
    check_same_len(batch.clips.len(), pseudo.labels.len(), "pseudo-labels")?;
    if pseudo.count() == 0 {
        return Ok(Vec::new());
    }
    let strong = augment_batch(batch.clips, batch.masks, &pseudo.labels, policy, rng)?;
    strong
        .into_iter()
        .enumerate()
        .filter(|(i, _)| pseudo.is_confident(*i))
        .map(|(_, a)| {
            Ok(Term {
                x: model.features(&a.clip)?,
                y: a.label.probs().to_vec(),
            })
        })
        .collect()
}

/// `(1/B_u)·Σ_C CE(strong view, pseudo-label)` with `B_u` the full batch size.
pub fn unlabeled_loss(
    model: &Classifier,
    batch: UnlabeledBatch<'_>,
    pseudo: &PseudoLabels,
    policy: &AugPolicy,
    rng: &mut SeededRng,
) -> Result<f64> {
    let terms = unlabeled_terms(model, batch, pseudo, policy, rng)?;
    Ok(mean_ce(model, &terms, batch.clips.len().max(1)))
}

/// Everything random about one step, frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTerms {
    pub labeled: Vec<Term>,
    pub unlabeled: Vec<Term>,
    pub b_l: usize,
    pub b_u: usize,
    pub lambda_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub labeled: f64,
    pub unlabeled: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    /// Row-major K×D, like the model weights.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.weights.iter().chain(&self.bias).map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|g| g.is_finite())
    }
}

impl StepTerms {
    /// Step with only a supervised part.
    pub fn supervised(labeled: Vec<Term>) -> Self {
        let b_l = labeled.len();
        Self {
            labeled,
            unlabeled: Vec::new(),
            b_l,
            b_u: 0,
            lambda_u: 0.0,
        }
    }

    pub fn losses(&self, model: &Classifier) -> LossParts {
        let labeled = mean_ce(model, &self.labeled, self.b_l.max(1));
        let unlabeled = mean_ce(model, &self.unlabeled, self.b_u.max(1));
        LossParts {
            labeled,
            unlabeled,
            total: labeled + self.lambda_u * unlabeled,
        }
    }

    /// Loss plus `(wd/2)·(‖W‖² + ‖b‖²)`.
    pub fn objective(&self, model: &Classifier, weight_decay: f64) -> f64 {
        let sq: f64 = model.weights().iter().chain(model.bias()).map(|v| v * v).sum();
        self.losses(model).total + 0.5 * weight_decay * sq
    }

    /// Exact gradient of [`StepTerms::objective`].
    pub fn gradient(&self, model: &Classifier, weight_decay: f64) -> Gradient {
        let (k, d) = (model.num_classes(), model.feature_len());
        let mut g = Gradient {
            weights: model.weights().iter().map(|w| weight_decay * w).collect(),
            bias: model.bias().iter().map(|b| weight_decay * b).collect(),
        };
        let mut accumulate = |terms: &[Term], coef: f64| {
            for t in terms {
                let p = model.probs(&t.x);
                // d/dz of −Σ y·ln max(p, ε): the clamp zeroes inactive terms
                let s: f64 = t.y.iter().zip(&p).filter(|(_, &p)| p >= LOG_EPS).map(|(y, _)| y).sum();
                for j in 0..k {
                    let active = if p[j] >= LOG_EPS { t.y[j] } else { 0.0 };
                    let dz = coef * (p[j] * s - active);
                    if dz == 0.0 {
                        continue;
                    }
                    g.bias[j] += dz;
                    let row = &mut g.weights[j * d..(j + 1) * d];
                    for (w, x) in row.iter_mut().zip(&t.x) {
                        *w += dz * x;
                    }
                }
            }
        };
        if !self.labeled.is_empty() {
            accumulate(&self.labeled, 1.0 / self.b_l as f64);
        }
        if !self.unlabeled.is_empty() && self.lambda_u != 0.0 {
            accumulate(&self.unlabeled, self.lambda_u / self.b_u as f64);
        }
        g
    }
}

/// Summary counts of the unlabeled branch of a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepStats {
    pub unlabeled_seen: usize,
    pub confident: usize,
}

/// Freeze one step. `seed` splits into independent streams for the labeled
/// weak views, the pseudo-labeling weak views and the strong views. The
/// unlabeled branch is skipped entirely when `lambda_u == 0` or the batch
/// is empty.
pub fn prepare_step(
    model: &Classifier,
    labeled: Batch<'_>,
    unlabeled: UnlabeledBatch<'_>,
    cfg: &TrainConfig,
    policy: &AugPolicy,
    seed: u64,
) -> Result<(StepTerms, StepStats)> {
    if labeled.clips.is_empty() {
        return Err(Error::Validation("labeled batch is empty".into()));
    }
    let labeled_terms = if cfg.strong_labeled {
        check_same_len(labeled.clips.len(), labeled.labels.len(), "labels")?;
        let mut rng = SeededRng::derived(seed, &[STREAM_LABELED_STRONG]);
        augment_batch(labeled.clips, labeled.masks, labeled.labels, policy, &mut rng)?
            .into_iter()
            .map(|a| {
                Ok(Term {
                    x: model.features(&a.clip)?,
                    y: a.label.probs().to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let mut rng = SeededRng::derived(seed, &[STREAM_LABELED]);
        labeled_terms(model, labeled.clips, labeled.labels, &policy.weak, &mut rng)?
    };
    let mut terms = StepTerms::supervised(labeled_terms);
    let mut stats = StepStats::default();
    if cfg.lambda_u == 0.0 || unlabeled.clips.is_empty() {
        return Ok((terms, stats));
    }
    let pseudo = confident_pseudo_labels(
        model,
        unlabeled.clips,
        cfg.tau,
        &policy.weak,
        &mut SeededRng::derived(seed, &[STREAM_WEAK]),
    )?;
    terms.unlabeled = unlabeled_terms(
        model,
        unlabeled,
        &pseudo,
        policy,
        &mut SeededRng::derived(seed, &[STREAM_STRONG]),
    )?;
    terms.b_u = unlabeled.clips.len();
    terms.lambda_u = cfg.lambda_u;
    stats.unlabeled_seen = unlabeled.clips.len();
    stats.confident = pseudo.count();
    Ok((terms, stats))
}

/// `L_l + λ_u·L_u` for one step; draws are a function of `seed` only.
pub fn total_loss(
    model: &Classifier,
    labeled: Batch<'_>,
    unlabeled: UnlabeledBatch<'_>,
    cfg: &TrainConfig,
    policy: &AugPolicy,
    seed: u64,
) -> Result<LossParts> {
    let (terms, _) = prepare_step(model, labeled, unlabeled, cfg, policy, seed)?;
    Ok(terms.losses(model))
}

/// Gradient of `total_loss` plus the weight-decay term, with the same draws.
pub fn gradient(
    model: &Classifier,
    labeled: Batch<'_>,
    unlabeled: UnlabeledBatch<'_>,
    cfg: &TrainConfig,
    policy: &AugPolicy,
    seed: u64,
) -> Result<Gradient> {
    let (terms, _) = prepare_step(model, labeled, unlabeled, cfg, policy, seed)?;
    let g = terms.gradient(model, cfg.weight_decay);
    if !g.is_finite() {
        return Err(Error::Numeric("gradient is not finite".into()));
    }
    Ok(g)
}

/// The streams `prepare_step` uses, exposed so the parts can be replayed.
pub fn step_streams(seed: u64) -> [SeededRng; 3] {
    [
        SeededRng::derived(seed, &[STREAM_LABELED]),
        SeededRng::derived(seed, &[STREAM_WEAK]),
        SeededRng::derived(seed, &[STREAM_STRONG]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssl::model::feature_dim;

    fn flat(v: u8) -> VideoClip {
        VideoClip::filled("c", 1, 4, 4, 1, v).unwrap()
    }

    #[test]
    fn ce_of_uniform_is_ln_k() {
        let p = vec![0.125; 8];
        let mut y = vec![0.0; 8];
        y[3] = 1.0;
        assert!((cross_entropy(&p, &y) - 8f64.ln()).abs() < 1e-12);
        assert_eq!(cross_entropy(&y, &y), 0.0);
    }

    #[test]
    fn ce_is_clamped() {
        assert!((cross_entropy(&[0.0, 1.0], &[1.0, 0.0]) - -(LOG_EPS.ln())).abs() < 1e-9);
    }

    #[test]
    fn labeled_loss_uniform_and_averaging() {
        let m = Classifier::zeros(8, feature_dim(1, 1));
        let y = SoftLabel::one_hot(8, 2).unwrap();
        let weak = WeakAugConfig::identity();
        let one = labeled_loss(&m, &[flat(3)], std::slice::from_ref(&y), &weak, &mut SeededRng::new(0)).unwrap();
        assert!((one - 8f64.ln()).abs() < 1e-12);
        let two = labeled_loss(&m, &[flat(3), flat(3)], &[y.clone(), y], &weak, &mut SeededRng::new(0)).unwrap();
        assert!((one - two).abs() < 1e-15);
    }

    #[test]
    fn pseudo_label_threshold() {
        // logit gap ln 24 gives (0.96, 0.04)
        let mut m = Classifier::zeros(2, feature_dim(1, 1));
        m.bias_mut().copy_from_slice(&[24f64.ln(), 0.0]);
        let weak = WeakAugConfig::identity();
        let pl = confident_pseudo_labels(&m, &[flat(0)], 0.95, &weak, &mut SeededRng::new(0)).unwrap();
        assert!((pl.max_prob[0] - 0.96).abs() < 1e-12);
        assert_eq!(pl.confident(), vec![(0, SoftLabel::one_hot(2, 0).unwrap())]);

        let z = Classifier::zeros(2, feature_dim(1, 1));
        let pl = confident_pseudo_labels(&z, &[flat(0)], 0.95, &weak, &mut SeededRng::new(0)).unwrap();
        assert_eq!(pl.count(), 0);
        let pl = confident_pseudo_labels(&z, &[flat(0)], 1e-9, &weak, &mut SeededRng::new(0)).unwrap();
        assert_eq!(pl.count(), 1);
        assert!(confident_pseudo_labels(&z, &[flat(0)], 0.0, &weak, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn unlabeled_loss_uses_full_batch_normalizer() {
        let m = Classifier::zeros(8, feature_dim(1, 1));
        let clips: Vec<VideoClip> = (0..5).map(|i| flat(i as u8)).collect();
        let labels: Vec<SoftLabel> = (0..5).map(|i| SoftLabel::one_hot(8, i).unwrap()).collect();
        let pseudo = PseudoLabels {
            labels,
            max_prob: vec![1.0, 0.1, 1.0, 0.1, 0.1],
            tau: 0.95,
        };
        let policy = AugPolicy::identity(crate::policy::AugMode::IntraCascaded);
        let batch = UnlabeledBatch { clips: &clips, masks: None };
        let l = unlabeled_loss(&m, batch, &pseudo, &policy, &mut SeededRng::new(4)).unwrap();
        assert!((l - 0.4 * 8f64.ln()).abs() < 1e-12);

        let none = PseudoLabels {
            max_prob: vec![0.0; 5],
            ..pseudo
        };
        assert_eq!(unlabeled_loss(&m, batch, &none, &policy, &mut SeededRng::new(4)).unwrap(), 0.0);
    }

    #[test]
    fn zero_features_gradient_is_bias_only() {
        let m = Classifier::zeros(3, 4);
        let terms = StepTerms::supervised(vec![Term {
            x: vec![0.0; 4],
            y: vec![0.0, 1.0, 0.0],
        }]);
        let g = terms.gradient(&m, 0.0);
        assert!(g.weights.iter().all(|&v| v == 0.0));
        let third = 1.0 / 3.0;
        for (a, b) in g.bias.iter().zip([third, third - 1.0, third]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_on_terms() {
        let mut rng = SeededRng::new(11);
        let (k, d) = (3, 5);
        let mut m = Classifier::zeros(k, d);
        m.weights_mut().iter_mut().for_each(|w| *w = rng.uniform_range(-1.0, 1.0));
        let term = |rng: &mut SeededRng| Term {
            x: (0..d).map(|_| rng.uniform()).collect(),
            y: SoftLabel::one_hot(k, rng.below(k)).unwrap().probs().to_vec(),
        };
        let terms = StepTerms {
            labeled: (0..2).map(|_| term(&mut rng)).collect(),
            unlabeled: (0..2).map(|_| term(&mut rng)).collect(),
            b_l: 2,
            b_u: 5,
            lambda_u: 0.7,
        };
        let wd = 1e-3;
        let g = terms.gradient(&m, wd);
        let h = 1e-6;
        for i in 0..k * d {
            let mut plus = m.clone();
            plus.weights_mut()[i] += h;
            let mut minus = m.clone();
            minus.weights_mut()[i] -= h;
            let fd = (terms.objective(&plus, wd) - terms.objective(&minus, wd)) / (2.0 * h);
            assert!((fd - g.weights[i]).abs() < 1e-7, "{i}: {fd} vs {}", g.weights[i]);
        }
    }
}
