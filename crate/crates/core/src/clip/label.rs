use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Probability vector over K ≥ 2 classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel {
    probs: Vec<f64>,
}

impl SoftLabel {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Validation(format!(
                "labels need at least 2 classes, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Validation("label entries must be finite and non-negative".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Validation(format!("label sums to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn one_hot(num_classes: usize, class: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::Validation(format!(
                "class {class} out of range for {num_classes} classes"
            )));
        }
        let mut probs = vec![0.0; num_classes];
        probs[class] = 1.0;
        Self::new(probs)
    }

    /// Uniform over `num_classes`.
    pub fn uniform(num_classes: usize) -> Result<Self> {
        Self::new(vec![1.0 / num_classes as f64; num_classes])
    }

    /// `weight · self + (1 − weight) · other`.
    pub fn mix(&self, weight: f64, other: &SoftLabel) -> Result<SoftLabel> {
        if self.probs.len() != other.probs.len() {
            return Err(Error::Validation(format!(
                "cannot mix labels over {} and {} classes",
                self.probs.len(),
                other.probs.len()
            )));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| weight * a + (1.0 - weight) * b)
            .collect();
        SoftLabel::new(probs)
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.probs[self.argmax()]
    }
}

/// `clip_id,class_index` rows. A first row whose second field is not an
/// integer is treated as a header.
pub fn parse_label_lines(text: &str) -> Result<BTreeMap<String, usize>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id, class) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("label file line {}: expected 2 fields", n + 1)))?;
        match class.trim().parse::<usize>() {
            Ok(k) => {
                out.insert(id.trim().to_string(), k);
            }
            Err(_) if n == 0 => continue,
            Err(_) => {
                return Err(Error::Format(format!(
                    "label file line {}: bad class index '{}'",
                    n + 1,
                    class.trim()
                )))
            }
        }
    }
    Ok(out)
}

pub fn load_label_file(path: impl AsRef<Path>) -> Result<BTreeMap<String, usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_label_lines(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_sum_and_size() {
        assert!(SoftLabel::new(vec![1.0]).is_err());
        assert!(SoftLabel::new(vec![0.5, 0.4]).is_err());
        assert!(SoftLabel::new(vec![1.5, -0.5]).is_err());
        assert!(SoftLabel::new(vec![0.25, 0.75]).is_ok());
        assert!(SoftLabel::one_hot(3, 3).is_err());
    }

    #[test]
    fn argmax_and_mix() {
        let a = SoftLabel::one_hot(4, 2).unwrap();
        let b = SoftLabel::one_hot(4, 0).unwrap();
        assert_eq!(a.argmax(), 2);
        let m = a.mix(0.75, &b).unwrap();
        assert_eq!(m.probs(), &[0.25, 0.0, 0.75, 0.0]);
        assert!(a.mix(0.5, &SoftLabel::one_hot(3, 0).unwrap()).is_err());
    }

    #[test]
    fn label_csv() {
        let parsed = parse_label_lines("clip_id,class_index\nv1,3\nv2, 0\n").unwrap();
        assert_eq!(parsed["v1"], 3);
        assert_eq!(parsed["v2"], 0);
        assert!(parse_label_lines("v1,3\nv2,x\n").is_err());
    }
}
