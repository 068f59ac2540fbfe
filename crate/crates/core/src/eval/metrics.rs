use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores with binary labels (1 = positive).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: scores.len(),
                actual: labels.len(),
            });
        }
        if scores.is_empty() {
            return Err(Error::EmptyInput);
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if let Some(y) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidConfig(format!("label {y} is not 0 or 1")));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    fn require_both(&self) -> Result<(f64, f64)> {
        let p = self.positives();
        let n = self.len() - p;
        match (p, n) {
            (0, _) => Err(Error::SingleClass(0)),
            (_, 0) => Err(Error::SingleClass(1)),
            _ => Ok((p as f64, n as f64)),
        }
    }

    /// `(positives, negatives)` per group of equal scores, highest score first.
    fn groups_descending(&self) -> Vec<(f64, f64)> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut prev: Option<f64> = None;
        for i in idx {
            let s = self.scores[i];
            if prev != Some(s) {
                out.push((0.0, 0.0));
                prev = Some(s);
            }
            let g = out.last_mut().expect("group pushed");
            if self.labels[i] == 1 {
                g.0 += 1.0;
            } else {
                g.1 += 1.0;
            }
        }
        out
    }
}

/// Trapezoidal area under the ROC curve. Equal scores form one ROC step,
/// so the result equals `P(s+ > s-) + P(s+ = s-) / 2`.
pub fn auroc(s: &ScoredSet) -> Result<f64> {
    let (p, n) = s.require_both()?;
    let mut tp = 0.0;
    let mut area = 0.0;
    for (gp, gn) in s.groups_descending() {
        area += gn * (tp + gp / 2.0);
        tp += gp;
    }
    Ok(area / (p * n))
}

/// Right-continuous step area under the precision-recall curve: each group
/// of equal scores contributes its recall gain times the precision reached
/// after admitting the whole group.
pub fn auprc(s: &ScoredSet) -> Result<f64> {
    let (p, _) = s.require_both()?;
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut area = 0.0;
    for (gp, gn) in s.groups_descending() {
        tp += gp;
        fp += gn;
        area += gp / p * (tp / (tp + fp));
    }
    Ok(area)
}

/// Which side of the threshold is called positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// `score >= threshold` is positive.
    HigherPositive,
    /// `score < threshold` is positive.
    LowerPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub accuracy: f64,
    pub orientation: Orientation,
}

/// Accuracy of a fixed decision rule.
pub fn accuracy_at(s: &ScoredSet, threshold: f64, orientation: Orientation) -> f64 {
    let hits = s
        .scores
        .iter()
        .zip(&s.labels)
        .filter(|(&x, &y)| {
            let high = x >= threshold;
            let pos = match orientation {
                Orientation::HigherPositive => high,
                Orientation::LowerPositive => !high,
            };
            pos == (y == 1)
        })
        .count();
    hits as f64 / s.len() as f64
}

/// Exact best accuracy over all thresholds and both orientations.
///
/// Candidates are one value below the minimum, midpoints of consecutive
/// distinct scores and one value above the maximum; the first maximizer in
/// ascending threshold order wins, preferring `HigherPositive`.
pub fn best_threshold_accuracy(s: &ScoredSet) -> ThresholdResult {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]));
    let n = s.len() as f64;
    let total_pos = s.positives() as f64;
    // below the minimum every sample is called positive
    let lo = s.scores[idx[0]];
    let mut best = ThresholdResult {
        threshold: lo - 1.0,
        accuracy: total_pos / n,
        orientation: Orientation::HigherPositive,
    };
    let consider = |threshold: f64, correct_high: f64, best: &mut ThresholdResult| {
        let high = correct_high / n;
        let low = (n - correct_high) / n;
        if high > best.accuracy {
            *best = ThresholdResult { threshold, accuracy: high, orientation: Orientation::HigherPositive };
        }
        if low > best.accuracy {
            *best = ThresholdResult { threshold, accuracy: low, orientation: Orientation::LowerPositive };
        }
    };
    consider(lo - 1.0, total_pos, &mut best);
    // correct_high = negatives strictly below + positives at or above
    let mut correct = total_pos;
    let mut i = 0;
    while i < idx.len() {
        let v = s.scores[idx[i]];
        while i < idx.len() && s.scores[idx[i]] == v {
            correct += if s.labels[idx[i]] == 1 { -1.0 } else { 1.0 };
            i += 1;
        }
        let threshold = match idx.get(i) {
            Some(&j) => v + (s.scores[j] - v) / 2.0,
            None => v + 1.0,
        };
        consider(threshold, correct, &mut best);
    }
    best
}

/// The half-interval threshold search: repeatedly halves `[min, max]`
/// toward the quarter point with higher accuracy. Not guaranteed optimal;
/// returns every threshold it tried with its best-orientation accuracy.
pub fn bisection_probe(s: &ScoredSet, iterations: usize) -> Vec<(f64, f64)> {
    let eval = |t: f64| {
        accuracy_at(s, t, Orientation::HigherPositive).max(accuracy_at(s, t, Orientation::LowerPositive))
    };
    let (mut lo, mut hi) = s
        .scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mut tried = Vec::with_capacity(2 * iterations);
    for _ in 0..iterations {
        let mid = lo + (hi - lo) / 2.0;
        let quarter = (hi - lo) / 4.0;
        let (a, b) = (mid - quarter, mid + quarter);
        let (ea, eb) = (eval(a), eval(b));
        tried.push((a, ea));
        tried.push((b, eb));
        if ea >= eb {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    tried
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[f64], labels: &[u8]) -> ScoredSet {
        ScoredSet::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn separated_scores() {
        let s = set(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]);
        assert_eq!(auroc(&s).unwrap(), 1.0);
        assert_eq!(auprc(&s).unwrap(), 1.0);
        let t = best_threshold_accuracy(&s);
        assert_eq!(t.accuracy, 1.0);
        assert!(t.threshold > 0.2 && t.threshold < 0.8);
        assert_eq!(t.orientation, Orientation::HigherPositive);
    }

    #[test]
    fn all_equal_scores() {
        let s = set(&[0.5; 10], &[1, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(auroc(&s).unwrap(), 0.5);
        assert!((auprc(&s).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn single_class_rejected_for_ranking() {
        let s = set(&[0.1, 0.4], &[1, 1]);
        assert!(matches!(auroc(&s), Err(Error::SingleClass(1))));
        assert!(matches!(auprc(&s), Err(Error::SingleClass(1))));
        let t = best_threshold_accuracy(&s);
        assert_eq!(t.accuracy, 1.0);
        assert!(t.threshold < 0.1);
    }

    #[test]
    fn inverted_scores_report_lower_orientation() {
        let s = set(&[0.9, 0.8, 0.2, 0.1], &[0, 0, 1, 1]);
        assert_eq!(auroc(&s).unwrap(), 0.0);
        let t = best_threshold_accuracy(&s);
        assert_eq!(t.accuracy, 1.0);
        assert_eq!(t.orientation, Orientation::LowerPositive);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(ScoredSet::new(vec![], vec![]), Err(Error::EmptyInput)));
        assert!(matches!(ScoredSet::new(vec![1.0], vec![]), Err(Error::LengthMismatch { .. })));
        assert!(ScoredSet::new(vec![f64::NAN], vec![1]).is_err());
        assert!(ScoredSet::new(vec![1.0], vec![2]).is_err());
    }
}
