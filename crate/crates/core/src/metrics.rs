//! Confusion-matrix metrics. Illicit is the positive class and F-beta with
//! β=2 is the headline number everywhere.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f2: f64,
    pub threshold: f64,
}

/// Standard counts, positives first: `(tp, fp, fn, tn)`.
pub fn confusion(pred: &[bool], truth: &[bool]) -> Result<(usize, usize, usize, usize)> {
    if pred.len() != truth.len() {
        return Err(Error::shape(
            "confusion",
            format!("{} predictions for {} labels", pred.len(), truth.len()),
        ));
    }
    let mut counts = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => counts.0 += 1,
            (true, false) => counts.1 += 1,
            (false, true) => counts.2 += 1,
            (false, false) => counts.3 += 1,
        }
    }
    Ok(counts)
}

/// `(1+β²)·P·R / (β²·P + R)`, defined as 0 when the denominator is 0.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

/// Derive the full report from counts, with zero-division conventions:
/// precision is 0 when no positives are predicted, recall is 0 when there
/// are no positive labels.
pub fn report(counts: (usize, usize, usize, usize), threshold: f64) -> MetricsReport {
    let (tp, fp, fn_, tn) = counts;
    let ratio = |num: usize, denom: usize| {
        if denom == 0 {
            0.0
        } else {
            num as f64 / denom as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    MetricsReport {
        tp,
        fp,
        fn_,
        tn,
        precision,
        recall,
        f1: f_beta(precision, recall, 1.0),
        f2: f_beta(precision, recall, 2.0),
        threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_basics() {
        assert_eq!(
            confusion(&[true, true, false], &[true, true, false]).unwrap(),
            (2, 0, 0, 1)
        );
        assert_eq!(
            confusion(&[false; 5], &[true, true, true, false, false]).unwrap(),
            (0, 0, 3, 2)
        );
        assert!(confusion(&[true], &[true, false]).is_err());
    }

    #[test]
    fn hand_counted_fixture() {
        let pred = [true, true, true, false, false, false];
        let truth = [true, true, false, true, false, false];
        assert_eq!(confusion(&pred, &truth).unwrap(), (2, 1, 1, 2));
        let r = report((2, 1, 1, 2), 0.5);
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.f2 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f_beta_values() {
        for beta in [0.5, 1.0, 2.0, 3.0] {
            assert!((f_beta(0.4, 0.4, beta) - 0.4).abs() < 1e-15);
        }
        assert!((f_beta(0.5, 1.0, 2.0) - 5.0 * 0.5 / 3.0).abs() < 1e-15);
        assert!((f_beta(0.5, 1.0, 2.0) - 0.8333333333333334).abs() < 1e-12);
        assert!((f_beta(0.5, 1.0, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f_beta(0.0, 0.0, 2.0), 0.0);
    }

    #[test]
    fn f1_matches_harmonic_mean() {
        for (p, r) in [(0.3, 0.9), (0.75, 0.5), (1.0, 1.0), (0.01, 0.99)] {
            let expected = 2.0 * p * r / (p + r);
            assert!((f_beta(p, r, 1.0) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_report_is_all_zero() {
        let r = report((0, 0, 0, 10), 0.25);
        assert_eq!((r.precision, r.recall, r.f1, r.f2), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.tn, 10);
        assert_eq!(r.threshold, 0.25);
    }

    #[test]
    fn serialization_uses_fn_key() {
        let r = report((1, 2, 3, 4), 0.1);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"fn\":3"), "{json}");
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
