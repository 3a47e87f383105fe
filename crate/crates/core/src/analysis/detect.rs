use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AnnotatedCloud;
use crate::numeric::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// `|L_{n,t}f|` divided by its median over all points (raw when the median is 0).
    pub scores: Vec<f64>,
    pub median: f64,
    pub q: f64,
    /// Flagged point indices in ascending order.
    pub flagged: Vec<usize>,
    /// All scores zero: the flagged set is just the lowest indices.
    pub degenerate: bool,
    /// Ground-truth radius in units of `√t`, when annotations were used.
    pub truth_radius: Option<f64>,
    pub confusion: Option<Confusion>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Flags the `⌈q·n⌉` points with the largest `|L_{n,t}f|`, breaking ties by
/// lower index. With annotations, a point counts as truly singular when it
/// lies within `truth_radius·√t` of a singular set.
pub fn detect(
    cloud: &AnnotatedCloud,
    operator_values: &[f64],
    t: f64,
    q: f64,
    truth_radius: f64,
) -> Result<DetectionReport> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", format!("must lie in (0, 1), got {q}")));
    }
    let n = operator_values.len();
    if n != cloud.len() || n == 0 {
        return Err(Error::param("values", "one operator value per cloud point required"));
    }
    let abs: Vec<f64> = operator_values.iter().map(|v| v.abs()).collect();
    let med = median(&abs);
    let scores: Vec<f64> = if med > 0.0 { abs.iter().map(|v| v / med).collect() } else { abs };
    let degenerate = scores.iter().all(|s| *s == 0.0);
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut flagged = order[..k].to_vec();
    flagged.sort_unstable();

    let (truth_radius, confusion, precision, recall) = match cloud.annotations() {
        Some(ann) => {
            let limit = truth_radius * t.sqrt();
            let mut is_flagged = vec![false; n];
            for &i in &flagged {
                is_flagged[i] = true;
            }
            let mut c = Confusion { true_positive: 0, false_positive: 0, false_negative: 0, true_negative: 0 };
            for (i, a) in ann.iter().enumerate() {
                let truth = a.kind.is_some() && a.r_ambient <= limit;
                match (is_flagged[i], truth) {
                    (true, true) => c.true_positive += 1,
                    (true, false) => c.false_positive += 1,
                    (false, true) => c.false_negative += 1,
                    (false, false) => c.true_negative += 1,
                }
            }
            let precision = (!degenerate).then(|| c.true_positive as f64 / k as f64);
            let positives = c.true_positive + c.false_negative;
            let recall = (!degenerate && positives > 0).then(|| c.true_positive as f64 / positives as f64);
            (Some(truth_radius), Some(c), precision, recall)
        }
        None => (None, None, None, None),
    };
    Ok(DetectionReport { scores, median: med, q, flagged, degenerate, truth_radius, confusion, precision, recall })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_scores_are_degenerate() {
        let cloud = AnnotatedCloud::external(1, 1, (0..10).map(|i| i as f64).collect(), None).unwrap();
        let r = detect(&cloud, &[0.0; 10], 1e-3, 0.25, 5.0).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.flagged, vec![0, 1, 2]);
        assert!(r.confusion.is_none() && r.precision.is_none());
    }

    #[test]
    fn top_scores_with_index_ties() {
        let cloud = AnnotatedCloud::external(1, 1, vec![0.0; 6], None).unwrap();
        let r = detect(&cloud, &[1.0, 5.0, -5.0, 2.0, 5.0, 0.5], 1e-3, 0.5, 5.0).unwrap();
        assert_eq!(r.flagged, vec![1, 2, 4]);
        let r = detect(&cloud, &[1.0, 5.0, -5.0, 2.0, 5.0, 0.5], 1e-3, 0.3, 5.0).unwrap();
        assert_eq!(r.flagged, vec![1, 2]);
        assert!(detect(&cloud, &[0.0; 6], 1e-3, 1.0, 5.0).is_err());
    }
}
