use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::motion::{classify, ClassifierParams, MotionLabel};
use crate::Scalar;

/// One classified object in one frame: its per-point errors and the true state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocRecord {
    pub errors: Vec<f64>,
    pub truth: MotionLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Sweep value that produced the point; `None` for the end anchors.
    pub sigma_bkg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Sorted by false positive rate, then true positive rate.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Evenly spaced sweep from `lo` to `hi` inclusive.
pub fn sigma_sweep(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect(),
    }
}

/// ROC of the motion-state classifier over a `sigma_bkg` sweep.
///
/// Static is the positive class. Each record is re-classified at every sweep
/// value with the other parameters of `base`; records the classifier cannot
/// decide, or whose truth is `Unknown`, are skipped. The curve is anchored at
/// (0, 0) and (1, 1) and integrated by the trapezoid rule.
pub fn roc_auc<T: Scalar>(
    records: &[RocRecord],
    sigma_values: &[f64],
    base: &ClassifierParams<T>,
) -> Result<RocCurve, EvalError> {
    let positives = records.iter().filter(|r| r.truth == MotionLabel::Static).count();
    let negatives = records.iter().filter(|r| r.truth == MotionLabel::Dynamic).count();
    if positives == 0 || negatives == 0 {
        return Err(EvalError::EmptyRecords(format!(
            "{positives} static and {negatives} dynamic records; both classes are required"
        )));
    }
    if sigma_values.is_empty() {
        return Err(EvalError::EmptyRecords("empty sigma sweep".into()));
    }
    let errors: Vec<Vec<T>> = records
        .iter()
        .map(|r| r.errors.iter().map(|e| T::lit(*e)).collect())
        .collect();
    let mut points = vec![
        RocPoint {
            fpr: 0.0,
            tpr: 0.0,
            sigma_bkg: None,
        },
        RocPoint {
            fpr: 1.0,
            tpr: 1.0,
            sigma_bkg: None,
        },
    ];
    for &sigma in sigma_values {
        let params = ClassifierParams {
            sigma_bkg: T::lit(sigma),
            ..*base
        };
        let (mut tp, mut fp, mut p, mut n) = (0usize, 0usize, 0usize, 0usize);
        for (r, e) in records.iter().zip(&errors) {
            let label = classify(e, &params).label;
            if label == MotionLabel::Unknown || r.truth == MotionLabel::Unknown {
                continue;
            }
            let predicted_static = label == MotionLabel::Static;
            if r.truth == MotionLabel::Static {
                p += 1;
                tp += predicted_static as usize;
            } else {
                n += 1;
                fp += predicted_static as usize;
            }
        }
        if p == 0 || n == 0 {
            return Err(EvalError::EmptyRecords("no decidable records of one class".into()));
        }
        points.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
            sigma_bkg: Some(sigma),
        });
    }
    points.sort_by(|a, b| (a.fpr, a.tpr).partial_cmp(&(b.fpr, b.tpr)).expect("finite rates"));
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> ClassifierParams<f64> {
        ClassifierParams::default()
    }

    #[test]
    fn separated_errors_give_unit_auc() {
        let mut records = Vec::new();
        for i in 0..20 {
            records.push(RocRecord {
                errors: vec![0.01 * (1 + i % 3) as f64; 12],
                truth: MotionLabel::Static,
            });
            records.push(RocRecord {
                errors: vec![1.0 + 0.1 * (i % 4) as f64; 12],
                truth: MotionLabel::Dynamic,
            });
        }
        let roc = roc_auc(&records, &sigma_sweep(0.0, 0.6, 61), &params()).unwrap();
        assert!((roc.auc - 1.0).abs() < 1e-12, "{}", roc.auc);
    }

    #[test]
    fn label_independent_scores_give_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let records: Vec<RocRecord> = (0..4000)
            .map(|_| {
                let scale = rng.random_range(0.0..1.5);
                RocRecord {
                    errors: (0..12).map(|_| scale * rng.random_range(0.5..1.0)).collect(),
                    truth: if rng.random_bool(0.5) {
                        MotionLabel::Static
                    } else {
                        MotionLabel::Dynamic
                    },
                }
            })
            .collect();
        let roc = roc_auc(&records, &sigma_sweep(0.0, 0.6, 61), &params()).unwrap();
        assert!((roc.auc - 0.5).abs() < 0.05, "{}", roc.auc);
    }

    #[test]
    fn curve_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let records: Vec<RocRecord> = (0..300)
            .map(|i| {
                let truth = if i % 2 == 0 {
                    MotionLabel::Static
                } else {
                    MotionLabel::Dynamic
                };
                let center = if truth == MotionLabel::Static { 0.1 } else { 0.5 };
                RocRecord {
                    errors: (0..14).map(|_| center * rng.random_range(0.2..2.0)).collect(),
                    truth,
                }
            })
            .collect();
        let roc = roc_auc(&records, &sigma_sweep(0.0, 0.6, 31), &params()).unwrap();
        for w in roc.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        assert!(roc.auc > 0.5 && roc.auc <= 1.0);
    }

    #[test]
    fn empty_records_rejected() {
        assert!(matches!(roc_auc::<f64>(&[], &[0.1], &params()), Err(EvalError::EmptyRecords(_))));
    }

    #[test]
    fn sweep_endpoints() {
        let s = sigma_sweep(0.0, 0.6, 7);
        assert_eq!(s.len(), 7);
        assert_eq!(s[0], 0.0);
        assert!((s[6] - 0.6).abs() < 1e-15);
    }
}
