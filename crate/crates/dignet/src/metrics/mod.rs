//! Evaluation metrics.
//!
//! Alongside the standard success rate, macro-F1, mAP, and confusion matrix,
//! two range-aware measures are provided: distance-weighted accuracy (DWA),
//! which up-weights correct predictions on far subjects, and the gesture
//! stability score (GSS), the mean per-clip fraction of sliding windows that
//! agree with the clip's true label.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{DigError, Result};

/// Distance-weight slope: the farthest subject counts `1 + BETA` times a
/// near one.
pub const DWA_BETA: f64 = 1.6;
/// Near end of the evaluated distance range (m).
pub const DWA_RHO_MIN: f64 = 2.0;
/// Far end of the evaluated distance range (m).
pub const DWA_RHO_MAX: f64 = 30.0;

/// One evaluated clip.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub clip_id: String,
    pub true_label: usize,
    pub predicted: usize,
    /// Subject distance in meters.
    pub rho: f64,
    /// Per-window predictions in temporal order; used by GSS. May equal
    /// `[predicted]` for whole-clip evaluation.
    pub window_predictions: Vec<usize>,
    /// Per-class scores for ranking metrics.
    pub scores: Vec<f64>,
}

/// Accuracy over one distance interval `[lo, hi)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub accuracy: f64,
}

/// Aggregated evaluation results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub success_rate: f64,
    pub dwa_raw: f64,
    pub dwa_normalized: f64,
    pub gss: f64,
    pub macro_f1: f64,
    pub mean_ap: f64,
    /// `confusion[i][j]` counts true class `i` predicted as `j`.
    pub confusion: Vec<Vec<usize>>,
    /// Only bins containing samples appear.
    pub distance_bins: Vec<DistanceBin>,
    /// Classes with no true samples, excluded from the macro averages.
    pub absent_classes: Vec<usize>,
}

fn require_nonempty(records: &[PredictionRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(DigError::Validation("no prediction records".into()));
    }
    Ok(())
}

/// Fraction of clips whose prediction equals the true label.
pub fn success_rate(records: &[PredictionRecord]) -> Result<f64> {
    require_nonempty(records)?;
    let hits = records.iter().filter(|r| r.predicted == r.true_label).count();
    Ok(hits as f64 / records.len() as f64)
}

fn distance_weight(rho: f64, beta: f64, rho_min: f64, rho_max: f64) -> f64 {
    let t = ((rho - rho_min) / (rho_max - rho_min)).clamp(0.0, 1.0);
    1.0 + beta * t
}

/// Distance-weighted accuracy: `(raw, normalized)`.
///
/// Raw divides the weighted hit count by the number of clips and can exceed
/// one (up to `1 + beta`); normalized divides by the total weight and stays
/// in `[0, 1]`.
pub fn dwa(
    records: &[PredictionRecord],
    beta: f64,
    rho_min: f64,
    rho_max: f64,
) -> Result<(f64, f64)> {
    require_nonempty(records)?;
    let mut weighted_hits = 0.0;
    let mut total_weight = 0.0;
    for r in records {
        let w = distance_weight(r.rho, beta, rho_min, rho_max);
        total_weight += w;
        if r.predicted == r.true_label {
            weighted_hits += w;
        }
    }
    Ok((weighted_hits / records.len() as f64, weighted_hits / total_weight))
}

/// Gesture stability score: mean over clips of the fraction of windows
/// predicted as the clip's true label.
pub fn gss(records: &[PredictionRecord]) -> Result<f64> {
    require_nonempty(records)?;
    let mut total = 0.0;
    for r in records {
        if r.window_predictions.is_empty() {
            return Err(DigError::Validation(format!(
                "clip {} has no window predictions",
                r.clip_id
            )));
        }
        let hits = r
            .window_predictions
            .iter()
            .filter(|&&p| p == r.true_label)
            .count();
        total += hits as f64 / r.window_predictions.len() as f64;
    }
    Ok(total / records.len() as f64)
}

/// `confusion[i][j]` counts true class `i` predicted as `j`.
pub fn confusion_matrix(records: &[PredictionRecord], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    let mut m = vec![vec![0usize; num_classes]; num_classes];
    for r in records {
        if r.true_label >= num_classes || r.predicted >= num_classes {
            return Err(DigError::Validation(format!(
                "clip {}: label out of range for {num_classes} classes",
                r.clip_id
            )));
        }
        m[r.true_label][r.predicted] += 1;
    }
    Ok(m)
}

/// Macro-F1 over classes with at least one true sample; returns the score
/// and the excluded (absent) classes.
pub fn macro_f1(
    records: &[PredictionRecord],
    num_classes: usize,
) -> Result<(f64, Vec<usize>)> {
    require_nonempty(records)?;
    let cm = confusion_matrix(records, num_classes)?;
    let mut sum = 0.0;
    let mut present = 0usize;
    let mut absent = Vec::new();
    for c in 0..num_classes {
        let tp = cm[c][c] as f64;
        let support: usize = cm[c].iter().sum();
        if support == 0 {
            absent.push(c);
            continue;
        }
        let fp: f64 = (0..num_classes).map(|i| cm[i][c]).sum::<usize>() as f64 - tp;
        let fnn = support as f64 - tp;
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fnn) };
        sum += f1;
        present += 1;
    }
    if !absent.is_empty() {
        log::warn!("macro-F1 excludes {} absent class(es): {absent:?}", absent.len());
    }
    if present == 0 {
        return Err(DigError::Validation("no class has any true sample".into()));
    }
    Ok((sum / present as f64, absent))
}

/// Average precision for one class: mean of precision at each positive's
/// rank, scores sorted descending (ties broken by record order).
pub fn average_precision(records: &[PredictionRecord], class: usize) -> Result<Option<f64>> {
    require_nonempty(records)?;
    let mut ranked: Vec<(f64, bool)> = records
        .iter()
        .map(|r| {
            let score = *r.scores.get(class).ok_or_else(|| {
                DigError::Validation(format!("clip {}: missing score for class {class}", r.clip_id))
            })?;
            Ok((score, r.true_label == class))
        })
        .collect::<Result<_>>()?;
    let positives = ranked.iter().filter(|&&(_, p)| p).count();
    if positives == 0 {
        return Ok(None);
    }
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &(_, pos)) in ranked.iter().enumerate() {
        if pos {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(Some(sum / positives as f64))
}

/// Mean AP over classes with positives; absent classes are excluded.
pub fn mean_ap(records: &[PredictionRecord], num_classes: usize) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for c in 0..num_classes {
        if let Some(ap) = average_precision(records, c)? {
            sum += ap;
            n += 1;
        }
    }
    if n == 0 {
        return Err(DigError::Validation("no class has any true sample".into()));
    }
    Ok(sum / n as f64)
}

/// Per-interval accuracy over `edges` (half-open bins, last bin closed).
/// Empty bins are omitted rather than reported as zero.
pub fn distance_bins(records: &[PredictionRecord], edges: &[f64]) -> Result<Vec<DistanceBin>> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DigError::Config("bin edges must be strictly increasing".into()));
    }
    let mut out = Vec::new();
    for b in 0..edges.len() - 1 {
        let (lo, hi) = (edges[b], edges[b + 1]);
        let last = b == edges.len() - 2;
        let in_bin: Vec<&PredictionRecord> = records
            .iter()
            .filter(|r| r.rho >= lo && (r.rho < hi || (last && r.rho == hi)))
            .collect();
        if in_bin.is_empty() {
            continue;
        }
        let hits = in_bin.iter().filter(|r| r.predicted == r.true_label).count();
        out.push(DistanceBin {
            lo,
            hi,
            count: in_bin.len(),
            accuracy: hits as f64 / in_bin.len() as f64,
        });
    }
    Ok(out)
}

/// Computes every metric in one pass over the records.
pub fn compute_report(
    records: &[PredictionRecord],
    num_classes: usize,
    edges: &[f64],
) -> Result<MetricsReport> {
    let (dwa_raw, dwa_normalized) = dwa(records, DWA_BETA, DWA_RHO_MIN, DWA_RHO_MAX)?;
    let (macro_f1, absent) = macro_f1(records, num_classes)?;
    Ok(MetricsReport {
        success_rate: success_rate(records)?,
        dwa_raw,
        dwa_normalized,
        gss: gss(records)?,
        macro_f1,
        mean_ap: mean_ap(records, num_classes)?,
        confusion: confusion_matrix(records, num_classes)?,
        distance_bins: distance_bins(records, edges)?,
        absent_classes: absent,
    })
}

#[allow(dead_code)]
fn classes_present(records: &[PredictionRecord]) -> BTreeSet<usize> {
    records.iter().map(|r| r.true_label).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(true_label: usize, predicted: usize, rho: f64) -> PredictionRecord {
        let mut scores = vec![0.0; 13];
        scores[predicted] = 1.0;
        PredictionRecord {
            clip_id: format!("c{true_label}-{predicted}-{rho}"),
            true_label,
            predicted,
            rho,
            window_predictions: vec![predicted],
            scores,
        }
    }

    #[test]
    fn dwa_all_correct_near_is_one() {
        let records: Vec<_> = (0..4).map(|c| rec(c, c, 2.0)).collect();
        let (raw, norm) = dwa(&records, DWA_BETA, DWA_RHO_MIN, DWA_RHO_MAX).unwrap();
        assert!((raw - 1.0).abs() < 1e-12 && (norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dwa_all_wrong_is_zero() {
        let records: Vec<_> = (0..4).map(|c| rec(c, (c + 1) % 13, 20.0)).collect();
        let (raw, norm) = dwa(&records, DWA_BETA, DWA_RHO_MIN, DWA_RHO_MAX).unwrap();
        assert_eq!((raw, norm), (0.0, 0.0));
    }

    #[test]
    fn dwa_hand_computed_two_sample_case() {
        // Correct at 30 m (weight 2.6), wrong at 2 m (weight 1):
        // raw = 2.6 / 2 = 1.3, normalized = 2.6 / 3.6.
        let records = vec![rec(1, 1, 30.0), rec(2, 3, 2.0)];
        let (raw, norm) = dwa(&records, DWA_BETA, DWA_RHO_MIN, DWA_RHO_MAX).unwrap();
        assert!((raw - 1.3).abs() < 1e-12);
        assert!((norm - 2.6 / 3.6).abs() < 1e-12);
    }

    #[test]
    fn dwa_collapses_to_success_rate_at_constant_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let records: Vec<_> = (0..50)
            .map(|i| rec(i % 13, if rng.gen_bool(0.6) { i % 13 } else { (i + 1) % 13 }, 17.0))
            .collect();
        let sr = success_rate(&records).unwrap();
        let (raw, norm) = dwa(&records, DWA_BETA, DWA_RHO_MIN, DWA_RHO_MAX).unwrap();
        assert!((norm - sr).abs() < 1e-12);
        let w = 1.0 + DWA_BETA * 15.0 / 28.0;
        assert!((raw - sr * w).abs() < 1e-12);
    }

    #[test]
    fn dwa_raw_stays_in_declared_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let records: Vec<_> = (0..200)
            .map(|i| {
                rec(
                    i % 13,
                    if rng.gen_bool(0.5) { i % 13 } else { rng.gen_range(0..13) },
                    rng.gen_range(2.0..30.0),
                )
            })
            .collect();
        let (raw, norm) = dwa(&records, DWA_BETA, DWA_RHO_MIN, DWA_RHO_MAX).unwrap();
        assert!((0.0..=1.0 + DWA_BETA).contains(&raw));
        assert!((0.0..=1.0).contains(&norm));
    }

    #[test]
    fn gss_hand_cases() {
        let mut r = rec(3, 3, 10.0);
        r.window_predictions = vec![3, 0, 3, 1];
        assert!((gss(&[r]).unwrap() - 0.5).abs() < 1e-12);

        let perfect: Vec<_> = (0..5)
            .map(|c| {
                let mut r = rec(c, c, 5.0);
                r.window_predictions = vec![c; 7];
                r
            })
            .collect();
        assert_eq!(gss(&perfect).unwrap(), 1.0);
    }

    #[test]
    fn gss_is_one_only_when_every_window_is_correct() {
        let mut a = rec(0, 0, 4.0);
        a.window_predictions = vec![0, 0, 0];
        let mut b = rec(1, 1, 4.0);
        b.window_predictions = vec![1, 1, 0];
        assert!(gss(&[a, b]).unwrap() < 1.0);
    }

    #[test]
    fn gss_rejects_windowless_record() {
        let mut r = rec(0, 0, 4.0);
        r.window_predictions.clear();
        assert!(gss(&[r]).is_err());
    }

    #[test]
    fn perfect_predictions_give_perfect_scores() {
        let records: Vec<_> = (0..13).map(|c| rec(c, c, 10.0)).collect();
        let report = compute_report(&records, 13, &[2.0, 16.0, 30.0]).unwrap();
        assert_eq!(report.success_rate, 1.0);
        assert_eq!(report.macro_f1, 1.0);
        assert_eq!(report.mean_ap, 1.0);
        assert_eq!(report.gss, 1.0);
        for (i, row) in report.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, usize::from(i == j));
            }
        }
        assert!(report.absent_classes.is_empty());
    }

    #[test]
    fn one_class_collapse_on_balanced_set() {
        let records: Vec<_> = (0..13).map(|c| rec(c, 0, 10.0)).collect();
        assert!((success_rate(&records).unwrap() - 1.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_total_equals_record_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let records: Vec<_> = (0..77)
            .map(|_| rec(rng.gen_range(0..13), rng.gen_range(0..13), 10.0))
            .collect();
        let cm = confusion_matrix(&records, 13).unwrap();
        let total: usize = cm.iter().flatten().sum();
        assert_eq!(total, 77);
    }

    /// Threshold-sweep AP oracle: area under the precision-recall steps.
    fn ap_oracle(scored: &[(f64, bool)]) -> f64 {
        let mut ranked = scored.to_vec();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let positives = ranked.iter().filter(|&&(_, p)| p).count() as f64;
        let (mut tp, mut area, mut prev_recall) = (0.0, 0.0, 0.0);
        for (k, &(_, pos)) in ranked.iter().enumerate() {
            if pos {
                tp += 1.0;
                let recall = tp / positives;
                let precision = tp / (k as f64 + 1.0);
                area += (recall - prev_recall) * precision;
                prev_recall = recall;
            }
        }
        area
    }

    #[test]
    fn average_precision_matches_sweep_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..20 {
            let records: Vec<_> = (0..15)
                .map(|i| {
                    let mut r = rec(usize::from(rng.gen_bool(0.4)), 0, 10.0);
                    r.clip_id = format!("t{trial}-{i}");
                    r.scores = (0..13).map(|_| rng.gen_range(0.0..1.0)).collect();
                    r
                })
                .collect();
            let scored: Vec<(f64, bool)> =
                records.iter().map(|r| (r.scores[1], r.true_label == 1)).collect();
            if !scored.iter().any(|&(_, p)| p) {
                continue;
            }
            let ap = average_precision(&records, 1).unwrap().unwrap();
            assert!((ap - ap_oracle(&scored)).abs() < 1e-12, "trial {trial}");
        }
    }

    #[test]
    fn three_sample_ap_hand_case() {
        // Scores for class 0: 0.9 (pos), 0.8 (neg), 0.3 (pos).
        // Precision at hit ranks: 1/1 and 2/3; AP = (1 + 2/3) / 2 = 5/6.
        let mut a = rec(0, 0, 5.0);
        a.scores[0] = 0.9;
        let mut b = rec(1, 1, 5.0);
        b.scores[0] = 0.8;
        let mut c = rec(0, 1, 5.0);
        c.scores = vec![0.0; 13];
        c.scores[0] = 0.3;
        let ap = average_precision(&[a, b, c], 0).unwrap().unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn absent_class_is_excluded_with_notice() {
        let records: Vec<_> = (0..5).map(|c| rec(c, c, 10.0)).collect();
        let (f1, absent) = macro_f1(&records, 13).unwrap();
        assert_eq!(f1, 1.0);
        assert_eq!(absent, (5..13).collect::<Vec<_>>());
    }

    #[test]
    fn empty_distance_bins_are_omitted() {
        let records = vec![rec(0, 0, 3.0), rec(1, 1, 29.0)];
        let bins = distance_bins(&records, &[2.0, 9.0, 16.0, 23.0, 30.0]).unwrap();
        assert_eq!(bins.len(), 2);
        assert_eq!((bins[0].lo, bins[0].hi), (2.0, 9.0));
        assert_eq!((bins[1].lo, bins[1].hi), (23.0, 30.0));
        assert!(bins.iter().all(|b| b.accuracy == 1.0 && b.count == 1));
    }

    #[test]
    fn last_bin_includes_upper_edge() {
        let records = vec![rec(0, 0, 30.0)];
        let bins = distance_bins(&records, &[2.0, 16.0, 30.0]).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].count, 1);
    }

    #[test]
    fn report_fields_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let records: Vec<_> = (0..120)
            .map(|i| {
                let t = i % 13;
                let p = if rng.gen_bool(0.7) { t } else { rng.gen_range(0..13) };
                let mut r = rec(t, p, rng.gen_range(2.0..30.0));
                r.window_predictions = (0..4)
                    .map(|_| if rng.gen_bool(0.8) { t } else { rng.gen_range(0..13) })
                    .collect();
                r.scores = (0..13).map(|_| rng.gen_range(0.0..1.0)).collect();
                r
            })
            .collect();
        let rep = compute_report(&records, 13, &[2.0, 9.0, 16.0, 23.0, 30.0]).unwrap();
        for v in [rep.success_rate, rep.dwa_normalized, rep.gss, rep.macro_f1, rep.mean_ap] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert!((0.0..=1.0 + DWA_BETA).contains(&rep.dwa_raw));
        let total: usize = rep.confusion.iter().flatten().sum();
        assert_eq!(total, 120);
    }
}
