//! Detection matching, RMSE and fraction of resolved targets.

/// Outcome of pairing estimates with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `(truth index, estimate index)` for every detected target.
    pub pairs: Vec<(usize, usize)>,
    /// Estimates left without a target.
    pub false_alarms: usize,
}

impl Matching {
    pub fn detected(&self) -> usize {
        self.pairs.len()
    }

    /// Squared range errors of the detected targets.
    pub fn squared_errors(&self, estimates: &[f64], truth: &[f64]) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|&(t, e)| (estimates[e] - truth[t]).powi(2))
            .collect()
    }
}

/// Greedy one-to-one nearest-neighbour pairing. Pairs are taken in order of
/// increasing distance; a target counts as detected when its estimate is
/// strictly closer than `radius`.
pub fn match_detections(estimates: &[f64], truth: &[f64], radius: f64) -> Matching {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (t, &r) in truth.iter().enumerate() {
        for (e, &x) in estimates.iter().enumerate() {
            let d = (x - r).abs();
            if d < radius {
                cands.push((d, t, e));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut truth_used = vec![false; truth.len()];
    let mut est_used = vec![false; estimates.len()];
    let mut pairs = Vec::new();
    for (_, t, e) in cands {
        if !truth_used[t] && !est_used[e] {
            truth_used[t] = true;
            est_used[e] = true;
            pairs.push((t, e));
        }
    }
    pairs.sort_unstable();
    Matching {
        false_alarms: estimates.len() - pairs.len(),
        pairs,
    }
}

/// Root mean square of squared errors; `None` when empty.
pub fn rmse(squared_errors: &[f64]) -> Option<f64> {
    if squared_errors.is_empty() {
        None
    } else {
        Some((squared_errors.iter().sum::<f64>() / squared_errors.len() as f64).sqrt())
    }
}

/// Targets detected by a method over targets detected by the full band;
/// `None` when the full band detected nothing.
pub fn compute_frt(method_detections: usize, fullband_detections: usize) -> Option<f64> {
    if fullband_detections == 0 {
        None
    } else {
        Some(method_detections as f64 / fullband_detections as f64)
    }
}

/// Median of the present values.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Mean and population standard deviation.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn both_detected_with_small_error() {
        let m = match_detections(&[2.0, 3.1], &[2.0, 3.0], 1.0);
        assert_eq!(m.detected(), 2);
        let r = rmse(&m.squared_errors(&[2.0, 3.1], &[2.0, 3.0])).unwrap();
        assert!((r - (0.01f64 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn boundary_is_not_a_detection() {
        let m = match_detections(&[2.5], &[2.0, 3.0], 0.5);
        assert_eq!(m.detected(), 0);
        assert_eq!(m.false_alarms, 1);
        assert_eq!(rmse(&m.squared_errors(&[2.5], &[2.0, 3.0])), None);
    }

    #[test]
    fn exact_estimates() {
        let t = [1.0, 4.0, 9.0];
        let m = match_detections(&t, &t, 0.3);
        assert_eq!(m.detected(), 3);
        assert_eq!(rmse(&m.squared_errors(&t, &t)), Some(0.0));
    }

    #[test]
    fn one_estimate_serves_one_target() {
        // Both targets are within reach of 2.4 but only one can claim it.
        let m = match_detections(&[2.4], &[2.0, 2.5], 1.0);
        assert_eq!(m.pairs, vec![(1, 0)]);
    }

    #[test]
    fn frt_examples() {
        assert_eq!(compute_frt(9, 10), Some(0.9));
        assert_eq!(compute_frt(10, 10), Some(1.0));
        assert_eq!(compute_frt(3, 0), None);
    }

    #[test]
    fn median_and_spread() {
        assert_eq!(median([3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(std::iter::empty()), None);
        let (m, s) = mean_std([1.0, 3.0]).unwrap();
        assert_eq!((m, s), (2.0, 1.0));
    }

    proptest! {
        #[test]
        fn pairing_is_one_to_one_and_within_radius(
            est in proptest::collection::vec(0.0f64..10.0, 0..8),
            truth in proptest::collection::vec(0.0f64..10.0, 1..8),
            radius in 0.01f64..2.0,
        ) {
            let m = match_detections(&est, &truth, radius);
            let mut ts: Vec<usize> = m.pairs.iter().map(|p| p.0).collect();
            let mut es: Vec<usize> = m.pairs.iter().map(|p| p.1).collect();
            ts.dedup();
            es.sort_unstable();
            es.dedup();
            prop_assert_eq!(ts.len(), m.pairs.len());
            prop_assert_eq!(es.len(), m.pairs.len());
            for &(t, e) in &m.pairs {
                prop_assert!((est[e] - truth[t]).abs() < radius);
            }
            prop_assert_eq!(m.false_alarms + m.detected(), est.len());
            prop_assert!(m.detected() <= truth.len());
        }

        #[test]
        fn self_frt_is_one(n in 1usize..1000) {
            prop_assert_eq!(compute_frt(n, n), Some(1.0));
        }
    }
}
