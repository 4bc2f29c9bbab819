//! Received-signal-strength history and route-failure prediction.
//!
//! Each node keeps the last three `(time, power)` samples heard from every
//! neighbor. A quadratic through those samples, in Lagrange form, is
//! extrapolated to the predict time `t3 + T_DP`, where the discovery period
//! `T_DP` is how long a preemptive re-discovery needs.

use thiserror::Error;

/// Samples closer together than this are coalesced, newest wins.
pub const DEFAULT_COALESCE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RssSample {
    pub time: f64,
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PredictError {
    #[error("prediction needs three samples with distinct timestamps")]
    NotEnoughSamples,
}

/// Ring of at most three samples, oldest first, with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct RssHistory {
    samples: [RssSample; 3],
    len: usize,
    epsilon: f64,
}

impl Default for RssHistory {
    fn default() -> Self {
        Self::new()
    }
}

impl RssHistory {
    pub fn new() -> Self {
        Self::with_epsilon(DEFAULT_COALESCE_EPSILON)
    }

    pub fn with_epsilon(epsilon: f64) -> Self {
        RssHistory {
            samples: [RssSample {
                time: 0.0,
                power: 0.0,
            }; 3],
            len: 0,
            epsilon,
        }
    }

    pub fn from_samples(samples: &[(f64, f64)]) -> Self {
        let mut h = Self::new();
        for &(t, p) in samples {
            h.record(t, p);
        }
        h
    }

    /// Add a sample. A sample within `epsilon` of the newest one replaces it;
    /// a sample older than the newest one is ignored.
    pub fn record(&mut self, time: f64, power: f64) {
        debug_assert!(power >= 0.0, "negative power {power}");
        let sample = RssSample { time, power };
        if let Some(last) = self.last() {
            if time < last.time {
                return;
            }
            if time - last.time < self.epsilon {
                self.samples[self.len - 1] = sample;
                return;
            }
        }
        if self.len == 3 {
            self.samples.rotate_left(1);
            self.samples[2] = sample;
        } else {
            self.samples[self.len] = sample;
            self.len += 1;
        }
    }

    pub fn samples(&self) -> &[RssSample] {
        &self.samples[..self.len]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == 3
    }

    pub fn last(&self) -> Option<RssSample> {
        self.samples().last().copied()
    }

    pub fn clear(&mut self) {
        self.len = 0;
    }
}

/// Quadratic through the three stored samples, evaluated at `t_pt`.
///
/// The result is not clamped and may be negative when extrapolating.
pub fn lagrange_predict(history: &RssHistory, t_pt: f64) -> Result<f64, PredictError> {
    if !history.is_full() {
        return Err(PredictError::NotEnoughSamples);
    }
    let [s1, s2, s3] = history.samples;
    let (t1, t2, t3) = (s1.time, s2.time, s3.time);
    if t1 == t2 || t1 == t3 || t2 == t3 {
        return Err(PredictError::NotEnoughSamples);
    }
    let l1 = (t_pt - t2) * (t_pt - t3) / ((t1 - t2) * (t1 - t3));
    let l2 = (t_pt - t1) * (t_pt - t3) / ((t2 - t1) * (t2 - t3));
    let l3 = (t_pt - t1) * (t_pt - t2) / ((t3 - t1) * (t3 - t2));
    Ok(l1 * s1.power + l2 * s2.power + l3 * s3.power)
}

pub fn predict_time(t3: f64, t_dp: f64) -> f64 {
    debug_assert!(t_dp >= 0.0);
    t3 + t_dp
}

/// Inputs of the discovery period: per-hop transmission times of the
/// warning, request and reply packets, hops from the predicting node back to
/// the source, and hops from source to destination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscoveryInputs {
    pub t_warning: f64,
    pub t_rreq: f64,
    pub t_rrep: f64,
    pub hops_to_source: u32,
    pub hops_source_to_dest: u32,
}

pub fn discovery_period(inputs: &DiscoveryInputs) -> f64 {
    inputs.t_warning * f64::from(inputs.hops_to_source)
        + inputs.t_rreq * f64::from(inputs.hops_source_to_dest)
        + inputs.t_rrep * f64::from(inputs.hops_source_to_dest)
}

/// True when the RSS extrapolated to `t3 + t_dp` falls below `threshold`.
/// Always false until the history holds three samples.
pub fn link_about_to_fail(history: &RssHistory, t_dp: f64, threshold: f64) -> bool {
    let Some(last) = history.last() else {
        return false;
    };
    match lagrange_predict(history, predict_time(last.time, t_dp)) {
        Ok(p) => p < threshold,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Exact quadratic fit by solving the 3x3 Vandermonde system with
    /// Cramer's rule; independent of the Lagrange form.
    pub(crate) fn vandermonde_fit(pts: [(f64, f64); 3]) -> [f64; 3] {
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let rows: Vec<[f64; 3]> = pts.iter().map(|&(t, _)| [t * t, t, 1.0]).collect();
        let a = [rows[0], rows[1], rows[2]];
        let d = det3(a);
        let mut coef = [0.0; 3];
        for (col, c) in coef.iter_mut().enumerate() {
            let mut m = a;
            for r in 0..3 {
                m[r][col] = pts[r].1;
            }
            *c = det3(m) / d;
        }
        coef
    }

    fn eval(coef: [f64; 3], t: f64) -> f64 {
        coef[0] * t * t + coef[1] * t + coef[2]
    }

    #[test]
    fn constant_series() {
        let h = RssHistory::from_samples(&[(0.0, 5.0), (1.0, 5.0), (5.0, 5.0)]);
        assert_abs_diff_eq!(lagrange_predict(&h, 9.0).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_series() {
        let h = RssHistory::from_samples(&[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]);
        assert_abs_diff_eq!(lagrange_predict(&h, 4.0).unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn square_series() {
        let h = RssHistory::from_samples(&[(0.0, 0.0), (1.0, 1.0), (2.0, 4.0)]);
        assert_abs_diff_eq!(lagrange_predict(&h, 3.0).unwrap(), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn short_history_is_an_error() {
        let h = RssHistory::from_samples(&[(0.0, 1.0), (1.0, 2.0)]);
        assert_eq!(
            lagrange_predict(&h, 3.0),
            Err(PredictError::NotEnoughSamples)
        );
        assert_eq!(
            lagrange_predict(&RssHistory::new(), 3.0),
            Err(PredictError::NotEnoughSamples)
        );
    }

    #[test]
    fn zero_epsilon_duplicate_times_error() {
        let mut h = RssHistory::with_epsilon(0.0);
        h.record(0.0, 1.0);
        h.record(1.0, 1.0);
        h.record(1.0, 2.0);
        assert_eq!(
            lagrange_predict(&h, 3.0),
            Err(PredictError::NotEnoughSamples)
        );
    }

    #[test]
    fn ring_evicts_oldest_and_coalesces() {
        let mut h = RssHistory::new();
        for (t, p) in [(0.0, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 4.0)] {
            h.record(t, p);
        }
        let times: Vec<f64> = h.samples().iter().map(|s| s.time).collect();
        assert_eq!(times, vec![1.0, 2.0, 3.0]);
        h.record(3.0 + 5e-7, 9.0);
        assert_eq!(h.len(), 3);
        assert_eq!(h.last().unwrap().power, 9.0);
        h.record(2.5, 1.0);
        assert_eq!(h.last().unwrap().time, 3.0 + 5e-7);
    }

    #[test]
    fn predict_time_examples() {
        assert_abs_diff_eq!(predict_time(12.0, 0.016), 12.016, epsilon = 1e-12);
        assert_eq!(predict_time(7.0, 0.0), 7.0);
        assert_eq!(predict_time(0.0, 0.3), 0.3);
    }

    #[test]
    fn discovery_period_examples() {
        let inputs = DiscoveryInputs {
            t_warning: 0.002,
            t_rreq: 0.002,
            t_rrep: 0.002,
            hops_to_source: 2,
            hops_source_to_dest: 3,
        };
        assert_abs_diff_eq!(discovery_period(&inputs), 0.016, epsilon = 1e-15);
        let zero = DiscoveryInputs {
            hops_to_source: 0,
            hops_source_to_dest: 0,
            ..inputs
        };
        assert_eq!(discovery_period(&zero), 0.0);
        let doubled = DiscoveryInputs {
            t_warning: 0.004,
            t_rreq: 0.004,
            t_rrep: 0.004,
            ..inputs
        };
        assert_abs_diff_eq!(discovery_period(&doubled), 0.032, epsilon = 1e-15);
    }

    #[test]
    fn about_to_fail_examples() {
        let thr = 3.65e-10;
        let steady =
            RssHistory::from_samples(&[(0.0, 10.0 * thr), (1.0, 10.0 * thr), (2.0, 10.0 * thr)]);
        assert!(!link_about_to_fail(&steady, 1.0, thr));

        // The quadratic through (0,16),(1,4),(2,1) is 4.5t² - 16.5t + 16,
        // which turns upward: P(3) = 7·thr, so no failure is predicted.
        let pts = [(0.0, 16.0 * thr), (1.0, 4.0 * thr), (2.0, thr)];
        let coef = vandermonde_fit(pts);
        assert_abs_diff_eq!(eval(coef, 3.0) / thr, 7.0, epsilon = 1e-9);
        assert!(!link_about_to_fail(
            &RssHistory::from_samples(&pts),
            1.0,
            thr
        ));

        // (0,3),(1,2),(2,1.2) fits 0.1t² - 1.1t + 3, giving P(3) = 0.6·thr.
        let pts = [(0.0, 3.0 * thr), (1.0, 2.0 * thr), (2.0, 1.2 * thr)];
        let coef = vandermonde_fit(pts);
        assert_abs_diff_eq!(eval(coef, 3.0) / thr, 0.6, epsilon = 1e-9);
        assert!(link_about_to_fail(
            &RssHistory::from_samples(&pts),
            1.0,
            thr
        ));

        let two = RssHistory::from_samples(&[(0.0, 3.0 * thr), (1.0, 0.1 * thr)]);
        assert!(!link_about_to_fail(&two, 1.0, thr));
    }

    fn history_strategy() -> impl Strategy<Value = ([(f64, f64); 3], f64)> {
        (
            0.0f64..1.0,
            0.05f64..1.0,
            0.05f64..1.0,
            prop::array::uniform3(0.0f64..1.0),
            -1.0f64..3.0,
        )
            .prop_map(|(t1, d2, d3, p, tq)| {
                let t2 = t1 + d2;
                let t3 = t2 + d3;
                ([(t1, p[0]), (t2, p[1]), (t3, p[2])], tq)
            })
    }

    proptest! {
        #[test]
        fn interpolates_its_samples(( pts, _tq ) in history_strategy()) {
            let h = RssHistory::from_samples(&pts);
            for (t, p) in pts {
                let got = lagrange_predict(&h, t).unwrap();
                prop_assert!((got - p).abs() <= 1e-12 * p.abs().max(1e-300));
            }
        }

        #[test]
        fn matches_vandermonde_fit((pts, tq) in history_strategy()) {
            let h = RssHistory::from_samples(&pts);
            let got = lagrange_predict(&h, tq).unwrap();
            prop_assert!((got - eval(vandermonde_fit(pts), tq)).abs() < 1e-9);
        }

        #[test]
        fn shift_invariant((pts, tq) in history_strategy(), shift in -100.0f64..100.0) {
            let a = lagrange_predict(&RssHistory::from_samples(&pts), tq).unwrap();
            let moved: Vec<(f64, f64)> = pts.iter().map(|&(t, p)| (t + shift, p)).collect();
            let b = lagrange_predict(&RssHistory::from_samples(&moved), tq + shift).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn discovery_period_is_linear(tw in 0.0f64..0.01, tq in 0.0f64..0.01, tp in 0.0f64..0.01,
                                      nas in 0u32..10, nsd in 0u32..10, k in 0.0f64..5.0) {
            let base = DiscoveryInputs { t_warning: tw, t_rreq: tq, t_rrep: tp,
                                         hops_to_source: nas, hops_source_to_dest: nsd };
            let scaled = DiscoveryInputs { t_warning: k * tw, t_rreq: k * tq, t_rrep: k * tp, ..base };
            prop_assert!((discovery_period(&scaled) - k * discovery_period(&base)).abs() < 1e-15);
            let one_more = DiscoveryInputs { hops_to_source: nas + 1, ..base };
            prop_assert!((discovery_period(&one_more) - discovery_period(&base) - tw).abs() < 1e-15);
        }
    }
}
