//! e_k accuracy and average length ratio.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative tolerance for length comparisons.
pub const LENGTH_TOL: f64 = 1e-9;

/// Gap percentages reported as e0, e1, e2, e5, e10.
pub const GAPS: [u32; 5] = [0, 1, 2, 5, 10];

/// Produced vs optimal length for one sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub produced: f64,
    pub optimal: f64,
    pub valid: bool,
}

impl Outcome {
    pub fn within(&self, gap_percent: u32) -> bool {
        self.valid && self.produced <= (1.0 + gap_percent as f64 / 100.0 + LENGTH_TOL) * self.optimal
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub e0: f64,
    pub e1: f64,
    pub e2: f64,
    pub e5: f64,
    pub e10: f64,
    /// Mean produced/optimal ratio over valid tours; `None` if there are none.
    pub r_aver: Option<f64>,
    pub samples: usize,
    pub invalid: usize,
}

impl MetricsReport {
    pub fn e(&self, gap_percent: u32) -> Option<f64> {
        match gap_percent {
            0 => Some(self.e0),
            1 => Some(self.e1),
            2 => Some(self.e2),
            5 => Some(self.e5),
            10 => Some(self.e10),
            _ => None,
        }
    }

    pub fn is_monotone(&self) -> bool {
        let e = [self.e0, self.e1, self.e2, self.e5, self.e10];
        e.windows(2).all(|w| w[0] <= w[1]) && e[4] <= 1.0
    }
}

pub fn compute_metrics(outcomes: &[Outcome]) -> Result<MetricsReport> {
    if outcomes.is_empty() {
        return Err(Error::EmptySet("metrics input"));
    }
    if let Some(o) = outcomes.iter().find(|o| !(o.optimal > 0.0)) {
        return Err(Error::InvalidTour(format!("optimal length {} is not positive", o.optimal)));
    }
    let total = outcomes.len() as f64;
    let frac = |k| outcomes.iter().filter(|o| o.within(k)).count() as f64 / total;
    let valid: Vec<f64> = outcomes.iter().filter(|o| o.valid).map(|o| o.produced / o.optimal).collect();
    Ok(MetricsReport {
        e0: frac(0),
        e1: frac(1),
        e2: frac(2),
        e5: frac(5),
        e10: frac(10),
        r_aver: (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64),
        samples: outcomes.len(),
        invalid: outcomes.len() - valid.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(ratio: f64) -> Outcome {
        Outcome { produced: ratio * 7.0, optimal: 7.0, valid: true }
    }

    #[test]
    fn all_optimal() {
        let r = compute_metrics(&[at(1.0), at(1.0)]).unwrap();
        assert_eq!([r.e0, r.e1, r.e2, r.e5, r.e10], [1.0; 5]);
        assert_eq!(r.r_aver, Some(1.0));
    }

    #[test]
    fn synthetic_three_point_set() {
        let r = compute_metrics(&[at(1.0), at(1.005), at(1.03)]).unwrap();
        assert!((r.e0 - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.e1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.e2 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.e5, 1.0);
        assert!((r.r_aver.unwrap() * 100.0 - 101.1667).abs() < 1e-3);
    }

    #[test]
    fn invalid_tours_fail_everything() {
        let bad = Outcome { produced: 1.0, optimal: 7.0, valid: false };
        let r = compute_metrics(&[at(1.0), bad]).unwrap();
        assert_eq!(r.e10, 0.5);
        assert_eq!(r.invalid, 1);
        assert_eq!(r.r_aver, Some(1.0));
        assert_eq!(compute_metrics(&[bad]).unwrap().r_aver, None);
    }

    #[test]
    fn empty_and_zero_optimal_are_errors() {
        assert!(matches!(compute_metrics(&[]), Err(Error::EmptySet(_))));
        assert!(compute_metrics(&[Outcome { produced: 1.0, optimal: 0.0, valid: true }]).is_err());
    }

    #[test]
    fn rounding_noise_counts_as_equal() {
        let r = compute_metrics(&[Outcome { produced: 3.0 * (1.0 + 1e-12), optimal: 3.0, valid: true }]).unwrap();
        assert_eq!(r.e0, 1.0);
    }

    proptest! {
        #[test]
        fn reports_are_monotone(ratios in proptest::collection::vec(1.0f64..1.2, 1..40)) {
            let outs: Vec<Outcome> = ratios.iter().map(|&r| at(r)).collect();
            let r = compute_metrics(&outs).unwrap();
            prop_assert!(r.is_monotone());
            prop_assert!(r.r_aver.unwrap() >= 1.0 - 1e-9);
        }
    }
}
