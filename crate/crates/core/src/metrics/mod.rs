//! Model-level and behaviour-level evaluation metrics.

mod pkl;
mod trace;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::{Error, Result};

pub use pkl::{gaussian_kernel, pkl_bound, pkl_from_samples, PklEstimate};
pub use trace::{
    collision_interval_cdf, max_eucl, mba_tmba, mean_eucl, normalized_pairwise_table, CollisionCdf, Mba,
    PairwiseTable, Series, TrajectoryTrace,
};

/// Objects farther than this from the ego are left out of model metrics.
pub const DEFAULT_MAX_RANGE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn ratio(num: u64, den: u64) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    /// Zero when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    /// Zero when there were no reference positives.
    pub fn recall(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        Self::ratio(self.tp + self.tn, self.total())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub counts: ConfusionCounts,
}

/// One actor in one frame: the evaluated model's detected flag, the
/// reference's detected flag, and the actor's distance from the ego.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlagPair {
    pub predicted: bool,
    pub reference: bool,
    pub distance: f64,
}

/// Precision, recall and accuracy with "detected" as the positive class,
/// over rows within `max_range`.
pub fn classification_metrics(rows: &[FlagPair], max_range: f64) -> Result<ClassificationMetrics> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut c = ConfusionCounts::default();
    for r in rows.iter().filter(|r| r.distance <= max_range) {
        match (r.predicted, r.reference) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(ClassificationMetrics {
        precision: c.precision(),
        recall: c.recall(),
        accuracy: c.accuracy(),
        counts: c,
    })
}

/// A matched detection against the true position, with the actor's range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionPair {
    pub predicted: Vec2,
    pub reference: Vec2,
    pub distance: f64,
}

/// Mean squared Euclidean position error over pairs within `max_range`.
pub fn sp_mse(pairs: &[PositionPair], max_range: f64) -> Result<f64> {
    let mut n = 0usize;
    let mut total = 0.0;
    for p in pairs.iter().filter(|p| p.distance <= max_range) {
        total += (p.predicted - p.reference).norm_squared();
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(predicted: bool, reference: bool) -> FlagPair {
        FlagPair {
            predicted,
            reference,
            distance: 10.0,
        }
    }

    #[test]
    fn perfect_agreement() {
        let rows = [row(true, true), row(false, false), row(true, true)];
        let m = classification_metrics(&rows, DEFAULT_MAX_RANGE).unwrap();
        assert_eq!((m.precision, m.recall, m.accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_counted_case() {
        let rows = [
            row(true, true),
            row(true, true),
            row(false, true),
            row(true, false),
            row(false, false),
            row(false, false),
        ];
        let m = classification_metrics(&rows, DEFAULT_MAX_RANGE).unwrap();
        for v in [m.precision, m.recall, m.accuracy] {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn far_rows_are_ignored() {
        let mut rows = vec![row(true, true), row(false, false)];
        let base = classification_metrics(&rows, DEFAULT_MAX_RANGE).unwrap();
        rows.push(FlagPair {
            predicted: false,
            reference: true,
            distance: 60.0,
        });
        assert_eq!(classification_metrics(&rows, DEFAULT_MAX_RANGE).unwrap(), base);
        assert!(classification_metrics(&[], DEFAULT_MAX_RANGE).is_err());
    }

    #[test]
    fn sp_mse_reference_values() {
        let p = |e: Vec2| PositionPair {
            predicted: Vec2::new(3.0, 4.0) + e,
            reference: Vec2::new(3.0, 4.0),
            distance: 5.0,
        };
        assert_eq!(sp_mse(&[p(Vec2::ZERO)], 50.0).unwrap(), 0.0);
        let v = sp_mse(&[p(Vec2::new(0.3, 0.4)), p(Vec2::new(-0.3, 0.4))], 50.0).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        assert!(sp_mse(&[], 50.0).is_err());
    }
}
