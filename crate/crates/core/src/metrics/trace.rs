use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::{Error, Result};

/// Ego history of one closed-loop run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTrace {
    pub time: Vec<f64>,
    pub position: Vec<Vec2>,
    pub velocity: Vec<Vec2>,
    pub brake: Vec<f64>,
    /// Times of collision onsets.
    pub collisions: Vec<f64>,
}

impl TrajectoryTrace {
    pub fn push(&mut self, t: f64, position: Vec2, velocity: Vec2, brake: f64) {
        self.time.push(t);
        self.position.push(position);
        self.velocity.push(velocity);
        self.brake.push(brake);
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Checks equal-length series and strictly increasing timestamps.
    pub fn validate(&self) -> Result<()> {
        let n = self.time.len();
        for len in [self.position.len(), self.velocity.len(), self.brake.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        if self.time.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("trace timestamps must increase strictly".into()));
        }
        Ok(())
    }

    pub fn positions(&self) -> Series<'_> {
        Series {
            time: &self.time,
            values: &self.position,
        }
    }

    pub fn velocities(&self) -> Series<'_> {
        Series {
            time: &self.time,
            values: &self.velocity,
        }
    }
}

/// A timestamped planar signal, linearly interpolated between samples.
#[derive(Debug, Clone, Copy)]
pub struct Series<'a> {
    pub time: &'a [f64],
    pub values: &'a [Vec2],
}

impl Series<'_> {
    /// Value at `t`, which must lie inside the sampled range.
    pub fn at(&self, t: f64) -> Vec2 {
        let i = self.time.partition_point(|&x| x <= t);
        if i == 0 {
            return self.values[0];
        }
        if i >= self.time.len() {
            return self.values[self.time.len() - 1];
        }
        let (t0, t1) = (self.time[i - 1], self.time[i]);
        if t == t0 {
            return self.values[i - 1];
        }
        self.values[i - 1].lerp(self.values[i], (t - t0) / (t1 - t0))
    }
}

/// Union of both timestamp sets inside their common span.
fn common_grid(a: &Series, b: &Series) -> Result<Vec<f64>> {
    if a.time.is_empty() || b.time.is_empty() {
        return Err(Error::EmptyInput);
    }
    let lo = a.time[0].max(b.time[0]);
    let hi = a.time[a.time.len() - 1].min(b.time[b.time.len() - 1]);
    if lo > hi {
        return Err(Error::NonOverlappingTraces);
    }
    let mut grid: Vec<f64> = a
        .time
        .iter()
        .chain(b.time)
        .copied()
        .filter(|t| (lo..=hi).contains(t))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

/// Time-averaged Euclidean difference, as a left Riemann sum over the
/// union of both traces' timestamps. A single shared instant returns the
/// difference at that instant.
pub fn mean_eucl(a: Series, b: Series) -> Result<f64> {
    let grid = common_grid(&a, &b)?;
    let diff = |t: f64| (a.at(t) - b.at(t)).norm();
    if grid.len() == 1 {
        return Ok(diff(grid[0]));
    }
    let mut acc = 0.0;
    for w in grid.windows(2) {
        acc += diff(w[0]) * (w[1] - w[0]);
    }
    Ok(acc / (grid[grid.len() - 1] - grid[0]))
}

/// Largest instantaneous Euclidean difference over the common timestamps.
pub fn max_eucl(a: Series, b: Series) -> Result<f64> {
    let grid = common_grid(&a, &b)?;
    Ok(grid
        .iter()
        .map(|&t| (a.at(t) - b.at(t)).norm())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mba {
    /// Maximum braking amplitude.
    pub mba: f64,
    /// First time the maximum is reached, relative to the trace start.
    /// Zero when the run never brakes.
    pub t_mba: f64,
    pub braked: bool,
}

pub fn mba_tmba(trace: &TrajectoryTrace) -> Mba {
    let start = trace.time.first().copied().unwrap_or(0.0);
    let mut best = Mba {
        mba: 0.0,
        t_mba: 0.0,
        braked: false,
    };
    for (&t, &b) in trace.time.iter().zip(&trace.brake) {
        if b > best.mba {
            best = Mba {
                mba: b,
                t_mba: t - start,
                braked: true,
            };
        }
    }
    best
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollisionCdf {
    /// Sorted pooled gaps between consecutive collisions within a run.
    pub gaps: Vec<f64>,
    pub median: Option<f64>,
}

impl CollisionCdf {
    /// `(gap, cumulative fraction)` steps of the empirical CDF.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.gaps.len() as f64;
        self.gaps
            .iter()
            .enumerate()
            .map(|(i, &g)| (g, (i + 1) as f64 / n))
            .collect()
    }
}

/// Pools the gaps between consecutive collisions of each run.
pub fn collision_interval_cdf(runs: &[Vec<f64>]) -> CollisionCdf {
    let mut gaps: Vec<f64> = runs
        .iter()
        .flat_map(|times| {
            let mut t = times.clone();
            t.sort_by(f64::total_cmp);
            t.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>()
        })
        .collect();
    gaps.sort_by(f64::total_cmp);
    let median = match gaps.len() {
        0 => None,
        n if n % 2 == 1 => Some(gaps[n / 2]),
        n => Some(0.5 * (gaps[n / 2 - 1] + gaps[n / 2])),
    };
    CollisionCdf { gaps, median }
}

/// Symmetric table of a pairwise metric, scaled by one reference entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTable {
    pub labels: Vec<String>,
    /// Raw values, `raw[i][j]` for `labels[i]` vs `labels[j]`.
    pub raw: Vec<Vec<f64>>,
    pub normalized: Vec<Vec<f64>>,
    pub normalizer: f64,
}

/// Builds the table from unordered pair values and divides every entry by
/// the value of `reference`. Diagonal entries are zero.
pub fn normalized_pairwise_table(
    labels: &[String],
    values: &BTreeMap<(String, String), f64>,
    reference: (&str, &str),
) -> Result<PairwiseTable> {
    let get = |a: &str, b: &str| -> Option<f64> {
        values
            .get(&(a.to_string(), b.to_string()))
            .or_else(|| values.get(&(b.to_string(), a.to_string())))
            .copied()
    };
    let normalizer = get(reference.0, reference.1)
        .filter(|v| *v > 0.0 && v.is_finite())
        .ok_or_else(|| Error::ZeroNormalizer {
            row: reference.0.to_string(),
            col: reference.1.to_string(),
        })?;
    let raw: Vec<Vec<f64>> = labels
        .iter()
        .map(|a| {
            labels
                .iter()
                .map(|b| if a == b { 0.0 } else { get(a, b).unwrap_or(f64::NAN) })
                .collect()
        })
        .collect();
    let normalized = raw
        .iter()
        .map(|r| r.iter().map(|v| v / normalizer).collect())
        .collect();
    Ok(PairwiseTable {
        labels: labels.to_vec(),
        raw,
        normalized,
        normalizer,
    })
}
