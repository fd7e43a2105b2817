use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::{Error, Result};

/// Draws row indices with weight inversely proportional to the population
/// of the row's distance bin, so every occupied bin is equally likely.
#[derive(Debug, Clone)]
pub struct StratifiedSampler {
    index: WeightedIndex<f64>,
    bins: Vec<usize>,
}

impl StratifiedSampler {
    /// Equal-width bins spanning the observed distance range.
    pub fn new(distances: &[f64], n_bins: usize) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n_bins = n_bins.max(1);
        let lo = distances.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let bins: Vec<usize> = distances
            .iter()
            .map(|&d| {
                if span > 0.0 {
                    (((d - lo) / span * n_bins as f64) as usize).min(n_bins - 1)
                } else {
                    0
                }
            })
            .collect();
        let mut counts = vec![0usize; n_bins];
        for &b in &bins {
            counts[b] += 1;
        }
        let weights: Vec<f64> = bins.iter().map(|&b| 1.0 / counts[b] as f64).collect();
        let index = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidConfig(format!("stratified weights: {e}")))?;
        Ok(Self { index, bins })
    }

    /// Bin of each row, as assigned at construction.
    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        (0..batch).map(|_| self.index.sample(rng)).collect()
    }
}
