use std::fmt;

use crate::{Error, Result};

/// Uniform grid over a clamp box.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    bins: Vec<usize>,
    ranges: Vec<(f64, f64)>,
}

impl GridSpec {
    pub fn new(bins: Vec<usize>, ranges: Vec<(f64, f64)>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::invalid("grid needs at least one dimension"));
        }
        if bins.len() != ranges.len() {
            return Err(Error::shape(format!("{} ranges", bins.len()), ranges.len()));
        }
        if bins.contains(&0) {
            return Err(Error::invalid("bin counts must be at least 1"));
        }
        for &(lo, hi) in &ranges {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("bad clamp range [{lo}, {hi}]")));
            }
        }
        bins.iter()
            .try_fold(1usize, |acc, &b| acc.checked_mul(b))
            .ok_or_else(|| Error::invalid("grid has too many cells"))?;
        Ok(GridSpec { bins, ranges })
    }

    /// Parses bin counts written as `40x40` (or `10x10x10x10x10x10`).
    pub fn parse_bins(text: &str) -> Result<Vec<usize>> {
        text.split(['x', 'X', '×'])
            .map(|part| {
                part.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad grid `{text}`: expected e.g. 40x40")))
            })
            .collect()
    }

    pub fn bins(&self) -> &[usize] {
        &self.bins
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn dims(&self) -> usize {
        self.bins.len()
    }

    pub fn n_cells(&self) -> usize {
        self.bins.iter().product()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.bins.iter().map(|b| b.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

/// Flat cell index of an observation: clamp, bin, then flatten row-major
/// with dimension 0 slowest.
pub fn discretize(obs: &[f64], spec: &GridSpec) -> Result<usize> {
    if obs.len() != spec.dims() {
        return Err(Error::shape(format!("{}-dim observation", spec.dims()), obs.len()));
    }
    let mut index = 0;
    for ((&x, &bins), &(lo, hi)) in obs.iter().zip(&spec.bins).zip(&spec.ranges) {
        if x.is_nan() {
            return Err(Error::NonFinite("observation component is NaN".into()));
        }
        let x = x.clamp(lo, hi);
        let cell = (((x - lo) / (hi - lo)) * bins as f64).floor() as usize;
        index = index * bins + cell.min(bins - 1);
    }
    Ok(index)
}
