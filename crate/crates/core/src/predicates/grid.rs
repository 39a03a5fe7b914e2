use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::Interval;

/// Ascending energies used to approximate "there exists `E ∈ I`".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    points: Vec<f64>,
    step: f64,
    grid_limited: bool,
}

impl EnergyGrid {
    /// Eigenvalues in `I`, midpoints of consecutive ones, the lattice
    /// `k·step ∩ I` and any `extra` points in `I`. The uniform part is
    /// coarsened (and the grid flagged) if it would exceed `max_uniform` points.
    pub fn build(
        spectra: &[&[f64]],
        interval: Interval,
        step: f64,
        extra: &[f64],
        max_uniform: usize,
    ) -> Result<EnergyGrid> {
        if !(interval.lo.is_finite() && interval.hi.is_finite()) || interval.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "energy interval [{}, {}] must be finite",
                interval.lo, interval.hi
            )));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid step {step} must be positive"
            )));
        }
        let mut eigs: Vec<f64> = spectra
            .iter()
            .flat_map(|s| s.iter().copied())
            .filter(|&e| interval.contains(e))
            .collect();
        eigs.sort_by(f64::total_cmp);
        eigs.dedup();
        let mut points = eigs.clone();
        points.extend(eigs.windows(2).map(|w| 0.5 * (w[0] + w[1])));

        let mut step = step;
        let mut grid_limited = false;
        let count = |s: f64| (interval.hi / s).floor() - (interval.lo / s).ceil() + 1.0;
        while count(step) > max_uniform as f64 {
            step *= 2.0;
            grid_limited = true;
        }
        let k0 = (interval.lo / step).ceil() as i64;
        let k1 = (interval.hi / step).floor() as i64;
        points.extend((k0..=k1).map(|k| k as f64 * step));
        points.extend(extra.iter().copied().filter(|&e| interval.contains(e)));
        points.sort_by(f64::total_cmp);
        points.dedup();
        if points.is_empty() {
            return Err(Error::InvalidParameter("energy grid is empty".into()));
        }
        Ok(EnergyGrid {
            points,
            step,
            grid_limited,
        })
    }

    pub fn from_points(mut points: Vec<f64>) -> Result<EnergyGrid> {
        points.retain(|e| e.is_finite());
        points.sort_by(f64::total_cmp);
        points.dedup();
        if points.is_empty() {
            return Err(Error::InvalidParameter("energy grid is empty".into()));
        }
        Ok(EnergyGrid {
            points,
            step: f64::NAN,
            grid_limited: false,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Step of the uniform part after any coarsening.
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn grid_limited(&self) -> bool {
        self.grid_limited
    }

    pub fn mark_limited(&mut self) {
        self.grid_limited = true;
    }
}

/// Union of open intervals `(c - h, c + h)`, each tagged, with a merged view
/// for membership queries. The partially resonant energies of a ball.
#[derive(Clone, Debug, Default)]
pub struct PrSet {
    raw: Vec<(f64, f64, usize)>,
    merged: Vec<(f64, f64)>,
}

impl PrSet {
    pub fn new() -> PrSet {
        PrSet::default()
    }

    pub fn from_intervals(raw: Vec<(f64, f64, usize)>) -> PrSet {
        let mut s = PrSet {
            raw,
            merged: Vec::new(),
        };
        s.merge();
        s
    }

    pub fn push(&mut self, center: f64, half_width: f64, tag: usize) {
        self.raw
            .push((center - half_width, center + half_width, tag));
    }

    /// Must be called after the last `push`.
    pub fn finish(&mut self) {
        self.merge();
    }

    fn merge(&mut self) {
        let mut iv: Vec<(f64, f64)> = self
            .raw
            .iter()
            .filter(|r| r.0 < r.1)
            .map(|r| (r.0, r.1))
            .collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
        for (lo, hi) in iv {
            match merged.last_mut() {
                // open intervals touching at a point leave that point out
                Some(last) if lo < last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        self.merged = merged;
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.merged
    }

    pub fn raw(&self) -> &[(f64, f64, usize)] {
        &self.raw
    }

    pub fn is_empty(&self) -> bool {
        self.merged.is_empty()
    }

    pub fn contains(&self, e: f64) -> bool {
        let k = self.merged.partition_point(|iv| iv.0 < e);
        k > 0 && e < self.merged[k - 1].1
    }

    /// Tag of the first raw interval containing `e`.
    pub fn witness(&self, e: f64) -> Option<usize> {
        self.raw.iter().find(|r| r.0 < e && e < r.1).map(|r| r.2)
    }

    /// Whether some energy lies in both sets.
    pub fn intersects(&self, other: &PrSet) -> bool {
        self.common_point(other).is_some()
    }

    /// Midpoint of the first overlap, if any.
    pub fn common_point(&self, other: &PrSet) -> Option<f64> {
        let (a, b) = (&self.merged, &other.merged);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if lo < hi {
                return Some(0.5 * (lo + hi));
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        None
    }

    /// Endpoints of every raw interval.
    pub fn endpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.raw.iter().flat_map(|r| [r.0, r.1])
    }
}
