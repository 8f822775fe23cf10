//! Cubic B-spline bases over a frozen boundary interval and the candidate-knot
//! grids the sampler moves knots on.
//!
//! A term with `k` active interior knots uses the `k + 4` cubic B-splines on the
//! clamped knot vector `[lo; 4] ++ knots ++ [hi; 4]`. The first function is
//! dropped because the intercept already spans the constant, which leaves
//! `k + 3` columns per spline term.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEGREE: usize = 3;
const ORDER: usize = DEGREE + 1;

/// Closed interval carrying the boundary knots of one covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub lo: f64,
    pub hi: f64,
}

impl Boundary {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::NonFinite("boundary"));
        }
        if lo >= hi {
            return Err(Error::InvalidData(format!(
                "boundary interval ({lo}, {hi}) is empty"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Observed range of `values`.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariate"));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo < hi) {
            return Err(Error::DegenerateCovariate {
                distinct: usize::from(lo == hi),
            });
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    fn strictly_inside(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

/// Type-7 sample quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// The `q / (count + 1)` quantiles of `x_values` for `q = 1..=count`, with
/// duplicates and values on the observed range's ends removed.
pub fn candidate_knots(x_values: &[f64], count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidData("candidate knot count must be >= 1".into()));
    }
    if x_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariate"));
    }
    let mut sorted = x_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateCovariate { distinct: distinct.len() });
    }
    let range = Boundary { lo: sorted[0], hi: sorted[sorted.len() - 1] };

    let mut knots: Vec<f64> = Vec::with_capacity(count);
    for q in 1..=count {
        let v = quantile_sorted(&sorted, q as f64 / (count + 1) as f64);
        if range.strictly_inside(v) && knots.last().map_or(true, |&last| v > last) {
            knots.push(v);
        }
    }
    if knots.is_empty() {
        return Err(Error::DegenerateCovariate { distinct: distinct.len() });
    }
    Ok(knots)
}

/// Which candidate knots a spline term currently uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotState {
    candidates: Vec<f64>,
    active: Vec<bool>,
}

impl KnotState {
    /// All candidates vacant.
    pub fn empty(candidates: Vec<f64>) -> Self {
        let active = vec![false; candidates.len()];
        Self { candidates, active }
    }

    pub fn with_active(candidates: Vec<f64>, active: Vec<bool>) -> Result<Self> {
        if candidates.len() != active.len() {
            return Err(Error::Dimension(format!(
                "{} candidates but {} indicators",
                candidates.len(),
                active.len()
            )));
        }
        if candidates.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidData("candidate knots must be strictly increasing".into()));
        }
        Ok(Self { candidates, active })
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    pub fn indicators(&self) -> &[bool] {
        &self.active
    }

    pub fn n_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn is_active(&self, idx: usize) -> bool {
        self.active[idx]
    }

    pub fn set(&mut self, idx: usize, on: bool) {
        self.active[idx] = on;
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| self.active[i]).collect()
    }

    pub fn vacant_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&i| !self.active[i]).collect()
    }

    pub fn active_positions(&self) -> Vec<f64> {
        self.active_indices().into_iter().map(|i| self.candidates[i]).collect()
    }

    /// Position of candidate `idx` within the sorted active knots, counting
    /// only active candidates to its left.
    pub fn rank(&self, idx: usize) -> usize {
        self.active[..idx].iter().filter(|&&a| a).count()
    }

    /// Vacant candidates strictly within `(center - w, center + w)`.
    pub fn vacant_within(&self, center: f64, w: f64) -> Vec<usize> {
        (0..self.active.len())
            .filter(|&i| !self.active[i] && (self.candidates[i] - center).abs() < w)
            .collect()
    }

    pub fn clear(&mut self) {
        self.active.iter_mut().for_each(|a| *a = false);
    }

    /// Number of basis columns for this configuration.
    pub fn n_columns(&self) -> usize {
        self.count() + DEGREE
    }
}

/// Evaluated basis for one spline term.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
}

impl BasisMatrix {
    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

/// Cubic B-spline basis on a clamped knot vector, evaluated one point at a
/// time with the triangular Cox–de Boor scheme.
#[derive(Debug, Clone)]
pub struct CubicBasis {
    knots: Vec<f64>,
    n_basis: usize,
    boundary: Boundary,
}

impl CubicBasis {
    pub fn new(active_knots: &[f64], boundary: Boundary) -> Result<Self> {
        for &k in active_knots {
            if !k.is_finite() {
                return Err(Error::NonFinite("knot"));
            }
            if !boundary.strictly_inside(k) {
                return Err(Error::KnotOutsideBoundary { knot: k, lo: boundary.lo, hi: boundary.hi });
            }
        }
        if active_knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidData("active knots must be strictly increasing".into()));
        }
        let mut knots = Vec::with_capacity(active_knots.len() + 2 * ORDER);
        knots.extend(std::iter::repeat(boundary.lo).take(ORDER));
        knots.extend_from_slice(active_knots);
        knots.extend(std::iter::repeat(boundary.hi).take(ORDER));
        Ok(Self { n_basis: active_knots.len() + ORDER, knots, boundary })
    }

    /// Columns returned per point (first basis function excluded).
    pub fn ncols(&self) -> usize {
        self.n_basis - 1
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    fn span(&self, x: f64) -> usize {
        let last = self.n_basis - 1;
        if x >= self.knots[last + 1] {
            return last;
        }
        // knots[DEGREE..=last + 1] is nondecreasing; find mu with knots[mu] <= x < knots[mu + 1].
        let mut lo = DEGREE;
        let mut hi = last + 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Index of the first nonzero function and the four nonzero values at `x`.
    /// `x` must lie in the boundary interval.
    pub fn nonzero(&self, x: f64) -> (usize, [f64; ORDER]) {
        let mu = self.span(x);
        let t = &self.knots;
        let mut n = [0.0; ORDER];
        let mut left = [0.0; ORDER];
        let mut right = [0.0; ORDER];
        n[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = x - t[mu + 1 - j];
            right[j] = t[mu + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (mu - DEGREE, n)
    }

    /// Writes the `ncols()` retained basis values at `x` into `out`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.ncols());
        out.iter_mut().for_each(|v| *v = 0.0);
        let (first, vals) = self.nonzero(x);
        for (r, v) in vals.iter().enumerate() {
            let full = first + r;
            if full >= 1 {
                out[full - 1] = *v;
            }
        }
    }

    /// `sum_c basis_c(x) * coef[c]` over the retained columns.
    pub fn dot(&self, x: f64, coef: &[f64]) -> f64 {
        let (first, vals) = self.nonzero(x);
        let mut acc = 0.0;
        for (r, v) in vals.iter().enumerate() {
            let full = first + r;
            if full >= 1 {
                acc += v * coef[full - 1];
            }
        }
        acc
    }
}

/// Basis matrix of `x_values` with interior knots `active_knots`.
pub fn build_basis(x_values: &[f64], active_knots: &[f64], boundary: Boundary) -> Result<BasisMatrix> {
    let basis = CubicBasis::new(active_knots, boundary)?;
    let mut values = DMatrix::zeros(x_values.len(), basis.ncols());
    let mut row = vec![0.0; basis.ncols()];
    for (i, &x) in x_values.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFinite("covariate"));
        }
        if !boundary.contains(x) {
            return Err(Error::OutsideBoundary { value: x, lo: boundary.lo, hi: boundary.hi });
        }
        basis.eval_into(x, &mut row);
        for (c, v) in row.iter().enumerate() {
            values[(i, c)] = *v;
        }
    }
    Ok(BasisMatrix { values })
}
