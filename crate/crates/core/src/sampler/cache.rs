//! Sufficient statistics of the saturated design for the current knots.
//!
//! Coefficient-only moves evaluate the residual sum of squares from
//! `Z'Z`, `Z'Y` and `Y'Y` in `O(|active|^2)`; only knot moves touch the rows.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::dot;
use crate::model::{saturated_columns, CandidateSet, Dataset, Layout};
use crate::spline::KnotState;

#[derive(Debug, Clone)]
pub(crate) struct DesignCache {
    pub cols: Vec<Vec<f64>>,
    pub layout: Layout,
    gram: Vec<f64>,
    zy: Vec<f64>,
    yy: f64,
}

impl DesignCache {
    pub fn new(data: &Dataset, cands: &CandidateSet, knots: &[KnotState]) -> Result<Self> {
        let cols = saturated_columns(data, cands, knots)?;
        let layout = Layout::new(cands, knots);
        let w = cols.len();
        let mut gram = vec![0.0; w * w];
        for i in 0..w {
            for j in 0..=i {
                let v = dot(&cols[i], &cols[j]);
                gram[i * w + j] = v;
                gram[j * w + i] = v;
            }
        }
        let zy = cols.iter().map(|c| dot(c, data.y())).collect();
        let yy = dot(data.y(), data.y());
        Ok(Self { cols, layout, gram, zy, yy })
    }

    pub fn width(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.cols.len() + j]
    }

    /// Residual sum of squares of `coef` restricted to the `active` columns.
    pub fn ssr(&self, coef: &[f64], active: &[usize]) -> f64 {
        let mut lin = 0.0;
        let mut quad = 0.0;
        for (ai, &a) in active.iter().enumerate() {
            let ca = coef[a];
            if ca == 0.0 {
                continue;
            }
            lin += ca * self.zy[a];
            let row = &self.gram[a * self.cols.len()..];
            let mut inner = 0.5 * row[a] * ca;
            for &b in &active[..ai] {
                inner += row[b] * coef[b];
            }
            quad += 2.0 * ca * inner;
        }
        (self.yy - 2.0 * lin + quad).max(0.0)
    }

    pub fn sub_gram(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.g(idx[i], idx[j]))
    }

    pub fn sub_zy(&self, idx: &[usize]) -> DVector<f64> {
        DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.zy[i]))
    }

    /// Swaps the columns of `term` for `block` (possibly of a different
    /// width) and refreshes the affected rows of the statistics.
    pub fn replace_block(&mut self, term: usize, block: Vec<Vec<f64>>, layout: Layout, y: &[f64]) {
        let old = self.layout.range(term);
        let (start, old_len, new_len) = (old.start, old.len(), block.len());
        let w_old = self.cols.len();
        let w_new = w_old - old_len + new_len;
        let map_old = |i: usize| if i < start { Some(i) } else if i < old.end { None } else { Some(i - old_len + new_len) };

        let mut gram = vec![0.0; w_new * w_new];
        for i in 0..w_old {
            let Some(ni) = map_old(i) else { continue };
            for j in 0..w_old {
                if let Some(nj) = map_old(j) {
                    gram[ni * w_new + nj] = self.gram[i * w_old + j];
                }
            }
        }
        let tail = self.cols.split_off(old.end);
        self.cols.truncate(start);
        self.cols.extend(block);
        self.cols.extend(tail);

        let mut zy = Vec::with_capacity(w_new);
        zy.extend_from_slice(&self.zy[..start]);
        zy.extend(self.cols[start..start + new_len].iter().map(|c| dot(c, y)));
        zy.extend_from_slice(&self.zy[old.end..]);

        for b in start..start + new_len {
            for c in 0..w_new {
                let v = dot(&self.cols[b], &self.cols[c]);
                gram[b * w_new + c] = v;
                gram[c * w_new + b] = v;
            }
        }
        self.gram = gram;
        self.zy = zy;
        self.layout = layout;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::Boundary;

    fn setup() -> (Dataset, CandidateSet) {
        let n = 30;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).fract()).collect();
        let t: Vec<f64> = (0..n).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect();
        let z: Vec<f64> = (0..n).map(|i| ((i * 5) % 4 == 1) as u8 as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.91).sin()).collect();
        let data = Dataset::new(y, t, vec![x], vec![z], vec![0], vec![0]).unwrap();
        let cands = CandidateSet::new(&data, vec![Boundary::new(0.0, 1.0).unwrap()], vec![vec![0.25, 0.5, 0.75]]).unwrap();
        (data, cands)
    }

    #[test]
    fn block_replacement_matches_rebuild() {
        let (data, cands) = setup();
        let mut knots = cands.empty_knots();
        let mut cache = DesignCache::new(&data, &cands, &knots).unwrap();
        knots[1].set(0, true);
        knots[1].set(2, true);
        let s = 1;
        let term = cands.spline_term(s);
        let block = crate::model::spline_block(&data, &cands, s, &knots[s]).unwrap();
        cache.replace_block(term, block, Layout::new(&cands, &knots), data.y());
        let fresh = DesignCache::new(&data, &cands, &knots).unwrap();
        assert_eq!(cache.width(), fresh.width());
        for i in 0..fresh.width() {
            assert!((cache.zy[i] - fresh.zy[i]).abs() < 1e-12);
            for j in 0..fresh.width() {
                assert!((cache.g(i, j) - fresh.g(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ssr_matches_direct() {
        let (data, cands) = setup();
        let knots = cands.empty_knots();
        let cache = DesignCache::new(&data, &cands, &knots).unwrap();
        let coef: Vec<f64> = (0..cache.width()).map(|i| 0.1 * i as f64 - 0.3).collect();
        let active: Vec<usize> = (0..cache.width()).filter(|i| i % 3 != 2).collect();
        let mut direct = 0.0;
        for r in 0..data.n() {
            let fit: f64 = active.iter().map(|&a| cache.cols[a][r] * coef[a]).sum();
            direct += (data.y()[r] - fit).powi(2);
        }
        assert!((cache.ssr(&coef, &active) - direct).abs() < 1e-10);
    }
}
