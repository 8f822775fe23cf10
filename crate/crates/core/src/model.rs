//! The outcome model: data containers, the term/coefficient layout of the
//! saturated design, likelihood, priors and the blip function.
//!
//! Terms are ordered `[spline mains | binary mains | spline tailoring |
//! binary tailoring]`, and coefficients follow the same order after the
//! intercept and treatment columns.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::spline::{self, Boundary, CubicBasis, KnotState, DEGREE};

/// Outcomes, treatment and biomarkers for the enrolled patients. Continuous
/// markers are stored column-wise in `x`, binary markers column-wise in `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    t: Vec<f64>,
    x: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    tailoring_cont: Vec<usize>,
    tailoring_bin: Vec<usize>,
}

impl Dataset {
    pub fn new(
        y: Vec<f64>,
        t: Vec<f64>,
        x: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        tailoring_cont: Vec<usize>,
        tailoring_bin: Vec<usize>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no patients".into()));
        }
        if t.len() != n || x.iter().any(|c| c.len() != n) || z.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("all dataset columns must have the outcome's length".into()));
        }
        if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        if t.iter().chain(z.iter().flatten()).any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidData("treatment and binary markers must be 0/1".into()));
        }
        let is_subset = |idx: &[usize], len: usize| {
            idx.iter().all(|&i| i < len) && idx.windows(2).all(|w| w[0] < w[1])
        };
        if !is_subset(&tailoring_cont, x.len()) || !is_subset(&tailoring_bin, z.len()) {
            return Err(Error::InvalidData(
                "tailoring candidates must be a sorted subset of the predictive candidates".into(),
            ));
        }
        Ok(Self { y, t, x, z, tailoring_cont, tailoring_bin })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn t(&self) -> &[f64] {
        &self.t
    }
    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }
    pub fn z(&self) -> &[Vec<f64>] {
        &self.z
    }
    pub fn tailoring_cont(&self) -> &[usize] {
        &self.tailoring_cont
    }
    pub fn tailoring_bin(&self) -> &[usize] {
        &self.tailoring_bin
    }
}

/// One candidate term of the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    /// Main effect of continuous column `x[i]`.
    SplineMain(usize),
    /// Main effect of binary column `z[i]`.
    BinaryMain(usize),
    /// Interaction of treatment with `x[tailoring_cont[j]]`.
    SplineTailoring(usize),
    /// Interaction of treatment with `z[tailoring_bin[q]]`.
    BinaryTailoring(usize),
}

impl Term {
    pub fn is_spline(self) -> bool {
        matches!(self, Term::SplineMain(_) | Term::SplineTailoring(_))
    }
    pub fn is_tailoring(self) -> bool {
        matches!(self, Term::SplineTailoring(_) | Term::BinaryTailoring(_))
    }
}

/// The candidate term structure plus the frozen spline supports
/// (boundary interval and candidate knots per continuous column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    n_cont: usize,
    n_bin: usize,
    tailoring_cont: Vec<usize>,
    tailoring_bin: Vec<usize>,
    boundaries: Vec<Boundary>,
    knot_candidates: Vec<Vec<f64>>,
}

impl CandidateSet {
    /// Supports derived from `data`: boundaries default to the observed range
    /// and candidate knots are `n_knots` interior quantiles of the clamped data.
    pub fn from_data(data: &Dataset, n_knots: usize, boundaries: Option<Vec<Boundary>>) -> Result<Self> {
        let boundaries = match boundaries {
            Some(b) => {
                if b.len() != data.x.len() {
                    return Err(Error::Dimension(format!(
                        "{} boundaries for {} continuous columns",
                        b.len(),
                        data.x.len()
                    )));
                }
                b
            }
            None => data.x.iter().map(|c| Boundary::from_values(c)).collect::<Result<_>>()?,
        };
        let knot_candidates = data
            .x
            .iter()
            .zip(&boundaries)
            .map(|(col, b)| {
                let clamped: Vec<f64> = col.iter().map(|&v| b.clamp(v)).collect();
                let knots = spline::candidate_knots(&clamped, n_knots)?;
                Ok(knots.into_iter().filter(|&k| k > b.lo && k < b.hi).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Self::new(data, boundaries, knot_candidates)
    }

    pub fn new(data: &Dataset, boundaries: Vec<Boundary>, knot_candidates: Vec<Vec<f64>>) -> Result<Self> {
        if boundaries.len() != data.x.len() || knot_candidates.len() != data.x.len() {
            return Err(Error::Dimension("one boundary and knot grid per continuous column".into()));
        }
        for (b, ks) in boundaries.iter().zip(&knot_candidates) {
            if ks.iter().any(|&k| !(k > b.lo && k < b.hi)) || ks.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidData("candidate knots must be increasing and inside the boundary".into()));
            }
        }
        Ok(Self {
            n_cont: data.x.len(),
            n_bin: data.z.len(),
            tailoring_cont: data.tailoring_cont.clone(),
            tailoring_bin: data.tailoring_bin.clone(),
            boundaries,
            knot_candidates,
        })
    }

    pub fn n_cont(&self) -> usize {
        self.n_cont
    }
    pub fn n_bin(&self) -> usize {
        self.n_bin
    }
    pub fn tailoring_cont(&self) -> &[usize] {
        &self.tailoring_cont
    }
    pub fn tailoring_bin(&self) -> &[usize] {
        &self.tailoring_bin
    }
    pub fn boundaries(&self) -> &[Boundary] {
        &self.boundaries
    }
    pub fn knot_candidates(&self, col: usize) -> &[f64] {
        &self.knot_candidates[col]
    }

    /// Number of candidate terms `p`.
    pub fn n_terms(&self) -> usize {
        self.n_cont + self.n_bin + self.tailoring_cont.len() + self.tailoring_bin.len()
    }

    pub fn n_spline_terms(&self) -> usize {
        self.n_cont + self.tailoring_cont.len()
    }

    pub fn term(&self, idx: usize) -> Term {
        let (j, r, jt) = (self.n_cont, self.n_bin, self.tailoring_cont.len());
        if idx < j {
            Term::SplineMain(idx)
        } else if idx < j + r {
            Term::BinaryMain(idx - j)
        } else if idx < j + r + jt {
            Term::SplineTailoring(idx - j - r)
        } else {
            Term::BinaryTailoring(idx - j - r - jt)
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = Term> + '_ {
        (0..self.n_terms()).map(|i| self.term(i))
    }

    /// Spline-term index (`0..n_spline_terms`) of a term, if it is a spline.
    pub fn spline_index(&self, idx: usize) -> Option<usize> {
        match self.term(idx) {
            Term::SplineMain(i) => Some(i),
            Term::SplineTailoring(j) => Some(self.n_cont + j),
            _ => None,
        }
    }

    /// Term index of spline term `s`.
    pub fn spline_term(&self, s: usize) -> usize {
        if s < self.n_cont {
            s
        } else {
            self.n_cont + self.n_bin + (s - self.n_cont)
        }
    }

    /// Continuous column used by spline term `s`.
    pub fn spline_column(&self, s: usize) -> usize {
        if s < self.n_cont {
            s
        } else {
            self.tailoring_cont[s - self.n_cont]
        }
    }

    pub fn spline_is_tailoring(&self, s: usize) -> bool {
        s >= self.n_cont
    }

    /// Main-effect term a tailoring term depends on.
    pub fn main_of(&self, idx: usize) -> Option<usize> {
        match self.term(idx) {
            Term::SplineTailoring(j) => Some(self.tailoring_cont[j]),
            Term::BinaryTailoring(q) => Some(self.n_cont + self.tailoring_bin[q]),
            _ => None,
        }
    }

    /// Tailoring term attached to a main-effect term, if the variable is a
    /// tailoring candidate.
    pub fn interaction_of(&self, idx: usize) -> Option<usize> {
        let base = self.n_cont + self.n_bin;
        match self.term(idx) {
            Term::SplineMain(i) => self.tailoring_cont.iter().position(|&c| c == i).map(|j| base + j),
            Term::BinaryMain(i) => self
                .tailoring_bin
                .iter()
                .position(|&c| c == i)
                .map(|q| base + self.tailoring_cont.len() + q),
            _ => None,
        }
    }

    /// Empty knot states on each spline term's candidate grid.
    pub fn empty_knots(&self) -> Vec<KnotState> {
        (0..self.n_spline_terms())
            .map(|s| KnotState::empty(self.knot_candidates[self.spline_column(s)].clone()))
            .collect()
    }

    pub fn basis(&self, s: usize, knots: &KnotState) -> Result<CubicBasis> {
        CubicBasis::new(&knots.active_positions(), self.boundaries[self.spline_column(s)])
    }
}

/// Column ranges of each term in the saturated design for a given knot
/// configuration. Columns 0 and 1 are the intercept and treatment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    ranges: Vec<Range<usize>>,
    width: usize,
}

impl Layout {
    pub fn new(cands: &CandidateSet, knots: &[KnotState]) -> Self {
        let mut ranges = Vec::with_capacity(cands.n_terms());
        let mut at = 2;
        for idx in 0..cands.n_terms() {
            let d = match cands.spline_index(idx) {
                Some(s) => knots[s].n_columns(),
                None => 1,
            };
            ranges.push(at..at + d);
            at += d;
        }
        Self { ranges, width: at }
    }

    pub fn range(&self, term: usize) -> Range<usize> {
        self.ranges[term].clone()
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Prior hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma_b: f64,
    pub a0: f64,
    pub b0: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { lambda1: 0.1, lambda2: 1.0, sigma_b: 10.0, a0: 0.1, b0: 0.1 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("sigma_b", self.sigma_b),
            ("a0", self.a0),
            ("b0", self.b0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("priors.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Current point of the chain: coefficients, term inclusion and knots.
/// Inactive terms keep their coefficient slots at exact zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub mu: f64,
    pub phi: f64,
    pub theta: Vec<Vec<f64>>,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub omega: Vec<bool>,
    pub knots: Vec<KnotState>,
    pub sigma_tau: f64,
}

impl ModelState {
    /// Intercept-and-treatment-only state with empty knots.
    pub fn null(cands: &CandidateSet, sigma_tau: f64) -> Self {
        Self {
            mu: 0.0,
            phi: 0.0,
            theta: vec![vec![0.0; DEGREE]; cands.n_spline_terms()],
            beta1: vec![0.0; cands.n_bin()],
            beta2: vec![0.0; cands.tailoring_bin().len()],
            omega: vec![false; cands.n_terms()],
            knots: cands.empty_knots(),
            sigma_tau,
        }
    }

    pub fn layout(&self, cands: &CandidateSet) -> Layout {
        Layout::new(cands, &self.knots)
    }

    pub fn n_active_terms(&self) -> usize {
        self.omega.iter().filter(|&&w| w).count()
    }

    pub fn term_coefficients(&self, cands: &CandidateSet, idx: usize) -> &[f64] {
        match cands.term(idx) {
            Term::SplineMain(_) | Term::SplineTailoring(_) => &self.theta[cands.spline_index(idx).unwrap()],
            Term::BinaryMain(r) => std::slice::from_ref(&self.beta1[r]),
            Term::BinaryTailoring(q) => std::slice::from_ref(&self.beta2[q]),
        }
    }

    pub fn term_coefficients_mut(&mut self, cands: &CandidateSet, idx: usize) -> &mut [f64] {
        match cands.term(idx) {
            Term::SplineMain(_) | Term::SplineTailoring(_) => {
                &mut self.theta[cands.spline_index(idx).unwrap()]
            }
            Term::BinaryMain(r) => std::slice::from_mut(&mut self.beta1[r]),
            Term::BinaryTailoring(q) => std::slice::from_mut(&mut self.beta2[q]),
        }
    }

    /// Coefficients in saturated-design column order.
    pub fn flat_coefficients(&self, cands: &CandidateSet) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 + self.theta.iter().map(Vec::len).sum::<usize>() + self.beta1.len() + self.beta2.len());
        out.push(self.mu);
        out.push(self.phi);
        for idx in 0..cands.n_terms() {
            out.extend_from_slice(self.term_coefficients(cands, idx));
        }
        out
    }

    /// Inverse of [`flat_coefficients`](Self::flat_coefficients) for the current knots.
    pub fn set_flat_coefficients(&mut self, cands: &CandidateSet, flat: &[f64]) {
        let layout = self.layout(cands);
        self.mu = flat[0];
        self.phi = flat[1];
        for idx in 0..cands.n_terms() {
            let r = layout.range(idx);
            self.term_coefficients_mut(cands, idx).copy_from_slice(&flat[r]);
        }
    }

    pub fn omega_coef(&self, cands: &CandidateSet) -> Vec<bool> {
        let d: Vec<usize> = self.knots.iter().map(KnotState::n_columns).collect();
        augment_inclusion(cands, &self.omega, &d).expect("state omega matches candidate set")
    }

    /// Checks every structural invariant of a state.
    pub fn check_invariants(&self, cands: &CandidateSet) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidData(m));
        if self.omega.len() != cands.n_terms() {
            return fail(format!("omega has length {}, expected {}", self.omega.len(), cands.n_terms()));
        }
        if self.theta.len() != cands.n_spline_terms() || self.knots.len() != cands.n_spline_terms() {
            return fail("one theta block and knot state per spline term".into());
        }
        for idx in 0..cands.n_terms() {
            if self.omega[idx] {
                if let Some(main) = cands.main_of(idx) {
                    if !self.omega[main] {
                        return fail(format!("hierarchy violated: term {idx} active without main effect {main}"));
                    }
                }
            } else if self.term_coefficients(cands, idx).iter().any(|&c| c != 0.0) {
                return fail(format!("inactive term {idx} has nonzero coefficients"));
            }
        }
        for (s, (th, ks)) in self.theta.iter().zip(&self.knots).enumerate() {
            if th.len() != ks.count() + DEGREE {
                return fail(format!("spline {s}: {} coefficients for {} knots", th.len(), ks.count()));
            }
        }
        if !(self.sigma_tau.is_finite() && self.sigma_tau > 0.0) {
            return fail(format!("sigma_tau = {}", self.sigma_tau));
        }
        if !self.flat_coefficients(cands).iter().all(|c| c.is_finite()) {
            return fail("non-finite coefficient".into());
        }
        Ok(())
    }
}

/// Covariate values a spline term is evaluated on, clamped to its boundary.
pub fn spline_inputs(data: &Dataset, cands: &CandidateSet, s: usize) -> Vec<f64> {
    let col = cands.spline_column(s);
    let b = cands.boundaries()[col];
    data.x[col].iter().map(|&v| b.clamp(v)).collect()
}

/// Column `c` of spline block `s` (tailoring blocks zeroed where `T = 0`).
pub fn spline_block(data: &Dataset, cands: &CandidateSet, s: usize, knots: &KnotState) -> Result<Vec<Vec<f64>>> {
    let basis = cands.basis(s, knots)?;
    let xs = spline_inputs(data, cands, s);
    let d = basis.ncols();
    let mut cols = vec![vec![0.0; data.n()]; d];
    let mask = cands.spline_is_tailoring(s);
    let mut row = vec![0.0; d];
    for (i, &x) in xs.iter().enumerate() {
        if mask && data.t[i] == 0.0 {
            continue;
        }
        basis.eval_into(x, &mut row);
        for c in 0..d {
            cols[c][i] = row[c];
        }
    }
    Ok(cols)
}

/// Saturated design as a list of columns.
pub fn saturated_columns(data: &Dataset, cands: &CandidateSet, knots: &[KnotState]) -> Result<Vec<Vec<f64>>> {
    if knots.len() != cands.n_spline_terms() {
        return Err(Error::Dimension(format!(
            "{} knot states for {} spline terms",
            knots.len(),
            cands.n_spline_terms()
        )));
    }
    if cands.n_cont() != data.x.len() || cands.n_bin() != data.z.len() {
        return Err(Error::Dimension("candidate set does not match dataset".into()));
    }
    let n = data.n();
    let mut cols = vec![vec![1.0; n], data.t.clone()];
    for idx in 0..cands.n_terms() {
        match cands.term(idx) {
            Term::SplineMain(_) | Term::SplineTailoring(_) => {
                let s = cands.spline_index(idx).unwrap();
                cols.extend(spline_block(data, cands, s, &knots[s])?);
            }
            Term::BinaryMain(r) => cols.push(data.z[r].clone()),
            Term::BinaryTailoring(q) => {
                let z = &data.z[cands.tailoring_bin()[q]];
                cols.push(z.iter().zip(&data.t).map(|(a, b)| a * b).collect());
            }
        }
    }
    Ok(cols)
}

/// `n x (2 + total coefficients)` design of the model with every term included.
pub fn assemble_saturated_design(data: &Dataset, cands: &CandidateSet, knots: &[KnotState]) -> Result<DMatrix<f64>> {
    let cols = saturated_columns(data, cands, knots)?;
    Ok(DMatrix::from_fn(data.n(), cols.len(), |i, j| cols[j][i]))
}

/// Expands term indicators to one indicator per saturated-design column.
/// `d` holds the column count of each spline term.
pub fn augment_inclusion(cands: &CandidateSet, omega: &[bool], d: &[usize]) -> Result<Vec<bool>> {
    if omega.len() != cands.n_terms() {
        return Err(Error::Dimension(format!("omega has length {}, expected {}", omega.len(), cands.n_terms())));
    }
    if d.len() != cands.n_spline_terms() {
        return Err(Error::Dimension(format!("{} spline widths for {} spline terms", d.len(), cands.n_spline_terms())));
    }
    let mut out = vec![true, true];
    for (idx, &w) in omega.iter().enumerate() {
        let width = cands.spline_index(idx).map_or(1, |s| d[s]);
        out.extend(std::iter::repeat(w).take(width));
    }
    Ok(out)
}

/// Zeroes the columns of `z_sat` whose indicator is off.
pub fn active_design(z_sat: &DMatrix<f64>, omega_coef: &[bool]) -> Result<DMatrix<f64>> {
    if z_sat.ncols() != omega_coef.len() {
        return Err(Error::Dimension(format!(
            "design has {} columns but {} indicators",
            z_sat.ncols(),
            omega_coef.len()
        )));
    }
    let mut out = z_sat.clone();
    for (j, &on) in omega_coef.iter().enumerate() {
        if !on {
            out.column_mut(j).fill(0.0);
        }
    }
    Ok(out)
}

/// Gaussian log-likelihood of the state's fitted values.
pub fn log_likelihood(data: &Dataset, cands: &CandidateSet, state: &ModelState) -> Result<f64> {
    let cols = saturated_columns(data, cands, &state.knots)?;
    let coef = state.flat_coefficients(cands);
    let mask = state.omega_coef(cands);
    let mut ssr = 0.0;
    for i in 0..data.n() {
        let mut fit = 0.0;
        for (j, col) in cols.iter().enumerate() {
            if mask[j] {
                fit += col[i] * coef[j];
            }
        }
        ssr += (data.y[i] - fit).powi(2);
    }
    let ll = gaussian_loglik(ssr, data.n(), state.sigma_tau);
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::NumericalOverflow("log-likelihood"))
    }
}

pub fn gaussian_loglik(ssr: f64, n: usize, sigma: f64) -> f64 {
    let var = sigma * sigma;
    -0.5 * n as f64 * (2.0 * PI * var).ln() - ssr / (2.0 * var)
}

pub fn ln_choose(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

pub fn ln_factorial(k: usize) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

pub fn ln_normal(x: f64, sd: f64) -> f64 {
    -0.5 * (2.0 * PI * sd * sd).ln() - x * x / (2.0 * sd * sd)
}

pub fn ln_inverse_gamma(v: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * v.ln() - scale / v
}

/// Prior over the term subset alone: `m ln(lambda1) - ln m! - ln C(p, m)`.
pub fn ln_term_prior(m: usize, p: usize, lambda1: f64) -> f64 {
    m as f64 * lambda1.ln() - ln_factorial(m) - ln_choose(p, m)
}

/// Prior over one included spline's knot configuration:
/// `k ln(lambda2) - ln k! - ln C(K, k)`, left unnormalized in k.
pub fn ln_knot_prior(k: usize, n_candidates: usize, lambda2: f64) -> f64 {
    k as f64 * lambda2.ln() - ln_factorial(k) - ln_choose(n_candidates, k)
}

/// Log joint prior of a state. Constants shared by every state are dropped.
pub fn log_prior(state: &ModelState, cands: &CandidateSet, prior: &PriorConfig) -> f64 {
    let mut lp = ln_term_prior(state.n_active_terms(), cands.n_terms(), prior.lambda1);
    lp += ln_normal(state.mu, prior.sigma_b) + ln_normal(state.phi, prior.sigma_b);
    for idx in 0..cands.n_terms() {
        if !state.omega[idx] {
            continue;
        }
        if let Some(s) = cands.spline_index(idx) {
            let ks = &state.knots[s];
            lp += ln_knot_prior(ks.count(), ks.n_candidates(), prior.lambda2);
        }
        lp += state
            .term_coefficients(cands, idx)
            .iter()
            .map(|&c| ln_normal(c, prior.sigma_b))
            .sum::<f64>();
    }
    lp + ln_inverse_gamma(state.sigma_tau * state.sigma_tau, prior.a0, prior.b0)
}

/// Treatment effect at tailoring values `xt` (one per continuous tailoring
/// candidate) and `zt` (one per binary tailoring candidate).
pub fn gamma_at(cands: &CandidateSet, xt: &[f64], zt: &[f64], state: &ModelState) -> Result<f64> {
    if xt.len() != cands.tailoring_cont().len() || zt.len() != cands.tailoring_bin().len() {
        return Err(Error::Dimension("tailoring values do not match the candidate set".into()));
    }
    let base = cands.n_cont() + cands.n_bin();
    let mut g = state.phi;
    for (j, &x) in xt.iter().enumerate() {
        let col = cands.tailoring_cont()[j];
        let b = cands.boundaries()[col];
        if !x.is_finite() {
            return Err(Error::NonFinite("tailoring covariate"));
        }
        if !b.contains(x) {
            return Err(Error::OutsideBoundary { value: x, lo: b.lo, hi: b.hi });
        }
        if state.omega[base + j] {
            let s = cands.n_cont() + j;
            let basis = cands.basis(s, &state.knots[s])?;
            g += basis.dot(x, &state.theta[s]);
        }
    }
    let qbase = base + cands.tailoring_cont().len();
    for (q, &z) in zt.iter().enumerate() {
        if state.omega[qbase + q] {
            g += state.beta2[q] * z;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (Dataset, CandidateSet) {
        let data = Dataset::new(vec![0.3], vec![1.0], vec![], vec![vec![1.0]], vec![], vec![0]).unwrap();
        let cands = CandidateSet::new(&data, vec![], vec![]).unwrap();
        (data, cands)
    }

    fn one_spline(n: usize) -> (Dataset, CandidateSet) {
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let t: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (3.0 * v).sin()).collect();
        let data = Dataset::new(y, t, vec![x], vec![], vec![0], vec![]).unwrap();
        let b = Boundary::new(0.0, 1.0).unwrap();
        let cands = CandidateSet::new(&data, vec![b], vec![vec![0.2, 0.3, 0.5, 0.7]]).unwrap();
        (data, cands)
    }

    #[test]
    fn single_row_binary_design() {
        let (data, cands) = tiny();
        let z = assemble_saturated_design(&data, &cands, &[]).unwrap();
        assert_eq!(z.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn control_rows_zero_in_tailoring_columns() {
        let (data, cands) = one_spline(20);
        let mut knots = cands.empty_knots();
        knots[1].set(1, true);
        let z = assemble_saturated_design(&data, &cands, &knots).unwrap();
        let layout = Layout::new(&cands, &knots);
        let tail = layout.range(1);
        for i in 0..data.n() {
            if data.t()[i] == 0.0 {
                assert!(tail.clone().all(|c| z[(i, c)] == 0.0));
            }
        }
    }

    #[test]
    fn main_block_equals_basis() {
        let (data, cands) = one_spline(15);
        let mut knots = cands.empty_knots();
        knots[0].set(0, true);
        knots[0].set(2, true);
        let z = assemble_saturated_design(&data, &cands, &knots).unwrap();
        let b = spline::build_basis(&data.x()[0], &[0.2, 0.5], cands.boundaries()[0]).unwrap();
        assert_eq!(b.ncols(), 5);
        for i in 0..data.n() {
            for c in 0..5 {
                assert_eq!(z[(i, 2 + c)], b.values[(i, c)]);
            }
        }
    }

    #[test]
    fn augment_inclusion_examples() {
        let (_, cands) = one_spline(5);
        let all_off = augment_inclusion(&cands, &[false, false], &[3, 3]).unwrap();
        assert_eq!(all_off, vec![true, true, false, false, false, false, false, false]);
        let main_on = augment_inclusion(&cands, &[true, false], &[3, 5]).unwrap();
        assert_eq!(&main_on[2..5], &[true, true, true]);
        assert_eq!(main_on.len(), 2 + 3 + 5);
        assert!(augment_inclusion(&cands, &[true], &[3, 3]).is_err());
    }

    #[test]
    fn active_design_masks() {
        let (data, cands) = one_spline(8);
        let knots = cands.empty_knots();
        let z = assemble_saturated_design(&data, &cands, &knots).unwrap();
        let all = vec![true; z.ncols()];
        assert_eq!(active_design(&z, &all).unwrap(), z);
        let mut two = vec![false; z.ncols()];
        two[0] = true;
        two[1] = true;
        let m = active_design(&z, &two).unwrap();
        assert!(m.columns(2, z.ncols() - 2).iter().all(|&v| v == 0.0));
        assert_eq!(m.column(1), z.column(1));
        assert!(active_design(&z, &two[1..]).is_err());
    }

    #[test]
    fn loglik_zero_residual() {
        let (data, cands) = tiny();
        let mut st = ModelState::null(&cands, 1.0);
        st.mu = 0.3;
        let ll = log_likelihood(&data, &cands, &st).unwrap();
        assert!((ll + 0.5 * (2.0 * PI).ln()).abs() < 1e-14);
        st.sigma_tau = 2.0;
        let ll2 = log_likelihood(&data, &cands, &st).unwrap();
        assert!((ll - ll2 - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn term_prior_birth_ratio() {
        let (p, lambda1) = (12, 0.1);
        for m in 0..p {
            let r = (ln_term_prior(m + 1, p, lambda1) - ln_term_prior(m, p, lambda1)).exp();
            assert!((r - lambda1 / (p - m) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn knot_prior_birth_ratio() {
        let r = (ln_knot_prior(3, 9, 1.0) - ln_knot_prior(2, 9, 1.0)).exp();
        assert!((r - 1.0 / 7.0).abs() < 1e-12);
        let death = (ln_knot_prior(2, 9, 1.0) - ln_knot_prior(3, 9, 1.0)).exp();
        assert!((death - 7.0).abs() < 1e-12);
    }

    #[test]
    fn empty_knot_set_has_unit_weight() {
        assert!(ln_knot_prior(0, 9, 2.5).abs() < 1e-12);
    }

    #[test]
    fn gamma_inactive_and_binary() {
        let (_, cands) = tiny();
        let mut st = ModelState::null(&cands, 1.0);
        st.phi = 0.4;
        assert_eq!(gamma_at(&cands, &[], &[1.0], &st).unwrap(), 0.4);
        st.omega = vec![true, true];
        st.beta2[0] = 0.25;
        assert_eq!(gamma_at(&cands, &[], &[1.0], &st).unwrap(), 0.65);
        assert_eq!(gamma_at(&cands, &[], &[0.0], &st).unwrap(), 0.4);
    }

    #[test]
    fn gamma_rejects_out_of_boundary() {
        let (_, cands) = one_spline(6);
        let st = ModelState::null(&cands, 1.0);
        assert!(matches!(gamma_at(&cands, &[1.2], &[], &st), Err(Error::OutsideBoundary { .. })));
    }

    #[test]
    fn hierarchy_helpers() {
        let data = Dataset::new(
            vec![0.0; 3],
            vec![0.0, 1.0, 1.0],
            vec![vec![0.1, 0.5, 0.9]],
            vec![vec![0.0, 1.0, 0.0], vec![1.0, 1.0, 0.0]],
            vec![0],
            vec![1],
        )
        .unwrap();
        let cands = CandidateSet::new(&data, vec![Boundary::new(0.0, 1.0).unwrap()], vec![vec![0.5]]).unwrap();
        // terms: 0 x-main, 1 z0-main, 2 z1-main, 3 x-tail, 4 z1-tail
        assert_eq!(cands.n_terms(), 5);
        assert_eq!(cands.main_of(3), Some(0));
        assert_eq!(cands.main_of(4), Some(2));
        assert_eq!(cands.interaction_of(0), Some(3));
        assert_eq!(cands.interaction_of(1), None);
        assert_eq!(cands.interaction_of(2), Some(4));
        assert_eq!(cands.spline_term(1), 3);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], vec![], vec![], vec![], vec![], vec![]).is_err());
        assert!(Dataset::new(vec![1.0], vec![2.0], vec![], vec![], vec![], vec![]).is_err());
        assert!(Dataset::new(vec![1.0], vec![1.0], vec![], vec![vec![0.5]], vec![], vec![]).is_err());
        assert!(Dataset::new(vec![1.0], vec![1.0], vec![vec![0.2]], vec![], vec![1], vec![]).is_err());
    }
}
