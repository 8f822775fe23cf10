//! Decisions from posterior draws: effective-subspace membership, prevalence,
//! the enriched treatment effect, efficacy/futility rules, inclusion
//! probabilities and the Geweke diagnostic.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CandidateSet, ModelState, Term};
use crate::sampler::PosteriorDraws;
use crate::spline::CubicBasis;

/// Inclusion probability below which a variable is dropped before refitting.
pub const PRUNE_THRESHOLD: f64 = 0.10;

/// Convergence cut-off on the largest absolute Geweke z-score.
pub const GEWEKE_LIMIT: f64 = 4.0;

const GEWEKE_BATCHES: usize = 20;
const GEWEKE_SE_FLOOR: f64 = 1e-12;

/// Full covariate profile of one patient: every continuous marker in `x`,
/// every binary marker in `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

/// A biomarker, by column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variable {
    Continuous(usize),
    Binary(usize),
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variable::Continuous(i) => write!(f, "x{}", i + 1),
            Variable::Binary(i) => write!(f, "z{}", i + 1),
        }
    }
}

/// Variable a term belongs to.
pub fn term_variable(cands: &CandidateSet, term: Term) -> Variable {
    match term {
        Term::SplineMain(i) => Variable::Continuous(i),
        Term::BinaryMain(r) => Variable::Binary(r),
        Term::SplineTailoring(j) => Variable::Continuous(cands.tailoring_cont()[j]),
        Term::BinaryTailoring(q) => Variable::Binary(cands.tailoring_bin()[q]),
    }
}

/// Treatment effect of one draw, with the tailoring splines prepared once.
struct DrawGamma<'a> {
    state: &'a ModelState,
    splines: Vec<(usize, CubicBasis, &'a [f64])>,
    binaries: Vec<(usize, f64)>,
}

impl<'a> DrawGamma<'a> {
    fn new(cands: &CandidateSet, state: &'a ModelState) -> Result<Self> {
        let base = cands.n_cont() + cands.n_bin();
        let mut splines = Vec::new();
        for (j, &col) in cands.tailoring_cont().iter().enumerate() {
            if state.omega[base + j] {
                let s = cands.n_cont() + j;
                splines.push((col, cands.basis(s, &state.knots[s])?, state.theta[s].as_slice()));
            }
        }
        let qbase = base + cands.tailoring_cont().len();
        let binaries = cands
            .tailoring_bin()
            .iter()
            .enumerate()
            .filter(|(q, _)| state.omega[qbase + q])
            .map(|(q, &col)| (col, state.beta2[q]))
            .collect();
        Ok(Self { state, splines, binaries })
    }

    /// Covariates outside a spline's boundary are clamped onto it.
    fn eval(&self, p: &Profile) -> f64 {
        let mut g = self.state.phi;
        for (col, basis, theta) in &self.splines {
            g += basis.dot(basis.boundary().clamp(p.x[*col]), theta);
        }
        for &(col, b) in &self.binaries {
            g += b * p.z[col];
        }
        g
    }
}

fn check_profiles(cands: &CandidateSet, profiles: &[Profile]) -> Result<()> {
    for p in profiles {
        if p.x.len() != cands.n_cont() || p.z.len() != cands.n_bin() {
            return Err(Error::Dimension("profile does not match the candidate set".into()));
        }
        if p.x.iter().chain(&p.z).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("profile covariate"));
        }
    }
    Ok(())
}

/// `gamma[d][i]`: treatment effect of draw `d` at profile `i`.
pub fn gamma_matrix(draws: &PosteriorDraws, profiles: &[Profile]) -> Result<Vec<Vec<f64>>> {
    check_profiles(&draws.cands, profiles)?;
    draws
        .states
        .iter()
        .map(|s| {
            let g = DrawGamma::new(&draws.cands, s)?;
            Ok(profiles.iter().map(|p| g.eval(p)).collect())
        })
        .collect()
}

/// The effective subspace: profiles whose posterior probability of a
/// treatment effect above `e1` exceeds `1 - alpha`.
#[derive(Debug, Clone, Copy)]
pub struct SubspaceModel<'a> {
    pub draws: &'a PosteriorDraws,
    pub e1: f64,
    pub alpha: f64,
}

impl<'a> SubspaceModel<'a> {
    pub fn new(draws: &'a PosteriorDraws, e1: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !e1.is_finite() {
            return Err(Error::Config("e1 must be finite".into()));
        }
        if draws.states.is_empty() {
            return Err(Error::InvalidData("no posterior draws".into()));
        }
        Ok(Self { draws, e1, alpha })
    }

    /// Posterior probability that the treatment effect at each profile exceeds `e1`.
    pub fn benefit_probabilities(&self, profiles: &[Profile]) -> Result<Vec<f64>> {
        let gm = gamma_matrix(self.draws, profiles)?;
        Ok(self.probabilities_from(&gm, profiles.len()))
    }

    fn probabilities_from(&self, gm: &[Vec<f64>], n: usize) -> Vec<f64> {
        let mut hits = vec![0usize; n];
        for row in gm {
            for (h, &g) in hits.iter_mut().zip(row) {
                *h += usize::from(g > self.e1);
            }
        }
        hits.iter().map(|&h| h as f64 / gm.len() as f64).collect()
    }

    fn is_member(&self, prob: f64) -> bool {
        prob > 1.0 - self.alpha
    }

    pub fn members(&self, profiles: &[Profile]) -> Result<Vec<bool>> {
        Ok(self.benefit_probabilities(profiles)?.into_iter().map(|p| self.is_member(p)).collect())
    }

    /// Membership, prevalence and enriched-effect draws from one pass over the draws.
    pub fn analyze(&self, profiles: &[Profile]) -> Result<SubspaceSummary> {
        let gm = gamma_matrix(self.draws, profiles)?;
        let probs = self.probabilities_from(&gm, profiles.len());
        let member: Vec<bool> = probs.iter().map(|&p| self.is_member(p)).collect();
        let count = member.iter().filter(|&&m| m).count();
        let prevalence = if profiles.is_empty() { 0.0 } else { count as f64 / profiles.len() as f64 };
        let delta = if count == 0 { Vec::new() } else { delta_from(&gm, &member, count) };
        Ok(SubspaceSummary { member, prevalence, delta })
    }
}

/// Output of [`SubspaceModel::analyze`]; `delta` is empty when nobody is a member.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceSummary {
    pub member: Vec<bool>,
    pub prevalence: f64,
    pub delta: Vec<f64>,
}

fn delta_from(gm: &[Vec<f64>], member: &[bool], count: usize) -> Vec<f64> {
    gm.iter()
        .map(|row| row.iter().zip(member).filter(|(_, &m)| m).map(|(g, _)| g).sum::<f64>() / count as f64)
        .collect()
}

pub fn membership(sub: &SubspaceModel, profile: &Profile) -> Result<bool> {
    Ok(sub.members(std::slice::from_ref(profile))?[0])
}

/// Fraction of `patients` inside the effective subspace.
pub fn prevalence(sub: &SubspaceModel, patients: &[Profile]) -> Result<f64> {
    Ok(sub.analyze(patients)?.prevalence)
}

/// Per-draw mean treatment effect over the member patients.
pub fn enriched_effect_draws(sub: &SubspaceModel, patients: &[Profile]) -> Result<Vec<f64>> {
    let s = sub.analyze(patients)?;
    if s.delta.is_empty() {
        return Err(Error::EmptySubspace);
    }
    Ok(s.delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionThresholds {
    pub b1: f64,
    pub b2: f64,
    #[serde(rename = "B1")]
    pub big_b1: f64,
    #[serde(rename = "B2")]
    pub big_b2: f64,
    pub pi: f64,
}

impl Default for DecisionThresholds {
    fn default() -> Self {
        Self { b1: 0.0, b2: 0.0, big_b1: 0.975, big_b2: 0.8, pi: 0.10 }
    }
}

impl DecisionThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("B1", self.big_b1), ("B2", self.big_b2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.pi) {
            return Err(Error::Config(format!("pi must lie in [0, 1), got {}", self.pi)));
        }
        if !(self.b1.is_finite() && self.b2.is_finite()) {
            return Err(Error::Config("b1 and b2 must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Efficacy,
    Futility,
    Continue,
}

/// Efficacy is checked before futility.
pub fn decide(delta: &[f64], thr: &DecisionThresholds) -> Decision {
    if delta.is_empty() {
        return Decision::Futility;
    }
    let n = delta.len() as f64;
    let above = delta.iter().filter(|&&d| d > thr.b1).count() as f64 / n;
    if above > thr.big_b1 {
        return Decision::Efficacy;
    }
    let below = delta.iter().filter(|&&d| d < thr.b2).count() as f64 / n;
    if below > thr.big_b2 {
        Decision::Futility
    } else {
        Decision::Continue
    }
}

/// Fraction of draws that include each term.
pub fn inclusion_probabilities(draws: &PosteriorDraws) -> Vec<f64> {
    let p = draws.cands.n_terms();
    let mut counts = vec![0usize; p];
    for s in &draws.states {
        for (c, &on) in counts.iter_mut().zip(&s.omega) {
            *c += usize::from(on);
        }
    }
    let n = draws.states.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Variables whose largest term-inclusion probability is below the pruning threshold.
pub fn pruned_variables(cands: &CandidateSet, inclusion: &[f64]) -> Vec<Variable> {
    let mut best: Vec<(Variable, f64)> = Vec::new();
    for (idx, term) in cands.terms().enumerate() {
        let v = term_variable(cands, term);
        match best.iter_mut().find(|(b, _)| *b == v) {
            Some(entry) => entry.1 = entry.1.max(inclusion[idx]),
            None => best.push((v, inclusion[idx])),
        }
    }
    let mut out: Vec<Variable> = best.into_iter().filter(|(_, p)| *p < PRUNE_THRESHOLD).map(|(v, _)| v).collect();
    out.sort();
    out
}

/// Tailoring variables whose interaction term reaches the pruning threshold.
pub fn selected_tailoring(cands: &CandidateSet, inclusion: &[f64]) -> Vec<Variable> {
    let mut out: Vec<Variable> = cands
        .terms()
        .enumerate()
        .filter(|(idx, t)| t.is_tailoring() && inclusion[*idx] >= PRUNE_THRESHOLD)
        .map(|(_, t)| term_variable(cands, t))
        .collect();
    out.sort();
    out
}

fn batch_means_se(seg: &[f64]) -> f64 {
    let n = seg.len();
    let batches = GEWEKE_BATCHES.min(n);
    if batches < 2 {
        return GEWEKE_SE_FLOOR;
    }
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| seg[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Geweke z-score comparing the first and last quarters of a trace, with
/// batch-means standard errors.
pub fn geweke(trace: &[f64]) -> f64 {
    let q = trace.len() / 4;
    if q == 0 {
        return 0.0;
    }
    let first = &trace[..q];
    let last = &trace[trace.len() - q..];
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let se = (batch_means_se(first).powi(2) + batch_means_se(last).powi(2)).sqrt().max(GEWEKE_SE_FLOOR);
    let z = (mean(first) - mean(last)) / se;
    if z.is_finite() {
        z
    } else {
        0.0
    }
}

/// Largest |z| over the treatment effect of every patient and the overall
/// treatment coefficient.
pub fn max_geweke(draws: &PosteriorDraws, patients: &[Profile]) -> Result<f64> {
    let gm = gamma_matrix(draws, patients)?;
    let phi: Vec<f64> = draws.states.iter().map(|s| s.phi).collect();
    let mut worst = geweke(&phi).abs();
    let mut trace = vec![0.0; gm.len()];
    for i in 0..patients.len() {
        for (t, row) in trace.iter_mut().zip(&gm) {
            *t = row[i];
        }
        worst = worst.max(geweke(&trace).abs());
    }
    Ok(worst)
}

pub fn converged(max_z: f64) -> bool {
    max_z < GEWEKE_LIMIT
}
