//! Reversible-jump sampler over term subsets, knot configurations and
//! coefficients.
//!
//! One iteration visits, for every spline term in the current model, a knot
//! relocation, a knot birth/death and a coefficient random walk; then a term
//! birth/death, a random walk on the intercept, treatment and binary
//! coefficients, and finally a Gibbs draw of the residual variance.

mod augment;
mod cache;
mod moves;

pub use augment::{augment_shift, glm_augment};
pub use moves::{eligible_terms, ig_parameters, Chain};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CandidateSet, Dataset, ModelState, PriorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub burn_in: usize,
    pub n_samples: usize,
    pub thin: usize,
    /// Probability of proposing a knot birth (else death).
    pub b: f64,
    /// Probability of proposing a term birth (else death).
    pub c: f64,
    /// Knot-move window half-width; `None` uses twice the median candidate spacing.
    #[serde(default)]
    pub w: Option<f64>,
    pub sigma_v: f64,
    pub sigma_u: f64,
    pub sigma_eps: f64,
    #[serde(default)]
    pub seed: u64,
    /// Holds the residual sd fixed and skips the variance update.
    #[serde(default)]
    pub fix_sigma_tau: Option<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl SamplerConfig {
    /// 30k burn-in, 2000 draws thinned by 10.
    pub fn paper() -> Self {
        Self {
            burn_in: 30_000,
            n_samples: 2_000,
            thin: 10,
            b: 0.5,
            c: 0.5,
            w: None,
            sigma_v: 0.5,
            sigma_u: 0.5,
            sigma_eps: 0.15,
            seed: 0,
            fix_sigma_tau: None,
        }
    }

    pub fn fast() -> Self {
        Self { burn_in: 3_000, n_samples: 500, thin: 5, ..Self::paper() }
    }

    pub fn total_iterations(&self) -> usize {
        self.burn_in + self.n_samples * self.thin
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, p) in [("b", self.b), ("c", self.c)] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("sampler.{name} must lie in (0, 1), got {p}"));
            }
        }
        for (name, v) in [("sigma_v", self.sigma_v), ("sigma_u", self.sigma_u), ("sigma_eps", self.sigma_eps)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("sampler.{name} must be positive, got {v}"));
            }
        }
        if let Some(w) = self.w {
            if !(w.is_finite() && w > 0.0) {
                return bad(format!("sampler.w must be positive, got {w}"));
            }
        }
        if let Some(s) = self.fix_sigma_tau {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("sampler.fix_sigma_tau must be positive, got {s}"));
            }
        }
        for (name, v) in [("burn_in", self.burn_in), ("n_samples", self.n_samples), ("thin", self.thin)] {
            if v == 0 {
                return bad(format!("sampler.{name} must be at least 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveKind {
    KnotMove,
    KnotBirth,
    KnotDeath,
    SplineCoef,
    TermBirth,
    TermDeath,
    FixedCoef,
}

impl MoveKind {
    pub const ALL: [MoveKind; 7] = [
        MoveKind::KnotMove,
        MoveKind::KnotBirth,
        MoveKind::KnotDeath,
        MoveKind::SplineCoef,
        MoveKind::TermBirth,
        MoveKind::TermDeath,
        MoveKind::FixedCoef,
    ];
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCount {
    pub attempted: u64,
    pub accepted: u64,
}

impl MoveCount {
    pub fn rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    counts: [MoveCount; 7],
}

impl AcceptanceStats {
    pub fn record(&mut self, kind: MoveKind, accepted: bool) {
        let c = &mut self.counts[kind as usize];
        c.attempted += 1;
        c.accepted += u64::from(accepted);
    }

    pub fn get(&self, kind: MoveKind) -> MoveCount {
        self.counts[kind as usize]
    }
}

/// Retained states of one chain.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub states: Vec<ModelState>,
    pub acceptance: AcceptanceStats,
    pub cands: CandidateSet,
}

/// Runs a chain seeded from `config.seed`.
pub fn run_chain(data: &Dataset, cands: &CandidateSet, prior: &PriorConfig, config: &SamplerConfig) -> Result<PosteriorDraws> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_chain_with_rng(data, cands, prior, config, &mut rng)
}

/// Starts at the least-squares fit of the full model with no interior knots
/// and keeps every `thin`-th state after burn-in.
pub fn run_chain_with_rng<R: Rng + ?Sized>(
    data: &Dataset,
    cands: &CandidateSet,
    prior: &PriorConfig,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    let mut chain = Chain::initialize(data, cands, prior, config)?;
    let mut states = Vec::with_capacity(config.n_samples);
    for it in 1..=config.total_iterations() {
        chain.iterate(rng);
        if it > config.burn_in && (it - config.burn_in) % config.thin == 0 {
            states.push(chain.state().clone());
        }
    }
    Ok(PosteriorDraws { states, acceptance: chain.stats().clone(), cands: cands.clone() })
}
