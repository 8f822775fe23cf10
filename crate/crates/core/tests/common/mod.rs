#![allow(dead_code)]

use std::collections::HashMap;

use fkbma::model::{
    assemble_saturated_design, ln_knot_prior, ln_term_prior, CandidateSet, Dataset, ModelState, PriorConfig,
};
use fkbma::sampler::{Chain, SamplerConfig};
use fkbma::spline::Boundary;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Submodel identity: term indicators followed by every spline's knot indicators.
pub type ModelKey = Vec<bool>;

pub fn key_of(state: &ModelState) -> ModelKey {
    let mut k = state.omega.clone();
    for ks in &state.knots {
        k.extend_from_slice(ks.indicators());
    }
    k
}

/// `log N(y; 0, sigma^2 I + sigma_b^2 X X')` with coefficients integrated out.
pub fn log_marginal(x: &DMatrix<f64>, y: &[f64], sigma: f64, sigma_b: f64) -> f64 {
    let n = y.len();
    let mut cov = x * x.transpose() * (sigma_b * sigma_b);
    for i in 0..n {
        cov[(i, i)] += sigma * sigma;
    }
    let ch = cov.cholesky().expect("covariance is positive definite");
    let yv = DVector::from_column_slice(y);
    let alpha = ch.l().solve_lower_triangular(&yv).unwrap();
    let logdet: f64 = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + alpha.norm_squared())
}

fn hierarchy_ok(omega: &[bool], cands: &CandidateSet) -> bool {
    (0..omega.len()).all(|i| !omega[i] || cands.main_of(i).map_or(true, |m| omega[m]))
}

/// Exact posterior probabilities of every reachable submodel.
pub fn enumerate_posterior(data: &Dataset, cands: &CandidateSet, prior: &PriorConfig, sigma: f64) -> HashMap<ModelKey, f64> {
    let p = cands.n_terms();
    let mut logp: Vec<(ModelKey, f64)> = Vec::new();
    for mask in 0..(1usize << p) {
        let omega: Vec<bool> = (0..p).map(|i| mask >> i & 1 == 1).collect();
        if !hierarchy_ok(&omega, cands) {
            continue;
        }
        // every active spline ranges over all knot subsets; inactive ones have none
        let splines: Vec<usize> = (0..cands.n_spline_terms()).filter(|&s| omega[cands.spline_term(s)]).collect();
        let sizes: Vec<usize> = splines.iter().map(|&s| cands.empty_knots()[s].n_candidates()).collect();
        let total_bits: usize = sizes.iter().sum();
        for kmask in 0..(1usize << total_bits) {
            let mut knots = cands.empty_knots();
            let mut off = 0;
            let mut lp = ln_term_prior(omega.iter().filter(|&&o| o).count(), p, prior.lambda1);
            for (&s, &sz) in splines.iter().zip(&sizes) {
                for c in 0..sz {
                    knots[s].set(c, kmask >> (off + c) & 1 == 1);
                }
                off += sz;
                lp += ln_knot_prior(knots[s].count(), sz, prior.lambda2);
            }
            let z = assemble_saturated_design(data, cands, &knots).unwrap();
            let mut state = ModelState::null(cands, sigma);
            state.omega = omega.clone();
            state.knots = knots.clone();
            let cols: Vec<usize> = state
                .omega_coef(cands)
                .iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(|(j, _)| j)
                .collect();
            let x = DMatrix::from_fn(data.n(), cols.len(), |i, j| z[(i, cols[j])]);
            lp += log_marginal(&x, data.y(), sigma, prior.sigma_b);
            logp.push((key_of(&state), lp));
        }
    }
    let m = logp.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    let norm: f64 = logp.iter().map(|(_, l)| (l - m).exp()).sum();
    logp.into_iter().map(|(k, l)| (k, (l - m).exp() / norm)).collect()
}

pub fn total_variation(a: &HashMap<ModelKey, f64>, b: &HashMap<ModelKey, f64>) -> f64 {
    let mut keys: Vec<&ModelKey> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys.iter().map(|k| (a.get(*k).unwrap_or(&0.0) - b.get(*k).unwrap_or(&0.0)).abs()).sum::<f64>()
}

/// Visit frequencies of a chain with the residual sd held at `sigma`.
pub fn visit_frequencies(
    data: &Dataset,
    cands: &CandidateSet,
    prior: &PriorConfig,
    sigma: f64,
    iterations: usize,
    seed: u64,
) -> HashMap<ModelKey, f64> {
    let cfg = SamplerConfig { fix_sigma_tau: Some(sigma), ..SamplerConfig::fast() };
    let mut chain = Chain::initialize(data, cands, prior, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let burn = iterations / 20;
    let mut counts: HashMap<ModelKey, f64> = HashMap::new();
    for it in 0..iterations + burn {
        chain.iterate(&mut rng);
        if it >= burn {
            *counts.entry(key_of(chain.state())).or_default() += 1.0;
        }
    }
    for v in counts.values_mut() {
        *v /= iterations as f64;
    }
    counts
}

/// One spline main effect (not tailoring) with four knot candidates.
pub fn spline_toy(seed: u64) -> (Dataset, CandidateSet) {
    let n = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let t: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let y: Vec<f64> = x
        .iter()
        .zip(&t)
        .map(|(v, tt)| 1.2 * (5.0 * v).sin() + 0.3 * tt + fkbma_normal(&mut rng))
        .collect();
    let data = Dataset::new(y, t, vec![x], vec![], vec![], vec![]).unwrap();
    let cands = CandidateSet::new(&data, vec![Boundary::new(0.0, 1.0).unwrap()], vec![vec![0.2, 0.4, 0.6, 0.8]]).unwrap();
    (data, cands)
}

/// Two binary biomarkers, each a candidate main effect and a candidate interaction.
pub fn binary_toy(seed: u64) -> (Dataset, CandidateSet) {
    let n = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let z1: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() < 0.5) as u8 as f64).collect();
    let z2: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() < 0.4) as u8 as f64).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 0.4 * z1[i] + 0.5 * t[i] * z1[i] + 0.15 * z2[i] + fkbma_normal(&mut rng))
        .collect();
    let data = Dataset::new(y, t, vec![], vec![z1, z2], vec![], vec![0, 1]).unwrap();
    let cands = CandidateSet::new(&data, vec![], vec![]).unwrap();
    (data, cands)
}

pub fn fkbma_normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Toy priors: unit-scale coefficients keep the submodel posterior spread out.
pub fn toy_prior() -> PriorConfig {
    PriorConfig { lambda1: 1.0, lambda2: 1.0, sigma_b: 1.0, ..PriorConfig::default() }
}

/// One continuous biomarker that is both a candidate main effect and a
/// candidate tailoring variable, two knot candidates each.
pub fn spline_tailoring_toy(seed: u64) -> (Dataset, CandidateSet) {
    let n = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let t: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let y: Vec<f64> = x
        .iter()
        .zip(&t)
        .map(|(v, tt)| 0.8 * v + tt * (1.5 * v - 0.6) + 0.5 * fkbma_normal(&mut rng))
        .collect();
    let data = Dataset::new(y, t, vec![x], vec![], vec![0], vec![]).unwrap();
    let b = Boundary::new(0.0, 1.0).unwrap();
    let cands = CandidateSet::new(&data, vec![b], vec![vec![0.35, 0.65]]).unwrap();
    (data, cands)
}
