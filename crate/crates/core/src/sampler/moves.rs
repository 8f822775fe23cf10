use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::augment::augment_shift;
use super::cache::DesignCache;
use super::{AcceptanceStats, MoveKind, SamplerConfig};
use crate::error::{Error, Result};
use crate::linalg::{cross_of, gram_of, residual_ss, solve_normal_equations};
use crate::model::{
    gaussian_loglik, ln_normal, log_prior, CandidateSet, Dataset, Layout, ModelState, PriorConfig, Term,
};
use crate::spline::{KnotState, DEGREE};

/// Terms that may be added and removed without breaking the hierarchy:
/// an interaction needs its main effect, and a main effect with an active
/// interaction cannot leave.
pub fn eligible_terms(omega: &[bool], cands: &CandidateSet) -> (Vec<usize>, Vec<usize>) {
    let mut addable = Vec::new();
    let mut removable = Vec::new();
    for idx in 0..cands.n_terms() {
        if omega[idx] {
            let blocked = cands.interaction_of(idx).is_some_and(|i| omega[i]);
            if !blocked {
                removable.push(idx);
            }
        } else {
            let allowed = cands.main_of(idx).map_or(true, |m| omega[m]);
            if allowed {
                addable.push(idx);
            }
        }
    }
    (addable, removable)
}

/// Shape and scale of the inverse-gamma full conditional of the residual variance.
pub fn ig_parameters(n: usize, ssr: f64, a0: f64, b0: f64) -> (f64, f64) {
    (n as f64 / 2.0 + a0, ssr / 2.0 + b0)
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.gen::<f64>().ln() < log_ratio
}

fn normal<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sd
}

fn active_columns(layout: &Layout, omega: &[bool]) -> Vec<usize> {
    let mut out = vec![0, 1];
    for (idx, &on) in omega.iter().enumerate() {
        if on {
            out.extend(layout.range(idx));
        }
    }
    out
}

/// Median gap between consecutive candidates, doubled.
fn default_window(candidates: &[f64], span: f64) -> f64 {
    if candidates.len() < 2 {
        return span;
    }
    let mut gaps: Vec<f64> = candidates.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let m = gaps.len();
    let median = if m % 2 == 1 { gaps[m / 2] } else { 0.5 * (gaps[m / 2 - 1] + gaps[m / 2]) };
    2.0 * median
}

/// Mutable chain state together with the cached design statistics.
#[derive(Debug, Clone)]
pub struct Chain<'a> {
    data: &'a Dataset,
    cands: &'a CandidateSet,
    prior: PriorConfig,
    config: SamplerConfig,
    inputs: Vec<Vec<f64>>,
    windows: Vec<f64>,
    state: ModelState,
    cache: DesignCache,
    stats: AcceptanceStats,
}

impl<'a> Chain<'a> {
    /// Chain positioned at `state`.
    pub fn new(
        data: &'a Dataset,
        cands: &'a CandidateSet,
        prior: &PriorConfig,
        config: &SamplerConfig,
        mut state: ModelState,
    ) -> Result<Self> {
        prior.validate()?;
        config.validate()?;
        state.check_invariants(cands)?;
        if let Some(s) = config.fix_sigma_tau {
            state.sigma_tau = s;
        }
        let cache = DesignCache::new(data, cands, &state.knots)?;
        let inputs = (0..cands.n_spline_terms()).map(|s| crate::model::spline_inputs(data, cands, s)).collect();
        let windows = (0..cands.n_spline_terms())
            .map(|s| {
                let col = cands.spline_column(s);
                let b = cands.boundaries()[col];
                config.w.unwrap_or_else(|| default_window(cands.knot_candidates(col), b.hi - b.lo))
            })
            .collect();
        Ok(Self {
            data,
            cands,
            prior: *prior,
            config: config.clone(),
            inputs,
            windows,
            state,
            cache,
            stats: AcceptanceStats::default(),
        })
    }

    /// Least-squares fit of the full model with no interior knots.
    pub fn initialize(data: &'a Dataset, cands: &'a CandidateSet, prior: &PriorConfig, config: &SamplerConfig) -> Result<Self> {
        let mut state = ModelState::null(cands, 1.0);
        state.omega = vec![true; cands.n_terms()];
        let cache = DesignCache::new(data, cands, &state.knots)?;
        let all: Vec<usize> = (0..cache.width()).collect();
        let fit = solve_normal_equations(cache.sub_gram(&all), &cache.sub_zy(&all))?;
        state.set_flat_coefficients(cands, fit.as_slice());
        let ssr = cache.ssr(fit.as_slice(), &all);
        let n = data.n();
        let df = if n > all.len() { n - all.len() } else { n };
        let var = ssr / df as f64;
        state.sigma_tau = if var.is_finite() && var > 1e-12 { var.sqrt() } else { 1e-6 };
        Self::new(data, cands, prior, config, state)
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn stats(&self) -> &AcceptanceStats {
        &self.stats
    }

    pub fn window(&self, s: usize) -> f64 {
        self.windows[s]
    }

    fn log_target(&self, state: &ModelState, ssr: f64) -> f64 {
        gaussian_loglik(ssr, self.data.n(), state.sigma_tau) + log_prior(state, self.cands, &self.prior)
    }

    fn current_ssr(&self) -> f64 {
        let coef = self.state.flat_coefficients(self.cands);
        let active = active_columns(&self.cache.layout, &self.state.omega);
        self.cache.ssr(&coef, &active)
    }

    /// Unnormalized log posterior of the current state.
    pub fn log_posterior(&self) -> f64 {
        self.log_target(&self.state, self.current_ssr())
    }

    /// One full sweep of every move.
    pub fn iterate<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for s in 0..self.cands.n_spline_terms() {
            if self.state.omega[self.cands.spline_term(s)] {
                self.step_knot_move(s, rng);
                self.step_knot_birth_death(s, rng);
                self.step_spline_coef_update(s, rng);
            }
        }
        self.step_term_birth_death(rng);
        self.step_fixed_coef_update(rng);
        if self.config.fix_sigma_tau.is_none() {
            self.step_sigma_gibbs(rng);
        }
    }

    fn block_for(&self, s: usize, knots: &KnotState) -> Result<Vec<Vec<f64>>> {
        let basis = self.cands.basis(s, knots)?;
        let d = basis.ncols();
        let n = self.data.n();
        let mut cols = vec![vec![0.0; n]; d];
        let mask = self.cands.spline_is_tailoring(s);
        let t = self.data.t();
        for (i, &x) in self.inputs[s].iter().enumerate() {
            if mask && t[i] == 0.0 {
                continue;
            }
            let (first, vals) = basis.nonzero(x);
            for (r, v) in vals.iter().enumerate() {
                let full = first + r;
                if full >= 1 {
                    cols[full - 1][i] = *v;
                }
            }
        }
        Ok(cols)
    }

    /// `Y` minus the fitted values of every active column outside spline `s`.
    fn partial_residual(&self, s: usize) -> Vec<f64> {
        let term = self.cands.spline_term(s);
        let block = self.cache.layout.range(term);
        let coef = self.state.flat_coefficients(self.cands);
        let mut r = self.data.y().to_vec();
        for a in active_columns(&self.cache.layout, &self.state.omega) {
            if block.contains(&a) || coef[a] == 0.0 {
                continue;
            }
            let ca = coef[a];
            for (ri, zi) in r.iter_mut().zip(&self.cache.cols[a]) {
                *ri -= ca * zi;
            }
        }
        r
    }

    fn commit_knots(&mut self, s: usize, knots: KnotState, theta: Vec<f64>, block: Vec<Vec<f64>>) {
        let term = self.cands.spline_term(s);
        self.state.knots[s] = knots;
        self.state.theta[s] = theta;
        let layout = Layout::new(self.cands, &self.state.knots);
        self.cache.replace_block(term, block, layout, self.data.y());
    }

    /// Relocates one active knot of spline `s` to a vacant candidate within
    /// the window around it.
    pub fn step_knot_move<R: Rng + ?Sized>(&mut self, s: usize, rng: &mut R) -> bool {
        let knots = &self.state.knots[s];
        let active = knots.active_indices();
        if active.is_empty() {
            return false;
        }
        let w = self.windows[s];
        let from = active[rng.gen_range(0..active.len())];
        let cand = knots.candidates();
        let vacant = knots.vacant_within(cand[from], w);
        if vacant.is_empty() {
            return false;
        }
        let to = vacant[rng.gen_range(0..vacant.len())];
        let mut proposed = knots.clone();
        proposed.set(from, false);
        proposed.set(to, true);
        let reverse = proposed.vacant_within(cand[to], w).len();

        let ok = (|| -> Result<bool> {
            let r = self.partial_residual(s);
            let term = self.cands.spline_term(s);
            let cur_block = &self.cache.cols[self.cache.layout.range(term)];
            let new_block = self.block_for(s, &proposed)?;
            let theta = &self.state.theta[s];
            let ssr_cur = residual_ss(&r, cur_block, theta);
            let ssr_new = residual_ss(&r, &new_block, theta);
            let var = self.state.sigma_tau.powi(2);
            let log_ratio = (ssr_cur - ssr_new) / (2.0 * var) + (vacant.len() as f64 / reverse as f64).ln();
            if accept(log_ratio, rng) {
                let theta = theta.clone();
                self.commit_knots(s, proposed, theta, new_block);
                Ok(true)
            } else {
                Ok(false)
            }
        })()
        .unwrap_or(false);
        self.stats.record(MoveKind::KnotMove, ok);
        ok
    }

    /// Adds or removes one knot of spline `s`, re-centring its coefficients
    /// on the least-squares fit of the partial residual.
    pub fn step_knot_birth_death<R: Rng + ?Sized>(&mut self, s: usize, rng: &mut R) -> bool {
        let b = self.config.b;
        let birth = rng.gen::<f64>() < b;
        let kind = if birth { MoveKind::KnotBirth } else { MoveKind::KnotDeath };
        let knots = self.state.knots[s].clone();
        let (k, kmax) = (knots.count(), knots.n_candidates());
        if (birth && k == kmax) || (!birth && k == 0) {
            self.stats.record(kind, false);
            return false;
        }
        let ok = self.knot_birth_death_inner(s, birth, knots, rng).unwrap_or(false);
        self.stats.record(kind, ok);
        ok
    }

    fn knot_birth_death_inner<R: Rng + ?Sized>(&mut self, s: usize, birth: bool, knots: KnotState, rng: &mut R) -> Result<bool> {
        let b = self.config.b;
        let sigma_v = self.config.sigma_v;
        let (k, kmax) = (knots.count(), knots.n_candidates());
        let mut proposed = knots.clone();
        let (j, origin): (usize, Vec<Option<usize>>) = if birth {
            let vacant = knots.vacant_indices();
            let pick = vacant[rng.gen_range(0..vacant.len())];
            proposed.set(pick, true);
            let j = proposed.rank(pick) + 1;
            let d_new = k + 1 + DEGREE;
            (j, (0..d_new).map(|i| if i < j { Some(i) } else if i == j { None } else { Some(i - 1) }).collect())
        } else {
            let act = knots.active_indices();
            let pick = act[rng.gen_range(0..act.len())];
            let j = knots.rank(pick) + 1;
            proposed.set(pick, false);
            let d_new = k - 1 + DEGREE;
            (j, (0..d_new).map(|i| if i < j { Some(i) } else { Some(i + 1) }).collect())
        };

        let r = self.partial_residual(s);
        let term = self.cands.spline_term(s);
        let cur_block = self.cache.cols[self.cache.layout.range(term)].to_vec();
        let new_block = self.block_for(s, &proposed)?;
        let fit_old = solve_normal_equations(gram_of(&cur_block), &cross_of(&cur_block, &r))?;
        let fit_new = solve_normal_equations(gram_of(&new_block), &cross_of(&new_block, &r))?;
        let theta = &self.state.theta[s];

        let (theta_new, log_jump) = if birth {
            let v = normal(rng, sigma_v);
            let prop = augment_shift(theta, fit_old.as_slice(), fit_new.as_slice(), &origin, &[v]);
            // Forward density of the jump enters the denominator.
            (prop, -ln_normal(v, sigma_v))
        } else {
            let v = theta[j] - fit_old[j];
            let prop = augment_shift(theta, fit_old.as_slice(), fit_new.as_slice(), &origin, &[]);
            (prop, ln_normal(v, sigma_v))
        };

        let ssr_cur = residual_ss(&r, &cur_block, theta);
        let ssr_new = residual_ss(&r, &new_block, &theta_new);
        let mut candidate = self.state.clone();
        candidate.knots[s] = proposed.clone();
        candidate.theta[s] = theta_new.clone();
        let move_ratio = if birth {
            ((1.0 - b) / b).ln() + ((kmax - k) as f64 / (k + 1) as f64).ln()
        } else {
            (b / (1.0 - b)).ln() + (k as f64 / (kmax - k + 1) as f64).ln()
        };
        let log_ratio = self.log_target(&candidate, ssr_new) - self.log_target(&self.state, ssr_cur) + move_ratio + log_jump;
        if accept(log_ratio, rng) {
            self.commit_knots(s, proposed, theta_new, new_block);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Gaussian random walk on the coefficients of spline `s`.
    pub fn step_spline_coef_update<R: Rng + ?Sized>(&mut self, s: usize, rng: &mut R) -> bool {
        let sd = self.config.sigma_eps;
        let mut candidate = self.state.clone();
        for c in candidate.theta[s].iter_mut() {
            *c += normal(rng, sd);
        }
        let ok = self.mh_same_layout(candidate, rng);
        self.stats.record(MoveKind::SplineCoef, ok);
        ok
    }

    /// Joint random walk on intercept, treatment effect and active binary coefficients.
    pub fn step_fixed_coef_update<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let sd = self.config.sigma_eps;
        let mut candidate = self.state.clone();
        candidate.mu += normal(rng, sd);
        candidate.phi += normal(rng, sd);
        for idx in 0..self.cands.n_terms() {
            if !candidate.omega[idx] {
                continue;
            }
            match self.cands.term(idx) {
                Term::BinaryMain(r) => candidate.beta1[r] += normal(rng, sd),
                Term::BinaryTailoring(q) => candidate.beta2[q] += normal(rng, sd),
                _ => {}
            }
        }
        let ok = self.mh_same_layout(candidate, rng);
        self.stats.record(MoveKind::FixedCoef, ok);
        ok
    }

    /// Metropolis step between states sharing knots and term inclusion.
    fn mh_same_layout<R: Rng + ?Sized>(&mut self, candidate: ModelState, rng: &mut R) -> bool {
        let active = active_columns(&self.cache.layout, &self.state.omega);
        let ssr_cur = self.cache.ssr(&self.state.flat_coefficients(self.cands), &active);
        let ssr_new = self.cache.ssr(&candidate.flat_coefficients(self.cands), &active);
        let log_ratio = self.log_target(&candidate, ssr_new) - self.log_target(&self.state, ssr_cur);
        if accept(log_ratio, rng) {
            self.state = candidate;
            true
        } else {
            false
        }
    }

    /// Adds or removes one eligible term, shifting the shared coefficients by
    /// the change in the least-squares fit of the active design.
    pub fn step_term_birth_death<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let birth = rng.gen::<f64>() < self.config.c;
        let kind = if birth { MoveKind::TermBirth } else { MoveKind::TermDeath };
        let ok = self.term_birth_death_inner(birth, rng).unwrap_or(false);
        self.stats.record(kind, ok);
        ok
    }

    fn term_birth_death_inner<R: Rng + ?Sized>(&mut self, birth: bool, rng: &mut R) -> Result<bool> {
        let c = self.config.c;
        let sigma_u = self.config.sigma_u;
        let cands = self.cands;
        let (addable, removable) = eligible_terms(&self.state.omega, cands);
        let pool = if birth { &addable } else { &removable };
        if pool.is_empty() {
            return Ok(false);
        }
        let term = pool[rng.gen_range(0..pool.len())];
        if !birth {
            if let Some(s) = cands.spline_index(term) {
                // A spline term is reborn without knots, so only a knot-free term can die.
                if self.state.knots[s].count() > 0 {
                    return Ok(false);
                }
            }
        }
        let mut omega_new = self.state.omega.clone();
        omega_new[term] = birth;
        let (addable_new, removable_new) = eligible_terms(&omega_new, cands);

        let layout = &self.cache.layout;
        let act = active_columns(layout, &self.state.omega);
        let act_new = active_columns(layout, &omega_new);
        let block = layout.range(term);
        let fit_old = solve_normal_equations(self.cache.sub_gram(&act), &self.cache.sub_zy(&act))?;
        let fit_new = solve_normal_equations(self.cache.sub_gram(&act_new), &self.cache.sub_zy(&act_new))?;

        let flat = self.state.flat_coefficients(cands);
        let cur: Vec<f64> = act.iter().map(|&a| flat[a]).collect();
        let pos_in_old = |col: usize| act.iter().position(|&a| a == col);
        let origin: Vec<Option<usize>> = act_new.iter().map(|&col| pos_in_old(col)).collect();

        let (jumps, log_jump, move_ratio) = if birth {
            let u: Vec<f64> = (0..block.len()).map(|_| normal(rng, sigma_u)).collect();
            let dens: f64 = u.iter().map(|&x| ln_normal(x, sigma_u)).sum();
            let ratio = ((1.0 - c) / c).ln() + (addable.len() as f64 / removable_new.len() as f64).ln();
            (u, -dens, ratio)
        } else {
            let dens: f64 = block
                .clone()
                .map(|col| {
                    let p = pos_in_old(col).expect("removed term is active");
                    ln_normal(cur[p] - fit_old[p], sigma_u)
                })
                .sum();
            let ratio = (c / (1.0 - c)).ln() + (removable.len() as f64 / addable_new.len() as f64).ln();
            (Vec::new(), dens, ratio)
        };
        let prop = augment_shift(&cur, fit_old.as_slice(), fit_new.as_slice(), &origin, &jumps);
        let mut flat_new = vec![0.0; flat.len()];
        for (&col, v) in act_new.iter().zip(&prop) {
            flat_new[col] = *v;
        }
        let mut candidate = self.state.clone();
        candidate.omega = omega_new;
        candidate.set_flat_coefficients(cands, &flat_new);

        let ssr_cur = self.cache.ssr(&flat, &act);
        let ssr_new = self.cache.ssr(&flat_new, &act_new);
        let log_ratio = self.log_target(&candidate, ssr_new) - self.log_target(&self.state, ssr_cur) + move_ratio + log_jump;
        if accept(log_ratio, rng) {
            self.state = candidate;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Draws the residual variance from its inverse-gamma full conditional.
    pub fn step_sigma_gibbs<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (shape, scale) = ig_parameters(self.data.n(), self.current_ssr(), self.prior.a0, self.prior.b0);
        let g = Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters");
        let precision: f64 = g.sample(rng);
        self.state.sigma_tau = (1.0 / precision).sqrt();
    }

    /// Replaces the state (for tests and restarts); the design cache follows the new knots.
    pub fn set_state(&mut self, state: ModelState) -> Result<()> {
        state.check_invariants(self.cands)?;
        if state.knots != self.state.knots {
            self.cache = DesignCache::new(self.data, self.cands, &state.knots)?;
        }
        self.state = state;
        Ok(())
    }

    pub fn check_consistency(&self) -> Result<()> {
        self.state.check_invariants(self.cands)?;
        let lp = self.log_posterior();
        if !lp.is_finite() {
            return Err(Error::NumericalOverflow("log posterior"));
        }
        Ok(())
    }
}
