//! One adaptive-enrichment trial: staged enrollment, interim analyses,
//! enrichment, early stopping, final analysis and the recommendation model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::DesignConfig;
use crate::error::{Error, Result};
use crate::model::{CandidateSet, Dataset};
use crate::posterior::{
    decide, inclusion_probabilities, max_geweke, pruned_variables, selected_tailoring, converged, Decision,
    Profile, SubspaceModel, Variable,
};
use crate::sampler::{run_chain_with_rng, PosteriorDraws};
use crate::scenario::Scenario;
use crate::spline::Boundary;

/// Screening stops with an error once this many candidates have been drawn.
pub const SCREENING_BUDGET: usize = 1_000_000;
/// Screening candidates evaluated per batch.
const SCREEN_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    EfficacyInSubgroup,
    EfficacyOverall,
    Futility,
    NotSuperior,
}

impl Verdict {
    pub fn is_efficacy(self) -> bool {
        matches!(self, Verdict::EfficacyInSubgroup | Verdict::EfficacyOverall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Treatment {
    Treat,
    Control,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patient {
    pub profile: Profile,
    pub t: f64,
    pub y: f64,
}

/// The model behind the recommendations: draws of the refit model and the
/// original columns it keeps.
#[derive(Debug, Clone)]
pub struct FinalModel {
    pub draws: PosteriorDraws,
    pub kept_cont: Vec<usize>,
    pub kept_bin: Vec<usize>,
    pub e1: f64,
    pub alpha: f64,
}

impl FinalModel {
    fn project(&self, p: &Profile) -> Profile {
        Profile {
            x: self.kept_cont.iter().map(|&i| p.x[i]).collect(),
            z: self.kept_bin.iter().map(|&i| p.z[i]).collect(),
        }
    }

    pub fn members(&self, profiles: &[Profile]) -> Result<Vec<bool>> {
        let projected: Vec<Profile> = profiles.iter().map(|p| self.project(p)).collect();
        SubspaceModel::new(&self.draws, self.e1, self.alpha)?.members(&projected)
    }
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    /// Index into the schedule of the analysis that ended the trial.
    pub stop_stage: usize,
    pub verdict: Verdict,
    pub final_model: FinalModel,
    pub enrolled_n: usize,
    /// Tailoring variables retained by the final model.
    pub selected_variables: Vec<Variable>,
    pub pruned_variables: Vec<Variable>,
    /// One flag per fit: the largest Geweke |z| was below the limit.
    pub convergence_flags: Vec<bool>,
    pub max_geweke: Vec<f64>,
    pub stagewise_prevalence: Vec<f64>,
}

impl TrialResult {
    pub fn converged(&self) -> bool {
        self.convergence_flags.iter().all(|&c| c)
    }
}

/// Draws `count` patients, screening candidates through `restriction` when given,
/// and randomizes each to treatment with probability `p_treat`.
pub fn enroll<R: Rng + ?Sized>(
    scenario: &Scenario,
    restriction: Option<&SubspaceModel>,
    count: usize,
    p_treat: f64,
    rng: &mut R,
) -> Result<Vec<Patient>> {
    let mut profiles = Vec::with_capacity(count);
    match restriction {
        None => profiles.extend((0..count).map(|_| scenario.generate_patient(rng))),
        Some(sub) => {
            let mut tried = 0;
            while profiles.len() < count {
                if tried >= SCREENING_BUDGET {
                    return Err(Error::DegenerateEnrichment { accepted: profiles.len(), tried });
                }
                let batch: Vec<Profile> = (0..SCREEN_BATCH).map(|_| scenario.generate_patient(rng)).collect();
                tried += SCREEN_BATCH;
                let keep = sub.members(&batch)?;
                for (p, k) in batch.into_iter().zip(keep) {
                    if k && profiles.len() < count {
                        profiles.push(p);
                    }
                }
            }
        }
    }
    Ok(profiles
        .into_iter()
        .map(|profile| {
            let t = f64::from(u8::from(rng.gen::<f64>() < p_treat));
            let y = scenario.generate_outcome(&profile, t, rng);
            Patient { profile, t, y }
        })
        .collect())
}

/// Dataset over the chosen columns, every kept marker a tailoring candidate.
fn dataset(patients: &[Patient], kept_cont: &[usize], kept_bin: &[usize]) -> Result<Dataset> {
    let y = patients.iter().map(|p| p.y).collect();
    let t = patients.iter().map(|p| p.t).collect();
    let x = kept_cont.iter().map(|&i| patients.iter().map(|p| p.profile.x[i]).collect()).collect();
    let z = kept_bin.iter().map(|&i| patients.iter().map(|p| p.profile.z[i]).collect()).collect();
    Dataset::new(y, t, x, z, (0..kept_cont.len()).collect(), (0..kept_bin.len()).collect())
}

struct Fit {
    draws: PosteriorDraws,
    kept_cont: Vec<usize>,
    kept_bin: Vec<usize>,
    max_z: f64,
}

fn fit<R: Rng + ?Sized>(
    patients: &[Patient],
    kept_cont: Vec<usize>,
    kept_bin: Vec<usize>,
    boundaries: &[Boundary],
    design: &DesignConfig,
    rng: &mut R,
) -> Result<Fit> {
    let data = dataset(patients, &kept_cont, &kept_bin)?;
    let b = kept_cont.iter().map(|&i| boundaries[i]).collect();
    let cands = CandidateSet::from_data(&data, design.n_knot_candidates, Some(b))?;
    let draws = run_chain_with_rng(&data, &cands, &design.priors, &design.sampler, rng)?;
    let projected: Vec<Profile> = patients
        .iter()
        .map(|p| Profile {
            x: kept_cont.iter().map(|&i| p.profile.x[i]).collect(),
            z: kept_bin.iter().map(|&i| p.profile.z[i]).collect(),
        })
        .collect();
    let max_z = max_geweke(&draws, &projected)?;
    Ok(Fit { draws, kept_cont, kept_bin, max_z })
}

fn map_variables(vars: Vec<Variable>, kept_cont: &[usize], kept_bin: &[usize]) -> Vec<Variable> {
    let mut out: Vec<Variable> = vars
        .into_iter()
        .map(|v| match v {
            Variable::Continuous(i) => Variable::Continuous(kept_cont[i]),
            Variable::Binary(i) => Variable::Binary(kept_bin[i]),
        })
        .collect();
    out.sort();
    out
}

/// Runs one trial to its verdict.
pub fn run_trial<R: Rng + ?Sized>(scenario: &Scenario, design: &DesignConfig, rng: &mut R) -> Result<TrialResult> {
    design.validate()?;
    let all_cont: Vec<usize> = (0..scenario.n_cont()).collect();
    let all_bin: Vec<usize> = (0..scenario.binary_prevalences().len()).collect();
    let last = design.schedule.len() - 1;

    let mut patients: Vec<Patient> = Vec::with_capacity(design.max_n());
    let mut boundaries: Vec<Boundary> = Vec::new();
    let mut restriction: Option<PosteriorDraws> = None;
    let mut flags = Vec::new();
    let mut zs = Vec::new();
    let mut prevalences = Vec::new();

    for (stage, &size) in design.schedule.iter().enumerate() {
        let sub = restriction.as_ref().map(|d| SubspaceModel::new(d, design.e1, design.alpha)).transpose()?;
        let new = enroll(scenario, sub.as_ref(), size - patients.len(), design.treatment_probability, rng)?;
        patients.extend(new);
        if stage == 0 {
            // supports are frozen at the pre-enrichment sample
            boundaries = all_cont
                .iter()
                .map(|&i| Boundary::from_values(&patients.iter().map(|p| p.profile.x[i]).collect::<Vec<_>>()))
                .collect::<Result<_>>()?;
        }
        let f = fit(&patients, all_cont.clone(), all_bin.clone(), &boundaries, design, rng)?;
        flags.push(converged(f.max_z));
        zs.push(f.max_z);
        let profiles: Vec<Profile> = patients.iter().map(|p| p.profile.clone()).collect();
        let summary = SubspaceModel::new(&f.draws, design.e1, design.alpha)?.analyze(&profiles)?;
        prevalences.push(summary.prevalence);

        let decision = if summary.prevalence < design.thresholds.pi {
            Decision::Futility
        } else {
            decide(&summary.delta, &design.thresholds)
        };
        let verdict = match decision {
            Decision::Efficacy => {
                let members = summary.member.iter().filter(|&&m| m).count();
                if members + 1 >= patients.len() {
                    Verdict::EfficacyOverall
                } else {
                    Verdict::EfficacyInSubgroup
                }
            }
            _ if stage == last => Verdict::NotSuperior,
            Decision::Futility => Verdict::Futility,
            Decision::Continue => {
                restriction = Some(f.draws);
                continue;
            }
        };

        let inclusion = inclusion_probabilities(&f.draws);
        let (final_fit, pruned) = if verdict == Verdict::Futility {
            (f, Vec::new())
        } else {
            let pruned = pruned_variables(&f.draws.cands, &inclusion);
            if pruned.is_empty() {
                (f, pruned)
            } else {
                let kept_cont: Vec<usize> =
                    all_cont.iter().copied().filter(|&i| !pruned.contains(&Variable::Continuous(i))).collect();
                let kept_bin: Vec<usize> =
                    all_bin.iter().copied().filter(|&i| !pruned.contains(&Variable::Binary(i))).collect();
                let refit = fit(&patients, kept_cont, kept_bin, &boundaries, design, rng)?;
                flags.push(converged(refit.max_z));
                zs.push(refit.max_z);
                (refit, pruned)
            }
        };
        let final_inclusion = inclusion_probabilities(&final_fit.draws);
        let selected = map_variables(
            selected_tailoring(&final_fit.draws.cands, &final_inclusion),
            &final_fit.kept_cont,
            &final_fit.kept_bin,
        );
        return Ok(TrialResult {
            stop_stage: stage,
            verdict,
            final_model: FinalModel {
                draws: final_fit.draws,
                kept_cont: final_fit.kept_cont,
                kept_bin: final_fit.kept_bin,
                e1: design.e1,
                alpha: design.alpha,
            },
            enrolled_n: patients.len(),
            selected_variables: selected,
            pruned_variables: pruned,
            convergence_flags: flags,
            max_geweke: zs,
            stagewise_prevalence: prevalences,
        });
    }
    unreachable!("the final analysis always returns")
}

/// Recommendation for each profile: treat only after an efficacy verdict, and
/// then only inside the final model's effective subspace.
pub fn recommend_all(result: &TrialResult, profiles: &[Profile]) -> Result<Vec<Treatment>> {
    let treat = |b: bool| if b { Treatment::Treat } else { Treatment::Control };
    match result.verdict {
        Verdict::EfficacyOverall => Ok(vec![Treatment::Treat; profiles.len()]),
        Verdict::EfficacyInSubgroup => Ok(result.final_model.members(profiles)?.into_iter().map(treat).collect()),
        _ => Ok(vec![Treatment::Control; profiles.len()]),
    }
}

pub fn recommend(result: &TrialResult, profile: &Profile) -> Result<Treatment> {
    Ok(recommend_all(result, std::slice::from_ref(profile))?[0])
}
