//! Replication runner: simulates many trials of one design, aggregates the
//! operating characteristics and writes the result files.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::DesignConfig;
use crate::error::{Error, Result};
use crate::posterior::{Profile, Variable};
use crate::trial::{recommend_all, run_trial, Treatment, TrialResult};

/// RNG stream reserved for the external test population.
const EXTERNAL_STREAM: u64 = u64::MAX;

/// Environment variable overriding the number of worker threads.
pub const THREADS_ENV: &str = "FKBMA_THREADS";

/// One row of the per-trial output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub replication: usize,
    /// `Invalid` when the trial failed with an error.
    pub verdict: String,
    pub efficacy: u8,
    pub stop_stage: Option<usize>,
    pub enrolled_n: Option<usize>,
    pub selected_variables: String,
    pub pruned_variables: String,
    pub correct_markers: u8,
    pub prevalence_trajectory: String,
    pub accuracy: f64,
    pub converged: u8,
    pub max_geweke: f64,
    pub error: String,
}

impl TrialRecord {
    fn valid(&self) -> bool {
        self.error.is_empty()
    }
}

/// Aggregates over a set of replications, each rate with its Monte Carlo
/// standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatingCharacteristics {
    pub subset: String,
    pub replications: usize,
    pub power: f64,
    pub power_se: f64,
    pub generalized_power: f64,
    pub generalized_power_se: f64,
    pub correct_marker_rate: f64,
    pub correct_marker_rate_se: f64,
    pub accuracy: f64,
    pub accuracy_se: f64,
    pub mean_sample_size: f64,
    pub mean_sample_size_se: f64,
    pub nonconvergence_rate: f64,
    pub nonconvergence_rate_se: f64,
    pub invalid_rate: f64,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

fn rate_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = values.iter().sum::<f64>() / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

impl OperatingCharacteristics {
    pub fn from_records(subset: &str, records: &[&TrialRecord], total: usize) -> Self {
        let col = |f: &dyn Fn(&TrialRecord) -> f64| records.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let (power, power_se) = rate_se(&col(&|r| f64::from(r.efficacy)));
        let (gp, gp_se) = rate_se(&col(&|r| f64::from(r.efficacy * r.correct_markers)));
        let (cm, cm_se) = rate_se(&col(&|r| f64::from(r.correct_markers)));
        let (acc, acc_se) = mean_se(&col(&|r| r.accuracy));
        let sizes: Vec<f64> = records.iter().filter_map(|r| r.enrolled_n.map(|n| n as f64)).collect();
        let (ss, ss_se) = mean_se(&sizes);
        let (nc, nc_se) = rate_se(&col(&|r| f64::from(u8::from(r.valid() && r.converged == 0))));
        let invalid = records.iter().filter(|r| !r.valid()).count();
        Self {
            subset: subset.to_string(),
            replications: records.len(),
            power,
            power_se,
            generalized_power: gp,
            generalized_power_se: gp_se,
            correct_marker_rate: cm,
            correct_marker_rate_se: cm_se,
            accuracy: acc,
            accuracy_se: acc_se,
            mean_sample_size: ss,
            mean_sample_size_se: ss_se,
            nonconvergence_rate: nc,
            nonconvergence_rate_se: nc_se,
            invalid_rate: if total == 0 { 0.0 } else { invalid as f64 / total as f64 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub records: Vec<TrialRecord>,
    /// Every counted replication.
    pub all: OperatingCharacteristics,
    /// Counted replications whose fits all passed the Geweke check.
    pub converged: OperatingCharacteristics,
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn optimal(config: &DesignConfig, external: &[Profile]) -> Vec<Treatment> {
    external
        .iter()
        .map(|p| if config.scenario.true_gamma(p) > 0.0 { Treatment::Treat } else { Treatment::Control })
        .collect()
}

fn accuracy(recs: &[Treatment], optimal: &[Treatment]) -> f64 {
    if optimal.is_empty() {
        return f64::NAN;
    }
    recs.iter().zip(optimal).filter(|(a, b)| a == b).count() as f64 / optimal.len() as f64
}

fn record(
    replication: usize,
    outcome: Result<TrialResult>,
    truth: &[Variable],
    external: &[Profile],
    best: &[Treatment],
) -> TrialRecord {
    let result = outcome.and_then(|r| recommend_all(&r, external).map(|recs| (r, recs)));
    match result {
        Ok((r, recs)) => {
            let correct = r.selected_variables == truth;
            TrialRecord {
                replication,
                verdict: format!("{:?}", r.verdict),
                efficacy: u8::from(r.verdict.is_efficacy()),
                stop_stage: Some(r.stop_stage),
                enrolled_n: Some(r.enrolled_n),
                selected_variables: join(&r.selected_variables),
                pruned_variables: join(&r.pruned_variables),
                correct_markers: u8::from(correct),
                prevalence_trajectory: join(r.stagewise_prevalence.iter().map(|p| format!("{p:.4}"))),
                accuracy: accuracy(&recs, best),
                converged: u8::from(r.converged()),
                max_geweke: r.max_geweke.iter().copied().fold(0.0, f64::max),
                error: String::new(),
            }
        }
        Err(e) => TrialRecord {
            replication,
            verdict: "Invalid".into(),
            efficacy: 0,
            stop_stage: None,
            enrolled_n: None,
            selected_variables: String::new(),
            pruned_variables: String::new(),
            correct_markers: 0,
            prevalence_trajectory: String::new(),
            accuracy: accuracy(&vec![Treatment::Control; external.len()], best),
            converged: 0,
            max_geweke: f64::NAN,
            error: e.to_string(),
        },
    }
}

/// External population drawn once per study from its own stream.
pub fn external_population(config: &DesignConfig) -> Vec<Profile> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(EXTERNAL_STREAM);
    (0..config.external_test_size).map(|_| config.scenario.generate_patient(&mut rng)).collect()
}

/// Runs one replication on stream `r` of the study seed.
pub fn run_replication(config: &DesignConfig, r: usize) -> Result<TrialResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(r as u64);
    run_trial(&config.scenario, config, &mut rng)
}

fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// Simulates `config.replications` trials. Output depends only on the config
/// (including its seed), not on the thread count.
pub fn run_study(config: &DesignConfig) -> Result<StudyOutput> {
    config.validate()?;
    let external = external_population(config);
    let best = optimal(config, &external);
    let truth = config.scenario.true_tailoring();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records: Vec<TrialRecord> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|r| record(r, run_replication(config, r), &truth, &external, &best))
            .collect()
    });
    let counted: Vec<&TrialRecord> = records.iter().filter(|r| r.valid() || !config.exclude_invalid).collect();
    let conv: Vec<&TrialRecord> = counted.iter().copied().filter(|r| r.converged == 1).collect();
    let all = OperatingCharacteristics::from_records("all", &counted, records.len());
    let converged = OperatingCharacteristics::from_records("converged", &conv, records.len());
    Ok(StudyOutput { records, all, converged })
}

/// Writes `trials.csv`, `summary.csv` and `config.json` into `dir`.
pub fn emit_results(output: &StudyOutput, config: &DesignConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    for r in &output.records {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.serialize(&output.all)?;
    w.serialize(&output.converged)?;
    w.flush()?;
    fs::write(dir.join("config.json"), config.to_json()? + "\n")?;
    Ok(())
}
