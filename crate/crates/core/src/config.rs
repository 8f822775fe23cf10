//! Trial design configuration: JSON loading, study-dependent defaults and
//! range checks.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::PriorConfig;
use crate::posterior::DecisionThresholds;
use crate::sampler::SamplerConfig;
use crate::scenario::Scenario;

/// Named MCMC length presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum McmcProfile {
    /// 3000 burn-in, 500 draws thinned by 5, 50 replications.
    Fast,
    /// 30000 burn-in, 2000 draws thinned by 10.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub scenario: Scenario,
    /// Treatment-benefit threshold of the effective subspace.
    pub e1: f64,
    /// Tail probability of the effective subspace.
    pub alpha: f64,
    pub thresholds: DecisionThresholds,
    pub priors: PriorConfig,
    pub sampler: SamplerConfig,
    /// Cumulative sample sizes at each analysis; the last is the maximum.
    pub schedule: Vec<usize>,
    pub replications: usize,
    pub external_test_size: usize,
    pub seed: u64,
    /// Interior quantiles offered as knot candidates per continuous marker.
    pub n_knot_candidates: usize,
    pub treatment_probability: f64,
    /// Drop replications whose fit failed from the operating-characteristic denominators.
    pub exclude_invalid: bool,
}

impl DesignConfig {
    /// Published design for `scenario` with the paper MCMC settings.
    pub fn defaults(scenario: Scenario) -> Self {
        Self {
            scenario,
            e1: 0.0,
            alpha: scenario.default_alpha(),
            thresholds: DecisionThresholds::default(),
            priors: PriorConfig { lambda1: scenario.default_lambda1(), ..PriorConfig::default() },
            sampler: SamplerConfig::paper(),
            schedule: vec![300, 500],
            replications: 200,
            external_test_size: 10_000,
            seed: 1,
            n_knot_candidates: 9,
            treatment_probability: 0.5,
            exclude_invalid: false,
        }
    }

    /// Overrides the MCMC lengths (and, for `Fast`, the replication count).
    pub fn apply_profile(&mut self, profile: McmcProfile) {
        let base = match profile {
            McmcProfile::Fast => SamplerConfig::fast(),
            McmcProfile::Paper => SamplerConfig::paper(),
        };
        self.sampler.burn_in = base.burn_in;
        self.sampler.n_samples = base.n_samples;
        self.sampler.thin = base.thin;
        if profile == McmcProfile::Fast {
            self.replications = 50;
        }
    }

    pub fn max_n(&self) -> usize {
        self.schedule.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !self.e1.is_finite() {
            return bad("e1 must be finite".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        self.thresholds.validate()?;
        self.priors.validate()?;
        self.sampler.validate()?;
        if self.schedule.is_empty() || self.schedule[0] == 0 || self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("schedule must be strictly increasing and positive, got {:?}", self.schedule));
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.n_knot_candidates == 0 {
            return bad("n_knot_candidates must be at least 1".into());
        }
        if !(self.treatment_probability > 0.0 && self.treatment_probability < 1.0) {
            return bad(format!("treatment_probability must lie in (0, 1), got {}", self.treatment_probability));
        }
        Ok(())
    }

    /// Parses a JSON document; absent keys take the scenario's defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text)?;
        let Value::Object(user) = user else {
            return Err(Error::Config("configuration must be a JSON object".into()));
        };
        let scenario: Scenario = match user.get("scenario") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("scenario: {e}")))?,
            None => return Err(Error::Config("missing required key `scenario`".into())),
        };
        let mut merged = serde_json::to_value(Self::defaults(scenario))?;
        merge(&mut merged, Value::Object(user));
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Recursively overlays `patch` onto `base`; keys absent from `base` are kept
/// so that deserialization can reject them.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

pub fn load_config(path: &Path) -> Result<DesignConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    DesignConfig::from_json(&text)
}
