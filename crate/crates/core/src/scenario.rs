//! Synthetic patient generators for the two simulation studies, with the
//! true treatment-effect function of each scenario as an oracle.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{Profile, Variable};

const STUDY1_PREVALENCES: [f64; 5] = [0.35, 0.5, 0.65, 0.2, 0.35];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Study {
    /// One continuous and five binary markers, with predictive effects.
    One,
    /// Study I without predictive (main) effects.
    OneNoPred,
    /// Two continuous markers.
    Two,
}

impl Study {
    fn prefix(self) -> &'static str {
        match self {
            Study::One => "study1",
            Study::OneNoPred => "study1-nopred",
            Study::Two => "study2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Scenario {
    pub study: Study,
    pub number: u8,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/s{}", self.study.prefix(), self.number)
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownScenario(s.to_string());
        let (prefix, num) = s.split_once("/s").ok_or_else(bad)?;
        let study = [Study::One, Study::OneNoPred, Study::Two]
            .into_iter()
            .find(|st| st.prefix() == prefix)
            .ok_or_else(bad)?;
        let number: u8 = num.parse().map_err(|_| bad())?;
        Scenario::new(study, number).map_err(|_| bad())
    }
}

impl TryFrom<String> for Scenario {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> String {
        s.to_string()
    }
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Scenario {
    pub fn new(study: Study, number: u8) -> Result<Self> {
        if !(1..=8).contains(&number) {
            return Err(Error::UnknownScenario(format!("{}/s{number}", study.prefix())));
        }
        Ok(Self { study, number })
    }

    pub fn all() -> Vec<Scenario> {
        [Study::One, Study::OneNoPred, Study::Two]
            .into_iter()
            .flat_map(|st| (1..=8).map(move |n| Scenario { study: st, number: n }))
            .collect()
    }

    pub fn n_cont(&self) -> usize {
        match self.study {
            Study::Two => 2,
            _ => 1,
        }
    }

    pub fn binary_prevalences(&self) -> &'static [f64] {
        match self.study {
            Study::Two => &[],
            _ => &STUDY1_PREVALENCES,
        }
    }

    pub fn noise_sd(&self) -> f64 {
        1.0
    }

    /// Independent uniform continuous markers and Bernoulli binary markers.
    pub fn generate_patient<R: Rng + ?Sized>(&self, rng: &mut R) -> Profile {
        let x = (0..self.n_cont()).map(|_| rng.gen::<f64>()).collect();
        let z = self.binary_prevalences().iter().map(|&p| f64::from(u8::from(rng.gen::<f64>() < p))).collect();
        Profile { x, z }
    }

    pub fn true_gamma(&self, p: &Profile) -> f64 {
        match self.study {
            Study::One | Study::OneNoPred => {
                let (x, z) = (p.x[0], &p.z);
                match self.number {
                    1 => 0.0,
                    2 => 0.28,
                    3 => z[0] - 0.3,
                    4 => 0.7 * z[1] - 0.14,
                    5 => 0.8 * z[2] - 0.3,
                    6 => 0.9 * z[3] + 0.9 * z[0] - 0.2,
                    7 => 2.3 * x - 1.15,
                    _ => (2.0 * PI * x).cos(),
                }
            }
            Study::Two => {
                let (x1, x2) = (p.x[0], p.x[1]);
                match self.number {
                    1 => 0.0,
                    2 => 0.35,
                    3 => 2.3 * x1 - 1.15,
                    4 => (2.0 * PI * x1).cos(),
                    5 => 1.4 * logistic(25.0 * (x1 - 0.5)) - 0.6,
                    6 => {
                        if x1 <= 0.5 {
                            2.0 * logistic(30.0 * (x1 - 0.3)) - 1.0
                        } else {
                            2.0 / (1.0 + (30.0 * (x1 - 0.7)).exp()) - 1.0
                        }
                    }
                    7 => {
                        if x1 <= 0.5 {
                            1.5 / (1.0 + (30.0 * (x1 - 0.3)).exp()) - 0.75
                        } else {
                            1.5 * logistic(30.0 * (x1 - 0.7)) - 0.75
                        }
                    }
                    _ => 2.3 * x1 + (2.0 * PI * x2).cos() - 1.15,
                }
            }
        }
    }

    /// Outcome mean under control.
    pub fn true_main(&self, p: &Profile) -> f64 {
        match self.study {
            Study::OneNoPred => 0.0,
            Study::Two => 0.5 * p.x[0],
            Study::One => {
                let z = &p.z;
                match self.number {
                    3 => 0.5 * z[0],
                    4 => 0.5 * z[1],
                    5 => 0.5 * z[2],
                    6 => 0.3 * z[0] + 0.5 * z[3],
                    7 | 8 => 0.3 * p.x[0],
                    _ => 0.0,
                }
            }
        }
    }

    pub fn generate_outcome<R: Rng + ?Sized>(&self, p: &Profile, t: f64, rng: &mut R) -> f64 {
        let eps: f64 = rng.sample(StandardNormal);
        self.true_main(p) + self.true_gamma(p) * t + self.noise_sd() * eps
    }

    /// Variables that genuinely modify the treatment effect.
    pub fn true_tailoring(&self) -> Vec<Variable> {
        use Variable::{Binary, Continuous};
        match (self.study, self.number) {
            (_, 1) | (_, 2) => vec![],
            (Study::Two, 8) => vec![Continuous(0), Continuous(1)],
            (Study::Two, _) => vec![Continuous(0)],
            (_, 3) => vec![Binary(0)],
            (_, 4) => vec![Binary(1)],
            (_, 5) => vec![Binary(2)],
            (_, 6) => vec![Binary(0), Binary(3)],
            _ => vec![Continuous(0)],
        }
    }

    /// Published prevalence of `{gamma > 0}` and mean effect within it.
    pub fn reference_values(&self) -> (f64, f64) {
        const S1: [(f64, f64); 8] =
            [(0.0, 0.0), (1.0, 0.28), (0.35, 0.70), (0.50, 0.56), (0.65, 0.50), (0.48, 0.81), (0.50, 0.58), (0.50, 0.64)];
        const S2: [(f64, f64); 8] =
            [(0.0, 0.0), (1.0, 0.35), (0.5, 0.58), (0.5, 0.64), (0.51, 0.71), (0.40, 0.77), (0.60, 0.64), (0.50, 0.79)];
        let i = usize::from(self.number - 1);
        match self.study {
            Study::Two => S2[i],
            _ => S1[i],
        }
    }

    /// Default posterior tail probability defining the effective subspace.
    pub fn default_alpha(&self) -> f64 {
        match self.study {
            Study::Two => 0.2,
            _ => 0.3,
        }
    }

    pub fn default_lambda1(&self) -> f64 {
        match self.study {
            Study::Two => 0.01,
            _ => 0.1,
        }
    }
}
