//! Respondent populations: reproducible draws of heterogeneous decision
//! makers.

use rand::Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::salience::DecisionMaker;
use crate::schema::AttributeSchema;

/// Distribution of the salience severity across the population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum DeltaSpec {
    Fixed { value: f64 },
    Uniform { low: f64, high: f64 },
}

impl DeltaSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            DeltaSpec::Fixed { value } => {
                if !(value > 0.0 && value <= 1.0) {
                    return Err(Error::invalid(format!(
                        "delta must lie in (0, 1], got {value}"
                    )));
                }
            }
            DeltaSpec::Uniform { low, high } => {
                if !(low > 0.0 && high <= 1.0 && low <= high) {
                    return Err(Error::invalid(format!(
                        "delta range must satisfy 0 < low <= high <= 1, got [{low}, {high}]"
                    )));
                }
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            DeltaSpec::Fixed { value } => value,
            DeltaSpec::Uniform { low, high } => {
                if low == high {
                    low
                } else {
                    rng.gen_range(low..high)
                }
            }
        }
    }
}

/// Recipe for a population draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub size: usize,
    /// `None` gives every respondent equal base weights; `Some(kappa)` draws
    /// them from a symmetric Dirichlet(kappa).
    #[serde(default)]
    pub dirichlet_kappa: Option<f64>,
    pub delta: DeltaSpec,
    /// Half-width of the zero-mean uniform per-level utility offsets.
    pub utility_offset_width: f64,
    /// Additive shift applied to every utility value, keeping the utility
    /// scale positive.
    pub utility_shift: f64,
    pub seed: u64,
}

/// A fixed roster of decision makers; identical seeds yield identical
/// populations.
#[derive(Debug, Clone)]
pub struct Population {
    pub members: Vec<DecisionMaker>,
    pub master_seed: u64,
}

impl Population {
    pub fn generate(schema: &AttributeSchema, spec: &PopulationSpec) -> Result<Population> {
        if spec.size == 0 {
            return Err(Error::invalid("population size must be at least 1"));
        }
        spec.delta.validate()?;
        if spec.utility_offset_width < 0.0 || !spec.utility_offset_width.is_finite() {
            return Err(Error::invalid(
                "utility offset width must be finite and >= 0",
            ));
        }
        if let Some(kappa) = spec.dirichlet_kappa {
            if kappa.is_nan() || kappa <= 0.0 {
                return Err(Error::invalid("dirichlet kappa must be positive"));
            }
        }

        let k = schema.len();
        let members = (0..spec.size)
            .map(|i| {
                let mut rng = substream(spec.seed, i as u64);
                let weights = match spec.dirichlet_kappa {
                    Some(kappa) if k > 1 => {
                        let dir = Dirichlet::new_with_size(kappa, k)
                            .map_err(|e| Error::invalid(format!("dirichlet draw failed: {e}")))?;
                        dir.sample(&mut rng)
                    }
                    _ => equal_weights(k),
                };
                let delta = spec.delta.draw(&mut rng);
                let overrides = if spec.utility_offset_width > 0.0 {
                    let w = spec.utility_offset_width;
                    Some(
                        schema
                            .attributes()
                            .iter()
                            .map(|attr| {
                                attr.levels
                                    .iter()
                                    .map(|level| level.utility_code + rng.gen_range(-w..w))
                                    .collect()
                            })
                            .collect(),
                    )
                } else {
                    None
                };
                DecisionMaker::new(weights, delta, spec.utility_shift, overrides)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Population {
            members,
            master_seed: spec.seed,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Population of identical copies of one decision maker.
    pub fn homogeneous(dm: DecisionMaker, size: usize) -> Population {
        Population {
            members: vec![dm; size],
            master_seed: 0,
        }
    }
}

fn equal_weights(k: usize) -> Vec<f64> {
    let mut weights = vec![1.0 / k as f64; k];
    let partial: f64 = weights[..k - 1].iter().sum();
    weights[k - 1] = 1.0 - partial;
    weights
}
