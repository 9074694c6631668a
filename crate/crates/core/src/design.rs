//! Conjoint design specification and round generation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::salience::{SalienceMode, DEFAULT_EPSILON};
use crate::schema::AttributeSchema;

/// How profile levels are assigned within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Each attribute level drawn uniformly and independently per profile.
    UniformIid,
    /// The first profile's level is uniform; every other profile receives a
    /// grid-adjacent neighbour of it, keeping level contrasts marginal.
    AdjacentConstrained,
}

/// Full design of a simulated study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub schema: AttributeSchema,
    /// Profiles per round (J).
    pub num_profiles: usize,
    /// Rounds per respondent (R).
    pub num_rounds: usize,
    pub sampling: SamplingMode,
    /// Attributes shown in the experiment arm (k).
    pub consideration_k: usize,
    /// Attributes weighed in the real-world arm (m), k <= m <= K.
    pub real_m: usize,
    /// Control profiles omit the treatment attribute entirely.
    pub unbalanced: bool,
    /// Keep the control profile's salience fixed across hypothetical worlds
    /// instead of recomputing it.
    pub freeze_control_salience: bool,
    pub salience_mode: SalienceMode,
    pub epsilon: f64,
}

impl DesignSpec {
    pub fn new(
        schema: AttributeSchema,
        num_profiles: usize,
        num_rounds: usize,
        sampling: SamplingMode,
        consideration_k: usize,
        real_m: usize,
    ) -> Result<Self> {
        let spec = DesignSpec {
            schema,
            num_profiles,
            num_rounds,
            sampling,
            consideration_k,
            real_m,
            unbalanced: false,
            freeze_control_salience: false,
            salience_mode: SalienceMode::UtilityScale,
            epsilon: DEFAULT_EPSILON,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_profiles == 0 {
            return Err(Error::design("a round needs at least one profile"));
        }
        if self.num_rounds == 0 {
            return Err(Error::design("a study needs at least one round"));
        }
        if self.consideration_k == 0 {
            return Err(Error::design(
                "the experiment must show at least one attribute",
            ));
        }
        if self.consideration_k > self.real_m || self.real_m > self.schema.len() {
            return Err(Error::design(format!(
                "need 1 <= k <= m <= K, got k={}, m={}, K={}",
                self.consideration_k,
                self.real_m,
                self.schema.len()
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::design("epsilon must be positive"));
        }
        Ok(())
    }
}

/// One choice task: J profiles over the first `real_m` attributes, stored as
/// level indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub profiles: Vec<Vec<usize>>,
    pub task_index: u32,
    pub respondent_index: u32,
}

impl Round {
    pub fn new(profiles: Vec<Vec<usize>>, task_index: u32, respondent_index: u32) -> Self {
        Round {
            profiles,
            task_index,
            respondent_index,
        }
    }

    /// Number of attributes realized per profile.
    pub fn width(&self) -> usize {
        self.profiles.first().map_or(0, Vec::len)
    }

    /// Copy of this round truncated to the first `width` attributes.
    pub fn restricted(&self, width: usize) -> Round {
        Round {
            profiles: self.profiles.iter().map(|p| p[..width].to_vec()).collect(),
            task_index: self.task_index,
            respondent_index: self.respondent_index,
        }
    }
}

/// Draw one round: levels for the first `real_m` attributes of each profile.
pub fn generate_round(
    spec: &DesignSpec,
    rng: &mut impl Rng,
    task_index: u32,
    respondent_index: u32,
) -> Round {
    let width = spec.real_m;
    let mut profiles: Vec<Vec<usize>> = Vec::with_capacity(spec.num_profiles);
    for j in 0..spec.num_profiles {
        let mut profile = Vec::with_capacity(width);
        for (k, attribute) in spec.schema.attributes()[..width].iter().enumerate() {
            let num_levels = attribute.levels.len();
            let level = match spec.sampling {
                SamplingMode::UniformIid => rng.gen_range(0..num_levels),
                SamplingMode::AdjacentConstrained => {
                    if j == 0 {
                        rng.gen_range(0..num_levels)
                    } else {
                        let anchor = profiles[0][k];
                        let neighbours = spec.schema.adjacent_levels(k, anchor);
                        neighbours[rng.gen_range(0..neighbours.len())]
                    }
                }
            };
            profile.push(level);
        }
        profiles.push(profile);
    }
    Round::new(profiles, task_index, respondent_index)
}
