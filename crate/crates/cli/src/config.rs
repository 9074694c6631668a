//! Run configuration: one JSON file drives every command.
//!
//! The file layout is documented in `docs/config.schema.json`; parsing is
//! strict (unknown fields are rejected with line/column positions) and the
//! semantic checks below make sure every referenced attribute resolves.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use conjoint_core::{
    AttributeSchema, DesignSpec, Method, OutcomeColumn, PopulationSpec, SalienceMode, SamplingMode,
    DEFAULT_EPSILON,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Attribute space: ordered attributes with ordered, coded levels.
    pub schema: AttributeSchema,
    pub population: PopulationSpec,
    pub design: DesignConfig,
    pub estimation: EstimationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyConfig>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub profiles_per_round: usize,
    pub rounds: usize,
    pub sampling: SamplingMode,
    /// Consideration-set sizes simulated as separate respondent groups.
    pub k_list: Vec<usize>,
    pub real_m: usize,
    #[serde(default)]
    pub unbalanced: bool,
    #[serde(default)]
    pub freeze_control_salience: bool,
    #[serde(default = "default_salience_mode")]
    pub salience_mode: SalienceMode,
    pub seed: u64,
}

fn default_salience_mode() -> SalienceMode {
    SalienceMode::UtilityScale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    pub method: Method,
    pub outcome: OutcomeColumn,
    #[serde(default = "default_bootstrap_resamples")]
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

fn default_bootstrap_resamples() -> usize {
    conjoint_core::estimands::DEFAULT_BOOTSTRAP_RESAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub target_attribute: String,
    /// (treatment level label, baseline level label).
    pub contrast_levels: (String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_budget")]
    pub budget: usize,
    pub seed: u64,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Fixed salience severity for the searches; omit to draw per instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_no_reversal_draws")]
    pub no_reversal_draws: usize,
    #[serde(default = "default_null_tolerance")]
    pub null_tolerance: f64,
    #[serde(default = "default_amplification_draws")]
    pub amplification_draws: usize,
    /// Cap on certified instances collected and embedded in the report.
    #[serde(default = "default_max_report_instances")]
    pub max_report_instances: usize,
}

fn default_budget() -> usize {
    100_000
}
fn default_m() -> usize {
    3
}
fn default_k() -> usize {
    2
}
fn default_no_reversal_draws() -> usize {
    10_000
}
fn default_null_tolerance() -> f64 {
    1e-6
}
fn default_amplification_draws() -> usize {
    1_000
}
fn default_max_report_instances() -> usize {
    10
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        let design = &self.design;
        if design.k_list.is_empty() {
            return Err("design.k_list must not be empty".into());
        }
        if design.k_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err("design.k_list must be strictly increasing".into());
        }
        let max_k = *design.k_list.last().unwrap();
        if max_k > design.real_m || design.real_m > self.schema.len() {
            return Err(format!(
                "need max(k_list) <= real_m <= number of attributes, got {} <= {} <= {}",
                max_k,
                design.real_m,
                self.schema.len()
            ));
        }
        // Every k must form a valid design.
        for &k in &design.k_list {
            self.design_for(k).map_err(|e| e.to_string())?;
        }
        if self.estimation.bootstrap_resamples == 0 {
            return Err("estimation.bootstrap_resamples must be at least 1".into());
        }
        if self.population.size == 0 {
            return Err("population.size must be at least 1".into());
        }
        if design.salience_mode == SalienceMode::UtilityScale {
            let (min_utility, _) = self.schema.utility_bounds();
            let floor =
                min_utility - self.population.utility_offset_width + self.population.utility_shift;
            if floor <= 0.0 {
                return Err(format!(
                    "utility-scale contrast needs positive values: min utility {} minus offset \
                     width {} plus shift {} is {floor}; raise population.utility_shift",
                    min_utility,
                    self.population.utility_offset_width,
                    self.population.utility_shift
                ));
            }
        }
        if let Some(sweep) = &self.sweep {
            let attr_index = self
                .schema
                .attribute_index(&sweep.target_attribute)
                .ok_or_else(|| {
                    format!(
                        "sweep.target_attribute '{}' not in the schema",
                        sweep.target_attribute
                    )
                })?;
            let min_k = design.k_list[0];
            if attr_index >= min_k {
                return Err(format!(
                    "sweep target '{}' (attribute {}) is not shown in the smallest group (k = {min_k})",
                    sweep.target_attribute, attr_index
                ));
            }
            let attribute = self.schema.attribute(attr_index);
            for label in [&sweep.contrast_levels.0, &sweep.contrast_levels.1] {
                if !attribute.levels.iter().any(|l| &l.label == label) {
                    return Err(format!(
                        "sweep contrast level '{label}' not a level of '{}'",
                        sweep.target_attribute
                    ));
                }
            }
            if sweep.contrast_levels.0 == sweep.contrast_levels.1 {
                return Err("sweep contrast levels must be distinct".into());
            }
        }
        if let Some(verify) = &self.verify {
            if verify.budget == 0 {
                return Err("verify.budget must be at least 1".into());
            }
            if verify.k == 0 || verify.k > verify.m || verify.m > 6 {
                return Err(format!(
                    "verify needs 1 <= k <= m <= 6, got k={}, m={}",
                    verify.k, verify.m
                ));
            }
            if verify.null_tolerance.is_nan() || verify.null_tolerance <= 0.0 {
                return Err("verify.null_tolerance must be positive".into());
            }
        }
        Ok(())
    }

    /// Core design for one consideration-set size.
    pub fn design_for(&self, k: usize) -> conjoint_core::Result<DesignSpec> {
        let mut spec = DesignSpec::new(
            self.schema.clone(),
            self.design.profiles_per_round,
            self.design.rounds,
            self.design.sampling,
            k,
            self.design.real_m,
        )?;
        spec.unbalanced = self.design.unbalanced;
        spec.freeze_control_salience = self.design.freeze_control_salience;
        spec.salience_mode = self.design.salience_mode;
        spec.epsilon = DEFAULT_EPSILON;
        Ok(spec)
    }

    /// Shift every seed deterministically (the `--seed-override` flag).
    pub fn override_seeds(&mut self, seed: u64) {
        self.population.seed = seed;
        self.design.seed = seed.wrapping_add(1);
        self.estimation.seed = seed.wrapping_add(2);
        if let Some(verify) = &mut self.verify {
            verify.seed = seed.wrapping_add(3);
        }
    }

    /// Resolve the sweep target to attribute/level indices.
    pub fn sweep_target(&self) -> Result<(usize, usize, usize), String> {
        let sweep = self.sweep.as_ref().ok_or("config has no sweep section")?;
        let attr_index = self
            .schema
            .attribute_index(&sweep.target_attribute)
            .ok_or_else(|| format!("unknown attribute '{}'", sweep.target_attribute))?;
        let attribute = self.schema.attribute(attr_index);
        let level_of = |label: &str| {
            attribute
                .levels
                .iter()
                .position(|l| l.label == label)
                .ok_or_else(|| format!("unknown level '{label}'"))
        };
        Ok((
            attr_index,
            level_of(&sweep.contrast_levels.0)?,
            level_of(&sweep.contrast_levels.1)?,
        ))
    }
}
