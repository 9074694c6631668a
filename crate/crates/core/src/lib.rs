//! Simulation and verification engine for multi-attribute choice under
//! bounded attention and salience distortion.
//!
//! The crate layers four pieces on top of one formal choice model:
//!
//! * [`salience`](mod@salience) — the model itself: weighted-sum evaluation, the contrast
//!   function, rank-discounted weight distortion, and attention-restricted
//!   weight renormalization.
//! * [`design`] / [`population`] / [`simulate`] — conjoint designs,
//!   reproducible respondent populations, and study simulation into
//!   long-format datasets, including two-world potential outcomes.
//! * [`estimands`] — ICE/MCE/AMCE as exact enumeration oracles and as
//!   Monte Carlo estimators with respondent-clustered bootstrap variance.
//! * [`lab`] / [`stats`] — numeric verification of the amplification,
//!   sign-reversal, null-collapse, and importance-reversal results, plus
//!   dummy-coded least squares and random-effects meta-regression.

pub mod design;
pub mod error;
pub mod estimands;
pub mod fmt;
pub mod lab;
pub mod population;
pub mod rng;
pub mod salience;
pub mod schema;
pub mod simulate;
pub mod stats;

pub use design::{generate_round, DesignSpec, Round, SamplingMode};
pub use error::{Error, Result};
pub use estimands::{
    amce_estimate, amce_oracle, ice, mce, Contrast, EffectEstimate, EffectRow, Method,
    OutcomeColumn, OutcomeScale, DEFAULT_ENUMERATION_CAP,
};
pub use population::{DeltaSpec, Population, PopulationSpec};
pub use salience::{
    distort_weights, evaluate_profile, restrict_weights, round_reference, salience, salience_ranks,
    DecisionMaker, EvaluationTrace, SalienceContext, SalienceMode, DEFAULT_EPSILON,
};
pub use schema::{Attribute, AttributeSchema, Level};
pub use simulate::{
    potential_outcomes, simulate_choice, simulate_study, unbalanced_bias, ChoiceOutcome,
    PotentialOutcomePair, ResponseDataset, ResponseRow,
};
pub use stats::{
    absolute_effect_mode, dummy_regression, meta_regression, partial_r2, EffectTable,
    EffectTableRow, MetaFit,
};
