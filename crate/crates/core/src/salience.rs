//! The salience-weighted choice model: contrast function, salience ranks,
//! rank-discounted weight distortion, attention-restricted renormalization,
//! and profile evaluation.
//!
//! Evaluation of a profile is a weighted sum of per-attribute values. The
//! weights start from the decision maker's base attention weights and are
//! distorted according to how much each attribute stands out from the
//! round's reference point: the attribute ranked most salient keeps its
//! weight, lower ranks are discounted by powers of the severity parameter
//! `delta`, and the result is renormalized to sum to one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::AttributeSchema;

/// Default denominator guard for the contrast function.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Salience values within this tolerance of each other share a rank.
pub const RANK_TIE_TOLERANCE: f64 = 1e-12;

/// Scale on which the contrast function reads attribute values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SalienceMode {
    /// Contrast the per-attribute utility values (shifted to be positive).
    /// Well-defined for every attribute, including categorical ones.
    UtilityScale,
    /// Contrast the raw numeric level codes (e.g. the age value itself).
    RawLevelScale,
}

/// Per-round evaluation context: the reference point each attribute is
/// contrasted against, and the scale it is read on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalienceContext {
    pub mode: SalienceMode,
    /// Per-attribute reference value, typically the round average.
    pub reference: Vec<f64>,
    /// Denominator guard, > 0.
    pub epsilon: f64,
}

impl SalienceContext {
    pub fn new(mode: SalienceMode, reference: Vec<f64>) -> Self {
        SalienceContext {
            mode,
            reference,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// A decision maker: base attention weights over the full attribute space,
/// salience severity, and a utility table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMaker {
    base_weights: Vec<f64>,
    delta: f64,
    utility_shift: f64,
    /// Per-attribute, per-level utility values replacing the schema codes
    /// (individual heterogeneity). `None` falls back to `utility_code`.
    utility_overrides: Option<Vec<Vec<f64>>>,
}

impl DecisionMaker {
    pub fn new(
        base_weights: Vec<f64>,
        delta: f64,
        utility_shift: f64,
        utility_overrides: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if base_weights.is_empty() {
            return Err(Error::invalid("base weights must be non-empty"));
        }
        if base_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(
                "base weights must be finite and non-negative",
            ));
        }
        let total: f64 = base_weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "base weights must sum to 1 within 1e-12, got {total}"
            )));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1], got {delta}"
            )));
        }
        if !utility_shift.is_finite() || utility_shift < 0.0 {
            return Err(Error::invalid(
                "utility shift must be finite and non-negative",
            ));
        }
        if let Some(table) = &utility_overrides {
            if table.len() != base_weights.len() {
                return Err(Error::invalid(
                    "utility override table must cover every attribute",
                ));
            }
            if table.iter().flatten().any(|u| !u.is_finite()) {
                return Err(Error::invalid("utility overrides must be finite"));
            }
        }
        Ok(DecisionMaker {
            base_weights,
            delta,
            utility_shift,
            utility_overrides,
        })
    }

    /// Equal-weight decision maker with no salience effect, used as the
    /// plain weighted-sum benchmark.
    pub fn uniform(num_attributes: usize) -> Result<Self> {
        let w = 1.0 / num_attributes as f64;
        let mut weights = vec![w; num_attributes];
        // Make the sum exactly one regardless of rounding.
        let partial: f64 = weights[..num_attributes - 1].iter().sum();
        weights[num_attributes - 1] = 1.0 - partial;
        DecisionMaker::new(weights, 1.0, 0.0, None)
    }

    pub fn base_weights(&self) -> &[f64] {
        &self.base_weights
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn utility_shift(&self) -> f64 {
        self.utility_shift
    }

    pub fn num_attributes(&self) -> usize {
        self.base_weights.len()
    }

    /// Utility value (including the positivity shift) this DM assigns to a
    /// schema level.
    pub fn value(&self, schema: &AttributeSchema, attribute: usize, level: usize) -> Result<f64> {
        let base = match &self.utility_overrides {
            Some(table) => *table
                .get(attribute)
                .and_then(|levels| levels.get(level))
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "utility override missing for attribute {attribute} level {level}"
                    ))
                })?,
            None => schema.level(attribute, level)?.utility_code,
        };
        Ok(base + self.utility_shift)
    }

    /// Restriction of this DM to the first `keep` attributes, with base
    /// weights renormalized so their ratios are preserved.
    pub fn restricted(&self, keep: usize) -> Result<DecisionMaker> {
        if keep == self.base_weights.len() {
            return Ok(self.clone());
        }
        let weights = restrict_weights(&self.base_weights, keep)?;
        let overrides = self
            .utility_overrides
            .as_ref()
            .map(|table| table[..keep].to_vec());
        Ok(DecisionMaker {
            base_weights: weights,
            delta: self.delta,
            utility_shift: self.utility_shift,
            utility_overrides: overrides,
        })
    }
}

/// Everything observed while evaluating one profile: contrast values,
/// salience ranks, the distorted weights, and the resulting evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTrace {
    pub sigma: Vec<f64>,
    /// Dense ranks of `sigma` in decreasing order; 1 = most salient, ties
    /// share the smaller rank.
    pub ranks: Vec<usize>,
    pub distorted_weights: Vec<f64>,
    pub value: f64,
}

/// Contrast of `x` against `reference`: `|x - reference| / |reference|`,
/// guarded below by `epsilon`.
pub fn salience(x: f64, reference: f64, epsilon: f64) -> Result<f64> {
    if !x.is_finite() || !reference.is_finite() {
        return Err(Error::invalid(format!(
            "salience inputs must be finite, got x={x}, reference={reference}"
        )));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::invalid("epsilon must be positive"));
    }
    Ok((x - reference).abs() / reference.abs().max(epsilon))
}

/// Dense ranks of the salience values in decreasing order. The largest value
/// gets rank 1; values within [`RANK_TIE_TOLERANCE`] of each other share the
/// smaller rank.
pub fn salience_ranks(sigma: &[f64]) -> Result<Vec<usize>> {
    if sigma.is_empty() {
        return Err(Error::invalid("salience vector must be non-empty"));
    }
    if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::invalid(
            "salience values must be finite and non-negative",
        ));
    }
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap());

    let mut ranks = vec![0usize; sigma.len()];
    let mut rank = 0usize;
    let mut prev = f64::INFINITY;
    for &idx in &order {
        if (prev - sigma[idx]).abs() > RANK_TIE_TOLERANCE {
            rank += 1;
        }
        ranks[idx] = rank;
        prev = sigma[idx];
    }
    Ok(ranks)
}

/// Rank-discounted weight distortion: `w_k ∝ delta^(rank_k - 1) * base_k`,
/// normalized to sum to one. `delta = 1`, or an all-tied ranking, leaves the
/// base weights unchanged exactly.
pub fn distort_weights(base: &[f64], ranks: &[usize], delta: f64) -> Result<Vec<f64>> {
    if base.len() != ranks.len() {
        return Err(Error::invalid(format!(
            "weights ({}) and ranks ({}) must have equal length",
            base.len(),
            ranks.len()
        )));
    }
    if base.is_empty() {
        return Err(Error::invalid("weights must be non-empty"));
    }
    let total: f64 = base.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "base weights must sum to 1, got {total}"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    if ranks.iter().any(|&r| r == 0 || r > base.len()) {
        return Err(Error::invalid(
            "ranks must be a dense ranking starting at 1",
        ));
    }
    if delta == 1.0 || ranks.iter().all(|&r| r == ranks[0]) {
        return Ok(base.to_vec());
    }
    let raw: Vec<f64> = base
        .iter()
        .zip(ranks)
        .map(|(&w, &r)| delta.powi(r as i32 - 1) * w)
        .collect();
    let norm: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / norm).collect())
}

/// Renormalize the first `keep` weights to sum to one, preserving their
/// pairwise ratios.
pub fn restrict_weights(full: &[f64], keep: usize) -> Result<Vec<f64>> {
    if keep == 0 || keep > full.len() {
        return Err(Error::invalid(format!(
            "keep must lie in 1..={}, got {keep}",
            full.len()
        )));
    }
    if keep == full.len() {
        return Ok(full.to_vec());
    }
    let kept = &full[..keep];
    let total: f64 = kept.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate(
            "all kept weights are zero; restriction is undefined".into(),
        ));
    }
    Ok(kept.iter().map(|w| w / total).collect())
}

/// Per-attribute reference point for a round: the arithmetic mean of the
/// profiles' scale values (utility scale with shift, or raw level codes).
pub fn round_reference(
    schema: &AttributeSchema,
    profiles: &[Vec<usize>],
    dm: &DecisionMaker,
    mode: SalienceMode,
) -> Result<Vec<f64>> {
    if profiles.is_empty() {
        return Err(Error::invalid("round must contain at least one profile"));
    }
    let width = profiles[0].len();
    if profiles.iter().any(|p| p.len() != width) {
        return Err(Error::invalid(
            "all profiles in a round must have equal width",
        ));
    }
    let mut reference = vec![0.0; width];
    for profile in profiles {
        for (k, &level) in profile.iter().enumerate() {
            reference[k] += scale_value(schema, dm, mode, k, level)?;
        }
    }
    let n = profiles.len() as f64;
    for r in &mut reference {
        *r /= n;
    }
    Ok(reference)
}

fn scale_value(
    schema: &AttributeSchema,
    dm: &DecisionMaker,
    mode: SalienceMode,
    attribute: usize,
    level: usize,
) -> Result<f64> {
    match mode {
        SalienceMode::UtilityScale => dm.value(schema, attribute, level),
        SalienceMode::RawLevelScale => Ok(schema.level(attribute, level)?.salience_code),
    }
}

/// Evaluate one profile for a decision maker under the given context.
///
/// The profile width must match the DM's weight vector and the context's
/// reference vector (restrict the DM first when fewer attributes are shown).
pub fn evaluate_profile(
    dm: &DecisionMaker,
    schema: &AttributeSchema,
    profile: &[usize],
    ctx: &SalienceContext,
) -> Result<EvaluationTrace> {
    let width = dm.num_attributes();
    if profile.len() != width {
        return Err(Error::invalid(format!(
            "profile width {} does not match decision maker's {} attributes",
            profile.len(),
            width
        )));
    }
    if ctx.reference.len() != width {
        return Err(Error::invalid(format!(
            "reference width {} does not match profile width {}",
            ctx.reference.len(),
            width
        )));
    }
    if ctx.reference.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("reference values must be finite"));
    }
    if ctx.mode == SalienceMode::UtilityScale && ctx.reference.iter().any(|&r| r <= 0.0) {
        return Err(Error::invalid(
            "utility-scale references must be positive; increase the utility shift",
        ));
    }

    let mut values = Vec::with_capacity(width);
    let mut sigma = Vec::with_capacity(width);
    for (k, &level) in profile.iter().enumerate() {
        let value = dm.value(schema, k, level)?;
        let scale = match ctx.mode {
            SalienceMode::UtilityScale => value,
            SalienceMode::RawLevelScale => schema.level(k, level)?.salience_code,
        };
        values.push(value);
        sigma.push(salience(scale, ctx.reference[k], ctx.epsilon)?);
    }
    let ranks = salience_ranks(&sigma)?;
    let distorted_weights = distort_weights(dm.base_weights(), &ranks, dm.delta())?;
    let value = distorted_weights
        .iter()
        .zip(&values)
        .map(|(w, v)| w * v)
        .sum();
    Ok(EvaluationTrace {
        sigma,
        ranks,
        distorted_weights,
        value,
    })
}
