//! Numeric verification lab: closed-form amplification checks, constructive
//! parameter searches for sign/importance reversals and null collapses,
//! rank-stability sweeps, and the AMCE-vs-attribute-count sweep with its
//! heatmap exports.
//!
//! Searches certify every returned instance by re-evaluating it end to end
//! through the profile-evaluation path; nothing is certified from the
//! algebra that guided the search.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::design::{DesignSpec, Round, SamplingMode};
use crate::error::{Error, Result};
use crate::estimands::{amce_estimate, Contrast, EffectEstimate, Method, OutcomeColumn};
use crate::population::Population;
use crate::rng::{mix_seed, substream};
use crate::salience::{restrict_weights, DecisionMaker};
use crate::schema::{Attribute, AttributeSchema, Level};
use crate::simulate::{potential_outcomes, simulate_study, PotentialOutcomePair, ResponseDataset};
use crate::stats::{self, EffectTable, EffectTableRow, OutcomeSelector};

/// Sign certifications require both effects to clear this magnitude.
pub const SIGN_CERT_TOLERANCE: f64 = 1e-8;
/// Null certifications require the wide-set effect to stay below this.
pub const NULL_CERT_TOLERANCE: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Amplification (attention-only regime)
// ---------------------------------------------------------------------------

/// Outcome of one amplification check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplificationCheck {
    pub ite_experiment: f64,
    pub ite_real: f64,
    pub ratio: f64,
    pub predicted: f64,
}

/// Experiment-vs-real effect ratio under limited attention and no salience
/// effect. Asserts the ratio equals `1 / sum(weights[..k])` within 1e-12
/// (relative) and returns both sides.
pub fn verify_amplification(weights: &[f64], k: usize, delta_u: f64) -> Result<AmplificationCheck> {
    if delta_u == 0.0 || !delta_u.is_finite() {
        return Err(Error::invalid(
            "amplification is undefined for a zero utility contrast",
        ));
    }
    if k == 0 || k > weights.len() {
        return Err(Error::invalid(format!(
            "k must lie in 1..={}, got {k}",
            weights.len()
        )));
    }
    if weights[0] <= 0.0 {
        return Err(Error::Degenerate(
            "the treatment attribute carries no attention weight".into(),
        ));
    }
    let restricted = restrict_weights(weights, k)?;
    let ite_experiment = restricted[0] * delta_u;
    let ite_real = weights[0] * delta_u;
    let ratio = ite_experiment / ite_real;
    let predicted = 1.0 / weights[..k].iter().sum::<f64>();
    if (ratio - predicted).abs() > 1e-12 * predicted.abs().max(1.0) {
        return Err(Error::Estimation(format!(
            "amplification ratio {ratio} deviates from predicted {predicted}"
        )));
    }
    Ok(AmplificationCheck {
        ite_experiment,
        ite_real,
        ratio,
        predicted,
    })
}

/// Amplification ratios for every consideration-set size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// `ratios[i]` is the amplification at k = i + 1.
    pub ratios: Vec<f64>,
    pub strictly_decreasing: bool,
}

/// Sweep the amplification factor over k = 1..=m and check it decreases
/// strictly whenever the newly included attribute carries positive weight.
pub fn verify_amplification_monotone(weights: &[f64]) -> Result<MonotonicityReport> {
    let m = weights.len();
    let mut ratios = Vec::with_capacity(m);
    for k in 1..=m {
        ratios.push(verify_amplification(weights, k, 1.0)?.ratio);
    }
    let mut strictly_decreasing = true;
    for k in 1..m {
        let included = weights[k];
        if included > 1e-12 {
            strictly_decreasing &= ratios[k - 1] > ratios[k] + 1e-12 * ratios[k].abs();
        } else {
            strictly_decreasing &= (ratios[k - 1] - ratios[k]).abs() <= 1e-9 * ratios[k].abs();
        }
    }
    Ok(MonotonicityReport {
        ratios,
        strictly_decreasing,
    })
}

// ---------------------------------------------------------------------------
// Scenario: a fully parameterized two-profile, two-world comparison
// ---------------------------------------------------------------------------

/// A complete parameter dump for one two-profile comparison: base weights,
/// severity, per-level utilities, the realized profile/opponent levels, and
/// the world-2 alternate levels. Instances serialize this whole struct so
/// any search hit is replayable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub base_weights: Vec<f64>,
    pub delta: f64,
    /// Per attribute, per level utility values (all positive).
    pub level_utilities: Vec<Vec<f64>>,
    /// Profile 1's level per attribute (world 1).
    pub profile: Vec<usize>,
    /// Profile 1's world-2 level per attribute; only the target's is used.
    pub alternate: Vec<usize>,
    /// Profile 2's level per attribute (fixed across worlds).
    pub opponent: Vec<usize>,
    /// Experiment consideration-set size.
    pub k: usize,
}

impl Scenario {
    pub fn m(&self) -> usize {
        self.base_weights.len()
    }

    pub fn schema(&self) -> Result<AttributeSchema> {
        AttributeSchema::new(
            self.level_utilities
                .iter()
                .enumerate()
                .map(|(i, levels)| {
                    Attribute::new(
                        format!("attr{}", i + 1),
                        levels
                            .iter()
                            .enumerate()
                            .map(|(j, &u)| Level::new(format!("l{j}"), u, u))
                            .collect(),
                    )
                })
                .collect(),
        )
    }

    pub fn design(&self) -> Result<DesignSpec> {
        DesignSpec::new(
            self.schema()?,
            2,
            1,
            SamplingMode::UniformIid,
            self.k,
            self.m(),
        )
    }

    pub fn decision_maker(&self) -> Result<DecisionMaker> {
        DecisionMaker::new(self.base_weights.clone(), self.delta, 0.0, None)
    }

    /// Evaluate both hypothetical worlds when the first `width` attributes
    /// are weighed and `target` is the treatment attribute.
    pub fn outcomes(
        &self,
        design: &DesignSpec,
        dm: &DecisionMaker,
        width: usize,
        target: usize,
    ) -> Result<PotentialOutcomePair> {
        let round = Round::new(
            vec![
                self.profile[..width].to_vec(),
                self.opponent[..width].to_vec(),
            ],
            0,
            0,
        );
        potential_outcomes(
            dm,
            &round,
            design,
            target,
            self.profile[target],
            self.alternate[target],
        )
    }

    /// Potential-outcome pairs in the k-attribute and m-attribute settings.
    pub fn evaluate(&self, target: usize) -> Result<(PotentialOutcomePair, PotentialOutcomePair)> {
        let design = self.design()?;
        let dm = self.decision_maker()?;
        let pair_k = self.outcomes(&design, &dm, self.k, target)?;
        let pair_m = self.outcomes(&design, &dm, self.m(), target)?;
        Ok((pair_k, pair_m))
    }

    fn with_last_profile_utility(&self, utility: f64) -> Scenario {
        let mut scenario = self.clone();
        let last = scenario.m() - 1;
        let level = scenario.profile[last];
        scenario.level_utilities[last][level] = utility;
        scenario
    }
}

/// Search configuration shared by the constructive searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub budget: usize,
    pub seed: u64,
    /// Real-world consideration-set size.
    pub m: usize,
    /// Experiment consideration-set size.
    pub k: usize,
    /// Fixed severity; `None` draws one uniformly from (0, 1) per instance.
    pub delta: Option<f64>,
    /// Stop collecting once this many certified instances are found.
    pub max_instances: usize,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            budget: 100_000,
            seed: 0,
            m: 3,
            k: 2,
            delta: None,
            max_instances: 25,
        }
    }
}

impl SearchSpec {
    fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::invalid("search budget must be at least 1"));
        }
        if self.k == 0 || self.k > self.m {
            return Err(Error::invalid(format!(
                "need 1 <= k <= m, got k={}, m={}",
                self.k, self.m
            )));
        }
        if self.m > 6 {
            return Err(Error::invalid("searches support at most m = 6 attributes"));
        }
        if let Some(delta) = self.delta {
            if !(delta > 0.0 && delta <= 1.0) {
                return Err(Error::invalid(format!(
                    "delta must lie in (0, 1], got {delta}"
                )));
            }
        }
        Ok(())
    }
}

/// Uniform simplex draw, rejecting vectors with a component below `floor`
/// so effects stay numerically meaningful.
fn draw_weights(rng: &mut impl Rng, m: usize, floor: f64) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..m).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        if weights.iter().all(|&w| w >= floor) {
            return weights;
        }
    }
}

fn draw_delta(rng: &mut impl Rng, spec: &SearchSpec) -> f64 {
    match spec.delta {
        Some(delta) => delta,
        None => loop {
            let d = rng.gen::<f64>();
            if d > 0.0 && d < 1.0 {
                break d;
            }
        },
    }
}

/// One random three-levels-per-attribute scenario: level 0 is profile 1's
/// value, level 1 the world-2 alternate, level 2 the opponent's value.
fn draw_scenario(spec: &SearchSpec, draw_index: u64) -> Scenario {
    let mut rng = substream(spec.seed, draw_index);
    let m = spec.m;
    let base_weights = draw_weights(&mut rng, m, 1e-3);
    let delta = draw_delta(&mut rng, spec);
    let level_utilities: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..3).map(|_| rng.gen_range(0.001..10.0)).collect())
        .collect();
    Scenario {
        base_weights,
        delta,
        level_utilities,
        profile: vec![0; m],
        alternate: vec![1; m],
        opponent: vec![2; m],
        k: spec.k,
    }
}

fn certified_sign_flip(a: f64, b: f64) -> bool {
    a.abs() > SIGN_CERT_TOLERANCE && b.abs() > SIGN_CERT_TOLERANCE && (a > 0.0) != (b > 0.0)
}

// ---------------------------------------------------------------------------
// Sign reversal (existence search)
// ---------------------------------------------------------------------------

/// A certified instance where the treatment effect flips sign between the
/// k-attribute and m-attribute consideration sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalInstance {
    pub scenario: Scenario,
    pub ite_k: f64,
    pub ite_m: f64,
    pub outcomes_k: PotentialOutcomePair,
    pub outcomes_m: PotentialOutcomePair,
}

impl ReversalInstance {
    /// Recompute the instance from its parameter dump and re-check the
    /// certification conditions.
    pub fn reverify(&self) -> Result<()> {
        let (pair_k, pair_m) = self.scenario.evaluate(0)?;
        let (ite_k, ite_m) = (pair_k.ite_value(), pair_m.ite_value());
        if (ite_k - self.ite_k).abs() > 1e-9 || (ite_m - self.ite_m).abs() > 1e-9 {
            return Err(Error::Estimation(format!(
                "replay mismatch: stored ({}, {}), recomputed ({ite_k}, {ite_m})",
                self.ite_k, self.ite_m
            )));
        }
        if !certified_sign_flip(ite_k, ite_m) {
            return Err(Error::Estimation(
                "instance is not a certified sign flip".into(),
            ));
        }
        if !(pair_k.rank_change() || pair_m.rank_change()) {
            return Err(Error::Estimation(
                "instance lacks the rank-change condition".into(),
            ));
        }
        Ok(())
    }
}

/// Random search for effect-sign reversals between the k- and m-attribute
/// settings. Every hit is re-verified end to end before it is returned; an
/// empty result within budget is a report, not a failure.
pub fn search_sign_reversal(spec: &SearchSpec) -> Result<Vec<ReversalInstance>> {
    spec.validate()?;
    let hits: Vec<Option<ReversalInstance>> = (0..spec.budget)
        .into_par_iter()
        .map(|i| -> Result<Option<ReversalInstance>> {
            let scenario = draw_scenario(spec, i as u64);
            let (pair_k, pair_m) = scenario.evaluate(0)?;
            let (ite_k, ite_m) = (pair_k.ite_value(), pair_m.ite_value());
            if certified_sign_flip(ite_k, ite_m) && (pair_k.rank_change() || pair_m.rank_change()) {
                Ok(Some(ReversalInstance {
                    scenario,
                    ite_k,
                    ite_m,
                    outcomes_k: pair_k,
                    outcomes_m: pair_m,
                }))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let instances: Vec<ReversalInstance> = hits
        .into_iter()
        .flatten()
        .take(spec.max_instances)
        .collect();
    for instance in &instances {
        instance.reverify()?;
    }
    Ok(instances)
}

// ---------------------------------------------------------------------------
// Null collapse (vanishing wide-set effect)
// ---------------------------------------------------------------------------

/// A certified instance where the k-attribute effect is material while the
/// m-attribute effect vanishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullCollapseInstance {
    pub scenario: Scenario,
    pub ite_k: f64,
    pub ite_m: f64,
    pub outcomes_k: PotentialOutcomePair,
    pub outcomes_m: PotentialOutcomePair,
}

impl NullCollapseInstance {
    pub fn reverify(&self, tolerance: f64) -> Result<()> {
        let (pair_k, pair_m) = self.scenario.evaluate(0)?;
        let (ite_k, ite_m) = (pair_k.ite_value(), pair_m.ite_value());
        if (ite_k - self.ite_k).abs() > 1e-9 || (ite_m - self.ite_m).abs() > 1e-9 {
            return Err(Error::Estimation(
                "replay mismatch on null-collapse instance".into(),
            ));
        }
        if ite_m.abs() > tolerance {
            return Err(Error::Estimation(format!(
                "wide-set effect {ite_m} exceeds the null tolerance {tolerance}"
            )));
        }
        if ite_k.abs() < 0.01 {
            return Err(Error::Estimation(format!(
                "experiment effect {ite_k} is itself negligible"
            )));
        }
        if !(pair_k.rank_change() || pair_m.rank_change()) {
            return Err(Error::Estimation(
                "instance lacks the rank-change condition".into(),
            ));
        }
        Ok(())
    }
}

/// Search for null collapses: draws with a material k-attribute effect are
/// refined by bisecting the last attribute's utility between opposite-sign
/// wide-set effects (the effect is linear in that utility wherever the
/// salience rank tables stay fixed, so a continuous zero crossing exists
/// between same-rank endpoints).
pub fn search_null_collapse(
    spec: &SearchSpec,
    tolerance: f64,
) -> Result<Vec<NullCollapseInstance>> {
    spec.validate()?;
    if spec.k >= spec.m {
        return Err(Error::invalid(
            "null collapse needs k < m so the refined attribute is outside the experiment",
        ));
    }
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let hits: Vec<Option<NullCollapseInstance>> = (0..spec.budget)
        .into_par_iter()
        .map(|i| -> Result<Option<NullCollapseInstance>> {
            let scenario = draw_scenario(spec, i as u64);
            refine_null_collapse(&scenario, tolerance)
        })
        .collect::<Result<_>>()?;
    let instances: Vec<NullCollapseInstance> = hits
        .into_iter()
        .flatten()
        .take(spec.max_instances)
        .collect();
    for instance in &instances {
        instance.reverify(tolerance)?;
    }
    Ok(instances)
}

fn rank_tables(pair: &PotentialOutcomePair) -> Vec<&[usize]> {
    pair.world1
        .iter()
        .chain(&pair.world2)
        .map(|t| t.ranks.as_slice())
        .collect()
}

fn refine_null_collapse(
    scenario: &Scenario,
    tolerance: f64,
) -> Result<Option<NullCollapseInstance>> {
    let (pair_k, _) = scenario.evaluate(0)?;
    let ite_k = pair_k.ite_value();
    if ite_k.abs() < 0.01 {
        return Ok(None);
    }
    // Scan the last attribute's profile utility for a sign change of the
    // wide-set effect between rank-stable endpoints.
    const GRID: usize = 24;
    let mut grid_points = Vec::with_capacity(GRID + 1);
    for g in 0..=GRID {
        let u = 0.2 + (9.8 - 0.2) * g as f64 / GRID as f64;
        let candidate = scenario.with_last_profile_utility(u);
        let (_, pair_m) = candidate.evaluate(0)?;
        grid_points.push((u, pair_m.ite_value(), rank_tables(&pair_m).concat()));
    }
    for window in grid_points.windows(2) {
        let (u_lo, ite_lo, ranks_lo) = &window[0];
        let (u_hi, ite_hi, ranks_hi) = &window[1];
        if (ite_lo > &0.0) == (ite_hi > &0.0) || ranks_lo != ranks_hi {
            continue;
        }
        let (mut lo, mut hi, mut ite_lo) = (*u_lo, *u_hi, *ite_lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let candidate = scenario.with_last_profile_utility(mid);
            let (pair_k, pair_m) = candidate.evaluate(0)?;
            let ite_mid = pair_m.ite_value();
            if ite_mid.abs() <= tolerance {
                let ite_k = pair_k.ite_value();
                if ite_k.abs() >= 0.01 && (pair_k.rank_change() || pair_m.rank_change()) {
                    return Ok(Some(NullCollapseInstance {
                        scenario: candidate,
                        ite_k,
                        ite_m: ite_mid,
                        outcomes_k: pair_k,
                        outcomes_m: pair_m,
                    }));
                }
                break;
            }
            if (ite_mid > 0.0) == (ite_lo > 0.0) {
                lo = mid;
                ite_lo = ite_mid;
            } else {
                hi = mid;
            }
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// No reversal without rank changes (impossibility sweep)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoReversalReport {
    /// Rank-change-free draws with a non-negligible effect that were checked.
    pub draws_checked: usize,
    /// Total random draws consumed, including rejected ones.
    pub attempts: usize,
    /// Accepted draws skipped because the effect was numerically zero.
    pub skipped_zero: usize,
    /// Counterexamples (must stay empty).
    pub flips: Vec<ReversalInstance>,
}

/// Draw rank-change-free instances and confirm the effect sign never flips
/// between the k- and m-attribute settings.
pub fn verify_no_reversal(spec: &SearchSpec, draws: usize) -> Result<NoReversalReport> {
    spec.validate()?;
    let mut report = NoReversalReport {
        draws_checked: 0,
        attempts: 0,
        skipped_zero: 0,
        flips: Vec::new(),
    };
    let max_attempts = draws.saturating_mul(100).max(1000);
    while report.draws_checked < draws && report.attempts < max_attempts {
        let scenario = draw_scenario(spec, report.attempts as u64);
        report.attempts += 1;
        let (pair_k, pair_m) = scenario.evaluate(0)?;
        if pair_k.rank_change() || pair_m.rank_change() {
            continue;
        }
        let (ite_k, ite_m) = (pair_k.ite_value(), pair_m.ite_value());
        if ite_k.abs() <= 1e-12 || ite_m.abs() <= 1e-12 {
            report.skipped_zero += 1;
            continue;
        }
        report.draws_checked += 1;
        if (ite_k > 0.0) != (ite_m > 0.0) {
            report.flips.push(ReversalInstance {
                scenario,
                ite_k,
                ite_m,
                outcomes_k: pair_k,
                outcomes_m: pair_m,
            });
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Importance reversal (|effect| ordering flips)
// ---------------------------------------------------------------------------

/// A certified instance where the |effect| ordering of the first two
/// attributes flips between the k- and m-attribute settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceInstance {
    pub scenario: Scenario,
    pub ite_first_k: f64,
    pub ite_second_k: f64,
    pub ite_first_m: f64,
    pub ite_second_m: f64,
    pub outcomes_first_k: PotentialOutcomePair,
    pub outcomes_second_k: PotentialOutcomePair,
    pub outcomes_first_m: PotentialOutcomePair,
    pub outcomes_second_m: PotentialOutcomePair,
}

impl ImportanceInstance {
    fn gaps(&self) -> (f64, f64) {
        (
            self.ite_first_k.abs() - self.ite_second_k.abs(),
            self.ite_first_m.abs() - self.ite_second_m.abs(),
        )
    }

    pub fn reverify(&self) -> Result<()> {
        let (first_k, first_m) = self.scenario.evaluate(0)?;
        let (second_k, second_m) = self.scenario.evaluate(1)?;
        let values = [
            (first_k.ite_value(), self.ite_first_k),
            (second_k.ite_value(), self.ite_second_k),
            (first_m.ite_value(), self.ite_first_m),
            (second_m.ite_value(), self.ite_second_m),
        ];
        if values.iter().any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(Error::Estimation(
                "replay mismatch on importance instance".into(),
            ));
        }
        let (gap_k, gap_m) = self.gaps();
        if !(gap_k.abs() > SIGN_CERT_TOLERANCE
            && gap_m.abs() > SIGN_CERT_TOLERANCE
            && (gap_k > 0.0) != (gap_m > 0.0))
        {
            return Err(Error::Estimation(
                "instance is not a certified importance flip".into(),
            ));
        }
        Ok(())
    }
}

/// Random search for importance-rank flips of the first two attributes
/// between the k- and m-attribute settings.
pub fn search_importance_reversal(spec: &SearchSpec) -> Result<Vec<ImportanceInstance>> {
    spec.validate()?;
    if spec.k < 2 {
        return Err(Error::invalid(
            "importance comparison needs at least two shown attributes",
        ));
    }
    let hits: Vec<Option<ImportanceInstance>> = (0..spec.budget)
        .into_par_iter()
        .map(|i| -> Result<Option<ImportanceInstance>> {
            let scenario = draw_scenario(spec, i as u64);
            let (first_k, first_m) = scenario.evaluate(0)?;
            let (second_k, second_m) = scenario.evaluate(1)?;
            let gap_k = first_k.ite_value().abs() - second_k.ite_value().abs();
            let gap_m = first_m.ite_value().abs() - second_m.ite_value().abs();
            if gap_k.abs() > SIGN_CERT_TOLERANCE
                && gap_m.abs() > SIGN_CERT_TOLERANCE
                && (gap_k > 0.0) != (gap_m > 0.0)
            {
                Ok(Some(ImportanceInstance {
                    ite_first_k: first_k.ite_value(),
                    ite_second_k: second_k.ite_value(),
                    ite_first_m: first_m.ite_value(),
                    ite_second_m: second_m.ite_value(),
                    outcomes_first_k: first_k,
                    outcomes_second_k: second_k,
                    outcomes_first_m: first_m,
                    outcomes_second_m: second_m,
                    scenario,
                }))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let instances: Vec<ImportanceInstance> = hits
        .into_iter()
        .flatten()
        .take(spec.max_instances)
        .collect();
    for instance in &instances {
        instance.reverify()?;
    }
    Ok(instances)
}

// ---------------------------------------------------------------------------
// Marginal-contrast comparison (adjacent levels vs unconstrained)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedFlipSpec {
    pub draws: usize,
    pub seed: u64,
    pub m: usize,
    pub k: usize,
    pub delta: f64,
    pub levels_per_attribute: usize,
}

impl Default for PairedFlipSpec {
    fn default() -> Self {
        PairedFlipSpec {
            draws: 10_000,
            seed: 0,
            m: 3,
            k: 2,
            delta: 0.3,
            levels_per_attribute: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedFlipReport {
    pub draws: usize,
    pub unconstrained_flips: usize,
    pub constrained_flips: usize,
    pub unconstrained_rank_changes: usize,
    pub constrained_rank_changes: usize,
    /// Draws flipping only under unconstrained assignment.
    pub discordant_unconstrained_only: usize,
    /// Draws flipping only under adjacent-constrained assignment.
    pub discordant_constrained_only: usize,
    /// One-sided exact binomial p-value that unconstrained assignment
    /// produces more flips among the discordant pairs.
    pub p_value: f64,
}

/// Paired comparison of certified sign flips under unconstrained versus
/// adjacent-constrained treatment contrasts. Each draw shares its decision
/// maker, level grid, profile, and opponent across the two arms; only the
/// treatment's world-2 level differs (any other level vs a grid neighbour).
/// A marginal level change barely moves the treatment's contrast value, so
/// salience ranks change less often and sign flips become rarer.
pub fn compare_adjacent_flip_rates(spec: &PairedFlipSpec) -> Result<PairedFlipReport> {
    if spec.draws == 0 {
        return Err(Error::invalid("paired comparison needs at least one draw"));
    }
    if spec.levels_per_attribute < 3 {
        return Err(Error::invalid("level grids need at least 3 levels"));
    }
    if !(spec.delta > 0.0 && spec.delta <= 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1]"));
    }
    if spec.k == 0 || spec.k > spec.m {
        return Err(Error::invalid("need 1 <= k <= m"));
    }

    let outcomes: Vec<(bool, bool, bool, bool)> = (0..spec.draws)
        .into_par_iter()
        .map(|i| -> Result<(bool, bool, bool, bool)> {
            let mut rng = substream(spec.seed, i as u64);
            let m = spec.m;
            let levels = spec.levels_per_attribute;
            let weights = draw_weights(&mut rng, m, 1e-3);
            // Increasing utility grid per attribute: adjacency in index
            // means closeness in value.
            let grids: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    let mut u = rng.gen_range(0.5..1.5);
                    (0..levels)
                        .map(|_| {
                            let current = u;
                            u += rng.gen_range(0.5..2.0);
                            current
                        })
                        .collect()
                })
                .collect();
            let profile: Vec<usize> = (0..m).map(|_| rng.gen_range(0..levels)).collect();
            // The opponent's treatment level is shared by both arms; the
            // treatment contrast itself is never collapsed onto it.
            let opponent_target = rng.gen_range(0..levels);

            // Unconstrained arm: the world-2 treatment level jumps anywhere
            // and the opponent's other attributes land anywhere.
            let alt_unc = draw_not_equal(&mut rng, levels, profile[0]);
            let mut opponent_unc = vec![opponent_target; m];
            for item in opponent_unc.iter_mut().skip(1) {
                *item = rng.gen_range(0..levels);
            }
            // Constrained arm: the treatment moves to a grid neighbour and
            // every other attribute contrast is one grid step.
            let alt_con = draw_adjacent(&mut rng, levels, profile[0]);
            let mut opponent_con = vec![opponent_target; m];
            for (j, item) in opponent_con.iter_mut().enumerate().skip(1) {
                *item = draw_adjacent(&mut rng, levels, profile[j]);
            }

            let mut alternate_unc = profile.clone();
            alternate_unc[0] = alt_unc;
            let mut alternate_con = profile.clone();
            alternate_con[0] = alt_con;

            let base = Scenario {
                base_weights: weights,
                delta: spec.delta,
                level_utilities: grids,
                profile,
                alternate: alternate_unc,
                opponent: opponent_unc,
                k: spec.k,
            };
            let constrained = Scenario {
                alternate: alternate_con,
                opponent: opponent_con,
                ..base.clone()
            };

            let (unc_k, unc_m) = base.evaluate(0)?;
            let (con_k, con_m) = constrained.evaluate(0)?;
            Ok((
                certified_sign_flip(unc_k.ite_value(), unc_m.ite_value()),
                certified_sign_flip(con_k.ite_value(), con_m.ite_value()),
                unc_k.rank_change() || unc_m.rank_change(),
                con_k.rank_change() || con_m.rank_change(),
            ))
        })
        .collect::<Result<_>>()?;

    let mut report = PairedFlipReport {
        draws: spec.draws,
        unconstrained_flips: 0,
        constrained_flips: 0,
        unconstrained_rank_changes: 0,
        constrained_rank_changes: 0,
        discordant_unconstrained_only: 0,
        discordant_constrained_only: 0,
        p_value: 1.0,
    };
    for (flip_unc, flip_con, rank_unc, rank_con) in outcomes {
        report.unconstrained_flips += usize::from(flip_unc);
        report.constrained_flips += usize::from(flip_con);
        report.unconstrained_rank_changes += usize::from(rank_unc);
        report.constrained_rank_changes += usize::from(rank_con);
        report.discordant_unconstrained_only += usize::from(flip_unc && !flip_con);
        report.discordant_constrained_only += usize::from(flip_con && !flip_unc);
    }
    report.p_value = binomial_sf_half(
        report.discordant_unconstrained_only + report.discordant_constrained_only,
        report.discordant_unconstrained_only,
    );
    Ok(report)
}

fn draw_not_equal(rng: &mut impl Rng, levels: usize, avoid: usize) -> usize {
    let raw = rng.gen_range(0..levels - 1);
    if raw >= avoid {
        raw + 1
    } else {
        raw
    }
}

fn draw_adjacent(rng: &mut impl Rng, levels: usize, anchor: usize) -> usize {
    let mut neighbours = Vec::with_capacity(2);
    if anchor > 0 {
        neighbours.push(anchor - 1);
    }
    if anchor + 1 < levels {
        neighbours.push(anchor + 1);
    }
    neighbours[rng.gen_range(0..neighbours.len())]
}

/// One-sided exact binomial tail P(X >= observed) for X ~ Bin(n, 1/2).
fn binomial_sf_half(n: usize, observed: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if observed == 0 {
        return 1.0;
    }
    let binomial = Binomial::new(0.5, n as u64).expect("valid binomial");
    binomial.sf(observed as u64 - 1)
}

// ---------------------------------------------------------------------------
// AMCE-vs-k sweep and heatmaps
// ---------------------------------------------------------------------------

/// Configuration for the attribute-count sweep and its heatmap exports.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Design template; `consideration_k` is replaced per sweep point.
    pub design: DesignSpec,
    pub k_list: Vec<usize>,
    pub target_attribute: usize,
    /// (treatment level, baseline level) of the target attribute.
    pub contrast: (usize, usize),
    pub study_seed: u64,
    pub outcome: OutcomeColumn,
    pub method: Method,
    pub bootstrap_resamples: usize,
    pub estimation_seed: u64,
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        if self.k_list.is_empty() {
            return Err(Error::invalid("sweep needs at least one k value"));
        }
        if self.k_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("k list must be strictly increasing"));
        }
        let min_k = self.k_list[0];
        let max_k = *self.k_list.last().unwrap();
        if self.target_attribute >= min_k {
            return Err(Error::invalid(format!(
                "target attribute {} must be shown in every group (min k = {min_k})",
                self.target_attribute
            )));
        }
        if max_k > self.design.real_m {
            return Err(Error::invalid(format!(
                "largest k {max_k} exceeds the real consideration set m = {}",
                self.design.real_m
            )));
        }
        Ok(())
    }

    fn design_for(&self, k: usize) -> Result<DesignSpec> {
        let mut design = self.design.clone();
        design.consideration_k = k;
        design.validate()?;
        Ok(design)
    }

    fn simulate_group(&self, population: &Population, k: usize) -> Result<ResponseDataset> {
        let design = self.design_for(k)?;
        simulate_study(population, &design, mix_seed(self.study_seed, k as u64))
    }
}

/// Simulate one study per consideration-set size and estimate the target
/// contrast in each; rows feed directly into the meta-regression.
pub fn sweep_amce_vs_k(spec: &SweepSpec, population: &Population) -> Result<EffectTable> {
    spec.validate()?;
    let contrast = Contrast {
        attribute: spec.target_attribute,
        level_t: spec.contrast.0,
        level_c: spec.contrast.1,
    };
    let mut rows = Vec::with_capacity(spec.k_list.len());
    for &k in &spec.k_list {
        let dataset = spec.simulate_group(population, k)?;
        let estimate = amce_estimate(
            &dataset,
            contrast,
            spec.method,
            spec.outcome,
            spec.bootstrap_resamples,
            mix_seed(spec.estimation_seed, k as u64),
        )?;
        rows.push(EffectTableRow {
            study_id: format!("k{k}"),
            k_attributes: k as u32,
            effect: estimate.point,
            variance: estimate.variance,
            country: None,
        });
    }
    Ok(EffectTable { rows })
}

/// Effect-sign matrix over (attribute level, k): -1/0/+1 with 0 when the
/// estimate is within two standard errors of zero; `None` when the
/// attribute is not shown at that k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignHeatmap {
    pub k_list: Vec<usize>,
    pub rows: Vec<SignRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignRow {
    pub attribute: String,
    pub level: String,
    pub baseline: String,
    pub signs: Vec<Option<i8>>,
}

impl SignHeatmap {
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        let ks: Vec<String> = self.k_list.iter().map(|k| format!("k{k}")).collect();
        writeln!(writer, "attribute,level,baseline,{}", ks.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row
                .signs
                .iter()
                .map(|s| s.map_or(String::new(), |v| v.to_string()))
                .collect();
            writeln!(
                writer,
                "{},{},{},{}",
                row.attribute,
                row.level,
                row.baseline,
                cells.join(",")
            )?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn estimate_sign(estimate: &EffectEstimate) -> i8 {
    if estimate.point.abs() < 2.0 * estimate.se() {
        0
    } else if estimate.point > 0.0 {
        1
    } else {
        -1
    }
}

/// AMCE sign per (attribute level, k) across the sweep.
pub fn sign_heatmap(spec: &SweepSpec, population: &Population) -> Result<SignHeatmap> {
    spec.validate()?;
    let schema = &spec.design.schema;
    let mut rows: Vec<SignRow> = Vec::new();
    for attr in schema.attributes() {
        for level in &attr.levels[1..] {
            rows.push(SignRow {
                attribute: attr.name.clone(),
                level: level.label.clone(),
                baseline: attr.levels[0].label.clone(),
                signs: Vec::with_capacity(spec.k_list.len()),
            });
        }
    }
    for &k in &spec.k_list {
        let dataset = spec.simulate_group(population, k)?;
        let mut row_index = 0;
        for (a, attr) in schema.attributes().iter().enumerate() {
            for l in 1..attr.levels.len() {
                let sign = if a < k {
                    let estimate = amce_estimate(
                        &dataset,
                        Contrast {
                            attribute: a,
                            level_t: l,
                            level_c: 0,
                        },
                        spec.method,
                        spec.outcome,
                        spec.bootstrap_resamples,
                        mix_seed(spec.estimation_seed, (k * 1000 + a * 10 + l) as u64),
                    )?;
                    Some(estimate_sign(&estimate))
                } else {
                    None
                };
                rows[row_index].signs.push(sign);
                row_index += 1;
            }
        }
    }
    Ok(SignHeatmap {
        k_list: spec.k_list.clone(),
        rows,
    })
}

/// Importance ranks per (attribute, k), measured two ways: by the largest
/// |AMCE| across the attribute's levels, and by partial R².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceHeatmap {
    pub k_list: Vec<usize>,
    pub attributes: Vec<String>,
    /// `amce_ranks[attribute][k_index]`, 1 = most important.
    pub amce_ranks: Vec<Vec<Option<usize>>>,
    pub r2_ranks: Vec<Vec<Option<usize>>>,
}

impl ImportanceHeatmap {
    fn write_matrix<W: Write>(&self, mut writer: W, matrix: &[Vec<Option<usize>>]) -> Result<()> {
        let ks: Vec<String> = self.k_list.iter().map(|k| format!("k{k}")).collect();
        writeln!(writer, "attribute,{}", ks.join(","))?;
        for (name, ranks) in self.attributes.iter().zip(matrix) {
            let cells: Vec<String> = ranks
                .iter()
                .map(|r| r.map_or(String::new(), |v| v.to_string()))
                .collect();
            writeln!(writer, "{},{}", name, cells.join(","))?;
        }
        Ok(())
    }

    pub fn write_amce_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_matrix(std::io::BufWriter::new(file), &self.amce_ranks)
    }

    pub fn write_r2_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_matrix(std::io::BufWriter::new(file), &self.r2_ranks)
    }
}

/// Dense descending ranks (1 = largest) over the shown attributes.
fn dense_ranks_desc(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let mut ranks = vec![0usize; values.len()];
    let mut rank = 0;
    let mut prev = f64::INFINITY;
    for &idx in &order {
        if (prev - values[idx]).abs() > 1e-12 {
            rank += 1;
        }
        ranks[idx] = rank;
        prev = values[idx];
    }
    ranks
}

pub fn importance_heatmap(spec: &SweepSpec, population: &Population) -> Result<ImportanceHeatmap> {
    spec.validate()?;
    let schema = &spec.design.schema;
    let names: Vec<String> = schema.attributes().iter().map(|a| a.name.clone()).collect();
    let mut amce_ranks = vec![Vec::with_capacity(spec.k_list.len()); names.len()];
    let mut r2_ranks = vec![Vec::with_capacity(spec.k_list.len()); names.len()];
    let outcome_selector = match spec.outcome {
        OutcomeColumn::Choice => OutcomeSelector::Choice,
        OutcomeColumn::Rating => OutcomeSelector::Rating,
    };
    for &k in &spec.k_list {
        let dataset = spec.simulate_group(population, k)?;
        let mut amce_importance = Vec::with_capacity(k);
        let mut r2_importance = Vec::with_capacity(k);
        for a in 0..k {
            let mut largest = 0.0f64;
            for l in 1..schema.attribute(a).levels.len() {
                let estimate = amce_estimate(
                    &dataset,
                    Contrast {
                        attribute: a,
                        level_t: l,
                        level_c: 0,
                    },
                    spec.method,
                    spec.outcome,
                    spec.bootstrap_resamples,
                    mix_seed(spec.estimation_seed, (7 * k * 1000 + a * 10 + l) as u64),
                )?;
                largest = largest.max(estimate.point.abs());
            }
            amce_importance.push(largest);
            r2_importance.push(stats::partial_r2(&dataset, outcome_selector, a)?);
        }
        let amce_rank = dense_ranks_desc(&amce_importance);
        let r2_rank = dense_ranks_desc(&r2_importance);
        for a in 0..names.len() {
            amce_ranks[a].push((a < k).then(|| amce_rank[a]));
            r2_ranks[a].push((a < k).then(|| r2_rank[a]));
        }
    }
    Ok(ImportanceHeatmap {
        k_list: spec.k_list.clone(),
        attributes: names,
        amce_ranks,
        r2_ranks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{DeltaSpec, PopulationSpec};

    #[test]
    fn amplification_matches_the_closed_form() {
        let check = verify_amplification(&[0.2, 0.3, 0.5], 2, 1.0).unwrap();
        assert!((check.ratio - 2.0).abs() < 1e-12);
        assert!((check.predicted - 2.0).abs() < 1e-12);
    }

    #[test]
    fn amplification_with_full_attention_is_one() {
        let check = verify_amplification(&[0.2, 0.3, 0.5], 3, -2.5).unwrap();
        assert!((check.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplification_for_half_weight_single_attribute() {
        let check = verify_amplification(&[0.5, 0.5], 1, 3.0).unwrap();
        assert!((check.ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn amplification_rejects_zero_contrast() {
        assert!(verify_amplification(&[0.5, 0.5], 1, 0.0).is_err());
    }

    #[test]
    fn equal_weights_ratio_ladder() {
        let report = verify_amplification_monotone(&[0.25; 4]).unwrap();
        let expected = [4.0, 2.0, 4.0 / 3.0, 1.0];
        for (r, e) in report.ratios.iter().zip(expected) {
            assert!((r - e).abs() < 1e-12, "ratio {r} expected {e}");
        }
        assert!(report.strictly_decreasing);
    }

    #[test]
    fn zero_tail_weights_keep_the_ratio_constant() {
        let report = verify_amplification_monotone(&[0.6, 0.4, 0.0, 0.0]).unwrap();
        assert!((report.ratios[1] - 1.0).abs() < 1e-12);
        assert!((report.ratios[3] - 1.0).abs() < 1e-12);
        assert!(report.strictly_decreasing);
    }

    #[test]
    fn monotone_over_random_simplex_draws() {
        for i in 0..1000 {
            let mut rng = substream(314, i);
            let m = 2 + (i % 5) as usize;
            let weights = draw_weights(&mut rng, m, 1e-3);
            let report = verify_amplification_monotone(&weights).unwrap();
            assert!(report.strictly_decreasing, "draw {i}: {:?}", report.ratios);
        }
    }

    #[test]
    fn sign_reversal_search_finds_certified_instances() {
        let spec = SearchSpec {
            budget: 20_000,
            seed: 1,
            ..SearchSpec::default()
        };
        let instances = search_sign_reversal(&spec).unwrap();
        assert!(!instances.is_empty(), "no reversal found in 20k draws");
        for instance in &instances {
            instance.reverify().unwrap();
        }
    }

    #[test]
    fn no_salience_regime_yields_no_reversals() {
        let spec = SearchSpec {
            budget: 5_000,
            seed: 2,
            delta: Some(1.0),
            ..SearchSpec::default()
        };
        assert!(search_sign_reversal(&spec).unwrap().is_empty());
        assert!(search_null_collapse(&spec, NULL_CERT_TOLERANCE)
            .unwrap()
            .is_empty());
        assert!(search_importance_reversal(&spec).unwrap().is_empty());
    }

    #[test]
    fn null_collapse_bisection_certifies() {
        let spec = SearchSpec {
            budget: 4_000,
            seed: 3,
            max_instances: 3,
            ..SearchSpec::default()
        };
        let instances = search_null_collapse(&spec, NULL_CERT_TOLERANCE).unwrap();
        assert!(!instances.is_empty(), "no null collapse found in 4k draws");
        for instance in &instances {
            assert!(instance.ite_m.abs() <= NULL_CERT_TOLERANCE);
            assert!(instance.ite_k.abs() >= 0.01);
            instance.reverify(NULL_CERT_TOLERANCE).unwrap();
        }
    }

    #[test]
    fn rank_stable_draws_never_flip_sign() {
        let spec = SearchSpec {
            seed: 4,
            ..SearchSpec::default()
        };
        let report = verify_no_reversal(&spec, 1_000).unwrap();
        assert_eq!(report.draws_checked, 1_000);
        assert!(report.flips.is_empty(), "{:?}", report.flips.first());
    }

    #[test]
    fn importance_search_finds_certified_instances() {
        let spec = SearchSpec {
            budget: 20_000,
            seed: 5,
            ..SearchSpec::default()
        };
        let instances = search_importance_reversal(&spec).unwrap();
        assert!(
            !instances.is_empty(),
            "no importance flip found in 20k draws"
        );
        for instance in &instances {
            instance.reverify().unwrap();
        }
    }

    #[test]
    fn dominant_attribute_keeps_importance_stable() {
        // First attribute carries >= 0.9 weight, an order of magnitude more
        // utility than the rest, and contrasts so large it stays the top
        // salience rank in every world; its importance rank must not flip
        // even though the lower ranks keep churning.
        let mut flips = 0;
        for i in 0..10_000u64 {
            let mut rng = substream(777, i);
            let rest: f64 = 0.1;
            let w2 = rng.gen_range(0.01..rest - 0.01);
            let weights = vec![0.9, w2, rest - w2];
            let delta = rng.gen_range(0.5..1.0);
            let mut utilities = vec![Vec::new(); 3];
            utilities[0] = vec![
                rng.gen_range(50.0..55.0),  // profile value
                rng.gen_range(75.0..100.0), // world-2 alternate
                rng.gen_range(10.0..15.0),  // opponent value
            ];
            utilities[1] = (0..3).map(|_| rng.gen_range(0.6..1.4)).collect();
            utilities[2] = (0..3).map(|_| rng.gen_range(0.6..1.4)).collect();
            let scenario = Scenario {
                base_weights: weights,
                delta,
                level_utilities: utilities,
                profile: vec![0; 3],
                alternate: vec![1; 3],
                opponent: vec![2; 3],
                k: 2,
            };
            let (first_k, first_m) = scenario.evaluate(0).unwrap();
            let (second_k, second_m) = scenario.evaluate(1).unwrap();
            let gap_k = first_k.ite_value().abs() - second_k.ite_value().abs();
            let gap_m = first_m.ite_value().abs() - second_m.ite_value().abs();
            if gap_k.abs() > SIGN_CERT_TOLERANCE
                && gap_m.abs() > SIGN_CERT_TOLERANCE
                && (gap_k > 0.0) != (gap_m > 0.0)
            {
                flips += 1;
            }
        }
        assert_eq!(
            flips, 0,
            "dominant attribute flipped importance {flips} times"
        );
    }

    #[test]
    fn adjacent_contrasts_produce_fewer_flips() {
        let spec = PairedFlipSpec {
            draws: 4_000,
            seed: 6,
            ..PairedFlipSpec::default()
        };
        let report = compare_adjacent_flip_rates(&spec).unwrap();
        assert!(
            report.constrained_flips < report.unconstrained_flips,
            "constrained {} vs unconstrained {}",
            report.constrained_flips,
            report.unconstrained_flips
        );
        assert!(
            report.constrained_rank_changes < report.unconstrained_rank_changes,
            "rank changes: constrained {} vs unconstrained {}",
            report.constrained_rank_changes,
            report.unconstrained_rank_changes
        );
        assert!(report.p_value < 0.01, "p = {}", report.p_value);
    }

    #[test]
    fn binomial_tail_handles_edges() {
        assert_eq!(binomial_sf_half(0, 0), 1.0);
        assert_eq!(binomial_sf_half(10, 0), 1.0);
        assert!((binomial_sf_half(10, 10) - 0.5f64.powi(10)).abs() < 1e-12);
        assert!(binomial_sf_half(100, 80) < 1e-8);
    }

    fn sweep_spec_for_test(gaps: &[f64]) -> SweepSpec {
        let schema = AttributeSchema::new(
            gaps.iter()
                .enumerate()
                .map(|(i, &gap)| {
                    Attribute::new(
                        format!("a{i}"),
                        vec![Level::new("lo", 0.0, 0.0), Level::new("hi", gap, 1.0)],
                    )
                })
                .collect(),
        )
        .unwrap();
        let width = gaps.len();
        let design = DesignSpec::new(schema, 2, 4, SamplingMode::UniformIid, 2, width).unwrap();
        SweepSpec {
            design,
            k_list: (2..=width).collect(),
            target_attribute: 0,
            contrast: (1, 0),
            study_seed: 34,
            outcome: OutcomeColumn::Choice,
            method: Method::DifferenceInMeans,
            bootstrap_resamples: 120,
            estimation_seed: 56,
        }
    }

    fn sweep_population_for_test(spec: &SweepSpec) -> Population {
        Population::generate(
            &spec.design.schema,
            &PopulationSpec {
                size: 400,
                dirichlet_kappa: None,
                delta: DeltaSpec::Fixed { value: 1.0 },
                utility_offset_width: 0.25,
                utility_shift: 1.5,
                seed: 12,
            },
        )
        .unwrap()
    }

    #[test]
    fn sweep_effects_shrink_with_more_attributes() {
        let spec = sweep_spec_for_test(&[1.0; 4]);
        let table = sweep_amce_vs_k(&spec, &sweep_population_for_test(&spec)).unwrap();
        assert_eq!(table.rows.len(), 3);
        assert!(
            table.rows[0].effect > table.rows[2].effect,
            "k=2 effect {} should exceed k=4 effect {}",
            table.rows[0].effect,
            table.rows[2].effect
        );
    }

    #[test]
    fn rating_scale_sweep_tracks_the_amplification_factor() {
        // With no salience effect the rating-scale effect is proportional
        // to the restricted target weight, so consecutive sweep points
        // shrink by the predicted amplification ratio.
        let mut spec = sweep_spec_for_test(&[1.0; 4]);
        spec.outcome = OutcomeColumn::Rating;
        let population = sweep_population_for_test(&spec);
        let table = sweep_amce_vs_k(&spec, &population).unwrap();
        // Equal weights: restricted target weight is 1/k.
        for pair in table.rows.windows(2) {
            let expected = pair[1].k_attributes as f64 / pair[0].k_attributes as f64;
            let observed = pair[0].effect / pair[1].effect;
            let se = (pair[0].variance + pair[1].variance).sqrt() / pair[1].effect.abs();
            assert!(
                (observed - expected).abs() <= 4.0 * se.max(0.02),
                "k={}->{}: ratio {observed} expected {expected}",
                pair[0].k_attributes,
                pair[1].k_attributes
            );
        }
    }

    #[test]
    fn zero_tail_weights_give_a_flat_sweep() {
        // All attention mass sits on the first two attributes, so showing
        // more of them changes nothing and the fitted slope is null.
        let spec = sweep_spec_for_test(&[1.0; 4]);
        let members = (0..400u64)
            .map(|i| {
                let mut rng = substream(4711, i);
                let overrides = spec
                    .design
                    .schema
                    .attributes()
                    .iter()
                    .map(|attr| {
                        attr.levels
                            .iter()
                            .map(|level| level.utility_code + rng.gen_range(-0.25..0.25))
                            .collect()
                    })
                    .collect();
                DecisionMaker::new(vec![0.5, 0.5, 0.0, 0.0], 1.0, 1.5, Some(overrides)).unwrap()
            })
            .collect();
        let population = Population {
            members,
            master_seed: 4711,
        };
        let table = sweep_amce_vs_k(&spec, &population).unwrap();
        let fit = crate::stats::meta_regression(&table).unwrap();
        assert!(
            fit.slope.abs() <= 2.0 * fit.slope_se,
            "slope {} (se {}) not flat",
            fit.slope,
            fit.slope_se
        );
    }

    #[test]
    fn delta_one_keeps_importance_order_stable_across_k() {
        // Distinct utility gaps with equal weights give a strict importance
        // ordering; with no salience effect no attribute pair may invert
        // its order at any k where both are shown (rank values themselves
        // grow as more attributes join the comparison).
        let spec = sweep_spec_for_test(&[0.3, 1.6, 0.9, 2.4]);
        let population = sweep_population_for_test(&spec);
        let importance = importance_heatmap(&spec, &population).unwrap();
        for matrix in [&importance.amce_ranks, &importance.r2_ranks] {
            for a in 0..matrix.len() {
                for b in a + 1..matrix.len() {
                    let orders: Vec<bool> = matrix[a]
                        .iter()
                        .zip(&matrix[b])
                        .filter_map(|(ra, rb)| ra.zip(*rb).map(|(ra, rb)| ra < rb))
                        .collect();
                    assert!(
                        orders.windows(2).all(|w| w[0] == w[1]),
                        "attributes {a} and {b} invert importance across k: {:?} vs {:?}",
                        matrix[a],
                        matrix[b]
                    );
                }
            }
        }
    }

    #[test]
    fn heatmaps_cover_the_configured_grid() {
        let spec = sweep_spec_for_test(&[1.0; 4]);
        let population = sweep_population_for_test(&spec);
        let signs = sign_heatmap(&spec, &population).unwrap();
        // One row per non-baseline level of each of the 4 attributes.
        assert_eq!(signs.rows.len(), 4);
        for row in &signs.rows {
            assert_eq!(row.signs.len(), 3);
        }
        // Attributes beyond k are blank at that column.
        assert!(signs.rows[3].signs[0].is_none());
        assert!(signs.rows[3].signs[2].is_some());
        // No attribute shows both signs across k in the no-salience regime.
        for row in &signs.rows {
            let has_pos = row.signs.iter().flatten().any(|&s| s > 0);
            let has_neg = row.signs.iter().flatten().any(|&s| s < 0);
            assert!(!(has_pos && has_neg), "sign flip in the no-salience regime");
        }

        let importance = importance_heatmap(&spec, &population).unwrap();
        assert_eq!(importance.attributes.len(), 4);
        assert_eq!(importance.amce_ranks[0].len(), 3);
        assert!(importance.amce_ranks[3][0].is_none());
        assert!(importance.r2_ranks[3][2].is_some());
    }
}
