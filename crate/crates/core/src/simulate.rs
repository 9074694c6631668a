//! Choice simulation: evaluating rounds, materializing two-world potential
//! outcomes, and running whole studies into long-format datasets.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{generate_round, DesignSpec, Round};
use crate::error::{Error, Result};
use crate::fmt::sig12;
use crate::population::Population;
use crate::rng::substream;
use crate::salience::{
    evaluate_profile, round_reference, DecisionMaker, EvaluationTrace, SalienceContext,
};

/// Outcome of one round for one decision maker.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceOutcome {
    /// 1 for the chosen profile, 0 elsewhere; ties break toward the lower
    /// profile index.
    pub choices: Vec<u8>,
    /// Evaluations mapped onto the 1..10 scale.
    pub ratings: Vec<f64>,
    pub traces: Vec<EvaluationTrace>,
}

/// Evaluate every profile of a round against the round's shared reference
/// and pick the highest-valued one.
///
/// The round width (number of realized attributes) selects the arm: pass a
/// `restricted` round to simulate the experiment's narrower consideration
/// set. The decision maker's weights are renormalized to that width.
pub fn simulate_choice(
    dm: &DecisionMaker,
    spec: &DesignSpec,
    round: &Round,
) -> Result<ChoiceOutcome> {
    let width = round.width();
    if width == 0 || round.profiles.iter().any(|p| p.len() != width) {
        return Err(Error::invalid("round profiles must share a positive width"));
    }
    if width > spec.schema.len() {
        return Err(Error::invalid(format!(
            "round width {width} exceeds schema size {}",
            spec.schema.len()
        )));
    }
    let rdm = dm.restricted(width)?;
    let reference = round_reference(&spec.schema, &round.profiles, &rdm, spec.salience_mode)?;
    let ctx = SalienceContext {
        mode: spec.salience_mode,
        reference,
        epsilon: spec.epsilon,
    };
    let traces = round
        .profiles
        .iter()
        .map(|p| evaluate_profile(&rdm, &spec.schema, p, &ctx))
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0usize;
    for (j, trace) in traces.iter().enumerate() {
        if trace.value > traces[best].value {
            best = j;
        }
    }
    let choices = (0..traces.len()).map(|j| u8::from(j == best)).collect();
    let (v_lo, v_hi) = value_bounds(spec, dm);
    let ratings = traces
        .iter()
        .map(|t| rating_of(t.value, v_lo, v_hi))
        .collect();
    Ok(ChoiceOutcome {
        choices,
        ratings,
        traces,
    })
}

/// Affine map of an evaluation onto the 1..10 rating scale, clamped at the
/// ends. Bounds come from the schema's utility range, so per-DM offsets can
/// only saturate the scale, never leave it.
fn rating_of(value: f64, v_lo: f64, v_hi: f64) -> f64 {
    if v_hi <= v_lo {
        return 5.5;
    }
    (1.0 + 9.0 * (value - v_lo) / (v_hi - v_lo)).clamp(1.0, 10.0)
}

fn value_bounds(spec: &DesignSpec, dm: &DecisionMaker) -> (f64, f64) {
    let (lo, hi) = spec.schema.utility_bounds();
    (lo + dm.utility_shift(), hi + dm.utility_shift())
}

/// Both hypothetical worlds of a single treatment contrast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialOutcomePair {
    pub world1: Vec<EvaluationTrace>,
    pub world2: Vec<EvaluationTrace>,
    /// Evaluation advantage of profile 1 over its best competitor, world 1.
    pub v_diff_1: f64,
    pub v_diff_2: f64,
    pub y1: u8,
    pub y2: u8,
}

impl PotentialOutcomePair {
    /// Individual treatment effect on the evaluation scale.
    pub fn ite_value(&self) -> f64 {
        self.v_diff_1 - self.v_diff_2
    }

    /// Individual treatment effect on the forced-choice scale.
    pub fn ite_choice(&self) -> f64 {
        f64::from(self.y1) - f64::from(self.y2)
    }

    /// True when any profile's salience ranking differs between the worlds.
    pub fn rank_change(&self) -> bool {
        self.world1
            .iter()
            .zip(&self.world2)
            .any(|(a, b)| a.ranks != b.ranks)
    }
}

/// Evaluate the two hypothetical worlds that differ only in profile 1's
/// `target_attr` level (`level_a` in world 1, `level_b` in world 2).
///
/// The salience context is recomputed per world; with
/// `freeze_control_salience` the non-treated profiles keep their world-1
/// evaluation instead.
pub fn potential_outcomes(
    dm: &DecisionMaker,
    round: &Round,
    spec: &DesignSpec,
    target_attr: usize,
    level_a: usize,
    level_b: usize,
) -> Result<PotentialOutcomePair> {
    let width = round.width();
    if target_attr >= width {
        return Err(Error::invalid(format!(
            "target attribute {target_attr} outside the round's {width} attributes"
        )));
    }
    if level_a == level_b {
        return Err(Error::invalid("contrast levels must be distinct"));
    }
    spec.schema.level(target_attr, level_a)?;
    spec.schema.level(target_attr, level_b)?;
    let rdm = dm.restricted(width)?;

    let mut world1_profiles = round.profiles.clone();
    world1_profiles[0][target_attr] = level_a;
    let world1 = evaluate_world(&rdm, spec, &world1_profiles)?;

    let mut world2_profiles = round.profiles.clone();
    world2_profiles[0][target_attr] = level_b;
    let world2 = if spec.freeze_control_salience {
        let reference = round_reference(&spec.schema, &world2_profiles, &rdm, spec.salience_mode)?;
        let ctx = SalienceContext {
            mode: spec.salience_mode,
            reference,
            epsilon: spec.epsilon,
        };
        let mut traces = world1.clone();
        traces[0] = evaluate_profile(&rdm, &spec.schema, &world2_profiles[0], &ctx)?;
        traces
    } else {
        evaluate_world(&rdm, spec, &world2_profiles)?
    };

    let v_diff_1 = profile_advantage(&world1);
    let v_diff_2 = profile_advantage(&world2);
    Ok(PotentialOutcomePair {
        y1: u8::from(v_diff_1 >= 0.0),
        y2: u8::from(v_diff_2 >= 0.0),
        world1,
        world2,
        v_diff_1,
        v_diff_2,
    })
}

fn evaluate_world(
    rdm: &DecisionMaker,
    spec: &DesignSpec,
    profiles: &[Vec<usize>],
) -> Result<Vec<EvaluationTrace>> {
    let reference = round_reference(&spec.schema, profiles, rdm, spec.salience_mode)?;
    let ctx = SalienceContext {
        mode: spec.salience_mode,
        reference,
        epsilon: spec.epsilon,
    };
    profiles
        .iter()
        .map(|p| evaluate_profile(rdm, &spec.schema, p, &ctx))
        .collect()
}

/// V(profile 1) minus the best competing evaluation; for a single-profile
/// round this is V(profile 1) itself.
fn profile_advantage(traces: &[EvaluationTrace]) -> f64 {
    let rest = traces[1..]
        .iter()
        .map(|t| t.value)
        .fold(f64::NEG_INFINITY, f64::max);
    if rest.is_finite() {
        traces[0].value - rest
    } else {
        traces[0].value
    }
}

/// One dataset row: a profile shown in a round, its realized levels, and
/// the respondent's response.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRow {
    pub respondent: u32,
    pub round: u32,
    pub profile: u32,
    pub levels: Vec<u16>,
    pub choice: u8,
    pub rating: f64,
}

/// Long-format study output, ordered by (respondent, round, profile).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseDataset {
    pub attr_names: Vec<String>,
    pub level_counts: Vec<usize>,
    pub rows: Vec<ResponseRow>,
}

impl ResponseDataset {
    pub fn num_attributes(&self) -> usize {
        self.attr_names.len()
    }

    /// Distinct respondent ids in order of first appearance.
    pub fn respondents(&self) -> Vec<u32> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for row in &self.rows {
            if seen.insert(row.respondent) {
                out.push(row.respondent);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        let mut header = vec!["respondent".to_string(), "round".into(), "profile".into()];
        header.extend(self.attr_names.iter().cloned());
        header.push("choice".into());
        header.push("rating".into());
        writeln!(writer, "{}", header.join(","))?;
        for row in &self.rows {
            let mut fields = vec![
                row.respondent.to_string(),
                row.round.to_string(),
                row.profile.to_string(),
            ];
            fields.extend(row.levels.iter().map(|l| l.to_string()));
            fields.push(row.choice.to_string());
            fields.push(sig12(row.rating));
            writeln!(writer, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<ResponseDataset> {
        let mut csv_reader = csv::Reader::from_reader(reader);
        let headers = csv_reader.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 5
            || cols[..3] != ["respondent", "round", "profile"]
            || cols[cols.len() - 2..] != ["choice", "rating"]
        {
            return Err(Error::Estimation(
                "dataset header must be respondent,round,profile,<attributes...>,choice,rating"
                    .into(),
            ));
        }
        let attr_names: Vec<String> = cols[3..cols.len() - 2]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let num_attrs = attr_names.len();
        let mut rows = Vec::new();
        let mut level_counts = vec![0usize; num_attrs];
        for record in csv_reader.records() {
            let record = record?;
            let parse_err = |field: &str| Error::Estimation(format!("bad field '{field}'"));
            let mut levels = Vec::with_capacity(num_attrs);
            for i in 0..num_attrs {
                let level: u16 = record[3 + i]
                    .parse()
                    .map_err(|_| parse_err(&record[3 + i]))?;
                level_counts[i] = level_counts[i].max(level as usize + 1);
                levels.push(level);
            }
            rows.push(ResponseRow {
                respondent: record[0].parse().map_err(|_| parse_err(&record[0]))?,
                round: record[1].parse().map_err(|_| parse_err(&record[1]))?,
                profile: record[2].parse().map_err(|_| parse_err(&record[2]))?,
                levels,
                choice: record[3 + num_attrs]
                    .parse()
                    .map_err(|_| parse_err(&record[3 + num_attrs]))?,
                rating: record[4 + num_attrs]
                    .parse()
                    .map_err(|_| parse_err(&record[4 + num_attrs]))?,
            });
        }
        Ok(ResponseDataset {
            attr_names,
            level_counts,
            rows,
        })
    }

    pub fn read_csv_path(path: &Path) -> Result<ResponseDataset> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Simulate every respondent of a population through `spec.num_rounds`
/// rounds. Rounds realize all `real_m` attributes; respondents see and the
/// dataset records only the first `consideration_k`.
///
/// Each respondent draws from an independent RNG stream keyed by
/// `study_seed`, so the dataset is identical for any worker count.
pub fn simulate_study(
    population: &Population,
    spec: &DesignSpec,
    study_seed: u64,
) -> Result<ResponseDataset> {
    spec.validate()?;
    if population.is_empty() {
        return Err(Error::invalid("population must be non-empty"));
    }
    let k = spec.consideration_k;
    let per_respondent: Vec<Vec<ResponseRow>> = population
        .members
        .par_iter()
        .enumerate()
        .map(|(i, dm)| -> Result<Vec<ResponseRow>> {
            let mut rng = substream(study_seed, i as u64);
            let mut rows = Vec::with_capacity(spec.num_rounds * spec.num_profiles);
            for r in 0..spec.num_rounds {
                let round = generate_round(spec, &mut rng, r as u32, i as u32);
                let shown = round.restricted(k);
                let outcome = simulate_choice(dm, spec, &shown)?;
                for (j, profile) in shown.profiles.iter().enumerate() {
                    rows.push(ResponseRow {
                        respondent: i as u32,
                        round: r as u32,
                        profile: j as u32,
                        levels: profile.iter().map(|&l| l as u16).collect(),
                        choice: outcome.choices[j],
                        rating: outcome.ratings[j],
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let rows = per_respondent.into_iter().flatten().collect();
    Ok(ResponseDataset {
        attr_names: spec.schema.attributes()[..k]
            .iter()
            .map(|a| a.name.clone())
            .collect(),
        level_counts: spec.schema.attributes()[..k]
            .iter()
            .map(|a| a.levels.len())
            .collect(),
        rows,
    })
}

/// Treatment-minus-control evaluation difference of an unbalanced design
/// (the control arm never sees the treatment attribute), together with the
/// attention-induced bias term.
///
/// Respondents evaluate a single profile per arm, so there is no contrast
/// and the weights are exactly the renormalized base weights. The returned
/// pair is `(effect, bias)` with
/// `effect = w_tr[0] * v_0 + bias` and `bias = sum_j (w_tr[j] - w_ctl[j]) * v_j`
/// over the shared attributes `j >= 1`.
pub fn unbalanced_bias(dm: &DecisionMaker, round: &Round, spec: &DesignSpec) -> Result<(f64, f64)> {
    if !spec.unbalanced {
        return Err(Error::design(
            "unbalanced_bias requires a design with the unbalanced flag set",
        ));
    }
    let k = spec.consideration_k;
    if k < 2 {
        return Err(Error::Degenerate(
            "unbalanced designs need k >= 2 so the control arm keeps an attribute".into(),
        ));
    }
    if round.width() < k {
        return Err(Error::invalid(
            "round is narrower than the consideration set",
        ));
    }
    let profile = &round.profiles[0][..k];
    let values: Vec<f64> = profile
        .iter()
        .enumerate()
        .map(|(j, &level)| dm.value(&spec.schema, j, level))
        .collect::<Result<_>>()?;

    let treat_weights = crate::salience::restrict_weights(dm.base_weights(), k)?;
    let shared = &dm.base_weights()[1..k];
    let shared_total: f64 = shared.iter().sum();
    if shared_total <= 0.0 {
        return Err(Error::Degenerate(
            "control arm has zero attention mass".into(),
        ));
    }
    let control_weights: Vec<f64> = shared.iter().map(|w| w / shared_total).collect();

    let v_treat: f64 = treat_weights.iter().zip(&values).map(|(w, v)| w * v).sum();
    let v_control: f64 = control_weights
        .iter()
        .zip(&values[1..])
        .map(|(w, v)| w * v)
        .sum();
    let bias: f64 = (1..k)
        .map(|j| (treat_weights[j] - control_weights[j - 1]) * values[j])
        .sum();
    Ok((v_treat - v_control, bias))
}
