//! Shared fixtures for the engine benchmarks.

use conjoint_core::{
    Attribute, AttributeSchema, DecisionMaker, DeltaSpec, DesignSpec, Level, Population,
    PopulationSpec, SamplingMode,
};

/// Schema with `width` attributes of `levels` graded levels each.
pub fn graded_schema(width: usize, levels: usize) -> AttributeSchema {
    AttributeSchema::new(
        (0..width)
            .map(|a| {
                Attribute::new(
                    format!("a{a}"),
                    (0..levels)
                        .map(|l| {
                            let utility =
                                0.2 + l as f64 * 0.8 / (levels - 1) as f64 + 0.05 * a as f64;
                            Level::new(format!("l{l}"), utility, l as f64)
                        })
                        .collect(),
                )
            })
            .collect(),
    )
    .expect("valid schema")
}

pub fn design(width: usize, levels: usize, rounds: usize) -> DesignSpec {
    DesignSpec::new(
        graded_schema(width, levels),
        2,
        rounds,
        SamplingMode::UniformIid,
        width,
        width,
    )
    .expect("valid design")
}

pub fn salient_dm(width: usize, delta: f64) -> DecisionMaker {
    let raw: Vec<f64> = (1..=width).map(|i| i as f64).collect();
    let total: f64 = raw.iter().sum();
    DecisionMaker::new(
        raw.into_iter().map(|w| w / total).collect(),
        delta,
        1.0,
        None,
    )
    .expect("valid dm")
}

pub fn population(schema: &AttributeSchema, size: usize) -> Population {
    Population::generate(
        schema,
        &PopulationSpec {
            size,
            dirichlet_kappa: Some(2.0),
            delta: DeltaSpec::Uniform {
                low: 0.3,
                high: 1.0,
            },
            utility_offset_width: 0.2,
            utility_shift: 1.5,
            seed: 42,
        },
    )
    .expect("valid population")
}
