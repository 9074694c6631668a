//! Attribute space: named attributes with ordered, coded levels.
//!
//! Level order is stable and defines grid adjacency for constrained
//! sampling designs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One realizable value of an attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub label: String,
    /// Base evaluation of the attribute at this level, before per-DM offsets.
    #[serde(rename = "utility")]
    pub utility_code: f64,
    /// Numeric stand-in for the level, read by the contrast function in
    /// raw-level mode (e.g. the age value itself).
    #[serde(rename = "salience", default)]
    pub salience_code: f64,
}

impl Level {
    pub fn new(label: impl Into<String>, utility_code: f64, salience_code: f64) -> Self {
        Level {
            label: label.into(),
            utility_code,
            salience_code,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub levels: Vec<Level>,
}

impl Attribute {
    pub fn new(name: impl Into<String>, levels: Vec<Level>) -> Self {
        Attribute {
            name: name.into(),
            levels,
        }
    }
}

/// Ordered attribute space over which profiles are defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::design("schema must define at least one attribute"));
        }
        for (i, attr) in attributes.iter().enumerate() {
            if attr.name.is_empty() {
                return Err(Error::design(format!("attribute {i} has an empty name")));
            }
            if attributes[..i].iter().any(|a| a.name == attr.name) {
                return Err(Error::design(format!(
                    "duplicate attribute name '{}'",
                    attr.name
                )));
            }
            if attr.levels.len() < 2 {
                return Err(Error::design(format!(
                    "attribute '{}' needs at least 2 levels, got {}",
                    attr.name,
                    attr.levels.len()
                )));
            }
            for (j, level) in attr.levels.iter().enumerate() {
                if !level.utility_code.is_finite() || !level.salience_code.is_finite() {
                    return Err(Error::design(format!(
                        "attribute '{}' level '{}' has a non-finite code",
                        attr.name, level.label
                    )));
                }
                if attr.levels[..j].iter().any(|l| l.label == level.label) {
                    return Err(Error::design(format!(
                        "attribute '{}' has duplicate level label '{}'",
                        attr.name, level.label
                    )));
                }
            }
        }
        Ok(AttributeSchema { attributes })
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, index: usize) -> &Attribute {
        &self.attributes[index]
    }

    pub fn level(&self, attribute: usize, level: usize) -> Result<&Level> {
        let attr = self
            .attributes
            .get(attribute)
            .ok_or_else(|| Error::invalid(format!("attribute index {attribute} out of range")))?;
        attr.levels.get(level).ok_or_else(|| {
            Error::invalid(format!(
                "level index {level} out of range for attribute '{}'",
                attr.name
            ))
        })
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Grid-adjacent level indices of `level` (its immediate neighbours,
    /// excluding the level itself).
    pub fn adjacent_levels(&self, attribute: usize, level: usize) -> Vec<usize> {
        let n = self.attributes[attribute].levels.len();
        let mut out = Vec::with_capacity(2);
        if level > 0 {
            out.push(level - 1);
        }
        if level + 1 < n {
            out.push(level + 1);
        }
        out
    }

    /// (min, max) of `utility_code` over every level of every attribute.
    pub fn utility_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for attr in &self.attributes {
            for level in &attr.levels {
                lo = lo.min(level.utility_code);
                hi = hi.max(level.utility_code);
            }
        }
        (lo, hi)
    }
}

impl TryFrom<Vec<Attribute>> for AttributeSchema {
    type Error = Error;

    fn try_from(attributes: Vec<Attribute>) -> Result<Self> {
        AttributeSchema::new(attributes)
    }
}

impl From<AttributeSchema> for Vec<Attribute> {
    fn from(schema: AttributeSchema) -> Self {
        schema.attributes
    }
}
