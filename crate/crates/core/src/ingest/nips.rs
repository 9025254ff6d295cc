//! NIPS (Neonatal Infant Pain Scale) scoring.
//!
//! Face, body and vital signs are each scored 0 or 1, crying 0 to 2. The
//! total (0..=5) maps to no pain (0-2), moderate (3-4) or severe (5).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest possible NIPS total.
pub const MAX_TOTAL: u8 = 5;
/// Lowest total that counts as pain for binary training targets.
pub const PAIN_THRESHOLD: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NipsAssessment {
    pub face: u8,
    pub body: u8,
    pub vital: u8,
    pub cry: u8,
    pub rater_id: String,
}

impl NipsAssessment {
    pub fn new(face: u8, body: u8, vital: u8, cry: u8, rater_id: impl Into<String>) -> Result<Self> {
        let a = NipsAssessment {
            face,
            body,
            vital,
            cry,
            rater_id: rater_id.into(),
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value, max) in [
            ("face", self.face, 1),
            ("body", self.body, 1),
            ("vital", self.vital, 1),
            ("cry", self.cry, 2),
        ] {
            if value > max {
                return Err(Error::ScoreOutOfRange {
                    field,
                    value: value as i64,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NipsCategory {
    NoPain,
    Moderate,
    Severe,
}

impl NipsCategory {
    pub fn from_total(total: u8) -> Result<Self> {
        match total {
            0..=2 => Ok(NipsCategory::NoPain),
            3..=4 => Ok(NipsCategory::Moderate),
            5 => Ok(NipsCategory::Severe),
            _ => Err(Error::ScoreOutOfRange {
                field: "total",
                value: total as i64,
            }),
        }
    }
}

/// Sums the four indicator scores and categorizes the total.
pub fn score_nips(a: &NipsAssessment) -> Result<(u8, NipsCategory)> {
    a.validate()?;
    let total = a.face + a.body + a.vital + a.cry;
    Ok((total, NipsCategory::from_total(total)?))
}

/// Binary class used for training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PainClass {
    NoPain,
    Pain,
}

impl PainClass {
    pub fn is_pain(self) -> bool {
        self == PainClass::Pain
    }

    /// `Pain` strictly above 0.5; a tie is `NoPain`.
    pub fn from_confidence(confidence: f64) -> Self {
        if confidence > 0.5 {
            PainClass::Pain
        } else {
            PainClass::NoPain
        }
    }

    pub fn as_target(self) -> f64 {
        match self {
            PainClass::NoPain => 0.0,
            PainClass::Pain => 1.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PainClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PainClass::NoPain => "no_pain",
            PainClass::Pain => "pain",
        })
    }
}

impl FromStr for PainClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_pain" | "0" => Ok(PainClass::NoPain),
            "pain" | "1" => Ok(PainClass::Pain),
            other => Err(Error::BadConfig(format!("unknown pain label {other:?}"))),
        }
    }
}

/// A binary label together with the NIPS total it was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PainLabel {
    pub value: PainClass,
    pub source_total: u8,
}

/// Collapses moderate and severe into `Pain`.
pub fn to_binary_label(total: u8) -> Result<PainLabel> {
    if total > MAX_TOTAL {
        return Err(Error::ScoreOutOfRange {
            field: "total",
            value: total as i64,
        });
    }
    let value = if total >= PAIN_THRESHOLD {
        PainClass::Pain
    } else {
        PainClass::NoPain
    };
    Ok(PainLabel {
        value,
        source_total: total,
    })
}

/// Consensus over several raters: the mean total rounded half up.
pub fn consensus_label(assessments: &[NipsAssessment]) -> Result<PainLabel> {
    if assessments.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0u32;
    for a in assessments {
        sum += score_nips(a)?.0 as u32;
    }
    let n = assessments.len() as u32;
    let total = (2 * sum + n) / (2 * n);
    to_binary_label(total as u8)
}
