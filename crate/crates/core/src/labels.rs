//! Label vocabularies shared across the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::SafeError;

/// Image-level diagnosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ImageLabel {
    #[serde(rename = "NoDR")]
    NoDr,
    #[serde(rename = "DR")]
    Dr,
}

/// A decided patch class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    Healthy,
    Unhealthy,
}

impl Class {
    /// Binary target used by the classification arm: Unhealthy is the positive class.
    pub fn as_target(self) -> f64 {
        match self {
            Class::Healthy => 0.0,
            Class::Unhealthy => 1.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Class {
        match self {
            Class::Healthy => Class::Unhealthy,
            Class::Unhealthy => Class::Healthy,
        }
    }

    pub const ALL: [Class; 2] = [Class::Healthy, Class::Unhealthy];
}

/// Preliminary label derived from image label and lesion overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrelimLabel {
    Healthy,
    Unhealthy,
    Unlabeled,
}

impl PrelimLabel {
    pub fn class(self) -> Option<Class> {
        match self {
            PrelimLabel::Healthy => Some(Class::Healthy),
            PrelimLabel::Unhealthy => Some(Class::Unhealthy),
            PrelimLabel::Unlabeled => None,
        }
    }
}

impl From<Class> for PrelimLabel {
    fn from(c: Class) -> Self {
        match c {
            Class::Healthy => PrelimLabel::Healthy,
            Class::Unhealthy => PrelimLabel::Unhealthy,
        }
    }
}

/// Outcome of the ensemble annotator, which may abstain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Annotation {
    Healthy,
    Unhealthy,
    Undecided,
}

impl Annotation {
    pub fn class(self) -> Option<Class> {
        match self {
            Annotation::Healthy => Some(Class::Healthy),
            Annotation::Unhealthy => Some(Class::Unhealthy),
            Annotation::Undecided => None,
        }
    }

    pub fn is_decided(self) -> bool {
        self != Annotation::Undecided
    }
}

impl From<Class> for Annotation {
    fn from(c: Class) -> Self {
        match c {
            Class::Healthy => Annotation::Healthy,
            Class::Unhealthy => Annotation::Unhealthy,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::Healthy => "Healthy",
            Class::Unhealthy => "Unhealthy",
        })
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Annotation::Healthy => "Healthy",
            Annotation::Unhealthy => "Unhealthy",
            Annotation::Undecided => "Undecided",
        })
    }
}

impl FromStr for ImageLabel {
    type Err = SafeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "NoDR" => Ok(ImageLabel::NoDr),
            "DR" => Ok(ImageLabel::Dr),
            other => Err(SafeError::InvalidArgument(format!(
                "unknown image label {other:?} (expected NoDR or DR)"
            ))),
        }
    }
}
