use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PromptError;

/// Operator intent expressed as one of five canonical phrases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorPreference {
    HighServiceQuality,
    ServiceQuality,
    Neutral,
    PowerSavings,
    HighPowerSavings,
}

/// How a preference's tabulated `q` is turned into the BLF knob.
///
/// `Eq4` uses the tabulated value directly. With the loss as written its
/// minimizer is the `q/(q+1)` quantile, so large `q` biases forecasts *up*.
/// `TableConsistent` uses `1/q`, which biases power-saving preferences *down*
/// and is what produces more switch-offs for them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Eq4,
    #[default]
    TableConsistent,
}

impl OperatorPreference {
    /// All preferences, ordered from service quality to power savings.
    pub const ALL: [OperatorPreference; 5] = [
        OperatorPreference::HighServiceQuality,
        OperatorPreference::ServiceQuality,
        OperatorPreference::Neutral,
        OperatorPreference::PowerSavings,
        OperatorPreference::HighPowerSavings,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            Self::HighServiceQuality => "Focus highly on service quality",
            Self::ServiceQuality => "Focus on service quality",
            Self::Neutral => "No specific focus",
            Self::PowerSavings => "Focus on power savings",
            Self::HighPowerSavings => "Focus highly on power savings",
        }
    }

    /// Exact phrase match; anything else is an error listing valid phrases.
    pub fn from_phrase(phrase: &str) -> Result<Self, PromptError> {
        Self::ALL
            .into_iter()
            .find(|p| p.phrase() == phrase)
            .ok_or_else(|| PromptError::UnknownPreference {
                given: phrase.to_string(),
                valid: Self::ALL.iter().map(|p| p.phrase().to_string()).collect(),
            })
    }

    /// The tabulated `q` for this preference.
    pub fn tabulated_q(self) -> f64 {
        match self {
            Self::HighServiceQuality => 0.1,
            Self::ServiceQuality => 0.5,
            Self::Neutral => 1.0,
            Self::PowerSavings => 5.0,
            Self::HighPowerSavings => 10.0,
        }
    }

    pub fn q(self, orientation: Orientation) -> f64 {
        match orientation {
            Orientation::Eq4 => self.tabulated_q(),
            Orientation::TableConsistent => 1.0 / self.tabulated_q(),
        }
    }
}

/// Free-function form of [`OperatorPreference::q`].
pub fn q_for_preference(pref: OperatorPreference, orientation: Orientation) -> f64 {
    pref.q(orientation)
}

impl fmt::Display for OperatorPreference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

impl FromStr for OperatorPreference {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_phrase(s)
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Eq4 => "eq4",
            Orientation::TableConsistent => "table_consistent",
        })
    }
}

impl FromStr for Orientation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eq4" => Ok(Orientation::Eq4),
            "table_consistent" => Ok(Orientation::TableConsistent),
            other => Err(format!(
                "unknown orientation {other:?} (expected eq4 or table_consistent)"
            )),
        }
    }
}
