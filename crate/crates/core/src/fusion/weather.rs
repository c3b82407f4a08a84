use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::prior::{PromptSpec, PromptTemplate, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherCondition {
    #[default]
    ClearDay,
    Rain,
    Night,
    Fog,
    #[serde(other)]
    Other,
}

impl WeatherCondition {
    pub const ALL: [WeatherCondition; 5] = [Self::ClearDay, Self::Rain, Self::Night, Self::Fog, Self::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ClearDay => "clear_day",
            Self::Rain => "rain",
            Self::Night => "night",
            Self::Fog => "fog",
            Self::Other => "other",
        }
    }

    fn phrase(self) -> &'static str {
        match self {
            Self::ClearDay => "on a clear day",
            Self::Rain => "in heavy rain",
            Self::Night => "at night in low light",
            Self::Fog => "in dense fog",
            Self::Other => "in unspecified conditions",
        }
    }
}

impl fmt::Display for WeatherCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Unknown names fall back to [`WeatherCondition::Other`].
impl FromStr for WeatherCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "clear_day" | "clear" | "day" => Self::ClearDay,
            "rain" | "rainy" => Self::Rain,
            "night" => Self::Night,
            "fog" | "foggy" => Self::Fog,
            _ => Self::Other,
        })
    }
}

/// Where a context record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherSource {
    #[default]
    GroundTruthLabel,
    Telemetry,
}

/// Environmental metadata standing in for vehicle telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct WeatherContext {
    pub condition: WeatherCondition,
    pub region: Region,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub source: WeatherSource,
}

impl WeatherContext {
    pub fn new(condition: WeatherCondition, region: Region) -> Self {
        Self { condition, region, timestamp: 0, source: WeatherSource::GroundTruthLabel }
    }
}

pub fn weather_prompt(ctx: &WeatherContext) -> PromptSpec {
    PromptSpec::new(
        vec!["camera".into(), "lidar".into()],
        ctx.region,
        PromptTemplate::Weather,
        vec![ctx.condition.phrase().into()],
    )
    .expect("weather prompts always carry names and a slot")
}
