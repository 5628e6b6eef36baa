use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
    Unspecified,
}

impl Gender {
    /// Lenient token parse used by the script reader. Unknown tokens yield `None`.
    pub fn from_token(token: &str) -> Option<Gender> {
        match token.trim().to_ascii_lowercase().as_str() {
            "male" | "m" | "man" => Some(Gender::Male),
            "female" | "f" | "woman" => Some(Gender::Female),
            "unspecified" | "unknown" | "other" => Some(Gender::Unspecified),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unspecified => "unspecified",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeOfDay {
    Noon,
    Night,
    SunriseSunset,
    Unspecified,
}

impl TimeOfDay {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeOfDay::Noon => "noon",
            TimeOfDay::Night => "night",
            TimeOfDay::SunriseSunset => "sunrise_sunset",
            TimeOfDay::Unspecified => "unspecified",
        }
    }

    pub fn from_token(token: &str) -> Option<TimeOfDay> {
        match token {
            "noon" => Some(TimeOfDay::Noon),
            "night" => Some(TimeOfDay::Night),
            "sunrise_sunset" => Some(TimeOfDay::SunriseSunset),
            "unspecified" => Some(TimeOfDay::Unspecified),
            _ => None,
        }
    }

    /// Plain words used when the value takes part in text similarity.
    pub fn describe(self) -> &'static str {
        match self {
            TimeOfDay::Noon => "noon",
            TimeOfDay::Night => "night",
            TimeOfDay::SunriseSunset => "sunrise sunset",
            TimeOfDay::Unspecified => "",
        }
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
