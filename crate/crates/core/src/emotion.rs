use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of emotion classes handled by the pipeline.
pub const NUM_CLASSES: usize = 4;

/// The four target emotions, in canonical (alphabetical) index order.
///
/// Every posterior vector in the crate is laid out in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionClass {
    Angry,
    Calm,
    Happy,
    Sad,
}

impl EmotionClass {
    pub const ALL: [EmotionClass; NUM_CLASSES] = [
        EmotionClass::Angry,
        EmotionClass::Calm,
        EmotionClass::Happy,
        EmotionClass::Sad,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionClass::Angry => "angry",
            EmotionClass::Calm => "calm",
            EmotionClass::Happy => "happy",
            EmotionClass::Sad => "sad",
        }
    }

    /// Maps a two-digit RAVDESS emotion code. Codes outside the subset map to `None`.
    pub fn from_ravdess_code(code: u8) -> Option<Self> {
        match code {
            2 => Some(EmotionClass::Calm),
            3 => Some(EmotionClass::Happy),
            4 => Some(EmotionClass::Sad),
            5 => Some(EmotionClass::Angry),
            _ => None,
        }
    }

    pub fn ravdess_code(self) -> u8 {
        match self {
            EmotionClass::Calm => 2,
            EmotionClass::Happy => 3,
            EmotionClass::Sad => 4,
            EmotionClass::Angry => 5,
        }
    }

    /// Canonical class-name list, as stored in checkpoints.
    pub fn canonical_names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

impl fmt::Display for EmotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EmotionClass::Angry => "Angry",
            EmotionClass::Calm => "Calm",
            EmotionClass::Happy => "Happy",
            EmotionClass::Sad => "Sad",
        };
        f.write_str(s)
    }
}

impl FromStr for EmotionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "angry" => Ok(EmotionClass::Angry),
            "calm" => Ok(EmotionClass::Calm),
            "happy" => Ok(EmotionClass::Happy),
            "sad" => Ok(EmotionClass::Sad),
            other => Err(Error::Argument(format!("unknown emotion `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_mapping_is_a_bijection() {
        for (i, c) in EmotionClass::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(EmotionClass::from_index(i), Some(*c));
            assert_eq!(c.name().parse::<EmotionClass>().unwrap(), *c);
            assert_eq!(EmotionClass::from_ravdess_code(c.ravdess_code()), Some(*c));
        }
        assert_eq!(EmotionClass::from_index(4), None);
    }

    #[test]
    fn out_of_subset_codes_are_rejected() {
        for code in [1, 6, 7, 8] {
            assert_eq!(EmotionClass::from_ravdess_code(code), None);
        }
    }
}
