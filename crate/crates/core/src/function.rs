//! Vehicle functions under test and the test cases that exercise them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{Channel, ChannelMask};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown {kind} `{value}`")]
pub struct UnknownId {
    kind: &'static str,
    value: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FunctionId {
    F1,
    F2,
    F3,
    F4,
}

impl FunctionId {
    pub const ALL: [FunctionId; 4] = [FunctionId::F1, FunctionId::F2, FunctionId::F3, FunctionId::F4];

    pub fn name(self) -> &'static str {
        match self {
            FunctionId::F1 => "F1",
            FunctionId::F2 => "F2",
            FunctionId::F3 => "F3",
            FunctionId::F4 => "F4",
        }
    }

    pub fn mask(self) -> ChannelMask {
        let allowed = match self {
            FunctionId::F1 => Channel::Brake,
            FunctionId::F2 | FunctionId::F4 => Channel::SwitchLane,
            FunctionId::F3 => Channel::TargetSpeed,
        };
        ChannelMask::new([allowed]).expect("single-channel mask")
    }

    /// Test cases a candidate for this function is run against, in order.
    pub fn test_cases(self) -> &'static [TcId] {
        use TcId::*;
        match self {
            FunctionId::F1 => &[S1],
            FunctionId::F2 => &[S2],
            FunctionId::F3 => &[Tc1, Tc2, Tc3, Tc6, Tc7],
            FunctionId::F4 => &[Tc1, Tc2, Tc3, Tc4, Tc5, Tc6, Tc7],
        }
    }

    /// Test cases in which the function is expected to act.
    pub fn action_cases(self) -> &'static [TcId] {
        use TcId::*;
        match self {
            FunctionId::F1 => &[S1],
            FunctionId::F2 => &[S2],
            FunctionId::F3 => &[Tc1, Tc2, Tc3],
            FunctionId::F4 => &[Tc1, Tc2, Tc3, Tc4, Tc5],
        }
    }

    /// Collision avoidance is only demanded from the longitudinal and
    /// evasive functions.
    pub fn requires_collision_avoidance(self) -> bool {
        matches!(self, FunctionId::F3 | FunctionId::F4)
    }

    /// Description appended to the generation prompt.
    pub fn description(self) -> &'static str {
        match self {
            FunctionId::F1 => {
                "Function F1: whenever the ego vehicle's speed is above 10 m/s, the controller must request braking."
            }
            FunctionId::F2 => {
                "Function F2: whenever another vehicle occupies the ego vehicle's lane, the controller must move the \
                 ego vehicle one lane to the right."
            }
            FunctionId::F3 => {
                "Function F3 (adaptive cruise control): the controller must adjust the ego vehicle's speed to the \
                 vehicle ahead of it so that no collision occurs."
            }
            FunctionId::F4 => {
                "Function F4 (collision avoidance by evasive manoeuvre): when a collision with the vehicle ahead is \
                 imminent, the controller must change lanes to avoid it. Evading to the left is preferred."
            }
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionId {
    type Err = UnknownId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FunctionId::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownId {
                kind: "function",
                value: s.to_owned(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TcId {
    #[serde(rename = "TC1")]
    Tc1,
    #[serde(rename = "TC2")]
    Tc2,
    #[serde(rename = "TC3")]
    Tc3,
    #[serde(rename = "TC4")]
    Tc4,
    #[serde(rename = "TC5")]
    Tc5,
    #[serde(rename = "TC6")]
    Tc6,
    #[serde(rename = "TC7")]
    Tc7,
    S1,
    S2,
}

impl TcId {
    pub const ALL: [TcId; 9] = [
        TcId::Tc1,
        TcId::Tc2,
        TcId::Tc3,
        TcId::Tc4,
        TcId::Tc5,
        TcId::Tc6,
        TcId::Tc7,
        TcId::S1,
        TcId::S2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TcId::Tc1 => "TC1",
            TcId::Tc2 => "TC2",
            TcId::Tc3 => "TC3",
            TcId::Tc4 => "TC4",
            TcId::Tc5 => "TC5",
            TcId::Tc6 => "TC6",
            TcId::Tc7 => "TC7",
            TcId::S1 => "S1",
            TcId::S2 => "S2",
        }
    }

    /// Cut-in cases, where all-zero control ends in a collision.
    pub fn has_cut_in(self) -> bool {
        matches!(self, TcId::Tc1 | TcId::Tc2 | TcId::Tc3 | TcId::Tc4 | TcId::Tc5)
    }
}

impl fmt::Display for TcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TcId {
    type Err = UnknownId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TcId::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownId {
                kind: "test case",
                value: s.to_owned(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_roundtrip() {
        for f in FunctionId::ALL {
            assert_eq!(f.name().parse::<FunctionId>().unwrap(), f);
        }
        for t in TcId::ALL {
            assert_eq!(t.name().parse::<TcId>().unwrap(), t);
        }
        assert!("F9".parse::<FunctionId>().is_err());
        assert_eq!("tc4".parse::<TcId>().unwrap(), TcId::Tc4);
    }

    #[test]
    fn masks() {
        assert!(FunctionId::F1.mask().permits(Channel::Brake));
        assert!(!FunctionId::F1.mask().permits(Channel::TargetSpeed));
        assert!(FunctionId::F4.mask().permits(Channel::SwitchLane));
        assert_eq!(FunctionId::F3.test_cases().len(), 5);
        assert_eq!(FunctionId::F4.test_cases().len(), 7);
    }
}
