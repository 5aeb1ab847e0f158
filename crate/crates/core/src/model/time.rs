//! Simulated time: integer ticks of one second and duration literals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated time in ticks. One tick is one second.
pub type Ticks = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    S,
    Min,
    H,
    D,
    W,
    /// Month, fixed at 30 days.
    M,
    /// Year, fixed at 365 days.
    Y,
}

impl TimeUnit {
    pub const ALL: [TimeUnit; 7] = [
        TimeUnit::S,
        TimeUnit::Min,
        TimeUnit::H,
        TimeUnit::D,
        TimeUnit::W,
        TimeUnit::M,
        TimeUnit::Y,
    ];

    pub fn ticks(self) -> Ticks {
        match self {
            TimeUnit::S => 1,
            TimeUnit::Min => 60,
            TimeUnit::H => 3_600,
            TimeUnit::D => 86_400,
            TimeUnit::W => 604_800,
            TimeUnit::M => 2_592_000,
            TimeUnit::Y => 31_536_000,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            TimeUnit::S => "s",
            TimeUnit::Min => "min",
            TimeUnit::H => "h",
            TimeUnit::D => "d",
            TimeUnit::W => "w",
            TimeUnit::M => "m",
            TimeUnit::Y => "y",
        }
    }

    pub fn from_suffix(s: &str) -> Option<TimeUnit> {
        TimeUnit::ALL.into_iter().find(|u| u.suffix() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("arithmetic overflow in tick computation")]
pub struct Overflow;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid duration `{0}` (expected an integer followed by one of s, min, h, d, w, m, y)")]
pub struct InvalidDuration(pub String);

/// A duration literal such as `1m` or `30min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Duration {
    pub amount: u64,
    pub unit: TimeUnit,
}

impl Duration {
    pub fn new(amount: u64, unit: TimeUnit) -> Self {
        Duration { amount, unit }
    }

    pub fn to_ticks(self) -> Result<Ticks, Overflow> {
        let amount = Ticks::try_from(self.amount).map_err(|_| Overflow)?;
        amount.checked_mul(self.unit.ticks()).ok_or(Overflow)
    }
}

/// Converts a duration literal to ticks.
pub fn duration_to_ticks(d: Duration) -> Result<Ticks, Overflow> {
    d.to_ticks()
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.amount, self.unit.suffix())
    }
}

impl FromStr for Duration {
    type Err = InvalidDuration;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let split = s
            .find(|c: char| !c.is_ascii_digit())
            .ok_or_else(|| InvalidDuration(s.to_string()))?;
        let (digits, suffix) = s.split_at(split);
        if digits.is_empty() {
            return Err(InvalidDuration(s.to_string()));
        }
        let amount = digits.parse().map_err(|_| InvalidDuration(s.to_string()))?;
        let unit = TimeUnit::from_suffix(suffix).ok_or_else(|| InvalidDuration(s.to_string()))?;
        Ok(Duration { amount, unit })
    }
}
