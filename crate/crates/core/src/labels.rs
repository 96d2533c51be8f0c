//! Discrete answer vocabularies shared by question generation, perception and
//! the agents.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Compass directions. Declaration order is the tie-break precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CompassLabel {
    North,
    East,
    South,
    West,
    Northeast,
    Southeast,
    Southwest,
    Northwest,
}

impl CompassLabel {
    pub const CARDINAL: [CompassLabel; 4] = [Self::North, Self::East, Self::South, Self::West];
    pub const ALL: [CompassLabel; 8] = [
        Self::North,
        Self::East,
        Self::South,
        Self::West,
        Self::Northeast,
        Self::Southeast,
        Self::Southwest,
        Self::Northwest,
    ];

    /// Clockwise angle from north in degrees, seen from above.
    pub fn bearing(self) -> f64 {
        match self {
            Self::North => 0.0,
            Self::Northeast => 45.0,
            Self::East => 90.0,
            Self::Southeast => 135.0,
            Self::South => 180.0,
            Self::Southwest => 225.0,
            Self::West => 270.0,
            Self::Northwest => 315.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::North => "North",
            Self::East => "East",
            Self::South => "South",
            Self::West => "West",
            Self::Northeast => "Northeast",
            Self::Southeast => "Southeast",
            Self::Southwest => "Southwest",
            Self::Northwest => "Northwest",
        }
    }

    /// Case-insensitive; accepts "north-east" and "north east" spellings too.
    pub fn parse(text: &str) -> Option<Self> {
        let norm: String = text.chars().filter(|c| c.is_ascii_alphabetic()).collect::<String>().to_ascii_lowercase();
        Self::ALL.into_iter().find(|l| l.name().to_ascii_lowercase() == norm)
    }
}

impl fmt::Display for CompassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Position of something relative to an observer's facing direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EgoLabel {
    Front,
    Right,
    Behind,
    Left,
}

impl EgoLabel {
    pub const ALL: [EgoLabel; 4] = [Self::Front, Self::Right, Self::Behind, Self::Left];

    pub fn phrase(self) -> &'static str {
        match self {
            Self::Front => "in front",
            Self::Right => "to the right",
            Self::Behind => "behind",
            Self::Left => "to the left",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        let t = text.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|l| l.phrase() == t)
    }

    /// Sector for a signed angle in degrees (positive to the right of facing).
    pub fn from_angle(deg: f64) -> Self {
        let a = deg.abs();
        if a < 45.0 {
            Self::Front
        } else if a > 135.0 {
            Self::Behind
        } else if deg > 0.0 {
            Self::Right
        } else {
            Self::Left
        }
    }
}

impl fmt::Display for EgoLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}
