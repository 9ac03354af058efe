use core::fmt;

use serde::{Deserialize, Serialize};

/// A learned health state, numbered `1..=H`.
///
/// Matrices and vectors indexed by state are 0-based; use [`StateId::index`]
/// and [`StateId::from_index`] to cross between the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct StateId(u32);

impl StateId {
    /// Builds a state id from its 1-based number. Returns `None` for 0.
    pub fn new(id: u32) -> Option<Self> {
        (id > 0).then_some(Self(id))
    }

    pub fn from_index(index: usize) -> Self {
        Self(index as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl TryFrom<u32> for StateId {
    type Error = &'static str;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        Self::new(value).ok_or("state ids start at 1")
    }
}

impl From<StateId> for u32 {
    fn from(value: StateId) -> Self {
        value.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
