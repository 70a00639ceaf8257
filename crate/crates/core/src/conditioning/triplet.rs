use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_INSTRUMENTS: usize = 6;
pub const NUM_VERBS: usize = 10;
pub const NUM_TARGETS: usize = 15;
pub const NUM_PHASES: usize = 7;

/// Sentinel for an annotation element that is missing or undefined.
pub const UNDEFINED: i32 = -1;

/// Verb id meaning "instrument present, no action performed".
pub const NULL_VERB: i32 = 9;

/// An (instrument, verb, target) label. Ordering is lexicographic in that
/// field order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 3]", into = "[i32; 3]")]
pub struct ActionTriplet {
    pub instrument: i32,
    pub verb: i32,
    pub target: i32,
}

impl ActionTriplet {
    pub const fn new(instrument: i32, verb: i32, target: i32) -> Self {
        Self {
            instrument,
            verb,
            target,
        }
    }

    pub fn as_array(&self) -> [i32; 3] {
        [self.instrument, self.verb, self.target]
    }

    /// False when any element carries the undefined sentinel (or is negative).
    pub fn is_defined(&self) -> bool {
        self.instrument >= 0 && self.verb >= 0 && self.target >= 0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0..NUM_INSTRUMENTS as i32).contains(&self.instrument)
            && (0..NUM_VERBS as i32).contains(&self.verb)
            && (0..NUM_TARGETS as i32).contains(&self.target);
        if ok {
            Ok(())
        } else {
            Err(Error::Triplet(
                self.as_array(),
                format!(
                    "ids must lie in [0,{NUM_INSTRUMENTS})x[0,{NUM_VERBS})x[0,{NUM_TARGETS})"
                ),
            ))
        }
    }
}

impl From<[i32; 3]> for ActionTriplet {
    fn from(a: [i32; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<ActionTriplet> for [i32; 3] {
    fn from(t: ActionTriplet) -> Self {
        t.as_array()
    }
}

impl fmt::Display for ActionTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.instrument, self.verb, self.target)
    }
}

impl FromStr for ActionTriplet {
    type Err = Error;

    /// Parses `"instrument,verb,target"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::Config(format!("expected three comma-separated ids, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut ids = [0i32; 3];
        for (slot, p) in ids.iter_mut().zip(parts) {
            *slot = p.parse().map_err(|_| bad())?;
        }
        Ok(ids.into())
    }
}
