use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::triplet::{ActionTriplet, NUM_INSTRUMENTS, NUM_TARGETS, NUM_VERBS};
use crate::error::{Error, Result};

const INSTRUMENTS: [&str; NUM_INSTRUMENTS] =
    ["grasper", "bipolar", "hook", "scissors", "clipper", "irrigator"];

const VERBS: [&str; NUM_VERBS] = [
    "grasp",
    "retract",
    "dissect",
    "coagulate",
    "clip",
    "cut",
    "aspirate",
    "irrigate",
    "pack",
    "null_verb",
];

const TARGETS: [&str; NUM_TARGETS] = [
    "gallbladder",
    "cystic_plate",
    "cystic_duct",
    "cystic_artery",
    "cystic_pedicle",
    "blood_vessel",
    "fluid",
    "abdominal_wall_cavity",
    "liver",
    "adhesion",
    "omentum",
    "peritoneum",
    "gut",
    "specimen_bag",
    "null_target",
];

/// Id-to-word tables used to render a triplet as a three-word caption.
///
/// On disk this is a JSON object with `instruments`, `verbs` and `targets`
/// maps from decimal id strings to words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub instruments: BTreeMap<u32, String>,
    pub verbs: BTreeMap<u32, String>,
    pub targets: BTreeMap<u32, String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        let table = |words: &[&str]| {
            words
                .iter()
                .enumerate()
                .map(|(i, w)| (i as u32, w.to_string()))
                .collect()
        };
        Self {
            instruments: table(&INSTRUMENTS),
            verbs: table(&VERBS),
            targets: table(&TARGETS),
        }
    }
}

fn lookup<'a>(table: &'a BTreeMap<u32, String>, id: i32, what: &str) -> Result<&'a str> {
    u32::try_from(id)
        .ok()
        .and_then(|id| table.get(&id))
        .map(String::as_str)
        .ok_or_else(|| Error::Lexicon(format!("{what} id {id}")))
}

impl Lexicon {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// `[instrument, verb, target]` words.
    pub fn caption(&self, t: &ActionTriplet) -> Result<[&str; 3]> {
        Ok([
            lookup(&self.instruments, t.instrument, "instrument")?,
            lookup(&self.verbs, t.verb, "verb")?,
            lookup(&self.targets, t.target, "target")?,
        ])
    }

    /// Sorted, de-duplicated word list; a word's position is its token id.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut words: Vec<String> = self
            .instruments
            .values()
            .chain(self.verbs.values())
            .chain(self.targets.values())
            .cloned()
            .collect();
        words.sort();
        words.dedup();
        words
    }

    /// Errors unless every id of the dataset schema has a word.
    pub fn check_complete(&self) -> Result<()> {
        for i in 0..NUM_INSTRUMENTS as i32 {
            for v in 0..NUM_VERBS as i32 {
                self.caption(&ActionTriplet::new(i, v, 0))?;
            }
        }
        for t in 0..NUM_TARGETS as i32 {
            self.caption(&ActionTriplet::new(0, 0, t))?;
        }
        Ok(())
    }
}
