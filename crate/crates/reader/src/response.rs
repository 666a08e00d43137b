use std::collections::BTreeMap;

use recondet_core::Compartment;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Condition;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("compartment calls incomplete; missing {}", missing.join(", "))]
pub struct Incomplete {
    pub missing: Vec<String>,
}

/// Pathologic (`true`) or not for each of the six compartments, every one
/// stated explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Compartment, bool>", into = "BTreeMap<Compartment, bool>")]
pub struct CompartmentCalls([bool; 6]);

impl CompartmentCalls {
    pub fn new(calls: [bool; 6]) -> Self {
        Self(calls)
    }

    pub fn get(&self, c: Compartment) -> bool {
        self.0[Compartment::ALL.iter().position(|&x| x == c).expect("listed")]
    }

    /// Calls in [`Compartment::ALL`] order.
    pub fn as_array(&self) -> [bool; 6] {
        self.0
    }
}

impl TryFrom<BTreeMap<Compartment, bool>> for CompartmentCalls {
    type Error = Incomplete;

    fn try_from(map: BTreeMap<Compartment, bool>) -> Result<Self, Incomplete> {
        let missing: Vec<String> = Compartment::ALL
            .iter()
            .filter(|c| !map.contains_key(c))
            .map(|c| c.key().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Incomplete { missing });
        }
        Ok(Self(Compartment::ALL.map(|c| map[&c])))
    }
}

impl From<CompartmentCalls> for BTreeMap<Compartment, bool> {
    fn from(c: CompartmentCalls) -> Self {
        Compartment::ALL.iter().copied().zip(c.0).collect()
    }
}

/// What a client posts; the service stamps the time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseSubmission {
    pub reader_id: String,
    pub case_id: String,
    pub condition: Condition,
    pub compartments: BTreeMap<Compartment, bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderResponse {
    pub reader_id: String,
    pub case_id: String,
    pub condition: Condition,
    pub compartments: CompartmentCalls,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl ReaderResponse {
    pub fn from_submission(s: ResponseSubmission, timestamp: u64) -> Result<Self, Incomplete> {
        Ok(Self {
            compartments: CompartmentCalls::try_from(s.compartments)?,
            reader_id: s.reader_id,
            case_id: s.case_id,
            condition: s.condition,
            timestamp,
        })
    }

    pub fn key(&self) -> (String, String, Condition) {
        (self.reader_id.clone(), self.case_id.clone(), self.condition)
    }
}
