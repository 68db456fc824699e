//! Common output record of every estimate and search.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub quantity: String,
    pub value: f64,
    /// Input reproducing `value` when re-evaluated.
    pub witness: Value,
    pub params: Value,
    pub seed: u64,
    pub budget: Value,
}

impl EstimateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports contain only finite numbers and strings")
    }
}
