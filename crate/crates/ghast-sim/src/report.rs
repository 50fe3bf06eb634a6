//! Oracle assertion report, written as JSON:
//!
//! ```json
//! {"events_checked": 1234, "violation_count": 0, "side_condition_skips": 3,
//!  "potential_checks": 1200, "global_potential_checks": 1100, "violations": []}
//! ```
//!
//! Each violation is `{"event_index": 17, "invariant_name": "..."}`.

use ghast_core::oracle::OracleReport;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationEntry {
    pub event_index: u64,
    pub invariant_name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ReportFile {
    pub enabled: bool,
    pub events_checked: u64,
    pub violation_count: u64,
    pub side_condition_skips: u64,
    pub potential_checks: u64,
    pub global_potential_checks: u64,
    pub violations: Vec<ViolationEntry>,
}

impl ReportFile {
    pub fn disabled() -> ReportFile {
        ReportFile::default()
    }

    pub fn from_report(r: &OracleReport) -> ReportFile {
        ReportFile {
            enabled: true,
            events_checked: r.events_checked,
            violation_count: r.violation_count,
            side_condition_skips: r.side_condition_skips,
            potential_checks: r.potential_checks,
            global_potential_checks: r.global_potential_checks,
            violations: r
                .violations
                .iter()
                .map(|v| ViolationEntry { event_index: v.event_index, invariant_name: v.invariant_name.to_string() })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serialises") + "\n"
    }

    pub fn from_json(text: &str) -> Result<ReportFile, serde_json::Error> {
        serde_json::from_str(text)
    }
}
