//! Device profile files: memory hierarchy, deployment strategy, clock
//! configurations, performance entries and the energy budget.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, schema_error, Error};
use crate::perfmodel::{BatteryEstimate, EnergyBudget, Engine, PerfError, PerfProfile};
use crate::planner::{DeploymentStrategy, MemoryHierarchy, Precision};

/// One voltage/frequency operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Configuration {
    pub name: String,
    pub voltage_v: f64,
    pub cluster_mhz: f64,
    pub fc_mhz: f64,
    /// The operating point the perf entries were measured at.
    #[serde(default)]
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub name: String,
    pub hierarchy: MemoryHierarchy,
    pub strategy: DeploymentStrategy,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub configurations: Vec<Configuration>,
    #[serde(default)]
    pub perf: Vec<PerfProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<EnergyBudget>,
    /// Published figures kept for comparison in reports, e.g.
    /// `battery_days_radio`, `battery_days_no_radio`, `battery_wh`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reference: BTreeMap<String, f64>,
}

impl DeviceProfile {
    pub fn check(&self) -> Result<(), String> {
        self.strategy.check()?;
        for p in &self.perf {
            p.check().map_err(|e| e.to_string())?;
        }
        if let Some(b) = &self.power {
            b.check().map_err(|e| e.to_string())?;
        }
        if self.configurations.iter().filter(|c| c.selected).count() > 1 {
            return Err("at most one configuration may be selected".into());
        }
        Ok(())
    }

    pub fn perf_for(&self, engine: Engine, precision: Precision) -> Result<&PerfProfile, PerfError> {
        self.perf.iter().find(|p| p.engine == engine && p.precision == precision).ok_or(PerfError::NoProfile { engine, precision })
    }

    /// Default engine for a precision: the first matching perf entry.
    pub fn default_engine(&self, precision: Precision) -> Option<Engine> {
        self.perf.iter().find(|p| p.precision == precision).map(|p| p.engine)
    }

    pub fn selected_configuration(&self) -> Option<&Configuration> {
        self.configurations.iter().find(|c| c.selected)
    }
}

/// How a derived figure compares with a published one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceStatus {
    Consistent,
    /// Within one day of the reference; only the integer rounding differs.
    OffByRounding,
    /// No rounding convention reconciles the two.
    NonDerivable,
    /// A stated constant disagrees with the value the model uses.
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub key: String,
    pub reference: f64,
    pub derived: f64,
    pub status: ReferenceStatus,
}

impl DeviceProfile {
    /// Compares a battery estimate with the profile's `reference` figures:
    /// the day count for the matching radio setting and `battery_wh` (1%
    /// tolerance).
    pub fn reference_checks(&self, battery: &BatteryEstimate, radio_enabled: bool) -> Vec<ReferenceCheck> {
        let mut out = Vec::new();
        let key = if radio_enabled { "battery_days_radio" } else { "battery_days_no_radio" };
        if let Some(&reference) = self.reference.get(key) {
            let status = if battery.days as f64 == reference {
                ReferenceStatus::Consistent
            } else if (battery.exact_days - reference).abs() <= 1.0 {
                ReferenceStatus::OffByRounding
            } else {
                ReferenceStatus::NonDerivable
            };
            out.push(ReferenceCheck { key: key.into(), reference, derived: battery.days as f64, status });
        }
        if let Some(&reference) = self.reference.get("battery_wh") {
            let derived = battery.capacity_j / 3600.0;
            let status =
                if (derived / reference - 1.0).abs() <= 0.01 { ReferenceStatus::Consistent } else { ReferenceStatus::Inconsistent };
            out.push(ReferenceCheck { key: "battery_wh".into(), reference, derived, status });
        }
        out
    }
}

pub fn parse_profile(text: &str) -> Result<DeviceProfile, String> {
    let p: DeviceProfile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    p.check()?;
    Ok(p)
}

pub fn read_profile(path: impl AsRef<Path>) -> Result<DeviceProfile, Error> {
    let path = path.as_ref();
    parse_profile(&read_file(path)?).map_err(|e| schema_error(path, e))
}

pub fn profile_to_json(profile: &DeviceProfile) -> String {
    let mut s = serde_json::to_string_pretty(profile).expect("profile serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "toy",
        "hierarchy": {"l1": 16, "l2": 64, "flash": 0, "ram": 0, "offchip_flash": 0},
        "strategy": {"kind": "tiled", "double_buffer": true}
    }"#;

    #[test]
    fn minimal_profile_parses() {
        let p = parse_profile(MINIMAL).unwrap();
        assert!(p.strategy.double_buffer);
        assert!(p.perf.is_empty());
        assert_eq!(p.perf_for(Engine::Cpu, Precision::I8), Err(PerfError::NoProfile { engine: Engine::Cpu, precision: Precision::I8 }));
    }

    #[test]
    fn tiled_overhead_is_rejected() {
        let text = MINIMAL.replace(r#""double_buffer": true"#, r#""double_buffer": true, "resident_overhead_bytes": 5"#);
        assert!(parse_profile(&text).unwrap_err().contains("resident_overhead_bytes"));
    }

    fn battery(days: u64, exact_days: f64) -> BatteryEstimate {
        BatteryEstimate { days, exact_days, capacity_j: 13_320.0, daily_j: 13_320.0 / exact_days }
    }

    #[test]
    fn reference_statuses() {
        let mut p = parse_profile(MINIMAL).unwrap();
        p.reference.insert("battery_days_radio".into(), 51.0);
        p.reference.insert("battery_days_no_radio".into(), 58.0);
        p.reference.insert("battery_wh".into(), 7.4);
        let radio = p.reference_checks(&battery(52, 51.5), true);
        assert_eq!(radio[0].status, ReferenceStatus::OffByRounding);
        assert_eq!(radio[1].status, ReferenceStatus::Inconsistent);
        assert_eq!(p.reference_checks(&battery(52, 52.08), false)[0].status, ReferenceStatus::NonDerivable);
        p.reference.insert("battery_days_radio".into(), 52.0);
        p.reference.insert("battery_wh".into(), 3.7);
        let ok = p.reference_checks(&battery(52, 51.5), true);
        assert!(ok.iter().all(|c| c.status == ReferenceStatus::Consistent));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = MINIMAL.replace(r#""l1": 16"#, r#""l1": 16, "l3": 1"#);
        assert!(parse_profile(&text).unwrap_err().contains("l3"));
    }
}
