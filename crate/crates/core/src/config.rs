use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnthropometricTable, PartClass, PredecessorTable};

/// Thresholds and switches for one assembly run.
///
/// The `enable_*` flags exist for ablation; all default to on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignmentConfig {
    /// Minimum head unary for a head to seed a person cluster.
    pub head_nms_threshold: f64,
    /// Minimum unary for a leftover part to spawn a new cluster.
    pub spawn_threshold: f64,
    /// Minimum structural score for an assigned part to be kept.
    pub hallucination_threshold: f64,
    /// Proximal gate radius as a multiple of the expected part radius.
    pub radius_multiplier: f64,
    pub kmeans_iterations: usize,
    /// Clusters beyond the current person count when reducing candidates.
    pub extra_clusters: usize,
    pub rng_seed: u64,
    pub enable_proximal_gating: bool,
    pub enable_candidate_clustering: bool,
    /// Score against the predecessor subset instead of the whole partial cluster.
    pub enable_predecessor_subset: bool,
    pub enable_spawning: bool,
    pub enable_suppression: bool,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        AssignmentConfig {
            head_nms_threshold: 0.5,
            spawn_threshold: 0.35,
            hallucination_threshold: 0.6,
            radius_multiplier: 1.5,
            kmeans_iterations: 100,
            extra_clusters: 2,
            rng_seed: 0,
            enable_proximal_gating: true,
            enable_candidate_clustering: true,
            enable_predecessor_subset: true,
            enable_spawning: true,
            enable_suppression: true,
        }
    }
}

impl AssignmentConfig {
    /// Every optional stage switched off.
    pub fn baseline() -> Self {
        AssignmentConfig {
            enable_proximal_gating: false,
            enable_candidate_clustering: false,
            enable_predecessor_subset: false,
            enable_spawning: false,
            enable_suppression: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("head_nms_threshold", self.head_nms_threshold),
            ("spawn_threshold", self.spawn_threshold),
            ("hallucination_threshold", self.hallucination_threshold),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if !(self.radius_multiplier > 0.0 && self.radius_multiplier.is_finite()) {
            return Err(Error::invalid(format!(
                "radius_multiplier must be positive, got {}",
                self.radius_multiplier
            )));
        }
        if self.kmeans_iterations == 0 {
            return Err(Error::invalid("kmeans_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// The two constant tables, bundled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tables {
    pub anthropometry: AnthropometricTable,
    pub predecessors: PredecessorTable,
}

/// Contents of a JSON config document: the [`AssignmentConfig`] keys plus
/// optional table overrides (`anthropometry`, `chin_alpha`, `predecessors`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub config: AssignmentConfig,
    pub tables: Tables,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableOverrides {
    #[serde(default)]
    anthropometry: Option<BTreeMap<PartClass, f64>>,
    #[serde(default)]
    chin_alpha: Option<f64>,
    #[serde(default)]
    predecessors: Option<BTreeMap<PartClass, Vec<PartClass>>>,
}

const TABLE_KEYS: [&str; 3] = ["anthropometry", "chin_alpha", "predecessors"];

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(map) = value else {
            return Err(Error::invalid("config must be a JSON object"));
        };
        let (tables, config): (serde_json::Map<_, _>, serde_json::Map<_, _>) = map
            .into_iter()
            .partition(|(k, _)| TABLE_KEYS.contains(&k.as_str()));

        let config: AssignmentConfig = serde_json::from_value(config.into())?;
        config.validate()?;
        let overrides: TableOverrides = serde_json::from_value(tables.into())?;

        let anthropometry = match (&overrides.anthropometry, overrides.chin_alpha) {
            (None, None) => AnthropometricTable::default(),
            (a, chin) => AnthropometricTable::with_overrides(&a.clone().unwrap_or_default(), chin)?,
        };
        let predecessors = match overrides.predecessors {
            None => PredecessorTable::default(),
            Some(p) => PredecessorTable::new(p)?,
        };
        Ok(ConfigFile {
            config,
            tables: Tables {
                anthropometry,
                predecessors,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = AssignmentConfig::default();
        assert_eq!(c.head_nms_threshold, 0.5);
        assert_eq!(c.spawn_threshold, 0.35);
        assert_eq!(c.hallucination_threshold, 0.6);
        assert_eq!(c.radius_multiplier, 1.5);
        assert_eq!(c.kmeans_iterations, 100);
        assert_eq!(c.extra_clusters, 2);
        c.validate().unwrap();
    }

    #[test]
    fn parses_partial_config_with_table_override() {
        let f = ConfigFile::from_json(
            r#"{"spawn_threshold": 0.4, "rng_seed": 9,
                "anthropometry": {"Neck": 0.19},
                "predecessors": {"Neck": ["Head"], "RAnkle": ["RKnee"]}}"#,
        )
        .unwrap();
        assert_eq!(f.config.spawn_threshold, 0.4);
        assert_eq!(f.config.rng_seed, 9);
        assert_eq!(f.config.head_nms_threshold, 0.5);
        assert_eq!(f.tables.anthropometry.alpha(PartClass::Neck), 0.19);
        assert_eq!(f.tables.predecessors.get(PartClass::RAnkle), &[PartClass::RKnee]);
        assert!(f.tables.predecessors.get(PartClass::LAnkle).is_empty());
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(ConfigFile::from_json(r#"{"spawn_threshold": 1.2}"#).is_err());
        assert!(ConfigFile::from_json(r#"{"radius_multiplier": 0}"#).is_err());
        assert!(ConfigFile::from_json(r#"{"kmeans_iterations": 0}"#).is_err());
        assert!(ConfigFile::from_json(r#"{"spawn_treshold": 0.3}"#).is_err());
        assert!(ConfigFile::from_json(r#"[1]"#).is_err());
    }
}
