//! JSON interchange formats: detections in, poses out, scene ground truth.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::assignment::{AssignmentResult, PersonCluster, Suppressed};
use crate::association::{AssociationProvider, SparseAssociation};
use crate::config::AssignmentConfig;
use crate::error::{Error, Result};
use crate::model::{AnthropometricTable, Candidate, CandidateId, Detections, PartClass, Point};
use crate::synthgen::{geometric_association, ImageExtent, SceneGroundTruth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseEntry {
    pub a: CandidateId,
    pub b: CandidateId,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum AssociationSpec {
    /// Listed pairs; a missing pair scores 0 and one direction implies both.
    Sparse(Vec<SparseEntry>),
    Geometric { head_length: f64, pairwise_sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionsFile {
    pub image: ImageExtent,
    pub candidates: Vec<Candidate>,
    pub associations: AssociationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DetectionsFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Validates and splits into detections plus an association provider.
    pub fn load(&self, table: &AnthropometricTable) -> Result<(Detections, Box<dyn AssociationProvider>)> {
        if !(self.image.width >= 0.0 && self.image.height >= 0.0) {
            return Err(Error::invalid("image extent must be non-negative"));
        }
        let detections: Detections = self.candidates.iter().cloned().collect();
        detections.validate()?;
        let assoc: Box<dyn AssociationProvider> = match &self.associations {
            AssociationSpec::Sparse(entries) => {
                let known: HashSet<CandidateId> = self.candidates.iter().map(|c| c.id).collect();
                let mut sparse = SparseAssociation::new();
                for e in entries {
                    for id in [e.a, e.b] {
                        if !known.contains(&id) {
                            return Err(Error::invalid(format!("association refers to unknown candidate {id}")));
                        }
                    }
                    sparse.insert(e.a, e.b, e.p)?;
                }
                Box::new(sparse)
            }
            AssociationSpec::Geometric {
                head_length,
                pairwise_sigma,
            } => Box::new(geometric_association(*head_length, table, *pairwise_sigma)?),
        };
        Ok((detections, assoc))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartRecord {
    pub x: f64,
    pub y: f64,
    pub candidate_id: CandidateId,
    pub unary: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterRecord {
    pub id: usize,
    pub spawned: bool,
    pub anchor_class: PartClass,
    pub parts: BTreeMap<PartClass, PartRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuppressedRecord {
    pub candidate_id: CandidateId,
    pub score: f64,
    pub class: PartClass,
    pub x: f64,
    pub y: f64,
    pub unary: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosesFile {
    pub clusters: Vec<ClusterRecord>,
    pub unassigned: Vec<Candidate>,
    pub suppressed: Vec<SuppressedRecord>,
    /// The effective configuration, including the seed.
    pub config: AssignmentConfig,
}

impl PosesFile {
    pub fn new(result: &AssignmentResult, config: &AssignmentConfig) -> Self {
        PosesFile {
            clusters: result
                .clusters
                .iter()
                .map(|c| ClusterRecord {
                    id: c.id,
                    spawned: c.spawned,
                    anchor_class: c.anchor_class,
                    parts: c
                        .parts
                        .iter()
                        .map(|(&k, p)| {
                            (
                                k,
                                PartRecord {
                                    x: p.x,
                                    y: p.y,
                                    candidate_id: p.id,
                                    unary: p.unary,
                                },
                            )
                        })
                        .collect(),
                })
                .collect(),
            unassigned: result.unassigned.clone(),
            suppressed: result
                .suppressed
                .iter()
                .map(|s| SuppressedRecord {
                    candidate_id: s.candidate.id,
                    score: s.score,
                    class: s.candidate.part,
                    x: s.candidate.x,
                    y: s.candidate.y,
                    unary: s.candidate.unary,
                })
                .collect(),
            config: config.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: PosesFile = serde_json::from_str(text)?;
        f.to_result()?;
        Ok(f)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rebuilds the assignment result (without trace).
    pub fn to_result(&self) -> Result<AssignmentResult> {
        let clusters = self
            .clusters
            .iter()
            .map(|r| {
                let anchor = r.parts.get(&r.anchor_class).ok_or_else(|| {
                    Error::invalid(format!("cluster {} lacks its anchor part {}", r.id, r.anchor_class))
                })?;
                Ok(PersonCluster {
                    id: r.id,
                    spawned: r.spawned,
                    anchor: Point::new(anchor.x, anchor.y),
                    anchor_class: r.anchor_class,
                    parts: r
                        .parts
                        .iter()
                        .map(|(&k, p)| {
                            (
                                k,
                                Candidate {
                                    id: p.candidate_id,
                                    part: k,
                                    x: p.x,
                                    y: p.y,
                                    unary: p.unary,
                                },
                            )
                        })
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AssignmentResult {
            clusters,
            unassigned: self.unassigned.clone(),
            suppressed: self
                .suppressed
                .iter()
                .map(|s| Suppressed {
                    candidate: Candidate {
                        id: s.candidate_id,
                        part: s.class,
                        x: s.x,
                        y: s.y,
                        unary: s.unary,
                    },
                    score: s.score,
                })
                .collect(),
            trace: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFile {
    pub seed: u64,
    pub image: ImageExtent,
    pub persons: Vec<crate::synthgen::PersonTruth>,
}

impl GroundTruthFile {
    pub fn new(scene: &SceneGroundTruth, seed: u64) -> Self {
        GroundTruthFile {
            seed,
            image: scene.image.clone(),
            persons: scene.persons.clone(),
        }
    }

    pub fn scene(&self) -> SceneGroundTruth {
        SceneGroundTruth {
            image: self.image.clone(),
            persons: self.persons.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::assemble;
    use crate::config::Tables;
    use crate::synthgen::{generate_scene, render_detections, NoiseConfig};
    use proptest::prelude::*;

    const SINGLE: &str = r#"{
        "image": {"width": 100, "height": 100},
        "candidates": [
            {"id": 1, "class": "Head", "x": 50, "y": 10, "unary": 0.9},
            {"id": 2, "class": "Neck", "x": 50, "y": 28, "unary": 0.8}
        ],
        "associations": {"sparse": [{"a": 2, "b": 1, "p": 0.9}]}
    }"#;

    #[test]
    fn parses_sparse_file() {
        let f = DetectionsFile::from_json(SINGLE).unwrap();
        let (dets, assoc) = f.load(&AnthropometricTable::default()).unwrap();
        assert_eq!(dets.len(), 2);
        let h = &dets.class(PartClass::Head)[0];
        let n = &dets.class(PartClass::Neck)[0];
        assert_eq!(assoc.pairwise(h, n), 0.9);
        assert_eq!(assoc.pairwise(n, h), 0.9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bad_unary = SINGLE.replace("0.8", "1.3");
        let err = DetectionsFile::from_json(&bad_unary)
            .unwrap()
            .load(&AnthropometricTable::default())
            .err()
            .unwrap();
        assert!(err.to_string().contains("candidate 2"), "{err}");

        let bad_class = SINGLE.replace("\"Neck\"", "\"Nose\"");
        let err = DetectionsFile::from_json(&bad_class).err().unwrap();
        assert!(err.to_string().contains("line"), "{err}");

        let unknown_ref = SINGLE.replace("\"b\": 1", "\"b\": 7");
        assert!(DetectionsFile::from_json(&unknown_ref)
            .unwrap()
            .load(&AnthropometricTable::default())
            .is_err());

        let extra_key = SINGLE.replace("\"unary\": 0.9", "\"unary\": 0.9, \"score\": 1");
        assert!(DetectionsFile::from_json(&extra_key).is_err());
    }

    #[test]
    fn geometric_association_form() {
        let text = r#"{"image": {"width": 10, "height": 10}, "candidates": [],
            "associations": {"geometric": {"head_length": 26.0, "pairwise_sigma": 0.1}}}"#;
        let f = DetectionsFile::from_json(text).unwrap();
        assert!(f.load(&AnthropometricTable::default()).is_ok());
        let bad = text.replace("26.0", "-1");
        assert!(DetectionsFile::from_json(&bad).unwrap().load(&AnthropometricTable::default()).is_err());
    }

    proptest! {
        #[test]
        fn poses_round_trip(n in 0usize..5, seed in any::<u64>()) {
            let noise = NoiseConfig { occlusion_prob: 0.2, ..Default::default() };
            let gt = generate_scene(n, &noise, seed).unwrap();
            let dets = render_detections(&gt, &noise, seed).unwrap();
            let assoc = geometric_association(gt.nominal_head_length(&noise), &AnthropometricTable::default(), 0.1).unwrap();
            let config = AssignmentConfig { rng_seed: seed, ..Default::default() };
            let res = assemble(&dets, &assoc, &config, &Tables::default()).unwrap();
            let file = PosesFile::new(&res, &config);
            let back = PosesFile::from_json(&file.to_json().unwrap()).unwrap();
            prop_assert_eq!(&back, &file);
            prop_assert_eq!(back.to_result().unwrap(), res);
        }
    }
}
