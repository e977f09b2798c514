//! Accuracy against synthetic ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::PersonCluster;
use crate::error::{Error, Result};
use crate::model::PartClass;
use crate::synthgen::SceneGroundTruth;

/// A predicted cluster matches a person only if its anchor lies within this
/// many of the person's head lengths of the corresponding joint.
pub const MATCH_RADIUS_HEADS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PersonMatching {
    /// (cluster index, person index) pairs.
    pub pairs: Vec<(usize, usize)>,
    pub missed: Vec<usize>,
    pub false_clusters: Vec<usize>,
}

/// Greedy one-to-one matching by ascending anchor distance.
///
/// A cluster's anchor is compared with the person's joint of the same class
/// (the head for head-seeded clusters). Ties are broken by cluster id, then
/// person id, so the result does not depend on input order.
pub fn match_persons(clusters: &[PersonCluster], gt: &SceneGroundTruth) -> PersonMatching {
    let mut cand = Vec::new();
    for (ci, cl) in clusters.iter().enumerate() {
        for (pi, person) in gt.persons.iter().enumerate() {
            let Some(joint) = person.joints.get(&cl.anchor_class) else {
                continue;
            };
            let d = cl.anchor.distance(*joint);
            if d <= MATCH_RADIUS_HEADS * person.head_length() {
                cand.push((d, cl.id, person.id, ci, pi));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut cluster_used = vec![false; clusters.len()];
    let mut person_used = vec![false; gt.persons.len()];
    let mut pairs = Vec::new();
    for (_, _, _, ci, pi) in cand {
        if cluster_used[ci] || person_used[pi] {
            continue;
        }
        cluster_used[ci] = true;
        person_used[pi] = true;
        pairs.push((ci, pi));
    }
    pairs.sort_by_key(|&(ci, _)| clusters[ci].id);
    PersonMatching {
        pairs,
        missed: (0..gt.persons.len()).filter(|&i| !person_used[i]).collect(),
        false_clusters: (0..clusters.len()).filter(|&i| !cluster_used[i]).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PckhReport {
    pub tau: f64,
    /// Correct fraction per class, for classes with at least one visible joint.
    pub per_class_correct_fraction: BTreeMap<PartClass, f64>,
    /// Mean of the per-class fractions.
    pub mean: f64,
    pub matched_persons: usize,
    pub missed_persons: usize,
    pub false_persons: usize,
    pub per_class_correct: BTreeMap<PartClass, usize>,
    pub per_class_visible: BTreeMap<PartClass, usize>,
    /// All parts in all predicted clusters.
    pub predicted_parts: usize,
    /// Correct parts over predicted parts.
    pub precision: f64,
    /// Correct parts over visible ground-truth joints.
    pub recall: f64,
}

impl PckhReport {
    fn from_counts(
        tau: f64,
        correct: BTreeMap<PartClass, usize>,
        visible: BTreeMap<PartClass, usize>,
        predicted_parts: usize,
        persons: (usize, usize, usize),
    ) -> Self {
        let per_class_correct_fraction: BTreeMap<PartClass, f64> = visible
            .iter()
            .filter(|(_, &v)| v > 0)
            .map(|(&c, &v)| (c, correct.get(&c).copied().unwrap_or(0) as f64 / v as f64))
            .collect();
        let mean = if per_class_correct_fraction.is_empty() {
            1.0
        } else {
            per_class_correct_fraction.values().sum::<f64>() / per_class_correct_fraction.len() as f64
        };
        let total_correct: usize = correct.values().sum();
        let total_visible: usize = visible.values().sum();
        PckhReport {
            tau,
            per_class_correct_fraction,
            mean,
            matched_persons: persons.0,
            missed_persons: persons.1,
            false_persons: persons.2,
            precision: if predicted_parts == 0 {
                1.0
            } else {
                total_correct as f64 / predicted_parts as f64
            },
            recall: if total_visible == 0 {
                1.0
            } else {
                total_correct as f64 / total_visible as f64
            },
            per_class_correct: correct,
            per_class_visible: visible,
            predicted_parts,
        }
    }

    /// Pools the counts of several reports (same `tau`).
    pub fn combine<'a>(reports: impl IntoIterator<Item = &'a PckhReport>) -> Option<PckhReport> {
        let mut it = reports.into_iter().peekable();
        let tau = it.peek()?.tau;
        let mut correct = BTreeMap::new();
        let mut visible = BTreeMap::new();
        let (mut predicted, mut m, mut mi, mut f) = (0, 0, 0, 0);
        for r in it {
            for (&c, &n) in &r.per_class_correct {
                *correct.entry(c).or_insert(0) += n;
            }
            for (&c, &n) in &r.per_class_visible {
                *visible.entry(c).or_insert(0) += n;
            }
            predicted += r.predicted_parts;
            m += r.matched_persons;
            mi += r.missed_persons;
            f += r.false_persons;
        }
        Some(Self::from_counts(tau, correct, visible, predicted, (m, mi, f)))
    }
}

/// Percentage of correct keypoints relative to head length.
///
/// A visible joint counts as correct when the matched cluster holds a part of
/// that class within `tau` head lengths of it. Occluded joints are excluded.
pub fn pckh(clusters: &[PersonCluster], gt: &SceneGroundTruth, tau: f64) -> Result<PckhReport> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    let matching = match_persons(clusters, gt);
    let mut visible: BTreeMap<PartClass, usize> = BTreeMap::new();
    let mut correct: BTreeMap<PartClass, usize> = BTreeMap::new();
    for person in &gt.persons {
        for &part in person.joints.keys() {
            if person.is_visible(part) {
                *visible.entry(part).or_insert(0) += 1;
            }
        }
    }
    for &(ci, pi) in &matching.pairs {
        let person = &gt.persons[pi];
        let limit = tau * person.head_length();
        for (&part, cand) in &clusters[ci].parts {
            if !person.is_visible(part) {
                continue;
            }
            if cand.position().distance(person.joints[&part]) <= limit {
                *correct.entry(part).or_insert(0) += 1;
            }
        }
    }
    let predicted = clusters.iter().map(PersonCluster::len).sum();
    Ok(PckhReport::from_counts(
        tau,
        correct,
        visible,
        predicted,
        (matching.pairs.len(), matching.missed.len(), matching.false_clusters.len()),
    ))
}
