//! Greedy sequential part assignment.
//!
//! Heads seed person clusters. Every other class is then processed in chain
//! order: its candidates are reduced by k-means, each surviving part is scored
//! against the (proximal) partial clusters, and (part, cluster) pairs are
//! committed greedily by descending affinity under a one-part-per-class
//! constraint. Leftover parts with enough confidence spawn new clusters, and
//! freshly assigned parts with a low structural score are suppressed before
//! the next class is processed.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::association::AssociationProvider;
use crate::clustering::reduce_candidates;
use crate::config::{AssignmentConfig, Tables};
use crate::error::{Error, Result};
use crate::model::{
    expected_radius, AnthropometricTable, Candidate, CandidateId, Detections, PartClass, Point,
    PredecessorTable,
};

/// One (partial) person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonCluster {
    /// 1-based cluster id, in creation order.
    pub id: usize,
    pub parts: BTreeMap<PartClass, Candidate>,
    /// Created from an orphan part rather than a head.
    pub spawned: bool,
    /// Reference position for proximity: the head, or the spawning part.
    pub anchor: Point,
    pub anchor_class: PartClass,
}

impl PersonCluster {
    pub fn from_head(id: usize, head: Candidate) -> Self {
        Self::with_anchor(id, head, false)
    }

    pub fn spawned_from(id: usize, part: Candidate) -> Self {
        Self::with_anchor(id, part, true)
    }

    fn with_anchor(id: usize, part: Candidate, spawned: bool) -> Self {
        let anchor = part.position();
        let anchor_class = part.part;
        let mut parts = BTreeMap::new();
        parts.insert(part.part, part);
        PersonCluster {
            id,
            parts,
            spawned,
            anchor,
            anchor_class,
        }
    }

    pub fn get(&self, part: PartClass) -> Option<&Candidate> {
        self.parts.get(&part)
    }

    pub fn contains(&self, part: PartClass) -> bool {
        self.parts.contains_key(&part)
    }

    /// Adds a part; the cluster must not already hold one of its class.
    pub fn insert(&mut self, part: Candidate) -> Result<()> {
        if self.contains(part.part) {
            return Err(Error::invalid(format!(
                "cluster {} already has a {}",
                self.id, part.part
            )));
        }
        self.parts.insert(part.part, part);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// True for the head seed or the spawning part; these are never suppressed.
    pub fn is_anchor(&self, part: &Candidate) -> bool {
        part.part == self.anchor_class
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suppressed {
    pub candidate: Candidate,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commit {
    pub part: CandidateId,
    pub cluster: usize,
    pub affinity: f64,
    /// The cluster was outside the proximal gate and chosen as nearest.
    pub gate_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityEntry {
    pub part: CandidateId,
    pub cluster: usize,
    pub affinity: f64,
}

/// Diagnostics for one class.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTrace {
    pub class: Option<PartClass>,
    pub candidates: usize,
    /// Ids of the reduced set that entered assignment.
    pub reduced: Vec<CandidateId>,
    /// Number of proximal clusters per reduced part.
    pub gated: Vec<(CandidateId, usize)>,
    pub affinities: Vec<AffinityEntry>,
    pub commits: Vec<Commit>,
    pub spawned: Vec<usize>,
    pub suppressed: Vec<CandidateId>,
    pub clusters_after: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub seeds: Vec<CandidateId>,
    /// Estimated head length; `None` when gating could not be used.
    pub head_length: Option<f64>,
    pub stages: Vec<StageTrace>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AssignmentResult {
    pub clusters: Vec<PersonCluster>,
    pub unassigned: Vec<Candidate>,
    pub suppressed: Vec<Suppressed>,
    pub trace: Option<Trace>,
}

/// Predecessor table in effect for `config`.
pub fn effective_predecessors<'a>(tables: &'a Tables, config: &AssignmentConfig) -> &'a PredecessorTable {
    static FULL: OnceLock<PredecessorTable> = OnceLock::new();
    if config.enable_predecessor_subset {
        &tables.predecessors
    } else {
        FULL.get_or_init(PredecessorTable::full_chain)
    }
}

/// One cluster per head whose unary reaches the seed threshold.
pub fn seed_clusters(head_cands: &[Candidate], config: &AssignmentConfig) -> Vec<PersonCluster> {
    head_cands
        .iter()
        .filter(|c| c.unary >= config.head_nms_threshold)
        .enumerate()
        .map(|(i, c)| PersonCluster::from_head(i + 1, c.clone()))
        .collect()
}

/// Mean pairwise probability between `part` and the cluster's assigned
/// predecessors of its class; falls back to the part's unary when the
/// cluster holds none of them.
pub(crate) fn affinity_unchecked(
    part: &Candidate,
    cluster: &PersonCluster,
    preds: &[PartClass],
    assoc: &dyn AssociationProvider,
) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in preds {
        if let Some(q) = cluster.get(*p) {
            sum += assoc.pairwise(part, q);
            n += 1;
        }
    }
    if n == 0 {
        part.unary
    } else {
        sum / n as f64
    }
}

pub fn cluster_affinity(
    part: &Candidate,
    cluster: &PersonCluster,
    preds: &PredecessorTable,
    assoc: &dyn AssociationProvider,
) -> Result<f64> {
    if cluster.contains(part.part) {
        return Err(Error::invalid(format!(
            "cluster {} already holds a {}",
            cluster.id, part.part
        )));
    }
    Ok(affinity_unchecked(part, cluster, preds.get(part.part), assoc))
}

/// Head length (top to chin) in pixels, from the mean head-neck distance.
pub fn estimate_head_length(clusters: &[PersonCluster], table: &AnthropometricTable) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for c in clusters {
        if let (Some(h), Some(k)) = (c.get(PartClass::Head), c.get(PartClass::Neck)) {
            total += h.position().distance(k.position());
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::HeadLengthUnavailable);
    }
    let y = table.chin_alpha() / table.alpha(PartClass::Neck) * (total / n as f64);
    if y > 0.0 {
        Ok(y)
    } else {
        Err(Error::HeadLengthUnavailable)
    }
}

/// Indices of clusters within the gate, plus whether the nearest-cluster
/// fallback was used.
fn proximal_indices(
    part: &Candidate,
    clusters: &[PersonCluster],
    y_px: Option<f64>,
    table: &AnthropometricTable,
    config: &AssignmentConfig,
) -> Result<(Vec<usize>, bool)> {
    let all = || (0..clusters.len()).collect::<Vec<_>>();
    let y = match y_px {
        Some(y) if config.enable_proximal_gating && part.part >= PartClass::RShoulder => y,
        _ => return Ok((all(), false)),
    };
    let gate = config.radius_multiplier * expected_radius(part.part, y, table)?;
    let pos = part.position();
    let inside: Vec<usize> = clusters
        .iter()
        .enumerate()
        .filter(|(_, c)| c.anchor.distance(pos) <= gate)
        .map(|(i, _)| i)
        .collect();
    if !inside.is_empty() || clusters.is_empty() {
        return Ok((inside, false));
    }
    let nearest = clusters
        .iter()
        .enumerate()
        .min_by(|a, b| {
            a.1.anchor
                .distance(pos)
                .total_cmp(&b.1.anchor.distance(pos))
                .then(a.1.id.cmp(&b.1.id))
        })
        .map(|(i, _)| i)
        .unwrap();
    Ok((vec![nearest], true))
}

/// Clusters whose anchor lies within `radius_multiplier * R` of `part`.
///
/// Gating applies from the shoulders on; earlier classes, or a disabled
/// gate, get every cluster. An empty gate falls back to the single nearest
/// cluster.
pub fn proximal_clusters<'a>(
    part: &Candidate,
    clusters: &'a [PersonCluster],
    y_px: f64,
    table: &AnthropometricTable,
    config: &AssignmentConfig,
) -> Result<Vec<&'a PersonCluster>> {
    let (idx, _) = proximal_indices(part, clusters, Some(y_px), table, config)?;
    Ok(idx.into_iter().map(|i| &clusters[i]).collect())
}

/// Outcome of assigning one class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageAssignment {
    pub commits: Vec<Commit>,
    pub leftover: Vec<Candidate>,
    pub gated: Vec<(CandidateId, usize)>,
    pub affinities: Vec<AffinityEntry>,
}

/// Assigns one class's parts to clusters, greedily by descending affinity.
///
/// Ties go to the higher part unary, then the lower cluster id. A pair is
/// committed only while both the part and the cluster's slot for this class
/// are free.
pub fn assign_part_class(
    parts: &[Candidate],
    clusters: &mut [PersonCluster],
    y_px: Option<f64>,
    assoc: &dyn AssociationProvider,
    tables: &Tables,
    config: &AssignmentConfig,
) -> Result<StageAssignment> {
    let Some(first) = parts.first() else {
        return Ok(StageAssignment::default());
    };
    let class = first.part;
    if let Some(other) = parts.iter().find(|c| c.part != class) {
        return Err(Error::invalid(format!(
            "candidate {} is {} but the stage is {}",
            other.id, other.part, class
        )));
    }
    let preds = effective_predecessors(tables, config).get(class);

    struct Pair {
        part: usize,
        cluster: usize,
        affinity: f64,
        fallback: bool,
    }
    let mut pairs = Vec::with_capacity(parts.len() * clusters.len().min(8));
    let mut gated = Vec::with_capacity(parts.len());
    for (pi, part) in parts.iter().enumerate() {
        let (idx, fallback) = proximal_indices(part, clusters, y_px, &tables.anthropometry, config)?;
        gated.push((part.id, idx.len()));
        for ci in idx {
            let cluster = &clusters[ci];
            if cluster.contains(class) {
                continue;
            }
            pairs.push(Pair {
                part: pi,
                cluster: ci,
                affinity: affinity_unchecked(part, cluster, preds, assoc),
                fallback,
            });
        }
    }

    pairs.sort_by(|a, b| {
        b.affinity
            .total_cmp(&a.affinity)
            .then(parts[b.part].unary.total_cmp(&parts[a.part].unary))
            .then(clusters[a.cluster].id.cmp(&clusters[b.cluster].id))
            .then(parts[a.part].id.cmp(&parts[b.part].id))
    });

    let mut part_taken = vec![false; parts.len()];
    let mut cluster_taken: Vec<bool> = clusters.iter().map(|c| c.contains(class)).collect();
    let mut commits = Vec::new();
    for pair in &pairs {
        if part_taken[pair.part] || cluster_taken[pair.cluster] {
            continue;
        }
        part_taken[pair.part] = true;
        cluster_taken[pair.cluster] = true;
        let part = parts[pair.part].clone();
        commits.push(Commit {
            part: part.id,
            cluster: clusters[pair.cluster].id,
            affinity: pair.affinity,
            gate_fallback: pair.fallback,
        });
        clusters[pair.cluster].insert(part)?;
    }

    let affinities = pairs
        .iter()
        .map(|p| AffinityEntry {
            part: parts[p.part].id,
            cluster: clusters[p.cluster].id,
            affinity: p.affinity,
        })
        .collect();
    let leftover = parts
        .iter()
        .zip(&part_taken)
        .filter(|(_, &t)| !t)
        .map(|(c, _)| c.clone())
        .collect();
    Ok(StageAssignment {
        commits,
        leftover,
        gated,
        affinities,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpawnOutcome {
    /// Ids of newly created clusters.
    pub spawned: Vec<usize>,
    /// Leftovers that did not qualify.
    pub discarded: Vec<Candidate>,
}

/// Turns each sufficiently confident leftover into a new cluster.
pub fn spawn_clusters(
    leftover: Vec<Candidate>,
    clusters: &mut Vec<PersonCluster>,
    config: &AssignmentConfig,
) -> SpawnOutcome {
    let mut out = SpawnOutcome::default();
    for part in leftover {
        if config.enable_spawning && part.unary >= config.spawn_threshold {
            let id = clusters.len() + 1;
            clusters.push(PersonCluster::spawned_from(id, part));
            out.spawned.push(id);
        } else {
            out.discarded.push(part);
        }
    }
    out
}

/// Structural score of an assigned part: mean of its unary and its
/// affinity to the rest of its cluster.
pub fn structural_score(part: &Candidate, affinity: f64) -> f64 {
    0.5 * (part.unary + affinity)
}

/// Removes parts of `stage` whose structural score falls below the
/// threshold. Anchor parts are exempt.
pub fn suppress_hallucinations(
    clusters: &mut [PersonCluster],
    stage: PartClass,
    assoc: &dyn AssociationProvider,
    preds: &PredecessorTable,
    config: &AssignmentConfig,
) -> Vec<Suppressed> {
    let mut out = Vec::new();
    if !config.enable_suppression {
        return out;
    }
    let preds = preds.get(stage);
    for cluster in clusters.iter_mut() {
        let Some(part) = cluster.get(stage) else {
            continue;
        };
        if cluster.is_anchor(part) {
            continue;
        }
        // Predecessors never include the stage class itself, so the part
        // does not score against itself.
        let affinity = affinity_unchecked(part, cluster, preds, assoc);
        let score = structural_score(part, affinity);
        if score < config.hallucination_threshold {
            let candidate = cluster.parts.remove(&stage).unwrap();
            out.push(Suppressed { candidate, score });
        }
    }
    out
}

/// Runs the full pipeline on one image.
///
/// The detections are assumed valid (see [`Detections::validate`]).
pub fn assemble(
    detections: &Detections,
    assoc: &dyn AssociationProvider,
    config: &AssignmentConfig,
    tables: &Tables,
) -> Result<AssignmentResult> {
    run(detections, assoc, config, tables, false)
}

/// Like [`assemble`], also recording a per-stage [`Trace`].
pub fn assemble_traced(
    detections: &Detections,
    assoc: &dyn AssociationProvider,
    config: &AssignmentConfig,
    tables: &Tables,
) -> Result<AssignmentResult> {
    run(detections, assoc, config, tables, true)
}

fn run(
    detections: &Detections,
    assoc: &dyn AssociationProvider,
    config: &AssignmentConfig,
    tables: &Tables,
    tracing: bool,
) -> Result<AssignmentResult> {
    config.validate()?;
    let preds = effective_predecessors(tables, config);

    let heads = detections.class(PartClass::Head);
    let mut clusters = seed_clusters(heads, config);
    let mut unassigned: Vec<Candidate> = heads
        .iter()
        .filter(|c| c.unary < config.head_nms_threshold)
        .cloned()
        .collect();
    let mut suppressed = Vec::new();
    let mut trace = tracing.then(|| Trace {
        seeds: clusters.iter().map(|c| c.parts[&PartClass::Head].id).collect(),
        ..Default::default()
    });

    let mut head_length = None;
    for class in PartClass::ALL.into_iter().skip(1) {
        if class == PartClass::RShoulder {
            head_length = estimate_head_length(&clusters, &tables.anthropometry).ok();
            if let Some(t) = trace.as_mut() {
                t.head_length = head_length;
            }
        }
        let cands = detections.class(class);
        let reduced = reduce_candidates(cands, clusters.len(), config)?;
        let stage = assign_part_class(&reduced, &mut clusters, head_length, assoc, tables, config)?;
        let spawn = spawn_clusters(stage.leftover, &mut clusters, config);
        unassigned.extend(spawn.discarded);
        let removed = suppress_hallucinations(&mut clusters, class, assoc, preds, config);

        if let Some(t) = trace.as_mut() {
            t.stages.push(StageTrace {
                class: Some(class),
                candidates: cands.len(),
                reduced: reduced.iter().map(|c| c.id).collect(),
                gated: stage.gated,
                affinities: stage.affinities,
                commits: stage.commits,
                spawned: spawn.spawned,
                suppressed: removed.iter().map(|s| s.candidate.id).collect(),
                clusters_after: clusters.len(),
            });
        }
        suppressed.extend(removed);
    }

    Ok(AssignmentResult {
        clusters,
        unassigned,
        suppressed,
        trace,
    })
}
