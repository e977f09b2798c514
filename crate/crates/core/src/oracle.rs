//! Exhaustive assignment on small instances.
//!
//! Every way of giving each seeded cluster at most one candidate per class is
//! enumerated and scored with the same predecessor-restricted affinity the
//! greedy pass uses, so the two can be compared on search quality alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::{affinity_unchecked, assemble, AssignmentResult, PersonCluster};
use crate::association::AssociationProvider;
use crate::config::{AssignmentConfig, Tables};
use crate::error::{Error, Result};
use crate::model::{Candidate, CandidateId, Detections, PartClass, PredecessorTable};

pub const MAX_CLASSES: usize = 6;
pub const MAX_CANDIDATES_PER_CLASS: usize = 5;
pub const MAX_SEEDS: usize = 4;
/// Upper bound on complete assignments visited. Covers 3 seeds with 5
/// classes of 4 candidates (73^5 assignments).
pub const MAX_LEAVES: u128 = 2_500_000_000;

pub struct OracleInstance<'a> {
    /// Classes to assign, in chain order; `Head` is implied by the seeds.
    pub classes: Vec<PartClass>,
    pub parts: BTreeMap<PartClass, Vec<Candidate>>,
    /// Head candidates; each seeds one cluster.
    pub seeds: Vec<Candidate>,
    pub assoc: &'a dyn AssociationProvider,
    pub predecessors: PredecessorTable,
}

/// Cluster contents in seed order; `Head` is omitted.
pub type AssignmentMap = Vec<BTreeMap<PartClass, CandidateId>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub assignment: AssignmentMap,
    pub score: f64,
    pub leaves: u128,
}

impl<'a> OracleInstance<'a> {
    /// Builds an instance from a detection set: heads seed clusters, and
    /// every class from `Neck` through the last populated one is assigned.
    pub fn from_detections(
        detections: &Detections,
        assoc: &'a dyn AssociationProvider,
        predecessors: PredecessorTable,
    ) -> Self {
        let last = PartClass::ALL
            .into_iter()
            .skip(1)
            .rfind(|c| !detections.class(*c).is_empty());
        let classes: Vec<PartClass> = match last {
            Some(last) => PartClass::ALL[1..=last.slot()].to_vec(),
            None => Vec::new(),
        };
        let parts = classes
            .iter()
            .map(|&c| (c, detections.class(c).to_vec()))
            .collect();
        OracleInstance {
            classes,
            parts,
            seeds: detections.class(PartClass::Head).to_vec(),
            assoc,
            predecessors,
        }
    }

    fn candidates(&self, class: PartClass) -> &[Candidate] {
        self.parts.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of complete assignments the enumeration would visit.
    pub fn leaf_count(&self) -> u128 {
        let h = self.seeds.len() as u128;
        self.classes
            .iter()
            .map(|&c| partial_injections(h, self.candidates(c).len() as u128))
            .product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() > MAX_CLASSES {
            return Err(Error::BudgetExceeded(format!(
                "{} classes (max {MAX_CLASSES})",
                self.classes.len()
            )));
        }
        if self.seeds.len() > MAX_SEEDS {
            return Err(Error::BudgetExceeded(format!(
                "{} seeds (max {MAX_SEEDS})",
                self.seeds.len()
            )));
        }
        for w in self.classes.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::invalid("oracle classes must be in strict chain order"));
            }
        }
        if self.classes.contains(&PartClass::Head) {
            return Err(Error::invalid("Head is given by the seeds, not the class list"));
        }
        if let Some(s) = self.seeds.iter().find(|s| s.part != PartClass::Head) {
            return Err(Error::invalid(format!("seed {} is not a Head", s.id)));
        }
        for (&class, cands) in &self.parts {
            if !self.classes.contains(&class) {
                return Err(Error::invalid(format!("parts given for unlisted class {class}")));
            }
            if let Some(c) = cands.iter().find(|c| c.part != class) {
                return Err(Error::invalid(format!("candidate {} listed under {class}", c.id)));
            }
            if cands.len() > MAX_CANDIDATES_PER_CLASS {
                return Err(Error::BudgetExceeded(format!(
                    "{} candidates for {class} (max {MAX_CANDIDATES_PER_CLASS})",
                    cands.len()
                )));
            }
        }
        for &class in &self.classes {
            for &p in self.predecessors.get(class) {
                if p != PartClass::Head && !self.classes.contains(&p) {
                    return Err(Error::invalid(format!(
                        "class set is not predecessor-closed: {class} needs {p}"
                    )));
                }
            }
        }
        let leaves = self.leaf_count();
        if leaves > MAX_LEAVES {
            return Err(Error::BudgetExceeded(format!(
                "{leaves} assignments to enumerate (max {MAX_LEAVES})"
            )));
        }
        Ok(())
    }

    /// Builds the cluster view of an assignment, seeds first.
    fn clusters_for(&self, assignment: &AssignmentMap) -> Vec<PersonCluster> {
        let by_id: BTreeMap<CandidateId, &Candidate> =
            self.parts.values().flatten().map(|c| (c.id, c)).collect();
        self.seeds
            .iter()
            .zip(assignment)
            .enumerate()
            .map(|(h, (seed, parts))| {
                let mut cl = PersonCluster::from_head(h + 1, seed.clone());
                for id in parts.values() {
                    cl.parts.insert(by_id[id].part, by_id[id].clone());
                }
                cl
            })
            .collect()
    }

    /// Objective value of an assignment: sum over clusters and non-seed parts
    /// of the part's affinity to its cluster's predecessors.
    pub fn score(&self, assignment: &AssignmentMap) -> f64 {
        let clusters = self.clusters_for(assignment);
        let mut total = 0.0;
        for &class in &self.classes {
            for cl in &clusters {
                if let Some(part) = cl.get(class) {
                    total += affinity_unchecked(part, cl, self.predecessors.get(class), self.assoc);
                }
            }
        }
        total
    }
}

fn partial_injections(clusters: u128, cands: u128) -> u128 {
    // sum_k C(h, k) * P(n, k)
    let mut total = 0u128;
    for k in 0..=clusters.min(cands) {
        let choose: u128 = (0..k).fold(1, |acc, i| acc * (clusters - i) / (i + 1));
        let perm: u128 = (0..k).map(|i| cands - i).product();
        total += choose * perm;
    }
    total
}

struct Search<'i> {
    n_clusters: usize,
    /// Per class position: candidates.
    cands: Vec<&'i [Candidate]>,
    /// Per class position: predecessor class positions (usize::MAX = the seed).
    preds: Vec<Vec<usize>>,
    /// pair[class][cand][pred_slot][pred_cand] where pred cand indexes the
    /// seed list for the Head.
    pair: Vec<Vec<Vec<Vec<f64>>>>,
    /// choice[class][cluster]: 0 = none, i + 1 = candidate i.
    choice: Vec<Vec<u8>>,
    best_choice: Vec<Vec<u8>>,
    best_score: f64,
    leaves: u128,
}

const SEED: usize = usize::MAX;

impl Search<'_> {
    fn affinity(&self, class: usize, cand: usize, cluster: usize) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (slot, &p) in self.preds[class].iter().enumerate() {
            let pc = if p == SEED {
                cluster
            } else {
                match self.choice[p][cluster] {
                    0 => continue,
                    c => c as usize - 1,
                }
            };
            sum += self.pair[class][cand][slot][pc];
            n += 1;
        }
        if n == 0 {
            self.cands[class][cand].unary
        } else {
            sum / n as f64
        }
    }

    fn visit(&mut self, class: usize, cluster: usize, used: u32, score: f64) {
        if class == self.cands.len() {
            self.leaves += 1;
            // Strictly better only: the first maximum in enumeration order is
            // the lexicographically smallest encoding.
            if score > self.best_score + 1e-12 {
                self.best_score = score;
                self.best_choice.clone_from(&self.choice);
            }
            return;
        }
        if cluster == self.n_clusters {
            self.visit(class + 1, 0, 0, score);
            return;
        }
        self.choice[class][cluster] = 0;
        self.visit(class, cluster + 1, used, score);
        for cand in 0..self.cands[class].len() {
            if used & (1 << cand) != 0 {
                continue;
            }
            let a = self.affinity(class, cand, cluster);
            self.choice[class][cluster] = cand as u8 + 1;
            self.visit(class, cluster + 1, used | (1 << cand), score + a);
        }
        self.choice[class][cluster] = 0;
    }
}

/// Finds a maximum-score assignment by plain enumeration; among equal
/// scores, the one whose per-class choices are lexicographically smallest
/// (no part before any part, lower candidate index first, earlier clusters
/// first).
///
/// Refuses instances over budget instead of truncating the search.
pub fn exhaustive_assign(inst: &OracleInstance<'_>) -> Result<OracleSolution> {
    inst.validate()?;
    let n_clusters = inst.seeds.len();
    let cands: Vec<&[Candidate]> = inst.classes.iter().map(|&c| inst.candidates(c)).collect();
    let pos_of = |p: PartClass| -> usize {
        if p == PartClass::Head {
            SEED
        } else {
            inst.classes.iter().position(|&c| c == p).unwrap()
        }
    };
    let preds: Vec<Vec<usize>> = inst
        .classes
        .iter()
        .map(|&c| inst.predecessors.get(c).iter().map(|&p| pos_of(p)).collect())
        .collect();
    let pair: Vec<Vec<Vec<Vec<f64>>>> = inst
        .classes
        .iter()
        .enumerate()
        .map(|(ci, _)| {
            cands[ci]
                .iter()
                .map(|a| {
                    preds[ci]
                        .iter()
                        .map(|&p| {
                            let others: &[Candidate] = if p == SEED { &inst.seeds } else { cands[p] };
                            others.iter().map(|b| inst.assoc.pairwise(a, b)).collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut search = Search {
        n_clusters,
        cands,
        preds,
        pair,
        choice: vec![vec![0; n_clusters]; inst.classes.len()],
        best_choice: vec![vec![0; n_clusters]; inst.classes.len()],
        best_score: f64::NEG_INFINITY,
        leaves: 0,
    };
    search.visit(0, 0, 0, 0.0);

    let mut assignment: AssignmentMap = vec![BTreeMap::new(); n_clusters];
    for (ci, &class) in inst.classes.iter().enumerate() {
        for (h, &c) in search.best_choice[ci].iter().enumerate() {
            if c > 0 {
                assignment[h].insert(class, search.cands[ci][c as usize - 1].id);
            }
        }
    }
    Ok(OracleSolution {
        assignment,
        score: search.best_score.max(0.0),
        leaves: search.leaves,
    })
}

/// Greedy configuration comparable with the oracle: every seed kept, no
/// reduction, gating, spawning or suppression.
pub fn comparable_config() -> AssignmentConfig {
    AssignmentConfig {
        head_nms_threshold: 0.0,
        enable_candidate_clustering: false,
        enable_proximal_gating: false,
        enable_spawning: false,
        enable_suppression: false,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedySolution {
    pub assignment: AssignmentMap,
    pub score: f64,
}

/// Runs the greedy pass on the instance under [`comparable_config`].
pub fn greedy_assign(inst: &OracleInstance<'_>) -> Result<GreedySolution> {
    let mut dets = Detections::new();
    for s in &inst.seeds {
        dets.push(s.clone());
    }
    for c in inst.parts.values().flatten() {
        dets.push(c.clone());
    }
    let tables = Tables {
        predecessors: inst.predecessors.clone(),
        ..Default::default()
    };
    let res = assemble(&dets, inst.assoc, &comparable_config(), &tables)?;
    let assignment = assignment_map(&res, inst.seeds.len());
    let score = inst.score(&assignment);
    Ok(GreedySolution { assignment, score })
}

fn assignment_map(res: &AssignmentResult, n_seeds: usize) -> AssignmentMap {
    let mut out: AssignmentMap = vec![BTreeMap::new(); n_seeds];
    for cl in &res.clusters {
        // Seeds are created in order, so cluster h holds seed h - 1.
        for (class, c) in &cl.parts {
            if *class != PartClass::Head {
                out[cl.id - 1].insert(*class, c.id);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::SparseAssociation;
    use PartClass::*;

    fn cand(id: u64, part: PartClass, unary: f64) -> Candidate {
        Candidate::new(id, part, id as f64, 0.0, unary)
    }

    fn sparse(pairs: &[(u64, u64, f64)]) -> SparseAssociation {
        let mut s = SparseAssociation::new();
        for &(a, b, p) in pairs {
            s.insert(CandidateId(a), CandidateId(b), p).unwrap();
        }
        s
    }

    fn instance<'a>(
        seeds: Vec<Candidate>,
        parts: Vec<Candidate>,
        assoc: &'a dyn AssociationProvider,
    ) -> OracleInstance<'a> {
        let dets: Detections = seeds.into_iter().chain(parts).collect();
        OracleInstance::from_detections(&dets, assoc, PredecessorTable::default())
    }

    #[test]
    fn partial_injection_counts() {
        assert_eq!(partial_injections(3, 4), 73);
        assert_eq!(partial_injections(2, 2), 7);
        assert_eq!(partial_injections(0, 5), 1);
        assert_eq!(partial_injections(4, 0), 1);
    }

    #[test]
    fn all_ones_assigns_everything() {
        let assoc = crate::association::FnAssociation(|_: &Candidate, _: &Candidate| 1.0);
        let inst = instance(
            vec![cand(1, Head, 1.0)],
            vec![cand(2, Neck, 1.0), cand(3, RShoulder, 1.0), cand(4, LShoulder, 1.0)],
            &assoc,
        );
        let sol = exhaustive_assign(&inst).unwrap();
        assert!((sol.score - 3.0).abs() < 1e-12);
        assert_eq!(sol.assignment[0].len(), 3);
    }

    #[test]
    fn diagonal_necks() {
        let assoc = sparse(&[(11, 1, 0.9), (11, 2, 0.1), (12, 1, 0.2), (12, 2, 0.8)]);
        let inst = instance(
            vec![cand(1, Head, 1.0), cand(2, Head, 1.0)],
            vec![cand(11, Neck, 0.9), cand(12, Neck, 0.9)],
            &assoc,
        );
        let sol = exhaustive_assign(&inst).unwrap();
        assert!((sol.score - 1.7).abs() < 1e-12);
        assert_eq!(sol.assignment[0][&Neck], CandidateId(11));
        assert_eq!(sol.assignment[1][&Neck], CandidateId(12));
        assert_eq!(inst.leaf_count(), 7);
        assert!(sol.leaves <= 7);
        let greedy = greedy_assign(&inst).unwrap();
        assert_eq!(greedy.assignment, sol.assignment);
    }

    #[test]
    fn greedy_first_pick_can_block_the_optimum() {
        // Greedy takes 11->1 (0.9) and is left with 12->2 (0.1).
        let assoc = sparse(&[(11, 1, 0.9), (11, 2, 0.8), (12, 1, 0.85), (12, 2, 0.1)]);
        let inst = instance(
            vec![cand(1, Head, 1.0), cand(2, Head, 1.0)],
            vec![cand(11, Neck, 0.9), cand(12, Neck, 0.9)],
            &assoc,
        );
        let sol = exhaustive_assign(&inst).unwrap();
        let greedy = greedy_assign(&inst).unwrap();
        assert!((sol.score - 1.65).abs() < 1e-12);
        assert!((greedy.score - 1.0).abs() < 1e-12);
        assert!(sol.score > greedy.score);
    }

    #[test]
    fn ties_pick_smallest_encoding() {
        // Both necks equally good for the single head: candidate 0 wins.
        let assoc = sparse(&[(11, 1, 0.5), (12, 1, 0.5)]);
        let inst = instance(
            vec![cand(1, Head, 1.0)],
            vec![cand(11, Neck, 0.9), cand(12, Neck, 0.9)],
            &assoc,
        );
        let sol = exhaustive_assign(&inst).unwrap();
        assert_eq!(sol.assignment[0][&Neck], CandidateId(11));
    }

    #[test]
    fn budget_is_enforced() {
        let assoc = sparse(&[]);
        let seeds: Vec<_> = (0..5).map(|i| cand(i, Head, 1.0)).collect();
        let inst = instance(seeds, vec![cand(10, Neck, 0.5)], &assoc);
        assert!(matches!(exhaustive_assign(&inst), Err(Error::BudgetExceeded(_))));

        let seeds: Vec<_> = (0..4).map(|i| cand(i, Head, 1.0)).collect();
        let parts: Vec<_> = (0..6).map(|i| cand(10 + i, Neck, 0.5)).collect();
        let inst = instance(seeds.clone(), parts, &assoc);
        assert!(matches!(exhaustive_assign(&inst), Err(Error::BudgetExceeded(_))));

        // 6 classes x 5 candidates x 4 seeds: allowed sizes, too many leaves.
        let classes = [Neck, RShoulder, LShoulder, RElbow, LElbow, RWrist];
        let mut parts = Vec::new();
        for (ci, &c) in classes.iter().enumerate() {
            for i in 0..5 {
                parts.push(cand(100 + 10 * ci as u64 + i, c, 0.5));
            }
        }
        let inst = instance(seeds, parts, &assoc);
        assert!(matches!(exhaustive_assign(&inst), Err(Error::BudgetExceeded(_))));
    }

    fn random_instance(seed: u64) -> (Detections, SparseAssociation) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let h = rng.random_range(1..=3);
        let n_classes = rng.random_range(1..=4);
        let mut dets = Detections::new();
        let mut id = 0;
        for _ in 0..h {
            dets.push(cand(id, Head, 1.0));
            id += 1;
        }
        for &class in &PartClass::ALL[1..=n_classes] {
            for _ in 0..rng.random_range(0..=3) {
                dets.push(cand(id, class, rng.random::<f64>()));
                id += 1;
            }
        }
        let all: Vec<Candidate> = dets.iter().cloned().collect();
        let mut assoc = SparseAssociation::new();
        for a in &all {
            for b in &all {
                // Coarse values so that ties actually occur.
                if a.id < b.id && a.part != b.part && rng.random::<f64>() < 0.8 {
                    assoc.insert(a.id, b.id, rng.random_range(0..=4) as f64 / 4.0).unwrap();
                }
            }
        }
        (dets, assoc)
    }

    /// Every assignment in encoding order, built without the search tables.
    fn all_assignments(inst: &OracleInstance<'_>) -> Vec<AssignmentMap> {
        let h = inst.seeds.len();
        let mut out = vec![vec![BTreeMap::new(); h]];
        for &class in &inst.classes {
            let cands = inst.candidates(class);
            let mut next = Vec::new();
            for base in &out {
                // choices[cluster]: None or candidate index, odometer order.
                let mut choices: Vec<Option<usize>> = vec![None; h];
                loop {
                    let used: Vec<usize> = choices.iter().flatten().copied().collect();
                    let distinct = used.iter().collect::<std::collections::BTreeSet<_>>().len();
                    if distinct == used.len() {
                        let mut a = base.clone();
                        for (cl, ch) in choices.iter().enumerate() {
                            if let Some(i) = ch {
                                a[cl].insert(class, cands[*i].id);
                            }
                        }
                        next.push(a);
                    }
                    // Increment, last cluster fastest.
                    let mut pos = h;
                    loop {
                        if pos == 0 {
                            break;
                        }
                        pos -= 1;
                        choices[pos] = match choices[pos] {
                            None if !cands.is_empty() => Some(0),
                            Some(i) if i + 1 < cands.len() => Some(i + 1),
                            _ => None,
                        };
                        if choices[pos].is_some() {
                            break;
                        }
                        if pos == 0 {
                            pos = usize::MAX;
                            break;
                        }
                    }
                    if pos == usize::MAX || h == 0 {
                        break;
                    }
                }
            }
            out = next;
        }
        out
    }

    proptest::proptest! {
        #[test]
        fn search_matches_naive_enumeration(seed in proptest::prelude::any::<u64>()) {
            let (dets, assoc) = random_instance(seed);
            let inst = OracleInstance::from_detections(&dets, &assoc, PredecessorTable::default());
            let sol = exhaustive_assign(&inst).unwrap();
            let all = all_assignments(&inst);
            proptest::prop_assert_eq!(all.len() as u128, inst.leaf_count());
            proptest::prop_assert_eq!(sol.leaves, inst.leaf_count());
            let mut best: Option<(f64, &AssignmentMap)> = None;
            for a in &all {
                let sc = inst.score(a);
                if best.is_none_or(|(b, _)| sc > b + 1e-12) {
                    best = Some((sc, a));
                }
            }
            let (score, assignment) = best.unwrap();
            proptest::prop_assert!((sol.score - score).abs() < 1e-9);
            proptest::prop_assert_eq!(&sol.assignment, assignment);
        }
    }

    #[test]
    fn class_set_must_be_predecessor_closed() {
        let assoc = sparse(&[]);
        let inst = OracleInstance {
            classes: vec![RElbow],
            parts: BTreeMap::from([(RElbow, vec![cand(2, RElbow, 0.5)])]),
            seeds: vec![cand(1, Head, 1.0)],
            assoc: &assoc,
            predecessors: PredecessorTable::default(),
        };
        assert!(matches!(exhaustive_assign(&inst), Err(Error::InvalidArgument(_))));
        // Built from detections, the set is closed up to the last class.
        let inst = instance(vec![cand(1, Head, 1.0)], vec![cand(2, RElbow, 0.5)], &assoc);
        assert_eq!(inst.classes, vec![Neck, RShoulder, LShoulder, RElbow]);
        assert!(exhaustive_assign(&inst).is_ok());
    }
}
