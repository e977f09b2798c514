//! Spatial k-means reduction of per-class candidates.
//!
//! Each class's candidate set is clustered into `K = N_H + extra` groups and
//! the member nearest each center stands in for the whole group. Centers are
//! never emitted; only real candidates are.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::AssignmentConfig;
use crate::error::{Error, Result};
use crate::model::{Candidate, CandidateId, PartClass, Point};

/// Output of a Lloyd run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centers: Vec<Point>,
    /// Center index of each input point.
    pub membership: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss_history: Vec<f64>,
}

impl KMeans {
    pub fn wcss(&self) -> f64 {
        self.wcss_history.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub centers: Vec<Point>,
    pub membership: BTreeMap<CandidateId, usize>,
    /// One member per non-empty center, in center order.
    pub representatives: Vec<Candidate>,
}

/// Lloyd's algorithm with k-means++ seeding, run until membership is stable,
/// the centers settle or `iterations` updates have been made.
///
/// `k` is clamped to the number of points. Every point ends assigned to its
/// nearest returned center (ties go to the lower center index).
pub fn kmeans(points: &[Point], k: usize, iterations: usize, seed: u64) -> Result<KMeans> {
    if points.is_empty() {
        return Err(Error::invalid("k-means needs at least one point"));
    }
    if k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    let k = k.min(points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(points, k, &mut rng);

    let mut membership = vec![usize::MAX; points.len()];
    let mut dist_sq = vec![0.0; points.len()];
    let mut wcss_history = Vec::new();
    let mut sums = vec![(0.0, 0.0, 0usize); k];

    let tolerance = CENTER_SHIFT_TOLERANCE * mean_axis_variance(points);
    let mut settled = false;

    // One assignment step per pass; the update step is skipped on the final
    // pass so that membership always refers to the returned centers.
    for pass in 0..=iterations {
        let mut changed = false;
        let mut wcss = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, d) = nearest(&centers, *p);
            if membership[i] != best {
                membership[i] = best;
                changed = true;
            }
            dist_sq[i] = d;
            wcss += d;
        }
        wcss_history.push(wcss);
        if !changed || settled || pass == iterations {
            break;
        }

        sums.iter_mut().for_each(|s| *s = (0.0, 0.0, 0));
        for (p, &m) in points.iter().zip(&membership) {
            let s = &mut sums[m];
            s.0 += p.x;
            s.1 += p.y;
            s.2 += 1;
        }
        let mut taken: Vec<usize> = Vec::new();
        let mut shift = 0.0;
        let mut reseeded = false;
        for (c, &(sx, sy, n)) in sums.iter().enumerate() {
            if n > 0 {
                let next = Point::new(sx / n as f64, sy / n as f64);
                shift += next.distance_sq(centers[c]);
                centers[c] = next;
            } else {
                reseeded = true;
                // Re-seed an empty center at the point worst served by its
                // current center.
                let far = (0..points.len())
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dist_sq[a].total_cmp(&dist_sq[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    taken.push(i);
                    centers[c] = points[i];
                }
            }
        }
        settled = !reseeded && shift <= tolerance;
    }

    Ok(KMeans {
        centers,
        membership,
        wcss_history,
    })
}

/// Lloyd's iterations stop once the summed squared center movement of one
/// update falls to this fraction of the mean per-axis variance of the data.
pub const CENTER_SHIFT_TOLERANCE: f64 = 1e-3;

fn mean_axis_variance(points: &[Point]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let ss: f64 = points.iter().map(|p| (p.x - mx).powi(2) + (p.y - my).powi(2)).sum();
    ss / (2.0 * n)
}

fn nearest(centers: &[Point], p: Point) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = p.distance_sq(*center);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    (best, best_d)
}

fn plus_plus_init(points: &[Point], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut chosen = Vec::with_capacity(k);
    let first = rng.random_range(0..points.len());
    chosen.push(first);
    let mut d2: Vec<f64> = points.iter().map(|p| p.distance_sq(points[first])).collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` at the very top of the range.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // All remaining points coincide with a chosen center.
            (0..points.len()).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(p.distance_sq(points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i]).collect()
}

/// Relative difference below which two squared distances to a center count
/// as equal. The two members of a pair are equidistant from their mean only
/// up to rounding.
const TIE_TOLERANCE: f64 = 1e-9;

fn class_seed(seed: u64, part: PartClass) -> u64 {
    seed ^ (part.index() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Clusters one class's candidates into `min(n_people + extra, |cands|)`
/// groups and picks a representative per non-empty group.
pub fn cluster_candidates(
    cands: &[Candidate],
    n_people: usize,
    config: &AssignmentConfig,
) -> Result<ClusterResult> {
    let Some(first) = cands.first() else {
        return Ok(ClusterResult {
            centers: Vec::new(),
            membership: BTreeMap::new(),
            representatives: Vec::new(),
        });
    };
    let part = first.part;
    if let Some(other) = cands.iter().find(|c| c.part != part) {
        return Err(Error::invalid(format!(
            "candidate {} is {} but the set is {}",
            other.id, other.part, part
        )));
    }
    let k = (n_people + config.extra_clusters).min(cands.len());
    if k == 0 {
        return Ok(ClusterResult {
            centers: Vec::new(),
            membership: BTreeMap::new(),
            representatives: Vec::new(),
        });
    }

    let points: Vec<Point> = cands.iter().map(Candidate::position).collect();
    let km = kmeans(&points, k, config.kmeans_iterations, class_seed(config.rng_seed, part))?;

    let mut best: Vec<Option<(f64, usize)>> = vec![None; km.centers.len()];
    for (i, &c) in km.membership.iter().enumerate() {
        let d = points[i].distance_sq(km.centers[c]);
        let better = match best[c] {
            None => true,
            Some((bd, bi)) => {
                let (a, b) = (&cands[i], &cands[bi]);
                let tie = (d - bd).abs() <= TIE_TOLERANCE * d.max(bd);
                (!tie && d < bd)
                    || (tie && (a.unary > b.unary || (a.unary == b.unary && a.id < b.id)))
            }
        };
        if better {
            best[c] = Some((d, i));
        }
    }

    Ok(ClusterResult {
        membership: cands
            .iter()
            .zip(&km.membership)
            .map(|(c, &m)| (c.id, m))
            .collect(),
        representatives: best
            .into_iter()
            .flatten()
            .map(|(_, i)| cands[i].clone())
            .collect(),
        centers: km.centers,
    })
}

/// Reduces one class's candidates to at most `n_people + extra` parts.
///
/// Returns the input unchanged when candidate clustering is disabled.
pub fn reduce_candidates(
    cands: &[Candidate],
    n_people: usize,
    config: &AssignmentConfig,
) -> Result<Vec<Candidate>> {
    if !config.enable_candidate_clustering {
        if let Some(first) = cands.first() {
            if let Some(other) = cands.iter().find(|c| c.part != first.part) {
                return Err(Error::invalid(format!(
                    "candidate {} is {} but the set is {}",
                    other.id, other.part, first.part
                )));
            }
        }
        return Ok(cands.to_vec());
    }
    Ok(cluster_candidates(cands, n_people, config)?.representatives)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, proptest, Strategy};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn unit_square_four_centers() {
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
        ];
        let km = kmeans(&pts, 4, 100, 3).unwrap();
        let mut m = km.membership.clone();
        m.sort();
        m.dedup();
        assert_eq!(m.len(), 4);
        for (i, &c) in km.membership.iter().enumerate() {
            assert_eq!(km.centers[c], pts[i]);
        }
        assert_eq!(km.wcss(), 0.0);
    }

    #[test]
    fn recovers_separated_centroids() {
        // Spread 1.0, separation 10.
        let truth = [Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(5.0, 10.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut pts = Vec::new();
        for i in 0..100 {
            let c = truth[i % 3];
            pts.push(Point::new(c.x + noise.sample(&mut rng), c.y + noise.sample(&mut rng)));
        }
        for seed in 0..5 {
            let km = kmeans(&pts, 3, 100, seed).unwrap();
            for t in truth {
                let d = km
                    .centers
                    .iter()
                    .map(|c| c.distance(t))
                    .fold(f64::INFINITY, f64::min);
                assert!(d < 0.5, "seed {seed}: centroid {t:?} off by {d}");
            }
        }
    }

    #[test]
    fn k_is_clamped_and_errors_are_reported() {
        let pts = [Point::new(1.0, 1.0), Point::new(5.0, 1.0)];
        let km = kmeans(&pts, 10, 100, 0).unwrap();
        assert_eq!(km.centers.len(), 2);
        assert!(kmeans(&[], 2, 10, 0).is_err());
        assert!(kmeans(&pts, 0, 10, 0).is_err());
    }

    #[test]
    fn coincident_points_do_not_panic() {
        let pts = vec![Point::new(3.0, 3.0); 6];
        let km = kmeans(&pts, 4, 100, 1).unwrap();
        assert_eq!(km.centers.len(), 4);
        assert!(km.membership.iter().all(|&m| m < 4));
    }

    #[test]
    fn sole_candidate_is_its_own_representative() {
        let c = Candidate::new(7, PartClass::Neck, 10.0, 20.0, 0.3);
        let reps = reduce_candidates(std::slice::from_ref(&c), 5, &AssignmentConfig::default()).unwrap();
        assert_eq!(reps, vec![c]);
    }

    #[test]
    fn equidistant_tie_goes_to_higher_unary() {
        let cands = [
            Candidate::new(1, PartClass::Neck, 5.0, 5.0, 0.4),
            Candidate::new(2, PartClass::Neck, 5.0, 5.0, 0.9),
        ];
        let config = AssignmentConfig {
            extra_clusters: 0,
            ..Default::default()
        };
        let reps = reduce_candidates(&cands, 1, &config).unwrap();
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0].id, CandidateId(2));

        // Same unary: lowest id.
        let cands = [
            Candidate::new(4, PartClass::Neck, 5.0, 5.0, 0.5),
            Candidate::new(3, PartClass::Neck, 5.0, 5.0, 0.5),
        ];
        let reps = reduce_candidates(&cands, 1, &config).unwrap();
        assert_eq!(reps[0].id, CandidateId(3));
    }

    #[test]
    fn noisy_joints_keep_a_representative_near_each() {
        // 3 true joints, 9 detections each within radius 2, plus 3 far noise points.
        let joints = [Point::new(100.0, 100.0), Point::new(300.0, 120.0), Point::new(500.0, 90.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cands = Vec::new();
        let mut id = 0;
        for j in joints {
            for _ in 0..9 {
                let a: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                let r: f64 = rng.random::<f64>() * 2.0;
                cands.push(Candidate::new(id, PartClass::RElbow, j.x + r * a.cos(), j.y + r * a.sin(), 0.8));
                id += 1;
            }
        }
        for p in [Point::new(50.0, 400.0), Point::new(420.0, 380.0), Point::new(250.0, 450.0)] {
            cands.push(Candidate::new(id, PartClass::RElbow, p.x, p.y, 0.2));
            id += 1;
        }
        assert_eq!(cands.len(), 30);
        let res = cluster_candidates(&cands, 3, &AssignmentConfig::default()).unwrap();
        assert_eq!(res.representatives.len(), 5);
        for j in joints {
            assert!(
                res.representatives.iter().any(|c| c.position().distance(j) <= 2.0),
                "no representative near {j:?}"
            );
        }
    }

    #[test]
    fn mixed_classes_rejected() {
        let cands = [
            Candidate::new(1, PartClass::Neck, 0.0, 0.0, 0.5),
            Candidate::new(2, PartClass::Head, 0.0, 0.0, 0.5),
        ];
        assert!(reduce_candidates(&cands, 1, &AssignmentConfig::default()).is_err());
        let off = AssignmentConfig {
            enable_candidate_clustering: false,
            ..Default::default()
        };
        assert!(reduce_candidates(&cands, 1, &off).is_err());
    }

    #[test]
    fn disabled_clustering_is_identity() {
        let cands: Vec<_> = (0..12)
            .map(|i| Candidate::new(i, PartClass::LHip, i as f64, 0.0, 0.5))
            .collect();
        let off = AssignmentConfig {
            enable_candidate_clustering: false,
            ..Default::default()
        };
        assert_eq!(reduce_candidates(&cands, 1, &off).unwrap(), cands);
    }

    fn arb_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-500.0..500.0f64, -500.0..500.0f64), 1..60)
    }

    proptest! {
        #[test]
        fn wcss_never_increases(pts in arb_points(), k in 1usize..8, seed in any::<u64>()) {
            let pts: Vec<Point> = pts.into_iter().map(|(x, y)| Point::new(x, y)).collect();
            let km = kmeans(&pts, k, 100, seed).unwrap();
            for w in km.wcss_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-9, "{:?}", km.wcss_history);
            }
        }

        #[test]
        fn membership_is_nearest_and_deterministic(pts in arb_points(), k in 1usize..8, seed in any::<u64>()) {
            let pts: Vec<Point> = pts.into_iter().map(|(x, y)| Point::new(x, y)).collect();
            let a = kmeans(&pts, k, 100, seed).unwrap();
            let b = kmeans(&pts, k, 100, seed).unwrap();
            prop_assert_eq!(&a, &b);
            for (p, &m) in pts.iter().zip(&a.membership) {
                let d = p.distance_sq(a.centers[m]);
                for c in &a.centers {
                    prop_assert!(d <= p.distance_sq(*c));
                }
            }
        }

        #[test]
        fn representatives_are_real_and_bounded(
            pts in arb_points(),
            n_people in 0usize..6,
            seed in any::<u64>(),
        ) {
            let cands: Vec<Candidate> = pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| Candidate::new(i as u64, PartClass::RKnee, x, y, 0.5))
                .collect();
            let config = AssignmentConfig { rng_seed: seed, ..Default::default() };
            let reps = reduce_candidates(&cands, n_people, &config).unwrap();
            prop_assert!(reps.len() <= cands.len().min(n_people + 2));
            for r in &reps {
                prop_assert!(cands.contains(r));
            }
        }
    }
}
