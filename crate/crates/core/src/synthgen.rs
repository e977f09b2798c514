//! Synthetic multi-person scenes with ground truth, noisy detections and a
//! geometric pairwise association model.
//!
//! Bodies are built from a frontal template: each joint sits `alpha * height`
//! below the head top (the anthropometric table) with a small fixed lateral
//! offset, plus bounded articulation jitter. People stand in a row, spaced so
//! that neighbours do not interpenetrate.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::association::AssociationProvider;
use crate::error::{Error, Result};
use crate::model::{AnthropometricTable, Candidate, Detections, PartClass, Point, CHIN_ALPHA};

/// Lateral joint offset as a fraction of body height; negative is image-left
/// (the person's right side when facing the camera).
pub fn lateral_offset(part: PartClass) -> f64 {
    use PartClass::*;
    match part {
        Head | Neck => 0.0,
        RShoulder => -0.11,
        LShoulder => 0.11,
        RElbow => -0.14,
        LElbow => 0.14,
        RWrist => -0.15,
        LWrist => 0.15,
        RHip => -0.06,
        LHip => 0.06,
        RKnee => -0.065,
        LKnee => 0.065,
        RAnkle => -0.07,
        LAnkle => 0.07,
    }
}

/// Template position of `part` relative to the head top, in units of body height.
pub fn template_offset(part: PartClass, table: &AnthropometricTable) -> (f64, f64) {
    (lateral_offset(part), table.alpha(part))
}

/// Largest relative amount by which the lateral template pushes a joint
/// beyond `alpha * height` from the head top.
pub const LATERAL_EXCESS: f64 = 0.115;

/// Relative slack on `distance(head_top, joint) <= alpha * height * (1 + slack)`
/// for a generator with the given articulation jitter.
pub fn jitter_bound(part: PartClass, articulation_jitter: f64, table: &AnthropometricTable) -> f64 {
    let alpha = table.alpha(part);
    if alpha == 0.0 {
        0.0
    } else {
        LATERAL_EXCESS + articulation_jitter * std::f64::consts::SQRT_2 / alpha
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Detection displacement std-dev, as a fraction of body height.
    pub position_sigma: f64,
    pub spurious_per_class: usize,
    pub unary_true_range: [f64; 2],
    pub unary_spurious_range: [f64; 2],
    pub occlusion_prob: f64,
    /// Classes occlusion applies to; empty means all.
    pub occluded_classes: Vec<PartClass>,
    /// Association std-dev, as a fraction of body height.
    pub pairwise_sigma: f64,
    /// Per-axis bound on joint articulation offsets, fraction of height.
    pub articulation_jitter: f64,
    /// Person heights are drawn uniformly from this range, in pixels.
    pub body_height: [f64; 2],
    /// Extra low-confidence detections scattered tightly around each visible
    /// non-head joint.
    pub duplicates_per_joint: usize,
    pub duplicate_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            position_sigma: 0.02,
            spurious_per_class: 3,
            unary_true_range: [0.7, 1.0],
            unary_spurious_range: [0.05, 0.3],
            occlusion_prob: 0.0,
            occluded_classes: Vec::new(),
            pairwise_sigma: 0.1,
            articulation_jitter: 0.02,
            body_height: [180.0, 220.0],
            duplicates_per_joint: 0,
            duplicate_sigma: 0.01,
        }
    }
}

impl NoiseConfig {
    /// Detections exactly at the visible joints, nothing else.
    pub fn noiseless() -> Self {
        NoiseConfig {
            position_sigma: 0.0,
            spurious_per_class: 0,
            unary_true_range: [0.9, 1.0],
            occlusion_prob: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("unary_true_range", self.unary_true_range),
            ("unary_spurious_range", self.unary_spurious_range),
        ] {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(Error::invalid(format!("{name} [{lo}, {hi}] is not a sub-range of [0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return Err(Error::invalid(format!("occlusion_prob {} outside [0, 1]", self.occlusion_prob)));
        }
        for (name, s) in [
            ("position_sigma", self.position_sigma),
            ("pairwise_sigma", self.pairwise_sigma),
            ("articulation_jitter", self.articulation_jitter),
            ("duplicate_sigma", self.duplicate_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {s}")));
            }
        }
        let [lo, hi] = self.body_height;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(format!("body_height [{lo}, {hi}] is not a positive range")));
        }
        Ok(())
    }

    fn occludable(&self, part: PartClass) -> bool {
        self.occluded_classes.is_empty() || self.occluded_classes.contains(&part)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonTruth {
    pub id: usize,
    pub head_top: Point,
    /// Body height in pixels.
    pub height: f64,
    pub joints: BTreeMap<PartClass, Point>,
    #[serde(default)]
    pub occluded: BTreeSet<PartClass>,
}

impl PersonTruth {
    /// Head-top-to-chin length in pixels.
    pub fn head_length(&self) -> f64 {
        CHIN_ALPHA * self.height
    }

    pub fn is_visible(&self, part: PartClass) -> bool {
        self.joints.contains_key(&part) && !self.occluded.contains(&part)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageExtent {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGroundTruth {
    pub image: ImageExtent,
    pub persons: Vec<PersonTruth>,
}

impl SceneGroundTruth {
    /// Scene-wide head length used to scale the association model.
    pub fn nominal_head_length(&self, noise: &NoiseConfig) -> f64 {
        if self.persons.is_empty() {
            CHIN_ALPHA * 0.5 * (noise.body_height[0] + noise.body_height[1])
        } else {
            self.persons.iter().map(PersonTruth::head_length).sum::<f64>() / self.persons.len() as f64
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Samples `n_people` bodies standing in a row.
pub fn generate_scene(n_people: usize, noise: &NoiseConfig, seed: u64) -> Result<SceneGroundTruth> {
    noise.validate()?;
    let table = AnthropometricTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hmax = noise.body_height[1];
    let slot = 0.75 * hmax;
    let margin = 0.25 * hmax;
    let j = noise.articulation_jitter;

    let mut persons = Vec::with_capacity(n_people);
    for i in 0..n_people {
        let height = uniform(&mut rng, noise.body_height);
        let cx = margin + (i as f64 + 0.5) * slot + rng.random_range(-0.08..=0.08) * slot;
        let top = margin + rng.random_range(0.0..=0.15) * hmax;
        let head_top = Point::new(cx, top);
        let mut joints = BTreeMap::new();
        let mut occluded = BTreeSet::new();
        for part in PartClass::ALL {
            let (dx, dy) = template_offset(part, &table);
            let (jx, jy) = if part == PartClass::Head || j == 0.0 {
                (0.0, 0.0)
            } else {
                (rng.random_range(-j..=j), rng.random_range(-j..=j))
            };
            joints.insert(
                part,
                Point::new(cx + (dx + jx) * height, top + (dy + jy) * height),
            );
            if noise.occlusion_prob > 0.0
                && noise.occludable(part)
                && rng.random::<f64>() < noise.occlusion_prob
            {
                occluded.insert(part);
            }
        }
        persons.push(PersonTruth {
            id: i + 1,
            head_top,
            height,
            joints,
            occluded,
        });
    }
    Ok(SceneGroundTruth {
        image: ImageExtent {
            width: 2.0 * margin + n_people as f64 * slot,
            height: 2.0 * margin + 1.15 * hmax,
        },
        persons,
    })
}

/// Emits candidates for a scene: one per visible joint (displaced and with a
/// high unary), optional near-duplicates of non-head joints, and uniform
/// spurious candidates.
/// Occluded joints emit nothing.
pub fn render_detections(gt: &SceneGroundTruth, noise: &NoiseConfig, seed: u64) -> Result<Detections> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1B5_4A32_D192_ED03);
    let mut dets = Detections::new();
    let mut next_id = 0u64;
    let mut push = |dets: &mut Detections, part, p: Point, unary| {
        dets.push(Candidate::new(next_id, part, p.x, p.y, unary));
        next_id += 1;
    };

    for person in &gt.persons {
        let pos = Normal::new(0.0, noise.position_sigma * person.height).unwrap();
        let dup = Normal::new(0.0, noise.duplicate_sigma * person.height).unwrap();
        for (&part, &joint) in &person.joints {
            if person.occluded.contains(&part) {
                continue;
            }
            let p = Point::new(joint.x + pos.sample(&mut rng), joint.y + pos.sample(&mut rng));
            let unary = uniform(&mut rng, noise.unary_true_range);
            push(&mut dets, part, p, unary);
            let duplicates = if part == PartClass::Head { 0 } else { noise.duplicates_per_joint };
            for _ in 0..duplicates {
                let q = Point::new(joint.x + dup.sample(&mut rng), joint.y + dup.sample(&mut rng));
                let unary = uniform(&mut rng, noise.unary_spurious_range);
                push(&mut dets, part, q, unary);
            }
        }
    }
    for part in PartClass::ALL {
        for _ in 0..noise.spurious_per_class {
            let p = Point::new(
                rng.random_range(0.0..=gt.image.width),
                rng.random_range(0.0..=gt.image.height),
            );
            let unary = uniform(&mut rng, noise.unary_spurious_range);
            push(&mut dets, part, p, unary);
        }
    }
    Ok(dets)
}

/// Adds uniform spurious candidates until every class has at least
/// `per_class` candidates.
pub fn pad_detections(
    dets: &mut Detections,
    per_class: usize,
    extent: &ImageExtent,
    unary_range: [f64; 2],
    seed: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_id = dets.iter().map(|c| c.id.0 + 1).max().unwrap_or(0);
    for part in PartClass::ALL {
        let have = dets.class(part).len();
        for _ in have..per_class {
            let x = rng.random_range(0.0..=extent.width);
            let y = rng.random_range(0.0..=extent.height);
            let unary = uniform(&mut rng, unary_range);
            dets.push(Candidate::new(next_id, part, x, y, unary));
            next_id += 1;
        }
    }
}

/// Pairwise model: a Gaussian on the deviation of the observed distance
/// from the template distance between the two parts' classes.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricAssociation {
    body_height: f64,
    sigma: f64,
    offsets: [(f64, f64); crate::model::NUM_CLASSES],
}

impl GeometricAssociation {
    /// Expected distance between a part of class `a` and one of class `b`
    /// on the same body.
    pub fn expected_distance(&self, a: PartClass, b: PartClass) -> f64 {
        let (ax, ay) = self.offsets[a.slot()];
        let (bx, by) = self.offsets[b.slot()];
        (ax - bx).hypot(ay - by) * self.body_height
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl AssociationProvider for GeometricAssociation {
    fn pairwise(&self, a: &Candidate, b: &Candidate) -> f64 {
        if a.id == b.id {
            return 1.0;
        }
        let dev = a.position().distance(b.position()) - self.expected_distance(a.part, b.part);
        if self.sigma == 0.0 {
            return if dev == 0.0 { 1.0 } else { 0.0 };
        }
        (-(dev * dev) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Geometric association at head scale `head_length` pixels.
pub fn geometric_association(
    head_length: f64,
    table: &AnthropometricTable,
    pairwise_sigma: f64,
) -> Result<GeometricAssociation> {
    if !(head_length > 0.0 && head_length.is_finite()) {
        return Err(Error::invalid(format!("head length must be positive, got {head_length}")));
    }
    if !(pairwise_sigma >= 0.0 && pairwise_sigma.is_finite()) {
        return Err(Error::invalid(format!("pairwise_sigma must be non-negative, got {pairwise_sigma}")));
    }
    let body_height = head_length / table.chin_alpha();
    Ok(GeometricAssociation {
        body_height,
        sigma: pairwise_sigma * body_height,
        offsets: std::array::from_fn(|i| template_offset(PartClass::ALL[i], table)),
    })
}
