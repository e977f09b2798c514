//! Domain types: part classes along the kinematic chain, detected candidates,
//! and the two constant tables that drive assignment (anthropometric ratios
//! and predecessor sets).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of part classes.
pub const NUM_CLASSES: usize = 14;

/// Normalized head-top-to-chin distance.
pub const CHIN_ALPHA: f64 = 0.130;

/// A body-part class. Discriminants follow the kinematic chain, `Head` first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PartClass {
    Head,
    Neck,
    RShoulder,
    LShoulder,
    RElbow,
    LElbow,
    RWrist,
    LWrist,
    RHip,
    LHip,
    RKnee,
    LKnee,
    RAnkle,
    LAnkle,
}

impl PartClass {
    pub const ALL: [PartClass; NUM_CLASSES] = [
        PartClass::Head,
        PartClass::Neck,
        PartClass::RShoulder,
        PartClass::LShoulder,
        PartClass::RElbow,
        PartClass::LElbow,
        PartClass::RWrist,
        PartClass::LWrist,
        PartClass::RHip,
        PartClass::LHip,
        PartClass::RKnee,
        PartClass::LKnee,
        PartClass::RAnkle,
        PartClass::LAnkle,
    ];

    /// 1-based position along the chain (`Head` = 1, `LAnkle` = 14).
    pub fn index(self) -> usize {
        self as usize + 1
    }

    /// Zero-based slot, for array-backed per-class storage.
    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<PartClass> {
        index.checked_sub(1).and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            PartClass::Head => "Head",
            PartClass::Neck => "Neck",
            PartClass::RShoulder => "RShoulder",
            PartClass::LShoulder => "LShoulder",
            PartClass::RElbow => "RElbow",
            PartClass::LElbow => "LElbow",
            PartClass::RWrist => "RWrist",
            PartClass::LWrist => "LWrist",
            PartClass::RHip => "RHip",
            PartClass::LHip => "LHip",
            PartClass::RKnee => "RKnee",
            PartClass::LKnee => "LKnee",
            PartClass::RAnkle => "RAnkle",
            PartClass::LAnkle => "LAnkle",
        }
    }
}

impl fmt::Display for PartClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PartClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PartClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown part class {s:?}")))
    }
}

/// The 14 classes in processing order, `Head` first.
pub fn chain_order() -> [PartClass; NUM_CLASSES] {
    PartClass::ALL
}

/// Predecessors of `part` in the default table.
pub fn predecessors(part: PartClass) -> &'static [PartClass] {
    default_predecessors(part)
}

/// Opaque candidate identifier, unique within one scene.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct CandidateId(pub u64);

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Image-plane position in (sub-)pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// A detected keypoint hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub id: CandidateId,
    #[serde(rename = "class")]
    pub part: PartClass,
    pub x: f64,
    pub y: f64,
    pub unary: f64,
}

impl Candidate {
    pub fn new(id: u64, part: PartClass, x: f64, y: f64, unary: f64) -> Self {
        Candidate {
            id: CandidateId(id),
            part,
            x,
            y,
            unary,
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(Error::invalid(format!(
                "candidate {}: non-finite coordinates",
                self.id
            )));
        }
        if !(0.0..=1.0).contains(&self.unary) {
            return Err(Error::invalid(format!(
                "candidate {}: unary {} outside [0, 1]",
                self.id, self.unary
            )));
        }
        Ok(())
    }
}

/// Per-class candidate lists for one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Detections {
    by_class: [Vec<Candidate>; NUM_CLASSES],
}

impl Detections {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, candidate: Candidate) {
        self.by_class[candidate.part.slot()].push(candidate);
    }

    pub fn class(&self, part: PartClass) -> &[Candidate] {
        &self.by_class[part.slot()]
    }

    pub fn class_mut(&mut self, part: PartClass) -> &mut Vec<Candidate> {
        &mut self.by_class[part.slot()]
    }

    pub fn len(&self) -> usize {
        self.by_class.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_class.iter().all(Vec::is_empty)
    }

    /// All candidates in chain order, then insertion order.
    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.by_class.iter().flatten()
    }

    /// Checks ranges and id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(self.len());
        for c in self.iter() {
            c.validate()?;
            if !seen.insert(c.id) {
                return Err(Error::invalid(format!("duplicate candidate id {}", c.id)));
            }
        }
        Ok(())
    }
}

impl FromIterator<Candidate> for Detections {
    fn from_iter<I: IntoIterator<Item = Candidate>>(iter: I) -> Self {
        let mut d = Detections::new();
        for c in iter {
            d.push(c);
        }
        d
    }
}

/// Normalized distance of each part from the top of the head, as a fraction
/// of body height.
#[derive(Debug, Clone, PartialEq)]
pub struct AnthropometricTable {
    alpha: [f64; NUM_CLASSES],
    chin_alpha: f64,
}

impl Default for AnthropometricTable {
    fn default() -> Self {
        let mut alpha = [0.0; NUM_CLASSES];
        for part in PartClass::ALL {
            alpha[part.slot()] = default_alpha(part);
        }
        AnthropometricTable {
            alpha,
            chin_alpha: CHIN_ALPHA,
        }
    }
}

fn default_alpha(part: PartClass) -> f64 {
    use PartClass::*;
    match part {
        Head => 0.0,
        Neck => 0.182,
        RShoulder | LShoulder => 0.224,
        RElbow | LElbow => 0.410,
        RWrist | LWrist => 0.556,
        RHip | LHip => 0.481,
        RKnee | LKnee => 0.726,
        RAnkle | LAnkle => 0.972,
    }
}

impl AnthropometricTable {
    pub fn alpha(&self, part: PartClass) -> f64 {
        self.alpha[part.slot()]
    }

    pub fn chin_alpha(&self) -> f64 {
        self.chin_alpha
    }

    /// Builds a table from the defaults with some entries replaced.
    pub fn with_overrides(overrides: &BTreeMap<PartClass, f64>, chin_alpha: Option<f64>) -> Result<Self> {
        let mut table = AnthropometricTable::default();
        for (&part, &a) in overrides {
            table.alpha[part.slot()] = a;
        }
        if let Some(chin) = chin_alpha {
            table.chin_alpha = chin;
        }
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        use PartClass::*;
        for part in PartClass::ALL {
            let a = self.alpha(part);
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::invalid(format!("alpha for {part} = {a} outside [0, 1]")));
            }
        }
        if !(self.chin_alpha > 0.0 && self.chin_alpha <= 1.0) {
            return Err(Error::invalid(format!("chin alpha {} outside (0, 1]", self.chin_alpha)));
        }
        let limbs: [&[PartClass]; 4] = [
            &[RShoulder, RElbow, RWrist],
            &[LShoulder, LElbow, LWrist],
            &[RHip, RKnee, RAnkle],
            &[LHip, LKnee, LAnkle],
        ];
        for limb in limbs {
            for pair in limb.windows(2) {
                if self.alpha(pair[0]) >= self.alpha(pair[1]) {
                    return Err(Error::invalid(format!(
                        "alpha must increase from {} to {}",
                        pair[0], pair[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

fn default_predecessors(part: PartClass) -> &'static [PartClass] {
    use PartClass::*;
    match part {
        Head => &[],
        Neck => &[Head],
        RShoulder => &[Head, Neck],
        LShoulder => &[Head, Neck, RShoulder],
        RElbow => &[Head, Neck, RShoulder],
        LElbow => &[Head, Neck, LShoulder],
        RWrist => &[Head, Neck, RShoulder, RElbow],
        LWrist => &[Head, Neck, LShoulder, LElbow],
        RHip => &[Head, Neck, LShoulder, RShoulder],
        LHip => &[Head, Neck, RShoulder, LShoulder],
        RKnee => &[Head, Neck, RShoulder, LShoulder, RHip],
        LKnee => &[Head, Neck, RShoulder, LShoulder, LHip],
        RAnkle => &[RHip, RKnee],
        LAnkle => &[LHip, LKnee],
    }
}

/// Which already-assigned classes are consulted when scoring a part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredecessorTable {
    preds: [Vec<PartClass>; NUM_CLASSES],
}

impl Default for PredecessorTable {
    fn default() -> Self {
        let preds = std::array::from_fn(|i| default_predecessors(PartClass::ALL[i]).to_vec());
        PredecessorTable { preds }
    }
}

impl PredecessorTable {
    /// Every earlier class is a predecessor. Equivalent to averaging over the
    /// whole partial cluster.
    pub fn full_chain() -> Self {
        let preds = std::array::from_fn(|i| PartClass::ALL[..i].to_vec());
        PredecessorTable { preds }
    }

    pub fn new(preds: BTreeMap<PartClass, Vec<PartClass>>) -> Result<Self> {
        let mut table = PredecessorTable {
            preds: Default::default(),
        };
        for (part, list) in preds {
            table.preds[part.slot()] = list;
        }
        table.validate()?;
        Ok(table)
    }

    pub fn get(&self, part: PartClass) -> &[PartClass] {
        &self.preds[part.slot()]
    }

    /// Every predecessor must come strictly earlier in the chain.
    pub fn validate(&self) -> Result<()> {
        for part in PartClass::ALL {
            for &p in self.get(part) {
                if p >= part {
                    return Err(Error::invalid(format!(
                        "predecessor {p} of {part} is not earlier in the chain"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Maximum image-plane displacement of `part` from its head top, given the
/// head length (top to chin) in pixels.
pub fn expected_radius(part: PartClass, head_length_px: f64, table: &AnthropometricTable) -> Result<f64> {
    if !head_length_px.is_finite() || head_length_px <= 0.0 {
        return Err(Error::invalid(format!(
            "head length must be positive, got {head_length_px}"
        )));
    }
    Ok(head_length_px / table.chin_alpha() * table.alpha(part))
}
