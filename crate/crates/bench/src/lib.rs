//! Shared benchmark fixtures.

use greedypose::synthgen::{pad_detections, GeometricAssociation};
use greedypose::{generate_scene, geometric_association, render_detections, Detections, NoiseConfig};

pub struct Fixture {
    pub detections: Detections,
    pub assoc: GeometricAssociation,
}

/// A scene of `people` persons padded with uniform clutter to `per_class`
/// candidates in every class.
pub fn padded_scene(people: usize, per_class: usize, seed: u64) -> Fixture {
    let noise = NoiseConfig {
        spurious_per_class: 0,
        ..Default::default()
    };
    let gt = generate_scene(people, &noise, seed).expect("valid noise");
    let mut detections = render_detections(&gt, &noise, seed).expect("valid scene");
    pad_detections(&mut detections, per_class, &gt.image, noise.unary_spurious_range, seed);
    let assoc = geometric_association(gt.nominal_head_length(&noise), &Default::default(), noise.pairwise_sigma)
        .expect("positive head length");
    Fixture { detections, assoc }
}

#[cfg(test)]
mod tests {
    use super::*;
    use greedypose::PartClass;

    #[test]
    fn padding_reaches_target() {
        let f = padded_scene(3, 50, 1);
        for c in PartClass::ALL {
            assert_eq!(f.detections.class(c).len(), 50);
        }
    }
}
