//! Runtime scaling benchmark and ablation ladder over synthetic scenes.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::assignment::{assemble, AssignmentResult};
use crate::config::{AssignmentConfig, Tables};
use crate::error::{Error, Result};
use crate::eval::{pckh, PckhReport};
use crate::model::Detections;
use crate::synthgen::{
    generate_scene, geometric_association, pad_detections, render_detections, GeometricAssociation,
    NoiseConfig, SceneGroundTruth,
};

/// Measures one unit of work.
pub trait Clock {
    fn measure(&mut self, n_j: usize, work: &mut dyn FnMut()) -> Duration;
}

/// Real wall-clock timing.
#[derive(Debug, Clone, Copy, Default)]
pub struct WallClock;

impl Clock for WallClock {
    fn measure(&mut self, _n_j: usize, work: &mut dyn FnMut()) -> Duration {
        let start = Instant::now();
        work();
        start.elapsed()
    }
}

/// Reports a duration computed from `n_j` without running the work; used to
/// validate the harness itself.
pub struct SyntheticClock<F>(pub F);

impl<F: FnMut(usize) -> Duration> Clock for SyntheticClock<F> {
    fn measure(&mut self, n_j: usize, _work: &mut dyn FnMut()) -> Duration {
        (self.0)(n_j)
    }
}

/// Least-squares slope of `ln(y)` against `ln(x)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, y)| (x.ln(), y.max(1e-12).ln()))
        .collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n_j: usize,
    pub median_seconds: f64,
    pub trial_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub n_people: usize,
    pub trials: usize,
    pub seed: u64,
    pub rows: Vec<ScalingRow>,
    pub slope: f64,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n_j,median_seconds\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:.9}\n", r.n_j, r.median_seconds));
        }
        s
    }
}

struct Workload {
    dets: Detections,
    assoc: GeometricAssociation,
}

fn scaling_workload(n_j: usize, n_people: usize, seed: u64) -> Result<Workload> {
    let noise = NoiseConfig {
        spurious_per_class: 0,
        ..Default::default()
    };
    let gt = generate_scene(n_people, &noise, seed)?;
    let mut dets = render_detections(&gt, &noise, seed)?;
    pad_detections(&mut dets, n_j, &gt.image, noise.unary_spurious_range, seed);
    let assoc = geometric_association(
        gt.nominal_head_length(&noise),
        &Default::default(),
        noise.pairwise_sigma,
    )?;
    Ok(Workload { dets, assoc })
}

/// Times `assemble` on scenes padded to `n_j` candidates per class and fits
/// the log-log slope of median time against `n_j`.
pub fn scaling_benchmark(
    nj_grid: &[usize],
    n_people: usize,
    trials: usize,
    seed: u64,
    clock: &mut dyn Clock,
) -> Result<ScalingReport> {
    if nj_grid.len() < 3 {
        return Err(Error::invalid("scaling benchmark needs at least 3 grid points"));
    }
    if trials == 0 {
        return Err(Error::invalid("scaling benchmark needs at least one trial"));
    }
    if nj_grid.contains(&0) {
        return Err(Error::invalid("grid sizes must be positive"));
    }
    let config = AssignmentConfig {
        rng_seed: seed,
        ..Default::default()
    };
    let tables = Tables::default();

    // Generate everything up front so only assembly is timed.
    let mut workloads = Vec::with_capacity(nj_grid.len());
    for &n_j in nj_grid {
        let mut per_trial = Vec::with_capacity(trials);
        for t in 0..trials {
            per_trial.push(scaling_workload(n_j, n_people, seed.wrapping_add(t as u64))?);
        }
        workloads.push(per_trial);
    }

    let mut failure = None;
    if let Some(w) = workloads.first().and_then(|w| w.first()) {
        // Warm-up, untimed.
        assemble(&w.dets, &w.assoc, &config, &tables)?;
    }
    let mut rows = Vec::with_capacity(nj_grid.len());
    for (&n_j, per_trial) in nj_grid.iter().zip(&workloads) {
        let mut times = Vec::with_capacity(trials);
        for w in per_trial {
            let mut work = || {
                if let Err(e) = assemble(&w.dets, &w.assoc, &config, &tables) {
                    failure.get_or_insert(e);
                }
            };
            times.push(clock.measure(n_j, &mut work).as_secs_f64());
        }
        let trial_seconds = times.clone();
        rows.push(ScalingRow {
            n_j,
            median_seconds: median(&mut times),
            trial_seconds,
        });
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let slope = loglog_slope(
        &rows
            .iter()
            .map(|r| (r.n_j as f64, r.median_seconds))
            .collect::<Vec<_>>(),
    );
    Ok(ScalingReport {
        n_people,
        trials,
        seed,
        rows,
        slope,
    })
}

/// A scene with its detections and association model.
pub struct ValidationScene {
    pub gt: SceneGroundTruth,
    pub detections: Detections,
    pub assoc: GeometricAssociation,
}

/// `n_scenes` scenes with person counts drawn from `people` (inclusive).
pub fn validation_set(
    n_scenes: usize,
    people: (usize, usize),
    noise: &NoiseConfig,
    seed: u64,
) -> Result<Vec<ValidationScene>> {
    let span = people.1.saturating_sub(people.0) + 1;
    (0..n_scenes)
        .map(|i| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let n = people.0 + (s as usize).wrapping_mul(2_654_435_761) % span;
            let gt = generate_scene(n, noise, s)?;
            let detections = render_detections(&gt, noise, s)?;
            let assoc = geometric_association(gt.nominal_head_length(noise), &Default::default(), noise.pairwise_sigma)?;
            Ok(ValidationScene { gt, detections, assoc })
        })
        .collect()
}

/// The cumulative configuration ladder: baseline, then clustering, gating,
/// predecessor subsets, spawning and suppression switched on in turn.
pub fn ablation_ladder(base: &AssignmentConfig) -> Vec<(&'static str, AssignmentConfig)> {
    let mut c = AssignmentConfig {
        enable_candidate_clustering: false,
        enable_proximal_gating: false,
        enable_predecessor_subset: false,
        enable_spawning: false,
        enable_suppression: false,
        ..base.clone()
    };
    let mut rows = vec![("baseline", c.clone())];
    c.enable_candidate_clustering = true;
    rows.push(("+candidate clustering", c.clone()));
    c.enable_proximal_gating = true;
    rows.push(("+proximal clusters", c.clone()));
    c.enable_predecessor_subset = true;
    rows.push(("+predecessor subset", c.clone()));
    c.enable_spawning = true;
    rows.push(("+spawning", c.clone()));
    c.enable_suppression = true;
    rows.push(("+hallucination suppression", c.clone()));
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub configuration: String,
    pub pckh: PckhReport,
    /// Median over scenes of the per-scene assembly time.
    pub median_seconds: f64,
}

/// Runs one configuration over a scene set; returns pooled PCKh at `tau`
/// and the median per-scene time (best of `reps` runs per scene).
pub fn evaluate_config(
    scenes: &[ValidationScene],
    config: &AssignmentConfig,
    tables: &Tables,
    tau: f64,
    reps: usize,
) -> Result<(PckhReport, f64)> {
    let mut reports = Vec::with_capacity(scenes.len());
    let mut times = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let mut best = f64::INFINITY;
        let mut result: Option<AssignmentResult> = None;
        for _ in 0..reps.max(1) {
            let start = Instant::now();
            let r = assemble(&scene.detections, &scene.assoc, config, tables)?;
            best = best.min(start.elapsed().as_secs_f64());
            result = Some(r);
        }
        times.push(best);
        reports.push(pckh(&result.unwrap().clusters, &scene.gt, tau)?);
    }
    let pooled = PckhReport::combine(&reports).ok_or_else(|| Error::invalid("empty scene set"))?;
    Ok((pooled, median(&mut times)))
}

/// One row per rung of [`ablation_ladder`].
pub fn ablation_suite(scenes: &[ValidationScene], config: &AssignmentConfig) -> Result<Vec<AblationRow>> {
    let tables = Tables::default();
    ablation_ladder(config)
        .into_iter()
        .map(|(name, c)| {
            let (pckh, median_seconds) = evaluate_config(scenes, &c, &tables, 0.5, 3)?;
            Ok(AblationRow {
                configuration: name.to_string(),
                pckh,
                median_seconds,
            })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("configuration,mean_pckh,precision,recall,median_seconds\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.9}\n",
            r.configuration, r.pckh.mean, r.pckh.precision, r.pckh.recall, r.median_seconds
        ));
    }
    s
}
