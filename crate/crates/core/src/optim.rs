//! Gradient-based optimization: Adam, rotation restart sampling, the
//! per-instance pose fit, exemplar selection, the joint arrangement
//! optimization, and the empirical mean-scale loop.
//!
//! Everything here is deterministic for a fixed seed: restart sampling uses a
//! seeded ChaCha stream, parallel maps collect in index order, and reductions
//! break ties by the lower index.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Rotation6D, TriMesh, Vec3};
use crate::geom::Camera;
use crate::interaction::{CategoryTable, RestartBias};
use crate::losses::{
    fit_loss, fit_score, joint_loss, CategoryStats, FitTarget, HumanRenderCache, LossBreakdown,
    LossWeights, HUMAN_SCALE_WEIGHT,
};
use crate::raster::DEFAULT_SHARPNESS;
use crate::scene::{pack_params, unpack_params, ObjectInstance, Observations, Scene};

// ---------------------------------------------------------------------------
// Adam

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr,
        }
    }

    /// One update in place. Parameters whose gradient is not finite are left
    /// untouched (moments included) and a warning is logged.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step as i32);
        let c2 = 1.0 - BETA2.powi(self.step as i32);
        for k in 0..params.len() {
            let g = grads[k];
            if !g.is_finite() {
                log::warn!("non-finite gradient for parameter {k} at step {}; skipped", self.step);
                continue;
            }
            self.m[k] = BETA1 * self.m[k] + (1.0 - BETA1) * g;
            self.v[k] = BETA2 * self.v[k] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

// ---------------------------------------------------------------------------
// Schedules

/// Iteration budgets and learning rate for both optimization stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSchedule {
    pub lr: f64,
    pub iters_fit: usize,
    pub iters_joint: usize,
    pub restarts: usize,
    /// How many of the best-scored restarts get full Adam refinement.
    pub restarts_refined: usize,
    /// Resolution (longer side) of the cheap render used to score restarts.
    pub score_resolution: u32,
}

impl Default for FitSchedule {
    fn default() -> Self {
        FitSchedule {
            lr: 1e-3,
            iters_fit: 100,
            iters_joint: 400,
            restarts: 10_000,
            restarts_refined: 20,
            score_resolution: 64,
        }
    }
}

// ---------------------------------------------------------------------------
// Rotation restarts

/// Elevation bound, in degrees, for the upright restart bias.
pub const UPRIGHT_ELEVATION_DEG: f64 = 30.0;

/// `n` rotations for restart initialization. `bias = None` draws uniformly
/// over SO(3) via unit quaternions; `Upright` draws azimuth in [0°, 360°),
/// elevation in ±[`UPRIGHT_ELEVATION_DEG`], roll 0.
pub fn sample_rotations(n: usize, bias: RestartBias, seed: u64) -> Vec<Rotation6D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let m = match bias {
            RestartBias::None => {
                let u1: f64 = rng.random();
                let u2: f64 = rng.random();
                let u3: f64 = rng.random();
                let (s1, c1) = (TAU * u2).sin_cos();
                let (s2, c2) = (TAU * u3).sin_cos();
                let a = (1.0 - u1).sqrt();
                let b = u1.sqrt();
                let q = UnitQuaternion::from_quaternion(Quaternion::new(
                    a * c1,
                    a * s1,
                    b * s2,
                    b * c2,
                ));
                q.to_rotation_matrix().into_inner()
            }
            RestartBias::Upright => {
                let az = rng.random_range(0.0..TAU);
                let el = rng
                    .random_range(-UPRIGHT_ELEVATION_DEG..UPRIGHT_ELEVATION_DEG)
                    .to_radians();
                let yaw = Rotation3::from_axis_angle(&Vector3::y_axis(), az);
                let pitch = Rotation3::from_axis_angle(&Vector3::x_axis(), el);
                (yaw * pitch).into_inner()
            }
        };
        out.push(Rotation6D::from_matrix(&m));
    }
    out
}

// ---------------------------------------------------------------------------
// Translation initialization

/// Initial translation for the pose fit: back-project the mask centroid and
/// pick the depth at which the mean-scaled mesh diagonal projects to the
/// mask's bounding-box diagonal. Returns the *parameter* t; the world-space
/// position is `mean_scale * t`.
pub fn init_translation(
    mask: &crate::raster::Mask,
    cam: &Camera,
    mesh: &TriMesh,
    mean_scale: f64,
) -> Result<Vec3> {
    if !(mean_scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mean scale must be positive (got {mean_scale})"
        )));
    }
    let (cx, cy) = mask.fg_centroid()?;
    let (x0, y0, x1, y1) = mask.fg_bbox()?;
    let half_span = cam.width.max(cam.height) as f64 * 0.5;
    let dx = (x1 - x0 + 1) as f64;
    let dy = (y1 - y0 + 1) as f64;
    let diag_ndc = (dx * dx + dy * dy).sqrt() / half_span;
    let diag_world = mean_scale * mesh.bbox_diagonal()?;
    let z = cam.f * diag_world / diag_ndc;
    let (u, v) = cam.ndc_from_pixel(cx, cy);
    let p = Vec3::new(u * z / cam.f, v * z / cam.f, z);
    Ok(p / mean_scale)
}

// ---------------------------------------------------------------------------
// Per-instance pose fit

/// Result of fitting one object instance to its mask.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub rotation: Rotation6D,
    pub translation: Vec3,
    /// Objective value of the returned pose at the working resolution.
    pub loss: f64,
    /// Low-resolution scores of every restart, in sampling order.
    pub scores: Vec<f64>,
}

fn object_from_params(
    mesh: &Arc<TriMesh>,
    category: &str,
    exemplar: usize,
    p: &[f64],
) -> ObjectInstance {
    ObjectInstance {
        category: category.to_string(),
        exemplar,
        mesh: Arc::clone(mesh),
        scale: p[0].exp(),
        rotation: Rotation6D([p[1], p[2], p[3], p[4], p[5], p[6]]),
        translation: Vec3::new(p[7], p[8], p[9]),
    }
}

/// Fits rotation and translation of `mesh` to the target mask.
///
/// All `schedule.restarts` sampled rotations share the back-projected initial
/// translation and are scored with a cheap low-resolution render; the
/// `schedule.restarts_refined` best scores then get full Adam refinement at
/// the working resolution, and the best iterate ever seen wins. The intrinsic
/// scale is frozen during the fit (the silhouette is invariant to it).
pub fn fit_object_pose(
    mesh: &Arc<TriMesh>,
    category: &str,
    exemplar: usize,
    target: &FitTarget,
    cam: &Camera,
    schedule: &FitSchedule,
    bias: RestartBias,
    mean_scale: f64,
    weights: &LossWeights,
    seed: u64,
) -> Result<FitOutcome> {
    if schedule.restarts == 0 {
        return Err(Error::InvalidParameter("need at least one restart".into()));
    }
    let t0 = init_translation(&target.mask, cam, mesh, mean_scale)?;
    let rotations = sample_rotations(schedule.restarts, bias, seed);

    // Score every restart cheaply. If the mask vanishes at the score
    // resolution (tiny instances), fall back to the working resolution.
    let cam_lo = cam.at_resolution(schedule.score_resolution);
    let target_lo = FitTarget::new(
        target.mask.downsample_to(schedule.score_resolution),
        target.indicator.downsample_to(schedule.score_resolution),
    );
    let (score_cam, score_target) = match &target_lo {
        Ok(t) => (&cam_lo, t),
        Err(_) => (cam, target),
    };
    let base = [mean_scale.ln(), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, t0.x, t0.y, t0.z];
    let scores: Vec<f64> = rotations
        .par_iter()
        .map(|r| {
            let mut p = base;
            p[1..7].copy_from_slice(&r.0);
            let obj = object_from_params(mesh, category, exemplar, &p);
            fit_score(
                &obj,
                score_cam,
                score_target,
                weights.chamfer_enabled,
                weights.offscreen_weight,
                DEFAULT_SHARPNESS,
            )
            .unwrap_or(f64::INFINITY)
        })
        .collect();

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order.truncate(schedule.restarts_refined.max(1));

    // Full-resolution Adam refinement of the shortlisted candidates.
    let refined: Vec<Result<(f64, [f64; 10])>> = order
        .par_iter()
        .map(|&idx| {
            let mut p = base;
            p[1..7].copy_from_slice(&rotations[idx].0);
            let mut adam = AdamState::new(10, schedule.lr);
            let mut best = (f64::INFINITY, p);
            for _ in 0..=schedule.iters_fit {
                let obj = object_from_params(mesh, category, exemplar, &p);
                let (value, mut grad) = fit_loss(
                    &obj,
                    cam,
                    target,
                    weights.chamfer_enabled,
                    weights.offscreen_weight,
                    DEFAULT_SHARPNESS,
                )?;
                if value < best.0 {
                    best = (value, p);
                }
                grad[0] = 0.0; // scale frozen during the fit
                adam.step(&mut p, &grad);
            }
            Ok(best)
        })
        .collect();

    let mut winner: Option<(f64, [f64; 10])> = None;
    for r in refined {
        let (value, p) = r?;
        if winner.map_or(true, |(w, _)| value < w) {
            winner = Some((value, p));
        }
    }
    let (loss, p) = winner.expect("at least one candidate refined");
    Ok(FitOutcome {
        rotation: Rotation6D([p[1], p[2], p[3], p[4], p[5], p[6]]),
        translation: Vec3::new(p[7], p[8], p[9]),
        loss,
        scores,
    })
}

/// Fits every exemplar of a category and returns the index with the lowest
/// final loss (ties break toward the lower index).
pub fn select_exemplar(
    exemplars: &[Arc<TriMesh>],
    category: &str,
    target: &FitTarget,
    cam: &Camera,
    schedule: &FitSchedule,
    bias: RestartBias,
    mean_scale: f64,
    weights: &LossWeights,
    seed: u64,
) -> Result<(usize, FitOutcome)> {
    if exemplars.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "category `{category}` has no exemplars"
        )));
    }
    let mut best: Option<(usize, FitOutcome)> = None;
    for (k, mesh) in exemplars.iter().enumerate() {
        let outcome = fit_object_pose(
            mesh, category, k, target, cam, schedule, bias, mean_scale, weights, seed,
        )?;
        if best.as_ref().map_or(true, |(_, b)| outcome.loss < b.loss) {
            best = Some((k, outcome));
        }
    }
    Ok(best.expect("nonempty exemplar list"))
}

// ---------------------------------------------------------------------------
// Joint arrangement optimization

#[derive(Debug, Clone)]
pub struct ArrangeOutcome {
    pub scene: Scene,
    /// Per-iteration loss breakdown as CSV (header + one row per evaluation).
    pub log: String,
    pub best_loss: f64,
    pub best_iter: usize,
}

/// Optimizes all instances jointly: human intrinsic scales plus object
/// scales, rotations, and translations. Interactions are re-detected every
/// iteration; the boundary (chamfer) term stays off in this stage. Returns
/// the best-seen iterate, not the last.
pub fn optimize_arrangement(
    scene: &Scene,
    obs: &Observations,
    table: &CategoryTable,
    stats: &CategoryStats,
    weights: &LossWeights,
    schedule: &FitSchedule,
) -> Result<ArrangeOutcome> {
    let mut log = String::from(LossBreakdown::CSV_HEADER);
    log.push('\n');
    if scene.n_instances() == 0 {
        return Ok(ArrangeOutcome {
            scene: scene.clone(),
            log,
            best_loss: 0.0,
            best_iter: 0,
        });
    }
    let mut weights = weights.clone();
    weights.chamfer_enabled = false;
    let cache = HumanRenderCache::build(scene, &obs.camera, DEFAULT_SHARPNESS)?;
    let mut cur = scene.clone();
    let (mut params, layout) = pack_params(&cur);
    let mut adam = AdamState::new(params.len(), schedule.lr);
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    for i in 0..=schedule.iters_joint {
        let eval = joint_loss(&cur, obs, table, stats, &weights, &cache, DEFAULT_SHARPNESS)?;
        log.push_str(&eval.breakdown.csv_row(i));
        log.push('\n');
        if eval.breakdown.total < best.0 {
            best = (eval.breakdown.total, params.clone(), i);
        }
        if i == schedule.iters_joint {
            break;
        }
        adam.step(&mut params, &eval.grad);
        unpack_params(&mut cur, &layout, &params);
    }
    unpack_params(&mut cur, &layout, &best.1);
    Ok(ArrangeOutcome {
        scene: cur,
        log,
        best_loss: best.0,
        best_iter: best.2,
    })
}

// ---------------------------------------------------------------------------
// Empirical mean-scale loop

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges, ascending.
    pub edges: Vec<f64>,
    pub counts: Vec<u32>,
}

/// Fixed-width histogram over the sample range.
pub fn histogram(samples: &[f64], bins: usize) -> Histogram {
    assert!(bins > 0 && !samples.is_empty());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &s in samples {
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0u32; bins];
    for &s in samples {
        let b = (((s - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram { edges, counts }
}

#[derive(Debug, Clone)]
pub struct ScaleRound {
    /// Mean scale per category after this round (absent categories carry the
    /// previous value forward).
    pub means: BTreeMap<String, f64>,
    pub histograms: BTreeMap<String, Histogram>,
}

/// Alternates joint optimization over a dataset with re-estimation of the
/// per-category mean scales. Each round re-initializes every object to the
/// current category mean (humans to 1), optimizes every scene, and replaces
/// the means with the empirical means of the optimized scales.
pub fn empirical_scale_loop(
    scenes: &[(Scene, Observations)],
    table: &CategoryTable,
    weights: &LossWeights,
    schedule: &FitSchedule,
    rounds: usize,
) -> Result<Vec<ScaleRound>> {
    let mut means: BTreeMap<String, f64> = table
        .iter()
        .map(|(k, v)| (k.clone(), v.mean_scale))
        .collect();
    let mut out = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let stats = CategoryStats {
            mean_scales: means.clone(),
            human_weight: HUMAN_SCALE_WEIGHT,
        };
        let per_scene: Vec<Result<Vec<(String, f64)>>> = scenes
            .par_iter()
            .map(|(scene, obs)| {
                let mut s = scene.clone();
                for h in &mut s.humans {
                    h.scale = 1.0;
                }
                for o in &mut s.objects {
                    o.scale = *means
                        .get(&o.category)
                        .ok_or_else(|| Error::UnknownCategory(o.category.clone()))?;
                }
                let done = optimize_arrangement(&s, obs, table, &stats, weights, schedule)?;
                Ok(done
                    .scene
                    .objects
                    .iter()
                    .map(|o| (o.category.clone(), o.scale))
                    .collect())
            })
            .collect();
        let mut per_cat: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in per_scene {
            for (c, v) in r? {
                per_cat.entry(c).or_default().push(v);
            }
        }
        let mut hists = BTreeMap::new();
        for (c, vals) in &per_cat {
            means.insert(c.clone(), vals.iter().sum::<f64>() / vals.len() as f64);
            hists.insert(c.clone(), histogram(vals, 12));
        }
        out.push(ScaleRound {
            means: means.clone(),
            histograms: hists,
        });
    }
    Ok(out)
}
