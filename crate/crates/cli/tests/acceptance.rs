//! Acceptance suite: one verdict line per criterion, custom harness so the
//! lines always print. Run everything with `cargo test --test acceptance`,
//! or a subset by number: `cargo test --test acceptance -- 2 5`.
//!
//! Criteria (all must hold):
//!  1. analytic gradients of every loss term match central finite differences
//!  2. pose-fit round trip on each shipped exemplar, 1,000 restarts, 128 px
//!  3. round trip under 30% mask occlusion by a fake occluder instance
//!  4. hard renders are scale-invariant pixel-exact; the interaction and
//!     scale priors resolve the scale-depth ambiguity on a person+bat scene
//!  5. the ordinal depth term repairs a swapped depth ordering
//!  6. collision resolution on/off contrast
//!  7. the empirical scale loop recovers a 1.3x category size over a
//!     50-scene population, through the CLI with --jobs 4
//!  8. the default configuration dump matches a golden text
//!  9. `fit` and `arrange` produce byte-identical CSVs across reruns
//! 10. the built-in category table matches golden data

use std::collections::BTreeMap;
use std::error::Error;
use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use scenefit_core::assets::{
    builtin::{builtin_human, HumanPose},
    quat_from_rotation, save_mask, save_obj, save_parts, visibility_masks, write_library,
    MeshLibrary,
};
use scenefit_core::geom::{geodesic_angle, Camera, Rotation6D, TriMesh, Vec3};
use scenefit_core::interaction::{
    default_category_table, CategoryConfig, CategoryTable, PartPair, RestartBias,
};
use scenefit_core::losses::{
    fit_loss, joint_loss, offscreen_penalty, CategoryStats, FitTarget, HumanRenderCache,
    LossBreakdown, LossWeights,
};
use scenefit_core::optim::{
    fit_object_pose, optimize_arrangement, sample_rotations, FitSchedule,
};
use scenefit_core::raster::{
    occlusion_indicator, render_depth, render_silhouette, render_silhouette_hard, threshold_mask,
    Mask, DEFAULT_SHARPNESS,
};
use scenefit_core::scene::{
    pack_params, unpack_params, HumanInstance, Observations, ObjectInstance, Scene,
};

type Check = Result<String, Box<dyn Error>>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !($cond) {
            return Err(format!($($arg)+).into());
        }
    };
}

fn main() {
    let wanted: Vec<String> = std::env::args().skip(1).collect();
    let checks: [(usize, &str, fn() -> Check); 10] = [
        (1, "loss gradients match finite differences", c1_gradients),
        (2, "pose-fit round trip per category", c2_round_trip),
        (3, "pose fit under 30% occlusion", c3_occlusion),
        (4, "scale-depth ambiguity resolved by interaction", c4_scale_depth),
        (5, "ordinal depth repairs swapped ordering", c5_ordinal_depth),
        (6, "collision term on/off contrast", c6_collision),
        (7, "empirical scale loop recovers 1.3x sizes", c7_scale_loop),
        (8, "default configuration dump golden", c8_defaults_golden),
        (9, "fit/arrange byte-identical across reruns", c9_determinism),
        (10, "category table golden data", c10_category_table),
    ];
    let mut failed = 0;
    for (n, name, f) in checks {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == &n.to_string()) {
            continue;
        }
        let t = Instant::now();
        match f() {
            Ok(detail) => println!(
                "criterion {n:2} ({name}): PASS [{:.1}s]{}{detail}",
                t.elapsed().as_secs_f64(),
                if detail.is_empty() { "" } else { " " },
            ),
            Err(e) => {
                failed += 1;
                println!(
                    "criterion {n:2} ({name}): FAIL [{:.1}s] {e}",
                    t.elapsed().as_secs_f64()
                );
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// shared fixtures

const BOX_FACES: [[usize; 3]; 12] = [
    [0, 1, 2],
    [1, 3, 2],
    [4, 6, 5],
    [5, 6, 7],
    [0, 2, 4],
    [2, 6, 4],
    [1, 5, 3],
    [3, 5, 7],
    [0, 4, 1],
    [1, 4, 5],
    [2, 3, 6],
    [3, 7, 6],
];

/// Axis-aligned box centered on the origin; vertex order x fastest, then y,
/// then z.
fn box_mesh(half: Vec3) -> TriMesh {
    let mut verts = Vec::with_capacity(8);
    for &z in &[-half.z, half.z] {
        for &y in &[-half.y, half.y] {
            for &x in &[-half.x, half.x] {
                verts.push(Vec3::new(x, y, z));
            }
        }
    }
    TriMesh::new(verts, BOX_FACES.to_vec()).unwrap()
}

fn rot_euler(roll: f64, pitch: f64, yaw: f64) -> Rotation6D {
    Rotation6D::from_matrix(&nalgebra::Rotation3::from_euler_angles(roll, pitch, yaw).into_inner())
}

fn part_centroid(mesh: &TriMesh, verts: &[Vec3], name: &str) -> Result<Vec3, Box<dyn Error>> {
    let ids = mesh.part(name)?;
    let mut c = Vec3::zeros();
    for &i in ids {
        c += verts[i];
    }
    Ok(c / ids.len() as f64)
}

/// A person gripping a bat: the bat's handle centroid sits exactly at the
/// palms under the given true scale.
fn grip_scene(
    lib: &MeshLibrary,
    human_mesh: &Arc<TriMesh>,
    cam: Camera,
    sigma: f64,
    tx: f64,
    yaw: f64,
    true_scale: f64,
) -> Result<Scene, Box<dyn Error>> {
    let human = HumanInstance {
        mesh: Arc::clone(human_mesh),
        scale: 1.0,
        tx,
        ty: 0.0,
        sigma,
    };
    let world = human.world_vertices(cam.f)?;
    let l = part_centroid(human_mesh, &world, "L Palm")?;
    let r = part_centroid(human_mesh, &world, "R Palm")?;
    let palms = (l + r) / 2.0;

    let bat = lib.exemplar("bat", 0)?;
    let handle = part_centroid(bat, &bat.vertices, "Handle")?;
    let m = nalgebra::Rotation3::from_euler_angles(0.25, yaw, -0.5).into_inner();
    let mut scene = Scene {
        camera: cam,
        humans: vec![human],
        objects: vec![ObjectInstance {
            category: "bat".into(),
            exemplar: 0,
            mesh: Arc::clone(bat),
            scale: true_scale,
            rotation: Rotation6D::from_matrix(&m),
            translation: palms / true_scale - m * handle,
        }],
        masks: vec![],
    };
    scene.masks = visibility_masks(&scene)?;
    Ok(scene)
}

fn run_bin(args: &[&str]) -> Result<std::process::Output, Box<dyn Error>> {
    let out = Command::new(env!("CARGO_BIN_EXE_scenefit"))
        .args(args)
        .output()?;
    ensure!(
        out.status.success(),
        "scenefit {:?} exited {:?}: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(out)
}

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness

struct GradFixture {
    scene: Scene,
    obs: Observations,
    table: CategoryTable,
    stats: CategoryStats,
}

/// One human and two objects, 36 faces total, on a 64x64 image. Targets come
/// from a shifted copy of the arrangement so every image-space term has a
/// nonzero residual; object A interpenetrates the person so the collision
/// term is live.
fn grad_fixture(part_pairs: bool) -> Result<GradFixture, Box<dyn Error>> {
    let cam = Camera::normalized(64, 64)?;
    let mut hmesh = box_mesh(Vec3::new(0.22, 0.60, 0.14));
    hmesh.add_part("L Palm", (0..8).collect())?;
    hmesh.add_part("R Palm", vec![1, 3, 5, 7])?;
    let human = HumanInstance {
        mesh: Arc::new(hmesh),
        scale: 1.0,
        tx: 0.05,
        ty: 0.02,
        sigma: 0.5,
    };

    let mut amesh = box_mesh(Vec3::new(0.16, 0.09, 0.12));
    amesh.add_part("Handle", (0..8).collect())?;
    let a = ObjectInstance {
        category: "widget".into(),
        exemplar: 0,
        mesh: Arc::new(amesh),
        scale: 1.1,
        rotation: rot_euler(0.3, 0.2, 0.1),
        translation: Vec3::new(0.27, 0.09, 2.0),
    };
    let b = ObjectInstance {
        category: "chunk".into(),
        exemplar: 0,
        mesh: Arc::new(box_mesh(Vec3::new(0.2, 0.1, 0.15))),
        scale: 0.9,
        rotation: rot_euler(-0.2, 0.4, 0.15),
        translation: Vec3::new(0.2, 0.04, 2.6),
    };
    let mut scene = Scene {
        camera: cam,
        humans: vec![human],
        objects: vec![a, b],
        masks: vec![],
    };
    let mut target = scene.clone();
    target.humans[0].sigma = 0.47;
    target.objects[0].translation += Vec3::new(0.05, -0.04, 0.25);
    target.objects[1].translation += Vec3::new(-0.06, 0.03, -0.2);
    scene.masks = visibility_masks(&target)?;
    let obs = Observations::prepare(&scene, 64)?;

    let pairs = if part_pairs {
        vec![
            PartPair::new("Handle", "L Palm"),
            PartPair::new("Handle", "R Palm"),
        ]
    } else {
        vec![]
    };
    let mut table = CategoryTable::new();
    table.insert(
        "widget".into(),
        CategoryConfig {
            coarse_xy_expand: 0.5,
            fine_xy_expand: 2.5,
            z_depth_threshold: 5.0,
            part_pairs: pairs,
            mean_scale: 1.0,
            restart_bias: RestartBias::None,
        },
    );
    table.insert(
        "chunk".into(),
        CategoryConfig {
            coarse_xy_expand: 0.5,
            fine_xy_expand: 0.0,
            z_depth_threshold: 5.0,
            part_pairs: vec![],
            mean_scale: 1.25,
            restart_bias: RestartBias::None,
        },
    );
    let stats = CategoryStats::from_table(&table);
    Ok(GradFixture {
        scene,
        obs,
        table,
        stats,
    })
}

/// Two overlapping cards whose segmentation says B is in front while the
/// evaluated parameters put A in front: every overlap pixel violates the
/// ordering with a 0.4 m gap, far from the finite-difference step.
fn depth_fixture() -> Result<GradFixture, Box<dyn Error>> {
    let cam = Camera::normalized(64, 64)?;
    let card = Arc::new(box_mesh(Vec3::new(0.30, 0.20, 0.02)));
    let make = |rot: Rotation6D, t: Vec3| ObjectInstance {
        category: "card".into(),
        exemplar: 0,
        mesh: Arc::clone(&card),
        scale: 1.0,
        rotation: rot,
        translation: t,
    };
    let mut scene = Scene {
        camera: cam,
        humans: vec![],
        objects: vec![
            make(rot_euler(0.05, -0.1, 0.03), Vec3::new(-0.08, 0.0, 2.55)),
            make(rot_euler(-0.04, 0.08, -0.02), Vec3::new(0.08, 0.03, 2.95)),
        ],
        masks: vec![],
    };
    let mut target = scene.clone();
    target.objects[0].translation.z = 3.0;
    target.objects[1].translation.z = 2.6;
    scene.masks = visibility_masks(&target)?;
    let obs = Observations::prepare(&scene, 64)?;
    let mut table = CategoryTable::new();
    table.insert(
        "card".into(),
        CategoryConfig {
            coarse_xy_expand: 0.0,
            fine_xy_expand: 0.0,
            z_depth_threshold: 10.0,
            part_pairs: vec![],
            mean_scale: 1.0,
            restart_bias: RestartBias::None,
        },
    );
    let stats = CategoryStats::from_table(&table);
    Ok(GradFixture {
        scene,
        obs,
        table,
        stats,
    })
}

fn grads_match(an: f64, fd: f64) -> bool {
    let scale = an.abs().max(fd.abs());
    scale < 1e-7 || (an - fd).abs() < 1e-2 * scale
}

/// Central finite differences of the joint objective over every packed
/// parameter against the analytic gradient. Returns (matching, total).
fn fd_joint(
    fx: &GradFixture,
    weights: &LossWeights,
    term: &str,
    pick: fn(&LossBreakdown) -> f64,
) -> Result<(usize, usize), Box<dyn Error>> {
    let cache = HumanRenderCache::build(&fx.scene, &fx.obs.camera, DEFAULT_SHARPNESS)?;
    let eval = joint_loss(
        &fx.scene, &fx.obs, &fx.table, &fx.stats, weights, &cache, DEFAULT_SHARPNESS,
    )?;
    ensure!(pick(&eval.breakdown) > 0.0, "{term} term inactive in fixture");
    let (params, layout) = pack_params(&fx.scene);
    let h = 1e-3;
    let mut ok = 0;
    for i in 0..params.len() {
        let eval_at = |v: f64| -> Result<f64, Box<dyn Error>> {
            let mut p = params.clone();
            p[i] = v;
            let mut s = fx.scene.clone();
            unpack_params(&mut s, &layout, &p);
            let ev = joint_loss(&s, &fx.obs, &fx.table, &fx.stats, weights, &cache, DEFAULT_SHARPNESS)?;
            Ok(ev.breakdown.total)
        };
        let fd = (eval_at(params[i] + h)? - eval_at(params[i] - h)?) / (2.0 * h);
        if grads_match(eval.grad[i], fd) {
            ok += 1;
        } else if std::env::var_os("ACCEPTANCE_DEBUG").is_some() {
            eprintln!("  [{term}] param {i}: analytic {} fd {fd}", eval.grad[i]);
        }
    }
    Ok((ok, params.len()))
}

/// Finite differences of the single-instance fit objective.
fn fd_fit(
    obj: &ObjectInstance,
    cam: &Camera,
    target: &FitTarget,
    chamfer: bool,
    offscreen_weight: f64,
) -> Result<(usize, usize), Box<dyn Error>> {
    let mini = Scene {
        camera: *cam,
        humans: vec![],
        objects: vec![obj.clone()],
        masks: vec![],
    };
    let (params, layout) = pack_params(&mini);
    let (_, grad) = fit_loss(obj, cam, target, chamfer, offscreen_weight, DEFAULT_SHARPNESS)?;
    let h = 1e-3;
    let mut ok = 0;
    for i in 0..params.len() {
        let eval_at = |v: f64| -> Result<f64, Box<dyn Error>> {
            let mut p = params.clone();
            p[i] = v;
            let mut s = mini.clone();
            unpack_params(&mut s, &layout, &p);
            let (value, _) = fit_loss(
                &s.objects[0], cam, target, chamfer, offscreen_weight, DEFAULT_SHARPNESS,
            )?;
            Ok(value)
        };
        let fd = (eval_at(params[i] + h)? - eval_at(params[i] - h)?) / (2.0 * h);
        if grads_match(grad[i], fd) {
            ok += 1;
        }
    }
    Ok((ok, params.len()))
}

fn c1_gradients() -> Check {
    let start = Instant::now();
    let off = LossWeights {
        occ_sil: 0.0,
        interaction: 0.0,
        scale: 0.0,
        depth: 0.0,
        collision: 0.0,
        chamfer_enabled: false,
        offscreen_weight: 0.0,
    };
    let mut worst = (1.0f64, 0usize, 0usize, "");
    let mut record = |term: &'static str, got: (usize, usize)| -> Result<(), Box<dyn Error>> {
        let (ok, n) = got;
        let need = (0.95 * n as f64).ceil() as usize;
        ensure!(ok >= need, "{term}: {ok}/{n} gradients match (need {need})");
        let frac = ok as f64 / n as f64;
        if frac < worst.0 {
            worst = (frac, ok, n, term);
        }
        Ok(())
    };

    let fine_fx = grad_fixture(true)?;
    let coarse_fx = grad_fixture(false)?;
    record(
        "occ-sil",
        fd_joint(&fine_fx, &LossWeights { occ_sil: 1.0, ..off }, "occ-sil", |b| b.occ_sil)?,
    )?;
    record(
        "coarse interaction",
        fd_joint(
            &coarse_fx,
            &LossWeights { interaction: 1.0, ..off },
            "coarse interaction",
            |b| b.coarse,
        )?,
    )?;
    record(
        "fine interaction",
        fd_joint(
            &fine_fx,
            &LossWeights { interaction: 1.0, ..off },
            "fine interaction",
            |b| b.fine,
        )?,
    )?;
    record(
        "scale prior",
        fd_joint(&fine_fx, &LossWeights { scale: 100.0, ..off }, "scale prior", |b| b.scale)?,
    )?;
    let depth_fx = depth_fixture()?;
    record(
        "ordinal depth",
        fd_joint(&depth_fx, &LossWeights { depth: 10.0, ..off }, "ordinal depth", |b| {
            b.depth
        })?,
    )?;
    record(
        "collision",
        fd_joint(&fine_fx, &LossWeights { collision: 1.0, ..off }, "collision", |b| {
            b.collision
        })?,
    )?;

    // Boundary (chamfer) variant of the silhouette objective, plus the
    // offscreen penalty, both through the single-instance fit objective.
    let cam = Camera::normalized(64, 64)?;
    let mesh = Arc::new(box_mesh(Vec3::new(0.15, 0.1, 0.12)));
    let inside = ObjectInstance {
        category: "widget".into(),
        exemplar: 0,
        mesh: Arc::clone(&mesh),
        scale: 1.0,
        rotation: rot_euler(0.3, -0.25, 0.1),
        translation: Vec3::new(0.1, -0.05, 2.0),
    };
    let mask_of = |o: &ObjectInstance| -> Result<Mask, Box<dyn Error>> {
        let soft = render_silhouette(&o.world_vertices()?, &o.mesh.faces, &cam, DEFAULT_SHARPNESS);
        Ok(threshold_mask(&soft.coverage, 0.5))
    };
    let mut shifted = inside.clone();
    shifted.translation += Vec3::new(0.07, 0.05, 0.2);
    let target = FitTarget::new(mask_of(&shifted)?, Mask::filled(64, 64, 1))?;
    record("occ-sil + boundary", fd_fit(&inside, &cam, &target, true, 0.0)?)?;

    let straddling = ObjectInstance {
        translation: Vec3::new(1.9, 0.1, 2.0),
        rotation: rot_euler(0.2, 0.35, -0.15),
        ..inside.clone()
    };
    let (off_val, _) = offscreen_penalty(&straddling.world_vertices()?, &cam);
    ensure!(off_val > 0.0, "offscreen term inactive in fixture");
    let mut shifted = straddling.clone();
    shifted.translation += Vec3::new(-0.05, 0.03, 0.1);
    let target = FitTarget::new(mask_of(&shifted)?, Mask::filled(64, 64, 1))?;
    record("offscreen", fd_fit(&straddling, &cam, &target, false, 1.0)?)?;

    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s, budget 60s");
    Ok(format!(
        "8 terms checked, worst {}/{} ({})",
        worst.1, worst.2, worst.3
    ))
}

// ---------------------------------------------------------------------------
// criterion 2: pose-fit round trip

struct RoundTrip {
    rot_deg: f64,
    trans: f64,
    depth: f64,
}

fn round_trip(
    mesh: &Arc<TriMesh>,
    category: &str,
    cam: &Camera,
    bias: RestartBias,
    schedule: &FitSchedule,
    seed: u64,
    occlude: f64,
) -> Result<RoundTrip, Box<dyn Error>> {
    let diag = mesh.bbox_diagonal()?;
    let z = 2.0 * diag;
    let s = seed % 10;
    let gt_rot = sample_rotations(1, bias, seed)[0];
    let gt = ObjectInstance {
        category: category.into(),
        exemplar: 0,
        mesh: Arc::clone(mesh),
        scale: 1.0,
        rotation: gt_rot,
        translation: Vec3::new(
            0.03 * z * ((s % 3) as f64 - 1.0),
            0.03 * z * ((s % 2) as f64 - 0.5),
            z,
        ),
    };
    let soft = render_silhouette(&gt.world_vertices()?, &mesh.faces, cam, DEFAULT_SHARPNESS);
    let full = threshold_mask(&soft.coverage, 0.5);
    ensure!(full.fg_count() > 0, "{category} seed {seed}: empty target mask");

    let target = if occlude > 0.0 {
        // Fake occluder: an opaque strip sweeping in from the left until it
        // covers the requested fraction of the object's pixels.
        let goal = (full.fg_count() as f64 * occlude).ceil() as usize;
        let mut removed = 0;
        let mut cut = 0;
        while cut < full.width && removed < goal {
            for y in 0..full.height {
                removed += (*full.at(cut, y) != 0) as usize;
            }
            cut += 1;
        }
        let mut occluded = full.clone();
        let mut strip = Mask::new(full.width, full.height);
        for y in 0..full.height {
            for x in 0..cut {
                *occluded.at_mut(x, y) = 0;
                *strip.at_mut(x, y) = 1;
            }
        }
        let indicator = occlusion_indicator(0, &[occluded.clone(), strip])?;
        FitTarget::new(occluded, indicator)?
    } else {
        FitTarget::new(full, Mask::filled(cam.width as usize, cam.height as usize, 1))?
    };

    let out = fit_object_pose(
        mesh,
        category,
        0,
        &target,
        cam,
        schedule,
        bias,
        1.0,
        &LossWeights::default(),
        seed,
    )?;
    Ok(RoundTrip {
        rot_deg: geodesic_angle(&out.rotation.to_matrix()?, &gt_rot.to_matrix()?).to_degrees(),
        trans: (out.translation - gt.translation).norm(),
        depth: z,
    })
}

fn fit_schedule_for(z: f64) -> FitSchedule {
    FitSchedule {
        restarts: 1000,
        restarts_refined: 4,
        // The translation initializer overestimates depth in proportion to
        // z; at this learning rate the refinement walks roughly lr per
        // iteration, so the budget scales with depth.
        iters_fit: ((130.0 * z) as usize).max(250),
        lr: 3e-3,
        iters_joint: 0,
        score_resolution: 64,
    }
}

fn c2_round_trip() -> Check {
    let lib = MeshLibrary::builtin();
    let table = default_category_table();
    let cam = Camera::normalized(128, 128)?;
    let mut detail = String::new();
    for (ci, (cat, row)) in table.iter().enumerate() {
        let start = Instant::now();
        let mesh = lib.exemplar(cat, 0)?;
        let z = 2.0 * mesh.bbox_diagonal()?;
        let schedule = fit_schedule_for(z);
        let mut pass = 0;
        for s in 0..10u64 {
            let seed = 1000 * (ci as u64 + 1) + s;
            let rt = round_trip(mesh, cat, &cam, row.restart_bias, &schedule, seed, 0.0)?;
            if rt.rot_deg < 5.0 && rt.trans < 0.02 * rt.depth {
                pass += 1;
            }
        }
        let secs = start.elapsed().as_secs_f64();
        ensure!(pass >= 9, "{cat}: only {pass}/10 seeds within tolerance");
        ensure!(secs < 120.0, "{cat}: {secs:.0}s (budget 120s/category)");
        let _ = write!(detail, "{cat} {pass}/10 {secs:.0}s; ");
    }
    Ok(detail.trim_end().to_string())
}

// ---------------------------------------------------------------------------
// criterion 3: occlusion robustness

fn c3_occlusion() -> Check {
    let lib = MeshLibrary::builtin();
    let cam = Camera::normalized(128, 128)?;
    let mesh = lib.exemplar("bat", 0)?;
    let z = 2.0 * mesh.bbox_diagonal()?;
    let schedule = fit_schedule_for(z);
    let mut pass = 0;
    let mut worst: f64 = 0.0;
    for s in 0..10u64 {
        let rt = round_trip(mesh, "bat", &cam, RestartBias::None, &schedule, 30_000 + s, 0.30)?;
        if rt.rot_deg < 10.0 {
            pass += 1;
        }
        worst = worst.max(rt.rot_deg);
    }
    ensure!(pass >= 9, "bat under 30% occlusion: only {pass}/10 seeds < 10 deg");
    Ok(format!("bat {pass}/10 seeds, worst counted rotation {worst:.1} deg"))
}

// ---------------------------------------------------------------------------
// criterion 4: scale-depth ambiguity

fn c4_scale_depth() -> Check {
    let lib = MeshLibrary::builtin();
    let human_mesh = Arc::new(builtin_human(HumanPose::Grip));
    let cam = Camera::normalized(128, 128)?;
    let scene = grip_scene(&lib, &human_mesh, cam, 0.34, 0.03, 0.8, 1.0)?;

    // Hard renders must be pixel-identical under intrinsic rescaling; 0.5
    // and 2 are exact in floating point, so any deviation is a real
    // projection dependence on s.
    for alpha in [0.5, 2.0] {
        let mut h = scene.humans[0].clone();
        h.scale *= alpha;
        let base = render_silhouette_hard(
            &scene.humans[0].world_vertices(cam.f)?,
            &human_mesh.faces,
            &cam,
        );
        let scaled = render_silhouette_hard(&h.world_vertices(cam.f)?, &human_mesh.faces, &cam);
        ensure!(base.data == scaled.data, "human render changed under alpha={alpha}");

        let mut o = scene.objects[0].clone();
        o.scale *= alpha;
        let base = render_silhouette_hard(
            &scene.objects[0].world_vertices()?,
            &scene.objects[0].mesh.faces,
            &cam,
        );
        let scaled = render_silhouette_hard(&o.world_vertices()?, &o.mesh.faces, &cam);
        ensure!(base.data == scaled.data, "object render changed under alpha={alpha}");
    }

    // Start the bat at twice its true scale: the projection is unchanged, so
    // only the interaction and scale-prior terms can pull it back.
    let mut init = scene.clone();
    init.objects[0].scale = 2.0;
    let obs = Observations::prepare(&init, 128)?;
    let table = default_category_table();
    let stats = CategoryStats::from_table(&table);
    let schedule = FitSchedule {
        iters_joint: 1200,
        ..FitSchedule::default()
    };
    let out = optimize_arrangement(&init, &obs, &table, &stats, &LossWeights::default(), &schedule)?;

    let s = out.scene.objects[0].scale;
    ensure!(
        (s - 1.0).abs() <= 0.15,
        "recovered scale {s:.3}, true 1.0 (15% tolerance)"
    );
    let world_h = out.scene.humans[0].world_vertices(cam.f)?;
    let l = part_centroid(&human_mesh, &world_h, "L Palm")?;
    let r = part_centroid(&human_mesh, &world_h, "R Palm")?;
    let palms = (l + r) / 2.0;
    let world_o = out.scene.objects[0].world_vertices()?;
    let handle = part_centroid(&out.scene.objects[0].mesh, &world_o, "Handle")?;
    let gap = (handle - palms).norm();
    ensure!(gap <= 0.10, "handle-palm distance {gap:.3} m, tolerance 0.10 m");
    Ok(format!("scale {s:.3}, handle-palm {:.1} cm", gap * 100.0))
}

// ---------------------------------------------------------------------------
// criterion 5: ordinal depth

fn c5_ordinal_depth() -> Check {
    let cam = Camera::normalized(128, 128)?;
    let card = Arc::new(box_mesh(Vec3::new(0.30, 0.20, 0.02)));
    let make = |rot: Rotation6D, t: Vec3| ObjectInstance {
        category: "card".into(),
        exemplar: 0,
        mesh: Arc::clone(&card),
        scale: 1.0,
        rotation: rot,
        translation: t,
    };
    let mut gt = Scene {
        camera: cam,
        humans: vec![],
        objects: vec![
            make(rot_euler(0.05, -0.1, 0.03), Vec3::new(-0.08, 0.0, 2.8)),
            make(rot_euler(-0.04, 0.08, -0.02), Vec3::new(0.08, 0.03, 3.2)),
        ],
        masks: vec![],
    };
    gt.masks = visibility_masks(&gt)?;

    // Swap the ordering without touching the projection: scaling by
    // alpha moves world depth to alpha * z while the silhouette stays put.
    let mut init = gt.clone();
    init.objects[0].scale = 3.2 / 2.8;
    init.objects[1].scale = 2.8 / 3.2;

    let obs = Observations::prepare(&init, 128)?;
    let mut table = CategoryTable::new();
    table.insert(
        "card".into(),
        CategoryConfig {
            coarse_xy_expand: 0.0,
            fine_xy_expand: 0.0,
            z_depth_threshold: 10.0,
            part_pairs: vec![],
            mean_scale: 1.0,
            restart_bias: RestartBias::None,
        },
    );
    let stats = CategoryStats::from_table(&table);
    let weights = LossWeights {
        occ_sil: 1.0,
        interaction: 0.0,
        scale: 0.0,
        depth: 10.0,
        collision: 0.0,
        chamfer_enabled: false,
        offscreen_weight: 1.0,
    };
    let schedule = FitSchedule {
        iters_joint: 400,
        ..FitSchedule::default()
    };
    let out = optimize_arrangement(&init, &obs, &table, &stats, &weights, &schedule)?;

    // Rendered front/back ordering vs. the segmentation, over pixels where
    // both instances render and the segmentation claims one of them.
    let world = out.scene.all_world_vertices()?;
    let ra = render_depth(&world[0], &out.scene.mesh(0).faces, &obs.camera);
    let rb = render_depth(&world[1], &out.scene.mesh(1).faces, &obs.camera);
    let mut overlap = 0;
    let mut agree = 0;
    for p in 0..obs.labels.data.len() {
        let (da, db) = (ra.depth.data[p], rb.depth.data[p]);
        let label = obs.labels.data[p];
        if !da.is_finite() || !db.is_finite() || label < 0 {
            continue;
        }
        overlap += 1;
        let winner = if da < db { 0 } else { 1 };
        if winner == label as usize {
            agree += 1;
        }
    }
    ensure!(overlap > 20, "only {overlap} overlap pixels; fixture too small");
    let frac = agree as f64 / overlap as f64;
    ensure!(
        frac >= 0.99,
        "ordering agrees at {agree}/{overlap} overlap pixels ({:.1}%)",
        frac * 100.0
    );

    let cache = HumanRenderCache::build(&out.scene, &obs.camera, DEFAULT_SHARPNESS)?;
    let eval = joint_loss(&out.scene, &obs, &table, &stats, &weights, &cache, DEFAULT_SHARPNESS)?;
    let l_depth = eval.breakdown.depth / weights.depth;
    ensure!(l_depth < 1e-4, "normalized depth loss {l_depth:.2e} >= 1e-4");
    Ok(format!(
        "{agree}/{overlap} overlap pixels ordered correctly, L_depth {l_depth:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// criterion 6: collision

fn c6_collision() -> Check {
    let cam = Camera::normalized(128, 128)?;
    let a = ObjectInstance {
        category: "block".into(),
        exemplar: 0,
        mesh: Arc::new(box_mesh(Vec3::new(0.2, 0.2, 0.2))),
        scale: 1.0,
        rotation: Rotation6D::identity(),
        translation: Vec3::new(0.0, 0.0, 3.0),
    };
    let b = ObjectInstance {
        category: "block".into(),
        exemplar: 0,
        mesh: Arc::new(box_mesh(Vec3::new(0.19, 0.19, 0.19))),
        scale: 1.0,
        rotation: Rotation6D::identity(),
        translation: Vec3::new(0.312, 0.015, 3.005),
    };
    let mut scene = Scene {
        camera: cam,
        humans: vec![],
        objects: vec![a, b],
        masks: vec![],
    };
    scene.masks = visibility_masks(&scene)?;

    // The fixture must start near 20% interpenetration by bounding-box
    // volume (relative to the smaller box).
    let ba = scene.world_bbox(0)?;
    let bb = scene.world_bbox(1)?;
    let inter: f64 = (0..3)
        .map(|k| (ba.max[k].min(bb.max[k]) - ba.min[k].max(bb.min[k])).max(0.0))
        .product();
    let vol = |x: &scenefit_core::geom::Aabb| -> f64 {
        (0..3).map(|k| x.max[k] - x.min[k]).product()
    };
    let frac = inter / vol(&ba).min(vol(&bb));
    ensure!(
        (0.17..=0.23).contains(&frac),
        "fixture interpenetration {frac:.3}, wanted about 0.2"
    );

    let world = scene.all_world_vertices()?;
    let before = scenefit_core::losses::colliding_instance_pairs(&scene, &world)?;
    ensure!(!before.is_empty(), "fixture does not start in collision");

    let mut table = CategoryTable::new();
    table.insert(
        "block".into(),
        CategoryConfig {
            coarse_xy_expand: 0.0,
            fine_xy_expand: 0.0,
            z_depth_threshold: 10.0,
            part_pairs: vec![],
            mean_scale: 1.0,
            restart_bias: RestartBias::None,
        },
    );
    let stats = CategoryStats::from_table(&table);
    let obs = Observations::prepare(&scene, 128)?;
    let schedule = FitSchedule {
        iters_joint: 400,
        ..FitSchedule::default()
    };
    let base = LossWeights {
        occ_sil: 1.0,
        interaction: 0.0,
        scale: 0.0,
        depth: 0.0,
        collision: 5.0,
        chamfer_enabled: false,
        offscreen_weight: 1.0,
    };

    let with = optimize_arrangement(&scene, &obs, &table, &stats, &base, &schedule)?;
    let world = with.scene.all_world_vertices()?;
    let pairs_on = scenefit_core::losses::colliding_instance_pairs(&with.scene, &world)?;
    ensure!(
        pairs_on.is_empty(),
        "collision term active but {} intersecting pair(s) remain",
        pairs_on.len()
    );

    let without = optimize_arrangement(
        &scene,
        &obs,
        &table,
        &stats,
        &LossWeights { collision: 0.0, ..base },
        &schedule,
    )?;
    let world = without.scene.all_world_vertices()?;
    let pairs_off = scenefit_core::losses::colliding_instance_pairs(&without.scene, &world)?;
    ensure!(
        !pairs_off.is_empty(),
        "ablated run separated the meshes anyway; contrast is vacuous"
    );
    Ok(format!(
        "start {frac:.2} overlap; with term 0 pairs, without term {} pair(s)",
        pairs_off.len()
    ))
}

// ---------------------------------------------------------------------------
// criterion 7: empirical scale loop

fn c7_scale_loop() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let lib = MeshLibrary::builtin();
    write_library(&root.join("library"), &lib)?;
    let human_mesh = Arc::new(builtin_human(HumanPose::Grip));
    save_obj(&root.join("human_grip.obj"), &human_mesh)?;
    save_parts(&root.join("human_grip.parts"), &human_mesh)?;
    let cam = Camera::normalized(128, 128)?;

    // 50 scenes whose bats are truly 1.3x the table's unit mean: the masks
    // are projection-invariant in s, so only the grip geometry carries the
    // size evidence. A weak scale prior lets that evidence dominate.
    let mut manifest = String::new();
    for i in 0..50usize {
        let sdir = root.join(format!("scene_{i:03}"));
        std::fs::create_dir_all(&sdir)?;
        let sigma = 0.32 + 0.02 * (i % 4) as f64;
        let tx = 0.03 * ((i % 5) as f64 - 2.0);
        let yaw = 0.37 * i as f64;
        let scene = grip_scene(&lib, &human_mesh, cam, sigma, tx, yaw, 1.3)?;
        save_mask(&sdir.join("human.png"), &scene.masks[0])?;
        save_mask(&sdir.join("bat.png"), &scene.masks[1])?;
        let q = quat_from_rotation(&scene.objects[0].rotation.to_matrix()?);
        let t = scene.objects[0].translation;
        let mut cfg = String::new();
        let _ = writeln!(cfg, "seed = {i}");
        let _ = writeln!(cfg, "library = \"../library/library.manifest\"");
        let _ = writeln!(cfg, "\n[weights]");
        let _ = writeln!(cfg, "occ_sil = 1.0");
        let _ = writeln!(cfg, "interaction = 1.0");
        let _ = writeln!(cfg, "scale = 1.0");
        let _ = writeln!(cfg, "depth = 1.0");
        let _ = writeln!(cfg, "collision = 0.0");
        let _ = writeln!(cfg, "\n[image]");
        let _ = writeln!(cfg, "width = 128");
        let _ = writeln!(cfg, "height = 128");
        let _ = writeln!(cfg, "\n[[human]]");
        let _ = writeln!(cfg, "mesh = \"../human_grip.obj\"");
        let _ = writeln!(cfg, "mask = \"human.png\"");
        let _ = writeln!(cfg, "sigma = {sigma}");
        let _ = writeln!(cfg, "tx = {tx}");
        let _ = writeln!(cfg, "\n[[object]]");
        let _ = writeln!(cfg, "category = \"bat\"");
        let _ = writeln!(cfg, "mask = \"bat.png\"");
        let _ = writeln!(cfg, "rotation = [{}, {}, {}, {}]", q[0], q[1], q[2], q[3]);
        let _ = writeln!(cfg, "translation = [{}, {}, {}]", t.x, t.y, t.z);
        std::fs::write(sdir.join("scene.cfg"), cfg)?;
        let _ = writeln!(manifest, "scene_{i:03}/scene.cfg");
    }
    std::fs::write(root.join("dataset.manifest"), manifest)?;

    let out_dir = root.join("scales");
    run_bin(&[
        "learn-scales",
        root.join("dataset.manifest").to_str().unwrap(),
        "--rounds",
        "2",
        "--jobs",
        "4",
        "--resolution",
        "128",
        "--out",
        out_dir.to_str().unwrap(),
    ])?;
    let means = std::fs::read_to_string(out_dir.join("means.csv"))?;
    let mut learned = None;
    for line in means.lines() {
        if let Some(rest) = line.strip_prefix("2,bat,") {
            learned = Some(rest.parse::<f64>()?);
        }
    }
    let learned = learned.ok_or("means.csv has no round-2 bat row")?;
    let secs = start.elapsed().as_secs_f64();
    ensure!(
        (learned - 1.3).abs() <= 0.13,
        "learned mean {learned:.3}, true 1.3 (10% tolerance)"
    );
    ensure!(secs < 600.0, "took {secs:.0}s, budget 600s");
    Ok(format!("learned mean {learned:.3} in {secs:.0}s"))
}

// ---------------------------------------------------------------------------
// criterion 8: configuration dump golden

fn c8_defaults_golden() -> Check {
    let golden = "\
[schedule]
lr = 0.001
iters_fit = 100
iters_joint = 400
restarts = 10000
restarts_refined = 20
score_resolution = 64

[weights]
occ_sil = 1
interaction = 1
scale = 100
depth = 10
collision = 0.001
chamfer_enabled = true
offscreen_weight = 1
human_scale_weight = 10

[raster]
edge_filter = 7
sharpness = 70
working_resolution = 256
near_plane = 0.001

[restarts]
upright_elevation_deg = 30
upright_categories = [\"bench\", \"bicycle\", \"motorcycle\"]
";
    let out = run_bin(&["defaults"])?;
    let text = String::from_utf8(out.stdout)?;
    ensure!(
        text == golden,
        "defaults dump diverges from golden text:\n{text}"
    );
    Ok(String::new())
}

// ---------------------------------------------------------------------------
// criterion 9: determinism

fn c9_determinism() -> Check {
    let dir = tempfile::tempdir()?;
    let demo = dir.path().join("demo");
    run_bin(&["make-demo", "--out", demo.to_str().unwrap()])?;
    let cfg = demo.join("scene_000/scene.cfg");
    let cfg = cfg.to_str().unwrap();

    let fit = |out: &Path| -> Check {
        run_bin(&[
            "fit", cfg,
            "--out", out.to_str().unwrap(),
            "--seed", "11",
            "--restarts", "300",
            "--restarts-refined", "3",
            "--iters-fit", "60",
            "--resolution", "128",
        ])?;
        Ok(std::fs::read_to_string(out.join("poses.csv"))?)
    };
    let f1 = fit(&dir.path().join("f1"))?;
    let f2 = fit(&dir.path().join("f2"))?;
    ensure!(f1 == f2, "fit CSVs differ between reruns");

    let arrange = |out: &Path| -> Check {
        run_bin(&[
            "arrange", cfg,
            "--poses", dir.path().join("f1/poses.csv").to_str().unwrap(),
            "--out", out.to_str().unwrap(),
            "--seed", "11",
            "--iters-joint", "80",
            "--resolution", "128",
        ])?;
        Ok(std::fs::read_to_string(out.join("params.csv"))?)
    };
    let a1 = arrange(&dir.path().join("a1"))?;
    let a2 = arrange(&dir.path().join("a2"))?;
    ensure!(a1 == a2, "arrange CSVs differ between reruns");
    Ok(format!("{} pose bytes, {} param bytes", f1.len(), a1.len()))
}

// ---------------------------------------------------------------------------
// criterion 10: category table golden

fn c10_category_table() -> Check {
    fn cfg(
        coarse: f64,
        fine: f64,
        z: f64,
        pairs: &[(&str, &str)],
        bias: RestartBias,
    ) -> CategoryConfig {
        CategoryConfig {
            coarse_xy_expand: coarse,
            fine_xy_expand: fine,
            z_depth_threshold: z,
            part_pairs: pairs.iter().map(|(o, h)| PartPair::new(o, h)).collect(),
            mean_scale: 1.0,
            restart_bias: bias,
        }
    }
    use RestartBias::{None as Free, Upright};
    let golden: BTreeMap<String, CategoryConfig> = [
        ("bat", cfg(0.5, 2.5, 5.0, &[("Handle", "L Palm"), ("Handle", "R Palm")], Free)),
        ("bench", cfg(0.3, 0.5, 10.0, &[("Seat", "Butt"), ("Seat Back", "Back")], Upright)),
        (
            "bicycle",
            cfg(
                0.0,
                0.7,
                4.0,
                &[("Seat", "Butt"), ("Handlebars", "L Palm"), ("Handlebars", "R Hand")],
                Upright,
            ),
        ),
        ("laptop", cfg(0.2, 0.0, 2.5, &[("Laptop", "L Palm"), ("Laptop", "R Palm")], Free)),
        (
            "motorcycle",
            cfg(
                0.0,
                0.7,
                5.0,
                &[("Seat", "Butt"), ("Handlebars", "L Palm"), ("Handlebars", "R Palm")],
                Upright,
            ),
        ),
        (
            "skateboard",
            cfg(0.0, 0.5, 10.0, &[("Skateboard", "L Foot"), ("Skateboard", "R Foot")], Free),
        ),
        (
            "surfboard",
            cfg(
                0.8,
                0.2,
                50.0,
                &[
                    ("Surfboard", "L Foot"),
                    ("Surfboard", "R Foot"),
                    ("Surfboard", "L Palm"),
                    ("Surfboard", "R Palm"),
                ],
                Free,
            ),
        ),
        (
            "tennis_racket",
            cfg(0.4, 2.0, 5.0, &[("Handle", "L Palm"), ("Handle", "R Palm")], Free),
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();

    let table = default_category_table();
    ensure!(table.len() == 8, "expected 8 categories, found {}", table.len());
    for (cat, want) in &golden {
        let got = table
            .get(cat)
            .ok_or_else(|| format!("category {cat} missing"))?;
        ensure!(
            got == want,
            "{cat} diverges from golden data:\n got {got:?}\nwant {want:?}"
        );
    }
    Ok("8 categories, 19 part pairs".into())
}
