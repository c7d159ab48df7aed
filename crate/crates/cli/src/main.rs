//! Command-line pipeline: per-object pose fitting against instance masks,
//! joint scene arrangement with export and renders, dataset-level scale
//! learning, demo dataset generation, and a dump of the default
//! configuration.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numerical
//! failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use scenefit_core::assets::{
    builtin::{builtin_human, HumanPose},
    export_scene, import_params, load_scene, params_csv, quat_from_rotation, render_views,
    save_mask, save_obj, save_parts, visibility_masks, write_library, write_scale_rounds,
    LoadedScene, MeshLibrary, View, PARAMS_HEADER,
};
use scenefit_core::error::{Error, Result};
use scenefit_core::geom::{Camera, Rotation6D, TriMesh, Vec3, NEAR_PLANE};
use scenefit_core::interaction::{default_category_table, RestartBias};
use scenefit_core::losses::{CategoryStats, FitTarget, LossWeights, HUMAN_SCALE_WEIGHT};
use scenefit_core::optim::{
    empirical_scale_loop, optimize_arrangement, select_exemplar, FitSchedule,
    UPRIGHT_ELEVATION_DEG,
};
use scenefit_core::raster::{DEFAULT_SHARPNESS, EDGE_FILTER, WORKING_RESOLUTION};
use scenefit_core::scene::{HumanInstance, ObjectInstance, Observations, Scene};

#[derive(Parser)]
#[command(
    name = "scenefit",
    version,
    about = "Recovers 3D arrangements of people and objects from instance masks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a 6-DoF pose per object against its instance mask
    Fit {
        /// Scene config (TOML; see the README for the grammar)
        scene: PathBuf,
        #[command(flatten)]
        opts: SharedOpts,
    },
    /// Jointly optimize all instances, then export meshes and renders
    Arrange {
        scene: PathBuf,
        /// Parameter CSV (e.g. from `fit`) applied before optimizing
        #[arg(long)]
        poses: Option<PathBuf>,
        /// Skip the joint stage and export the composition as-is
        #[arg(long)]
        independent: bool,
        /// Zero one loss term's weight (repeatable)
        #[arg(long, value_enum)]
        ablate: Vec<Ablation>,
        #[command(flatten)]
        opts: SharedOpts,
    },
    /// Alternate arrangement with per-category mean-scale re-estimation
    LearnScales {
        /// Text file listing scene configs, one path per line
        dataset: PathBuf,
        /// Re-estimation rounds; 0 echoes the initial table
        #[arg(long, default_value_t = 2)]
        rounds: usize,
        #[command(flatten)]
        opts: SharedOpts,
    },
    /// Write a self-contained demo dataset (library, meshes, masks, configs)
    MakeDemo {
        #[arg(long, default_value = "demo")]
        out: PathBuf,
        /// Number of generated scenes
        #[arg(long, default_value_t = 1)]
        scenes: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print the default schedule, weights, and pinned constants
    Defaults,
}

#[derive(Args)]
struct SharedOpts {
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// RNG seed (overrides the scene config's seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for restart scoring and dataset parallelism
    #[arg(long)]
    jobs: Option<usize>,
    /// Rotation restarts per pose fit
    #[arg(long)]
    restarts: Option<usize>,
    /// Best-scored restarts kept for full refinement
    #[arg(long)]
    restarts_refined: Option<usize>,
    /// Adam iterations per refined restart
    #[arg(long)]
    iters_fit: Option<usize>,
    /// Adam iterations for the joint stage
    #[arg(long)]
    iters_joint: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Working resolution: longer image side during optimization
    #[arg(long)]
    resolution: Option<u32>,
}

impl SharedOpts {
    fn schedule(&self, base: &FitSchedule) -> FitSchedule {
        let mut s = base.clone();
        if let Some(v) = self.restarts {
            s.restarts = v;
        }
        if let Some(v) = self.restarts_refined {
            s.restarts_refined = v;
        }
        if let Some(v) = self.iters_fit {
            s.iters_fit = v;
        }
        if let Some(v) = self.iters_joint {
            s.iters_joint = v;
        }
        if let Some(v) = self.lr {
            s.lr = v;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Ablation {
    OccSil,
    Interaction,
    Scale,
    Depth,
    Collision,
}

impl Ablation {
    fn name(self) -> &'static str {
        match self {
            Ablation::OccSil => "occ-sil",
            Ablation::Interaction => "interaction",
            Ablation::Scale => "scale",
            Ablation::Depth => "depth",
            Ablation::Collision => "collision",
        }
    }

    fn apply(self, w: &mut LossWeights) {
        match self {
            Ablation::OccSil => w.occ_sil = 0.0,
            Ablation::Interaction => w.interaction = 0.0,
            Ablation::Scale => w.scale = 0.0,
            Ablation::Depth => w.depth = 0.0,
            Ablation::Collision => w.collision = 0.0,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let jobs = match &cli.cmd {
        Cmd::Fit { opts, .. } | Cmd::Arrange { opts, .. } | Cmd::LearnScales { opts, .. } => {
            opts.jobs
        }
        _ => None,
    };
    if let Some(jobs) = jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numerical(_) => 3,
                _ => 2,
            })
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Fit { scene, opts } => cmd_fit(&scene, &opts),
        Cmd::Arrange {
            scene,
            poses,
            independent,
            ablate,
            opts,
        } => cmd_arrange(&scene, poses.as_deref(), independent, &ablate, &opts),
        Cmd::LearnScales {
            dataset,
            rounds,
            opts,
        } => cmd_learn_scales(&dataset, rounds, &opts),
        Cmd::MakeDemo { out, scenes, seed } => cmd_make_demo(&out, scenes, seed),
        Cmd::Defaults => {
            print!("{}", defaults_dump());
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// fit

fn cmd_fit(path: &Path, opts: &SharedOpts) -> Result<()> {
    let LoadedScene {
        scene,
        library,
        weights,
        schedule,
        seed,
    } = load_scene(path)?;
    let schedule = opts.schedule(&schedule);
    let seed = opts.seed.unwrap_or(seed);
    let resolution = opts.resolution.unwrap_or(WORKING_RESOLUTION);
    let obs = Observations::prepare(&scene, resolution)?;
    fs::create_dir_all(&opts.out)?;

    let mut poses = format!("{PARAMS_HEADER},loss\n");
    let mut fit_log = String::from("object,category,exemplar,loss,restarts\n");
    for (o, obj) in scene.objects.iter().enumerate() {
        let flat = scene.humans.len() + o;
        let target = FitTarget::new(obs.masks[flat].clone(), obs.indicators[flat].clone())?;
        let row = library
            .table
            .get(&obj.category)
            .ok_or_else(|| Error::UnknownCategory(obj.category.clone()))?;
        // Each object draws its own restart bank.
        let (exemplar, outcome) = select_exemplar(
            library.exemplars(&obj.category)?,
            &obj.category,
            &target,
            &obs.camera,
            &schedule,
            row.restart_bias,
            row.mean_scale,
            &weights,
            seed.wrapping_add(o as u64),
        )?;
        info!(
            "object {o} ({}): exemplar {exemplar}, loss {:.6}",
            obj.category, outcome.loss
        );
        let q = quat_from_rotation(&outcome.rotation.to_matrix()?);
        let t = outcome.translation;
        let _ = writeln!(
            poses,
            "object,{o},{},{exemplar},{},{},{},{},{},{},{},{},{}",
            obj.category, row.mean_scale, q[0], q[1], q[2], q[3], t.x, t.y, t.z, outcome.loss
        );
        let _ = writeln!(
            fit_log,
            "{o},{},{exemplar},{},{}",
            obj.category,
            outcome.loss,
            outcome.scores.len()
        );
    }
    fs::write(opts.out.join("poses.csv"), poses)?;
    fs::write(opts.out.join("fit_log.csv"), fit_log)?;
    println!(
        "fit {} object(s) -> {}",
        scene.objects.len(),
        opts.out.join("poses.csv").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// arrange

fn cmd_arrange(
    path: &Path,
    poses: Option<&Path>,
    independent: bool,
    ablate: &[Ablation],
    opts: &SharedOpts,
) -> Result<()> {
    let LoadedScene {
        mut scene,
        library,
        mut weights,
        schedule,
        seed,
    } = load_scene(path)?;
    let schedule = opts.schedule(&schedule);
    let seed = opts.seed.unwrap_or(seed);
    let resolution = opts.resolution.unwrap_or(WORKING_RESOLUTION);
    for a in ablate {
        a.apply(&mut weights);
    }
    if let Some(p) = poses {
        import_params(p, &mut scene, &library)?;
    }
    fs::create_dir_all(&opts.out)?;

    let mut best = (0.0, 0usize);
    let arranged = if independent {
        scene
    } else {
        let obs = Observations::prepare(&scene, resolution)?;
        let stats = CategoryStats::from_table(&library.table);
        let out = optimize_arrangement(&scene, &obs, &library.table, &stats, &weights, &schedule)?;
        fs::write(opts.out.join("loss_log.csv"), &out.log)?;
        best = (out.best_loss, out.best_iter);
        info!("joint stage: best loss {} at iteration {}", best.0, best.1);
        out.scene
    };

    export_scene(&opts.out, &arranged)?;
    render_views(&arranged, &[View::Front, View::Top, View::Side], &opts.out)?;

    let mut meta = String::from("command = \"arrange\"\n");
    let _ = writeln!(meta, "seed = {seed}");
    let _ = writeln!(meta, "resolution = {resolution}");
    let _ = writeln!(meta, "independent = {independent}");
    let names: Vec<String> = ablate.iter().map(|a| format!("\"{}\"", a.name())).collect();
    let _ = writeln!(meta, "ablate = [{}]", names.join(", "));
    if !independent {
        let _ = writeln!(meta, "best_loss = {}", best.0);
        let _ = writeln!(meta, "best_iter = {}", best.1);
    }
    let _ = writeln!(meta, "\n[weights]");
    let _ = writeln!(meta, "occ_sil = {}", weights.occ_sil);
    let _ = writeln!(meta, "interaction = {}", weights.interaction);
    let _ = writeln!(meta, "scale = {}", weights.scale);
    let _ = writeln!(meta, "depth = {}", weights.depth);
    let _ = writeln!(meta, "collision = {}", weights.collision);
    let _ = writeln!(meta, "\n[schedule]");
    let _ = writeln!(meta, "lr = {}", schedule.lr);
    let _ = writeln!(meta, "iters_joint = {}", schedule.iters_joint);
    fs::write(opts.out.join("run.toml"), meta)?;
    println!("arranged scene -> {}", opts.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// learn-scales

fn cmd_learn_scales(dataset: &Path, rounds: usize, opts: &SharedOpts) -> Result<()> {
    let text = fs::read_to_string(dataset).map_err(|e| Error::load(dataset, e.to_string()))?;
    let dir = dataset.parent().unwrap_or(Path::new("."));
    let resolution = opts.resolution.unwrap_or(WORKING_RESOLUTION);

    let mut scenes = Vec::new();
    let mut shared: Option<LoadedScene> = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let loaded = load_scene(&dir.join(line))?;
        let obs = Observations::prepare(&loaded.scene, resolution)?;
        scenes.push((loaded.scene.clone(), obs));
        // The first scene's library and settings govern the whole run.
        if shared.is_none() {
            shared = Some(loaded);
        }
    }
    let shared = shared.ok_or_else(|| Error::load(dataset, "dataset lists no scenes"))?;
    let schedule = opts.schedule(&shared.schedule);
    let table = &shared.library.table;

    info!("optimizing {} scene(s) for {rounds} round(s)", scenes.len());
    let learned = empirical_scale_loop(&scenes, table, &shared.weights, &schedule, rounds)?;
    let initial: BTreeMap<String, f64> = table
        .iter()
        .map(|(k, v)| (k.clone(), v.mean_scale))
        .collect();
    write_scale_rounds(&opts.out, &initial, &learned)?;

    println!("category,initial,final");
    for (cat, m0) in &initial {
        let mf = learned.last().map_or(*m0, |r| r.means[cat]);
        println!("{cat},{m0},{mf}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// make-demo

/// A person gripping a bat: the bat's handle centroid sits exactly at the
/// palms, with per-scene variation in depth, lateral shift, and bat
/// orientation.
fn demo_scene(
    library: &MeshLibrary,
    human_mesh: &Arc<TriMesh>,
    index: usize,
    camera: Camera,
) -> Result<Scene> {
    let sigma = 0.34 + 0.02 * (index % 3) as f64;
    let tx = 0.03 * ((index % 5) as f64 - 2.0);
    let human = HumanInstance {
        mesh: Arc::clone(human_mesh),
        scale: 1.0,
        tx,
        ty: 0.0,
        sigma,
    };

    let world = human.world_vertices(camera.f)?;
    let mut palms = Vec3::zeros();
    let mut count = 0.0;
    for part in ["L Palm", "R Palm"] {
        for &v in human_mesh.part(part)? {
            palms += world[v];
            count += 1.0;
        }
    }
    palms /= count;

    let bat = library.exemplar("bat", 0)?;
    let mut handle = Vec3::zeros();
    let ids = bat.part("Handle")?;
    for &v in ids {
        handle += bat.vertices[v];
    }
    handle /= ids.len() as f64;

    // Tilted grip, yawed differently per scene.
    let m = nalgebra::Rotation3::from_euler_angles(0.25, 0.45 * index as f64, -0.5).into_inner();
    let rotation = Rotation6D::from_matrix(&m);
    let translation = palms - m * handle;

    let mut scene = Scene {
        camera,
        humans: vec![human],
        objects: vec![ObjectInstance {
            category: "bat".into(),
            exemplar: 0,
            mesh: Arc::clone(bat),
            scale: 1.0,
            rotation,
            translation,
        }],
        masks: vec![],
    };
    scene.masks = visibility_masks(&scene)?;
    Ok(scene)
}

fn cmd_make_demo(out: &Path, scenes: usize, seed: u64) -> Result<()> {
    if scenes == 0 {
        return Err(Error::InvalidParameter("--scenes must be at least 1".into()));
    }
    let library = MeshLibrary::builtin();
    write_library(&out.join("library"), &library)?;
    let human = Arc::new(builtin_human(HumanPose::Grip));
    save_obj(&out.join("human_grip.obj"), &human)?;
    save_parts(&out.join("human_grip.parts"), &human)?;
    let camera = Camera::normalized(256, 192)?;

    let mut manifest = String::from("# one scene config per line\n");
    for i in 0..scenes {
        let sdir = out.join(format!("scene_{i:03}"));
        fs::create_dir_all(&sdir)?;
        let scene = demo_scene(&library, &human, i, camera)?;
        save_mask(&sdir.join("human.png"), &scene.masks[0])?;
        save_mask(&sdir.join("bat.png"), &scene.masks[1])?;
        let gt = params_csv(&scene)?;
        fs::write(sdir.join("gt_params.csv"), &gt)?;
        // Starting poses for `arrange` runs that skip `fit`.
        fs::write(sdir.join("poses.csv"), &gt)?;

        let h = &scene.humans[0];
        let o = &scene.objects[0];
        let q = quat_from_rotation(&o.rotation.to_matrix()?);
        let t = o.translation;
        let mut cfg = String::new();
        let _ = writeln!(cfg, "# generated demo scene {i}");
        let _ = writeln!(cfg, "seed = {}", seed.wrapping_add(i as u64));
        let _ = writeln!(cfg, "library = \"../library/library.manifest\"");
        let _ = writeln!(cfg, "\n[image]");
        let _ = writeln!(cfg, "width = {}", camera.width);
        let _ = writeln!(cfg, "height = {}", camera.height);
        let _ = writeln!(cfg, "focal = {}", camera.f);
        let _ = writeln!(cfg, "\n[[human]]");
        let _ = writeln!(cfg, "mesh = \"../human_grip.obj\"");
        let _ = writeln!(cfg, "mask = \"human.png\"");
        let _ = writeln!(cfg, "sigma = {}", h.sigma);
        let _ = writeln!(cfg, "tx = {}", h.tx);
        let _ = writeln!(cfg, "ty = {}", h.ty);
        let _ = writeln!(cfg, "\n[[object]]");
        let _ = writeln!(cfg, "category = \"bat\"");
        let _ = writeln!(cfg, "mask = \"bat.png\"");
        let _ = writeln!(cfg, "# ground-truth pose; `fit` ignores it, `arrange` starts from it");
        let _ = writeln!(cfg, "rotation = [{}, {}, {}, {}]", q[0], q[1], q[2], q[3]);
        let _ = writeln!(cfg, "translation = [{}, {}, {}]", t.x, t.y, t.z);
        fs::write(sdir.join("scene.cfg"), cfg)?;
        let _ = writeln!(manifest, "scene_{i:03}/scene.cfg");
    }
    fs::write(out.join("dataset.manifest"), manifest)?;
    println!("wrote {scenes} scene(s) under {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// defaults

fn defaults_dump() -> String {
    let s = FitSchedule::default();
    let w = LossWeights::default();
    let upright: Vec<String> = default_category_table()
        .iter()
        .filter(|(_, c)| c.restart_bias == RestartBias::Upright)
        .map(|(k, _)| format!("\"{k}\""))
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "[schedule]");
    let _ = writeln!(out, "lr = {}", s.lr);
    let _ = writeln!(out, "iters_fit = {}", s.iters_fit);
    let _ = writeln!(out, "iters_joint = {}", s.iters_joint);
    let _ = writeln!(out, "restarts = {}", s.restarts);
    let _ = writeln!(out, "restarts_refined = {}", s.restarts_refined);
    let _ = writeln!(out, "score_resolution = {}", s.score_resolution);
    let _ = writeln!(out, "\n[weights]");
    let _ = writeln!(out, "occ_sil = {}", w.occ_sil);
    let _ = writeln!(out, "interaction = {}", w.interaction);
    let _ = writeln!(out, "scale = {}", w.scale);
    let _ = writeln!(out, "depth = {}", w.depth);
    let _ = writeln!(out, "collision = {}", w.collision);
    let _ = writeln!(out, "chamfer_enabled = {}", w.chamfer_enabled);
    let _ = writeln!(out, "offscreen_weight = {}", w.offscreen_weight);
    let _ = writeln!(out, "human_scale_weight = {}", HUMAN_SCALE_WEIGHT);
    let _ = writeln!(out, "\n[raster]");
    let _ = writeln!(out, "edge_filter = {}", EDGE_FILTER);
    let _ = writeln!(out, "sharpness = {}", DEFAULT_SHARPNESS);
    let _ = writeln!(out, "working_resolution = {}", WORKING_RESOLUTION);
    let _ = writeln!(out, "near_plane = {}", NEAR_PLANE);
    let _ = writeln!(out, "\n[restarts]");
    let _ = writeln!(out, "upright_elevation_deg = {}", UPRIGHT_ELEVATION_DEG);
    let _ = writeln!(out, "upright_categories = [{}]", upright.join(", "));
    out
}
