//! Loss terms and their gradients. Each term reports its raw value; the
//! joint orchestrator applies the configured weights, accumulates world-space
//! vertex gradients, and contracts them into the packed parameter vector.
//!
//! Term zoo:
//! - silhouette alignment (occlusion-aware L2 + optional boundary-distance
//!   term during single-instance fitting),
//! - an offscreen penalty keeping fits inside the view frustum,
//! - coarse (instance centroid) and fine (part centroid) attraction for
//!   detected interactions,
//! - a scale prior pulling intrinsic scales toward per-category means,
//! - an ordinal depth term penalizing renders that contradict the
//!   segmentation's visibility ordering,
//! - a mesh interpenetration penalty.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::collide::{closest_point_on_mesh, intersecting_triangle_pairs, is_inside, Bvh};
use crate::error::{Error, Result};
use crate::geom::{Camera, Vec3, NEAR_PLANE};
use crate::interaction::{detect_interactions, CategoryTable, InteractionSet};
use crate::raster::{
    edge_map, distance_transform, render_depth, render_silhouette, sigmoid, DepthMap,
    DepthRender, Grid, Mask, OcclusionIndicator, SoftSilhouette,
};
use crate::scene::{
    backprop_to_params, InstanceRef, Observations, ParamLayout, Scene, VertexGrads,
};

/// Multiplier on the human scale-prior term relative to objects: humans act
/// as the metric anchor, so their scales should move least.
pub const HUMAN_SCALE_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub occ_sil: f64,
    pub interaction: f64,
    pub scale: f64,
    pub depth: f64,
    pub collision: f64,
    /// Adds the boundary-distance term during single-instance fitting.
    /// Joint optimization never uses it.
    pub chamfer_enabled: bool,
    /// Weight of the offscreen penalty during single-instance fitting.
    pub offscreen_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            occ_sil: 1.0,
            interaction: 1.0,
            scale: 100.0,
            depth: 10.0,
            collision: 1e-3,
            chamfer_enabled: true,
            offscreen_weight: 1.0,
        }
    }
}

/// Per-category scale-prior means plus the human anchor weight.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryStats {
    pub mean_scales: BTreeMap<String, f64>,
    pub human_weight: f64,
}

impl CategoryStats {
    pub fn from_table(table: &CategoryTable) -> Self {
        CategoryStats {
            mean_scales: table
                .iter()
                .map(|(k, v)| (k.clone(), v.mean_scale))
                .collect(),
            human_weight: HUMAN_SCALE_WEIGHT,
        }
    }

    pub fn mean(&self, category: &str) -> Result<f64> {
        self.mean_scales
            .get(category)
            .copied()
            .ok_or_else(|| Error::UnknownCategory(category.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Silhouette alignment

/// Distance field used by the boundary term: Euclidean distance to the
/// nearest boundary-ring pixel of the mask.
pub fn chamfer_field(mask: &Mask) -> Grid<f64> {
    distance_transform(&edge_map(mask))
}

/// Occlusion-aware silhouette loss.
///
/// Value: `sum_p (I_p * S_p - M_p)^2 / (W*H)`, plus — when `chamfer` carries
/// the mask's boundary distance field — the summed field value over the
/// boundary ring of the 0.5-thresholded masked render, same normalization.
/// Returns the value and `dL/dS`. The boundary term's gradient is the
/// standard surrogate: the field value at each ring pixel.
pub fn occ_sil_loss(
    s: &SoftSilhouette,
    m: &Mask,
    ind: &OcclusionIndicator,
    chamfer: Option<&Grid<f64>>,
) -> Result<(f64, Grid<f64>)> {
    if !s.same_size(m) || !s.same_size(ind) || chamfer.map_or(false, |c| !s.same_size(c)) {
        return Err(Error::DimensionMismatch(format!(
            "silhouette {}x{} vs mask {}x{} vs indicator {}x{}",
            s.width, s.height, m.width, m.height, ind.width, ind.height
        )));
    }
    let hw = (s.width * s.height) as f64;
    let mut value = 0.0;
    let mut grad = Grid::new(s.width, s.height);
    for i in 0..s.data.len() {
        let vis = ind.data[i] as f64;
        let r = vis * s.data[i] - m.data[i] as f64;
        value += r * r / hw;
        grad.data[i] = 2.0 * r * vis / hw;
    }
    if let Some(field) = chamfer {
        let mut masked = Mask::new(s.width, s.height);
        for i in 0..s.data.len() {
            masked.data[i] = (ind.data[i] != 0 && s.data[i] >= 0.5) as u8;
        }
        let ring = edge_map(&masked);
        for i in 0..ring.data.len() {
            if ring.data[i] != 0 {
                value += field.data[i] / hw;
                grad.data[i] += field.data[i] / hw;
            }
        }
    }
    Ok((value, grad))
}

// ---------------------------------------------------------------------------
// Offscreen penalty

/// Mean over vertices of squared hinges pushing projections back inside the
/// view: `(|u|-1)+^2 + (|v|-1)+^2` in normalized device coordinates plus
/// `(near-z)+^2` in depth. Returns the value and world-space vertex grads.
pub fn offscreen_penalty(world: &[Vec3], cam: &Camera) -> (f64, Vec<Vec3>) {
    let n = world.len().max(1) as f64;
    let mut value = 0.0;
    let mut grads = vec![Vec3::zeros(); world.len()];
    for (p, g) in world.iter().zip(&mut grads) {
        let (u, v, zc, clamped) = cam.ndc_clamped(p);
        let hu = (u.abs() - 1.0).max(0.0);
        let hv = (v.abs() - 1.0).max(0.0);
        let hz = (NEAR_PLANE - p.z).max(0.0);
        value += (hu * hu + hv * hv + hz * hz) / n;

        let du = 2.0 * hu * u.signum() / n;
        let dv = 2.0 * hv * v.signum() / n;
        g.x += du * cam.f / zc;
        g.y += dv * cam.f / zc;
        if !clamped {
            g.z += (-du * u - dv * v) / zc;
        }
        g.z -= 2.0 * hz / n;
    }
    (value, grads)
}

// ---------------------------------------------------------------------------
// Interaction attraction

fn centroid_pull(
    value: &mut f64,
    weight: f64,
    wa: &[Vec3],
    ia: Option<&[usize]>,
    wb: &[Vec3],
    ib: Option<&[usize]>,
    ga: &mut [Vec3],
    gb: &mut [Vec3],
) -> Result<()> {
    let ca = match ia {
        Some(idx) => crate::geom::subset_centroid(wa, idx)?,
        None => crate::geom::centroid(wa)?,
    };
    let cb = match ib {
        Some(idx) => crate::geom::subset_centroid(wb, idx)?,
        None => crate::geom::centroid(wb)?,
    };
    let d = ca - cb;
    let dist = d.norm();
    *value += dist;
    if dist < 1e-12 {
        return Ok(());
    }
    let dir = d / dist;
    match ia {
        Some(idx) => {
            let w = weight / idx.len() as f64;
            for &i in idx {
                ga[i] += dir * w;
            }
        }
        None => {
            let w = weight / wa.len() as f64;
            for g in ga.iter_mut() {
                *g += dir * w;
            }
        }
    }
    match ib {
        Some(idx) => {
            let w = weight / idx.len() as f64;
            for &i in idx {
                gb[i] -= dir * w;
            }
        }
        None => {
            let w = weight / wb.len() as f64;
            for g in gb.iter_mut() {
                *g -= dir * w;
            }
        }
    }
    Ok(())
}

/// Sum of centroid distances over interacting (human, object) pairs.
/// Returns the raw value; gradients are accumulated scaled by `weight`.
pub fn coarse_interaction_loss(
    scene: &Scene,
    world: &[Vec<Vec3>],
    set: &InteractionSet,
    weight: f64,
    grads: &mut VertexGrads,
) -> Result<f64> {
    let nh = scene.humans.len();
    let mut value = 0.0;
    for &(h, o) in &set.pairs {
        let (gh, go) = split_pair(&mut grads.0, h, nh + o);
        centroid_pull(&mut value, weight, &world[h], None, &world[nh + o], None, gh, go)?;
    }
    Ok(value)
}

/// Sum of part-centroid distances over active part pairs. Returns the raw
/// value; gradients are accumulated scaled by `weight`.
pub fn fine_interaction_loss(
    scene: &Scene,
    world: &[Vec<Vec3>],
    set: &InteractionSet,
    weight: f64,
    grads: &mut VertexGrads,
) -> Result<f64> {
    let nh = scene.humans.len();
    let mut value = 0.0;
    for pp in &set.part_pairs {
        let hmesh = scene.humans[pp.human].mesh.clone();
        let omesh = scene.objects[pp.object].mesh.clone();
        let hidx = hmesh.part(&pp.human_part)?;
        let oidx = omesh.part(&pp.object_part)?;
        let (gh, go) = split_pair(&mut grads.0, pp.human, nh + pp.object);
        centroid_pull(
            &mut value,
            weight,
            &world[pp.human],
            Some(hidx),
            &world[nh + pp.object],
            Some(oidx),
            gh,
            go,
        )?;
    }
    Ok(value)
}

/// Two simultaneous mutable borrows of distinct instance gradient buffers.
fn split_pair(v: &mut [Vec<Vec3>], a: usize, b: usize) -> (&mut [Vec3], &mut [Vec3]) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

// ---------------------------------------------------------------------------
// Scale prior

/// `sum_objects |s - mean_c| + human_weight * sum_humans |s - 1|`.
/// Returns the raw value and `d value / d s` per flat instance (the
/// subgradient at the mean is 0).
pub fn scale_loss(scene: &Scene, stats: &CategoryStats) -> Result<(f64, Vec<f64>)> {
    let mut value = 0.0;
    let mut dscale = vec![0.0; scene.n_instances()];
    for (h, human) in scene.humans.iter().enumerate() {
        let d = human.scale - 1.0;
        value += stats.human_weight * d.abs();
        dscale[h] = stats.human_weight * sign_or_zero(d);
    }
    let nh = scene.humans.len();
    for (o, obj) in scene.objects.iter().enumerate() {
        let mean = stats.mean(&obj.category)?;
        let d = obj.scale - mean;
        value += d.abs();
        dscale[nh + o] = sign_or_zero(d);
    }
    Ok((value, dscale))
}

fn sign_or_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Ordinal depth

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Ranking penalty on rendered depths against the segmentation's visibility.
/// At every pixel whose label is instance `j`, any other instance rendering
/// in front of `j` there (both depths finite, `D_i < D_j`) contributes
/// `ln(1 + exp(D_j - D_i))`. Normalized by pixel count. Returns the raw
/// value and raw `dL/dD` per instance.
pub fn ordinal_depth_loss(
    depths: &[DepthMap],
    labels: &Grid<i32>,
) -> Result<(f64, Vec<Grid<f64>>)> {
    for d in depths {
        if !d.same_size(labels) {
            return Err(Error::DimensionMismatch(format!(
                "depth {}x{} vs labels {}x{}",
                d.width, d.height, labels.width, labels.height
            )));
        }
    }
    let hw = labels.data.len() as f64;
    let mut value = 0.0;
    let mut grads: Vec<Grid<f64>> = depths
        .iter()
        .map(|_| Grid::new(labels.width, labels.height))
        .collect();
    for p in 0..labels.data.len() {
        let j = labels.data[p];
        if j < 0 {
            continue;
        }
        let j = j as usize;
        let dj = depths[j].data[p];
        if !dj.is_finite() {
            continue;
        }
        for i in 0..depths.len() {
            if i == j {
                continue;
            }
            let di = depths[i].data[p];
            if !di.is_finite() || di >= dj {
                continue;
            }
            let gap = dj - di;
            value += softplus(gap) / hw;
            let g = sigmoid(gap) / hw;
            grads[j].data[p] += g;
            grads[i].data[p] -= g;
        }
    }
    Ok((value, grads))
}

// ---------------------------------------------------------------------------
// Interpenetration

/// Penetration of A's vertices into mesh B: summed squared distance to B's
/// surface over A-vertices inside B, divided by A's vertex count. Gradients
/// (scaled by `weight`) go to the intruding vertices and, through the
/// closest point's barycentric coordinates, to B.
fn penetration_one_way(
    va: &[Vec3],
    vb: &[Vec3],
    fb: &[[usize; 3]],
    bvh_b: &Bvh,
    weight: f64,
    ga: &mut [Vec3],
    gb: &mut [Vec3],
) -> f64 {
    let n = va.len() as f64;
    let root = *bvh_b.root_aabb();
    let mut value = 0.0;
    for (vi, v) in va.iter().enumerate() {
        if !root.contains(v) || !is_inside(v, vb, fb) {
            continue;
        }
        let cp = closest_point_on_mesh(v, vb, fb, bvh_b);
        value += cp.dist2 / n;
        let d = (v - cp.point) * (2.0 / n) * weight;
        ga[vi] += d;
        let face = &fb[cp.tri];
        for k in 0..3 {
            gb[face[k]] -= d * cp.bary[k];
        }
    }
    value
}

/// Symmetric interpenetration penalty over all instance pairs. Only pairs
/// with actually intersecting triangles contribute. Returns the raw value
/// and the number of colliding instance pairs; gradients are accumulated
/// scaled by `weight`.
pub fn collision_loss(
    scene: &Scene,
    world: &[Vec<Vec3>],
    weight: f64,
    grads: &mut VertexGrads,
) -> Result<(f64, usize)> {
    let n = scene.n_instances();
    let bvhs: Vec<Bvh> = (0..n)
        .map(|i| Bvh::build(&world[i], &scene.mesh(i).faces))
        .collect::<Result<_>>()?;
    let mut value = 0.0;
    let mut hit_pairs = 0;
    for a in 0..n {
        for b in a + 1..n {
            if !bvhs[a].root_aabb().overlaps(bvhs[b].root_aabb()) {
                continue;
            }
            let fa = &scene.mesh(a).faces;
            let fb = &scene.mesh(b).faces;
            let contacts =
                intersecting_triangle_pairs(&world[a], fa, &bvhs[a], &world[b], fb, &bvhs[b]);
            if contacts.is_empty() {
                continue;
            }
            hit_pairs += 1;
            let (ga, gb) = split_pair(&mut grads.0, a, b);
            value += penetration_one_way(&world[a], &world[b], fb, &bvhs[b], weight, ga, gb);
            let (ga, gb) = split_pair(&mut grads.0, a, b);
            value += penetration_one_way(&world[b], &world[a], fa, &bvhs[a], weight, gb, ga);
        }
    }
    Ok((value, hit_pairs))
}

/// Flat-index instance pairs with at least one intersecting triangle pair.
pub fn colliding_instance_pairs(scene: &Scene, world: &[Vec<Vec3>]) -> Result<Vec<(usize, usize)>> {
    let n = scene.n_instances();
    let bvhs: Vec<Bvh> = (0..n)
        .map(|i| Bvh::build(&world[i], &scene.mesh(i).faces))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if !bvhs[a].root_aabb().overlaps(bvhs[b].root_aabb()) {
                continue;
            }
            let contacts = intersecting_triangle_pairs(
                &world[a],
                &scene.mesh(a).faces,
                &bvhs[a],
                &world[b],
                &scene.mesh(b).faces,
                &bvhs[b],
            );
            if !contacts.is_empty() {
                out.push((a, b));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Orchestration

/// Renders of the human instances that stay valid for the whole joint
/// optimization: projection is invariant to the intrinsic scale (the only
/// free human parameter), and depth scales linearly with it. Built with
/// every human at scale 1.
#[derive(Debug, Clone)]
pub struct HumanRenderCache {
    pub sil: Vec<SoftSilhouette>,
    pub depth: Vec<DepthRender>,
}

impl HumanRenderCache {
    pub fn build(scene: &Scene, cam: &Camera, sharpness: f64) -> Result<Self> {
        let mut sil = Vec::with_capacity(scene.humans.len());
        let mut depth = Vec::with_capacity(scene.humans.len());
        for h in &scene.humans {
            let base = crate::geom::place_human(&h.mesh.vertices, 1.0, h.tx, h.ty, h.sigma, cam.f)?;
            sil.push(render_silhouette(&base, &h.mesh.faces, cam, sharpness).coverage);
            depth.push(render_depth(&base, &h.mesh.faces, cam));
        }
        Ok(HumanRenderCache { sil, depth })
    }
}

/// Weighted contributions of each term; `total` is their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub occ_sil: f64,
    pub coarse: f64,
    pub fine: f64,
    pub scale: f64,
    pub depth: f64,
    pub collision: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str =
        "iter,L_occ_sil,L_coarse,L_fine,L_scale,L_depth,L_collision,total";

    pub fn csv_row(&self, iter: usize) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            iter, self.occ_sil, self.coarse, self.fine, self.scale, self.depth, self.collision,
            self.total
        )
    }
}

#[derive(Debug, Clone)]
pub struct JointEval {
    pub breakdown: LossBreakdown,
    /// Gradient over the packed parameter vector.
    pub grad: Vec<f64>,
    /// Instance pairs with intersecting triangles (only counted while the
    /// collision term is active).
    pub colliding_pairs: usize,
}

/// Full arrangement objective: value, per-term breakdown, and the gradient
/// over every free parameter. Interaction membership, depth-violation sets,
/// and collision contacts are all recomputed at the current parameters.
pub fn joint_loss(
    scene: &Scene,
    obs: &Observations,
    table: &CategoryTable,
    stats: &CategoryStats,
    weights: &LossWeights,
    cache: &HumanRenderCache,
    sharpness: f64,
) -> Result<JointEval> {
    let layout = ParamLayout::of(scene);
    let n = scene.n_instances();
    if obs.masks.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} masks for {} instances",
            obs.masks.len(),
            n
        )));
    }
    let world = scene.all_world_vertices()?;
    let nh = scene.humans.len();
    let cam = obs.camera;
    let mut vgrads = VertexGrads::zeros(scene);
    let mut direct = vec![0.0; layout.len()];
    let mut bd = LossBreakdown::default();
    let mut colliding = 0;

    if weights.occ_sil > 0.0 {
        let mut raw = 0.0;
        for h in 0..nh {
            let (v, _) = occ_sil_loss(&cache.sil[h], &obs.masks[h], &obs.indicators[h], None)?;
            raw += v; // constant in the free parameters: no gradient
        }
        for o in 0..scene.objects.len() {
            let i = nh + o;
            let r = render_silhouette(&world[i], &scene.mesh(i).faces, &cam, sharpness);
            let (v, mut ds) = occ_sil_loss(&r.coverage, &obs.masks[i], &obs.indicators[i], None)?;
            raw += v;
            for g in &mut ds.data {
                *g *= weights.occ_sil;
            }
            vgrads.add(i, &r.backward(&scene.mesh(i).faces, &ds));
        }
        bd.occ_sil = weights.occ_sil * raw;
    }

    if weights.interaction > 0.0 {
        let set = detect_interactions(scene, table, &world)?;
        let c = coarse_interaction_loss(scene, &world, &set, weights.interaction, &mut vgrads)?;
        let f = fine_interaction_loss(scene, &world, &set, weights.interaction, &mut vgrads)?;
        bd.coarse = weights.interaction * c;
        bd.fine = weights.interaction * f;
    }

    if weights.scale > 0.0 {
        let (v, dscale) = scale_loss(scene, stats)?;
        bd.scale = weights.scale * v;
        for h in 0..nh {
            direct[layout.human_offset(h)] +=
                weights.scale * dscale[h] * scene.humans[h].scale;
        }
        for (o, obj) in scene.objects.iter().enumerate() {
            direct[layout.object_offset(o)] += weights.scale * dscale[nh + o] * obj.scale;
        }
    }

    if weights.depth > 0.0 {
        let mut object_renders = Vec::with_capacity(scene.objects.len());
        let mut depths = Vec::with_capacity(n);
        for i in 0..n {
            match scene.instance(i) {
                InstanceRef::Human(h) => {
                    let s = scene.humans[h].scale;
                    let mut d = cache.depth[h].depth.clone();
                    for v in &mut d.data {
                        *v *= s;
                    }
                    depths.push(d);
                }
                InstanceRef::Object(_) => {
                    let r = render_depth(&world[i], &scene.mesh(i).faces, &cam);
                    depths.push(r.depth.clone());
                    object_renders.push(r);
                }
            }
        }
        let (v, mut dgrids) = ordinal_depth_loss(&depths, &obs.labels)?;
        bd.depth = weights.depth * v;
        let mut oi = 0;
        for i in 0..n {
            for g in &mut dgrids[i].data {
                *g *= weights.depth;
            }
            let vg = match scene.instance(i) {
                InstanceRef::Human(h) => {
                    cache.depth[h].backward_z(&scene.mesh(i).faces, world[i].len(), &dgrids[i])
                }
                InstanceRef::Object(_) => {
                    let r = &object_renders[oi];
                    oi += 1;
                    r.backward_z(&scene.mesh(i).faces, world[i].len(), &dgrids[i])
                }
            };
            vgrads.add(i, &vg);
        }
    }

    if weights.collision > 0.0 {
        let (v, pairs) = collision_loss(scene, &world, weights.collision, &mut vgrads)?;
        bd.collision = weights.collision * v;
        colliding = pairs;
    }

    bd.total = bd.occ_sil + bd.coarse + bd.fine + bd.scale + bd.depth + bd.collision;
    let mut grad = backprop_to_params(scene, &layout, &world, &vgrads)?;
    for (g, d) in grad.iter_mut().zip(&direct) {
        *g += d;
    }
    Ok(JointEval {
        breakdown: bd,
        grad,
        colliding_pairs: colliding,
    })
}

// ---------------------------------------------------------------------------
// Single-instance fit objective

/// Target data for fitting one object to one mask, prepared once.
#[derive(Debug, Clone)]
pub struct FitTarget {
    pub mask: Mask,
    pub indicator: OcclusionIndicator,
    /// Distance field to the mask's boundary ring.
    pub edt_edge: Grid<f64>,
}

impl FitTarget {
    pub fn new(mask: Mask, indicator: OcclusionIndicator) -> Result<Self> {
        if !mask.same_size(&indicator) {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs indicator {}x{}",
                mask.width, mask.height, indicator.width, indicator.height
            )));
        }
        if mask.fg_count() == 0 {
            return Err(Error::EmptyMask);
        }
        let edt_edge = chamfer_field(&mask);
        Ok(FitTarget {
            mask,
            indicator,
            edt_edge,
        })
    }
}

/// Objective for one object instance against its mask: silhouette alignment
/// (with the boundary term when `chamfer` is set) plus the offscreen
/// penalty. Returns the value and the gradient over the instance's packed
/// parameters `[log s, a1, a2, t]`; the fit stage only steps rotation and
/// translation.
pub fn fit_loss(
    obj: &crate::scene::ObjectInstance,
    cam: &Camera,
    target: &FitTarget,
    chamfer: bool,
    offscreen_weight: f64,
    sharpness: f64,
) -> Result<(f64, Vec<f64>)> {
    let mini = Scene {
        camera: *cam,
        humans: vec![],
        objects: vec![obj.clone()],
        masks: vec![],
    };
    let layout = ParamLayout::of(&mini);
    let world = mini.all_world_vertices()?;
    let faces = &mini.mesh(0).faces;

    let render = render_silhouette(&world[0], faces, cam, sharpness);
    let field = chamfer.then_some(&target.edt_edge);
    let (mut value, ds) = occ_sil_loss(&render.coverage, &target.mask, &target.indicator, field)?;
    let mut vgrads = VertexGrads::zeros(&mini);
    vgrads.add(0, &render.backward(faces, &ds));

    let (off_value, off_grads) = offscreen_penalty(&world[0], cam);
    value += offscreen_weight * off_value;
    vgrads.add_scaled(0, &off_grads, offscreen_weight);

    let grad = backprop_to_params(&mini, &layout, &world, &vgrads)?;
    Ok((value, grad))
}

/// Value-only variant of [`fit_loss`], cheap enough to score thousands of
/// restart candidates.
pub fn fit_score(
    obj: &crate::scene::ObjectInstance,
    cam: &Camera,
    target: &FitTarget,
    chamfer: bool,
    offscreen_weight: f64,
    sharpness: f64,
) -> Result<f64> {
    let world = obj.world_vertices()?;
    let render = render_silhouette(&world, &obj.mesh.faces, cam, sharpness);
    let field = chamfer.then_some(&target.edt_edge);
    let (value, _) = occ_sil_loss(&render.coverage, &target.mask, &target.indicator, field)?;
    let (off, _) = offscreen_penalty(&world, cam);
    Ok(value + offscreen_weight * off)
}
