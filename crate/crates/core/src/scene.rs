//! Scene state: the per-image collection of human and object instances,
//! their observation data (masks at the working resolution), the flat
//! parameter vector the joint optimizer walks, and the chain rule that
//! turns per-vertex world-space gradients into parameter gradients.
//!
//! Parameter layout: one `log s` per human, then
//! `[log s, a1(3), a2(3), t(3)]` per object. Scales live in log space so
//! positivity needs no constraint handling.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{
    centroid, place_human, place_object, Aabb, Camera, Mat3, Rotation6D, TriMesh, Vec3,
};
use crate::raster::{label_map, occlusion_indicator, Grid, Mask, OcclusionIndicator};

#[derive(Debug, Clone)]
pub struct HumanInstance {
    pub mesh: Arc<TriMesh>,
    /// Intrinsic scale; the only free parameter during joint optimization.
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
    /// Weak-perspective scale from the upstream body-mesh regressor; the
    /// depth of the instance is `f / sigma` before intrinsic scaling.
    pub sigma: f64,
}

impl HumanInstance {
    pub fn world_vertices(&self, f: f64) -> Result<Vec<Vec3>> {
        place_human(&self.mesh.vertices, self.scale, self.tx, self.ty, self.sigma, f)
    }
}

#[derive(Debug, Clone)]
pub struct ObjectInstance {
    pub category: String,
    pub exemplar: usize,
    pub mesh: Arc<TriMesh>,
    pub scale: f64,
    pub rotation: Rotation6D,
    pub translation: Vec3,
}

impl ObjectInstance {
    pub fn world_vertices(&self) -> Result<Vec<Vec3>> {
        place_object(&self.mesh.vertices, self.scale, &self.rotation, self.translation)
    }
}

/// Flat instance addressing: humans first, then objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceRef {
    Human(usize),
    Object(usize),
}

#[derive(Debug, Clone)]
pub struct Scene {
    /// Full-resolution camera for the source image.
    pub camera: Camera,
    pub humans: Vec<HumanInstance>,
    pub objects: Vec<ObjectInstance>,
    /// Full-resolution instance masks in flat instance order.
    pub masks: Vec<Mask>,
}

impl Scene {
    pub fn n_instances(&self) -> usize {
        self.humans.len() + self.objects.len()
    }

    pub fn instance(&self, i: usize) -> InstanceRef {
        if i < self.humans.len() {
            InstanceRef::Human(i)
        } else {
            InstanceRef::Object(i - self.humans.len())
        }
    }

    pub fn mesh(&self, i: usize) -> &TriMesh {
        match self.instance(i) {
            InstanceRef::Human(h) => &self.humans[h].mesh,
            InstanceRef::Object(o) => &self.objects[o].mesh,
        }
    }

    pub fn category_of(&self, i: usize) -> Option<&str> {
        match self.instance(i) {
            InstanceRef::Human(_) => None,
            InstanceRef::Object(o) => Some(&self.objects[o].category),
        }
    }

    pub fn scale_of(&self, i: usize) -> f64 {
        match self.instance(i) {
            InstanceRef::Human(h) => self.humans[h].scale,
            InstanceRef::Object(o) => self.objects[o].scale,
        }
    }

    pub fn world_vertices(&self, i: usize) -> Result<Vec<Vec3>> {
        match self.instance(i) {
            InstanceRef::Human(h) => self.humans[h].world_vertices(self.camera.f),
            InstanceRef::Object(o) => self.objects[o].world_vertices(),
        }
    }

    pub fn all_world_vertices(&self) -> Result<Vec<Vec<Vec3>>> {
        (0..self.n_instances()).map(|i| self.world_vertices(i)).collect()
    }

    pub fn world_bbox(&self, i: usize) -> Result<Aabb> {
        Aabb::from_points(&self.world_vertices(i)?)
    }

    pub fn world_centroid(&self, i: usize) -> Result<Vec3> {
        centroid(&self.world_vertices(i)?)
    }
}

/// Observation data resampled to the loss working resolution.
#[derive(Debug, Clone)]
pub struct Observations {
    pub camera: Camera,
    pub masks: Vec<Mask>,
    pub indicators: Vec<OcclusionIndicator>,
    /// Per-pixel instance label (-1 background); overlaps resolve to the
    /// lowest instance index.
    pub labels: Grid<i32>,
}

impl Observations {
    pub fn prepare(scene: &Scene, longer: u32) -> Result<Self> {
        if scene.masks.len() != scene.n_instances() {
            return Err(Error::DimensionMismatch(format!(
                "{} masks for {} instances",
                scene.masks.len(),
                scene.n_instances()
            )));
        }
        let camera = scene.camera.at_resolution(longer.min(scene.camera.width.max(scene.camera.height)));
        let masks: Vec<Mask> = scene.masks.iter().map(|m| m.downsample_to(longer)).collect();
        for (i, m) in masks.iter().enumerate() {
            if (m.width as u32, m.height as u32) != (camera.width, camera.height) {
                return Err(Error::DimensionMismatch(format!(
                    "mask {i} resampled to {}x{}, camera is {}x{}",
                    m.width, m.height, camera.width, camera.height
                )));
            }
        }
        let indicators = (0..masks.len())
            .map(|i| occlusion_indicator(i, &masks))
            .collect::<Result<Vec<_>>>()?;
        let labels = label_map(&masks)?;
        Ok(Observations {
            camera,
            masks,
            indicators,
            labels,
        })
    }
}

// ---------------------------------------------------------------------------
// Parameter packing

pub const OBJECT_PARAMS: usize = 10;

#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub n_humans: usize,
    pub n_objects: usize,
}

impl ParamLayout {
    pub fn of(scene: &Scene) -> Self {
        ParamLayout {
            n_humans: scene.humans.len(),
            n_objects: scene.objects.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_humans + self.n_objects * OBJECT_PARAMS
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn human_offset(&self, h: usize) -> usize {
        h
    }

    pub fn object_offset(&self, o: usize) -> usize {
        self.n_humans + o * OBJECT_PARAMS
    }
}

/// Serializes the free parameters of every instance.
pub fn pack_params(scene: &Scene) -> (Vec<f64>, ParamLayout) {
    let layout = ParamLayout::of(scene);
    let mut p = vec![0.0; layout.len()];
    for (h, human) in scene.humans.iter().enumerate() {
        p[layout.human_offset(h)] = human.scale.ln();
    }
    for (o, obj) in scene.objects.iter().enumerate() {
        let base = layout.object_offset(o);
        p[base] = obj.scale.ln();
        p[base + 1..base + 7].copy_from_slice(&obj.rotation.0);
        p[base + 7] = obj.translation.x;
        p[base + 8] = obj.translation.y;
        p[base + 9] = obj.translation.z;
    }
    (p, layout)
}

/// Writes a parameter vector back into the scene.
pub fn unpack_params(scene: &mut Scene, layout: &ParamLayout, p: &[f64]) {
    assert_eq!(p.len(), layout.len());
    for h in 0..layout.n_humans {
        scene.humans[h].scale = p[layout.human_offset(h)].exp();
    }
    for o in 0..layout.n_objects {
        let base = layout.object_offset(o);
        scene.objects[o].scale = p[base].exp();
        let mut a = [0.0; 6];
        a.copy_from_slice(&p[base + 1..base + 7]);
        scene.objects[o].rotation = Rotation6D(a);
        scene.objects[o].translation = Vec3::new(p[base + 7], p[base + 8], p[base + 9]);
    }
}

/// Per-instance world-space vertex gradients, flat instance order.
#[derive(Debug, Clone)]
pub struct VertexGrads(pub Vec<Vec<Vec3>>);

impl VertexGrads {
    pub fn zeros(scene: &Scene) -> Self {
        VertexGrads(
            (0..scene.n_instances())
                .map(|i| vec![Vec3::zeros(); scene.mesh(i).vertices.len()])
                .collect(),
        )
    }

    pub fn add(&mut self, instance: usize, grads: &[Vec3]) {
        let dst = &mut self.0[instance];
        assert_eq!(dst.len(), grads.len());
        for (d, g) in dst.iter_mut().zip(grads) {
            *d += g;
        }
    }

    pub fn add_scaled(&mut self, instance: usize, grads: &[Vec3], w: f64) {
        let dst = &mut self.0[instance];
        assert_eq!(dst.len(), grads.len());
        for (d, g) in dst.iter_mut().zip(grads) {
            *d += g * w;
        }
    }
}

/// Chain rule from world-vertex gradients to the packed parameter vector.
///
/// Humans: `w = s (v + T)` so `dL/d log s = sum_i G_i . w_i`.
/// Objects: `w = s (R v + t)` gives
///   `dL/d log s = sum_i G_i . w_i`,
///   `dL/d t     = s * sum_i G_i`,
///   `dL/d a_k   = s * <dR/da_k, sum_i G_i v_i^T>`.
pub fn backprop_to_params(
    scene: &Scene,
    layout: &ParamLayout,
    world: &[Vec<Vec3>],
    grads: &VertexGrads,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; layout.len()];
    for h in 0..layout.n_humans {
        let g = &grads.0[h];
        let w = &world[h];
        out[layout.human_offset(h)] = g.iter().zip(w).map(|(gi, wi)| gi.dot(wi)).sum();
    }
    for o in 0..layout.n_objects {
        let inst = layout.n_humans + o;
        let obj = &scene.objects[o];
        let g = &grads.0[inst];
        let w = &world[inst];
        let base = layout.object_offset(o);

        out[base] = g.iter().zip(w).map(|(gi, wi)| gi.dot(wi)).sum();
        let gsum: Vec3 = g.iter().sum();
        out[base + 7] = obj.scale * gsum.x;
        out[base + 8] = obj.scale * gsum.y;
        out[base + 9] = obj.scale * gsum.z;

        let mut m = Mat3::zeros();
        for (gi, vi) in g.iter().zip(&obj.mesh.vertices) {
            m += gi * vi.transpose();
        }
        let (_, jac) = obj.rotation.matrix_and_jacobian()?;
        for k in 0..6 {
            out[base + 1 + k] = obj.scale * jac[k].component_mul(&m).sum();
        }
    }
    Ok(out)
}
