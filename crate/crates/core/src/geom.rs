//! Core geometry: triangle meshes, the 6D rotation parameterization,
//! pinhole cameras, and the placement equations that map instance
//! parameters to world-space vertices.
//!
//! Coordinate conventions: camera frame is x right, y down, z forward.
//! Normalized device coordinates (NDC) span `[-1, 1]` across the *longer*
//! image side; the shorter side covers a proportionally smaller range.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Vertices closer than this are clamped during rasterization rather than
/// rejected: the pose search visits arbitrarily bad poses and must not abort.
pub const NEAR_PLANE: f64 = 1e-3;

/// Threshold below which 6D rotation inputs count as degenerate.
const ROT6D_DEGENERACY: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Triangle meshes

/// Indexed triangle mesh with optional named part regions (vertex subsets).
#[derive(Debug, Clone, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    parts: BTreeMap<String, Vec<usize>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::Mesh(format!(
                    "face {i} references vertex out of range (mesh has {n} vertices)"
                )));
            }
        }
        Ok(TriMesh {
            vertices,
            faces,
            parts: BTreeMap::new(),
        })
    }

    /// Registers a named part region. Indices are sorted and deduplicated.
    pub fn add_part(&mut self, name: impl Into<String>, mut indices: Vec<usize>) -> Result<()> {
        let name = name.into();
        if indices.is_empty() {
            return Err(Error::Mesh(format!("part `{name}` has no vertices")));
        }
        let n = self.vertices.len();
        if indices.iter().any(|&v| v >= n) {
            return Err(Error::Mesh(format!(
                "part `{name}` references vertex out of range"
            )));
        }
        indices.sort_unstable();
        indices.dedup();
        self.parts.insert(name, indices);
        Ok(())
    }

    pub fn part(&self, name: &str) -> Result<&[usize]> {
        self.parts
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UnknownPart(name.to_string()))
    }

    pub fn parts(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.parts.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn has_part(&self, name: &str) -> bool {
        self.parts.contains_key(name)
    }

    pub fn bbox(&self) -> Result<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    /// Diagonal length of the axis-aligned bounding box; used as the size
    /// proxy when initializing translations from mask extents.
    pub fn bbox_diagonal(&self) -> Result<f64> {
        let b = self.bbox()?;
        Ok((b.max - b.min).norm())
    }

    /// Number of edges not shared by exactly two faces. Zero for a
    /// watertight (possibly multi-component) mesh.
    pub fn nonmanifold_edge_count(&self) -> usize {
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        counts.values().filter(|&&c| c != 2).count()
    }
}

// ---------------------------------------------------------------------------
// Axis-aligned bounding boxes

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter(
                "bounding box of empty point set".into(),
            ));
        }
        let mut min = points[0];
        let mut max = points[0];
        for p in &points[1..] {
            min = min.inf(p);
            max = max.sup(p);
        }
        Ok(Aabb { min, max })
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    /// Grows each side outward by `factor * extent` along the given axes,
    /// so the width along an expanded axis becomes `(1 + 2 factor) * width`.
    pub fn expanded(&self, factors: Vec3) -> Aabb {
        let grow = self.extents().component_mul(&factors);
        Aabb {
            min: self.min - grow,
            max: self.max + grow,
        }
    }

    /// Closed-interval overlap test (touching boxes count as overlapping).
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && self.max[k] >= other.min[k])
    }

    /// Overlap restricted to the x and y axes.
    pub fn overlaps_xy(&self, other: &Aabb) -> bool {
        (0..2).all(|k| self.min[k] <= other.max[k] && self.max[k] >= other.min[k])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x.max(0.0) * e.y.max(0.0) * e.z.max(0.0)
    }
}

// ---------------------------------------------------------------------------
// 6D rotation parameterization

/// Rotation stored as two free 3-vectors: the un-normalized first two
/// columns of the rotation matrix. The matrix is materialized on demand via
/// Gram-Schmidt, which keeps the parameterization continuous and
/// optimizer-friendly; there are no constraints to maintain between steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation6D(pub [f64; 6]);

impl Rotation6D {
    pub fn identity() -> Self {
        Rotation6D([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    /// Takes the first two columns of `m` as the parameters. If `m` is a
    /// rotation matrix, `to_matrix` reproduces it exactly.
    pub fn from_matrix(m: &Mat3) -> Self {
        let c0 = m.column(0);
        let c1 = m.column(1);
        Rotation6D([c0[0], c0[1], c0[2], c1[0], c1[1], c1[2]])
    }

    pub fn a1(&self) -> Vec3 {
        Vec3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn a2(&self) -> Vec3 {
        Vec3::new(self.0[3], self.0[4], self.0[5])
    }

    /// Gram-Schmidt orthonormalization:
    /// `b1 = a1/|a1|`, `b2 = normalize(a2 - (b1.a2) b1)`, `b3 = b1 x b2`.
    /// Errors if `a1` is near zero or `a2` is near parallel to `a1`.
    pub fn to_matrix(&self) -> Result<Mat3> {
        let (m, _) = self.matrix_inner(false)?;
        Ok(m)
    }

    /// Matrix plus the Jacobian `d R / d params` as six 3x3 matrices
    /// (`jac[k][(i, j)] = d R_ij / d p_k`).
    pub fn matrix_and_jacobian(&self) -> Result<(Mat3, [Mat3; 6])> {
        let (m, jac) = self.matrix_inner(true)?;
        Ok((m, jac.expect("jacobian requested")))
    }

    fn matrix_inner(&self, with_jac: bool) -> Result<(Mat3, Option<[Mat3; 6]>)> {
        let a1 = self.a1();
        let a2 = self.a2();
        let n1 = a1.norm();
        if n1 <= ROT6D_DEGENERACY {
            return Err(Error::DegenerateRotation("first vector is near zero".into()));
        }
        let b1 = a1 / n1;
        let alpha = b1.dot(&a2);
        let u = a2 - b1 * alpha;
        let n2 = u.norm();
        if n2 <= ROT6D_DEGENERACY {
            return Err(Error::DegenerateRotation(
                "second vector is near parallel to the first".into(),
            ));
        }
        let b2 = u / n2;
        let b3 = b1.cross(&b2);
        let m = Mat3::from_columns(&[b1, b2, b3]);
        if !with_jac {
            return Ok((m, None));
        }

        // d b1 / d a1 = (I - b1 b1^T) / |a1|
        let p1 = (Mat3::identity() - b1 * b1.transpose()) / n1;
        // d b2 / d u = (I - b2 b2^T) / |u|
        let p2 = (Mat3::identity() - b2 * b2.transpose()) / n2;
        // u = a2 - (b1.a2) b1  =>  d u / d b1 = -(b1 a2^T + alpha I)
        let du_db1 = -(b1 * a2.transpose() + Mat3::identity() * alpha);
        let db2_da1 = p2 * du_db1 * p1;
        let db2_da2 = p2 * (Mat3::identity() - b1 * b1.transpose());

        let cross_b1 = skew(b1);
        let cross_b2 = skew(b2);

        let mut jac = [Mat3::zeros(); 6];
        for k in 0..3 {
            let e = Vec3::ith(k, 1.0);
            let db1 = p1 * e;
            let db2 = db2_da1 * e;
            // d (b1 x b2) = d b1 x b2 + b1 x d b2
            let db3 = -cross_b2 * db1 + cross_b1 * db2;
            jac[k] = Mat3::from_columns(&[db1, db2, db3]);
        }
        for k in 0..3 {
            let e = Vec3::ith(k, 1.0);
            let db2 = db2_da2 * e;
            let db3 = cross_b1 * db2;
            jac[3 + k] = Mat3::from_columns(&[Vec3::zeros(), db2, db3]);
        }
        Ok((m, Some(jac)))
    }
}

fn skew(v: Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Geodesic angle between two rotation matrices, in radians.
pub fn geodesic_angle(a: &Mat3, b: &Mat3) -> f64 {
    let r = a.transpose() * b;
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    c.acos()
}

// ---------------------------------------------------------------------------
// Camera

/// Pinhole camera with a normalized focal length: NDC `u = f x / z`,
/// `v = f y / z`, with the longer image side spanning `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub f: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    /// Pixel coordinates (x right, y down), continuous.
    pub pixel: (f64, f64),
    pub depth: f64,
}

impl Camera {
    pub fn new(f: f64, width: u32, height: u32) -> Result<Self> {
        if !(f > 0.0) || width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "camera needs f > 0 and nonzero size (got f = {f}, {width}x{height})"
            )));
        }
        Ok(Camera { f, width, height })
    }

    /// Default normalized camera (`f = 1`).
    pub fn normalized(width: u32, height: u32) -> Result<Self> {
        Camera::new(1.0, width, height)
    }

    fn half_span(&self) -> f64 {
        self.width.max(self.height) as f64 * 0.5
    }

    pub fn ndc(&self, p: &Vec3) -> Result<(f64, f64)> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera { z: p.z });
        }
        Ok((self.f * p.x / p.z, self.f * p.y / p.z))
    }

    /// Projection with the near-plane clamp used by the rasterizer. Returns
    /// NDC, the (possibly clamped) depth, and whether clamping fired.
    pub fn ndc_clamped(&self, p: &Vec3) -> (f64, f64, f64, bool) {
        let clamped = p.z < NEAR_PLANE;
        let z = if clamped { NEAR_PLANE } else { p.z };
        (self.f * p.x / z, self.f * p.y / z, z, clamped)
    }

    pub fn pixel_from_ndc(&self, u: f64, v: f64) -> (f64, f64) {
        let h = self.half_span();
        (
            u * h + self.width as f64 * 0.5,
            v * h + self.height as f64 * 0.5,
        )
    }

    pub fn ndc_from_pixel(&self, px: f64, py: f64) -> (f64, f64) {
        let h = self.half_span();
        (
            (px - self.width as f64 * 0.5) / h,
            (py - self.height as f64 * 0.5) / h,
        )
    }

    /// Projects points to pixel coordinates plus depths. Errors if any point
    /// lies at or behind the camera plane.
    pub fn project(&self, points: &[Vec3]) -> Result<Vec<ProjectedPoint>> {
        points
            .iter()
            .map(|p| {
                let (u, v) = self.ndc(p)?;
                Ok(ProjectedPoint {
                    pixel: self.pixel_from_ndc(u, v),
                    depth: p.z,
                })
            })
            .collect()
    }

    /// Same camera rescaled so the longer image side equals `longer` pixels.
    pub fn at_resolution(&self, longer: u32) -> Camera {
        let cur = self.width.max(self.height) as f64;
        let s = longer as f64 / cur;
        Camera {
            f: self.f,
            width: ((self.width as f64 * s).round() as u32).max(1),
            height: ((self.height as f64 * s).round() as u32).max(1),
        }
    }
}

// ---------------------------------------------------------------------------
// Placement

/// Places a body mesh in the world: `s * (v + [tx, ty, f / sigma])`.
///
/// The scale multiplies the *already translated* vertices, so changing `s`
/// slides the instance along the ray through its weak-perspective position
/// without changing its projection.
pub fn place_human(
    vertices: &[Vec3],
    scale: f64,
    tx: f64,
    ty: f64,
    sigma: f64,
    f: f64,
) -> Result<Vec<Vec3>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "weak-perspective scale must be positive (got {sigma})"
        )));
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "intrinsic scale must be positive (got {scale})"
        )));
    }
    let t = Vec3::new(tx, ty, f / sigma);
    Ok(vertices.iter().map(|v| (v + t) * scale).collect())
}

/// Places an object mesh in the world: `s * (R v + t)`.
pub fn place_object(
    vertices: &[Vec3],
    scale: f64,
    rotation: &Rotation6D,
    translation: Vec3,
) -> Result<Vec<Vec3>> {
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "intrinsic scale must be positive (got {scale})"
        )));
    }
    let r = rotation.to_matrix()?;
    Ok(vertices
        .iter()
        .map(|v| (r * v + translation) * scale)
        .collect())
}

/// Mean of a vertex array.
pub fn centroid(vertices: &[Vec3]) -> Result<Vec3> {
    if vertices.is_empty() {
        return Err(Error::InvalidParameter("centroid of empty vertex set".into()));
    }
    let sum: Vec3 = vertices.iter().sum();
    Ok(sum / vertices.len() as f64)
}

/// Centroid of a vertex subset selected by indices.
pub fn subset_centroid(vertices: &[Vec3], indices: &[usize]) -> Result<Vec3> {
    if indices.is_empty() {
        return Err(Error::InvalidParameter("centroid of empty vertex subset".into()));
    }
    let mut sum = Vec3::zeros();
    for &i in indices {
        sum += vertices[i];
    }
    Ok(sum / indices.len() as f64)
}
