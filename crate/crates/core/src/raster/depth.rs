//! Z-buffered depth rendering with screen-space barycentric interpolation.
//!
//! Each covered pixel records the frontmost triangle and its barycentric
//! weights, so depth gradients can be scattered back to the z components of
//! that triangle's vertices. (Lateral vertex motion also changes the
//! weights; that effect is owned by the silhouette term, which sees the
//! full projection Jacobian.)

use super::{DepthMap, Grid};
use crate::geom::{Camera, Vec3};

const DEGENERATE_AREA: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct DepthRender {
    /// Interpolated depth per pixel; infinity where nothing renders.
    pub depth: DepthMap,
    /// Index of the frontmost triangle per pixel, -1 where empty.
    pub tri: Grid<i32>,
    /// Barycentric weights of the pixel center in the frontmost triangle.
    pub bary: Grid<[f64; 3]>,
    pub clamped_vertices: usize,
}

pub fn render_depth(verts: &[Vec3], faces: &[[usize; 3]], cam: &Camera) -> DepthRender {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut depth = Grid::filled(w, h, f64::INFINITY);
    let mut tri = Grid::filled(w, h, -1i32);
    let mut bary = Grid::filled(w, h, [0.0f64; 3]);

    let mut ndc = Vec::with_capacity(verts.len());
    let mut zp = Vec::with_capacity(verts.len());
    let mut clamped_vertices = 0usize;
    for v in verts {
        let (u, vv, z, cl) = cam.ndc_clamped(v);
        ndc.push((u, vv));
        zp.push(z);
        clamped_vertices += cl as usize;
    }

    let col_u: Vec<f64> = (0..w)
        .map(|x| cam.ndc_from_pixel(x as f64 + 0.5, 0.0).0)
        .collect();
    let row_v: Vec<f64> = (0..h)
        .map(|y| cam.ndc_from_pixel(0.0, y as f64 + 0.5).1)
        .collect();

    for (ti, face) in faces.iter().enumerate() {
        let a = ndc[face[0]];
        let b = ndc[face[1]];
        let c = ndc[face[2]];
        let area2 = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if area2.abs() < DEGENERATE_AREA || !area2.is_finite() {
            continue;
        }
        let inv_area2 = 1.0 / area2;
        let pix = |p: (f64, f64)| cam.pixel_from_ndc(p.0, p.1);
        let (pa, pb, pc) = (pix(a), pix(b), pix(c));
        let x0 = pa.0.min(pb.0).min(pc.0).floor().clamp(0.0, w as f64 - 1.0) as usize;
        let x1 = pa.0.max(pb.0).max(pc.0).ceil().clamp(0.0, w as f64 - 1.0) as usize;
        let y0 = pa.1.min(pb.1).min(pc.1).floor().clamp(0.0, h as f64 - 1.0) as usize;
        let y1 = pa.1.max(pb.1).max(pc.1).ceil().clamp(0.0, h as f64 - 1.0) as usize;
        let (za, zb, zc) = (zp[face[0]], zp[face[1]], zp[face[2]]);
        for y in y0..=y1 {
            let pv = row_v[y];
            for x in x0..=x1 {
                let pu = col_u[x];
                // Barycentric weights via signed sub-areas.
                let la = ((c.0 - b.0) * (pv - b.1) - (c.1 - b.1) * (pu - b.0)) * inv_area2;
                let lb = ((a.0 - c.0) * (pv - c.1) - (a.1 - c.1) * (pu - c.0)) * inv_area2;
                let lc = 1.0 - la - lb;
                if la < 0.0 || lb < 0.0 || lc < 0.0 {
                    continue;
                }
                let z = la * za + lb * zb + lc * zc;
                let i = y * w + x;
                if z < depth.data[i] {
                    depth.data[i] = z;
                    tri.data[i] = ti as i32;
                    bary.data[i] = [la, lb, lc];
                }
            }
        }
    }

    DepthRender {
        depth,
        tri,
        bary,
        clamped_vertices,
    }
}

impl DepthRender {
    /// Scatters a per-pixel depth gradient to vertex z gradients through the
    /// stored barycentric weights. `n_verts` and `faces` must match the
    /// render inputs.
    pub fn backward_z(
        &self,
        faces: &[[usize; 3]],
        n_verts: usize,
        d_depth: &Grid<f64>,
    ) -> Vec<Vec3> {
        let mut grads = vec![Vec3::zeros(); n_verts];
        for i in 0..self.depth.data.len() {
            let g = d_depth.data[i];
            if g == 0.0 || self.tri.data[i] < 0 {
                continue;
            }
            let face = &faces[self.tri.data[i] as usize];
            let w = self.bary.data[i];
            for k in 0..3 {
                grads[face[k]].z += g * w[k];
            }
        }
        grads
    }
}
