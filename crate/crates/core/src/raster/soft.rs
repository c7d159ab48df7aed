//! Differentiable silhouette rasterization.
//!
//! Per-pixel coverage of one triangle is `sigmoid(sharpness * d)` where `d`
//! is the signed 2D distance (in NDC units, positive inside) from the pixel
//! center to the projected triangle. Triangle coverages combine into a
//! silhouette with the probabilistic union `1 - prod(1 - p_t)`, which is
//! smooth everywhere and approaches the hard silhouette as the sharpness
//! grows.
//!
//! The backward pass recomputes per-triangle terms and divides them out of
//! the stored union product, so nothing per-pixel-per-triangle is retained.

use super::{sigmoid, Grid, SoftSilhouette};
use crate::geom::{Camera, Vec3};

/// Default sigmoid sharpness, in inverse NDC units.
pub const DEFAULT_SHARPNESS: f64 = 70.0;

/// Beyond `|sharpness * d| > SIG_CUTOFF` the sigmoid is treated as exactly
/// saturated (0 outside / 1 inside); `sigmoid(-12) ~ 6e-6`.
const SIG_CUTOFF: f64 = 12.0;

/// Projected triangles with |2*area| below this (in NDC^2) are skipped.
const DEGENERATE_AREA: f64 = 1e-14;

/// A rendered soft silhouette plus everything needed to push pixel
/// gradients back to world-space vertices.
pub struct SilhouetteRender {
    pub coverage: SoftSilhouette,
    /// Vertices that fell behind the near plane and were clamped.
    pub clamped_vertices: usize,
    sharpness: f64,
    cam: Camera,
    ndc: Vec<(f64, f64)>,
    zp: Vec<f64>,
    clamped: Vec<bool>,
    /// Per-pixel product of (1 - p_t); coverage = 1 - this.
    one_minus: Vec<f64>,
}

struct TriSetup {
    v: [(f64, f64); 3],
    /// Pixel-space bounding box (x0, y0, x1, y1), inclusive, band-dilated.
    bbox: (usize, usize, usize, usize),
    /// Sign of twice the signed area.
    orient: f64,
    inv_len: [f64; 3],
}

fn setup_triangle(
    ndc: &[(f64, f64)],
    face: &[usize; 3],
    cam: &Camera,
    band_ndc: f64,
) -> Option<TriSetup> {
    let a = ndc[face[0]];
    let b = ndc[face[1]];
    let c = ndc[face[2]];
    let area2 = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    if area2.abs() < DEGENERATE_AREA || !area2.is_finite() {
        return None;
    }
    let half = cam.width.max(cam.height) as f64 * 0.5;
    let band_px = band_ndc * half;
    let (w, h) = (cam.width as f64, cam.height as f64);
    let px = |p: (f64, f64)| cam.pixel_from_ndc(p.0, p.1);
    let (pa, pb, pc) = (px(a), px(b), px(c));
    let x0 = (pa.0.min(pb.0).min(pc.0) - band_px).floor().clamp(0.0, w - 1.0);
    let x1 = (pa.0.max(pb.0).max(pc.0) + band_px).ceil().clamp(0.0, w - 1.0);
    let y0 = (pa.1.min(pb.1).min(pc.1) - band_px).floor().clamp(0.0, h - 1.0);
    let y1 = (pa.1.max(pb.1).max(pc.1) + band_px).ceil().clamp(0.0, h - 1.0);
    if x1 < x0 || y1 < y0 {
        return None;
    }
    let edge_len = |p: (f64, f64), q: (f64, f64)| ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2)).sqrt();
    Some(TriSetup {
        v: [a, b, c],
        bbox: (x0 as usize, y0 as usize, x1 as usize, y1 as usize),
        orient: area2.signum(),
        inv_len: [
            1.0 / edge_len(a, b),
            1.0 / edge_len(b, c),
            1.0 / edge_len(c, a),
        ],
    })
}

/// Signed distance from `p` to the triangle, positive inside. The fast
/// interior path uses perpendicular line distances, which equal segment
/// distances for interior points of a triangle.
fn signed_distance(p: (f64, f64), t: &TriSetup) -> f64 {
    let [a, b, c] = t.v;
    let w0 = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let w1 = (c.0 - b.0) * (p.1 - b.1) - (c.1 - b.1) * (p.0 - b.0);
    let w2 = (a.0 - c.0) * (p.1 - c.1) - (a.1 - c.1) * (p.0 - c.0);
    let o = t.orient;
    if w0 * o >= 0.0 && w1 * o >= 0.0 && w2 * o >= 0.0 {
        let d0 = w0.abs() * t.inv_len[0];
        let d1 = w1.abs() * t.inv_len[1];
        let d2 = w2.abs() * t.inv_len[2];
        d0.min(d1).min(d2)
    } else {
        -boundary_distance(p, t).0
    }
}

/// Distance from `p` to the triangle boundary plus the closest feature:
/// (distance, edge index, clamped parameter along that edge).
fn boundary_distance(p: (f64, f64), t: &TriSetup) -> (f64, usize, f64) {
    let [a, b, c] = t.v;
    let edges = [(a, b), (b, c), (c, a)];
    let mut best = (f64::INFINITY, 0usize, 0.0f64);
    for (i, (q0, q1)) in edges.iter().enumerate() {
        let ex = q1.0 - q0.0;
        let ey = q1.1 - q0.1;
        let len2 = ex * ex + ey * ey;
        let tau = if len2 > 0.0 {
            (((p.0 - q0.0) * ex + (p.1 - q0.1) * ey) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let dx = p.0 - (q0.0 + tau * ex);
        let dy = p.1 - (q0.1 + tau * ey);
        let d2 = dx * dx + dy * dy;
        if d2 < best.0 {
            best = (d2, i, tau);
        }
    }
    (best.0.sqrt(), best.1, best.2)
}

/// Signed distance plus its gradient w.r.t. the three 2D vertices.
fn signed_distance_grad(p: (f64, f64), t: &TriSetup) -> (f64, [(f64, f64); 3]) {
    let [a, b, c] = t.v;
    let w0 = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let w1 = (c.0 - b.0) * (p.1 - b.1) - (c.1 - b.1) * (p.0 - b.0);
    let w2 = (a.0 - c.0) * (p.1 - c.1) - (a.1 - c.1) * (p.0 - c.0);
    let o = t.orient;
    let inside = w0 * o >= 0.0 && w1 * o >= 0.0 && w2 * o >= 0.0;
    let (dist, edge, tau) = boundary_distance(p, t);

    let mut grads = [(0.0, 0.0); 3];
    if dist < 1e-12 {
        // Pixel exactly on the boundary: the direction is undefined and the
        // true gradient is a subgradient; drop it.
        return (0.0, grads);
    }
    let (i0, i1) = (edge, (edge + 1) % 3);
    let (q0, q1) = (t.v[i0], t.v[i1]);
    let qx = q0.0 + tau * (q1.0 - q0.0);
    let qy = q0.1 + tau * (q1.1 - q0.1);
    // Unit vector from the closest boundary point toward the pixel.
    let nx = (p.0 - qx) / dist;
    let ny = (p.1 - qy) / dist;
    // Envelope: d |p - q(tau*)| / d endpoints at fixed tau*.
    let sign = if inside { 1.0 } else { -1.0 };
    grads[i0] = (-sign * (1.0 - tau) * nx, -sign * (1.0 - tau) * ny);
    grads[i1] = (-sign * tau * nx, -sign * tau * ny);
    (sign * dist, grads)
}

fn project_all(
    verts: &[Vec3],
    cam: &Camera,
) -> (Vec<(f64, f64)>, Vec<f64>, Vec<bool>, usize) {
    let mut ndc = Vec::with_capacity(verts.len());
    let mut zp = Vec::with_capacity(verts.len());
    let mut clamped = Vec::with_capacity(verts.len());
    let mut n_clamped = 0usize;
    for v in verts {
        let (u, vv, z, cl) = cam.ndc_clamped(v);
        ndc.push((u, vv));
        zp.push(z);
        clamped.push(cl);
        n_clamped += cl as usize;
    }
    (ndc, zp, clamped, n_clamped)
}

/// Renders the soft silhouette of a mesh. Vertices behind the near plane
/// are clamped (and counted in the result) rather than rejected: the pose
/// search visits arbitrarily bad poses and must not abort.
pub fn render_silhouette(
    verts: &[Vec3],
    faces: &[[usize; 3]],
    cam: &Camera,
    sharpness: f64,
) -> SilhouetteRender {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let (ndc, zp, clamped, clamped_vertices) = project_all(verts, cam);
    let band_ndc = SIG_CUTOFF / sharpness;
    let mut one_minus = vec![1.0f64; w * h];

    // Pixel-center NDC coordinates are affine in the pixel index.
    let col_u: Vec<f64> = (0..w)
        .map(|x| cam.ndc_from_pixel(x as f64 + 0.5, 0.0).0)
        .collect();
    let row_v: Vec<f64> = (0..h)
        .map(|y| cam.ndc_from_pixel(0.0, y as f64 + 0.5).1)
        .collect();

    for face in faces {
        let Some(tri) = setup_triangle(&ndc, face, cam, band_ndc) else {
            continue;
        };
        let (x0, y0, x1, y1) = tri.bbox;
        for y in y0..=y1 {
            let v = row_v[y];
            let row = y * w;
            for x in x0..=x1 {
                let d = signed_distance((col_u[x], v), &tri);
                let s = sharpness * d;
                if s <= -SIG_CUTOFF {
                    continue;
                }
                let p = if s >= SIG_CUTOFF { 1.0 } else { sigmoid(s) };
                one_minus[row + x] *= 1.0 - p;
            }
        }
    }

    let coverage = Grid {
        width: w,
        height: h,
        data: one_minus.iter().map(|&om| 1.0 - om).collect(),
    };
    SilhouetteRender {
        coverage,
        clamped_vertices,
        sharpness,
        cam: *cam,
        ndc,
        zp,
        clamped,
        one_minus,
    }
}

impl SilhouetteRender {
    /// Pushes a per-pixel gradient `d_cov = dL/dS` back to world-space
    /// vertex gradients. `faces` must be the array the render was made with.
    pub fn backward(&self, faces: &[[usize; 3]], d_cov: &Grid<f64>) -> Vec<Vec3> {
        assert_eq!(d_cov.width as u32, self.cam.width);
        assert_eq!(d_cov.height as u32, self.cam.height);
        let w = self.cam.width as usize;
        let band_ndc = SIG_CUTOFF / self.sharpness;
        let mut grads = vec![Vec3::zeros(); self.ndc.len()];

        let col_u: Vec<f64> = (0..w)
            .map(|x| self.cam.ndc_from_pixel(x as f64 + 0.5, 0.0).0)
            .collect();
        let row_v: Vec<f64> = (0..self.cam.height as usize)
            .map(|y| self.cam.ndc_from_pixel(0.0, y as f64 + 0.5).1)
            .collect();

        for face in faces {
            let Some(tri) = setup_triangle(&self.ndc, face, &self.cam, band_ndc) else {
                continue;
            };
            let (x0, y0, x1, y1) = tri.bbox;
            for y in y0..=y1 {
                let vv = row_v[y];
                let row = y * w;
                for x in x0..=x1 {
                    let g_pix = d_cov.data[row + x];
                    if g_pix == 0.0 {
                        continue;
                    }
                    let (d, dgrads) = signed_distance_grad((col_u[x], vv), &tri);
                    let s = self.sharpness * d;
                    if s.abs() >= SIG_CUTOFF {
                        continue; // saturated: both forward and backward flat
                    }
                    let p = sigmoid(s);
                    let rest = 1.0 - p;
                    if rest < 1e-12 {
                        continue;
                    }
                    // d cov / d p_t = prod over the *other* triangles.
                    let leave_out = self.one_minus[row + x] / rest;
                    let dl_dd = g_pix * leave_out * self.sharpness * p * rest;
                    if dl_dd == 0.0 {
                        continue;
                    }
                    for k in 0..3 {
                        let (du, dv) = dgrads[k];
                        if du == 0.0 && dv == 0.0 {
                            continue;
                        }
                        let vi = face[k];
                        let z = self.zp[vi];
                        let fz = self.cam.f / z;
                        let (u, v) = self.ndc[vi];
                        let gx = dl_dd * du * fz;
                        let gy = dl_dd * dv * fz;
                        // u = f x / z  =>  du/dz = -u / z; zero while clamped.
                        let gz = if self.clamped[vi] {
                            0.0
                        } else {
                            dl_dd * (du * (-u / z) + dv * (-v / z))
                        };
                        grads[vi] += Vec3::new(gx, gy, gz);
                    }
                }
            }
        }
        grads
    }
}

/// Hard (binary) rasterization: a pixel is covered when its center lies in
/// some projected triangle, boundary included. Deterministic and exactly
/// invariant to uniform scaling of all vertices by powers of two.
pub fn render_silhouette_hard(verts: &[Vec3], faces: &[[usize; 3]], cam: &Camera) -> Grid<u8> {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let (ndc, _, _, _) = project_all(verts, cam);
    let mut out = Grid::<u8>::new(w, h);
    let col_u: Vec<f64> = (0..w)
        .map(|x| cam.ndc_from_pixel(x as f64 + 0.5, 0.0).0)
        .collect();
    let row_v: Vec<f64> = (0..h)
        .map(|y| cam.ndc_from_pixel(0.0, y as f64 + 0.5).1)
        .collect();
    for face in faces {
        let Some(tri) = setup_triangle(&ndc, face, cam, 0.0) else {
            continue;
        };
        let [a, b, c] = tri.v;
        let o = tri.orient;
        let (x0, y0, x1, y1) = tri.bbox;
        for y in y0..=y1 {
            let pv = row_v[y];
            for x in x0..=x1 {
                if out.data[y * w + x] != 0 {
                    continue;
                }
                let pu = col_u[x];
                let w0 = (b.0 - a.0) * (pv - a.1) - (b.1 - a.1) * (pu - a.0);
                let w1 = (c.0 - b.0) * (pv - b.1) - (c.1 - b.1) * (pu - b.0);
                let w2 = (a.0 - c.0) * (pv - c.1) - (a.1 - c.1) * (pu - c.0);
                if w0 * o >= 0.0 && w1 * o >= 0.0 && w2 * o >= 0.0 {
                    out.data[y * w + x] = 1;
                }
            }
        }
    }
    out
}
