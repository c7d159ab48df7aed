//! Procedurally built stand-in meshes: one low-poly exemplar per shipped
//! category plus a blocky articulated human. They are sized in meters,
//! watertight (each component is a closed box or prism), and deliberately
//! asymmetric so a silhouette pins the pose: every profile is scalene and
//! each category carries at least one one-sided feature (bench armrest,
//! motorcycle exhaust, skateboard kicktail, surfboard fin, laptop trackpad).
//!
//! Local frames follow the camera convention (x right, y down, z forward),
//! centered on the bounding-box center. Humans face -z.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use crate::geom::{TriMesh, Vec3};

/// Arm articulation of the stand-in human.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HumanPose {
    /// Arms straight out to the sides.
    TPose,
    /// Arms forward, palms stacked in front of the chest as if holding a
    /// bat or a pair of handlebars.
    Grip,
}

struct Builder {
    verts: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    parts: Vec<(String, Vec<usize>)>,
}

/// Vertex order within a box: x fastest, then y, then z, so offsets 4..8
/// are the +z face and offsets 0..8:2 the -x face, etc.
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

impl Builder {
    fn new() -> Self {
        Builder {
            verts: Vec::new(),
            faces: Vec::new(),
            parts: Vec::new(),
        }
    }

    fn push_box(&mut self, center: Vec3, half: Vec3) -> Vec<usize> {
        let base = self.verts.len();
        for &z in &[-half.z, half.z] {
            for &y in &[-half.y, half.y] {
                for &x in &[-half.x, half.x] {
                    self.verts.push(center + Vec3::new(x, y, z));
                }
            }
        }
        for f in BOX_FACES {
            self.faces.push([base + f[0], base + f[1], base + f[2]]);
        }
        (base..base + 8).collect()
    }

    /// Closed prism: a simple polygon profile swept from `t0` to `t1`;
    /// `map(a, b, t)` places profile point `(a, b)` at sweep coordinate `t`.
    fn push_prism(
        &mut self,
        profile: &[(f64, f64)],
        t0: f64,
        t1: f64,
        map: impl Fn(f64, f64, f64) -> Vec3,
    ) -> Vec<usize> {
        let n = profile.len();
        assert!(n >= 3);
        let base = self.verts.len();
        for &t in &[t0, t1] {
            for &(a, b) in profile {
                self.verts.push(map(a, b, t));
            }
        }
        for i in 0..n {
            let j = (i + 1) % n;
            self.faces.push([base + i, base + j, base + n + i]);
            self.faces.push([base + j, base + n + j, base + n + i]);
        }
        for i in 1..n - 1 {
            self.faces.push([base, base + i + 1, base + i]);
            self.faces.push([base + n, base + n + i, base + n + i + 1]);
        }
        (base..base + 2 * n).collect()
    }

    /// Slanted rectangular bar in the x/y plane, extruded symmetrically in z.
    fn push_strut(&mut self, from: (f64, f64), to: (f64, f64), width: f64, half_z: f64) -> Vec<usize> {
        let d = (to.0 - from.0, to.1 - from.1);
        let len = (d.0 * d.0 + d.1 * d.1).sqrt();
        let n = (-d.1 / len * width / 2.0, d.0 / len * width / 2.0);
        let profile = [
            (from.0 - n.0, from.1 - n.1),
            (from.0 + n.0, from.1 + n.1),
            (to.0 + n.0, to.1 + n.1),
            (to.0 - n.0, to.1 - n.1),
        ];
        self.push_prism(&profile, -half_z, half_z, |a, b, t| Vec3::new(a, b, t))
    }

    fn tag(&mut self, name: &str, indices: &[usize]) {
        if let Some((_, v)) = self.parts.iter_mut().find(|(n, _)| n == name) {
            v.extend_from_slice(indices);
        } else {
            self.parts.push((name.to_string(), indices.to_vec()));
        }
    }

    fn tag_all(&mut self, name: &str) {
        let all: Vec<usize> = (0..self.verts.len()).collect();
        self.tag(name, &all);
    }

    /// Recenters on the bounding-box center and finalizes.
    fn build(self) -> TriMesh {
        let mut min = self.verts[0];
        let mut max = self.verts[0];
        for v in &self.verts {
            min = min.inf(v);
            max = max.sup(v);
        }
        let c = (min + max) / 2.0;
        let verts = self.verts.iter().map(|v| v - c).collect();
        let mut mesh = TriMesh::new(verts, self.faces).expect("builder indices are in range");
        for (name, ids) in self.parts {
            mesh.add_part(name, ids).expect("part indices are in range");
        }
        mesh
    }
}

/// Polygon with per-vertex radii so no rotation maps it onto itself.
fn scalene(radii: &[f64], scale: f64) -> Vec<(f64, f64)> {
    radii
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let a = TAU * i as f64 / radii.len() as f64;
            (r * scale * a.cos(), r * scale * a.sin())
        })
        .collect()
}

fn regular(n: usize, radius: f64) -> Vec<(f64, f64)> {
    scalene(&vec![1.0; n], radius)
}

/// ~0.9 m bat: fat scalene barrel, thin handle, offset knob. Long axis on y.
fn bat() -> TriMesh {
    let mut b = Builder::new();
    let barrel_profile = scalene(&[1.0, 0.82, 1.12, 0.9, 0.76, 1.05], 0.037);
    let barrel = b.push_prism(&barrel_profile, -0.45, 0.05, |x, z, t| Vec3::new(x, t, z));
    let handle_profile = scalene(&[1.0, 0.85, 1.1, 0.9, 0.8], 0.017);
    let handle = b.push_prism(&handle_profile, 0.05, 0.42, |x, z, t| Vec3::new(x, t, z));
    let knob = b.push_box(Vec3::new(0.006, 0.435, 0.004), Vec3::new(0.030, 0.015, 0.030));
    b.tag("Barrel", &barrel);
    b.tag("Handle", &handle);
    b.tag("Handle", &knob);
    b.build()
}

/// 1.5 m bench with a full-width back and a single left armrest.
fn bench() -> TriMesh {
    let mut b = Builder::new();
    let seat = b.push_box(Vec3::new(0.0, -0.44, 0.0), Vec3::new(0.75, 0.03, 0.23));
    for &x in &[-0.69, 0.69] {
        for &z in &[-0.19, 0.19] {
            b.push_box(Vec3::new(x, -0.22, z), Vec3::new(0.03, 0.22, 0.03));
        }
    }
    let back = b.push_box(Vec3::new(0.0, -0.75, 0.24), Vec3::new(0.75, 0.28, 0.03));
    b.push_box(Vec3::new(-0.72, -0.56, 0.0), Vec3::new(0.03, 0.09, 0.20));
    b.tag("Seat", &seat);
    b.tag("Seat Back", &back);
    b.build()
}

/// ~2 m bicycle: two wheels, four frame struts, seat and transverse bars.
fn bicycle() -> TriMesh {
    let mut b = Builder::new();
    let wheel = regular(12, 0.34);
    for &x in &[-0.66, 0.66] {
        b.push_prism(&wheel, -0.02, 0.02, |px, py, t| Vec3::new(x + px, -0.34 + py, t));
    }
    b.push_strut((-0.28, -0.85), (0.58, -0.80), 0.05, 0.02); // top tube
    b.push_strut((-0.31, -0.90), (-0.22, -0.36), 0.05, 0.02); // seat tube
    b.push_strut((0.32, -0.80), (-0.20, -0.36), 0.05, 0.02); // down tube
    b.push_strut((0.62, -0.86), (0.68, -0.34), 0.05, 0.02); // fork
    b.push_strut((-0.64, -0.34), (-0.20, -0.38), 0.04, 0.02); // chainstay
    let seat = b.push_box(Vec3::new(-0.31, -0.93, 0.0), Vec3::new(0.10, 0.03, 0.045));
    b.push_box(Vec3::new(0.63, -0.88, 0.0), Vec3::new(0.02, 0.035, 0.02)); // stem
    let bar = b.push_box(Vec3::new(0.63, -0.93, 0.0), Vec3::new(0.025, 0.025, 0.23));
    b.tag("Seat", &seat);
    b.tag("Handlebars", &bar);
    b.build()
}

/// 0.35 m open clamshell; the screen leans 20 degrees past vertical and a
/// trackpad bump sits left of center.
fn laptop() -> TriMesh {
    let mut b = Builder::new();
    b.push_box(Vec3::new(0.0, -0.008, 0.0), Vec3::new(0.175, 0.008, 0.12));
    let (s, c) = (20.0_f64.to_radians().sin(), 20.0_f64.to_radians().cos());
    let top = (-0.016 - 0.23 * c, 0.115 + 0.23 * s);
    let screen = [
        (0.105, -0.016),
        (0.125, -0.016),
        (top.1 + 0.010, top.0),
        (top.1 - 0.010, top.0),
    ];
    // Screen profile lives in (z, y); extrusion runs along x.
    b.push_prism(&screen, -0.175, 0.175, |z, y, t| Vec3::new(t, y, z));
    b.push_box(Vec3::new(-0.06, -0.022, -0.05), Vec3::new(0.04, 0.006, 0.03));
    b.tag_all("Laptop");
    b.build()
}

/// ~2 m motorcycle: thick wheels, body, rear seat, bars, one-sided exhaust.
fn motorcycle() -> TriMesh {
    let mut b = Builder::new();
    let wheel = regular(14, 0.33);
    for &x in &[-0.70, 0.70] {
        b.push_prism(&wheel, -0.06, 0.06, |px, py, t| Vec3::new(x + px, -0.33 + py, t));
    }
    b.push_box(Vec3::new(0.02, -0.62, 0.0), Vec3::new(0.42, 0.16, 0.14));
    let seat = b.push_box(Vec3::new(-0.38, -0.84, 0.0), Vec3::new(0.20, 0.04, 0.11));
    b.push_strut((0.58, -0.88), (0.72, -0.35), 0.06, 0.03); // fork
    let bar = b.push_box(Vec3::new(0.64, -0.95, 0.0), Vec3::new(0.025, 0.025, 0.27));
    b.push_box(Vec3::new(-0.45, -0.38, 0.16), Vec3::new(0.28, 0.04, 0.04)); // exhaust
    b.tag("Seat", &seat);
    b.tag("Handlebars", &bar);
    b.build()
}

/// 0.8 m deck with a pointier nose, a tail-only kicktail, and four wheels.
fn skateboard() -> TriMesh {
    let mut b = Builder::new();
    let deck = [
        (-0.36, -0.10),
        (-0.40, -0.04),
        (-0.40, 0.04),
        (-0.36, 0.10),
        (0.33, 0.10),
        (0.40, 0.045),
        (0.40, -0.045),
        (0.33, -0.10),
    ];
    b.push_prism(&deck, -0.10, -0.085, |x, z, y| Vec3::new(x, y, z));
    b.push_strut((-0.36, -0.0925), (-0.46, -0.155), 0.015, 0.09); // kicktail
    for &x in &[-0.26, 0.26] {
        for &z in &[-0.08, 0.08] {
            b.push_box(Vec3::new(x, -0.035, z), Vec3::new(0.025, 0.035, 0.025));
        }
    }
    b.tag_all("Skateboard");
    b.build()
}

/// 2.2 m board, nose pointier than the tail, single off-center fin below.
fn surfboard() -> TriMesh {
    let mut b = Builder::new();
    let outline = [
        (-1.05, -0.05),
        (-1.10, 0.0),
        (-1.05, 0.05),
        (-0.30, 0.28),
        (0.50, 0.26),
        (1.10, 0.0),
        (0.50, -0.26),
        (-0.30, -0.28),
    ];
    b.push_prism(&outline, -0.05, 0.0, |x, z, y| Vec3::new(x, y, z));
    // Fin hangs below the tail (it would face the water), offset in z.
    let fin = [(-0.82, -0.01), (-0.78, -0.01), (-0.88, 0.16), (-0.92, 0.16)];
    b.push_prism(&fin, 0.015, 0.045, |x, y, t| Vec3::new(x, y, t));
    b.tag_all("Surfboard");
    b.build()
}

/// ~0.68 m racket: scalene handle, offset throat, flat solid head slab.
fn tennis_racket() -> TriMesh {
    let mut b = Builder::new();
    let grip = scalene(&[1.0, 0.84, 1.12, 0.9, 0.78, 1.06], 0.016);
    let handle = b.push_prism(&grip, 0.10, 0.34, |x, z, t| Vec3::new(x, t, z));
    b.push_box(Vec3::new(0.004, 0.055, 0.0), Vec3::new(0.012, 0.047, 0.008));
    let rim: Vec<(f64, f64)> = (0..12)
        .map(|i| {
            let a = TAU * i as f64 / 12.0;
            let r = 1.0 + 0.06 * (3.0 * a).sin();
            (0.115 * r * a.cos(), -0.155 + 0.165 * r * a.sin())
        })
        .collect();
    let head = b.push_prism(&rim, -0.009, 0.009, |x, y, t| Vec3::new(x, y, t));
    b.tag("Handle", &handle);
    b.tag("Head", &head);
    b.build()
}

/// The stand-in exemplar for `category`, or `None` for unknown names.
pub fn builtin_exemplar(category: &str) -> Option<TriMesh> {
    Some(match category {
        "bat" => bat(),
        "bench" => bench(),
        "bicycle" => bicycle(),
        "laptop" => laptop(),
        "motorcycle" => motorcycle(),
        "skateboard" => skateboard(),
        "surfboard" => surfboard(),
        "tennis_racket" => tennis_racket(),
        _ => return None,
    })
}

pub const BUILTIN_CATEGORIES: [&str; 8] = [
    "bat",
    "bench",
    "bicycle",
    "laptop",
    "motorcycle",
    "skateboard",
    "surfboard",
    "tennis_racket",
];

/// One exemplar per shipped category.
pub fn builtin_library() -> BTreeMap<String, Vec<Arc<TriMesh>>> {
    BUILTIN_CATEGORIES
        .iter()
        .map(|&c| (c.to_string(), vec![Arc::new(builtin_exemplar(c).unwrap())]))
        .collect()
}

/// Blocky articulated human, ~1.7 m tall, facing -z, with the body-part
/// regions the interaction table references. `Hand` names alias the palms.
pub fn builtin_human(pose: HumanPose) -> TriMesh {
    let mut b = Builder::new();
    let pelvis = b.push_box(Vec3::new(0.0, 0.02, 0.02), Vec3::new(0.16, 0.10, 0.10));
    let chest = b.push_box(Vec3::new(0.0, -0.27, 0.01), Vec3::new(0.17, 0.20, 0.11));
    b.push_box(Vec3::new(0.0, -0.50, 0.0), Vec3::new(0.045, 0.045, 0.05));
    b.push_box(Vec3::new(0.0, -0.66, 0.0), Vec3::new(0.085, 0.11, 0.10));
    for &sx in &[-1.0, 1.0] {
        b.push_box(Vec3::new(sx * 0.09, 0.30, 0.01), Vec3::new(0.07, 0.18, 0.085));
        b.push_box(Vec3::new(sx * 0.09, 0.63, 0.01), Vec3::new(0.055, 0.16, 0.065));
        let foot = b.push_box(Vec3::new(sx * 0.09, 0.82, -0.05), Vec3::new(0.06, 0.035, 0.12));
        b.tag(if sx < 0.0 { "L Foot" } else { "R Foot" }, &foot);
    }
    for &sx in &[-1.0, 1.0] {
        let palm = match pose {
            HumanPose::TPose => {
                b.push_box(Vec3::new(sx * 0.35, -0.40, 0.01), Vec3::new(0.13, 0.05, 0.05));
                b.push_box(Vec3::new(sx * 0.60, -0.40, 0.01), Vec3::new(0.12, 0.042, 0.042));
                b.push_box(Vec3::new(sx * 0.77, -0.40, 0.005), Vec3::new(0.05, 0.038, 0.028))
            }
            HumanPose::Grip => {
                b.push_box(Vec3::new(sx * 0.23, -0.40, -0.13), Vec3::new(0.05, 0.05, 0.14));
                b.push_box(Vec3::new(sx * 0.115, -0.395, -0.345), Vec3::new(0.042, 0.042, 0.125));
                // Stacked grip: one palm slightly above the other.
                let y = if sx < 0.0 { -0.435 } else { -0.36 };
                b.push_box(Vec3::new(sx * 0.026, y, -0.50), Vec3::new(0.05, 0.034, 0.034))
            }
        };
        let (p, h) = if sx < 0.0 {
            ("L Palm", "L Hand")
        } else {
            ("R Palm", "R Hand")
        };
        b.tag(p, &palm);
        b.tag(h, &palm);
    }
    // Rear faces (+z offsets 4..8 within each box) of pelvis and chest.
    let rear = |ids: &[usize]| ids[4..8].to_vec();
    b.tag("Butt", &rear(&pelvis));
    b.tag("Back", &rear(&chest));
    b.build()
}
