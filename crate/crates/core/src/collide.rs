//! Mesh collision geometry: a bounding-volume hierarchy over triangles,
//! an exact separating-axis triangle-triangle intersection test, generalized
//! winding numbers for inside/outside queries, and closest-point-on-mesh
//! lookups. The penetration loss built on top lives in `losses`.

use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct BvhNode {
    aabb: Aabb,
    /// Child node indices, or `first..first+count` into `tri_order` for a leaf.
    left: usize,
    right: usize,
    first: usize,
    count: usize,
}

impl BvhNode {
    fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

/// Median-split AABB tree over a triangle soup. Construction is
/// deterministic: ties in centroid order break by triangle index.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    tri_order: Vec<usize>,
}

fn tri_aabb(verts: &[Vec3], f: &[usize; 3]) -> Aabb {
    let (a, b, c) = (verts[f[0]], verts[f[1]], verts[f[2]]);
    Aabb {
        min: a.inf(&b).inf(&c),
        max: a.sup(&b).sup(&c),
    }
}

impl Bvh {
    pub fn build(verts: &[Vec3], faces: &[[usize; 3]]) -> Result<Bvh> {
        if faces.is_empty() {
            return Err(Error::Mesh("cannot build a BVH over zero triangles".into()));
        }
        let boxes: Vec<Aabb> = faces.iter().map(|f| tri_aabb(verts, f)).collect();
        let centers: Vec<Vec3> = boxes.iter().map(|b| b.center()).collect();
        let mut tri_order: Vec<usize> = (0..faces.len()).collect();
        let mut nodes = Vec::with_capacity(2 * faces.len());
        build_node(&boxes, &centers, &mut tri_order, 0, faces.len(), &mut nodes);
        Ok(Bvh { nodes, tri_order })
    }

    pub fn root_aabb(&self) -> &Aabb {
        &self.nodes[0].aabb
    }

    pub fn n_triangles(&self) -> usize {
        self.tri_order.len()
    }
}

fn range_aabb(boxes: &[Aabb], ids: &[usize]) -> Aabb {
    let mut out = boxes[ids[0]];
    for &i in &ids[1..] {
        out = out.union(&boxes[i]);
    }
    out
}

fn build_node(
    boxes: &[Aabb],
    centers: &[Vec3],
    tri_order: &mut [usize],
    first: usize,
    count: usize,
    nodes: &mut Vec<BvhNode>,
) -> usize {
    let me = nodes.len();
    let slice = &tri_order[first..first + count];
    let aabb = range_aabb(boxes, slice);
    nodes.push(BvhNode {
        aabb,
        left: 0,
        right: 0,
        first,
        count,
    });
    if count <= LEAF_SIZE {
        return me;
    }
    // Split on the widest axis of the centroid cloud at the median.
    let cmin = slice.iter().fold(Vec3::repeat(f64::INFINITY), |m, &i| m.inf(&centers[i]));
    let cmax = slice
        .iter()
        .fold(Vec3::repeat(f64::NEG_INFINITY), |m, &i| m.sup(&centers[i]));
    let ext = cmax - cmin;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let seg = &mut tri_order[first..first + count];
    seg.sort_unstable_by(|&a, &b| {
        centers[a][axis]
            .total_cmp(&centers[b][axis])
            .then(a.cmp(&b))
    });
    let half = count / 2;
    nodes[me].count = 0; // interior
    let left = build_node(boxes, centers, tri_order, first, half, nodes);
    let right = build_node(boxes, centers, tri_order, first + half, count - half, nodes);
    nodes[me].left = left;
    nodes[me].right = right;
    me
}

// ---------------------------------------------------------------------------
// Triangle-triangle intersection

fn axis_separates(axis: &Vec3, t1: &[Vec3; 3], t2: &[Vec3; 3]) -> bool {
    let n2 = axis.norm_squared();
    if n2 < 1e-24 {
        return false; // degenerate direction can never testify
    }
    let (mut lo1, mut hi1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in t1 {
        let d = axis.dot(p);
        lo1 = lo1.min(d);
        hi1 = hi1.max(d);
    }
    let (mut lo2, mut hi2) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in t2 {
        let d = axis.dot(p);
        lo2 = lo2.min(d);
        hi2 = hi2.max(d);
    }
    hi1 < lo2 || hi2 < lo1
}

/// Exact closed-set intersection test between two triangles via the
/// separating-axis theorem. Candidate axes: both face normals, the nine
/// edge-edge cross products, and the six in-plane edge normals (which decide
/// the coplanar cases). Touching at a point or edge counts as intersecting.
pub fn tri_tri_intersects(t1: &[Vec3; 3], t2: &[Vec3; 3]) -> bool {
    let e1 = [t1[1] - t1[0], t1[2] - t1[1], t1[0] - t1[2]];
    let e2 = [t2[1] - t2[0], t2[2] - t2[1], t2[0] - t2[2]];
    let n1 = e1[0].cross(&e1[1]);
    let n2 = e2[0].cross(&e2[1]);

    if axis_separates(&n1, t1, t2) || axis_separates(&n2, t1, t2) {
        return false;
    }
    for a in &e1 {
        for b in &e2 {
            if axis_separates(&a.cross(b), t1, t2) {
                return false;
            }
        }
    }
    for a in &e1 {
        if axis_separates(&n1.cross(a), t1, t2) {
            return false;
        }
    }
    for b in &e2 {
        if axis_separates(&n2.cross(b), t1, t2) {
            return false;
        }
    }
    true
}

fn gather(verts: &[Vec3], f: &[usize; 3]) -> [Vec3; 3] {
    [verts[f[0]], verts[f[1]], verts[f[2]]]
}

/// All (triangle of A, triangle of B) index pairs whose triangles intersect,
/// found by simultaneous descent of both hierarchies. Order is deterministic.
pub fn intersecting_triangle_pairs(
    va: &[Vec3],
    fa: &[[usize; 3]],
    ta: &Bvh,
    vb: &[Vec3],
    fb: &[[usize; 3]],
    tb: &Bvh,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut stack = vec![(0usize, 0usize)];
    while let Some((ia, ib)) = stack.pop() {
        let na = &ta.nodes[ia];
        let nb = &tb.nodes[ib];
        if !na.aabb.overlaps(&nb.aabb) {
            continue;
        }
        match (na.is_leaf(), nb.is_leaf()) {
            (true, true) => {
                for &i in &ta.tri_order[na.first..na.first + na.count] {
                    let t1 = gather(va, &fa[i]);
                    for &j in &tb.tri_order[nb.first..nb.first + nb.count] {
                        let t2 = gather(vb, &fb[j]);
                        if tri_tri_intersects(&t1, &t2) {
                            out.push((i, j));
                        }
                    }
                }
            }
            (false, true) => {
                stack.push((na.right, ib));
                stack.push((na.left, ib));
            }
            (true, false) => {
                stack.push((ia, nb.right));
                stack.push((ia, nb.left));
            }
            (false, false) => {
                stack.push((na.right, nb.right));
                stack.push((na.right, nb.left));
                stack.push((na.left, nb.right));
                stack.push((na.left, nb.left));
            }
        }
    }
    out.sort_unstable();
    out
}

// ---------------------------------------------------------------------------
// Inside/outside and closest point

/// Generalized winding number of a closed mesh around `p` (1 for interior
/// points of an outward-wound watertight mesh, 0 outside). Computed as the
/// sum of signed solid angles over faces.
pub fn winding_number(p: &Vec3, verts: &[Vec3], faces: &[[usize; 3]]) -> f64 {
    let mut total = 0.0;
    for f in faces {
        let a = verts[f[0]] - p;
        let b = verts[f[1]] - p;
        let c = verts[f[2]] - p;
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let det = a.dot(&b.cross(&c));
        let denom = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
        total += 2.0 * det.atan2(denom);
    }
    total / (4.0 * std::f64::consts::PI)
}

/// Inside test that tolerates either face orientation: |winding| > 1/2.
pub fn is_inside(p: &Vec3, verts: &[Vec3], faces: &[[usize; 3]]) -> bool {
    winding_number(p, verts, faces).abs() > 0.5
}

/// Closest point on a single triangle with its barycentric coordinates.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

#[derive(Debug, Clone, Copy)]
pub struct ClosestPoint {
    pub point: Vec3,
    pub tri: usize,
    pub bary: [f64; 3],
    pub dist2: f64,
}

fn aabb_dist2(p: &Vec3, b: &Aabb) -> f64 {
    let mut d2 = 0.0;
    for k in 0..3 {
        let v = p[k];
        let d = if v < b.min[k] {
            b.min[k] - v
        } else if v > b.max[k] {
            v - b.max[k]
        } else {
            0.0
        };
        d2 += d * d;
    }
    d2
}

/// Closest point on the mesh surface to `p` via best-first descent of the
/// BVH. Exact distance ties resolve deterministically.
pub fn closest_point_on_mesh(
    p: &Vec3,
    verts: &[Vec3],
    faces: &[[usize; 3]],
    bvh: &Bvh,
) -> ClosestPoint {
    let mut best = ClosestPoint {
        point: *p,
        tri: usize::MAX,
        bary: [0.0; 3],
        dist2: f64::INFINITY,
    };
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        let node = &bvh.nodes[id];
        if aabb_dist2(p, &node.aabb) >= best.dist2 && best.tri != usize::MAX {
            continue;
        }
        if node.is_leaf() {
            let mut leaf: Vec<usize> =
                bvh.tri_order[node.first..node.first + node.count].to_vec();
            leaf.sort_unstable();
            for i in leaf {
                let f = &faces[i];
                let (cp, bary) = closest_point_on_triangle(p, &verts[f[0]], &verts[f[1]], &verts[f[2]]);
                let d2 = (p - cp).norm_squared();
                if d2 < best.dist2 {
                    best = ClosestPoint {
                        point: cp,
                        tri: i,
                        bary,
                        dist2: d2,
                    };
                }
            }
        } else {
            // Visit the nearer child last so it pops first.
            let dl = aabb_dist2(p, &bvh.nodes[node.left].aabb);
            let dr = aabb_dist2(p, &bvh.nodes[node.right].aabb);
            if dl <= dr {
                stack.push(node.right);
                stack.push(node.left);
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
    }
    best
}
