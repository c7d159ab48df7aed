//! Interaction detection: decides which (human, object) instances and which
//! (human part, object part) pairs are close enough in 3D to couple with
//! attraction losses. The test expands each instance's (or part's) bounding
//! box by a per-category factor, checks x/y overlap, and gates on the depth
//! difference of the centroids. Membership is recomputed from the current
//! parameters every optimizer iteration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::{subset_centroid, Aabb, Vec3};
use crate::scene::Scene;

/// One attraction pairing between an object part and a human body part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartPair {
    pub object: String,
    pub human: String,
}

impl PartPair {
    pub fn new(object: &str, human: &str) -> Self {
        PartPair {
            object: object.into(),
            human: human.into(),
        }
    }
}

/// How rotation restarts are sampled for a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestartBias {
    /// Uniform over all rotations.
    #[default]
    None,
    /// Elevation restricted to [-30, 30] degrees, azimuth free, no roll:
    /// useful for objects that rest on the ground.
    Upright,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryConfig {
    /// Box growth (fraction of each side's extent, added on both sides)
    /// for the instance-level interaction test.
    pub coarse_xy_expand: f64,
    /// Box growth for the part-level test.
    pub fine_xy_expand: f64,
    /// Maximum centroid depth difference (meters) for an interaction.
    pub z_depth_threshold: f64,
    #[serde(default)]
    pub part_pairs: Vec<PartPair>,
    /// Prior mean of the intrinsic scale for this category.
    #[serde(default = "default_mean_scale")]
    pub mean_scale: f64,
    #[serde(default)]
    pub restart_bias: RestartBias,
}

fn default_mean_scale() -> f64 {
    1.0
}

pub type CategoryTable = BTreeMap<String, CategoryConfig>;

/// The eight categories this library ships with. Meshes in the built-in
/// library are authored at real-world size, so every prior mean scale
/// starts at 1.
pub fn default_category_table() -> CategoryTable {
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

    let mut t = BTreeMap::new();
    t.insert(
        "bat".to_string(),
        cfg(
            0.5,
            2.5,
            5.0,
            &[("Handle", "L Palm"), ("Handle", "R Palm")],
            RestartBias::None,
        ),
    );
    t.insert(
        "bench".to_string(),
        cfg(
            0.3,
            0.5,
            10.0,
            &[("Seat", "Butt"), ("Seat Back", "Back")],
            RestartBias::Upright,
        ),
    );
    t.insert(
        "bicycle".to_string(),
        cfg(
            0.0,
            0.7,
            4.0,
            &[
                ("Seat", "Butt"),
                ("Handlebars", "L Palm"),
                ("Handlebars", "R Hand"),
            ],
            RestartBias::Upright,
        ),
    );
    t.insert(
        "laptop".to_string(),
        cfg(
            0.2,
            0.0,
            2.5,
            &[("Laptop", "L Palm"), ("Laptop", "R Palm")],
            RestartBias::None,
        ),
    );
    t.insert(
        "motorcycle".to_string(),
        cfg(
            0.0,
            0.7,
            5.0,
            &[
                ("Seat", "Butt"),
                ("Handlebars", "L Palm"),
                ("Handlebars", "R Palm"),
            ],
            RestartBias::Upright,
        ),
    );
    t.insert(
        "skateboard".to_string(),
        cfg(
            0.0,
            0.5,
            10.0,
            &[("Skateboard", "L Foot"), ("Skateboard", "R Foot")],
            RestartBias::None,
        ),
    );
    t.insert(
        "surfboard".to_string(),
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
            RestartBias::None,
        ),
    );
    t.insert(
        "tennis_racket".to_string(),
        cfg(
            0.4,
            2.0,
            5.0,
            &[("Handle", "L Palm"), ("Handle", "R Palm")],
            RestartBias::None,
        ),
    );
    t
}

/// Tight box over `points` with every side grown by `expand` times its own
/// extent on each end.
pub fn expanded_bbox(points: &[Vec3], expand: f64) -> Result<Aabb> {
    Ok(Aabb::from_points(points)?.expanded(Vec3::repeat(expand)))
}

/// An active part-level attraction, addressed by per-kind instance indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartInteraction {
    pub human: usize,
    pub object: usize,
    pub human_part: String,
    pub object_part: String,
}

#[derive(Debug, Clone, Default)]
pub struct InteractionSet {
    /// Instance-level interactions as (human index, object index).
    pub pairs: Vec<(usize, usize)>,
    /// Part-level interactions; only between instance pairs in `pairs`.
    pub part_pairs: Vec<PartInteraction>,
}

fn close_in_depth(a: &[Vec3], b: &[Vec3], threshold: f64) -> Result<bool> {
    let za = crate::geom::centroid(a)?.z;
    let zb = crate::geom::centroid(b)?.z;
    Ok((za - zb).abs() < threshold)
}

/// Finds interacting instance pairs and part pairs at the scene's current
/// parameters. `world` must hold the world-space vertices of every instance
/// in flat order (humans then objects).
pub fn detect_interactions(
    scene: &Scene,
    table: &CategoryTable,
    world: &[Vec<Vec3>],
) -> Result<InteractionSet> {
    let nh = scene.humans.len();
    let mut set = InteractionSet::default();
    for (o, obj) in scene.objects.iter().enumerate() {
        let cfg = table
            .get(&obj.category)
            .ok_or_else(|| crate::error::Error::UnknownCategory(obj.category.clone()))?;
        let wo = &world[nh + o];
        let obj_box = expanded_bbox(wo, cfg.coarse_xy_expand)?;
        for (h, human) in scene.humans.iter().enumerate() {
            let wh = &world[h];
            let hum_box = expanded_bbox(wh, cfg.coarse_xy_expand)?;
            if !obj_box.overlaps_xy(&hum_box) || !close_in_depth(wh, wo, cfg.z_depth_threshold)? {
                continue;
            }
            set.pairs.push((h, o));

            for pair in &cfg.part_pairs {
                let ov: Vec<Vec3> = obj
                    .mesh
                    .part(&pair.object)?
                    .iter()
                    .map(|&i| wo[i])
                    .collect();
                let hv: Vec<Vec3> = human
                    .mesh
                    .part(&pair.human)?
                    .iter()
                    .map(|&i| wh[i])
                    .collect();
                let ob = expanded_bbox(&ov, cfg.fine_xy_expand)?;
                let hb = expanded_bbox(&hv, cfg.fine_xy_expand)?;
                if ob.overlaps_xy(&hb) && close_in_depth(&hv, &ov, cfg.z_depth_threshold)? {
                    set.part_pairs.push(PartInteraction {
                        human: h,
                        object: o,
                        human_part: pair.human.clone(),
                        object_part: pair.object.clone(),
                    });
                }
            }
        }
    }
    Ok(set)
}

/// Centroid of a named part in world space.
pub fn part_centroid(world: &[Vec3], indices: &[usize]) -> Result<Vec3> {
    subset_centroid(world, indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Rotation6D, TriMesh};
    use crate::scene::{HumanInstance, ObjectInstance};
    use crate::geom::Camera;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    /// A unit-ish box mesh with one face tagged as a named part.
    fn tagged_box(half: Vec3, part: &str, z_face: bool) -> TriMesh {
        let mut verts = Vec::new();
        for &z in &[-half.z, half.z] {
            for &y in &[-half.y, half.y] {
                for &x in &[-half.x, half.x] {
                    verts.push(Vec3::new(x, y, z));
                }
            }
        }
        let faces = vec![
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
        let mut mesh = TriMesh::new(verts, faces).unwrap();
        // Front z face or top y face.
        let ids: Vec<usize> = if z_face {
            vec![0, 1, 2, 3]
        } else {
            vec![0, 1, 4, 5]
        };
        mesh.add_part(part, ids).unwrap();
        mesh
    }

    fn scene_with_gap(depth_gap: f64, category: &str) -> Scene {
        let mut human_mesh = tagged_box(Vec3::new(0.4, 0.9, 0.2), "L Palm", true);
        human_mesh
            .add_part("R Palm", vec![4, 5, 6, 7])
            .unwrap();
        let obj_mesh = tagged_box(Vec3::new(0.05, 0.45, 0.05), "Handle", true);
        Scene {
            camera: Camera::normalized(64, 64).unwrap(),
            humans: vec![HumanInstance {
                mesh: Arc::new(human_mesh),
                scale: 1.0,
                tx: 0.0,
                ty: 0.0,
                sigma: 0.25, // depth 4
            }],
            objects: vec![ObjectInstance {
                category: category.into(),
                exemplar: 0,
                mesh: Arc::new(obj_mesh),
                scale: 1.0,
                rotation: Rotation6D::identity(),
                translation: Vec3::new(0.0, 0.0, 4.0 + depth_gap),
            }],
            masks: vec![],
        }
    }

    #[test]
    fn table_ships_expected_values() {
        let t = default_category_table();
        assert_eq!(t.len(), 8);
        let rows: &[(&str, f64, f64, f64)] = &[
            ("bat", 0.5, 2.5, 5.0),
            ("bench", 0.3, 0.5, 10.0),
            ("bicycle", 0.0, 0.7, 4.0),
            ("laptop", 0.2, 0.0, 2.5),
            ("motorcycle", 0.0, 0.7, 5.0),
            ("skateboard", 0.0, 0.5, 10.0),
            ("surfboard", 0.8, 0.2, 50.0),
            ("tennis_racket", 0.4, 2.0, 5.0),
        ];
        for &(name, coarse, fine, z) in rows {
            let c = &t[name];
            assert_eq!(c.coarse_xy_expand, coarse, "{name}");
            assert_eq!(c.fine_xy_expand, fine, "{name}");
            assert_eq!(c.z_depth_threshold, z, "{name}");
            assert_eq!(c.mean_scale, 1.0, "{name}");
        }
        let pp = |cat: &str| -> Vec<(String, String)> {
            t[cat]
                .part_pairs
                .iter()
                .map(|p| (p.object.clone(), p.human.clone()))
                .collect()
        };
        assert_eq!(
            pp("bicycle"),
            vec![
                ("Seat".into(), "Butt".into()),
                ("Handlebars".into(), "L Palm".into()),
                ("Handlebars".into(), "R Hand".into()),
            ]
        );
        assert_eq!(
            pp("surfboard"),
            vec![
                ("Surfboard".into(), "L Foot".into()),
                ("Surfboard".into(), "R Foot".into()),
                ("Surfboard".into(), "L Palm".into()),
                ("Surfboard".into(), "R Palm".into()),
            ]
        );
        assert_eq!(
            pp("tennis_racket"),
            vec![
                ("Handle".into(), "L Palm".into()),
                ("Handle".into(), "R Palm".into()),
            ]
        );
        for cat in ["bicycle", "bench", "motorcycle"] {
            assert_eq!(t[cat].restart_bias, RestartBias::Upright, "{cat}");
        }
        for cat in ["bat", "laptop", "skateboard", "surfboard", "tennis_racket"] {
            assert_eq!(t[cat].restart_bias, RestartBias::None, "{cat}");
        }
    }

    #[test]
    fn expanded_bbox_examples() {
        let cube: Vec<Vec3> = (0..8)
            .map(|i| {
                Vec3::new(
                    (i & 1) as f64,
                    ((i >> 1) & 1) as f64,
                    ((i >> 2) & 1) as f64,
                )
            })
            .collect();
        let b0 = expanded_bbox(&cube, 0.0).unwrap();
        assert_relative_eq!(b0.min, Vec3::zeros());
        assert_relative_eq!(b0.max, Vec3::new(1.0, 1.0, 1.0));

        let b = expanded_bbox(&cube, 0.5).unwrap();
        assert_relative_eq!(b.extents(), Vec3::new(2.0, 2.0, 2.0));
        assert_relative_eq!(b.center(), Vec3::new(0.5, 0.5, 0.5));

        let p = expanded_bbox(&[Vec3::new(3.0, -1.0, 2.0)], 10.0).unwrap();
        assert_relative_eq!(p.min, p.max);

        assert!(expanded_bbox(&[], 0.0).is_err());
    }

    #[test]
    fn depth_gate_follows_threshold() {
        // bat: z threshold 5. Overlapping boxes, gap 1 -> interacting.
        let scene = scene_with_gap(1.0, "bat");
        let table = default_category_table();
        let world = scene.all_world_vertices().unwrap();
        let set = detect_interactions(&scene, &table, &world).unwrap();
        assert_eq!(set.pairs, vec![(0, 0)]);

        // Same layout, gap 8 -> beyond the threshold.
        let scene = scene_with_gap(8.0, "bat");
        let world = scene.all_world_vertices().unwrap();
        let set = detect_interactions(&scene, &table, &world).unwrap();
        assert!(set.pairs.is_empty());
        assert!(set.part_pairs.is_empty());
    }

    #[test]
    fn far_apart_instances_do_not_interact() {
        let mut scene = scene_with_gap(1.0, "bat");
        scene.objects[0].translation.x = 100.0;
        let table = default_category_table();
        let world = scene.all_world_vertices().unwrap();
        let set = detect_interactions(&scene, &table, &world).unwrap();
        assert!(set.pairs.is_empty());
    }

    #[test]
    fn part_pairs_fire_when_parts_touch() {
        let table = default_category_table();
        // Handle front face at z ~ 3.95..4 sits right on the human palms'
        // front face; fine expansion 2.5 easily bridges the x/y gap.
        let scene = scene_with_gap(0.0, "bat");
        let world = scene.all_world_vertices().unwrap();
        let set = detect_interactions(&scene, &table, &world).unwrap();
        assert_eq!(set.pairs.len(), 1);
        assert_eq!(set.part_pairs.len(), 2);
        assert!(set
            .part_pairs
            .iter()
            .all(|p| p.object_part == "Handle" && (p.human_part == "L Palm" || p.human_part == "R Palm")));
    }

    #[test]
    fn growing_expansion_never_removes_pairs() {
        let table = default_category_table();
        let mut grown = table.clone();
        for cfg in grown.values_mut() {
            cfg.coarse_xy_expand += 1.0;
            cfg.fine_xy_expand += 1.0;
        }
        for gap in [0.0, 0.5, 1.0, 2.0, 4.9] {
            for dx in [0.0, 0.3, 0.8, 1.5, 3.0] {
                let mut scene = scene_with_gap(gap, "bat");
                scene.objects[0].translation.x = dx;
                let world = scene.all_world_vertices().unwrap();
                let base = detect_interactions(&scene, &table, &world).unwrap();
                let more = detect_interactions(&scene, &grown, &world).unwrap();
                for p in &base.pairs {
                    assert!(more.pairs.contains(p), "gap {gap} dx {dx}");
                }
                for p in &base.part_pairs {
                    assert!(more.part_pairs.contains(p), "gap {gap} dx {dx}");
                }
            }
        }
    }

    #[test]
    fn zero_expansion_infinite_threshold_is_raw_xy_overlap() {
        let mut table = default_category_table();
        let cfg = table.get_mut("bat").unwrap();
        cfg.coarse_xy_expand = 0.0;
        cfg.z_depth_threshold = f64::INFINITY;
        for dx in [0.0, 0.44, 0.46, 1.0] {
            let mut scene = scene_with_gap(2.0, "bat");
            scene.objects[0].translation.x = dx;
            let world = scene.all_world_vertices().unwrap();
            let set = detect_interactions(&scene, &table, &world).unwrap();
            let hb = Aabb::from_points(&world[0]).unwrap();
            let ob = Aabb::from_points(&world[1]).unwrap();
            assert_eq!(!set.pairs.is_empty(), hb.overlaps_xy(&ob), "dx {dx}");
        }
    }

    #[test]
    fn unknown_category_is_an_error() {
        let scene = scene_with_gap(0.0, "zeppelin");
        let table = default_category_table();
        let world = scene.all_world_vertices().unwrap();
        assert!(detect_interactions(&scene, &table, &world).is_err());
    }
}
