//! File ingestion and export: wavefront meshes with part sidecars, PNG
//! masks, TOML scene configs and mesh-library manifests, arranged-scene
//! export with a parameter CSV that reloads exactly, flat-shaded view
//! renders, and scale-learning reports.
//!
//! All paths inside configs resolve relative to the config file's
//! directory. Errors carry the offending path (and line, for text
//! formats).

pub mod builtin;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use image::{GrayImage, Luma, Rgb, RgbImage};
use nalgebra::{Quaternion, Rotation3, UnitQuaternion};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geom::{Camera, Mat3, Rotation6D, TriMesh, Vec3};
use crate::interaction::{default_category_table, CategoryConfig, CategoryTable};
use crate::losses::LossWeights;
use crate::optim::{FitSchedule, Histogram, ScaleRound};
use crate::raster::{render_depth, Grid, Mask};
use crate::scene::{HumanInstance, ObjectInstance, Scene};

// ---------------------------------------------------------------------------
// Wavefront meshes and part sidecars

/// Loads an ASCII wavefront mesh: `v x y z` and `f a b c ...` records
/// (1-based, negative indices count from the end, `a/b/c` forms accepted,
/// polygons fan-triangulated). Other record types are ignored.
pub fn load_obj(path: &Path) -> Result<TriMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let mut verts: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut c = [0.0f64; 3];
                for coord in &mut c {
                    let t = tok.next().ok_or_else(|| {
                        Error::parse(path, line_no, "vertex needs three coordinates")
                    })?;
                    *coord = t.parse().map_err(|_| {
                        Error::parse(path, line_no, format!("bad coordinate `{t}`"))
                    })?;
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut ids = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let raw_idx: i64 = first.parse().map_err(|_| {
                        Error::parse(path, line_no, format!("bad face index `{t}`"))
                    })?;
                    let idx = if raw_idx > 0 {
                        raw_idx as usize - 1
                    } else if raw_idx < 0 && verts.len() as i64 + raw_idx >= 0 {
                        (verts.len() as i64 + raw_idx) as usize
                    } else {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("face index `{t}` out of range"),
                        ));
                    };
                    if idx >= verts.len() {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("face index `{t}` out of range ({} vertices)", verts.len()),
                        ));
                    }
                    ids.push(idx);
                }
                if ids.len() < 3 {
                    return Err(Error::parse(path, line_no, "face needs at least 3 vertices"));
                }
                for k in 1..ids.len() - 1 {
                    faces.push([ids[0], ids[k], ids[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(verts, faces).map_err(|e| Error::load(path, e.to_string()))
}

/// Writes a mesh as ASCII wavefront. Coordinates use the shortest exact
/// decimal form, so a load/save cycle reproduces every vertex bit-for-bit.
pub fn save_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {} vertices, {} triangles",
        mesh.vertices.len(),
        mesh.faces.len()
    );
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    fs::write(path, out).map_err(|e| Error::load(path, e.to_string()))
}

/// Parses a part sidecar: one part per line, `name idx idx ...` with
/// 0-based vertex indices. The name is every leading token that does not
/// parse as an index, so names may contain spaces (`Seat Back 12 13`).
pub fn load_parts(path: &Path) -> Result<Vec<(String, Vec<usize>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let first_idx = tokens
            .iter()
            .position(|t| t.parse::<usize>().is_ok())
            .ok_or_else(|| Error::parse(path, line_no, "part line has no vertex indices"))?;
        if first_idx == 0 {
            return Err(Error::parse(path, line_no, "part line is missing a name"));
        }
        let name = tokens[..first_idx].join(" ");
        let mut ids = Vec::with_capacity(tokens.len() - first_idx);
        for t in &tokens[first_idx..] {
            ids.push(t.parse::<usize>().map_err(|_| {
                Error::parse(path, line_no, format!("bad vertex index `{t}`"))
            })?);
        }
        out.push((name, ids));
    }
    Ok(out)
}

/// Writes the mesh's part regions in the sidecar format `load_parts` reads.
pub fn save_parts(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut out = String::new();
    for (name, ids) in mesh.parts() {
        let _ = write!(out, "{name}");
        for i in ids {
            let _ = write!(out, " {i}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::load(path, e.to_string()))
}

/// Loads a mesh plus its `.parts` sidecar if one sits next to it.
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let mut mesh = load_obj(path)?;
    let sidecar = path.with_extension("parts");
    if sidecar.exists() {
        for (name, ids) in load_parts(&sidecar)? {
            mesh.add_part(name, ids)
                .map_err(|e| Error::load(&sidecar, e.to_string()))?;
        }
    }
    Ok(mesh)
}

// ---------------------------------------------------------------------------
// Masks

/// Loads a binary mask from an 8-bit image; pixels with luma >= 128 are
/// foreground.
pub fn load_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path).map_err(|e| Error::load(path, e.to_string()))?;
    let gray = img.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data = gray.pixels().map(|p| u8::from(p.0[0] >= 128)).collect();
    Grid::from_data(w, h, data)
}

/// Writes a mask as an 8-bit grayscale PNG (foreground 255, background 0).
pub fn save_mask(path: &Path, mask: &Mask) -> Result<()> {
    let img = GrayImage::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        Luma([if *mask.at(x as usize, y as usize) != 0 { 255 } else { 0 }])
    });
    img.save(path).map_err(|e| Error::load(path, e.to_string()))
}

// ---------------------------------------------------------------------------
// Mesh library

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    meshes: Vec<PathBuf>,
    #[serde(flatten)]
    config: CategoryConfig,
}

#[derive(Debug, Deserialize)]
struct ManifestFile {
    category: BTreeMap<String, ManifestEntry>,
}

/// Object mesh exemplars grouped by category, together with the category
/// interaction table.
#[derive(Debug, Clone)]
pub struct MeshLibrary {
    pub table: CategoryTable,
    exemplars: BTreeMap<String, Vec<Arc<TriMesh>>>,
}

impl MeshLibrary {
    /// The shipped stand-in library: one procedurally built exemplar per
    /// category of the default table.
    pub fn builtin() -> Self {
        MeshLibrary {
            table: default_category_table(),
            exemplars: builtin::builtin_library(),
        }
    }

    /// Loads a library manifest (TOML, `[category.NAME]` blocks with a
    /// `meshes` list plus the category's interaction row). Mesh paths
    /// resolve relative to the manifest. Every exemplar must carry the
    /// parts its category's pairings reference.
    pub fn from_manifest(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
        let parsed: ManifestFile = toml::from_str(&text)
            .map_err(|e| Error::parse(path, toml_error_line(&text, &e), e.message()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut table = BTreeMap::new();
        let mut exemplars = BTreeMap::new();
        for (name, entry) in parsed.category {
            if entry.meshes.is_empty() {
                return Err(Error::load(
                    path,
                    format!("category `{name}` lists no meshes"),
                ));
            }
            let mut meshes = Vec::with_capacity(entry.meshes.len());
            for rel in &entry.meshes {
                let mesh = load_mesh(&dir.join(rel))?;
                for pair in &entry.config.part_pairs {
                    if !mesh.has_part(&pair.object) {
                        return Err(Error::load(
                            dir.join(rel),
                            format!("missing part `{}` required by category `{name}`", pair.object),
                        ));
                    }
                }
                meshes.push(Arc::new(mesh));
            }
            table.insert(name.clone(), entry.config);
            exemplars.insert(name, meshes);
        }
        Ok(MeshLibrary { table, exemplars })
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.exemplars.keys().map(|k| k.as_str())
    }

    pub fn exemplars(&self, category: &str) -> Result<&[Arc<TriMesh>]> {
        self.exemplars
            .get(category)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UnknownCategory(category.to_string()))
    }

    pub fn exemplar(&self, category: &str, index: usize) -> Result<&Arc<TriMesh>> {
        self.exemplars(category)?
            .get(index)
            .ok_or_else(|| Error::UnknownExemplar {
                category: category.to_string(),
                index,
            })
    }
}

/// Writes every exemplar of `library` as `{category}_{k}.obj` (+ `.parts`)
/// into `dir` along with a `library.manifest` describing them. Returns the
/// manifest path.
pub fn write_library(dir: &Path, library: &MeshLibrary) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("# mesh library: exemplars plus per-category interaction settings\n");
    for cat in library.categories() {
        let cfg = &library.table[cat];
        let _ = writeln!(manifest, "\n[category.{cat}]");
        let mut names = Vec::new();
        for (k, mesh) in library.exemplars(cat)?.iter().enumerate() {
            let stem = format!("{cat}_{k}");
            save_obj(&dir.join(format!("{stem}.obj")), mesh)?;
            if mesh.parts().next().is_some() {
                save_parts(&dir.join(format!("{stem}.parts")), mesh)?;
            }
            names.push(format!("\"{stem}.obj\""));
        }
        let _ = writeln!(manifest, "meshes = [{}]", names.join(", "));
        let _ = writeln!(manifest, "coarse_xy_expand = {}", cfg.coarse_xy_expand);
        let _ = writeln!(manifest, "fine_xy_expand = {}", cfg.fine_xy_expand);
        let _ = writeln!(manifest, "z_depth_threshold = {}", cfg.z_depth_threshold);
        let _ = writeln!(manifest, "mean_scale = {}", cfg.mean_scale);
        let bias = match cfg.restart_bias {
            crate::interaction::RestartBias::None => "none",
            crate::interaction::RestartBias::Upright => "upright",
        };
        let _ = writeln!(manifest, "restart_bias = \"{bias}\"");
        if !cfg.part_pairs.is_empty() {
            manifest.push_str("part_pairs = [\n");
            for p in &cfg.part_pairs {
                let _ = writeln!(
                    manifest,
                    "    {{ object = \"{}\", human = \"{}\" }},",
                    p.object, p.human
                );
            }
            manifest.push_str("]\n");
        }
    }
    let path = dir.join("library.manifest");
    fs::write(&path, manifest).map_err(|e| Error::load(&path, e.to_string()))?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// Scene configs

fn default_focal() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageConfig {
    pub width: u32,
    pub height: u32,
    /// Normalized focal length (longer image side spans NDC [-1, 1]).
    #[serde(default = "default_focal")]
    pub focal: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanEntry {
    pub mesh: PathBuf,
    pub mask: PathBuf,
    /// Depth parameter: the person sits at depth `scale * f / sigma`.
    pub sigma: f64,
    #[serde(default)]
    pub tx: f64,
    #[serde(default)]
    pub ty: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub category: String,
    pub mask: PathBuf,
    #[serde(default)]
    pub exemplar: usize,
    /// Initial pose; omitted fields fall back to the category mean scale,
    /// the identity rotation, and a translation back-projected from the
    /// mask.
    #[serde(default)]
    pub scale: Option<f64>,
    /// Quaternion `[w, x, y, z]`.
    #[serde(default)]
    pub rotation: Option<[f64; 4]>,
    #[serde(default)]
    pub translation: Option<[f64; 3]>,
}

/// On-disk scene description. See the README for the grammar.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub seed: u64,
    /// Library manifest path; omitted means the built-in stand-ins.
    #[serde(default)]
    pub library: Option<PathBuf>,
    pub image: ImageConfig,
    #[serde(default, rename = "human")]
    pub humans: Vec<HumanEntry>,
    #[serde(default, rename = "object")]
    pub objects: Vec<ObjectEntry>,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub schedule: FitSchedule,
}

/// A scene plus everything the pipeline needs to run on it.
#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub scene: Scene,
    pub library: MeshLibrary,
    pub weights: LossWeights,
    pub schedule: FitSchedule,
    pub seed: u64,
}

fn toml_error_line(src: &str, err: &toml::de::Error) -> usize {
    err.span()
        .map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1)
        .unwrap_or(1)
}

/// Orthonormal rotation matrix from a `[w, x, y, z]` quaternion.
pub fn rotation_from_quat(q: [f64; 4]) -> Result<Mat3> {
    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "quaternion {q:?} is not normalizable"
        )));
    }
    let uq = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
    Ok(uq.to_rotation_matrix().into_inner())
}

/// `[w, x, y, z]` quaternion (w >= 0) equivalent to a rotation matrix.
pub fn quat_from_rotation(m: &Mat3) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
    let mut out = [q.w, q.i, q.j, q.k];
    if out[0] < 0.0 || (out[0] == 0.0 && out.iter().find(|&&c| c != 0.0) < Some(&0.0)) {
        for c in &mut out {
            *c = -*c;
        }
    }
    out
}

/// Loads and fully validates a scene config: library, meshes (with part
/// sidecars), masks, and object pose initialization.
pub fn load_scene(path: &Path) -> Result<LoadedScene> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let cfg: SceneConfig = toml::from_str(&text)
        .map_err(|e| Error::parse(path, toml_error_line(&text, &e), e.message()))?;
    let dir = path.parent().unwrap_or(Path::new("."));

    let library = match &cfg.library {
        Some(rel) => MeshLibrary::from_manifest(&dir.join(rel))?,
        None => MeshLibrary::builtin(),
    };
    let camera = Camera::new(cfg.image.focal, cfg.image.width, cfg.image.height)?;

    let load_scene_mask = |rel: &Path| -> Result<Mask> {
        let p = dir.join(rel);
        let m = load_mask(&p)?;
        if (m.width as u32, m.height as u32) != (cfg.image.width, cfg.image.height) {
            return Err(Error::load(
                p,
                format!(
                    "mask is {}x{} but the image is {}x{}",
                    m.width, m.height, cfg.image.width, cfg.image.height
                ),
            ));
        }
        Ok(m)
    };

    let mut humans = Vec::with_capacity(cfg.humans.len());
    let mut masks = Vec::with_capacity(cfg.humans.len() + cfg.objects.len());
    for h in &cfg.humans {
        if !(h.sigma > 0.0) || !(h.scale > 0.0) {
            return Err(Error::load(
                dir.join(&h.mesh),
                format!("human needs sigma > 0 and scale > 0 (got {} / {})", h.sigma, h.scale),
            ));
        }
        let mesh = load_mesh(&dir.join(&h.mesh))?;
        masks.push(load_scene_mask(&h.mask)?);
        humans.push(HumanInstance {
            mesh: Arc::new(mesh),
            scale: h.scale,
            tx: h.tx,
            ty: h.ty,
            sigma: h.sigma,
        });
    }

    let mut objects = Vec::with_capacity(cfg.objects.len());
    for o in &cfg.objects {
        let row = library
            .table
            .get(&o.category)
            .ok_or_else(|| Error::UnknownCategory(o.category.clone()))?;
        let mesh = library.exemplar(&o.category, o.exemplar)?;
        let mask = load_scene_mask(&o.mask)?;
        let scale = o.scale.unwrap_or(row.mean_scale);
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "object scale must be positive (got {scale})"
            )));
        }
        let rotation = match o.rotation {
            Some(q) => Rotation6D::from_matrix(&rotation_from_quat(q)?),
            None => Rotation6D::identity(),
        };
        let translation = match o.translation {
            Some(t) => Vec3::new(t[0], t[1], t[2]),
            None => crate::optim::init_translation(&mask, &camera, mesh, scale)
                .map_err(|e| Error::load(dir.join(&o.mask), e.to_string()))?,
        };
        if !(translation.z > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "object `{}` sits behind the camera (tz = {})",
                o.category, translation.z
            )));
        }
        masks.push(mask);
        objects.push(ObjectInstance {
            category: o.category.clone(),
            exemplar: o.exemplar,
            mesh: Arc::clone(mesh),
            scale,
            rotation,
            translation,
        });
    }

    Ok(LoadedScene {
        scene: Scene {
            camera,
            humans,
            objects,
            masks,
        },
        library,
        weights: cfg.weights,
        schedule: cfg.schedule,
        seed: cfg.seed,
    })
}

// ---------------------------------------------------------------------------
// Parameter CSV and scene export

/// Column layout of `params.csv`. Human rows store `(tx, ty, sigma)` in the
/// translation columns and the identity quaternion.
pub const PARAMS_HEADER: &str = "kind,index,category,exemplar,scale,qw,qx,qy,qz,tx,ty,tz";

/// One `params.csv` row per instance, humans first. Numbers use the
/// shortest exact decimal form, so equal parameters give equal bytes.
pub fn params_csv(scene: &Scene) -> Result<String> {
    let mut out = String::from(PARAMS_HEADER);
    out.push('\n');
    for (h, human) in scene.humans.iter().enumerate() {
        let _ = writeln!(
            out,
            "human,{h},-,0,{},1,0,0,0,{},{},{}",
            human.scale, human.tx, human.ty, human.sigma
        );
    }
    for (o, obj) in scene.objects.iter().enumerate() {
        let q = quat_from_rotation(&obj.rotation.to_matrix()?);
        let t = obj.translation;
        let _ = writeln!(
            out,
            "object,{o},{},{},{},{},{},{},{},{},{},{}",
            obj.category, obj.exemplar, obj.scale, q[0], q[1], q[2], q[3], t.x, t.y, t.z
        );
    }
    Ok(out)
}

fn csv_field<T: FromStr>(path: &Path, line: usize, cols: &[&str], idx: usize) -> Result<T> {
    let raw = cols.get(idx).copied().unwrap_or("");
    raw.parse().map_err(|_| {
        Error::parse(path, line, format!("bad value `{raw}` in column {}", idx + 1))
    })
}

/// Applies a parameter CSV (see [`PARAMS_HEADER`]) to a scene in place.
/// Rows address instances by kind and index; object rows must match the
/// scene's categories and may switch exemplars, which swaps the mesh in
/// from `library`. Extra trailing columns (e.g. a loss) are ignored.
pub fn import_params(path: &Path, scene: &mut Scene, library: &MeshLibrary) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end().starts_with(PARAMS_HEADER) => {}
        _ => return Err(Error::parse(path, 1, format!("expected header `{PARAMS_HEADER}`"))),
    }
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 12 {
            return Err(Error::parse(path, line_no, "row needs 12 columns"));
        }
        let index: usize = csv_field(path, line_no, &cols, 1)?;
        let scale: f64 = csv_field(path, line_no, &cols, 4)?;
        if !(scale > 0.0) {
            return Err(Error::parse(path, line_no, format!("scale {scale} must be positive")));
        }
        match cols[0] {
            "human" => {
                let human = scene.humans.get_mut(index).ok_or_else(|| {
                    Error::parse(path, line_no, format!("no human {index} in the scene"))
                })?;
                human.scale = scale;
                human.tx = csv_field(path, line_no, &cols, 9)?;
                human.ty = csv_field(path, line_no, &cols, 10)?;
                let sigma: f64 = csv_field(path, line_no, &cols, 11)?;
                if !(sigma > 0.0) {
                    return Err(Error::parse(path, line_no, format!("sigma {sigma} must be positive")));
                }
                human.sigma = sigma;
            }
            "object" => {
                let n = scene.objects.len();
                let obj = scene.objects.get_mut(index).ok_or_else(|| {
                    Error::parse(path, line_no, format!("no object {index} in the scene ({n} objects)"))
                })?;
                if cols[2] != obj.category {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("row is for `{}` but object {index} is `{}`", cols[2], obj.category),
                    ));
                }
                let exemplar: usize = csv_field(path, line_no, &cols, 3)?;
                if exemplar != obj.exemplar {
                    obj.mesh = Arc::clone(library.exemplar(&obj.category, exemplar)?);
                    obj.exemplar = exemplar;
                }
                let q = [
                    csv_field(path, line_no, &cols, 5)?,
                    csv_field(path, line_no, &cols, 6)?,
                    csv_field(path, line_no, &cols, 7)?,
                    csv_field(path, line_no, &cols, 8)?,
                ];
                let m = rotation_from_quat(q)
                    .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
                let tz: f64 = csv_field(path, line_no, &cols, 11)?;
                if !(tz > 0.0) {
                    return Err(Error::parse(path, line_no, format!("tz {tz} must be positive")));
                }
                obj.scale = scale;
                obj.rotation = Rotation6D::from_matrix(&m);
                obj.translation = Vec3::new(
                    csv_field(path, line_no, &cols, 9)?,
                    csv_field(path, line_no, &cols, 10)?,
                    tz,
                );
            }
            other => {
                return Err(Error::parse(path, line_no, format!("unknown row kind `{other}`")));
            }
        }
    }
    Ok(())
}

/// Exports an arranged scene: `arranged_{i:03}.obj` per instance in world
/// coordinates (humans first), a combined `arranged_all.obj` (skipped for
/// empty scenes), and `params.csv` sufficient to reload the scene exactly.
pub fn export_scene(dir: &Path, scene: &Scene) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut combined = String::new();
    let mut offset = 1usize;
    for i in 0..scene.n_instances() {
        let world = scene.world_vertices(i)?;
        let faces = &scene.mesh(i).faces;
        let label = match scene.category_of(i) {
            Some(cat) => format!("{cat}_{}", i - scene.humans.len()),
            None => format!("human_{i}"),
        };
        let placed = TriMesh::new(world, faces.clone()).expect("world mesh mirrors source topology");
        save_obj(&dir.join(format!("arranged_{i:03}.obj")), &placed)?;
        let _ = writeln!(combined, "o {label}");
        for v in &placed.vertices {
            let _ = writeln!(combined, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &placed.faces {
            let _ = writeln!(combined, "f {} {} {}", f[0] + offset, f[1] + offset, f[2] + offset);
        }
        offset += placed.vertices.len();
    }
    if scene.n_instances() > 0 {
        let all = dir.join("arranged_all.obj");
        fs::write(&all, combined).map_err(|e| Error::load(&all, e.to_string()))?;
    }
    let csv = dir.join("params.csv");
    fs::write(&csv, params_csv(scene)?).map_err(|e| Error::load(&csv, e.to_string()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Visibility masks

/// Per-instance visible-region masks at the scene camera: each covered
/// pixel belongs to the nearest instance (ties to the lower index), the way
/// instance segmentations partition an image.
pub fn visibility_masks(scene: &Scene) -> Result<Vec<Mask>> {
    let (w, h) = (scene.camera.width as usize, scene.camera.height as usize);
    let mut best = Grid::filled(w, h, f64::INFINITY);
    let mut winner = Grid::filled(w, h, -1i32);
    for i in 0..scene.n_instances() {
        let world = scene.world_vertices(i)?;
        let render = render_depth(&world, &scene.mesh(i).faces, &scene.camera);
        for p in 0..best.data.len() {
            if render.depth.data[p] < best.data[p] {
                best.data[p] = render.depth.data[p];
                winner.data[p] = i as i32;
            }
        }
    }
    Ok((0..scene.n_instances())
        .map(|i| Grid {
            width: w,
            height: h,
            data: winner.data.iter().map(|&v| u8::from(v == i as i32)).collect(),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// View renders

/// Canonical render viewpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    /// The scene camera.
    Front,
    /// Orthographic, looking down: image x = world x, world z runs up the
    /// image.
    Top,
    /// Orthographic, looking along world +x: image x = world z, image y =
    /// world y.
    Side,
}

impl View {
    pub fn name(self) -> &'static str {
        match self {
            View::Front => "front",
            View::Top => "top",
            View::Side => "side",
        }
    }
}

const VIEW_BG: [u8; 3] = [28, 28, 34];

const PALETTE: [[u8; 3]; 8] = [
    [214, 69, 56],
    [66, 114, 212],
    [63, 186, 94],
    [232, 185, 35],
    [156, 89, 182],
    [235, 126, 47],
    [52, 186, 178],
    [189, 195, 199],
];

struct ViewHits {
    depth: Grid<f64>,
    instance: Grid<i32>,
    triangle: Grid<i32>,
}

impl ViewHits {
    fn new(w: usize, h: usize) -> Self {
        ViewHits {
            depth: Grid::filled(w, h, f64::INFINITY),
            instance: Grid::filled(w, h, -1),
            triangle: Grid::filled(w, h, -1),
        }
    }
}

/// Z-buffers one instance's triangles given pre-projected pixel positions
/// and per-vertex view depths.
fn raster_view_pass(
    pts: &[(f64, f64)],
    depths: &[f64],
    faces: &[[usize; 3]],
    instance: i32,
    hits: &mut ViewHits,
) {
    let (w, h) = (hits.depth.width, hits.depth.height);
    for (ti, f) in faces.iter().enumerate() {
        let (a, b, c) = (pts[f[0]], pts[f[1]], pts[f[2]]);
        let area2 = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if area2.abs() < 1e-12 || !area2.is_finite() {
            continue;
        }
        let inv = 1.0 / area2;
        let x0 = a.0.min(b.0).min(c.0).floor().clamp(0.0, w as f64 - 1.0) as usize;
        let x1 = a.0.max(b.0).max(c.0).ceil().clamp(0.0, w as f64 - 1.0) as usize;
        let y0 = a.1.min(b.1).min(c.1).floor().clamp(0.0, h as f64 - 1.0) as usize;
        let y1 = a.1.max(b.1).max(c.1).ceil().clamp(0.0, h as f64 - 1.0) as usize;
        let (da, db, dc) = (depths[f[0]], depths[f[1]], depths[f[2]]);
        for y in y0..=y1 {
            let py = y as f64 + 0.5;
            for x in x0..=x1 {
                let px = x as f64 + 0.5;
                let la = ((c.0 - b.0) * (py - b.1) - (c.1 - b.1) * (px - b.0)) * inv;
                let lb = ((a.0 - c.0) * (py - c.1) - (a.1 - c.1) * (px - c.0)) * inv;
                let lc = 1.0 - la - lb;
                if la < 0.0 || lb < 0.0 || lc < 0.0 {
                    continue;
                }
                let z = la * da + lb * db + lc * dc;
                let i = y * w + x;
                if z < hits.depth.data[i] {
                    hits.depth.data[i] = z;
                    hits.instance.data[i] = instance;
                    hits.triangle.data[i] = ti as i32;
                }
            }
        }
    }
}

fn shade(color: [u8; 3], normal: Vec3, axis: Vec3) -> Rgb<u8> {
    let lambert = 0.3 + 0.7 * normal.dot(&axis).abs();
    Rgb([
        (color[0] as f64 * lambert).round() as u8,
        (color[1] as f64 * lambert).round() as u8,
        (color[2] as f64 * lambert).round() as u8,
    ])
}

/// Renders one view of the scene as a flat-shaded image with per-instance
/// colors; image size matches the scene camera.
pub fn render_view(scene: &Scene, view: View) -> Result<RgbImage> {
    let (w, h) = (scene.camera.width as usize, scene.camera.height as usize);
    let worlds = scene.all_world_vertices()?;
    let mut hits = ViewHits::new(w, h);

    match view {
        View::Front => {
            for (i, world) in worlds.iter().enumerate() {
                let render = render_depth(world, &scene.mesh(i).faces, &scene.camera);
                for p in 0..hits.depth.data.len() {
                    if render.depth.data[p] < hits.depth.data[p] {
                        hits.depth.data[p] = render.depth.data[p];
                        hits.instance.data[p] = i as i32;
                        hits.triangle.data[p] = render.tri.data[p];
                    }
                }
            }
        }
        View::Top | View::Side => {
            // Orthographic frame fit to the world bounding box with a 5%
            // margin, uniform scale, centered.
            let plane = |v: &Vec3| match view {
                View::Top => (v.x, -v.z, v.y),
                _ => (v.z, v.y, v.x),
            };
            let mut lo = (f64::INFINITY, f64::INFINITY);
            let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for world in &worlds {
                for v in world {
                    let (a, b, _) = plane(v);
                    lo = (lo.0.min(a), lo.1.min(b));
                    hi = (hi.0.max(a), hi.1.max(b));
                }
            }
            if lo.0.is_finite() {
                let span = ((hi.0 - lo.0).max(1e-9), (hi.1 - lo.1).max(1e-9));
                let fit = ((w as f64 * 0.9) / span.0).min(h as f64 * 0.9 / span.1);
                let center = ((lo.0 + hi.0) / 2.0, (lo.1 + hi.1) / 2.0);
                for (i, world) in worlds.iter().enumerate() {
                    let mut pts = Vec::with_capacity(world.len());
                    let mut depths = Vec::with_capacity(world.len());
                    for v in world {
                        let (a, b, d) = plane(v);
                        pts.push((
                            (a - center.0) * fit + w as f64 / 2.0,
                            (b - center.1) * fit + h as f64 / 2.0,
                        ));
                        depths.push(d);
                    }
                    raster_view_pass(&pts, &depths, &scene.mesh(i).faces, i as i32, &mut hits);
                }
            }
        }
    }

    let axis = match view {
        View::Front => Vec3::new(0.0, 0.0, 1.0),
        View::Top => Vec3::new(0.0, 1.0, 0.0),
        View::Side => Vec3::new(1.0, 0.0, 0.0),
    };
    let mut img = RgbImage::from_pixel(w as u32, h as u32, Rgb(VIEW_BG));
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let inst = hits.instance.data[p];
            if inst < 0 {
                continue;
            }
            let ti = hits.triangle.data[p];
            let color = PALETTE[inst as usize % PALETTE.len()];
            let px = if ti >= 0 {
                let f = scene.mesh(inst as usize).faces[ti as usize];
                let vs = &worlds[inst as usize];
                let n = (vs[f[1]] - vs[f[0]]).cross(&(vs[f[2]] - vs[f[0]]));
                let n = if n.norm() > 1e-12 { n.normalize() } else { axis };
                shade(color, n, axis)
            } else {
                Rgb(color)
            };
            img.put_pixel(x as u32, y as u32, px);
        }
    }
    Ok(img)
}

/// Renders the requested views into `dir` as `{front,top,side}.png` and
/// returns the written paths.
pub fn render_views(scene: &Scene, views: &[View], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::with_capacity(views.len());
    for &view in views {
        let img = render_view(scene, view)?;
        let path = dir.join(format!("{}.png", view.name()));
        img.save(&path).map_err(|e| Error::load(&path, e.to_string()))?;
        out.push(path);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scale-learning reports

fn bar_chart(hist: &Histogram) -> RgbImage {
    let bins = hist.counts.len();
    let (w, h) = ((bins * 24 + 40).max(240) as u32, 180u32);
    let (margin, base) = (20i64, 160i64);
    let mut img = RgbImage::from_pixel(w, h, Rgb([245, 245, 248]));
    let max = hist.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar_w = (w as i64 - 2 * margin) as f64 / bins as f64;
    for (b, &count) in hist.counts.iter().enumerate() {
        let top = base - ((count as f64 / max) * 130.0).round() as i64;
        let x0 = margin + (b as f64 * bar_w).round() as i64;
        let x1 = margin + ((b as f64 + 0.85) * bar_w).round() as i64;
        for x in x0..=x1.min(w as i64 - 1) {
            for y in top..=base {
                img.put_pixel(x as u32, y as u32, Rgb([70, 110, 180]));
            }
        }
    }
    for x in margin..(w as i64 - margin) {
        img.put_pixel(x as u32, base as u32 + 1, Rgb([40, 40, 40]));
    }
    img
}

/// Writes scale-loop results: `means.csv` (`round,category,mean`, where
/// round 0 carries the initial table means and learned rounds count from
/// 1), per-round histogram CSVs (`bin_lo,bin_hi,count`), and a bar-chart
/// PNG per category for the final round.
pub fn write_scale_rounds(
    dir: &Path,
    initial: &BTreeMap<String, f64>,
    rounds: &[ScaleRound],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut means = String::from("round,category,mean\n");
    for (cat, mean) in initial {
        let _ = writeln!(means, "0,{cat},{mean}");
    }
    for (r, round) in rounds.iter().enumerate() {
        for (cat, mean) in &round.means {
            let _ = writeln!(means, "{},{cat},{mean}", r + 1);
        }
        for (cat, hist) in &round.histograms {
            let mut csv = String::from("bin_lo,bin_hi,count\n");
            for (b, &count) in hist.counts.iter().enumerate() {
                let _ = writeln!(csv, "{},{},{count}", hist.edges[b], hist.edges[b + 1]);
            }
            let path = dir.join(format!("hist_{cat}_round{}.csv", r + 1));
            fs::write(&path, csv).map_err(|e| Error::load(&path, e.to_string()))?;
        }
    }
    let path = dir.join("means.csv");
    fs::write(&path, means).map_err(|e| Error::load(&path, e.to_string()))?;
    if let Some(last) = rounds.last() {
        for (cat, hist) in &last.histograms {
            let path = dir.join(format!("hist_{cat}.png"));
            bar_chart(hist)
                .save(&path)
                .map_err(|e| Error::load(&path, e.to_string()))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
