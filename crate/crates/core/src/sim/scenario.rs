//! TOML scenario files.
//!
//! ```toml
//! name = "rod"
//! [table]
//! height = 0.90
//! [camera]
//! eye = [0.0, -0.866, 1.4]
//! target = [0.0, 0.0, 0.9]
//! [noise]
//! depth_sigma = 0.002
//! [measure]
//! direction = [1.0, 0.0, 0.0]
//! [part.0]
//! kind = "cylinder"
//! pose = { xyz = [0.0, 0.0, 0.935], rpy = [0.0, 0.0, 0.0] }
//! dims = [0.035, 1.05]
//! mass = 1.223
//! [event.0]
//! after_iteration = 1
//! remove = 0
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{Camera, EventAction, MeasureAxis, NoiseModel, PartPrimitive, SceneEvent, SceneSpec, Shape, Table, GRAVITY};
use crate::error::{Error, Result};
use crate::geometry::{Frame, Point3, Vec3};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    #[allow(dead_code)]
    note: Option<String>,
    gravity: Option<f64>,
    #[serde(default)]
    table: TableDef,
    #[serde(default)]
    camera: CameraDef,
    #[serde(default)]
    noise: NoiseDef,
    measure: Option<MeasureDef>,
    part: BTreeMap<String, PartDef>,
    #[serde(default)]
    event: BTreeMap<String, EventDef>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TableDef {
    height: Option<f64>,
    x: Option<[f64; 2]>,
    y: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CameraDef {
    eye: Option<[f64; 3]>,
    target: Option<[f64; 3]>,
    pose: Option<PoseDef>,
    vfov_deg: Option<f64>,
    width: Option<usize>,
    height: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDef {
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct NoiseDef {
    depth_sigma: Option<f64>,
    outlier_rate: Option<f64>,
    dropout_rate: Option<f64>,
    force_sigma: Option<f64>,
    torque_sigma: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureDef {
    direction: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartDef {
    kind: String,
    pose: PoseDef,
    dims: Vec<f64>,
    mass: f64,
    #[serde(default = "yes")]
    present: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventDef {
    after_iteration: usize,
    add: Option<usize>,
    remove: Option<usize>,
}

pub fn load_scenario(path: &Path) -> Result<SceneSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|msg| Error::Scenario { path: path.to_path_buf(), msg })
}

pub(crate) fn parse_scenario(text: &str) -> std::result::Result<SceneSpec, String> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| e.to_string())?;

    let defaults = Table::default();
    let table = Table {
        height: file.table.height.unwrap_or(defaults.height),
        x_range: file.table.x.map_or(defaults.x_range, |r| (r[0], r[1])),
        y_range: file.table.y.map_or(defaults.y_range, |r| (r[0], r[1])),
    };

    let mut camera = match (&file.camera.pose, file.camera.eye, file.camera.target) {
        (Some(p), None, None) => Camera { pose: pose_of(p), ..Camera::default() },
        (None, Some(eye), Some(target)) => {
            let (eye, target) = (Point3::from(eye), Point3::from(target));
            Frame::look_at(eye, target, Vec3::z()).map_err(|e| format!("camera: {e}"))?;
            Camera::looking_at(eye, target)
        }
        (None, None, None) => Camera::default(),
        _ => return Err("camera: give either pose, or eye and target".into()),
    };
    camera.vfov_deg = file.camera.vfov_deg.unwrap_or(camera.vfov_deg);
    camera.width = file.camera.width.unwrap_or(camera.width);
    camera.height = file.camera.height.unwrap_or(camera.height);

    let nd = NoiseModel::default();
    let noise = NoiseModel {
        depth_sigma: file.noise.depth_sigma.unwrap_or(nd.depth_sigma),
        outlier_rate: file.noise.outlier_rate.unwrap_or(nd.outlier_rate),
        dropout_rate: file.noise.dropout_rate.unwrap_or(nd.dropout_rate),
        force_sigma: file.noise.force_sigma.unwrap_or(nd.force_sigma),
        torque_sigma: file.noise.torque_sigma.unwrap_or(nd.torque_sigma),
        seed: file.noise.seed.unwrap_or(nd.seed),
    };

    let mut parts = Vec::new();
    for (i, (key, def)) in numbered(file.part, "part")?.into_iter().enumerate() {
        if key != i {
            return Err(format!("parts must be numbered 0, 1, 2, ... (found part.{key})"));
        }
        let shape = match (def.kind.as_str(), def.dims.as_slice()) {
            ("cylinder", &[radius, length]) => Shape::Cylinder { radius, length },
            ("box", &[x, y, z]) => Shape::Box { extents: Vec3::new(x, y, z) },
            (kind, dims) => return Err(format!("part.{key}: kind {kind:?} with {} dims", dims.len())),
        };
        parts.push(PartPrimitive { shape, pose: pose_of(&def.pose), mass: def.mass, present: def.present });
    }

    let mut events = Vec::new();
    for (key, def) in numbered(file.event, "event")? {
        let action = match (def.add, def.remove) {
            (Some(i), None) => EventAction::Add(i),
            (None, Some(i)) => EventAction::Remove(i),
            _ => return Err(format!("event.{key}: exactly one of add/remove")),
        };
        events.push(SceneEvent { after_iteration: def.after_iteration, action });
    }

    let measure_axis = match file.measure {
        Some(m) => {
            let dir = Vec3::from(m.direction);
            if !(dir.norm() > 0.0) {
                return Err("measure.direction must be nonzero".into());
            }
            let dir = dir.normalize();
            let start = parts
                .iter()
                .filter(|p| p.present)
                .map(|p| p.center().coords.dot(&dir) - half_span(p, &dir))
                .fold(f64::INFINITY, f64::min);
            Some(MeasureAxis { origin: Point3::from(dir * start), direction: dir })
        }
        None => None,
    };

    let scene = SceneSpec {
        name: file.name,
        table,
        parts,
        camera,
        gravity: file.gravity.unwrap_or(GRAVITY),
        events,
        noise,
        measure_axis,
    };
    scene.validate().map_err(|e| e.to_string())?;
    Ok(scene)
}

fn numbered<T>(map: BTreeMap<String, T>, what: &str) -> std::result::Result<Vec<(usize, T)>, String> {
    let mut out = Vec::with_capacity(map.len());
    for (k, v) in map {
        let idx = k.parse::<usize>().map_err(|_| format!("{what}.{k}: key must be a number"))?;
        out.push((idx, v));
    }
    out.sort_by_key(|(k, _)| *k);
    Ok(out)
}

fn pose_of(p: &PoseDef) -> Frame {
    Frame::from_rpy(Point3::from(p.xyz), p.rpy[0], p.rpy[1], p.rpy[2])
}

/// Half the extent of a part along a unit direction.
fn half_span(p: &PartPrimitive, dir: &Vec3) -> f64 {
    let f = &p.pose;
    match p.shape {
        Shape::Cylinder { radius, length } => {
            let c = f.x_axis.dot(dir).abs();
            length / 2.0 * c + radius * (1.0 - c * c).max(0.0).sqrt()
        }
        Shape::Box { extents } => {
            (extents.x * f.x_axis.dot(dir).abs() + extents.y * f.y_axis.dot(dir).abs() + extents.z * f.z_axis.dot(dir).abs()) / 2.0
        }
    }
}
