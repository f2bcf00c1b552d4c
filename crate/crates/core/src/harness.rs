//! Batch runner behind the `comgrasp` command: single detections, single
//! episodes with their files, and repeated experiments averaged into one
//! table.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cloud::pcd::load_pcd;
use crate::com::nearest_handle;
use crate::controller::{
    perceive, run_episode_traced, ControllerParams, Decision, EpisodeReport, IterationRecord, PerceptionParams,
};
use crate::error::{Error, Result};
use crate::geometry::{Point3, Wrench};
use crate::sim::{load_scenario, render_scan, MeasureAxis, NoiseModel, SceneSpec, SimRobot, TorqueSample};

/// Column order shared by every CSV the harness writes.
pub const CSV_HEADER: [&str; 12] =
    ["exp_id", "rep", "iter", "d_r", "d_v", "f_g", "tau", "d", "tau_prime", "d_prime", "pct", "decision"];

/// One row per lift: the lift's own torque and lever arm, and those of the
/// lift that followed it (blank after the last lift).
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub exp_id: String,
    /// Repetition index, or "mean" in aggregated tables.
    pub rep: String,
    pub iter: usize,
    pub d_r: Option<f64>,
    pub d_v: Option<f64>,
    pub f_g: f64,
    pub tau: f64,
    pub d: f64,
    pub tau_prime: Option<f64>,
    pub d_prime: Option<f64>,
    pub pct: f64,
    pub decision: String,
}

impl TableRow {
    fn fields(&self) -> [String; 12] {
        let opt = |v: Option<f64>| v.map(fmt6).unwrap_or_default();
        [
            self.exp_id.clone(),
            self.rep.clone(),
            self.iter.to_string(),
            opt(self.d_r),
            opt(self.d_v),
            fmt6(self.f_g),
            fmt6(self.tau),
            fmt6(self.d),
            opt(self.tau_prime),
            opt(self.d_prime),
            fmt6(self.pct),
            self.decision.clone(),
        ]
    }

    pub fn is_failure(&self) -> bool {
        self.decision.starts_with("abort") || self.decision.starts_with("error")
    }
}

fn fmt6(v: f64) -> String {
    // avoid "-0.000000" so reruns and platforms agree textually
    let s = format!("{v:.6}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') { s.trim_start_matches('-').to_string() } else { s }
}

pub fn write_rows<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Torque and lever arm of a lift, signed along the measurement axis when
/// there is one. The sign is that of the offset from the grasp to the CoM
/// line, projected on the axis.
fn signed_lever(w: &Wrench, axis: Option<&MeasureAxis>) -> (f64, f64) {
    let (f, tau) = (w.force.norm(), w.torque.norm());
    let d = if f > 0.0 { tau / f } else { 0.0 };
    let sign = match axis {
        Some(a) if w.force.cross(&w.torque).dot(&a.direction) < 0.0 => -1.0,
        _ => 1.0,
    };
    (sign * tau, sign * d)
}

/// Table rows of one episode. `lift_coms` holds the true CoM at each lift.
pub fn episode_rows(
    exp_id: &str,
    rep: usize,
    report: &EpisodeReport,
    lift_coms: &[Point3],
    axis: Option<&MeasureAxis>,
) -> Vec<TableRow> {
    let d_v = axis.zip(report.visual_com).map(|(a, c)| a.coordinate(&c));
    let recs: &[IterationRecord] = &report.records;
    recs.iter()
        .enumerate()
        .map(|(k, r)| {
            let (tau, d) = signed_lever(&r.wrench, axis);
            let next = recs.get(k + 1).map(|n| signed_lever(&n.wrench, axis));
            let pct = match recs.get(k + 1) {
                Some(n) if r.tau_norm > 0.0 => ((r.tau_norm - n.tau_norm) / r.tau_norm).abs() * 100.0,
                _ => 0.0,
            };
            TableRow {
                exp_id: exp_id.to_string(),
                rep: rep.to_string(),
                iter: r.iteration,
                d_r: axis.zip(lift_coms.get(k)).map(|(a, c)| a.coordinate(c)),
                d_v,
                f_g: r.wrench.force.norm(),
                tau,
                d,
                tau_prime: next.map(|n| n.0),
                d_prime: next.map(|n| n.1),
                pct,
                decision: r.decision.label().to_string(),
            }
        })
        .collect()
}

fn failure_row(exp_id: &str, rep: usize, iter: usize, label: &str) -> TableRow {
    TableRow {
        exp_id: exp_id.to_string(),
        rep: rep.to_string(),
        iter,
        d_r: None,
        d_v: None,
        f_g: 0.0,
        tau: 0.0,
        d: 0.0,
        tau_prime: None,
        d_prime: None,
        pct: 0.0,
        decision: label.to_string(),
    }
}

/// Where `detect` reads its cloud from.
#[derive(Debug, Clone)]
pub enum DetectInput {
    Scenario { path: PathBuf, seed: u64, noiseless: bool },
    Cloud(PathBuf),
}

/// Runs Stage I once and lists the plane, object, CoM, handles and the
/// grasp nearest the CoM.
pub fn cmd_detect(input: &DetectInput, pp: &PerceptionParams) -> Result<String> {
    let cloud = match input {
        DetectInput::Scenario { path, seed, noiseless } => {
            let mut scene = load_scenario(path)?;
            scene.noise = if *noiseless { NoiseModel::noiseless(*seed) } else { NoiseModel { seed: *seed, ..scene.noise } };
            render_scan(&scene, &scene.noise)
        }
        DetectInput::Cloud(path) => load_pcd(path)?,
    };
    if cloud.valid_count() == 0 {
        return Err(Error::EmptyAfterFilter);
    }
    let per = perceive(&cloud, pp)?;
    let (best, dist) = nearest_handle(&per.handles, &per.visual_com.point)?;
    let mut s = String::new();
    let n = per.plane.normal;
    let c = per.visual_com.point;
    let _ = writeln!(s, "plane: normal {:.4} {:.4} {:.4} offset {:.4} ({} inliers)", n.x, n.y, n.z, per.plane.offset, per.plane_inliers);
    let _ = writeln!(s, "object: {} points", per.object.len());
    let _ = writeln!(s, "visual CoM: {:.4} {:.4} {:.4}", c.x, c.y, c.z);
    let _ = writeln!(s, "handles: {}", per.handles.len());
    let g = &per.handles[best].grasp;
    let _ = writeln!(
        s,
        "selected: handle {best} at {:.4} {:.4} {:.4}, {dist:.4} m from the CoM, axis {:.3} {:.3} {:.3}",
        g.origin.x, g.origin.y, g.origin.z, g.x_axis.x, g.x_axis.y, g.x_axis.z
    );
    for (i, h) in per.handles.iter().enumerate() {
        let _ = writeln!(s, "{i} {}", h.to_record());
    }
    Ok(s)
}

/// An episode on the simulator with everything needed to write its files.
#[derive(Debug)]
pub struct EpisodeRun {
    pub scene: SceneSpec,
    pub report: EpisodeReport,
    pub rows: Vec<TableRow>,
    pub trace: Vec<TorqueSample>,
    pub lift_coms: Vec<Point3>,
    pub error: Option<Error>,
}

impl EpisodeRun {
    pub fn failed(&self) -> bool {
        self.error.is_some() || self.report.outcome.is_abort()
    }
}

/// Runs one episode; the scene's noise seed and the handle seeding both
/// follow `seed`.
pub fn run_scene(
    exp_id: &str,
    rep: usize,
    scene: SceneSpec,
    seed: u64,
    noiseless: bool,
    pp: &PerceptionParams,
    cp: &ControllerParams,
) -> Result<EpisodeRun> {
    let mut scene = scene;
    scene.noise = if noiseless { NoiseModel::noiseless(seed) } else { NoiseModel { seed, ..scene.noise } };
    let axis = scene.measure_axis;
    let mut robot = SimRobot::new(scene.clone())?;
    let pp = PerceptionParams { seed, ..pp.clone() };
    let out = run_episode_traced(&mut robot, &pp, cp);
    let mut rows = episode_rows(exp_id, rep, &out.report, robot.lift_coms(), axis.as_ref());
    match &out.error {
        Some(Error::GraspFailed(_)) => {
            rows.push(failure_row(exp_id, rep, out.report.lifts() + 1, Decision::AbortGraspFailed.label()))
        }
        Some(e) => rows.push(failure_row(exp_id, rep, out.report.lifts() + 1, &format!("error: {e}"))),
        None => {}
    }
    Ok(EpisodeRun {
        scene,
        report: out.report,
        rows,
        trace: robot.torque_trace().to_vec(),
        lift_coms: robot.lift_coms().to_vec(),
        error: out.error,
    })
}

/// `episode.csv`, `summary.txt` and `torque_trace.csv` in `out_dir`.
pub fn cmd_episode(scenario: &Path, seed: u64, out_dir: &Path, noiseless: bool) -> Result<EpisodeRun> {
    let scene = load_scenario(scenario)?;
    let id = scene.name.clone();
    let run = run_scene(&id, 0, scene, seed, noiseless, &PerceptionParams::default(), &ControllerParams::default())?;
    fs::create_dir_all(out_dir)?;

    let mut csv_buf = Vec::new();
    write_rows(&run.rows, &mut csv_buf)?;
    write_atomic(&out_dir.join("episode.csv"), &csv_buf)?;

    let mut summary = format!("scenario: {}\nseed: {seed}{}\n", run.scene.name, if noiseless { " (noiseless)" } else { "" });
    let true_com = run.lift_coms.first().copied().or_else(|| crate::sim::true_com(&run.scene.parts).ok());
    if let Some(c) = true_com {
        let _ = writeln!(summary, "true CoM: {:.4} {:.4} {:.4}", c.x, c.y, c.z);
    }
    summary.push_str(&run.report.summary());
    if let Some(e) = &run.error {
        let _ = writeln!(summary, "error: {e}");
    }
    write_atomic(&out_dir.join("summary.txt"), summary.as_bytes())?;

    let mut trace = csv::Writer::from_writer(Vec::new());
    trace.write_record(["lift", "time", "tau_x", "tau_y", "tau_z", "tau_norm"])?;
    for t in &run.trace {
        trace.write_record([
            (t.lift + 1).to_string(),
            format!("{:.2}", t.time),
            fmt6(t.torque.x),
            fmt6(t.torque.y),
            fmt6(t.torque.z),
            fmt6(t.torque.norm()),
        ])?;
    }
    let bytes = trace.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&out_dir.join("torque_trace.csv"), &bytes)?;
    Ok(run)
}

/// One entry of an experiment list.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: String,
    pub scenario: PathBuf,
    pub repetitions: usize,
    pub seed_base: u64,
    pub noiseless: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentList {
    #[serde(default)]
    experiment: Vec<ExperimentDef>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentDef {
    id: String,
    scenario: PathBuf,
    #[serde(default = "ten")]
    repetitions: usize,
    #[serde(default)]
    seed_base: u64,
    #[serde(default)]
    noiseless: bool,
}

fn ten() -> usize {
    10
}

/// Reads an experiment list; scenario paths are relative to the list file.
pub fn load_experiments(path: &Path) -> Result<Vec<ExperimentSpec>> {
    let text = fs::read_to_string(path)?;
    let bad = |msg: String| Error::Scenario { path: path.to_path_buf(), msg };
    let list: ExperimentList = toml::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    list.experiment
        .into_iter()
        .map(|e| {
            if e.repetitions == 0 {
                return Err(bad(format!("experiment {}: repetitions must be at least 1", e.id)));
            }
            Ok(ExperimentSpec {
                id: e.id,
                scenario: base.join(e.scenario),
                repetitions: e.repetitions,
                seed_base: e.seed_base,
                noiseless: e.noiseless,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableOutcome {
    pub per_rep: Vec<TableRow>,
    pub aggregate: Vec<TableRow>,
    /// Episodes that aborted or stopped on an error.
    pub failures: usize,
}

/// Runs every repetition of every experiment (seed = base + rep) and writes
/// the averaged table to `out`, the raw rows next to it as `<stem>_reps.csv`.
/// `jobs` > 1 runs experiments on that many threads; results do not depend
/// on it.
pub fn cmd_table(list: &Path, reps: Option<usize>, out: &Path, jobs: usize) -> Result<TableOutcome> {
    let mut specs = load_experiments(list)?;
    if let Some(n) = reps {
        if n == 0 {
            return Err(Error::InvalidParameter("--reps must be at least 1".into()));
        }
        for s in &mut specs {
            s.repetitions = n;
        }
    }
    let outcome = run_table(&specs, jobs)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    write_rows(&outcome.aggregate, &mut buf)?;
    write_atomic(out, &buf)?;
    let mut buf = Vec::new();
    write_rows(&outcome.per_rep, &mut buf)?;
    write_atomic(&reps_path(out), &buf)?;
    Ok(outcome)
}

pub fn reps_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("table");
    out.with_file_name(format!("{stem}_reps.csv"))
}

pub fn run_table(specs: &[ExperimentSpec], jobs: usize) -> Result<TableOutcome> {
    let scenes = specs.iter().map(|s| load_scenario(&s.scenario)).collect::<Result<Vec<_>>>()?;
    let run_one = |k: usize| -> Result<(Vec<TableRow>, usize)> {
        let spec = &specs[k];
        let (mut rows, mut failures) = (Vec::new(), 0);
        for rep in 0..spec.repetitions {
            let seed = spec.seed_base.wrapping_add(rep as u64);
            let run = run_scene(
                &spec.id,
                rep,
                scenes[k].clone(),
                seed,
                spec.noiseless,
                &PerceptionParams::default(),
                &ControllerParams::default(),
            )?;
            if run.failed() {
                log::warn!("{} rep {rep}: episode failed ({:?})", spec.id, run.error);
                failures += 1;
            }
            rows.extend(run.rows);
        }
        Ok((rows, failures))
    };
    let results: Vec<Result<(Vec<TableRow>, usize)>> = if jobs > 1 && specs.len() > 1 {
        let mut slots: Vec<Option<Result<(Vec<TableRow>, usize)>>> = (0..specs.len()).map(|_| None).collect();
        let width = specs.len().div_ceil(jobs);
        std::thread::scope(|scope| {
            for (c, chunk) in slots.chunks_mut(width).enumerate() {
                let run_one = &run_one;
                scope.spawn(move || {
                    for (j, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(run_one(c * width + j));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("every slot is filled")).collect()
    } else {
        (0..specs.len()).map(run_one).collect()
    };
    let (mut per_rep, mut failures) = (Vec::new(), 0);
    for r in results {
        let (rows, f) = r?;
        per_rep.extend(rows);
        failures += f;
    }
    let aggregate = aggregate(&per_rep);
    Ok(TableOutcome { per_rep, aggregate, failures })
}

/// Means of the per-rep rows for each (experiment, iteration), in first
/// appearance order. Optional columns average over the rows that have them;
/// the decision is kept when all rows agree and reads "mixed" otherwise.
pub fn aggregate(rows: &[TableRow]) -> Vec<TableRow> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let k = (r.exp_id.clone(), r.iter);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(id, iter)| {
            let group: Vec<&TableRow> = rows.iter().filter(|r| r.exp_id == id && r.iter == iter).collect();
            let mean = |f: &dyn Fn(&TableRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / group.len() as f64;
            let mean_opt = |f: &dyn Fn(&TableRow) -> Option<f64>| {
                let v: Vec<f64> = group.iter().filter_map(|r| f(r)).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            let first = &group[0].decision;
            let decision = if group.iter().all(|r| &r.decision == first) { first.clone() } else { "mixed".to_string() };
            TableRow {
                exp_id: id,
                rep: "mean".to_string(),
                iter,
                d_r: mean_opt(&|r| r.d_r),
                d_v: mean_opt(&|r| r.d_v),
                f_g: mean(&|r| r.f_g),
                tau: mean(&|r| r.tau),
                d: mean(&|r| r.d),
                tau_prime: mean_opt(&|r| r.tau_prime),
                d_prime: mean_opt(&|r| r.d_prime),
                pct: mean(&|r| r.pct),
                decision,
            }
        })
        .collect()
}

/// Writes through a sibling temporary file so readers never see a partial
/// file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
