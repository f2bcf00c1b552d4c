//! The regrasp loop: visual grasp first, then lift, measure, reselect and
//! regrasp until the wrist torque or the proposed hand move is small.

use std::fmt::Write as _;
use std::io::Write;

use crate::cloud::{
    estimate_normals, extract_target_object, preprocess_scan, segment_dominant_plane, ObjectParams, PlaneParams,
    PointCloud, PreprocessParams,
};
use crate::com::{com_line_from_wrench, nearest_handle, select_min_torque_handle, visual_com, CandidateScore, ComEstimate};
use crate::error::{Error, Result};
use crate::geometry::{Frame, Line3, Plane, Point3, Vec3, Wrench};
use crate::handles::{detect_handles_detailed, Handle, HandleParams};

/// What the controller needs from a robot. Frames are in the world frame.
pub trait RobotPort {
    fn scan(&mut self) -> Result<PointCloud>;
    /// Closes the hand at `grasp`; `false` when the grasp is refused.
    fn grasp_at(&mut self, grasp: &Frame) -> Result<bool>;
    fn lift(&mut self) -> Result<()>;
    fn lower_and_release(&mut self) -> Result<()>;
    /// Wrist wrench averaged over `settle_window` seconds; only valid while
    /// the object is lifted.
    fn read_wrench(&mut self, settle_window: f64) -> Result<Wrench>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub tau_thres: f64,
    pub d_thres: f64,
    pub max_iters: usize,
    pub settle_window: f64,
    pub min_force: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self { tau_thres: 0.02, d_thres: 0.02, max_iters: 5, settle_window: 2.0, min_force: 0.5 }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tau_thres > 0.0
            && self.d_thres > 0.0
            && self.max_iters > 0
            && self.settle_window > 0.0
            && self.min_force > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("controller parameters must be positive: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionParams {
    pub preprocess: PreprocessParams,
    pub normal_k: usize,
    pub plane: PlaneParams,
    pub object: ObjectParams,
    pub handles: HandleParams,
    pub voxel_size: f64,
    /// Seed for handle seeding; the plane search has its own.
    pub seed: u64,
}

impl Default for PerceptionParams {
    fn default() -> Self {
        Self {
            preprocess: PreprocessParams::default(),
            normal_k: 20,
            plane: PlaneParams::default(),
            object: ObjectParams::default(),
            handles: HandleParams::default(),
            voxel_size: 0.01,
            seed: 0,
        }
    }
}

/// Everything the exteroceptive stage extracts from one scan.
#[derive(Debug, Clone)]
pub struct Perception {
    pub filtered_points: usize,
    pub plane: Plane,
    pub plane_inliers: usize,
    pub object: PointCloud,
    pub rejected_clusters: usize,
    pub handles: Vec<Handle>,
    pub vertical_handles: usize,
    pub visual_com: ComEstimate,
}

/// Scan to handles and visual CoM. The scan may be in any frame with a
/// world pose; results are in the world frame.
pub fn perceive(scan: &PointCloud, params: &PerceptionParams) -> Result<Perception> {
    let clock = std::time::Instant::now();
    let lap = |stage: &str| log::debug!("{stage} done at {:.3} s", clock.elapsed().as_secs_f64());
    let world = scan.to_world();
    let viewpoint = world.viewpoint;
    let filtered = preprocess_scan(&world, &params.preprocess)?;
    lap("preprocess");
    let with_normals = estimate_normals(&filtered, params.normal_k, &viewpoint)?;
    lap("normals");
    let (plane, inliers) = segment_dominant_plane(&with_normals, &params.plane)?;
    lap("plane");
    let seg = extract_target_object(&with_normals, &plane, &inliers, &params.object)?;
    lap("object");
    let det = detect_handles_detailed(&seg.object, &params.handles, &plane, &viewpoint, params.seed)?;
    lap("handles");
    log::debug!(
        "perception: {} filtered, {} plane inliers, {} object points, {} seeds, {} cylinders, {} handles, rejections {:?}",
        filtered.len(),
        inliers.len(),
        seg.object.len(),
        det.seeds,
        det.accepted.len(),
        det.handles.len(),
        det.rejections
    );
    if det.vertical > 0 {
        log::warn!("{} handle runs skipped: axis parallel to the table normal", det.vertical);
    }
    if det.handles.is_empty() {
        return Err(Error::NoHandlesFound);
    }
    let com = visual_com(&seg.object, params.voxel_size)?;
    Ok(Perception {
        filtered_points: filtered.len(),
        plane,
        plane_inliers: inliers.len(),
        object: seg.object,
        rejected_clusters: seg.rejected_clusters,
        handles: det.handles,
        vertical_handles: det.vertical,
        visual_com: com,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    ContinueRegrasp,
    DoneTorque,
    DoneDisplacement,
    DoneNegligibleLoad,
    AbortMaxIters,
    AbortGraspFailed,
}

impl Decision {
    pub fn label(self) -> &'static str {
        match self {
            Decision::ContinueRegrasp => "continue_regrasp",
            Decision::DoneTorque => "done_torque",
            Decision::DoneDisplacement => "done_displacement",
            Decision::DoneNegligibleLoad => "done_negligible_load",
            Decision::AbortMaxIters => "abort_max_iters",
            Decision::AbortGraspFailed => "abort_grasp_failed",
        }
    }

    pub fn is_abort(self) -> bool {
        matches!(self, Decision::AbortMaxIters | Decision::AbortGraspFailed)
    }
}

/// Termination test run after each lift.
pub fn check_termination(tau_norm: f64, d_g_norm: Option<f64>, iter: usize, p: &ControllerParams) -> Decision {
    if tau_norm <= p.tau_thres {
        Decision::DoneTorque
    } else if d_g_norm.is_some_and(|d| d <= p.d_thres) {
        Decision::DoneDisplacement
    } else if iter >= p.max_iters {
        Decision::AbortMaxIters
    } else {
        Decision::ContinueRegrasp
    }
}

/// The handle choice made after a lift, kept so it can be re-checked.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRecord {
    pub candidates: Vec<Point3>,
    pub scores: Vec<CandidateScore>,
    pub chosen: usize,
    pub d_g: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based lift number.
    pub iteration: usize,
    pub grasp: Frame,
    pub wrench: Wrench,
    pub tau_norm: f64,
    pub com_line: Option<Line3>,
    pub selection: Option<SelectionRecord>,
    pub d_g_norm: Option<f64>,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub records: Vec<IterationRecord>,
    pub visual_com: Option<Point3>,
    /// Handle count from every scan of the episode.
    pub handle_counts: Vec<usize>,
    pub final_grasp: Option<Frame>,
    pub outcome: Decision,
    pub torque_reduction_pct: f64,
}

impl EpisodeReport {
    fn new() -> Self {
        Self {
            records: Vec::new(),
            visual_com: None,
            handle_counts: Vec::new(),
            final_grasp: None,
            outcome: Decision::ContinueRegrasp,
            torque_reduction_pct: 0.0,
        }
    }

    pub fn lifts(&self) -> usize {
        self.records.len()
    }

    pub fn regrasps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn first_tau(&self) -> Option<f64> {
        self.records.first().map(|r| r.tau_norm)
    }

    pub fn last_tau(&self) -> Option<f64> {
        self.records.last().map(|r| r.tau_norm)
    }

    fn finish(&mut self) {
        self.torque_reduction_pct = match (self.first_tau(), self.last_tau()) {
            (Some(a), Some(b)) if a > 0.0 => ((a - b) / a).abs() * 100.0,
            _ => 0.0,
        };
        self.final_grasp = self.records.last().map(|r| r.grasp);
    }

    /// Per-lift CSV: iter, tau, d_g, decision.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "tau", "d_g", "decision"])?;
        for r in &self.records {
            let d = r.d_g_norm.map(|d| format!("{d:.6}")).unwrap_or_default();
            w.write_record([r.iteration.to_string(), format!("{:.6}", r.tau_norm), d, r.decision.label().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "outcome: {}", self.outcome.label());
        let _ = writeln!(s, "lifts: {} (regrasps: {})", self.lifts(), self.regrasps());
        if let Some(c) = self.visual_com {
            let _ = writeln!(s, "visual CoM: {:.4} {:.4} {:.4}", c.x, c.y, c.z);
        }
        for r in &self.records {
            let g = r.grasp.origin;
            let _ = write!(
                s,
                "lift {}: grasp {:.4} {:.4} {:.4}  |f| {:.3} N  |tau| {:.4} N·m",
                r.iteration,
                g.x,
                g.y,
                g.z,
                r.wrench.force.norm(),
                r.tau_norm
            );
            if let Some(d) = r.d_g_norm {
                let _ = write!(s, "  |d_g| {d:.4} m");
            }
            let _ = writeln!(s, "  -> {}", r.decision.label());
        }
        let _ = writeln!(s, "torque reduction: {:.1}%", self.torque_reduction_pct);
        s
    }
}

/// Episode result with the report kept even when the run stops on an error.
#[derive(Debug)]
pub struct EpisodeOutcome {
    pub report: EpisodeReport,
    pub error: Option<Error>,
}

pub fn run_episode<R: RobotPort>(robot: &mut R, pp: &PerceptionParams, cp: &ControllerParams) -> Result<EpisodeReport> {
    let out = run_episode_traced(robot, pp, cp);
    match out.error {
        Some(e) => Err(e),
        None => Ok(out.report),
    }
}

pub fn run_episode_traced<R: RobotPort>(robot: &mut R, pp: &PerceptionParams, cp: &ControllerParams) -> EpisodeOutcome {
    let mut report = EpisodeReport::new();
    let error = episode_loop(robot, pp, cp, &mut report).err();
    if matches!(error, Some(Error::GraspFailed(_))) {
        report.outcome = Decision::AbortGraspFailed;
    }
    report.finish();
    EpisodeOutcome { report, error }
}

fn episode_loop<R: RobotPort>(
    robot: &mut R,
    pp: &PerceptionParams,
    cp: &ControllerParams,
    report: &mut EpisodeReport,
) -> Result<()> {
    cp.validate()?;
    let per = perceive(&robot.scan()?, pp)?;
    report.handle_counts.push(per.handles.len());
    report.visual_com = Some(per.visual_com.point);
    let (first, _) = nearest_handle(&per.handles, &per.visual_com.point)?;
    let mut grasp = per.handles[first].grasp;
    let mut final_lift = false;

    for iter in 1.. {
        if !robot.grasp_at(&grasp)? {
            return Err(Error::GraspFailed(format!("grasp {iter} at {:.4?} refused", grasp.origin.coords.as_slice())));
        }
        robot.lift()?;
        let wrench = robot.read_wrench(cp.settle_window)?;
        let tau_norm = wrench.torque.norm();
        let mut record = IterationRecord {
            iteration: iter,
            grasp,
            wrench: wrench.clone(),
            tau_norm,
            com_line: None,
            selection: None,
            d_g_norm: None,
            decision: Decision::ContinueRegrasp,
        };

        if final_lift {
            // the lift after a small-displacement regrasp ends the episode
            record.decision =
                if tau_norm <= cp.tau_thres { Decision::DoneTorque } else { Decision::DoneDisplacement };
            return Ok(push(report, record));
        }
        match check_termination(tau_norm, None, iter, cp) {
            Decision::DoneTorque => {
                record.decision = Decision::DoneTorque;
                return Ok(push(report, record));
            }
            Decision::AbortMaxIters => {
                robot.lower_and_release()?;
                record.decision = Decision::AbortMaxIters;
                return Ok(push(report, record));
            }
            _ => {}
        }
        let line = match com_line_from_wrench(&wrench, &grasp.origin, cp.min_force) {
            Ok(l) => l,
            Err(Error::ForceTooSmall { .. }) => {
                record.decision = Decision::DoneNegligibleLoad;
                return Ok(push(report, record));
            }
            Err(e) => return Err(e),
        };
        record.com_line = Some(line);
        robot.lower_and_release()?;

        // the object may have changed or moved: look again
        let per = perceive(&robot.scan()?, pp)?;
        report.handle_counts.push(per.handles.len());
        let sel = select_min_torque_handle(&per.handles, &line, &wrench.force, &grasp.origin)?;
        let d_g_norm = sel.d_g.norm();
        record.d_g_norm = Some(d_g_norm);
        record.decision = check_termination(tau_norm, Some(d_g_norm), iter, cp);
        record.selection = Some(SelectionRecord {
            candidates: per.handles.iter().map(Handle::origin).collect(),
            scores: sel.scores,
            chosen: sel.index,
            d_g: sel.d_g,
        });
        // a small move still regrasps and lifts once more
        final_lift = record.decision == Decision::DoneDisplacement;
        grasp = per.handles[sel.index].grasp;
        report.records.push(record);
    }
    unreachable!("the loop returns on every terminal decision")
}

fn push(report: &mut EpisodeReport, record: IterationRecord) {
    report.outcome = record.decision;
    report.records.push(record);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn termination_table() {
        let p = ControllerParams::default();
        assert_eq!(check_termination(0.015, None, 1, &p), Decision::DoneTorque);
        assert_eq!(check_termination(0.5, Some(0.01), 1, &p), Decision::DoneDisplacement);
        assert_eq!(check_termination(0.5, Some(0.10), 5, &p), Decision::AbortMaxIters);
        assert_eq!(check_termination(0.5, Some(0.10), 2, &p), Decision::ContinueRegrasp);
        assert_eq!(check_termination(0.5, None, 1, &p), Decision::ContinueRegrasp);
    }

    #[test]
    fn thresholds_are_inclusive() {
        let p = ControllerParams::default();
        assert_eq!(check_termination(0.02, None, 1, &p), Decision::DoneTorque);
        assert_eq!(check_termination(0.03, Some(0.02), 1, &p), Decision::DoneDisplacement);
    }

    #[test]
    fn non_positive_parameters_rejected() {
        let p = ControllerParams { tau_thres: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
