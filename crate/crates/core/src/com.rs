//! Center-of-mass estimates and grasp choice: the visual voxel-median guess,
//! the CoM line from a static wrench, and minimum-torque handle selection.

use std::collections::BTreeMap;
use std::io::Write;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{point_line_displacement, Line3, Point3, Vec3, Wrench};
use crate::handles::Handle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComSource {
    Visual,
    Wrench,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComEstimate {
    pub point: Point3,
    pub source: ComSource,
    pub iteration: usize,
}

/// Coordinate-wise median of per-voxel centroids on a grid anchored at the
/// cloud's minimum corner. Points inside a voxel are summed in
/// lexicographic order, which makes the result independent of input order
/// down to the last bit.
pub fn visual_com(object: &PointCloud, voxel_size: f64) -> Result<ComEstimate> {
    if !(voxel_size > 0.0) {
        return Err(Error::InvalidParameter(format!("voxel size {voxel_size}")));
    }
    let (lo, _) = object.bounds().ok_or(Error::TooFewPoints { needed: 1, got: 0 })?;
    let mut voxels: BTreeMap<(i64, i64, i64), Vec<Point3>> = BTreeMap::new();
    for p in object.points.iter().filter(|p| p.coords.iter().all(|c| c.is_finite())) {
        let d = (p - lo) / voxel_size;
        voxels.entry((d.x.floor() as i64, d.y.floor() as i64, d.z.floor() as i64)).or_default().push(*p);
    }
    let centroids: Vec<Point3> = voxels.into_values().map(|mut pts| ordered_mean(&mut pts)).collect();
    let axis_median = |k: usize| {
        let mut v: Vec<f64> = centroids.iter().map(|c| c[k]).collect();
        median(&mut v)
    };
    Ok(ComEstimate {
        point: Point3::new(axis_median(0), axis_median(1), axis_median(2)),
        source: ComSource::Visual,
        iteration: 0,
    })
}

fn ordered_mean(pts: &mut [Point3]) -> Point3 {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z)));
    let sum = pts.iter().fold(Vec3::zeros(), |acc, p| acc + p.coords);
    Point3::from(sum / pts.len() as f64)
}

/// Median of a non-empty slice; mean of the two middle values for even
/// lengths.
pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Index of the handle whose grasp origin is closest to `com`, with that
/// distance. Ties go to the lower index.
pub fn nearest_handle(handles: &[Handle], com: &Point3) -> Result<(usize, f64)> {
    handles
        .iter()
        .enumerate()
        .map(|(i, h)| (i, (h.origin() - com).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .ok_or(Error::EmptyHandleList)
}

/// The line of CoM positions consistent with one static wrench measured at
/// `grasp_origin`: p0 = grasp + (f × τ)/‖f‖², direction f̂.
pub fn com_line_from_wrench(w: &Wrench, grasp_origin: &Point3, min_force: f64) -> Result<Line3> {
    let f = w.force;
    let fn2 = f.norm_squared();
    let fnorm = fn2.sqrt();
    if !(fnorm >= min_force) || fnorm == 0.0 {
        return Err(Error::ForceTooSmall { force: fnorm, min: min_force });
    }
    let p0 = grasp_origin + f.cross(&w.torque) / fn2;
    Ok(Line3 { p0, u: f / fnorm })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub handle_index: usize,
    /// Shortest displacement from the handle's grasp origin to the CoM line.
    pub d_h: Vec3,
    /// ‖d_h × f‖, the torque this grasp would see.
    pub torque_effort: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    /// Move from the current grasp origin to the selected one.
    pub d_g: Vec3,
    pub scores: Vec<CandidateScore>,
}

/// Scores every handle by the torque it would see under load `f` and picks
/// the smallest. Ties fall to the shorter offset, then the lower index.
pub fn select_min_torque_handle(
    handles: &[Handle],
    com_line: &Line3,
    f: &Vec3,
    current_grasp: &Point3,
) -> Result<Selection> {
    let scores: Vec<CandidateScore> = handles
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let d_h = point_line_displacement(&h.origin(), com_line);
            CandidateScore { handle_index: i, d_h, torque_effort: d_h.cross(f).norm() }
        })
        .collect();
    let best = scores
        .iter()
        .min_by(|a, b| {
            a.torque_effort
                .total_cmp(&b.torque_effort)
                .then(a.d_h.norm().total_cmp(&b.d_h.norm()))
                .then(a.handle_index.cmp(&b.handle_index))
        })
        .ok_or(Error::EmptyHandleList)?;
    let index = best.handle_index;
    Ok(Selection { index, d_g: handles[index].origin() - current_grasp, scores })
}

pub fn write_scores_csv<W: Write>(scores: &[CandidateScore], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["handle_index", "d_h_x", "d_h_y", "d_h_z", "torque_effort"])?;
    for s in scores {
        w.write_record([
            s.handle_index.to_string(),
            s.d_h.x.to_string(),
            s.d_h.y.to_string(),
            s.d_h.z.to_string(),
            s.torque_effort.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Frame;
    use crate::handles::Cylinder;
    use proptest::prelude::*;

    fn handle_at(p: Point3) -> Handle {
        let c = Cylinder { centroid: p, axis: Vec3::x(), radius: 0.03, extent: 0.05 };
        Handle { cylinders: vec![c; 3], representative: c, grasp: Frame::translation(p) }
    }

    #[test]
    fn symmetric_box_centers_on_origin() {
        let mut pts = Vec::new();
        for i in -10..=10 {
            for j in -6..=6 {
                for k in -4..=4 {
                    pts.push(Point3::new(i as f64 * 0.01, j as f64 * 0.01, k as f64 * 0.01));
                }
            }
        }
        // voxel incommensurate with the grid so no point sits on a cell boundary
        let est = visual_com(&PointCloud::new(pts, "world"), 0.0137).unwrap();
        assert!(est.point.coords.norm() <= 0.005, "{:?}", est.point);
        assert_eq!(est.source, ComSource::Visual);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn nearest_handle_cases() {
        let hs: Vec<Handle> = [0.1, 0.2, 0.3].iter().map(|&x| handle_at(Point3::new(x, 0.0, 0.9))).collect();
        assert_eq!(nearest_handle(&hs, &Point3::new(0.24, 0.0, 0.9)).unwrap().0, 1);
        let (i, d) = nearest_handle(&hs, &Point3::new(0.3, 0.0, 0.9)).unwrap();
        assert_eq!((i, d), (2, 0.0));
        // off the object
        let (_, d) = nearest_handle(&hs, &Point3::new(0.2, 0.5, 1.2)).unwrap();
        assert!(d.is_finite());
        // exact tie goes to the lower index
        assert_eq!(nearest_handle(&hs, &Point3::new(0.15, 0.0, 0.9)).unwrap().0, 0);
        assert!(matches!(nearest_handle(&[], &Point3::origin()), Err(Error::EmptyHandleList)));
    }

    #[test]
    fn wrench_line_reproduces_a_measured_offset() {
        let w = Wrench::new(Vec3::new(0.0, 0.0, -12.0), Vec3::new(0.886, 0.0, 0.0), "grasp");
        let line = com_line_from_wrench(&w, &Point3::origin(), 0.5).unwrap();
        assert!((line.p0 - Point3::new(0.0, -0.886 / 12.0, 0.0)).norm() < 1e-12);
        assert!((line.u - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        let zero = Wrench::new(Vec3::new(0.0, 0.0, -5.0), Vec3::zeros(), "grasp");
        let g = Point3::new(0.2, 0.1, 0.9);
        assert_eq!(com_line_from_wrench(&zero, &g, 0.5).unwrap().p0, g);
    }

    #[test]
    fn measured_rod_rows_give_their_recorded_lever_arms() {
        // (tau N·m, |f| N, recorded lever arm m) from rod lifts
        let rows = [
            (0.886, 12.0, 0.0736),
            (1.323, 13.7, 0.0969),
            (1.734, 15.9, 0.1086),
            (1.617, 14.2, 0.1138),
            (-0.648, 17.9, -0.0362),
            (1.514, 14.9, 0.1013),
        ];
        let g = Point3::new(0.0, 0.0, 0.97);
        for (tau, f, d) in rows {
            let w = Wrench::new(Vec3::new(0.0, 0.0, -f), Vec3::new(0.0, tau, 0.0), "grasp");
            let line = com_line_from_wrench(&w, &g, 0.5).unwrap();
            let predicted = point_line_displacement(&g, &line).x;
            assert!(((predicted - d) / d).abs() <= 0.01, "{predicted} vs {d}");
        }
    }

    #[test]
    fn small_force_is_rejected() {
        let w = Wrench::new(Vec3::new(0.0, 0.0, -0.3), Vec3::zeros(), "grasp");
        assert!(matches!(com_line_from_wrench(&w, &Point3::origin(), 0.5), Err(Error::ForceTooSmall { .. })));
    }

    #[test]
    fn closest_to_line_handle_wins() {
        let line = Line3::new(Point3::new(0.5, 0.0, 1.0), Vec3::new(0.0, 0.0, -1.0)).unwrap();
        let hs: Vec<Handle> = [0.40, 0.47, 0.58].iter().map(|&x| handle_at(Point3::new(x, 0.0, 0.97))).collect();
        let f = Vec3::new(0.0, 0.0, -12.0);
        let sel = select_min_torque_handle(&hs, &line, &f, &hs[0].origin()).unwrap();
        assert_eq!(sel.index, 1);
        assert!((sel.scores[1].torque_effort - 0.03 * 12.0).abs() < 1e-12);
        assert!((sel.d_g - Vec3::new(0.07, 0.0, 0.0)).norm() < 1e-12);
        // a handle exactly on the line scores zero
        let on = vec![handle_at(Point3::new(0.5, 0.0, 0.9))];
        let sel = select_min_torque_handle(&on, &line, &f, &Point3::origin()).unwrap();
        assert_eq!(sel.scores[0].torque_effort, 0.0);
    }

    #[test]
    fn scores_csv_has_header_and_rows() {
        let scores = vec![CandidateScore { handle_index: 0, d_h: Vec3::new(0.1, 0.0, 0.0), torque_effort: 1.2 }];
        let mut buf = Vec::new();
        write_scores_csv(&scores, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "handle_index,d_h_x,d_h_y,d_h_z,torque_effort\n0,0.1,0,0,1.2\n");
    }

    fn vec3(lo: f64, hi: f64) -> impl Strategy<Value = Vec3> {
        (lo..hi, lo..hi, lo..hi).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn line_reproduces_perpendicular_torque(f in vec3(-30.0, 30.0), tau in vec3(-3.0, 3.0), g in vec3(-1.0, 1.0)) {
            prop_assume!(f.norm() >= 0.5);
            let grasp = Point3::from(g);
            let line = com_line_from_wrench(&Wrench::new(f, tau, "grasp"), &grasp, 0.5).unwrap();
            let fh = f.normalize();
            let perp = tau - fh * fh.dot(&tau);
            let resid = (line.p0 - grasp).cross(&f) - perp;
            prop_assert!(resid.norm() <= 1e-9 * (1.0 + tau.norm()));
            // p0 is the foot of the grasp origin on the line
            prop_assert!((line.p0 - grasp).dot(&line.u).abs() <= 1e-9);
        }

        #[test]
        fn planted_offset_is_recovered(r in vec3(-0.5, 0.5), f in vec3(-30.0, 30.0)) {
            prop_assume!(f.norm() >= 0.5);
            let r = r - f.normalize() * f.normalize().dot(&r);
            let line = com_line_from_wrench(&Wrench::new(f, r.cross(&f), "grasp"), &Point3::origin(), 0.5).unwrap();
            prop_assert!((line.p0.coords - r).norm() <= 1e-9);
        }

        #[test]
        fn selection_is_scale_invariant(
            xs in prop::collection::vec(-0.5..0.5f64, 1..12),
            c in 0.01..100.0f64,
            lx in -0.5..0.5f64,
        ) {
            let hs: Vec<Handle> = xs.iter().map(|&x| handle_at(Point3::new(x, 0.0, 0.95))).collect();
            let f = Vec3::new(0.0, 0.0, -9.81);
            let line = Line3::new(Point3::new(lx, 0.02, 1.0), f).unwrap();
            let a = select_min_torque_handle(&hs, &line, &f, &Point3::origin()).unwrap();
            let b = select_min_torque_handle(&hs, &line, &(f * c), &Point3::origin()).unwrap();
            prop_assert_eq!(a.index, b.index);
            for s in &a.scores {
                prop_assert!((s.torque_effort - s.d_h.cross(&f).norm()).abs() <= 1e-12);
            }
        }

        #[test]
        fn visual_com_ignores_point_order(
            coords in prop::collection::vec((-0.3..0.3f64, -0.3..0.3f64, 0.9..1.1f64), 1..200),
            rot in 0usize..200,
        ) {
            let pts: Vec<Point3> = coords.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let mut shuffled = pts.clone();
            shuffled.reverse();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            let a = visual_com(&PointCloud::new(pts, "w"), 0.01).unwrap().point;
            let b = visual_com(&PointCloud::new(shuffled, "w"), 0.01).unwrap().point;
            prop_assert_eq!(a.coords.map(f64::to_bits), b.coords.map(f64::to_bits));
        }
    }
}
