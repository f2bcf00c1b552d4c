//! Experiment tables: averaging, and the open-frame analog under noise.

use std::path::{Path, PathBuf};

use comgrasp::harness::{cmd_table, TableRow};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn num(rec: &csv::StringRecord, col: usize) -> Option<f64> {
    rec.get(col).filter(|s| !s.is_empty()).map(|s| s.parse().unwrap())
}

#[test]
fn noisy_frame_reps_reduce_torque_and_average_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("list.toml");
    std::fs::write(
        &list,
        format!(
            "[[experiment]]\nid = \"frame\"\nscenario = {:?}\nrepetitions = 10\nseed_base = 600\n",
            scenario("exp6_frame.toml").display().to_string()
        ),
    )
    .unwrap();
    let out = dir.path().join("table.csv");
    // scaled down from 10 repetitions
    let t = cmd_table(&list, Some(3), &out, 1).unwrap();
    assert_eq!(t.failures, 0);

    // per repetition: the last lift sees less torque than the first
    let mut first_taus = Vec::new();
    let mut last_taus = Vec::new();
    for rep in ["0", "1", "2"] {
        let rows: Vec<&TableRow> = t.per_rep.iter().filter(|r| r.rep == rep).collect();
        first_taus.push(rows.first().unwrap().tau.abs());
        last_taus.push(rows.last().unwrap().tau.abs());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a, b) = (mean(&first_taus), mean(&last_taus));
    assert!(b < a && (a - b) / a >= 0.30, "mean |tau| {a:.4} -> {b:.4}");

    // every aggregate cell is the mean of the per-rep cells it covers
    let reps = read_rows(&comgrasp::harness::reps_path(&out));
    let agg = read_rows(&out);
    for row in &agg {
        let iter = &row[2];
        let members: Vec<&csv::StringRecord> = reps.iter().filter(|r| &r[2] == iter).collect();
        for col in [5, 6, 7] {
            let vals: Vec<f64> = members.iter().filter_map(|r| num(r, col)).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((num(row, col).unwrap() - m).abs() < 2e-6, "iter {iter} col {col}");
        }
    }
}
