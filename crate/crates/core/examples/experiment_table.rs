//! Repeated episodes over several scenarios, averaged into one table in
//! the layout of the CSV written by `comgrasp table`.
//!
//! cargo run --release --example experiment_table -- [reps]

use std::path::Path;

use comgrasp::harness::{run_table, write_rows, ExperimentSpec};

fn main() -> comgrasp::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let specs: Vec<ExperimentSpec> = [("exp11", "exp11_drill.toml", 1100), ("exp6", "exp6_frame.toml", 600)]
        .into_iter()
        .map(|(id, file, seed_base)| ExperimentSpec {
            id: id.into(),
            scenario: dir.join(file),
            repetitions: reps,
            seed_base,
            noiseless: false,
        })
        .collect();

    let table = run_table(&specs, 1)?;
    println!("per repetition:");
    write_rows(&table.per_rep, std::io::stdout())?;
    println!("\naveraged:");
    write_rows(&table.aggregate, std::io::stdout())?;
    if table.failures > 0 {
        eprintln!("{} episodes failed", table.failures);
    }
    Ok(())
}
