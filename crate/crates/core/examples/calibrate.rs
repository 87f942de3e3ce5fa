//! Prints threshold-averaged FMR trends for a synthetic population.
//!
//! `cargo run --release --example calibrate -- [params.json]`

use std::time::Instant;

use iris_lab::metrics::{average_over_thresholds, default_thresholds, run_sweep, wide_table, SweepPlan, DEFAULT_SHIFTS};
use iris_lab::synth::{generate_population, SynthParams};
use iris_lab::validation::{first_false_match_prob, ScanModel};
use iris_lab::{Method, ShiftRange};

fn main() -> iris_lab::Result<()> {
    let params: SynthParams = match std::env::args().nth(1) {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => SynthParams::default(),
    };
    let sizes = vec![100, 200, 400, 600, 800, 1000, 1200, 1400];
    let t0 = Instant::now();
    let pop = generate_population(&params, &sizes)?;
    eprintln!("generated {} probes in {:?}", pop.probes.len(), t0.elapsed());
    let plan = SweepPlan::new(
        sizes.clone(),
        default_thresholds::<f64>(),
        DEFAULT_SHIFTS.map(ShiftRange::new).to_vec(),
        Method::BOTH.to_vec(),
        None,
    )?;
    let out = run_sweep(&pop.gallery, &pop.probes, &plan)?;
    eprintln!("swept in {:?}", t0.elapsed());
    let summary = average_over_thresholds(&out.rows()?)?;
    for s in DEFAULT_SHIFTS {
        println!("shifts ±{s}\n{}", wide_table(&summary, s));
    }
    for n in [100, 400, 1400] {
        let t = out.tally(n, 0, 0.32).unwrap();
        let q = t.impostor_rate::<f64>().unwrap();
        let g = t.genuine_rate::<f64>().unwrap();
        let model = 100.0 * first_false_match_prob(&ScanModel::new(n, q, g)?);
        let c = out.cell(iris_lab::metrics::Discipline::Single(Method::OneToFirst), n, 0.32, 0).unwrap();
        let mc = 100.0 * c.counts.fm as f64 / c.counts.total() as f64;
        println!("N={n} q={q:.3e} g={g:.4} model={model:.3}% mc={mc:.3}%");
    }
    Ok(())
}
