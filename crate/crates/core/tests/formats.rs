//! Template files, manifests, gallery ordering and nested prefixes.

use iris_lab::codec::{read_template_file, write_template_file};
use iris_lab::harness::write_population;
use iris_lab::metrics::{run_sweep, Discipline, SweepPlan};
use iris_lab::search::{load_manifest, shuffle_gallery, Gallery};
use iris_lab::synth::{generate_population, ProbeSchedule, SynthParams};
use iris_lab::{BitMatrix, IrisTemplate, Method, ShiftRange};
use proptest::prelude::*;

fn labelled(n: usize) -> Vec<IrisTemplate> {
    (0..n)
        .map(|i| IrisTemplate::unmasked(BitMatrix::zeros(1, 8), format!("{i}"), "s").unwrap())
        .collect()
}

fn head(g: &Gallery, k: usize) -> Vec<&str> {
    g.entries().iter().take(k).map(|t| t.identity()).collect()
}

#[test]
fn shuffle_is_pinned_per_seed() {
    let a = shuffle_gallery(labelled(1400), 1).unwrap();
    let b = shuffle_gallery(labelled(1400), 2).unwrap();
    assert_eq!(head(&a, 6), ["180", "873", "627", "11", "1159", "188"]);
    assert_eq!(head(&b, 6), ["604", "768", "149", "421", "834", "776"]);
    assert_ne!(head(&a, 1400), head(&b, 1400));
    let again = shuffle_gallery(labelled(1400), 1).unwrap();
    assert_eq!(head(&a, 1400), head(&again, 1400));
}

fn small_params() -> SynthParams {
    SynthParams {
        n_identities: 24,
        probes_per_identity: ProbeSchedule::Fixed(2),
        seed: 31,
        ..SynthParams::default()
    }
}

#[test]
fn population_round_trips_through_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let p = small_params();
    let pop = generate_population(&p, &[]).unwrap();
    write_population(&pop, &p, dir.path()).unwrap();
    let gallery = load_manifest(dir.path().join("gallery.json")).unwrap();
    let probes = load_manifest(dir.path().join("probes.json")).unwrap();
    assert_eq!(gallery, pop.gallery.entries());
    assert_eq!(probes, pop.probes);
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("population.json")).unwrap()).unwrap();
    assert_eq!(sidecar["enrolled"], 24);
    assert_eq!(sidecar["params"]["seed"], 31);
}

#[test]
fn manifest_identity_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let t = IrisTemplate::unmasked(BitMatrix::ones(2, 16), "alice", "a-1").unwrap();
    write_template_file(&t, dir.path().join("a.irt")).unwrap();
    let m = dir.path().join("m.json");
    std::fs::write(&m, r#"[{"path": "a.irt", "identity": "bob"}]"#).unwrap();
    assert!(load_manifest(&m).is_err());
    std::fs::write(&m, r#"[{"path": "a.irt", "identity": "alice"}]"#).unwrap();
    assert_eq!(load_manifest(&m).unwrap(), vec![t.clone()]);
    assert_eq!(read_template_file(dir.path().join("a.irt")).unwrap(), t);
}

#[test]
fn nested_cells_equal_standalone_prefix_runs() {
    let p = small_params();
    let pop = generate_population(&p, &[]).unwrap();
    let plan = |sizes: Vec<usize>| {
        SweepPlan::new(sizes, vec![0.3, 0.35], vec![ShiftRange::new(0), ShiftRange::new(4)], Method::BOTH.to_vec(), None)
            .unwrap()
    };
    let nested = run_sweep(&pop.gallery, &pop.probes, &plan(vec![8, 16, 24])).unwrap();
    for n in [8, 16] {
        let sub = pop.gallery.prefix(n).unwrap();
        let enrolled: Vec<_> = pop.probes.iter().filter(|q| sub.position_of(q.identity()).is_some()).cloned().collect();
        let alone = run_sweep(&sub, &enrolled, &plan(vec![n])).unwrap();
        for m in Method::BOTH {
            for s in [0, 4] {
                for t in [0.3, 0.35] {
                    let d = Discipline::Single(m);
                    assert_eq!(nested.cell(d, n, t, s), alone.cell(d, n, t, s), "{m} N={n} ±{s} t={t}");
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prefixes_nest(seed in any::<u64>(), a in 1usize..60, b in 1usize..60) {
        let (small, large) = (a.min(b), a.max(b));
        let g = shuffle_gallery(labelled(60), seed).unwrap();
        let outer = g.prefix(large).unwrap();
        let inner = outer.prefix(small).unwrap();
        prop_assert_eq!(head(&inner, small), head(&g, small));
        prop_assert_eq!(outer.len(), large);
    }
}
