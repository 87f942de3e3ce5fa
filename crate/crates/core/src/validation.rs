//! Independent oracles: a per-bit reference matcher, a closed-form model of
//! 1:First false matches, and equivalence checks between the two search
//! engines (and between the engines and the sweep table).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::codec::{BitMatrix, IrisTemplate};
use crate::error::{Error, Result};
use crate::matcher::{best_of_m, MatchScore, ShiftRange};
use crate::metrics::{run_sweep, CellStats, Discipline, OutcomeCounts, SweepPlan};
use crate::scalar::Scalar;
use crate::search::{classify_outcome, identify, identify_1first, identify_1n, Decision, Gallery, SearchParams};

/// Reference best-of-M: explicit per-bit loops over every shift, best picked
/// by sorting on (distance, |shift|, shift).
pub fn naive_best_of_m(a: &IrisTemplate, b: &IrisTemplate, r: ShiftRange) -> Result<MatchScore> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::contract("template dimensions differ"));
    }
    let (rows, cols) = (a.rows() as i64, a.cols() as i64);
    let s = r.max_shift() as i64;
    if 2 * s >= cols {
        return Err(Error::contract("shift range too wide for template"));
    }
    let mut candidates = Vec::new();
    for k in -s..=s {
        let (mut differing, mut compared) = (0u32, 0u32);
        for row in 0..rows {
            for col in 0..cols {
                let src = (col - k).rem_euclid(cols);
                let (row, src, col) = (row as usize, src as usize, col as usize);
                let valid = a.mask().get(row, src) && b.mask().get(row, col);
                if valid {
                    compared += 1;
                    if a.code().get(row, src) != b.code().get(row, col) {
                        differing += 1;
                    }
                }
            }
        }
        if compared > 0 {
            candidates.push((differing, compared, k));
        }
    }
    candidates.sort_by(|x, y| {
        let lhs = x.0 as u64 * y.1 as u64;
        let rhs = y.0 as u64 * x.1 as u64;
        lhs.cmp(&rhs).then(x.2.abs().cmp(&y.2.abs())).then(x.2.cmp(&y.2))
    });
    Ok(match candidates.first() {
        Some(&(d, c, k)) => MatchScore::new(d, c, k as i32),
        None => MatchScore::incomparable(),
    })
}

/// Sequential-scan abstraction of 1:First: `n` enrollments, each impostor
/// accepted independently with probability `q`, the mate accepted with
/// probability `g`, mate position uniform over the gallery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanModel<T> {
    n: usize,
    q: T,
    g: T,
}

impl<T: Scalar> ScanModel<T> {
    pub fn new(n: usize, q: T, g: T) -> Result<Self> {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        if n == 0 || !unit(q) || !unit(g) {
            return Err(Error::contract(format!("invalid scan model n={n} q={q} g={g}")));
        }
        Ok(ScanModel { n, q, g })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn g(&self) -> T {
        self.g
    }
}

/// Probability that a 1:First scan accepts an impostor: an accepted mate at
/// position `M` is pre-empted by any of the `M` earlier impostors, a rejected
/// mate exposes all `n - 1` impostors.
pub fn first_false_match_prob<T: Scalar>(m: &ScanModel<T>) -> T {
    let miss = T::one() - m.q;
    let all_impostors = T::one() - miss.powi((m.n - 1) as i32);
    let mut before_mate = T::zero();
    let mut survive = T::one();
    for _ in 0..m.n {
        before_mate = before_mate + (T::one() - survive);
        survive = survive * miss;
    }
    m.g * before_mate / T::count(m.n as u64) + (T::one() - m.g) * all_impostors
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub trial: u64,
    pub seed: u64,
    pub probe: String,
    pub gallery_size: usize,
    pub threshold: f64,
    pub shifts: u32,
    pub one_to_n: Decision,
    pub one_to_first: Decision,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub trials: u64,
    pub violations: Vec<Violation>,
    /// Trials that ended in a match.
    pub matched: u64,
    /// Mean of (1:N comparisons - 1:First comparisons) over matched trials.
    pub mean_comparisons_saved: f64,
    /// Mean of 1:First comparisons / gallery size over matched trials.
    pub mean_first_scan_fraction: f64,
}

impl EquivalenceReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn observe<T: Scalar>(
        &mut self,
        seed: u64,
        probe: &IrisTemplate,
        gallery: &Gallery,
        p: &SearchParams<T>,
    ) -> Result<()> {
        let n = identify_1n(gallery, probe, p)?;
        let f = identify_1first(gallery, probe, p)?;
        if n.decision() != f.decision() {
            self.violations.push(Violation {
                trial: self.trials,
                seed,
                probe: probe.sample_id().to_owned(),
                gallery_size: gallery.len(),
                threshold: p.threshold().to_f64_lossy(),
                shifts: p.shift_range().max_shift(),
                one_to_n: n.decision(),
                one_to_first: f.decision(),
            });
        }
        if f.decision() == Decision::Match {
            let k = self.matched as f64;
            let saved = n.comparisons as f64 - f.comparisons as f64;
            let frac = f.comparisons as f64 / gallery.len() as f64;
            self.mean_comparisons_saved = (self.mean_comparisons_saved * k + saved) / (k + 1.0);
            self.mean_first_scan_fraction = (self.mean_first_scan_fraction * k + frac) / (k + 1.0);
            self.matched += 1;
        }
        self.trials += 1;
        Ok(())
    }
}

/// Runs both engines on every (probe, params) pair and records any
/// disagreement in the match/non-match decision.
pub fn decision_equivalence_check<T: Scalar>(
    gallery: &Gallery,
    probes: &[IrisTemplate],
    params: &[SearchParams<T>],
) -> Result<EquivalenceReport> {
    let mut report = EquivalenceReport::default();
    for probe in probes {
        for p in params {
            report.observe(gallery.order_seed(), probe, gallery, p)?;
        }
    }
    Ok(report)
}

fn random_template(rng: &mut ChaCha8Rng, rows: usize, cols: usize, label: &str, sample: &str) -> IrisTemplate {
    let code = BitMatrix::from_fn(rows, cols, |_, _| rng.gen_bool(0.5));
    let mask = BitMatrix::from_fn(rows, cols, |_, _| rng.gen_bool(0.85));
    IrisTemplate::new(code, mask, label, sample).expect("matching shapes")
}

/// Randomized equivalence trials on small random galleries. Each trial draws
/// its own gallery, probe (a noisy, rotated copy of an enrollment or an
/// unrelated code), threshold and shift range from `seed`.
pub fn randomized_equivalence_trials(seed: u64, trials: u64) -> Result<EquivalenceReport> {
    let mut report = EquivalenceReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rows, cols) = (2, 32);
    for trial in 0..trials {
        let n = rng.gen_range(1..=24);
        let entries: Vec<IrisTemplate> = (0..n)
            .map(|i| random_template(&mut rng, rows, cols, &format!("E{i}"), &format!("E{i}-0")))
            .collect();
        let gallery = Gallery::from_ordered(entries, seed)?;
        let probe = if rng.gen_bool(0.8) {
            let src = &gallery.entries()[rng.gen_range(0..n)];
            let flip = rng.gen_range(0.0..0.4);
            let mut code = src.code().clone();
            for r in 0..rows {
                for c in 0..cols {
                    if rng.gen_bool(flip) {
                        code.set(r, c, !code.get(r, c));
                    }
                }
            }
            IrisTemplate::new(code, src.mask().clone(), src.identity(), format!("T{trial}"))?.rotated(rng.gen_range(-4..=4))
        } else {
            random_template(&mut rng, rows, cols, "X", &format!("T{trial}"))
        };
        let threshold = rng.gen_range(0.05..0.6);
        let shifts = ShiftRange::new(rng.gen_range(0..=6));
        report.observe(seed, &probe, &gallery, &SearchParams::new(threshold, shifts)?)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDisagreement {
    pub method: String,
    pub gallery_size: usize,
    pub threshold: f64,
    pub shifts: u32,
    pub engine: (OutcomeCounts, u64),
    pub table: (OutcomeCounts, u64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AgreementReport {
    pub cells_checked: usize,
    pub disagreements: Vec<CellDisagreement>,
}

/// Recomputes every single-stage cell of `plan` with the search engines on
/// prefix galleries and compares outcome counts and comparison totals with
/// the sweep table.
pub fn engine_agreement<T: Scalar>(
    gallery: &Gallery,
    probes: &[IrisTemplate],
    plan: &SweepPlan<T>,
) -> Result<AgreementReport> {
    let table = run_sweep(gallery, probes, plan)?;
    let mut report = AgreementReport::default();
    for &size in plan.sizes() {
        let sub = gallery.prefix(size)?;
        let enrolled: Vec<&IrisTemplate> = probes.iter().filter(|p| sub.position_of(p.identity()).is_some()).collect();
        for &r in plan.ranges() {
            for &t in plan.thresholds() {
                let params = SearchParams::new(t, r)?;
                for &m in plan.methods() {
                    let mut stats = CellStats::default();
                    for p in &enrolled {
                        let res = identify(m, &sub, p, &params)?;
                        stats.counts.record(classify_outcome(&res, p.identity()));
                        stats.comparisons += res.comparisons as u64;
                    }
                    let cell = table
                        .cell(Discipline::Single(m), size, t, r.max_shift())
                        .copied()
                        .unwrap_or_default();
                    report.cells_checked += 1;
                    if cell.counts != stats.counts || cell.comparisons != stats.comparisons {
                        report.disagreements.push(CellDisagreement {
                            method: m.as_str().to_owned(),
                            gallery_size: size,
                            threshold: t.to_f64_lossy(),
                            shifts: r.max_shift(),
                            engine: (stats.counts, stats.comparisons),
                            table: (cell.counts, cell.comparisons),
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleMismatch {
    pub case: String,
    pub optimized: MatchScore,
    pub reference: MatchScore,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OracleReport {
    pub pairs_checked: u64,
    pub mismatches: Vec<OracleMismatch>,
}

impl OracleReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }

    fn compare(&mut self, case: impl FnOnce() -> String, a: &IrisTemplate, b: &IrisTemplate, r: ShiftRange) -> Result<()> {
        let optimized = best_of_m(a, b, r)?;
        let reference = naive_best_of_m(a, b, r)?;
        self.pairs_checked += 1;
        if optimized != reference {
            self.mismatches.push(OracleMismatch {
                case: case(),
                optimized,
                reference,
            });
        }
        Ok(())
    }
}

/// Every pair of 1x8 codes (full masks) at shift ranges 0, 1 and 2.
pub fn oracle_exhaustive_small() -> Result<OracleReport> {
    let make = |v: u32| {
        IrisTemplate::unmasked(BitMatrix::from_fn(1, 8, |_, c| v >> c & 1 == 1), "x", format!("{v:02x}"))
    };
    let all: Vec<IrisTemplate> = (0..256).map(make).collect::<Result<_>>()?;
    let mut report = OracleReport::default();
    for s in 0..=2 {
        let r = ShiftRange::new(s);
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                report.compare(|| format!("1x8 codes {i:#04x} vs {j:#04x}, ±{s}"), a, b, r)?;
            }
        }
    }
    Ok(report)
}

/// Random masked pairs: fair-coin codes, a random occluded angular band per
/// template, plus ~5% scattered invalid bits.
pub fn oracle_random_pairs(seed: u64, pairs: u64, rows: usize, cols: usize, r: ShiftRange) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let code = BitMatrix::from_fn(rows, cols, |_, _| rng.gen_bool(0.5));
        let start = rng.gen_range(0..cols);
        let width = rng.gen_range(0..=cols / 4);
        let mask = BitMatrix::from_fn(rows, cols, |_, c| (c + cols - start) % cols >= width && rng.gen_bool(0.95));
        IrisTemplate::new(code, mask, "x", "y")
    };
    let mut report = OracleReport::default();
    for i in 0..pairs {
        let a = draw(&mut rng)?;
        let b = draw(&mut rng)?;
        report.compare(|| format!("seed {seed} pair {i}"), &a, &b, r)?;
    }
    Ok(report)
}
