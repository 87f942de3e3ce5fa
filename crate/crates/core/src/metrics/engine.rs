//! Grid evaluation of both search disciplines over nested gallery prefixes.
//!
//! Every probe is scored once against the largest gallery at every shift
//! range in the plan (per-shift scores, nested prefix minima), and all
//! (size, range, threshold, method) cells are derived from that table. The
//! derivation reproduces `identify_1n` / `identify_1first` exactly; the
//! validation module checks this against the real engines.

use std::collections::HashMap;

use rayon::prelude::*;

use super::{rates, sort_rows, Discipline, MetricsRow, OutcomeCounts};
use crate::codec::IrisTemplate;
use crate::error::{Error, Result};
use crate::matcher::{MatchScore, RotationBank, ShiftRange};
use crate::scalar::Scalar;
use crate::search::{Gallery, Method, Outcome};

#[derive(Debug, Clone)]
pub struct SweepPlan<T> {
    sizes: Vec<usize>,
    thresholds: Vec<T>,
    ranges: Vec<ShiftRange>,
    methods: Vec<Method>,
    two_stage: Option<(ShiftRange, ShiftRange)>,
}

impl<T: Scalar> SweepPlan<T> {
    /// Thresholds, ranges and methods are sorted and deduplicated; sizes must
    /// already be non-decreasing.
    pub fn new(
        sizes: Vec<usize>,
        mut thresholds: Vec<T>,
        mut ranges: Vec<ShiftRange>,
        mut methods: Vec<Method>,
        two_stage: Option<(ShiftRange, ShiftRange)>,
    ) -> Result<Self> {
        if sizes.is_empty() || thresholds.is_empty() || ranges.is_empty() || methods.is_empty() {
            return Err(Error::Config("sizes, thresholds, shift ranges and methods must be non-empty".into()));
        }
        if sizes.contains(&0) || sizes.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config(format!("gallery sizes must be positive and non-decreasing: {sizes:?}")));
        }
        if let Some(t) = thresholds.iter().find(|t| !(**t > T::zero() && **t < T::one())) {
            return Err(Error::Config(format!("threshold {t} outside (0, 1)")));
        }
        if let Some((a, b)) = two_stage {
            if a >= b {
                return Err(Error::Config(format!(
                    "two-stage ranges must widen, got ±{} then ±{}",
                    a.max_shift(),
                    b.max_shift()
                )));
            }
        }
        let mut sizes = sizes;
        sizes.dedup();
        thresholds.sort_by(|a, b| a.partial_cmp(b).expect("thresholds are finite"));
        thresholds.dedup();
        ranges.sort();
        ranges.dedup();
        methods.sort();
        methods.dedup();
        Ok(SweepPlan {
            sizes,
            thresholds,
            ranges,
            methods,
            two_stage,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn thresholds(&self) -> &[T] {
        &self.thresholds
    }

    pub fn ranges(&self) -> &[ShiftRange] {
        &self.ranges
    }

    pub fn methods(&self) -> &[Method] {
        &self.methods
    }

    pub fn two_stage(&self) -> Option<(ShiftRange, ShiftRange)> {
        self.two_stage
    }

    fn scored_ranges(&self) -> Vec<ShiftRange> {
        let mut all = self.ranges.clone();
        if let Some((a, b)) = self.two_stage {
            all.extend([a, b]);
        }
        all.sort();
        all.dedup();
        all
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey<T> {
    pub method: Discipline,
    pub gallery_size: usize,
    pub threshold: T,
    pub shifts: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellStats {
    pub counts: OutcomeCounts,
    /// Gallery entries scored, summed over probes.
    pub comparisons: u64,
    /// Probes that ended in a match, and the entries they scored.
    pub matched: u64,
    pub matched_comparisons: u64,
}

impl CellStats {
    fn record(&mut self, outcome: Outcome, comparisons: usize) {
        self.counts.record(outcome);
        self.comparisons += comparisons as u64;
        if outcome != Outcome::FalseNonMatch {
            self.matched += 1;
            self.matched_comparisons += comparisons as u64;
        }
    }

    fn merge(&mut self, o: &CellStats) {
        self.counts.merge(&o.counts);
        self.comparisons += o.comparisons;
        self.matched += o.matched;
        self.matched_comparisons += o.matched_comparisons;
    }

    pub fn mean_comparisons<T: Scalar>(&self) -> Option<T> {
        let n = self.counts.total();
        (n > 0).then(|| T::count(self.comparisons) / T::count(n))
    }

    pub fn mean_matched_comparisons<T: Scalar>(&self) -> Option<T> {
        (self.matched > 0).then(|| T::count(self.matched_comparisons) / T::count(self.matched))
    }
}

/// Pairwise acceptance counts at one (size, range, threshold): how many
/// impostor and genuine comparisons scored within threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScoreTally {
    pub impostor_accepted: u64,
    pub impostor_total: u64,
    pub genuine_accepted: u64,
    pub genuine_total: u64,
}

impl ScoreTally {
    fn merge(&mut self, o: &ScoreTally) {
        self.impostor_accepted += o.impostor_accepted;
        self.impostor_total += o.impostor_total;
        self.genuine_accepted += o.genuine_accepted;
        self.genuine_total += o.genuine_total;
    }

    pub fn impostor_rate<T: Scalar>(&self) -> Option<T> {
        (self.impostor_total > 0).then(|| T::count(self.impostor_accepted) / T::count(self.impostor_total))
    }

    pub fn genuine_rate<T: Scalar>(&self) -> Option<T> {
        (self.genuine_total > 0).then(|| T::count(self.genuine_accepted) / T::count(self.genuine_total))
    }
}

/// Structural checks made while deriving cells.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct Audit {
    /// Probes evaluated at each plan size.
    pub probes_per_size: Vec<u64>,
    /// (probe, size, range, threshold) cases where 1:N and 1:First decided differently.
    pub decision_mismatches: u64,
    /// Cases where a 1:N match turned into a non-match at a higher threshold.
    pub one_to_n_reversions: u64,
    /// Cases where 1:First scored more entries than 1:N.
    pub comparison_excess: u64,
}

impl Audit {
    fn merge(&mut self, o: &Audit) {
        for (a, b) in self.probes_per_size.iter_mut().zip(&o.probes_per_size) {
            *a += b;
        }
        self.decision_mismatches += o.decision_mismatches;
        self.one_to_n_reversions += o.one_to_n_reversions;
        self.comparison_excess += o.comparison_excess;
    }

    pub fn is_clean(&self) -> bool {
        self.decision_mismatches == 0 && self.one_to_n_reversions == 0 && self.comparison_excess == 0
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput<T> {
    plan: SweepPlan<T>,
    single: Vec<CellStats>,
    staged: Vec<CellStats>,
    tallies: Vec<ScoreTally>,
    pub audit: Audit,
}

impl<T: Scalar> SweepOutput<T> {
    pub fn plan(&self) -> &SweepPlan<T> {
        &self.plan
    }

    fn size_idx(&self, size: usize) -> Option<usize> {
        self.plan.sizes.iter().position(|&s| s == size)
    }

    fn thr_idx(&self, t: T) -> Option<usize> {
        self.plan.thresholds.iter().position(|&x| x == t)
    }

    fn range_idx(&self, shifts: u32) -> Option<usize> {
        self.plan.ranges.iter().position(|r| r.max_shift() == shifts)
    }

    fn single_index(&self, m: usize, si: usize, ri: usize, ti: usize) -> usize {
        ((m * self.plan.sizes.len() + si) * self.plan.ranges.len() + ri) * self.plan.thresholds.len() + ti
    }

    fn staged_index(&self, m: usize, si: usize, ti: usize) -> usize {
        (m * self.plan.sizes.len() + si) * self.plan.thresholds.len() + ti
    }

    fn tally_index(&self, si: usize, ri: usize, ti: usize) -> usize {
        (si * self.plan.ranges.len() + ri) * self.plan.thresholds.len() + ti
    }

    pub fn cell(&self, method: Discipline, gallery_size: usize, threshold: T, shifts: u32) -> Option<&CellStats> {
        let si = self.size_idx(gallery_size)?;
        let ti = self.thr_idx(threshold)?;
        match method {
            Discipline::Single(m) => {
                let mi = self.plan.methods.iter().position(|&x| x == m)?;
                let ri = self.range_idx(shifts)?;
                self.single.get(self.single_index(mi, si, ri, ti))
            }
            Discipline::TwoStage(m) => {
                let (_, wide) = self.plan.two_stage?;
                if wide.max_shift() != shifts {
                    return None;
                }
                let mi = self.plan.methods.iter().position(|&x| x == m)?;
                self.staged.get(self.staged_index(mi, si, ti))
            }
        }
    }

    pub fn tally(&self, gallery_size: usize, shifts: u32, threshold: T) -> Option<&ScoreTally> {
        let idx = self.tally_index(self.size_idx(gallery_size)?, self.range_idx(shifts)?, self.thr_idx(threshold)?);
        self.tallies.get(idx)
    }

    /// All cells with their keys, in emission order.
    pub fn cells(&self) -> Vec<(CellKey<T>, CellStats)> {
        let p = &self.plan;
        let mut out = Vec::new();
        for (mi, &m) in p.methods.iter().enumerate() {
            for (si, &size) in p.sizes.iter().enumerate() {
                for (ri, r) in p.ranges.iter().enumerate() {
                    for (ti, &t) in p.thresholds.iter().enumerate() {
                        let key = CellKey {
                            method: Discipline::Single(m),
                            gallery_size: size,
                            threshold: t,
                            shifts: r.max_shift(),
                        };
                        out.push((key, self.single[self.single_index(mi, si, ri, ti)]));
                    }
                }
                if let Some((_, wide)) = p.two_stage {
                    for (ti, &t) in p.thresholds.iter().enumerate() {
                        let key = CellKey {
                            method: Discipline::TwoStage(m),
                            gallery_size: size,
                            threshold: t,
                            shifts: wide.max_shift(),
                        };
                        out.push((key, self.staged[self.staged_index(mi, si, ti)]));
                    }
                }
            }
        }
        out
    }

    /// Metrics rows sorted by (method, gallery size, shifts, threshold).
    pub fn rows(&self) -> Result<Vec<MetricsRow<T>>> {
        let mut rows = self
            .cells()
            .into_iter()
            .map(|(k, c)| {
                let r = rates::<T>(&c.counts).map_err(|_| {
                    Error::Undefined(format!("no probes enrolled at gallery size {}", k.gallery_size))
                })?;
                Ok(MetricsRow {
                    method: k.method,
                    gallery_size: k.gallery_size,
                    threshold: k.threshold,
                    shifts: k.shifts,
                    tmr: r.tmr,
                    fmr: r.fmr,
                    fnmr: r.fnmr,
                    mean_comparisons: c.mean_comparisons().unwrap_or_else(T::zero),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sort_rows(&mut rows);
        Ok(rows)
    }
}

/// Per-range view of one probe's scores against the largest gallery.
struct RangeView {
    /// First threshold index each entry passes (`nt` = never).
    pass: Vec<usize>,
    /// First entry passing each threshold (`usize::MAX` = none).
    first_at: Vec<usize>,
    /// 1:N argmin over each size prefix.
    best_at_size: Vec<usize>,
}

struct Accumulator {
    single: Vec<CellStats>,
    staged: Vec<CellStats>,
    tallies: Vec<ScoreTally>,
    audit: Audit,
}

impl Accumulator {
    fn new<T: Scalar>(plan: &SweepPlan<T>) -> Self {
        let (nm, ns, nr, nt) = (plan.methods.len(), plan.sizes.len(), plan.ranges.len(), plan.thresholds.len());
        Accumulator {
            single: vec![CellStats::default(); nm * ns * nr * nt],
            staged: vec![CellStats::default(); if plan.two_stage.is_some() { nm * ns * nt } else { 0 }],
            tallies: vec![ScoreTally::default(); ns * nr * nt],
            audit: Audit {
                probes_per_size: vec![0; ns],
                ..Audit::default()
            },
        }
    }

    fn merge(mut self, o: Accumulator) -> Self {
        self.single.iter_mut().zip(&o.single).for_each(|(a, b)| a.merge(b));
        self.staged.iter_mut().zip(&o.staged).for_each(|(a, b)| a.merge(b));
        self.tallies.iter_mut().zip(&o.tallies).for_each(|(a, b)| a.merge(b));
        self.audit.merge(&o.audit);
        self
    }
}

struct Context<'a, T> {
    plan: &'a SweepPlan<T>,
    entries: &'a [IrisTemplate],
    scored: Vec<ShiftRange>,
    /// Position in `scored` of each plan range.
    plan_slot: Vec<usize>,
    staged_slots: Option<(usize, usize)>,
}

fn one_to_n(view: &RangeView, si: usize, ti: usize, size: usize, mate: usize) -> (Outcome, usize) {
    let b = view.best_at_size[si];
    let outcome = if view.pass[b] <= ti {
        if b == mate {
            Outcome::TrueMatch
        } else {
            Outcome::FalseMatch
        }
    } else {
        Outcome::FalseNonMatch
    };
    (outcome, size)
}

fn one_to_first(view: &RangeView, ti: usize, size: usize, mate: usize) -> (Outcome, usize) {
    let f = view.first_at[ti];
    if f < size {
        (if f == mate { Outcome::TrueMatch } else { Outcome::FalseMatch }, f + 1)
    } else {
        (Outcome::FalseNonMatch, size)
    }
}

fn evaluate(method: Method, view: &RangeView, si: usize, ti: usize, size: usize, mate: usize) -> (Outcome, usize) {
    match method {
        Method::OneToN => one_to_n(view, si, ti, size, mate),
        Method::OneToFirst => one_to_first(view, ti, size, mate),
    }
}

impl<T: Scalar> Context<'_, T> {
    fn views(&self, probe: &IrisTemplate) -> Result<Vec<RangeView>> {
        let max = *self.scored.last().expect("non-empty ranges");
        let bank = RotationBank::new(probe, max)?;
        let n = *self.plan.sizes.last().expect("non-empty sizes");
        let nr = self.scored.len();
        let nt = self.plan.thresholds.len();
        let mut scores = vec![MatchScore::incomparable(); n * nr];
        for (j, entry) in self.entries[..n].iter().enumerate() {
            if !entry.same_geometry(probe) {
                return Err(Error::contract(format!("probe {} geometry differs from gallery", probe.sample_id())));
            }
            bank.best_nested(entry, &self.scored, &mut scores[j * nr..(j + 1) * nr]);
        }
        let thresholds = &self.plan.thresholds;
        Ok((0..nr)
            .map(|r| {
                let mut pass = Vec::with_capacity(n);
                let mut first_at = vec![usize::MAX; nt];
                let mut best_at_size = Vec::with_capacity(self.plan.sizes.len());
                let mut best = 0usize;
                let mut size_iter = self.plan.sizes.iter().peekable();
                for j in 0..n {
                    let s = scores[j * nr + r];
                    let p = thresholds.partition_point(|&t| !s.within(t));
                    pass.push(p);
                    for slot in first_at.iter_mut().skip(p) {
                        if *slot != usize::MAX {
                            break;
                        }
                        *slot = j;
                    }
                    if j > 0 && s.is_better_than(&scores[best * nr + r]) {
                        best = j;
                    }
                    while size_iter.peek().is_some_and(|&&sz| sz == j + 1) {
                        best_at_size.push(best);
                        size_iter.next();
                    }
                }
                RangeView {
                    pass,
                    first_at,
                    best_at_size,
                }
            })
            .collect())
    }

    fn probe(&self, out: &mut Accumulator, probe: &IrisTemplate, mate: usize) -> Result<()> {
        let views = self.views(probe)?;
        let plan = self.plan;
        let (ns, nr, nt) = (plan.sizes.len(), plan.ranges.len(), plan.thresholds.len());
        for (si, &size) in plan.sizes.iter().enumerate() {
            if mate >= size {
                continue;
            }
            out.audit.probes_per_size[si] += 1;
            for (ri, &slot) in self.plan_slot.iter().enumerate() {
                let view = &views[slot];
                let mut was_match = false;
                for ti in 0..nt {
                    let (n_out, n_cmp) = one_to_n(view, si, ti, size, mate);
                    let (f_out, f_cmp) = one_to_first(view, ti, size, mate);
                    let n_match = n_out != Outcome::FalseNonMatch;
                    if n_match != (f_out != Outcome::FalseNonMatch) {
                        out.audit.decision_mismatches += 1;
                    }
                    if was_match && !n_match {
                        out.audit.one_to_n_reversions += 1;
                    }
                    if f_cmp > n_cmp {
                        out.audit.comparison_excess += 1;
                    }
                    was_match = n_match;
                    for (mi, &m) in plan.methods.iter().enumerate() {
                        let (o, c) = if m == Method::OneToN { (n_out, n_cmp) } else { (f_out, f_cmp) };
                        let idx = ((mi * ns + si) * nr + ri) * nt + ti;
                        out.single[idx].record(o, c);
                    }
                }
                // pairwise acceptance; only entries that pass at some threshold contribute
                for ti in 0..nt {
                    let t = &mut out.tallies[(si * nr + ri) * nt + ti];
                    t.impostor_total += size as u64 - 1;
                    t.genuine_total += 1;
                }
                for (j, &p) in view.pass[..size].iter().enumerate() {
                    for ti in p..nt {
                        let t = &mut out.tallies[(si * nr + ri) * nt + ti];
                        if j == mate {
                            t.genuine_accepted += 1;
                        } else {
                            t.impostor_accepted += 1;
                        }
                    }
                }
            }
            if let Some((narrow, wide)) = self.staged_slots {
                for (mi, &m) in plan.methods.iter().enumerate() {
                    for ti in 0..nt {
                        let (o1, c1) = evaluate(m, &views[narrow], si, ti, size, mate);
                        let (o, c) = if o1 != Outcome::FalseNonMatch {
                            (o1, c1)
                        } else {
                            let (o2, c2) = evaluate(m, &views[wide], si, ti, size, mate);
                            (o2, c1 + c2)
                        };
                        out.staged[(mi * ns + si) * nt + ti].record(o, c);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Evaluates every probe against the gallery prefixes in `plan.sizes()`.
/// Probes whose identity is absent from the largest prefix are rejected;
/// a probe only counts toward sizes that enroll its identity.
pub fn run_sweep<T: Scalar>(gallery: &Gallery, probes: &[IrisTemplate], plan: &SweepPlan<T>) -> Result<SweepOutput<T>> {
    let largest = *plan.sizes.last().expect("plan has sizes");
    if largest > gallery.len() {
        return Err(Error::Config(format!("gallery size {largest} exceeds {} enrollments", gallery.len())));
    }
    let scored = plan.scored_ranges();
    if let Some(first) = gallery.entries().first() {
        scored.last().expect("non-empty").check(first.cols())?;
    }
    let slot = |r: ShiftRange| scored.iter().position(|&x| x == r).expect("range is scored");
    let ctx = Context {
        plan,
        entries: gallery.entries(),
        plan_slot: plan.ranges.iter().map(|&r| slot(r)).collect(),
        staged_slots: plan.two_stage.map(|(a, b)| (slot(a), slot(b))),
        scored: scored.clone(),
    };
    let positions: HashMap<&str, usize> = gallery.entries()[..largest]
        .iter()
        .enumerate()
        .map(|(i, e)| (e.identity(), i))
        .collect();
    let mates = probes
        .iter()
        .map(|p| {
            positions
                .get(p.identity())
                .copied()
                .ok_or_else(|| Error::contract(format!("probe {} ({}) is not enrolled", p.sample_id(), p.identity())))
        })
        .collect::<Result<Vec<_>>>()?;

    let acc = probes
        .par_iter()
        .zip(mates.par_iter())
        .try_fold(
            || Accumulator::new(plan),
            |mut acc, (p, &mate)| {
                ctx.probe(&mut acc, p, mate)?;
                Ok::<_, Error>(acc)
            },
        )
        .try_reduce(|| Accumulator::new(plan), |a, b| Ok(a.merge(b)))?;

    Ok(SweepOutput {
        plan: plan.clone(),
        single: acc.single,
        staged: acc.staged,
        tallies: acc.tallies,
        audit: acc.audit,
    })
}
