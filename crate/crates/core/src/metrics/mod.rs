//! Outcome tallies, rate tables, threshold-averaged summaries and ROC points.

mod engine;
mod io;

pub use engine::{run_sweep, Audit, CellKey, CellStats, ScoreTally, SweepOutput, SweepPlan};
pub use io::{read_rows_csv, write_roc_json, write_rows_csv, write_summary_csv, wide_table, RESULTS_HEADER, SUMMARY_HEADER};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::IrisTemplate;
use crate::error::{Error, Result};
use crate::matcher::ShiftRange;
use crate::scalar::Scalar;
use crate::search::{Gallery, Method, Outcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub tm: u64,
    pub fm: u64,
    pub fnm: u64,
}

impl OutcomeCounts {
    pub fn total(&self) -> u64 {
        self.tm + self.fm + self.fnm
    }

    pub fn record(&mut self, o: Outcome) {
        match o {
            Outcome::TrueMatch => self.tm += 1,
            Outcome::FalseMatch => self.fm += 1,
            Outcome::FalseNonMatch => self.fnm += 1,
        }
    }

    pub fn merge(&mut self, other: &OutcomeCounts) {
        self.tm += other.tm;
        self.fm += other.fm;
        self.fnm += other.fnm;
    }

    /// Percentages of the total.
    pub fn rates<T: Scalar>(&self) -> Result<Rates<T>> {
        rates(self)
    }
}

pub fn tally<'a>(outcomes: impl IntoIterator<Item = &'a Outcome>) -> OutcomeCounts {
    let mut c = OutcomeCounts::default();
    for &o in outcomes {
        c.record(o);
    }
    c
}

/// TMR, FMR and FNMR in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates<T> {
    pub tmr: T,
    pub fmr: T,
    pub fnmr: T,
}

pub fn rates<T: Scalar>(c: &OutcomeCounts) -> Result<Rates<T>> {
    let total = c.total();
    if total == 0 {
        return Err(Error::Undefined("rates of an empty outcome set".into()));
    }
    let pct = |n: u64| T::of(100.0) * T::count(n) / T::count(total);
    Ok(Rates {
        tmr: pct(c.tm),
        fmr: pct(c.fm),
        fnmr: pct(c.fnm),
    })
}

/// Search discipline a results row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Discipline {
    Single(Method),
    /// Narrow pass, then a rescan at the row's (wide) shift range.
    TwoStage(Method),
}

impl Discipline {
    pub fn method(self) -> Method {
        match self {
            Discipline::Single(m) | Discipline::TwoStage(m) => m,
        }
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Discipline::Single(m) => f.write_str(m.as_str()),
            Discipline::TwoStage(m) => write!(f, "2stage-{}", m.as_str()),
        }
    }
}

impl FromStr for Discipline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("2stage-") {
            Some(m) => Ok(Discipline::TwoStage(m.parse()?)),
            None => Ok(Discipline::Single(s.parse()?)),
        }
    }
}

impl Serialize for Discipline {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// One cell of a sweep: rates in percent plus mean gallery entries scored per probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow<T> {
    pub method: Discipline,
    pub gallery_size: usize,
    pub threshold: T,
    pub shifts: u32,
    pub tmr: T,
    pub fmr: T,
    pub fnmr: T,
    pub mean_comparisons: T,
}

impl<T: Scalar> MetricsRow<T> {
    fn group_key(&self) -> (Discipline, usize, u32) {
        (self.method, self.gallery_size, self.shifts)
    }
}

/// Emission order: method, gallery size, shifts, threshold.
pub fn sort_rows<T: Scalar>(rows: &mut [MetricsRow<T>]) {
    rows.sort_by(|a, b| {
        a.group_key()
            .cmp(&b.group_key())
            .then(a.threshold.partial_cmp(&b.threshold).unwrap_or(std::cmp::Ordering::Equal))
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd<T> {
    pub mean: T,
    pub std: T,
}

fn mean_std<T: Scalar>(xs: &[T]) -> MeanStd<T> {
    let n = T::count(xs.len() as u64);
    let mean = xs.iter().copied().sum::<T>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one());
    MeanStd { mean, std: var.sqrt() }
}

/// Threshold-averaged metrics for one (method, gallery size, shifts) group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow<T> {
    pub method: Discipline,
    pub gallery_size: usize,
    pub shifts: u32,
    pub thresholds: usize,
    pub tmr: MeanStd<T>,
    pub fmr: MeanStd<T>,
    pub fnmr: MeanStd<T>,
    pub mean_comparisons: MeanStd<T>,
}

/// Mean and sample standard deviation over thresholds, per
/// (method, gallery size, shifts). Groups keep first-appearance order.
pub fn average_over_thresholds<T: Scalar>(rows: &[MetricsRow<T>]) -> Result<Vec<SummaryRow<T>>> {
    let mut groups: Vec<((Discipline, usize, u32), Vec<&MetricsRow<T>>)> = Vec::new();
    for r in rows {
        let key = r.group_key();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((method, gallery_size, shifts), g)| {
            if g.len() < 2 {
                return Err(Error::Undefined(format!(
                    "{method} at N={gallery_size}, ±{shifts}: standard deviation needs at least two thresholds"
                )));
            }
            let col = |f: fn(&MetricsRow<T>) -> T| mean_std(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            Ok(SummaryRow {
                method,
                gallery_size,
                shifts,
                thresholds: g.len(),
                tmr: col(|r| r.tmr),
                fmr: col(|r| r.fmr),
                fnmr: col(|r| r.fnmr),
                mean_comparisons: col(|r| r.mean_comparisons),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint<T> {
    pub fmr: T,
    pub tmr: T,
    pub threshold: T,
    pub gallery_size: usize,
    pub method: Discipline,
    pub shifts: u32,
}

/// One (FMR, TMR) point per row, in row order.
pub fn roc_points<T: Scalar>(rows: &[MetricsRow<T>]) -> Vec<RocPoint<T>> {
    rows.iter()
        .map(|r| RocPoint {
            fmr: r.fmr,
            tmr: r.tmr,
            threshold: r.threshold,
            gallery_size: r.gallery_size,
            method: r.method,
            shifts: r.shifts,
        })
        .collect()
}

/// `0.26, 0.27, ..., 0.35`.
pub fn default_thresholds<T: Scalar>() -> Vec<T> {
    (26..=35).map(|c| T::count(c) / T::of(100.0)).collect()
}

pub const DEFAULT_SHIFTS: [u32; 5] = [0, 3, 5, 9, 14];

/// Full grid over one gallery: a row per (method, threshold, shift range).
/// Every probe's identity must be enrolled.
pub fn sweep<T: Scalar>(
    gallery: &Gallery,
    probes: &[IrisTemplate],
    thresholds: &[T],
    shift_ranges: &[ShiftRange],
    methods: &[Method],
) -> Result<Vec<MetricsRow<T>>> {
    let plan = SweepPlan::new(
        vec![gallery.len()],
        thresholds.to_vec(),
        shift_ranges.to_vec(),
        methods.to_vec(),
        None,
    )?;
    if let Some(p) = probes.iter().find(|p| gallery.position_of(p.identity()).is_none()) {
        return Err(Error::contract(format!("probe {} is not enrolled", p.sample_id())));
    }
    run_sweep(gallery, probes, &plan)?.rows()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Outcome::*;

    #[test]
    fn tally_counts() {
        assert_eq!(tally(&[]), OutcomeCounts::default());
        let xs = [TrueMatch, TrueMatch, FalseMatch, FalseNonMatch];
        assert_eq!(tally(&xs), OutcomeCounts { tm: 2, fm: 1, fnm: 1 });
        let mut rev = xs;
        rev.reverse();
        assert_eq!(tally(&rev), tally(&xs));
    }

    #[test]
    fn rates_in_percent() {
        let r: Rates<f64> = rates(&OutcomeCounts { tm: 90, fm: 5, fnm: 5 }).unwrap();
        assert_eq!((r.tmr, r.fmr, r.fnmr), (90.0, 5.0, 5.0));
        let r: Rates<f32> = rates(&OutcomeCounts { tm: 0, fm: 0, fnm: 10 }).unwrap();
        assert_eq!((r.tmr, r.fmr, r.fnmr), (0.0, 0.0, 100.0));
        assert!(rates::<f64>(&OutcomeCounts::default()).is_err());
    }

    #[test]
    fn published_row_sums_to_hundred_within_rounding() {
        // largest gallery, 1:N columns of the published averages
        let sum: f64 = 87.28 + 0.12 + 12.61;
        assert!((sum - 100.0).abs() <= 0.015);
    }

    fn row(method: Discipline, threshold: f64, tmr: f64) -> MetricsRow<f64> {
        MetricsRow {
            method,
            gallery_size: 100,
            threshold,
            shifts: 0,
            tmr,
            fmr: 0.6,
            fnmr: 100.0 - tmr - 0.6,
            mean_comparisons: 100.0,
        }
    }

    #[test]
    fn averages() {
        let m = Discipline::Single(Method::OneToN);
        let s = average_over_thresholds(&[row(m, 0.3, 80.0), row(m, 0.31, 90.0)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].tmr.mean, 85.0);
        assert!((s[0].tmr.std - 7.0710678).abs() < 1e-6);
        assert_eq!(s[0].fmr.std, 0.0);
        let same = average_over_thresholds(&[row(m, 0.3, 80.0), row(m, 0.31, 80.0)]).unwrap();
        assert_eq!(same[0].tmr.std, 0.0);
        assert!(matches!(average_over_thresholds(&[row(m, 0.3, 80.0)]), Err(Error::Undefined(_))));
    }

    #[test]
    fn roc_projection() {
        let r = row(Discipline::Single(Method::OneToFirst), 0.32, 92.0);
        let pts = roc_points(&[r, r]);
        assert_eq!(pts.len(), 2);
        assert_eq!((pts[0].fmr, pts[0].tmr), (0.6, 92.0));
        assert!(roc_points::<f64>(&[]).is_empty());
    }

    #[test]
    fn default_grid() {
        let t: Vec<f64> = default_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.26);
        assert_eq!(t[9], 0.35);
        assert_eq!(t[6], 0.32);
    }

    #[test]
    fn discipline_labels() {
        for d in [
            Discipline::Single(Method::OneToN),
            Discipline::Single(Method::OneToFirst),
            Discipline::TwoStage(Method::OneToN),
            Discipline::TwoStage(Method::OneToFirst),
        ] {
            assert_eq!(d.to_string().parse::<Discipline>().unwrap(), d);
        }
        assert_eq!(Discipline::TwoStage(Method::OneToFirst).to_string(), "2stage-1first");
    }
}
