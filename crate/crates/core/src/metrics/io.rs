use std::fmt::Write as _;
use std::io::{Read, Write};

use super::{Discipline, MetricsRow, RocPoint, SummaryRow};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::search::Method;

pub const RESULTS_HEADER: [&str; 8] = [
    "method",
    "gallery_size",
    "threshold",
    "shifts",
    "tmr",
    "fmr",
    "fnmr",
    "mean_comparisons",
];

pub const SUMMARY_HEADER: [&str; 11] = [
    "method",
    "gallery_size",
    "shifts",
    "tmr",
    "tmr_std",
    "fmr",
    "fmr_std",
    "fnmr",
    "fnmr_std",
    "mean_comparisons",
    "mean_comparisons_std",
];

/// Full-precision rows; values re-read by `read_rows_csv` are bit-identical.
pub fn write_rows_csv<T: Scalar, W: Write>(rows: &[MetricsRow<T>], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.gallery_size.to_string(),
            r.threshold.to_string(),
            r.shifts.to_string(),
            r.tmr.to_string(),
            r.fmr.to_string(),
            r.fnmr.to_string(),
            r.mean_comparisons.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let raw = rec.get(i).ok_or_else(|| Error::Parse(format!("line {line}: missing column {}", RESULTS_HEADER[i])))?;
    raw.parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {} value {raw:?}", RESULTS_HEADER[i])))
}

pub fn read_rows_csv<T: Scalar, R: Read>(source: R) -> Result<Vec<MetricsRow<T>>> {
    let mut r = csv::Reader::from_reader(source);
    let header = r.headers()?.clone();
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(Error::Parse(format!(
            "unexpected header {:?}, expected {}",
            header.iter().collect::<Vec<_>>(),
            RESULTS_HEADER.join(",")
        )));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let line = i + 2;
            let num = |j: usize| -> Result<T> { Ok(T::of(field::<f64>(&rec, j, line)?)) };
            Ok(MetricsRow {
                method: field::<String>(&rec, 0, line)?.parse()?,
                gallery_size: field(&rec, 1, line)?,
                threshold: num(2)?,
                shifts: field(&rec, 3, line)?,
                tmr: num(4)?,
                fmr: num(5)?,
                fnmr: num(6)?,
                mean_comparisons: num(7)?,
            })
        })
        .collect()
}

/// Summary rows rounded to two decimals.
pub fn write_summary_csv<T: Scalar, W: Write>(summary: &[SummaryRow<T>], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SUMMARY_HEADER)?;
    let f = |x: T| format!("{:.2}", x.to_f64_lossy());
    for s in summary {
        w.write_record([
            s.method.to_string(),
            s.gallery_size.to_string(),
            s.shifts.to_string(),
            f(s.tmr.mean),
            f(s.tmr.std),
            f(s.fmr.mean),
            f(s.fmr.std),
            f(s.fnmr.mean),
            f(s.fnmr.std),
            f(s.mean_comparisons.mean),
            f(s.mean_comparisons.std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_roc_json<T: Scalar + serde::Serialize, W: Write>(points: &[RocPoint<T>], sink: W) -> Result<()> {
    serde_json::to_writer_pretty(sink, points)?;
    Ok(())
}

/// Markdown table at one shift range: per gallery size, mean ± std of
/// TMR/FMR/FNMR for 1:N and 1:First side by side.
pub fn wide_table<T: Scalar>(summary: &[SummaryRow<T>], shifts: u32) -> String {
    let mut sizes: Vec<usize> = summary.iter().filter(|s| s.shifts == shifts).map(|s| s.gallery_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let find = |m: Method, n: usize| {
        summary
            .iter()
            .find(|s| s.method == Discipline::Single(m) && s.gallery_size == n && s.shifts == shifts)
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "| Gallery | TMR 1:N | TMR 1:First | FMR 1:N | FMR 1:First | FNMR 1:N | FNMR 1:First |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|");
    for n in sizes {
        let _ = write!(out, "| {n} |");
        for metric in 0..3 {
            for m in Method::BOTH {
                match find(m, n) {
                    Some(s) => {
                        let v = [s.tmr, s.fmr, s.fnmr][metric];
                        let _ = write!(out, " {:.2} ± {:.2} |", v.mean.to_f64_lossy(), v.std.to_f64_lossy());
                    }
                    None => out.push_str(" - |"),
                }
            }
        }
        out.push('\n');
    }
    out
}
