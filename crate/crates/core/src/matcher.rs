//! Masked fractional Hamming distance with circular shift tolerance.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::codec::IrisTemplate;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Result of comparing two templates.
///
/// The distance is kept as the exact fraction `differing / compared`; a score
/// with no jointly valid bits is *incomparable* and never matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatchScore {
    differing: u32,
    compared: u32,
    best_shift: i32,
}

impl MatchScore {
    pub fn new(differing: u32, compared: u32, best_shift: i32) -> Self {
        debug_assert!(differing <= compared);
        MatchScore {
            differing,
            compared,
            best_shift,
        }
    }

    pub const fn incomparable() -> Self {
        MatchScore {
            differing: 0,
            compared: 0,
            best_shift: 0,
        }
    }

    #[inline]
    pub fn is_incomparable(&self) -> bool {
        self.compared == 0
    }

    pub fn differing_bits(&self) -> u32 {
        self.differing
    }

    pub fn bits_compared(&self) -> u32 {
        self.compared
    }

    pub fn best_shift(&self) -> i32 {
        self.best_shift
    }

    /// Fractional distance, or `None` when incomparable.
    pub fn value<T: Scalar>(&self) -> Option<T> {
        (!self.is_incomparable()).then(|| T::count(self.differing as u64) / T::count(self.compared as u64))
    }

    /// Inclusive threshold test; incomparable scores never pass.
    #[inline]
    pub fn within<T: Scalar>(&self, threshold: T) -> bool {
        match self.value::<T>() {
            Some(v) => v <= threshold,
            None => false,
        }
    }

    /// Exact ordering on the distance value. Incomparable sorts after every
    /// comparable score.
    #[inline]
    pub fn cmp_value(&self, other: &MatchScore) -> Ordering {
        match (self.is_incomparable(), other.is_incomparable()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            (false, false) => {
                let lhs = self.differing as u64 * other.compared as u64;
                let rhs = other.differing as u64 * self.compared as u64;
                lhs.cmp(&rhs)
            }
        }
    }

    #[inline]
    pub fn is_better_than(&self, other: &MatchScore) -> bool {
        self.cmp_value(other) == Ordering::Less
    }
}

impl Serialize for MatchScore {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            value: Option<f64>,
            best_shift: i32,
            bits_compared: u32,
            differing_bits: u32,
        }
        Repr {
            value: self.value::<f64>(),
            best_shift: self.best_shift,
            bits_compared: self.compared,
            differing_bits: self.differing,
        }
        .serialize(s)
    }
}

/// Maximum circular shift magnitude `s`; the evaluated shifts are the
/// `2s + 1` integers in `[-s, s]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShiftRange(u32);

impl ShiftRange {
    pub const fn new(max_shift: u32) -> Self {
        ShiftRange(max_shift)
    }

    pub const fn max_shift(self) -> u32 {
        self.0
    }

    /// Number of rotations tried (the M of best-of-M).
    pub const fn len(self) -> usize {
        2 * self.0 as usize + 1
    }

    pub const fn is_empty(self) -> bool {
        false
    }

    /// Shifts in tie-break priority: 0, -1, +1, -2, +2, ...
    pub fn shifts(self) -> impl Iterator<Item = i32> {
        let s = self.0 as i32;
        std::iter::once(0).chain((1..=s).flat_map(|k| [-k, k]))
    }

    pub(crate) fn check(self, cols: usize) -> Result<()> {
        if 2 * self.0 as usize >= cols {
            return Err(Error::contract(format!(
                "shift range ±{} needs fewer than {cols}/2 columns",
                self.0
            )));
        }
        Ok(())
    }
}

fn check_dims(a: &IrisTemplate, b: &IrisTemplate) -> Result<()> {
    if !a.same_geometry(b) {
        return Err(Error::contract(format!(
            "template dimensions differ: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

#[inline]
fn raw_hd(code_a: &[u64], mask_a: &[u64], code_b: &[u64], mask_b: &[u64]) -> (u32, u32) {
    let mut differing = 0u32;
    let mut compared = 0u32;
    for i in 0..code_a.len() {
        let joint = mask_a[i] & mask_b[i];
        differing += ((code_a[i] ^ code_b[i]) & joint).count_ones();
        compared += joint.count_ones();
    }
    (differing, compared)
}

/// Unshifted masked fractional Hamming distance.
pub fn fractional_hd(a: &IrisTemplate, b: &IrisTemplate) -> Result<MatchScore> {
    check_dims(a, b)?;
    let (d, c) = raw_hd(a.code().words(), a.mask().words(), b.code().words(), b.mask().words());
    Ok(if c == 0 {
        MatchScore::incomparable()
    } else {
        MatchScore::new(d, c, 0)
    })
}

/// Circularly shifts code and mask by `k` columns (column `j` of the result
/// is column `j - k mod cols` of the input).
pub fn rotate(t: &IrisTemplate, k: i64) -> IrisTemplate {
    t.rotated(k)
}

/// Best-of-M distance: the minimum over `k` in `[-s, s]` of
/// `fractional_hd(rotate(a, k), b)`.
pub fn best_of_m(a: &IrisTemplate, b: &IrisTemplate, range: ShiftRange) -> Result<MatchScore> {
    check_dims(a, b)?;
    RotationBank::new(a, range)?.best(b, range)
}

/// Angle covered by `k` column shifts.
pub fn shift_degrees<T: Scalar>(k: i64, cols: usize) -> T {
    T::of(k as f64) * T::of(360.0) / T::count(cols as u64)
}

/// Precomputed rotations of one template (normally the probe) for scoring
/// against many others.
#[derive(Debug, Clone)]
pub struct RotationBank {
    rows: usize,
    cols: usize,
    max: ShiftRange,
    words: usize,
    /// Per rotation in `ShiftRange::shifts` order: code words then mask words.
    planes: Vec<u64>,
    shifts: Vec<i32>,
}

impl RotationBank {
    pub fn new(t: &IrisTemplate, max: ShiftRange) -> Result<Self> {
        max.check(t.cols())?;
        let words = t.code().words().len();
        let shifts: Vec<i32> = max.shifts().collect();
        let mut planes = Vec::with_capacity(shifts.len() * 2 * words);
        for &k in &shifts {
            let r = t.rotated(k as i64);
            planes.extend_from_slice(r.code().words());
            planes.extend_from_slice(r.mask().words());
        }
        Ok(RotationBank {
            rows: t.rows(),
            cols: t.cols(),
            max,
            words,
            planes,
            shifts,
        })
    }

    pub fn max_range(&self) -> ShiftRange {
        self.max
    }

    fn check_other(&self, other: &IrisTemplate) -> Result<()> {
        if other.rows() != self.rows || other.cols() != self.cols {
            return Err(Error::contract(format!(
                "template dimensions differ: {}x{} vs {}x{}",
                self.rows,
                self.cols,
                other.rows(),
                other.cols()
            )));
        }
        Ok(())
    }

    #[inline]
    fn score_at(&self, idx: usize, other: &IrisTemplate) -> MatchScore {
        let base = idx * 2 * self.words;
        let code = &self.planes[base..base + self.words];
        let mask = &self.planes[base + self.words..base + 2 * self.words];
        let (d, c) = raw_hd(code, mask, other.code().words(), other.mask().words());
        if c == 0 {
            MatchScore::incomparable()
        } else {
            MatchScore::new(d, c, self.shifts[idx])
        }
    }

    /// Best score against `other` over `range` (which must not exceed the bank's range).
    pub fn best(&self, other: &IrisTemplate, range: ShiftRange) -> Result<MatchScore> {
        self.check_other(other)?;
        if range > self.max {
            return Err(Error::contract(format!(
                "range ±{} exceeds prepared range ±{}",
                range.max_shift(),
                self.max.max_shift()
            )));
        }
        let mut best = MatchScore::incomparable();
        for idx in 0..range.len() {
            let s = self.score_at(idx, other);
            if s.is_better_than(&best) {
                best = s;
            }
        }
        Ok(best)
    }

    /// Best scores for several ranges in one pass. `ranges` must be sorted
    /// ascending and within the bank's range; `out[i]` receives the best for
    /// `ranges[i]`. Equal to calling [`best`](Self::best) per range, because
    /// the shift order is a nested prefix order.
    pub fn best_nested(&self, other: &IrisTemplate, ranges: &[ShiftRange], out: &mut [MatchScore]) {
        debug_assert!(ranges.windows(2).all(|w| w[0] <= w[1]));
        debug_assert_eq!(ranges.len(), out.len());
        let mut best = MatchScore::incomparable();
        let mut next = 0;
        for idx in 0..self.shifts.len() {
            if next == ranges.len() {
                break;
            }
            let s = self.score_at(idx, other);
            if s.is_better_than(&best) {
                best = s;
            }
            while next < ranges.len() && ranges[next].len() == idx + 1 {
                out[next] = best;
                next += 1;
            }
        }
    }
}
