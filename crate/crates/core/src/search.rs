//! One-to-many search: exhaustive 1:N, early-exit 1:First, and the two-stage
//! widening scan, plus the closed-set outcome taxonomy.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{read_template_file, write_template_file, IrisTemplate};
use crate::error::{Error, Result};
use crate::matcher::{MatchScore, RotationBank, ShiftRange};
use crate::scalar::Scalar;

/// Ordered enrollment database, one template per identity.
#[derive(Debug, Clone)]
pub struct Gallery {
    entries: Vec<IrisTemplate>,
    order_seed: u64,
}

fn check_unique(entries: &[IrisTemplate]) -> Result<()> {
    let mut seen = HashSet::with_capacity(entries.len());
    for e in entries {
        if !seen.insert(e.identity()) {
            return Err(Error::contract(format!("duplicate identity {:?} in gallery", e.identity())));
        }
    }
    Ok(())
}

/// Permutes `entries` with a ChaCha8 stream seeded by `order_seed`.
pub fn shuffle_gallery(mut entries: Vec<IrisTemplate>, order_seed: u64) -> Result<Gallery> {
    check_unique(&entries)?;
    let mut rng = ChaCha8Rng::seed_from_u64(order_seed);
    entries.shuffle(&mut rng);
    Ok(Gallery { entries, order_seed })
}

impl Gallery {
    /// Keeps the given order as-is (e.g. loaded from a manifest that was
    /// written after shuffling).
    pub fn from_ordered(entries: Vec<IrisTemplate>, order_seed: u64) -> Result<Self> {
        check_unique(&entries)?;
        Ok(Gallery { entries, order_seed })
    }

    pub fn entries(&self) -> &[IrisTemplate] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn order_seed(&self) -> u64 {
        self.order_seed
    }

    /// The first `n` entries, in order.
    pub fn prefix(&self, n: usize) -> Result<Gallery> {
        if n > self.len() {
            return Err(Error::contract(format!("prefix {n} exceeds gallery size {}", self.len())));
        }
        Ok(Gallery {
            entries: self.entries[..n].to_vec(),
            order_seed: self.order_seed,
        })
    }

    pub fn position_of(&self, identity: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.identity() == identity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams<T> {
    threshold: T,
    shift_range: ShiftRange,
}

impl<T: Scalar> SearchParams<T> {
    pub fn new(threshold: T, shift_range: ShiftRange) -> Result<Self> {
        if !(threshold > T::zero() && threshold < T::one()) {
            return Err(Error::contract(format!("threshold {threshold} must lie in (0, 1)")));
        }
        Ok(SearchParams { threshold, shift_range })
    }

    pub fn threshold(&self) -> T {
        self.threshold
    }

    pub fn shift_range(&self) -> ShiftRange {
        self.shift_range
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "1n")]
    OneToN,
    #[serde(rename = "1first")]
    OneToFirst,
}

impl Method {
    pub const BOTH: [Method; 2] = [Method::OneToN, Method::OneToFirst];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::OneToN => "1n",
            Method::OneToFirst => "1first",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::OneToN => "1:N",
            Method::OneToFirst => "1:First",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1n" | "1:n" => Ok(Method::OneToN),
            "1first" | "1:first" => Ok(Method::OneToFirst),
            other => Err(Error::Parse(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Match,
    NonMatch,
}

/// Gallery entry a search settled on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub identity: String,
    pub index: usize,
    pub score: MatchScore,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    pub matched: Option<Candidate>,
    /// Gallery entries scored, summed over stages for two-stage searches.
    pub comparisons: usize,
}

impl SearchResult {
    pub fn decision(&self) -> Decision {
        if self.matched.is_some() {
            Decision::Match
        } else {
            Decision::NonMatch
        }
    }

    pub fn matched_identity(&self) -> Option<&str> {
        self.matched.as_ref().map(|c| c.identity.as_str())
    }

    pub fn matched_index(&self) -> Option<usize> {
        self.matched.as_ref().map(|c| c.index)
    }

    pub fn score(&self) -> Option<MatchScore> {
        self.matched.as_ref().map(|c| c.score)
    }
}

impl Serialize for SearchResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            decision: Decision,
            matched_identity: Option<&'a str>,
            matched_index: Option<usize>,
            score: Option<MatchScore>,
            comparisons: usize,
        }
        Repr {
            decision: self.decision(),
            matched_identity: self.matched_identity(),
            matched_index: self.matched_index(),
            score: self.score(),
            comparisons: self.comparisons,
        }
        .serialize(s)
    }
}

fn prepare(g: &Gallery, probe: &IrisTemplate, range: ShiftRange) -> Result<RotationBank> {
    let first = g.entries.first().ok_or_else(|| Error::contract("empty gallery"))?;
    if !first.same_geometry(probe) {
        return Err(Error::contract(format!(
            "probe is {}x{}, gallery templates are {}x{}",
            probe.rows(),
            probe.cols(),
            first.rows(),
            first.cols()
        )));
    }
    RotationBank::new(probe, range)
}

/// Exhaustive search: the globally best entry decides (lowest index on ties).
pub fn identify_1n<T: Scalar>(g: &Gallery, probe: &IrisTemplate, p: &SearchParams<T>) -> Result<SearchResult> {
    let bank = prepare(g, probe, p.shift_range)?;
    let mut best: Option<(usize, MatchScore)> = None;
    for (i, entry) in g.entries.iter().enumerate() {
        let s = bank.best(entry, p.shift_range)?;
        if best.is_none_or(|(_, b)| s.is_better_than(&b)) {
            best = Some((i, s));
        }
    }
    let matched = best
        .filter(|(_, s)| s.within(p.threshold))
        .map(|(index, score)| Candidate {
            identity: g.entries[index].identity().to_owned(),
            index,
            score,
        });
    Ok(SearchResult {
        matched,
        comparisons: g.len(),
    })
}

/// Sequential scan that stops at the first entry within threshold.
pub fn identify_1first<T: Scalar>(g: &Gallery, probe: &IrisTemplate, p: &SearchParams<T>) -> Result<SearchResult> {
    let bank = prepare(g, probe, p.shift_range)?;
    for (index, entry) in g.entries.iter().enumerate() {
        let score = bank.best(entry, p.shift_range)?;
        if score.within(p.threshold) {
            return Ok(SearchResult {
                matched: Some(Candidate {
                    identity: entry.identity().to_owned(),
                    index,
                    score,
                }),
                comparisons: index + 1,
            });
        }
    }
    Ok(SearchResult {
        matched: None,
        comparisons: g.len(),
    })
}

pub fn identify<T: Scalar>(
    method: Method,
    g: &Gallery,
    probe: &IrisTemplate,
    p: &SearchParams<T>,
) -> Result<SearchResult> {
    match method {
        Method::OneToN => identify_1n(g, probe, p),
        Method::OneToFirst => identify_1first(g, probe, p),
    }
}

/// Narrow-then-wide search: rescans from index 0 at `wide` when the `narrow`
/// pass finds nothing. Comparisons from both passes are summed.
pub fn identify_two_stage<T: Scalar>(
    g: &Gallery,
    probe: &IrisTemplate,
    threshold: T,
    narrow: ShiftRange,
    wide: ShiftRange,
    method: Method,
) -> Result<SearchResult> {
    if narrow >= wide {
        return Err(Error::contract(format!(
            "stage ranges must widen: ±{} then ±{}",
            narrow.max_shift(),
            wide.max_shift()
        )));
    }
    let first = identify(method, g, probe, &SearchParams::new(threshold, narrow)?)?;
    if first.matched.is_some() {
        return Ok(first);
    }
    let mut second = identify(method, g, probe, &SearchParams::new(threshold, wide)?)?;
    second.comparisons += first.comparisons;
    Ok(second)
}

/// Closed-set outcome of one search; true non-matches cannot occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    TrueMatch,
    FalseMatch,
    FalseNonMatch,
}

pub fn classify_outcome(r: &SearchResult, true_identity: &str) -> Outcome {
    match r.matched_identity() {
        Some(id) if id == true_identity => Outcome::TrueMatch,
        Some(_) => Outcome::FalseMatch,
        None => Outcome::FalseNonMatch,
    }
}

/// One record of a gallery manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub identity: String,
}

/// Loads every template named by a manifest, in manifest order. Relative
/// paths resolve against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<IrisTemplate>> {
    let path = path.as_ref();
    let records: Vec<ManifestEntry> = serde_json::from_str(&fs::read_to_string(path)?)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    records
        .into_iter()
        .map(|rec| {
            let file = if rec.path.is_absolute() { rec.path.clone() } else { base.join(&rec.path) };
            let t = read_template_file(&file)?;
            if t.identity() != rec.identity {
                return Err(Error::contract(format!(
                    "{} holds identity {:?}, manifest says {:?}",
                    file.display(),
                    t.identity(),
                    rec.identity
                )));
            }
            Ok(t)
        })
        .collect()
}

/// Writes each template as `<dir>/<sample_id>.irt` and a manifest listing
/// them (paths relative to the manifest).
pub fn write_manifest(templates: &[IrisTemplate], manifest: impl AsRef<Path>, subdir: &str) -> Result<()> {
    let manifest = manifest.as_ref();
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(base.join(subdir))?;
    let mut records = Vec::with_capacity(templates.len());
    for t in templates {
        let rel = Path::new(subdir).join(format!("{}.irt", t.sample_id()));
        write_template_file(t, base.join(&rel))?;
        records.push(ManifestEntry {
            path: rel,
            identity: t.identity().to_owned(),
        });
    }
    fs::write(manifest, serde_json::to_string_pretty(&records)?)?;
    Ok(())
}


#[cfg(test)]
mod tests {
    use super::fixtures::planted;
    use super::*;

    fn params(t: f64) -> SearchParams<f64> {
        SearchParams::new(t, ShiftRange::new(0)).unwrap()
    }

    #[test]
    fn one_to_n_picks_global_minimum() {
        let (g, p) = planted(&[45, 30, 25]);
        let r = identify_1n(&g, &p, &params(0.32)).unwrap();
        assert_eq!(r.matched_index(), Some(2));
        assert_eq!(r.score().unwrap().value::<f64>(), Some(0.25));
        assert_eq!(r.comparisons, 3);
    }

    #[test]
    fn one_to_first_stops_early() {
        let (g, p) = planted(&[45, 30, 25]);
        let r = identify_1first(&g, &p, &params(0.32)).unwrap();
        assert_eq!(r.matched_index(), Some(1));
        assert_eq!(r.score().unwrap().value::<f64>(), Some(0.30));
        assert_eq!(r.comparisons, 2);
    }

    #[test]
    fn non_match_is_shared() {
        let (g, p) = planted(&[45, 40, 38]);
        let a = identify_1n(&g, &p, &params(0.32)).unwrap();
        let b = identify_1first(&g, &p, &params(0.32)).unwrap();
        assert_eq!(a.decision(), Decision::NonMatch);
        assert_eq!(b.decision(), Decision::NonMatch);
        assert_eq!((a.comparisons, b.comparisons), (3, 3));
    }

    #[test]
    fn threshold_is_inclusive() {
        let (g, p) = planted(&[32]);
        assert_eq!(identify_1n(&g, &p, &params(0.32)).unwrap().decision(), Decision::Match);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let (g, p) = planted(&[40, 20, 20]);
        assert_eq!(identify_1n(&g, &p, &params(0.3)).unwrap().matched_index(), Some(1));
    }

    #[test]
    fn self_match_wins() {
        let (g, _) = planted(&[30, 0, 12]);
        let probe = g.entries()[1].clone();
        let r = identify_1n(&g, &probe, &params(0.01)).unwrap();
        assert_eq!(r.matched_identity(), Some("E1"));
        assert_eq!(r.score().unwrap().value::<f64>(), Some(0.0));
    }

    #[test]
    fn early_impostor_steals_the_match() {
        // impostor at 0.30 ahead of the mate at 0.10
        let (g, p) = planted(&[30, 10]);
        let truth = "E1";
        let n = identify_1n(&g, &p, &params(0.32)).unwrap();
        let f = identify_1first(&g, &p, &params(0.32)).unwrap();
        assert_eq!(classify_outcome(&n, truth), Outcome::TrueMatch);
        assert_eq!(classify_outcome(&f, truth), Outcome::FalseMatch);
    }

    #[test]
    fn first_is_order_sensitive_n_is_not() {
        let (g, p) = planted(&[45, 30, 25]);
        let mut rev = g.entries().to_vec();
        rev.reverse();
        let rev = Gallery::from_ordered(rev, 0).unwrap();
        let pr = params(0.32);
        let a = identify_1first(&g, &p, &pr).unwrap();
        let b = identify_1first(&rev, &p, &pr).unwrap();
        assert_ne!(a.matched_identity(), b.matched_identity());
        let a = identify_1n(&g, &p, &pr).unwrap();
        let b = identify_1n(&rev, &p, &pr).unwrap();
        assert_eq!(a.matched_identity(), b.matched_identity());
    }

    #[test]
    fn empty_gallery_rejected() {
        let (_, p) = planted(&[1]);
        let g = Gallery::from_ordered(Vec::new(), 0).unwrap();
        assert!(matches!(identify_1n(&g, &p, &params(0.3)), Err(Error::Contract(_))));
        assert!(matches!(identify_1first(&g, &p, &params(0.3)), Err(Error::Contract(_))));
    }

    #[test]
    fn params_validated() {
        assert!(SearchParams::new(0.0, ShiftRange::new(0)).is_err());
        assert!(SearchParams::new(1.0f32, ShiftRange::new(0)).is_err());
        assert!(SearchParams::new(0.5f32, ShiftRange::new(0)).is_ok());
    }

    #[test]
    fn shuffle_is_deterministic_and_rejects_duplicates() {
        let (g, _) = planted(&[1, 2, 3, 4, 5, 6, 7, 8]);
        let a = shuffle_gallery(g.entries().to_vec(), 42).unwrap();
        let b = shuffle_gallery(g.entries().to_vec(), 42).unwrap();
        assert_eq!(a.entries(), b.entries());
        let single = shuffle_gallery(g.entries()[..1].to_vec(), 9).unwrap();
        assert_eq!(single.entries(), &g.entries()[..1]);
        let mut dup = g.entries().to_vec();
        dup.push(dup[0].clone());
        assert!(matches!(shuffle_gallery(dup, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn two_stage_accounting() {
        // the mate sits 2 columns off, so only the wide stage finds it
        let (g, p) = planted(&[45, 0]);
        let mate = g.entries()[1].rotated(2).with_labels("E1", "E1-r");
        let shifted = Gallery::from_ordered(vec![g.entries()[0].clone(), mate], 0).unwrap();
        let narrow = ShiftRange::new(1);
        let wide = ShiftRange::new(3);
        assert_eq!(
            identify_1n(&shifted, &p, &SearchParams::new(0.25, narrow).unwrap()).unwrap().decision(),
            Decision::NonMatch
        );

        let r = identify_two_stage(&shifted, &p, 0.25, narrow, wide, Method::OneToN).unwrap();
        assert_eq!(r.matched_identity(), Some("E1"));
        assert_eq!(r.score().unwrap().best_shift(), 2);
        assert_eq!(r.comparisons, 2 + 2);
        let r = identify_two_stage(&shifted, &p, 0.25, narrow, wide, Method::OneToFirst).unwrap();
        assert_eq!(r.matched_index(), Some(1));
        assert_eq!(r.comparisons, 2 + 2);

        // stage one already matches: identical to the single-stage search
        let direct = identify_1first(&g, &p, &SearchParams::new(0.25, narrow).unwrap()).unwrap();
        let staged = identify_two_stage(&g, &p, 0.25, narrow, wide, Method::OneToFirst).unwrap();
        assert_eq!(direct, staged);
        assert_eq!(staged.comparisons, 2);

        let (far, p) = planted(&[45, 40, 42]);
        let r = identify_two_stage(&far, &p, 0.05, narrow, wide, Method::OneToN).unwrap();
        assert_eq!(r.decision(), Decision::NonMatch);
        assert_eq!(r.comparisons, 6);
        assert!(identify_two_stage(&g, &p, 0.3, wide, narrow, Method::OneToN).is_err());
    }

    #[test]
    fn classify() {
        let hit = |id: &str| SearchResult {
            matched: Some(Candidate {
                identity: id.into(),
                index: 0,
                score: MatchScore::new(1, 10, 0),
            }),
            comparisons: 1,
        };
        assert_eq!(classify_outcome(&hit("S001"), "S001"), Outcome::TrueMatch);
        assert_eq!(classify_outcome(&hit("S002"), "S001"), Outcome::FalseMatch);
        let miss = SearchResult { matched: None, comparisons: 3 };
        assert_eq!(classify_outcome(&miss, "S001"), Outcome::FalseNonMatch);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (g, _) = planted(&[3, 9, 27]);
        let m = dir.path().join("gallery.json");
        write_manifest(g.entries(), &m, "gallery").unwrap();
        assert_eq!(load_manifest(&m).unwrap(), g.entries());
    }

    #[test]
    fn result_json_shape() {
        let (g, p) = planted(&[45, 30, 25]);
        let r = identify_1first(&g, &p, &params(0.32)).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["decision"], "match");
        assert_eq!(v["matched_identity"], "E1");
        assert_eq!(v["comparisons"], 2);
        assert_eq!(v["score"]["value"], 0.3);
    }
}
