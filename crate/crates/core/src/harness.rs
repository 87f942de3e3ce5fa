//! Config-driven experiments: population, nested-gallery sweep, summaries,
//! ROC points, validation and the results bundle on disk.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::codec::IrisTemplate;
use crate::error::{Error, Result};
use crate::matcher::ShiftRange;
use crate::metrics::{
    average_over_thresholds, default_thresholds, read_rows_csv, roc_points, run_sweep, wide_table, write_roc_json,
    write_rows_csv, write_summary_csv, Audit, Discipline, MetricsRow, RocPoint, SummaryRow, SweepOutput, SweepPlan,
    DEFAULT_SHIFTS,
};
use crate::search::{load_manifest, shuffle_gallery, write_manifest, Gallery, Method, SearchParams};
use crate::synth::{generate_population, Population, SynthParams};
use crate::validation::{decision_equivalence_check, engine_agreement, AgreementReport, EquivalenceReport};

pub const THREADS_ENV: &str = "IRIS_LAB_THREADS";

pub const DEFAULT_GALLERY_SIZES: [usize; 8] = [100, 200, 400, 600, 800, 1000, 1200, 1400];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationSource {
    Synthetic(SynthParams),
    /// Gallery and probe manifests of TemplateFiles. The gallery is shuffled
    /// with the master seed.
    Manifest { gallery: PathBuf, probes: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoStage {
    pub narrow: u32,
    pub wide: u32,
}

impl Default for TwoStage {
    fn default() -> Self {
        TwoStage { narrow: 7, wide: 21 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub population: PopulationSource,
    pub gallery_sizes: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub shift_ranges: Vec<u32>,
    pub methods: Vec<Method>,
    pub two_stage: Option<TwoStage>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Probes re-run through the search engines to cross-check the sweep table.
    pub validation_probes: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            population: PopulationSource::Synthetic(SynthParams::default()),
            gallery_sizes: DEFAULT_GALLERY_SIZES.to_vec(),
            thresholds: default_thresholds(),
            shift_ranges: DEFAULT_SHIFTS.to_vec(),
            methods: Method::BOTH.to_vec(),
            two_stage: None,
            master_seed: SynthParams::default().seed,
            output_dir: PathBuf::from("results"),
            validation_probes: 40,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Synthetic populations take their seed from `master_seed`.
    pub fn resolved(mut self) -> Self {
        if let PopulationSource::Synthetic(p) = &mut self.population {
            p.seed = self.master_seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.gallery_sizes.is_empty() || self.gallery_sizes.contains(&0) {
            return cfg("gallery_sizes must be non-empty and positive".into());
        }
        if self.gallery_sizes.windows(2).any(|w| w[0] > w[1]) {
            return cfg(format!("gallery_sizes must be non-decreasing: {:?}", self.gallery_sizes));
        }
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return cfg(format!("thresholds must be non-empty and in (0, 1): {:?}", self.thresholds));
        }
        if self.shift_ranges.is_empty() || self.methods.is_empty() {
            return cfg("shift_ranges and methods must be non-empty".into());
        }
        if let Some(ts) = self.two_stage {
            if ts.narrow >= ts.wide {
                return cfg(format!("two_stage narrow ±{} must be below wide ±{}", ts.narrow, ts.wide));
            }
        }
        if let PopulationSource::Synthetic(p) = &self.population {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
            let largest = *self.gallery_sizes.last().expect("checked non-empty");
            if largest > p.n_identities {
                return cfg(format!("gallery size {largest} exceeds {} identities", p.n_identities));
            }
            let widest = self
                .shift_ranges
                .iter()
                .copied()
                .chain(self.two_stage.map(|t| t.wide))
                .max()
                .unwrap_or(0);
            if 2 * widest as usize >= p.cols {
                return cfg(format!("shift range ±{widest} too wide for {} columns", p.cols));
            }
        }
        Ok(())
    }

    fn plan(&self) -> Result<SweepPlan<f64>> {
        SweepPlan::new(
            self.gallery_sizes.clone(),
            self.thresholds.clone(),
            self.shift_ranges.iter().copied().map(ShiftRange::new).collect(),
            self.methods.clone(),
            self.two_stage.map(|t| (ShiftRange::new(t.narrow), ShiftRange::new(t.wide))),
        )
    }
}

/// Checks run alongside a sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub audit: Audit,
    /// 1:N / 1:First row pairs whose FNMR differ.
    pub fnmr_mismatched_rows: usize,
    pub equivalence: EquivalenceReport,
    pub agreement: AgreementReport,
}

impl ValidationReport {
    pub fn violations(&self) -> usize {
        let a = &self.audit;
        (a.decision_mismatches + a.one_to_n_reversions + a.comparison_excess) as usize
            + self.fnmr_mismatched_rows
            + self.equivalence.violations.len()
            + self.agreement.disagreements.len()
    }
}

#[derive(Debug, Clone)]
pub struct ResultsBundle {
    pub config: ExperimentConfig,
    pub rows: Vec<MetricsRow<f64>>,
    pub summary: Vec<SummaryRow<f64>>,
    pub roc: Vec<RocPoint<f64>>,
    pub validation: ValidationReport,
    pub sweep: SweepOutput<f64>,
    pub log: Vec<String>,
}

impl ResultsBundle {
    pub fn row(&self, method: Discipline, gallery_size: usize, threshold: f64, shifts: u32) -> Option<&MetricsRow<f64>> {
        self.rows.iter().find(|r| {
            r.method == method && r.gallery_size == gallery_size && r.shifts == shifts && r.threshold == threshold
        })
    }

    pub fn summary_row(&self, method: Discipline, gallery_size: usize, shifts: u32) -> Option<&SummaryRow<f64>> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.gallery_size == gallery_size && s.shifts == shifts)
    }
}

struct RunLog {
    start: Instant,
    lines: Vec<String>,
}

impl RunLog {
    fn new() -> Self {
        RunLog {
            start: Instant::now(),
            lines: Vec::new(),
        }
    }

    fn note(&mut self, msg: impl Into<String>) {
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let line = format!("[{unix} +{:.1}s] {}", self.start.elapsed().as_secs_f64(), msg.into());
        eprintln!("{line}");
        self.lines.push(line);
    }
}

/// Rayon pool sized by `IRIS_LAB_THREADS` (unset or 0: rayon's default).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Loads or generates the population named by `cfg`. Probes of identities
/// missing from the gallery are dropped (closed set); returns how many.
pub fn load_population(cfg: &ExperimentConfig) -> Result<(Gallery, Vec<IrisTemplate>, usize)> {
    match &cfg.population {
        PopulationSource::Synthetic(p) => {
            let Population { gallery, probes, .. } = generate_population(p, &cfg.gallery_sizes)?;
            Ok((gallery, probes, 0))
        }
        PopulationSource::Manifest { gallery, probes } => {
            let gallery = shuffle_gallery(load_manifest(gallery)?, cfg.master_seed)?;
            let all = load_manifest(probes)?;
            let before = all.len();
            let kept: Vec<IrisTemplate> =
                all.into_iter().filter(|p| gallery.position_of(p.identity()).is_some()).collect();
            let dropped = before - kept.len();
            Ok((gallery, kept, dropped))
        }
    }
}

fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write-test");
    File::create(&probe)?;
    fs::remove_file(probe)?;
    Ok(())
}

/// Evenly spaced, deterministic sample of at most `k` items.
fn spread<T: Clone>(items: &[T], k: usize) -> Vec<T> {
    if k == 0 || items.is_empty() {
        return Vec::new();
    }
    let k = k.min(items.len());
    (0..k).map(|i| items[i * items.len() / k].clone()).collect()
}

fn validate_run(
    cfg: &ExperimentConfig,
    gallery: &Gallery,
    probes: &[IrisTemplate],
    sweep: &SweepOutput<f64>,
    rows: &[MetricsRow<f64>],
) -> Result<ValidationReport> {
    let fnmr_mismatched_rows = rows
        .iter()
        .filter(|r| r.method == Discipline::Single(Method::OneToN))
        .filter(|r| {
            let twin = Discipline::Single(Method::OneToFirst);
            rows.iter()
                .find(|o| o.method == twin && o.gallery_size == r.gallery_size && o.shifts == r.shifts && o.threshold == r.threshold)
                .is_some_and(|o| o.fnmr != r.fnmr)
        })
        .count();

    let largest = *cfg.gallery_sizes.last().expect("validated");
    let smallest = cfg.gallery_sizes[0];
    let full = gallery.prefix(largest)?;
    let enrolled_small: Vec<IrisTemplate> = {
        let small = gallery.prefix(smallest)?;
        probes.iter().filter(|p| small.position_of(p.identity()).is_some()).cloned().collect()
    };
    let sample = spread(&enrolled_small, cfg.validation_probes);

    let plan = sweep.plan();
    let corners = |v: &[f64]| {
        let mut c = vec![v[0], v[v.len() - 1]];
        c.dedup();
        c
    };
    let thresholds = corners(plan.thresholds());
    let ranges = {
        let r = plan.ranges();
        let mut c = vec![r[0], r[r.len() - 1]];
        c.dedup();
        c
    };
    let params: Vec<SearchParams<f64>> = ranges
        .iter()
        .flat_map(|&r| thresholds.iter().map(move |&t| SearchParams::new(t, r)))
        .collect::<Result<_>>()?;
    let equivalence = decision_equivalence_check(&full, &sample, &params)?;

    let mut sizes = vec![smallest, largest];
    sizes.dedup();
    let reduced = SweepPlan::new(sizes, thresholds, ranges, plan.methods().to_vec(), None)?;
    let agreement = engine_agreement(gallery, &sample, &reduced)?;

    Ok(ValidationReport {
        audit: sweep.audit.clone(),
        fnmr_mismatched_rows,
        equivalence,
        agreement,
    })
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Summary CSV and ROC JSON derived from rows, written under `dir`.
pub fn write_reports(rows: &[MetricsRow<f64>], dir: &Path) -> Result<(Vec<SummaryRow<f64>>, Vec<RocPoint<f64>>)> {
    let summary = average_over_thresholds(rows)?;
    let roc = roc_points(rows);
    write_with(&dir.join("summary.csv"), |w| write_summary_csv(&summary, w))?;
    write_with(&dir.join("roc.json"), |w| write_roc_json(&roc, w))?;
    Ok((summary, roc))
}

/// Rebuilds summary and ROC outputs from an existing rows CSV.
pub fn report_from_rows(rows_csv: &Path, dir: &Path) -> Result<Vec<SummaryRow<f64>>> {
    let rows: Vec<MetricsRow<f64>> = read_rows_csv(BufReader::new(File::open(rows_csv)?))?;
    fs::create_dir_all(dir)?;
    Ok(write_reports(&rows, dir)?.0)
}

pub fn summary_tables(summary: &[SummaryRow<f64>], shifts: &[u32]) -> String {
    let mut s = String::new();
    for &k in shifts {
        s.push_str(&format!("Shifts ±{k}, mean ± std over thresholds (%)\n\n{}\n", wide_table(summary, k)));
    }
    s
}

/// Computes the bundle without touching the filesystem (beyond loading a
/// manifest population).
pub fn compute_experiment(cfg: &ExperimentConfig) -> Result<ResultsBundle> {
    let cfg = cfg.clone().resolved();
    cfg.validate()?;
    let plan = cfg.plan()?;
    let mut log = RunLog::new();
    let pool = thread_pool()?;
    pool.install(|| {
        let (gallery, probes, dropped) = load_population(&cfg)?;
        log.note(format!("population: {} enrolled, {} probes ({dropped} unenrolled dropped)", gallery.len(), probes.len()));
        if *cfg.gallery_sizes.last().expect("validated") > gallery.len() {
            return Err(Error::Config(format!("gallery has only {} enrollments", gallery.len())));
        }
        let sweep = run_sweep(&gallery, &probes, &plan)?;
        log.note(format!("sweep done: {:?} probes per size", sweep.audit.probes_per_size));
        let rows = sweep.rows()?;
        let summary = average_over_thresholds(&rows)?;
        let roc = roc_points(&rows);
        let validation = validate_run(&cfg, &gallery, &probes, &sweep, &rows)?;
        log.note(format!("validation: {} violations", validation.violations()));
        for line in summary_tables(&summary, &cfg.shift_ranges).lines() {
            log.lines.push(line.to_owned());
        }
        Ok(ResultsBundle {
            config: cfg.clone(),
            rows,
            summary,
            roc,
            validation,
            sweep,
            log: std::mem::take(&mut log.lines),
        })
    })
}

/// Runs the configured sweep and writes `rows.csv`, `summary.csv`,
/// `roc.json`, `validation.json`, `config.json` and `run.log` into the
/// output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsBundle> {
    let resolved = cfg.clone().resolved();
    resolved.validate()?;
    let dir = resolved.output_dir.clone();
    ensure_writable(&dir)?;
    let bundle = compute_experiment(&resolved)?;
    write_with(&dir.join("rows.csv"), |w| write_rows_csv(&bundle.rows, w))?;
    write_reports(&bundle.rows, &dir)?;
    write_with(&dir.join("validation.json"), |w| Ok(serde_json::to_writer_pretty(w, &bundle.validation)?))?;
    write_with(&dir.join("config.json"), |w| Ok(serde_json::to_writer_pretty(w, &bundle.config)?))?;
    fs::write(dir.join("run.log"), bundle.log.join("\n") + "\n")?;
    Ok(bundle)
}

/// Writes a population as TemplateFiles: `gallery.json` (in gallery order),
/// `probes.json`, and a `population.json` sidecar with the parameters.
pub fn write_population(pop: &Population, params: &SynthParams, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_manifest(pop.gallery.entries(), dir.join("gallery.json"), "gallery")?;
    write_manifest(&pop.probes, dir.join("probes.json"), "probes")?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        params: &'a SynthParams,
        enrolled: usize,
        probes: usize,
        order_seed: u64,
        degrees_of_freedom: usize,
    }
    let sidecar = Sidecar {
        params,
        enrolled: pop.gallery.len(),
        probes: pop.probes.len(),
        order_seed: pop.gallery.order_seed(),
        degrees_of_freedom: params.degrees_of_freedom(),
    };
    fs::write(dir.join("population.json"), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::ProbeSchedule;

    pub(crate) fn tiny(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            population: PopulationSource::Synthetic(SynthParams {
                n_identities: 40,
                probes_per_identity: ProbeSchedule::Fixed(2),
                ..SynthParams::default()
            }),
            gallery_sizes: vec![20, 40],
            thresholds: vec![0.3, 0.35],
            shift_ranges: vec![0, 3],
            master_seed: 5,
            output_dir: dir.to_path_buf(),
            validation_probes: 5,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_checks() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny(dir.path());
        assert!(c.validate().is_ok());
        c.gallery_sizes = vec![40, 20];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = tiny(dir.path());
        c.gallery_sizes = vec![41];
        assert!(c.validate().is_err());
        let mut c = tiny(dir.path());
        c.thresholds = vec![0.0];
        assert!(c.validate().is_err());
        let mut c = tiny(dir.path());
        c.two_stage = Some(TwoStage { narrow: 3, wide: 3 });
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults_and_echo() {
        let c: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let text = serde_json::to_string(&c.clone().resolved()).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c.resolved());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn bundle_files_written() {
        let dir = tempfile::tempdir().unwrap();
        let b = run_experiment(&tiny(dir.path())).unwrap();
        assert_eq!(b.rows.len(), 2 * 2 * 2 * 2);
        assert_eq!(b.validation.violations(), 0, "{:?}", b.validation);
        for f in ["rows.csv", "summary.csv", "roc.json", "validation.json", "config.json", "run.log"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let echo = ExperimentConfig::load(dir.path().join("config.json")).unwrap();
        assert_eq!(echo, b.config);
    }

    #[test]
    fn report_reproduces_summary() {
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&tiny(dir.path())).unwrap();
        let direct = fs::read(dir.path().join("summary.csv")).unwrap();
        let again = dir.path().join("again");
        report_from_rows(&dir.path().join("rows.csv"), &again).unwrap();
        assert_eq!(fs::read(again.join("summary.csv")).unwrap(), direct);
    }

    #[test]
    fn unwritable_output_fails_early() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let mut c = tiny(dir.path());
        c.output_dir = blocker.join("sub");
        assert!(matches!(run_experiment(&c), Err(Error::Io(_))));
    }

    #[test]
    fn manifest_population() {
        let dir = tempfile::tempdir().unwrap();
        let params = SynthParams {
            n_identities: 12,
            probes_per_identity: ProbeSchedule::Fixed(1),
            ..SynthParams::default()
        };
        let pop = generate_population(&params, &[]).unwrap();
        write_population(&pop, &params, dir.path()).unwrap();
        let cfg = ExperimentConfig {
            population: PopulationSource::Manifest {
                gallery: dir.path().join("gallery.json"),
                probes: dir.path().join("probes.json"),
            },
            gallery_sizes: vec![6, 12],
            thresholds: vec![0.3, 0.33],
            shift_ranges: vec![0, 2],
            output_dir: dir.path().join("out"),
            ..ExperimentConfig::default()
        };
        let (g, probes, dropped) = load_population(&cfg.clone().resolved()).unwrap();
        assert_eq!((g.len(), probes.len(), dropped), (12, 12, 0));
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(b.validation.violations(), 0);
    }
}
