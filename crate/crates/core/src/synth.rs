//! Synthetic iris-code populations with a controllable impostor tail.
//!
//! Codes are fair coin flips drawn on a coarse block grid and replicated to
//! full resolution, so a template carries `(rows/block_rows)*(cols/block_cols)`
//! independent bits. Captures of an identity add per-bit flips, a circular
//! rotation and a contiguous angular occlusion band on the mask.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{BitMatrix, IrisTemplate, DEFAULT_COLS, DEFAULT_ROWS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::search::{shuffle_gallery, Gallery};

/// Number of probe captures generated per identity (after the enrollment).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbeSchedule {
    Fixed(u32),
    /// Uniform in `min..=max`, drawn per identity.
    Range { min: u32, max: u32 },
}

impl ProbeSchedule {
    fn draw(&self, rng: &mut impl Rng) -> u32 {
        match *self {
            ProbeSchedule::Fixed(n) => n,
            ProbeSchedule::Range { min, max } => rng.gen_range(min..=max),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ProbeSchedule::Fixed(n) => n as f64,
            ProbeSchedule::Range { min, max } => (min as f64 + max as f64) / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_identities: usize,
    pub probes_per_identity: ProbeSchedule,
    pub rows: usize,
    pub cols: usize,
    pub block_rows: usize,
    pub block_cols: usize,
    /// Per-bit flip probability of each capture.
    pub flip_prob: f64,
    /// Upper bound of the occluded angular fraction of each capture.
    pub occlusion_frac_max: f64,
    /// Captures are rotated by a uniform offset in `[-max, max]` columns.
    pub rotation_offset_max: u32,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_identities: 1400,
            probes_per_identity: ProbeSchedule::Range { min: 4, max: 16 },
            rows: DEFAULT_ROWS,
            cols: DEFAULT_COLS,
            // 5x10 blocks = 50 degrees of freedom. Both captures are noisy, which
            // narrows the impostor spread by (1 - 2*pair_flip); at 200 blocks the
            // sub-0.35 impostor tail is empty at desk scale.
            block_rows: 4,
            block_cols: 24,
            flip_prob: 0.11,
            occlusion_frac_max: 0.25,
            rotation_offset_max: 5,
            seed: 0x1215,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::contract(m));
        if self.rows == 0 || self.cols == 0 || self.block_rows == 0 || self.block_cols == 0 {
            return bad("geometry and block sizes must be positive".into());
        }
        if !self.rows.is_multiple_of(self.block_rows) || !self.cols.is_multiple_of(self.block_cols) {
            return bad(format!(
                "blocks {}x{} must tile the {}x{} template",
                self.block_rows, self.block_cols, self.rows, self.cols
            ));
        }
        if !(0.0..=0.5).contains(&self.flip_prob) {
            return bad(format!("flip_prob {} outside [0, 0.5]", self.flip_prob));
        }
        if !(0.0..=0.5).contains(&self.occlusion_frac_max) {
            return bad(format!("occlusion_frac_max {} outside [0, 0.5]", self.occlusion_frac_max));
        }
        if 2 * self.rotation_offset_max as usize >= self.cols {
            return bad(format!("rotation_offset_max {} too large for {} columns", self.rotation_offset_max, self.cols));
        }
        if let ProbeSchedule::Range { min, max } = self.probes_per_identity {
            if min > max {
                return bad(format!("probe schedule min {min} > max {max}"));
            }
        }
        Ok(())
    }

    /// Independent bits per template under the block model.
    pub fn degrees_of_freedom(&self) -> usize {
        (self.rows / self.block_rows) * (self.cols / self.block_cols)
    }

    /// The per-identity random stream. Stream 0 is left to gallery shuffling.
    pub fn identity_stream(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64 + 1);
        rng
    }
}

pub fn identity_label(index: usize) -> String {
    format!("S{:04}", index + 1)
}

/// Draws a fresh identity code with an all-valid mask.
pub fn generate_identity(params: &SynthParams, rng: &mut impl Rng, identity: &str) -> Result<IrisTemplate> {
    params.validate()?;
    let grid_rows = params.rows / params.block_rows;
    let grid_cols = params.cols / params.block_cols;
    let grid: Vec<bool> = (0..grid_rows * grid_cols).map(|_| rng.gen_bool(0.5)).collect();
    let code = BitMatrix::from_fn(params.rows, params.cols, |r, c| {
        grid[(r / params.block_rows) * grid_cols + c / params.block_cols]
    });
    IrisTemplate::unmasked(code, identity, format!("{identity}-id"))
}

/// One capture of `identity`: bit flips, then rotation, then an occluded band.
pub fn generate_probe(
    identity: &IrisTemplate,
    params: &SynthParams,
    rng: &mut impl Rng,
    sample_id: &str,
) -> IrisTemplate {
    let mut t = identity.clone().with_labels(identity.identity(), sample_id);
    if params.flip_prob > 0.0 {
        let code = t.code_mut();
        for r in 0..code.rows() {
            for c in 0..code.cols() {
                if rng.gen_bool(params.flip_prob) {
                    code.set(r, c, !code.get(r, c));
                }
            }
        }
    }
    let max = params.rotation_offset_max as i64;
    let offset = if max > 0 { rng.gen_range(-max..=max) } else { 0 };
    let mut t = t.rotated(offset);

    let cols = t.cols();
    let frac = if params.occlusion_frac_max > 0.0 {
        rng.gen_range(0.0..=params.occlusion_frac_max)
    } else {
        0.0
    };
    let width = (frac * cols as f64).round() as usize;
    if width > 0 {
        let start = rng.gen_range(0..cols);
        let mask = t.mask_mut();
        for r in 0..mask.rows() {
            for j in 0..width {
                mask.set(r, (start + j) % cols, false);
            }
        }
    }
    t
}

/// Enrollment gallery plus the probe captures of the enrolled identities.
#[derive(Debug, Clone)]
pub struct Population {
    pub gallery: Gallery,
    pub probes: Vec<IrisTemplate>,
    /// Clean identity codes, indexed like the identity labels (`S0001` is 0).
    pub identities: Vec<IrisTemplate>,
}

/// Generates every identity and its captures. The first capture of each
/// identity is enrolled; the rest become probes. The gallery is shuffled with
/// `params.seed`. Every size in `size_schedule` must fit the population.
pub fn generate_population(params: &SynthParams, size_schedule: &[usize]) -> Result<Population> {
    params.validate()?;
    if let Some(&too_big) = size_schedule.iter().find(|&&n| n > params.n_identities) {
        return Err(Error::contract(format!(
            "gallery size {too_big} exceeds population of {}",
            params.n_identities
        )));
    }
    let per_identity: Vec<(IrisTemplate, IrisTemplate, Vec<IrisTemplate>)> = (0..params.n_identities)
        .into_par_iter()
        .map(|i| {
            let mut rng = params.identity_stream(i);
            let label = identity_label(i);
            let n_probes = params.probes_per_identity.draw(&mut rng);
            let id = generate_identity(params, &mut rng, &label)?;
            let enrolled = generate_probe(&id, params, &mut rng, &format!("{label}-00"));
            let probes = (1..=n_probes)
                .map(|j| generate_probe(&id, params, &mut rng, &format!("{label}-{j:02}")))
                .collect();
            Ok((id, enrolled, probes))
        })
        .collect::<Result<_>>()?;

    let mut identities = Vec::with_capacity(per_identity.len());
    let mut enrollments = Vec::with_capacity(per_identity.len());
    let mut probes = Vec::new();
    for (id, enrolled, p) in per_identity {
        identities.push(id);
        enrollments.push(enrolled);
        probes.extend(p);
    }
    Ok(Population {
        gallery: shuffle_gallery(enrollments, params.seed)?,
        probes,
        identities,
    })
}

/// Effective degrees of freedom `p(1-p)/var` of an impostor score sample.
pub fn estimate_dof<T: Scalar>(scores: &[T]) -> Result<T> {
    if scores.len() < 2 {
        return Err(Error::Undefined("need at least two scores".into()));
    }
    let n = T::count(scores.len() as u64);
    let mean = scores.iter().copied().sum::<T>() / n;
    let var = scores.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one());
    // a constant sample can leave rounding residue in the variance
    if var <= T::epsilon() * mean * mean {
        return Err(Error::Undefined("impostor scores have zero variance".into()));
    }
    Ok(mean * (T::one() - mean) / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::{best_of_m, fractional_hd, ShiftRange};

    fn small() -> SynthParams {
        SynthParams {
            n_identities: 30,
            probes_per_identity: ProbeSchedule::Fixed(2),
            ..SynthParams::default()
        }
    }

    #[test]
    fn unit_blocks_are_independent_bits() {
        let p = SynthParams { block_rows: 1, block_cols: 1, ..small() };
        assert_eq!(p.degrees_of_freedom(), 4800);
        let t = generate_identity(&p, &mut p.identity_stream(0), "a").unwrap();
        let ones = t.code().count_ones();
        assert!((2200..2600).contains(&ones), "{ones}");
    }

    #[test]
    fn whole_template_block_is_constant() {
        let p = SynthParams { block_rows: 20, block_cols: 240, ..small() };
        for i in 0..4 {
            let t = generate_identity(&p, &mut p.identity_stream(i), "a").unwrap();
            assert!(matches!(t.code().count_ones(), 0 | 4800));
            assert_eq!(t.mask().count_ones(), 4800);
        }
    }

    #[test]
    fn geometry_checked() {
        let p = SynthParams { block_cols: 7, ..small() };
        assert!(generate_identity(&p, &mut p.identity_stream(0), "a").is_err());
        let p = SynthParams { flip_prob: 0.7, ..small() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn noiseless_probe_is_identical() {
        let p = SynthParams { flip_prob: 0.0, rotation_offset_max: 0, occlusion_frac_max: 0.0, ..small() };
        let mut rng = p.identity_stream(3);
        let id = generate_identity(&p, &mut rng, "S").unwrap();
        let probe = generate_probe(&id, &p, &mut rng, "S-01");
        assert_eq!(probe.code(), id.code());
        assert_eq!(probe.identity(), "S");
        assert_eq!(probe.sample_id(), "S-01");
        assert_eq!(fractional_hd(&probe, &id).unwrap().value::<f64>(), Some(0.0));
    }

    #[test]
    fn maximal_noise_looks_like_an_impostor() {
        let p = SynthParams { flip_prob: 0.5, rotation_offset_max: 0, occlusion_frac_max: 0.0, ..small() };
        let mut rng = p.identity_stream(5);
        let id = generate_identity(&p, &mut rng, "S").unwrap();
        let mean: f64 = (0..200)
            .map(|_| fractional_hd(&generate_probe(&id, &p, &mut rng, "x"), &id).unwrap().value::<f64>().unwrap())
            .sum::<f64>()
            / 200.0;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
    }

    #[test]
    fn rotation_is_recovered_exactly() {
        let p = SynthParams { flip_prob: 0.0, occlusion_frac_max: 0.25, rotation_offset_max: 5, ..small() };
        let mut rng = p.identity_stream(8);
        let id = generate_identity(&p, &mut rng, "S").unwrap();
        for _ in 0..20 {
            let probe = generate_probe(&id, &p, &mut rng, "x");
            let s = best_of_m(&probe, &id, ShiftRange::new(5)).unwrap();
            assert_eq!(s.value::<f64>(), Some(0.0));
        }
    }

    #[test]
    fn population_is_closed_set_and_deterministic() {
        let p = small();
        let a = generate_population(&p, &[10, 30]).unwrap();
        let b = generate_population(&p, &[30]).unwrap();
        assert_eq!(a.gallery.entries(), b.gallery.entries());
        assert_eq!(a.probes, b.probes);
        assert_eq!(a.gallery.len(), 30);
        assert_eq!(a.probes.len(), 60);
        for probe in &a.probes {
            assert!(a.gallery.position_of(probe.identity()).is_some());
        }
        assert!(generate_population(&p, &[31]).is_err());
    }

    #[test]
    fn zero_probes_still_enrolls() {
        let p = SynthParams { probes_per_identity: ProbeSchedule::Fixed(0), ..small() };
        let pop = generate_population(&p, &[]).unwrap();
        assert!(pop.probes.is_empty());
        assert_eq!(pop.gallery.len(), 30);
    }

    #[test]
    fn dof_formula() {
        // two points 0.5 +- d have sample std d*sqrt(2); pick d so std = 0.0316
        let d = 0.0316 / 2f64.sqrt();
        let dof = estimate_dof(&[0.5 - d, 0.5 + d]).unwrap();
        assert!((dof - 250.3).abs() < 0.1, "{dof}");
        assert!(matches!(estimate_dof(&[0.4, 0.4, 0.4]), Err(Error::Undefined(_))));
        assert!(estimate_dof::<f64>(&[0.4]).is_err());
    }

    #[test]
    fn schedule_json_forms() {
        let f: ProbeSchedule = serde_json::from_str("7").unwrap();
        assert_eq!(f, ProbeSchedule::Fixed(7));
        let r: ProbeSchedule = serde_json::from_str(r#"{"min":2,"max":9}"#).unwrap();
        assert_eq!(r, ProbeSchedule::Range { min: 2, max: 9 });
    }
}
