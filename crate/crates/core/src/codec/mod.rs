//! Iris template representation and its on-disk encodings.
//!
//! A template is a pair of equally sized bit matrices: the phase `code` and
//! the validity `mask` (1 = usable bit). Rows are radial bands, columns are
//! angular positions, so eye rotation is a circular column shift.

mod bits;
mod file;
mod hex;

pub use bits::BitMatrix;
pub use file::{read_template, read_template_file, write_template, write_template_file, MAGIC, VERSION};
pub use hex::{import_hex, to_hex};

use crate::error::{Error, Result};

/// Default radial bands.
pub const DEFAULT_ROWS: usize = 20;
/// Default angular columns; 360/240 puts one column shift at 1.5 degrees.
pub const DEFAULT_COLS: usize = 240;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IrisTemplate {
    code: BitMatrix,
    mask: BitMatrix,
    identity: String,
    sample_id: String,
}

impl IrisTemplate {
    pub fn new(
        code: BitMatrix,
        mask: BitMatrix,
        identity: impl Into<String>,
        sample_id: impl Into<String>,
    ) -> Result<Self> {
        if !code.same_shape(&mask) {
            return Err(Error::contract(format!(
                "code is {}x{} but mask is {}x{}",
                code.rows(),
                code.cols(),
                mask.rows(),
                mask.cols()
            )));
        }
        if code.rows() == 0 || code.cols() == 0 {
            return Err(Error::contract("template dimensions must be positive"));
        }
        Ok(IrisTemplate {
            code,
            mask,
            identity: identity.into(),
            sample_id: sample_id.into(),
        })
    }

    /// Template with every bit valid.
    pub fn unmasked(code: BitMatrix, identity: impl Into<String>, sample_id: impl Into<String>) -> Result<Self> {
        let mask = BitMatrix::ones(code.rows(), code.cols());
        Self::new(code, mask, identity, sample_id)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.code.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.code.cols()
    }

    #[inline]
    pub fn code(&self) -> &BitMatrix {
        &self.code
    }

    #[inline]
    pub fn mask(&self) -> &BitMatrix {
        &self.mask
    }

    pub fn identity(&self) -> &str {
        &self.identity
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn same_geometry(&self, other: &IrisTemplate) -> bool {
        self.rows() == other.rows() && self.cols() == other.cols()
    }

    pub(crate) fn code_mut(&mut self) -> &mut BitMatrix {
        &mut self.code
    }

    pub(crate) fn mask_mut(&mut self) -> &mut BitMatrix {
        &mut self.mask
    }

    pub fn with_labels(mut self, identity: impl Into<String>, sample_id: impl Into<String>) -> Self {
        self.identity = identity.into();
        self.sample_id = sample_id.into();
        self
    }

    /// Copy with code and mask both circularly shifted by `k` columns.
    pub fn rotated(&self, k: i64) -> Self {
        IrisTemplate {
            code: self.code.rotate_cols(k),
            mask: self.mask.rotate_cols(k),
            identity: self.identity.clone(),
            sample_id: self.sample_id.clone(),
        }
    }
}
