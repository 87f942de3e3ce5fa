/// Dense row-major bit matrix. Each row occupies `stride` 64-bit words; bits
/// past `cols` in the last word of a row are always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = cols.div_ceil(64);
        BitMatrix {
            rows,
            cols,
            stride,
            words: vec![0; rows * stride],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        m.fill(true);
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        let w = self.words[row * self.stride + col / 64];
        (w >> (col % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.rows && col < self.cols);
        let w = &mut self.words[row * self.stride + col / 64];
        let bit = 1u64 << (col % 64);
        if value {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    pub fn fill(&mut self, value: bool) {
        if !value {
            self.words.iter_mut().for_each(|w| *w = 0);
            return;
        }
        let tail = self.cols % 64;
        for r in 0..self.rows {
            let row = &mut self.words[r * self.stride..(r + 1) * self.stride];
            row.iter_mut().for_each(|w| *w = u64::MAX);
            if tail != 0 {
                if let Some(last) = row.last_mut() {
                    *last = (1u64 << tail) - 1;
                }
            }
        }
    }

    /// Flips every valid bit; padding stays zero.
    pub fn complement(&self) -> Self {
        let mut out = Self::ones(self.rows, self.cols);
        for (o, w) in out.words.iter_mut().zip(&self.words) {
            *o &= !w;
        }
        out
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Backing words, row-major, `stride` words per row.
    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn same_shape(&self, other: &BitMatrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// Circular shift of every row: output column `j` takes input column `j - k (mod cols)`.
    pub fn rotate_cols(&self, k: i64) -> Self {
        if self.cols == 0 {
            return self.clone();
        }
        let cols = self.cols as i64;
        let k = k.rem_euclid(cols) as usize;
        if k == 0 {
            return self.clone();
        }
        let mut out = Self::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if self.get(r, c) {
                    let dst = (c + k) % self.cols;
                    out.set(r, dst, true);
                }
            }
        }
        out
    }
}

impl std::fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitMatrix({}x{}, {} ones)", self.rows, self.cols, self.count_ones())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_keeps_padding_clear() {
        let m = BitMatrix::ones(3, 70);
        assert_eq!(m.count_ones(), 210);
        assert_eq!(m.words()[1], (1u64 << 6) - 1);
        assert_eq!(m.complement().count_ones(), 0);
    }

    #[test]
    fn rotation_moves_columns_right() {
        let mut m = BitMatrix::zeros(2, 10);
        m.set(0, 9, true);
        m.set(1, 0, true);
        let r = m.rotate_cols(1);
        assert!(r.get(0, 0));
        assert!(r.get(1, 1));
        assert_eq!(r.count_ones(), 2);
        assert_eq!(m.rotate_cols(-1).rotate_cols(1), m);
        assert_eq!(m.rotate_cols(10), m);
    }
}
