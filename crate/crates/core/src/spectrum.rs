//! Per-channel 2D DFT and the Hermitian bookkeeping that keeps modulated
//! spectra real-valued after inversion.
//!
//! Convention: unnormalized forward transform, `1/(H·W)` on the inverse.
//! Spectra are stored unshifted (DC at `(0, 0)`); the centered view is only a
//! coordinate mapping, see [`centered_to_index`].

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex H×W grid in row-major order. Used both for spectra and for the
/// raw (complex) output of the inverse transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

/// DFT of one real latent plane, unshifted index order.
pub type ChannelSpectrum = ComplexGrid;

impl ComplexGrid {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 || height * width != data.len() {
            return Err(Error::Shape(format!(
                "{height}x{width} grid with {} values",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.width + col] = value;
    }

    /// Unshifted index of the conjugate partner of `(row, col)`.
    #[inline]
    pub fn mirror(&self, row: usize, col: usize) -> (usize, usize) {
        mirror_index(row, col, self.height, self.width)
    }

    /// Largest `|Im|` over the grid.
    pub fn max_imag(&self) -> f64 {
        self.data.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    /// Largest `|Re|` over the grid.
    pub fn max_real(&self) -> f64 {
        self.data.iter().map(|c| c.re.abs()).fold(0.0, f64::max)
    }
}

#[inline]
pub fn mirror_index(row: usize, col: usize, height: usize, width: usize) -> (usize, usize) {
    ((height - row) % height, (width - col) % width)
}

#[inline]
pub fn is_self_conjugate(row: usize, col: usize, height: usize, width: usize) -> bool {
    mirror_index(row, col, height, width) == (row, col)
}

/// Map a signed offset from DC (centered view) to an unshifted index.
/// Valid for `-n/2 <= d < n/2` (even `n`) or `|d| <= (n-1)/2` (odd `n`).
#[inline]
pub fn centered_to_index(d: i64, n: usize) -> usize {
    if d >= 0 {
        d as usize
    } else {
        (n as i64 + d) as usize
    }
}

/// Inverse of [`centered_to_index`]; the even-size Nyquist index maps to `-n/2`.
#[inline]
pub fn index_to_centered(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// How the complex inverse-transform output becomes a real plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RealizeMode {
    /// Mirrors were restored; the imaginary residual must be numerical noise.
    #[default]
    Restored,
    /// Ablation: take the real part without restoring symmetry.
    Cutoff,
}

impl RealizeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RealizeMode::Restored => "restored",
            RealizeMode::Cutoff => "cutoff",
        }
    }
}

/// Relative tolerance for the restored-mode residual check.
pub const RESTORED_TOLERANCE: f64 = 1e-6;

/// Cached forward/inverse plans for one H×W size.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.height, self.width)
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("zero-sized plane {height}x{width}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            col_fwd: planner.plan_fft_forward(height),
            row_inv: planner.plan_fft_inverse(width),
            col_inv: planner.plan_fft_inverse(height),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn forward<T: Copy + Into<f64>>(&self, plane: &[T]) -> Result<ChannelSpectrum> {
        if plane.len() != self.height * self.width {
            return Err(Error::Shape(format!(
                "plane of {} values for a {}x{} transform",
                plane.len(),
                self.height,
                self.width
            )));
        }
        let mut data: Vec<Complex64> = plane
            .iter()
            .map(|&v| Complex64::new(v.into(), 0.0))
            .collect();
        self.run(&mut data, &self.row_fwd, &self.col_fwd);
        ComplexGrid::new(self.height, self.width, data)
    }

    pub fn inverse(&self, spectrum: &ComplexGrid) -> Result<ComplexGrid> {
        if (spectrum.height, spectrum.width) != (self.height, self.width) {
            return Err(Error::Shape(format!(
                "{}x{} spectrum for a {}x{} transform",
                spectrum.height, spectrum.width, self.height, self.width
            )));
        }
        let mut data = spectrum.data.clone();
        self.run(&mut data, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.height * self.width) as f64;
        for v in &mut data {
            *v *= scale;
        }
        ComplexGrid::new(self.height, self.width, data)
    }

    fn run(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (h, w) = (self.height, self.width);
        let scratch_len = rows
            .get_inplace_scratch_len()
            .max(cols.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::default(); scratch_len];
        rows.process_with_scratch(data, &mut scratch);
        let mut t = transpose(data, h, w);
        cols.process_with_scratch(&mut t, &mut scratch);
        data.copy_from_slice(&transpose(&t, w, h));
    }
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Forward 2D DFT of a real `height`×`width` plane.
pub fn dft2<T: Copy + Into<f64>>(
    plane: &[T],
    height: usize,
    width: usize,
) -> Result<ChannelSpectrum> {
    Fft2::new(height, width)?.forward(plane)
}

/// Normalized inverse 2D DFT.
pub fn idft2(spectrum: &ChannelSpectrum) -> Result<ComplexGrid> {
    Fft2::new(spectrum.height, spectrum.width)?.inverse(spectrum)
}

/// Overwrite the conjugate mirror of every touched bin with the conjugate of
/// the touched value. Fails before writing anything if a touched bin is its
/// own mirror (DC and, for even sizes, the Nyquist bins).
pub fn enforce_hermitian(spectrum: &mut ChannelSpectrum, touched: &[(usize, usize)]) -> Result<()> {
    let (h, w) = (spectrum.height, spectrum.width);
    for &(row, col) in touched {
        if row >= h || col >= w {
            return Err(Error::Shape(format!("bin ({row}, {col}) outside {h}x{w}")));
        }
        if is_self_conjugate(row, col, h, w) {
            return Err(Error::SelfConjugate { row, col });
        }
    }
    for &(row, col) in touched {
        let (mr, mc) = spectrum.mirror(row, col);
        let v = spectrum.get(row, col);
        spectrum.set(mr, mc, v.conj());
    }
    Ok(())
}

/// Collapse the inverse-transform output to a real plane.
pub fn realize(grid: &ComplexGrid, mode: RealizeMode) -> Result<Vec<f64>> {
    if mode == RealizeMode::Restored {
        let residual = grid.max_imag();
        let limit = RESTORED_TOLERANCE * (1.0 + grid.max_real());
        if residual >= limit {
            return Err(Error::SymmetryViolation { residual, limit });
        }
    }
    Ok(grid.data.iter().map(|c| c.re).collect())
}
