//! Complex-amplitude kernel for single-photon linear optics.
//!
//! A photon distributed over `n` spatial paths is a [`ModeVector`] of complex
//! amplitudes; passive components (couplers, switches, lossy sections) are
//! [`TransferMatrix`] values acting on those amplitudes. Loss is carried
//! inside the matrices as sub-unitary columns, so arbitrary cascades compose
//! with plain matrix products and only probabilities are ever read out.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance for exact matrix identities (unitarity, column norms).
pub const EPS_MATRIX: f64 = 1e-12;
/// Looser tolerance for long cascades where rounding accumulates.
pub const EPS_CASCADE: f64 = 1e-9;

/// Convert a non-negative attenuation in dB to a linear power transmission.
///
/// `0 dB -> 1.0`, `13 dB -> 10^-1.3`, `+inf -> 0.0`.
pub fn db_to_linear(loss_db: f64) -> Result<f64> {
    if loss_db.is_nan() || loss_db < 0.0 {
        return Err(Error::Domain(format!(
            "attenuation must be >= 0 dB, got {loss_db}"
        )));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Inverse of [`db_to_linear`] for transmissions in `(0, 1]`.
pub fn linear_to_db(transmission: f64) -> Result<f64> {
    if !(transmission > 0.0 && transmission <= 1.0) {
        return Err(Error::Domain(format!(
            "transmission must be in (0, 1], got {transmission}"
        )));
    }
    Ok(-10.0 * transmission.log10())
}

/// Amplitudes of a single photon over an ordered set of spatial paths.
///
/// Total probability `sum |a_i|^2` is at most 1; it falls below 1 once the
/// photon may have been lost upstream.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector {
    amplitudes: Vec<Complex64>,
}

impl ModeVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidParameter(
                "mode vector needs at least one path".into(),
            ));
        }
        Ok(Self { amplitudes })
    }

    /// Photon in a single path `index` of an `n`-path register.
    pub fn basis_state(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::InvalidParameter(format!(
                "basis index {index} out of range for {n} paths"
            )));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); n];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Self::new(amplitudes)
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Total detection probability `sum |a_i|^2`.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Per-path probabilities `|a_i|^2`.
    pub fn powers(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Complex transfer matrix of a passive optical component or cascade,
/// `n_out x n_in`, acting on [`ModeVector`] amplitudes.
///
/// Every column has squared norm at most `1 + EPS_MATRIX`; a lossless
/// component is unitary within the same tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    n_out: usize,
    n_in: usize,
    /// Row-major entries, `entries[row * n_in + col]`.
    entries: Vec<Complex64>,
}

impl TransferMatrix {
    /// Build from row-major entries, checking shape and column sub-normalization.
    pub fn new(n_out: usize, n_in: usize, entries: Vec<Complex64>) -> Result<Self> {
        if n_out == 0 || n_in == 0 || entries.len() != n_out * n_in {
            return Err(Error::DimensionMismatch(format!(
                "expected {n_out}x{n_in} = {} entries, got {}",
                n_out * n_in,
                entries.len()
            )));
        }
        let m = Self {
            n_out,
            n_in,
            entries,
        };
        for col in 0..n_in {
            let norm = m.column_norm_sqr(col);
            if norm > 1.0 + EPS_MATRIX {
                return Err(Error::InvalidParameter(format!(
                    "column {col} has squared norm {norm} > 1; gain is unphysical"
                )));
            }
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            entries[i * n + i] = Complex64::new(1.0, 0.0);
        }
        Self {
            n_out: n,
            n_in: n,
            entries,
        }
    }

    /// The 2x2 50:50 multi-mode interference coupler, `(1/sqrt 2) [[1, i], [i, 1]]`.
    pub fn mmi() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            n_out: 2,
            n_in: 2,
            entries: vec![
                Complex64::new(s, 0.0),
                Complex64::new(0.0, s),
                Complex64::new(0.0, s),
                Complex64::new(s, 0.0),
            ],
        }
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.n_in + col]
    }

    pub fn column_norm_sqr(&self, col: usize) -> f64 {
        (0..self.n_out).map(|r| self.get(r, col).norm_sqr()).sum()
    }

    /// Apply to a mode vector: `result = M v`.
    pub fn apply(&self, v: &ModeVector) -> Result<ModeVector> {
        if v.len() != self.n_in {
            return Err(Error::DimensionMismatch(format!(
                "matrix expects {} input paths, vector has {}",
                self.n_in,
                v.len()
            )));
        }
        let amps = (0..self.n_out)
            .map(|r| {
                (0..self.n_in)
                    .map(|c| self.get(r, c) * v.amplitudes[c])
                    .sum()
            })
            .collect();
        ModeVector::new(amps)
    }

    /// Cascade composition: `compose(later, earlier) = later * earlier`,
    /// i.e. `earlier` acts on the photon first.
    pub fn compose(later: &TransferMatrix, earlier: &TransferMatrix) -> Result<TransferMatrix> {
        if later.n_in != earlier.n_out {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose {}x{} after {}x{}",
                later.n_out, later.n_in, earlier.n_out, earlier.n_in
            )));
        }
        let mut entries = vec![Complex64::new(0.0, 0.0); later.n_out * earlier.n_in];
        for r in 0..later.n_out {
            for c in 0..earlier.n_in {
                let mut sum = Complex64::new(0.0, 0.0);
                for k in 0..later.n_in {
                    sum += later.get(r, k) * earlier.get(k, c);
                }
                entries[r * earlier.n_in + c] = sum;
            }
        }
        Ok(TransferMatrix {
            n_out: later.n_out,
            n_in: earlier.n_in,
            entries,
        })
    }

    /// Conjugate transpose; the inverse of a unitary component.
    pub fn dagger(&self) -> TransferMatrix {
        let mut entries = vec![Complex64::new(0.0, 0.0); self.n_in * self.n_out];
        for r in 0..self.n_out {
            for c in 0..self.n_in {
                entries[c * self.n_out + r] = self.get(r, c).conj();
            }
        }
        TransferMatrix {
            n_out: self.n_in,
            n_in: self.n_out,
            entries,
        }
    }

    /// Embed a 2x2 block on paths `(i, j)` of an `n`-path identity.
    /// Output 0 of the block lands on path `i`, output 1 on path `j`.
    pub fn embed_pair(n: usize, i: usize, j: usize, block: &TransferMatrix) -> Result<Self> {
        if block.n_out != 2 || block.n_in != 2 {
            return Err(Error::DimensionMismatch(
                "embed_pair needs a 2x2 block".into(),
            ));
        }
        if i >= n || j >= n || i == j {
            return Err(Error::InvalidParameter(format!(
                "invalid path pair ({i}, {j}) for {n} paths"
            )));
        }
        let mut m = Self::identity(n);
        m.entries[i * n + i] = block.get(0, 0);
        m.entries[i * n + j] = block.get(0, 1);
        m.entries[j * n + i] = block.get(1, 0);
        m.entries[j * n + j] = block.get(1, 1);
        Ok(m)
    }

    /// Selector that keeps the listed paths (in the given order) and
    /// terminates the rest. Dropping paths models absorbing dump ports,
    /// so the result is sub-unitary by construction.
    pub fn keep_paths(kept: &[usize], n_in: usize) -> Result<Self> {
        if kept.is_empty() {
            return Err(Error::InvalidParameter(
                "must keep at least one path".into(),
            ));
        }
        let mut entries = vec![Complex64::new(0.0, 0.0); kept.len() * n_in];
        for (row, &p) in kept.iter().enumerate() {
            if p >= n_in {
                return Err(Error::InvalidParameter(format!(
                    "kept path {p} out of range for {n_in} paths"
                )));
            }
            entries[row * n_in + p] = Complex64::new(1.0, 0.0);
        }
        TransferMatrix::new(kept.len(), n_in, entries)
    }

    /// Injector that widens an `n_in`-path register with trailing vacuum
    /// paths (transpose of a keep-selector on the leading paths).
    pub fn inject_vacuum(n_in: usize, n_out: usize) -> Result<Self> {
        if n_out < n_in {
            return Err(Error::DimensionMismatch(format!(
                "cannot inject {n_in} paths into {n_out}"
            )));
        }
        let mut entries = vec![Complex64::new(0.0, 0.0); n_out * n_in];
        for p in 0..n_in {
            entries[p * n_in + p] = Complex64::new(1.0, 0.0);
        }
        TransferMatrix::new(n_out, n_in, entries)
    }

    /// Uniform power attenuation of every path by `loss_db`.
    pub fn attenuated(&self, loss_db: f64) -> Result<Self> {
        let amp = db_to_linear(loss_db)?.sqrt();
        let entries = self.entries.iter().map(|e| e * amp).collect();
        Ok(TransferMatrix {
            n_out: self.n_out,
            n_in: self.n_in,
            entries,
        })
    }

    /// Largest absolute deviation from another matrix of the same shape.
    pub fn max_abs_diff(&self, other: &TransferMatrix) -> f64 {
        assert_eq!((self.n_out, self.n_in), (other.n_out, other.n_in));
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Distance between two amplitude sets after removing one global phase.
///
/// Only relative phases are physical, so comparisons of states or matrix
/// columns go through this instead of raw subtraction.
pub fn phase_aligned_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let overlap: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    a.iter()
        .zip(b)
        .map(|(x, y)| (x * phase - y).norm())
        .fold(0.0, f64::max)
}
