//! Uniform position lattice with its FFT-conjugate momentum lattice.

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::sync::Arc;

/// A centered 1-D position lattice of `n` points (power of two) spanning
/// `length`, together with its conjugate momentum lattice.
///
/// Invariants: `dx * dk * n = 2pi`, positions are `x_j = (j - n/2) dx`.
#[derive(Debug, Clone)]
pub struct Grid {
    inner: Arc<GridData>,
}

#[derive(Debug)]
struct GridData {
    n: usize,
    length: f64,
    dx: f64,
    dk: f64,
    positions: Vec<f64>,
    momenta_fft: Vec<f64>,
    momenta_sorted: Vec<f64>,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGridSize(n));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGridLength(length));
        }
        let dx = length / n as f64;
        let dk = 2.0 * PI / length;
        let positions = (0..n).map(|j| (j as f64 - n as f64 / 2.0) * dx).collect();
        let momenta_fft = (0..n)
            .map(|m| {
                if m < n / 2 {
                    m as f64 * dk
                } else {
                    (m as f64 - n as f64) * dk
                }
            })
            .collect();
        let momenta_sorted = (0..n).map(|m| (m as f64 - n as f64 / 2.0) * dk).collect();
        Ok(Self {
            inner: Arc::new(GridData {
                n,
                length,
                dx,
                dk,
                positions,
                momenta_fft,
                momenta_sorted,
            }),
        })
    }

    /// Grid with `dx == dk` (`length = sqrt(2 pi n)`), the natural choice when
    /// position-like and momentum-like lattices must coincide.
    pub fn symmetric(n: usize) -> Result<Self> {
        Self::new(n, (2.0 * PI * n as f64).sqrt())
    }

    /// The conjugate grid: `n` points with spacing `dk`, so that its own
    /// momentum lattice has spacing `dx`. Used for detector modes whose
    /// pointer variable lives on this grid's position lattice.
    pub fn conjugate(&self) -> Grid {
        Grid::new(self.n(), self.n() as f64 * self.dk()).expect("conjugate of a valid grid")
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn length(&self) -> f64 {
        self.inner.length
    }

    pub fn dx(&self) -> f64 {
        self.inner.dx
    }

    pub fn dk(&self) -> f64 {
        self.inner.dk
    }

    pub fn positions(&self) -> &[f64] {
        &self.inner.positions
    }

    /// Momentum values in FFT index order.
    pub fn momenta_fft(&self) -> &[f64] {
        &self.inner.momenta_fft
    }

    /// Momentum values in monotonically increasing order.
    pub fn momenta_sorted(&self) -> &[f64] {
        &self.inner.momenta_sorted
    }

    pub fn position(&self, j: usize) -> f64 {
        self.inner.positions[j]
    }

    pub fn momentum_sorted(&self, m: usize) -> f64 {
        self.inner.momenta_sorted[m]
    }

    /// Index of the lattice point closest to `x` on the position lattice.
    pub fn position_index(&self, x: f64) -> usize {
        let j = (x / self.dx() + self.n() as f64 / 2.0).round();
        j.clamp(0.0, (self.n() - 1) as f64) as usize
    }

    /// Index of the lattice point closest to `k` on the sorted momentum lattice.
    pub fn momentum_index(&self, k: f64) -> usize {
        let m = (k / self.dk() + self.n() as f64 / 2.0).round();
        m.clamp(0.0, (self.n() - 1) as f64) as usize
    }

    pub fn same_lattice(&self, other: &Grid) -> bool {
        self.n() == other.n()
            && (self.length() - other.length()).abs() <= 1e-12 * self.length().max(1.0)
    }

    pub fn require_same_lattice(&self, other: &Grid, what: &str) -> Result<()> {
        if self.same_lattice(other) {
            Ok(())
        } else {
            Err(Error::IncompatibleLattices(format!(
                "{what}: (n={}, L={}) vs (n={}, L={})",
                self.n(),
                self.length(),
                other.n(),
                other.length()
            )))
        }
    }
}
