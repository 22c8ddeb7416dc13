//! Pure states and density matrices on a position grid, plus the standard
//! constructor family (coherent, Fock, cat, mixtures).

use crate::error::{Error, Result};
use crate::fourier::{centered_ft, centered_ft_axis, Sign, C64};
use crate::grid::Grid;
use nalgebra::DMatrix;
use ndarray::Array2;
use std::f64::consts::PI;

/// Mass allowed in the outermost lattice cells before a state counts as
/// clipped. Keeps aliasing below the downstream oracle tolerances.
pub const CLIP_TAIL_LIMIT: f64 = 1e-10;

const EDGE_CELLS: usize = 2;

/// A normalized wavefunction in the position representation.
#[derive(Debug, Clone)]
pub struct PureState {
    grid: Grid,
    amplitudes: Vec<C64>,
}

impl PureState {
    /// Normalize and validate `amplitudes` as a wavefunction on `grid`.
    pub fn from_amplitudes(grid: Grid, amplitudes: Vec<C64>) -> Result<Self> {
        let state = Self::from_amplitudes_unchecked(grid, amplitudes)?;
        state.check_clipping()?;
        Ok(state)
    }

    pub(crate) fn from_amplitudes_unchecked(grid: Grid, mut amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != grid.n() {
            return Err(Error::InvalidArgument(format!(
                "amplitude count {} does not match grid size {}",
                amplitudes.len(),
                grid.n()
            )));
        }
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.dx();
        if !(norm_sq.is_finite() && norm_sq > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "state has non-normalizable norm^2 = {norm_sq}"
            )));
        }
        let scale = 1.0 / norm_sq.sqrt();
        for a in &mut amplitudes {
            *a *= scale;
        }
        Ok(Self { grid, amplitudes })
    }

    fn from_fn(grid: Grid, f: impl Fn(f64) -> C64) -> Result<Self> {
        let amplitudes = grid.positions().iter().map(|&x| f(x)).collect();
        Self::from_amplitudes(grid, amplitudes)
    }

    fn check_clipping(&self) -> Result<()> {
        let position_tail = edge_mass(&self.amplitudes, self.grid.dx());
        if position_tail > CLIP_TAIL_LIMIT {
            return Err(Error::StateClipped {
                mass: position_tail,
                limit: CLIP_TAIL_LIMIT,
                where_: "position lattice edge",
            });
        }
        let momentum = self.momentum_amplitudes();
        let momentum_tail = edge_mass(&momentum, self.grid.dk());
        if momentum_tail > CLIP_TAIL_LIMIT {
            return Err(Error::StateClipped {
                mass: momentum_tail,
                limit: CLIP_TAIL_LIMIT,
                where_: "momentum lattice edge",
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// Wavefunction in the momentum representation, on the sorted momentum
    /// lattice: `psi_hat(k) = (2pi)^{-1/2} int dx e^{-ikx} psi(x)`.
    pub fn momentum_amplitudes(&self) -> Vec<C64> {
        let scale = 1.0 / (2.0 * PI).sqrt();
        centered_ft(&self.amplitudes, self.grid.dx(), Sign::Minus)
            .into_iter()
            .map(|v| v * scale)
            .collect()
    }

    pub fn position_density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn momentum_density(&self) -> Vec<f64> {
        self.momentum_amplitudes()
            .iter()
            .map(|a| a.norm_sqr())
            .collect()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// `<Q^order>` by lattice quadrature.
    pub fn position_moment(&self, order: u32) -> f64 {
        self.grid
            .positions()
            .iter()
            .zip(self.position_density())
            .map(|(&x, d)| x.powi(order as i32) * d)
            .sum::<f64>()
            * self.grid.dx()
    }

    /// `<K^order>` by lattice quadrature in the momentum representation.
    pub fn momentum_moment(&self, order: u32) -> f64 {
        self.grid
            .momenta_sorted()
            .iter()
            .zip(self.momentum_density())
            .map(|(&k, d)| k.powi(order as i32) * d)
            .sum::<f64>()
            * self.grid.dk()
    }
}

/// Minimum-uncertainty Gaussian wavepacket centered at `(q0, k0)` with
/// `Var(Q) = s/2` and `Var(K) = 1/(2s)`.
pub fn coherent_state(grid: &Grid, q0: f64, k0: f64, squeeze: f64) -> Result<PureState> {
    if !(squeeze.is_finite() && squeeze > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "squeeze must be positive, got {squeeze}"
        )));
    }
    PureState::from_fn(grid.clone(), |x| {
        let d = x - q0;
        C64::from_polar((-d * d / (2.0 * squeeze)).exp(), k0 * x)
    })
}

/// `m`-th Hermite-Gaussian eigenstate of the unit oscillator.
pub fn fock_state(grid: &Grid, m: usize) -> Result<PureState> {
    PureState::from_fn(grid.clone(), |x| {
        C64::new(hermite(m, x) * (-x * x / 2.0).exp(), 0.0)
    })
}

/// Even superposition of Gaussians at `+/- q0` (a position cat state).
pub fn cat_state(grid: &Grid, q0: f64) -> Result<PureState> {
    PureState::from_fn(grid.clone(), |x| {
        let a = (-(x - q0) * (x - q0) / 2.0).exp();
        let b = (-(x + q0) * (x + q0) / 2.0).exp();
        C64::new(a + b, 0.0)
    })
}

fn hermite(m: usize, x: f64) -> f64 {
    let mut h0 = 1.0;
    if m == 0 {
        return h0;
    }
    let mut h1 = 2.0 * x;
    for k in 1..m {
        let h2 = 2.0 * x * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

fn edge_mass(amplitudes: &[C64], step: f64) -> f64 {
    let n = amplitudes.len();
    let cells = EDGE_CELLS.min(n / 4);
    let mut mass = 0.0;
    for j in 0..cells {
        mass += amplitudes[j].norm_sqr() + amplitudes[n - 1 - j].norm_sqr();
    }
    mass * step
}

/// A continuum-normalized density kernel `rho(x, x')`: Hermitian, unit trace
/// (`sum_j rho[j, j] dx = 1`), positive semidefinite.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    grid: Grid,
    elements: Array2<C64>,
}

impl DensityMatrix {
    pub fn new(grid: Grid, elements: Array2<C64>) -> Result<Self> {
        let n = grid.n();
        if elements.nrows() != n || elements.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "density matrix shape {:?} does not match grid size {n}",
                elements.dim()
            )));
        }
        let mut herm_residue = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let d = (elements[[i, j]] - elements[[j, i]].conj()).norm();
                herm_residue = herm_residue.max(d);
            }
        }
        if herm_residue > 1e-12 {
            return Err(Error::NotHermitian(herm_residue));
        }
        let trace: f64 = (0..n).map(|j| elements[[j, j]].re).sum::<f64>() * grid.dx();
        if (trace - 1.0).abs() > 1e-10 {
            return Err(Error::BadTrace(trace));
        }
        let min_eig = min_eigenvalue(&elements, grid.dx());
        if min_eig < -1e-10 {
            return Err(Error::NotPositive(min_eig));
        }
        Ok(Self { grid, elements })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn elements(&self) -> &Array2<C64> {
        &self.elements
    }

    pub fn trace(&self) -> f64 {
        (0..self.grid.n())
            .map(|j| self.elements[[j, j]].re)
            .sum::<f64>()
            * self.grid.dx()
    }

    /// `Tr(rho^2)`; equals 1 for pure states.
    pub fn purity(&self) -> f64 {
        self.elements.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.dx() * self.grid.dx()
    }

    pub fn position_density(&self) -> Vec<f64> {
        (0..self.grid.n())
            .map(|j| self.elements[[j, j]].re)
            .collect()
    }

    /// `<K|rho|K>` on the sorted momentum lattice.
    pub fn momentum_density(&self) -> Vec<f64> {
        let pass0 = centered_ft_axis(&self.elements, 0, self.grid.dx(), Sign::Minus);
        let rho_k = centered_ft_axis(&pass0, 1, self.grid.dx(), Sign::Plus);
        (0..self.grid.n())
            .map(|m| rho_k[[m, m]].re / (2.0 * PI))
            .collect()
    }

    pub fn position_moment(&self, order: u32) -> f64 {
        self.grid
            .positions()
            .iter()
            .zip(self.position_density())
            .map(|(&x, d)| x.powi(order as i32) * d)
            .sum::<f64>()
            * self.grid.dx()
    }

    pub fn momentum_moment(&self, order: u32) -> f64 {
        self.grid
            .momenta_sorted()
            .iter()
            .zip(self.momentum_density())
            .map(|(&k, d)| k.powi(order as i32) * d)
            .sum::<f64>()
            * self.grid.dk()
    }

    /// Spectral decomposition into weighted pure states, discarding
    /// eigenvalues below `drop_tol`. Weights are renormalized to sum to 1;
    /// the discarded mass is returned alongside.
    pub fn eigendecompose(&self, drop_tol: f64) -> (Vec<(f64, PureState)>, f64) {
        let n = self.grid.n();
        let dx = self.grid.dx();
        let mut m = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.elements[[i, j]] * dx;
            }
        }
        let eig = m.symmetric_eigen();
        let mut pairs: Vec<(f64, Vec<C64>)> = (0..n)
            .map(|idx| {
                let w = eig.eigenvalues[idx];
                let v: Vec<C64> = (0..n).map(|i| eig.eigenvectors[(i, idx)]).collect();
                (w, v)
            })
            .collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut kept = Vec::new();
        let mut dropped = 0.0;
        for (w, v) in pairs {
            if w >= drop_tol {
                let amplitudes: Vec<C64> = v.iter().map(|&c| c / dx.sqrt()).collect();
                let state = PureState::from_amplitudes_unchecked(self.grid.clone(), amplitudes)
                    .expect("eigenvector normalizes");
                kept.push((w, state));
            } else if w > 0.0 {
                dropped += w;
            }
        }
        let total: f64 = kept.iter().map(|(w, _)| w).sum();
        for (w, _) in &mut kept {
            *w /= total;
        }
        (kept, dropped)
    }
}

/// `rho = |psi><psi|`.
pub fn density_from_pure(psi: &PureState) -> DensityMatrix {
    let n = psi.grid().n();
    let mut elements = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            elements[[i, j]] = psi.amplitudes()[i] * psi.amplitudes()[j].conj();
        }
    }
    DensityMatrix::new(psi.grid().clone(), elements).expect("pure projector is a valid state")
}

/// Convex mixture of density matrices. Weights must be nonnegative and sum
/// to 1 within 1e-12.
pub fn mix(components: &[(f64, DensityMatrix)]) -> Result<DensityMatrix> {
    if components.is_empty() {
        return Err(Error::InvalidWeights("empty mixture".into()));
    }
    let sum: f64 = components.iter().map(|(w, _)| w).sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidWeights(format!("weights sum to {sum}")));
    }
    if let Some((w, _)) = components.iter().find(|(w, _)| *w < 0.0) {
        return Err(Error::InvalidWeights(format!("negative weight {w}")));
    }
    let grid = components[0].1.grid().clone();
    for (_, rho) in components.iter().skip(1) {
        grid.require_same_lattice(rho.grid(), "mixture components")?;
    }
    let n = grid.n();
    let mut elements = Array2::<C64>::zeros((n, n));
    for (w, rho) in components {
        elements = elements + rho.elements().mapv(|v| v * *w);
    }
    DensityMatrix::new(grid, elements)
}

fn min_eigenvalue(elements: &Array2<C64>, dx: f64) -> f64 {
    let n = elements.nrows();
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = elements[[i, j]] * dx;
        }
    }
    let eig = m.symmetric_eigen();
    eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}
