//! Transforms between density matrices, Wigner functions, and
//! quasi-characteristic functions, plus phase-space moments.
//!
//! Conventions fixed here and used everywhere else:
//!
//! * `W(K, Q)` is stored as `values[[k_index, q_index]]` with both axes in
//!   monotonically increasing order (momentum-like axis first).
//! * `Z(q, k) = Tr[rho e^{i(q K_hat + k Q_hat)}]` is stored as
//!   `values[[q_index, k_index]]`; `q` lives on the position-spacing lattice
//!   and `k` on the momentum-spacing lattice, so the two types are exact
//!   2-D Fourier duals on the grid:
//!   `Z(q, k) = int dQ dK e^{i(k Q + q K)} W(K, Q)`.
//! * `Z(0, chi)` therefore generates position-density moments and
//!   `Z(chi, 0)` momentum-density moments; the marginal tests below pin this
//!   orientation.
//!
//! Half-step offsets `rho(Q + q/2, Q - q/2)` are never interpolated on the
//! lattice: the diagonal route applies them as exact Fourier phase factors,
//! and the quadrature route samples a band-limited doubling of the grid.

use crate::error::{Error, Result};
use crate::fourier::{centered_ft, centered_ft_2d, upsample2x_2d, Sign, C64};
use crate::grid::Grid;
use crate::state::DensityMatrix;
use ndarray::Array2;
use std::f64::consts::PI;

/// Real-valued quasi-probability on the `(K, Q)` lattice.
#[derive(Debug, Clone)]
pub struct WignerFunction {
    grid: Grid,
    values: Array2<f64>,
    origin_offset: (f64, f64),
}

impl WignerFunction {
    /// Validate a complex-valued transform result: the imaginary residue must
    /// be below 1e-10 and the total mass within 1e-8 of 1.
    pub fn try_new(grid: Grid, complex_values: Array2<C64>) -> Result<Self> {
        let imag_residue = complex_values
            .iter()
            .fold(0.0f64, |a, v| a.max(v.im.abs()));
        if imag_residue > 1e-10 {
            return Err(Error::QuasiProbability(format!(
                "Wigner transform has imaginary residue {imag_residue:.3e}"
            )));
        }
        Self::from_real(grid, complex_values.mapv(|v| v.re))
    }

    /// Validate a real array as a normalized quasi-probability.
    pub fn from_real(grid: Grid, values: Array2<f64>) -> Result<Self> {
        let n = grid.n();
        if values.dim() != (n, n) {
            return Err(Error::InvalidArgument(format!(
                "Wigner array shape {:?} does not match grid size {n}",
                values.dim()
            )));
        }
        let mass: f64 = values.sum() * grid.dx() * grid.dk();
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::BadNormalization(mass));
        }
        let origin_offset = (grid.momenta_sorted()[0], grid.positions()[0]);
        Ok(Self {
            grid,
            values,
            origin_offset,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `values[[k_index, q_index]]`, both axes sorted ascending.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// `(K, Q)` coordinates of index `(0, 0)`.
    pub fn origin_offset(&self) -> (f64, f64) {
        self.origin_offset
    }

    pub fn at(&self, k_index: usize, q_index: usize) -> f64 {
        self.values[[k_index, q_index]]
    }

    /// Position marginal `int W dK` on the position lattice.
    pub fn position_marginal(&self) -> Vec<f64> {
        let n = self.grid.n();
        (0..n)
            .map(|a| (0..n).map(|b| self.values[[b, a]]).sum::<f64>() * self.grid.dk())
            .collect()
    }

    /// Momentum marginal `int W dQ` on the sorted momentum lattice.
    pub fn momentum_marginal(&self) -> Vec<f64> {
        let n = self.grid.n();
        (0..n)
            .map(|b| (0..n).map(|a| self.values[[b, a]]).sum::<f64>() * self.grid.dx())
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.values.sum() * self.grid.dx() * self.grid.dk()
    }

    /// `int |min(W, 0)| dQ dK`.
    pub fn negativity_volume(&self) -> f64 {
        self.values
            .iter()
            .filter(|v| **v < 0.0)
            .map(|v| -v)
            .sum::<f64>()
            * self.grid.dx()
            * self.grid.dk()
    }
}

/// Complex-valued `Z(q, k)` on the conjugate lattice.
#[derive(Debug, Clone)]
pub struct QuasiCharacteristic {
    grid: Grid,
    values: Array2<C64>,
}

impl QuasiCharacteristic {
    pub(crate) fn from_parts(grid: Grid, values: Array2<C64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `values[[q_index, k_index]]`; `q` on the position-spacing lattice,
    /// `k` on the momentum-spacing lattice, both sorted ascending.
    pub fn values(&self) -> &Array2<C64> {
        &self.values
    }

    pub fn q_values(&self) -> &[f64] {
        self.grid.positions()
    }

    pub fn k_values(&self) -> &[f64] {
        self.grid.momenta_sorted()
    }

    pub fn at(&self, q_index: usize, k_index: usize) -> C64 {
        self.values[[q_index, k_index]]
    }

    /// Value at the lattice origin; 1 for a unit-trace input.
    pub fn at_origin(&self) -> C64 {
        let c = self.grid.n() / 2;
        self.values[[c, c]]
    }
}

/// `Z(q, k) = e^{-ikq/2} int dx e^{ikx} rho(x, x - q)`, evaluated with the
/// lattice diagonals of `rho` and exact phase factors.
pub fn quasi_characteristic(rho: &DensityMatrix) -> QuasiCharacteristic {
    let grid = rho.grid().clone();
    let n = grid.n();
    let dx = grid.dx();
    let mut values = Array2::<C64>::zeros((n, n));
    let mut diag = vec![C64::new(0.0, 0.0); n];
    for j_idx in 0..n {
        let j = j_idx as isize - (n / 2) as isize;
        let q = j as f64 * dx;
        for i in 0..n {
            let i2 = (i as isize - j).rem_euclid(n as isize) as usize;
            diag[i] = rho.elements()[[i, i2]];
        }
        let row = centered_ft(&diag, dx, Sign::Plus);
        for (m, v) in row.into_iter().enumerate() {
            let k = grid.momentum_sorted(m);
            values[[j_idx, m]] = v * C64::from_polar(1.0, -k * q / 2.0);
        }
    }
    QuasiCharacteristic::from_parts(grid, values)
}

/// `W(K, Q) = (2pi)^{-1} int dq e^{-iKq} rho(Q + q/2, Q - q/2)` via a
/// band-limited doubling of the grid (independent of the diagonal route).
pub fn wigner_transform(rho: &DensityMatrix) -> Result<WignerFunction> {
    let grid = rho.grid().clone();
    let n = grid.n();
    let dx = grid.dx();
    let fine = upsample2x_2d(rho.elements(), (dx, dx));
    let m2 = 2 * n as isize;
    let mut complex = Array2::<C64>::zeros((n, n));
    let mut diag = vec![C64::new(0.0, 0.0); n];
    for a in 0..n {
        for j_idx in 0..n {
            let j = j_idx as isize - (n / 2) as isize;
            // periodic indexing: the lattice objects are exact discrete
            // Fourier duals only under the wrap convention
            let u = (2 * a as isize + j).rem_euclid(m2) as usize;
            let v = (2 * a as isize - j).rem_euclid(m2) as usize;
            diag[j_idx] = fine[[u, v]];
        }
        let col = centered_ft(&diag, dx, Sign::Minus);
        for (b, val) in col.into_iter().enumerate() {
            complex[[b, a]] = val / (2.0 * PI);
        }
    }
    WignerFunction::try_new(grid, complex)
}

/// Exact lattice Fourier dual of a Wigner function.
pub fn fourier_dual(w: &WignerFunction) -> QuasiCharacteristic {
    let grid = w.grid().clone();
    let complex = w.values().mapv(|v| C64::new(v, 0.0));
    let z = centered_ft_2d(
        &complex,
        (grid.dk(), grid.dx()),
        (Sign::Plus, Sign::Plus),
    );
    QuasiCharacteristic::from_parts(grid, z)
}

/// Result of inverting a Wigner function back to a density kernel. The
/// reconstruction is always Hermitian; negativity beyond tolerance is
/// reported, never repaired.
#[derive(Debug, Clone)]
pub struct InverseWigner {
    grid: Grid,
    elements: Array2<C64>,
    min_eigenvalue: f64,
}

impl InverseWigner {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn elements(&self) -> &Array2<C64> {
        &self.elements
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Whether the reconstruction passes the physical-state check.
    pub fn is_physical(&self) -> bool {
        self.min_eigenvalue >= -1e-8
    }

    pub fn purity(&self) -> f64 {
        let dx = self.grid.dx();
        self.elements.iter().map(|v| v.norm_sqr()).sum::<f64>() * dx * dx
    }

    pub fn into_density_matrix(self) -> Result<DensityMatrix> {
        if !self.is_physical() {
            return Err(Error::NotPositive(self.min_eigenvalue));
        }
        DensityMatrix::new(self.grid, self.elements)
    }
}

/// Invert `W -> rho` through the quasi-characteristic function.
pub fn inverse_wigner(w: &WignerFunction) -> InverseWigner {
    let grid = w.grid().clone();
    let n = grid.n();
    let dx = grid.dx();
    let z = fourier_dual(w);
    let mut elements = Array2::<C64>::zeros((n, n));
    let mut row = vec![C64::new(0.0, 0.0); n];
    for j_idx in 0..n {
        let j = j_idx as isize - (n / 2) as isize;
        let q = j as f64 * dx;
        for m in 0..n {
            let k = grid.momentum_sorted(m);
            row[m] = z.values()[[j_idx, m]] * C64::from_polar(1.0, k * q / 2.0);
        }
        let diag = centered_ft(&row, grid.dk(), Sign::Minus);
        for i in 0..n {
            let i2 = (i as isize - j).rem_euclid(n as isize) as usize;
            elements[[i, i2]] = diag[i] / (2.0 * PI);
        }
    }
    // The exact object is Hermitian; split the lattice-edge ambiguity and
    // round-off symmetrically.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (elements[[i, j]] + elements[[j, i]].conj()) * 0.5;
            elements[[i, j]] = avg;
            elements[[j, i]] = avg.conj();
        }
        elements[[i, i]] = C64::new(elements[[i, i]].re, 0.0);
    }
    let min_eigenvalue = min_hermitian_eigenvalue(&elements, dx);
    InverseWigner {
        grid,
        elements,
        min_eigenvalue,
    }
}

fn min_hermitian_eigenvalue(elements: &Array2<C64>, dx: f64) -> f64 {
    let n = elements.nrows();
    let mut m = nalgebra::DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            // symmetrize round-off before the eigensolve
            m[(i, j)] = (elements[[i, j]] + elements[[j, i]].conj()) * (0.5 * dx);
        }
    }
    let eig = m.symmetric_eigen();
    eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Mixed phase-space moments `<Q^a K^b>` for `a + b <= max_order`.
#[derive(Debug, Clone)]
pub struct MomentTable {
    max_order: u32,
    moments: Vec<(u32, u32, f64)>,
    truncation_warning: bool,
}

impl MomentTable {
    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn get(&self, q_power: u32, k_power: u32) -> Option<f64> {
        self.moments
            .iter()
            .find(|(a, b, _)| *a == q_power && *b == k_power)
            .map(|(_, _, v)| *v)
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.moments
    }

    /// True when the grid-truncation estimate for the highest moment
    /// exceeds 1e-6.
    pub fn truncation_warning(&self) -> bool {
        self.truncation_warning
    }

    pub fn mean_q(&self) -> f64 {
        self.get(1, 0).unwrap()
    }

    pub fn mean_k(&self) -> f64 {
        self.get(0, 1).unwrap()
    }

    pub fn var_q(&self) -> f64 {
        self.get(2, 0).unwrap() - self.mean_q().powi(2)
    }

    pub fn var_k(&self) -> f64 {
        self.get(0, 2).unwrap() - self.mean_k().powi(2)
    }

    pub fn cov_qk(&self) -> f64 {
        self.get(1, 1).unwrap() - self.mean_q() * self.mean_k()
    }
}

pub fn wigner_moments(w: &WignerFunction, max_order: u32) -> Result<MomentTable> {
    if max_order > 6 {
        return Err(Error::InvalidArgument(format!(
            "moment order {max_order} exceeds the supported maximum 6"
        )));
    }
    let grid = w.grid();
    let n = grid.n();
    let cell = grid.dx() * grid.dk();
    let mut moments = Vec::new();
    for a in 0..=max_order {
        for b in 0..=(max_order - a) {
            let mut acc = 0.0;
            for bk in 0..n {
                let k = grid.momentum_sorted(bk);
                let kb = k.powi(b as i32);
                for aq in 0..n {
                    let q = grid.position(aq);
                    acc += q.powi(a as i32) * kb * w.values()[[bk, aq]];
                }
            }
            moments.push((a, b, acc * cell));
        }
    }
    // Truncation estimate: mass on the outermost lattice ring, weighted by
    // the largest coordinate magnitude raised to the highest order.
    let reach = grid
        .position(0)
        .abs()
        .max(grid.position(n - 1).abs())
        .max(grid.momentum_sorted(0).abs())
        .max(grid.momentum_sorted(n - 1).abs());
    let mut edge = 0.0;
    for i in 0..n {
        edge += w.values()[[0, i]].abs()
            + w.values()[[n - 1, i]].abs()
            + w.values()[[i, 0]].abs()
            + w.values()[[i, n - 1]].abs();
    }
    let estimate = edge * cell * reach.powi(max_order as i32);
    Ok(MomentTable {
        max_order,
        moments,
        truncation_warning: estimate > 1e-6,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{cat_state, coherent_state, density_from_pure, fock_state, mix};
    use approx::assert_abs_diff_eq;

    fn grid() -> Grid {
        Grid::new(64, 20.0).unwrap()
    }

    fn vacuum_rho() -> DensityMatrix {
        density_from_pure(&coherent_state(&grid(), 0.0, 0.0, 1.0).unwrap())
    }

    #[test]
    fn vacuum_quasi_characteristic_closed_form() {
        let z = quasi_characteristic(&vacuum_rho());
        for (jq, &q) in z.q_values().iter().enumerate() {
            for (mk, &k) in z.k_values().to_vec().iter().enumerate() {
                let expected = (-(q * q + k * k) / 4.0).exp();
                let got = z.at(jq, mk);
                assert_abs_diff_eq!(got.re, expected, epsilon = 1e-10);
                assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn fock_one_quasi_characteristic_closed_form() {
        let rho = density_from_pure(&fock_state(&grid(), 1).unwrap());
        let z = quasi_characteristic(&rho);
        for (jq, &q) in z.q_values().iter().enumerate() {
            for (mk, &k) in z.k_values().to_vec().iter().enumerate() {
                let r2 = q * q + k * k;
                let expected = (1.0 - r2 / 2.0) * (-r2 / 4.0).exp();
                assert_abs_diff_eq!(z.at(jq, mk).re, expected, epsilon = 1e-9);
                assert_abs_diff_eq!(z.at(jq, mk).im, 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn quasi_characteristic_is_one_at_origin() {
        for rho in [
            vacuum_rho(),
            density_from_pure(&cat_state(&grid(), 2.0).unwrap()),
        ] {
            let z = quasi_characteristic(&rho);
            assert_abs_diff_eq!(z.at_origin().re, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(z.at_origin().im, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn quasi_characteristic_hermitian_symmetry_and_bound() {
        let rho = density_from_pure(&coherent_state(&grid(), 1.0, -0.7, 0.8).unwrap());
        let z = quasi_characteristic(&rho);
        let n = z.grid().n();
        for j in 1..n {
            for m in 1..n {
                let a = z.at(j, m);
                let b = z.at(n - j, n - m).conj();
                assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-10);
                assert!(a.norm() <= 1.0 + 1e-10);
            }
        }
    }

    #[test]
    fn axis_slices_generate_the_right_marginals() {
        // Z(0, chi) must be the characteristic function of the position
        // density and Z(chi, 0) that of the momentum density.
        let rho = density_from_pure(&coherent_state(&grid(), 1.2, -0.4, 1.0).unwrap());
        let z = quasi_characteristic(&rho);
        let g = rho.grid();
        let c = g.n() / 2;
        let chi_k = z.k_values()[c + 3];
        let pos_char: C64 = g
            .positions()
            .iter()
            .zip(rho.position_density())
            .map(|(&x, d)| C64::from_polar(d, chi_k * x))
            .sum::<C64>()
            * g.dx();
        let got = z.at(c, c + 3);
        assert_abs_diff_eq!((got - pos_char).norm(), 0.0, epsilon = 1e-9);

        let chi_q = z.q_values()[c + 3];
        let mom_char: C64 = g
            .momenta_sorted()
            .iter()
            .zip(rho.momentum_density())
            .map(|(&k, d)| C64::from_polar(d, chi_q * k))
            .sum::<C64>()
            * g.dk();
        let got = z.at(c + 3, c);
        assert_abs_diff_eq!((got - mom_char).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn vacuum_wigner_closed_form() {
        let w = wigner_transform(&vacuum_rho()).unwrap();
        let g = w.grid().clone();
        for b in 0..g.n() {
            for a in 0..g.n() {
                let k = g.momentum_sorted(b);
                let q = g.position(a);
                let expected = (-(q * q + k * k)).exp() / PI;
                assert_abs_diff_eq!(w.at(b, a), expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn fock_one_wigner_origin_value() {
        let rho = density_from_pure(&fock_state(&grid(), 1).unwrap());
        let w = wigner_transform(&rho).unwrap();
        let c = w.grid().n() / 2;
        assert_abs_diff_eq!(w.at(c, c), -1.0 / PI, epsilon = 1e-6);
    }

    #[test]
    fn wigner_is_linear_in_rho() {
        let g = grid();
        let rho0 = density_from_pure(&fock_state(&g, 0).unwrap());
        let rho1 = density_from_pure(&fock_state(&g, 1).unwrap());
        let mixed = mix(&[(0.5, rho0.clone()), (0.5, rho1.clone())]).unwrap();
        let w0 = wigner_transform(&rho0).unwrap();
        let w1 = wigner_transform(&rho1).unwrap();
        let wm = wigner_transform(&mixed).unwrap();
        let mut max = 0.0f64;
        for (i, v) in wm.values().iter().enumerate() {
            let expected = 0.5 * w0.values().as_slice().unwrap()[i]
                + 0.5 * w1.values().as_slice().unwrap()[i];
            max = max.max((v - expected).abs());
        }
        assert!(max < 1e-12);
    }

    #[test]
    fn marginals_match_densities() {
        let g = grid();
        let states = [
            density_from_pure(&coherent_state(&g, 1.0, 0.5, 1.0).unwrap()),
            density_from_pure(&fock_state(&g, 1).unwrap()),
            density_from_pure(&cat_state(&g, 2.0).unwrap()),
            mix(&[
                (0.5, density_from_pure(&fock_state(&g, 0).unwrap())),
                (0.5, density_from_pure(&fock_state(&g, 1).unwrap())),
            ])
            .unwrap(),
        ];
        for rho in states {
            let w = wigner_transform(&rho).unwrap();
            let pos = w.position_marginal();
            for (got, want) in pos.iter().zip(rho.position_density()) {
                assert_abs_diff_eq!(*got, want, epsilon = 1e-8);
            }
            let mom = w.momentum_marginal();
            for (got, want) in mom.iter().zip(rho.momentum_density()) {
                assert_abs_diff_eq!(*got, want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn duality_between_wigner_and_quasi_characteristic() {
        // L = 18 keeps the density kernel's spectral content at the lattice
        // Nyquist below 1e-12 for these states, so the two routes must agree
        // well inside the 1e-9 budget.
        let g = Grid::new(64, 18.0).unwrap();
        for rho in [
            density_from_pure(&fock_state(&g, 1).unwrap()),
            density_from_pure(&cat_state(&g, 1.5).unwrap()),
        ] {
            let z_direct = quasi_characteristic(&rho);
            let w = wigner_transform(&rho).unwrap();
            let z_dual = fourier_dual(&w);
            let mut max = 0.0f64;
            for (a, b) in z_direct.values().iter().zip(z_dual.values().iter()) {
                max = max.max((a - b).norm());
            }
            assert!(max < 1e-9, "duality residue {max}");
        }
    }

    #[test]
    fn wigner_round_trip_recovers_rho() {
        let rho = density_from_pure(&fock_state(&grid(), 1).unwrap());
        let w = wigner_transform(&rho).unwrap();
        let back = inverse_wigner(&w);
        assert!(back.is_physical());
        let mut max = 0.0f64;
        for (a, b) in back.elements().iter().zip(rho.elements().iter()) {
            max = max.max((a - b).norm());
        }
        assert!(max < 1e-9, "round trip residue {max}");
        assert_abs_diff_eq!(back.purity(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn minimum_uncertainty_gaussian_inverts_to_pure_state() {
        use crate::gaussian::{gaussian_wigner, GaussianState};
        let g = Grid::new(64, 20.0).unwrap();
        let pure = GaussianState::new([0.3, -0.4], 0.4, (0.25 + 0.01) / 0.4, 0.1).unwrap();
        let w = gaussian_wigner(&pure, &g).unwrap();
        let back = inverse_wigner(&w);
        assert!(back.is_physical());
        assert_abs_diff_eq!(back.purity(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn uncertainty_violating_gaussian_flags_unphysical() {
        // det(cov) = 0.15 * 0.15 < 1/4: built directly on the lattice since
        // the GaussianState constructor rejects it.
        let g = Grid::new(64, 20.0).unwrap();
        let n = g.n();
        let (vq, vk) = (0.15, 0.15);
        let mut values = Array2::<f64>::zeros((n, n));
        for b in 0..n {
            for a in 0..n {
                let k = g.momentum_sorted(b);
                let q = g.position(a);
                values[[b, a]] = (-(q * q) / (2.0 * vq) - (k * k) / (2.0 * vk)).exp()
                    / (2.0 * PI * (vq * vk).sqrt());
            }
        }
        let w = WignerFunction::from_real(g, values).unwrap();
        let back = inverse_wigner(&w);
        assert!(!back.is_physical(), "min eig {}", back.min_eigenvalue());
        assert!(back.clone().into_density_matrix().is_err());
    }

    #[test]
    fn parity_covariance() {
        let g = grid();
        for rho in [
            density_from_pure(&fock_state(&g, 1).unwrap()),
            density_from_pure(&cat_state(&g, 2.0).unwrap()),
        ] {
            let w = wigner_transform(&rho).unwrap();
            let n = g.n();
            for b in 1..n {
                for a in 1..n {
                    assert_abs_diff_eq!(
                        w.at(b, a),
                        w.at(n - b, n - a),
                        epsilon = 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn pure_state_bound_holds() {
        let g = grid();
        for rho in [
            vacuum_rho(),
            density_from_pure(&fock_state(&g, 1).unwrap()),
            density_from_pure(&cat_state(&g, 2.0).unwrap()),
        ] {
            assert!(rho.purity() > 1.0 - 1e-8);
            let w = wigner_transform(&rho).unwrap();
            let max = w.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max <= 1.0 / PI + 1e-8);
        }
    }

    #[test]
    fn moments_vacuum_and_fock() {
        let w = wigner_transform(&vacuum_rho()).unwrap();
        let t = wigner_moments(&w, 2).unwrap();
        assert_abs_diff_eq!(t.mean_q(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(t.mean_k(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(t.get(2, 0).unwrap(), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(t.get(0, 2).unwrap(), 0.5, epsilon = 1e-9);

        let rho1 = density_from_pure(&fock_state(&grid(), 1).unwrap());
        let w1 = wigner_transform(&rho1).unwrap();
        let t1 = wigner_moments(&w1, 2).unwrap();
        assert_abs_diff_eq!(t1.get(2, 0).unwrap(), 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(t1.get(0, 2).unwrap(), 1.5, epsilon = 1e-9);
    }

    #[test]
    fn third_moment_of_displaced_coherent_state() {
        // <Q^3> = q0^3 + 3 q0 Var(Q) = 8 + 3 = 11 for q0 = 2, s = 1
        let rho = density_from_pure(&coherent_state(&grid(), 2.0, 0.0, 1.0).unwrap());
        let w = wigner_transform(&rho).unwrap();
        let t = wigner_moments(&w, 3).unwrap();
        assert_abs_diff_eq!(t.get(3, 0).unwrap(), 11.0, epsilon = 1e-6);
    }

    #[test]
    fn moment_truncation_warning_on_marginal_grid() {
        // A wide mixed Gaussian whose edge ring is ~1e-8: sixth moments are
        // untrustworthy there while second moments are fine.
        use crate::gaussian::{gaussian_wigner, GaussianState};
        let g = Grid::new(32, 18.0).unwrap();
        let wide = GaussianState::new([0.0, 0.0], 2.0, 0.5, 0.0).unwrap();
        let w = gaussian_wigner(&wide, &g).unwrap();
        let t = wigner_moments(&w, 6).unwrap();
        assert!(t.truncation_warning());
        let t2 = wigner_moments(&w, 2).unwrap();
        assert!(!t2.truncation_warning());
    }
}
