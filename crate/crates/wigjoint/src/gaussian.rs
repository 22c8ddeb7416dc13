//! Gaussian states, detector-pair preparations, and their closed forms.
//!
//! A [`GaussianState`] is a single mode described by first and second
//! moments. Component ordering is positional: for system states the
//! components are `(Q, K)`, for detector modes `(I, Phi)` where `I` is the
//! pointer readout (momentum-like) and `Phi` the coupling variable
//! (position-like, `[Phi, I] = i`).
//!
//! A [`DetectorPairState`] is the joint preparation of the two pointers. The
//! 4-vector ordering is `(I_Q, Phi_Q, I_K, Phi_K)` throughout.

use crate::error::{Error, Result};
use crate::fourier::{upsample2x_2d, C64};
use crate::grid::Grid;
use crate::state::{DensityMatrix, PureState};
use crate::wigner::{wigner_moments, wigner_transform, WignerFunction};
use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use ndarray::Array2;
use std::f64::consts::PI;

/// How the two pointer couplings are ordered in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementOrdering {
    Simultaneous,
    KFirst,
    QFirst,
}

impl MeasurementOrdering {
    /// Arguments `(chi_Q, i_Q, chi_K, i_K)` at which the detector
    /// quasi-characteristic function enters the joint characteristic
    /// function for this ordering.
    pub fn detector_args(&self, chi_q: f64, chi_k: f64) -> [f64; 4] {
        match self {
            MeasurementOrdering::Simultaneous => [chi_q, chi_k / 2.0, chi_k, -chi_q / 2.0],
            MeasurementOrdering::KFirst => [chi_q, 0.0, chi_k, -chi_q],
            MeasurementOrdering::QFirst => [chi_q, chi_k, chi_k, 0.0],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            MeasurementOrdering::Simultaneous => "simultaneous",
            MeasurementOrdering::KFirst => "k-first",
            MeasurementOrdering::QFirst => "q-first",
        }
    }

    /// Rows of the linear map from `(I_Q', Phi_Q', I_K', Phi_K')` to the
    /// additive outcome noise `(A, B)` with `I_Q = Q' + A`, `I_K = K' + B`.
    pub fn noise_rows(&self) -> ([f64; 4], [f64; 4]) {
        match self {
            MeasurementOrdering::Simultaneous => {
                ([1.0, 0.0, 0.0, -0.5], [0.0, 0.5, 1.0, 0.0])
            }
            MeasurementOrdering::KFirst => ([1.0, 0.0, 0.0, -1.0], [0.0, 0.0, 1.0, 0.0]),
            MeasurementOrdering::QFirst => ([1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 1.0, 0.0]),
        }
    }
}

/// Single-mode Gaussian state: mean 2-vector and 2x2 covariance.
#[derive(Debug, Clone, Copy)]
pub struct GaussianState {
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
}

impl GaussianState {
    pub fn new(mean: [f64; 2], var0: f64, var1: f64, cov01: f64) -> Result<Self> {
        let det = var0 * var1 - cov01 * cov01;
        if !(var0 > 0.0 && var1 > 0.0 && det > 0.0) {
            return Err(Error::BadCovariance(format!(
                "not positive definite: var0={var0}, var1={var1}, cov={cov01}"
            )));
        }
        if det < 0.25 - 1e-12 {
            return Err(Error::UncertaintyViolation(det));
        }
        Ok(Self {
            mean,
            cov: [[var0, cov01], [cov01, var1]],
        })
    }

    /// Ground state: both variances 1/2, no correlation.
    pub fn vacuum() -> Self {
        Self::new([0.0, 0.0], 0.5, 0.5, 0.0).unwrap()
    }

    /// Minimum-uncertainty state with `Var(X0) = s/2`, `Var(X1) = 1/(2s)`.
    pub fn squeezed(s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "squeeze parameter must be positive, got {s}"
            )));
        }
        Self::new([0.0, 0.0], s / 2.0, 1.0 / (2.0 * s), 0.0)
    }

    pub fn with_mean(mut self, mean: [f64; 2]) -> Self {
        self.mean = mean;
        self
    }

    pub fn mean(&self) -> [f64; 2] {
        self.mean
    }

    pub fn cov(&self) -> [[f64; 2]; 2] {
        self.cov
    }

    pub fn det_cov(&self) -> f64 {
        self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[0][1]
    }

    pub fn is_pure(&self) -> bool {
        (self.det_cov() - 0.25).abs() <= 1e-9
    }

    /// `E[e^{i(u0 X0 + u1 X1)}]`.
    pub fn characteristic(&self, u0: f64, u1: f64) -> C64 {
        let phase = u0 * self.mean[0] + u1 * self.mean[1];
        let quad = self.cov[0][0] * u0 * u0
            + 2.0 * self.cov[0][1] * u0 * u1
            + self.cov[1][1] * u1 * u1;
        C64::from_polar((-0.5 * quad).exp(), phase)
    }

    /// Probability density at `(x0, x1)`.
    pub fn density(&self, x0: f64, x1: f64) -> f64 {
        let det = self.det_cov();
        let d0 = x0 - self.mean[0];
        let d1 = x1 - self.mean[1];
        let quad =
            (self.cov[1][1] * d0 * d0 - 2.0 * self.cov[0][1] * d0 * d1 + self.cov[0][0] * d1 * d1)
                / det;
        (-0.5 * quad).exp() / (2.0 * PI * det.sqrt())
    }
}

/// Closed-form Wigner function of a system Gaussian state (components
/// `(Q, K)`) sampled on `grid`.
pub fn gaussian_wigner(g: &GaussianState, grid: &Grid) -> Result<WignerFunction> {
    let n = grid.n();
    let mut values = Array2::<f64>::zeros((n, n));
    for b in 0..n {
        let k = grid.momentum_sorted(b);
        for a in 0..n {
            let q = grid.position(a);
            values[[b, a]] = g.density(q, k);
        }
    }
    WignerFunction::from_real(grid.clone(), values)
}

/// Density kernel of a Gaussian state whose phase-space density over
/// (momentum `p`, position `x`) has the given moments. Valid for mixed
/// states; the kernel is the analytic `int dp e^{ipq} W(p, x)`.
fn gaussian_density_kernel(
    grid: &Grid,
    mean_x: f64,
    mean_p: f64,
    var_x: f64,
    var_p: f64,
    cov_xp: f64,
) -> Result<DensityMatrix> {
    let det = var_p * var_x - cov_xp * cov_xp;
    if det <= 0.0 {
        return Err(Error::BadCovariance(format!(
            "not positive definite: det = {det}"
        )));
    }
    // inverse covariance over (p, x)
    let a = var_x / det;
    let b = -cov_xp / det;
    let c = var_p / det;
    let n = grid.n();
    let norm = (1.0 / (2.0 * PI * det.sqrt())) * (2.0 * PI / a).sqrt();
    let mut elements = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let x = grid.position(i);
            let xp = grid.position(j);
            let q = x - xp;
            let dx_mid = 0.5 * (x + xp) - mean_x;
            let real = -q * q / (2.0 * a) + (b * b / a - c) * dx_mid * dx_mid / 2.0;
            let imag = mean_p * q - q * b * dx_mid / a;
            elements[[i, j]] = C64::from_polar(norm * real.exp(), imag);
        }
    }
    DensityMatrix::new(grid.clone(), elements)
}

impl GaussianState {
    /// Render a system Gaussian (components `(Q, K)`) as a density kernel.
    pub fn render_system_density(&self, grid: &Grid) -> Result<DensityMatrix> {
        gaussian_density_kernel(
            grid,
            self.mean[0],
            self.mean[1],
            self.cov[0][0],
            self.cov[1][1],
            self.cov[0][1],
        )
    }

    /// Render a pointer-mode Gaussian (components `(I, Phi)`) as a density
    /// kernel in the `Phi` representation.
    pub fn render_pointer_density(&self, grid: &Grid) -> Result<DensityMatrix> {
        gaussian_density_kernel(
            grid,
            self.mean[1],
            self.mean[0],
            self.cov[1][1],
            self.cov[0][0],
            self.cov[0][1],
        )
    }

    /// Pure-state wavefunction of a system Gaussian; requires
    /// `det(cov) = 1/4`.
    pub fn render_system_wavefunction(&self, grid: &Grid) -> Result<PureState> {
        self.render_wavefunction(grid, 0)
    }

    /// Pure-state wavefunction of a pointer mode in the `Phi` representation.
    pub fn render_pointer_wavefunction(&self, grid: &Grid) -> Result<PureState> {
        self.render_wavefunction(grid, 1)
    }

    fn render_wavefunction(&self, grid: &Grid, position_component: usize) -> Result<PureState> {
        if !self.is_pure() {
            return Err(Error::InvalidArgument(format!(
                "wavefunction render requires a pure Gaussian, det(cov) = {}",
                self.det_cov()
            )));
        }
        let (x0, p0, var_x, cov_xp) = if position_component == 0 {
            (self.mean[0], self.mean[1], self.cov[0][0], self.cov[0][1])
        } else {
            (self.mean[1], self.mean[0], self.cov[1][1], self.cov[0][1])
        };
        let a_re = 1.0 / (2.0 * var_x);
        let a_im = -cov_xp / var_x;
        let amplitudes = grid
            .positions()
            .iter()
            .map(|&x| {
                let d = x - x0;
                C64::from_polar((-a_re * d * d / 2.0).exp(), -a_im * d * d / 2.0 + p0 * d)
            })
            .collect();
        PureState::from_amplitudes(grid.clone(), amplitudes)
    }
}

/// Joint preparation of the two pointer modes.
#[derive(Debug, Clone)]
pub enum DetectorRepr {
    /// Zero-width limit: the detector quasi-characteristic function is 1.
    Ideal,
    /// Independent Gaussian modes.
    GaussianProduct {
        mode_q: GaussianState,
        mode_k: GaussianState,
    },
    /// Joint 4-mode Gaussian over `(I_Q, Phi_Q, I_K, Phi_K)`.
    GaussianJoint {
        mean: Vector4<f64>,
        cov: Matrix4<f64>,
    },
    /// Independent gridded modes in the `Phi` representation. Mode `Q` must
    /// live on the conjugate of the system grid, mode `K` on the system grid.
    GriddedProduct {
        mode_q: DensityMatrix,
        mode_k: DensityMatrix,
    },
}

#[derive(Debug, Clone)]
pub struct DetectorPairState {
    repr: DetectorRepr,
}

impl DetectorPairState {
    pub fn ideal() -> Self {
        Self {
            repr: DetectorRepr::Ideal,
        }
    }

    pub fn gaussian_product(mode_q: GaussianState, mode_k: GaussianState) -> Self {
        Self {
            repr: DetectorRepr::GaussianProduct { mode_q, mode_k },
        }
    }

    pub fn vacuum() -> Self {
        Self::gaussian_product(GaussianState::vacuum(), GaussianState::vacuum())
    }

    /// Both pointers squeezed: `Var(I) = s/2`, `Var(Phi) = 1/(2s)`.
    pub fn squeezed(s: f64) -> Result<Self> {
        Ok(Self::gaussian_product(
            GaussianState::squeezed(s)?,
            GaussianState::squeezed(s)?,
        ))
    }

    pub fn gaussian_joint(mean: [f64; 4], cov: [[f64; 4]; 4]) -> Result<Self> {
        let m = Matrix4::from_fn(|i, j| cov[i][j]);
        let asym = (m - m.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(Error::BadCovariance(format!(
                "covariance not symmetric, residue {asym:.3e}"
            )));
        }
        if nalgebra::Cholesky::new(m).is_none() {
            return Err(Error::BadCovariance(
                "4x4 covariance not positive definite".into(),
            ));
        }
        for (i, j, label) in [(0usize, 1usize, "Q"), (2, 3, "K")] {
            let det = cov[i][i] * cov[j][j] - cov[i][j] * cov[i][j];
            if det < 0.25 - 1e-12 {
                return Err(Error::UncertaintyViolation(det));
            }
            let _ = label;
        }
        Ok(Self {
            repr: DetectorRepr::GaussianJoint {
                mean: Vector4::from_row_slice(&mean),
                cov: m,
            },
        })
    }

    /// Pure correlated pair `psi(Phi_Q, Phi_K) ~ exp(-(Phi_Q^2 + Phi_K^2)/2
    /// - i g Phi_Q Phi_K)`: each pointer reads `Var(I) = (1 + g^2)/2`,
    /// `Var(Phi) = 1/2`, with cross-covariances
    /// `Cov(I_Q, Phi_K) = Cov(I_K, Phi_Q) = -g/2`.
    pub fn correlated_pure(g: f64) -> Result<Self> {
        let vi = (1.0 + g * g) / 2.0;
        let c = -g / 2.0;
        let cov = [
            [vi, 0.0, 0.0, c],
            [0.0, 0.5, c, 0.0],
            [0.0, c, vi, 0.0],
            [c, 0.0, 0.0, 0.5],
        ];
        Self::gaussian_joint([0.0; 4], cov)
    }

    /// Gridded product modes; `mode_q` lives on `system_grid.conjugate()` and
    /// `mode_k` on `system_grid` (checked when tables are built).
    pub fn gridded_product(mode_q: DensityMatrix, mode_k: DensityMatrix) -> Self {
        Self {
            repr: DetectorRepr::GriddedProduct { mode_q, mode_k },
        }
    }

    pub fn repr(&self) -> &DetectorRepr {
        &self.repr
    }

    pub fn is_ideal(&self) -> bool {
        matches!(self.repr, DetectorRepr::Ideal)
    }

    pub fn is_gaussian_family(&self) -> bool {
        !matches!(self.repr, DetectorRepr::GriddedProduct { .. })
    }

    /// First moments `(<I_Q>, <Phi_Q>, <I_K>, <Phi_K>)`. The ideal detector
    /// contributes nothing.
    pub fn mean4(&self) -> [f64; 4] {
        match &self.repr {
            DetectorRepr::Ideal => [0.0; 4],
            DetectorRepr::GaussianProduct { mode_q, mode_k } => {
                let mq = mode_q.mean();
                let mk = mode_k.mean();
                [mq[0], mq[1], mk[0], mk[1]]
            }
            DetectorRepr::GaussianJoint { mean, .. } => [mean[0], mean[1], mean[2], mean[3]],
            DetectorRepr::GriddedProduct { mode_q, mode_k } => {
                let (mq, mk) = (mode_moments(mode_q), mode_moments(mode_k));
                [mq.0, mq.1, mk.0, mk.1]
            }
        }
    }

    /// Symmetrized second central moments over `(I_Q, Phi_Q, I_K, Phi_K)`.
    pub fn cov4(&self) -> [[f64; 4]; 4] {
        match &self.repr {
            DetectorRepr::Ideal => [[0.0; 4]; 4],
            DetectorRepr::GaussianProduct { mode_q, mode_k } => {
                let mut cov = [[0.0; 4]; 4];
                let cq = mode_q.cov();
                let ck = mode_k.cov();
                for i in 0..2 {
                    for j in 0..2 {
                        cov[i][j] = cq[i][j];
                        cov[2 + i][2 + j] = ck[i][j];
                    }
                }
                cov
            }
            DetectorRepr::GaussianJoint { cov, .. } => {
                let mut out = [[0.0; 4]; 4];
                for i in 0..4 {
                    for j in 0..4 {
                        out[i][j] = cov[(i, j)];
                    }
                }
                out
            }
            DetectorRepr::GriddedProduct { mode_q, mode_k } => {
                let mut cov = [[0.0; 4]; 4];
                let (_, _, vq_i, vq_p, cq) = mode_second_moments(mode_q);
                let (_, _, vk_i, vk_p, ck) = mode_second_moments(mode_k);
                cov[0][0] = vq_i;
                cov[1][1] = vq_p;
                cov[0][1] = cq;
                cov[1][0] = cq;
                cov[2][2] = vk_i;
                cov[3][3] = vk_p;
                cov[2][3] = ck;
                cov[3][2] = ck;
                cov
            }
        }
    }

    /// Closed-form detector quasi-characteristic value
    /// `E[e^{i(chi_Q I_Q + i_Q Phi_Q + chi_K I_K + i_K Phi_K)}]` — Gaussian
    /// family only; gridded modes go through [`Self::factor_table`].
    pub fn z_factor(&self, args: [f64; 4]) -> Result<C64> {
        match &self.repr {
            DetectorRepr::Ideal => Ok(C64::new(1.0, 0.0)),
            DetectorRepr::GaussianProduct { mode_q, mode_k } => {
                Ok(mode_q.characteristic(args[0], args[1])
                    * mode_k.characteristic(args[2], args[3]))
            }
            DetectorRepr::GaussianJoint { mean, cov } => {
                let u = Vector4::new(args[0], args[1], args[2], args[3]);
                let phase = u.dot(mean);
                let quad = (cov * u).dot(&u);
                Ok(C64::from_polar((-0.5 * quad).exp(), phase))
            }
            DetectorRepr::GriddedProduct { .. } => Err(Error::UnsupportedDetector(
                "pointwise z_factor is only available for Gaussian-family detectors",
            )),
        }
    }

    /// Detector factor sampled on the joint characteristic lattice:
    /// entry `[a, b]` is the factor at `chi_K = q_a`, `chi_Q = k_b` with the
    /// argument shifts of `ordering`.
    pub fn factor_table(
        &self,
        sys_grid: &Grid,
        ordering: MeasurementOrdering,
    ) -> Result<Array2<C64>> {
        let n = sys_grid.n();
        match &self.repr {
            DetectorRepr::GriddedProduct { mode_q, mode_k } => {
                check_pointer_grids(sys_grid, mode_q.grid(), mode_k.grid())?;
                gridded_factor_table(sys_grid, mode_q, mode_k, ordering)
            }
            _ => {
                let mut table = Array2::<C64>::zeros((n, n));
                for a in 0..n {
                    let chi_k = sys_grid.position(a);
                    for b in 0..n {
                        let chi_q = sys_grid.momentum_sorted(b);
                        table[[a, b]] = self.z_factor(ordering.detector_args(chi_q, chi_k))?;
                    }
                }
                Ok(table)
            }
        }
    }

    /// Distribution of the additive outcome noise `(A, B)` with
    /// `I_Q = Q' + A`, `I_K = K' + B` for the simultaneous coupling, on the
    /// outcome lattice, indexed `[b_index (B, momentum lattice), a_index
    /// (A, position lattice)]`. `None` for the ideal (delta-noise) detector.
    pub fn noise_kernel(&self, sys_grid: &Grid) -> Result<Option<Array2<f64>>> {
        self.noise_kernel_ordered(sys_grid, MeasurementOrdering::Simultaneous)
    }

    /// Outcome-noise kernel with the kick structure of an explicit coupling
    /// order.
    pub fn noise_kernel_ordered(
        &self,
        sys_grid: &Grid,
        ordering: MeasurementOrdering,
    ) -> Result<Option<Array2<f64>>> {
        let (ra, rb) = ordering.noise_rows();
        match &self.repr {
            DetectorRepr::Ideal => Ok(None),
            DetectorRepr::GriddedProduct { mode_q, mode_k } => {
                check_pointer_grids(sys_grid, mode_q.grid(), mode_k.grid())?;
                Ok(Some(gridded_noise_kernel(
                    sys_grid, mode_q, mode_k, ordering,
                )?))
            }
            _ => {
                let m = self.mean4();
                let c = self.cov4();
                let dot = |r: &[f64; 4]| r.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>();
                let quad = |x: &[f64; 4], y: &[f64; 4]| {
                    let mut s = 0.0;
                    for i in 0..4 {
                        for j in 0..4 {
                            s += x[i] * c[i][j] * y[j];
                        }
                    }
                    s
                };
                let gauss = GaussianState::new(
                    [dot(&ra), dot(&rb)],
                    quad(&ra, &ra),
                    quad(&rb, &rb),
                    quad(&ra, &rb),
                )
                .map_err(|_| {
                    Error::BadCovariance("degenerate outcome-noise covariance".into())
                })?;
                let n = sys_grid.n();
                let mut kernel = Array2::<f64>::zeros((n, n));
                for b in 0..n {
                    let noise_b = sys_grid.momentum_sorted(b);
                    for a in 0..n {
                        let noise_a = sys_grid.position(a);
                        kernel[[b, a]] = gauss.density(noise_a, noise_b);
                    }
                }
                Ok(Some(kernel))
            }
        }
    }

    /// Joint distribution of `(Phi_Q, Phi_K)`, indexed
    /// `[phi_q (momentum lattice), phi_k (position lattice)]`; this is the
    /// back-action kick distribution. `None` for the ideal detector.
    pub fn phi_marginal(&self, sys_grid: &Grid) -> Result<Option<Array2<f64>>> {
        let n = sys_grid.n();
        match &self.repr {
            DetectorRepr::Ideal => Ok(None),
            DetectorRepr::GriddedProduct { mode_q, mode_k } => {
                check_pointer_grids(sys_grid, mode_q.grid(), mode_k.grid())?;
                let dq = mode_q.position_density();
                let dk = mode_k.position_density();
                let mut out = Array2::<f64>::zeros((n, n));
                for i in 0..n {
                    for j in 0..n {
                        out[[i, j]] = dq[i] * dk[j];
                    }
                }
                Ok(Some(out))
            }
            _ => {
                let m = self.mean4();
                let c = self.cov4();
                let gauss = GaussianState::new([m[1], m[3]], c[1][1], c[3][3], c[1][3])
                    .map_err(|_| Error::BadCovariance("degenerate Phi marginal".into()))?;
                let mut out = Array2::<f64>::zeros((n, n));
                for i in 0..n {
                    let phi_q = sys_grid.momentum_sorted(i);
                    for j in 0..n {
                        let phi_k = sys_grid.position(j);
                        out[[i, j]] = gauss.density(phi_q, phi_k);
                    }
                }
                Ok(Some(out))
            }
        }
    }

    /// Density of the 4-mode Wigner function at an arbitrary phase-space
    /// point (Gaussian family only).
    pub fn wigner4_density(&self, v: [f64; 4]) -> Result<f64> {
        match &self.repr {
            DetectorRepr::Ideal => Err(Error::UnsupportedDetector(
                "ideal detectors have a singular Wigner function",
            )),
            DetectorRepr::GaussianProduct { mode_q, mode_k } => {
                Ok(mode_q.density(v[0], v[1]) * mode_k.density(v[2], v[3]))
            }
            DetectorRepr::GaussianJoint { mean, cov } => {
                let chol = nalgebra::Cholesky::new(*cov)
                    .ok_or_else(|| Error::BadCovariance("4x4 not positive definite".into()))?;
                let d = Vector4::new(v[0], v[1], v[2], v[3]) - mean;
                let solved = chol.solve(&d);
                let quad = d.dot(&solved);
                let det = chol.determinant();
                Ok((-0.5 * quad).exp() / ((2.0 * PI).powi(2) * det.sqrt()))
            }
            DetectorRepr::GriddedProduct { .. } => Err(Error::UnsupportedDetector(
                "pointwise Wigner density is only available for Gaussian-family detectors",
            )),
        }
    }

    /// Decompose into pure pointer wavefunctions for exact-evolution use:
    /// mode Q on `grid_q` (the conjugate grid), mode K on `grid_k`.
    /// Returns the weighted ensemble of joint wavefunctions
    /// `psi[phi_q_index, phi_k_index]` plus any truncation warnings.
    pub fn render_wavefunctions(
        &self,
        grid_q: &Grid,
        grid_k: &Grid,
        max_components: usize,
    ) -> Result<(Vec<(f64, Array2<C64>)>, Vec<String>)> {
        let mut warnings = Vec::new();
        let ensembles = match &self.repr {
            DetectorRepr::Ideal => {
                return Err(Error::UnsupportedDetector(
                    "the ideal (zero-width) detector has no Hilbert-space representation",
                ))
            }
            DetectorRepr::GaussianProduct { mode_q, mode_k } => {
                let eq = mode_ensemble(mode_q, grid_q, max_components, &mut warnings)?;
                let ek = mode_ensemble(mode_k, grid_k, max_components, &mut warnings)?;
                product_ensemble(&eq, &ek)
            }
            DetectorRepr::GriddedProduct { mode_q, mode_k } => {
                grid_q.require_same_lattice(mode_q.grid(), "gridded detector Q")?;
                grid_k.require_same_lattice(mode_k.grid(), "gridded detector K")?;
                let eq = gridded_ensemble(mode_q, max_components, &mut warnings)?;
                let ek = gridded_ensemble(mode_k, max_components, &mut warnings)?;
                product_ensemble(&eq, &ek)
            }
            DetectorRepr::GaussianJoint { mean, cov } => {
                vec![(1.0, joint_pure_wavefunction(mean, cov, grid_q, grid_k)?)]
            }
        };
        Ok((ensembles, warnings))
    }
}

fn mode_moments(rho: &DensityMatrix) -> (f64, f64) {
    // (<I>, <Phi>) for a pointer mode stored in the Phi representation
    let mean_phi = rho.position_moment(1);
    let mean_i = rho.momentum_moment(1);
    (mean_i, mean_phi)
}

fn mode_second_moments(rho: &DensityMatrix) -> (f64, f64, f64, f64, f64) {
    let w = wigner_transform(rho).expect("pointer mode transforms");
    let t = wigner_moments(&w, 2).expect("order 2");
    // Wigner axes are (momentum = I, position = Phi)
    (
        t.mean_k(),
        t.mean_q(),
        t.var_k(),
        t.var_q(),
        t.cov_qk(),
    )
}

fn check_pointer_grids(sys: &Grid, grid_q: &Grid, grid_k: &Grid) -> Result<()> {
    let conj = sys.conjugate();
    conj.require_same_lattice(grid_q, "pointer Q must live on the conjugate grid")?;
    sys.require_same_lattice(grid_k, "pointer K must live on the system grid")?;
    Ok(())
}

/// Detector factor table for gridded product modes. The first argument of
/// each mode's quasi-characteristic function is a lattice offset of its
/// density kernel; the second is evaluated as an exact trigonometric sum, so
/// the half-step arguments cost no interpolation error.
fn gridded_factor_table(
    sys_grid: &Grid,
    mode_q: &DensityMatrix,
    mode_k: &DensityMatrix,
    ordering: MeasurementOrdering,
) -> Result<Array2<C64>> {
    let n = sys_grid.n();
    // args[0] = chi_Q pairs with mode Q offsets, args[2] = chi_K with mode K.
    let zq = gridded_mode_table(mode_q, n, |a, b| {
        let chi_q = sys_grid.momentum_sorted(b);
        let chi_k = sys_grid.position(a);
        let args = ordering.detector_args(chi_q, chi_k);
        (b, args[1])
    })?;
    let zk = gridded_mode_table(mode_k, n, |a, b| {
        let chi_q = sys_grid.momentum_sorted(b);
        let chi_k = sys_grid.position(a);
        let args = ordering.detector_args(chi_q, chi_k);
        (a, args[3])
    })?;
    let mut table = Array2::<C64>::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            table[[a, b]] = zq[[a, b]] * zk[[a, b]];
        }
    }
    Ok(table)
}

/// For each `(a, b)` evaluate `Z_mode(chi, i)` where `chi` is the lattice
/// offset selected by `select` and `i` the continuous second argument.
fn gridded_mode_table(
    rho: &DensityMatrix,
    n: usize,
    select: impl Fn(usize, usize) -> (usize, f64),
) -> Result<Array2<C64>> {
    let g = rho.grid();
    if g.n() != n {
        return Err(Error::IncompatibleLattices(format!(
            "pointer grid size {} vs system {n}",
            g.n()
        )));
    }
    let step = g.dx();
    let mut diags = Vec::with_capacity(n);
    for idx in 0..n {
        let j = idx as isize - (n / 2) as isize;
        let mut diag = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let i2 = (i as isize - j).rem_euclid(n as isize) as usize;
            diag[i] = rho.elements()[[i, i2]];
        }
        diags.push(diag);
    }
    let mut out = Array2::<C64>::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            let (chi_idx, i_arg) = select(a, b);
            let chi = (chi_idx as f64 - n as f64 / 2.0) * step;
            let mut sum = C64::new(0.0, 0.0);
            for (x_idx, &v) in diags[chi_idx].iter().enumerate() {
                let phi = g.position(x_idx);
                sum += v * C64::from_polar(1.0, i_arg * phi);
            }
            out[[a, b]] = sum * step * C64::from_polar(1.0, -i_arg * chi / 2.0);
        }
    }
    Ok(out)
}

/// Outcome-noise kernel for gridded product modes:
/// `N(A, B) = int dPhi_Q dPhi_K W_Q(A - cA Phi_K, Phi_Q) W_K(B - cB Phi_Q, Phi_K)`
/// where `(cA, cB)` are the ordering's kick coefficients. The coefficients
/// are half-integers, so the shifts are sampled exactly from band-limited
/// doublings of the mode Wigner functions.
fn gridded_noise_kernel(
    sys_grid: &Grid,
    mode_q: &DensityMatrix,
    mode_k: &DensityMatrix,
    ordering: MeasurementOrdering,
) -> Result<Array2<f64>> {
    let n = sys_grid.n();
    let (ra, rb) = ordering.noise_rows();
    // twice the kick coefficients: integers on the doubled lattice
    let ca2 = (2.0 * ra[3]) as isize;
    let cb2 = (2.0 * rb[1]) as isize;
    let wq_fine = mode_wigner_fine_axis0(mode_q)?;
    let wk_fine = mode_wigner_fine_axis0(mode_k)?;
    let d_phi_q = mode_q.grid().dx();
    let d_phi_k = mode_k.grid().dx();
    let mut kernel = Array2::<f64>::zeros((n, n));
    let ni = n as isize;
    for b in 0..n {
        for a in 0..n {
            let mut acc = 0.0;
            for phi_q in 0..n {
                // fine index of B - cB Phi_Q on mode K's I axis
                let ik = 2 * (b as isize - ni / 2) - cb2 * (phi_q as isize - ni / 2) + ni;
                if !(0..2 * ni).contains(&ik) {
                    continue;
                }
                for phi_k in 0..n {
                    let iq =
                        2 * (a as isize - ni / 2) - ca2 * (phi_k as isize - ni / 2) + ni;
                    if !(0..2 * ni).contains(&iq) {
                        continue;
                    }
                    acc += wq_fine[[iq as usize, phi_q]] * wk_fine[[ik as usize, phi_k]];
                }
            }
            kernel[[b, a]] = acc * d_phi_q * d_phi_k;
        }
    }
    Ok(kernel)
}

/// Mode Wigner function with the I axis (axis 0) doubled by band-limited
/// interpolation: shape `(2n, n)`.
pub(crate) fn mode_wigner_fine_axis0(rho: &DensityMatrix) -> Result<Array2<f64>> {
    let w = wigner_transform(rho)?;
    let g = rho.grid();
    let complex = w.values().mapv(|v| C64::new(v, 0.0));
    let fine = upsample2x_2d(&complex, (g.dk(), g.dx()));
    let n = g.n();
    let mut out = Array2::<f64>::zeros((2 * n, n));
    for i in 0..2 * n {
        for j in 0..n {
            out[[i, j]] = fine[[i, 2 * j]].re;
        }
    }
    Ok(out)
}

fn mode_ensemble(
    mode: &GaussianState,
    grid: &Grid,
    max_components: usize,
    warnings: &mut Vec<String>,
) -> Result<Vec<(f64, Vec<C64>)>> {
    if mode.is_pure() {
        let psi = mode.render_pointer_wavefunction(grid)?;
        Ok(vec![(1.0, psi.amplitudes().to_vec())])
    } else {
        let rho = mode.render_pointer_density(grid)?;
        gridded_ensemble(&rho, max_components, warnings)
    }
}

fn gridded_ensemble(
    rho: &DensityMatrix,
    max_components: usize,
    warnings: &mut Vec<String>,
) -> Result<Vec<(f64, Vec<C64>)>> {
    let (comps, dropped) = rho.eigendecompose(1e-12);
    if comps.len() > max_components {
        return Err(Error::ComponentCountExceeded {
            got: comps.len(),
            limit: max_components,
        });
    }
    if dropped > 0.0 {
        warnings.push(format!(
            "dropped detector spectral weight {dropped:.3e} below 1e-12; weights renormalized"
        ));
    }
    Ok(comps
        .into_iter()
        .map(|(w, psi)| (w, psi.amplitudes().to_vec()))
        .collect())
}

fn product_ensemble(
    eq: &[(f64, Vec<C64>)],
    ek: &[(f64, Vec<C64>)],
) -> Vec<(f64, Array2<C64>)> {
    let mut out = Vec::with_capacity(eq.len() * ek.len());
    for (wq, aq) in eq {
        for (wk, ak) in ek {
            let mut joint = Array2::<C64>::zeros((aq.len(), ak.len()));
            for (i, &a) in aq.iter().enumerate() {
                for (j, &b) in ak.iter().enumerate() {
                    joint[[i, j]] = a * b;
                }
            }
            out.push((wq * wk, joint));
        }
    }
    out
}

/// Reconstruct the pure joint wavefunction of a minimum-uncertainty 4-mode
/// Gaussian and sample it on the pointer grids.
fn joint_pure_wavefunction(
    mean: &Vector4<f64>,
    cov: &Matrix4<f64>,
    grid_q: &Grid,
    grid_k: &Grid,
) -> Result<Array2<C64>> {
    // Blocks over (Phi_Q, Phi_K) and the Phi-I cross block.
    let x = Matrix2::new(cov[(1, 1)], cov[(1, 3)], cov[(3, 1)], cov[(3, 3)]);
    let c = Matrix2::new(cov[(1, 0)], cov[(1, 2)], cov[(3, 0)], cov[(3, 2)]);
    let p = Matrix2::new(cov[(0, 0)], cov[(0, 2)], cov[(2, 0)], cov[(2, 2)]);
    let x_inv = x
        .try_inverse()
        .ok_or_else(|| Error::BadCovariance("Phi block not invertible".into()))?;
    let v_re = x_inv * 0.5;
    let v_im = -x_inv * c;
    let asym = (v_im - v_im.transpose()).abs().max();
    if asym > 1e-9 {
        return Err(Error::BadCovariance(format!(
            "covariance is not a pure Gaussian (asymmetric phase matrix, residue {asym:.3e})"
        )));
    }
    let p_pred = (v_re + v_im * (v_re.try_inverse().unwrap()) * v_im) * 0.5;
    let purity_residue = (p_pred - p).abs().max();
    if purity_residue > 1e-9 {
        return Err(Error::BadCovariance(format!(
            "exact evolution needs a pure joint Gaussian; momentum block mismatch {purity_residue:.3e}"
        )));
    }
    let mu_phi = Vector2::new(mean[1], mean[3]);
    let mu_i = Vector2::new(mean[0], mean[2]);
    let nq = grid_q.n();
    let nk = grid_k.n();
    let mut psi = Array2::<C64>::zeros((nq, nk));
    for i in 0..nq {
        for j in 0..nk {
            let d = Vector2::new(grid_q.position(i) - mu_phi[0], grid_k.position(j) - mu_phi[1]);
            let re = -0.5 * (v_re * d).dot(&d);
            let im = -0.5 * (v_im * d).dot(&d) + mu_i.dot(&d);
            psi[[i, j]] = C64::from_polar(re.exp(), im);
        }
    }
    let norm: f64 = psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid_q.dx() * grid_k.dx();
    let scale = 1.0 / norm.sqrt();
    Ok(psi.mapv(|v| v * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{coherent_state, density_from_pure};
    use crate::wigner::quasi_characteristic;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_state_invariants() {
        assert!(GaussianState::new([0.0, 0.0], 0.5, 0.5, 0.0).is_ok());
        assert!(matches!(
            GaussianState::new([0.0, 0.0], 0.3, 0.3, 0.0),
            Err(Error::UncertaintyViolation(_))
        ));
        assert!(GaussianState::new([0.0, 0.0], -1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn vacuum_wigner_matches_transform() {
        let grid = Grid::new(64, 20.0).unwrap();
        let analytic = gaussian_wigner(&GaussianState::vacuum(), &grid).unwrap();
        let rho = density_from_pure(&coherent_state(&grid, 0.0, 0.0, 1.0).unwrap());
        let numeric = wigner_transform(&rho).unwrap();
        let mut max = 0.0f64;
        for (a, b) in analytic.values().iter().zip(numeric.values().iter()) {
            max = max.max((a - b).abs());
        }
        assert!(max < 1e-10, "residue {max}");
    }

    #[test]
    fn displaced_gaussian_peaks_at_mean() {
        let grid = Grid::new(64, 20.0).unwrap();
        let g = GaussianState::vacuum().with_mean([2.0, 1.0]);
        let w = gaussian_wigner(&g, &grid).unwrap();
        let mut best = (0usize, 0usize, f64::MIN);
        for b in 0..grid.n() {
            for a in 0..grid.n() {
                if w.at(b, a) > best.2 {
                    best = (b, a, w.at(b, a));
                }
            }
        }
        assert_abs_diff_eq!(grid.momentum_sorted(best.0), 1.0, epsilon = grid.dk());
        assert_abs_diff_eq!(grid.position(best.1), 2.0, epsilon = grid.dx());
    }

    #[test]
    fn correlated_gaussian_moments_survive_rendering() {
        let grid = Grid::new(64, 20.0).unwrap();
        let g = GaussianState::new([0.5, -0.3], 0.6, 0.7, 0.3).unwrap();
        let rho = g.render_system_density(&grid).unwrap();
        let w = wigner_transform(&rho).unwrap();
        let t = wigner_moments(&w, 2).unwrap();
        assert_abs_diff_eq!(t.mean_q(), 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(t.mean_k(), -0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(t.var_q(), 0.6, epsilon = 1e-8);
        assert_abs_diff_eq!(t.var_k(), 0.7, epsilon = 1e-8);
        assert_abs_diff_eq!(t.cov_qk(), 0.3, epsilon = 1e-8);
    }

    #[test]
    fn pure_gaussian_wavefunction_matches_density() {
        let grid = Grid::new(64, 20.0).unwrap();
        // pure squeezed state with correlation: det = 1/4
        let vx = 0.4;
        let c = 0.15;
        let vp = (0.25 + c * c) / vx;
        let g = GaussianState::new([0.7, -0.2], vx, vp, c).unwrap();
        assert!(g.is_pure());
        let psi = g.render_system_wavefunction(&grid).unwrap();
        let from_psi = density_from_pure(&psi);
        let direct = g.render_system_density(&grid).unwrap();
        let mut max = 0.0f64;
        for (a, b) in from_psi.elements().iter().zip(direct.elements().iter()) {
            max = max.max((a - b).norm());
        }
        assert!(max < 1e-9, "wavefunction/density mismatch {max}");
    }

    #[test]
    fn detector_blocks_validation() {
        assert!(DetectorPairState::gaussian_joint(
            [0.0; 4],
            [
                [0.5, 0.0, 0.0, -0.125],
                [0.0, 0.5, -0.125, 0.0],
                [0.0, -0.125, 0.5, 0.0],
                [-0.125, 0.0, 0.0, 0.5],
            ],
        )
        .is_ok());
        // block det below 1/4
        assert!(matches!(
            DetectorPairState::gaussian_joint(
                [0.0; 4],
                [
                    [0.3, 0.0, 0.0, 0.0],
                    [0.0, 0.5, 0.0, 0.0],
                    [0.0, 0.0, 0.5, 0.0],
                    [0.0, 0.0, 0.0, 0.5],
                ],
            ),
            Err(Error::UncertaintyViolation(_))
        ));
    }

    #[test]
    fn correlated_pure_moments() {
        let det = DetectorPairState::correlated_pure(0.5).unwrap();
        let c = det.cov4();
        assert_abs_diff_eq!(c[0][0], 0.625, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1][1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(c[0][3], -0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(c[2][1], -0.25, epsilon = 1e-12);
    }

    #[test]
    fn correlated_pure_renders_with_matching_covariance() {
        let g = 0.5;
        let det = DetectorPairState::correlated_pure(g).unwrap();
        let grid = Grid::symmetric(32).unwrap();
        let (ens, warnings) = det
            .render_wavefunctions(&grid.conjugate(), &grid, 16)
            .unwrap();
        assert!(warnings.is_empty());
        assert_eq!(ens.len(), 1);
        let psi = &ens[0].1;
        // check <Phi_Q Phi_K> = 0 and Var(Phi) = 1/2 directly
        let gq = grid.conjugate();
        let mut var_q = 0.0;
        let mut cross = 0.0;
        for i in 0..gq.n() {
            for j in 0..grid.n() {
                let p = psi[[i, j]].norm_sqr() * gq.dx() * grid.dx();
                var_q += gq.position(i).powi(2) * p;
                cross += gq.position(i) * grid.position(j) * p;
            }
        }
        assert_abs_diff_eq!(var_q, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(cross, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn gridded_factor_table_matches_gaussian_closed_form() {
        // Render vacuum pointers onto grids and compare the gridded table
        // against the analytic Gaussian factor.
        let sys = Grid::symmetric(64).unwrap();
        let vac = GaussianState::vacuum();
        let rho_q = vac.render_pointer_density(&sys.conjugate()).unwrap();
        let rho_k = vac.render_pointer_density(&sys).unwrap();
        let gridded = DetectorPairState::gridded_product(rho_q, rho_k);
        let analytic = DetectorPairState::vacuum();
        for ordering in [
            MeasurementOrdering::Simultaneous,
            MeasurementOrdering::KFirst,
            MeasurementOrdering::QFirst,
        ] {
            let tg = gridded.factor_table(&sys, ordering).unwrap();
            let ta = analytic.factor_table(&sys, ordering).unwrap();
            let mut max = 0.0f64;
            for (a, b) in tg.iter().zip(ta.iter()) {
                max = max.max((a - b).norm());
            }
            assert!(max < 1e-8, "{} residue {max}", ordering.label());
        }
    }

    #[test]
    fn gridded_noise_kernel_matches_gaussian() {
        let sys = Grid::symmetric(64).unwrap();
        let s = GaussianState::squeezed(0.8).unwrap();
        let rho_q = s.render_pointer_density(&sys.conjugate()).unwrap();
        let rho_k = s.render_pointer_density(&sys).unwrap();
        let gridded = DetectorPairState::gridded_product(rho_q, rho_k);
        let analytic = DetectorPairState::gaussian_product(s, s);
        let ng = gridded.noise_kernel(&sys).unwrap().unwrap();
        let na = analytic.noise_kernel(&sys).unwrap().unwrap();
        let mut max = 0.0f64;
        for (a, b) in ng.iter().zip(na.iter()) {
            max = max.max((a - b).abs());
        }
        assert!(max < 1e-8, "noise kernel residue {max}");
    }

    #[test]
    fn pointer_mode_quasi_characteristic_orientation() {
        // A pointer state rendered in the Phi representation must have its
        // I-moments generated by the q axis of the quasi-characteristic
        // function (momentum-like first component).
        let grid = Grid::new(64, 20.0).unwrap();
        let mode = GaussianState::new([0.4, -0.2], 0.5, 0.5, 0.0).unwrap();
        let rho = mode.render_pointer_density(&grid).unwrap();
        let z = quasi_characteristic(&rho);
        let c = grid.n() / 2;
        // for a Gaussian state Im ln Z(q, 0) = <I> q exactly
        let dq = grid.dx();
        let mean_i = z.at(c + 1, c).ln().im / dq;
        assert_abs_diff_eq!(mean_i, 0.4, epsilon = 1e-8);
        let dk = grid.dk();
        let mean_phi = z.at(c, c + 1).ln().im / dk;
        assert_abs_diff_eq!(mean_phi, -0.2, epsilon = 1e-8);
    }
}
