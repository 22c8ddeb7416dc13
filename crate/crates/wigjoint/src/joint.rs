//! Joint outcome statistics for simultaneous (or sequential) pointer
//! measurements of the conjugate pair, via two independent routes:
//!
//! * the characteristic-function product
//!   `Z(chi_K, chi_Q) = Z_S(chi_K, chi_Q) * Z_det(...)` with the
//!   ordering-dependent argument shifts, inverted by a 2-D FFT, and
//! * the phase-space convolution of the system Wigner function with the
//!   detector outcome-noise kernel.
//!
//! Axis convention everywhere: axis 0 is the K-side variable
//! (`chi_K` on the position-spacing lattice, `I_K` on the momentum lattice),
//! axis 1 the Q-side (`chi_Q` momentum-spacing, `I_Q` position lattice).

use crate::error::{Error, Result};
use crate::fourier::{centered_ft, centered_ft_2d, Sign, C64};
use crate::gaussian::{DetectorPairState, GaussianState, MeasurementOrdering};
use crate::grid::Grid;
use crate::state::DensityMatrix;
use crate::wigner::{wigner_moments, QuasiCharacteristic, WignerFunction};
use ndarray::Array2;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Which computational path produced a [`JointDistribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    CharacteristicProduct,
    WignerConvolution,
    Oracle,
    ClassicalMonteCarlo,
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::CharacteristicProduct => "characteristic-product",
            Provenance::WignerConvolution => "wigner-convolution",
            Provenance::Oracle => "oracle",
            Provenance::ClassicalMonteCarlo => "classical-monte-carlo",
        }
    }
}

/// `Z(chi_K, chi_Q)` together with the two factors it was built from.
#[derive(Debug, Clone)]
pub struct JointCharacteristic {
    grid: Grid,
    values: Array2<C64>,
    system_values: Array2<C64>,
    detector_values: Array2<C64>,
    ordering: MeasurementOrdering,
}

impl JointCharacteristic {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `values[[a, b]]` at `chi_K = q_a` (position-spacing lattice) and
    /// `chi_Q = k_b` (momentum-spacing lattice).
    pub fn values(&self) -> &Array2<C64> {
        &self.values
    }

    pub fn system_values(&self) -> &Array2<C64> {
        &self.system_values
    }

    pub fn detector_values(&self) -> &Array2<C64> {
        &self.detector_values
    }

    pub fn ordering(&self) -> MeasurementOrdering {
        self.ordering
    }

    pub fn at_origin(&self) -> C64 {
        let c = self.grid.n() / 2;
        self.values[[c, c]]
    }

    /// Max-norm difference to another characteristic on the same lattice.
    pub fn max_abs_diff(&self, other: &JointCharacteristic) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).norm()))
    }

    /// Marginal outcome distribution from the axis slice of Z:
    /// `chi_K = 0` gives the `I_Q` marginal, `chi_Q = 0` the `I_K` marginal.
    pub fn axis_distribution(&self, which: Observable) -> Distribution1d {
        let n = self.grid.n();
        let c = n / 2;
        match which {
            Observable::Q => {
                let slice: Vec<C64> = (0..n).map(|b| self.values[[c, b]]).collect();
                let inv = centered_ft(&slice, self.grid.dk(), Sign::Minus);
                Distribution1d {
                    axis: self.grid.positions().to_vec(),
                    values: inv.iter().map(|v| v.re / (2.0 * PI)).collect(),
                    step: self.grid.dx(),
                }
            }
            Observable::K => {
                let slice: Vec<C64> = (0..n).map(|a| self.values[[a, c]]).collect();
                let inv = centered_ft(&slice, self.grid.dx(), Sign::Minus);
                Distribution1d {
                    axis: self.grid.momenta_sorted().to_vec(),
                    values: inv.iter().map(|v| v.re / (2.0 * PI)).collect(),
                    step: self.grid.dk(),
                }
            }
        }
    }
}

/// Joint characteristic function for the simultaneous measurement.
pub fn joint_characteristic(
    zs: &QuasiCharacteristic,
    det: &DetectorPairState,
) -> Result<JointCharacteristic> {
    sequential_characteristic(zs, det, MeasurementOrdering::Simultaneous)
}

/// Joint characteristic function with an explicit coupling order.
pub fn sequential_characteristic(
    zs: &QuasiCharacteristic,
    det: &DetectorPairState,
    ordering: MeasurementOrdering,
) -> Result<JointCharacteristic> {
    let grid = zs.grid().clone();
    let system_values = zs.values().clone();
    let detector_values = det.factor_table(&grid, ordering)?;
    let values = &system_values * &detector_values;
    let c = grid.n() / 2;
    let origin = values[[c, c]];
    if (origin - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::BadNormalization(origin.re));
    }
    let max_mod = values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if max_mod > 1.0 + 1e-9 {
        return Err(Error::QuasiProbability(format!(
            "joint characteristic exceeds unit modulus: {max_mod}"
        )));
    }
    Ok(JointCharacteristic {
        grid,
        values,
        system_values,
        detector_values,
        ordering,
    })
}

/// Nonnegative normalized density over outcome pairs `(I_Q, I_K)`.
#[derive(Debug, Clone)]
pub struct JointDistribution {
    grid: Grid,
    values: Array2<f64>,
    provenance: Provenance,
}

impl JointDistribution {
    /// Validate positivity (`>= -1e-9`) and normalization (`1 +- 1e-8`).
    pub fn from_values(grid: Grid, values: Array2<f64>, provenance: Provenance) -> Result<Self> {
        let n = grid.n();
        if values.dim() != (n, n) {
            return Err(Error::InvalidArgument(format!(
                "joint distribution shape {:?} does not match grid size {n}",
                values.dim()
            )));
        }
        let min = values.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if min < -1e-9 {
            return Err(Error::QuasiProbability(format!(
                "joint distribution has negative value {min:.3e} (route {})",
                provenance.label()
            )));
        }
        let mass = values.sum() * grid.dx() * grid.dk();
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::BadNormalization(mass));
        }
        Ok(Self {
            grid,
            values,
            provenance,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `values[[ik_index, iq_index]]`: `I_K` on the momentum lattice,
    /// `I_Q` on the position lattice.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn at(&self, ik_index: usize, iq_index: usize) -> f64 {
        self.values[[ik_index, iq_index]]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    pub fn total_mass(&self) -> f64 {
        self.values.sum() * self.grid.dx() * self.grid.dk()
    }

    /// `<I_Q^a I_K^b>` by quadrature.
    pub fn moment(&self, a: u32, b: u32) -> f64 {
        let n = self.grid.n();
        let mut acc = 0.0;
        for ik in 0..n {
            let vk = self.grid.momentum_sorted(ik).powi(b as i32);
            for iq in 0..n {
                acc += self.grid.position(iq).powi(a as i32) * vk * self.values[[ik, iq]];
            }
        }
        acc * self.grid.dx() * self.grid.dk()
    }

    pub fn mean_iq(&self) -> f64 {
        self.moment(1, 0)
    }

    pub fn mean_ik(&self) -> f64 {
        self.moment(0, 1)
    }

    pub fn var_iq(&self) -> f64 {
        self.moment(2, 0) - self.mean_iq().powi(2)
    }

    pub fn var_ik(&self) -> f64 {
        self.moment(0, 2) - self.mean_ik().powi(2)
    }

    pub fn cov(&self) -> f64 {
        self.moment(1, 1) - self.mean_iq() * self.mean_ik()
    }

    pub fn marginal_iq(&self) -> Distribution1d {
        let n = self.grid.n();
        let values = (0..n)
            .map(|iq| (0..n).map(|ik| self.values[[ik, iq]]).sum::<f64>() * self.grid.dk())
            .collect();
        Distribution1d {
            axis: self.grid.positions().to_vec(),
            values,
            step: self.grid.dx(),
        }
    }

    pub fn marginal_ik(&self) -> Distribution1d {
        let n = self.grid.n();
        let values = (0..n)
            .map(|ik| (0..n).map(|iq| self.values[[ik, iq]]).sum::<f64>() * self.grid.dx())
            .collect();
        Distribution1d {
            axis: self.grid.momenta_sorted().to_vec(),
            values,
            step: self.grid.dk(),
        }
    }

    pub fn max_abs_diff(&self, other: &JointDistribution) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Invert a joint characteristic function to the outcome distribution.
pub fn joint_probability_from_characteristic(z: &JointCharacteristic) -> Result<JointDistribution> {
    let grid = z.grid().clone();
    let inv = centered_ft_2d(
        z.values(),
        (grid.dx(), grid.dk()),
        (Sign::Minus, Sign::Minus),
    );
    let norm = 1.0 / (2.0 * PI).powi(2);
    let imag_residue = inv.iter().fold(0.0f64, |m, v| m.max(v.im.abs())) * norm;
    if imag_residue > 1e-9 {
        return Err(Error::QuasiProbability(format!(
            "inverted characteristic has imaginary residue {imag_residue:.3e}"
        )));
    }
    JointDistribution::from_values(
        grid,
        inv.mapv(|v| v.re * norm),
        Provenance::CharacteristicProduct,
    )
}

/// Convolution route: smear the system Wigner function with the detector
/// outcome-noise kernel on the outcome lattice. The sum wraps periodically,
/// matching the lattice convention of every other transform here; for
/// contained scenarios the wrapped tails are negligible.
pub fn joint_probability(
    ws: &WignerFunction,
    det: &DetectorPairState,
) -> Result<JointDistribution> {
    joint_probability_ordered(ws, det, MeasurementOrdering::Simultaneous)
}

/// Convolution route with the kick structure of an explicit coupling order.
pub fn joint_probability_ordered(
    ws: &WignerFunction,
    det: &DetectorPairState,
    ordering: MeasurementOrdering,
) -> Result<JointDistribution> {
    let grid = ws.grid().clone();
    let n = grid.n();
    let kernel = match det.noise_kernel_ordered(&grid, ordering)? {
        None => {
            // zero-width limit: the distribution is the Wigner function
            // itself, which must be nonnegative to be a density (the
            // constructor enforces it)
            return JointDistribution::from_values(
                grid,
                ws.values().clone(),
                Provenance::WignerConvolution,
            );
        }
        Some(k) => k,
    };
    let cell = grid.dx() * grid.dk();
    let w = ws.values();
    let mut values = Array2::<f64>::zeros((n, n));
    values
        .outer_iter_mut()
        .into_par_iter()
        .enumerate()
        .for_each(|(ik, mut row)| {
            for iq in 0..n {
                let mut acc = 0.0;
                for kb in 0..n {
                    let db = (ik as isize - kb as isize + (n / 2) as isize)
                        .rem_euclid(n as isize) as usize;
                    for qa in 0..n {
                        let da = (iq as isize - qa as isize + (n / 2) as isize)
                            .rem_euclid(n as isize) as usize;
                        acc += kernel[[db, da]] * w[[kb, qa]];
                    }
                }
                row[iq] = acc * cell;
            }
        });
    JointDistribution::from_values(grid, values, Provenance::WignerConvolution)
}

/// First and second moments of the system state.
#[derive(Debug, Clone, Copy)]
pub struct SystemMoments {
    pub mean_q: f64,
    pub mean_k: f64,
    pub var_q: f64,
    pub var_k: f64,
    pub cov_qk: f64,
}

impl SystemMoments {
    pub fn from_wigner(w: &WignerFunction) -> Result<Self> {
        let t = wigner_moments(w, 2)?;
        Ok(Self {
            mean_q: t.mean_q(),
            mean_k: t.mean_k(),
            var_q: t.var_q(),
            var_k: t.var_k(),
            cov_qk: t.cov_qk(),
        })
    }

    pub fn from_gaussian(g: &GaussianState) -> Self {
        let m = g.mean();
        let c = g.cov();
        Self {
            mean_q: m[0],
            mean_k: m[1],
            var_q: c[0][0],
            var_k: c[1][1],
            cov_qk: c[0][1],
        }
    }
}

/// Closed-form outcome means:
/// `<I_Q> = <Q> + <I_Q'> - <Phi_K'>/2`, `<I_K> = <K> + <I_K'> + <Phi_Q'>/2`.
pub fn outcome_means(sys: &SystemMoments, det: &DetectorPairState) -> (f64, f64) {
    outcome_means_ordered(sys, det, MeasurementOrdering::Simultaneous)
}

pub fn outcome_means_ordered(
    sys: &SystemMoments,
    det: &DetectorPairState,
    ordering: MeasurementOrdering,
) -> (f64, f64) {
    let m = det.mean4();
    let (ra, rb) = ordering.noise_rows();
    let dot = |r: &[f64; 4]| r.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>();
    (sys.mean_q + dot(&ra), sys.mean_k + dot(&rb))
}

/// Closed-form outcome variances. The pointer kicks enter with opposite
/// signs (`Q` is shifted by `-Phi_K`, `K` by `+Phi_Q`), so the detector
/// cross-covariances do too:
///
/// ```text
/// Var(I_Q) = Var(Q) + Var(I_Q') + Var(Phi_K')/4 - Cov(I_Q', Phi_K')
/// Var(I_K) = Var(K) + Var(I_K') + Var(Phi_Q')/4 + Cov(I_K', Phi_Q')
/// ```
pub fn outcome_variances(sys: &SystemMoments, det: &DetectorPairState) -> (f64, f64) {
    outcome_variances_ordered(sys, det, MeasurementOrdering::Simultaneous)
}

pub fn outcome_variances_ordered(
    sys: &SystemMoments,
    det: &DetectorPairState,
    ordering: MeasurementOrdering,
) -> (f64, f64) {
    let c = det.cov4();
    let (ra, rb) = ordering.noise_rows();
    let quad = |x: &[f64; 4], y: &[f64; 4]| {
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                s += x[i] * c[i][j] * y[j];
            }
        }
        s
    };
    (sys.var_q + quad(&ra, &ra), sys.var_k + quad(&rb, &rb))
}

/// Closed-form outcome covariance `Cov(I_Q, I_K)`.
pub fn outcome_covariance(sys: &SystemMoments, det: &DetectorPairState) -> f64 {
    let c = det.cov4();
    sys.cov_qk + c[0][2] + c[0][1] / 2.0 - c[3][2] / 2.0 - c[3][1] / 4.0
}

/// A 1-D outcome distribution on a uniform axis.
#[derive(Debug, Clone)]
pub struct Distribution1d {
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
    pub step: f64,
}

impl Distribution1d {
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.step
    }

    pub fn moment(&self, order: u32) -> f64 {
        self.axis
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| x.powi(order as i32) * v)
            .sum::<f64>()
            * self.step
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn variance(&self) -> f64 {
        self.moment(2) - self.mean().powi(2)
    }

    pub fn max_abs_diff(&self, other: &Distribution1d) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let idx = ((x - self.axis[0]) / self.step).round() as usize;
        self.values[idx.min(self.values.len() - 1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Q,
    K,
}

/// Distribution of a single pointer measurement (the other coupling off):
/// the system marginal convolved with that pointer's readout noise.
pub fn single_measurement(
    rho: &DensityMatrix,
    det: &DetectorPairState,
    which: Observable,
) -> Result<Distribution1d> {
    let grid = rho.grid();
    let n = grid.n();
    let (axis, step, marginal): (Vec<f64>, f64, Vec<f64>) = match which {
        Observable::Q => (
            grid.positions().to_vec(),
            grid.dx(),
            rho.position_density(),
        ),
        Observable::K => (
            grid.momenta_sorted().to_vec(),
            grid.dk(),
            rho.momentum_density(),
        ),
    };
    let noise = pointer_noise_density(det, grid, which)?;
    let values = match noise {
        None => marginal,
        Some(noise) => {
            let mut out = vec![0.0; n];
            for (i, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, &m) in marginal.iter().enumerate() {
                    let d = (i as isize - j as isize + (n / 2) as isize)
                        .rem_euclid(n as isize) as usize;
                    acc += noise[d] * m;
                }
                *o = acc * step;
            }
            out
        }
    };
    Ok(Distribution1d { axis, values, step })
}

/// Readout-noise density of one pointer on the matching outcome lattice;
/// `None` in the sharp (zero-width) limit.
fn pointer_noise_density(
    det: &DetectorPairState,
    grid: &Grid,
    which: Observable,
) -> Result<Option<Vec<f64>>> {
    use crate::gaussian::DetectorRepr;
    let axis: Vec<f64> = match which {
        Observable::Q => grid.positions().to_vec(),
        Observable::K => grid.momenta_sorted().to_vec(),
    };
    match det.repr() {
        DetectorRepr::Ideal => Ok(None),
        DetectorRepr::GriddedProduct { mode_q, mode_k } => {
            let mode = match which {
                Observable::Q => mode_q,
                Observable::K => mode_k,
            };
            Ok(Some(mode.momentum_density()))
        }
        _ => {
            let m = det.mean4();
            let c = det.cov4();
            let (mean, var) = match which {
                Observable::Q => (m[0], c[0][0]),
                Observable::K => (m[2], c[2][2]),
            };
            if var <= 0.0 {
                return Err(Error::BadCovariance("pointer readout variance is 0".into()));
            }
            Ok(Some(
                axis.iter()
                    .map(|&x| {
                        (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
                    })
                    .collect(),
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// Cumulants
// ---------------------------------------------------------------------------

/// One mixed cumulant `kappa_{ab}` of `(I_Q, I_K)` with its system-only and
/// detector-only parts.
#[derive(Debug, Clone, Copy)]
pub struct CumulantEntry {
    pub a: u32,
    pub b: u32,
    pub system: f64,
    pub detector: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct CumulantTable {
    max_order: u32,
    entries: Vec<CumulantEntry>,
    richardson: bool,
    warnings: Vec<String>,
}

impl CumulantTable {
    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn entries(&self) -> &[CumulantEntry] {
        &self.entries
    }

    pub fn get(&self, a: u32, b: u32) -> Option<&CumulantEntry> {
        self.entries.iter().find(|e| e.a == a && e.b == b)
    }

    /// Whether Richardson extrapolation was applied (it is dropped when the
    /// wide stencil hits points with `|Z| < 1e-12`).
    pub fn richardson(&self) -> bool {
        self.richardson
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

// O(h^2) central-difference weights for derivative orders 0..=6; offsets run
// -(len-1)/2 ..= (len-1)/2.
const STENCILS: [&[f64]; 7] = [
    &[1.0],
    &[-0.5, 0.0, 0.5],
    &[1.0, -2.0, 1.0],
    &[-0.5, 1.0, 0.0, -1.0, 0.5],
    &[1.0, -4.0, 6.0, -4.0, 1.0],
    &[-0.5, 2.0, -2.5, 0.0, 2.5, -2.0, 0.5],
    &[1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0],
];

fn stencil_reach(order: u32) -> isize {
    (STENCILS[order as usize].len() as isize - 1) / 2
}

/// Mixed cumulants of the outcome pair from central finite differences of
/// `log Z` on the lattice, with Richardson extrapolation (stencil spacings
/// `h` and `2h`, `h` = lattice spacing). The system/detector split applies
/// the same stencil to each factor's log, so the detector contribution is
/// additive to round-off by construction.
pub fn cumulants(z: &JointCharacteristic, max_order: u32) -> Result<CumulantTable> {
    if max_order == 0 || max_order > 6 {
        return Err(Error::InvalidArgument(format!(
            "cumulant order must be in 1..=6, got {max_order}"
        )));
    }
    let grid = z.grid();
    let n = grid.n() as isize;
    let c = n / 2;
    let reach_h = stencil_reach(max_order);
    let mut warnings = Vec::new();

    let mut richardson = true;
    let mut patch_reach = 2 * reach_h;
    if c - patch_reach < 0 || c + patch_reach >= n {
        richardson = false;
        patch_reach = reach_h;
    }
    let floor = 1e-12;
    let valid = |reach: isize| -> bool {
        for da in -reach..=reach {
            for db in -reach..=reach {
                let v = z.values()[[(c + da) as usize, (c + db) as usize]];
                if v.norm() < floor {
                    return false;
                }
            }
        }
        true
    };
    if richardson && !valid(patch_reach) {
        warnings.push(format!(
            "|Z| below {floor:.0e} inside the Richardson stencil; falling back to the plain stencil"
        ));
        richardson = false;
        patch_reach = reach_h;
    }
    if !valid(patch_reach) {
        return Err(Error::CumulantStencil(format!(
            "|Z| below {floor:.0e} inside the minimal stencil"
        )));
    }

    // branch-tracked logs of the total, the system factor, the detector factor
    let logs: Vec<Array2<C64>> = [z.values(), z.system_values(), z.detector_values()]
        .iter()
        .map(|arr| unwrapped_log_patch(arr, c, patch_reach))
        .collect();

    let h_k = grid.dx();
    let h_q = grid.dk();
    let mut entries = Vec::new();
    let mut imag_residue = 0.0f64;
    for a in 0..=max_order {
        for b in 0..=(max_order - a) {
            if a + b == 0 {
                continue;
            }
            let mut parts = [0.0; 3];
            for (slot, log) in logs.iter().enumerate() {
                let d = if richardson {
                    let d1 = mixed_derivative(log, patch_reach, a, b, h_q, h_k, 1);
                    let d2 = mixed_derivative(log, patch_reach, a, b, h_q, h_k, 2);
                    (d1 * 4.0 - d2) / 3.0
                } else {
                    mixed_derivative(log, patch_reach, a, b, h_q, h_k, 1)
                };
                // kappa = (1/i)^(a+b) d^(a+b) log Z / dchi_Q^a dchi_K^b
                let kappa = d * C64::new(0.0, -1.0).powu(a + b);
                imag_residue = imag_residue.max(kappa.im.abs());
                parts[slot] = kappa.re;
            }
            entries.push(CumulantEntry {
                a,
                b,
                total: parts[0],
                system: parts[1],
                detector: parts[2],
            });
        }
    }
    if imag_residue > 1e-8 {
        warnings.push(format!(
            "cumulant imaginary residue {imag_residue:.3e} exceeds 1e-8"
        ));
    }
    for e in &entries {
        let gap = (e.total - e.system - e.detector).abs();
        if gap > 1e-6 {
            return Err(Error::CumulantStencil(format!(
                "additivity violated at kappa_{}{}: |total - (system + detector)| = {gap:.3e}",
                e.a, e.b
            )));
        }
    }
    Ok(CumulantTable {
        max_order,
        entries,
        richardson,
        warnings,
    })
}

/// Principal log with the phase unwrapped outward from the patch center, so
/// linear mean-phases do not alias across branch cuts.
fn unwrapped_log_patch(values: &Array2<C64>, c: isize, reach: isize) -> Array2<C64> {
    let size = (2 * reach + 1) as usize;
    let mut out = Array2::<C64>::zeros((size, size));
    let mid = reach as usize;
    let val = |da: isize, db: isize| values[[(c + da) as usize, (c + db) as usize]];
    let unwrap = |prev: f64, raw: f64| {
        let mut arg = raw;
        while arg - prev > PI {
            arg -= 2.0 * PI;
        }
        while arg - prev < -PI {
            arg += 2.0 * PI;
        }
        arg
    };
    let mut row_args = vec![0.0f64; size];
    row_args[mid] = val(0, 0).arg();
    for step in 1..=reach {
        let s = step as usize;
        row_args[mid + s] = unwrap(row_args[mid + s - 1], val(0, step).arg());
        row_args[mid - s] = unwrap(row_args[mid - s + 1], val(0, -step).arg());
    }
    for (col, &base) in row_args.iter().enumerate() {
        let db = col as isize - reach;
        out[[mid, col]] = C64::new(val(0, db).norm().ln(), base);
        let mut prev = base;
        for step in 1..=reach {
            let arg = unwrap(prev, val(step, db).arg());
            out[[mid + step as usize, col]] = C64::new(val(step, db).norm().ln(), arg);
            prev = arg;
        }
        prev = base;
        for step in 1..=reach {
            let arg = unwrap(prev, val(-step, db).arg());
            out[[mid - step as usize, col]] = C64::new(val(-step, db).norm().ln(), arg);
            prev = arg;
        }
    }
    out
}

/// Tensor-product central difference `d^a/dchi_Q^a d^b/dchi_K^b` of a log
/// patch (axis 0 = chi_K, axis 1 = chi_Q) at step multiple `scale`.
fn mixed_derivative(
    log: &Array2<C64>,
    reach: isize,
    a: u32,
    b: u32,
    h_q: f64,
    h_k: f64,
    scale: isize,
) -> C64 {
    let wa = STENCILS[a as usize];
    let wb = STENCILS[b as usize];
    let ra = (wa.len() as isize - 1) / 2;
    let rb = (wb.len() as isize - 1) / 2;
    let mid = reach;
    let mut acc = C64::new(0.0, 0.0);
    for (ia, &ca) in wa.iter().enumerate() {
        if ca == 0.0 {
            continue;
        }
        let da = (ia as isize - ra) * scale;
        for (ib, &cb) in wb.iter().enumerate() {
            if cb == 0.0 {
                continue;
            }
            let db = (ib as isize - rb) * scale;
            // axis 0 of the patch is chi_K (power b), axis 1 chi_Q (power a)
            acc += log[[(mid + db) as usize, (mid + da) as usize]] * (ca * cb);
        }
    }
    let ha = (h_q * scale as f64).powi(a as i32);
    let hb = (h_k * scale as f64).powi(b as i32);
    acc / (ha * hb)
}

// ---------------------------------------------------------------------------
// Uncertainty-product scan
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct ScanPoint {
    pub squeeze: f64,
    pub var_iq: f64,
    pub var_ik: f64,
    pub product: f64,
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
    pub min_product: f64,
    pub argmin_squeeze: f64,
}

/// Scan Gaussian product detectors over a squeezing range and report the
/// minimized uncertainty product `sqrt(Var(I_Q) Var(I_K))`.
pub fn arthurs_kelly_scan(system: &GaussianState, squeezes: &[f64]) -> Result<ScanResult> {
    if squeezes.is_empty() {
        return Err(Error::InvalidArgument("empty squeeze range".into()));
    }
    let sys = SystemMoments::from_gaussian(system);
    let mut points = Vec::with_capacity(squeezes.len());
    let mut best: Option<ScanPoint> = None;
    for &s in squeezes {
        let det = DetectorPairState::squeezed(s)?;
        let (var_iq, var_ik) = outcome_variances(&sys, &det);
        let point = ScanPoint {
            squeeze: s,
            var_iq,
            var_ik,
            product: (var_iq * var_ik).sqrt(),
        };
        points.push(point);
        if best.is_none() || point.product < best.unwrap().product {
            best = Some(point);
        }
    }
    let best = best.unwrap();
    Ok(ScanResult {
        points,
        min_product: best.product,
        argmin_squeeze: best.squeeze,
    })
}
