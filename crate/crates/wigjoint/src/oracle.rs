//! Brute-force ground truth: evolve the full system (x) pointer-Q (x)
//! pointer-K state through the exact interaction unitary and read joint
//! statistics and conditional states straight from the Born rule.
//!
//! The interaction `U = exp(i (Phi_Q Q + Phi_K K))` factorizes exactly as
//! `e^{i Phi_Q Q} e^{i Phi_K K} e^{+i Phi_Q Phi_K / 2}` (the commutator is
//! central), so the evolution is diagonal phase multiplications plus one FFT
//! pair on the system axis. Pointer states enter in the Phi representation,
//! where the couplings are diagonal: pointer Q lives on the conjugate of the
//! system grid and pointer K on a copy of it, so after the readout FFT the
//! `I_Q` lattice coincides with the system position lattice and `I_K` with
//! the momentum lattice.

use crate::error::{Error, Result};
use crate::fourier::{centered_ft, fft_in_place, Sign, C64};
use crate::gaussian::DetectorPairState;
use crate::grid::Grid;
use crate::joint::{JointDistribution, Provenance};
use crate::state::DensityMatrix;
use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

/// Per-factor cap on the spectral decomposition of mixed inputs.
pub const MAX_COMPONENTS: usize = 16;
/// Cap on the total pure-component ensemble.
pub const MAX_TOTAL_COMPONENTS: usize = 64;

/// Weighted ensemble of pure tripartite wavefunctions
/// `psi[system_x, phi_q, phi_k]`.
#[derive(Debug, Clone)]
pub struct CompositeState {
    sys_grid: Grid,
    grid_q: Grid,
    grid_k: Grid,
    components: Vec<(f64, Array3<C64>)>,
    warnings: Vec<String>,
}

/// Order of the two coupling factors in the exact factorization; both give
/// the same unitary when paired with their compensating central phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorOrder {
    /// `e^{i Phi_Q Q} e^{i Phi_K K} e^{+i Phi_Q Phi_K / 2}`
    QThenK,
    /// `e^{i Phi_K K} e^{i Phi_Q Q} e^{-i Phi_Q Phi_K / 2}`
    KThenQ,
}

impl CompositeState {
    /// Tensor-compose a system state with two gridded pointer states given
    /// in the Phi representation.
    pub fn compose(
        system: &DensityMatrix,
        det_q: &DensityMatrix,
        det_k: &DensityMatrix,
    ) -> Result<Self> {
        let det = DetectorPairState::gridded_product(det_q.clone(), det_k.clone());
        Self::compose_with_detectors(system, &det)
    }

    /// Compose with any detector preparation that has a Hilbert-space
    /// rendering (everything except the ideal zero-width limit).
    pub fn compose_with_detectors(
        system: &DensityMatrix,
        det: &DetectorPairState,
    ) -> Result<Self> {
        let sys_grid = system.grid().clone();
        let grid_q = sys_grid.conjugate();
        let grid_k = sys_grid.clone();
        let mut warnings = Vec::new();

        let (sys_comps, dropped) = system.eigendecompose(1e-12);
        if sys_comps.len() > MAX_COMPONENTS {
            return Err(Error::ComponentCountExceeded {
                got: sys_comps.len(),
                limit: MAX_COMPONENTS,
            });
        }
        if dropped > 0.0 {
            warnings.push(format!(
                "dropped system spectral weight {dropped:.3e} below 1e-12; weights renormalized"
            ));
        }
        let (det_comps, mut det_warnings) =
            det.render_wavefunctions(&grid_q, &grid_k, MAX_COMPONENTS)?;
        warnings.append(&mut det_warnings);

        let total = sys_comps.len() * det_comps.len();
        if total > MAX_TOTAL_COMPONENTS {
            return Err(Error::ComponentCountExceeded {
                got: total,
                limit: MAX_TOTAL_COMPONENTS,
            });
        }

        let n = sys_grid.n();
        let mut components = Vec::with_capacity(total);
        for (ws, psi_s) in &sys_comps {
            for (wd, psi_d) in &det_comps {
                let mut arr = Array3::<C64>::zeros((n, n, n));
                for (s, &amp_s) in psi_s.amplitudes().iter().enumerate() {
                    for q in 0..n {
                        for k in 0..n {
                            arr[[s, q, k]] = amp_s * psi_d[[q, k]];
                        }
                    }
                }
                components.push((ws * wd, arr));
            }
        }
        Ok(Self {
            sys_grid,
            grid_q,
            grid_k,
            components,
            warnings,
        })
    }

    pub fn sys_grid(&self) -> &Grid {
        &self.sys_grid
    }

    pub fn components(&self) -> &[(f64, Array3<C64>)] {
        &self.components
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Total norm: `sum_c w_c |psi_c|^2` with the lattice measures.
    pub fn norm(&self) -> f64 {
        let cell = self.sys_grid.dx() * self.grid_q.dx() * self.grid_k.dx();
        self.components
            .iter()
            .map(|(w, psi)| w * psi.iter().map(|v| v.norm_sqr()).sum::<f64>() * cell)
            .sum()
    }

    /// Apply the interaction unitary, exactly factorized.
    pub fn apply_interaction(&mut self) {
        self.apply_interaction_with_order(FactorOrder::QThenK)
    }

    /// Apply the couplings in an explicit time order: a sequential scheme is
    /// the plain product of the two single-pointer unitaries, with no
    /// central compensating phase.
    pub fn apply_ordered(&mut self, ordering: crate::gaussian::MeasurementOrdering) {
        use crate::gaussian::MeasurementOrdering as MO;
        match ordering {
            MO::Simultaneous => self.apply_interaction(),
            MO::KFirst | MO::QFirst => {
                let n = self.sys_grid.n();
                let phi_q: Vec<f64> = self.grid_q.positions().to_vec();
                let phi_k: Vec<f64> = self.grid_k.positions().to_vec();
                let xs: Vec<f64> = self.sys_grid.positions().to_vec();
                let km: Vec<f64> = self.sys_grid.momenta_fft().to_vec();
                for (_, psi) in &mut self.components {
                    if ordering == MO::KFirst {
                        apply_k_coupling(psi, &km, &phi_k, n);
                        apply_q_coupling(psi, &xs, &phi_q, n);
                    } else {
                        apply_q_coupling(psi, &xs, &phi_q, n);
                        apply_k_coupling(psi, &km, &phi_k, n);
                    }
                }
            }
        }
    }

    pub fn apply_interaction_with_order(&mut self, order: FactorOrder) {
        let n = self.sys_grid.n();
        let phi_q: Vec<f64> = self.grid_q.positions().to_vec();
        let phi_k: Vec<f64> = self.grid_k.positions().to_vec();
        let xs: Vec<f64> = self.sys_grid.positions().to_vec();
        let km: Vec<f64> = self.sys_grid.momenta_fft().to_vec();

        // central phase e^{+-i Phi_Q Phi_K / 2}
        let phase_sign = match order {
            FactorOrder::QThenK => 0.5,
            FactorOrder::KThenQ => -0.5,
        };
        let mut central = Array2::<C64>::zeros((n, n));
        for q in 0..n {
            for k in 0..n {
                central[[q, k]] = C64::from_polar(1.0, phase_sign * phi_q[q] * phi_k[k]);
            }
        }

        for (_, psi) in &mut self.components {
            for s in 0..n {
                for q in 0..n {
                    for k in 0..n {
                        psi[[s, q, k]] *= central[[q, k]];
                    }
                }
            }
            match order {
                FactorOrder::QThenK => {
                    apply_k_coupling(psi, &km, &phi_k, n);
                    apply_q_coupling(psi, &xs, &phi_q, n);
                }
                FactorOrder::KThenQ => {
                    apply_q_coupling(psi, &xs, &phi_q, n);
                    apply_k_coupling(psi, &km, &phi_k, n);
                }
            }
        }
    }

    /// Max-norm distance between the ensembles of two composite states.
    pub fn max_amplitude_diff(&self, other: &CompositeState) -> f64 {
        let mut max = 0.0f64;
        for ((_, a), (_, b)) in self.components.iter().zip(&other.components) {
            for (x, y) in a.iter().zip(b.iter()) {
                max = max.max((x - y).norm());
            }
        }
        max
    }

    /// Pointer axes transformed to the readout representation.
    fn readout_amplitudes(&self) -> Vec<(f64, Array3<C64>)> {
        let n = self.sys_grid.n();
        let scale = 1.0 / (2.0 * PI).sqrt();
        self.components
            .iter()
            .map(|(w, psi)| {
                let mut out = psi.clone();
                let mut lane = vec![C64::new(0.0, 0.0); n];
                for s in 0..n {
                    for k in 0..n {
                        for q in 0..n {
                            lane[q] = out[[s, q, k]];
                        }
                        let t = centered_ft(&lane, self.grid_q.dx(), Sign::Minus);
                        for q in 0..n {
                            out[[s, q, k]] = t[q] * scale;
                        }
                    }
                }
                for s in 0..n {
                    for q in 0..n {
                        for k in 0..n {
                            lane[k] = out[[s, q, k]];
                        }
                        let t = centered_ft(&lane, self.grid_k.dx(), Sign::Minus);
                        for k in 0..n {
                            out[[s, q, k]] = t[k] * scale;
                        }
                    }
                }
                (*w, out)
            })
            .collect()
    }

    /// Joint readout distribution from the Born rule.
    pub fn born_joint_distribution(&self) -> Result<JointDistribution> {
        let n = self.sys_grid.n();
        let dx = self.sys_grid.dx();
        let mut values = Array2::<f64>::zeros((n, n));
        for (w, amps) in self.readout_amplitudes() {
            for s in 0..n {
                for q in 0..n {
                    for k in 0..n {
                        values[[k, q]] += w * amps[[s, q, k]].norm_sqr() * dx;
                    }
                }
            }
        }
        JointDistribution::from_values(self.sys_grid.clone(), values, Provenance::Oracle)
    }

    /// Unconditional post-measurement reduced system state (pointers traced
    /// out in the Phi basis).
    pub fn post_measurement_density(&self) -> Result<DensityMatrix> {
        let n = self.sys_grid.n();
        let cell = self.grid_q.dx() * self.grid_k.dx();
        let mut elements = Array2::<C64>::zeros((n, n));
        for (w, psi) in &self.components {
            for q in 0..n {
                for k in 0..n {
                    for i in 0..n {
                        let a = psi[[i, q, k]];
                        if a.norm_sqr() < 1e-40 {
                            continue;
                        }
                        for j in 0..n {
                            elements[[i, j]] += a * psi[[j, q, k]].conj() * (*w * cell);
                        }
                    }
                }
            }
        }
        DensityMatrix::new(self.sys_grid.clone(), elements)
    }

    /// Reduced system state conditioned on the readouts landing in the index
    /// cell `iq_range x ik_range`, plus the cell probability.
    pub fn reduced_conditional_state(
        &self,
        iq_range: std::ops::Range<usize>,
        ik_range: std::ops::Range<usize>,
    ) -> Result<(DensityMatrix, f64)> {
        let n = self.sys_grid.n();
        let d_iq = self.sys_grid.dx();
        let d_ik = self.sys_grid.dk();
        let mut elements = Array2::<C64>::zeros((n, n));
        let mut prob = 0.0;
        for (w, amps) in self.readout_amplitudes() {
            for q in iq_range.clone() {
                for k in ik_range.clone() {
                    for i in 0..n {
                        let a = amps[[i, q, k]];
                        prob += w * a.norm_sqr() * self.sys_grid.dx() * d_iq * d_ik;
                        if a.norm_sqr() < 1e-40 {
                            continue;
                        }
                        for j in 0..n {
                            elements[[i, j]] += a * amps[[j, q, k]].conj() * (w * d_iq * d_ik);
                        }
                    }
                }
            }
        }
        if prob < 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "conditioning cell has probability {prob:.3e} below the 1e-12 floor"
            )));
        }
        let trace: f64 = (0..n).map(|i| elements[[i, i]].re).sum::<f64>() * self.sys_grid.dx();
        let elements = elements.mapv(|v| v / trace);
        let rho = DensityMatrix::new(self.sys_grid.clone(), elements)?;
        Ok((rho, prob))
    }
}

fn apply_q_coupling(psi: &mut Array3<C64>, xs: &[f64], phi_q: &[f64], n: usize) {
    for s in 0..n {
        for q in 0..n {
            let phase = C64::from_polar(1.0, xs[s] * phi_q[q]);
            for k in 0..n {
                psi[[s, q, k]] *= phase;
            }
        }
    }
}

fn apply_k_coupling(psi: &mut Array3<C64>, km: &[f64], phi_k: &[f64], n: usize) {
    // FFT the system axis, multiply e^{i Phi_K k}, transform back; the
    // centering phases cancel for diagonal multipliers.
    let mut lane = vec![C64::new(0.0, 0.0); n];
    let scale = 1.0 / n as f64;
    for q in 0..n {
        for k in 0..n {
            for s in 0..n {
                lane[s] = psi[[s, q, k]];
            }
            fft_in_place(&mut lane, false);
            for (m, v) in lane.iter_mut().enumerate() {
                *v *= C64::from_polar(1.0, km[m] * phi_k[k]);
            }
            fft_in_place(&mut lane, true);
            for s in 0..n {
                psi[[s, q, k]] = lane[s] * scale;
            }
        }
    }
}

/// Convenience pipeline: compose, evolve, read out.
pub fn oracle_joint_distribution(
    system: &DensityMatrix,
    det: &DetectorPairState,
) -> Result<JointDistribution> {
    let mut cs = CompositeState::compose_with_detectors(system, det)?;
    cs.apply_interaction();
    cs.born_joint_distribution()
}

// ---------------------------------------------------------------------------
// Classical trajectory sampler
// ---------------------------------------------------------------------------

/// A classical Gaussian phase-space distribution; unlike a quantum state its
/// covariance may be singular (zero spreads are allowed).
#[derive(Debug, Clone, Copy)]
pub struct ClassicalGaussian {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl ClassicalGaussian {
    pub fn point(q: f64, k: f64) -> Self {
        Self {
            mean: [q, k],
            cov: [[0.0; 2]; 2],
        }
    }
}

impl From<&crate::gaussian::GaussianState> for ClassicalGaussian {
    fn from(g: &crate::gaussian::GaussianState) -> Self {
        Self {
            mean: g.mean(),
            cov: g.cov(),
        }
    }
}

/// Sample the classical trajectory equations
/// `I_Q = Q' + I_Q' - Phi_K'/2`, `I_K = K' + I_K' + Phi_Q'/2`
/// with Gaussian inputs and histogram the outcomes on the lattice.
/// Deterministic under a fixed seed.
pub fn classical_monte_carlo_gaussian(
    system: &ClassicalGaussian,
    det: &DetectorPairState,
    grid: &Grid,
    samples: u64,
    seed: u64,
) -> Result<JointDistribution> {
    if !det.is_gaussian_family() {
        return Err(Error::UnsupportedDetector(
            "the classical sampler needs Gaussian-family detectors",
        ));
    }
    let sys_chol = cholesky_with_tolerance(&[
        system.cov[0][0],
        system.cov[0][1],
        system.cov[1][0],
        system.cov[1][1],
    ])?;
    let det_chol = detector_cholesky(det)?;
    let m4 = det.mean4();

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = grid.n();
    let mut counts = Array2::<f64>::zeros((n, n));
    let mut kept = 0u64;
    for _ in 0..samples {
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let q = system.mean[0] + sys_chol[0] * z0;
        let k = system.mean[1] + sys_chol[2] * z0 + sys_chol[3] * z1;
        let d = sample_detector(&m4, &det_chol, &mut rng);
        let iq = q + d[0] - d[3] / 2.0;
        let ik = k + d[2] + d[1] / 2.0;
        if let Some((bi, ai)) = bin_indices(grid, iq, ik) {
            counts[[bi, ai]] += 1.0;
            kept += 1;
        }
    }
    if (samples - kept) as f64 / samples as f64 > 1e-8 {
        return Err(Error::BadNormalization(kept as f64 / samples as f64));
    }
    let cell = grid.dx() * grid.dk();
    let values = counts.mapv(|c| c / (samples as f64 * cell));
    JointDistribution::from_values(grid.clone(), values, Provenance::ClassicalMonteCarlo)
}

/// Classical sampler over a gridded phase-space distribution; rejects inputs
/// with negative values (quasi-probabilities are not samplable).
pub fn classical_monte_carlo(
    system: &crate::wigner::WignerFunction,
    det: &DetectorPairState,
    samples: u64,
    seed: u64,
) -> Result<JointDistribution> {
    let min = system.values().iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if min < -1e-12 {
        return Err(Error::NegativeDistribution(min));
    }
    if !det.is_gaussian_family() {
        return Err(Error::UnsupportedDetector(
            "the classical sampler needs Gaussian-family detectors",
        ));
    }
    let grid = system.grid().clone();
    let n = grid.n();
    // cumulative table over cells for inverse sampling
    let mut cdf = Vec::with_capacity(n * n);
    let mut acc = 0.0;
    for b in 0..n {
        for a in 0..n {
            acc += system.values()[[b, a]].max(0.0);
            cdf.push(acc);
        }
    }
    let total = acc;
    let det_chol = detector_cholesky(det)?;
    let m4 = det.mean4();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut counts = Array2::<f64>::zeros((n, n));
    for _ in 0..samples {
        let u: f64 = rand::Rng::gen::<f64>(&mut rng) * total;
        let idx = cdf.partition_point(|&c| c < u).min(n * n - 1);
        let (b, a) = (idx / n, idx % n);
        let jq: f64 = rand::Rng::gen::<f64>(&mut rng) - 0.5;
        let jk: f64 = rand::Rng::gen::<f64>(&mut rng) - 0.5;
        let q = grid.position(a) + jq * grid.dx();
        let k = grid.momentum_sorted(b) + jk * grid.dk();
        let d = sample_detector(&m4, &det_chol, &mut rng);
        let iq = q + d[0] - d[3] / 2.0;
        let ik = k + d[2] + d[1] / 2.0;
        if let Some((bi, ai)) = bin_indices(&grid, iq, ik) {
            counts[[bi, ai]] += 1.0;
        }
    }
    let cell = grid.dx() * grid.dk();
    let values = counts.mapv(|c| c / (samples as f64 * cell));
    JointDistribution::from_values(grid, values, Provenance::ClassicalMonteCarlo)
}

fn detector_cholesky(det: &DetectorPairState) -> Result<Vec<f64>> {
    let c4 = det.cov4();
    let mut flat = [0.0; 16];
    for i in 0..4 {
        for j in 0..4 {
            flat[4 * i + j] = c4[i][j];
        }
    }
    cholesky_with_tolerance(&flat)
}

fn sample_detector(m4: &[f64; 4], chol: &[f64], rng: &mut ChaCha12Rng) -> [f64; 4] {
    let z: [f64; 4] = [
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    ];
    let mut d = [0.0; 4];
    for i in 0..4 {
        d[i] = m4[i];
        for j in 0..=i {
            d[i] += chol[4 * i + j] * z[j];
        }
    }
    d
}

fn bin_indices(grid: &Grid, iq: f64, ik: f64) -> Option<(usize, usize)> {
    let n = grid.n() as f64;
    let ai = (iq / grid.dx() + n / 2.0).round();
    let bi = (ik / grid.dk() + n / 2.0).round();
    if ai >= 0.0 && ai < n && bi >= 0.0 && bi < n {
        Some((bi as usize, ai as usize))
    } else {
        None
    }
}

/// Result of comparing an empirical histogram against a reference
/// distribution with per-bin multinomial bands.
#[derive(Debug, Clone, Copy)]
pub struct BandReport {
    pub tested_bins: usize,
    pub max_z: f64,
    pub worst_bin: (usize, usize),
}

impl BandReport {
    pub fn within(&self, z_limit: f64) -> bool {
        self.max_z <= z_limit
    }
}

/// Per-bin multinomial comparison of a sampled histogram against a smooth
/// reference. Expected counts use the cell-integrated probability (2-D
/// Simpson rule on the band-limited doubling of the reference), so the
/// midpoint-density bias does not eat into the bands. Bins with expected
/// count below `min_expected` are skipped (the normal approximation fails
/// there).
pub fn multinomial_band_report(
    reference: &JointDistribution,
    empirical: &JointDistribution,
    samples: u64,
    min_expected: f64,
) -> BandReport {
    let grid = reference.grid();
    let n = grid.n();
    let fine = crate::fourier::upsample2x_2d(
        &reference.values().mapv(|v| C64::new(v, 0.0)),
        (grid.dk(), grid.dx()),
    );
    let cell = grid.dx() * grid.dk();
    let simpson = [
        [1.0, 4.0, 1.0],
        [4.0, 16.0, 4.0],
        [1.0, 4.0, 1.0],
    ];
    let m = 2 * n as isize;
    let mut tested = 0usize;
    let mut max_z = 0.0f64;
    let mut worst = (0usize, 0usize);
    for ik in 0..n {
        for iq in 0..n {
            let mut p_cell = 0.0;
            for (di, row) in simpson.iter().enumerate() {
                for (dj, wgt) in row.iter().enumerate() {
                    let fi = (2 * ik as isize + di as isize - 1).rem_euclid(m) as usize;
                    let fj = (2 * iq as isize + dj as isize - 1).rem_euclid(m) as usize;
                    p_cell += wgt * fine[[fi, fj]].re;
                }
            }
            let p = (p_cell / 36.0 * cell).max(0.0);
            let expected = samples as f64 * p;
            if expected < min_expected {
                continue;
            }
            tested += 1;
            let observed = empirical.at(ik, iq) * cell * samples as f64;
            let sigma = (samples as f64 * p * (1.0 - p)).sqrt();
            let z = (observed - expected).abs() / sigma;
            if z > max_z {
                max_z = z;
                worst = (ik, iq);
            }
        }
    }
    BandReport {
        tested_bins: tested,
        max_z,
        worst_bin: worst,
    }
}

/// Lower Cholesky factor (row-major) with zero-pivot tolerance, so singular
/// classical covariances (deterministic coordinates) are accepted.
fn cholesky_with_tolerance(cov: &[f64]) -> Result<Vec<f64>> {
    let n = (cov.len() as f64).sqrt() as usize;
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = cov[n * i + j];
            for k in 0..j {
                sum -= l[n * i + k] * l[n * j + k];
            }
            if i == j {
                if sum < -1e-12 {
                    return Err(Error::BadCovariance(format!(
                        "negative pivot {sum:.3e} in Cholesky factorization"
                    )));
                }
                l[n * i + i] = sum.max(0.0).sqrt();
            } else if l[n * j + j] > 1e-15 {
                l[n * i + j] = sum / l[n * j + j];
            } else if sum.abs() > 1e-10 {
                return Err(Error::BadCovariance(
                    "covariance is not positive semidefinite".into(),
                ));
            }
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianState;
    use crate::joint::{
        joint_characteristic, joint_probability_from_characteristic, outcome_means,
        single_measurement, Observable, SystemMoments,
    };
    use crate::state::{coherent_state, density_from_pure, fock_state, mix, PureState};
    use crate::wigner::quasi_characteristic;
    use approx::assert_abs_diff_eq;

    fn grid() -> Grid {
        Grid::symmetric(32).unwrap()
    }

    fn vacuum_rho(g: &Grid) -> DensityMatrix {
        density_from_pure(&coherent_state(g, 0.0, 0.0, 1.0).unwrap())
    }

    #[test]
    fn compose_counts_components() {
        let g = grid();
        let sys = vacuum_rho(&g);
        let det = DetectorPairState::vacuum();
        let cs = CompositeState::compose_with_detectors(&sys, &det).unwrap();
        assert_eq!(cs.components().len(), 1);
        assert_abs_diff_eq!(cs.norm(), 1.0, epsilon = 1e-10);

        let mixed = mix(&[
            (0.5, vacuum_rho(&g)),
            (0.5, density_from_pure(&fock_state(&g, 1).unwrap())),
        ])
        .unwrap();
        let cs2 = CompositeState::compose_with_detectors(&mixed, &det).unwrap();
        assert_eq!(cs2.components().len(), 2);
        assert_abs_diff_eq!(cs2.norm(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn interaction_preserves_norm() {
        let g = grid();
        let sys = density_from_pure(&coherent_state(&g, 1.0, -0.5, 0.8).unwrap());
        let det = DetectorPairState::squeezed(0.7).unwrap();
        let mut cs = CompositeState::compose_with_detectors(&sys, &det).unwrap();
        let before = cs.norm();
        cs.apply_interaction();
        assert_abs_diff_eq!(cs.norm(), before, epsilon = 1e-12);
    }

    #[test]
    fn both_factor_orders_agree() {
        let g = grid();
        let sys = density_from_pure(&fock_state(&g, 1).unwrap());
        let det = DetectorPairState::vacuum();
        let mut a = CompositeState::compose_with_detectors(&sys, &det).unwrap();
        let mut b = a.clone();
        a.apply_interaction_with_order(FactorOrder::QThenK);
        b.apply_interaction_with_order(FactorOrder::KThenQ);
        let diff = a.max_amplitude_diff(&b);
        assert!(diff < 1e-12, "factorization mismatch {diff:.3e}");
    }

    #[test]
    fn swapping_factors_without_phase_flip_changes_the_state() {
        // guard for the factorization: K-then-Q with the Q-then-K phase is
        // off by exactly the central phase, so the states must differ
        let g = grid();
        let sys = density_from_pure(&fock_state(&g, 1).unwrap());
        let det = DetectorPairState::vacuum();
        let mut c = CompositeState::compose_with_detectors(&sys, &det).unwrap();
        c.apply_interaction_with_order(FactorOrder::QThenK);
        let mut d = CompositeState::compose_with_detectors(&sys, &det).unwrap();
        {
            let n = g.n();
            let phi_q: Vec<f64> = d.grid_q.positions().to_vec();
            let phi_k: Vec<f64> = d.grid_k.positions().to_vec();
            let xs: Vec<f64> = d.sys_grid.positions().to_vec();
            let km: Vec<f64> = d.sys_grid.momenta_fft().to_vec();
            for (_, psi) in &mut d.components {
                for s in 0..n {
                    for q in 0..n {
                        for k in 0..n {
                            psi[[s, q, k]] *= C64::from_polar(1.0, 0.5 * phi_q[q] * phi_k[k]);
                        }
                    }
                }
                apply_q_coupling(psi, &xs, &phi_q, n);
                apply_k_coupling(psi, &km, &phi_k, n);
            }
        }
        assert!(c.max_amplitude_diff(&d) > 1e-3);
    }

    #[test]
    fn sharp_phi_zero_pointer_acts_as_identity() {
        // a pointer pinned at Phi = 0 never kicks the system
        let g = grid();
        let n = g.n();
        let sys = density_from_pure(&coherent_state(&g, 1.0, 0.5, 1.0).unwrap());
        let gq = g.conjugate();
        let mut delta_q = vec![C64::new(0.0, 0.0); n];
        delta_q[n / 2] = C64::new(1.0 / gq.dx().sqrt(), 0.0);
        let psi_q = PureState::from_amplitudes_unchecked(gq.clone(), delta_q).unwrap();
        let mut delta_k = vec![C64::new(0.0, 0.0); n];
        delta_k[n / 2] = C64::new(1.0 / g.dx().sqrt(), 0.0);
        let psi_k = PureState::from_amplitudes_unchecked(g.clone(), delta_k).unwrap();
        let det = DetectorPairState::gridded_product(
            density_from_pure(&psi_q),
            density_from_pure(&psi_k),
        );
        let mut cs = CompositeState::compose_with_detectors(&sys, &det).unwrap();
        let before = cs.clone();
        cs.apply_interaction();
        assert!(cs.max_amplitude_diff(&before) < 1e-12);
    }

    #[test]
    fn born_distribution_matches_formula_routes() {
        let g = grid();
        let sys = vacuum_rho(&g);
        let det = DetectorPairState::vacuum();
        let born = oracle_joint_distribution(&sys, &det).unwrap();
        let z = joint_characteristic(&quasi_characteristic(&sys), &det).unwrap();
        let formula = joint_probability_from_characteristic(&z).unwrap();
        let diff = born.max_abs_diff(&formula);
        assert!(diff < 1e-8, "oracle vs formula {diff:.3e}");
        assert_abs_diff_eq!(born.var_iq(), 9.0 / 8.0, epsilon = 1e-8);
    }

    #[test]
    fn displaced_pointer_means_shift_outcomes() {
        let g = Grid::new(64, 20.0).unwrap();
        let sys = vacuum_rho(&g);
        let det = DetectorPairState::gaussian_product(
            GaussianState::vacuum().with_mean([1.0, 0.0]),
            GaussianState::vacuum().with_mean([-1.0, 0.0]),
        );
        let born = oracle_joint_distribution(&sys, &det).unwrap();
        let sys_m = SystemMoments {
            mean_q: 0.0,
            mean_k: 0.0,
            var_q: 0.5,
            var_k: 0.5,
            cov_qk: 0.0,
        };
        let (miq, mik) = outcome_means(&sys_m, &det);
        assert_abs_diff_eq!(born.mean_iq(), miq, epsilon = 1e-8);
        assert_abs_diff_eq!(born.mean_ik(), mik, epsilon = 1e-8);
        assert_abs_diff_eq!(miq, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mik, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn decoupled_k_pointer_reduces_to_single_measurement() {
        // pointer K pinned at Phi_K = 0: the I_Q marginal is the single
        // Q measurement with pointer Q's noise
        let g = grid();
        let n = g.n();
        let sys = density_from_pure(&fock_state(&g, 1).unwrap());
        let mode_q = GaussianState::vacuum();
        let mut delta_k = vec![C64::new(0.0, 0.0); n];
        delta_k[n / 2] = C64::new(1.0 / g.dx().sqrt(), 0.0);
        let psi_k = PureState::from_amplitudes_unchecked(g.clone(), delta_k).unwrap();
        let det = DetectorPairState::gridded_product(
            mode_q.render_pointer_density(&g.conjugate()).unwrap(),
            density_from_pure(&psi_k),
        );
        let born = oracle_joint_distribution(&sys, &det).unwrap();
        let marginal = born.marginal_iq();
        let single = single_measurement(
            &sys,
            &DetectorPairState::gaussian_product(mode_q, GaussianState::vacuum()),
            Observable::Q,
        )
        .unwrap();
        assert!(marginal.max_abs_diff(&single) < 1e-8);
    }

    #[test]
    fn full_space_cell_reproduces_traced_state() {
        let g = grid();
        let sys = density_from_pure(&fock_state(&g, 1).unwrap());
        let det = DetectorPairState::vacuum();
        let mut cs = CompositeState::compose_with_detectors(&sys, &det).unwrap();
        cs.apply_interaction();
        let traced = cs.post_measurement_density().unwrap();
        let (cond, prob) = cs.reduced_conditional_state(0..g.n(), 0..g.n()).unwrap();
        assert_abs_diff_eq!(prob, 1.0, epsilon = 1e-8);
        let mut max = 0.0f64;
        for (a, b) in cond.elements().iter().zip(traced.elements().iter()) {
            max = max.max((a - b).norm());
        }
        assert!(max < 1e-9, "cell vs trace residue {max:.3e}");
    }

    #[test]
    fn back_action_shifts_system_means() {
        // <Q>_after = <Q> - <Phi_K'>, <K>_after = <K> + <Phi_Q'>
        let g = Grid::new(64, 20.0).unwrap();
        let sys = density_from_pure(&coherent_state(&g, 0.5, -0.5, 1.0).unwrap());
        let det = DetectorPairState::gaussian_product(
            GaussianState::vacuum().with_mean([0.0, 0.8]),
            GaussianState::vacuum().with_mean([0.0, -0.6]),
        );
        let mut cs = CompositeState::compose_with_detectors(&sys, &det).unwrap();
        cs.apply_interaction();
        let after = cs.post_measurement_density().unwrap();
        assert_abs_diff_eq!(after.position_moment(1), 0.5 - (-0.6), epsilon = 1e-8);
        assert_abs_diff_eq!(after.momentum_moment(1), -0.5 + 0.8, epsilon = 1e-8);
    }

    #[test]
    fn truncated_eigenvalue_emits_warning() {
        let g = grid();
        // a mixture so lopsided that the small branch falls below 1e-12
        let rho = mix(&[
            (1.0 - 5e-13, vacuum_rho(&g)),
            (5e-13, density_from_pure(&fock_state(&g, 1).unwrap())),
        ])
        .unwrap();
        let cs =
            CompositeState::compose_with_detectors(&rho, &DetectorPairState::vacuum()).unwrap();
        assert_eq!(cs.components().len(), 1);
        assert!(!cs.warnings().is_empty());
        assert_abs_diff_eq!(cs.norm(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn monte_carlo_matches_quantum_for_gaussian_inputs() {
        let g = grid();
        let det = DetectorPairState::vacuum();
        let quantum = {
            let z = joint_characteristic(&quasi_characteristic(&vacuum_rho(&g)), &det).unwrap();
            joint_probability_from_characteristic(&z).unwrap()
        };
        let empirical = classical_monte_carlo_gaussian(
            &ClassicalGaussian::from(&GaussianState::vacuum()),
            &det,
            &g,
            200_000,
            SEED,
        )
        .unwrap();
        let report = multinomial_band_report(&quantum, &empirical, 200_000, 25.0);
        assert!(report.tested_bins > 100);
        assert!(
            report.within(3.0),
            "max z {} at {:?}",
            report.max_z,
            report.worst_bin
        );
    }

    // frozen seed for the deterministic band check
    const SEED: u64 = 7;

    #[test]
    fn monte_carlo_is_deterministic_under_seed() {
        let g = grid();
        let det = DetectorPairState::vacuum();
        let sys = ClassicalGaussian::from(&GaussianState::vacuum());
        let a = classical_monte_carlo_gaussian(&sys, &det, &g, 10_000, 42).unwrap();
        let b = classical_monte_carlo_gaussian(&sys, &det, &g, 10_000, 42).unwrap();
        assert_eq!(a.max_abs_diff(&b), 0.0);
    }

    #[test]
    fn zero_spread_inputs_land_in_one_bin() {
        let g = grid();
        let sys = ClassicalGaussian::point(g.position(20), g.momentum_sorted(12));
        let det = DetectorPairState::ideal();
        let p = classical_monte_carlo_gaussian(&sys, &det, &g, 1000, 3).unwrap();
        let mut nonzero = 0;
        for v in p.values().iter() {
            if *v > 0.0 {
                nonzero += 1;
            }
        }
        assert_eq!(nonzero, 1);
        assert_abs_diff_eq!(p.at(12, 20), 1.0 / (g.dx() * g.dk()), epsilon = 1e-12);
    }

    #[test]
    fn negative_wigner_input_rejected_by_sampler() {
        let g = Grid::new(64, 20.0).unwrap();
        let w1 = crate::wigner::wigner_transform(&density_from_pure(
            &fock_state(&g, 1).unwrap(),
        ))
        .unwrap();
        assert!(matches!(
            classical_monte_carlo(&w1, &DetectorPairState::vacuum(), 1000, 1),
            Err(Error::NegativeDistribution(_))
        ));
    }

    #[test]
    fn gridded_wigner_sampler_agrees_with_gaussian_sampler() {
        let g = grid();
        let det = DetectorPairState::vacuum();
        let w = crate::gaussian::gaussian_wigner(&GaussianState::vacuum(), &g).unwrap();
        let p = classical_monte_carlo(&w, &det, 100_000, 11).unwrap();
        assert_abs_diff_eq!(p.mean_iq(), 0.0, epsilon = 0.02);
        assert_abs_diff_eq!(p.var_iq(), 9.0 / 8.0, epsilon = 0.05);
    }
}
