//! Gaussian-state covariance propagation for the squeezed source, the
//! beamsplitter network and the per-sensor loss channels.
//!
//! Quadratures are ordered `(x_1, p_1, ..., x_M, p_M)` and measured in
//! shot-noise units: the vacuum covariance is `I / 4`. The source squeezes the
//! phase quadrature `p`, which is also the quadrature the homodyne detectors
//! read out.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SimError};

pub const VACUUM_VARIANCE: f64 = 0.25;

const SYMMETRY_TOL: f64 = 1e-12;
const EIGEN_FLOOR: f64 = -1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    num_modes: usize,
    cov: DMatrix<f64>,
    mean: DVector<f64>,
}

impl GaussianState {
    pub fn vacuum(num_modes: usize) -> Self {
        Self {
            num_modes,
            cov: DMatrix::identity(2 * num_modes, 2 * num_modes) * VACUUM_VARIANCE,
            mean: DVector::zeros(2 * num_modes),
        }
    }

    pub fn from_parts(cov: DMatrix<f64>, mean: DVector<f64>) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || !dim.is_multiple_of(2) || cov.ncols() != dim {
            return Err(SimError::Dimension {
                context: "gaussian state covariance (square, even dimension)",
                expected: dim,
                got: cov.ncols(),
            });
        }
        if mean.len() != dim {
            return Err(SimError::Dimension {
                context: "gaussian state mean",
                expected: dim,
                got: mean.len(),
            });
        }
        Ok(Self {
            num_modes: dim / 2,
            cov,
            mean,
        })
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Appends `extra` vacuum modes after the existing ones.
    pub fn with_vacuum_modes(self, extra: usize) -> Self {
        let m = self.num_modes + extra;
        let mut cov = DMatrix::identity(2 * m, 2 * m) * VACUUM_VARIANCE;
        let d = 2 * self.num_modes;
        cov.view_mut((0, 0), (d, d)).copy_from(&self.cov);
        let mut mean = DVector::zeros(2 * m);
        mean.rows_mut(0, d).copy_from(&self.mean);
        Self {
            num_modes: m,
            cov,
            mean,
        }
    }

    /// Sets the quadrature displacement of one mode.
    pub fn displaced(mut self, mode: usize, x: f64, p: f64) -> Result<Self> {
        self.check_mode(mode)?;
        self.mean[2 * mode] = x;
        self.mean[2 * mode + 1] = p;
        Ok(self)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.num_modes {
            return Err(SimError::Dimension {
                context: "mode index",
                expected: self.num_modes,
                got: mode,
            });
        }
        Ok(())
    }

    fn apply_symplectic(mut self, s: &DMatrix<f64>) -> Self {
        self.cov = s * &self.cov * s.transpose();
        self.mean = s * &self.mean;
        self
    }

    /// Two-mode beamsplitter with power transmissivity `t`:
    /// `q_i' = sqrt(t) q_i - sqrt(1-t) q_j`, `q_j' = sqrt(1-t) q_i + sqrt(t) q_j`
    /// for both quadratures.
    pub fn apply_beamsplitter(self, mode_i: usize, mode_j: usize, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(SimError::domain("transmissivity", t, "0 <= t <= 1"));
        }
        self.check_mode(mode_i)?;
        self.check_mode(mode_j)?;
        if mode_i == mode_j {
            return Err(SimError::Dimension {
                context: "beamsplitter needs two distinct modes",
                expected: mode_i + 1,
                got: mode_j,
            });
        }
        let (c, s) = (t.sqrt(), (1.0 - t).sqrt());
        let mut sym = DMatrix::identity(2 * self.num_modes, 2 * self.num_modes);
        for q in 0..2 {
            let (a, b) = (2 * mode_i + q, 2 * mode_j + q);
            sym[(a, a)] = c;
            sym[(a, b)] = -s;
            sym[(b, a)] = s;
            sym[(b, b)] = c;
        }
        Ok(self.apply_symplectic(&sym))
    }

    /// Phase rotation: `x' = cos(phi) x - sin(phi) p`, `p' = sin(phi) x + cos(phi) p`.
    pub fn apply_phase(self, mode: usize, phi: f64) -> Result<Self> {
        self.check_mode(mode)?;
        let (sn, cs) = phi.sin_cos();
        let mut sym = DMatrix::identity(2 * self.num_modes, 2 * self.num_modes);
        let (x, p) = (2 * mode, 2 * mode + 1);
        sym[(x, x)] = cs;
        sym[(x, p)] = -sn;
        sym[(p, x)] = sn;
        sym[(p, p)] = cs;
        Ok(self.apply_symplectic(&sym))
    }

    /// Pure-loss channel with efficiency `eta` on one mode. The mode's rows and
    /// columns scale by `sqrt(eta)` and the diagonal block gains
    /// `(1 - eta) I / 4`.
    pub fn apply_loss(mut self, mode: usize, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(SimError::domain("efficiency", eta, "0 <= eta <= 1"));
        }
        self.check_mode(mode)?;
        let g = eta.sqrt();
        for q in [2 * mode, 2 * mode + 1] {
            self.cov.row_mut(q).scale_mut(g);
            self.cov.column_mut(q).scale_mut(g);
            self.cov[(q, q)] += (1.0 - eta) * VACUUM_VARIANCE;
            self.mean[q] *= g;
        }
        Ok(self)
    }

    /// Covariance of the `p` quadratures only (M x M).
    pub fn p_quadrature_covariance(&self) -> DMatrix<f64> {
        let m = self.num_modes;
        DMatrix::from_fn(m, m, |a, b| self.cov[(2 * a + 1, 2 * b + 1)])
    }

    /// Symmetry, non-negative spectrum and the single-mode uncertainty bound.
    pub fn is_physical(&self) -> bool {
        let sym_err = (&self.cov - self.cov.transpose()).amax();
        if sym_err > SYMMETRY_TOL {
            return false;
        }
        let min_eig = self.cov.clone().symmetric_eigenvalues().min();
        if min_eig < -SYMMETRY_TOL {
            return false;
        }
        (0..self.num_modes).all(|k| {
            let (x, p) = (2 * k, 2 * k + 1);
            let det = self.cov[(x, x)] * self.cov[(p, p)] - self.cov[(x, p)].powi(2);
            det >= 1.0 / 16.0 - SYMMETRY_TOL
        })
    }
}

/// Single-mode squeezed vacuum with mean photon number `n_s`, squeezed in `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezedSourceSpec {
    n_s: f64,
}

impl SqueezedSourceSpec {
    pub fn new(n_s: f64) -> Result<Self> {
        if !(n_s >= 0.0 && n_s.is_finite()) {
            return Err(SimError::domain("n_s", n_s, "finite n_s >= 0"));
        }
        Ok(Self { n_s })
    }

    pub fn n_s(&self) -> f64 {
        self.n_s
    }

    /// `e^{-2r} = 1 / (sqrt(Ns) + sqrt(Ns + 1))^2`.
    pub fn squeeze_factor(&self) -> f64 {
        1.0 / (self.n_s.sqrt() + (self.n_s + 1.0).sqrt()).powi(2)
    }

    /// `e^{2r} = (sqrt(Ns) + sqrt(Ns + 1))^2`.
    pub fn antisqueeze_factor(&self) -> f64 {
        (self.n_s.sqrt() + (self.n_s + 1.0).sqrt()).powi(2)
    }

    pub fn x_variance(&self) -> f64 {
        self.antisqueeze_factor() * VACUUM_VARIANCE
    }

    pub fn p_variance(&self) -> f64 {
        self.squeeze_factor() * VACUUM_VARIANCE
    }
}

pub fn squeezed_source_covariance(spec: SqueezedSourceSpec) -> GaussianState {
    let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![
        spec.x_variance(),
        spec.p_variance(),
    ]));
    GaussianState {
        num_modes: 1,
        cov,
        mean: DVector::zeros(2),
    }
}

/// Splitting ratios and phases of the entangling circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct VqcSetting {
    v: Vec<f64>,
    phi: Vec<f64>,
}

impl VqcSetting {
    pub fn new(v: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(SimError::Dimension {
                context: "vqc splitting ratios",
                expected: 1,
                got: 0,
            });
        }
        if v.len() != phi.len() {
            return Err(SimError::Dimension {
                context: "vqc phases",
                expected: v.len(),
                got: phi.len(),
            });
        }
        if let Some(&bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(SimError::domain("splitting ratio", bad, "0 <= v_m <= 1"));
        }
        let total: f64 = v.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SimError::domain("sum of splitting ratios", total, "1"));
        }
        if let Some(&bad) = phi.iter().find(|x| !x.is_finite()) {
            return Err(SimError::domain("phase", bad, "finite"));
        }
        Ok(Self { v, phi })
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            v: vec![1.0 / m as f64; m],
            phi: vec![0.0; m],
        }
    }

    pub fn num_sensors(&self) -> usize {
        self.v.len()
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Beamsplitter transmissivities of the chain: sensor 1 is split off
    /// first, then the remainder recursively. `0/0` maps to 0.
    pub fn chain_transmissivities(&self) -> Vec<f64> {
        let mut remaining = 1.0;
        let mut out = Vec::with_capacity(self.v.len().saturating_sub(1));
        for &vk in &self.v[..self.v.len() - 1] {
            let t = if remaining <= 0.0 {
                0.0
            } else {
                (vk / remaining).clamp(0.0, 1.0)
            };
            out.push(t);
            remaining -= vk;
        }
        out
    }
}

/// Covariance of the `p`-quadrature homodyne noise across sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorCovariance {
    mat: DMatrix<f64>,
}

impl SensorCovariance {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(SimError::Dimension {
                context: "sensor covariance must be square",
                expected: mat.nrows(),
                got: mat.ncols(),
            });
        }
        let asym = (&mat - mat.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(SimError::domain("covariance asymmetry", asym, "<= 1e-12"));
        }
        Ok(Self { mat })
    }

    /// Independent shot noise at every sensor, the coherent-probe baseline.
    pub fn shot_noise(m: usize) -> Self {
        Self {
            mat: DMatrix::identity(m, m) * VACUUM_VARIANCE,
        }
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            mat: DMatrix::zeros(m, m),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn weighted_sum_variance(&self, w: &[f64]) -> Result<f64> {
        weighted_sum_variance(self, w)
    }
}

/// Source -> beamsplitter chain -> phases -> loss, then the `p` block.
pub fn build_network_covariance(
    source: SqueezedSourceSpec,
    vqc: &VqcSetting,
    eta: f64,
) -> Result<SensorCovariance> {
    let m = vqc.num_sensors();
    let mut state = squeezed_source_covariance(source).with_vacuum_modes(m - 1);
    for (k, t) in vqc.chain_transmissivities().into_iter().enumerate() {
        state = state.apply_beamsplitter(k, k + 1, t)?;
    }
    for (k, &phi) in vqc.phi().iter().enumerate() {
        state = state.apply_phase(k, phi)?;
    }
    for k in 0..m {
        state = state.apply_loss(k, eta)?;
    }
    let mut mat = state.p_quadrature_covariance();
    // exact symmetrization; the triple product leaves ~1e-17 residue
    mat = (&mat + mat.transpose()) * 0.5;
    Ok(SensorCovariance { mat })
}

/// Closed form of [`build_network_covariance`]:
/// `S_mm' = eta sqrt(v_m v_m') [cos phi_m cos phi_m' (s_p - 1/4)
///          + sin phi_m sin phi_m' (s_x - 1/4)] + delta_mm' / 4`.
pub fn network_covariance_closed_form(
    source: SqueezedSourceSpec,
    vqc: &VqcSetting,
    eta: f64,
) -> Result<SensorCovariance> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(SimError::domain("efficiency", eta, "0 <= eta <= 1"));
    }
    let m = vqc.num_sensors();
    let dp = source.p_variance() - VACUUM_VARIANCE;
    let dx = source.x_variance() - VACUUM_VARIANCE;
    let (v, phi) = (vqc.v(), vqc.phi());
    let mat = DMatrix::from_fn(m, m, |a, b| {
        let amp = eta * (v[a] * v[b]).sqrt();
        let corr = phi[a].cos() * phi[b].cos() * dp + phi[a].sin() * phi[b].sin() * dx;
        amp * corr + if a == b { VACUUM_VARIANCE } else { 0.0 }
    });
    Ok(SensorCovariance { mat })
}

/// Independently squeezed sensors, each with `n_s_per_sensor` photons.
pub fn separable_network_covariance(
    n_s_per_sensor: f64,
    eta: f64,
    m: usize,
) -> Result<SensorCovariance> {
    let spec = SqueezedSourceSpec::new(n_s_per_sensor)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(SimError::domain("efficiency", eta, "0 <= eta <= 1"));
    }
    let var = (eta * spec.squeeze_factor() + (1.0 - eta)) * VACUUM_VARIANCE;
    Ok(SensorCovariance {
        mat: DMatrix::identity(m, m) * var,
    })
}

pub fn weighted_sum_variance(cov: &SensorCovariance, w: &[f64]) -> Result<f64> {
    if w.len() != cov.dim() {
        return Err(SimError::Dimension {
            context: "weight vector",
            expected: cov.dim(),
            got: w.len(),
        });
    }
    let w = DVector::from_column_slice(w);
    Ok((w.transpose() * &cov.mat * &w)[(0, 0)])
}

/// `10 log10(SQL / variance)`.
pub fn db_below_sql(variance: f64) -> f64 {
    10.0 * (VACUUM_VARIANCE / variance).log10()
}

/// Draws correlated homodyne noise `L z` with `L L^T = cov`.
#[derive(Debug, Clone)]
pub struct HomodyneSampler {
    factor: DMatrix<f64>,
    z: DVector<f64>,
}

impl HomodyneSampler {
    pub fn new(cov: &SensorCovariance) -> Result<Self> {
        let m = cov.dim();
        let factor = match cov.mat.clone().cholesky() {
            Some(ch) => ch.unpack(),
            None => spectral_sqrt(&cov.mat)?,
        };
        Ok(Self {
            factor,
            z: DVector::zeros(m),
        })
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Writes `displacement + L z` into `out`.
    pub fn sample_into<R: Rng + ?Sized>(
        &mut self,
        displacement: &[f64],
        out: &mut [f64],
        rng: &mut R,
    ) {
        let m = self.z.len();
        for k in 0..m {
            self.z[k] = rng.sample(StandardNormal);
        }
        for a in 0..m {
            let mut acc = displacement[a];
            for b in 0..m {
                acc += self.factor[(a, b)] * self.z[b];
            }
            out[a] = acc;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, displacement: &[f64], rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; displacement.len()];
        self.sample_into(displacement, &mut out, rng);
        out
    }
}

fn spectral_sqrt(mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = mat.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < EIGEN_FLOOR {
        return Err(SimError::NotPositiveSemidefinite { eigenvalue: min });
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// `count x M` matrix of homodyne outcomes, one row per shot.
pub fn sample_homodyne<R: Rng + ?Sized>(
    cov: &SensorCovariance,
    displacements: &[f64],
    count: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let m = cov.dim();
    if displacements.len() != m {
        return Err(SimError::Dimension {
            context: "displacement vector",
            expected: m,
            got: displacements.len(),
        });
    }
    let mut sampler = HomodyneSampler::new(cov)?;
    let mut out = DMatrix::zeros(count, m);
    let mut row = vec![0.0; m];
    for r in 0..count {
        sampler.sample_into(displacements, &mut row, rng);
        for k in 0..m {
            out[(r, k)] = row[k];
        }
    }
    Ok(out)
}
