//! Pilot-aided linear MMSE estimation of the BEM coefficients.
//!
//! The received pilot window is `y_p = Psi_pp g + (data leakage) + z_p + w_p`.
//! The coefficient prior `R_g`, data leakage `R_d` and model-error image
//! `R_z` are fixed per configuration, so the gain `V` and the error
//! covariance `R_g~` are formed once and every trial costs one small matvec.

use nalgebra::Cholesky;
use num_complex::Complex64;
use serde::Serialize;

use crate::bem::{model_error_covariance, reconstruct_channel, reconstruct_taps, BemBasis, BemCoefficients};
use crate::channel::{channel_autocorrelation, cpp_phase, DopplerProfile};
use crate::error::{check_len, Error, Result};
use crate::frame::PilotFrame;
use crate::linalg::{circshift, hermitian_condition, hermitian_part, kron, principal_submatrix, select_rows, trace_re, CMat, CVec};
use crate::transforms::AfdmGrid;

/// Largest Gram condition number accepted before estimation is refused.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// `Psi_p = [D_0,p ... D_Q,p]` and its observation-window rows `Psi_pp`.
///
/// Column `q (L + 1) + l` is `A (b_q . circshift(A^H x_p, l))`.
#[derive(Clone, Debug)]
pub struct PilotDictionary {
    num_basis: usize,
    taps: usize,
    psi_p: CMat,
    psi_pp: CMat,
    obs: Vec<usize>,
}

impl PilotDictionary {
    /// Dictionary of an arbitrary transmit vector `x` observed on rows `obs`.
    pub fn from_signal(grid: &AfdmGrid, basis: &BemBasis, taps: usize, x: &CVec, obs: &[usize]) -> Result<Self> {
        let n = grid.n();
        check_len(n, x.len())?;
        check_len(n, basis.n())?;
        if let Some(&bad) = obs.iter().find(|&&k| k >= n) {
            return Err(Error::InvalidParameter(format!("observation index {bad} outside frame of {n}")));
        }
        if taps == 0 || taps > n {
            return Err(Error::InvalidParameter(format!("tap count {taps} must be in 1..={n}")));
        }
        let s = grid.idaft(x)?;
        let nb = basis.num_basis();
        let mut time = CMat::zeros(n, nb * taps);
        for l in 0..taps {
            let shifted = circshift(&s, l);
            for q in 0..nb {
                let b = basis.matrix().column(q);
                let mut col = time.column_mut(q * taps + l);
                for k in 0..n {
                    col[k] = b[k] * shifted[k];
                }
            }
        }
        let psi_p = grid.apply_daft(&time);
        let psi_pp = select_rows(&psi_p, obs);
        Ok(Self { num_basis: nb, taps, psi_p, psi_pp, obs: obs.to_vec() })
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn psi_p(&self) -> &CMat {
        &self.psi_p
    }

    pub fn psi_pp(&self) -> &CMat {
        &self.psi_pp
    }

    pub fn obs_indices(&self) -> &[usize] {
        &self.obs
    }
}

/// Dictionary of the frame's pilots over `taps = L + 1` delay taps.
pub fn build_pilot_dictionary(frame: &PilotFrame, grid: &AfdmGrid, basis: &BemBasis, taps: usize) -> Result<PilotDictionary> {
    check_len(frame.n(), grid.n())?;
    PilotDictionary::from_signal(grid, basis, taps, &frame.pilot_vector(), frame.obs_indices())
}

/// Per-tap covariance `R_hh,l` of `h_l(n)`, Jakes correlation times the
/// deterministic prefix phase on wrapped rows.
pub fn assemble_channel_covariance(profile: &DopplerProfile, grid: &AfdmGrid, taps: usize) -> Result<Vec<CMat>> {
    if profile.max_delay() >= taps {
        return Err(Error::InvalidParameter(format!(
            "profile delay {} exceeds the modelled maximum {}",
            profile.max_delay(),
            taps.saturating_sub(1)
        )));
    }
    let n = grid.n();
    let mut r = channel_autocorrelation(profile, n, taps);
    for (l, m) in r.iter_mut().enumerate() {
        if l == 0 {
            continue;
        }
        let gamma: Vec<Complex64> = (0..n).map(|k| cpp_phase(grid, k, l)).collect();
        for c in 0..n {
            for k in 0..n {
                m[(k, c)] *= gamma[k] * gamma[c].conj();
            }
        }
    }
    Ok(r)
}

/// `R_g = Theta^+ R_hh Theta^+^H` for mutually independent taps, i.e. a
/// block-diagonal `R_hh`. Entry `(q l, q' l)` is `(B^+ R_hh,l B^+^H)(q, q')`.
pub fn bem_prior_covariance(r_hh: &[CMat], basis: &BemBasis) -> Result<CMat> {
    let taps = r_hh.len();
    let nb = basis.num_basis();
    let pinv = basis.pseudo_inverse();
    let mut r_g = CMat::zeros(nb * taps, nb * taps);
    for (l, r) in r_hh.iter().enumerate() {
        if r.nrows() != basis.n() || r.ncols() != basis.n() {
            return Err(Error::DimensionMismatch { expected: basis.n(), actual: r.nrows() });
        }
        let block = pinv * r * pinv.adjoint();
        for q in 0..nb {
            for p in 0..nb {
                r_g[(q * taps + l, p * taps + l)] = block[(q, p)];
            }
        }
    }
    Ok(hermitian_part(&r_g))
}

/// `R_g = Theta^+ R_hh Theta^+^H` for a joint `R_hh` of size `N (L + 1)`,
/// ordered time-major, tap-minor.
pub fn bem_prior_covariance_joint(r_hh: &CMat, basis: &BemBasis, taps: usize) -> Result<CMat> {
    let dim = basis.n() * taps;
    if r_hh.nrows() != dim || r_hh.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: r_hh.nrows() });
    }
    let theta_pinv = kron(basis.pseudo_inverse(), &CMat::identity(taps, taps));
    Ok(hermitian_part(&(&theta_pinv * r_hh * theta_pinv.adjoint())))
}

/// The `(Q+1) x (Q+1)` block of a coefficient covariance coupling taps `l` and `m`.
pub fn tap_pair_block(r_coeff: &CMat, num_basis: usize, taps: usize, l: usize, m: usize) -> CMat {
    CMat::from_fn(num_basis, num_basis, |q, p| r_coeff[(q * taps + l, p * taps + m)])
}

/// `A^H R A`: a DAFT-domain covariance moved to the time domain.
pub fn time_domain_covariance(grid: &AfdmGrid, r: &CMat) -> CMat {
    let left = grid.apply_idaft(r);
    grid.apply_idaft(&left.adjoint()).adjoint()
}

/// `A [ sum_{l,m} K_lm . S_lm ] A^H` with `S_lm(n, n') = R_s(n - l, n' - m)`
/// (cyclic) and `R_s = A^H R_x A`. This is `E[H R_x H^H]` in the DAFT domain
/// for a random tap channel whose taps have cross-covariances `K_lm`.
fn tap_channel_response<F>(grid: &AfdmGrid, taps: usize, r_x: &CMat, mut k_of: F) -> Result<CMat>
where
    F: FnMut(usize, usize) -> Option<CMat>,
{
    let n = grid.n();
    if r_x.nrows() != n || r_x.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: r_x.nrows() });
    }
    let r_s = time_domain_covariance(grid, r_x);
    let mut out = CMat::zeros(n, n);
    for l in 0..taps {
        for m in 0..taps {
            let Some(k) = k_of(l, m) else { continue };
            for c in 0..n {
                let sc = (c + n - m) % n;
                for r in 0..n {
                    out[(r, c)] += k[(r, c)] * r_s[((r + n - l) % n, sc)];
                }
            }
        }
    }
    Ok(grid.conjugate(&out))
}

/// `E[A H_bem(c) A^H R_x A H_bem(c)^H A^H]` for BEM coefficients `c` with
/// covariance `r_coeff`. With `R_g` and `R_x_d` this is the data-leakage
/// covariance `R_d`; with `R_g~` and `R_x` it is the estimation-error term
/// of the equalizer.
pub fn bem_response_covariance(grid: &AfdmGrid, basis: &BemBasis, taps: usize, r_coeff: &CMat, r_x: &CMat) -> Result<CMat> {
    let nb = basis.num_basis();
    if r_coeff.nrows() != nb * taps || r_coeff.ncols() != nb * taps {
        return Err(Error::DimensionMismatch { expected: nb * taps, actual: r_coeff.nrows() });
    }
    let b = basis.matrix();
    let out = tap_channel_response(grid, taps, r_x, |l, m| {
        let block = tap_pair_block(r_coeff, nb, taps, l, m);
        if block.iter().all(|z| z.norm_sqr() == 0.0) {
            return None;
        }
        Some(b * block * b.adjoint())
    })?;
    Ok(hermitian_part(&out))
}

/// `R_x_d`: `power` on the data indices, zero elsewhere.
pub fn data_signal_covariance(n: usize, data_indices: &[usize], power: f64) -> CMat {
    let mut r = CMat::zeros(n, n);
    for &k in data_indices {
        r[(k, k)] = Complex64::new(power, 0.0);
    }
    r
}

/// Data-leakage covariance `R_d = E[Psi_d g g^H Psi_d^H]`.
pub fn data_covariance(frame: &PilotFrame, grid: &AfdmGrid, basis: &BemBasis, r_g: &CMat, data_power: f64) -> Result<CMat> {
    let taps = frame.max_delay() + 1;
    let r_xd = data_signal_covariance(grid.n(), frame.data_indices(), data_power);
    bem_response_covariance(grid, basis, taps, r_g, &r_xd)
}

/// Model-error image `R_z`: pilot term `A c_lp R_mod,l c_lp^H A^H` plus data
/// term `A ((c_Al R_x_d c_Al^H) . R_mod,l) A^H`, summed over taps.
pub fn model_error_rx_covariance(grid: &AfdmGrid, r_mod: &[CMat], x_p: &CVec, r_xd: &CMat) -> Result<CMat> {
    check_len(grid.n(), x_p.len())?;
    let r_x = r_xd + x_p * x_p.adjoint();
    let out = tap_channel_response(grid, r_mod.len(), &r_x, |l, m| (l == m).then(|| r_mod[l].clone()))?;
    Ok(hermitian_part(&out))
}

/// Every second-order statistic the estimator and equalizer need.
#[derive(Clone, Debug)]
pub struct CovarianceSet {
    r_hh: Vec<CMat>,
    r_g: CMat,
    r_d: CMat,
    r_z: CMat,
    noise_var: f64,
    obs: Vec<usize>,
    r_d_p: CMat,
    r_z_p: CMat,
}

impl CovarianceSet {
    pub fn from_parts(r_hh: Vec<CMat>, r_g: CMat, r_d: CMat, r_z: CMat, noise_var: f64, obs: &[usize]) -> Result<Self> {
        if !(noise_var >= 0.0) || !noise_var.is_finite() {
            return Err(Error::InvalidParameter(format!("noise variance {noise_var} must be finite and >= 0")));
        }
        if r_d.shape() != r_z.shape() || r_d.nrows() != r_d.ncols() {
            return Err(Error::DimensionMismatch { expected: r_d.nrows(), actual: r_z.nrows() });
        }
        if let Some(&bad) = obs.iter().find(|&&k| k >= r_d.nrows()) {
            return Err(Error::InvalidParameter(format!("observation index {bad} out of range")));
        }
        let r_d_p = principal_submatrix(&r_d, obs);
        let r_z_p = principal_submatrix(&r_z, obs);
        Ok(Self { r_hh, r_g, r_d, r_z, noise_var, obs: obs.to_vec(), r_d_p, r_z_p })
    }

    /// Builds `R_hh`, `R_g`, `R_d` and `R_z` for a Jakes profile and frame.
    pub fn for_frame(
        profile: &DopplerProfile,
        grid: &AfdmGrid,
        basis: &BemBasis,
        frame: &PilotFrame,
        data_power: f64,
        noise_var: f64,
    ) -> Result<Self> {
        let taps = frame.max_delay() + 1;
        let r_hh = assemble_channel_covariance(profile, grid, taps)?;
        let r_g = bem_prior_covariance(&r_hh, basis)?;
        let r_xd = data_signal_covariance(grid.n(), frame.data_indices(), data_power);
        let r_d = bem_response_covariance(grid, basis, taps, &r_g, &r_xd)?;
        let r_mod: Vec<CMat> = r_hh.iter().map(|r| model_error_covariance(basis, r)).collect();
        let r_z = model_error_rx_covariance(grid, &r_mod, &frame.pilot_vector(), &r_xd)?;
        Self::from_parts(r_hh, r_g, r_d, r_z, noise_var, frame.obs_indices())
    }

    pub fn r_hh(&self) -> &[CMat] {
        &self.r_hh
    }

    pub fn r_g(&self) -> &CMat {
        &self.r_g
    }

    pub fn r_d(&self) -> &CMat {
        &self.r_d
    }

    pub fn r_z(&self) -> &CMat {
        &self.r_z
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn r_d_p(&self) -> &CMat {
        &self.r_d_p
    }

    pub fn r_z_p(&self) -> &CMat {
        &self.r_z_p
    }

    /// `R_w,p = sigma^2 I` on the observation window.
    pub fn r_w_p(&self) -> CMat {
        CMat::identity(self.obs.len(), self.obs.len()) * Complex64::new(self.noise_var, 0.0)
    }

    pub fn obs_indices(&self) -> &[usize] {
        &self.obs
    }

    /// Same statistics at another noise level.
    pub fn with_noise_var(&self, noise_var: f64) -> Result<Self> {
        if !(noise_var >= 0.0) || !noise_var.is_finite() {
            return Err(Error::InvalidParameter(format!("noise variance {noise_var} must be finite and >= 0")));
        }
        let mut out = self.clone();
        out.noise_var = noise_var;
        Ok(out)
    }
}

/// Precomputed MMSE gain `V = R_g Psi_pp^H (Psi_pp R_g Psi_pp^H + R_d,p + R_z,p + R_w,p)^{-1}`.
#[derive(Clone, Debug)]
pub struct MmseEstimator {
    num_basis: usize,
    taps: usize,
    gain: CMat,
    r_g_tilde: CMat,
    gram_condition: f64,
    gram_dim: usize,
}

impl MmseEstimator {
    pub fn prepare(dictionary: &PilotDictionary, cov: &CovarianceSet) -> Result<Self> {
        if dictionary.obs_indices() != cov.obs_indices() {
            return Err(Error::InvalidParameter("dictionary and covariances use different observation windows".into()));
        }
        let psi = dictionary.psi_pp();
        let r_g = cov.r_g();
        if r_g.nrows() != psi.ncols() {
            return Err(Error::DimensionMismatch { expected: psi.ncols(), actual: r_g.nrows() });
        }
        let psi_rg = psi * r_g;
        let gram = hermitian_part(&(&psi_rg * psi.adjoint() + cov.r_d_p() + cov.r_z_p() + cov.r_w_p()));
        let gram_condition = hermitian_condition(&gram);
        if !(gram_condition <= MAX_GRAM_CONDITION) {
            return Err(Error::IllConditioned { condition: gram_condition, limit: MAX_GRAM_CONDITION });
        }
        let chol = Cholesky::new(gram).ok_or(Error::NotPositiveDefinite)?;
        // Gram^{-1} Psi R_g = V^H, since both Gram and R_g are Hermitian.
        let gain = chol.solve(&psi_rg).adjoint();
        let r_g_tilde = hermitian_part(&(r_g - &gain * &psi_rg));
        Ok(Self {
            num_basis: dictionary.num_basis(),
            taps: dictionary.taps(),
            gain,
            r_g_tilde,
            gram_condition,
            gram_dim: psi.nrows(),
        })
    }

    /// `g_hat = V y_p`.
    pub fn estimate(&self, y_p: &CVec) -> Result<BemCoefficients> {
        check_len(self.gram_dim, y_p.len())?;
        BemCoefficients::new(self.num_basis, self.taps, &self.gain * y_p)
    }

    /// `V_MMSE`.
    pub fn gain(&self) -> &CMat {
        &self.gain
    }

    /// `R_g~ = R_g - V Psi_pp R_g^H`.
    pub fn error_covariance(&self) -> &CMat {
        &self.r_g_tilde
    }

    pub fn gram_condition(&self) -> f64 {
        self.gram_condition
    }

    /// Size of the inverted Gram matrix, `2 Q_B + 2` for the standard frame.
    pub fn gram_dimension(&self) -> usize {
        self.gram_dim
    }

    pub fn taps(&self) -> usize {
        self.taps
    }
}

#[derive(Clone, Debug)]
pub struct EstimationResult {
    pub g_hat: BemCoefficients,
    pub h_hat: CMat,
    pub h_eff_hat: CMat,
    pub r_g_tilde: CMat,
    pub nmse_closed_form: f64,
}

/// One-shot estimate with full reconstruction of `H_hat` and `A H_hat A^H`.
pub fn mmse_estimate(
    y_p: &CVec,
    dictionary: &PilotDictionary,
    cov: &CovarianceSet,
    basis: &BemBasis,
    grid: &AfdmGrid,
) -> Result<EstimationResult> {
    let est = MmseEstimator::prepare(dictionary, cov)?;
    let g_hat = est.estimate(y_p)?;
    let h_hat = reconstruct_channel(&g_hat, basis);
    let h_eff_hat = grid.conjugate(&h_hat);
    let nmse_closed_form = closed_form_nmse(basis, cov.r_hh(), est.error_covariance()).total;
    Ok(EstimationResult { g_hat, h_hat, h_eff_hat, r_g_tilde: est.error_covariance().clone(), nmse_closed_form })
}

/// Closed-form NMSE split into its model-error and estimation parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NmseTerms {
    /// `sum_l tr(Phi R_hh,l) / tr(R_hh)`.
    pub model_error: f64,
    /// `tr(Theta R_g~ Theta^H) / tr(R_hh)`.
    pub estimation: f64,
    pub total: f64,
}

pub fn closed_form_nmse(basis: &BemBasis, r_hh: &[CMat], r_g_tilde: &CMat) -> NmseTerms {
    let taps = r_hh.len();
    let nb = basis.num_basis();
    let energy: f64 = r_hh.iter().map(trace_re).sum();
    let floor: f64 = r_hh.iter().map(|r| trace_re(&(basis.projector() * r))).sum();
    // tr(Theta R Theta^H) = tr(R (B^H B kron I)).
    let bhb = basis.matrix().adjoint() * basis.matrix();
    let mut est = 0.0;
    for q in 0..nb {
        for p in 0..nb {
            for l in 0..taps {
                est += (r_g_tilde[(q * taps + l, p * taps + l)] * bhb[(p, q)]).re;
            }
        }
    }
    let model_error = floor.max(0.0) / energy;
    let estimation = est.max(0.0) / energy;
    NmseTerms { model_error, estimation, total: model_error + estimation }
}

/// Squared tap error `sum_l ||h_l - B g_hat(., l)||^2`.
pub fn tap_error_energy(taps: &[CVec], g_hat: &BemCoefficients, basis: &BemBasis) -> f64 {
    reconstruct_taps(g_hat, basis).iter().zip(taps).map(|(e, h)| (h - e).norm_squared()).sum()
}

/// Per-configuration estimator diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimationDiagnostics {
    pub gram_dimension: usize,
    pub gram_condition: f64,
    pub nmse: NmseTerms,
}

impl EstimationDiagnostics {
    pub fn new(est: &MmseEstimator, basis: &BemBasis, cov: &CovarianceSet) -> Self {
        Self {
            gram_dimension: est.gram_dimension(),
            gram_condition: est.gram_condition(),
            nmse: closed_form_nmse(basis, cov.r_hh(), est.error_covariance()),
        }
    }
}

/// Unstructured full-N MMSE baseline: estimates every tap sample
/// `h = [h(0, 0..=L), h(1, 0..=L), ...]` from the whole received pilot frame.
#[derive(Clone, Debug)]
pub struct NaiveMmseEstimator {
    psi_h: CMat,
    r_hh: CMat,
    noise_var: f64,
}

impl NaiveMmseEstimator {
    pub fn new(grid: &AfdmGrid, x_p: &CVec, r_hh: &[CMat], noise_var: f64) -> Result<Self> {
        let n = grid.n();
        let taps = r_hh.len();
        let s = grid.idaft(x_p)?;
        let mut time = CMat::zeros(n, n * taps);
        for l in 0..taps {
            let shifted = circshift(&s, l);
            for k in 0..n {
                time[(k, k * taps + l)] = shifted[k];
            }
        }
        let mut joint = CMat::zeros(n * taps, n * taps);
        for (l, r) in r_hh.iter().enumerate() {
            check_len(n, r.nrows())?;
            for c in 0..n {
                for k in 0..n {
                    joint[(k * taps + l, c * taps + l)] = r[(k, c)];
                }
            }
        }
        Ok(Self { psi_h: grid.apply_daft(&time), r_hh: joint, noise_var })
    }

    /// Forms the `N x N` Gram, factors it and applies the gain to `y`.
    pub fn estimate(&self, y: &CVec) -> Result<CVec> {
        check_len(self.psi_h.nrows(), y.len())?;
        let cross = &self.psi_h * &self.r_hh;
        let n = y.len();
        let gram = hermitian_part(&(&cross * self.psi_h.adjoint()))
            + CMat::identity(n, n) * Complex64::new(self.noise_var, 0.0);
        let chol = Cholesky::new(gram).ok_or(Error::NotPositiveDefinite)?;
        Ok(cross.adjoint() * chol.solve(y))
    }

    pub fn gram_dimension(&self) -> usize {
        self.psi_h.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bem::{min_bem_order, reconstruct_taps};
    use crate::channel::{delay_tap_matrix, effective_response, sample_jakes_paths};
    use crate::frame::{design_pilot_frame, embed, extract_observation};
    use crate::linalg::{complex_normal, dft_matrix, is_hermitian_psd, max_abs, max_abs_diff, psd_factor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_vec(n: usize, rng: &mut impl Rng) -> CVec {
        CVec::from_fn(n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn random_psd(n: usize, rng: &mut impl Rng) -> CMat {
        let a = CMat::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &a * a.adjoint()
    }

    /// `D_q,p = A diag(b_q) F^H diag(F A^H x) F_L` with dense matrices.
    fn literal_dictionary(grid: &AfdmGrid, basis: &BemBasis, taps: usize, x: &CVec) -> CMat {
        let n = grid.n();
        let a = grid.daft_matrix();
        let f = dft_matrix(n);
        let f_l = f.columns(0, taps) * c((n as f64).sqrt());
        let spectrum = &f * a.adjoint() * x;
        let mut out = CMat::zeros(n, basis.num_basis() * taps);
        for q in 0..basis.num_basis() {
            let d = a * CMat::from_diagonal(&basis.column(q)) * f.adjoint() * CMat::from_diagonal(&spectrum) * &f_l;
            for l in 0..taps {
                out.set_column(q * taps + l, &d.column(l));
            }
        }
        out
    }

    /// Literal `Upsilon [(J kron F R_s F^H) . (Xi R Xi^H)] Upsilon^H`.
    fn literal_response(grid: &AfdmGrid, basis: &BemBasis, taps: usize, r_coeff: &CMat, r_x: &CMat) -> CMat {
        let n = grid.n();
        let nb = basis.num_basis();
        let a = grid.daft_matrix();
        let f = dft_matrix(n);
        let f_l = f.columns(0, taps) * c((n as f64).sqrt());
        let mut upsilon = CMat::zeros(n, n * nb);
        for q in 0..nb {
            let blk = a * CMat::from_diagonal(&basis.column(q)) * f.adjoint();
            upsilon.view_mut((0, q * n), (n, n)).copy_from(&blk);
        }
        let r_s = a.adjoint() * r_x * a;
        let j = CMat::from_element(nb, nb, c(1.0));
        let left = kron(&j, &(&f * r_s * f.adjoint()));
        let xi = kron(&CMat::identity(nb, nb), &f_l);
        // Xi expects g ordered basis-major, which is the crate's layout.
        let right = &xi * r_coeff * xi.adjoint();
        &upsilon * left.component_mul(&right) * upsilon.adjoint()
    }

    fn small_setup() -> (AfdmGrid, BemBasis, PilotFrame) {
        // 2 N c1 = 1 keeps the frame inside N = 16.
        let grid = AfdmGrid::new(16, 1.0 / 32.0, 1e-5).unwrap();
        let basis = BemBasis::new(16, 2, 2).unwrap();
        let frame = design_pilot_frame(&grid, 2, 1, 4.0).unwrap();
        (grid, basis, frame)
    }

    #[test]
    fn dictionary_matches_literal_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grid = AfdmGrid::new(16, 0.07, 0.003).unwrap();
        let basis = BemBasis::new(16, 2, 2).unwrap();
        let x = random_vec(16, &mut rng);
        let d = PilotDictionary::from_signal(&grid, &basis, 2, &x, &[0, 3, 5]).unwrap();
        let lit = literal_dictionary(&grid, &basis, 2, &x);
        assert!(max_abs_diff(d.psi_p(), &lit) < 1e-12);
        assert!(max_abs_diff(d.psi_pp(), &select_rows(&lit, &[0, 3, 5])) < 1e-12);
    }

    #[test]
    fn dictionary_linearizes_pilot_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grid = AfdmGrid::new(16, 0.07, 0.003).unwrap();
        let basis = BemBasis::new(16, 2, 2).unwrap();
        let x = random_vec(16, &mut rng);
        let d = PilotDictionary::from_signal(&grid, &basis, 2, &x, &[]).unwrap();
        let g = BemCoefficients::new(3, 2, random_vec(6, &mut rng)).unwrap();
        let h = reconstruct_channel(&g, &basis);
        let want = grid.conjugate(&h) * &x;
        assert!((d.psi_p() * g.as_vector() - want).norm() < 1e-12);
    }

    #[test]
    fn dictionary_zero_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (grid, basis, _) = small_setup();
        let zero = PilotDictionary::from_signal(&grid, &basis, 2, &CVec::zeros(16), &[1]).unwrap();
        assert_eq!(max_abs(zero.psi_p()), 0.0);
        let x1 = random_vec(16, &mut rng);
        let x2 = random_vec(16, &mut rng);
        let d = |x: &CVec| PilotDictionary::from_signal(&grid, &basis, 2, x, &[]).unwrap().psi_p().clone();
        assert!(max_abs_diff(&d(&(&x1 + &x2)), &(d(&x1) + d(&x2))) < 1e-12);
    }

    #[test]
    fn static_pilot_response_stays_in_window() {
        let grid = AfdmGrid::recommended(64, 1, 1, 1e-5).unwrap();
        let basis = BemBasis::new(64, 0, 2).unwrap();
        let frame = design_pilot_frame(&grid, 0, 0, 1.0).unwrap();
        let d = build_pilot_dictionary(&frame, &grid, &basis, 1).unwrap();
        let y = d.psi_p() * CVec::from_element(1, c(0.7));
        let inside: f64 = frame.obs_indices().iter().map(|&k| y[k].norm_sqr()).sum();
        assert!((inside - y.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn prior_recovers_in_range_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let basis = BemBasis::new(16, 2, 2).unwrap();
        let cmat = random_psd(6, &mut rng);
        let theta = basis.theta(2);
        let r = &theta * &cmat * theta.adjoint();
        let got = bem_prior_covariance_joint(&r, &basis, 2).unwrap();
        assert!(max_abs_diff(&got, &cmat) < 1e-8 * max_abs(&cmat));
    }

    #[test]
    fn prior_scalar_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = BemBasis::new(8, 0, 2).unwrap();
        let r = random_psd(8, &mut rng);
        let got = bem_prior_covariance(std::slice::from_ref(&r), &basis).unwrap();
        let want: Complex64 = r.iter().sum::<Complex64>() / 64.0;
        assert!((got[(0, 0)] - want).norm() < 1e-13);
    }

    #[test]
    fn block_prior_equals_joint_prior() {
        let grid = AfdmGrid::recommended(32, 1, 1, 1e-5).unwrap();
        let basis = BemBasis::new(32, 4, 2).unwrap();
        let profile = DopplerProfile::new(1.0, vec![0, 2], vec![0.7, 0.3], false).unwrap();
        let r_hh = assemble_channel_covariance(&profile, &grid, 3).unwrap();
        let mut joint = CMat::zeros(96, 96);
        for (l, r) in r_hh.iter().enumerate() {
            for a in 0..32 {
                for b in 0..32 {
                    joint[(a * 3 + l, b * 3 + l)] = r[(a, b)];
                }
            }
        }
        let block = bem_prior_covariance(&r_hh, &basis).unwrap();
        assert!(max_abs_diff(&block, &bem_prior_covariance_joint(&joint, &basis, 3).unwrap()) < 1e-12);
        assert!(is_hermitian_psd(&block, 1e-9));
    }

    #[test]
    fn prior_matches_sampled_fit_covariance() {
        let n = 64;
        let grid = AfdmGrid::recommended(n, 1, 1, 1e-5).unwrap();
        let basis = BemBasis::new(n, 4, 2).unwrap();
        let profile = DopplerProfile::uniform(1.0, vec![0], false).unwrap();
        let r_g = bem_prior_covariance(&assemble_channel_covariance(&profile, &grid, 1).unwrap(), &basis).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut acc = CMat::zeros(5, 5);
        let draws = 5000;
        for _ in 0..draws {
            let h = &sample_jakes_paths(&profile, &mut rng).tap_gains(&grid, 1).unwrap()[0];
            let g = basis.fit(h).unwrap();
            acc += &g * g.adjoint();
        }
        acc /= c(draws as f64);
        let rel = (acc - &r_g).norm() / trace_re(&r_g);
        assert!(rel < 0.1, "trace-relative deviation {rel}");
    }

    #[test]
    fn fast_response_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let grid = AfdmGrid::new(16, 0.07, 0.003).unwrap();
        let basis = BemBasis::new(16, 2, 2).unwrap();
        let r_coeff = random_psd(6, &mut rng);
        let r_x = random_psd(16, &mut rng);
        let fast = bem_response_covariance(&grid, &basis, 2, &r_coeff, &r_x).unwrap();
        let lit = literal_response(&grid, &basis, 2, &r_coeff, &r_x);
        assert!(max_abs_diff(&fast, &lit) < 1e-10 * max_abs(&lit));
    }

    #[test]
    fn model_error_fast_matches_literal() {
        // Literal form with c_lp = diag(circshift(s_p, l)) and
        // c_Al = circshift_rows(A^H, l).
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let grid = AfdmGrid::new(16, 0.07, 0.003).unwrap();
        let a = grid.daft_matrix();
        let r_mod = vec![random_psd(16, &mut rng), random_psd(16, &mut rng)];
        let x_p = random_vec(16, &mut rng);
        let r_xd = data_signal_covariance(16, &[5, 6, 9, 12], 1.3);
        let s_p = a.adjoint() * &x_p;
        let mut lit = CMat::zeros(16, 16);
        for (l, r) in r_mod.iter().enumerate() {
            let clp = CMat::from_diagonal(&circshift(&s_p, l));
            let cal = crate::linalg::circshift_rows(&a.adjoint(), l);
            lit += a * &clp * r * clp.adjoint() * a.adjoint();
            lit += a * (&cal * &r_xd * cal.adjoint()).component_mul(r) * a.adjoint();
        }
        let fast = model_error_rx_covariance(&grid, &r_mod, &x_p, &r_xd).unwrap();
        assert!(max_abs_diff(&fast, &lit) < 1e-10 * max_abs(&lit));
    }

    #[test]
    fn data_covariance_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (grid, basis, frame) = small_setup();
        let r_g = random_psd(6, &mut rng);
        let none = bem_response_covariance(&grid, &basis, 2, &r_g, &CMat::zeros(16, 16)).unwrap();
        assert_eq!(max_abs(&none), 0.0);
        let one = data_covariance(&frame, &grid, &basis, &r_g, 1.0).unwrap();
        let two = data_covariance(&frame, &grid, &basis, &r_g, 2.0).unwrap();
        assert!(max_abs_diff(&(one.clone() * c(2.0)), &two) < 1e-12 * max_abs(&two));
        assert!(is_hermitian_psd(&one, 1e-9));
    }

    #[test]
    fn model_error_vanishes_on_grid() {
        // Doppler at basis frequencies only: each tap lies in span(B).
        let (grid, basis, frame) = small_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let coeffs = random_psd(3, &mut rng);
        let r_tap = basis.matrix() * coeffs * basis.matrix().adjoint();
        let r_mod = vec![model_error_covariance(&basis, &r_tap); 2];
        let r_xd = data_signal_covariance(16, frame.data_indices(), 1.0);
        let rz = model_error_rx_covariance(&grid, &r_mod, &frame.pilot_vector(), &r_xd).unwrap();
        assert!(max_abs(&rz) < 1e-9);
    }

    #[test]
    fn data_covariance_monte_carlo() {
        let (grid, basis, frame) = small_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r_g = random_psd(6, &mut rng);
        let r_d = data_covariance(&frame, &grid, &basis, &r_g, 1.0).unwrap();
        let factor = psd_factor(&r_g);
        let draws = 20_000;
        let mut acc = CMat::zeros(16, 16);
        let qpsk = std::f64::consts::FRAC_1_SQRT_2;
        for _ in 0..draws {
            let g = BemCoefficients::new(3, 2, &factor * complex_normal(6, &mut rng)).unwrap();
            let data: Vec<Complex64> = frame
                .data_indices()
                .iter()
                .map(|_| Complex64::new(if rng.random() { qpsk } else { -qpsk }, if rng.random() { qpsk } else { -qpsk }))
                .collect();
            let e = embed(&frame, &data).unwrap();
            let y = effective_response(&grid, &reconstruct_taps(&g, &basis), &e.x_d).unwrap();
            acc += &y * y.adjoint();
        }
        acc /= c(draws as f64);
        let dev = max_abs_diff(&acc, &r_d) / max_abs(&r_d);
        assert!(dev < 0.1, "deviation {dev}");
    }

    #[test]
    fn model_error_monte_carlo() {
        let (grid, basis, frame) = small_setup();
        let profile = DopplerProfile::uniform(1.0, vec![0, 1], false).unwrap();
        let cov = CovarianceSet::for_frame(&profile, &grid, &basis, &frame, 1.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws = 20_000;
        let mut acc = CMat::zeros(16, 16);
        for _ in 0..draws {
            let taps = sample_jakes_paths(&profile, &mut rng).tap_gains(&grid, 2).unwrap();
            let resid: Vec<CVec> = taps.iter().map(|h| basis.residual(h)).collect();
            let data: Vec<Complex64> = complex_normal(frame.data_indices().len(), &mut rng).iter().copied().collect();
            let e = embed(&frame, &data).unwrap();
            let z = effective_response(&grid, &resid, &e.x).unwrap();
            acc += &z * z.adjoint();
        }
        acc /= c(draws as f64);
        let dev = max_abs_diff(&acc, cov.r_z()) / max_abs(cov.r_z());
        assert!(dev < 0.1, "deviation {dev}");
        assert!(is_hermitian_psd(cov.r_z(), 1e-9));
    }

    #[test]
    fn matches_joint_gaussian_conditional_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let grid = AfdmGrid::new(8, 1.0 / 16.0, 1e-5).unwrap();
        let basis = BemBasis::new(8, 2, 2).unwrap();
        let x_p = CVec::from_fn(8, |k, _| if k == 2 { c(3.0) } else { c(0.0) });
        let obs: Vec<usize> = (0..8).collect();
        let dict = PilotDictionary::from_signal(&grid, &basis, 2, &x_p, &obs).unwrap();
        let r_g = random_psd(6, &mut rng);
        let sigma2 = 0.05;
        let cov = CovarianceSet::from_parts(vec![], r_g.clone(), CMat::zeros(8, 8), CMat::zeros(8, 8), sigma2, &obs).unwrap();
        let est = MmseEstimator::prepare(&dict, &cov).unwrap();
        // Joint covariance of [g; y] from y = Psi g + w, Psi taken literally.
        let psi = literal_dictionary(&grid, &basis, 2, &x_p);
        let mut map = CMat::zeros(14, 14);
        map.view_mut((0, 0), (6, 6)).fill_with_identity();
        map.view_mut((6, 0), (8, 6)).copy_from(&psi);
        map.view_mut((6, 6), (8, 8)).fill_with_identity();
        let mut src = CMat::zeros(14, 14);
        src.view_mut((0, 0), (6, 6)).copy_from(&r_g);
        src.view_mut((6, 6), (8, 8)).fill_diagonal(c(sigma2));
        let joint = &map * src * map.adjoint();
        let c_gy = joint.view((0, 6), (6, 8)).into_owned();
        let c_yy = joint.view((6, 6), (8, 8)).into_owned();
        let c_yy_inv = c_yy.clone().try_inverse().unwrap();
        for _ in 0..5 {
            let y = random_vec(8, &mut rng);
            let want = &c_gy * &c_yy_inv * &y;
            let got = est.estimate(&y).unwrap();
            assert!((got.as_vector() - &want).norm() < 1e-8 * want.norm().max(1.0));
        }
        let schur = &r_g - &c_gy * &c_yy_inv * c_gy.adjoint();
        assert!(max_abs_diff(est.error_covariance(), &schur) < 1e-8 * max_abs(&r_g));
    }

    #[test]
    fn error_covariance_sanity_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let grid = AfdmGrid::new(8, 1.0 / 16.0, 1e-5).unwrap();
        let basis = BemBasis::new(8, 2, 2).unwrap();
        let x_p = CVec::from_fn(8, |k, _| if k == 2 { c(2.0) } else { c(0.0) });
        let obs: Vec<usize> = (0..8).collect();
        let dict = PilotDictionary::from_signal(&grid, &basis, 2, &x_p, &obs).unwrap();
        let r_g = random_psd(6, &mut rng);
        let cov = CovarianceSet::from_parts(vec![], r_g.clone(), CMat::zeros(8, 8), CMat::zeros(8, 8), 0.2, &obs).unwrap();
        let est = MmseEstimator::prepare(&dict, &cov).unwrap();
        assert!(is_hermitian_psd(est.error_covariance(), 1e-9));
        assert!(trace_re(est.error_covariance()) <= trace_re(&r_g));
        let factor = psd_factor(&r_g);
        let mut cross = CMat::zeros(6, 6);
        let draws = 20_000;
        for _ in 0..draws {
            let g = &factor * complex_normal(6, &mut rng);
            let y = dict.psi_pp() * &g + complex_normal(8, &mut rng) * c(0.2f64.sqrt());
            let gh = est.estimate(&y).unwrap().as_vector().clone();
            cross += &gh * (&g - &gh).adjoint();
        }
        cross /= c(draws as f64);
        assert!(max_abs(&cross) < 0.05 * max_abs(&r_g), "cross {}", max_abs(&cross));
    }

    #[test]
    fn large_noise_collapses_to_prior_mean() {
        let (grid, basis, frame) = small_setup();
        let profile = DopplerProfile::uniform(1.0, vec![0, 1], false).unwrap();
        let cov = CovarianceSet::for_frame(&profile, &grid, &basis, &frame, 1.0, 1e9).unwrap();
        let dict = build_pilot_dictionary(&frame, &grid, &basis, 2).unwrap();
        let est = MmseEstimator::prepare(&dict, &cov).unwrap();
        let y = CVec::from_element(frame.obs_indices().len(), c(1.0));
        assert!(est.estimate(&y).unwrap().as_vector().norm() < 1e-6);
    }

    #[test]
    fn noiseless_in_span_reconstruction() {
        let grid = AfdmGrid::recommended(64, 1, 1, 1e-5).unwrap();
        let basis = BemBasis::new(64, 4, 2).unwrap();
        let frame = design_pilot_frame(&grid, 4, 1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let r_g = CMat::identity(10, 10);
        let dict = build_pilot_dictionary(&frame, &grid, &basis, 2).unwrap();
        let obs = frame.obs_indices();
        let n = 64;
        let zero = CMat::zeros(n, n);
        // sigma_w = 1e-8 leaves the rank-10 Gram of size 20 far beyond the
        // condition limit, so it is refused; sigma_w = 1e-5 is accepted.
        let cov = CovarianceSet::from_parts(vec![], r_g, zero.clone(), zero, 1e-16, obs).unwrap();
        assert!(matches!(MmseEstimator::prepare(&dict, &cov), Err(Error::IllConditioned { .. })));
        let cov = cov.with_noise_var(1e-10).unwrap();
        let g = BemCoefficients::new(5, 2, complex_normal(10, &mut rng)).unwrap();
        let taps = reconstruct_taps(&g, &basis);
        let h = delay_tap_matrix(&taps);
        let e = embed(&frame, &vec![c(0.0); frame.data_indices().len()]).unwrap();
        let y = effective_response(&grid, &taps, &e.x).unwrap();
        let y_p = extract_observation(&frame, &y).unwrap();
        let res = mmse_estimate(&y_p, &dict, &cov, &basis, &grid).unwrap();
        let rel = (&res.h_hat - &h).norm() / h.norm();
        assert!(rel < 1e-3, "relative error {rel}");
        assert!(max_abs_diff(&res.h_eff_hat, &grid.conjugate(&res.h_hat)) < 1e-12);
    }

    #[test]
    fn nmse_trivial_cases() {
        let grid = AfdmGrid::recommended(32, 1, 1, 1e-5).unwrap();
        let basis = BemBasis::new(32, 4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let cmat = random_psd(5, &mut rng);
        let in_span = vec![basis.matrix() * cmat * basis.matrix().adjoint()];
        let t = closed_form_nmse(&basis, &in_span, &CMat::zeros(5, 5));
        assert!(t.total.abs() < 1e-12);
        let profile = DopplerProfile::uniform(1.0, vec![0], false).unwrap();
        let r_hh = assemble_channel_covariance(&profile, &grid, 1).unwrap();
        let r_g = bem_prior_covariance(&r_hh, &basis).unwrap();
        let t = closed_form_nmse(&basis, &r_hh, &r_g);
        let theta = basis.theta(1);
        let want = (trace_re(&(basis.projector() * &r_hh[0])) + trace_re(&(&theta * &r_g * theta.adjoint()))) / trace_re(&r_hh[0]);
        assert!((t.total - want).abs() < 1e-12);
        // No pilot information: the prior alone explains nearly everything.
        assert!((t.total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn nmse_monotone_in_noise() {
        let grid = AfdmGrid::recommended(64, 1, 1, 1e-5).unwrap();
        let q = min_bem_order(1.0, 2).unwrap();
        let basis = BemBasis::new(64, q, 2).unwrap();
        let frame = design_pilot_frame(&grid, q, 2, 100.0).unwrap();
        let profile = DopplerProfile::uniform(1.0, vec![0, 1, 2], false).unwrap();
        let dict = build_pilot_dictionary(&frame, &grid, &basis, 3).unwrap();
        let base = CovarianceSet::for_frame(&profile, &grid, &basis, &frame, 1.0, 1.0).unwrap();
        let mut last = 0.0;
        for &s in &[1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0] {
            let est = MmseEstimator::prepare(&dict, &base.with_noise_var(s).unwrap()).unwrap();
            let nmse = closed_form_nmse(&basis, base.r_hh(), est.error_covariance()).total;
            assert!(nmse >= last);
            last = nmse;
            assert_eq!(est.gram_dimension(), 2 * frame.q_guard() + 2);
        }
    }

    #[test]
    fn covariance_set_is_psd() {
        let grid = AfdmGrid::recommended(64, 1, 1, 1e-5).unwrap();
        let basis = BemBasis::new(64, 4, 2).unwrap();
        let frame = design_pilot_frame(&grid, 4, 2, 10.0).unwrap();
        let profile = DopplerProfile::uniform(1.0, vec![0, 1, 2], false).unwrap();
        let cov = CovarianceSet::for_frame(&profile, &grid, &basis, &frame, 1.0, 0.1).unwrap();
        for m in [cov.r_g(), cov.r_d(), cov.r_z()] {
            assert!(is_hermitian_psd(m, 1e-9));
        }
    }

    #[test]
    fn naive_baseline_agrees_on_noise_only_problem() {
        // With R_hh inside the BEM span and no data, both estimators target
        // the same posterior mean of the taps.
        let grid = AfdmGrid::recommended(64, 1, 1, 1e-5).unwrap();
        let basis = BemBasis::new(64, 4, 2).unwrap();
        let frame = design_pilot_frame(&grid, 4, 1, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let r_g = CMat::identity(10, 10);
        let r_hh: Vec<CMat> = (0..2)
            .map(|l| {
                let blk = tap_pair_block(&r_g, 5, 2, l, l);
                basis.matrix() * blk * basis.matrix().adjoint()
            })
            .collect();
        let naive = NaiveMmseEstimator::new(&grid, &frame.pilot_vector(), &r_hh, 0.01).unwrap();
        let g = BemCoefficients::new(5, 2, complex_normal(10, &mut rng)).unwrap();
        let taps = reconstruct_taps(&g, &basis);
        let y = effective_response(&grid, &taps, &frame.pilot_vector()).unwrap() + complex_normal(64, &mut rng) * c(0.1);
        let h_naive = naive.estimate(&y).unwrap();
        let truth = CVec::from_fn(128, |k, _| taps[k % 2][k / 2]);
        let rel = (&h_naive - &truth).norm() / truth.norm();
        assert!(rel < 0.1, "relative error {rel}");
        assert_eq!(naive.gram_dimension(), 64);
    }
}
