//! Quick oracle suite behind the `validate` subcommand.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::bem::{model_error_covariance, BemBasis};
use crate::channel::{channel_autocorrelation, sample_jakes_paths, DopplerProfile};
use crate::detector::{count_bit_errors, detect, DataEqualizer, QamConstellation};
use crate::error::Result;
use crate::estimator::{CovarianceSet, MmseEstimator, PilotDictionary};
use crate::frame::design_pilot_frame;
use crate::linalg::{complex_normal, dft_matrix, max_abs_diff, trace_re, CMat, CVec};
use crate::special::erfc;
use crate::transforms::{build_daft_matrix, AfdmGrid, ChirpDesign};

use super::config::SimConfig;
use super::trial::{run_trial, TrialSetup};

#[derive(Clone, Debug, Serialize)]
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> ValidationCheck {
    ValidationCheck { name, passed, detail }
}

fn daft_unitarity() -> ValidationCheck {
    let worst = [2usize, 16, 64, 256]
        .iter()
        .map(|&n| {
            let c1 = ChirpDesign { alpha_max: 1, k_nu: 1 }.c1(n);
            let a = build_daft_matrix(n, c1, 1e-5);
            max_abs_diff(&(&a * a.adjoint()), &CMat::identity(n, n))
        })
        .fold(0.0, f64::max);
    let dft = max_abs_diff(&build_daft_matrix(64, 0.0, 0.0), &dft_matrix(64));
    check("daft_unitarity", worst < 1e-10 && dft < 1e-12, format!("max |AA^H - I| = {worst:.2e}, |A - F| = {dft:.2e}"))
}

fn frame_layout() -> Result<ValidationCheck> {
    let grid = AfdmGrid::recommended(256, 1, 1, 1e-5)?;
    let f = design_pilot_frame(&grid, 4, 2, 1.0)?;
    let ok = f.q_guard() == 14 && f.pilot_positions() == [14, 29] && f.obs_indices().len() == 30 && f.data_indices().len() == 212;
    Ok(check("frame_layout", ok, format!("Q_B = {}, pilots {:?}", f.q_guard(), f.pilot_positions())))
}

fn conditional_mean(rng: &mut ChaCha20Rng) -> Result<ValidationCheck> {
    let grid = AfdmGrid::new(8, 1.0 / 16.0, 1e-5)?;
    let basis = BemBasis::new(8, 2, 2)?;
    let x_p = CVec::from_fn(8, |k, _| Complex64::new(if k == 2 { 3.0 } else { 0.0 }, 0.0));
    let obs: Vec<usize> = (0..8).collect();
    let dict = PilotDictionary::from_signal(&grid, &basis, 2, &x_p, &obs)?;
    let a = complex_normal(36, rng);
    let a = CMat::from_iterator(6, 6, a.iter().copied());
    let r_g = &a * a.adjoint();
    let s2 = 0.05;
    let cov = CovarianceSet::from_parts(vec![], r_g.clone(), CMat::zeros(8, 8), CMat::zeros(8, 8), s2, &obs)?;
    let est = MmseEstimator::prepare(&dict, &cov)?;
    let psi = dict.psi_pp();
    let c_yy = psi * &r_g * psi.adjoint() + CMat::identity(8, 8) * Complex64::new(s2, 0.0);
    let c_gy = &r_g * psi.adjoint();
    let y = complex_normal(8, rng);
    let want = c_gy * c_yy.try_inverse().expect("noise keeps C_yy invertible") * &y;
    let err = (est.estimate(&y)?.as_vector() - &want).norm() / want.norm();
    Ok(check("estimator_conditional_mean", err < 1e-8, format!("relative error {err:.2e}")))
}

fn residual_law(rng: &mut ChaCha20Rng) -> Result<ValidationCheck> {
    let n = 64;
    let grid = AfdmGrid::recommended(n, 1, 1, 1e-5)?;
    let basis = BemBasis::new(n, 4, 2)?;
    let profile = DopplerProfile::uniform(1.0, vec![0], false)?;
    let r = &channel_autocorrelation(&profile, n, 1)[0];
    let want = trace_re(&model_error_covariance(&basis, r)) / trace_re(r);
    let (mut res, mut tot) = (0.0, 0.0);
    for _ in 0..2000 {
        let h = &sample_jakes_paths(&profile, rng).tap_gains(&grid, 1)?[0];
        res += basis.residual(h).norm_squared();
        tot += h.norm_squared();
    }
    let ratio = res / tot / want;
    Ok(check("bem_residual_law", (ratio - 1.0).abs() < 0.05, format!("empirical / analytic = {ratio:.4}")))
}

fn awgn_qpsk(rng: &mut ChaCha20Rng) -> Result<ValidationCheck> {
    let q = QamConstellation::qpsk();
    let n = 64;
    let snr = 10f64.powf(0.6);
    let s2 = 1.0 / snr;
    let data: Vec<usize> = (0..n).collect();
    let eq = DataEqualizer::new(&CMat::identity(n, n), &data, 1.0, &(CMat::identity(n, n) * Complex64::new(s2, 0.0)))?;
    let (mut errors, mut bits) = (0, 0);
    for _ in 0..500 {
        let sent: Vec<u8> = (0..2 * n).map(|_| rng.random_range(0..2u8)).collect();
        let y = CVec::from_vec(q.map_bits(&sent)?) + complex_normal(n, rng) * Complex64::new(s2.sqrt(), 0.0);
        errors += count_bit_errors(&sent, &detect(&y, &eq, &q)?.hard_bits)?;
        bits += sent.len() as u64;
    }
    let ber = errors as f64 / bits as f64;
    let theory = 0.5 * erfc((snr / 2.0).sqrt());
    Ok(check("awgn_qpsk", (ber / theory - 1.0).abs() < 0.1, format!("BER {ber:.4e} vs {theory:.4e} at 6 dB")))
}

fn nmse_theory(seed: u64) -> Result<ValidationCheck> {
    let cfg = SimConfig::default();
    let setup = TrialSetup::new(&cfg)?;
    let (mut e, mut h) = (0.0, 0.0);
    for t in 0..1000 {
        let r = run_trial(&setup, seed, t, false)?;
        e += r.error_energy;
        h += r.channel_energy;
    }
    let ratio = e / h / setup.nmse_theory.total;
    Ok(check("nmse_theory", (ratio - 1.0).abs() < 0.1, format!("Monte Carlo / closed form = {ratio:.4}")))
}

fn covariance_psd() -> Result<ValidationCheck> {
    let setup = TrialSetup::new(&SimConfig::default())?;
    let c = &setup.covariances;
    let ok = [c.r_g(), c.r_d(), c.r_z()].iter().all(|m| crate::linalg::is_hermitian_psd(m, 1e-9));
    Ok(check("covariances_psd", ok, "R_g, R_d, R_z Hermitian PSD".into()))
}

/// Runs every check; failures are reported, not raised.
pub fn run_validation(seed: u64) -> Result<Vec<ValidationCheck>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(vec![
        daft_unitarity(),
        frame_layout()?,
        conditional_mean(&mut rng)?,
        residual_law(&mut rng)?,
        awgn_qpsk(&mut rng)?,
        covariance_psd()?,
        nmse_theory(seed)?,
    ])
}
