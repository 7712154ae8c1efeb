//! Per-configuration precomputation and the single Monte Carlo trial.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::bem::{reconstruct_taps, BemBasis};
use crate::channel::{delay_tap_matrix, effective_response, sample_jakes_paths, DopplerProfile};
use crate::detector::{
    cancel_pilot, count_bit_errors, detect, genie_error_term, DataEqualizer, ErrorTermModel, QamConstellation,
};
use crate::error::{Error, Result};
use crate::estimator::{
    bem_response_covariance, build_pilot_dictionary, closed_form_nmse, data_signal_covariance, tap_error_energy,
    CovarianceSet, EstimationDiagnostics, MmseEstimator, NmseTerms, PilotDictionary,
};
use crate::frame::{design_pilot_frame, embed, extract_observation, PilotFrame};
use crate::linalg::{complex_normal, CMat, CVec};
use crate::transforms::AfdmGrid;

use super::config::SimConfig;

/// Unit data energy, `eps_{x_d}`.
pub const DATA_POWER: f64 = 1.0;

/// Everything shared read-only by the trials of one configuration.
#[derive(Debug)]
pub struct TrialSetup {
    pub grid: AfdmGrid,
    pub basis: BemBasis,
    pub frame: PilotFrame,
    pub profile: DopplerProfile,
    pub constellation: QamConstellation,
    pub noise_var: f64,
    pub taps: usize,
    pub dictionary: PilotDictionary,
    pub covariances: CovarianceSet,
    pub estimator: MmseEstimator,
    pub nmse_theory: NmseTerms,
    pub error_term: ErrorTermModel,
    /// `E[H~ R_x H~^H] + R_z + sigma^2 I` for the expected-error equalizer.
    expected_other: CMat,
    /// `R_x = R_xd + x_p x_p^H`, kept for the genie error term.
    r_x: CMat,
}

impl TrialSetup {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        let g = &cfg.grid;
        let grid = AfdmGrid::recommended(g.n, g.design_alpha_max, g.k_nu, g.c2)?;
        let q = cfg.bem_order()?;
        let basis = BemBasis::new(g.n, q, cfg.bem.oversampling)?;
        let frame = design_pilot_frame(&grid, q, cfg.frame.l_max, cfg.pilot_power())?;
        let profile = cfg.doppler_profile()?;
        let constellation = cfg.constellation()?;
        let noise_var = cfg.noise_var();
        let taps = cfg.frame.l_max + 1;
        let dictionary = build_pilot_dictionary(&frame, &grid, &basis, taps)?;
        let covariances = CovarianceSet::for_frame(&profile, &grid, &basis, &frame, DATA_POWER, noise_var)?;
        let estimator = MmseEstimator::prepare(&dictionary, &covariances)?;
        let nmse_theory = closed_form_nmse(&basis, covariances.r_hh(), estimator.error_covariance());
        let x_p = frame.pilot_vector();
        let r_x = data_signal_covariance(g.n, frame.data_indices(), DATA_POWER) + &x_p * x_p.adjoint();
        let error = bem_response_covariance(&grid, &basis, taps, estimator.error_covariance(), &r_x)?;
        let n = g.n;
        let expected_other = error + covariances.r_z() + CMat::identity(n, n) * Complex64::new(noise_var, 0.0);
        Ok(Self {
            grid,
            basis,
            frame,
            profile,
            constellation,
            noise_var,
            taps,
            dictionary,
            covariances,
            estimator,
            nmse_theory,
            error_term: cfg.detection.error_term,
            expected_other,
            r_x,
        })
    }

    pub fn diagnostics(&self) -> EstimationDiagnostics {
        EstimationDiagnostics::new(&self.estimator, &self.basis, &self.covariances)
    }

    /// Interference-plus-noise covariance handed to the equalizer.
    fn equalizer_other(&self, true_taps: &[CVec], h_hat: &CMat) -> Result<CMat> {
        match self.error_term {
            ErrorTermModel::Expected => Ok(self.expected_other.clone()),
            ErrorTermModel::Genie => {
                // BEM part of the true channel minus the estimate; the
                // out-of-span residual stays in R_z.
                let fit = crate::bem::fit_coefficients(true_taps, &self.basis)?;
                let h_bem = delay_tap_matrix(&reconstruct_taps(&fit, &self.basis));
                let h_tilde = self.grid.conjugate(&(h_bem - h_hat));
                let n = self.grid.n();
                Ok(genie_error_term(&h_tilde, &self.r_x)
                    + self.covariances.r_z()
                    + CMat::identity(n, n) * Complex64::new(self.noise_var, 0.0))
            }
        }
    }
}

/// Outcome of one trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    /// `||H - H_hat||_F^2`.
    pub error_energy: f64,
    /// `||H||_F^2`.
    pub channel_energy: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub ber_bound: f64,
    pub ber_theory: f64,
    pub convex: bool,
}

impl TrialRecord {
    pub fn nmse(&self) -> f64 {
        self.error_energy / self.channel_energy
    }
}

/// Independent generator for one trial: the root seed picks the key, the
/// trial index picks the stream.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// One full chain: channel, frame, reception, estimation and, when
/// `with_detection`, equalization and detection.
pub fn run_trial(setup: &TrialSetup, seed: u64, trial: u64, with_detection: bool) -> Result<TrialRecord> {
    run_trial_inner(setup, seed, trial, with_detection).map_err(|e| Error::Trial { trial, source: Box::new(e) })
}

fn run_trial_inner(setup: &TrialSetup, seed: u64, trial: u64, with_detection: bool) -> Result<TrialRecord> {
    let mut rng = trial_rng(seed, trial);
    let n = setup.grid.n();
    let channel = sample_jakes_paths(&setup.profile, &mut rng);
    let taps = channel.tap_gains(&setup.grid, setup.taps)?;
    let k = setup.constellation.bits_per_symbol();
    let n_data = setup.frame.data_indices().len();
    let sent: Vec<u8> = (0..n_data * k).map(|_| rng.random_range(0..2u8)).collect();
    let symbols = setup.constellation.map_bits(&sent)?;
    let frame = embed(&setup.frame, &symbols)?;
    let noise = complex_normal(n, &mut rng) * Complex64::new(setup.noise_var.sqrt(), 0.0);
    let y = effective_response(&setup.grid, &taps, &frame.x)? + noise;
    let y_p = extract_observation(&setup.frame, &y)?;
    let g_hat = setup.estimator.estimate(&y_p)?;
    let error_energy = tap_error_energy(&taps, &g_hat, &setup.basis);
    let channel_energy: f64 = taps.iter().map(|h| h.norm_squared()).sum();
    let mut record = TrialRecord {
        trial,
        error_energy,
        channel_energy,
        bit_errors: 0,
        bits: 0,
        ber_bound: f64::NAN,
        ber_theory: f64::NAN,
        convex: false,
    };
    if !with_detection {
        return Ok(record);
    }
    let h_hat = delay_tap_matrix(&reconstruct_taps(&g_hat, &setup.basis));
    let h_eff_hat = setup.grid.conjugate(&h_hat);
    let y_hat = cancel_pilot(&y, &h_eff_hat, &frame.x_p)?;
    let other = setup.equalizer_other(&taps, &h_hat)?;
    let eq = DataEqualizer::new(&h_eff_hat, setup.frame.data_indices(), DATA_POWER, &other)?;
    let det = detect(&y_hat, &eq, &setup.constellation)?;
    record.bit_errors = count_bit_errors(&sent, &det.hard_bits)?;
    record.bits = sent.len() as u64;
    record.ber_bound = det.ber.bound;
    record.ber_theory = det.ber.average;
    record.convex = det.ber.convex;
    Ok(record)
}
