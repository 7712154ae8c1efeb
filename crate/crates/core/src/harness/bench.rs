//! Wall-time comparison of the BEM-structured estimator and an unstructured
//! full-N MMSE baseline.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::channel::{effective_response, sample_jakes_paths};
use crate::error::Result;
use crate::estimator::{MmseEstimator, NaiveMmseEstimator};
use crate::frame::extract_observation;

use super::config::SimConfig;
use super::trial::TrialSetup;

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub n: usize,
    /// Median seconds per estimate: Gram formation, factorization and apply.
    pub bem_seconds: f64,
    pub naive_seconds: f64,
    pub speedup: f64,
    pub bem_gram_dim: usize,
    pub naive_gram_dim: usize,
    pub q_guard: usize,
}

fn median_seconds(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        f()?;
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

/// Times both estimators at each frame size. Configuration-level statistics
/// (dictionary, covariances) are built outside the timed region for both.
pub fn complexity_benchmark(cfg: &SimConfig, sizes: &[usize], reps: usize) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut c = cfg.clone();
        c.grid.n = n;
        let setup = TrialSetup::new(&c)?;
        let mut rng = ChaCha20Rng::seed_from_u64(c.seed);
        let taps = sample_jakes_paths(&setup.profile, &mut rng).tap_gains(&setup.grid, setup.taps)?;
        let x_p = setup.frame.pilot_vector();
        let y = effective_response(&setup.grid, &taps, &x_p)?;
        let y_p = extract_observation(&setup.frame, &y)?;
        let naive = NaiveMmseEstimator::new(&setup.grid, &x_p, setup.covariances.r_hh(), setup.noise_var)?;
        let mut bem_dim = 0;
        let bem_seconds = median_seconds(reps.max(1) * 5, || {
            let est = MmseEstimator::prepare(&setup.dictionary, &setup.covariances)?;
            bem_dim = est.gram_dimension();
            std::hint::black_box(est.estimate(&y_p)?);
            Ok(())
        })?;
        let naive_seconds = median_seconds(reps.max(1), || {
            std::hint::black_box(naive.estimate(&y)?);
            Ok(())
        })?;
        rows.push(BenchRow {
            n,
            bem_seconds,
            naive_seconds,
            speedup: naive_seconds / bem_seconds,
            bem_gram_dim: bem_dim,
            naive_gram_dim: naive.gram_dimension(),
            q_guard: setup.frame.q_guard(),
        });
    }
    Ok(rows)
}
