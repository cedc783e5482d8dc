//! Empirical check of the range bound: simulate the measurement stack,
//! estimate `x = (k0, z_s, z_d, a)` by weighted Gauss–Newton (maximum
//! likelihood under the Gaussian model), map to the range and compare the
//! spread of the estimates with the bound.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::crb::{assemble_fim, crb_d_transform, CrbError, FisherBlocks};
use crate::numerics::{spd_inverse, QuadratureSpec};
use crate::ray::{k0_upper_bound, solve_k0_from_tof_any_depth, RayError, RayScenario};
use crate::ssp::{build_sampling_matrix, simulate_ssp_measurements_with, NoiseModel, SamplingMatrix, SoundSpeedProfile, SspError};

/// Gauss–Newton iteration cap.
pub const MAX_ITERATIONS: usize = 50;
/// Largest tolerated share of non-converged trials.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.05;

const MAX_HALVINGS: usize = 40;
/// Converged once the Gauss–Newton step moves the estimate by less than this
/// many standard deviations (Newton decrement `√(gᵀ N⁻¹ g)`).
pub const DECREMENT_TOLERANCE: f64 = 1e-6;
/// Iterates never go closer to the grazing limit than this fraction of it.
const K0_CLAMP: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonteCarloError {
    #[error("at least 100 trials are required, got {0}")]
    TooFewTrials(usize),
    #[error("{excluded} of {trials} trials failed to converge")]
    TooManyFailures { excluded: usize, trials: usize },
    #[error("measurement vector has {got} sound speed samples, noise model expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("no admissible starting point for the estimator")]
    InfeasibleStart,
    #[error(transparent)]
    Ray(#[from] RayError),
    #[error(transparent)]
    Ssp(#[from] SspError),
    #[error(transparent)]
    Crb(#[from] CrbError),
}

/// Ground truth for a simulation: the true profile and ray.
#[derive(Debug, Clone)]
pub struct Truth {
    pub profile: SoundSpeedProfile,
    pub z_s: f64,
    pub z_d: f64,
    pub k0: f64,
}

impl Truth {
    pub fn scenario(&self) -> Result<RayScenario<'_>, RayError> {
        RayScenario::new(&self.profile, self.z_s, self.z_d, self.k0)
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut x = vec![self.k0, self.z_s, self.z_d];
        x.extend_from_slice(&self.profile.coefficients);
        x
    }
}

/// The stacked measurements `(t̂, ẑ_s, ẑ_d, ĉ_1..ĉ_M)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementVector {
    pub t_hat: f64,
    pub z_s_hat: f64,
    pub z_d_hat: f64,
    pub c_hat: Vec<f64>,
}

impl MeasurementVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.t_hat, self.z_s_hat, self.z_d_hat];
        v.extend_from_slice(&self.c_hat);
        v
    }
}

pub fn simulate_measurements(truth: &Truth, noise: &NoiseModel, seed: u64) -> Result<MeasurementVector, MonteCarloError> {
    noise.validate(&truth.profile)?;
    let t = truth.scenario()?.tof()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nt = Normal::new(0.0, noise.sigma_t_sq.sqrt()).expect("validated variance");
    let nz = Normal::new(0.0, noise.sigma_z_sq.sqrt()).expect("validated variance");
    let t_hat = t + nt.sample(&mut rng);
    let z_s_hat = truth.z_s + nz.sample(&mut rng);
    let z_d_hat = truth.z_d + nz.sample(&mut rng);
    let c_hat = simulate_ssp_measurements_with(&truth.profile, noise, &mut rng);
    Ok(MeasurementVector {
        t_hat,
        z_s_hat,
        z_d_hat,
        c_hat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub x_hat: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `√(Σ r_m² / σ_m²)` at the final iterate.
    pub residual_norm: f64,
    /// Range implied by the final iterate.
    pub d_hat: f64,
    /// Whether some iterate had its Snell constant projected back into the
    /// admissible bracket.
    pub projected: bool,
}

/// Everything the estimator knows: nominal profile and basis (the
/// coefficients of `model` are ignored), noise model and quadrature.
#[derive(Debug, Clone)]
pub struct EstimatorModel<'a> {
    pub model: &'a SoundSpeedProfile,
    pub noise: &'a NoiseModel,
    pub sampling: &'a SamplingMatrix,
    pub quad: QuadratureSpec,
}

struct Evaluation {
    residual: Vec<f64>,
    objective: f64,
    gradient: DVector<f64>,
    normal: nalgebra::DMatrix<f64>,
}

impl<'a> EstimatorModel<'a> {
    pub fn new(model: &'a SoundSpeedProfile, noise: &'a NoiseModel, sampling: &'a SamplingMatrix) -> Self {
        Self {
            model,
            noise,
            sampling,
            quad: QuadratureSpec {
                abs_tol: 1e-13,
                rel_tol: 1e-13,
                ..QuadratureSpec::default()
            },
        }
    }

    fn profile(&self, a: &[f64]) -> Option<SoundSpeedProfile> {
        self.model.with_coefficients(a.to_vec()).ok()
    }

    fn evaluate(&self, meas: &MeasurementVector, x: &[f64]) -> Option<Evaluation> {
        let profile = self.profile(&x[3..])?;
        let s = RayScenario::unchecked(&profile, x[1], x[2], x[0]).with_quadrature(self.quad);
        if x[1] == x[2] || !(x[0] >= 0.0) || x[0] > k0_upper_bound(&profile, x[1], x[2]) {
            return None;
        }
        let t = s.tof().ok()?;
        let grad = s.tof_gradients().ok()?;
        let mut residual = vec![meas.t_hat - t, meas.z_s_hat - x[1], meas.z_d_hat - x[2]];
        residual.extend(
            self.noise
                .sample_depths
                .iter()
                .zip(&meas.c_hat)
                .map(|(&z, c)| c - profile.speed(z)),
        );
        let var = self.noise.measurement_variances();
        let objective = residual.iter().zip(&var).map(|(r, v)| r * r / v).sum();
        let n = x.len() - 3;
        // Jᵀ W r with J rows: ToF gradient, two unit rows, then [0 | F].
        let mut gradient = DVector::zeros(n + 3);
        for (i, g) in grad.to_vec().iter().enumerate() {
            gradient[i] += g * residual[0] / var[0];
        }
        gradient[1] += residual[1] / var[1];
        gradient[2] += residual[2] / var[2];
        for m in 0..self.noise.samples() {
            for j in 0..n {
                gradient[3 + j] += self.sampling.entries[(m, j)] * residual[3 + m] / var[3 + m];
            }
        }
        let normal = assemble_fim(&FisherBlocks::from_gradient(&grad, self.noise, self.sampling).ok()?).ok()?;
        Some(Evaluation {
            residual,
            objective,
            gradient,
            normal,
        })
    }

    fn decrement(eval: &Evaluation) -> Option<(DVector<f64>, f64)> {
        let inv = spd_inverse(&eval.normal).ok()?;
        let step = inv * &eval.gradient;
        let dec = step.dot(&eval.gradient).max(0.0).sqrt();
        Some((step, dec))
    }

    /// Plug-in starting point: measured depths, least-squares coefficients
    /// from the CTD samples, and the Snell constant that reproduces the
    /// measured ToF under the plug-in profile.
    pub fn initial_guess(&self, meas: &MeasurementVector) -> Vec<f64> {
        let residual = DVector::from_iterator(
            meas.c_hat.len(),
            self.noise
                .sample_depths
                .iter()
                .zip(&meas.c_hat)
                .map(|(&z, c)| c - self.model.nominal_speed(z)),
        );
        let a = &self.sampling.gram_inverse * (self.sampling.entries.transpose() * residual);
        let mut x = vec![0.0, meas.z_s_hat, meas.z_d_hat];
        x.extend(a.iter());
        let profile = self.profile(&x[3..]).unwrap_or_else(|| self.model.clone());
        let k_max = k0_upper_bound(&profile, x[1], x[2]);
        x[0] = match solve_k0_from_tof_any_depth(&profile, x[1], x[2], meas.t_hat, &self.quad) {
            Ok(k) if k > 0.0 => k,
            Ok(_) | Err(RayError::TargetBelowMinimum { .. }) => 1e-3 * k_max,
            Err(_) => 0.999 * k_max,
        };
        x
    }

    /// Weighted Gauss–Newton with step halving.
    pub fn estimate(&self, meas: &MeasurementVector, init: &[f64]) -> Result<EstimatorResult, MonteCarloError> {
        if meas.c_hat.len() != self.noise.samples() {
            return Err(MonteCarloError::DimensionMismatch {
                got: meas.c_hat.len(),
                expected: self.noise.samples(),
            });
        }
        let mut x = init.to_vec();
        let mut projected = false;
        let mut eval = match self.evaluate(meas, &x) {
            Some(e) => e,
            None => {
                projected = true;
                self.project(&mut x);
                self.evaluate(meas, &x).ok_or(MonteCarloError::InfeasibleStart)?
            }
        };
        let mut iterations = 0;
        let mut converged = false;
        while iterations <= MAX_ITERATIONS {
            let Some((step, dec)) = Self::decrement(&eval) else { break };
            if dec <= DECREMENT_TOLERANCE {
                converged = true;
                break;
            }
            if iterations == MAX_ITERATIONS {
                break;
            }
            iterations += 1;
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, di)| xi + lambda * di).collect();
                if self.project(&mut trial) {
                    projected = true;
                }
                if let Some(e) = self.evaluate(meas, &trial) {
                    if e.objective <= eval.objective {
                        accepted = Some((trial, e));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            let Some((next, next_eval)) = accepted else { break };
            x = next;
            eval = next_eval;
        }
        let profile = self.profile(&x[3..]).unwrap_or_else(|| self.model.clone());
        let h = RayScenario::unchecked(&profile, x[1], x[2], x[0])
            .with_quadrature(self.quad)
            .horizontal_distance()?;
        let var = self.noise.measurement_variances();
        let residual_norm = eval.residual.iter().zip(&var).map(|(r, v)| r * r / v).sum::<f64>().sqrt();
        Ok(EstimatorResult {
            d_hat: h.hypot(x[1] - x[2]),
            x_hat: x,
            converged,
            iterations,
            residual_norm,
            projected,
        })
    }

    /// Clamps the Snell constant into the admissible bracket. Returns
    /// whether anything changed.
    fn project(&self, x: &mut [f64]) -> bool {
        let Some(profile) = self.profile(&x[3..]) else { return false };
        if x[1] == x[2] {
            return false;
        }
        let k_max = k0_upper_bound(&profile, x[1], x[2]);
        let clamped = x[0].clamp(0.0, K0_CLAMP * k_max);
        let changed = clamped != x[0];
        x[0] = clamped;
        changed
    }
}

/// Maximum-likelihood estimate of `x` from one measurement vector.
pub fn ml_estimate(
    meas: &MeasurementVector,
    model: &SoundSpeedProfile,
    noise: &NoiseModel,
    init: &[f64],
) -> Result<EstimatorResult, MonteCarloError> {
    let sampling = build_sampling_matrix(model, &noise.sample_depths)?;
    EstimatorModel::new(model, noise, &sampling).estimate(meas, init)
}

/// Summary statistics of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundValidationReport {
    pub trials: usize,
    pub excluded: usize,
    pub seed: u64,
    pub true_range: f64,
    pub mean_range: f64,
    pub empirical_bias: f64,
    /// Sample variance of the range estimates about their mean.
    pub empirical_variance: f64,
    /// Mean squared error about the true range.
    pub empirical_mse: f64,
    pub crb_d: f64,
    pub efficiency_ratio: f64,
    pub standard_error_of_variance: f64,
    /// Sample variance of the destination depth estimates.
    pub z_d_variance: f64,
    pub sigma_z_sq: f64,
}

impl BoundValidationReport {
    /// `efficiency_ratio ≥ 1 - 3 · (standard error / crb)`.
    pub fn respects_bound(&self) -> bool {
        self.efficiency_ratio >= 1.0 - 3.0 * self.standard_error_of_variance / self.crb_d
    }

    pub fn csv_header() -> &'static str {
        "trials,excluded,seed,true_range,mean_range,empirical_bias,empirical_variance,empirical_mse,crb_d,efficiency_ratio,standard_error_of_variance,z_d_variance,sigma_z_sq"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.trials,
            self.excluded,
            self.seed,
            self.true_range,
            self.mean_range,
            self.empirical_bias,
            self.empirical_variance,
            self.empirical_mse,
            self.crb_d,
            self.efficiency_ratio,
            self.standard_error_of_variance,
            self.z_d_variance,
            self.sigma_z_sq
        )
    }
}

struct Moments {
    n: usize,
    mean: f64,
    variance: f64,
    m4: f64,
}

fn moments(values: &[f64]) -> Moments {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
    Moments {
        n,
        mean,
        variance: m2 / (n as f64 - 1.0),
        m4,
    }
}

/// Runs `trials` simulate→estimate cycles with seeds `seed + i` and
/// compares the range estimates with the bound at the truth.
pub fn validate_bound(truth: &Truth, noise: &NoiseModel, trials: usize, seed: u64) -> Result<BoundValidationReport, MonteCarloError> {
    if trials < 100 {
        return Err(MonteCarloError::TooFewTrials(trials));
    }
    noise.validate(&truth.profile)?;
    let s = truth.scenario()?;
    let sampling = build_sampling_matrix(&truth.profile, &noise.sample_depths)?;
    let crb_d = crb_d_transform(&s, noise, &sampling)?;
    let true_range = s.horizontal_distance()?.hypot(truth.z_d - truth.z_s);
    let model = EstimatorModel::new(&truth.profile, noise, &sampling);

    // Each trial is independent; results are collected in index order so
    // the aggregate does not depend on scheduling.
    let outcomes: Vec<Option<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let meas = simulate_measurements(truth, noise, seed.wrapping_add(i as u64)).ok()?;
            let init = model.initial_guess(&meas);
            let est = model.estimate(&meas, &init).ok()?;
            est.converged.then_some((est.d_hat, est.x_hat[2]))
        })
        .collect();
    let kept: Vec<(f64, f64)> = outcomes.iter().flatten().copied().collect();
    let excluded = trials - kept.len();
    if excluded as f64 > MAX_EXCLUDED_FRACTION * trials as f64 || kept.len() < 2 {
        return Err(MonteCarloError::TooManyFailures { excluded, trials });
    }
    let ranges: Vec<f64> = kept.iter().map(|p| p.0).collect();
    let depths: Vec<f64> = kept.iter().map(|p| p.1).collect();
    let d = moments(&ranges);
    let mse = ranges.iter().map(|r| (r - true_range).powi(2)).sum::<f64>() / d.n as f64;
    let n = d.n as f64;
    let se_var = ((d.m4 - (n - 3.0) / (n - 1.0) * d.variance * d.variance) / n).max(0.0).sqrt();
    Ok(BoundValidationReport {
        trials,
        excluded,
        seed,
        true_range,
        mean_range: d.mean,
        empirical_bias: d.mean - true_range,
        empirical_variance: d.variance,
        empirical_mse: mse,
        crb_d,
        efficiency_ratio: d.variance / crb_d,
        standard_error_of_variance: se_var,
        z_d_variance: moments(&depths).variance,
        sigma_z_sq: noise.sigma_z_sq,
    })
}
