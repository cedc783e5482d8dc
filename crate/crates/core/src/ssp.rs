//! Sound speed profile as a nominal curve plus a linear basis expansion,
//! `c(z) = c̄(z) + Σ a_n f_n(z)`, together with the CTD sampling matrix and
//! noisy sample simulation.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{spd_condition_number, spd_inverse, NumericsError};

/// Gram matrices with a condition number above this are rejected.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Number of depth samples used when checking profile positivity.
const POSITIVITY_SAMPLES: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SspError {
    #[error("depth {z} m is outside the profile domain [0, {depth_max}] m")]
    OutOfDomain { z: f64, depth_max: f64 },
    #[error("invalid basis function: {0}")]
    InvalidBasis(String),
    #[error("sound speed is not positive at z = {z} m (c = {c})")]
    NonPositiveSpeed { z: f64, c: f64 },
    #[error("{basis} basis functions but {coefficients} coefficients")]
    CoefficientMismatch { basis: usize, coefficients: usize },
    #[error("Gram matrix condition number {condition:e} exceeds {MAX_GRAM_CONDITION:e}")]
    IllConditionedBasis { condition: f64 },
    #[error("sampling matrix with {samples} samples cannot resolve {basis} basis functions")]
    RankDeficient { samples: usize, basis: usize },
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A scalar function of depth on `[0, D_z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisFunction {
    /// `Σ_k coefficients[k] · (z / D_z)^k`, a polynomial in normalized depth.
    Polynomial { coefficients: Vec<f64> },
    /// Piecewise-linear hat: 0 outside `[left, right]`, 1 at `peak`.
    Hat { left: f64, peak: f64, right: f64 },
    /// Linear interpolation between tabulated knots, held constant beyond
    /// the first and last knot.
    Tabulated { depths: Vec<f64>, values: Vec<f64> },
}

impl BasisFunction {
    pub fn constant(value: f64) -> Self {
        Self::Polynomial {
            coefficients: vec![value],
        }
    }

    /// Shifted Legendre polynomial of the given degree on `[0, D_z]`,
    /// expressed in normalized depth `s = z / D_z`.
    pub fn shifted_legendre(degree: usize) -> Self {
        // P̃_n(s) = Σ_k (-1)^(n+k) C(n,k) C(n+k,k) s^k
        let n = degree;
        let mut coefficients = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let sign = if (n + k).is_multiple_of(2) { 1.0 } else { -1.0 };
            coefficients.push(sign * binomial(n, k) * binomial(n + k, k));
        }
        Self::Polynomial { coefficients }
    }

    pub fn validate(&self) -> Result<(), SspError> {
        match self {
            Self::Polynomial { coefficients } => {
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(SspError::InvalidBasis("non-finite polynomial coefficient".into()));
                }
            }
            Self::Hat { left, peak, right } => {
                if !(left < peak && peak < right) {
                    return Err(SspError::InvalidBasis(format!(
                        "hat requires left < peak < right, got {left}, {peak}, {right}"
                    )));
                }
            }
            Self::Tabulated { depths, values } => {
                if depths.is_empty() || depths.len() != values.len() {
                    return Err(SspError::InvalidBasis(
                        "tabulated basis needs matching, non-empty depth and value lists".into(),
                    ));
                }
                if depths.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(SspError::InvalidBasis(
                        "tabulated depths must be strictly increasing".into(),
                    ));
                }
                if values.iter().chain(depths).any(|v| !v.is_finite()) {
                    return Err(SspError::InvalidBasis("non-finite tabulated entry".into()));
                }
            }
        }
        Ok(())
    }

    /// Evaluates the function at depth `z` for a domain of depth `depth_max`.
    pub fn eval(&self, z: f64, depth_max: f64) -> f64 {
        match self {
            Self::Polynomial { coefficients } => {
                let s = z / depth_max;
                coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c)
            }
            Self::Hat { left, peak, right } => {
                if z <= *left || z >= *right {
                    0.0
                } else if z <= *peak {
                    (z - left) / (peak - left)
                } else {
                    (right - z) / (right - peak)
                }
            }
            Self::Tabulated { depths, values } => {
                let last = depths.len() - 1;
                if z <= depths[0] {
                    return values[0];
                }
                if z >= depths[last] {
                    return values[last];
                }
                let i = depths.partition_point(|d| *d <= z) - 1;
                let w = (z - depths[i]) / (depths[i + 1] - depths[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `c(z) = c̄(z) + Σ a_n f_n(z)` on `[0, depth_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundSpeedProfile {
    pub depth_max: f64,
    pub nominal: BasisFunction,
    pub basis: Vec<BasisFunction>,
    pub coefficients: Vec<f64>,
}

impl SoundSpeedProfile {
    pub fn new(
        depth_max: f64,
        nominal: BasisFunction,
        basis: Vec<BasisFunction>,
        coefficients: Vec<f64>,
    ) -> Result<Self, SspError> {
        let profile = Self {
            depth_max,
            nominal,
            basis,
            coefficients,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Homogeneous water with no basis functions.
    pub fn constant(speed: f64, depth_max: f64) -> Result<Self, SspError> {
        Self::new(depth_max, BasisFunction::constant(speed), Vec::new(), Vec::new())
    }

    /// The bundled three-function demonstration profile: nominal 1500 m/s
    /// plus the first three shifted Legendre polynomials on `[0, depth_max]`.
    /// The coefficients give a surface maximum, a sound-speed minimum near
    /// 1300 m for a 2000 m column, and a weaker rise towards the bottom.
    pub fn demo(depth_max: f64) -> Self {
        Self::new(
            depth_max,
            BasisFunction::constant(1500.0),
            (0..3).map(BasisFunction::shifted_legendre).collect(),
            DEMO_COEFFICIENTS.to_vec(),
        )
        .expect("demo profile is valid")
    }

    pub fn validate(&self) -> Result<(), SspError> {
        if !(self.depth_max > 0.0) || !self.depth_max.is_finite() {
            return Err(SspError::InvalidBasis("depth_max must be positive".into()));
        }
        if self.basis.len() != self.coefficients.len() {
            return Err(SspError::CoefficientMismatch {
                basis: self.basis.len(),
                coefficients: self.coefficients.len(),
            });
        }
        self.nominal.validate()?;
        for f in &self.basis {
            f.validate()?;
        }
        if self.coefficients.iter().any(|a| !a.is_finite()) {
            return Err(SspError::InvalidBasis("non-finite coefficient".into()));
        }
        for i in 0..=POSITIVITY_SAMPLES {
            let z = self.depth_max * i as f64 / POSITIVITY_SAMPLES as f64;
            let c = self.speed(z);
            if !(c > 0.0) || !c.is_finite() {
                return Err(SspError::NonPositiveSpeed { z, c });
            }
        }
        Ok(())
    }

    pub fn basis_len(&self) -> usize {
        self.basis.len()
    }

    pub fn contains(&self, z: f64) -> bool {
        let slack = 1e-9 * self.depth_max;
        z >= -slack && z <= self.depth_max + slack
    }

    pub fn check_depth(&self, z: f64) -> Result<(), SspError> {
        if self.contains(z) {
            Ok(())
        } else {
            Err(SspError::OutOfDomain {
                z,
                depth_max: self.depth_max,
            })
        }
    }

    /// Sound speed at `z` in m/s, with domain checking.
    pub fn eval(&self, z: f64) -> Result<f64, SspError> {
        self.check_depth(z)?;
        Ok(self.speed(z))
    }

    /// Sound speed without the domain check; used inside integrals whose
    /// limits were already validated.
    #[inline]
    pub fn speed(&self, z: f64) -> f64 {
        self.nominal_speed(z)
            + self
                .basis
                .iter()
                .zip(&self.coefficients)
                .map(|(f, a)| a * f.eval(z, self.depth_max))
                .sum::<f64>()
    }

    #[inline]
    pub fn nominal_speed(&self, z: f64) -> f64 {
        self.nominal.eval(z, self.depth_max)
    }

    #[inline]
    pub fn basis_value(&self, n: usize, z: f64) -> f64 {
        self.basis[n].eval(z, self.depth_max)
    }

    /// Same nominal and basis, different coefficients.
    pub fn with_coefficients(&self, coefficients: Vec<f64>) -> Result<Self, SspError> {
        Self::new(
            self.depth_max,
            self.nominal.clone(),
            self.basis.clone(),
            coefficients,
        )
    }

    /// Largest sound speed on `[lo, hi]`, from a dense uniform scan refined
    /// by golden-section search around the best sample.
    pub fn max_speed_on(&self, lo: f64, hi: f64, samples: usize) -> (f64, f64) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let samples = samples.max(2);
        let step = (hi - lo) / samples as f64;
        let mut best = (lo, self.speed(lo));
        for i in 1..=samples {
            let z = if i == samples { hi } else { lo + step * i as f64 };
            let c = self.speed(z);
            if c > best.1 {
                best = (z, c);
            }
        }
        // Local refinement for interior maxima between grid points.
        let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            if b - a <= 1e-12 * (1.0 + hi.abs()) {
                break;
            }
            let x1 = b - ratio * (b - a);
            let x2 = a + ratio * (b - a);
            if self.speed(x1) >= self.speed(x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        let z = 0.5 * (a + b);
        let c = self.speed(z);
        if c > best.1 {
            best = (z, c);
        }
        best
    }
}

/// Coefficients of the demo profile for the shifted Legendre basis.
pub const DEMO_COEFFICIENTS: [f64; 3] = [0.0, -6.0, 7.0];

/// Variances of every measurement and the CTD sample depths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// ToF variance, s².
    pub sigma_t_sq: f64,
    /// Depth sensor variance, m².
    pub sigma_z_sq: f64,
    /// Sound speed sample variance, (m/s)².
    pub sigma_c_sq: f64,
    /// CTD sample depths z_1..z_M in metres.
    pub sample_depths: Vec<f64>,
}

impl NoiseModel {
    pub fn validate(&self, profile: &SoundSpeedProfile) -> Result<(), SspError> {
        for (name, v) in [
            ("sigma_t_sq", self.sigma_t_sq),
            ("sigma_z_sq", self.sigma_z_sq),
            ("sigma_c_sq", self.sigma_c_sq),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SspError::InvalidNoise(format!("{name} must be positive and finite")));
            }
        }
        if self.sample_depths.len() < profile.basis_len() {
            return Err(SspError::RankDeficient {
                samples: self.sample_depths.len(),
                basis: profile.basis_len(),
            });
        }
        for &z in &self.sample_depths {
            profile.check_depth(z)?;
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        self.sample_depths.len()
    }

    /// Diagonal of the measurement covariance for the stacked vector
    /// `[t, z_s, z_d, ĉ_1..ĉ_M]`.
    pub fn measurement_variances(&self) -> Vec<f64> {
        let mut d = vec![self.sigma_t_sq, self.sigma_z_sq, self.sigma_z_sq];
        d.extend(std::iter::repeat_n(self.sigma_c_sq, self.samples()));
        d
    }

    /// The same model with every variance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            sigma_t_sq: self.sigma_t_sq * factor,
            sigma_z_sq: self.sigma_z_sq * factor,
            sigma_c_sq: self.sigma_c_sq * factor,
            sample_depths: self.sample_depths.clone(),
        }
    }
}

/// `count` depths `from + m (to - from) / count` for `m = 1..=count`.
pub fn uniform_depths(from: f64, to: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|m| from + (to - from) * m as f64 / count as f64)
        .collect()
}

/// The M×N matrix `F[m, n] = f_n(z_m)` and its Gram inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMatrix {
    pub entries: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub gram_inverse: DMatrix<f64>,
    pub condition_number: f64,
}

impl SamplingMatrix {
    pub fn samples(&self) -> usize {
        self.entries.nrows()
    }

    pub fn basis_len(&self) -> usize {
        self.entries.ncols()
    }
}

pub fn build_sampling_matrix(
    profile: &SoundSpeedProfile,
    depths: &[f64],
) -> Result<SamplingMatrix, SspError> {
    let (m, n) = (depths.len(), profile.basis_len());
    if m < n {
        return Err(SspError::RankDeficient { samples: m, basis: n });
    }
    for &z in depths {
        profile.check_depth(z)?;
    }
    let entries = DMatrix::from_fn(m, n, |i, j| profile.basis_value(j, depths[i]));
    let gram = entries.transpose() * &entries;
    if n == 0 {
        return Ok(SamplingMatrix {
            entries,
            gram,
            gram_inverse: DMatrix::zeros(0, 0),
            condition_number: 1.0,
        });
    }
    let condition_number = spd_condition_number(&gram);
    if condition_number.is_infinite() {
        return Err(SspError::RankDeficient { samples: m, basis: n });
    }
    if condition_number > MAX_GRAM_CONDITION {
        return Err(SspError::IllConditionedBasis {
            condition: condition_number,
        });
    }
    let gram_inverse = spd_inverse(&gram).map_err(|e| match e {
        NumericsError::NotPositiveDefinite { .. } => SspError::RankDeficient { samples: m, basis: n },
        other => SspError::Numerics(other),
    })?;
    Ok(SamplingMatrix {
        entries,
        gram,
        gram_inverse,
        condition_number,
    })
}

/// Noisy CTD samples `ĉ_m = c(z_m) + v_m`, `v_m ~ N(0, σ_c²)`, drawn from
/// the supplied generator.
pub fn simulate_ssp_measurements_with<R: Rng + ?Sized>(
    profile: &SoundSpeedProfile,
    noise: &NoiseModel,
    rng: &mut R,
) -> Vec<f64> {
    let normal = Normal::new(0.0, noise.sigma_c_sq.sqrt()).expect("validated variance");
    noise
        .sample_depths
        .iter()
        .map(|&z| profile.speed(z) + normal.sample(rng))
        .collect()
}

/// Noisy CTD samples from a ChaCha8 stream seeded with `seed`.
pub fn simulate_ssp_measurements(
    profile: &SoundSpeedProfile,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<f64>, SspError> {
    noise.validate(profile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(simulate_ssp_measurements_with(profile, noise, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn linear_profile() -> SoundSpeedProfile {
        SoundSpeedProfile::new(
            2000.0,
            BasisFunction::constant(1500.0),
            vec![BasisFunction::Polynomial {
                coefficients: vec![0.0, 2.0],
            }],
            vec![10.0],
        )
        .unwrap()
    }

    fn noise(depths: Vec<f64>, sigma_c_sq: f64) -> NoiseModel {
        NoiseModel {
            sigma_t_sq: 1e-8,
            sigma_z_sq: 1.0,
            sigma_c_sq,
            sample_depths: depths,
        }
    }

    #[test]
    fn nominal_only_profile() {
        let p = SoundSpeedProfile::constant(1500.0, 2000.0).unwrap();
        assert_eq!(p.eval(700.0).unwrap(), 1500.0);
    }

    #[test]
    fn single_linear_basis() {
        // f_1(z) = z / 1000 on a 2000 m column is 2 s in normalized depth.
        let p = linear_profile();
        assert_relative_eq!(p.eval(500.0).unwrap(), 1505.0, epsilon = 1e-12);
    }

    #[test]
    fn out_of_domain_depth() {
        let p = linear_profile();
        assert!(matches!(p.eval(2500.0), Err(SspError::OutOfDomain { .. })));
        assert!(matches!(p.eval(-1.0), Err(SspError::OutOfDomain { .. })));
    }

    #[test]
    fn demo_profile_matches_term_by_term_sum() {
        let p = SoundSpeedProfile::demo(2000.0);
        // Shifted Legendre at s = 0: P0 = 1, P1 = -1, P2 = 1.
        let direct = 1500.0 + DEMO_COEFFICIENTS[0] - DEMO_COEFFICIENTS[1] + DEMO_COEFFICIENTS[2];
        assert_relative_eq!(p.eval(0.0).unwrap(), direct, epsilon = 1e-12);
        // s = 0.25: P1 = -0.5, P2 = 6/16 - 6/4 + 1 = -0.125.
        let direct = 1500.0 + DEMO_COEFFICIENTS[0] - 0.5 * DEMO_COEFFICIENTS[1] - 0.125 * DEMO_COEFFICIENTS[2];
        assert_relative_eq!(p.eval(500.0).unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn shifted_legendre_coefficients() {
        assert_eq!(
            BasisFunction::shifted_legendre(2),
            BasisFunction::Polynomial {
                coefficients: vec![1.0, -6.0, 6.0]
            }
        );
        assert_eq!(
            BasisFunction::shifted_legendre(3),
            BasisFunction::Polynomial {
                coefficients: vec![-1.0, 12.0, -30.0, 20.0]
            }
        );
    }

    #[test]
    fn hat_and_tabulated_bases() {
        let hat = BasisFunction::Hat {
            left: 100.0,
            peak: 300.0,
            right: 400.0,
        };
        assert_eq!(hat.eval(50.0, 2000.0), 0.0);
        assert_relative_eq!(hat.eval(200.0, 2000.0), 0.5);
        assert_relative_eq!(hat.eval(350.0, 2000.0), 0.5);
        let tab = BasisFunction::Tabulated {
            depths: vec![0.0, 1000.0, 2000.0],
            values: vec![1.0, 3.0, 2.0],
        };
        assert_relative_eq!(tab.eval(500.0, 2000.0), 2.0);
        assert_relative_eq!(tab.eval(1500.0, 2000.0), 2.5);
        assert_relative_eq!(tab.eval(1000.0, 2000.0), 3.0);
        let bad = BasisFunction::Tabulated {
            depths: vec![0.0, 0.0],
            values: vec![1.0, 2.0],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn profile_invariants_enforced() {
        let err = SoundSpeedProfile::new(2000.0, BasisFunction::constant(1500.0), vec![], vec![1.0]);
        assert!(matches!(err, Err(SspError::CoefficientMismatch { .. })));
        let err = SoundSpeedProfile::new(
            2000.0,
            BasisFunction::constant(10.0),
            vec![BasisFunction::constant(1.0)],
            vec![-20.0],
        );
        assert!(matches!(err, Err(SspError::NonPositiveSpeed { .. })));
    }

    #[test]
    fn constant_basis_sampling_matrix() {
        let p = SoundSpeedProfile::new(
            2000.0,
            BasisFunction::constant(1500.0),
            vec![BasisFunction::constant(1.0)],
            vec![0.0],
        )
        .unwrap();
        let f = build_sampling_matrix(&p, &uniform_depths(0.0, 2000.0, 10)).unwrap();
        assert!(f.entries.iter().all(|v| *v == 1.0));
        assert_relative_eq!(f.gram_inverse[(0, 0)], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn two_function_gram_inverse_matches_hand_inversion() {
        // f_2(z) = z expressed in normalized depth on a 10 m domain.
        let p = SoundSpeedProfile::new(
            10.0,
            BasisFunction::constant(1500.0),
            vec![
                BasisFunction::constant(1.0),
                BasisFunction::Polynomial {
                    coefficients: vec![0.0, 10.0],
                },
            ],
            vec![0.0, 0.0],
        )
        .unwrap();
        let f = build_sampling_matrix(&p, &[1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(f.gram[(0, 0)], 3.0, epsilon = 1e-12);
        assert_relative_eq!(f.gram[(0, 1)], 6.0, epsilon = 1e-12);
        assert_relative_eq!(f.gram[(1, 1)], 14.0, epsilon = 1e-12);
        let expected = [[14.0 / 6.0, -1.0], [-1.0, 0.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(f.gram_inverse[(i, j)], expected[i][j], epsilon = 1e-12);
            }
        }
        let prod = &f.gram_inverse * &f.gram;
        assert!((prod - DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn reference_sample_depths() {
        let d = uniform_depths(0.0, 2000.0, 10);
        let expected: Vec<f64> = (1..=10).map(|m| 200.0 * m as f64).collect();
        assert_eq!(d, expected);
    }

    #[test]
    fn sampling_errors() {
        let p = SoundSpeedProfile::demo(2000.0);
        assert!(matches!(
            build_sampling_matrix(&p, &[100.0, 200.0]),
            Err(SspError::RankDeficient { .. })
        ));
        assert!(matches!(
            build_sampling_matrix(&p, &[100.0, 100.0, 100.0]),
            Err(SspError::RankDeficient { .. }) | Err(SspError::IllConditionedBasis { .. })
        ));
        assert!(matches!(
            build_sampling_matrix(&p, &[100.0, 200.0, 3000.0]),
            Err(SspError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn noiseless_limit_and_reproducibility() {
        let p = SoundSpeedProfile::demo(2000.0);
        let nm = noise(uniform_depths(0.0, 2000.0, 10), 1e-24);
        let c = simulate_ssp_measurements(&p, &nm, 3).unwrap();
        for (z, v) in nm.sample_depths.iter().zip(&c) {
            assert!((p.speed(*z) - v).abs() < 1e-9);
        }
        let nm = noise(uniform_depths(0.0, 2000.0, 10), 1.0);
        assert_eq!(
            simulate_ssp_measurements(&p, &nm, 42).unwrap(),
            simulate_ssp_measurements(&p, &nm, 42).unwrap()
        );
        assert_ne!(
            simulate_ssp_measurements(&p, &nm, 42).unwrap(),
            simulate_ssp_measurements(&p, &nm, 43).unwrap()
        );
    }

    #[test]
    fn sample_noise_mean_within_lln_bound() {
        let p = SoundSpeedProfile::constant(1500.0, 2000.0).unwrap();
        let sigma_c_sq: f64 = 4.0;
        let nm = noise(vec![1000.0], sigma_c_sq);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| simulate_ssp_measurements_with(&p, &nm, &mut rng)[0] - 1500.0)
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 3.0 * sigma_c_sq.sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn invalid_noise_rejected() {
        let p = SoundSpeedProfile::demo(2000.0);
        let mut nm = noise(uniform_depths(0.0, 2000.0, 10), 1.0);
        nm.sigma_z_sq = 0.0;
        assert!(matches!(nm.validate(&p), Err(SspError::InvalidNoise(_))));
    }

    #[test]
    fn max_speed_finds_interior_peak() {
        let p = SoundSpeedProfile::new(
            2000.0,
            BasisFunction::constant(1500.0),
            vec![BasisFunction::Polynomial {
                coefficients: vec![0.0, 4.0, -4.0],
            }],
            vec![10.0],
        )
        .unwrap();
        let (z, c) = p.max_speed_on(0.0, 2000.0, 7);
        assert!((z - 1000.0).abs() < 1e-3);
        assert_relative_eq!(c, 1510.0, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn eval_is_linear_in_coefficients(
            a1 in proptest::collection::vec(-5.0f64..5.0, 3),
            a2 in proptest::collection::vec(-5.0f64..5.0, 3),
            z in 0.0f64..2000.0,
        ) {
            let base = SoundSpeedProfile::demo(2000.0);
            let sum: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| x + y).collect();
            let c1 = base.with_coefficients(a1).unwrap().eval(z).unwrap();
            let c2 = base.with_coefficients(a2).unwrap().eval(z).unwrap();
            let c12 = base.with_coefficients(sum).unwrap().eval(z).unwrap();
            let nominal = base.nominal_speed(z);
            prop_assert!((c12 - (c1 + c2 - nominal)).abs() < 1e-9);
        }

        #[test]
        fn duplicated_constant_samples_shrink_gram_inverse(m in 1usize..40, extra in 1usize..20) {
            let p = SoundSpeedProfile::new(
                2000.0,
                BasisFunction::constant(1500.0),
                vec![BasisFunction::constant(1.0)],
                vec![0.0],
            ).unwrap();
            let d1 = vec![500.0; m];
            let d2 = vec![500.0; m + extra];
            let f1 = build_sampling_matrix(&p, &d1).unwrap();
            let f2 = build_sampling_matrix(&p, &d2).unwrap();
            prop_assert!(f2.gram[(0, 0)] > f1.gram[(0, 0)]);
            prop_assert!(f2.gram_inverse[(0, 0)] <= f1.gram_inverse[(0, 0)]);
            prop_assert!((f1.gram_inverse[(0, 0)] - 1.0 / m as f64).abs() < 1e-15);
        }

        #[test]
        fn gram_inverse_symmetric(m in 3usize..30) {
            let p = SoundSpeedProfile::demo(2000.0);
            let f = build_sampling_matrix(&p, &uniform_depths(0.0, 2000.0, m)).unwrap();
            let asym = (&f.gram_inverse - f.gram_inverse.transpose()).amax();
            prop_assert!(asym < 1e-12);
        }
    }
}
