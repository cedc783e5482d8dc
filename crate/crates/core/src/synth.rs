//! Randomized scenario generator used by the property tests and the
//! acceptance suite: smooth polynomial bases, random endpoint depths and a
//! Snell constant safely inside the admissible bracket.

use rand::Rng;

use crate::numerics::QuadratureSpec;
use crate::ray::{k0_upper_bound, RayScenario};
use crate::ssp::{build_sampling_matrix, uniform_depths, BasisFunction, NoiseModel, SamplingMatrix, SoundSpeedProfile, SspError};

pub const DEPTH: f64 = 2000.0;

/// One randomized problem instance.
#[derive(Debug, Clone)]
pub struct RandomCase {
    pub profile: SoundSpeedProfile,
    pub z_s: f64,
    pub z_d: f64,
    pub k0: f64,
    pub noise: NoiseModel,
}

impl RandomCase {
    pub fn scenario(&self) -> RayScenario<'_> {
        RayScenario::new(&self.profile, self.z_s, self.z_d, self.k0).expect("generated scenario is valid")
    }

    pub fn scenario_with(&self, quad: QuadratureSpec) -> RayScenario<'_> {
        self.scenario().with_quadrature(quad)
    }

    pub fn sampling(&self) -> Result<SamplingMatrix, SspError> {
        build_sampling_matrix(&self.profile, &self.noise.sample_depths)
    }

    /// `(k0, z_s, z_d, a_1..a_N)`.
    pub fn parameter_vector(&self) -> Vec<f64> {
        let mut x = vec![self.k0, self.z_s, self.z_d];
        x.extend_from_slice(&self.profile.coefficients);
        x
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// A random smooth basis of `n` polynomials with distinct leading degrees.
pub fn random_basis<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<BasisFunction> {
    let mut degrees: Vec<usize> = (0..=4).collect();
    for i in (1..degrees.len()).rev() {
        let j = rng.random_range(0..=i);
        degrees.swap(i, j);
    }
    degrees
        .into_iter()
        .take(n)
        .map(|d| {
            let BasisFunction::Polynomial { coefficients } = BasisFunction::shifted_legendre(d) else {
                unreachable!()
            };
            let amp = rng.random_range(0.5..2.0);
            let mut c: Vec<f64> = coefficients.iter().map(|v| v * amp).collect();
            for v in c.iter_mut().take(d) {
                *v += rng.random_range(-0.5..0.5);
            }
            BasisFunction::Polynomial { coefficients: c }
        })
        .collect()
}

/// Random valid case with `N ∈ {1, 2, 3}` and `M ∈ {5..20}`.
pub fn random_case<R: Rng + ?Sized>(rng: &mut R) -> RandomCase {
    loop {
        let n = rng.random_range(1..=3);
        let m = rng.random_range(5..=20);
        if let Some(case) = try_case(rng, n, m) {
            return case;
        }
    }
}

pub fn random_case_with<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> RandomCase {
    loop {
        if let Some(case) = try_case(rng, n, m) {
            return case;
        }
    }
}

fn try_case<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Option<RandomCase> {
    let nominal = BasisFunction::Polynomial {
        coefficients: vec![rng.random_range(1480.0..1520.0), rng.random_range(-20.0..20.0)],
    };
    let basis = random_basis(rng, n);
    let coefficients: Vec<f64> = (0..n).map(|_| rng.random_range(-8.0..8.0)).collect();
    let profile = SoundSpeedProfile::new(DEPTH, nominal, basis, coefficients).ok()?;
    let z_s = rng.random_range(0.0..DEPTH);
    let z_d = rng.random_range(0.0..DEPTH);
    if (z_s - z_d).abs() < 200.0 {
        return None;
    }
    let k0 = rng.random_range(0.1..0.9) * k0_upper_bound(&profile, z_s, z_d);
    let sample_depths = if rng.random_bool(0.5) {
        uniform_depths(0.0, DEPTH, m)
    } else {
        let mut d: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..DEPTH)).collect();
        d.sort_by(f64::total_cmp);
        d
    };
    let noise = NoiseModel {
        sigma_t_sq: log_uniform(rng, 1e-10, 1e-6),
        sigma_z_sq: log_uniform(rng, 1e-2, 10.0),
        sigma_c_sq: log_uniform(rng, 1e-2, 10.0),
        sample_depths,
    };
    noise.validate(&profile).ok()?;
    build_sampling_matrix(&profile, &noise.sample_depths).ok()?;
    RayScenario::new(&profile, z_s, z_d, k0).ok()?;
    Some(RandomCase {
        profile,
        z_s,
        z_d,
        k0,
        noise,
    })
}

/// Central-difference steps for `(k0, z_s, z_d, a)`: `1e-6 · max(1, |x|)`
/// for depths and coefficients and `1e-6 · k0` for the Snell constant,
/// whose natural scale is far below one.
pub fn finite_difference_steps(x0: &[f64]) -> Vec<f64> {
    x0.iter()
        .enumerate()
        .map(|(i, x)| if i == 0 { 1e-6 * x.abs() } else { 1e-6 * x.abs().max(1.0) })
        .collect()
}
