//! Ray tracing in a depth-stratified medium under Snell's law.
//!
//! A ray between two depths is described by its Snell constant
//! `k0 = cos θ(z) / c(z)`. Under the single-crossing assumption the ray
//! passes every intermediate depth once, and time of flight and horizontal
//! distance are one-dimensional depth integrals:
//!
//! ```text
//! t = ∫ dz / (c √(1 - (k0 c)²))        h = ∫ k0 c dz / √(1 - (k0 c)²)
//! ```
//!
//! Integrals run over `[min(z_s, z_d), max(z_s, z_d)]`, so `t > 0` and
//! `h ≥ 0` for either ordering of the endpoints. Derivatives with respect
//! to the endpoint depths carry the sign of the true sensitivity: moving
//! the shallower endpoint down shortens the path, moving the deeper one
//! down lengthens it. Angles are reported in `[0, π/2]` measured from the
//! horizontal regardless of whether the ray travels up or down.

use serde::Serialize;
use thiserror::Error;

use crate::numerics::{find_root_monotonic, integrate, NumericsError, QuadratureSpec, RootSpec};
use crate::ssp::{SoundSpeedProfile, SspError};

/// Minimum admissible `1 - (k0 c(z))²` along the path.
pub const FEASIBILITY_MARGIN: f64 = 1e-9;

/// Uniform depth samples used by the single-crossing check.
pub const CROSSING_GRID: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RayError {
    #[error("source and destination depths coincide ({0} m)")]
    DegenerateDepths(f64),
    #[error("Snell constant must be finite and non-negative, got {0}")]
    InvalidSnellConstant(f64),
    #[error("ray turns before reaching the endpoint (margin {margin:e} at z = {depth} m)")]
    TurningPointInsidePath { depth: f64, margin: f64 },
    #[error("target {target} is below the vertical-ray minimum {minimum}")]
    TargetBelowMinimum { target: f64, minimum: f64 },
    #[error("target {target} exceeds the largest value {supremum} reachable without a turning point")]
    TargetUnreachable { target: f64, supremum: f64 },
    #[error(transparent)]
    Ssp(#[from] SspError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A ray between two depths in a given profile.
#[derive(Debug, Clone, Copy)]
pub struct RayScenario<'p> {
    pub profile: &'p SoundSpeedProfile,
    pub z_s: f64,
    pub z_d: f64,
    pub k0: f64,
    pub quad: QuadratureSpec,
}

/// Derived geometry of a ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayGeometry {
    pub t: f64,
    pub h: f64,
    pub range: f64,
    pub theta_s: f64,
    pub theta_d: f64,
    pub theta_0: f64,
}

/// Partial derivatives of a scalar ray quantity with respect to
/// `(k0, z_s, z_d, a_1..a_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RayGradient {
    pub d_k0: f64,
    pub d_z_s: f64,
    pub d_z_d: f64,
    pub d_a: Vec<f64>,
}

impl RayGradient {
    /// Flattened in parameter order `(k0, z_s, z_d, a)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.d_k0, self.d_z_s, self.d_z_d];
        v.extend_from_slice(&self.d_a);
        v
    }
}

/// Outcome of the single-crossing check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingReport {
    pub valid: bool,
    /// Smallest `1 - (k0 c(z))²` found along the path.
    pub margin: f64,
    /// Depth at which the smallest margin occurs.
    pub depth: f64,
}

impl<'p> RayScenario<'p> {
    /// Builds a scenario and checks every invariant, including the
    /// single-crossing margin.
    pub fn new(profile: &'p SoundSpeedProfile, z_s: f64, z_d: f64, k0: f64) -> Result<Self, RayError> {
        let s = Self::unchecked(profile, z_s, z_d, k0);
        s.check()?;
        Ok(s)
    }

    /// Builds a scenario without validation. Every operation still reports
    /// a turning point if the integrands blow up.
    pub fn unchecked(profile: &'p SoundSpeedProfile, z_s: f64, z_d: f64, k0: f64) -> Self {
        Self {
            profile,
            z_s,
            z_d,
            k0,
            quad: QuadratureSpec::default(),
        }
    }

    pub fn with_quadrature(mut self, quad: QuadratureSpec) -> Self {
        self.quad = quad;
        self
    }

    pub fn with_k0(mut self, k0: f64) -> Self {
        self.k0 = k0;
        self
    }

    fn check(&self) -> Result<(), RayError> {
        self.profile.check_depth(self.z_s)?;
        self.profile.check_depth(self.z_d)?;
        if self.z_s == self.z_d {
            return Err(RayError::DegenerateDepths(self.z_s));
        }
        if !(self.k0 >= 0.0) || !self.k0.is_finite() {
            return Err(RayError::InvalidSnellConstant(self.k0));
        }
        let report = self.validate_single_crossing();
        if !report.valid {
            return Err(RayError::TurningPointInsidePath {
                depth: report.depth,
                margin: report.margin,
            });
        }
        Ok(())
    }

    /// `(shallower, deeper)` endpoint depths.
    pub fn interval(&self) -> (f64, f64) {
        (self.z_s.min(self.z_d), self.z_s.max(self.z_d))
    }

    /// +1 when the destination is deeper than the source, -1 otherwise.
    pub fn direction(&self) -> f64 {
        if self.z_d >= self.z_s {
            1.0
        } else {
            -1.0
        }
    }

    pub fn vertical_span(&self) -> f64 {
        (self.z_d - self.z_s).abs()
    }

    #[inline]
    fn margin_at(&self, z: f64) -> f64 {
        grazing_margin(self.k0, self.profile.speed(z))
    }

    /// Integrates `f(z, c, 1 - (k0 c)²)` over the path interval.
    pub fn integrate_path<F>(&self, f: F) -> Result<f64, RayError>
    where
        F: Fn(f64, f64, f64) -> f64,
    {
        let (lo, hi) = self.interval();
        let k0 = self.k0;
        let profile = self.profile;
        integrate(
            |z| {
                let c = profile.speed(z);
                f(z, c, grazing_margin(k0, c))
            },
            lo,
            hi,
            &self.quad,
        )
        .map_err(|e| match e {
            NumericsError::NonFiniteIntegrand { at } => RayError::TurningPointInsidePath {
                depth: at,
                margin: self.margin_at(at),
            },
            other => RayError::Numerics(other),
        })
    }

    /// Time of flight in seconds.
    pub fn tof(&self) -> Result<f64, RayError> {
        self.integrate_path(|_, c, q| 1.0 / (c * q.sqrt()))
    }

    /// Horizontal distance in metres; zero exactly for a vertical ray.
    pub fn horizontal_distance(&self) -> Result<f64, RayError> {
        if self.k0 == 0.0 {
            return Ok(0.0);
        }
        let k0 = self.k0;
        self.integrate_path(|_, c, q| k0 * c / q.sqrt())
    }

    /// Minimum of `1 - (k0 c)²` over a dense depth grid refined around the
    /// sound speed maximum on the path.
    pub fn validate_single_crossing(&self) -> CrossingReport {
        let (lo, hi) = self.interval();
        let (depth, c_max) = self.profile.max_speed_on(lo, hi, CROSSING_GRID);
        let margin = grazing_margin(self.k0, c_max);
        CrossingReport {
            valid: margin >= FEASIBILITY_MARGIN && margin.is_finite(),
            margin,
            depth,
        }
    }

    /// `(θ_s, θ_d, θ_0)` in radians, each in `[0, π/2]`.
    pub fn angles(&self, h: f64) -> Result<(f64, f64, f64), RayError> {
        let theta = |z: f64| -> Result<f64, RayError> {
            let c = self.profile.speed(z);
            let q = grazing_margin(self.k0, c);
            if !(q > 0.0) {
                return Err(RayError::TurningPointInsidePath { depth: z, margin: q });
            }
            // acos loses half the digits near grazing; atan2 does not.
            Ok(q.sqrt().atan2(self.k0 * c))
        };
        let theta_s = theta(self.z_s)?;
        let theta_d = theta(self.z_d)?;
        let theta_0 = self.vertical_span().atan2(h);
        Ok((theta_s, theta_d, theta_0))
    }

    /// ToF, horizontal distance, range and angles in one call.
    pub fn geometry(&self) -> Result<RayGeometry, RayError> {
        let t = self.tof()?;
        let h = self.horizontal_distance()?;
        let (theta_s, theta_d, theta_0) = self.angles(h)?;
        Ok(RayGeometry {
            t,
            h,
            range: h.hypot(self.z_d - self.z_s),
            theta_s,
            theta_d,
            theta_0,
        })
    }

    /// `1 / (c √(1 - (k0 c)²))` at an endpoint depth.
    fn endpoint_slowness(&self, z: f64) -> Result<f64, RayError> {
        let c = self.profile.speed(z);
        let q = self.margin_at(z);
        if !(q > 0.0) {
            return Err(RayError::TurningPointInsidePath { depth: z, margin: q });
        }
        Ok(1.0 / (c * q.sqrt()))
    }

    /// Partial derivatives of the time of flight.
    pub fn tof_gradients(&self) -> Result<RayGradient, RayError> {
        let k0 = self.k0;
        let d_k0 = if k0 == 0.0 {
            0.0
        } else {
            self.integrate_path(|_, c, q| k0 * c / (q * q.sqrt()))?
        };
        let dir = self.direction();
        let d_z_s = -dir * self.endpoint_slowness(self.z_s)?;
        let d_z_d = dir * self.endpoint_slowness(self.z_d)?;
        let profile = self.profile;
        let d_a = (0..profile.basis_len())
            .map(|n| {
                self.integrate_path(|z, c, q| {
                    let kc = k0 * c;
                    (2.0 * kc * kc - 1.0) / (c * c * q * q.sqrt()) * profile.basis_value(n, z)
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RayGradient {
            d_k0,
            d_z_s,
            d_z_d,
            d_a,
        })
    }

    /// Partial derivatives of the horizontal distance. At `k0 = 0` the
    /// `k0` derivative takes its limit `∫ c dz`.
    pub fn hdist_gradients(&self) -> Result<RayGradient, RayError> {
        let k0 = self.k0;
        let d_k0 = self.integrate_path(|_, c, q| c / (q * q.sqrt()))?;
        let dir = self.direction();
        let c_s = self.profile.speed(self.z_s);
        let c_d = self.profile.speed(self.z_d);
        let d_z_s = -dir * k0 * c_s * c_s * self.endpoint_slowness(self.z_s)?;
        let d_z_d = dir * k0 * c_d * c_d * self.endpoint_slowness(self.z_d)?;
        let profile = self.profile;
        let d_a = if k0 == 0.0 {
            vec![0.0; profile.basis_len()]
        } else {
            (0..profile.basis_len())
                .map(|n| self.integrate_path(|z, _, q| k0 / (q * q.sqrt()) * profile.basis_value(n, z)))
                .collect::<Result<Vec<_>, _>>()?
        };
        Ok(RayGradient {
            d_k0,
            d_z_s,
            d_z_d,
            d_a,
        })
    }

    /// `∫ g(z) f_n(z) dz` over the path with `g = 1 / (k0 c² √(1 - (k0 c)²))`,
    /// which equals `∂h/∂a_n - (1/k0) ∂t/∂a_n` without the cancellation.
    pub fn g_basis_projections(&self) -> Result<Vec<f64>, RayError> {
        let k0 = self.k0;
        let profile = self.profile;
        (0..profile.basis_len())
            .map(|n| self.integrate_path(|z, c, q| profile.basis_value(n, z) / (k0 * c * c * q.sqrt())))
            .collect()
    }

    /// Horizontal-distance gradient assembled from the ToF gradient through
    /// `∂h/∂k0 = (1/k0) ∂t/∂k0`, `∂h/∂z = k0 c² ∂t/∂z` and
    /// `∂h/∂a = (1/k0) ∂t/∂a + ∫ g f`. Quadrature errors in the ToF
    /// derivatives then cancel exactly in the Jacobian transform; with
    /// independent integrals they are amplified by roughly `1/q` near grazing.
    /// Requires `k0 > 0`.
    pub fn hdist_gradients_from(&self, tof: &RayGradient, g_projections: &[f64]) -> Result<RayGradient, RayError> {
        let k0 = self.k0;
        if !(k0 > 0.0) {
            return Err(RayError::InvalidSnellConstant(k0));
        }
        let c_s = self.profile.speed(self.z_s);
        let c_d = self.profile.speed(self.z_d);
        Ok(RayGradient {
            d_k0: tof.d_k0 / k0,
            d_z_s: k0 * c_s * c_s * tof.d_z_s,
            d_z_d: k0 * c_d * c_d * tof.d_z_d,
            d_a: tof.d_a.iter().zip(g_projections).map(|(t, g)| t / k0 + g).collect(),
        })
    }
}

/// `1 - (k0 c)²`, accurate to a few ulps of the result even when `k0 c` is
/// within rounding distance of one.
#[inline]
pub fn grazing_margin(k0: f64, c: f64) -> f64 {
    let p = k0 * c;
    let e = k0.mul_add(c, -p);
    let a = (1.0 - p) - e;
    a * (2.0 - a)
}

/// Largest sound speed between two depths.
pub fn path_max_speed(profile: &SoundSpeedProfile, z_s: f64, z_d: f64) -> f64 {
    profile.max_speed_on(z_s, z_d, CROSSING_GRID).1
}

/// Upper end of the admissible Snell-constant bracket,
/// `(1 - 10 ε) / max c(z)` over the path.
pub fn k0_upper_bound(profile: &SoundSpeedProfile, z_s: f64, z_d: f64) -> f64 {
    (1.0 - 10.0 * FEASIBILITY_MARGIN) / path_max_speed(profile, z_s, z_d)
}

fn check_endpoints(profile: &SoundSpeedProfile, z_s: f64, z_d: f64) -> Result<(), RayError> {
    profile.check_depth(z_s)?;
    profile.check_depth(z_d)?;
    if z_s == z_d {
        return Err(RayError::DegenerateDepths(z_s));
    }
    Ok(())
}

/// Solves `tof(k0) = t_target` on the admissible bracket. The solution is
/// unique because the ToF grows strictly with `k0`.
pub fn solve_k0_from_tof(
    profile: &SoundSpeedProfile,
    z_s: f64,
    z_d: f64,
    t_target: f64,
    quad: &QuadratureSpec,
) -> Result<f64, RayError> {
    check_endpoints(profile, z_s, z_d)?;
    solve_k0_from_tof_any_depth(profile, z_s, z_d, t_target, quad)
}

/// [`solve_k0_from_tof`] without the profile-domain check on the endpoint
/// depths; the profile is evaluated by extension. Used by estimators whose
/// depth iterates may stray slightly outside the water column.
pub fn solve_k0_from_tof_any_depth(
    profile: &SoundSpeedProfile,
    z_s: f64,
    z_d: f64,
    t_target: f64,
    quad: &QuadratureSpec,
) -> Result<f64, RayError> {
    if z_s == z_d {
        return Err(RayError::DegenerateDepths(z_s));
    }
    let base = RayScenario::unchecked(profile, z_s, z_d, 0.0).with_quadrature(*quad);
    let t_min = base.tof()?;
    if t_target < t_min * (1.0 - 1e-12) || !t_target.is_finite() {
        return Err(RayError::TargetBelowMinimum {
            target: t_target,
            minimum: t_min,
        });
    }
    // Within rounding of the vertical-ray ToF.
    if t_target <= t_min * (1.0 + 1e-15) {
        return Ok(0.0);
    }
    let k_max = k0_upper_bound(profile, z_s, z_d);
    let t_sup = base.with_k0(k_max).tof()?;
    if t_target > t_sup {
        return Err(RayError::TargetUnreachable {
            target: t_target,
            supremum: t_sup,
        });
    }
    solve_monotone(|k| base.with_k0(k).tof(), t_target, k_max)
}

/// Solves `horizontal_distance(k0) = h_target` on the admissible bracket.
pub fn solve_k0_from_h(
    profile: &SoundSpeedProfile,
    z_s: f64,
    z_d: f64,
    h_target: f64,
    quad: &QuadratureSpec,
) -> Result<f64, RayError> {
    check_endpoints(profile, z_s, z_d)?;
    if h_target < 0.0 || !h_target.is_finite() {
        return Err(RayError::TargetBelowMinimum {
            target: h_target,
            minimum: 0.0,
        });
    }
    if h_target == 0.0 {
        return Ok(0.0);
    }
    let base = RayScenario::unchecked(profile, z_s, z_d, 0.0).with_quadrature(*quad);
    let k_max = k0_upper_bound(profile, z_s, z_d);
    let h_sup = base.with_k0(k_max).horizontal_distance()?;
    if h_target > h_sup {
        return Err(RayError::TargetUnreachable {
            target: h_target,
            supremum: h_sup,
        });
    }
    solve_monotone(|k| base.with_k0(k).horizontal_distance(), h_target, k_max)
}

fn solve_monotone<F>(value: F, target: f64, k_max: f64) -> Result<f64, RayError>
where
    F: Fn(f64) -> Result<f64, RayError>,
{
    // The closure cannot return errors through the root finder, so the
    // first one is stashed and re-raised.
    let failure = std::cell::RefCell::new(None);
    let root = find_root_monotonic(
        |k| match value(k) {
            Ok(v) => v - target,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        &RootSpec::new(0.0, k_max),
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(root?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_difference_gradient_with_steps;
    use crate::ssp::BasisFunction;
    use crate::synth;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const K30: f64 = 5.773_502_691_896_258e-4; // cos 30° / 1500

    fn homogeneous() -> SoundSpeedProfile {
        SoundSpeedProfile::new(
            2000.0,
            BasisFunction::constant(1500.0),
            vec![BasisFunction::constant(1.0)],
            vec![0.0],
        )
        .unwrap()
    }

    fn tight() -> QuadratureSpec {
        QuadratureSpec {
            abs_tol: 1e-14,
            rel_tol: 1e-14,
            max_subdivisions: 1 << 14,
        }
    }

    #[test]
    fn vertical_ray_tof() {
        let p = homogeneous();
        let s = RayScenario::new(&p, 0.0, 1000.0, 0.0).unwrap();
        assert_relative_eq!(s.tof().unwrap(), 1000.0 / 1500.0, epsilon = 1e-12);
        assert_eq!(s.horizontal_distance().unwrap(), 0.0);
    }

    #[test]
    fn thirty_degree_ray_closed_forms() {
        let p = homogeneous();
        let s = RayScenario::new(&p, 0.0, 1000.0, K30).unwrap();
        let g = s.geometry().unwrap();
        let theta = PI / 6.0;
        assert!((g.t - 1000.0 / (1500.0 * theta.sin())).abs() < 1e-9);
        assert!((g.t - 1.333_333).abs() < 1e-6);
        assert!((g.h - 1000.0 / theta.tan()).abs() < 1e-6);
        assert!((g.h - 1732.051).abs() < 1e-3);
        assert!((g.range - 2000.0).abs() < 1e-6);
        assert_relative_eq!(g.theta_s, theta, epsilon = 1e-12);
        assert_eq!(g.theta_s, g.theta_d);
        assert_relative_eq!(g.theta_0, theta, epsilon = 1e-12);
    }

    #[test]
    fn vertical_tof_matches_slowness_quadrature() {
        let p = SoundSpeedProfile::demo(2000.0);
        let s = RayScenario::new(&p, 150.0, 1750.0, 0.0).unwrap();
        let direct = integrate(|z| 1.0 / p.speed(z), 150.0, 1750.0, &QuadratureSpec::default()).unwrap();
        assert_relative_eq!(s.tof().unwrap(), direct, max_relative = 1e-12);
    }

    #[test]
    fn vertical_angles() {
        let p = SoundSpeedProfile::demo(2000.0);
        let s = RayScenario::new(&p, 0.0, 800.0, 0.0).unwrap();
        let (a, b, c) = s.angles(0.0).unwrap();
        assert_eq!((a, b, c), (PI / 2.0, PI / 2.0, PI / 2.0));
    }

    #[test]
    fn snell_invariant_on_demo_profile() {
        let p = SoundSpeedProfile::demo(2000.0);
        let k0 = 0.8 * k0_upper_bound(&p, 0.0, 1200.0);
        let s = RayScenario::new(&p, 0.0, 1200.0, k0).unwrap();
        let (ts, td, _) = s.angles(s.horizontal_distance().unwrap()).unwrap();
        let lhs = ts.cos() / p.speed(0.0);
        let rhs = td.cos() / p.speed(1200.0);
        assert!((lhs - rhs).abs() < 1e-12 * lhs);
        for i in 0..100 {
            let z = 1200.0 * i as f64 / 99.0;
            let c = p.speed(z);
            let theta = (k0 * c).acos();
            assert!((theta.cos() / c - k0).abs() < 1e-10 * k0);
        }
    }

    #[test]
    fn solve_k0_closed_forms() {
        let p = homogeneous();
        let q = QuadratureSpec::default();
        assert_eq!(solve_k0_from_tof(&p, 0.0, 1000.0, 1000.0 / 1500.0, &q).unwrap(), 0.0);
        let k = solve_k0_from_tof(&p, 0.0, 1000.0, 1000.0 / 750.0, &q).unwrap();
        assert!((k - K30).abs() < 1e-12);
        assert_eq!(solve_k0_from_h(&p, 0.0, 1000.0, 0.0, &q).unwrap(), 0.0);
        let k = solve_k0_from_h(&p, 0.0, 1000.0, 1000.0 * 3f64.sqrt(), &q).unwrap();
        assert!((k - K30).abs() < 1e-12);
    }

    #[test]
    fn solve_k0_errors() {
        let p = homogeneous();
        let q = QuadratureSpec::default();
        assert!(matches!(
            solve_k0_from_tof(&p, 0.0, 1000.0, 0.5, &q),
            Err(RayError::TargetBelowMinimum { .. })
        ));
        assert!(matches!(
            solve_k0_from_tof(&p, 0.0, 1000.0, 1e6, &q),
            Err(RayError::TargetUnreachable { .. })
        ));
        // A surface maximum caps the reachable horizontal distance.
        let demo = SoundSpeedProfile::demo(2000.0);
        assert!(matches!(
            solve_k0_from_h(&demo, 0.0, 100.0, 9000.0, &q),
            Err(RayError::TargetUnreachable { .. })
        ));
        assert!(matches!(
            solve_k0_from_h(&demo, 100.0, 100.0, 10.0, &q),
            Err(RayError::DegenerateDepths(_))
        ));
    }

    #[test]
    fn round_trips_on_random_scenarios() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let case = synth::random_case(&mut rng);
            let s = case.scenario();
            let t = s.tof().unwrap();
            let h = s.horizontal_distance().unwrap();
            let k_t = solve_k0_from_tof(&case.profile, s.z_s, s.z_d, t, &s.quad).unwrap();
            let k_h = solve_k0_from_h(&case.profile, s.z_s, s.z_d, h, &s.quad).unwrap();
            assert!((k_t - s.k0).abs() <= 1e-12 * s.k0, "{k_t} vs {}", s.k0);
            assert!((k_h - s.k0).abs() <= 1e-12 * s.k0, "{k_h} vs {}", s.k0);
        }
    }

    #[test]
    fn grazing_ray_is_invalid() {
        let p = homogeneous();
        let s = RayScenario::unchecked(&p, 0.0, 1000.0, 1.0 / 1500.0);
        let r = s.validate_single_crossing();
        assert!(!r.valid);
        assert!(r.margin < FEASIBILITY_MARGIN);
        assert!(matches!(
            RayScenario::new(&p, 0.0, 1000.0, 1.0 / 1500.0),
            Err(RayError::TurningPointInsidePath { .. })
        ));
        let v = RayScenario::unchecked(&p, 0.0, 1000.0, 0.0).validate_single_crossing();
        assert!(v.valid);
        assert_eq!(v.margin, 1.0);
    }

    #[test]
    fn constant_profile_gradients() {
        let p = homogeneous();
        let s = RayScenario::new(&p, 0.0, 1000.0, K30).unwrap();
        let gt = s.tof_gradients().unwrap();
        let c = 1500.0;
        let q: f64 = 1.0 - (K30 * c).powi(2);
        assert!((gt.d_k0 - 1000.0 * K30 * c / q.powf(1.5)).abs() < 1e-4);
        assert!((gt.d_k0 - 6928.203).abs() < 1e-3);
        assert_relative_eq!(gt.d_z_d, 1.0 / (c * 0.5), max_relative = 1e-12);
        assert_relative_eq!(gt.d_z_s, -1.0 / (c * 0.5), max_relative = 1e-12);
        let gh = s.hdist_gradients().unwrap();
        assert_relative_eq!(gh.d_k0 * K30, gt.d_k0, max_relative = 1e-9);
        let gv = RayScenario::new(&p, 0.0, 1000.0, 0.0).unwrap().hdist_gradients().unwrap();
        assert_relative_eq!(gv.d_k0, 1.5e6, max_relative = 1e-12);
    }

    fn tof_of(profile: &SoundSpeedProfile, x: &[f64], quad: QuadratureSpec, h: bool) -> f64 {
        let p = profile.with_coefficients(x[3..].to_vec()).unwrap();
        let s = RayScenario::unchecked(&p, x[1], x[2], x[0]).with_quadrature(quad);
        if h {
            s.horizontal_distance().unwrap()
        } else {
            s.tof().unwrap()
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let case = synth::random_case(&mut rng);
            let s = case.scenario().with_quadrature(tight());
            let x0 = case.parameter_vector();
            let steps = synth::finite_difference_steps(&x0);
            for (want_h, analytic) in [(false, s.tof_gradients().unwrap()), (true, s.hdist_gradients().unwrap())] {
                let fd = finite_difference_gradient_with_steps(
                    |x| tof_of(&case.profile, x, tight(), want_h),
                    &x0,
                    &steps,
                )
                .unwrap();
                let a = analytic.to_vec();
                let scale = a.iter().skip(3).fold(0.0f64, |m, v| m.max(v.abs()));
                for (i, (fa, fd)) in a.iter().zip(&fd).enumerate() {
                    let denom = if i < 3 { fa.abs() } else { fa.abs().max(1e-3 * scale) };
                    assert!((fa - fd).abs() <= 1e-4 * denom, "h={want_h} i={i}: {fa} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn g_inner_product_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let case = synth::random_case(&mut rng);
            let s = case.scenario().with_quadrature(tight());
            let gt = s.tof_gradients().unwrap();
            let gh = s.hdist_gradients().unwrap();
            let (lo, hi) = s.interval();
            for n in 0..case.profile.basis_len() {
                let direct = integrate(
                    |z| {
                        let c = case.profile.speed(z);
                        let kc = s.k0 * c;
                        case.profile.basis_value(n, z) / (s.k0 * c * c * (1.0 - kc * kc).sqrt())
                    },
                    lo,
                    hi,
                    &tight(),
                )
                .unwrap();
                let via = gh.d_a[n] - gt.d_a[n] / s.k0;
                assert!((via - direct).abs() <= 1e-8 * direct.abs().max(1e-6), "{via} vs {direct}");
            }
        }
    }

    #[test]
    fn swapping_endpoints() {
        let p = SoundSpeedProfile::demo(2000.0);
        let k0 = 0.7 * k0_upper_bound(&p, 300.0, 1700.0);
        let a = RayScenario::new(&p, 300.0, 1700.0, k0).unwrap();
        let b = RayScenario::new(&p, 1700.0, 300.0, k0).unwrap();
        let (ga, gb) = (a.geometry().unwrap(), b.geometry().unwrap());
        assert_eq!(ga.t, gb.t);
        assert_eq!(ga.h, gb.h);
        assert_eq!(ga.range, gb.range);
        let (ta, tb) = (a.tof_gradients().unwrap(), b.tof_gradients().unwrap());
        assert_eq!(ta.d_z_s, tb.d_z_d);
        assert_eq!(ta.d_z_d, tb.d_z_s);
        assert!(ta.d_z_s < 0.0 && ta.d_z_d > 0.0);
    }

    #[test]
    fn tof_and_h_increase_with_k0() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..5 {
            let case = synth::random_case(&mut rng);
            let s = case.scenario();
            let k_max = k0_upper_bound(&case.profile, s.z_s, s.z_d);
            let mut last = (0.0, -1.0);
            for i in 0..100 {
                let k = k_max * i as f64 / 100.0;
                let r = s.with_k0(k);
                let v = (r.tof().unwrap(), r.horizontal_distance().unwrap());
                assert!(v.0 > last.0 && v.1 > last.1);
                last = v;
            }
        }
    }
}
