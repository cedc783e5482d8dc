//! Fisher information for the parameter vector `x = (k0, z_s, z_d, a)`
//! given the measurement stack `(t, z_s, z_d, ĉ_1..ĉ_M)`, its closed-form
//! inverse, the change of variables to `y = (h, z_s, z_d, a)` and the
//! per-measurement decomposition of the bounds on `h` and on the range `D`.
//!
//! Matrices are 0-based here; index `i` corresponds to the 1-based index
//! `i + 1` used in the usual written form (`[I_x⁻¹]₁,₁` is `(0, 0)`).
//!
//! Only the mean-gradient term of the Gaussian FIM is used: the ToF variance
//! is treated as independent of the parameters.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::numerics::{spd_inverse, NumericsError};
use crate::ray::{grazing_margin, RayError, RayGeometry, RayGradient, RayScenario};
use crate::ssp::{NoiseModel, SamplingMatrix, SspError};

/// Snell constants below this are treated as vertical rays and rejected.
pub const MIN_SNELL_CONSTANT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CrbError {
    #[error("near-vertical ray (k0 = {0:e} s/m): the range bound is undefined")]
    DegenerateVerticalRay(f64),
    #[error("block dimensions disagree: {0}")]
    DimensionMismatch(String),
    #[error("Gram matrix FᵀF is singular")]
    SingularGram,
    #[error(transparent)]
    Ray(#[from] RayError),
    #[error(transparent)]
    Ssp(#[from] SspError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// `I_x = [[A, B], [Bᵀ, D]]` with `A` 3×3, `B` 3×N and `D` N×N.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherBlocks {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl FisherBlocks {
    pub fn from_gradient(grad: &RayGradient, noise: &NoiseModel, sampling: &SamplingMatrix) -> Result<Self, CrbError> {
        let n = grad.d_a.len();
        if sampling.basis_len() != n {
            return Err(CrbError::DimensionMismatch(format!(
                "{n} ToF coefficient derivatives but {} sampled basis functions",
                sampling.basis_len()
            )));
        }
        let inv_t = 1.0 / noise.sigma_t_sq;
        let inv_z = 1.0 / noise.sigma_z_sq;
        let inv_c = 1.0 / noise.sigma_c_sq;
        let g3 = DVector::from_vec(vec![grad.d_k0, grad.d_z_s, grad.d_z_d]);
        let ga = DVector::from_column_slice(&grad.d_a);
        let mut a = &g3 * g3.transpose() * inv_t;
        a[(1, 1)] += inv_z;
        a[(2, 2)] += inv_z;
        let b = &g3 * ga.transpose() * inv_t;
        let d = &ga * ga.transpose() * inv_t + &sampling.gram * inv_c;
        Ok(Self { a, b, d })
    }

    pub fn basis_len(&self) -> usize {
        self.d.nrows()
    }
}

/// Fisher blocks for a scenario, with ToF gradients computed on the way.
pub fn fisher_blocks(s: &RayScenario<'_>, noise: &NoiseModel, sampling: &SamplingMatrix) -> Result<FisherBlocks, CrbError> {
    FisherBlocks::from_gradient(&s.tof_gradients()?, noise, sampling)
}

/// Stacks the blocks into the full `(N+3)×(N+3)` information matrix.
pub fn assemble_fim(blocks: &FisherBlocks) -> Result<DMatrix<f64>, CrbError> {
    let n = blocks.d.nrows();
    if blocks.a.shape() != (3, 3) || blocks.b.shape() != (3, n) || blocks.d.shape() != (n, n) {
        return Err(CrbError::DimensionMismatch(format!(
            "A {:?}, B {:?}, D {:?}",
            blocks.a.shape(),
            blocks.b.shape(),
            blocks.d.shape()
        )));
    }
    let mut fim = DMatrix::zeros(n + 3, n + 3);
    fim.view_mut((0, 0), (3, 3)).copy_from(&blocks.a);
    fim.view_mut((0, 3), (3, n)).copy_from(&blocks.b);
    fim.view_mut((3, 0), (n, 3)).copy_from(&blocks.b.transpose());
    fim.view_mut((3, 3), (n, n)).copy_from(&blocks.d);
    Ok(fim)
}

fn check_k0(k0: f64) -> Result<(), CrbError> {
    if !(k0 >= MIN_SNELL_CONSTANT) {
        return Err(CrbError::DegenerateVerticalRay(k0));
    }
    Ok(())
}

/// Closed-form inverse of the information matrix, element by element:
///
/// ```text
/// (0,0)     σ_t²/t_k² + σ_z² (t_s² + t_d²)/t_k² + σ_c² t_a (FᵀF)⁻¹ t_aᵀ / t_k²
/// (0,1)     -σ_z² t_s / t_k        (0,2)  -σ_z² t_d / t_k
/// (0,3..)   -σ_c² t_a (FᵀF)⁻¹ / t_k
/// (1,1) = (2,2) = σ_z²,  (1,2) = 0,  (1..2, 3..) = 0
/// (3..,3..) σ_c² (FᵀF)⁻¹
/// ```
///
/// with `t_k = ∂t/∂k0`, `t_s = ∂t/∂z_s`, `t_d = ∂t/∂z_d`, `t_a = ∂t/∂a`.
pub fn invert_fim_closed_form(
    grad: &RayGradient,
    noise: &NoiseModel,
    sampling: &SamplingMatrix,
) -> Result<DMatrix<f64>, CrbError> {
    let n = grad.d_a.len();
    if sampling.basis_len() != n || sampling.gram_inverse.shape() != (n, n) {
        return Err(CrbError::DimensionMismatch(format!(
            "{n} coefficient derivatives, Gram inverse {:?}",
            sampling.gram_inverse.shape()
        )));
    }
    if sampling.gram_inverse.iter().any(|v| !v.is_finite()) {
        return Err(CrbError::SingularGram);
    }
    let tk = grad.d_k0;
    if !(tk.abs() > 0.0) || !tk.is_finite() {
        return Err(CrbError::DegenerateVerticalRay(tk));
    }
    let (st, sz, sc) = (noise.sigma_t_sq, noise.sigma_z_sq, noise.sigma_c_sq);
    let ta = DVector::from_column_slice(&grad.d_a);
    let ta_ginv = sampling.gram_inverse.transpose() * &ta; // (FᵀF)⁻¹ t_aᵀ, symmetric Gram
    let quad = ta.dot(&ta_ginv);

    let mut inv = DMatrix::zeros(n + 3, n + 3);
    inv[(0, 0)] = (st + sz * (grad.d_z_s * grad.d_z_s + grad.d_z_d * grad.d_z_d) + sc * quad) / (tk * tk);
    inv[(0, 1)] = -sz * grad.d_z_s / tk;
    inv[(1, 0)] = inv[(0, 1)];
    inv[(0, 2)] = -sz * grad.d_z_d / tk;
    inv[(2, 0)] = inv[(0, 2)];
    inv[(1, 1)] = sz;
    inv[(2, 2)] = sz;
    for j in 0..n {
        let v = -sc * ta_ginv[j] / tk;
        inv[(0, 3 + j)] = v;
        inv[(3 + j, 0)] = v;
        for i in 0..n {
            inv[(3 + i, 3 + j)] = sc * sampling.gram_inverse[(i, j)];
        }
    }
    Ok(inv)
}

/// Closed-form inverse of the 3×3 block `A`.
pub fn a_block_inverse(grad: &RayGradient, noise: &NoiseModel) -> Result<DMatrix<f64>, CrbError> {
    let tk = grad.d_k0;
    if !(tk.abs() > 0.0) {
        return Err(CrbError::DegenerateVerticalRay(tk));
    }
    let (st, sz) = (noise.sigma_t_sq, noise.sigma_z_sq);
    let (ts, td) = (grad.d_z_s, grad.d_z_d);
    let mut m = DMatrix::zeros(3, 3);
    m[(0, 0)] = (st + sz * (ts * ts + td * td)) / (tk * tk);
    m[(0, 1)] = -sz * ts / tk;
    m[(1, 0)] = m[(0, 1)];
    m[(0, 2)] = -sz * td / tk;
    m[(2, 0)] = m[(0, 2)];
    m[(1, 1)] = sz;
    m[(2, 2)] = sz;
    Ok(m)
}

/// Rank correction added to `A⁻¹` by the Woodbury expansion of the
/// top-left block of `I_x⁻¹`. Only its `(0, 0)` entry is non-zero:
/// `t_a (FᵀF / σ_c²)⁻¹ t_aᵀ / t_k²`.
pub fn woodbury_correction(grad: &RayGradient, noise: &NoiseModel, sampling: &SamplingMatrix) -> f64 {
    let ta = DVector::from_column_slice(&grad.d_a);
    let quad = ta.dot(&(&sampling.gram_inverse * &ta));
    noise.sigma_c_sq * quad / (grad.d_k0 * grad.d_k0)
}

/// `H = (∂y/∂x)ᵀ`: first column `∂h/∂x`, identity on the remaining
/// coordinates, so that `I_y⁻¹ = Hᵀ I_x⁻¹ H`.
pub fn jacobian_h_matrix(hgrad: &RayGradient) -> DMatrix<f64> {
    let n = hgrad.d_a.len();
    let mut h = DMatrix::identity(n + 3, n + 3);
    for (i, v) in hgrad.to_vec().into_iter().enumerate() {
        h[(i, 0)] = v;
    }
    h
}

/// `Hᵀ I_x⁻¹ H`.
pub fn transform_inverse(h: &DMatrix<f64>, ix_inv: &DMatrix<f64>) -> DMatrix<f64> {
    h.transpose() * ix_inv * h
}

/// ToF gradient with respect to `y = (h, z_s, z_d, a)`, i.e. `J⁻ᵀ ∇_x t`:
/// `(k0, q_s ∂t/∂z_s, q_d ∂t/∂z_d, -k0 ∫ g f)` with `q = 1 - (k0 c)²`.
pub fn tof_gradient_in_y(s: &RayScenario<'_>, g_projection: &[f64]) -> Result<RayGradient, CrbError> {
    check_k0(s.k0)?;
    let dir = s.direction();
    let endpoint = |z: f64| {
        let c = s.profile.speed(z);
        grazing_margin(s.k0, c).sqrt() / c
    };
    Ok(RayGradient {
        d_k0: s.k0,
        d_z_s: -dir * endpoint(s.z_s),
        d_z_d: dir * endpoint(s.z_d),
        d_a: g_projection.iter().map(|g| -s.k0 * g).collect(),
    })
}

/// `I_y⁻¹` by inverting `I_y = J⁻ᵀ I_x J⁻¹`, assembled from the measurement
/// gradients in the `y` coordinates. Equal to `Hᵀ I_x⁻¹ H`, but that product
/// reconstructs quantities of order `q²` from terms of order one and loses
/// up to `1e-16 / q²` relative accuracy for rays close to grazing; `I_y`
/// itself is well scaled.
pub fn transformed_inverse(
    s: &RayScenario<'_>,
    g_projection: &[f64],
    noise: &NoiseModel,
    sampling: &SamplingMatrix,
) -> Result<DMatrix<f64>, CrbError> {
    let grad_y = tof_gradient_in_y(s, g_projection)?;
    let i_y = assemble_fim(&FisherBlocks::from_gradient(&grad_y, noise, sampling)?)?;
    Ok(spd_inverse(&i_y)?)
}

/// `g(z) = 1 / (k0 c² √(1 - (k0 c)²))`.
pub fn g_eval(s: &RayScenario<'_>, z: f64) -> Result<f64, CrbError> {
    check_k0(s.k0)?;
    s.profile.check_depth(z)?;
    let c = s.profile.speed(z);
    let q = grazing_margin(s.k0, c);
    if !(q > 0.0) {
        return Err(RayError::TurningPointInsidePath { depth: z, margin: q }.into());
    }
    Ok(1.0 / (s.k0 * c * c * q.sqrt()))
}

/// Everything derived from one scenario: gradients, information matrix,
/// both inverses and the transformed bound.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherWorkspace {
    pub geometry: RayGeometry,
    pub tof_gradient: RayGradient,
    /// Assembled from the ToF gradient; see
    /// [`RayScenario::hdist_gradients_from`].
    pub hdist_gradient: RayGradient,
    /// `∫ g f_n dz`, the projection vector.
    pub g_projection: Vec<f64>,
    pub blocks: FisherBlocks,
    pub i_x: DMatrix<f64>,
    pub i_x_inv_closed: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// From [`transformed_inverse`].
    pub i_y_inv: DMatrix<f64>,
}

impl FisherWorkspace {
    pub fn compute(s: &RayScenario<'_>, noise: &NoiseModel, sampling: &SamplingMatrix) -> Result<Self, CrbError> {
        check_k0(s.k0)?;
        let geometry = s.geometry()?;
        let tof_gradient = s.tof_gradients()?;
        let g_projection = s.g_basis_projections()?;
        let hdist_gradient = s.hdist_gradients_from(&tof_gradient, &g_projection)?;
        let blocks = FisherBlocks::from_gradient(&tof_gradient, noise, sampling)?;
        let i_x = assemble_fim(&blocks)?;
        let i_x_inv_closed = invert_fim_closed_form(&tof_gradient, noise, sampling)?;
        let h = jacobian_h_matrix(&hdist_gradient);
        let i_y_inv = transformed_inverse(s, &g_projection, noise, sampling)?;
        Ok(Self {
            geometry,
            tof_gradient,
            hdist_gradient,
            g_projection,
            blocks,
            i_x,
            i_x_inv_closed,
            h,
            i_y_inv,
        })
    }

    /// `Hᵀ I_x⁻¹ H` evaluated literally.
    pub fn i_y_inv_product(&self) -> DMatrix<f64> {
        transform_inverse(&self.h, &self.i_x_inv_closed)
    }

    /// Brute-force numerical inverse of the assembled information matrix.
    pub fn i_x_inv_numeric(&self) -> Result<DMatrix<f64>, CrbError> {
        Ok(spd_inverse(&self.i_x)?)
    }

    /// `∂h/∂a - (1/k0) ∂t/∂a`.
    pub fn projection_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.g_projection.clone())
    }
}

/// Contribution of each measurement type to a bound, in m².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CrbTerms {
    pub tof: f64,
    pub depth_s: f64,
    pub depth_d: f64,
    pub ssp: f64,
}

impl CrbTerms {
    pub fn total(&self) -> f64 {
        self.tof + self.depth_s + self.depth_d + self.ssp
    }

    pub fn depth(&self) -> f64 {
        self.depth_s + self.depth_d
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.tof, self.depth_s, self.depth_d, self.ssp]
    }
}

/// The SSP term's projection quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionDiagnostics {
    /// `‖∂h/∂a - (1/k0) ∂t/∂a‖²` in the `(FᵀF)⁻¹` norm, s².
    pub value: f64,
    /// `(Δz gᵀF)(FᵀF)⁻¹(Fᵀg Δz)` with `g` sampled at the CTD depths.
    /// `None` when `g` is undefined at some sample depth outside the path.
    pub riemann_approx: Option<f64>,
    /// `(|z_d - z_s| / M) E_g`.
    pub upper_bound: f64,
    /// Energy of `g` over the path interval.
    pub energy: f64,
    pub delta_z: f64,
    /// Whether every sample depth lies in `[min(z_s,z_d), max(z_s,z_d)]`.
    pub samples_in_interval: bool,
}

pub fn projection_diagnostics(
    s: &RayScenario<'_>,
    sampling: &SamplingMatrix,
    noise: &NoiseModel,
) -> Result<ProjectionDiagnostics, CrbError> {
    check_k0(s.k0)?;
    let v = DVector::from_vec(s.g_basis_projections()?);
    projection_from_vector(s, sampling, noise, &v)
}

fn projection_from_vector(
    s: &RayScenario<'_>,
    sampling: &SamplingMatrix,
    noise: &NoiseModel,
    v: &DVector<f64>,
) -> Result<ProjectionDiagnostics, CrbError> {
    let value = v.dot(&(&sampling.gram_inverse * v));
    let m = noise.samples();
    let delta_z = s.vertical_span() / m as f64;
    let (lo, hi) = s.interval();
    let slack = 1e-9 * s.profile.depth_max;
    let samples_in_interval = noise
        .sample_depths
        .iter()
        .all(|&z| z >= lo - slack && z <= hi + slack);
    let g: Option<Vec<f64>> = noise.sample_depths.iter().map(|&z| g_eval(s, z).ok()).collect();
    let riemann_approx = g.map(|g| {
        let g = DVector::from_vec(g);
        let ftg = sampling.entries.transpose() * g * delta_z;
        ftg.dot(&(&sampling.gram_inverse * &ftg))
    });
    let k0 = s.k0;
    let energy = s.integrate_path(|_, c, q| {
        let g = 1.0 / (k0 * c * c * q.sqrt());
        g * g
    })?;
    Ok(ProjectionDiagnostics {
        value,
        riemann_approx,
        upper_bound: delta_z * energy,
        energy,
        delta_z,
        samples_in_interval,
    })
}

/// Four-term decomposition of the bound on `h`.
pub fn crb_h_terms(s: &RayScenario<'_>, noise: &NoiseModel, projection_value: f64) -> Result<CrbTerms, CrbError> {
    check_k0(s.k0)?;
    let (c_s, c_d) = (s.profile.speed(s.z_s), s.profile.speed(s.z_d));
    let (kc_s, kc_d) = (s.k0 * c_s, s.k0 * c_d);
    Ok(CrbTerms {
        tof: noise.sigma_t_sq / (s.k0 * s.k0),
        depth_s: noise.sigma_z_sq * grazing_margin(s.k0, c_s) / (kc_s * kc_s),
        depth_d: noise.sigma_z_sq * grazing_margin(s.k0, c_d) / (kc_d * kc_d),
        ssp: noise.sigma_c_sq * projection_value,
    })
}

pub fn crb_h_breakdown(s: &RayScenario<'_>, noise: &NoiseModel, sampling: &SamplingMatrix) -> Result<CrbTerms, CrbError> {
    let p = projection_diagnostics(s, sampling, noise)?;
    crb_h_terms(s, noise, p.value)
}

/// Four-term angle form of the bound on the range `D`.
pub fn crb_d_terms(
    s: &RayScenario<'_>,
    noise: &NoiseModel,
    geometry: &RayGeometry,
    projection_value: f64,
) -> Result<CrbTerms, CrbError> {
    check_k0(s.k0)?;
    let c_s = s.profile.speed(s.z_s);
    let (ts, td, t0) = (geometry.theta_s, geometry.theta_d, geometry.theta_0);
    let ratio = t0.cos() / ts.cos();
    let depth = |theta: f64| {
        let r = (t0 - theta).sin() / theta.cos();
        noise.sigma_z_sq * r * r
    };
    Ok(CrbTerms {
        tof: noise.sigma_t_sq * c_s * c_s * ratio * ratio,
        depth_s: depth(ts),
        depth_d: depth(td),
        ssp: noise.sigma_c_sq * t0.cos() * t0.cos() * projection_value,
    })
}

pub fn crb_d_breakdown(s: &RayScenario<'_>, noise: &NoiseModel, sampling: &SamplingMatrix) -> Result<CrbTerms, CrbError> {
    let geometry = s.geometry()?;
    let p = projection_diagnostics(s, sampling, noise)?;
    crb_d_terms(s, noise, &geometry, p.value)
}

/// `∂D/∂(h, z_s, z_d)`.
pub fn range_sensitivity(s: &RayScenario<'_>, theta_0: f64) -> [f64; 3] {
    let dir = s.direction();
    [theta_0.cos(), -dir * theta_0.sin(), dir * theta_0.sin()]
}

/// `sᵀ [I_y⁻¹]_{0..3, 0..3} s`.
pub fn crb_d_from_transform(s: &RayScenario<'_>, theta_0: f64, i_y_inv: &DMatrix<f64>) -> f64 {
    let sv = range_sensitivity(s, theta_0);
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            acc += sv[i] * i_y_inv[(i, j)] * sv[j];
        }
    }
    acc
}

pub fn crb_d_transform(s: &RayScenario<'_>, noise: &NoiseModel, sampling: &SamplingMatrix) -> Result<f64, CrbError> {
    let ws = FisherWorkspace::compute(s, noise, sampling)?;
    Ok(crb_d_from_transform(s, ws.geometry.theta_0, &ws.i_y_inv))
}

/// Full per-term report for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrbReport {
    pub k0: f64,
    pub geometry: RayGeometry,
    pub crb_h: CrbTerms,
    pub crb_d: CrbTerms,
    /// `[I_y⁻¹]₀₀` from the Jacobian transform.
    pub crb_h_transform: f64,
    /// Range bound from the transform route.
    pub crb_d_transform: f64,
    pub projection: ProjectionDiagnostics,
    pub valid: bool,
}

impl CrbReport {
    pub fn crb_h_total(&self) -> f64 {
        self.crb_h.total()
    }

    pub fn crb_d_total(&self) -> f64 {
        self.crb_d.total()
    }

    /// Relative disagreement between the transform and angle forms of the
    /// range bound.
    pub fn cross_check_delta(&self) -> f64 {
        let total = self.crb_d_total();
        (self.crb_d_transform - total).abs() / total
    }
}

/// Computes both bounds by both routes.
pub fn crb_report(s: &RayScenario<'_>, noise: &NoiseModel, sampling: &SamplingMatrix) -> Result<CrbReport, CrbError> {
    let ws = FisherWorkspace::compute(s, noise, sampling)?;
    let v = ws.projection_vector();
    let projection = projection_from_vector(s, sampling, noise, &v)?;
    let crb_h = crb_h_terms(s, noise, projection.value)?;
    let crb_d = crb_d_terms(s, noise, &ws.geometry, projection.value)?;
    let crossing = s.validate_single_crossing();
    let crb_d_transform = crb_d_from_transform(s, ws.geometry.theta_0, &ws.i_y_inv);
    let valid = crossing.valid
        && crb_h.as_array().iter().chain(crb_d.as_array().iter()).all(|v| v.is_finite() && *v >= 0.0);
    Ok(CrbReport {
        k0: s.k0,
        geometry: ws.geometry,
        crb_h,
        crb_d,
        crb_h_transform: ws.i_y_inv[(0, 0)],
        crb_d_transform,
        projection,
        valid,
    })
}
