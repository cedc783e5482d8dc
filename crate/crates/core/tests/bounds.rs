use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uwcrb::crb::crb_report;
use uwcrb::numerics::QuadratureSpec;
use uwcrb::ray::{solve_k0_from_h, RayScenario};
use uwcrb::ssp::{build_sampling_matrix, uniform_depths, NoiseModel, SoundSpeedProfile};
use uwcrb::synth::random_case;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_term_is_nonnegative_and_routes_agree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng);
        let sampling = case.sampling().unwrap();
        let report = crb_report(&case.scenario(), &case.noise, &sampling).unwrap();
        prop_assert!(report.valid);
        for v in report.crb_h.as_array().into_iter().chain(report.crb_d.as_array()) {
            prop_assert!(v.is_finite() && v >= 0.0);
        }
        prop_assert!(report.cross_check_delta() < 1e-6, "delta {}", report.cross_check_delta());
        prop_assert!(rel(report.crb_h_transform, report.crb_h_total()) < 1e-6);
    }

    #[test]
    fn bound_scales_linearly_with_noise(seed in any::<u64>(), factor in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng);
        let sampling = case.sampling().unwrap();
        let base = crb_report(&case.scenario(), &case.noise, &sampling).unwrap();
        let scaled = crb_report(&case.scenario(), &case.noise.scaled(factor), &sampling).unwrap();
        for (a, b) in base.crb_d.as_array().iter().zip(scaled.crb_d.as_array()) {
            prop_assert!(rel(a * factor, b) < 1e-10);
        }
    }

    #[test]
    fn each_term_tracks_only_its_own_variance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng);
        let sampling = case.sampling().unwrap();
        let base = crb_report(&case.scenario(), &case.noise, &sampling).unwrap().crb_d;
        let mut noisier = case.noise.clone();
        noisier.sigma_c_sq *= 3.0;
        let more = crb_report(&case.scenario(), &noisier, &sampling).unwrap().crb_d;
        prop_assert!(rel(more.ssp, 3.0 * base.ssp) < 1e-10);
        prop_assert!(rel(more.tof, base.tof) < 1e-12);
        prop_assert!(rel(more.depth(), base.depth()) < 1e-12);
    }
}

#[test]
fn straight_rays_in_uniform_water() {
    let c = 1500.0;
    let profile = SoundSpeedProfile::constant(c, 2000.0).unwrap();
    let quad = QuadratureSpec::default();
    let (z_s, z_d, h) = (100.0, 900.0, 2500.0);
    let k0 = solve_k0_from_h(&profile, z_s, z_d, h, &quad).unwrap();
    let s = RayScenario::new(&profile, z_s, z_d, k0).unwrap();
    let slant = h.hypot(z_d - z_s);
    assert!(rel(s.tof().unwrap(), slant / c) < 1e-10);
    assert!(rel(k0 * c, h / slant) < 1e-10);
}

#[test]
fn more_samples_never_loosen_the_bound() {
    let profile = SoundSpeedProfile::demo(2000.0);
    let quad = QuadratureSpec::default();
    let k0 = solve_k0_from_h(&profile, 0.0, 1000.0, 8000.0, &quad).unwrap();
    let s = RayScenario::new(&profile, 0.0, 1000.0, k0).unwrap();
    let mut previous = f64::INFINITY;
    for m in [8, 16, 32, 64] {
        let noise = NoiseModel {
            sigma_t_sq: 1e-8,
            sigma_z_sq: 1.0,
            sigma_c_sq: 1.0,
            sample_depths: uniform_depths(0.0, 2000.0, m),
        };
        let sampling = build_sampling_matrix(&profile, &noise.sample_depths).unwrap();
        let terms = crb_report(&s, &noise, &sampling).unwrap().crb_d;
        assert!(terms.ssp < previous);
        previous = terms.ssp;
    }
}

#[test]
fn bound_is_symmetric_under_endpoint_swap() {
    let profile = SoundSpeedProfile::demo(2000.0);
    let quad = QuadratureSpec::default();
    let noise = NoiseModel {
        sigma_t_sq: 1e-8,
        sigma_z_sq: 1.0,
        sigma_c_sq: 1.0,
        sample_depths: uniform_depths(0.0, 2000.0, 10),
    };
    let sampling = build_sampling_matrix(&profile, &noise.sample_depths).unwrap();
    let (a, b) = (300.0, 1400.0);
    let k_ab = solve_k0_from_h(&profile, a, b, 6000.0, &quad).unwrap();
    let k_ba = solve_k0_from_h(&profile, b, a, 6000.0, &quad).unwrap();
    assert!(rel(k_ab, k_ba) < 1e-10);
    let fwd = crb_report(&RayScenario::new(&profile, a, b, k_ab).unwrap(), &noise, &sampling).unwrap();
    let rev = crb_report(&RayScenario::new(&profile, b, a, k_ba).unwrap(), &noise, &sampling).unwrap();
    assert!(rel(fwd.crb_d_total(), rev.crb_d_total()) < 1e-8);
    assert!(rel(fwd.crb_d.depth_s, rev.crb_d.depth_d) < 1e-8);
}
