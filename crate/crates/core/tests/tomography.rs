mod common;

use nvsim::linalg::CMatrix;
use nvsim::tomography::{
    convert_multi_quantum, fidelity_table, measure, measure_diagonals, measure_offdiagonal,
    reconstruct, Instrument,
};
use nvsim::{fidelity, DensityMatrix, Error, InputState, Level, NoiseParams, Operator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn round_trip(rho: &DensityMatrix, instrument: &Instrument) -> DensityMatrix {
    reconstruct(&measure(rho, instrument).unwrap()).unwrap().state
}

#[test]
fn noiseless_round_trip_pure_states() {
    let setup = common::noiseless();
    let instrument = Instrument::noiseless(&setup);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let rho = common::random_pure(&mut rng, 4);
        let d = round_trip(&rho, &instrument).trace_distance(&rho);
        assert!(d < 1e-8, "{d}");
    }
}

#[test]
fn noiseless_round_trip_mixed_states() {
    let setup = common::noiseless();
    let instrument = Instrument::noiseless(&setup);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for k in 1..=4 {
        let rho = common::random_mixed(&mut rng, 4, k);
        assert!(round_trip(&rho, &instrument).trace_distance(&rho) < 1e-8);
    }
    let mixed = DensityMatrix::maximally_mixed(4).unwrap();
    assert!(round_trip(&mixed, &instrument).trace_distance(&mixed) < 1e-8);
}

#[test]
fn populations_from_basis_states() {
    let setup = common::noiseless();
    let instrument = Instrument::noiseless(&setup);
    for l in Level::ALL {
        let rec = measure_diagonals(&DensityMatrix::basis_state(l), &instrument).unwrap();
        for m in Level::ALL {
            let want = if m == l { 1.0 } else { 0.0 };
            assert!((rec.populations[m.index()] - want).abs() < 1e-10);
        }
    }
}

#[test]
fn fidelity_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let a = common::random_mixed(&mut rng, 4, 3);
        let b = common::random_mixed(&mut rng, 4, 2);
        let c = common::random_mixed(&mut rng, 4, 2);
        let fab = fidelity(&a, &b).unwrap().raw;
        let fba = fidelity(&b, &a).unwrap().raw;
        assert!((fab - fba).abs() < 1e-12);
        assert!((fidelity(&a, &a).unwrap().raw - a.purity()).abs() < 1e-12);
        let w = 0.3;
        let mix = Operator::new(
            a.operator().matrix().map(|z| z * w) + c.operator().matrix().map(|z| z * (1.0 - w)),
        )
        .unwrap();
        let mix = DensityMatrix::new(mix).unwrap();
        let lhs = fidelity(&mix, &b).unwrap().raw;
        let rhs = w * fab + (1.0 - w) * fidelity(&c, &b).unwrap().raw;
        assert!((lhs - rhs).abs() < 1e-12);
    }
    let p = DensityMatrix::basis_state(Level::L1);
    let q = DensityMatrix::basis_state(Level::L2);
    assert_eq!(fidelity(&p, &q).unwrap().value, 0.0);
    assert_eq!(fidelity(&p, &p).unwrap().value, 1.0);
}

#[test]
fn shot_noise_shrinks_with_averaging() {
    let setup = common::noiseless();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let rho = common::random_pure(&mut rng, 4);
    let mean_error = |shots: u64| {
        (0..4)
            .map(|seed| {
                let instrument = Instrument {
                    shots: Some(shots),
                    seed,
                    ..Instrument::noiseless(&setup)
                };
                round_trip(&rho, &instrument).trace_distance(&rho)
            })
            .sum::<f64>()
            / 4.0
    };
    let e1 = mean_error(5_000);
    let e2 = mean_error(80_000);
    assert!(e1 > 1e-4, "{e1}");
    let ratio = e1 / e2;
    assert!((2.5..6.5).contains(&ratio), "{e1} {e2}");
}

#[test]
fn conversion_damping_is_divided_out() {
    let base = common::noiseless();
    let setup = base
        .with_noise(NoiseParams {
            t2_electron: 6.0,
            t2_nuclear: 100.0,
            ..NoiseParams::noiseless()
        })
        .unwrap();
    let instrument = Instrument::from_setup(&setup);
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let rho = common::random_pure(&mut rng, 4);
    for pair in [(Level::L1, Level::L4), (Level::L2, Level::L3)] {
        let m = convert_multi_quantum(&rho, pair, &instrument).unwrap();
        let conv = m.conversion.as_ref().expect("converted pair");
        assert!(conv.correction < 1.0 && conv.correction > 0.9);
        let want = rho.get(pair.0.index(), pair.1.index());
        assert!((m.estimate - want).norm() < 1e-9, "{:?} {} vs {}", pair, m.estimate, want);
        let again = measure_offdiagonal(&rho, pair, &instrument).unwrap();
        assert_eq!(again.estimate, m.estimate);
    }
}

#[test]
fn unreliable_correction_is_an_error() {
    let setup = common::noiseless()
        .with_noise(NoiseParams {
            t2_nuclear: 0.01,
            ..NoiseParams::noiseless()
        })
        .unwrap();
    let instrument = Instrument::from_setup(&setup);
    let rho = DensityMatrix::maximally_mixed(4).unwrap();
    let err = convert_multi_quantum(&rho, (Level::L1, Level::L4), &instrument).unwrap_err();
    assert!(matches!(err, Error::UnreliableCorrection(c) if c < 0.1), "{err}");
}

#[test]
fn unphysical_estimates_are_projected() {
    let setup = common::noiseless();
    let instrument = Instrument {
        shots: Some(200),
        seed: 3,
        ..Instrument::noiseless(&setup)
    };
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..20 {
        let rho = common::random_pure(&mut rng, 4);
        let rec = reconstruct(&measure(&rho, &instrument).unwrap()).unwrap();
        assert!(rec.state.min_eigenvalue() >= -1e-9);
        assert!((rec.state.trace().re - 1.0).abs() < 1e-10);
        worst = worst.max(rec.projection_distance);
    }
    assert!(worst > 0.0);
}

#[test]
fn calibrated_fidelity_table() {
    let setup = common::calibrated();
    let report = fidelity_table(&setup, &InputState::ALL, &Instrument::from_setup(&setup)).unwrap();
    let want = [0.89, 0.89, 0.88, 1.0];
    for (f, w) in report.fidelities().iter().zip(want) {
        assert!((f - w).abs() <= 0.05, "{f} vs {w}");
    }
    let rho = &report.rows[0].reconstructed;
    let m: &CMatrix = rho.operator().matrix();
    let largest = (0..16).max_by(|a, b| m[*a].norm().total_cmp(&m[*b].norm())).unwrap();
    assert_eq!(largest, 1 + 4);
    assert!(rho.max_imaginary() < 0.05);
}
