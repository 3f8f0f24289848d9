//! Acceptance criteria 1–9, one PASS/FAIL line each.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nvsim::experiments::{echo_amplitude, electron_rabi, gate_endurance, nuclear_rabi};
use nvsim::readout::{predicted_fidelity, shot_with_probability};
use nvsim::sequence::{
    format, parse, validate, Angle, CheckedStep, PulseAmount, PulseStep, Step, Target,
};
use nvsim::tomography::{fidelity_table, measure, reconstruct, Instrument};
use nvsim::{
    evolve, pulse_propagator, DensityMatrix, EnsembleState, InputState, Level,
    NoiseParams, PulseSpec, SequenceProgram, Transition,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = common::config_dir().join("default.toml");
    let mut out = Vec::new();
    let code = nvsim::cli::run(
        [
            "nvsim",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "levels",
        ],
        &mut out,
        &mut Vec::new(),
    );
    let text = String::from_utf8(out).unwrap();
    let c = text
        .lines()
        .find(|l| l.starts_with("C "))
        .and_then(|l| l.split_whitespace().last())
        .and_then(|v| v.parse::<f64>().ok())
        .unwrap_or(f64::NAN);
    let split = text
        .lines()
        .find_map(|l| l.strip_prefix("splitting_3_4_MHz "))
        .and_then(|v| v.trim().parse::<f64>().ok())
        .map(f64::abs)
        .unwrap_or(f64::NAN);
    outcome(
        code == 0 && (c - 127.0).abs() <= 0.5 && (split - 3.0).abs() <= 0.03,
        format!("C = {c:.6} MHz, 3-4 splitting = {split:.6} MHz"),
    )
}

fn criterion_2() -> Outcome {
    let setup = common::noiseless();
    let u = pulse_propagator(&setup.table, &PulseSpec::pi(Transition::C, setup.pulses.rf_rabi).unwrap()).unwrap();
    let cases = [
        (Level::L1, Level::L2),
        (Level::L2, Level::L1),
        (Level::L3, Level::L3),
        (Level::L4, Level::L4),
    ];
    let mut worst: f64 = 0.0;
    for (from, to) in cases {
        let out = evolve(&DensityMatrix::basis_state(from), &u).unwrap();
        for l in Level::ALL {
            let want = if l == to { 1.0 } else { 0.0 };
            worst = worst.max((out.population(l) - want).abs());
        }
    }
    outcome(worst < 1e-10, format!("max population error {worst:.2e}"))
}

fn table_one() -> nvsim::FidelityReport {
    let setup = common::calibrated();
    fidelity_table(&setup, &InputState::ALL, &Instrument::from_setup(&setup)).unwrap()
}

fn criterion_3(report: &nvsim::FidelityReport) -> Outcome {
    let target = [0.89, 0.89, 0.88, 1.0];
    let f = report.fidelities();
    let pass = f.iter().zip(target).all(|(a, b)| (a - b).abs() <= 0.05);
    let shown: Vec<String> = f.iter().map(|v| format!("{v:.4}")).collect();
    outcome(pass, format!("fidelities ({}) vs (0.89, 0.89, 0.88, 1.0)", shown.join(", ")))
}

fn criterion_4(report: &nvsim::FidelityReport) -> Outcome {
    let rho = &report.rows[0].reconstructed;
    let m = rho.operator().matrix();
    let mut largest = (0, 0);
    for r in 0..4 {
        for c in 0..4 {
            if m[(r, c)].norm() > m[largest].norm() {
                largest = (r, c);
            }
        }
    }
    let imag = rho.max_imaginary();
    outcome(
        largest == (1, 1) && imag < 0.05,
        format!(
            "largest element rho{}{} = {:.4}, max |imag| = {imag:.2e}",
            largest.0 + 1,
            largest.1 + 1,
            m[largest].re
        ),
    )
}

fn grid(max: f64, points: usize) -> Vec<f64> {
    (0..points).map(|k| max * k as f64 / (points - 1) as f64).collect()
}

fn criterion_5() -> Outcome {
    let base = common::noiseless();
    let e = electron_rabi(&base, &grid(1.0, 201)).unwrap();
    let n = nuclear_rabi(&base, &grid(2.0, 201)).unwrap();
    let rel = |r: &nvsim::experiments::ExperimentResult| {
        (r.value("fitted_frequency").unwrap() - r.value("rabi_frequency").unwrap()).abs()
            / r.value("rabi_frequency").unwrap()
    };
    let (fe, fn_) = (rel(&e), rel(&n));
    let damped = base
        .with_noise(NoiseParams {
            t2_electron: common::calibrated().noise.t2_electron,
            ..NoiseParams::noiseless()
        })
        .unwrap();
    let d = electron_rabi(&damped, &grid(12.0, 601)).unwrap();
    let tau = d.value("fitted_decay_time").unwrap();
    let gen = d.value("generator_decay_time").unwrap();
    let dev = (tau - gen).abs() / gen;
    outcome(
        fe < 1e-3 && fn_ < 1e-3 && dev < 0.1,
        format!(
            "frequency error A {fe:.2e}, C {fn_:.2e}; decay {tau:.3} us vs generator {gen:.3} us ({:.1}%)",
            100.0 * dev
        ),
    )
}

fn criterion_6() -> Outcome {
    let calibrated = common::calibrated();
    let broadened = calibrated
        .with_noise(NoiseParams {
            linewidth_c: calibrated.noise.linewidth_c,
            ensemble_size: calibrated.noise.ensemble_size,
            ..NoiseParams::noiseless()
        })
        .unwrap();
    let taus = common::shipped_config().run.echo_grid();
    let refocus = taus
        .iter()
        .map(|t| echo_amplitude(&broadened, *t, *t).unwrap())
        .fold(f64::INFINITY, f64::min);
    let decayed = taus
        .iter()
        .map(|t| echo_amplitude(&calibrated, *t, *t).unwrap())
        .fold(f64::INFINITY, f64::min);
    let floor = (-0.3f64).exp();
    let span = 2.0 * taus.last().unwrap();
    outcome(
        refocus > 0.999 && decayed > floor,
        format!(
            "refocused min {refocus:.6}; T2n = {} us min {decayed:.4} over {span} us free evolution (floor {floor:.4})",
            calibrated.noise.t2_nuclear
        ),
    )
}

fn criterion_7() -> Outcome {
    let params = common::calibrated().readout;
    let n = 100_000u64;
    let correct = (0..n)
        .filter(|&i| {
            let p = if i % 2 == 0 { 1.0 } else { 0.0 };
            shot_with_probability(p, &params, 2024, i).correct()
        })
        .count();
    let mc = correct as f64 / n as f64;
    let analytic = predicted_fidelity(&params, params.threshold).fidelity;
    outcome(
        (mc - 0.80).abs() <= 0.02 && (mc - analytic).abs() <= 0.01,
        format!("Monte Carlo {mc:.4} over {n} shots, analytic {analytic:.4}"),
    )
}

fn criterion_8() -> Outcome {
    let mut setup = common::calibrated();
    setup.noise.t2_nuclear = 60.0;
    let r = gate_endurance(&setup, 2000).unwrap();
    let n = r.n_star.unwrap_or(f64::INFINITY);
    outcome(
        (r.gate_time - 0.1).abs() < 1e-12 && (300.0..=1200.0).contains(&n),
        format!("gate time {} us, N* = {n:.1}", r.gate_time),
    )
}

fn random_step(rng: &mut impl Rng) -> Step {
    match rng.random_range(0..10) {
        0 => Step::Init { duration: 3.0 },
        1 | 2 => Step::Wait {
            duration: rng.random_range(0.0..3.0),
        },
        _ => {
            let t = Transition::ALL[rng.random_range(0..4)];
            let amount = match rng.random_range(0..4) {
                0 => PulseAmount::Angle(Angle::Pi),
                1 => PulseAmount::Angle(Angle::HalfPi),
                2 => PulseAmount::Angle(Angle::Radians(rng.random_range(0.0..2.0 * PI))),
                _ => PulseAmount::Duration(rng.random_range(0.0..0.3)),
            };
            Step::Pulse(PulseStep {
                channel: t.channel(),
                amount,
                target: Target::Transition(t),
                phase: rng.random_bool(0.5).then(|| rng.random_range(-PI..PI)),
                rabi: rng.random_bool(0.3).then(|| rng.random_range(1.0..20.0)),
            })
        }
    }
}

fn random_program(rng: &mut impl Rng) -> SequenceProgram {
    let mut steps: Vec<Step> = (0..rng.random_range(1..12)).map(|_| random_step(rng)).collect();
    if rng.random_bool(0.5) {
        steps.push(Step::Readout { window: 3.0 });
    }
    SequenceProgram { steps }
}

fn state_ok(rho: &DensityMatrix) -> bool {
    rho.operator().hermiticity_error() < 1e-10
        && (rho.trace().re - 1.0).abs() < 1e-10
        && rho.trace().im.abs() < 1e-10
        && rho.min_eigenvalue() >= -1e-9
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let calibrated = common::calibrated();
    let noiseless = calibrated.noiseless();
    let mut bad_unitary = 0;
    let mut bad_state = 0;
    let mut pulses = 0usize;
    for k in 0..1000 {
        let setup = if k % 2 == 0 { &calibrated } else { &noiseless };
        let program = random_program(&mut rng);
        let checked = validate(&program, &setup.table, setup.pulses.defaults()).unwrap();
        let mut rho = common::random_mixed(&mut rng, 4, 2);
        let mut st = EnsembleState::from_noise(&rho, &setup.noise).unwrap();
        for step in &checked.steps {
            match step {
                CheckedStep::Pulse(p) => {
                    pulses += 1;
                    let u = pulse_propagator(&setup.table, &p.spec).unwrap();
                    if u.unitarity_error() >= 1e-10 {
                        bad_unitary += 1;
                    }
                    st.apply_pulse(&setup.table, &p.spec, &setup.noise).unwrap();
                }
                CheckedStep::Wait { duration } => st.free(*duration, &setup.noise).unwrap(),
                CheckedStep::Init { .. } => {
                    st = EnsembleState::from_noise(&DensityMatrix::basis_state(Level::L3), &setup.noise).unwrap();
                }
                _ => {}
            }
            rho = st.average();
            if !state_ok(&rho) {
                bad_state += 1;
            }
        }
    }

    let instrument = Instrument::noiseless(&noiseless);
    let mut worst_td: f64 = 0.0;
    for _ in 0..100 {
        let rho = common::random_pure(&mut rng, 4);
        let rec = reconstruct(&measure(&rho, &instrument).unwrap()).unwrap();
        worst_td = worst_td.max(rec.state.trace_distance(&rho));
    }

    let mut bad_parse = 0;
    for _ in 0..1000 {
        let p = random_program(&mut rng);
        if parse(&format(&p)).as_ref() != Ok(&p) {
            bad_parse += 1;
        }
    }
    outcome(
        bad_unitary == 0 && bad_state == 0 && worst_td < 1e-8 && bad_parse == 0,
        format!(
            "{pulses} propagators, {bad_unitary} non-unitary, {bad_state} invalid states; \
             tomography max trace distance {worst_td:.2e}; {bad_parse}/1000 parser mismatches"
        ),
    )
}

fn report(n: usize, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = o.pass && in_time;
    let budget = limit.map(|l| format!(" / limit {:.0} s", l.as_secs_f64())).unwrap_or_default();
    println!(
        "{} criterion {n}: {} [{:.2} s{budget}]",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn main() {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= report(1, Some(secs(1)), criterion_1);
    ok &= report(2, Some(secs(1)), criterion_2);
    let mut table = None;
    ok &= report(3, Some(secs(60)), || {
        let t = table_one();
        let o = criterion_3(&t);
        table = Some(t);
        o
    });
    ok &= report(4, None, || criterion_4(table.as_ref().expect("table computed")));
    ok &= report(5, None, criterion_5);
    ok &= report(6, None, criterion_6);
    ok &= report(7, Some(secs(30)), criterion_7);
    ok &= report(8, None, criterion_8);
    ok &= report(9, Some(secs(120)), criterion_9);
    if !ok {
        std::process::exit(1);
    }
}
