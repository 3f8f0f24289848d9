mod common;

use nvsim::sequence::{
    format, parse, validate, Angle, CheckedStep, PulseAmount, PulseStep, RabiDefaults, Severity,
    Step, Target,
};
use nvsim::{Channel, SequenceProgram, Transition};
use proptest::prelude::*;

fn duration() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 0.0f64..50.0, (0u32..10_000).prop_map(|k| k as f64 * 0.001)]
}

fn transition() -> impl Strategy<Value = Transition> {
    prop::sample::select(Transition::ALL.to_vec())
}

fn pulse() -> impl Strategy<Value = PulseStep> {
    let amount = prop_oneof![
        Just(PulseAmount::Angle(Angle::Pi)),
        Just(PulseAmount::Angle(Angle::HalfPi)),
        (0.001f64..10.0).prop_map(|r| PulseAmount::Angle(Angle::Radians(r))),
        duration().prop_map(PulseAmount::Duration),
    ];
    let target = prop_oneof![
        transition().prop_map(Target::Transition),
        (1u64..5_000_000_000).prop_map(|k| Target::Frequency(k as f64 / 1e6)),
    ];
    (
        prop::bool::ANY,
        amount,
        target,
        prop::option::of(-7.0f64..7.0),
        prop::option::of(0.01f64..50.0),
    )
        .prop_map(|(mw, amount, target, phase, rabi)| PulseStep {
            channel: if mw { Channel::Mw } else { Channel::Rf },
            amount,
            target,
            phase,
            rabi,
        })
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        duration().prop_map(|duration| Step::Init { duration }),
        duration().prop_map(|duration| Step::Wait { duration }),
        (1u32..100).prop_map(|max_attempts| Step::RepeatInit { max_attempts }),
        pulse().prop_map(Step::Pulse),
    ]
}

fn program() -> impl Strategy<Value = SequenceProgram> {
    (prop::collection::vec(step(), 0..12), prop::option::of(duration())).prop_map(|(mut steps, r)| {
        if let Some(window) = r {
            steps.push(Step::Readout { window });
        }
        SequenceProgram { steps }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn format_then_parse_is_identity(p in program()) {
        let text = format(&p);
        let back = parse(&text).map_err(|d| TestCaseError::fail(format!("{d:?}\n{text}")))?;
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(format(&back), text);
    }

    #[test]
    fn parser_is_total_and_deterministic(text in "[ -~\n\t]{0,120}") {
        let a = parse(&text);
        let b = parse(&text);
        prop_assert_eq!(&a, &b);
        if let Err(diags) = a {
            prop_assert!(!diags.is_empty());
            let lines = text.split('\n').count().max(1);
            for d in diags {
                prop_assert!(d.line >= 1 && d.line <= lines, "{d}");
                prop_assert!(d.column >= 1);
            }
        }
    }

    #[test]
    fn mutated_programs_never_crash(p in program(), cut in 0usize..400, junk in "[a-z@:/0-9. ]{0,8}") {
        let mut text = format(&p);
        let cut = text.char_indices().map(|(i, _)| i).nth(cut).unwrap_or(text.len());
        text.insert_str(cut, &junk);
        let _ = parse(&text);
    }
}

const CROT_RUN: &str = "init 3us\nmw pi @A\nrf pi @C\nmw pi @A\nreadout 3us";

#[test]
fn crot_run_program() {
    let p = parse(CROT_RUN).unwrap();
    assert_eq!(p.steps.len(), 5);
    assert!(matches!(p.steps[0], Step::Init { duration } if duration == 3.0));
    assert!(matches!(p.steps[4], Step::Readout { window } if window == 3.0));
    let Step::Pulse(rf) = p.steps[2] else { panic!("expected pulse") };
    assert_eq!(rf.channel, Channel::Rf);
    assert_eq!(rf.target, Target::Transition(Transition::C));
    assert_eq!(parse(&format(&p)).unwrap(), p);
}

#[test]
fn crlf_and_comments_are_accepted() {
    let text = "# header\r\ninit 3us   # laser\r\n\r\nmw pi @A\r\n";
    let p = parse(text).unwrap();
    assert_eq!(p.steps.len(), 2);
}

#[test]
fn empty_source() {
    assert_eq!(parse("").unwrap(), SequenceProgram::default());
    assert_eq!(format(&SequenceProgram::default()), "");
}

#[test]
fn unknown_transition_is_positioned() {
    let diags = parse("mw pi @Z").unwrap_err();
    assert_eq!(diags[0].line, 1);
    assert_eq!(diags[0].severity, Severity::Error);
    assert!(diags[0].message.contains('Z'), "{}", diags[0]);
    let diags = parse("init 3us\nwait 1us\nrf pi/2 @Q\n").unwrap_err();
    assert_eq!(diags[0].line, 3);
}

#[test]
fn readout_must_be_final() {
    assert!(parse("readout 3us\nmw pi @A").is_err());
    assert!(parse("readout 3us\nreadout 3us").is_err());
}

#[test]
fn frequency_is_rendered_with_six_decimals() {
    let p = parse("rf pi @freq:127").unwrap();
    assert_eq!(format(&p), "rf pi @freq:127\n");
    let p = parse("rf pi @freq:127.4448812345").unwrap();
    assert_eq!(format(&p), "rf pi @freq:127.444881\n");
}

#[test]
fn validation_binds_and_rejects() {
    let setup = common::noiseless();
    let defaults = RabiDefaults { mw: 10.0, rf: 5.0 };
    let checked = validate(&parse(CROT_RUN).unwrap(), &setup.table, defaults).unwrap();
    let CheckedStep::Pulse(a) = checked.steps[1] else { panic!("expected pulse") };
    assert_eq!(a.transition, Transition::A);
    assert_eq!(a.frequency, setup.table.frequency(Transition::A));
    assert!((a.spec.duration - 0.05).abs() < 1e-12);

    let f = setup.table.frequency(Transition::C);
    let p = parse(&format!("rf pi @freq:{f:.6}")).unwrap();
    let CheckedStep::Pulse(c) = validate(&p, &setup.table, defaults).unwrap().steps[0] else {
        panic!("expected pulse")
    };
    assert_eq!(c.transition, Transition::C);

    for bad in ["rf pi @A", "mw pi @C", "mw pi @A rabi 0", "mw pi @freq:1000"] {
        let p = parse(bad).unwrap();
        assert!(validate(&p, &setup.table, defaults).is_err(), "{bad}");
    }
}
