//! Line-oriented pulse-program language (`.seq` files).
//!
//! ```text
//! # CROT run on input state 1
//! init 3us
//! mw pi @A
//! rf pi @C phase 0 rabi 5
//! mw pi @A
//! readout 3us
//! ```
//!
//! Statements, one per line:
//!
//! * `init <dur>`: optical initialization into level 3
//! * `mw|rf <amount> @<A|B|C|D|freq:<MHz>> [phase <rad>] [rabi <MHz>]` where
//!   `<amount>` is `pi`, `pi/2`, a rotation angle in radians, or a duration `<x>us`
//! * `wait <dur>`
//! * `readout <dur>`: optical readout window, must be the last step
//! * `repeat_init <n>`: re-initialize until level 3 is heralded, at most `n` attempts
//!
//! Durations are in µs with an optional `us` suffix. `#` starts a comment.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::pulse::{resolve, PulseSpec, PulseTarget};
use crate::spin_model::{Channel, Transition, TransitionTable};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    Pi,
    HalfPi,
    Radians(f64),
}

impl Angle {
    pub fn radians(self) -> f64 {
        match self {
            Angle::Pi => PI,
            Angle::HalfPi => PI / 2.0,
            Angle::Radians(r) => r,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PulseAmount {
    Angle(Angle),
    /// µs.
    Duration(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Transition(Transition),
    /// MHz.
    Frequency(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseStep {
    pub channel: Channel,
    pub amount: PulseAmount,
    pub target: Target,
    pub phase: Option<f64>,
    pub rabi: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step {
    Init { duration: f64 },
    Pulse(PulseStep),
    Wait { duration: f64 },
    Readout { window: f64 },
    RepeatInit { max_attempts: u32 },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SequenceProgram {
    pub steps: Vec<Step>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// Positioned parser message; `line` and `column` are 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub severity: Severity,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {}: {}", self.line, self.column, sev, self.message)
    }
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    let mut column = 0;
    for (byte, ch) in line.char_indices() {
        column += 1;
        if ch == '#' {
            if let Some((b, c)) = start.take() {
                tokens.push(Token {
                    text: &line[b..byte],
                    column: c,
                });
            }
            return tokens;
        }
        if ch.is_whitespace() {
            if let Some((b, c)) = start.take() {
                tokens.push(Token {
                    text: &line[b..byte],
                    column: c,
                });
            }
        } else if start.is_none() {
            start = Some((byte, column));
        }
    }
    if let Some((b, c)) = start {
        tokens.push(Token {
            text: &line[b..],
            column: c,
        });
    }
    tokens
}

struct LineParser<'a> {
    line: usize,
    diags: &'a mut Vec<ParseDiagnostic>,
}

impl LineParser<'_> {
    fn error(&mut self, column: usize, message: impl Into<String>) {
        self.diags.push(ParseDiagnostic {
            line: self.line,
            column,
            message: message.into(),
            severity: Severity::Error,
        });
    }

    fn number(&mut self, tok: &Token<'_>, what: &str) -> Option<f64> {
        match tok.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.error(tok.column, format!("malformed {what} `{}`", tok.text));
                None
            }
        }
    }

    fn duration(&mut self, tok: Option<&Token<'_>>, end_column: usize, what: &str) -> Option<f64> {
        let Some(tok) = tok else {
            self.error(end_column, format!("missing {what}"));
            return None;
        };
        let body = tok.text.strip_suffix("us").unwrap_or(tok.text);
        let v = match body.parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                self.error(tok.column, format!("malformed {what} `{}`", tok.text));
                return None;
            }
        };
        if v < 0.0 {
            self.error(tok.column, format!("{what} must be non-negative, got {v}"));
            return None;
        }
        Some(v)
    }

    fn expect_end(&mut self, tokens: &[Token<'_>], from: usize) -> bool {
        if let Some(extra) = tokens.get(from) {
            self.error(extra.column, format!("unexpected token `{}`", extra.text));
            false
        } else {
            true
        }
    }

    fn pulse(&mut self, channel: Channel, tokens: &[Token<'_>], end_column: usize) -> Option<Step> {
        let Some(amount_tok) = tokens.get(1) else {
            self.error(end_column, "missing pulse angle or duration");
            return None;
        };
        let amount = match amount_tok.text {
            "pi" => PulseAmount::Angle(Angle::Pi),
            "pi/2" => PulseAmount::Angle(Angle::HalfPi),
            t if t.ends_with("us") => {
                PulseAmount::Duration(self.duration(Some(amount_tok), end_column, "pulse duration")?)
            }
            _ => PulseAmount::Angle(Angle::Radians(self.number(amount_tok, "pulse angle")?)),
        };
        let Some(target_tok) = tokens.get(2) else {
            self.error(end_column, "missing pulse target `@<transition>`");
            return None;
        };
        let Some(name) = target_tok.text.strip_prefix('@') else {
            self.error(
                target_tok.column,
                format!("expected `@<transition>`, found `{}`", target_tok.text),
            );
            return None;
        };
        let target = if let Some(f) = name.strip_prefix("freq:") {
            let tok = Token {
                text: f,
                column: target_tok.column + 6,
            };
            let v = self.number(&tok, "frequency")?;
            if v <= 0.0 {
                self.error(tok.column, "frequency must be positive");
                return None;
            }
            Target::Frequency(v)
        } else if let Some(t) = Transition::parse(name) {
            Target::Transition(t)
        } else {
            self.error(
                target_tok.column + 1,
                format!("unknown transition `{name}` (expected A, B, C, D or freq:<MHz>)"),
            );
            return None;
        };
        let mut phase = None;
        let mut rabi = None;
        let mut k = 3;
        while k < tokens.len() {
            let key = &tokens[k];
            let slot = match key.text {
                "phase" => &mut phase,
                "rabi" => &mut rabi,
                other => {
                    self.error(key.column, format!("unknown pulse option `{other}`"));
                    return None;
                }
            };
            if slot.is_some() {
                self.error(key.column, format!("duplicate option `{}`", key.text));
                return None;
            }
            let Some(val) = tokens.get(k + 1) else {
                self.error(end_column, format!("missing value for `{}`", key.text));
                return None;
            };
            let v = self.number(val, key.text)?;
            if key.text == "rabi" && v < 0.0 {
                self.error(val.column, "rabi frequency must be non-negative");
                return None;
            }
            *slot = Some(v);
            k += 2;
        }
        Some(Step::Pulse(PulseStep {
            channel,
            amount,
            target,
            phase,
            rabi,
        }))
    }

    fn statement(&mut self, tokens: &[Token<'_>], end_column: usize) -> Option<Step> {
        let head = &tokens[0];
        match head.text {
            "init" => {
                let d = self.duration(tokens.get(1), end_column, "init duration")?;
                self.expect_end(tokens, 2).then_some(Step::Init { duration: d })
            }
            "wait" => {
                let d = self.duration(tokens.get(1), end_column, "wait duration")?;
                self.expect_end(tokens, 2).then_some(Step::Wait { duration: d })
            }
            "readout" => {
                let d = self.duration(tokens.get(1), end_column, "readout window")?;
                self.expect_end(tokens, 2).then_some(Step::Readout { window: d })
            }
            "repeat_init" => {
                let Some(tok) = tokens.get(1) else {
                    self.error(end_column, "missing attempt count");
                    return None;
                };
                match tok.text.parse::<u32>() {
                    Ok(n) if n >= 1 => self
                        .expect_end(tokens, 2)
                        .then_some(Step::RepeatInit { max_attempts: n }),
                    _ => {
                        self.error(
                            tok.column,
                            format!("attempt count must be a positive integer, got `{}`", tok.text),
                        );
                        None
                    }
                }
            }
            "mw" => self.pulse(Channel::Mw, tokens, end_column),
            "rf" => self.pulse(Channel::Rf, tokens, end_column),
            other => {
                self.error(head.column, format!("unknown statement `{other}`"));
                None
            }
        }
    }
}

/// Parses a program. Either every line parses and the structure is valid, or at
/// least one positioned diagnostic is returned.
pub fn parse(text: &str) -> std::result::Result<SequenceProgram, Vec<ParseDiagnostic>> {
    let mut diags = Vec::new();
    let mut steps = Vec::new();
    let mut lines = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let tokens = tokenize(line);
        if tokens.is_empty() {
            continue;
        }
        let end_column = line.chars().count() + 1;
        let mut p = LineParser {
            line: idx + 1,
            diags: &mut diags,
        };
        if let Some(step) = p.statement(&tokens, end_column) {
            steps.push(step);
            lines.push(idx + 1);
        }
    }
    let readouts: Vec<usize> = steps
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Step::Readout { .. }))
        .map(|(i, _)| i)
        .collect();
    if readouts.len() > 1 {
        diags.push(ParseDiagnostic {
            line: lines[readouts[1]],
            column: 1,
            message: "at most one readout is allowed".into(),
            severity: Severity::Error,
        });
    } else if let Some(&r) = readouts.first() {
        if r + 1 != steps.len() {
            diags.push(ParseDiagnostic {
                line: lines[r],
                column: 1,
                message: "readout must be the final step".into(),
                severity: Severity::Error,
            });
        }
    }
    if diags.is_empty() {
        Ok(SequenceProgram { steps })
    } else {
        diags.sort_by_key(|d| (d.line, d.column));
        Err(diags)
    }
}

/// Frequency with at most six decimals, trailing zeros trimmed.
fn format_frequency(f: f64) -> String {
    let s = format!("{f:.6}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

/// Canonical LF-terminated text.
pub fn format(program: &SequenceProgram) -> String {
    let mut out = String::new();
    for step in &program.steps {
        match step {
            Step::Init { duration } => out.push_str(&format!("init {duration}us")),
            Step::Wait { duration } => out.push_str(&format!("wait {duration}us")),
            Step::Readout { window } => out.push_str(&format!("readout {window}us")),
            Step::RepeatInit { max_attempts } => out.push_str(&format!("repeat_init {max_attempts}")),
            Step::Pulse(p) => {
                out.push_str(p.channel.name());
                out.push(' ');
                match p.amount {
                    PulseAmount::Angle(Angle::Pi) => out.push_str("pi"),
                    PulseAmount::Angle(Angle::HalfPi) => out.push_str("pi/2"),
                    PulseAmount::Angle(Angle::Radians(r)) => out.push_str(&format!("{r}")),
                    PulseAmount::Duration(d) => out.push_str(&format!("{d}us")),
                }
                match p.target {
                    Target::Transition(t) => out.push_str(&format!(" @{t}")),
                    Target::Frequency(f) => out.push_str(&format!(" @freq:{}", format_frequency(f))),
                }
                if let Some(ph) = p.phase {
                    out.push_str(&format!(" phase {ph}"));
                }
                if let Some(r) = p.rabi {
                    out.push_str(&format!(" rabi {r}"));
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Default Rabi frequencies (MHz) for pulses without a `rabi` option.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RabiDefaults {
    pub mw: f64,
    pub rf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundPulse {
    pub spec: PulseSpec,
    pub transition: Transition,
    /// Carrier frequency, MHz.
    pub frequency: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CheckedStep {
    Init { duration: f64 },
    Pulse(BoundPulse),
    Wait { duration: f64 },
    Readout { window: f64 },
    RepeatInit { max_attempts: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckedProgram {
    pub steps: Vec<CheckedStep>,
}

/// Binds symbolic targets to concrete frequencies and resolves angle-form pulses
/// to durations.
pub fn validate(
    program: &SequenceProgram,
    table: &TransitionTable,
    defaults: RabiDefaults,
) -> Result<CheckedProgram> {
    let n = program.steps.len();
    let mut steps = Vec::with_capacity(n);
    for (i, step) in program.steps.iter().enumerate() {
        let checked = match *step {
            Step::Init { duration } => CheckedStep::Init { duration },
            Step::Wait { duration } => CheckedStep::Wait { duration },
            Step::RepeatInit { max_attempts } => CheckedStep::RepeatInit { max_attempts },
            Step::Readout { window } => {
                if i + 1 != n {
                    return Err(Error::Sequence(format!(
                        "readout at step {} is not final",
                        i + 1
                    )));
                }
                CheckedStep::Readout { window }
            }
            Step::Pulse(p) => CheckedStep::Pulse(bind_pulse(&p, table, defaults, i + 1)?),
        };
        if let CheckedStep::Init { duration }
        | CheckedStep::Wait { duration }
        | CheckedStep::Readout { window: duration } = checked
        {
            if duration.is_nan() || duration < 0.0 {
                return Err(Error::NegativeDuration(duration));
            }
        }
        steps.push(checked);
    }
    Ok(CheckedProgram { steps })
}

fn bind_pulse(
    p: &PulseStep,
    table: &TransitionTable,
    defaults: RabiDefaults,
    index: usize,
) -> Result<BoundPulse> {
    let rabi = p.rabi.unwrap_or(match p.channel {
        Channel::Mw => defaults.mw,
        Channel::Rf => defaults.rf,
    });
    let duration = match p.amount {
        PulseAmount::Duration(d) => d,
        PulseAmount::Angle(a) => {
            if rabi <= 0.0 {
                return Err(Error::UnrealizablePulse(format!(
                    "step {index}: angle {} rad needs a positive Rabi frequency, got {rabi}",
                    a.radians()
                )));
            }
            a.radians() / (2.0 * PI * rabi)
        }
    };
    if duration.is_nan() || duration < 0.0 {
        return Err(Error::NegativeDuration(duration));
    }
    let spec = PulseSpec {
        channel: p.channel,
        target: match p.target {
            Target::Transition(t) => PulseTarget::Transition(t),
            Target::Frequency(f) => PulseTarget::Frequency(f),
        },
        rabi_frequency: rabi,
        duration,
        phase: p.phase.unwrap_or(0.0),
        detuning: 0.0,
    };
    let (transition, detuning) = resolve(table, &spec)?;
    Ok(BoundPulse {
        spec,
        transition,
        frequency: table.frequency(transition) + detuning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_model::{
        build_hamiltonian, calibrate_field, eigenlevels, transition_table, MsBranch,
        SpinSystemParams,
    };

    const CROT_RUN: &str = "init 3us\nmw pi @A\nrf pi @C\nmw pi @A\nreadout 3us";

    fn table() -> TransitionTable {
        let p = calibrate_field(&SpinSystemParams::nv_c13(), 3.0, MsBranch::Minus).unwrap();
        transition_table(&eigenlevels(&build_hamiltonian(&p).unwrap(), MsBranch::Minus).unwrap())
            .unwrap()
    }

    const DEFAULTS: RabiDefaults = RabiDefaults { mw: 10.0, rf: 5.0 };

    #[test]
    fn parses_crot_run() {
        let p = parse(CROT_RUN).unwrap();
        assert_eq!(p.steps.len(), 5);
        assert_eq!(p.steps[0], Step::Init { duration: 3.0 });
        assert!(matches!(
            p.steps[2],
            Step::Pulse(PulseStep {
                channel: Channel::Rf,
                amount: PulseAmount::Angle(Angle::Pi),
                target: Target::Transition(Transition::C),
                ..
            })
        ));
        assert_eq!(p.steps[4], Step::Readout { window: 3.0 });
    }

    #[test]
    fn empty_source() {
        assert_eq!(parse("").unwrap(), SequenceProgram::default());
        assert_eq!(format(&SequenceProgram::default()), "");
    }

    #[test]
    fn unknown_transition_is_positioned() {
        let d = parse("mw pi @Z").unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, 1);
        assert_eq!(d[0].column, 8);
        assert!(d[0].message.contains("`Z`"));
    }

    #[test]
    fn crlf_and_comments() {
        let p = parse("# header\r\ninit 3 # trailing\r\n\r\nwait 1.5us\r\n").unwrap();
        assert_eq!(
            p.steps,
            vec![Step::Init { duration: 3.0 }, Step::Wait { duration: 1.5 }]
        );
    }

    #[test]
    fn readout_must_be_final() {
        let d = parse("readout 3us\nwait 1").unwrap_err();
        assert_eq!(d[0].line, 1);
        let d = parse("readout 3us\nreadout 3us").unwrap_err();
        assert_eq!(d[0].line, 2);
    }

    #[test]
    fn malformed_numbers() {
        for src in ["init abc", "wait -1", "mw pi @A rabi x", "repeat_init 0", "mw pi @freq:nan"] {
            let d = parse(src).unwrap_err();
            assert!(!d.is_empty(), "{src}");
        }
    }

    #[test]
    fn explicit_frequency_formatting() {
        let p = parse("rf pi @freq:127").unwrap();
        assert_eq!(format(&p), "rf pi @freq:127\n");
        let p = parse("rf pi @freq:127.4123456789").unwrap();
        assert_eq!(format(&p), "rf pi @freq:127.412346\n");
    }

    #[test]
    fn crot_run_round_trip() {
        let p = parse(CROT_RUN).unwrap();
        let text = format(&p);
        assert_eq!(text, "init 3us\nmw pi @A\nrf pi @C\nmw pi @A\nreadout 3us\n");
        assert_eq!(parse(&text).unwrap(), p);
    }

    #[test]
    fn validate_binds_frequency() {
        let t = table();
        let c = validate(&parse("mw pi @A").unwrap(), &t, DEFAULTS).unwrap();
        let CheckedStep::Pulse(b) = c.steps[0] else {
            panic!()
        };
        assert_eq!(b.transition, Transition::A);
        assert_eq!(b.frequency, t.frequency(Transition::A));
        assert!((b.spec.duration - 0.05).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_channel_mismatch() {
        let err = validate(&parse("rf pi @A").unwrap(), &table(), DEFAULTS).unwrap_err();
        assert!(matches!(err, Error::ChannelMismatch { .. }));
    }

    #[test]
    fn validate_rejects_zero_rabi_angle() {
        let err = validate(&parse("mw pi @A rabi 0").unwrap(), &table(), DEFAULTS).unwrap_err();
        assert!(matches!(err, Error::UnrealizablePulse(_)));
    }

    #[test]
    fn validate_rejects_negative_angle() {
        let err = validate(&parse("mw -1 @A").unwrap(), &table(), DEFAULTS).unwrap_err();
        assert!(matches!(err, Error::NegativeDuration(_)));
    }
}
