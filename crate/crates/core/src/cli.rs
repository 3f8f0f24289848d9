//! `nvsim` command line.
//!
//! Exit status: 0 on success, 1 for bad configuration or input files, 2 for
//! usage errors, 3 when a simulation invariant is violated.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{RunConfig, RunSection};
use crate::error::{Error, Result};
use crate::experiments::{
    electron_rabi, gate_endurance, hahn_echo, nuclear_rabi, run_program, crot_experiment,
    ExperimentResult, InputState,
};
use crate::io::{fidelity_csv, format_density_matrix, trace_csv};
use crate::readout::{calibrate_threshold, predicted_fidelity, shots};
use crate::sequence::{parse, validate};
use crate::spin_model::{Level, Transition};
use crate::state::DensityMatrix;
use crate::tomography::{fidelity_table, Instrument};

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "nvsim", version, about = "NV-center electron/¹³C spin pulse simulator")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `run.out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print the energy levels and transition table.
    Levels,
    /// Execute a `.seq` pulse program and emit the final density matrix.
    Run { file: PathBuf },
    /// Nutation on A (electron) or C (nuclear) with a damped-cosine fit.
    Rabi {
        #[arg(long, value_parser = parse_rabi_transition)]
        transition: Transition,
    },
    /// Nuclear Hahn echo on C with τ₁ = τ₂.
    Echo,
    /// Prepare an input state and apply the CROT gate.
    Crot {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        input: u8,
    },
    /// Prepare → CROT → tomography; reconstructed ρ and fidelity.
    Tomography {
        /// 1–4 or `all`.
        #[arg(long, default_value = "all", value_parser = parse_inputs)]
        input: InputSelection,
    },
    /// Fidelity decay under repeated CROT gates.
    Endurance {
        #[arg(long)]
        gates: Option<usize>,
    },
    /// Optimal readout threshold with analytic and Monte Carlo fidelity.
    ReadoutCalibrate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputSelection(pub Vec<InputState>);

fn parse_inputs(s: &str) -> std::result::Result<InputSelection, String> {
    if s == "all" || s == "1..4" {
        return Ok(InputSelection(InputState::ALL.to_vec()));
    }
    let n: usize = s.parse().map_err(|_| format!("expected 1-4 or `all`, got `{s}`"))?;
    InputState::from_number(n)
        .map(|i| InputSelection(vec![i]))
        .map_err(|e| e.to_string())
}

fn parse_rabi_transition(s: &str) -> std::result::Result<Transition, String> {
    match Transition::parse(s) {
        Some(t @ (Transition::A | Transition::C)) => Ok(t),
        _ => Err(format!("expected A or C, got `{s}`")),
    }
}

fn is_invariant_violation(e: &Error) -> bool {
    matches!(
        e,
        Error::NotHermitian(..)
            | Error::NotUnitary(..)
            | Error::InvalidState(..)
            | Error::AmbiguousLabel { .. }
            | Error::MissingLabel(..)
    )
}

struct Context {
    config: RunConfig,
    out: PathBuf,
    command: String,
    written: Vec<String>,
    format: Format,
}

impl Context {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        std::fs::write(self.out.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.write("config.toml", &self.config.to_toml())?;
        let mut manifest = String::new();
        let _ = writeln!(manifest, "command = {:?}", self.command);
        let _ = writeln!(manifest, "version = {:?}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(manifest, "seed = {}", self.config.run.seed);
        let _ = writeln!(manifest, "config_sha256 = {:?}", self.config.hash());
        let outputs: Vec<String> = self.written.iter().map(|w| format!("{w:?}")).collect();
        let _ = writeln!(manifest, "outputs = [{}]", outputs.join(", "));
        std::fs::create_dir_all(&self.out)?;
        std::fs::write(self.out.join("manifest.toml"), manifest)?;
        Ok(())
    }
}

/// Runs the command line and returns the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return if code == 0 { 0 } else { EXIT_USAGE };
        }
    };
    let mut config = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                let _ = writeln!(stderr, "error: {e}");
                return EXIT_CONFIG;
            }
        },
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.run.seed = s;
    }
    if let Some(o) = &cli.out {
        config.run.out = o.clone();
    }
    let mut ctx = Context {
        out: config.run.out.clone(),
        config,
        command: command_name(&cli.command),
        written: Vec::new(),
        format: cli.format,
    };
    let mut text = String::new();
    let result = execute(&cli.command, &mut ctx, &mut text).and_then(|()| ctx.finish());
    let _ = write!(stdout, "{text}");
    match result {
        Ok(()) => 0,
        Err(e) => {
            if is_invariant_violation(&e) {
                let _ = writeln!(stderr, "invariant violated: {e}");
                EXIT_INVARIANT
            } else {
                let _ = writeln!(stderr, "error: {e}");
                EXIT_CONFIG
            }
        }
    }
}

fn command_name(c: &Command) -> String {
    match c {
        Command::Levels => "levels".into(),
        Command::Run { file } => format!("run {}", file.display()),
        Command::Rabi { transition } => format!("rabi --transition {transition}"),
        Command::Echo => "echo".into(),
        Command::Crot { input } => format!("crot --input {input}"),
        Command::Tomography { input } => {
            let n: Vec<String> = input.0.iter().map(|i| i.number().to_string()).collect();
            format!("tomography --input {}", n.join(","))
        }
        Command::Endurance { gates } => match gates {
            Some(g) => format!("endurance --gates {g}"),
            None => "endurance".into(),
        },
        Command::ReadoutCalibrate => "readout-calibrate".into(),
    }
}

fn execute(command: &Command, ctx: &mut Context, out: &mut String) -> Result<()> {
    let setup = ctx.config.setup()?;
    let seed = ctx.config.run.seed;
    match command {
        Command::Levels => {
            let lv = &setup.levels;
            let _ = writeln!(out, "field_mT {:?}", setup.params.field);
            let _ = writeln!(out, "level  ket    energy_MHz");
            for l in Level::ALL {
                let _ = writeln!(out, "{:<6} {:<6} {:.6}", l.number(), l.ket(), lv.energy(l));
            }
            let _ = writeln!(out, "transition  levels  channel  frequency_MHz");
            let mut csv = String::from("transition,from,to,channel,frequency_mhz\n");
            for e in &setup.table.entries {
                let _ = writeln!(
                    out,
                    "{:<11} {}->{}    {:<8} {:.6}",
                    e.transition.name(),
                    e.from.number(),
                    e.to.number(),
                    e.channel.name(),
                    e.frequency
                );
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{:.9}",
                    e.transition.name(),
                    e.from.number(),
                    e.to.number(),
                    e.channel.name(),
                    e.frequency
                );
            }
            let _ = writeln!(out, "splitting_3_4_MHz {:.6}", lv.nuclear_splitting());
            let _ = writeln!(out, "closure_error_MHz {:.3e}", setup.table.closure_error());
            if ctx.format == Format::Csv {
                out.clear();
                out.push_str(&csv);
            }
            ctx.write("levels.csv", &csv)?;
        }
        Command::Run { file } => {
            let text = std::fs::read_to_string(file)
                .map_err(|e| Error::Config(format!("{}: {e}", file.display())))?;
            let program = parse(&text).map_err(|diags| {
                let lines: Vec<String> = diags
                    .iter()
                    .map(|d| format!("{}:{d}", file.display()))
                    .collect();
                Error::Sequence(lines.join("\n"))
            })?;
            let checked = validate(&program, &setup.table, setup.pulses.defaults())?;
            let outcome = run_program(&setup, &checked, seed)?;
            let rho = format_density_matrix(&outcome.state);
            out.push_str(&rho);
            if let Some(shot) = outcome.readout {
                let _ = writeln!(
                    out,
                    "readout count {} decision {} truth {}",
                    shot.count,
                    shot.decision.label(),
                    shot.truth.label()
                );
            }
            ctx.write("state.rho", &rho)?;
        }
        Command::Rabi { transition } => {
            let run = &ctx.config.run;
            let r = match transition {
                Transition::A => electron_rabi(&setup, &RunSection::grid(run.rabi_electron_max, run.rabi_points))?,
                _ => nuclear_rabi(&setup, &RunSection::grid(run.rabi_nuclear_max, run.rabi_points))?,
            };
            report_values(&r, ctx.format, out);
            ctx.write(&format!("rabi_{transition}.csv"), &trace_csv(&r.trace))?;
        }
        Command::Echo => {
            let grid = ctx.config.run.echo_grid();
            let r = hahn_echo(&setup, &grid, &grid)?;
            let amps = r.trace.column("amplitude").unwrap_or_default();
            let min = amps.iter().copied().fold(f64::INFINITY, f64::min);
            match ctx.format {
                Format::Csv => out.push_str(&trace_csv(&r.trace)),
                Format::Text => {
                    let _ = writeln!(out, "points {}", amps.len());
                    let _ = writeln!(out, "max_free_time_us {}", 2.0 * grid.last().copied().unwrap_or(0.0));
                    let _ = writeln!(out, "min_amplitude {min:.6}");
                }
            }
            ctx.write("echo.csv", &trace_csv(&r.trace))?;
        }
        Command::Crot { input } => {
            let input = InputState::from_number(*input as usize)?;
            let r = crot_experiment(&setup, input)?;
            let state = r.state.as_ref().expect("crot returns a state");
            state.check()?;
            match ctx.format {
                Format::Csv => out.push_str(&trace_csv(&r.trace)),
                Format::Text => {
                    let _ = writeln!(out, "input {} -> level {}", input.number(), input.crot_target().number());
                    let _ = writeln!(out, "gate_time_us {}", r.value("gate_time").unwrap_or(0.0));
                    let _ = writeln!(out, "fidelity");
                    let _ = writeln!(out, "{:.6}", r.value("fidelity").unwrap_or(0.0));
                }
            }
            ctx.write(&format!("crot_input{}.rho", input.number()), &format_density_matrix(state))?;
            ctx.write(&format!("crot_input{}.csv", input.number()), &trace_csv(&r.trace))?;
        }
        Command::Tomography { input } => {
            let mut instrument = Instrument::from_setup(&setup);
            if ctx.config.run.tomography_shots > 0 {
                instrument.shots = Some(ctx.config.run.tomography_shots);
                instrument.seed = seed;
            }
            let report = fidelity_table(&setup, &input.0, &instrument)?;
            let csv = fidelity_csv(&report);
            match ctx.format {
                Format::Csv => out.push_str(&csv),
                Format::Text => {
                    for row in &report.rows {
                        let _ = writeln!(out, "input {}  (real part, max |imag| {:.2e})", row.input.number(), row.reconstructed.max_imaginary());
                        write_real_matrix(out, &row.reconstructed);
                        if row.projection_distance > 0.0 {
                            let _ = writeln!(out, "psd_projection_distance {:.3e}", row.projection_distance);
                        }
                        if row.fidelity.clamped {
                            let _ = writeln!(out, "fidelity clamped from {:.6}", row.fidelity.raw);
                        }
                    }
                    out.push_str(&csv);
                }
            }
            for row in &report.rows {
                row.reconstructed.check()?;
                ctx.write(
                    &format!("tomography_input{}.rho", row.input.number()),
                    &format_density_matrix(&row.reconstructed),
                )?;
            }
            ctx.write("fidelity.csv", &csv)?;
        }
        Command::Endurance { gates } => {
            let n = gates.unwrap_or(ctx.config.run.endurance_gates);
            let e = gate_endurance(&setup, n)?;
            let r = e.to_result();
            match ctx.format {
                Format::Csv => out.push_str(&trace_csv(&r.trace)),
                Format::Text => {
                    let _ = writeln!(out, "gate_time_us {}", e.gate_time);
                    let _ = writeln!(out, "t2_nuclear_us {}", setup.noise.t2_nuclear);
                    match e.n_star {
                        Some(n) => {
                            let _ = writeln!(out, "n_star {n:.1}");
                        }
                        None => {
                            let _ = writeln!(out, "n_star none (no 1/e crossing within {n} gates)");
                        }
                    }
                }
            }
            ctx.write("endurance.csv", &trace_csv(&r.trace))?;
        }
        Command::ReadoutCalibrate => {
            let params = &setup.readout;
            let best = calibrate_threshold(params);
            let tuned = crate::readout::ReadoutParams {
                threshold: best.threshold,
                ..params.clone()
            };
            let n = ctx.config.run.readout_shots;
            let half = n / 2;
            let bright = shots(&DensityMatrix::basis_state(Level::L3), &tuned, half, seed);
            let dark = shots(&DensityMatrix::basis_state(Level::L1), &tuned, n - half, seed ^ 0x5eed);
            let correct = bright.iter().chain(&dark).filter(|s| s.correct()).count();
            let mc = correct as f64 / n as f64;
            let mut csv = String::from("threshold,fidelity,bright_accuracy,dark_accuracy\n");
            let top = (3.0 * params.bright_rate * params.window).ceil() as u64;
            for t in 0..=top {
                let c = predicted_fidelity(params, t);
                let _ = writeln!(csv, "{t},{:.6},{:.6},{:.6}", c.fidelity, c.bright_accuracy, c.dark_accuracy);
            }
            match ctx.format {
                Format::Csv => out.push_str(&csv),
                Format::Text => {
                    let _ = writeln!(out, "threshold {}", best.threshold);
                    let _ = writeln!(out, "predicted_fidelity {:.6}", best.fidelity);
                    let _ = writeln!(out, "monte_carlo_fidelity {mc:.6} ({n} shots, seed {seed})");
                }
            }
            ctx.write("readout_thresholds.csv", &csv)?;
        }
    }
    Ok(())
}

fn report_values(r: &ExperimentResult, format: Format, out: &mut String) {
    match format {
        Format::Csv => out.push_str(&trace_csv(&r.trace)),
        Format::Text => {
            for (k, v) in &r.values {
                let _ = writeln!(out, "{k} {v:.6}");
            }
        }
    }
}

fn write_real_matrix(out: &mut String, rho: &DensityMatrix) {
    for r in 0..rho.dim() {
        let row: Vec<String> = (0..rho.dim()).map(|c| format!("{:8.4}", rho.get(r, c).re)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// Entry point used by the binary.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(args, &mut stdout.lock(), &mut stderr.lock())
}
