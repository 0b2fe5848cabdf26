use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cyclone::codec::{decode_max6675, encode_max6675, shield_dimensions, ThermoReading};
use cyclone::ladder::{parse_ladder, run_trace, scan, InputAssignment, LadderProgram, ScanImage, Value, VarKind};
use cyclone::scenario::{parse_duration_ms, run_scenario, RunOptions, Scenario};
use cyclone::telemetry::{self, Pace, ServiceConfig};

/// Soft-PLC runtime and digital twin for a two-gate catalyst cyclone.
#[derive(Parser)]
#[command(name = "cyclone", version)]
struct Cli {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the controller scan period in milliseconds.
    #[arg(long, global = true)]
    dt_ms: Option<u64>,
    /// Telemetry snapshot rate for logs and live sessions.
    #[arg(long, global = true)]
    snapshot_hz: Option<f64>,
    /// Log debug detail to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headlessly on the simulation clock.
    Run {
        /// Scenario file (TOML)
        #[arg(long)]
        scenario: PathBuf,
        /// e.g. 120s, 500ms, 2m
        #[arg(long, value_parser = parse_duration_ms)]
        duration: Option<u64>,
        /// Write the JSON report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Event log path; defaults to $CYCLONE_LOG_DIR/<scenario>.jsonl when that is set.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Serve a live session over TCP and, optionally, WebSocket.
    Serve(ServeArgs),
    /// Print the frames of an event log.
    Replay {
        /// Event log written by `run` or `serve`
        log: PathBuf,
    },
    /// Check and execute ladder programs.
    #[command(subcommand)]
    Ladder(LadderCommand),
    /// Protective plate dimensions for a level-sensor electrode.
    ShieldCalc {
        /// Electrode length in mm
        #[arg(long)]
        electrode_mm: f64,
    },
    /// Decode or encode a thermocouple converter frame.
    Codec(CodecArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    /// Scenario file (TOML) providing configs, faults and scripted commands
    #[arg(long)]
    scenario: PathBuf,
    /// Browser gateway address.
    #[arg(long)]
    ws_listen: Option<String>,
    /// Simulated seconds per wall second.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Run as fast as possible instead of pacing to the wall clock.
    #[arg(long, conflicts_with = "speed")]
    unpaced: bool,
    /// Hold at t=0 until this many viewers connect.
    #[arg(long, default_value_t = 0)]
    wait_viewers: usize,
    /// Stop after this much simulated time; default runs until Ctrl-C.
    #[arg(long, value_parser = parse_duration_ms)]
    duration: Option<u64>,
    /// Event log path
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LadderCommand {
    /// Parse and validate; prints every diagnostic.
    Check { file: PathBuf },
    /// Scan with constant inputs and print outputs after each scan.
    Run {
        file: PathBuf,
        /// Input value, NAME=true|false|<number>; repeatable.
        #[arg(long = "set", value_name = "NAME=VALUE")]
        sets: Vec<String>,
        #[arg(long, default_value_t = 1)]
        scans: u64,
    },
    /// Run against a JSON input schedule and print one line per scan.
    Trace {
        file: PathBuf,
        /// JSON array of {"at_ms", "name", "value"}.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long, value_parser = parse_duration_ms)]
        duration: u64,
    },
}

#[derive(Args)]
#[group(required = true, multiple = true)]
struct CodecArgs {
    /// 16-bit frame, hex (0x0C80) or decimal.
    #[arg(long, conflicts_with_all = ["encode", "open"])]
    decode: Option<String>,
    /// Temperature in °C.
    #[arg(long, allow_negative_numbers = true)]
    encode: Option<f64>,
    /// Encode with the open-thermocouple flag set; the temperature is ignored.
    #[arg(long)]
    open: bool,
}

/// Exit codes besides success: bad usage or unusable input, and a run that
/// completed but failed its checks (scenario expectations, safety
/// violations, ladder diagnostics).
const USAGE: u8 = 1;
const FAILED: u8 = 2;

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.verbose {
            tracing::Level::DEBUG
        } else {
            tracing::Level::WARN
        })
        .init();

    match &cli.command {
        Command::Run {
            scenario,
            duration,
            out,
            log,
        } => cmd_run(&cli, scenario, *duration, out.as_deref(), log.clone()),
        Command::Serve(args) => cmd_serve(&cli, args),
        Command::Replay { log } => cmd_replay(log),
        Command::Ladder(l) => cmd_ladder(&cli, l),
        Command::ShieldCalc { electrode_mm } => match shield_dimensions(*electrode_mm) {
            Ok(g) => {
                println!("{g}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(USAGE, e),
        },
        Command::Codec(args) => cmd_codec(args),
    }
}

fn default_log(explicit: Option<PathBuf>, scenario: &Scenario, file: &Path) -> Option<PathBuf> {
    explicit.or_else(|| {
        let dir = std::env::var_os("CYCLONE_LOG_DIR")?;
        let stem = if scenario.name.is_empty() {
            file.file_stem()?.to_string_lossy().into_owned()
        } else {
            scenario.name.clone()
        };
        Some(Path::new(&dir).join(format!("{stem}.jsonl")))
    })
}

fn cmd_run(cli: &Cli, file: &Path, duration: Option<u64>, out: Option<&Path>, log: Option<PathBuf>) -> ExitCode {
    let scenario = match Scenario::load(file) {
        Ok(s) => s,
        Err(e) => return fail(USAGE, e),
    };
    let opts = RunOptions {
        seed: cli.seed,
        duration_ms: duration,
        dt_ms: cli.dt_ms,
        snapshot_hz: cli.snapshot_hz,
        log_path: default_log(log, &scenario, file),
    };
    let outcome = match run_scenario(&scenario, &opts) {
        Ok(o) => o,
        Err(e) => return fail(USAGE, e),
    };
    let r = &outcome.report;
    let line = r.to_json_line();
    println!("{line}");
    if let Some(path) = out {
        if let Err(e) = std::fs::write(path, format!("{line}\n")) {
            return fail(USAGE, format!("cannot write {}: {e}", path.display()));
        }
    }
    eprintln!(
        "{} cycles, {} violations, {} alarms, {}",
        r.cycles_completed,
        r.violation_count,
        r.alarms.len(),
        if r.passed { "passed" } else { "FAILED" }
    );
    for c in r.checks.iter().filter(|c| !c.passed) {
        eprintln!("  failed: {}", c.check);
    }
    if r.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(FAILED)
    }
}

fn cmd_serve(cli: &Cli, args: &ServeArgs) -> ExitCode {
    let scenario = match Scenario::load(&args.scenario) {
        Ok(s) => s,
        Err(e) => return fail(USAGE, e),
    };
    let mut controller = scenario.controller;
    if let Some(dt) = cli.dt_ms {
        controller.scan_dt_ms = dt;
    }
    let built = scenario
        .build_twin(cli.seed.unwrap_or(scenario.seed), controller)
        .and_then(|t| Ok((t, scenario.script()?)));
    let (twin, script) = match built {
        Ok(b) => b,
        Err(e) => return fail(USAGE, e),
    };
    let config = ServiceConfig {
        listen: args.listen.clone(),
        ws_listen: args.ws_listen.clone(),
        snapshot_hz: cli.snapshot_hz.unwrap_or(10.0),
        pace: if args.unpaced {
            Pace::Unpaced
        } else {
            Pace::RealTime { speed: args.speed }
        },
        wait_for_viewers: args.wait_viewers,
        duration_ms: args.duration,
        log_path: default_log(args.log.clone(), &scenario, &args.scenario),
        ..ServiceConfig::default()
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => return fail(USAGE, e),
    };
    rt.block_on(async move {
        let service = match telemetry::serve(config, twin, script).await {
            Ok(s) => s,
            Err(e) => return fail(USAGE, e),
        };
        match service.ws_addr() {
            Some(ws) => println!("listening tcp={} ws={ws}", service.local_addr()),
            None => println!("listening tcp={}", service.local_addr()),
        }
        let stop = service.shutdown_handle();
        tokio::spawn(async move {
            if tokio::signal::ctrl_c().await.is_ok() {
                stop.trigger();
            }
        });
        let outcome = service.wait().await;
        let v = outcome.twin.violations();
        println!(
            "session over at t={} ms: {} frames, {} commands, {} cycles, {} violations",
            outcome.twin.time_ms(),
            outcome.frames_sent,
            outcome.commands_handled,
            outcome.twin.controller().counters().cycles_completed,
            v.total()
        );
        if v.total() == 0 {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(FAILED)
        }
    })
}

fn cmd_replay(path: &Path) -> ExitCode {
    match telemetry::replay(path) {
        Ok(r) => {
            let mut n = 0;
            for line in r.frame_lines() {
                println!("{line}");
                n += 1;
            }
            if r.torn_tail {
                eprintln!("warning: dropped torn final line");
            }
            eprintln!("{n} frames, {} messages", r.entries.len());
            ExitCode::SUCCESS
        }
        Err(e) => fail(USAGE, e),
    }
}

fn load_program(file: &Path) -> Result<LadderProgram, ExitCode> {
    let src = std::fs::read_to_string(file).map_err(|e| fail(USAGE, format!("{}: {e}", file.display())))?;
    parse_ladder(&src).map_err(|diags| {
        for d in diags.iter() {
            eprintln!("{}:{d}", file.display());
        }
        eprintln!("{} diagnostics", diags.len());
        ExitCode::from(FAILED)
    })
}

fn parse_set(program: &LadderProgram, s: &str) -> Result<(String, Value), String> {
    let (name, raw) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got {s:?}"))?;
    let value = match program.kind_of(name) {
        Some(VarKind::Bool) => match raw {
            "true" | "1" => Value::Bool(true),
            "false" | "0" => Value::Bool(false),
            _ => return Err(format!("{name} is BOOL, got {raw:?}")),
        },
        Some(VarKind::Real) => Value::Real(raw.parse().map_err(|_| format!("{name} is REAL, got {raw:?}"))?),
        _ => return Err(format!("{name} is not an input of this program")),
    };
    Ok((name.to_owned(), value))
}

fn cmd_ladder(cli: &Cli, cmd: &LadderCommand) -> ExitCode {
    let dt = cli.dt_ms.unwrap_or(50);
    match cmd {
        LadderCommand::Check { file } => match load_program(file) {
            Ok(p) => {
                println!(
                    "0 diagnostics ({} rungs, {} inputs, {} outputs)",
                    p.rungs.len(),
                    p.input_names().len(),
                    p.output_names().len()
                );
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        LadderCommand::Run { file, sets, scans } => {
            let p = match load_program(file) {
                Ok(p) => p,
                Err(code) => return code,
            };
            let mut image = ScanImage::for_program(&p);
            for s in sets {
                match parse_set(&p, s) {
                    Ok((name, v)) if image.set_input(&name, v) => {}
                    Ok((name, _)) => return fail(USAGE, format!("{name} is written by a rung, not an input")),
                    Err(e) => return fail(USAGE, e),
                }
            }
            for k in 0..*scans {
                image = match scan(&p, &image, dt) {
                    Ok(i) => i,
                    Err(e) => return fail(USAGE, e),
                };
                let line = serde_json::json!({ "scan": k, "t_ms": (k + 1) * dt, "outputs": image.outputs });
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        LadderCommand::Trace {
            file,
            schedule,
            duration,
        } => {
            let p = match load_program(file) {
                Ok(p) => p,
                Err(code) => return code,
            };
            let sched: Vec<InputAssignment> = match schedule {
                None => Vec::new(),
                Some(path) => match std::fs::read_to_string(path)
                    .map_err(|e| e.to_string())
                    .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
                {
                    Ok(s) => s,
                    Err(e) => return fail(USAGE, format!("{}: {e}", path.display())),
                },
            };
            match run_trace(&p, &sched, *duration, dt) {
                Ok(trace) => {
                    for tick in &trace.ticks {
                        println!("{}", serde_json::to_string(tick).expect("ticks serialize"));
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(USAGE, e),
            }
        }
    }
}

fn parse_word(s: &str) -> Option<u16> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u16::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

fn cmd_codec(args: &CodecArgs) -> ExitCode {
    if let Some(text) = &args.decode {
        let Some(word) = parse_word(text) else {
            return fail(USAGE, format!("not a 16-bit word: {text}"));
        };
        return match decode_max6675(word) {
            Ok(ThermoReading::Celsius(c)) => {
                println!("{c:.2} C");
                ExitCode::SUCCESS
            }
            Ok(ThermoReading::OpenThermocouple) => {
                println!("FAULT open thermocouple");
                ExitCode::SUCCESS
            }
            Err(e) => fail(USAGE, e),
        };
    }
    let t = args.encode.unwrap_or(0.0);
    match encode_max6675(t, args.open) {
        Ok(frame) => {
            println!("{frame}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(USAGE, e),
    }
}
