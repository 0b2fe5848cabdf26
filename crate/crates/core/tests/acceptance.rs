//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! `cargo test --test acceptance` runs it alongside everything else; it has
//! its own `main` so the report reads top to bottom.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cyclone::codec::{decode_max6675, encode_max6675, shield_dimensions, ThermoFrame, ThermoReading};
use cyclone::controller::{AlarmCode, ControllerConfig, GatePosition, ManualCommand, PhaseKind};
use cyclone::equivalence::{compare, SensorSource};
use cyclone::ladder::{parse_ladder, CYCLONE_LADDER};
use cyclone::plant::PlantConfig;
use cyclone::scenario::{run_scenario, RunOptions, Scenario};
use cyclone::telemetry::server::connect_lines;
use cyclone::telemetry::wire::envelope_for;
use cyclone::telemetry::{replay, serve, CommandEnvelope, Message, Pace, ServiceConfig};
use rand::Rng;
use serde_json::json;

type Verdict = Result<String, String>;

type Criterion<'a> = (&'static str, &'static str, Box<dyn FnOnce() -> Verdict + 'a>);

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("scenarios/{name}.toml"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn timing() -> Verdict {
    let started = Instant::now();
    let cfg = ControllerConfig::default();
    let cycles = 12;
    let tl = common::nominal_timeline(cfg, cycles);
    let elapsed = started.elapsed();

    let dt = cfg.scan_dt_ms as i64;
    let period = (cfg.cycle_ms() / cfg.scan_dt_ms) as usize;
    // expected phase boundaries, in ms from the cycle start
    let want = [
        ("upper open", (cfg.fill_a_ms + cfg.fill_b_ms) as i64),
        ("both closed", cfg.dwell_ms as i64),
        ("lower open", cfg.discharge_ms as i64),
    ];
    let mut worst = 0;
    for c in 0..cycles as usize {
        let slice = &tl[c * period..(c + 1) * period];
        let got = [
            slice.iter().filter(|&&(u, l)| u && !l).count(),
            slice.iter().filter(|&&(u, l)| !u && !l).count(),
            slice.iter().filter(|&&(u, l)| !u && l).count(),
        ];
        check(slice.iter().all(|&(u, l)| !(u && l)), format!("cycle {c}: both open"))?;
        // the both-closed span absorbs the one-scan interlock deferral at the wrap
        let lower_start = slice
            .iter()
            .position(|&(_, l)| l)
            .ok_or(format!("cycle {c}: lower never opens"))?;
        let upper_end = slice
            .iter()
            .rposition(|&(u, _)| u)
            .ok_or(format!("cycle {c}: upper never opens"))?
            + 1;
        for ((name, ms), n) in want.iter().zip(got) {
            let err = (n as i64 * dt - ms).abs();
            worst = worst.max(err);
            check(
                err <= dt,
                format!("cycle {c}: {name} {} ms, want {ms} ± {dt}", n as i64 * dt),
            )?;
        }
        let boundaries = [
            (upper_end as i64 * dt, want[0].1),
            (lower_start as i64 * dt, want[0].1 + want[1].1),
        ];
        for (got, ms) in boundaries {
            worst = worst.max((got - ms).abs());
            check(
                (got - ms).abs() <= dt,
                format!("cycle {c}: boundary at {got} ms, want {ms}"),
            )?;
        }
    }
    let lower_starts: Vec<usize> = common::edges(&tl)
        .into_iter()
        .filter(|&(_, v)| v == (false, true))
        .map(|(k, _)| k)
        .collect();
    check(lower_starts.len() == cycles as usize, "lower-open count")?;
    check(lower_starts.windows(2).all(|w| w[1] - w[0] == period), "period drift")?;
    check(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{cycles} cycles, period {:.1} s, worst boundary error {worst} ms, {:.0} ms wall",
        cfg.cycle_ms() as f64 / 1000.0,
        elapsed.as_secs_f64() * 1000.0
    ))
}

fn safety() -> Verdict {
    let started = Instant::now();
    let stats = common::fuzz_mixed(0x5AFE, 100_000, 5_000);
    let elapsed = started.elapsed();
    check(stats.steps >= 100_000, "too few steps")?;
    check(
        stats.both_open == 0 && stats.dual_solenoid == 0,
        format!("{} both-open, {} dual-solenoid", stats.both_open, stats.dual_solenoid),
    )?;
    check(stats.clean(), format!("{stats:?}"))?;
    check(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} steps, {} commands, {} faults, 0 both-open, 0 dual-solenoid, {:.1} s",
        stats.steps,
        stats.commands,
        stats.faults,
        elapsed.as_secs_f64()
    ))
}

fn equivalence() -> Verdict {
    let program = parse_ladder(CYCLONE_LADDER).map_err(|e| e.to_string())?;
    let cfg = ControllerConfig::default();
    let mut ticks = 0;
    for source in [SensorSource::Ideal, SensorSource::Plant(PlantConfig::default(), 11)] {
        let cmp = compare(&program, cfg, source, 100).map_err(|e| e.to_string())?;
        check(cmp.cycles >= 100, format!("{source:?}: only {} cycles", cmp.cycles))?;
        if let Some(m) = cmp.mismatches.first() {
            return Err(format!("{source:?}: {} mismatches, first {m}", cmp.mismatches.len()));
        }
        ticks += cmp.ticks;
    }
    Ok(format!(
        "ideal and simulated sensors, 100 cycles each, {ticks} scans, 0 mismatches"
    ))
}

fn shield() -> Verdict {
    let g = shield_dimensions(50.0).map_err(|e| e.to_string())?;
    for (name, got, want) in [
        ("S", g.side_mm, 66.67),
        ("P", g.standoff_mm, 37.5),
        ("M", g.margin_mm, 33.33),
    ] {
        check((got - want).abs() <= 0.01, format!("{name}={got}, want {want}"))?;
    }
    let mut rng = common::rng(4);
    let dims = |e: f64| {
        let g = shield_dimensions(e).unwrap();
        [g.side_mm, g.standoff_mm, g.margin_mm]
    };
    for _ in 0..100 {
        let e = rng.random_range(0.1..2_000.0);
        let k = rng.random_range(0.1..10.0);
        let (a, b) = (dims(e), dims(e * k));
        for i in 0..3 {
            check(
                (b[i] - k * a[i]).abs() <= 1e-9 * b[i].max(1.0),
                format!("not linear at E={e}, k={k}"),
            )?;
        }
        // ratios from the E=50 worked values
        let unit = dims(50.0).map(|d| d / 50.0);
        for i in 0..3 {
            check(
                (a[i] - unit[i] * e).abs() <= 1e-9 * a[i].max(1.0),
                format!("ratio off at E={e}"),
            )?;
        }
    }
    Ok(format!("{g}, 100 random E linear"))
}

fn codec() -> Verdict {
    let started = Instant::now();
    // word layout: bit 15 and bits 1..0 reserved, bits 14..3 code, bit 2 open
    for code in 0u16..4096 {
        for open in [false, true] {
            let raw = code << 3 | (open as u16) << 2;
            let frame = ThermoFrame::from_parts(code, open).map_err(|e| e.to_string())?;
            check(
                frame.raw() == raw,
                format!("code {code} open {open}: {:#06x}", frame.raw()),
            )?;
            let back = ThermoFrame::from_raw(raw).map_err(|e| e.to_string())?;
            check(
                back.code() == code && back.open_circuit() == open,
                format!("{raw:#06x} fields"),
            )?;
            let want = if open {
                ThermoReading::OpenThermocouple
            } else {
                ThermoReading::Celsius(code as f64 * 0.25)
            };
            check(decode_max6675(raw) == Ok(want), format!("{raw:#06x} decodes wrong"))?;
            if !open {
                let enc = encode_max6675(code as f64 * 0.25, false).map_err(|e| e.to_string())?;
                check(enc.raw() == raw, format!("encode {} C", code as f64 * 0.25))?;
            }
        }
    }
    let mut rejected = 0;
    for raw in 0..=u16::MAX {
        let reserved = raw & 0x8003 != 0;
        check(decode_max6675(raw).is_err() == reserved, format!("{raw:#06x}"))?;
        rejected += reserved as u32;
    }
    let mut rng = common::rng(5);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let t = rng.random_range(0.0..=1023.75);
        let f = encode_max6675(t, false).map_err(|e| e.to_string())?;
        let ThermoReading::Celsius(c) = f.reading() else {
            return Err(format!("{t} decoded as a fault"));
        };
        check(c <= t && t - c < 0.25, format!("{t} -> {c}"))?;
        worst = worst.max(t - c);
    }
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!(
        "8192 round trips, {rejected} reserved words rejected, quantization error in [0, 0.25) C (largest {:.3e} below the step), {:.0} ms",
        0.25 - worst,
        elapsed.as_secs_f64() * 1000.0
    ))
}

fn interference() -> Verdict {
    let level = [AlarmCode::LevelStuck, AlarmCode::LevelImplausible];
    let bare = run_scenario(&scenario("interference"), &RunOptions::default()).map_err(|e| e.to_string())?;
    let r = &bare.report;
    let level_alarms: Vec<_> = r.alarms.iter().filter(|a| level.contains(&a.code)).collect();
    let erratic = r.early_fill_truncations + r.discharge_extensions;
    check(
        !level_alarms.is_empty() || erratic > 0,
        "interference left automation undisturbed",
    )?;
    check(r.violations.total() == 0, format!("{:?}", r.violations))?;

    let fixed = run_scenario(&scenario("interference_shielded"), &RunOptions::default()).map_err(|e| e.to_string())?;
    let s = &fixed.report;
    check(
        s.cycles_completed >= 10,
        format!("shielded: {} cycles", s.cycles_completed),
    )?;
    check(
        !s.alarms.iter().any(|a| level.contains(&a.code)),
        format!("shielded: level alarms {:?}", s.alarms),
    )?;
    check(
        s.early_fill_truncations + s.discharge_extensions == 0,
        "shielded: automation still erratic",
    )?;
    let first = level_alarms
        .first()
        .map(|a| format!("{} at {} ms", a.code, a.t_ms))
        .unwrap_or("none".into());
    Ok(format!(
        "unshielded: {} level alarms (first {first}), {erratic} erratic fill/discharge, {} cycles, final {}; \
         shielded: {} cycles, 0 level alarms",
        level_alarms.len(),
        r.cycles_completed,
        r.final_state.phase,
        s.cycles_completed
    ))
}

fn fault_response() -> Verdict {
    let sc = scenario("stuck_upper");
    let mut twin = sc.build_twin(sc.seed, sc.controller).map_err(|e| e.to_string())?;
    let cfg = *twin.controller().config();
    let dt = cfg.scan_dt_ms;
    // the scan that would open the lower gate for the first discharge
    let check_at = cfg.fill_a_ms + cfg.fill_b_ms + cfg.dwell_ms;
    let mut script = sc.script().map_err(|e| e.to_string())?.into_iter().peekable();
    let mut hold_at = None;
    while twin.time_ms() < sc.duration_ms {
        while let Some(c) = script.next_if(|c| c.at_ms <= twin.time_ms()) {
            twin.command(c.cmd);
        }
        let rec = twin.step();
        check(
            rec.commands.lower.position != GatePosition::Open,
            format!("lower commanded open at {}", rec.t_ms),
        )?;
        if hold_at.is_none() && twin.controller().phase().kind == PhaseKind::SafeHold {
            hold_at = Some(rec.t_ms);
        }
    }
    let block = twin
        .alarm_log()
        .iter()
        .find(|a| a.code == AlarmCode::InterlockBlock)
        .ok_or("no INTERLOCK_BLOCK in the event log")?;
    let hold = hold_at.ok_or("never reached SAFE_HOLD")?;
    check(
        block.t_ms >= check_at,
        format!("INTERLOCK_BLOCK early, at {} ms", block.t_ms),
    )?;
    check(
        hold.abs_diff(block.t_ms) <= dt,
        format!("SAFE_HOLD at {hold} ms, block at {} ms", block.t_ms),
    )?;
    check(twin.controller().phase().kind == PhaseKind::SafeHold, "left SAFE_HOLD")?;
    check(twin.violations().total() == 0, format!("{:?}", twin.violations()))?;
    Ok(format!(
        "interlock check due at {check_at} ms, INTERLOCK_BLOCK at {} ms, SAFE_HOLD at {hold} ms",
        block.t_ms
    ))
}

/// One random inbound line: mostly real commands, the rest damaged.
fn fuzz_line(rng: &mut impl Rng, n: usize) -> String {
    let id = format!("f{n}");
    match rng.random_range(0..20) {
        0..=9 => Message::Cmd(envelope_for(id, common::random_command(rng))).to_line(),
        10 => Message::Cmd(CommandEnvelope::new(id, "acquire_token")).to_line(),
        11 => Message::Cmd(CommandEnvelope::new(id, "release_token")).to_line(),
        12 => Message::Cmd(CommandEnvelope::new(id, "self_destruct")).to_line(),
        13 => json!({"type": "cmd", "id": id, "name": "set_mode", "arg": rng.random::<u32>()}).to_string(),
        14 => json!({"type": "cmd", "id": id, "name": "open", "arg": "middle"}).to_string(),
        15 => json!({"type": "ack", "id": id}).to_string(),
        16 => json!({"type": "cmd", "id": id}).to_string(),
        17 => {
            let full = Message::Cmd(envelope_for(id, common::random_command(rng))).to_line();
            full[..rng.random_range(0..full.len())].to_string()
        }
        _ => (0..rng.random_range(0..60))
            .map(|_| rng.random_range(0x20u8..0x7f) as char)
            .collect(),
    }
}

async fn telemetry() -> Verdict {
    const ENVELOPES: usize = 10_000;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log = dir.path().join("session.jsonl");
    let mut twin =
        cyclone::twin::Twin::new(ControllerConfig::default(), PlantConfig::default(), 8).map_err(|e| e.to_string())?;
    twin.command(ManualCommand::Start);
    let svc = serve(
        ServiceConfig {
            listen: "127.0.0.1:0".into(),
            pace: Pace::RealTime { speed: 6.0 },
            wait_for_viewers: 2,
            duration_ms: Some(60_000),
            log_path: Some(log.clone()),
            ..Default::default()
        },
        twin,
        Vec::new(),
    )
    .await
    .map_err(|e| e.to_string())?;
    let (_watcher, watch_rx) = connect_lines(svc.local_addr()).await.map_err(|e| e.to_string())?;
    let (mut fuzzer, fuzz_rx) = connect_lines(svc.local_addr()).await.map_err(|e| e.to_string())?;

    let sender = tokio::spawn(async move {
        let mut rng = common::rng(6);
        fuzzer
            .send(&Message::Cmd(CommandEnvelope::new("hold", "acquire_token")))
            .await?;
        for n in 0..ENVELOPES {
            fuzzer.send_raw(&fuzz_line(&mut rng, n)).await?;
            // spread the fuzz over most of the session
            if n % 100 == 99 {
                tokio::time::sleep(Duration::from_millis(60)).await;
            }
        }
        Ok::<_, std::io::Error>(fuzzer)
    });
    let drain = |mut rx: tokio::sync::mpsc::UnboundedReceiver<String>| async move {
        let mut out = Vec::new();
        while let Some(l) = rx.recv().await {
            out.push(l);
        }
        out
    };
    let (watched, fuzzed) = tokio::join!(drain(watch_rx), drain(fuzz_rx));
    let _fuzzer = sender.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;
    let outcome = svc.wait().await;

    let frames = |lines: &[String]| -> Vec<String> {
        lines
            .iter()
            .filter(|l| l.starts_with(r#"{"type":"frame""#))
            .cloned()
            .collect()
    };
    let broadcast = frames(&watched);
    check(
        broadcast.len() == 601,
        format!("{} frames, want 601 for 60 s at 10 Hz", broadcast.len()),
    )?;
    check(frames(&fuzzed) == broadcast, "viewers saw different frames")?;

    let mut last = None;
    for l in &broadcast {
        let Ok(Message::Frame(f)) = serde_json::from_str::<Message>(l) else {
            return Err(format!("unparseable frame {l}"));
        };
        check(
            last.is_none_or(|s| f.seq == s + 1),
            format!("seq {} after {last:?}", f.seq),
        )?;
        check(
            !(f.upper_cmd == GatePosition::Open && f.lower_cmd == GatePosition::Open),
            format!("both gates commanded open at {} ms", f.t_ms),
        )?;
        last = Some(f.seq);
    }

    let r = replay(&log).map_err(|e| e.to_string())?;
    check(!r.torn_tail, "torn log")?;
    let logged: Vec<&str> = r.frame_lines().collect();
    check(
        logged == broadcast.iter().map(String::as_str).collect::<Vec<_>>(),
        "replay differs from broadcast",
    )?;

    let replies = fuzzed.len() - broadcast.len();
    check(
        replies == ENVELOPES + 1,
        format!("{replies} replies to {} envelopes", ENVELOPES + 1),
    )?;
    let accepted = fuzzed.iter().filter(|l| l.starts_with(r#"{"type":"ack""#)).count();
    let v = outcome.twin.violations();
    check(v.commanded_both_open == 0 && v.dual_solenoid == 0, format!("{v:?}"))?;
    check(v.total() == 0, format!("{v:?}"))?;
    Ok(format!(
        "{} frames, seq monotone, replay identical; {ENVELOPES} fuzzed envelopes, {accepted} acked, \
         0 both-open, 0 dual-solenoid, final mode {}",
        broadcast.len(),
        outcome.twin.controller().mode()
    ))
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("runtime");
    let criteria: [Criterion; 8] = [
        ("C1", "timing", Box::new(timing)),
        ("C2", "safety invariant", Box::new(safety)),
        ("C3", "ladder equivalence", Box::new(equivalence)),
        ("C4", "shield calculator", Box::new(shield)),
        ("C5", "thermocouple codec", Box::new(codec)),
        ("C6", "interference fix", Box::new(interference)),
        ("C7", "fault response", Box::new(fault_response)),
        ("C8", "telemetry integrity", Box::new(|| rt.block_on(telemetry()))),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        match run() {
            Ok(detail) => println!("{id} PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("{id} FAIL {name}: {why}");
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
