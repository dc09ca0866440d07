//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use pulselink::device::{classify_bpm, BpmRange, Device, DeviceConfig, Effect, GeoFix, TickInputs, ACK_WINDOW_CLOSED};
use pulselink::harness::{run, Scenario, BUNDLED};
use pulselink::modem::{
    is_terminal, parse_at_line, AtArg, AtCommand, Form, Modem, ModemSession, NetworkParams, Verb, VirtualNetwork,
};
use pulselink::power::endurance_hours;
use pulselink::telemetry::{AggregateQuery, BucketUnit, Statistic, TelemetryService};
use pulselink::vitals::{assess_window, synthesize_ppg, DetectionParams, VitalsProfile};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn bundled(name: &str) -> Result<Scenario, String> {
    Scenario::bundled(name).map_err(|e| e.to_string())
}

fn upload_cadence() -> Outcome {
    let scenario = bundled("nominal-hour")?;
    let started = Instant::now();
    let out = run(&scenario).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let attempts = out
        .effects
        .iter()
        .filter(|e| matches!(e, Effect::HttpUpdate { .. }))
        .count();
    check(attempts == 75, format!("{attempts} attempts, want 75"))?;
    check(out.report.duration_ms == 3_600_000, "run did not cover 3600 s")?;
    check(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!(
        "75 attempts in 3600 s, run took {:.2} s",
        elapsed.as_secs_f64()
    ))
}

/// Seeds 1000..1100 are not the pinned one.
fn delivery_ratio() -> Outcome {
    let pinned = bundled("nominal-hour")?;
    let report = run(&pinned).map_err(|e| e.to_string())?.report;
    check(
        report.uploads_received == 73,
        format!("pinned seed {} stored {}", pinned.seed, report.uploads_received),
    )?;
    check(report.success_ratio == Some(Ratio::new(73, 75)), "ratio is not 73/75")?;

    let seeds: Vec<u64> = (1000..1100).collect();
    let workers = std::thread::available_parallelism().map_or(4, |n| n.get());
    let received: Vec<u64> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .chunks(seeds.len().div_ceil(workers))
            .map(|chunk| {
                let base = pinned.clone();
                s.spawn(move || {
                    chunk
                        .iter()
                        .map(|&seed| {
                            let scenario = Scenario { seed, ..base.clone() };
                            run(&scenario).map(|o| o.report.uploads_received).unwrap_or(0)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker")).collect()
    });
    let mean = received.iter().sum::<u64>() as f64 / received.len() as f64;
    check(
        (72.0..=74.0).contains(&mean),
        format!("mean received {mean} over 100 seeds"),
    )?;
    Ok(format!("pinned seed {} -> 73/75, 100-seed mean {mean:.2}", pinned.seed))
}

fn battery_endurance() -> Outcome {
    let hours = endurance_hours(1800, 200).map_err(|e| e.to_string())?;
    check(hours == Ratio::from_integer(9), format!("endurance {hours}"))?;
    let scenario = Scenario {
        name: "ten-hours".into(),
        duration_ms: 36_000_000,
        ..bundled("nominal-hour")?
    };
    let out = run(&scenario).map_err(|e| e.to_string())?;
    let nine_h = 9 * 3_600_000u64;
    let at = out.report.battery_depleted_at_ms.ok_or("battery never depleted")?;
    check(at.abs_diff(nine_h) <= scenario.tick_ms, format!("depleted at {at} ms"))?;
    let logged = out
        .artifacts
        .effects
        .lines()
        .any(|l| l.contains("\"battery_depleted\"") && l.contains(&format!("\"t_ms\":{at}")));
    check(logged, "depletion missing from effect log")?;
    check(out.report.duration_ms <= nine_h, "device kept running after depletion")?;
    Ok(format!("endurance = {hours} h, depleted at {} ms", at))
}

fn data_consumption() -> Outcome {
    let out = run(&bundled("nominal-hour")?).map_err(|e| e.to_string())?;
    let p = out.projection.ok_or("no projection")?;
    check(
        p.kb_per_hour == Ratio::new(123_675, 1000),
        format!("kb/h {}", p.kb_per_hour),
    )?;
    check(
        p.mb_per_day == Ratio::new(29_682, 10_000),
        format!("mb/day {}", p.mb_per_day),
    )?;
    check(
        p.mb_per_day == p.kb_per_hour * Ratio::new(24, 1000),
        "MB/day != KB/h * 24 / 1000",
    )?;
    let kb = *p.kb_per_hour.numer() as f64 / *p.kb_per_hour.denom() as f64;
    let mb = *p.mb_per_day.numer() as f64 / *p.mb_per_day.denom() as f64;
    let kb_delta = (kb - 123.70).abs() / 123.70;
    let mb_delta = (mb - 2.9688).abs() / 2.9688;
    check(
        kb_delta <= 0.005 && mb_delta <= 0.005,
        format!("deltas {kb_delta} {mb_delta}"),
    )?;
    Ok(format!(
        "{kb} KB/h ({:+.3}%), {mb} MB/day ({:+.3}%), identity exact",
        (kb - 123.70) / 123.70 * 100.0,
        (mb - 2.9688) / 2.9688 * 100.0
    ))
}

fn alerting() -> Outcome {
    let body_re = Regex::new(
        r"^ALERT (Bradycardia|Tachycardia): BPM=\d+ SpO2=\d+% Location: https://maps\.google\.com/\?q=-?\d+\.\d{6},-?\d+\.\d{6}$",
    )
    .expect("regex");
    let scenario = bundled("brady-episode")?;
    let out = run(&scenario).map_err(|e| e.to_string())?;
    let alerts = out.report.alerts.len();
    check(alerts == 1, format!("{alerts} alerts"))?;
    let bodies: Vec<&str> = out
        .effects
        .iter()
        .filter_map(|e| match e {
            Effect::SendSms { body, .. } => Some(body.as_str()),
            _ => None,
        })
        .collect();
    let contacts = scenario.config.contacts.len();
    check(
        bodies.len() == contacts,
        format!("{} sms for {contacts} contacts", bodies.len()),
    )?;
    for body in &bodies {
        check(body_re.is_match(body), format!("body {body:?}"))?;
        check(
            body.contains("q=-2.226900,-80.859000"),
            format!("coordinates in {body:?}"),
        )?;
    }

    let range = BpmRange::default();
    let mut device_checked = 0;
    for bpm in 0..=250u16 {
        let outside = !(60..=100).contains(&bpm);
        check(
            classify_bpm(bpm, range).alert_kind().is_some() == outside,
            format!("classify {bpm}"),
        )?;
        // readings below 20 bpm are not constructible as Good readings
        let Ok(reading) = pulselink::vitals::VitalsReading::good(0, bpm, 97) else {
            continue;
        };
        let mut device = Device::new(DeviceConfig {
            contacts: vec!["+593991234567".into()],
            ..DeviceConfig::default()
        })
        .map_err(|e| e.to_string())?;
        device.tick(
            0,
            TickInputs {
                fix: Some(GeoFix::new(-2.2269, -80.859, 0)),
                ..Default::default()
            },
        );
        let raised = device
            .apply_reading(0, reading)
            .iter()
            .any(|e| matches!(e, Effect::AlertRaised(_)));
        check(raised == outside, format!("device alert at {bpm}: {raised}"))?;
        device_checked += 1;
    }
    Ok(format!(
        "1 alert, {contacts} SMS with maps URL; sweep 0..=250 classified, {device_checked} through the device"
    ))
}

fn config_window() -> Outcome {
    let scenario = bundled("config-session")?;
    let press = *scenario.button_presses.first().ok_or("no button press")?;
    let out = run(&scenario).map_err(|e| e.to_string())?;
    let acks: BTreeMap<u64, &str> = out
        .effects
        .iter()
        .filter_map(|e| match e {
            Effect::SendSms { t_ms, body, .. } => Some((*t_ms, body.as_str())),
            _ => None,
        })
        .collect();
    let changed: Vec<u64> = out
        .effects
        .iter()
        .filter_map(|e| match e {
            Effect::ConfigChanged { t_ms, .. } => Some(*t_ms),
            _ => None,
        })
        .collect();
    let early = acks.get(&(press + 50_000)).copied();
    let late = acks.get(&(press + 90_000)).copied();
    check(early == Some("OK CONTACT ADD"), format!("+50 s ack {early:?}"))?;
    check(late == Some(ACK_WINDOW_CLOSED), format!("+90 s ack {late:?}"))?;
    check(
        changed == vec![press + 50_000],
        format!("config changes at {changed:?}"),
    )?;
    check(
        out.device.config().contacts == vec!["+593991234567".to_string()],
        "contact list",
    )?;
    Ok("accepted at +50 s, rejected at +90 s".into())
}

fn vitals_recovery() -> Outcome {
    let params = DetectionParams::default();
    let mut worst = 0i32;
    for target in [40u16, 60, 75, 100, 140, 180] {
        for seed in 0..50 {
            let samples = synthesize_ppg(&VitalsProfile::with_bpm(f64::from(target)), 30_000, 100, seed)
                .map_err(|e| e.to_string())?;
            let reading = assess_window(&samples, 30_000, &params);
            let bpm = reading.bpm().ok_or(format!("no bpm at {target}, seed {seed}"))?;
            let err = (i32::from(bpm) - i32::from(target)).abs();
            worst = worst.max(err);
            check(err <= 1, format!("target {target} seed {seed} -> {bpm}"))?;
        }
    }
    for (r, want) in [(0.4, 100u8), (0.52, 97), (1.0, 85)] {
        for seed in 0..50 {
            let samples =
                synthesize_ppg(&VitalsProfile::with_ratio(r), 30_000, 100, seed).map_err(|e| e.to_string())?;
            let got = assess_window(&samples, 30_000, &params).spo2_pct();
            check(got == Some(want), format!("R={r} seed {seed} -> {got:?}"))?;
        }
    }
    Ok(format!("6 targets x 50 seeds, worst error {worst} bpm; SpO2 100/97/85"))
}

fn valid_corpus() -> Vec<AtCommand> {
    let arg_sets: Vec<Vec<AtArg>> = vec![
        vec![AtArg::Int(0)],
        vec![AtArg::Int(1)],
        vec![AtArg::Int(-42)],
        vec![AtArg::Int(1), AtArg::Int(1)],
        vec![
            AtArg::Int(3),
            AtArg::Int(1),
            AtArg::Str("Contype".into()),
            AtArg::Str("GPRS".into()),
        ],
        vec![AtArg::Str("+593991234567".into())],
        vec![AtArg::Str(String::new())],
        vec![
            AtArg::Str("URL".into()),
            AtArg::Str("api.thingspeak.com/update?api_key=K&field1=72&field2=98".into()),
        ],
        vec![AtArg::Str("quote \" and \\ slash".into()), AtArg::Int(i64::MAX)],
    ];
    let mut corpus = vec![AtCommand::execute(Verb::At)];
    for verb in Verb::ALL.into_iter().skip(1) {
        corpus.push(AtCommand::execute(verb));
        corpus.push(AtCommand::read(verb));
        corpus.push(AtCommand::new(verb, Form::Test, Vec::new()));
        for args in &arg_sets {
            corpus.push(AtCommand::write(verb, args.clone()));
        }
    }
    corpus
}

fn protocol_robustness() -> Outcome {
    const LINES: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    let mut modem = Modem::new(ModemSession::new("+593980000001"));
    let mut net = VirtualNetwork::new(NetworkParams::default(), 1);
    let started = Instant::now();
    let mut completed = 0usize;
    for i in 0..LINES {
        let len = rng.random_range(0..64);
        let mut line: Vec<u8> = (0..len).map(|_| rng.random::<u8>()).filter(|&b| b != b'\r').collect();
        // keep a tenth of the lines close to valid so the parser goes deep
        if i % 10 == 0 {
            let mut prefixed = b"AT+".to_vec();
            prefixed.extend(line);
            line = prefixed;
        }
        let was_prompt = modem.session().in_prompt();
        line.push(b'\r');
        let out = modem.feed(&line, &mut net, i as u64);
        if was_prompt || modem.session().in_prompt() {
            continue;
        }
        let body = &line[..line.len() - 1];
        let skipped_lf = body.iter().take_while(|&&b| b == b'\n').count();
        let blank = body[skipped_lf..].iter().all(u8::is_ascii_whitespace);
        let terminals = out.iter().filter(|l| is_terminal(l)).count();
        let want = usize::from(!blank);
        check(
            terminals == want,
            format!(
                "line {i}: {terminals} terminals for {:?}",
                String::from_utf8_lossy(body)
            ),
        )?;
        completed += want;
    }
    let fuzz_time = started.elapsed();
    check(fuzz_time < Duration::from_secs(30), format!("fuzz took {fuzz_time:?}"))?;

    let corpus = valid_corpus();
    for cmd in &corpus {
        let canonical = cmd.to_string();
        let parsed = parse_at_line(format!("{canonical}\r").as_bytes()).map_err(|e| e.to_string())?;
        check(
            &parsed == cmd && parsed.to_string() == canonical,
            format!("round trip {canonical}"),
        )?;
        // the command word is case-insensitive; strings are not touched
        let lowered = match canonical.split_once('=') {
            Some((head, tail)) => format!("{}={tail}", head.to_ascii_lowercase()),
            None => canonical.to_ascii_lowercase(),
        };
        let relaxed = parse_at_line(format!("{lowered}\r").as_bytes()).map_err(|e| e.to_string())?;
        check(relaxed.to_string() == canonical, format!("canonical form of {lowered}"))?;
    }
    Ok(format!(
        "{LINES} fuzz lines in {:.2} s, {completed} completed commands each got one terminal; {} corpus commands round-trip",
        fuzz_time.as_secs_f64(),
        corpus.len()
    ))
}

fn aggregation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA66);
    let svc = TelemetryService::new();
    let mut total_entries = 0usize;
    for c in 0..1000u32 {
        let key = format!("K{c:015}");
        let id = svc.create_channel(&key).map_err(|e| e.to_string())?;
        let n = rng.random_range(0..=10_000usize);
        let mut t = 0u64;
        let mut stored: Vec<(u64, i64)> = Vec::with_capacity(n);
        for _ in 0..n {
            t += rng.random_range(15_000..400_000);
            let v: i64 = rng.random_range(0..300);
            let params = vec![
                ("api_key".to_string(), key.clone()),
                ("field1".to_string(), v.to_string()),
            ];
            check(svc.handle_update(&params, t) != 0, "update rejected")?;
            stored.push((t, v));
        }
        total_entries += n;
        let unit = [BucketUnit::Minutes, BucketUnit::Hours, BucketUnit::Days][rng.random_range(0..3)];
        let stat = [Statistic::Average, Statistic::Min, Statistic::Max, Statistic::Last][rng.random_range(0..4)];
        let count = rng.random_range(1..=6u32);
        let query = AggregateQuery::new(unit, count, stat, 1);
        let got = svc.aggregate(id, &query).map_err(|e| e.to_string())?;

        let span = query.span_ms();
        let end = stored.last().map_or(span, |(t, _)| t.div_ceil(span).max(1) * span);
        let mut buckets: BTreeMap<u64, Vec<i64>> = BTreeMap::new();
        for &(t, v) in &stored {
            let idx = if t == end { t / span - 1 } else { t / span };
            buckets.entry(idx).or_default().push(v);
        }
        let want: Vec<(u64, f64)> = buckets
            .into_iter()
            .map(|(idx, vs)| {
                let v = match stat {
                    Statistic::Average => vs.iter().sum::<i64>() as f64 / vs.len() as f64,
                    Statistic::Min => *vs.iter().min().expect("non-empty") as f64,
                    Statistic::Max => *vs.iter().max().expect("non-empty") as f64,
                    Statistic::Last => *vs.last().expect("non-empty") as f64,
                };
                (idx * span, v)
            })
            .collect();
        check(
            got == want,
            format!("channel {c}: {} buckets vs {}", got.len(), want.len()),
        )?;
    }
    Ok(format!("1000 channels, {total_entries} entries, exact match"))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (name, _) in BUNDLED {
        let scenario = bundled(name)?;
        let mut dirs = Vec::new();
        for round in 0..2 {
            let root = tmp.path().join(format!("round{round}"));
            let (_, dir) = pulselink::harness::run_to_dir(&scenario, &root).map_err(|e| e.to_string())?;
            dirs.push(dir);
        }
        for (file, _) in run(&scenario).map_err(|e| e.to_string())?.artifacts.files() {
            let a = std::fs::read(dirs[0].join(file)).map_err(|e| e.to_string())?;
            let b = std::fs::read(dirs[1].join(file)).map_err(|e| e.to_string())?;
            check(a == b, format!("{name}/{file} differs"))?;
        }
    }
    Ok(format!("{} scenarios x 7 artifacts byte-identical", BUNDLED.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("upload cadence", upload_cadence),
        ("delivery ratio", delivery_ratio),
        ("battery endurance", battery_endurance),
        ("data consumption", data_consumption),
        ("alerting", alerting),
        ("configuration window", config_window),
        ("vitals recovery", vitals_recovery),
        ("protocol robustness", protocol_robustness),
        ("aggregation oracle", aggregation_oracle),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(criterion).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
