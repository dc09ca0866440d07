use proptest::prelude::*;
use regex::Regex;

use pulselink::device::{
    build_update_request, classify_bpm, BpmClass, BpmRange, Device, DeviceConfig, Effect, GeoFix, Mode, TickInputs,
};
use pulselink::modem::SmsMessage;
use pulselink::telemetry::{parse_query, TelemetryService};
use pulselink::vitals::VitalsReading;

const URL_PATTERN: &str = r"^https://maps\.google\.com/\?q=-?\d+\.\d{6},-?\d+\.\d{6}$";

fn device(contacts: &[&str]) -> Device {
    Device::new(DeviceConfig {
        contacts: contacts.iter().map(|c| c.to_string()).collect(),
        ..DeviceConfig::default()
    })
    .unwrap()
}

fn alerts(effects: &[Effect]) -> usize {
    effects.iter().filter(|e| matches!(e, Effect::AlertRaised(_))).count()
}

fn sms_count(effects: &[Effect]) -> usize {
    effects.iter().filter(|e| matches!(e, Effect::SendSms { .. })).count()
}

#[test]
fn classification_oracle_sweep() {
    let range = BpmRange::default();
    for bpm in 0..=250u16 {
        let expected = if bpm < 60 {
            BpmClass::Bradycardia
        } else if bpm > 100 {
            BpmClass::Tachycardia
        } else {
            BpmClass::Normal
        };
        assert_eq!(classify_bpm(bpm, range), expected, "bpm {bpm}");
    }
}

#[test]
fn no_alert_while_normal_and_urls_are_well_formed() {
    let url = Regex::new(URL_PATTERN).unwrap();
    for bpm in 20..=250u16 {
        let mut d = device(&["+593991234567", "+593987654321"]);
        d.tick(
            0,
            TickInputs {
                fix: Some(GeoFix::new(-2.2269, -80.859, 0)),
                ..Default::default()
            },
        );
        let effects = d.apply_reading(1_000, VitalsReading::good(1_000, bpm, 97).unwrap());
        let outside = !(60..=100).contains(&bpm);
        assert_eq!(alerts(&effects), usize::from(outside), "bpm {bpm}");
        assert_eq!(sms_count(&effects), if outside { 2 } else { 0 });
        for e in &effects {
            if let Effect::AlertRaised(a) = e {
                assert!(url.is_match(a.url.as_deref().unwrap()));
            }
        }
    }
}

#[test]
fn latch_holds_until_normal_reading() {
    let mut d = device(&["+593991234567"]);
    let mut batches = Vec::new();
    for (i, bpm) in [45, 44, 50, 55, 75, 48, 49, 120, 130, 90].into_iter().enumerate() {
        let t = i as u64 * 1000;
        let effects = d.apply_reading(t, VitalsReading::good(t, bpm, 97).unwrap());
        batches.push(sms_count(&effects));
    }
    assert_eq!(batches, vec![1, 0, 0, 0, 0, 1, 0, 1, 0, 0]);
}

#[test]
fn unstable_readings_neither_alert_nor_rearm() {
    let mut d = device(&["+593991234567"]);
    assert_eq!(alerts(&d.apply_reading(0, VitalsReading::good(0, 45, 97).unwrap())), 1);
    assert_eq!(alerts(&d.apply_reading(1_000, VitalsReading::unstable(1_000))), 0);
    assert_eq!(alerts(&d.apply_reading(2_000, VitalsReading::no_contact(2_000))), 0);
    assert_eq!(
        alerts(&d.apply_reading(3_000, VitalsReading::good(3_000, 45, 97).unwrap())),
        0
    );
}

#[test]
fn invalid_fix_still_alerts_without_url() {
    let mut d = device(&["+593991234567"]);
    let effects = d.apply_reading(0, VitalsReading::good(0, 120, 98).unwrap());
    let body = effects
        .iter()
        .find_map(|e| match e {
            Effect::SendSms { body, .. } => Some(body.clone()),
            _ => None,
        })
        .unwrap();
    assert!(body.ends_with("Location: unavailable"), "{body}");
    assert!(!body.contains("http"));
}

#[test]
fn inbound_sms_during_window_are_handled_in_order() {
    let mut d = device(&[]);
    d.tick(
        0,
        TickInputs {
            button_presses: 1,
            ..Default::default()
        },
    );
    let msgs: Vec<SmsMessage> = ["+593991111111", "+593992222222", "+593993333333"]
        .iter()
        .map(|n| SmsMessage {
            from: "+593990000000".into(),
            to: DeviceConfig::default().own_number,
            body: format!("CFG CONTACT ADD {n}"),
            t_ms: 10_000,
        })
        .collect();
    d.tick(
        10_000,
        TickInputs {
            inbound_sms: msgs,
            ..Default::default()
        },
    );
    assert_eq!(
        d.config().contacts,
        vec!["+593991111111", "+593992222222", "+593993333333"]
    );
}

#[test]
fn config_window_boundary_is_inclusive() {
    let mut d = device(&[]);
    d.tick(
        0,
        TickInputs {
            button_presses: 1,
            ..Default::default()
        },
    );
    let add = |n: &str, t| SmsMessage {
        from: "+593990000000".into(),
        to: DeviceConfig::default().own_number,
        body: format!("CFG CONTACT ADD {n}"),
        t_ms: t,
    };
    d.tick(
        80_000,
        TickInputs {
            inbound_sms: vec![add("+593991111111", 80_000)],
            ..Default::default()
        },
    );
    assert_eq!(d.config().contacts.len(), 1);
    d.tick(
        80_001,
        TickInputs {
            inbound_sms: vec![add("+593992222222", 80_001)],
            ..Default::default()
        },
    );
    assert_eq!(d.config().contacts.len(), 1);
    assert_eq!(d.state().mode, Mode::Monitoring);
}

proptest! {
    #[test]
    fn config_is_immutable_outside_the_window(bodies in proptest::collection::vec(
        prop_oneof![
            "CFG CONTACT ADD \\+5939[0-9]{8}",
            "CFG CONTACT DEL \\+5939[0-9]{8}",
            "CFG APIKEY [A-Z0-9]{16}",
            ".{0,40}",
        ],
        0..20,
    )) {
        let mut d = device(&["+593991234567"]);
        let before = d.config().clone();
        for (i, body) in bodies.into_iter().enumerate() {
            let t = i as u64 * 1_000;
            let msg = SmsMessage { from: "+593990000000".into(), to: before.own_number.clone(), body, t_ms: t };
            d.tick(t, TickInputs { inbound_sms: vec![msg], ..Default::default() });
        }
        prop_assert_eq!(d.config(), &before);
    }

    #[test]
    fn update_request_round_trips_through_telemetry(bpm in 20u16..=250, spo2 in 70u8..=100) {
        let reading = VitalsReading::good(0, bpm, spo2).unwrap();
        let key = DeviceConfig::default().api_key;
        let req = build_update_request(&reading, &key).unwrap();
        let (_, query) = req.url().split_once('?').map(|(p, q)| (p.to_string(), q.to_string())).unwrap();
        let params = parse_query(&query);
        let svc = TelemetryService::new();
        let id = svc.create_channel(&key).unwrap();
        prop_assert_eq!(svc.handle_update(&params, 0), 1);
        let entry = &svc.channel(id).unwrap().entries[0];
        prop_assert_eq!(entry.field(1), Some(f64::from(bpm)));
        prop_assert_eq!(entry.field(2), Some(f64::from(spo2)));
    }

    #[test]
    fn upload_count_is_floor_of_duration_over_interval(interval_s in 1u64..120, duration_s in 0u64..2_000) {
        let mut d = Device::new(DeviceConfig { upload_interval_s: interval_s, ..DeviceConfig::default() }).unwrap();
        d.apply_reading(0, VitalsReading::good(0, 72, 98).unwrap());
        let mut uploads = 0;
        for s in 0..=duration_s {
            uploads += d.tick(s * 1000, TickInputs::default())
                .iter()
                .filter(|e| matches!(e, Effect::HttpUpdate { .. }))
                .count() as u64;
        }
        prop_assert_eq!(uploads, duration_s / interval_s);
    }
}
