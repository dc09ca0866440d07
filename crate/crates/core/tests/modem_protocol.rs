use std::sync::Arc;

use proptest::prelude::*;

use pulselink::modem::{
    is_terminal, Delivery, HttpEndpoint, HttpMethod, HttpReply, MessageClass, Modem, ModemSession, NetworkParams,
    SmsMessage, VirtualNetwork,
};
use pulselink::telemetry::{FeedQuery, TelemetryService};

const DEVICE: &str = "+593980000001";
const KEY: &str = "ABCD1234EFGH5678";

/// Counts every request that reaches the far side.
#[derive(Default)]
struct Counter(std::sync::atomic::AtomicUsize);

impl HttpEndpoint for Counter {
    fn handle(&self, _: HttpMethod, _: &str, _: u64) -> HttpReply {
        self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        HttpReply::new(200, "1")
    }
}

fn network(sms: f64, http: f64, seed: u64) -> VirtualNetwork {
    VirtualNetwork::new(
        NetworkParams {
            sms_loss_prob: sms,
            http_loss_prob: http,
            ..Default::default()
        },
        seed,
    )
}

fn feed_lines(modem: &mut Modem, net: &mut VirtualNetwork, lines: &[&str]) -> Vec<String> {
    let mut out = Vec::new();
    for line in lines {
        // the prompt takes raw text, command mode wants CR framing
        let mut bytes = line.as_bytes().to_vec();
        if !modem.session().in_prompt() {
            bytes.push(b'\r');
        }
        out.extend(modem.feed(&bytes, net, 0));
    }
    out
}

#[test]
fn lossless_update_reaches_telemetry() {
    let svc = Arc::new(TelemetryService::new());
    let id = svc.create_channel(KEY).unwrap();
    let mut net = network(0.0, 0.0, 1).with_endpoint(svc.clone());
    let mut modem = Modem::new(ModemSession::new(DEVICE));
    let out = feed_lines(
        &mut modem,
        &mut net,
        &[
            "AT+SAPBR=1,1",
            "AT+HTTPINIT",
            &format!("AT+HTTPPARA=\"URL\",\"api.thingspeak.com/update?api_key={KEY}&field1=72&field2=98\""),
            "AT+HTTPACTION=0",
            "AT+HTTPREAD",
            "AT+HTTPTERM",
        ],
    );
    assert!(out.contains(&"+HTTPACTION: 0,200,1".to_string()), "{out:?}");
    assert!(out.contains(&"1".to_string()));
    assert_eq!(svc.get_feed(id, FeedQuery::All).unwrap().len(), 1);
}

#[test]
fn lost_update_stores_nothing() {
    let svc = Arc::new(TelemetryService::new());
    let id = svc.create_channel(KEY).unwrap();
    let mut net = network(0.0, 1.0, 1).with_endpoint(svc.clone());
    let mut modem = Modem::new(ModemSession::new(DEVICE));
    let out = feed_lines(
        &mut modem,
        &mut net,
        &[
            "AT+SAPBR=1,1",
            "AT+HTTPINIT",
            &format!("AT+HTTPPARA=\"URL\",\"api.thingspeak.com/update?api_key={KEY}&field1=72\""),
            "AT+HTTPACTION=0",
        ],
    );
    assert!(out.contains(&"+HTTPACTION: 0,0,0".to_string()));
    assert!(svc.get_feed(id, FeedQuery::All).unwrap().is_empty());
    assert_eq!(net.count(MessageClass::Http, Some(Delivery::Dropped)), 1);
}

#[test]
fn transcripts_are_deterministic() {
    let script = |seed| {
        let mut net = network(0.5, 0.5, seed);
        let mut modem = Modem::new(ModemSession::new(DEVICE));
        for i in 0..20 {
            feed_lines(
                &mut modem,
                &mut net,
                &["AT+CMGF=1", "AT+CMGS=\"+593991234567\"", &format!("msg {i}\u{1a}")],
            );
        }
        modem.transcript().to_string()
    };
    assert_eq!(script(4), script(4));
    assert_ne!(script(4), script(5));
}

#[test]
fn inbound_messages_arrive_in_injection_order() {
    let mut net = network(0.0, 0.0, 1);
    let mut modem = Modem::new(ModemSession::new(DEVICE));
    for i in 1..=3 {
        let urcs = modem.receive_sms(
            &mut net,
            SmsMessage {
                from: "+593990000000".into(),
                to: DEVICE.into(),
                body: format!("CFG CONTACT ADD +59399000000{i}"),
                t_ms: i,
            },
        );
        assert_eq!(urcs, vec![format!("+CMTI: \"SM\",{i}")]);
    }
    let bodies: Vec<String> = (1..=3).map(|i| modem.read_stored(i).unwrap().0.body).collect();
    assert_eq!(bodies[0], "CFG CONTACT ADD +593990000001");
    assert_eq!(bodies[2], "CFG CONTACT ADD +593990000003");
}

/// Commands drawn from the full verb set, legal or not in any state.
fn arb_command() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("AT".to_string()),
        Just("AT+CMGF=1".to_string()),
        Just("AT+CMGF=0".to_string()),
        Just("AT+CREG?".to_string()),
        Just("AT+CGNSPWR=1".to_string()),
        Just("AT+CGNSINF".to_string()),
        Just("AT+SAPBR=1,1".to_string()),
        Just("AT+SAPBR=0,1".to_string()),
        Just("AT+HTTPINIT".to_string()),
        Just("AT+HTTPPARA=\"URL\",\"host/update?api_key=K&field1=1\"".to_string()),
        Just("AT+HTTPACTION=0".to_string()),
        Just("AT+HTTPACTION=1".to_string()),
        Just("AT+HTTPREAD".to_string()),
        Just("AT+HTTPTERM".to_string()),
        Just("AT+CMGS=\"+593991234567\"".to_string()),
        Just("body\u{1a}".to_string()),
        Just("draft\u{1b}".to_string()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    // Every request that reaches the endpoint was preceded by HTTPINIT and
    // HTTPPARA since the last HTTPTERM.
    #[test]
    fn no_http_action_without_init_and_params(cmds in proptest::collection::vec(arb_command(), 0..60)) {
        let counter = Arc::new(Counter::default());
        let mut net = network(0.0, 0.0, 1).with_endpoint(counter.clone());
        let mut modem = Modem::new(ModemSession::new(DEVICE));
        let (mut inited, mut params, mut legal) = (false, false, 0usize);
        for cmd in &cmds {
            let before = counter.0.load(std::sync::atomic::Ordering::SeqCst);
            let out = feed_lines(&mut modem, &mut net, &[cmd]);
            let reached = counter.0.load(std::sync::atomic::Ordering::SeqCst) > before;
            if reached {
                prop_assert!(inited && params, "{cmds:?}");
                legal += 1;
            }
            let ok = out.first().is_some_and(|l| l == "OK");
            match cmd.as_str() {
                "AT+HTTPINIT" if ok => { inited = true; params = false; }
                c if c.starts_with("AT+HTTPPARA=\"URL\"") && ok => params = true,
                "AT+HTTPTERM" if ok => { inited = false; params = false; }
                _ => {}
            }
        }
        prop_assert_eq!(net.count(MessageClass::Http, None), legal);
    }

    #[test]
    fn messages_are_conserved(seed in any::<u64>(), p_sms in 0.0f64..=1.0, p_http in 0.0f64..=1.0, n in 0usize..40) {
        let mut net = network(p_sms, p_http, seed);
        for i in 0..n {
            net.send_sms(SmsMessage { from: DEVICE.into(), to: "+593991234567".into(), body: i.to_string(), t_ms: 0 });
            net.http_bridge(DEVICE, HttpMethod::Get, "/update", 0);
        }
        for class in [MessageClass::Sms, MessageClass::Http] {
            let delivered = net.count(class, Some(Delivery::Delivered));
            let dropped = net.count(class, Some(Delivery::Dropped));
            prop_assert_eq!(delivered + dropped, n);
        }
        prop_assert_eq!(net.inbox("+593991234567").len(), net.count(MessageClass::Sms, Some(Delivery::Delivered)));
    }

    #[test]
    fn every_completed_command_gets_one_terminal(cmds in proptest::collection::vec(arb_command(), 0..60)) {
        let mut net = network(0.3, 0.3, 2);
        let mut modem = Modem::new(ModemSession::new(DEVICE));
        for cmd in &cmds {
            let in_prompt = modem.session().in_prompt();
            let out = feed_lines(&mut modem, &mut net, &[cmd]);
            let terminals = out.iter().filter(|l| is_terminal(l)).count();
            let expected = if in_prompt {
                cmd.ends_with(['\u{1a}', '\u{1b}'])
            } else {
                out.last().is_none_or(|l| l != "> ")
            };
            prop_assert_eq!(terminals, usize::from(expected), "{:?} -> {:?}", cmd, out);
        }
    }
}
