use serde::{Deserialize, Serialize};

use super::at::{AtArg, AtCommand, Form, Verb};
use super::network::{Delivery, HttpMethod, HttpReply, VirtualNetwork};
use super::SmsMessage;
use crate::clock;
use crate::device::SMS_MAX_CHARS;

pub const OK: &str = "OK";
pub const ERROR: &str = "ERROR";
pub const PROMPT: &str = "> ";
pub const SMS_TERMINATOR: u8 = 0x1A;
pub const SMS_CANCEL: u8 = 0x1B;

const BEARER_IP: &str = "10.64.0.2";

/// HTTP service state. An action runs to completion inside `execute`, so
/// there is no observable in-flight state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HttpState {
    Idle,
    Initialized,
    ParamsSet { url: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredSms {
    pub msg: SmsMessage,
    pub read: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadStatus {
    Unread,
    AlreadyRead,
}

/// Modem-side state for one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModemSession {
    pub own_number: String,
    pub text_mode: bool,
    pub registered: bool,
    pub gnss_on: bool,
    pub bearer_open: bool,
    pub http: HttpState,
    pub pending_sms_to: Option<String>,
    next_sms_ref: u32,
    last_http: Option<(HttpMethod, HttpReply)>,
    storage: Vec<StoredSms>,
}

/// Reply to one command: solicited lines (ending in a terminal result or
/// the SMS prompt) and any unsolicited result codes it triggered.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Response {
    pub lines: Vec<String>,
    pub unsolicited: Vec<String>,
}

impl Response {
    fn lines<I: IntoIterator<Item = S>, S: Into<String>>(lines: I) -> Self {
        Self {
            lines: lines.into_iter().map(Into::into).collect(),
            unsolicited: Vec::new(),
        }
    }

    fn ok() -> Self {
        Self::lines([OK])
    }

    fn error() -> Self {
        Self::lines([ERROR])
    }

    fn info(line: String) -> Self {
        Self::lines([line, OK.to_string()])
    }
}

/// Whether a response line ends a command.
pub fn is_terminal(line: &str) -> bool {
    line == OK || line == ERROR || line.starts_with("+CMS ERROR:") || line.starts_with("+CME ERROR:")
}

impl ModemSession {
    /// A powered modem; network registration is immediate.
    pub fn new(own_number: impl Into<String>) -> Self {
        Self {
            own_number: own_number.into(),
            text_mode: false,
            registered: true,
            gnss_on: false,
            bearer_open: false,
            http: HttpState::Idle,
            pending_sms_to: None,
            next_sms_ref: 1,
            last_http: None,
            storage: Vec::new(),
        }
    }

    pub fn unregistered(own_number: impl Into<String>) -> Self {
        Self {
            registered: false,
            ..Self::new(own_number)
        }
    }

    pub fn in_prompt(&self) -> bool {
        self.pending_sms_to.is_some()
    }

    pub fn cancel_prompt(&mut self) -> Response {
        self.pending_sms_to = None;
        Response::ok()
    }

    /// Reads a stored inbound SMS (1-based index) and marks it read.
    pub fn read_stored(&mut self, index: usize) -> Option<(SmsMessage, ReadStatus)> {
        let slot = self.storage.get_mut(index.checked_sub(1)?)?;
        let status = if slot.read {
            ReadStatus::AlreadyRead
        } else {
            ReadStatus::Unread
        };
        slot.read = true;
        Some((slot.msg.clone(), status))
    }

    pub fn stored(&self) -> &[StoredSms] {
        &self.storage
    }
}

/// Runs one command against the session.
pub fn execute(cmd: &AtCommand, session: &mut ModemSession, network: &mut VirtualNetwork, now_ms: u64) -> Response {
    if session.in_prompt() {
        return Response::error();
    }
    if cmd.form == Form::Test {
        return Response::ok();
    }
    let args = cmd.args.as_slice();
    match (cmd.verb, cmd.form) {
        (Verb::At, Form::Execute) => Response::ok(),

        (Verb::Cmgf, Form::Write) => match int_args(args).as_deref() {
            Some([mode @ (0 | 1)]) => {
                session.text_mode = *mode == 1;
                Response::ok()
            }
            _ => Response::error(),
        },
        (Verb::Cmgf, Form::Read) => Response::info(format!("+CMGF: {}", u8::from(session.text_mode))),

        (Verb::Cmgs, Form::Write) => match args {
            [AtArg::Str(number)] if session.registered && session.text_mode && !number.is_empty() => {
                session.pending_sms_to = Some(number.clone());
                Response::lines([PROMPT])
            }
            _ => Response::error(),
        },

        (Verb::Creg, Form::Read) => Response::info(format!("+CREG: 0,{}", if session.registered { 1 } else { 0 })),

        (Verb::Cgnspwr, Form::Write) => match int_args(args).as_deref() {
            Some([on @ (0 | 1)]) => {
                session.gnss_on = *on == 1;
                Response::ok()
            }
            _ => Response::error(),
        },
        (Verb::Cgnspwr, Form::Read) => Response::info(format!("+CGNSPWR: {}", u8::from(session.gnss_on))),

        (Verb::Cgnsinf, Form::Execute) => Response::info(gnss_info(session, network, now_ms)),

        (Verb::Sapbr, Form::Write) => sapbr(args, session),

        (Verb::HttpInit, Form::Execute) => {
            if session.http != HttpState::Idle {
                return Response::error();
            }
            session.http = HttpState::Initialized;
            Response::ok()
        }
        (Verb::HttpPara, Form::Write) => {
            if session.http == HttpState::Idle {
                return Response::error();
            }
            match args {
                [AtArg::Str(key), AtArg::Str(url)] if key.eq_ignore_ascii_case("URL") => {
                    session.http = HttpState::ParamsSet { url: url.clone() };
                    Response::ok()
                }
                [AtArg::Str(key), AtArg::Int(_)] if key.eq_ignore_ascii_case("CID") => Response::ok(),
                [AtArg::Str(key), AtArg::Str(_)]
                    if ["CID", "UA", "CONTENT"].iter().any(|k| key.eq_ignore_ascii_case(k)) =>
                {
                    Response::ok()
                }
                _ => Response::error(),
            }
        }
        (Verb::HttpAction, Form::Write) => {
            let HttpState::ParamsSet { url } = &session.http else {
                return Response::error();
            };
            let method = match int_args(args).as_deref() {
                Some([code]) => HttpMethod::from_action(*code),
                _ => None,
            };
            let Some(method) = method else {
                return Response::error();
            };
            if !session.bearer_open {
                return Response::error();
            }
            let url = url.clone();
            let reply = network.http_bridge(&session.own_number, method, &url, now_ms);
            let urc = format!(
                "+HTTPACTION: {},{},{}",
                action_code(method),
                reply.status,
                reply.body.len()
            );
            session.last_http = Some((method, reply));
            Response {
                lines: vec![OK.to_string()],
                unsolicited: vec![urc],
            }
        }
        (Verb::HttpRead, Form::Execute | Form::Write) => {
            if session.http == HttpState::Idle {
                return Response::error();
            }
            let Some((_, reply)) = &session.last_http else {
                return Response::error();
            };
            let body = reply.body.as_str();
            let slice = match (cmd.form, int_args(args).as_deref()) {
                (Form::Execute, _) => body,
                (Form::Write, Some([start, len])) if *start >= 0 && *len >= 0 => {
                    let start = (*start as usize).min(body.len());
                    let end = start.saturating_add(*len as usize).min(body.len());
                    body.get(start..end).unwrap_or("")
                }
                _ => return Response::error(),
            };
            Response::lines([format!("+HTTPREAD: {}", slice.len()), slice.to_string(), OK.to_string()])
        }
        (Verb::HttpTerm, Form::Execute) => {
            if session.http == HttpState::Idle {
                return Response::error();
            }
            session.http = HttpState::Idle;
            session.last_http = None;
            Response::ok()
        }
        _ => Response::error(),
    }
}

fn int_args(args: &[AtArg]) -> Option<Vec<i64>> {
    args.iter().map(AtArg::as_int).collect()
}

fn action_code(method: HttpMethod) -> u8 {
    match method {
        HttpMethod::Get => 0,
        HttpMethod::Post => 1,
        HttpMethod::Head => 2,
    }
}

fn sapbr(args: &[AtArg], session: &mut ModemSession) -> Response {
    match args {
        [AtArg::Int(3), AtArg::Int(1), AtArg::Str(_), AtArg::Str(_)] => Response::ok(),
        [AtArg::Int(1), AtArg::Int(1)] if session.registered && !session.bearer_open => {
            session.bearer_open = true;
            Response::ok()
        }
        [AtArg::Int(0), AtArg::Int(1)] if session.bearer_open => {
            session.bearer_open = false;
            Response::ok()
        }
        [AtArg::Int(2), AtArg::Int(1)] => Response::info(if session.bearer_open {
            format!("+SAPBR: 1,1,\"{BEARER_IP}\"")
        } else {
            "+SAPBR: 1,3,\"0.0.0.0\"".to_string()
        }),
        _ => Response::error(),
    }
}

/// `+CGNSINF: <run>,<fix>,<utc>,<lat>,<lon>` (the first five fields of the
/// full report).
fn gnss_info(session: &ModemSession, network: &VirtualNetwork, now_ms: u64) -> String {
    if !session.gnss_on {
        return "+CGNSINF: 0,0,,,".to_string();
    }
    let utc = clock::utc(now_ms).format("%Y%m%d%H%M%S%.3f");
    let fix = network.fix_at(now_ms);
    if fix.valid {
        format!("+CGNSINF: 1,1,{utc},{:.6},{:.6}", fix.lat, fix.lon)
    } else {
        format!("+CGNSINF: 1,0,{utc},,")
    }
}

/// Completes the prompt phase of `AT+CMGS`. `body` must end with the 0x1A
/// terminator.
pub fn submit_sms_body(session: &mut ModemSession, network: &mut VirtualNetwork, body: &[u8], now_ms: u64) -> Response {
    let Some(to) = session.pending_sms_to.take() else {
        return Response::error();
    };
    let Some((&SMS_TERMINATOR, text)) = body.split_last() else {
        return Response::lines(["+CMS ERROR: 304"]);
    };
    let text = String::from_utf8_lossy(text).into_owned();
    if text.chars().count() > SMS_MAX_CHARS {
        return Response::lines(["+CMS ERROR: 305"]);
    }
    let msg = SmsMessage {
        from: session.own_number.clone(),
        to,
        body: text,
        t_ms: now_ms,
    };
    match network.send_sms(msg) {
        Delivery::Delivered => {
            let reference = session.next_sms_ref;
            session.next_sms_ref += 1;
            Response::lines([format!("+CMGS: {reference}"), OK.to_string()])
        }
        Delivery::Dropped => Response::lines(["+CMS ERROR: 500"]),
    }
}

/// Hands an SMS from a virtual phone to the device's SIM. On delivery the
/// message is stored and a `+CMTI` indication is returned.
pub fn deliver_inbound(network: &mut VirtualNetwork, session: &mut ModemSession, msg: SmsMessage) -> Vec<String> {
    if msg.to != session.own_number {
        network.note(format!(
            "inbound sms for {} reached device {}; ignored",
            msg.to, session.own_number
        ));
        return Vec::new();
    }
    if network.send_sms(msg.clone()) == Delivery::Dropped {
        return Vec::new();
    }
    session.storage.push(StoredSms { msg, read: false });
    vec![format!("+CMTI: \"SM\",{}", session.storage.len())]
}
