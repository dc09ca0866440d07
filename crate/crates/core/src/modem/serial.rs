use std::fmt::Write as _;

use super::at::parse_at_line;
use super::network::VirtualNetwork;
use super::session::{
    deliver_inbound, execute, submit_sms_body, ModemSession, ReadStatus, Response, ERROR, SMS_CANCEL, SMS_TERMINATOR,
};
use super::SmsMessage;

/// Longest command line accepted; longer lines are answered with `ERROR`.
pub const MAX_LINE_BYTES: usize = 556;
/// Bytes buffered in the SMS prompt before further input is discarded.
pub const MAX_PROMPT_BYTES: usize = 1024;

/// A modem behind a UART. Commands are CR-terminated, replies CRLF-delimited.
/// Everything crossing the wire is appended to a transcript.
#[derive(Debug, Clone)]
pub struct Modem {
    session: ModemSession,
    line: Vec<u8>,
    line_overflow: bool,
    prompt: Vec<u8>,
    prompt_overflow: bool,
    transcript: String,
}

impl Modem {
    pub fn new(session: ModemSession) -> Self {
        Self {
            session,
            line: Vec::new(),
            line_overflow: false,
            prompt: Vec::new(),
            prompt_overflow: false,
            transcript: String::new(),
        }
    }

    pub fn session(&self) -> &ModemSession {
        &self.session
    }

    pub fn transcript(&self) -> &str {
        &self.transcript
    }

    /// Feeds bytes from the host and returns every line the modem emitted,
    /// solicited and unsolicited, in wire order.
    pub fn feed(&mut self, bytes: &[u8], network: &mut VirtualNetwork, now_ms: u64) -> Vec<String> {
        let mut out = Vec::new();
        for &b in bytes {
            if self.session.in_prompt() {
                self.feed_prompt(b, network, now_ms, &mut out);
            } else {
                self.feed_command(b, network, now_ms, &mut out);
            }
        }
        out
    }

    fn feed_command(&mut self, b: u8, network: &mut VirtualNetwork, now_ms: u64, out: &mut Vec<String>) {
        match b {
            b'\n' if self.line.is_empty() => {}
            b'\r' => {
                let line = std::mem::take(&mut self.line);
                let overflow = std::mem::replace(&mut self.line_overflow, false);
                if line.iter().all(u8::is_ascii_whitespace) && !overflow {
                    return;
                }
                self.log_host(&line, "\r\n");
                let response = if overflow {
                    Response {
                        lines: vec![ERROR.to_string()],
                        unsolicited: Vec::new(),
                    }
                } else {
                    match parse_at_line(&line) {
                        Ok(cmd) => execute(&cmd, &mut self.session, network, now_ms),
                        Err(_) => Response {
                            lines: vec![ERROR.to_string()],
                            unsolicited: Vec::new(),
                        },
                    }
                };
                self.emit(response, out);
            }
            _ if self.line.len() >= MAX_LINE_BYTES => self.line_overflow = true,
            _ => self.line.push(b),
        }
    }

    fn feed_prompt(&mut self, b: u8, network: &mut VirtualNetwork, now_ms: u64, out: &mut Vec<String>) {
        match b {
            SMS_TERMINATOR => {
                let mut body = std::mem::take(&mut self.prompt);
                body.push(SMS_TERMINATOR);
                self.log_host(&body, "\r\n");
                let response = if std::mem::replace(&mut self.prompt_overflow, false) {
                    self.session.cancel_prompt();
                    Response {
                        lines: vec!["+CMS ERROR: 305".to_string()],
                        unsolicited: Vec::new(),
                    }
                } else {
                    submit_sms_body(&mut self.session, network, &body, now_ms)
                };
                self.emit(response, out);
            }
            SMS_CANCEL => {
                let mut body = std::mem::take(&mut self.prompt);
                body.push(SMS_CANCEL);
                self.prompt_overflow = false;
                self.log_host(&body, "\r\n");
                let response = self.session.cancel_prompt();
                self.emit(response, out);
            }
            _ if self.prompt.len() >= MAX_PROMPT_BYTES => self.prompt_overflow = true,
            _ => self.prompt.push(b),
        }
    }

    /// An SMS arriving from the network; returns the `+CMTI` indication, if
    /// any, which is also written to the transcript.
    pub fn receive_sms(&mut self, network: &mut VirtualNetwork, msg: SmsMessage) -> Vec<String> {
        let urcs = deliver_inbound(network, &mut self.session, msg);
        for line in &urcs {
            self.log_modem(line);
        }
        urcs
    }

    /// Reads a stored SMS by its `+CMTI` index.
    pub fn read_stored(&mut self, index: usize) -> Option<(SmsMessage, ReadStatus)> {
        self.session.read_stored(index)
    }

    fn emit(&mut self, response: Response, out: &mut Vec<String>) {
        for line in response.lines.into_iter().chain(response.unsolicited) {
            self.log_modem(&line);
            out.push(line);
        }
    }

    fn log_host(&mut self, bytes: &[u8], end: &str) {
        self.transcript.push_str(">> ");
        render(&mut self.transcript, bytes);
        self.transcript.push_str(end);
    }

    fn log_modem(&mut self, line: &str) {
        self.transcript.push_str("<< ");
        render(&mut self.transcript, line.as_bytes());
        self.transcript.push_str("\r\n");
    }
}

/// Printable ASCII verbatim, 0x1A as `^Z`, ESC as `^[`, anything else as
/// `\xNN`.
fn render(out: &mut String, bytes: &[u8]) {
    for &b in bytes {
        match b {
            SMS_TERMINATOR => out.push_str("^Z"),
            SMS_CANCEL => out.push_str("^["),
            b' '..=b'~' => out.push(b as char),
            _ => {
                let _ = write!(out, "\\x{b:02X}");
            }
        }
    }
}
