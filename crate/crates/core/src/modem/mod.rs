//! SIM808-style modem emulation: AT parsing, session state, the serial
//! port, and the virtual cellular network behind it.

pub mod at;
pub mod network;
pub mod serial;
pub mod session;

pub use at::{parse_at_line, AtArg, AtCommand, Form, ParseFailure, Verb};
pub use network::{
    request_target, Band, Delivery, GnssTrack, HttpEndpoint, HttpMethod, HttpReply, LedgerEntry, MessageClass,
    NetworkParams, VirtualNetwork, Waypoint, DEFAULT_HTTP_LOSS_PROB,
};
pub use serial::Modem;
pub use session::{
    deliver_inbound, execute, is_terminal, submit_sms_body, HttpState, ModemSession, ReadStatus, Response, StoredSms,
};

use serde::{Deserialize, Serialize};

/// A text message in flight or at rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsMessage {
    pub from: String,
    pub to: String,
    pub body: String,
    pub t_ms: u64,
}
