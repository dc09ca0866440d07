use serde::{Deserialize, Serialize};

use super::{BpmRange, DeviceError, DeviceState, Mode};
use crate::modem::SmsMessage;

pub const MAX_CONTACTS: usize = 3;

/// Parameters the user can set on the device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub own_number: String,
    pub contacts: Vec<String>,
    pub api_key: String,
    pub nominal_bpm: BpmRange,
    pub upload_interval_s: u64,
    pub config_window_s: u64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            own_number: "+593980000001".into(),
            contacts: Vec::new(),
            api_key: "ABCD1234EFGH5678".into(),
            nominal_bpm: BpmRange::default(),
            upload_interval_s: 48,
            config_window_s: 80,
        }
    }
}

impl DeviceConfig {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let bad = |msg: String| Err(DeviceError::InvalidConfig(msg));
        if !is_e164(&self.own_number) {
            return bad(format!("own_number {:?} is not E.164", self.own_number));
        }
        if self.contacts.len() > MAX_CONTACTS {
            return bad(format!("at most {MAX_CONTACTS} contacts"));
        }
        for (i, c) in self.contacts.iter().enumerate() {
            if !is_e164(c) {
                return bad(format!("contact {c:?} is not E.164"));
            }
            if self.contacts[..i].contains(c) {
                return bad(format!("duplicate contact {c}"));
            }
        }
        if !is_api_key(&self.api_key) {
            return bad("api_key must be 16 alphanumeric characters".into());
        }
        if self.nominal_bpm.low >= self.nominal_bpm.high {
            return bad("nominal_bpm low must be below high".into());
        }
        if self.upload_interval_s == 0 || self.config_window_s == 0 {
            return bad("intervals must be positive".into());
        }
        Ok(())
    }

    pub fn config_window_ms(&self) -> u64 {
        self.config_window_s * 1000
    }

    pub fn upload_interval_ms(&self) -> u64 {
        self.upload_interval_s * 1000
    }
}

/// `+` followed by 8 to 15 digits.
pub fn is_e164(number: &str) -> bool {
    number
        .strip_prefix('+')
        .is_some_and(|digits| (8..=15).contains(&digits.len()) && digits.bytes().all(|b| b.is_ascii_digit()))
}

pub fn is_api_key(key: &str) -> bool {
    key.len() == 16 && key.bytes().all(|b| b.is_ascii_alphanumeric())
}

pub const ACK_WINDOW_CLOSED: &str = "REJECTED: config window closed";
pub const ACK_BAD_COMMAND: &str = "ERR: bad command";
pub const ACK_LIST_FULL: &str = "ERR: contact list full";
pub const ACK_DUPLICATE: &str = "ERR: duplicate contact";
pub const ACK_UNKNOWN_CONTACT: &str = "ERR: unknown contact";

#[derive(Debug, Clone, PartialEq, Eq)]
enum ConfigCommand {
    AddContact(String),
    DelContact(String),
    ApiKey(String),
}

impl ConfigCommand {
    /// `CFG CONTACT ADD <e164>`, `CFG CONTACT DEL <e164>`, `CFG APIKEY <key>`.
    fn parse(body: &str) -> Option<Self> {
        let tokens: Vec<&str> = body.split_whitespace().collect();
        let kw = |i: usize, word: &str| tokens.get(i).is_some_and(|t| t.eq_ignore_ascii_case(word));
        if !kw(0, "CFG") {
            return None;
        }
        match tokens.len() {
            4 if kw(1, "CONTACT") && kw(2, "ADD") && is_e164(tokens[3]) => {
                Some(Self::AddContact(tokens[3].to_string()))
            }
            4 if kw(1, "CONTACT") && kw(2, "DEL") && is_e164(tokens[3]) => {
                Some(Self::DelContact(tokens[3].to_string()))
            }
            3 if kw(1, "APIKEY") && is_api_key(tokens[2]) => Some(Self::ApiKey(tokens[2].to_string())),
            _ => None,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Self::AddContact(_) => "CONTACT ADD",
            Self::DelContact(_) => "CONTACT DEL",
            Self::ApiKey(_) => "APIKEY",
        }
    }
}

/// Applies a configuration SMS. Only accepted while the device is in
/// configuration mode and the window has not run out; otherwise the config
/// comes back unchanged with an explanatory ack.
pub fn handle_config_sms(
    msg: &SmsMessage,
    state: &DeviceState,
    now_ms: u64,
    config: &DeviceConfig,
) -> (DeviceConfig, String) {
    let open = match state.mode {
        Mode::Configuring { entered_at_ms } => {
            now_ms >= entered_at_ms && now_ms - entered_at_ms <= config.config_window_ms()
        }
        Mode::Monitoring => false,
    };
    if !open {
        return (config.clone(), ACK_WINDOW_CLOSED.to_string());
    }
    let Some(command) = ConfigCommand::parse(&msg.body) else {
        return (config.clone(), ACK_BAD_COMMAND.to_string());
    };

    let mut next = config.clone();
    match &command {
        ConfigCommand::AddContact(number) => {
            if next.contacts.contains(number) {
                return (config.clone(), ACK_DUPLICATE.to_string());
            }
            if next.contacts.len() >= MAX_CONTACTS {
                return (config.clone(), ACK_LIST_FULL.to_string());
            }
            next.contacts.push(number.clone());
        }
        ConfigCommand::DelContact(number) => {
            let Some(pos) = next.contacts.iter().position(|c| c == number) else {
                return (config.clone(), ACK_UNKNOWN_CONTACT.to_string());
            };
            next.contacts.remove(pos);
        }
        ConfigCommand::ApiKey(key) => next.api_key = key.clone(),
    }
    (next, format!("OK {}", command.label()))
}
