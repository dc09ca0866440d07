use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AlertEvent;
use crate::vitals::VitalsReading;

/// Path of the channel update endpoint.
pub const UPDATE_PATH: &str = "/update";

/// A channel update as the device sends it: `/update?api_key=K&field1=..`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateRequest {
    pub params: Vec<(String, String)>,
}

impl UpdateRequest {
    /// Path plus query string, parameters in insertion order.
    pub fn url(&self) -> String {
        let query: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{UPDATE_PATH}?{}", query.join("&"))
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Upload request for a good reading: field1 carries bpm, field2 SpO2.
pub fn build_update_request(reading: &VitalsReading, api_key: &str) -> Option<UpdateRequest> {
    let (bpm, spo2) = reading.values()?;
    Some(UpdateRequest {
        params: vec![
            ("api_key".into(), api_key.into()),
            ("field1".into(), bpm.to_string()),
            ("field2".into(), spo2.to_string()),
        ],
    })
}

/// Something the firmware asks the outside world to do or show.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Display { t_ms: u64, text: String },
    SendSms { t_ms: u64, to: String, body: String },
    HttpUpdate { t_ms: u64, request: UpdateRequest },
    ConfigChanged { t_ms: u64, summary: String },
    AlertRaised(AlertEvent),
    Diagnostic { t_ms: u64, message: String },
}

impl Effect {
    pub fn t_ms(&self) -> u64 {
        match self {
            Self::Display { t_ms, .. }
            | Self::SendSms { t_ms, .. }
            | Self::HttpUpdate { t_ms, .. }
            | Self::ConfigChanged { t_ms, .. }
            | Self::Diagnostic { t_ms, .. } => *t_ms,
            Self::AlertRaised(alert) => alert.t_ms,
        }
    }

    pub fn record(&self) -> EffectRecord {
        let t_ms = self.t_ms();
        match self {
            Self::Display { text, .. } => EffectRecord::new(t_ms, "display").body(text),
            Self::SendSms { to, body, .. } => {
                let mut rec = EffectRecord::new(t_ms, "send_sms").body(body);
                rec.to = Some(to.clone());
                rec
            }
            Self::HttpUpdate { request, .. } => {
                let mut rec = EffectRecord::new(t_ms, "http_update");
                rec.url = Some(request.url());
                rec.params = Some(request.params.iter().cloned().collect());
                rec
            }
            Self::ConfigChanged { summary, .. } => EffectRecord::new(t_ms, "config_changed").body(summary),
            Self::AlertRaised(alert) => {
                let mut rec = EffectRecord::new(t_ms, "alert_raised").body(&format!(
                    "{} BPM={} SpO2={}%",
                    alert.kind.as_str(),
                    alert.bpm,
                    alert.spo2_pct
                ));
                rec.url = alert.url.clone();
                let mut params = BTreeMap::new();
                params.insert("kind".to_string(), alert.kind.as_str().to_string());
                params.insert("bpm".to_string(), alert.bpm.to_string());
                params.insert("spo2_pct".to_string(), alert.spo2_pct.to_string());
                params.insert("fix_valid".to_string(), alert.fix.valid.to_string());
                rec.params = Some(params);
                rec
            }
            Self::Diagnostic { message, .. } => EffectRecord::new(t_ms, "diagnostic").body(message),
        }
    }
}

/// Flat JSON-lines shape of one logged effect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectRecord {
    pub t_ms: u64,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BTreeMap<String, String>>,
}

impl EffectRecord {
    pub fn new(t_ms: u64, kind: &str) -> Self {
        Self {
            t_ms,
            kind: kind.to_string(),
            body: None,
            to: None,
            url: None,
            params: None,
        }
    }

    pub fn body(mut self, body: &str) -> Self {
        self.body = Some(body.to_string());
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("effect record serializes")
    }
}
