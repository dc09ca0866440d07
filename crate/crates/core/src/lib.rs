//! Desk-scale simulation of a wrist-worn heart-rate and SpO2 monitor.
//!
//! The crate models the whole chain: a two-LED optical sensor
//! ([`vitals`]), the device firmware ([`device`]), a SIM808-style
//! GSM/GPRS/GNSS modem with a virtual cellular network ([`modem`]), a
//! ThingSpeak-compatible ingestion service ([`telemetry`]), battery and
//! mobile-data accounting ([`power`]), and a scenario runner tying them to
//! one simulated clock ([`harness`]).

pub mod clock;
pub mod device;
pub mod harness;
pub mod modem;
pub mod power;
pub mod ratio;
pub mod telemetry;
pub mod vitals;
