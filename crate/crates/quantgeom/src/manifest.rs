//! Run manifest written next to every data file: the command, its full
//! configuration echo, the master seed, tool version, and a UTC timestamp.
//! Two manifests describe the same data iff everything but the timestamp
//! matches.

use serde::{Deserialize, Serialize};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config: serde_json::Value, master_seed: u64) -> Self {
        RunManifest {
            command: command.into(),
            config,
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: iso8601_utc_now(),
        }
    }

    /// Equality of everything that determines the output bytes; the
    /// timestamp is excluded.
    pub fn data_equal(&self, other: &RunManifest) -> bool {
        self.command == other.command
            && self.config == other.config
            && self.master_seed == other.master_seed
            && self.tool_version == other.tool_version
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

pub fn iso8601_utc_now() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    iso8601_utc(secs)
}

/// Format seconds since the Unix epoch as e.g. `2024-05-17T09:30:12Z`.
/// Gregorian conversion via the days-from-civil inverse.
pub fn iso8601_utc(secs: u64) -> String {
    let days = (secs / 86_400) as i64;
    let rem = secs % 86_400;
    let (h, m, s) = (rem / 3600, (rem % 3600) / 60, rem % 60);

    // civil_from_days, epoch 1970-01-01
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = if month <= 2 { y + 1 } else { y };

    format!("{year:04}-{month:02}-{d:02}T{h:02}:{m:02}:{s:02}Z")
}
