//! Number formatting and the run manifest attached to every output file.

use serde::{Deserialize, Serialize};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::environment::hex_digest;

/// Shortest representation that parses back to the same double (never more
/// than 17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:?}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    /// `config` is any canonical text describing the run (flags or a config file).
    pub fn new(command: &str, config: &str, master_seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_digest: hex_digest(config.as_bytes()),
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: timestamp(),
        }
    }

    /// `#`-prefixed comment lines for CSV files.
    pub fn csv_comment(&self) -> String {
        format!(
            "# command={}\n# config_digest={}\n# master_seed={}\n# tool_version={}\n# timestamp={}\n",
            self.command, self.config_digest, self.master_seed, self.tool_version, self.timestamp
        )
    }

    pub fn json_line(&self) -> String {
        serde_json::json!({ "manifest": self }).to_string()
    }
}

/// UTC now, or `SOURCE_DATE_EPOCH` when set so that whole files can be
/// reproduced byte for byte.
pub fn timestamp() -> String {
    let t = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| OffsetDateTime::from_unix_timestamp(s).ok())
        .unwrap_or_else(OffsetDateTime::now_utc);
    t.format(&Rfc3339).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [2.0 / 3.0, 1e-300, 0.1, 1.0, 123456.789, -5e-17] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert!(fmt_f64(2.0 / 3.0).starts_with("0.6666666666666"));
        assert_eq!(fmt_f64(1.0), "1.0");
    }

    #[test]
    fn manifest_lines() {
        let m = RunManifest::new("exact", "--what yreturn", 3);
        let c = m.csv_comment();
        assert!(c.lines().all(|l| l.starts_with('#')));
        assert!(m.json_line().starts_with("{\"manifest\":"));
        assert_eq!(m.config_digest.len(), 64);
    }
}
