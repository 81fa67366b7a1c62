use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::types::time::Millis;

/// Protocol timers for one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    /// Lifetime of a long-term filter and of a shadow-log entry.
    pub t_ms: Millis,
    /// Lifetime of the victim gateway's temporary filter.
    pub t_tmp_ms: Millis,
    /// Time an attacker has to stop after being asked.
    pub grace_attacker_ms: Millis,
    /// A temporary filter that matched within this window before its expiry
    /// counts as "flow still arriving".
    pub grace_victim_gw_ms: Millis,
    pub handshake_timeout_ms: Millis,
    /// `None` disconnects for the rest of the run.
    pub disconnect_ms: Option<Millis>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            t_ms: Millis(60_000),
            t_tmp_ms: Millis(600),
            grace_attacker_ms: Millis(200),
            grace_victim_gw_ms: Millis(200),
            handshake_timeout_ms: Millis(1_000),
            disconnect_ms: None,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self, field: &str) -> Result<(), ConfigError> {
        let positive = [
            ("t_ms", self.t_ms),
            ("t_tmp_ms", self.t_tmp_ms),
            ("grace_attacker_ms", self.grace_attacker_ms),
            ("grace_victim_gw_ms", self.grace_victim_gw_ms),
            ("handshake_timeout_ms", self.handshake_timeout_ms),
        ];
        for (name, v) in positive {
            if v.0 == 0 {
                return Err(ConfigError::invalid(format!("{field}.{name}"), "must be positive"));
            }
        }
        if self.disconnect_ms == Some(Millis(0)) {
            return Err(ConfigError::invalid(format!("{field}.disconnect_ms"), "must be positive"));
        }
        if self.t_tmp_ms >= self.t_ms {
            return Err(ConfigError::invalid(
                format!("{field}.t_tmp_ms"),
                format!("must be shorter than t_ms ({} >= {})", self.t_tmp_ms, self.t_ms),
            ));
        }
        if self.grace_victim_gw_ms > self.t_tmp_ms {
            return Err(ConfigError::invalid(
                format!("{field}.grace_victim_gw_ms"),
                "must not exceed t_tmp_ms",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ProtocolParams::default().validate("params").unwrap();
    }

    #[test]
    fn tmp_must_be_shorter_than_t() {
        let p = ProtocolParams {
            t_tmp_ms: Millis(60_000),
            ..ProtocolParams::default()
        };
        let err = p.validate("params").unwrap_err();
        assert!(err.to_string().contains("params.t_tmp_ms"), "{err}");
    }

    #[test]
    fn zero_timer_rejected() {
        let p = ProtocolParams {
            handshake_timeout_ms: Millis(0),
            ..ProtocolParams::default()
        };
        assert!(p.validate("params").is_err());
    }
}
