//! Closed-form predictions the simulator's measurements are judged against.

use serde::Serialize;

use crate::types::Millis;

/// Effective-bandwidth ratio an undesired flow keeps when `n` nodes on its
/// path refuse to cooperate: `n (T_d + T_r) / T`.
pub fn oracle_r(n: u32, t_d: Millis, t_r: Millis, t: Millis) -> f64 {
    assert!(t.0 > 0, "T must be positive");
    f64::from(n) * (t_d.0 + t_r.0) as f64 / t.0 as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Provisioning {
    /// Simultaneous undesired flows a victim is protected against.
    pub n_v_flows: f64,
    /// Filters the victim's gateway needs.
    pub n_v: f64,
    /// Shadow entries the victim's gateway needs.
    pub m_v: f64,
    /// Filters an attacker's gateway needs per client.
    pub n_a: f64,
}

/// `r1`, `r2` in requests per second.
pub fn oracle_provisioning(r1: f64, r2: f64, t: Millis, t_tmp: Millis) -> Provisioning {
    let (t, t_tmp) = (t.as_secs_f64(), t_tmp.as_secs_f64());
    Provisioning {
        n_v_flows: r1 * t,
        n_v: r1 * t_tmp,
        m_v: r1 * t,
        n_a: r2 * t,
    }
}
