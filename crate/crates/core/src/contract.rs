//! Filtering contracts between adjacent parties and token-bucket policing of
//! the filtering requests that cross them.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::types::{NodeId, SimTime};

/// One token expressed in the fixed-point unit used by [`TokenBucket`].
const MICRO: u64 = 1_000_000;

/// Rate and burst for one direction of a contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    /// Requests per second.
    pub rate: f64,
    /// Maximum number of requests accepted back to back.
    pub burst: u32,
}

impl RateSpec {
    /// Burst defaults to one second's worth of tokens, and never below one.
    pub fn with_default_burst(rate: f64, burst: Option<u32>) -> RateSpec {
        RateSpec {
            rate,
            burst: burst.unwrap_or_else(|| (rate.floor() as u32).max(1)),
        }
    }

    pub fn validate(&self, field: &str) -> Result<(), ConfigError> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(ConfigError::invalid(field, "rate must be positive"));
        }
        let scaled = self.rate * 1000.0;
        if (scaled - scaled.round()).abs() > 1e-9 {
            return Err(ConfigError::invalid(field, "rate resolution is 0.001 requests/s"));
        }
        if self.burst == 0 {
            return Err(ConfigError::invalid(field, "burst must be positive"));
        }
        Ok(())
    }
}

/// Per-adjacency agreement. `provider` accepts requests from `client` at
/// `r1` (client to provider) and may send requests to `client` at `r2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteringContract {
    pub provider: NodeId,
    pub client: NodeId,
    pub client_to_provider: RateSpec,
    pub provider_to_client: RateSpec,
}

impl FilteringContract {
    /// Rate governing requests sent from `from` to `to`, if this contract
    /// covers that edge.
    pub fn direction(&self, from: NodeId, to: NodeId) -> Option<RateSpec> {
        if from == self.client && to == self.provider {
            Some(self.client_to_provider)
        } else if from == self.provider && to == self.client {
            Some(self.provider_to_client)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Accept,
    Drop,
}

/// Token bucket over virtual time. Tokens are held in millionths so refill at
/// any rate with millisecond resolution is exact integer arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBucket {
    refill_per_ms: u64,
    capacity: u64,
    tokens: u64,
    last_refill: SimTime,
}

impl TokenBucket {
    /// A full bucket.
    pub fn new(spec: RateSpec, now: SimTime) -> TokenBucket {
        let capacity = u64::from(spec.burst) * MICRO;
        TokenBucket {
            refill_per_ms: (spec.rate * 1000.0).round() as u64,
            capacity,
            tokens: capacity,
            last_refill: now,
        }
    }

    fn refill(&mut self, now: SimTime) {
        if now <= self.last_refill {
            return;
        }
        let elapsed = now.since(self.last_refill).as_ms();
        let added = elapsed.saturating_mul(self.refill_per_ms);
        self.tokens = self.tokens.saturating_add(added).min(self.capacity);
        self.last_refill = now;
    }

    /// Refill up to `now`, then take one token if there is one.
    pub fn police(&mut self, now: SimTime) -> Verdict {
        debug_assert!(now >= self.last_refill, "policer clock went backwards");
        self.refill(now);
        if self.tokens >= MICRO {
            self.tokens -= MICRO;
            Verdict::Accept
        } else {
            Verdict::Drop
        }
    }

    /// Earliest time at or after `now` when a request would be accepted.
    pub fn next_token_at(&self, now: SimTime) -> SimTime {
        let mut probe = self.clone();
        probe.refill(now);
        if probe.tokens >= MICRO {
            return now.max(probe.last_refill);
        }
        let missing = MICRO - probe.tokens;
        let wait = missing.div_ceil(self.refill_per_ms.max(1));
        SimTime(now.as_ms() + wait)
    }

    pub fn tokens(&self) -> f64 {
        self.tokens as f64 / MICRO as f64
    }

    pub fn burst(&self) -> f64 {
        self.capacity as f64 / MICRO as f64
    }

    pub fn last_refill(&self) -> SimTime {
        self.last_refill
    }
}

/// Stateless form of the policing step for callers that keep the state
/// themselves.
pub fn police(state: &mut TokenBucket, now: SimTime) -> Verdict {
    state.police(now)
}
