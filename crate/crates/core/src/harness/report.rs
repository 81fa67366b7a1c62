//! Metrics reports and their JSON, text and CSV renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::node::host::HostCounters;
use crate::node::router::RouterCounters;
use crate::simnet::{DropReason, MessageStats};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub duration_ms: u64,
    /// Length of the measurement window and of each reported period.
    pub window_ms: u64,
    pub flows: Vec<FlowReport>,
    pub nodes: Vec<NodeReport>,
    pub messages: MessageStats,
    pub disconnections: Vec<DisconnectionReport>,
    pub escalations: Vec<EscalationReport>,
    /// Long-term filters installed, per node.
    pub long_term_filters: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
    pub violations: Vec<String>,
}

/// One scenario flow entry. A repeated flow is summed over its copies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub label: String,
    pub copies: u32,
    pub undesired: bool,
    pub offered_pkts: u64,
    pub offered_bytes: u64,
    pub delivered_pkts: u64,
    pub delivered_bytes: u64,
    pub window_offered: u64,
    pub window_delivered: u64,
    /// Delivered over offered in the first window after flow start.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Delivered over offered for the whole run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_aggregate: Option<f64>,
    pub periods: Vec<PeriodReport>,
    pub drops: BTreeMap<DropReason, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escalation_round: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub non_cooperating: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodReport {
    pub index: usize,
    pub offered: u64,
    pub delivered: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub name: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter_capacity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter_high_water: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shadow_capacity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shadow_high_water: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table_full: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shadow_overflow: Option<u64>,
    /// Most long-term filters held at once on behalf of each client.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub client_high_water: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub router: Option<RouterCounters>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub host: Option<HostCounters>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DisconnectionReport {
    pub time_ms: u64,
    pub by: String,
    pub neighbor: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub until_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EscalationReport {
    pub time_ms: u64,
    pub node: String,
    pub label: String,
    pub round: usize,
    pub to: String,
}

/// Predictions for the first undesired flow's victim.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub victim: String,
    pub victim_gateway: String,
    pub r1: f64,
    pub r2: f64,
    pub t_ms: u64,
    pub t_tmp_ms: u64,
    pub t_d_ms: u64,
    pub t_r_ms: u64,
    pub n: u32,
    pub n_v_flows: f64,
    pub n_v: f64,
    pub m_v: f64,
    pub n_a: f64,
    pub predicted_r: f64,
}

pub(crate) fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), T::to_string)
}

fn fmt_r(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |r| format!("{r:.6e}"))
}

fn table(out: &mut String, head: &[&str], rows: &[Vec<String>]) {
    let mut w: Vec<usize> = head.iter().map(|h| h.len()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            w[i] = w[i].max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let _ = write!(s, "{c:<width$}", width = w[i]);
        }
        s.trim_end().to_string()
    };
    let _ = writeln!(out, "{}", line(head.to_vec()));
    for r in rows {
        let _ = writeln!(out, "{}", line(r.iter().map(String::as_str).collect()));
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Per-flow table only.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "flow,src,dst,label,copies,undesired,offered_pkts,offered_bytes,delivered_pkts,delivered_bytes,\
             window_offered,window_delivered,r,r_aggregate,escalation_round,non_cooperating,predicted_r\n",
        );
        for f in &self.flows {
            let cells = [
                csv_field(&f.id),
                csv_field(&f.src),
                csv_field(&f.dst),
                csv_field(&f.label),
                f.copies.to_string(),
                f.undesired.to_string(),
                f.offered_pkts.to_string(),
                f.offered_bytes.to_string(),
                f.delivered_pkts.to_string(),
                f.delivered_bytes.to_string(),
                f.window_offered.to_string(),
                f.window_delivered.to_string(),
                f.r.map_or(String::new(), |r| r.to_string()),
                f.r_aggregate.map_or(String::new(), |r| r.to_string()),
                f.escalation_round.map_or(String::new(), |r| r.to_string()),
                f.non_cooperating.map_or(String::new(), |r| r.to_string()),
                f.predicted_r.map_or(String::new(), |r| r.to_string()),
            ];
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {}  seed {}  duration {} ms  window {} ms",
            self.scenario, self.seed, self.duration_ms, self.window_ms
        );
        let _ = writeln!(s, "\nflows");
        let rows: Vec<Vec<String>> = self
            .flows
            .iter()
            .map(|f| {
                vec![
                    f.id.clone(),
                    format!("{}>{}", f.src, f.dst),
                    if f.undesired { "undesired" } else { "legit" }.into(),
                    f.copies.to_string(),
                    f.offered_pkts.to_string(),
                    f.delivered_pkts.to_string(),
                    fmt_r(f.r),
                    fmt_r(f.r_aggregate),
                    opt(&f.escalation_round),
                    fmt_r(f.predicted_r),
                ]
            })
            .collect();
        table(
            &mut s,
            &[
                "flow",
                "path",
                "class",
                "copies",
                "offered",
                "delivered",
                "r",
                "r_all",
                "round",
                "predicted",
            ],
            &rows,
        );
        let _ = writeln!(s, "\nnodes");
        let rows: Vec<Vec<String>> = self
            .nodes
            .iter()
            .filter(|n| n.router.is_some() || n.host.is_some())
            .map(|n| {
                let (sent, accepted, policed) = match (&n.router, &n.host) {
                    (Some(r), _) => (r.requests_sent, r.requests_accepted, r.policed_dropped),
                    (_, Some(h)) => (h.requests_sent, 0, h.stop_policed),
                    _ => (0, 0, 0),
                };
                vec![
                    n.name.clone(),
                    n.kind.clone(),
                    match (n.filter_high_water, n.filter_capacity) {
                        (Some(h), Some(c)) => format!("{h}/{c}"),
                        _ => "-".into(),
                    },
                    match (n.shadow_high_water, n.shadow_capacity) {
                        (Some(h), Some(c)) => format!("{h}/{c}"),
                        _ => "-".into(),
                    },
                    opt(&n.table_full),
                    sent.to_string(),
                    accepted.to_string(),
                    policed.to_string(),
                ]
            })
            .collect();
        table(
            &mut s,
            &["node", "kind", "filters", "shadow", "full", "req_sent", "req_accepted", "policed"],
            &rows,
        );
        let _ = writeln!(
            s,
            "\nmessages  sent {}  delivered {}  dropped {}",
            self.messages.sent,
            self.messages.delivered,
            self.messages.dropped.values().sum::<u64>()
        );
        if !self.long_term_filters.is_empty() {
            let _ = writeln!(s, "\nlong-term filters");
            for (n, c) in &self.long_term_filters {
                let _ = writeln!(s, "  {n}  {c}");
            }
        }
        if !self.escalations.is_empty() {
            let _ = writeln!(s, "\nescalations");
            for e in &self.escalations {
                let _ = writeln!(s, "  {} ms  {} -> {}  round {}  {}", e.time_ms, e.node, e.to, e.round, e.label);
            }
        }
        if !self.disconnections.is_empty() {
            let _ = writeln!(s, "\ndisconnections");
            for d in &self.disconnections {
                let until = d.until_ms.map_or_else(|| "end of run".to_string(), |u| format!("{u} ms"));
                let _ = writeln!(s, "  {} ms  {} -x- {}  until {until}", d.time_ms, d.by, d.neighbor);
            }
        }
        if let Some(o) = &self.oracle {
            let _ = writeln!(s, "\noracle  victim {} via {}", o.victim, o.victim_gateway);
            let _ = writeln!(
                s,
                "  R1 {}/s  R2 {}/s  T {} ms  T_tmp {} ms  T_d {} ms  T_r {} ms  n {}",
                o.r1, o.r2, o.t_ms, o.t_tmp_ms, o.t_d_ms, o.t_r_ms, o.n
            );
            let _ = writeln!(
                s,
                "  N_v {}  n_v {}  m_v {}  n_a {}  predicted r {:.6e}",
                o.n_v_flows, o.n_v, o.m_v, o.n_a, o.predicted_r
            );
        }
        if !self.violations.is_empty() {
            let _ = writeln!(s, "\nviolations");
            for v in &self.violations {
                let _ = writeln!(s, "  {v}");
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_guards_zero() {
        assert_eq!(ratio(0, 0), None);
        assert_eq!(ratio(5, 5), Some(1.0));
        assert_eq!(ratio(0, 5), Some(0.0));
    }

    #[test]
    fn csv_quotes_commas() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("x"), "x");
    }

    #[test]
    fn table_aligns_columns() {
        let mut s = String::new();
        table(&mut s, &["a", "bb"], &[vec!["ccc".into(), "d".into()]]);
        assert_eq!(s, "a    bb\nccc  d\n");
    }
}
