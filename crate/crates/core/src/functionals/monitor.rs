use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::flow::FlowTrace;

pub const MONITOR_COLUMNS: [&str; 13] = [
    "t",
    "Y",
    "b",
    "M",
    "u_c0",
    "grad_u_c0",
    "grad_u_l2",
    "Rn_c0",
    "Rn_l2",
    "futaki_value",
    "oscillation_constant",
    "y_identity_residual",
    "noncollapse_ratio",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub y: f64,
    pub b: f64,
    pub mabuchi: f64,
    pub u_c0: f64,
    pub grad_u_c0: f64,
    pub grad_u_l2: f64,
    pub rn_c0: f64,
    pub rn_l2: f64,
    pub futaki_value: f64,
    pub oscillation_constant: Option<f64>,
    /// Absent at the first and last sample.
    pub y_identity_residual: Option<f64>,
    pub noncollapse_ratio: Option<f64>,
}

pub fn monitor_records(trace: &FlowTrace) -> Vec<MonitorRecord> {
    trace
        .records
        .iter()
        .map(|r| MonitorRecord {
            t: r.t,
            y: r.y,
            b: r.b,
            mabuchi: r.mabuchi,
            u_c0: r.u_c0,
            grad_u_c0: r.grad_u_c0,
            grad_u_l2: r.grad_u_l2,
            rn_c0: r.rn_c0,
            rn_l2: r.rn_l2,
            futaki_value: r.futaki,
            oscillation_constant: r.oscillation_constant,
            y_identity_residual: super::y_identity_residual(trace, r.t).ok(),
            noncollapse_ratio: r.noncollapse,
        })
        .collect()
}

pub fn monitor_csv(records: &[MonitorRecord]) -> String {
    let mut s = MONITOR_COLUMNS.join(",");
    s.push('\n');
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.12e}")).unwrap_or_default();
    for r in records {
        let _ = writeln!(
            s,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}",
            r.t,
            r.y,
            r.b,
            r.mabuchi,
            r.u_c0,
            r.grad_u_c0,
            r.grad_u_l2,
            r.rn_c0,
            r.rn_l2,
            r.futaki_value,
            opt(r.oscillation_constant),
            opt(r.y_identity_residual),
            opt(r.noncollapse_ratio)
        );
    }
    s
}
