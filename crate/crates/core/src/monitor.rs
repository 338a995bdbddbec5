//! Monitor stage: reads the seven probes, closes the window, and hands the
//! snapshot to the knowledge base.

use thiserror::Error;

use crate::client::{ProbeClient, ProbeError};
use crate::context::ContextSnapshot;
use crate::knowledge::Knowledge;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("probe timed out: {0}")]
    ProbeTimeout(ProbeError),
    #[error("probe `{command}` returned `{reply}`")]
    ProtocolError { command: String, reply: String },
    #[error("probe transport: {0}")]
    Transport(ProbeError),
}

impl From<ProbeError> for MonitorError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::Timeout(_) => MonitorError::ProbeTimeout(e),
            other => MonitorError::Transport(other),
        }
    }
}

/// Probe order; `reset_window` always follows the last read.
pub const PROBE_ORDER: [&str; 7] = [
    "get_dimmer",
    "get_active_servers",
    "get_max_servers",
    "get_utilization",
    "get_basic_rt",
    "get_arrival_rate",
    "get_time",
];

fn read_number(client: &mut ProbeClient, command: &str) -> Result<f64, MonitorError> {
    let reply = client.command(command)?;
    match reply.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(MonitorError::ProtocolError {
            command: command.to_string(),
            reply,
        }),
    }
}

fn read_count(client: &mut ProbeClient, command: &str) -> Result<u32, MonitorError> {
    let v = read_number(client, command)?;
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(MonitorError::ProtocolError {
            command: command.to_string(),
            reply: v.to_string(),
        });
    }
    Ok(v as u32)
}

/// Polls the probes and returns the context for the window that just closed.
pub fn collect_context(client: &mut ProbeClient) -> Result<ContextSnapshot, MonitorError> {
    let dimmer = read_number(client, PROBE_ORDER[0])?;
    let active_servers = read_count(client, PROBE_ORDER[1])?;
    let max_servers = read_count(client, PROBE_ORDER[2])?;
    let utilization = read_number(client, PROBE_ORDER[3])?.clamp(0.0, 1.0);
    let avg_response_time = read_number(client, PROBE_ORDER[4])?;
    let arrival_rate = read_number(client, PROBE_ORDER[5])?;
    let sim_time = read_number(client, PROBE_ORDER[6])?;
    let ack = client.command("reset_window")?;
    if ack != "OK" {
        return Err(MonitorError::ProtocolError {
            command: "reset_window".into(),
            reply: ack,
        });
    }
    Ok(ContextSnapshot {
        dimmer,
        active_servers,
        max_servers,
        utilization,
        avg_response_time,
        arrival_rate,
        sim_time,
    })
}

/// [`collect_context`] followed by ingestion into `knowledge`.
pub fn observe(
    client: &mut ProbeClient,
    knowledge: &mut Knowledge,
) -> Result<ContextSnapshot, MonitorError> {
    let c = collect_context(client)?;
    knowledge.ingest_context(c.clone());
    Ok(c)
}
