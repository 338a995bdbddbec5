//! Sends accepted decisions to the managed system.

use thiserror::Error;

use crate::client::{ProbeClient, ProbeError};
use crate::decision::{quantize_dimmer, Action, AdaptationDecision};

#[derive(Debug, Error)]
pub enum ExecuteError {
    #[error("effector `{command}` rejected: {reply}")]
    EffectorRejected { command: String, reply: String },
    #[error("effector `{0}` timed out")]
    EffectorTimeout(String),
    #[error("effector transport: {0}")]
    Transport(ProbeError),
}

/// Wire command for `action`, or `None` for do-nothing.
pub fn effector_command(action: &Action) -> Option<String> {
    match action {
        Action::SetDimmer(v) => Some(format!("set_dimmer {}", quantize_dimmer(*v))),
        Action::AddServer => Some("add_server".into()),
        Action::RemoveServer => Some("remove_server".into()),
        Action::DoNothing => None,
    }
}

/// Issues the decision's effector command and waits for `OK`. Returns the
/// command sent, if any.
pub fn execute(
    ad: &AdaptationDecision,
    client: &mut ProbeClient,
) -> Result<Option<String>, ExecuteError> {
    let Some(command) = effector_command(&ad.action) else {
        return Ok(None);
    };
    let reply = client.command(&command).map_err(|e| match e {
        ProbeError::Timeout(_) => ExecuteError::EffectorTimeout(command.clone()),
        other => ExecuteError::Transport(other),
    })?;
    if reply != "OK" {
        return Err(ExecuteError::EffectorRejected { command, reply });
    }
    Ok(Some(command))
}
