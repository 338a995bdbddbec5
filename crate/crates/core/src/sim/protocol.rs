//! Line-oriented TCP probe/effector service in front of a [`Simulator`].
//!
//! One client at a time; every `\n`-terminated command gets exactly one
//! reply line: a decimal number, `OK`, or `error: <reason>`.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

use super::{Metric, Simulator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    Get(Metric),
    SetDimmer(f64),
    AddServer,
    RemoveServer,
    ResetWindow,
    Advance(f64),
}

impl Command {
    /// `Ok(None)` means the verb is unknown; `Err` carries a reply for a
    /// known verb with a bad argument.
    pub fn parse(line: &str) -> Result<Self, &'static str> {
        let mut parts = line.split_whitespace();
        let verb = parts.next().unwrap_or("");
        let arg = parts.next();
        let extra = parts.next().is_some();
        let number = |a: Option<&str>| -> Result<f64, &'static str> {
            match a.map(str::parse::<f64>) {
                Some(Ok(v)) if v.is_finite() && !extra => Ok(v),
                _ => Err("error: bad argument"),
            }
        };
        let bare = |cmd: Command| -> Result<Command, &'static str> {
            if arg.is_some() {
                Err("error: unexpected argument")
            } else {
                Ok(cmd)
            }
        };
        match verb {
            "set_dimmer" => number(arg).map(Command::SetDimmer),
            "advance" => match number(arg) {
                Ok(v) if v >= 0.0 => Ok(Command::Advance(v)),
                _ => Err("error: bad argument"),
            },
            "add_server" => bare(Command::AddServer),
            "remove_server" => bare(Command::RemoveServer),
            "reset_window" => bare(Command::ResetWindow),
            _ => match verb.strip_prefix("get_").map(str::parse::<Metric>) {
                Some(Ok(m)) => bare(Command::Get(m)),
                _ => Err("error: unknown command"),
            },
        }
    }
}

/// Owns a simulator and answers protocol commands against it.
pub struct SimServer {
    sim: Simulator,
}

impl SimServer {
    pub fn new(sim: Simulator) -> Self {
        Self { sim }
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn into_simulator(self) -> Simulator {
        self.sim
    }

    /// Executes one command line and returns the reply (without newline).
    pub fn handle_line(&mut self, line: &str) -> String {
        let cmd = match Command::parse(line) {
            Ok(cmd) => cmd,
            Err(reply) => return reply.to_string(),
        };
        let ack = |r: Result<(), super::EffectorError>| match r {
            Ok(()) => "OK".to_string(),
            Err(e) => format!("error: {e}"),
        };
        match cmd {
            Command::Get(m) => self.sim.read_probe(m).to_string(),
            Command::SetDimmer(v) => ack(self.sim.set_dimmer(v)),
            Command::AddServer => ack(self.sim.add_server()),
            Command::RemoveServer => ack(self.sim.remove_server()),
            Command::ResetWindow => {
                self.sim.reset_window();
                "OK".to_string()
            }
            Command::Advance(secs) => {
                self.sim.advance(secs);
                "OK".to_string()
            }
        }
    }
}

/// Serves a single client until it disconnects.
pub fn serve_connection(server: &mut SimServer, stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let line = line?;
        let reply = server.handle_line(line.trim_end_matches('\r'));
        writer.write_all(reply.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

/// Accepts clients one after another. With `max_clients = Some(n)` it
/// returns the server after `n` connections have closed.
pub fn serve(
    listener: &TcpListener,
    mut server: SimServer,
    max_clients: Option<usize>,
) -> io::Result<SimServer> {
    for (i, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        if let Err(e) = serve_connection(&mut server, stream) {
            log::warn!("client connection ended with error: {e}");
        }
        if max_clients.is_some_and(|n| i + 1 >= n) {
            break;
        }
    }
    Ok(server)
}
