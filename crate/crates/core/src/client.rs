//! Blocking client for the simulator's line protocol.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("connection closed by managed system")]
    Closed,
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// One connection to the managed system, shared by the monitor and the
/// executor. Commands are strictly request/reply.
pub struct ProbeClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    timeout: Duration,
    transcript: Vec<(String, String)>,
    keep_transcript: bool,
}

impl ProbeClient {
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self, ProbeError> {
        let stream = TcpStream::connect(addr)?;
        Self::from_stream(stream, timeout)
    }

    pub fn from_stream(stream: TcpStream, timeout: Duration) -> Result<Self, ProbeError> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        let writer = stream.try_clone()?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
            timeout,
            transcript: Vec::new(),
            keep_transcript: false,
        })
    }

    /// Keep every (command, reply) pair for later inspection.
    pub fn record_transcript(&mut self, on: bool) {
        self.keep_transcript = on;
    }

    pub fn transcript(&self) -> &[(String, String)] {
        &self.transcript
    }

    /// Sends one command line and returns the reply without its newline.
    pub fn command(&mut self, line: &str) -> Result<String, ProbeError> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut reply = String::new();
        match self.reader.read_line(&mut reply) {
            Ok(0) => return Err(ProbeError::Closed),
            Ok(_) => {}
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) =>
            {
                return Err(ProbeError::Timeout(self.timeout))
            }
            Err(e) => return Err(e.into()),
        }
        let reply = reply.trim_end_matches(['\n', '\r']).to_string();
        if self.keep_transcript {
            self.transcript.push((line.to_string(), reply.clone()));
        }
        Ok(reply)
    }
}
