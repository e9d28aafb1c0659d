//! Blocking protocol client, used by the tests and scripted sessions.

use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Result, ServiceError};
use crate::protocol::{read_frame, write_frame, ClientMessage, Envelope, ServerMessage, StateFrame};

pub struct Client {
    writer: BufWriter<TcpStream>,
    stream: TcpStream,
    seq: u64,
    inbox: mpsc::Receiver<Envelope<ServerMessage>>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let (tx, inbox) = mpsc::channel();
        let mut r = BufReader::new(stream.try_clone()?);
        thread::spawn(move || {
            while let Ok(Some(raw)) = read_frame(&mut r) {
                match serde_json::from_slice(&raw) {
                    Ok(msg) => {
                        if tx.send(msg).is_err() {
                            break;
                        }
                    }
                    Err(e) => log::warn!("unparseable server frame: {e}"),
                }
            }
        });
        Ok(Self {
            writer: BufWriter::new(stream.try_clone()?),
            stream,
            seq: 0,
            inbox,
        })
    }

    /// Sends a message and returns its sequence number.
    pub fn send(&mut self, body: ClientMessage) -> Result<u64> {
        self.seq += 1;
        write_frame(&mut self.writer, &Envelope { seq: self.seq, body })?;
        Ok(self.seq)
    }

    /// Sends an arbitrary payload inside a valid length prefix.
    pub fn send_raw(&mut self, payload: &[u8]) -> Result<()> {
        let len = u32::try_from(payload.len()).map_err(|_| ServiceError::Protocol("payload too large".into()))?;
        self.writer.write_all(&len.to_le_bytes())?;
        self.writer.write_all(payload)?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<Envelope<ServerMessage>> {
        self.inbox.recv_timeout(timeout).map_err(|_| ServiceError::Timeout("server message"))
    }

    /// Waits for the first message matching `pred`, discarding others.
    pub fn wait_for(
        &self,
        timeout: Duration,
        mut pred: impl FnMut(&ServerMessage) -> bool,
    ) -> Result<Envelope<ServerMessage>> {
        let end = Instant::now() + timeout;
        loop {
            let left = end.saturating_duration_since(Instant::now());
            let msg = self.recv_timeout(left)?;
            if pred(&msg.body) {
                return Ok(msg);
            }
        }
    }

    /// Waits for the reply to `seq`: `Ok(operator)` on ack, an error on fault.
    pub fn wait_ack(&self, seq: u64, timeout: Duration) -> Result<bool> {
        let msg = self.wait_for(timeout, |m| match m {
            ServerMessage::Ack { ack_seq, .. } => *ack_seq == seq,
            ServerMessage::Fault { ack_seq, .. } => *ack_seq == Some(seq),
            ServerMessage::State(_) => false,
        })?;
        match msg.body {
            ServerMessage::Ack { operator, .. } => Ok(operator),
            ServerMessage::Fault { code, message, .. } => Err(ServiceError::Protocol(format!("{code:?}: {message}"))),
            ServerMessage::State(_) => unreachable!(),
        }
    }

    /// Collects state frames for `duration`, dropping other messages.
    pub fn states_for(&self, duration: Duration) -> Vec<StateFrame> {
        let end = Instant::now() + duration;
        let mut out = Vec::new();
        while let Ok(msg) = self.recv_timeout(end.saturating_duration_since(Instant::now())) {
            if let ServerMessage::State(s) = msg.body {
                out.push(s);
            }
        }
        out
    }

    /// Drops everything received so far.
    pub fn drain(&self) {
        while self.inbox.try_recv().is_ok() {}
    }
}

impl Drop for Client {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}
