use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender};
use std::thread::JoinHandle;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EndpointId, Envelope, Frame, NetError};

/// An envelope after it crossed the wire, with the byte counts seen by each
/// side of the link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivered {
    pub envelope: Envelope,
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

/// Moves a batch of frames from senders to receivers. Delivery order is the
/// transport's business; byte counts must not depend on it.
pub trait Transport: Send {
    fn deliver(&mut self, batch: Vec<Envelope>) -> Result<Vec<Delivered>, NetError>;

    fn name(&self) -> &'static str;
}

/// Single-threaded transport. Every frame goes through the codec and the
/// batch is delivered in an order drawn from a seeded generator.
pub struct InProcess {
    rng: ChaCha8Rng,
}

impl InProcess {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Transport for InProcess {
    fn deliver(&mut self, mut batch: Vec<Envelope>) -> Result<Vec<Delivered>, NetError> {
        batch.shuffle(&mut self.rng);
        batch
            .into_iter()
            .map(|env| {
                let bytes = env.frame.encode()?;
                let (frame, used) = Frame::decode(&bytes)?;
                Ok(Delivered {
                    envelope: Envelope { frame, ..env },
                    bytes_sent: bytes.len() as u64,
                    bytes_received: used as u64,
                })
            })
            .collect()
    }

    fn name(&self) -> &'static str {
        "in_process"
    }
}

type Link = (EndpointId, EndpointId);
type Arrival = Result<(Link, Frame, usize), NetError>;

struct Connection {
    writer: TcpStream,
    // sequence numbers written but not yet read back, in stream order
    in_flight: VecDeque<u64>,
}

/// Loopback TCP transport. Each directed link gets its own connection with a
/// reader thread on the accepting side; frames arrive in whatever order the
/// readers produce them.
pub struct TcpLoopback {
    links: HashMap<Link, Connection>,
    arrivals_tx: Sender<Arrival>,
    arrivals: Receiver<Arrival>,
    readers: Vec<JoinHandle<()>>,
}

impl Default for TcpLoopback {
    fn default() -> Self {
        Self::new()
    }
}

impl TcpLoopback {
    pub fn new() -> Self {
        let (arrivals_tx, arrivals) = mpsc::channel();
        Self {
            links: HashMap::new(),
            arrivals_tx,
            arrivals,
            readers: Vec::new(),
        }
    }

    fn connect(&mut self, link: Link) -> Result<&mut Connection, NetError> {
        if !self.links.contains_key(&link) {
            let io = |e: std::io::Error| NetError::Io(e.to_string());
            let listener = TcpListener::bind("127.0.0.1:0").map_err(io)?;
            let writer = TcpStream::connect(listener.local_addr().map_err(io)?).map_err(io)?;
            writer.set_nodelay(true).map_err(io)?;
            let (mut reader, _) = listener.accept().map_err(io)?;
            let tx = self.arrivals_tx.clone();
            self.readers.push(std::thread::spawn(move || loop {
                match Frame::read_from(&mut reader) {
                    Ok(Some((frame, used))) => {
                        if tx.send(Ok((link, frame, used))).is_err() {
                            return;
                        }
                    }
                    Ok(None) => return,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                }
            }));
            self.links.insert(
                link,
                Connection {
                    writer,
                    in_flight: VecDeque::new(),
                },
            );
        }
        Ok(self.links.get_mut(&link).expect("inserted above"))
    }
}

impl Transport for TcpLoopback {
    fn deliver(&mut self, batch: Vec<Envelope>) -> Result<Vec<Delivered>, NetError> {
        let expected = batch.len();
        let mut written = HashMap::new();
        for env in batch {
            let bytes = env.frame.encode()?;
            let conn = self.connect((env.from, env.to))?;
            conn.writer
                .write_all(&bytes)
                .map_err(|e| NetError::Io(e.to_string()))?;
            conn.in_flight.push_back(env.seq);
            written.insert(env.seq, bytes.len() as u64);
        }
        let mut out = Vec::with_capacity(expected);
        for _ in 0..expected {
            let (link, frame, used) = self
                .arrivals
                .recv()
                .map_err(|e| NetError::Io(e.to_string()))??;
            let conn = self.links.get_mut(&link).expect("link was written");
            let seq = conn.in_flight.pop_front().expect("frame was written");
            out.push(Delivered {
                envelope: Envelope {
                    seq,
                    from: link.0,
                    to: link.1,
                    frame,
                },
                bytes_sent: written[&seq],
                bytes_received: used as u64,
            });
        }
        Ok(out)
    }

    fn name(&self) -> &'static str {
        "tcp_loopback"
    }
}

impl Drop for TcpLoopback {
    fn drop(&mut self) {
        // closing the writers ends every reader loop
        self.links.clear();
        for handle in self.readers.drain(..) {
            let _ = handle.join();
        }
    }
}
