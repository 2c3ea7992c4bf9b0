//! TCP links. Each role dials the roles with a higher index and accepts the
//! ones with a lower index, so A dials B and C, and B dials C. The first frame
//! on an accepted stream is the dialer's Hello, which identifies it.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver};
use std::time::{Duration, Instant};

use super::endpoint::{Delivery, Endpoint, FrameSink, Link};
use super::frame::{read_frame, write_frame, Kind, ProtocolMessage, Role};
use crate::error::{Error, Result, TransportError};
use crate::ring::Ring;
use crate::transport::Phase;

#[derive(Debug, Clone)]
pub struct TcpOptions {
    pub listen: Option<String>,
    pub peers: BTreeMap<Role, String>,
    pub latency: Duration,
    /// Bound on connection setup and on every blocking receive.
    pub timeout: Duration,
}

struct StreamSink(TcpStream);

impl FrameSink for StreamSink {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<(), TransportError> {
        write_frame(&mut self.0, &frame)
    }
}

fn spawn_reader(mut stream: TcpStream, first: Option<Vec<u8>>, latency: Duration) -> Receiver<Delivery> {
    let (tx, rx) = channel();
    std::thread::spawn(move || {
        if let Some(frame) = first {
            if tx
                .send(Delivery {
                    at: Instant::now() + latency,
                    frame,
                })
                .is_err()
            {
                return;
            }
        }
        while let Ok(frame) = read_frame(&mut stream) {
            let d = Delivery {
                at: Instant::now() + latency,
                frame,
            };
            if tx.send(d).is_err() {
                break;
            }
        }
    });
    rx
}

fn setup_err(e: impl Into<TransportError>) -> Error {
    Error::Transport {
        phase: Phase::Init,
        source: e.into(),
    }
}

fn dial(addr: &str, peer: Role, deadline: Instant) -> Result<TcpStream> {
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() < deadline => {
                log::debug!("dial {addr} for {peer:?}: {e}; retrying");
                std::thread::sleep(Duration::from_millis(50));
            }
            Err(_) => return Err(setup_err(TransportError::Timeout(peer))),
        }
    }
}

/// Connects this role to its peers and returns an endpoint ready for
/// [`Endpoint::handshake`].
pub fn connect(role: Role, ring: Ring, opts: &TcpOptions) -> Result<Endpoint> {
    let deadline = Instant::now() + opts.timeout;
    let mut links: [Option<Link>; 3] = Default::default();

    for peer in Role::ALL.into_iter().filter(|p| p.index() > role.index()) {
        let addr = opts
            .peers
            .get(&peer)
            .ok_or_else(|| Error::config("peer", format!("no address for role {}", peer.name())))?;
        let stream = dial(addr, peer, deadline)?;
        stream.set_nodelay(true).map_err(setup_err)?;
        let reader = stream.try_clone().map_err(setup_err)?;
        links[peer.index()] = Some(Link {
            sink: Box::new(StreamSink(stream)),
            inbox: spawn_reader(reader, None, opts.latency),
        });
    }

    let lower = role.index();
    if lower > 0 {
        let addr = opts
            .listen
            .as_deref()
            .ok_or_else(|| Error::config("listen", format!("role {} must listen", role.name())))?;
        let listener = TcpListener::bind(addr).map_err(setup_err)?;
        listener.set_nonblocking(true).map_err(setup_err)?;
        let mut accepted = 0;
        while accepted < lower {
            match listener.accept() {
                Ok((mut stream, _)) => {
                    stream.set_nonblocking(false).map_err(setup_err)?;
                    stream.set_nodelay(true).map_err(setup_err)?;
                    stream
                        .set_read_timeout(Some(deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1))))
                        .map_err(setup_err)?;
                    let first = match read_frame(&mut stream) {
                        Ok(f) => f,
                        // The dialer died before its hello; it may be restarted.
                        Err(TransportError::Io(e))
                            if matches!(
                                e.kind(),
                                ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted
                            ) =>
                        {
                            log::warn!("peer hung up before hello ({e}); still listening");
                            continue;
                        }
                        Err(e) => return Err(setup_err(e)),
                    };
                    stream.set_read_timeout(None).map_err(setup_err)?;
                    let hello = ProtocolMessage::decode(&first).map_err(setup_err)?;
                    if hello.kind != Kind::Hello || hello.sender.index() >= role.index() {
                        return Err(setup_err(TransportError::Malformed(format!(
                            "unexpected first frame {:?} from {:?}",
                            hello.kind, hello.sender
                        ))));
                    }
                    let peer = hello.sender;
                    if links[peer.index()].is_some() {
                        log::warn!("replacing earlier connection from {peer:?}");
                    } else {
                        accepted += 1;
                    }
                    let reader = stream.try_clone().map_err(setup_err)?;
                    links[peer.index()] = Some(Link {
                        sink: Box::new(StreamSink(stream)),
                        inbox: spawn_reader(reader, Some(first), opts.latency),
                    });
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        let missing = Role::ALL
                            .into_iter()
                            .find(|p| p.index() < lower && links[p.index()].is_none())
                            .unwrap_or(Role::A);
                        return Err(setup_err(TransportError::Timeout(missing)));
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => return Err(setup_err(e)),
            }
        }
    }
    Ok(Endpoint::new(role, ring, links, opts.timeout))
}
