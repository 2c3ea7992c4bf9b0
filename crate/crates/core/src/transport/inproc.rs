//! In-process links over mpsc channels.

use std::collections::HashMap;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::{Duration, Instant};

use super::endpoint::{Delivery, Endpoint, FrameSink, Link};
use super::frame::Role;
use crate::error::TransportError;
use crate::ring::Ring;

struct ChannelSink {
    tx: Sender<Delivery>,
    latency: Duration,
    peer: Role,
}

impl FrameSink for ChannelSink {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<(), TransportError> {
        let at = Instant::now() + self.latency;
        self.tx
            .send(Delivery { at, frame })
            .map_err(|_| TransportError::Disconnected(self.peer))
    }
}

/// Fully connected endpoints for A, B and C; every delivery is held back by
/// `latency`.
pub fn mesh(ring: Ring, latency: Duration, timeout: Duration) -> [Endpoint; 3] {
    let mut senders: HashMap<(Role, Role), Sender<Delivery>> = HashMap::new();
    let mut receivers: HashMap<(Role, Role), Receiver<Delivery>> = HashMap::new();
    for from in Role::ALL {
        for to in Role::ALL {
            if from != to {
                let (tx, rx) = channel();
                senders.insert((from, to), tx);
                receivers.insert((from, to), rx);
            }
        }
    }
    Role::ALL.map(|me| {
        let links = Role::ALL.map(|peer| {
            if peer == me {
                return None;
            }
            Some(Link {
                sink: Box::new(ChannelSink {
                    tx: senders.remove(&(me, peer)).unwrap(),
                    latency,
                    peer,
                }),
                inbox: receivers.remove(&(peer, me)).unwrap(),
            })
        });
        Endpoint::new(me, ring, links, timeout)
    })
}
