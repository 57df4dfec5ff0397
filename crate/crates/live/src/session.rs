//! One bundle-exchange session over a byte stream.
//!
//! Each side writes HELLO, ROUTING_META, SUMMARY, REQUEST, the BUNDLE
//! frames the peer asked for, then BYE. REQUEST is always sent, possibly
//! empty, so the peer knows when it has seen every request. Writes go
//! through a writer thread so large transfers in both directions cannot
//! block each other.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::sync::mpsc;
use std::thread;

use log::{debug, info, warn};
use oppdtn_core::routing::dlife::DlifeError;
use oppdtn_core::routing::{plan_with_meta, RoutingMeta};
use oppdtn_core::{BundleId, EndpointId};
use thiserror::Error;

use crate::node::{Accepted, Node};
use crate::wire::{read_frame, write_frame, Frame, WireError};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("write failed: {0}")]
    Write(std::io::Error),
    #[error("protocol error: expected {expected}, got {got}")]
    Unexpected { expected: &'static str, got: &'static str },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("store write failed: {0}")]
    Store(std::io::Error),
}

impl SessionError {
    /// Errors that warrant holding the peer off.
    pub fn is_protocol(&self) -> bool {
        matches!(
            self,
            SessionError::Unexpected { .. }
                | SessionError::Protocol(_)
                | SessionError::Wire(WireError::BadLength(_) | WireError::UnknownType(_) | WireError::Malformed { .. })
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionOutcome {
    pub peer: Option<EndpointId>,
    /// Ids this side asked the peer for.
    pub requested: Vec<BundleId>,
    /// Ids the peer asked this side for.
    pub served: Vec<BundleId>,
    pub delivered: usize,
    pub stored: usize,
    pub refused: usize,
}

fn expect<T>(frame: Frame, expected: &'static str, pick: impl FnOnce(Frame) -> Option<T>) -> Result<T, SessionError> {
    let got = frame.name();
    pick(frame).ok_or(SessionError::Unexpected { expected, got })
}

/// Runs a session to completion. `expect_peer`, when set, must match the
/// peer's HELLO.
pub fn run_session<R: Read, W: Write + Send>(
    node: &Node,
    mut reader: R,
    writer: W,
    expect_peer: Option<&EndpointId>,
) -> Result<SessionOutcome, SessionError> {
    let (tx, rx) = mpsc::channel::<Frame>();
    thread::scope(|s| {
        let writer = s.spawn(move || -> std::io::Result<()> {
            let mut w = writer;
            for frame in rx {
                write_frame(&mut w, &frame)?;
                w.flush()?;
            }
            Ok(())
        });
        let result = exchange(node, &mut reader, &tx, expect_peer);
        drop(tx);
        let written = writer.join().unwrap_or_else(|_| Err(std::io::Error::other("writer panicked")));
        match (result, written) {
            (Ok(out), Ok(())) => Ok(out),
            (Err(e), _) => Err(e),
            (Ok(_), Err(e)) => Err(SessionError::Write(e)),
        }
    })
}

fn send(tx: &mpsc::Sender<Frame>, frame: Frame) -> Result<(), SessionError> {
    tx.send(frame)
        .map_err(|_| SessionError::Write(std::io::Error::other("writer stopped")))
}

fn exchange<R: Read>(
    node: &Node,
    reader: &mut R,
    tx: &mpsc::Sender<Frame>,
    expect_peer: Option<&EndpointId>,
) -> Result<SessionOutcome, SessionError> {
    let me = node.eid().clone();
    send(tx, Frame::Hello(me.clone()))?;
    let peer = expect(read_frame(reader)?, "HELLO", |f| match f {
        Frame::Hello(e) => Some(e),
        _ => None,
    })?;
    if peer == me {
        return Err(SessionError::Protocol("peer uses our own endpoint id".into()));
    }
    if let Some(want) = expect_peer {
        if *want != peer {
            return Err(SessionError::Protocol(format!("expected {want}, peer says {peer}")));
        }
    }

    let (my_meta, summary) = {
        let mut st = node.lock();
        let now = node.now_s();
        st.store.purge_expired(now);
        let meta = st.agent.begin_encounter(&peer, now).map_err(|e| match e {
            DlifeError::AlreadyOpen(_) => SessionError::Protocol(format!("already in contact with {peer}")),
            other => SessionError::Protocol(other.to_string()),
        })?;
        (meta, node.summary(&st, now))
    };
    let result = after_hello(node, reader, tx, &me, &peer, my_meta, summary);
    {
        let mut st = node.lock();
        let now = node.now_s();
        st.agent.advance_to(now);
        if let Err(e) = st.agent.contact_end(&peer, now) {
            warn!("closing contact with {peer}: {e}");
        }
    }
    result
}

fn after_hello<R: Read>(
    node: &Node,
    reader: &mut R,
    tx: &mpsc::Sender<Frame>,
    me: &EndpointId,
    peer: &EndpointId,
    my_meta: RoutingMeta<EndpointId>,
    summary: crate::wire::Summary,
) -> Result<SessionOutcome, SessionError> {
    let mut out = SessionOutcome {
        peer: Some(peer.clone()),
        ..Default::default()
    };
    send(tx, Frame::Meta(my_meta.clone()))?;
    send(tx, Frame::Summary(summary))?;

    let peer_meta = expect(read_frame(reader)?, "ROUTING_META", |f| match f {
        Frame::Meta(m) => Some(m),
        _ => None,
    })?;
    let peer_summary = expect(read_frame(reader)?, "SUMMARY", |f| match f {
        Frame::Summary(s) => Some(s),
        _ => None,
    })?;

    let wanted = {
        let mut st = node.lock();
        let now = node.now_s();
        st.agent.on_meta(peer, &peer_meta, now);
        let store = &st.store;
        plan_with_meta(Node::candidates(&peer_summary), &peer_meta, &my_meta, me, now, |id| {
            store.knows(id)
        })
    };
    out.requested = wanted.clone();
    send(tx, Frame::Request(wanted.clone()))?;

    let asked = expect(read_frame(reader)?, "REQUEST", |f| match f {
        Frame::Request(ids) => Some(ids),
        _ => None,
    })?;
    for id in asked {
        let bundle = {
            let st = node.lock();
            st.store.get(&id, node.now_s()).map(|e| e.bundle.clone())
        };
        match bundle {
            Some(b) => {
                send(tx, Frame::Bundle(b))?;
                out.served.push(id);
            }
            None => debug!("{peer} asked for {id}, which is no longer stored"),
        }
    }
    send(tx, Frame::Bye)?;

    let mut pending: BTreeSet<BundleId> = wanted.into_iter().collect();
    loop {
        match read_frame(reader)? {
            Frame::Bundle(b) => {
                if !pending.remove(&b.id) {
                    return Err(SessionError::Protocol(format!("unrequested bundle {}", b.id)));
                }
                let mut st = node.lock();
                match node.accept(&mut st, b, peer).map_err(SessionError::Store)? {
                    Accepted::Delivered => out.delivered += 1,
                    Accepted::Stored => out.stored += 1,
                    Accepted::Refused(_) => out.refused += 1,
                }
            }
            Frame::Bye => break,
            other => {
                return Err(SessionError::Unexpected {
                    expected: "BUNDLE or BYE",
                    got: other.name(),
                })
            }
        }
    }
    info!(
        "session with {peer}: requested {}, served {}, delivered {}, stored {}",
        out.requested.len(),
        out.served.len(),
        out.delivered,
        out.stored
    );
    Ok(out)
}
