//! Two-node reference session with a frozen clock, shared by the golden
//! test and the acceptance run.

use std::io::{self, Write};
use std::os::unix::net::UnixStream;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread;

use oppdtn_core::store::StoreEntry;
use oppdtn_core::{Bundle, BundleId, EndpointId, RouterKind};
use oppdtn_live::{run_session, ManualClock, Node, NodeConfig, SessionOutcome};

pub const NOW_S: f64 = 1_700_000_000.0;

/// Writer that keeps a copy of everything written.
pub struct Tee<W> {
    pub inner: W,
    pub copy: Arc<Mutex<Vec<u8>>>,
}

impl<W: Write> Write for Tee<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.copy.lock().unwrap().extend_from_slice(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

pub fn eid(s: &str) -> EndpointId {
    EndpointId::parse(s).unwrap()
}

pub fn node(dir: &Path, name: &str, router: RouterKind, clock: &ManualClock) -> Node {
    let cfg = NodeConfig::new(
        eid(&format!("dtn://{name}")),
        router,
        dir.join(name).join("store"),
        dir.join(name).join("in"),
        dir.join(name).join("out"),
    );
    Node::open(cfg, Arc::new(clock.clone())).unwrap()
}

pub fn put(node: &Node, src: &str, creation_ms: u64, seq: u32, dest: &str, payload: Vec<u8>) -> BundleId {
    let id = BundleId {
        source: eid(src),
        creation_ms,
        seq,
    };
    let bundle = Bundle::with_payload(id.clone(), eid(dest), 86_400, payload);
    let mut st = node.lock();
    st.store
        .insert(StoreEntry { bundle, received_s: NOW_S, from: None }, NOW_S)
        .unwrap();
    id
}

pub struct Captured {
    pub a_to_b: Vec<u8>,
    pub b_to_a: Vec<u8>,
    pub a: SessionOutcome,
    pub b: SessionOutcome,
}

/// Runs a session between two nodes over a socket pair, capturing both
/// byte streams.
pub fn session(a: &Node, b: &Node) -> Captured {
    let (sa, sb) = UnixStream::pair().unwrap();
    let copy_a = Arc::new(Mutex::new(Vec::new()));
    let copy_b = Arc::new(Mutex::new(Vec::new()));
    let (ra, rb) = thread::scope(|s| {
        let wa = Tee { inner: sa.try_clone().unwrap(), copy: copy_a.clone() };
        let wb = Tee { inner: sb.try_clone().unwrap(), copy: copy_b.clone() };
        let ha = s.spawn(|| run_session(a, sa, wa, None));
        let hb = s.spawn(|| run_session(b, sb, wb, None));
        (ha.join().unwrap(), hb.join().unwrap())
    });
    let a_to_b = copy_a.lock().unwrap().clone();
    let b_to_a = copy_b.lock().unwrap().clone();
    Captured { a_to_b, b_to_a, a: ra.unwrap(), b: rb.unwrap() }
}

/// Epidemic nodes n01 {x for n02, y for n03} and n02 {z for n03}.
pub fn reference(dir: &Path) -> Captured {
    let clock = ManualClock::new(NOW_S);
    let a = node(dir, "n01", RouterKind::Epidemic, &clock);
    let b = node(dir, "n02", RouterKind::Epidemic, &clock);
    let payload = |seed: u8, len: usize| (0..len).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
    put(&a, "dtn://n01", 1_699_999_000_000, 0, "dtn://n02", payload(1, 1024));
    put(&a, "dtn://n01", 1_699_999_500_000, 1, "dtn://n03", payload(2, 300));
    put(&b, "dtn://n02", 1_699_999_200_000, 0, "dtn://n03", payload(3, 64));
    session(&a, &b)
}
