//! Store snapshot: magic, next bundle sequence number, delivered ids,
//! outbox names already turned into bundles, then the stored bundles as
//! concatenated BUNDLE frames. Written whole via temp file and rename.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use oppdtn_core::{Bundle, BundleId};
use thiserror::Error;

use crate::wire::{self, put_id, Cursor, Frame, WireError};

const MAGIC: &[u8; 8] = b"OPPDTNS1";
pub const SNAPSHOT_FILE: &str = "store.snapshot";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Snapshot {
    pub next_seq: u32,
    pub delivered: Vec<BundleId>,
    pub spooled: Vec<String>,
    pub bundles: Vec<Bundle>,
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a store snapshot")]
    BadMagic,
    #[error("corrupt snapshot: {0}")]
    Corrupt(#[from] WireError),
}

impl Snapshot {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&self.next_seq.to_be_bytes());
        out.extend_from_slice(&(self.delivered.len() as u32).to_be_bytes());
        for id in &self.delivered {
            put_id(&mut out, id);
        }
        out.extend_from_slice(&(self.spooled.len() as u32).to_be_bytes());
        for name in &self.spooled {
            out.extend_from_slice(&(name.len() as u16).to_be_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        for b in &self.bundles {
            out.extend_from_slice(&Frame::Bundle(b.clone()).encode());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Snapshot, PersistError> {
        let rest = bytes.strip_prefix(MAGIC.as_slice()).ok_or(PersistError::BadMagic)?;
        let mut c = Cursor { buf: rest, frame: "snapshot" };
        let next_seq = c.u32()?;
        let n = c.u32()?;
        let mut delivered = Vec::new();
        for _ in 0..n {
            delivered.push(c.id()?);
        }
        let n = c.u32()?;
        let mut spooled = Vec::new();
        for _ in 0..n {
            spooled.push(c.string()?);
        }
        let mut bundles = Vec::new();
        for frame in wire::decode_all(c.buf)? {
            match frame {
                Frame::Bundle(b) => bundles.push(b),
                other => {
                    return Err(WireError::Malformed {
                        frame: other.name(),
                        reason: "unexpected frame in snapshot",
                    }
                    .into())
                }
            }
        }
        Ok(Snapshot { next_seq, delivered, spooled, bundles })
    }

    /// A missing file is an empty snapshot.
    pub fn load(dir: &Path) -> Result<Snapshot, PersistError> {
        match fs::read(dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => Snapshot::decode(&bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Snapshot::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, dir: &Path) -> io::Result<()> {
        write_atomic(&dir.join(SNAPSHOT_FILE), &self.encode())
    }
}

/// Writes `bytes` to a sibling temp file, syncs it and renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
