//! Bounded resident set of decoded frames over a backing store.
//!
//! Every decoded frame held by the engine carries a [`Ticket`]; the tracker
//! counts live tickets and refuses to exceed the budget. Cached frames are
//! evicted least-recently-needed first and written back when modified.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernels::{FeatureMap, Frame, MaskFrame};

#[derive(Debug)]
struct Counter {
    budget: usize,
    current: AtomicUsize,
    peak: AtomicUsize,
}

/// Shared resident-frame counter.
#[derive(Clone, Debug)]
pub struct ResidencyTracker {
    inner: Arc<Counter>,
}

/// Proof that one decoded frame is accounted for; released on drop.
#[derive(Debug)]
pub struct Ticket {
    inner: Arc<Counter>,
}

impl Drop for Ticket {
    fn drop(&mut self) {
        self.inner.current.fetch_sub(1, Ordering::SeqCst);
    }
}

impl ResidencyTracker {
    pub fn new(budget: usize) -> Self {
        Self {
            inner: Arc::new(Counter {
                budget,
                current: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
            }),
        }
    }

    pub fn budget(&self) -> usize {
        self.inner.budget
    }

    pub fn current(&self) -> usize {
        self.inner.current.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.inner.peak.load(Ordering::SeqCst)
    }

    pub fn acquire(&self) -> Result<Ticket> {
        let c = &self.inner;
        let now = c.current.fetch_add(1, Ordering::SeqCst) + 1;
        if now > c.budget {
            c.current.fetch_sub(1, Ordering::SeqCst);
            return Err(Error::Budget {
                budget: c.budget,
                required: now,
            });
        }
        c.peak.fetch_max(now, Ordering::SeqCst);
        Ok(Ticket { inner: c.clone() })
    }
}

/// A decoded frame with its current hole mask.
#[derive(Debug)]
pub struct Resident {
    pub frame: Frame,
    pub mask: MaskFrame,
    _ticket: Ticket,
}

impl Resident {
    pub fn new(frame: Frame, mask: MaskFrame, ticket: Ticket) -> Self {
        Self {
            frame,
            mask,
            _ticket: ticket,
        }
    }
}

/// Where frames live while not resident.
#[derive(Debug)]
pub enum Backing {
    Memory(Vec<Option<(Frame, MaskFrame)>>),
    /// One raw file per frame in a temporary directory.
    Disk {
        dir: tempfile::TempDir,
        written: Vec<bool>,
    },
}

impl Backing {
    pub fn memory(n: usize) -> Self {
        Backing::Memory(vec![None; n])
    }

    pub fn disk(n: usize) -> Result<Self> {
        Ok(Backing::Disk {
            dir: tempfile::tempdir()?,
            written: vec![false; n],
        })
    }

    pub fn len(&self) -> usize {
        match self {
            Backing::Memory(v) => v.len(),
            Backing::Disk { written, .. } => written.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn path(dir: &tempfile::TempDir, i: usize) -> PathBuf {
        dir.path().join(format!("{i:06}.frame"))
    }

    pub fn write(&mut self, i: usize, frame: &Frame, mask: &MaskFrame) -> Result<()> {
        match self {
            Backing::Memory(v) => v[i] = Some((frame.clone(), mask.clone())),
            Backing::Disk { dir, written } => {
                let (h, w, c) = frame.dims();
                let mut buf = Vec::with_capacity(24 + 8 * frame.data().len() + h * w);
                for d in [h, w, c] {
                    buf.extend_from_slice(&(d as u64).to_le_bytes());
                }
                for v in frame.data() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                buf.extend(mask.data().iter().map(|&m| m as u8));
                std::fs::File::create(Self::path(dir, i))?.write_all(&buf)?;
                written[i] = true;
            }
        }
        Ok(())
    }

    pub fn read(&self, i: usize) -> Result<(Frame, MaskFrame)> {
        let missing = || Error::InvalidArgument(format!("frame {i} was never stored"));
        match self {
            Backing::Memory(v) => v[i].clone().ok_or_else(missing),
            Backing::Disk { dir, written } => {
                if !written[i] {
                    return Err(missing());
                }
                let mut buf = Vec::new();
                std::fs::File::open(Self::path(dir, i))?.read_to_end(&mut buf)?;
                let word = |k: usize| u64::from_le_bytes(buf[8 * k..8 * k + 8].try_into().expect("8 bytes")) as usize;
                let (h, w, c) = (word(0), word(1), word(2));
                let n = h * w * c;
                let data = buf[24..24 + 8 * n]
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                    .collect();
                let mask = buf[24 + 8 * n..].iter().map(|&b| b != 0).collect();
                Ok((FeatureMap::new(h, w, c, data)?, MaskFrame::new(h, w, mask)?))
            }
        }
    }
}

struct Cached {
    resident: Resident,
    dirty: bool,
    last_needed: u64,
}

/// Backing store plus a budgeted cache of resident frames.
pub struct FrameStore {
    backing: Backing,
    cache: BTreeMap<usize, Cached>,
    tracker: ResidencyTracker,
    clock: u64,
}

impl FrameStore {
    pub fn new(backing: Backing, tracker: ResidencyTracker) -> Self {
        Self {
            backing,
            cache: BTreeMap::new(),
            tracker,
            clock: 0,
        }
    }

    pub fn tracker(&self) -> &ResidencyTracker {
        &self.tracker
    }

    pub fn len(&self) -> usize {
        self.backing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backing.is_empty()
    }

    pub fn resident_indices(&self) -> Vec<usize> {
        self.cache.keys().copied().collect()
    }

    /// Stores a frame directly in the backing store.
    pub fn store(&mut self, i: usize, frame: &Frame, mask: &MaskFrame) -> Result<()> {
        if let Some(c) = self.cache.remove(&i) {
            drop(c);
        }
        self.backing.write(i, frame, mask)
    }

    fn evict(&mut self, i: usize) -> Result<()> {
        if let Some(c) = self.cache.remove(&i) {
            if c.dirty {
                self.backing.write(i, &c.resident.frame, &c.resident.mask)?;
            }
        }
        Ok(())
    }

    /// Evicts every cached frame outside `keep`.
    pub fn retain(&mut self, keep: impl Fn(usize) -> bool) -> Result<()> {
        let out: Vec<usize> = self.cache.keys().copied().filter(|&i| !keep(i)).collect();
        for i in out {
            self.evict(i)?;
        }
        Ok(())
    }

    /// Acquires a ticket, evicting the least recently needed cached frame if
    /// the budget is exhausted.
    fn ticket(&mut self) -> Result<Ticket> {
        loop {
            match self.tracker.acquire() {
                Ok(t) => return Ok(t),
                Err(e) => {
                    let victim = self.cache.iter().min_by_key(|(_, c)| c.last_needed).map(|(&i, _)| i);
                    match victim {
                        Some(i) => self.evict(i)?,
                        None => return Err(e),
                    }
                }
            }
        }
    }

    /// Moves frame `i` out of the cache, or loads it from the backing store.
    pub fn take(&mut self, i: usize) -> Result<Resident> {
        self.clock += 1;
        if let Some(c) = self.cache.remove(&i) {
            if c.dirty {
                // Taking hands ownership to the caller; keep the backing current.
                self.backing.write(i, &c.resident.frame, &c.resident.mask)?;
            }
            return Ok(c.resident);
        }
        let ticket = self.ticket()?;
        let (frame, mask) = self.backing.read(i)?;
        Ok(Resident::new(frame, mask, ticket))
    }

    /// Returns a frame to the cache; `dirty` frames are written back on
    /// eviction.
    pub fn put(&mut self, i: usize, resident: Resident, dirty: bool) {
        self.clock += 1;
        self.cache.insert(
            i,
            Cached {
                resident,
                dirty,
                last_needed: self.clock,
            },
        );
    }

    /// Writes every dirty cached frame back and empties the cache.
    pub fn flush(&mut self) -> Result<()> {
        self.retain(|_| false)
    }

    /// A fresh ticket for a transient frame (decoding, compositing).
    pub fn transient(&mut self) -> Result<Ticket> {
        self.ticket()
    }
}
