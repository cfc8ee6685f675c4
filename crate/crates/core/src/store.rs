//! Page reads against the index file.
//!
//! A [`PageStore`] owns the file handle. Each query opens its own
//! [`IoContext`], submits batches of [`ReadRequest`]s and polls for
//! [`ReadCompletion`]s. Two latency models exist:
//!
//! * passthrough: reads are served by background I/O threads and complete in
//!   whatever order the device returns them; time is the wall clock.
//! * synthetic: reads are performed immediately but their completion is
//!   scheduled on a per-context virtual clock, with service times drawn from
//!   a seeded lognormal body plus a rare heavy tail. Identical seeds yield
//!   identical completion order and timing.

use std::alloc::{alloc_zeroed, dealloc, Layout};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::{File, OpenOptions};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::layout::{IndexPrefix, PAGE_ALIGN};

pub const DEFAULT_IN_FLIGHT_LIMIT: usize = 64;
pub const DEFAULT_IO_THREADS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadRequest {
    pub id: u32,
    pub tag: u64,
}

impl ReadRequest {
    pub fn new(id: u32, tag: u64) -> Self {
        Self { id, tag }
    }
}

#[derive(Debug, Clone)]
pub struct ReadCompletion {
    pub tag: u64,
    pub id: u32,
    pub offset: u64,
    pub buffer: Vec<u8>,
    pub service_time: Duration,
}

/// Parameters of the synthetic service-time distribution.
///
/// Service time is `LogNormal(mu, sigma)`, multiplied by `tail_multiplier`
/// with probability `p_tail`. `mu` and the multiplier are solved so that the
/// mixture's median is `median` and its 99.9th percentile is
/// `tail_ratio * median`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticLatency {
    pub median: Duration,
    pub tail_ratio: f64,
    pub p_tail: f64,
    pub sigma: f64,
    /// Virtual CPU time charged by the search engine per processed page.
    pub compute_per_page: Duration,
    pub seed: u64,
}

impl Default for SyntheticLatency {
    fn default() -> Self {
        Self {
            median: Duration::from_nanos(185_000),
            tail_ratio: 10.8,
            p_tail: 0.01,
            sigma: 0.35,
            compute_per_page: Duration::from_micros(4),
            seed: 0,
        }
    }
}

impl SyntheticLatency {
    pub fn validate(&self) -> Result<()> {
        if self.median.is_zero() {
            return Err(Error::invalid("synthetic median latency must be positive"));
        }
        if !(self.tail_ratio > 1.0) || !(self.p_tail > 0.0 && self.p_tail < 0.5) || !(self.sigma > 0.0) {
            return Err(Error::invalid(format!(
                "synthetic latency needs tail_ratio > 1, 0 < p_tail < 0.5, sigma > 0 (got {}, {}, {})",
                self.tail_ratio, self.p_tail, self.sigma
            )));
        }
        Ok(())
    }

    /// Solved `(mu, tail_multiplier)`, with `mu` in log-seconds.
    pub fn calibrate(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let std = Normal::new(0.0, 1.0).expect("standard normal");
        let (p, s) = (self.p_tail, self.sigma);
        let ln_med = self.median.as_secs_f64().ln();
        let ln_hi = ln_med + self.tail_ratio.ln();
        let cdf = |x: f64, mu: f64, ln_mult: f64| {
            (1.0 - p) * std.cdf((x - mu) / s) + p * std.cdf((x - mu - ln_mult) / s)
        };
        // For a fixed multiplier, the mu that puts the median in place.
        let solve_mu = |ln_mult: f64| bisect(ln_med - 10.0 * s, ln_med + 1.0, |mu| cdf(ln_med, mu, ln_mult) - 0.5);
        let hi_quantile = |ln_mult: f64| cdf(ln_hi, solve_mu(ln_mult), ln_mult) - 0.999;
        if hi_quantile(0.0) <= 0.0 {
            return Err(Error::invalid(format!(
                "sigma {s} alone already exceeds tail ratio {}",
                self.tail_ratio
            )));
        }
        let ln_mult = bisect(0.0, self.tail_ratio.ln() + 20.0 * s, hi_quantile);
        Ok((solve_mu(ln_mult), ln_mult.exp()))
    }
}

/// Root of a function that is positive at `lo` and negative at `hi`
/// (or the reverse); 200 halvings.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LatencyModel {
    #[default]
    Passthrough,
    Synthetic(SyntheticLatency),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoreOptions {
    pub latency: LatencyModel,
    pub in_flight_limit: usize,
    pub io_threads: usize,
    /// Attempt unbuffered reads; falls back to buffered if unsupported.
    pub direct_io: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self {
            latency: LatencyModel::Passthrough,
            in_flight_limit: DEFAULT_IN_FLIGHT_LIMIT,
            io_threads: DEFAULT_IO_THREADS,
            direct_io: true,
        }
    }
}

/// Heap buffer aligned for unbuffered reads.
struct AlignedBuf {
    ptr: *mut u8,
    layout: Layout,
}

// SAFETY: the buffer is uniquely owned.
unsafe impl Send for AlignedBuf {}

impl AlignedBuf {
    fn new(len: usize) -> Self {
        let layout = Layout::from_size_align(len.max(1), PAGE_ALIGN).expect("valid layout");
        // SAFETY: non-zero size.
        let ptr = unsafe { alloc_zeroed(layout) };
        assert!(!ptr.is_null(), "allocation of {len} bytes failed");
        Self { ptr, layout }
    }

    fn as_mut_slice(&mut self) -> &mut [u8] {
        // SAFETY: ptr is valid for layout.size() bytes and uniquely borrowed.
        unsafe { std::slice::from_raw_parts_mut(self.ptr, self.layout.size()) }
    }
}

impl Drop for AlignedBuf {
    fn drop(&mut self) {
        // SAFETY: allocated with the same layout.
        unsafe { dealloc(self.ptr, self.layout) }
    }
}

struct FileReader {
    file: File,
    direct: bool,
    page_size: usize,
}

impl FileReader {
    fn read_page(&self, offset: u64, scratch: &mut Option<AlignedBuf>) -> Result<Vec<u8>> {
        use std::os::unix::fs::FileExt;
        if self.direct {
            let buf = scratch.get_or_insert_with(|| AlignedBuf::new(self.page_size));
            let s = buf.as_mut_slice();
            self.file.read_exact_at(s, offset)?;
            Ok(s.to_vec())
        } else {
            let mut v = vec![0u8; self.page_size];
            self.file.read_exact_at(&mut v, offset)?;
            Ok(v)
        }
    }
}

#[cfg(target_os = "linux")]
fn open_direct(path: &Path) -> Option<File> {
    use std::os::unix::fs::OpenOptionsExt;
    OpenOptions::new().read(true).custom_flags(libc::O_DIRECT).open(path).ok()
}

#[cfg(not(target_os = "linux"))]
fn open_direct(_path: &Path) -> Option<File> {
    None
}

struct Job {
    id: u32,
    tag: u64,
    offset: u64,
    submitted: Instant,
    reply: Sender<Result<ReadCompletion>>,
}

/// Read-only access to the node pages of one index file.
pub struct PageStore {
    reader: Arc<FileReader>,
    data_offset: u64,
    page_size: usize,
    count: usize,
    options: StoreOptions,
    calibration: Option<(f64, f64)>,
    closed: AtomicBool,
    jobs: Option<Sender<Job>>,
    workers: Vec<JoinHandle<()>>,
}

impl std::fmt::Debug for PageStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PageStore")
            .field("count", &self.count)
            .field("page_size", &self.page_size)
            .field("data_offset", &self.data_offset)
            .field("direct_io", &self.reader.direct)
            .field("options", &self.options)
            .finish()
    }
}

impl PageStore {
    pub fn open_index(path: impl AsRef<Path>, prefix: &IndexPrefix, options: StoreOptions) -> Result<Self> {
        Self::open(path, prefix.data_offset, prefix.header.page_size, prefix.header.count, options)
    }

    /// Pages live at `data_offset + id * page_size`, each `page_size` bytes.
    pub fn open(
        path: impl AsRef<Path>,
        data_offset: u64,
        page_size: usize,
        count: usize,
        options: StoreOptions,
    ) -> Result<Self> {
        let path = path.as_ref();
        if page_size == 0 || options.in_flight_limit == 0 {
            return Err(Error::invalid("page size and in-flight limit must be positive"));
        }
        let calibration = match options.latency {
            LatencyModel::Synthetic(s) => Some(s.calibrate()?),
            LatencyModel::Passthrough => None,
        };
        let aligned = page_size % PAGE_ALIGN == 0 && data_offset % PAGE_ALIGN as u64 == 0;
        let mut reader = None;
        if options.direct_io && aligned {
            if let Some(file) = open_direct(path) {
                let r = FileReader {
                    file,
                    direct: true,
                    page_size,
                };
                // Some filesystems accept the flag at open time but reject reads.
                if count == 0 || r.read_page(data_offset, &mut None).is_ok() {
                    reader = Some(r);
                }
            }
        }
        let reader = Arc::new(match reader {
            Some(r) => r,
            None => FileReader {
                file: File::open(path)?,
                direct: false,
                page_size,
            },
        });

        let mut workers = Vec::new();
        let mut jobs = None;
        if matches!(options.latency, LatencyModel::Passthrough) {
            let (tx, rx) = crossbeam_channel::unbounded::<Job>();
            for _ in 0..options.io_threads.max(1) {
                let rx = rx.clone();
                let reader = Arc::clone(&reader);
                workers.push(std::thread::spawn(move || {
                    let mut scratch = None;
                    for job in rx {
                        let res = reader.read_page(job.offset, &mut scratch).map(|buffer| ReadCompletion {
                            tag: job.tag,
                            id: job.id,
                            offset: job.offset,
                            buffer,
                            service_time: job.submitted.elapsed(),
                        });
                        let _ = job.reply.send(res);
                    }
                }));
            }
            jobs = Some(tx);
        }

        Ok(Self {
            reader,
            data_offset,
            page_size,
            count,
            options,
            calibration,
            closed: AtomicBool::new(false),
            jobs,
            workers,
        })
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn options(&self) -> &StoreOptions {
        &self.options
    }

    /// Whether reads bypass the OS page cache.
    pub fn direct_io(&self) -> bool {
        self.reader.direct
    }

    pub fn offset_of(&self, id: u32) -> Result<u64> {
        if id as usize >= self.count {
            return Err(Error::NodeOutOfRange { id, count: self.count });
        }
        Ok(self.data_offset + id as u64 * self.page_size as u64)
    }

    /// Blocking read of one page.
    pub fn read_sync(&self, id: u32) -> Result<Vec<u8>> {
        self.check_open()?;
        let offset = self.offset_of(id)?;
        self.reader.read_page(offset, &mut None)
    }

    /// Subsequent submissions and synchronous reads fail with `Closed`.
    pub fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }

    fn check_open(&self) -> Result<()> {
        if self.is_closed() {
            Err(Error::Closed)
        } else {
            Ok(())
        }
    }

    /// A per-query submission/completion context. `seed` perturbs the
    /// synthetic service-time stream; it is ignored in passthrough mode.
    pub fn context(&self, seed: u64) -> IoContext<'_> {
        let backend = match (self.options.latency, self.calibration) {
            (LatencyModel::Synthetic(s), Some((mu, mult))) => Backend::Virtual(VirtualClock {
                now: Duration::ZERO,
                rng: ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(seed)),
                body: LogNormal::new(mu, s.sigma).expect("validated sigma"),
                p_tail: s.p_tail,
                tail_multiplier: mult,
                compute_per_page: s.compute_per_page,
                pending: BinaryHeap::new(),
                seq: 0,
                scratch: None,
            }),
            _ => {
                let (tx, rx) = crossbeam_channel::unbounded();
                Backend::Threaded {
                    reply: tx,
                    done: rx,
                    started: Instant::now(),
                }
            }
        };
        IoContext {
            store: self,
            in_flight: 0,
            backend,
        }
    }
}

impl Drop for PageStore {
    fn drop(&mut self) {
        self.jobs.take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

struct Scheduled {
    at: Duration,
    seq: u64,
    completion: ReadCompletion,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

struct VirtualClock {
    now: Duration,
    rng: ChaCha8Rng,
    body: LogNormal<f64>,
    p_tail: f64,
    tail_multiplier: f64,
    compute_per_page: Duration,
    pending: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    scratch: Option<AlignedBuf>,
}

impl VirtualClock {
    fn sample(&mut self) -> Duration {
        let mut t = self.body.sample(&mut self.rng);
        if self.rng.random::<f64>() < self.p_tail {
            t *= self.tail_multiplier;
        }
        Duration::from_secs_f64(t.max(0.0))
    }

    fn drain_due(&mut self, out: &mut Vec<ReadCompletion>) {
        while let Some(Reverse(top)) = self.pending.peek() {
            if top.at > self.now {
                break;
            }
            let Reverse(s) = self.pending.pop().expect("peeked");
            out.push(s.completion);
        }
    }
}

enum Backend {
    Threaded {
        reply: Sender<Result<ReadCompletion>>,
        done: Receiver<Result<ReadCompletion>>,
        started: Instant,
    },
    Virtual(VirtualClock),
}

/// Submission queue and completion stream for one query.
pub struct IoContext<'s> {
    store: &'s PageStore,
    in_flight: usize,
    backend: Backend,
}

impl IoContext<'_> {
    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn limit(&self) -> usize {
        self.store.options.in_flight_limit
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self.backend, Backend::Virtual(_))
    }

    /// Time since the context opened: virtual time for the synthetic model,
    /// wall time otherwise.
    pub fn elapsed(&self) -> Duration {
        match &self.backend {
            Backend::Virtual(v) => v.now,
            Backend::Threaded { started, .. } => started.elapsed(),
        }
    }

    /// Advances the virtual clock by `dt`; no-op on the wall clock.
    pub fn advance(&mut self, dt: Duration) {
        if let Backend::Virtual(v) = &mut self.backend {
            v.now += dt;
        }
    }

    /// Virtual CPU cost of processing one page (zero on the wall clock).
    pub fn compute_per_page(&self) -> Duration {
        match &self.backend {
            Backend::Virtual(v) => v.compute_per_page,
            Backend::Threaded { .. } => Duration::ZERO,
        }
    }

    pub fn submit(&mut self, batch: &[ReadRequest]) -> Result<()> {
        self.store.check_open()?;
        let requested = self.in_flight + batch.len();
        if requested > self.limit() {
            return Err(Error::InFlightLimit {
                limit: self.limit(),
                requested,
            });
        }
        let offsets = batch
            .iter()
            .map(|r| self.store.offset_of(r.id))
            .collect::<Result<Vec<_>>>()?;
        for (req, offset) in batch.iter().zip(offsets) {
            match &mut self.backend {
                Backend::Threaded { reply, .. } => {
                    let job = Job {
                        id: req.id,
                        tag: req.tag,
                        offset,
                        submitted: Instant::now(),
                        reply: reply.clone(),
                    };
                    self.store
                        .jobs
                        .as_ref()
                        .ok_or(Error::Closed)?
                        .send(job)
                        .map_err(|_| Error::Closed)?;
                }
                Backend::Virtual(v) => {
                    let buffer = self.store.reader.read_page(offset, &mut v.scratch)?;
                    let service_time = v.sample();
                    let seq = v.seq;
                    v.seq += 1;
                    v.pending.push(Reverse(Scheduled {
                        at: v.now + service_time,
                        seq,
                        completion: ReadCompletion {
                            tag: req.tag,
                            id: req.id,
                            offset,
                            buffer,
                            service_time,
                        },
                    }));
                }
            }
            self.in_flight += 1;
        }
        Ok(())
    }

    /// Completions available now, without blocking.
    pub fn poll(&mut self) -> Result<Vec<ReadCompletion>> {
        let mut out = Vec::new();
        match &mut self.backend {
            Backend::Threaded { done, .. } => {
                while let Ok(c) = done.try_recv() {
                    out.push(c?);
                }
            }
            Backend::Virtual(v) => v.drain_due(&mut out),
        }
        self.in_flight -= out.len();
        Ok(out)
    }

    /// Blocks until at least one completion is available (advancing the
    /// virtual clock to the next completion time). Returns empty only when
    /// nothing is in flight.
    pub fn wait(&mut self) -> Result<Vec<ReadCompletion>> {
        if self.in_flight == 0 {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        match &mut self.backend {
            Backend::Threaded { done, .. } => {
                let first = done.recv().map_err(|_| Error::Closed)?;
                out.push(first?);
                while let Ok(c) = done.try_recv() {
                    out.push(c?);
                }
            }
            Backend::Virtual(v) => {
                if let Some(Reverse(top)) = v.pending.peek() {
                    v.now = v.now.max(top.at);
                }
                v.drain_due(&mut out);
            }
        }
        self.in_flight -= out.len();
        Ok(out)
    }

    /// Waits for every in-flight request.
    pub fn drain(&mut self) -> Result<Vec<ReadCompletion>> {
        let mut out = Vec::new();
        while self.in_flight > 0 {
            out.extend(self.wait()?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn page_file(count: usize, page: usize, offset: usize) -> (tempfile::NamedTempFile, Vec<u8>) {
        let mut bytes = vec![0u8; offset + count * page];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = (i.wrapping_mul(2654435761) >> 13) as u8;
        }
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&bytes).unwrap();
        f.flush().unwrap();
        (f, bytes)
    }

    fn synthetic(seed: u64) -> StoreOptions {
        StoreOptions {
            latency: LatencyModel::Synthetic(SyntheticLatency {
                seed,
                ..Default::default()
            }),
            ..Default::default()
        }
    }

    #[test]
    fn submit_poll_exactly_once() {
        let (f, bytes) = page_file(10, 4096, 4096);
        for opts in [StoreOptions::default(), synthetic(1)] {
            let store = PageStore::open(f.path(), 4096, 4096, 10, opts).unwrap();
            let mut ctx = store.context(0);
            let reqs: Vec<_> = (0..4).map(|i| ReadRequest::new(i * 2, 100 + i as u64)).collect();
            ctx.submit(&reqs).unwrap();
            let mut got = ctx.drain().unwrap();
            got.sort_by_key(|c| c.tag);
            assert_eq!(got.iter().map(|c| c.tag).collect::<Vec<_>>(), vec![100, 101, 102, 103]);
            for c in &got {
                let o = 4096 + c.id as usize * 4096;
                assert_eq!(c.buffer, &bytes[o..o + 4096]);
            }
            assert!(ctx.poll().unwrap().is_empty());
            ctx.submit(&[]).unwrap();
            assert!(ctx.wait().unwrap().is_empty());
        }
    }

    #[test]
    fn synthetic_order_is_deterministic() {
        let (f, _) = page_file(64, 4096, 0);
        let order = |seed| {
            let store = PageStore::open(f.path(), 0, 4096, 64, synthetic(seed)).unwrap();
            let mut ctx = store.context(3);
            let reqs: Vec<_> = (0..64).map(|i| ReadRequest::new(i, i as u64)).collect();
            ctx.submit(&reqs).unwrap();
            let got = ctx.drain().unwrap();
            (got.iter().map(|c| c.tag).collect::<Vec<_>>(), ctx.elapsed())
        };
        assert_eq!(order(5), order(5));
        assert_ne!(order(5).0, order(6).0);
    }

    #[test]
    fn errors() {
        let (f, _) = page_file(4, 4096, 0);
        let store = PageStore::open(f.path(), 0, 4096, 4, StoreOptions::default()).unwrap();
        assert!(matches!(store.read_sync(4), Err(Error::NodeOutOfRange { .. })));
        let mut ctx = store.context(0);
        assert!(ctx.submit(&[ReadRequest::new(9, 0)]).is_err());
        let too_many: Vec<_> = (0..65).map(|i| ReadRequest::new(i % 4, i as u64)).collect();
        assert!(matches!(ctx.submit(&too_many), Err(Error::InFlightLimit { .. })));
        drop(ctx);
        store.close();
        assert!(matches!(store.read_sync(0), Err(Error::Closed)));
        assert!(matches!(store.context(0).submit(&[ReadRequest::new(0, 0)]), Err(Error::Closed)));
    }

    #[test]
    fn calibration_hits_targets() {
        let s = SyntheticLatency::default();
        let (mu, mult) = s.calibrate().unwrap();
        let std = Normal::new(0.0, 1.0).unwrap();
        let cdf = |x: f64| {
            let z = x.ln();
            (1.0 - s.p_tail) * std.cdf((z - mu) / s.sigma) + s.p_tail * std.cdf((z - mu - mult.ln()) / s.sigma)
        };
        let med = s.median.as_secs_f64();
        assert!((cdf(med) - 0.5).abs() < 1e-9);
        assert!((cdf(med * s.tail_ratio) - 0.999).abs() < 1e-9);
        assert!(mult > 1.0);
    }

    #[test]
    fn calibration_rejects_bad_params() {
        let bad = SyntheticLatency {
            sigma: 3.0,
            ..Default::default()
        };
        assert!(bad.calibrate().is_err());
        let bad = SyntheticLatency {
            p_tail: 0.0,
            ..Default::default()
        };
        assert!(bad.calibrate().is_err());
    }
}
