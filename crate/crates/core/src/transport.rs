//! In-process message transport between simulated parties.
//!
//! Every party talks through a [`Channel`] bound to one session tag. A protocol
//! step is a *round*: each party posts its outgoing frames and then blocks
//! until the frames it expects for that round have arrived. All parties call
//! [`Channel::round`] the same number of times per session, so per-party round
//! counters agree and can be used for accounting.
//!
//! The hub keeps byte/round counters per operation label, an optional full
//! transcript for audits, and detects sessions in which every live participant
//! waits on a frame that can never arrive.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// 1-based party index.
pub type PartyId = usize;

const FRAME_HEADER_BYTES: usize = 1 + 8 + 4 + 4;

/// Opaque 8-byte session identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionTag(pub [u8; 8]);

impl SessionTag {
    /// Derives a tag from a human-readable label.
    pub fn derive(label: &str) -> Self {
        let digest = Sha256::digest(label.as_bytes());
        let mut tag = [0u8; 8];
        tag.copy_from_slice(&digest[..8]);
        SessionTag(tag)
    }

    /// Derives a sub-session tag, domain-separated from the parent.
    pub fn child(&self, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.0);
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut tag = [0u8; 8];
        tag.copy_from_slice(&digest[..8]);
        SessionTag(tag)
    }

    pub fn as_u64(&self) -> u64 {
        u64::from_le_bytes(self.0)
    }
}

impl fmt::Debug for SessionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionTag({self})")
    }
}

impl fmt::Display for SessionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// Wire frame: `sender: u8 | session_tag: [u8; 8] | round: u32 LE | len: u32 LE | len x u64 LE`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub sender: u8,
    pub session_tag: SessionTag,
    pub round: u32,
    pub payload: Vec<u64>,
}

impl Frame {
    pub fn encoded_len(words: usize) -> usize {
        FRAME_HEADER_BYTES + 8 * words
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::encoded_len(self.payload.len()));
        out.push(self.sender);
        out.extend_from_slice(&self.session_tag.0);
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        for w in &self.payload {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Frame> {
        if bytes.len() < FRAME_HEADER_BYTES {
            return Err(Error::protocol("truncated frame header"));
        }
        let sender = bytes[0];
        let mut tag = [0u8; 8];
        tag.copy_from_slice(&bytes[1..9]);
        let round = u32::from_le_bytes(bytes[9..13].try_into().unwrap());
        let len = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
        let body = &bytes[FRAME_HEADER_BYTES..];
        if body.len() != 8 * len {
            return Err(Error::protocol(format!(
                "frame length prefix {len} does not match body of {} bytes",
                body.len()
            )));
        }
        let payload = body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Frame { sender, session_tag: SessionTag(tag), round, payload })
    }
}

/// Transport parameters. Latency and bandwidth only feed the modeled time
/// unless `real_delay` is set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub latency_ms: f64,
    pub bandwidth_mbps: f64,
    /// Record every frame for later [`transcript_audit`].
    pub audit: bool,
    /// Sleep `latency_ms` per round instead of only modelling it.
    pub real_delay: bool,
    /// Randomly delay senders to perturb thread interleavings.
    pub jitter_seed: Option<u64>,
    pub recv_timeout_secs: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            latency_ms: 5.0,
            bandwidth_mbps: 100.0,
            audit: false,
            real_delay: false,
            jitter_seed: None,
            recv_timeout_secs: 300,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
struct MailKey {
    to: PartyId,
    from: PartyId,
    tag: SessionTag,
    round: u32,
}

#[derive(Default)]
struct SessionState {
    detached: BTreeSet<PartyId>,
    waiting: Vec<(PartyId, MailKey)>,
    aborted: Option<String>,
}

/// Counters for one operation label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpTraffic {
    pub rounds: u64,
    pub frames: u64,
    pub bytes: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyTraffic {
    pub rounds: u64,
    pub frames_sent: u64,
    pub bytes_sent: u64,
    pub frames_received: u64,
    pub bytes_received: u64,
}

/// Snapshot of the hub's counters. Serializes to the stats report JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrafficStats {
    pub parties: usize,
    pub per_party: Vec<PartyTraffic>,
    pub per_op: BTreeMap<String, OpTraffic>,
    pub per_phase: BTreeMap<String, OpTraffic>,
    pub totals: OpTraffic,
    pub modeled_seconds: f64,
}

impl TrafficStats {
    /// Counter deltas between two snapshots of the same network.
    pub fn since(&self, earlier: &TrafficStats) -> TrafficStats {
        fn sub(a: &OpTraffic, b: &OpTraffic) -> OpTraffic {
            OpTraffic {
                rounds: a.rounds - b.rounds,
                frames: a.frames - b.frames,
                bytes: a.bytes - b.bytes,
            }
        }
        let diff_map = |now: &BTreeMap<String, OpTraffic>, then: &BTreeMap<String, OpTraffic>| {
            now.iter()
                .map(|(k, v)| (k.clone(), sub(v, then.get(k).unwrap_or(&OpTraffic::default()))))
                .filter(|(_, v)| *v != OpTraffic::default())
                .collect()
        };
        let per_party = self
            .per_party
            .iter()
            .zip(&earlier.per_party)
            .map(|(a, b)| PartyTraffic {
                rounds: a.rounds - b.rounds,
                frames_sent: a.frames_sent - b.frames_sent,
                bytes_sent: a.bytes_sent - b.bytes_sent,
                frames_received: a.frames_received - b.frames_received,
                bytes_received: a.bytes_received - b.bytes_received,
            })
            .collect();
        TrafficStats {
            parties: self.parties,
            per_party,
            per_op: diff_map(&self.per_op, &earlier.per_op),
            per_phase: diff_map(&self.per_phase, &earlier.per_phase),
            totals: sub(&self.totals, &earlier.totals),
            modeled_seconds: self.modeled_seconds - earlier.modeled_seconds,
        }
    }

    /// Rounds attributed to one operation label (0 when absent).
    pub fn op_rounds(&self, label: &str) -> u64 {
        self.per_op.get(label).map_or(0, |o| o.rounds)
    }
}

/// A recorded frame, kept when auditing is enabled.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub to: PartyId,
    pub from: PartyId,
    pub session_tag: SessionTag,
    pub round: u32,
    pub label: String,
    pub phase: String,
    pub payload: Vec<u64>,
}

struct HubState {
    mailboxes: HashMap<MailKey, VecDeque<Vec<u8>>>,
    departed: BTreeMap<PartyId, String>,
    sessions: HashMap<SessionTag, SessionState>,
    session_rounds: BTreeMap<SessionTag, Vec<u64>>,
    per_party: Vec<PartyTraffic>,
    per_op: BTreeMap<String, OpTraffic>,
    per_phase: BTreeMap<String, OpTraffic>,
    frames: u64,
    bytes: u64,
    transcript: Vec<TranscriptEntry>,
}

struct Hub {
    n: usize,
    cfg: NetworkConfig,
    state: Mutex<HubState>,
    arrived: Condvar,
}

impl Hub {
    fn lock(&self) -> MutexGuard<'_, HubState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Shared handle to an in-process network of `n` parties.
#[derive(Clone)]
pub struct Network {
    hub: Arc<Hub>,
}

impl Network {
    pub fn new(n: usize, cfg: NetworkConfig) -> Result<Self> {
        if n < 2 || n > u8::MAX as usize {
            return Err(Error::Config(format!("party count must lie in [2, 255], got {n}")));
        }
        let state = HubState {
            mailboxes: HashMap::new(),
            departed: BTreeMap::new(),
            sessions: HashMap::new(),
            session_rounds: BTreeMap::new(),
            per_party: vec![PartyTraffic::default(); n],
            per_op: BTreeMap::new(),
            per_phase: BTreeMap::new(),
            frames: 0,
            bytes: 0,
            transcript: Vec::new(),
        };
        Ok(Network {
            hub: Arc::new(Hub { n, cfg, state: Mutex::new(state), arrived: Condvar::new() }),
        })
    }

    pub fn parties(&self) -> usize {
        self.hub.n
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.hub.cfg
    }

    pub fn endpoint(&self, party: PartyId) -> Result<Endpoint> {
        if party == 0 || party > self.hub.n {
            return Err(Error::Config(format!("unknown endpoint {party}")));
        }
        self.hub.lock().departed.remove(&party);
        Ok(Endpoint { hub: self.hub.clone(), party })
    }

    pub fn stats(&self) -> TrafficStats {
        let st = self.hub.lock();
        let rounds: u64 = st
            .session_rounds
            .values()
            .map(|v| v.iter().copied().max().unwrap_or(0))
            .sum();
        let totals = OpTraffic { rounds, frames: st.frames, bytes: st.bytes };
        let modeled_seconds = rounds as f64 * self.hub.cfg.latency_ms / 1e3
            + st.bytes as f64 * 8.0 / (self.hub.cfg.bandwidth_mbps * 1e6);
        TrafficStats {
            parties: self.hub.n,
            per_party: st.per_party.clone(),
            per_op: st.per_op.clone(),
            per_phase: st.per_phase.clone(),
            totals,
            modeled_seconds,
        }
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.hub.lock().transcript.clone()
    }

    /// Injects a frame outside of any protocol; used for audit negative controls.
    pub fn inject(&self, from: PartyId, to: PartyId, label: &str, payload: Vec<u64>) {
        let mut st = self.hub.lock();
        if self.hub.cfg.audit {
            st.transcript.push(TranscriptEntry {
                to,
                from,
                session_tag: SessionTag::derive("injected"),
                round: 0,
                label: label.to_string(),
                phase: label.to_string(),
                payload,
            });
        }
    }
}

/// One party's attachment point to a [`Network`].
#[derive(Clone)]
pub struct Endpoint {
    hub: Arc<Hub>,
    party: PartyId,
}

impl Endpoint {
    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn parties(&self) -> usize {
        self.hub.n
    }

    /// Marks this party as gone; peers waiting on it fail instead of blocking.
    pub fn depart(&self, reason: &str) {
        self.hub.lock().departed.insert(self.party, reason.to_string());
        self.hub.arrived.notify_all();
    }

    /// Opens this party's side of a session.
    pub fn channel(&self, tag: SessionTag) -> Channel {
        {
            let mut st = self.hub.lock();
            let sess = st.sessions.entry(tag).or_default();
            sess.detached.remove(&self.party);
        }
        let jitter = self
            .hub
            .cfg
            .jitter_seed
            .map(|s| ChaCha8Rng::seed_from_u64(s ^ tag.as_u64() ^ (self.party as u64) << 56));
        Channel {
            hub: self.hub.clone(),
            party: self.party,
            tag,
            round: 0,
            labels: Vec::new(),
            jitter,
        }
    }
}

/// A party's view of one session.
pub struct Channel {
    hub: Arc<Hub>,
    party: PartyId,
    tag: SessionTag,
    round: u32,
    labels: Vec<String>,
    jitter: Option<ChaCha8Rng>,
}

impl Channel {
    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn parties(&self) -> usize {
        self.hub.n
    }

    pub fn tag(&self) -> SessionTag {
        self.tag
    }

    pub fn rounds(&self) -> u32 {
        self.round
    }

    pub fn push_label(&mut self, label: &str) {
        self.labels.push(label.to_string());
    }

    pub fn pop_label(&mut self) {
        self.labels.pop();
    }

    fn label(&self) -> &str {
        self.labels.last().map_or("unlabeled", |s| s.as_str())
    }

    fn phase(&self) -> &str {
        self.labels.first().map_or("unlabeled", |s| s.as_str())
    }

    /// One communication round: post `outgoing` (at most one payload per peer)
    /// and collect one payload from each party in `incoming_from`, in order.
    pub fn round(
        &mut self,
        outgoing: Vec<(PartyId, Vec<u64>)>,
        incoming_from: &[PartyId],
    ) -> Result<Vec<Vec<u64>>> {
        let n = self.hub.n;
        for (to, _) in &outgoing {
            if *to == 0 || *to > n || *to == self.party {
                return Err(Error::Config(format!("party {} cannot send to {to}", self.party)));
            }
        }
        for (to, payload) in outgoing {
            if let Some(rng) = self.jitter.as_mut() {
                let spins = rng.gen_range(0..4);
                for _ in 0..spins {
                    std::thread::yield_now();
                }
                if rng.gen_bool(0.05) {
                    std::thread::sleep(Duration::from_micros(rng.gen_range(1..200)));
                }
            }
            self.post(to, payload);
        }
        if self.hub.cfg.real_delay {
            std::thread::sleep(Duration::from_secs_f64(self.hub.cfg.latency_ms / 1e3));
        }
        let mut received = Vec::with_capacity(incoming_from.len());
        for &from in incoming_from {
            if from == 0 || from > n || from == self.party {
                return Err(Error::Config(format!("party {} cannot receive from {from}", self.party)));
            }
            let bytes = self.recv(from)?;
            let frame = Frame::decode(&bytes)?;
            if frame.sender as usize != from || frame.round != self.round || frame.session_tag != self.tag {
                return Err(Error::protocol(format!(
                    "unexpected frame header from {from}: sender {}, round {}",
                    frame.sender, frame.round
                )));
            }
            received.push(frame.payload);
        }
        self.finish_round();
        Ok(received)
    }

    fn post(&mut self, to: PartyId, payload: Vec<u64>) {
        let frame = Frame { sender: self.party as u8, session_tag: self.tag, round: self.round, payload };
        let bytes = frame.encode();
        let len = bytes.len() as u64;
        let key = MailKey { to, from: self.party, tag: self.tag, round: self.round };
        let label = self.label().to_string();
        let phase = self.phase().to_string();
        let mut st = self.hub.lock();
        let sender = &mut st.per_party[self.party - 1];
        sender.frames_sent += 1;
        sender.bytes_sent += len;
        let receiver = &mut st.per_party[to - 1];
        receiver.frames_received += 1;
        receiver.bytes_received += len;
        st.frames += 1;
        st.bytes += len;
        for (map_is_phase, name) in [(false, &label), (true, &phase)] {
            let map = if map_is_phase { &mut st.per_phase } else { &mut st.per_op };
            let entry = map.entry(name.clone()).or_default();
            entry.frames += 1;
            entry.bytes += len;
        }
        if self.hub.cfg.audit {
            st.transcript.push(TranscriptEntry {
                to,
                from: self.party,
                session_tag: self.tag,
                round: self.round,
                label,
                phase,
                payload: frame.payload,
            });
        }
        st.mailboxes.entry(key).or_default().push_back(bytes);
        drop(st);
        self.hub.arrived.notify_all();
    }

    fn recv(&mut self, from: PartyId) -> Result<Vec<u8>> {
        let key = MailKey { to: self.party, from, tag: self.tag, round: self.round };
        let deadline = Instant::now() + Duration::from_secs(self.hub.cfg.recv_timeout_secs);
        let mut st = self.hub.lock();
        loop {
            if let Some(queue) = st.mailboxes.get_mut(&key) {
                if let Some(bytes) = queue.pop_front() {
                    if queue.is_empty() {
                        st.mailboxes.remove(&key);
                    }
                    return Ok(bytes);
                }
            }
            if let Some(reason) = st.departed.get(&from) {
                return Err(Error::protocol(format!("session {} aborted: party {from} left ({reason})", self.tag)));
            }
            let n = self.hub.n;
            let state = &mut *st;
            let sess = state.sessions.entry(self.tag).or_default();
            if let Some(reason) = &sess.aborted {
                return Err(Error::protocol(format!("session {} aborted: {reason}", self.tag)));
            }
            sess.waiting.push((self.party, key));
            let blocked: BTreeSet<PartyId> = sess.waiting.iter().map(|(p, _)| *p).collect();
            let stuck = blocked.len() + sess.detached.difference(&blocked).count() == n
                && sess.waiting.iter().all(|(_, k)| !state.mailboxes.contains_key(k));
            if stuck {
                let reason = format!(
                    "deadlock in round {}: every live party waits on a frame that was never sent",
                    self.round
                );
                sess.aborted = Some(reason.clone());
                sess.waiting.retain(|(p, _)| *p != self.party);
                drop(st);
                self.hub.arrived.notify_all();
                return Err(Error::protocol(format!("session {}: {reason}", self.tag)));
            }
            let now = Instant::now();
            if now >= deadline {
                sess.waiting.retain(|(p, _)| *p != self.party);
                return Err(Error::protocol(format!(
                    "timed out waiting for party {from} in round {}",
                    self.round
                )));
            }
            let (guard, _) = self
                .hub
                .arrived
                .wait_timeout(st, deadline - now)
                .unwrap_or_else(|e| e.into_inner());
            st = guard;
            if let Some(sess) = st.sessions.get_mut(&self.tag) {
                sess.waiting.retain(|(p, _)| *p != self.party);
            }
        }
    }

    fn finish_round(&mut self) {
        let mut st = self.hub.lock();
        let n = self.hub.n;
        st.per_party[self.party - 1].rounds += 1;
        let counts = st.session_rounds.entry(self.tag).or_insert_with(|| vec![0; n]);
        counts[self.party - 1] += 1;
        if self.party == 1 {
            let label = self.label().to_string();
            let phase = self.phase().to_string();
            st.per_op.entry(label).or_default().rounds += 1;
            st.per_phase.entry(phase).or_default().rounds += 1;
        }
        drop(st);
        self.round += 1;
    }

    /// Everyone sends `words` to everyone; returns all n payloads indexed by party - 1.
    pub fn exchange_all(&mut self, words: &[u64]) -> Result<Vec<Vec<u64>>> {
        let n = self.hub.n;
        let me = self.party;
        let others: Vec<PartyId> = (1..=n).filter(|&p| p != me).collect();
        let outgoing = others.iter().map(|&p| (p, words.to_vec())).collect();
        let mut got = self.round(outgoing, &others)?.into_iter();
        Ok((1..=n)
            .map(|p| if p == me { words.to_vec() } else { got.next().unwrap() })
            .collect())
    }

    /// Everyone sends `words` to `target`. The target gets all n payloads.
    pub fn gather_to(&mut self, target: PartyId, words: &[u64]) -> Result<Option<Vec<Vec<u64>>>> {
        let n = self.hub.n;
        let me = self.party;
        if me == target {
            let others: Vec<PartyId> = (1..=n).filter(|&p| p != me).collect();
            let mut got = self.round(Vec::new(), &others)?.into_iter();
            Ok(Some(
                (1..=n)
                    .map(|p| if p == me { words.to_vec() } else { got.next().unwrap() })
                    .collect(),
            ))
        } else {
            self.round(vec![(target, words.to_vec())], &[])?;
            Ok(None)
        }
    }

    /// `source` sends the same payload to all others.
    pub fn broadcast_from(&mut self, source: PartyId, words: Option<Vec<u64>>) -> Result<Vec<u64>> {
        let me = self.party;
        if me == source {
            let words = words.ok_or_else(|| Error::protocol("broadcast source has no payload"))?;
            let outgoing = (1..=self.hub.n).filter(|&p| p != me).map(|p| (p, words.clone())).collect();
            self.round(outgoing, &[])?;
            Ok(words)
        } else {
            Ok(self.round(Vec::new(), &[source])?.pop().unwrap())
        }
    }

    /// `source` sends `payloads[p - 1]` to each party p; returns this party's payload.
    pub fn scatter_from(&mut self, source: PartyId, payloads: Option<Vec<Vec<u64>>>) -> Result<Vec<u64>> {
        let me = self.party;
        if me == source {
            let payloads = payloads.ok_or_else(|| Error::protocol("scatter source has no payload"))?;
            if payloads.len() != self.hub.n {
                return Err(Error::shape("scatter needs one payload per party"));
            }
            let mut own = Vec::new();
            let mut outgoing = Vec::new();
            for (i, p) in payloads.into_iter().enumerate() {
                if i + 1 == me {
                    own = p;
                } else {
                    outgoing.push((i + 1, p));
                }
            }
            self.round(outgoing, &[])?;
            Ok(own)
        } else {
            Ok(self.round(Vec::new(), &[source])?.pop().unwrap())
        }
    }
}

impl Drop for Channel {
    fn drop(&mut self) {
        let mut st = self.hub.lock();
        let n = self.hub.n;
        let mut remove = false;
        if let Some(sess) = st.sessions.get_mut(&self.tag) {
            sess.detached.insert(self.party);
            sess.waiting.retain(|(p, _)| *p != self.party);
            remove = sess.detached.len() == n;
        }
        if remove {
            st.sessions.remove(&self.tag);
        }
        drop(st);
        self.hub.arrived.notify_all();
    }
}

/// [`run_parties`] over the endpoints of `net`. A party whose closure fails
/// departs, so peers waiting on it abort.
pub fn run_network<T, F>(net: &Network, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Endpoint) -> Result<T> + Sync,
{
    run_parties(net.parties(), |p| {
        let ep = net.endpoint(p)?;
        let out = f(&ep);
        if let Err(e) = &out {
            ep.depart(&e.to_string());
        }
        out
    })
}

/// Runs one closure per party on its own thread and collects the results in
/// party order. When several parties fail, the root cause is preferred over
/// the aborts it triggered in the others.
pub fn run_parties<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(PartyId) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (1..=n).map(|p| {
            let f = &f;
            scope.spawn(move || f(p))
        }).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::protocol("party thread panicked"))))
            .collect()
    });
    let mut errors = Vec::new();
    let mut values = Vec::with_capacity(n);
    for r in results {
        match r {
            Ok(v) => values.push(v),
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        return Ok(values);
    }
    let is_knock_on = |e: &Error| {
        matches!(e, Error::Protocol(m) if m.contains("aborted") || m.contains("deadlock") || m.contains("timed out"))
    };
    let idx = errors.iter().position(|e| !is_knock_on(e)).unwrap_or(0);
    Err(errors.swap_remove(idx))
}
