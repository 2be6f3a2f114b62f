//! In-process harness: one thread per party over a simulated network.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::dealer::Dealer;
use crate::error::Result;
use crate::ring::{FixedPointConfig, RingValue};
use crate::sharing::{share, Scale, Session, SharedVector};
use crate::transport::{run_network, Network, NetworkConfig, SessionTag, TrafficStats};

pub struct Harness {
    pub net: Network,
    pub dealer: Dealer,
    pub fp: FixedPointConfig,
    pub party_seed: u64,
    sessions: std::sync::atomic::AtomicU64,
}

impl Harness {
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        Self::with_config(n, seed, NetworkConfig::default(), FixedPointConfig::default())
    }

    pub fn with_config(n: usize, seed: u64, cfg: NetworkConfig, fp: FixedPointConfig) -> Result<Self> {
        Ok(Harness {
            net: Network::new(n, cfg)?,
            dealer: Dealer::new(seed, n)?,
            fp,
            party_seed: seed ^ 0x5eed,
            sessions: Default::default(),
        })
    }

    pub fn parties(&self) -> usize {
        self.net.parties()
    }

    /// Runs `f` on every party inside a fresh session.
    pub fn run<T, F>(&self, label: &str, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut Session) -> Result<T> + Sync,
    {
        let k = self.sessions.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let tag = SessionTag::derive(&format!("{label}#{k}"));
        run_network(&self.net, |ep| {
            let mut s = Session::new(ep, tag, self.party_seed, &self.dealer, self.fp);
            f(&mut s)
        })
    }

    pub fn stats(&self) -> TrafficStats {
        self.net.stats()
    }

    /// Dealer-free sharing of plaintext, for tests that want inputs
    /// without spending an input round.
    pub fn share_plain(&self, values: &[RingValue], scale: Scale, seed: u64) -> Result<Vec<SharedVector>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        share(values, self.parties(), scale, SessionTag::derive("plain"), &mut rng)
    }

    pub fn share_fixed(&self, values: &[f64], seed: u64) -> Result<Vec<SharedVector>> {
        let enc = self.fp.encode_slice(values)?;
        self.share_plain(&enc, Scale::Fixed, seed)
    }
}

/// Reconstructs per-party outputs (indexed by party - 1).
pub fn open(shares: &[SharedVector]) -> Result<Vec<RingValue>> {
    crate::sharing::reconstruct(shares)
}
