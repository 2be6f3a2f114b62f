//! Trusted dealer for the offline phase.
//!
//! The dealer never takes part in the online protocol. All material is a
//! deterministic function of `(dealer seed, session tag, kind, index)`: each
//! kind has its own ChaCha20 stream per session and item `i` starts at a fixed
//! word offset, so any party can regenerate exactly the items it consumes and
//! keep only its own share.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ring::RingValue;
use crate::transport::{PartyId, SessionTag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaterialKind {
    ArithTriple,
    BoolTriple,
    TruncPair,
    PermCr,
}

impl MaterialKind {
    fn domain(self) -> &'static str {
        match self {
            MaterialKind::ArithTriple => "arith-triple",
            MaterialKind::BoolTriple => "bool-triple",
            MaterialKind::TruncPair => "trunc-pair",
            MaterialKind::PermCr => "perm-cr",
        }
    }

    fn index(self) -> usize {
        match self {
            MaterialKind::ArithTriple => 0,
            MaterialKind::BoolTriple => 1,
            MaterialKind::TruncPair => 2,
            MaterialKind::PermCr => 3,
        }
    }
}

impl FromStr for MaterialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arith-triple" => Ok(MaterialKind::ArithTriple),
            "bool-triple" => Ok(MaterialKind::BoolTriple),
            "trunc-pair" => Ok(MaterialKind::TruncPair),
            "perm-cr" => Ok(MaterialKind::PermCr),
            other => Err(Error::Config(format!("unknown dealer material kind `{other}`"))),
        }
    }
}

/// One party's shares of a batch of Beaver triples (`c = a * b`).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripleShares {
    pub a: Vec<RingValue>,
    pub b: Vec<RingValue>,
    pub c: Vec<RingValue>,
}

/// One party's XOR-shares of AND triples, 64 independent triples packed per word.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BoolTripleShares {
    pub x: Vec<u64>,
    pub y: Vec<u64>,
    pub z: Vec<u64>,
}

/// One party's shares of truncation pairs for a fixed shift `bits`: a random
/// mask `r`, its top bit, and the low 63 bits of `r` shifted right by `bits`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TruncPairShares {
    pub bits: u32,
    pub r: Vec<RingValue>,
    pub r_msb: Vec<RingValue>,
    pub r_low_shifted: Vec<RingValue>,
}

/// One party's share of permutation correlated randomness. Only the owner
/// receives the hidden permutation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermCrShares {
    pub owner: PartyId,
    pub perm: Option<Vec<u32>>,
    pub r: Vec<RingValue>,
    pub permuted_r: Vec<RingValue>,
}

/// Material for all parties, indexed by `party - 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DealerMaterial {
    ArithTriples(Vec<TripleShares>),
    BoolTriples(Vec<BoolTripleShares>),
    TruncPairs(Vec<TruncPairShares>),
    PermCr(Vec<PermCrShares>),
}

/// Extra inputs some material kinds need.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DealParams {
    None,
    Trunc { bits: u32 },
    Perm { len: usize, owner: PartyId },
}

#[derive(Clone, Debug)]
pub struct Dealer {
    seed: u64,
    n: usize,
}

impl Dealer {
    pub fn new(seed: u64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("dealer needs at least 2 parties, got {n}")));
        }
        Ok(Dealer { seed, n })
    }

    pub fn parties(&self) -> usize {
        self.n
    }

    fn stream_seed(&self, tag: SessionTag, domain: &str, index: Option<u64>) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(tag.0);
        hasher.update(domain.as_bytes());
        if let Some(i) = index {
            hasher.update(i.to_le_bytes());
        }
        hasher.finalize().into()
    }

    fn rng_at(&self, tag: SessionTag, kind: MaterialKind, index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::from_seed(self.stream_seed(tag, kind.domain(), None));
        let words = self.words_per_item(kind) as u128;
        // Word positions count 32-bit words.
        rng.set_word_pos(index as u128 * words * 2);
        rng
    }

    fn words_per_item(&self, kind: MaterialKind) -> u64 {
        let n = self.n as u64;
        match kind {
            MaterialKind::ArithTriple | MaterialKind::BoolTriple => 2 + 3 * (n - 1),
            MaterialKind::TruncPair => 1 + 3 * (n - 1),
            MaterialKind::PermCr => 0,
        }
    }

    /// Generates `count` items of `kind` starting at `start` for every party.
    pub fn deal(
        &self,
        kind: MaterialKind,
        tag: SessionTag,
        start: u64,
        count: usize,
        params: DealParams,
    ) -> Result<DealerMaterial> {
        let parties: Vec<PartyId> = (1..=self.n).collect();
        Ok(match kind {
            MaterialKind::ArithTriple => DealerMaterial::ArithTriples(
                parties.iter().map(|&p| self.arith_triples(tag, start, count, p)).collect(),
            ),
            MaterialKind::BoolTriple => DealerMaterial::BoolTriples(
                parties.iter().map(|&p| self.bool_triples(tag, start, count, p)).collect(),
            ),
            MaterialKind::TruncPair => {
                let DealParams::Trunc { bits } = params else {
                    return Err(Error::Config("trunc-pair material needs a shift".into()));
                };
                if bits == 0 || bits >= 63 {
                    return Err(Error::Config(format!("cannot deal truncation pairs for a {bits}-bit shift")));
                }
                DealerMaterial::TruncPairs(parties.iter().map(|&p| self.trunc_pairs(tag, start, count, bits, p)).collect())
            }
            MaterialKind::PermCr => {
                let DealParams::Perm { len, owner } = params else {
                    return Err(Error::Config("perm-cr material needs a length and an owner party".into()));
                };
                if count != 1 {
                    return Err(Error::Config("perm-cr is dealt one vector at a time".into()));
                }
                let all = parties
                    .iter()
                    .map(|&p| self.perm_cr(tag, start, len, owner, p))
                    .collect::<Result<Vec<_>>>()?;
                DealerMaterial::PermCr(all)
            }
        })
    }

    /// Draws `n - 1` uniform shares of `secret` and returns party `party`'s.
    fn split(rng: &mut ChaCha20Rng, n: usize, secret: u64, party: PartyId) -> u64 {
        let mut acc = 0u64;
        let mut mine = 0u64;
        for m in 1..n {
            let s = rng.next_u64();
            acc = acc.wrapping_add(s);
            if m == party {
                mine = s;
            }
        }
        if party == n {
            secret.wrapping_sub(acc)
        } else {
            mine
        }
    }

    fn split_xor(rng: &mut ChaCha20Rng, n: usize, secret: u64, party: PartyId) -> u64 {
        let mut acc = 0u64;
        let mut mine = 0u64;
        for m in 1..n {
            let s = rng.next_u64();
            acc ^= s;
            if m == party {
                mine = s;
            }
        }
        if party == n {
            secret ^ acc
        } else {
            mine
        }
    }

    fn arith_triples(&self, tag: SessionTag, start: u64, count: usize, party: PartyId) -> TripleShares {
        let mut rng = self.rng_at(tag, MaterialKind::ArithTriple, start);
        let mut out = TripleShares {
            a: Vec::with_capacity(count),
            b: Vec::with_capacity(count),
            c: Vec::with_capacity(count),
        };
        for _ in 0..count {
            let a = rng.next_u64();
            let b = rng.next_u64();
            let c = a.wrapping_mul(b);
            out.a.push(RingValue(Self::split(&mut rng, self.n, a, party)));
            out.b.push(RingValue(Self::split(&mut rng, self.n, b, party)));
            out.c.push(RingValue(Self::split(&mut rng, self.n, c, party)));
        }
        out
    }

    fn bool_triples(&self, tag: SessionTag, start: u64, count: usize, party: PartyId) -> BoolTripleShares {
        let mut rng = self.rng_at(tag, MaterialKind::BoolTriple, start);
        let mut out = BoolTripleShares {
            x: Vec::with_capacity(count),
            y: Vec::with_capacity(count),
            z: Vec::with_capacity(count),
        };
        for _ in 0..count {
            let x = rng.next_u64();
            let y = rng.next_u64();
            out.x.push(Self::split_xor(&mut rng, self.n, x, party));
            out.y.push(Self::split_xor(&mut rng, self.n, y, party));
            out.z.push(Self::split_xor(&mut rng, self.n, x & y, party));
        }
        out
    }

    fn trunc_pairs(&self, tag: SessionTag, start: u64, count: usize, bits: u32, party: PartyId) -> TruncPairShares {
        let mut rng = self.rng_at(tag, MaterialKind::TruncPair, start);
        let mut out = TruncPairShares {
            bits,
            r: Vec::with_capacity(count),
            r_msb: Vec::with_capacity(count),
            r_low_shifted: Vec::with_capacity(count),
        };
        for _ in 0..count {
            let r = rng.next_u64();
            out.r.push(RingValue(Self::split(&mut rng, self.n, r, party)));
            out.r_msb.push(RingValue(Self::split(&mut rng, self.n, r >> 63, party)));
            out.r_low_shifted.push(RingValue(Self::split(&mut rng, self.n, (r & (u64::MAX >> 1)) >> bits, party)));
        }
        out
    }

    fn perm_cr(
        &self,
        tag: SessionTag,
        index: u64,
        len: usize,
        owner: PartyId,
        party: PartyId,
    ) -> Result<PermCrShares> {
        if owner == 0 || owner > self.n {
            return Err(Error::Config(format!("perm-cr owner {owner} is not a party")));
        }
        let mut rng = ChaCha20Rng::from_seed(self.stream_seed(tag, MaterialKind::PermCr.domain(), Some(index)));
        let mut perm: Vec<u32> = (0..len as u32).collect();
        perm.shuffle(&mut rng);
        let r: Vec<u64> = (0..len).map(|_| rng.next_u64()).collect();
        let mut r_share = Vec::with_capacity(len);
        for &v in &r {
            r_share.push(RingValue(Self::split(&mut rng, self.n, v, party)));
        }
        let mut pr_share = Vec::with_capacity(len);
        for &i in &perm {
            pr_share.push(RingValue(Self::split(&mut rng, self.n, r[i as usize], party)));
        }
        Ok(PermCrShares {
            owner,
            perm: (party == owner).then_some(perm),
            r: r_share,
            permuted_r: pr_share,
        })
    }

    pub fn stream(&self, tag: SessionTag, party: PartyId) -> DealerStream {
        DealerStream { dealer: self.clone(), tag, party, cursors: [0; 4] }
    }
}

/// Sequential per-party view of the dealer's streams for one session.
#[derive(Clone, Debug)]
pub struct DealerStream {
    dealer: Dealer,
    tag: SessionTag,
    party: PartyId,
    cursors: [u64; 4],
}

impl DealerStream {
    fn advance(&mut self, kind: MaterialKind, count: usize) -> u64 {
        let start = self.cursors[kind.index()];
        self.cursors[kind.index()] += count as u64;
        start
    }

    /// Items consumed so far, per kind.
    pub fn consumed(&self, kind: MaterialKind) -> u64 {
        self.cursors[kind.index()]
    }

    pub fn arith_triples(&mut self, count: usize) -> TripleShares {
        let start = self.advance(MaterialKind::ArithTriple, count);
        self.dealer.arith_triples(self.tag, start, count, self.party)
    }

    pub fn bool_triples(&mut self, count: usize) -> BoolTripleShares {
        let start = self.advance(MaterialKind::BoolTriple, count);
        self.dealer.bool_triples(self.tag, start, count, self.party)
    }

    pub fn trunc_pairs(&mut self, count: usize, bits: u32) -> TruncPairShares {
        let start = self.advance(MaterialKind::TruncPair, count);
        self.dealer.trunc_pairs(self.tag, start, count, bits, self.party)
    }

    pub fn perm_cr(&mut self, len: usize, owner: PartyId) -> Result<PermCrShares> {
        let index = self.advance(MaterialKind::PermCr, 1);
        self.dealer.perm_cr(self.tag, index, len, owner, self.party)
    }
}
