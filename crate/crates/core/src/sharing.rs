//! n-out-of-n additive secret sharing over Z_{2^64}.
//!
//! [`share`] and [`reconstruct`] operate on all parties' shares at once and are
//! meant for dealers, tests and harnesses. Online protocols run per party
//! through a [`Session`], which owns the party's channel, dealer stream and
//! private PRNG for one session tag.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dealer::{Dealer, DealerStream};
use crate::error::{Error, Result};
use crate::ring::{FixedPointConfig, RingValue};
use crate::transport::{Channel, Endpoint, PartyId, SessionTag};

/// Scaling carried by a shared vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scale {
    /// Plain integers, e.g. 0/1 indicators.
    Raw,
    /// Fixed point with factor `2^l`.
    Fixed,
    /// Product of two fixed-point values, factor `2^(2l)`; must be truncated.
    Double,
}

impl Scale {
    pub fn product(self, other: Scale) -> Result<Scale> {
        use Scale::*;
        match (self, other) {
            (Raw, s) | (s, Raw) => Ok(s),
            (Fixed, Fixed) => Ok(Double),
            _ => Err(Error::shape("cannot multiply a double-scaled value without truncating first")),
        }
    }
}

/// One party's additive share of a vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedVector {
    pub party_id: PartyId,
    pub values: Vec<RingValue>,
    pub scale: Scale,
    pub session_tag: SessionTag,
}

impl SharedVector {
    pub fn new(party_id: PartyId, values: Vec<RingValue>, scale: Scale, session_tag: SessionTag) -> Self {
        SharedVector { party_id, values, scale, session_tag }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_scaled(&self) -> bool {
        self.scale != Scale::Raw
    }

    fn with_values(&self, values: Vec<RingValue>) -> SharedVector {
        SharedVector { party_id: self.party_id, values, scale: self.scale, session_tag: self.session_tag }
    }

    fn check_compatible(&self, other: &SharedVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::shape(format!("length mismatch: {} vs {}", self.len(), other.len())));
        }
        if self.scale != other.scale {
            return Err(Error::shape(format!("scale mismatch: {:?} vs {:?}", self.scale, other.scale)));
        }
        Ok(())
    }

    pub fn add(&self, other: &SharedVector) -> Result<SharedVector> {
        self.check_compatible(other)?;
        Ok(self.with_values(self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect()))
    }

    pub fn sub(&self, other: &SharedVector) -> Result<SharedVector> {
        self.check_compatible(other)?;
        Ok(self.with_values(self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect()))
    }

    pub fn neg(&self) -> SharedVector {
        self.with_values(self.values.iter().map(|&a| -a).collect())
    }

    /// Multiplication by a public integer; the scale is unchanged.
    pub fn scalar_mul(&self, c: RingValue) -> SharedVector {
        self.with_values(self.values.iter().map(|&a| a * c).collect())
    }

    /// Adds a public vector (same scale as `self`); only party 1 changes its share.
    pub fn add_public(&self, public: &[RingValue]) -> Result<SharedVector> {
        if public.len() != self.len() {
            return Err(Error::shape("public operand length mismatch"));
        }
        if self.party_id != 1 {
            return Ok(self.clone());
        }
        Ok(self.with_values(self.values.iter().zip(public).map(|(&a, &b)| a + b).collect()))
    }

    /// Adds the same public constant to every element.
    pub fn add_public_scalar(&self, c: RingValue) -> SharedVector {
        if self.party_id != 1 {
            return self.clone();
        }
        self.with_values(self.values.iter().map(|&a| a + c).collect())
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> SharedVector {
        self.with_values(self.values[range].to_vec())
    }

    /// Sum of all elements as a length-1 vector.
    pub fn sum(&self) -> SharedVector {
        self.with_values(vec![self.values.iter().sum()])
    }

    pub fn concat(parts: &[&SharedVector]) -> Result<SharedVector> {
        let first = parts.first().ok_or_else(|| Error::shape("nothing to concatenate"))?;
        if parts.iter().any(|p| p.scale != first.scale) {
            return Err(Error::shape("cannot concatenate vectors of different scale"));
        }
        let values = parts.iter().flat_map(|p| p.values.iter().copied()).collect();
        Ok(first.with_values(values))
    }

    pub fn retag(mut self, tag: SessionTag) -> SharedVector {
        self.session_tag = tag;
        self
    }
}

/// Splits `x` into `n` additive shares: `n - 1` uniform, the last fixing the sum.
pub fn share<R: RngCore>(
    x: &[RingValue],
    n: usize,
    scale: Scale,
    session_tag: SessionTag,
    rng: &mut R,
) -> Result<Vec<SharedVector>> {
    if n < 2 {
        return Err(Error::Config(format!("sharing needs at least 2 parties, got {n}")));
    }
    let mut shares: Vec<Vec<RingValue>> = vec![Vec::with_capacity(x.len()); n];
    for &v in x {
        let mut acc = RingValue::ZERO;
        for s in shares.iter_mut().take(n - 1) {
            let r = RingValue(rng.next_u64());
            acc += r;
            s.push(r);
        }
        shares[n - 1].push(v - acc);
    }
    Ok(shares
        .into_iter()
        .enumerate()
        .map(|(i, values)| SharedVector::new(i + 1, values, scale, session_tag))
        .collect())
}

/// Elementwise modular sum of all parties' shares.
pub fn reconstruct(shares: &[SharedVector]) -> Result<Vec<RingValue>> {
    let first = shares.first().ok_or_else(|| Error::protocol("no shares to reconstruct"))?;
    let n = shares.len();
    let mut seen = vec![false; n];
    for s in shares {
        if s.party_id == 0 || s.party_id > n || seen[s.party_id - 1] {
            return Err(Error::protocol(format!("missing or duplicate share for party {}", s.party_id)));
        }
        seen[s.party_id - 1] = true;
        if s.session_tag != first.session_tag {
            return Err(Error::protocol("session tag mismatch between shares"));
        }
        if s.len() != first.len() || s.scale != first.scale {
            return Err(Error::shape("shares disagree on length or scale"));
        }
    }
    let mut out = first.values.clone();
    for s in &shares[1..] {
        for (o, &v) in out.iter_mut().zip(&s.values) {
            *o += v;
        }
    }
    Ok(out)
}

/// Who learns a revealed value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reveal {
    All,
    To(PartyId),
}

/// One party's state for one protocol session.
pub struct Session {
    pub id: PartyId,
    pub n: usize,
    pub fp: FixedPointConfig,
    pub chan: Channel,
    pub dealer: DealerStream,
    rng: ChaCha20Rng,
}

impl Session {
    pub fn new(endpoint: &Endpoint, tag: SessionTag, party_seed: u64, dealer: &Dealer, fp: FixedPointConfig) -> Self {
        let id = endpoint.party();
        let mut hasher = Sha256::new();
        hasher.update(party_seed.to_le_bytes());
        hasher.update((id as u64).to_le_bytes());
        hasher.update(tag.0);
        let rng = ChaCha20Rng::from_seed(hasher.finalize().into());
        Session {
            id,
            n: endpoint.parties(),
            fp,
            chan: endpoint.channel(tag),
            dealer: dealer.stream(tag, id),
            rng,
        }
    }

    pub fn tag(&self) -> SessionTag {
        self.chan.tag()
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    /// Runs `f` with `label` attributed to all traffic it causes.
    pub fn scoped<T>(&mut self, label: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.chan.push_label(label);
        let out = f(self);
        self.chan.pop_label();
        out
    }

    pub fn zeros(&self, len: usize, scale: Scale) -> SharedVector {
        SharedVector::new(self.id, vec![RingValue::ZERO; len], scale, self.tag())
    }

    /// Trivial sharing of a public vector: party 1 holds it, everyone else zeros.
    pub fn constant(&self, values: &[RingValue], scale: Scale) -> SharedVector {
        let values = if self.id == 1 { values.to_vec() } else { vec![RingValue::ZERO; values.len()] };
        SharedVector::new(self.id, values, scale, self.tag())
    }

    /// Trivial sharing of a value known only to this party.
    pub fn local_input(&self, owner: PartyId, values: &[RingValue], scale: Scale) -> SharedVector {
        let values = if self.id == owner { values.to_vec() } else { vec![RingValue::ZERO; values.len()] };
        SharedVector::new(self.id, values, scale, self.tag())
    }

    /// Secret-shares private inputs in a single round. Each entry is
    /// `(owner, plaintext at the owner, length, scale)`.
    pub fn input_round(&mut self, inputs: &[(PartyId, Option<&[RingValue]>, usize, Scale)]) -> Result<Vec<SharedVector>> {
        let n = self.n;
        let me = self.id;
        let tag = self.tag();
        let mut outgoing: Vec<Vec<u64>> = vec![Vec::new(); n];
        let mut own: Vec<Option<Vec<RingValue>>> = vec![None; inputs.len()];
        for (i, (owner, plain, len, _)) in inputs.iter().enumerate() {
            if *owner == 0 || *owner > n {
                return Err(Error::Config(format!("input owner {owner} is not a party")));
            }
            if *owner != me {
                continue;
            }
            let plain = plain.ok_or_else(|| Error::protocol("input owner has no plaintext"))?;
            if plain.len() != *len {
                return Err(Error::shape("input length mismatch"));
            }
            let shares = share(plain, n, Scale::Raw, tag, &mut self.rng)?;
            for (p, s) in shares.into_iter().enumerate() {
                if p + 1 == me {
                    own[i] = Some(s.values);
                } else {
                    outgoing[p].extend(s.values.iter().map(|v| v.0));
                }
            }
        }
        let senders: Vec<PartyId> = {
            let mut v: Vec<PartyId> = inputs.iter().map(|i| i.0).filter(|&o| o != me).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let send: Vec<(PartyId, Vec<u64>)> = if inputs.iter().any(|i| i.0 == me) {
            outgoing.into_iter().enumerate().filter(|(p, _)| p + 1 != me).map(|(p, w)| (p + 1, w)).collect()
        } else {
            Vec::new()
        };
        let received = self.chan.round(send, &senders)?;
        let mut cursors = vec![0usize; senders.len()];
        let mut out = Vec::with_capacity(inputs.len());
        for (i, (owner, _, len, scale)) in inputs.iter().enumerate() {
            let values = if *owner == me {
                own[i].take().unwrap()
            } else {
                let k = senders.binary_search(owner).unwrap();
                let words = received[k]
                    .get(cursors[k]..cursors[k] + len)
                    .ok_or_else(|| Error::protocol("short input frame"))?;
                cursors[k] += len;
                words.iter().map(|&w| RingValue(w)).collect()
            };
            out.push(SharedVector::new(me, values, *scale, tag));
        }
        Ok(out)
    }

    /// Secret-shares one private input held by `owner`.
    pub fn input(&mut self, owner: PartyId, plain: Option<&[RingValue]>, len: usize, scale: Scale) -> Result<SharedVector> {
        self.scoped("input", |s| Ok(s.input_round(&[(owner, plain, len, scale)])?.pop().unwrap()))
    }

    /// Opens `x` to `target`. Returns the plaintext at the recipients.
    pub fn reveal(&mut self, x: &SharedVector, target: Reveal) -> Result<Option<Vec<RingValue>>> {
        let words: Vec<u64> = x.values.iter().map(|v| v.0).collect();
        let all = match target {
            Reveal::All => Some(self.chan.exchange_all(&words)?),
            Reveal::To(p) => self.chan.gather_to(p, &words)?,
        };
        Ok(all.map(|parts| {
            let mut out = vec![RingValue::ZERO; x.len()];
            for part in parts {
                for (o, w) in out.iter_mut().zip(part) {
                    *o += RingValue(w);
                }
            }
            out
        }))
    }

    /// Beaver multiplication of several pairs in one round.
    pub fn mul_batch(&mut self, pairs: &[(&SharedVector, &SharedVector)]) -> Result<Vec<SharedVector>> {
        let mut scales = Vec::with_capacity(pairs.len());
        let mut total = 0;
        for (x, y) in pairs {
            if x.len() != y.len() {
                return Err(Error::shape(format!("mul length mismatch: {} vs {}", x.len(), y.len())));
            }
            scales.push(x.scale.product(y.scale)?);
            total += x.len();
        }
        self.chan.push_label("beaver_mul");
        let result = self.beaver(pairs, total);
        self.chan.pop_label();
        let flat = result?;
        let mut out = Vec::with_capacity(pairs.len());
        let mut offset = 0;
        for ((x, _), scale) in pairs.iter().zip(scales) {
            out.push(SharedVector::new(self.id, flat[offset..offset + x.len()].to_vec(), scale, self.tag()));
            offset += x.len();
        }
        Ok(out)
    }

    fn beaver(&mut self, pairs: &[(&SharedVector, &SharedVector)], total: usize) -> Result<Vec<RingValue>> {
        let triples = self.dealer.arith_triples(total);
        let mut words = Vec::with_capacity(2 * total);
        let xs = pairs.iter().flat_map(|(x, _)| x.values.iter());
        let ys = pairs.iter().flat_map(|(_, y)| y.values.iter());
        for (x, a) in xs.zip(&triples.a) {
            words.push((*x - *a).0);
        }
        for (y, b) in ys.zip(&triples.b) {
            words.push((*y - *b).0);
        }
        let opened = self.chan.exchange_all(&words)?;
        let mut ef = vec![RingValue::ZERO; 2 * total];
        for part in opened {
            for (o, w) in ef.iter_mut().zip(part) {
                *o += RingValue(w);
            }
        }
        let (e, f) = ef.split_at(total);
        let first = self.id == 1;
        Ok((0..total)
            .map(|i| {
                let mut z = f[i] * triples.a[i] + e[i] * triples.b[i] + triples.c[i];
                if first {
                    z += e[i] * f[i];
                }
                z
            })
            .collect())
    }

    pub fn mul(&mut self, x: &SharedVector, y: &SharedVector) -> Result<SharedVector> {
        Ok(self.mul_batch(&[(x, y)])?.pop().unwrap())
    }

    /// Rescales `z` by `2^-bits` (floor, at most one ulp low). Requires |z| < 2^62.
    pub fn truncate_bits(&mut self, z: &SharedVector, bits: u32, out_scale: Scale) -> Result<SharedVector> {
        if bits == 0 || bits >= 63 {
            return Err(Error::Config(format!("cannot truncate by {bits} bits")));
        }
        self.chan.push_label("truncate");
        let result = self.truncate_inner(z, bits);
        self.chan.pop_label();
        Ok(SharedVector::new(self.id, result?, out_scale, self.tag()))
    }

    /// Offsets `z` by `2^62` so it is non-negative, masks it with `r`, and opens
    /// `p = z + 2^62 + r`. The carry out of the low 63 bits is `msb(p) xor msb(r)`,
    /// which is linear in the shared top bit of `r` once `p` is public.
    fn truncate_inner(&mut self, z: &SharedVector, bits: u32) -> Result<Vec<RingValue>> {
        let len = z.len();
        let pairs = self.dealer.trunc_pairs(len, bits);
        let lead = self.id == 1;
        let offset = RingValue(1u64 << 62);
        let masked: Vec<u64> = (0..len)
            .map(|i| {
                let zm = if lead { z.values[i] + offset } else { z.values[i] };
                (zm + pairs.r[i]).0
            })
            .collect();
        let parts = self.chan.exchange_all(&masked)?;
        let low_mask = u64::MAX >> 1;
        Ok((0..len)
            .map(|i| {
                let p = parts.iter().fold(0u64, |acc, w| acc.wrapping_add(w[i]));
                let p_top = p >> 63;
                let sign = RingValue(1u64.wrapping_sub(2 * p_top));
                let mut carry = sign * pairs.r_msb[i];
                let mut out = -pairs.r_low_shifted[i];
                if lead {
                    carry += RingValue(p_top);
                    out += RingValue((p & low_mask) >> bits) - RingValue(1u64 << (62 - bits));
                }
                out + carry * RingValue(1u64 << (63 - bits))
            })
            .collect())
    }

    /// Rescales a double-scaled product back to fixed point.
    pub fn truncate(&mut self, z: &SharedVector) -> Result<SharedVector> {
        if z.scale != Scale::Double {
            return Err(Error::shape("truncate expects a double-scaled product"));
        }
        let l = self.fp.precision_bits();
        self.truncate_bits(z, l, Scale::Fixed)
    }

    /// Fixed-point products of several pairs: one multiplication round plus one truncation round.
    pub fn mul_trunc_batch(&mut self, pairs: &[(&SharedVector, &SharedVector)]) -> Result<Vec<SharedVector>> {
        let products = self.mul_batch(pairs)?;
        let lens: Vec<usize> = products.iter().map(|p| p.len()).collect();
        let refs: Vec<&SharedVector> = products.iter().collect();
        let joined = SharedVector::concat(&refs)?;
        let truncated = if joined.scale == Scale::Double { self.truncate(&joined)? } else { joined };
        let mut out = Vec::with_capacity(lens.len());
        let mut offset = 0;
        for len in lens {
            out.push(truncated.slice(offset..offset + len));
            offset += len;
        }
        Ok(out)
    }

    pub fn mul_trunc(&mut self, x: &SharedVector, y: &SharedVector) -> Result<SharedVector> {
        Ok(self.mul_trunc_batch(&[(x, y)])?.pop().unwrap())
    }

    /// Multiplies a fixed-point vector by a public real and truncates (one round).
    pub fn mul_public(&mut self, x: &SharedVector, c: f64) -> Result<SharedVector> {
        if x.scale != Scale::Fixed {
            return Err(Error::shape("public fixed-point multiply expects a fixed-point operand"));
        }
        let c = self.fp.encode(c)?;
        let mut prod = x.scalar_mul(c);
        prod.scale = Scale::Double;
        self.truncate(&prod)
    }
}
