//! Oblivious permutation of shared vectors and gradient bucketing.
//!
//! Applying a permutation `pi` to `x` gives `u` with `u[i] = x[pi[i]]`.

use serde::{Deserialize, Serialize};

use crate::dealer::PermCrShares;
use crate::error::{Error, Result};
use crate::ring::RingValue;
use crate::sharing::{Session, SharedVector};
use crate::transport::PartyId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    mapping: Vec<u32>,
    owner: PartyId,
}

impl Permutation {
    pub fn new(mapping: Vec<u32>, owner: PartyId) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &m in &mapping {
            let m = m as usize;
            if m >= seen.len() || seen[m] {
                return Err(Error::Input("mapping is not a permutation".into()));
            }
            seen[m] = true;
        }
        Ok(Permutation { mapping, owner })
    }

    pub fn identity(len: usize, owner: PartyId) -> Self {
        Permutation { mapping: (0..len as u32).collect(), owner }
    }

    /// Stable ascending sort order of `values`: applying it sorts them.
    pub fn sorting(values: &[f64], owner: PartyId) -> Self {
        let mut idx: Vec<u32> = (0..values.len() as u32).collect();
        idx.sort_by(|&a, &b| values[a as usize].total_cmp(&values[b as usize]));
        Permutation { mapping: idx, owner }
    }

    pub fn mapping(&self) -> &[u32] {
        &self.mapping
    }

    pub fn owner(&self) -> PartyId {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn apply<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.mapping.iter().map(|&i| x[i as usize]).collect()
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0u32; self.mapping.len()];
        for (i, &m) in self.mapping.iter().enumerate() {
            inv[m as usize] = i as u32;
        }
        Permutation { mapping: inv, owner: self.owner }
    }
}

/// One vector to permute by its owner's permutation. Non-owners pass `None`.
pub struct PermJob<'a> {
    pub owner: PartyId,
    pub perm: Option<&'a Permutation>,
    pub x: &'a SharedVector,
}

struct Prepared {
    owner: PartyId,
    len: usize,
    perm: Option<Vec<u32>>,
    masked: Vec<u64>,
    cr: PermCrShares,
}

fn apply_raw(map: &[u32], x: &[RingValue]) -> Vec<RingValue> {
    map.iter().map(|&i| x[i as usize]).collect()
}

fn decode_mapping(words: &[u64], len: usize) -> Result<Vec<u32>> {
    let mut seen = vec![false; len];
    words
        .iter()
        .map(|&w| {
            let i = w as usize;
            if i >= len || seen[i] {
                return Err(Error::protocol("received mapping is not a permutation"));
            }
            seen[i] = true;
            Ok(w as u32)
        })
        .collect()
}

/// Permutes several shared vectors, each by its own owner's permutation,
/// in two rounds total.
pub fn sec_perm_batch(s: &mut Session, jobs: &[PermJob]) -> Result<Vec<SharedVector>> {
    let me = s.id;
    let n = s.n;
    let mut prepared = Vec::with_capacity(jobs.len());
    for job in jobs {
        let len = job.x.len();
        if job.owner == 0 || job.owner > n {
            return Err(Error::Config(format!("permutation owner {} is not a party", job.owner)));
        }
        let perm = match (job.owner == me, job.perm) {
            (true, Some(p)) => {
                if p.owner() != job.owner {
                    return Err(Error::protocol("permutation owner does not match the correlated randomness"));
                }
                if p.len() != len {
                    return Err(Error::shape("permutation and vector lengths differ"));
                }
                Some(p.mapping.clone())
            }
            (true, None) => return Err(Error::protocol("owner has no permutation")),
            (false, _) => None,
        };
        let cr = s.dealer.perm_cr(len, job.owner)?;
        if cr.owner != job.owner || cr.r.len() != len {
            return Err(Error::protocol("correlated randomness does not fit the job"));
        }
        let masked = job.x.values.iter().zip(&cr.r).map(|(&x, &r)| (x - r).0).collect();
        prepared.push(Prepared { owner: job.owner, len, perm, masked, cr });
    }
    let owners: Vec<PartyId> = {
        let mut o: Vec<PartyId> = prepared.iter().map(|p| p.owner).collect();
        o.sort_unstable();
        o.dedup();
        o
    };
    let others: Vec<PartyId> = owners.iter().copied().filter(|&o| o != me).collect();

    s.scoped("sec_perm", |s| {
        // Round 1: owners publish pi_s = pi_p^-1 o pi for their jobs.
        let mut own_shuffles: Vec<Vec<u32>> = Vec::new();
        let mut outgoing_words = Vec::new();
        for p in prepared.iter().filter(|p| p.owner == me) {
            let pi = p.perm.as_ref().unwrap();
            let pi_p = p.cr.perm.as_ref().ok_or_else(|| Error::protocol("owner lacks the dealer permutation"))?;
            let mut pi_p_inv = vec![0u32; p.len];
            for (i, &m) in pi_p.iter().enumerate() {
                pi_p_inv[m as usize] = i as u32;
            }
            let pi_s: Vec<u32> = pi.iter().map(|&m| pi_p_inv[m as usize]).collect();
            outgoing_words.extend(pi_s.iter().map(|&v| v as u64));
            own_shuffles.push(pi_s);
        }
        let outgoing = if own_shuffles.is_empty() {
            Vec::new()
        } else {
            (1..=n).filter(|&p| p != me).map(|p| (p, outgoing_words.clone())).collect()
        };
        let received = s.chan.round(outgoing, &others)?;
        let mut shuffles: Vec<Vec<u32>> = Vec::with_capacity(prepared.len());
        {
            let mut cursors: Vec<usize> = vec![0; others.len()];
            let mut own_iter = own_shuffles.into_iter();
            for p in &prepared {
                if p.owner == me {
                    shuffles.push(own_iter.next().unwrap());
                } else {
                    let k = others.iter().position(|&o| o == p.owner).unwrap();
                    let words = &received[k];
                    let end = cursors[k] + p.len;
                    if end > words.len() {
                        return Err(Error::protocol("short permutation broadcast"));
                    }
                    shuffles.push(decode_mapping(&words[cursors[k]..end], p.len)?);
                    cursors[k] = end;
                }
            }
        }

        // Round 2: masked shares go to the owner, who opens x - r.
        let mut outgoing = Vec::new();
        for &o in &owners {
            if o == me {
                continue;
            }
            let words: Vec<u64> = prepared.iter().filter(|p| p.owner == o).flat_map(|p| p.masked.iter().copied()).collect();
            outgoing.push((o, words));
        }
        let mine_count = prepared.iter().filter(|p| p.owner == me).count();
        let senders: Vec<PartyId> = if mine_count > 0 { (1..=n).filter(|&p| p != me).collect() } else { Vec::new() };
        let gathered = s.chan.round(outgoing, &senders)?;
        let mut offsets = vec![0usize; senders.len()];

        let mut out = Vec::with_capacity(prepared.len());
        for (p, (job, pi_s)) in prepared.iter().zip(jobs.iter().zip(&shuffles)) {
            let mut values = apply_raw(pi_s, &p.cr.permuted_r);
            if p.owner == me {
                let mut opened: Vec<RingValue> = p.masked.iter().map(|&w| RingValue(w)).collect();
                for (k, words) in gathered.iter().enumerate() {
                    let end = offsets[k] + p.len;
                    if end > words.len() {
                        return Err(Error::protocol("short masked vector"));
                    }
                    for (o, &w) in opened.iter_mut().zip(&words[offsets[k]..end]) {
                        *o += RingValue(w);
                    }
                    offsets[k] = end;
                }
                let permuted = apply_raw(p.perm.as_ref().unwrap(), &opened);
                for (v, d) in values.iter_mut().zip(permuted) {
                    *v += d;
                }
            }
            out.push(SharedVector::new(me, values, job.x.scale, job.x.session_tag));
        }
        Ok(out)
    })
}

pub fn sec_perm(s: &mut Session, owner: PartyId, perm: Option<&Permutation>, x: &SharedVector) -> Result<SharedVector> {
    Ok(sec_perm_batch(s, &[PermJob { owner, perm, x }])?.pop().unwrap())
}

/// Per-bucket gradient sums after sorting by one feature.
#[derive(Clone, Debug)]
pub struct BucketSums {
    pub alpha: SharedVector,
    pub beta: SharedVector,
    pub bucket_size: usize,
}

/// Bucket `b` covers `[b*M, (b+1)*M)` with `M = N / B`; the last bucket also takes the remainder.
pub fn bucket_bounds(n: usize, buckets: usize) -> Result<Vec<std::ops::Range<usize>>> {
    if buckets < 2 {
        return Err(Error::Config(format!("need at least 2 buckets, got {buckets}")));
    }
    if buckets > n {
        return Err(Error::Config(format!("{buckets} buckets exceed {n} samples")));
    }
    let m = n / buckets;
    Ok((0..buckets).map(|b| b * m..if b + 1 == buckets { n } else { (b + 1) * m }).collect())
}

/// Index into the sorted column whose value becomes the threshold after bucket `q`.
pub fn threshold_index(n: usize, buckets: usize, q: usize) -> usize {
    (q + 1) * (n / buckets)
}

fn bucket_sum(x: &SharedVector, bounds: &[std::ops::Range<usize>]) -> SharedVector {
    let values = bounds.iter().map(|r| x.values[r.clone()].iter().copied().sum()).collect();
    SharedVector::new(x.party_id, values, x.scale, x.session_tag)
}

/// One discretization: gradients `g`, `h` sorted by `owner`'s permutation.
pub struct DiscJob<'a> {
    pub owner: PartyId,
    pub perm: Option<&'a Permutation>,
    pub g: &'a SharedVector,
    pub h: &'a SharedVector,
}

/// Bucketed gradient sums for many (permutation, g, h) jobs in two rounds.
pub fn sec_disc_batch(s: &mut Session, jobs: &[DiscJob], buckets: usize) -> Result<Vec<BucketSums>> {
    let mut perm_jobs = Vec::with_capacity(2 * jobs.len());
    for j in jobs {
        if j.g.len() != j.h.len() {
            return Err(Error::shape("g and h lengths differ"));
        }
        bucket_bounds(j.g.len(), buckets)?;
        perm_jobs.push(PermJob { owner: j.owner, perm: j.perm, x: j.g });
        perm_jobs.push(PermJob { owner: j.owner, perm: j.perm, x: j.h });
    }
    let permuted = s.scoped("sec_disc", |s| sec_perm_batch(s, &perm_jobs))?;
    jobs.iter()
        .zip(permuted.chunks(2))
        .map(|(j, pair)| {
            let bounds = bucket_bounds(j.g.len(), buckets)?;
            Ok(BucketSums {
                alpha: bucket_sum(&pair[0], &bounds),
                beta: bucket_sum(&pair[1], &bounds),
                bucket_size: j.g.len() / buckets,
            })
        })
        .collect()
}

pub fn sec_disc(
    s: &mut Session,
    owner: PartyId,
    perm: Option<&Permutation>,
    g: &SharedVector,
    h: &SharedVector,
    buckets: usize,
) -> Result<BucketSums> {
    Ok(sec_disc_batch(s, &[DiscJob { owner, perm, g, h }], buckets)?.pop().unwrap())
}

/// Plaintext reference for the bucket sums.
pub fn plain_bucket_sums(perm: &Permutation, x: &[RingValue], buckets: usize) -> Result<Vec<RingValue>> {
    let sorted = perm.apply(x);
    Ok(bucket_bounds(x.len(), buckets)?.into_iter().map(|r| sorted[r].iter().copied().sum()).collect())
}
