//! Nonlinear functions over shares.
//!
//! Reciprocal uses the Newton iteration `z <- 2z - y z^2` from a public start
//! `z_0 = 2^-k`. The exponential is `(1 + x / 2^n)^(2^n)` by repeated squaring,
//! and the sigmoid chains an optional oblivious clamp, the exponential and the
//! reciprocal. Comparison extracts the sign bit of `a - b`: every party's
//! share is an addend of a Boolean sum that is compressed with carry-save
//! adders and finished with a Kogge-Stone prefix adder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::RingValue;
use crate::sharing::{Reveal, Scale, Session, SharedVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxConfig {
    pub newton_iters: u32,
    /// Start value of the reciprocal iteration is `2^-newton_init_log2`.
    pub newton_init_log2: u32,
    /// The exponential uses `2^exp_log_rounds` as its divisor.
    pub exp_log_rounds: u32,
    /// Sigmoid inputs are clamped to `[-c, c]`; 0 disables the clamp.
    pub sigmoid_clamp: f64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig { newton_iters: 20, newton_init_log2: 10, exp_log_rounds: 2, sigmoid_clamp: 4.0 }
    }
}

impl ApproxConfig {
    /// `z_0 = 2^-20`, no sigmoid clamp.
    pub fn reference_mode() -> Self {
        ApproxConfig { newton_init_log2: 20, sigmoid_clamp: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.newton_iters < 1 {
            return Err(Error::Config("newton_iters must be at least 1".into()));
        }
        if self.exp_log_rounds < 1 {
            return Err(Error::Config("exp_log_rounds must be at least 1".into()));
        }
        if !(self.sigmoid_clamp >= 0.0) {
            return Err(Error::Config("sigmoid_clamp must be non-negative".into()));
        }
        Ok(())
    }
}

fn expect_fixed(x: &SharedVector, what: &str) -> Result<()> {
    if x.scale != Scale::Fixed {
        return Err(Error::shape(format!("{what} expects a fixed-point operand, got {:?}", x.scale)));
    }
    Ok(())
}

/// Shares of `1/y` for `y > 0` with `y * z_0 < 2`.
pub fn sec_reciprocal(s: &mut Session, y: &SharedVector, cfg: &ApproxConfig) -> Result<SharedVector> {
    cfg.validate()?;
    expect_fixed(y, "reciprocal")?;
    let l = s.fp.precision_bits();
    let k = cfg.newton_init_log2;
    if k > l || 2 * k >= 63 {
        return Err(Error::Config(format!("newton_init_log2 {k} not representable with {l} precision bits")));
    }
    s.scoped("reciprocal", |s| {
        let two_z0 = RingValue(2u64 << (l - k));
        // First step with the public start: z_1 = 2 z_0 - y z_0^2.
        let y_z0_sq = s.truncate_bits(y, 2 * k, Scale::Fixed)?;
        let mut z = y_z0_sq.neg().add_public_scalar(two_z0);
        for _ in 1..cfg.newton_iters {
            let yz = s.mul_trunc(y, &z)?;
            let zyz = s.mul_trunc(&z, &yz)?;
            z = z.scalar_mul(RingValue(2)).sub(&zyz)?;
        }
        Ok(z)
    })
}

/// Shares of `x / y`: reciprocal of `y`, then one truncated product.
pub fn sec_div(s: &mut Session, x: &SharedVector, y: &SharedVector, cfg: &ApproxConfig) -> Result<SharedVector> {
    expect_fixed(x, "division")?;
    if x.len() != y.len() {
        return Err(Error::shape("numerator and denominator lengths differ"));
    }
    s.scoped("div", |s| {
        let inv = sec_reciprocal(s, y, cfg)?;
        s.mul_trunc(x, &inv)
    })
}

/// Shares of `(1 + x / 2^n)^(2^n)`; exactly `n` Beaver rounds.
pub fn sec_exp(s: &mut Session, x: &SharedVector, cfg: &ApproxConfig) -> Result<SharedVector> {
    cfg.validate()?;
    expect_fixed(x, "exp")?;
    let l = s.fp.precision_bits();
    let n = cfg.exp_log_rounds;
    if 2 * (l + n) >= 62 {
        return Err(Error::Config(format!("exp_log_rounds {n} too large for {l} precision bits")));
    }
    s.scoped("exp", |s| {
        // 1 + x/2^n read at scale 2^(l+n) is exactly x + 2^(l+n).
        let mut a = x.add_public_scalar(RingValue(1u64 << (l + n)));
        a.scale = Scale::Raw;
        let sq = s.mul(&a, &a)?;
        let mut acc = s.truncate_bits(&sq, l + 2 * n, Scale::Fixed)?;
        for _ in 1..n {
            acc = s.mul_trunc(&acc, &acc)?;
        }
        Ok(acc)
    })
}

/// Shares of `1 / (1 + e^-x)` through the clamp, exponential and reciprocal pipeline.
pub fn sec_sigmoid(s: &mut Session, x: &SharedVector, cfg: &ApproxConfig) -> Result<SharedVector> {
    cfg.validate()?;
    expect_fixed(x, "sigmoid")?;
    s.scoped("sigmoid", |s| {
        let x = if cfg.sigmoid_clamp > 0.0 { clamp(s, x, cfg.sigmoid_clamp)? } else { x.clone() };
        let e = sec_exp(s, &x.neg(), cfg)?;
        let one = s.fp.one();
        let den = e.add_public_scalar(one);
        sec_reciprocal(s, &den, cfg)
    })
}

/// Oblivious clamp of `x` to `[-c, c]`.
pub fn clamp(s: &mut Session, x: &SharedVector, c: f64) -> Result<SharedVector> {
    s.scoped("clamp", |s| {
        let len = x.len();
        let c_enc = s.fp.encode(c)?;
        let hi = s.constant(&vec![c_enc; len], Scale::Fixed);
        let lo = hi.neg();
        let a = SharedVector::concat(&[x, &hi])?;
        let b = SharedVector::concat(&[&lo, x])?;
        let bits = sec_less(s, &a, &b)?;
        let below = bits.slice(0..len);
        let above = bits.slice(len..2 * len);
        let to_lo = lo.sub(x)?;
        let to_hi = hi.sub(x)?;
        let deltas = s.mul_batch(&[(&below, &to_lo), (&above, &to_hi)])?;
        x.add(&deltas[0])?.add(&deltas[1])
    })
}

/// `b ? x : y` for a raw 0/1 selector `b`; one Beaver round.
pub fn select(s: &mut Session, b: &SharedVector, x: &SharedVector, y: &SharedVector) -> Result<SharedVector> {
    let diff = x.sub(y)?;
    y.add(&s.mul(b, &diff)?)
}

/// XOR-shared AND of word vectors, one round.
fn and_words(s: &mut Session, x: &[u64], y: &[u64]) -> Result<Vec<u64>> {
    debug_assert_eq!(x.len(), y.len());
    let len = x.len();
    let t = s.dealer.bool_triples(len);
    let mut words = Vec::with_capacity(2 * len);
    words.extend(x.iter().zip(&t.x).map(|(v, a)| v ^ a));
    words.extend(y.iter().zip(&t.y).map(|(v, b)| v ^ b));
    s.chan.push_label("and_gate");
    let opened = s.chan.exchange_all(&words);
    s.chan.pop_label();
    let mut ef = vec![0u64; 2 * len];
    for part in opened? {
        for (o, w) in ef.iter_mut().zip(part) {
            *o ^= w;
        }
    }
    let (e, f) = ef.split_at(len);
    let first = s.id == 1;
    Ok((0..len)
        .map(|i| {
            let mut z = (e[i] & t.y[i]) ^ (f[i] & t.x[i]) ^ t.z[i];
            if first {
                z ^= e[i] & f[i];
            }
            z
        })
        .collect())
}

/// Several AND batches sharing one round.
fn and_words_multi(s: &mut Session, pairs: &[(&[u64], &[u64])]) -> Result<Vec<Vec<u64>>> {
    let xs: Vec<u64> = pairs.iter().flat_map(|(x, _)| x.iter().copied()).collect();
    let ys: Vec<u64> = pairs.iter().flat_map(|(_, y)| y.iter().copied()).collect();
    let z = and_words(s, &xs, &ys)?;
    let mut out = Vec::with_capacity(pairs.len());
    let mut offset = 0;
    for (x, _) in pairs {
        out.push(z[offset..offset + x.len()].to_vec());
        offset += x.len();
    }
    Ok(out)
}

/// XOR-shared sign bit of the sum of the parties' (trivially shared) words.
fn msb_of_sum(s: &mut Session, own_words: &[u64]) -> Result<Vec<u64>> {
    let len = own_words.len();
    let me = s.id;
    // Addend m is party m's share word, held by party m alone.
    let mut addends: Vec<Vec<u64>> = (1..=s.n)
        .map(|m| if m == me { own_words.to_vec() } else { vec![0; len] })
        .collect();
    while addends.len() > 2 {
        let groups = addends.len() / 3;
        let rest = addends.split_off(groups * 3);
        let mut inputs = Vec::with_capacity(groups);
        for g in 0..groups {
            let (a, b, c) = (&addends[3 * g], &addends[3 * g + 1], &addends[3 * g + 2]);
            let ac: Vec<u64> = a.iter().zip(c).map(|(x, y)| x ^ y).collect();
            let bc: Vec<u64> = b.iter().zip(c).map(|(x, y)| x ^ y).collect();
            inputs.push((ac, bc));
        }
        let refs: Vec<(&[u64], &[u64])> = inputs.iter().map(|(x, y)| (x.as_slice(), y.as_slice())).collect();
        let ands = and_words_multi(s, &refs)?;
        let mut next = Vec::with_capacity(2 * groups + rest.len());
        for (g, and) in ands.into_iter().enumerate() {
            let (a, b, c) = (&addends[3 * g], &addends[3 * g + 1], &addends[3 * g + 2]);
            let sum: Vec<u64> = (0..len).map(|i| a[i] ^ b[i] ^ c[i]).collect();
            let carry: Vec<u64> = (0..len).map(|i| (and[i] ^ c[i]) << 1).collect();
            next.push(sum);
            next.push(carry);
        }
        next.extend(rest);
        addends = next;
    }
    let (x, y) = (&addends[0], &addends[1]);
    let p0: Vec<u64> = x.iter().zip(y).map(|(a, b)| a ^ b).collect();
    let mut g = and_words(s, x, y)?;
    let mut p = p0.clone();
    let mut shift = 1;
    while shift < 64 {
        let g_shift: Vec<u64> = g.iter().map(|v| v << shift).collect();
        if shift < 32 {
            let p_shift: Vec<u64> = p.iter().map(|v| v << shift).collect();
            let out = and_words_multi(s, &[(&p, &g_shift), (&p, &p_shift)])?;
            for (gi, t) in g.iter_mut().zip(&out[0]) {
                *gi ^= t;
            }
            p = out[1].clone();
        } else {
            let t = and_words(s, &p, &g_shift)?;
            for (gi, ti) in g.iter_mut().zip(&t) {
                *gi ^= ti;
            }
        }
        shift <<= 1;
    }
    // Sum bit 63 = x63 ^ y63 ^ carry into 63, and that carry is prefix-generate at 62.
    Ok(p0.iter().zip(&g).map(|(pv, gv)| ((pv >> 63) ^ (gv >> 62)) & 1).collect())
}

/// Converts XOR-shared bits to arithmetic shares by pairwise folding
/// `x ^ y = x + y - 2xy`.
fn bits_to_arith(s: &mut Session, own_bits: &[u64]) -> Result<SharedVector> {
    let me = s.id;
    let mut layer: Vec<SharedVector> = (1..=s.n)
        .map(|m| {
            let vals: Vec<RingValue> = own_bits.iter().map(|&b| RingValue(b)).collect();
            s.local_input(m, &vals, Scale::Raw)
        })
        .collect();
    debug_assert!(layer.iter().all(|v| v.party_id == me));
    while layer.len() > 1 {
        let pairs: Vec<(&SharedVector, &SharedVector)> = layer.chunks(2).filter(|c| c.len() == 2).map(|c| (&c[0], &c[1])).collect();
        let products = s.mul_batch(&pairs)?;
        let mut next = Vec::with_capacity(layer.len().div_ceil(2));
        for (pair, prod) in layer.chunks(2).filter(|c| c.len() == 2).zip(&products) {
            next.push(pair[0].add(&pair[1])?.sub(&prod.scalar_mul(RingValue(2)))?);
        }
        if layer.len() % 2 == 1 {
            next.push(layer.last().unwrap().clone());
        }
        layer = next;
    }
    Ok(layer.pop().unwrap())
}

/// Raw 0/1 shares of `a < b` under the signed view; needs `|a - b| < 2^63`.
pub fn sec_less(s: &mut Session, a: &SharedVector, b: &SharedVector) -> Result<SharedVector> {
    if a.len() != b.len() {
        return Err(Error::shape("comparison operands differ in length"));
    }
    if a.scale != b.scale {
        return Err(Error::shape("comparison operands differ in scale"));
    }
    s.scoped("less", |s| {
        let d = a.sub(b)?;
        let words: Vec<u64> = d.values.iter().map(|v| v.0).collect();
        let msb = msb_of_sum(s, &words)?;
        s.scoped("b2a", |s| bits_to_arith(s, &msb))
    })
}

/// Row-wise argmin of equal-length shared vectors by a linear scan.
/// Returns the public index of each row's first minimum and shares of the minima.
pub fn sec_argmin_rows(s: &mut Session, rows: &[SharedVector]) -> Result<(Vec<usize>, SharedVector)> {
    let k = rows.first().map(|r| r.len()).unwrap_or(0);
    if k == 0 || rows.iter().any(|r| r.len() != k) {
        return Err(Error::shape("argmin needs non-empty rows of equal length"));
    }
    let scale = rows[0].scale;
    if rows.iter().any(|r| r.scale != scale) {
        return Err(Error::shape("argmin rows differ in scale"));
    }
    s.scoped("argmin", |s| {
        let column = |i: usize| -> SharedVector {
            let vals = rows.iter().map(|r| r.values[i]).collect();
            SharedVector::new(rows[0].party_id, vals, scale, rows[0].session_tag)
        };
        let r = rows.len();
        let mut best = column(0);
        let mut idx = s.zeros(r, Scale::Raw);
        for i in 1..k {
            let cand = column(i);
            let take = sec_less(s, &cand, &best)?;
            let dv = cand.sub(&best)?;
            let di = idx.neg().add_public_scalar(RingValue(i as u64));
            let upd = s.mul_batch(&[(&take, &dv), (&take, &di)])?;
            best = best.add(&upd[0])?;
            idx = idx.add(&upd[1])?;
        }
        let opened = s.scoped("argmin_reveal", |s| s.reveal(&idx, Reveal::All))?.unwrap();
        let out = opened
            .iter()
            .map(|v| {
                let i = v.0 as usize;
                if i < k {
                    Ok(i)
                } else {
                    Err(Error::protocol("argmin index out of range"))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((out, best))
    })
}

/// Public index of the first minimum of `v`.
pub fn sec_argmin(s: &mut Session, v: &SharedVector) -> Result<usize> {
    if v.is_empty() {
        return Err(Error::shape("argmin of an empty vector"));
    }
    Ok(sec_argmin_rows(s, std::slice::from_ref(v))?.0[0])
}

/// Float simulation of the reciprocal iteration.
pub fn reciprocal_float(y: f64, cfg: &ApproxConfig) -> f64 {
    let mut z = 2f64.powi(-(cfg.newton_init_log2 as i32));
    for _ in 0..cfg.newton_iters {
        z = 2.0 * z - y * z * z;
    }
    z
}

/// Float simulation of the exponential approximation.
pub fn exp_float(x: f64, cfg: &ApproxConfig) -> f64 {
    let mut a = 1.0 + x / 2f64.powi(cfg.exp_log_rounds as i32);
    for _ in 0..cfg.exp_log_rounds {
        a *= a;
    }
    a
}

/// Float simulation of the sigmoid pipeline.
pub fn sigmoid_float(x: f64, cfg: &ApproxConfig) -> f64 {
    let c = cfg.sigmoid_clamp;
    let x = if c > 0.0 { x.clamp(-c, c) } else { x };
    reciprocal_float(1.0 + exp_float(-x, cfg), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{open, Harness};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn run_unary(
        n: usize,
        xs: &[f64],
        f: impl Fn(&mut Session, &SharedVector) -> Result<SharedVector> + Sync,
    ) -> Vec<f64> {
        let h = Harness::new(n, 7).unwrap();
        let shares = h.share_fixed(xs, 1).unwrap();
        let out = h.run("unary", |s| f(s, &shares[s.id - 1])).unwrap();
        h.fp.decode_slice(&open(&out).unwrap())
    }

    #[test]
    fn reciprocal_tracks_float_simulation() {
        let cfg = ApproxConfig::default();
        let ys: Vec<f64> = (0..200).map(|i| 0.5 + i as f64 * 5.0).collect();
        let got = run_unary(3, &ys, |s, y| sec_reciprocal(s, y, &cfg));
        for (y, z) in ys.iter().zip(got) {
            let sim = reciprocal_float(*y, &cfg);
            assert!((z - sim).abs() <= 2f64.powi(-14), "y={y} z={z} sim={sim}");
            assert!((z - 1.0 / y).abs() <= 2f64.powi(-14), "y={y} z={z}");
        }
    }

    #[test]
    fn reciprocal_examples() {
        let cfg = ApproxConfig::default();
        let got = run_unary(2, &[4.0, 0.5], |s, y| sec_reciprocal(s, y, &cfg));
        assert!((got[0] - 0.25).abs() < 1e-4);
        assert!((got[1] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn reciprocal_rejects_bad_init() {
        let cfg = ApproxConfig { newton_init_log2: 40, ..Default::default() };
        let h = Harness::new(2, 1).unwrap();
        let shares = h.share_fixed(&[1.0], 1).unwrap();
        let err = h.run("bad", |s| sec_reciprocal(s, &shares[s.id - 1], &cfg)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn division_example() {
        let cfg = ApproxConfig::default();
        let h = Harness::new(3, 2).unwrap();
        let x = h.share_fixed(&[3.0, -7.5], 1).unwrap();
        let y = h.share_fixed(&[4.0, 2.5], 2).unwrap();
        let out = h.run("div", |s| sec_div(s, &x[s.id - 1], &y[s.id - 1], &cfg)).unwrap();
        let got = h.fp.decode_slice(&open(&out).unwrap());
        assert!((got[0] - 0.75).abs() < 1e-4, "{got:?}");
        assert!((got[1] + 3.0).abs() < 1e-4, "{got:?}");
    }

    #[test]
    fn exp_tracks_float_simulation() {
        let cfg = ApproxConfig::default();
        let xs: Vec<f64> = (0..81).map(|i| -4.0 + i as f64 * 0.1).collect();
        let got = run_unary(4, &xs, |s, x| sec_exp(s, x, &cfg));
        for (x, e) in xs.iter().zip(got) {
            let want = exp_float(*x, &cfg);
            assert!((e - want).abs() < 2e-5 + 1e-5 * want, "x={x} e={e}");
        }
    }

    #[test]
    fn exp_uses_one_beaver_round_per_squaring() {
        for n in 1..=4 {
            let cfg = ApproxConfig { exp_log_rounds: n, ..Default::default() };
            let h = Harness::new(3, 3).unwrap();
            let x = h.share_fixed(&[0.5, -1.0], 1).unwrap();
            h.run("exp", |s| sec_exp(s, &x[s.id - 1], &cfg)).unwrap();
            assert_eq!(h.stats().op_rounds("beaver_mul"), n as u64);
        }
    }

    #[test]
    fn sigmoid_examples() {
        let cfg = ApproxConfig::default();
        let got = run_unary(3, &[0.0, 2.0, 4.0, 10.0, -10.0], |s, x| sec_sigmoid(s, x, &cfg));
        assert!((got[0] - 0.5).abs() < 1e-4);
        for (x, g) in [0.0, 2.0, 4.0, 10.0, -10.0].iter().zip(&got) {
            assert!((g - sigmoid_float(*x, &cfg)).abs() < 1e-3, "x={x} g={g}");
        }
        assert!((got[1] - 0.941).abs() < 1e-3);
        let reference = ApproxConfig::reference_mode();
        assert!((sigmoid_float(0.0, &reference) - 0.4323).abs() < 1e-4);
        let got = run_unary(3, &[0.0], |s, x| sec_sigmoid(s, x, &reference));
        assert!((got[0] - 0.4323).abs() < 2e-3, "{got:?}");
    }

    #[test]
    fn less_is_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for n in 2..=5 {
            let h = Harness::new(n, n as u64).unwrap();
            let mut a: Vec<RingValue> = (0..300).map(|_| RingValue::from_signed(rng.gen_range(-(1i64 << 50)..(1i64 << 50)))).collect();
            let b: Vec<RingValue> = (0..300).map(|_| RingValue::from_signed(rng.gen_range(-(1i64 << 50)..(1i64 << 50)))).collect();
            a[0] = b[0];
            a[1] = b[1] - RingValue(1);
            a[2] = b[2] + RingValue(1);
            let sa = h.share_plain(&a, Scale::Raw, 1).unwrap();
            let sb = h.share_plain(&b, Scale::Raw, 2).unwrap();
            let out = h.run("less", |s| sec_less(s, &sa[s.id - 1], &sb[s.id - 1])).unwrap();
            let bits = open(&out).unwrap();
            for i in 0..a.len() {
                let want = (a[i].as_signed() < b[i].as_signed()) as u64;
                assert_eq!(bits[i].0, want, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn argmin_prefers_first_minimum() {
        let h = Harness::new(3, 5).unwrap();
        let v = h.share_fixed(&[3.0, 1.0, 1.0, 2.0], 1).unwrap();
        let out = h.run("argmin", |s| sec_argmin(s, &v[s.id - 1])).unwrap();
        assert!(out.iter().all(|&i| i == 1));
        let v = h.share_fixed(&[-0.5], 2).unwrap();
        let out = h.run("argmin1", |s| sec_argmin(s, &v[s.id - 1])).unwrap();
        assert_eq!(out, vec![0, 0, 0]);
    }

    #[test]
    fn argmin_rows_report_minima() {
        let h = Harness::new(2, 6).unwrap();
        let rows = [[4.0, -2.0, 7.0], [0.0, 0.0, -1.0]];
        let shared: Vec<Vec<SharedVector>> = rows.iter().enumerate().map(|(i, r)| h.share_fixed(r, i as u64).unwrap()).collect();
        let out = h
            .run("rows", |s| {
                let mine: Vec<SharedVector> = shared.iter().map(|r| r[s.id - 1].clone()).collect();
                sec_argmin_rows(s, &mine)
            })
            .unwrap();
        assert_eq!(out[0].0, vec![1, 2]);
        let mins: Vec<SharedVector> = out.into_iter().map(|o| o.1).collect();
        assert_eq!(h.fp.decode_slice(&open(&mins).unwrap()), vec![-2.0, -1.0]);
    }

    #[test]
    fn argmin_rejects_empty() {
        let h = Harness::new(2, 6).unwrap();
        let err = h.run("empty", |s| sec_argmin(s, &s.zeros(0, Scale::Fixed))).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }
}
