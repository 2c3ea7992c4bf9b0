//! Arithmetic in `Z_{2^l}` (l <= 64) with a two's-complement fixed-point view.
//!
//! Elements are stored as `u64` with the high `64 - l` bits cleared. Products
//! are computed with wrapping 64-bit arithmetic and then masked, which is
//! exact because `2^l` divides `2^64`.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ring {
    bits: u32,
    mask: u64,
}

impl Ring {
    pub fn new(bits: u32) -> Result<Self> {
        if !(2..=64).contains(&bits) {
            return Err(Error::config("ring_bits", format!("{bits} not in 2..=64")));
        }
        let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
        Ok(Ring { bits, mask })
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn mask(self) -> u64 {
        self.mask
    }

    #[inline]
    pub fn reduce(self, v: u64) -> u64 {
        v & self.mask
    }

    #[inline]
    pub fn add(self, a: u64, b: u64) -> u64 {
        a.wrapping_add(b) & self.mask
    }

    #[inline]
    pub fn sub(self, a: u64, b: u64) -> u64 {
        a.wrapping_sub(b) & self.mask
    }

    #[inline]
    pub fn mul(self, a: u64, b: u64) -> u64 {
        a.wrapping_mul(b) & self.mask
    }

    #[inline]
    pub fn neg(self, a: u64) -> u64 {
        a.wrapping_neg() & self.mask
    }

    /// Signed (two's-complement) reading of `v`.
    #[inline]
    pub fn to_signed(self, v: u64) -> i64 {
        let shift = 64 - self.bits;
        ((v << shift) as i64) >> shift
    }

    #[inline]
    pub fn from_signed(self, v: i64) -> u64 {
        (v as u64) & self.mask
    }

    /// Arithmetic right shift of the signed value by `k` bits (rounds toward
    /// negative infinity).
    #[inline]
    pub fn floor_shift(self, v: u64, k: u32) -> u64 {
        if k == 0 {
            return v;
        }
        let s = self.to_signed(v);
        let shifted = if k >= 64 { s >> 63 } else { s >> k };
        self.from_signed(shifted)
    }

    /// Right shift that rounds toward positive infinity.
    #[inline]
    pub fn ceil_shift(self, v: u64, k: u32) -> u64 {
        if k == 0 {
            return v;
        }
        let low = if k >= 64 { v } else { v & ((1u64 << k) - 1) };
        self.add(self.floor_shift(v, k), (low != 0) as u64)
    }

    /// Local truncation of one share of a two-share pair. Share 0 rounds up,
    /// share 1 rounds down, so the reconstructed result is exact for
    /// multiples of `2^k` and unbiased otherwise (given a uniform share 0).
    #[inline]
    pub fn truncate_share(self, v: u64, k: u32, index: u8) -> u64 {
        if index == 0 {
            self.ceil_shift(v, k)
        } else {
            self.floor_shift(v, k)
        }
    }

    /// What a pair `(s0, x - s0)` truncated with [`Ring::truncate_share`]
    /// reconstructs to.
    #[inline]
    pub fn trunc_pair(self, x: u64, s0: u64, k: u32) -> u64 {
        self.add(self.ceil_shift(s0, k), self.floor_shift(self.sub(x, s0), k))
    }

    /// Multiplicative inverse of an odd element by Newton-Hensel lifting.
    pub fn inverse(self, v: u64) -> Result<u64> {
        let v = self.reduce(v);
        if v & 1 == 0 {
            return Err(Error::NotInvertible(v));
        }
        // v * v == 1 mod 8, so v is its own inverse to 3 bits; each round
        // doubles the number of correct bits.
        let mut w = v;
        for _ in 0..5 {
            w = w.wrapping_mul(2u64.wrapping_sub(v.wrapping_mul(w)));
        }
        Ok(self.reduce(w))
    }

    pub fn pow(self, v: u64, mut e: u32) -> u64 {
        let mut base = self.reduce(v);
        let mut acc = self.reduce(1);
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }
}

/// An element of `Z_{2^l}`; the ring width travels separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RingElement(pub u64);

impl RingElement {
    pub fn value(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPointConfig {
    pub ring_bits: u32,
    pub frac_bits: u32,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            ring_bits: 64,
            frac_bits: 13,
        }
    }
}

impl FixedPointConfig {
    pub fn new(ring_bits: u32, frac_bits: u32) -> Result<Self> {
        let cfg = FixedPointConfig {
            ring_bits,
            frac_bits,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        Ring::new(self.ring_bits)?;
        if self.frac_bits + 1 >= self.ring_bits {
            return Err(Error::config(
                "frac_bits",
                format!("{} leaves no integer bits in a {}-bit ring", self.frac_bits, self.ring_bits),
            ));
        }
        Ok(())
    }

    /// True when a value at scale `2^{4f}` still has 8 bits of magnitude.
    pub fn has_product_headroom(&self) -> bool {
        4 * self.frac_bits + 8 <= self.ring_bits
    }

    pub fn ring(&self) -> Ring {
        Ring::new(self.ring_bits).expect("validated ring width")
    }

    pub fn ulp(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn with_frac_bits(&self, frac_bits: u32) -> Self {
        FixedPointConfig {
            ring_bits: self.ring_bits,
            frac_bits,
        }
    }
}

/// `round(x * 2^f)` in two's complement.
pub fn encode(x: f64, cfg: FixedPointConfig) -> Result<RingElement> {
    let limit = ((cfg.ring_bits - cfg.frac_bits - 1) as f64).exp2();
    if !x.is_finite() || x.abs() >= limit {
        return Err(Error::Overflow {
            value: x,
            ring_bits: cfg.ring_bits,
            frac_bits: cfg.frac_bits,
        });
    }
    let scaled = (x * (cfg.frac_bits as f64).exp2()).round();
    Ok(RingElement(cfg.ring().from_signed(scaled as i64)))
}

pub fn decode(v: RingElement, cfg: FixedPointConfig) -> f64 {
    cfg.ring().to_signed(v.0) as f64 / (cfg.frac_bits as f64).exp2()
}

/// Arithmetic right shift by `f` bits.
pub fn truncate(v: RingElement, f: u32, ring: Ring) -> RingElement {
    RingElement(ring.floor_shift(v.0, f))
}

pub fn ring_inverse(v: RingElement, ring: Ring) -> Result<RingElement> {
    ring.inverse(v.0).map(RingElement)
}

/// Deterministic ChaCha20 stream of ring elements.
pub struct SeededRng {
    seed: u64,
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream keyed by `(seed, label, index)`.
    pub fn derive(seed: u64, label: &str, index: u64) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update(index.to_le_bytes());
        let key: [u8; 32] = h.finalize().into();
        SeededRng {
            seed,
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self, ring: Ring) -> u64 {
        ring.reduce(self.inner.next_u64())
    }

    pub fn odd(&mut self, ring: Ring) -> u64 {
        self.uniform(ring) | 1
    }

    pub fn unit_f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..hi)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn inner(&mut self) -> &mut ChaCha20Rng {
        &mut self.inner
    }
}

pub fn sample_uniform(rng: &mut SeededRng, ring: Ring, len: usize) -> Vec<RingElement> {
    (0..len).map(|_| RingElement(rng.uniform(ring))).collect()
}

pub fn sample_odd(rng: &mut SeededRng, ring: Ring) -> RingElement {
    RingElement(rng.odd(ring))
}
