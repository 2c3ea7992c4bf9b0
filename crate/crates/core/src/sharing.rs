//! Two-party additive sharing and a Beaver-triple multiplication used as an
//! independent reference path in tests.

use crate::error::{Error, Result};
use crate::linalg::RingMatrix;
use crate::ring::SeededRng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareMatrix {
    pub index: u8,
    pub payload: RingMatrix,
}

impl ShareMatrix {
    pub fn new(index: u8, payload: RingMatrix) -> Self {
        ShareMatrix { index, payload }
    }

    pub fn add(&self, other: &ShareMatrix) -> Result<ShareMatrix> {
        self.same_index(other)?;
        Ok(ShareMatrix::new(self.index, self.payload.add(&other.payload)?))
    }

    pub fn sub(&self, other: &ShareMatrix) -> Result<ShareMatrix> {
        self.same_index(other)?;
        Ok(ShareMatrix::new(self.index, self.payload.sub(&other.payload)?))
    }

    /// Adds a public matrix; only share 0 absorbs it.
    pub fn add_public(&self, c: &RingMatrix) -> Result<ShareMatrix> {
        if self.index == 0 {
            Ok(ShareMatrix::new(0, self.payload.add(c)?))
        } else {
            Ok(self.clone())
        }
    }

    pub fn scalar_mul(&self, c: u64) -> ShareMatrix {
        ShareMatrix::new(self.index, self.payload.scalar_mul(c))
    }

    fn same_index(&self, other: &ShareMatrix) -> Result<()> {
        if self.index != other.index {
            return Err(Error::ShareIndex {
                expected: self.index,
                got: other.index,
            });
        }
        Ok(())
    }
}

/// Splits `secret` into a uniform share 0 and `secret - share0`.
pub fn share(secret: &RingMatrix, rng: &mut SeededRng) -> (ShareMatrix, ShareMatrix) {
    let s0 = RingMatrix::random(secret.ring(), secret.rows(), secret.cols(), rng);
    let s1 = secret.sub(&s0).expect("same shape");
    (ShareMatrix::new(0, s0), ShareMatrix::new(1, s1))
}

pub fn reconstruct(s0: &ShareMatrix, s1: &ShareMatrix) -> Result<RingMatrix> {
    if s0.index != 0 {
        return Err(Error::ShareIndex {
            expected: 0,
            got: s0.index,
        });
    }
    if s1.index != 1 {
        return Err(Error::ShareIndex {
            expected: 1,
            got: s1.index,
        });
    }
    s0.payload.add(&s1.payload)
}

/// Shared `(a, b, c)` with `c = a * b` (matrix product; scalars are 1x1).
#[derive(Debug, Clone)]
pub struct BeaverTriple {
    pub a: (ShareMatrix, ShareMatrix),
    pub b: (ShareMatrix, ShareMatrix),
    pub c: (ShareMatrix, ShareMatrix),
}

impl BeaverTriple {
    /// Trusted-dealer triple for an `m x k` by `k x n` product.
    pub fn deal(ring: crate::ring::Ring, m: usize, k: usize, n: usize, rng: &mut SeededRng) -> Self {
        let a = RingMatrix::random(ring, m, k, rng);
        let b = RingMatrix::random(ring, k, n, rng);
        let c = a.mat_mul(&b).expect("dealer shapes");
        BeaverTriple {
            a: share(&a, rng),
            b: share(&b, rng),
            c: share(&c, rng),
        }
    }

    /// Test-mode consistency check by reconstruction.
    pub fn check(&self) -> Result<bool> {
        let a = reconstruct(&self.a.0, &self.a.1)?;
        let b = reconstruct(&self.b.0, &self.b.1)?;
        let c = reconstruct(&self.c.0, &self.c.1)?;
        Ok(a.mat_mul(&b)? == c)
    }
}

/// One party's local step: `z_i = i*e*f - e*<b>_i - <a>_i*f + <c>_i` where
/// `e = x + a` and `f = y + b` are the opened values.
pub fn beaver_local(
    index: u8,
    e: &RingMatrix,
    f: &RingMatrix,
    a: &ShareMatrix,
    b: &ShareMatrix,
    c: &ShareMatrix,
) -> Result<ShareMatrix> {
    let mut z = c.payload.sub(&e.mat_mul(&b.payload)?)?.sub(&a.payload.mat_mul(f)?)?;
    if index == 1 {
        z = z.add(&e.mat_mul(f)?)?;
    }
    Ok(ShareMatrix::new(index, z))
}

/// Multiplies shared `x` and `y`; only `x + a` and `y + b` are opened.
pub fn beaver_mul(
    x: (&ShareMatrix, &ShareMatrix),
    y: (&ShareMatrix, &ShareMatrix),
    triple: &BeaverTriple,
) -> Result<(ShareMatrix, ShareMatrix)> {
    if x.0.payload.shape() != triple.a.0.payload.shape() || y.0.payload.shape() != triple.b.0.payload.shape() {
        return Err(Error::Shape {
            op: "beaver_mul",
            left: x.0.payload.shape(),
            right: triple.a.0.payload.shape(),
        });
    }
    let e = reconstruct(&x.0.add(&triple.a.0)?, &x.1.add(&triple.a.1)?)?;
    let f = reconstruct(&y.0.add(&triple.b.0)?, &y.1.add(&triple.b.1)?)?;
    let z0 = beaver_local(0, &e, &f, &triple.a.0, &triple.b.0, &triple.c.0)?;
    let z1 = beaver_local(1, &e, &f, &triple.a.1, &triple.b.1, &triple.c.1)?;
    Ok((z0, z1))
}
