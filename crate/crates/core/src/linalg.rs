//! Dense row-major matrices over `Z_{2^l}`.

use crate::error::{Error, Result};
use crate::ring::{decode, encode, FixedPointConfig, Ring, RingElement, SeededRng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingMatrix {
    ring: Ring,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl RingMatrix {
    pub fn zeros(ring: Ring, rows: usize, cols: usize) -> Self {
        RingMatrix {
            ring,
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(ring: Ring, n: usize) -> Self {
        let mut m = Self::zeros(ring, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn from_vec(ring: Ring, rows: usize, cols: usize, data: Vec<u64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        let data = data.into_iter().map(|v| ring.reduce(v)).collect();
        Ok(RingMatrix {
            ring,
            rows,
            cols,
            data,
        })
    }

    pub fn from_fn(ring: Ring, rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> u64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(ring.reduce(f(i, j)));
            }
        }
        RingMatrix {
            ring,
            rows,
            cols,
            data,
        }
    }

    pub fn random(ring: Ring, rows: usize, cols: usize, rng: &mut SeededRng) -> Self {
        Self::from_fn(ring, rows, cols, |_, _| rng.uniform(ring))
    }

    /// Encodes row-major reals.
    pub fn encode(cfg: FixedPointConfig, rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape {
                op: "encode",
                left: (rows, cols),
                right: (values.len(), 1),
            });
        }
        let data = values
            .iter()
            .map(|&x| encode(x, cfg).map(RingElement::value))
            .collect::<Result<Vec<_>>>()?;
        Ok(RingMatrix {
            ring: cfg.ring(),
            rows,
            cols,
            data,
        })
    }

    pub fn decode(&self, cfg: FixedPointConfig) -> Vec<f64> {
        self.data.iter().map(|&v| decode(RingElement(v), cfg)).collect()
    }

    pub fn ring(&self) -> Ring {
        self.ring
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        self.data[i * self.cols + j] = self.ring.reduce(v);
    }

    /// Copy of rows `start..end`.
    pub fn row_range(&self, start: usize, end: usize) -> RingMatrix {
        RingMatrix {
            ring: self.ring,
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Copy of columns `start..end`.
    pub fn col_range(&self, start: usize, end: usize) -> RingMatrix {
        Self::from_fn(self.ring, self.rows, end - start, |i, j| self.get(i, start + j))
    }

    pub fn hconcat(&self, other: &RingMatrix) -> Result<RingMatrix> {
        if self.rows != other.rows {
            return Err(self.shape_err("hconcat", other));
        }
        Ok(Self::from_fn(self.ring, self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self.get(i, j)
            } else {
                other.get(i, j - self.cols)
            }
        }))
    }

    pub fn transpose(&self) -> RingMatrix {
        Self::from_fn(self.ring, self.cols, self.rows, |i, j| self.get(j, i))
    }

    fn shape_err(&self, op: &'static str, other: &RingMatrix) -> Error {
        Error::Shape {
            op,
            left: self.shape(),
            right: other.shape(),
        }
    }

    fn check_ring(&self, other: &RingMatrix) -> Result<()> {
        if self.ring != other.ring {
            return Err(Error::RingMismatch(self.ring.bits(), other.ring.bits()));
        }
        Ok(())
    }

    /// `self * other` without truncation.
    pub fn mat_mul(&self, other: &RingMatrix) -> Result<RingMatrix> {
        self.check_ring(other)?;
        if self.cols != other.rows {
            return Err(self.shape_err("mat_mul", other));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0u64; n * m];
        if m == 1 {
            for (i, o) in out.iter_mut().enumerate() {
                let row = &self.data[i * k..(i + 1) * k];
                *o = row
                    .iter()
                    .zip(&other.data)
                    .fold(0u64, |acc, (&a, &b)| acc.wrapping_add(a.wrapping_mul(b)));
            }
        } else {
            for i in 0..n {
                let orow = &mut out[i * m..(i + 1) * m];
                for p in 0..k {
                    let a = self.data[i * k + p];
                    if a == 0 {
                        continue;
                    }
                    let brow = &other.data[p * m..(p + 1) * m];
                    for (o, &b) in orow.iter_mut().zip(brow) {
                        *o = o.wrapping_add(a.wrapping_mul(b));
                    }
                }
            }
        }
        let ring = self.ring;
        out.iter_mut().for_each(|v| *v = ring.reduce(*v));
        Ok(RingMatrix {
            ring,
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `self^T * other` without materializing the transpose.
    pub fn transpose_mul(&self, other: &RingMatrix) -> Result<RingMatrix> {
        self.check_ring(other)?;
        if self.rows != other.rows {
            return Err(self.shape_err("transpose_mul", other));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0u64; k * m];
        for r in 0..n {
            let arow = &self.data[r * k..(r + 1) * k];
            let brow = &other.data[r * m..(r + 1) * m];
            if m == 1 {
                let b = brow[0];
                for (o, &a) in out.iter_mut().zip(arow) {
                    *o = o.wrapping_add(a.wrapping_mul(b));
                }
            } else {
                for (i, &a) in arow.iter().enumerate() {
                    let orow = &mut out[i * m..(i + 1) * m];
                    for (o, &b) in orow.iter_mut().zip(brow) {
                        *o = o.wrapping_add(a.wrapping_mul(b));
                    }
                }
            }
        }
        let ring = self.ring;
        out.iter_mut().for_each(|v| *v = ring.reduce(*v));
        Ok(RingMatrix {
            ring,
            rows: k,
            cols: m,
            data: out,
        })
    }

    fn zip_with(&self, other: &RingMatrix, op: &'static str, f: impl Fn(u64, u64) -> u64) -> Result<RingMatrix> {
        self.check_ring(other)?;
        if self.shape() != other.shape() {
            return Err(self.shape_err(op, other));
        }
        Ok(RingMatrix {
            ring: self.ring,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &RingMatrix) -> Result<RingMatrix> {
        let r = self.ring;
        self.zip_with(other, "add", |a, b| r.add(a, b))
    }

    pub fn sub(&self, other: &RingMatrix) -> Result<RingMatrix> {
        let r = self.ring;
        self.zip_with(other, "sub", |a, b| r.sub(a, b))
    }

    pub fn map(&self, f: impl Fn(u64) -> u64) -> RingMatrix {
        let r = self.ring;
        RingMatrix {
            ring: r,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| r.reduce(f(v))).collect(),
        }
    }

    pub fn neg(&self) -> RingMatrix {
        let r = self.ring;
        self.map(|v| r.neg(v))
    }

    pub fn scalar_mul(&self, c: u64) -> RingMatrix {
        let r = self.ring;
        self.map(|v| r.mul(c, v))
    }

    pub fn cube_elementwise(&self) -> RingMatrix {
        let r = self.ring;
        self.map(|v| r.mul(r.mul(v, v), v))
    }

    pub fn add_scalar(&self, c: u64) -> RingMatrix {
        let r = self.ring;
        self.map(|v| r.add(v, c))
    }

    pub fn floor_shift(&self, k: u32) -> RingMatrix {
        let r = self.ring;
        self.map(|v| r.floor_shift(v, k))
    }

    pub fn ceil_shift(&self, k: u32) -> RingMatrix {
        let r = self.ring;
        self.map(|v| r.ceil_shift(v, k))
    }

    /// Truncates this matrix as share `index` of a pair.
    pub fn truncate_share(&self, k: u32, index: u8) -> RingMatrix {
        let r = self.ring;
        self.map(|v| r.truncate_share(v, k, index))
    }

    /// Elementwise [`Ring::trunc_pair`]: the value a pair `(s0, self - s0)`
    /// reconstructs to after share-wise truncation.
    pub fn trunc_pair(&self, s0: &RingMatrix, k: u32) -> Result<RingMatrix> {
        let r = self.ring;
        self.zip_with(s0, "trunc_pair", |x, s| r.trunc_pair(x, s, k))
    }
}
