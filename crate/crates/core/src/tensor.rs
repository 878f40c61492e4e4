//! Dense truncated tensor algebra over R^d.
//!
//! Multi-indices are 0-based in code and stored row-major, so the last slot
//! varies fastest.

use std::fmt::Debug;

use nalgebra::DMatrix;
use num_traits::{FromPrimitive, Num, NumAssign};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest number of entries a single tensor may hold.
pub const MAX_ENTRIES: usize = 10_000_000;
/// Highest level accepted by [`sym`].
pub const MAX_SYM_LEVEL: usize = 8;

/// Entry type of a tensor: real or complex.
pub trait Elem: Copy + Num + NumAssign + FromPrimitive + Debug + Send + Sync + 'static {}

impl<T> Elem for T where T: Copy + Num + NumAssign + FromPrimitive + Debug + Send + Sync + 'static {}

/// Number of entries of a level-`level` tensor over R^`dim`, or a capacity error.
pub fn checked_len(dim: usize, level: usize) -> Result<usize> {
    if dim == 0 {
        return Err(Error::InvalidArgument("tensor dimension must be positive".into()));
    }
    match u32::try_from(level).ok().and_then(|l| dim.checked_pow(l)) {
        Some(n) if n <= MAX_ENTRIES => Ok(n),
        _ => Err(Error::Capacity { dim, level }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorRepr<T>", bound(deserialize = "T: Deserialize<'de> + Elem"))]
pub struct Tensor<T> {
    dim: usize,
    level: usize,
    entries: Vec<T>,
}

#[derive(Deserialize)]
struct TensorRepr<T> {
    dim: usize,
    level: usize,
    entries: Vec<T>,
}

impl<T: Elem> TryFrom<TensorRepr<T>> for Tensor<T> {
    type Error = Error;

    fn try_from(r: TensorRepr<T>) -> Result<Self> {
        Tensor::from_entries(r.dim, r.level, r.entries)
    }
}

impl<T: Elem> Tensor<T> {
    pub fn zeros(dim: usize, level: usize) -> Result<Self> {
        let n = checked_len(dim, level)?;
        Ok(Tensor { dim, level, entries: vec![T::zero(); n] })
    }

    pub fn scalar(dim: usize, value: T) -> Self {
        assert!(dim > 0, "tensor dimension must be positive");
        Tensor { dim, level: 0, entries: vec![value] }
    }

    pub fn vector(v: &[T]) -> Self {
        assert!(!v.is_empty(), "tensor dimension must be positive");
        Tensor { dim: v.len(), level: 1, entries: v.to_vec() }
    }

    pub fn from_entries(dim: usize, level: usize, entries: Vec<T>) -> Result<Self> {
        let n = checked_len(dim, level)?;
        if entries.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: entries.len() });
        }
        Ok(Tensor { dim, level, entries })
    }

    /// The pure tensor e_{i1} ⊗ … ⊗ e_{ik} (0-based indices).
    pub fn basis(dim: usize, index: &[usize]) -> Result<Self> {
        let mut t = Self::zeros(dim, index.len())?;
        let off = t.offset(index)?;
        t.entries[off] = T::one();
        Ok(t)
    }

    /// Level-2 tensor with entry (i,j) = a[(i,j)].
    pub fn from_matrix(a: &DMatrix<T>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), found: a.ncols() });
        }
        let d = a.nrows();
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                entries.push(a[(i, j)]);
            }
        }
        Self::from_entries(d, 2, entries)
    }

    pub fn to_matrix(&self) -> Result<DMatrix<T>> {
        if self.level != 2 {
            return Err(Error::Arity { arity: 2, level: self.level });
        }
        Ok(DMatrix::from_row_slice(self.dim, self.dim, &self.entries))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [T] {
        &mut self.entries
    }

    pub fn into_entries(self) -> Vec<T> {
        self.entries
    }

    /// Value of a level-0 tensor.
    pub fn as_scalar(&self) -> Option<T> {
        (self.level == 0).then(|| self.entries[0])
    }

    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.level {
            return Err(Error::Arity { arity: index.len(), level: self.level });
        }
        let mut off = 0;
        for &i in index {
            if i >= self.dim {
                return Err(Error::InvalidArgument(format!(
                    "index {i} out of range for dimension {}",
                    self.dim
                )));
            }
            off = off * self.dim + i;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.entries[self.offset(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: T) -> Result<()> {
        let off = self.offset(index)?;
        self.entries[off] = value;
        Ok(())
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        if self.level != other.level {
            return Err(Error::Arity { arity: self.level, level: other.level });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled(other, T::one())?;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled(other, T::zero() - T::one())?;
        Ok(out)
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, other: &Self, a: T) -> Result<()> {
        self.check_same_shape(other)?;
        for (x, &y) in self.entries.iter_mut().zip(&other.entries) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn scale(&self, a: T) -> Self {
        self.map(|x| x * a)
    }

    pub fn map<U: Elem>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor { dim: self.dim, level: self.level, entries: self.entries.iter().map(|&x| f(x)).collect() }
    }

    /// Reorders index slots: `out[i_0..i_{k-1}] = self[i_{perm[0]}..i_{perm[k-1]}]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let k = self.level;
        if perm.len() != k {
            return Err(Error::Arity { arity: perm.len(), level: k });
        }
        let mut seen = vec![false; k];
        for &p in perm {
            if p >= k || seen[p] {
                return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        let strides = strides(self.dim, k);
        // stride of output slot s inside the source tensor
        let src_stride: Vec<usize> = (0..k)
            .map(|s| {
                // output slot s reads source slot q where perm[q] == s
                let q = perm.iter().position(|&p| p == s).unwrap();
                strides[q]
            })
            .collect();
        let mut out = Vec::with_capacity(self.entries.len());
        let mut idx = vec![0usize; k];
        let mut src = 0usize;
        for _ in 0..self.entries.len() {
            out.push(self.entries[src]);
            for s in (0..k).rev() {
                idx[s] += 1;
                src += src_stride[s];
                if idx[s] < self.dim {
                    break;
                }
                src -= src_stride[s] * self.dim;
                idx[s] = 0;
            }
        }
        Ok(Tensor { dim: self.dim, level: k, entries: out })
    }

    /// Swaps the two slots of a level-2 tensor.
    pub fn transpose(&self) -> Result<Self> {
        if self.level != 2 {
            return Err(Error::Arity { arity: 2, level: self.level });
        }
        self.permute(&[1, 0])
    }
}

impl<T: Real> Tensor<T> {
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }
}

fn strides(dim: usize, level: usize) -> Vec<usize> {
    let mut s = vec![1usize; level];
    for i in (0..level.saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dim;
    }
    s
}

pub fn tensor_product<T: Elem>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    let n = checked_len(a.dim, a.level + b.level)?;
    let mut entries = Vec::with_capacity(n);
    for &x in &a.entries {
        entries.extend(b.entries.iter().map(|&y| x * y));
    }
    Ok(Tensor { dim: a.dim, level: a.level + b.level, entries })
}

/// Maximum absolute entry.
pub fn linfty_norm<T: Real>(t: &Tensor<T>) -> T {
    t.entries.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Average of `t` over all permutations of its index slots.
pub fn sym<T: Elem>(t: &Tensor<T>) -> Result<Tensor<T>> {
    let k = t.level;
    if k > MAX_SYM_LEVEL {
        return Err(Error::SymLevel(k));
    }
    if k < 2 {
        return Ok(t.clone());
    }
    let mut acc = Tensor::zeros(t.dim, k)?;
    let mut perm: Vec<usize> = (0..k).collect();
    let mut count = 0usize;
    loop {
        let p = t.permute(&perm)?;
        for (a, &b) in acc.entries.iter_mut().zip(&p.entries) {
            *a += b;
        }
        count += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let inv = T::one() / T::from_usize(count).expect("factorial representable");
    for a in &mut acc.entries {
        *a *= inv;
    }
    Ok(acc)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// A₁ ⊗ … ⊗ A_n acting slot-wise on level-n tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixTensorOperator<T: nalgebra::Scalar> {
    dim: usize,
    factors: Vec<DMatrix<T>>,
}

impl<T: Elem> MatrixTensorOperator<T> {
    pub fn new(factors: Vec<DMatrix<T>>) -> Result<Self> {
        let dim = factors
            .first()
            .map(|f| f.nrows())
            .ok_or_else(|| Error::InvalidArgument("operator needs at least one factor".into()))?;
        for f in &factors {
            if f.nrows() != dim || f.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: f.ncols().max(f.nrows()) });
            }
        }
        Ok(MatrixTensorOperator { dim, factors })
    }

    /// The same factor on every one of `arity` slots.
    pub fn power(a: &DMatrix<T>, arity: usize) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), found: a.ncols() });
        }
        Ok(MatrixTensorOperator { dim: a.nrows(), factors: vec![a.clone(); arity] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arity(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[DMatrix<T>] {
        &self.factors
    }
}

/// `result[I] = Σ_J Π_ℓ (A_ℓ)[i_ℓ, j_ℓ] t[J]`, applied one slot at a time.
pub fn apply_operator<T: Elem>(op: &MatrixTensorOperator<T>, t: &Tensor<T>) -> Result<Tensor<T>> {
    if op.arity() != t.level {
        return Err(Error::Arity { arity: op.arity(), level: t.level });
    }
    if op.dim != t.dim {
        return Err(Error::DimensionMismatch { expected: op.dim, found: t.dim });
    }
    let d = t.dim;
    let k = t.level;
    let mut cur = t.entries.clone();
    let mut next = vec![T::zero(); cur.len()];
    for (slot, a) in op.factors.iter().enumerate() {
        let inner = d.pow((k - slot - 1) as u32);
        let outer = d.pow(slot as u32);
        for o in 0..outer {
            for i in 0..d {
                for r in 0..inner {
                    let mut s = T::zero();
                    for j in 0..d {
                        s += a[(i, j)] * cur[(o * d + j) * inner + r];
                    }
                    next[(o * d + i) * inner + r] = s;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(Tensor { dim: d, level: k, entries: cur })
}

/// Levels 0..=N of a tensor series over R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Tensor<T>>", into = "Vec<Tensor<T>>")]
#[serde(bound(serialize = "T: Serialize + Elem", deserialize = "T: Deserialize<'de> + Elem"))]
pub struct TruncatedTensorSeries<T> {
    dim: usize,
    levels: Vec<Tensor<T>>,
}

impl<T: Elem> TryFrom<Vec<Tensor<T>>> for TruncatedTensorSeries<T> {
    type Error = Error;

    fn try_from(levels: Vec<Tensor<T>>) -> Result<Self> {
        Self::from_levels(levels)
    }
}

impl<T: Elem> From<TruncatedTensorSeries<T>> for Vec<Tensor<T>> {
    fn from(s: TruncatedTensorSeries<T>) -> Self {
        s.levels
    }
}

impl<T: Elem> TruncatedTensorSeries<T> {
    pub fn zero(dim: usize, depth: usize) -> Result<Self> {
        let levels = (0..=depth).map(|k| Tensor::zeros(dim, k)).collect::<Result<Vec<_>>>()?;
        Ok(TruncatedTensorSeries { dim, levels })
    }

    /// The unit 𝟏 = (1, 0, 0, …).
    pub fn one(dim: usize, depth: usize) -> Result<Self> {
        let mut s = Self::zero(dim, depth)?;
        s.levels[0].entries[0] = T::one();
        Ok(s)
    }

    pub fn from_levels(levels: Vec<Tensor<T>>) -> Result<Self> {
        let dim = levels
            .first()
            .map(|l| l.dim)
            .ok_or_else(|| Error::InvalidArgument("series needs level 0".into()))?;
        for (k, l) in levels.iter().enumerate() {
            if l.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: l.dim });
            }
            if l.level != k {
                return Err(Error::Arity { arity: k, level: l.level });
            }
        }
        Ok(TruncatedTensorSeries { dim, levels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> &Tensor<T> {
        &self.levels[k]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut Tensor<T> {
        &mut self.levels[k]
    }

    pub fn levels(&self) -> &[Tensor<T>] {
        &self.levels
    }

    pub fn into_levels(self) -> Vec<Tensor<T>> {
        self.levels
    }

    pub fn truncate(&self, depth: usize) -> Result<Self> {
        if depth > self.depth() {
            return Err(Error::DepthMismatch { left: self.depth(), right: depth });
        }
        Ok(TruncatedTensorSeries { dim: self.dim, levels: self.levels[..=depth].to_vec() })
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        if self.depth() != other.depth() {
            return Err(Error::DepthMismatch { left: self.depth(), right: other.depth() });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let levels = self.levels.iter().zip(&other.levels).map(|(a, b)| a.add(b)).collect::<Result<_>>()?;
        Ok(TruncatedTensorSeries { dim: self.dim, levels })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let levels = self.levels.iter().zip(&other.levels).map(|(a, b)| a.sub(b)).collect::<Result<_>>()?;
        Ok(TruncatedTensorSeries { dim: self.dim, levels })
    }

    pub fn scale(&self, a: T) -> Self {
        TruncatedTensorSeries { dim: self.dim, levels: self.levels.iter().map(|l| l.scale(a)).collect() }
    }

    /// In-place right multiplication by the exponential of a linear increment
    /// (one Chen step of a piecewise-linear path).
    pub fn mul_exp_inplace(&mut self, delta: &[T], scratch: &mut ChenScratch<T>) -> Result<()> {
        let d = self.dim;
        if delta.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: delta.len() });
        }
        let depth = self.depth();
        scratch.prepare(depth);
        let ChenScratch { acc, tmp, inv } = scratch;
        for n in (1..=depth).rev() {
            // Horner: acc = (((S0 Δ/n + S1) Δ/(n-1) + S2) …) Δ/1 + S_n
            acc.clear();
            acc.push(self.levels[0].entries[0]);
            for j in 1..=n {
                let c = inv[n - j + 1];
                tmp.clear();
                for &a in acc.iter() {
                    let ac = a * c;
                    tmp.extend(delta.iter().map(|&x| ac * x));
                }
                for (t, &s) in tmp.iter_mut().zip(&self.levels[j].entries) {
                    *t += s;
                }
                std::mem::swap(acc, tmp);
            }
            self.levels[n].entries.copy_from_slice(acc);
        }
        Ok(())
    }
}

impl<T: Real> TruncatedTensorSeries<T> {
    /// Largest entrywise difference over all levels.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other)?;
        let mut m = T::zero();
        for (a, b) in self.levels.iter().zip(&other.levels) {
            m = m.max(a.max_abs_diff(b)?);
        }
        Ok(m)
    }
}

/// Reusable buffers for [`TruncatedTensorSeries::mul_exp_inplace`].
#[derive(Clone, Debug, Default)]
pub struct ChenScratch<T> {
    acc: Vec<T>,
    tmp: Vec<T>,
    inv: Vec<T>,
}

impl<T: Elem> ChenScratch<T> {
    pub fn new() -> Self {
        ChenScratch { acc: Vec::new(), tmp: Vec::new(), inv: Vec::new() }
    }

    fn prepare(&mut self, depth: usize) {
        if self.inv.len() <= depth {
            self.inv = (0..=depth)
                .map(|k| if k == 0 { T::zero() } else { T::one() / T::from_usize(k).unwrap() })
                .collect();
        }
    }
}

/// c_n = Σ_i x_i ⊗ y_{n-i}, truncated at the common depth.
pub fn series_product<T: Elem>(
    x: &TruncatedTensorSeries<T>,
    y: &TruncatedTensorSeries<T>,
) -> Result<TruncatedTensorSeries<T>> {
    x.check_same_shape(y)?;
    let depth = x.depth();
    let mut out = TruncatedTensorSeries::zero(x.dim, depth)?;
    for n in 0..=depth {
        for i in 0..=n {
            let p = tensor_product(&x.levels[i], &y.levels[n - i])?;
            out.levels[n].add_scaled(&p, T::one())?;
        }
    }
    Ok(out)
}

/// Signature of the straight line with the given increment: level k is v^{⊗k}/k!.
pub fn tensor_exp<T: Elem>(increment: &[T], depth: usize) -> Result<TruncatedTensorSeries<T>> {
    let d = increment.len();
    if d == 0 {
        return Err(Error::InvalidArgument("increment must be non-empty".into()));
    }
    let mut levels = vec![Tensor::scalar(d, T::one())];
    let v = Tensor::vector(increment);
    for k in 1..=depth {
        checked_len(d, k)?;
        let next = tensor_product(&levels[k - 1], &v)?;
        let inv = T::one() / T::from_usize(k).unwrap();
        levels.push(next.scale(inv));
    }
    TruncatedTensorSeries::from_levels(levels)
}
