//! Dense complex tensors and the small Hermitian linear algebra used for PSD
//! validation, factorization and the transfer-matrix spectra.
//!
//! Tensors are stored row-major: the last axis varies fastest.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative tolerance for Hermiticity and PSD checks.
pub const PSD_TOL: f64 = 1e-9;

const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl ComplexTensor {
    /// Builds a tensor, rejecting zero-sized axes, a data length that does not
    /// match the shape, and non-finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if let Some(axis) = shape.iter().position(|&s| s == 0) {
            return Err(Error::Shape(format!("axis {axis} has size 0")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|z| !z.is_finite()) {
            return Err(Error::Shape(format!("entry {i} is not finite")));
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<C64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::from_parts(shape, vec![C64::new(0.0, 0.0); len])
    }

    pub fn scalar(value: C64) -> Self {
        Self::from_parts(Vec::new(), vec![value])
    }

    pub fn from_real(shape: Vec<usize>, values: &[f64]) -> Result<Self> {
        Self::new(shape, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = C64::new(1.0, 0.0);
        }
        t
    }

    /// Square or rectangular matrix from rows.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(vec![n, m], rows.iter().flatten().copied().collect())
    }

    pub fn diag(values: &[C64]) -> Self {
        let n = values.len();
        let mut t = Self::zeros(vec![n, n]);
        for (i, v) in values.iter().enumerate() {
            t.data[i * n + i] = *v;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.rank() {
            return Err(Error::Shape(format!(
                "index of length {} for tensor of rank {}",
                index.len(),
                self.rank()
            )));
        }
        let mut off = 0;
        for (axis, (&i, &s)) in index.iter().zip(&self.shape).enumerate() {
            if i >= s {
                return Err(Error::InvalidArgument(format!(
                    "index {i} out of range on axis {axis} (size {s})"
                )));
            }
            off = off * s + i;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<C64> {
        Ok(self.data[self.offset(index)?])
    }

    /// Returns the single entry of a rank-0 (or one-element) tensor.
    pub fn as_scalar(&self) -> Option<C64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() || shape.contains(&0) {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self::from_parts(shape, self.data))
    }

    /// Reorders axes: output axis `k` is input axis `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank {
            return Err(Error::Shape(format!("permutation {perm:?} for rank {rank}")));
        }
        for &p in perm {
            if p >= rank {
                return Err(Error::AxisOutOfRange { axis: p, rank });
            }
            if std::mem::replace(&mut seen[p], true) {
                return Err(Error::Shape(format!("axis {p} repeated in permutation")));
            }
        }
        let in_strides = self.strides();
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; rank];
        let mut src = 0usize;
        for _ in 0..self.len() {
            out.push(self.data[src]);
            for k in (0..rank).rev() {
                idx[k] += 1;
                src += src_strides[k];
                if idx[k] < out_shape[k] {
                    break;
                }
                src -= src_strides[k] * out_shape[k];
                idx[k] = 0;
            }
        }
        Ok(Self::from_parts(out_shape, out))
    }

    pub fn scale(&self, alpha: C64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|z| z * alpha).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{:?} + {:?}", self.shape, other.shape)));
        }
        Ok(Self::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).sum()
    }

    fn square_dim(&self) -> Result<usize> {
        match self.shape.as_slice() {
            [n, m] if n == m => Ok(*n),
            s => Err(Error::Shape(format!("expected a square matrix, got shape {s:?}"))),
        }
    }

    pub fn conj_transpose(&self) -> Result<Self> {
        let [n, m] = self.shape[..] else {
            return Err(Error::Shape(format!("expected a matrix, got {:?}", self.shape)));
        };
        let mut out = Vec::with_capacity(n * m);
        for j in 0..m {
            for i in 0..n {
                out.push(self.data[i * m + j].conj());
            }
        }
        Ok(Self::from_parts(vec![m, n], out))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        contract(self, other, &[(1, 0)])
    }

    pub fn trace(&self) -> Result<C64> {
        let n = self.square_dim()?;
        Ok((0..n).map(|i| self.data[i * n + i]).sum())
    }

    /// `(M + M†)/2`.
    pub fn hermitian_part(&self) -> Result<Self> {
        let n = self.square_dim()?;
        let mut out = self.data.clone();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5;
            }
        }
        Ok(Self::from_parts(vec![n, n], out))
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

/// Sums `a * b` over the paired axes. The result's axes are the unpaired axes
/// of `a` followed by the unpaired axes of `b`, each in original order.
pub fn contract(a: &ComplexTensor, b: &ComplexTensor, paired_axes: &[(usize, usize)]) -> Result<ComplexTensor> {
    let (ra, rb) = (a.rank(), b.rank());
    let mut used_a = vec![false; ra];
    let mut used_b = vec![false; rb];
    for &(i, j) in paired_axes {
        if i >= ra {
            return Err(Error::AxisOutOfRange { axis: i, rank: ra });
        }
        if j >= rb {
            return Err(Error::AxisOutOfRange { axis: j, rank: rb });
        }
        if used_a[i] || used_b[j] {
            return Err(Error::Shape(format!("axis pair ({i}, {j}) reuses an axis")));
        }
        if a.shape[i] != b.shape[j] {
            return Err(Error::Shape(format!(
                "paired axes ({i}, {j}) have sizes {} and {}",
                a.shape[i], b.shape[j]
            )));
        }
        used_a[i] = true;
        used_b[j] = true;
    }
    let free_a: Vec<usize> = (0..ra).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..rb).filter(|&j| !used_b[j]).collect();

    let perm_a: Vec<usize> = free_a.iter().copied().chain(paired_axes.iter().map(|p| p.0)).collect();
    let perm_b: Vec<usize> = paired_axes.iter().map(|p| p.1).chain(free_b.iter().copied()).collect();
    let pa = a.permute(&perm_a)?;
    let pb = b.permute(&perm_b)?;

    let rows: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let inner: usize = paired_axes.iter().map(|p| a.shape[p.0]).product();
    let cols: usize = free_b.iter().map(|&j| b.shape[j]).product();

    let mut out = vec![C64::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        let arow = &pa.data[r * inner..(r + 1) * inner];
        let orow = &mut out[r * cols..(r + 1) * cols];
        for (k, &av) in arow.iter().enumerate() {
            if av == C64::new(0.0, 0.0) {
                continue;
            }
            let brow = &pb.data[k * cols..(k + 1) * cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    let shape: Vec<usize> = free_a
        .iter()
        .map(|&i| a.shape[i])
        .chain(free_b.iter().map(|&j| b.shape[j]))
        .collect();
    Ok(ComplexTensor::from_parts(shape, out))
}

/// Largest `|M[i][j] - conj(M[j][i])|`.
pub fn hermiticity_deviation(m: &ComplexTensor) -> Result<f64> {
    let n = m.square_dim()?;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m.data[i * n + j] - m.data[j * n + i].conj()).norm());
        }
    }
    Ok(worst)
}

/// A square matrix that passed the Hermiticity check.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianView {
    matrix: ComplexTensor,
}

impl HermitianView {
    /// Accepts `m` if `|M[i][j] - conj(M[j][i])| <= tol * max|M|`.
    pub fn new(m: ComplexTensor, tol: f64) -> Result<Self> {
        let deviation = hermiticity_deviation(&m)?;
        if deviation > tol * m.max_abs() {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self { matrix: m })
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape[0]
    }

    pub fn matrix(&self) -> &ComplexTensor {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexTensor {
        self.matrix
    }
}

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector for `eigenvalues[k]`.
    pub eigenvectors: ComplexTensor,
}

impl EigenDecomposition {
    pub fn eigenvector(&self, k: usize) -> Vec<C64> {
        let n = self.eigenvalues.len();
        (0..n).map(|i| self.eigenvectors.data[i * n + k]).collect()
    }

    /// `V diag(λ) V†`.
    pub fn reconstruct(&self) -> ComplexTensor {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors.data;
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n)
                    .map(|k| v[i * n + k] * self.eigenvalues[k] * v[j * n + k].conj())
                    .sum();
            }
        }
        ComplexTensor::from_parts(vec![n, n], out)
    }
}

/// Cyclic complex Jacobi eigensolver.
pub fn hermitian_eig(m: &HermitianView) -> Result<EigenDecomposition> {
    let n = m.dim();
    let mut a = m.matrix.hermitian_part()?.data;
    let mut v = ComplexTensor::identity(n).data;
    let scale = m.matrix.frobenius_norm();

    let off_norm = |a: &[C64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut converged = false;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_norm(&a) <= 1e-15 * scale || scale == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let r = apq.norm();
                if r <= f64::MIN_POSITIVE {
                    continue;
                }
                let phase = apq / r;
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // G = diag(1, conj(phase)) * [[c, s], [-s, c]]
                let g00 = C64::new(c, 0.0);
                let g01 = C64::new(s, 0.0);
                let g10 = -phase.conj() * s;
                let g11 = phase.conj() * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = akp * g00 + akq * g10;
                    a[k * n + q] = akp * g01 + akq * g11;
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = vkp * g00 + vkq * g10;
                    v[k * n + q] = vkp * g01 + vkq * g11;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = g00.conj() * apk + g10.conj() * aqk;
                    a[q * n + k] = g01.conj() * apk + g11.conj() * aqk;
                }
                a[p * n + q] = C64::new(0.0, 0.0);
                a[q * n + p] = C64::new(0.0, 0.0);
                a[p * n + p].im = 0.0;
                a[q * n + q].im = 0.0;
            }
        }
    }
    if !converged && off_norm(&a) > 1e-15 * scale {
        return Err(Error::NoConvergence { method: "Jacobi eigensolver", iterations: JACOBI_MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].re.total_cmp(&a[i * n + i].re));
    let eigenvalues = order.iter().map(|&k| a[k * n + k].re).collect();
    let mut vecs = vec![C64::new(0.0, 0.0); n * n];
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vecs[i * n + col] = v[i * n + k];
        }
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors: ComplexTensor::from_parts(vec![n, n], vecs) })
}

/// True iff `m` is Hermitian within `tol * max|M|` and its smallest eigenvalue
/// is at least `-tol * max(1, max|λ|)`.
pub fn psd_check(m: &ComplexTensor, tol: f64) -> Result<bool> {
    m.square_dim()?;
    let Ok(view) = HermitianView::new(m.clone(), tol) else {
        return Ok(false);
    };
    let eig = hermitian_eig(&view)?;
    Ok(min_eigenvalue_ok(&eig.eigenvalues, tol))
}

fn min_eigenvalue_ok(eigenvalues: &[f64], tol: f64) -> bool {
    let spread = eigenvalues.iter().fold(1.0f64, |acc, l| acc.max(l.abs()));
    eigenvalues.last().is_none_or(|&min| min >= -tol * spread)
}

/// Factors a PSD matrix as `M[x][x'] = Σ_k conj(b_k[x]) b_k[x']` with
/// `b_k = sqrt(λ_k) conj(v_k)`, keeping eigenvalues above `tol * max|λ|`.
pub fn psd_factorize(m: &HermitianView, tol: f64) -> Result<Vec<Vec<C64>>> {
    let eig = hermitian_eig(m)?;
    if !min_eigenvalue_ok(&eig.eigenvalues, tol) {
        return Err(Error::NotPsd { min_eigenvalue: *eig.eigenvalues.last().unwrap_or(&0.0) });
    }
    let largest = eig.eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
    Ok(eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > tol * largest)
        .map(|(k, &l)| {
            let root = l.sqrt();
            eig.eigenvector(k).into_iter().map(|z| z.conj() * root).collect()
        })
        .collect())
}

/// Rebuilds `Σ_k conj(b_k[x]) b_k[x']` from PSD factors of length `n`.
pub fn psd_reconstruct(factors: &[Vec<C64>], n: usize) -> ComplexTensor {
    let mut out = ComplexTensor::zeros(vec![n, n]);
    for b in factors {
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] += b[i].conj() * b[j];
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIteration {
    pub lambda0: f64,
    pub iterations: usize,
}

/// Dominant eigenvalue by power iteration from the all-ones vector.
///
/// Stops once the Rayleigh quotient changes by at most `tol` (relative) and the
/// eigen-residual `|Mv - λv|` is at most `sqrt(tol) |Mv|`. The quotient's
/// imaginary part must then be at most `tol * |λ0|`.
pub fn power_iteration(m: &ComplexTensor, max_iters: usize, tol: f64) -> Result<PowerIteration> {
    let n = m.square_dim()?;
    if !m.is_finite() {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let mut v = vec![C64::new(1.0 / (n as f64).sqrt(), 0.0); n];
    let mut w = vec![C64::new(0.0, 0.0); n];
    let mut prev: Option<C64> = None;
    for it in 1..=max_iters {
        for i in 0..n {
            w[i] = (0..n).map(|j| m.data[i * n + j] * v[j]).sum();
        }
        let rq: C64 = v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(PowerIteration { lambda0: 0.0, iterations: it });
        }
        let residual = w.iter().zip(&v).map(|(a, b)| (a - rq * b).norm_sqr()).sum::<f64>().sqrt();
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        if let Some(p) = prev {
            if (rq - p).norm() <= tol * rq.norm() && residual <= tol.sqrt() * norm {
                if rq.im.abs() > tol * rq.norm() {
                    return Err(Error::ComplexDominantEigenvalue { re: rq.re, im: rq.im });
                }
                return Ok(PowerIteration { lambda0: rq.re, iterations: it });
            }
        }
        prev = Some(rq);
    }
    Err(Error::NoConvergence { method: "power iteration", iterations: max_iters })
}

/// `trace(M^p)` by repeated multiplication.
pub fn matrix_power_trace(m: &ComplexTensor, p: usize) -> Result<C64> {
    m.square_dim()?;
    if p == 0 {
        return Err(Error::InvalidArgument("power must be at least 1".into()));
    }
    let mut acc = m.clone();
    for _ in 1..p {
        acc = acc.matmul(m)?;
    }
    acc.trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> ComplexTensor {
        let len = shape.iter().product();
        let data = (0..len).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        ComplexTensor::new(shape, data).unwrap()
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> ComplexTensor {
        random_tensor(rng, vec![n, n]).hermitian_part().unwrap()
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(ComplexTensor::new(vec![2, 2], vec![c(0.0, 0.0); 3]).is_err());
        assert!(ComplexTensor::new(vec![2, 0], vec![]).is_err());
        assert!(ComplexTensor::new(vec![1], vec![c(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn contract_dot_product() {
        let a = ComplexTensor::from_real(vec![2], &[1.0, 2.0]).unwrap();
        let b = ComplexTensor::from_real(vec![2], &[3.0, 4.0]).unwrap();
        let r = contract(&a, &b, &[(0, 0)]).unwrap();
        assert_eq!(r.shape(), &[] as &[usize]);
        assert_eq!(r.as_scalar().unwrap(), c(11.0, 0.0));
    }

    #[test]
    fn contract_identity_action() {
        let b = ComplexTensor::from_real(vec![2], &[5.0, 7.0]).unwrap();
        let r = contract(&ComplexTensor::identity(2), &b, &[(1, 0)]).unwrap();
        assert_eq!(r.data(), &[c(5.0, 0.0), c(7.0, 0.0)]);
    }

    #[test]
    fn contract_matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_tensor(&mut rng, vec![2, 3, 2]);
        let b = random_tensor(&mut rng, vec![2, 2]);
        // a axis 2 against b axis 0 -> result [i, j, l]
        let r = contract(&a, &b, &[(2, 0)]).unwrap();
        assert_eq!(r.shape(), &[2, 3, 2]);
        for i in 0..2 {
            for j in 0..3 {
                for l in 0..2 {
                    let mut s = c(0.0, 0.0);
                    for k in 0..2 {
                        s += a.get(&[i, j, k]).unwrap() * b.get(&[k, l]).unwrap();
                    }
                    assert!(close(r.get(&[i, j, l]).unwrap(), s, 1e-14));
                }
            }
        }
        // two paired axes, pair order matters
        let b3 = random_tensor(&mut rng, vec![3, 2, 4]);
        let r = contract(&a, &b3, &[(1, 0), (0, 1)]).unwrap();
        assert_eq!(r.shape(), &[2, 4]);
        for k in 0..2 {
            for m in 0..4 {
                let mut s = c(0.0, 0.0);
                for i in 0..2 {
                    for j in 0..3 {
                        s += a.get(&[i, j, k]).unwrap() * b3.get(&[j, i, m]).unwrap();
                    }
                }
                assert!(close(r.get(&[k, m]).unwrap(), s, 1e-14));
            }
        }
    }

    #[test]
    fn contract_errors() {
        let a = ComplexTensor::zeros(vec![2, 3]);
        let b = ComplexTensor::zeros(vec![2]);
        assert!(matches!(contract(&a, &b, &[(1, 0)]), Err(Error::Shape(_))));
        assert!(matches!(contract(&a, &b, &[(2, 0)]), Err(Error::AxisOutOfRange { .. })));
    }

    #[test]
    fn contract_is_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = random_tensor(&mut rng, vec![3, 2]);
            let b = random_tensor(&mut rng, vec![2, 4]);
            let alpha = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let lhs = contract(&a.scale(alpha), &b, &[(1, 0)]).unwrap();
            let rhs = contract(&a, &b, &[(1, 0)]).unwrap().scale(alpha);
            assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-13);
        }
    }

    #[test]
    fn permute_moves_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_tensor(&mut rng, vec![2, 3, 4]);
        let p = a.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.get(&[3, 1, 2]).unwrap(), a.get(&[1, 2, 3]).unwrap());
    }

    #[test]
    fn eig_diagonal() {
        let m = ComplexTensor::diag(&[c(1.0, 0.0), c(3.0, 0.0)]);
        let eig = hermitian_eig(&HermitianView::new(m, PSD_TOL).unwrap()).unwrap();
        assert_eq!(eig.eigenvalues, vec![3.0, 1.0]);
    }

    #[test]
    fn eig_two_by_two_closed_form() {
        let m = ComplexTensor::from_rows(&[vec![c(2.0, 0.0), c(0.0, 1.0)], vec![c(0.0, -1.0), c(2.0, 0.0)]]).unwrap();
        let eig = hermitian_eig(&HermitianView::new(m.clone(), PSD_TOL).unwrap()).unwrap();
        assert!((eig.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-14);
        assert!(eig.reconstruct().sub(&m).unwrap().max_abs() < 1e-14);
    }

    /// Characteristic polynomial of a 4×4 matrix by the Faddeev–LeVerrier
    /// recursion, roots located by bisection on sign changes (all roots are
    /// real for a Hermitian input).
    fn char_poly_roots_4x4(m: &ComplexTensor) -> Vec<f64> {
        let n = 4;
        let mut coeffs = vec![1.0]; // monic, descending powers
        let mut mk = ComplexTensor::zeros(vec![n, n]);
        let ident = ComplexTensor::identity(n);
        for k in 1..=n {
            let prev_c = *coeffs.last().unwrap();
            let mprev = mk.add(&ident.scale(c(prev_c, 0.0))).unwrap();
            mk = m.matmul(&mprev).unwrap();
            let ck = -mk.trace().unwrap().re / k as f64;
            coeffs.push(ck);
        }
        let p = |x: f64| coeffs.iter().fold(0.0, |acc, &a| acc * x + a);
        let bound = 1.0 + coeffs[1..].iter().map(|a| a.abs()).fold(0.0, f64::max);
        let steps = 20000;
        let mut roots = Vec::new();
        let h = 2.0 * bound / steps as f64;
        let mut x0 = -bound;
        for _ in 0..steps {
            let x1 = x0 + h;
            if p(x0) == 0.0 {
                roots.push(x0);
            } else if p(x0) * p(x1) < 0.0 {
                let (mut lo, mut hi) = (x0, x1);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if p(lo) * p(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            x0 = x1;
        }
        roots.sort_by(|a, b| b.total_cmp(a));
        roots
    }

    #[test]
    fn eig_matches_characteristic_polynomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let m = random_hermitian(&mut rng, 4);
            let eig = hermitian_eig(&HermitianView::new(m.clone(), PSD_TOL).unwrap()).unwrap();
            let roots = char_poly_roots_4x4(&m);
            assert_eq!(roots.len(), 4);
            for (l, r) in eig.eigenvalues.iter().zip(&roots) {
                assert!((l - r).abs() < 1e-9, "{l} vs {r}");
            }
            assert!(eig.reconstruct().sub(&m).unwrap().max_abs() < 1e-12);
            // orthonormal columns
            let v = &eig.eigenvectors;
            let vhv = v.conj_transpose().unwrap().matmul(v).unwrap();
            assert!(vhv.sub(&ComplexTensor::identity(4)).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn eig_handles_larger_and_degenerate_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_hermitian(&mut rng, 32);
        let eig = hermitian_eig(&HermitianView::new(m.clone(), PSD_TOL).unwrap()).unwrap();
        let scale = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        assert!(eig.reconstruct().sub(&m).unwrap().max_abs() <= 1e-10 * scale);
        let eye = ComplexTensor::identity(6).scale(c(2.5, 0.0));
        let eig = hermitian_eig(&HermitianView::new(eye, PSD_TOL).unwrap()).unwrap();
        assert!(eig.eigenvalues.iter().all(|&l| l == 2.5));
    }

    #[test]
    fn hermitian_view_rejects_non_hermitian() {
        let m = ComplexTensor::from_rows(&[vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]]).unwrap();
        assert!(matches!(HermitianView::new(m, PSD_TOL), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn psd_examples() {
        assert!(psd_check(&ComplexTensor::identity(2), PSD_TOL).unwrap());
        let m = ComplexTensor::from_real(vec![2, 2], &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(!psd_check(&m, PSD_TOL).unwrap());
        assert!(psd_check(&ComplexTensor::zeros(vec![3, 2]), PSD_TOL).is_err());
    }

    #[test]
    fn factorize_identity_and_rank_one() {
        let f = psd_factorize(&HermitianView::new(ComplexTensor::identity(2), PSD_TOL).unwrap(), PSD_TOL).unwrap();
        assert_eq!(f.len(), 2);
        for b in &f {
            let nz: Vec<_> = b.iter().filter(|z| z.norm() > 1e-12).collect();
            assert_eq!(nz.len(), 1);
            assert!((nz[0].norm() - 1.0).abs() < 1e-14);
        }
        let v = [c(1.0, 2.0), c(-0.5, 0.25), c(0.0, 1.0)];
        let mut m = ComplexTensor::zeros(vec![3, 3]);
        for i in 0..3 {
            for j in 0..3 {
                m.data_mut()[i * 3 + j] = v[i] * v[j].conj();
            }
        }
        let f = psd_factorize(&HermitianView::new(m.clone(), PSD_TOL).unwrap(), PSD_TOL).unwrap();
        assert_eq!(f.len(), 1);
        // b = conj(v) up to a global phase
        let phase = f[0][0] / v[0].conj();
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        for i in 0..3 {
            assert!((f[0][i] - v[i].conj() * phase).norm() < 1e-12);
        }
        assert!(psd_reconstruct(&f, 3).sub(&m).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn factorize_rejects_indefinite() {
        let m = ComplexTensor::from_real(vec![2, 2], &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            psd_factorize(&HermitianView::new(m, PSD_TOL).unwrap(), PSD_TOL),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn power_iteration_examples() {
        let m = ComplexTensor::diag(&[c(3.0, 0.0), c(1.0, 0.0)]);
        let r = power_iteration(&m, 1000, 1e-14).unwrap();
        assert!((r.lambda0 - 3.0).abs() < 1e-12);
        let ones = ComplexTensor::from_real(vec![4, 4], &[1.0; 16]).unwrap();
        assert!((power_iteration(&ones, 100, 1e-14).unwrap().lambda0 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_flags_complex_dominant_eigenvalue() {
        // eigenvalues 2i and 1: dominant eigenvalue is purely imaginary
        let m = ComplexTensor::diag(&[c(0.0, 2.0), c(1.0, 0.0)]);
        assert!(matches!(power_iteration(&m, 1000, 1e-12), Err(Error::ComplexDominantEigenvalue { .. })));
        // rotation: two eigenvalues of equal modulus, no convergence
        let rot = ComplexTensor::from_real(vec![2, 2], &[0.0, -1.0, 1.0, 0.0]).unwrap();
        assert!(power_iteration(&rot, 50, 1e-12).is_err());
    }

    #[test]
    fn power_trace_examples() {
        assert_eq!(matrix_power_trace(&ComplexTensor::identity(3), 5).unwrap(), c(3.0, 0.0));
        let m = ComplexTensor::diag(&[c(2.0, 0.0), c(3.0, 0.0)]);
        assert_eq!(matrix_power_trace(&m, 2).unwrap(), c(13.0, 0.0));
        assert!(matrix_power_trace(&m, 0).is_err());
    }

    #[test]
    fn power_trace_matches_cycle_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_tensor(&mut rng, vec![4, 4]);
        let mut s = c(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    for l in 0..4 {
                        s += m.get(&[i, j]).unwrap() * m.get(&[j, k]).unwrap() * m.get(&[k, l]).unwrap() * m.get(&[l, i]).unwrap();
                    }
                }
            }
        }
        assert!(close(matrix_power_trace(&m, 4).unwrap(), s, 1e-13));
    }
}
