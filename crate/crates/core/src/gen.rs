//! Random instances and canonical constructions: cycles with a shared factor,
//! cycles with chords, the permanent graph, the measured quantum chain, and
//! random loopy graphs with mixed edge kinds.
//!
//! All randomness comes from ChaCha8 seeded with a 64-bit seed, whose stream
//! is fixed across platforms.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{validate_psd, validate_structure, DeNfg, Edge, EdgeKind, Factor};
use crate::tensor::{psd_check, ComplexTensor, C64, PSD_TOL};

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const UNITARITY_TOL: f64 = 1e-10;

fn complex_gaussian(rng: &mut Rng) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s)
}

/// Haar-distributed unitary from the QR factorization of a complex Gaussian
/// matrix. Gram–Schmidt already produces a positive real diagonal in `R`, so
/// no extra phase correction is needed.
pub fn random_haar_unitary(rng: &mut Rng, n: usize) -> ComplexTensor {
    assert!(n >= 1, "unitary size must be at least 1");
    // columns of the Gaussian matrix
    let mut cols: Vec<Vec<C64>> = (0..n).map(|_| (0..n).map(|_| complex_gaussian(rng)).collect()).collect();
    for k in 0..n {
        // two passes keep the columns orthogonal to machine precision
        for _ in 0..2 {
            for j in 0..k {
                let (done, rest) = cols.split_at_mut(k);
                let q = &done[j];
                let proj: C64 = q.iter().zip(rest[0].iter()).map(|(a, b)| a.conj() * b).sum();
                for (v, a) in rest[0].iter_mut().zip(q) {
                    *v -= proj * a;
                }
            }
        }
        let norm = cols[k].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for v in &mut cols[k] {
            *v /= norm;
        }
    }
    let mut data = vec![C64::new(0.0, 0.0); n * n];
    for (j, col) in cols.iter().enumerate() {
        for (i, z) in col.iter().enumerate() {
            data[i * n + j] = *z;
        }
    }
    ComplexTensor::from_parts(vec![n, n], data)
}

/// `U D U†` with `U` Haar and `D` diagonal with χ²₁ entries (squared standard
/// normals). Exactly Hermitian.
pub fn random_psd_chi2(rng: &mut Rng, n: usize) -> ComplexTensor {
    let u = random_haar_unitary(rng, n);
    let d: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * z
        })
        .collect();
    let ud = u.data();
    let mut data = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in i..n {
            let v: C64 = (0..n).map(|k| ud[i * n + k] * d[k] * ud[j * n + k].conj()).sum();
            if i == j {
                data[i * n + i] = C64::new(v.re, 0.0);
            } else {
                data[i * n + j] = v;
                data[j * n + i] = v.conj();
            }
        }
    }
    ComplexTensor::from_parts(vec![n, n], data)
}

/// Rejects graphs that fail the structural or PSD checks.
fn checked(g: DeNfg) -> Result<DeNfg> {
    let mut violations = validate_structure(&g);
    if violations.is_empty() {
        violations = validate_psd(&g, PSD_TOL);
    }
    if violations.is_empty() {
        Ok(g)
    } else {
        Err(Error::Structure(violations))
    }
}

/// Ring of `n` factors `f0..f{n-1}` joined by double edges `e0..e{n-1}`, edge
/// `e_i` between `f_{i-1}` and `f_i`. Factor `f_i` has ports `[e_i, e_{i+1}]`
/// and value `F(x_i, x_{i+1}, x'_i, x'_{i+1})`. `F` may be given as a
/// `[q, q, q, q]` tensor or a `[q², q²]` matrix.
pub fn cycle_denfg(f: &ComplexTensor, n: usize) -> Result<DeNfg> {
    if n < 2 {
        return Err(Error::InvalidArgument("cycle length must be at least 2".into()));
    }
    let q = match f.shape() {
        [a, b, c, d] if a == b && a == c && a == d => *a,
        [a, b] if a == b && ((*a as f64).sqrt().round() as usize).pow(2) == *a => (*a as f64).sqrt().round() as usize,
        s => return Err(Error::Shape(format!("cycle factor must be [q, q, q, q] or [q², q²], got {s:?}"))),
    };
    let t = f.clone().reshape(vec![q, q, q, q])?;
    let edges = (0..n).map(|i| Edge::double(format!("e{i}"), q, format!("f{}", (i + n - 1) % n), format!("f{i}"))).collect();
    let factors = (0..n)
        .map(|i| Factor::new(format!("f{i}"), vec![format!("e{i}"), format!("e{}", (i + 1) % n)], t.clone()))
        .collect();
    checked(DeNfg::new(edges, factors)?)
}

/// Double-edge graph on `n_factors` factors `f0..` with edges `e0..` given as
/// factor index pairs (equal indices make a self-loop). A factor's ports follow
/// edge order; its grouped matrix is drawn by [`random_psd_chi2`] and reshaped.
pub fn random_double_edge_denfg(rng: &mut Rng, n_factors: usize, edges: &[(usize, usize)], q: usize) -> Result<DeNfg> {
    if q == 0 {
        return Err(Error::InvalidArgument("alphabet must be positive".into()));
    }
    if let Some(&(a, b)) = edges.iter().find(|(a, b)| *a >= n_factors || *b >= n_factors) {
        return Err(Error::InvalidArgument(format!("edge ({a}, {b}) names a factor beyond {n_factors}")));
    }
    let mut ports = vec![Vec::new(); n_factors];
    let es = edges
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            ports[a].push(format!("e{k}"));
            ports[b].push(format!("e{k}"));
            Edge::double(format!("e{k}"), q, format!("f{a}"), format!("f{b}"))
        })
        .collect();
    let factors = ports
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let k = p.len();
            let m = random_psd_chi2(rng, q.pow(k as u32));
            let t = m.reshape(vec![q; 2 * k])?;
            Ok(Factor::new(format!("f{i}"), p, t))
        })
        .collect::<Result<Vec<_>>>()?;
    checked(DeNfg::new(es, factors)?)
}

/// Ring and chord edges of the four-factor cycle with one chord between
/// opposite factors.
pub const CHORD_TOPOLOGY: [(usize, usize); 5] = [(3, 0), (0, 1), (1, 2), (2, 3), (0, 2)];

pub fn cycle_with_chord_denfg(rng: &mut Rng, q: usize) -> Result<DeNfg> {
    if q < 2 {
        return Err(Error::InvalidArgument("alphabet must be at least 2".into()));
    }
    random_double_edge_denfg(rng, 4, &CHORD_TOPOLOGY, q)
}

fn exactly_one_tensor(n: usize) -> ComplexTensor {
    let len = 1usize << (2 * n);
    let mut data = vec![C64::new(0.0, 0.0); len];
    // bits of the flat index: high n bits are x, low n bits are x'
    for i in 0..n {
        for j in 0..n {
            let x = 1usize << (n - 1 - i);
            let xp = 1usize << (n - 1 - j);
            data[(x << n) | xp] = C64::new(1.0, 0.0);
        }
    }
    ComplexTensor::from_parts(vec![2; 2 * n], data)
}

fn permanent_graph(theta_tilde: &[Vec<ComplexTensor>]) -> Result<DeNfg> {
    let n = theta_tilde.len();
    if n == 0 || theta_tilde.iter().any(|row| row.len() != n) {
        return Err(Error::Shape("expected a non-empty n×n array of 2×2 matrices".into()));
    }
    let mut edges = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            edges.push(Edge::double(format!("l{i}_{j}"), 2, format!("L{i}"), format!("T{i}_{j}")));
            edges.push(Edge::double(format!("r{i}_{j}"), 2, format!("T{i}_{j}"), format!("R{j}")));
        }
    }
    let one = exactly_one_tensor(n);
    let mut factors = Vec::with_capacity(2 * n + n * n);
    for i in 0..n {
        factors.push(Factor::new(format!("L{i}"), (0..n).map(|j| format!("l{i}_{j}")).collect(), one.clone()));
    }
    for j in 0..n {
        factors.push(Factor::new(format!("R{j}"), (0..n).map(|i| format!("r{i}_{j}")).collect(), one.clone()));
    }
    for (i, row) in theta_tilde.iter().enumerate() {
        for (j, th) in row.iter().enumerate() {
            if th.shape() != [2, 2] {
                return Err(Error::Shape(format!("entry ({i}, {j}) has shape {:?}, expected [2, 2]", th.shape())));
            }
            // axes (xL, xR, xL', xR')
            let mut t = ComplexTensor::zeros(vec![2, 2, 2, 2]);
            for x in 0..2 {
                for xp in 0..2 {
                    let off = t.offset(&[x, x, xp, xp])?;
                    t.data_mut()[off] = th.data()[x * 2 + xp];
                }
            }
            factors.push(Factor::new(format!("T{i}_{j}"), vec![format!("l{i}_{j}"), format!("r{i}_{j}")], t));
        }
    }
    DeNfg::new(edges, factors)
}

/// Complete bipartite graph whose partition sum is built from permanents:
/// left factors `L_i` and right factors `R_j` force exactly one active edge
/// per row and column in both the x and x' layers, and the pairwise factor
/// `T_ij` weights an edge by `theta_tilde[i][j](x, x')`.
pub fn permanent_denfg(theta_tilde: &[Vec<ComplexTensor>]) -> Result<DeNfg> {
    for (i, row) in theta_tilde.iter().enumerate() {
        for (j, th) in row.iter().enumerate() {
            if th.shape() == [2, 2] && !psd_check(th, PSD_TOL)? {
                return Err(Error::InvalidArgument(format!("entry ({i}, {j}) is not PSD")));
            }
        }
    }
    checked(permanent_graph(theta_tilde)?)
}

/// [`permanent_denfg`] without the PSD requirement on the 2×2 entries, for
/// weightings such as `diag(1, θ)` with complex `θ`. The result is
/// structurally valid but need not be a PSD graph.
pub fn permanent_denfg_unchecked(theta_tilde: &[Vec<ComplexTensor>]) -> Result<DeNfg> {
    let g = permanent_graph(theta_tilde)?;
    let violations = validate_structure(&g);
    if violations.is_empty() {
        Ok(g)
    } else {
        Err(Error::Structure(violations))
    }
}

/// `[[1, conj(t)], [t, s]]` with `t` uniform on the unit circle and `s`
/// uniform on `[1.10, 11.10]`.
pub fn random_theta_tilde(rng: &mut Rng) -> ComplexTensor {
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let t = C64::from_polar(1.0, phi);
    let s: f64 = rng.random_range(1.10..=11.10);
    ComplexTensor::from_parts(vec![2, 2], vec![C64::new(1.0, 0.0), t.conj(), t, C64::new(s, 0.0)])
}

/// `n × n` grid of [`random_theta_tilde`] draws, row by row.
pub fn random_theta_tilde_grid(rng: &mut Rng, n: usize) -> Vec<Vec<ComplexTensor>> {
    (0..n).map(|_| (0..n).map(|_| random_theta_tilde(rng)).collect()).collect()
}

/// Prepare `rho`, evolve by `u0`, measure with `{M_y}`, evolve by `u1`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumChainSpec {
    pub rho: ComplexTensor,
    pub u0: ComplexTensor,
    pub u1: ComplexTensor,
    pub measurement: Vec<ComplexTensor>,
}

fn is_identity(m: &ComplexTensor, tol: f64) -> bool {
    let n = m.shape()[0];
    m.data()
        .iter()
        .enumerate()
        .all(|(k, z)| (z - if k / n == k % n { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).norm() <= tol)
}

impl QuantumChainSpec {
    pub fn dim(&self) -> usize {
        self.rho.shape().first().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let square = [d, d];
        for (name, m) in [("rho", &self.rho), ("u0", &self.u0), ("u1", &self.u1)] {
            if m.shape() != square || d == 0 {
                return Err(Error::Shape(format!("{name} has shape {:?}, expected {square:?}", m.shape())));
            }
        }
        if self.measurement.is_empty() {
            return Err(Error::InvalidArgument("measurement needs at least one operator".into()));
        }
        if let Some(m) = self.measurement.iter().find(|m| m.shape() != square) {
            return Err(Error::Shape(format!("measurement operator has shape {:?}, expected {square:?}", m.shape())));
        }
        let tr = self.rho.trace()?;
        if (tr - C64::new(1.0, 0.0)).norm() > UNITARITY_TOL {
            return Err(Error::InvalidArgument(format!("trace of rho is {tr}, expected 1")));
        }
        if !psd_check(&self.rho, PSD_TOL)? {
            return Err(Error::InvalidArgument("rho is not PSD".into()));
        }
        for (name, u) in [("u0", &self.u0), ("u1", &self.u1)] {
            if !is_identity(&u.conj_transpose()?.matmul(u)?, UNITARITY_TOL) {
                return Err(Error::InvalidArgument(format!("{name} is not unitary")));
            }
        }
        let mut sum = ComplexTensor::zeros(square.to_vec());
        for m in &self.measurement {
            sum = sum.add(&m.conj_transpose()?.matmul(m)?)?;
        }
        if !is_identity(&sum, UNITARITY_TOL) {
            return Err(Error::InvalidArgument("measurement operators are not complete".into()));
        }
        Ok(())
    }

    /// Qubit in `|0⟩`, Hadamard, computational-basis measurement, identity.
    pub fn demo() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let proj = |k: usize| {
            let mut d = [0.0; 2];
            d[k] = 1.0;
            ComplexTensor::diag(&[C64::new(d[0], 0.0), C64::new(d[1], 0.0)])
        };
        Self {
            rho: proj(0),
            u0: ComplexTensor::from_real(vec![2, 2], &[h, h, h, -h]).expect("2×2"),
            u1: ComplexTensor::identity(2),
            measurement: vec![proj(0), proj(1)],
        }
    }

    /// Random state of dimension `d` with `outcomes` measurement operators:
    /// `rho` is a trace-normalized [`random_psd_chi2`] draw, `u0`, `u1` are
    /// Haar, and `M_y` is the `y`-th `d × d` block of the first `d` columns of
    /// a Haar unitary of size `outcomes · d`.
    pub fn random(rng: &mut Rng, d: usize, outcomes: usize) -> Result<Self> {
        if d == 0 || outcomes == 0 {
            return Err(Error::InvalidArgument("dimension and outcome count must be positive".into()));
        }
        let rho = random_psd_chi2(rng, d);
        let tr = rho.trace()?.re;
        let rho = rho.scale(C64::new(1.0 / tr, 0.0));
        let u0 = random_haar_unitary(rng, d);
        let u1 = random_haar_unitary(rng, d);
        let big = random_haar_unitary(rng, outcomes * d);
        let w = outcomes * d;
        let measurement = (0..outcomes)
            .map(|y| {
                let data = (0..d).flat_map(|r| (0..d).map(move |c| (r, c))).map(|(r, c)| big.data()[(y * d + r) * w + c]).collect();
                ComplexTensor::from_parts(vec![d, d], data)
            })
            .collect();
        Ok(Self { rho, u0, u1, measurement })
    }
}

/// `A(x1, x0) · conj(A(x1', x0'))` on axes `(x0, x1, x0', x1')`.
fn channel_tensor(a: &ComplexTensor) -> ComplexTensor {
    let d = a.shape()[0];
    let mut t = ComplexTensor::zeros(vec![d, d, d, d]);
    let ad = a.data();
    let out = t.data_mut();
    for x0 in 0..d {
        for x1 in 0..d {
            for p0 in 0..d {
                for p1 in 0..d {
                    out[((x0 * d + x1) * d + p0) * d + p1] = ad[x1 * d + x0] * ad[p1 * d + p0].conj();
                }
            }
        }
    }
    t
}

/// Chain `rho — U0 — M — U1 — trace` over double edges `x0..x3`, with the
/// measurement outcome on single edge `y` ending at an all-ones factor. The
/// partition sum is the total outcome probability and the marginal of `y` is
/// the outcome distribution.
pub fn quantum_chain_denfg(spec: &QuantumChainSpec) -> Result<DeNfg> {
    spec.validate()?;
    let d = spec.dim();
    let m = spec.measurement.len();
    let edges = vec![
        Edge::double("x0", d, "rho", "U0"),
        Edge::double("x1", d, "U0", "M"),
        Edge::double("x2", d, "M", "U1"),
        Edge::double("x3", d, "U1", "trace"),
        Edge::single("y", m, "M", "outcome"),
    ];
    let mut meas = ComplexTensor::zeros(vec![d, d, d, d, m]);
    for (y, my) in spec.measurement.iter().enumerate() {
        let block = channel_tensor(my);
        for (k, z) in block.data().iter().enumerate() {
            meas.data_mut()[k * m + y] = *z;
        }
    }
    let factors = vec![
        Factor::new("rho", vec!["x0".into()], spec.rho.clone()),
        Factor::new("U0", vec!["x0".into(), "x1".into()], channel_tensor(&spec.u0)),
        Factor::new("M", vec!["x1".into(), "x2".into(), "y".into()], meas),
        Factor::new("U1", vec!["x2".into(), "x3".into()], channel_tensor(&spec.u1)),
        Factor::new("trace", vec!["x3".into()], ComplexTensor::identity(d)),
        Factor::new("outcome", vec!["y".into()], ComplexTensor::from_real(vec![m], &vec![1.0; m])?),
    ];
    checked(DeNfg::new(edges, factors)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomGraphParams {
    pub n_factors: usize,
    /// Edges added on top of the spanning tree.
    pub extra_edges: usize,
    /// Alphabets are drawn uniformly from `1..=max_alphabet`.
    pub max_alphabet: usize,
    /// Probability that an edge is single.
    pub single_prob: f64,
    pub allow_self_loops: bool,
}

impl Default for RandomGraphParams {
    fn default() -> Self {
        Self { n_factors: 4, extra_edges: 1, max_alphabet: 2, single_prob: 0.3, allow_self_loops: true }
    }
}

fn random_factor_tensor(rng: &mut Rng, doubles: &[usize], singles: &[usize]) -> ComplexTensor {
    let dim: usize = doubles.iter().product();
    let ys: usize = singles.iter().product();
    let mut data = vec![C64::new(0.0, 0.0); dim * dim * ys];
    for y in 0..ys {
        let block = random_psd_chi2(rng, dim);
        for (k, z) in block.data().iter().enumerate() {
            data[k * ys + y] = *z;
        }
    }
    let shape = doubles.iter().chain(doubles).chain(singles).copied().collect();
    ComplexTensor::from_parts(shape, data)
}

/// Random spanning tree on `n_factors` factors (factor `i` attaches to a
/// uniformly chosen earlier factor) plus `extra_edges` random edges. Each
/// edge's kind and alphabet are random; per y-assignment each factor's grouped
/// matrix is an independent [`random_psd_chi2`] draw.
pub fn random_denfg(rng: &mut Rng, params: &RandomGraphParams) -> Result<DeNfg> {
    let RandomGraphParams { n_factors, extra_edges, max_alphabet, single_prob, allow_self_loops } = *params;
    if n_factors == 0 || max_alphabet == 0 || !(0.0..=1.0).contains(&single_prob) {
        return Err(Error::InvalidArgument("need n_factors ≥ 1, max_alphabet ≥ 1, single_prob in [0, 1]".into()));
    }
    if n_factors == 1 && extra_edges > 0 && !allow_self_loops {
        return Err(Error::InvalidArgument("a single factor can only take self-loops".into()));
    }
    let mut pairs = Vec::new();
    for i in 1..n_factors {
        pairs.push((rng.random_range(0..i), i));
    }
    for _ in 0..extra_edges {
        loop {
            let a = rng.random_range(0..n_factors);
            let b = rng.random_range(0..n_factors);
            if a != b || allow_self_loops {
                pairs.push((a, b));
                break;
            }
        }
    }
    let mut ports: Vec<Vec<usize>> = vec![Vec::new(); n_factors];
    let edges: Vec<Edge> = pairs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            ports[a].push(k);
            ports[b].push(k);
            let kind = if rng.random_bool(single_prob) { EdgeKind::Single } else { EdgeKind::Double };
            let alphabet = rng.random_range(1..=max_alphabet);
            Edge::new(format!("e{k}"), kind, alphabet, format!("f{a}"), format!("f{b}"))
        })
        .collect();
    let factors = ports
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let doubles: Vec<usize> = p.iter().filter(|&&k| edges[k].kind == EdgeKind::Double).map(|&k| edges[k].alphabet).collect();
            let singles: Vec<usize> = p.iter().filter(|&&k| edges[k].kind == EdgeKind::Single).map(|&k| edges[k].alphabet).collect();
            let t = random_factor_tensor(rng, &doubles, &singles);
            Factor::new(format!("f{i}"), p.iter().map(|&k| format!("e{k}")).collect(), t)
        })
        .collect();
    checked(DeNfg::new(edges, factors)?)
}

/// [`random_denfg`] without extra edges.
pub fn random_tree_denfg(rng: &mut Rng, n_factors: usize, max_alphabet: usize, single_prob: f64) -> Result<DeNfg> {
    random_denfg(rng, &RandomGraphParams { n_factors, extra_edges: 0, max_alphabet, single_prob, allow_self_loops: false })
}
