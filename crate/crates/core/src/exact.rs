//! Ground-truth oracles: exhaustive partition sums and marginals, the cycle
//! transfer matrix, and matrix permanents.
//!
//! The exhaustive sum enumerates edge-variable assignments depth first and
//! multiplies factor lookups. A factor is looked up as soon as all of its
//! ports are assigned, and a partial assignment is abandoned as soon as some
//! factor has no nonzero entry consistent with it. Skipped branches contribute
//! exactly zero, so the result equals the plain exhaustive sum.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::graph::{Compiled, DeNfg, EdgeKind};
use crate::spa::Belief;
use crate::tensor::{matrix_power_trace, power_iteration, ComplexTensor, C64};

pub const DEFAULT_BUDGET: u64 = 100_000_000;

const POWER_MAX_ITERS: usize = 200_000;
const POWER_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostEstimate {
    /// Terms in the unpruned sum: product over edges of `a` (single) or `a²`
    /// (double). Saturates at `u128::MAX`.
    pub total_terms: u128,
    /// Whether the unpruned sum fits in the budget.
    pub feasible: bool,
}

pub fn cost_estimate(g: &DeNfg, budget: u64) -> CostEstimate {
    let total_terms = g
        .edges()
        .iter()
        .fold(1u128, |acc, e| acc.saturating_mul(e.kind.states(e.alphabet) as u128));
    CostEstimate { total_terms, feasible: total_terms <= budget as u128 }
}

struct Enumerator<'a> {
    g: &'a DeNfg,
    c: Compiled,
    /// Edges in assignment order.
    order: Vec<usize>,
    /// Factors whose ports gain a value when `order[step]` is assigned.
    touched: Vec<Vec<usize>>,
    /// Ports of each factor in assignment order.
    port_order: Vec<Vec<usize>>,
    /// Ports assigned after each step, per touched factor.
    assigned_after: Vec<Vec<usize>>,
    /// Prefixes `(length, mixed-radix code)` of nonzero entries, per factor.
    support: Vec<HashSet<(usize, u64)>>,
    /// Product of factors without ports.
    constant: C64,
    budget: u64,
    visited: u64,
    /// Current code of each edge.
    values: Vec<usize>,
    target: Option<usize>,
    total: C64,
    buckets: Vec<C64>,
}

impl<'a> Enumerator<'a> {
    fn new(g: &'a DeNfg, budget: u64, target: Option<usize>) -> Result<Self> {
        let c = Compiled::new(g)?;
        let nf = g.factors().len();
        let ne = g.edges().len();

        // Greedy order: next edge maximizes the summed fraction of already
        // assigned ports at its endpoint factors, so factors close early.
        let degree: Vec<usize> = g.factors().iter().map(|f| f.ports.len()).collect();
        let mut done_ports = vec![0usize; nf];
        let mut placed = vec![false; ne];
        let mut order = Vec::with_capacity(ne);
        for _ in 0..ne {
            let mut best = None;
            let mut best_score = -1.0;
            for e in (0..ne).filter(|&e| !placed[e]) {
                let [a, b] = c.wiring.edge_ends[e];
                let mut score = done_ports[a.factor] as f64 / degree[a.factor] as f64;
                if b.factor != a.factor {
                    score += done_ports[b.factor] as f64 / degree[b.factor] as f64;
                }
                if score > best_score {
                    best_score = score;
                    best = Some(e);
                }
            }
            let e = best.expect("unplaced edge exists");
            placed[e] = true;
            order.push(e);
            for end in c.wiring.edge_ends[e] {
                done_ports[end.factor] += 1;
            }
        }

        let mut step_of_edge = vec![0; ne];
        for (s, &e) in order.iter().enumerate() {
            step_of_edge[e] = s;
        }
        let port_order: Vec<Vec<usize>> = (0..nf)
            .map(|f| {
                let mut ports: Vec<usize> = (0..degree[f]).collect();
                ports.sort_by_key(|&p| (step_of_edge[c.wiring.port_edges[f][p].0], p));
                ports
            })
            .collect();

        let mut touched = vec![Vec::new(); ne];
        let mut assigned_after = vec![Vec::new(); ne];
        let mut count = vec![0usize; nf];
        for (s, &e) in order.iter().enumerate() {
            let ends = c.wiring.edge_ends[e];
            for end in ends {
                count[end.factor] += 1;
            }
            touched[s].push(ends[0].factor);
            assigned_after[s].push(count[ends[0].factor]);
            if ends[1].factor != ends[0].factor {
                touched[s].push(ends[1].factor);
                assigned_after[s].push(count[ends[1].factor]);
            }
        }

        let support = (0..nf)
            .map(|f| {
                let table = &c.tables[f];
                let mut set = HashSet::new();
                for k in 0..table.values.len() {
                    let codes = table.entry_codes(k);
                    let mut key = 0u64;
                    for (len, &p) in port_order[f].iter().enumerate() {
                        key = key * table.port_states[p] as u64 + codes[p] as u64;
                        set.insert((len + 1, key));
                    }
                }
                set
            })
            .collect();

        let constant = g
            .factors()
            .iter()
            .filter(|f| f.ports.is_empty())
            .map(|f| f.data.data()[0])
            .product();

        let buckets = target.map_or(0, |t| g.edges()[t].kind.states(g.edges()[t].alphabet));
        Ok(Self {
            g,
            c,
            order,
            touched,
            port_order,
            assigned_after,
            support,
            constant,
            budget,
            visited: 0,
            values: vec![0; ne],
            target,
            total: C64::new(0.0, 0.0),
            buckets: vec![C64::new(0.0, 0.0); buckets],
        })
    }

    fn port_value(&self, f: usize, p: usize) -> usize {
        self.values[self.c.wiring.port_edges[f][p].0]
    }

    fn run(&mut self) -> Result<()> {
        let start = self.constant;
        if start == C64::new(0.0, 0.0) {
            return Ok(());
        }
        self.descend(0, start)
    }

    fn descend(&mut self, step: usize, prod: C64) -> Result<()> {
        if step == self.order.len() {
            self.total += prod;
            if let Some(t) = self.target {
                self.buckets[self.values[t]] += prod;
            }
            return Ok(());
        }
        let e = self.order[step];
        let edge = &self.g.edges()[e];
        'values: for v in 0..edge.kind.states(edge.alphabet) {
            self.visited += 1;
            if self.visited > self.budget {
                return Err(Error::BudgetExceeded {
                    total_terms: cost_estimate(self.g, self.budget).total_terms,
                    budget: self.budget,
                });
            }
            self.values[e] = v;
            let mut next = prod;
            for (i, &f) in self.touched[step].iter().enumerate() {
                let assigned = self.assigned_after[step][i];
                let table = &self.c.tables[f];
                let mut key = 0u64;
                for &p in &self.port_order[f][..assigned] {
                    key = key * table.port_states[p] as u64 + self.port_value(f, p) as u64;
                }
                if !self.support[f].contains(&(assigned, key)) {
                    continue 'values;
                }
                if assigned == table.ports {
                    let offset: usize = (0..table.ports).map(|p| table.offsets[p][self.port_value(f, p)]).sum();
                    next *= self.g.factors()[f].data.data()[offset];
                }
            }
            if next == C64::new(0.0, 0.0) {
                continue;
            }
            self.descend(step + 1, next)?;
        }
        Ok(())
    }
}

/// `Z = Σ_{x, x', y} Π_f f(...)`.
///
/// `budget` bounds the number of partial assignments visited; a graph whose
/// unpruned sum has at most `budget` terms always fits.
pub fn exact_partition_sum(g: &DeNfg, budget: u64) -> Result<C64> {
    let mut en = Enumerator::new(g, budget, None)?;
    en.run()?;
    Ok(en.total)
}

/// Marginal of one edge's variable(s), normalized to unit sum (single edge)
/// or unit trace (double edge, indexed `(x, x')`).
pub fn exact_marginal(g: &DeNfg, edge: &str, budget: u64) -> Result<Belief> {
    let e = g.edge_index(edge)?;
    let mut en = Enumerator::new(g, budget, Some(e))?;
    en.run()?;
    let buckets = en.buckets;
    let ed = &g.edges()[e];
    match ed.kind {
        EdgeKind::Single => {
            let z: f64 = buckets.iter().map(|b| b.re).sum();
            if z == 0.0 || !z.is_finite() {
                return Err(Error::ZeroMass(edge.to_string()));
            }
            Ok(Belief::Single(buckets.iter().map(|b| b.re / z).collect()))
        }
        EdgeKind::Double => {
            let a = ed.alphabet;
            let z: f64 = (0..a).map(|i| buckets[i * a + i].re).sum();
            if z == 0.0 || !z.is_finite() {
                return Err(Error::ZeroMass(edge.to_string()));
            }
            let m = ComplexTensor::from_parts(vec![a, a], buckets);
            Ok(Belief::Double(m.scale(C64::new(1.0 / z, 0.0))))
        }
    }
}

fn hypercube_side(t: &ComplexTensor) -> Result<usize> {
    match t.shape() {
        [q, a, b, c] if q == a && q == b && q == c => Ok(*q),
        s => Err(Error::Shape(format!("expected a [q, q, q, q] tensor, got {s:?}"))),
    }
}

/// Transfer matrix `B((x0, x0'), (x1, x1')) = F(x0, x1, x0', x1')`.
pub fn b_matrix(f: &ComplexTensor) -> Result<ComplexTensor> {
    let q = hypercube_side(f)?;
    f.permute(&[0, 2, 1, 3])?.reshape(vec![q * q, q * q])
}

/// Inverse of [`b_matrix`].
pub fn b_matrix_inverse(b: &ComplexTensor) -> Result<ComplexTensor> {
    let q = match b.shape() {
        [n, m] if n == m => {
            let q = (*n as f64).sqrt().round() as usize;
            if q * q != *n {
                return Err(Error::Shape(format!("{n} is not a perfect square")));
            }
            q
        }
        s => return Err(Error::Shape(format!("expected a square matrix, got {s:?}"))),
    };
    b.clone().reshape(vec![q, q, q, q])?.permute(&[0, 2, 1, 3])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleSpectrum {
    /// `trace(B^n)`.
    pub z_exact: C64,
    /// Dominant eigenvalue of `B`.
    pub lambda0: f64,
    /// `lambda0^n`.
    pub z_bethe_predicted: f64,
}

/// Exact and Bethe partition sums of the `n`-cycle built from `F`.
pub fn cycle_spectral_z(f: &ComplexTensor, n: usize) -> Result<CycleSpectrum> {
    if n < 2 {
        return Err(Error::InvalidArgument("cycle length must be at least 2".into()));
    }
    let b = b_matrix(f)?;
    let z_exact = matrix_power_trace(&b, n)?;
    let lambda0 = power_iteration(&b, POWER_MAX_ITERS, POWER_TOL)?.lambda0;
    Ok(CycleSpectrum { z_exact, lambda0, z_bethe_predicted: lambda0.powi(n as i32) })
}

fn square(theta: &ComplexTensor, max_n: usize) -> Result<usize> {
    match theta.shape() {
        [n, m] if n == m && (1..=max_n).contains(n) => Ok(*n),
        [n, m] if n == m => Err(Error::InvalidArgument(format!("matrix size {n} outside 1..={max_n}"))),
        s => Err(Error::Shape(format!("expected a square matrix, got {s:?}"))),
    }
}

/// Ryser's inclusion–exclusion formula with Gray-code subset order:
/// `perm(A) = (-1)^n Σ_S (-1)^{|S|} Π_i Σ_{j∈S} a_ij`, `O(n 2^n)`.
pub fn ryser_permanent(theta: &ComplexTensor) -> Result<C64> {
    let n = square(theta, 30)?;
    let a = theta.data();
    let mut row_sums = vec![C64::new(0.0, 0.0); n];
    let mut total = C64::new(0.0, 0.0);
    let mut gray = 0u64;
    for k in 1u64..(1 << n) {
        let j = k.trailing_zeros() as usize;
        gray ^= 1 << j;
        if gray & (1 << j) != 0 {
            for i in 0..n {
                row_sums[i] += a[i * n + j];
            }
        } else {
            for i in 0..n {
                row_sums[i] -= a[i * n + j];
            }
        }
        let prod: C64 = row_sums.iter().product();
        if gray.count_ones().is_multiple_of(2) {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(if n % 2 == 0 { total } else { -total })
}

/// Sum over all `n!` permutations.
pub fn naive_permanent(theta: &ComplexTensor) -> Result<C64> {
    fn go(a: &[C64], n: usize, row: usize, used: u32) -> C64 {
        if row == n {
            return C64::new(1.0, 0.0);
        }
        (0..n)
            .filter(|&j| used & (1 << j) == 0)
            .map(|j| a[row * n + j] * go(a, n, row + 1, used | (1 << j)))
            .sum()
    }
    let n = square(theta, 8)?;
    Ok(go(theta.data(), n, 0, 0))
}
