//! Sum-product algorithm with the flooding schedule.
//!
//! Every edge carries two messages, one toward each of its ends. A message
//! toward end `k` of edge `e` is computed at the factor on the opposite end by
//! contracting that factor's tensor with the messages flowing into all of its
//! other ports. Double-edge messages are `a x a` matrices indexed `(x, x')`,
//! single-edge messages are real vectors indexed `y`.
//!
//! Updates are synchronous: iteration `t` reads only the state of iteration
//! `t - 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{Compiled, DeNfg, EdgeKind};
use crate::tensor::{psd_check, ComplexTensor, C64, PSD_TOL};

/// A normalizer at or below this fraction of the payload's L1 norm means the
/// message has collapsed.
const DEGENERATE_REL: f64 = 1e-12;

/// Lower bound for single-edge payload entries in verify mode, relative to
/// the payload sum.
const SINGLE_NEGATIVITY_TOL: f64 = 1e-12;

/// Regularizer for seeded PD initial messages.
const SEEDED_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Single(Vec<f64>),
    /// `[a, a]` matrix indexed `(x, x')`.
    Double(ComplexTensor),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::Single(v) => v.len(),
            Payload::Double(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub(crate) fn at(&self, code: usize) -> C64 {
        match self {
            Payload::Single(v) => C64::new(v[code], 0.0),
            Payload::Double(m) => m.data()[code],
        }
    }

    /// Sum for single payloads, real part of the trace for double payloads.
    pub fn normalizer(&self) -> f64 {
        match self {
            Payload::Single(v) => v.iter().sum(),
            Payload::Double(m) => m.trace().map(|t| t.re).unwrap_or(f64::NAN),
        }
    }

    pub fn l1_norm(&self) -> f64 {
        match self {
            Payload::Single(v) => v.iter().map(|x| x.abs()).sum(),
            Payload::Double(m) => m.l1_norm(),
        }
    }

    pub fn scale(&self, c: f64) -> Payload {
        match self {
            Payload::Single(v) => Payload::Single(v.iter().map(|x| x * c).collect()),
            Payload::Double(m) => Payload::Double(m.scale(C64::new(c, 0.0))),
        }
    }

    /// L1 distance between entries.
    pub fn l1_distance(&self, other: &Payload) -> f64 {
        match (self, other) {
            (Payload::Single(a), Payload::Single(b)) => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            (Payload::Double(a), Payload::Double(b)) => {
                a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).sum()
            }
            _ => f64::INFINITY,
        }
    }

    /// Copy with unit sum / unit trace, or `None` if the normalizer is
    /// degenerate.
    pub fn normalized(&self) -> Option<Payload> {
        let z = self.normalizer();
        (z > DEGENERATE_REL * self.l1_norm() && z.is_finite()).then(|| self.scale(1.0 / z))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MessageState {
    /// Iterations applied so far.
    pub iteration: usize,
    /// `messages[e][k]` is the message on edge `e` flowing toward end `k`.
    messages: Vec<[Payload; 2]>,
}

impl MessageState {
    pub fn from_payloads(iteration: usize, messages: Vec<[Payload; 2]>) -> Self {
        Self { iteration, messages }
    }

    /// The message on edge `edge` flowing toward end `to_end` (0 or 1).
    pub fn message(&self, edge: usize, to_end: usize) -> &Payload {
        &self.messages[edge][to_end]
    }

    pub fn message_mut(&mut self, edge: usize, to_end: usize) -> &mut Payload {
        &mut self.messages[edge][to_end]
    }

    /// The message on `edge` flowing into `factor`. For a self-loop this is
    /// the message toward end 0.
    pub fn message_to(&self, g: &DeNfg, edge: &str, factor: &str) -> Result<&Payload> {
        let e = g.edge_index(edge)?;
        let ends = &g.edges()[e].ends;
        let end = ends.iter().position(|f| f == factor).ok_or_else(|| {
            Error::InvalidArgument(format!("factor `{factor}` is not an endpoint of edge `{edge}`"))
        })?;
        Ok(&self.messages[e][end])
    }

    pub fn payloads(&self) -> &[[Payload; 2]] {
        &self.messages
    }

    /// Number of messages, `2 |E|`.
    pub fn len(&self) -> usize {
        2 * self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// Single-edge payloads sum to one, double-edge payloads have unit trace.
    Standard,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    /// All-ones single payloads and identity double payloads, normalized.
    Uniform,
    /// `δ(x, x')` on double edges (same as `Uniform` after normalization).
    KroneckerDelta,
    /// Random positive vectors and random PD matrices `A†A + εI`.
    Seeded(u64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaConfig {
    pub max_iters: usize,
    /// Stop once the largest L1 change of a normalized payload drops below this.
    pub conv_tol: f64,
    /// Weight of the previous message in the update, in `[0, 1)`.
    pub damping: f64,
    pub normalization: Normalization,
    /// Replace double payloads by `(M + M†)/2` after each update.
    pub hermitize: bool,
    /// Check message positivity after every iteration.
    pub verify: bool,
}

impl Default for SpaConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            conv_tol: 1e-10,
            damping: 0.0,
            normalization: Normalization::Standard,
            hermitize: true,
            verify: false,
        }
    }
}

impl SpaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if !(self.conv_tol > 0.0) {
            return Err(Error::InvalidArgument("conv_tol must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidArgument("damping must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SpaResult {
    pub state: MessageState,
    pub converged: bool,
    pub iterations: usize,
    /// Largest message change of each iteration.
    pub residuals: Vec<f64>,
    /// Set by [`crate::bethe::annotate`].
    pub z_bethe: Option<C64>,
}

/// Initial messages satisfying the positivity assumption strictly.
pub fn init_messages(g: &DeNfg, mode: InitMode) -> MessageState {
    let mut rng = match mode {
        InitMode::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let messages = g
        .edges()
        .iter()
        .map(|e| {
            let a = e.alphabet;
            let mut make = || match (e.kind, rng.as_mut()) {
                (EdgeKind::Single, None) => Payload::Single(vec![1.0 / a as f64; a]),
                (EdgeKind::Double, None) => Payload::Double(ComplexTensor::identity(a).scale(C64::new(1.0 / a as f64, 0.0))),
                (EdgeKind::Single, Some(r)) => {
                    let v: Vec<f64> = (0..a).map(|_| r.random_range(0.05..1.0)).collect();
                    let s: f64 = v.iter().sum();
                    Payload::Single(v.into_iter().map(|x| x / s).collect())
                }
                (EdgeKind::Double, Some(r)) => {
                    let data: Vec<C64> = (0..a * a)
                        .map(|_| C64::new(r.sample::<f64, _>(StandardNormal), r.sample::<f64, _>(StandardNormal)))
                        .collect();
                    let m = ComplexTensor::from_parts(vec![a, a], data);
                    let ata = m.conj_transpose().and_then(|mh| mh.matmul(&m)).expect("square");
                    let pd = ata.add(&ComplexTensor::identity(a).scale(C64::new(SEEDED_EPSILON, 0.0))).expect("same shape");
                    let pd = pd.hermitian_part().expect("square");
                    let tr = pd.trace().expect("square").re;
                    Payload::Double(pd.scale(C64::new(1.0 / tr, 0.0)))
                }
            };
            let first = make();
            let second = make();
            [first, second]
        })
        .collect();
    MessageState { iteration: 0, messages }
}

/// Precompiled graph for repeated message updates.
pub(crate) struct Engine<'g> {
    pub g: &'g DeNfg,
    pub c: Compiled,
}

impl<'g> Engine<'g> {
    pub fn new(g: &'g DeNfg) -> Result<Self> {
        Ok(Self { g, c: Compiled::new(g)? })
    }

    /// Contraction of the source factor with its other incoming messages,
    /// before hermitization and normalization.
    fn raw_update(&self, state: &MessageState, edge: usize, to_end: usize) -> Payload {
        let src = self.c.wiring.edge_ends[edge][1 - to_end];
        let table = &self.c.tables[src.factor];
        let incoming: Vec<&Payload> = self.c.wiring.port_edges[src.factor]
            .iter()
            .map(|&(e, k)| &state.messages[e][k])
            .collect();
        let target = src.port;
        let mut out = vec![C64::new(0.0, 0.0); table.port_states[target]];
        for (k, &value) in table.values.iter().enumerate() {
            let codes = table.entry_codes(k);
            let mut prod = value;
            for (p, msg) in incoming.iter().enumerate() {
                if p != target {
                    prod *= msg.at(codes[p] as usize);
                }
            }
            out[codes[target] as usize] += prod;
        }
        let e = &self.g.edges()[edge];
        match e.kind {
            EdgeKind::Single => Payload::Single(out.into_iter().map(|z| z.re).collect()),
            EdgeKind::Double => Payload::Double(ComplexTensor::from_parts(vec![e.alphabet, e.alphabet], out)),
        }
    }

    pub fn update(&self, state: &MessageState, edge: usize, to_end: usize, cfg: &SpaConfig) -> Result<Payload> {
        let mut msg = self.raw_update(state, edge, to_end);
        if cfg.hermitize {
            if let Payload::Double(m) = &msg {
                msg = Payload::Double(m.hermitian_part()?);
            }
        }
        let z = msg.normalizer();
        let l1 = msg.l1_norm();
        if !(z > DEGENERATE_REL * l1) || !z.is_finite() || l1 == 0.0 {
            return Err(Error::DegenerateMessage {
                edge: self.g.edges()[edge].id.clone(),
                iteration: state.iteration + 1,
                normalizer: z,
            });
        }
        Ok(match cfg.normalization {
            Normalization::Standard => msg.scale(1.0 / z),
            Normalization::None => msg,
        })
    }

    pub fn flood(&self, state: &MessageState, cfg: &SpaConfig) -> Result<(MessageState, f64)> {
        let mut residual = 0.0f64;
        let mut messages = Vec::with_capacity(state.messages.len());
        for (e, old) in state.messages.iter().enumerate() {
            let mut pair = [Payload::Single(Vec::new()), Payload::Single(Vec::new())];
            for k in 0..2 {
                let mut new = self.update(state, e, k, cfg)?;
                if cfg.damping > 0.0 {
                    new = damp(&new, &old[k], cfg.damping);
                }
                let dist = match (new.normalized(), old[k].normalized()) {
                    (Some(a), Some(b)) => a.l1_distance(&b),
                    _ => f64::INFINITY,
                };
                residual = residual.max(dist);
                pair[k] = new;
            }
            messages.push(pair);
        }
        let next = MessageState { iteration: state.iteration + 1, messages };
        if cfg.verify {
            self.verify(&next)?;
        }
        Ok((next, residual))
    }

    /// Single payloads non-negative, double payloads PSD.
    pub fn verify(&self, state: &MessageState) -> Result<()> {
        for (e, pair) in state.messages.iter().enumerate() {
            for msg in pair {
                let fail = |detail: String| Error::MessageInvariant {
                    edge: self.g.edges()[e].id.clone(),
                    iteration: state.iteration,
                    detail,
                };
                match msg {
                    Payload::Single(v) => {
                        let sum: f64 = v.iter().map(|x| x.abs()).sum();
                        if let Some(x) = v.iter().find(|&&x| x < -SINGLE_NEGATIVITY_TOL * sum) {
                            return Err(fail(format!("negative single-edge entry {x:e}")));
                        }
                    }
                    Payload::Double(m) => {
                        if !psd_check(m, PSD_TOL)? {
                            return Err(fail("double-edge message is not PSD".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn damp(new: &Payload, old: &Payload, damping: f64) -> Payload {
    match (new, old) {
        (Payload::Single(a), Payload::Single(b)) => {
            Payload::Single(a.iter().zip(b).map(|(x, y)| (1.0 - damping) * x + damping * y).collect())
        }
        (Payload::Double(a), Payload::Double(b)) => Payload::Double(
            a.scale(C64::new(1.0 - damping, 0.0))
                .add(&b.scale(C64::new(damping, 0.0)))
                .expect("same edge, same shape"),
        ),
        _ => new.clone(),
    }
}

fn resolve_end(g: &DeNfg, edge: &str, toward: &str) -> Result<(usize, usize)> {
    let e = g.edge_index(edge)?;
    let end = g.edges()[e]
        .ends
        .iter()
        .position(|f| f == toward)
        .ok_or_else(|| Error::InvalidArgument(format!("factor `{toward}` is not an endpoint of edge `{edge}`")))?;
    Ok((e, end))
}

/// Recomputes the message on `edge` toward factor `toward` from `state`.
pub fn update_message(g: &DeNfg, state: &MessageState, edge: &str, toward: &str, cfg: &SpaConfig) -> Result<Payload> {
    let (e, end) = resolve_end(g, edge, toward)?;
    Engine::new(g)?.update(state, e, end, cfg)
}

/// One synchronous update of all `2 |E|` messages; returns the new state and
/// the largest L1 change of a normalized payload.
pub fn flood_iteration(g: &DeNfg, state: &MessageState, cfg: &SpaConfig) -> Result<(MessageState, f64)> {
    cfg.validate()?;
    Engine::new(g)?.flood(state, cfg)
}

pub fn run_spa(g: &DeNfg, cfg: &SpaConfig, init: InitMode) -> Result<SpaResult> {
    run_spa_observed(g, cfg, init, |_| Ok(()))
}

/// Like [`run_spa`], calling `observer` with the state after every iteration.
pub fn run_spa_observed<F>(g: &DeNfg, cfg: &SpaConfig, init: InitMode, observer: F) -> Result<SpaResult>
where
    F: FnMut(&MessageState) -> Result<()>,
{
    run_spa_from(g, cfg, init_messages(g, init), observer)
}

/// Runs the flooding schedule from an explicit initial state.
pub fn run_spa_from<F>(g: &DeNfg, cfg: &SpaConfig, init: MessageState, mut observer: F) -> Result<SpaResult>
where
    F: FnMut(&MessageState) -> Result<()>,
{
    cfg.validate()?;
    let engine = Engine::new(g)?;
    if cfg.verify {
        engine.verify(&init)?;
    }
    let mut state = init;
    let mut residuals = Vec::new();
    let mut converged = false;
    while residuals.len() < cfg.max_iters {
        let (next, residual) = engine.flood(&state, cfg)?;
        state = next;
        residuals.push(residual);
        observer(&state)?;
        if residual < cfg.conv_tol {
            converged = true;
            break;
        }
    }
    Ok(SpaResult { iterations: residuals.len(), state, converged, residuals, z_bethe: None })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Belief {
    Single(Vec<f64>),
    Double(ComplexTensor),
}

impl Belief {
    pub fn l1_distance(&self, other: &Belief) -> f64 {
        match (self, other) {
            (Belief::Single(a), Belief::Single(b)) => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            (Belief::Double(a), Belief::Double(b)) => a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).sum(),
            _ => f64::INFINITY,
        }
    }
}

/// Per-edge beliefs: the element-wise product of both messages on the edge,
/// normalized to unit sum (single) or unit trace (double).
pub fn beliefs(g: &DeNfg, state: &MessageState) -> Result<Vec<Belief>> {
    g.edges()
        .iter()
        .zip(&state.messages)
        .map(|(e, [a, b])| {
            let degenerate = |z: f64| Error::DegenerateBelief { edge: e.id.clone(), normalizer: z };
            match (a, b) {
                (Payload::Single(a), Payload::Single(b)) => {
                    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
                    let z: f64 = prod.iter().sum();
                    let l1: f64 = prod.iter().map(|x| x.abs()).sum();
                    if !(z > DEGENERATE_REL * l1) || l1 == 0.0 {
                        return Err(degenerate(z));
                    }
                    Ok(Belief::Single(prod.into_iter().map(|x| x / z).collect()))
                }
                (Payload::Double(a), Payload::Double(b)) => {
                    let data: Vec<C64> = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
                    let m = ComplexTensor::from_parts(a.shape().to_vec(), data);
                    let z = m.trace()?.re;
                    let l1 = m.l1_norm();
                    if !(z > DEGENERATE_REL * l1) || l1 == 0.0 {
                        return Err(degenerate(z));
                    }
                    Ok(Belief::Double(m.scale(C64::new(1.0 / z, 0.0))))
                }
                _ => Err(Error::Shape(format!("edge `{}` has mismatched payload kinds", e.id))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Factor};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn vecf(id: &str, port: &str, v: &[f64]) -> Factor {
        Factor::new(id, vec![port.into()], ComplexTensor::from_real(vec![v.len()], v).unwrap())
    }

    #[test]
    fn init_examples() {
        let g = DeNfg::new(
            vec![Edge::double("d", 2, "f", "h"), Edge::single("s", 3, "f", "h")],
            vec![
                Factor::new("f", vec!["d".into(), "s".into()], ComplexTensor::zeros(vec![2, 2, 3])),
                Factor::new("h", vec!["d".into(), "s".into()], ComplexTensor::zeros(vec![2, 2, 3])),
            ],
        )
        .unwrap();
        let s = init_messages(&g, InitMode::KroneckerDelta);
        assert_eq!(s.len(), 4);
        assert_eq!(
            s.message(0, 0),
            &Payload::Double(ComplexTensor::from_real(vec![2, 2], &[0.5, 0.0, 0.0, 0.5]).unwrap())
        );
        let u = init_messages(&g, InitMode::Uniform);
        assert_eq!(u.message(1, 1), &Payload::Single(vec![1.0 / 3.0; 3]));
        let a = init_messages(&g, InitMode::Seeded(7));
        let b = init_messages(&g, InitMode::Seeded(7));
        assert_eq!(a, b);
        assert_ne!(a, init_messages(&g, InitMode::Seeded(8)));
        // strictly PD / positive
        for pair in a.payloads() {
            for m in pair {
                match m {
                    Payload::Single(v) => assert!(v.iter().all(|&x| x > 0.0)),
                    Payload::Double(m) => {
                        let eig = crate::tensor::hermitian_eig(&crate::tensor::HermitianView::new(m.clone(), PSD_TOL).unwrap()).unwrap();
                        assert!(*eig.eigenvalues.last().unwrap() > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn column_sum_update() {
        // f(y1, y2) = [[1, 2], [3, 4]] with y1 on edge a, y2 on edge b
        let f = Factor::new("f", vec!["a".into(), "b".into()], ComplexTensor::from_real(vec![2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
        let g = DeNfg::new(
            vec![Edge::single("a", 2, "f", "A"), Edge::single("b", 2, "f", "B")],
            vec![f, vecf("A", "a", &[1.0, 1.0]), vecf("B", "b", &[1.0, 1.0])],
        )
        .unwrap();
        let mut state = init_messages(&g, InitMode::Uniform);
        *state.message_mut(0, 0) = Payload::Single(vec![1.0, 1.0]);
        let msg = update_message(&g, &state, "b", "B", &SpaConfig::default()).unwrap();
        let Payload::Single(v) = msg else { panic!() };
        assert!((v[0] - 0.4).abs() < 1e-15 && (v[1] - 0.6).abs() < 1e-15);
        let raw = update_message(&g, &state, "b", "B", &SpaConfig { normalization: Normalization::None, ..Default::default() }).unwrap();
        assert_eq!(raw, Payload::Single(vec![4.0, 6.0]));
    }

    fn identity_channel() -> ComplexTensor {
        // δ(x1, x2) δ(x1', x2'), axes (x1, x2, x1', x2')
        let mut t = ComplexTensor::zeros(vec![2, 2, 2, 2]);
        for x in 0..2 {
            for xp in 0..2 {
                let off = t.offset(&[x, x, xp, xp]).unwrap();
                t.data_mut()[off] = c(1.0, 0.0);
            }
        }
        t
    }

    #[test]
    fn identity_channel_copies_message() {
        let ones = ComplexTensor::from_real(vec![2, 2], &[1.0; 4]).unwrap();
        let g = DeNfg::new(
            vec![Edge::double("p1", 2, "A", "f"), Edge::double("p2", 2, "f", "B")],
            vec![
                Factor::new("A", vec!["p1".into()], ones.clone()),
                Factor::new("f", vec!["p1".into(), "p2".into()], identity_channel()),
                Factor::new("B", vec!["p2".into()], ones),
            ],
        )
        .unwrap();
        let m = ComplexTensor::from_rows(&[vec![c(2.0, 0.0), c(0.5, 0.5)], vec![c(0.5, -0.5), c(1.0, 0.0)]]).unwrap();
        let mut state = init_messages(&g, InitMode::Uniform);
        *state.message_mut(0, 1) = Payload::Double(m.clone());
        let out = update_message(&g, &state, "p2", "B", &SpaConfig::default()).unwrap();
        assert_eq!(out, Payload::Double(m.scale(c(1.0 / 3.0, 0.0))));
    }

    #[test]
    fn update_matches_nested_loop_oracle() {
        // factor with ports (double a:2, double b:3, single y:2): message toward
        // the far end of `b`, i.e. over (x_b, x_b').
        let shape = vec![2, 3, 2, 3, 2];
        let len: usize = shape.iter().product();
        let data: Vec<C64> = (0..len).map(|i| c(((i * 7) % 11) as f64 - 5.0, ((i * 3) % 5) as f64 - 2.0)).collect();
        let t = ComplexTensor::new(shape.clone(), data).unwrap();
        let g = DeNfg::new(
            vec![Edge::double("a", 2, "f", "A"), Edge::double("b", 3, "f", "B"), Edge::single("y", 2, "f", "Y")],
            vec![
                Factor::new("f", vec!["a".into(), "b".into(), "y".into()], t.clone()),
                Factor::new("A", vec!["a".into()], ComplexTensor::identity(2)),
                Factor::new("B", vec!["b".into()], ComplexTensor::identity(3)),
                vecf("Y", "y", &[1.0, 1.0]),
            ],
        )
        .unwrap();
        let state = init_messages(&g, InitMode::Seeded(3));
        let mu_a = state.message_to(&g, "a", "f").unwrap().clone();
        let mu_y = state.message_to(&g, "y", "f").unwrap().clone();
        let cfg = SpaConfig { normalization: Normalization::None, hermitize: false, ..Default::default() };
        let out = update_message(&g, &state, "b", "B", &cfg).unwrap();
        let Payload::Double(out) = out else { panic!() };
        for xb in 0..3 {
            for pb in 0..3 {
                let mut s = c(0.0, 0.0);
                for xa in 0..2 {
                    for pa in 0..2 {
                        for y in 0..2 {
                            s += t.get(&[xa, xb, pa, pb, y]).unwrap() * mu_a.at(xa * 2 + pa) * mu_y.at(y);
                        }
                    }
                }
                assert!((out.get(&[xb, pb]).unwrap() - s).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn degenerate_message_names_edge() {
        let g = DeNfg::new(
            vec![Edge::single("e", 2, "f", "h")],
            vec![vecf("f", "e", &[0.0, 0.0]), vecf("h", "e", &[1.0, 1.0])],
        )
        .unwrap();
        let err = run_spa(&g, &SpaConfig::default(), InitMode::Uniform).unwrap_err();
        assert!(matches!(err, Error::DegenerateMessage { ref edge, iteration: 1, .. } if edge == "e"), "{err}");
    }

    #[test]
    fn two_factor_tree_converges_on_second_iteration() {
        let g = DeNfg::new(
            vec![Edge::single("e", 2, "f", "h")],
            vec![vecf("f", "e", &[1.0, 3.0]), vecf("h", "e", &[2.0, 2.0])],
        )
        .unwrap();
        let cfg = SpaConfig::default();
        let s0 = init_messages(&g, InitMode::Uniform);
        let (s1, r1) = flood_iteration(&g, &s0, &cfg).unwrap();
        assert!(r1 > 0.0);
        let (_, r2) = flood_iteration(&g, &s1, &cfg).unwrap();
        assert_eq!(r2, 0.0);
        let res = run_spa(&g, &cfg, InitMode::Uniform).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 2);
    }

    #[test]
    fn damping_is_a_convex_combination() {
        let g = DeNfg::new(
            vec![Edge::single("e", 2, "f", "h")],
            vec![vecf("f", "e", &[1.0, 3.0]), vecf("h", "e", &[2.0, 2.0])],
        )
        .unwrap();
        let s0 = init_messages(&g, InitMode::Uniform);
        let (raw, _) = flood_iteration(&g, &s0, &SpaConfig::default()).unwrap();
        let (damped, _) = flood_iteration(&g, &s0, &SpaConfig { damping: 0.5, ..Default::default() }).unwrap();
        // message toward h comes from f = [0.25, 0.75]
        assert_eq!(raw.message(0, 1), &Payload::Single(vec![0.25, 0.75]));
        assert_eq!(damped.message(0, 1), &Payload::Single(vec![0.375, 0.625]));
    }

    #[test]
    fn max_iters_one_on_cycle_reports_not_converged() {
        // 3-cycle of single edges with non-uniform factors
        let pair = |v: &[f64]| ComplexTensor::from_real(vec![2, 2], v).unwrap();
        let g = DeNfg::new(
            vec![Edge::single("a", 2, "f", "g"), Edge::single("b", 2, "g", "h"), Edge::single("c", 2, "h", "f")],
            vec![
                Factor::new("f", vec!["a".into(), "c".into()], pair(&[1.0, 2.0, 3.0, 1.0])),
                Factor::new("g", vec!["a".into(), "b".into()], pair(&[2.0, 1.0, 1.0, 5.0])),
                Factor::new("h", vec!["b".into(), "c".into()], pair(&[1.0, 4.0, 1.0, 1.0])),
            ],
        )
        .unwrap();
        let res = run_spa(&g, &SpaConfig { max_iters: 1, ..Default::default() }, InitMode::Uniform).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 1);
        assert_eq!(res.residuals.len(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(SpaConfig { max_iters: 0, ..Default::default() }.validate().is_err());
        assert!(SpaConfig { conv_tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(SpaConfig { damping: 1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn belief_of_identity_messages() {
        let g = DeNfg::new(
            vec![Edge::double("e", 2, "f", "h")],
            vec![
                Factor::new("f", vec!["e".into()], ComplexTensor::identity(2)),
                Factor::new("h", vec!["e".into()], ComplexTensor::identity(2)),
            ],
        )
        .unwrap();
        let s = init_messages(&g, InitMode::KroneckerDelta);
        let b = beliefs(&g, &s).unwrap();
        assert_eq!(b[0], Belief::Double(ComplexTensor::identity(2).scale(c(0.5, 0.0))));
    }

    #[test]
    fn schur_product_of_psd_is_psd() {
        use rand_distr::Distribution;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let normal = StandardNormal;
        let random_psd = |rng: &mut ChaCha8Rng, n: usize, rank: usize| {
            let a: Vec<C64> = (0..rank * n)
                .map(|_| C64::new(Distribution::<f64>::sample(&normal, rng), Distribution::<f64>::sample(&normal, rng)))
                .collect();
            let a = ComplexTensor::new(vec![rank, n], a).unwrap();
            a.conj_transpose().unwrap().matmul(&a).unwrap()
        };
        for _ in 0..50 {
            let n = 4;
            let a = random_psd(&mut rng, n, 2);
            let b = random_psd(&mut rng, n, 3);
            let prod: Vec<C64> = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
            let p = ComplexTensor::new(vec![n, n], prod).unwrap();
            assert!(psd_check(&p, PSD_TOL).unwrap());
        }
    }
}
