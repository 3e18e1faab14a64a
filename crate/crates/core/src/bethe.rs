//! Bethe approximation of the partition sum from a message set:
//! `Z_Bethe = Π_f Z_f / Π_e Z_e`.

use crate::error::{Error, Result};
use crate::graph::{Compiled, DeNfg, Edge, Factor, FactorTable};
use crate::spa::{MessageState, Payload, SpaResult};
use crate::tensor::C64;

/// `|Z_e|` at or below this multiple of the geometric mean of `|Z_f|` makes
/// the quotient ill-defined.
pub const VANISHING_EDGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct BetheBreakdown {
    /// `(factor id, Z_f)` in graph order.
    pub z_f: Vec<(String, C64)>,
    /// `(edge id, Z_e)` in graph order.
    pub z_e: Vec<(String, C64)>,
    pub z_bethe: C64,
    /// Iteration of the message set the breakdown was computed from.
    pub iteration: usize,
    /// Whether that message set was an SPA fixed point, when known.
    pub converged: Option<bool>,
}

fn contract_table(table: &FactorTable, incoming: &[&Payload]) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    for (k, &value) in table.values.iter().enumerate() {
        let codes = table.entry_codes(k);
        let mut prod = value;
        for (msg, &code) in incoming.iter().zip(codes) {
            prod *= msg.at(code as usize);
        }
        total += prod;
    }
    total
}

/// Full contraction of a factor with the messages flowing into each of its
/// ports (`incoming[p]` for port `p`).
pub fn z_factor(g: &DeNfg, factor: &Factor, incoming: &[&Payload]) -> Result<C64> {
    let layout = g.port_layout(factor)?;
    if g.expected_shape(factor)? != factor.data.shape() {
        return Err(Error::Shape(format!("factor `{}` does not match its ports", factor.id)));
    }
    if incoming.len() != layout.len() {
        return Err(Error::Shape(format!(
            "factor `{}` has {} ports, got {} messages",
            factor.id,
            layout.len(),
            incoming.len()
        )));
    }
    for (p, (msg, axes)) in incoming.iter().zip(&layout).enumerate() {
        if msg.len() != axes.states() {
            return Err(Error::Shape(format!(
                "message on port {p} of `{}` has {} entries, expected {}",
                factor.id,
                msg.len(),
                axes.states()
            )));
        }
    }
    Ok(contract_table(&FactorTable::build(factor, &layout), incoming))
}

/// `Σ μ_{e→f} · μ_{e→h}` over the edge's variable(s).
pub fn z_edge(edge: &Edge, to_f: &Payload, to_h: &Payload) -> Result<C64> {
    let n = edge.kind.states(edge.alphabet);
    let kinds_match = matches!(
        (edge.kind, to_f, to_h),
        (crate::graph::EdgeKind::Single, Payload::Single(_), Payload::Single(_))
            | (crate::graph::EdgeKind::Double, Payload::Double(_), Payload::Double(_))
    );
    if !kinds_match || to_f.len() != n || to_h.len() != n {
        return Err(Error::Shape(format!("messages do not match edge `{}`", edge.id)));
    }
    Ok((0..n).map(|i| to_f.at(i) * to_h.at(i)).sum())
}

/// Product of `factors` divided by product of `edges`, accumulated as log
/// magnitude plus phase.
fn quotient(factors: &[(String, C64)], edges: &[(String, C64)]) -> C64 {
    let mut log_mag = 0.0;
    let mut phase = 0.0;
    for (_, z) in factors {
        log_mag += z.norm().ln();
        phase += z.arg();
    }
    for (_, z) in edges {
        log_mag -= z.norm().ln();
        phase -= z.arg();
    }
    C64::from_polar(log_mag.exp(), phase)
}

pub(crate) fn breakdown(g: &DeNfg, c: &Compiled, state: &MessageState) -> Result<BetheBreakdown> {
    let z_f: Vec<(String, C64)> = g
        .factors()
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let incoming: Vec<&Payload> =
                c.wiring.port_edges[fi].iter().map(|&(e, k)| state.message(e, k)).collect();
            (f.id.clone(), contract_table(&c.tables[fi], &incoming))
        })
        .collect();
    let z_e = g
        .edges()
        .iter()
        .enumerate()
        .map(|(ei, e)| Ok((e.id.clone(), z_edge(e, state.message(ei, 0), state.message(ei, 1))?)))
        .collect::<Result<Vec<_>>>()?;

    let geo_mean = if z_f.is_empty() {
        1.0
    } else {
        (z_f.iter().map(|(_, z)| z.norm().ln()).sum::<f64>() / z_f.len() as f64).exp()
    };
    if let Some((id, z)) = z_e.iter().find(|(_, z)| !(z.norm() > VANISHING_EDGE_TOL * geo_mean)) {
        return Err(Error::VanishingEdgeSum { edge: id.clone(), magnitude: z.norm() });
    }
    let z_bethe = quotient(&z_f, &z_e);
    Ok(BetheBreakdown { z_f, z_e, z_bethe, iteration: state.iteration, converged: None })
}

pub fn z_bethe(g: &DeNfg, state: &MessageState) -> Result<BetheBreakdown> {
    breakdown(g, &Compiled::new(g)?, state)
}

/// Computes the breakdown for the final state of `result` and stores
/// `Z_Bethe` in it.
pub fn annotate(g: &DeNfg, result: &mut SpaResult) -> Result<BetheBreakdown> {
    let mut b = z_bethe(g, &result.state)?;
    b.converged = Some(result.converged);
    result.z_bethe = Some(b.z_bethe);
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeKind;
    use crate::spa::{init_messages, InitMode};
    use crate::tensor::ComplexTensor;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn z_factor_examples() {
        let f = Factor::new("f", vec!["e".into()], ComplexTensor::from_real(vec![2], &[2.0, 3.0]).unwrap());
        let h = Factor::new("h", vec!["e".into()], ComplexTensor::from_real(vec![2], &[1.0, 1.0]).unwrap());
        let g = DeNfg::new(vec![Edge::single("e", 2, "f", "h")], vec![f.clone(), h]).unwrap();
        let z = z_factor(&g, &f, &[&Payload::Single(vec![1.0, 1.0])]).unwrap();
        assert_eq!(z, c(5.0, 0.0));
        assert!(z_factor(&g, &f, &[&Payload::Single(vec![1.0, 1.0, 1.0])]).is_err());

        let d = Factor::new("d", vec!["x".into()], ComplexTensor::identity(2));
        let g2 = DeNfg::new(vec![Edge::double("x", 2, "d", "d2")], vec![d.clone()]).unwrap();
        let half = Payload::Double(ComplexTensor::identity(2).scale(c(0.5, 0.0)));
        assert_eq!(z_factor(&g2, &d, &[&half]).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn z_factor_matches_nested_loops() {
        let shape = vec![2, 2, 2, 2, 3];
        let len: usize = shape.iter().product();
        let data: Vec<C64> = (0..len).map(|i| c((i % 5) as f64 - 1.5, (i % 3) as f64)).collect();
        let t = ComplexTensor::new(shape, data).unwrap();
        let f = Factor::new("f", vec!["a".into(), "b".into(), "y".into()], t.clone());
        let g = DeNfg::new(
            vec![Edge::double("a", 2, "f", "A"), Edge::double("b", 2, "f", "B"), Edge::single("y", 3, "f", "Y")],
            vec![f.clone()],
        )
        .unwrap();
        let ma = Payload::Double(ComplexTensor::new(vec![2, 2], vec![c(1.0, 0.0), c(0.2, 0.3), c(0.2, -0.3), c(0.7, 0.0)]).unwrap());
        let mb = Payload::Double(ComplexTensor::new(vec![2, 2], vec![c(0.4, 0.0), c(-0.1, 0.1), c(-0.1, -0.1), c(0.9, 0.0)]).unwrap());
        let my = Payload::Single(vec![0.2, 0.5, 0.3]);
        let mut s = c(0.0, 0.0);
        for xa in 0..2 {
            for xb in 0..2 {
                for pa in 0..2 {
                    for pb in 0..2 {
                        for y in 0..3 {
                            s += t.get(&[xa, xb, pa, pb, y]).unwrap() * ma.at(xa * 2 + pa) * mb.at(xb * 2 + pb) * my.at(y);
                        }
                    }
                }
            }
        }
        let z = z_factor(&g, &f, &[&ma, &mb, &my]).unwrap();
        assert!((z - s).norm() < 1e-13);
    }

    #[test]
    fn z_edge_examples() {
        let e = Edge::single("e", 2, "f", "h");
        let half = Payload::Single(vec![0.5, 0.5]);
        assert_eq!(z_edge(&e, &half, &half).unwrap(), c(0.5, 0.0));
        let d = Edge::new("d", EdgeKind::Double, 2, "f", "h");
        let m = Payload::Double(ComplexTensor::identity(2).scale(c(0.5, 0.0)));
        assert_eq!(z_edge(&d, &m, &m).unwrap(), c(0.5, 0.0));
        assert!(z_edge(&d, &half, &m).is_err());
    }

    #[test]
    fn z_edge_of_psd_pair_is_real_non_negative() {
        let g = DeNfg::new(
            vec![Edge::double("e", 3, "f", "h")],
            vec![
                Factor::new("f", vec!["e".into()], ComplexTensor::identity(3)),
                Factor::new("h", vec!["e".into()], ComplexTensor::identity(3)),
            ],
        )
        .unwrap();
        for seed in 0..50 {
            let s = init_messages(&g, InitMode::Seeded(seed));
            let z = z_edge(&g.edges()[0], s.message(0, 0), s.message(0, 1)).unwrap();
            assert!(z.re > 0.0 && z.im.abs() <= 1e-12 * z.re, "{z}");
        }
    }

    #[test]
    fn vanishing_edge_sum_names_edge() {
        let g = DeNfg::new(
            vec![Edge::single("e", 2, "f", "h")],
            vec![
                Factor::new("f", vec!["e".into()], ComplexTensor::from_real(vec![2], &[1.0, 1.0]).unwrap()),
                Factor::new("h", vec!["e".into()], ComplexTensor::from_real(vec![2], &[1.0, 1.0]).unwrap()),
            ],
        )
        .unwrap();
        let s = crate::spa::MessageState::from_payloads(
            0,
            vec![[Payload::Single(vec![1.0, 0.0]), Payload::Single(vec![0.0, 1.0])]],
        );
        assert!(matches!(z_bethe(&g, &s), Err(Error::VanishingEdgeSum { ref edge, .. }) if edge == "e"));
    }

    #[test]
    fn rescaling_one_message_leaves_z_bethe_unchanged() {
        let g = crate::gen::cycle_denfg(&crate::gen::random_psd_chi2(&mut crate::gen::rng(4), 4), 3).unwrap();
        let s = init_messages(&g, InitMode::Seeded(1));
        let base = z_bethe(&g, &s).unwrap();
        for (e, k, factor) in [(0usize, 0usize, 2.5f64), (1, 1, 1e-3), (2, 0, 7.0)] {
            let mut t = s.clone();
            let scaled = t.message(e, k).scale(factor);
            *t.message_mut(e, k) = scaled;
            let b = z_bethe(&g, &t).unwrap();
            assert!((b.z_bethe - base.z_bethe).norm() <= 1e-12 * base.z_bethe.norm());
            let changed_f = b.z_f.iter().zip(&base.z_f).filter(|(x, y)| (x.1 - y.1).norm() > 1e-12 * y.1.norm()).count();
            let changed_e = b.z_e.iter().zip(&base.z_e).filter(|(x, y)| (x.1 - y.1).norm() > 1e-12 * y.1.norm()).count();
            assert_eq!((changed_f, changed_e), (1, 1));
        }
    }
}
