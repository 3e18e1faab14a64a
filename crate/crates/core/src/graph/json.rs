//! JSON graph documents:
//!
//! ```text
//! { "edges":   [ { "id": str, "kind": "single"|"double", "alphabet": int, "ends": [str, str] } ],
//!   "factors": [ { "id": str, "ports": [edge ids], "shape": [int], "values": [[re, im], ...] } ] }
//! ```

use serde_json::{json, Map, Value};

use super::{validate_structure, DeNfg, Edge, EdgeKind, Factor};
use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, C64};

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema { path: path.into(), message: message.into() }
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| schema(path, format!("missing field \"{key}\"")))
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| schema(path, "expected a string"))
}

fn as_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .and_then(|x| usize::try_from(x).ok())
        .ok_or_else(|| schema(path, "expected a non-negative integer"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| schema(path, "expected an array"))
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| schema(path, "expected an object"))
}

/// Label for error paths: `edges[3] ("e3")` when the id is readable.
fn label(kind: &str, i: usize, obj: &Map<String, Value>) -> String {
    match obj.get("id").and_then(Value::as_str) {
        Some(id) => format!("{kind}[{i}] (\"{id}\")"),
        None => format!("{kind}[{i}]"),
    }
}

fn parse_edge(i: usize, v: &Value) -> Result<Edge> {
    let obj = as_object(v, &format!("edges[{i}]"))?;
    let at = label("edges", i, obj);
    let id = as_str(field(obj, "id", &at)?, &format!("{at}.id"))?.to_string();
    let kind = match as_str(field(obj, "kind", &at)?, &format!("{at}.kind"))? {
        "single" => EdgeKind::Single,
        "double" => EdgeKind::Double,
        other => return Err(schema(format!("{at}.kind"), format!("unknown kind \"{other}\""))),
    };
    let alphabet = as_usize(field(obj, "alphabet", &at)?, &format!("{at}.alphabet"))?;
    let ends_path = format!("{at}.ends");
    let ends = as_array(field(obj, "ends", &at)?, &ends_path)?;
    if ends.len() != 2 {
        return Err(schema(ends_path, format!("expected 2 endpoints, got {}", ends.len())));
    }
    let a = as_str(&ends[0], &format!("{ends_path}[0]"))?;
    let b = as_str(&ends[1], &format!("{ends_path}[1]"))?;
    Ok(Edge::new(id, kind, alphabet, a, b))
}

fn parse_factor(i: usize, v: &Value) -> Result<Factor> {
    let obj = as_object(v, &format!("factors[{i}]"))?;
    let at = label("factors", i, obj);
    let id = as_str(field(obj, "id", &at)?, &format!("{at}.id"))?.to_string();
    let ports_path = format!("{at}.ports");
    let ports = as_array(field(obj, "ports", &at)?, &ports_path)?
        .iter()
        .enumerate()
        .map(|(k, p)| as_str(p, &format!("{ports_path}[{k}]")).map(str::to_string))
        .collect::<Result<Vec<_>>>()?;
    let shape_path = format!("{at}.shape");
    let shape = as_array(field(obj, "shape", &at)?, &shape_path)?
        .iter()
        .enumerate()
        .map(|(k, s)| as_usize(s, &format!("{shape_path}[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    let values_path = format!("{at}.values");
    let values = as_array(field(obj, "values", &at)?, &values_path)?;
    let expected: usize = shape.iter().product();
    if values.len() != expected {
        return Err(schema(
            values_path,
            format!("shape {shape:?} needs {expected} values, got {}", values.len()),
        ));
    }
    let mut data = Vec::with_capacity(values.len());
    for (k, z) in values.iter().enumerate() {
        let p = format!("{values_path}[{k}]");
        let pair = as_array(z, &p)?;
        let (Some(re), Some(im), 2) = (pair.first().and_then(Value::as_f64), pair.get(1).and_then(Value::as_f64), pair.len()) else {
            return Err(schema(p, "expected [re, im]"));
        };
        data.push(C64::new(re, im));
    }
    let data = ComplexTensor::new(shape, data).map_err(|e| schema(&at, e.to_string()))?;
    Ok(Factor::new(id, ports, data))
}

/// Parses a graph document without structural validation.
pub fn parse_graph(text: &str) -> Result<DeNfg> {
    let doc: Value = serde_json::from_str(text)?;
    let root = as_object(&doc, "$")?;
    let edges = as_array(field(root, "edges", "$")?, "edges")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_edge(i, v))
        .collect::<Result<Vec<_>>>()?;
    let factors = as_array(field(root, "factors", "$")?, "factors")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_factor(i, v))
        .collect::<Result<Vec<_>>>()?;
    DeNfg::new(edges, factors)
}

/// Parses a graph document and rejects it if it is not structurally valid.
pub fn load_graph(text: &str) -> Result<DeNfg> {
    let g = parse_graph(text)?;
    let violations = validate_structure(&g);
    if !violations.is_empty() {
        return Err(Error::Structure(violations));
    }
    Ok(g)
}

pub fn save_graph(g: &DeNfg) -> String {
    let edges: Vec<Value> = g
        .edges()
        .iter()
        .map(|e| json!({ "id": e.id, "kind": e.kind, "alphabet": e.alphabet, "ends": e.ends }))
        .collect();
    let factors: Vec<Value> = g
        .factors()
        .iter()
        .map(|f| {
            let values: Vec<Value> = f.data.data().iter().map(|z| json!([z.re, z.im])).collect();
            json!({ "id": f.id, "ports": f.ports, "shape": f.data.shape(), "values": values })
        })
        .collect();
    let mut text = serde_json::to_string(&json!({ "edges": edges, "factors": factors }))
        .expect("graph documents contain only finite numbers");
    text.push('\n');
    text
}
