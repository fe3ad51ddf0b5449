//! JSON problem specs.
//!
//! ```json
//! { "params": {"N": 1, "alpha": 0.75}, "grid": {"n": 256},
//!   "g": {"c": 0.05, "p": 1.5, "eps": 0.1, "f": "const:1"},
//!   "sigma": 1.0, "rho": 0.5,
//!   "nu": {"atoms": [[0.0, 1.0]]}, "mu": {"atoms": [[2.0, 1.0]], "separation": 0.01},
//!   "eta": {"atoms": [[1.0, 1.0]]},
//!   "solver": {"tol": 1e-8, "max_iter": 100, "theta": 1.0} }
//! ```
//!
//! Nodal data (`g.f`, `nu.density`) is `"const:<v>"`, `"file:<path>"` (one
//! value per line, relative to the spec's directory) or an array. Unknown
//! keys are rejected; every error names a JSON pointer.

use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::model::{
    validate_problem, Atom, FracParams, Grid, GrowthSpec, ProblemSpec, RadonMeasure, SolverConfig, Support,
    ValidatedProblem, DEFAULT_SEPARATION,
};

fn schema(pointer: &str, message: impl Into<String>) -> Error {
    Error::Schema { pointer: if pointer.is_empty() { "/".into() } else { pointer.into() }, message: message.into() }
}

fn object<'a>(v: &'a Value, ptr: &str, allowed: &[&str]) -> Result<&'a Map<String, Value>> {
    let map = v.as_object().ok_or_else(|| schema(ptr, "expected an object"))?;
    if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(schema(&format!("{ptr}/{k}"), format!("unknown key (allowed: {})", allowed.join(", "))));
    }
    Ok(map)
}

fn required<'a>(map: &'a Map<String, Value>, key: &str, ptr: &str) -> Result<&'a Value> {
    map.get(key).ok_or_else(|| schema(&format!("{ptr}/{key}"), "missing required key"))
}

fn number(v: &Value, ptr: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| schema(ptr, "expected a number"))
}

fn number_or(map: &Map<String, Value>, key: &str, ptr: &str, default: f64) -> Result<f64> {
    map.get(key).map_or(Ok(default), |v| number(v, &format!("{ptr}/{key}")))
}

fn integer(v: &Value, ptr: &str) -> Result<usize> {
    v.as_u64().map(|n| n as usize).ok_or_else(|| schema(ptr, "expected a nonnegative integer"))
}

fn nodal(v: &Value, ptr: &str, n: usize, base: Option<&Path>) -> Result<Vec<f64>> {
    if let Some(arr) = v.as_array() {
        if arr.len() != n {
            return Err(schema(ptr, format!("expected {n} values, found {}", arr.len())));
        }
        return arr.iter().enumerate().map(|(i, x)| number(x, &format!("{ptr}/{i}"))).collect();
    }
    let s = v.as_str().ok_or_else(|| schema(ptr, "expected \"const:<v>\", \"file:<path>\" or an array"))?;
    if let Some(c) = s.strip_prefix("const:") {
        let c: f64 = c.trim().parse().map_err(|_| schema(ptr, format!("bad constant `{c}`")))?;
        return Ok(vec![c; n]);
    }
    if let Some(p) = s.strip_prefix("file:") {
        let path = base.map_or_else(|| Path::new(p).to_path_buf(), |b| b.join(p));
        let text = std::fs::read_to_string(&path).map_err(|e| schema(ptr, format!("cannot read {}: {e}", path.display())))?;
        let vals: Vec<f64> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse().map_err(|_| schema(ptr, format!("bad value `{l}` in {}", path.display()))))
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(schema(ptr, format!("{} holds {} values, grid has {n} nodes", path.display(), vals.len())));
        }
        return Ok(vals);
    }
    Err(schema(ptr, format!("unrecognized nodal data `{s}`")))
}

fn measure(v: Option<&Value>, ptr: &str, support: Support, dim: usize, n: usize, base: Option<&Path>) -> Result<RadonMeasure> {
    let Some(v) = v else {
        return Ok(RadonMeasure::zero(support));
    };
    let map = object(v, ptr, &["atoms", "density", "separation"])?;
    let mut m = RadonMeasure::zero(support);
    if let Some(atoms) = map.get("atoms") {
        let aptr = format!("{ptr}/atoms");
        let list = atoms.as_array().ok_or_else(|| schema(&aptr, "expected an array of [x..., mass]"))?;
        for (i, a) in list.iter().enumerate() {
            let ip = format!("{aptr}/{i}");
            let comps = a.as_array().ok_or_else(|| schema(&ip, "expected [x..., mass]"))?;
            if comps.len() != dim + 1 {
                return Err(schema(&ip, format!("expected {} coordinates and a mass", dim)));
            }
            let point = number(&comps[0], &format!("{ip}/0"))?;
            let mass = number(&comps[dim], &format!("{ip}/{dim}"))?;
            m.atoms.push(Atom { point, mass });
        }
    }
    if let Some(d) = map.get("density") {
        m.density = Some(nodal(d, &format!("{ptr}/density"), n, base)?);
    }
    m.separation = number_or(map, "separation", ptr, DEFAULT_SEPARATION)?;
    Ok(m)
}

/// Parse and validate a spec document. `base` resolves `file:` paths.
pub fn parse_spec(text: &str, base: Option<&Path>) -> Result<ValidatedProblem> {
    let doc: Value = serde_json::from_str(text).map_err(|e| schema("", format!("invalid JSON: {e}")))?;
    spec_from_value(&doc, base)
}

/// As [`parse_spec`], after applying `key=value` overrides (dotted keys,
/// JSON values; bare words are taken as strings).
pub fn parse_spec_with_overrides(text: &str, base: Option<&Path>, overrides: &[(String, String)]) -> Result<ValidatedProblem> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| schema("", format!("invalid JSON: {e}")))?;
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    spec_from_value(&doc, base)
}

pub fn apply_override(doc: &mut Value, key: &str, value: &str) -> Result<()> {
    let ptr = format!("/{}", key.replace('.', "/"));
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(schema(&ptr, "empty override key"));
    }
    let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let map = cur.as_object_mut().ok_or_else(|| schema(&ptr, "override path crosses a non-object"))?;
        cur = map.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let map = cur.as_object_mut().ok_or_else(|| schema(&ptr, "override path crosses a non-object"))?;
    map.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

pub fn spec_from_value(doc: &Value, base: Option<&Path>) -> Result<ValidatedProblem> {
    let root = object(doc, "", &["params", "grid", "g", "sigma", "rho", "nu", "mu", "eta", "solver"])?;

    let pv = required(root, "params", "")?;
    let pmap = object(pv, "/params", &["N", "alpha"])?;
    let dim = integer(required(pmap, "N", "/params")?, "/params/N")?;
    let alpha = number(required(pmap, "alpha", "/params")?, "/params/alpha")?;
    let params = FracParams::new(dim, alpha)?;

    let gv = required(root, "grid", "")?;
    let gmap = object(gv, "/grid", &["n"])?;
    let n = integer(required(gmap, "n", "/grid")?, "/grid/n")?;
    let grid = Grid::new(dim, n).map(std::sync::Arc::new)?;

    let growth = required(root, "g", "")?;
    let g = object(growth, "/g", &["c", "p", "eps", "f"])?;
    let f = match g.get("f") {
        Some(v) => nodal(v, "/g/f", n, base)?,
        None => vec![0.0; n],
    };
    let g = GrowthSpec {
        c: number_or(g, "c", "/g", 0.0)?,
        p: number(required(g, "p", "/g")?, "/g/p")?,
        eps: number_or(g, "eps", "/g", 0.0)?,
        f,
    };

    let solver = match root.get("solver") {
        None => SolverConfig::default(),
        Some(v) => {
            let s = object(v, "/solver", &["tol", "max_iter", "theta"])?;
            let d = SolverConfig::default();
            SolverConfig {
                tol: number_or(s, "tol", "/solver", d.tol)?,
                max_iter: s.get("max_iter").map_or(Ok(d.max_iter), |v| integer(v, "/solver/max_iter"))?,
                theta: number_or(s, "theta", "/solver", d.theta)?,
            }
        }
    };

    let spec = ProblemSpec {
        params,
        grid,
        g,
        sigma: number_or(root, "sigma", "", 0.0)?,
        rho: number_or(root, "rho", "", 0.0)?,
        nu: measure(root.get("nu"), "/nu", Support::Interior, dim, n, base)?,
        mu: measure(root.get("mu"), "/mu", Support::Exterior, dim, n, base)?,
        eta: root.get("eta").map(|v| measure(Some(v), "/eta", Support::Boundary, dim, n, base)).transpose()?,
        solver,
    };
    validate_problem(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = r#"{
        "params": {"N": 1, "alpha": 0.75}, "grid": {"n": 64},
        "g": {"c": 0.05, "p": 1.5, "eps": 0.1, "f": "const:1"},
        "sigma": 1.0, "rho": 0.5,
        "nu": {"atoms": [[0.0, 1.0]]}, "mu": {"atoms": [[2.0, 1.0]]},
        "solver": {"tol": 1e-8, "max_iter": 100, "theta": 1.0}
    }"#;

    #[test]
    fn parses_the_desk_problem() {
        let p = parse_spec(DESK, None).unwrap();
        assert_eq!(p.grid.n, 64);
        assert_eq!(p.g.f, vec![1.0; 64]);
        assert_eq!(p.mu.atoms[0], Atom { point: 2.0, mass: 1.0 });
        assert!(p.eta.is_none());
        assert!((p.p_star - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_carry_a_pointer() {
        let text = DESK.replace("\"tol\"", "\"tolerance\"");
        match parse_spec(&text, None) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/solver/tolerance"),
            other => panic!("{other:?}"),
        }
        let text = DESK.replace("[[0.0, 1.0]]", "[[0.0, \"x\"]]");
        assert!(matches!(parse_spec(&text, None), Err(Error::Schema { pointer, .. }) if pointer == "/nu/atoms/0/1"));
    }

    #[test]
    fn critical_p_is_a_validation_error() {
        let ov = [("g.p".to_string(), "2.0".to_string())];
        assert!(matches!(parse_spec_with_overrides(DESK, None, &ov), Err(Error::Supercritical { .. })));
    }

    #[test]
    fn overrides_apply_before_validation() {
        let ov = [("grid.n".to_string(), "32".to_string()), ("g.f".to_string(), "const:2".to_string())];
        let p = parse_spec_with_overrides(DESK, None, &ov).unwrap();
        assert_eq!(p.grid.n, 32);
        assert_eq!(p.g.f, vec![2.0; 32]);
    }

    #[test]
    fn missing_and_mistyped_fields() {
        assert!(matches!(parse_spec("{}", None), Err(Error::Schema { pointer, .. }) if pointer == "/params"));
        assert!(matches!(parse_spec("[1]", None), Err(Error::Schema { .. })));
        assert!(matches!(parse_spec("not json", None), Err(Error::Schema { .. })));
        let text = DESK.replace("\"n\": 64", "\"n\": -3");
        assert!(matches!(parse_spec(&text, None), Err(Error::Schema { pointer, .. }) if pointer == "/grid/n"));
    }
}
