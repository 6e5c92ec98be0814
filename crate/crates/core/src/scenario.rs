//! Scenario files: versioned JSON documents carrying the full problem datum,
//! with expressions as source strings. Validation reports schema errors with
//! JSON-pointer paths and enforces dimension consistency and per-role
//! variable bindings before any numerics run.

use crate::dynamics::{ImpulsiveControl, PiecewiseControl};
use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::measure::{Cone, VectorMeasure};
use crate::problem::{ControlSet, Gradients, ProblemSpec};
use crate::target::{InitialSet, TargetSet};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::Path;

const SCHEMA_VERSION: u64 = 1;

fn field<'v>(v: &'v Value, key: &str, pointer: &str) -> Result<&'v Value> {
    v.get(key).ok_or_else(|| Error::schema(format!("{pointer}/{key}"), "missing field"))
}

fn as_u64(v: &Value, pointer: &str) -> Result<u64> {
    v.as_u64().ok_or_else(|| Error::schema(pointer, "expected a nonnegative integer"))
}

fn as_f64(v: &Value, pointer: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::schema(pointer, "expected a number"))
}

fn as_array<'v>(v: &'v Value, pointer: &str) -> Result<&'v Vec<Value>> {
    v.as_array().ok_or_else(|| Error::schema(pointer, "expected an array"))
}

fn as_str<'v>(v: &'v Value, pointer: &str) -> Result<&'v str> {
    v.as_str().ok_or_else(|| Error::schema(pointer, "expected an expression string"))
}

fn parse_expr(v: &Value, pointer: &str) -> Result<Expression> {
    let text = as_str(v, pointer)?;
    Expression::parse(text).map_err(|e| Error::schema(pointer, e.to_string()))
}

fn parse_expr_vec(v: &Value, pointer: &str, len: usize, what: &str) -> Result<Vec<Expression>> {
    let arr = as_array(v, pointer)?;
    if arr.len() != len {
        return Err(Error::schema(pointer, format!("{what} must have {len} entries, found {}", arr.len())));
    }
    arr.iter()
        .enumerate()
        .map(|(i, e)| parse_expr(e, &format!("{pointer}/{i}")))
        .collect()
}

/// Allowed variable bindings per expression role.
struct Role {
    max_slot: Option<usize>,
    state_dim: usize,
    control_dim: usize,
    time: bool,
}

fn check_role(expr: &Expression, role: &Role, pointer: &str) -> Result<()> {
    let u = expr.usage();
    if u.time && !role.time {
        return Err(Error::schema(pointer, "t is not available in this expression"));
    }
    match (u.max_state_slot, role.max_slot) {
        (Some(s), Some(max)) if s > max => {
            return Err(Error::schema(pointer, format!("state slot x{s} exceeds the allowed x0..x{max}")));
        }
        (Some(s), None) => {
            return Err(Error::schema(pointer, format!("state variable x{s} is not available here")));
        }
        _ => {}
    }
    if let Some(i) = u.max_state_index {
        if i >= role.state_dim {
            return Err(Error::schema(pointer, format!("state component index {i} exceeds dimension {}", role.state_dim)));
        }
    }
    if let Some(i) = u.max_control_index {
        if role.control_dim == 0 || i >= role.control_dim {
            return Err(Error::schema(pointer, format!("control index a[{i}] exceeds q = {}", role.control_dim)));
        }
    }
    if u.max_direction_index.is_some() {
        return Err(Error::schema(pointer, "the direction variable w is not available in scenario expressions"));
    }
    Ok(())
}

/// Build a validated problem specification from a parsed JSON document.
pub fn scenario_from_value(doc: &Value) -> Result<ProblemSpec> {
    if !doc.is_object() {
        return Err(Error::schema("/", "scenario must be a JSON object"));
    }
    let version = as_u64(field(doc, "version", "")?, "/version")?;
    if version != SCHEMA_VERSION {
        return Err(Error::schema("/version", format!("unsupported schema version {version}")));
    }
    let n = as_u64(field(doc, "n", "")?, "/n")? as usize;
    let m = as_u64(field(doc, "m", "")?, "/m")? as usize;
    let q = as_u64(field(doc, "q", "")?, "/q")? as usize;
    if n == 0 || m == 0 {
        return Err(Error::schema("/n", "state and measure dimensions must be positive"));
    }
    let horizon = as_f64(field(doc, "T", "")?, "/T")?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::schema("/T", "horizon must be positive and finite"));
    }

    let delays_v = as_array(field(doc, "delays", "")?, "/delays")?;
    if delays_v.is_empty() {
        return Err(Error::schema("/delays", "delays must contain at least h_0 = 0"));
    }
    let mut delays = Vec::with_capacity(delays_v.len());
    for (i, d) in delays_v.iter().enumerate() {
        delays.push(as_f64(d, &format!("/delays/{i}"))?);
    }
    if delays[0] != 0.0 {
        return Err(Error::schema("/delays/0", "the first delay must be exactly 0"));
    }
    if delays.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::schema("/delays", "delays must be strictly increasing"));
    }
    let n_delays = delays.len() - 1;

    let drift_role = Role { max_slot: Some(n_delays), state_dim: n, control_dim: q, time: true };
    let fast_role = Role { max_slot: None, state_dim: n, control_dim: q, time: true };
    let time_role = Role { max_slot: None, state_dim: n, control_dim: 0, time: true };
    let phi_role = Role { max_slot: Some(1), state_dim: n, control_dim: 0, time: false };
    let psi_role = Role { max_slot: Some(0), state_dim: n, control_dim: 0, time: false };

    let drift = parse_expr_vec(field(doc, "f", "")?, "/f", n, "f")?;
    for (i, e) in drift.iter().enumerate() {
        check_role(e, &drift_role, &format!("/f/{i}"))?;
    }

    let g_rows = as_array(field(doc, "G", "")?, "/G")?;
    if g_rows.len() != n {
        return Err(Error::schema("/G", format!("G must have n = {n} rows, found {}", g_rows.len())));
    }
    let mut fast = Vec::with_capacity(n);
    for (i, row) in g_rows.iter().enumerate() {
        let cols = parse_expr_vec(row, &format!("/G/{i}"), m, "each row of G")?;
        for (j, e) in cols.iter().enumerate() {
            check_role(e, &fast_role, &format!("/G/{i}/{j}"))?;
        }
        fast.push(cols);
    }

    let running_cost = parse_expr(field(doc, "l0", "")?, "/l0")?;
    check_role(&running_cost, &drift_role, "/l0")?;
    let impulse_cost = parse_expr_vec(field(doc, "l1", "")?, "/l1", m, "l1")?;
    for (i, e) in impulse_cost.iter().enumerate() {
        check_role(e, &fast_role, &format!("/l1/{i}"))?;
    }
    let endpoint_cost = parse_expr(field(doc, "Phi", "")?, "/Phi")?;
    check_role(&endpoint_cost, &phi_role, "/Phi")?;
    let history = parse_expr_vec(field(doc, "zeta", "")?, "/zeta", n, "zeta")?;
    for (i, e) in history.iter().enumerate() {
        check_role(e, &time_role, &format!("/zeta/{i}"))?;
    }

    let boundary_map = match doc.get("Psi") {
        None => None,
        Some(v) => {
            let arr = as_array(v, "/Psi")?;
            let mut out = Vec::with_capacity(arr.len());
            for (i, e) in arr.iter().enumerate() {
                let expr = parse_expr(e, &format!("/Psi/{i}"))?;
                check_role(&expr, &psi_role, &format!("/Psi/{i}"))?;
                out.push(expr);
            }
            Some(out)
        }
    };

    let cone: Cone = serde_json::from_value(field(doc, "cone", "")?.clone())
        .map_err(|e| Error::schema("/cone", e.to_string()))?;
    cone.validate(m).map_err(|e| Error::schema("/cone", e.to_string()))?;

    let a_v = field(doc, "A", "")?;
    let kind = as_str(field(a_v, "kind", "/A")?, "/A/kind")?;
    let control_set = match kind {
        "box" => {
            let lo = parse_expr_vec(field(a_v, "lo", "/A")?, "/A/lo", q, "A.lo")?;
            let hi = parse_expr_vec(field(a_v, "hi", "/A")?, "/A/hi", q, "A.hi")?;
            for (i, e) in lo.iter().chain(&hi).enumerate() {
                check_role(e, &time_role, &format!("/A (entry {i})"))?;
            }
            ControlSet::Box { lo, hi }
        }
        "list" => {
            let pts = as_array(field(a_v, "points", "/A")?, "/A/points")?;
            if pts.is_empty() {
                return Err(Error::schema("/A/points", "finite control list must be nonempty"));
            }
            let mut points = Vec::with_capacity(pts.len());
            for (i, p) in pts.iter().enumerate() {
                let row = as_array(p, &format!("/A/points/{i}"))?;
                if row.len() != q {
                    return Err(Error::schema(format!("/A/points/{i}"), format!("control points must have q = {q} entries")));
                }
                points.push(row.iter().enumerate().map(|(j, x)| as_f64(x, &format!("/A/points/{i}/{j}"))).collect::<Result<Vec<f64>>>()?);
            }
            ControlSet::List { points }
        }
        other => return Err(Error::schema("/A/kind", format!("unknown control-set kind `{other}`"))),
    };

    let target: TargetSet = serde_json::from_value(field(doc, "target", "")?.clone())
        .map_err(|e| Error::schema("/target", e.to_string()))?;
    target.validate(n).map_err(|e| Error::schema("/target", e.to_string()))?;

    let initial_set = match doc.get("C") {
        None => None,
        Some(v) => {
            let set: InitialSet =
                serde_json::from_value(v.clone()).map_err(|e| Error::schema("/C", e.to_string()))?;
            set.validate(n).map_err(|e| Error::schema("/C", e.to_string()))?;
            Some(set)
        }
    };

    let gradients = match doc.get("gradients") {
        None => None,
        Some(g) => {
            let df = match g.get("df_dxk") {
                None => None,
                Some(v) => {
                    let slots = as_array(v, "/gradients/df_dxk")?;
                    if slots.len() != n_delays + 1 {
                        return Err(Error::schema("/gradients/df_dxk", format!("expected {} delay slots", n_delays + 1)));
                    }
                    let mut out = Vec::with_capacity(slots.len());
                    for (k, slot) in slots.iter().enumerate() {
                        let rows = as_array(slot, &format!("/gradients/df_dxk/{k}"))?;
                        if rows.len() != n {
                            return Err(Error::schema(format!("/gradients/df_dxk/{k}"), format!("expected {n} rows")));
                        }
                        let mut mat = Vec::with_capacity(n);
                        for (i, row) in rows.iter().enumerate() {
                            let p = format!("/gradients/df_dxk/{k}/{i}");
                            let exprs = parse_expr_vec(row, &p, n, "gradient rows")?;
                            for e in &exprs {
                                check_role(e, &drift_role, &p)?;
                            }
                            mat.push(exprs);
                        }
                        out.push(mat);
                    }
                    Some(out)
                }
            };
            let dl0 = match g.get("dl0_dxk") {
                None => None,
                Some(v) => {
                    let slots = as_array(v, "/gradients/dl0_dxk")?;
                    if slots.len() != n_delays + 1 {
                        return Err(Error::schema("/gradients/dl0_dxk", format!("expected {} delay slots", n_delays + 1)));
                    }
                    let mut out = Vec::with_capacity(slots.len());
                    for (k, slot) in slots.iter().enumerate() {
                        let p = format!("/gradients/dl0_dxk/{k}");
                        let exprs = parse_expr_vec(slot, &p, n, "gradient rows")?;
                        for e in &exprs {
                            check_role(e, &drift_role, &p)?;
                        }
                        out.push(exprs);
                    }
                    Some(out)
                }
            };
            let dphi = match g.get("dPhi") {
                None => None,
                Some(v) => {
                    let exprs = parse_expr_vec(v, "/gradients/dPhi", 2 * n, "dPhi")?;
                    for e in &exprs {
                        check_role(e, &phi_role, "/gradients/dPhi")?;
                    }
                    Some(exprs)
                }
            };
            let dpsi = match g.get("dPsi") {
                None => None,
                Some(v) => {
                    let rows = as_array(v, "/gradients/dPsi")?;
                    let mut out = Vec::with_capacity(rows.len());
                    for (r, row) in rows.iter().enumerate() {
                        let p = format!("/gradients/dPsi/{r}");
                        let exprs = parse_expr_vec(row, &p, n, "dPsi rows")?;
                        for e in &exprs {
                            check_role(e, &psi_role, &p)?;
                        }
                        out.push(exprs);
                    }
                    Some(out)
                }
            };
            Some(Gradients { df, dl0, dphi, dpsi })
        }
    };

    let growth = match doc.get("growth") {
        None => None,
        Some(v) => {
            let e = parse_expr(v, "/growth")?;
            check_role(&e, &time_role, "/growth")?;
            Some(e)
        }
    };
    let lipschitz = match doc.get("lipschitz") {
        None => None,
        Some(v) => {
            let e = parse_expr(v, "/lipschitz")?;
            check_role(&e, &time_role, "/lipschitz")?;
            Some(e)
        }
    };

    let spec = ProblemSpec {
        n,
        m,
        q,
        horizon,
        delays,
        drift,
        fast,
        running_cost,
        impulse_cost,
        endpoint_cost,
        boundary_map,
        history,
        cone,
        control_set,
        target,
        initial_set,
        gradients,
        growth,
        lipschitz,
    };
    probe_finite(&spec)?;
    Ok(spec)
}

/// Evaluate every expression at a handful of probe points so malformed data
/// fails at load time rather than mid-run.
fn probe_finite(spec: &ProblemSpec) -> Result<()> {
    let wrap = |field: &str, e: Error| Error::schema(format!("/{field}"), e.to_string());
    let probe_states = vec![vec![0.37; spec.n]; spec.delay_count() + 1];
    let refs: Vec<&[f64]> = probe_states.iter().map(|s| s.as_slice()).collect();
    for &t in &[1e-3 * spec.horizon, 0.5 * spec.horizon, 0.999 * spec.horizon] {
        let a = match &spec.control_set {
            ControlSet::List { points } => points[0].clone(),
            ControlSet::Box { .. } => {
                let (lo, hi) = spec.control_set.bounds_at(t).map_err(|e| wrap("A", e))?;
                lo.iter().zip(&hi).map(|(&l, &h)| 0.5 * (l + h)).collect()
            }
        };
        spec.eval_drift(t, &refs, &a).map_err(|e| wrap("f", e))?;
        spec.eval_fast(t, &a).map_err(|e| wrap("G", e))?;
        spec.eval_l0(t, &refs, &a).map_err(|e| wrap("l0", e))?;
        spec.eval_l1(t, &a).map_err(|e| wrap("l1", e))?;
    }
    if spec.max_delay() > 0.0 {
        spec.eval_history(-0.5 * spec.max_delay()).map_err(|e| wrap("zeta", e))?;
    }
    let x = vec![0.37; spec.n];
    spec.eval_phi(&x, &x).map_err(|e| wrap("Phi", e))?;
    if spec.boundary_map.is_some() {
        spec.eval_psi(&x).map_err(|e| wrap("Psi", e))?;
    }
    Ok(())
}

pub fn load_scenario(path: &Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| Error::schema("/", format!("invalid JSON: {e}")))?;
    scenario_from_value(&doc)
}

/// Canonical re-serialization of a loaded scenario. Expressions keep their
/// source text verbatim, keys are emitted sorted, so a second round trip is
/// the identity.
pub fn canonical_value(spec: &ProblemSpec) -> Value {
    let exprs = |es: &[Expression]| -> Value { Value::from(es.iter().map(|e| e.source().to_string()).collect::<Vec<_>>()) };
    let mut doc = json!({
        "version": SCHEMA_VERSION,
        "n": spec.n,
        "m": spec.m,
        "q": spec.q,
        "T": spec.horizon,
        "delays": spec.delays,
        "f": exprs(&spec.drift),
        "G": spec.fast.iter().map(|row| exprs(row)).collect::<Vec<_>>(),
        "l0": spec.running_cost.source(),
        "l1": exprs(&spec.impulse_cost),
        "Phi": spec.endpoint_cost.source(),
        "zeta": exprs(&spec.history),
        "cone": serde_json::to_value(&spec.cone).unwrap(),
        "A": match &spec.control_set {
            ControlSet::Box { lo, hi } => json!({"kind": "box", "lo": exprs(lo), "hi": exprs(hi)}),
            ControlSet::List { points } => json!({"kind": "list", "points": points}),
        },
        "target": serde_json::to_value(&spec.target).unwrap(),
    });
    let obj = doc.as_object_mut().unwrap();
    if let Some(psi) = &spec.boundary_map {
        obj.insert("Psi".into(), exprs(psi));
    }
    if let Some(c) = &spec.initial_set {
        obj.insert("C".into(), serde_json::to_value(c).unwrap());
    }
    if let Some(g) = &spec.gradients {
        let mut gv = serde_json::Map::new();
        if let Some(df) = &g.df {
            gv.insert(
                "df_dxk".into(),
                Value::from(df.iter().map(|mat| mat.iter().map(|row| exprs(row)).collect::<Vec<_>>()).collect::<Vec<_>>()),
            );
        }
        if let Some(dl0) = &g.dl0 {
            gv.insert("dl0_dxk".into(), Value::from(dl0.iter().map(|row| exprs(row)).collect::<Vec<_>>()));
        }
        if let Some(dphi) = &g.dphi {
            gv.insert("dPhi".into(), exprs(dphi));
        }
        if let Some(dpsi) = &g.dpsi {
            gv.insert("dPsi".into(), Value::from(dpsi.iter().map(|row| exprs(row)).collect::<Vec<_>>()));
        }
        obj.insert("gradients".into(), Value::Object(gv));
    }
    if let Some(c) = &spec.growth {
        obj.insert("growth".into(), Value::from(c.source()));
    }
    if let Some(l) = &spec.lipschitz {
        obj.insert("lipschitz".into(), Value::from(l.source()));
    }
    doc
}

// ---------------------------------------------------------------------------
// Process and auxiliary-control files

#[derive(Debug, Serialize, Deserialize)]
pub struct ProcessFile {
    pub xi: Vec<f64>,
    pub mu: VectorMeasure,
    pub alpha: PiecewiseControl,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AuxFile {
    pub xi: Vec<f64>,
    pub nu: VectorMeasure,
    pub alpha: PiecewiseControl,
    pub omega: PiecewiseControl,
}

pub fn load_process(path: &Path, spec: &ProblemSpec) -> Result<(ImpulsiveControl, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut file: ProcessFile =
        serde_json::from_str(&text).map_err(|e| Error::schema("/", format!("invalid process file: {e}")))?;
    if file.xi.len() != spec.n {
        return Err(Error::schema("/xi", format!("expected n = {} entries", spec.n)));
    }
    file.alpha.horizon = spec.horizon;
    let mu = VectorMeasure::new(
        file.mu.m,
        file.mu.horizon,
        file.mu.atoms,
        file.mu.density,
        Some(spec.cone.clone()),
    )?;
    let control = ImpulsiveControl { mu, alpha: file.alpha };
    control.validate_against(spec)?;
    Ok((control, file.xi))
}

pub fn save_process(path: &Path, control: &ImpulsiveControl, xi: &[f64]) -> Result<()> {
    let mut mu = control.mu.clone();
    mu.cone = None;
    let file = ProcessFile { xi: xi.to_vec(), mu, alpha: control.alpha.clone() };
    std::fs::write(path, format!("{}\n", serde_json::to_string_pretty(&file)?))?;
    Ok(())
}

pub fn load_aux(path: &Path, spec: &ProblemSpec) -> Result<(crate::auxiliary::AuxiliaryControl, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut file: AuxFile =
        serde_json::from_str(&text).map_err(|e| Error::schema("/", format!("invalid auxiliary file: {e}")))?;
    if file.xi.len() != spec.n {
        return Err(Error::schema("/xi", format!("expected n = {} entries", spec.n)));
    }
    file.alpha.horizon = spec.horizon;
    file.omega.horizon = spec.horizon;
    let nu = VectorMeasure::new(1, file.nu.horizon, file.nu.atoms, file.nu.density, None)?;
    Ok((crate::auxiliary::AuxiliaryControl { nu, alpha: file.alpha, omega: file.omega }, file.xi))
}

pub fn save_aux(path: &Path, aux: &crate::auxiliary::AuxiliaryControl, xi: &[f64]) -> Result<()> {
    let file = AuxFile {
        xi: xi.to_vec(),
        nu: aux.nu.clone(),
        alpha: aux.alpha.clone(),
        omega: aux.omega.clone(),
    };
    std::fs::write(path, format!("{}\n", serde_json::to_string_pretty(&file)?))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Hypothesis probing

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub samples: usize,
    pub lipschitz_estimate: f64,
    pub growth_ratio_small: f64,
    pub growth_ratio_large: f64,
    pub growth_flag: bool,
    pub hausdorff_max: f64,
    pub warnings: Vec<String>,
}

/// Sampled surrogates for the standing hypotheses: a Lipschitz constant for
/// the drift in the delayed states, a sublinear growth ratio, and the
/// Hausdorff continuity of the compactified fast dynamics along the grid.
pub fn probe_hypotheses(spec: &ProblemSpec, samples: usize, seed: u64) -> Result<ProbeReport> {
    use rand::{Rng, SeedableRng};
    if samples < 100 {
        return Err(Error::config("hypothesis probing needs at least 100 samples"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim = spec.n * (spec.delay_count() + 1);
    let mut warnings = Vec::new();

    // Lipschitz estimate: random pairs plus coordinate-aligned pairs
    let mut lip: f64 = 0.0;
    let mut failures = 0usize;
    for s in 0..samples {
        let t = spec.horizon * (s as f64 + 0.5) / samples as f64;
        let z: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut y = z.clone();
        if s % 2 == 0 {
            let j = rng.gen_range(0..dim);
            y[j] += rng.gen_range(0.05..0.5);
        } else {
            for v in &mut y {
                *v += rng.gen_range(-0.25..0.25);
            }
        }
        let dist: f64 = z.iter().zip(&y).map(|(&a, &b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        let zs: Vec<&[f64]> = (0..=spec.delay_count()).map(|k| &z[k * spec.n..(k + 1) * spec.n]).collect();
        let ys: Vec<&[f64]> = (0..=spec.delay_count()).map(|k| &y[k * spec.n..(k + 1) * spec.n]).collect();
        for a in spec.control_set.sample(t, 3)? {
            match (spec.eval_drift(t, &zs, &a), spec.eval_drift(t, &ys, &a)) {
                (Ok(fz), Ok(fy)) => {
                    let df: f64 = fz.iter().zip(&fy).map(|(&p, &q)| (p - q).powi(2)).sum::<f64>().sqrt();
                    lip = lip.max(df / dist);
                }
                _ => failures += 1,
            }
        }
    }
    if failures > 0 {
        warnings.push(format!("{failures} drift evaluations failed during probing"));
    }

    // growth ratios at increasing radii
    let mut ratios = Vec::new();
    for &radius in &[1.0f64, 100.0] {
        let mut worst: f64 = 0.0;
        for s in 0..samples {
            let t = spec.horizon * (s as f64 + 0.5) / samples as f64;
            let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nrm: f64 = raw.iter().map(|&c| c * c).sum::<f64>().sqrt();
            let z: Vec<f64> = raw.iter().map(|v| v * radius / nrm.max(1e-9)).collect();
            let zs: Vec<&[f64]> = (0..=spec.delay_count()).map(|k| &z[k * spec.n..(k + 1) * spec.n]).collect();
            for a in spec.control_set.sample(t, 3)? {
                if let Ok(f) = spec.eval_drift(t, &zs, &a) {
                    let nf: f64 = f.iter().map(|&c| c * c).sum::<f64>().sqrt();
                    worst = worst.max(nf / (1.0 + radius));
                }
            }
        }
        ratios.push(worst);
    }
    let growth_flag = ratios[1] > 2.0 * ratios[0] + 1e-9;
    if growth_flag {
        warnings.push("growth ratio increases with the state radius; sublinear growth looks violated".into());
    }

    // Hausdorff continuity of t -> g_frak(t, A(t), tilde K) on a time grid
    let w_samples = tilde_cone_samples(&spec.cone, spec.m);
    let grid = 33usize;
    let mut clouds: Vec<Vec<Vec<f64>>> = Vec::with_capacity(grid);
    for i in 0..grid {
        let t = spec.horizon * i as f64 / (grid - 1) as f64;
        let mut cloud = Vec::new();
        for a in spec.control_set.sample(t, 4)? {
            for w in &w_samples {
                cloud.push(crate::auxiliary::g_frak(spec, t, &a, w)?);
            }
        }
        clouds.push(cloud);
    }
    let mut hausdorff_max: f64 = 0.0;
    for pair in clouds.windows(2) {
        hausdorff_max = hausdorff_max.max(hausdorff(&pair[0], &pair[1]));
    }

    Ok(ProbeReport {
        samples,
        lipschitz_estimate: lip,
        growth_ratio_small: ratios[0],
        growth_ratio_large: ratios[1],
        growth_flag,
        hausdorff_max,
        warnings,
    })
}

/// Deterministic sample of the compactified cone.
fn tilde_cone_samples(cone: &Cone, m: usize) -> Vec<Vec<f64>> {
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    match cone {
        Cone::NonnegativeOrthant => {
            let mut out = Vec::new();
            let mut idx = vec![0usize; m];
            loop {
                out.push(idx.iter().map(|&i| levels[i]).collect());
                let mut d = 0;
                loop {
                    idx[d] += 1;
                    if idx[d] < levels.len() {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                    if d == m {
                        return out;
                    }
                }
            }
        }
        Cone::HalfLine { direction } => {
            let peak = direction.iter().map(|v| v.abs()).fold(0.0, f64::max);
            levels
                .iter()
                .map(|&c| direction.iter().map(|&v| c * v / peak).collect())
                .collect()
        }
        Cone::FinitelyGenerated { generators } => {
            let mut out = vec![vec![0.0; m]];
            for g in generators {
                let peak = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
                for &c in &levels[1..] {
                    out.push(g.iter().map(|&v| c * v / peak).collect());
                }
            }
            out
        }
    }
}

fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let d = |p: &[f64], q: &[f64]| -> f64 {
        p.iter().zip(q).map(|(&x, &y)| (x - y).powi(2)).sum::<f64>().sqrt()
    };
    let one_way = |from: &[Vec<f64>], to: &[Vec<f64>]| -> f64 {
        from.iter()
            .map(|p| to.iter().map(|q| d(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(fexpr: &str) -> Value {
        json!({
            "version": 1, "n": 1, "m": 1, "q": 0, "T": 1.0,
            "delays": [0.0],
            "f": [fexpr], "G": [["1"]],
            "l0": "0", "l1": ["0"], "Phi": "0",
            "zeta": ["0"],
            "cone": {"kind": "nonnegative_orthant"},
            "A": {"kind": "box", "lo": [], "hi": []},
            "target": {"kind": "fixed_initial_free_terminal", "x0": [0.0]}
        })
    }

    #[test]
    fn loads_a_minimal_scenario() {
        let spec = scenario_from_value(&minimal("0")).unwrap();
        assert_eq!(spec.n, 1);
        assert_eq!(spec.delay_count(), 0);
    }

    #[test]
    fn missing_delays_reports_the_pointer() {
        let mut doc = minimal("0");
        doc.as_object_mut().unwrap().remove("delays");
        match scenario_from_value(&doc) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/delays"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn wrong_row_count_in_g_names_the_field() {
        let mut doc = minimal("0");
        doc["G"] = json!([["1"], ["0"]]);
        match scenario_from_value(&doc) {
            Err(Error::Schema { pointer, message }) => {
                assert_eq!(pointer, "/G");
                assert!(message.contains("rows"));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn role_violations_are_schema_errors() {
        let mut doc = minimal("x1[0]");
        doc["delays"] = json!([0.0]);
        assert!(matches!(scenario_from_value(&doc), Err(Error::Schema { .. })));

        let mut doc = minimal("0");
        doc["G"] = json!([["x0[0]"]]);
        assert!(matches!(scenario_from_value(&doc), Err(Error::Schema { .. })));

        let mut doc = minimal("0");
        doc["Phi"] = Value::from("t");
        assert!(matches!(scenario_from_value(&doc), Err(Error::Schema { .. })));
    }

    #[test]
    fn canonical_round_trip_is_idempotent() {
        let doc = minimal("0");
        let spec = scenario_from_value(&doc).unwrap();
        let canon = canonical_value(&spec);
        let spec2 = scenario_from_value(&canon).unwrap();
        let canon2 = canonical_value(&spec2);
        assert_eq!(
            serde_json::to_string(&canon).unwrap(),
            serde_json::to_string(&canon2).unwrap()
        );
    }

    #[test]
    fn probe_estimates_a_linear_lipschitz_constant() {
        let spec = scenario_from_value(&minimal("x0[0]")).unwrap();
        let report = probe_hypotheses(&spec, 200, 0).unwrap();
        assert!((report.lipschitz_estimate - 1.0).abs() < 0.1, "estimate {}", report.lipschitz_estimate);
        assert!(!report.growth_flag);
        // autonomous fast dynamics: consecutive clouds coincide
        assert!(report.hausdorff_max < 1e-12);
    }

    #[test]
    fn probe_flags_superlinear_growth() {
        let spec = scenario_from_value(&minimal("x0[0]^2")).unwrap();
        let report = probe_hypotheses(&spec, 200, 0).unwrap();
        assert!(report.growth_flag);
    }

    #[test]
    fn probe_requires_enough_samples() {
        let spec = scenario_from_value(&minimal("0")).unwrap();
        assert!(probe_hypotheses(&spec, 50, 0).is_err());
    }
}
