//! Power network case ingestion: IEEE Common Data Format and a native JSON
//! schema, Y-bus assembly, and the rectangular-coordinate quadratic power
//! flow map.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use pfgeom_core::QuadraticMap;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("missing section: {0}")]
    MissingSection(&'static str),
    #[error("section {0} not terminated by -999")]
    UnterminatedSection(&'static str),
    #[error("line {line}: malformed numeric field {field:?}: {token:?}")]
    BadField { line: usize, field: &'static str, token: String },
    #[error("line {line}: {msg}")]
    BadRecord { line: usize, msg: String },
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("branch {from}-{to} references nonexistent bus {missing}")]
    UnknownBus { from: u32, to: u32, missing: u32 },
    #[error("branch {from}-{to} has zero impedance (R = X = 0)")]
    ZeroImpedance { from: u32, to: u32 },
    #[error("slack elimination requires exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("invalid case JSON at {path}: {msg}")]
    Schema { path: String, msg: String },
    #[error(transparent)]
    Core(#[from] pfgeom_core::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

/// A bus record. Loads and generation are in MW / MVAr as in the source
/// file; shunt admittance is in per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    #[serde(default)]
    pub load_p: f64,
    #[serde(default)]
    pub load_q: f64,
    #[serde(default)]
    pub gen_p: f64,
    #[serde(default)]
    pub gen_q: f64,
    #[serde(default)]
    pub shunt_g: f64,
    #[serde(default)]
    pub shunt_b: f64,
    #[serde(default)]
    pub base_kv: f64,
}

/// A branch record: series impedance, total line charging, off-nominal tap
/// ratio (0 or 1 means nominal) and phase shift in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub tap: f64,
    #[serde(default)]
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
}

impl NetworkCase {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Map from bus id to index in `buses`, failing on duplicates.
    fn index(&self) -> Result<HashMap<u32, usize>> {
        let mut idx = HashMap::with_capacity(self.buses.len());
        for (i, bus) in self.buses.iter().enumerate() {
            if idx.insert(bus.id, i).is_some() {
                return Err(NetError::DuplicateBus(bus.id));
            }
        }
        Ok(idx)
    }

    fn validate(&self) -> Result<HashMap<u32, usize>> {
        let idx = self.index()?;
        for br in &self.branches {
            for end in [br.from, br.to] {
                if !idx.contains_key(&end) {
                    return Err(NetError::UnknownBus { from: br.from, to: br.to, missing: end });
                }
            }
        }
        Ok(idx)
    }
}

/// The complex nodal admittance matrix `Y = G + jB`, bus order matching
/// `NetworkCase::buses`.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    pub y: DMatrix<Complex<f64>>,
}

fn parse_num(tok: &str, line: usize, field: &'static str) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| NetError::BadField { line, field, token: tok.trim().to_string() })
}

/// Field from a whitespace-split record, defaulting to 0 when the record is
/// short (archive files frequently truncate trailing zero fields).
fn field_or_zero(toks: &[&str], i: usize, line: usize, field: &'static str) -> Result<f64> {
    match toks.get(i) {
        Some(t) => parse_num(t, line, field),
        None => Ok(0.0),
    }
}

/// Parses an IEEE Common Data Format case.
///
/// Bus names may contain spaces, so bus cards are split positionally: the
/// id is taken from the first four columns, the name from columns 5-17, and
/// the remaining fields by whitespace. Branch cards carry no free text and
/// are split purely by whitespace.
pub fn parse_cdf(text: &str) -> Result<NetworkCase> {
    let mut lines = text.lines().enumerate();
    let (_, title) = lines
        .next()
        .ok_or(NetError::MissingSection("title card"))?;
    // MVA base occupies columns 32-37 of the title card; fall back to the
    // first free-standing number for hand-written files.
    let base_mva = title
        .get(31..37)
        .and_then(|s| s.trim().parse::<f64>().ok())
        .or_else(|| {
            title
                .split_whitespace()
                .filter_map(|t| t.parse::<f64>().ok())
                .find(|v| *v > 0.0)
        })
        .filter(|v| *v > 0.0)
        .unwrap_or(100.0);
    let name = title.get(45..).map(str::trim).unwrap_or("").to_string();

    let mut buses = Vec::new();
    let mut branches = Vec::new();
    let mut saw_bus_section = false;
    let mut saw_branch_section = false;

    #[derive(PartialEq)]
    enum Section {
        None,
        Bus,
        Branch,
    }
    let mut section = Section::None;

    for (lineno, raw) in lines {
        let line = lineno + 1; // 1-based for diagnostics
        let upper = raw.to_ascii_uppercase();
        match section {
            Section::None => {
                if upper.contains("BUS DATA FOLLOWS") {
                    section = Section::Bus;
                    saw_bus_section = true;
                } else if upper.contains("BRANCH DATA FOLLOWS") {
                    section = Section::Branch;
                    saw_branch_section = true;
                }
            }
            Section::Bus => {
                if raw.trim_start().starts_with("-999") {
                    section = Section::None;
                    continue;
                }
                if upper.contains("DATA FOLLOWS") {
                    return Err(NetError::UnterminatedSection("BUS DATA FOLLOWS"));
                }
                if raw.trim().is_empty() {
                    continue;
                }
                buses.push(parse_bus_card(raw, line)?);
            }
            Section::Branch => {
                if raw.trim_start().starts_with("-999") {
                    section = Section::None;
                    continue;
                }
                if upper.contains("DATA FOLLOWS") {
                    return Err(NetError::UnterminatedSection("BRANCH DATA FOLLOWS"));
                }
                if raw.trim().is_empty() {
                    continue;
                }
                branches.push(parse_branch_card(raw, line)?);
            }
        }
    }
    if !saw_bus_section {
        return Err(NetError::MissingSection("BUS DATA FOLLOWS"));
    }
    if section == Section::Bus {
        return Err(NetError::UnterminatedSection("BUS DATA FOLLOWS"));
    }
    if !saw_branch_section {
        return Err(NetError::MissingSection("BRANCH DATA FOLLOWS"));
    }
    if section == Section::Branch {
        return Err(NetError::UnterminatedSection("BRANCH DATA FOLLOWS"));
    }

    let case = NetworkCase { name, base_mva, buses, branches };
    case.validate()?;
    Ok(case)
}

fn parse_bus_card(raw: &str, line: usize) -> Result<Bus> {
    // Columns 1-4: bus number; 5-17: name (may contain blanks); the rest
    // whitespace-splits as area, zone, type, V, angle, loadP, loadQ, genP,
    // genQ, baseKV, desiredV, maxQ, minQ, shuntG, shuntB, remote.
    let head = raw.get(0..4.min(raw.len())).unwrap_or("");
    let id = head
        .trim()
        .parse::<u32>()
        .map_err(|_| NetError::BadField { line, field: "bus id", token: head.trim().to_string() })?;
    let rest = raw.get(17..).unwrap_or("");
    let toks: Vec<&str> = rest.split_whitespace().collect();
    let kind_code = field_or_zero(&toks, 2, line, "bus type")? as i64;
    let kind = match kind_code {
        3 => BusKind::Slack,
        2 => BusKind::Pv,
        0 | 1 => BusKind::Pq,
        other => {
            return Err(NetError::BadRecord { line, msg: format!("unknown bus type {other}") })
        }
    };
    Ok(Bus {
        id,
        kind,
        load_p: field_or_zero(&toks, 5, line, "load MW")?,
        load_q: field_or_zero(&toks, 6, line, "load MVAr")?,
        gen_p: field_or_zero(&toks, 7, line, "gen MW")?,
        gen_q: field_or_zero(&toks, 8, line, "gen MVAr")?,
        base_kv: field_or_zero(&toks, 9, line, "base kV")?,
        shunt_g: field_or_zero(&toks, 13, line, "shunt G")?,
        shunt_b: field_or_zero(&toks, 14, line, "shunt B")?,
    })
}

fn parse_branch_card(raw: &str, line: usize) -> Result<Branch> {
    let toks: Vec<&str> = raw.split_whitespace().collect();
    if toks.len() < 9 {
        return Err(NetError::BadRecord {
            line,
            msg: format!("branch card has {} fields, expected at least 9", toks.len()),
        });
    }
    let from = parse_num(toks[0], line, "from bus")? as u32;
    let to = parse_num(toks[1], line, "to bus")? as u32;
    Ok(Branch {
        from,
        to,
        r: parse_num(toks[6], line, "branch R")?,
        x: parse_num(toks[7], line, "branch X")?,
        b: parse_num(toks[8], line, "branch B")?,
        tap: field_or_zero(&toks, 14, line, "tap ratio")?,
        shift: field_or_zero(&toks, 15, line, "phase shift")?,
    })
}

/// Parses the native JSON case schema; schema violations report the
/// JSON-pointer path of the offending element.
pub fn parse_native(text: &str) -> Result<NetworkCase> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| NetError::Schema { path: "/".into(), msg: e.to_string() })?;
    match NetworkCase::deserialize(&value) {
        Ok(case) => {
            case.validate()?;
            Ok(case)
        }
        Err(err) => Err(NetError::Schema { path: schema_path(&value), msg: err.to_string() }),
    }
}

/// JSON pointer of the first schema violation in a rejected case document,
/// found by probing the required structure element-wise.
fn schema_path(v: &serde_json::Value) -> String {
    use serde_json::Value;
    let Some(obj) = v.as_object() else { return "/".into() };
    match obj.get("base_mva") {
        Some(Value::Number(_)) => {}
        _ => return "/base_mva".into(),
    }
    for (key, required) in [
        ("buses", &["id", "kind"][..]),
        ("branches", &["from", "to", "r", "x"][..]),
    ] {
        let Some(arr) = obj.get(key) else { return format!("/{key}") };
        let Some(items) = arr.as_array() else { return format!("/{key}") };
        for (i, item) in items.iter().enumerate() {
            let Some(fields) = item.as_object() else { return format!("/{key}/{i}") };
            for f in required {
                if !fields.contains_key(*f) {
                    return format!("/{key}/{i}/{f}");
                }
            }
            if key == "buses" {
                let ok = matches!(
                    fields.get("kind").and_then(Value::as_str),
                    Some("slack" | "pv" | "pq")
                );
                if !ok {
                    return format!("/{key}/{i}/kind");
                }
            }
        }
    }
    "/".into()
}

/// Serializes a case into the native JSON schema. `parse_native` of the
/// result reproduces the case exactly.
pub fn serialize_native(case: &NetworkCase) -> String {
    serde_json::to_string_pretty(case).expect("case serialization cannot fail")
}

/// Writes a case back out in IEEE Common Data Format. `parse_cdf` of the
/// result reproduces the electrical data (names and limits are not
/// preserved by the parser and are emitted as placeholders).
pub fn case_to_cdf(case: &NetworkCase) -> String {
    let mut out = String::new();
    // MVA base in columns 32-37 and case name from column 46, matching the
    // archive title-card layout the parser expects.
    out.push_str(&format!(
        "{:<31}{:6.1} {:>4} S {}\n",
        " 01/01/70 PFGEOM", case.base_mva, 1970, case.name
    ));
    out.push_str(&format!("BUS DATA FOLLOWS {} ITEMS\n", case.buses.len()));
    for b in &case.buses {
        let kind = match b.kind {
            BusKind::Slack => 3,
            BusKind::Pv => 2,
            BusKind::Pq => 0,
        };
        out.push_str(&format!(
            "{:4} Bus {:<9} 1  1  {} 1.000    0.0  {:9.3} {:9.3} {:9.3} {:9.3} {:7.1} 1.000     0.0     0.0  {:8.5} {:8.5}     0\n",
            b.id, b.id, kind, b.load_p, b.load_q, b.gen_p, b.gen_q, b.base_kv, b.shunt_g, b.shunt_b
        ));
    }
    out.push_str("-999\n");
    out.push_str(&format!("BRANCH DATA FOLLOWS {} ITEMS\n", case.branches.len()));
    for br in &case.branches {
        out.push_str(&format!(
            "{:4} {:4}  1  1 1 0 {:10.5} {:10.5} {:10.5}     0     0     0    0 0 {:8.5} {:8.3}     0.0     0.0    0.0    0.0   0.0\n",
            br.from, br.to, br.r, br.x, br.b, br.tap, br.shift
        ));
    }
    out.push_str("-999\n");
    out.push_str("END OF DATA\n");
    out
}

/// Assembles the nodal admittance matrix with the standard branch model:
/// series admittance `y = 1/(R + jX)`, total charging `B` split between the
/// ends, off-nominal tap `t` (with phase shift) on the `from` side, plus
/// bus shunt admittances on the diagonal.
pub fn ybus(case: &NetworkCase) -> Result<AdmittanceMatrix> {
    let idx = case.validate()?;
    let m = case.buses.len();
    let mut y = DMatrix::from_element(m, m, Complex::new(0.0, 0.0));
    for br in &case.branches {
        if br.r == 0.0 && br.x == 0.0 {
            return Err(NetError::ZeroImpedance { from: br.from, to: br.to });
        }
        let f = idx[&br.from];
        let t = idx[&br.to];
        let ys = Complex::new(1.0, 0.0) / Complex::new(br.r, br.x);
        let bc = Complex::new(0.0, br.b / 2.0);
        let ratio = if br.tap == 0.0 { 1.0 } else { br.tap };
        let shift = br.shift.to_radians();
        let a = Complex::from_polar(ratio, shift);
        y[(f, f)] += (ys + bc) / (a * a.conj());
        y[(t, t)] += ys + bc;
        y[(f, t)] -= ys / a.conj();
        y[(t, f)] -= ys / a;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        y[(i, i)] += Complex::new(bus.shunt_g, bus.shunt_b);
    }
    Ok(AdmittanceMatrix { y })
}

/// Options for [`assemble_quadratic`].
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct AssembleOptions {
    /// Fix the slack bus voltage to `(e, f) = (1, 0)` and drop its two
    /// equations. The reduced map is no longer homogeneous.
    pub eliminate_slack: bool,
}

/// Builds the rectangular-coordinate power flow map.
///
/// Coordinates interleave as `v = (e_1, f_1, ..., e_m, f_m)` and components
/// as `(P_1, Q_1, ..., P_m, Q_m)` with
///
/// ```text
/// P_i = e_i sum_k (G_ik e_k - B_ik f_k) + f_i sum_k (G_ik f_k + B_ik e_k)
/// Q_i = f_i sum_k (G_ik e_k - B_ik f_k) - e_i sum_k (G_ik f_k + B_ik e_k)
/// ```
///
/// each a homogeneous quadratic form in `v`.
pub fn assemble_quadratic(case: &NetworkCase, opts: AssembleOptions) -> Result<QuadraticMap> {
    let adm = ybus(case)?;
    let m = case.buses.len();
    let n = 2 * m;
    let mut mats = Vec::with_capacity(n);
    for i in 0..m {
        let mut p = DMatrix::zeros(n, n);
        let mut q = DMatrix::zeros(n, n);
        for k in 0..m {
            let g = adm.y[(i, k)].re;
            let b = adm.y[(i, k)].im;
            let (e_i, f_i, e_k, f_k) = (2 * i, 2 * i + 1, 2 * k, 2 * k + 1);
            p[(e_i, e_k)] += g;
            p[(e_i, f_k)] -= b;
            p[(f_i, f_k)] += g;
            p[(f_i, e_k)] += b;
            q[(f_i, e_k)] += g;
            q[(f_i, f_k)] -= b;
            q[(e_i, f_k)] -= g;
            q[(e_i, e_k)] -= b;
        }
        mats.push(p);
        mats.push(q);
    }
    if !opts.eliminate_slack {
        return Ok(QuadraticMap::from_matrices(mats)?);
    }

    let slacks: Vec<usize> = case
        .buses
        .iter()
        .enumerate()
        .filter(|(_, b)| b.kind == BusKind::Slack)
        .map(|(i, _)| i)
        .collect();
    if slacks.len() != 1 {
        return Err(NetError::SlackCount(slacks.len()));
    }
    let s = slacks[0];
    let fixed = [2 * s, 2 * s + 1];
    let v_fixed = [1.0, 0.0];
    // The same coordinates are dropped and the same equations kept, so the
    // reduced map stays square.
    let free: Vec<usize> = (0..n).filter(|c| !fixed.contains(c)).collect();

    let nr = n - 2;
    let mut red_mats = Vec::with_capacity(nr);
    let mut linear = DMatrix::zeros(nr, nr);
    let mut constant = DVector::zeros(nr);
    for (row, &comp) in free.iter().enumerate() {
        // Symmetrize first so the linear term 2 a_fixed,free v_fixed is exact.
        let a = (&mats[comp] + mats[comp].transpose()) * 0.5;
        let mut ar = DMatrix::zeros(nr, nr);
        for (ri, &ci) in free.iter().enumerate() {
            for (rj, &cj) in free.iter().enumerate() {
                ar[(ri, rj)] = a[(ci, cj)];
            }
        }
        red_mats.push(ar);
        for (ri, &ci) in free.iter().enumerate() {
            let mut acc = 0.0;
            for (fi, &cf) in fixed.iter().enumerate() {
                acc += a[(ci, cf)] * v_fixed[fi];
            }
            linear[(row, ri)] = 2.0 * acc;
        }
        let mut c = 0.0;
        for (fi, &cf) in fixed.iter().enumerate() {
            for (fj, &cg) in fixed.iter().enumerate() {
                c += v_fixed[fi] * a[(cf, cg)] * v_fixed[fj];
            }
        }
        constant[row] = c;
    }
    Ok(QuadraticMap::from_parts(red_mats, linear, constant)?)
}

/// The flat voltage profile `e_i = 1, f_i = 0` in interleaved coordinates.
pub fn flat_profile(n_buses: usize) -> DVector<f64> {
    DVector::from_fn(2 * n_buses, |i, _| if i % 2 == 0 { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_bus() -> NetworkCase {
        NetworkCase {
            name: "two bus".into(),
            base_mva: 100.0,
            buses: vec![
                Bus {
                    id: 1,
                    kind: BusKind::Slack,
                    load_p: 0.0,
                    load_q: 0.0,
                    gen_p: 0.0,
                    gen_q: 0.0,
                    shunt_g: 0.0,
                    shunt_b: 0.0,
                    base_kv: 0.0,
                },
                Bus {
                    id: 2,
                    kind: BusKind::Pq,
                    load_p: 50.0,
                    load_q: 10.0,
                    gen_p: 0.0,
                    gen_q: 0.0,
                    shunt_g: 0.0,
                    shunt_b: 0.0,
                    base_kv: 0.0,
                },
            ],
            branches: vec![Branch { from: 1, to: 2, r: 0.0, x: 0.1, b: 0.0, tap: 0.0, shift: 0.0 }],
        }
    }

    #[test]
    fn two_bus_ybus() {
        let adm = ybus(&two_bus()).unwrap();
        let want = [
            [Complex::new(0.0, -10.0), Complex::new(0.0, 10.0)],
            [Complex::new(0.0, 10.0), Complex::new(0.0, -10.0)],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(adm.y[(i, j)].re, want[i][j].re, epsilon = 1e-12);
                assert_relative_eq!(adm.y[(i, j)].im, want[i][j].im, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn line_charging_hits_diagonals() {
        let mut case = two_bus();
        case.branches[0].b = 0.02;
        let adm = ybus(&case).unwrap();
        assert_relative_eq!(adm.y[(0, 0)].im, -10.0 + 0.01, epsilon = 1e-12);
        assert_relative_eq!(adm.y[(1, 1)].im, -10.0 + 0.01, epsilon = 1e-12);
        assert_relative_eq!(adm.y[(0, 1)].im, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_impedance_rejected() {
        let mut case = two_bus();
        case.branches[0].r = 0.0;
        case.branches[0].x = 0.0;
        assert!(matches!(ybus(&case), Err(NetError::ZeroImpedance { .. })));
    }

    #[test]
    fn flat_profile_has_no_flow() {
        let f = assemble_quadratic(&two_bus(), AssembleOptions::default()).unwrap();
        assert_eq!(f.dim(), 4);
        let p = f.eval(&flat_profile(2)).unwrap();
        assert!(p.norm() < 1e-12, "injections {p}");
    }

    #[test]
    fn hand_evaluated_injection() {
        let f = assemble_quadratic(&two_bus(), AssembleOptions::default()).unwrap();
        let v = DVector::from_row_slice(&[1.0, 0.0, 0.9, 0.0]);
        let p = f.eval(&v).unwrap();
        // P1 = 0 (purely reactive line, aligned angles), Q1 = -(-10 + 9) = 1.
        assert_relative_eq!(p[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(p[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn slack_elimination_substitutes() {
        let case = two_bus();
        let full = assemble_quadratic(&case, AssembleOptions::default()).unwrap();
        let red = assemble_quadratic(&case, AssembleOptions { eliminate_slack: true }).unwrap();
        assert_eq!(red.dim(), 2);
        assert!(!red.is_homogeneous());
        // Reduced map at (e2, f2) equals components (P2, Q2) of the full map
        // at (1, 0, e2, f2).
        let x = DVector::from_row_slice(&[0.93, -0.11]);
        let v = DVector::from_row_slice(&[1.0, 0.0, x[0], x[1]]);
        let pr = red.eval(&x).unwrap();
        let pf = full.eval(&v).unwrap();
        assert_relative_eq!(pr[0], pf[2], epsilon = 1e-12);
        assert_relative_eq!(pr[1], pf[3], epsilon = 1e-12);
    }

    #[test]
    fn slack_elimination_needs_one_slack() {
        let mut case = two_bus();
        case.buses[0].kind = BusKind::Pq;
        let r = assemble_quadratic(&case, AssembleOptions { eliminate_slack: true });
        assert!(matches!(r, Err(NetError::SlackCount(0))));
    }

    #[test]
    fn native_round_trip() {
        let case = two_bus();
        let text = serialize_native(&case);
        let back = parse_native(&text).unwrap();
        assert_eq!(case, back);
    }

    #[test]
    fn native_unknown_bus_rejected() {
        let mut case = two_bus();
        case.branches[0].to = 99;
        let text = serialize_native(&case);
        let r = parse_native(&text);
        assert!(matches!(r, Err(NetError::UnknownBus { missing: 99, .. })));
    }

    #[test]
    fn native_schema_error_has_path() {
        let r = parse_native(r#"{"buses": [], "branches": []}"#);
        match r {
            Err(NetError::Schema { path, .. }) => assert_eq!(path, "/base_mva"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn cdf_round_trip_through_native() {
        let text = sample_cdf();
        let case = parse_cdf(&text).unwrap();
        assert_eq!(case.n_buses(), 3);
        assert_eq!(case.branches.len(), 3);
        assert_relative_eq!(case.base_mva, 100.0);
        let back = parse_native(&serialize_native(&case)).unwrap();
        assert_eq!(case, back);
    }

    #[test]
    fn cdf_reads_shunts_and_taps() {
        let case = parse_cdf(&sample_cdf()).unwrap();
        assert_relative_eq!(case.buses[2].shunt_b, 0.19);
        assert_relative_eq!(case.branches[2].tap, 0.978);
        assert_eq!(case.buses[0].kind, BusKind::Slack);
        assert_eq!(case.buses[1].kind, BusKind::Pv);
        assert_eq!(case.buses[2].kind, BusKind::Pq);
    }

    #[test]
    fn cdf_unterminated_section() {
        let text = sample_cdf().replace("-999", "");
        let r = parse_cdf(&text);
        assert!(
            matches!(r, Err(NetError::UnterminatedSection("BUS DATA FOLLOWS"))),
            "{r:?}"
        );
    }

    #[test]
    fn cdf_malformed_number_names_line() {
        let text = sample_cdf().replace("0.19", "zz19");
        match parse_cdf(&text) {
            Err(NetError::BadField { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected BadField, got {other:?}"),
        }
    }

    fn sample_cdf() -> String {
        // A 3-bus fragment in archive layout (bus names contain blanks).
        [
            " 08/26/26 TEST CASE           100.0  2026 S Sample 3 Bus Case",
            "BUS DATA FOLLOWS                            3 ITEMS",
            "   1 Bus 1     HV  1  1  3 1.060    0.0      0.0      0.0    232.4   -16.9   132.0  1.060     0.0     0.0   0.0    0.0        0",
            "   2 Bus 2     HV  1  1  2 1.045   -4.98    21.7     12.7     40.0    42.4   132.0  1.045    50.0   -40.0   0.0    0.0        0",
            "   3 Bus 3     LV  1  1  0 1.010   -12.7    29.5     16.6      0.0     0.0    33.0  0.000     0.0     0.0   0.0    0.19       0",
            "-999",
            "BRANCH DATA FOLLOWS                         3 ITEMS",
            "   1   2  1  1 1 0  0.01938  0.05917  0.0528     0     0     0    0 0  0.0    0.0     0.0     0.0    0.0    0.0   0.0",
            "   1   3  1  1 1 0  0.05403  0.22304  0.0492     0     0     0    0 0  0.0    0.0     0.0     0.0    0.0    0.0   0.0",
            "   2   3  1  1 1 0  0.0      0.20912  0.0        0     0     0    0 0  0.978  0.0     0.0     0.0    0.0    0.0   0.0",
            "-999",
            "END OF DATA",
        ]
        .join("\n")
    }
}
