//! Raw grid case records and the two on-disk formats.
//!
//! The parser is a pure syntax layer: it does not normalize values
//! (`tau = 0` is stored as given, angles stay in degrees). Normalization
//! happens in [`crate::model::to_internal`].

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusType {
    PQ,
    PV,
    REF,
}

impl BusType {
    pub fn code(self) -> i64 {
        match self {
            BusType::PQ => 1,
            BusType::PV => 2,
            BusType::REF => 3,
        }
    }

    pub fn from_code(code: i64) -> Option<BusType> {
        match code {
            1 => Some(BusType::PQ),
            2 => Some(BusType::PV),
            3 => Some(BusType::REF),
            _ => None,
        }
    }
}

impl Serialize for BusType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let name = match self {
            BusType::PQ => "PQ",
            BusType::PV => "PV",
            BusType::REF => "REF",
        };
        s.serialize_str(name)
    }
}

impl<'de> Deserialize<'de> for BusType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        // accept both the MATPOWER integer code and a name
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::String(s) => match s.as_str() {
                "PQ" => Ok(BusType::PQ),
                "PV" => Ok(BusType::PV),
                "REF" => Ok(BusType::REF),
                other => Err(D::Error::custom(format!("unknown bus type {:?}", other))),
            },
            serde_json::Value::Number(n) => n
                .as_i64()
                .and_then(BusType::from_code)
                .ok_or_else(|| D::Error::custom(format!("unknown bus type code {}", n))),
            _ => Err(D::Error::custom("bus type must be a string or integer")),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn vmin_default() -> f64 {
    0.9
}
fn vmax_default() -> f64 {
    1.1
}
fn status_default() -> i64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: i64,
    #[serde(rename = "type")]
    pub bus_type: BusType,
    /// Active / reactive demand, MW and MVAr.
    #[serde(rename = "Pd", default)]
    pub pd: f64,
    #[serde(rename = "Qd", default)]
    pub qd: f64,
    /// Shunt conductance / susceptance, MW and MVAr at V = 1 p.u.
    #[serde(rename = "Gs", default)]
    pub gs: f64,
    #[serde(rename = "Bs", default)]
    pub bs: f64,
    /// Initial voltage magnitude (p.u.) and angle (degrees).
    #[serde(rename = "Vm", default = "one")]
    pub vm: f64,
    #[serde(rename = "Va", default)]
    pub va: f64,
    #[serde(rename = "Vmin", default = "vmin_default")]
    pub vmin: f64,
    #[serde(rename = "Vmax", default = "vmax_default")]
    pub vmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub fbus: i64,
    pub tbus: i64,
    /// Series impedance, p.u.
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, p.u.
    #[serde(default)]
    pub b: f64,
    /// Tap ratio magnitude; 0 means nominal (1.0) per the MATPOWER convention.
    #[serde(rename = "tau", default)]
    pub tau0: f64,
    /// Phase shift angle, degrees.
    #[serde(rename = "theta", default)]
    pub theta0: f64,
    #[serde(rename = "tauMin", default = "one")]
    pub tau_min: f64,
    #[serde(rename = "tauMax", default = "one")]
    pub tau_max: f64,
    /// Phase shift bounds, degrees.
    #[serde(rename = "thetaMin", default)]
    pub theta_min: f64,
    #[serde(rename = "thetaMax", default)]
    pub theta_max: f64,
    #[serde(default)]
    pub adjustable: bool,
    /// Current magnitude limit, p.u.; 0 means unconstrained.
    #[serde(rename = "Imax", default)]
    pub imax: f64,
    #[serde(default = "status_default")]
    pub status: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRecord {
    pub bus: i64,
    /// Setpoints, MW and MVAr.
    #[serde(rename = "Pg", default)]
    pub pg: f64,
    #[serde(rename = "Qg", default)]
    pub qg: f64,
    #[serde(rename = "Pmin", default)]
    pub pmin: f64,
    #[serde(rename = "Pmax", default)]
    pub pmax: f64,
    #[serde(rename = "Qmin", default)]
    pub qmin: f64,
    #[serde(rename = "Qmax", default)]
    pub qmax: f64,
}

/// Quadratic cost coefficients for one generator: c2·Pg² + c1·Pg + c0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CostRecord {
    #[serde(default)]
    pub c2: f64,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c0: f64,
}

/// Raw grid description as parsed from a case file.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub gens: Vec<GenRecord>,
    pub gencosts: Vec<CostRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseFormat {
    Json,
    MpcTable,
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{section} record {index}: missing required column {column:?}")]
    MissingColumn {
        section: &'static str,
        index: usize,
        column: &'static str,
    },
    #[error("duplicate bus ID {id}")]
    DuplicateBusId { id: i64 },
    #[error("bus {id} is isolated after status filtering")]
    IsolatedBus { id: i64 },
    #[error("case fails validation:\n{0}")]
    Invalid(ValidationReport),
}

/// Parse result: the case plus non-fatal warnings (unknown keys/columns).
#[derive(Debug, Clone)]
pub struct ParsedCase {
    pub case: Case,
    pub warnings: Vec<String>,
}

const BUS_KEYS: [&str; 10] = ["id", "type", "Pd", "Qd", "Gs", "Bs", "Vm", "Va", "Vmin", "Vmax"];
const BRANCH_KEYS: [&str; 14] = [
    "fbus", "tbus", "r", "x", "b", "tau", "theta", "tauMin", "tauMax", "thetaMin", "thetaMax",
    "adjustable", "Imax", "status",
];
const GEN_KEYS: [&str; 10] = [
    "bus", "Pg", "Qg", "Pmin", "Pmax", "Qmin", "Qmax", "c2", "c1", "c0",
];
const BUS_REQUIRED: [&str; 2] = ["id", "type"];
const BRANCH_REQUIRED: [&str; 4] = ["fbus", "tbus", "r", "x"];
const GEN_REQUIRED: [&str; 1] = ["bus"];

pub fn parse_case(text: &str, format: CaseFormat) -> Result<ParsedCase, CaseError> {
    let parsed = match format {
        CaseFormat::Json => parse_json(text)?,
        CaseFormat::MpcTable => parse_mpc(text)?,
    };
    let mut seen = std::collections::HashSet::new();
    for bus in &parsed.case.buses {
        if !seen.insert(bus.id) {
            return Err(CaseError::DuplicateBusId { id: bus.id });
        }
    }
    Ok(parsed)
}

fn syntax_from_serde(err: &serde_json::Error) -> CaseError {
    CaseError::Syntax {
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

fn parse_json(text: &str) -> Result<ParsedCase, CaseError> {
    let root: serde_json::Value = serde_json::from_str(text).map_err(|e| syntax_from_serde(&e))?;
    let mut warnings = Vec::new();

    let obj = root.as_object().ok_or(CaseError::Syntax {
        line: 1,
        column: 1,
        message: "top level must be an object".into(),
    })?;
    for key in obj.keys() {
        if !["baseMVA", "bus", "branch", "gen"].contains(&key.as_str()) {
            warnings.push(format!("ignoring unknown top-level key {:?}", key));
        }
    }

    let base_mva = obj.get("baseMVA").and_then(|v| v.as_f64()).ok_or(CaseError::Syntax {
        line: 1,
        column: 1,
        message: "missing or non-numeric \"baseMVA\"".into(),
    })?;

    let section = |name: &'static str| -> Result<Vec<serde_json::Value>, CaseError> {
        match obj.get(name) {
            Some(serde_json::Value::Array(a)) => Ok(a.clone()),
            Some(_) => Err(CaseError::Syntax {
                line: 1,
                column: 1,
                message: format!("\"{}\" must be an array", name),
            }),
            None => Ok(Vec::new()),
        }
    };

    let check_keys = |section_name: &'static str,
                      known: &[&str],
                      required: &[&'static str],
                      rows: &[serde_json::Value],
                      warnings: &mut Vec<String>|
     -> Result<(), CaseError> {
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_object().ok_or(CaseError::Syntax {
                line: 1,
                column: 1,
                message: format!("{} record {} must be an object", section_name, i),
            })?;
            for key in row.keys() {
                if !known.contains(&key.as_str()) {
                    warnings.push(format!(
                        "{} record {}: ignoring unknown key {:?}",
                        section_name, i, key
                    ));
                }
            }
            for &req in required {
                if !row.contains_key(req) {
                    return Err(CaseError::MissingColumn {
                        section: section_name,
                        index: i,
                        column: req,
                    });
                }
            }
        }
        Ok(())
    };

    let bus_rows = section("bus")?;
    let branch_rows = section("branch")?;
    let gen_rows = section("gen")?;
    check_keys("bus", &BUS_KEYS, &BUS_REQUIRED, &bus_rows, &mut warnings)?;
    check_keys("branch", &BRANCH_KEYS, &BRANCH_REQUIRED, &branch_rows, &mut warnings)?;
    check_keys("gen", &GEN_KEYS, &GEN_REQUIRED, &gen_rows, &mut warnings)?;

    let buses: Vec<BusRecord> = bus_rows
        .into_iter()
        .map(serde_json::from_value)
        .collect::<Result<_, _>>()
        .map_err(|e| syntax_from_serde(&e))?;
    let branches: Vec<BranchRecord> = branch_rows
        .into_iter()
        .map(serde_json::from_value)
        .collect::<Result<_, _>>()
        .map_err(|e| syntax_from_serde(&e))?;
    let mut gens = Vec::new();
    let mut gencosts = Vec::new();
    for row in gen_rows {
        let gen: GenRecord = serde_json::from_value(row.clone()).map_err(|e| syntax_from_serde(&e))?;
        let cost: CostRecord = serde_json::from_value(row).map_err(|e| syntax_from_serde(&e))?;
        gens.push(gen);
        gencosts.push(cost);
    }

    Ok(ParsedCase {
        case: Case {
            base_mva,
            buses,
            branches,
            gens,
            gencosts,
        },
        warnings,
    })
}

/// Serialize a case to the canonical JSON format (costs folded into gen objects).
pub fn serialize_case(case: &Case) -> String {
    let gens: Vec<serde_json::Value> = case
        .gens
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut v = serde_json::to_value(g).unwrap();
            let cost = case.gencosts.get(i).copied().unwrap_or_default();
            let obj = v.as_object_mut().unwrap();
            obj.insert("c2".into(), cost.c2.into());
            obj.insert("c1".into(), cost.c1.into());
            obj.insert("c0".into(), cost.c0.into());
            v
        })
        .collect();
    let doc = serde_json::json!({
        "baseMVA": case.base_mva,
        "bus": case.buses,
        "branch": case.branches,
        "gen": gens,
    });
    serde_json::to_string_pretty(&doc).unwrap()
}

fn parse_mpc(text: &str) -> Result<ParsedCase, CaseError> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        BaseMva,
        Bus,
        Branch,
        Gen,
        Cost,
    }
    let mut section = Section::None;
    let mut warnings = Vec::new();
    let mut base_mva = None;
    let mut buses = Vec::new();
    let mut branches = Vec::new();
    let mut gens = Vec::new();
    let mut gencosts = Vec::new();

    let syntax = |line: usize, message: String| CaseError::Syntax {
        line,
        column: 1,
        message,
    };

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        match line.to_ascii_uppercase().as_str() {
            "BASEMVA" => {
                section = Section::BaseMva;
                continue;
            }
            "BUS" => {
                section = Section::Bus;
                continue;
            }
            "BRANCH" => {
                section = Section::Branch;
                continue;
            }
            "GEN" => {
                section = Section::Gen;
                continue;
            }
            "COST" => {
                section = Section::Cost;
                continue;
            }
            _ => {}
        }

        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| syntax(lineno, format!("expected a number, found {:?}", tok)))
            })
            .collect::<Result<_, _>>()?;

        let get = |i: usize, default: f64| nums.get(i).copied().unwrap_or(default);
        let warn_extra = |max: usize, name: &str, warnings: &mut Vec<String>| {
            if nums.len() > max {
                warnings.push(format!(
                    "line {}: ignoring {} trailing column(s) in {} row",
                    lineno,
                    nums.len() - max,
                    name
                ));
            }
        };

        match section {
            Section::None => {
                return Err(syntax(lineno, "data before a section header".into()));
            }
            Section::BaseMva => {
                base_mva = Some(get(0, 0.0));
            }
            Section::Bus => {
                if nums.len() < BUS_REQUIRED.len() {
                    return Err(CaseError::MissingColumn {
                        section: "bus",
                        index: buses.len(),
                        column: BUS_REQUIRED[nums.len()],
                    });
                }
                warn_extra(BUS_KEYS.len(), "bus", &mut warnings);
                let type_code = get(1, 1.0) as i64;
                buses.push(BusRecord {
                    id: get(0, 0.0) as i64,
                    bus_type: BusType::from_code(type_code)
                        .ok_or_else(|| syntax(lineno, format!("unknown bus type code {}", type_code)))?,
                    pd: get(2, 0.0),
                    qd: get(3, 0.0),
                    gs: get(4, 0.0),
                    bs: get(5, 0.0),
                    vm: get(6, 1.0),
                    va: get(7, 0.0),
                    vmin: get(8, vmin_default()),
                    vmax: get(9, vmax_default()),
                });
            }
            Section::Branch => {
                if nums.len() < BRANCH_REQUIRED.len() {
                    return Err(CaseError::MissingColumn {
                        section: "branch",
                        index: branches.len(),
                        column: BRANCH_REQUIRED[nums.len()],
                    });
                }
                warn_extra(BRANCH_KEYS.len(), "branch", &mut warnings);
                branches.push(BranchRecord {
                    fbus: get(0, 0.0) as i64,
                    tbus: get(1, 0.0) as i64,
                    r: get(2, 0.0),
                    x: get(3, 0.0),
                    b: get(4, 0.0),
                    tau0: get(5, 0.0),
                    theta0: get(6, 0.0),
                    tau_min: get(7, 1.0),
                    tau_max: get(8, 1.0),
                    theta_min: get(9, 0.0),
                    theta_max: get(10, 0.0),
                    adjustable: get(11, 0.0) != 0.0,
                    imax: get(12, 0.0),
                    status: get(13, 1.0) as i64,
                });
            }
            Section::Gen => {
                if nums.is_empty() {
                    return Err(CaseError::MissingColumn {
                        section: "gen",
                        index: gens.len(),
                        column: GEN_REQUIRED[0],
                    });
                }
                warn_extra(7, "gen", &mut warnings);
                gens.push(GenRecord {
                    bus: get(0, 0.0) as i64,
                    pg: get(1, 0.0),
                    qg: get(2, 0.0),
                    pmin: get(3, 0.0),
                    pmax: get(4, 0.0),
                    qmin: get(5, 0.0),
                    qmax: get(6, 0.0),
                });
            }
            Section::Cost => {
                warn_extra(3, "cost", &mut warnings);
                gencosts.push(CostRecord {
                    c2: get(0, 0.0),
                    c1: get(1, 0.0),
                    c0: get(2, 0.0),
                });
            }
        }
    }

    let base_mva = base_mva.ok_or(CaseError::Syntax {
        line: 1,
        column: 1,
        message: "missing BASEMVA section".into(),
    })?;
    while gencosts.len() < gens.len() {
        gencosts.push(CostRecord::default());
    }

    Ok(ParsedCase {
        case: Case {
            base_mva,
            buses,
            branches,
            gens,
            gencosts,
        },
        warnings,
    })
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, code: &'static str, message: String) {
        self.issues.push(ValidationIssue { code, message });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for issue in &self.issues {
            writeln!(f, "[{}] {}", issue.code, issue.message)?;
        }
        Ok(())
    }
}

/// Check every structural invariant of a [`Case`]. All problems are report
/// entries; an empty report means the case is solvable-shaped.
pub fn validate_case(case: &Case) -> ValidationReport {
    let mut report = ValidationReport::default();

    if !(case.base_mva > 0.0) {
        report.push("nonpositive baseMVA", format!("baseMVA = {}", case.base_mva));
    }

    let mut ids = std::collections::HashSet::new();
    for bus in &case.buses {
        if !ids.insert(bus.id) {
            report.push("duplicate bus id", format!("bus ID {} appears more than once", bus.id));
        }
        if !(bus.vmin > 0.0 && bus.vmin <= bus.vmax) {
            report.push(
                "bad voltage bounds",
                format!("bus {}: need 0 < Vmin <= Vmax, got [{}, {}]", bus.id, bus.vmin, bus.vmax),
            );
        }
    }

    let slack_count = case.buses.iter().filter(|b| b.bus_type == BusType::REF).count();
    if slack_count == 0 {
        report.push("no slack", "no REF bus present".into());
    } else if slack_count > 1 {
        report.push("multiple slack", format!("{} REF buses present", slack_count));
    }

    for (i, br) in case.branches.iter().enumerate() {
        if !ids.contains(&br.fbus) {
            report.push("unknown from-bus", format!("branch {}: fbus {} not in bus list", i, br.fbus));
        }
        if !ids.contains(&br.tbus) {
            report.push("unknown to-bus", format!("branch {}: tbus {} not in bus list", i, br.tbus));
        }
        if br.fbus == br.tbus {
            report.push("self-loop", format!("branch {}: fbus == tbus == {}", i, br.fbus));
        }
        if br.r * br.r + br.x * br.x == 0.0 {
            report.push("zero impedance", format!("branch {}: r and x are both zero", i));
        }
        if br.adjustable {
            if !(br.tau_min > 0.0) {
                report.push(
                    "nonpositive tap lower bound",
                    format!("branch {}: tauMin = {}", i, br.tau_min),
                );
            }
            let tau0 = if br.tau0 == 0.0 { 1.0 } else { br.tau0 };
            if !(br.tau_min <= tau0 && tau0 <= br.tau_max) {
                report.push(
                    "tap out of bounds",
                    format!("branch {}: tau0 {} outside [{}, {}]", i, tau0, br.tau_min, br.tau_max),
                );
            }
            if !(br.theta_min <= br.theta0 && br.theta0 <= br.theta_max) {
                report.push(
                    "shift out of bounds",
                    format!(
                        "branch {}: theta0 {} outside [{}, {}]",
                        i, br.theta0, br.theta_min, br.theta_max
                    ),
                );
            }
        }
    }

    for (i, gen) in case.gens.iter().enumerate() {
        if !ids.contains(&gen.bus) {
            report.push("unknown gen bus", format!("gen {}: bus {} not in bus list", i, gen.bus));
        }
        if gen.pmin > gen.pmax {
            report.push("bad P bounds", format!("gen {}: Pmin {} > Pmax {}", i, gen.pmin, gen.pmax));
        }
        if gen.qmin > gen.qmax {
            report.push("bad Q bounds", format!("gen {}: Qmin {} > Qmax {}", i, gen.qmin, gen.qmax));
        }
    }

    if case.gencosts.len() != case.gens.len() {
        report.push(
            "cost count mismatch",
            format!("{} cost records for {} generators", case.gencosts.len(), case.gens.len()),
        );
    }

    report
}
