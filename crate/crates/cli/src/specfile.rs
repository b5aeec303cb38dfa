//! Key-value game specification files.
//!
//! One `key = value` pair per line; `#` starts a comment; blank lines are
//! ignored. Keys are the model's own field names. Coefficient functions are
//! written as
//!
//! ```text
//! a0 = constant 0.1
//! c2 = piecewise 0:0.3 0.5:0.2      # t:value pairs, left-closed pieces
//! e13 = polynomial 0.05 0.05        # ascending powers of t
//! a1 = 0.3                          # bare number means constant
//! ```
//!
//! Scalar fields (`horizon`, `m`, `kappa0`, `kappa1`, `e15`, `e16`, `e25`,
//! `e26`, `l5`, `l6`) take bare numbers. `game` selects `nonzero-sum`
//! (default) or `zero-sum`; `info` selects `w-filtration` (default) or
//! `full`. Dynamics coefficients and state weights default to zero; control
//! charges (`e17`, `e27`, `r1`, `r2`) default to one. Required keys:
//! `horizon`, `m`, `kappa0`, `kappa1`.
//!
//! Run settings may live in the same file (`depth`, `paths`, `seed`, `tol`)
//! and are overridden by command-line flags.
//!
//! Serialization is canonical (fixed key order, shortest round-trip float
//! text), so parse → serialize → parse is the identity on every field.

use std::collections::HashMap;
use std::fmt;

use dsgame_core::coeff::CoefficientFn;
use dsgame_core::model::{
    InfoStructure, LqGameSpec, PlayerCost, TerminalCondition, ZeroSumSpec,
};

/// Parse failure at a position: `line` is 1-based; `line = 0` marks
/// whole-file problems (a missing required key). `col` is the 1-based byte
/// column of the offending value, 0 when it refers to the whole line.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else if self.col == 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "line {}, column {}: {}", self.line, self.col, self.message)
        }
    }
}

impl std::error::Error for ParseError {}

/// Run settings carried by a spec file; all optional, flags take precedence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub depth: Option<usize>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

/// The game a file describes.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedGame {
    NonzeroSum(LqGameSpec),
    ZeroSum(ZeroSumSpec),
}

/// Everything a spec file holds: the game instance plus run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecFile {
    pub game: ParsedGame,
    pub run: RunSettings,
}

const DYNAMIC_KEYS: [&str; 11] =
    ["a0", "a1", "a2", "a3", "a4", "b0", "c0", "c1", "c2", "c3", "d0"];
const NZ_COEFF_KEYS: [&str; 10] =
    ["e11", "e12", "e13", "e14", "e17", "e21", "e22", "e23", "e24", "e27"];
const NZ_SCALAR_KEYS: [&str; 4] = ["e15", "e16", "e25", "e26"];
const ZS_COEFF_KEYS: [&str; 6] = ["l1", "l2", "l3", "l4", "r1", "r2"];
const ZS_SCALAR_KEYS: [&str; 2] = ["l5", "l6"];
const RUN_KEYS: [&str; 4] = ["depth", "paths", "seed", "tol"];
const BASE_KEYS: [&str; 6] = ["game", "info", "horizon", "m", "kappa0", "kappa1"];

fn is_known_key(key: &str) -> bool {
    BASE_KEYS.contains(&key)
        || DYNAMIC_KEYS.contains(&key)
        || NZ_COEFF_KEYS.contains(&key)
        || NZ_SCALAR_KEYS.contains(&key)
        || ZS_COEFF_KEYS.contains(&key)
        || ZS_SCALAR_KEYS.contains(&key)
        || RUN_KEYS.contains(&key)
}

/// One recorded `key = value` occurrence.
struct Entry {
    value: String,
    line: usize,
    col: usize,
}

struct Fields {
    map: HashMap<String, Entry>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.map.remove(key)
    }

    fn scalar(&mut self, key: &str) -> Result<Option<f64>, ParseError> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => match e.value.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(ParseError {
                    line: e.line,
                    col: e.col,
                    message: format!("field {key}: expected a finite number, got `{}`", e.value),
                }),
            },
        }
    }

    fn required_scalar(&mut self, key: &'static str) -> Result<f64, ParseError> {
        self.scalar(key)?.ok_or(ParseError {
            line: 0,
            col: 0,
            message: format!("missing field: {key}"),
        })
    }

    fn coeff(&mut self, key: &str, default: f64) -> Result<CoefficientFn, ParseError> {
        match self.take(key) {
            None => Ok(CoefficientFn::Constant(default)),
            Some(e) => parse_coefficient(&e.value).map_err(|msg| ParseError {
                line: e.line,
                col: e.col,
                message: format!("field {key}: {msg}"),
            }),
        }
    }

    fn integer<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ParseError> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|_| ParseError {
                line: e.line,
                col: e.col,
                message: format!("field {key}: expected a non-negative integer, got `{}`", e.value),
            }),
        }
    }
}

fn parse_coefficient(text: &str) -> Result<CoefficientFn, String> {
    let mut tokens = text.split_whitespace();
    let head = tokens.next().ok_or("expected a coefficient, got nothing")?;
    let number = |tok: &str| -> Result<f64, String> {
        tok.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or(format!("expected a finite number, got `{tok}`"))
    };
    match head {
        "constant" => {
            let v = number(tokens.next().ok_or("constant needs one value")?)?;
            if tokens.next().is_some() {
                return Err(String::from("constant takes exactly one value"));
            }
            Ok(CoefficientFn::Constant(v))
        }
        "piecewise" => {
            let mut pieces = Vec::new();
            for tok in tokens {
                let (t, v) = tok
                    .split_once(':')
                    .ok_or(format!("piecewise pieces are `t:value`, got `{tok}`"))?;
                pieces.push((number(t)?, number(v)?));
            }
            if pieces.is_empty() {
                return Err(String::from("piecewise needs at least one `t:value` piece"));
            }
            Ok(CoefficientFn::PiecewiseConstant(pieces))
        }
        "polynomial" => {
            let mut coeffs = Vec::new();
            for tok in tokens {
                coeffs.push(number(tok)?);
            }
            if coeffs.is_empty() {
                return Err(String::from("polynomial needs at least one coefficient"));
            }
            Ok(CoefficientFn::Polynomial(coeffs))
        }
        bare => {
            if tokens.next().is_some() {
                return Err(format!(
                    "expected `constant`, `piecewise`, `polynomial`, or a bare number, got `{text}`"
                ));
            }
            Ok(CoefficientFn::Constant(number(bare)?))
        }
    }
}

/// Parses a complete spec file.
pub fn parse_spec_text(text: &str) -> Result<SpecFile, ParseError> {
    let mut map: HashMap<String, Entry> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let uncommented = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        if uncommented.trim().is_empty() {
            continue;
        }
        let eq = uncommented.find('=').ok_or(ParseError {
            line: line_no,
            col: 0,
            message: format!("expected `key = value`, got `{}`", uncommented.trim()),
        })?;
        let key = uncommented[..eq].trim().to_string();
        let value_raw = &uncommented[eq + 1..];
        let value = value_raw.trim().to_string();
        let col = eq + 2 + (value_raw.len() - value_raw.trim_start().len());
        if key.is_empty() || value.is_empty() {
            return Err(ParseError {
                line: line_no,
                col: 0,
                message: String::from("expected `key = value` with nonempty key and value"),
            });
        }
        if !is_known_key(&key) {
            return Err(ParseError {
                line: line_no,
                col: 1,
                message: format!("unknown key: {key}"),
            });
        }
        if let Some(prev) = map.get(&key) {
            return Err(ParseError {
                line: line_no,
                col: 1,
                message: format!("duplicate key {key} (first set on line {})", prev.line),
            });
        }
        map.insert(key, Entry { value, line: line_no, col });
    }
    let mut fields = Fields { map };

    let game_kind = match fields.take("game") {
        None => String::from("nonzero-sum"),
        Some(e) => match e.value.as_str() {
            "nonzero-sum" | "zero-sum" => e.value,
            other => {
                return Err(ParseError {
                    line: e.line,
                    col: e.col,
                    message: format!("field game: expected `nonzero-sum` or `zero-sum`, got `{other}`"),
                })
            }
        },
    };
    let info = match fields.take("info") {
        None => InfoStructure::WFiltration,
        Some(e) => match e.value.as_str() {
            "w-filtration" => InfoStructure::WFiltration,
            "full" => InfoStructure::Full,
            other => {
                return Err(ParseError {
                    line: e.line,
                    col: e.col,
                    message: format!("field info: expected `w-filtration` or `full`, got `{other}`"),
                })
            }
        },
    };

    let horizon = fields.required_scalar("horizon")?;
    let m = fields.required_scalar("m")?;
    let kappa0 = fields.required_scalar("kappa0")?;
    let kappa1 = fields.required_scalar("kappa1")?;
    let terminal = TerminalCondition { kappa0, kappa1 };

    let mut dyn_coeffs = Vec::with_capacity(DYNAMIC_KEYS.len());
    for key in DYNAMIC_KEYS {
        dyn_coeffs.push(fields.coeff(key, 0.0)?);
    }
    let [a0, a1, a2, a3, a4, b0, c0, c1, c2, c3, d0]: [CoefficientFn; 11] =
        dyn_coeffs.try_into().expect("eleven dynamics coefficients");

    let game = if game_kind == "zero-sum" {
        if let Some(stray) = NZ_COEFF_KEYS
            .iter()
            .chain(NZ_SCALAR_KEYS.iter())
            .find_map(|k| fields.take(k).map(|e| (*k, e)))
        {
            return Err(ParseError {
                line: stray.1.line,
                col: 1,
                message: format!(
                    "field {}: player cost weights do not apply to a zero-sum instance",
                    stray.0
                ),
            });
        }
        ParsedGame::ZeroSum(ZeroSumSpec {
            horizon,
            a0, a1, a2, a3, a4, b0, c0, c1, c2, c3, d0,
            l1: fields.coeff("l1", 0.0)?,
            l2: fields.coeff("l2", 0.0)?,
            l3: fields.coeff("l3", 0.0)?,
            l4: fields.coeff("l4", 0.0)?,
            l5: fields.scalar("l5")?.unwrap_or(0.0),
            l6: fields.scalar("l6")?.unwrap_or(0.0),
            r1: fields.coeff("r1", 1.0)?,
            r2: fields.coeff("r2", 1.0)?,
            m,
            terminal,
            info,
        })
    } else {
        if let Some(stray) = ZS_COEFF_KEYS
            .iter()
            .chain(ZS_SCALAR_KEYS.iter())
            .find_map(|k| fields.take(k).map(|e| (*k, e)))
        {
            return Err(ParseError {
                line: stray.1.line,
                col: 1,
                message: format!(
                    "field {}: zero-sum weights do not apply to a nonzero-sum instance",
                    stray.0
                ),
            });
        }
        let cost1 = PlayerCost {
            e1: fields.coeff("e11", 0.0)?,
            e2: fields.coeff("e12", 0.0)?,
            e3: fields.coeff("e13", 0.0)?,
            e4: fields.coeff("e14", 0.0)?,
            e5: fields.scalar("e15")?.unwrap_or(0.0),
            e6: fields.scalar("e16")?.unwrap_or(0.0),
            e7: fields.coeff("e17", 1.0)?,
        };
        let cost2 = PlayerCost {
            e1: fields.coeff("e21", 0.0)?,
            e2: fields.coeff("e22", 0.0)?,
            e3: fields.coeff("e23", 0.0)?,
            e4: fields.coeff("e24", 0.0)?,
            e5: fields.scalar("e25")?.unwrap_or(0.0),
            e6: fields.scalar("e26")?.unwrap_or(0.0),
            e7: fields.coeff("e27", 1.0)?,
        };
        ParsedGame::NonzeroSum(LqGameSpec {
            horizon,
            a0, a1, a2, a3, a4, b0, c0, c1, c2, c3, d0,
            cost1,
            cost2,
            m,
            terminal,
            info,
        })
    };

    let run = RunSettings {
        depth: fields.integer::<usize>("depth")?,
        paths: fields.integer::<usize>("paths")?,
        seed: fields.integer::<u64>("seed")?,
        tol: fields.scalar("tol")?,
    };

    if let Some((key, entry)) = fields.map.drain().next() {
        // Only reachable for keys valid in some mode but unused in this one;
        // everything else errored earlier.
        return Err(ParseError {
            line: entry.line,
            col: 1,
            message: format!("field {key}: not applicable here"),
        });
    }

    Ok(SpecFile { game, run })
}

fn coeff_text(c: &CoefficientFn) -> String {
    match c {
        CoefficientFn::Constant(v) => format!("constant {v}"),
        CoefficientFn::PiecewiseConstant(pieces) => {
            let body: Vec<String> = pieces.iter().map(|(t, v)| format!("{t}:{v}")).collect();
            format!("piecewise {}", body.join(" "))
        }
        CoefficientFn::Polynomial(cs) => {
            let body: Vec<String> = cs.iter().map(|c| format!("{c}")).collect();
            format!("polynomial {}", body.join(" "))
        }
    }
}

/// Canonical serialization: fixed key order, every field explicit, floats in
/// shortest round-trip form. `parse(serialize(x)) == x`.
pub fn serialize(file: &SpecFile) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    match &file.game {
        ParsedGame::NonzeroSum(s) => {
            kv("game", "nonzero-sum".into());
            kv("horizon", format!("{}", s.horizon));
            kv("m", format!("{}", s.m));
            kv(
                "info",
                match s.info {
                    InfoStructure::WFiltration => "w-filtration".into(),
                    InfoStructure::Full => "full".into(),
                },
            );
            kv("kappa0", format!("{}", s.terminal.kappa0));
            kv("kappa1", format!("{}", s.terminal.kappa1));
            for (k, c) in [
                ("a0", &s.a0), ("a1", &s.a1), ("a2", &s.a2), ("a3", &s.a3), ("a4", &s.a4),
                ("b0", &s.b0), ("c0", &s.c0), ("c1", &s.c1), ("c2", &s.c2), ("c3", &s.c3),
                ("d0", &s.d0),
            ] {
                kv(k, coeff_text(c));
            }
            for (prefix, cost) in [("e1", &s.cost1), ("e2", &s.cost2)] {
                kv(&format!("{prefix}1"), coeff_text(&cost.e1));
                kv(&format!("{prefix}2"), coeff_text(&cost.e2));
                kv(&format!("{prefix}3"), coeff_text(&cost.e3));
                kv(&format!("{prefix}4"), coeff_text(&cost.e4));
                kv(&format!("{prefix}5"), format!("{}", cost.e5));
                kv(&format!("{prefix}6"), format!("{}", cost.e6));
                kv(&format!("{prefix}7"), coeff_text(&cost.e7));
            }
        }
        ParsedGame::ZeroSum(s) => {
            kv("game", "zero-sum".into());
            kv("horizon", format!("{}", s.horizon));
            kv("m", format!("{}", s.m));
            kv(
                "info",
                match s.info {
                    InfoStructure::WFiltration => "w-filtration".into(),
                    InfoStructure::Full => "full".into(),
                },
            );
            kv("kappa0", format!("{}", s.terminal.kappa0));
            kv("kappa1", format!("{}", s.terminal.kappa1));
            for (k, c) in [
                ("a0", &s.a0), ("a1", &s.a1), ("a2", &s.a2), ("a3", &s.a3), ("a4", &s.a4),
                ("b0", &s.b0), ("c0", &s.c0), ("c1", &s.c1), ("c2", &s.c2), ("c3", &s.c3),
                ("d0", &s.d0),
            ] {
                kv(k, coeff_text(c));
            }
            for (k, c) in [("l1", &s.l1), ("l2", &s.l2), ("l3", &s.l3), ("l4", &s.l4)] {
                kv(k, coeff_text(c));
            }
            kv("l5", format!("{}", s.l5));
            kv("l6", format!("{}", s.l6));
            kv("r1", coeff_text(&s.r1));
            kv("r2", coeff_text(&s.r2));
        }
    }
    if let Some(d) = file.run.depth {
        kv("depth", format!("{d}"));
    }
    if let Some(p) = file.run.paths {
        kv("paths", format!("{p}"));
    }
    if let Some(sd) = file.run.seed {
        kv("seed", format!("{sd}"));
    }
    if let Some(t) = file.run.tol {
        kv("tol", format!("{t}"));
    }
    out
}
