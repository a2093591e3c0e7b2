//! Line-oriented scenario files.
//!
//! ```text
//! version = 1
//! name = smooth_two_atoms
//!
//! [space]
//! node t1 weight=1 kind=atom
//! uniform count=32 mass=1 kind=nonatomic      # ids t1..t32
//!
//! [integrand]
//! vars x1,x2
//! t1 smooth g=2*x1;x1+x2
//! * interval lo=0 hi="sqrt(abs(x)) + 1"
//!
//! [points]
//! x = 0.5, 0.2
//! y = 1.5, 0.7
//! selection = 1, 0.7 ; 0.5, 0
//!
//! [checks]
//! rule limiting_union
//! check quasi_lipschitz
//! expect quasi_lipschitz=violated|inconclusive
//!
//! [tolerances]
//! seed = 7
//! ```
//!
//! Integrand classes: `smooth g=..`, `interval lo=.. hi=..`,
//! `affine a=.. b=.. f=lo:hi,..`, `max_affine pieces=a,..:b;.. [quad=..]`,
//! `constraint z=.. y=<dim> phi=..;.. window=lo:hi,..`. Vector components
//! are separated by `;`, matrix rows by `;` and entries by `,`.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::functions::{ExprScalar, ExprVector, ScalarFn};
use crate::geometry::{convex_hull, Polytope};
use crate::integrand::{ConstraintSystem, MatrixField, NodeMap, RandomMap};
use crate::leibniz::{HypothesisPolicy, LhsMode, RuleId, ScalarIntegrand, WitnessFamily};
use crate::linalg::{cartesian, Matrix, Vector};
use crate::lipschitz::{LipschitzProperty, NestedGrid};
use crate::measure::{MeasureNode, MeasureSpace, NodeKind};
use crate::verdict::Verdict;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum CheckSpec {
    Rule {
        rule: RuleId,
        family: Option<WitnessFamily>,
    },
    Lipschitz(LipschitzProperty),
}

impl CheckSpec {
    /// Record id: the rule or property name.
    pub fn id(&self) -> &'static str {
        match self {
            CheckSpec::Rule { rule, .. } => rule.as_str(),
            CheckSpec::Lipschitz(p) => p.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Points {
    pub x: Vector,
    pub y: Option<Vector>,
    pub selection: Option<Vec<Vector>>,
    pub ystar_grid: Option<Vec<Vector>>,
    /// Witness-search targets.
    pub xstar: Option<Vector>,
    pub ystar: Option<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub tol: Option<f64>,
    pub eta: f64,
    pub seed: Option<u64>,
    pub grid: NestedGrid,
    pub hypothesis_grid: NestedGrid,
    pub witness_budget: usize,
    pub witness_eps: Vec<f64>,
    pub second_order_quasi: HypothesisPolicy,
    pub lhs: LhsMode,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            tol: None,
            eta: 0.25,
            seed: None,
            grid: NestedGrid::default(),
            hypothesis_grid: NestedGrid::light(),
            witness_budget: 10_000,
            witness_eps: (1..=6).map(|k| 10f64.powi(-k)).collect(),
            second_order_quasi: HypothesisPolicy::Record,
            lhs: LhsMode::Auto,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub space: MeasureSpace,
    pub vars: Vec<String>,
    pub map: RandomMap,
    /// Scalar integrands when every node has one (smooth scalar or
    /// maximum-function nodes).
    pub scalar: Option<Vec<ScalarIntegrand>>,
    pub points: Points,
    pub checks: Vec<CheckSpec>,
    /// Accepted verdicts per record id.
    pub expectations: BTreeMap<String, Vec<Verdict>>,
    pub settings: Settings,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("scenario");
        parse_scenario(&src, stem)
    }
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

#[derive(Debug, Clone)]
struct Token {
    text: String,
    col: usize,
}

/// Whitespace-separated tokens; double quotes group, `#` starts a comment.
fn tokenize(line: &str, lineno: usize) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    let mut quoted = false;
    let mut in_token = false;
    for (i, ch) in line.chars().enumerate() {
        if quoted {
            if ch == '"' {
                quoted = false;
            } else {
                cur.push(ch);
            }
            continue;
        }
        match ch {
            '#' => break,
            '"' => {
                if !in_token {
                    start = i;
                    in_token = true;
                }
                quoted = true;
            }
            c if c.is_whitespace() => {
                if in_token {
                    out.push(Token {
                        text: std::mem::take(&mut cur),
                        col: start + 1,
                    });
                    in_token = false;
                }
            }
            c => {
                if !in_token {
                    start = i;
                    in_token = true;
                }
                cur.push(c);
            }
        }
    }
    if quoted {
        return Err(perr(lineno, start + 1, "unterminated quote"));
    }
    if in_token {
        out.push(Token {
            text: cur,
            col: start + 1,
        });
    }
    Ok(out)
}

/// `key=value` arguments after the leading tokens.
struct Args {
    line: usize,
    map: BTreeMap<String, (String, usize)>,
}

impl Args {
    fn parse(tokens: &[Token], line: usize) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in tokens {
            let Some((k, v)) = t.text.split_once('=') else {
                return Err(perr(
                    line,
                    t.col,
                    format!("expected key=value, found '{}'", t.text),
                ));
            };
            if map
                .insert(k.to_string(), (v.to_string(), t.col + k.len() + 1))
                .is_some()
            {
                return Err(perr(line, t.col, format!("duplicate key '{k}'")));
            }
        }
        Ok(Args { line, map })
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn require(&mut self, key: &str, col: usize) -> Result<(String, usize)> {
        self.take(key)
            .ok_or_else(|| perr(self.line, col, format!("missing argument '{key}'")))
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().next() {
            Some((k, (_, col))) => Err(perr(
                self.line,
                col - k.len() - 1,
                format!("unknown argument '{k}'"),
            )),
            None => Ok(()),
        }
    }
}

fn number(s: &str, line: usize, col: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| {
        perr(
            line,
            col,
            format!("expected a number, found '{}'", s.trim()),
        )
    })?;
    if v.is_nan() {
        return Err(perr(line, col, "NaN is not allowed"));
    }
    Ok(v)
}

fn vector_of(s: &str, line: usize, col: usize) -> Result<Vector> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| number(p, line, col))
        .collect::<Result<_>>()?;
    Ok(Vector::from_vec(parts))
}

fn vector_list(s: &str, line: usize, col: usize) -> Result<Vec<Vector>> {
    s.split(';').map(|p| vector_of(p, line, col)).collect()
}

fn box_polytope(s: &str, line: usize, col: usize) -> Result<Polytope> {
    let mut sides = Vec::new();
    for part in s.split(',') {
        let (lo, hi) = part
            .split_once(':')
            .ok_or_else(|| perr(line, col, format!("expected lo:hi, found '{part}'")))?;
        let (lo, hi) = (number(lo, line, col)?, number(hi, line, col)?);
        if lo > hi {
            return Err(perr(line, col, format!("empty interval {lo}:{hi}")));
        }
        sides.push((lo, hi));
    }
    let corners: Vec<Vector> = cartesian(&vec![2; sides.len()])
        .into_iter()
        .map(|c| {
            Vector::from_fn(
                sides.len(),
                |i, _| if c[i] == 0 { sides[i].0 } else { sides[i].1 },
            )
        })
        .collect();
    convex_hull(&corners).map_err(|e| perr(line, col, e.to_string()))
}

fn window(s: &str, line: usize, col: usize) -> Result<(Vector, Vector)> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in s.split(',') {
        let (a, b) = part
            .split_once(':')
            .ok_or_else(|| perr(line, col, format!("expected lo:hi, found '{part}'")))?;
        lo.push(number(a, line, col)?);
        hi.push(number(b, line, col)?);
    }
    Ok((Vector::from_vec(lo), Vector::from_vec(hi)))
}

fn wrap<T>(r: Result<T>, line: usize, col: usize) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { .. } => e,
        other => perr(line, col, other.to_string()),
    })
}

/// Variable names `z` / `y` for one component, `z1..` / `y1..` otherwise.
fn indexed(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }
}

fn build_node(
    class: &Token,
    mut args: Args,
    vars: &[&str],
) -> Result<(NodeMap, Option<ScalarIntegrand>)> {
    let line = args.line;
    let n = vars.len();
    let out = match class.text.as_str() {
        "smooth" => {
            let (g, col) = args.require("g", class.col)?;
            let comps: Vec<&str> = g.split(';').collect();
            let f = wrap(ExprVector::parse(&comps, vars), line, col)?;
            let scalar = (comps.len() == 1)
                .then(|| ScalarIntegrand::smooth(Arc::new(f.components()[0].clone()) as ScalarFn));
            (NodeMap::Smooth { g: Arc::new(f) }, scalar)
        }
        "interval" => {
            let (lo, lcol) = args.require("lo", class.col)?;
            let (hi, hcol) = args.require("hi", class.col)?;
            wrap(Expr::parse(&lo, vars), line, lcol)?;
            let width = wrap(Expr::parse(&format!("({hi}) - ({lo})"), vars), line, hcol)?;
            let b = wrap(ExprVector::parse(&[lo.as_str()], vars), line, lcol)?;
            (
                NodeMap::AffineImage {
                    a: MatrixField::Expr {
                        rows: 1,
                        cols: 1,
                        entries: vec![width],
                        n,
                    },
                    b: Arc::new(b),
                    f: Polytope::interval(0.0, 1.0),
                },
                None,
            )
        }
        "affine" => {
            let (f, fcol) = args.require("f", class.col)?;
            let body = box_polytope(&f, line, fcol)?;
            let (b, bcol) = args.require("b", class.col)?;
            let bcomps: Vec<&str> = b.split(';').collect();
            let bmap = wrap(ExprVector::parse(&bcomps, vars), line, bcol)?;
            let (a, acol) = args.require("a", class.col)?;
            let rows: Vec<Vec<&str>> = a.split(';').map(|r| r.split(',').collect()).collect();
            let cols = rows[0].len();
            if rows.iter().any(|r| r.len() != cols) {
                return Err(perr(line, acol, "ragged matrix"));
            }
            if rows.len() != bcomps.len() || cols != body.dim() {
                return Err(perr(
                    line,
                    acol,
                    format!(
                        "matrix is {}x{}, expected {}x{}",
                        rows.len(),
                        cols,
                        bcomps.len(),
                        body.dim()
                    ),
                ));
            }
            let entries = rows
                .iter()
                .flatten()
                .map(|e| wrap(Expr::parse(e, vars), line, acol))
                .collect::<Result<Vec<_>>>()?;
            (
                NodeMap::AffineImage {
                    a: MatrixField::Expr {
                        rows: rows.len(),
                        cols,
                        entries,
                        n,
                    },
                    b: Arc::new(bmap),
                    f: body,
                },
                None,
            )
        }
        "max_affine" => {
            let (p, pcol) = args.require("pieces", class.col)?;
            let mut pieces = Vec::new();
            for piece in p.split(';') {
                let (a, b) = piece
                    .split_once(':')
                    .ok_or_else(|| perr(line, pcol, format!("expected a:b, found '{piece}'")))?;
                let a = vector_of(a, line, pcol)?;
                if a.len() != n {
                    return Err(perr(
                        line,
                        pcol,
                        format!("slope of dimension {}, expected {n}", a.len()),
                    ));
                }
                pieces.push((a, number(b, line, pcol)?));
            }
            let quad = match args.take("quad") {
                None => None,
                Some((q, qcol)) => {
                    let rows = vector_list(&q, line, qcol)?;
                    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                        return Err(perr(line, qcol, format!("quad must be {n}x{n}")));
                    }
                    Some(Matrix::from_fn(n, n, |i, j| rows[i][j]))
                }
            };
            let node = NodeMap::MaxAffine { pieces, quad };
            let scalar = ScalarIntegrand::from_max_affine(&node);
            (node, scalar)
        }
        "constraint" => {
            let (z, zcol) = args.require("z", class.col)?;
            let zcomps: Vec<&str> = z.split(';').collect();
            let g = wrap(ExprVector::parse(&zcomps, vars), line, zcol)?;
            let (ydim, ycol) = args.require("y", class.col)?;
            let ydim = number(&ydim, line, ycol)?;
            if ydim < 1.0 || ydim.fract() != 0.0 {
                return Err(perr(line, ycol, "y must be a positive integer dimension"));
            }
            let ydim = ydim as usize;
            let mut names = indexed("z", zcomps.len());
            names.extend(indexed("y", ydim));
            let names: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let (phi, pcol) = args.require("phi", class.col)?;
            let constraints = phi
                .split(';')
                .map(|s| {
                    wrap(ExprScalar::parse(s, &names), line, pcol).map(|e| Arc::new(e) as ScalarFn)
                })
                .collect::<Result<Vec<_>>>()?;
            let (w, wcol) = args.require("window", class.col)?;
            let win = window(&w, line, wcol)?;
            let system = wrap(
                ConstraintSystem::new(zcomps.len(), ydim, constraints, win),
                line,
                wcol,
            )?;
            (
                NodeMap::Constraint {
                    g: Arc::new(g),
                    system,
                },
                None,
            )
        }
        other => {
            return Err(perr(
                line,
                class.col,
                format!("unknown integrand class '{other}'"),
            ))
        }
    };
    args.finish()?;
    Ok(out)
}

fn parse_levels(s: &str, line: usize, col: usize) -> Result<Vec<i32>> {
    let bad = || perr(line, col, format!("expected levels as a..b, found '{s}'"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b): (i32, i32) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    if a > b || a < 0 {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

fn parse_count(s: &str, line: usize, col: usize) -> Result<usize> {
    s.trim().parse().map_err(|_| {
        perr(
            line,
            col,
            format!("expected a non-negative integer, found '{s}'"),
        )
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Header,
    Space,
    Integrand,
    Points,
    Checks,
    Tolerances,
}

/// Splits `key = value` (or `key value`) lines.
fn key_value(line: &str, lineno: usize) -> Result<(String, String, usize)> {
    let body = line.split('#').next().unwrap_or("");
    let indent = body.len() - body.trim_start().len();
    let body = body.trim();
    let (k, v) = match body.split_once('=') {
        Some((k, v)) => (k.trim(), v.trim()),
        None => {
            return Err(perr(
                lineno,
                indent + 1,
                format!("expected key = value, found '{body}'"),
            ))
        }
    };
    let vcol = line.find(v).map(|i| i + 1).unwrap_or(indent + 1);
    Ok((k.to_string(), v.to_string(), vcol))
}

pub fn parse_scenario(src: &str, default_name: &str) -> Result<Scenario> {
    let mut section = Section::Header;
    let mut seen_sections = Vec::new();
    let mut name = default_name.to_string();
    let mut version: Option<u32> = None;
    let mut nodes: Vec<MeasureNode> = Vec::new();
    let mut vars: Vec<String> = vec!["x".into()];
    let mut vars_line: Option<usize> = None;
    // (line, target token, class token, args)
    let mut integrand_lines: Vec<(usize, Token, Token, Vec<Token>)> = Vec::new();
    let mut points = Points::default();
    let mut x_seen = false;
    let mut checks = Vec::new();
    let mut expectations: BTreeMap<String, Vec<Verdict>> = BTreeMap::new();
    let mut settings = Settings::default();

    for (i, raw) in src.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = raw.split('#').next().unwrap_or("").trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let col = raw.find('[').unwrap_or(0) + 1;
            let Some(sec) = rest.strip_suffix(']') else {
                return Err(perr(lineno, col, "unterminated section header"));
            };
            section = match sec.trim() {
                "space" => Section::Space,
                "integrand" => Section::Integrand,
                "points" => Section::Points,
                "checks" => Section::Checks,
                "tolerances" => Section::Tolerances,
                other => return Err(perr(lineno, col, format!("unknown section '{other}'"))),
            };
            if seen_sections.contains(&section) {
                return Err(perr(
                    lineno,
                    col,
                    format!("duplicate section [{}]", sec.trim()),
                ));
            }
            seen_sections.push(section);
            continue;
        }
        match section {
            Section::Header => {
                let (k, v, col) = key_value(raw, lineno)?;
                match k.as_str() {
                    "version" => {
                        let ver: u32 = v
                            .parse()
                            .map_err(|_| perr(lineno, col, format!("bad version '{v}'")))?;
                        if ver != SCHEMA_VERSION {
                            return Err(perr(
                                lineno,
                                col,
                                format!("unsupported schema version {ver} (supported: {SCHEMA_VERSION})"),
                            ));
                        }
                        version = Some(ver);
                    }
                    "name" => name = v,
                    _ => return Err(perr(lineno, 1, format!("unknown header key '{k}'"))),
                }
            }
            Section::Space => {
                let toks = tokenize(raw, lineno)?;
                match toks[0].text.as_str() {
                    "node" => {
                        let id = toks
                            .get(1)
                            .filter(|t| !t.text.contains('='))
                            .ok_or_else(|| perr(lineno, toks[0].col, "node needs an id"))?;
                        let mut args = Args::parse(&toks[2..], lineno)?;
                        let (w, wcol) = args.require("weight", id.col)?;
                        let weight = number(&w, lineno, wcol)?;
                        let kind = match args.take("kind") {
                            None => NodeKind::Atom,
                            Some((k, kcol)) => node_kind(&k, lineno, kcol)?,
                        };
                        args.finish()?;
                        nodes.push(MeasureNode::new(id.text.clone(), weight, kind));
                    }
                    "uniform" => {
                        let mut args = Args::parse(&toks[1..], lineno)?;
                        let (c, ccol) = args.require("count", toks[0].col)?;
                        let count = parse_count(&c, lineno, ccol)?;
                        let mass = match args.take("mass") {
                            Some((m, mcol)) => number(&m, lineno, mcol)?,
                            None => 1.0,
                        };
                        let kind = match args.take("kind") {
                            None => NodeKind::NonatomicSample,
                            Some((k, kcol)) => node_kind(&k, lineno, kcol)?,
                        };
                        let prefix = args
                            .take("prefix")
                            .map(|p| p.0)
                            .unwrap_or_else(|| "t".into());
                        args.finish()?;
                        if count == 0 {
                            return Err(perr(lineno, ccol, "count must be positive"));
                        }
                        for k in 1..=count {
                            nodes.push(MeasureNode::new(
                                format!("{prefix}{k}"),
                                mass / count as f64,
                                kind,
                            ));
                        }
                    }
                    other => {
                        return Err(perr(
                            lineno,
                            toks[0].col,
                            format!("unknown space entry '{other}'"),
                        ))
                    }
                }
            }
            Section::Integrand => {
                let toks = tokenize(raw, lineno)?;
                if toks[0].text == "vars" {
                    let list = toks
                        .get(1)
                        .ok_or_else(|| perr(lineno, toks[0].col, "vars needs a list"))?;
                    vars = list.text.split(',').map(|s| s.trim().to_string()).collect();
                    if vars.iter().any(|v| v.is_empty()) || toks.len() > 2 {
                        return Err(perr(
                            lineno,
                            list.col,
                            "expected comma-separated variable names",
                        ));
                    }
                    if !integrand_lines.is_empty() {
                        return Err(perr(
                            lineno,
                            toks[0].col,
                            "vars must precede integrand lines",
                        ));
                    }
                    vars_line = Some(lineno);
                    continue;
                }
                if toks.len() < 2 {
                    return Err(perr(
                        lineno,
                        toks[0].col,
                        "expected '<node|*> <class> key=value ...'",
                    ));
                }
                integrand_lines.push((
                    lineno,
                    toks[0].clone(),
                    toks[1].clone(),
                    toks[2..].to_vec(),
                ));
            }
            Section::Points => {
                let (k, v, col) = key_value(raw, lineno)?;
                match k.as_str() {
                    "x" => {
                        points.x = vector_of(&v, lineno, col)?;
                        x_seen = true;
                    }
                    "y" => points.y = Some(vector_of(&v, lineno, col)?),
                    "xstar" => points.xstar = Some(vector_of(&v, lineno, col)?),
                    "ystar" => points.ystar = Some(vector_of(&v, lineno, col)?),
                    "ystar_grid" => points.ystar_grid = Some(vector_list(&v, lineno, col)?),
                    "selection" => {
                        points.selection = Some(match v.strip_prefix('*') {
                            // Same value at every node.
                            Some(rest) => {
                                if nodes.is_empty() {
                                    return Err(perr(
                                        lineno,
                                        col,
                                        "'selection = *' needs the [space] section first",
                                    ));
                                }
                                vec![vector_of(rest, lineno, col)?; nodes.len()]
                            }
                            None => vector_list(&v, lineno, col)?,
                        })
                    }
                    _ => return Err(perr(lineno, 1, format!("unknown point '{k}'"))),
                }
            }
            Section::Checks => {
                let toks = tokenize(raw, lineno)?;
                let head = toks[0].text.trim_end_matches(':');
                match head {
                    "rule" => {
                        let r = toks
                            .get(1)
                            .ok_or_else(|| perr(lineno, toks[0].col, "rule needs an id"))?;
                        let rule = RuleId::from_str(&r.text).map_err(|e| {
                            perr(
                                lineno,
                                r.col,
                                match e {
                                    Error::InvalidInput(m) => m,
                                    o => o.to_string(),
                                },
                            )
                        })?;
                        let mut args = Args::parse(&toks[2..], lineno)?;
                        let family = match args.take("family") {
                            None => None,
                            Some((f, fcol)) => Some(match f.as_str() {
                                "subdifferential" => WitnessFamily::Subdifferential,
                                "coderivative" => WitnessFamily::Coderivative,
                                _ => {
                                    return Err(perr(
                                        lineno,
                                        fcol,
                                        format!("unknown witness family '{f}'"),
                                    ))
                                }
                            }),
                        };
                        args.finish()?;
                        if family.is_some() && rule != RuleId::SequentialWitness {
                            return Err(perr(
                                lineno,
                                r.col,
                                "family applies to sequential_witness only",
                            ));
                        }
                        checks.push(CheckSpec::Rule { rule, family });
                    }
                    "check" => {
                        let p = toks
                            .get(1)
                            .ok_or_else(|| perr(lineno, toks[0].col, "check needs a property"))?;
                        let prop = match p.text.as_str() {
                            "local_lipschitz" => LipschitzProperty::LocalLipschitz,
                            "quasi_lipschitz" => LipschitzProperty::QuasiLipschitz,
                            "lipschitz_like" => LipschitzProperty::LipschitzLike,
                            other => {
                                return Err(perr(lineno, p.col, format!("unknown check '{other}'")))
                            }
                        };
                        if toks.len() > 2 {
                            return Err(perr(lineno, toks[2].col, "unexpected token"));
                        }
                        checks.push(CheckSpec::Lipschitz(prop));
                    }
                    "expect" => {
                        if toks.len() < 2 {
                            return Err(perr(lineno, toks[0].col, "expect needs id=verdict"));
                        }
                        for t in &toks[1..] {
                            let (id, vs) = t
                                .text
                                .split_once('=')
                                .ok_or_else(|| perr(lineno, t.col, "expected id=verdict"))?;
                            let verdicts = vs
                                .split('|')
                                .map(|v| {
                                    Verdict::from_str(v)
                                        .map_err(|e| perr(lineno, t.col + id.len() + 1, e))
                                })
                                .collect::<Result<Vec<_>>>()?;
                            expectations.insert(id.to_string(), verdicts);
                        }
                    }
                    other => {
                        return Err(perr(
                            lineno,
                            toks[0].col,
                            format!("unknown checks entry '{other}'"),
                        ))
                    }
                }
            }
            Section::Tolerances => {
                let (k, v, col) = key_value(raw, lineno)?;
                match k.as_str() {
                    "tol" => settings.tol = Some(number(&v, lineno, col)?),
                    "eta" => {
                        settings.eta = number(&v, lineno, col)?;
                        if settings.eta <= 0.0 {
                            return Err(perr(lineno, col, "eta must be positive"));
                        }
                    }
                    "seed" => {
                        settings.seed = Some(
                            v.parse()
                                .map_err(|_| perr(lineno, col, format!("bad seed '{v}'")))?,
                        )
                    }
                    "levels" => settings.grid.levels = parse_levels(&v, lineno, col)?,
                    "half_width" => settings.grid.half_width = parse_count(&v, lineno, col)? as i64,
                    "varying" => settings.grid.varying = parse_count(&v, lineno, col)?,
                    "hypothesis_levels" => {
                        settings.hypothesis_grid.levels = parse_levels(&v, lineno, col)?
                    }
                    "witness_budget" => settings.witness_budget = parse_count(&v, lineno, col)?,
                    "witness_eps" => {
                        settings.witness_eps = vector_of(&v, lineno, col)?.iter().copied().collect()
                    }
                    "second_order_quasi" => {
                        settings.second_order_quasi = match v.as_str() {
                            "record" => HypothesisPolicy::Record,
                            "enforce" => HypothesisPolicy::Enforce,
                            _ => {
                                return Err(perr(
                                    lineno,
                                    col,
                                    format!("expected record|enforce, found '{v}'"),
                                ))
                            }
                        }
                    }
                    "lhs" => {
                        settings.lhs = match v.as_str() {
                            "auto" => LhsMode::Auto,
                            "oracle" => LhsMode::Oracle,
                            _ => {
                                return Err(perr(
                                    lineno,
                                    col,
                                    format!("expected auto|oracle, found '{v}'"),
                                ))
                            }
                        }
                    }
                    _ => return Err(perr(lineno, 1, format!("unknown tolerance '{k}'"))),
                }
            }
        }
    }

    let end = src.lines().count().max(1);
    if version.is_none() {
        return Err(perr(1, 1, "missing 'version = 1' header"));
    }
    if nodes.is_empty() {
        return Err(perr(end, 1, "missing [space] section or nodes"));
    }
    let space = MeasureSpace::new(nodes).map_err(|e| perr(end, 1, e.to_string()))?;

    // Integrands: every node covered exactly once; '*' fills the rest.
    let var_refs: Vec<&str> = vars.iter().map(|s| s.as_str()).collect();
    let mut per_node: Vec<Option<(NodeMap, Option<ScalarIntegrand>)>> = vec![None; space.len()];
    let mut fallback: Option<(usize, (NodeMap, Option<ScalarIntegrand>))> = None;
    for (lineno, target, class, rest) in &integrand_lines {
        let args = Args::parse(rest, *lineno)?;
        let built = build_node(class, args, &var_refs)?;
        if target.text == "*" {
            if fallback.is_some() {
                return Err(perr(*lineno, target.col, "more than one '*' integrand"));
            }
            fallback = Some((*lineno, built));
        } else {
            let idx = space.index_of(&target.text).ok_or_else(|| {
                perr(
                    *lineno,
                    target.col,
                    format!("unknown node id '{}'", target.text),
                )
            })?;
            if per_node[idx].is_some() {
                return Err(perr(
                    *lineno,
                    target.col,
                    format!("node '{}' declared twice", target.text),
                ));
            }
            per_node[idx] = Some(built);
        }
    }
    let mut node_maps = Vec::with_capacity(space.len());
    let mut scalars = Vec::with_capacity(space.len());
    for (i, slot) in per_node.into_iter().enumerate() {
        let (node, scalar) = match slot.or_else(|| fallback.as_ref().map(|f| f.1.clone())) {
            Some(b) => b,
            None => {
                return Err(perr(
                    vars_line.unwrap_or(end),
                    1,
                    format!("no integrand for node '{}'", space.nodes()[i].id),
                ))
            }
        };
        node_maps.push(node);
        scalars.push(scalar);
    }
    let map = RandomMap::new(node_maps).map_err(|e| perr(end, 1, e.to_string()))?;
    let scalar: Option<Vec<ScalarIntegrand>> = scalars.into_iter().collect();

    if !x_seen {
        return Err(perr(end, 1, "missing base point 'x' in [points]"));
    }
    if points.x.len() != map.n {
        return Err(perr(
            end,
            1,
            format!(
                "x has dimension {}, integrands expect {}",
                points.x.len(),
                map.n
            ),
        ));
    }
    if let Some(y) = &points.y {
        if y.len() != map.m {
            return Err(perr(
                end,
                1,
                format!(
                    "y has dimension {}, values live in dimension {}",
                    y.len(),
                    map.m
                ),
            ));
        }
    }
    if let Some(sel) = &points.selection {
        if sel.len() != space.len() {
            return Err(perr(
                end,
                1,
                format!(
                    "selection has {} entries for {} nodes",
                    sel.len(),
                    space.len()
                ),
            ));
        }
    }
    if !checks.is_empty() && settings.seed.is_none() {
        return Err(perr(
            end,
            1,
            "a seed is mandatory when checks are requested ('seed = <int>' in [tolerances])",
        ));
    }
    for c in &checks {
        let needs_y = matches!(
            c,
            CheckSpec::Rule { rule, .. } if !matches!(rule, RuleId::FirstOrderSubdiff | RuleId::FirstOrderEquality | RuleId::SequentialWitness)
        ) || matches!(
            c,
            CheckSpec::Lipschitz(
                LipschitzProperty::LipschitzLike | LipschitzProperty::QuasiLipschitz
            )
        );
        if needs_y && points.y.is_none() && points.selection.is_none() {
            return Err(perr(
                end,
                1,
                format!("{} needs 'y' or 'selection' in [points]", c.id()),
            ));
        }
        if let CheckSpec::Rule {
            rule: RuleId::SequentialWitness,
            family,
        } = c
        {
            if points.xstar.is_none() {
                return Err(perr(end, 1, "sequential_witness needs 'xstar' in [points]"));
            }
            if *family == Some(WitnessFamily::Coderivative)
                && (points.ystar.is_none() || points.selection.is_none())
            {
                return Err(perr(
                    end,
                    1,
                    "coderivative witnesses need 'ystar' and 'selection'",
                ));
            }
        }
    }
    for id in expectations.keys() {
        if !checks.iter().any(|c| c.id() == id) {
            return Err(perr(
                end,
                1,
                format!("expectation for '{id}' which is not requested"),
            ));
        }
    }

    Ok(Scenario {
        name,
        space,
        vars,
        map,
        scalar,
        points,
        checks,
        expectations,
        settings,
    })
}

fn node_kind(s: &str, line: usize, col: usize) -> Result<NodeKind> {
    match s {
        "atom" => Ok(NodeKind::Atom),
        "nonatomic" => Ok(NodeKind::NonatomicSample),
        _ => Err(perr(
            line,
            col,
            format!("expected atom|nonatomic, found '{s}'"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMOOTH: &str = "version = 1\nname = demo\n[space]\nnode t1 weight=1\nnode t2 weight=1 kind=atom\n[integrand]\nvars x1,x2\nt1 smooth g=2*x1;x1+x2\nt2 smooth g=3*x2;x1\n[points]\nx = 0.5, 0.2\ny = 1.9, 1.2\n[checks]\nrule equality_case\ncheck local_lipschitz\nexpect equality_case=holds\n[tolerances]\nseed = 7\n";

    #[test]
    fn parses_smooth_instance() {
        let s = parse_scenario(SMOOTH, "x").unwrap();
        assert_eq!(s.name, "demo");
        assert_eq!(s.space.len(), 2);
        assert_eq!((s.map.n, s.map.m), (2, 2));
        assert_eq!(s.checks.len(), 2);
        assert_eq!(s.expectations["equality_case"], vec![Verdict::Holds]);
        assert_eq!(s.settings.seed, Some(7));
        assert!(s.scalar.is_none());
    }

    #[test]
    fn star_fills_uniform_space() {
        let src = "version = 1\n[space]\nuniform count=4 kind=nonatomic\n[integrand]\n* interval lo=0 hi=\"sqrt(abs(x)) + 1\"\n[points]\nx = 0\ny = 0\nselection = * 0\n";
        let s = parse_scenario(src, "sqrt").unwrap();
        assert_eq!(s.name, "sqrt");
        assert_eq!(s.map.nodes.len(), 4);
        assert_eq!(s.points.selection.as_ref().unwrap().len(), 4);
        let v = s.map.nodes[0]
            .value(&crate::linalg::vector(&[0.25]))
            .unwrap()
            .unwrap();
        assert_eq!(v.bounds_1d(), (0.0, 1.5));
    }

    #[test]
    fn max_affine_gives_scalar_integrands() {
        let src = "version = 1\n[space]\nnode a weight=1\nnode b weight=1\n[integrand]\na max_affine pieces=1:0;-1:0 quad=1\nb max_affine pieces=1:0;-1:0\n[points]\nx = 0\n";
        let s = parse_scenario(src, "m").unwrap();
        assert!(s.map.is_max_affine());
        assert_eq!(s.scalar.unwrap().len(), 2);
    }

    fn err_at(src: &str) -> (usize, usize, String) {
        match parse_scenario(src, "e") {
            Err(Error::Parse {
                line,
                column,
                message,
            }) => (line, column, message),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_positions() {
        let (l, c, m) = err_at(&SMOOTH.replace("rule equality_case", "rule bogus_rule"));
        assert_eq!((l, c), (14, 6));
        assert!(m.contains("bogus_rule"));
        let (l, c, _) = err_at(&SMOOTH.replace("t2 smooth", "t9 smooth"));
        assert_eq!((l, c), (9, 1));
        let (l, _, m) = err_at(&SMOOTH.replace("version = 1", "version = 2"));
        assert_eq!(l, 1);
        assert!(m.contains("unsupported schema version"));
        let (_, _, m) = err_at(&SMOOTH.replace("seed = 7", ""));
        assert!(m.contains("seed"));
        let (l, c, _) = err_at(&SMOOTH.replace("g=2*x1;x1+x2", "g=2*x1;x1+"));
        assert_eq!((l, c), (8, 13));
        let (l, _, m) = err_at(&SMOOTH.replace("[tolerances]", "[tolerance]"));
        assert_eq!(l, 17);
        assert!(m.contains("unknown section"));
    }

    #[test]
    fn tokenizer_quotes_and_comments() {
        let t = tokenize("a \"b c\" d=\"e f\" # g", 1).unwrap();
        let texts: Vec<&str> = t.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["a", "b c", "d=e f"]);
        assert_eq!(t[1].col, 3);
        assert!(tokenize("a \"b", 3).is_err());
    }
}
