//! LP-file export/import and an external-process MILP backend.
//!
//! Problems are written in the usual `Maximize / Subject To / Bounds /
//! Generals / Binaries / End` layout with positional variable names
//! `x0, x1, ...`. Solutions are exchanged as plain text:
//!
//! ```text
//! status optimal
//! objective 12.5
//! x0 1
//! x1 0
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cforge_core::domain::{Cmp, LinearRow};
use cforge_core::solver::{MilpBackend, VarKind};
use cforge_core::{BackendKind, Clock, MilpProblem, SolveOutcome, SolveStatus, SolverError};

use crate::error::{Error, Result};

const FEASIBILITY_TOL: f64 = 1e-6;

pub fn var_name(i: usize) -> String {
    format!("x{i}")
}

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

fn write_expr(out: &mut String, terms: &[(usize, f64)], constant: Option<f64>) {
    let mut first = true;
    for &(j, c) in terms {
        if first {
            if c < 0.0 {
                let _ = write!(out, "- {} {}", fmt_num(-c), var_name(j));
            } else {
                let _ = write!(out, "{} {}", fmt_num(c), var_name(j));
            }
            first = false;
        } else if c < 0.0 {
            let _ = write!(out, " - {} {}", fmt_num(-c), var_name(j));
        } else {
            let _ = write!(out, " + {} {}", fmt_num(c), var_name(j));
        }
    }
    match constant {
        Some(k) if k != 0.0 || first => {
            if first {
                out.push_str(&fmt_num(k));
            } else if k < 0.0 {
                let _ = write!(out, " - {}", fmt_num(-k));
            } else {
                let _ = write!(out, " + {}", fmt_num(k));
            }
        }
        _ => {}
    }
}

/// Renders `p` as an LP file. Every variable appears in the objective (with
/// coefficient 0 if needed) so that a parser assigning indices by first
/// appearance recovers the original order.
pub fn write_lp(p: &MilpProblem) -> String {
    let mut out = String::new();
    out.push_str("\\ written by cforge\n");
    for (i, v) in p.vars.iter().enumerate() {
        let _ = writeln!(out, "\\ {} : {}", var_name(i), v.name);
    }
    out.push_str("Maximize\n obj: ");
    let dense = p.dense_objective();
    let terms: Vec<(usize, f64)> = dense.iter().copied().enumerate().collect();
    write_expr(&mut out, &terms, Some(p.objective_constant));
    out.push_str("\nSubject To\n");
    for (i, row) in p.constraints.iter().enumerate() {
        let _ = write!(out, " c{i}: ");
        if row.terms.is_empty() {
            out.push('0');
        } else {
            write_expr(&mut out, &row.terms, None);
        }
        let _ = writeln!(out, " {} {}", row.cmp.symbol(), fmt_num(row.rhs));
    }
    out.push_str("Bounds\n");
    for (i, v) in p.vars.iter().enumerate() {
        if v.kind == VarKind::Binary && v.lo == 0.0 && v.hi == 1.0 {
            continue;
        }
        let _ = writeln!(out, " {} <= {} <= {}", fmt_num(v.lo), var_name(i), fmt_num(v.hi));
    }
    let generals: Vec<String> = (0..p.vars.len())
        .filter(|&i| p.vars[i].kind == VarKind::Integer)
        .map(var_name)
        .collect();
    if !generals.is_empty() {
        let _ = writeln!(out, "Generals\n {}", generals.join(" "));
    }
    let binaries: Vec<String> = (0..p.vars.len())
        .filter(|&i| p.vars[i].kind == VarKind::Binary)
        .map(var_name)
        .collect();
    if !binaries.is_empty() {
        let _ = writeln!(out, "Binaries\n {}", binaries.join(" "));
    }
    out.push_str("End\n");
    out
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Colon,
    Cmp(Cmp),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Generals,
    Binaries,
    End,
}

fn section_header(line: &str) -> Option<(Section, bool)> {
    let l = line.trim().to_ascii_lowercase();
    let l = l.as_str();
    match l {
        "maximize" | "maximise" | "maximum" | "max" => Some((Section::Objective, false)),
        "minimize" | "minimise" | "minimum" | "min" => Some((Section::Objective, true)),
        "subject to" | "such that" | "st" | "s.t." | "st." => Some((Section::Constraints, false)),
        "bounds" | "bound" => Some((Section::Bounds, false)),
        "generals" | "general" | "gen" | "integers" => Some((Section::Generals, false)),
        "binaries" | "binary" | "bin" => Some((Section::Binaries, false)),
        "end" => Some((Section::End, false)),
        _ => None,
    }
}

fn tokenize(s: &str) -> std::result::Result<Vec<Tok>, String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '+' {
            out.push(Tok::Plus);
            i += 1;
        } else if c == '-' {
            out.push(Tok::Minus);
            i += 1;
        } else if c == ':' {
            out.push(Tok::Colon);
            i += 1;
        } else if c == '<' || c == '>' || c == '=' {
            let next = chars.get(i + 1).copied();
            let (cmp, len) = match (c, next) {
                ('<', Some('=')) | ('=', Some('<')) => (Cmp::Le, 2),
                ('>', Some('=')) | ('=', Some('>')) => (Cmp::Ge, 2),
                ('<', _) => (Cmp::Le, 1),
                ('>', _) => (Cmp::Ge, 1),
                _ => (Cmp::Eq, 1),
            };
            out.push(Tok::Cmp(cmp));
            i += len;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| format!("bad number `{text}`"))?;
            out.push(Tok::Num(v));
        } else {
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && !"+-:<>=".contains(chars[i]) {
                i += 1;
            }
            let name: String = chars[start..i].iter().collect();
            match name.to_ascii_lowercase().as_str() {
                "inf" | "infinity" => out.push(Tok::Num(f64::INFINITY)),
                _ => out.push(Tok::Name(name)),
            }
        }
    }
    Ok(out)
}

struct Builder {
    p: MilpProblem,
    index: std::collections::HashMap<String, usize>,
}

impl Builder {
    fn var(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.p.add_var(name, VarKind::Continuous, 0.0, f64::INFINITY);
        self.index.insert(name.to_string(), i);
        i
    }
}

/// Parses `[+|-] [coef] [name]` terms starting at `pos` until a comparator or
/// the end of the tokens.
fn parse_terms(
    toks: &[Tok],
    pos: &mut usize,
    b: &mut Builder,
) -> std::result::Result<(Vec<(usize, f64)>, f64), String> {
    let mut terms: Vec<(usize, f64)> = Vec::new();
    let mut constant = 0.0;
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    while *pos < toks.len() {
        match &toks[*pos] {
            Tok::Plus => {}
            Tok::Minus => sign = -sign,
            Tok::Num(v) => {
                if let Some(c) = coef {
                    constant += sign * c;
                    sign = 1.0;
                }
                coef = Some(*v);
            }
            Tok::Name(n) => {
                // A name followed by a colon starts the next constraint.
                if matches!(toks.get(*pos + 1), Some(Tok::Colon)) {
                    break;
                }
                let j = b.var(n);
                terms.push((j, sign * coef.unwrap_or(1.0)));
                sign = 1.0;
                coef = None;
            }
            Tok::Cmp(_) | Tok::Colon => break,
        }
        *pos += 1;
    }
    if let Some(c) = coef {
        constant += sign * c;
    }
    Ok((terms, constant))
}

fn merge_terms(terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (j, c) in terms {
        match out.iter_mut().find(|(k, _)| *k == j) {
            Some(t) => t.1 += c,
            None => out.push((j, c)),
        }
    }
    out
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses LP text. Variables are indexed by first appearance; `path` is used
/// in error messages only.
pub fn parse_lp(text: &str, path: &Path) -> Result<MilpProblem> {
    let mut section = Section::Preamble;
    let mut minimize = false;
    let mut bodies: Vec<(Section, usize, String)> = Vec::new();
    let mut labels: std::collections::HashMap<String, String> = Default::default();
    for (ln, raw) in text.lines().enumerate() {
        if let Some((var, label)) = raw.trim().strip_prefix('\\').and_then(|c| c.split_once(" : ")) {
            labels.insert(var.trim().to_string(), label.trim().to_string());
        }
        let line = raw.split('\\').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        if let Some((s, min)) = section_header(line) {
            section = s;
            if s == Section::Objective {
                minimize = min;
            }
            continue;
        }
        match section {
            Section::Preamble => return Err(parse_err(path, ln + 1, "content before the objective section")),
            Section::End => return Err(parse_err(path, ln + 1, "content after End")),
            s => bodies.push((s, ln + 1, line.to_string())),
        }
    }

    let mut b = Builder {
        p: MilpProblem::new(),
        index: Default::default(),
    };

    let join = |s: Section| -> (usize, String) {
        let first = bodies.iter().find(|(t, _, _)| *t == s).map_or(0, |x| x.1);
        let text = bodies
            .iter()
            .filter(|(t, _, _)| *t == s)
            .map(|(_, _, l)| l.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        (first, text)
    };

    let (ln, obj) = join(Section::Objective);
    let toks = tokenize(&obj).map_err(|m| parse_err(path, ln, m))?;
    let mut pos = 0;
    if let (Some(Tok::Name(_)), Some(Tok::Colon)) = (toks.first(), toks.get(1)) {
        pos = 2;
    }
    let (terms, constant) = parse_terms(&toks, &mut pos, &mut b).map_err(|m| parse_err(path, ln, m))?;
    if pos != toks.len() {
        return Err(parse_err(path, ln, "unexpected token in objective"));
    }
    let s = if minimize { -1.0 } else { 1.0 };
    b.p.objective = merge_terms(terms)
        .into_iter()
        .filter(|&(_, c)| c != 0.0)
        .map(|(j, c)| (j, s * c))
        .collect();
    b.p.objective_constant = s * constant;

    let (ln, cons) = join(Section::Constraints);
    let toks = tokenize(&cons).map_err(|m| parse_err(path, ln, m))?;
    let mut pos = 0;
    while pos < toks.len() {
        if let (Some(Tok::Name(_)), Some(Tok::Colon)) = (toks.get(pos), toks.get(pos + 1)) {
            pos += 2;
        }
        let (terms, constant) = parse_terms(&toks, &mut pos, &mut b).map_err(|m| parse_err(path, ln, m))?;
        let Some(Tok::Cmp(cmp)) = toks.get(pos) else {
            return Err(parse_err(path, ln, "constraint without comparator"));
        };
        let cmp = *cmp;
        pos += 1;
        let mut sign = 1.0;
        while let Some(Tok::Minus | Tok::Plus) = toks.get(pos) {
            if toks[pos] == Tok::Minus {
                sign = -sign;
            }
            pos += 1;
        }
        let Some(Tok::Num(rhs)) = toks.get(pos) else {
            return Err(parse_err(path, ln, "constraint without numeric right-hand side"));
        };
        pos += 1;
        b.p.constraints
            .push(LinearRow::new(merge_terms(terms), cmp, sign * rhs - constant));
    }

    for (sec, ln, line) in &bodies {
        match sec {
            Section::Bounds => parse_bound(line, *ln, path, &mut b)?,
            Section::Generals | Section::Binaries => {
                for name in line.split_whitespace() {
                    let j = b.var(name);
                    let v = &mut b.p.vars[j];
                    if *sec == Section::Binaries {
                        v.kind = VarKind::Binary;
                        v.lo = v.lo.max(0.0);
                        v.hi = v.hi.min(1.0);
                    } else {
                        v.kind = VarKind::Integer;
                    }
                }
            }
            _ => {}
        }
    }
    for v in &mut b.p.vars {
        if let Some(label) = labels.get(&v.name) {
            v.name = label.clone();
        }
    }
    Ok(b.p)
}

fn parse_bound(line: &str, ln: usize, path: &Path, b: &mut Builder) -> Result<()> {
    let toks = tokenize(line).map_err(|m| parse_err(path, ln, m))?;
    // Fold unary signs into numbers.
    let mut t: Vec<Tok> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        match (&toks[i], toks.get(i + 1)) {
            (Tok::Minus, Some(Tok::Num(v))) => {
                t.push(Tok::Num(-v));
                i += 2;
            }
            (Tok::Plus, Some(Tok::Num(v))) => {
                t.push(Tok::Num(*v));
                i += 2;
            }
            (tok, _) => {
                t.push(tok.clone());
                i += 1;
            }
        }
    }
    let bad = || parse_err(path, ln, format!("unrecognized bound `{}`", line.trim()));
    match t.as_slice() {
        [Tok::Num(lo), Tok::Cmp(Cmp::Le), Tok::Name(n), Tok::Cmp(Cmp::Le), Tok::Num(hi)] => {
            let j = b.var(n);
            b.p.vars[j].lo = *lo;
            b.p.vars[j].hi = *hi;
        }
        [Tok::Name(n), Tok::Cmp(cmp), Tok::Num(v)] | [Tok::Num(v), Tok::Cmp(cmp), Tok::Name(n)] => {
            let name_first = matches!(t[0], Tok::Name(_));
            let j = b.var(n);
            let var = &mut b.p.vars[j];
            match (cmp, name_first) {
                (Cmp::Eq, _) => {
                    var.lo = *v;
                    var.hi = *v;
                }
                (Cmp::Le, true) | (Cmp::Ge, false) => var.hi = *v,
                (Cmp::Ge, true) | (Cmp::Le, false) => var.lo = *v,
            }
        }
        [Tok::Name(n), Tok::Name(free)] if free.eq_ignore_ascii_case("free") => {
            let j = b.var(n);
            b.p.vars[j].lo = f64::NEG_INFINITY;
            b.p.vars[j].hi = f64::INFINITY;
        }
        _ => return Err(bad()),
    }
    Ok(())
}

pub fn read_lp(path: &Path) -> Result<MilpProblem> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lp(&text, path)
}

/// Renders a solve outcome in the solution exchange format.
pub fn write_solution(out: &SolveOutcome) -> String {
    let status = match (out.status, out.timed_out) {
        (SolveStatus::Infeasible, true) => "timeout",
        (s, _) => match s {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleCutoff => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
        },
    };
    let mut s = format!("status {status}\n");
    if let (Some(obj), Some(x)) = (out.objective, &out.assignment) {
        let _ = writeln!(s, "objective {obj}");
        for (i, v) in x.iter().enumerate() {
            let _ = writeln!(s, "{} {v}", var_name(i));
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedSolution {
    pub status: SolveStatus,
    pub timed_out: bool,
    pub objective: Option<f64>,
    pub values: Vec<(String, f64)>,
}

pub fn parse_solution(text: &str) -> std::result::Result<ParsedSolution, String> {
    let mut status = None;
    let mut timed_out = false;
    let mut objective = None;
    let mut values = Vec::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        let (Some(key), Some(val)) = (it.next(), it.next()) else {
            continue;
        };
        match key {
            "status" => {
                status = Some(match val {
                    "optimal" => SolveStatus::Optimal,
                    "feasible" => {
                        timed_out = true;
                        SolveStatus::FeasibleCutoff
                    }
                    "infeasible" => SolveStatus::Infeasible,
                    "unbounded" => SolveStatus::Unbounded,
                    "timeout" => {
                        timed_out = true;
                        SolveStatus::Infeasible
                    }
                    other => return Err(format!("unknown status `{other}`")),
                })
            }
            "objective" => objective = Some(val.parse::<f64>().map_err(|e| e.to_string())?),
            name => values.push((name.to_string(), val.parse::<f64>().map_err(|e| e.to_string())?)),
        }
    }
    Ok(ParsedSolution {
        status: status.ok_or("solution has no status line")?,
        timed_out,
        objective,
        values,
    })
}

/// Runs an external command per problem. Arguments may contain `{lp}`,
/// `{sol}` and `{timeout}` placeholders.
#[derive(Clone, Debug)]
pub struct ExternalBackend {
    pub program: String,
    pub args: Vec<String>,
    /// Extra seconds granted beyond the problem's budget before the process
    /// is killed.
    pub grace_s: f64,
}

impl ExternalBackend {
    pub fn new(command: &[String]) -> std::result::Result<Self, SolverError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| SolverError::BackendUnavailable("empty external command".to_string()))?;
        Ok(ExternalBackend {
            program: program.clone(),
            args: args.to_vec(),
            grace_s: 5.0,
        })
    }

    fn run(&self, p: &MilpProblem) -> std::result::Result<(String, bool), SolverError> {
        let ext = |e: std::io::Error| SolverError::External(e.to_string());
        let dir = tempfile::tempdir().map_err(ext)?;
        let lp_path = dir.path().join("problem.lp");
        let sol_path = dir.path().join("problem.sol");
        std::fs::write(&lp_path, write_lp(p)).map_err(ext)?;
        let timeout = p.time_budget.map_or("0".to_string(), |t| t.to_string());
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                a.replace("{lp}", &lp_path.to_string_lossy())
                    .replace("{sol}", &sol_path.to_string_lossy())
                    .replace("{timeout}", &timeout)
            })
            .collect();
        let mut child = Command::new(&self.program)
            .args(&args)
            .stdout(std::process::Stdio::null())
            .spawn()
            .map_err(|e| SolverError::BackendUnavailable(format!("{}: {e}", self.program)))?;
        let deadline = p
            .time_budget
            .map(|t| Instant::now() + Duration::from_secs_f64(t.max(0.0) + self.grace_s));
        loop {
            if let Some(status) = child.try_wait().map_err(ext)? {
                if !status.success() {
                    return Err(SolverError::External(format!("{} exited with {status}", self.program)));
                }
                break;
            }
            if deadline.is_some_and(|d| Instant::now() >= d) {
                let _ = child.kill();
                let _ = child.wait();
                return Ok((String::new(), true));
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        let text = std::fs::read_to_string(&sol_path).map_err(ext)?;
        Ok((text, false))
    }
}

impl MilpBackend for ExternalBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::External
    }

    fn solve(&self, p: &MilpProblem, clock: &dyn Clock) -> std::result::Result<SolveOutcome, SolverError> {
        let start = clock.now();
        let (text, killed) = self.run(p)?;
        let wall_time_s = clock.now() - start;
        if killed {
            return Ok(SolveOutcome {
                status: SolveStatus::Infeasible,
                assignment: None,
                objective: None,
                wall_time_s,
                nodes: 0,
                timed_out: true,
            });
        }
        let sol = parse_solution(&text).map_err(SolverError::External)?;
        if !sol.status.has_assignment() {
            return Ok(SolveOutcome {
                status: sol.status,
                assignment: None,
                objective: None,
                wall_time_s,
                nodes: 0,
                timed_out: sol.timed_out,
            });
        }
        let mut x = vec![0.0; p.vars.len()];
        for (name, v) in &sol.values {
            let j = name
                .strip_prefix('x')
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&j| j < x.len())
                .ok_or_else(|| SolverError::External(format!("unknown variable `{name}` in solution")))?;
            x[j] = if p.vars[j].kind.is_integral() { v.round() } else { *v };
        }
        if !p.is_feasible(&x, FEASIBILITY_TOL) {
            return Err(SolverError::External("returned assignment violates the constraints".to_string()));
        }
        Ok(SolveOutcome {
            status: sol.status,
            objective: Some(p.objective_value(&x)),
            assignment: Some(x),
            wall_time_s,
            nodes: 0,
            timed_out: sol.timed_out,
        })
    }
}
