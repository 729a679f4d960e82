//! CPLEX-LP-dialect export and the matching parser.
//!
//! The writer is canonical (declaration order, 17-digit numerals, fixed
//! spacing), so `export(parse(export(m)))` reproduces `export(m)` byte for
//! byte. The parser accepts what the writer produces, not general LP files.

use std::collections::{BTreeMap, HashMap};

use super::{LinearConstraint, MiqpModel, QuadraticConstraint, Sense, Sos2Group, VarKind, Variable};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::numfmt::write_g17;

pub const LP_HEADER: &str = "\\ gmmcc-lp-v1";
const WRAP: usize = 100;
const CONT: &str = "   ";

struct LineWriter {
    out: String,
    line_start: usize,
}

impl LineWriter {
    fn new(first: &str) -> Self {
        Self { out: first.to_string(), line_start: 0 }
    }

    /// Appends " piece", wrapping first if the line would exceed the limit.
    fn push(&mut self, piece: &str) {
        if self.out.len() - self.line_start + 1 + piece.len() > WRAP && self.out.len() > self.line_start + CONT.len() {
            self.out.push('\n');
            self.line_start = self.out.len();
            self.out.push_str(CONT);
        } else {
            self.out.push(' ');
        }
        self.out.push_str(piece);
    }

    fn finish(mut self) -> String {
        self.out.push('\n');
        self.out
    }
}

fn signed(buf: &mut String, c: f64) {
    buf.clear();
    buf.push_str(if c.is_sign_negative() { "- " } else { "+ " });
    write_g17(buf, c.abs());
}

fn write_linear(w: &mut LineWriter, terms: &[(usize, f64)], vars: &[Variable]) {
    let mut buf = String::with_capacity(48);
    for &(j, c) in terms {
        signed(&mut buf, c);
        buf.push(' ');
        buf.push_str(&vars[j].name);
        w.push(&buf);
    }
}

fn write_tail(w: &mut LineWriter, sense: Sense, rhs: f64) {
    let mut buf = String::from(sense.token());
    buf.push(' ');
    write_g17(&mut buf, rhs);
    w.push(&buf);
}

fn linear_row(row: &LinearConstraint, vars: &[Variable]) -> String {
    let mut w = LineWriter::new(&format!(" {}:", row.name));
    write_linear(&mut w, &row.terms, vars);
    write_tail(&mut w, row.sense, row.rhs);
    w.finish()
}

fn quadratic_row(row: &QuadraticConstraint, vars: &[Variable]) -> String {
    let mut w = LineWriter::new(&format!(" {}:", row.name));
    write_linear(&mut w, &row.linear, vars);
    if !row.quadratic.is_empty() {
        w.push("+ [");
        let mut buf = String::with_capacity(64);
        for &(i, j, c) in &row.quadratic {
            signed(&mut buf, c);
            buf.push(' ');
            buf.push_str(&vars[i].name);
            if i == j {
                buf.push_str(" ^2");
            } else {
                buf.push_str(" * ");
                buf.push_str(&vars[j].name);
            }
            w.push(&buf);
        }
        w.push("]");
    }
    write_tail(&mut w, row.sense, row.rhs);
    w.finish()
}

fn bound_line(v: &Variable) -> String {
    let mut s = String::from(" ");
    match (v.lower, v.upper) {
        (None, None) => {
            s.push_str(&v.name);
            s.push_str(" free");
        }
        (Some(l), Some(u)) => {
            write_g17(&mut s, l);
            s.push_str(" <= ");
            s.push_str(&v.name);
            s.push_str(" <= ");
            write_g17(&mut s, u);
        }
        (Some(l), None) => {
            s.push_str(&v.name);
            s.push_str(" >= ");
            write_g17(&mut s, l);
        }
        (None, Some(u)) => {
            s.push_str("-inf <= ");
            s.push_str(&v.name);
            s.push_str(" <= ");
            write_g17(&mut s, u);
        }
    }
    s.push('\n');
    s
}

pub fn export(model: &MiqpModel) -> Result<String> {
    export_with(model, Exec::default())
}

/// Writes the model; rows are formatted under `exec` and joined in order.
pub fn export_with(model: &MiqpModel, exec: Exec) -> Result<String> {
    model.validate()?;
    let vars = &model.variables;
    let mut out = String::new();
    out.push_str(LP_HEADER);
    out.push('\n');
    for (k, v) in &model.metadata {
        out.push_str(&format!("\\ meta {k} = {v}\n"));
    }
    out.push_str("Minimize\n");
    let mut obj = LineWriter::new(" obj:");
    write_linear(&mut obj, &model.objective, vars);
    out.push_str(&obj.finish());

    out.push_str("Subject To\n");
    for row in exec.map_slice(&model.linear_constraints, |r| linear_row(r, vars)) {
        out.push_str(&row);
    }
    for row in exec.map_slice(&model.quadratic_constraints, |r| quadratic_row(r, vars)) {
        out.push_str(&row);
    }

    out.push_str("Bounds\n");
    for v in vars {
        out.push_str(&bound_line(v));
    }
    let binaries: Vec<&Variable> = vars.iter().filter(|v| v.kind == VarKind::Binary).collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        let mut w = LineWriter::new("");
        for v in binaries {
            w.push(&v.name);
        }
        out.push_str(&w.finish());
    }
    if !model.sos2_groups.is_empty() {
        out.push_str("SOS\n");
        for g in &model.sos2_groups {
            let mut w = LineWriter::new(&format!(" {}: S2::", g.name));
            for (pos, &j) in g.vars.iter().enumerate() {
                w.push(&format!("{}:{}", vars[j].name, pos + 1));
            }
            out.push_str(&w.finish());
        }
    }
    out.push_str("End\n");
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Sos,
    End,
}

fn section_of(line: &str) -> Option<Section> {
    match line {
        "Minimize" => Some(Section::Objective),
        "Subject To" => Some(Section::Constraints),
        "Bounds" => Some(Section::Bounds),
        "Binaries" => Some(Section::Binaries),
        "SOS" => Some(Section::Sos),
        "End" => Some(Section::End),
        _ => None,
    }
}

/// Tokens of one section, each tagged with its 1-based line number.
type Tokens<'a> = Vec<(usize, &'a str)>;

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn number(line: usize, tok: &str) -> Result<f64> {
    match tok {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => tok.parse().map_err(|_| perr(line, format!("expected a number, got {tok:?}"))),
    }
}

/// Splits a section's tokens into statements, each starting at a `name:`
/// label.
fn statements<'a>(tokens: &'a Tokens<'a>) -> Result<Vec<&'a [(usize, &'a str)]>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &(line, tok)) in tokens.iter().enumerate() {
        if tok.ends_with(':') && !tok.contains("::") {
            if let Some(s) = start {
                out.push(&tokens[s..i]);
            }
            start = Some(i);
        } else if start.is_none() {
            return Err(perr(line, format!("expected a `name:` label, got {tok:?}")));
        }
    }
    if let Some(s) = start {
        out.push(&tokens[s..]);
    }
    Ok(out)
}

struct Expr {
    linear: Vec<(usize, f64)>,
    quadratic: Vec<(usize, usize, f64)>,
    tail: Option<(Sense, f64)>,
}

fn parse_expr(toks: &[(usize, &str)], index: &HashMap<&str, usize>, allow_tail: bool) -> Result<Expr> {
    let lookup = |line: usize, name: &str| {
        index.get(name).copied().ok_or_else(|| perr(line, format!("undeclared variable {name:?}")))
    };
    let mut expr = Expr { linear: Vec::new(), quadratic: Vec::new(), tail: None };
    let mut i = 0;
    let mut in_bracket = false;
    while i < toks.len() {
        let (line, tok) = toks[i];
        match tok {
            "<=" | ">=" | "=" if allow_tail && !in_bracket => {
                let sense = match tok {
                    "<=" => Sense::Le,
                    ">=" => Sense::Ge,
                    _ => Sense::Eq,
                };
                let &(rl, rt) = toks.get(i + 1).ok_or_else(|| perr(line, "missing right-hand side"))?;
                expr.tail = Some((sense, number(rl, rt)?));
                if i + 2 != toks.len() {
                    return Err(perr(toks[i + 2].0, "unexpected tokens after right-hand side"));
                }
                return Ok(expr);
            }
            "+" | "-" => {
                let sign = if tok == "-" { -1.0 } else { 1.0 };
                let &(_, next) = toks.get(i + 1).ok_or_else(|| perr(line, "dangling sign"))?;
                if next == "[" {
                    if in_bracket || sign < 0.0 {
                        return Err(perr(line, "unexpected bracket"));
                    }
                    in_bracket = true;
                    i += 2;
                    continue;
                }
                let coeff = sign * number(line, next)?;
                let &(nl, name) = toks.get(i + 2).ok_or_else(|| perr(line, "missing variable"))?;
                let a = lookup(nl, name)?;
                if in_bracket {
                    match toks.get(i + 3).map(|t| t.1) {
                        Some("^2") => {
                            expr.quadratic.push((a, a, coeff));
                            i += 4;
                        }
                        Some("*") => {
                            let &(bl, bname) = toks.get(i + 4).ok_or_else(|| perr(line, "missing factor"))?;
                            expr.quadratic.push((a, lookup(bl, bname)?, coeff));
                            i += 5;
                        }
                        _ => return Err(perr(nl, "expected `^2` or `*` in a quadratic term")),
                    }
                } else {
                    expr.linear.push((a, coeff));
                    i += 3;
                }
            }
            "]" if in_bracket => {
                in_bracket = false;
                i += 1;
            }
            _ => return Err(perr(line, format!("unexpected token {tok:?}"))),
        }
    }
    if in_bracket {
        return Err(perr(toks.last().map_or(0, |t| t.0), "unclosed bracket"));
    }
    if allow_tail {
        return Err(perr(toks.last().map_or(0, |t| t.0), "constraint lacks a sense and right-hand side"));
    }
    Ok(expr)
}

fn parse_bound(line: usize, toks: &[&str]) -> Result<Variable> {
    let var = |name: &str, lower, upper| Variable { name: name.to_string(), kind: VarKind::Continuous, lower, upper };
    let finite = |v: f64| if v.is_finite() { Some(v) } else { None };
    match toks {
        [name, "free"] => Ok(var(name, None, None)),
        [name, ">=", l] => Ok(var(name, finite(number(line, l)?), None)),
        [l, "<=", name, "<=", u] => Ok(var(name, finite(number(line, l)?), finite(number(line, u)?))),
        _ => Err(perr(line, format!("unrecognized bound {:?}", toks.join(" ")))),
    }
}

pub fn parse(text: &str) -> Result<MiqpModel> {
    let mut metadata = BTreeMap::new();
    let mut section = Section::Preamble;
    let mut sections: HashMap<u8, Tokens> = HashMap::new();
    let mut bounds: Vec<(usize, Vec<&str>)> = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('\\') {
            let comment = comment.trim();
            if comment == "gmmcc-lp-v1" {
                saw_header = true;
            } else if let Some(kv) = comment.strip_prefix("meta ") {
                let (k, v) = kv.split_once(" = ").ok_or_else(|| perr(line_no, "malformed metadata line"))?;
                metadata.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if let Some(next) = section_of(line) {
            if next as u8 <= section as u8 {
                return Err(perr(line_no, format!("section {line:?} out of order")));
            }
            section = next;
            continue;
        }
        match section {
            Section::Preamble => return Err(perr(line_no, "content before `Minimize`")),
            Section::End => return Err(perr(line_no, "content after `End`")),
            Section::Bounds => bounds.push((line_no, line.split_ascii_whitespace().collect())),
            s => sections.entry(s as u8).or_default().extend(line.split_ascii_whitespace().map(|t| (line_no, t))),
        }
    }
    if !saw_header {
        return Err(perr(1, "missing `\\ gmmcc-lp-v1` header"));
    }
    if section != Section::End {
        return Err(perr(text.lines().count(), "missing `End`"));
    }

    let mut model = MiqpModel::new();
    model.metadata = metadata;
    for (line, toks) in &bounds {
        let v = parse_bound(*line, toks)?;
        model.add_var(v.name, v.kind, v.lower, v.upper).map_err(|e| perr(*line, e.to_string()))?;
    }
    let names: Vec<String> = model.variables.iter().map(|v| v.name.clone()).collect();
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let empty = Vec::new();

    for &(line, name) in sections.get(&(Section::Binaries as u8)).unwrap_or(&empty) {
        let j = *index.get(name).ok_or_else(|| perr(line, format!("undeclared binary {name:?}")))?;
        model.variables[j].kind = VarKind::Binary;
    }

    let obj = sections.get(&(Section::Objective as u8)).unwrap_or(&empty);
    match obj.first() {
        Some(&(_, "obj:")) => {
            let e = parse_expr(&obj[1..], &index, false)?;
            if !e.quadratic.is_empty() {
                return Err(perr(obj[0].0, "quadratic objectives are not supported"));
            }
            model.objective = e.linear;
        }
        Some(&(line, _)) => return Err(perr(line, "objective must be labelled `obj:`")),
        None => {}
    }

    for stmt in statements(sections.get(&(Section::Constraints as u8)).unwrap_or(&empty))? {
        let (line, label) = stmt[0];
        let name = label.trim_end_matches(':').to_string();
        let e = parse_expr(&stmt[1..], &index, true)?;
        let (sense, rhs) = e.tail.ok_or_else(|| perr(line, "missing right-hand side"))?;
        if e.quadratic.is_empty() && !stmt.iter().any(|t| t.1 == "[") {
            model.linear_constraints.push(LinearConstraint { name, terms: e.linear, sense, rhs });
        } else {
            model.quadratic_constraints.push(QuadraticConstraint { name, linear: e.linear, quadratic: e.quadratic, sense, rhs });
        }
    }

    for stmt in statements(sections.get(&(Section::Sos as u8)).unwrap_or(&empty))? {
        let (line, label) = stmt[0];
        if stmt.get(1).map(|t| t.1) != Some("S2::") {
            return Err(perr(line, "only `S2::` sets are supported"));
        }
        let mut vars = Vec::with_capacity(stmt.len() - 2);
        for (pos, &(l, tok)) in stmt[2..].iter().enumerate() {
            let (name, weight) = tok.rsplit_once(':').ok_or_else(|| perr(l, format!("bad SOS entry {tok:?}")))?;
            if weight.parse::<usize>().ok() != Some(pos + 1) {
                return Err(perr(l, format!("SOS weight for {name} must be {}", pos + 1)));
            }
            vars.push(*index.get(name).ok_or_else(|| perr(l, format!("undeclared variable {name:?}")))?);
        }
        model.sos2_groups.push(Sos2Group { name: label.trim_end_matches(':').to_string(), vars });
    }
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::fixtures::planar;
    use crate::model::{build_pwl_inner, build_pwl_outer, build_saa, DEFAULT_BIG_M};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_all_kinds() {
        let inst = planar();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in [
            build_pwl_outer(&inst, 0.01).unwrap(),
            build_pwl_inner(&inst, 0.01).unwrap(),
            build_saa(&inst, 40, DEFAULT_BIG_M, &mut rng).unwrap(),
        ] {
            let text = export(&m).unwrap();
            let back = parse(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(export(&back).unwrap(), text);
            assert_eq!(export_with(&m, Exec::Sequential).unwrap(), text);
        }
    }

    #[test]
    fn layout_details() {
        let m = build_pwl_outer(&planar(), 0.01).unwrap();
        let text = export(&m).unwrap();
        assert!(text.starts_with("\\ gmmcc-lp-v1\n\\ meta K = 2\n"));
        assert!(text.contains("\nMinimize\n obj: - 1 x_1 - 1 x_2\n"));
        assert!(text.contains(" mix: + 0.5 zeta_1 + 0.5 zeta_2 >= 0.90000000000000002\n"));
        assert!(text.contains(" bilin_1: - 0.875 x_1 - 1.784 x_2 + [ - 1 z_1 * lam_1 ] >= -6.7000000000000002\n"));
        assert!(text.contains(" -15 <= x_1 <= 15\n"));
        assert!(text.contains(" lam_1 >= 0\n"));
        assert!(text.contains(" y_1_1 free\n"));
        assert!(text.contains(" 0 <= t_1_1 <= 1\n"));
        assert!(text.contains(" sos2_1: S2:: alpha_1_0:1 alpha_1_1:2"));
        assert!(text.ends_with("End\n"));
        assert!(text.lines().all(|l| l.len() <= 100), "line too long");
    }

    #[test]
    fn parse_errors_carry_lines() {
        let m = build_pwl_outer(&planar(), 0.01).unwrap();
        let text = export(&m).unwrap();
        let bad = text.replacen("+ 0.5 zeta_1", "+ 0.5 nope_1", 1);
        match parse(&bad) {
            Err(Error::Parse { line, msg }) => {
                assert!(msg.contains("nope_1"));
                assert_eq!(bad.lines().nth(line - 1).unwrap().trim_start().split(':').next(), Some("mix"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse(&text.replace("End\n", "")).is_err());
        assert!(parse(&text.replace("\\ gmmcc-lp-v1\n", "")).is_err());
        assert!(parse(&text.replacen(" >= 0.90000000000000002", "", 1)).is_err());
    }

    #[test]
    fn negative_infinite_lower_bound() {
        let mut m = MiqpModel::new();
        m.add_var("x_1", VarKind::Continuous, None, Some(3.0)).unwrap();
        m.objective = vec![(0, 1.0)];
        let text = export(&m).unwrap();
        assert!(text.contains(" -inf <= x_1 <= 3\n"));
        assert_eq!(parse(&text).unwrap(), m);
    }
}
