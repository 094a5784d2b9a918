//! Reader and writer for the BIF subset described in `docs/formats.md`, and
//! the bundled benchmark networks.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::network::{BayesianNetwork, Cpt, Variable};

/// Rows off by more than this are rejected by the parser.
pub const PARSE_ROW_TOLERANCE: f64 = 1e-6;
/// Rows off by at most this are kept bit-for-bit; anything between this and
/// [`PARSE_ROW_TOLERANCE`] is renormalized. Keeps write/parse idempotent.
const RENORMALIZE_ABOVE: f64 = 1e-12;

pub const BUNDLED_NAMES: [&str; 5] = ["asia", "cancer", "earthquake", "sachs", "survey"];

const ASIA: &str = include_str!("../networks/asia.bif");
const CANCER: &str = include_str!("../networks/cancer.bif");
const EARTHQUAKE: &str = include_str!("../networks/earthquake.bif");
const SACHS: &str = include_str!("../networks/sachs.bif");
const SURVEY: &str = include_str!("../networks/survey.bif");

/// Loads one of the vendored networks. Names are case-insensitive.
pub fn load_bundled(name: &str) -> Result<BayesianNetwork> {
    let key = name.trim().to_ascii_lowercase();
    let text = match key.as_str() {
        "asia" => ASIA,
        "cancer" => CANCER,
        "earthquake" => EARTHQUAKE,
        "sachs" => SACHS,
        "survey" => SURVEY,
        _ => {
            return Err(Error::Argument(format!(
                "unknown bundled network `{name}`; available: {}",
                BUNDLED_NAMES.join(", ")
            )))
        }
    };
    Ok(parse_network(text)?.with_name(key))
}

/// Bundled name, or a path to a BIF file.
pub fn load_network(source: &str) -> Result<BayesianNetwork> {
    if BUNDLED_NAMES.contains(&source.trim().to_ascii_lowercase().as_str()) {
        return load_bundled(source);
    }
    let path = std::path::Path::new(source);
    if !path.exists() {
        return Err(Error::Argument(format!(
            "`{source}` is neither a bundled network ({}) nor an existing file",
            BUNDLED_NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path)?;
    parse_network(&text)
}

/// Conventional consequent variable for each bundled network.
pub const REFERENCE_TARGETS: [(&str, &str); 5] = [
    ("asia", "dysp"),
    ("cancer", "Cancer"),
    ("earthquake", "Alarm"),
    ("sachs", "P38"),
    ("survey", "T"),
];

/// The reference target when the network carries a bundled name, otherwise
/// the sink whose name sorts first.
pub fn default_target(net: &BayesianNetwork) -> usize {
    REFERENCE_TARGETS
        .iter()
        .find(|(n, _)| *n == net.name())
        .and_then(|(_, t)| net.variable_id(t))
        .unwrap_or_else(|| {
            net.sinks()
                .into_iter()
                .min_by(|&a, &b| net.variable(a).name().cmp(net.variable(b).name()))
                .expect("a nonempty DAG has a sink")
        })
}

/// Independent CPT parameters: Σ (s_i − 1) · Π parent cardinalities.
pub fn parameter_count(net: &BayesianNetwork) -> usize {
    (0..net.len())
        .map(|v| {
            let rows: usize = net.parents(v).iter().map(|&p| net.cardinality(p)).product();
            (net.cardinality(v) - 1) * rows
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const PUNCT: &[char] = &['{', '}', '(', ')', '[', ']', ',', ';', '|'];

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
        } else if c.is_whitespace() {
            col += 1;
            i += 1;
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            let (l0, c0) = (line, col);
            i += 2;
            col += 2;
            loop {
                match chars.get(i) {
                    None => return Err(Error::parse(l0, c0, "unterminated block comment")),
                    Some('*') if chars.get(i + 1) == Some(&'/') => {
                        i += 2;
                        col += 2;
                        break;
                    }
                    Some('\n') => {
                        line += 1;
                        col = 1;
                        i += 1;
                    }
                    Some(_) => {
                        col += 1;
                        i += 1;
                    }
                }
            }
        } else if PUNCT.contains(&c) {
            out.push(Token {
                tok: Tok::Punct(c),
                line,
                column: col,
            });
            col += 1;
            i += 1;
        } else {
            let start_col = col;
            let mut word = String::new();
            while i < chars.len() && !chars[i].is_whitespace() && !PUNCT.contains(&chars[i]) {
                word.push(chars[i]);
                i += 1;
                col += 1;
            }
            out.push(Token {
                tok: Tok::Word(word),
                line,
                column: start_col,
            });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.column)).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (l, c) = self.here();
        Err(Error::parse(l, c, msg))
    }

    fn punct(&mut self, c: char) -> Result<()> {
        match self.peek() {
            Some(Token { tok: Tok::Punct(p), .. }) if *p == c => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => {
                let found = describe(&t.tok);
                self.err(format!("expected `{c}`, found {found}"))
            }
            None => self.err(format!("expected `{c}`, found end of input")),
        }
    }

    fn is_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(p), .. }) if *p == c)
    }

    fn word(&mut self, what: &str) -> Result<(String, usize, usize)> {
        match self.peek().cloned() {
            Some(Token {
                tok: Tok::Word(w),
                line,
                column,
            }) => {
                self.pos += 1;
                Ok((w, line, column))
            }
            Some(t) => self.err(format!("expected {what}, found {}", describe(&t.tok))),
            None => self.err(format!("expected {what}, found end of input")),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let (l, c) = self.here();
        let (w, _, _) = self.word(&format!("`{kw}`"))?;
        if w == kw {
            Ok(())
        } else {
            Err(Error::parse(l, c, format!("expected `{kw}`, found `{w}`")))
        }
    }

    fn number(&mut self) -> Result<(f64, usize, usize)> {
        let (w, l, c) = self.word("a probability")?;
        match w.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok((x, l, c)),
            _ => Err(Error::parse(l, c, format!("`{w}` is not a number"))),
        }
    }

    /// `x, y, z ;` — returns values and the position of the first one.
    fn number_list(&mut self) -> Result<(Vec<f64>, usize, usize)> {
        let (first, l, c) = self.number()?;
        let mut out = vec![first];
        while self.is_punct(',') {
            self.pos += 1;
            out.push(self.number()?.0);
        }
        self.punct(';')?;
        Ok((out, l, c))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Word(w) => format!("`{w}`"),
        Tok::Punct(c) => format!("`{c}`"),
    }
}

struct PendingCpt {
    child: usize,
    parents: Vec<usize>,
    rows: Vec<Vec<f64>>,
    line: usize,
    column: usize,
}

/// Parses BIF-subset text into a validated network.
pub fn parse_network(text: &str) -> Result<BayesianNetwork> {
    let toks = tokenize(text)?;
    let end = toks.last().map(|t| (t.line, t.column + 1)).unwrap_or((1, 1));
    let mut p = Parser { toks, pos: 0, end };

    p.keyword("network")?;
    let (name, _, _) = p.word("a network name")?;
    p.punct('{')?;
    p.punct('}')?;

    let mut variables: Vec<Variable> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut pending: Vec<PendingCpt> = Vec::new();

    while p.peek().is_some() {
        let (kw, l, c) = p.word("`variable` or `probability`")?;
        match kw.as_str() {
            "variable" => {
                let (vname, vl, vc) = p.word("a variable name")?;
                if index.contains_key(&vname) {
                    return Err(Error::parse(vl, vc, format!("duplicate variable `{vname}`")));
                }
                if !pending.is_empty() {
                    return Err(Error::parse(
                        l,
                        c,
                        "variables must be declared before probability blocks",
                    ));
                }
                p.punct('{')?;
                p.keyword("type")?;
                p.keyword("discrete")?;
                p.punct('[')?;
                let (count, cl, cc) = p.word("a state count")?;
                let count: usize = count
                    .parse()
                    .map_err(|_| Error::parse(cl, cc, format!("`{count}` is not a state count")))?;
                p.punct(']')?;
                p.punct('{')?;
                let (sl, sc) = p.here();
                let mut states = vec![p.word("a state name")?.0];
                while p.is_punct(',') {
                    p.pos += 1;
                    states.push(p.word("a state name")?.0);
                }
                p.punct('}')?;
                p.punct(';')?;
                p.punct('}')?;
                if states.len() != count {
                    return Err(Error::parse(
                        sl,
                        sc,
                        format!("`{vname}` declares {count} states but lists {}", states.len()),
                    ));
                }
                let id = variables.len();
                let var = Variable::new(id, vname.clone(), states).map_err(|e| Error::parse(vl, vc, e.to_string()))?;
                variables.push(var);
                index.insert(vname, id);
            }
            "probability" => pending.push(parse_probability(&mut p, &variables, &index, l, c)?),
            other => {
                return Err(Error::parse(
                    l,
                    c,
                    format!("expected `variable` or `probability`, found `{other}`"),
                ))
            }
        }
    }

    let mut seen = vec![false; variables.len()];
    let mut cpts = Vec::with_capacity(pending.len());
    for pc in pending {
        if seen[pc.child] {
            return Err(Error::parse(
                pc.line,
                pc.column,
                format!("second probability block for `{}`", variables[pc.child].name()),
            ));
        }
        seen[pc.child] = true;
        cpts.push(Cpt::new(pc.child, pc.parents, pc.rows));
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(Error::parse(
            end.0,
            end.1,
            format!("variable `{}` has no probability block", variables[v].name()),
        ));
    }
    BayesianNetwork::new(name, variables, cpts)
}

fn parse_probability(
    p: &mut Parser,
    variables: &[Variable],
    index: &HashMap<String, usize>,
    line: usize,
    column: usize,
) -> Result<PendingCpt> {
    let lookup = |name: &str, l: usize, c: usize| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::parse(l, c, format!("unknown variable `{name}`")))
    };

    p.punct('(')?;
    let (cname, cl, cc) = p.word("a variable name")?;
    let child = lookup(&cname, cl, cc)?;
    let mut parents = Vec::new();
    if p.is_punct('|') {
        p.pos += 1;
        loop {
            let (pname, pl, pc) = p.word("a parent name")?;
            let parent = lookup(&pname, pl, pc)?;
            if parent == child || parents.contains(&parent) {
                return Err(Error::parse(pl, pc, format!("invalid parent `{pname}` for `{cname}`")));
            }
            parents.push(parent);
            if p.is_punct(',') {
                p.pos += 1;
            } else {
                break;
            }
        }
    }
    p.punct(')')?;
    p.punct('{')?;

    let card = variables[child].cardinality();
    let radix: Vec<usize> = parents.iter().map(|&q| variables[q].cardinality()).collect();
    let n_rows: usize = radix.iter().product();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n_rows];

    while !p.is_punct('}') {
        let (rl, rc) = p.here();
        if p.is_punct('(') {
            p.pos += 1;
            let mut row = 0usize;
            for (k, &q) in parents.iter().enumerate() {
                if k > 0 {
                    p.punct(',')?;
                }
                let (s, sl, sc) = p.word("a parent state")?;
                let si = variables[q].state_index(&s).ok_or_else(|| {
                    Error::parse(sl, sc, format!("`{s}` is not a state of `{}`", variables[q].name()))
                })?;
                row = row * radix[k] + si;
            }
            p.punct(')')?;
            let (vals, vl, vc) = p.number_list()?;
            if rows[row].is_some() {
                return Err(Error::parse(rl, rc, "row given twice"));
            }
            rows[row] = Some(check_row(vals, card, vl, vc)?);
        } else {
            p.keyword("table")?;
            let (vals, vl, vc) = p.number_list()?;
            if vals.len() != n_rows * card {
                return Err(Error::parse(
                    vl,
                    vc,
                    format!(
                        "table for `{cname}` has {} values, expected {}",
                        vals.len(),
                        n_rows * card
                    ),
                ));
            }
            for (r, chunk) in vals.chunks(card).enumerate() {
                if rows[r].is_some() {
                    return Err(Error::parse(rl, rc, "row given twice"));
                }
                rows[r] = Some(check_row(chunk.to_vec(), card, vl, vc)?);
            }
        }
    }
    p.punct('}')?;

    let filled: Vec<Vec<f64>> = rows.iter().flatten().cloned().collect();
    if filled.len() != n_rows {
        return Err(Error::parse(
            line,
            column,
            format!("`{cname}` has {} of {n_rows} rows", filled.len()),
        ));
    }
    Ok(PendingCpt {
        child,
        parents,
        rows: filled,
        line,
        column,
    })
}

fn check_row(mut vals: Vec<f64>, card: usize, line: usize, column: usize) -> Result<Vec<f64>> {
    if vals.len() != card {
        return Err(Error::parse(
            line,
            column,
            format!("row has {} values, expected {card}", vals.len()),
        ));
    }
    if let Some(x) = vals.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::parse(line, column, format!("probability {x} outside [0, 1]")));
    }
    let sum: f64 = vals.iter().sum();
    let off = (sum - 1.0).abs();
    if off > PARSE_ROW_TOLERANCE {
        return Err(Error::parse(line, column, format!("row sums to {sum}")));
    }
    if off > RENORMALIZE_ABOVE {
        for x in &mut vals {
            *x /= sum;
        }
    }
    Ok(vals)
}

/// Writes a network in the same BIF subset `parse_network` reads.
/// Floats use the shortest round-tripping representation.
pub fn write_network(net: &BayesianNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "network {} {{\n}}", net.name());
    for v in net.variables() {
        let _ = writeln!(
            out,
            "variable {} {{\n  type discrete [ {} ] {{ {} }};\n}}",
            v.name(),
            v.cardinality(),
            v.states().join(", ")
        );
    }
    for v in net.variables() {
        let cpt = net.cpt(v.id());
        let card = v.cardinality();
        let fmt_row = |row: &[f64]| row.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        if cpt.parents().is_empty() {
            let _ = writeln!(out, "probability ( {} ) {{", v.name());
            let _ = writeln!(out, "  table {};", fmt_row(cpt.values()));
        } else {
            let names: Vec<&str> = cpt.parents().iter().map(|&q| net.variable(q).name()).collect();
            let _ = writeln!(out, "probability ( {} | {} ) {{", v.name(), names.join(", "));
            let radix: Vec<usize> = cpt.parents().iter().map(|&q| net.cardinality(q)).collect();
            for (r, row) in cpt.values().chunks(card).enumerate() {
                let mut rem = r;
                let mut digits = vec![0; radix.len()];
                for k in (0..radix.len()).rev() {
                    digits[k] = rem % radix[k];
                    rem /= radix[k];
                }
                let labels: Vec<&str> = cpt
                    .parents()
                    .iter()
                    .zip(&digits)
                    .map(|(&q, &d)| net.variable(q).states()[d].as_str())
                    .collect();
                let _ = writeln!(out, "  ({}) {};", labels.join(", "), fmt_row(row));
            }
        }
        out.push_str("}\n");
    }
    out
}
