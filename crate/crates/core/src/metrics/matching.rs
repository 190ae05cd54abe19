//! Structural SQL comparison.
//!
//! A query is decomposed into five components, each a set of normalized
//! strings:
//!
//! 1. `select`: projected expressions, source tables (`from:`) and join
//!    conditions (`on:`);
//! 2. `condition`: `WHERE` predicates and the conjunctions joining them;
//! 3. `grouping`: `GROUP BY` expressions and `HAVING` predicates;
//! 4. `ordering`: `ORDER BY` expressions with direction, and `LIMIT`;
//! 5. `keywords`: `distinct`, `join`, `nested`, and each set operation
//!    together with the canonical form of its right-hand query.
//!
//! Normalization lowercases everything except string literals, resolves
//! table aliases, drops qualifiers when a query reads a single table, drops
//! `AS` column aliases and orders the two sides of `=` / `!=`. Nested
//! queries are rendered in canonical form wherever they appear.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{percent, Real};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("unterminated literal or identifier")]
    Unterminated,
    #[error("unbalanced parentheses")]
    Unbalanced,
    #[error("unexpected character {0:?}")]
    BadChar(char),
    #[error("not a SELECT query")]
    NotSelect,
    #[error("empty {0} clause")]
    EmptyClause(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Str(String),
    Num(String),
    Sym(String),
}

#[derive(Debug, Clone)]
enum Node {
    Tok(Tok),
    Group(Vec<Node>),
}

fn normalize_number(raw: &str) -> String {
    if let Ok(i) = raw.parse::<i64>() {
        return i.to_string();
    }
    match raw.parse::<f64>() {
        Ok(f) => format!("{f}"),
        Err(_) => raw.to_string(),
    }
}

fn read_quoted(chars: &[char], start: usize, close: char) -> Result<(String, usize), MatchError> {
    let mut out = String::new();
    let mut i = start + 1;
    loop {
        match chars.get(i) {
            None => return Err(MatchError::Unterminated),
            Some(&c) if c == close => {
                // A doubled quote is an escaped quote.
                if close != ']' && chars.get(i + 1) == Some(&close) {
                    out.push(close);
                    i += 2;
                } else {
                    return Ok((out, i + 1));
                }
            }
            Some(&c) => {
                out.push(c);
                i += 1;
            }
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

fn tokenize(sql: &str) -> Result<Vec<Tok>, MatchError> {
    let chars: Vec<char> = sql.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        if c.is_whitespace() || c == ';' {
            i += 1;
        } else if c == '-' && next == Some('-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '\'' || c == '"' {
            let (s, end) = read_quoted(&chars, i, c)?;
            toks.push(Tok::Str(s));
            i = end;
        } else if c == '`' || c == '[' {
            let (s, end) = read_quoted(&chars, i, if c == '[' { ']' } else { '`' })?;
            toks.push(Tok::Word(s.to_lowercase()));
            i = end;
        } else if c.is_ascii_digit() || (c == '.' && next.is_some_and(|n| n.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let raw: String = chars[start..i].iter().collect();
            toks.push(Tok::Num(normalize_number(&raw)));
        } else if is_ident_start(c) {
            let start = i;
            loop {
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                // Qualified names stay one token: `t1.name`, `t1.*`.
                match (chars.get(i), chars.get(i + 1)) {
                    (Some('.'), Some(&n)) if is_ident_start(n) => i += 1,
                    (Some('.'), Some('*')) => {
                        i += 2;
                        break;
                    }
                    _ => break,
                }
            }
            toks.push(Tok::Word(
                chars[start..i].iter().collect::<String>().to_lowercase(),
            ));
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let (sym, width) = match two.as_str() {
                ">=" | "<=" | "!=" | "||" => (two.clone(), 2),
                "<>" => ("!=".to_string(), 2),
                "==" => ("=".to_string(), 2),
                _ if "=<>+-*/%,().".contains(c) => (c.to_string(), 1),
                _ => return Err(MatchError::BadChar(c)),
            };
            i += width;
            toks.push(Tok::Sym(sym));
        }
    }
    Ok(toks)
}

fn build_tree(toks: Vec<Tok>) -> Result<Vec<Node>, MatchError> {
    let mut stack: Vec<Vec<Node>> = vec![Vec::new()];
    for t in toks {
        match &t {
            Tok::Sym(s) if s == "(" => stack.push(Vec::new()),
            Tok::Sym(s) if s == ")" => {
                let inner = stack.pop().ok_or(MatchError::Unbalanced)?;
                stack
                    .last_mut()
                    .ok_or(MatchError::Unbalanced)?
                    .push(Node::Group(inner));
            }
            _ => stack.last_mut().expect("root frame").push(Node::Tok(t)),
        }
        if stack.is_empty() {
            return Err(MatchError::Unbalanced);
        }
    }
    if stack.len() != 1 {
        return Err(MatchError::Unbalanced);
    }
    Ok(stack.pop().unwrap())
}

fn word(n: &Node) -> Option<&str> {
    match n {
        Node::Tok(Tok::Word(w)) => Some(w),
        _ => None,
    }
}

fn is_word(n: &Node, w: &str) -> bool {
    word(n) == Some(w)
}

fn is_sym(n: &Node, s: &str) -> bool {
    matches!(n, Node::Tok(Tok::Sym(x)) if x == s)
}

fn is_subquery(nodes: &[Node]) -> bool {
    nodes.first().is_some_and(|n| is_word(n, "select"))
}

fn split_commas(nodes: &[Node]) -> Vec<&[Node]> {
    nodes
        .split(|n| is_sym(n, ","))
        .filter(|s| !s.is_empty())
        .collect()
}

struct Scope<'a> {
    aliases: BTreeMap<String, String>,
    tables: BTreeSet<String>,
    parent: Option<&'a Scope<'a>>,
}

impl Scope<'_> {
    fn resolve(&self, qualifier: &str) -> Option<&str> {
        self.aliases
            .get(qualifier)
            .map(String::as_str)
            .or_else(|| self.parent.and_then(|p| p.resolve(qualifier)))
    }
}

#[derive(Default)]
struct Ctx {
    nested: bool,
}

fn render_word(w: &str, scope: &Scope) -> String {
    let Some((qualifier, column)) = w.split_once('.') else {
        return w.to_string();
    };
    let table = scope.resolve(qualifier).unwrap_or(qualifier);
    if scope.tables.len() == 1 && scope.tables.contains(table) {
        column.to_string()
    } else {
        format!("{table}.{column}")
    }
}

fn render(nodes: &[Node], scope: &Scope, ctx: &mut Ctx) -> Result<String, MatchError> {
    let mut parts = Vec::with_capacity(nodes.len());
    for n in nodes {
        parts.push(match n {
            Node::Tok(Tok::Word(w)) => render_word(w, scope),
            Node::Tok(Tok::Str(s)) => format!("'{}'", s.replace('\'', "''")),
            Node::Tok(Tok::Num(x)) | Node::Tok(Tok::Sym(x)) => x.clone(),
            Node::Group(inner) if is_subquery(inner) => {
                ctx.nested = true;
                format!("({})", parse_query(inner, Some(scope))?.canonical())
            }
            Node::Group(inner) => format!("({})", render(inner, scope, ctx)?),
        });
    }
    Ok(parts.join(" "))
}

/// Renders a predicate, ordering the operands of a symmetric comparison.
fn render_predicate(nodes: &[Node], scope: &Scope, ctx: &mut Ctx) -> Result<String, MatchError> {
    let ops: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| is_sym(n, "=") || is_sym(n, "!="))
        .map(|(i, _)| i)
        .collect();
    if let [op] = ops[..] {
        if op > 0 && op + 1 < nodes.len() {
            let mut sides = [
                render(&nodes[..op], scope, ctx)?,
                render(&nodes[op + 1..], scope, ctx)?,
            ];
            sides.sort();
            let sym = render(&nodes[op..=op], scope, ctx)?;
            return Ok(format!("{} {sym} {}", sides[0], sides[1]));
        }
    }
    render(nodes, scope, ctx)
}

/// Splits at top-level `AND` / `OR`, keeping `BETWEEN x AND y` intact.
fn split_predicates(nodes: &[Node]) -> (Vec<&[Node]>, Vec<&'static str>) {
    let mut preds = Vec::new();
    let mut conj = Vec::new();
    let mut start = 0;
    let mut in_between = false;
    for (i, n) in nodes.iter().enumerate() {
        if is_word(n, "between") {
            in_between = true;
        } else if is_word(n, "and") && in_between {
            in_between = false;
        } else if is_word(n, "and") || is_word(n, "or") {
            preds.push(&nodes[start..i]);
            conj.push(if is_word(n, "and") { "and" } else { "or" });
            start = i + 1;
        }
    }
    preds.push(&nodes[start..]);
    (preds.into_iter().filter(|p| !p.is_empty()).collect(), conj)
}

/// The five comparison components of a query.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseComponents {
    pub select: BTreeSet<String>,
    pub condition: BTreeSet<String>,
    pub grouping: BTreeSet<String>,
    pub ordering: BTreeSet<String>,
    pub keywords: BTreeSet<String>,
}

impl ClauseComponents {
    pub fn components(&self) -> [&BTreeSet<String>; 5] {
        [
            &self.select,
            &self.condition,
            &self.grouping,
            &self.ordering,
            &self.keywords,
        ]
    }

    pub fn non_empty(&self) -> usize {
        self.components().iter().filter(|c| !c.is_empty()).count()
    }

    pub fn canonical(&self) -> String {
        let names = ["select", "where", "group", "order", "keywords"];
        names
            .iter()
            .zip(self.components())
            .map(|(name, set)| {
                format!(
                    "{name}[{}]",
                    set.iter().cloned().collect::<Vec<_>>().join(" | ")
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

const SET_OPS: [&str; 3] = ["union", "intersect", "except"];
const JOIN_MODIFIERS: [&str; 7] = [
    "inner", "left", "right", "full", "outer", "cross", "natural",
];

fn parse_query(nodes: &[Node], parent: Option<&Scope>) -> Result<ClauseComponents, MatchError> {
    let set_op = nodes
        .iter()
        .position(|n| word(n).is_some_and(|w| SET_OPS.contains(&w)));
    let Some(at) = set_op else {
        return parse_core(nodes, parent);
    };
    let op = word(&nodes[at]).unwrap();
    let mut rhs = &nodes[at + 1..];
    let mut op_name = op.to_string();
    if rhs.first().is_some_and(|n| is_word(n, "all")) {
        op_name.push_str(" all");
        rhs = &rhs[1..];
    }
    let mut left = parse_core(&nodes[..at], parent)?;
    let right = parse_query(rhs, parent)?;
    left.keywords
        .insert(format!("{op_name}:({})", right.canonical()));
    Ok(left)
}

struct TableRef<'n> {
    source: String,
    alias: Option<String>,
    condition: Option<&'n [Node]>,
}

fn parse_from<'n>(
    nodes: &'n [Node],
    parent: Option<&Scope>,
    ctx: &mut Ctx,
) -> Result<(Vec<TableRef<'n>>, bool), MatchError> {
    let mut segments: Vec<&[Node]> = Vec::new();
    let mut start = 0;
    let mut joined = false;
    let mut i = 0;
    while i < nodes.len() {
        let n = &nodes[i];
        let boundary = is_sym(n, ",")
            || is_word(n, "join")
            || word(n).is_some_and(|w| JOIN_MODIFIERS.contains(&w));
        if boundary {
            if i > start {
                segments.push(&nodes[start..i]);
            }
            joined |= is_word(n, "join") || is_sym(n, ",");
            start = i + 1;
        }
        i += 1;
    }
    if start < nodes.len() {
        segments.push(&nodes[start..]);
    }
    let mut refs = Vec::new();
    for seg in segments {
        let on = seg
            .iter()
            .position(|n| is_word(n, "on") || is_word(n, "using"));
        let (head, condition) = match on {
            Some(p) if is_word(&seg[p], "on") => (&seg[..p], Some(&seg[p + 1..])),
            Some(p) => (&seg[..p], Some(&seg[p..])),
            None => (seg, None),
        };
        let source = match head.first() {
            Some(Node::Tok(Tok::Word(w))) => w.clone(),
            Some(Node::Group(inner)) if is_subquery(inner) => {
                ctx.nested = true;
                let empty = Scope {
                    aliases: BTreeMap::new(),
                    tables: BTreeSet::new(),
                    parent,
                };
                format!("({})", parse_query(inner, Some(&empty))?.canonical())
            }
            _ => return Err(MatchError::EmptyClause("from")),
        };
        let rest: Vec<&Node> = head[1..].iter().filter(|n| !is_word(n, "as")).collect();
        let alias = rest.first().and_then(|n| word(n)).map(str::to_string);
        refs.push(TableRef {
            source,
            alias,
            condition,
        });
    }
    Ok((refs, joined))
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Clause {
    Select,
    From,
    Where,
    GroupBy,
    Having,
    OrderBy,
    Limit,
}

fn parse_core(nodes: &[Node], parent: Option<&Scope>) -> Result<ClauseComponents, MatchError> {
    if !is_subquery(nodes) {
        return Err(MatchError::NotSelect);
    }
    let mut starts: Vec<(Clause, usize, usize)> = vec![(Clause::Select, 0, 1)];
    for (i, n) in nodes.iter().enumerate().skip(1) {
        let followed_by_by = nodes.get(i + 1).is_some_and(|m| is_word(m, "by"));
        let clause = match word(n) {
            Some("from") => Some((Clause::From, 1)),
            Some("where") => Some((Clause::Where, 1)),
            Some("group") if followed_by_by => Some((Clause::GroupBy, 2)),
            Some("having") => Some((Clause::Having, 1)),
            Some("order") if followed_by_by => Some((Clause::OrderBy, 2)),
            Some("limit") => Some((Clause::Limit, 1)),
            _ => None,
        };
        if let Some((c, width)) = clause {
            starts.push((c, i, width));
        }
    }
    let mut clauses: BTreeMap<Clause, &[Node]> = BTreeMap::new();
    for (k, &(clause, at, width)) in starts.iter().enumerate() {
        let end = starts.get(k + 1).map_or(nodes.len(), |s| s.1);
        clauses.insert(clause, &nodes[at + width..end]);
    }

    let mut ctx = Ctx::default();
    let mut out = ClauseComponents::default();

    let (refs, joined) = match clauses.get(&Clause::From) {
        Some(from) => parse_from(from, parent, &mut ctx)?,
        None => (Vec::new(), false),
    };
    let mut scope = Scope {
        aliases: BTreeMap::new(),
        tables: BTreeSet::new(),
        parent,
    };
    for r in &refs {
        scope.tables.insert(r.source.clone());
        scope.aliases.insert(r.source.clone(), r.source.clone());
        if let Some(a) = &r.alias {
            scope.aliases.insert(a.clone(), r.source.clone());
        }
    }
    if joined {
        out.keywords.insert("join".into());
    }
    for r in &refs {
        out.select.insert(format!("from:{}", r.source));
        if let Some(cond) = r.condition {
            let (preds, _) = split_predicates(cond);
            for p in preds {
                out.select
                    .insert(format!("on:{}", render_predicate(p, &scope, &mut ctx)?));
            }
        }
    }

    let mut items = clauses[&Clause::Select];
    if items.first().is_some_and(|n| is_word(n, "distinct")) {
        out.keywords.insert("distinct".into());
        items = &items[1..];
    } else if items.first().is_some_and(|n| is_word(n, "all")) {
        items = &items[1..];
    }
    let items = split_commas(items);
    if items.is_empty() {
        return Err(MatchError::EmptyClause("select"));
    }
    for item in items {
        let expr = match item.len() {
            n if n >= 3 && is_word(&item[n - 2], "as") => &item[..n - 2],
            _ => item,
        };
        out.select.insert(render(expr, &scope, &mut ctx)?);
    }

    if let Some(cond) = clauses.get(&Clause::Where) {
        let (preds, conj) = split_predicates(cond);
        if preds.is_empty() {
            return Err(MatchError::EmptyClause("where"));
        }
        for p in preds {
            out.condition.insert(render_predicate(p, &scope, &mut ctx)?);
        }
        for c in conj {
            out.condition.insert(format!("conj:{c}"));
        }
    }

    if let Some(group) = clauses.get(&Clause::GroupBy) {
        for g in split_commas(group) {
            out.grouping.insert(render(g, &scope, &mut ctx)?);
        }
    }
    if let Some(having) = clauses.get(&Clause::Having) {
        let (preds, conj) = split_predicates(having);
        for p in preds {
            out.grouping
                .insert(format!("having:{}", render_predicate(p, &scope, &mut ctx)?));
        }
        for c in conj {
            out.grouping.insert(format!("having-conj:{c}"));
        }
    }

    if let Some(order) = clauses.get(&Clause::OrderBy) {
        for o in split_commas(order) {
            let (expr, dir) = match o.last().and_then(word) {
                Some(d @ ("asc" | "desc")) => (&o[..o.len() - 1], d),
                _ => (o, "asc"),
            };
            out.ordering
                .insert(format!("{} {dir}", render(expr, &scope, &mut ctx)?));
        }
    }
    if let Some(limit) = clauses.get(&Clause::Limit) {
        out.ordering
            .insert(format!("limit:{}", render(limit, &scope, &mut ctx)?));
    }

    if ctx.nested {
        out.keywords.insert("nested".into());
    }
    Ok(out)
}

/// Decomposes a query into its comparison components.
pub fn decompose(sql: &str) -> Result<ClauseComponents, MatchError> {
    let tree = build_tree(tokenize(sql)?)?;
    parse_query(&tree, None)
}

/// All five components agree. An unparseable prediction never matches.
pub fn exact_match(pred_sql: &str, gold_sql: &str) -> bool {
    match (decompose(pred_sql), decompose(gold_sql)) {
        (Ok(p), Ok(g)) => p == g,
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComponentCounts {
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

/// Component counts for one pair: non-empty components on each side and
/// those that are non-empty and equal on both.
pub fn component_counts(pred_sql: Option<&str>, gold_sql: &str) -> ComponentCounts {
    let gold = decompose(gold_sql).ok();
    let pred = pred_sql.and_then(|p| decompose(p).ok());
    let matched = match (&pred, &gold) {
        (Some(p), Some(g)) => p
            .components()
            .iter()
            .zip(g.components())
            .filter(|(a, b)| !a.is_empty() && **a == *b)
            .count(),
        _ => 0,
    };
    ComponentCounts {
        matched,
        predicted: pred.as_ref().map_or(0, ClauseComponents::non_empty),
        gold: gold.as_ref().map_or(0, ClauseComponents::non_empty),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PartialMatch<R = f64> {
    pub acc: R,
    pub recall: R,
    pub f1: R,
}

/// Micro-averaged component accuracy, recall and F1 over a corpus, in
/// percent. Undefined ratios are 0.
pub fn partial_match<R: Real>(preds: &[Option<&str>], golds: &[&str]) -> PartialMatch<R> {
    assert_eq!(preds.len(), golds.len(), "prediction/gold length mismatch");
    let total = preds
        .iter()
        .zip(golds)
        .map(|(p, g)| component_counts(*p, g))
        .fold(ComponentCounts::default(), |a, c| ComponentCounts {
            matched: a.matched + c.matched,
            predicted: a.predicted + c.predicted,
            gold: a.gold + c.gold,
        });
    let acc: R = percent(total.matched, total.predicted).unwrap_or_else(R::zero);
    let recall: R = percent(total.matched, total.gold).unwrap_or_else(R::zero);
    let f1 = if acc + recall > R::zero() {
        R::lit(2.0) * acc * recall / (acc + recall)
    } else {
        R::zero()
    };
    PartialMatch { acc, recall, f1 }
}

/// Percent of pairs that match exactly; absent predictions count as misses.
pub fn exact_match_accuracy<R: Real>(preds: &[Option<&str>], golds: &[&str]) -> Option<R> {
    assert_eq!(preds.len(), golds.len(), "prediction/gold length mismatch");
    let hits = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| p.is_some_and(|p| exact_match(p, g)))
        .count();
    percent(hits, golds.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "SELECT DISTINCT T1.name, count(*) FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.singer_id WHERE T1.age > 20 GROUP BY T1.name ORDER BY count(*) DESC";

    #[test]
    fn keyword_case_is_ignored() {
        assert!(exact_match(
            "select name from singer where age > 20",
            "SELECT name FROM singer WHERE age > 20"
        ));
    }

    #[test]
    fn select_order_is_ignored() {
        assert!(exact_match(
            "SELECT age, name FROM singer",
            "SELECT name, age FROM singer"
        ));
    }

    #[test]
    fn constants_matter() {
        assert!(!exact_match(
            "SELECT name FROM singer WHERE age > 30",
            "SELECT name FROM singer WHERE age > 20"
        ));
    }

    #[test]
    fn aliases_and_qualifiers_normalize() {
        assert!(exact_match(
            "SELECT s.name FROM singer AS s WHERE s.age > 20",
            "SELECT name FROM singer WHERE age > 20"
        ));
        assert!(exact_match(
            "SELECT a.name FROM singer a JOIN concert b ON b.singer_id = a.singer_id",
            "SELECT T1.name FROM singer AS T1 JOIN concert AS T2 ON T1.singer_id = T2.singer_id"
        ));
        assert!(exact_match(
            "SELECT count(*) AS n FROM singer",
            "SELECT count(*) FROM singer"
        ));
        assert!(exact_match(
            "SELECT name FROM singer WHERE 'x' = name",
            "SELECT name FROM singer WHERE name = \"x\""
        ));
        assert!(exact_match(
            "SELECT a FROM t WHERE b <> 1;",
            "SELECT a FROM t WHERE b != 1"
        ));
    }

    #[test]
    fn literal_case_matters() {
        assert!(!exact_match(
            "SELECT name FROM singer WHERE country = 'france'",
            "SELECT name FROM singer WHERE country = 'France'"
        ));
    }

    #[test]
    fn decomposition_shape() {
        let c = decompose(FULL).unwrap();
        assert_eq!(c.non_empty(), 5);
        assert!(c.select.contains("from:singer"));
        assert!(c.select.contains("on:concert.singer_id = singer.singer_id"));
        assert!(c.select.contains("singer.name"));
        assert!(c.keywords.contains("distinct") && c.keywords.contains("join"));
        assert!(c.ordering.contains("count (*) desc"));
    }

    #[test]
    fn between_and_conjunctions() {
        let c = decompose("SELECT a FROM t WHERE b BETWEEN 1 AND 5 OR c = 2").unwrap();
        assert!(c.condition.contains("b between 1 and 5"));
        assert!(c.condition.contains("2 = c"));
        assert!(c.condition.contains("conj:or"));
        assert_eq!(c.condition.len(), 3);
    }

    #[test]
    fn nested_and_set_operations() {
        let c =
            decompose("SELECT name FROM singer WHERE age > (SELECT avg(age) FROM singer)").unwrap();
        assert!(c.keywords.contains("nested"));
        let u = decompose("SELECT a FROM t UNION SELECT a FROM u").unwrap();
        assert!(u.keywords.iter().any(|k| k.starts_with("union:")));
        assert!(!exact_match(
            "SELECT a FROM t UNION SELECT a FROM u",
            "SELECT a FROM t UNION SELECT a FROM v"
        ));
        assert!(!exact_match(
            "SELECT a FROM t INTERSECT SELECT a FROM u",
            "SELECT a FROM t EXCEPT SELECT a FROM u"
        ));
    }

    #[test]
    fn unparseable_inputs() {
        assert!(decompose("SELECT 'open FROM t").is_err());
        assert!(decompose("SELECT (a FROM t").is_err());
        assert!(decompose("DELETE FROM t").is_err());
        assert!(!exact_match("SELECT a FROM", "SELECT a FROM t"));
        let counts = component_counts(Some("garbage ("), "SELECT a FROM t WHERE b = 1");
        assert_eq!(
            counts,
            ComponentCounts {
                matched: 0,
                predicted: 0,
                gold: 2
            }
        );
    }

    #[test]
    fn missing_order_by_recall() {
        let pred = FULL.split(" ORDER BY").next().unwrap();
        let pm: PartialMatch = partial_match(&[Some(pred)], &[FULL]);
        assert_eq!(pm.recall, 80.0);
        assert_eq!(pm.acc, 100.0);
        assert!((pm.f1 - 2.0 * 80.0 * 100.0 / 180.0).abs() < 1e-9);
    }

    #[test]
    fn corpus_level() {
        let golds = ["SELECT a FROM t", FULL];
        let pm: PartialMatch = partial_match(&[Some(golds[0]), Some(golds[1])], &golds);
        assert_eq!((pm.acc, pm.recall, pm.f1), (100.0, 100.0, 100.0));
        let empty: PartialMatch = partial_match(&[None, None], &golds);
        assert_eq!((empty.acc, empty.recall, empty.f1), (0.0, 0.0, 0.0));
        assert_eq!(
            exact_match_accuracy::<f64>(&[Some(golds[0]), None], &golds),
            Some(50.0)
        );
    }
}
