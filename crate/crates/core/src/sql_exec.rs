//! Read-only SQL execution, result comparison and oracle labeling.

use std::cmp::Ordering;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;
use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};

use crate::generator::statement_end;

/// Absolute tolerance for comparing numeric cells.
pub const REAL_TOLERANCE: f64 = 1e-6;

/// A normalized result cell. Blobs are rendered as lowercase hex text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
}

impl Cell {
    fn rank(&self) -> u8 {
        match self {
            Cell::Null => 0,
            Cell::Integer(_) | Cell::Real(_) => 1,
            Cell::Text(_) => 2,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Integer(i) => Some(*i as f64),
            Cell::Real(r) => Some(*r),
            _ => None,
        }
    }

    /// Equality with integers and reals compared numerically under
    /// [`REAL_TOLERANCE`].
    pub fn matches(&self, other: &Cell) -> bool {
        match (self, other) {
            (Cell::Null, Cell::Null) => true,
            (Cell::Integer(a), Cell::Integer(b)) => a == b,
            (Cell::Text(a), Cell::Text(b)) => a == b,
            (a, b) => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => x == y || (x - y).abs() <= REAL_TOLERANCE,
                _ => false,
            },
        }
    }

    /// Total order used to canonicalize multisets: null < numbers < text.
    pub fn total_cmp(&self, other: &Cell) -> Ordering {
        match (self, other) {
            (Cell::Integer(a), Cell::Integer(b)) => a.cmp(b),
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            (a, b) if a.rank() == 1 && b.rank() == 1 => {
                a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap())
            }
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl From<ValueRef<'_>> for Cell {
    fn from(v: ValueRef<'_>) -> Self {
        match v {
            ValueRef::Null => Cell::Null,
            ValueRef::Integer(i) => Cell::Integer(i),
            ValueRef::Real(r) => Cell::Real(r),
            ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Cell::Text(hex::encode(b)),
        }
    }
}

pub type Row = Vec<Cell>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    ExecError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub status: ExecStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Row>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_text: Option<String>,
}

impl ExecOutcome {
    pub fn ok(rows: Vec<Row>) -> Self {
        Self {
            status: ExecStatus::Ok,
            rows: Some(rows),
            error_text: None,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            status: ExecStatus::ExecError,
            rows: None,
            error_text: Some(message.into()),
        }
    }

    pub fn timeout() -> Self {
        Self {
            status: ExecStatus::Timeout,
            rows: None,
            error_text: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecLimits {
    pub timeout_ms: u64,
    pub row_cap: usize,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            timeout_ms: 5_000,
            row_cap: 1_000,
        }
    }
}

impl ExecLimits {
    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// Removes leading whitespace, `--` / `/* */` comments and opening parens.
fn strip_leading_noise(sql: &str) -> &str {
    let mut s = sql;
    loop {
        let t = s.trim_start().trim_start_matches('(');
        if let Some(rest) = t.strip_prefix("--") {
            s = rest.split_once('\n').map_or("", |(_, r)| r);
        } else if let Some(rest) = t.strip_prefix("/*") {
            s = rest.split_once("*/").map_or("", |(_, r)| r);
        } else if t.len() != s.len() {
            s = t;
        } else {
            return s;
        }
    }
}

/// True when the statement begins with `SELECT` or `WITH`.
pub fn is_select_statement(sql: &str) -> bool {
    let head: String = strip_leading_noise(sql)
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect();
    head.eq_ignore_ascii_case("select") || head.eq_ignore_ascii_case("with")
}

/// Runs one query read-only, returning at most `row_cap` rows. Execution is
/// interrupted once `timeout` has elapsed.
pub fn execute(db_path: &Path, sql: &str, limits: &ExecLimits) -> ExecOutcome {
    let sql = sql
        .trim()
        .trim_end_matches(|c: char| c == ';' || c.is_whitespace());
    if sql.is_empty() {
        return ExecOutcome::error("empty query");
    }
    if !is_select_statement(sql) {
        return ExecOutcome::error("only SELECT statements may be executed");
    }
    if statement_end(sql).is_some() {
        return ExecOutcome::error("only a single statement may be executed");
    }
    let conn = match Connection::open_with_flags(
        db_path,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
    ) {
        Ok(c) => c,
        Err(e) => return ExecOutcome::error(format!("cannot open database: {e}")),
    };
    if let Err(e) = conn.pragma_update(None, "query_only", true) {
        return ExecOutcome::error(e.to_string());
    }
    let deadline = Instant::now() + limits.timeout();
    conn.progress_handler(1_000, Some(move || Instant::now() >= deadline));

    run_query(&conn, sql, limits.row_cap, deadline)
}

fn run_query(conn: &Connection, sql: &str, row_cap: usize, deadline: Instant) -> ExecOutcome {
    let classify = |e: rusqlite::Error| -> ExecOutcome {
        match e.sqlite_error_code() {
            Some(rusqlite::ErrorCode::OperationInterrupted) => ExecOutcome::timeout(),
            _ if Instant::now() >= deadline => ExecOutcome::timeout(),
            _ => ExecOutcome::error(e.to_string()),
        }
    };
    let mut stmt = match conn.prepare(sql) {
        Ok(s) => s,
        Err(e) => return classify(e),
    };
    if !stmt.readonly() {
        return ExecOutcome::error("statement is not read-only");
    }
    let width = stmt.column_count();
    let mut rows = match stmt.query([]) {
        Ok(r) => r,
        Err(e) => return classify(e),
    };
    let mut out = Vec::new();
    while out.len() < row_cap {
        match rows.next() {
            Ok(Some(row)) => {
                let cells = (0..width)
                    .map(|i| row.get_ref(i).map(Cell::from))
                    .collect::<Result<Row, _>>();
                match cells {
                    Ok(c) => out.push(c),
                    Err(e) => return classify(e),
                }
            }
            Ok(None) => break,
            Err(e) => return classify(e),
        }
    }
    ExecOutcome::ok(out)
}

/// Absent queries are not executable and are never run.
pub fn is_executable(db_path: &Path, sql: Option<&str>, limits: &ExecLimits) -> bool {
    sql.is_some_and(|q| execute(db_path, q, limits).is_ok())
}

fn literal_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"'(?:[^']|'')*'|"(?:[^"]|"")*""#).unwrap())
}

/// Whether the query contains `ORDER BY` outside string literals.
pub fn gold_has_order_by(sql: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    let order = RE.get_or_init(|| Regex::new(r"(?i)\border\s+by\b").unwrap());
    order.is_match(&literal_pattern().replace_all(sql, "''"))
}

fn cmp_rows(a: &Row, b: &Row) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

fn rows_match(a: &Row, b: &Row) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.matches(y))
}

fn lists_match(a: &[Row], b: &[Row]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| rows_match(x, y))
}

/// Result equivalence: ordered when the gold query sorts, otherwise as row
/// multisets. Any failed execution compares unequal.
pub fn compare_execution(pred: &ExecOutcome, gold: &ExecOutcome, gold_has_order_by: bool) -> bool {
    let (Some(p), Some(g)) = (&pred.rows, &gold.rows) else {
        return false;
    };
    if !(pred.is_ok() && gold.is_ok()) {
        return false;
    }
    if gold_has_order_by {
        return lists_match(p, g);
    }
    let mut p = p.clone();
    let mut g = g.clone();
    p.sort_by(cmp_rows);
    g.sort_by(cmp_rows);
    lists_match(&p, &g)
}

fn top_cells(rows: &[Row], k: usize) -> Vec<Cell> {
    let mut cells: Vec<Cell> = rows.iter().take(k).flatten().cloned().collect();
    cells.sort_by(Cell::total_cmp);
    cells
}

/// `|P ∩ G| / max(|P|, |G|)` over the cells of the first `k` rows of each
/// result; 1 when both are empty.
pub fn cell_overlap(pred_rows: &[Row], gold_rows: &[Row], k: usize) -> f64 {
    let p = top_cells(pred_rows, k);
    let g = top_cells(gold_rows, k);
    let denom = p.len().max(g.len());
    if denom == 0 {
        return 1.0;
    }
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < p.len() && j < g.len() {
        if p[i].matches(&g[j]) {
            common += 1;
            i += 1;
            j += 1;
        } else if p[i].total_cmp(&g[j]).is_lt() {
            i += 1;
        } else {
            j += 1;
        }
    }
    common as f64 / denom as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub k: usize,
    pub threshold: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            k: 5,
            threshold: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleLabel {
    pub correct: bool,
    pub overlap: f64,
}

/// Labels an executed prediction against an executed gold query.
pub fn label_outcomes(
    pred: &ExecOutcome,
    gold: &ExecOutcome,
    config: &OracleConfig,
) -> OracleLabel {
    match (&pred.rows, &gold.rows) {
        (Some(p), Some(g)) if pred.is_ok() && gold.is_ok() => {
            let overlap = cell_overlap(p, g, config.k);
            OracleLabel {
                correct: overlap >= config.threshold,
                overlap,
            }
        }
        _ => OracleLabel {
            correct: false,
            overlap: 0.0,
        },
    }
}

pub fn oracle_label(
    db_path: &Path,
    pred_sql: Option<&str>,
    gold_sql: &str,
    config: &OracleConfig,
    limits: &ExecLimits,
) -> OracleLabel {
    let Some(pred_sql) = pred_sql else {
        return OracleLabel {
            correct: false,
            overlap: 0.0,
        };
    };
    let pred = execute(db_path, pred_sql, limits);
    if !pred.is_ok() {
        return OracleLabel {
            correct: false,
            overlap: 0.0,
        };
    }
    label_outcomes(&pred, &execute(db_path, gold_sql, limits), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn int_rows(v: &[i64]) -> Vec<Row> {
        v.iter().map(|i| vec![Cell::Integer(*i)]).collect()
    }

    fn temp_db() -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.sqlite");
        let conn = Connection::open(&path).unwrap();
        conn.execute_batch(
            "CREATE TABLE singer(id INTEGER PRIMARY KEY, name TEXT, country TEXT, age INTEGER, net REAL);
             INSERT INTO singer VALUES (1,'Joe','France',52,1.5),(2,'Ann','Netherlands',32,2.25),(3,'Tim','France',19,NULL);",
        )
        .unwrap();
        (dir, path)
    }

    #[test]
    fn select_one() {
        let (_d, db) = temp_db();
        let out = execute(&db, "SELECT 1;", &ExecLimits::default());
        assert_eq!(out, ExecOutcome::ok(vec![vec![Cell::Integer(1)]]));
    }

    #[test]
    fn syntax_error_and_missing_table() {
        let (_d, db) = temp_db();
        let limits = ExecLimits::default();
        let out = execute(&db, "SELEC 1;", &limits);
        assert_eq!(out.status, ExecStatus::ExecError);
        assert!(out.rows.is_none() && out.error_text.is_some());
        assert!(!is_executable(&db, Some("SELECT * FROM nope"), &limits));
        assert!(is_executable(
            &db,
            Some("SELECT name FROM singer WHERE age > 20"),
            &limits
        ));
        assert!(!is_executable(&db, None, &limits));
    }

    #[test]
    fn writes_are_rejected() {
        let (_d, db) = temp_db();
        let before = std::fs::read(&db).unwrap();
        let limits = ExecLimits::default();
        for sql in [
            "DELETE FROM singer",
            "DROP TABLE singer",
            "WITH x AS (SELECT 1) DELETE FROM singer",
            "SELECT 1; DELETE FROM singer",
            "ATTACH DATABASE ':memory:' AS m",
        ] {
            assert_ne!(execute(&db, sql, &limits).status, ExecStatus::Ok, "{sql}");
        }
        assert_eq!(before, std::fs::read(&db).unwrap());
    }

    #[test]
    fn recursive_cte_bomb_times_out() {
        let (_d, db) = temp_db();
        let before = std::fs::read(&db).unwrap();
        let limits = ExecLimits {
            timeout_ms: 2_000,
            row_cap: 1_000,
        };
        let start = Instant::now();
        let out = execute(
            &db,
            "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT count(*) FROM c",
            &limits,
        );
        assert_eq!(out.status, ExecStatus::Timeout);
        assert!(start.elapsed() < Duration::from_secs(4));
        assert_eq!(before, std::fs::read(&db).unwrap());
    }

    #[test]
    fn row_cap_applies() {
        let (_d, db) = temp_db();
        let limits = ExecLimits {
            timeout_ms: 5_000,
            row_cap: 2,
        };
        let out = execute(&db, "SELECT name FROM singer", &limits);
        assert_eq!(out.rows.unwrap().len(), 2);
    }

    #[test]
    fn cells_are_typed() {
        let (_d, db) = temp_db();
        let out = execute(
            &db,
            "SELECT id, name, net, x'00ff' FROM singer WHERE id = 3",
            &ExecLimits::default(),
        );
        assert_eq!(
            out.rows.unwrap(),
            vec![vec![
                Cell::Integer(3),
                Cell::Text("Tim".into()),
                Cell::Null,
                Cell::Text("00ff".into())
            ]]
        );
    }

    #[test]
    fn comparison_semantics() {
        let a = ExecOutcome::ok(int_rows(&[1, 2, 3]));
        let b = ExecOutcome::ok(int_rows(&[3, 1, 2]));
        assert!(compare_execution(&a, &a, true));
        assert!(compare_execution(&a, &b, false));
        assert!(!compare_execution(&a, &b, true));
        let err = ExecOutcome::error("x");
        assert!(!compare_execution(&err, &err, false));
        let r1 = ExecOutcome::ok(vec![vec![Cell::Real(0.1 + 0.2)]]);
        let r2 = ExecOutcome::ok(vec![vec![Cell::Real(0.3)]]);
        assert!(compare_execution(&r1, &r2, false));
        let i = ExecOutcome::ok(vec![vec![Cell::Integer(3)]]);
        let f = ExecOutcome::ok(vec![vec![Cell::Real(3.0)]]);
        assert!(compare_execution(&i, &f, false));
        // Cell order within a row matters.
        let ab = ExecOutcome::ok(vec![vec![Cell::Integer(1), Cell::Integer(2)]]);
        let ba = ExecOutcome::ok(vec![vec![Cell::Integer(2), Cell::Integer(1)]]);
        assert!(!compare_execution(&ab, &ba, false));
    }

    #[test]
    fn order_by_detection() {
        assert!(gold_has_order_by("SELECT a FROM t ORDER  BY a"));
        assert!(gold_has_order_by("select a from t order\nby a desc"));
        assert!(!gold_has_order_by("SELECT a FROM t WHERE b = 'order by'"));
        assert!(!gold_has_order_by("SELECT border_by FROM t"));
    }

    #[test]
    fn overlap_hand_cases() {
        assert_eq!(
            cell_overlap(&int_rows(&[1, 2, 3]), &int_rows(&[1, 2, 3]), 5),
            1.0
        );
        assert_eq!(cell_overlap(&int_rows(&[1, 2]), &int_rows(&[3, 4]), 5), 0.0);
        assert_eq!(
            cell_overlap(&int_rows(&[1, 2, 3]), &int_rows(&[2, 3, 4]), 5),
            2.0 / 3.0
        );
        assert_eq!(cell_overlap(&[], &[], 5), 1.0);
        // Only the first k rows count.
        assert_eq!(
            cell_overlap(&int_rows(&[1, 2, 9]), &int_rows(&[1, 2, 8]), 2),
            1.0
        );
        // Multiset, not set.
        assert_eq!(cell_overlap(&int_rows(&[1, 1]), &int_rows(&[1, 2]), 5), 0.5);
    }

    #[test]
    fn oracle_labels() {
        let (_d, db) = temp_db();
        let cfg = OracleConfig::default();
        let limits = ExecLimits::default();
        let gold = "SELECT name FROM singer";
        let same = oracle_label(&db, Some(gold), gold, &cfg, &limits);
        assert_eq!((same.correct, same.overlap), (true, 1.0));
        let bad = oracle_label(&db, Some("SELEC name"), gold, &cfg, &limits);
        assert_eq!((bad.correct, bad.overlap), (false, 0.0));
        let partial = oracle_label(
            &db,
            Some("SELECT name FROM singer WHERE id < 3"),
            gold,
            &cfg,
            &limits,
        );
        assert!(!partial.correct);
        assert!((partial.overlap - 2.0 / 3.0).abs() < 1e-12);
        let lenient = OracleConfig {
            threshold: 0.6,
            ..cfg
        };
        assert!(
            oracle_label(
                &db,
                Some("SELECT name FROM singer WHERE id < 3"),
                gold,
                &lenient,
                &limits
            )
            .correct
        );
    }

    fn cell_strategy() -> impl Strategy<Value = Cell> {
        prop_oneof![
            Just(Cell::Null),
            (-5i64..5).prop_map(Cell::Integer),
            (-5i32..5).prop_map(|x| Cell::Real(x as f64 / 2.0)),
            "[a-c]{0,2}".prop_map(Cell::Text),
        ]
    }

    fn rows_strategy() -> impl Strategy<Value = Vec<Row>> {
        prop::collection::vec(prop::collection::vec(cell_strategy(), 2), 0..8)
    }

    proptest! {
        #[test]
        fn overlap_symmetric_and_bounded(a in rows_strategy(), b in rows_strategy(), k in 1usize..6) {
            let x = cell_overlap(&a, &b, k);
            prop_assert_eq!(x, cell_overlap(&b, &a, k));
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert_eq!(cell_overlap(&a, &a, k), 1.0);
        }

        #[test]
        fn multiset_comparison_ignores_pred_order(rows in rows_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let gold = ExecOutcome::ok(rows);
            prop_assert!(compare_execution(&ExecOutcome::ok(shuffled), &gold, false));
        }
    }
}
