//! Spider-format ingestion: examples, table descriptors, database layout,
//! difficulty sidecars, balanced sampling and prompt schema context.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} is not valid JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: expected a JSON array at top level")]
    NotAnArray { path: PathBuf },
    #[error("example record {index}: {reason}")]
    BadRecord { index: usize, reason: String },
    #[error("unknown difficulty label {0:?}")]
    UnknownDifficulty(String),
    #[error("difficulty sidecar line {line}: {reason}")]
    BadSidecar { line: usize, reason: String },
    #[error("duplicate db_id {0:?} in tables file")]
    DuplicateDb(String),
    #[error("schema {db_id}: {reason}")]
    BadSchema { db_id: String, reason: String },
    #[error("not enough {tier} examples: need {needed}, have {available}")]
    InsufficientTier {
        tier: Difficulty,
        needed: usize,
        available: usize,
    },
    #[error("example {id}: database {db_id:?} not found at {path}")]
    MissingDatabase {
        id: String,
        db_id: String,
        path: PathBuf,
    },
    #[error("example {id}: no schema for database {db_id:?}")]
    MissingSchema { id: String, db_id: String },
}

/// Spider difficulty tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Extra,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [
        Difficulty::Easy,
        Difficulty::Medium,
        Difficulty::Hard,
        Difficulty::Extra,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
            Difficulty::Extra => "extra",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            "extra" | "extra-hard" | "extra_hard" | "extra hard" => Ok(Difficulty::Extra),
            _ => Err(DatasetError::UnknownDifficulty(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskExample {
    pub id: String,
    pub question: String,
    pub gold_sql: String,
    pub db_id: String,
    pub difficulty: Difficulty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbSchema {
    pub db_id: String,
    pub tables: Vec<TableSchema>,
}

impl DbSchema {
    /// Builds a schema, enforcing name uniqueness and non-empty tables.
    pub fn new(db_id: impl Into<String>, tables: Vec<TableSchema>) -> Result<Self, DatasetError> {
        let db_id = db_id.into();
        let bad = |reason: String| DatasetError::BadSchema {
            db_id: db_id.clone(),
            reason,
        };
        let mut seen_tables = HashSet::new();
        for table in &tables {
            if !seen_tables.insert(table.name.as_str()) {
                return Err(bad(format!("duplicate table {:?}", table.name)));
            }
            if table.columns.is_empty() {
                return Err(bad(format!("table {:?} has no columns", table.name)));
            }
            let mut seen_cols = HashSet::new();
            for col in &table.columns {
                if !seen_cols.insert(col.as_str()) {
                    return Err(bad(format!(
                        "duplicate column {:?} in table {:?}",
                        col, table.name
                    )));
                }
            }
        }
        Ok(Self { db_id, tables })
    }
}

fn read_json_array(path: &Path) -> Result<Vec<Value>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    match value {
        Value::Array(items) => Ok(items),
        _ => Err(DatasetError::NotAnArray {
            path: path.to_path_buf(),
        }),
    }
}

/// Reads a difficulty sidecar: one `index<TAB>tier` record per line.
/// Blank lines and lines starting with `#` are skipped.
pub fn load_difficulty_sidecar(path: &Path) -> Result<BTreeMap<usize, Difficulty>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut tiers = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (index, tier) = line
            .split_once('\t')
            .ok_or_else(|| DatasetError::BadSidecar {
                line: n + 1,
                reason: "expected `index<TAB>tier`".into(),
            })?;
        let index: usize = index.trim().parse().map_err(|_| DatasetError::BadSidecar {
            line: n + 1,
            reason: format!("bad index {index:?}"),
        })?;
        tiers.insert(index, tier.parse()?);
    }
    Ok(tiers)
}

/// Loads a Spider examples file. Difficulty comes from the sidecar when
/// given, otherwise from an inline `difficulty` or `hardness` field.
pub fn load_examples(
    examples_path: &Path,
    difficulty_sidecar: Option<&Path>,
) -> Result<Vec<TaskExample>, DatasetError> {
    let records = read_json_array(examples_path)?;
    let sidecar = difficulty_sidecar
        .map(load_difficulty_sidecar)
        .transpose()?;

    records
        .iter()
        .enumerate()
        .map(|(index, record)| {
            let bad = |reason: &str| DatasetError::BadRecord {
                index,
                reason: reason.to_string(),
            };
            let obj = record.as_object().ok_or_else(|| bad("not an object"))?;
            let field = |name: &str| -> Result<String, DatasetError> {
                match obj.get(name) {
                    Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
                    Some(Value::String(_)) => Err(bad(&format!("`{name}` is empty"))),
                    Some(_) => Err(bad(&format!("`{name}` is not a string"))),
                    None => Err(bad(&format!("missing `{name}`"))),
                }
            };
            let question = field("question")?;
            let gold_sql = field("query")?;
            let db_id = field("db_id")?;
            let id = match obj.get("id") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => index.to_string(),
            };
            let difficulty = match &sidecar {
                Some(tiers) => *tiers
                    .get(&index)
                    .ok_or_else(|| bad("no difficulty in sidecar"))?,
                None => {
                    let label = obj
                        .get("difficulty")
                        .or_else(|| obj.get("hardness"))
                        .and_then(Value::as_str)
                        .ok_or_else(|| bad("no difficulty label (inline or sidecar)"))?;
                    label.parse()?
                }
            };
            Ok(TaskExample {
                id,
                question,
                gold_sql,
                db_id,
                difficulty,
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct RawTables {
    db_id: String,
    table_names_original: Vec<String>,
    column_names_original: Vec<(i64, String)>,
}

/// Loads a Spider tables descriptor. Table and column names are lowercased,
/// which is how they appear in prompt schema context.
pub fn load_schemas(tables_path: &Path) -> Result<BTreeMap<String, DbSchema>, DatasetError> {
    let records = read_json_array(tables_path)?;
    let mut schemas = BTreeMap::new();
    for (index, record) in records.into_iter().enumerate() {
        let raw: RawTables =
            serde_json::from_value(record).map_err(|e| DatasetError::BadSchema {
                db_id: format!("#{index}"),
                reason: e.to_string(),
            })?;
        let mut tables: Vec<TableSchema> = raw
            .table_names_original
            .iter()
            .map(|name| TableSchema {
                name: name.to_lowercase(),
                columns: Vec::new(),
            })
            .collect();
        for (table_index, column) in &raw.column_names_original {
            // Spider's `*` pseudo-column carries table index -1.
            if *table_index < 0 {
                continue;
            }
            let table =
                tables
                    .get_mut(*table_index as usize)
                    .ok_or_else(|| DatasetError::BadSchema {
                        db_id: raw.db_id.clone(),
                        reason: format!(
                            "column {column:?} references table index {table_index} out of range"
                        ),
                    })?;
            table.columns.push(column.to_lowercase());
        }
        let schema = DbSchema::new(raw.db_id.clone(), tables)?;
        if schemas.insert(raw.db_id.clone(), schema).is_some() {
            return Err(DatasetError::DuplicateDb(raw.db_id));
        }
    }
    Ok(schemas)
}

/// `<root>/<db_id>/<db_id>.sqlite`
pub fn database_path(db_root: &Path, db_id: &str) -> PathBuf {
    db_root.join(db_id).join(format!("{db_id}.sqlite"))
}

/// Orders ids numerically when both are integers, lexically otherwise.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Draws exactly `n_per_tier` examples from each tier with a seeded RNG and
/// returns them sorted by `(tier, id)`.
pub fn sample_balanced(
    examples: &[TaskExample],
    n_per_tier: usize,
    seed: u64,
) -> Result<Vec<TaskExample>, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(4 * n_per_tier);
    for tier in Difficulty::ALL {
        let mut pool: Vec<&TaskExample> =
            examples.iter().filter(|e| e.difficulty == tier).collect();
        if pool.len() < n_per_tier {
            return Err(DatasetError::InsufficientTier {
                tier,
                needed: n_per_tier,
                available: pool.len(),
            });
        }
        // Canonical pool order so the draw depends only on content and seed.
        pool.sort_by(|a, b| compare_ids(&a.id, &b.id));
        out.extend(
            pool.choose_multiple(&mut rng, n_per_tier)
                .map(|e| (*e).clone()),
        );
    }
    sort_examples(&mut out);
    Ok(out)
}

pub fn sort_examples(examples: &mut [TaskExample]) {
    examples.sort_by(|a, b| {
        a.difficulty
            .cmp(&b.difficulty)
            .then_with(|| compare_ids(&a.id, &b.id))
    });
}

/// Comment-style schema lines used in every prompt:
/// `-- Table <name>: <col1>, <col2>, ...`
pub fn format_schema_context(schema: &DbSchema) -> String {
    schema
        .tables
        .iter()
        .map(|t| format!("-- Table {}: {}", t.name, t.columns.join(", ")))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Locations of a Spider-layout dataset on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub examples: PathBuf,
    pub tables: PathBuf,
    pub db_root: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<PathBuf>,
}

/// A loaded dataset whose examples are checked against schemas and
/// database files.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub examples: Vec<TaskExample>,
    pub schemas: BTreeMap<String, DbSchema>,
    pub db_root: PathBuf,
}

impl Dataset {
    pub fn open(paths: &DatasetPaths) -> Result<Self, DatasetError> {
        let examples = load_examples(&paths.examples, paths.difficulty.as_deref())?;
        let schemas = load_schemas(&paths.tables)?;
        for e in &examples {
            let db = database_path(&paths.db_root, &e.db_id);
            if !db.is_file() {
                return Err(DatasetError::MissingDatabase {
                    id: e.id.clone(),
                    db_id: e.db_id.clone(),
                    path: db,
                });
            }
            if !schemas.contains_key(&e.db_id) {
                return Err(DatasetError::MissingSchema {
                    id: e.id.clone(),
                    db_id: e.db_id.clone(),
                });
            }
        }
        Ok(Self {
            examples,
            schemas,
            db_root: paths.db_root.clone(),
        })
    }

    pub fn schema(&self, example: &TaskExample) -> &DbSchema {
        &self.schemas[&example.db_id]
    }

    pub fn db_path(&self, example: &TaskExample) -> PathBuf {
        database_path(&self.db_root, &example.db_id)
    }

    pub fn find(&self, id: &str) -> Option<&TaskExample> {
        self.examples.iter().find(|e| e.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        fs::File::create(&path)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        path
    }

    fn example(id: usize, tier: Difficulty) -> TaskExample {
        TaskExample {
            id: id.to_string(),
            question: format!("q{id}"),
            gold_sql: "SELECT 1".into(),
            db_id: "db".into(),
            difficulty: tier,
        }
    }

    #[test]
    fn loads_inline_difficulty_and_index_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "dev.json",
            r#"[{"question":"How many?","query":"SELECT count(*) FROM t","db_id":"d","hardness":"easy"},
                {"question":"Which?","query":"SELECT a FROM t","db_id":"d","difficulty":"extra"}]"#,
        );
        let ex = load_examples(&path, None).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].id, "0");
        assert_eq!(ex[1].id, "1");
        assert_eq!(ex[1].difficulty, Difficulty::Extra);
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "dev.json", "[]");
        assert!(load_examples(&path, None).unwrap().is_empty());
    }

    #[test]
    fn missing_query_names_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "dev.json",
            r#"[{"question":"How many?","db_id":"d","hardness":"easy"}]"#,
        );
        match load_examples(&path, None) {
            Err(DatasetError::BadRecord { index: 0, reason }) => assert!(reason.contains("query")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sidecar_supplies_tiers_and_rejects_unknown_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "dev.json",
            r#"[{"question":"a","query":"SELECT 1","db_id":"d"},{"question":"b","query":"SELECT 2","db_id":"d"}]"#,
        );
        let side = write(dir.path(), "tiers.tsv", "0\thard\n1\tmedium\n");
        let ex = load_examples(&path, Some(&side)).unwrap();
        assert_eq!(ex[0].difficulty, Difficulty::Hard);
        assert_eq!(ex[1].difficulty, Difficulty::Medium);

        let bad = write(dir.path(), "bad.tsv", "0\thard\n1\tsuper-hard\n");
        assert!(matches!(
            load_examples(&path, Some(&bad)),
            Err(DatasetError::UnknownDifficulty(_))
        ));
    }

    #[test]
    fn loads_tables_and_rejects_dangling_column() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(
            dir.path(),
            "tables.json",
            r#"[{"db_id":"concert_singer",
                 "table_names_original":["stadium","singer","concert","singer_in_concert"],
                 "column_names_original":[[-1,"*"],[0,"Stadium_ID"],[0,"Location"],[1,"Singer_ID"],[1,"Name"],
                    [2,"concert_ID"],[3,"concert_ID"],[3,"Singer_ID"]]}]"#,
        );
        let map = load_schemas(&ok).unwrap();
        assert_eq!(map.len(), 1);
        let s = &map["concert_singer"];
        assert_eq!(s.tables.len(), 4);
        assert_eq!(s.tables[0].columns, vec!["stadium_id", "location"]);

        let empty = write(dir.path(), "empty.json", "[]");
        assert!(load_schemas(&empty).unwrap().is_empty());

        let dangling = write(
            dir.path(),
            "bad.json",
            r#"[{"db_id":"x","table_names_original":["t"],"column_names_original":[[0,"a"],[3,"b"]]}]"#,
        );
        assert!(matches!(
            load_schemas(&dangling),
            Err(DatasetError::BadSchema { .. })
        ));

        let dup = write(
            dir.path(),
            "dup.json",
            r#"[{"db_id":"x","table_names_original":["t"],"column_names_original":[[0,"a"]]},
                {"db_id":"x","table_names_original":["t"],"column_names_original":[[0,"a"]]}]"#,
        );
        assert!(matches!(
            load_schemas(&dup),
            Err(DatasetError::DuplicateDb(_))
        ));
    }

    #[test]
    fn schema_context_lines() {
        let one = DbSchema::new(
            "d",
            vec![TableSchema {
                name: "t".into(),
                columns: vec!["c".into()],
            }],
        )
        .unwrap();
        assert_eq!(format_schema_context(&one), "-- Table t: c");

        let two = DbSchema::new(
            "d",
            vec![
                TableSchema {
                    name: "b".into(),
                    columns: vec!["x".into(), "y".into()],
                },
                TableSchema {
                    name: "a".into(),
                    columns: vec!["z".into()],
                },
            ],
        )
        .unwrap();
        assert_eq!(
            format_schema_context(&two),
            "-- Table b: x, y\n-- Table a: z"
        );
    }

    #[test]
    fn schema_invariants_enforced() {
        let t = |n: &str, cols: &[&str]| TableSchema {
            name: n.into(),
            columns: cols.iter().map(|c| c.to_string()).collect(),
        };
        assert!(DbSchema::new("d", vec![t("a", &[])]).is_err());
        assert!(DbSchema::new("d", vec![t("a", &["x"]), t("a", &["y"])]).is_err());
        assert!(DbSchema::new("d", vec![t("a", &["x", "x"])]).is_err());
    }

    #[test]
    fn balanced_sampling() {
        let mut pool = Vec::new();
        for i in 0..40 {
            pool.push(example(i, Difficulty::ALL[i % 4]));
        }
        let s = sample_balanced(&pool, 5, 7).unwrap();
        assert_eq!(s.len(), 20);
        for tier in Difficulty::ALL {
            assert_eq!(s.iter().filter(|e| e.difficulty == tier).count(), 5);
        }
        assert_eq!(s, sample_balanced(&pool, 5, 7).unwrap());
        assert!(sample_balanced(&pool, 0, 7).unwrap().is_empty());
        match sample_balanced(&pool, 11, 7) {
            Err(DatasetError::InsufficientTier { tier, .. }) => assert_eq!(tier, Difficulty::Easy),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ids_sort_numerically() {
        let mut v = vec!["10", "9", "100", "a"];
        v.sort_by(|a, b| compare_ids(a, b));
        assert_eq!(v, vec!["9", "10", "100", "a"]);
    }
}
