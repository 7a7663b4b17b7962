//! Adversarial statement batches for the read-only SQL tool, checked
//! against a SHA-256 of the database file.

use std::path::Path;

use kgqa_core::fixture::CarCatalog;
use kgqa_core::induction::{induce_database, InductionConfig, RenameConfig};
use kgqa_core::rdf::group_capsules;
use kgqa_core::sql_tool::{execute_readonly, SqlErrorKind, SqlLimits};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn fixture_db(dir: &Path) -> std::path::PathBuf {
    let db = dir.join("kg.db");
    let capsules = group_capsules(&CarCatalog::new().triples());
    induce_database(&capsules, &InductionConfig::default(), &RenameConfig::default(), &db).unwrap();
    db
}

pub fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

pub const WRITES: &[&str] = &[
    "INSERT INTO car (id, model_name) VALUES ('x', 'y')",
    "UPDATE car SET price = 0",
    "DELETE FROM equipment",
    "DROP TABLE car",
    "CREATE TABLE evil (x INT)",
    "ALTER TABLE car ADD COLUMN evil INT",
    "REPLACE INTO transmission VALUES ('a', 'b', 1)",
    "ATTACH DATABASE '/tmp/evil.db' AS evil",
    "PRAGMA user_version = 7",
    "PRAGMA journal_mode = DELETE",
    "VACUUM",
    "REINDEX",
    "CREATE INDEX idx ON car(price)",
    "CREATE TRIGGER t AFTER INSERT ON car BEGIN SELECT 1; END",
    "WITH x AS (SELECT 1) DELETE FROM car",
    "WITH x AS (SELECT id FROM car) UPDATE car SET price = 1 WHERE id IN x",
    "BEGIN IMMEDIATE",
    "ANALYZE",
];

pub const READS: &[&str] = &[
    "SELECT COUNT(*) FROM car",
    "SELECT model_name, price FROM car WHERE price > 40000 ORDER BY price DESC",
    "SELECT AVG(height) FROM car WHERE model_series = 'x1'",
    "WITH s AS (SELECT model_series, AVG(price) p FROM car GROUP BY model_series) SELECT * FROM s",
    "SELECT e.torque FROM car c JOIN engine_specification e ON c.engine_specification = e.id LIMIT 5",
    "VALUES (1, 'a'), (2, 'b')",
    "SELECT 'DROP TABLE car; --' AS harmless",
    "select * from transmission",
];

/// Wraps a statement in random casing, whitespace and comments.
pub fn disguise(rng: &mut ChaCha8Rng, sql: &str) -> String {
    let mut s = match rng.gen_range(0..3) {
        0 => sql.to_string(),
        1 => sql.to_lowercase(),
        _ => sql.to_uppercase().replace("'X'", "'x'"),
    };
    if rng.gen_bool(0.3) {
        s = format!("/* note */ {s}");
    }
    if rng.gen_bool(0.3) {
        s = format!("-- leading comment\n{s}");
    }
    if rng.gen_bool(0.3) {
        s = format!("  \n\t{s}  ");
    }
    if rng.gen_bool(0.3) {
        s.push(';');
    }
    s
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct FuzzStats {
    pub executed: usize,
    pub rejected: usize,
}

/// Runs `count` statements (half plain writes, a quarter read-then-write
/// pairs, a quarter reads) and fails on the first write that is not
/// rejected, read that fails, or change to the file digest.
pub fn fuzz_readonly(db: &Path, count: usize, seed: u64) -> Result<FuzzStats, String> {
    let before = digest(db);
    let limits = SqlLimits::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = FuzzStats::default();
    for i in 0..count {
        let (sql, is_write) = match i % 4 {
            0 | 1 => {
                let write = *WRITES.choose(&mut rng).unwrap();
                (disguise(&mut rng, write), true)
            }
            2 => {
                // A read followed by a smuggled write.
                let read = READS.choose(&mut rng).unwrap();
                let write = WRITES.choose(&mut rng).unwrap();
                (format!("{read}; {write}"), true)
            }
            _ => {
                let read = *READS.choose(&mut rng).unwrap();
                (disguise(&mut rng, read), false)
            }
        };
        match (execute_readonly(db, &sql, &limits), is_write) {
            (Err(e), true) if matches!(e.kind, SqlErrorKind::WriteRejected | SqlErrorKind::SyntaxError) => {
                stats.rejected += 1
            }
            (Ok(_), false) => stats.executed += 1,
            (outcome, _) => return Err(format!("{sql}: unexpected {outcome:?}")),
        }
        if digest(db) != before {
            return Err(format!("database changed after {sql}"));
        }
    }
    Ok(stats)
}
