//! Persistent store of refuted subtyping judgments.
//!
//! The store is an append-only JSON-lines file. Each refutation is keyed by a
//! canonical rendering of the compile-time judgment `env ⊢ S <: T` (env cut
//! down to the bindings reachable from `S` and `T`, binders de Bruijn
//! normalized) and carries a closed run-time cast plus the value that made it
//! fail, so the entry can be replayed on load.

use crate::ast::*;
use crate::eval::{evaluate, StepOutcome};
use crate::surface::{parse_term, parse_type, print_term, print_type, ParseOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_DB_PATH: &str = ".hytc-db.jsonl";
const REPLAY_FUEL: u64 = 100_000;

#[derive(Debug, Error)]
pub enum DbError {
    #[error("database I/O on {path}: {source}")]
    StoreIO { path: String, source: std::io::Error },
    #[error("witness does not fail the recorded cast: {0}")]
    Validation(String),
}

/// Canonical identity of a judgment `env ⊢ S <: T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JudgmentKey {
    pub hash: String,
    pub env: String,
    pub source: String,
    pub target: String,
}

impl JudgmentKey {
    pub fn new(env: &Env, s: &Type, t: &Type) -> JudgmentKey {
        let mut roots: BTreeSet<Name> = free_vars_type(s);
        roots.extend(free_vars_type(t));
        let env = env.restrict(&roots);
        let mut canon = Canon::new();
        let mut parts = Vec::new();
        for (i, (x, ty)) in env.entries().iter().enumerate() {
            parts.push(print_type(&canon.ty(ty)));
            canon.bind_free(x, &format!("%g{i}"));
        }
        let env_text = parts.join(", ");
        let source = print_type(&canon.ty(s));
        let target = print_type(&canon.ty(t));
        let hash = hex::encode(Sha256::digest(format!("{env_text}\n{source}\n{target}").as_bytes()));
        JudgmentKey { hash, env: env_text, source, target }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CexEntry {
    pub key: String,
    pub env: String,
    pub source: String,
    pub target: String,
    /// Closed cast that failed at run time, and the failing value.
    pub cast_source: String,
    pub cast_target: String,
    pub witness: String,
    pub program: String,
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaybeEntry {
    pub key: String,
    pub env: String,
    pub source: String,
    pub target: String,
    pub program: String,
    pub timestamp: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Cex(CexEntry),
    Maybe(MaybeEntry),
}

/// Content hash naming a program.
pub fn program_id(source_text: &str) -> String {
    hex::encode(Sha256::digest(source_text.as_bytes()))[..16].to_string()
}

fn now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Replays the stored cast on the stored witness; `Ok` iff it fails.
pub fn validate_entry(e: &CexEntry) -> Result<(), String> {
    let opts = ParseOptions { allow_exists: true };
    let s = parse_type(&e.cast_source, &[], opts).map_err(|x| format!("source type: {x}"))?;
    let t = parse_type(&e.cast_target, &[], opts).map_err(|x| format!("target type: {x}"))?;
    let w = parse_term(&e.witness, &[], opts).map_err(|x| format!("witness: {x}"))?;
    match evaluate(&Term::app(Term::cast(s, t), w), REPLAY_FUEL) {
        Ok(StepOutcome::FailedCast(_)) => Ok(()),
        Ok(StepOutcome::Value(v)) => Err(format!("cast succeeded with {v}")),
        Ok(StepOutcome::OutOfFuel(_)) => Err("replay ran out of fuel".into()),
        Ok(StepOutcome::Stepped(_)) => Err("replay did not finish".into()),
        Err(x) => Err(x.to_string()),
    }
}

#[derive(Debug, Default)]
pub struct CexStore {
    path: Option<PathBuf>,
    cex: BTreeMap<String, CexEntry>,
    maybes: Vec<MaybeEntry>,
    /// Diagnostics from loading (bad lines, stale witnesses).
    pub warnings: Vec<String>,
}

impl CexStore {
    pub fn in_memory() -> CexStore {
        CexStore::default()
    }

    /// Loads and revalidates a store; a missing file is an empty store.
    pub fn open(path: &Path) -> Result<CexStore, DbError> {
        let mut st = CexStore { path: Some(path.to_path_buf()), ..Default::default() };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(st),
            Err(e) => return Err(DbError::StoreIO { path: path.display().to_string(), source: e }),
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| DbError::StoreIO { path: path.display().to_string(), source: e })?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Record>(&line) {
                Ok(Record::Cex(e)) => match validate_entry(&e) {
                    Ok(()) => {
                        st.cex.entry(e.key.clone()).or_insert(e);
                    }
                    Err(why) => st.warnings.push(format!("line {}: dropped entry: {why}", i + 1)),
                },
                Ok(Record::Maybe(m)) => st.maybes.push(m),
                Err(err) => st.warnings.push(format!("line {}: skipped: {err}", i + 1)),
            }
        }
        Ok(st)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CexEntry> {
        self.cex.values()
    }

    pub fn len(&self) -> usize {
        self.cex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cex.is_empty()
    }

    pub fn refuted(&self, env: &Env, s: &Type, t: &Type) -> bool {
        self.cex.contains_key(&JudgmentKey::new(env, s, t).hash)
    }

    pub fn lookup(&self, env: &Env, s: &Type, t: &Type) -> Option<&CexEntry> {
        self.cex.get(&JudgmentKey::new(env, s, t).hash)
    }

    /// Records a refutation. The run-time cast `<cast_s => cast_t> witness` must fail.
    /// Returns false when the judgment was already refuted (the earlier witness is kept).
    pub fn record(
        &mut self,
        key: &JudgmentKey,
        cast_s: &Type,
        cast_t: &Type,
        witness: &Term,
        program: &str,
    ) -> Result<bool, DbError> {
        let entry = CexEntry {
            key: key.hash.clone(),
            env: key.env.clone(),
            source: key.source.clone(),
            target: key.target.clone(),
            cast_source: print_type(cast_s),
            cast_target: print_type(cast_t),
            witness: print_term(witness),
            program: program.to_string(),
            timestamp: now(),
        };
        validate_entry(&entry).map_err(DbError::Validation)?;
        if self.cex.contains_key(&entry.key) {
            return Ok(false);
        }
        self.append(&Record::Cex(entry.clone()))?;
        self.cex.insert(entry.key.clone(), entry);
        Ok(true)
    }

    /// Notes that `program` was accepted relying on a cast for this judgment.
    pub fn note_maybe(&mut self, key: &JudgmentKey, program: &str) -> Result<(), DbError> {
        if self.maybes.iter().any(|m| m.key == key.hash && m.program == program) {
            return Ok(());
        }
        let m = MaybeEntry {
            key: key.hash.clone(),
            env: key.env.clone(),
            source: key.source.clone(),
            target: key.target.clone(),
            program: program.to_string(),
            timestamp: now(),
        };
        self.append(&Record::Maybe(m.clone()))?;
        self.maybes.push(m);
        Ok(())
    }

    pub fn affected_programs(&self, key: &JudgmentKey) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for m in &self.maybes {
            if m.key == key.hash && !out.contains(&m.program) {
                out.push(m.program.clone());
            }
        }
        out
    }

    /// Replays every stored witness.
    pub fn validate_all(&self) -> Vec<(&CexEntry, Result<(), String>)> {
        self.cex.values().map(|e| (e, validate_entry(e))).collect()
    }

    fn append(&self, r: &Record) -> Result<(), DbError> {
        let path = match &self.path {
            None => return Ok(()),
            Some(p) => p,
        };
        let io = |e| DbError::StoreIO { path: path.display().to_string(), source: e };
        let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        f.lock().map_err(io)?;
        let mut line = serde_json::to_string(r).expect("records serialize");
        line.push('\n');
        let res = f.write_all(line.as_bytes()).and_then(|_| f.flush());
        let _ = f.unlock();
        res.map_err(io)
    }
}
