use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::session::{BenchReport, BenchSession, ManifestEntry, SessionParams};
use super::BenchError;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Created {
        session_id: String,
        params: SessionParams,
        in_class_names: Vec<String>,
        manifest: Vec<ManifestEntry>,
        created_at: u64,
    },
    Selections {
        page: usize,
        selections: BTreeMap<String, String>,
    },
    Scored,
}

type Shared = Arc<Mutex<BenchSession>>;

/// Sessions in memory, each backed by an append-only JSON-lines log
/// `<dir>/<session_id>.jsonl` when a directory is configured. Mutations of a
/// session are serialized by its own lock.
#[derive(Debug, Default)]
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Shared>>,
}

pub(crate) fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn append(path: &Path, event: &Event) -> Result<(), BenchError> {
    let mut line = serde_json::to_string(event).expect("events serialize");
    line.push('\n');
    let mut f = OpenOptions::new().append(true).open(path).map_err(|e| BenchError::storage(path, e))?;
    f.write_all(line.as_bytes()).and_then(|_| f.sync_data()).map_err(|e| BenchError::storage(path, e))
}

fn replay(path: &Path) -> Result<BenchSession, BenchError> {
    let file = File::open(path).map_err(|e| BenchError::storage(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| BenchError::storage(path, e))?;
    let mut session: Option<BenchSession> = None;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = match serde_json::from_str(line) {
            Ok(e) => e,
            // a torn final line from an interrupted append
            Err(_) if i + 1 == lines.len() && session.is_some() => break,
            Err(e) => return Err(BenchError::storage(path, format!("line {}: {e}", i + 1))),
        };
        match (event, session.as_mut()) {
            (Event::Created { session_id, params, in_class_names, manifest, created_at }, None) => {
                session = Some(BenchSession {
                    session_id,
                    params,
                    in_class_names,
                    manifest,
                    selections: BTreeMap::new(),
                    submitted_pages: Default::default(),
                    scored: false,
                    created_at,
                });
            }
            (Event::Selections { page, selections }, Some(s)) => s
                .submit_selections(page, selections)
                .map_err(|e| BenchError::storage(path, format!("line {}: {e}", i + 1)))?,
            (Event::Scored, Some(s)) => s.scored = true,
            _ => return Err(BenchError::storage(path, format!("line {}: unexpected event", i + 1))),
        }
    }
    session.ok_or_else(|| BenchError::storage(path, "empty session log"))
}

impl SessionStore {
    /// In-memory store without persistence.
    pub fn ephemeral() -> Self {
        Self::default()
    }

    /// Opens `dir` (creating it if needed) and replays every session log.
    pub fn open(dir: &Path) -> Result<Self, BenchError> {
        fs::create_dir_all(dir).map_err(|e| BenchError::storage(dir, e))?;
        let mut sessions = HashMap::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| BenchError::storage(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let s = replay(&path)?;
            sessions.insert(s.session_id.clone(), Arc::new(Mutex::new(s)));
        }
        Ok(Self { dir: Some(dir.to_owned()), sessions: RwLock::new(sessions) })
    }

    fn log_path(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{id}.jsonl")))
    }

    fn get(&self, id: &str) -> Result<Shared, BenchError> {
        self.sessions
            .read()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| BenchError::UnknownSession(id.to_owned()))
    }

    pub fn insert(&self, session: BenchSession) -> Result<(), BenchError> {
        let id = session.session_id.clone();
        if !valid_session_id(&id) {
            return Err(BenchError::InvalidRequest(format!("invalid session id {id:?}")));
        }
        let mut sessions = self.sessions.write().expect("store lock");
        if sessions.contains_key(&id) {
            return Err(BenchError::DuplicateSession(id));
        }
        if let Some(path) = self.log_path(&id) {
            File::create_new(&path).map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => BenchError::DuplicateSession(id.clone()),
                _ => BenchError::storage(&path, e),
            })?;
            let event = Event::Created {
                session_id: id.clone(),
                params: session.params.clone(),
                in_class_names: session.in_class_names.clone(),
                manifest: session.manifest.clone(),
                created_at: session.created_at,
            };
            append(&path, &event)?;
        }
        sessions.insert(id, Arc::new(Mutex::new(session)));
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.sessions.read().expect("store lock").contains_key(id)
    }

    pub fn read<T>(&self, id: &str, f: impl FnOnce(&BenchSession) -> T) -> Result<T, BenchError> {
        let shared = self.get(id)?;
        let guard = shared.lock().expect("session lock");
        Ok(f(&guard))
    }

    pub fn submit(
        &self,
        id: &str,
        page: usize,
        selections: BTreeMap<String, String>,
    ) -> Result<(), BenchError> {
        let shared = self.get(id)?;
        let mut s = shared.lock().expect("session lock");
        s.validate_selections(page, &selections)?;
        if let Some(path) = self.log_path(id) {
            append(&path, &Event::Selections { page, selections: selections.clone() })?;
        }
        s.submit_selections(page, selections)
    }

    pub fn score(&self, id: &str) -> Result<BenchReport, BenchError> {
        let shared = self.get(id)?;
        let mut s = shared.lock().expect("session lock");
        let already = s.scored;
        let report = s.score()?;
        if !already {
            if let Some(path) = self.log_path(id) {
                append(&path, &Event::Scored)?;
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::session::{ImagePool, PoolImage};

    fn pool(root: &str, class: &str, n: usize) -> ImagePool {
        ImagePool {
            root: root.into(),
            images: (0..n)
                .map(|i| PoolImage { class_name: class.into(), path: format!("{root}/{class}/{i}.png").into() })
                .collect(),
        }
    }

    fn session(id: &str) -> BenchSession {
        let params = SessionParams { total_images: 30, page_size: 20, seed: 1, exact_balance: false };
        BenchSession::create(id.into(), &pool("a", "cat", 30), &pool("b", "car", 30), vec!["cat".into()], params, 5)
            .unwrap()
    }

    #[test]
    fn replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        store.insert(session("abc")).unwrap();
        assert!(matches!(store.insert(session("abc")), Err(BenchError::DuplicateSession(_))));
        let ids = store.read("abc", |s| s.page_ids(0).unwrap()).unwrap();
        store.submit("abc", 0, [(ids[3].clone(), "cat".into())].into()).unwrap();
        store.submit("abc", 1, BTreeMap::new()).unwrap();
        let first = store.score("abc").unwrap();
        drop(store);

        let reopened = SessionStore::open(dir.path()).unwrap();
        let (scored, selections) = reopened.read("abc", |s| (s.scored, s.selections.clone())).unwrap();
        assert!(scored);
        assert_eq!(selections.len(), 1);
        let again = reopened.score("abc").unwrap();
        assert_eq!(serde_json::to_vec(&first).unwrap(), serde_json::to_vec(&again).unwrap());
    }

    #[test]
    fn rejects_path_like_ids() {
        let store = SessionStore::ephemeral();
        assert!(store.insert(session("../x")).is_err());
        assert!(matches!(store.read("nope", |_| ()), Err(BenchError::UnknownSession(_))));
    }
}
