use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Condition;
use crate::response::ReaderResponse;

pub const LOG_FILE: &str = "responses.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("response for reader {reader:?}, case {case:?}, condition {condition} already recorded")]
    Duplicate {
        reader: String,
        case: String,
        condition: Condition,
    },
}

pub type Key = (String, String, Condition);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LogRecord {
    seq: u64,
    response: ReaderResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    responses: Vec<ReaderResponse>,
}

/// Immutable view of every stored response, in append order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StoreState {
    pub seq: u64,
    responses: Vec<ReaderResponse>,
    index: BTreeMap<Key, usize>,
}

impl StoreState {
    pub fn responses(&self) -> &[ReaderResponse] {
        &self.responses
    }

    pub fn get(&self, reader: &str, case: &str, condition: Condition) -> Option<&ReaderResponse> {
        let key = (reader.to_string(), case.to_string(), condition);
        self.index.get(&key).map(|&i| &self.responses[i])
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    fn insert(&mut self, seq: u64, r: ReaderResponse) -> bool {
        let key = r.key();
        if self.index.contains_key(&key) {
            return false;
        }
        self.index.insert(key, self.responses.len());
        self.responses.push(r);
        self.seq = seq;
        true
    }
}

struct Appender {
    file: File,
    since_snapshot: usize,
}

/// Append-only JSONL response log with a periodic snapshot. Each append is
/// synced to disk before it is acknowledged.
pub struct ResponseStore {
    dir: PathBuf,
    appender: Mutex<Appender>,
    state: RwLock<Arc<StoreState>>,
    snapshot_every: usize,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl ResponseStore {
    /// Opens or creates the store in `dir`, replaying the snapshot and then
    /// the log records after it. A torn final line is truncated away.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        Self::open_with(dir, 64)
    }

    pub fn open_with(dir: &Path, snapshot_every: usize) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut state = StoreState::default();
        let snap_path = dir.join(SNAPSHOT_FILE);
        if snap_path.exists() {
            let text = fs::read_to_string(&snap_path).map_err(io_err(&snap_path))?;
            let snap: Snapshot = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: snap_path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            for r in snap.responses {
                state.insert(snap.seq, r);
            }
            state.seq = snap.seq;
        }
        let log_path = dir.join(LOG_FILE);
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        let good_len = replay(&log_path, &file, &mut state)?;
        let len = file.metadata().map_err(io_err(&log_path))?.len();
        if good_len < len {
            log::warn!(
                "{}: dropping {} bytes of torn tail",
                log_path.display(),
                len - good_len
            );
            file.set_len(good_len).map_err(io_err(&log_path))?;
            file.sync_all().map_err(io_err(&log_path))?;
        }
        file.seek(SeekFrom::End(0)).map_err(io_err(&log_path))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            appender: Mutex::new(Appender {
                file,
                since_snapshot: 0,
            }),
            state: RwLock::new(Arc::new(state)),
            snapshot_every: snapshot_every.max(1),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Current state; later appends do not affect the returned view.
    pub fn state(&self) -> Arc<StoreState> {
        self.state.read().expect("state lock").clone()
    }

    pub fn append(&self, r: ReaderResponse) -> Result<u64, StoreError> {
        self.append_checked(r, |_| Ok::<(), StoreError>(()))
    }

    /// Runs `check` against the current state under the appender lock and
    /// appends only if it passes and the key is new.
    pub fn append_checked<E>(
        &self,
        r: ReaderResponse,
        check: impl FnOnce(&StoreState) -> Result<(), E>,
    ) -> Result<u64, E>
    where
        E: From<StoreError>,
    {
        let mut app = self.appender.lock().expect("appender lock");
        let current = self.state();
        if current.index.contains_key(&r.key()) {
            return Err(StoreError::Duplicate {
                reader: r.reader_id,
                case: r.case_id,
                condition: r.condition,
            }
            .into());
        }
        check(&current)?;
        let seq = current.seq + 1;
        let log_path = self.dir.join(LOG_FILE);
        let mut line = serde_json::to_string(&LogRecord {
            seq,
            response: r.clone(),
        })
        .expect("response serializes");
        line.push('\n');
        app.file.write_all(line.as_bytes()).map_err(io_err(&log_path))?;
        app.file.sync_data().map_err(io_err(&log_path))?;
        let mut next = (*current).clone();
        next.insert(seq, r);
        let next = Arc::new(next);
        *self.state.write().expect("state lock") = next.clone();
        app.since_snapshot += 1;
        if app.since_snapshot >= self.snapshot_every {
            match write_snapshot(&self.dir, &next) {
                Ok(()) => app.since_snapshot = 0,
                Err(e) => log::warn!("snapshot failed: {e}"),
            }
        }
        Ok(seq)
    }

    /// Writes the snapshot now.
    pub fn snapshot(&self) -> Result<(), StoreError> {
        let mut app = self.appender.lock().expect("appender lock");
        write_snapshot(&self.dir, &self.state())?;
        app.since_snapshot = 0;
        Ok(())
    }
}

fn replay(path: &Path, file: &File, state: &mut StoreState) -> Result<u64, StoreError> {
    let mut reader = BufReader::new(file.try_clone().map_err(io_err(path))?);
    reader.seek(SeekFrom::Start(0)).map_err(io_err(path))?;
    let mut good = 0u64;
    let mut line_no = 0;
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        let parsed: Result<LogRecord, _> = serde_json::from_str(buf.trim_end());
        match parsed {
            Ok(rec) if complete => {
                if rec.seq > state.seq {
                    if rec.seq != state.seq + 1 {
                        return Err(StoreError::Corrupt {
                            path: path.to_path_buf(),
                            line: line_no,
                            message: format!("sequence jumps from {} to {}", state.seq, rec.seq),
                        });
                    }
                    if !state.insert(rec.seq, rec.response) {
                        return Err(StoreError::Corrupt {
                            path: path.to_path_buf(),
                            line: line_no,
                            message: "duplicate key in log".into(),
                        });
                    }
                }
                good += n as u64;
            }
            _ if !complete => break,
            Ok(_) => unreachable!(),
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(good)
}

fn write_snapshot(dir: &Path, state: &StoreState) -> Result<(), StoreError> {
    let path = dir.join(SNAPSHOT_FILE);
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    let snap = Snapshot {
        seq: state.seq,
        responses: state.responses.clone(),
    };
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(serde_json::to_string(&snap).expect("snapshot serializes").as_bytes())
        .map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, &path).map_err(io_err(&path))?;
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BoxMode, ImageSet};
    use crate::response::CompartmentCalls;

    fn resp(reader: &str, case: &str, boxes: BoxMode, ts: u64) -> ReaderResponse {
        ReaderResponse {
            reader_id: reader.into(),
            case_id: case.into(),
            condition: Condition::new(ImageSet::Reconstructed, boxes),
            compartments: CompartmentCalls::new([true, false, false, true, false, false]),
            timestamp: ts,
        }
    }

    #[test]
    fn append_reopen_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResponseStore::open(dir.path()).unwrap();
        let r = resp("a", "c1", BoxMode::WithBoxes, 10);
        assert_eq!(store.append(r.clone()).unwrap(), 1);
        assert!(matches!(store.append(r.clone()), Err(StoreError::Duplicate { .. })));
        store.append(resp("a", "c1", BoxMode::WithoutBoxes, 11)).unwrap();
        let before = store.state();
        drop(store);
        let again = ResponseStore::open(dir.path()).unwrap();
        assert_eq!(*again.state(), *before);
        assert_eq!(again.state().get("a", "c1", r.condition), Some(&r));
    }

    #[test]
    fn torn_tail_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResponseStore::open(dir.path()).unwrap();
        store.append(resp("a", "c1", BoxMode::WithBoxes, 1)).unwrap();
        let before = store.state();
        drop(store);
        let mut f = OpenOptions::new().append(true).open(dir.path().join(LOG_FILE)).unwrap();
        f.write_all(b"{\"seq\":2,\"respo").unwrap();
        drop(f);
        let store = ResponseStore::open(dir.path()).unwrap();
        assert_eq!(*store.state(), *before);
        assert_eq!(store.append(resp("b", "c1", BoxMode::WithBoxes, 2)).unwrap(), 2);
        drop(store);
        assert_eq!(ResponseStore::open(dir.path()).unwrap().state().len(), 2);
    }

    #[test]
    fn corrupt_middle_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(LOG_FILE), "garbage\n{}\n").unwrap();
        assert!(matches!(ResponseStore::open(dir.path()), Err(StoreError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn snapshot_plus_log_replay() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResponseStore::open_with(dir.path(), 2).unwrap();
        for (i, c) in ["c1", "c2", "c3"].iter().enumerate() {
            store.append(resp("a", c, BoxMode::WithBoxes, i as u64)).unwrap();
        }
        assert!(dir.path().join(SNAPSHOT_FILE).exists());
        let before = store.state();
        drop(store);
        let again = ResponseStore::open(dir.path()).unwrap();
        assert_eq!(*again.state(), *before);
        assert_eq!(again.state().seq, 3);
    }
}
