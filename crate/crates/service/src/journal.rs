//! Append-only event journal, one JSON record per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use attrlabel_core::allocation::PoolKind;
use attrlabel_core::model::{AnnotatedAttributes, Group};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Assigned {
        annotator: String,
        image_id: String,
        pool: PoolKind,
    },
    Annotated {
        annotator: String,
        image_id: String,
        uuid: String,
        attributes: AnnotatedAttributes,
        #[serde(default)]
        error_in_labelling: bool,
    },
    GroupsEdited {
        annotator: String,
        image_id: String,
        groups: Vec<Group>,
    },
    Propagated {
        annotator: String,
        source_image: String,
        uuid: String,
        targets: Vec<String>,
        attributes: AnnotatedAttributes,
        #[serde(default)]
        error_in_labelling: bool,
    },
    Flagged {
        annotator: String,
        image_id: String,
        discard: bool,
    },
    Completed {
        annotator: String,
        image_id: String,
    },
}

impl Event {
    pub fn annotator(&self) -> &str {
        match self {
            Event::Assigned { annotator, .. }
            | Event::Annotated { annotator, .. }
            | Event::GroupsEdited { annotator, .. }
            | Event::Propagated { annotator, .. }
            | Event::Flagged { annotator, .. }
            | Event::Completed { annotator, .. } => annotator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub seq: u64,
    /// Milliseconds since the Unix epoch. Not used by replay.
    pub ts_ms: u64,
    pub dataset_id: String,
    pub event: Event,
}

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: corrupt record at line {line} (last valid seq {last_valid_seq:?}): {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        last_valid_seq: Option<u64>,
        message: String,
    },
}

pub struct Journal {
    path: PathBuf,
    file: File,
    dataset_id: String,
    next_seq: u64,
    sync: bool,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Reads every record of the journal at `path`.
///
/// A final line that does not parse and lacks its newline is a torn write
/// and is ignored; the returned length is where valid content ends. Any
/// other bad line is corruption.
pub fn read_records(path: &Path) -> Result<(Vec<Record>, u64), JournalError> {
    let io = |source| JournalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(io(e)),
    };
    let mut reader = BufReader::new(file);
    let mut records: Vec<Record> = Vec::new();
    let mut valid_len = 0u64;
    let mut line_no = 0;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(io)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.last() == Some(&b'\n');
        let text = String::from_utf8_lossy(&buf);
        if text.trim().is_empty() {
            valid_len += n as u64;
            continue;
        }
        let corrupt = |message: String| JournalError::Corrupt {
            path: path.to_path_buf(),
            line: line_no,
            last_valid_seq: records.last().map(|r| r.seq),
            message,
        };
        match serde_json::from_str::<Record>(text.trim_end()) {
            Ok(rec) => {
                let expected = records.last().map_or(1, |r| r.seq + 1);
                if rec.seq != expected {
                    return Err(corrupt(format!("sequence {} where {expected} was expected", rec.seq)));
                }
                if !complete {
                    // Parses but the newline never reached disk; keep it and
                    // let the next append start on a fresh line.
                    records.push(rec);
                    valid_len += n as u64;
                    break;
                }
                records.push(rec);
                valid_len += n as u64;
            }
            Err(_) if !complete => break,
            Err(e) => return Err(corrupt(e.to_string())),
        }
    }
    Ok((records, valid_len))
}

impl Journal {
    /// Opens (creating if needed) the journal and returns it with its records.
    /// A torn tail is cut off so new records start on a clean line.
    pub fn open(path: &Path, dataset_id: &str, sync: bool) -> Result<(Self, Vec<Record>), JournalError> {
        let io = |source| JournalError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let (records, valid_len) = read_records(path)?;
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        let len = file.metadata().map_err(io)?.len();
        if len > valid_len {
            file.set_len(valid_len).map_err(io)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;
        if valid_len > 0 {
            // A record kept without its newline still needs one.
            let mut last = [0u8; 1];
            let f = File::open(path).map_err(io)?;
            use std::os::unix::fs::FileExt;
            f.read_exact_at(&mut last, valid_len - 1).map_err(io)?;
            if last[0] != b'\n' {
                file.write_all(b"\n").map_err(io)?;
            }
        }
        let next_seq = records.last().map_or(1, |r| r.seq + 1);
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
                dataset_id: dataset_id.to_string(),
                next_seq,
                sync,
            },
            records,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    /// Appends one record. The record is durable (when `sync` is on) before
    /// this returns.
    pub fn append(&mut self, event: Event) -> Result<Record, JournalError> {
        let record = Record {
            seq: self.next_seq,
            ts_ms: now_ms(),
            dataset_id: self.dataset_id.clone(),
            event,
        };
        let mut line = serde_json::to_vec(&record).expect("records serialize");
        line.push(b'\n');
        let io = |source| JournalError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&line).map_err(io)?;
        if self.sync {
            self.file.sync_data().map_err(io)?;
        }
        self.next_seq += 1;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(i: u32) -> Event {
        Event::Completed {
            annotator: "a".into(),
            image_id: format!("img{i}"),
        }
    }

    #[test]
    fn append_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.jsonl");
        let (mut j, recs) = Journal::open(&p, "d", false).unwrap();
        assert!(recs.is_empty());
        for i in 0..3 {
            j.append(ev(i)).unwrap();
        }
        drop(j);
        let (j, recs) = Journal::open(&p, "d", false).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(j.last_seq(), 3);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.jsonl");
        let (mut j, _) = Journal::open(&p, "d", false).unwrap();
        j.append(ev(0)).unwrap();
        j.append(ev(1)).unwrap();
        drop(j);
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.extend_from_slice(br#"{"seq":3,"ts_ms":1,"dataset_id":"d","event":{"ty"#);
        std::fs::write(&p, bytes).unwrap();
        let (mut j, recs) = Journal::open(&p, "d", false).unwrap();
        assert_eq!(recs.len(), 2);
        j.append(ev(2)).unwrap();
        drop(j);
        let (recs, _) = read_records(&p).unwrap();
        assert_eq!(recs.iter().map(|r| r.seq).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn corruption_reports_last_valid_seq() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.jsonl");
        let (mut j, _) = Journal::open(&p, "d", false).unwrap();
        j.append(ev(0)).unwrap();
        j.append(ev(1)).unwrap();
        drop(j);
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.insert(1, "garbage");
        std::fs::write(&p, lines.join("\n") + "\n").unwrap();
        match read_records(&p).unwrap_err() {
            JournalError::Corrupt { line, last_valid_seq, .. } => {
                assert_eq!(line, 2);
                assert_eq!(last_valid_seq, Some(1));
            }
            other => panic!("{other:?}"),
        }
    }
}
