//! Append-only run log: one JSON line per completed (config, instance, rep).

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::pipeline::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub config_hash: String,
    pub instance_id: String,
    pub rep: u32,
    pub gold: String,
    pub record: RunRecord,
}

impl LogLine {
    pub fn key(&self) -> (String, String, u32) {
        (self.config_hash.clone(), self.instance_id.clone(), self.rep)
    }
}

/// Single-writer append handle; lines are flushed as they are written.
pub struct RunLog {
    path: PathBuf,
    writer: Mutex<File>,
}

impl RunLog {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(&path)?;
        // A killed writer can leave a torn last line; close it off so the
        // next record starts on its own line.
        let len = file.metadata()?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1))?;
            file.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
            }
        }
        Ok(Self {
            path,
            writer: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, line: &LogLine) -> std::io::Result<()> {
        let mut buf = serde_json::to_vec(line)?;
        buf.push(b'\n');
        let mut file = self.writer.lock().expect("run log lock");
        file.write_all(&buf)?;
        file.flush()
    }
}

/// Reads every well-formed line. A torn or corrupt line (e.g. from a killed
/// run) is skipped with a warning; duplicate keys keep the first line.
pub fn read_log(path: impl AsRef<Path>) -> std::io::Result<Vec<LogLine>> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogLine>(&line) {
            Ok(entry) => {
                if seen.insert(entry.key()) {
                    out.push(entry);
                }
            }
            Err(e) => log::warn!("{}:{}: skipping unreadable log line ({e})", path.display(), i + 1),
        }
    }
    Ok(out)
}
