//! Small durable-file helpers shared by both server kinds, plus the crash
//! switch used by fault-injection tests.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

/// Replaces `path` with `bytes` via a synced temp file and rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    sync_dir(dir)
}

pub fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

/// Appends one complete line and syncs it.
pub fn append_line(path: &Path, line: &str) -> io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = String::with_capacity(line.len() + 1);
    buf.push_str(line);
    buf.push('\n');
    f.write_all(buf.as_bytes())?;
    f.sync_data()
}

/// Writes a line prefix with no terminator and no sync, as a crash mid-write would.
pub fn append_torn(path: &Path, line: &str) -> io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let cut = line.len() / 2;
    f.write_all(&line.as_bytes()[..cut])
}

/// Reads the complete lines of an append-only file, truncating away any
/// unterminated tail left by a torn write. Missing files read as empty.
pub fn read_lines_recovering(path: &Path) -> io::Result<Vec<String>> {
    let mut raw = Vec::new();
    match File::open(path) {
        Ok(mut f) => {
            f.read_to_end(&mut raw)?;
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    }
    let complete = raw.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete != raw.len() {
        log::warn!(
            "{}: dropping {} byte torn tail",
            path.display(),
            raw.len() - complete
        );
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(complete as u64)?;
        f.sync_all()?;
    }
    let text = std::str::from_utf8(&raw[..complete])
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// One-shot crash trigger. Once a point fires the owner is "dead": every
/// later call to [`CrashSwitch::is_crashed`] reports true until the owner
/// is reopened from disk.
#[derive(Debug)]
pub struct CrashSwitch<P> {
    armed: Mutex<Option<P>>,
    crashed: AtomicBool,
}

impl<P> Default for CrashSwitch<P> {
    fn default() -> Self {
        Self {
            armed: Mutex::new(None),
            crashed: AtomicBool::new(false),
        }
    }
}

impl<P: Copy + PartialEq> CrashSwitch<P> {
    pub fn arm(&self, point: P) {
        *self.armed.lock().unwrap() = Some(point);
    }

    pub fn disarm(&self) {
        *self.armed.lock().unwrap() = None;
    }

    /// True exactly once, when `point` is the armed point.
    pub fn fire(&self, point: P) -> bool {
        let mut armed = self.armed.lock().unwrap();
        if *armed == Some(point) {
            *armed = None;
            self.crashed.store(true, Ordering::SeqCst);
            true
        } else {
            false
        }
    }

    pub fn is_crashed(&self) -> bool {
        self.crashed.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsv");
        append_line(&p, "a\t1").unwrap();
        append_torn(&p, "b\t2222222").unwrap();
        assert_eq!(read_lines_recovering(&p).unwrap(), vec!["a\t1"]);
        assert_eq!(fs::read(&p).unwrap(), b"a\t1\n");
        append_line(&p, "c\t3").unwrap();
        assert_eq!(read_lines_recovering(&p).unwrap(), vec!["a\t1", "c\t3"]);
        assert!(read_lines_recovering(&dir.path().join("missing"))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("counter");
        atomic_write(&p, b"1").unwrap();
        atomic_write(&p, b"2").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"2");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn crash_switch_fires_once() {
        let s = CrashSwitch::default();
        assert!(!s.fire(1));
        s.arm(1);
        assert!(!s.fire(2));
        assert!(s.fire(1));
        assert!(!s.fire(1));
        assert!(s.is_crashed());
    }
}
