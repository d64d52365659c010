//! Binary artifact container for solver outputs (the Riccati matrix Π and
//! its companions), plus the directory lock that serializes writers.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "KFPBIN01"
//! version u32      currently 1
//! count   u32      number of entries
//! entry*  { name_len u32, name UTF-8,
//!           kind u32 (0 = text, 1 = matrix of f64),
//!           rows u64, cols u64,          [text: rows = byte length, cols = 0]
//!           payload }                    [matrix: rows·cols f64, row-major]
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a write/read cycle is exact
//! and repeated runs of a deterministic solver produce byte-identical
//! files. Metadata rides along as a text entry of `key=value` lines; the
//! consumer compares it against its own configuration and refuses
//! mismatched artifacts with a per-key diff rather than a blanket error.

use crate::error::{KfpError, Result};
use matkernel::DenseMatrix;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const MAGIC: [u8; 8] = *b"KFPBIN01";
pub const FORMAT_VERSION: u32 = 1;

const KIND_TEXT: u32 = 0;
const KIND_MATRIX: u32 = 1;
/// Caps on header fields so a corrupt file fails fast instead of
/// attempting a multi-gigabyte allocation.
const MAX_ENTRIES: u32 = 1 << 16;
const MAX_NAME: u32 = 1 << 12;
const MAX_ELEMENTS: u64 = 1 << 30;

/// One named payload: free-form text or a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Text(String),
    Matrix(DenseMatrix),
}

/// An ordered list of named entries; order is preserved on disk so equal
/// containers serialize to equal bytes.
#[derive(Debug, Clone, Default)]
pub struct Container {
    entries: Vec<(String, Entry)>,
}

fn bad(msg: impl Into<String>) -> KfpError {
    KfpError::Container(msg.into())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| bad(format!("truncated file while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_text(&mut self, name: &str, text: &str) {
        self.entries.push((name.to_string(), Entry::Text(text.to_string())));
    }

    pub fn push_matrix(&mut self, name: &str, m: &DenseMatrix) {
        self.entries.push((name.to_string(), Entry::Matrix(m.clone())));
    }

    /// Stores configuration pairs as a text entry named `metadata`.
    pub fn push_metadata(&mut self, pairs: &[(String, String)]) {
        let text: String =
            pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        self.push_text("metadata", &text);
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        self.entries.iter().find_map(|(n, e)| match e {
            Entry::Text(t) if n == name => Some(t.as_str()),
            _ => None,
        })
    }

    pub fn matrix(&self, name: &str) -> Option<&DenseMatrix> {
        self.entries.iter().find_map(|(n, e)| match e {
            Entry::Matrix(m) if n == name => Some(m),
            _ => None,
        })
    }

    /// Parses the `metadata` entry back into pairs.
    pub fn metadata(&self) -> Result<Vec<(String, String)>> {
        let text = self
            .text("metadata")
            .ok_or_else(|| bad("no metadata entry in container"))?;
        let mut pairs = Vec::new();
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed metadata line '{line}'")))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        Ok(pairs)
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, entry) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            match entry {
                Entry::Text(t) => {
                    w.write_all(&KIND_TEXT.to_le_bytes())?;
                    w.write_all(&(t.len() as u64).to_le_bytes())?;
                    w.write_all(&0u64.to_le_bytes())?;
                    w.write_all(t.as_bytes())?;
                }
                Entry::Matrix(m) => {
                    w.write_all(&KIND_MATRIX.to_le_bytes())?;
                    w.write_all(&(m.rows() as u64).to_le_bytes())?;
                    w.write_all(&(m.cols() as u64).to_le_bytes())?;
                    for &x in m.data() {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic, "magic")?;
        if magic != MAGIC {
            return Err(bad(format!(
                "bad magic {:?}: not a KFPBIN01 container",
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = read_u32(r, "version")?;
        if version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported container version {version} (this build reads {FORMAT_VERSION})"
            )));
        }
        let count = read_u32(r, "entry count")?;
        if count > MAX_ENTRIES {
            return Err(bad(format!("implausible entry count {count}")));
        }
        let mut entries = Vec::with_capacity(count as usize);
        for i in 0..count {
            let name_len = read_u32(r, "entry name length")?;
            if name_len > MAX_NAME {
                return Err(bad(format!("entry {i}: implausible name length {name_len}")));
            }
            let mut name_bytes = vec![0u8; name_len as usize];
            read_exact(r, &mut name_bytes, "entry name")?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| bad(format!("entry {i}: name is not UTF-8")))?;
            let kind = read_u32(r, "entry kind")?;
            let rows = read_u64(r, "entry rows")?;
            let cols = read_u64(r, "entry cols")?;
            let entry = match kind {
                KIND_TEXT => {
                    if rows > MAX_ELEMENTS {
                        return Err(bad(format!("entry '{name}': implausible text size")));
                    }
                    let mut buf = vec![0u8; rows as usize];
                    read_exact(r, &mut buf, "text payload")?;
                    Entry::Text(String::from_utf8(buf).map_err(|_| {
                        bad(format!("entry '{name}': text payload is not UTF-8"))
                    })?)
                }
                KIND_MATRIX => {
                    let elements = rows
                        .checked_mul(cols)
                        .filter(|&e| e <= MAX_ELEMENTS)
                        .ok_or_else(|| {
                            bad(format!("entry '{name}': implausible matrix size"))
                        })?;
                    let mut data = vec![0.0f64; elements as usize];
                    let mut b = [0u8; 8];
                    for x in data.iter_mut() {
                        read_exact(r, &mut b, "matrix payload")?;
                        *x = f64::from_le_bytes(b);
                    }
                    Entry::Matrix(DenseMatrix::from_vec(
                        rows as usize,
                        cols as usize,
                        data,
                    ))
                }
                other => {
                    return Err(bad(format!("entry '{name}': unknown kind {other}")))
                }
            };
            entries.push((name, entry));
        }
        Ok(Self { entries })
    }

    /// Writes the container to `path`. An existing file is only replaced
    /// when `force` is set; the write goes through a sibling temp file and
    /// a rename, so a crash cannot leave a half-written artifact behind.
    pub fn save(&self, path: &Path, force: bool) -> Result<()> {
        if path.exists() && !force {
            return Err(bad(format!(
                "refusing to overwrite existing '{}' (pass --force to replace it)",
                path.display()
            )));
        }
        let tmp = path.with_extension("tmp");
        {
            let file = std::fs::File::create(&tmp)?;
            let mut w = std::io::BufWriter::new(file);
            self.write_to(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| {
            bad(format!("cannot open '{}': {e}", path.display()))
        })?;
        let mut r = std::io::BufReader::new(file);
        Self::read_from(&mut r)
    }
}

/// Compares expected configuration pairs against the pairs found in an
/// artifact. Returns one human-readable line per mismatched, missing, or
/// unexpected key; an empty result means the artifact matches.
pub fn metadata_diff(
    expected: &[(String, String)],
    found: &[(String, String)],
) -> Vec<String> {
    let mut diffs = Vec::new();
    for (k, ev) in expected {
        match found.iter().find(|(fk, _)| fk == k) {
            Some((_, fv)) if fv == ev => {}
            Some((_, fv)) => {
                diffs.push(format!("{k}: config has '{ev}', artifact has '{fv}'"))
            }
            None => diffs.push(format!("{k}: missing from artifact")),
        }
    }
    for (k, _) in found {
        if !expected.iter().any(|(ek, _)| ek == k) {
            diffs.push(format!("{k}: present in artifact but not in config"));
        }
    }
    diffs
}

/// Exclusive advisory lock on an output directory, taken by creating
/// `.kfp.lock` with `create_new` (an atomic existence check on every
/// platform). Dropping the guard removes the file; a crash can leave a
/// stale lock, which the error message tells the operator to delete.
#[derive(Debug)]
pub struct LockGuard {
    path: PathBuf,
}

impl LockGuard {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(".kfp.lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(KfpError::Lock(format!(
                    "another writer holds '{}'; if no other run is active, \
                     delete the file and retry",
                    path.display()
                )))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        let mut c = Container::new();
        c.push_metadata(&[
            ("grid.points_x".into(), "41".into()),
            ("riccati.delta".into(), "2.0000000000000001e-1".into()),
        ]);
        let m = DenseMatrix::from_rows(&[
            &[1.0, -0.0, 1.0 / 3.0],
            &[f64::MIN_POSITIVE, 2.5e17, -7.25],
        ]);
        c.push_matrix("pi", &m);
        c.push_text("note", "feedback gain artifact\nsecond line");
        c
    }

    #[test]
    fn write_read_round_trip_is_bitwise_exact() {
        let c = sample();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let back = Container::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.names(), vec!["metadata", "pi", "note"]);
        let m0 = c.matrix("pi").unwrap();
        let m1 = back.matrix("pi").unwrap();
        assert_eq!(m0.rows(), m1.rows());
        assert_eq!(m0.cols(), m1.cols());
        for (a, b) in m0.data().iter().zip(m1.data()) {
            assert_eq!(a.to_bits(), b.to_bits(), "payload must survive exactly");
        }
        assert_eq!(back.text("note"), c.text("note"));
        assert_eq!(back.metadata().unwrap(), c.metadata().unwrap());

        // Serializing the read-back container reproduces the same bytes.
        let mut buf2 = Vec::new();
        back.write_to(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn corrupt_headers_are_rejected_with_context() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        let err = Container::read_from(&mut bad_magic.as_slice()).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        let mut bad_version = buf.clone();
        bad_version[8] = 99;
        let err = Container::read_from(&mut bad_version.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");

        let truncated = &buf[..buf.len() - 3];
        let err = Container::read_from(&mut &truncated[..]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        // An implausible matrix size must fail before allocating.
        let mut huge = Vec::new();
        huge.extend_from_slice(&MAGIC);
        huge.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        huge.extend_from_slice(&1u32.to_le_bytes());
        huge.extend_from_slice(&2u32.to_le_bytes());
        huge.extend_from_slice(b"pi");
        huge.extend_from_slice(&1u32.to_le_bytes());
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        huge.extend_from_slice(&u64::MAX.to_le_bytes());
        let err = Container::read_from(&mut huge.as_slice()).unwrap_err();
        assert!(err.to_string().contains("implausible"), "{err}");
    }

    #[test]
    fn save_refuses_overwrite_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pi.kfpbin");
        let c = sample();
        c.save(&path, false).unwrap();
        let err = c.save(&path, false).unwrap_err();
        assert!(err.to_string().contains("--force"), "{err}");
        c.save(&path, true).unwrap();
        assert!(Container::load(&path).unwrap().matrix("pi").is_some());
    }

    #[test]
    fn metadata_diff_reports_every_kind_of_mismatch() {
        let expected = vec![
            ("grid.points_x".to_string(), "41".to_string()),
            ("riccati.delta".to_string(), "0.2".to_string()),
        ];
        assert!(metadata_diff(&expected, &expected).is_empty());

        let found = vec![
            ("grid.points_x".to_string(), "31".to_string()),
            ("model.gamma".to_string(), "1".to_string()),
        ];
        let diffs = metadata_diff(&expected, &found);
        assert_eq!(diffs.len(), 3);
        assert!(diffs[0].contains("'41'") && diffs[0].contains("'31'"), "{diffs:?}");
        assert!(diffs[1].contains("missing"), "{diffs:?}");
        assert!(diffs[2].contains("model.gamma"), "{diffs:?}");
    }

    #[test]
    fn lock_guard_excludes_a_second_writer_and_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let lock_path = dir.path().join(".kfp.lock");
        let guard = LockGuard::acquire(dir.path()).unwrap();
        assert!(lock_path.exists());
        let err = LockGuard::acquire(dir.path()).unwrap_err();
        assert!(matches!(err, KfpError::Lock(_)), "{err}");
        drop(guard);
        assert!(!lock_path.exists(), "drop must remove the lock file");
        let again = LockGuard::acquire(dir.path()).unwrap();
        drop(again);
    }
}
