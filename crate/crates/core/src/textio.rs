//! Small file helpers shared by every on-disk format: transparent gzip,
//! atomic writes, content hashing and sentence-per-line corpora.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use sha2::{Digest, Sha256};

use crate::corpus::Sentence;
use crate::error::{Error, Result};

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Opens `path` for buffered reading, decompressing `.gz` files.
pub fn open_read(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if is_gz(path) {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Writes a file atomically: content goes to a sibling temporary file which
/// is renamed over `path` once `fill` succeeds. `.gz` paths are compressed.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = tmp_path(path);
    let result = (|| -> io::Result<()> {
        let file = File::create(&tmp)?;
        if is_gz(path) {
            let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
            fill(&mut enc)?;
            enc.finish()?.flush()?;
        } else {
            let mut w = BufWriter::new(file);
            fill(&mut w)?;
            w.flush()?;
        }
        Ok(())
    })();
    match result {
        Ok(()) => fs::rename(&tmp, path).map_err(|e| Error::io(path, e)),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(Error::io(path, e))
        }
    }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// A sink that hashes everything written to it.
#[derive(Default)]
pub struct HashWriter(Sha256);

impl HashWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Hash of a corpus in its one-sentence-per-line form.
pub fn sha256_sentences<'a, I>(sentences: I) -> String
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut h = HashWriter::new();
    for s in sentences {
        writeln!(h, "{s}").expect("hashing cannot fail");
    }
    h.finish()
}

/// Seed for a named stage, stable across platforms and releases.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Reads a whitespace-tokenized corpus, one sentence per line.
pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    let reader = open_read(path)?;
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        out.push(Sentence::from_line(&line));
    }
    Ok(out)
}

pub fn write_sentences<'a, I>(path: &Path, sentences: I) -> Result<()>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    write_atomic(path, |w| {
        for s in sentences {
            writeln!(w, "{s}")?;
        }
        Ok(())
    })
}

/// Reads raw lines (no tokenization).
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let reader = open_read(path)?;
    reader
        .lines()
        .collect::<io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gz_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt.gz");
        let sents = vec![Sentence::from_line("a b"), Sentence::from_line("c")];
        write_sentences(&path, &sents).unwrap();
        assert_eq!(read_sentences(&path).unwrap(), sents);
        assert!(!dir.path().join("c.txt.gz.tmp").exists());
    }
}
