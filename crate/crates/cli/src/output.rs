//! Artifact writing: atomic replacement, cleanup on failure, inputs left alone.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::{CliError, Result};

/// Files written by one command. Unless [`Outputs::commit`] is called, they
/// are deleted when this is dropped.
pub struct Outputs {
    inputs: Vec<PathBuf>,
    written: Vec<PathBuf>,
    committed: bool,
}

fn canonical(path: &Path) -> Option<PathBuf> {
    std::fs::canonicalize(path).ok()
}

impl Outputs {
    /// `inputs` are files the command reads; writing over any of them is refused.
    pub fn new<P: AsRef<Path>>(inputs: &[P]) -> Self {
        Outputs {
            inputs: inputs.iter().filter_map(|p| canonical(p.as_ref())).collect(),
            written: Vec::new(),
            committed: false,
        }
    }

    /// Writes `path` through a temporary file in the same directory, renamed into place on success.
    pub fn write<F>(&mut self, path: &Path, fill: F) -> Result<()>
    where
        F: FnOnce(&mut dyn Write) -> Result<()>,
    {
        if let Some(c) = canonical(path) {
            if self.inputs.contains(&c) {
                return Err(CliError::config(format!("refusing to overwrite input {}", path.display())));
            }
        }
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&dir)?;
        let mut tmp = NamedTempFile::new_in(&dir)?;
        {
            let mut w = BufWriter::new(tmp.as_file_mut());
            fill(&mut w)?;
            w.flush()?;
        }
        tmp.persist(path).map_err(|e| CliError::from(e.error))?;
        self.written.push(path.to_path_buf());
        log::info!("wrote {}", path.display());
        Ok(())
    }

    pub fn write_str(&mut self, path: &Path, text: &str) -> Result<()> {
        self.write(path, |w| Ok(w.write_all(text.as_bytes())?))
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            if std::fs::remove_file(p).is_ok() {
                log::info!("removed partial artifact {}", p.display());
            }
        }
    }
}

/// `# key = value` header lines.
pub fn write_header(w: &mut dyn Write, pairs: &[(&str, String)]) -> Result<()> {
    for (k, v) in pairs {
        writeln!(w, "# {k} = {v}")?;
    }
    Ok(())
}

/// Reads the leading `# key = value` lines of a file.
pub fn read_header(path: &Path) -> Result<Vec<(String, String)>> {
    let file = crate::config::open_input(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        if let Some((k, v)) = rest.split_once('=') {
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    Ok(out)
}

pub fn header_value<'a>(header: &'a [(String, String)], key: &str) -> Option<&'a str> {
    header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_commands_leave_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        let b = dir.path().join("b.txt");
        {
            let mut out = Outputs::new::<&Path>(&[]);
            out.write_str(&a, "first").unwrap();
            let err = out.write(&b, |w| {
                w.write_all(b"half")?;
                Err(CliError::numerical("boom"))
            });
            assert!(err.is_err());
        }
        assert!(!a.exists() && !b.exists());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn inputs_are_protected() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        std::fs::write(&input, "x").unwrap();
        let mut out = Outputs::new(&[&input]);
        assert_eq!(out.write_str(&input, "y").unwrap_err().exit_code(), 2);
        out.commit();
        assert_eq!(std::fs::read_to_string(&input).unwrap(), "x");
    }

    #[test]
    fn header_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let mut out = Outputs::new::<&Path>(&[]);
        out.write(&p, |w| {
            write_header(w, &[("config_hash", "abc".into()), ("method", "GP-5D".into())])?;
            Ok(writeln!(w, "x,y")?)
        })
        .unwrap();
        out.commit();
        let h = read_header(&p).unwrap();
        assert_eq!(header_value(&h, "method"), Some("GP-5D"));
        assert_eq!(header_value(&h, "missing"), None);
    }
}
