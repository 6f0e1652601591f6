use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

/// Comment line opening every output file.
pub fn header(digest: &str) -> String {
    format!("# spinsat {} config-sha256={digest}\n", env!("CARGO_PKG_VERSION"))
}

/// 17 significant digits, fixed exponent form.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

/// Collects output files in memory and writes them together, so a failed
/// command leaves nothing behind.
pub struct Bundle {
    dir: PathBuf,
    header: String,
    files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    pub fn new(dir: &Path, digest: &str) -> Self {
        Self { dir: dir.to_path_buf(), header: header(digest), files: Vec::new() }
    }

    pub fn csv<R: IntoIterator<Item = Vec<String>>>(
        &mut self,
        name: &str,
        extra_comments: &[String],
        columns: &[&str],
        rows: R,
    ) -> Result<(), CliError> {
        let mut buf = self.header.clone().into_bytes();
        for c in extra_comments {
            buf.extend_from_slice(format!("# {c}\n").as_bytes());
        }
        {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
            w.write_record(columns).map_err(|e| CliError::Io(e.to_string()))?;
            for r in rows {
                w.write_record(&r).map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.flush().map_err(|e| CliError::Io(e.to_string()))?;
        }
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    pub fn toml<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let body = toml::to_string(value).map_err(|e| CliError::Io(e.to_string()))?;
        self.files.push((name.to_string(), format!("{}{body}", self.header).into_bytes()));
        Ok(())
    }

    pub fn write(self) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(&self.dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.dir.display())))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = self.dir.join(name);
            let mut f =
                BufWriter::new(File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?);
            f.write_all(&bytes)
                .and_then(|_| f.flush())
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(float(0.1), "1.0000000000000001e-1");
        assert_eq!(float(-2.0), "-2.0000000000000000e0");
        assert_eq!(float(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn csv_has_header_comment_and_lf_endings() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = Bundle::new(dir.path(), "abc");
        b.csv("t.csv", &["note".into()], &["a", "b"], vec![vec!["1".into(), "2".into()]]).unwrap();
        let paths = b.write().unwrap();
        let text = std::fs::read_to_string(&paths[0]).unwrap();
        assert!(text.starts_with("# spinsat "));
        assert!(text.contains("config-sha256=abc\n# note\na,b\n1,2\n"));
        assert!(!text.contains('\r'));
    }
}
