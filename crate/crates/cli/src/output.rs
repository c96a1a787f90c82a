//! Artifact writing: atomic files, fixed-format CSV, JSON envelopes carrying
//! the tool version and config hash.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes to a temporary file in the target directory, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp.{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

/// 17 significant digits, `.` separator, independent of locale.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV with a header row and one row per grid point; each column in
/// `columns` must match the grid length. Lines end in CRLF.
pub fn csv_string(grid: &[f64], columns: &[&[f64]], header: &[&str]) -> Result<String, CliError> {
    if header.len() != columns.len() + 1 {
        return Err(CliError::validation(
            "csv.header",
            "one header per column, grid included",
        ));
    }
    if columns.iter().any(|c| c.len() != grid.len()) {
        return Err(CliError::validation(
            "csv.columns",
            "columns must match the grid length",
        ));
    }
    let mut out = String::new();
    out.push_str(
        &header
            .iter()
            .map(|h| csv_field(h))
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push_str("\r\n");
    for (i, y) in grid.iter().enumerate() {
        out.push_str(&format_float(*y));
        for c in columns {
            out.push(',');
            out.push_str(&format_float(c[i]));
        }
        out.push_str("\r\n");
    }
    Ok(out)
}

pub fn write_csv(
    grid: &[f64],
    columns: &[&[f64]],
    header: &[&str],
    path: &Path,
) -> Result<(), CliError> {
    write_atomic(path, csv_string(grid, columns, header)?.as_bytes())
}

/// Reads back a CSV written by [`csv_string`], skipping `#` comment lines.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text
        .split("\r\n")
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or("empty file")?
        .split(',')
        .map(String::from)
        .collect::<Vec<_>>();
    let mut cols = vec![Vec::new(); header.len()];
    for line in lines {
        for (j, f) in line.split(',').enumerate() {
            cols.get_mut(j)
                .ok_or("ragged row")?
                .push(f.parse::<f64>().map_err(|e| e.to_string())?);
        }
    }
    Ok((header, cols))
}

/// Collects the artifacts of one run and stamps each with the version and
/// config hash.
pub struct Artifacts {
    dir: PathBuf,
    hash: String,
    config: RunConfig,
    written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    config_hash: &'a str,
    command: &'a str,
    config: &'a RunConfig,
    result: &'a T,
}

impl Artifacts {
    pub fn new(dir: PathBuf, config: &RunConfig) -> Self {
        Self {
            dir,
            hash: config.hash(),
            config: config.canonical(),
            written: Vec::new(),
        }
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn json_text<T: Serialize>(&self, command: &str, result: &T) -> String {
        let env = Envelope {
            tool: "sqrtdiff",
            version: VERSION,
            config_hash: &self.hash,
            command,
            config: &self.config,
            result,
        };
        let mut s = serde_json::to_string_pretty(&env).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn json<T: Serialize>(
        &mut self,
        name: &str,
        command: &str,
        result: &T,
    ) -> Result<String, CliError> {
        let text = self.json_text(command, result);
        let path = self.dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        self.written.push(path);
        Ok(text)
    }

    /// CSV preceded by a `#` line with the version and config hash.
    pub fn csv(
        &mut self,
        name: &str,
        grid: &[f64],
        columns: &[&[f64]],
        header: &[&str],
    ) -> Result<PathBuf, CliError> {
        let mut text = String::new();
        let _ = write!(text, "# sqrtdiff {VERSION} config-sha256 {}\r\n", self.hash);
        text.push_str(&csv_string(grid, columns, header)?);
        let path = self.dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        self.written.push(path.clone());
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_is_header_only() {
        assert_eq!(csv_string(&[], &[&[]], &["y", "pdf"]).unwrap(), "y,pdf\r\n");
    }

    #[test]
    fn values_round_trip_exactly() {
        let grid = [0.1, 1.0 / 3.0, 1e-300, 12345.678901234567, -2.5e-8];
        let vals = [
            std::f64::consts::PI,
            f64::MIN_POSITIVE,
            0.0,
            -1.0 / 7.0,
            6.02214076e23,
        ];
        let text = csv_string(&grid, &[&vals], &["y", "v"]).unwrap();
        let (h, cols) = read_csv(&text).unwrap();
        assert_eq!(h, vec!["y", "v"]);
        assert_eq!(cols[0], grid);
        assert_eq!(cols[1], vals);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("1.0000000000000001e-1,"));
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(csv_string(&[1.0, 2.0], &[&[1.0]], &["y", "v"]).is_err());
    }

    #[test]
    fn header_fields_are_quoted() {
        assert_eq!(
            csv_string(&[], &[&[]], &["y", "a,b"]).unwrap(),
            "y,\"a,b\"\r\n"
        );
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
