//! Writing artifacts: report JSON, plot CSV, resolved configs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use polysens::report::format_float;
use polysens::SensitivityReport;

use crate::config::StudyConfig;
use crate::error::{CliError, CliResult};

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&PathBuf>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_file(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Output directory of a study.
pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(OutputDir { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        let p = self.path(name);
        write_file(&p, text)?;
        Ok(p)
    }

    pub fn write_config(&self, cfg: &StudyConfig) -> CliResult<PathBuf> {
        self.write("resolved_config.json", &cfg.to_json())
    }

    /// Writes `<stem>.json` and the bar-chart CSV `<stem>.csv`.
    pub fn write_report(&self, stem: &str, report: &SensitivityReport) -> CliResult<()> {
        self.write(&format!("{stem}.json"), &report.to_canonical_json())?;
        self.write(&format!("{stem}.csv"), &report_csv(report))?;
        Ok(())
    }
}

/// One row per index: `label,mean,sd`.
pub fn report_csv(report: &SensitivityReport) -> String {
    let mut out = String::from("label,mean,sd\n");
    for e in &report.entries {
        let sd = e.sd.map(format_float).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", csv_field(&e.label), format_float(e.value), sd));
    }
    out
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Fixed-width table for the terminal.
pub fn report_table(report: &SensitivityReport) -> String {
    let width = report.entries.iter().map(|e| e.label.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:width$}  {:>10}  {:>10}\n", "index", "mean", "sd");
    for e in &report.entries {
        let sd = e.sd.map(|s| format!("{s:10.4}")).unwrap_or_else(|| format!("{:>10}", "-"));
        out.push_str(&format!("{:width$}  {:10.4}  {sd}\n", e.label, e.value));
    }
    for n in &report.metadata.notes {
        out.push_str(&format!("  note: {n}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use polysens::report::{ReportKind, ReportMetadata};
    use polysens::Subset;

    #[test]
    fn csv_has_one_row_per_entry() {
        let mut r = SensitivityReport::new(ReportKind::Sobol, ReportMetadata::default());
        r.push(Subset::single(0), 0.25);
        r.push(Subset::of(&[0, 1]), 0.75);
        let csv = report_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "label,mean,sd");
        assert!(lines[2].starts_with("\"{1,2}\"") || lines[2].starts_with("{1"));
    }

    #[test]
    fn quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
