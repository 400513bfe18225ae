//! CSV and JSON writers. Floats are printed with 17 significant digits.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use zkdamper_core::EnergyRecord;

use crate::CliError;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_energy_csv(mut w: impl Write, records: &[EnergyRecord]) -> io::Result<()> {
    writeln!(w, "{}", EnergyRecord::CSV_HEADER)?;
    for r in records {
        let row: Vec<String> = r.csv_values().iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

pub fn save_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn save_energy_csv(path: &Path, records: &[EnergyRecord]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_energy_csv(&mut buf, records).expect("writing to memory");
    save_bytes(path, &buf)
}

pub fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

pub fn save_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    save_bytes(path, to_json(value).as_bytes())
}
