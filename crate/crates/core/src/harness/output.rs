use std::fs;
use std::io::Write;
use std::path::Path;

use super::ExperimentResult;
use crate::error::{Error, Result};

pub const OUTPUT_FILES: [&str; 5] = [
    "trials.csv",
    "curves.csv",
    "fits.csv",
    "constants.txt",
    "config_echo.toml",
];

const HASH_PREFIX: &str = "# config_hash = ";

/// Hash recorded in an existing result directory, if any.
pub fn read_config_hash(dir: &Path) -> Result<Option<String>> {
    let path = dir.join("config_echo.toml");
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .find_map(|l| l.strip_prefix(HASH_PREFIX))
        .map(|h| h.trim().to_string()))
}

/// Write every result file into `dir`. A directory holding results of a
/// different configuration is left untouched unless `force` is set.
pub fn write_outputs(result: &ExperimentResult, dir: &Path, force: bool) -> Result<()> {
    if !force {
        if let Some(existing) = read_config_hash(dir)? {
            if existing != result.config_hash {
                return Err(Error::Overwrite {
                    dir: dir.display().to_string(),
                    existing,
                    requested: result.config_hash.clone(),
                });
            }
        }
    }
    fs::create_dir_all(dir)?;
    let header = format!("{HASH_PREFIX}{}\n", result.config_hash);

    let mut trials = header.clone();
    trials.push_str("trial,n,t,quantity,value\n");
    for r in &result.records {
        trials.push_str(&format!("{},{},{},{},{:e}\n", r.trial, r.n, r.t, r.quantity, r.value));
    }
    fs::write(dir.join("trials.csv"), trials)?;

    let mut curves = header.clone();
    curves.push_str("quantity,t,N,estimate,stderr_low,stderr_high,n_trials\n");
    for c in &result.curves {
        let p = &c.point;
        curves.push_str(&format!(
            "{},{},{},{:e},{:e},{:e},{}\n",
            c.quantity, c.t, p.n, p.estimate, p.stderr_low, p.stderr_high, p.n_trials
        ));
    }
    fs::write(dir.join("curves.csv"), curves)?;

    let mut fits = header.clone();
    fits.push_str("quantity,t,axis,slope,intercept,r2,n_points,n_trials\n");
    for f in &result.fits {
        fits.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{},{}\n",
            f.quantity, f.t, f.axis, f.slope, f.intercept, f.r_squared, f.n_points, f.n_trials
        ));
    }
    fs::write(dir.join("fits.csv"), fits)?;

    let mut file = fs::File::create(dir.join("constants.txt"))?;
    file.write_all(header.as_bytes())?;
    for (k, v) in &result.constants {
        writeln!(file, "{k} = {v}")?;
    }
    writeln!(file, "wall_time_s = {:.3}", result.wall_time_s)?;
    writeln!(file, "workers = {}", result.config.workers)?;
    for f in &result.fits {
        writeln!(
            file,
            "fit.{}.t={} = slope {:.4}, r2 {:.4}, n_trials {}",
            f.quantity, f.t, f.slope, f.r_squared, f.n_trials
        )?;
    }
    for c in &result.checks {
        writeln!(
            file,
            "check.{} = {} ({})",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        )?;
    }
    writeln!(file, "all_checks = {}", if result.passed() { "PASS" } else { "FAIL" })?;

    let echo = format!("{header}{}", result.config.to_toml_string()?);
    fs::write(dir.join("config_echo.toml"), echo)?;
    Ok(())
}
