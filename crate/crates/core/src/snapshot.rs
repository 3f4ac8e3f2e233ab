//! Snapshot files: one field state per plain-text CSV.
//!
//! Layout: `#`-prefixed metadata lines (k, ell, m, time, R_max, N, grading),
//! a `r,psi,psidot` header row, then one row per node. Floats are written
//! with 17 significant digits so a read-back is bit-exact; the r column is
//! checked against the regenerated grid and any mismatch is a format error.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::grid::{make_grid, Grading};
use crate::state::FieldState;

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_snapshot(state: &FieldState, path: &Path) -> Result<()> {
    let g = &state.grid;
    let mut out = String::new();
    writeln!(out, "# k {}", g.k()).unwrap();
    writeln!(out, "# ell {}", state.class.0).unwrap();
    writeln!(out, "# m {}", state.class.1).unwrap();
    writeln!(out, "# time {}", fmt_f64(state.time)).unwrap();
    writeln!(out, "# R_max {}", fmt_f64(g.r_max())).unwrap();
    writeln!(out, "# N {}", g.len()).unwrap();
    match g.grading() {
        Grading::Uniform => writeln!(out, "# grading uniform").unwrap(),
        Grading::Geometric { ratio } => {
            writeln!(out, "# grading geometric {}", fmt_f64(ratio)).unwrap()
        }
    }
    writeln!(out, "r,psi,psidot").unwrap();
    for i in 0..g.len() {
        writeln!(
            out,
            "{},{},{}",
            fmt_f64(g.nodes()[i]),
            fmt_f64(state.psi[i]),
            fmt_f64(state.psidot[i])
        )
        .unwrap();
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(out.as_bytes())?;
    file.flush()?;
    Ok(())
}

struct Meta {
    k: Option<u32>,
    ell: Option<i32>,
    m: Option<i32>,
    time: Option<f64>,
    r_max: Option<f64>,
    n: Option<usize>,
    grading: Option<Grading>,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Format(msg.into()))
}

fn parse_num<T: std::str::FromStr>(key: &str, text: &str) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| CoreError::Format(format!("metadata key `{key}` has bad value `{text}`")))
}

pub fn read_snapshot(path: &Path) -> Result<FieldState> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut meta = Meta {
        k: None,
        ell: None,
        m: None,
        time: None,
        r_max: None,
        n: None,
        grading: None,
    };
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    let mut saw_header_row = false;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut parts = rest.split_whitespace();
            let key = parts.next().unwrap_or("");
            let val = parts.next().unwrap_or("");
            match key {
                "k" => meta.k = Some(parse_num("k", val)?),
                "ell" => meta.ell = Some(parse_num("ell", val)?),
                "m" => meta.m = Some(parse_num("m", val)?),
                "time" => meta.time = Some(parse_num("time", val)?),
                "R_max" => meta.r_max = Some(parse_num("R_max", val)?),
                "N" => meta.n = Some(parse_num("N", val)?),
                "grading" => {
                    meta.grading = Some(match val {
                        "uniform" => Grading::Uniform,
                        "geometric" => {
                            let ratio = parts.next().ok_or_else(|| {
                                CoreError::Format("grading geometric is missing its ratio".into())
                            })?;
                            Grading::Geometric {
                                ratio: parse_num("grading", ratio)?,
                            }
                        }
                        other => {
                            return format_err(format!("unknown grading `{other}`"));
                        }
                    })
                }
                other => return format_err(format!("unknown metadata key `{other}`")),
            }
            continue;
        }
        if !saw_header_row {
            if line != "r,psi,psidot" {
                return format_err(format!(
                    "line {}: expected column header `r,psi,psidot`, got `{line}`",
                    lineno + 1
                ));
            }
            saw_header_row = true;
            continue;
        }
        let mut cols = line.split(',');
        let mut next = |name: &str| -> Result<f64> {
            let cell = cols
                .next()
                .ok_or_else(|| CoreError::Format(format!("line {}: missing column `{name}`", lineno + 1)))?;
            parse_num(name, cell)
        };
        rows.push((next("r")?, next("psi")?, next("psidot")?));
    }

    let k = meta.k.ok_or_else(|| missing("k"))?;
    let ell = meta.ell.ok_or_else(|| missing("ell"))?;
    let m = meta.m.ok_or_else(|| missing("m"))?;
    let time = meta.time.ok_or_else(|| missing("time"))?;
    let r_max = meta.r_max.ok_or_else(|| missing("R_max"))?;
    let n = meta.n.ok_or_else(|| missing("N"))?;
    let grading = meta.grading.ok_or_else(|| missing("grading"))?;

    if rows.len() != n {
        return format_err(format!("metadata N = {n} but file has {} rows", rows.len()));
    }
    let grid = Arc::new(make_grid(r_max, n, grading, k)?);
    for (i, (r, _, _)) in rows.iter().enumerate() {
        if *r != grid.nodes()[i] {
            return format_err(format!(
                "row {i}: r = {r:?} does not match the declared grid node {:?}",
                grid.nodes()[i]
            ));
        }
    }
    let psi = rows.iter().map(|t| t.1).collect();
    let psidot = rows.iter().map(|t| t.2).collect();
    FieldState::new(grid, psi, psidot, (ell, m), time)
}

fn missing(key: &str) -> CoreError {
    CoreError::Format(format!("missing metadata key `{key}`"))
}
