//! Plot-ready flat CSVs: downsampled field profiles and the scalar series
//! in long format. Everything here is derived from data already on disk, so
//! it is regenerable and excluded from no artifact contract.

use std::path::Path;

use wavemap_core::FieldState;

use crate::error::Result;
use crate::fmt_f64;
use crate::runner::SeriesRow;

const MAX_PROFILES: usize = 64;
const MAX_NODES: usize = 256;

/// Evenly spaced index selection that always keeps both endpoints.
fn downsample_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..max)
        .map(|i| (i as f64 * (len - 1) as f64 / (max - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

pub fn emit(dir: &Path, snapshots: &[FieldState], rows: &[SeriesRow]) -> Result<()> {
    let plot_dir = dir.join("plotdata");
    std::fs::create_dir_all(&plot_dir)?;

    let mut profiles = String::from("time,r,psi,psidot\n");
    for si in downsample_indices(snapshots.len(), MAX_PROFILES) {
        let snap = &snapshots[si];
        let r = snap.grid.nodes();
        for ni in downsample_indices(r.len(), MAX_NODES) {
            profiles.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(snap.time),
                fmt_f64(r[ni]),
                fmt_f64(snap.psi[ni]),
                fmt_f64(snap.psidot[ni]),
            ));
        }
    }
    std::fs::write(plot_dir.join("profiles.csv"), profiles.as_bytes())?;

    let mut series = String::from("time,quantity,value\n");
    for row in rows {
        let quantities = [
            ("energy_total", row.energy.total),
            ("energy_kin", row.energy.kinetic),
            ("energy_pot", row.energy.potential),
            ("e_norm", row.e_norm),
            ("local_e_interior", row.interior),
            ("local_e_exterior", row.exterior),
            ("dt", row.dt),
        ];
        for (name, value) in quantities {
            series.push_str(&format!(
                "{},{name},{}\n",
                fmt_f64(row.time),
                fmt_f64(value)
            ));
        }
    }
    std::fs::write(plot_dir.join("series_long.csv"), series.as_bytes())?;
    Ok(())
}
