//! Checkpoints and plain-text exports.
//!
//! A checkpoint is a little binary file with the log-ratio field plus a JSON
//! sidecar with the model data and certificates. Reading rebuilds the grid
//! and re-certifies the solution with the same fixed-order arithmetic, so a
//! resumed run continues bit-for-bit.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{higgs_data, HiggsData, ScalarField, SphereGrid};
use crate::model::{Divisor, ModelParams};
use crate::ode::RadialProfile;
use crate::pde::EbSolutionCompact;

const MAGIC: [u8; 4] = *b"EBCK";
const FORMAT_VERSION: u32 = 1;

/// JSON sidecar of a checkpoint.
#[derive(Serialize, Deserialize)]
struct Sidecar {
    lambda: f64,
    tau: f64,
    n: u32,
    divisor: Divisor,
    residual_norm: f64,
    volume: f64,
    iterations: usize,
}

/// Sidecar path of a checkpoint file: same stem, json extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes a checkpoint pair for a converged solution.
pub fn write_checkpoint(
    path: &Path,
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    sol: &EbSolutionCompact,
) -> Result<()> {
    let values = sol.v.values();
    let mut buf = Vec::with_capacity(24 + 8 * values.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.res() as u32).to_le_bytes());
    buf.extend_from_slice(&grid.r_c().to_le_bytes());
    for &x in values {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, &buf)?;
    let sidecar = Sidecar {
        lambda: sol.lambda,
        tau: params.tau,
        n: params.n,
        divisor: higgs.divisor.clone(),
        residual_norm: sol.residual_norm,
        volume: sol.volume,
        iterations: sol.iterations,
    };
    let text = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Format(format!("sidecar serialization: {e}")))?;
    fs::write(sidecar_path(path), text)?;
    Ok(())
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, len: usize) -> Result<&'a [u8]> {
    let end = *at + len;
    if end > bytes.len() {
        return Err(Error::Format(format!(
            "checkpoint truncated at byte {} of {}",
            *at,
            bytes.len()
        )));
    }
    let out = &bytes[*at..end];
    *at = end;
    Ok(out)
}

/// Reads a checkpoint pair back into a certified solution.
pub fn read_checkpoint(
    path: &Path,
) -> Result<(SphereGrid, HiggsData, ModelParams, EbSolutionCompact)> {
    let bytes = fs::read(path)?;
    let mut at = 0usize;
    if take(&bytes, &mut at, 4)? != MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&bytes, &mut at, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let res = u32::from_le_bytes(take(&bytes, &mut at, 4)?.try_into().unwrap()) as usize;
    let r_c = f64::from_le_bytes(take(&bytes, &mut at, 8)?.try_into().unwrap());
    let count = 2 * res * res;
    let payload = take(&bytes, &mut at, 8 * count)?;
    if at != bytes.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} trailing bytes",
            bytes.len() - at
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let text = fs::read_to_string(sidecar_path(path))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("sidecar: {e}")))?;

    let params = ModelParams::compact(sidecar.tau, sidecar.n)?;
    let grid = SphereGrid::build(res, r_c)?;
    let higgs = higgs_data(&grid, &sidecar.divisor, &params)?;
    let v = ScalarField::from_values(&grid, values)?;
    // Re-certification recomputes the residual with the stored norm as the
    // budget; an unconverged or tampered field fails here.
    let sol = EbSolutionCompact::from_converged(
        &grid,
        &higgs,
        &params,
        sidecar.lambda,
        v,
        sidecar.iterations,
        sidecar.residual_norm.max(1e-10),
    )?;
    Ok((grid, higgs, params, sol))
}

/// Writes a field as csv with one row per node.
pub fn field_to_csv(path: &Path, grid: &SphereGrid, field: &ScalarField) -> Result<()> {
    let n = grid.res();
    let mut out = fs::File::create(path)?;
    writeln!(out, "chart,i,j,x,y,value")?;
    for chart in 0..2 {
        let slice = field.chart(chart);
        for i in 0..n {
            for j in 0..n {
                writeln!(
                    out,
                    "{chart},{i},{j},{:.17e},{:.17e},{:.17e}",
                    grid.coord(i),
                    grid.coord(j),
                    slice[i * n + j]
                )?;
            }
        }
    }
    Ok(())
}

/// Writes a radial profile as csv, one row per abscissa sample.
pub fn profile_to_csv(path: &Path, profile: &RadialProfile) -> Result<()> {
    let mut out = fs::File::create(path)?;
    writeln!(out, "abscissa,u,u_prime")?;
    for k in 0..profile.abscissa.len() {
        writeln!(
            out,
            "{:.17e},{:.17e},{:.17e}",
            profile.abscissa[k], profile.u[k], profile.u_prime[k]
        )?;
    }
    Ok(())
}
