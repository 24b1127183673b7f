//! Checkpoint and export round-trips.

use eb_core::error::Error;
use eb_core::grid::{higgs_data, SphereGrid};
use eb_core::io::{
    field_to_csv, profile_to_csv, read_checkpoint, sidecar_path, write_checkpoint,
};
use eb_core::model::{Divisor, DivisorEntry, ModelParams, P1Point};
use eb_core::ode::shoot_compact;
use eb_core::pde::{newton_solve, transfer_profile, NewtonOptions};

fn small_solution() -> (
    SphereGrid,
    eb_core::grid::HiggsData,
    ModelParams,
    eb_core::pde::EbSolutionCompact,
    eb_core::ode::RadialProfile,
) {
    let params = ModelParams::compact(1.0, 2).unwrap();
    let grid = SphereGrid::build(32, 1.2).unwrap();
    let divisor = Divisor::new(vec![
        DivisorEntry { point: P1Point::finite(0.0, 0.0), multiplicity: 1 },
        DivisorEntry { point: P1Point::Infinity, multiplicity: 1 },
    ])
    .unwrap();
    let higgs = higgs_data(&grid, &divisor, &params).unwrap();
    let profile = shoot_compact(&params, 1.0, 1e-3, 12.0).unwrap();
    let (v0, lambda) = transfer_profile(&grid, &higgs, &profile).unwrap();
    let sol = newton_solve(&grid, &higgs, &params, lambda, &v0, &NewtonOptions::default()).unwrap();
    (grid, higgs, params, sol, profile)
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let (grid, higgs, params, sol, _) = small_solution();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.ebck");
    write_checkpoint(&path, &grid, &higgs, &params, &sol).unwrap();
    assert!(sidecar_path(&path).exists());

    let (grid2, _higgs2, params2, sol2) = read_checkpoint(&path).unwrap();
    assert_eq!(grid2.res(), grid.res());
    assert_eq!(params2.n, params.n);
    assert_eq!(sol2.lambda, sol.lambda);
    assert_eq!(sol2.v.values(), sol.v.values());
    // Residual and volume recompute to the same bits on reload.
    assert_eq!(sol2.residual_norm, sol.residual_norm);
    assert_eq!(sol2.volume, sol.volume);
}

#[test]
fn version_and_magic_mismatches_are_format_errors() {
    let (grid, higgs, params, sol, _) = small_solution();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.ebck");
    write_checkpoint(&path, &grid, &higgs, &params, &sol).unwrap();

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_checkpoint(&path), Err(Error::Format(_))));

    bytes[0..4].copy_from_slice(b"NOPE");
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_checkpoint(&path), Err(Error::Format(_))));
}

#[test]
fn tampered_payload_fails_recertification() {
    let (grid, higgs, params, sol, _) = small_solution();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.ebck");
    write_checkpoint(&path, &grid, &higgs, &params, &sol).unwrap();

    let mut bytes = std::fs::read(&path).unwrap();
    let k = bytes.len() - 8;
    bytes[k..].copy_from_slice(&1.0f64.to_le_bytes());
    std::fs::write(&path, &bytes).unwrap();
    assert!(read_checkpoint(&path).is_err());
}

#[test]
fn csv_exports_have_one_row_per_sample() {
    let (grid, _, _, sol, profile) = small_solution();
    let dir = tempfile::tempdir().unwrap();

    let fpath = dir.path().join("field.csv");
    field_to_csv(&fpath, &grid, &sol.v).unwrap();
    let lines = std::fs::read_to_string(&fpath).unwrap().lines().count();
    assert_eq!(lines, 2 * grid.res() * grid.res() + 1);

    let ppath = dir.path().join("profile.csv");
    profile_to_csv(&ppath, &profile).unwrap();
    let lines = std::fs::read_to_string(&ppath).unwrap().lines().count();
    assert_eq!(lines, profile.abscissa.len() + 1);
}
