//! Subcommand implementations over the core solvers.
//!
//! Artifact references inside summaries are file names relative to the
//! output directory, so identical runs in different directories produce
//! identical summaries.

use crate::config::{self, ModeName, RunConfig};
use crate::{Cli, Command};
use eb_core::diagnostics::{self, DefectEntry};
use eb_core::error::{Error, Result};
use eb_core::grid::{higgs_data, HiggsData, SphereGrid};
use eb_core::io;
use eb_core::model::{lambda_of_b, ModelParams};
use eb_core::ode::{self, ProfileGeometry, RadialProfile};
use eb_core::pde::{self, EbSolutionCompact};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

pub fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().ok();
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::load(config_path)?;
    let outdir = resolve_outdir(&cli, &cfg);
    std::fs::create_dir_all(&outdir)?;
    let resume = cli.resume || cfg.checkpoint.resume;
    match cli.command {
        Command::SolvePde => solve_pde(&cfg, &outdir, resume),
        Command::MaximalBranch => maximal_branch_cmd(&cfg, &outdir, resume),
        Command::ContinueVolume => continue_volume(&cfg, &outdir, resume),
        Command::SolveSymmetric => solve_symmetric(&cfg, &outdir),
        Command::SolveCylindrical => solve_cylindrical_cmd(&cfg, &outdir),
        Command::SolveChmy => solve_chmy_cmd(&cfg, &outdir),
        Command::ReportDissolving => report_dissolving(&cfg, &outdir),
        Command::ReportLargeVolume => report_large_volume(&cfg, &outdir),
        Command::Diagnose => diagnose_cmd(&cfg, &outdir),
    }
}

/// Precedence: `--output` flag, then `EB_OUTPUT_DIR`, then the config.
fn resolve_outdir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.output
        .clone()
        .or_else(|| std::env::var_os("EB_OUTPUT_DIR").map(PathBuf::from))
        .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

struct CompactSetup {
    params: ModelParams,
    grid: SphereGrid,
    higgs: HiggsData,
}

fn compact_setup(cfg: &RunConfig) -> Result<CompactSetup> {
    if cfg.model.mode != ModeName::Compact {
        return Err(Error::Mode("this command runs in compact mode".into()));
    }
    let params = cfg.model.params()?;
    let divisor = cfg
        .divisor
        .clone()
        .ok_or_else(|| Error::Config("this command needs a [[divisor]] table".into()))?;
    let grid = cfg.grid.build()?;
    let higgs = higgs_data(&grid, &divisor, &params)?;
    Ok(CompactSetup { params, grid, higgs })
}

fn compact_params(cfg: &RunConfig) -> Result<ModelParams> {
    if cfg.model.mode != ModeName::Compact {
        return Err(Error::Mode("this command runs in compact mode".into()));
    }
    cfg.model.params()
}

fn checkpoint_file(outdir: &Path, name: &str) -> PathBuf {
    let p = Path::new(name);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        outdir.join(p)
    }
}

/// `base = state.ebck`, `tag = 03` gives `state_03.ebck` beside `base`.
fn tagged_checkpoint(outdir: &Path, base: &str, tag: &str) -> PathBuf {
    let p = checkpoint_file(outdir, base);
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("state");
    let ext = p.extension().and_then(|s| s.to_str()).unwrap_or("ebck");
    p.with_file_name(format!("{stem}_{tag}.{ext}"))
}

fn file_name(path: &Path) -> String {
    path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

fn write_summary(
    outdir: &Path,
    cfg: &RunConfig,
    echo: Value,
    command: &str,
    results: Value,
) -> Result<()> {
    let summary = json!({ "command": command, "config": echo, "results": results });
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Format(format!("summary serialization: {e}")))?;
    println!("{text}");
    if cfg.output.wants("json") {
        std::fs::write(outdir.join("summary.json"), format!("{text}\n"))?;
    }
    Ok(())
}

fn check_compatible(
    setup: &CompactSetup,
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
) -> Result<()> {
    if grid.res() != setup.grid.res() || grid.r_c() != setup.grid.r_c() {
        return Err(Error::Config("checkpoint grid differs from the configured grid".into()));
    }
    if params.tau != setup.params.tau
        || params.n != setup.params.n
        || params.mode != setup.params.mode
    {
        return Err(Error::Config("checkpoint model differs from the configured model".into()));
    }
    if higgs.divisor != setup.higgs.divisor {
        return Err(Error::Config(
            "checkpoint divisor differs from the configured divisor".into(),
        ));
    }
    Ok(())
}

fn solve_pde(cfg: &RunConfig, outdir: &Path, resume: bool) -> Result<()> {
    let setup = compact_setup(cfg)?;
    let lambdas = cfg.schedule.lambda_list()?;
    if lambdas.len() != 1 {
        return Err(Error::Config(
            "solve-pde needs exactly one entry in schedule.lambda_list".into(),
        ));
    }
    let lambda = lambdas[0];
    let ck = checkpoint_file(outdir, &cfg.checkpoint.path);
    let sol = if resume && ck.exists() {
        let (grid2, higgs2, params2, prev) = io::read_checkpoint(&ck)?;
        check_compatible(&setup, &grid2, &higgs2, &params2)?;
        pde::newton_solve(
            &setup.grid,
            &setup.higgs,
            &setup.params,
            lambda,
            &prev.v,
            &cfg.solver.newton(),
        )?
    } else {
        let path = pde::maximal_branch(
            &setup.grid,
            &setup.higgs,
            &setup.params,
            &[lambda],
            &cfg.solver.branch(),
        )?;
        path.entries.into_iter().next().expect("one coupling yields one entry")
    };
    if cfg.output.wants("checkpoint") {
        io::write_checkpoint(&ck, &setup.grid, &setup.higgs, &setup.params, &sol)?;
    }
    if cfg.output.wants("csv") {
        io::field_to_csv(&outdir.join("state_log.csv"), &setup.grid, &sol.v)?;
    }
    let echo = config::resolved_echo(cfg, &setup.params, outdir, resume);
    write_summary(
        outdir,
        cfg,
        echo,
        "solve-pde",
        json!({
            "lambda": sol.lambda,
            "volume": sol.volume,
            "residual_norm": sol.residual_norm,
            "iterations": sol.iterations,
            "checkpoint": file_name(&ck),
        }),
    )
}

/// Walks the branch one schedule entry at a time, writing a checkpoint after
/// each, so an interrupted run leaves a resumable prefix. With `resume`,
/// existing checkpoints for the small-coupling end are reloaded and the walk
/// continues from the largest one; the reloaded iterates are bit-identical
/// to what an uninterrupted run holds at that point, so the remainder of the
/// path is too.
fn branch_over(
    cfg: &RunConfig,
    outdir: &Path,
    setup: &CompactSetup,
    lambdas: &[f64],
    resume: bool,
) -> Result<Vec<EbSolutionCompact>> {
    let last = lambdas.len() - 1;
    let mut ascending: Vec<EbSolutionCompact> = Vec::with_capacity(lambdas.len());
    let mut next = last as i64;
    if resume {
        for i in (0..=last).rev() {
            let path = tagged_checkpoint(outdir, &cfg.checkpoint.path, &format!("{i:02}"));
            if !path.exists() {
                break;
            }
            let (grid2, higgs2, params2, sol) = io::read_checkpoint(&path)?;
            check_compatible(setup, &grid2, &higgs2, &params2)?;
            if (sol.lambda - lambdas[i]).abs() > 1e-12 * lambdas[i] {
                return Err(Error::Config(format!(
                    "checkpoint {} holds coupling {:.12e}, the schedule expects {:.12e}",
                    path.display(),
                    sol.lambda,
                    lambdas[i]
                )));
            }
            ascending.push(sol);
            next = i as i64 - 1;
        }
        for pair in ascending.windows(2) {
            pde::certify_branch_descent(&setup.grid, &pair[0], &pair[1])?;
        }
    }
    if ascending.is_empty() {
        let seed = pde::maximal_branch(
            &setup.grid,
            &setup.higgs,
            &setup.params,
            &lambdas[last..],
            &cfg.solver.branch(),
        )?;
        let sol = seed.entries.into_iter().next().expect("seed entry");
        persist_entry(cfg, outdir, setup, &sol, last)?;
        ascending.push(sol);
        next = last as i64 - 1;
    }
    while next >= 0 {
        let i = next as usize;
        let step = pde::extend_branch(
            &setup.grid,
            &setup.higgs,
            &setup.params,
            ascending.last().expect("seeded"),
            &lambdas[i..=i],
            &cfg.solver.branch(),
        )?;
        let sol = step.into_iter().next().expect("one target yields one entry");
        persist_entry(cfg, outdir, setup, &sol, i)?;
        ascending.push(sol);
        next -= 1;
    }
    ascending.reverse();
    Ok(ascending)
}

fn persist_entry(
    cfg: &RunConfig,
    outdir: &Path,
    setup: &CompactSetup,
    sol: &EbSolutionCompact,
    index: usize,
) -> Result<()> {
    if cfg.output.wants("checkpoint") {
        let path = tagged_checkpoint(outdir, &cfg.checkpoint.path, &format!("{index:02}"));
        io::write_checkpoint(&path, &setup.grid, &setup.higgs, &setup.params, sol)?;
    }
    Ok(())
}

fn maximal_branch_cmd(cfg: &RunConfig, outdir: &Path, resume: bool) -> Result<()> {
    let setup = compact_setup(cfg)?;
    let lambdas = cfg.schedule.lambda_list()?;
    if !lambdas.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::Config(
            "schedule.lambda_list must descend strictly for maximal-branch".into(),
        ));
    }
    let entries = branch_over(cfg, outdir, &setup, lambdas, resume)?;
    let rows: Vec<Value> = entries
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({
                "lambda": s.lambda,
                "volume": s.volume,
                "normalized_volume": s.lambda * s.volume,
                "residual_norm": s.residual_norm,
                "iterations": s.iterations,
                "checkpoint": file_name(&tagged_checkpoint(
                    outdir,
                    &cfg.checkpoint.path,
                    &format!("{i:02}"),
                )),
            })
        })
        .collect();
    let echo = config::resolved_echo(cfg, &setup.params, outdir, resume);
    write_summary(outdir, cfg, echo, "maximal-branch", json!({ "entries": rows }))
}

fn continue_volume(cfg: &RunConfig, outdir: &Path, resume: bool) -> Result<()> {
    let setup = compact_setup(cfg)?;
    let targets = cfg.schedule.volume_list()?;
    if !resume {
        return Err(Error::Config(
            "continue-volume starts from a checkpoint; pass --resume or set checkpoint.resume"
                .into(),
        ));
    }
    let ck = checkpoint_file(outdir, &cfg.checkpoint.path);
    let (grid2, higgs2, params2, start) = io::read_checkpoint(&ck)?;
    check_compatible(&setup, &grid2, &higgs2, &params2)?;
    let path = pde::continuation_volume(
        &setup.grid,
        &setup.higgs,
        &setup.params,
        targets,
        &start,
        &cfg.solver.volume(),
    )?;
    let mut rows = Vec::new();
    for (i, sol) in path.entries.iter().enumerate() {
        let ck_i = tagged_checkpoint(outdir, &cfg.checkpoint.path, &format!("vol{i:02}"));
        if cfg.output.wants("checkpoint") {
            io::write_checkpoint(&ck_i, &setup.grid, &setup.higgs, &setup.params, sol)?;
        }
        rows.push(json!({
            "target_volume": targets[i],
            "volume": sol.volume,
            "lambda": sol.lambda,
            "residual_norm": sol.residual_norm,
            "iterations": sol.iterations,
            "checkpoint": file_name(&ck_i),
        }));
    }
    let echo = config::resolved_echo(cfg, &setup.params, outdir, resume);
    write_summary(
        outdir,
        cfg,
        echo,
        "continue-volume",
        json!({
            "start_lambda": start.lambda,
            "start_volume": start.volume,
            "entries": rows,
            "complete": path.complete,
            "note": path.note,
        }),
    )
}

fn solve_symmetric(cfg: &RunConfig, outdir: &Path) -> Result<()> {
    let params = compact_params(cfg)?;
    let bs = cfg.schedule.b_list()?;
    let mut rows = Vec::new();
    for (i, &b) in bs.iter().enumerate() {
        let profile = ode::shoot_compact(&params, b, cfg.ode.step, cfg.ode.t_max)?;
        let ProfileGeometry::Compact {
            volume,
            central_circumference,
            pole_distance,
            total_curvature,
        } = ode::profile_geometry(&profile)?
        else {
            return Err(Error::Mode("symmetric shooting must yield the compact geometry".into()));
        };
        let csv = format!("symmetric_{i:02}.csv");
        if cfg.output.wants("csv") {
            io::profile_to_csv(&outdir.join(&csv), &profile)?;
        }
        rows.push(json!({
            "b": b,
            "lambda": lambda_of_b(b, &params)?,
            "plane_coupling": profile.plane_temper(),
            "conserved_defect": ode::conserved_defect(&profile)?,
            "volume": volume,
            "central_circumference": central_circumference,
            "pole_distance": pole_distance,
            "total_curvature": total_curvature,
            "clamp_events": profile.clamp_events,
            "csv": csv,
        }));
    }
    let echo = config::resolved_echo(cfg, &params, outdir, false);
    write_summary(outdir, cfg, echo, "solve-symmetric", json!({ "profiles": rows }))
}

/// Bisects for the abscissa where the monotone profile reaches depth `-c`.
fn anchor_shift(profile: &RadialProfile, c: f64) -> Result<f64> {
    let target = -c;
    let (mut lo, mut hi) = (profile.abscissa[0], *profile.abscissa.last().unwrap());
    let (u_lo, u_hi) = (profile.u[0], *profile.u.last().unwrap());
    if !(u_lo <= target && target <= u_hi) {
        return Err(Error::Config(format!(
            "anchor depth {c} is outside the solved depth range ({:.6}, {:.6})",
            -u_hi, -u_lo
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (u, _) = profile.sample(mid).expect("midpoint stays inside the window");
        if u < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn write_shifted_profile(path: &Path, profile: &RadialProfile, shift: f64) -> Result<()> {
    let mut text = String::from("abscissa,u,u_prime\n");
    for k in 0..profile.abscissa.len() {
        text.push_str(&format!(
            "{:.17e},{:.17e},{:.17e}\n",
            profile.abscissa[k] - shift,
            profile.u[k],
            profile.u_prime[k]
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn solve_cylindrical_cmd(cfg: &RunConfig, outdir: &Path) -> Result<()> {
    let params = compact_params(cfg)?;
    let c = cfg.schedule.anchor()?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config("schedule.c must be positive and finite".into()));
    }
    let profile = ode::solve_cylindrical(&params, cfg.ode.step, cfg.ode.t_max)?;
    let shift = anchor_shift(&profile, c)?;
    let ProfileGeometry::Cylindrical { end_circumference, neck_ratio } =
        ode::profile_geometry(&profile)?
    else {
        return Err(Error::Mode("cylindrical solve must yield the cylindrical geometry".into()));
    };
    if cfg.output.wants("csv") {
        write_shifted_profile(&outdir.join("cylindrical.csv"), &profile, shift)?;
    }
    let (u_anchor, slope_anchor) = profile
        .sample(shift)
        .ok_or_else(|| Error::Validation("anchor abscissa left the solved window".into()))?;
    let echo = config::resolved_echo(cfg, &params, outdir, false);
    write_summary(
        outdir,
        cfg,
        echo,
        "solve-cylindrical",
        json!({
            "c": c,
            "shift": shift,
            "u_at_anchor": u_anchor,
            "slope_at_anchor": slope_anchor,
            "end_circumference": end_circumference,
            "neck_ratio": neck_ratio,
            "clamp_events": profile.clamp_events,
        }),
    )
}

fn solve_chmy_cmd(cfg: &RunConfig, outdir: &Path) -> Result<()> {
    if cfg.model.mode != ModeName::Planar {
        return Err(Error::Mode("solve-chmy runs in planar mode".into()));
    }
    let params = cfg.model.params()?;
    let opts = cfg.schedule.chmy()?.options();
    let profile = ode::chmy_solve(&params, &opts)?;
    let ProfileGeometry::Planar { flux, total_curvature, tail_ratio, u_far } =
        ode::profile_geometry(&profile)?
    else {
        return Err(Error::Mode("the conical shoot must yield the planar geometry".into()));
    };
    if cfg.output.wants("csv") {
        io::profile_to_csv(&outdir.join("chmy_profile.csv"), &profile)?;
    }
    let echo = config::resolved_echo(cfg, &params, outdir, false);
    write_summary(
        outdir,
        cfg,
        echo,
        "solve-chmy",
        json!({
            "s_star": profile.datum,
            "lambda": opts.lambda,
            "flux": flux,
            "total_curvature": total_curvature,
            "tail_ratio": tail_ratio,
            "u_far": u_far,
            "clamp_events": profile.clamp_events,
        }),
    )
}

fn report_dissolving(cfg: &RunConfig, outdir: &Path) -> Result<()> {
    let params = compact_params(cfg)?;
    let bs = cfg.schedule.b_list()?;
    let grid = cfg.grid.build()?;
    let report = diagnostics::dissolving_report(&grid, &params, bs, &cfg.solver.newton())?;
    let rows: Vec<Value> = report
        .entries
        .iter()
        .map(|e| {
            json!({
                "b": e.b,
                "lambda": e.lambda,
                "sup_phi": e.sup_phi,
                "sup_phi_limit": e.sup_phi_limit,
                "sup_ratio": e.sup_phi / e.sup_phi_limit,
                "volume_grid": e.volume_grid,
                "volume_profile": e.volume_profile,
                "residual_norm": e.residual_norm,
            })
        })
        .collect();
    let echo = config::resolved_echo(cfg, &params, outdir, false);
    write_summary(outdir, cfg, echo, "report-dissolving", json!({ "entries": rows }))
}

fn report_large_volume(cfg: &RunConfig, outdir: &Path) -> Result<()> {
    let setup = compact_setup(cfg)?;
    let lambdas = cfg.schedule.lambda_list()?;
    let path = pde::maximal_branch(
        &setup.grid,
        &setup.higgs,
        &setup.params,
        lambdas,
        &cfg.solver.branch(),
    )?;
    let report = diagnostics::large_volume_report(&setup.grid, &setup.higgs, &setup.params, &path)?;
    let rows: Vec<Value> = report
        .entries
        .iter()
        .zip(&report.normalized_gaps)
        .map(|(e, gap)| {
            json!({
                "lambda": e.lambda,
                "volume": e.volume,
                "normalized_volume": e.normalized_volume,
                "vacuum_gap_away": e.vacuum_gap_away,
                "normalized_gap": if gap.is_finite() { Value::from(*gap) } else { Value::Null },
            })
        })
        .collect();
    let echo = config::resolved_echo(cfg, &setup.params, outdir, false);
    write_summary(
        outdir,
        cfg,
        echo,
        "report-large-volume",
        json!({ "entries": rows, "cone_volume": report.cone_volume }),
    )
}

fn diagnose_cmd(cfg: &RunConfig, outdir: &Path) -> Result<()> {
    let ck = checkpoint_file(outdir, &cfg.checkpoint.path);
    let (grid, higgs, params, sol) = io::read_checkpoint(&ck)?;
    let d = diagnostics::diagnose(&grid, &higgs, &params, &sol)?;
    let entry = |e: &DefectEntry| json!({ "value": e.value, "tolerance": e.tolerance, "ok": e.ok() });
    let mut failing: Vec<&str> = Vec::new();
    for (name, e) in [
        ("residual", &d.residual),
        ("temper", &d.temper),
        ("flux_solvability", &d.flux_solvability),
        ("flux_identity", &d.flux_identity),
        ("overlap", &d.overlap),
        ("gauss_bonnet", &d.gauss_bonnet),
    ] {
        if !e.ok() {
            failing.push(name);
        }
    }
    let margin_positive = d.state_bound_margin.value > 0.0;
    if !margin_positive {
        failing.push("state_bound_margin");
    }
    let results = json!({
        "checkpoint": file_name(&ck),
        "lambda": d.lambda,
        "volume": d.volume,
        "residual": entry(&d.residual),
        "temper": entry(&d.temper),
        "flux_solvability": entry(&d.flux_solvability),
        "flux_identity": entry(&d.flux_identity),
        "overlap": entry(&d.overlap),
        "gauss_bonnet": entry(&d.gauss_bonnet),
        "state_bound_margin": { "value": d.state_bound_margin.value, "positive": margin_positive },
        "injectivity_reference_state": d.injectivity_reference_state,
        "injectivity_reference_metric": d.injectivity_reference_metric,
        "pass": failing.is_empty(),
    });
    let echo = config::resolved_echo(cfg, &params, outdir, true);
    write_summary(outdir, cfg, echo, "diagnose", results)?;
    if !failing.is_empty() {
        return Err(Error::Consistency(format!(
            "diagnostic certificates failed: {}",
            failing.join(", ")
        )));
    }
    Ok(())
}
