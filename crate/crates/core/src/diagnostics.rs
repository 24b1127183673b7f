//! Geometric certificates and reports for converged solutions.
//!
//! Everything here is read-only over a solution: integral identities (flux,
//! total curvature, volume normalization), pointwise curvature bounds, the
//! flat limit metric with conical singularities and its volume, two-sided
//! density comparisons, metric-space distance bounds between discretized
//! surfaces, and the two asymptotic-regime reports.

use std::collections::BinaryHeap;
use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fs_distance, HiggsData, ScalarField, SphereGrid};
use crate::model::{cone_angles, ConeAngle, Divisor, ModelParams, P1Point};
use crate::ode::{profile_geometry, shoot_compact, ProfileGeometry};
use crate::pde::{
    newton_solve, transfer_profile, ContinuationPath, EbSolutionCompact, NewtonOptions,
};

/// Solution Higgs density Phi = Phi_0 e^v.
pub fn state_function(higgs: &HiggsData, sol: &EbSolutionCompact) -> ScalarField {
    let mut phi = higgs.phi0.clone();
    let vals = sol.v.values();
    let mut k = 0;
    phi.map_in_place(|p| {
        let out = p * vals[k].exp();
        k += 1;
        out
    });
    phi
}

/// Density of the solution metric against the round form, times the
/// coupling: e^{2 alpha tau v - 2 alpha Phi}. The metric density itself is
/// this divided by lambda.
pub fn normalized_density(higgs: &HiggsData, params: &ModelParams, v: &ScalarField) -> ScalarField {
    let alpha = params.alpha;
    let tau = params.tau;
    let mut e = higgs.phi0.clone();
    let vals = v.values();
    let mut k = 0;
    e.map_in_place(|phi0| {
        let a = phi0 * vals[k].exp();
        let out = (2.0 * alpha * tau * vals[k] - 2.0 * alpha * a).exp();
        k += 1;
        out
    });
    e
}

/// Volume of the solution metric and the coupling recovered from it.
///
/// The recovered value must match the stored coupling to near machine
/// accuracy; a mismatch means the solution object is inconsistent.
pub fn volume_and_temper(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    sol: &EbSolutionCompact,
) -> Result<(f64, f64)> {
    let e = normalized_density(higgs, params, &sol.v);
    let total = grid.integrate(&e);
    let volume = total / sol.lambda;
    let temper = total / volume;
    if (temper - sol.lambda).abs() > 1e-6 * sol.lambda {
        return Err(Error::Consistency(format!(
            "volume-normalized coupling {temper:.15e} disagrees with stored {:.15e}",
            sol.lambda
        )));
    }
    Ok((volume, temper))
}

/// Integral flux identities of a solution.
#[derive(Clone, Copy, Debug)]
pub struct FluxDefects {
    /// Integral of (tau - Phi) over the solution metric, minus 4 pi N.
    pub solvability_defect: f64,
    /// Same integral halved against 2 pi N, with the opposite sign.
    pub curvature_form_defect: f64,
    /// solvability + 2 x curvature form; zero in exact float arithmetic.
    pub identity_residual: f64,
}

/// Evaluates the flux identities by one fixed-order quadrature.
pub fn flux_identities(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    sol: &EbSolutionCompact,
) -> FluxDefects {
    let tau = params.tau;
    let e = normalized_density(higgs, params, &sol.v);
    let mut density = e.clone();
    let phi0 = higgs.phi0.values();
    let vv = sol.v.values();
    let mut k = 0;
    density.map_in_place(|ev| {
        let out = (tau - phi0[k] * vv[k].exp()) * ev;
        k += 1;
        out
    });
    let flux = grid.integrate(&density) / sol.lambda;
    let target = 4.0 * std::f64::consts::PI * params.n as f64;
    let solvability_defect = flux - target;
    let curvature_form_defect = target / 2.0 - flux / 2.0;
    FluxDefects {
        solvability_defect,
        curvature_form_defect,
        identity_residual: solvability_defect + 2.0 * curvature_form_defect,
    }
}

/// Curvature data of a solution: the closed-form state curvature, the metric
/// curvature through the gradient splitting, and the total-curvature check.
#[derive(Clone, Debug)]
pub struct CurvatureFields {
    /// alpha tau (tau - Phi) e^{-2 alpha Phi} per node.
    pub state_curvature: ScalarField,
    /// Metric Gauss curvature per node via the gradient splitting.
    pub metric_curvature: ScalarField,
    /// Quadrature of the curvature of the solution metric over the sphere.
    pub gauss_bonnet_total: f64,
    /// (total - 4 pi) / 4 pi.
    pub gauss_bonnet_defect: f64,
    pub state_curvature_max: f64,
}

/// Flat-coordinate gradient of a chart slice by central differences,
/// one-sided on the outermost ring.
fn chart_gradient(grid: &SphereGrid, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = grid.res();
    let h = grid.cell();
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            gx[k] = if i == 0 {
                (values[k + n] - values[k]) / h
            } else if i == n - 1 {
                (values[k] - values[k - n]) / h
            } else {
                (values[k + n] - values[k - n]) / (2.0 * h)
            };
            gy[k] = if j == 0 {
                (values[k + 1] - values[k]) / h
            } else if j == n - 1 {
                (values[k] - values[k - 1]) / h
            } else {
                (values[k + 1] - values[k - 1]) / (2.0 * h)
            };
        }
    }
    (gx, gy)
}

/// Computes curvature fields and the total-curvature quadrature.
///
/// The metric curvature integrand splits the curvature into a gradient term
/// weighted by the state and a potential term, which stays integrable across
/// the divisor; nodes where the closed-form gradient overflows are repaired
/// from their neighbors.
pub fn curvature_fields(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    sol: &EbSolutionCompact,
) -> Result<CurvatureFields> {
    let tau = params.tau;
    let alpha = params.alpha;
    let n = grid.res();
    let nn = n * n;
    let h2 = grid.cell() * grid.cell();
    let e = normalized_density(higgs, params, &sol.v);

    let mut state = ScalarField::zeros(grid);
    let mut metric = ScalarField::zeros(grid);
    let mut total = 0.0;
    let mut state_max: f64 = 0.0;
    for chart in 0..2 {
        let (gvx, gvy) = chart_gradient(grid, sol.v.chart(chart));
        let phi0 = higgs.phi0.chart(chart);
        let vc = sol.v.chart(chart);
        let ec = e.chart(chart);
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let (x, y) = (grid.coord(i), grid.coord(j));
                let r2 = x * x + y * y;
                let phi = phi0[k] * vc[k].exp();
                let sk = alpha * tau * (tau - phi) * (-2.0 * alpha * phi).exp();
                state.set(chart, i, j, sk);
                state_max = state_max.max(sk);

                let (g0x, g0y) = higgs.grad_log_phi0(chart, x, y, params);
                let (gx, gy) = (g0x + gvx[k], g0y + gvy[k]);
                let grad2 = gx * gx + gy * gy;
                let rho = ec[k] / sol.lambda;
                let c_conf = 2.0 * rho / (1.0 + r2) / (1.0 + r2);
                let cell = alpha * phi * grad2 + alpha * (tau - phi) * (tau - phi) * c_conf;
                let chi = grid.chi()[k];
                if cell.is_finite() {
                    total += chi * cell * h2;
                }
                // Pointwise curvature against the solution metric.
                let sg = cell * (1.0 + r2) * (1.0 + r2) / (2.0 * rho);
                metric.set(chart, i, j, sg);
            }
        }
    }
    // Repair nodes where the divisor made the pointwise value overflow.
    for chart in 0..2 {
        let snapshot: Vec<f64> = metric.chart(chart).to_vec();
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                if snapshot[k].is_finite() {
                    continue;
                }
                let mut acc = 0.0;
                let mut cnt = 0;
                for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let (i2, j2) = (i as i64 + di, j as i64 + dj);
                    if (0..n as i64).contains(&i2) && (0..n as i64).contains(&j2) {
                        let w = snapshot[i2 as usize * n + j2 as usize];
                        if w.is_finite() {
                            acc += w;
                            cnt += 1;
                        }
                    }
                }
                if cnt > 0 {
                    metric.set(chart, i, j, acc / cnt as f64);
                }
            }
        }
    }
    let ceiling = alpha * tau * tau;
    for chart in 0..2 {
        for (k, &sk) in state.chart(chart).iter().enumerate() {
            if higgs.singular[chart * nn + k] {
                continue;
            }
            if !(-1e-12..=ceiling * (1.0 + 1e-12)).contains(&sk) {
                return Err(Error::Consistency(format!(
                    "state curvature {sk} escapes [0, alpha tau^2] = [0, {ceiling}]"
                )));
            }
        }
    }
    let four_pi = 4.0 * std::f64::consts::PI;
    Ok(CurvatureFields {
        state_curvature: state,
        metric_curvature: metric,
        gauss_bonnet_total: total,
        gauss_bonnet_defect: (total - four_pi) / four_pi,
        state_curvature_max: state_max,
    })
}

/// The flat limit metric with conical singularities at the divisor.
#[derive(Clone, Debug)]
pub struct ConeMetricData {
    pub angles: Vec<ConeAngle>,
    /// Disk radius used for the singular part of the volume quadrature.
    pub epsilon: f64,
    /// Volume at `epsilon`, then at epsilon/2 and epsilon/4.
    pub volume: f64,
    pub volume_refined: [f64; 2],
    /// Ratio of consecutive volume differences under radius halving.
    pub richardson_ratio: f64,
    /// Limit density against the round form, divergent at the divisor.
    pub density: ScalarField,
}

/// Coordinate images of every divisor point in one chart, with multiplicity
/// and divisor index.
fn chart_zero_images(divisor: &Divisor, chart: usize) -> Vec<(usize, f64, f64, f64)> {
    let mut out = Vec::new();
    for (idx, entry) in divisor.entries().iter().enumerate() {
        if let Some(q) = entry.point.chart_coord(chart) {
            out.push((idx, q.re, q.im, entry.multiplicity as f64));
        }
    }
    out
}

/// log of the nonvanishing factor of Phi_0 at the image of zero `idx` in a
/// chart: the limit of Phi_0 / |coord - image|^{2 m}.
fn log_peeled_density(divisor: &Divisor, n: f64, chart: usize, idx: usize) -> f64 {
    let entry = &divisor.entries()[idx];
    let q = entry.point.chart_coord(chart).expect("zero must be finite in this chart");
    let mut acc = -n * q.norm_sqr().ln_1p();
    if chart == 0 {
        for (i, other) in divisor.entries().iter().enumerate() {
            if i == idx {
                continue;
            }
            if let P1Point::Finite(p) = other.point {
                acc += other.multiplicity as f64 * (q - p).norm_sqr().ln();
            }
            // A zero at infinity contributes no finite factor in this chart.
        }
    } else {
        for (i, other) in divisor.entries().iter().enumerate() {
            match other.point {
                P1Point::Infinity => {
                    if i != idx {
                        acc += other.multiplicity as f64 * q.norm_sqr().ln();
                    }
                }
                P1Point::Finite(p) => {
                    if i == idx {
                        // |1 - p w|^{2m} = |p|^{2m} |w - q|^{2m} near w = q.
                        acc += other.multiplicity as f64 * p.norm_sqr().ln();
                    } else {
                        acc += other.multiplicity as f64 * (1.0 - p * q).norm_sqr().ln();
                    }
                }
            }
        }
    }
    acc
}

/// Cone volume at one disk radius: chi-blended regular quadrature outside
/// per-chart disks, plus the closed-form disk integrals.
fn cone_volume_at(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    density: &ScalarField,
    eps: f64,
) -> f64 {
    let n = grid.res();
    let s2 = 2.0 * params.alpha * params.tau;
    let c_phi = params.tau.powf(s2) * (-s2).exp();
    let deg = params.n as f64;
    let mut total = 0.0;
    for chart in 0..2 {
        let images = chart_zero_images(&higgs.divisor, chart);
        let dc = density.chart(chart);
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let w = grid.quad_w()[k];
                if w == 0.0 {
                    continue;
                }
                let (x, y) = (grid.coord(i), grid.coord(j));
                let excluded = images
                    .iter()
                    .any(|&(_, qx, qy, _)| (x - qx).hypot(y - qy) < eps);
                if !excluded {
                    total += w * dc[k];
                }
            }
        }
        for &(idx, qx, qy, mult) in &images {
            let bt = 2.0 - 2.0 * s2 * mult;
            let q2 = qx * qx + qy * qy;
            let log_q = log_peeled_density(&higgs.divisor, deg, chart, idx);
            let s_at = c_phi * (-s2 * log_q).exp() * 2.0 / (1.0 + q2) / (1.0 + q2);
            total += grid.chi_at(q2.sqrt())
                * 2.0
                * std::f64::consts::PI
                * s_at
                * eps.powf(bt)
                / bt;
        }
    }
    total
}

/// Builds the flat limit metric of a stable divisor and measures its volume
/// by composite quadrature at three disk radii.
pub fn cone_metric(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    eps_cells: f64,
) -> Result<ConeMetricData> {
    let angles = cone_angles(&higgs.divisor, params)?;
    if !(eps_cells >= 2.0) {
        return Err(Error::Validation(format!(
            "disk radius must span at least two cells, got {eps_cells}"
        )));
    }
    let s2 = 2.0 * params.alpha * params.tau;
    let c_phi = params.tau.powf(s2) * (-s2).exp();
    let mut density = higgs.phi0.clone();
    density.map_in_place(|phi0| c_phi * phi0.max(1e-300).powf(-s2));

    let eps = eps_cells * grid.cell();
    let volume = cone_volume_at(grid, higgs, params, &density, eps);
    let half = cone_volume_at(grid, higgs, params, &density, eps / 2.0);
    let quarter = cone_volume_at(grid, higgs, params, &density, eps / 4.0);
    let richardson_ratio = (half - volume) / (quarter - half);
    Ok(ConeMetricData {
        angles,
        epsilon: eps,
        volume,
        volume_refined: [half, quarter],
        richardson_ratio,
        density,
    })
}

/// Two-sided comparison margins of a solution density.
#[derive(Clone, Copy, Debug)]
pub struct ComparisonReport {
    /// min over owned nodes of (density - lower bound).
    pub lower_margin: f64,
    /// min over owned nodes of (upper bound - density).
    pub upper_margin: f64,
}

/// Checks the normalized solution density against its two-sided bounds: from
/// below by the reference solution at a larger coupling, from above by the
/// flat limit density.
///
/// Both margins must be nonnegative up to rounding dust; a real violation is
/// reported as a limit-check failure.
pub fn comparison_check(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    reference: &EbSolutionCompact,
    probe: &EbSolutionCompact,
) -> Result<ComparisonReport> {
    if probe.lambda > reference.lambda * (1.0 + 1e-12) {
        return Err(Error::Validation(format!(
            "comparison needs probe coupling {:.6e} at or below the reference {:.6e}",
            probe.lambda, reference.lambda
        )));
    }
    let s2 = 2.0 * params.alpha * params.tau;
    let c_phi = params.tau.powf(s2) * (-s2).exp();
    let e_probe = normalized_density(higgs, params, &probe.v);
    let nn = grid.res() * grid.res();
    let mut lower_margin = f64::INFINITY;
    let mut upper_margin = f64::INFINITY;
    for chart in 0..2 {
        let ep = e_probe.chart(chart);
        let v_ref = reference.v.chart(chart);
        let phi0 = higgs.phi0.chart(chart);
        for k in 0..nn {
            if !grid.own()[k] {
                continue;
            }
            let lower = (s2 * v_ref[k] - s2 * params.tau).exp();
            let upper = c_phi * phi0[k].max(1e-300).powf(-s2);
            lower_margin = lower_margin.min(ep[k] - lower);
            upper_margin = upper_margin.min(upper - ep[k]);
        }
    }
    const SLACK: f64 = -1e-10;
    if lower_margin < SLACK || upper_margin < SLACK {
        return Err(Error::LimitCheck(format!(
            "density comparison violated: lower margin {lower_margin:.3e}, upper margin {upper_margin:.3e}"
        )));
    }
    Ok(ComparisonReport { lower_margin, upper_margin })
}

/// Round distance from a chart point to a divisor point.
fn distance_to_point(chart: usize, x: f64, y: f64, point: &P1Point) -> f64 {
    match point {
        P1Point::Finite(p) => fs_distance(chart, x, y, 0, p.re, p.im),
        P1Point::Infinity => fs_distance(chart, x, y, 1, 0.0, 0.0),
    }
}

/// Owned nodes farther than a round distance from every divisor point.
///
/// Shared mask for sup bounds on compact sets away from the divisor.
pub fn mask_away_from_divisor(grid: &SphereGrid, higgs: &HiggsData, radius: f64) -> Vec<bool> {
    let n = grid.res();
    let nn = n * n;
    let mut mask = vec![false; 2 * nn];
    for chart in 0..2 {
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                if !grid.own()[k] {
                    continue;
                }
                let (x, y) = (grid.coord(i), grid.coord(j));
                let clear = higgs
                    .divisor
                    .entries()
                    .iter()
                    .all(|e| distance_to_point(chart, x, y, &e.point) > radius);
                mask[chart * nn + k] = clear;
            }
        }
    }
    mask
}

/// Distance bound between two conformal metrics on the discretized sphere.
#[derive(Clone, Debug)]
pub struct GhBound {
    /// Half the largest distance disagreement over sampled pairs.
    pub value: f64,
    pub node_count: usize,
    pub sample_count: usize,
    /// Worst-case inflation of graph paths over true geodesics for the
    /// 16-direction stencil, sec of half the largest angular gap.
    pub metrication_factor: f64,
    /// Largest sampled pairwise distance in the first metric.
    pub max_sample_distance_1: f64,
}

const STENCIL: [(i64, i64); 16] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
    (2, 1),
    (2, -1),
    (-2, 1),
    (-2, -1),
    (1, 2),
    (1, -2),
    (-1, 2),
    (-1, -2),
];

#[derive(PartialEq)]
struct HeapItem(f64, u32);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed so the BinaryHeap pops the smallest tentative distance.
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

fn dijkstra(adj: &[Vec<(u32, f64)>], src: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    dist[src] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapItem(0.0, src as u32));
    while let Some(HeapItem(d, node)) = heap.pop() {
        if d > dist[node as usize] {
            continue;
        }
        for &(next, w) in &adj[node as usize] {
            let nd = d + w;
            if nd < dist[next as usize] {
                dist[next as usize] = nd;
                heap.push(HeapItem(nd, next));
            }
        }
    }
    dist
}

/// Upper bound on the distance between the metric spaces defined by two
/// conformal densities on the same grid.
///
/// Nodes within three cells of the divisor or with degenerate densities are
/// dropped; the surviving nodes form one graph whose edges are round
/// distances scaled by averaged conformal factors, including seam edges
/// matching non-owned stencil ends to the other chart. Distances between
/// farthest-point samples are compared in the two metrics.
pub fn gh_upper_bound(
    grid: &SphereGrid,
    higgs: &HiggsData,
    density1: &ScalarField,
    density2: &ScalarField,
    samples: usize,
) -> Result<GhBound> {
    if samples < 2 {
        return Err(Error::Validation("need at least two distance samples".into()));
    }
    let n = grid.res();
    let nn = n * n;
    let m = grid.ownership_radius();
    let h = grid.cell();
    let exclusion = 3.0 * h;

    // Kept nodes: owned, clear of the divisor, both densities usable.
    let mut keep = vec![false; 2 * nn];
    let mut node_id = vec![u32::MAX; 2 * nn];
    let mut nodes = Vec::new();
    for chart in 0..2 {
        let d1 = density1.chart(chart);
        let d2 = density2.chart(chart);
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                if !grid.own()[k] {
                    continue;
                }
                if !(d1[k].is_finite() && d1[k] > 0.0 && d2[k].is_finite() && d2[k] > 0.0) {
                    continue;
                }
                let (x, y) = (grid.coord(i), grid.coord(j));
                let near = higgs
                    .divisor
                    .entries()
                    .iter()
                    .any(|e| distance_to_point(chart, x, y, &e.point) < exclusion);
                if near {
                    continue;
                }
                keep[chart * nn + k] = true;
                node_id[chart * nn + k] = nodes.len() as u32;
                nodes.push((chart, i, j));
            }
        }
    }
    if nodes.len() < samples {
        return Err(Error::Sampling(format!(
            "only {} usable nodes for {samples} samples",
            nodes.len()
        )));
    }

    let coord_of = |i: i64| -> f64 { -grid.r_c() + (i as f64 + 0.5) * h };
    let sigma = |field: &ScalarField, chart: usize, k: usize| field.chart(chart)[k].sqrt();

    // Deduplicated edges keyed by unordered endpoint pair, keeping the
    // shortest representative.
    let mut edges: HashMap<(u32, u32), (f64, f64)> = HashMap::new();
    for (id, &(chart, i, j)) in nodes.iter().enumerate() {
        let id = id as u32;
        let k = i * n + j;
        let (x, y) = (grid.coord(i), grid.coord(j));
        let s1p = sigma(density1, chart, k);
        let s2p = sigma(density2, chart, k);
        for (di, dj) in STENCIL {
            let (i2, j2) = (i as i64 + di, j as i64 + dj);
            let in_bounds = (0..n as i64).contains(&i2) && (0..n as i64).contains(&j2);
            let (other_id, ox, oy, ochart) = if in_bounds
                && keep[chart * nn + i2 as usize * n + j2 as usize]
            {
                let k2 = i2 as usize * n + j2 as usize;
                (node_id[k2 + chart * nn], grid.coord(i2 as usize), grid.coord(j2 as usize), chart)
            } else {
                // Stencil end leaves the kept set: glue across the seam when
                // the end lies beyond the ownership circle.
                let (x2, y2) = (coord_of(i2), coord_of(j2));
                let r2 = x2.hypot(y2);
                if r2 < m {
                    continue;
                }
                let (tx, ty) = (x2 / (r2 * r2), -y2 / (r2 * r2));
                let i3 = ((tx - grid.coord(0)) / h).round() as i64;
                let j3 = ((ty - grid.coord(0)) / h).round() as i64;
                if !(0..n as i64).contains(&i3) || !(0..n as i64).contains(&j3) {
                    continue;
                }
                let k3 = i3 as usize * n + j3 as usize;
                if !keep[(1 - chart) * nn + k3] {
                    continue;
                }
                (
                    node_id[(1 - chart) * nn + k3],
                    grid.coord(i3 as usize),
                    grid.coord(j3 as usize),
                    1 - chart,
                )
            };
            if other_id == id {
                continue;
            }
            let (oc, oi, oj) = nodes[other_id as usize];
            let ko = oi * n + oj;
            let base = fs_distance(chart, x, y, ochart, ox, oy);
            let w1 = base * 0.5 * (s1p + sigma(density1, oc, ko));
            let w2 = base * 0.5 * (s2p + sigma(density2, oc, ko));
            let key = (id.min(other_id), id.max(other_id));
            edges
                .entry(key)
                .and_modify(|e| {
                    if w1 < e.0 {
                        *e = (w1, w2);
                    }
                })
                .or_insert((w1, w2));
        }
    }

    let mut adj1 = vec![Vec::new(); nodes.len()];
    let mut adj2 = vec![Vec::new(); nodes.len()];
    let mut keys: Vec<_> = edges.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let (w1, w2) = edges[&key];
        adj1[key.0 as usize].push((key.1, w1));
        adj1[key.1 as usize].push((key.0, w1));
        adj2[key.0 as usize].push((key.1, w2));
        adj2[key.1 as usize].push((key.0, w2));
    }

    // Farthest-point sampling in the first metric, seeded at node 0.
    let mut sample_ids = vec![0u32];
    let mut best = dijkstra(&adj1, 0);
    for _ in 1..samples {
        let (mut far, mut far_d) = (0usize, -1.0);
        for (idx, &d) in best.iter().enumerate() {
            if d.is_infinite() {
                return Err(Error::Sampling(
                    "distance graph is disconnected; grids or densities are too degenerate".into(),
                ));
            }
            if d > far_d {
                far = idx;
                far_d = d;
            }
        }
        sample_ids.push(far as u32);
        let fresh = dijkstra(&adj1, far);
        for (b, f) in best.iter_mut().zip(fresh.iter()) {
            *b = b.min(*f);
        }
    }

    let rows: Vec<(Vec<f64>, Vec<f64>)> = sample_ids
        .par_iter()
        .map(|&s| (dijkstra(&adj1, s as usize), dijkstra(&adj2, s as usize)))
        .collect();
    let mut value: f64 = 0.0;
    let mut max_d1: f64 = 0.0;
    for (r1, r2) in &rows {
        for &t in &sample_ids {
            let (d1, d2) = (r1[t as usize], r2[t as usize]);
            if d1.is_infinite() || d2.is_infinite() {
                return Err(Error::Sampling(
                    "distance graph is disconnected between samples".into(),
                ));
            }
            value = value.max((d1 - d2).abs());
            max_d1 = max_d1.max(d1);
        }
    }
    Ok(GhBound {
        value: 0.5 * value,
        node_count: nodes.len(),
        sample_count: samples,
        metrication_factor: (0.5f64.atan() / 2.0).cos().recip(),
        max_sample_distance_1: max_d1,
    })
}

/// One row of the string-dissolving report.
#[derive(Clone, Copy, Debug)]
pub struct DissolvingEntry {
    pub b: f64,
    /// Coupling in the round normalization.
    pub lambda: f64,
    pub sup_phi: f64,
    /// Closed-form limit tau e^{-b} of the sup of the state.
    pub sup_phi_limit: f64,
    pub volume_grid: f64,
    pub volume_profile: f64,
    pub residual_norm: f64,
}

/// Report over the symmetric two-pole family: the state dissolves like
/// tau e^{-b} while the grid and profile volumes agree.
#[derive(Clone, Debug)]
pub struct DissolvingReport {
    pub entries: Vec<DissolvingEntry>,
}

/// Builds the dissolving report by solving the symmetric family at each b.
pub fn dissolving_report(
    grid: &SphereGrid,
    params: &ModelParams,
    b_list: &[f64],
    newton: &NewtonOptions,
) -> Result<DissolvingReport> {
    if b_list.is_empty() {
        return Err(Error::Validation("b list must not be empty".into()));
    }
    let n_half = params.n_half()?;
    let divisor = Divisor::new(vec![
        crate::model::DivisorEntry {
            point: P1Point::finite(0.0, 0.0),
            multiplicity: n_half,
        },
        crate::model::DivisorEntry { point: P1Point::Infinity, multiplicity: n_half },
    ])?;
    let higgs = crate::grid::higgs_data(grid, &divisor, params)?;
    let nn = grid.res() * grid.res();
    let mut entries = Vec::with_capacity(b_list.len());
    for &b in b_list {
        let profile = shoot_compact(params, b, 1e-3, 12.0)?;
        let (v0, lambda) = transfer_profile(grid, &higgs, &profile)?;
        let sol = newton_solve(grid, &higgs, params, lambda, &v0, newton)?;
        let phi = state_function(&higgs, &sol);
        let mut sup_phi: f64 = 0.0;
        for chart in 0..2 {
            for k in 0..nn {
                if grid.own()[k] {
                    sup_phi = sup_phi.max(phi.chart(chart)[k]);
                }
            }
        }
        let volume_profile = match profile_geometry(&profile)? {
            ProfileGeometry::Compact { volume, .. } => volume,
            _ => unreachable!("shoot_compact returns a compact profile"),
        };
        entries.push(DissolvingEntry {
            b,
            lambda,
            sup_phi,
            sup_phi_limit: params.tau * (-b).exp(),
            volume_grid: sol.volume,
            volume_profile,
            residual_norm: sol.residual_norm,
        });
    }
    Ok(DissolvingReport { entries })
}

/// One row of the large-volume report.
#[derive(Clone, Copy, Debug)]
pub struct LargeVolumeEntry {
    pub lambda: f64,
    pub volume: f64,
    /// lambda times volume; increases toward the flat limit volume.
    pub normalized_volume: f64,
    /// sup of (tau - Phi) over owned nodes at round distance > 1/2 from the
    /// divisor.
    pub vacuum_gap_away: f64,
}

/// Report along a path of growing volume: normalized volumes, their gaps to
/// the flat limit volume for stable divisors, and vacuum approach away from
/// the divisor.
#[derive(Clone, Debug)]
pub struct LargeVolumeReport {
    pub entries: Vec<LargeVolumeEntry>,
    /// Flat limit volume, when the divisor is stable.
    pub cone_volume: Option<f64>,
    /// (cone_volume - normalized_volume) / cone_volume per entry.
    pub normalized_gaps: Vec<f64>,
}

/// Round radius of the compact set used for away-from-divisor sup bounds.
pub const AWAY_RADIUS: f64 = 0.5;

/// Builds the large-volume report from a continuation path.
///
/// Entries are read in order of decreasing coupling; the normalized volume
/// must increase strictly along them.
pub fn large_volume_report(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    path: &ContinuationPath,
) -> Result<LargeVolumeReport> {
    if path.entries.is_empty() {
        return Err(Error::Validation("continuation path has no entries".into()));
    }
    let mut ordered: Vec<&EbSolutionCompact> = path.entries.iter().collect();
    ordered.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
    let mask = mask_away_from_divisor(grid, higgs, AWAY_RADIUS);
    let nn = grid.res() * grid.res();
    let mut entries = Vec::with_capacity(ordered.len());
    for sol in &ordered {
        let phi = state_function(higgs, sol);
        let mut gap: f64 = 0.0;
        for chart in 0..2 {
            for k in 0..nn {
                if mask[chart * nn + k] {
                    gap = gap.max(params.tau - phi.chart(chart)[k]);
                }
            }
        }
        entries.push(LargeVolumeEntry {
            lambda: sol.lambda,
            volume: sol.volume,
            normalized_volume: sol.lambda * sol.volume,
            vacuum_gap_away: gap,
        });
    }
    for pair in entries.windows(2) {
        if !(pair[1].normalized_volume > pair[0].normalized_volume) {
            return Err(Error::LimitCheck(format!(
                "normalized volume fails to increase: {} then {}",
                pair[0].normalized_volume, pair[1].normalized_volume
            )));
        }
    }
    let cone_volume = match cone_metric(grid, higgs, params, 10.0) {
        Ok(data) => Some(data.volume),
        Err(Error::Stability(_)) => None,
        Err(e) => return Err(e),
    };
    let normalized_gaps = match cone_volume {
        Some(vc) => entries.iter().map(|e| (vc - e.normalized_volume) / vc).collect(),
        None => Vec::new(),
    };
    Ok(LargeVolumeReport { entries, cone_volume, normalized_gaps })
}

/// A measured defect together with the tolerance it was certified against.
#[derive(Clone, Copy, Debug)]
pub struct DefectEntry {
    pub value: f64,
    pub tolerance: f64,
}

impl DefectEntry {
    pub fn ok(&self) -> bool {
        self.value.abs() <= self.tolerance
    }
}

/// Bundled certificates of one solution.
#[derive(Clone, Debug)]
pub struct SolutionDiagnostics {
    pub lambda: f64,
    pub volume: f64,
    pub residual: DefectEntry,
    /// Relative disagreement of the volume-normalized coupling.
    pub temper: DefectEntry,
    /// Relative flux defect against 4 pi N.
    pub flux_solvability: DefectEntry,
    /// Float identity between the two flux forms; exactly zero.
    pub flux_identity: DefectEntry,
    /// Cross-chart mismatch of the state log-ratio.
    pub overlap: DefectEntry,
    /// Total curvature against 4 pi.
    pub gauss_bonnet: DefectEntry,
    /// min over owned nodes of (tau - Phi); must be positive.
    pub state_bound_margin: DefectEntry,
    /// pi over the root of the state-curvature ceiling alpha tau^2.
    pub injectivity_reference_state: f64,
    /// pi over the root of the metric-curvature ceiling (3 + 2 alpha tau) tau / 2.
    pub injectivity_reference_metric: f64,
}

/// Runs every per-solution certificate and collates the defects.
pub fn diagnose(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    sol: &EbSolutionCompact,
) -> Result<SolutionDiagnostics> {
    let (volume, temper) = volume_and_temper(grid, higgs, params, sol)?;
    let flux = flux_identities(grid, higgs, params, sol);
    let curv = curvature_fields(grid, higgs, params, sol)?;
    let overlap = grid.overlap_defect(&sol.v);
    let phi = state_function(higgs, sol);
    let nn = grid.res() * grid.res();
    let mut margin = f64::INFINITY;
    for chart in 0..2 {
        for k in 0..nn {
            if grid.own()[k] && !higgs.singular[chart * nn + k] {
                margin = margin.min(params.tau - phi.chart(chart)[k]);
            }
        }
    }
    let four_pi_n = 4.0 * std::f64::consts::PI * params.n as f64;
    let tau = params.tau;
    let alpha = params.alpha;
    Ok(SolutionDiagnostics {
        lambda: sol.lambda,
        volume,
        residual: DefectEntry { value: sol.residual_norm, tolerance: 1e-10 },
        temper: DefectEntry {
            value: (temper - sol.lambda) / sol.lambda,
            tolerance: 1e-12,
        },
        flux_solvability: DefectEntry {
            value: flux.solvability_defect / four_pi_n,
            tolerance: 1e-2,
        },
        flux_identity: DefectEntry { value: flux.identity_residual, tolerance: 0.0 },
        overlap: DefectEntry { value: overlap, tolerance: 1e-9 },
        gauss_bonnet: DefectEntry { value: curv.gauss_bonnet_defect, tolerance: 1e-2 },
        state_bound_margin: DefectEntry { value: margin, tolerance: f64::INFINITY },
        injectivity_reference_state: std::f64::consts::PI / (alpha * tau * tau).sqrt(),
        injectivity_reference_metric: std::f64::consts::PI
            / ((3.0 + 2.0 * alpha * tau) * tau / 2.0).sqrt(),
    })
}
