//! Newton and continuation solvers for the coupled metric-Higgs equation in
//! its scalar form.
//!
//! The unknown is the log-ratio v between the solution Higgs density and the
//! reference density. Owned nodes carry the nonlinear equation
//! `Lap v = (tau - A) E / lambda - 2 N` with `A = Phi_0 e^v` and
//! `E = e^{2 alpha tau v - 2 alpha A}`; non-owned nodes carry the cross-chart
//! interpolation constraint. The two charts form one monolithic sparse
//! system with a constant pattern, so the LU symbolic analysis is reused
//! across Newton iterations.

use crate::error::{Error, Result};
use crate::grid::{HiggsData, ScalarField, SphereGrid};
use crate::model::{admissible_lower_bound, ModelParams, P1Point};
use crate::ode::{ProfileKind, RadialProfile};
use crate::sparse::SparseLu;

/// Damped-Newton controls.
#[derive(Clone, Copy, Debug)]
pub struct NewtonOptions {
    /// Sup-norm residual target.
    pub tol: f64,
    pub max_iter: usize,
    /// Step halvings before the last candidate is accepted regardless.
    pub max_backtrack: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 30, max_backtrack: 20 }
    }
}

/// Sup norm that treats any non-finite entry as divergence.
fn sup_norm(values: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for &v in values {
        if !v.is_finite() {
            return f64::INFINITY;
        }
        m = m.max(v.abs());
    }
    m
}

/// Assembly context for one grid, divisor, and parameter set.
struct System<'a> {
    grid: &'a SphereGrid,
    higgs: &'a HiggsData,
    params: &'a ModelParams,
}

impl<'a> System<'a> {
    fn dim(&self) -> usize {
        2 * self.grid.res() * self.grid.res()
    }

    /// Reaction term and its v-derivative at one node.
    fn g_and_dg(&self, phi0: f64, v: f64, lambda: f64) -> (f64, f64) {
        let tau = self.params.tau;
        let alpha = self.params.alpha;
        let a = phi0 * v.exp();
        let e = (2.0 * alpha * tau * v - 2.0 * alpha * a).exp();
        let g = (tau - a) * e / lambda - 2.0 * self.params.n as f64;
        let dg = e / lambda * (2.0 * alpha * (tau - a) * (tau - a) - a);
        (g, dg)
    }

    fn residual_into(&self, lambda: f64, v: &ScalarField, out: &mut ScalarField) {
        let n = self.grid.res();
        let nn = n * n;
        let own = self.grid.own();
        for chart in 0..2 {
            let vc = v.chart(chart);
            let vo = v.chart(1 - chart);
            let phi0 = self.higgs.phi0.chart(chart);
            for i in 1..n - 1 {
                for j in 1..n - 1 {
                    let k = i * n + j;
                    if !own[k] {
                        continue;
                    }
                    let s = self.grid.lap_scale(k);
                    let lap = s * (4.0 * vc[k] - vc[k - n] - vc[k + n] - vc[k - 1] - vc[k + 1]);
                    let (g, _) = self.g_and_dg(phi0[k], vc[k], lambda);
                    out.values_mut()[chart * nn + k] = lap - g;
                }
            }
            for row in self.grid.interface() {
                let mut acc = 0.0;
                for (a, wa) in row.wx.iter().enumerate() {
                    for (b, wb) in row.wy.iter().enumerate() {
                        acc += wa * wb * vo[(row.i0 - 1 + a) * n + (row.j0 - 1 + b)];
                    }
                }
                out.values_mut()[chart * nn + row.node] = vc[row.node] - acc;
            }
        }
    }

    /// Jacobian triplets in a fixed order; the pattern never changes for a
    /// given grid, so LU symbolic analysis is shared.
    fn jacobian_triplets(&self, lambda: f64, v: &ScalarField, out: &mut Vec<(usize, usize, f64)>) {
        out.clear();
        let n = self.grid.res();
        let nn = n * n;
        let own = self.grid.own();
        for chart in 0..2 {
            let base = chart * nn;
            let other = (1 - chart) * nn;
            let vc = v.chart(chart);
            let phi0 = self.higgs.phi0.chart(chart);
            for i in 1..n - 1 {
                for j in 1..n - 1 {
                    let k = i * n + j;
                    if !own[k] {
                        continue;
                    }
                    let s = self.grid.lap_scale(k);
                    let (_, dg) = self.g_and_dg(phi0[k], vc[k], lambda);
                    out.push((base + k, base + k, 4.0 * s - dg));
                    out.push((base + k, base + k - n, -s));
                    out.push((base + k, base + k + n, -s));
                    out.push((base + k, base + k - 1, -s));
                    out.push((base + k, base + k + 1, -s));
                }
            }
            for row in self.grid.interface() {
                out.push((base + row.node, base + row.node, 1.0));
                for (a, wa) in row.wx.iter().enumerate() {
                    for (b, wb) in row.wy.iter().enumerate() {
                        out.push((
                            base + row.node,
                            other + (row.i0 - 1 + a) * n + (row.j0 - 1 + b),
                            -wa * wb,
                        ));
                    }
                }
            }
        }
    }

    /// Conformal-weight field E = e^{2 alpha tau v - 2 alpha Phi}; the metric
    /// density against the round form is E / lambda.
    fn weight_field(&self, v: &ScalarField) -> ScalarField {
        let tau = self.params.tau;
        let alpha = self.params.alpha;
        let mut e = ScalarField::zeros(self.grid);
        let nn = self.grid.res() * self.grid.res();
        for chart in 0..2 {
            let vc = v.chart(chart);
            let phi0 = self.higgs.phi0.chart(chart);
            for k in 0..nn {
                let a = phi0[k] * vc[k].exp();
                e.values_mut()[chart * nn + k] = (2.0 * alpha * tau * vc[k] - 2.0 * alpha * a).exp();
            }
        }
        e
    }
}

/// Residual of the scalar equation at a given coupling and iterate.
pub fn residual(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    lambda: f64,
    v: &ScalarField,
) -> ScalarField {
    let sys = System { grid, higgs, params };
    let mut out = ScalarField::zeros(grid);
    sys.residual_into(lambda, v, &mut out);
    out
}

/// Initial iterate with the reference density regularized by lambda tau, so
/// the seeded state stays strictly below the vacuum everywhere.
pub fn epsilon_regularized_init(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    lambda: f64,
) -> ScalarField {
    let tau = params.tau;
    let mut v = higgs.phi0.clone();
    v.map_in_place(|phi0| tau.ln() - (phi0 + lambda * tau).ln());
    let _ = grid;
    v
}

/// A converged solution of the scalar equation on a grid.
///
/// Construction recomputes the residual and certifies the defining state
/// bounds, so a value of this type is always a checked solution.
#[derive(Clone, Debug)]
pub struct EbSolutionCompact {
    pub v: ScalarField,
    pub lambda: f64,
    pub params: ModelParams,
    pub residual_norm: f64,
    pub volume: f64,
    pub iterations: usize,
}

impl EbSolutionCompact {
    /// Certifies and wraps a converged iterate.
    ///
    /// Checks, in order: residual below tolerance, state strictly below the
    /// vacuum off divisor nodes, integral flux matching the degree, volume
    /// above the admissible bound.
    pub fn from_converged(
        grid: &SphereGrid,
        higgs: &HiggsData,
        params: &ModelParams,
        lambda: f64,
        v: ScalarField,
        iterations: usize,
        tol: f64,
    ) -> Result<Self> {
        let sys = System { grid, higgs, params };
        let mut f = ScalarField::zeros(grid);
        sys.residual_into(lambda, &v, &mut f);
        let residual_norm = sup_norm(f.values());
        if !(residual_norm <= tol * (1.0 + 1e-9)) {
            return Err(Error::Consistency(format!(
                "claimed solution has residual {residual_norm:.3e} above tolerance {tol:.3e}"
            )));
        }
        let tau = params.tau;
        let nn = grid.res() * grid.res();
        for chart in 0..2 {
            let vc = v.chart(chart);
            let phi0 = higgs.phi0.chart(chart);
            for k in 0..nn {
                if !grid.own()[k] || higgs.singular[chart * nn + k] {
                    continue;
                }
                let a = phi0[k] * vc[k].exp();
                if !(a < tau) {
                    return Err(Error::Consistency(format!(
                        "state reaches the vacuum: Phi = {a} at an owned node (tau = {tau})"
                    )));
                }
            }
        }
        let e = sys.weight_field(&v);
        let volume = grid.integrate(&e) / lambda;
        let mut flux_density = e.clone();
        let mut idx = 0;
        flux_density.map_in_place(|ev| {
            let chart = idx / nn;
            let k = idx % nn;
            idx += 1;
            (tau - higgs.phi0.chart(chart)[k] * v.chart(chart)[k].exp()) * ev
        });
        let flux = grid.integrate(&flux_density) / lambda;
        let target = 4.0 * std::f64::consts::PI * params.n as f64;
        if (flux - target).abs() > 1e-2 * target {
            return Err(Error::Consistency(format!(
                "integrated flux {flux:.6} is far from 4 pi N = {target:.6}"
            )));
        }
        let floor = admissible_lower_bound(params)?;
        if !(volume > floor) {
            return Err(Error::Consistency(format!(
                "volume {volume:.6} does not exceed the admissible bound {floor:.6}"
            )));
        }
        Ok(EbSolutionCompact {
            v,
            lambda,
            params: *params,
            residual_norm,
            volume,
            iterations,
        })
    }
}

/// Damped Newton iteration from an explicit initial iterate.
pub fn newton_solve(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    lambda: f64,
    v0: &ScalarField,
    opts: &NewtonOptions,
) -> Result<EbSolutionCompact> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Validation(format!("lambda must be positive, got {lambda}")));
    }
    let sys = System { grid, higgs, params };
    let mut lu = SparseLu::new(sys.dim());
    let mut v = v0.clone();
    let mut f = ScalarField::zeros(grid);
    let mut trips = Vec::new();
    sys.residual_into(lambda, &v, &mut f);
    let mut res = sup_norm(f.values());
    if !res.is_finite() {
        return Err(Error::Solver("initial iterate has a non-finite residual".into()));
    }
    for iter in 0..=opts.max_iter {
        if res <= opts.tol {
            return EbSolutionCompact::from_converged(grid, higgs, params, lambda, v, iter, opts.tol);
        }
        if iter == opts.max_iter {
            break;
        }
        sys.jacobian_triplets(lambda, &v, &mut trips);
        lu.factor(&trips)?;
        let d = lu.solve(f.values())?;
        let mut t = 1.0;
        let mut candidate = v.clone();
        for bt in 0..=opts.max_backtrack {
            for (c, (base, step)) in candidate
                .values_mut()
                .iter_mut()
                .zip(v.values().iter().zip(d.iter()))
            {
                *c = base - t * step;
            }
            sys.residual_into(lambda, &candidate, &mut f);
            let cres = sup_norm(f.values());
            if cres < res || bt == opts.max_backtrack {
                if !cres.is_finite() {
                    return Err(Error::NonConvergence {
                        lambda,
                        iterations: iter + 1,
                        residual: res,
                    });
                }
                std::mem::swap(&mut v, &mut candidate);
                res = cres;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NonConvergence { lambda, iterations: opts.max_iter, residual: res })
}

/// Ratio of Newton-step size to residual size at a trial coupling, a cheap
/// conditioning proxy that grows toward a fold.
fn amplification_probe(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    lambda: f64,
    v: &ScalarField,
) -> f64 {
    let sys = System { grid, higgs, params };
    let mut f = ScalarField::zeros(grid);
    sys.residual_into(lambda, v, &mut f);
    let res = sup_norm(f.values());
    let mut trips = Vec::new();
    sys.jacobian_triplets(lambda, v, &mut trips);
    let mut lu = SparseLu::new(sys.dim());
    if lu.factor(&trips).is_err() {
        return f64::INFINITY;
    }
    match lu.solve(f.values()) {
        Ok(d) => sup_norm(&d) / res.max(f64::MIN_POSITIVE),
        Err(_) => f64::INFINITY,
    }
}

/// Which quantity a continuation path walks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContinuationParameter {
    Lambda,
    Volume,
}

/// An ordered run of certified solutions along a continuation parameter.
#[derive(Clone, Debug)]
pub struct ContinuationPath {
    pub entries: Vec<EbSolutionCompact>,
    pub parameter: ContinuationParameter,
    /// Whether every requested target was reached.
    pub complete: bool,
    pub note: Option<String>,
}

/// Controls for coupling continuation.
#[derive(Clone, Copy, Debug)]
pub struct BranchOptions {
    pub newton: NewtonOptions,
    /// Recursive geometric substep depth between adjacent couplings.
    pub substep_depth: usize,
    /// Largest admissible first coupling, as a fraction of the critical one.
    pub lambda_c_fraction: f64,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions {
            newton: NewtonOptions::default(),
            substep_depth: 4,
            lambda_c_fraction: 0.75,
        }
    }
}

/// Continuation step with recursive geometric substepping. The error carries
/// the best solution reached and the coupling that failed.
fn walk_lambda(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    current: EbSolutionCompact,
    target: f64,
    depth: usize,
    opts: &BranchOptions,
) -> std::result::Result<EbSolutionCompact, Box<(EbSolutionCompact, f64)>> {
    match newton_solve(grid, higgs, params, target, &current.v, &opts.newton) {
        Ok(sol) => Ok(sol),
        Err(_) if depth > 0 => {
            let mid = (current.lambda * target).sqrt();
            let sol_mid = walk_lambda(grid, higgs, params, current, mid, depth - 1, opts)?;
            walk_lambda(grid, higgs, params, sol_mid, target, depth - 1, opts)
        }
        Err(_) => Err(Box::new((current, target))),
    }
}

/// Solves along a descending list of couplings on the maximal branch.
///
/// Seeds at the smallest coupling from the regularized initial iterate (with
/// a single walk-down fallback from 1.5x that coupling), then continues
/// upward. Either every requested coupling is solved or the continuation
/// stops at a fold and the bracketing information is returned as an error.
/// Monotonicity of the branch in both the state and the volume is certified
/// before returning.
pub fn maximal_branch(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    lambdas: &[f64],
    opts: &BranchOptions,
) -> Result<ContinuationPath> {
    if lambdas.is_empty() {
        return Err(Error::Validation("coupling list must not be empty".into()));
    }
    if lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Validation("couplings must be positive".into()));
    }
    if lambdas.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Validation("coupling list must be strictly descending".into()));
    }
    let lambda_c = params.lambda_critical()?;
    if lambdas[0] > opts.lambda_c_fraction * lambda_c {
        return Err(Error::Admissibility(format!(
            "first coupling {:.6e} exceeds {} of the critical coupling {lambda_c:.6e}",
            lambdas[0], opts.lambda_c_fraction
        )));
    }

    let smallest = *lambdas.last().unwrap();
    let seed = match newton_solve(
        grid,
        higgs,
        params,
        smallest,
        &epsilon_regularized_init(grid, higgs, params, smallest),
        &opts.newton,
    ) {
        Ok(sol) => sol,
        Err(first_err) => {
            // Cold starts can miss at the largest feasible couplings; seed
            // higher and walk down.
            let hi = 1.5 * smallest;
            let seed_hi = newton_solve(
                grid,
                higgs,
                params,
                hi,
                &epsilon_regularized_init(grid, higgs, params, hi),
                &opts.newton,
            )
            .map_err(|e| {
                Error::Solver(format!(
                    "seeding failed at {smallest:.6e} ({first_err}) and at {hi:.6e} ({e})"
                ))
            })?;
            walk_lambda(grid, higgs, params, seed_hi, smallest, opts.substep_depth, opts)
                .map_err(|b| {
                    Error::Solver(format!(
                        "walk-down seeding stalled at {:.6e} before {:.6e}",
                        b.0.lambda, b.1
                    ))
                })?
        }
    };

    let mut ascending = vec![seed];
    for &target in lambdas.iter().rev().skip(1) {
        let current = ascending.last().unwrap().clone();
        match walk_lambda(grid, higgs, params, current, target, opts.substep_depth, opts) {
            Ok(sol) => ascending.push(sol),
            Err(boxed) => {
                let (best, failed) = *boxed;
                let amplification =
                    amplification_probe(grid, higgs, params, failed, &best.v);
                return Err(Error::Fold {
                    last_good: best.lambda,
                    failed,
                    depth: opts.substep_depth,
                    amplification,
                });
            }
        }
    }

    // Branch-identity certificates: along the maximal branch the state and
    // the volume both decrease strictly as the coupling grows.
    for pair in ascending.windows(2) {
        certify_branch_descent(grid, &pair[0], &pair[1])?;
    }

    ascending.reverse();
    Ok(ContinuationPath {
        entries: ascending,
        parameter: ContinuationParameter::Lambda,
        complete: true,
        note: None,
    })
}

/// Certifies one ascending branch step: both the state (pointwise) and the
/// volume must decrease strictly with the coupling.
pub fn certify_branch_descent(
    grid: &SphereGrid,
    lo: &EbSolutionCompact,
    hi: &EbSolutionCompact,
) -> Result<()> {
    if !(hi.volume < lo.volume) {
        return Err(Error::BranchIdentity(format!(
            "volume fails to decrease: {} at {:.6e} vs {} at {:.6e}",
            lo.volume, lo.lambda, hi.volume, hi.lambda
        )));
    }
    let nn = grid.res() * grid.res();
    for chart in 0..2 {
        for k in 0..nn {
            if grid.own()[k] && !(hi.v.chart(chart)[k] < lo.v.chart(chart)[k]) {
                return Err(Error::BranchIdentity(format!(
                    "state fails to decrease pointwise between couplings {:.6e} and {:.6e}",
                    lo.lambda, hi.lambda
                )));
            }
        }
    }
    Ok(())
}

/// Continues a branch solution upward through strictly larger couplings,
/// with the same walk and certificates as `maximal_branch`.
///
/// The seed is typically a reloaded checkpoint. Extending from it performs
/// exactly the arithmetic an uninterrupted run would have, so a resumed path
/// matches the uninterrupted one bit for bit.
pub fn extend_branch(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    seed: &EbSolutionCompact,
    lambdas_ascending: &[f64],
    opts: &BranchOptions,
) -> Result<Vec<EbSolutionCompact>> {
    if lambdas_ascending.is_empty() {
        return Err(Error::Validation("coupling list must not be empty".into()));
    }
    if lambdas_ascending.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Validation("couplings must be positive".into()));
    }
    let mut prev = seed.lambda;
    for &l in lambdas_ascending {
        if l <= prev {
            return Err(Error::Validation(format!(
                "couplings must ascend strictly from the seed {prev:.6e}, got {l:.6e}"
            )));
        }
        prev = l;
    }
    let lambda_c = params.lambda_critical()?;
    if *lambdas_ascending.last().unwrap() > opts.lambda_c_fraction * lambda_c {
        return Err(Error::Admissibility(format!(
            "coupling {:.6e} exceeds {} of the critical coupling {lambda_c:.6e}",
            lambdas_ascending.last().unwrap(),
            opts.lambda_c_fraction
        )));
    }
    let mut out: Vec<EbSolutionCompact> = Vec::with_capacity(lambdas_ascending.len());
    for &target in lambdas_ascending {
        let current = out.last().unwrap_or(seed).clone();
        match walk_lambda(grid, higgs, params, current, target, opts.substep_depth, opts) {
            Ok(sol) => out.push(sol),
            Err(boxed) => {
                let (best, failed) = *boxed;
                let amplification = amplification_probe(grid, higgs, params, failed, &best.v);
                return Err(Error::Fold {
                    last_good: best.lambda,
                    failed,
                    depth: opts.substep_depth,
                    amplification,
                });
            }
        }
    }
    certify_branch_descent(grid, seed, &out[0])?;
    for pair in out.windows(2) {
        certify_branch_descent(grid, &pair[0], &pair[1])?;
    }
    Ok(out)
}

/// Controls for volume-constrained solves and volume continuation.
#[derive(Clone, Copy, Debug)]
pub struct VolumeOptions {
    pub newton: NewtonOptions,
    /// Relative volume mismatch accepted at convergence.
    pub volume_tol: f64,
    /// Recursive geometric substep depth between volume targets.
    pub substep_depth: usize,
    pub max_iter: usize,
}

impl Default for VolumeOptions {
    fn default() -> Self {
        VolumeOptions {
            newton: NewtonOptions::default(),
            volume_tol: 1e-8,
            substep_depth: 6,
            max_iter: 40,
        }
    }
}

/// Solves for the pair (state, coupling) with the volume pinned to a target.
///
/// One bordered Newton system per iteration: the state rows keep the sparse
/// Jacobian, the volume constraint is folded in by two solves against the
/// same factorization. Regular where the plain coupling continuation folds,
/// because the branch is a graph over volume.
pub fn volume_constrained_solve(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    target: f64,
    seed: &EbSolutionCompact,
    opts: &VolumeOptions,
) -> Result<EbSolutionCompact> {
    let floor = admissible_lower_bound(params)?;
    if !(target > floor) {
        return Err(Error::Admissibility(format!(
            "volume target {target:.6} is not above the admissible bound {floor:.6}"
        )));
    }
    let sys = System { grid, higgs, params };
    let tau = params.tau;
    let alpha = params.alpha;
    let nn = grid.res() * grid.res();
    let mut lu = SparseLu::new(sys.dim());
    let mut trips = Vec::new();
    let mut v = seed.v.clone();
    let mut lambda = seed.lambda;
    let mut f = ScalarField::zeros(grid);

    let merit_of = |sys: &System, v: &ScalarField, lambda: f64, f: &mut ScalarField| -> (f64, f64, f64) {
        sys.residual_into(lambda, v, f);
        let res = sup_norm(f.values());
        let e = sys.weight_field(v);
        let vol = grid.integrate(&e) / lambda;
        let rv = vol - target;
        (res, vol, rv)
    };

    let (mut res, mut vol, mut rv) = merit_of(&sys, &v, lambda, &mut f);
    for iter in 0..=opts.max_iter {
        if res <= opts.newton.tol && rv.abs() <= opts.volume_tol * target {
            return EbSolutionCompact::from_converged(
                grid, higgs, params, lambda, v, iter, opts.newton.tol,
            );
        }
        if iter == opts.max_iter {
            break;
        }
        sys.jacobian_triplets(lambda, &v, &mut trips);
        lu.factor(&trips)?;
        // x1 solves J x = -F, x2 solves J x = -dF/dlambda.
        let mut rhs1 = f.values().to_vec();
        for r in &mut rhs1 {
            *r = -*r;
        }
        let x1 = lu.solve(&rhs1)?;
        let mut rhs2 = vec![0.0; sys.dim()];
        for chart in 0..2 {
            let vc = v.chart(chart);
            let phi0 = higgs.phi0.chart(chart);
            for k in 0..nn {
                if grid.own()[k] {
                    let a = phi0[k] * vc[k].exp();
                    let e = (2.0 * alpha * tau * vc[k] - 2.0 * alpha * a).exp();
                    // dF/dlambda = (tau - A) E / lambda^2 on owned rows.
                    rhs2[chart * nn + k] = -((tau - a) * e / (lambda * lambda));
                }
            }
        }
        let x2 = lu.solve(&rhs2)?;
        // Volume gradient row: g_v per node, g_lambda = -Vol / lambda.
        let mut gv_x1 = 0.0;
        let mut gv_x2 = 0.0;
        for chart in 0..2 {
            let vc = v.chart(chart);
            let phi0 = higgs.phi0.chart(chart);
            for k in 0..nn {
                let w = grid.quad_w()[k];
                if w == 0.0 {
                    continue;
                }
                let a = phi0[k] * vc[k].exp();
                let e = (2.0 * alpha * tau * vc[k] - 2.0 * alpha * a).exp();
                let gv = w * 2.0 * alpha * (e / lambda) * (tau - a);
                gv_x1 += gv * x1[chart * nn + k];
                gv_x2 += gv * x2[chart * nn + k];
            }
        }
        let g_lambda = -vol / lambda;
        let dlambda = (-rv - gv_x1) / (gv_x2 + g_lambda);

        let merit = res.max(rv.abs() / target);
        let mut t = 1.0;
        let mut accepted = None;
        for bt in 0..=25 {
            let lambda_c = lambda + t * dlambda;
            if lambda_c > 0.0 && lambda_c.is_finite() {
                let mut v_c = v.clone();
                for (vc, (x1k, x2k)) in
                    v_c.values_mut().iter_mut().zip(x1.iter().zip(x2.iter()))
                {
                    *vc += t * (x1k + dlambda * x2k);
                }
                let (res_c, vol_c, rv_c) = merit_of(&sys, &v_c, lambda_c, &mut f);
                let merit_c = res_c.max(rv_c.abs() / target);
                if (merit_c < merit && merit_c.is_finite()) || bt == 25 {
                    if !merit_c.is_finite() {
                        break;
                    }
                    accepted = Some((v_c, lambda_c, res_c, vol_c, rv_c));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((v_c, lambda_c, res_c, vol_c, rv_c)) => {
                v = v_c;
                lambda = lambda_c;
                res = res_c;
                vol = vol_c;
                rv = rv_c;
            }
            None => break,
        }
    }
    Err(Error::NonConvergence { lambda, iterations: opts.max_iter, residual: res.max(rv.abs()) })
}

/// One volume target with recursive geometric substepping.
fn walk_volume(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    current: EbSolutionCompact,
    target: f64,
    depth: usize,
    opts: &VolumeOptions,
) -> Result<EbSolutionCompact> {
    match volume_constrained_solve(grid, higgs, params, target, &current, opts) {
        Ok(sol) => Ok(sol),
        Err(e) if depth > 0 => {
            let mid = (current.volume * target).sqrt();
            let sol_mid = walk_volume(grid, higgs, params, current, mid, depth - 1, opts)
                .map_err(|_| e)?;
            walk_volume(grid, higgs, params, sol_mid, target, depth - 1, opts)
        }
        Err(e) => Err(e),
    }
}

/// Walks a monotone schedule of volume targets from a seed solution.
///
/// Unreachable targets do not fail the whole walk: the path returned carries
/// what was reached, with `complete` cleared and a note naming the stop.
pub fn continuation_volume(
    grid: &SphereGrid,
    higgs: &HiggsData,
    params: &ModelParams,
    targets: &[f64],
    seed: &EbSolutionCompact,
    opts: &VolumeOptions,
) -> Result<ContinuationPath> {
    if targets.is_empty() {
        return Err(Error::Validation("volume schedule must not be empty".into()));
    }
    let floor = admissible_lower_bound(params)?;
    if let Some(bad) = targets.iter().find(|t| !(**t > floor)) {
        return Err(Error::Admissibility(format!(
            "volume target {bad:.6} is not above the admissible bound {floor:.6}"
        )));
    }
    let ascending = targets.windows(2).all(|w| w[0] < w[1]);
    let descending = targets.windows(2).all(|w| w[0] > w[1]);
    if !(ascending || descending) {
        return Err(Error::Validation("volume schedule must be strictly monotone".into()));
    }

    let mut entries = Vec::new();
    let mut complete = true;
    let mut note = None;
    let mut current = seed.clone();
    for &target in targets {
        match walk_volume(grid, higgs, params, current.clone(), target, opts.substep_depth, opts) {
            Ok(sol) => {
                current = sol.clone();
                entries.push(sol);
            }
            Err(e) => {
                complete = false;
                note = Some(format!("stopped before volume {target:.6}: {e}"));
                break;
            }
        }
    }
    Ok(ContinuationPath {
        entries,
        parameter: ContinuationParameter::Volume,
        complete,
        note,
    })
}

/// Lifts a compact two-pole profile onto the grid for the symmetric divisor.
///
/// Returns the state in the two-chart form together with the coupling in the
/// round normalization, which differs from the cylinder one by the factor
/// two applied in [`RadialProfile::plane_temper`].
pub fn transfer_profile(
    grid: &SphereGrid,
    higgs: &HiggsData,
    profile: &RadialProfile,
) -> Result<(ScalarField, f64)> {
    if profile.kind != ProfileKind::CompactTwoPole {
        return Err(Error::Mode("only compact two-pole profiles transfer to the sphere".into()));
    }
    let n_half = profile.params.n_half()?;
    let symmetric = higgs.divisor.entries().len() == 2
        && higgs.divisor.entries().iter().all(|e| {
            e.multiplicity == n_half
                && match e.point {
                    P1Point::Infinity => true,
                    P1Point::Finite(z) => z.norm_sqr() == 0.0,
                }
        });
    if !symmetric {
        return Err(Error::Validation(
            "profile transfer requires the symmetric divisor with half degree at 0 and infinity"
                .into(),
        ));
    }
    let n = grid.res();
    let log_tau = profile.params.tau.ln();
    let mut v = ScalarField::zeros(grid);
    for chart in 0..2 {
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (grid.coord(i), grid.coord(j));
                let t = x.hypot(y).ln();
                let (u, _) = profile.sample(t).ok_or_else(|| {
                    Error::Validation(format!(
                        "profile window does not cover log-radius {t:.3}; increase t_max"
                    ))
                })?;
                v.set(chart, i, j, u + log_tau - higgs.log_phi0.get(chart, i, j));
            }
        }
    }
    Ok((v, profile.plane_temper()))
}
