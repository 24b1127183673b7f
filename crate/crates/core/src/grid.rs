//! Two-chart cell-centered discretization of the sphere.
//!
//! Both charts carry the same square grid over [-R_c, R_c]^2; the second
//! chart coordinate is w = 1/z. A node is owned by its chart when its radius
//! is below the midpoint m = (1/R_c + R_c)/2, so every point of the sphere is
//! owned by exactly one chart. Non-owned nodes are constrained to the other
//! chart by bicubic interpolation at the image point 1/z, and quadrature uses
//! a smooth partition of unity so overlap regions are counted once.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Divisor, ModelParams, P1Point};

/// Quintic blend p^3 (10 - 15 p + 6 p^2), clamped to [0, 1].
fn smootherstep(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    p * p * p * (10.0 - 15.0 * p + 6.0 * p * p)
}

/// Cubic Lagrange weights at offsets (-1, 0, 1, 2) for parameter t in [0, 1].
fn lagrange_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Cross-chart constraint stencil for one non-owned node.
///
/// The node value must match the other chart interpolated at 1/z. The same
/// row list serves both charts because z -> 1/z has the same coordinate
/// expression in each direction.
#[derive(Clone, Copy, Debug)]
pub struct InterfaceRow {
    /// Flattened in-chart node index i * n + j.
    pub node: usize,
    /// Anchor of the 4x4 stencil in the other chart (first axis).
    pub i0: usize,
    /// Anchor of the 4x4 stencil in the other chart (second axis).
    pub j0: usize,
    /// Weights along the first axis at offsets -1..=2 from `i0`.
    pub wx: [f64; 4],
    /// Weights along the second axis at offsets -1..=2 from `j0`.
    pub wy: [f64; 4],
}

/// The discretized sphere.
#[derive(Clone, Debug)]
pub struct SphereGrid {
    n: usize,
    r_c: f64,
    h: f64,
    m: f64,
    xs: Vec<f64>,
    /// Node radius, n^2 entries shared by both charts.
    r: Vec<f64>,
    own: Vec<bool>,
    chi: Vec<f64>,
    /// Quadrature weight chi * 2 h^2 / (1 + r^2)^2 per node.
    quad_w: Vec<f64>,
    iface: Vec<InterfaceRow>,
}

impl SphereGrid {
    /// Builds an res x res grid per chart with chart cap radius `r_c`.
    ///
    /// Requires res >= 16 and 1.05 <= r_c <= 2, and the cell size must keep
    /// the outermost node ring outside the ownership radius.
    pub fn build(res: usize, r_c: f64) -> Result<Self> {
        if res < 16 {
            return Err(Error::Validation(format!(
                "grid resolution must be at least 16, got {res}"
            )));
        }
        if !(1.05..=2.0).contains(&r_c) {
            return Err(Error::Validation(format!(
                "chart cap radius must lie in [1.05, 2], got {r_c}"
            )));
        }
        let n = res;
        let h = 2.0 * r_c / n as f64;
        let m = (1.0 / r_c + r_c) / 2.0;
        if r_c - 0.5 * h < m {
            return Err(Error::Validation(format!(
                "resolution {res} is too coarse for cap radius {r_c}: the border ring \
                 must stay outside the ownership radius"
            )));
        }
        let xs: Vec<f64> = (0..n).map(|i| -r_c + (i as f64 + 0.5) * h).collect();

        let nn = n * n;
        let mut r = vec![0.0; nn];
        let mut own = vec![false; nn];
        let mut chi = vec![0.0; nn];
        let mut quad_w = vec![0.0; nn];
        let log_rc = r_c.ln();
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let rr = (xs[i] * xs[i] + xs[j] * xs[j]).sqrt();
                r[k] = rr;
                own[k] = rr < m;
                let sigma = if rr > 0.0 { rr.ln() / log_rc } else { -10.0 };
                chi[k] = 1.0 - smootherstep((sigma + 1.0) / 2.0);
                quad_w[k] = chi[k] * 2.0 / (1.0 + rr * rr).powi(2) * h * h;
            }
        }

        let mut grid = SphereGrid {
            n,
            r_c,
            h,
            m,
            xs,
            r,
            own,
            chi,
            quad_w,
            iface: Vec::new(),
        };
        grid.iface = grid.build_interface();
        Ok(grid)
    }

    fn build_interface(&self) -> Vec<InterfaceRow> {
        let n = self.n;
        let mut rows = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                if self.own[k] {
                    continue;
                }
                let (x, y) = (self.xs[i], self.xs[j]);
                let r2 = x * x + y * y;
                // Image of the node under chart transition, same expression
                // in both directions.
                let tx = x / r2;
                let ty = -y / r2;
                let (i0, wx) = self.interp_axis(tx);
                let (j0, wy) = self.interp_axis(ty);
                rows.push(InterfaceRow { node: k, i0, j0, wx, wy });
            }
        }
        rows
    }

    /// Stencil anchor and weights for one axis of bicubic interpolation.
    fn interp_axis(&self, target: f64) -> (usize, [f64; 4]) {
        let fx = (target - self.xs[0]) / self.h;
        let i0 = (fx.floor() as isize).clamp(1, self.n as isize - 3) as usize;
        (i0, lagrange_weights(fx - i0 as f64))
    }

    /// Interpolates a single chart slice at an arbitrary point of its square.
    pub fn interp_at(&self, chart_values: &[f64], x: f64, y: f64) -> f64 {
        let (i0, wx) = self.interp_axis(x);
        let (j0, wy) = self.interp_axis(y);
        let mut acc = 0.0;
        for (a, wa) in wx.iter().enumerate() {
            for (b, wb) in wy.iter().enumerate() {
                acc += wa * wb * chart_values[(i0 - 1 + a) * self.n + (j0 - 1 + b)];
            }
        }
        acc
    }

    pub fn res(&self) -> usize {
        self.n
    }

    pub fn r_c(&self) -> f64 {
        self.r_c
    }

    pub fn cell(&self) -> f64 {
        self.h
    }

    /// Ownership radius m = (1/R_c + R_c)/2.
    pub fn ownership_radius(&self) -> f64 {
        self.m
    }

    /// Node coordinate along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        self.xs[i]
    }

    /// Node radius by flattened in-chart index.
    pub fn radius(&self) -> &[f64] {
        &self.r
    }

    /// Ownership mask, identical for both charts.
    pub fn own(&self) -> &[bool] {
        &self.own
    }

    /// Number of owned nodes per chart.
    pub fn owned_count(&self) -> usize {
        self.own.iter().filter(|&&o| o).count()
    }

    /// Partition-of-unity weight at a node.
    pub fn chi(&self) -> &[f64] {
        &self.chi
    }

    /// Partition-of-unity weight as a function of radius.
    pub fn chi_at(&self, radius: f64) -> f64 {
        let sigma = if radius > 0.0 {
            radius.ln() / self.r_c.ln()
        } else {
            -10.0
        };
        1.0 - smootherstep((sigma + 1.0) / 2.0)
    }

    /// Quadrature weights (chi-blended round measure times cell area).
    pub fn quad_w(&self) -> &[f64] {
        &self.quad_w
    }

    /// Cross-chart constraint rows, one per non-owned node.
    pub fn interface(&self) -> &[InterfaceRow] {
        &self.iface
    }

    /// Coefficient (1 + r^2)^2 / (2 h^2) of the five-point round Laplacian.
    pub fn lap_scale(&self, node: usize) -> f64 {
        let r2 = self.r[node] * self.r[node];
        0.5 * (1.0 + r2) * (1.0 + r2) / (self.h * self.h)
    }

    /// Integral of a field over the sphere against the round measure.
    ///
    /// Summation order is fixed so results are reproducible bit for bit.
    pub fn integrate(&self, field: &ScalarField) -> f64 {
        self.check_field(field);
        let nn = self.n * self.n;
        let mut acc = 0.0;
        for chart in 0..2 {
            let vals = &field.values[chart * nn..(chart + 1) * nn];
            for k in 0..nn {
                acc += self.quad_w[k] * vals[k];
            }
        }
        acc
    }

    /// Positive-spectrum round Laplacian, (1+r^2)^2/2 times the negative of
    /// the flat five-point Laplacian.
    ///
    /// Values on the outermost node ring are left at zero; owned nodes are
    /// always interior so diagnostics over owned nodes see the full stencil.
    pub fn laplacian_fs(&self, field: &ScalarField) -> ScalarField {
        self.check_field(field);
        let n = self.n;
        let nn = n * n;
        let mut out = ScalarField::zeros(self);
        for chart in 0..2 {
            let vals = &field.values[chart * nn..(chart + 1) * nn];
            for i in 1..n - 1 {
                for j in 1..n - 1 {
                    let k = i * n + j;
                    let s = self.lap_scale(k);
                    out.values[chart * nn + k] = s
                        * (4.0 * vals[k]
                            - vals[k - n]
                            - vals[k + n]
                            - vals[k - 1]
                            - vals[k + 1]);
                }
            }
        }
        out
    }

    /// Largest mismatch between a chart value at a non-owned node and the
    /// other chart interpolated at the same sphere point.
    pub fn overlap_defect(&self, field: &ScalarField) -> f64 {
        self.check_field(field);
        let nn = self.n * self.n;
        let mut worst: f64 = 0.0;
        for chart in 0..2 {
            let this = &field.values[chart * nn..(chart + 1) * nn];
            let other = &field.values[(1 - chart) * nn..(2 - chart) * nn];
            for row in &self.iface {
                let mut acc = 0.0;
                for (a, wa) in row.wx.iter().enumerate() {
                    for (b, wb) in row.wy.iter().enumerate() {
                        acc += wa * wb * other[(row.i0 - 1 + a) * self.n + (row.j0 - 1 + b)];
                    }
                }
                worst = worst.max((this[row.node] - acc).abs());
            }
        }
        worst
    }

    fn check_field(&self, field: &ScalarField) {
        assert_eq!(
            (field.n, field.r_c),
            (self.n, self.r_c),
            "field was built on a different grid"
        );
    }
}

/// A scalar function sampled on both charts of a [`SphereGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    n: usize,
    r_c: f64,
    /// Length 2 n^2, chart-major then row-major.
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &SphereGrid) -> Self {
        ScalarField {
            n: grid.n,
            r_c: grid.r_c,
            values: vec![0.0; 2 * grid.n * grid.n],
        }
    }

    /// Samples `f(chart, x, y)` at every node of both charts.
    pub fn from_fn(grid: &SphereGrid, mut f: impl FnMut(usize, f64, f64) -> f64) -> Self {
        let n = grid.n;
        let mut values = Vec::with_capacity(2 * n * n);
        for chart in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    values.push(f(chart, grid.xs[i], grid.xs[j]));
                }
            }
        }
        ScalarField { n, r_c: grid.r_c, values }
    }

    pub fn from_values(grid: &SphereGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != 2 * grid.n * grid.n {
            return Err(Error::Validation(format!(
                "field length {} does not match grid with {} nodes per chart",
                values.len(),
                grid.n * grid.n
            )));
        }
        Ok(ScalarField { n: grid.n, r_c: grid.r_c, values })
    }

    pub fn res(&self) -> usize {
        self.n
    }

    pub fn r_c(&self) -> f64 {
        self.r_c
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// One chart's n^2 slice.
    pub fn chart(&self, chart: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.values[chart * nn..(chart + 1) * nn]
    }

    pub fn get(&self, chart: usize, i: usize, j: usize) -> f64 {
        self.values[chart * self.n * self.n + i * self.n + j]
    }

    pub fn set(&mut self, chart: usize, i: usize, j: usize, value: f64) {
        self.values[chart * self.n * self.n + i * self.n + j] = value;
    }

    /// Applies `f` to every value in place.
    pub fn map_in_place(&mut self, mut f: impl FnMut(f64) -> f64) {
        for v in &mut self.values {
            *v = f(*v);
        }
    }
}

/// Embeds a chart point into the unit sphere in R^3.
fn embed(chart: usize, x: f64, y: f64) -> [f64; 3] {
    let r2 = x * x + y * y;
    let d = 1.0 + r2;
    if chart == 0 {
        [2.0 * x / d, 2.0 * y / d, (r2 - 1.0) / d]
    } else {
        [2.0 * x / d, -2.0 * y / d, (1.0 - r2) / d]
    }
}

/// Geodesic distance in the round metric of curvature 2 between two points
/// given in either chart.
///
/// The antipodal distance is pi / sqrt(2); the distance is exactly invariant
/// under the chart transition up to rounding.
pub fn fs_distance(chart1: usize, x1: f64, y1: f64, chart2: usize, x2: f64, y2: f64) -> f64 {
    let a = embed(chart1, x1, y1);
    let b = embed(chart2, x2, y2);
    let chord = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    std::f64::consts::SQRT_2 * (0.5 * chord).clamp(-1.0, 1.0).asin()
}

/// Reference Higgs field data on a grid: density, its logarithm, and the
/// nodes where the density vanishes identically.
#[derive(Clone, Debug)]
pub struct HiggsData {
    /// Reference density Phi_0, normalized so its z-chart numerator is monic.
    pub phi0: ScalarField,
    /// log Phi_0; minus infinity exactly on divisor nodes.
    pub log_phi0: ScalarField,
    /// Nodes where `log_phi0` is not finite, per chart.
    pub singular: Vec<bool>,
    pub divisor: Divisor,
}

/// Multiplicity at infinity and the finite points with multiplicities.
fn split_divisor(divisor: &Divisor) -> (f64, Vec<(Complex64, f64)>) {
    let mut n_inf = 0.0;
    let mut finite = Vec::new();
    for e in divisor.entries() {
        match e.point {
            P1Point::Infinity => n_inf += e.multiplicity as f64,
            P1Point::Finite(p) => finite.push((p, e.multiplicity as f64)),
        }
    }
    (n_inf, finite)
}

/// log Phi_0 at one point of one chart.
fn log_phi0_at(chart: usize, x: f64, y: f64, n: f64, n_inf: f64, finite: &[(Complex64, f64)]) -> f64 {
    let z = Complex64::new(x, y);
    let r2 = z.norm_sqr();
    let mut acc = -n * r2.ln_1p();
    if chart == 0 {
        for &(p, mult) in finite {
            acc += mult * (z - p).norm_sqr().ln();
        }
    } else {
        if n_inf > 0.0 {
            acc += n_inf * r2.ln();
        }
        for &(p, mult) in finite {
            acc += mult * (1.0 - p * z).norm_sqr().ln();
        }
    }
    acc
}

/// Builds the reference Higgs data for a divisor.
pub fn higgs_data(grid: &SphereGrid, divisor: &Divisor, params: &ModelParams) -> Result<HiggsData> {
    if divisor.total() != params.n {
        return Err(Error::Validation(format!(
            "divisor degree {} does not match N = {}",
            divisor.total(),
            params.n
        )));
    }
    let (n_inf, finite) = split_divisor(divisor);
    let n = params.n as f64;
    let log_phi0 = ScalarField::from_fn(grid, |chart, x, y| {
        log_phi0_at(chart, x, y, n, n_inf, &finite)
    });
    let mut phi0 = log_phi0.clone();
    phi0.map_in_place(f64::exp);
    let singular = log_phi0.values().iter().map(|v| !v.is_finite()).collect();
    Ok(HiggsData {
        phi0,
        log_phi0,
        singular,
        divisor: divisor.clone(),
    })
}

impl HiggsData {
    /// Flat-coordinate gradient of log Phi_0 at a chart point, in closed form.
    ///
    /// Unbounded near divisor points; callers weight it by a factor vanishing
    /// there.
    pub fn grad_log_phi0(&self, chart: usize, x: f64, y: f64, params: &ModelParams) -> (f64, f64) {
        let (n_inf, finite) = split_divisor(&self.divisor);
        let z = Complex64::new(x, y);
        let r2 = z.norm_sqr();
        let n = params.n as f64;
        let mut gx = -n * 2.0 * x / (1.0 + r2);
        let mut gy = -n * 2.0 * y / (1.0 + r2);
        if chart == 0 {
            for &(p, mult) in &finite {
                let q = mult / (z - p);
                gx += 2.0 * q.re;
                gy += -2.0 * q.im;
            }
        } else {
            if n_inf > 0.0 {
                gx += 2.0 * n_inf * x / r2;
                gy += 2.0 * n_inf * y / r2;
            }
            for &(p, mult) in &finite {
                let q = mult * (-p) / (1.0 - p * z);
                gx += 2.0 * q.re;
                gy += -2.0 * q.im;
            }
        }
        (gx, gy)
    }

    /// Rescales the reference density by `c`, the gauge freedom of the data.
    pub fn scale(&mut self, c: f64) {
        assert!(c > 0.0 && c.is_finite(), "gauge factor must be positive");
        let lc = c.ln();
        self.phi0.map_in_place(|v| v * c);
        self.log_phi0.map_in_place(|v| v + lc);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Divisor, DivisorEntry, ModelParams, P1Point};

    #[test]
    fn build_rejects_bad_shapes() {
        assert!(SphereGrid::build(8, 1.2).is_err());
        assert!(SphereGrid::build(64, 1.0).is_err());
        assert!(SphereGrid::build(64, 2.5).is_err());
        // Border ring dips inside the ownership radius at this cap.
        assert!(SphereGrid::build(16, 1.05).is_err());
        assert!(SphereGrid::build(64, 1.05).is_ok());
    }

    #[test]
    fn ownership_splits_every_node_ring() {
        let g = SphereGrid::build(32, 1.2).unwrap();
        let n = g.res();
        // Corners are never owned, the center always is.
        assert!(!g.own()[0]);
        assert!(g.own()[(n / 2) * n + n / 2]);
        assert_eq!(g.interface().len(), n * n - g.owned_count());
        // Owned nodes stay clear of the array border so stencils fit.
        for i in 0..n {
            for j in 0..n {
                if g.own()[i * n + j] {
                    assert!(i >= 1 && i < n - 1 && j >= 1 && j < n - 1);
                }
            }
        }
    }

    #[test]
    fn chi_is_a_partition_of_unity_across_charts() {
        let g = SphereGrid::build(32, 1.2).unwrap();
        for &r in &[0.9, 1.0, 1.05, 1.19, 0.85] {
            let sum = g.chi_at(r) + g.chi_at(1.0 / r);
            assert!((sum - 1.0).abs() < 1e-14, "chi sum at r={r}: {sum}");
        }
        assert_eq!(g.chi_at(0.5), 1.0);
        assert_eq!(g.chi_at(1.0 / 0.5), 0.0);
    }

    #[test]
    fn integrate_constant_gives_sphere_area() {
        // Round measure of curvature 2 has total area 2 pi.
        let area = 2.0 * std::f64::consts::PI;
        for res in [32usize, 64] {
            let g = SphereGrid::build(res, 1.2).unwrap();
            let one = ScalarField::from_fn(&g, |_, _, _| 1.0);
            let got = g.integrate(&one);
            assert!(
                (got - area).abs() / area < 2e-4,
                "area at {res}: {got} vs {area}"
            );
        }
    }

    #[test]
    fn laplacian_of_round_potential_is_constant() {
        // log(1 + |z|^2) has round Laplacian exactly -2 in both charts.
        let mut sups = Vec::new();
        for res in [64usize, 128] {
            let g = SphereGrid::build(res, 1.2).unwrap();
            let f = ScalarField::from_fn(&g, |_, x, y| (x * x + y * y).ln_1p());
            let lap = g.laplacian_fs(&f);
            let n = g.res();
            let mut sup: f64 = 0.0;
            for chart in 0..2 {
                for k in 0..n * n {
                    if g.own()[k] {
                        sup = sup.max((lap.chart(chart)[k] + 2.0).abs());
                    }
                }
            }
            sups.push(sup);
        }
        assert!(sups[0] < 2e-3, "sup error at 64: {}", sups[0]);
        assert!(
            sups[1] < sups[0] / 3.0,
            "no second-order decay: {} then {}",
            sups[0],
            sups[1]
        );
    }

    #[test]
    fn interpolation_reproduces_cubics() {
        let g = SphereGrid::build(32, 1.2).unwrap();
        let f = |x: f64, y: f64| x * x * x - 2.0 * x * x * y + y * y * y + 0.5 * x - 1.0;
        let field = ScalarField::from_fn(&g, |_, x, y| f(x, y));
        for &(x, y) in &[(0.123, -0.456), (0.9, 0.33), (-1.0, 0.77)] {
            let got = g.interp_at(field.chart(0), x, y);
            assert!((got - f(x, y)).abs() < 1e-12, "at ({x},{y}): {got}");
        }
    }

    #[test]
    fn overlap_defect_vanishes_for_transition_consistent_fields() {
        let g = SphereGrid::build(48, 1.2).unwrap();
        // Chart-consistent smooth function: 1/(1+|z|^2) = |w|^2/(1+|w|^2).
        let f = ScalarField::from_fn(&g, |chart, x, y| {
            let r2 = x * x + y * y;
            if chart == 0 {
                1.0 / (1.0 + r2)
            } else {
                r2 / (1.0 + r2)
            }
        });
        let defect = g.overlap_defect(&f);
        assert!(defect < 1e-5, "overlap defect {defect}");
    }

    #[test]
    fn fs_distance_round_trip_and_antipodes() {
        let half_circumference = std::f64::consts::PI / std::f64::consts::SQRT_2;
        // 0 and infinity are antipodal.
        let d = fs_distance(0, 0.0, 0.0, 1, 0.0, 0.0);
        assert!((d - half_circumference).abs() < 1e-14);
        // Symmetry and transition invariance.
        let (x1, y1, x2, y2) = (0.3, -0.2, -0.7, 0.4);
        let d12 = fs_distance(0, x1, y1, 0, x2, y2);
        assert_eq!(d12, fs_distance(0, x2, y2, 0, x1, y1));
        let inv = |x: f64, y: f64| {
            let r2 = x * x + y * y;
            (x / r2, -y / r2)
        };
        let (u1, v1) = inv(x1, y1);
        let (u2, v2) = inv(x2, y2);
        let d12_other = fs_distance(1, u1, v1, 1, u2, v2);
        assert!((d12 - d12_other).abs() < 1e-9);
        // Short distances follow the conformal factor sqrt(2)/(1+r^2).
        let eps = 1e-6;
        let d_short = fs_distance(0, 0.3, 0.0, 0, 0.3 + eps, 0.0);
        let expect = std::f64::consts::SQRT_2 * eps / (1.0 + 0.09);
        assert!((d_short - expect).abs() < 1e-12 * (1.0 + expect.abs()));
    }

    #[test]
    fn higgs_density_is_transition_consistent() {
        let params = ModelParams::compact(1.0, 4).unwrap();
        let g = SphereGrid::build(32, 1.2).unwrap();
        let data = higgs_data(&g, &Divisor::roots_of_unity(4), &params).unwrap();
        // Compare the closed forms directly at a point of the overlap.
        let (n_inf, finite) = split_divisor(&data.divisor);
        let (x, y) = (1.1, 0.3);
        let r2 = x * x + y * y;
        let a = log_phi0_at(0, x, y, 4.0, n_inf, &finite);
        let b = log_phi0_at(1, x / r2, -y / r2, 4.0, n_inf, &finite);
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        // No node of the cell-centered grid sits on a divisor point.
        assert!(data.singular.iter().all(|&s| !s));
    }

    #[test]
    fn higgs_density_with_infinity_matches_multiplicity() {
        let params = ModelParams::compact(1.0, 2).unwrap();
        let g = SphereGrid::build(32, 1.2).unwrap();
        let divisor = Divisor::new(vec![
            DivisorEntry { point: P1Point::finite(0.0, 0.0), multiplicity: 1 },
            DivisorEntry { point: P1Point::Infinity, multiplicity: 1 },
        ])
        .unwrap();
        let data = higgs_data(&g, &divisor, &params).unwrap();
        // Phi_0 = |z|^2/(1+|z|^2)^2 for this divisor; check both charts.
        for &(chart, x, y) in &[(0usize, 0.4, -0.1), (1usize, 0.25, 0.6)] {
            let r2: f64 = x * x + y * y;
            let expect = r2 / (1.0 + r2).powi(2);
            let got = (log_phi0_at(chart, x, y, 2.0, 1.0, &split_divisor(&divisor).1)).exp();
            assert!((got - expect).abs() < 1e-14 * expect, "chart {chart}: {got} vs {expect}");
        }
        let _ = data;
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let params = ModelParams::compact(1.0, 4).unwrap();
        let g = SphereGrid::build(32, 1.2).unwrap();
        let data = higgs_data(&g, &Divisor::roots_of_unity(4), &params).unwrap();
        let (n_inf, finite) = split_divisor(&data.divisor);
        let eps = 1e-6;
        for &(chart, x, y) in &[(0usize, 0.37, -0.21), (1usize, 0.52, 0.44)] {
            let (gx, gy) = data.grad_log_phi0(chart, x, y, &params);
            let fd_x = (log_phi0_at(chart, x + eps, y, 4.0, n_inf, &finite)
                - log_phi0_at(chart, x - eps, y, 4.0, n_inf, &finite))
                / (2.0 * eps);
            let fd_y = (log_phi0_at(chart, x, y + eps, 4.0, n_inf, &finite)
                - log_phi0_at(chart, x, y - eps, 4.0, n_inf, &finite))
                / (2.0 * eps);
            assert!((gx - fd_x).abs() < 1e-5, "chart {chart} gx {gx} vs {fd_x}");
            assert!((gy - fd_y).abs() < 1e-5, "chart {chart} gy {gy} vs {fd_y}");
        }
    }

    #[test]
    fn gauge_rescale_shifts_log_density() {
        let params = ModelParams::compact(1.0, 4).unwrap();
        let g = SphereGrid::build(32, 1.2).unwrap();
        let mut data = higgs_data(&g, &Divisor::roots_of_unity(4), &params).unwrap();
        let before = data.log_phi0.get(0, 5, 7);
        data.scale(10.0);
        let after = data.log_phi0.get(0, 5, 7);
        assert!((after - before - 10f64.ln()).abs() < 1e-14);
    }
}
