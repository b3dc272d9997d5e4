//! Poisson safety field: Dirichlet solve on the rasterized domain, bilinear
//! sampling, finite-difference derivatives and the `.psf` file format.
//!
//! The interior and the exterior of the safe domain are solved jointly. Cells
//! on the discrete boundary are pinned to zero; the outer edge of the grid
//! uses a mirrored (zero-flux) ghost value so the exterior solution is
//! defined up to the grid edge.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::world::{CellKind, DomainMask};

pub const PSF_MAGIC: [u8; 4] = *b"PSF1";
pub const PSF_VERSION: u32 = 1;
const PSF_HEADER_LEN: usize = 4 + 4 + 8 * 3 + 8 * 2;

/// Over-relaxation factor of the red-black sweeps.
pub const SOR_OMEGA: f64 = 1.9;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("poisson solve did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("mask has no interior cells")]
    NoInterior,
    #[error("invalid tolerance {0}")]
    InvalidTolerance(f64),
    #[error("point ({0}, {1}) is out of field")]
    OutOfField(f64, f64),
    #[error("point ({0}, {1}) is too close to the field edge for differencing")]
    TooCloseToEdge(f64, f64),
    #[error("bad field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Piecewise-constant forcing of the Poisson problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forcing {
    pub interior_value: f64,
    pub exterior_value: f64,
}

impl Default for Forcing {
    fn default() -> Self {
        Self {
            interior_value: -4.0,
            exterior_value: 4.0,
        }
    }
}

impl Forcing {
    pub fn new(interior_value: f64, exterior_value: f64) -> Self {
        assert!(interior_value < 0.0 && exterior_value > 0.0);
        Self {
            interior_value,
            exterior_value,
        }
    }

    fn at(&self, kind: CellKind) -> f64 {
        match kind {
            CellKind::Interior => self.interior_value,
            CellKind::Exterior => self.exterior_value,
            CellKind::Boundary => 0.0,
        }
    }
}

/// Uniform cell-centered scalar field, row-major (`j * nx + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub origin: [f64; 2],
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    /// Present for solved fields; absent for fields read from disk or
    /// seeded directly.
    pub mask: Option<Vec<CellKind>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves the discrete Poisson problem `lap(h) = F` with `h = 0` on boundary
/// cells by red-black successive over-relaxation.
///
/// Convergence is declared when the max-norm of the 5-point Laplacian
/// residual over all non-boundary cells drops below `tol`.
pub fn solve_poisson(
    mask: &DomainMask,
    forcing: Forcing,
    tol: f64,
    max_iters: usize,
) -> Result<(GridField, SolveReport), FieldError> {
    if !(tol > 0.0) {
        return Err(FieldError::InvalidTolerance(tol));
    }
    if mask.count(CellKind::Interior) == 0 {
        return Err(FieldError::NoInterior);
    }
    let (nx, ny) = (mask.nx, mask.ny);
    let h2 = mask.spacing * mask.spacing;
    let rhs: Vec<f64> = mask.cells.iter().map(|c| forcing.at(*c) * h2).collect();
    let mut u = vec![0.0; nx * ny];

    let check_every = 10;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        for color in 0..2 {
            sor_sweep(&mut u, &mask.cells, &rhs, nx, ny, color);
        }
        iterations += 1;
        if iterations % check_every == 0 || iterations == max_iters {
            residual = residual_max(&u, &mask.cells, forcing, mask.spacing, nx, ny);
            if residual < tol {
                break;
            }
        }
    }
    if !(residual < tol) {
        return Err(FieldError::NotConverged {
            iterations,
            residual,
        });
    }
    let field = GridField {
        origin: mask.origin,
        spacing: mask.spacing,
        nx,
        ny,
        values: u,
        mask: Some(mask.cells.clone()),
    };
    Ok((
        field,
        SolveReport {
            iterations,
            residual,
        },
    ))
}

/// One half sweep over the cells with `(i + j) % 2 == color`. Cells of one
/// color only read cells of the other color, so the order within a half
/// sweep does not matter.
fn sor_sweep(u: &mut [f64], cells: &[CellKind], rhs: &[f64], nx: usize, ny: usize, color: usize) {
    for j in 0..ny {
        let start = (j + color) % 2;
        for i in (start..nx).step_by(2) {
            let k = j * nx + i;
            if cells[k] == CellKind::Boundary {
                continue;
            }
            let mut sum = 0.0;
            let mut count = 0.0;
            if i > 0 {
                sum += u[k - 1];
                count += 1.0;
            }
            if i + 1 < nx {
                sum += u[k + 1];
                count += 1.0;
            }
            if j > 0 {
                sum += u[k - nx];
                count += 1.0;
            }
            if j + 1 < ny {
                sum += u[k + nx];
                count += 1.0;
            }
            // mirrored ghosts cancel against the centre coefficient
            let gs = (sum - rhs[k]) / count;
            u[k] += SOR_OMEGA * (gs - u[k]);
        }
    }
}

/// Discrete Laplacian at cell `k` with mirrored ghosts at the grid edge.
fn laplacian(u: &[f64], nx: usize, ny: usize, i: usize, j: usize, spacing: f64) -> f64 {
    let k = j * nx + i;
    let c = u[k];
    let left = if i > 0 { u[k - 1] } else { c };
    let right = if i + 1 < nx { u[k + 1] } else { c };
    let down = if j > 0 { u[k - nx] } else { c };
    let up = if j + 1 < ny { u[k + nx] } else { c };
    (left + right + down + up - 4.0 * c) / (spacing * spacing)
}

fn residual_max(
    u: &[f64],
    cells: &[CellKind],
    forcing: Forcing,
    spacing: f64,
    nx: usize,
    ny: usize,
) -> f64 {
    (0..ny)
        .into_par_iter()
        .map(|j| {
            let mut worst: f64 = 0.0;
            for i in 0..nx {
                let kind = cells[j * nx + i];
                if kind == CellKind::Boundary {
                    continue;
                }
                let r = laplacian(u, nx, ny, i, j, spacing) - forcing.at(kind);
                worst = worst.max(r.abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

impl GridField {
    /// Field sampled from a closure at the cell centers; no mask attached.
    pub fn from_fn(
        origin: [f64; 2],
        spacing: f64,
        nx: usize,
        ny: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(
                    origin[0] + i as f64 * spacing,
                    origin[1] + j as f64 * spacing,
                ));
            }
        }
        Self {
            origin,
            spacing,
            nx,
            ny,
            values,
            mask: None,
        }
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.spacing,
            self.origin[1] + j as f64 * self.spacing,
        ]
    }

    /// Extent covered by cell centers: `([x_lo, y_lo], [x_hi, y_hi])`.
    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        (self.origin, self.center(self.nx - 1, self.ny - 1))
    }

    /// True when `p` lies at least `margin` inside the extent.
    pub fn contains(&self, p: [f64; 2], margin: f64) -> bool {
        let (lo, hi) = self.extent();
        p[0] >= lo[0] + margin && p[0] <= hi[0] - margin && p[1] >= lo[1] + margin && p[1] <= hi[1] - margin
    }

    /// Bilinear interpolation of the four surrounding cell centers.
    pub fn sample(&self, p: [f64; 2]) -> Result<f64, FieldError> {
        let fx = (p[0] - self.origin[0]) / self.spacing;
        let fy = (p[1] - self.origin[1]) / self.spacing;
        let eps = 1e-9;
        let (mx, my) = ((self.nx - 1) as f64, (self.ny - 1) as f64);
        if !(fx >= -eps && fx <= mx + eps && fy >= -eps && fy <= my + eps) {
            return Err(FieldError::OutOfField(p[0], p[1]));
        }
        let snap = |f: f64| if (f - f.round()).abs() < 1e-10 { f.round() } else { f };
        let fx = snap(fx.clamp(0.0, mx));
        let fy = snap(fy.clamp(0.0, my));
        let i0 = (fx.floor() as usize).min(self.nx.saturating_sub(2));
        let j0 = (fy.floor() as usize).min(self.ny.saturating_sub(2));
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let k = j0 * self.nx + i0;
        let v00 = self.values[k];
        let v10 = self.values[k + 1];
        let v01 = self.values[k + self.nx];
        let v11 = self.values[k + self.nx + 1];
        let bottom = v00 + tx * (v10 - v00);
        let top = v01 + tx * (v11 - v01);
        Ok(bottom + ty * (top - bottom))
    }

    fn require_clearance(&self, p: [f64; 2]) -> Result<(), FieldError> {
        if self.contains(p, self.spacing) {
            Ok(())
        } else {
            Err(FieldError::TooCloseToEdge(p[0], p[1]))
        }
    }

    /// Central differences of [`GridField::sample`] with step equal to the
    /// spacing.
    pub fn gradient(&self, p: [f64; 2]) -> Result<[f64; 2], FieldError> {
        self.require_clearance(p)?;
        let s = self.spacing;
        let gx = (self.sample([p[0] + s, p[1]])? - self.sample([p[0] - s, p[1]])?) / (2.0 * s);
        let gy = (self.sample([p[0], p[1] + s])? - self.sample([p[0], p[1] - s])?) / (2.0 * s);
        Ok([gx, gy])
    }

    /// Second-order central differences; the mixed partial uses the
    /// symmetric four-point stencil so the result is symmetric exactly.
    pub fn hessian(&self, p: [f64; 2]) -> Result<[[f64; 2]; 2], FieldError> {
        self.require_clearance(p)?;
        let s = self.spacing;
        let f = |dx: f64, dy: f64| self.sample([p[0] + dx, p[1] + dy]);
        let c = f(0.0, 0.0)?;
        let hxx = (f(s, 0.0)? - 2.0 * c + f(-s, 0.0)?) / (s * s);
        let hyy = (f(0.0, s)? - 2.0 * c + f(0.0, -s)?) / (s * s);
        let hxy = (f(s, s)? - f(s, -s)? - f(-s, s)? + f(-s, -s)?) / (4.0 * s * s);
        Ok([[hxx, hxy], [hxy, hyy]])
    }

    /// Max-norm of `lap(h) - F` over non-boundary cells, when a mask is
    /// attached.
    pub fn residual(&self, forcing: Forcing) -> Option<f64> {
        let cells = self.mask.as_ref()?;
        Some(residual_max(
            &self.values,
            cells,
            forcing,
            self.spacing,
            self.nx,
            self.ny,
        ))
    }

    pub fn write_psf(&self, mut w: impl Write) -> Result<(), FieldError> {
        let mut buf = Vec::with_capacity(PSF_HEADER_LEN + 8 * self.values.len());
        buf.extend_from_slice(&PSF_MAGIC);
        buf.extend_from_slice(&PSF_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.origin[0].to_le_bytes());
        buf.extend_from_slice(&self.origin[1].to_le_bytes());
        buf.extend_from_slice(&self.spacing.to_le_bytes());
        buf.extend_from_slice(&(self.nx as u64).to_le_bytes());
        buf.extend_from_slice(&(self.ny as u64).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_psf(mut r: impl Read) -> Result<Self, FieldError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < PSF_HEADER_LEN {
            return Err(FieldError::Format("truncated header".into()));
        }
        if bytes[..4] != PSF_MAGIC {
            return Err(FieldError::Format("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != PSF_VERSION {
            return Err(FieldError::Format(format!("unsupported version {version}")));
        }
        let origin = [f64_at(8), f64_at(16)];
        let spacing = f64_at(24);
        let nx = u64_at(32) as usize;
        let ny = u64_at(40) as usize;
        if !(spacing > 0.0) || nx < 2 || ny < 2 {
            return Err(FieldError::Format("degenerate grid".into()));
        }
        let expected = nx
            .checked_mul(ny)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(PSF_HEADER_LEN))
            .ok_or_else(|| FieldError::Format("grid too large".into()))?;
        if bytes.len() != expected {
            return Err(FieldError::Format(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes[PSF_HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::Format("non-finite value".into()));
        }
        Ok(Self {
            origin,
            spacing,
            nx,
            ny,
            values,
            mask: None,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FieldError> {
        let file = std::fs::File::create(path)?;
        self.write_psf(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FieldError> {
        let file = std::fs::File::open(path)?;
        Self::read_psf(std::io::BufReader::new(file))
    }
}

/// Rasterizes the scenario and solves for its safety field with the
/// scenario's field settings.
pub fn build_field(
    scenario: &crate::scenario::Scenario,
) -> Result<(GridField, SolveReport), crate::Error> {
    let f = &scenario.field;
    let mask = crate::world::rasterize_domain(scenario, f.resolution)?;
    let forcing = Forcing::new(f.interior_forcing, f.exterior_forcing);
    Ok(solve_poisson(&mask, forcing, f.tol, f.max_iters)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from_rows(spacing: f64, rows: &[&str]) -> DomainMask {
        // rows listed top to bottom; '#' marks interior
        let ny = rows.len();
        let nx = rows[0].len();
        let mut interior = vec![false; nx * ny];
        for (r, row) in rows.iter().enumerate() {
            let j = ny - 1 - r;
            for (i, ch) in row.chars().enumerate() {
                interior[j * nx + i] = ch == '#';
            }
        }
        DomainMask::from_interior([0.0, 0.0], spacing, nx, ny, &interior)
    }

    /// Dense Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n)
                .max_by(|x, y| a[*x][c].abs().total_cmp(&a[*y][c].abs()))
                .unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn single_interior_cell() {
        let s = 0.1;
        let mask = mask_from_rows(s, &["...", ".#.", "..."]);
        let (field, report) = solve_poisson(&mask, Forcing::default(), 1e-10, 10_000).unwrap();
        assert!(report.residual < 1e-10);
        assert!((field.value(1, 1) - s * s).abs() < 1e-12);
        assert_eq!(field.value(0, 1), 0.0);
    }

    #[test]
    fn strip_reproduces_parabola() {
        // interior columns 1..=m, boundary columns 0 and m+1, mirrored top/bottom
        for m in [9usize, 19] {
            let s = 1.0 / (m + 1) as f64;
            let row: String = std::iter::once('.')
                .chain(std::iter::repeat_n('#', m))
                .chain(std::iter::once('.'))
                .collect();
            let mask = mask_from_rows(s, &[&row, &row, &row]);
            let c = 2.0;
            let (field, _) =
                solve_poisson(&mask, Forcing::new(-c, 1.0), 1e-10, 200_000).unwrap();
            let l = 1.0;
            let mut worst: f64 = 0.0;
            for i in 0..m + 2 {
                let x = i as f64 * s;
                let exact = 0.5 * c * x * (l - x);
                worst = worst.max((field.value(i, 1) - exact).abs());
            }
            // three-point stencil is exact on quadratics
            assert!(worst < 1e-9, "m = {m}: {worst}");
        }
    }

    #[test]
    fn matches_dense_direct_solve() {
        let s = 0.2;
        let rows = [
            ".......", ".#####.", ".#####.", ".#####.", ".#####.", ".#####.", ".......",
        ];
        let mask = mask_from_rows(s, &rows);
        let (field, _) = solve_poisson(&mask, Forcing::new(-1.0, 1.0), 1e-12, 100_000).unwrap();
        // unknowns: interior 5x5, Dirichlet zero around
        let idx = |i: usize, j: usize| (j - 1) * 5 + (i - 1);
        let mut a = vec![vec![0.0; 25]; 25];
        let mut b = vec![0.0; 25];
        for j in 1..=5 {
            for i in 1..=5 {
                let r = idx(i, j);
                a[r][r] = -4.0 / (s * s);
                for (ii, jj) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
                    if (1..=5).contains(&ii) && (1..=5).contains(&jj) {
                        a[r][idx(ii, jj)] = 1.0 / (s * s);
                    }
                }
                b[r] = -1.0;
            }
        }
        let x = dense_solve(a, b);
        for j in 1..=5 {
            for i in 1..=5 {
                assert!((field.value(i, j) - x[idx(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mask = mask_from_rows(0.1, &["...", "...", "..."]);
        assert!(matches!(
            solve_poisson(&mask, Forcing::default(), 1e-6, 10),
            Err(FieldError::NoInterior)
        ));
        let mask = mask_from_rows(0.1, &["....", ".##.", "...."]);
        assert!(matches!(
            solve_poisson(&mask, Forcing::default(), 0.0, 10),
            Err(FieldError::InvalidTolerance(_))
        ));
        let big = mask_from_rows(
            0.01,
            &[
                "..........",
                ".########.",
                ".########.",
                ".########.",
                "..........",
            ],
        );
        match solve_poisson(&big, Forcing::default(), 1e-14, 1) {
            Err(FieldError::NotConverged {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 1e-14);
            }
            other => panic!("{other:?}"),
        }
    }

    fn seeded(f: impl Fn(f64, f64) -> f64) -> GridField {
        GridField::from_fn([-1.0, -2.0], 0.05, 81, 61, f)
    }

    #[test]
    fn sample_is_exact_at_centers_and_mean_at_midpoints() {
        let field = seeded(|x, y| (3.0 * x).sin() + y * y);
        for (i, j) in [(0, 0), (10, 7), (80, 60), (33, 59)] {
            assert_eq!(field.sample(field.center(i, j)).unwrap(), field.value(i, j));
        }
        let [x, y] = field.center(12, 30);
        let mid = field.sample([x + 0.025, y]).unwrap();
        assert!((mid - 0.5 * (field.value(12, 30) + field.value(13, 30))).abs() < 1e-14);
    }

    #[test]
    fn sample_matches_weight_formula() {
        let field = seeded(|x, y| (2.0 * x).cos() * y + x);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (lo, hi) = field.extent();
        for _ in 0..500 {
            let p = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
            let gx = (p[0] - field.origin[0]) / field.spacing;
            let gy = (p[1] - field.origin[1]) / field.spacing;
            let (i, j) = (gx.floor() as usize, gy.floor() as usize);
            let (a, b) = (gx - i as f64, gy - j as f64);
            let expected = (1.0 - a) * (1.0 - b) * field.value(i, j)
                + a * (1.0 - b) * field.value(i + 1, j)
                + (1.0 - a) * b * field.value(i, j + 1)
                + a * b * field.value(i + 1, j + 1);
            assert!((field.sample(p).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_out_of_field() {
        let field = seeded(|_, _| 1.0);
        assert!(matches!(
            field.sample([-1.5, 0.0]),
            Err(FieldError::OutOfField(..))
        ));
        assert!(matches!(
            field.gradient([-1.0, 0.0]),
            Err(FieldError::TooCloseToEdge(..))
        ));
        assert!(field.sample([-1.0, -2.0]).is_ok());
    }

    #[test]
    fn derivatives_of_seeded_polynomials() {
        let field = seeded(|_, _| 2.5);
        let g = field.gradient([0.3, 0.1]).unwrap();
        let h = field.hessian([0.3, 0.1]).unwrap();
        assert_eq!(g, [0.0, 0.0]);
        assert!(h.iter().flatten().all(|v| v.abs() < 1e-12));

        let field = seeded(|x, y| x * x + 3.0 * y);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = [rng.gen_range(-0.9..2.9), rng.gen_range(-1.9..0.9)];
            let g = field.gradient(p).unwrap();
            assert!((g[0] - 2.0 * p[0]).abs() < 1e-6 && (g[1] - 3.0).abs() < 1e-6);
            let h = field.hessian(p).unwrap();
            assert!((h[0][0] - 2.0).abs() < 1e-3 && h[1][1].abs() < 1e-3);
            assert!(h[0][1].abs() < 1e-3);
            assert_eq!(h[0][1], h[1][0]);
        }
    }

    #[test]
    fn psf_round_trip_and_corruption() {
        let field = seeded(|x, y| x - y * 0.5);
        let mut buf = Vec::new();
        field.write_psf(&mut buf).unwrap();
        assert_eq!(buf.len(), 48 + 8 * 81 * 61);
        assert_eq!(&buf[..4], b"PSF1");
        let back = GridField::read_psf(buf.as_slice()).unwrap();
        assert_eq!(back, field);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(GridField::read_psf(bad.as_slice()), Err(FieldError::Format(_))));
        let truncated = &buf[..buf.len() - 8];
        assert!(matches!(GridField::read_psf(truncated), Err(FieldError::Format(_))));
    }
}
