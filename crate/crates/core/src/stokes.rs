//! Discrete Stokes eigenmodes on the bounded square.
//!
//! Velocity modes are built from a stream function `psi` supported on an
//! inset block of nodes (four rings away from the wall) via the centered
//! rotated gradient `g = (D_y psi, -D_x psi)`. Because every stencil that
//! touches the support of `psi` is centered, the velocity is exactly
//! divergence-free in the discrete sense, vanishes on the three node rings
//! nearest the wall, and has exactly zero mean.
//!
//! The modes solve the generalized symmetric eigenproblem
//! `<grad g(psi), grad g(chi)> = lambda <g(psi), g(chi)>` over inset stream
//! functions, which is the variational form of the Stokes operator on the
//! discretely divergence-free space. The problem is small (the stream
//! function has one degree of freedom per inset node), so it is solved
//! densely: Cholesky of the mass form, then a symmetric eigendecomposition.
//! Results are cached in memory per grid and optionally on disk.

use crate::error::{Error, Result};
use crate::fdm;
use crate::field::{ScalarField, VectorField};
use crate::fieldio;
use crate::grid::Grid;
use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::{Mutex, OnceLock};

/// Nodes with `MARGIN <= i,j <= n-1-MARGIN` carry stream-function degrees of
/// freedom. Four rings guarantee the velocity vanishes on rings 0..2, so
/// even the one-sided divergence rows at the wall see only zeros.
const MARGIN: usize = 4;

fn inset_dofs(grid: Grid) -> usize {
    (grid.nx - 2 * MARGIN) * (grid.ny - 2 * MARGIN)
}

fn unpack_inset(grid: Grid, x: &[f64]) -> ScalarField {
    let mut f = ScalarField::zeros(grid);
    let w = grid.nx - 2 * MARGIN;
    for (q, &v) in x.iter().enumerate() {
        let i = MARGIN + q % w;
        let j = MARGIN + q / w;
        *f.at_mut(i, j) = v;
    }
    f
}

fn pack_inset(f: &ScalarField) -> Vec<f64> {
    let grid = f.grid;
    let w = grid.nx - 2 * MARGIN;
    let h = grid.ny - 2 * MARGIN;
    let mut out = Vec::with_capacity(w * h);
    for j in MARGIN..MARGIN + h {
        for i in MARGIN..MARGIN + w {
            out.push(f.at(i, j));
        }
    }
    out
}

/// Rotated centered gradient: `g = (D_y psi, -D_x psi)`.
fn stream_to_velocity(psi: &ScalarField) -> VectorField {
    let grad = fdm::gradient(psi);
    VectorField {
        x: grad.y,
        y: {
            let mut gy = grad.x;
            gy.scale(-1.0);
            gy
        },
    }
}

/// Adjoint of `stream_to_velocity` under the plain nodal dot product,
/// restricted to inset nodes (where all stencils are centered).
fn velocity_to_stream_adjoint(v: &VectorField) -> ScalarField {
    let gx = fdm::gradient(&v.x);
    let gy = fdm::gradient(&v.y);
    let grid = v.grid();
    let mut out = ScalarField::zeros(grid);
    for j in MARGIN..grid.ny - MARGIN {
        for i in MARGIN..grid.nx - MARGIN {
            *out.at_mut(i, j) = -gx.y.at(i, j) + gy.x.at(i, j);
        }
    }
    out
}

/// Mass form `B = h^2 G^T G`; `x^T B y = <g(x), g(y)>_{L^2}` because the
/// velocities vanish near the wall where trapezoid weights are reduced.
fn apply_mass(grid: Grid, x: &[f64]) -> Vec<f64> {
    let psi = unpack_inset(grid, x);
    let g = stream_to_velocity(&psi);
    let mut q = velocity_to_stream_adjoint(&g);
    q.scale(grid.spacing_x() * grid.spacing_y());
    pack_inset(&q)
}

/// Stiffness form `A = h^2 G^T (-Lap_h) G`; `x^T A y = <grad g(x), grad g(y)>`.
fn apply_stiffness(grid: Grid, x: &[f64]) -> Vec<f64> {
    let psi = unpack_inset(grid, x);
    let g = stream_to_velocity(&psi);
    let mut lx = fdm::laplacian5(&g.x);
    let mut ly = fdm::laplacian5(&g.y);
    lx.scale(-1.0);
    ly.scale(-1.0);
    let mut q = velocity_to_stream_adjoint(&VectorField { x: lx, y: ly });
    q.scale(grid.spacing_x() * grid.spacing_y());
    pack_inset(&q)
}

fn dense_from_operator(m: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut cols = Vec::with_capacity(m);
    let mut e = vec![0.0; m];
    for j in 0..m {
        e[j] = 1.0;
        cols.push(apply(&e));
        e[j] = 0.0;
    }
    DMatrix::from_fn(m, m, |r, c| cols[c][r])
}

fn solve_dense(grid: Grid, count: usize) -> Result<Vec<(f64, VectorField)>> {
    let m = inset_dofs(grid);
    if count > m {
        return Err(Error::InvalidArgument(format!(
            "requested {count} Stokes modes but the {}x{} grid has only {m} stream degrees of freedom",
            grid.nx, grid.ny
        )));
    }
    let a = dense_from_operator(m, |x| apply_stiffness(grid, x));
    let b = dense_from_operator(m, |x| apply_mass(grid, x));
    let chol = Cholesky::new(b).ok_or_else(|| {
        Error::Precondition("stream-function mass form is not positive definite".into())
    })?;
    // C = L^{-1} A L^{-T} shares the pencil's eigenvalues.
    let l = chol.l();
    let mut c = l
        .solve_lower_triangular(&a)
        .ok_or_else(|| Error::Precondition("singular Cholesky factor".into()))?;
    c = l
        .solve_lower_triangular(&c.transpose())
        .ok_or_else(|| Error::Precondition("singular Cholesky factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let mut out = Vec::with_capacity(count);
    let lt = l.transpose();
    for &idx in order.iter().take(count) {
        let y = eig.eigenvectors.column(idx).clone_owned();
        let mut x = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Precondition("singular Cholesky factor".into()))?;
        // Deterministic sign: the largest-magnitude stream entry is positive.
        let mut pivot = 0;
        for k in 0..m {
            if x[k].abs() > x[pivot].abs() {
                pivot = k;
            }
        }
        if x[pivot] < 0.0 {
            x.neg_mut();
        }
        let dofs: Vec<f64> = x.iter().copied().collect();
        let g = stream_to_velocity(&unpack_inset(grid, &dofs));
        out.push((eig.eigenvalues[idx], g));
    }
    Ok(out)
}

type ModeCache = Mutex<HashMap<(usize, usize), Vec<(f64, VectorField)>>>;

fn mem_cache() -> &'static ModeCache {
    static CACHE: OnceLock<ModeCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn disk_paths(dir: &Path, grid: Grid, count: usize) -> (std::path::PathBuf, std::path::PathBuf) {
    let stem = format!("stokes_{}x{}_p{}", grid.nx, grid.ny, count);
    (dir.join(format!("{stem}.esnp")), dir.join(format!("{stem}.json")))
}

fn disk_load(dir: &Path, grid: Grid, count: usize) -> Option<Vec<(f64, VectorField)>> {
    let (fields_path, json_path) = disk_paths(dir, grid, count);
    let lambdas: Vec<f64> = serde_json::from_str(&fs::read_to_string(json_path).ok()?).ok()?;
    if lambdas.len() != count {
        return None;
    }
    let mut reader = BufReader::new(fs::File::open(fields_path).ok()?);
    let mut out = Vec::with_capacity(count);
    for &lambda in &lambdas {
        let gx = fieldio::read_field(&mut reader).ok()?;
        let gy = fieldio::read_field(&mut reader).ok()?;
        if gx.grid != grid || gy.grid != grid {
            return None;
        }
        out.push((lambda, VectorField { x: gx, y: gy }));
    }
    Some(out)
}

fn disk_store(dir: &Path, grid: Grid, modes: &[(f64, VectorField)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (fields_path, json_path) = disk_paths(dir, grid, modes.len());
    let mut writer = BufWriter::new(fs::File::create(fields_path)?);
    for (_, g) in modes {
        fieldio::write_field(&mut writer, &g.x)?;
        fieldio::write_field(&mut writer, &g.y)?;
    }
    let lambdas: Vec<f64> = modes.iter().map(|(l, _)| *l).collect();
    fs::write(json_path, serde_json::to_string(&lambdas).map_err(Error::from)?)?;
    Ok(())
}

/// The `count` lowest discrete Stokes eigenpairs `(lambda, g)` on a square
/// grid, with `L^2`-orthonormal velocities. Results are cached in memory per
/// process and, when `cache_dir` is given, on disk.
pub fn stokes_eigenmodes(
    grid: Grid,
    count: usize,
    cache_dir: Option<&Path>,
) -> Result<Vec<(f64, VectorField)>> {
    grid.require_square()?;
    if grid.nx < 16 || grid.ny < 16 {
        return Err(Error::BadGridSize {
            nx: grid.nx,
            ny: grid.ny,
            reason: "Stokes eigenmodes need at least a 16x16 grid".into(),
        });
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let key = (grid.nx, grid.ny);
    {
        let cache = mem_cache().lock().unwrap();
        if let Some(modes) = cache.get(&key) {
            if modes.len() >= count {
                return Ok(modes[..count].to_vec());
            }
        }
    }
    if let Some(dir) = cache_dir {
        if let Some(modes) = disk_load(dir, grid, count) {
            mem_cache().lock().unwrap().insert(key, modes.clone());
            return Ok(modes);
        }
    }
    let modes = solve_dense(grid, count)?;
    if let Some(dir) = cache_dir {
        disk_store(dir, grid, &modes)?;
    }
    mem_cache().lock().unwrap().insert(key, modes.clone());
    Ok(modes)
}
