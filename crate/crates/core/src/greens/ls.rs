//! Discretized Lippmann-Schwinger system over polarizable voxels.
//!
//! Unknowns are the fields `X(u)` at the voxel centres. With contrast
//! `chi = eps - 1` and cell volume `dV`,
//!
//! `X(u) - sum_v k^2 dV G_bg(u, v) chi_v X(v) = G_bg(u, s)`.
//!
//! The diagonal block uses the spherical-cell rule: the principal-value
//! exclusion leaves the static depolarization `-chi/3`, plus the radiative
//! reaction `i k^3 dV chi / (6 pi)` and, inside a shell, the regular
//! reflected part of the background at coincidence.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::greens::spherical::{regular_waves, LayeredSphere, Waves};
use crate::greens::vacuum::vacuum_green_unchecked;
use crate::linalg::{CVec3, Dyad, Vec3, C64, I};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelfTermRule {
    /// `-chi/3` depolarization of a spherical cell plus radiative reaction.
    SphericalCellRadiative,
}

impl SelfTermRule {
    pub fn tag(&self) -> &'static str {
        match self {
            SelfTermRule::SphericalCellRadiative => "spherical-cell+radiative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Dense LU up to this many voxels, GMRES above.
    pub dense_limit: usize,
    /// Relative residual target of the iterative path.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub restart: usize,
    pub memory_cap_bytes: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            dense_limit: 3000,
            tolerance: 1e-10,
            max_iterations: 5000,
            restart: 80,
            memory_cap_bytes: 8 << 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    DenseLu,
    Gmres,
}

/// Medium the voxels are embedded in.
#[derive(Debug, Clone)]
pub enum Background {
    Vacuum,
    Layered(Box<LayeredSphere>),
}

impl Background {
    /// Regular reflected part between two core points given their waves.
    pub(crate) fn reflected(&self, k0: f64, wx: &Waves, wy: &Waves) -> Dyad {
        match self {
            Background::Vacuum => Dyad::zeros(),
            Background::Layered(bg) => {
                let mut out = Dyad::zeros();
                let pref = I * k0;
                for l in 1..=bg.lmax() {
                    let (rte, rtm) = bg.reflection(l);
                    for m in -(l as i64)..=(l as i64) {
                        let idx = crate::special::lm_index(l, m);
                        let mx = wx.m[idx] * (pref * rte);
                        let nx = wx.n[idx] * (pref * rtm);
                        let my = wy.m[idx].map(|z| z.conj());
                        let ny = wy.n[idx].map(|z| z.conj());
                        out += mx * my.transpose() + nx * ny.transpose();
                    }
                }
                out
            }
        }
    }

    pub(crate) fn waves(&self, k0: f64, x: &Vec3) -> Option<Waves> {
        match self {
            Background::Vacuum => None,
            Background::Layered(bg) => Some(regular_waves(k0, x, bg.lmax())),
        }
    }
}

/// Assembled `A = I - K`.
#[derive(Debug, Clone)]
pub struct LsSystem {
    pub omega: f64,
    pub k0: f64,
    pub cell_volume: f64,
    pub positions: Vec<Vec3>,
    pub chi: Vec<C64>,
    pub rule: SelfTermRule,
    pub matrix: DMatrix<C64>,
    pub(crate) background: Background,
    /// Background regular waves at each voxel (layered background only).
    pub(crate) voxel_waves: Vec<Waves>,
}

/// Diagonal coefficient of the self-term rule (without the shell part).
pub fn self_term(k0: f64, cell_volume: f64, chi: C64) -> C64 {
    -chi / 3.0 + I * (k0.powi(3) * cell_volume / (6.0 * PI)) * chi
}

/// Radiatively corrected polarizability of one cell, consistent with the
/// self-term rule: `dV chi / (1 + chi/3 - i k^3 dV chi / (6 pi))`.
pub fn cell_polarizability(k0: f64, cell_volume: f64, chi: C64) -> C64 {
    cell_volume * chi / (1.0 - self_term(k0, cell_volume, chi))
}

impl LsSystem {
    pub fn assemble(
        omega: f64,
        k0: f64,
        cell_volume: f64,
        positions: Vec<Vec3>,
        chi: Vec<C64>,
        background: Background,
        opts: &SolverOptions,
    ) -> Result<Self> {
        let n = positions.len();
        let estimate = (3 * n as u64).pow(2) * 16;
        if estimate > opts.memory_cap_bytes {
            return Err(Error::MemoryCap { estimate_bytes: estimate, cap_bytes: opts.memory_cap_bytes });
        }
        let voxel_waves: Vec<Waves> = positions.iter().filter_map(|p| background.waves(k0, p)).collect();
        let scale = k0 * k0 * cell_volume;
        // Row blocks computed independently, then written in fixed order.
        let rows: Vec<Vec<Dyad>> = (0..n)
            .into_par_iter()
            .map(|u| {
                (0..n)
                    .map(|v| {
                        let mut g = if u == v {
                            Dyad::identity() * self_term(k0, cell_volume, chi[v])
                        } else {
                            let d = positions[u] - positions[v];
                            vacuum_green_unchecked(k0, &d, d.norm()) * (scale * chi[v])
                        };
                        if !voxel_waves.is_empty() {
                            g += background.reflected(k0, &voxel_waves[u], &voxel_waves[v]) * (scale * chi[v]);
                        }
                        g
                    })
                    .collect()
            })
            .collect();
        let mut matrix = DMatrix::<C64>::identity(3 * n, 3 * n);
        for (u, row) in rows.iter().enumerate() {
            for (v, k) in row.iter().enumerate() {
                for i in 0..3 {
                    for j in 0..3 {
                        matrix[(3 * u + i, 3 * v + j)] -= k[(i, j)];
                    }
                }
            }
        }
        Ok(LsSystem {
            omega,
            k0,
            cell_volume,
            positions,
            chi,
            rule: SelfTermRule::SphericalCellRadiative,
            matrix,
            background,
            voxel_waves,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn factorize(&self, opts: &SolverOptions) -> Result<Factorization> {
        if self.len() <= opts.dense_limit {
            let lu = self.matrix.clone().lu();
            let upper = lu.u();
            let diag: Vec<f64> = upper.diagonal().iter().map(|z| z.norm()).collect();
            let max = diag.iter().copied().fold(0.0, f64::max);
            let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
            let condition = if diag.is_empty() { 1.0 } else { max / min };
            if !condition.is_finite() || condition > 1e14 {
                return Err(Error::Solve { reason: "interaction matrix is singular or ill-conditioned".into(), condition });
            }
            Ok(Factorization::Dense { lu, condition })
        } else {
            Ok(Factorization::Iterative { opts: *opts })
        }
    }
}

#[derive(Debug, Clone)]
pub enum Factorization {
    Dense { lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>, condition: f64 },
    Iterative { opts: SolverOptions },
}

impl Factorization {
    pub fn kind(&self) -> SolverKind {
        match self {
            Factorization::Dense { .. } => SolverKind::DenseLu,
            Factorization::Iterative { .. } => SolverKind::Gmres,
        }
    }

    pub fn condition_estimate(&self) -> Option<f64> {
        match self {
            Factorization::Dense { condition, .. } => Some(*condition),
            Factorization::Iterative { .. } => None,
        }
    }

    pub fn solve(&self, a: &DMatrix<C64>, b: &DVector<C64>) -> Result<DVector<C64>> {
        match self {
            Factorization::Dense { lu, condition } => lu
                .solve(b)
                .ok_or(Error::Solve { reason: "LU back-substitution failed".into(), condition: *condition }),
            Factorization::Iterative { opts } => gmres(a, b, opts),
        }
    }
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
pub fn gmres(a: &DMatrix<C64>, b: &DVector<C64>, opts: &SolverOptions) -> Result<DVector<C64>> {
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::<C64>::zeros(n);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let m = opts.restart.max(1).min(n.max(1));
    let mut iterations = 0;
    let mut rel = 1.0;
    while iterations < opts.max_iterations {
        let r = b - a * &x;
        let beta = r.norm();
        rel = beta / bnorm;
        if rel <= opts.tolerance {
            return Ok(x);
        }
        let mut basis: Vec<DVector<C64>> = vec![r / C64::new(beta, 0.0)];
        let mut h = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![C64::new(0.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            iterations += 1;
            let mut w = a * &basis[k];
            for (i, v) in basis.iter().enumerate() {
                let hik = v.dotc(&w);
                h[i][k] = hik;
                w -= v * hik;
            }
            let wn = w.norm();
            h[k + 1][k] = C64::new(wn, 0.0);
            for i in 0..k {
                let t = cs[i].conj() * h[i][k] + sn[i].conj() * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let (c, s) = givens(h[k][k], h[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            h[k][k] = c.conj() * h[k][k] + s.conj() * h[k + 1][k];
            h[k + 1][k] = C64::new(0.0, 0.0);
            g[k + 1] = -s * g[k];
            g[k] = c.conj() * g[k];
            k_used = k + 1;
            rel = g[k + 1].norm() / bnorm;
            if rel <= opts.tolerance || wn == 0.0 || iterations >= opts.max_iterations {
                break;
            }
            basis.push(w / C64::new(wn, 0.0));
        }
        let mut y = vec![C64::new(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x += &basis[j] * *yj;
        }
    }
    let r = b - a * &x;
    let final_rel = r.norm() / bnorm;
    if final_rel <= opts.tolerance {
        return Ok(x);
    }
    Err(Error::NoConvergence {
        iterations,
        trace: format!("GMRES relative residual {final_rel:.3e} (last inner estimate {rel:.3e}), target {:.1e}", opts.tolerance),
    })
}

/// Rotation `[[conj c, conj s], [-s, c]]` mapping `(a, b)` to `(r, 0)`.
fn givens(a: C64, b: C64) -> (C64, C64) {
    let rho = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if rho == 0.0 {
        return (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    }
    (a / rho, b / rho)
}

/// Columns of a 3x3 right-hand side block flattened over voxels.
pub(crate) fn stack_columns(blocks: &[Dyad], col: usize) -> DVector<C64> {
    let mut v = DVector::zeros(3 * blocks.len());
    for (u, b) in blocks.iter().enumerate() {
        for i in 0..3 {
            v[3 * u + i] = b[(i, col)];
        }
    }
    v
}

pub(crate) fn column_vec(v: &DVector<C64>, u: usize) -> CVec3 {
    CVec3::new(v[3 * u], v[3 * u + 1], v[3 * u + 2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmres_solves_small_system() {
        let n = 12;
        let a = DMatrix::<C64>::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(3.0 + i as f64 * 0.1, 0.5)
            } else {
                C64::new(((i * 7 + j * 3) % 5) as f64 * 0.1, ((i + 2 * j) % 3) as f64 * 0.05)
            }
        });
        let b = DVector::<C64>::from_fn(n, |i, _| C64::new(1.0 + i as f64, -(i as f64) * 0.3));
        let opts = SolverOptions { restart: 5, ..Default::default() };
        let x = gmres(&a, &b, &opts).unwrap();
        assert!((&a * &x - &b).norm() / b.norm() < 1e-10);
    }

    #[test]
    fn vacuum_voxels_give_identity() {
        let sys = LsSystem::assemble(
            1.0,
            1.0,
            1e-3,
            vec![Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0)],
            vec![C64::new(0.0, 0.0); 2],
            Background::Vacuum,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(sys.matrix, DMatrix::identity(6, 6));
    }

    #[test]
    fn memory_cap_reports_estimate() {
        let opts = SolverOptions { memory_cap_bytes: 100, ..Default::default() };
        let err = LsSystem::assemble(1.0, 1.0, 1.0, vec![Vec3::zeros(); 2], vec![C64::new(1.0, 0.0); 2], Background::Vacuum, &opts)
            .unwrap_err();
        assert!(matches!(err, Error::MemoryCap { estimate_bytes: 576, cap_bytes: 100 }));
    }

    #[test]
    fn kernel_weight_scales_with_cell_volume() {
        let p = vec![Vec3::zeros(), Vec3::new(0.5, 0.2, 0.0)];
        let chi = vec![C64::new(1.0, 0.5); 2];
        let o = SolverOptions::default();
        let a = LsSystem::assemble(2.0, 2.0, 1e-3, p.clone(), chi.clone(), Background::Vacuum, &o).unwrap();
        let b = LsSystem::assemble(2.0, 2.0, 8e-3, p, chi, Background::Vacuum, &o).unwrap();
        let ka = a.matrix[(0, 3)];
        let kb = b.matrix[(0, 3)];
        assert!((kb - ka * 8.0).norm() < 1e-15 * kb.norm());
    }
}
