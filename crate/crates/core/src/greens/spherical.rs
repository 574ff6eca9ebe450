//! Background Green tensor of concentric spherical layers around a vacuum core.
//!
//! Used for the absorbing shell: the core `r < R_2` is vacuum, each layer has
//! its own complex wavenumber, and the outermost region is vacuum again.
//! Sources are restricted to the core. The tensor is expanded in vector
//! spherical waves,
//!
//! `G(x, y) = i k0 sum_lm [ W^M_lm(x) (M^j_lm(y))^* + W^N_lm(x) (N^j_lm(y))^* ]`,
//!
//! where `M^j`, `N^j` are the regular waves of the vacuum core and `W` carries
//! the radial combination `A h_l(k_i r) + B j_l(k_i r)` of the region holding
//! `x`. Per `l` and polarization the coefficients follow from continuity of
//! tangential `E` and `H` at each interface.

use crate::error::{Error, Result};
use crate::greens::vacuum::{vacuum_green_curl, vacuum_green_unchecked};
use crate::linalg::{cross, CVec3, Dyad, Vec3, C64, I};
use crate::special::{
    lm_index, riccati_derivative, spherical_h1n, spherical_harmonics, spherical_jn, vector_harmonics,
};

/// Vector spherical wave values at one point for all `(l, m)`, `l >= 1`.
#[derive(Debug, Clone)]
pub struct Waves {
    pub m: Vec<CVec3>,
    pub n: Vec<CVec3>,
}

/// Radial profile `A h_l + B j_l` for one region.
#[derive(Debug, Clone, Copy)]
struct Radial {
    a: C64,
    b: C64,
}

/// Evaluates `M` and `N` waves of wavenumber `k` at `x` for `l = 1..=lmax`,
/// using per-`l` radial coefficients (`TE` for `M`, `TM` for `N`).
fn waves_at(k: C64, x: &Vec3, lmax: usize, te: &[Radial], tm: &[Radial]) -> Waves {
    let r = x.norm();
    let zero = C64::new(0.0, 0.0);
    let nlm = (lmax + 1) * (lmax + 1);
    let mut out = Waves { m: vec![CVec3::new(zero, zero, zero); nlm], n: vec![CVec3::new(zero, zero, zero); nlm] };
    if r == 0.0 {
        // Only l = 1 regular N waves are nonzero at the origin; the limit is
        // taken by nudging the point off the axis singularity.
        let eps = 1e-9 * (1.0 / k.norm()).min(1.0);
        return waves_at(k, &Vec3::new(0.0, 0.0, eps), lmax, te, tm);
    }
    let dir = [x[0] / r, x[1] / r, x[2] / r];
    let rhat = CVec3::new(C64::new(dir[0], 0.0), C64::new(dir[1], 0.0), C64::new(dir[2], 0.0));
    let z = k * r;
    let needs_h = te.iter().chain(tm.iter()).any(|c| c.a != zero);
    let needs_j = te.iter().chain(tm.iter()).any(|c| c.b != zero);
    let h = if needs_h { spherical_h1n(lmax, z) } else { vec![zero; lmax + 1] };
    let j = if needs_j { spherical_jn(lmax, z) } else { vec![zero; lmax + 1] };
    let dh = riccati_derivative(z, &h);
    let dj = riccati_derivative(z, &j);
    let ylm = spherical_harmonics(lmax, dir);
    let xlm = vector_harmonics(lmax, &ylm);
    for l in 1..=lmax {
        let cte = te[l];
        let ctm = tm[l];
        let zm = cte.a * h[l] + cte.b * j[l];
        let zn = ctm.a * h[l] + ctm.b * j[l];
        let un = ctm.a * dh[l] + ctm.b * dj[l];
        let sq = ((l * (l + 1)) as f64).sqrt();
        let radial_coef = I * sq * zn / z;
        let tang_coef = un / z;
        for m in -(l as i64)..=(l as i64) {
            let idx = lm_index(l, m);
            let xv = xlm[idx];
            out.m[idx] = xv * zm;
            out.n[idx] = rhat * (radial_coef * ylm[idx]) + cross(&rhat, &xv) * tang_coef;
        }
    }
    out
}

/// Regular vacuum waves `M^j_lm`, `N^j_lm` at `y`.
pub fn regular_waves(k0: f64, y: &Vec3, lmax: usize) -> Waves {
    let unit = vec![Radial { a: C64::new(0.0, 0.0), b: C64::new(1.0, 0.0) }; lmax + 1];
    waves_at(C64::new(k0, 0.0), y, lmax, &unit, &unit)
}

/// Outgoing vacuum waves `M^h_lm`, `N^h_lm` at `x`.
pub fn outgoing_waves(k0: f64, x: &Vec3, lmax: usize) -> Waves {
    let unit = vec![Radial { a: C64::new(1.0, 0.0), b: C64::new(0.0, 0.0) }; lmax + 1];
    waves_at(C64::new(k0, 0.0), x, lmax, &unit, &unit)
}

/// Expansion coefficients of the field radiated by a set of sources, one per
/// column of a 3x3 dyadic: `c_lm = i k0 sum_s conj(W_lm(y_s)) . w_s`.
#[derive(Debug, Clone)]
pub struct SourceCoefficients {
    pub lmax: usize,
    pub m: Vec<[C64; 3]>,
    pub n: Vec<[C64; 3]>,
}

impl SourceCoefficients {
    pub fn new(lmax: usize) -> Self {
        let zero = [C64::new(0.0, 0.0); 3];
        let nlm = (lmax + 1) * (lmax + 1);
        SourceCoefficients { lmax, m: vec![zero; nlm], n: vec![zero; nlm] }
    }

    /// Adds a source at `y` whose strength for column `col` is `w[col]`
    /// (the field contribution is `G_bg(x, y) w`).
    pub fn add(&mut self, k0: f64, y: &Vec3, w: &[CVec3; 3]) {
        let waves = regular_waves(k0, y, self.lmax);
        self.add_waves(k0, &waves, w);
    }

    /// As [`add`](Self::add) with the regular waves at the source precomputed.
    pub fn add_waves(&mut self, k0: f64, waves: &Waves, w: &[CVec3; 3]) {
        let pref = I * k0;
        for idx in 1..self.m.len() {
            let mc = waves.m[idx].map(|z| z.conj());
            let nc = waves.n[idx].map(|z| z.conj());
            for col in 0..3 {
                self.m[idx][col] += pref * mc.dot(&w[col]);
                self.n[idx][col] += pref * nc.dot(&w[col]);
            }
        }
    }

    /// Contracts evaluated waves with the coefficients into a field dyad.
    fn contract(&self, waves: &Waves) -> Dyad {
        let mut out = Dyad::zeros();
        for idx in 1..self.m.len() {
            for col in 0..3 {
                let v = waves.m[idx] * self.m[idx][col] + waves.n[idx] * self.n[idx][col];
                for row in 0..3 {
                    out[(row, col)] += v[row];
                }
            }
        }
        out
    }
}

/// Concentric-layer background: vacuum core of radius `radii[0]`, layers in
/// between, vacuum outside `radii.last()`.
#[derive(Debug, Clone)]
pub struct LayeredSphere {
    k0: f64,
    radii: Vec<f64>,
    ks: Vec<C64>,
    lmax: usize,
    source_radius: f64,
    /// `coef[region][l]` for TE (`M`) waves.
    te: Vec<Vec<Radial>>,
    /// Same for TM (`N`) waves.
    tm: Vec<Vec<Radial>>,
}

fn interface_matrix(te: bool, k: C64, rho: f64, l: usize, lmax: usize) -> [[C64; 2]; 2] {
    let z = k * rho;
    let h = spherical_h1n(lmax, z);
    let j = spherical_jn(lmax, z);
    let dh = riccati_derivative(z, &h);
    let dj = riccati_derivative(z, &j);
    if te {
        [[h[l], j[l]], [dh[l], dj[l]]]
    } else {
        [[dh[l] / k, dj[l] / k], [k * h[l], k * j[l]]]
    }
}

fn mat_mul(a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]) -> [[C64; 2]; 2] {
    let mut o = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    o
}

fn mat_inv(a: &[[C64; 2]; 2]) -> [[C64; 2]; 2] {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
}

/// Truncation order for sources and targets within `r_src` of the centre and
/// a core of radius `core`.
pub fn truncation_order(k0: f64, r_src: f64, core: f64) -> usize {
    let kr = k0 * r_src;
    let bessel = (kr + 4.0 * kr.cbrt()).ceil() as usize + 12;
    let ratio = (r_src / core).max(1e-6);
    let geometric = if ratio < 1.0 { (16.0 * std::f64::consts::LN_10 / (2.0 * -ratio.ln())).ceil() as usize } else { usize::MAX };
    bessel.max(geometric.min(bessel + 40)).min(80)
}

impl LayeredSphere {
    /// `radii`: strictly increasing interface radii; `layer_ks[i]` is the
    /// wavenumber between `radii[i]` and `radii[i+1]`. `source_radius` bounds
    /// every source and core target that will be evaluated.
    pub fn new(k0: f64, radii: Vec<f64>, layer_ks: Vec<C64>, source_radius: f64) -> Result<Self> {
        if radii.is_empty() || layer_ks.len() + 1 != radii.len() {
            return Err(Error::param("layered sphere needs n+1 radii for n layers"));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
            return Err(Error::param("layer radii must be positive and strictly increasing"));
        }
        if source_radius >= 0.95 * radii[0] {
            return Err(Error::param(format!(
                "points of interest extend to r = {source_radius}, too close to the core boundary {}",
                radii[0]
            )));
        }
        let lmax = truncation_order(k0, source_radius, radii[0]);
        let mut ks = vec![C64::new(k0, 0.0)];
        ks.extend(layer_ks.iter().copied());
        ks.push(C64::new(k0, 0.0));
        let nreg = ks.len();
        let zero = C64::new(0.0, 0.0);
        let mut te = vec![vec![Radial { a: zero, b: zero }; lmax + 1]; nreg];
        let mut tm = te.clone();
        for (is_te, table) in [(true, &mut te), (false, &mut tm)] {
            for l in 1..=lmax {
                let mut t = [[C64::new(1.0, 0.0), zero], [zero, C64::new(1.0, 0.0)]];
                let mut steps = Vec::with_capacity(radii.len());
                for (i, &rho) in radii.iter().enumerate() {
                    let mi = interface_matrix(is_te, ks[i], rho, l, lmax);
                    let mo = interface_matrix(is_te, ks[i + 1], rho, l, lmax);
                    let step = mat_mul(&mat_inv(&mo), &mi);
                    steps.push(step);
                    t = mat_mul(&step, &t);
                }
                // No incoming wave from infinity: B_out = t10 + t11 R = 0.
                let refl = -t[1][0] / t[1][1];
                let mut ab = [C64::new(1.0, 0.0), refl];
                table[0][l] = Radial { a: ab[0], b: ab[1] };
                for (i, step) in steps.iter().enumerate() {
                    ab = [step[0][0] * ab[0] + step[0][1] * ab[1], step[1][0] * ab[0] + step[1][1] * ab[1]];
                    table[i + 1][l] = Radial { a: ab[0], b: ab[1] };
                }
            }
        }
        Ok(LayeredSphere { k0, radii, ks, lmax, source_radius, te, tm })
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn core_radius(&self) -> f64 {
        self.radii[0]
    }

    pub fn source_radius(&self) -> f64 {
        self.source_radius
    }

    /// Reflection coefficients `(R^TE_l, R^TM_l)` seen from the core.
    pub fn reflection(&self, l: usize) -> (C64, C64) {
        (self.te[0][l].b, self.tm[0][l].b)
    }

    /// Region index of radius `r` (0 = core).
    pub fn region(&self, r: f64) -> usize {
        self.radii.iter().take_while(|&&rho| r >= rho).count()
    }

    pub fn wavenumber(&self, region: usize) -> C64 {
        self.ks[region]
    }

    fn check_source(&self, y: &Vec3) -> Result<()> {
        if y.norm() > self.source_radius * (1.0 + 1e-12) {
            return Err(Error::param(format!(
                "source at r = {} beyond the expansion radius {}",
                y.norm(),
                self.source_radius
            )));
        }
        Ok(())
    }

    /// Waves of the region containing `x`. In the core only the reflected
    /// (regular) part is returned; the direct term is added in closed form.
    /// With `swap`, the `M` slot carries TM radial coefficients and the `N`
    /// slot TE ones, as needed after taking a curl.
    fn region_waves(&self, x: &Vec3, swap: bool) -> (Waves, C64) {
        let reg = self.region(x.norm());
        let k = self.ks[reg];
        let zero = C64::new(0.0, 0.0);
        let pick = |table: &Vec<Vec<Radial>>| -> Vec<Radial> {
            if reg == 0 {
                table[0].iter().map(|c| Radial { a: zero, b: c.b }).collect()
            } else {
                table[reg].clone()
            }
        };
        let (te, tm) = (pick(&self.te), pick(&self.tm));
        if swap {
            (waves_at(k, x, self.lmax, &tm, &te), k)
        } else {
            (waves_at(k, x, self.lmax, &te, &tm), k)
        }
    }

    /// Background Green tensor `G_bg(x, y)` for a source `y` in the core.
    /// Coincident core points return only the regular reflected part.
    pub fn green(&self, x: &Vec3, y: &Vec3) -> Result<Dyad> {
        self.check_source(y)?;
        let mut coef = SourceCoefficients::new(self.lmax);
        coef.add(self.k0, y, &identity_columns());
        let mut g = self.field(&coef, x);
        if self.region(x.norm()) == 0 {
            let d = x - y;
            let r = d.norm();
            if r > 0.0 {
                g += vacuum_green_unchecked(self.k0, &d, r);
            }
        }
        Ok(g)
    }

    /// Regular (shell-reflected) part of the background tensor for two core points.
    pub fn reflected(&self, x: &Vec3, y: &Vec3) -> Result<Dyad> {
        self.check_source(y)?;
        if self.region(x.norm()) != 0 {
            return Err(Error::param("reflected part is defined for core targets only"));
        }
        let mut coef = SourceCoefficients::new(self.lmax);
        coef.add(self.k0, y, &identity_columns());
        Ok(self.field(&coef, x))
    }

    /// Field of precomputed source coefficients at `x`, excluding the direct
    /// vacuum term when `x` lies in the core.
    pub fn field(&self, coef: &SourceCoefficients, x: &Vec3) -> Dyad {
        let (waves, _) = self.region_waves(x, false);
        coef.contract(&waves)
    }

    /// [`field`](Self::field) for several coefficient sets sharing one wave
    /// evaluation.
    pub fn field_many(&self, coefs: &[&SourceCoefficients], x: &Vec3) -> Vec<Dyad> {
        let (waves, _) = self.region_waves(x, false);
        coefs.iter().map(|c| c.contract(&waves)).collect()
    }

    /// Curl (first argument) of the same field.
    pub fn field_curl(&self, coef: &SourceCoefficients, x: &Vec3) -> Dyad {
        let (waves, k) = self.region_waves(x, true);
        // curl M = k N, curl N = k M
        let swapped = Waves { m: waves.n.iter().map(|v| v * k).collect(), n: waves.m.iter().map(|v| v * k).collect() };
        coef.contract(&swapped)
    }

    /// `curl_x G_bg(x, y)`.
    pub fn green_curl(&self, x: &Vec3, y: &Vec3) -> Result<Dyad> {
        self.check_source(y)?;
        let mut coef = SourceCoefficients::new(self.lmax);
        coef.add(self.k0, y, &identity_columns());
        let mut g = self.field_curl(&coef, x);
        if self.region(x.norm()) == 0 {
            g += vacuum_green_curl(self.k0, x, y)?;
        }
        Ok(g)
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }
}

pub(crate) fn identity_columns() -> [CVec3; 3] {
    let o = C64::new(1.0, 0.0);
    let z = C64::new(0.0, 0.0);
    [CVec3::new(o, z, z), CVec3::new(z, o, z), CVec3::new(z, z, o)]
}
