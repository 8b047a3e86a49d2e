//! Grid simulation of the dependence families and the Monte Carlo risk
//! estimator.
//!
//! Fields come from their spectral representations: a Poisson process of
//! intensities xi_1 > xi_2 > ... (reciprocals of cumulative exponential
//! sums) scaled by storm profiles. Atoms arrive in descending xi, so a
//! replicate stops as soon as the largest possible remaining contribution
//! cannot beat the current grid minimum. Smith profiles are deterministic
//! Gaussian bells with continuous centers on a padded window; the
//! stationary-Gaussian families draw profiles through a Cholesky factor,
//! full-grid for the untruncated model and a fixed disk template on a
//! lattice of snapped centers for the truncated one. Lattice snapping
//! keeps a single factorization valid for every atom and makes the
//! coverage count exact, so margins are unit Frechet by construction
//! rather than by an after-the-fact correction.
//!
//! Every replicate owns a counter-based RNG substream derived from
//! (seed, replicate index), so results are bit-identical for a fixed seed
//! no matter how many worker threads run.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::models::{inversion_transform, Dependence, MaxStable};
use crate::risk::DamageExponent;

/// Treated as the sup of a standardized Gaussian profile when deciding
/// that no remaining atom can matter. P(N(0,1) > 5) ~ 2.9e-7, far below
/// what any margin or dependence check here can resolve.
const KERNEL_SUP: f64 = 5.0;

/// Refresh the exact grid minimum every this many atoms. The stopping
/// rule only consults a stale (hence too small) minimum, so refresh
/// cadence affects speed, never correctness.
const MIN_REFRESH: usize = 32;

/// Hard cap on atoms per replicate; hitting it means the floor never
/// rose, i.e. a construction bug rather than an unlucky draw.
const MAX_ATOMS: usize = 4_000_000;

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Placement of the n x n sample points inside the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridConvention {
    /// Cell centers with spacing R/n; the equal-weight average over
    /// member cells is an exact partition, so the damage mean is
    /// unbiased for any grid size.
    #[default]
    CellCenters,
    /// Lattice spanning the closed bounding box with spacing R/(n-1)
    /// and per-point weight (R/(n-1))^2 / |A|. Total weight over-counts
    /// by (n/(n-1))^2; kept selectable for comparison with sources that
    /// print this convention.
    VertexLattice,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Sample points per side.
    pub grid_n: usize,
    pub region: Region,
    /// Independent field replicates m.
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub convention: GridConvention,
}

impl SimulationConfig {
    pub fn new(grid_n: usize, region: Region, replicates: usize, seed: u64) -> Result<Self> {
        let cfg = SimulationConfig {
            grid_n,
            region,
            replicates,
            seed,
            convention: GridConvention::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 2 {
            return Err(Error::Config(format!(
                "grid must have at least 2 points per side, got {}",
                self.grid_n
            )));
        }
        if self.replicates < 2 {
            return Err(Error::Config(format!(
                "need at least 2 replicates for a variance, got {}",
                self.replicates
            )));
        }
        Ok(())
    }
}

/// One simulated field on the n x n lattice over the region's bounding
/// box, row-major. Values at every lattice point are strictly positive
/// with unit Frechet margins; points outside a disk region are simulated
/// all the same and only excluded from estimators.
#[derive(Debug, Clone)]
pub struct FieldRealization {
    grid_n: usize,
    region: Region,
    convention: GridConvention,
    values: Vec<f64>,
}

impl FieldRealization {
    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn convention(&self) -> GridConvention {
        self.convention
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at row i, column j.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid_n + j]
    }
}

/// Lattice geometry shared by the sampler and the estimators.
struct Grid {
    n: usize,
    delta: f64,
    /// physical coordinate of the point at index 0 on each axis
    start_x: f64,
    start_y: f64,
    member: Vec<bool>,
    /// per-member-point weight in the damage average
    weight: f64,
}

impl Grid {
    fn new(region: Region, n: usize, convention: GridConvention) -> Grid {
        let (x0, y0, extent) = match region {
            Region::Square { side } => (0.0, 0.0, side),
            Region::Disk { radius } => (-radius, -radius, 2.0 * radius),
        };
        let (delta, offset) = match convention {
            GridConvention::CellCenters => (extent / n as f64, 0.5),
            GridConvention::VertexLattice => (extent / (n - 1) as f64, 0.0),
        };
        let start_x = x0 + offset * delta;
        let start_y = y0 + offset * delta;
        let mut member = vec![true; n * n];
        if let Region::Disk { radius } = region {
            for i in 0..n {
                let y = start_y + i as f64 * delta;
                for j in 0..n {
                    let x = start_x + j as f64 * delta;
                    member[i * n + j] = x * x + y * y <= radius * radius;
                }
            }
        }
        let member_count = member.iter().filter(|&&m| m).count();
        let weight = match convention {
            GridConvention::CellCenters => 1.0 / member_count as f64,
            GridConvention::VertexLattice => delta * delta / region.area(),
        };
        Grid {
            n,
            delta,
            start_x,
            start_y,
            member,
            weight,
        }
    }

    fn len(&self) -> usize {
        self.n * self.n
    }

    fn x(&self, j: usize) -> f64 {
        self.start_x + j as f64 * self.delta
    }

    fn y(&self, i: usize) -> f64 {
        self.start_y + i as f64 * self.delta
    }

    /// Weighted average of value^nu over member points.
    fn damage_mean(&self, values: &[f64], nu: f64) -> f64 {
        let mut acc = 0.0;
        for (idx, v) in values.iter().enumerate() {
            if self.member[idx] {
                acc += v.powf(nu);
            }
        }
        acc * self.weight
    }
}

/// Lower-triangular factor packed column-major, applied once per atom;
/// the column sweep keeps the inner loop a contiguous mul-add, which
/// matters more here than the classical row-dot form.
struct PackedChol {
    dim: usize,
    cols: Vec<f64>,
}

impl PackedChol {
    fn from_correlation(corr: &DMatrix<f64>) -> Result<PackedChol> {
        let dim = corr.nrows();
        match Cholesky::new(corr.clone()) {
            Some(ch) => {
                let l = ch.l();
                let mut cols = Vec::with_capacity(dim * (dim + 1) / 2);
                for j in 0..dim {
                    for i in j..dim {
                        cols.push(l[(i, j)]);
                    }
                }
                Ok(PackedChol { dim, cols })
            }
            None => {
                let lambda = smallest_eigenvalue(corr);
                Err(Error::LinearAlgebra(format!(
                    "correlation matrix of {dim} grid points is not positive \
                     definite: smallest eigenvalue is about {lambda:.3e}; \
                     coarsen the grid or shorten the correlation length"
                )))
            }
        }
    }

    /// w = L z
    fn apply(&self, z: &[f64], w: &mut [f64]) {
        debug_assert_eq!(z.len(), self.dim);
        w.fill(0.0);
        let mut base = 0;
        for (j, zj) in z.iter().enumerate() {
            let len = self.dim - j;
            let col = &self.cols[base..base + len];
            for (wt, c) in w[j..].iter_mut().zip(col.iter()) {
                *wt += c * zj;
            }
            base += len;
        }
    }
}

/// Single-precision variant used for the storm template, where the
/// factor is applied hundreds of times per replicate and the downstream
/// use is a max comparison that cannot see 1e-7 relative noise. Columns
/// are ordered by a farthest-point rule, so a prefix of columns already
/// pins the field everywhere; at a few checkpoints the remaining
/// contribution is bounded by KERNEL_SUP times the leftover conditional
/// spread, letting atoms that cannot win anywhere abort early.
struct TemplateChol {
    dim: usize,
    cols: Vec<f32>,
    /// (column index, per-point leftover spread after that many columns)
    checks: Vec<(usize, Vec<f32>)>,
}

impl TemplateChol {
    fn from_correlation(corr: &DMatrix<f64>) -> Result<TemplateChol> {
        let dim = corr.nrows();
        let Some(ch) = Cholesky::new(corr.clone()) else {
            let lambda = smallest_eigenvalue(corr);
            return Err(Error::LinearAlgebra(format!(
                "correlation matrix of {dim} template points is not positive \
                 definite: smallest eigenvalue is about {lambda:.3e}; \
                 coarsen the grid or shorten the correlation length"
            )));
        };
        let l = ch.l();
        let mut cols = Vec::with_capacity(dim * (dim + 1) / 2);
        for j in 0..dim {
            for i in j..dim {
                cols.push(l[(i, j)] as f32);
            }
        }
        let mut checks = Vec::new();
        for c in [dim / 8, dim / 4, dim / 2] {
            if c < 24 || c + 8 >= dim || checks.iter().any(|(cc, _)| *cc == c) {
                continue;
            }
            let spread: Vec<f32> = (0..dim)
                .map(|i| {
                    let explained: f64 = (0..c.min(i + 1)).map(|j| l[(i, j)] * l[(i, j)]).sum();
                    // the 1e-4 pad drowns single-precision accumulation
                    // error in the partial sums
                    ((1.0 - explained).max(0.0).sqrt() + 1e-4) as f32
                })
                .collect();
            checks.push((c, spread));
        }
        Ok(TemplateChol { dim, cols, checks })
    }

    /// w = L z, aborting with false once no point can reach `cutoff`.
    fn apply_bounded(&self, z: &[f32], w: &mut [f32], cutoff: f32) -> bool {
        debug_assert_eq!(z.len(), self.dim);
        w.fill(0.0);
        let mut base = 0;
        let mut next = 0;
        for (j, zj) in z.iter().enumerate() {
            if next < self.checks.len() && self.checks[next].0 == j {
                let spread = &self.checks[next].1;
                let mut hi = f32::NEG_INFINITY;
                for (wi, si) in w.iter().zip(spread.iter()) {
                    let b = wi + KERNEL_SUP as f32 * si;
                    if b > hi {
                        hi = b;
                    }
                }
                if hi <= cutoff {
                    return false;
                }
                next += 1;
            }
            let len = self.dim - j;
            let col = &self.cols[base..base + len];
            for (wt, c) in w[j..].iter_mut().zip(col.iter()) {
                *wt += c * zj;
            }
            base += len;
        }
        true
    }
}

/// Farthest-point ordering: start near the middle, then repeatedly take
/// the point farthest from everything chosen so far. Early factor
/// columns then condition the whole disk, which is what makes the
/// abort checkpoints bite.
fn maximin_order(offsets: &[(i32, i32)]) -> Vec<usize> {
    let k = offsets.len();
    if k == 0 {
        return Vec::new();
    }
    let start = offsets
        .iter()
        .enumerate()
        .min_by_key(|&(_, &(a, b))| i64::from(a * a + b * b))
        .map(|(i, _)| i)
        .expect("nonempty template");
    let mut order = Vec::with_capacity(k);
    let mut nearest = vec![i64::MAX; k];
    let mut taken = vec![false; k];
    let mut current = start;
    for _ in 0..k {
        order.push(current);
        taken[current] = true;
        let (cx, cy) = offsets[current];
        let mut far = -1i64;
        let mut pick = current;
        for (i, &(x, y)) in offsets.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let dx = i64::from(x - cx);
            let dy = i64::from(y - cy);
            let d = dx * dx + dy * dy;
            if d < nearest[i] {
                nearest[i] = d;
            }
            if nearest[i] > far {
                far = nearest[i];
                pick = i;
            }
        }
        current = pick;
    }
    order
}

/// Diagnostic for the factorization failure path: smallest eigenvalue by
/// power iteration on the Gershgorin-shifted matrix. Accuracy of a few
/// percent is plenty for an error message.
fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows();
    let shift = m
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    // v0 with alternating signs avoids starting orthogonal to the
    // extreme eigenvector of these smooth correlation matrices
    let mut v = DVector::from_fn(dim, |i, _| if i % 2 == 0 { 1.0 } else { -0.7 });
    v /= v.norm();
    let mut top = 0.0;
    for _ in 0..200 {
        let mut w = m * &v;
        w = shift * &v - w;
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        w /= norm;
        top = (shift * &w - m * &w).dot(&w);
        v = w;
    }
    shift - top
}

/// Per-family sampler state built once per run and shared by replicates.
enum Profile {
    Smith {
        sigma2: f64,
        win_x: f64,
        win_y: f64,
        win_w: f64,
        win_h: f64,
        phi_max: f64,
    },
    /// Stationary Gaussian profiles on the full grid.
    Gaussian { chol: PackedChol },
    /// Disk-truncated Gaussian profiles: one template factor on the
    /// offsets within the truncation radius, centers snapped to the
    /// extended lattice.
    Template {
        chol: TemplateChol,
        offsets: Vec<(i32, i32)>,
        pad: i32,
        ext: i32,
        /// exact margin normalization: lattice size * sqrt(2pi) / template size
        scale: f64,
    },
}

impl Profile {
    fn build(model: &MaxStable, grid: &Grid) -> Result<Profile> {
        match model {
            MaxStable::Smith { variance } => {
                let sigma = variance.sqrt();
                let pad = 4.0 * sigma;
                let lo_x = grid.x(0) - pad;
                let lo_y = grid.y(0) - pad;
                let hi_x = grid.x(grid.n - 1) + pad;
                let hi_y = grid.y(grid.n - 1) + pad;
                Ok(Profile::Smith {
                    sigma2: *variance,
                    win_x: lo_x,
                    win_y: lo_y,
                    win_w: hi_x - lo_x,
                    win_h: hi_y - lo_y,
                    phi_max: 1.0 / (2.0 * std::f64::consts::PI * variance),
                })
            }
            MaxStable::ExtremalGaussian { correlation } => {
                let n = grid.n;
                let mut corr = DMatrix::zeros(grid.len(), grid.len());
                for a in 0..grid.len() {
                    let (ai, aj) = (a / n, a % n);
                    for b in a..grid.len() {
                        let (bi, bj) = (b / n, b % n);
                        let dx = grid.x(aj) - grid.x(bj);
                        let dy = grid.y(ai) - grid.y(bi);
                        let rho = correlation.value(dx.hypot(dy));
                        corr[(a, b)] = rho;
                        corr[(b, a)] = rho;
                    }
                }
                Ok(Profile::Gaussian {
                    chol: PackedChol::from_correlation(&corr)?,
                })
            }
            MaxStable::Teg {
                correlation,
                radius,
            } => {
                let pad = (radius / grid.delta).floor() as i32;
                let mut offsets = Vec::new();
                for di in -pad..=pad {
                    for dj in -pad..=pad {
                        let d2 = (di * di + dj * dj) as f64;
                        if d2.sqrt() * grid.delta <= *radius {
                            offsets.push((di, dj));
                        }
                    }
                }
                let order = maximin_order(&offsets);
                let offsets: Vec<(i32, i32)> = order.into_iter().map(|i| offsets[i]).collect();
                let nt = offsets.len();
                let mut corr = DMatrix::zeros(nt, nt);
                for (a, &(ai, aj)) in offsets.iter().enumerate() {
                    for (b, &(bi, bj)) in offsets.iter().enumerate().skip(a) {
                        let dx = (ai - bi) as f64 * grid.delta;
                        let dy = (aj - bj) as f64 * grid.delta;
                        let rho = correlation.value(dx.hypot(dy));
                        corr[(a, b)] = rho;
                        corr[(b, a)] = rho;
                    }
                }
                let ext = grid.n as i32 + 2 * pad;
                let lattice = (ext as f64) * (ext as f64);
                Ok(Profile::Template {
                    chol: TemplateChol::from_correlation(&corr)?,
                    offsets,
                    pad,
                    ext,
                    scale: lattice * SQRT_2PI / nt as f64,
                })
            }
        }
    }

    fn sample(&self, grid: &Grid, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        match self {
            Profile::Smith {
                sigma2,
                win_x,
                win_y,
                win_w,
                win_h,
                phi_max,
            } => {
                let npts = grid.len();
                let mut field = vec![0.0; npts];
                let area = win_w * win_h;
                let mut gamma = 0.0;
                let mut floor = 0.0;
                let mut atoms = 0usize;
                loop {
                    gamma += rng.sample::<f64, _>(Exp1);
                    let xi = area / gamma;
                    let bound = xi * phi_max;
                    if floor > 0.0 && bound <= floor {
                        break;
                    }
                    atoms += 1;
                    if atoms > MAX_ATOMS {
                        return Err(Error::NoConvergence(
                            "storm center process exhausted its atom budget".into(),
                        ));
                    }
                    let cx = win_x + rng.random::<f64>() * win_w;
                    let cy = win_y + rng.random::<f64>() * win_h;
                    // beyond this squared distance the bell cannot beat
                    // the (stale, hence safe) floor
                    let d2_cut = if floor > 0.0 {
                        2.0 * sigma2 * (bound / floor).ln()
                    } else {
                        f64::INFINITY
                    };
                    for i in 0..grid.n {
                        let dy = grid.y(i) - cy;
                        let dy2 = dy * dy;
                        if dy2 > d2_cut {
                            continue;
                        }
                        for j in 0..grid.n {
                            let dx = grid.x(j) - cx;
                            let d2 = dx * dx + dy2;
                            if d2 > d2_cut {
                                continue;
                            }
                            let v = bound * (-d2 / (2.0 * sigma2)).exp();
                            let cell = &mut field[i * grid.n + j];
                            if v > *cell {
                                *cell = v;
                            }
                        }
                    }
                    if atoms % MIN_REFRESH == 0 {
                        floor = field.iter().copied().fold(f64::INFINITY, f64::min);
                        if !floor.is_finite() || floor <= 0.0 {
                            floor = 0.0;
                        }
                    }
                }
                Ok(field)
            }
            Profile::Gaussian { chol } => {
                let npts = grid.len();
                let mut field = vec![0.0; npts];
                let mut z = vec![0.0; npts];
                let mut w = vec![0.0; npts];
                let mut gamma = 0.0;
                let mut floor = 0.0;
                let mut atoms = 0usize;
                loop {
                    gamma += rng.sample::<f64, _>(Exp1);
                    let xi = SQRT_2PI / gamma;
                    if floor > 0.0 && xi * KERNEL_SUP <= floor {
                        break;
                    }
                    atoms += 1;
                    if atoms > MAX_ATOMS {
                        return Err(Error::NoConvergence(
                            "profile process exhausted its atom budget".into(),
                        ));
                    }
                    for zi in z.iter_mut() {
                        *zi = rng.sample::<f64, _>(StandardNormal);
                    }
                    chol.apply(&z, &mut w);
                    for (cell, wi) in field.iter_mut().zip(w.iter()) {
                        let v = xi * wi;
                        if v > *cell {
                            *cell = v;
                        }
                    }
                    if atoms % MIN_REFRESH == 0 {
                        floor = field.iter().copied().fold(f64::INFINITY, f64::min);
                        if !floor.is_finite() || floor <= 0.0 {
                            floor = 0.0;
                        }
                    }
                }
                Ok(field)
            }
            Profile::Template {
                chol,
                offsets,
                pad,
                ext,
                scale,
            } => {
                let n = grid.n as i32;
                let npts = grid.len();
                let mut field = vec![0.0; npts];
                let mut z = vec![0.0f32; chol.dim];
                let mut w = vec![0.0f32; chol.dim];
                let lattice = (*ext as u32) * (*ext as u32);
                let mut gamma = 0.0;
                let mut floor = 0.0;
                let mut atoms = 0usize;
                loop {
                    gamma += rng.sample::<f64, _>(Exp1);
                    let amp = scale / gamma;
                    if floor > 0.0 && amp * KERNEL_SUP <= floor {
                        break;
                    }
                    atoms += 1;
                    if atoms > MAX_ATOMS {
                        return Err(Error::NoConvergence(
                            "storm template process exhausted its atom budget".into(),
                        ));
                    }
                    if atoms % MIN_REFRESH == 0 {
                        floor = refresh_floor(&field);
                    }
                    let k = rng.random_range(0..lattice);
                    let ci = (k / *ext as u32) as i32 - pad;
                    let cj = (k % *ext as u32) as i32 - pad;
                    // min over the covered cells decides whether this
                    // atom can contribute at all
                    let mut local = f64::INFINITY;
                    let mut covered = false;
                    for &(di, dj) in offsets.iter() {
                        let gi = ci + di;
                        let gj = cj + dj;
                        if gi < 0 || gi >= n || gj < 0 || gj >= n {
                            continue;
                        }
                        covered = true;
                        let v = field[(gi * n + gj) as usize];
                        if v < local {
                            local = v;
                        }
                    }
                    if !covered || (local > 0.0 && amp * KERNEL_SUP <= local) {
                        continue;
                    }
                    for zi in z.iter_mut() {
                        *zi = rng.sample::<f32, _>(StandardNormal);
                    }
                    let cutoff = if local > 0.0 {
                        (local / amp) as f32
                    } else {
                        f32::NEG_INFINITY
                    };
                    if !chol.apply_bounded(&z, &mut w, cutoff) {
                        continue;
                    }
                    for (t, &(di, dj)) in offsets.iter().enumerate() {
                        let gi = ci + di;
                        let gj = cj + dj;
                        if gi < 0 || gi >= n || gj < 0 || gj >= n {
                            continue;
                        }
                        let v = amp * f64::from(w[t]);
                        let cell = &mut field[(gi * n + gj) as usize];
                        if v > *cell {
                            *cell = v;
                        }
                    }
                }
                Ok(field)
            }
        }
    }
}

fn refresh_floor(field: &[f64]) -> f64 {
    let m = field.iter().copied().fold(f64::INFINITY, f64::min);
    if m.is_finite() && m > 0.0 {
        m
    } else {
        0.0
    }
}

/// Samplers for the parts of a dependence model, built once per run.
struct PreparedModel {
    x: Profile,
    y: Option<Profile>,
}

impl PreparedModel {
    fn build(model: &Dependence, grid: &Grid) -> Result<PreparedModel> {
        match model {
            Dependence::MaxStable { model } | Dependence::Inverted { model } => {
                Ok(PreparedModel {
                    x: Profile::build(model, grid)?,
                    y: None,
                })
            }
            Dependence::MaxMixture { x_part, y_part, .. } => Ok(PreparedModel {
                x: Profile::build(x_part, grid)?,
                y: Some(Profile::build(y_part, grid)?),
            }),
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn invert_field(mut field: Vec<f64>) -> Result<Vec<f64>> {
    for v in field.iter_mut() {
        *v = inversion_transform(*v)?;
    }
    Ok(field)
}

/// One replicate of the dependence model; replicate j owns substreams
/// 2j (max-stable part) and 2j+1 (inverted part), so the a = 1 mixture
/// is bit-identical to its pure max-stable component.
fn sample_replicate(
    model: &Dependence,
    prep: &PreparedModel,
    grid: &Grid,
    seed: u64,
    j: usize,
) -> Result<Vec<f64>> {
    let stream = 2 * j as u64;
    match model {
        Dependence::MaxStable { .. } => prep.x.sample(grid, &mut stream_rng(seed, stream)),
        Dependence::Inverted { .. } => {
            invert_field(prep.x.sample(grid, &mut stream_rng(seed, stream))?)
        }
        Dependence::MaxMixture { a, .. } => {
            let y_prof = prep.y.as_ref().expect("mixture prepared with both parts");
            if *a == 1.0 {
                return prep.x.sample(grid, &mut stream_rng(seed, stream));
            }
            if *a == 0.0 {
                return invert_field(y_prof.sample(grid, &mut stream_rng(seed, stream + 1))?);
            }
            let x = prep.x.sample(grid, &mut stream_rng(seed, stream))?;
            let y = invert_field(y_prof.sample(grid, &mut stream_rng(seed, stream + 1))?)?;
            Ok(x
                .into_iter()
                .zip(y)
                .map(|(xv, yv)| (a * xv).max((1.0 - a) * yv))
                .collect())
        }
    }
}

/// Simulate `cfg.replicates` independent fields of the model.
pub fn simulate(model: &Dependence, cfg: &SimulationConfig) -> Result<Vec<FieldRealization>> {
    cfg.validate()?;
    model.validate()?;
    let grid = Grid::new(cfg.region, cfg.grid_n, cfg.convention);
    let prep = PreparedModel::build(model, &grid)?;
    let fields: Vec<Vec<f64>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|j| sample_replicate(model, &prep, &grid, cfg.seed, j))
        .collect::<Result<_>>()?;
    Ok(fields
        .into_iter()
        .map(|values| FieldRealization {
            grid_n: cfg.grid_n,
            region: cfg.region,
            convention: cfg.convention,
            values,
        })
        .collect())
}

/// Monte Carlo estimate of the risk measure and of the mean damage.
#[derive(Debug, Clone, Serialize)]
pub struct McRisk {
    /// Sample variance of the per-replicate damage averages: the Monte
    /// Carlo estimate of the risk measure.
    pub variance: f64,
    /// Jackknife standard error of `variance`; needs at least 3
    /// replicates.
    pub variance_se: Option<f64>,
    /// Mean of the damage averages; its expectation is Gamma(1 - nu).
    pub mean_damage: f64,
    pub mean_damage_se: f64,
    pub replicates: usize,
}

/// Estimate the risk measure by simulation: variance across replicates
/// of the grid-averaged damage, with a leave-one-out standard error.
pub fn mc_risk(model: &Dependence, cfg: &SimulationConfig, nu: DamageExponent) -> Result<McRisk> {
    cfg.validate()?;
    model.validate()?;
    let grid = Grid::new(cfg.region, cfg.grid_n, cfg.convention);
    let prep = PreparedModel::build(model, &grid)?;
    let damages: Vec<f64> = (0..cfg.replicates)
        .into_par_iter()
        .map(|j| {
            sample_replicate(model, &prep, &grid, cfg.seed, j)
                .map(|field| grid.damage_mean(&field, nu.value()))
        })
        .collect::<Result<_>>()?;

    let m = damages.len();
    let mean = damages.iter().sum::<f64>() / m as f64;
    let centered: Vec<f64> = damages.iter().map(|l| l - mean).collect();
    let ss = centered.iter().map(|d| d * d).sum::<f64>();
    let variance = ss / (m - 1) as f64;
    let mean_damage_se = (variance / m as f64).sqrt();

    let variance_se = if m >= 3 {
        // leave-one-out sample variances from the centered sums
        let t1: f64 = centered.iter().sum();
        let loo: Vec<f64> = centered
            .iter()
            .map(|d| {
                let mu = (t1 - d) / (m - 1) as f64;
                (ss - d * d - (m - 1) as f64 * mu * mu) / (m - 2) as f64
            })
            .collect();
        let loo_mean = loo.iter().sum::<f64>() / m as f64;
        let spread = loo
            .iter()
            .map(|v| (v - loo_mean) * (v - loo_mean))
            .sum::<f64>();
        Some(((m - 1) as f64 / m as f64 * spread).sqrt())
    } else {
        None
    };

    Ok(McRisk {
        variance,
        variance_se,
        mean_damage: mean,
        mean_damage_se,
        replicates: m,
    })
}

/// Empirical finite-level chi with a replicate-clustered standard error.
#[derive(Debug, Clone, Serialize)]
pub struct ChiEstimate {
    pub chi: f64,
    pub se: f64,
    /// pairs per replicate times replicates
    pub pairs: usize,
    pub distance: f64,
    pub level: f64,
}

/// Estimate chi(h, u) = 2 - log P(both <= q_u) / log u from simulated
/// fields, pairing lattice points at exact distance h. The margins are
/// unit Frechet by construction, so the threshold is the model quantile
/// rather than an empirical rank.
pub fn empirical_chi(fields: &[FieldRealization], h: f64, u: f64) -> Result<ChiEstimate> {
    let (grid, _) = homogeneous_grid(fields)?;
    if !(0.0 < u && u < 1.0) {
        return Err(Error::Domain(format!(
            "threshold level must lie strictly inside (0,1), got {u}"
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!(
            "pair distance must be positive and finite, got {h}"
        )));
    }
    let offsets = lattice_offsets(&grid, h)?;
    let anchors: Vec<(usize, usize, usize)> = pair_anchors(&grid, &offsets);
    let per_rep = anchors.len();
    let total = per_rep * fields.len();
    if total < 1000 {
        return Err(Error::Domain(format!(
            "only {total} pairs at distance {h}; at least 1000 are needed \
             for a usable estimate"
        )));
    }

    let q = -1.0 / u.ln();
    let rates: Vec<f64> = fields
        .iter()
        .map(|f| {
            let vals = f.values();
            let hits = anchors
                .iter()
                .filter(|&&(a, b, _)| vals[a] <= q && vals[b] <= q)
                .count();
            hits as f64 / per_rep as f64
        })
        .collect();
    let m = rates.len() as f64;
    let p = rates.iter().sum::<f64>() / m;
    if p == 0.0 {
        return Err(Error::Domain(format!(
            "no joint non-exceedances at level u = {u}; lower the level or \
             add replicates"
        )));
    }
    let var_p = rates.iter().map(|r| (r - p) * (r - p)).sum::<f64>() / (m * (m - 1.0));
    let chi = 2.0 - p.ln() / u.ln();
    let se = var_p.sqrt() / (p * (-u.ln()));
    Ok(ChiEstimate {
        chi,
        se,
        pairs: total,
        distance: h,
        level: u,
    })
}

/// All (index_a, index_b, offset_id) pairs of member lattice points
/// realizing the selected offsets.
fn pair_anchors(grid: &Grid, offsets: &[(i32, i32)]) -> Vec<(usize, usize, usize)> {
    let n = grid.n as i32;
    let mut anchors = Vec::new();
    for (oid, &(di, dj)) in offsets.iter().enumerate() {
        for i in 0..n {
            let bi = i + di;
            if bi < 0 || bi >= n {
                continue;
            }
            for j in 0..n {
                let bj = j + dj;
                if bj < 0 || bj >= n {
                    continue;
                }
                let a = (i * n + j) as usize;
                let b = (bi * n + bj) as usize;
                if grid.member[a] && grid.member[b] {
                    anchors.push((a, b, oid));
                }
            }
        }
    }
    anchors
}

/// Distinct lattice offsets (di, dj), di >= 0, whose physical length
/// matches h; each unordered pair is counted once.
fn lattice_offsets(grid: &Grid, h: f64) -> Result<Vec<(i32, i32)>> {
    let n = grid.n as i32;
    let tol = 1e-7 * h.max(grid.delta);
    let mut offsets = Vec::new();
    for di in 0..n {
        for dj in -(n - 1)..n {
            if di == 0 && dj <= 0 {
                continue;
            }
            let d = ((di * di + dj * dj) as f64).sqrt() * grid.delta;
            if (d - h).abs() <= tol {
                offsets.push((di, dj));
            }
        }
    }
    if offsets.is_empty() {
        let spacing = grid.delta;
        return Err(Error::Domain(format!(
            "no lattice pairs sit at distance {h}; the grid spacing is \
             {spacing:.6}, so only multiples of lattice norms are realizable"
        )));
    }
    Ok(offsets)
}

fn homogeneous_grid(fields: &[FieldRealization]) -> Result<(Grid, usize)> {
    let first = fields
        .first()
        .ok_or_else(|| Error::Domain("no realizations supplied".into()))?;
    for f in fields {
        if f.grid_n != first.grid_n
            || f.region != first.region
            || f.convention != first.convention
        {
            return Err(Error::Domain(
                "realizations mix different grids or regions".into(),
            ));
        }
    }
    Ok((
        Grid::new(first.region, first.grid_n, first.convention),
        fields.len(),
    ))
}

/// Kolmogorov-Smirnov check of the unit Frechet margin.
#[derive(Debug, Clone, Serialize)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    pub samples: usize,
}

/// Margin test on one lattice point per replicate (rotating through the
/// member points), so the sample is genuinely independent; pooling all
/// grid values would feed spatially dependent data to a test calibrated
/// for independence.
pub fn margin_ks(fields: &[FieldRealization]) -> Result<KsTest> {
    let (grid, m) = homogeneous_grid(fields)?;
    let members: Vec<usize> = (0..grid.len()).filter(|&i| grid.member[i]).collect();
    let mut probs: Vec<f64> = fields
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let idx = members[(j * 7919) % members.len()];
            (-1.0 / f.values()[idx]).exp()
        })
        .collect();
    probs.sort_by(|a, b| a.partial_cmp(b).expect("margin probabilities are finite"));
    let nf = m as f64;
    let mut d = 0.0_f64;
    for (i, p) in probs.iter().enumerate() {
        d = d.max((i + 1) as f64 / nf - p).max(p - i as f64 / nf);
    }
    Ok(KsTest {
        statistic: d,
        p_value: ks_p_value(d, m),
        samples: m,
    })
}

/// Asymptotic Kolmogorov distribution with the small-sample correction
/// lambda = (sqrt(n) + 0.12 + 0.11/sqrt(n)) d.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        p += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * p).clamp(0.0, 1.0)
}

const FIELD_MAGIC: &[u8; 4] = b"SRF1";

/// Flat binary export: a 16-byte header (magic, points per side as
/// little-endian u32, region scale as little-endian f64) followed by
/// every replicate's values row-major as little-endian f64.
pub fn write_fields_binary<W: std::io::Write>(
    out: &mut W,
    fields: &[FieldRealization],
) -> Result<()> {
    let (_, _) = homogeneous_grid(fields)?;
    let first = &fields[0];
    let scale = match first.region {
        Region::Square { side } => side,
        Region::Disk { radius } => radius,
    };
    out.write_all(FIELD_MAGIC)?;
    out.write_all(&(first.grid_n as u32).to_le_bytes())?;
    out.write_all(&scale.to_le_bytes())?;
    for f in fields {
        for v in f.values() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// CSV export with one row per lattice point per replicate.
pub fn write_fields_csv<W: std::io::Write>(
    out: &mut W,
    fields: &[FieldRealization],
) -> Result<()> {
    let (grid, _) = homogeneous_grid(fields)?;
    writeln!(out, "replicate,row,col,x,y,value")?;
    for (r, f) in fields.iter().enumerate() {
        for i in 0..grid.n {
            for j in 0..grid.n {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r,
                    i,
                    j,
                    grid.x(j),
                    grid.y(i),
                    f.value(i, j)
                )?;
            }
        }
    }
    Ok(())
}
