//! Discrete space-time fields on uniform rectangular grids, together with
//! the finite-difference calculus and the cylinder geometry every estimate
//! is localized on. Balls and cylinders are index masks on the box grid: a
//! node belongs to B_rho(x0) iff |x - x0| < rho.

use std::io::{Read as _, Write as _};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::pow;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"DGFL";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const MAX_AXES: usize = 4;

/// Uniform space-time grid over a box domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    /// physical box, one (a, b) interval per axis
    pub extent: Vec<(f64, f64)>,
    /// nodes per axis (>= 3)
    pub nx: Vec<usize>,
    pub dt: f64,
    pub nt: usize,
    pub t0: f64,
}

impl Grid {
    pub fn new(
        extent: Vec<(f64, f64)>,
        nx: Vec<usize>,
        dt: f64,
        nt: usize,
        t0: f64,
    ) -> Result<Arc<Grid>> {
        let n = extent.len();
        if !(1..=MAX_AXES).contains(&n) {
            return Err(Error::Geometry(format!("dimension {n} out of range")));
        }
        if nx.len() != n {
            return Err(Error::Geometry("nx length must match extent".into()));
        }
        if nx.iter().any(|&m| m < 3) {
            return Err(Error::Geometry("need at least 3 nodes per axis".into()));
        }
        if extent.iter().any(|&(a, b)| !(b > a)) {
            return Err(Error::Geometry("empty extent interval".into()));
        }
        if !(dt > 0.0) || nt < 1 {
            return Err(Error::Geometry("need dt > 0 and nt >= 1".into()));
        }
        Ok(Arc::new(Grid {
            n,
            extent,
            nx,
            dt,
            nt,
            t0,
        }))
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let (a, b) = self.extent[axis];
        (b - a) / (self.nx[axis] - 1) as f64
    }

    pub fn spatial_len(&self) -> usize {
        self.nx.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.n).map(|s| self.spacing(s)).product()
    }

    /// time of level `it`; levels run t0, t0 + dt, ...
    pub fn time(&self, it: usize) -> f64 {
        self.t0 + it as f64 * self.dt
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.nx[axis + 1..].iter().product()
    }

    pub fn coords(&self, spatial: usize) -> Vec<f64> {
        let mut idx = spatial;
        let mut x = vec![0.0; self.n];
        for s in 0..self.n {
            let stride = self.stride(s);
            let i = idx / stride;
            idx %= stride;
            x[s] = self.extent[s].0 + i as f64 * self.spacing(s);
        }
        x
    }

    pub fn multi_index(&self, spatial: usize) -> Vec<usize> {
        let mut idx = spatial;
        let mut mi = vec![0; self.n];
        for s in 0..self.n {
            let stride = self.stride(s);
            mi[s] = idx / stride;
            idx %= stride;
        }
        mi
    }

    pub fn flat_index(&self, mi: &[usize]) -> usize {
        mi.iter()
            .zip(0..self.n)
            .map(|(&i, s)| i * self.stride(s))
            .sum()
    }

    /// Converts a physical offset along `axis` to a whole number of cells;
    /// errors unless `h` is an integer multiple of the spacing (so that the
    /// shift-difference is exact, without interpolation).
    pub fn cells_for_offset(&self, axis: usize, h: f64) -> Result<i64> {
        let hs = self.spacing(axis);
        let cells = (h / hs).round();
        if (h - cells * hs).abs() > 1e-9 * hs {
            return Err(Error::Parameter(format!(
                "offset {h} is not a multiple of the axis spacing {hs}"
            )));
        }
        let c = cells as i64;
        if c.unsigned_abs() as usize >= self.nx[axis] {
            return Err(Error::Geometry(format!(
                "offset {h} exceeds the grid width along axis {axis}"
            )));
        }
        Ok(c)
    }

    /// True if the node at time level `it` belongs to the backward cylinder.
    fn in_cylinder(&self, spatial: usize, it: usize, cyl: &Cylinder) -> bool {
        let t = self.time(it);
        if !(t > cyl.t0() - cyl.radius * cyl.radius && t <= cyl.t0() + 1e-12 * self.dt) {
            return false;
        }
        let x = self.coords(spatial);
        let r2: f64 = x
            .iter()
            .zip(&cyl.center.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        r2 < cyl.radius * cyl.radius
    }
}

/// Backward parabolic cylinder B_rho(x0) x (t0 - rho^2, t0].
#[derive(Debug, Clone, PartialEq)]
pub struct Cylinder {
    /// vertex z0 = (x0, t0)
    pub center: (Vec<f64>, f64),
    pub radius: f64,
}

impl Cylinder {
    pub fn new(x0: Vec<f64>, t0: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Geometry(format!("radius must be > 0, got {radius}")));
        }
        Ok(Cylinder {
            center: (x0, t0),
            radius,
        })
    }

    pub fn t0(&self) -> f64 {
        self.center.1
    }

    /// Same vertex, scaled radius.
    pub fn scaled(&self, factor: f64) -> Cylinder {
        Cylinder {
            center: self.center.clone(),
            radius: self.radius * factor,
        }
    }

    /// Checks the index mask is nonempty and the ball and time window stay
    /// inside the grid box.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if self.center.0.len() != grid.n {
            return Err(Error::Geometry("cylinder center dimension mismatch".into()));
        }
        for s in 0..grid.n {
            let (a, b) = grid.extent[s];
            if self.center.0[s] - self.radius < a - 1e-12 || self.center.0[s] + self.radius > b + 1e-12
            {
                return Err(Error::Geometry(format!(
                    "ball of radius {} at axis {s} leaves the box [{a}, {b}]",
                    self.radius
                )));
            }
        }
        let t_lo = self.t0() - self.radius * self.radius;
        if t_lo < grid.t0 - 1e-12 || self.t0() > grid.time(grid.nt - 1) + 1e-12 {
            return Err(Error::Geometry("cylinder time window leaves the grid".into()));
        }
        let count = (0..grid.nt)
            .flat_map(|it| (0..grid.spatial_len()).map(move |i| (i, it)))
            .filter(|&(i, it)| grid.in_cylinder(i, it, self))
            .count();
        if count == 0 {
            return Err(Error::Geometry("cylinder mask is empty on this grid".into()));
        }
        Ok(())
    }
}

/// Scalar space-time field; values laid out time-major, immutable after
/// construction in normal use.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

/// Vector space-time field with one scalar lane per spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Arc<Grid>,
    comps: Vec<Vec<f64>>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let len = grid.nt * grid.spatial_len();
        ScalarField {
            grid,
            values: vec![0.0; len],
        }
    }

    pub fn constant(grid: Arc<Grid>, v: f64) -> Self {
        let len = grid.nt * grid.spatial_len();
        ScalarField {
            grid,
            values: vec![v; len],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let sp = grid.spatial_len();
        let mut values = Vec::with_capacity(grid.nt * sp);
        for it in 0..grid.nt {
            let t = grid.time(it);
            for i in 0..sp {
                values.push(f(&grid.coords(i), t));
            }
        }
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nt * grid.spatial_len() {
            return Err(Error::InvalidInput("value count does not match grid".into()));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, it: usize, spatial: usize) -> f64 {
        self.values[it * self.grid.spatial_len() + spatial]
    }

    pub fn set(&mut self, it: usize, spatial: usize, v: f64) {
        let sp = self.grid.spatial_len();
        self.values[it * sp + spatial] = v;
    }

    pub fn slice(&self, it: usize) -> &[f64] {
        let sp = self.grid.spatial_len();
        &self.values[it * sp..(it + 1) * sp]
    }

    pub fn set_slice(&mut self, it: usize, data: &[f64]) {
        let sp = self.grid.spatial_len();
        self.values[it * sp..(it + 1) * sp].copy_from_slice(data);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Shift-difference tau_{s,h} F(x) = F(x + h e_s) - F(x); nodes whose
    /// shifted neighbour leaves the grid are set to zero, so sums against
    /// compactly supported fields stay exact.
    pub fn tau_h(&self, axis: usize, h: f64) -> Result<ScalarField> {
        let cells = self.grid.cells_for_offset(axis, h)?;
        let mut out = ScalarField::zeros(self.grid.clone());
        let sp = self.grid.spatial_len();
        let nx = self.grid.nx[axis] as i64;
        let stride = self.grid.stride(axis) as i64;
        for it in 0..self.grid.nt {
            for i in 0..sp {
                let mi = self.grid.multi_index(i);
                let j = mi[axis] as i64 + cells;
                if j < 0 || j >= nx {
                    continue;
                }
                let shifted = (i as i64 + cells * stride) as usize;
                out.set(it, i, self.get(it, shifted) - self.get(it, i));
            }
        }
        Ok(out)
    }

    /// Difference quotient Delta_{s,h} = tau_{s,h} / h.
    pub fn delta_h(&self, axis: usize, h: f64) -> Result<ScalarField> {
        let tau = self.tau_h(axis, h)?;
        Ok(tau.map(|v| v / h))
    }

    /// Centered second-order spatial gradient (one-sided second order on the
    /// box faces), slice by slice.
    pub fn gradient(&self) -> VectorField {
        let grid = self.grid.clone();
        let sp = grid.spatial_len();
        let mut comps = vec![vec![0.0; grid.nt * sp]; grid.n];
        for it in 0..grid.nt {
            for i in 0..sp {
                let mi = grid.multi_index(i);
                for s in 0..grid.n {
                    let hs = grid.spacing(s);
                    let stride = grid.stride(s);
                    let m = grid.nx[s];
                    let k = mi[s];
                    let v = if k > 0 && k + 1 < m {
                        (self.get(it, i + stride) - self.get(it, i - stride)) / (2.0 * hs)
                    } else if k == 0 {
                        (-3.0 * self.get(it, i) + 4.0 * self.get(it, i + stride)
                            - self.get(it, i + 2 * stride))
                            / (2.0 * hs)
                    } else {
                        (3.0 * self.get(it, i) - 4.0 * self.get(it, i - stride)
                            + self.get(it, i - 2 * stride))
                            / (2.0 * hs)
                    };
                    comps[s][it * sp + i] = v;
                }
            }
        }
        VectorField { grid, comps }
    }

    /// Space-time integral of |F|^q over the cylinder mask (node weight =
    /// cell volume times dt).
    pub fn lq_integral(&self, q: f64, region: &Cylinder) -> Result<f64> {
        if q < 1.0 {
            return Err(Error::Parameter(format!("need q >= 1, got {q}")));
        }
        region.validate(&self.grid)?;
        let w = self.grid.cell_volume() * self.grid.dt;
        let sp = self.grid.spatial_len();
        let mut acc = 0.0;
        for it in 0..self.grid.nt {
            for i in 0..sp {
                if self.grid.in_cylinder(i, it, region) {
                    acc += pow(self.get(it, i).abs(), q) * w;
                }
            }
        }
        Ok(acc)
    }

    /// (int |F|^q dz)^{1/q} over the cylinder mask.
    pub fn lq_norm(&self, q: f64, region: &Cylinder) -> Result<f64> {
        Ok(pow(self.lq_integral(q, region)?, 1.0 / q))
    }

    /// Sup over the cylinder's time levels of the slice integral
    /// int_{B_rho} |F(x, s)|^q dx.
    pub fn sup_slice_integral(&self, q: f64, region: &Cylinder) -> Result<f64> {
        if q < 1.0 {
            return Err(Error::Parameter(format!("need q >= 1, got {q}")));
        }
        region.validate(&self.grid)?;
        let w = self.grid.cell_volume();
        let sp = self.grid.spatial_len();
        let mut sup = 0.0_f64;
        for it in 0..self.grid.nt {
            let mut acc = 0.0;
            let mut any = false;
            for i in 0..sp {
                if self.grid.in_cylinder(i, it, region) {
                    acc += pow(self.get(it, i).abs(), q) * w;
                    any = true;
                }
            }
            if any {
                sup = sup.max(acc);
            }
        }
        Ok(sup)
    }

    /// Sup-slice integral raised to 1/q.
    pub fn sup_slice_norm(&self, q: f64, region: &Cylinder) -> Result<f64> {
        Ok(pow(self.sup_slice_integral(q, region)?, 1.0 / q))
    }

    /// Max over nodes and axes of |forward difference| / spacing; the
    /// discrete Lipschitz constant in lattice directions.
    pub fn max_lattice_slope(&self) -> f64 {
        let sp = self.grid.spatial_len();
        let mut worst = 0.0_f64;
        for it in 0..self.grid.nt {
            for i in 0..sp {
                let mi = self.grid.multi_index(i);
                for s in 0..self.grid.n {
                    if mi[s] + 1 < self.grid.nx[s] {
                        let stride = self.grid.stride(s);
                        let d = (self.get(it, i + stride) - self.get(it, i)).abs()
                            / self.grid.spacing(s);
                        worst = worst.max(d);
                    }
                }
            }
        }
        worst
    }

    /// Measured ratio of the difference-quotient bound
    /// int_{B_rho} |tau_h F|^p dx <= c |h|^p int_{B_R} |DF|^p dx,
    /// aggregated over all time levels (dt cancels in the ratio).
    pub fn diffquot_gradient_bound_check(
        &self,
        p: f64,
        rho: f64,
        big_r: f64,
        x0: &[f64],
        axis: usize,
        h: f64,
    ) -> Result<f64> {
        if !(rho < big_r) {
            return Err(Error::Geometry("need rho < R".into()));
        }
        let t_top = self.grid.time(self.grid.nt - 1);
        let inner = Cylinder::new(
            x0.to_vec(),
            t_top,
            rho.min(((t_top - self.grid.t0).max(self.grid.dt)).sqrt()),
        )?;
        let tau = self.tau_h(axis, h)?;
        let grad_mag = self.gradient().magnitude();
        // spatial sums per slice; same weights top and bottom
        let w = self.grid.cell_volume();
        let sp = self.grid.spatial_len();
        let mut num = 0.0;
        let mut den = 0.0;
        for it in 0..self.grid.nt {
            for i in 0..sp {
                let x = self.grid.coords(i);
                let r2: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum();
                if r2 < rho * rho {
                    num += pow(tau.get(it, i).abs(), p) * w;
                }
                if r2 < big_r * big_r {
                    den += pow(grad_mag.get(it, i).abs(), p) * w;
                }
            }
        }
        let _ = inner;
        let den = pow(h.abs(), p) * den;
        if den == 0.0 {
            return Ok(0.0);
        }
        Ok(num / den)
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        let mut header = [0u8; 32];
        header[0..4].copy_from_slice(&SNAPSHOT_MAGIC);
        header[4..8].copy_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        header[8..12].copy_from_slice(&(self.grid.n as u32).to_le_bytes());
        header[12..16].copy_from_slice(&(self.grid.nt as u32).to_le_bytes());
        for s in 0..MAX_AXES {
            let v = if s < self.grid.n {
                self.grid.nx[s] as u32
            } else {
                0
            };
            header[16 + 4 * s..20 + 4 * s].copy_from_slice(&v.to_le_bytes());
        }
        file.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        file.write_all(&buf)?;
        Ok(())
    }

    /// Reads a snapshot and attaches it to `grid`, checking the recorded
    /// shape against the grid.
    pub fn read_snapshot(path: &Path, grid: Arc<Grid>) -> Result<ScalarField> {
        let mut file = std::fs::File::open(path)?;
        let mut header = [0u8; 32];
        file.read_exact(&mut header)?;
        if header[0..4] != SNAPSHOT_MAGIC {
            return Err(Error::InvalidInput("bad snapshot magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != SNAPSHOT_VERSION {
            return Err(Error::InvalidInput(format!("unsupported snapshot version {version}")));
        }
        let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let nt = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let mut nx = Vec::new();
        for s in 0..MAX_AXES {
            let v = u32::from_le_bytes(header[16 + 4 * s..20 + 4 * s].try_into().unwrap());
            if v > 0 {
                nx.push(v as usize);
            }
        }
        if n != grid.n || nt != grid.nt || nx != grid.nx {
            return Err(Error::InvalidInput("snapshot shape does not match grid".into()));
        }
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;
        let count = grid.nt * grid.spatial_len();
        if raw.len() != count * 8 {
            return Err(Error::InvalidInput("snapshot payload truncated".into()));
        }
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        ScalarField::from_values(grid, values)
    }

    /// CSV export for plotting: t, x_0..x_{n-1}, value.
    pub fn write_csv(&self, out: &mut impl std::io::Write) -> Result<()> {
        write!(out, "t")?;
        for s in 0..self.grid.n {
            write!(out, ",x{s}")?;
        }
        writeln!(out, ",value")?;
        let sp = self.grid.spatial_len();
        for it in 0..self.grid.nt {
            let t = self.grid.time(it);
            for i in 0..sp {
                write!(out, "{t}")?;
                for x in self.grid.coords(i) {
                    write!(out, ",{x}")?;
                }
                writeln!(out, ",{}", self.get(it, i))?;
            }
        }
        Ok(())
    }
}

impl VectorField {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let len = grid.nt * grid.spatial_len();
        let n = grid.n;
        VectorField {
            grid,
            comps: vec![vec![0.0; len]; n],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn get(&self, it: usize, spatial: usize) -> Vec<f64> {
        let idx = it * self.grid.spatial_len() + spatial;
        self.comps.iter().map(|lane| lane[idx]).collect()
    }

    pub fn set(&mut self, it: usize, spatial: usize, v: &[f64]) {
        let idx = it * self.grid.spatial_len() + spatial;
        for (lane, &x) in self.comps.iter_mut().zip(v) {
            lane[idx] = x;
        }
    }

    /// Pointwise Euclidean magnitude as a scalar field.
    pub fn magnitude(&self) -> ScalarField {
        let len = self.grid.nt * self.grid.spatial_len();
        let mut values = vec![0.0; len];
        for lane in &self.comps {
            for (v, x) in values.iter_mut().zip(lane) {
                *v += x * x;
            }
        }
        for v in values.iter_mut() {
            *v = v.sqrt();
        }
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Pointwise map of the full vector to a scalar.
    pub fn map_to_scalar(&self, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let sp = self.grid.spatial_len();
        let mut values = vec![0.0; self.grid.nt * sp];
        let mut v = vec![0.0; self.grid.n];
        for it in 0..self.grid.nt {
            for i in 0..sp {
                let idx = it * sp + i;
                for (c, lane) in self.comps.iter().enumerate() {
                    v[c] = lane[idx];
                }
                values[idx] = f(&v);
            }
        }
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Centered divergence, the negative discrete adjoint of the gradient
    /// for fields supported away from the box faces.
    pub fn divergence(&self) -> ScalarField {
        let grid = self.grid.clone();
        let sp = grid.spatial_len();
        let mut values = vec![0.0; grid.nt * sp];
        for it in 0..grid.nt {
            for i in 0..sp {
                let mi = grid.multi_index(i);
                let mut acc = 0.0;
                for s in 0..grid.n {
                    let hs = grid.spacing(s);
                    let stride = grid.stride(s);
                    let m = grid.nx[s];
                    let k = mi[s];
                    let lane = &self.comps[s];
                    let at = |j: usize| lane[it * sp + j];
                    acc += if k > 0 && k + 1 < m {
                        (at(i + stride) - at(i - stride)) / (2.0 * hs)
                    } else if k == 0 {
                        (-3.0 * at(i) + 4.0 * at(i + stride) - at(i + 2 * stride)) / (2.0 * hs)
                    } else {
                        (3.0 * at(i) - 4.0 * at(i - stride) + at(i - 2 * stride)) / (2.0 * hs)
                    };
                }
                values[it * sp + i] = acc;
            }
        }
        ScalarField { grid, values }
    }

    pub fn lq_integral(&self, q: f64, region: &Cylinder) -> Result<f64> {
        self.magnitude().lq_integral(q, region)
    }
}

/// |lhs - rhs| of the discrete summation-by-parts identity
/// sum F Delta_h G = - sum G Delta_{-h} F; exact for plain sums when F or G
/// has compact support in the inner domain.
pub fn parts_identity_check(f: &ScalarField, g: &ScalarField, axis: usize, h: f64) -> Result<f64> {
    let dg = g.delta_h(axis, h)?;
    let df = f.delta_h(axis, -h)?;
    let lhs: f64 = f.values().iter().zip(dg.values()).map(|(a, b)| a * b).sum();
    let rhs: f64 = g.values().iter().zip(df.values()).map(|(a, b)| a * b).sum();
    Ok((lhs + rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid2(nx: usize, nt: usize) -> Arc<Grid> {
        Grid::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![nx, nx], 0.01, nt, 0.0).unwrap()
    }

    #[test]
    fn tau_of_constant_is_zero() {
        let g = grid2(9, 2);
        let h = g.spacing(0);
        let f = ScalarField::constant(g, 3.5);
        let t = f.tau_h(0, h).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tau_of_linear_is_slope_times_h() {
        let g = grid2(9, 1);
        let h = g.spacing(1);
        let f = ScalarField::from_fn(g.clone(), |x, _| 2.0 * x[0] - 3.0 * x[1]);
        let t = f.tau_h(1, h).unwrap();
        let sp = g.spatial_len();
        for i in 0..sp {
            let mi = g.multi_index(i);
            if mi[1] + 1 < g.nx[1] {
                assert!((t.get(0, i) - (-3.0 * h)).abs() < 1e-13);
            } else {
                assert_eq!(t.get(0, i), 0.0);
            }
        }
    }

    #[test]
    fn tau_rejects_non_multiple_offsets() {
        let g = grid2(9, 1);
        let f = ScalarField::zeros(g.clone());
        assert!(f.tau_h(0, 0.37 * g.spacing(0)).is_err());
        assert!(f.tau_h(0, 20.0).is_err());
    }

    #[test]
    fn product_rule_exact() {
        // Delta_h(FG) = F(x+h e_s) Delta_h G + G Delta_h F, to rounding
        let g = grid2(9, 1);
        let h = g.spacing(0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = ScalarField::from_values(
            g.clone(),
            (0..g.spatial_len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let q = ScalarField::from_values(
            g.clone(),
            (0..g.spatial_len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let prod = ScalarField::from_values(
            g.clone(),
            f.values().iter().zip(q.values()).map(|(a, b)| a * b).collect(),
        )
        .unwrap();
        let lhs = prod.delta_h(0, h).unwrap();
        let dq = q.delta_h(0, h).unwrap();
        let df = f.delta_h(0, h).unwrap();
        let stride = g.stride(0);
        for i in 0..g.spatial_len() {
            let mi = g.multi_index(i);
            if mi[0] + 1 >= g.nx[0] {
                continue;
            }
            let rhs = f.get(0, i + stride) * dq.get(0, i) + q.get(0, i) * df.get(0, i);
            assert!((lhs.get(0, i) - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn parts_identity_exact_for_compact_support() {
        let g = grid2(17, 1);
        let h = g.spacing(0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = ScalarField::from_values(
            g.clone(),
            (0..g.spatial_len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        // G supported strictly inside
        let gfield = ScalarField::from_fn(g.clone(), |x, _| {
            let d0 = (x[0] - 0.5).abs();
            let d1 = (x[1] - 0.5).abs();
            if d0 < 0.3 && d1 < 0.3 {
                (0.3 - d0) * (0.3 - d1)
            } else {
                0.0
            }
        });
        let err = parts_identity_check(&f, &gfield, 0, h).unwrap();
        assert!(err < 1e-12, "err = {err}");
        // G identically zero
        let zero = ScalarField::zeros(g);
        assert_eq!(parts_identity_check(&f, &zero, 0, h).unwrap(), 0.0);
    }

    #[test]
    fn gradient_exact_on_linear() {
        let g = grid2(9, 1);
        let u = ScalarField::from_fn(g.clone(), |x, _| 1.5 * x[0] - 0.5 * x[1] + 2.0);
        let du = u.gradient();
        for i in 0..g.spatial_len() {
            let v = du.get(0, i);
            assert!((v[0] - 1.5).abs() < 1e-12);
            assert!((v[1] + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_of_constant_vanishes() {
        let g = grid2(9, 1);
        let mut w = VectorField::zeros(g.clone());
        for i in 0..g.spatial_len() {
            w.set(0, i, &[2.0, -1.0]);
        }
        let d = w.divergence();
        assert!(d.values().iter().all(|&v| v.abs() < 1e-13));
    }

    #[test]
    fn gradient_divergence_adjoint_on_compact_support() {
        let g = grid2(17, 1);
        let bump = |x: &[f64]| {
            let d0: f64 = (x[0] - 0.5).abs();
            let d1: f64 = (x[1] - 0.5).abs();
            if d0 < 0.25 && d1 < 0.25 {
                (0.25 - d0).powi(2) * (0.25 - d1).powi(2)
            } else {
                0.0
            }
        };
        let u = ScalarField::from_fn(g.clone(), |x, _| bump(x));
        let mut w = VectorField::zeros(g.clone());
        for i in 0..g.spatial_len() {
            let x = g.coords(i);
            w.set(0, i, &[bump(&x) * x[0].sin(), bump(&x) * (1.0 + x[1])]);
        }
        let du = u.gradient();
        let divw = w.divergence();
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for i in 0..g.spatial_len() {
            let gv = du.get(0, i);
            let wv = w.get(0, i);
            lhs += gv[0] * wv[0] + gv[1] * wv[1];
            rhs -= u.get(0, i) * divw.get(0, i);
        }
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0), "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn lq_integral_of_one_is_mask_measure() {
        let g = Grid::new(vec![(-1.0, 1.0), (-1.0, 1.0)], vec![33, 33], 0.01, 30, 0.0).unwrap();
        let f = ScalarField::constant(g.clone(), 1.0);
        let cyl = Cylinder::new(vec![0.0, 0.0], g.time(g.nt - 1), 0.5).unwrap();
        let m = f.lq_integral(2.0, &cyl).unwrap();
        // pi rho^2 * rho^2 in space-time measure, roughly
        let expect = std::f64::consts::PI * 0.25 * 0.25;
        assert!((m - expect).abs() / expect < 0.15, "measure {m} vs {expect}");
        // scaling homogeneity of the norm
        let f3 = f.map(|v| 3.0 * v);
        let a = f3.lq_norm(2.0, &cyl).unwrap();
        let b = f.lq_norm(2.0, &cyl).unwrap();
        assert!((a - 3.0 * b).abs() < 1e-12);
    }

    #[test]
    fn nested_cylinders_monotone() {
        let g = Grid::new(vec![(-1.0, 1.0), (-1.0, 1.0)], vec![25, 25], 0.005, 60, 0.0).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x, t| (x[0] + x[1]).cos() + t);
        let outer = Cylinder::new(vec![0.0, 0.0], g.time(g.nt - 1), 0.5).unwrap();
        let inner = outer.scaled(0.5);
        let a = f.lq_integral(2.0, &inner).unwrap();
        let b = f.lq_integral(2.0, &outer).unwrap();
        assert!(a <= b);
    }

    #[test]
    fn snapshot_roundtrip() {
        let g = grid2(5, 3);
        let f = ScalarField::from_fn(g.clone(), |x, t| x[0] * 7.0 - x[1] + t);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.dgfl");
        f.write_snapshot(&path).unwrap();
        let back = ScalarField::read_snapshot(&path, g).unwrap();
        assert_eq!(f.values(), back.values());
    }

    #[test]
    fn snapshot_rejects_wrong_grid() {
        let g = grid2(5, 3);
        let f = ScalarField::zeros(g);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.dgfl");
        f.write_snapshot(&path).unwrap();
        let other = grid2(7, 3);
        assert!(ScalarField::read_snapshot(&path, other).is_err());
    }

    #[test]
    fn delta_h_converges_to_gradient_first_order() {
        // || Delta_h F - D_s F ||_{L^2, interior} shrinks at least linearly
        let g = Grid::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![65, 65], 0.1, 1, 0.0).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x, _| (2.0 * x[0]).sin() * (x[1] + 1.0).cos());
        let exact = |x: &[f64]| 2.0 * (2.0 * x[0]).cos() * (x[1] + 1.0).cos();
        let err = |cells: usize| {
            let h = cells as f64 * g.spacing(0);
            let d = f.delta_h(0, h).unwrap();
            let mut acc = 0.0;
            let mut count = 0;
            for i in 0..g.spatial_len() {
                let mi = g.multi_index(i);
                if mi[0] + cells < g.nx[0] {
                    let x = g.coords(i);
                    let e = d.get(0, i) - exact(&x);
                    acc += e * e;
                    count += 1;
                }
            }
            (acc / count as f64).sqrt()
        };
        let e4 = err(4);
        let e2 = err(2);
        let e1 = err(1);
        assert!(e2 < 0.6 * e4, "e4 {e4} e2 {e2}");
        assert!(e1 < 0.6 * e2, "e2 {e2} e1 {e1}");
    }

    #[test]
    fn tau_commutes_across_axes() {
        let g = grid2(9, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = ScalarField::from_values(
            g.clone(),
            (0..g.spatial_len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let h0 = g.spacing(0);
        let h1 = g.spacing(1);
        let a = f.tau_h(0, h0).unwrap().tau_h(1, h1).unwrap();
        let b = f.tau_h(1, h1).unwrap().tau_h(0, h0).unwrap();
        // interior agreement; edges are zero-masked in different order
        for i in 0..g.spatial_len() {
            let mi = g.multi_index(i);
            if mi[0] + 1 < g.nx[0] && mi[1] + 1 < g.nx[1] {
                assert!((a.get(0, i) - b.get(0, i)).abs() < 1e-14);
            }
        }
    }
}
