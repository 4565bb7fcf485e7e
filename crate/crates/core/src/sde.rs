//! Euler–Maruyama simulation of `dx = sigma(t0+r, x) dw + b(t0+r, x) dr`.
//!
//! Paths are never stored by default: every consumer replays a path from its
//! keyed stream and observes the states it needs. A replay reproduces the
//! original path bit for bit.

use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::fields::{MatrixField, SigmaKind, VectorField};
use crate::geometry::{dist, norm};
use crate::grid::{hex, GridDomain};
use crate::rng::path_rng;
use crate::stats::EstimateReport;

fn default_kappa() -> f64 {
    4.0
}

/// How the stepper treats a drift that blows up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftPolicy {
    /// A singular evaluation marks the path diverged.
    None,
    /// Singular evaluations contribute zero drift; the drift displacement
    /// `b h` is clipped to length `kappa sqrt(h)`.
    CapDisplacement {
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
    /// Distances to the singular set are floored at `r_floor` (times at `r_floor^2`).
    FloorRadius { r_floor: f64 },
}

impl Default for DriftPolicy {
    fn default() -> Self {
        DriftPolicy::CapDisplacement { kappa: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub sigma: MatrixField,
    pub drift: VectorField,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub h: f64,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub policy: DriftPolicy,
}

impl SimSpec {
    /// Brownian motion (`sigma = I`, `b = 0`) from `(0, x0)`.
    pub fn brownian(x0: Vec<f64>, horizon: f64, h: f64, n_paths: usize, seed: u64) -> Self {
        let d = x0.len();
        Self {
            sigma: MatrixField::identity(d),
            drift: VectorField::zero(d),
            t0: 0.0,
            x0,
            horizon,
            h,
            n_paths,
            seed,
            policy: DriftPolicy::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(invalid("x0", "dimension must be at least 1"));
        }
        if self.sigma.dim != d || self.drift.dim != d {
            return Err(Error::Dimension {
                expected: d,
                got: if self.sigma.dim != d { self.sigma.dim } else { self.drift.dim },
            });
        }
        self.sigma.validate()?;
        self.drift.validate()?;
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(invalid("h", "must be positive"));
        }
        if !(self.horizon >= self.h) {
            return Err(invalid("horizon", "must be at least h"));
        }
        if self.n_paths == 0 {
            return Err(invalid("n_paths", "must be at least 1"));
        }
        if !self.t0.is_finite() || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("x0", "start must be finite"));
        }
        match self.policy {
            DriftPolicy::CapDisplacement { kappa } if !(kappa > 0.0) => Err(invalid("policy.kappa", "must be positive")),
            DriftPolicy::FloorRadius { r_floor } if !(r_floor > 0.0) => Err(invalid("policy.r_floor", "must be positive")),
            _ => Ok(()),
        }
    }

    /// `ceil(T/h)`, robust to `T/h` landing a rounding error above an integer.
    pub fn n_steps(&self) -> usize {
        let r = self.horizon / self.h;
        let n = r.round();
        if (r - n).abs() <= 1e-9 * r.max(1.0) {
            n as usize
        } else {
            r.ceil() as usize
        }
    }

    /// Content hash of the full specification, policy included.
    pub fn fingerprint(&self) -> String {
        let mut hsh = Sha256::new();
        hsh.update(serde_json::to_vec(self).unwrap_or_default());
        hex(&hsh.finalize()[..8])
    }

    pub fn with_h(&self, h: f64) -> Self {
        Self { h, ..self.clone() }
    }

    pub fn with_start(&self, t0: f64, x0: Vec<f64>) -> Self {
        Self { t0, x0, ..self.clone() }
    }
}

/// Per-path bookkeeping of a replay.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathOutcome {
    /// Index of the last state handed to the observer.
    pub last_step: usize,
    pub diverged: bool,
    /// Steps where the drift was singular and replaced by zero, or clipped.
    pub cap_hits: u32,
    /// Steps where the singular-set floor was applied.
    pub floor_hits: u32,
}

/// Reusable stepping engine for one [`SimSpec`].
pub struct Simulator<'a> {
    spec: &'a SimSpec,
    n_steps: usize,
    /// `Some(s)` when `sigma = s I`.
    scalar_sigma: Option<f64>,
    zero_drift: bool,
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a SimSpec) -> Result<Self> {
        spec.validate()?;
        let scalar_sigma = match spec.sigma.kind {
            SigmaKind::Identity { scale } => Some(scale),
            _ => None,
        };
        Ok(Self {
            spec,
            n_steps: spec.n_steps(),
            scalar_sigma,
            zero_drift: matches!(spec.drift.kind, crate::fields::DriftKind::Zero),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn spec(&self) -> &SimSpec {
        self.spec
    }

    /// Replays path `path`, calling `visit(k, t_k, x_k)` for `k = 0..=n_steps`
    /// until it returns `false`.
    pub fn run_path(&self, path: u64, mut visit: impl FnMut(usize, f64, &[f64]) -> bool) -> PathOutcome {
        let spec = self.spec;
        let d = spec.dim();
        let d1 = spec.sigma.cols();
        let h = spec.h;
        let sqh = h.sqrt();
        let mut rng = path_rng(spec.seed, path);
        let mut x = spec.x0.clone();
        let mut b = vec![0.0; d];
        let mut xi = vec![0.0; d1];
        let mut sig = vec![0.0; d * d1];
        let mut out = PathOutcome::default();
        for k in 0..=self.n_steps {
            let t = spec.t0 + k as f64 * h;
            out.last_step = k;
            if !visit(k, t, &x) || k == self.n_steps {
                break;
            }
            for v in xi.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            if !self.zero_drift && !self.drift_step(t, &x, &mut b, &mut out) {
                out.diverged = true;
                break;
            }
            match self.scalar_sigma {
                Some(s) => {
                    for i in 0..d {
                        x[i] += s * sqh * xi[i];
                    }
                }
                None => {
                    if spec.sigma.eval_into(t, &x, &mut sig).is_err() {
                        out.diverged = true;
                        break;
                    }
                    for i in 0..d {
                        let row = &sig[i * d1..(i + 1) * d1];
                        let mut acc = 0.0;
                        for (s, z) in row.iter().zip(&xi) {
                            acc += s * z;
                        }
                        x[i] += sqh * acc;
                    }
                }
            }
            if !self.zero_drift {
                for i in 0..d {
                    x[i] += b[i] * h;
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                out.diverged = true;
                break;
            }
        }
        out
    }

    /// Writes the effective drift into `b`; returns `false` when the path diverges.
    fn drift_step(&self, t: f64, x: &[f64], b: &mut [f64], out: &mut PathOutcome) -> bool {
        let drift = &self.spec.drift;
        match self.spec.policy {
            DriftPolicy::None => drift.eval_into(t, x, b).is_ok() && b.iter().all(|v| v.is_finite()),
            DriftPolicy::CapDisplacement { kappa } => {
                if drift.eval_into(t, x, b).is_err() || b.iter().any(|v| !v.is_finite()) {
                    b.iter_mut().for_each(|v| *v = 0.0);
                    out.cap_hits += 1;
                    return true;
                }
                let cap = kappa / self.spec.h.sqrt();
                let m = norm(b);
                if m > cap {
                    let s = cap / m;
                    b.iter_mut().for_each(|v| *v *= s);
                    out.cap_hits += 1;
                }
                true
            }
            DriftPolicy::FloorRadius { r_floor } => match drift.eval_floored_into(t, x, r_floor, b) {
                Ok(touched) => {
                    if touched {
                        out.floor_hits += 1;
                    }
                    b.iter().all(|v| v.is_finite())
                }
                Err(_) => false,
            },
        }
    }

    /// Runs `f` on every path in parallel and returns the results in path order.
    pub fn map_paths<T: Send>(&self, f: impl Fn(&Self, u64) -> T + Sync) -> Vec<T> {
        (0..self.spec.n_paths as u64).into_par_iter().map(|p| f(self, p)).collect()
    }
}

/// Space-time regions used as exit domains, target sets and occupation sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Open ball, for all times.
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `[t, t + rho^2) x B_rho(center)`, open ball.
    Cylinder {
        t: f64,
        center: Vec<f64>,
        rho: f64,
    },
    /// Closed ball, for all times.
    ClosedBall {
        center: Vec<f64>,
        radius: f64,
    },
    /// `[t, t + rho^2] x closed ball`.
    ClosedCylinder {
        t: f64,
        center: Vec<f64>,
        rho: f64,
    },
    /// `x^axis >= offset`.
    HalfSpace {
        axis: usize,
        offset: f64,
    },
    /// Union of grid cells.
    Cells(CellSet),
    Complement {
        of: Box<Region>,
    },
    Intersection {
        of: Vec<Region>,
    },
    Empty,
}

impl Region {
    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        match self {
            Region::Ball { center, radius } => dist(x, center) < *radius,
            Region::Cylinder { t: s, center, rho } => t >= *s && t < s + rho * rho && dist(x, center) < *rho,
            Region::ClosedBall { center, radius } => dist(x, center) <= *radius,
            Region::ClosedCylinder { t: s, center, rho } => t >= *s && t <= s + rho * rho && dist(x, center) <= *rho,
            Region::HalfSpace { axis, offset } => x[*axis] >= *offset,
            Region::Cells(c) => c.contains(t, x),
            Region::Complement { of } => !of.contains(t, x),
            Region::Intersection { of } => of.iter().all(|r| r.contains(t, x)),
            Region::Empty => false,
        }
    }

    /// Time lid of a cylinder domain, used to flag capped exits.
    fn lid(&self) -> Option<f64> {
        match self {
            Region::Cylinder { t, rho, .. } => Some(t + rho * rho),
            _ => None,
        }
    }

    fn spatial_contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Cylinder { center, rho, .. } => dist(x, center) < *rho,
            _ => true,
        }
    }
}

/// A union of cells of a space-time grid, stored as a bitmap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSet {
    pub domain: GridDomain,
    pub cells: Vec<usize>,
    #[serde(skip)]
    mask: Vec<bool>,
}

impl CellSet {
    pub fn new(domain: GridDomain, mut cells: Vec<usize>) -> Result<Self> {
        domain.validate()?;
        cells.sort_unstable();
        cells.dedup();
        if cells.last().is_some_and(|&c| c >= domain.len()) {
            return Err(invalid("cells", "cell index out of range"));
        }
        let mut mask = vec![false; domain.len()];
        for &c in &cells {
            mask[c] = true;
        }
        Ok(Self { domain, cells, mask })
    }

    pub fn from_predicate(domain: GridDomain, keep: impl Fn(f64, &[f64]) -> bool) -> Result<Self> {
        let ns = domain.n_space();
        let mut x = vec![0.0; domain.dim()];
        let mut cells = Vec::new();
        for it in 0..domain.n_t {
            let t = domain.t_center(it);
            for ix in 0..ns {
                domain.space_center(ix, &mut x);
                if keep(t, &x) {
                    cells.push(it * ns + ix);
                }
            }
        }
        Self::new(domain, cells)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.cells.len() as f64 * self.domain.cell_volume()
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        let (Some(it), Some(ix)) = (self.domain.t_index(t), self.domain.x_index(x)) else {
            return false;
        };
        let c = it * self.domain.n_space() + ix;
        if self.mask.len() == self.domain.len() {
            self.mask[c]
        } else {
            self.cells.binary_search(&c).is_ok()
        }
    }

    pub fn subset(&self, cells: Vec<usize>) -> Result<Self> {
        Self::new(self.domain.clone(), cells)
    }
}

/// First exit or hitting record of one path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    /// Grid index of the first state outside the domain; `None` if censored at the horizon.
    pub step: Option<usize>,
    /// Elapsed time `step * h` (the horizon when censored).
    pub time: f64,
    pub state: Vec<f64>,
    /// Exit through the time lid of a cylinder.
    pub capped: bool,
    pub diverged: bool,
}

impl ExitRecord {
    pub fn censored(&self) -> bool {
        self.step.is_none()
    }
}

impl<'a> Simulator<'a> {
    fn stop_record(&self, path: u64, stop: impl Fn(f64, &[f64]) -> bool, lid: Option<f64>, lateral: impl Fn(&[f64]) -> bool) -> ExitRecord {
        let mut rec = None;
        let o = self.run_path(path, |k, t, x| {
            if stop(t, x) {
                let capped = lid.is_some_and(|l| t >= l) && lateral(x);
                rec = Some((k, x.to_vec(), capped));
                false
            } else {
                true
            }
        });
        let h = self.spec.h;
        match rec {
            Some((k, state, capped)) => ExitRecord {
                step: Some(k),
                time: k as f64 * h,
                state,
                capped,
                diverged: false,
            },
            None => ExitRecord {
                step: None,
                time: o.last_step as f64 * h,
                state: Vec::new(),
                capped: false,
                diverged: o.diverged,
            },
        }
    }

    pub fn exit_record(&self, path: u64, domain: &Region) -> ExitRecord {
        self.stop_record(path, |t, x| !domain.contains(t, x), domain.lid(), |x| domain.spatial_contains(x))
    }

    pub fn hit_record(&self, path: u64, target: &Region) -> ExitRecord {
        self.stop_record(path, |t, x| target.contains(t, x), None, |_| true)
    }
}

/// First exit from `domain` for every path.
pub fn first_exit(spec: &SimSpec, domain: &Region) -> Result<Vec<ExitRecord>> {
    let sim = Simulator::new(spec)?;
    Ok(sim.map_paths(|s, p| s.exit_record(p, domain)))
}

/// First entry into `target` for every path.
pub fn hitting_time(spec: &SimSpec, target: &Region) -> Result<Vec<ExitRecord>> {
    let sim = Simulator::new(spec)?;
    Ok(sim.map_paths(|s, p| s.hit_record(p, target)))
}

/// Summary of a simulated ensemble; optionally keeps strided trajectories.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathBatch {
    pub spec: SimSpec,
    pub fingerprint: String,
    pub n_steps: usize,
    /// Final states, `n_paths x d`, row-major.
    pub final_states: Vec<f64>,
    pub outcomes: Vec<PathOutcome>,
    pub stride: Option<usize>,
    /// Stored states, `n_paths x n_rows x d`, when a stride was requested.
    #[serde(skip)]
    pub trajectories: Option<Vec<f64>>,
}

pub fn simulate(spec: &SimSpec, stride: Option<usize>) -> Result<PathBatch> {
    let sim = Simulator::new(spec)?;
    if stride == Some(0) {
        return Err(invalid("stride", "must be at least 1"));
    }
    let d = spec.dim();
    let n_steps = sim.n_steps();
    let rows = stride.map(|s| n_steps / s + 1);
    let per_path: Vec<(Vec<f64>, PathOutcome, Vec<f64>)> = sim.map_paths(|s, p| {
        let mut last = spec.x0.clone();
        let mut traj = Vec::with_capacity(rows.unwrap_or(0) * d);
        let o = s.run_path(p, |k, _, x| {
            last.copy_from_slice(x);
            if let Some(st) = stride {
                if k % st == 0 {
                    traj.extend_from_slice(x);
                }
            }
            true
        });
        if o.diverged {
            last.iter_mut().for_each(|v| *v = f64::NAN);
        }
        (last, o, traj)
    });
    let mut final_states = Vec::with_capacity(spec.n_paths * d);
    let mut outcomes = Vec::with_capacity(spec.n_paths);
    let mut trajectories = stride.map(|_| Vec::new());
    for (last, o, traj) in per_path {
        final_states.extend(last);
        outcomes.push(o);
        if let Some(t) = trajectories.as_mut() {
            let mut traj = traj;
            // a diverged path is padded with NaN rows
            traj.resize(rows.unwrap_or(0) * d, f64::NAN);
            t.extend(traj);
        }
    }
    Ok(PathBatch {
        spec: spec.clone(),
        fingerprint: spec.fingerprint(),
        n_steps,
        final_states,
        outcomes,
        stride,
        trajectories,
    })
}

impl PathBatch {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn final_state(&self, path: usize) -> &[f64] {
        let d = self.dim();
        &self.final_states[path * d..(path + 1) * d]
    }

    pub fn n_diverged(&self) -> usize {
        self.outcomes.iter().filter(|o| o.diverged).count()
    }

    pub fn cap_hits(&self) -> u64 {
        self.outcomes.iter().map(|o| o.cap_hits as u64).sum()
    }

    pub fn floor_hits(&self) -> u64 {
        self.outcomes.iter().map(|o| o.floor_hits as u64).sum()
    }

    /// Exit records by replaying the batch's streams.
    pub fn first_exit(&self, domain: &Region) -> Result<Vec<ExitRecord>> {
        first_exit(&self.spec, domain)
    }

    pub fn hitting_time(&self, target: &Region) -> Result<Vec<ExitRecord>> {
        hitting_time(&self.spec, target)
    }

    /// Binary dump: little-endian header `u64 d, f64 h_row, u64 n_rows - 1, u64 n_paths`,
    /// then the stored states row-major (path, row, coordinate).
    pub fn write_trajectories(&self, path: &Path) -> Result<()> {
        let (Some(traj), Some(stride)) = (&self.trajectories, self.stride) else {
            return Err(Error::Precondition("batch was simulated without a stride".into()));
        };
        let rows = self.n_steps / stride + 1;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&(self.dim() as u64).to_le_bytes())?;
        f.write_all(&(self.spec.h * stride as f64).to_le_bytes())?;
        f.write_all(&((rows - 1) as u64).to_le_bytes())?;
        f.write_all(&(self.spec.n_paths as u64).to_le_bytes())?;
        for v in traj {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }
}

/// CSV rows `path_id, exit_time, censored, capped, exit_x0, ...`.
pub fn write_exit_csv(path: &Path, records: &[ExitRecord], d: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["path_id".to_string(), "exit_time".into(), "censored".into(), "capped".into()];
    header.extend((0..d).map(|i| format!("exit_x{i}")));
    w.write_record(&header)?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![i.to_string(), r.time.to_string(), r.censored().to_string(), r.capped.to_string()];
        for j in 0..d {
            row.push(r.state.get(j).map_or(String::new(), |v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Registered path functionals for refinement studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathFunctional {
    /// `int_0^T |b(t0+s, x_s)| ds`, left endpoint; states on the singular set contribute 0.
    DriftIntegral,
    /// `int_0^T s^{-alpha} |x_s|^{-beta} ds` with exact time weights; `x_s = 0` contributes 0.
    TimeSpaceWeight { alpha: f64, beta: f64 },
    /// `max_k |x_k - x0|`.
    PathSup,
    /// `int_0^T 1_region(t0+s, x_s) ds`.
    Occupation { region: Region },
}

impl PathFunctional {
    pub fn evaluate(&self, sim: &Simulator, path: u64) -> (f64, bool) {
        let spec = sim.spec();
        let h = spec.h;
        let n = sim.n_steps();
        let mut acc = 0.0;
        let mut b = vec![0.0; spec.dim()];
        let o = match self {
            PathFunctional::DriftIntegral => sim.run_path(path, |k, t, x| {
                if k < n && spec.drift.eval_into(t, x, &mut b).is_ok() {
                    acc += norm(&b) * h;
                }
                true
            }),
            PathFunctional::TimeSpaceWeight { alpha, beta } => {
                let a1 = 1.0 - alpha;
                sim.run_path(path, |k, _, x| {
                    if k < n {
                        let r = norm(x);
                        if r > 0.0 {
                            let (s0, s1) = (k as f64 * h, (k + 1) as f64 * h);
                            let w = (s1.powf(a1) - s0.powf(a1)) / a1;
                            acc += w * r.powf(-beta);
                        }
                    }
                    true
                })
            }
            PathFunctional::PathSup => sim.run_path(path, |_, _, x| {
                acc = acc.max(dist(x, &spec.x0));
                true
            }),
            PathFunctional::Occupation { region } => sim.run_path(path, |k, t, x| {
                if k < n && region.contains(t, x) {
                    acc += h;
                }
                true
            }),
        };
        (acc, o.diverged)
    }

    /// Per-path values (diverged paths dropped) and the diverged count.
    pub fn sample(&self, spec: &SimSpec) -> Result<(Vec<f64>, usize)> {
        let sim = Simulator::new(spec)?;
        let vals = sim.map_paths(|s, p| self.evaluate(s, p));
        let diverged = vals.iter().filter(|v| v.1).count();
        Ok((vals.into_iter().filter(|v| !v.1).map(|v| v.0).collect(), diverged))
    }
}

/// One estimate per step size; every rung reuses the seed of `spec`.
pub fn refine_study(spec: &SimSpec, functional: &PathFunctional, h_ladder: &[f64]) -> Result<Vec<EstimateReport>> {
    if h_ladder.is_empty() {
        return Err(Error::Empty("h ladder".into()));
    }
    h_ladder
        .iter()
        .map(|&h| {
            let s = spec.with_h(h);
            let (vals, div) = functional.sample(&s)?;
            Ok(EstimateReport::from_samples(&vals, s.fingerprint()).with_diverged(div))
        })
        .collect()
}
