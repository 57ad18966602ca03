//! Parameter grids over `(alpha, mu)`: the time-averaged observable `D` and
//! the phase-slip codes of the unstable manifold of `S31`, with their raster
//! renderings.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::ops::ControlFlow;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::Vector4;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrate::{detect_events, integrate, integrate_with, DenseStep, EventSpec, ExtremumKind, Observable};
use crate::model::{eigen_split, equilibrium, observable_d, EquilibriumId, EquilibriumKind, Params, State};

/// Extrema closer than this in time count once.
const MERGE_WINDOW: f64 = 1e-3;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
const GAUSS: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Knobs shared by both payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub epsilon: f64,
    /// Integration time `T`.
    pub t_final: f64,
    /// Discarded start of the average; `None` means `T/4`.
    pub transient: Option<f64>,
    /// Offset from `S31` along its leading eigendirection.
    pub delta: f64,
    /// Geometric weight of successive slips.
    pub q: f64,
    /// Number of slips used.
    pub m: usize,
    pub tol: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            epsilon: crate::model::DEFAULT_EPSILON,
            t_final: 4000.0,
            transient: None,
            delta: 1e-4,
            q: 0.5,
            m: 20,
            tol: 1e-10,
        }
    }
}

impl SweepSettings {
    pub fn transient(&self) -> f64 {
        self.transient.unwrap_or(0.25 * self.t_final)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.t_final > 0.0) {
            return bad(format!("T must be positive, got {}", self.t_final));
        }
        let tr = self.transient();
        if !(tr >= 0.0 && tr < self.t_final) {
            return bad(format!("transient must lie in [0, T), got {tr}"));
        }
        if !(self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("Q must lie in (0, 1), got {}", self.q));
        }
        if self.m == 0 {
            return bad("M must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tol));
        }
        Ok(())
    }
}

/// `S31 + delta Re(v)` for the eigenvector `v` of the eigenvalue with the
/// largest real part. `v` is scaled so its largest component is real and
/// positive, then `Re(v)` is normalized. The flag reports a complex leading
/// eigenvalue.
pub fn standard_seed(p: &Params, delta: f64) -> Result<(State, bool)> {
    let id = EquilibriumId::new(EquilibriumKind::S31, 0, 0);
    let s = equilibrium(id, p)?;
    let (lam, v) = eigen_split(id, p)?.leading();
    let k = (0..4).max_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm())).unwrap_or(0);
    let phase = v[k].conj() / v[k].norm();
    let re: Vector4<f64> = v.map(|z: Complex64| (z * phase).re);
    let re = re / re.norm();
    Ok((s + delta * State::from_vector(&re), lam.im.abs() > 1e-12))
}

/// Time average of `D` over `[transient, T]` along the solution from `s0`.
pub fn mean_observable_from(s0: &State, p: &Params, t_final: f64, transient: f64, tol: f64) -> Result<f64> {
    if !(t_final > transient && transient >= 0.0) {
        return Err(Error::InvalidInput(format!("need T > transient >= 0, got T = {t_final}, transient = {transient}")));
    }
    let mut sum = 0.0;
    integrate_with(s0, p, (0.0, t_final), tol, |step: &DenseStep<4>| {
        let (a, b) = (step.t0.max(transient), step.t1());
        if b > a {
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (x, w) in GAUSS {
                sum += w * half * observable_d(&State(step.eval(mid + half * x)));
            }
        }
        ControlFlow::Continue(())
    })?;
    Ok(sum / (t_final - transient))
}

/// Averaged `D` from the standard seed.
pub fn mean_observable(p: &Params, s: &SweepSettings) -> Result<f64> {
    s.validate()?;
    let p = p.with_epsilon(s.epsilon);
    let (s0, _) = standard_seed(&p, s.delta)?;
    mean_observable_from(&s0, &p, s.t_final, s.transient(), s.tol)
}

/// Weighted slip counts along the three channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipCode {
    pub k12: f64,
    pub k23: f64,
    pub k31: f64,
    /// Events entering the sums (at most `M`).
    pub events: usize,
    /// Threshold `ϑ = max ξ / 2`.
    pub threshold: f64,
    /// The leading eigenvalue at `S31` was complex and `Re(v)` was used.
    pub complex_seed: bool,
}

/// Slip channel of one event, with its sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kappa {
    K12(i8),
    K23(i8),
    K31(i8),
    None,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Sign tables of the slip classification; values exactly at the threshold
/// count as below it.
pub fn classify(psi1: f64, psi2: f64, threshold: f64) -> Kappa {
    let hi1 = psi1 * psi1 > threshold;
    let hi2 = psi2 * psi2 > threshold;
    match (hi1, hi2) {
        (true, false) => Kappa::K12(-sign(psi1)),
        (true, true) => Kappa::K23(sign(psi1)),
        (false, true) => Kappa::K31(-sign(psi2)),
        (false, false) => Kappa::None,
    }
}

/// `K = (1 - Q) Σ κ(m) Q^m` over the first `M` velocities `(psi1, psi2)` at
/// the extrema of `ξ` that exceed `threshold`.
pub fn slip_code_from_extrema(extrema: &[(f64, f64)], threshold: f64, q: f64, m: usize) -> SlipCode {
    let mut k = [0.0f64; 3];
    let mut weight = 1.0;
    let mut used = 0;
    for &(p1, p2) in extrema.iter().filter(|(p1, p2)| (p1 * p1).max(p2 * p2) > threshold).take(m) {
        weight *= q;
        used += 1;
        let (ch, s) = match classify(p1, p2, threshold) {
            Kappa::K12(s) => (0, s),
            Kappa::K23(s) => (1, s),
            Kappa::K31(s) => (2, s),
            Kappa::None => continue,
        };
        k[ch] += (1.0 - q) * s as f64 * weight;
    }
    SlipCode { k12: k[0], k23: k[1], k31: k[2], events: used, threshold, complex_seed: false }
}

/// Slip code of the trajectory from the standard seed.
pub fn slip_sequence(p: &Params, s: &SweepSettings) -> Result<SlipCode> {
    s.validate()?;
    let p = p.with_epsilon(s.epsilon);
    let (s0, complex_seed) = standard_seed(&p, s.delta)?;
    let tr = integrate(&s0, &p, (0.0, s.t_final), s.tol)?;
    let xi = |st: &State| Observable::SlipSpeed.value(st);
    let maxima = detect_events(&tr, &EventSpec::LocalExtremum { observable: Observable::SlipSpeed, kind: ExtremumKind::Maximum });
    let peak = maxima
        .iter()
        .map(|e| xi(&e.state))
        .chain([xi(&tr.initial_state()), xi(&tr.final_state())])
        .fold(0.0, f64::max);
    let threshold = 0.5 * peak;
    let mut kept: Vec<(f64, State)> = Vec::new();
    for e in maxima.iter().filter(|e| xi(&e.state) > threshold) {
        match kept.last_mut() {
            Some(last) if e.t - last.0 < MERGE_WINDOW => {
                if xi(&e.state) > xi(&last.1) {
                    *last = (e.t, e.state);
                }
            }
            _ => kept.push((e.t, e.state)),
        }
    }
    let extrema: Vec<(f64, f64)> = kept.iter().map(|(_, st)| (st.psi1(), st.psi2())).collect();
    let mut code = slip_code_from_extrema(&extrema, threshold, s.q, s.m);
    code.complex_seed = complex_seed;
    Ok(code)
}

/// Evenly spaced axis including both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if n < 2 || !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::InvalidInput(format!("axis needs min < max and n >= 2, got [{min}, {max}] x {n}")));
        }
        Ok(Axis { min, max, n })
    }

    pub fn value(&self, k: usize) -> f64 {
        if k + 1 == self.n {
            self.max
        } else {
            self.min + (self.max - self.min) * k as f64 / (self.n - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.value(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    MeanD,
    Slips,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    MeanD(f64),
    Slip(SlipCode),
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub alpha: Axis,
    pub mu: Axis,
    pub kind: PayloadKind,
    /// Row-major with `alpha` fastest: cell `(i, j)` sits at `j * alpha.n + i`.
    pub cells: Vec<Cell>,
}

fn header(kind: PayloadKind) -> &'static str {
    match kind {
        PayloadKind::MeanD => "alpha,mu,value",
        PayloadKind::Slips => "alpha,mu,K12,K23,K31",
    }
}

/// One CSV row; `Display` prints the shortest string that parses back to
/// the same float.
fn csv_row(alpha: f64, mu: f64, kind: PayloadKind, cell: &Cell) -> String {
    match (cell, kind) {
        (Cell::MeanD(v), _) => format!("{alpha},{mu},{v}\n"),
        (Cell::Slip(c), _) => format!("{alpha},{mu},{},{},{}\n", c.k12, c.k23, c.k31),
        (Cell::Failed, PayloadKind::MeanD) => format!("{alpha},{mu},failed\n"),
        (Cell::Failed, PayloadKind::Slips) => format!("{alpha},{mu},failed,failed,failed\n"),
    }
}

fn parse_row(line: &str, kind: PayloadKind) -> Result<(f64, f64, Cell)> {
    let bad = || Error::InvalidInput(format!("malformed grid row: {line}"));
    let f: Vec<&str> = line.trim().split(',').collect();
    if f.len() < 3 {
        return Err(bad());
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let (a, m) = (num(f[0])?, num(f[1])?);
    if f[2].trim() == "failed" {
        return Ok((a, m, Cell::Failed));
    }
    let cell = match (kind, f.len()) {
        (PayloadKind::MeanD, 3) => Cell::MeanD(num(f[2])?),
        (PayloadKind::Slips, 5) => Cell::Slip(SlipCode {
            k12: num(f[2])?,
            k23: num(f[3])?,
            k31: num(f[4])?,
            events: 0,
            threshold: f64::NAN,
            complex_seed: false,
        }),
        _ => return Err(bad()),
    };
    Ok((a, m, cell))
}

impl SweepGrid {
    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[j * self.alpha.n + i]
    }

    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| matches!(c, Cell::Failed)).count()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", header(self.kind))?;
        for j in 0..self.mu.n {
            for i in 0..self.alpha.n {
                w.write_all(csv_row(self.alpha.value(i), self.mu.value(j), self.kind, self.cell(i, j)).as_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a complete grid; the axes are recovered from the distinct
    /// `alpha` and `mu` values.
    pub fn read_csv<R: BufRead>(r: R) -> Result<SweepGrid> {
        let mut lines = r.lines();
        let head = lines.next().ok_or_else(|| Error::InvalidInput("empty grid file".into()))??;
        let kind = match head.trim() {
            h if h == header(PayloadKind::MeanD) => PayloadKind::MeanD,
            h if h == header(PayloadKind::Slips) => PayloadKind::Slips,
            h => return Err(Error::InvalidInput(format!("unknown grid header: {h}"))),
        };
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                rows.push(parse_row(&line, kind)?);
            }
        }
        let distinct = |sel: fn(&(f64, f64, Cell)) -> f64| {
            let mut v: Vec<f64> = rows.iter().map(sel).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let alphas = distinct(|r| r.0);
        let mus = distinct(|r| r.1);
        if alphas.len() < 2 || mus.len() < 2 || rows.len() != alphas.len() * mus.len() {
            return Err(Error::InvalidInput("grid file is not a complete rectangular grid".into()));
        }
        let alpha = Axis::new(alphas[0], alphas[alphas.len() - 1], alphas.len())?;
        let mu = Axis::new(mus[0], mus[mus.len() - 1], mus.len())?;
        let mut cells = vec![Cell::Failed; rows.len()];
        for (a, m, c) in rows {
            let i = alphas.partition_point(|x| *x < a);
            let j = mus.partition_point(|x| *x < m);
            cells[j * alpha.n + i] = c;
        }
        Ok(SweepGrid { alpha, mu, kind, cells })
    }
}

fn compute_cell(p: &Params, kind: PayloadKind, s: &SweepSettings) -> Cell {
    let r = match kind {
        PayloadKind::MeanD => mean_observable(p, s).map(Cell::MeanD),
        PayloadKind::Slips => slip_sequence(p, s).map(Cell::Slip),
    };
    match r {
        Ok(Cell::MeanD(v)) if !v.is_finite() => Cell::Failed,
        Ok(c) => c,
        Err(_) => Cell::Failed,
    }
}

/// Cells already present in a checkpoint file, keyed by grid index.
fn read_checkpoint(path: &Path, alpha: &Axis, mu: &Axis, kind: PayloadKind) -> Result<HashMap<usize, Cell>> {
    let mut done = HashMap::new();
    let Ok(f) = File::open(path) else {
        return Ok(done);
    };
    let alphas = alpha.values();
    let mus = mu.values();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != header(kind) {
                return Err(Error::InvalidInput(format!("checkpoint {} holds a different payload", path.display())));
            }
            continue;
        }
        // A torn last line from an interrupted run is skipped.
        let Ok((a, m, c)) = parse_row(&line, kind) else { continue };
        if let (Some(i), Some(j)) = (alphas.iter().position(|x| *x == a), mus.iter().position(|x| *x == m)) {
            done.insert(j * alpha.n + i, c);
        }
    }
    Ok(done)
}

/// Computes every cell of the grid on `workers` threads. Cells are
/// independent, so the result does not depend on the worker count. With a
/// checkpoint path, completed cells are appended there as they finish and
/// cells already recorded are not recomputed.
pub fn run_sweep(
    alpha: Axis,
    mu: Axis,
    kind: PayloadKind,
    settings: &SweepSettings,
    workers: usize,
    checkpoint: Option<&Path>,
) -> Result<SweepGrid> {
    settings.validate()?;
    let workers = workers.max(1);
    let total = alpha.n * mu.n;
    let mut cells: Vec<Option<Cell>> = vec![None; total];
    let mut log = None;
    if let Some(path) = checkpoint {
        for (k, c) in read_checkpoint(path, &alpha, &mu, kind)? {
            cells[k] = Some(c);
        }
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(f, "{}", header(kind))?;
        }
        log = Some(Mutex::new(f));
    }
    let todo: Vec<usize> = (0..total).filter(|k| cells[*k].is_none()).collect();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(cells);
    let io_error: Mutex<Option<std::io::Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(todo.len().max(1)) {
            scope.spawn(|| loop {
                let n = next.fetch_add(1, Ordering::Relaxed);
                let Some(&k) = todo.get(n) else { break };
                let (a, m) = (alpha.value(k % alpha.n), mu.value(k / alpha.n));
                let cell = compute_cell(&Params::new(a, m), kind, settings);
                if let Some(log) = &log {
                    let mut f = log.lock().unwrap_or_else(|e| e.into_inner());
                    // One write per row keeps appended lines whole.
                    if let Err(e) = f.write_all(csv_row(a, m, kind, &cell).as_bytes()).and_then(|_| f.flush()) {
                        io_error.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e);
                    }
                }
                results.lock().unwrap_or_else(|e| e.into_inner())[k] = Some(cell);
            });
        }
    });
    if let Some(e) = io_error.into_inner().unwrap_or_else(|e| e.into_inner()) {
        return Err(e.into());
    }
    let cells = results
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|c| c.unwrap_or(Cell::Failed))
        .collect();
    Ok(SweepGrid { alpha, mu, kind, cells })
}

fn ppm(width: usize, height: usize, pixel: impl Fn(usize, usize) -> [u8; 3]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    // Top row is the largest mu.
    for row in 0..height {
        let j = height - 1 - row;
        for i in 0..width {
            out.extend_from_slice(&pixel(i, j));
        }
    }
    out
}

/// Slip grid as a binary PPM: `|K12|` red, `|K23|` green, `|K31|` blue,
/// scaled by one factor for the whole image so the largest channel value
/// maps to 255. Failed cells are black.
pub fn render_colormap(grid: &SweepGrid) -> Result<Vec<u8>> {
    if grid.kind != PayloadKind::Slips {
        return Err(Error::WrongPayload);
    }
    let peak = grid
        .cells
        .iter()
        .filter_map(|c| match c {
            Cell::Slip(s) => Some(s.k12.abs().max(s.k23.abs()).max(s.k31.abs())),
            _ => None,
        })
        .fold(0.0, f64::max);
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    let channel = |v: f64| (v.abs() * scale).round().clamp(0.0, 255.0) as u8;
    Ok(ppm(grid.alpha.n, grid.mu.n, |i, j| match grid.cell(i, j) {
        Cell::Slip(s) => [channel(s.k12), channel(s.k23), channel(s.k31)],
        _ => [0, 0, 0],
    }))
}

/// Decades below the grid maximum that the scalar map resolves.
pub const SCALAR_DECADES: f64 = 6.0;

/// Mean-D grid as a binary PPM on a black-red-yellow-white ramp over
/// `log10(D)`, from `SCALAR_DECADES` below the grid maximum up to it.
/// Smaller values, zeros and failed cells are black.
pub fn render_scalar(grid: &SweepGrid) -> Result<Vec<u8>> {
    if grid.kind != PayloadKind::MeanD {
        return Err(Error::WrongPayload);
    }
    let peak = grid
        .cells
        .iter()
        .filter_map(|c| match c {
            Cell::MeanD(v) if *v > 0.0 => Some(*v),
            _ => None,
        })
        .fold(0.0, f64::max);
    let top = if peak > 0.0 { peak.log10() } else { 0.0 };
    let ramp = |x: f64| ((x.clamp(0.0, 1.0)) * 255.0).round() as u8;
    Ok(ppm(grid.alpha.n, grid.mu.n, |i, j| match grid.cell(i, j) {
        Cell::MeanD(v) if *v > 0.0 => {
            let t = (v.log10() - top + SCALAR_DECADES) / SCALAR_DECADES;
            [ramp(3.0 * t), ramp(3.0 * t - 1.0), ramp(3.0 * t - 2.0)]
        }
        _ => [0, 0, 0],
    }))
}
