//! Grid surrogate of stress-driven damage growth.
//!
//! An `n x n` damage field evolves under a Laplacian stress proxy: wherever
//! the stencil magnitude exceeds a threshold the damage grows in proportion
//! to it. Controllers remove damage with a Gaussian heal kernel. Dynamics
//! always use the hidden true field; controllers other than the oracle see a
//! noisy copy from [`observe`].

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{check_range, config_section};
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::rng::{stream_rng, SimRng, Stream};

config_section! {
    pub struct GridConfig ["grid"] {
        pub n: usize = 16,
        pub growth_gain: f64 = 0.1,
        pub stress_threshold: f64 = 0.05,
        pub wear_sigma: f64 = 0.001,
        pub heal_amplitude: f64 = 0.5,
        pub heal_radius: f64 = 1.5,
        pub obs_noise_sigma: f64 = 0.02,
        pub horizon: usize = 120,
        /// Peak of the central Gaussian defect at reset.
        pub init_central_defect: f64 = 0.5882,
        /// Width (std, in cells) of the central defect.
        pub defect_width: f64 = 2.5,
        /// Upper bound of the uniform background speckle at reset (0 disables).
        pub speckle: f64 = 0.0,
        /// Scripted controllers act only while integrity is below this.
        pub act_below: f64 = 0.99,
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::config("grid.n", "must be at least 3"));
        }
        for (key, v) in [
            ("grid.growth_gain", self.growth_gain),
            ("grid.stress_threshold", self.stress_threshold),
            ("grid.heal_amplitude", self.heal_amplitude),
            ("grid.heal_radius", self.heal_radius),
            ("grid.defect_width", self.defect_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be > 0, got {v}")));
            }
        }
        check_range("grid.wear_sigma", self.wear_sigma, 0.0, 1.0)?;
        check_range("grid.obs_noise_sigma", self.obs_noise_sigma, 0.0, 1.0)?;
        check_range("grid.init_central_defect", self.init_central_defect, 0.0, 1.0)?;
        check_range("grid.speckle", self.speckle, 0.0, 1.0)?;
        check_range("grid.act_below", self.act_below, 0.0, 1.0)?;
        if self.horizon == 0 {
            return Err(Error::config("grid.horizon", "must be at least 1"));
        }
        Ok(())
    }

    /// Solves for the defect peak whose expected initial integrity is
    /// `target` (speckle contributes its mean, `speckle / 2`).
    pub fn solve_defect_peak(&self, target: f64) -> f64 {
        let base = DamageField::gaussian_bump(self.n, self.defect_width);
        let speckle_mean = 0.5 * self.speckle;
        let integrity = |peak: f64| {
            let total: f64 = base
                .cells
                .iter()
                .map(|b| (peak * b + speckle_mean).clamp(0.0, 1.0))
                .sum();
            1.0 - total / base.cells.len() as f64
        };
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if integrity(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Row-major `n x n` damage fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct DamageField {
    n: usize,
    cells: Vec<f64>,
}

impl DamageField {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            cells: vec![0.0; n * n],
        }
    }

    pub fn from_cells(n: usize, cells: Vec<f64>) -> Result<Self> {
        if cells.len() != n * n {
            return Err(Error::Argument(format!(
                "expected {} cells for a {n}x{n} field, got {}",
                n * n,
                cells.len()
            )));
        }
        if let Some(bad) = cells.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::Argument(format!("cell value {bad} outside [0, 1]")));
        }
        Ok(Self { n, cells })
    }

    pub fn uniform(n: usize, value: f64) -> Self {
        Self {
            n,
            cells: vec![value.clamp(0.0, 1.0); n * n],
        }
    }

    /// Unit-peak Gaussian centred on the grid midpoint.
    fn gaussian_bump(n: usize, width: f64) -> Self {
        let c = (n as f64 - 1.0) / 2.0;
        let mut cells = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
                cells.push((-d2 / (2.0 * width * width)).exp());
            }
        }
        Self { n, cells }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.n + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.cells[row * self.n + col] = value.clamp(0.0, 1.0);
    }

    pub fn mean(&self) -> f64 {
        self.cells.iter().sum::<f64>() / self.cells.len() as f64
    }

    pub fn integrity(&self) -> f64 {
        1.0 - self.mean()
    }

    /// Mean over the `k x k` block around the grid centre.
    pub fn center_mean(&self, k: usize) -> f64 {
        let k = k.clamp(1, self.n);
        let start = (self.n - k) / 2;
        let mut sum = 0.0;
        for i in start..start + k {
            for j in start..start + k {
                sum += self.get(i, j);
            }
        }
        sum / (k * k) as f64
    }

    /// First cell (row-major) holding the maximum value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (idx, &v) in self.cells.iter().enumerate() {
            if v > self.cells[best] {
                best = idx;
            }
        }
        (best / self.n, best % self.n)
    }
}

/// Signed 5-point Laplacian with mirror (zero-flux) boundaries: a ghost
/// cell beyond the edge repeats the edge cell.
pub fn laplacian_signed(field: &DamageField) -> Vec<f64> {
    let n = field.n;
    let at = |i: isize, j: isize| {
        let i = i.clamp(0, n as isize - 1) as usize;
        let j = j.clamp(0, n as isize - 1) as usize;
        field.cells[i * n + j]
    };
    let mut out = vec![0.0; n * n];
    for i in 0..n as isize {
        for j in 0..n as isize {
            out[i as usize * n + j as usize] =
                at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) - 4.0 * at(i, j);
        }
    }
    out
}

/// Stress proxy `|laplacian|`.
pub fn laplacian(field: &DamageField) -> Vec<f64> {
    laplacian_signed(field).into_iter().map(f64::abs).collect()
}

/// Localized heal at `(row, col)` with intensity `dosage`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAction {
    pub row: usize,
    pub col: usize,
    pub dosage: f64,
}

impl GridAction {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.row >= n || self.col >= n {
            return Err(Error::Argument(format!(
                "grid action ({}, {}) outside a {n}x{n} grid",
                self.row, self.col
            )));
        }
        if !(0.0..=1.0).contains(&self.dosage) {
            return Err(Error::Argument(format!("dosage {} outside [0, 1]", self.dosage)));
        }
        Ok(())
    }
}

/// Heal kernel weight at squared distance `d2`.
pub fn heal_kernel(cfg: &GridConfig, d2: f64) -> f64 {
    (-d2 / (2.0 * cfg.heal_radius * cfg.heal_radius)).exp()
}

/// One surrogate step: stress growth, wear noise, optional heal, clamp.
/// Returns the new field and its integrity `1 - mean(D)`.
pub fn grid_step<R: Rng + ?Sized>(
    cfg: &GridConfig,
    field: &DamageField,
    action: Option<GridAction>,
    rng: &mut R,
) -> Result<(DamageField, f64)> {
    let n = field.n;
    if let Some(a) = &action {
        a.validate(n)?;
    }
    let stress = laplacian(field);
    let mut next = field.cells.clone();
    for (d, s) in next.iter_mut().zip(&stress) {
        if *s > cfg.stress_threshold {
            *d += cfg.growth_gain * s;
        }
    }
    if cfg.wear_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.wear_sigma).expect("validated sigma");
        for d in next.iter_mut() {
            *d += noise.sample(rng).max(0.0);
        }
    }
    if let Some(a) = action {
        for i in 0..n {
            for j in 0..n {
                let d2 = (i as f64 - a.row as f64).powi(2) + (j as f64 - a.col as f64).powi(2);
                next[i * n + j] -= a.dosage * cfg.heal_amplitude * heal_kernel(cfg, d2);
            }
        }
    }
    for d in next.iter_mut() {
        *d = d.clamp(0.0, 1.0);
    }
    let field = DamageField { n, cells: next };
    let integrity = field.integrity();
    Ok((field, integrity))
}

/// Noisy view of the true field, clamped to `[0, 1]`.
pub fn observe<R: Rng + ?Sized>(cfg: &GridConfig, field: &DamageField, rng: &mut R) -> DamageField {
    if cfg.obs_noise_sigma == 0.0 {
        return field.clone();
    }
    let noise = Normal::new(0.0, cfg.obs_noise_sigma).expect("validated sigma");
    DamageField {
        n: field.n,
        cells: field
            .cells
            .iter()
            .map(|c| (c + noise.sample(rng)).clamp(0.0, 1.0))
            .collect(),
    }
}

/// `n` lines of `n` comma-separated values, six significant digits.
pub fn export_heatmap(field: &DamageField) -> String {
    let mut out = String::new();
    for row in field.cells.chunks(field.n) {
        let line: Vec<String> = row.iter().map(|&v| sig6(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_heatmap(text: &str) -> Result<DamageField> {
    let mut cells = Vec::new();
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        for tok in line.split(',') {
            let v: f64 = tok.trim().parse().map_err(|e| Error::Parse {
                line: idx + 1,
                reason: format!("bad cell `{tok}`: {e}"),
            })?;
            cells.push(v);
        }
    }
    if rows * rows != cells.len() {
        return Err(Error::Parse {
            line: rows,
            reason: format!("{rows} rows but {} values; heatmap must be square", cells.len()),
        });
    }
    DamageField::from_cells(rows, cells)
}

/// Stateful wrapper around [`grid_step`] with its own random streams.
#[derive(Debug, Clone)]
pub struct GridEnv {
    config: GridConfig,
    field: DamageField,
    initial: DamageField,
    rng: SimRng,
    obs_rng: SimRng,
    step: usize,
}

impl GridEnv {
    pub fn new(config: GridConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = config.n;
        let mut env = Self {
            field: DamageField::zeros(n),
            initial: DamageField::zeros(n),
            rng: stream_rng(seed, Stream::Grid),
            obs_rng: stream_rng(seed, Stream::Observation),
            step: 0,
            config,
        };
        env.reset(seed);
        Ok(env)
    }

    /// Central Gaussian defect plus uniform speckle.
    pub fn reset(&mut self, seed: u64) -> &DamageField {
        self.rng = stream_rng(seed, Stream::Grid);
        self.obs_rng = stream_rng(seed, Stream::Observation);
        let cfg = &self.config;
        let bump = DamageField::gaussian_bump(cfg.n, cfg.defect_width);
        let cells = bump
            .cells
            .iter()
            .map(|b| {
                let speck = if cfg.speckle > 0.0 {
                    self.rng.random_range(0.0..cfg.speckle)
                } else {
                    0.0
                };
                (cfg.init_central_defect * b + speck).clamp(0.0, 1.0)
            })
            .collect();
        self.field = DamageField { n: cfg.n, cells };
        self.initial = self.field.clone();
        self.step = 0;
        &self.field
    }

    pub fn with_field(config: GridConfig, field: DamageField, seed: u64) -> Result<Self> {
        let mut env = Self::new(config, seed)?;
        if field.n != env.config.n {
            return Err(Error::Argument(format!(
                "field side {} does not match grid.n = {}",
                field.n, env.config.n
            )));
        }
        env.initial = field.clone();
        env.field = field;
        Ok(env)
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn true_field(&self) -> &DamageField {
        &self.field
    }

    pub fn initial_field(&self) -> &DamageField {
        &self.initial
    }

    pub fn integrity(&self) -> f64 {
        self.field.integrity()
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn observe(&mut self) -> DamageField {
        observe(&self.config, &self.field, &mut self.obs_rng)
    }

    pub fn step(&mut self, action: Option<GridAction>) -> Result<f64> {
        if self.step >= self.config.horizon {
            return Err(Error::Protocol("grid step beyond horizon".into()));
        }
        let (next, integrity) = grid_step(&self.config, &self.field, action, &mut self.rng)?;
        self.field = next;
        self.step += 1;
        Ok(integrity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> GridConfig {
        GridConfig {
            wear_sigma: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn uniform_field_has_zero_stress() {
        let s = laplacian(&DamageField::uniform(6, 0.37));
        assert!(s.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn interior_point_stencil() {
        let mut f = DamageField::zeros(7);
        f.set(3, 3, 1.0);
        let s = laplacian(&f);
        for i in 0..7 {
            for j in 0..7 {
                let expect = match (i, j) {
                    (3, 3) => 4.0,
                    (2, 3) | (4, 3) | (3, 2) | (3, 4) => 1.0,
                    _ => 0.0,
                };
                assert_eq!(s[i * 7 + j], expect, "({i},{j})");
            }
        }
    }

    #[test]
    fn corner_point_mirror_boundary() {
        let mut f = DamageField::zeros(5);
        f.set(0, 0, 1.0);
        let s = laplacian(&f);
        assert_eq!(s[0], 2.0);
        assert_eq!(s[1], 1.0);
        assert_eq!(s[5], 1.0);
    }

    #[test]
    fn single_defect_growth_step() {
        let cfg = quiet();
        let n = cfg.n;
        let c = n / 2;
        let mut f = DamageField::zeros(n);
        f.set(c, c, 0.4);
        let mut rng = stream_rng(0, Stream::Grid);
        let (next, integrity) = grid_step(&cfg, &f, None, &mut rng).unwrap();
        assert!((next.get(c, c) - 0.56).abs() < 1e-12);
        for (i, j) in [(c - 1, c), (c + 1, c), (c, c - 1), (c, c + 1)] {
            assert!((next.get(i, j) - 0.04).abs() < 1e-12);
        }
        assert_eq!(next.get(0, 0), 0.0);
        assert!((integrity - (1.0 - next.mean())).abs() < 1e-15);
    }

    #[test]
    fn zero_field_is_fixed_point_without_wear() {
        let cfg = quiet();
        let mut rng = stream_rng(0, Stream::Grid);
        let f = DamageField::zeros(cfg.n);
        let (next, integrity) = grid_step(&cfg, &f, None, &mut rng).unwrap();
        assert_eq!(next, f);
        assert_eq!(integrity, 1.0);
    }

    #[test]
    fn heal_at_center_removes_amplitude() {
        let cfg = quiet();
        let f = DamageField::uniform(cfg.n, 0.8);
        let mut rng = stream_rng(0, Stream::Grid);
        let a = GridAction {
            row: 4,
            col: 5,
            dosage: 1.0,
        };
        let (next, _) = grid_step(&cfg, &f, Some(a), &mut rng).unwrap();
        assert!((next.get(4, 5) - (0.8 - cfg.heal_amplitude)).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_action_rejected() {
        let cfg = quiet();
        let f = DamageField::zeros(cfg.n);
        let mut rng = stream_rng(0, Stream::Grid);
        let a = GridAction {
            row: cfg.n,
            col: 0,
            dosage: 1.0,
        };
        assert!(matches!(grid_step(&cfg, &f, Some(a), &mut rng), Err(Error::Argument(_))));
    }

    #[test]
    fn noiseless_observation_is_identity() {
        let cfg = GridConfig {
            obs_noise_sigma: 0.0,
            ..Default::default()
        };
        let env = GridEnv::new(cfg.clone(), 3).unwrap();
        let mut rng = stream_rng(0, Stream::Observation);
        assert_eq!(&observe(&cfg, env.true_field(), &mut rng), env.true_field());
    }

    #[test]
    fn observation_noise_std() {
        let cfg = GridConfig::default();
        let f = DamageField::uniform(cfg.n, 0.5);
        let mut rng = stream_rng(11, Stream::Observation);
        let samples: Vec<f64> = (0..10_000).map(|_| observe(&cfg, &f, &mut rng).get(2, 3)).collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples.len() - 1) as f64;
        let std = var.sqrt();
        assert!((std - cfg.obs_noise_sigma).abs() <= 0.1 * cfg.obs_noise_sigma, "{std}");
        let noisy = observe(&cfg, &DamageField::uniform(cfg.n, 0.0), &mut rng);
        assert!(noisy.cells().iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn heatmap_text() {
        let f = DamageField::zeros(2);
        assert_eq!(export_heatmap(&f), "0.00000,0.00000\n0.00000,0.00000\n");
        let mut f = DamageField::zeros(2);
        f.set(0, 1, 0.5);
        assert_eq!(export_heatmap(&f).lines().next().unwrap(), "0.00000,0.500000");
    }

    #[test]
    fn default_initial_integrity_near_protocol_start() {
        let cfg = GridConfig::default();
        let solved = cfg.solve_defect_peak(0.91);
        assert!((solved - cfg.init_central_defect).abs() < 1e-3, "{solved}");
        for seed in 0..50 {
            let env = GridEnv::new(cfg.clone(), seed).unwrap();
            assert!((env.integrity() - 0.91).abs() <= 0.002, "{}", env.integrity());
        }
    }

    #[test]
    fn step_beyond_horizon_is_protocol_error() {
        let cfg = GridConfig {
            horizon: 1,
            ..Default::default()
        };
        let mut env = GridEnv::new(cfg, 0).unwrap();
        env.step(None).unwrap();
        assert!(matches!(env.step(None), Err(Error::Protocol(_))));
    }
}
