//! The three observation channels: noisy final data D̃_i, noisy Brownian
//! source paths G̃_i(t), and the noisy diffusion coefficient Λ_ε(t).
//!
//! All randomness flows through counter-based ChaCha streams keyed by
//! (seed, purpose, replicate, cell), so the channels are mutually independent
//! and adding replicates or grid sizes never perturbs earlier draws.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::{format_f64, DesignGrid};

/// One RNG stream per observation channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseChannel {
    FinalData = 0,
    Source = 1,
    Coefficient = 2,
}

/// Noise scales for all three channels plus the stream key.
#[derive(Debug, Clone)]
pub struct NoiseSpec {
    /// Per-grid-point scale Λ_i; `None` means the constant `v_max` everywhere.
    pub lambda_levels: Option<Vec<f64>>,
    /// Upper bound V_max for every Λ_i and for ϑ.
    pub v_max: f64,
    /// Source-noise scale ϑ.
    pub vartheta: f64,
    /// Coefficient-noise level ε.
    pub eps: f64,
    /// Base RNG seed.
    pub seed: u64,
    /// Replicate index; distinct replicates get disjoint streams.
    pub replicate: u64,
    /// Experiment-cell index (grid/eps combination); disjoint streams per cell.
    pub cell: u64,
}

impl NoiseSpec {
    pub fn new(v_max: f64, vartheta: f64, eps: f64, seed: u64) -> Result<Self> {
        let spec = NoiseSpec {
            lambda_levels: None,
            v_max,
            vartheta,
            eps,
            seed,
            replicate: 0,
            cell: 0,
        };
        spec.validate(None)?;
        Ok(spec)
    }

    pub fn with_replicate(mut self, replicate: u64) -> Self {
        self.replicate = replicate;
        self
    }

    pub fn with_cell(mut self, cell: u64) -> Self {
        self.cell = cell;
        self
    }

    pub fn validate(&self, grid: Option<&DesignGrid>) -> Result<()> {
        if !(self.v_max >= 0.0) {
            return Err(Error::invalid("noise: v_max must be >= 0"));
        }
        if !(0.0..=self.v_max).contains(&self.vartheta) {
            return Err(Error::invalid("noise: vartheta must satisfy 0 <= vartheta <= v_max"));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::invalid("noise: eps must be >= 0"));
        }
        if let Some(levels) = &self.lambda_levels {
            if levels.iter().any(|&l| !(0.0..=self.v_max).contains(&l)) {
                return Err(Error::invalid("noise: every lambda level must satisfy 0 <= Λ_i <= v_max"));
            }
            if let Some(g) = grid {
                if levels.len() != g.len() {
                    return Err(Error::invalid("noise: lambda_levels length must match the grid"));
                }
            }
        }
        Ok(())
    }

    /// Λ_i for grid point i.
    fn level(&self, i: usize) -> f64 {
        match &self.lambda_levels {
            Some(levels) => levels[i],
            None => self.v_max,
        }
    }

    fn rng(&self, channel: NoiseChannel) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // 3 bits channel, 29 bits replicate, 32 bits cell: disjoint by construction
        let stream = (channel as u64) | (self.replicate & 0x1fff_ffff) << 3 | self.cell << 32;
        rng.set_stream(stream);
        rng
    }
}

/// Noisy samples of H and G on the design grid, plus the time nodes the
/// source paths live on.
#[derive(Debug, Clone)]
pub struct GridObservations {
    pub grid: DesignGrid,
    /// D̃_i, one per grid point, grid order.
    pub final_data: Vec<f64>,
    /// G̃_i(t_m): outer index grid point, inner index time node.
    pub source_paths: Vec<Vec<f64>>,
    pub time_nodes: Vec<f64>,
}

fn check_time_nodes(time_nodes: &[f64]) -> Result<()> {
    if time_nodes.is_empty() || time_nodes[0] != 0.0 {
        return Err(Error::invalid("time nodes must start at 0"));
    }
    if time_nodes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("time nodes must be strictly increasing"));
    }
    Ok(())
}

/// D̃_i = H(x_i) + Λ_i·Υ_i with Υ_i iid standard normal from the seeded stream.
pub fn sample_final_observations(
    h_values: &[f64],
    grid: &DesignGrid,
    spec: &NoiseSpec,
) -> Result<Vec<f64>> {
    if h_values.len() != grid.len() {
        return Err(Error::invalid("final observations: H values must cover the grid"));
    }
    spec.validate(Some(grid))?;
    let mut rng = spec.rng(NoiseChannel::FinalData);
    Ok(h_values
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let z: f64 = rng.sample(StandardNormal);
            h + spec.level(i) * z
        })
        .collect())
}

/// G̃_i(t_m) = G(x_i,t_m) + ϑ·Ψ_i(t_m), with Ψ_i independent Brownian motions
/// built from Gaussian increments of variance t_{m+1}−t_m.
///
/// `g_values[i][m]` is G(x_i, t_m).
pub fn sample_source_observations(
    g_values: &[Vec<f64>],
    grid: &DesignGrid,
    time_nodes: &[f64],
    spec: &NoiseSpec,
) -> Result<Vec<Vec<f64>>> {
    check_time_nodes(time_nodes)?;
    if g_values.len() != grid.len() || g_values.iter().any(|row| row.len() != time_nodes.len()) {
        return Err(Error::invalid("source observations: G values must cover grid x time nodes"));
    }
    spec.validate(Some(grid))?;
    let mut rng = spec.rng(NoiseChannel::Source);
    let mut paths = Vec::with_capacity(grid.len());
    for row in g_values {
        let mut path = Vec::with_capacity(time_nodes.len());
        let mut w = 0.0; // Ψ_i(0) = 0
        path.push(row[0]);
        for m in 1..time_nodes.len() {
            let dt = time_nodes[m] - time_nodes[m - 1];
            let z: f64 = rng.sample(StandardNormal);
            w += dt.sqrt() * z;
            path.push(row[m] + spec.vartheta * w);
        }
        paths.push(path);
    }
    Ok(paths)
}

/// Time-sampled scalar diffusion coefficient Λ(t) (or its noisy version).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPath {
    pub time_nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl CoefficientPath {
    pub fn new(time_nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_time_nodes(&time_nodes)?;
        if values.len() != time_nodes.len() {
            return Err(Error::invalid("coefficient path: one value per time node"));
        }
        Ok(CoefficientPath { time_nodes, values })
    }

    pub fn constant(time_nodes: Vec<f64>, value: f64) -> Result<Self> {
        let values = vec![value; time_nodes.len()];
        CoefficientPath::new(time_nodes, values)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// sup-norm band of Eq-style coefficient bounds: A₀ ≤ sup|Λ| < A₁.
    pub fn satisfies_band(&self, a0: f64, a1: f64) -> bool {
        let s = self.sup_abs();
        a0 <= s && s < a1
    }

    /// Piecewise-linear interpolation between nodes; clamped at the ends.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.time_nodes.len();
        if t <= self.time_nodes[0] {
            return self.values[0];
        }
        if t >= self.time_nodes[n - 1] {
            return self.values[n - 1];
        }
        let k = self.time_nodes.partition_point(|&u| u <= t) - 1;
        let (t0, t1) = (self.time_nodes[k], self.time_nodes[k + 1]);
        let w = (t - t0) / (t1 - t0);
        self.values[k] * (1.0 - w) + self.values[k + 1] * w
    }

    /// ∫_{t0}^{t1} Λ, exact for the piecewise-linear interpolant.
    pub fn integrate(&self, t0: f64, t1: f64) -> f64 {
        if t1 < t0 {
            return -self.integrate(t1, t0);
        }
        let mut acc = 0.0;
        let mut a = t0;
        let mut va = self.value_at(a);
        for (k, &tk) in self.time_nodes.iter().enumerate() {
            if tk <= a {
                continue;
            }
            if tk >= t1 {
                break;
            }
            let vb = self.values[k];
            acc += 0.5 * (va + vb) * (tk - a);
            a = tk;
            va = vb;
        }
        acc + 0.5 * (va + self.value_at(t1)) * (t1 - a)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (t, v) in self.time_nodes.iter().zip(&self.values) {
            let _ = writeln!(s, "{} {}", format_f64(*t), format_f64(*v));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut time_nodes = Vec::new();
        let mut values = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() != 2 {
                return Err(Error::Parse(format!("coefficient path: expected `t value`, got `{line}`")));
            }
            time_nodes.push(tokens[0].parse().map_err(|e| Error::Parse(format!("bad time: {e}")))?);
            values.push(tokens[1].parse().map_err(|e| Error::Parse(format!("bad value: {e}")))?);
        }
        CoefficientPath::new(time_nodes, values)
    }
}

/// Outcome of the Λ_ε rejection sampler.
#[derive(Debug, Clone)]
pub struct SampledCoefficient {
    pub path: CoefficientPath,
    /// Draws discarded before one satisfied the (A₀, A₁) band.
    pub rejections: u32,
}

const MAX_REJECTIONS: u32 = 1000;

/// Λ_ε(t_m) = Λ(t_m) + ε·ξ̄(t_m) with ξ̄ a Brownian path.
///
/// Paths violating A₀ ≤ sup|Λ_ε| < A₁ are rejected and resampled (clamping
/// would change the noise law silently); the rejection count is reported.
pub fn sample_diffusion_path(
    truth: &CoefficientPath,
    a0: f64,
    a1: f64,
    spec: &NoiseSpec,
) -> Result<SampledCoefficient> {
    if !(0.0 < a0 && a0 < a1) {
        return Err(Error::invalid("diffusion path: need 0 < A0 < A1"));
    }
    if !truth.satisfies_band(a0, a1) {
        return Err(Error::invalid("diffusion path: truth violates the (A0, A1) band"));
    }
    let mut rng = spec.rng(NoiseChannel::Coefficient);
    let n = truth.time_nodes.len();
    let mut rejections = 0u32;
    loop {
        let mut values = Vec::with_capacity(n);
        let mut xi = 0.0; // ξ̄(0) = 0
        values.push(truth.values[0]);
        for m in 1..n {
            let dt = truth.time_nodes[m] - truth.time_nodes[m - 1];
            let z: f64 = rng.sample(StandardNormal);
            xi += dt.sqrt() * z;
            values.push(truth.values[m] + spec.eps * xi);
        }
        let path = CoefficientPath::new(truth.time_nodes.clone(), values)?;
        if path.satisfies_band(a0, a1) {
            return Ok(SampledCoefficient { path, rejections });
        }
        rejections += 1;
        if rejections >= MAX_REJECTIONS {
            return Err(Error::Numerical(format!(
                "diffusion path: {MAX_REJECTIONS} consecutive rejections; eps={} too large for the band ({a0}, {a1})",
                spec.eps
            )));
        }
    }
}

// ---------------------------------------------------------------------------
// Observations file: grid header, `final:` block, `source:` block.
// ---------------------------------------------------------------------------

impl GridObservations {
    pub fn new(
        grid: DesignGrid,
        final_data: Vec<f64>,
        source_paths: Vec<Vec<f64>>,
        time_nodes: Vec<f64>,
    ) -> Result<Self> {
        check_time_nodes(&time_nodes)?;
        if final_data.len() != grid.len() {
            return Err(Error::invalid("observations: one final value per grid point"));
        }
        if source_paths.len() != grid.len()
            || source_paths.iter().any(|p| p.len() != time_nodes.len())
        {
            return Err(Error::invalid("observations: every source path must cover the time nodes"));
        }
        Ok(GridObservations {
            grid,
            final_data,
            source_paths,
            time_nodes,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "grid d={}", self.grid.dim());
        for n in self.grid.counts() {
            let _ = write!(s, " {}", n);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "final:");
        for v in &self.final_data {
            let _ = writeln!(s, "{}", format_f64(*v));
        }
        let _ = writeln!(s, "source:");
        let nodes: Vec<String> = self.time_nodes.iter().map(|t| format_f64(*t)).collect();
        let _ = writeln!(s, "{}", nodes.join(" "));
        for path in &self.source_paths {
            let row: Vec<String> = path.iter().map(|v| format_f64(*v)).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("observations: empty input".into()))?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() < 3 || tokens[0] != "grid" || !tokens[1].starts_with("d=") {
            return Err(Error::Parse(format!("observations: bad grid header `{header}`")));
        }
        let dim: usize = tokens[1][2..]
            .parse()
            .map_err(|e| Error::Parse(format!("observations: bad dimension: {e}")))?;
        if tokens.len() != 2 + dim {
            return Err(Error::Parse("observations: grid header count mismatch".into()));
        }
        let counts: std::result::Result<Vec<usize>, _> =
            tokens[2..].iter().map(|t| t.parse()).collect();
        let counts = counts.map_err(|e| Error::Parse(format!("observations: bad count: {e}")))?;
        let grid = DesignGrid::new(&counts)?;

        let expect = |got: Option<&str>, want: &str| -> Result<()> {
            match got {
                Some(l) if l.trim() == want => Ok(()),
                other => Err(Error::Parse(format!("observations: expected `{want}`, got {other:?}"))),
            }
        };
        expect(lines.next(), "final:")?;
        let mut final_data = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("observations: truncated final block".into()))?;
            final_data.push(
                line.trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("observations: bad final value: {e}")))?,
            );
        }
        expect(lines.next(), "source:")?;
        let node_line = lines
            .next()
            .ok_or_else(|| Error::Parse("observations: missing time node row".into()))?;
        let time_nodes: std::result::Result<Vec<f64>, _> =
            node_line.split_whitespace().map(|t| t.parse()).collect();
        let time_nodes = time_nodes.map_err(|e| Error::Parse(format!("observations: bad time node: {e}")))?;
        let mut source_paths = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("observations: truncated source block".into()))?;
            let row: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(|t| t.parse()).collect();
            source_paths.push(row.map_err(|e| Error::Parse(format!("observations: bad source value: {e}")))?);
        }
        GridObservations::new(grid, final_data, source_paths, time_nodes)
    }
}
