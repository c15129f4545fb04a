//! SCMA pilot-phase signal model.
//!
//! Devices are attached to resource elements through a sparse factor graph;
//! each device owns one sparse codeword, scaled by its QPSK pilot to form a
//! column of the measurement matrix `Phi`. A frame superimposes the columns
//! of the active devices through independent Rayleigh channels and adds
//! circularly-symmetric Gaussian noise:
//!
//! ```text
//! y_p = Phi (a ∘ h) + w
//! ```

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("cannot give {devices} devices distinct patterns: only C({resources},{nonzeros}) = {available} exist")]
    TooManyDevices {
        resources: usize,
        devices: usize,
        nonzeros: usize,
        available: u128,
    },
    #[error("invalid factor graph: {0}")]
    InvalidGraph(String),
    #[error("codeword table does not match the factor graph at resource {resource}, device {device}")]
    PatternMismatch { resource: usize, device: usize },
    #[error("codeword for device {0} is all zeros")]
    ZeroColumn(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("number of active devices {active} outside 1..={devices}")]
    ActiveCount { active: usize, devices: usize },
    #[error("codebook file: {0}")]
    File(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Device-to-resource connectivity of an SCMA codebook.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorGraph {
    num_resources: usize,
    nonzeros: usize,
    columns: Vec<Vec<usize>>,
}

impl FactorGraph {
    /// First `devices` `nonzeros`-subsets of `0..resources` in lexicographic order.
    pub fn lexicographic(resources: usize, devices: usize, nonzeros: usize) -> Result<Self> {
        if resources == 0 || devices == 0 || nonzeros == 0 {
            return Err(SignalError::InvalidGraph(
                "L, N and J must all be positive".into(),
            ));
        }
        if nonzeros > resources {
            return Err(SignalError::InvalidGraph(format!(
                "J = {nonzeros} exceeds L = {resources}"
            )));
        }
        let available = binomial(resources, nonzeros);
        if devices as u128 > available {
            return Err(SignalError::TooManyDevices {
                resources,
                devices,
                nonzeros,
                available,
            });
        }

        let mut columns = Vec::with_capacity(devices);
        let mut combo: Vec<usize> = (0..nonzeros).collect();
        loop {
            columns.push(combo.clone());
            if columns.len() == devices {
                break;
            }
            // advance to the next combination
            let mut i = nonzeros;
            while i > 0 {
                i -= 1;
                if combo[i] < resources - nonzeros + i {
                    combo[i] += 1;
                    for k in i + 1..nonzeros {
                        combo[k] = combo[k - 1] + 1;
                    }
                    break;
                }
            }
        }
        Ok(Self {
            num_resources: resources,
            nonzeros,
            columns,
        })
    }

    /// Graph from explicit per-device resource sets.
    pub fn from_columns(resources: usize, nonzeros: usize, columns: Vec<Vec<usize>>) -> Result<Self> {
        if resources == 0 || nonzeros == 0 || columns.is_empty() {
            return Err(SignalError::InvalidGraph(
                "L, N and J must all be positive".into(),
            ));
        }
        let mut normalized = Vec::with_capacity(columns.len());
        for (n, col) in columns.into_iter().enumerate() {
            if col.len() != nonzeros {
                return Err(SignalError::InvalidGraph(format!(
                    "device {n} has {} resources, expected {nonzeros}",
                    col.len()
                )));
            }
            let mut sorted = col.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != nonzeros {
                return Err(SignalError::InvalidGraph(format!(
                    "device {n} repeats a resource"
                )));
            }
            if let Some(&bad) = sorted.iter().find(|&&l| l >= resources) {
                return Err(SignalError::InvalidGraph(format!(
                    "device {n} uses resource {bad} >= L = {resources}"
                )));
            }
            normalized.push(sorted);
        }
        for a in 0..normalized.len() {
            for b in a + 1..normalized.len() {
                if normalized[a] == normalized[b] {
                    return Err(SignalError::InvalidGraph(format!(
                        "devices {a} and {b} share the same pattern"
                    )));
                }
            }
        }
        Ok(Self {
            num_resources: resources,
            nonzeros,
            columns: normalized,
        })
    }

    pub fn num_resources(&self) -> usize {
        self.num_resources
    }

    pub fn num_devices(&self) -> usize {
        self.columns.len()
    }

    pub fn nonzeros_per_codeword(&self) -> usize {
        self.nonzeros
    }

    /// Resource indices used by device `n`, ascending.
    pub fn column(&self, n: usize) -> &[usize] {
        &self.columns[n]
    }

    pub fn columns(&self) -> &[Vec<usize>] {
        &self.columns
    }

    pub fn connects(&self, resource: usize, device: usize) -> bool {
        self.columns[device].contains(&resource)
    }

    /// Devices per resource element divided by resources, i.e. N / L.
    pub fn overloading(&self) -> f64 {
        self.num_devices() as f64 / self.num_resources as f64
    }
}

/// Sparse SCMA codebook: one unit-norm codeword per device.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    matrix: DMatrix<Complex64>,
    graph: FactorGraph,
}

impl Codebook {
    /// Builds the codebook for `graph`.
    ///
    /// Without a table, the k-th nonzero of device n is `exp(i 2π n k / (N J))`.
    /// A supplied dense L×N table must be nonzero exactly on the graph's
    /// pattern. Columns are normalized to unit Euclidean norm in both cases.
    pub fn build(graph: FactorGraph, table: Option<&DMatrix<Complex64>>) -> Result<Self> {
        let l = graph.num_resources();
        let n_dev = graph.num_devices();
        let j = graph.nonzeros_per_codeword();
        let mut matrix = DMatrix::<Complex64>::zeros(l, n_dev);

        match table {
            None => {
                for n in 0..n_dev {
                    for (k, &res) in graph.column(n).iter().enumerate() {
                        let phase = 2.0 * PI * (n * k) as f64 / (n_dev * j) as f64;
                        matrix[(res, n)] = Complex64::from_polar(1.0, phase);
                    }
                }
            }
            Some(values) => {
                if values.nrows() != l || values.ncols() != n_dev {
                    return Err(SignalError::Dimension(format!(
                        "codeword table is {}x{}, graph needs {l}x{n_dev}",
                        values.nrows(),
                        values.ncols()
                    )));
                }
                for n in 0..n_dev {
                    if values.column(n).iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
                        return Err(SignalError::ZeroColumn(n));
                    }
                    for res in 0..l {
                        let v = values[(res, n)];
                        if !(v.re.is_finite() && v.im.is_finite()) {
                            return Err(SignalError::File(format!(
                                "non-finite codeword entry at ({res}, {n})"
                            )));
                        }
                        let nonzero = v != Complex64::new(0.0, 0.0);
                        if nonzero != graph.connects(res, n) {
                            return Err(SignalError::PatternMismatch {
                                resource: res,
                                device: n,
                            });
                        }
                    }
                }
                matrix.copy_from(values);
            }
        }

        for n in 0..n_dev {
            let norm = matrix.column(n).norm();
            if norm == 0.0 {
                return Err(SignalError::ZeroColumn(n));
            }
            // already-unit columns are kept verbatim so saved tables reload bit-exactly
            if (norm - 1.0).abs() > 4.0 * f64::EPSILON {
                matrix.column_mut(n).unscale_mut(norm);
            }
        }
        Ok(Self { matrix, graph })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn num_resources(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_devices(&self) -> usize {
        self.matrix.ncols()
    }

    /// Loads a codebook from the JSON interchange format.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: CodebookFile =
            serde_json::from_str(&text).map_err(|e| SignalError::File(e.to_string()))?;
        file.into_codebook()
    }

    /// Writes the codebook in the JSON interchange format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CodebookFile::from_codebook(self);
        let text = serde_json::to_string_pretty(&file).map_err(|e| SignalError::File(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// On-disk codebook: `values[n]` lists the `[re, im]` entries of device n
/// in the order of `pattern[n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct CodebookFile {
    pub L: usize,
    pub N: usize,
    pub J: usize,
    pub pattern: Vec<Vec<usize>>,
    pub values: Vec<Vec<[f64; 2]>>,
}

impl CodebookFile {
    pub fn from_codebook(cb: &Codebook) -> Self {
        let graph = cb.graph();
        let values = (0..graph.num_devices())
            .map(|n| {
                graph
                    .column(n)
                    .iter()
                    .map(|&l| {
                        let v = cb.matrix()[(l, n)];
                        [v.re, v.im]
                    })
                    .collect()
            })
            .collect();
        Self {
            L: graph.num_resources(),
            N: graph.num_devices(),
            J: graph.nonzeros_per_codeword(),
            pattern: graph.columns().to_vec(),
            values,
        }
    }

    pub fn into_codebook(self) -> Result<Codebook> {
        if self.pattern.len() != self.N || self.values.len() != self.N {
            return Err(SignalError::File(format!(
                "expected {} pattern and value columns, got {} and {}",
                self.N,
                self.pattern.len(),
                self.values.len()
            )));
        }
        // The file order of each pattern column pairs with its values; the
        // graph sorts indices, so place values before validation.
        let mut dense = DMatrix::<Complex64>::zeros(self.L, self.N);
        for (n, (rows, vals)) in self.pattern.iter().zip(&self.values).enumerate() {
            if rows.len() != vals.len() {
                return Err(SignalError::File(format!(
                    "device {n}: {} pattern entries but {} values",
                    rows.len(),
                    vals.len()
                )));
            }
            for (&l, &[re, im]) in rows.iter().zip(vals) {
                if l >= self.L {
                    return Err(SignalError::File(format!(
                        "device {n}: resource {l} >= L = {}",
                        self.L
                    )));
                }
                dense[(l, n)] = Complex64::new(re, im);
            }
        }
        let graph = FactorGraph::from_columns(self.L, self.J, self.pattern)?;
        Codebook::build(graph, Some(&dense))
    }
}

/// Per-device QPSK pilot symbols, fixed for a whole experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotAssignment {
    symbols: Vec<Complex64>,
}

/// `exp(i (2k+1) π/4)` for k in 0..4.
pub fn qpsk_point(k: usize) -> Complex64 {
    Complex64::from_polar(1.0, (2 * (k % 4) + 1) as f64 * PI / 4.0)
}

impl PilotAssignment {
    /// Deterministic pilots for `devices` devices derived from `seed`.
    pub fn assign(devices: usize, seed: u64) -> Self {
        let mut rng = rng::stream_rng(seed, rng::stream::PILOTS);
        let symbols = (0..devices)
            .map(|_| qpsk_point(rng.random_range(0..4)))
            .collect();
        Self { symbols }
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Pilot-scaled codewords as seen by the base station.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    phi: DMatrix<Complex64>,
}

impl MeasurementMatrix {
    pub fn new(codebook: &Codebook, pilots: &PilotAssignment) -> Result<Self> {
        Self::with_symbols(codebook, pilots.symbols())
    }

    /// Column n is `C[:, n] * symbols[n]`.
    pub fn with_symbols(codebook: &Codebook, symbols: &[Complex64]) -> Result<Self> {
        if symbols.len() != codebook.num_devices() {
            return Err(SignalError::Dimension(format!(
                "{} pilot symbols for {} devices",
                symbols.len(),
                codebook.num_devices()
            )));
        }
        let mut phi = codebook.matrix().clone();
        for (n, &s) in symbols.iter().enumerate() {
            for v in phi.column_mut(n).iter_mut() {
                *v *= s;
            }
        }
        Ok(Self { phi })
    }

    /// Wraps an arbitrary complex matrix, e.g. for solver tests.
    pub fn from_matrix(phi: DMatrix<Complex64>) -> Self {
        Self { phi }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.phi
    }

    pub fn num_resources(&self) -> usize {
        self.phi.nrows()
    }

    pub fn num_devices(&self) -> usize {
        self.phi.ncols()
    }

    pub fn column(&self, n: usize) -> DVector<Complex64> {
        self.phi.column(n).into_owned()
    }

    pub fn apply(&self, g: &DVector<Complex64>) -> DVector<Complex64> {
        &self.phi * g
    }
}

/// Binary device activity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivityVector {
    active: Vec<bool>,
}

impl ActivityVector {
    pub fn inactive(devices: usize) -> Self {
        Self {
            active: vec![false; devices],
        }
    }

    pub fn from_bools(active: Vec<bool>) -> Self {
        Self { active }
    }

    /// Activity with exactly the listed devices on; panics on out-of-range indices.
    pub fn from_support(devices: usize, support: &[usize]) -> Self {
        let mut active = vec![false; devices];
        for &n in support {
            active[n] = true;
        }
        Self { active }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn is_active(&self, n: usize) -> bool {
        self.active[n]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.active
    }

    /// Active device indices, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(n, &a)| a.then_some(n))
            .collect()
    }
}

/// One simulated pilot transmission.
#[derive(Debug, Clone)]
pub struct Frame {
    pub activity: ActivityVector,
    pub channel: DVector<Complex64>,
    pub g: DVector<Complex64>,
    pub noise: DVector<Complex64>,
    pub noise_variance: f64,
    pub y: DVector<Complex64>,
}

impl Frame {
    /// Assembles `y = Phi (a ∘ h) + w` from explicit ingredients.
    pub fn synthesize(
        phi: &MeasurementMatrix,
        activity: ActivityVector,
        channel: DVector<Complex64>,
        noise: DVector<Complex64>,
        noise_variance: f64,
    ) -> Result<Self> {
        let n_dev = phi.num_devices();
        if activity.len() != n_dev || channel.len() != n_dev || noise.len() != phi.num_resources() {
            return Err(SignalError::Dimension(format!(
                "frame ingredients do not fit a {}x{n_dev} measurement matrix",
                phi.num_resources()
            )));
        }
        let g = DVector::from_iterator(
            n_dev,
            (0..n_dev).map(|n| {
                if activity.is_active(n) {
                    channel[n]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
        );
        let y = phi.apply(&g) + &noise;
        Ok(Self {
            activity,
            channel,
            g,
            noise,
            noise_variance,
            y,
        })
    }
}

/// One CN(0, variance) draw.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Noise variance per resource element for a given SNR.
///
/// Signal power is the average received power per resource element with m
/// active unit-variance channels: `(m / L) * mean_n ||phi_n||^2`.
pub fn snr_to_noise_variance(snr_db: f64, phi: &MeasurementMatrix, active: usize) -> f64 {
    let l = phi.num_resources() as f64;
    let n_dev = phi.num_devices();
    let mean_col_power = (0..n_dev)
        .map(|n| phi.matrix().column(n).norm_squared())
        .sum::<f64>()
        / n_dev as f64;
    let signal_power = active as f64 / l * mean_col_power;
    signal_power / 10f64.powf(snr_db / 10.0)
}

/// Draws a frame with `active` devices chosen uniformly at the given SNR.
pub fn sample_frame<R: Rng + ?Sized>(
    phi: &MeasurementMatrix,
    active: usize,
    snr_db: f64,
    rng: &mut R,
) -> Result<Frame> {
    let variance = snr_to_noise_variance(snr_db, phi, active);
    sample_frame_with_variance(phi, active, variance, rng)
}

/// Same as [`sample_frame`] but with an explicit noise variance.
pub fn sample_frame_with_variance<R: Rng + ?Sized>(
    phi: &MeasurementMatrix,
    active: usize,
    noise_variance: f64,
    rng: &mut R,
) -> Result<Frame> {
    let n_dev = phi.num_devices();
    if active == 0 || active > n_dev {
        return Err(SignalError::ActiveCount {
            active,
            devices: n_dev,
        });
    }
    let support = rand::seq::index::sample(rng, n_dev, active).into_vec();
    let activity = ActivityVector::from_support(n_dev, &support);
    let channel = DVector::from_iterator(n_dev, (0..n_dev).map(|_| complex_gaussian(rng, 1.0)));
    let noise = DVector::from_iterator(
        phi.num_resources(),
        (0..phi.num_resources()).map(|_| complex_gaussian(rng, noise_variance)),
    );
    Frame::synthesize(phi, activity, channel, noise, noise_variance)
}

/// Factor graph, codebook, pilots and measurement matrix of one system.
#[derive(Debug, Clone)]
pub struct System {
    pub codebook: Codebook,
    pub pilots: PilotAssignment,
    pub phi: MeasurementMatrix,
}

impl System {
    /// Lexicographic graph with the built-in codebook, or a codebook file.
    pub fn build(
        resources: usize,
        devices: usize,
        nonzeros: usize,
        codebook_path: Option<&Path>,
        seed: u64,
    ) -> Result<Self> {
        let codebook = match codebook_path {
            Some(path) => {
                let cb = Codebook::load(path)?;
                let g = cb.graph();
                if g.num_resources() != resources
                    || g.num_devices() != devices
                    || g.nonzeros_per_codeword() != nonzeros
                {
                    return Err(SignalError::Dimension(format!(
                        "codebook file is L={} N={} J={}, system wants L={resources} N={devices} J={nonzeros}",
                        g.num_resources(),
                        g.num_devices(),
                        g.nonzeros_per_codeword()
                    )));
                }
                cb
            }
            None => Codebook::build(FactorGraph::lexicographic(resources, devices, nonzeros)?, None)?,
        };
        let pilots = PilotAssignment::assign(devices, seed);
        let phi = MeasurementMatrix::new(&codebook, &pilots)?;
        Ok(Self {
            codebook,
            pilots,
            phi,
        })
    }
}
