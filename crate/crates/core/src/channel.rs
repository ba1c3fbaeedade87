//! Planar array geometry and MIMO channel matrix synthesis.
//!
//! Every entry uses the exact spherical-wave distance between its element
//! pair. The line-of-sight matrix is deterministic; the re-radiation matrix
//! carries one uniformly distributed phase per entry, drawn from a seeded
//! ChaCha8 stream in row-major order (receiver index outer, transmitter
//! index inner). Seeds for independent realizations come from
//! [`derive_seed`].

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::propagation::{free_space_amplitude, k_factor, wavelength, SPEED_OF_LIGHT};

/// Minimum ratio of link distance to array aperture for the Rician
/// decomposition to apply.
pub const FAR_FIELD_RATIO: f64 = 10.0;

pub type Point3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("element count {0} is not a positive perfect square")]
    NotPerfectSquare(usize),
    #[error("frequency must be positive and finite, got {0}")]
    InvalidFrequency(f64),
    #[error("absorption coefficient must be non-negative and finite, got {0}")]
    InvalidAbsorption(f64),
    #[error("array normal must be a non-zero finite vector")]
    InvalidNormal,
    #[error("rx element {rx} coincides with tx element {tx}")]
    CoincidentElements { rx: usize, tx: usize },
    #[error("distance {distance} m is below {FAR_FIELD_RATIO} x aperture ({aperture} m)")]
    NearField { distance: f64, aperture: f64 },
    #[error("matrix has a non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("malformed matrix dump at line {line}: {reason}")]
    MalformedDump { line: usize, reason: String },
}

/// Square uniform planar array with half-wavelength spacing.
///
/// Elements are stored row-major: index `r * side + c` sits at
/// `center + (c - (side-1)/2)·s·u + (r - (side-1)/2)·s·v`, where `u` and `v`
/// are the in-plane axes from [`ArrayGeometry::plane_axes`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    positions: Vec<Point3>,
    side: usize,
    spacing: f64,
    center: Point3,
    normal: Point3,
}

impl ArrayGeometry {
    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn center(&self) -> Point3 {
        self.center
    }

    pub fn normal(&self) -> Point3 {
        self.normal
    }

    /// Largest distance between two elements (the grid diagonal).
    pub fn aperture(&self) -> f64 {
        (self.side - 1) as f64 * self.spacing * std::f64::consts::SQRT_2
    }

    /// In-plane unit axes `(u, v)`. They are projections of the two
    /// coordinate axes least aligned with the normal, so flipping the normal
    /// leaves the grid layout unchanged and facing arrays share one layout.
    pub fn plane_axes(normal: Point3) -> (Point3, Point3) {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| normal[a].abs().total_cmp(&normal[b].abs()));
        let project = |axis: usize| {
            let mut e = [0.0; 3];
            e[axis] = 1.0;
            let dot = normal[axis];
            [
                e[0] - dot * normal[0],
                e[1] - dot * normal[1],
                e[2] - dot * normal[2],
            ]
        };
        let u = unit(project(order[0]));
        let w = project(order[1]);
        let along = dot(u, w);
        let v = unit([
            w[0] - along * u[0],
            w[1] - along * u[1],
            w[2] - along * u[2],
        ]);
        (u, v)
    }
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn unit(a: Point3) -> Point3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

fn distance(a: Point3, b: Point3) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn perfect_square_side(n: usize) -> Option<usize> {
    if n == 0 {
        return None;
    }
    let mut side = (n as f64).sqrt().round() as usize;
    while side * side > n {
        side -= 1;
    }
    while (side + 1) * (side + 1) <= n {
        side += 1;
    }
    (side * side == n).then_some(side)
}

/// Builds a √n × √n array with spacing c/(2f), centered at `center` in the
/// plane orthogonal to `normal`.
pub fn build_square_array(
    n: usize,
    frequency: f64,
    center: Point3,
    normal: Point3,
) -> Result<ArrayGeometry, ChannelError> {
    let side = perfect_square_side(n).ok_or(ChannelError::NotPerfectSquare(n))?;
    if !(frequency.is_finite() && frequency > 0.0) {
        return Err(ChannelError::InvalidFrequency(frequency));
    }
    let norm = dot(normal, normal).sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(ChannelError::InvalidNormal);
    }
    let normal = unit(normal);
    let (u, v) = ArrayGeometry::plane_axes(normal);
    let spacing = SPEED_OF_LIGHT / (2.0 * frequency);
    let mid = (side as f64 - 1.0) / 2.0;
    let mut positions = Vec::with_capacity(n);
    for r in 0..side {
        for c in 0..side {
            let a = (c as f64 - mid) * spacing;
            let b = (r as f64 - mid) * spacing;
            positions.push([
                center[0] + a * u[0] + b * v[0],
                center[1] + a * u[1] + b * v[1],
                center[2] + a * u[2] + b * v[2],
            ]);
        }
    }
    Ok(ArrayGeometry {
        positions,
        side,
        spacing,
        center,
        normal,
    })
}

/// Two parallel arrays facing each other broadside: transmitter at the
/// origin looking along +z, receiver at `(0, 0, distance)` looking back.
pub fn facing_arrays(
    n: usize,
    frequency: f64,
    distance: f64,
) -> Result<(ArrayGeometry, ArrayGeometry), ChannelError> {
    let tx = build_square_array(n, frequency, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0])?;
    let rx = build_square_array(n, frequency, [0.0, 0.0, distance], [0.0, 0.0, -1.0])?;
    Ok((tx, rx))
}

/// Euclidean distance between receiver element `i` (row) and transmitter
/// element `j` (column).
pub fn pairwise_distances(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
) -> Result<DMatrix<f64>, ChannelError> {
    let mut out = DMatrix::zeros(rx.len(), tx.len());
    for (i, &p) in rx.positions.iter().enumerate() {
        for (j, &q) in tx.positions.iter().enumerate() {
            let d = distance(p, q);
            if d <= 0.0 {
                return Err(ChannelError::CoincidentElements { rx: i, tx: j });
            }
            out[(i, j)] = d;
        }
    }
    Ok(out)
}

/// Which physical part of the channel a matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Los,
    Reradiation,
    Total,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Los => "los",
            Provenance::Reradiation => "reradiation",
            Provenance::Total => "total",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "los" => Some(Provenance::Los),
            "reradiation" => Some(Provenance::Reradiation),
            "total" => Some(Provenance::Total),
            _ => None,
        }
    }
}

/// Complex n_r × n_t amplitude-gain matrix at one carrier frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub entries: DMatrix<Complex64>,
    pub frequency: f64,
    pub provenance: Provenance,
    pub seed: Option<u64>,
}

impl ChannelMatrix {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    /// Sum of |h_ij|².
    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|h| h.norm_sqr()).sum()
    }

    pub fn check_finite(&self) -> Result<(), ChannelError> {
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                let h = self.entries[(i, j)];
                if !(h.re.is_finite() && h.im.is_finite()) {
                    return Err(ChannelError::NonFinite(i, j));
                }
            }
        }
        Ok(())
    }

    /// Matrix dump: `#`-prefixed metadata lines (f, k, d, provenance, seed),
    /// a `row,col,re,im` header, then one entry per line in row-major order.
    pub fn to_csv(&self, absorption: f64, distance: f64) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# f={:e}", self.frequency);
        let _ = writeln!(out, "# k={absorption:e}");
        let _ = writeln!(out, "# d={distance:e}");
        let _ = writeln!(out, "# provenance={}", self.provenance.as_str());
        match self.seed {
            Some(seed) => {
                let _ = writeln!(out, "# seed={seed}");
            }
            None => out.push_str("# seed=none\n"),
        }
        out.push_str("row,col,re,im\n");
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                let h = self.entries[(i, j)];
                let _ = writeln!(out, "{i},{j},{:e},{:e}", h.re, h.im);
            }
        }
        out
    }

    /// Reads a dump written by [`ChannelMatrix::to_csv`]; the matrix shape is
    /// taken from the largest row and column indices.
    pub fn from_csv(text: &str) -> Result<Self, ChannelError> {
        let bad = |line: usize, reason: &str| ChannelError::MalformedDump {
            line,
            reason: reason.to_string(),
        };
        let mut frequency = None;
        let mut provenance = None;
        let mut seed = None;
        let mut header_seen = false;
        let mut cells = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let row = raw.trim();
            if row.is_empty() {
                continue;
            }
            if let Some(meta) = row.strip_prefix('#') {
                let Some((key, value)) = meta.trim().split_once('=') else {
                    return Err(bad(line, "metadata must be `# key=value`"));
                };
                match key.trim() {
                    "f" => {
                        frequency = Some(
                            value
                                .parse::<f64>()
                                .map_err(|_| bad(line, "bad frequency"))?,
                        )
                    }
                    "provenance" => {
                        provenance = Some(
                            Provenance::parse(value.trim())
                                .ok_or_else(|| bad(line, "bad provenance"))?,
                        )
                    }
                    "seed" => {
                        seed = match value.trim() {
                            "none" => None,
                            s => Some(s.parse::<u64>().map_err(|_| bad(line, "bad seed"))?),
                        }
                    }
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if row != "row,col,re,im" {
                    return Err(bad(line, "expected `row,col,re,im` header"));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != 4 {
                return Err(bad(line, "expected 4 fields"));
            }
            let i: usize = fields[0].parse().map_err(|_| bad(line, "bad row index"))?;
            let j: usize = fields[1]
                .parse()
                .map_err(|_| bad(line, "bad column index"))?;
            let re: f64 = fields[2].parse().map_err(|_| bad(line, "bad real part"))?;
            let im: f64 = fields[3]
                .parse()
                .map_err(|_| bad(line, "bad imaginary part"))?;
            cells.push((i, j, Complex64::new(re, im)));
        }
        let frequency = frequency.ok_or_else(|| bad(0, "missing `# f=` line"))?;
        let provenance = provenance.ok_or_else(|| bad(0, "missing `# provenance=` line"))?;
        let nrows = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
        let ncols = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
        if cells.len() != nrows * ncols {
            return Err(bad(0, "entry count does not fill the matrix"));
        }
        let mut entries = DMatrix::zeros(nrows, ncols);
        for (i, j, h) in cells {
            entries[(i, j)] = h;
        }
        Ok(Self {
            entries,
            frequency,
            provenance,
            seed,
        })
    }
}

fn validate_medium(frequency: f64, absorption: f64) -> Result<(), ChannelError> {
    if !(frequency.is_finite() && frequency > 0.0) {
        return Err(ChannelError::InvalidFrequency(frequency));
    }
    if !(absorption.is_finite() && absorption >= 0.0) {
        return Err(ChannelError::InvalidAbsorption(absorption));
    }
    Ok(())
}

/// Deterministic line-of-sight matrix: modulus (c/4πf d_ij)·e^{-k d_ij/2},
/// phase 2π d_ij/λ.
pub fn los_channel(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    frequency: f64,
    absorption: f64,
) -> Result<ChannelMatrix, ChannelError> {
    validate_medium(frequency, absorption)?;
    let distances = pairwise_distances(tx, rx)?;
    let lambda = wavelength(frequency);
    let entries = distances.map(|d| {
        let modulus = free_space_amplitude(frequency, d) * (-0.5 * absorption * d).exp();
        // reduce to a fraction of a cycle before scaling to radians
        let cycles = (d / lambda).rem_euclid(1.0);
        Complex64::from_polar(modulus, 2.0 * PI * cycles)
    });
    Ok(ChannelMatrix {
        entries,
        frequency,
        provenance: Provenance::Los,
        seed: None,
    })
}

/// Re-radiation matrix: modulus (1-e^{-k d_ij})^{1/2}·(c/4πf d_ij) with an
/// i.i.d. uniform phase per entry drawn from `seed`.
pub fn reradiation_channel(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    frequency: f64,
    absorption: f64,
    seed: u64,
) -> Result<ChannelMatrix, ChannelError> {
    validate_medium(frequency, absorption)?;
    let distances = pairwise_distances(tx, rx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nr, nt) = distances.shape();
    let mut entries = DMatrix::zeros(nr, nt);
    for i in 0..nr {
        for j in 0..nt {
            let d = distances[(i, j)];
            let beta: f64 = rng.random();
            let modulus = (-(-absorption * d).exp_m1()).sqrt() * free_space_amplitude(frequency, d);
            entries[(i, j)] = Complex64::from_polar(modulus, 2.0 * PI * beta);
        }
    }
    Ok(ChannelMatrix {
        entries,
        frequency,
        provenance: Provenance::Reradiation,
        seed: Some(seed),
    })
}

/// The two constituents of one channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelComponents {
    pub los: ChannelMatrix,
    pub reradiation: ChannelMatrix,
    /// Larger of the two array apertures, m.
    pub aperture: f64,
}

impl ChannelComponents {
    /// Elementwise sum of the LoS and re-radiation parts.
    pub fn total(&self) -> ChannelMatrix {
        ChannelMatrix {
            entries: &self.los.entries + &self.reradiation.entries,
            frequency: self.los.frequency,
            provenance: Provenance::Total,
            seed: self.reradiation.seed,
        }
    }
}

pub fn channel_components(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    frequency: f64,
    absorption: f64,
    seed: u64,
) -> Result<ChannelComponents, ChannelError> {
    Ok(ChannelComponents {
        los: los_channel(tx, rx, frequency, absorption)?,
        reradiation: reradiation_channel(tx, rx, frequency, absorption, seed)?,
        aperture: tx.aperture().max(rx.aperture()),
    })
}

/// LoS plus re-radiation for one realization.
pub fn total_channel(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    frequency: f64,
    absorption: f64,
    seed: u64,
) -> Result<ChannelMatrix, ChannelError> {
    Ok(channel_components(tx, rx, frequency, absorption, seed)?.total())
}

/// Unit-gain Rician view of a channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RicianDecomposition {
    pub k_factor: f64,
    /// √(K/(K+1)) = e^{-kd/2}.
    pub los_weight: f64,
    /// √(1/(K+1)) = (1-e^{-kd})^{1/2}.
    pub scattered_weight: f64,
    /// LoS part with unit average gain.
    pub los: DMatrix<Complex64>,
    /// Scattered part with unit average gain; zero when nothing is absorbed.
    pub scattered: DMatrix<Complex64>,
    /// los_weight·los + scattered_weight·scattered.
    pub normalized: DMatrix<Complex64>,
}

/// Splits a realization into K-factor weights and unit-gain parts, dividing
/// by the common amplitude c/(4πfd) of the link distance `distance`.
pub fn rician_normalize(
    components: &ChannelComponents,
    absorption: f64,
    distance: f64,
) -> Result<RicianDecomposition, ChannelError> {
    if distance < FAR_FIELD_RATIO * components.aperture {
        return Err(ChannelError::NearField {
            distance,
            aperture: components.aperture,
        });
    }
    let scale = free_space_amplitude(components.los.frequency, distance);
    let los_weight = (-0.5 * absorption * distance).exp();
    let scattered_weight = (-(-absorption * distance).exp_m1()).sqrt();
    let unit_part = |m: &DMatrix<Complex64>, weight: f64| {
        if weight > 0.0 {
            m.map(|h| h / (scale * weight))
        } else {
            DMatrix::zeros(m.nrows(), m.ncols())
        }
    };
    let los = unit_part(&components.los.entries, los_weight);
    let scattered = unit_part(&components.reradiation.entries, scattered_weight);
    let normalized = components.total().entries.map(|h| h / scale);
    Ok(RicianDecomposition {
        k_factor: k_factor(absorption, distance),
        los_weight,
        scattered_weight,
        los,
        scattered,
        normalized,
    })
}

/// SplitMix64-based seed derivation. Folding `(base, parts…)` gives each
/// trial, frequency point or grid cell its own independent stream.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}
