//! Input sequence generation: constant, δ-bounded box noise, and i.i.d.
//! Gaussian noise.
//!
//! All randomness is counter-based: the draw for (round, coordinate) is a
//! pure function of `(seed, round, coordinate)`. The synchronous engine
//! generates whole vectors per round while the asynchronous engine samples
//! single coordinates at its own pace; both read the same logical stream.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::linalg::{cholesky_psd, inf_norm_vec, LinalgError, Matrix, Vector};

#[derive(Debug, Error)]
pub enum InputError {
    /// Covariance failed the symmetric-PSD check.
    #[error("bad covariance: {0}")]
    BadCovariance(LinalgError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// The generating model for an input sequence.
#[derive(Debug, Clone)]
pub enum InputModel {
    Constant { center: Vector },
    BoxBounded { center: Vector, delta: f64 },
    Gaussian { mean: Vector, cov: Matrix },
}

impl InputModel {
    pub fn center(&self) -> &Vector {
        match self {
            InputModel::Constant { center } | InputModel::BoxBounded { center, .. } => center,
            InputModel::Gaussian { mean, .. } => mean,
        }
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }
}

/// A seeded input model, ready to sample.
#[derive(Debug, Clone)]
pub struct InputSource {
    model: InputModel,
    seed: u64,
    /// Lower Cholesky factor of the Gaussian covariance.
    chol: Option<Matrix>,
}

impl InputSource {
    pub fn new(model: InputModel, seed: u64) -> Result<Self, InputError> {
        let chol = match &model {
            InputModel::BoxBounded { delta, .. } => {
                if *delta < 0.0 {
                    return Err(InputError::Dimension(format!("delta must be >= 0, got {delta}")));
                }
                None
            }
            InputModel::Gaussian { mean, cov } => {
                if cov.n() != mean.len() {
                    return Err(InputError::Dimension(format!(
                        "covariance is {}x{} but mean has length {}",
                        cov.n(),
                        cov.n(),
                        mean.len()
                    )));
                }
                Some(cholesky_psd(cov).map_err(InputError::BadCovariance)?)
            }
            InputModel::Constant { .. } => None,
        };
        Ok(InputSource { model, seed, chol })
    }

    pub fn model(&self) -> &InputModel {
        &self.model
    }

    pub fn center(&self) -> &Vector {
        self.model.center()
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// True when the Gaussian covariance is diagonal (or the model is not
    /// Gaussian at all). Coordinate-wise sampling is only exact in that case,
    /// which is what the asynchronous distribution analysis assumes.
    pub fn is_coordinatewise(&self) -> bool {
        match &self.model {
            InputModel::Gaussian { cov, .. } => {
                let n = cov.n();
                (0..n).all(|i| (0..n).all(|j| i == j || cov.get(i, j) == 0.0))
            }
            _ => true,
        }
    }

    /// Deviation D(round) = I(round) − v as a full vector.
    pub fn deviation_at(&self, round: u64) -> Vector {
        let n = self.dim();
        match &self.model {
            InputModel::Constant { .. } => Vector::zeros(n),
            InputModel::BoxBounded { delta, .. } => Vector::new(
                (0..n).map(|i| delta * (2.0 * unit_stream(self.seed, round, i as u64) - 1.0)).collect(),
            ),
            InputModel::Gaussian { .. } => {
                let l = self.chol.as_ref().expect("gaussian source has a cholesky factor");
                let z =
                    Vector::new((0..n).map(|i| normal_stream(self.seed, round, i as u64)).collect());
                l.mul_vec(&z)
            }
        }
    }

    /// Full input vector at a round.
    pub fn input_at(&self, round: u64) -> Vector {
        self.center().add(&self.deviation_at(round))
    }

    /// One coordinate of I(round), sampled without materializing the rest of
    /// the vector. Exact only for coordinate-wise models
    /// (see [`is_coordinatewise`](Self::is_coordinatewise)); for a diagonal
    /// Gaussian it equals the corresponding entry of `input_at` bit-for-bit.
    pub fn input_coord_at(&self, round: u64, coord: usize) -> f64 {
        let c = self.center()[coord];
        match &self.model {
            InputModel::Constant { .. } => c,
            InputModel::BoxBounded { delta, .. } => {
                c + delta * (2.0 * unit_stream(self.seed, round, coord as u64) - 1.0)
            }
            InputModel::Gaussian { .. } => {
                let l = self.chol.as_ref().unwrap();
                c + l.get(coord, coord) * normal_stream(self.seed, round, coord as u64)
            }
        }
    }
}

/// A materialized timed sequence of input vectors and their deviations.
#[derive(Debug, Clone)]
pub struct InputSequence {
    pub vectors: Vec<Vector>,
    pub deviations: Vec<Vector>,
    pub center: Vector,
}

impl InputSequence {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// The δ-bounded predicate: every deviation within `delta` in ∞-norm.
    pub fn is_delta_bounded(&self, delta: f64) -> bool {
        self.deviations.iter().all(|d| inf_norm_vec(d) <= delta)
    }

    /// CSV dump: round per row, coordinate per column.
    pub fn dump_csv<W: Write>(&self, mut w: W) -> Result<(), InputError> {
        let n = self.center.len();
        let header: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
        writeln!(w, "round,{}", header.join(","))?;
        for (r, v) in self.vectors.iter().enumerate() {
            let row: Vec<String> = v.as_slice().iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{r},{}", row.join(","))?;
        }
        Ok(())
    }

    /// Load a sequence dumped by [`dump_csv`](Self::dump_csv); the center is
    /// needed to recover deviations.
    pub fn load_csv<R: BufRead>(reader: R, center: Vector) -> Result<Self, InputError> {
        let mut vectors = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Result<Vec<f64>, _> =
                line.split(',').skip(1).map(str::parse::<f64>).collect();
            let fields =
                fields.map_err(|e| InputError::Parse { line: idx + 1, msg: e.to_string() })?;
            if fields.len() != center.len() {
                return Err(InputError::Parse {
                    line: idx + 1,
                    msg: format!("expected {} coordinates, got {}", center.len(), fields.len()),
                });
            }
            vectors.push(Vector::new(fields));
        }
        let deviations = vectors.iter().map(|v| v.sub(&center)).collect();
        Ok(InputSequence { vectors, deviations, center })
    }
}

/// Materialize `len` rounds of a source.
pub fn gen_sequence(source: &InputSource, len: usize) -> InputSequence {
    let center = source.center().clone();
    let deviations: Vec<Vector> = (0..len as u64).map(|r| source.deviation_at(r)).collect();
    let vectors = deviations.iter().map(|d| center.add(d)).collect();
    InputSequence { vectors, deviations, center }
}

/// Worst-case box sequence: each deviation coordinate is exactly ±δ,
/// with the sign chosen by `signs(round, coord)`.
pub fn adversarial_box_sequence(
    center: &Vector,
    delta: f64,
    len: usize,
    signs: impl Fn(usize, usize) -> f64,
) -> InputSequence {
    let n = center.len();
    let deviations: Vec<Vector> = (0..len)
        .map(|r| Vector::new((0..n).map(|i| delta * signs(r, i).signum()).collect()))
        .collect();
    let vectors = deviations.iter().map(|d| center.add(d)).collect();
    InputSequence { vectors, deviations, center: center.clone() }
}

// ---------------------------------------------------------------------------
// Counter-based random streams.
//
// Mixing is splitmix64 over a combination of (seed, round, coordinate, salt).
// Uniform variates take the top 53 bits; normals come from Box-Muller over
// two salts. The transform is documented so a reimplementation in another
// language can match moments without matching bit streams.
// ---------------------------------------------------------------------------

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

#[inline]
fn stream_u64(seed: u64, round: u64, coord: u64, salt: u64) -> u64 {
    let mut h = splitmix64(seed ^ 0x6a09e667f3bcc908);
    h = splitmix64(h ^ round);
    h = splitmix64(h ^ coord.wrapping_mul(0x2545f4914f6cdd1d));
    splitmix64(h ^ salt)
}

/// Uniform in [0, 1).
#[inline]
fn to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in [0, 1) for (seed, round, coord).
pub fn unit_stream(seed: u64, round: u64, coord: u64) -> f64 {
    to_unit(stream_u64(seed, round, coord, 0))
}

/// Standard normal for (seed, round, coord), via Box-Muller.
pub fn normal_stream(seed: u64, round: u64, coord: u64) -> f64 {
    // u1 in (0, 1]: avoids ln(0)
    let u1 = 1.0 - to_unit(stream_u64(seed, round, coord, 1));
    let u2 = to_unit(stream_u64(seed, round, coord, 2));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
