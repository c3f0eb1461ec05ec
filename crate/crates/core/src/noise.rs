//! Seeded, replayable Gaussian noise.
//!
//! Every random stream is a ChaCha8 generator keyed by
//! `SHA-256("mvdelay-noise" | purpose | seed | run)` and selected by
//! `set_stream(index)`. Stream `i` therefore never depends on how many other
//! streams exist or on which thread draws it, and increment `k` of a stream
//! is a pure function of `(seed, purpose, run, index, k)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Particle,
    Galerkin,
    Probe,
}

impl Purpose {
    fn tag(&self) -> &'static [u8] {
        match self {
            Purpose::Particle => b"particle",
            Purpose::Galerkin => b"galerkin",
            Purpose::Probe => b"probe",
        }
    }
}

/// Generator for stream `index` of `(purpose, seed, run)`.
pub fn derive_rng(purpose: Purpose, seed: u64, run: u64, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"mvdelay-noise");
    h.update(purpose.tag());
    h.update(seed.to_le_bytes());
    h.update(run.to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Source of Brownian increments, one `d`-vector per step.
pub trait IncrementSource {
    fn dim(&self) -> usize;
    /// Writes the next increment into `out`.
    fn next_into(&mut self, out: &mut [f64]);
}

/// Increments `ΔW ~ N(0, dt·I_d)` for one stream.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    scale: f64,
    dim: usize,
}

impl IncrementSource for NoiseStream {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn next_into(&mut self, out: &mut [f64]) {
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *o = self.scale * z;
        }
    }
}

/// Noise for a family of streams sharing seed, run, dimension and step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePlan {
    pub seed: u64,
    pub run: u64,
    pub dim: usize,
    pub dt: f64,
    pub purpose: Purpose,
}

impl NoisePlan {
    pub fn particles(seed: u64, dim: usize, dt: f64) -> Self {
        Self { seed, run: 0, dim, dt, purpose: Purpose::Particle }
    }

    pub fn with_run(mut self, run: u64) -> Self {
        self.run = run;
        self
    }

    pub fn stream(&self, index: u64) -> NoiseStream {
        NoiseStream {
            rng: derive_rng(self.purpose, self.seed, self.run, index),
            scale: self.dt.sqrt(),
            dim: self.dim,
        }
    }

    /// First `n_steps` increments of stream `index`, flattened.
    pub fn increments(&self, index: u64, n_steps: usize) -> Vec<f64> {
        let mut s = self.stream(index);
        let mut out = vec![0.0; n_steps * self.dim];
        for chunk in out.chunks_mut(self.dim) {
            s.next_into(chunk);
        }
        out
    }
}

/// Coarse increments formed by summing `factor` consecutive fine increments,
/// so coarse and fine schemes see the same Brownian path.
#[derive(Debug, Clone)]
pub struct AggregatedIncrements<S> {
    inner: S,
    factor: usize,
    buf: Vec<f64>,
}

impl<S: IncrementSource> AggregatedIncrements<S> {
    pub fn new(inner: S, factor: usize) -> Self {
        assert!(factor >= 1, "aggregation factor must be positive");
        let d = inner.dim();
        Self { inner, factor, buf: vec![0.0; d] }
    }
}

impl<S: IncrementSource> IncrementSource for AggregatedIncrements<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn next_into(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for _ in 0..self.factor {
            self.inner.next_into(&mut self.buf);
            for (o, b) in out.iter_mut().zip(&self.buf) {
                *o += b;
            }
        }
    }
}

/// Replays a fixed list of increments.
#[derive(Debug, Clone)]
pub struct RecordedIncrements {
    values: Vec<f64>,
    dim: usize,
    pos: usize,
}

impl RecordedIncrements {
    pub fn new(values: Vec<f64>, dim: usize) -> Self {
        Self { values, dim, pos: 0 }
    }
}

impl IncrementSource for RecordedIncrements {
    fn dim(&self) -> usize {
        self.dim
    }

    fn next_into(&mut self, out: &mut [f64]) {
        out.copy_from_slice(&self.values[self.pos..self.pos + self.dim]);
        self.pos += self.dim;
    }
}
