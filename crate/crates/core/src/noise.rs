//! Seeded truncated Wiener increments.
//!
//! Every `(path, mode, refinement generation)` triple owns its own ChaCha8
//! stream, so raising the truncation level, refining a path, or generating
//! an ensemble in parallel never reshuffles existing draws. Gaussians come
//! from `rand_distr::StandardNormal` (ziggurat).
//!
//! Row `n` (1-based) holds `ΔW^{r,n}`; row 1 is identically zero.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};

pub const GAUSSIAN_METHOD: &str = "ChaCha8 substreams + rand_distr StandardNormal (ziggurat)";

const MAX_MODES: usize = 1 << 16;
const MAX_GENERATION: u32 = 1 << 8;

fn stream_id(path: u64, mode: usize, generation: u32) -> u64 {
    (path << 24) | ((generation as u64) << 16) | mode as u64
}

fn substream(seed: u64, path: u64, mode: usize, generation: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(path, mode, generation));
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    steps: usize,
    modes: usize,
    tau: f64,
    seed: u64,
    path_index: u64,
    generation: u32,
    increments: Vec<f64>,
}

/// `generate_path_indexed` for path index 0.
pub fn generate_path(steps: usize, modes: usize, horizon: f64, seed: u64) -> Result<WienerPath> {
    generate_path_indexed(steps, modes, horizon, seed, 0)
}

/// Increments of path `path_index` of the ensemble seeded by `seed`.
pub fn generate_path_indexed(
    steps: usize,
    modes: usize,
    horizon: f64,
    seed: u64,
    path_index: u64,
) -> Result<WienerPath> {
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            reason: "must be at least 1".into(),
        });
    }
    if modes == 0 || modes >= MAX_MODES {
        return Err(Error::InvalidParameter {
            name: "modes",
            reason: format!("must lie in 1..{MAX_MODES}, got {modes}"),
        });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: format!("must be positive and finite, got {horizon}"),
        });
    }
    if path_index >= 1 << 40 {
        return Err(Error::InvalidParameter {
            name: "path_index",
            reason: "must be below 2^40".into(),
        });
    }
    let tau = horizon / steps as f64;
    let sd = tau.sqrt();
    let mut increments = vec![0.0; steps * modes];
    for j in 0..modes {
        let mut rng = substream(seed, path_index, j, 0);
        for n in 1..steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            increments[n * modes + j] = sd * z;
        }
    }
    Ok(WienerPath {
        steps,
        modes,
        tau,
        seed,
        path_index,
        generation: 0,
        increments,
    })
}

impl WienerPath {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.tau * self.steps as f64
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    /// Wrap an explicit `steps × modes` increment matrix (row-major). Row 1
    /// must be zero.
    pub fn from_increments(steps: usize, modes: usize, tau: f64, seed: u64, increments: Vec<f64>) -> Result<WienerPath> {
        if steps == 0 || modes == 0 {
            return Err(Error::ZeroDimension);
        }
        check_dim(steps * modes, increments.len())?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("must be positive and finite, got {tau}"),
            });
        }
        if increments[..modes].iter().any(|&x| x != 0.0) {
            return Err(Error::InvalidParameter {
                name: "increments",
                reason: "first-step increment must vanish".into(),
            });
        }
        Ok(WienerPath {
            steps,
            modes,
            tau,
            seed,
            path_index: 0,
            generation: 0,
            increments,
        })
    }

    /// `ΔW^{r,n}` for `n` in `1..=steps`.
    pub fn increment(&self, n: usize) -> &[f64] {
        assert!(n >= 1 && n <= self.steps, "step {n} outside 1..={}", self.steps);
        &self.increments[(n - 1) * self.modes..n * self.modes]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Restrict to the first `r` modes. Equal to generating with `r` modes.
    pub fn truncate(&self, r: usize) -> Result<WienerPath> {
        if r == 0 || r > self.modes {
            return Err(Error::InvalidParameter {
                name: "modes",
                reason: format!("cannot truncate {} modes to {r}", self.modes),
            });
        }
        let increments = (1..=self.steps).flat_map(|n| self.increment(n)[..r].to_vec()).collect();
        Ok(WienerPath {
            modes: r,
            increments,
            ..self.clone()
        })
    }

    /// Bisect every step. For parent steps `n ≥ 2` the two children are a
    /// Brownian-bridge split of the parent increment, so they sum back to
    /// it. The parent's first cell carries no increment; its children are
    /// `0` (the first-step convention) and a fresh increment of variance
    /// `τ/2` over the second child cell.
    pub fn refine(&self) -> Result<WienerPath> {
        let generation = self.generation + 1;
        if generation >= MAX_GENERATION {
            return Err(Error::InvalidParameter {
                name: "generation",
                reason: "too many refinements".into(),
            });
        }
        let steps = 2 * self.steps;
        let child_tau = 0.5 * self.tau;
        let bridge_sd = 0.5 * self.tau.sqrt();
        let mut increments = vec![0.0; steps * self.modes];
        for j in 0..self.modes {
            let mut rng = substream(self.seed, self.path_index, j, generation);
            for n in 1..=self.steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                let (c1, c2) = (2 * n - 2, 2 * n - 1);
                if n == 1 {
                    increments[c2 * self.modes + j] = child_tau.sqrt() * z;
                } else {
                    let dw = self.increment(n)[j];
                    let left = 0.5 * dw + bridge_sd * z;
                    increments[c1 * self.modes + j] = left;
                    increments[c2 * self.modes + j] = dw - left;
                }
            }
        }
        Ok(WienerPath {
            steps,
            tau: child_tau,
            generation,
            increments,
            ..self.clone()
        })
    }

    /// Sum increments over groups of `factor` steps; the coarse first step
    /// is zeroed. Inverse of [`Self::refine`] on steps `n ≥ 2`.
    pub fn coarsen(&self, factor: usize) -> Result<WienerPath> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(Error::InvalidParameter {
                name: "factor",
                reason: format!("{factor} does not divide {} steps", self.steps),
            });
        }
        let steps = self.steps / factor;
        let mut increments = vec![0.0; steps * self.modes];
        for n in 2..=steps {
            for k in (n - 1) * factor + 1..=n * factor {
                let row = self.increment(k);
                for j in 0..self.modes {
                    increments[(n - 1) * self.modes + j] += row[j];
                }
            }
        }
        Ok(WienerPath {
            steps,
            tau: self.tau * factor as f64,
            increments,
            ..self.clone()
        })
    }

    /// Little-endian dump: `steps: u64, modes: u64, tau: f64, seed: u64`,
    /// then the increments row-major as `f64`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.steps as u64).to_le_bytes())?;
        out.write_all(&(self.modes as u64).to_le_bytes())?;
        out.write_all(&self.tau.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for x in &self.increments {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<WienerPath> {
        let mut word = [0u8; 8];
        let mut next = |input: &mut R| -> Result<[u8; 8]> {
            input.read_exact(&mut word)?;
            Ok(word)
        };
        let steps = u64::from_le_bytes(next(&mut input)?) as usize;
        let modes = u64::from_le_bytes(next(&mut input)?) as usize;
        let tau = f64::from_le_bytes(next(&mut input)?);
        let seed = u64::from_le_bytes(next(&mut input)?);
        let mut increments = Vec::with_capacity(steps * modes);
        for _ in 0..steps * modes {
            increments.push(f64::from_le_bytes(next(&mut input)?));
        }
        WienerPath::from_increments(steps, modes, tau, seed, increments)
    }
}
