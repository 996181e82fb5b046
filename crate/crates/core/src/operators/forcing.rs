//! Separable forcing `f(t, x) = Σ_k p_k(t) q_k(x)` with time profiles and
//! spatial profiles whose cell averages and P1 loads are exact.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::mesh::{FemSpace, GalerkinVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeProfile {
    /// `Σ_i c_i t^i`
    Polynomial { coeffs: Vec<f64> },
    /// `a sin(ω t)`
    Sin { amplitude: f64, frequency: f64 },
    /// `a cos(ω t)`
    Cos { amplitude: f64, frequency: f64 },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
            Self::Sin { amplitude, frequency } => amplitude * (frequency * t).sin(),
            Self::Cos { amplitude, frequency } => amplitude * (frequency * t).cos(),
        }
    }

    fn antiderivative(&self, t: f64) -> f64 {
        match self {
            Self::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .rev()
                .fold(0.0, |acc, (i, c)| acc * t + c / (i + 1) as f64)
                * t,
            Self::Sin { amplitude, frequency } => {
                if *frequency == 0.0 {
                    0.0
                } else {
                    -amplitude * (frequency * t).cos() / frequency
                }
            }
            Self::Cos { amplitude, frequency } => {
                if *frequency == 0.0 {
                    amplitude * t
                } else {
                    amplitude * (frequency * t).sin() / frequency
                }
            }
        }
    }

    /// Exact mean over `[a, b]`.
    pub fn average(&self, a: f64, b: f64) -> f64 {
        (self.antiderivative(b) - self.antiderivative(a)) / (b - a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceProfile {
    Constant { value: f64 },
    /// `a sin(k π x)`
    Sine { amplitude: f64, mode: u32 },
}

impl SpaceProfile {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Sine { amplitude, mode } => amplitude * (*mode as f64 * PI * x).sin(),
        }
    }

    /// `∫ q φ_i dx` for every hat function, exactly.
    pub fn load(&self, space: &FemSpace) -> GalerkinVector {
        let h = space.mesh().width();
        match self {
            Self::Constant { value } => GalerkinVector::from_vec(vec![value * h; space.dim()]),
            Self::Sine { amplitude, mode } => {
                let w = *mode as f64 * PI;
                let factor = if w == 0.0 {
                    0.0
                } else {
                    2.0 * (1.0 - (w * h).cos()) / (w * w * h)
                };
                space.interpolate(|x| amplitude * (w * x).sin() * factor)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingTerm {
    pub time: TimeProfile,
    pub space: SpaceProfile,
}

/// Forcing as a sum of separable terms; empty means `f ≡ 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Forcing {
    pub terms: Vec<ForcingTerm>,
}

impl Forcing {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Forcing for which `u(t, x) = sin(πt) sin(πx)` solves
    /// `ü - μ Δu̇ - b Δu = f`.
    pub fn manufactured(mu: f64, b: f64) -> Self {
        let p2 = PI * PI;
        let sine = SpaceProfile::Sine { amplitude: 1.0, mode: 1 };
        Self {
            terms: vec![
                ForcingTerm {
                    time: TimeProfile::Sin {
                        amplitude: (b - 1.0) * p2,
                        frequency: PI,
                    },
                    space: sine.clone(),
                },
                ForcingTerm {
                    time: TimeProfile::Cos {
                        amplitude: mu * p2 * PI,
                        frequency: PI,
                    },
                    space: sine,
                },
            ],
        }
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.terms.iter().map(|k| k.time.value(t) * k.space.value(x)).sum()
    }

    /// `⟨(1/τ) ∫_a^b f dt, φ_i⟩`.
    pub fn averaged_load(&self, space: &FemSpace, a: f64, b: f64) -> GalerkinVector {
        let mut out = GalerkinVector::zeros(space.dim());
        for term in &self.terms {
            out.axpy(term.time.average(a, b), &term.space.load(space));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn time_averages_match_quadrature() {
        let profiles = [
            TimeProfile::Polynomial { coeffs: vec![1.0, -2.0, 3.0, 0.5] },
            TimeProfile::Sin { amplitude: 2.0, frequency: 3.0 },
            TimeProfile::Cos { amplitude: -1.0, frequency: PI },
            TimeProfile::Cos { amplitude: 1.5, frequency: 0.0 },
        ];
        for p in &profiles {
            let (a, b) = (0.3, 0.55);
            let q = simpson(|t| p.value(t), a, b, 2000) / (b - a);
            assert!((p.average(a, b) - q).abs() < 1e-10, "{p:?}");
        }
    }

    #[test]
    fn loads_match_quadrature() {
        let space = FemSpace::new(7).unwrap();
        let h = space.mesh().width();
        for prof in [
            SpaceProfile::Constant { value: 2.5 },
            SpaceProfile::Sine { amplitude: 1.3, mode: 3 },
        ] {
            let load = prof.load(&space);
            for (i, &xi) in space.mesh().nodes().iter().enumerate() {
                let hat = |x: f64| (1.0 - (x - xi).abs() / h).max(0.0);
                let q = simpson(|x| prof.value(x) * hat(x), xi - h, xi, 400)
                    + simpson(|x| prof.value(x) * hat(x), xi, xi + h, 400);
                assert!((load[i] - q).abs() < 1e-10, "{prof:?} node {i}");
            }
        }
    }

    #[test]
    fn manufactured_forcing_satisfies_equation() {
        let (mu, b) = (0.7, 1.3);
        let f = Forcing::manufactured(mu, b);
        let (t, x) = (0.37, 0.61);
        let (st, ct, sx) = ((PI * t).sin(), (PI * t).cos(), (PI * x).sin());
        let p2 = PI * PI;
        let want = -p2 * st * sx + mu * p2 * PI * ct * sx + b * p2 * st * sx;
        assert!((f.value(t, x) - want).abs() < 1e-12);
    }
}
