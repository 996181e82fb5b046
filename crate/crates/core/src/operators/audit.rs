//! Randomized audit of the structural inequalities the scheme relies on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ProblemSpec;
use crate::linalg::dot;
use crate::mesh::GalerkinVector;

/// A relative margin below this counts as a violation (rounding slack).
const VIOLATION_TOLERANCE: f64 = 1e-10;

/// Sample tuple at which an inequality was evaluated.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub sample: usize,
    pub u: GalerkinVector,
    pub v: GalerkinVector,
    pub w: GalerkinVector,
    pub z: GalerkinVector,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditCheck {
    pub name: &'static str,
    /// Smallest `(lhs - rhs) / (|lhs| + |rhs|)` seen.
    pub worst_margin: f64,
    pub violations: usize,
    /// Tuple realizing the worst margin.
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn total_violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn sample_vector(rng: &mut ChaCha8Rng, spec: &ProblemSpec) -> GalerkinVector {
    let m = spec.space().dim();
    let scale = 10f64.powf(rng.random_range(-3.0..2.0));
    if rng.random_bool(0.5) {
        (0..m).map(|_| scale * rng.random_range(-1.0..1.0)).collect::<Vec<_>>().into()
    } else {
        // smooth: a few low modes with decaying amplitudes
        let mut out = GalerkinVector::zeros(m);
        for j in 1..=m.min(8) {
            let e = spec.space().eigenmode(j).expect("j <= m");
            out.axpy(scale * rng.random_range(-1.0..1.0) / (j * j) as f64, &e);
        }
        out
    }
}

struct Tracker {
    check: AuditCheck,
}

impl Tracker {
    fn new(name: &'static str) -> Self {
        Self {
            check: AuditCheck {
                name,
                worst_margin: f64::INFINITY,
                violations: 0,
                witness: None,
            },
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, sample: usize, tuple: [&GalerkinVector; 4]) {
        let scale = lhs.abs() + rhs.abs();
        let margin = if scale > 0.0 { (lhs - rhs) / scale } else { 0.0 };
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if margin < -VIOLATION_TOLERANCE {
            self.check.violations += 1;
        }
        if margin < self.check.worst_margin {
            self.check.worst_margin = margin;
            self.check.witness = Some(Witness {
                sample,
                u: tuple[0].clone(),
                v: tuple[1].clone(),
                w: tuple[2].clone(),
                z: tuple[3].clone(),
                lhs,
                rhs,
            });
        }
    }
}

/// Evaluate every structural inequality on `samples` random tuples
/// `(u, v) ∈ V_B²`, `(w, z) ∈ V_A²`. Violations are reported, not raised.
pub fn check_assumptions(spec: &ProblemSpec, samples: usize, seed: u64) -> AuditReport {
    let samples = samples.max(1);
    let space = spec.space();
    let a = spec.damping();
    let el = spec.elastic();
    let c = spec.noise();
    let k = spec.constants();
    let r = c.modes();

    let names = [
        "monotonicity_like",
        "coercivity_like",
        "modified_monotonicity",
        "modified_coercivity",
        "a_monotone",
        "a_coercive",
        "a_growth",
        "b_positive",
        "b_bounded",
        "b_symmetric",
        "c_lipschitz_joint",
        "c_growth",
        "c_lipschitz_first",
    ];
    let mut t: Vec<Tracker> = names.iter().map(|n| Tracker::new(n)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hs_diff = |x: &[GalerkinVector], y: &[GalerkinVector]| -> f64 {
        x.iter().zip(y).map(|(p, q)| space.norm_h_sq(&(p - q))).sum()
    };
    let hs = |x: &[GalerkinVector]| -> f64 { x.iter().map(|p| space.norm_h_sq(p)).sum() };

    for s in 0..samples {
        let u = sample_vector(&mut rng, spec);
        let v = sample_vector(&mut rng, spec);
        let w = sample_vector(&mut rng, spec);
        let z = sample_vector(&mut rng, spec);
        let tuple = [&u, &v, &w, &z];

        let du = &u - &v;
        let dw = &w - &z;
        let aw = a.apply(space, &w);
        let az = a.apply(space, &z);
        let a_mono = dot(&(&aw - &az), &dw);
        let a_coer = dot(&aw, &w);
        let dw_h = space.norm_h_sq(&dw);
        let w_h = space.norm_h_sq(&w);
        let w_va = space.norm_grad_sq(&w);
        let du_b = el.norm_b_sq(space, &du);
        let u_b = el.norm_b_sq(space, &u);

        let cuw = c.apply(&u, &w, r).expect("modes");
        let cvz = c.apply(&v, &z, r).expect("modes");
        let cvw = c.apply(&v, &w, r).expect("modes");
        let dc = hs_diff(&cuw, &cvz);
        let cn = hs(&cuw);

        t[0].record(a_mono + k.lambda_a * dw_h, 0.5 * dc - k.lambda_b * du_b, s, tuple);
        t[1].record(
            a_coer + k.lambda_a * w_h,
            k.mu_a * w_va + 0.5 * cn - k.lambda_b * u_b - k.kappa,
            s,
            tuple,
        );
        t[2].record(2.0 * a_mono + k.lambda * dw_h + k.lambda * du_b, dc, s, tuple);
        t[3].record(
            2.0 * a_coer + k.lambda * (w_h + u_b + 1.0),
            2.0 * k.mu_a * w_va + cn,
            s,
            tuple,
        );
        t[4].record(a_mono + k.lambda1 * dw_h, 0.0, s, tuple);
        t[5].record(a_coer + k.lambda2 * w_h, k.mu_a * w_va, s, tuple);
        t[6].record(k.c_a * (1.0 + w_va.sqrt()), space.dual_norm_grad_sq(&aw).sqrt(), s, tuple);

        let bw = el.apply(space, &w);
        t[7].record(dot(&bw, &w), k.mu_b * w_va, s, tuple);
        t[8].record(k.c_b * w_va.sqrt(), space.dual_norm_grad_sq(&bw).sqrt(), s, tuple);
        let bwz = el.inner_b(space, &w, &z).expect("dims");
        let bzw = el.inner_b(space, &z, &w).expect("dims");
        t[9].record(bwz.abs() + bzw.abs(), bwz.abs() + bzw.abs() + (bwz - bzw).abs(), s, tuple);

        t[10].record(k.lambda3 * du_b + k.lambda4 * dw_h, dc, s, tuple);
        t[11].record(2.0 * (k.lambda3 * u_b + k.lambda4 * w_h + k.kappa), cn, s, tuple);
        t[12].record((2.0 * k.lambda_b).sqrt() * du_b.sqrt(), hs_diff(&cuw, &cvw).sqrt(), s, tuple);
    }

    AuditReport {
        samples,
        seed,
        checks: t.into_iter().map(|t| t.check).collect(),
    }
}
