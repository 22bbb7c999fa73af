//! Particle swarm optimization of φ_p over designs with a bounded number of
//! support points, followed by a deterministic local polish.
//!
//! A particle encodes (d_1, ..., d_k, t_1, ..., t_k): doses clamped to the
//! dose range and weight logits mapped to the simplex by a stable softmax.
//! Singular candidates score 0, so any nonsingular seed keeps the swarm on
//! meaningful designs. The swarm is seeded with the closed-form minimal
//! design (when one exists) and the equispaced equal-weight design.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::criteria::{phi_p_of_info, CriterionSpec};
use crate::design_theory::{minimal_d_design, minimal_support_size, support_bound};
use crate::equivalence::{verify, VerificationReport};
use crate::error::{DesignError, Result};
use crate::infomat::{pointwise_info, BivariateModel, Design, DoseRange};
use crate::numeric::{golden_section_max, project_to_simplex, softmax};

/// Weights below this are pruned from the optimizer's final answer.
const PRUNE_WEIGHT: f64 = 1e-4;
/// Doses closer than this fraction of the range span are merged.
const MERGE_TOL_REL: f64 = 1e-3;
/// Verification settings for the embedded diagnostics report.
const VERIFY_GRID: usize = 2001;
const VERIFY_TOL: f64 = 1e-6;

/// Swarm settings. `k_max` is the support-point budget; `None` defers to the
/// support bound of the model pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
    pub k_max: Option<usize>,
    pub restarts: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm_size: 80,
            iterations: 500,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            seed: 0,
            k_max: None,
            restarts: 3,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 10 {
            return Err(DesignError::Invalid {
                path: "pso.swarm_size".into(),
                message: format!("swarm size must be >= 10 (got {})", self.swarm_size),
            });
        }
        if !(self.inertia > 0.0 && self.inertia < 1.0) {
            return Err(DesignError::Invalid {
                path: "pso.inertia".into(),
                message: format!("inertia must lie in (0, 1) (got {})", self.inertia),
            });
        }
        if self.iterations == 0 {
            return Err(DesignError::Invalid {
                path: "pso.iterations".into(),
                message: "iterations must be >= 1".into(),
            });
        }
        if self.restarts == 0 {
            return Err(DesignError::Invalid {
                path: "pso.restarts".into(),
                message: "restarts must be >= 1".into(),
            });
        }
        if !(self.cognitive.is_finite() && self.cognitive >= 0.0)
            || !(self.social.is_finite() && self.social >= 0.0)
        {
            return Err(DesignError::Invalid {
                path: "pso.cognitive".into(),
                message: "acceleration coefficients must be finite and >= 0".into(),
            });
        }
        Ok(())
    }
}

/// The optimization problem: model, dose range, criterion.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    pub bm: BivariateModel,
    pub range: DoseRange,
    pub crit: CriterionSpec,
}

impl DesignProblem {
    pub fn new(bm: BivariateModel, range: DoseRange, crit: CriterionSpec) -> Result<Self> {
        bm.validate()?;
        range.validate()?;
        Ok(DesignProblem { bm, range, crit })
    }

    /// φ_p of a raw (doses, weights) candidate; singular candidates score 0.
    fn fitness(&self, doses: &[f64], weights: &[f64]) -> f64 {
        phi_p_of_info(&self.info_of(doses, weights), &self.crit)
    }

    fn info_of(&self, doses: &[f64], weights: &[f64]) -> DMatrix<f64> {
        let s1 = self.bm.s_dim();
        let mut m = DMatrix::zeros(s1, s1);
        for (&d, &w) in doses.iter().zip(weights) {
            if w > 0.0 {
                m += pointwise_info(&self.bm, d) * w;
            }
        }
        m
    }
}

/// What the optimizer did and how sure it is about the answer.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    /// Best raw swarm value after each iteration (winning restart).
    pub best_phi: Vec<f64>,
    /// Equivalence-theorem check of the returned design.
    pub report: VerificationReport,
    /// Whether the returned design passed verification.
    pub converged: bool,
    /// φ_p of the returned (pruned, merged, polished) design.
    pub phi: f64,
    /// The support budget actually used.
    pub k_max: usize,
}

struct Particle {
    pos: Vec<f64>,
    vel: Vec<f64>,
    best_pos: Vec<f64>,
    best_val: f64,
    rng: ChaCha8Rng,
}

fn decode(pos: &[f64], k: usize, range: &DoseRange) -> (Vec<f64>, Vec<f64>) {
    let doses: Vec<f64> = pos[..k].iter().map(|d| d.clamp(range.l, range.r)).collect();
    let weights = softmax(&pos[k..]);
    (doses, weights)
}

/// Runs the swarm and returns the best design found together with
/// diagnostics. Errors only on invalid configuration (including a support
/// budget below the minimal support size of the model pair).
pub fn optimize(problem: &DesignProblem, cfg: &PsoConfig) -> Result<(Design, Diagnostics)> {
    cfg.validate()?;
    let eff = problem.bm.efficacy.family;
    let tox = problem.bm.toxicity.family;
    let minimal_k = minimal_support_size(eff, tox);
    let k = cfg.k_max.unwrap_or_else(|| support_bound(eff, tox).max_points);
    if k < minimal_k {
        return Err(DesignError::Invalid {
            path: "pso.k_max".into(),
            message: format!(
                "support budget {k} is below the minimal support size {minimal_k} for {}/{}",
                eff.name(),
                tox.name()
            ),
        });
    }

    let range = &problem.range;
    let span = range.span();
    let dims = 2 * k;

    // deterministic seed designs shared by every restart
    let minimal_seed: Option<Vec<f64>> = minimal_d_design(&problem.bm, range).ok().map(|xi| {
        let mut pos = vec![0.0; dims];
        let m = xi.points().len();
        for (i, (&d, &w)) in xi.points().iter().zip(xi.weights()).enumerate() {
            pos[i] = d;
            pos[k + i] = w.ln();
        }
        // pad unused slots with interior doses at negligible weight
        for j in m..k {
            let frac = (j - m + 1) as f64 / (k - m + 1) as f64;
            pos[j] = range.l + span * frac * 0.5 + span * 0.25;
            pos[k + j] = -18.0;
        }
        pos
    });
    let equispaced_seed: Vec<f64> = {
        let mut pos = vec![0.0; dims];
        for (i, d) in range.grid(k).into_iter().enumerate() {
            pos[i] = d;
        }
        pos
    };

    let mut overall_best_pos: Option<Vec<f64>> = None;
    let mut overall_best_val = f64::NEG_INFINITY;
    let mut overall_trace: Vec<f64> = Vec::new();

    for restart in 0..cfg.restarts {
        let mut particles: Vec<Particle> = (0..cfg.swarm_size)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream((restart * cfg.swarm_size + i) as u64);
                let pos: Vec<f64> = match (i, &minimal_seed) {
                    (0, Some(seed)) => seed.clone(),
                    (0, None) | (1, _) => equispaced_seed.clone(),
                    _ => {
                        let mut p = Vec::with_capacity(dims);
                        for _ in 0..k {
                            p.push(rng.gen_range(range.l..=range.r));
                        }
                        for _ in 0..k {
                            p.push(rng.gen_range(-2.0..2.0));
                        }
                        p
                    }
                };
                let vel: Vec<f64> = (0..dims)
                    .map(|j| {
                        if j < k {
                            rng.gen_range(-span / 20.0..span / 20.0)
                        } else {
                            rng.gen_range(-0.25..0.25)
                        }
                    })
                    .collect();
                Particle {
                    best_pos: pos.clone(),
                    best_val: f64::NEG_INFINITY,
                    pos,
                    vel,
                    rng,
                }
            })
            .collect();

        let mut gbest_pos = particles[0].pos.clone();
        let mut gbest_val = f64::NEG_INFINITY;
        for part in particles.iter_mut() {
            let (d, w) = decode(&part.pos, k, range);
            let f = problem.fitness(&d, &w);
            part.best_val = f;
            if f > gbest_val {
                gbest_val = f;
                gbest_pos = part.pos.clone();
            }
        }

        let mut trace = Vec::with_capacity(cfg.iterations);
        let vmax_dose = span / 2.0;
        let vmax_logit = 4.0;
        for _ in 0..cfg.iterations {
            for part in particles.iter_mut() {
                for j in 0..dims {
                    let r1: f64 = part.rng.gen();
                    let r2: f64 = part.rng.gen();
                    part.vel[j] = cfg.inertia * part.vel[j]
                        + cfg.cognitive * r1 * (part.best_pos[j] - part.pos[j])
                        + cfg.social * r2 * (gbest_pos[j] - part.pos[j]);
                    let vmax = if j < k { vmax_dose } else { vmax_logit };
                    part.vel[j] = part.vel[j].clamp(-vmax, vmax);
                    part.pos[j] += part.vel[j];
                    if j < k {
                        part.pos[j] = part.pos[j].clamp(range.l, range.r);
                    } else {
                        part.pos[j] = part.pos[j].clamp(-30.0, 30.0);
                    }
                }
                let (d, w) = decode(&part.pos, k, range);
                let f = problem.fitness(&d, &w);
                if f > part.best_val {
                    part.best_val = f;
                    part.best_pos = part.pos.clone();
                }
            }
            for part in &particles {
                if part.best_val > gbest_val {
                    gbest_val = part.best_val;
                    gbest_pos = part.best_pos.clone();
                }
            }
            trace.push(gbest_val);
        }

        if gbest_val > overall_best_val {
            overall_best_val = gbest_val;
            overall_best_pos = Some(gbest_pos);
            overall_trace = trace;
        }
    }

    let best_pos = overall_best_pos.expect("at least one restart ran");
    let (doses, weights) = decode(&best_pos, k, range);
    let xi = assemble_design(&doses, &weights, range)?;
    let xi = polish(&xi, problem);
    let phi = phi_p(&xi, problem);
    let report = verify(
        &xi,
        &problem.bm,
        &problem.crit,
        range,
        VERIFY_GRID,
        VERIFY_TOL,
    );
    let (converged, report) = match report {
        Ok(r) => (r.optimal, r),
        Err(_) => (
            false,
            VerificationReport {
                max_sensitivity: f64::INFINITY,
                argmax_dose: f64::NAN,
                optimal: false,
                tolerance: 0.0,
                efficiency_lower_bound: None,
                curve: None,
            },
        ),
    };
    Ok((
        xi,
        Diagnostics {
            best_phi: overall_trace,
            report,
            converged,
            phi,
            k_max: k,
        },
    ))
}

fn phi_p(xi: &Design, problem: &DesignProblem) -> f64 {
    crate::criteria::phi_p(xi, &problem.bm, &problem.crit)
}

/// Turns raw swarm output into a design: merge doses closer than
/// 1e-3·span (weight-averaged), prune weights below 1e-4, renormalize.
fn assemble_design(doses: &[f64], weights: &[f64], range: &DoseRange) -> Result<Design> {
    let mut pairs: Vec<(f64, f64)> = doses.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let merge_tol = MERGE_TOL_REL * range.span();
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    for (d, w) in pairs {
        match merged.last_mut() {
            Some((dm, wm)) if d - *dm <= merge_tol => {
                let total = *wm + w;
                if total > 0.0 {
                    *dm = (*dm * *wm + d * w) / total;
                }
                *wm = total;
            }
            _ => merged.push((d, w)),
        }
    }
    merged.retain(|&(_, w)| w >= PRUNE_WEIGHT);
    let total: f64 = merged.iter().map(|&(_, w)| w).sum();
    let (points, weights): (Vec<f64>, Vec<f64>) =
        merged.into_iter().map(|(d, w)| (d, w / total)).unzip();
    Design::new(points, weights, range)
}

/// Deterministic local refinement: coordinate-wise golden-section moves on
/// each dose within a shrinking bracket, alternating with projected-gradient
/// ascent on the weights. φ_p never decreases; only strict improvements are
/// kept.
pub fn polish(xi: &Design, problem: &DesignProblem) -> Design {
    let range = &problem.range;
    let span = range.span();
    let mut doses: Vec<f64> = xi.points().to_vec();
    let mut weights: Vec<f64> = xi.weights().to_vec();
    let mut best = problem.fitness(&doses, &weights);

    let mut h = span / 20.0;
    let h_floor = 1e-9 * span;
    while h > h_floor {
        // dose refinement
        for i in 0..doses.len() {
            let lo = (doses[i] - h).max(range.l);
            let hi = (doses[i] + h).min(range.r);
            if hi <= lo {
                continue;
            }
            let (x, fx) = golden_section_max(
                |d| {
                    let mut cand = doses.clone();
                    cand[i] = d;
                    problem.fitness(&cand, &weights)
                },
                lo,
                hi,
                1e-10 * span,
                200,
            );
            if fx > best {
                doses[i] = x;
                best = fx;
            }
        }
        // weight ascent with simplex projection and backtracking
        for _ in 0..5 {
            let eps = 1e-7;
            let mut grad = vec![0.0; weights.len()];
            for i in 0..weights.len() {
                let mut up = weights.clone();
                up[i] += eps;
                let mut down = weights.clone();
                down[i] = (down[i] - eps).max(0.0);
                grad[i] = (problem.fitness(&doses, &up) - problem.fitness(&doses, &down))
                    / (up[i] - down[i]);
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                break;
            }
            let mut alpha = 0.25;
            let mut stepped = false;
            while alpha > 1e-12 {
                let raw: Vec<f64> = weights
                    .iter()
                    .zip(&grad)
                    .map(|(w, g)| w + alpha * g / norm)
                    .collect();
                let cand = project_to_simplex(&raw);
                let f = problem.fitness(&doses, &cand);
                if f > best {
                    weights = cand;
                    best = f;
                    stepped = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !stepped {
                break;
            }
        }
        h *= 0.5;
    }

    // zero weights can appear through projection; drop them at assembly
    let kept: Vec<(f64, f64)> = doses
        .iter()
        .zip(&weights)
        .filter(|&(_, &w)| w > 0.0)
        .map(|(&d, &w)| (d, w))
        .collect();
    let total: f64 = kept.iter().map(|&(_, w)| w).sum();
    let (pts, ws): (Vec<f64>, Vec<f64>) = kept.into_iter().map(|(d, w)| (d, w / total)).unzip();
    match Design::new(pts, ws, range) {
        Ok(polished) if problem.fitness(polished.points(), polished.weights()) >= best * (1.0 - 1e-12) => {
            polished
        }
        _ => xi.clone(),
    }
}
