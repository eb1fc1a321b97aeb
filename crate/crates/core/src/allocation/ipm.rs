//! Primal-dual interior point solver for the allocation problem in level space.
//!
//! With `x = M * delta` the objective is a diagonal convex quadratic and the
//! constraints are
//!
//! * `0 <= x_i <= 1`,
//! * `x_i <= x_{i-1}` before an empty leg, `x_i >= x_{i-1}` before a loaded one,
//! * `sum of fills = a' x <= C`,
//!
//! so the reduced Newton matrix `H + G' W G` is tridiagonal plus a rank-one
//! term from the tank row. Each iteration costs O(n).

use super::{MissionProfile, TankBudget, AIR_TIE_WEIGHT};
use crate::energy_model::{EnergyModel, SECONDS_PER_HOUR};

const MAX_ITER: usize = 200;
const STEP_FRACTION: f64 = 0.99;
const PRIMAL_TOL: f64 = 1e-11;
const DUAL_TOL: f64 = 1e-10;
const GAP_TOL: f64 = 1e-9;
/// How far above the tolerances the best iterate may sit when the iteration stalls.
const FALLBACK_FACTOR: f64 = 100.0;
const REFINE_STEPS: usize = 2;
const STALL_ITERS: usize = 3;

pub(super) struct Failure {
    pub message: String,
    pub last: Vec<f64>,
}

pub(super) struct LevelProblem {
    n: usize,
    /// Diagonal of the Hessian.
    q: Vec<f64>,
    /// Linear term.
    p: Vec<f64>,
    /// Tank row: +1 on loaded legs, -1 on empty legs followed by a fill.
    air: Vec<f64>,
    budget: f64,
}

impl LevelProblem {
    pub fn new(profile: &MissionProfile, model: &EnergyModel, budget: TankBudget) -> Self {
        let n = profile.len();
        let v = model.velocity_mps();
        let mut q = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        let mut air = Vec::with_capacity(n);
        for (i, leg) in profile.legs().iter().enumerate() {
            let hours = leg.distance_m / v / SECONDS_PER_HOUR;
            let curve = model.curve(leg.loaded);
            let a = if i % 2 == 0 {
                1.0
            } else if i + 1 < n {
                -1.0
            } else {
                0.0
            };
            q.push(2.0 * curve.a2() * hours);
            p.push(curve.a1() * hours + AIR_TIE_WEIGHT * a);
            air.push(a);
        }
        LevelProblem { n, q, p, air, budget: budget.fills() }
    }

    fn m(&self) -> usize {
        3 * self.n
    }

    /// Sign of the chain row ending at leg `i >= 1`: the row reads
    /// `s (x_i - x_{i-1}) <= 0`.
    fn chain_sign(i: usize) -> f64 {
        if i % 2 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    fn g_mul(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            out[i] = -x[i];
            out[n + i] = x[i];
        }
        for i in 1..n {
            out[2 * n + i - 1] = Self::chain_sign(i) * (x[i] - x[i - 1]);
        }
        out[3 * n - 1] = dot(&self.air, x);
    }

    fn gt_mul(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        let yb = y[3 * n - 1];
        for i in 0..n {
            out[i] = -y[i] + y[n + i] + self.air[i] * yb;
        }
        for i in 1..n {
            let t = Self::chain_sign(i) * y[2 * n + i - 1];
            out[i] += t;
            out[i - 1] -= t;
        }
    }

    fn h(&self, k: usize) -> f64 {
        let n = self.n;
        if k < n {
            0.0
        } else if k < 2 * n {
            1.0
        } else if k < 3 * n - 1 {
            0.0
        } else {
            self.budget
        }
    }

    pub fn solve(&self) -> Result<Vec<f64>, Failure> {
        let n = self.n;
        let m = self.m();
        let mut x = vec![0.0; n];
        let mut s = vec![1.0; m];
        let mut z = vec![1.0; m];

        let data_d = self.p.iter().chain(&self.q).fold(0.0_f64, |a, v| a.max(v.abs()));
        // Spread of the objective over the unit box.
        let scale_gap = 1.0 + self.p.iter().zip(&self.q).map(|(p, q)| p.abs() + 0.5 * q.abs()).sum::<f64>();

        let mut gx = vec![0.0; m];
        let mut gtz = vec![0.0; n];
        let mut r_d = vec![0.0; n];
        let mut r_p = vec![0.0; m];
        let mut w = vec![0.0; m];
        let mut sys = Newton::new(n);
        let mut fallback: Option<(f64, Vec<f64>)> = None;
        let mut since_best = 0;

        for _ in 0..MAX_ITER {
            self.g_mul(&x, &mut gx);
            self.gt_mul(&z, &mut gtz);
            for i in 0..n {
                r_d[i] = self.q[i] * x[i] + self.p[i] + gtz[i];
            }
            for k in 0..m {
                r_p[k] = gx[k] + s[k] - self.h(k);
            }
            let gap = dot(&s, &z);
            let mu = gap / m as f64;
            let scale_d = 1.0 + data_d.max(inf_norm(&z));

            if inf_norm(&r_p) <= PRIMAL_TOL
                && inf_norm(&r_d) <= DUAL_TOL * scale_d
                && gap <= GAP_TOL * scale_gap
            {
                return Ok(x);
            }
            if !mu.is_finite() || x.iter().any(|v| !v.is_finite()) {
                break;
            }
            let merit = (inf_norm(&r_p) / PRIMAL_TOL)
                .max(inf_norm(&r_d) / (DUAL_TOL * scale_d))
                .max(gap / (GAP_TOL * scale_gap));
            if fallback.as_ref().is_none_or(|(g, _)| merit < *g) {
                fallback = Some((merit, x.clone()));
                since_best = 0;
            } else {
                since_best += 1;
            }

            for k in 0..m {
                w[k] = z[k] / s[k];
            }
            sys.factor(self, &w);

            // Predictor: r_c = s .* z, so S^-1 r_c = z.
            let sinv_rc: Vec<f64> = z.clone();
            let (_, ds_a, dz_a) = self.direction(&sys, &w, &r_d, &r_p, &sinv_rc);
            let alpha_a = max_step(&s, &ds_a).min(max_step(&z, &dz_a)).min(1.0);
            let mu_aff = (0..m)
                .map(|k| (s[k] + alpha_a * ds_a[k]) * (z[k] + alpha_a * dz_a[k]))
                .sum::<f64>()
                / m as f64;
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

            // Corrector with centering.
            let sinv_rc: Vec<f64> = (0..m)
                .map(|k| (s[k] * z[k] + ds_a[k] * dz_a[k] - sigma * mu) / s[k])
                .collect();
            let (mut dx, mut ds, mut dz) = self.direction(&sys, &w, &r_d, &r_p, &sinv_rc);
            let mut alpha = (STEP_FRACTION * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);

            // Once progress stalls, the second-order term is usually what pushes
            // complementarity back up; retreat to a plain centered step then.
            let gap_after = (0..m).map(|k| (s[k] + alpha * ds[k]) * (z[k] + alpha * dz[k])).sum::<f64>();
            if since_best >= STALL_ITERS && gap_after > gap {
                let sigma = sigma.max(0.1);
                let sinv_rc: Vec<f64> = (0..m).map(|k| z[k] - sigma * mu / s[k]).collect();
                (dx, ds, dz) = self.direction(&sys, &w, &r_d, &r_p, &sinv_rc);
                alpha = (STEP_FRACTION * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
            }

            for i in 0..n {
                x[i] += alpha * dx[i];
            }
            for k in 0..m {
                s[k] += alpha * ds[k];
                z[k] += alpha * dz[k];
            }
        }
        match fallback {
            Some((merit, best)) if merit <= FALLBACK_FACTOR => Ok(best),
            Some((_, best)) => Err(Failure {
                message: format!("interior point iteration stalled more than {FALLBACK_FACTOR:e} times above tolerance"),
                last: best,
            }),
            None => Err(Failure {
                message: "interior point iteration produced no finite iterate".into(),
                last: x,
            }),
        }
    }

    /// Solves the reduced Newton system for a given `S^-1 r_c`, with a few
    /// rounds of refinement on the dual equation `Q dx + G' dz = -r_d`.
    fn direction(
        &self,
        sys: &Newton,
        w: &[f64],
        r_d: &[f64],
        r_p: &[f64],
        sinv_rc: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let m = self.m();
        let t: Vec<f64> = (0..m).map(|k| w[k] * r_p[k] - sinv_rc[k]).collect();
        let mut gtt = vec![0.0; n];
        self.gt_mul(&t, &mut gtt);
        let rhs: Vec<f64> = (0..n).map(|i| -r_d[i] - gtt[i]).collect();
        let mut dx = sys.solve(&rhs);
        let mut gdx = vec![0.0; m];
        self.g_mul(&dx, &mut gdx);
        let mut dz: Vec<f64> = (0..m).map(|k| w[k] * (gdx[k] + r_p[k]) - sinv_rc[k]).collect();

        let mut gtdz = vec![0.0; n];
        let mut corr_g = vec![0.0; m];
        for _ in 0..REFINE_STEPS {
            self.gt_mul(&dz, &mut gtdz);
            let resid: Vec<f64> = (0..n).map(|i| -(self.q[i] * dx[i] + gtdz[i] + r_d[i])).collect();
            let corr = sys.solve(&resid);
            self.g_mul(&corr, &mut corr_g);
            for i in 0..n {
                dx[i] += corr[i];
            }
            for k in 0..m {
                dz[k] += w[k] * corr_g[k];
            }
        }

        self.g_mul(&dx, &mut gdx);
        let ds: Vec<f64> = (0..m).map(|k| -r_p[k] - gdx[k]).collect();
        (dx, ds, dz)
    }
}

/// `T + wb * a a'` with `T = D + sum_i w_i (e_i - e_{i-1})(e_i - e_{i-1})'`,
/// a positive diagonal plus a weighted path Laplacian.
///
/// Elimination is written in terms of the positive quantities `u_i` (pivot
/// minus the weight of the edge to the right), so no pivot is formed by
/// subtracting two large numbers when chain weights blow up near the optimum.
/// The rank-one tank row is folded in with Sherman-Morrison.
struct Newton {
    base: Vec<f64>,
    edge: Vec<f64>,
    pivot: Vec<f64>,
    air: Vec<f64>,
    tinv_a: Vec<f64>,
    /// `1 / wb + a' T^-1 a`, or infinity when the tank row carries no weight.
    sm_denom: f64,
}

impl Newton {
    fn new(n: usize) -> Self {
        Newton {
            base: vec![0.0; n],
            edge: vec![0.0; n.saturating_sub(1)],
            pivot: vec![0.0; n],
            air: Vec::new(),
            tinv_a: vec![0.0; n],
            sm_denom: f64::INFINITY,
        }
    }

    fn factor(&mut self, prob: &LevelProblem, w: &[f64]) {
        let n = prob.n;
        for i in 0..n {
            self.base[i] = prob.q[i] + w[i] + w[n + i];
        }
        for i in 1..n {
            self.edge[i - 1] = w[2 * n + i - 1];
        }
        self.factor_parts(&prob.air, w[3 * n - 1]);
    }

    fn factor_parts(&mut self, air: &[f64], wb: f64) {
        let n = self.base.len();
        let mut u = self.base[0];
        for i in 0..n {
            if i > 0 {
                let we = self.edge[i - 1];
                u = self.base[i] + we * u / (u + we);
            }
            self.pivot[i] = u + if i + 1 < n { self.edge[i] } else { 0.0 };
        }
        self.air.clear();
        self.air.extend_from_slice(air);
        self.tinv_a = self.solve_t(air);
        self.sm_denom = 1.0 / wb + dot(air, &self.tinv_a);
    }

    fn solve_t(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = vec![0.0; n];
        y[0] = b[0];
        for i in 1..n {
            y[i] = b[i] + self.edge[i - 1] / self.pivot[i - 1] * y[i - 1];
        }
        let mut x = vec![0.0; n];
        x[n - 1] = y[n - 1] / self.pivot[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (y[i] + self.edge[i] * x[i + 1]) / self.pivot[i];
        }
        x
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = self.solve_t(b);
        let coef = dot(&self.air, &x) / self.sm_denom;
        for (xi, ti) in x.iter_mut().zip(&self.tinv_a) {
            *xi -= coef * ti;
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Largest `alpha` keeping `v + alpha * dv >= 0`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}
