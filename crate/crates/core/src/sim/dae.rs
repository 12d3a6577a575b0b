//! Semi-explicit index-1 DAE `ẋ = f(t, x, y)`, `0 = g(t, x, y)` and a
//! fixed-step implicit trapezoidal integrator.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::SimError;

pub trait Dae {
    fn n_diff(&self) -> usize;
    fn n_alg(&self) -> usize;
    /// Fills `f` with `ẋ` and `g` with the algebraic residuals.
    fn residual(&self, t: f64, x: &[f64], y: &[f64], f: &mut [f64], g: &mut [f64]) -> Result<(), SimError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Rebuild the reused Jacobian once an iteration count exceeds this.
    pub refresh_after: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 15, refresh_after: 5 }
    }
}

impl NewtonSettings {
    /// Per-component bound that keeps a complex residual (real and imaginary
    /// rows) below `tol` in magnitude.
    fn component_tol(&self) -> f64 {
        self.tol * std::f64::consts::FRAC_1_SQRT_2
    }
}

fn eval<D: Dae + ?Sized>(dae: &D, t: f64, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    let mut f = vec![0.0; dae.n_diff()];
    let mut g = vec![0.0; dae.n_alg()];
    dae.residual(t, x, y, &mut f, &mut g)?;
    if f.iter().chain(&g).any(|v| !v.is_finite()) {
        return Err(SimError::NonFinite { t });
    }
    Ok((f, g))
}

fn fd_step(z: f64) -> f64 {
    1e-7 * z.abs().max(1.0)
}

/// Trapezoidal integrator with a reused finite-difference Newton matrix.
///
/// The trapezoidal rule does not damp stiff modes, so a discontinuity
/// leaves a ringing of period `2·dt`. [`Trapezoid::damped_step`] crosses
/// such points with two backward-Euler half steps instead.
#[derive(Debug, Clone)]
pub struct Trapezoid {
    pub dt: f64,
    pub newton: NewtonSettings,
    /// Implicitness: 0.5 is trapezoidal, 1 is backward Euler.
    theta: f64,
    lu: Option<LU<f64, Dyn, Dyn>>,
    pub jacobian_builds: usize,
}

impl Trapezoid {
    pub fn new(dt: f64) -> Self {
        Self { dt, newton: NewtonSettings::default(), theta: 0.5, lu: None, jacobian_builds: 0 }
    }

    /// Drop the reused Jacobian, e.g. after a discrete event.
    pub fn invalidate(&mut self) {
        self.lu = None;
    }

    fn step_residual<D: Dae + ?Sized>(
        &self,
        dae: &D,
        t1: f64,
        x0: &[f64],
        f0: &[f64],
        z: &[f64],
    ) -> Result<(DVector<f64>, Vec<f64>), SimError> {
        let n = dae.n_diff();
        let (f1, g1) = eval(dae, t1, &z[..n], &z[n..])?;
        let (a, b) = (self.theta * self.dt, (1.0 - self.theta) * self.dt);
        let mut r = DVector::zeros(z.len());
        for k in 0..n {
            r[k] = z[k] - x0[k] - (a * f1[k] + b * f0[k]);
        }
        for (k, gk) in g1.iter().enumerate() {
            r[n + k] = *gk;
        }
        Ok((r, f1))
    }

    fn build_jacobian<D: Dae + ?Sized>(
        &mut self,
        dae: &D,
        t1: f64,
        x0: &[f64],
        f0: &[f64],
        z: &[f64],
    ) -> Result<(), SimError> {
        let m = z.len();
        let (r0, _) = self.step_residual(dae, t1, x0, f0, z)?;
        let mut jac = DMatrix::zeros(m, m);
        let mut zp = z.to_vec();
        for c in 0..m {
            let hc = fd_step(z[c]);
            zp[c] = z[c] + hc;
            let (rp, _) = self.step_residual(dae, t1, x0, f0, &zp)?;
            zp[c] = z[c];
            jac.set_column(c, &((rp - &r0) / hc));
        }
        self.lu = Some(jac.lu());
        self.jacobian_builds += 1;
        Ok(())
    }

    /// Advances `(x0, y0)` from `t0` to `t0 + dt`. `f0` is `ẋ` at the start
    /// point. Returns `(x1, y1, f1, iterations)`.
    pub fn step<D: Dae + ?Sized>(
        &mut self,
        dae: &D,
        t0: f64,
        x0: &[f64],
        y0: &[f64],
        f0: &[f64],
    ) -> Result<StepOutput, SimError> {
        let n = dae.n_diff();
        let t1 = t0 + self.dt;
        let mut z: Vec<f64> = x0.iter().chain(y0).copied().collect();
        // explicit predictor for the differential part
        for k in 0..n {
            z[k] += self.dt * f0[k];
        }
        for attempt in 0..2 {
            if self.lu.is_none() || attempt == 1 {
                z = x0.iter().chain(y0).copied().collect();
                self.build_jacobian(dae, t1, x0, f0, &z)?;
            }
            let mut converged = None;
            for it in 0..=self.newton.max_iter {
                let (r, f1) = self.step_residual(dae, t1, x0, f0, &z)?;
                if r.amax() < self.newton.component_tol() {
                    converged = Some((f1, it));
                    break;
                }
                if it == self.newton.max_iter {
                    break;
                }
                let lu = self.lu.as_ref().expect("jacobian built");
                let dz = lu.solve(&r).ok_or(SimError::SingularJacobian { t: t1 })?;
                for k in 0..z.len() {
                    z[k] -= dz[k];
                }
            }
            if let Some((f1, it)) = converged {
                if it > self.newton.refresh_after {
                    self.lu = None;
                }
                let y1 = z.split_off(n);
                return Ok((z, y1, f1, it));
            }
        }
        Err(SimError::StepNonConvergence { t: t1, dt: self.dt })
    }
}

/// `(x1, y1, f1, newton iterations)` after one step.
pub type StepOutput = (Vec<f64>, Vec<f64>, Vec<f64>, usize);

impl Trapezoid {
    /// Same interface as [`Trapezoid::step`], but covers the interval with
    /// two backward-Euler half steps.
    pub fn damped_step<D: Dae + ?Sized>(
        &mut self,
        dae: &D,
        t0: f64,
        x0: &[f64],
        y0: &[f64],
        f0: &[f64],
    ) -> Result<StepOutput, SimError> {
        let dt = self.dt;
        self.dt = 0.5 * dt;
        self.theta = 1.0;
        self.lu = None;
        let first = self.step(dae, t0, x0, y0, f0);
        let out = first.and_then(|(x, y, f, i1)| {
            let (x, y, f, i2) = self.step(dae, t0 + 0.5 * dt, &x, &y, &f)?;
            Ok((x, y, f, i1 + i2))
        });
        self.dt = dt;
        self.theta = 0.5;
        self.lu = None;
        out.map_err(|e| match e {
            SimError::StepNonConvergence { t, .. } => SimError::StepNonConvergence { t, dt },
            e => e,
        })
    }
}

/// Solves `g(t, x, y) = 0` for `y` with `x` frozen.
pub fn solve_algebraic<D: Dae + ?Sized>(
    dae: &D,
    t: f64,
    x: &[f64],
    y0: &[f64],
    settings: &NewtonSettings,
) -> Result<Vec<f64>, SimError> {
    let m = dae.n_alg();
    let mut y = y0.to_vec();
    if m == 0 {
        return Ok(y);
    }
    for _ in 0..=(2 * settings.max_iter) {
        let (_, g) = eval(dae, t, x, &y)?;
        let g = DVector::from_vec(g);
        if g.amax() < settings.component_tol() {
            return Ok(y);
        }
        let mut jac = DMatrix::zeros(m, m);
        let mut yp = y.clone();
        for c in 0..m {
            let h = fd_step(y[c]);
            yp[c] = y[c] + h;
            let (_, gp) = eval(dae, t, x, &yp)?;
            yp[c] = y[c];
            jac.set_column(c, &((DVector::from_vec(gp) - &g) / h));
        }
        let dy = jac.lu().solve(&g).ok_or(SimError::SingularJacobian { t })?;
        for k in 0..m {
            y[k] -= dy[k];
        }
    }
    Err(SimError::StepNonConvergence { t, dt: 0.0 })
}
