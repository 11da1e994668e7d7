//! Adaptive Dormand–Prince 5(4) integrator with continuous (dense) output.
//!
//! The state is a flat `f64` slice; complex matrices are integrated through
//! their interleaved real/imaginary storage. Grid outputs come from the
//! fourth-order continuous extension, so internal steps never have to land on
//! sampling times.

use crate::error::{Error, Result};

// Butcher tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// error coefficients (5th minus embedded 4th order)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
    /// Upper bound on the internal step.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel: 1e-9, abs: 1e-11, max_step: f64::INFINITY, max_steps: 5_000_000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// What the accept hook did to the freshly accepted state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Accept {
    Unchanged,
    /// The hook modified the state in place; the stored derivative is refreshed.
    Modified,
}

fn error_norm(y0: &[f64], y1: &[f64], err: &[f64], tol: &Tolerances) -> f64 {
    let mut acc = 0.0;
    for i in 0..y0.len() {
        let sc = tol.abs + tol.rel * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / y0.len().max(1) as f64).sqrt()
}

/// Integrate `dy/dt = rhs(t, y)` over a strictly increasing `grid` starting at
/// the initial time, calling `observe(k, t_k, y(t_k))` at every grid point
/// (including the first) and `on_accept(t, y)` after each accepted step.
pub fn integrate<F, O, A>(
    mut rhs: F,
    y0: &[f64],
    grid: &[f64],
    tol: &Tolerances,
    mut observe: O,
    mut on_accept: A,
) -> Result<Stats>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(usize, f64, &[f64]) -> Result<()>,
    A: FnMut(f64, &mut [f64]) -> Result<Accept>,
{
    if !(tol.rel > 0.0 && tol.abs > 0.0) {
        return Err(Error::Config("integrator tolerances must be positive".into()));
    }
    if grid.is_empty() {
        return Ok(Stats::default());
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("time grid must be strictly increasing".into()));
    }
    let n = y0.len();
    let mut stats = Stats::default();
    let mut t = grid[0];
    let t_end = *grid.last().unwrap();
    let mut y = y0.to_vec();
    observe(0, t, &y)?;
    if grid.len() == 1 {
        return Ok(stats);
    }
    let mut next_out = 1usize;

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut interp = vec![0.0; n];
    let mut dense = vec![[0.0f64; 5]; n];

    rhs(t, &y, &mut k1);
    stats.rhs_evals += 1;
    let mut h = initial_step(&mut rhs, t, &y, &k1, tol, &mut stats).min(tol.max_step).min(t_end - t);
    let mut last_rejected = false;

    while next_out < grid.len() {
        if stats.accepted + stats.rejected >= tol.max_steps {
            return Err(Error::Numerical(format!("integrator exceeded {} steps at t = {t}", tol.max_steps)));
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::Stiffness { t, step: h });
        }
        let h_eff = h.min(t_end - t);

        for i in 0..n {
            ytmp[i] = y[i] + h_eff * A21 * k1[i];
        }
        rhs(t + C2 * h_eff, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h_eff * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h_eff, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h_eff * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h_eff, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h_eff * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h_eff, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i] + h_eff * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h_eff, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + h_eff * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + h_eff, &ynew, &mut k7);
        stats.rhs_evals += 6;
        for i in 0..n {
            err[i] = h_eff * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = error_norm(&y, &ynew, &err, tol);
        if !e.is_finite() {
            stats.rejected += 1;
            h = h_eff * 0.1;
            last_rejected = true;
            continue;
        }
        if e > 1.0 {
            stats.rejected += 1;
            h = h_eff * (0.9 * e.powf(-0.2)).max(0.2);
            last_rejected = true;
            continue;
        }

        // accepted: prepare continuous extension on [t, t + h_eff]
        for i in 0..n {
            let ydiff = ynew[i] - y[i];
            let bspl = h_eff * k1[i] - ydiff;
            dense[i] = [
                y[i],
                ydiff,
                bspl,
                ydiff - h_eff * k7[i] - bspl,
                h_eff * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]),
            ];
        }
        let t_new = if h_eff == t_end - t { t_end } else { t + h_eff };
        while next_out < grid.len() && grid[next_out] <= t_new {
            let tk = grid[next_out];
            if tk == t_new {
                observe(next_out, tk, &ynew)?;
            } else {
                let theta = (tk - t) / h_eff;
                let theta1 = 1.0 - theta;
                for i in 0..n {
                    let r = &dense[i];
                    interp[i] = r[0] + theta * (r[1] + theta1 * (r[2] + theta * (r[3] + theta1 * r[4])));
                }
                observe(next_out, tk, &interp)?;
            }
            next_out += 1;
        }
        stats.accepted += 1;
        t = t_new;
        std::mem::swap(&mut y, &mut ynew);
        match on_accept(t, &mut y)? {
            Accept::Unchanged => std::mem::swap(&mut k1, &mut k7),
            Accept::Modified => {
                rhs(t, &y, &mut k1);
                stats.rhs_evals += 1;
            }
        }
        let mut fac = 0.9 * e.max(1e-10).powf(-0.2);
        fac = fac.clamp(0.2, if last_rejected { 1.0 } else { 5.0 });
        h = (h_eff * fac).min(tol.max_step);
        last_rejected = false;
    }
    Ok(stats)
}

/// Starting step following Hairer, Nørsett & Wanner (II.4).
fn initial_step<F>(rhs: &mut F, t: f64, y: &[f64], f0: &[f64], tol: &Tolerances, stats: &mut Stats) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len().max(1) as f64;
    let sc = |v: f64| tol.abs + tol.rel * v.abs();
    let d0 = (y.iter().map(|&v| (v / sc(v)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y.iter().zip(f0).map(|(&v, &f)| (f / sc(v)).powi(2)).sum::<f64>() / n).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(&v, &f)| v + h0 * f).collect();
    let mut f1 = vec![0.0; y.len()];
    rhs(t + h0, &y1, &mut f1);
    stats.rhs_evals += 1;
    let d2 = (y.iter().zip(f0.iter().zip(&f1)).map(|(&v, (&a, &b))| ((b - a) / sc(v)).powi(2)).sum::<f64>() / n).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1)
}
