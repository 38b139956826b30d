//! Fixed-step integration of the interconnected dynamics under deterministic
//! input signals.

use std::io::{self, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::EvalError;
use crate::field::VectorField;

/// Integration aborts once any state coordinate reaches this magnitude.
pub const BLOWUP_NORM: f64 = 1e8;

/// Mixing constant for deriving per-interval and per-trajectory seeds from
/// one base seed.
pub const SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("state reached magnitude {norm:.3e} at t = {time:.6}; integration aborted")]
    BlowUp { time: f64, norm: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid simulation parameter: {0}")]
    InvalidParameter(String),
}

/// Deterministic input signal `u(t)`.
#[derive(Debug, Clone)]
pub enum InputSignal {
    Constant(Vec<f64>),
    /// Cycles through `values`, holding each for `period`.
    PiecewiseConstant { period: f64, values: Vec<Vec<f64>> },
    /// `u_i(t) = amplitude_i * sin(frequency_i * t + phase_i)`.
    Sinusoid {
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
        phase: Vec<f64>,
    },
    /// Piecewise-constant samples drawn uniformly from the closed Euclidean
    /// ball of the given radius; interval `k` uses the stream seeded by
    /// `seed ^ (k * SEED_MIX)`, so any interval can be reproduced without
    /// replaying the ones before it.
    RandomPiecewise {
        dim: usize,
        period: f64,
        radius: f64,
        seed: u64,
    },
}

impl InputSignal {
    pub fn dim(&self) -> usize {
        match self {
            InputSignal::Constant(v) => v.len(),
            InputSignal::PiecewiseConstant { values, .. } => {
                values.first().map_or(0, |v| v.len())
            }
            InputSignal::Sinusoid { amplitude, .. } => amplitude.len(),
            InputSignal::RandomPiecewise { dim, .. } => *dim,
        }
    }

    pub fn sample_into(&self, t: f64, out: &mut [f64]) {
        match self {
            InputSignal::Constant(v) => out.copy_from_slice(v),
            InputSignal::PiecewiseConstant { period, values } => {
                let k = (t / period).floor().max(0.0) as usize % values.len();
                out.copy_from_slice(&values[k]);
            }
            InputSignal::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => {
                for i in 0..out.len() {
                    out[i] = amplitude[i] * (frequency[i] * t + phase[i]).sin();
                }
            }
            InputSignal::RandomPiecewise {
                period,
                radius,
                seed,
                ..
            } => {
                let k = (t / period).floor().max(0.0) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ k.wrapping_mul(SEED_MIX));
                ball_sample(&mut rng, *radius, out);
            }
        }
    }
}

/// Uniform sample from the closed Euclidean ball, by rejection from the
/// enclosing cube. The acceptance rate is fine for the low input dimensions
/// used here; after a bounded number of rejections the last candidate is
/// projected onto the ball to keep the routine total.
fn ball_sample(rng: &mut ChaCha8Rng, radius: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    for _ in 0..64 {
        for slot in out.iter_mut() {
            *slot = radius * (2.0 * rng.gen::<f64>() - 1.0);
        }
        let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= radius {
            return;
        }
    }
    let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for slot in out.iter_mut() {
            *slot *= radius / norm;
        }
    }
}

/// States and inputs recorded at every step of a fixed-step integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dt: f64,
    state_dim: usize,
    input_dim: usize,
    states: Vec<f64>,
    inputs: Vec<f64>,
}

impl Trajectory {
    /// Number of integration steps; there are `steps() + 1` recorded states.
    pub fn steps(&self) -> usize {
        self.states.len() / self.state_dim - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.input_dim..(k + 1) * self.input_dim]
    }

    /// Write `t`, the states, the inputs, and any extra columns produced by
    /// `extra` (appended in order) as CSV.
    pub fn write_csv<W: Write>(
        &self,
        state_names: &[String],
        input_names: &[String],
        extra: Option<(&str, &dyn Fn(usize) -> f64)>,
        mut out: W,
    ) -> io::Result<()> {
        let mut header = String::from("t");
        for n in state_names {
            header.push(',');
            header.push_str(n);
        }
        for n in input_names {
            header.push(',');
            header.push_str(n);
        }
        if let Some((name, _)) = extra {
            header.push(',');
            header.push_str(name);
        }
        writeln!(out, "{header}")?;
        for k in 0..=self.steps() {
            let mut line = format!("{}", self.time(k));
            for v in self.state(k) {
                line.push(',');
                line.push_str(&format!("{v}"));
            }
            for v in self.input(k) {
                line.push(',');
                line.push_str(&format!("{v}"));
            }
            if let Some((_, f)) = extra {
                line.push(',');
                line.push_str(&format!("{}", f(k)));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Classical fourth-order Runge-Kutta with a fixed step, sampling the input
/// at the stage times. Aborts with [`SimulateError::BlowUp`] when the state
/// leaves the ball of radius [`BLOWUP_NORM`].
pub fn simulate(
    f: &VectorField,
    initial: &[f64],
    input: &InputSignal,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory, SimulateError> {
    let n = f.state_dim();
    let (_, _, m) = f.dims();
    if initial.len() != n {
        return Err(SimulateError::InvalidParameter(format!(
            "initial state has {} coordinates, the field needs {n}",
            initial.len()
        )));
    }
    if input.dim() != m {
        return Err(SimulateError::InvalidParameter(format!(
            "input signal has dimension {}, the field needs {m}",
            input.dim()
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SimulateError::InvalidParameter(format!(
            "step size must be positive, got {dt}"
        )));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(SimulateError::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;

    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut inputs = Vec::with_capacity((steps + 1) * m);
    let mut x = initial.to_vec();
    let mut point = vec![0.0; n + m];
    let mut stage = vec![0.0; n];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut u_now = vec![0.0; m];
    let mut u_mid = vec![0.0; m];
    let mut u_end = vec![0.0; m];

    input.sample_into(0.0, &mut u_now);
    states.extend_from_slice(&x);
    inputs.extend_from_slice(&u_now);

    for step in 0..steps {
        let t = step as f64 * dt;
        input.sample_into(t, &mut u_now);
        input.sample_into(t + 0.5 * dt, &mut u_mid);
        input.sample_into(t + dt, &mut u_end);

        point[..n].copy_from_slice(&x);
        point[n..].copy_from_slice(&u_now);
        f.eval_into(&point, &mut k1)?;

        for i in 0..n {
            stage[i] = x[i] + 0.5 * dt * k1[i];
        }
        point[..n].copy_from_slice(&stage);
        point[n..].copy_from_slice(&u_mid);
        f.eval_into(&point, &mut k2)?;

        for i in 0..n {
            stage[i] = x[i] + 0.5 * dt * k2[i];
        }
        point[..n].copy_from_slice(&stage);
        f.eval_into(&point, &mut k3)?;

        for i in 0..n {
            stage[i] = x[i] + dt * k3[i];
        }
        point[..n].copy_from_slice(&stage);
        point[n..].copy_from_slice(&u_end);
        f.eval_into(&point, &mut k4)?;

        let mut worst = 0.0f64;
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            worst = worst.max(x[i].abs());
        }
        if !worst.is_finite() || worst >= BLOWUP_NORM {
            return Err(SimulateError::BlowUp {
                time: t + dt,
                norm: worst,
            });
        }
        input.sample_into(t + dt, &mut u_end);
        states.extend_from_slice(&x);
        inputs.extend_from_slice(&u_end);
    }

    Ok(Trajectory {
        dt,
        state_dim: n,
        input_dim: m,
        states,
        inputs,
    })
}
