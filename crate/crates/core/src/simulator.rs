//! Time-domain integration of the closed loops.
//!
//! All stepping happens in deviation coordinates `z = x - V_nom 1`, where
//! the forcing reduces to `C I_inj` and the states stay in the volt range
//! instead of sitting on a 100 kV offset.
//!
//! Two routes are provided:
//!
//! * [`ExactStepper`]: exact zero-order-hold discretisation of an LTI loop
//!   through the exponential of the augmented matrix `[[A, b], [0, 0]]`.
//! * [`integrate_dde`]: fixed-step trapezoidal integration of the
//!   instantaneous linear part, with the delayed communication coupling
//!   added explicitly from a history ring via cubic interpolation.

use nalgebra::{DMatrix, DVector};

use crate::analysis;
use crate::controllers::Controller;
use crate::error::{Error, Result};
use crate::graph::{build_laplacian, GridTopology};
use crate::model::{ClosedLoopSystem, ControllerKind, ConverterParams, StateLayout};

/// A trajectory is cut short once any voltage exceeds this multiple of `V_nom`.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Hard ceiling on the integration step, in seconds.
pub const MAX_STEP: f64 = 1e-3;

/// Step-change experiment on a closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub pre_injections: DVector<f64>,
    pub post_injections: DVector<f64>,
    pub step_time: f64,
    pub horizon: f64,
    pub delay: f64,
    pub sample_interval: f64,
    /// Caps the integration step below the automatic choice.
    pub max_step: Option<f64>,
}

impl Scenario {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.pre_injections.len() != n || self.post_injections.len() != n {
            return Err(Error::validation(format!(
                "scenario injections must have {n} entries"
            )));
        }
        if !(self.step_time >= 0.0 && self.step_time < self.horizon && self.horizon.is_finite()) {
            return Err(Error::validation(format!(
                "need 0 <= step_time < horizon, got step_time={} horizon={}",
                self.step_time, self.horizon
            )));
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(Error::validation("sample interval must be positive"));
        }
        if !(self.delay >= 0.0 && self.delay.is_finite()) {
            return Err(Error::validation("delay must be non-negative"));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::validation("max_step must be positive"));
            }
        }
        Ok(())
    }

    pub fn with_delay(&self, delay: f64) -> Self {
        Scenario {
            delay,
            ..self.clone()
        }
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        Scenario {
            horizon,
            ..self.clone()
        }
    }

    /// Number of samples on `[0, horizon]`.
    pub fn sample_count(&self) -> usize {
        (self.horizon / self.sample_interval + 1e-9).floor() as usize + 1
    }
}

/// Sampled voltages, controlled currents and (distributed) references.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub v: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub v_hat: Option<Vec<DVector<f64>>>,
    pub diverged: bool,
}

impl Trajectory {
    pub fn empty(n: usize, with_references: bool) -> Self {
        Trajectory {
            n,
            v_hat: with_references.then(Vec::new),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    /// Largest absolute voltage difference against another trajectory sampled on the same grid.
    pub fn max_voltage_difference(&self, other: &Trajectory) -> f64 {
        self.v
            .iter()
            .zip(&other.v)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }

    /// Time after which every sample of `metric` stays within `tol`; `None` if the
    /// last sample still violates it.
    pub fn settle_time<F>(&self, tol: f64, metric: F) -> Option<f64>
    where
        F: Fn(usize) -> f64,
    {
        let last_bad = (0..self.len()).rev().find(|&k| metric(k) >= tol);
        match last_bad {
            None => self.times.first().copied(),
            Some(k) if k + 1 < self.len() => Some(self.times[k + 1]),
            Some(_) => None,
        }
    }
}

/// Exact discretisation `z <- Phi z + Gamma` for a fixed step.
#[derive(Debug, Clone)]
pub struct ExactStepper {
    phi: DMatrix<f64>,
    gamma: DVector<f64>,
}

impl ExactStepper {
    /// `Phi = e^{A h}`, `Gamma = int_0^h e^{A s} ds b`, read off `exp([[A, b], [0, 0]] h)`.
    pub fn new(a: &DMatrix<f64>, b: &DVector<f64>, h: f64) -> Result<Self> {
        let m = a.nrows();
        if !a.is_square() || b.len() != m {
            return Err(Error::validation("exact step: dimension mismatch"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::validation("exact step: h must be positive"));
        }
        let mut aug = DMatrix::zeros(m + 1, m + 1);
        aug.view_mut((0, 0), (m, m)).copy_from(&(a * h));
        aug.view_mut((0, m), (m, 1)).copy_from(&(b * h));
        let e = aug.exp();
        if e.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical("matrix exponential overflowed"));
        }
        Ok(ExactStepper {
            phi: e.view((0, 0), (m, m)).into_owned(),
            gamma: e.view((0, m), (m, 1)).column(0).into_owned(),
        })
    }

    pub fn step(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.phi * x + &self.gamma
    }
}

/// One exact step of `dx/dt = A x + b` over `h`.
pub fn lti_step_exact(
    system: &ClosedLoopSystem,
    state: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    if state.len() != system.dim() {
        return Err(Error::validation("state dimension mismatch"));
    }
    let stepper = ExactStepper::new(system.state_matrix(), system.forcing(), h)?;
    Ok(stepper.step(state))
}

/// Exact sampled response to the scenario's injection step (no delay).
///
/// The step time is rounded to the nearest sample.
pub fn exact_trajectory(system: &ClosedLoopSystem, scenario: &Scenario) -> Result<Trajectory> {
    scenario.validate(system.nodes())?;
    let pre = system.with_injections(&scenario.pre_injections)?;
    let z0 = deviation_equilibrium(&pre)?;
    let a = system.state_matrix();
    let dt = scenario.sample_interval;
    let pre_step = ExactStepper::new(
        a,
        &system.deviation_forcing_for(&scenario.pre_injections),
        dt,
    )?;
    let post_step = ExactStepper::new(
        a,
        &system.deviation_forcing_for(&scenario.post_injections),
        dt,
    )?;
    let step_index = (scenario.step_time / dt).round() as usize;

    let mut out = Recorder::new(system);
    let mut z = z0;
    out.record(0.0, z.as_slice());
    for k in 1..scenario.sample_count() {
        z = if k - 1 < step_index {
            pre_step.step(&z)
        } else {
            post_step.step(&z)
        };
        out.record(k as f64 * dt, z.as_slice());
    }
    Ok(out.finish(false))
}

fn deviation_equilibrium(system: &ClosedLoopSystem) -> Result<DVector<f64>> {
    let rhs = -system.deviation_forcing();
    system
        .state_matrix()
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("closed-loop matrix is singular"))
}

/// Integration step used for a given system and delay.
///
/// `h <= min(tau/20, tau_e/5, 1 ms)` with `tau_e = min_i C_i / K^P_i`, then
/// shrunk so the sample interval is an integer number of steps.
pub fn integration_step(
    params: &ConverterParams,
    delay: f64,
    sample_interval: f64,
    cap: Option<f64>,
) -> f64 {
    let tau_e = params
        .capacitance()
        .zip_map(params.droop_gain(), |c, k| c / k)
        .min();
    let mut h_max = (tau_e / 5.0).min(MAX_STEP);
    if delay > 0.0 {
        h_max = h_max.min(delay / 20.0);
    }
    if let Some(c) = cap {
        h_max = h_max.min(c);
    }
    let per_sample = (sample_interval / h_max - 1e-9).ceil().max(1.0);
    sample_interval / per_sample
}

/// Trapezoidal update `(I - h/2 A0) z+ = (I + h/2 A0) z + h f + h/2 (d + d+)`,
/// stored as `z+ = P z + Q (f + (d + d+)/2)` with `Q = h (I - h/2 A0)^{-1}`.
#[derive(Debug, Clone)]
struct Trapezoid {
    m: usize,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl Trapezoid {
    fn new(a0: &DMatrix<f64>, h: f64) -> Result<Self> {
        let m = a0.nrows();
        let eye = DMatrix::<f64>::identity(m, m);
        let lhs = &eye - a0 * (h / 2.0);
        let inv = lhs
            .try_inverse()
            .ok_or_else(|| Error::numerical("trapezoidal system matrix is singular"))?;
        let p = &inv * (&eye + a0 * (h / 2.0));
        let q = inv * h;
        // row-major for the inner loop
        Ok(Trapezoid {
            m,
            p: p.transpose().as_slice().to_vec(),
            q: q.transpose().as_slice().to_vec(),
        })
    }

    fn step(&self, z: &[f64], drive: &[f64], out: &mut [f64]) {
        let m = self.m;
        for (i, o) in out.iter_mut().enumerate().take(m) {
            let prow = &self.p[i * m..(i + 1) * m];
            let qrow = &self.q[i * m..(i + 1) * m];
            let mut acc = 0.0;
            for j in 0..m {
                acc += prow[j] * z[j] + qrow[j] * drive[j];
            }
            *o = acc;
        }
    }
}

/// Ring buffer of past reference offsets `e_k = (V_hat - V)(t_k)`.
struct History {
    n: usize,
    cap: usize,
    data: Vec<f64>,
}

impl History {
    fn new(n: usize, cap: usize, initial: &[f64]) -> Self {
        let mut data = Vec::with_capacity(n * cap);
        for _ in 0..cap {
            data.extend_from_slice(initial);
        }
        History { n, cap, data }
    }

    fn slot(&self, k: i64) -> usize {
        k.rem_euclid(self.cap as i64) as usize * self.n
    }

    fn push(&mut self, k: i64, e: &[f64]) {
        let s = self.slot(k);
        self.data[s..s + self.n].copy_from_slice(e);
    }

    /// Cubic Lagrange interpolation at fractional step index `pos`.
    fn at(&self, pos: f64, out: &mut [f64]) {
        let base = pos.floor();
        let frac = pos - base;
        let k = base as i64;
        if frac < 1e-12 {
            let s = self.slot(k);
            out.copy_from_slice(&self.data[s..s + self.n]);
            return;
        }
        // nodes at -1, 0, 1, 2 relative to k
        let x = frac;
        let w = [
            -x * (x - 1.0) * (x - 2.0) / 6.0,
            (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
            -(x + 1.0) * x * (x - 2.0) / 2.0,
            (x + 1.0) * x * (x - 1.0) / 6.0,
        ];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, wj) in w.iter().enumerate() {
            let s = self.slot(k - 1 + j as i64);
            for (o, v) in out.iter_mut().zip(&self.data[s..s + self.n]) {
                *o += wj * v;
            }
        }
    }
}

struct Recorder<'a> {
    system: &'a ClosedLoopSystem,
    traj: Trajectory,
    u: Vec<f64>,
}

impl<'a> Recorder<'a> {
    fn new(system: &'a ClosedLoopSystem) -> Self {
        let refs = matches!(system.layout(), StateLayout::Distributed { .. });
        Recorder {
            system,
            traj: Trajectory::empty(system.nodes(), refs),
            u: vec![0.0; system.nodes()],
        }
    }

    fn record(&mut self, t: f64, z: &[f64]) {
        let n = self.system.nodes();
        let vnom = self.system.nominal_voltage();
        let vr = self.system.layout().voltage_range();
        self.system.controlled_current_dev(z, &mut self.u);
        self.traj.times.push(t);
        self.traj
            .v
            .push(DVector::from_iterator(n, z[vr].iter().map(|d| vnom + d)));
        self.traj.u.push(DVector::from_column_slice(&self.u));
        if let Some(refs) = self.traj.v_hat.as_mut() {
            refs.push(DVector::from_iterator(n, z[..n].iter().map(|d| vnom + d)));
        }
    }

    fn finish(mut self, diverged: bool) -> Trajectory {
        self.traj.diverged = diverged;
        self.traj
    }
}

/// Integrates the scenario from the pre-step equilibrium (found by a linear solve).
pub fn integrate_dde(
    system: &ClosedLoopSystem,
    controller: &Controller,
    scenario: &Scenario,
) -> Result<Trajectory> {
    scenario.validate(system.nodes())?;
    let pre = system.with_injections(&scenario.pre_injections)?;
    let z0 = deviation_equilibrium(&pre)?;
    integrate_from(system, controller, scenario, &z0)
}

/// Runs a scenario: analytic pre-step equilibrium, constant initial history,
/// injection switch at `step_time`.
pub fn run_scenario(
    system: &ClosedLoopSystem,
    controller: &Controller,
    scenario: &Scenario,
) -> Result<Trajectory> {
    scenario.validate(system.nodes())?;
    let pre = system.with_injections(&scenario.pre_injections)?;
    let eq = match system.kind() {
        ControllerKind::Droop => analysis::droop_equilibrium(&pre)?,
        ControllerKind::Distributed => analysis::distributed_equilibrium(&pre)?,
    };
    let vnom = system.nominal_voltage();
    let mut z0 = DVector::zeros(system.dim());
    let n = system.nodes();
    let vr = system.layout().voltage_range();
    for i in 0..n {
        z0[vr.start + i] = eq.v_eq[i] - vnom;
    }
    if let Some(v_hat) = &eq.v_hat_eq {
        for i in 0..n {
            z0[i] = v_hat[i] - vnom;
        }
    }
    integrate_from(system, controller, scenario, &z0)
}

fn integrate_from(
    system: &ClosedLoopSystem,
    controller: &Controller,
    scenario: &Scenario,
    z0: &DVector<f64>,
) -> Result<Trajectory> {
    if controller.kind() != system.kind() {
        return Err(Error::validation(format!(
            "{} controller used with a {} system",
            controller.kind().name(),
            system.kind().name()
        )));
    }
    let tau = scenario.delay;
    if (controller.delay() - tau).abs() > 1e-15 {
        return Err(Error::validation(format!(
            "controller delay {} s differs from scenario delay {tau} s",
            controller.delay()
        )));
    }
    if system.kind() == ControllerKind::Droop && tau > 0.0 {
        return Err(Error::validation(
            "the droop loop has no communication delay",
        ));
    }

    let n = system.nodes();
    let m = system.dim();
    let h = integration_step(
        system.params(),
        tau,
        scenario.sample_interval,
        scenario.max_step,
    );
    let steps_per_sample = (scenario.sample_interval / h).round() as usize;
    let samples = scenario.sample_count();
    let total_steps = (samples - 1) * steps_per_sample;
    let step_index = (scenario.step_time / h - 1e-9).ceil().max(0.0) as usize;

    let delayed = match controller {
        Controller::Distributed(c) if tau > 0.0 => Some(c),
        _ => None,
    };
    let a0 = match delayed {
        Some(c) => system.state_matrix() - c.communication_block(),
        None => system.state_matrix().clone(),
    };
    let trap = Trapezoid::new(&a0, h)?;
    let f_pre = system.deviation_forcing_for(&scenario.pre_injections);
    let f_post = system.deviation_forcing_for(&scenario.post_injections);

    let vnom = system.nominal_voltage();
    let limit = DIVERGENCE_FACTOR * vnom;
    let vr = system.layout().voltage_range();

    let mut z = z0.as_slice().to_vec();
    let mut next = vec![0.0; m];
    let mut drive = vec![0.0; m];

    let lag = tau / h;
    let offsets = |z: &[f64], e: &mut [f64]| {
        for i in 0..n {
            e[i] = z[i] - z[n + i];
        }
    };
    let mut e = vec![0.0; n];
    if delayed.is_some() {
        offsets(&z, &mut e);
    }
    let mut history = delayed.map(|_| History::new(n, lag.ceil() as usize + 8, &e));
    let mut e_del = vec![0.0; n];
    let mut d_now = vec![0.0; n];
    let mut d_next = vec![0.0; n];
    if let (Some(c), Some(hist)) = (delayed, history.as_ref()) {
        hist.at(-lag, &mut e_del);
        c.consensus_into(&e_del, &mut d_now);
    }

    let mut out = Recorder::new(system);
    out.record(0.0, &z);
    let mut diverged = false;

    for k in 0..total_steps {
        let f = if k < step_index { &f_pre } else { &f_post };
        drive.copy_from_slice(f.as_slice());
        if let (Some(c), Some(hist)) = (delayed, history.as_ref()) {
            hist.at(k as f64 + 1.0 - lag, &mut e_del);
            c.consensus_into(&e_del, &mut d_next);
            // delayed coupling enters the V_hat rows with a minus sign
            for i in 0..n {
                drive[i] -= 0.5 * (d_now[i] + d_next[i]);
            }
        }
        trap.step(&z, &drive, &mut next);
        std::mem::swap(&mut z, &mut next);
        if let Some(hist) = history.as_mut() {
            offsets(&z, &mut e);
            hist.push(k as i64 + 1, &e);
            std::mem::swap(&mut d_now, &mut d_next);
        }

        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite state at t = {} s",
                (k + 1) as f64 * h
            )));
        }
        if z[vr.clone()].iter().any(|d| (vnom + d).abs() > limit) {
            out.record((k + 1) as f64 * h, &z);
            diverged = true;
            break;
        }
        if (k + 1) % steps_per_sample == 0 {
            let idx = (k + 1) / steps_per_sample;
            out.record(idx as f64 * scenario.sample_interval, &z);
        }
    }
    Ok(out.finish(diverged))
}

/// Open-loop line network with `u = 0`, integrated with the same trapezoidal rule.
///
/// Returns the voltage samples every `h` up to `horizon`.
pub fn integrate_open_loop(
    topology: &GridTopology,
    params: &ConverterParams,
    injections: &DVector<f64>,
    v0: &DVector<f64>,
    h: f64,
    horizon: f64,
) -> Result<Vec<DVector<f64>>> {
    let n = topology.node_count();
    if params.len() != n || injections.len() != n || v0.len() != n {
        return Err(Error::validation("open loop: dimension mismatch"));
    }
    let cinv = params.inverse_capacitance();
    let a = -(&cinv * build_laplacian(topology).matrix());
    let f = cinv * injections;
    let trap = Trapezoid::new(&a, h)?;
    let steps = (horizon / h).round() as usize;
    let mut v = v0.as_slice().to_vec();
    let mut next = vec![0.0; n];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(v0.clone());
    for _ in 0..steps {
        trap.step(&v, f.as_slice(), &mut next);
        std::mem::swap(&mut v, &mut next);
        out.push(DVector::from_column_slice(&v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::{DistributedController, DroopController};
    use crate::model::{assemble_distributed_loop, assemble_droop_loop};

    fn two_node_droop() -> ClosedLoopSystem {
        let t = GridTopology::from_resistances(2, [(0, 1, 1.0)]).unwrap();
        let p = ConverterParams::uniform(2, 1.0, 1.0, 100.0).unwrap();
        assemble_droop_loop(&t, &p, &DVector::from_vec(vec![1.0, -1.0])).unwrap()
    }

    #[test]
    fn scalar_decay_halves() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let s = ExactStepper::new(&a, &DVector::zeros(1), 2f64.ln()).unwrap();
        let x = s.step(&DVector::from_element(1, 1.0));
        assert!((x[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn exact_step_keeps_equilibrium() {
        let sys = two_node_droop();
        let eq = sys
            .state_matrix()
            .clone()
            .lu()
            .solve(&(-sys.forcing()))
            .unwrap();
        let x = lti_step_exact(&sys, &eq, 0.37).unwrap();
        assert!((x - &eq).amax() < 1e-12 * eq.amax());
    }

    #[test]
    fn semigroup_two_half_steps() {
        let sys = two_node_droop();
        let x0 = DVector::from_vec(vec![90.0, 115.0]);
        let one = lti_step_exact(&sys, &x0, 0.2).unwrap();
        let half = lti_step_exact(&sys, &x0, 0.1).unwrap();
        let two = lti_step_exact(&sys, &half, 0.1).unwrap();
        assert!((one - two).amax() < 1e-10);
    }

    #[test]
    fn history_interpolation_is_exact_for_cubics() {
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t - 0.1 * t * t * t;
        let mut h = History::new(1, 16, &[f(0.0)]);
        for k in -15..=0 {
            h.push(k, &[f(k as f64)]);
        }
        let mut out = [0.0];
        for pos in [-10.3, -7.0, -2.75, -1.5] {
            h.at(pos, &mut out);
            assert!((out[0] - f(pos)).abs() < 1e-10, "pos {pos}");
        }
    }

    #[test]
    fn step_size_rules() {
        let p = ConverterParams::uniform(4, 123.79e-6, 10.0, 1e5).unwrap();
        let h = integration_step(&p, 0.0, 1e-3, None);
        assert!(h <= 123.79e-6 / 10.0 / 5.0);
        assert!(((1e-3 / h).round() - 1e-3 / h).abs() < 1e-6);
        let slow = ConverterParams::uniform(2, 1.0, 1.0, 1.0).unwrap();
        assert!((integration_step(&slow, 0.0, 1e-2, None) - 1e-3).abs() < 1e-15);
        assert!(integration_step(&slow, 0.01, 1e-2, None) <= 0.01 / 20.0);
    }

    #[test]
    fn zero_step_stays_flat() {
        let t = GridTopology::from_resistances(2, [(0, 1, 0.5)]).unwrap();
        let p = ConverterParams::uniform(2, 0.01, 2.0, 100.0).unwrap();
        let i = DVector::from_vec(vec![3.0, -1.0]);
        let sys = assemble_droop_loop(&t, &p, &i).unwrap();
        let sc = Scenario {
            pre_injections: i.clone(),
            post_injections: i.clone(),
            step_time: 0.0,
            horizon: 0.5,
            delay: 0.0,
            sample_interval: 0.01,
            max_step: None,
        };
        let c = Controller::Droop(DroopController::from_params(&p));
        let tr = run_scenario(&sys, &c, &sc).unwrap();
        assert_eq!(tr.len(), 51);
        let first = tr.v[0].clone();
        for v in &tr.v {
            assert!((v - &first).amax() < 1e-9);
        }
    }

    #[test]
    fn mismatched_controller_is_rejected() {
        let t = GridTopology::from_resistances(2, [(0, 1, 0.5)]).unwrap();
        let p = ConverterParams::uniform(2, 0.01, 2.0, 100.0).unwrap();
        let i = DVector::from_vec(vec![3.0, -1.0]);
        let sys = assemble_distributed_loop(&t, &t, &p, 0.1, &i).unwrap();
        let sc = Scenario {
            pre_injections: i.clone(),
            post_injections: i.clone(),
            step_time: 0.0,
            horizon: 0.1,
            delay: 0.0,
            sample_interval: 0.01,
            max_step: None,
        };
        let droop = Controller::Droop(DroopController::from_params(&p));
        assert!(integrate_dde(&sys, &droop, &sc).is_err());
        let dist = Controller::Distributed(DistributedController::new(&p, &t, 0.1, 0.05).unwrap());
        assert!(integrate_dde(&sys, &dist, &sc).is_err());
    }

    #[test]
    fn bad_scenarios_are_rejected() {
        let base = Scenario {
            pre_injections: DVector::zeros(2),
            post_injections: DVector::zeros(2),
            step_time: 0.0,
            horizon: 1.0,
            delay: 0.0,
            sample_interval: 0.01,
            max_step: None,
        };
        assert!(base.validate(2).is_ok());
        assert!(base.validate(3).is_err());
        assert!(Scenario {
            step_time: 1.0,
            ..base.clone()
        }
        .validate(2)
        .is_err());
        assert!(Scenario {
            sample_interval: 0.0,
            ..base.clone()
        }
        .validate(2)
        .is_err());
        assert!(Scenario {
            delay: -0.1,
            ..base.clone()
        }
        .validate(2)
        .is_err());
    }

    #[test]
    fn settle_time_reads_last_violation() {
        let tr = Trajectory {
            n: 1,
            times: vec![0.0, 1.0, 2.0, 3.0],
            v: vec![
                DVector::from_element(1, 5.0),
                DVector::from_element(1, 2.0),
                DVector::from_element(1, 0.5),
                DVector::from_element(1, 0.1),
            ],
            u: vec![DVector::zeros(1); 4],
            v_hat: None,
            diverged: false,
        };
        assert_eq!(tr.settle_time(1.0, |k| tr.v[k][0]), Some(2.0));
        assert_eq!(tr.settle_time(0.05, |k| tr.v[k][0]), None);
        assert_eq!(tr.settle_time(10.0, |k| tr.v[k][0]), Some(0.0));
    }
}
