//! Equilibria, spectral stability conditions and limit behaviour of the
//! droop and distributed loops.

use nalgebra::{DMatrix, DVector};

use crate::controllers::{Controller, DistributedController};
use crate::error::{Error, Result};
use crate::graph::{build_laplacian, lambda_min_sym, GridTopology};
use crate::model::{assemble_droop_loop, ClosedLoopSystem, ControllerKind, ConverterParams};
use crate::simulator::{run_scenario, Scenario, Trajectory};

/// Strict-positivity margin for the first stability condition.
pub const CONDITION8_TOL: f64 = 1e-12;
/// Relative slack for the PSD test of the second stability condition.
pub const CONDITION9_REL_TOL: f64 = 1e-9;
/// Absolute slack on the steady-state voltage bound, in volts.
pub const BOUND_TOL: f64 = 1e-9;
/// Delay search stops once the bracket is this narrow, in seconds.
pub const DELAY_BRACKET: f64 = 1e-3;
/// Tail-to-head deviation ratio above which a run counts as diverging.
pub const GROWTH_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCheck {
    pub value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub hurwitz: bool,
    pub spectral_abscissa: f64,
    /// Only defined for the distributed loop.
    pub condition8: Option<ConditionCheck>,
    pub condition9: Option<ConditionCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub v_eq: DVector<f64>,
    pub v_hat_eq: Option<DVector<f64>>,
    pub u_eq: DVector<f64>,
    /// Common offset `V_hat - V` of the distributed loop, `-(sum I_inj)/(sum K^P)`.
    pub k: Option<f64>,
    /// Net current into the line network, `I_inj + u_eq`.
    pub i_tot: DVector<f64>,
    /// `2 max|I_tot| sum_{i>=2} 1/lambda_i(L_R)`.
    pub bound_rhs: f64,
}

impl EquilibriumReport {
    /// `sum_i (u_i + I_inj_i)`.
    pub fn current_balance(&self) -> f64 {
        self.i_tot.sum()
    }
}

fn bound_rhs(system: &ClosedLoopSystem, i_tot: &DVector<f64>) -> Result<f64> {
    let eig = system.line_laplacian().eigenvalues()?;
    let inv_sum: f64 = eig.iter().skip(1).map(|l| 1.0 / l).sum();
    Ok(2.0 * i_tot.amax() * inv_sum)
}

/// `V_eq = (L_R + K^P)^{-1} (K^P V_nom 1 + I_inj)`, solved for `V_eq - V_nom 1`.
pub fn droop_equilibrium(system: &ClosedLoopSystem) -> Result<EquilibriumReport> {
    if system.kind() != ControllerKind::Droop {
        return Err(Error::validation(
            "droop equilibrium requested for a distributed loop",
        ));
    }
    let params = system.params();
    let m = system.line_laplacian().matrix() + params.droop_matrix();
    let injections = system.injections();
    let dev = m
        .clone()
        .cholesky()
        .map(|c| c.solve(injections))
        .or_else(|| m.clone().lu().solve(injections))
        .ok_or_else(|| Error::numerical("L_R + K^P is singular"))?;
    let residual = (&m * &dev - injections).amax();
    let scale = m.abs().column_sum().amax() * dev.amax() + injections.amax();
    if residual > 1e-10 * scale.max(1.0) {
        return Err(Error::numerical(format!(
            "droop equilibrium residual {residual:e}"
        )));
    }
    let vnom = system.nominal_voltage();
    let v_eq = dev.add_scalar(vnom);
    let u_eq = -params.droop_gain().component_mul(&dev);
    let i_tot = injections + &u_eq;
    let rhs = bound_rhs(system, &i_tot)?;
    Ok(EquilibriumReport {
        v_eq,
        v_hat_eq: None,
        u_eq,
        k: None,
        i_tot,
        bound_rhs: rhs,
    })
}

/// Equilibrium of the distributed loop from the full linear solve `A x = -b`.
pub fn distributed_equilibrium(system: &ClosedLoopSystem) -> Result<EquilibriumReport> {
    if system.kind() != ControllerKind::Distributed {
        return Err(Error::validation(
            "distributed equilibrium requested for a droop loop",
        ));
    }
    let a = system.state_matrix();
    let rhs = -system.deviation_forcing();
    let sv = a.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin.is_nan() || smin <= 1e-14 * smax {
        return Err(Error::numerical(format!(
            "closed-loop matrix is rank deficient (sigma_min/sigma_max = {:e})",
            smin / smax
        )));
    }
    let z = a
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("closed-loop matrix is singular"))?;
    let n = system.nodes();
    let vnom = system.nominal_voltage();
    let params = system.params();
    let z_hat = z.rows(0, n).into_owned();
    let z_v = z.rows(n, n).into_owned();
    let u_eq = params.droop_gain().component_mul(&(&z_hat - &z_v));
    let injections = system.injections();
    let k = -injections.sum() / params.droop_gain().sum();
    let i_tot = injections + &u_eq;
    let rhs = bound_rhs(system, &i_tot)?;
    Ok(EquilibriumReport {
        v_eq: z_v.add_scalar(vnom),
        v_hat_eq: Some(z_hat.add_scalar(vnom)),
        u_eq,
        k: Some(k),
        i_tot,
        bound_rhs: rhs,
    })
}

pub fn equilibrium(system: &ClosedLoopSystem) -> Result<EquilibriumReport> {
    match system.kind() {
        ControllerKind::Droop => droop_equilibrium(system),
        ControllerKind::Distributed => distributed_equilibrium(system),
    }
}

/// `1/2 lmin(K^-1 L_R + L_R K^-1) + 1 + g/2 lmin(L_C K^-1 C + C K^-1 L_C)`
/// with `C = diag(C_i)` the physical capacitances.
pub fn check_condition_8(
    lines: &GridTopology,
    comm: &GridTopology,
    params: &ConverterParams,
    gamma: f64,
) -> Result<ConditionCheck> {
    let lr = build_laplacian(lines).into_matrix();
    let lc = build_laplacian(comm).into_matrix();
    let kinv = DMatrix::from_diagonal(&params.droop_gain().map(|k| 1.0 / k));
    let cap = DMatrix::from_diagonal(params.capacitance());
    let first = &kinv * &lr + &lr * &kinv;
    let second = &lc * &kinv * &cap + &cap * &kinv * &lc;
    let value = 0.5 * sym_lambda_min(&first)? + 1.0 + 0.5 * gamma * sym_lambda_min(&second)?;
    Ok(ConditionCheck {
        value,
        holds: value > CONDITION8_TOL,
    })
}

/// `lmin(L_C K^-1 L_R + L_R K^-1 L_C) >= 0`, up to `1e-9 max|M|`.
pub fn check_condition_9(
    lines: &GridTopology,
    comm: &GridTopology,
    params: &ConverterParams,
) -> Result<ConditionCheck> {
    let lr = build_laplacian(lines).into_matrix();
    let lc = build_laplacian(comm).into_matrix();
    let kinv = DMatrix::from_diagonal(&params.droop_gain().map(|k| 1.0 / k));
    let m = &lc * &kinv * &lr + &lr * &kinv * &lc;
    let value = sym_lambda_min(&m)?;
    let scale = m.amax();
    Ok(ConditionCheck {
        value,
        holds: value >= -CONDITION9_REL_TOL * scale,
    })
}

fn sym_lambda_min(m: &DMatrix<f64>) -> Result<f64> {
    // inputs are symmetric up to rounding; symmetrize before the eigensolve
    lambda_min_sym(m)
}

/// Spectral abscissa `max Re(eig A)` and whether it is strictly negative.
pub fn hurwitz_check(a: &DMatrix<f64>) -> Result<(f64, bool)> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::numerical(
            "Hurwitz check needs a non-empty square matrix",
        ));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("matrix contains non-finite entries"));
    }
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numerical("Schur decomposition did not converge"))?;
    let eig = schur.complex_eigenvalues();
    let abscissa = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if !abscissa.is_finite() {
        return Err(Error::numerical("eigensolver returned non-finite values"));
    }
    Ok((abscissa, abscissa < 0.0))
}

pub fn stability_report(system: &ClosedLoopSystem) -> Result<StabilityReport> {
    let (spectral_abscissa, hurwitz) = hurwitz_check(system.state_matrix())?;
    let (condition8, condition9) = match system.communication() {
        Some(comm) => (
            Some(check_condition_8(
                system.lines(),
                &comm.topology,
                system.params(),
                comm.gamma,
            )?),
            Some(check_condition_9(
                system.lines(),
                &comm.topology,
                system.params(),
            )?),
        ),
        None => (None, None),
    };
    Ok(StabilityReport {
        hurwitz,
        spectral_abscissa,
        condition8,
        condition9,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoltageBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `max_i |V_eq,i - V_nom| <= 2 max|I_tot| sum_{i>=2} 1/lambda_i(L_R)`.
pub fn voltage_bound(system: &ClosedLoopSystem, eq: &EquilibriumReport) -> Result<VoltageBound> {
    let vnom = system.nominal_voltage();
    let lhs = eq.v_eq.iter().map(|v| (v - vnom).abs()).fold(0.0, f64::max);
    let rhs = bound_rhs(system, &eq.i_tot)?;
    Ok(VoltageBound {
        lhs,
        rhs,
        holds: lhs <= rhs + BOUND_TOL,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub scale: f64,
    pub v_eq: DVector<f64>,
    pub u_eq: DVector<f64>,
    /// `max|V_eq - V_nom|`
    pub voltage_error: f64,
    /// `max|u_eq + I_inj|`
    pub local_balance_error: f64,
    /// `max|u_eq - u_share|` against proportional sharing `-(sum I)/(sum K) K 1`.
    pub sharing_error: f64,
    /// `||V_eq - mean(V_eq) 1||_2`
    pub spread: f64,
    /// `mean(V_eq) - V_nom`
    pub mean_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitsTable {
    /// Sorted by descending scale.
    pub rows: Vec<LimitRow>,
    /// `max|V_eq - V_nom|` shrinks as the gains grow.
    pub voltage_approaches_nominal: bool,
    /// `max|u_eq + I_inj|` shrinks as the gains grow.
    pub current_approaches_injection: bool,
    /// Sharing error shrinks as the gains fall.
    pub current_approaches_sharing: bool,
    /// Spread grows as the gains fall (only meaningful when `sum I_inj != 0`).
    pub spread_grows: bool,
    /// `|mean(V_eq) - V_nom|` grows as the gains fall, with the sign of `sum I_inj`.
    pub mean_diverges_with_injection_sign: bool,
}

fn non_increasing(xs: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = xs.collect();
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15)
}

/// Droop equilibria with all gains multiplied by each scale.
pub fn droop_limits(
    topology: &GridTopology,
    params: &ConverterParams,
    injections: &DVector<f64>,
    scales: &[f64],
) -> Result<LimitsTable> {
    if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::validation("gain scales must be positive"));
    }
    let mut sorted = scales.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let vnom = params.nominal_voltage();
    let sum_i = injections.sum();
    let mut rows = Vec::with_capacity(sorted.len());
    for &scale in &sorted {
        let p = params.with_scaled_gains(scale)?;
        let sys = assemble_droop_loop(topology, &p, injections)?;
        let eq = droop_equilibrium(&sys)?;
        let k = p.droop_gain();
        let share = k * (-sum_i / k.sum());
        let mean = eq.v_eq.mean();
        rows.push(LimitRow {
            scale,
            voltage_error: eq.v_eq.iter().map(|v| (v - vnom).abs()).fold(0.0, f64::max),
            local_balance_error: (&eq.u_eq + injections).amax(),
            sharing_error: (&eq.u_eq - share).amax(),
            spread: eq.v_eq.add_scalar(-mean).norm(),
            mean_offset: mean - vnom,
            v_eq: eq.v_eq,
            u_eq: eq.u_eq,
        });
    }
    let voltage_approaches_nominal = non_increasing(rows.iter().rev().map(|r| r.voltage_error));
    let current_approaches_injection =
        non_increasing(rows.iter().rev().map(|r| r.local_balance_error));
    let current_approaches_sharing = non_increasing(rows.iter().map(|r| r.sharing_error));
    let spread_grows = rows.windows(2).all(|w| w[1].spread >= w[0].spread);
    let mean_diverges_with_injection_sign = sum_i != 0.0
        && rows
            .windows(2)
            .all(|w| w[1].mean_offset.abs() >= w[0].mean_offset.abs())
        && rows
            .last()
            .is_some_and(|r| r.mean_offset.signum() == sum_i.signum());
    Ok(LimitsTable {
        rows,
        voltage_approaches_nominal,
        current_approaches_injection,
        current_approaches_sharing,
        spread_grows,
        mean_diverges_with_injection_sign,
    })
}

/// Outcome of a simulate-and-classify run.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayClassification {
    pub delay: f64,
    pub stable: bool,
    /// Integrator stopped on the `10 V_nom` cutoff.
    pub blew_up: bool,
    /// `max |V - V_eq|` over the first tenth after the step.
    pub head: f64,
    /// `max |V - V_eq|` over the last tenth of the horizon.
    pub tail: f64,
}

/// Diverging if the tail deviation exceeds [`GROWTH_RATIO`] times the head
/// deviation, or the trajectory hit the voltage cutoff.
pub fn classify_trajectory(
    trajectory: &Trajectory,
    v_eq: &DVector<f64>,
    step_time: f64,
    horizon: f64,
) -> (bool, f64, f64) {
    let span = horizon - step_time;
    let head_end = step_time + 0.1 * span;
    let tail_start = horizon - 0.1 * span;
    let mut head: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for (t, v) in trajectory.times.iter().zip(&trajectory.v) {
        let dev = (v - v_eq).amax();
        if *t >= step_time && *t <= head_end {
            head = head.max(dev);
        }
        if *t >= tail_start {
            tail = tail.max(dev);
        }
    }
    let diverged = trajectory.diverged || tail.is_nan() || tail > GROWTH_RATIO * head;
    (diverged, head, tail)
}

pub fn classify_delay(
    system: &ClosedLoopSystem,
    controller: &DistributedController,
    scenario: &Scenario,
    delay: f64,
) -> Result<DelayClassification> {
    let sc = scenario.with_delay(delay);
    let ctrl = Controller::Distributed(controller.with_delay(delay)?);
    let traj = run_scenario(system, &ctrl, &sc)?;
    let post = system.with_injections(&sc.post_injections)?;
    let eq = distributed_equilibrium(&post)?;
    let (diverged, head, tail) = classify_trajectory(&traj, &eq.v_eq, sc.step_time, sc.horizon);
    Ok(DelayClassification {
        delay,
        stable: !diverged,
        blew_up: traj.diverged,
        head,
        tail,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySearch {
    /// Midpoint of the final bracket.
    pub critical_delay: f64,
    pub stable_below: f64,
    pub unstable_above: f64,
    pub evaluations: Vec<DelayClassification>,
}

/// Bisection on the delay between a stable `lo` and an unstable `hi`.
pub fn critical_delay_search(
    system: &ClosedLoopSystem,
    controller: &DistributedController,
    scenario: &Scenario,
    range: (f64, f64),
    horizon: f64,
) -> Result<DelaySearch> {
    let (mut lo, mut hi) = range;
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::validation(format!(
            "invalid delay range [{lo}, {hi}]"
        )));
    }
    let scenario = scenario.with_horizon(horizon);
    let mut evaluations = Vec::new();
    let at_lo = classify_delay(system, controller, &scenario, lo)?;
    let at_hi = classify_delay(system, controller, &scenario, hi)?;
    let (lo_ok, hi_ok) = (at_lo.stable, at_hi.stable);
    evaluations.push(at_lo);
    evaluations.push(at_hi);
    if !lo_ok || hi_ok {
        return Err(Error::SearchRange {
            lo,
            hi,
            detail: format!(
                "lower end {} and upper end {}",
                if lo_ok { "stable" } else { "unstable" },
                if hi_ok { "stable" } else { "unstable" }
            ),
        });
    }
    while hi - lo > DELAY_BRACKET {
        let mid = 0.5 * (lo + hi);
        let c = classify_delay(system, controller, &scenario, mid)?;
        if c.stable {
            lo = mid;
        } else {
            hi = mid;
        }
        evaluations.push(c);
    }
    Ok(DelaySearch {
        critical_delay: 0.5 * (lo + hi),
        stable_below: lo,
        unstable_above: hi,
        evaluations,
    })
}

/// Voltages count as settled within this fraction of their own step size.
pub const VOLTAGE_SETTLE_FRACTION: f64 = 0.01;
/// Controlled currents count as settled within this band of their final value, in amperes.
pub const CURRENT_SETTLE_BAND: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SettleTimes {
    /// Seconds after the step until every `|V_i - V_eq,i|` stays below its tolerance.
    pub voltages: Option<f64>,
    /// Seconds after the step until every `|u_i - u_eq,i|` stays below [`CURRENT_SETTLE_BAND`].
    pub currents: Option<f64>,
    pub voltage_tolerance: DVector<f64>,
}

/// Settling of a step response towards the post-step equilibrium.
///
/// Node `i` uses `1% |V_post,i - V_pre,i|`. A node whose voltage does not
/// move between the two equilibria (the regulator of the distributed loop)
/// has no step of its own and uses 1% of the largest nodal step instead.
pub fn settle_times(
    trajectory: &Trajectory,
    pre: &EquilibriumReport,
    post: &EquilibriumReport,
    step_time: f64,
    nominal_voltage: f64,
) -> SettleTimes {
    let steps = (&post.v_eq - &pre.v_eq).abs();
    let largest = steps.max();
    let tol = steps.map(|s| {
        let s = if s > 1e-9 * nominal_voltage {
            s
        } else {
            largest
        };
        (VOLTAGE_SETTLE_FRACTION * s).max(f64::MIN_POSITIVE)
    });
    let after = |k: usize| trajectory.times[k] >= step_time;
    let voltages = trajectory.settle_time(1.0, |k| {
        if !after(k) {
            return 0.0;
        }
        (0..trajectory.nodes())
            .map(|i| (trajectory.v[k][i] - post.v_eq[i]).abs() / tol[i])
            .fold(0.0, f64::max)
    });
    let currents = trajectory.settle_time(CURRENT_SETTLE_BAND, |k| {
        if !after(k) {
            return 0.0;
        }
        (&trajectory.u[k] - &post.u_eq).amax()
    });
    let since = |t: Option<f64>| t.map(|t| (t - step_time).max(0.0));
    SettleTimes {
        voltages: if trajectory.diverged {
            None
        } else {
            since(voltages)
        },
        currents: if trajectory.diverged {
            None
        } else {
            since(currents)
        },
        voltage_tolerance: tol,
    }
}
