//! Control laws evaluated node by node.
//!
//! These are the pointwise counterparts of the assembled matrices in
//! [`crate::model`]; the simulator uses the consensus term from here for the
//! delayed communication coupling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{build_laplacian, GridTopology};
use crate::model::{ControllerKind, ConverterParams, REGULATOR_GAIN};

/// Decentralized proportional droop law `u_i = K^P_i (V_nom - V_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DroopController {
    droop_gain: DVector<f64>,
    nominal_voltage: f64,
}

impl DroopController {
    pub fn new(droop_gain: DVector<f64>, nominal_voltage: f64) -> Result<Self> {
        if droop_gain.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::validation("droop gains must be positive"));
        }
        Ok(DroopController {
            droop_gain,
            nominal_voltage,
        })
    }

    pub fn from_params(params: &ConverterParams) -> Self {
        DroopController {
            droop_gain: params.droop_gain().clone(),
            nominal_voltage: params.nominal_voltage(),
        }
    }

    pub fn output(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.droop_gain.len() {
            return Err(Error::validation(format!(
                "{} voltages for {} converters",
                v.len(),
                self.droop_gain.len()
            )));
        }
        Ok(self
            .droop_gain
            .zip_map(v, |k, v| k * (self.nominal_voltage - v)))
    }
}

/// Distributed averaging controller with an optional uniform communication delay.
#[derive(Debug, Clone)]
pub struct DistributedController {
    droop_gain: DVector<f64>,
    regulator_gain: DVector<f64>,
    gamma: f64,
    comm: GridTopology,
    nominal_voltage: f64,
    delay: f64,
}

impl DistributedController {
    pub fn new(
        params: &ConverterParams,
        comm: &GridTopology,
        gamma: f64,
        delay: f64,
    ) -> Result<Self> {
        if comm.node_count() != params.len() {
            return Err(Error::validation(format!(
                "communication graph has {} nodes for {} converters",
                comm.node_count(),
                params.len()
            )));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::validation(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(Error::validation(format!(
                "delay must be non-negative, got {delay}"
            )));
        }
        params.regulator_index()?;
        Ok(DistributedController {
            droop_gain: params.droop_gain().clone(),
            regulator_gain: params.regulator_matrix().diagonal(),
            gamma,
            comm: comm.clone(),
            nominal_voltage: params.nominal_voltage(),
            delay,
        })
    }

    pub fn with_delay(&self, delay: f64) -> Result<Self> {
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(Error::validation(format!(
                "delay must be non-negative, got {delay}"
            )));
        }
        Ok(DistributedController {
            delay,
            ..self.clone()
        })
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn nodes(&self) -> usize {
        self.droop_gain.len()
    }

    pub fn communication(&self) -> &GridTopology {
        &self.comm
    }

    /// `gamma * sum_j c_ij (e_i - e_j)` for the reference offsets `e = V_hat - V`.
    pub fn consensus_into(&self, e: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for edge in self.comm.edges() {
            let flow = self.gamma * edge.weight * (e[edge.a] - e[edge.b]);
            out[edge.a] += flow;
            out[edge.b] -= flow;
        }
    }

    pub fn consensus(&self, e: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(e.len());
        self.consensus_into(e.as_slice(), out.as_mut_slice());
        out
    }

    /// Controlled current and reference derivative.
    ///
    /// The regulator term and `u` use current-time values; only the consensus
    /// term reads the delayed offsets `(V_hat - V)(t - tau)`.
    pub fn rhs(
        &self,
        v_now: &DVector<f64>,
        v_hat_now: &DVector<f64>,
        v_delayed: &DVector<f64>,
        v_hat_delayed: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let n = self.nodes();
        for (name, v) in [
            ("V", v_now),
            ("V_hat", v_hat_now),
            ("delayed V", v_delayed),
            ("delayed V_hat", v_hat_delayed),
        ] {
            if v.len() != n {
                return Err(Error::validation(format!(
                    "{name} has length {}, expected {n}",
                    v.len()
                )));
            }
        }
        let u = self.droop_gain.component_mul(&(v_hat_now - v_now));
        let consensus = self.consensus(&(v_hat_delayed - v_delayed));
        let v_hat_dot = DVector::from_fn(n, |i, _| {
            self.regulator_gain[i] * (self.nominal_voltage - v_now[i]) - consensus[i]
        });
        Ok((u, v_hat_dot))
    }

    /// The part of the closed-loop matrix carried by the communication links,
    /// `[[-g L_C, g L_C], [0, 0]]` in `(V_hat, V)` layout.
    pub fn communication_block(&self) -> DMatrix<f64> {
        let n = self.nodes();
        let lc = build_laplacian(&self.comm).into_matrix() * self.gamma;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&(-&lc));
        m.view_mut((0, n), (n, n)).copy_from(&lc);
        m
    }

    pub fn regulator_gain(&self) -> f64 {
        REGULATOR_GAIN
    }
}

#[derive(Debug, Clone)]
pub enum Controller {
    Droop(DroopController),
    Distributed(DistributedController),
}

impl Controller {
    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::Droop(_) => ControllerKind::Droop,
            Controller::Distributed(_) => ControllerKind::Distributed,
        }
    }

    pub fn delay(&self) -> f64 {
        match self {
            Controller::Droop(_) => 0.0,
            Controller::Distributed(c) => c.delay,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::assemble_distributed_loop;

    fn ring_setup() -> (GridTopology, ConverterParams) {
        let t = GridTopology::from_resistances(
            4,
            [
                (0, 1, 0.0154),
                (0, 2, 0.0015),
                (1, 3, 0.0015),
                (2, 3, 0.0154),
            ],
        )
        .unwrap();
        (
            t,
            ConverterParams::uniform(4, 123.79e-6, 10.0, 1e5).unwrap(),
        )
    }

    #[test]
    fn droop_output_examples() {
        let c = DroopController::new(DVector::from_vec(vec![2.0, 3.0]), 100.0).unwrap();
        let u = c.output(&DVector::from_vec(vec![99.0, 101.0])).unwrap();
        assert_eq!(u, DVector::from_vec(vec![2.0, -3.0]));
        let u = c.output(&DVector::from_vec(vec![90.0, 95.0])).unwrap();
        assert!(u.iter().all(|x| *x > 0.0));
        assert!(c.output(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn distributed_fixed_point() {
        let (t, p) = ring_setup();
        let c = DistributedController::new(&p, &t, 0.005, 0.1).unwrap();
        let v = DVector::from_element(4, 1e5);
        let (u, vdot) = c.rhs(&v, &v, &v, &v).unwrap();
        assert_eq!(u, DVector::zeros(4));
        assert_eq!(vdot, DVector::zeros(4));
    }

    #[test]
    fn undelayed_rhs_matches_assembled_matrix() {
        let (t, p) = ring_setup();
        let i = DVector::from_vec(vec![300.0, 200.0, -300.0, -400.0]);
        let sys = assemble_distributed_loop(&t, &t, &p, 0.005, &i).unwrap();
        let c = DistributedController::new(&p, &t, 0.005, 0.0).unwrap();
        let v_hat = DVector::from_vec(vec![1e5 + 3.0, 1e5 - 2.0, 1e5 + 0.5, 1e5 + 7.0]);
        let v = DVector::from_vec(vec![1e5 - 1.0, 1e5 + 4.0, 1e5 - 0.25, 1e5 + 2.0]);
        let (u, vhat_dot) = c.rhs(&v, &v_hat, &v, &v_hat).unwrap();
        let x = DVector::from_iterator(8, v_hat.iter().chain(v.iter()).copied());
        let full = sys.rhs(&x);
        let scale = full.rows(0, 4).amax().max(1.0);
        assert!((full.rows(0, 4) - &vhat_dot).amax() < 1e-12 * scale * 1e3);
        // the voltage rows use the same u
        let cinv = p.inverse_capacitance();
        let lv = sys.line_laplacian().matrix() * &v;
        let vdot = cinv * (-lv + &i + &u);
        let vscale = full.rows(4, 4).amax();
        assert!((full.rows(4, 4) - vdot).amax() < 1e-9 * vscale);
    }

    #[test]
    fn consensus_vanishes_on_constant_offset() {
        let (t, p) = ring_setup();
        let c = DistributedController::new(&p, &t, 0.005, 0.0).unwrap();
        let out = c.consensus(&DVector::from_element(4, 12.5));
        assert_eq!(out, DVector::zeros(4));
    }

    #[test]
    fn communication_block_matches_laplacian() {
        let (t, p) = ring_setup();
        let c = DistributedController::new(&p, &t, 0.005, 0.0).unwrap();
        let block = c.communication_block();
        let e = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let x = DVector::from_iterator(8, e.iter().copied().chain(std::iter::repeat_n(0.0, 4)));
        let d = block * x;
        let expect = -c.consensus(&e);
        assert!((d.rows(0, 4) - expect).amax() < 1e-9);
        assert_eq!(d.rows(4, 4).amax(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (t, p) = ring_setup();
        assert!(DistributedController::new(&p, &t, -1.0, 0.0).is_err());
        assert!(DistributedController::new(&p, &t, 0.1, -0.5).is_err());
        let c = DistributedController::new(&p, &t, 0.1, 0.0).unwrap();
        let v = DVector::zeros(4);
        assert!(c.rhs(&v, &v, &DVector::zeros(3), &v).is_err());
    }
}
