//! Converter parameters and closed-loop LTI assembly.
//!
//! Each converter is a capacitor node: `C_i dV_i/dt = -sum_j (V_i - V_j)/R_ij + I_inj_i + u_i`.
//! Physical capacitances are stored; the diagonal of inverse capacitances is
//! formed at assembly time.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{build_laplacian, GridTopology, LaplacianMatrix};

/// Integral gain on the regulator node's voltage error, in 1/s.
pub const REGULATOR_GAIN: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConverterParams {
    capacitance: DVector<f64>,
    droop_gain: DVector<f64>,
    regulator: Vec<bool>,
    nominal_voltage: f64,
}

impl ConverterParams {
    pub fn new(
        capacitance: Vec<f64>,
        droop_gain: Vec<f64>,
        regulator: Vec<bool>,
        nominal_voltage: f64,
    ) -> Result<Self> {
        let n = capacitance.len();
        if n == 0 {
            return Err(Error::validation("no converters"));
        }
        if droop_gain.len() != n || regulator.len() != n {
            return Err(Error::validation(format!(
                "parameter length mismatch: {n} capacitances, {} gains, {} regulator flags",
                droop_gain.len(),
                regulator.len()
            )));
        }
        for (i, &c) in capacitance.iter().enumerate() {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::validation(format!(
                    "converter {}: capacitance must be positive, got {c}",
                    i + 1
                )));
            }
        }
        for (i, &k) in droop_gain.iter().enumerate() {
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::validation(format!(
                    "converter {}: droop gain must be positive, got {k}",
                    i + 1
                )));
            }
        }
        if !(nominal_voltage.is_finite() && nominal_voltage > 0.0) {
            return Err(Error::validation(format!(
                "nominal voltage must be positive, got {nominal_voltage}"
            )));
        }
        Ok(ConverterParams {
            capacitance: DVector::from_vec(capacitance),
            droop_gain: DVector::from_vec(droop_gain),
            regulator,
            nominal_voltage,
        })
    }

    /// Identical converters, node 1 acting as voltage regulator.
    pub fn uniform(
        n: usize,
        capacitance: f64,
        droop_gain: f64,
        nominal_voltage: f64,
    ) -> Result<Self> {
        let mut regulator = vec![false; n];
        if let Some(first) = regulator.first_mut() {
            *first = true;
        }
        Self::new(
            vec![capacitance; n],
            vec![droop_gain; n],
            regulator,
            nominal_voltage,
        )
    }

    pub fn len(&self) -> usize {
        self.capacitance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capacitance.is_empty()
    }

    pub fn capacitance(&self) -> &DVector<f64> {
        &self.capacitance
    }

    pub fn droop_gain(&self) -> &DVector<f64> {
        &self.droop_gain
    }

    pub fn regulator_flags(&self) -> &[bool] {
        &self.regulator
    }

    pub fn nominal_voltage(&self) -> f64 {
        self.nominal_voltage
    }

    /// Index of the single regulator node, if exactly one is flagged.
    pub fn regulator_index(&self) -> Result<usize> {
        let flagged: Vec<usize> = self
            .regulator
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect();
        match flagged.as_slice() {
            [i] => Ok(*i),
            [] => Err(Error::validation(
                "no converter is flagged as voltage regulator",
            )),
            many => Err(Error::validation(format!(
                "exactly one regulator expected, found {} (nodes {:?})",
                many.len(),
                many.iter().map(|i| i + 1).collect::<Vec<_>>()
            ))),
        }
    }

    pub fn with_regulator(mut self, index: usize) -> Result<Self> {
        if index >= self.len() {
            return Err(Error::validation(format!(
                "regulator node {} out of range",
                index + 1
            )));
        }
        self.regulator.iter_mut().for_each(|f| *f = false);
        self.regulator[index] = true;
        Ok(self)
    }

    /// Every droop gain multiplied by `scale`.
    pub fn with_scaled_gains(&self, scale: f64) -> Result<Self> {
        Self::new(
            self.capacitance.as_slice().to_vec(),
            self.droop_gain.iter().map(|k| k * scale).collect(),
            self.regulator.clone(),
            self.nominal_voltage,
        )
    }

    pub fn with_droop_gains(&self, gains: Vec<f64>) -> Result<Self> {
        Self::new(
            self.capacitance.as_slice().to_vec(),
            gains,
            self.regulator.clone(),
            self.nominal_voltage,
        )
    }

    /// `diag(1/C_i)`.
    pub fn inverse_capacitance(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.capacitance.map(|c| 1.0 / c))
    }

    pub fn droop_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.droop_gain)
    }

    /// `diag(K^V_i)` with the regulator entry set to [`REGULATOR_GAIN`].
    pub fn regulator_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.len(),
            self.regulator
                .iter()
                .map(|&f| if f { REGULATOR_GAIN } else { 0.0 }),
        ))
    }
}

/// Voltages and, for the distributed controller, the internal references.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub v: DVector<f64>,
    pub v_hat: Option<DVector<f64>>,
}

impl NetworkState {
    pub fn droop(v: DVector<f64>) -> Self {
        NetworkState { v, v_hat: None }
    }

    pub fn distributed(v_hat: DVector<f64>, v: DVector<f64>) -> Self {
        NetworkState {
            v,
            v_hat: Some(v_hat),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|x| x.is_finite())
            && self
                .v_hat
                .as_ref()
                .is_none_or(|h| h.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    Droop,
    Distributed,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Droop => "droop",
            ControllerKind::Distributed => "distributed",
        }
    }
}

/// Ordering of the closed-loop state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateLayout {
    /// `x = V`
    Droop { n: usize },
    /// `x = (V_hat, V)`
    Distributed { n: usize },
}

impl StateLayout {
    pub fn nodes(self) -> usize {
        match self {
            StateLayout::Droop { n } | StateLayout::Distributed { n } => n,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            StateLayout::Droop { n } => n,
            StateLayout::Distributed { n } => 2 * n,
        }
    }

    pub fn kind(self) -> ControllerKind {
        match self {
            StateLayout::Droop { .. } => ControllerKind::Droop,
            StateLayout::Distributed { .. } => ControllerKind::Distributed,
        }
    }

    pub fn voltage_range(self) -> std::ops::Range<usize> {
        match self {
            StateLayout::Droop { n } => 0..n,
            StateLayout::Distributed { n } => n..2 * n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CommunicationLoop {
    pub topology: GridTopology,
    pub laplacian: LaplacianMatrix,
    pub gamma: f64,
}

/// Assembled `dx/dt = A x + b` for one controller.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    layout: StateLayout,
    state_matrix: DMatrix<f64>,
    forcing: DVector<f64>,
    injections: DVector<f64>,
    params: ConverterParams,
    lines: GridTopology,
    line_laplacian: LaplacianMatrix,
    comm: Option<CommunicationLoop>,
}

fn check_dims(
    topology: &GridTopology,
    params: &ConverterParams,
    injections: &DVector<f64>,
) -> Result<()> {
    let n = topology.node_count();
    if params.len() != n {
        return Err(Error::validation(format!(
            "{} converters given for a {n}-node grid",
            params.len()
        )));
    }
    if injections.len() != n {
        return Err(Error::validation(format!(
            "{} injections given for a {n}-node grid",
            injections.len()
        )));
    }
    if injections.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("injections must be finite"));
    }
    Ok(())
}

/// Open-loop network: `dV/dt = -C L_R V + C I_inj + C u`, returning `(-C L_R, C I_inj)`.
pub fn assemble_open_loop(
    topology: &GridTopology,
    params: &ConverterParams,
    injections: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_dims(topology, params, injections)?;
    let cinv = params.inverse_capacitance();
    let l = build_laplacian(topology);
    Ok((-(&cinv * l.matrix()), cinv * injections))
}

pub fn assemble_droop_loop(
    topology: &GridTopology,
    params: &ConverterParams,
    injections: &DVector<f64>,
) -> Result<ClosedLoopSystem> {
    check_dims(topology, params, injections)?;
    let n = topology.node_count();
    let cinv = params.inverse_capacitance();
    let line_laplacian = build_laplacian(topology);
    let a = -(&cinv * (line_laplacian.matrix() + params.droop_matrix()));
    let mut sys = ClosedLoopSystem {
        layout: StateLayout::Droop { n },
        state_matrix: a,
        forcing: DVector::zeros(n),
        injections: injections.clone(),
        params: params.clone(),
        lines: topology.clone(),
        line_laplacian,
        comm: None,
    };
    sys.forcing = sys.forcing_for(injections);
    Ok(sys)
}

/// Distributed averaging loop with state `(V_hat, V)`:
///
/// ```text
/// A = [ -g L_C      g L_C - K^V    ]     b = [ K^V V_nom 1 ]
///     [ C K^P   -C (L_R + K^P)     ]         [ C I_inj     ]
/// ```
pub fn assemble_distributed_loop(
    lines: &GridTopology,
    comm: &GridTopology,
    params: &ConverterParams,
    gamma: f64,
    injections: &DVector<f64>,
) -> Result<ClosedLoopSystem> {
    check_dims(lines, params, injections)?;
    if comm.node_count() != lines.node_count() {
        return Err(Error::validation(format!(
            "communication graph has {} nodes, line graph {}",
            comm.node_count(),
            lines.node_count()
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::validation(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    params.regulator_index()?;

    let n = lines.node_count();
    let cinv = params.inverse_capacitance();
    let kp = params.droop_matrix();
    let kv = params.regulator_matrix();
    let line_laplacian = build_laplacian(lines);
    let comm_laplacian = build_laplacian(comm);
    let lc = comm_laplacian.matrix();

    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&(-gamma * lc));
    a.view_mut((0, n), (n, n)).copy_from(&(gamma * lc - &kv));
    a.view_mut((n, 0), (n, n)).copy_from(&(&cinv * &kp));
    a.view_mut((n, n), (n, n))
        .copy_from(&(-(&cinv * (line_laplacian.matrix() + &kp))));

    let mut sys = ClosedLoopSystem {
        layout: StateLayout::Distributed { n },
        state_matrix: a,
        forcing: DVector::zeros(2 * n),
        injections: injections.clone(),
        params: params.clone(),
        lines: lines.clone(),
        line_laplacian,
        comm: Some(CommunicationLoop {
            topology: comm.clone(),
            laplacian: comm_laplacian,
            gamma,
        }),
    };
    sys.forcing = sys.forcing_for(injections);
    Ok(sys)
}

/// `u` for the given controller: droop `K^P (V_nom 1 - V)`, distributed `K^P (V_hat - V)`.
pub fn controlled_current(
    params: &ConverterParams,
    state: &NetworkState,
    kind: ControllerKind,
) -> Result<DVector<f64>> {
    let n = params.len();
    if state.v.len() != n {
        return Err(Error::validation(format!(
            "state has {} voltages for {n} converters",
            state.v.len()
        )));
    }
    match kind {
        ControllerKind::Droop => Ok(params
            .droop_gain()
            .zip_map(&state.v, |k, v| k * (params.nominal_voltage() - v))),
        ControllerKind::Distributed => {
            let v_hat = state
                .v_hat
                .as_ref()
                .ok_or_else(|| Error::validation("distributed controller needs V_hat"))?;
            if v_hat.len() != n {
                return Err(Error::validation("V_hat length mismatch"));
            }
            Ok(params.droop_gain().component_mul(&(v_hat - &state.v)))
        }
    }
}

impl ClosedLoopSystem {
    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn kind(&self) -> ControllerKind {
        self.layout.kind()
    }

    pub fn nodes(&self) -> usize {
        self.layout.nodes()
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn state_matrix(&self) -> &DMatrix<f64> {
        &self.state_matrix
    }

    pub fn forcing(&self) -> &DVector<f64> {
        &self.forcing
    }

    pub fn injections(&self) -> &DVector<f64> {
        &self.injections
    }

    pub fn params(&self) -> &ConverterParams {
        &self.params
    }

    pub fn nominal_voltage(&self) -> f64 {
        self.params.nominal_voltage
    }

    pub fn lines(&self) -> &GridTopology {
        &self.lines
    }

    pub fn line_laplacian(&self) -> &LaplacianMatrix {
        &self.line_laplacian
    }

    pub fn communication(&self) -> Option<&CommunicationLoop> {
        self.comm.as_ref()
    }

    /// Same system with a different injection vector.
    pub fn with_injections(&self, injections: &DVector<f64>) -> Result<Self> {
        check_dims(&self.lines, &self.params, injections)?;
        let mut sys = self.clone();
        sys.forcing = sys.forcing_for(injections);
        sys.injections = injections.clone();
        Ok(sys)
    }

    fn forcing_for(&self, injections: &DVector<f64>) -> DVector<f64> {
        let n = self.nodes();
        let ci = self.params.capacitance.zip_map(injections, |c, i| i / c);
        match self.layout {
            StateLayout::Droop { .. } => {
                let ck = self
                    .params
                    .capacitance
                    .zip_map(&self.params.droop_gain, |c, k| {
                        k / c * self.params.nominal_voltage
                    });
                ck + ci
            }
            StateLayout::Distributed { .. } => {
                let mut b = DVector::zeros(2 * n);
                let kv = self.params.regulator_matrix().diagonal() * self.params.nominal_voltage;
                b.rows_mut(0, n).copy_from(&kv);
                b.rows_mut(n, n).copy_from(&ci);
                b
            }
        }
    }

    /// Forcing of the dynamics written for the deviation `x - V_nom 1`.
    ///
    /// `A V_nom 1` cancels the nominal part of `b` exactly (Laplacian rows
    /// sum to zero), so this is `C I_inj` in the voltage rows and zero
    /// elsewhere. Integrating and solving in deviation coordinates keeps
    /// sub-millivolt resolution at 100 kV.
    pub fn deviation_forcing(&self) -> DVector<f64> {
        self.deviation_forcing_for(&self.injections)
    }

    pub(crate) fn deviation_forcing_for(&self, injections: &DVector<f64>) -> DVector<f64> {
        let ci = self.params.capacitance.zip_map(injections, |c, i| i / c);
        let mut f = DVector::zeros(self.dim());
        f.rows_mut(self.layout.voltage_range().start, self.nodes())
            .copy_from(&ci);
        f
    }

    /// Voltage slice of a full state vector.
    pub fn voltages(&self, x: &DVector<f64>) -> DVector<f64> {
        x.rows(self.layout.voltage_range().start, self.nodes())
            .into_owned()
    }

    /// Reference slice `V_hat` (distributed layout only).
    pub fn references(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        match self.layout {
            StateLayout::Droop { .. } => None,
            StateLayout::Distributed { n } => Some(x.rows(0, n).into_owned()),
        }
    }

    pub fn network_state(&self, x: &DVector<f64>) -> NetworkState {
        NetworkState {
            v: self.voltages(x),
            v_hat: self.references(x),
        }
    }

    /// Controlled currents for a full (absolute) state vector.
    pub fn controlled_current(&self, x: &DVector<f64>) -> DVector<f64> {
        let kp = self.params.droop_gain();
        let v = self.voltages(x);
        match self.layout {
            StateLayout::Droop { .. } => kp.zip_map(&v, |k, v| k * (self.nominal_voltage() - v)),
            StateLayout::Distributed { n } => kp.component_mul(&(x.rows(0, n) - v)),
        }
    }

    /// Controlled currents from a deviation state `x - V_nom 1`.
    pub(crate) fn controlled_current_dev(&self, z: &[f64], out: &mut [f64]) {
        let kp = self.params.droop_gain();
        match self.layout {
            StateLayout::Droop { n } => {
                for i in 0..n {
                    out[i] = -kp[i] * z[i];
                }
            }
            StateLayout::Distributed { n } => {
                for i in 0..n {
                    out[i] = kp[i] * (z[i] - z[n + i]);
                }
            }
        }
    }

    /// `A x + b`.
    pub fn rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.state_matrix * x + &self.forcing
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> (GridTopology, ConverterParams) {
        let t = GridTopology::from_resistances(2, [(0, 1, 1.0)]).unwrap();
        let p = ConverterParams::uniform(2, 1.0, 1.0, 100.0).unwrap();
        (t, p)
    }

    #[test]
    fn single_capacitor_integrates_injection() {
        let t = GridTopology::new(1, []).unwrap();
        let p = ConverterParams::uniform(1, 1.0, 1.0, 1.0).unwrap();
        let (a, b) = assemble_open_loop(&t, &p, &DVector::from_element(1, 1.0)).unwrap();
        let vdot = a * DVector::from_element(1, 42.0) + b;
        assert_eq!(vdot[0], 1.0);
    }

    #[test]
    fn open_loop_null_space() {
        let t = GridTopology::from_resistances(3, [(0, 1, 0.5), (1, 2, 2.0)]).unwrap();
        let p = ConverterParams::new(
            vec![1.0, 2.0, 3.0],
            vec![1.0; 3],
            vec![true, false, false],
            10.0,
        )
        .unwrap();
        let (a, b) = assemble_open_loop(&t, &p, &DVector::zeros(3)).unwrap();
        let vdot = a * DVector::from_element(3, 7.5) + b;
        assert!(vdot.amax() < 1e-12);
    }

    #[test]
    fn open_loop_ring_diagonal() {
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
        let p = ConverterParams::uniform(4, 123.79e-6, 10.0, 1e5).unwrap();
        let (a, _) = assemble_open_loop(&t, &p, &DVector::zeros(4)).unwrap();
        let expected = -(1.0 / 0.0154 + 1.0 / 0.0015) / 123.79e-6;
        for i in 0..4 {
            assert!((a[(i, i)] - expected).abs() < 1e-6 * expected.abs());
            assert!((a[(i, i)] + 5.91e6).abs() < 0.01e6);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (t, p) = two_node();
        assert!(matches!(
            assemble_open_loop(&t, &p, &DVector::zeros(3)),
            Err(Error::Validation(_))
        ));
        let p3 = ConverterParams::uniform(3, 1.0, 1.0, 1.0).unwrap();
        assert!(assemble_droop_loop(&t, &p3, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn zero_droop_gain_is_rejected() {
        assert!(matches!(
            ConverterParams::new(vec![1.0, 1.0], vec![1.0, 0.0], vec![true, false], 1.0),
            Err(Error::Validation(_))
        ));
        assert!(ConverterParams::new(vec![0.0], vec![1.0], vec![true], 1.0).is_err());
        assert!(ConverterParams::new(vec![1.0], vec![1.0], vec![true], -1.0).is_err());
    }

    #[test]
    fn droop_loop_matrices() {
        let (t, p) = two_node();
        let sys = assemble_droop_loop(&t, &p, &DVector::from_vec(vec![1.0, -1.0])).unwrap();
        assert_eq!(
            sys.state_matrix(),
            &DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0])
        );
        assert_eq!(sys.forcing(), &DVector::from_vec(vec![101.0, 99.0]));
        // equilibrium with zero injection sits at nominal
        let sys0 = sys.with_injections(&DVector::zeros(2)).unwrap();
        let x = sys0
            .state_matrix()
            .clone()
            .lu()
            .solve(&(-sys0.forcing()))
            .unwrap();
        assert!((x - DVector::from_element(2, 100.0)).amax() < 1e-12);
    }

    #[test]
    fn droop_two_node_equilibrium_by_hand() {
        // -2 V1 + V2 + 101 = 0, V1 - 2 V2 + 99 = 0
        // => V1 = (2*101 + 99)/3, V2 = (101 + 2*99)/3
        let (t, p) = two_node();
        let sys = assemble_droop_loop(&t, &p, &DVector::from_vec(vec![1.0, -1.0])).unwrap();
        let x = sys
            .state_matrix()
            .clone()
            .lu()
            .solve(&(-sys.forcing()))
            .unwrap();
        assert!((x[0] - 301.0 / 3.0).abs() < 1e-12);
        assert!((x[1] - 299.0 / 3.0).abs() < 1e-12);
        assert!((x[0] - 100.3333).abs() < 1e-4);
    }

    #[test]
    fn distributed_loop_shape_and_errors() {
        let (t, p) = two_node();
        let i = DVector::from_vec(vec![1.0, -1.0]);
        let sys = assemble_distributed_loop(&t, &t, &p, 0.1, &i).unwrap();
        assert_eq!(sys.state_matrix().shape(), (4, 4));
        assert_eq!(sys.forcing().len(), 4);
        assert_eq!(sys.forcing()[0], 100.0 * REGULATOR_GAIN);
        assert_eq!(sys.forcing()[1], 0.0);
        assert!(matches!(
            assemble_distributed_loop(&t, &t, &p, 0.0, &i),
            Err(Error::Validation(_))
        ));
        let no_reg =
            ConverterParams::new(vec![1.0; 2], vec![1.0; 2], vec![false; 2], 100.0).unwrap();
        assert!(assemble_distributed_loop(&t, &t, &no_reg, 0.1, &i).is_err());
        let two_reg =
            ConverterParams::new(vec![1.0; 2], vec![1.0; 2], vec![true; 2], 100.0).unwrap();
        assert!(assemble_distributed_loop(&t, &t, &two_reg, 0.1, &i).is_err());
    }

    #[test]
    fn deviation_forcing_matches_shifted_forcing() {
        let (t, p) = two_node();
        let i = DVector::from_vec(vec![3.0, -1.0]);
        for sys in [
            assemble_droop_loop(&t, &p, &i).unwrap(),
            assemble_distributed_loop(&t, &t, &p, 0.1, &i).unwrap(),
        ] {
            let nominal = DVector::from_element(sys.dim(), 100.0);
            let shifted = sys.forcing() + sys.state_matrix() * nominal;
            assert!((shifted - sys.deviation_forcing()).amax() < 1e-12);
        }
    }

    #[test]
    fn controlled_current_laws() {
        let p = ConverterParams::uniform(3, 1.0, 10.0, 100.0).unwrap();
        let v = DVector::from_element(3, 100.0);
        let u =
            controlled_current(&p, &NetworkState::droop(v.clone()), ControllerKind::Droop).unwrap();
        assert_eq!(u, DVector::zeros(3));
        let u = controlled_current(
            &p,
            &NetworkState::distributed(v.clone(), v.clone()),
            ControllerKind::Distributed,
        )
        .unwrap();
        assert_eq!(u, DVector::zeros(3));
        let v_hat = v.add_scalar(5.0);
        let u = controlled_current(
            &p,
            &NetworkState::distributed(v_hat, v.clone()),
            ControllerKind::Distributed,
        )
        .unwrap();
        assert_eq!(u, DVector::from_element(3, 50.0));
        assert!(
            controlled_current(&p, &NetworkState::droop(v), ControllerKind::Distributed).is_err()
        );
    }
}
