//! Space–time splitting: Cauchy data on a flat periodic grid, induced
//! functionals, method-of-lines evolution, and conservation reports.
//!
//! The spatial slice is the flat unit torus with `N` nodes per axis.
//! Evolution integrates the fields and their time jets with the classical
//! fourth-order one-step scheme; spatial jets are recomputed as central
//! differences of the fields, which keeps the data holonomic by
//! construction.

use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::chart::{Coord, JetChart};
use crate::expr::poly::{Atom, FunKind, Poly};
use crate::expr::{ScalarExpr, Symbol};
use crate::forms::{Covector, DiffForm};
use crate::linalg::{pairwise_sum, solve_f64};

/// Reserved parameter bound to the circle constant during numeric work.
pub const PI_PARAM: &str = "pi";

#[derive(Debug, Error)]
pub enum CauchyError {
    #[error("expression references `{0}`, which has no numeric binding")]
    UnboundParam(String),
    #[error("expression references the time acceleration y_tt; it is not grid data")]
    SecondTimeJet,
    #[error("functional degree {got} does not match the spatial dimension {expected}")]
    FunctionalDegree { expected: usize, got: usize },
    #[error("singular node system at node {node}, t = {time}")]
    SingularNode { node: usize, time: f64 },
    #[error("non-finite value at node {node}, t = {time}")]
    NonFinite { node: usize, time: f64 },
    #[error("initial data violates the constraints: max |phi| = {0}")]
    ConstraintViolation(f64),
    #[error("state shape does not match the model")]
    ShapeMismatch,
}

/// The spatial slice: a flat torus of dimension `n` with unit periods and
/// `N` nodes per axis. `n = 0` is a single point with unit weight.
#[derive(Clone, Copy, Debug)]
pub struct Slicing {
    spatial_dim: usize,
    resolution: usize,
}

impl Slicing {
    pub fn new(spatial_dim: usize, resolution: usize) -> Slicing {
        assert!(spatial_dim == 0 || resolution >= 3, "grid too coarse");
        Slicing {
            spatial_dim,
            resolution,
        }
    }

    pub fn spatial_dim(&self) -> usize {
        self.spatial_dim
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn node_count(&self) -> usize {
        self.resolution.pow(self.spatial_dim as u32).max(1)
    }

    /// Uniform cell volume `N^-n`.
    pub fn cell_volume(&self) -> f64 {
        1.0 / self.node_count() as f64
    }

    /// Spatial coordinates of a node, axis-0 fastest.
    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spatial_dim);
        let mut rest = node;
        for _ in 0..self.spatial_dim {
            out.push((rest % self.resolution) as f64 / self.resolution as f64);
            rest /= self.resolution;
        }
        out
    }

    fn shift(&self, node: usize, axis: usize, delta: isize) -> usize {
        let stride = self.resolution.pow(axis as u32) as isize;
        let idx = (node as isize / stride) % self.resolution as isize;
        let shifted = (idx + delta).rem_euclid(self.resolution as isize);
        (node as isize + (shifted - idx) * stride) as usize
    }

    /// Second-order central first derivative along an axis.
    pub fn diff(&self, values: &[f64], axis: usize) -> Vec<f64> {
        let h_inv = self.resolution as f64;
        (0..values.len())
            .map(|u| {
                let plus = values[self.shift(u, axis, 1)];
                let minus = values[self.shift(u, axis, -1)];
                (plus - minus) * 0.5 * h_inv
            })
            .collect()
    }

    /// Second-order central second derivative along an axis.
    pub fn diff2(&self, values: &[f64], axis: usize) -> Vec<f64> {
        let h2_inv = (self.resolution as f64) * (self.resolution as f64);
        (0..values.len())
            .map(|u| {
                let plus = values[self.shift(u, axis, 1)];
                let minus = values[self.shift(u, axis, -1)];
                (plus - 2.0 * values[u] + minus) * h2_inv
            })
            .collect()
    }

    /// Equal-weight quadrature over the torus (pairwise summation).
    pub fn integrate(&self, values: &[f64]) -> f64 {
        pairwise_sum(values) * self.cell_volume()
    }
}

/// Grid samples of the fields and their first jets at one time.
#[derive(Clone, Debug)]
pub struct CauchyState {
    pub time: f64,
    /// `fields[a][node]`
    pub fields: Vec<Vec<f64>>,
    /// `velocities[a][node]` (the time jets, integrated)
    pub velocities: Vec<Vec<f64>>,
    /// `spatial_jets[a][axis][node]` (recomputed central differences)
    pub spatial_jets: Vec<Vec<Vec<f64>>>,
}

impl CauchyState {
    /// Build a state from field and velocity samples; spatial jets are the
    /// central differences of the fields.
    pub fn new(
        slicing: &Slicing,
        time: f64,
        fields: Vec<Vec<f64>>,
        velocities: Vec<Vec<f64>>,
    ) -> CauchyState {
        let spatial_jets = fields
            .iter()
            .map(|f| (0..slicing.spatial_dim()).map(|ax| slicing.diff(f, ax)).collect())
            .collect();
        CauchyState {
            time,
            fields,
            velocities,
            spatial_jets,
        }
    }

    /// `max |y^a_x - central difference of y^a|`; zero by construction for
    /// states produced here, monitored in case data arrives another way.
    pub fn holonomy_defect(&self, slicing: &Slicing) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, jets) in self.spatial_jets.iter().enumerate() {
            for (axis, stored) in jets.iter().enumerate() {
                let fresh = slicing.diff(&self.fields[a], axis);
                for (s, f) in stored.iter().zip(&fresh) {
                    worst = worst.max((s - f).abs());
                }
            }
        }
        worst
    }
}

/// Fixed slot layout for numeric evaluation at a node: base coordinates,
/// fields, first jets, then symmetric second jets.
#[derive(Clone, Debug)]
pub struct SlotLayout {
    base_dim: usize,
    fibre_dim: usize,
}

impl SlotLayout {
    pub fn new(chart: &JetChart) -> SlotLayout {
        SlotLayout {
            base_dim: chart.base_dim(),
            fibre_dim: chart.fibre_dim(),
        }
    }

    pub fn len(&self) -> usize {
        let pairs = self.base_dim * (self.base_dim + 1) / 2;
        self.base_dim + self.fibre_dim * (1 + self.base_dim + pairs)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn pair_index(&self, mu: usize, nu: usize) -> usize {
        // index of the sorted pair (mu, nu) among pairs over base_dim
        debug_assert!(mu <= nu);
        mu * self.base_dim - mu * (mu + 1) / 2 + nu
    }

    pub fn slot(&self, c: Coord) -> usize {
        let nb = self.base_dim;
        let m = self.fibre_dim;
        match c {
            Coord::Base(mu) => mu as usize,
            Coord::Fibre(a) => nb + a as usize,
            Coord::Jet(a, mu) => nb + m + (a as usize) * nb + mu as usize,
            Coord::Jet2(a, mu, nu) => {
                nb + m + m * nb + (a as usize) * (nb * (nb + 1) / 2)
                    + self.pair_index(mu as usize, nu as usize)
            }
        }
    }
}

#[derive(Clone, Debug)]
enum NumAtom {
    Slot(usize),
    Fun(FunKind, Box<CompiledExpr>),
}

#[derive(Clone, Debug)]
struct NumTerm {
    coeff: f64,
    factors: Vec<(NumAtom, u32)>,
}

/// An expression compiled against the slot layout for fast f64 evaluation.
#[derive(Clone, Debug)]
pub struct CompiledExpr {
    num: Vec<NumTerm>,
    den: Option<Vec<NumTerm>>,
    /// second jets referenced anywhere in this expression
    jet2_refs: Vec<Coord>,
}

fn rat_to_f64(r: &crate::expr::poly::Rat) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

/// Compile an expression; `pi` binds to the circle constant, any other
/// free parameter is an error.
pub fn compile_expr(e: &ScalarExpr, layout: &SlotLayout) -> Result<CompiledExpr, CauchyError> {
    // bind pi up front so the compiled form has no parameters at all
    let mut bind = std::collections::BTreeMap::new();
    bind.insert(
        Symbol::Param(PI_PARAM.to_string()),
        ScalarExpr::param("__pi_marker"),
    );
    let mut jet2 = BTreeSet::new();
    let replaced = e
        .substitute(&bind)
        .map_err(|_| CauchyError::UnboundParam(PI_PARAM.into()))?;
    let compiled = compile_pi_marked(&replaced, layout, &mut jet2)?;
    Ok(CompiledExpr {
        jet2_refs: jet2.into_iter().collect(),
        ..compiled
    })
}

fn compile_pi_marked(
    e: &ScalarExpr,
    layout: &SlotLayout,
    jet2: &mut BTreeSet<Coord>,
) -> Result<CompiledExpr, CauchyError> {
    let compile_side = |poly: &Poly,
                        jet2: &mut BTreeSet<Coord>|
     -> Result<Vec<NumTerm>, CauchyError> {
        let mut out = Vec::new();
        for (mono, coeff) in poly.terms() {
            let mut c = rat_to_f64(coeff);
            let mut factors = Vec::new();
            for (atom, exp) in mono.factors() {
                match atom {
                    Atom::Coord(coord) => {
                        if let Coord::Jet2(_, 0, 0) = coord {
                            return Err(CauchyError::SecondTimeJet);
                        }
                        if matches!(coord, Coord::Jet2(_, _, _)) {
                            jet2.insert(*coord);
                        }
                        factors.push((NumAtom::Slot(layout.slot(*coord)), *exp));
                    }
                    Atom::Param(p) if p == "__pi_marker" => {
                        c *= std::f64::consts::PI.powi(*exp as i32);
                    }
                    Atom::Param(p) => return Err(CauchyError::UnboundParam(p.clone())),
                    Atom::Fun(kind, arg) => {
                        let sub = compile_pi_marked(arg, layout, jet2)?;
                        factors.push((NumAtom::Fun(*kind, Box::new(sub)), *exp));
                    }
                }
            }
            out.push(NumTerm { coeff: c, factors });
        }
        Ok(out)
    };
    let num = compile_side(e.num_poly(), jet2)?;
    let den = if e.den_poly().is_one() {
        None
    } else {
        Some(compile_side(e.den_poly(), jet2)?)
    };
    Ok(CompiledExpr {
        num,
        den,
        jet2_refs: Vec::new(),
    })
}

impl CompiledExpr {
    pub fn eval(&self, slots: &[f64]) -> f64 {
        let n = eval_terms(&self.num, slots);
        match &self.den {
            None => n,
            Some(d) => n / eval_terms(d, slots),
        }
    }

    pub fn jet2_refs(&self) -> &[Coord] {
        &self.jet2_refs
    }
}

fn eval_terms(terms: &[NumTerm], slots: &[f64]) -> f64 {
    let mut acc = 0.0;
    for t in terms {
        let mut v = t.coeff;
        for (atom, e) in &t.factors {
            let base = match atom {
                NumAtom::Slot(i) => slots[*i],
                NumAtom::Fun(kind, arg) => {
                    let x = arg.eval(slots);
                    match kind {
                        FunKind::Sin => x.sin(),
                        FunKind::Cos => x.cos(),
                        FunKind::Exp => x.exp(),
                    }
                }
            };
            v *= base.powi(*e as i32);
        }
        acc += v;
    }
    acc
}

/// The per-node systems of the semi-discrete field equations, compiled:
/// `W ytt = lambda B - r` together with `B ytt + c = 0` for constrained
/// models (solved as one bordered system).
pub struct NumericModel {
    pub chart: JetChart,
    pub slicing: Slicing,
    layout: SlotLayout,
    m: usize,
    k: usize,
    w: Vec<Vec<CompiledExpr>>,
    r: Vec<CompiledExpr>,
    b: Vec<Vec<CompiledExpr>>,
    cvec: Vec<CompiledExpr>,
    phis: Vec<CompiledExpr>,
    needed_jet2: Vec<Coord>,
}

impl NumericModel {
    pub fn new(
        l: &crate::variational::Lagrangian,
        constraints: &crate::nonholonomic::ConstraintSet,
        slicing: Slicing,
    ) -> Result<NumericModel, CauchyError> {
        let chart = l.chart().clone();
        let layout = SlotLayout::new(&chart);
        let m = chart.fibre_dim();
        let k = constraints.k();

        let kill_tt: std::collections::BTreeMap<Symbol, ScalarExpr> = (0..m as u8)
            .map(|b| (Symbol::Coord(Coord::Jet2(b, 0, 0)), ScalarExpr::zero()))
            .collect();

        let w_sym = l.hessian_block(0);
        let el = l.euler_lagrange();
        let mut w = Vec::with_capacity(m);
        let mut r = Vec::with_capacity(m);
        for a in 0..m {
            let row: Vec<CompiledExpr> = w_sym[a]
                .iter()
                .map(|e| compile_expr(e, &layout))
                .collect::<Result<_, _>>()?;
            w.push(row);
            let rest = el[a].substitute(&kill_tt).expect("affine in ytt");
            r.push(compile_expr(&rest, &layout)?);
        }
        let mut b = Vec::with_capacity(k);
        let mut cvec = Vec::with_capacity(k);
        let mut phis = Vec::with_capacity(k);
        for phi in constraints.phis() {
            let row: Vec<CompiledExpr> = (0..m)
                .map(|a| compile_expr(&phi.partial(Coord::Jet(a as u8, 0)), &layout))
                .collect::<Result<_, _>>()?;
            b.push(row);
            let dphi = phi
                .total_derivative(&chart, 0)
                .expect("constraints are first order");
            cvec.push(compile_expr(
                &dphi.substitute(&kill_tt).expect("affine in ytt"),
                &layout,
            )?);
            phis.push(compile_expr(phi, &layout)?);
        }

        let mut needed: BTreeSet<Coord> = BTreeSet::new();
        for e in w
            .iter()
            .flatten()
            .chain(&r)
            .chain(b.iter().flatten())
            .chain(&cvec)
            .chain(&phis)
        {
            needed.extend(e.jet2_refs().iter().copied());
        }
        Ok(NumericModel {
            chart,
            slicing,
            layout,
            m,
            k,
            w,
            r,
            b,
            cvec,
            phis,
            needed_jet2: needed.into_iter().collect(),
        })
    }

    pub fn layout(&self) -> &SlotLayout {
        &self.layout
    }

    pub fn constraint_count(&self) -> usize {
        self.k
    }

    /// Max |phi| over the nodes.
    pub fn constraint_defect(&self, state: &CauchyState) -> Result<f64, CauchyError> {
        if self.k == 0 {
            return Ok(0.0);
        }
        let scratch = self.derivative_arrays(state);
        let mut slots = vec![0.0; self.layout.len()];
        let mut worst: f64 = 0.0;
        for node in 0..self.slicing.node_count() {
            self.fill_slots(state, &scratch, node, &mut slots);
            for phi in &self.phis {
                worst = worst.max(phi.eval(&slots).abs());
            }
        }
        Ok(worst)
    }

    /// Precompute the derivative arrays the compiled expressions need.
    fn derivative_arrays(&self, state: &CauchyState) -> Vec<(Coord, Vec<f64>)> {
        let mut out = Vec::new();
        for &c in &self.needed_jet2 {
            let Coord::Jet2(a, mu, nu) = c else { continue };
            let arr = if mu == 0 {
                // mixed time-space jet: differentiate the velocity
                self.slicing.diff(&state.velocities[a as usize], nu as usize - 1)
            } else if mu == nu {
                self.slicing.diff2(&state.fields[a as usize], mu as usize - 1)
            } else {
                let first = self.slicing.diff(&state.fields[a as usize], mu as usize - 1);
                self.slicing.diff(&first, nu as usize - 1)
            };
            out.push((c, arr));
        }
        out
    }

    fn fill_slots(
        &self,
        state: &CauchyState,
        derivatives: &[(Coord, Vec<f64>)],
        node: usize,
        slots: &mut [f64],
    ) {
        slots[self.layout.slot(Coord::Base(0))] = state.time;
        let coords = self.slicing.node_coords(node);
        for (i, x) in coords.iter().enumerate() {
            slots[self.layout.slot(Coord::Base(i as u8 + 1))] = *x;
        }
        for a in 0..self.m {
            slots[self.layout.slot(Coord::Fibre(a as u8))] = state.fields[a][node];
            slots[self.layout.slot(Coord::Jet(a as u8, 0))] = state.velocities[a][node];
            for ax in 0..self.slicing.spatial_dim() {
                slots[self.layout.slot(Coord::Jet(a as u8, ax as u8 + 1))] =
                    state.spatial_jets[a][ax][node];
            }
        }
        for (c, arr) in derivatives {
            slots[self.layout.slot(*c)] = arr[node];
        }
    }

    /// Accelerations (and multipliers) at every node: the bordered system
    /// `[W, -B^T; B, 0] [ytt; lam] = [-r; -c]`.
    fn accelerations(&self, state: &CauchyState, parallel: bool) -> Result<Vec<Vec<f64>>, CauchyError> {
        let derivatives = self.derivative_arrays(state);
        let nodes = self.slicing.node_count();
        let dim = self.m + self.k;
        let solve_node = |node: usize| -> Result<Vec<f64>, CauchyError> {
            let mut slots = vec![0.0; self.layout.len()];
            self.fill_slots(state, &derivatives, node, &mut slots);
            let mut a = vec![vec![0.0; dim]; dim];
            let mut rhs = vec![0.0; dim];
            for i in 0..self.m {
                for j in 0..self.m {
                    a[i][j] = self.w[i][j].eval(&slots);
                }
                for alpha in 0..self.k {
                    let v = self.b[alpha][i].eval(&slots);
                    a[i][self.m + alpha] = -v;
                    a[self.m + alpha][i] = v;
                }
                rhs[i] = -self.r[i].eval(&slots);
            }
            for alpha in 0..self.k {
                rhs[self.m + alpha] = -self.cvec[alpha].eval(&slots);
            }
            let sol = solve_f64(&mut a, &mut rhs, 1e-13).ok_or(CauchyError::SingularNode {
                node,
                time: state.time,
            })?;
            if sol.iter().any(|v| !v.is_finite()) {
                return Err(CauchyError::NonFinite {
                    node,
                    time: state.time,
                });
            }
            Ok(sol)
        };
        let solved: Result<Vec<Vec<f64>>, CauchyError> = if parallel {
            (0..nodes).into_par_iter().map(solve_node).collect()
        } else {
            (0..nodes).map(solve_node).collect()
        };
        let solved = solved?;
        let mut accel = vec![vec![0.0; nodes]; self.m];
        for (node, sol) in solved.iter().enumerate() {
            for a in 0..self.m {
                accel[a][node] = sol[a];
            }
        }
        Ok(accel)
    }
}

/// Per-step diagnostics stored with the trajectory.
#[derive(Clone, Copy, Debug)]
pub struct StepDiagnostics {
    pub time: f64,
    pub constraint_defect: f64,
    pub holonomy_defect: f64,
}

/// Stored states plus diagnostics of a run.
#[derive(Debug)]
pub struct Trajectory {
    pub states: Vec<CauchyState>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub dt: f64,
    pub store_every: usize,
}

/// Evolution parameters of the method-of-lines run.
#[derive(Clone, Copy, Debug)]
pub struct EvolveParams {
    pub dt: f64,
    pub steps: usize,
    pub store_every: usize,
    pub parallel: bool,
}

/// Integrate the semi-discrete system with the classical fourth-order
/// one-step scheme; the stored states carry recomputed spatial jets.
pub fn evolve(
    model: &NumericModel,
    initial: &CauchyState,
    params: &EvolveParams,
) -> Result<Trajectory, CauchyError> {
    let slicing = model.slicing;
    if initial.fields.len() != model.m {
        return Err(CauchyError::ShapeMismatch);
    }
    let mut states = Vec::new();
    let mut diagnostics = Vec::new();
    let mut current = CauchyState::new(
        &slicing,
        initial.time,
        initial.fields.clone(),
        initial.velocities.clone(),
    );
    let store = |state: &CauchyState,
                 states: &mut Vec<CauchyState>,
                 diagnostics: &mut Vec<StepDiagnostics>|
     -> Result<(), CauchyError> {
        diagnostics.push(StepDiagnostics {
            time: state.time,
            constraint_defect: model.constraint_defect(state)?,
            holonomy_defect: state.holonomy_defect(&slicing),
        });
        states.push(state.clone());
        Ok(())
    };
    store(&current, &mut states, &mut diagnostics)?;

    let dt = params.dt;
    for step in 0..params.steps {
        // four stages: (velocities, accelerations) at shifted states
        let stage = |t: f64,
                     fields: &[Vec<f64>],
                     velocities: &[Vec<f64>]|
         -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), CauchyError> {
            let s = CauchyState::new(&slicing, t, fields.to_vec(), velocities.to_vec());
            let accel = model.accelerations(&s, params.parallel)?;
            Ok((velocities.to_vec(), accel))
        };
        let t = current.time;
        let (k1f, k1v) = stage(t, &current.fields, &current.velocities)?;
        let half = |base: &[Vec<f64>], k: &[Vec<f64>], h: f64| -> Vec<Vec<f64>> {
            base.iter()
                .zip(k)
                .map(|(b, kk)| b.iter().zip(kk).map(|(x, d)| x + h * d).collect())
                .collect()
        };
        let (k2f, k2v) = stage(
            t + dt / 2.0,
            &half(&current.fields, &k1f, dt / 2.0),
            &half(&current.velocities, &k1v, dt / 2.0),
        )?;
        let (k3f, k3v) = stage(
            t + dt / 2.0,
            &half(&current.fields, &k2f, dt / 2.0),
            &half(&current.velocities, &k2v, dt / 2.0),
        )?;
        let (k4f, k4v) = stage(
            t + dt,
            &half(&current.fields, &k3f, dt),
            &half(&current.velocities, &k3v, dt),
        )?;
        let combine = |base: &[Vec<f64>],
                       k1: &[Vec<f64>],
                       k2: &[Vec<f64>],
                       k3: &[Vec<f64>],
                       k4: &[Vec<f64>]|
         -> Vec<Vec<f64>> {
            base.iter()
                .enumerate()
                .map(|(a, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(u, x)| {
                            x + dt / 6.0
                                * (k1[a][u] + 2.0 * k2[a][u] + 2.0 * k3[a][u] + k4[a][u])
                        })
                        .collect()
                })
                .collect()
        };
        let fields = combine(&current.fields, &k1f, &k2f, &k3f, &k4f);
        let velocities = combine(&current.velocities, &k1v, &k2v, &k3v, &k4v);
        for row in fields.iter().chain(&velocities) {
            if let Some(u) = row.iter().position(|v| !v.is_finite()) {
                return Err(CauchyError::NonFinite {
                    node: u,
                    time: t + dt,
                });
            }
        }
        current = CauchyState::new(&slicing, t + dt, fields, velocities);
        if (step + 1) % params.store_every == 0 || step + 1 == params.steps {
            store(&current, &mut states, &mut diagnostics)?;
        }
    }
    Ok(Trajectory {
        states,
        diagnostics,
        dt,
        store_every: params.store_every,
    })
}

/// An n-form compiled for pullback and quadrature along a state.
pub struct CompiledForm {
    degree: usize,
    terms: Vec<(Vec<Covector>, CompiledExpr)>,
}

/// Compile a momentum-type form (order <= 1 coefficients, degree n).
pub fn compile_form(form: &DiffForm, layout: &SlotLayout) -> Result<CompiledForm, CauchyError> {
    let terms = form
        .terms()
        .map(|(m, c)| Ok((m.clone(), compile_expr(c, layout)?)))
        .collect::<Result<Vec<_>, CauchyError>>()?;
    Ok(CompiledForm {
        degree: form.degree(),
        terms,
    })
}

/// `J~(kappa) = integral over M of the pullback of J`: `dt` pulls back to
/// zero, spatial covectors to the grid differentials, `dy`/`djet` to the
/// difference arrays; equal-weight quadrature. `n = 0` returns the value
/// at the single node.
pub fn functional(
    model: &NumericModel,
    form: &CompiledForm,
    state: &CauchyState,
) -> Result<f64, CauchyError> {
    let n = model.slicing.spatial_dim();
    if form.degree != n {
        return Err(CauchyError::FunctionalDegree {
            expected: n,
            got: form.degree,
        });
    }
    let mut derivatives = model.derivative_arrays(state);
    // derivative arrays needed by the pullback itself
    let mut pull_needs: BTreeSet<Coord> = BTreeSet::new();
    for (mono, _) in &form.terms {
        for cov in mono {
            if let Covector::DJet(a, mu) = cov {
                for axis in 0..n {
                    let c = Coord::jet2(*a, *mu, axis as u8 + 1);
                    if !matches!(c, Coord::Jet2(_, 0, 0)) {
                        pull_needs.insert(c);
                    }
                }
            }
        }
    }
    for c in pull_needs {
        if derivatives.iter().any(|(d, _)| *d == c) {
            continue;
        }
        let Coord::Jet2(a, mu, nu) = c else { continue };
        let arr = if mu == 0 {
            model
                .slicing
                .diff(&state.velocities[a as usize], nu as usize - 1)
        } else if mu == nu {
            model.slicing.diff2(&state.fields[a as usize], mu as usize - 1)
        } else {
            let first = model
                .slicing
                .diff(&state.fields[a as usize], mu as usize - 1);
            model.slicing.diff(&first, nu as usize - 1)
        };
        derivatives.push((c, arr));
    }
    let derivatives = derivatives;
    // pullback components of every covector along each spatial axis
    let component = |cov: &Covector, axis: usize, node: usize| -> f64 {
        match cov {
            Covector::Dx(0) => 0.0,
            Covector::Dx(i) => {
                if *i as usize == axis + 1 {
                    1.0
                } else {
                    0.0
                }
            }
            Covector::Dy(a) => state.spatial_jets[*a as usize][axis][node],
            Covector::DJet(a, mu) => derivatives
                .iter()
                .find(|(c, _)| *c == Coord::jet2(*a, *mu, axis as u8 + 1))
                .map(|(_, arr)| arr[node])
                .unwrap_or(f64::NAN),
        }
    };
    let mut slots = vec![0.0; model.layout.len()];
    let mut integrand = vec![0.0; model.slicing.node_count()];
    for node in 0..model.slicing.node_count() {
        model.fill_slots(state, &derivatives, node, &mut slots);
        let mut total = 0.0;
        for (mono, coeff) in &form.terms {
            let c = coeff.eval(&slots);
            if c == 0.0 {
                continue;
            }
            // determinant of the pullback components
            let det = match n {
                0 => 1.0,
                1 => component(&mono[0], 0, node),
                _ => {
                    let mut mat = vec![vec![0.0; n]; n];
                    for (r, cov) in mono.iter().enumerate() {
                        for (axis, entry) in mat[r].iter_mut().enumerate() {
                            *entry = component(cov, axis, node);
                        }
                    }
                    det_f64(&mut mat)
                }
            };
            total += c * det;
        }
        integrand[node] = total;
    }
    Ok(model.slicing.integrate(&integrand))
}

fn det_f64(m: &mut [Vec<f64>]) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for col in 0..n {
        let mut best = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[best][col].abs() {
                best = r;
            }
        }
        if m[best][col] == 0.0 {
            return 0.0;
        }
        if best != col {
            m.swap(best, col);
            det = -det;
        }
        let pivot = m[col][col];
        det *= pivot;
        for r in col + 1..n {
            let f = m[r][col] / pivot;
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    det
}

/// `L~(kappa)`: quadrature of the Lagrangian density over the slice.
pub fn induced_lagrangian(
    model: &NumericModel,
    density: &CompiledExpr,
    state: &CauchyState,
) -> f64 {
    let derivatives = model.derivative_arrays(state);
    let mut slots = vec![0.0; model.layout.len()];
    let values: Vec<f64> = (0..model.slicing.node_count())
        .map(|node| {
            model.fill_slots(state, &derivatives, node, &mut slots);
            density.eval(&slots)
        })
        .collect();
    model.slicing.integrate(&values)
}

/// What the conservation report tracks: covariant momenta per generator
/// and balance data per section.
pub struct ReportSpec {
    pub momenta: Vec<(String, CompiledForm)>,
    /// name, momentum form, balance right-hand side `xi~(L)`.
    pub balances: Vec<(String, CompiledForm, CompiledExpr)>,
}

/// One row of the conservation table.
#[derive(Clone, Debug)]
pub struct ConservationRow {
    pub time: f64,
    pub momenta: Vec<f64>,
    pub nh_momenta: Vec<f64>,
    /// centered differences over the stored steps; `NaN` at the ends
    pub nh_rates: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Evaluate the induced functionals along the trajectory and form the
/// balance residual `d/dt J~nh - integral of xi~(L)`.
pub fn conservation_report(
    model: &NumericModel,
    spec: &ReportSpec,
    traj: &Trajectory,
) -> Result<Vec<ConservationRow>, CauchyError> {
    let mut rows = Vec::with_capacity(traj.states.len());
    for state in &traj.states {
        let momenta = spec
            .momenta
            .iter()
            .map(|(_, f)| functional(model, f, state))
            .collect::<Result<Vec<_>, _>>()?;
        let mut nh_momenta = Vec::new();
        let mut rhs = Vec::new();
        for (_, form, balance) in &spec.balances {
            nh_momenta.push(functional(model, form, state)?);
            rhs.push(induced_lagrangian(model, balance, state));
        }
        rows.push(ConservationRow {
            time: state.time,
            momenta,
            nh_momenta,
            nh_rates: vec![f64::NAN; spec.balances.len()],
            rhs,
            residuals: vec![f64::NAN; spec.balances.len()],
        });
    }
    // centered differences of the stored momenta
    let count = rows.len();
    for i in 0..count {
        if i == 0 || i + 1 == count {
            continue;
        }
        let dt = rows[i + 1].time - rows[i - 1].time;
        for s in 0..spec.balances.len() {
            let rate = (rows[i + 1].nh_momenta[s] - rows[i - 1].nh_momenta[s]) / dt;
            rows[i].nh_rates[s] = rate;
            rows[i].residuals[s] = rate - rows[i].rhs[s];
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse::{parse_expr, ParseCtx};
    use crate::nonholonomic::ConstraintSet;
    use crate::variational::Lagrangian;

    fn parse_on(chart: &JetChart, src: &str) -> ScalarExpr {
        let params = vec![PI_PARAM.to_string()];
        let ctx = ParseCtx {
            chart,
            params: &params,
            allow_free_params: false,
        };
        parse_expr(src, &ctx).unwrap()
    }

    fn wave_model(n: usize) -> NumericModel {
        let chart = JetChart::new(["t", "x"], ["y"]).unwrap();
        let l = Lagrangian::new(chart.clone(), parse_on(&chart, "(y_t^2 - y_x^2)/2")).unwrap();
        let c = ConstraintSet::empty(chart);
        NumericModel::new(&l, &c, Slicing::new(1, n)).unwrap()
    }

    fn sample(slicing: &Slicing, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..slicing.node_count())
            .map(|u| f(slicing.node_coords(u)[0]))
            .collect()
    }

    #[test]
    fn grid_differences_are_second_order() {
        let s1 = Slicing::new(1, 64);
        let s2 = Slicing::new(1, 128);
        let tau = std::f64::consts::TAU;
        let err = |s: &Slicing| {
            let f = sample(s, |x| (tau * x).sin());
            let d = s.diff(&f, 0);
            (0..s.node_count())
                .map(|u| (d[u] - tau * (tau * s.node_coords(u)[0]).cos()).abs())
                .fold(0.0f64, f64::max)
        };
        let (e1, e2) = (err(&s1), err(&s2));
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn functional_examples() {
        let model = wave_model(64);
        let chart = model.chart.clone();
        let slicing = model.slicing;
        // J = y_t dx: constant y_t = 1 integrates to 1
        let j = DiffForm::covector(Covector::Dx(1)).scale(&parse_on(&chart, "y_t"));
        let cf = compile_form(&j, model.layout()).unwrap();
        let fields = vec![sample(&slicing, |_| 0.0)];
        let velocities = vec![sample(&slicing, |_| 1.0)];
        let state = CauchyState::new(&slicing, 0.0, fields, velocities);
        assert!((functional(&model, &cf, &state).unwrap() - 1.0).abs() < 1e-14);

        // adding the temporal term changes nothing: dt pulls back to 0
        let j2 = j.add(&DiffForm::covector(Covector::Dx(0)).scale(&parse_on(&chart, "y_x")));
        let cf2 = compile_form(&j2, model.layout()).unwrap();
        assert!((functional(&model, &cf2, &state).unwrap() - 1.0).abs() < 1e-14);

        // standing mode at t = 0 has zero momentum
        let tau = std::f64::consts::TAU;
        let fields = vec![sample(&slicing, |x| (tau * x).sin())];
        let velocities = vec![sample(&slicing, |_| 0.0)];
        let state = CauchyState::new(&slicing, 0.0, fields, velocities);
        assert!(functional(&model, &cf, &state).unwrap().abs() < 1e-12);

        // degree guard
        let bad = DiffForm::scalar(parse_on(&chart, "y"));
        let cf_bad = compile_form(&bad, model.layout()).unwrap();
        assert!(matches!(
            functional(&model, &cf_bad, &state),
            Err(CauchyError::FunctionalDegree { .. })
        ));
    }

    #[test]
    fn induced_lagrangian_examples() {
        let model = wave_model(128);
        let _chart = model.chart.clone();
        let slicing = model.slicing;
        // constant density integrates to itself on the unit torus
        let one = compile_expr(&ScalarExpr::one(), model.layout()).unwrap();
        let state = CauchyState::new(
            &slicing,
            0.0,
            vec![sample(&slicing, |_| 0.0)],
            vec![sample(&slicing, |_| 0.0)],
        );
        assert!((induced_lagrangian(&model, &one, &state) - 1.0).abs() < 1e-14);

        // standing mode at t = 0: integral of -(2 pi cos 2 pi x)^2 / 2 is
        // -pi^2, approached at second order in 1/N (Richardson)
        let tau = std::f64::consts::TAU;
        let exact = -std::f64::consts::PI.powi(2);
        let err_at = |n: usize| -> f64 {
            let model = wave_model(n);
            let slicing = model.slicing;
            let density =
                compile_expr(&parse_on(&model.chart, "(y_t^2 - y_x^2)/2"), model.layout())
                    .unwrap();
            let state = CauchyState::new(
                &slicing,
                0.0,
                vec![sample(&slicing, |x| (tau * x).sin())],
                vec![sample(&slicing, |_| 0.0)],
            );
            (induced_lagrangian(&model, &density, &state) - exact).abs()
        };
        let (e1, e2) = (err_at(64), err_at(128));
        assert!(e2 < 2e-2);
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "Richardson ratio {ratio}");
    }

    #[test]
    fn functional_pullback_is_second_order() {
        // J = y_t dy pulls back to y_t * D_x y; on y = sin, y_t = cos the
        // exact value is pi and the difference stencil is second order.
        let tau = std::f64::consts::TAU;
        let err_at = |n: usize| -> f64 {
            let model = wave_model(n);
            let slicing = model.slicing;
            let j = DiffForm::covector(Covector::Dy(0)).scale(&parse_on(&model.chart, "y_t"));
            let cf = compile_form(&j, model.layout()).unwrap();
            let state = CauchyState::new(
                &slicing,
                0.0,
                vec![sample(&slicing, |x| (tau * x).sin())],
                vec![sample(&slicing, |x| (tau * x).cos())],
            );
            (functional(&model, &cf, &state).unwrap() - std::f64::consts::PI).abs()
        };
        let (e1, e2) = (err_at(64), err_at(128));
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "Richardson ratio {ratio}");
    }

    #[test]
    fn wave_standing_mode_accuracy() {
        let model = wave_model(128);
        let slicing = model.slicing;
        let tau = std::f64::consts::TAU;
        let initial = CauchyState::new(
            &slicing,
            0.0,
            vec![sample(&slicing, |x| (tau * x).sin())],
            vec![sample(&slicing, |_| 0.0)],
        );
        let params = EvolveParams {
            dt: 1e-3,
            steps: 250,
            store_every: 50,
            parallel: false,
        };
        let traj = evolve(&model, &initial, &params).unwrap();
        let mut worst: f64 = 0.0;
        for state in &traj.states {
            for u in 0..slicing.node_count() {
                let x = slicing.node_coords(u)[0];
                let exact = (tau * x).sin() * (tau * state.time).cos();
                worst = worst.max((state.fields[0][u] - exact).abs());
            }
        }
        assert!(worst < 5e-4, "max node error {worst}");
        // holonomy defect is zero by construction
        for d in &traj.diagnostics {
            assert!(d.holonomy_defect < 1e-12);
        }
    }

    #[test]
    fn mechanics_limit_free_fall() {
        // single harmonic oscillator as a smoke test of the n = 0 path:
        // L = (x_t^2 - x^2)/2, exact solution cos t
        let chart = JetChart::new(["t"], ["x"]).unwrap();
        let l = Lagrangian::new(chart.clone(), parse_on(&chart, "(x_t^2 - x^2)/2")).unwrap();
        let c = ConstraintSet::empty(chart);
        let model = NumericModel::new(&l, &c, Slicing::new(0, 1)).unwrap();
        let initial = CauchyState::new(&model.slicing, 0.0, vec![vec![1.0]], vec![vec![0.0]]);
        let params = EvolveParams {
            dt: 1e-3,
            steps: 1000,
            store_every: 1000,
            parallel: false,
        };
        let traj = evolve(&model, &initial, &params).unwrap();
        let last = traj.states.last().unwrap();
        assert!((last.fields[0][0] - 1.0f64.cos()).abs() < 1e-10);
    }

    #[test]
    fn constrained_particle_matches_closed_form() {
        let chart = JetChart::new(["t"], ["x", "y", "z"]).unwrap();
        let l = Lagrangian::new(
            chart.clone(),
            parse_on(&chart, "(x_t^2 + y_t^2 + z_t^2)/2"),
        )
        .unwrap();
        let phi = parse_on(&chart, "z_t - y*x_t");
        let mut rng = {
            use rand::SeedableRng;
            rand_chacha::ChaCha8Rng::seed_from_u64(7)
        };
        let c = ConstraintSet::new(chart.clone(), vec![phi], None, &mut rng).unwrap();
        let model = NumericModel::new(&l, &c, Slicing::new(0, 1)).unwrap();
        let initial = CauchyState::new(
            &model.slicing,
            0.0,
            vec![vec![0.0], vec![0.0], vec![0.0]],
            vec![vec![1.0], vec![1.0], vec![0.0]],
        );
        let params = EvolveParams {
            dt: 1e-4,
            steps: 10_000,
            store_every: 100,
            parallel: false,
        };
        let traj = evolve(&model, &initial, &params).unwrap();
        for state in &traj.states {
            let t = state.time;
            let exact = 1.0 / (1.0 + t * t).sqrt();
            assert!(
                (state.velocities[0][0] - exact).abs() < 1e-9,
                "xdot at t = {t}"
            );
            // conserved quantity xdot sqrt(1 + y^2)
            let q = state.velocities[0][0] * (1.0 + state.fields[1][0].powi(2)).sqrt();
            assert!((q - 1.0).abs() < 1e-9);
        }
        // constraint defect stays tiny
        for d in &traj.diagnostics {
            assert!(d.constraint_defect < 1e-12);
        }
    }

    #[test]
    fn momentum_is_conserved_discretely() {
        let model = wave_model(64);
        let chart = model.chart.clone();
        let slicing = model.slicing;
        let tau = std::f64::consts::TAU;
        let initial = CauchyState::new(
            &slicing,
            0.0,
            vec![sample(&slicing, |x| (tau * x).sin())],
            vec![sample(&slicing, |x| 0.3 * (tau * x).cos())],
        );
        let j = DiffForm::covector(Covector::Dx(1)).scale(&parse_on(&chart, "y_t"));
        let cf = compile_form(&j, model.layout()).unwrap();
        let params = EvolveParams {
            dt: 2e-3,
            steps: 200,
            store_every: 20,
            parallel: false,
        };
        let traj = evolve(&model, &initial, &params).unwrap();
        let values: Vec<f64> = traj
            .states
            .iter()
            .map(|s| functional(&model, &cf, s).unwrap())
            .collect();
        let spread = values
            .iter()
            .fold(0.0f64, |acc, v| acc.max((v - values[0]).abs()));
        assert!(spread < 1e-12, "drift {spread}");
    }

    #[test]
    fn report_rates_match_rhs() {
        // nonholonomic particle: d/dt (x_t + y z_t) = y_t z_t
        let chart = JetChart::new(["t"], ["x", "y", "z"]).unwrap();
        let l = Lagrangian::new(
            chart.clone(),
            parse_on(&chart, "(x_t^2 + y_t^2 + z_t^2)/2"),
        )
        .unwrap();
        let phi = parse_on(&chart, "z_t - y*x_t");
        let mut rng = {
            use rand::SeedableRng;
            rand_chacha::ChaCha8Rng::seed_from_u64(11)
        };
        let c = ConstraintSet::new(chart.clone(), vec![phi], None, &mut rng).unwrap();
        let model = NumericModel::new(&l, &c, Slicing::new(0, 1)).unwrap();
        let initial = CauchyState::new(
            &model.slicing,
            0.0,
            vec![vec![0.0], vec![0.0], vec![0.0]],
            vec![vec![1.0], vec![1.0], vec![0.0]],
        );
        let params = EvolveParams {
            dt: 1e-4,
            steps: 2000,
            store_every: 1,
            parallel: false,
        };
        let traj = evolve(&model, &initial, &params).unwrap();
        let jnh = DiffForm::scalar(parse_on(&chart, "x_t + y*z_t"));
        let spec = ReportSpec {
            momenta: vec![],
            balances: vec![(
                "s".into(),
                compile_form(&jnh, model.layout()).unwrap(),
                compile_expr(&parse_on(&chart, "y_t*z_t"), model.layout()).unwrap(),
            )],
        };
        let rows = conservation_report(&model, &spec, &traj).unwrap();
        for row in rows.iter().skip(1).take(rows.len() - 2) {
            assert!(
                row.residuals[0].abs() < 1e-7,
                "residual {} at t = {}",
                row.residuals[0],
                row.time
            );
        }
    }
}
