//! Constraint submanifolds in the jet space: constraint forms, the bundle
//! they span, constrained field equations, and multiplier elimination.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::chart::{Coord, JetChart};
use crate::expr::poly::Rat;
use crate::expr::{ExprError, ScalarExpr, Symbol, Value};
use crate::forms::{s_star, Connection, Covector, DiffForm, FormsError};
use crate::linalg;
use crate::variational::{ddw_residual, Lagrangian, VariationalError};

#[derive(Debug, Error)]
pub enum NhError {
    #[error("constraint function has jet order {0}; order <= 1 required")]
    ConstraintOrder(u8),
    #[error("could not select {needed} independent leading jets (got {got})")]
    LeadingSelection { needed: usize, got: usize },
    #[error("constraints are not affine in the chosen leading jets")]
    NonAffineLeading,
    #[error("leading-jet Jacobian is singular as a symbolic matrix")]
    SingularLeadingJacobian,
    #[error("constraint forms are linearly dependent at a sampled point (rank {rank} < {k}); the subbundle assumption fails")]
    SubbundleViolation { rank: usize, k: usize },
    #[error("time block of the Hessian is singular; cannot eliminate multipliers")]
    SingularTimeBlock,
    #[error("admissibility matrix is singular at block alpha = {0}")]
    SingularAdmissibility(usize),
    #[error("could not sample a point on the constraint submanifold")]
    SamplingFailed,
    #[error("coefficients must be order 0 in the jets")]
    CoefficientOrder,
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Variational(#[from] VariationalError),
}

/// Reserved parameter name for a symbolic multiplier (1-based constraint
/// index, base coordinate name).
pub fn lambda_param_name(chart: &JetChart, alpha: usize, mu: usize) -> String {
    format!("lam[{};{}]", alpha + 1, chart.base_names()[mu])
}

/// A set of nonholonomic constraints `phi^alpha = 0` with designated
/// leading jets, their exact affine solution, and the constraint forms.
#[derive(Clone, Debug)]
pub struct ConstraintSet {
    chart: JetChart,
    phis: Vec<ScalarExpr>,
    leading: Vec<Coord>,
    leading_solution: BTreeMap<Symbol, ScalarExpr>,
    forms: Vec<DiffForm>,
}

impl ConstraintSet {
    /// An unconstrained (k = 0) set.
    pub fn empty(chart: JetChart) -> ConstraintSet {
        ConstraintSet {
            chart,
            phis: Vec::new(),
            leading: Vec::new(),
            leading_solution: BTreeMap::new(),
            forms: Vec::new(),
        }
    }

    /// Build a constraint set, auto-selecting leading jets unless given.
    ///
    /// Leading selection is greedy on the jet Jacobian: columns whose entry
    /// is a nonzero constant win (they pivot everywhere), otherwise the
    /// entry must be nonzero at a random rational point; candidates are
    /// scanned in reverse coordinate order. The constraints must be affine
    /// in the selected jets so membership can be solved exactly.
    pub fn new(
        chart: JetChart,
        phis: Vec<ScalarExpr>,
        leading: Option<Vec<Coord>>,
        rng: &mut impl Rng,
    ) -> Result<ConstraintSet, NhError> {
        if phis.is_empty() {
            return Ok(ConstraintSet::empty(chart));
        }
        for phi in &phis {
            let order = phi.max_jet_order();
            if order > 1 {
                return Err(NhError::ConstraintOrder(order));
            }
        }
        let k = phis.len();
        let leading = match leading {
            Some(l) => l,
            None => auto_select_leading(&chart, &phis, rng)?,
        };
        if leading.len() != k {
            return Err(NhError::LeadingSelection {
                needed: k,
                got: leading.len(),
            });
        }

        // affine check and exact solve of phi = 0 for the leading jets
        let mut jacobian = vec![vec![ScalarExpr::zero(); k]; k];
        let mut rest = Vec::with_capacity(k);
        for (row, phi) in phis.iter().enumerate() {
            let mut r = phi.clone();
            for (col, &lead) in leading.iter().enumerate() {
                let d = phi.partial(lead);
                for &other in &leading {
                    if !d.partial(other).is_zero() {
                        return Err(NhError::NonAffineLeading);
                    }
                }
                jacobian[row][col] = d;
                let m = BTreeMap::from([(Symbol::Coord(lead), ScalarExpr::zero())]);
                r = r.substitute(&m)?;
            }
            // cross terms between two leading jets would have survived
            for &lead in &leading {
                if !r.partial(lead).is_zero() {
                    return Err(NhError::NonAffineLeading);
                }
            }
            rest.push(r.neg());
        }
        let sol = linalg::solve(&jacobian, &rest, &mut linalg::structural_zero)
            .map_err(|_| NhError::SingularLeadingJacobian)?;
        if sol.pivot_cols.len() < k {
            return Err(NhError::SingularLeadingJacobian);
        }
        let leading_solution: BTreeMap<Symbol, ScalarExpr> = leading
            .iter()
            .zip(sol.particular)
            .map(|(&c, e)| (Symbol::Coord(c), e))
            .collect();

        let forms = phis
            .iter()
            .map(|phi| s_star(&chart, &DiffForm::scalar(phi.clone()).exterior_d()))
            .collect::<Result<Vec<_>, _>>()?;

        let set = ConstraintSet {
            chart,
            phis,
            leading,
            leading_solution,
            forms,
        };
        set.independence_check(rng, 20)?;
        Ok(set)
    }

    pub fn chart(&self) -> &JetChart {
        &self.chart
    }

    pub fn k(&self) -> usize {
        self.phis.len()
    }

    pub fn phis(&self) -> &[ScalarExpr] {
        &self.phis
    }

    pub fn leading(&self) -> &[Coord] {
        &self.leading
    }

    /// The constraint forms `Phi^alpha = S^*(d phi^alpha)`.
    pub fn forms(&self) -> &[DiffForm] {
        &self.forms
    }

    /// Restrict an expression to the constraint submanifold by substituting
    /// the solved leading jets.
    pub fn restrict(&self, e: &ScalarExpr) -> Result<ScalarExpr, ExprError> {
        if self.leading_solution.is_empty() {
            return Ok(e.clone());
        }
        e.substitute(&self.leading_solution)
    }

    /// Restrict every coefficient of a form.
    pub fn restrict_form(&self, f: &DiffForm) -> Result<DiffForm, ExprError> {
        if self.leading_solution.is_empty() {
            return Ok(f.clone());
        }
        f.substitute(&self.leading_solution)
    }

    /// Draw an exact rational point on the submanifold: random values for
    /// every non-leading first-order coordinate, leading jets solved.
    pub fn sample_on_c(&self, rng: &mut impl Rng) -> Result<BTreeMap<Symbol, Value>, NhError> {
        'outer: for _ in 0..200 {
            let mut point = BTreeMap::new();
            for c in self.chart.coords_up_to(1) {
                if self.leading.contains(&c) {
                    continue;
                }
                point.insert(
                    Symbol::Coord(c),
                    Value::rat(rng.random_range(-9..=9), rng.random_range(1..=4)),
                );
            }
            for (&lead, sol) in self.leading.iter().zip(
                self.leading
                    .iter()
                    .map(|c| &self.leading_solution[&Symbol::Coord(*c)]),
            ) {
                match sol.eval_map(&point) {
                    Ok(v @ Value::Rational(_)) => {
                        point.insert(Symbol::Coord(lead), v);
                    }
                    _ => continue 'outer, // pole of the affine solve; resample
                }
            }
            // exact membership
            for phi in &self.phis {
                let v = phi
                    .eval_map(&point)
                    .map_err(|_| NhError::SamplingFailed)?;
                if !v.is_zero() {
                    return Err(NhError::SamplingFailed);
                }
            }
            return Ok(point);
        }
        Err(NhError::SamplingFailed)
    }

    /// Verify that the constraint forms stay pointwise independent on a
    /// batch of sampled points (the subbundle hypothesis).
    pub fn independence_check(&self, rng: &mut impl Rng, points: usize) -> Result<(), NhError> {
        if self.k() == 0 {
            return Ok(());
        }
        for _ in 0..points {
            let point = self.sample_on_c(rng)?;
            let rank = self.rank_at(&point)?;
            if rank < self.k() {
                return Err(NhError::SubbundleViolation {
                    rank,
                    k: self.k(),
                });
            }
        }
        Ok(())
    }

    /// Rank of `{Phi^alpha}` at a rational point.
    pub fn rank_at(&self, point: &BTreeMap<Symbol, Value>) -> Result<usize, NhError> {
        let mut monomials = std::collections::BTreeSet::new();
        let evaluated: Vec<BTreeMap<Vec<Covector>, Rat>> = self
            .forms
            .iter()
            .map(|f| f.eval_exact(point))
            .collect::<Result<_, _>>()?;
        for row in &evaluated {
            monomials.extend(row.keys().cloned());
        }
        let cols: Vec<Vec<Covector>> = monomials.into_iter().collect();
        let rows: Vec<Vec<Rat>> = evaluated
            .iter()
            .map(|row| {
                cols.iter()
                    .map(|m| row.get(m).cloned().unwrap_or_else(|| Rat::from_integer(0.into())))
                    .collect()
            })
            .collect();
        Ok(linalg::rank_rat(rows))
    }
}

fn auto_select_leading(
    chart: &JetChart,
    phis: &[ScalarExpr],
    rng: &mut impl Rng,
) -> Result<Vec<Coord>, NhError> {
    let mut candidates: Vec<Coord> = chart.jet_coords();
    candidates.reverse();
    let point: BTreeMap<Symbol, Value> = chart
        .coords_up_to(1)
        .into_iter()
        .map(|c| {
            (
                Symbol::Coord(c),
                Value::rat(rng.random_range(-9..=9), rng.random_range(1..=4)),
            )
        })
        .collect();
    let mut chosen: Vec<Coord> = Vec::new();
    for phi in phis {
        let pick = |constant_pass: bool| -> Option<Coord> {
            candidates.iter().copied().find(|&c| {
                if chosen.contains(&c) {
                    return false;
                }
                let d = phi.partial(c);
                if d.is_zero() {
                    return false;
                }
                if constant_pass {
                    d.as_rational().is_some()
                } else {
                    matches!(d.eval_map(&point), Ok(v) if !v.is_zero())
                }
            })
        };
        let c = pick(true).or_else(|| pick(false)).ok_or(
            NhError::LeadingSelection {
                needed: phis.len(),
                got: chosen.len(),
            },
        )?;
        chosen.push(c);
    }
    Ok(chosen)
}

/// Constraint functions for a linear (affine) constraint distribution:
/// `phi^(alpha, mu) = A^alpha_a y^a_mu + B^alpha_mu` with order-0
/// coefficient functions, one function per annihilating row and base index.
pub fn linear_constraints(
    chart: &JetChart,
    a_rows: &[Vec<ScalarExpr>],
    b_rows: &[Vec<ScalarExpr>],
) -> Result<Vec<ScalarExpr>, NhError> {
    let m = chart.fibre_dim();
    let nb = chart.base_dim();
    let mut out = Vec::new();
    for (row, a_coeffs) in a_rows.iter().enumerate() {
        assert_eq!(a_coeffs.len(), m, "one A coefficient per field");
        for c in a_coeffs {
            if c.max_jet_order() > 0 {
                return Err(NhError::CoefficientOrder);
            }
        }
        for mu in 0..nb {
            let mut phi = ScalarExpr::zero();
            for (a, coeff) in a_coeffs.iter().enumerate() {
                phi = phi.add(&coeff.mul(&ScalarExpr::coord(Coord::Jet(a as u8, mu as u8))));
            }
            if let Some(b_coeffs) = b_rows.get(row) {
                if let Some(b) = b_coeffs.get(mu) {
                    if b.max_jet_order() > 0 {
                        return Err(NhError::CoefficientOrder);
                    }
                    phi = phi.add(b);
                }
            }
            out.push(phi);
        }
    }
    Ok(out)
}

/// Constrained Euler–Lagrange residuals with symbolic multipliers:
/// `R_a = D_mu(dL/dy^a_mu) - dL/dy^a - lam[alpha;mu] dphi^alpha/dy^a_mu`.
/// With `k = 0` this is exactly the unconstrained residual list.
pub fn constrained_el(l: &Lagrangian, c: &ConstraintSet) -> Vec<ScalarExpr> {
    let chart = l.chart();
    let mut residuals = l.euler_lagrange();
    for (alpha, phi) in c.phis().iter().enumerate() {
        for mu in 0..chart.base_dim() {
            let lam = ScalarExpr::param(&lambda_param_name(chart, alpha, mu));
            for (a, r) in residuals.iter_mut().enumerate() {
                let b = phi.partial(Coord::Jet(a as u8, mu as u8));
                if !b.is_zero() {
                    *r = r.sub(&lam.mul(&b));
                }
            }
        }
    }
    residuals
}

/// Closed-form multipliers and accelerations from the tangency condition
/// `D_t phi^alpha = 0`, in the spatial gauge `lam[alpha; spatial] = 0`.
#[derive(Clone, Debug)]
pub struct MultiplierSolution {
    /// `(alpha, mu) -> expression`; spatial entries are zero.
    pub lambda: BTreeMap<(usize, usize), ScalarExpr>,
    /// Time accelerations `y^a_tt` as closed forms in first jets plus
    /// spatial/mixed second jets.
    pub accelerations: Vec<ScalarExpr>,
    /// The admissibility matrix `A^(alpha beta) = B W^-1 B^T`.
    pub admissibility: Vec<Vec<ScalarExpr>>,
    pub admissibility_det: ScalarExpr,
}

/// Effective force `f_a = lam_(alpha t) dphi^alpha/dy^a_t` of a solution.
pub fn effective_force(sol: &MultiplierSolution, c: &ConstraintSet) -> Vec<ScalarExpr> {
    let chart = c.chart();
    (0..chart.fibre_dim())
        .map(|a| {
            let mut f = ScalarExpr::zero();
            for (alpha, phi) in c.phis().iter().enumerate() {
                let b = phi.partial(Coord::Jet(a as u8, 0));
                if !b.is_zero() {
                    f = f.add(&sol.lambda[&(alpha, 0)].mul(&b));
                }
            }
            f
        })
        .collect()
}

/// Eliminate the multipliers: substitute the accelerations solved from the
/// constrained field equations into `D_t phi^alpha = 0` and solve the
/// resulting square linear system for `lam[alpha;t]`.
pub fn eliminate_multipliers(
    l: &Lagrangian,
    c: &ConstraintSet,
) -> Result<MultiplierSolution, NhError> {
    let chart = l.chart().clone();
    let m = chart.fibre_dim();
    let k = c.k();

    let w = l.hessian_block(0);
    let w_inv =
        linalg::invert(&w, &mut linalg::structural_zero).ok_or(NhError::SingularTimeBlock)?;

    // strike the time accelerations out of the residuals: EL_a = W ytt + r
    let kill_tt: BTreeMap<Symbol, ScalarExpr> = (0..m as u8)
        .map(|b| (Symbol::Coord(Coord::Jet2(b, 0, 0)), ScalarExpr::zero()))
        .collect();
    let el = l.euler_lagrange();
    let r: Vec<ScalarExpr> = el
        .iter()
        .map(|e| e.substitute(&kill_tt))
        .collect::<Result<_, _>>()?;

    // B^alpha_a = dphi^alpha/dy^a_t and c^alpha = D_t phi | ytt = 0
    let mut b = vec![vec![ScalarExpr::zero(); m]; k];
    let mut cvec = Vec::with_capacity(k);
    for (alpha, phi) in c.phis().iter().enumerate() {
        for a in 0..m {
            b[alpha][a] = phi.partial(Coord::Jet(a as u8, 0));
        }
        let dphi = phi.total_derivative(&chart, 0)?;
        cvec.push(dphi.substitute(&kill_tt)?);
    }

    // A = B W^-1 B^T ; rhs = B W^-1 r - c
    let mut adm = vec![vec![ScalarExpr::zero(); k]; k];
    let mut rhs = Vec::with_capacity(k);
    for alpha in 0..k {
        let mut acc = cvec[alpha].neg();
        for i in 0..m {
            for j in 0..m {
                acc = acc.add(&b[alpha][i].mul(&w_inv[i][j]).mul(&r[j]));
            }
        }
        rhs.push(acc);
        for beta in 0..k {
            let mut entry = ScalarExpr::zero();
            for i in 0..m {
                for j in 0..m {
                    entry = entry.add(&b[alpha][i].mul(&w_inv[i][j]).mul(&b[beta][j]));
                }
            }
            adm[alpha][beta] = entry;
        }
    }

    let lambda_t = if k == 0 {
        Vec::new()
    } else {
        let first_unpivoted = |pivots: &[usize]| {
            (0..k).find(|alpha| !pivots.contains(alpha)).unwrap_or(0)
        };
        let sol = linalg::solve(&adm, &rhs, &mut linalg::structural_zero)
            .map_err(NhError::SingularAdmissibility)?;
        if sol.pivot_cols.len() < k {
            return Err(NhError::SingularAdmissibility(first_unpivoted(
                &sol.pivot_cols,
            )));
        }
        sol.particular
    };

    // accelerations: ytt = W^-1 (lambda B - r)
    let mut accelerations = Vec::with_capacity(m);
    for i in 0..m {
        let mut acc = ScalarExpr::zero();
        for j in 0..m {
            let mut force = r[j].neg();
            for alpha in 0..k {
                force = force.add(&lambda_t[alpha].mul(&b[alpha][j]));
            }
            acc = acc.add(&w_inv[i][j].mul(&force));
        }
        accelerations.push(acc);
    }

    let mut lambda = BTreeMap::new();
    for alpha in 0..k {
        lambda.insert((alpha, 0), lambda_t[alpha].clone());
        for mu in 1..chart.base_dim() {
            lambda.insert((alpha, mu), ScalarExpr::zero());
        }
    }
    let admissibility_det = linalg::det(&adm, &mut linalg::structural_zero);
    Ok(MultiplierSolution {
        lambda,
        accelerations,
        admissibility: adm,
        admissibility_det,
    })
}

/// Result of matching a form against the span of the ideal generators.
#[derive(Clone, Debug)]
pub struct IdealDecomposition {
    /// `(alpha, mu) -> lambda` in `eta = lambda_(alpha mu) dx^mu ^ Phi^alpha`.
    pub lambda: BTreeMap<(usize, usize), ScalarExpr>,
    pub remainder: DiffForm,
    pub exact: bool,
}

/// Scalar-coefficient variant for the degree-(n+1) membership test.
#[derive(Clone, Debug)]
pub struct SpanDecomposition {
    pub coefficients: Vec<ScalarExpr>,
    pub remainder: DiffForm,
    pub exact: bool,
}

fn decompose_against(
    eta: &DiffForm,
    basis: &[DiffForm],
    zero: &mut impl FnMut(&ScalarExpr) -> bool,
) -> (Vec<ScalarExpr>, DiffForm, bool) {
    let mut monomials = std::collections::BTreeSet::new();
    for f in basis.iter().chain(std::iter::once(eta)) {
        monomials.extend(f.terms().map(|(m, _)| m.clone()));
    }
    // Pivot on the contact-structured monomials (dy, djet factors) first so
    // an inconsistent remainder separates onto the purely horizontal part.
    let rows: Vec<Vec<ScalarExpr>> = monomials
        .iter()
        .rev()
        .map(|m| basis.iter().map(|f| f.coefficient(m)).collect())
        .collect();
    let rhs: Vec<ScalarExpr> = monomials
        .iter()
        .rev()
        .map(|m| eta.coefficient(m))
        .collect();
    let (sol, _consistent) = linalg::solve_lenient(&rows, &rhs, zero);
    let mut remainder = eta.clone();
    for (coeff, f) in sol.particular.iter().zip(basis) {
        remainder = remainder.sub(&f.scale(coeff));
    }
    let exact = remainder.is_zero()
        || remainder
            .terms()
            .all(|(_, c)| zero(&c.clone()));
    (sol.particular, remainder, exact)
}

/// Solve `eta = lambda_(alpha mu) dx^mu ^ Phi^alpha` (degree `n + 2`) by
/// matching canonical coefficients; exact remainder zero on success.
pub fn ideal_decompose(eta: &DiffForm, c: &ConstraintSet) -> Result<IdealDecomposition, NhError> {
    let chart = c.chart();
    let mut basis = Vec::new();
    let mut keys = Vec::new();
    for (alpha, phi_form) in c.forms().iter().enumerate() {
        for mu in 0..chart.base_dim() {
            basis.push(DiffForm::covector(Covector::Dx(mu as u8)).wedge(phi_form));
            keys.push((alpha, mu));
        }
    }
    let (coeffs, remainder, exact) =
        decompose_against(eta, &basis, &mut linalg::structural_zero);
    let lambda = keys.into_iter().zip(coeffs).collect();
    Ok(IdealDecomposition {
        lambda,
        remainder,
        exact,
    })
}

/// Match `eta` (degree `n + 1`) against the span of the `Phi^alpha` with
/// scalar coefficients.
pub fn span_decompose(eta: &DiffForm, c: &ConstraintSet) -> Result<SpanDecomposition, NhError> {
    let (coefficients, remainder, exact) =
        decompose_against(eta, c.forms(), &mut linalg::structural_zero);
    Ok(SpanDecomposition {
        coefficients,
        remainder,
        exact,
    })
}

/// Verdict of the constrained De Donder–Weyl check along the constraint
/// submanifold: ideal membership of the residual and tangency of the
/// horizontal distribution.
#[derive(Clone, Debug)]
pub struct ConstrainedDdwVerdict {
    pub ideal_ok: bool,
    /// Multipliers in the convention of the constrained field equations.
    pub lambda: BTreeMap<(usize, usize), ScalarExpr>,
    pub ideal_remainder: DiffForm,
    pub tangency_ok: bool,
    pub tangency_residuals: Vec<ScalarExpr>,
}

impl ConstrainedDdwVerdict {
    pub fn passed(&self) -> bool {
        self.ideal_ok && self.tangency_ok
    }
}

/// Check `i_h Omega_L - n Omega_L` restricted to the submanifold for ideal
/// membership, and `H_mu(phi^alpha) = 0` on it. With `k = 0` this reduces
/// to the unconstrained residual-zero verdict.
pub fn constrained_ddw_check(
    h: &Connection,
    l: &Lagrangian,
    c: &ConstraintSet,
    rng: &mut impl Rng,
) -> Result<ConstrainedDdwVerdict, NhError> {
    let chart = l.chart();
    let residual = c.restrict_form(&ddw_residual(h, l)?)?;
    let mut oracle = |e: &ScalarExpr| {
        if e.is_zero() {
            return true;
        }
        if !e.has_analytic_atoms() {
            return false;
        }
        let mut r = rand_chacha::ChaCha8Rng::from_rng(rng);
        e.is_zero_oracle(&mut r)
    };
    use rand::SeedableRng;

    let mut basis = Vec::new();
    let mut keys = Vec::new();
    for (alpha, phi_form) in c.forms().iter().enumerate() {
        let restricted = c.restrict_form(phi_form)?;
        for mu in 0..chart.base_dim() {
            basis.push(DiffForm::covector(Covector::Dx(mu as u8)).wedge(&restricted));
            keys.push((alpha, mu));
        }
    }
    let (coeffs, remainder, exact) = decompose_against(&residual, &basis, &mut oracle);
    // flip to the sign convention of the constrained field equations
    let lambda: BTreeMap<(usize, usize), ScalarExpr> = keys
        .into_iter()
        .zip(coeffs.iter().map(ScalarExpr::neg))
        .collect();

    let mut tangency_residuals = Vec::new();
    let mut tangency_ok = true;
    for phi in c.phis() {
        for mu in 0..chart.base_dim() {
            let g = c.restrict(&h.h_derivative(phi, mu))?;
            if !oracle(&g) {
                tangency_ok = false;
            }
            tangency_residuals.push(g);
        }
    }
    Ok(ConstrainedDdwVerdict {
        ideal_ok: exact,
        lambda,
        ideal_remainder: remainder,
        tangency_ok,
        tangency_residuals,
    })
}

/// Reserved parameter for the undetermined second coefficients of a
/// solution connection: `Sig[field;mu]` pairs `G^a_(t mu) = G^a_(mu t)`
/// for spatial `mu`, and `Sig[field;mu,nu]` the spatial-spatial slots.
pub fn sigma_param_name(chart: &JetChart, a: usize, mu: usize, nu: usize) -> String {
    let (mu, nu) = if mu <= nu { (mu, nu) } else { (nu, mu) };
    if mu == 0 {
        format!(
            "Sig[{};{}]",
            chart.fibre_names()[a],
            chart.base_names()[nu]
        )
    } else {
        format!(
            "Sig[{};{},{}]",
            chart.fibre_names()[a],
            chart.base_names()[mu],
            chart.base_names()[nu]
        )
    }
}

/// A semi-holonomic connection solving the constrained De Donder–Weyl
/// equations, parametric in the freedom the equations leave open.
#[derive(Clone, Debug)]
pub struct SolutionConnection {
    pub connection: Connection,
    /// Multipliers of the constrained field equations under the same
    /// parametrization.
    pub lambda: BTreeMap<(usize, usize), ScalarExpr>,
    /// Names of the remaining free `Sig` symbols.
    pub free_symbols: Vec<String>,
}

/// Build a solution connection from the eliminated multipliers: the time
/// accelerations fill `G^a_(tt)`, second jets map to symmetric `Sig`
/// symbols, and the spatial tangency conditions fix the leading-slot
/// symbols.
pub fn solution_connection(l: &Lagrangian, c: &ConstraintSet) -> Result<SolutionConnection, NhError> {
    let chart = l.chart().clone();
    let m = chart.fibre_dim();
    let nb = chart.base_dim();
    let elim = eliminate_multipliers(l, c)?;

    // second jets (other than tt) -> Sig symbols
    let mut jet_map: BTreeMap<Symbol, ScalarExpr> = BTreeMap::new();
    for a in 0..m {
        for mu in 0..nb {
            for nu in mu..nb {
                if mu == 0 && nu == 0 {
                    continue;
                }
                jet_map.insert(
                    Symbol::Coord(Coord::jet2(a as u8, mu as u8, nu as u8)),
                    ScalarExpr::param(&sigma_param_name(&chart, a, mu, nu)),
                );
            }
        }
    }

    // coefficient table with Sig symbols everywhere except the tt column
    let mut gamma = vec![vec![vec![ScalarExpr::zero(); nb]; nb]; m];
    for a in 0..m {
        gamma[a][0][0] = elim.accelerations[a].substitute(&jet_map)?;
        for mu in 0..nb {
            for nu in 0..nb {
                if mu == 0 && nu == 0 {
                    continue;
                }
                if mu == 0 || nu == 0 {
                    let spatial = mu.max(nu);
                    gamma[a][mu][nu] =
                        ScalarExpr::param(&sigma_param_name(&chart, a, 0, spatial));
                } else {
                    gamma[a][mu][nu] = ScalarExpr::param(&sigma_param_name(&chart, a, mu, nu));
                }
            }
        }
    }

    // spatial tangency: solve H_mu(phi^alpha) = 0 for the leading-slot
    // symbols
    let mut solved: BTreeMap<Symbol, ScalarExpr> = BTreeMap::new();
    if c.k() > 0 && nb > 1 {
        let mut unknowns: Vec<String> = Vec::new();
        for &lead in c.leading() {
            let Coord::Jet(a, nu) = lead else {
                continue;
            };
            for mu in 1..nb {
                let name = sigma_param_name(&chart, a as usize, mu, nu as usize);
                if !unknowns.contains(&name) {
                    unknowns.push(name);
                }
            }
        }
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for phi in c.phis() {
            for mu in 1..nb {
                // H_mu(phi) with the gamma table above
                let mut g = phi.partial(Coord::Base(mu as u8));
                for a in 0..m {
                    g = g.add(
                        &ScalarExpr::coord(Coord::Jet(a as u8, mu as u8))
                            .mul(&phi.partial(Coord::Fibre(a as u8))),
                    );
                    for nu in 0..nb {
                        let d = phi.partial(Coord::Jet(a as u8, nu as u8));
                        if !d.is_zero() {
                            g = g.add(&gamma[a][mu][nu].mul(&d));
                        }
                    }
                }
                let zeroed: BTreeMap<Symbol, ScalarExpr> = unknowns
                    .iter()
                    .map(|u| (Symbol::Param(u.clone()), ScalarExpr::zero()))
                    .collect();
                rhs.push(g.substitute(&zeroed)?.neg());
                rows.push(
                    unknowns
                        .iter()
                        .map(|u| g.partial_param(u))
                        .collect::<Vec<_>>(),
                );
            }
        }
        let sol = linalg::solve(&rows, &rhs, &mut linalg::structural_zero)
            .map_err(|_| NhError::SingularLeadingJacobian)?;
        for (u, e) in unknowns.iter().zip(sol.particular) {
            solved.insert(Symbol::Param(u.clone()), e);
        }
    }

    // carry the solved symbols through the whole table and the multipliers
    let mut free_symbols = Vec::new();
    for a in 0..m {
        for mu in 0..nb {
            for nu in 0..nb {
                gamma[a][mu][nu] = gamma[a][mu][nu].substitute(&solved)?;
                for p in gamma[a][mu][nu].free_params() {
                    if p.starts_with("Sig[") && !free_symbols.contains(&p) {
                        free_symbols.push(p);
                    }
                }
            }
        }
    }
    let lambda: BTreeMap<(usize, usize), ScalarExpr> = elim
        .lambda
        .iter()
        .map(|(&k2, v)| {
            let e = v.substitute(&jet_map)?.substitute(&solved)?;
            Ok((k2, e))
        })
        .collect::<Result<_, NhError>>()?;

    Ok(SolutionConnection {
        connection: Connection::semi_holonomic(chart, gamma),
        lambda,
        free_symbols,
    })
}
