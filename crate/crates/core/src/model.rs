//! The model file: a sectioned plain-text format declaring the chart, the
//! Lagrangian density, constraints, symmetry generators and sections,
//! grid parameters, and initial data.
//!
//! ```text
//! [base]
//! coords = t, x
//! [fields]
//! names = y
//! [lagrangian]
//! L = (y_t^2 - y_x^2)/2
//! [symmetry]
//! generator shift = 1
//! [grid]
//! resolution = 128
//! dt = 1e-3
//! steps = 1000
//! [initial]
//! y = sin(2*pi*x)
//! y_t = 0
//! ```

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cauchy::PI_PARAM;
use crate::chart::{Coord, JetChart};
use crate::expr::parse::{parse_expr, ParseCtx};
use crate::expr::ScalarExpr;
use crate::forms::{BasisVector, VectorField};
use crate::nonholonomic::{ConstraintSet, NhError};
use crate::symmetry::{section_lift, GESection, InfinitesimalAction, SymmetryError};
use crate::variational::{Lagrangian, VariationalError};

/// A located problem in a model file.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {col}: {msg}")]
pub struct ModelIssue {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

fn issue(line: usize, col: usize, msg: impl Into<String>) -> ModelIssue {
    ModelIssue {
        line,
        col,
        msg: msg.into(),
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model file has problems:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Issues(Vec<ModelIssue>),
    #[error(transparent)]
    Variational(#[from] VariationalError),
    #[error(transparent)]
    Nonholonomic(#[from] NhError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error("model declares no [grid] / [initial] sections; nothing to simulate")]
    NoSimulationData,
    #[error("initial data violates the constraints: max |phi| = {0:.3e}")]
    InitialConstraintViolation(f64),
}

/// Grid and stepping parameters from the `[grid]` section.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridParams {
    pub resolution: usize,
    pub dt: f64,
    pub steps: usize,
    pub store_every: usize,
}

/// Parsed, name-resolved model file.
#[derive(Clone, Debug)]
pub struct ModelFile {
    pub chart: JetChart,
    pub lagrangian_density: ScalarExpr,
    /// Base index whose diagonal Hessian block the solver eliminates.
    pub designated: Option<usize>,
    pub constraint_names: Vec<String>,
    pub constraint_exprs: Vec<ScalarExpr>,
    pub leading: Option<Vec<Coord>>,
    pub generators: Vec<(String, VectorField)>,
    pub sections: Vec<(String, Vec<ScalarExpr>)>,
    pub grid: Option<GridParams>,
    /// Initial expressions per field and per velocity, spatial coords only.
    pub initial_fields: Vec<Option<ScalarExpr>>,
    pub initial_velocities: Vec<Option<ScalarExpr>>,
}

struct RawSection {
    name: String,
    line: usize,
    entries: Vec<(usize, String, String)>, // (line, key, value)
}

fn split_sections(text: &str) -> Result<Vec<RawSection>, Vec<ModelIssue>> {
    let mut sections: Vec<RawSection> = Vec::new();
    let mut issues = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            sections.push(RawSection {
                name: name.trim().to_string(),
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let Some(eq) = line.find('=') else {
            issues.push(issue(line_no, 1, "expected `key = value` or `[section]`"));
            continue;
        };
        let key = line[..eq].trim().to_string();
        let value = line[eq + 1..].trim().to_string();
        match sections.last_mut() {
            Some(s) => s.entries.push((line_no, key, value)),
            None => issues.push(issue(line_no, 1, "entry before any [section] header")),
        }
    }
    if issues.is_empty() {
        Ok(sections)
    } else {
        Err(issues)
    }
}

fn parse_names(value: &str) -> Vec<String> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect()
}

/// Parse a model file into a fully resolved [`ModelFile`], or report every
/// located problem found.
pub fn parse_model(text: &str) -> Result<ModelFile, Vec<ModelIssue>> {
    let sections = split_sections(text)?;
    let mut issues = Vec::new();

    let find = |name: &str| sections.iter().find(|s| s.name == name);
    for s in &sections {
        if !matches!(
            s.name.as_str(),
            "base" | "fields" | "lagrangian" | "constraints" | "symmetry" | "grid" | "initial"
        ) {
            issues.push(issue(s.line, 1, format!("unknown section `[{}]`", s.name)));
        }
    }

    let base_names = match find("base").and_then(|s| {
        s.entries
            .iter()
            .find(|(_, k, _)| k == "coords")
            .map(|(l, _, v)| (*l, parse_names(v)))
    }) {
        Some((_, names)) if !names.is_empty() => names,
        _ => {
            issues.push(issue(1, 1, "missing `[base]` section with `coords = ...`"));
            return Err(issues);
        }
    };
    let fibre_names = match find("fields").and_then(|s| {
        s.entries
            .iter()
            .find(|(_, k, _)| k == "names")
            .map(|(l, _, v)| (*l, parse_names(v)))
    }) {
        Some((_, names)) if !names.is_empty() => names,
        _ => {
            issues.push(issue(1, 1, "missing `[fields]` section with `names = ...`"));
            return Err(issues);
        }
    };
    let chart = match JetChart::new(base_names, fibre_names) {
        Ok(c) => c,
        Err(e) => {
            issues.push(issue(find("base").map(|s| s.line).unwrap_or(1), 1, e.to_string()));
            return Err(issues);
        }
    };
    let m = chart.fibre_dim();

    let params = vec![PI_PARAM.to_string()];
    let ctx = ParseCtx {
        chart: &chart,
        params: &params,
        allow_free_params: false,
    };
    let parse_at = |line: usize, src: &str, issues: &mut Vec<ModelIssue>| -> Option<ScalarExpr> {
        match parse_expr(src, &ctx) {
            Ok(e) => Some(e),
            Err(e) => {
                issues.push(issue(line, e.col, e.msg));
                None
            }
        }
    };

    // [lagrangian]
    let mut density = None;
    let mut saw_density = false;
    let mut designated = None;
    if let Some(s) = find("lagrangian") {
        for (line, key, value) in &s.entries {
            match key.as_str() {
                "L" => {
                    saw_density = true;
                    if let Some(e) = parse_at(*line, value, &mut issues) {
                        if e.max_jet_order() > 1 {
                            issues.push(issue(
                                *line,
                                1,
                                "Lagrangian density must be first order (no second jets)",
                            ));
                        } else {
                            density = Some(e);
                        }
                    }
                }
                "designated" => match chart.resolve(value) {
                    Ok(Coord::Base(mu)) => designated = Some(mu as usize),
                    _ => issues.push(issue(*line, 1, "designated must name a base coordinate")),
                },
                other => issues.push(issue(*line, 1, format!("unknown key `{other}`"))),
            }
        }
    }
    let lagrangian_density = match density {
        Some(d) => d,
        None => {
            if !saw_density {
                issues.push(issue(1, 1, "missing `[lagrangian]` section with `L = ...`"));
            }
            return Err(issues);
        }
    };

    // [constraints]
    let mut constraint_names = Vec::new();
    let mut constraint_exprs = Vec::new();
    let mut leading = None;
    if let Some(s) = find("constraints") {
        for (line, key, value) in &s.entries {
            if key == "leading" {
                let mut coords = Vec::new();
                for name in parse_names(value) {
                    match chart.resolve(&name) {
                        Ok(c @ Coord::Jet(_, _)) => coords.push(c),
                        _ => issues.push(issue(
                            *line,
                            1,
                            format!("leading entry `{name}` is not a first-jet coordinate"),
                        )),
                    }
                }
                leading = Some(coords);
            } else if let Some(e) = parse_at(*line, value, &mut issues) {
                if e.max_jet_order() > 1 {
                    issues.push(issue(*line, 1, "constraints must be first order"));
                } else {
                    constraint_names.push(key.clone());
                    constraint_exprs.push(e);
                }
            }
        }
    }

    // [symmetry]
    let mut generators = Vec::new();
    let mut sections_decl = Vec::new();
    if let Some(s) = find("symmetry") {
        for (line, key, value) in &s.entries {
            let mut words = key.split_whitespace();
            match (words.next(), words.next(), words.next()) {
                (Some("generator"), Some(name), None) => {
                    let comps: Vec<&str> = value.split(',').map(str::trim).collect();
                    if comps.len() != m {
                        issues.push(issue(
                            *line,
                            1,
                            format!("generator needs {m} components, got {}", comps.len()),
                        ));
                        continue;
                    }
                    let mut v = VectorField::zero();
                    let mut ok = true;
                    for (a, comp) in comps.iter().enumerate() {
                        match parse_at(*line, comp, &mut issues) {
                            Some(e) => {
                                if e.max_jet_order() > 0 {
                                    issues.push(issue(
                                        *line,
                                        1,
                                        "generator components must not involve jets",
                                    ));
                                    ok = false;
                                } else {
                                    v.set(BasisVector::Dy(a as u8), e);
                                }
                            }
                            None => ok = false,
                        }
                    }
                    if ok {
                        generators.push((name.to_string(), v));
                    }
                }
                (Some("section"), Some(name), None) => {
                    let comps: Vec<&str> = value.split(',').map(str::trim).collect();
                    let mut coeffs = Vec::new();
                    for comp in &comps {
                        if let Some(e) = parse_at(*line, comp, &mut issues) {
                            coeffs.push(e);
                        }
                    }
                    sections_decl.push((name.to_string(), coeffs));
                }
                _ => issues.push(issue(
                    *line,
                    1,
                    "expected `generator <name> = ...` or `section <name> = ...`",
                )),
            }
        }
    }
    for (name, coeffs) in &sections_decl {
        if coeffs.len() != generators.len() {
            issues.push(issue(
                find("symmetry").map(|s| s.line).unwrap_or(1),
                1,
                format!(
                    "section `{name}` needs {} coefficients, got {}",
                    generators.len(),
                    coeffs.len()
                ),
            ));
        }
    }

    // [grid]
    let mut grid = None;
    if let Some(s) = find("grid") {
        let mut resolution = None;
        let mut dt = None;
        let mut steps = None;
        let mut store_every = 1usize;
        for (line, key, value) in &s.entries {
            match key.as_str() {
                "resolution" | "N" => match value.parse::<usize>() {
                    Ok(v) => resolution = Some(v),
                    Err(_) => issues.push(issue(*line, 1, "resolution must be an integer")),
                },
                "dt" => match value.parse::<f64>() {
                    Ok(v) if v > 0.0 => dt = Some(v),
                    _ => issues.push(issue(*line, 1, "dt must be a positive number")),
                },
                "steps" => match value.parse::<usize>() {
                    Ok(v) if v > 0 => steps = Some(v),
                    _ => issues.push(issue(*line, 1, "steps must be a positive integer")),
                },
                "store_every" => match value.parse::<usize>() {
                    Ok(v) if v > 0 => store_every = v,
                    _ => issues.push(issue(*line, 1, "store_every must be a positive integer")),
                },
                other => issues.push(issue(*line, 1, format!("unknown key `{other}`"))),
            }
        }
        match (resolution, dt, steps) {
            (Some(resolution), Some(dt), Some(steps)) => {
                if chart.n() > 0 && resolution < 3 {
                    issues.push(issue(s.line, 1, "resolution must be at least 3"));
                } else {
                    grid = Some(GridParams {
                        resolution: resolution.max(1),
                        dt,
                        steps,
                        store_every,
                    });
                }
            }
            _ => issues.push(issue(
                s.line,
                1,
                "[grid] needs `resolution`, `dt` and `steps`",
            )),
        }
    }

    // [initial]
    let mut initial_fields = vec![None; m];
    let mut initial_velocities = vec![None; m];
    if let Some(s) = find("initial") {
        for (line, key, value) in &s.entries {
            let target = match chart.resolve(key) {
                Ok(Coord::Fibre(a)) => Some((a as usize, false)),
                Ok(Coord::Jet(a, 0)) => Some((a as usize, true)),
                _ => None,
            };
            let Some((a, is_velocity)) = target else {
                issues.push(issue(
                    *line,
                    1,
                    format!("initial entry `{key}` must be a field or its time jet"),
                ));
                continue;
            };
            if let Some(e) = parse_at(*line, value, &mut issues) {
                let spatial_only = e.free_coords().iter().all(|c| {
                    matches!(c, Coord::Base(mu) if *mu >= 1)
                });
                if !spatial_only {
                    issues.push(issue(
                        *line,
                        1,
                        "initial data may depend on the spatial coordinates only",
                    ));
                    continue;
                }
                if is_velocity {
                    initial_velocities[a] = Some(e);
                } else {
                    initial_fields[a] = Some(e);
                }
            }
        }
        for a in 0..m {
            for (tbl, what) in [(&initial_fields, "value"), (&initial_velocities, "time jet")] {
                if tbl[a].is_none() {
                    issues.push(issue(
                        s.line,
                        1,
                        format!(
                            "missing initial {what} for field `{}`",
                            chart.fibre_names()[a]
                        ),
                    ));
                }
            }
        }
    }

    if !issues.is_empty() {
        return Err(issues);
    }
    Ok(ModelFile {
        chart,
        lagrangian_density,
        designated,
        constraint_names,
        constraint_exprs,
        leading,
        generators,
        sections: sections_decl,
        grid,
        initial_fields,
        initial_velocities,
    })
}

/// Canonical text rendering; `parse(render(m))` resolves to the same model.
pub fn render_model(model: &ModelFile) -> String {
    let chart = &model.chart;
    let mut out = String::new();
    out.push_str("[base]\ncoords = ");
    out.push_str(&chart.base_names().join(", "));
    out.push_str("\n\n[fields]\nnames = ");
    out.push_str(&chart.fibre_names().join(", "));
    out.push_str("\n\n[lagrangian]\nL = ");
    out.push_str(&model.lagrangian_density.render(chart));
    if let Some(mu) = model.designated {
        out.push_str(&format!("\ndesignated = {}", chart.base_names()[mu]));
    }
    out.push('\n');
    if !model.constraint_exprs.is_empty() || model.leading.is_some() {
        out.push_str("\n[constraints]\n");
        for (name, e) in model.constraint_names.iter().zip(&model.constraint_exprs) {
            out.push_str(&format!("{name} = {}\n", e.render(chart)));
        }
        if let Some(leading) = &model.leading {
            let names: Vec<String> = leading.iter().map(|&c| chart.coord_name(c)).collect();
            out.push_str(&format!("leading = {}\n", names.join(", ")));
        }
    }
    if !model.generators.is_empty() {
        out.push_str("\n[symmetry]\n");
        for (name, gen) in &model.generators {
            let comps: Vec<String> = (0..chart.fibre_dim())
                .map(|a| gen.component(BasisVector::Dy(a as u8)).render(chart))
                .collect();
            out.push_str(&format!("generator {name} = {}\n", comps.join(", ")));
        }
        for (name, coeffs) in &model.sections {
            let comps: Vec<String> = coeffs.iter().map(|c| c.render(chart)).collect();
            out.push_str(&format!("section {name} = {}\n", comps.join(", ")));
        }
    }
    if let Some(grid) = &model.grid {
        out.push_str(&format!(
            "\n[grid]\nresolution = {}\ndt = {}\nsteps = {}\nstore_every = {}\n",
            grid.resolution, grid.dt, grid.steps, grid.store_every
        ));
    }
    if model.initial_fields.iter().any(Option::is_some) {
        out.push_str("\n[initial]\n");
        for a in 0..chart.fibre_dim() {
            if let Some(e) = &model.initial_fields[a] {
                out.push_str(&format!("{} = {}\n", chart.fibre_names()[a], e.render(chart)));
            }
            if let Some(e) = &model.initial_velocities[a] {
                out.push_str(&format!(
                    "{}_{} = {}\n",
                    chart.fibre_names()[a],
                    chart.base_names()[0],
                    e.render(chart)
                ));
            }
        }
    }
    out
}

/// A model with its symbolic objects built and validated.
pub struct ResolvedModel {
    pub model: ModelFile,
    pub lagrangian: Lagrangian,
    pub constraints: ConstraintSet,
    pub action: InfinitesimalAction,
    pub sections: Vec<GESection>,
}

/// Build the symbolic objects from a parsed model. The seed feeds the
/// randomized leading-jet selection and independence checks.
pub fn resolve(model: ModelFile, seed: u64) -> Result<ResolvedModel, ModelError> {
    let lagrangian = Lagrangian::new(model.chart.clone(), model.lagrangian_density.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x006e_6866_6965_6c64); // "nhfield"
    let constraints = ConstraintSet::new(
        model.chart.clone(),
        model.constraint_exprs.clone(),
        model.leading.clone(),
        &mut rng,
    )?;
    let action = InfinitesimalAction::new(model.chart.clone(), model.generators.clone(), None)?;
    let sections = model
        .sections
        .iter()
        .map(|(name, coeffs)| section_lift(&action, name, coeffs.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ResolvedModel {
        model,
        lagrangian,
        constraints,
        action,
        sections,
    })
}

impl ResolvedModel {
    pub fn chart(&self) -> &JetChart {
        &self.model.chart
    }

    /// Sample the initial data on the grid; for constrained models the
    /// samples must satisfy the constraints within `tol`.
    pub fn initial_state(
        &self,
        slicing: &crate::cauchy::Slicing,
        tol: f64,
    ) -> Result<crate::cauchy::CauchyState, ModelError> {
        let grid_needed = self
            .model
            .initial_fields
            .iter()
            .chain(&self.model.initial_velocities)
            .any(Option::is_none);
        if grid_needed {
            return Err(ModelError::NoSimulationData);
        }
        let chart = self.chart();
        let m = chart.fibre_dim();
        let layout = crate::cauchy::SlotLayout::new(chart);
        let mut fields = Vec::with_capacity(m);
        let mut velocities = Vec::with_capacity(m);
        let mut slots = vec![0.0; layout.len()];
        for a in 0..m {
            let fe = crate::cauchy::compile_expr(
                self.model.initial_fields[a].as_ref().unwrap(),
                &layout,
            )
            .map_err(|_| ModelError::NoSimulationData)?;
            let ve = crate::cauchy::compile_expr(
                self.model.initial_velocities[a].as_ref().unwrap(),
                &layout,
            )
            .map_err(|_| ModelError::NoSimulationData)?;
            let mut frow = Vec::with_capacity(slicing.node_count());
            let mut vrow = Vec::with_capacity(slicing.node_count());
            for node in 0..slicing.node_count() {
                for (i, x) in slicing.node_coords(node).iter().enumerate() {
                    slots[layout.slot(Coord::Base(i as u8 + 1))] = *x;
                }
                frow.push(fe.eval(&slots));
                vrow.push(ve.eval(&slots));
            }
            fields.push(frow);
            velocities.push(vrow);
        }
        let state = crate::cauchy::CauchyState::new(slicing, 0.0, fields, velocities);
        if self.constraints.k() > 0 {
            let nm = crate::cauchy::NumericModel::new(&self.lagrangian, &self.constraints, *slicing)
                .map_err(|_| ModelError::NoSimulationData)?;
            let defect = nm
                .constraint_defect(&state)
                .map_err(|_| ModelError::NoSimulationData)?;
            if defect > tol {
                return Err(ModelError::InitialConstraintViolation(defect));
            }
        }
        Ok(state)
    }

    /// Deterministic rational test point for regularity verdicts.
    pub fn regularity_point(&self, seed: u64) -> BTreeMap<crate::expr::Symbol, crate::expr::Value> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0072_6567);
        use rand::Rng;
        self.chart()
            .coords_up_to(1)
            .into_iter()
            .map(|c| {
                (
                    crate::expr::Symbol::Coord(c),
                    crate::expr::Value::rat(rng.random_range(-9..=9), rng.random_range(1..=4)),
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const WAVE: &str = "\
# wave equation on the circle
[base]
coords = t, x

[fields]
names = y

[lagrangian]
L = (y_t^2 - y_x^2)/2

[symmetry]
generator shift = 1

[grid]
resolution = 128
dt = 1e-3
steps = 1000

[initial]
y = sin(2*pi*x)
y_t = 0
";

    const NHFIELD3: &str = "\
[base]
coords = t, x

[fields]
names = y1, y2, y3

[lagrangian]
L = (y1_t^2 - y1_x^2 + y2_t^2 - y2_x^2 + y3_t^2 - y3_x^2)/2

[constraints]
phi = y3_t - y2*y1_t

[symmetry]
generator g1 = 1, 0, 0
generator g3 = 0, 0, 1
section s = 1, y2

[grid]
resolution = 64
dt = 2e-3
steps = 1000

[initial]
y1 = sin(2*pi*x)
y1_t = cos(2*pi*x)/2
y2 = 1/2 + cos(2*pi*x)/4
y2_t = sin(2*pi*x)/3
y3 = cos(2*pi*x)/5
y3_t = (1/2 + cos(2*pi*x)/4)*(cos(2*pi*x)/2)
";

    #[test]
    fn parses_wave() {
        let m = parse_model(WAVE).unwrap();
        assert_eq!(m.chart.fibre_dim(), 1);
        assert!(m.constraint_exprs.is_empty());
        assert_eq!(m.generators.len(), 1);
        assert_eq!(m.grid.unwrap().resolution, 128);
        let resolved = resolve(m, 42).unwrap();
        assert_eq!(resolved.constraints.k(), 0);
    }

    #[test]
    fn parses_constrained_model_with_auto_leading() {
        let m = parse_model(NHFIELD3).unwrap();
        let resolved = resolve(m, 42).unwrap();
        assert_eq!(resolved.constraints.k(), 1);
        assert_eq!(resolved.constraints.leading(), &[Coord::Jet(2, 0)]);
        assert_eq!(resolved.sections.len(), 1);
    }

    #[test]
    fn second_jet_in_lagrangian_is_located() {
        let bad = WAVE.replace("L = (y_t^2 - y_x^2)/2", "L = y_tt");
        let issues = parse_model(&bad).unwrap_err();
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].line, 9);
        assert!(issues[0].msg.contains("first order"));
    }

    #[test]
    fn unknown_name_is_located() {
        let bad = WAVE.replace("y = sin(2*pi*x)", "y = sin(2*pi*zz)");
        let issues = parse_model(&bad).unwrap_err();
        assert_eq!(issues[0].line, 20);
        assert!(issues[0].msg.contains("zz"));
    }

    #[test]
    fn render_round_trips() {
        for src in [WAVE, NHFIELD3] {
            let m = parse_model(src).unwrap();
            let rendered = render_model(&m);
            let again = parse_model(&rendered).unwrap();
            assert_eq!(m.lagrangian_density, again.lagrangian_density);
            assert_eq!(m.constraint_exprs, again.constraint_exprs);
            assert_eq!(m.generators, again.generators);
            assert_eq!(m.sections, again.sections);
            assert_eq!(m.grid, again.grid);
            assert_eq!(m.initial_fields, again.initial_fields);
            assert_eq!(m.initial_velocities, again.initial_velocities);
            // idempotent rendering
            assert_eq!(rendered, render_model(&again));
        }
    }

    #[test]
    fn initial_state_checks_constraints() {
        let m = parse_model(NHFIELD3).unwrap();
        let resolved = resolve(m, 42).unwrap();
        let slicing = crate::cauchy::Slicing::new(1, 64);
        let state = resolved.initial_state(&slicing, 1e-9).unwrap();
        assert_eq!(state.fields.len(), 3);

        // breaking the initial product violates the constraint at load
        let bad = NHFIELD3.replace(
            "y3_t = (1/2 + cos(2*pi*x)/4)*(cos(2*pi*x)/2)",
            "y3_t = 1",
        );
        let resolved = resolve(parse_model(&bad).unwrap(), 42).unwrap();
        assert!(matches!(
            resolved.initial_state(&slicing, 1e-9),
            Err(ModelError::InitialConstraintViolation(_))
        ));
    }
}
