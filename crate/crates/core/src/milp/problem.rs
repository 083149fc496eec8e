use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|(v, a)| a * x[v.0]).sum()
    }

    /// How far `x` is from satisfying this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A maximization problem over bounded continuous and binary variables.
#[derive(Clone, Debug, Default)]
pub struct MilpProblem {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<(VarId, f64)>,
}

impl MilpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, kind: VarKind) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, 1.0, VarKind::Binary)
    }

    /// Adds a row; repeated variables in `coeffs` are merged.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) {
        let mut merged: Vec<(VarId, f64)> = Vec::new();
        for (v, a) in coeffs {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(slot) => slot.1 += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|(_, a)| *a != 0.0);
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs: merged,
            sense,
            rhs,
        });
    }

    pub fn set_objective(&mut self, coeffs: impl IntoIterator<Item = (VarId, f64)>) {
        self.objective = coeffs.into_iter().collect();
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn num_continuous(&self) -> usize {
        self.num_vars() - self.num_binaries()
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn set_var_bounds(&mut self, id: VarId, lower: f64, upper: f64) {
        self.vars[id.0].lower = lower;
        self.vars[id.0].upper = upper;
    }

    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.vars.iter().enumerate() {
            if !(v.lower.is_finite() && v.upper.is_finite()) {
                return Err(Error::Solver(format!(
                    "variable {i} ({}) has unbounded domain [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if v.lower > v.upper {
                return Err(Error::Solver(format!(
                    "variable {i} ({}) has empty domain [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
        }
        let n = self.vars.len();
        let refs_ok = |c: &[(VarId, f64)]| c.iter().all(|(v, a)| v.0 < n && a.is_finite());
        for c in &self.constraints {
            if !refs_ok(&c.coeffs) || !c.rhs.is_finite() {
                return Err(Error::Solver(format!("malformed constraint {}", c.name)));
            }
        }
        if !refs_ok(&self.objective) {
            return Err(Error::Solver("malformed objective".into()));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|(v, c)| c * x[v.0]).sum()
    }

    /// Largest bound, row or integrality violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &val) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - val).max(val - v.upper);
            if v.kind == VarKind::Binary {
                worst = worst.max(val.min(1.0 - val).max(0.0));
            }
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(x));
        }
        worst
    }

    /// Renders the problem in CPLEX LP text format.
    pub fn to_lp_text(&self) -> String {
        let name = |v: VarId| sanitize(&self.vars[v.0].name, v.0);
        let mut out = String::from("\\ counterexample generation problem\nMaximize\n obj:");
        write_terms(&mut out, &self.objective, &name);
        out.push_str("\nSubject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let _ = write!(out, " {}:", sanitize(&c.name, i));
            write_terms(&mut out, &c.coeffs, &name);
            let op = match c.sense {
                Sense::Le => "<=",
                Sense::Eq => "=",
                Sense::Ge => ">=",
            };
            let _ = writeln!(out, " {op} {}", fmt_num(c.rhs));
        }
        out.push_str("Bounds\n");
        for (i, v) in self.vars.iter().enumerate() {
            let _ = writeln!(
                out,
                " {} <= {} <= {}",
                fmt_num(v.lower),
                name(VarId(i)),
                fmt_num(v.upper)
            );
        }
        let bins: Vec<String> = (0..self.vars.len())
            .filter(|&i| self.vars[i].kind == VarKind::Binary)
            .map(|i| name(VarId(i)))
            .collect();
        if !bins.is_empty() {
            out.push_str("Binaries\n");
            for b in bins {
                let _ = writeln!(out, " {b}");
            }
        }
        out.push_str("End\n");
        out
    }
}

fn sanitize(name: &str, idx: usize) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if clean.is_empty() || clean.starts_with(|c: char| c.is_ascii_digit()) {
        format!("v{idx}_{clean}")
    } else {
        clean
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:.17e}")
}

fn write_terms(out: &mut String, terms: &[(VarId, f64)], name: &impl Fn(VarId) -> String) {
    if terms.is_empty() {
        out.push_str(" 0");
    }
    for (v, a) in terms {
        let sign = if *a < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", fmt_num(a.abs()), name(*v));
    }
}
