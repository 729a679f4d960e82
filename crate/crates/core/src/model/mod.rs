//! Solver-agnostic MIQP intermediate representation and the model builders.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod build;
pub mod lp;
mod witness;

pub use build::*;
pub use witness::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Continuous,
    Binary,
}

/// A decision variable. `None` bounds are infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Sense {
    pub fn token(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }

    /// Amount by which `lhs (sense) rhs` fails; zero when satisfied.
    pub fn violation(self, lhs: f64, rhs: f64) -> f64 {
        match self {
            Sense::Le => (lhs - rhs).max(0.0),
            Sense::Ge => (rhs - lhs).max(0.0),
            Sense::Eq => (lhs - rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    /// (variable index, coefficient)
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticConstraint {
    pub name: String,
    pub linear: Vec<(usize, f64)>,
    /// (i, j, coefficient) for coefficient·v_i·v_j; i = j is a square.
    pub quadratic: Vec<(usize, usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Ordered SOS2 set; the LP weight of each member is its 1-based position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sos2Group {
    pub name: String,
    pub vars: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiqpModel {
    pub variables: Vec<Variable>,
    /// Minimized.
    pub objective: Vec<(usize, f64)>,
    pub linear_constraints: Vec<LinearConstraint>,
    pub quadratic_constraints: Vec<QuadraticConstraint>,
    pub sos2_groups: Vec<Sos2Group>,
    pub metadata: BTreeMap<String, String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Default for MiqpModel {
    fn default() -> Self {
        Self::new()
    }
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl MiqpModel {
    pub fn new() -> Self {
        Self {
            variables: Vec::new(),
            objective: Vec::new(),
            linear_constraints: Vec::new(),
            quadratic_constraints: Vec::new(),
            sos2_groups: Vec::new(),
            metadata: BTreeMap::new(),
            index: HashMap::new(),
        }
    }

    /// Declares a variable and returns its index. Names must be unique.
    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: Option<f64>, upper: Option<f64>) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Ir(format!("variable {name} declared twice")));
        }
        let idx = self.variables.len();
        self.index.insert(name.clone(), idx);
        self.variables.push(Variable { name, kind, lower, upper });
        Ok(idx)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<usize> {
        self.add_var(name, VarKind::Binary, Some(0.0), Some(1.0))
    }

    pub fn add_free(&mut self, name: impl Into<String>) -> Result<usize> {
        self.add_var(name, VarKind::Continuous, None, None)
    }

    /// Adds a linear row, dropping zero coefficients.
    pub fn add_linear(&mut self, name: impl Into<String>, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        let terms = terms.into_iter().filter(|&(_, c)| c != 0.0).collect();
        self.linear_constraints.push(LinearConstraint { name: name.into(), terms, sense, rhs });
    }

    /// Adds a quadratic row, dropping zero coefficients.
    pub fn add_quadratic(
        &mut self,
        name: impl Into<String>,
        linear: Vec<(usize, f64)>,
        quadratic: Vec<(usize, usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) {
        let linear = linear.into_iter().filter(|&(_, c)| c != 0.0).collect();
        let quadratic = quadratic.into_iter().filter(|&(_, _, c)| c != 0.0).collect();
        self.quadratic_constraints.push(QuadraticConstraint { name: name.into(), linear, quadratic, sense, rhs });
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn num_linear(&self) -> usize {
        self.linear_constraints.len()
    }

    pub fn num_quadratic(&self) -> usize {
        self.quadratic_constraints.len()
    }

    pub fn num_sos2(&self) -> usize {
        self.sos2_groups.len()
    }

    /// Structural checks: unique LP-safe names, in-range references, binary
    /// bounds, ordered bounds, finite data, and SOS2 groups over distinct
    /// nonnegative continuous variables.
    pub fn validate(&self) -> Result<()> {
        let nv = self.variables.len();
        let mut seen = HashMap::with_capacity(nv);
        for (i, v) in self.variables.iter().enumerate() {
            if !valid_name(&v.name) {
                return Err(Error::Ir(format!("variable name {:?} is not LP-safe", v.name)));
            }
            if seen.insert(v.name.as_str(), i).is_some() {
                return Err(Error::Ir(format!("variable {} declared twice", v.name)));
            }
            if v.lower.is_some_and(|l| !l.is_finite()) || v.upper.is_some_and(|u| !u.is_finite()) {
                return Err(Error::Ir(format!("variable {} has a non-finite bound", v.name)));
            }
            if let (Some(l), Some(u)) = (v.lower, v.upper) {
                if l > u {
                    return Err(Error::Ir(format!("variable {} has lower {l} > upper {u}", v.name)));
                }
            }
            if v.kind == VarKind::Binary && (v.lower != Some(0.0) || v.upper != Some(1.0)) {
                return Err(Error::Ir(format!("binary {} must have bounds [0, 1]", v.name)));
            }
        }
        let check_terms = |row: &str, terms: &mut dyn Iterator<Item = (usize, f64)>| -> Result<()> {
            for (j, c) in terms {
                if j >= nv {
                    return Err(Error::Ir(format!("{row} references undeclared variable #{j}")));
                }
                if !c.is_finite() {
                    return Err(Error::Ir(format!("{row} has a non-finite coefficient")));
                }
            }
            Ok(())
        };
        let mut row_names = HashMap::new();
        let mut check_row_name = |name: &str| -> Result<()> {
            if !valid_name(name) {
                return Err(Error::Ir(format!("row name {name:?} is not LP-safe")));
            }
            if row_names.insert(name.to_string(), ()).is_some() {
                return Err(Error::Ir(format!("row {name} defined twice")));
            }
            Ok(())
        };
        check_terms("objective", &mut self.objective.iter().copied())?;
        for row in &self.linear_constraints {
            check_row_name(&row.name)?;
            check_terms(&row.name, &mut row.terms.iter().copied())?;
            if !row.rhs.is_finite() {
                return Err(Error::Ir(format!("{} has a non-finite rhs", row.name)));
            }
        }
        for row in &self.quadratic_constraints {
            check_row_name(&row.name)?;
            check_terms(&row.name, &mut row.linear.iter().copied())?;
            check_terms(&row.name, &mut row.quadratic.iter().flat_map(|&(i, j, c)| [(i, c), (j, c)]))?;
            if !row.rhs.is_finite() {
                return Err(Error::Ir(format!("{} has a non-finite rhs", row.name)));
            }
        }
        for g in &self.sos2_groups {
            check_row_name(&g.name)?;
            let mut members = std::collections::HashSet::new();
            for &j in &g.vars {
                let v = self
                    .variables
                    .get(j)
                    .ok_or_else(|| Error::Ir(format!("{} references undeclared variable #{j}", g.name)))?;
                if v.kind != VarKind::Continuous || !v.lower.is_some_and(|l| l >= 0.0) {
                    return Err(Error::Ir(format!("{} member {} must be continuous and nonnegative", g.name, v.name)));
                }
                if !members.insert(j) {
                    return Err(Error::Ir(format!("{} lists {} twice", g.name, v.name)));
                }
            }
        }
        for (key, value) in &self.metadata {
            if !valid_name(key) || value.is_empty() || value.contains(['\n', '\r']) {
                return Err(Error::Ir(format!("metadata entry {key:?} cannot be exported")));
            }
        }
        Ok(())
    }

    fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() == self.variables.len() {
            Ok(())
        } else {
            Err(Error::Dimension { expected: self.variables.len(), got: values.len() })
        }
    }

    /// Every violated item (bound, integrality, row, SOS2 adjacency) whose
    /// violation exceeds `tol`, as (name, amount).
    pub fn violations(&self, values: &[f64], tol: f64) -> Result<Vec<(String, f64)>> {
        self.check_len(values)?;
        let mut out = Vec::new();
        let mut note = |name: &str, amount: f64| {
            if amount > tol || amount.is_nan() {
                out.push((name.to_string(), amount));
            }
        };
        for (v, &x) in self.variables.iter().zip(values) {
            let lo = v.lower.map_or(0.0, |l| (l - x).max(0.0));
            let hi = v.upper.map_or(0.0, |u| (x - u).max(0.0));
            note(&v.name, lo.max(hi));
            if v.kind == VarKind::Binary {
                note(&v.name, (x - x.round()).abs());
            }
        }
        let lin = |terms: &[(usize, f64)]| terms.iter().map(|&(j, c)| c * values[j]).sum::<f64>();
        for row in &self.linear_constraints {
            note(&row.name, row.sense.violation(lin(&row.terms), row.rhs));
        }
        for row in &self.quadratic_constraints {
            let q: f64 = row.quadratic.iter().map(|&(i, j, c)| c * values[i] * values[j]).sum();
            note(&row.name, row.sense.violation(lin(&row.linear) + q, row.rhs));
        }
        for g in &self.sos2_groups {
            let nonzero: Vec<usize> = g.vars.iter().enumerate().filter(|(_, &j)| values[j].abs() > tol).map(|(p, _)| p).collect();
            let adjacent = nonzero.len() <= 1 || (nonzero.len() == 2 && nonzero[1] == nonzero[0] + 1);
            if !adjacent {
                note(&g.name, f64::INFINITY);
            }
        }
        Ok(out)
    }

    pub fn objective_value(&self, values: &[f64]) -> Result<f64> {
        self.check_len(values)?;
        Ok(self.objective.iter().map(|&(j, c)| c * values[j]).sum())
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: MiqpModel = serde_json::from_str(text)?;
        m.rebuild_index()?;
        m.validate()?;
        Ok(m)
    }

    fn rebuild_index(&mut self) -> Result<()> {
        self.index.clear();
        for (i, v) in self.variables.iter().enumerate() {
            if self.index.insert(v.name.clone(), i).is_some() {
                return Err(Error::Ir(format!("variable {} declared twice", v.name)));
            }
        }
        Ok(())
    }
}
