//! Binary integer linear programs solved by depth-first branch-and-bound on
//! the LP relaxation.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::simplex::{solve_lp, LpOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn lhs(&self, z: &[bool]) -> f64 {
        self.coeffs
            .iter()
            .filter(|(j, _)| z[*j])
            .map(|(_, v)| v)
            .sum()
    }

    pub fn satisfied(&self, z: &[bool], tol: f64) -> bool {
        let lhs = self.lhs(z);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

/// `maximize objectiveᵀz` over `z ∈ {0,1}ⁿ` subject to linear constraints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinaryIlp {
    pub objective: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
    /// Optional variable names for LP export.
    pub names: Vec<String>,
}

impl BinaryIlp {
    pub fn new(n: usize) -> Self {
        BinaryIlp {
            objective: vec![0.0; n],
            constraints: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(LinearConstraint { coeffs, sense, rhs });
    }

    pub fn value(&self, z: &[bool]) -> f64 {
        self.objective
            .iter()
            .zip(z)
            .filter(|(_, &b)| b)
            .map(|(c, _)| c)
            .sum()
    }

    pub fn is_feasible(&self, z: &[bool]) -> bool {
        self.constraints.iter().all(|c| c.satisfied(z, 1e-9))
    }

    fn name(&self, j: usize) -> String {
        self.names
            .get(j)
            .cloned()
            .unwrap_or_else(|| format!("z{j}"))
    }

    /// CPLEX LP text (objective, constraints, binaries).
    pub fn to_lp_string(&self) -> String {
        let mut s = String::from("\\ binary ILP exported by swarmplan\nMaximize\n obj:");
        let term = |s: &mut String, v: f64, name: &str| {
            let sign = if v < 0.0 { '-' } else { '+' };
            let _ = write!(s, " {sign} {} {name}", v.abs());
        };
        let mut any = false;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                term(&mut s, c, &self.name(j));
                any = true;
            }
        }
        if !any {
            s.push_str(" 0 z0");
        }
        s.push_str("\nSubject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let _ = write!(s, " c{i}:");
            if c.coeffs.is_empty() {
                s.push_str(" 0 z0");
            }
            for &(j, v) in &c.coeffs {
                term(&mut s, v, &self.name(j));
            }
            let op = match c.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, " {op} {}", c.rhs);
        }
        s.push_str("Binaries\n");
        for j in 0..self.n() {
            let _ = writeln!(s, " {}", self.name(j));
        }
        s.push_str("End\n");
        s
    }
}

/// Write `ilp` in CPLEX LP format for cross-checking with external solvers.
pub fn export_lp(ilp: &BinaryIlp, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, ilp.to_lp_string())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlpSettings {
    pub node_limit: usize,
    pub integrality_tol: f64,
}

impl Default for IlpSettings {
    fn default() -> Self {
        IlpSettings {
            node_limit: 200_000,
            integrality_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlpSolution {
    pub assignment: Vec<bool>,
    pub objective: f64,
    /// Upper bound proven by the search; equals `objective` on completion.
    pub best_bound: f64,
    pub nodes: usize,
}

impl IlpSolution {
    pub fn gap(&self) -> f64 {
        self.best_bound - self.objective
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IlpError {
    #[error("ILP is infeasible")]
    Infeasible,
    #[error("ILP node limit {nodes} reached (incumbent {incumbent:?})")]
    BudgetExceeded { nodes: usize, incumbent: Option<f64> },
}

pub fn solve_ilp(ilp: &BinaryIlp) -> Result<IlpSolution, IlpError> {
    solve_ilp_with(ilp, &IlpSettings::default())
}

pub fn solve_ilp_with(ilp: &BinaryIlp, settings: &IlpSettings) -> Result<IlpSolution, IlpError> {
    let n = ilp.n();
    let mut incumbent: Option<(Vec<bool>, f64)> = None;
    // Each node is a partial fixing.
    let mut stack: Vec<Vec<Option<bool>>> = vec![vec![None; n]];
    let mut nodes = 0;
    while let Some(fix) = stack.pop() {
        nodes += 1;
        if nodes > settings.node_limit {
            return Err(IlpError::BudgetExceeded {
                nodes: settings.node_limit,
                incumbent: incumbent.map(|(_, v)| v),
            });
        }
        let mut constraints = ilp.constraints.clone();
        let mut upper = vec![Some(1.0); n];
        for (j, f) in fix.iter().enumerate() {
            match f {
                Some(false) => upper[j] = Some(0.0),
                Some(true) => constraints.push(LinearConstraint {
                    coeffs: vec![(j, 1.0)],
                    sense: Sense::Ge,
                    rhs: 1.0,
                }),
                None => {}
            }
        }
        let (x, bound) = match solve_lp(&ilp.objective, &constraints, &upper) {
            LpOutcome::Optimal { x, objective } => (x, objective),
            LpOutcome::Infeasible => continue,
            // Bounded variables make this unreachable; treat as no information.
            LpOutcome::Unbounded => continue,
        };
        if let Some((_, best)) = &incumbent {
            if bound <= best + 1e-9 {
                continue;
            }
        }
        let branch = (0..n)
            .filter(|&j| fix[j].is_none())
            .map(|j| (j, x[j].min(1.0 - x[j])))
            .filter(|&(_, frac)| frac > settings.integrality_tol)
            .fold(None::<(usize, f64)>, |best, (j, f)| match best {
                Some((_, bf)) if bf >= f => best,
                _ => Some((j, f)),
            });
        match branch {
            None => {
                let z: Vec<bool> = x.iter().map(|&v| v > 0.5).collect();
                if ilp.is_feasible(&z) {
                    let val = ilp.value(&z);
                    if incumbent.as_ref().is_none_or(|(_, b)| val > *b) {
                        incumbent = Some((z, val));
                    }
                }
            }
            Some((j, _)) => {
                let prefer_one = x[j] >= 0.5;
                let mut lo = fix.clone();
                lo[j] = Some(false);
                let mut hi = fix;
                hi[j] = Some(true);
                if prefer_one {
                    stack.push(lo);
                    stack.push(hi);
                } else {
                    stack.push(hi);
                    stack.push(lo);
                }
            }
        }
    }
    match incumbent {
        None => Err(IlpError::Infeasible),
        Some((assignment, objective)) => Ok(IlpSolution {
            assignment,
            objective,
            best_bound: objective,
            nodes,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_packing_row() {
        let mut ilp = BinaryIlp::new(2);
        ilp.objective[0] = 1.0;
        ilp.add(vec![(0, 1.0), (1, 1.0)], Sense::Le, 1.0);
        assert_eq!(solve_ilp(&ilp).unwrap().objective, 1.0);
        ilp.objective[1] = 1.0;
        let sol = solve_ilp(&ilp).unwrap();
        assert_eq!(sol.objective, 1.0);
        assert_eq!(sol.gap(), 0.0);
    }

    #[test]
    fn fractional_relaxation_needs_branching() {
        // Triangle packing: LP optimum 1.5, integer optimum 1.
        let mut ilp = BinaryIlp::new(3);
        ilp.objective = vec![1.0; 3];
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            ilp.add(vec![(a, 1.0), (b, 1.0)], Sense::Le, 1.0);
        }
        let sol = solve_ilp(&ilp).unwrap();
        assert_eq!(sol.objective, 1.0);
        assert!(sol.nodes > 1);
    }

    #[test]
    fn infeasible_and_lp_text() {
        let mut ilp = BinaryIlp::new(1);
        ilp.add(vec![(0, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_ilp(&ilp).unwrap_err(), IlpError::Infeasible);
        let text = ilp.to_lp_string();
        assert!(text.contains("Maximize") && text.contains("c0: + 1 z0 >= 2") && text.ends_with("End\n"));
    }
}
