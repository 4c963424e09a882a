//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Used for LP relaxations inside the binary branch-and-bound, where an exact
//! vertex solution is needed for sound pruning. Problem sizes there are small.

use super::ilp::{LinearConstraint, Sense};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, p) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * p;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimize `cost · x` over the current basis, restricted to `allowed`
    /// entering columns. Returns false when unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> bool {
        let rhs = self.width;
        loop {
            // Reduced costs: c_j - c_Bᵀ B⁻¹ a_j.
            let mut entering = None;
            for j in 0..self.width {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j];
                for (i, row) in self.rows.iter().enumerate() {
                    rc -= cost[self.basis[i]] * row[j];
                }
                if rc < -EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return true };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > EPS {
                    let ratio = row[rhs] / row[c];
                    match best {
                        None => best = Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - EPS
                                || (ratio <= br + EPS && self.basis[i] < self.basis[bi])
                            {
                                best = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            match best {
                None => return false,
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }

    fn value(&self, j: usize) -> f64 {
        self.basis
            .iter()
            .position(|&b| b == j)
            .map_or(0.0, |r| self.rows[r][self.width])
    }
}

/// Maximize `objective · x` subject to `constraints` and `0 ≤ x_j ≤ upper[j]`
/// (`None` = no upper bound).
pub fn solve_lp(objective: &[f64], constraints: &[LinearConstraint], upper: &[Option<f64>]) -> LpOutcome {
    let n = objective.len();
    let mut rows: Vec<(Vec<(usize, f64)>, Sense, f64)> = constraints
        .iter()
        .map(|c| (c.coeffs.clone(), c.sense, c.rhs))
        .collect();
    for (j, ub) in upper.iter().enumerate() {
        if let Some(ub) = ub {
            rows.push((vec![(j, 1.0)], Sense::Le, *ub));
        }
    }
    // Flip rows with negative right-hand side.
    for r in rows.iter_mut() {
        if r.2 < 0.0 {
            r.0.iter_mut().for_each(|e| e.1 = -e.1);
            r.2 = -r.2;
            r.1 = match r.1 {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let width = n + n_slack + n_art;
    let art_start = n + n_slack;
    let mut tab = Tableau {
        rows: vec![vec![0.0; width + 1]; m],
        basis: vec![0; m],
        width,
    };
    let (mut s_idx, mut a_idx) = (n, art_start);
    for (i, (coeffs, sense, rhs)) in rows.iter().enumerate() {
        for &(j, v) in coeffs {
            tab.rows[i][j] += v;
        }
        tab.rows[i][width] = *rhs;
        match sense {
            Sense::Le => {
                tab.rows[i][s_idx] = 1.0;
                tab.basis[i] = s_idx;
                s_idx += 1;
            }
            Sense::Ge => {
                tab.rows[i][s_idx] = -1.0;
                s_idx += 1;
                tab.rows[i][a_idx] = 1.0;
                tab.basis[i] = a_idx;
                a_idx += 1;
            }
            Sense::Eq => {
                tab.rows[i][a_idx] = 1.0;
                tab.basis[i] = a_idx;
                a_idx += 1;
            }
        }
    }

    if n_art > 0 {
        let mut cost1 = vec![0.0; width];
        cost1[art_start..].iter_mut().for_each(|c| *c = 1.0);
        tab.optimize(&cost1, &|_| true);
        let infeas: f64 = (art_start..width).map(|j| tab.value(j)).sum();
        if infeas > 1e-7 {
            return LpOutcome::Infeasible;
        }
        // Drive remaining artificials out of the basis.
        let mut r = 0;
        while r < tab.rows.len() {
            if tab.basis[r] >= art_start {
                if let Some(c) = (0..art_start).find(|&c| tab.rows[r][c].abs() > EPS) {
                    tab.pivot(r, c);
                    r += 1;
                } else {
                    tab.rows.remove(r);
                    tab.basis.remove(r);
                }
            } else {
                r += 1;
            }
        }
    }

    let mut cost2 = vec![0.0; width];
    for (j, &c) in objective.iter().enumerate() {
        cost2[j] = -c;
    }
    if !tab.optimize(&cost2, &|j| j < art_start) {
        return LpOutcome::Unbounded;
    }
    let x: Vec<f64> = (0..n).map(|j| tab.value(j)).collect();
    let objective = x.iter().zip(objective).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, objective }
}
