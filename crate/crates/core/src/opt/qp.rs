//! Convex quadratic programs
//!
//! ```text
//! minimize    ½ xᵀ P x + qᵀ x
//! subject to  l ≤ A x ≤ u
//! ```
//!
//! solved with an operator-splitting (ADMM) iteration on the Ruiz-equilibrated
//! problem, followed by a polishing step that guesses the active set from the
//! ADMM iterate and solves the resulting equality-constrained KKT system
//! directly. Equalities are rows with `l == u`; one-sided rows use ±∞.
//!
//! `P` is stored densely (the planner's cost matrices are block dense) and `A`
//! in CSR form (corridor faces touch three variables each).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: CsrMatrix,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl QuadraticProgram {
    pub fn new(n: usize) -> Self {
        QuadraticProgram {
            p: DMatrix::zeros(n, n),
            q: DVector::zeros(n),
            a: CsrMatrix::new(n),
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    pub fn with_cost(mut self, p: DMatrix<f64>, q: DVector<f64>) -> Self {
        assert_eq!(p.nrows(), self.n());
        assert_eq!(q.len(), self.n());
        self.p = p;
        self.q = q;
        self
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.a.nrows
    }

    pub fn add_constraint(&mut self, row: &[(usize, f64)], lower: f64, upper: f64) {
        assert!(lower <= upper, "empty constraint range [{lower}, {upper}]");
        self.a.push_row(row);
        self.lower.push(lower);
        self.upper.push(upper);
    }

    pub fn add_eq(&mut self, row: &[(usize, f64)], rhs: f64) {
        self.add_constraint(row, rhs, rhs);
    }

    pub fn add_le(&mut self, row: &[(usize, f64)], rhs: f64) {
        self.add_constraint(row, f64::NEG_INFINITY, rhs);
    }

    pub fn add_ge(&mut self, row: &[(usize, f64)], rhs: f64) {
        self.add_constraint(row, rhs, f64::INFINITY);
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// ‖Ax − Π_[l,u](Ax)‖∞
    pub primal: f64,
    /// ‖Px + q + Aᵀy‖∞
    pub dual: f64,
    /// Largest |yᵢ| · (distance of row i from the bound its sign selects),
    /// with a wrong-signed multiplier on an inactive bound counted fully.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

/// KKT residuals of `(x, y)` on the unscaled problem. Sign convention: `y < 0`
/// pushes against the lower bound, `y > 0` against the upper bound.
pub fn kkt_residuals(qp: &QuadraticProgram, x: &DVector<f64>, y: &DVector<f64>) -> KktResiduals {
    let n = qp.n();
    let m = qp.m();
    let mut ax = vec![0.0; m];
    qp.a.mul_vec(x.as_slice(), &mut ax);
    let mut aty = vec![0.0; n];
    qp.a.tmul_vec(y.as_slice(), &mut aty);
    let px = &qp.p * x;
    let dual = (0..n)
        .map(|j| (px[j] + qp.q[j] + aty[j]).abs())
        .fold(0.0, f64::max);
    let mut primal = 0.0f64;
    let mut comp = 0.0f64;
    for i in 0..m {
        let (l, u) = (qp.lower[i], qp.upper[i]);
        let v = ax[i];
        primal = primal.max((l - v).max(0.0)).max((v - u).max(0.0));
        let yi = y[i];
        if yi > 0.0 {
            let gap = if u.is_finite() { (u - v).abs() } else { 1.0 };
            comp = comp.max(yi * gap);
        } else if yi < 0.0 {
            let gap = if l.is_finite() { (v - l).abs() } else { 1.0 };
            comp = comp.max(-yi * gap);
        }
    }
    KktResiduals {
        primal,
        dual,
        complementarity: comp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub scaling_iters: usize,
    pub adaptive_rho: bool,
    pub polish: bool,
    pub check_every: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_infeasible: 1e-5,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 10,
            adaptive_rho: true,
            polish: true,
            check_every: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub polished: bool,
    pub residuals: KktResiduals,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QpError {
    #[error("QP is primal infeasible")]
    Infeasible,
    #[error("QP is unbounded below")]
    Unbounded,
    #[error("cost matrix is not positive semidefinite")]
    NotConvex,
    #[error("QP not solved within {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})")]
    MaxIterations {
        iterations: usize,
        primal: f64,
        dual: f64,
    },
    #[error("KKT factorization failed")]
    Factorization,
}

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const INF_BOUND: f64 = 1e20;

#[derive(Clone, Copy, PartialEq)]
enum RowKind {
    Free,
    Inequality,
    Equality,
}

struct Scaled {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: CsrMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    /// Variable scaling: x = D x̃.
    d: Vec<f64>,
    /// Constraint scaling: Ax = E⁻¹ Ã x̃.
    e: Vec<f64>,
    /// Cost scaling.
    c: f64,
}

fn clamp_scale(v: f64) -> f64 {
    if v < 1e-4 {
        1.0
    } else {
        v.min(1e4)
    }
}

fn equilibrate(qp: &QuadraticProgram, iters: usize) -> Scaled {
    let n = qp.n();
    let m = qp.m();
    let mut p = qp.p.clone();
    let mut q = qp.q.clone();
    let mut a = qp.a.clone();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    for _ in 0..iters {
        let a_cols = a.col_inf_norms();
        let dd: Vec<f64> = (0..n)
            .map(|j| {
                let pc = p.column(j).amax();
                1.0 / clamp_scale(pc.max(a_cols[j])).sqrt()
            })
            .collect();
        let de: Vec<f64> = (0..m)
            .map(|i| 1.0 / clamp_scale(a.row_inf_norm(i)).sqrt())
            .collect();
        for j in 0..n {
            for i in 0..n {
                p[(i, j)] *= dd[i] * dd[j];
            }
            q[j] *= dd[j];
            d[j] *= dd[j];
        }
        a.scale(&de, &dd);
        for i in 0..m {
            e[i] *= de[i];
        }
    }
    let mean_col = if n > 0 {
        (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n as f64
    } else {
        0.0
    };
    let c = 1.0 / clamp_scale(mean_col.max(q.amax()));
    p *= c;
    q *= c;
    let l = qp
        .lower
        .iter()
        .zip(&e)
        .map(|(&l, &ei)| if l <= -INF_BOUND { f64::NEG_INFINITY } else { l * ei })
        .collect();
    let u = qp
        .upper
        .iter()
        .zip(&e)
        .map(|(&u, &ei)| if u >= INF_BOUND { f64::INFINITY } else { u * ei })
        .collect();
    Scaled { p, q, a, l, u, d, e, c }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Residuals {
    primal: f64,
    dual: f64,
    eps_primal: f64,
    eps_dual: f64,
    // Scaled-space norms for the rho update.
    prim_scaled: f64,
    dual_scaled: f64,
    prim_norm: f64,
    dual_norm: f64,
}

struct Admm<'a> {
    s: &'a Scaled,
    settings: QpSettings,
    kinds: Vec<RowKind>,
    rho: Vec<f64>,
    rho_base: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> Admm<'a> {
    fn new(s: &'a Scaled, settings: QpSettings) -> Result<Self, QpError> {
        let kinds: Vec<RowKind> = s
            .l
            .iter()
            .zip(&s.u)
            .map(|(&l, &u)| {
                if l == f64::NEG_INFINITY && u == f64::INFINITY {
                    RowKind::Free
                } else if (u - l).abs() < 1e-4 {
                    RowKind::Equality
                } else {
                    RowKind::Inequality
                }
            })
            .collect();
        let rho_base = settings.rho;
        let rho = Self::rho_vector(&kinds, rho_base);
        let chol = Self::factor(s, settings.sigma, &rho)?;
        Ok(Admm {
            s,
            settings,
            kinds,
            rho,
            rho_base,
            chol,
        })
    }

    fn rho_vector(kinds: &[RowKind], rho: f64) -> Vec<f64> {
        kinds
            .iter()
            .map(|k| match k {
                RowKind::Free => RHO_MIN,
                RowKind::Inequality => rho,
                RowKind::Equality => RHO_EQ_FACTOR * rho,
            })
            .collect()
    }

    fn factor(
        s: &Scaled,
        sigma: f64,
        rho: &[f64],
    ) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, QpError> {
        let n = s.q.len();
        let mut k = s.p.clone();
        for j in 0..n {
            k[(j, j)] += sigma;
        }
        for (i, &ri) in rho.iter().enumerate() {
            let row: Vec<(usize, f64)> = s.a.row(i).collect();
            for &(c1, v1) in &row {
                for &(c2, v2) in &row {
                    k[(c1, c2)] += ri * v1 * v2;
                }
            }
        }
        nalgebra::Cholesky::new(k).ok_or(QpError::Factorization)
    }

    fn set_rho(&mut self, rho: f64) -> Result<(), QpError> {
        self.rho_base = rho;
        self.rho = Self::rho_vector(&self.kinds, rho);
        self.chol = Self::factor(self.s, self.settings.sigma, &self.rho)?;
        Ok(())
    }

    fn residuals(&self, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
        let s = self.s;
        let n = x.len();
        let m = z.len();
        let mut ax = vec![0.0; m];
        s.a.mul_vec(x, &mut ax);
        let px = &s.p * DVector::from_column_slice(x);
        let mut aty = vec![0.0; n];
        s.a.tmul_vec(y, &mut aty);

        let mut prim = 0.0f64;
        let mut prim_s = 0.0f64;
        let mut ax_n = 0.0f64;
        let mut z_n = 0.0f64;
        let mut ax_ns = 0.0f64;
        let mut z_ns = 0.0f64;
        for i in 0..m {
            let r = ax[i] - z[i];
            prim = prim.max((r / s.e[i]).abs());
            prim_s = prim_s.max(r.abs());
            ax_n = ax_n.max((ax[i] / s.e[i]).abs());
            z_n = z_n.max((z[i] / s.e[i]).abs());
            ax_ns = ax_ns.max(ax[i].abs());
            z_ns = z_ns.max(z[i].abs());
        }
        let mut dual = 0.0f64;
        let mut dual_s = 0.0f64;
        let (mut px_n, mut aty_n, mut q_n) = (0.0f64, 0.0f64, 0.0f64);
        let (mut px_ns, mut aty_ns) = (0.0f64, 0.0f64);
        for j in 0..n {
            let r = px[j] + s.q[j] + aty[j];
            dual = dual.max((r / s.d[j]).abs());
            dual_s = dual_s.max(r.abs());
            px_n = px_n.max((px[j] / s.d[j]).abs());
            aty_n = aty_n.max((aty[j] / s.d[j]).abs());
            q_n = q_n.max((s.q[j] / s.d[j]).abs());
            px_ns = px_ns.max(px[j].abs());
            aty_ns = aty_ns.max(aty[j].abs());
        }
        let c = s.c;
        Residuals {
            primal: prim,
            dual: dual / c,
            eps_primal: self.settings.eps_abs + self.settings.eps_rel * ax_n.max(z_n),
            eps_dual: self.settings.eps_abs + self.settings.eps_rel * px_n.max(aty_n).max(q_n) / c,
            prim_scaled: prim_s,
            dual_scaled: dual_s,
            prim_norm: ax_ns.max(z_ns),
            dual_norm: px_ns.max(aty_ns).max(inf_norm(s.q.as_slice())),
        }
    }

    fn primal_infeasible(&self, dy: &[f64]) -> bool {
        let s = self.s;
        let eps = self.settings.eps_infeasible;
        let norm = dy
            .iter()
            .zip(&s.e)
            .fold(0.0f64, |m, (v, e)| m.max((v * e).abs()));
        if norm <= eps {
            return false;
        }
        let mut support = 0.0;
        for i in 0..dy.len() {
            let v = dy[i] / norm;
            if v > 0.0 {
                if s.u[i].is_infinite() {
                    if v * s.e[i] > eps {
                        return false;
                    }
                } else {
                    support += s.u[i] * v;
                }
            } else if v < 0.0 {
                if s.l[i].is_infinite() {
                    if -v * s.e[i] > eps {
                        return false;
                    }
                } else {
                    support += s.l[i] * v;
                }
            }
        }
        let mut aty = vec![0.0; s.q.len()];
        let scaled: Vec<f64> = dy.iter().map(|v| v / norm).collect();
        s.a.tmul_vec(&scaled, &mut aty);
        let at_norm = aty
            .iter()
            .zip(&s.d)
            .fold(0.0f64, |m, (v, d)| m.max((v / d).abs()));
        at_norm <= eps && support < -eps
    }

    fn dual_infeasible(&self, dx: &[f64]) -> bool {
        let s = self.s;
        let eps = self.settings.eps_infeasible;
        let norm = dx
            .iter()
            .zip(&s.d)
            .fold(0.0f64, |m, (v, d)| m.max((v * d).abs()));
        if norm <= eps {
            return false;
        }
        let v = DVector::from_iterator(dx.len(), dx.iter().map(|x| x / norm));
        if s.q.dot(&v) >= -eps * s.c {
            return false;
        }
        let pv = &s.p * &v;
        if pv
            .iter()
            .zip(&s.d)
            .any(|(p, d)| (p / d).abs() > eps * s.c)
        {
            return false;
        }
        let mut av = vec![0.0; s.l.len()];
        s.a.mul_vec(v.as_slice(), &mut av);
        av.iter().enumerate().all(|(i, &a)| {
            let a = a / s.e[i];
            (s.u[i].is_infinite() || a <= eps) && (s.l[i].is_infinite() || a >= -eps)
        })
    }

    /// Solve the KKT system for the active set read off `(z, y)`; `None` when the
    /// guess does not reproduce a solution within tolerance.
    fn polish(&self, x: &[f64], z: &[f64], y: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let s = self.s;
        let n = x.len();
        let m = z.len();
        let mut active: Vec<(usize, f64, i8)> = Vec::new();
        for i in 0..m {
            match self.kinds[i] {
                RowKind::Equality => active.push((i, 0.5 * (s.l[i] + s.u[i]), 0)),
                RowKind::Free => {}
                RowKind::Inequality => {
                    if z[i] - s.l[i] < -y[i] {
                        active.push((i, s.l[i], -1));
                    } else if s.u[i] - z[i] < y[i] {
                        active.push((i, s.u[i], 1));
                    }
                }
            }
        }
        let ma = active.len();
        let dim = n + ma;
        let delta = 1e-7;
        let mut k0 = DMatrix::<f64>::zeros(dim, dim);
        k0.view_mut((0, 0), (n, n)).copy_from(&s.p);
        for (r, &(i, _, _)) in active.iter().enumerate() {
            for (c, v) in s.a.row(i) {
                k0[(n + r, c)] = v;
                k0[(c, n + r)] = v;
            }
        }
        let mut kd = k0.clone();
        for j in 0..n {
            kd[(j, j)] += delta;
        }
        for r in 0..ma {
            kd[(n + r, n + r)] -= delta;
        }
        let lu = kd.lu();
        let mut rhs = DVector::<f64>::zeros(dim);
        for j in 0..n {
            rhs[j] = -s.q[j];
        }
        for (r, &(_, b, _)) in active.iter().enumerate() {
            rhs[n + r] = b;
        }
        let mut sol = lu.solve(&rhs)?;
        for _ in 0..5 {
            let res = &rhs - &k0 * &sol;
            let corr = lu.solve(&res)?;
            sol += corr;
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let xp: Vec<f64> = sol.as_slice()[..n].to_vec();
        let mut yp = vec![0.0; m];
        for (r, &(i, _, sign)) in active.iter().enumerate() {
            let v = sol[n + r];
            yp[i] = match sign {
                -1 => v.min(0.0),
                1 => v.max(0.0),
                _ => v,
            };
        }
        let mut zp = vec![0.0; m];
        s.a.mul_vec(&xp, &mut zp);
        for i in 0..m {
            zp[i] = zp[i].clamp(s.l[i], s.u[i]);
        }
        let r = self.residuals(&xp, &zp, &yp);
        if r.primal <= r.eps_primal && r.dual <= r.eps_dual {
            Some((xp, yp))
        } else {
            None
        }
    }
}

/// Solve `qp` with the default settings.
pub fn solve_qp(qp: &QuadraticProgram) -> Result<QpSolution, QpError> {
    solve_qp_with(qp, &QpSettings::default())
}

pub fn solve_qp_with(qp: &QuadraticProgram, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let n = qp.n();
    let m = qp.m();
    check_convex(&qp.p)?;
    if n == 0 {
        return Ok(QpSolution {
            x: DVector::zeros(0),
            y: DVector::zeros(m),
            objective: 0.0,
            iterations: 0,
            polished: true,
            residuals: KktResiduals {
                primal: 0.0,
                dual: 0.0,
                complementarity: 0.0,
            },
        });
    }
    let scaled = equilibrate(qp, settings.scaling_iters);
    let mut admm = Admm::new(&scaled, *settings)?;

    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut xt = vec![0.0; n];
    let mut zt = vec![0.0; m];
    let mut rhs = DVector::<f64>::zeros(n);
    let mut tmp_m = vec![0.0; m];
    let mut tmp_n = vec![0.0; n];
    let alpha = settings.alpha;
    let sigma = settings.sigma;

    // Polishing is attempted each time the ADMM iterate reaches the next rung.
    let ladder = [1e3, 1e2, 1e1, 1.0];
    let mut rung = 0;
    let mut last = None;

    for iter in 1..=settings.max_iter {
        let x_prev = x.clone();
        let y_prev = y.clone();
        for i in 0..m {
            tmp_m[i] = admm.rho[i] * z[i] - y[i];
        }
        scaled.a.tmul_vec(&tmp_m, &mut tmp_n);
        for j in 0..n {
            rhs[j] = sigma * x[j] - scaled.q[j] + tmp_n[j];
        }
        admm.chol.solve_mut(&mut rhs);
        xt.copy_from_slice(rhs.as_slice());
        scaled.a.mul_vec(&xt, &mut zt);
        for j in 0..n {
            x[j] = alpha * xt[j] + (1.0 - alpha) * x[j];
        }
        for i in 0..m {
            let zr = alpha * zt[i] + (1.0 - alpha) * z[i];
            let znew = (zr + y[i] / admm.rho[i]).clamp(scaled.l[i], scaled.u[i]);
            y[i] += admm.rho[i] * (zr - znew);
            z[i] = znew;
        }

        if iter % settings.check_every != 0 && iter != settings.max_iter {
            continue;
        }
        let r = admm.residuals(&x, &z, &y);
        last = Some((r.primal, r.dual));
        while rung < ladder.len()
            && r.primal <= ladder[rung] * r.eps_primal
            && r.dual <= ladder[rung] * r.eps_dual
        {
            rung += 1;
            if settings.polish {
                if let Some((xp, yp)) = admm.polish(&x, &z, &y) {
                    return Ok(finish(qp, &scaled, &xp, &yp, iter, true));
                }
            }
            if rung == ladder.len() {
                return Ok(finish(qp, &scaled, &x, &y, iter, false));
            }
        }
        let dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
        if admm.primal_infeasible(&dy) {
            return Err(QpError::Infeasible);
        }
        let dx: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a - b).collect();
        if admm.dual_infeasible(&dx) {
            return Err(QpError::Unbounded);
        }
        if settings.adaptive_rho && r.prim_norm > 0.0 && r.dual_norm > 0.0 {
            let num = r.prim_scaled / r.prim_norm.max(1e-30);
            let den = r.dual_scaled / r.dual_norm.max(1e-30);
            if den > 0.0 && num > 0.0 {
                let new_rho = (admm.rho_base * (num / den).sqrt()).clamp(RHO_MIN, RHO_MAX);
                if new_rho > 5.0 * admm.rho_base || new_rho < admm.rho_base / 5.0 {
                    admm.set_rho(new_rho)?;
                }
            }
        }
    }
    let (primal, dual) = last.unwrap_or((f64::INFINITY, f64::INFINITY));
    Err(QpError::MaxIterations {
        iterations: settings.max_iter,
        primal,
        dual,
    })
}

fn finish(
    qp: &QuadraticProgram,
    s: &Scaled,
    x: &[f64],
    y: &[f64],
    iterations: usize,
    polished: bool,
) -> QpSolution {
    let x = DVector::from_iterator(x.len(), x.iter().zip(&s.d).map(|(v, d)| v * d));
    let y = DVector::from_iterator(y.len(), y.iter().zip(&s.e).map(|(v, e)| v * e / s.c));
    let residuals = kkt_residuals(qp, &x, &y);
    QpSolution {
        objective: qp.objective(&x),
        x,
        y,
        iterations,
        polished,
        residuals,
    }
}

/// PSD test with a relative tolerance of 1e-8 on the smallest eigenvalue.
pub(crate) fn check_convex(p: &DMatrix<f64>) -> Result<(), QpError> {
    let n = p.nrows();
    if n == 0 {
        return Ok(());
    }
    let asym = (p - p.transpose()).amax();
    let scale = p.amax().max(1e-300);
    if asym > 1e-9 * scale {
        return Err(QpError::NotConvex);
    }
    let mut shifted = p.clone();
    for j in 0..n {
        shifted[(j, j)] += 1e-8 * scale;
    }
    if p.amax() == 0.0 || nalgebra::Cholesky::new(shifted).is_some() {
        Ok(())
    } else {
        Err(QpError::NotConvex)
    }
}
