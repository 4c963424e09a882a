//! Primal-dual interior point (Mehrotra predictor-corrector) for the same
//! [`QuadraticProgram`] form as the ADMM solver.
//!
//! Meant for problems where the cost is badly conditioned, such as high-order
//! derivative costs on long piecewise polynomials. The Newton system is
//! reduced onto the equality multipliers: `H = P + GᵀWG` is factored per
//! connected block of variables, so cost matrices that are block diagonal
//! stay cheap.

use nalgebra::{DMatrix, DVector};

use super::qp::{check_convex, kkt_residuals, QpError, QpSolution, QuadraticProgram};

const INF_BOUND: f64 = 1e20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmSettings {
    /// Tolerance on relative residuals and on the relative duality gap.
    pub eps: f64,
    /// Looser tolerance accepted once progress stalls, which happens when the
    /// Newton system gets too ill-conditioned to reach `eps`.
    pub eps_stalled: f64,
    pub max_iter: usize,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            eps: 1e-10,
            eps_stalled: 1e-7,
            max_iter: 100,
        }
    }
}

type Row = Vec<(usize, f64)>;

struct Ineq {
    row: Row,
    h: f64,
    /// Source row and its sign in the original `l ≤ Ax ≤ u` form.
    origin: usize,
    sign: f64,
    scale: f64,
}

struct Eq {
    row: Row,
    rhs: f64,
    origin: usize,
    scale: f64,
}

fn dot(row: &Row, x: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * x[j]).sum()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}

struct Block {
    vars: Vec<usize>,
    /// Inequality rows living in this block.
    ineqs: Vec<usize>,
    /// Equality rows touching this block, with their restriction `E_b` (rows × vars).
    eqs: Vec<usize>,
    e_b: DMatrix<f64>,
}

struct Structure {
    blocks: Vec<Block>,
    /// Block and local index of every variable.
    locate: Vec<(usize, usize)>,
}

fn structure(p: &DMatrix<f64>, ineqs: &[Ineq], eqs: &[Eq]) -> Structure {
    let n = p.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    for j in 0..n {
        for i in 0..j {
            if p[(i, j)] != 0.0 {
                union(&mut parent, i, j);
            }
        }
    }
    for r in ineqs {
        for w in r.row.windows(2) {
            union(&mut parent, w[0].0, w[1].0);
        }
    }
    let mut block_of_root = vec![usize::MAX; n];
    let mut blocks: Vec<Block> = Vec::new();
    let mut locate = vec![(0, 0); n];
    for v in 0..n {
        let r = find(&mut parent, v);
        if block_of_root[r] == usize::MAX {
            block_of_root[r] = blocks.len();
            blocks.push(Block {
                vars: Vec::new(),
                ineqs: Vec::new(),
                eqs: Vec::new(),
                e_b: DMatrix::zeros(0, 0),
            });
        }
        let b = block_of_root[r];
        locate[v] = (b, blocks[b].vars.len());
        blocks[b].vars.push(v);
    }
    for (k, r) in ineqs.iter().enumerate() {
        if let Some(&(j, _)) = r.row.first() {
            blocks[locate[j].0].ineqs.push(k);
        }
    }
    for (k, r) in eqs.iter().enumerate() {
        let mut touched: Vec<usize> = r.row.iter().map(|&(j, _)| locate[j].0).collect();
        touched.sort_unstable();
        touched.dedup();
        for b in touched {
            blocks[b].eqs.push(k);
        }
    }
    for (bi, b) in blocks.iter_mut().enumerate() {
        let mut e_b = DMatrix::zeros(b.eqs.len(), b.vars.len());
        for (ri, &k) in b.eqs.iter().enumerate() {
            for &(j, v) in &eqs[k].row {
                let (bj, lj) = locate[j];
                if bj == bi {
                    e_b[(ri, lj)] += v;
                }
            }
        }
        b.e_b = e_b;
    }
    Structure { blocks, locate }
}

/// Factorization of the reduced Newton system for one set of weights.
struct Newton<'a> {
    st: &'a Structure,
    p: &'a DMatrix<f64>,
    ineqs: &'a [Ineq],
    eqs: &'a [Eq],
    w: Vec<f64>,
    h_chol: Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    s_chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

fn cholesky_regularized(mut m: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut reg = 1e-14 * scale;
    for _ in 0..8 {
        if let Some(c) = m.clone().cholesky() {
            return Some(c);
        }
        for i in 0..m.nrows() {
            m[(i, i)] += reg;
        }
        reg *= 100.0;
    }
    m.cholesky()
}

impl<'a> Newton<'a> {
    fn new(st: &'a Structure, p: &'a DMatrix<f64>, ineqs: &'a [Ineq], eqs: &'a [Eq], w: Vec<f64>) -> Option<Self> {
        let mut h_chol = Vec::with_capacity(st.blocks.len());
        let mut s = DMatrix::zeros(eqs.len(), eqs.len());
        for b in &st.blocks {
            let nb = b.vars.len();
            let mut h = DMatrix::from_fn(nb, nb, |i, j| p[(b.vars[i], b.vars[j])]);
            for &k in &b.ineqs {
                let r = &ineqs[k].row;
                for &(i, vi) in r {
                    for &(j, vj) in r {
                        h[(st.locate[i].1, st.locate[j].1)] += w[k] * vi * vj;
                    }
                }
            }
            let c = cholesky_regularized(h)?;
            if !b.eqs.is_empty() {
                let x = c.solve(&b.e_b.transpose());
                let contrib = &b.e_b * x;
                for (ri, &gi) in b.eqs.iter().enumerate() {
                    for (rj, &gj) in b.eqs.iter().enumerate() {
                        s[(gi, gj)] += contrib[(ri, rj)];
                    }
                }
            }
            h_chol.push(c);
        }
        let s_chol = if eqs.is_empty() {
            None
        } else {
            Some(cholesky_regularized(s)?)
        };
        Some(Newton {
            st,
            p,
            ineqs,
            eqs,
            w,
            h_chol,
            s_chol,
        })
    }

    fn h_solve(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        for (b, c) in self.st.blocks.iter().zip(&self.h_chol) {
            let rb = DVector::from_iterator(b.vars.len(), b.vars.iter().map(|&v| r[v]));
            let xb = c.solve(&rb);
            for (l, &v) in b.vars.iter().enumerate() {
                out[v] = xb[l];
            }
        }
        out
    }

    fn h_mul(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let mut out: Vec<f64> = (self.p * &xv).iter().copied().collect();
        for (k, r) in self.ineqs.iter().enumerate() {
            let g = self.w[k] * dot(&r.row, x);
            for &(j, v) in &r.row {
                out[j] += g * v;
            }
        }
        out
    }

    fn e_mul(&self, x: &[f64]) -> Vec<f64> {
        self.eqs.iter().map(|e| dot(&e.row, x)).collect()
    }

    fn et_mul(&self, nu: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (e, &v) in self.eqs.iter().zip(nu) {
            for &(j, a) in &e.row {
                out[j] += a * v;
            }
        }
        out
    }

    fn solve_once(&self, rt: &[f64], re: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = rt.len();
        let u = self.h_solve(rt);
        let Some(sc) = &self.s_chol else {
            return (u, Vec::new());
        };
        let eu = self.e_mul(&u);
        let t = DVector::from_iterator(re.len(), eu.iter().zip(re).map(|(a, b)| a + b));
        let nu: Vec<f64> = sc.solve(&t).iter().copied().collect();
        let etnu = self.et_mul(&nu, n);
        let r2: Vec<f64> = rt.iter().zip(&etnu).map(|(a, b)| a - b).collect();
        (self.h_solve(&r2), nu)
    }

    /// Solves `H dx + Eᵀ dν = rt`, `E dx = −re` with two refinement sweeps.
    fn solve(&self, rt: &[f64], re: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = rt.len();
        let (mut dx, mut dnu) = self.solve_once(rt, re);
        for _ in 0..2 {
            let hdx = self.h_mul(&dx);
            let etn = self.et_mul(&dnu, n);
            let r1: Vec<f64> = (0..n).map(|j| rt[j] - hdx[j] - etn[j]).collect();
            let edx = self.e_mul(&dx);
            let r2: Vec<f64> = edx.iter().zip(re).map(|(a, b)| a + b).collect();
            let (cx, cn) = self.solve_once(&r1, &r2);
            for j in 0..n {
                dx[j] += cx[j];
            }
            for (a, b) in dnu.iter_mut().zip(cn) {
                *a += b;
            }
        }
        (dx, dnu)
    }
}

fn dot_dense(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

pub fn solve_qp_ipm(qp: &QuadraticProgram) -> Result<QpSolution, QpError> {
    solve_qp_ipm_with(qp, &IpmSettings::default())
}

pub fn solve_qp_ipm_with(qp: &QuadraticProgram, settings: &IpmSettings) -> Result<QpSolution, QpError> {
    check_convex(&qp.p)?;
    let n = qp.n();
    let m_orig = qp.m();
    let mut ineqs = Vec::new();
    let mut eqs = Vec::new();
    for i in 0..m_orig {
        let row: Row = qp.a.row(i).filter(|&(_, v)| v != 0.0).collect();
        let (l, u) = (qp.lower[i], qp.upper[i]);
        let norm = row.iter().fold(0.0f64, |m, &(_, v)| m.max(v.abs()));
        if norm == 0.0 {
            if l > 1e-12 || u < -1e-12 {
                return Err(QpError::Infeasible);
            }
            continue;
        }
        let scaled: Row = row.iter().map(|&(j, v)| (j, v / norm)).collect();
        if l == u {
            eqs.push(Eq {
                row: scaled,
                rhs: l / norm,
                origin: i,
                scale: norm,
            });
            continue;
        }
        if u < INF_BOUND {
            ineqs.push(Ineq {
                row: scaled.clone(),
                h: u / norm,
                origin: i,
                sign: 1.0,
                scale: norm,
            });
        }
        if l > -INF_BOUND {
            ineqs.push(Ineq {
                row: scaled.iter().map(|&(j, v)| (j, -v)).collect(),
                h: -l / norm,
                origin: i,
                sign: -1.0,
                scale: norm,
            });
        }
    }
    let cost_scale = 1.0 / qp.p.amax().max(qp.q.amax()).max(1e-300);
    let cost_scale = if cost_scale.is_finite() { cost_scale } else { 1.0 };
    let p = &qp.p * cost_scale;
    let q: Vec<f64> = qp.q.iter().map(|v| v * cost_scale).collect();
    let st = structure(&p, &ineqs, &eqs);
    let mi = ineqs.len();
    let me = eqs.len();
    let h: Vec<f64> = ineqs.iter().map(|r| r.h).collect();
    let e: Vec<f64> = eqs.iter().map(|r| r.rhs).collect();
    let g_mul = |x: &[f64]| -> Vec<f64> { ineqs.iter().map(|r| dot(&r.row, x)).collect() };
    let gt_mul = |l: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (r, &v) in ineqs.iter().zip(l) {
            for &(j, a) in &r.row {
                out[j] += a * v;
            }
        }
        out
    };

    // Start from the minimizer of the cost plus ‖Gx − h‖² under the equalities.
    let newton = Newton::new(&st, &p, &ineqs, &eqs, vec![1.0; mi]).ok_or(QpError::Factorization)?;
    let gth = gt_mul(&h);
    let rt: Vec<f64> = (0..n).map(|j| -q[j] + gth[j]).collect();
    let neg_e: Vec<f64> = e.iter().map(|v| -v).collect();
    let (mut x, mut nu) = newton.solve(&rt, &neg_e);
    let gx = g_mul(&x);
    let mut s: Vec<f64> = (0..mi).map(|k| h[k] - gx[k]).collect();
    let mut lam: Vec<f64> = s.iter().map(|v| -v).collect();
    let shift = |v: &mut Vec<f64>| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let add = if lo <= 0.0 { 1.0 - lo } else { 0.0 };
        for x in v.iter_mut() {
            *x = (*x + add).max(1e-8);
        }
    };
    shift(&mut s);
    shift(&mut lam);
    if me == 0 {
        nu.clear();
    }

    let q_norm = inf_norm(&q);
    let h_norm = inf_norm(&h);
    let e_norm = inf_norm(&e);
    let mut iterations = 0;
    let mut converged = false;
    let mut last_primal = f64::INFINITY;
    let mut best = (f64::INFINITY, 0, x.clone(), nu.clone(), lam.clone());
    for iter in 0..=settings.max_iter {
        iterations = iter;
        let px: Vec<f64> = (&p * DVector::from_column_slice(&x)).iter().copied().collect();
        let gtl = gt_mul(&lam);
        let etn = newton.et_mul(&nu, n);
        let rd: Vec<f64> = (0..n).map(|j| px[j] + q[j] + etn[j] + gtl[j]).collect();
        let ex = newton.e_mul(&x);
        let re: Vec<f64> = (0..me).map(|k| ex[k] - e[k]).collect();
        let gx = g_mul(&x);
        let ri: Vec<f64> = (0..mi).map(|k| gx[k] + s[k] - h[k]).collect();
        let mu = if mi > 0 {
            s.iter().zip(&lam).map(|(a, b)| a * b).sum::<f64>() / mi as f64
        } else {
            0.0
        };
        // Residuals relative to the size of the terms that produce them.
        let dual_scale = inf_norm(&px).max(q_norm).max(inf_norm(&etn)).max(inf_norm(&gtl)).max(1.0);
        let primal = (inf_norm(&re) / inf_norm(&ex).max(e_norm).max(1.0))
            .max(inf_norm(&ri) / inf_norm(&gx).max(h_norm).max(1.0));
        let gap_scale = dot_dense(&x, &px).abs().max(dot_dense(&q, &x).abs()).max(1.0);
        last_primal = primal;
        let merit = (inf_norm(&rd) / dual_scale).max(primal).max(mu * mi as f64 / gap_scale);
        if merit < best.0 {
            best = (merit, iter, x.clone(), nu.clone(), lam.clone());
        }
        if inf_norm(&rd) <= settings.eps * dual_scale
            && primal <= settings.eps
            && mu * mi as f64 <= settings.eps * gap_scale
        {
            converged = true;
            break;
        }
        if iter == settings.max_iter || iter >= best.1 + 8 {
            break;
        }
        let w: Vec<f64> = (0..mi).map(|k| lam[k] / s[k]).collect();
        let newton = Newton::new(&st, &p, &ineqs, &eqs, w.clone()).ok_or(QpError::Factorization)?;
        let direction = |rc: &[f64]| {
            let tmp: Vec<f64> = (0..mi).map(|k| (lam[k] * ri[k] - rc[k]) / s[k]).collect();
            let gtt = gt_mul(&tmp);
            let rt: Vec<f64> = (0..n).map(|j| -rd[j] - gtt[j]).collect();
            let (dx, dnu) = newton.solve(&rt, &re);
            let gdx = g_mul(&dx);
            let dlam: Vec<f64> = (0..mi).map(|k| tmp[k] + w[k] * gdx[k]).collect();
            let ds: Vec<f64> = (0..mi).map(|k| -ri[k] - gdx[k]).collect();
            (dx, dnu, ds, dlam)
        };
        let rc_aff: Vec<f64> = (0..mi).map(|k| s[k] * lam[k]).collect();
        let (_, _, ds_a, dl_a) = direction(&rc_aff);
        let a_aff = 1f64.min(max_step(&s, &ds_a)).min(max_step(&lam, &dl_a));
        let sigma = if mi > 0 {
            let mu_aff = (0..mi)
                .map(|k| (s[k] + a_aff * ds_a[k]) * (lam[k] + a_aff * dl_a[k]))
                .sum::<f64>()
                / mi as f64;
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };
        let rc: Vec<f64> = (0..mi)
            .map(|k| s[k] * lam[k] + ds_a[k] * dl_a[k] - sigma * mu)
            .collect();
        let (dx, dnu, ds, dl) = direction(&rc);
        let alpha = 1f64.min(0.99 * max_step(&s, &ds).min(max_step(&lam, &dl)));
        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for k in 0..me {
            nu[k] += alpha * dnu[k];
        }
        for k in 0..mi {
            s[k] = (s[k] + alpha * ds[k]).max(1e-300);
            lam[k] = (lam[k] + alpha * dl[k]).max(1e-300);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(QpError::Factorization);
        }
        // Multipliers blowing up while the primal residual stalls certify infeasibility.
        if inf_norm(&lam) > 1e14 * (1.0 + q_norm) && primal > 1e-6 {
            return Err(QpError::Infeasible);
        }
    }
    if !converged && best.0 <= settings.eps_stalled {
        (_, _, x, nu, lam) = best;
        converged = true;
    }
    if !converged {
        if last_primal > 1e-8 {
            return Err(QpError::Infeasible);
        }
        let xv = DVector::from_column_slice(&x);
        let y = duals(m_orig, &ineqs, &eqs, &lam, &nu, cost_scale);
        let r = kkt_residuals(qp, &xv, &y);
        return Err(QpError::MaxIterations {
            iterations,
            primal: r.primal,
            dual: r.dual,
        });
    }
    let xv = DVector::from_column_slice(&x);
    let y = duals(m_orig, &ineqs, &eqs, &lam, &nu, cost_scale);
    let residuals = kkt_residuals(qp, &xv, &y);
    Ok(QpSolution {
        objective: qp.objective(&xv),
        x: xv,
        y,
        iterations,
        polished: false,
        residuals,
    })
}

fn duals(m: usize, ineqs: &[Ineq], eqs: &[Eq], lam: &[f64], nu: &[f64], cost_scale: f64) -> DVector<f64> {
    let mut y = DVector::zeros(m);
    for (r, &l) in ineqs.iter().zip(lam) {
        y[r.origin] += r.sign * l / r.scale / cost_scale;
    }
    for (r, &v) in eqs.iter().zip(nu) {
        y[r.origin] += v / r.scale / cost_scale;
    }
    y
}
