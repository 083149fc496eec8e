//! Bounded-variable dual simplex with an explicit dense basis inverse.
//!
//! Rows are kept in activity form: row `i` reads `aᵢ·x − sᵢ = 0` with the
//! logical variable `sᵢ` carrying the row bounds. Every structural variable is
//! boxed, so the all-logical basis is dual feasible for any objective once each
//! structural sits at its cost-favoured bound. That lets every solve, cold or
//! warm, run the dual simplex without a phase one.

use super::problem::{MilpProblem, Sense};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_SWITCH: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Basic(usize),
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    WorkLimit,
}

/// Basis snapshot used for warm starts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Basis {
    head: Vec<usize>,
    at_upper: Vec<bool>,
}

pub(crate) struct DualSimplex {
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    head: Vec<usize>,
    state: Vec<State>,
    binv: Vec<f64>,
    x: Vec<f64>,
    d: Vec<f64>,
    since_refactor: usize,
    /// Pivots plus refactorization cost, in pivot-equivalents.
    pub(crate) work: u64,
    // scratch
    alpha_row: Vec<f64>,
    alpha_col: Vec<f64>,
}

impl DualSimplex {
    /// Builds the LP relaxation of `p` (integrality dropped).
    pub(crate) fn new(p: &MilpProblem) -> Self {
        let n = p.num_vars();
        let m = p.num_constraints();
        let mut cols = vec![Vec::new(); n];
        let mut lo = Vec::with_capacity(n + m);
        let mut hi = Vec::with_capacity(n + m);
        for v in p.vars() {
            lo.push(v.lower);
            hi.push(v.upper);
        }
        for (i, c) in p.constraints().iter().enumerate() {
            for (v, a) in &c.coeffs {
                cols[v.0].push((i, *a));
            }
            let (l, h) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, c.rhs),
                Sense::Ge => (c.rhs, f64::INFINITY),
                Sense::Eq => (c.rhs, c.rhs),
            };
            lo.push(l);
            hi.push(h);
        }
        let mut cost = vec![0.0; n + m];
        for (v, c) in p.objective() {
            // internal form minimizes
            cost[v.0] -= c;
        }
        let mut s = DualSimplex {
            m,
            n,
            cols,
            lo,
            hi,
            cost,
            head: Vec::new(),
            state: Vec::new(),
            binv: Vec::new(),
            x: vec![0.0; n + m],
            d: vec![0.0; n + m],
            since_refactor: 0,
            work: 0,
            alpha_row: vec![0.0; n + m],
            alpha_col: vec![0.0; m],
        };
        s.reset_to_slack_basis();
        s
    }

    fn reset_to_slack_basis(&mut self) {
        let (m, n) = (self.m, self.n);
        self.head = (n..n + m).collect();
        self.state = Vec::with_capacity(n + m);
        for j in 0..n {
            self.state.push(if self.cost[j] < 0.0 {
                State::Upper
            } else {
                State::Lower
            });
        }
        for i in 0..m {
            self.state.push(State::Basic(i));
        }
        // B = −I
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = -1.0;
        }
        self.since_refactor = 0;
        self.recompute_primal();
        self.recompute_duals();
    }

    pub(crate) fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
    }

    pub(crate) fn basis(&self) -> Basis {
        Basis {
            head: self.head.clone(),
            at_upper: self.state.iter().map(|s| *s == State::Upper).collect(),
        }
    }

    pub(crate) fn binv_snapshot(&self) -> Vec<f64> {
        self.binv.clone()
    }

    /// Restores a basis; `binv` may be supplied when it is known to match.
    pub(crate) fn restore(&mut self, basis: &Basis, binv: Option<&[f64]>) {
        self.head.clone_from(&basis.head);
        for j in 0..self.n + self.m {
            self.state[j] = if basis.at_upper[j] {
                State::Upper
            } else {
                State::Lower
            };
        }
        for (i, &j) in self.head.iter().enumerate() {
            self.state[j] = State::Basic(i);
        }
        match binv {
            Some(b) => {
                self.binv.clear();
                self.binv.extend_from_slice(b);
                self.since_refactor = 0;
            }
            None => {
                if !self.refactor() {
                    self.reset_to_slack_basis();
                }
            }
        }
        self.recompute_primal();
        self.recompute_duals();
    }

    fn col_dot(&self, j: usize, v: &[f64]) -> f64 {
        if j < self.n {
            self.cols[j].iter().map(|&(i, a)| a * v[i]).sum()
        } else {
            -v[j - self.n]
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            State::Lower => self.lo[j],
            State::Upper => self.hi[j],
            State::Basic(_) => self.x[j],
        }
    }

    fn recompute_primal(&mut self) {
        let m = self.m;
        let mut v = vec![0.0; m];
        for j in 0..self.n + m {
            if matches!(self.state[j], State::Basic(_)) {
                continue;
            }
            let xj = self.nonbasic_value(j);
            self.x[j] = xj;
            if xj == 0.0 {
                continue;
            }
            if j < self.n {
                for &(i, a) in &self.cols[j] {
                    v[i] += a * xj;
                }
            } else {
                v[j - self.n] -= xj;
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let s: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            self.x[self.head[r]] = -s;
        }
    }

    fn recompute_duals(&mut self) {
        let m = self.m;
        let mut pi = vec![0.0; m];
        for (r, &j) in self.head.iter().enumerate() {
            let c = self.cost[j];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for k in 0..m {
                    pi[k] += c * row[k];
                }
            }
        }
        for j in 0..self.n + m {
            self.d[j] = if matches!(self.state[j], State::Basic(_)) {
                0.0
            } else {
                self.cost[j] - self.col_dot(j, &pi)
            };
        }
    }

    /// Flips boxed nonbasic variables whose reduced cost has the wrong sign.
    /// Returns false if some variable cannot be repaired that way.
    fn repair_dual_feasibility(&mut self) -> bool {
        let mut changed = false;
        let mut ok = true;
        for j in 0..self.n + self.m {
            let (lo, hi) = (self.lo[j], self.hi[j]);
            match self.state[j] {
                State::Lower if self.d[j] < -DUAL_TOL && lo != hi => {
                    if hi.is_finite() {
                        self.state[j] = State::Upper;
                        changed = true;
                    } else {
                        ok = false;
                    }
                }
                State::Upper if self.d[j] > DUAL_TOL && lo != hi => {
                    if lo.is_finite() {
                        self.state[j] = State::Lower;
                        changed = true;
                    } else {
                        ok = false;
                    }
                }
                _ => {}
            }
        }
        // nonbasic at an infinite bound cannot be represented
        for j in 0..self.n + self.m {
            match self.state[j] {
                State::Lower if !self.lo[j].is_finite() => ok = false,
                State::Upper if !self.hi[j].is_finite() => ok = false,
                _ => {}
            }
        }
        if changed {
            self.recompute_primal();
        }
        ok
    }

    /// Recomputes the basis inverse by Gauss-Jordan elimination.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        self.work += (m as u64) / 4 + 1;
        let mut b = vec![0.0; m * m];
        for (r, &j) in self.head.iter().enumerate() {
            if j < self.n {
                for &(i, a) in &self.cols[j] {
                    b[i * m + r] = a;
                }
            } else {
                b[(j - self.n) * m + r] = -1.0;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let mut piv = c;
            let mut best = b[c * m + c].abs();
            for r in c + 1..m {
                let v = b[r * m + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-12 {
                return false;
            }
            if piv != c {
                for k in 0..m {
                    b.swap(c * m + k, piv * m + k);
                    inv.swap(c * m + k, piv * m + k);
                }
            }
            let p = b[c * m + c];
            for k in 0..m {
                b[c * m + k] /= p;
                inv[c * m + k] /= p;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = b[r * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    b[r * m + k] -= f * b[c * m + k];
                    inv[r * m + k] -= f * inv[c * m + k];
                }
            }
        }
        // inv = B⁻¹ with rows indexed by basis position
        self.binv = inv;
        self.since_refactor = 0;
        true
    }

    fn refresh(&mut self) -> bool {
        if !self.refactor() {
            return false;
        }
        self.recompute_primal();
        self.recompute_duals();
        true
    }

    fn choose_leaving(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for r in 0..self.m {
            let j = self.head[r];
            let v = self.x[j];
            let delta = if v < self.lo[j] - PRIMAL_TOL {
                v - self.lo[j]
            } else if v > self.hi[j] + PRIMAL_TOL {
                v - self.hi[j]
            } else {
                continue;
            };
            // dual steepest edge: the weight is the squared norm of row r of B⁻¹
            let score = if bland {
                -(j as f64)
            } else {
                let row = &self.binv[r * self.m..(r + 1) * self.m];
                delta * delta / row.iter().map(|v| v * v).sum::<f64>().max(1e-12)
            };
            if best.map_or(true, |(_, _, s)| score > s) {
                best = Some((r, delta, score));
            }
        }
        best.map(|(r, delta, _)| (r, delta))
    }

    pub(crate) fn objective(&self) -> f64 {
        -(0..self.n).map(|j| self.cost[j] * self.x[j]).sum::<f64>()
    }

    pub(crate) fn primal(&self) -> &[f64] {
        &self.x[..self.n]
    }

    /// Runs the dual simplex until optimality, infeasibility, or `work_limit`.
    pub(crate) fn solve(&mut self, work_limit: u64) -> LpStatus {
        self.recompute_primal();
        if !self.repair_dual_feasibility() {
            self.reset_to_slack_basis();
            self.repair_dual_feasibility();
        }
        let mut degenerate_run = 0usize;
        let mut just_refreshed = false;
        loop {
            if self.work >= work_limit {
                return LpStatus::WorkLimit;
            }
            if self.since_refactor >= REFACTOR_EVERY {
                if !self.refresh() {
                    self.reset_to_slack_basis();
                }
                self.repair_dual_feasibility();
                just_refreshed = true;
            }
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let Some((r, delta)) = self.choose_leaving(bland) else {
                if just_refreshed || self.since_refactor == 0 {
                    return LpStatus::Optimal;
                }
                if !self.refresh() {
                    self.reset_to_slack_basis();
                }
                self.repair_dual_feasibility();
                just_refreshed = true;
                continue;
            };

            // pivot row
            let m = self.m;
            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let sign = if delta < 0.0 { -1.0 } else { 1.0 };
            let mut theta_max = f64::INFINITY;
            let mut cands: Vec<usize> = Vec::new();
            for j in 0..self.n + m {
                let st = self.state[j];
                if matches!(st, State::Basic(_)) || self.lo[j] == self.hi[j] {
                    self.alpha_row[j] = 0.0;
                    continue;
                }
                let a = self.col_dot(j, &rho);
                self.alpha_row[j] = a;
                let at = sign * a;
                let eligible = (st == State::Lower && at > PIVOT_TOL)
                    || (st == State::Upper && at < -PIVOT_TOL);
                if !eligible {
                    continue;
                }
                cands.push(j);
                let bound = if st == State::Lower {
                    (self.d[j].max(0.0) + DUAL_TOL) / at
                } else {
                    (self.d[j].min(0.0) - DUAL_TOL) / at
                };
                theta_max = theta_max.min(bound);
            }
            if cands.is_empty() {
                if just_refreshed || self.since_refactor == 0 {
                    return LpStatus::Infeasible;
                }
                if !self.refresh() {
                    self.reset_to_slack_basis();
                }
                self.repair_dual_feasibility();
                just_refreshed = true;
                continue;
            }
            let mut q = usize::MAX;
            let mut best_mag = -1.0;
            let mut best_ratio = f64::INFINITY;
            for &j in &cands {
                let at = sign * self.alpha_row[j];
                let ratio = if self.state[j] == State::Lower {
                    self.d[j].max(0.0) / at
                } else {
                    self.d[j].min(0.0) / at
                };
                if bland {
                    if ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && j < q) {
                        best_ratio = ratio;
                        q = j;
                    }
                } else if ratio <= theta_max && at.abs() > best_mag {
                    best_mag = at.abs();
                    q = j;
                }
            }
            if q == usize::MAX {
                // Harris pass found nothing under the relaxed bound; take the smallest ratio
                q = cands
                    .iter()
                    .copied()
                    .min_by(|&a, &b| {
                        let ra = self.d[a] / (sign * self.alpha_row[a]);
                        let rb = self.d[b] / (sign * self.alpha_row[b]);
                        ra.total_cmp(&rb)
                    })
                    .expect("nonempty");
            }

            // pivot column
            for i in 0..m {
                self.alpha_col[i] = 0.0;
            }
            if q < self.n {
                for &(k, a) in &self.cols[q] {
                    for i in 0..m {
                        self.alpha_col[i] += self.binv[i * m + k] * a;
                    }
                }
            } else {
                let k = q - self.n;
                for i in 0..m {
                    self.alpha_col[i] = -self.binv[i * m + k];
                }
            }
            let arq = self.alpha_col[r];
            if arq.abs() < PIVOT_TOL || (arq - self.alpha_row[q]).abs() > 1e-7 * (1.0 + arq.abs()) {
                if !just_refreshed {
                    if !self.refresh() {
                        self.reset_to_slack_basis();
                    }
                    self.repair_dual_feasibility();
                    just_refreshed = true;
                    continue;
                }
                if arq.abs() < PIVOT_TOL {
                    // numerically hopeless pivot; start over from the logical basis
                    self.reset_to_slack_basis();
                    self.repair_dual_feasibility();
                    just_refreshed = true;
                    continue;
                }
            }
            just_refreshed = false;

            // dual update
            let theta_d = self.d[q] / arq;
            if theta_d.abs() <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            for j in 0..self.n + m {
                if !matches!(self.state[j], State::Basic(_)) {
                    self.d[j] -= theta_d * self.alpha_row[j];
                }
            }
            let leaving = self.head[r];
            self.d[q] = 0.0;
            self.d[leaving] = -theta_d;

            // primal update
            let theta_p = delta / arq;
            for i in 0..m {
                let j = self.head[i];
                self.x[j] -= theta_p * self.alpha_col[i];
            }
            self.x[q] += theta_p;
            let (leave_state, leave_val) = if delta < 0.0 {
                (State::Lower, self.lo[leaving])
            } else {
                (State::Upper, self.hi[leaving])
            };
            self.x[leaving] = leave_val;

            // basis inverse update
            let prow: Vec<f64> = self.binv[r * m..(r + 1) * m]
                .iter()
                .map(|v| v / arq)
                .collect();
            for i in 0..m {
                if i == r {
                    continue;
                }
                let f = self.alpha_col[i];
                if f == 0.0 {
                    continue;
                }
                let row = &mut self.binv[i * m..(i + 1) * m];
                for k in 0..m {
                    row[k] -= f * prow[k];
                }
            }
            self.binv[r * m..(r + 1) * m].copy_from_slice(&prow);

            self.head[r] = q;
            self.state[q] = State::Basic(r);
            self.state[leaving] = leave_state;
            self.since_refactor += 1;
            self.work += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::problem::{MilpProblem, Sense, VarKind};

    fn solve(p: &MilpProblem) -> (LpStatus, f64, Vec<f64>) {
        let mut s = DualSimplex::new(p);
        let st = s.solve(u64::MAX);
        (st, s.objective(), s.primal().to_vec())
    }

    #[test]
    fn single_variable() {
        let mut p = MilpProblem::new();
        let x = p.add_var("x", 0.0, 10.0, VarKind::Continuous);
        p.add_constraint("c", [(x, 1.0)], Sense::Le, 3.0);
        p.set_objective([(x, 1.0)]);
        let (st, obj, sol) = solve(&p);
        assert_eq!(st, LpStatus::Optimal);
        assert!((obj - 3.0).abs() < 1e-9);
        assert!((sol[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn two_variables() {
        let mut p = MilpProblem::new();
        let x = p.add_var("x", 0.0, 1.0, VarKind::Continuous);
        let y = p.add_var("y", 0.0, 1.0, VarKind::Continuous);
        p.add_constraint("c", [(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        p.set_objective([(x, 1.0), (y, 1.0)]);
        let (st, obj, _) = solve(&p);
        assert_eq!(st, LpStatus::Optimal);
        assert!((obj - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_rows() {
        let mut p = MilpProblem::new();
        let x = p.add_var("x", 0.0, 5.0, VarKind::Continuous);
        p.add_constraint("a", [(x, 1.0)], Sense::Ge, 2.0);
        p.add_constraint("b", [(x, 1.0)], Sense::Le, 1.0);
        p.set_objective([(x, 1.0)]);
        assert_eq!(solve(&p).0, LpStatus::Infeasible);
    }

    #[test]
    fn equality_and_warm_restart() {
        let mut p = MilpProblem::new();
        let x = p.add_var("x", 0.0, 4.0, VarKind::Continuous);
        let y = p.add_var("y", 0.0, 4.0, VarKind::Continuous);
        p.add_constraint("e", [(x, 1.0), (y, 2.0)], Sense::Eq, 4.0);
        p.set_objective([(x, 3.0), (y, 1.0)]);
        let mut s = DualSimplex::new(&p);
        assert_eq!(s.solve(u64::MAX), LpStatus::Optimal);
        assert!((s.objective() - 12.0).abs() < 1e-9);
        let basis = s.basis();
        s.set_bounds(0, 0.0, 2.0);
        assert_eq!(s.solve(u64::MAX), LpStatus::Optimal);
        assert!((s.objective() - 7.0).abs() < 1e-9, "{}", s.objective());
        s.restore(&basis, None);
        s.set_bounds(0, 0.0, 4.0);
        assert_eq!(s.solve(u64::MAX), LpStatus::Optimal);
        assert!((s.objective() - 12.0).abs() < 1e-9);
    }

    fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
            if a[p][c].abs() < 1e-10 {
                return None;
            }
            a.swap(c, p);
            b.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in 0..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
        Some((0..n).map(|i| b[i] / a[i][i]).collect())
    }

    /// Best objective over all basic solutions: every choice of `n` tight
    /// hyperplanes among rows and variable bounds.
    fn vertex_oracle(p: &MilpProblem) -> Option<f64> {
        let n = p.num_vars();
        let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
        for c in p.constraints() {
            let mut row = vec![0.0; n];
            for (v, a) in &c.coeffs {
                row[v.0] = *a;
            }
            planes.push((row, c.rhs));
        }
        for (j, v) in p.vars().iter().enumerate() {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            planes.push((e.clone(), v.lower));
            planes.push((e, v.upper));
        }
        let mut best: Option<f64> = None;
        let k = planes.len();
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            let a = idx.iter().map(|&i| planes[i].0.clone()).collect();
            let b = idx.iter().map(|&i| planes[i].1).collect();
            if let Some(x) = solve_square(a, b) {
                if p.max_violation(&x) <= 1e-9 {
                    let o = p.objective_value(&x);
                    best = Some(best.map_or(o, |v: f64| v.max(o)));
                }
            }
            // next combination
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] < k - n + i {
                    idx[i] += 1;
                    for t in i + 1..n {
                        idx[t] = idx[t - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn matches_vertex_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for case in 0..200 {
            let n = rng.gen_range(1..=5);
            let rows = rng.gen_range(1..=5);
            let mut p = MilpProblem::new();
            let vars: Vec<_> = (0..n)
                .map(|j| {
                    let lo = rng.gen_range(-3.0..1.0);
                    p.add_var(format!("x{j}"), lo, lo + rng.gen_range(0.1..4.0), VarKind::Continuous)
                })
                .collect();
            for r in 0..rows {
                let coeffs: Vec<_> = vars.iter().map(|&v| (v, rng.gen_range(-2.0..2.0))).collect();
                let sense = if rng.gen_bool(0.5) { Sense::Le } else { Sense::Ge };
                p.add_constraint(format!("r{r}"), coeffs, sense, rng.gen_range(-2.0..2.0));
            }
            p.set_objective(vars.iter().map(|&v| (v, rng.gen_range(-1.0..1.0))).collect::<Vec<_>>());
            let (st, obj, x) = solve(&p);
            match vertex_oracle(&p) {
                None => assert_eq!(st, LpStatus::Infeasible, "case {case}"),
                Some(v) => {
                    assert_eq!(st, LpStatus::Optimal, "case {case}");
                    assert!((obj - v).abs() < 1e-6, "case {case}: {obj} vs {v}");
                    assert!(p.max_violation(&x) < 1e-7);
                }
            }
        }
    }
}
