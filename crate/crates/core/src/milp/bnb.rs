//! Best-first branch-and-bound over the binary variables of a [`MilpProblem`].

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::rc::Rc;

use super::problem::{MilpProblem, VarKind};
use super::simplex::{Basis, DualSimplex, LpStatus};

/// Conversion rate from a time limit in seconds to the deterministic work
/// budget (simplex pivots) actually enforced.
pub const PIVOTS_PER_SECOND: f64 = 20_000.0;

const INT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-6;
const GAP_TOL: f64 = 1e-9;
const BINV_CACHE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Limit {
    Seconds(f64),
    Work(u64),
    Unlimited,
}

impl Limit {
    pub fn budget(self) -> u64 {
        match self {
            Limit::Seconds(s) => {
                let w = s * PIVOTS_PER_SECOND;
                if w >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    w.max(1.0) as u64
                }
            }
            Limit::Work(w) => w,
            Limit::Unlimited => u64::MAX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MilpStatus {
    Optimal,
    FeasibleTimeout,
    Infeasible,
    UnknownTimeout,
}

impl MilpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MilpStatus::Optimal => "optimal",
            MilpStatus::FeasibleTimeout => "feasible_timeout",
            MilpStatus::Infeasible => "infeasible",
            MilpStatus::UnknownTimeout => "unknown_timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MilpOutcome {
    pub status: MilpStatus,
    pub incumbent: Option<Vec<f64>>,
    pub incumbent_objective: Option<f64>,
    /// Upper bound on the optimum; `-inf` once infeasibility is proven.
    pub dual_bound: f64,
    pub nodes: u64,
    pub work: u64,
}

struct Node {
    bound: f64,
    id: u64,
    fixes: Vec<(usize, f64)>,
    basis: Option<Rc<(u64, Basis)>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.id.cmp(&other.id))
    }
}

/// Proposes a full assignment from an LP relaxation point.
pub type Heuristic<'a> = Box<dyn FnMut(&[f64]) -> Option<Vec<f64>> + 'a>;

/// Resumable solver: the open nodes and incumbent survive between calls to
/// [`BranchAndBound::solve`].
pub struct BranchAndBound<'a> {
    problem: MilpProblem,
    lp: DualSimplex,
    binaries: Vec<usize>,
    heap: BinaryHeap<Node>,
    incumbent: Option<(Vec<f64>, f64)>,
    heuristic: Option<Heuristic<'a>>,
    next_id: u64,
    current_basis: Option<u64>,
    binv_cache: VecDeque<(u64, Vec<f64>)>,
    nodes: u64,
    /// Node whose LP hit the work limit; the solver state is kept for it.
    suspended: Option<Node>,
}

impl<'a> BranchAndBound<'a> {
    pub fn new(problem: MilpProblem) -> Self {
        let lp = DualSimplex::new(&problem);
        let binaries = (0..problem.num_vars())
            .filter(|&j| problem.vars()[j].kind == VarKind::Binary)
            .collect();
        let root_bound = problem
            .objective()
            .iter()
            .map(|(v, c)| {
                let var = problem.var(*v);
                if *c >= 0.0 {
                    c * var.upper
                } else {
                    c * var.lower
                }
            })
            .sum();
        let mut heap = BinaryHeap::new();
        heap.push(Node {
            bound: root_bound,
            id: 0,
            fixes: Vec::new(),
            basis: None,
        });
        BranchAndBound {
            problem,
            lp,
            binaries,
            heap,
            incumbent: None,
            heuristic: None,
            next_id: 1,
            current_basis: None,
            binv_cache: VecDeque::new(),
            nodes: 0,
            suspended: None,
        }
    }

    pub fn with_heuristic(mut self, h: Heuristic<'a>) -> Self {
        self.heuristic = Some(h);
        self
    }

    pub fn problem(&self) -> &MilpProblem {
        &self.problem
    }

    pub fn incumbent(&self) -> Option<(&[f64], f64)> {
        self.incumbent.as_ref().map(|(x, v)| (x.as_slice(), *v))
    }

    /// Offers a candidate solution; kept if feasible and better than the incumbent.
    pub fn add_candidate(&mut self, x: Vec<f64>) -> bool {
        if x.len() != self.problem.num_vars() || self.problem.max_violation(&x) > FEAS_TOL {
            return false;
        }
        let obj = self.problem.objective_value(&x);
        if self.incumbent.as_ref().map_or(true, |(_, v)| obj > *v) {
            self.incumbent = Some((x, obj));
            true
        } else {
            false
        }
    }

    fn incumbent_value(&self) -> f64 {
        self.incumbent
            .as_ref()
            .map_or(f64::NEG_INFINITY, |(_, v)| *v)
    }

    fn open_bound(&self) -> f64 {
        self.heap
            .peek()
            .into_iter()
            .chain(self.suspended.as_ref())
            .map(|n| n.bound)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dual_bound(&self) -> f64 {
        self.open_bound().max(self.incumbent_value())
    }

    fn outcome(&self, finished: bool) -> MilpOutcome {
        let inc = self.incumbent_value();
        let open = self.open_bound();
        let closed = finished || open <= inc + GAP_TOL;
        let status = match (closed, self.incumbent.is_some()) {
            (true, true) => MilpStatus::Optimal,
            (true, false) => MilpStatus::Infeasible,
            (false, true) => MilpStatus::FeasibleTimeout,
            (false, false) => MilpStatus::UnknownTimeout,
        };
        let dual_bound = if closed { inc } else { open.max(inc) };
        MilpOutcome {
            status,
            incumbent: self.incumbent.as_ref().map(|(x, _)| x.clone()),
            incumbent_objective: self.incumbent.as_ref().map(|(_, v)| *v),
            dual_bound,
            nodes: self.nodes,
            work: self.lp.work,
        }
    }

    fn cached_binv(&self, id: u64) -> Option<&[f64]> {
        self.binv_cache
            .iter()
            .find(|(k, _)| *k == id)
            .map(|(_, b)| b.as_slice())
    }

    fn remember_binv(&mut self, id: u64) {
        if self.binv_cache.len() == BINV_CACHE {
            self.binv_cache.pop_front();
        }
        self.binv_cache.push_back((id, self.lp.binv_snapshot()));
    }

    fn apply_node_bounds(&mut self, fixes: &[(usize, f64)]) {
        for &j in &self.binaries {
            let v = &self.problem.vars()[j];
            self.lp.set_bounds(j, v.lower, v.upper);
        }
        for &(j, val) in fixes {
            self.lp.set_bounds(j, val, val);
        }
    }

    fn prepare_node(&mut self, node: &Node) {
        self.apply_node_bounds(&node.fixes);
        match &node.basis {
            Some(rc) if Some(rc.0) != self.current_basis => {
                let (id, basis) = (rc.0, &rc.1);
                let binv = self.cached_binv(id).map(|b| b.to_vec());
                self.lp.restore(basis, binv.as_deref());
            }
            None if self.current_basis.is_some() => {
                self.lp = DualSimplex::new(&self.problem);
                self.apply_node_bounds(&node.fixes);
            }
            _ => {}
        }
        self.current_basis = node.basis.as_ref().map(|rc| rc.0);
    }

    /// Runs until the search closes or `limit` more work has been spent.
    pub fn solve(&mut self, limit: Limit) -> MilpOutcome {
        let deadline = self.lp.work.saturating_add(limit.budget());
        loop {
            let (node, resumed) = match self.suspended.take() {
                Some(n) => (n, true),
                None => match self.heap.pop() {
                    Some(n) => (n, false),
                    None => break,
                },
            };
            if node.bound <= self.incumbent_value() + GAP_TOL {
                if resumed {
                    self.current_basis = None;
                }
                continue;
            }
            if self.lp.work >= deadline {
                if resumed {
                    self.suspended = Some(node);
                } else {
                    self.heap.push(node);
                }
                return self.outcome(false);
            }
            if !resumed {
                self.prepare_node(&node);
            }
            let st = self.lp.solve(deadline);
            self.lp.work += 1;
            match st {
                LpStatus::WorkLimit => {
                    self.current_basis = None;
                    self.suspended = Some(node);
                    return self.outcome(false);
                }
                LpStatus::Infeasible => {
                    self.nodes += 1;
                    self.current_basis = None;
                    continue;
                }
                LpStatus::Optimal => {}
            }
            self.nodes += 1;
            let obj = self.lp.objective().min(node.bound);
            let x = self.lp.primal().to_vec();
            if let Some(h) = self.heuristic.as_mut() {
                if let Some(cand) = h(&x) {
                    self.add_candidate(cand);
                }
            }
            if obj <= self.incumbent_value() + GAP_TOL {
                self.current_basis = None;
                continue;
            }
            let mut branch: Option<(usize, f64)> = None;
            let mut best_frac = INT_TOL;
            for &j in &self.binaries {
                let f = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
                if f > best_frac {
                    best_frac = f;
                    branch = Some((j, x[j]));
                }
            }
            match branch {
                None => {
                    let mut cand = x;
                    for &j in &self.binaries {
                        cand[j] = cand[j].round();
                    }
                    self.add_candidate(cand);
                    self.current_basis = None;
                }
                Some((j, v)) => {
                    let id = self.next_id;
                    self.next_id += 2;
                    let basis = Rc::new((id, self.lp.basis()));
                    self.remember_binv(id);
                    self.current_basis = Some(id);
                    let preferred = if v >= 0.5 { 1.0 } else { 0.0 };
                    for (k, val) in [(0, 1.0 - preferred), (1, preferred)] {
                        let mut fixes = node.fixes.clone();
                        fixes.push((j, val));
                        self.heap.push(Node {
                            bound: obj,
                            id: id + k,
                            fixes,
                            basis: Some(basis.clone()),
                        });
                    }
                }
            }
        }
        self.outcome(true)
    }
}
