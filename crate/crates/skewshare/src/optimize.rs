//! Share optimization and reducer allocation.
//!
//! Per residual join we minimize the communication posynomial subject to
//! the product of the free attribute shares equaling the reducer budget,
//! shares >= 1. In log-share space the objective is a sum of exponentials
//! of affine functions (convex) with one linear equality constraint and a
//! box constraint, solved by damped Newton steps with active-set clamping
//! at share = 1.
//!
//! The global budget k is split across residual joins by equalizing
//! marginal gains of the predicted per-reducer load (optimal
//! communication divided by the residual's reducer count), which is
//! nonincreasing and convex in the budget; the integer split uses the
//! exact marginal-greedy algorithm for separable convex objectives.

use std::collections::{BTreeMap, HashMap};

use crate::cost::{
    evaluate_cost_integer, ContinuousShares, CostExpression, IntegerShares, RelationSizes,
};
use crate::error::{Error, Result};
use crate::query::Attribute;

/// How integer shares are derived from the continuous optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegerizeMode {
    /// Enumerate every integer share vector whose product is exactly the
    /// budget and keep the cost-minimal one (exact at desk scale).
    Exhaustive,
    /// Distribute the budget's prime factors one at a time onto the share
    /// whose growth is cheapest.
    GreedyRound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Relative convergence threshold for the continuous solver.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub integerize: IntegerizeMode,
    /// Bail out of exhaustive enumeration beyond this many vectors and
    /// fall back to greedy rounding.
    pub exhaustive_cap: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            tolerance: 1e-9,
            max_iterations: 10_000,
            integerize: IntegerizeMode::Exhaustive,
            exhaustive_cap: 500_000,
        }
    }
}

/// Result of the continuous share optimization for one residual join.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSolution {
    pub shares: ContinuousShares,
    /// Optimal communication cost (constant terms included).
    pub cost: f64,
    pub iterations: usize,
    /// Relative stationarity residual over unclamped shares.
    pub kkt_residual: f64,
    /// Attributes clamped at share 1.
    pub clamped: Vec<Attribute>,
    pub converged: bool,
}

impl ContinuousSolution {
    fn trivial(vars: &[Attribute], cost: f64) -> Self {
        ContinuousSolution {
            shares: vars.iter().map(|v| (v.clone(), 1.0)).collect(),
            cost,
            iterations: 0,
            kkt_residual: 0.0,
            clamped: Vec::new(),
            converged: true,
        }
    }
}

/// Minimize the communication cost of `expr` over the shares of `vars`
/// subject to their product equaling `budget` and every share >= 1.
pub fn optimize_shares_continuous(
    expr: &CostExpression,
    sizes: &RelationSizes,
    vars: &[Attribute],
    budget: u64,
    cfg: &OptimizerConfig,
) -> Result<ContinuousSolution> {
    if budget < 1 {
        return Err(Error::InvalidArgument(
            "share budget must be >= 1".to_string(),
        ));
    }
    let constant: f64 = expr
        .terms
        .iter()
        .filter(|t| !t.variables.iter().any(|v| vars.contains(v)))
        .map(|t| size_of(sizes, &t.relation))
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();

    // Terms that involve at least one optimized variable.
    let coeffs: Vec<f64> = expr
        .terms
        .iter()
        .filter(|t| t.variables.iter().any(|v| vars.contains(v)))
        .map(|t| size_of(sizes, &t.relation))
        .collect::<Result<Vec<f64>>>()?;
    let memberships: Vec<Vec<usize>> = expr
        .terms
        .iter()
        .filter(|t| t.variables.iter().any(|v| vars.contains(v)))
        .map(|t| {
            vars.iter()
                .enumerate()
                .filter(|(_, v)| t.variables.contains(v))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    if vars.is_empty() || budget == 1 {
        return Ok(ContinuousSolution::trivial(
            vars,
            constant + coeffs.iter().sum::<f64>(),
        ));
    }

    // Variables that appear in no term are costless: they absorb the whole
    // budget and everything else stays at 1. At most one such attribute can
    // survive dominance, but the shares are split evenly in log space if a
    // caller hands several.
    let costless: Vec<usize> = (0..vars.len())
        .filter(|i| !memberships.iter().any(|m| m.contains(i)))
        .collect();
    if !costless.is_empty() {
        let per = (budget as f64).powf(1.0 / costless.len() as f64);
        let mut shares: ContinuousShares = vars.iter().map(|v| (v.clone(), 1.0)).collect();
        for i in &costless {
            shares.insert(vars[*i].clone(), per);
        }
        let cost = constant + coeffs.iter().sum::<f64>();
        return Ok(ContinuousSolution {
            shares,
            cost,
            iterations: 0,
            kkt_residual: 0.0,
            clamped: Vec::new(),
            converged: true,
        });
    }

    let solver = LogSpaceSolver {
        coeffs,
        memberships,
        n: vars.len(),
    };
    let state = solver.solve((budget as f64).ln(), cfg);

    let shares: ContinuousShares = vars
        .iter()
        .zip(&state.u)
        .map(|(v, u)| (v.clone(), u.exp()))
        .collect();
    let clamped = vars
        .iter()
        .zip(&state.active)
        .filter(|(_, a)| !**a)
        .map(|(v, _)| v.clone())
        .collect();
    Ok(ContinuousSolution {
        shares,
        cost: constant + solver.objective(&state.u),
        iterations: state.iterations,
        kkt_residual: state.kkt_residual,
        clamped,
        converged: state.converged,
    })
}

fn size_of(sizes: &RelationSizes, relation: &str) -> Result<f64> {
    sizes
        .get(relation)
        .map(|n| *n as f64)
        .ok_or_else(|| Error::UnknownRelation(relation.to_string()))
}

struct LogSpaceSolver {
    coeffs: Vec<f64>,
    memberships: Vec<Vec<usize>>,
    n: usize,
}

struct SolverState {
    u: Vec<f64>,
    active: Vec<bool>,
    iterations: usize,
    kkt_residual: f64,
    converged: bool,
}

impl LogSpaceSolver {
    fn objective(&self, u: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.memberships)
            .map(|(c, m)| c * m.iter().map(|i| u[*i]).sum::<f64>().exp())
            .sum()
    }

    /// S_v = sum of the terms containing v; equal across unclamped
    /// variables at the optimum.
    fn term_sums(&self, u: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for (c, m) in self.coeffs.iter().zip(&self.memberships) {
            let val = c * m.iter().map(|i| u[*i]).sum::<f64>().exp();
            for i in m {
                s[*i] += val;
            }
        }
        s
    }

    fn solve(&self, log_budget: f64, cfg: &OptimizerConfig) -> SolverState {
        let mut active = vec![true; self.n];
        let mut iterations = 0usize;
        let mut u = vec![0.0; self.n];

        // active-set loop: solve on the unclamped set, clamp shares that
        // fall below 1, release clamped shares whose marginal cost drops
        // below the multiplier
        for _round in 0..2 * self.n + 2 {
            let act: Vec<usize> = (0..self.n).filter(|i| active[*i]).collect();
            if act.is_empty() {
                break;
            }
            for i in 0..self.n {
                u[i] = if active[i] {
                    log_budget / act.len() as f64
                } else {
                    0.0
                };
            }
            iterations += self.newton_on_active(&mut u, &act, log_budget, cfg);

            // clamp the most negative share, if any
            if let Some(&worst) = act
                .iter()
                .filter(|i| u[**i] < -1e-12)
                .min_by(|a, b| u[**a].partial_cmp(&u[**b]).unwrap())
            {
                active[worst] = false;
                continue;
            }
            // release clamped variables that violate dual feasibility
            let s = self.term_sums(&u);
            let nu = act.iter().map(|i| s[*i]).sum::<f64>() / act.len() as f64;
            let violator = (0..self.n)
                .filter(|i| !active[*i])
                .filter(|i| s[*i] < nu * (1.0 - 1e-9))
                .min_by(|a, b| s[*a].partial_cmp(&s[*b]).unwrap());
            match violator {
                Some(i) => active[i] = true,
                None => break,
            }
        }

        // stationarity on the unclamped set plus dual feasibility of the
        // clamped set (a clamped share must not want to grow)
        let s = self.term_sums(&u);
        let act: Vec<usize> = (0..self.n).filter(|i| active[*i]).collect();
        let kkt_residual = if act.is_empty() {
            0.0
        } else {
            let nu = act.iter().map(|i| s[*i]).sum::<f64>() / act.len() as f64;
            let stationarity = act
                .iter()
                .map(|i| (s[*i] - nu).abs())
                .fold(0.0f64, f64::max);
            let dual_violation = (0..self.n)
                .filter(|i| !active[*i])
                .map(|i| (nu - s[i]).max(0.0))
                .fold(0.0f64, f64::max);
            stationarity.max(dual_violation) / nu.max(f64::MIN_POSITIVE)
        };
        SolverState {
            u,
            active,
            iterations,
            kkt_residual,
            converged: kkt_residual <= (cfg.tolerance * 100.0).max(1e-10),
        }
    }

    /// Damped Newton on the equality-constrained subproblem restricted to
    /// `act`; returns iterations used. Keeps sum(u[act]) = log_budget.
    #[allow(clippy::needless_range_loop)]
    fn newton_on_active(
        &self,
        u: &mut [f64],
        act: &[usize],
        log_budget: f64,
        cfg: &OptimizerConfig,
    ) -> usize {
        let m = act.len();
        if m == 1 {
            u[act[0]] = log_budget;
            return 1;
        }
        let mut iterations = 0;
        let cap = cfg.max_iterations.min(200);
        while iterations < cap {
            iterations += 1;
            let s = self.term_sums(u);
            let grad: Vec<f64> = act.iter().map(|i| s[*i]).collect();

            // KKT system: [H 1; 1^T 0] [d; mu] = [-grad; 0]
            let mut h = vec![vec![0.0; m + 1]; m + 1];
            for (c, mem) in self.coeffs.iter().zip(&self.memberships) {
                let val = c * mem.iter().map(|i| u[*i]).sum::<f64>().exp();
                for (ai, &i) in act.iter().enumerate() {
                    if !mem.contains(&i) {
                        continue;
                    }
                    for (aj, &j) in act.iter().enumerate() {
                        if mem.contains(&j) {
                            h[ai][aj] += val;
                        }
                    }
                }
            }
            let ridge = 1e-12 * (1.0 + grad.iter().sum::<f64>());
            for i in 0..m {
                h[i][i] += ridge;
                h[i][m] = 1.0;
                h[m][i] = 1.0;
            }
            let mut rhs = vec![0.0; m + 1];
            for i in 0..m {
                rhs[i] = -grad[i];
            }
            let d = match solve_dense(&mut h, &mut rhs) {
                Some(d) => d,
                None => break,
            };

            let step_norm = d[..m].iter().map(|x| x.abs()).fold(0.0f64, f64::max);
            if step_norm < 1e-15 {
                break;
            }
            // trust region against exp overflow
            let scale = if step_norm > 20.0 {
                20.0 / step_norm
            } else {
                1.0
            };

            let g0 = self.objective(u);
            let descent: f64 = grad.iter().zip(&d[..m]).map(|(g, di)| g * di).sum();
            let mut t = scale;
            let mut accepted = false;
            for _ in 0..60 {
                let mut trial = u.to_vec();
                for (ai, &i) in act.iter().enumerate() {
                    trial[i] = u[i] + t * d[ai];
                }
                if self.objective(&trial) <= g0 + 1e-4 * t * descent {
                    u.copy_from_slice(&trial);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            // a share diving well below 1 means the equality-constrained
            // optimum sits outside the box: hand back to the clamping loop
            if act.iter().any(|i| u[*i] < -1.0) {
                break;
            }

            // stationarity check
            let s = self.term_sums(u);
            let nu = act.iter().map(|i| s[*i]).sum::<f64>() / m as f64;
            let res = act
                .iter()
                .map(|i| (s[*i] - nu).abs())
                .fold(0.0f64, f64::max)
                / nu.max(1e-300);
            if res < cfg.tolerance {
                break;
            }
        }
        // keep the constraint exact against float drift
        let drift = (act.iter().map(|i| u[*i]).sum::<f64>() - log_budget) / m as f64;
        for &i in act {
            u[i] -= drift;
        }
        iterations
    }
}

/// Gaussian elimination with partial pivoting; `a` is square, consumed.
#[allow(clippy::needless_range_loop)]
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot =
            (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

/// Closed form for the two-share family min r*y + s*x with x*y = k:
/// x = sqrt(k*r/s) clamped into [1, k], y = k/x. Returns (x, y, cost).
pub fn two_way_closed_form(r: u64, s: u64, k: u64) -> (f64, f64, f64) {
    let (rf, sf, kf) = (r as f64, s as f64, k as f64);
    let mut x = (kf * rf / sf).sqrt();
    if x > kf {
        x = kf;
    }
    if x < 1.0 {
        x = 1.0;
    }
    let mut y = kf / x;
    if y < 1.0 {
        y = 1.0;
        x = kf;
    }
    (x, y, rf * y + sf * x)
}

/// Integer shares with product exactly `budget`, minimizing the
/// communication cost. Exhaustive mode enumerates every ordered
/// factorization (falling back to greedy beyond `exhaustive_cap`);
/// greedy mode assigns the budget's prime factors to the cheapest share.
pub fn integerize_shares(
    continuous: &ContinuousShares,
    expr: &CostExpression,
    sizes: &RelationSizes,
    vars: &[Attribute],
    budget: u64,
    cfg: &OptimizerConfig,
) -> Result<IntegerShares> {
    if budget < 1 {
        return Err(Error::InvalidArgument(
            "integer budget must be >= 1".to_string(),
        ));
    }
    if vars.is_empty() {
        return Ok(IntegerShares::new());
    }
    if budget == 1 {
        return Ok(vars.iter().map(|v| (v.clone(), 1u64)).collect());
    }
    match cfg.integerize {
        IntegerizeMode::Exhaustive => {
            if count_factorizations(budget, vars.len(), cfg.exhaustive_cap) > cfg.exhaustive_cap {
                greedy_round(continuous, expr, sizes, vars, budget)
            } else {
                exhaustive_integerize(expr, sizes, vars, budget)
            }
        }
        IntegerizeMode::GreedyRound => greedy_round(continuous, expr, sizes, vars, budget),
    }
}

fn count_factorizations(budget: u64, nvars: usize, cap: u64) -> u64 {
    fn rec(rest: u64, slots: usize, cap: u64) -> u64 {
        if slots == 1 {
            return 1;
        }
        let mut total = 0;
        for d in divisors(rest) {
            total += rec(rest / d, slots - 1, cap);
            if total > cap {
                return total;
            }
        }
        total
    }
    rec(budget, nvars, cap)
}

fn divisors(n: u64) -> Vec<u64> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n.is_multiple_of(d) {
            small.push(d);
            if d * d != n {
                large.push(n / d);
            }
        }
        d += 1;
    }
    large.reverse();
    small.extend(large);
    small
}

fn exhaustive_integerize(
    expr: &CostExpression,
    sizes: &RelationSizes,
    vars: &[Attribute],
    budget: u64,
) -> Result<IntegerShares> {
    let mut best: Option<(u64, Vec<u64>)> = None;
    let mut current = vec![1u64; vars.len()];
    enumerate_rec(expr, sizes, vars, budget, 0, &mut current, &mut best)?;
    let (_, shares) = best.expect("at least (budget, 1, ..., 1) is enumerated");
    Ok(vars.iter().cloned().zip(shares).collect())
}

fn enumerate_rec(
    expr: &CostExpression,
    sizes: &RelationSizes,
    vars: &[Attribute],
    rest: u64,
    pos: usize,
    current: &mut Vec<u64>,
    best: &mut Option<(u64, Vec<u64>)>,
) -> Result<()> {
    if pos == vars.len() - 1 {
        current[pos] = rest;
        let assignment: IntegerShares = vars.iter().cloned().zip(current.iter().copied()).collect();
        let cost = evaluate_cost_integer(expr, sizes, &assignment)?;
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            *best = Some((cost, current.clone()));
        }
        return Ok(());
    }
    for d in divisors(rest) {
        current[pos] = d;
        enumerate_rec(expr, sizes, vars, rest / d, pos + 1, current, best)?;
    }
    Ok(())
}

fn greedy_round(
    _continuous: &ContinuousShares,
    expr: &CostExpression,
    sizes: &RelationSizes,
    vars: &[Attribute],
    budget: u64,
) -> Result<IntegerShares> {
    let mut shares: IntegerShares = vars.iter().map(|v| (v.clone(), 1u64)).collect();
    let mut factors = prime_factors(budget);
    factors.reverse(); // largest prime first
    for p in factors {
        let mut best: Option<(u64, &Attribute)> = None;
        for v in vars {
            let mut trial = shares.clone();
            *trial.get_mut(v).unwrap() *= p;
            let cost = evaluate_cost_integer(expr, sizes, &trial)?;
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, v));
            }
        }
        let (_, v) = best.expect("vars is non-empty");
        *shares.get_mut(v).unwrap() *= p;
    }
    Ok(shares)
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        while n.is_multiple_of(d) {
            out.push(d);
            n /= d;
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// One residual join as seen by the allocator.
#[derive(Debug, Clone)]
pub struct ResidualProblem {
    pub expression: CostExpression,
    pub sizes: RelationSizes,
    pub free_vars: Vec<Attribute>,
    /// True when some relation contributes no tuples.
    pub empty: bool,
}

/// The allocator's verdict for one residual join.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualAllocation {
    pub budget: u64,
    pub continuous: ContinuousSolution,
    pub integer_shares: IntegerShares,
    pub integer_cost: u64,
}

/// Split `k` reducers across the residual joins: empty ones get 0,
/// residuals without free attributes get 1 (their grid is a single
/// cell), and the rest receive reducers one at a time wherever the
/// predicted per-reducer load drops the most.
pub fn allocate_reducers(
    problems: &[ResidualProblem],
    k: u64,
    cfg: &OptimizerConfig,
) -> Result<Vec<ResidualAllocation>> {
    let non_empty = problems.iter().filter(|p| !p.empty).count() as u64;
    if k < non_empty {
        return Err(Error::InsufficientBudget {
            k,
            required: non_empty,
        });
    }

    let active: Vec<usize> = problems
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.empty && !p.free_vars.is_empty())
        .map(|(i, _)| i)
        .collect();
    let fixed: u64 = problems
        .iter()
        .filter(|p| !p.empty && p.free_vars.is_empty())
        .count() as u64;
    let spendable = k - fixed;

    let mut budgets: BTreeMap<usize, u64> = active.iter().map(|i| (*i, 1u64)).collect();
    let mut comm_cache: HashMap<(usize, u64), f64> = HashMap::new();
    let solve_comm =
        |i: usize, budget: u64, cache: &mut HashMap<(usize, u64), f64>| -> Result<f64> {
            if let Some(c) = cache.get(&(i, budget)) {
                return Ok(*c);
            }
            let p = &problems[i];
            let sol =
                optimize_shares_continuous(&p.expression, &p.sizes, &p.free_vars, budget, cfg)?;
            cache.insert((i, budget), sol.cost);
            Ok(sol.cost)
        };

    // marginal greedy on the per-reducer load L_i(b) = comm_i(b) / b
    let mut remaining = spendable - active.len() as u64;
    while remaining > 0 && !active.is_empty() {
        let mut best: Option<(f64, usize)> = None;
        for &i in &active {
            let b = budgets[&i];
            let here = solve_comm(i, b, &mut comm_cache)? / b as f64;
            let next = solve_comm(i, b + 1, &mut comm_cache)? / (b + 1) as f64;
            let gain = here - next;
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, i));
            }
        }
        let (_, winner) = best.expect("active set is non-empty when budget remains");
        *budgets.get_mut(&winner).unwrap() += 1;
        remaining -= 1;
    }

    let mut out = Vec::with_capacity(problems.len());
    for (i, p) in problems.iter().enumerate() {
        if p.empty {
            out.push(ResidualAllocation {
                budget: 0,
                continuous: ContinuousSolution::trivial(&p.free_vars, 0.0),
                integer_shares: IntegerShares::new(),
                integer_cost: 0,
            });
            continue;
        }
        let budget = budgets.get(&i).copied().unwrap_or(1);
        let continuous =
            optimize_shares_continuous(&p.expression, &p.sizes, &p.free_vars, budget, cfg)?;
        let integer_shares = integerize_shares(
            &continuous.shares,
            &p.expression,
            &p.sizes,
            &p.free_vars,
            budget,
            cfg,
        )?;
        let integer_cost = evaluate_cost_integer(&p.expression, &p.sizes, &integer_shares)?;
        out.push(ResidualAllocation {
            budget,
            continuous,
            integer_shares,
            integer_cost,
        });
    }
    Ok(out)
}
