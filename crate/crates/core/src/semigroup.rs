//! Exact linear algebra on finite reachable supports.
//!
//! The banded jump process is already uniformized: its generator is
//! `A = λ₀(N' - I)` with `N'` stochastic, so
//! `P_t = e^{-λ₀t} Σ_k (λ₀t)^k/k! N'^k` and truncating where the Poisson tail
//! drops below `tol` bounds the sup-norm error by `tol`.
//!
//! The branching semigroup acts on multiplicative functionals through the
//! cumulant `h_t`, solution of
//! `h_t = e^{-t} P_t φ + ∫₀^t e^{-(t-u)} P_{t-u} B[h_u ⊗ h_u] du`,
//! integrated here in its differential form `h' = (A - I)h + B[h²]` and
//! cross-checked by Picard iteration of the integral form.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::gamma_lr;
use thiserror::Error;

use crate::kernels::{offspring_distribution, step_for_coord, ClipPolicy, KernelError};
use crate::model::{FractalCoord, Lattice, ModelError, Site};

/// Relative distance at which two generated sizes are identified as one state.
pub const STATE_MERGE_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_SEMIGROUP_TOL: f64 = 1e-12;
pub const DEFAULT_CUMULANT_TOL: f64 = 1e-8;

/// Largest `λ₀t` handled by a single series; longer times are split into equal parts.
const MAX_SERIES_RATE: f64 = 400.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemigroupError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("support is not closed: {from} reaches {to}, which is not a state")]
    UnclosedSupport { from: f64, to: f64 },
    #[error("coordinate {0:?} is not a state of this support")]
    UnknownCoordinate(FractalCoord),
    #[error("resolvent system is singular")]
    SingularSystem,
    #[error("{what}: achieved {achieved:e}, required {required:e}")]
    ToleranceNotMet {
        what: &'static str,
        achieved: f64,
        required: f64,
    },
    #[error("cumulant left [0, 1]: h = {value} at t = {time}")]
    BoundViolation { value: f64, time: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    /// Canonical coordinate (the first one that reached this size).
    pub coord: FractalCoord,
    pub value: f64,
}

/// A finite set of sizes closed under motion and branching, largest first.
#[derive(Debug, Clone)]
pub struct StateSpace {
    lattice: Lattice,
    states: Vec<State>,
    index: HashMap<Site, usize>,
}

impl StateSpace {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.value).collect()
    }

    /// Index of the state a coordinate denotes, by coordinate identity.
    pub fn index_of(&self, c: &FractalCoord) -> Option<usize> {
        self.index.get(&c.site()).copied()
    }

    pub fn contains(&self, c: &FractalCoord) -> bool {
        self.index_of(c).is_some()
    }

    fn require(&self, c: &FractalCoord) -> Result<usize, SemigroupError> {
        self.index_of(c)
            .ok_or(SemigroupError::UnknownCoordinate(*c))
    }

    /// Index of the state with this size, if any.
    pub fn index_of_value(&self, v: f64) -> Option<usize> {
        self.states
            .iter()
            .position(|s| (s.value - v).abs() <= STATE_MERGE_TOLERANCE * v.abs())
    }

    /// Evaluates `f` on every state.
    pub fn tabulate(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.states.iter().map(|s| f(s.value)).collect()
    }
}

/// Closure of all lattice roots under in-band motion and branching (Edge clip
/// targets included, so the result serves both clip policies).
pub fn reachable_support(lattice: &Lattice) -> Result<StateSpace, SemigroupError> {
    let starts: Vec<FractalCoord> = (0..lattice.roots().len()).map(FractalCoord::root).collect();
    reachable_from(&starts, lattice)
}

pub fn reachable_from(
    starts: &[FractalCoord],
    lattice: &Lattice,
) -> Result<StateSpace, SemigroupError> {
    struct Builder {
        states: Vec<State>,
        aliases: Vec<Vec<Site>>,
        index: HashMap<Site, usize>,
    }

    impl Builder {
        /// Returns true when `c` opened a new state.
        fn insert(&mut self, c: FractalCoord, value: f64) -> bool {
            let site = c.site();
            if self.index.contains_key(&site) {
                return false;
            }
            let existing = self
                .states
                .iter()
                .position(|s| (s.value - value).abs() <= STATE_MERGE_TOLERANCE * value);
            match existing {
                Some(k) => {
                    self.index.insert(site, k);
                    self.aliases[k].push(site);
                    false
                }
                None => {
                    self.index.insert(site, self.states.len());
                    self.aliases.push(vec![site]);
                    self.states.push(State { coord: c, value });
                    true
                }
            }
        }
    }

    let mut b = Builder {
        states: Vec::new(),
        aliases: Vec::new(),
        index: HashMap::new(),
    };
    let mut queue = VecDeque::new();
    for c in starts {
        let v = lattice.try_value(c)?;
        lattice.band(c)?;
        if b.insert(*c, v) {
            queue.push_back(*c);
        }
    }

    while let Some(c) = queue.pop_front() {
        let step = step_for_coord(&c, lattice)?;
        let mut next = Vec::with_capacity(8);
        if !c.is_clipped() {
            for branch in [
                crate::kernels::JumpBranch::Small,
                crate::kernels::JumpBranch::Big,
            ] {
                if step.target(branch).in_band {
                    next.push(branch.descend(&c));
                }
            }
        }
        let offspring = offspring_distribution(&c, lattice, ClipPolicy::Edge)?;
        next.extend(offspring.support().map(|(y, _)| *y));
        for y in next {
            let v = lattice.value(&y);
            if b.insert(y, v) {
                queue.push_back(y);
            }
        }
    }

    let mut order: Vec<usize> = (0..b.states.len()).collect();
    order.sort_by(|&p, &q| {
        b.states[q]
            .value
            .total_cmp(&b.states[p].value)
            .then(b.states[p].coord.cmp(&b.states[q].coord))
    });
    let mut states = Vec::with_capacity(order.len());
    let mut index = HashMap::new();
    for (new, &old) in order.iter().enumerate() {
        states.push(b.states[old].clone());
        for site in &b.aliases[old] {
            index.insert(*site, new);
        }
    }
    Ok(StateSpace {
        lattice: lattice.clone(),
        states,
        index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorKind {
    /// One step of the embedded chain.
    Step,
    /// The transition function at time `t`.
    Semigroup(f64),
}

/// A row-stochastic matrix over a [`StateSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionOperator {
    pub matrix: DMatrix<f64>,
    pub kind: OperatorKind,
    /// Number of series terms kept (Semigroup only).
    pub terms: usize,
}

impl TransitionOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.matrix.row(i).iter().copied().collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    pub fn max_abs_diff(&self, other: &DMatrix<f64>) -> f64 {
        (&self.matrix - other).amax()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let v = &self.matrix * DVector::from_column_slice(f);
        v.iter().copied().collect()
    }
}

pub fn step_matrix(space: &StateSpace) -> Result<TransitionOperator, SemigroupError> {
    let n = space.len();
    let lattice = space.lattice();
    let mut m = DMatrix::zeros(n, n);
    for (row, state) in space.states.iter().enumerate() {
        let c = state.coord;
        let step = step_for_coord(&c, lattice)?;
        m[(row, row)] += step.hold;
        if c.is_clipped() {
            continue;
        }
        for branch in [
            crate::kernels::JumpBranch::Small,
            crate::kernels::JumpBranch::Big,
        ] {
            let target = step.target(branch);
            if !target.in_band {
                continue;
            }
            let col =
                space
                    .index_of(&branch.descend(&c))
                    .ok_or(SemigroupError::UnclosedSupport {
                        from: state.value,
                        to: target.value,
                    })?;
            m[(row, col)] += target.probability;
        }
    }
    Ok(TransitionOperator {
        matrix: m,
        kind: OperatorKind::Step,
        terms: 1,
    })
}

/// `P(Poisson(mean) > k)`.
fn poisson_tail(mean: f64, k: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    gamma_lr((k + 1) as f64, mean)
}

fn uniformized_series(step: &DMatrix<f64>, rate: f64, tol: f64) -> (DMatrix<f64>, usize) {
    let n = step.nrows();
    let mut weight = (-rate).exp();
    let mut power = DMatrix::identity(n, n);
    let mut acc = &power * weight;
    let mut k = 0usize;
    while poisson_tail(rate, k) >= tol {
        k += 1;
        power = &power * step;
        weight *= rate / k as f64;
        acc += &power * weight;
    }
    (acc, k + 1)
}

/// `P_t` by truncated uniformization, sup-norm error at most `tol`.
pub fn transition_at(
    t: f64,
    space: &StateSpace,
    tol: f64,
) -> Result<TransitionOperator, SemigroupError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(SemigroupError::InvalidInput(format!(
            "time {t} must be finite and >= 0"
        )));
    }
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(SemigroupError::InvalidInput(format!(
            "tolerance {tol} must lie in (0, 1e-6]"
        )));
    }
    let step = step_matrix(space)?;
    Ok(transition_from_step(
        &step.matrix,
        space.lattice().params().lambda0(),
        t,
        tol,
    ))
}

pub(crate) fn transition_from_step(
    step: &DMatrix<f64>,
    lambda0: f64,
    t: f64,
    tol: f64,
) -> TransitionOperator {
    let n = step.nrows();
    if t == 0.0 {
        return TransitionOperator {
            matrix: DMatrix::identity(n, n),
            kind: OperatorKind::Semigroup(0.0),
            terms: 1,
        };
    }
    let rate = lambda0 * t;
    let parts = (rate / MAX_SERIES_RATE).ceil().max(1.0) as u32;
    let (mut matrix, terms) = uniformized_series(step, rate / parts as f64, tol / parts as f64);
    if parts > 1 {
        let base = matrix.clone();
        for _ in 1..parts {
            matrix = &matrix * &base;
        }
    }
    matrix.apply(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
    TransitionOperator {
        matrix,
        kind: OperatorKind::Semigroup(t),
        terms,
    }
}

/// The generator `λ₀(N' - I)` as a matrix.
pub fn generator_matrix(space: &StateSpace) -> Result<DMatrix<f64>, SemigroupError> {
    let step = step_matrix(space)?;
    let n = space.len();
    Ok((step.matrix - DMatrix::identity(n, n)) * space.lattice().params().lambda0())
}

pub fn generator_apply(f: &[f64], space: &StateSpace) -> Result<Vec<f64>, SemigroupError> {
    check_len(f, space)?;
    let step = step_matrix(space)?;
    let nf = step.apply(f);
    let l = space.lattice().params().lambda0();
    Ok(nf.iter().zip(f).map(|(a, b)| l * (a - b)).collect())
}

fn check_len(f: &[f64], space: &StateSpace) -> Result<(), SemigroupError> {
    if f.len() != space.len() {
        return Err(SemigroupError::InvalidInput(format!(
            "vector has {} entries, support has {} states",
            f.len(),
            space.len()
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(SemigroupError::InvalidInput(
            "vector has non-finite entries".into(),
        ));
    }
    Ok(())
}

/// `U_α f = (αI - A)^{-1} f`.
pub fn resolvent_apply(
    alpha: f64,
    f: &[f64],
    space: &StateSpace,
) -> Result<Vec<f64>, SemigroupError> {
    if !(alpha > 0.0) {
        return Err(SemigroupError::InvalidInput(format!(
            "alpha {alpha} must be > 0"
        )));
    }
    check_len(f, space)?;
    let n = space.len();
    let system = DMatrix::identity(n, n) * alpha - generator_matrix(space)?;
    let rhs = DVector::from_column_slice(f);
    let u = system
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(SemigroupError::SingularSystem)?;
    let residual = (&system * &u - &rhs).amax();
    let scale = rhs.amax().max(f64::MIN_POSITIVE);
    if residual > 1e-12 * scale {
        return Err(SemigroupError::ToleranceNotMet {
            what: "resolvent residual",
            achieved: residual / scale,
            required: 1e-12,
        });
    }
    Ok(u.iter().copied().collect())
}

/// `∫₀^t (P_s A f)(x) ds` by composite Simpson quadrature on the exact semigroup.
pub fn generator_path_integral(
    f: &[f64],
    from: usize,
    t: f64,
    space: &StateSpace,
    intervals: usize,
) -> Result<f64, SemigroupError> {
    check_len(f, space)?;
    let intervals = intervals.max(2) + intervals % 2;
    let af = DVector::from_vec(generator_apply(f, space)?);
    let step = step_matrix(space)?;
    let l = space.lattice().params().lambda0();
    let h = t / intervals as f64;
    let mut sum = 0.0;
    for k in 0..=intervals {
        let p = transition_from_step(&step.matrix, l, k as f64 * h, DEFAULT_SEMIGROUP_TOL);
        let value = (p.matrix.row(from) * &af)[0];
        let w = if k == 0 || k == intervals {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * value;
    }
    Ok(sum * h / 3.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantOptions {
    pub tol: f64,
    /// Number of equal intervals in the reported time grid.
    pub report_intervals: usize,
    pub min_picard_iterations: usize,
    pub max_picard_iterations: usize,
    /// Trapezoid steps per unit time for the Picard cross-check (coarse grid).
    pub picard_steps_per_unit: usize,
    pub max_halvings: usize,
}

impl Default for CumulantOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_CUMULANT_TOL,
            report_intervals: 8,
            min_picard_iterations: 3,
            max_picard_iterations: 400,
            picard_steps_per_unit: 256,
            max_halvings: 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSolution {
    pub times: Vec<f64>,
    /// `values[k][x]` is `h_{times[k]}(x)`.
    pub values: Vec<Vec<f64>>,
    pub policy: ClipPolicy,
    pub rk4_step: f64,
    /// Largest change at the report times when the step was last halved.
    pub halving_change: f64,
    pub picard_iterations: usize,
    pub picard_steps: usize,
    /// Largest gap between the integrated and the Picard solution.
    pub picard_discrepancy: f64,
}

impl CumulantSolution {
    pub fn final_values(&self) -> &[f64] {
        self.values.last().expect("grid has at least one time")
    }

    /// `Π_particles h_t(position)` at the final time; `1` for the empty configuration.
    pub fn multiplicative(
        &self,
        config: &[FractalCoord],
        space: &StateSpace,
    ) -> Result<f64, SemigroupError> {
        let h = self.final_values();
        config
            .iter()
            .try_fold(1.0, |acc, c| Ok(acc * h[space.require(c)?]))
    }
}

/// Row-stochastic offspring matrix: `W[x][y]` is the probability that both
/// offspring of `x` start at `y`.
pub fn branching_matrix(
    space: &StateSpace,
    policy: ClipPolicy,
) -> Result<DMatrix<f64>, SemigroupError> {
    let n = space.len();
    let lattice = space.lattice();
    let mut w = DMatrix::zeros(n, n);
    for (row, state) in space.states.iter().enumerate() {
        let dist = offspring_distribution(&state.coord, lattice, policy)?;
        for (c, p) in dist.support() {
            if *p == 0.0 {
                continue;
            }
            let col = space.index_of(c).ok_or(SemigroupError::UnclosedSupport {
                from: state.value,
                to: lattice.value(c),
            })?;
            w[(row, col)] += p;
        }
    }
    Ok(w)
}

struct CumulantSystem {
    generator: DMatrix<f64>,
    branching: DMatrix<f64>,
}

impl CumulantSystem {
    fn rhs(&self, h: &DVector<f64>) -> DVector<f64> {
        &self.generator * h - h + &self.branching * h.component_mul(h)
    }

    fn rk4(&self, h0: &DVector<f64>, span: f64, steps: usize) -> DVector<f64> {
        let dt = span / steps as f64;
        let mut h = h0.clone();
        for _ in 0..steps {
            let k1 = self.rhs(&h);
            let k2 = self.rhs(&(&h + &k1 * (dt / 2.0)));
            let k3 = self.rhs(&(&h + &k2 * (dt / 2.0)));
            let k4 = self.rhs(&(&h + &k3 * dt));
            h += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        h
    }

    fn integrate(
        &self,
        phi: &DVector<f64>,
        times: &[f64],
        steps_per_interval: usize,
    ) -> Vec<DVector<f64>> {
        let mut out = vec![phi.clone()];
        for w in times.windows(2) {
            let next = self.rk4(out.last().unwrap(), w[1] - w[0], steps_per_interval);
            out.push(next);
        }
        out
    }
}

/// Picard iteration of the integral form on a uniform grid of `steps` steps,
/// trapezoidal rule in time. Returns the grid solution and the iteration count.
fn picard(
    system: &CumulantSystem,
    step: &DMatrix<f64>,
    lambda0: f64,
    phi: &DVector<f64>,
    t_end: f64,
    steps: usize,
    opts: &CumulantOptions,
) -> (Vec<DVector<f64>>, usize) {
    let dt = t_end / steps as f64;
    // e^{-dt} P_dt; powers of it give e^{-t} P_t on the grid
    let kernel = transition_from_step(step, lambda0, dt, 1e-15).matrix * (-dt).exp();

    let mut free = Vec::with_capacity(steps + 1);
    free.push(phi.clone());
    for i in 0..steps {
        let next = &kernel * &free[i];
        free.push(next);
    }

    let mut h: Vec<DVector<f64>> = vec![phi.clone(); steps + 1];
    let mut iterations = 0;
    loop {
        let source: Vec<DVector<f64>> = h
            .iter()
            .map(|v| &system.branching * v.component_mul(v))
            .collect();
        let mut next = Vec::with_capacity(steps + 1);
        let mut integral = DVector::zeros(phi.len());
        next.push(free[0].clone());
        for i in 0..steps {
            integral =
                &kernel * (&integral + &source[i] * (dt / 2.0)) + &source[i + 1] * (dt / 2.0);
            next.push(&free[i + 1] + &integral);
        }
        let change = h
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        h = next;
        iterations += 1;
        if (iterations >= opts.min_picard_iterations && change <= 1e-14)
            || iterations >= opts.max_picard_iterations
        {
            break;
        }
    }
    (h, iterations)
}

/// Solves the cumulant equation for `φ` on `[0, t_end]`.
pub fn cumulant_solve(
    phi: &[f64],
    t_end: f64,
    space: &StateSpace,
    policy: ClipPolicy,
    opts: &CumulantOptions,
) -> Result<CumulantSolution, SemigroupError> {
    check_len(phi, space)?;
    if phi.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(SemigroupError::InvalidInput(
            "phi must take values in [0, 1]".into(),
        ));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(SemigroupError::InvalidInput(format!(
            "time {t_end} must be finite and >= 0"
        )));
    }
    if !(opts.tol > 0.0) || opts.report_intervals == 0 {
        return Err(SemigroupError::InvalidInput(
            "tolerance and grid must be positive".into(),
        ));
    }

    let lambda0 = space.lattice().params().lambda0();
    let step = step_matrix(space)?;
    let system = CumulantSystem {
        generator: generator_matrix(space)?,
        branching: branching_matrix(space, policy)?,
    };
    let phi_v = DVector::from_column_slice(phi);
    let intervals = if t_end == 0.0 {
        1
    } else {
        opts.report_intervals
    };
    let times: Vec<f64> = (0..=intervals)
        .map(|k| t_end * k as f64 / intervals as f64)
        .collect();

    if t_end == 0.0 {
        return Ok(CumulantSolution {
            times: vec![0.0],
            values: vec![phi.to_vec()],
            policy,
            rk4_step: 0.0,
            halving_change: 0.0,
            picard_iterations: 0,
            picard_steps: 0,
            picard_discrepancy: 0.0,
        });
    }

    let interval = t_end / intervals as f64;
    let mut steps = ((interval / 0.05).ceil() as usize).max(2);
    let mut coarse = system.integrate(&phi_v, &times, steps);
    let mut halving_change = f64::INFINITY;
    for _ in 0..opts.max_halvings {
        steps *= 2;
        let fine = system.integrate(&phi_v, &times, steps);
        halving_change = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        coarse = fine;
        if halving_change < opts.tol / 10.0 {
            break;
        }
    }
    if !(halving_change < opts.tol / 10.0) {
        return Err(SemigroupError::ToleranceNotMet {
            what: "step halving",
            achieved: halving_change,
            required: opts.tol / 10.0,
        });
    }

    // Picard cross-check: trapezoid on two grids, Richardson-combined
    let per_interval = ((opts.picard_steps_per_unit as f64 * interval).ceil() as usize).max(4);
    let m = per_interval * intervals;
    let (h_coarse, iters_coarse) = picard(&system, &step.matrix, lambda0, &phi_v, t_end, m, opts);
    let (h_fine, iters_fine) = picard(&system, &step.matrix, lambda0, &phi_v, t_end, 2 * m, opts);
    let mut discrepancy: f64 = 0.0;
    for (k, h) in coarse.iter().enumerate() {
        let extrapolated =
            (&h_fine[2 * k * per_interval] * 4.0 - &h_coarse[k * per_interval]) / 3.0;
        discrepancy = discrepancy.max((h - extrapolated).amax());
    }
    if discrepancy > opts.tol {
        return Err(SemigroupError::ToleranceNotMet {
            what: "Picard cross-check",
            achieved: discrepancy,
            required: opts.tol,
        });
    }

    let mut values = Vec::with_capacity(coarse.len());
    for (h, &time) in coarse.iter().zip(&times) {
        let mut row = Vec::with_capacity(h.len());
        for &v in h.iter() {
            if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                return Err(SemigroupError::BoundViolation { value: v, time });
            }
            row.push(v.clamp(0.0, 1.0));
        }
        values.push(row);
    }

    Ok(CumulantSolution {
        times,
        values,
        policy,
        rk4_step: interval / steps as f64,
        halving_change,
        picard_iterations: iters_coarse.max(iters_fine),
        picard_steps: 2 * m,
        picard_discrepancy: discrepancy,
    })
}

/// `E_config[Π φ(particles at t)] = Π h_t(particle)`.
pub fn branching_expectation(
    config: &[FractalCoord],
    phi: &[f64],
    t: f64,
    space: &StateSpace,
    policy: ClipPolicy,
    opts: &CumulantOptions,
) -> Result<f64, SemigroupError> {
    for c in config {
        space.require(c)?;
    }
    if config.is_empty() {
        return Ok(1.0);
    }
    cumulant_solve(phi, t, space, policy, opts)?.multiplicative(config, space)
}
