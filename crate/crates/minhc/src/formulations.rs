//! Square polynomial systems for the two depth formulations, their Jacobians,
//! and the fixed-pattern linear solver used on the tracking hot path.
//!
//! Both systems equate squared distances between pairs of 3D points
//! reconstructed in two different cameras: for points `k, m` and views `i, j`,
//!
//! ```text
//! ||l_{k,i} v_{k,i} - l_{m,i} v_{m,i}||^2 - ||l_{k,j} v_{k,j} - l_{m,j} v_{m,j}||^2 = 0
//! ```
//!
//! with `v = [x; 1]` (no unit normalization; ray conditioning is the
//! normalizer's job) and the gauge `l_{1,1} = 1` substituted, so the first
//! depth is omitted from the solution vector. The five-point system keeps 9 of
//! the 10 point-pair constraints (the (4,5) row is dropped); Scranton keeps the
//! 6 point pairs over view pairs (1,2) and (1,3), and frees the first point in
//! the first view along a vertical line: `v_{1,1} + l*[0;1;0]` with the offset
//! `l` as a twelfth unknown.
//!
//! Everything here is generic over [`Scalar`] so the same straight-line code
//! runs in real arithmetic on the hot path and in complex arithmetic for the
//! circular-arc tracker.

use num_complex::Complex64;
use once_cell::sync::Lazy;
use thiserror::Error;

/// Largest unknown count across kinds; sizes the stack scratch buffers.
pub const MAX_UNKNOWNS: usize = 12;

/// Pivot magnitudes below this abort a pattern solve as singular.
pub const PIVOT_EPS: f64 = 1e-14;

/// Which minimal problem a vector pair talks about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    /// 5 points in 2 calibrated views; 9 unknown depths.
    FivePoint,
    /// 4 points in 3 calibrated views, first image point relaxed along a
    /// vertical line; 11 unknown depths plus the line offset.
    Scranton,
}

impl ProblemKind {
    pub fn n_points(self) -> usize {
        match self {
            ProblemKind::FivePoint => 5,
            ProblemKind::Scranton => 4,
        }
    }

    pub fn n_views(self) -> usize {
        match self {
            ProblemKind::FivePoint => 2,
            ProblemKind::Scranton => 3,
        }
    }

    /// Length of the flat problem vector (2 coordinates per image point).
    pub fn problem_dim(self) -> usize {
        2 * self.n_points() * self.n_views()
    }

    /// Length of the flat solution vector.
    pub fn solution_dim(self) -> usize {
        match self {
            ProblemKind::FivePoint => 9,
            ProblemKind::Scranton => 12,
        }
    }

    /// Minimal sample size drawn by RANSAC.
    pub fn sample_size(self) -> usize {
        self.n_points()
    }

    pub fn label(self) -> &'static str {
        match self {
            ProblemKind::FivePoint => "5pt",
            ProblemKind::Scranton => "scranton",
        }
    }

    pub fn parse(s: &str) -> Option<ProblemKind> {
        match s {
            "5pt" => Some(ProblemKind::FivePoint),
            "scranton" => Some(ProblemKind::Scranton),
            _ => None,
        }
    }

    /// Offset of image point (point, view) in the flat problem vector.
    /// Layout is view-major: all points of view 0, then view 1, ...
    #[inline]
    pub fn coord_base(self, point: usize, view: usize) -> usize {
        2 * (view * self.n_points() + point)
    }

    /// Slot of depth (point, view) in the flat solution vector, or `None` for
    /// the gauge depth (0, 0) which is fixed to 1 and omitted.
    #[inline]
    pub fn depth_index(self, point: usize, view: usize) -> Option<usize> {
        if point == 0 && view == 0 {
            None
        } else {
            Some(view * self.n_points() + point - 1)
        }
    }

    /// Slot of the Scranton line offset `l` in the solution vector.
    #[inline]
    pub fn offset_index(self) -> Option<usize> {
        match self {
            ProblemKind::FivePoint => None,
            ProblemKind::Scranton => Some(11),
        }
    }
}

/// Scalar abstraction over f64 and Complex64.
pub trait Scalar:
    Copy
    + std::fmt::Debug
    + PartialEq
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_re(x: f64) -> Self;
    /// Absolute value / complex modulus.
    fn mag(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn from_re(x: f64) -> Self {
        x
    }
    #[inline]
    fn mag(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    #[inline]
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    #[inline]
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    #[inline]
    fn from_re(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    #[inline]
    fn mag(self) -> f64 {
        self.norm()
    }
}

/// One equation row: a point pair compared between two views (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EquationRow {
    pub points: (usize, usize),
    pub views: (usize, usize),
}

const fn row(k: usize, m: usize, i: usize, j: usize) -> EquationRow {
    EquationRow {
        points: (k, m),
        views: (i, j),
    }
}

/// The 9 five-point rows; the (4,5) pair (0-based (3,4)) is the dropped one.
const FIVE_POINT_ROWS: [EquationRow; 9] = [
    row(0, 1, 0, 1),
    row(0, 2, 0, 1),
    row(1, 2, 0, 1),
    row(0, 3, 0, 1),
    row(1, 3, 0, 1),
    row(2, 3, 0, 1),
    row(0, 4, 0, 1),
    row(1, 4, 0, 1),
    row(2, 4, 0, 1),
];

/// The 12 Scranton rows: 6 point pairs over views (1,2), then over (1,3).
const SCRANTON_ROWS: [EquationRow; 12] = [
    row(0, 1, 0, 1),
    row(0, 2, 0, 1),
    row(1, 2, 0, 1),
    row(0, 3, 0, 1),
    row(1, 3, 0, 1),
    row(2, 3, 0, 1),
    row(0, 1, 0, 2),
    row(0, 2, 0, 2),
    row(1, 2, 0, 2),
    row(0, 3, 0, 2),
    row(1, 3, 0, 2),
    row(2, 3, 0, 2),
];

/// Structurally nonzero slots of the Jacobian w.r.t. the unknowns.
#[derive(Clone, Debug)]
pub struct SparsePattern {
    pub n: usize,
    /// Row-major sorted (row, col) slots.
    pub slots: Vec<(usize, usize)>,
}

impl SparsePattern {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.slots.binary_search(&(row, col)).is_ok()
    }
}

fn derive_pattern(kind: ProblemKind) -> SparsePattern {
    let n = kind.solution_dim();
    let mut slots = Vec::new();
    for (r, eq) in equation_rows(kind).iter().enumerate() {
        let (k, m) = eq.points;
        for view in [eq.views.0, eq.views.1] {
            for point in [k, m] {
                if let Some(c) = kind.depth_index(point, view) {
                    slots.push((r, c));
                }
            }
        }
        // The vertical-line offset enters every row touching the relaxed
        // image point (point 0, view 0).
        if kind == ProblemKind::Scranton && k == 0 {
            slots.push((r, kind.offset_index().unwrap()));
        }
    }
    slots.sort_unstable();
    slots.dedup();
    SparsePattern { n, slots }
}

static FIVE_POINT_PATTERN: Lazy<SparsePattern> =
    Lazy::new(|| derive_pattern(ProblemKind::FivePoint));
static SCRANTON_PATTERN: Lazy<SparsePattern> = Lazy::new(|| derive_pattern(ProblemKind::Scranton));

pub fn sparse_pattern(kind: ProblemKind) -> &'static SparsePattern {
    match kind {
        ProblemKind::FivePoint => &FIVE_POINT_PATTERN,
        ProblemKind::Scranton => &SCRANTON_PATTERN,
    }
}

pub fn equation_rows(kind: ProblemKind) -> &'static [EquationRow] {
    match kind {
        ProblemKind::FivePoint => &FIVE_POINT_ROWS,
        ProblemKind::Scranton => &SCRANTON_ROWS,
    }
}

/// Fixed pivot sequence for the five-point pattern, derived offline by
/// symbolic Markowitz minimum-fill elimination; ties resolved by largest
/// structural fan-out, then lexicographically. Fill-in: 9 slots.
const FIVE_POINT_PIVOTS: [(usize, usize); 9] = [
    (3, 2),
    (4, 7),
    (6, 3),
    (7, 8),
    (0, 0),
    (1, 1),
    (2, 4),
    (5, 5),
    (8, 6),
];

/// Fixed pivot sequence for the Scranton pattern (same derivation).
/// Fill-in: 16 slots.
const SCRANTON_PIVOTS: [(usize, usize); 12] = [
    (0, 3),
    (2, 5),
    (4, 6),
    (1, 4),
    (6, 7),
    (8, 9),
    (10, 10),
    (7, 8),
    (3, 0),
    (5, 1),
    (9, 2),
    (11, 11),
];

/// One elimination step of the precomputed schedule.
struct ElimStep {
    pivot_row: usize,
    pivot_col: usize,
    /// Active columns of the pivot row at this step (fill included), pivot
    /// column excluded. These are exactly the back-substitution columns.
    row_cols: Vec<usize>,
    /// Rows still active with a structural entry in the pivot column.
    targets: Vec<usize>,
}

struct ElimPlan {
    n: usize,
    steps: Vec<ElimStep>,
}

fn build_plan(pattern: &SparsePattern, pivots: &[(usize, usize)]) -> ElimPlan {
    let n = pattern.n;
    let mut nz = vec![false; n * n];
    for &(r, c) in &pattern.slots {
        nz[r * n + c] = true;
    }
    let mut active_row = vec![true; n];
    let mut active_col = vec![true; n];
    let mut steps = Vec::with_capacity(n);
    for &(pr, pc) in pivots {
        assert!(active_row[pr] && active_col[pc] && nz[pr * n + pc]);
        let row_cols: Vec<usize> = (0..n)
            .filter(|&c| active_col[c] && c != pc && nz[pr * n + c])
            .collect();
        let targets: Vec<usize> = (0..n)
            .filter(|&r| active_row[r] && r != pr && nz[r * n + pc])
            .collect();
        for &t in &targets {
            for &c in &row_cols {
                nz[t * n + c] = true;
            }
        }
        active_row[pr] = false;
        active_col[pc] = false;
        steps.push(ElimStep {
            pivot_row: pr,
            pivot_col: pc,
            row_cols,
            targets,
        });
    }
    assert!(active_row.iter().all(|a| !a) && active_col.iter().all(|a| !a));
    ElimPlan { n, steps }
}

static FIVE_POINT_PLAN: Lazy<ElimPlan> =
    Lazy::new(|| build_plan(&FIVE_POINT_PATTERN, &FIVE_POINT_PIVOTS));
static SCRANTON_PLAN: Lazy<ElimPlan> = Lazy::new(|| build_plan(&SCRANTON_PATTERN, &SCRANTON_PIVOTS));

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FormulationError {
    #[error("pattern solve hit a singular pivot (|pivot| < 1e-14)")]
    SingularSystem,
}

#[inline]
fn dot3<T: Scalar>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// A square depth-formulated polynomial system.
#[derive(Clone, Copy, Debug)]
pub struct FormulationSystem {
    kind: ProblemKind,
}

impl FormulationSystem {
    pub fn new(kind: ProblemKind) -> Self {
        FormulationSystem { kind }
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn n_unknowns(&self) -> usize {
        self.kind.solution_dim()
    }

    pub fn n_equations(&self) -> usize {
        self.kind.solution_dim()
    }

    /// The point pair and view pair of each equation row.
    pub fn equation_index_map(&self) -> &'static [EquationRow] {
        equation_rows(self.kind)
    }

    pub fn pattern(&self) -> &'static SparsePattern {
        sparse_pattern(self.kind)
    }

    /// Homogeneous coordinates of image point (point, view), with the
    /// Scranton relaxation folded in for the (0, 0) slot.
    #[inline]
    fn homog<T: Scalar>(&self, problem: &[T], solution: &[T], point: usize, view: usize) -> [T; 3] {
        let b = self.kind.coord_base(point, view);
        let mut v = [problem[b], problem[b + 1], T::one()];
        if self.kind == ProblemKind::Scranton && point == 0 && view == 0 {
            v[1] = v[1] + solution[11];
        }
        v
    }

    #[inline]
    fn depth<T: Scalar>(&self, solution: &[T], point: usize, view: usize) -> T {
        match self.kind.depth_index(point, view) {
            None => T::one(),
            Some(i) => solution[i],
        }
    }

    /// Residual of an arbitrary point-pair/view-pair constraint. Rows outside
    /// the square subsystem (e.g. the dropped five-point (4,5) pair) are
    /// reachable through this.
    pub fn residual_for<T: Scalar>(
        &self,
        problem: &[T],
        solution: &[T],
        points: (usize, usize),
        views: (usize, usize),
    ) -> T {
        let side = |view: usize| -> T {
            let vk = self.homog(problem, solution, points.0, view);
            let vm = self.homog(problem, solution, points.1, view);
            let lk = self.depth(solution, points.0, view);
            let lm = self.depth(solution, points.1, view);
            let d = [
                lk * vk[0] - lm * vm[0],
                lk * vk[1] - lm * vm[1],
                lk * vk[2] - lm * vm[2],
            ];
            dot3(d, d)
        };
        side(views.0) - side(views.1)
    }

    /// Residual of the five-point constraint dropped to square the system.
    pub fn dropped_equation_residual(&self, problem: &[f64], solution: &[f64]) -> Option<f64> {
        match self.kind {
            ProblemKind::FivePoint => Some(self.residual_for(problem, solution, (3, 4), (0, 1))),
            // The omitted Scranton view-pair (2,3) rows are linear
            // combinations of the square system and vanish identically.
            ProblemKind::Scranton => None,
        }
    }

    /// Evaluates all residual rows into `out`.
    pub fn evaluate<T: Scalar>(&self, problem: &[T], solution: &[T], out: &mut [T]) {
        debug_assert_eq!(problem.len(), self.kind.problem_dim());
        debug_assert_eq!(solution.len(), self.kind.solution_dim());
        debug_assert_eq!(out.len(), self.n_equations());
        for (r, eq) in self.equation_index_map().iter().enumerate() {
            out[r] = self.residual_for(problem, solution, eq.points, eq.views);
        }
    }

    /// Max |residual| over the square system.
    pub fn residual_inf_norm(&self, problem: &[f64], solution: &[f64]) -> f64 {
        let mut out = [0.0; MAX_UNKNOWNS];
        let n = self.n_equations();
        self.evaluate(problem, solution, &mut out[..n]);
        out[..n].iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    /// Analytic Jacobian w.r.t. the unknowns, written densely (row-major
    /// `n x n`); slots outside the sparsity pattern stay exactly zero.
    pub fn jacobian_s<T: Scalar>(&self, problem: &[T], solution: &[T], out: &mut [T]) {
        let n = self.n_unknowns();
        debug_assert_eq!(out.len(), n * n);
        for v in out.iter_mut() {
            *v = T::zero();
        }
        let two = T::from_re(2.0);
        for (r, eq) in self.equation_index_map().iter().enumerate() {
            let (k, m) = eq.points;
            for (view, sgn) in [(eq.views.0, T::one()), (eq.views.1, -T::one())] {
                let vk = self.homog(problem, solution, k, view);
                let vm = self.homog(problem, solution, m, view);
                let lk = self.depth(solution, k, view);
                let lm = self.depth(solution, m, view);
                let d = [
                    lk * vk[0] - lm * vm[0],
                    lk * vk[1] - lm * vm[1],
                    lk * vk[2] - lm * vm[2],
                ];
                if let Some(c) = self.kind.depth_index(k, view) {
                    out[r * n + c] = out[r * n + c] + sgn * two * dot3(d, vk);
                }
                if let Some(c) = self.kind.depth_index(m, view) {
                    out[r * n + c] = out[r * n + c] - sgn * two * dot3(d, vm);
                }
                if self.kind == ProblemKind::Scranton && k == 0 && view == 0 {
                    // d(l_{0,0} v~_{0,0})/dl = e2
                    out[r * n + 11] = out[r * n + 11] + sgn * two * d[1];
                }
            }
        }
    }

    /// Analytic d/dt of the residuals along the linear segment
    /// `p(t) = (1-t) p0 + t p1`, at fixed solution.
    pub fn jacobian_t<T: Scalar>(
        &self,
        start_problem: &[T],
        target_problem: &[T],
        solution: &[T],
        t: T,
        out: &mut [T],
    ) {
        debug_assert_eq!(out.len(), self.n_equations());
        let dim = self.kind.problem_dim();
        let mut p = [T::zero(); 24];
        interpolate_problem(start_problem, target_problem, t, &mut p[..dim]);
        let two = T::from_re(2.0);
        for (r, eq) in self.equation_index_map().iter().enumerate() {
            let (k, m) = eq.points;
            let mut total = T::zero();
            for (view, sgn) in [(eq.views.0, T::one()), (eq.views.1, -T::one())] {
                let vk = self.homog(&p[..dim], solution, k, view);
                let vm = self.homog(&p[..dim], solution, m, view);
                let lk = self.depth(solution, k, view);
                let lm = self.depth(solution, m, view);
                let d = [
                    lk * vk[0] - lm * vm[0],
                    lk * vk[1] - lm * vm[1],
                    lk * vk[2] - lm * vm[2],
                ];
                let bk = self.kind.coord_base(k, view);
                let bm = self.kind.coord_base(m, view);
                // velocity of v = [x; 1] is [p1 - p0; 0]
                let vel = [
                    lk * (target_problem[bk] - start_problem[bk])
                        - lm * (target_problem[bm] - start_problem[bm]),
                    lk * (target_problem[bk + 1] - start_problem[bk + 1])
                        - lm * (target_problem[bm + 1] - start_problem[bm + 1]),
                    T::zero(),
                ];
                total = total + sgn * two * dot3(d, vel);
            }
            out[r] = total;
        }
    }

    /// Solves `jacobian * x = rhs` with the fixed elimination schedule for
    /// this kind's sparsity pattern, plus one iterative-refinement pass.
    /// `jacobian` is dense row-major; entries outside the pattern are ignored.
    pub fn solve_pattern<T: Scalar>(
        &self,
        jacobian: &[T],
        rhs: &[T],
        x: &mut [T],
    ) -> Result<(), FormulationError> {
        let n = self.n_unknowns();
        debug_assert_eq!(jacobian.len(), n * n);
        debug_assert_eq!(rhs.len(), n);
        debug_assert_eq!(x.len(), n);
        let plan = match self.kind {
            ProblemKind::FivePoint => &*FIVE_POINT_PLAN,
            ProblemKind::Scranton => &*SCRANTON_PLAN,
        };
        let mut a = [T::zero(); MAX_UNKNOWNS * MAX_UNKNOWNS];
        let mut b = [T::zero(); MAX_UNKNOWNS];
        a[..n * n].copy_from_slice(jacobian);
        b[..n].copy_from_slice(rhs);
        solve_planned(plan, &mut a, &mut b, x)?;

        // One refinement pass against the original matrix; fixed-order
        // elimination has no pivoting to contain growth, this restores it.
        let mut r = [T::zero(); MAX_UNKNOWNS];
        r[..n].copy_from_slice(rhs);
        for &(row, col) in &self.pattern().slots {
            r[row] = r[row] - jacobian[row * n + col] * x[col];
        }
        a[..n * n].copy_from_slice(jacobian);
        let mut dx = [T::zero(); MAX_UNKNOWNS];
        solve_planned(plan, &mut a, &mut r, &mut dx[..n])?;
        for i in 0..n {
            x[i] = x[i] + dx[i];
        }
        Ok(())
    }
}

/// `out = (1-t) start + t target`, elementwise.
pub fn interpolate_problem<T: Scalar>(start: &[T], target: &[T], t: T, out: &mut [T]) {
    for ((o, &s), &g) in out.iter_mut().zip(start).zip(target) {
        *o = s + t * (g - s);
    }
}

fn solve_planned<T: Scalar>(
    plan: &ElimPlan,
    a: &mut [T],
    b: &mut [T],
    x: &mut [T],
) -> Result<(), FormulationError> {
    let n = plan.n;
    for step in &plan.steps {
        let piv = a[step.pivot_row * n + step.pivot_col];
        if piv.mag() < PIVOT_EPS {
            return Err(FormulationError::SingularSystem);
        }
        for &t in &step.targets {
            let f = a[t * n + step.pivot_col] / piv;
            a[t * n + step.pivot_col] = T::zero();
            for &c in &step.row_cols {
                let v = a[step.pivot_row * n + c];
                a[t * n + c] = a[t * n + c] - f * v;
            }
            let pb = b[step.pivot_row];
            b[t] = b[t] - f * pb;
        }
    }
    for step in plan.steps.iter().rev() {
        let mut acc = b[step.pivot_row];
        for &c in &step.row_cols {
            acc = acc - a[step.pivot_row * n + c] * x[c];
        }
        x[step.pivot_col] = acc / a[step.pivot_row * n + step.pivot_col];
    }
    Ok(())
}
