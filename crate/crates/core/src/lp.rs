//! Linear programs with two backends: `microlp`'s sparse simplex as the
//! `f64` fast path, and a dense two-phase simplex over
//! [`num_rational::BigRational`] for exact answers on small instances.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::{Error, Result};

pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    /// Strictly positive beyond the scalar's pivoting tolerance.
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool {
        (-self.clone()).is_pos()
    }
    fn is_negligible(&self) -> bool {
        !self.is_pos() && !self.is_neg()
    }
}

const F64_EPS: f64 = 1e-10;

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_pos(&self) -> bool {
        *self > F64_EPS
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).unwrap_or_else(|| BigRational::from_integer(BigInt::zero()))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn is_pos(&self) -> bool {
        Signed::is_positive(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    /// Sparse coefficients `(variable, value)`.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `maximize c·x` subject to the constraints and `x ≥ 0` for every variable
/// not listed in `free`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub free: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome<T> {
    Optimal { x: Vec<T>, value: T },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            free: Vec::new(),
        }
    }

    pub fn add(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.num_vars));
        self.constraints.push(Constraint { coeffs, sense, rhs });
    }

    pub fn solve<T: Scalar>(&self) -> Result<LpOutcome<T>> {
        Tableau::<T>::build(self)?.run(self)
    }

    pub fn solve_f64(&self) -> Result<LpOutcome<f64>> {
        use microlp::{ComparisonOp, OptimizationDirection, Problem};
        if self.objective.len() != self.num_vars {
            return Err(Error::Lp("objective length does not match variable count".into()));
        }
        if self.iter_values().any(|v| !v.is_finite()) {
            return Err(Error::Lp("non-finite coefficient".into()));
        }
        let mut problem = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = (0..self.num_vars)
            .map(|j| {
                let lower = if self.free.contains(&j) { f64::NEG_INFINITY } else { 0.0 };
                problem.add_var(self.objective[j], (lower, f64::INFINITY))
            })
            .collect();
        for c in &self.constraints {
            let op = match c.sense {
                Sense::Le => ComparisonOp::Le,
                Sense::Ge => ComparisonOp::Ge,
                Sense::Eq => ComparisonOp::Eq,
            };
            problem.add_constraint(c.coeffs.iter().map(|&(j, v)| (vars[j], v)), op, c.rhs);
        }
        match problem.solve() {
            Ok(outcome) => match outcome.into_solution() {
                Ok(sol) => Ok(LpOutcome::Optimal {
                    x: vars.iter().map(|&v| sol.var_value(v)).collect(),
                    value: sol.objective(),
                }),
                Err(_) => Err(Error::Lp("solve was interrupted".into())),
            },
            Err(microlp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
            Err(microlp::Error::Unbounded) => Ok(LpOutcome::Unbounded),
            Err(e) => Err(Error::Lp(e.to_string())),
        }
    }

    /// Exact solve; the result is converted back to `f64`.
    pub fn solve_exact(&self) -> Result<LpOutcome<f64>> {
        Ok(match self.solve::<BigRational>()? {
            LpOutcome::Optimal { x, value } => LpOutcome::Optimal {
                x: x.iter().map(Scalar::to_f64).collect(),
                value: Scalar::to_f64(&value),
            },
            LpOutcome::Infeasible => LpOutcome::Infeasible,
            LpOutcome::Unbounded => LpOutcome::Unbounded,
        })
    }
}

struct Tableau<T> {
    // rows[0..m] constraints, last column rhs; obj is the reduced-cost row
    rows: Vec<Vec<T>>,
    obj: Vec<T>,
    basis: Vec<usize>,
    ncols: usize,
    // column -> (original variable, sign)
    column_var: Vec<Option<(usize, bool)>>,
    artificial_start: usize,
}

impl<T: Scalar> Tableau<T> {
    fn build(lp: &LinearProgram) -> Result<Self> {
        if lp.objective.len() != lp.num_vars {
            return Err(Error::Lp("objective length does not match variable count".into()));
        }
        if lp.iter_values().any(|v| !v.is_finite()) {
            return Err(Error::Lp("non-finite coefficient".into()));
        }
        let mut column_var = Vec::new();
        let mut var_cols = vec![Vec::new(); lp.num_vars];
        for j in 0..lp.num_vars {
            var_cols[j].push(column_var.len());
            column_var.push(Some((j, true)));
            if lp.free.contains(&j) {
                var_cols[j].push(column_var.len());
                column_var.push(Some((j, false)));
            }
        }
        let nstruct = column_var.len();
        let m = lp.constraints.len();
        let nslack = lp
            .constraints
            .iter()
            .filter(|c| c.sense != Sense::Eq)
            .count();
        let artificial_start = nstruct + nslack;
        let nart = m;
        let ncols = artificial_start + nart;
        for _ in nstruct..ncols {
            column_var.push(None);
        }
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut slack = nstruct;
        for (i, c) in lp.constraints.iter().enumerate() {
            let mut row = vec![T::zero(); ncols + 1];
            for &(j, v) in &c.coeffs {
                let v = T::from_f64(v);
                row[var_cols[j][0]] = row[var_cols[j][0]].clone() + v.clone();
                if let Some(&neg) = var_cols[j].get(1) {
                    row[neg] = row[neg].clone() - v;
                }
            }
            row[ncols] = T::from_f64(c.rhs);
            match c.sense {
                Sense::Le => {
                    row[slack] = T::one();
                    slack += 1;
                }
                Sense::Ge => {
                    row[slack] = -T::one();
                    slack += 1;
                }
                Sense::Eq => {}
            }
            if row[ncols].is_neg() || (row[ncols].is_negligible() && row[ncols] < T::zero()) {
                for v in row.iter_mut() {
                    *v = -v.clone();
                }
            }
            row[artificial_start + i] = T::one();
            basis.push(artificial_start + i);
            rows.push(row);
        }
        Ok(Tableau {
            rows,
            obj: vec![T::zero(); ncols + 1],
            basis,
            ncols,
            column_var,
            artificial_start,
        })
    }

    fn set_objective(&mut self, costs: &[T]) {
        // obj[j] = -c_j + Σ_i c_B(i) a_ij  (reduced cost; negative enters)
        let mut obj: Vec<T> = costs.iter().map(|c| -c.clone()).collect();
        obj.push(T::zero());
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = costs[b].clone();
            if cb == T::zero() {
                continue;
            }
            for (o, a) in obj.iter_mut().zip(&self.rows[i]) {
                *o = o.clone() + cb.clone() * a.clone();
            }
        }
        self.obj = obj;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v = v.clone() / p.clone();
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c].clone();
            if f == T::zero() {
                continue;
            }
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                *v = v.clone() - f.clone() * pv.clone();
            }
        }
        let f = self.obj[c].clone();
        if f != T::zero() {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v = v.clone() - f.clone() * pv.clone();
            }
        }
        self.basis[r] = c;
    }

    /// Simplex iterations over the allowed columns: Dantzig pricing,
    /// switching to Bland's rule after a run of degenerate pivots. Returns
    /// false if the objective is unbounded.
    fn iterate(&mut self, allowed: usize) -> Result<bool> {
        let limit = 50_000 + 100 * (self.rows.len() + self.ncols);
        let mut bland = false;
        let mut degenerate = 0;
        for _ in 0..limit {
            let enter = if bland {
                (0..allowed).find(|&j| self.obj[j].is_neg())
            } else {
                let mut best: Option<usize> = None;
                for j in 0..allowed {
                    if self.obj[j].is_neg() && best.map_or(true, |b| self.obj[j] < self.obj[b]) {
                        best = Some(j);
                    }
                }
                best
            };
            let Some(enter) = enter else {
                return Ok(true);
            };
            let mut leave: Option<(usize, T)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if !row[enter].is_pos() {
                    continue;
                }
                let ratio = row[self.ncols].clone() / row[enter].clone();
                let better = match &leave {
                    None => true,
                    Some((li, best)) => {
                        let d = ratio.clone() - best.clone();
                        d.is_neg()
                            || (d.is_negligible()
                                && if bland {
                                    self.basis[i] < self.basis[*li]
                                } else {
                                    row[enter] > self.rows[*li][enter]
                                })
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            match leave {
                Some((r, ratio)) => {
                    if ratio.is_pos() {
                        degenerate = 0;
                    } else {
                        degenerate += 1;
                        if degenerate > 50 {
                            bland = true;
                        }
                    }
                    self.pivot(r, enter)
                }
                None => return Ok(false),
            }
        }
        Err(Error::Lp("simplex iteration limit reached".into()))
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome<T>> {
        // phase 1: maximize −Σ artificials
        let mut costs = vec![T::zero(); self.ncols];
        for c in costs.iter_mut().skip(self.artificial_start) {
            *c = -T::one();
        }
        self.set_objective(&costs);
        self.iterate(self.ncols)?;
        if self.obj[self.ncols].is_neg() {
            return Ok(LpOutcome::Infeasible);
        }
        // drive remaining artificials out of the basis
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= self.artificial_start {
                match (0..self.artificial_start).find(|&j| !self.rows[r][j].is_negligible()) {
                    Some(c) => self.pivot(r, c),
                    None => {
                        self.rows.remove(r);
                        self.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        // phase 2
        let mut costs = vec![T::zero(); self.ncols];
        for (j, cv) in self.column_var.iter().enumerate() {
            if let Some((var, positive)) = cv {
                let c = T::from_f64(lp.objective[*var]);
                costs[j] = if *positive { c } else { -c };
            }
        }
        self.set_objective(&costs);
        if !self.iterate(self.artificial_start)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![T::zero(); lp.num_vars];
        for (i, &b) in self.basis.iter().enumerate() {
            if let Some(Some((var, positive))) = self.column_var.get(b) {
                let v = self.rows[i][self.ncols].clone();
                x[*var] = if *positive {
                    x[*var].clone() + v
                } else {
                    x[*var].clone() - v
                };
            }
        }
        let value = self.obj[self.ncols].clone();
        Ok(LpOutcome::Optimal { x, value })
    }
}

impl LinearProgram {
    fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.objective.iter().copied().chain(
            self.constraints
                .iter()
                .flat_map(|c| c.coeffs.iter().map(|&(_, v)| v).chain(std::iter::once(c.rhs))),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(o: LpOutcome<f64>) -> (Vec<f64>, f64) {
        match o {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![3.0, 5.0];
        lp.add(vec![(0, 1.0)], Sense::Le, 4.0);
        lp.add(vec![(1, 2.0)], Sense::Le, 12.0);
        lp.add(vec![(0, 3.0), (1, 2.0)], Sense::Le, 18.0);
        for (x, v) in [optimal(lp.solve_f64().unwrap()), optimal(lp.solve_exact().unwrap())] {
            assert!((v - 36.0).abs() < 1e-12);
            assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y s.t. x + y ≥ 2, x − y = 1 → (1.5, 0.5)
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.add(vec![(0, 1.0), (1, 1.0)], Sense::Ge, 2.0);
        lp.add(vec![(0, 1.0), (1, -1.0)], Sense::Eq, 1.0);
        let (x, v) = optimal(lp.solve_exact().unwrap());
        assert_eq!(v, -2.0);
        assert_eq!(x, vec![1.5, 0.5]);
    }

    #[test]
    fn free_variables_can_go_negative() {
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![-1.0];
        lp.free = vec![0];
        lp.add(vec![(0, 1.0)], Sense::Ge, -3.0);
        let (x, _) = optimal(lp.solve_f64().unwrap());
        assert_eq!(x[0], -3.0);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add(vec![(0, 1.0)], Sense::Le, 1.0);
        lp.add(vec![(0, 1.0)], Sense::Ge, 2.0);
        assert_eq!(lp.solve_f64().unwrap(), LpOutcome::Infeasible);
        assert_eq!(lp.solve_exact().unwrap(), LpOutcome::Infeasible);

        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 0.0];
        lp.add(vec![(0, 1.0), (1, -1.0)], Sense::Le, 1.0);
        assert_eq!(lp.solve_f64().unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.add(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 1.0);
        lp.add(vec![(0, 2.0), (1, 2.0)], Sense::Eq, 2.0);
        let (_, v) = optimal(lp.solve_exact().unwrap());
        assert_eq!(v, 1.0);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example cycles under the textbook rule.
        let mut lp = LinearProgram::new(4);
        lp.objective = vec![0.75, -150.0, 0.02, -6.0];
        lp.add(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Sense::Le, 0.0);
        lp.add(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Sense::Le, 0.0);
        lp.add(vec![(2, 1.0)], Sense::Le, 1.0);
        let (_, v) = optimal(lp.solve_exact().unwrap());
        assert!((v - 0.05).abs() < 1e-12);
    }
}
