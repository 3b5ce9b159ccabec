//! Exact rational scalars and small dense linear algebra.
//!
//! Structural quantities (deficiency, subspace bases, rate decompositions)
//! must not depend on float tolerances, so everything here runs over
//! arbitrary-precision rationals. Matrices are tiny (a handful of species
//! and reactions), so plain Gauss-Jordan elimination is enough.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::traits::{One, Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

/// Rational from an integer.
pub fn rat_i(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Rational n/d.
pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Array of N copies of n/d (rationals are not Copy).
pub fn rat_array<const N: usize>(n: i64, d: i64) -> [Rat; N] {
    std::array::from_fn(|_| rat(n, d))
}

/// Parses an integer, decimal, or `p/q` literal into an exact rational.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().ok()?;
        let d: BigInt = den.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rat::new(n, d));
    }
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1i64, rest),
        None => (1, s.strip_prefix('+').unwrap_or(s)),
    };
    // Scientific notation: mantissa e exponent.
    if let Some(pos) = body.find(['e', 'E']) {
        let mant = parse_rat(&body[..pos])?;
        let exp: i32 = body[pos + 1..].parse().ok()?;
        let ten = rat_i(10);
        let scale = ten.pow(exp);
        return Some(rat_i(sign) * mant * scale);
    }
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let n: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let d = BigInt::from(10u32).pow(frac_part.len() as u32);
    Some(Rat::new(BigInt::from(sign) * n, d))
}

/// Renders a rational as an integer, or `p/q` when not integral.
pub fn format_rat(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rat_vec_f64(v: &[Rat]) -> Vec<f64> {
    v.iter().map(rat_to_f64).collect()
}

pub fn one_norm(v: &[Rat]) -> Rat {
    v.iter().map(|x| x.abs()).fold(Rat::zero(), |a, b| a + b)
}

pub fn is_zero_vec(v: &[Rat]) -> bool {
    v.iter().all(|x| x.is_zero())
}

pub fn add_assign_scaled(acc: &mut [Rat], v: &[Rat], c: &Rat) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += c * x;
    }
}

/// Dense row-major rational matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatMat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<Rat>,
}

impl RatMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMat { rows, cols, data: vec![Rat::zero(); rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<Rat>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix");
        RatMat { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    /// Columns given as vectors; builds the matrix whose j-th column is `cols[j]`.
    pub fn from_cols(cols: &[Vec<Rat>]) -> Self {
        let c = cols.len();
        let r = cols.first().map_or(0, |col| col.len());
        let mut m = RatMat::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), r, "ragged matrix");
            for (i, x) in col.iter().enumerate() {
                *m.at_mut(i, j) = x.clone();
            }
        }
        m
    }

    pub fn at(&self, i: usize, j: usize) -> &Rat {
        &self.data[i * self.cols + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut Rat {
        &mut self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[Rat] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    /// Reduced row echelon form; returns pivot column indices.
    pub fn rref(mut self) -> (RatMat, Vec<usize>) {
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..self.cols {
            if row == self.rows {
                break;
            }
            let Some(p) = (row..self.rows).find(|&i| !self.at(i, col).is_zero()) else {
                continue;
            };
            self.swap_rows(row, p);
            let inv = self.at(row, col).clone();
            for j in col..self.cols {
                let v = self.at(row, j).clone() / &inv;
                *self.at_mut(row, j) = v;
            }
            for i in 0..self.rows {
                if i != row && !self.at(i, col).is_zero() {
                    let f = self.at(i, col).clone();
                    for j in col..self.cols {
                        let v = self.at(i, j).clone() - &f * self.at(row, j);
                        *self.at_mut(i, j) = v;
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        (self, pivots)
    }

    pub fn rank(&self) -> usize {
        self.clone().rref().1.len()
    }

    /// Basis of the row space: the nonzero rows of the RREF, a canonical span basis.
    pub fn row_space_basis(&self) -> Vec<Vec<Rat>> {
        let (r, pivots) = self.clone().rref();
        (0..pivots.len()).map(|i| r.row(i).to_vec()).collect()
    }

    /// Basis of the (right) null space.
    pub fn nullspace_basis(&self) -> Vec<Vec<Rat>> {
        let (r, pivots) = self.clone().rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        free.iter()
            .map(|&f| {
                let mut v = vec![Rat::zero(); self.cols];
                v[f] = Rat::one();
                for (pr, &pc) in pivots.iter().enumerate() {
                    v[pc] = -r.at(pr, f).clone();
                }
                v
            })
            .collect()
    }

    /// One solution of `self * x = b`, or None when inconsistent.
    pub fn solve(&self, b: &[Rat]) -> Option<Vec<Rat>> {
        assert_eq!(b.len(), self.rows);
        let mut aug = RatMat::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *aug.at_mut(i, j) = self.at(i, j).clone();
            }
            *aug.at_mut(i, self.cols) = b[i].clone();
        }
        let (r, pivots) = aug.rref();
        if pivots.contains(&self.cols) {
            return None; // pivot in augmented column: inconsistent
        }
        let mut x = vec![Rat::zero(); self.cols];
        for (pr, &pc) in pivots.iter().enumerate() {
            x[pc] = r.at(pr, self.cols).clone();
        }
        Some(x)
    }
}

/// Span basis of a set of vectors (canonical RREF rows).
pub fn span_basis(vectors: &[Vec<Rat>]) -> Vec<Vec<Rat>> {
    if vectors.is_empty() {
        return Vec::new();
    }
    RatMat::from_rows(vectors.to_vec()).row_space_basis()
}

/// Does `v` lie in the span of `basis`?
pub fn span_contains(basis: &[Vec<Rat>], v: &[Rat]) -> bool {
    if is_zero_vec(v) {
        return true;
    }
    if basis.is_empty() {
        return false;
    }
    let m = RatMat::from_rows(basis.to_vec());
    let rank = m.rank();
    let mut rows = basis.to_vec();
    rows.push(v.to_vec());
    RatMat::from_rows(rows).rank() == rank
}

/// Basis of the orthogonal complement of span(basis) in R^n.
pub fn orthogonal_complement(basis: &[Vec<Rat>], n: usize) -> Vec<Vec<Rat>> {
    if basis.is_empty() {
        // Whole space: identity basis.
        return (0..n)
            .map(|i| {
                let mut v = vec![Rat::zero(); n];
                v[i] = Rat::one();
                v
            })
            .collect();
    }
    RatMat::from_rows(basis.to_vec()).nullspace_basis()
}

pub fn dot(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter().zip(b).map(|(x, y)| x * y).fold(Rat::zero(), |s, t| s + t)
}

/// Minimizes `sum(e)` subject to `cols * e = z`, `e >= 0`, exactly.
///
/// Enumerates basic feasible solutions over column subsets; the LP optimum is
/// attained at one of them. Column counts here never exceed a handful, so the
/// exponential enumeration is fine. Ties break lexicographically.
pub fn nonneg_min_sum_solve(cols: &[Vec<Rat>], z: &[Rat]) -> Option<Vec<Rat>> {
    let m = cols.len();
    if is_zero_vec(z) {
        return Some(vec![Rat::zero(); m]);
    }
    if m == 0 {
        return None;
    }
    let dim = z.len();
    let max_size = m.min(dim);
    let mut best: Option<(Rat, Vec<Rat>)> = None;
    // Subsets by bitmask; skip those larger than the ambient dimension.
    for mask in 1u32..(1u32 << m) {
        let subset: Vec<usize> = (0..m).filter(|&j| mask >> j & 1 == 1).collect();
        if subset.len() > max_size {
            continue;
        }
        let sub: Vec<Vec<Rat>> = subset.iter().map(|&j| cols[j].clone()).collect();
        let mat = RatMat::from_cols(&sub);
        if mat.rank() < subset.len() {
            continue; // not a basis candidate
        }
        let Some(sol) = mat.solve(z) else { continue };
        if sol.iter().any(|x| x.is_negative()) {
            continue;
        }
        let mut e = vec![Rat::zero(); m];
        for (k, &j) in subset.iter().enumerate() {
            e[j] = sol[k].clone();
        }
        let total: Rat = e.iter().fold(Rat::zero(), |a, b| a + b);
        let better = match &best {
            None => true,
            Some((bt, bv)) => total < *bt || (total == *bt && e < *bv),
        };
        if better {
            best = Some((total, e));
        }
    }
    best.map(|(_, e)| e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_literals() {
        assert_eq!(parse_rat("0.5").unwrap(), rat(1, 2));
        assert_eq!(parse_rat("2/3").unwrap(), rat(2, 3));
        assert_eq!(parse_rat("-1.25").unwrap(), rat(-5, 4));
        assert_eq!(parse_rat("3").unwrap(), rat_i(3));
        assert_eq!(parse_rat("1e-2").unwrap(), rat(1, 100));
        assert_eq!(parse_rat("2.5e1").unwrap(), rat_i(25));
        assert!(parse_rat("").is_none());
        assert!(parse_rat("1/0").is_none());
        assert!(parse_rat("abc").is_none());
    }

    #[test]
    fn format_round_trips() {
        for s in ["1/2", "-7/3", "5", "0"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(parse_rat(&format_rat(&r)).unwrap(), r);
        }
    }

    #[test]
    fn rref_rank_nullspace() {
        let m = RatMat::from_rows(vec![
            vec![rat_i(1), rat_i(2), rat_i(3)],
            vec![rat_i(2), rat_i(4), rat_i(6)],
            vec![rat_i(1), rat_i(0), rat_i(1)],
        ]);
        assert_eq!(m.rank(), 2);
        let ns = m.nullspace_basis();
        assert_eq!(ns.len(), 1);
        for i in 0..3 {
            assert!(dot(m.row(i), &ns[0]).is_zero());
        }
    }

    #[test]
    fn solve_consistency() {
        let m = RatMat::from_rows(vec![vec![rat_i(2), rat_i(0)], vec![rat_i(0), rat_i(3)]]);
        let x = m.solve(&[rat_i(4), rat_i(9)]).unwrap();
        assert_eq!(x, vec![rat_i(2), rat_i(3)]);
        let sing = RatMat::from_rows(vec![vec![rat_i(1), rat_i(1)], vec![rat_i(1), rat_i(1)]]);
        assert!(sing.solve(&[rat_i(1), rat_i(2)]).is_none());
    }

    #[test]
    fn orth_complement_is_orthogonal() {
        let basis = vec![vec![rat_i(-2), rat_i(1), rat_i(0)], vec![rat_i(0), rat_i(-1), rat_i(1)]];
        let orth = orthogonal_complement(&basis, 3);
        assert_eq!(orth.len(), 1);
        for b in &basis {
            assert!(dot(b, &orth[0]).is_zero());
        }
    }

    #[test]
    fn min_sum_nonneg_solve_picks_cheapest_vertex() {
        // z = (3,3) over columns (1,1) and (2,2): cheapest is 1.5 of the second.
        let cols = vec![vec![rat_i(1), rat_i(1)], vec![rat_i(2), rat_i(2)]];
        let e = nonneg_min_sum_solve(&cols, &[rat_i(3), rat_i(3)]).unwrap();
        assert_eq!(e, vec![rat_i(0), rat(3, 2)]);
        // Infeasible: z outside the cone.
        assert!(nonneg_min_sum_solve(&cols, &[rat_i(1), rat_i(2)]).is_none());
        // Mixed-sign generators reach a negative target.
        let cols2 = vec![vec![rat_i(1)], vec![rat_i(-1)]];
        let e2 = nonneg_min_sum_solve(&cols2, &[rat_i(-2)]).unwrap();
        assert_eq!(e2, vec![rat_i(0), rat_i(2)]);
    }
}
