//! Linear algebra over GF(2) with bit-packed rows.
//!
//! A [`Gf2System`] holds a parity system `A x = d (mod 2)`. Rows are stored as
//! packed 64-bit words so elimination is a word-wise XOR. Reduction produces a
//! new [`ReducedSystem`] in reduced row-echelon form; the input is never
//! mutated, so systems can be shared freely across threads.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Gf2Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("column {column} out of range for {cols} columns")]
    ColumnOutOfRange { column: usize, cols: usize },
    #[error("column order must be a permutation of 0..{cols}")]
    InvalidColumnOrder { cols: usize },
}

/// Dense bit vector. Bit `i` lives in `words[i / 64]` at position `i % 64`;
/// bits at positions `>= len` are always zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVec {
    words: Vec<u64>,
    len: usize,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.words[i / 64] |= 1 << (i % 64);
            }
        }
        v
    }

    /// Low `len` bits of `mask`, bit `i` of the mask becoming position `i`.
    pub fn from_mask(mask: u64, len: usize) -> Self {
        assert!(len <= 64, "from_mask supports at most 64 bits");
        let mut v = Self::zeros(len);
        if len > 0 {
            let keep = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
            v.words[0] = mask & keep;
        }
        v
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut v = Self::zeros(len);
        for w in v.words.iter_mut() {
            *w = rng.gen();
        }
        v.clear_tail();
        v
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Packed storage, bit `i` at `words[i / 64] >> (i % 64)`.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range (len {})", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range (len {})", self.len);
        let bit = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range (len {})", self.len);
        self.words[i / 64] ^= 1 << (i % 64);
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= *b;
        }
    }

    pub fn and_assign(&mut self, other: &BitVec) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= *b;
        }
    }

    /// Parity of the bitwise AND, i.e. the GF(2) inner product.
    pub fn dot(&self, other: &BitVec) -> bool {
        debug_assert_eq!(self.len, other.len);
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        ones % 2 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    None
                } else {
                    let tz = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    Some(wi * 64 + tz)
                }
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }
}

/// A parity system `A x = d` over GF(2) with `rows` constraints on `cols`
/// variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gf2System {
    cols: usize,
    matrix: Vec<BitVec>,
    rhs: Vec<bool>,
}

impl Gf2System {
    /// The empty (unconstrained) system over `cols` variables.
    pub fn unconstrained(cols: usize) -> Self {
        Self {
            cols,
            matrix: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn from_rows(cols: usize, matrix: Vec<BitVec>, rhs: Vec<bool>) -> Result<Self, Gf2Error> {
        if matrix.len() != rhs.len() {
            return Err(Gf2Error::DimensionMismatch {
                expected: matrix.len(),
                found: rhs.len(),
            });
        }
        if let Some(bad) = matrix.iter().find(|r| r.len() != cols) {
            return Err(Gf2Error::DimensionMismatch {
                expected: cols,
                found: bad.len(),
            });
        }
        Ok(Self { cols, matrix, rhs })
    }

    /// Builds a system from dense 0/1 rows, mostly for tests and fixtures.
    pub fn from_dense(cols: usize, rows: &[&[u8]], rhs: &[u8]) -> Result<Self, Gf2Error> {
        let matrix = rows
            .iter()
            .map(|r| {
                if r.len() != cols {
                    return Err(Gf2Error::DimensionMismatch {
                        expected: cols,
                        found: r.len(),
                    });
                }
                Ok(BitVec::from_bools(&r.iter().map(|&b| b & 1 == 1).collect::<Vec<_>>()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_rows(cols, matrix, rhs.iter().map(|&b| b & 1 == 1).collect())
    }

    /// Uniformly random `m x n` matrix and right-hand side.
    pub fn random<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Self {
        let matrix = (0..m).map(|_| BitVec::random(n, rng)).collect();
        let rhs = (0..m).map(|_| rng.gen()).collect();
        Self {
            cols: n,
            matrix,
            rhs,
        }
    }

    pub fn push_row(&mut self, row: BitVec, rhs: bool) -> Result<(), Gf2Error> {
        if row.len() != self.cols {
            return Err(Gf2Error::DimensionMismatch {
                expected: self.cols,
                found: row.len(),
            });
        }
        self.matrix.push(row);
        self.rhs.push(rhs);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.matrix.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &BitVec {
        &self.matrix[i]
    }

    pub fn rhs(&self, i: usize) -> bool {
        self.rhs[i]
    }

    pub fn rhs_bits(&self) -> &[bool] {
        &self.rhs
    }

    /// Computes `A x (mod 2)`. The right-hand side is not involved.
    pub fn eval(&self, assignment: &BitVec) -> Result<BitVec, Gf2Error> {
        self.check_len(assignment)?;
        let mut out = BitVec::zeros(self.rows());
        for (i, row) in self.matrix.iter().enumerate() {
            if row.dot(assignment) {
                out.set(i, true);
            }
        }
        Ok(out)
    }

    pub fn is_satisfied(&self, assignment: &BitVec) -> Result<bool, Gf2Error> {
        self.check_len(assignment)?;
        Ok(self
            .matrix
            .iter()
            .zip(&self.rhs)
            .all(|(row, &d)| row.dot(assignment) == d))
    }

    fn check_len(&self, assignment: &BitVec) -> Result<(), Gf2Error> {
        if assignment.len() != self.cols {
            return Err(Gf2Error::DimensionMismatch {
                expected: self.cols,
                found: assignment.len(),
            });
        }
        Ok(())
    }

    /// Reduced row-echelon form, scanning pivot columns left to right.
    pub fn reduce(&self) -> ReducedSystem {
        let order: Vec<usize> = (0..self.cols).collect();
        self.eliminate(&order)
    }

    /// Reduced row-echelon form where pivot columns are chosen in the given
    /// priority order. Columns early in `order` become pivots when possible.
    pub fn reduce_with_column_order(&self, order: &[usize]) -> Result<ReducedSystem, Gf2Error> {
        let mut seen = vec![false; self.cols];
        if order.len() != self.cols {
            return Err(Gf2Error::InvalidColumnOrder { cols: self.cols });
        }
        for &c in order {
            if c >= self.cols || seen[c] {
                return Err(Gf2Error::InvalidColumnOrder { cols: self.cols });
            }
            seen[c] = true;
        }
        Ok(self.eliminate(order))
    }

    fn eliminate(&self, order: &[usize]) -> ReducedSystem {
        let mut rows = self.matrix.clone();
        let mut rhs = self.rhs.clone();
        let mut pivots = Vec::new();
        let mut rank = 0;
        for &col in order {
            if rank == rows.len() {
                break;
            }
            let Some(p) = (rank..rows.len()).find(|&r| rows[r].get(col)) else {
                continue;
            };
            rows.swap(rank, p);
            rhs.swap(rank, p);
            let (above, rest) = rows.split_at_mut(rank);
            let (pivot_row, tail) = rest.split_first_mut().expect("pivot row exists");
            let pivot_row = &*pivot_row;
            for (i, row) in above.iter_mut().enumerate() {
                if row.get(col) {
                    row.xor_assign(pivot_row);
                    rhs[i] ^= rhs[rank];
                }
            }
            for (k, row) in tail.iter_mut().enumerate() {
                if row.get(col) {
                    row.xor_assign(pivot_row);
                    rhs[rank + 1 + k] ^= rhs[rank];
                }
            }
            pivots.push(col);
            rank += 1;
        }
        let consistent = !rhs[rank..].iter().any(|&d| d);
        rows.truncate(rank);
        rhs.truncate(rank);
        if !consistent {
            rows.push(BitVec::zeros(self.cols));
            rhs.push(true);
        }
        let mut pivot_row_of = vec![None; self.cols];
        for (r, &c) in pivots.iter().enumerate() {
            pivot_row_of[c] = Some(r);
        }
        ReducedSystem {
            system: Gf2System {
                cols: self.cols,
                matrix: rows,
                rhs,
            },
            rank,
            pivot_columns: pivots,
            pivot_row_of,
            consistent,
        }
    }
}

/// Outcome of propagating a partial assignment through a reduced system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Propagation {
    /// Variables whose values are implied by the fixed ones, sorted by index.
    Forced(Vec<(usize, bool)>),
    /// No completion of the partial assignment satisfies the system.
    Conflict,
    /// Satisfiable, and nothing beyond the fixed variables is implied.
    Open,
}

/// A system in reduced row-echelon form. Row `k` has its pivot at
/// `pivot_columns[k]`; an inconsistent system carries one trailing `0 = 1` row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedSystem {
    system: Gf2System,
    rank: usize,
    pivot_columns: Vec<usize>,
    pivot_row_of: Vec<Option<usize>>,
    consistent: bool,
}

impl ReducedSystem {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn cols(&self) -> usize {
        self.system.cols
    }

    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    pub fn pivot_columns(&self) -> &[usize] {
        &self.pivot_columns
    }

    /// Row whose pivot sits in `col`, if `col` is a pivot column.
    pub fn pivot_row(&self, col: usize) -> Option<usize> {
        self.pivot_row_of.get(col).copied().flatten()
    }

    pub fn free_columns(&self) -> Vec<usize> {
        (0..self.cols()).filter(|&c| self.pivot_row_of[c].is_none()).collect()
    }

    pub fn system(&self) -> &Gf2System {
        &self.system
    }

    /// `log2` of the number of solutions, or `None` when inconsistent.
    pub fn log2_solution_count(&self) -> Option<usize> {
        self.consistent.then(|| self.cols() - self.rank)
    }

    /// Completes an assignment of the free columns into the unique solution
    /// that agrees with it. Pivot positions of `free_values` are ignored.
    pub fn complete(&self, free_values: &BitVec) -> Result<BitVec, Gf2Error> {
        self.system.check_len(free_values)?;
        let mut x = free_values.clone();
        for &c in &self.pivot_columns {
            x.set(c, false);
        }
        for (r, &c) in self.pivot_columns.iter().enumerate() {
            // the row's only pivot entry is c, which is currently zero in x
            let v = self.system.rhs[r] ^ self.system.matrix[r].dot(&x);
            x.set(c, v);
        }
        Ok(x)
    }

    /// Given fixed values for some variables, reports which other variables
    /// are forced, or whether the constraints are violated.
    ///
    /// The residual system over the unfixed variables is reduced again, so a
    /// conflict is reported exactly when no completion exists and a variable
    /// is reported forced exactly when every completion agrees on it.
    pub fn project_free_variables(&self, partial: &[Option<bool>]) -> Result<Propagation, Gf2Error> {
        let n = self.cols();
        if partial.len() != n {
            return Err(Gf2Error::DimensionMismatch {
                expected: n,
                found: partial.len(),
            });
        }
        if !self.consistent {
            return Ok(Propagation::Conflict);
        }
        let mut fixed_mask = BitVec::zeros(n);
        let mut fixed_vals = BitVec::zeros(n);
        for (i, p) in partial.iter().enumerate() {
            if let Some(v) = *p {
                fixed_mask.set(i, true);
                fixed_vals.set(i, v);
            }
        }
        let mut open_mask = fixed_mask.clone();
        for w in open_mask.words.iter_mut() {
            *w = !*w;
        }
        open_mask.clear_tail();

        let mut residual = Gf2System::unconstrained(n);
        for (row, &d) in self.system.matrix.iter().zip(&self.system.rhs) {
            let shifted = d ^ row.dot(&fixed_vals);
            let mut rest = row.clone();
            rest.and_assign(&open_mask);
            residual.push_row(rest, shifted)?;
        }
        let reduced = residual.reduce();
        if !reduced.consistent {
            return Ok(Propagation::Conflict);
        }
        let mut forced: Vec<(usize, bool)> = reduced
            .system
            .matrix
            .iter()
            .zip(&reduced.system.rhs)
            .filter(|(row, _)| row.count_ones() == 1)
            .map(|(row, &d)| (row.iter_ones().next().expect("one bit set"), d))
            .collect();
        forced.sort_unstable();
        if forced.is_empty() {
            Ok(Propagation::Open)
        } else {
            Ok(Propagation::Forced(forced))
        }
    }
}
