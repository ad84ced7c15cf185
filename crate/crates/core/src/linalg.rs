//! Dense matrices over GF(2^8), Vandermonde construction, inversion, and
//! systematic generator matrices.

use std::fmt;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::gf256::Gf;

/// Row-major dense matrix over GF(2^8).
#[derive(Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    cells: Vec<Gf>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            cells: vec![Gf::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Gf::ONE);
        }
        m
    }

    pub fn from_cells(rows: usize, cols: usize, cells: Vec<Gf>) -> Result<Self> {
        if rows * cols != cells.len() {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix from {} cells",
                cells.len()
            )));
        }
        Ok(Matrix { rows, cols, cells })
    }

    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut cells = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::DimensionMismatch("ragged rows".into()));
            }
            cells.extend(row.iter().copied().map(Gf));
        }
        Matrix::from_cells(rows.len(), cols, cells)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> &[Gf] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Gf {
        self.cells[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Gf) {
        self.cells[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Gf] {
        &self.cells[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_identity(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|r| (0..self.cols).all(|c| self.get(r, c) == if r == c { Gf::ONE } else { Gf::ZERO }))
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut cells = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            cells.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            cells,
        }
    }

    pub fn mul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for i in 0..self.cols {
                let a = self.get(r, i);
                if a.is_zero() {
                    continue;
                }
                for c in 0..rhs.cols {
                    let v = out.get(r, c) + a * rhs.get(i, c);
                    out.set(r, c, v);
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[Gf]) -> Result<Vec<Gf>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(&a, &x)| a * x).sum())
            .collect())
    }

    /// Inverse by Gauss-Jordan elimination with first-nonzero pivoting.
    pub fn invert(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "cannot invert a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut work = self.clone();
        let mut inv = Matrix::identity(n);
        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| !work.get(r, col).is_zero())
                .ok_or(Error::SingularMatrix)?;
            if pivot != col {
                work.swap_rows(pivot, col);
                inv.swap_rows(pivot, col);
            }
            let scale = work.get(col, col).inv()?;
            work.scale_row(col, scale);
            inv.scale_row(col, scale);
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = work.get(r, col);
                if factor.is_zero() {
                    continue;
                }
                work.add_scaled_row(r, col, factor);
                inv.add_scaled_row(r, col, factor);
            }
        }
        Ok(inv)
    }

    /// True when the matrix is square and nonsingular.
    pub fn is_invertible(&self) -> bool {
        self.is_square() && self.invert().is_ok()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for c in 0..self.cols {
            self.cells.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    fn scale_row(&mut self, r: usize, s: Gf) {
        for c in 0..self.cols {
            let v = self.get(r, c) * s;
            self.set(r, c, v);
        }
    }

    // row[dst] += factor * row[src]
    fn add_scaled_row(&mut self, dst: usize, src: usize, factor: Gf) {
        for c in 0..self.cols {
            let v = self.get(dst, c) + factor * self.get(src, c);
            self.set(dst, c, v);
        }
    }

    /// One row per line, cells as space-separated two-digit hex bytes.
    pub fn to_hex_lines(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let line = self.row(r).iter().map(|g| format!("{:02x}", g.0)).join(" ");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Parses the format written by [`Matrix::to_hex_lines`]. Blank lines are skipped.
    pub fn from_hex_lines(text: &str) -> Result<Matrix> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    if tok.len() != 2 {
                        return Err(Error::Parse {
                            line: lineno + 1,
                            message: format!("expected two hex digits, got {tok:?}"),
                        });
                    }
                    u8::from_str_radix(tok, 16).map_err(|e| Error::Parse {
                        line: lineno + 1,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<u8>>>()?;
            rows.push(row);
        }
        Matrix::from_rows(&rows)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{}", self.rows, self.cols)?;
        f.write_str(&self.to_hex_lines())
    }
}

/// Row `i` is `[1, p_i, p_i^2, ..., p_i^(cols-1)]`.
pub fn vandermonde(points: &[Gf], cols: usize) -> Result<Matrix> {
    if points.len() > 256 {
        return Err(Error::TooManyPoints(points.len()));
    }
    let mut seen = [false; 256];
    for p in points {
        if std::mem::replace(&mut seen[p.0 as usize], true) {
            return Err(Error::DuplicateEvaluationPoint(p.0));
        }
    }
    let mut m = Matrix::zeros(points.len(), cols);
    for (r, &p) in points.iter().enumerate() {
        for c in 0..cols {
            m.set(r, c, p.pow(c));
        }
    }
    Ok(m)
}

/// Right-multiplies `m` by the inverse of its top square block.
pub fn systematize(m: &Matrix) -> Result<GeneratorMatrix> {
    let k = m.cols();
    if m.rows() < k {
        return Err(Error::DimensionMismatch(format!(
            "cannot systematize a {}x{} matrix",
            m.rows(),
            k
        )));
    }
    let top: Vec<usize> = (0..k).collect();
    let top_inv = m.select_rows(&top).invert()?;
    let matrix = m.mul(&top_inv)?;
    Ok(GeneratorMatrix {
        k,
        r: m.rows() - k,
        matrix,
    })
}

/// Upper bound on `C(k+r, r)` for which a power-form generator is verified
/// exhaustively before use.
const MDS_CHECK_BUDGET: u64 = 20_000;

/// Systematic `(k+r) x k` encoding matrix.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GeneratorMatrix {
    k: usize,
    r: usize,
    matrix: Matrix,
}

impl GeneratorMatrix {
    /// Generator used by the codecs.
    ///
    /// Parity row `j` is `[1, a^j, a^(2j), ..., a^((k-1)j)]` with `a = 2`, which
    /// gives the familiar `(a1 + a2, a1 + 2 a2)` parities for `(2, 2)`. That form
    /// is MDS for every `r <= 3`; for larger `r` it is verified exhaustively when
    /// that is cheap, and otherwise the systematized Vandermonde construction
    /// (always MDS) is used instead.
    pub fn for_code(k: usize, r: usize) -> Result<Self> {
        validate_kr(k, r)?;
        let power = GeneratorMatrix::power_form(k, r)?;
        if r <= 3 {
            return Ok(power);
        }
        if binomial(k + r, r) <= MDS_CHECK_BUDGET && power.is_mds() {
            return Ok(power);
        }
        GeneratorMatrix::systematic_vandermonde(k, r)
    }

    /// `[I; P]` with `P[j][i] = 2^(i*j)`. Not MDS for every `(k, r)`.
    pub fn power_form(k: usize, r: usize) -> Result<Self> {
        validate_kr(k, r)?;
        let mut matrix = Matrix::zeros(k + r, k);
        for i in 0..k {
            matrix.set(i, i, Gf::ONE);
        }
        for j in 0..r {
            for i in 0..k {
                matrix.set(k + j, i, Gf::alpha_pow(i * j));
            }
        }
        Ok(GeneratorMatrix { k, r, matrix })
    }

    /// Vandermonde matrix on points `0, 1, ..., k+r-1`, systematized.
    pub fn systematic_vandermonde(k: usize, r: usize) -> Result<Self> {
        validate_kr(k, r)?;
        let points: Vec<Gf> = (0..k + r).map(|p| Gf(p as u8)).collect();
        systematize(&vandermonde(&points, k)?)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Coefficients of parity `j` over the data symbols.
    pub fn parity_row(&self, j: usize) -> &[Gf] {
        self.matrix.row(self.k + j)
    }

    /// Parity rows only, as an `r x k` matrix.
    pub fn parity_matrix(&self) -> Matrix {
        let rows: Vec<usize> = (self.k..self.k + self.r).collect();
        self.matrix.select_rows(&rows)
    }

    pub fn is_systematic(&self) -> bool {
        let top: Vec<usize> = (0..self.k).collect();
        self.matrix.select_rows(&top).is_identity()
    }

    /// Inverse of the submatrix formed by `positions` (exactly `k` of them).
    pub fn decode_matrix(&self, positions: &[usize]) -> Result<Matrix> {
        if positions.len() != self.k {
            return Err(Error::DimensionMismatch(format!(
                "decode needs {} positions, got {}",
                self.k,
                positions.len()
            )));
        }
        self.matrix.select_rows(positions).invert()
    }

    /// Every k-row subset is invertible. Exhaustive over `C(k+r, k)` subsets.
    pub fn is_mds(&self) -> bool {
        self.non_invertible_subsets().is_empty()
    }

    /// k-row subsets whose submatrix is singular.
    pub fn non_invertible_subsets(&self) -> Vec<Vec<usize>> {
        let subsets: Vec<Vec<usize>> = (0..self.k + self.r).combinations(self.k).collect();
        crate::par::filter_map(subsets, |rows| {
            if self.matrix.select_rows(&rows).is_invertible() {
                None
            } else {
                Some(rows)
            }
        })
    }
}

fn validate_kr(k: usize, r: usize) -> Result<()> {
    if k == 0 || r == 0 || k + r > 256 {
        return Err(Error::InvalidParams(format!(
            "need k >= 1, r >= 1, k + r <= 256; got k={k}, r={r}"
        )));
    }
    Ok(())
}

pub(crate) fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k.min(n));
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u64) / (i as u64 + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(v: &[u8]) -> Vec<Gf> {
        v.iter().copied().map(Gf).collect()
    }

    #[test]
    fn vandermonde_rows() {
        assert_eq!(vandermonde(&[Gf(0)], 3).unwrap().row(0), g(&[1, 0, 0]).as_slice());
        assert_eq!(vandermonde(&[Gf(1)], 3).unwrap().row(0), g(&[1, 1, 1]).as_slice());
        assert_eq!(vandermonde(&[Gf(2)], 3).unwrap().row(0), g(&[1, 2, 4]).as_slice());
    }

    #[test]
    fn vandermonde_rejects_duplicates() {
        assert!(matches!(
            vandermonde(&[Gf(3), Gf(5), Gf(3)], 2),
            Err(Error::DuplicateEvaluationPoint(3))
        ));
    }

    #[test]
    fn systematize_identity_is_identity() {
        let gm = systematize(&Matrix::identity(2)).unwrap();
        assert!(gm.matrix().is_identity());
        assert_eq!(gm.r(), 0);
    }

    #[test]
    fn systematize_singular_top() {
        let m = Matrix::from_rows(&[[1u8, 1], [1, 1], [1, 2]]).unwrap();
        assert!(matches!(systematize(&m), Err(Error::SingularMatrix)));
    }

    #[test]
    fn invert_examples() {
        assert!(Matrix::identity(4).invert().unwrap().is_identity());
        let d = Matrix::from_rows(&[[2u8, 0], [0, 2]]).unwrap();
        assert_eq!(
            d.invert().unwrap(),
            Matrix::from_rows(&[[0x8Eu8, 0], [0, 0x8E]]).unwrap()
        );
        let s = Matrix::from_rows(&[[3u8, 7], [3, 7]]).unwrap();
        assert!(matches!(s.invert(), Err(Error::SingularMatrix)));
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(rect.invert(), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn mat_vec_examples() {
        let v = g(&[0x12, 0x34, 0x56]);
        assert_eq!(Matrix::identity(3).mul_vec(&v).unwrap(), v);
        assert_eq!(Matrix::zeros(2, 3).mul_vec(&v).unwrap(), g(&[0, 0]));
        let fig1 = Matrix::from_rows(&[[1u8, 1], [1, 2]]).unwrap();
        let (a1, a2) = (Gf(0x5C), Gf(0xA7));
        assert_eq!(fig1.mul_vec(&[a1, a2]).unwrap(), vec![a1 + a2, a1 + Gf(2) * a2]);
        assert!(fig1.mul_vec(&v).is_err());
    }

    #[test]
    fn power_form_small_codes() {
        let gm = GeneratorMatrix::for_code(2, 2).unwrap();
        assert_eq!(gm.parity_row(0), g(&[1, 1]).as_slice());
        assert_eq!(gm.parity_row(1), g(&[1, 2]).as_slice());
        assert!(gm.is_systematic());
        assert!(gm.is_mds());
    }

    #[test]
    fn for_code_rejects_bad_params() {
        assert!(GeneratorMatrix::for_code(0, 2).is_err());
        assert!(GeneratorMatrix::for_code(3, 0).is_err());
        assert!(GeneratorMatrix::for_code(200, 57).is_err());
    }

    #[test]
    fn hex_round_trip_and_errors() {
        let gm = GeneratorMatrix::for_code(10, 4).unwrap();
        let text = gm.matrix().to_hex_lines();
        assert_eq!(&Matrix::from_hex_lines(&text).unwrap(), gm.matrix());
        assert!(matches!(
            Matrix::from_hex_lines("01 zz\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(Matrix::from_hex_lines("01 02\n03\n").is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(14, 4), 1001);
        assert_eq!(binomial(14, 10), 1001);
        assert_eq!(binomial(5, 0), 1);
    }
}
