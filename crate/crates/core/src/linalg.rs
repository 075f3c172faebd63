//! Dense matrix kernel: exact integer RREF for incidence-like matrices,
//! floating LU / rank, eigenvalues via Hessenberg + shifted QR, and the
//! positive-definiteness tests used by the passivity checks.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Relative singularity threshold used when a caller does not supply one.
pub const DEFAULT_SINGULAR_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Integer matrices
// ---------------------------------------------------------------------------

/// Rectangular integer matrix, row-major. In incidence / Kron context all
/// entries are in {-1, 0, +1}; `rref_exact` enforces that bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i64>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        IntMatrix { rows: r, cols: c, data: rows.concat() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn transpose(&self) -> IntMatrix {
        let mut t = IntMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Sub-matrix with the given column indices, in the given order.
    pub fn select_cols(&self, cols: &[usize]) -> IntMatrix {
        let mut m = IntMatrix::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (jj, &j) in cols.iter().enumerate() {
                m[(i, jj)] = self[(i, j)];
            }
        }
        m
    }

    /// Sub-matrix with the given row indices, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> IntMatrix {
        let mut m = IntMatrix::zeros(rows.len(), self.cols);
        for (ii, &i) in rows.iter().enumerate() {
            for j in 0..self.cols {
                m[(ii, j)] = self[(i, j)];
            }
        }
        m
    }

    /// Horizontal concatenation [self | other].
    pub fn hcat(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.rows, other.rows);
        let mut m = IntMatrix::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self[(i, j)];
            }
            for j in 0..other.cols {
                m[(i, self.cols + j)] = other[(i, j)];
            }
        }
        m
    }

    pub fn to_real(&self) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn row_slice(&self, i: usize) -> &[i64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

impl std::ops::Index<(usize, usize)> for IntMatrix {
    type Output = i64;
    fn index(&self, (i, j): (usize, usize)) -> &i64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IntMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut i64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Reduced row echelon form over the rationals, in exact integer arithmetic.
///
/// Valid for totally unimodular inputs (graph incidence matrices and their
/// sub-matrices): every pivot is +-1, so the elimination never leaves the
/// integers, and pivoting a totally unimodular matrix keeps all entries in
/// {-1, 0, +1}. Any entry escaping that set aborts with `NonUnimodular`,
/// which doubles as a cheap validator that the input really is incidence-like.
///
/// Returns the echelon form and the strictly increasing pivot column list.
pub fn rref_exact(m: &IntMatrix) -> Result<(IntMatrix, Vec<usize>)> {
    let mut a = m.clone();
    let (nr, nc) = (a.rows, a.cols);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..nc {
        if r == nr {
            break;
        }
        // first nonzero at or below row r
        let Some(p) = (r..nr).find(|&i| a[(i, c)] != 0) else { continue };
        if p != r {
            for j in 0..nc {
                let t = a[(p, j)];
                a[(p, j)] = a[(r, j)];
                a[(r, j)] = t;
            }
        }
        let piv = a[(r, c)];
        if piv.abs() != 1 {
            return Err(Error::NonUnimodular);
        }
        if piv == -1 {
            for j in 0..nc {
                a[(r, j)] = -a[(r, j)];
            }
        }
        for i in 0..nr {
            if i == r || a[(i, c)] == 0 {
                continue;
            }
            let f = a[(i, c)];
            for j in 0..nc {
                let v = a[(i, j)] - f * a[(r, j)];
                if v.abs() > 1 {
                    return Err(Error::NonUnimodular);
                }
                a[(i, j)] = v;
            }
        }
        pivots.push(c);
        r += 1;
    }
    Ok((a, pivots))
}

/// Exact rank of an integer (incidence-like) matrix.
pub fn rank_exact(m: &IntMatrix) -> Result<usize> {
    Ok(rref_exact(m)?.1.len())
}

// ---------------------------------------------------------------------------
// Real matrices
// ---------------------------------------------------------------------------

/// Dense real matrix, row-major. Construction rejects non-finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let data = rows.concat();
        assert!(data.iter().all(|v| v.is_finite()), "non-finite matrix entry");
        RealMatrix { rows: r, cols: c, data }
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> RealMatrix {
        let mut t = RealMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &RealMatrix) -> RealMatrix {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = RealMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        let mut y = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut s = 0.0;
            for j in 0..self.cols {
                s += self[(i, j)] * x[j];
            }
            y[i] = s;
        }
        y
    }

    pub fn add(&self, rhs: &RealMatrix) -> RealMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
        out
    }

    pub fn scale(&self, s: f64) -> RealMatrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    /// Frobenius norm.
    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &RealMatrix) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> RealMatrix {
        let mut b = RealMatrix::zeros(nr, nc);
        for i in 0..nr {
            for j in 0..nc {
                b[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        b
    }

    pub fn select_rows(&self, rows: &[usize]) -> RealMatrix {
        let mut m = RealMatrix::zeros(rows.len(), self.cols);
        for (ii, &i) in rows.iter().enumerate() {
            for j in 0..self.cols {
                m[(ii, j)] = self[(i, j)];
            }
        }
        m
    }

    pub fn select_cols(&self, cols: &[usize]) -> RealMatrix {
        let mut m = RealMatrix::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (jj, &j) in cols.iter().enumerate() {
                m[(i, jj)] = self[(i, j)];
            }
        }
        m
    }
}

impl std::ops::Index<(usize, usize)> for RealMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

// ---------------------------------------------------------------------------
// LU factorization
// ---------------------------------------------------------------------------

/// LU factors with partial pivoting, reusable across several right-hand sides.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: RealMatrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    /// Factor a square matrix. `tol` is relative: a pivot is declared zero if
    /// its magnitude falls below `tol` times the largest initial column
    /// magnitude of the matrix.
    pub fn factor(a: &RealMatrix, tol: f64) -> Result<Lu> {
        assert_eq!(a.rows, a.cols, "LU requires a square matrix");
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let scale = a.norm_max().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                if lu[(i, k)].abs() > best {
                    best = lu[(i, k)].abs();
                    p = i;
                }
            }
            if best < tol * scale {
                return Err(Error::Singular(tol));
            }
            if p != k {
                for j in 0..n {
                    let t = lu[(p, j)];
                    lu[(p, j)] = lu[(k, j)];
                    lu[(k, j)] = t;
                }
                perm.swap(p, k);
                sign = -sign;
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    lu[(i, j)] -= f * lu[(k, j)];
                }
            }
        }
        Ok(Lu { lu, perm, sign })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    /// Solve A X = B column by column.
    pub fn solve_matrix(&self, b: &RealMatrix) -> RealMatrix {
        let mut x = RealMatrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let col: Vec<f64> = (0..b.rows).map(|i| b[(i, j)]).collect();
            let sol = self.solve(&col);
            for i in 0..b.rows {
                x[(i, j)] = sol[i];
            }
        }
        x
    }

    pub fn det(&self) -> f64 {
        let mut d = self.sign;
        for i in 0..self.lu.rows {
            d *= self.lu[(i, i)];
        }
        d
    }

    /// Ratio of smallest to largest pivot magnitude; a cheap conditioning proxy.
    pub fn pivot_ratio(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..self.lu.rows {
            let p = self.lu[(i, i)].abs();
            lo = lo.min(p);
            hi = hi.max(p);
        }
        if hi == 0.0 {
            0.0
        } else {
            lo / hi
        }
    }
}

/// Solve A x = b with partial pivoting. See `Lu::factor` for the tolerance.
pub fn lu_solve(a: &RealMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    Ok(Lu::factor(a, tol)?.solve(b))
}

/// Numerical rank by Gaussian elimination with full pivoting: count pivots
/// whose magnitude exceeds `tol` times the largest initial entry.
pub fn rank_real(m: &RealMatrix, tol: f64) -> usize {
    let mut a = m.clone();
    let (nr, nc) = (a.rows, a.cols);
    let scale = a.norm_max();
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    let mut used_rows = vec![false; nr];
    let mut used_cols = vec![false; nc];
    loop {
        let mut best = 0.0;
        let mut bi = 0;
        let mut bj = 0;
        for i in 0..nr {
            if used_rows[i] {
                continue;
            }
            for j in 0..nc {
                if used_cols[j] {
                    continue;
                }
                if a[(i, j)].abs() > best {
                    best = a[(i, j)].abs();
                    bi = i;
                    bj = j;
                }
            }
        }
        if best <= tol * scale {
            break;
        }
        rank += 1;
        used_rows[bi] = true;
        used_cols[bj] = true;
        let piv = a[(bi, bj)];
        for i in 0..nr {
            if used_rows[i] || a[(i, bj)] == 0.0 {
                continue;
            }
            let f = a[(i, bj)] / piv;
            for j in 0..nc {
                if !used_cols[j] {
                    a[(i, j)] -= f * a[(bi, j)];
                }
            }
            a[(i, bj)] = 0.0;
        }
    }
    rank
}

// ---------------------------------------------------------------------------
// Eigenvalues: Hessenberg reduction + shifted Francis QR
// ---------------------------------------------------------------------------

fn sign_of(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Similarity reduction to upper Hessenberg form by stabilized elementary
/// transformations (pivoted Gaussian elimination).
fn to_hessenberg(a: &mut RealMatrix) {
    let n = a.rows;
    for m in 1..n.saturating_sub(1) {
        let mut x = 0.0f64;
        let mut piv = m;
        for j in m..n {
            if a[(j, m - 1)].abs() > x.abs() {
                x = a[(j, m - 1)];
                piv = j;
            }
        }
        if piv != m {
            for j in m - 1..n {
                let t = a[(piv, j)];
                a[(piv, j)] = a[(m, j)];
                a[(m, j)] = t;
            }
            for j in 0..n {
                let t = a[(j, piv)];
                a[(j, piv)] = a[(j, m)];
                a[(j, m)] = t;
            }
        }
        if x != 0.0 {
            for i in m + 1..n {
                let mut y = a[(i, m - 1)];
                if y != 0.0 {
                    y /= x;
                    a[(i, m - 1)] = 0.0;
                    for j in m..n {
                        let t = y * a[(m, j)];
                        a[(i, j)] -= t;
                    }
                    for j in 0..n {
                        let t = y * a[(j, i)];
                        a[(j, m)] += t;
                    }
                }
            }
        }
    }
    // zero out anything below the first subdiagonal
    for i in 2..n {
        for j in 0..i - 1 {
            a[(i, j)] = 0.0;
        }
    }
}

/// Eigenvalues of an upper Hessenberg matrix by the Francis double-shift QR
/// iteration (EISPACK `hqr` lineage). Destroys `a`.
fn hqr_eigenvalues(a: &mut RealMatrix) -> Result<Vec<Complex64>> {
    let n = a.rows as i64;
    let at = |a: &RealMatrix, i: i64, j: i64| a[(i as usize, j as usize)];
    macro_rules! set {
        ($a:expr, $i:expr, $j:expr, $v:expr) => {
            $a[($i as usize, $j as usize)] = $v
        };
    }
    let mut wr = vec![0.0f64; n as usize];
    let mut wi = vec![0.0f64; n as usize];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in (i - 1).max(0)..n {
            anorm += at(a, i, j).abs();
        }
    }
    if anorm == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); n as usize]);
    }
    let eps = f64::EPSILON;
    let mut nn = n - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0;
        loop {
            // search for a negligible subdiagonal element
            let mut l = nn;
            while l >= 1 {
                let mut s = at(a, l - 1, l - 1).abs() + at(a, l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if at(a, l, l - 1).abs() <= eps * s {
                    set!(a, l, l - 1, 0.0);
                    break;
                }
                l -= 1;
            }
            let mut x = at(a, nn, nn);
            if l == nn {
                // one real root found
                wr[nn as usize] = x + t;
                wi[nn as usize] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = at(a, nn - 1, nn - 1);
            let mut w = at(a, nn, nn - 1) * at(a, nn - 1, nn);
            if l == nn - 1 {
                // a 2x2 block: real pair or exact complex conjugates
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign_of(z, p);
                    wr[(nn - 1) as usize] = x + z;
                    wr[nn as usize] = if z != 0.0 { x - w / z } else { x + z };
                    wi[(nn - 1) as usize] = 0.0;
                    wi[nn as usize] = 0.0;
                } else {
                    wr[(nn - 1) as usize] = x + p;
                    wr[nn as usize] = x + p;
                    wi[nn as usize] = z;
                    wi[(nn - 1) as usize] = -z;
                }
                nn -= 2;
                break;
            }
            if its == 40 {
                return Err(Error::NoConvergence(nn as usize));
            }
            if its == 10 || its == 20 {
                // exceptional shift
                t += x;
                for i in 0..=nn {
                    let d = at(a, i, i) - x;
                    set!(a, i, i, d);
                }
                let s = at(a, nn, nn - 1).abs() + at(a, nn - 1, nn - 2).abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            // find two consecutive small subdiagonal elements
            let mut m = nn - 2;
            let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);
            while m >= l {
                let z = at(a, m, m);
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / at(a, m + 1, m) + at(a, m, m + 1);
                q = at(a, m + 1, m + 1) - z - rr - ss;
                r = at(a, m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = at(a, m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (at(a, m - 1, m - 1).abs() + z.abs() + at(a, m + 1, m + 1).abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nn {
                set!(a, i, i - 2, 0.0);
                if i != m + 2 {
                    set!(a, i, i - 3, 0.0);
                }
            }
            // double QR step on rows l..nn, columns m..nn
            for k in m..nn {
                if k != m {
                    p = at(a, k, k - 1);
                    q = at(a, k + 1, k - 1);
                    r = if k != nn - 1 { at(a, k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign_of((p * p + q * q + r * r).sqrt(), p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        let v = -at(a, k, k - 1);
                        set!(a, k, k - 1, v);
                    }
                } else {
                    set!(a, k, k - 1, -s * x);
                }
                p += s;
                x = p / s;
                let y2 = q / s;
                let z = r / s;
                q /= p;
                r /= p;
                for j in k..=nn {
                    let mut pp = at(a, k, j) + q * at(a, k + 1, j);
                    if k != nn - 1 {
                        pp += r * at(a, k + 2, j);
                        let v = at(a, k + 2, j) - pp * z;
                        set!(a, k + 2, j, v);
                    }
                    let v1 = at(a, k + 1, j) - pp * y2;
                    set!(a, k + 1, j, v1);
                    let v0 = at(a, k, j) - pp * x;
                    set!(a, k, j, v0);
                }
                let mmin = if nn < k + 3 { nn } else { k + 3 };
                for i in l..=mmin {
                    let mut pp = x * at(a, i, k) + y2 * at(a, i, k + 1);
                    if k != nn - 1 {
                        pp += z * at(a, i, k + 2);
                        let v = at(a, i, k + 2) - pp * r;
                        set!(a, i, k + 2, v);
                    }
                    let v1 = at(a, i, k + 1) - pp * q;
                    set!(a, i, k + 1, v1);
                    let v0 = at(a, i, k) - pp;
                    set!(a, i, k, v0);
                }
            }
        }
    }
    let mut eig: Vec<Complex64> =
        wr.into_iter().zip(wi).map(|(re, im)| Complex64::new(re, im)).collect();
    sort_complex(&mut eig);
    Ok(eig)
}

/// Deterministic ordering for eigenvalue lists: by real part, then imaginary.
pub fn sort_complex(v: &mut [Complex64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// All eigenvalues of a square real matrix, sorted by (re, im). Complex
/// conjugate pairs are produced from the same 2x2 block so they pair exactly.
pub fn eig_dense(m: &RealMatrix) -> Result<Vec<Complex64>> {
    assert_eq!(m.rows, m.cols, "eig_dense requires a square matrix");
    if m.rows == 0 {
        return Ok(Vec::new());
    }
    if m.rows == 1 {
        return Ok(vec![Complex64::new(m[(0, 0)], 0.0)]);
    }
    let mut h = m.clone();
    to_hessenberg(&mut h);
    hqr_eigenvalues(&mut h)
}

/// Singular values via the symmetric eigenproblem of M^T M (adequate at the
/// desk scales this crate targets). Sorted descending.
pub fn singular_values(m: &RealMatrix) -> Result<Vec<f64>> {
    let mtm = m.transpose().matmul(m);
    let eigs = eig_dense(&mtm)?;
    let mut sv: Vec<f64> = eigs.iter().map(|l| l.re.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

// ---------------------------------------------------------------------------
// Positive definiteness
// ---------------------------------------------------------------------------

/// A (not necessarily symmetric) matrix is positive definite iff the smallest
/// eigenvalue of its symmetric part exceeds `tol * ||M||`.
pub fn is_pd(m: &RealMatrix, tol: f64) -> bool {
    assert_eq!(m.rows, m.cols);
    if m.rows == 0 {
        return true;
    }
    let sym = m.add(&m.transpose()).scale(0.5);
    let Ok(eigs) = eig_dense(&sym) else { return false };
    let min = eigs.iter().map(|l| l.re).fold(f64::INFINITY, f64::min);
    min > tol * m.norm_fro()
}

/// Positive definite matrix pair test: (B, B') is a PDMP iff B is nonsingular
/// and -B^{-1} B' is positive definite.
pub fn is_pdmp(b: &RealMatrix, bp: &RealMatrix, tol: f64) -> bool {
    assert_eq!(b.rows, b.cols);
    assert_eq!((b.rows, b.cols), (bp.rows, bp.cols));
    if b.rows == 0 {
        return true;
    }
    let Ok(lu) = Lu::factor(b, DEFAULT_SINGULAR_TOL) else { return false };
    let m = lu.solve_matrix(bp).scale(-1.0);
    is_pd(&m, tol)
}

// ---------------------------------------------------------------------------
// Complex linear solves and eigenvectors by inverse iteration
// ---------------------------------------------------------------------------

/// Solve a dense complex system by LU with partial pivoting.
pub fn complex_solve(a: &[Vec<Complex64>], b: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = a.len();
    assert!(a.iter().all(|r| r.len() == n) && b.len() == n);
    let mut m: Vec<Vec<Complex64>> = a.to_vec();
    let mut x: Vec<Complex64> = b.to_vec();
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.norm()))
        .max(f64::MIN_POSITIVE);
    for k in 0..n {
        let mut p = k;
        let mut best = m[k][k].norm();
        for i in k + 1..n {
            if m[i][k].norm() > best {
                best = m[i][k].norm();
                p = i;
            }
        }
        if best < 1e-300 * scale.max(1.0) {
            return Err(Error::Singular(1e-300));
        }
        m.swap(k, p);
        x.swap(k, p);
        let piv = m[k][k];
        for i in k + 1..n {
            let f = m[i][k] / piv;
            m[i][k] = f;
            for j in k + 1..n {
                let t = f * m[k][j];
                m[i][j] -= t;
            }
            let t = f * x[k];
            x[i] -= t;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= m[i][j] * x[j];
        }
        x[i] = s / m[i][i];
    }
    Ok(x)
}

/// Eigenvector of a real matrix for a given (possibly complex) eigenvalue,
/// by inverse iteration with a slightly perturbed shift.
pub fn eigenvector_for(m: &RealMatrix, lambda: Complex64) -> Result<Vec<Complex64>> {
    let n = m.rows;
    let scale = m.norm_fro().max(1.0);
    let shift = lambda + Complex64::new(1e-10, 1e-10) * scale;
    let a: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut v = Complex64::new(m[(i, j)], 0.0);
                    if i == j {
                        v -= shift;
                    }
                    v
                })
                .collect()
        })
        .collect();
    // deterministic start vector
    let mut v: Vec<Complex64> =
        (0..n).map(|i| Complex64::new(1.0 + 0.01 * i as f64, 0.1)).collect();
    normalize(&mut v);
    for _ in 0..8 {
        let w = complex_solve(&a, &v)?;
        v = w;
        normalize(&mut v);
        // residual check against the unperturbed eigenvalue
        let mut res = 0.0f64;
        for i in 0..n {
            let mut s = -lambda * v[i];
            for j in 0..n {
                s += Complex64::new(m[(i, j)], 0.0) * v[j];
            }
            res = res.max(s.norm());
        }
        if res <= 1e-9 * scale {
            return Ok(v);
        }
    }
    Ok(v)
}

fn normalize(v: &mut [Complex64]) {
    let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if nrm > 0.0 {
        // fix the phase so the largest entry is real positive (determinism)
        let mut k = 0;
        let mut best = 0.0;
        for (i, z) in v.iter().enumerate() {
            if z.norm() > best {
                best = z.norm();
                k = i;
            }
        }
        let phase = v[k] / v[k].norm();
        for z in v.iter_mut() {
            *z /= phase * nrm;
        }
    }
}

pub fn vec_norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn vec_norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
