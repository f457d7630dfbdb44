#include "stvf/linalg.hpp"

#include <algorithm>
#include <sstream>

namespace stvf {

double dot(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size()) {
        throw std::invalid_argument("dot: length mismatch");
    }
    CompensatedSum s;
    for (Index i = 0; i < x.size(); ++i) {
        s.add(x[i] * y[i]);
    }
    return s.value();
}

double norm2(std::span<const double> x)
{
    return std::sqrt(dot(x, x));
}

CsrMatrix::CsrMatrix(Index n_rows, Index n_cols, std::vector<Index> row_offsets,
                     std::vector<Index> col_indices, std::vector<double> values)
    : n_rows_(n_rows),
      n_cols_(n_cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values))
{
    if (row_offsets_.size() != n_rows_ + 1 || row_offsets_.front() != 0 ||
        row_offsets_.back() != col_indices_.size() || col_indices_.size() != values_.size()) {
        throw std::invalid_argument("CsrMatrix: inconsistent storage arrays");
    }
    for (Index r = 0; r < n_rows_; ++r) {
        if (row_offsets_[r] > row_offsets_[r + 1]) {
            throw std::invalid_argument("CsrMatrix: row_offsets must be nondecreasing");
        }
        for (Index k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            if (col_indices_[k] >= n_cols_) {
                throw std::invalid_argument("CsrMatrix: column index out of range");
            }
            if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1]) {
                throw std::invalid_argument("CsrMatrix: columns must be strictly increasing in a row");
            }
        }
    }
}

CsrMatrix CsrMatrix::from_triplets(Index n_rows, Index n_cols, std::vector<Triplet> triplets)
{
    std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<Index> offsets(n_rows + 1, 0);
    std::vector<Index> cols;
    std::vector<double> vals;
    cols.reserve(triplets.size());
    vals.reserve(triplets.size());
    for (Index k = 0; k < triplets.size();) {
        const Triplet& t = triplets[k];
        if (t.row >= n_rows || t.col >= n_cols) {
            throw std::invalid_argument("CsrMatrix::from_triplets: index out of range");
        }
        // Sum duplicates in insertion order so that assembly is reproducible.
        double v = 0.0;
        Index j = k;
        for (; j < triplets.size() && triplets[j].row == t.row && triplets[j].col == t.col; ++j) {
            v += triplets[j].value;
        }
        cols.push_back(t.col);
        vals.push_back(v);
        ++offsets[t.row + 1];
        k = j;
    }
    for (Index r = 0; r < n_rows; ++r) {
        offsets[r + 1] += offsets[r];
    }
    return CsrMatrix(n_rows, n_cols, std::move(offsets), std::move(cols), std::move(vals));
}

CsrMatrix CsrMatrix::identity(Index n)
{
    std::vector<Index> offsets(n + 1);
    std::vector<Index> cols(n);
    for (Index i = 0; i <= n; ++i) {
        offsets[i] = i;
    }
    for (Index i = 0; i < n; ++i) {
        cols[i] = i;
    }
    return CsrMatrix(n, n, std::move(offsets), std::move(cols), Vector(n, 1.0));
}

Index CsrMatrix::find(Index row, Index col) const noexcept
{
    if (row >= n_rows_) {
        return npos;
    }
    const auto first = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[row]);
    const auto last = col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[row + 1]);
    const auto it = std::lower_bound(first, last, col);
    if (it == last || *it != col) {
        return npos;
    }
    return static_cast<Index>(it - col_indices_.begin());
}

double CsrMatrix::at(Index row, Index col) const noexcept
{
    const Index k = find(row, col);
    return k == npos ? 0.0 : values_[k];
}

Vector CsrMatrix::diagonal() const
{
    Vector d(std::min(n_rows_, n_cols_), 0.0);
    for (Index i = 0; i < d.size(); ++i) {
        d[i] = at(i, i);
    }
    return d;
}

bool CsrMatrix::is_symmetric() const noexcept
{
    if (n_rows_ != n_cols_) {
        return false;
    }
    for (Index r = 0; r < n_rows_; ++r) {
        for (Index k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
            const Index t = find(col_indices_[k], r);
            if (t == npos || values_[t] != values_[k]) {
                return false;
            }
        }
    }
    return true;
}

CsrMatrix CsrMatrix::combine(double a, const CsrMatrix& other, double b) const
{
    if (other.n_rows_ != n_rows_ || other.n_cols_ != n_cols_ ||
        other.row_offsets_ != row_offsets_ || other.col_indices_ != col_indices_) {
        throw std::invalid_argument("CsrMatrix::combine: sparsity patterns differ");
    }
    CsrMatrix out = *this;
    for (Index k = 0; k < values_.size(); ++k) {
        out.values_[k] = a * values_[k] + b * other.values_[k];
    }
    return out;
}

void spmv_into(const CsrMatrix& m, std::span<const double> x, std::span<double> y)
{
    if (x.size() != m.n_cols() || y.size() != m.n_rows()) {
        throw std::invalid_argument("spmv: dimension mismatch");
    }
    const auto offsets = m.row_offsets();
    const auto cols = m.col_indices();
    const auto vals = m.values();
    for (Index r = 0; r < m.n_rows(); ++r) {
        double acc = 0.0;
        for (Index k = offsets[r]; k < offsets[r + 1]; ++k) {
            acc += vals[k] * x[cols[k]];
        }
        y[r] = acc;
    }
}

Vector spmv(const CsrMatrix& m, std::span<const double> x)
{
    Vector y(m.n_rows());
    spmv_into(m, x, y);
    return y;
}

namespace {

std::string cg_message(Index iterations, double residual)
{
    std::ostringstream os;
    os << "cg_solve: no convergence after " << iterations
       << " iterations (relative residual " << residual << ")";
    return os.str();
}

}  // namespace

CgFailure::CgFailure(Index iterations, double relative_residual)
    : std::runtime_error(cg_message(iterations, relative_residual)),
      iterations_(iterations),
      relative_residual_(relative_residual)
{
}

CgResult cg_solve(const CsrMatrix& m, std::span<const double> b, const CgOptions& options,
                  std::span<const double> initial_guess)
{
    const Index n = m.n_rows();
    if (m.n_cols() != n || b.size() != n) {
        throw std::invalid_argument("cg_solve: dimension mismatch");
    }
    if (!(options.tol > 0.0)) {
        throw std::invalid_argument("cg_solve: tol must be positive");
    }
    if (!initial_guess.empty() && initial_guess.size() != n) {
        throw std::invalid_argument("cg_solve: initial guess has wrong length");
    }
    const Index max_iter = options.max_iter == 0 ? 10 * std::max<Index>(n, 1) : options.max_iter;

    CgResult result;
    result.x.assign(n, 0.0);
    const double b_norm = norm2(b);
    if (b_norm == 0.0) {
        return result;
    }
    if (!initial_guess.empty()) {
        std::copy(initial_guess.begin(), initial_guess.end(), result.x.begin());
    }
    Vector& x = result.x;

    Vector inv_diag = m.diagonal();
    for (double& d : inv_diag) {
        if (!(d > 0.0)) {
            throw std::invalid_argument("cg_solve: matrix has a nonpositive diagonal entry");
        }
        d = 1.0 / d;
    }

    Vector r(n);
    spmv_into(m, x, r);
    for (Index i = 0; i < n; ++i) {
        r[i] = b[i] - r[i];
    }
    double rel = norm2(r) / b_norm;
    if (rel <= options.tol) {
        result.relative_residual = rel;
        return result;
    }

    Vector z(n);
    Vector p(n);
    Vector q(n);
    for (Index i = 0; i < n; ++i) {
        z[i] = inv_diag[i] * r[i];
    }
    p = z;
    double rz = dot(r, z);
    bool restart = false;

    for (Index it = 1; it <= max_iter; ++it) {
        spmv_into(m, p, q);
        const double pq = dot(p, q);
        if (!(pq > 0.0)) {
            throw CgFailure(it, rel);
        }
        const double alpha = rz / pq;
        for (Index i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if (options.on_iterate) {
            options.on_iterate(it, x);
        }
        rel = norm2(r) / b_norm;
        if (rel <= options.tol) {
            // Confirm against the true residual; the recurrence can drift.
            Vector true_r(n);
            spmv_into(m, x, true_r);
            for (Index i = 0; i < n; ++i) {
                true_r[i] = b[i] - true_r[i];
            }
            const double true_rel = norm2(true_r) / b_norm;
            if (true_rel <= options.tol) {
                result.iterations = it;
                result.relative_residual = true_rel;
                return result;
            }
            r = std::move(true_r);
            rel = true_rel;
            restart = true;
        }
        for (Index i = 0; i < n; ++i) {
            z[i] = inv_diag[i] * r[i];
        }
        const double rz_next = dot(r, z);
        const double beta = restart ? 0.0 : rz_next / rz;
        restart = false;
        rz = rz_next;
        for (Index i = 0; i < n; ++i) {
            p[i] = z[i] + beta * p[i];
        }
    }
    throw CgFailure(max_iter, rel);
}

}  // namespace stvf
