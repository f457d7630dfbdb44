#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stvf {

using Index = std::size_t;
using Vector = std::vector<double>;

/// Neumaier-compensated accumulator. Used for every reduction so that
/// results do not depend on how partial sums are grouped.
class CompensatedSum {
public:
    void add(double v) noexcept
    {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

[[nodiscard]] double dot(std::span<const double> x, std::span<const double> y);
[[nodiscard]] double norm2(std::span<const double> x);

/// Compressed-row sparse matrix. Column indices are strictly increasing
/// within each row.
class CsrMatrix {
public:
    struct Triplet {
        Index row;
        Index col;
        double value;
    };

    CsrMatrix() = default;
    CsrMatrix(Index n_rows, Index n_cols, std::vector<Index> row_offsets,
              std::vector<Index> col_indices, std::vector<double> values);

    /// Duplicate (row, col) entries are summed.
    static CsrMatrix from_triplets(Index n_rows, Index n_cols, std::vector<Triplet> triplets);
    static CsrMatrix identity(Index n);

    [[nodiscard]] Index n_rows() const noexcept { return n_rows_; }
    [[nodiscard]] Index n_cols() const noexcept { return n_cols_; }
    [[nodiscard]] Index nnz() const noexcept { return values_.size(); }
    [[nodiscard]] std::span<const Index> row_offsets() const noexcept { return row_offsets_; }
    [[nodiscard]] std::span<const Index> col_indices() const noexcept { return col_indices_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::span<double> mutable_values() noexcept { return values_; }

    /// Position of (row, col) in values(), or npos when not stored.
    [[nodiscard]] Index find(Index row, Index col) const noexcept;
    [[nodiscard]] double at(Index row, Index col) const noexcept;
    [[nodiscard]] Vector diagonal() const;

    /// Exact structural and numerical symmetry (entries compared with ==).
    [[nodiscard]] bool is_symmetric() const noexcept;

    /// Matrix with the same pattern and values a*this + b*other.
    /// Patterns must be identical.
    [[nodiscard]] CsrMatrix combine(double a, const CsrMatrix& other, double b) const;

    static constexpr Index npos = static_cast<Index>(-1);

private:
    Index n_rows_ = 0;
    Index n_cols_ = 0;
    std::vector<Index> row_offsets_{0};
    std::vector<Index> col_indices_;
    std::vector<double> values_;
};

/// y = m * x.
[[nodiscard]] Vector spmv(const CsrMatrix& m, std::span<const double> x);
void spmv_into(const CsrMatrix& m, std::span<const double> x, std::span<double> y);

struct CgOptions {
    double tol = 1e-12;
    /// 0 selects 10 * n_rows.
    Index max_iter = 0;
    /// Called after each iteration with the iteration number and current iterate.
    std::function<void(Index, std::span<const double>)> on_iterate;
};

struct CgResult {
    Vector x;
    Index iterations = 0;
    double relative_residual = 0.0;
};

class CgFailure : public std::runtime_error {
public:
    CgFailure(Index iterations, double relative_residual);
    [[nodiscard]] Index iterations() const noexcept { return iterations_; }
    [[nodiscard]] double relative_residual() const noexcept { return relative_residual_; }

private:
    Index iterations_;
    double relative_residual_;
};

/// Jacobi-preconditioned conjugate gradients for SPD systems. Converged when
/// ||b - m x||_2 <= tol * ||b||_2. Throws CgFailure otherwise.
[[nodiscard]] CgResult cg_solve(const CsrMatrix& m, std::span<const double> b,
                                const CgOptions& options = {},
                                std::span<const double> initial_guess = {});

}  // namespace stvf
