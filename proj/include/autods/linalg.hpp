#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace autods {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows);
    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::vector<double> column(std::size_t c) const;

    const std::vector<double>& data() const noexcept { return data_; }

    Matrix select_rows(std::span<const std::size_t> rows) const;
    Matrix select_cols(std::span<const std::size_t> cols) const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix transpose(const Matrix& a);
Matrix multiply(const Matrix& a, const Matrix& b);
std::vector<double> multiply(const Matrix& a, std::span<const double> x);

/// Column means and the n-1 sample covariance of the rows.
Matrix covariance(const Matrix& points, std::vector<double>& mean_out);

/// Solves A x = b for symmetric positive-definite A. Throws a domain error otherwise.
std::vector<double> cholesky_solve(const Matrix& a, std::span<const double> b);
/// Gaussian elimination with partial pivoting. Throws a domain error when singular.
std::vector<double> solve_linear(Matrix a, std::vector<double> b);
Matrix inverse(const Matrix& a);

struct SymmetricEigen {
    std::vector<double> values;  // descending
    Matrix vectors;              // column j is the eigenvector of values[j]
};

/// Cyclic Jacobi rotations; A must be symmetric.
SymmetricEigen symmetric_eigen(const Matrix& a, double tolerance = 1e-14, int max_sweeps = 100);

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace autods
