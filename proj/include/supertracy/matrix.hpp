#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "supertracy/errors.hpp"
#include "supertracy/rng.hpp"

namespace supertracy {

// Dense row-major matrix of doubles. All model math in this project runs at
// desk scale, so clarity beats BLAS.
class Matrix {
public:
    Matrix() : rows_(0), cols_(0) {}
    Matrix(size_t rows, size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix uniform(size_t rows, size_t cols, Rng& rng, double lo, double hi) {
        Matrix m(rows, cols);
        for (double& x : m.data_) x = rng.uniform(lo, hi);
        return m;
    }

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(size_t r, size_t c) { return data_[r * cols_ + c]; }
    double at(size_t r, size_t c) const { return data_[r * cols_ + c]; }

    double* row_ptr(size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "operator+=");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Matrix& operator*=(double s) {
        for (double& x : data_) x *= s;
        return *this;
    }

    // this (r x k) times other (k x c).
    Matrix matmul(const Matrix& other) const {
        if (cols_ != other.rows_) throw ShapeMismatch("matmul: inner dimensions differ");
        Matrix out(rows_, other.cols_);
        for (size_t i = 0; i < rows_; ++i) {
            const double* a = row_ptr(i);
            double* o = out.row_ptr(i);
            for (size_t k = 0; k < cols_; ++k) {
                double aik = a[k];
                if (aik == 0.0) continue;
                const double* b = other.row_ptr(k);
                for (size_t j = 0; j < other.cols_; ++j) o[j] += aik * b[j];
            }
        }
        return out;
    }

    // this (r x k) times other^T where other is (c x k).
    Matrix matmul_transposed(const Matrix& other) const {
        if (cols_ != other.cols_) throw ShapeMismatch("matmul_transposed: inner dimensions differ");
        Matrix out(rows_, other.rows_);
        for (size_t i = 0; i < rows_; ++i) {
            const double* a = row_ptr(i);
            for (size_t j = 0; j < other.rows_; ++j) {
                const double* b = other.row_ptr(j);
                double acc = 0.0;
                for (size_t k = 0; k < cols_; ++k) acc += a[k] * b[k];
                out.at(i, j) = acc;
            }
        }
        return out;
    }

    Matrix transposed() const {
        Matrix out(cols_, rows_);
        for (size_t i = 0; i < rows_; ++i)
            for (size_t j = 0; j < cols_; ++j) out.at(j, i) = at(i, j);
        return out;
    }

    double min_value() const {
        if (empty()) throw EmptyMatrix("min_value on empty matrix");
        double m = data_[0];
        for (double x : data_) m = std::min(m, x);
        return m;
    }

    double max_value() const {
        if (empty()) throw EmptyMatrix("max_value on empty matrix");
        double m = data_[0];
        for (double x : data_) m = std::max(m, x);
        return m;
    }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    void require_same_shape(const Matrix& o, const char* what) const {
        if (!same_shape(o)) throw ShapeMismatch(std::string(what) + ": shape mismatch");
    }

    size_t rows_;
    size_t cols_;
    std::vector<double> data_;
};

// Row-wise softmax with max subtraction for stability. Every row sums to 1.
inline void softmax_row(double* row, size_t n) {
    double mx = row[0];
    for (size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        row[i] = std::exp(row[i] - mx);
        sum += row[i];
    }
    for (size_t i = 0; i < n; ++i) row[i] /= sum;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
    std::vector<double> out = logits;
    softmax_row(out.data(), out.size());
    return out;
}

}  // namespace supertracy
