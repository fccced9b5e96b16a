#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "jscc/error.hpp"
#include "jscc/rng.hpp"

namespace jscc {

struct SvdTriple;

// Dense complex matrix, split re/im storage, row-major. Always double
// precision: channel algebra drives 1e-10-level invariants regardless of the
// network's training precision. Matrices are treated as immutable once built;
// svd() memoizes its result in a cache shared across copies.
class ComplexMatrix {
public:
    ComplexMatrix() : rows_(0), cols_(0) {}
    ComplexMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), re_(rows * cols, 0.0), im_(rows * cols, 0.0) {}

    static ComplexMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return re_.size(); }

    double& re(std::size_t i, std::size_t j) { return re_[i * cols_ + j]; }
    double& im(std::size_t i, std::size_t j) { return im_[i * cols_ + j]; }
    double re(std::size_t i, std::size_t j) const { return re_[i * cols_ + j]; }
    double im(std::size_t i, std::size_t j) const { return im_[i * cols_ + j]; }
    std::complex<double> at(std::size_t i, std::size_t j) const {
        return {re_[i * cols_ + j], im_[i * cols_ + j]};
    }
    void set(std::size_t i, std::size_t j, std::complex<double> v) {
        re_[i * cols_ + j] = v.real();
        im_[i * cols_ + j] = v.imag();
    }

    const std::vector<double>& re_data() const { return re_; }
    const std::vector<double>& im_data() const { return im_; }
    std::vector<double>& re_data() { return re_; }
    std::vector<double>& im_data() { return im_; }

    ComplexMatrix operator*(const ComplexMatrix& other) const;
    ComplexMatrix operator+(const ComplexMatrix& other) const;
    ComplexMatrix operator-(const ComplexMatrix& other) const;
    ComplexMatrix scaled(double s) const;
    ComplexMatrix hermitian() const;  // conjugate transpose

    double frobenius_norm_sq() const;
    double frobenius_norm() const;

    bool bitwise_equal(const ComplexMatrix& other) const;

    friend std::shared_ptr<const SvdTriple> svd(const ComplexMatrix& h);

private:
    std::size_t rows_, cols_;
    std::vector<double> re_, im_;
    mutable std::shared_ptr<const SvdTriple> svd_cache_;
};

// H = U * diag(S) * V^H with U (m x m), V (n x n) unitary and S descending,
// length min(m, n).
struct SvdTriple {
    ComplexMatrix u;
    std::vector<double> s;
    ComplexMatrix v;

    // diag(S) embedded as an m x n matrix.
    ComplexMatrix sigma_matrix(std::size_t rows, std::size_t cols) const;
};

// One-sided Jacobi SVD. Phase convention: the largest-magnitude entry of each
// column of V is rotated to be real positive (compensated in U), which makes
// decompositions comparable across runs. Throws NumericError with the
// remaining off-diagonal residual if the sweep cap is hit. The result is
// memoized on the matrix and shared by its copies; the returned pointer keeps
// it alive independently of the matrix.
std::shared_ptr<const SvdTriple> svd(const ComplexMatrix& h);

// i.i.d. CN(0, variance) entries: real and imaginary parts each Gaussian with
// variance/2.
ComplexMatrix sample_complex_gaussian(std::size_t rows, std::size_t cols, double variance,
                                      Rng& rng);

}  // namespace jscc
