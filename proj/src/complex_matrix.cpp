#include "jscc/complex_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace jscc {

ComplexMatrix ComplexMatrix::identity(std::size_t n) {
    ComplexMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.re(i, i) = 1.0;
    return m;
}

ComplexMatrix ComplexMatrix::operator*(const ComplexMatrix& other) const {
    if (cols_ != other.rows_) {
        throw ShapeError("complex matmul: (" + std::to_string(rows_) + "x" +
                         std::to_string(cols_) + ") x (" + std::to_string(other.rows_) + "x" +
                         std::to_string(other.cols_) + ")");
    }
    ComplexMatrix out(rows_, other.cols_);
    const std::size_t n = other.cols_;
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t l = 0; l < cols_; ++l) {
            const double ar = re(i, l), ai = im(i, l);
            if (ar == 0.0 && ai == 0.0) continue;
            const double* br = other.re_.data() + l * n;
            const double* bi = other.im_.data() + l * n;
            double* cr = out.re_.data() + i * n;
            double* ci = out.im_.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                cr[j] += ar * br[j] - ai * bi[j];
                ci[j] += ar * bi[j] + ai * br[j];
            }
        }
    }
    return out;
}

ComplexMatrix ComplexMatrix::operator+(const ComplexMatrix& other) const {
    if (rows_ != other.rows_ || cols_ != other.cols_) {
        throw ShapeError("complex add: dimension mismatch");
    }
    ComplexMatrix out(rows_, cols_);
    for (std::size_t i = 0; i < re_.size(); ++i) {
        out.re_[i] = re_[i] + other.re_[i];
        out.im_[i] = im_[i] + other.im_[i];
    }
    return out;
}

ComplexMatrix ComplexMatrix::operator-(const ComplexMatrix& other) const {
    if (rows_ != other.rows_ || cols_ != other.cols_) {
        throw ShapeError("complex sub: dimension mismatch");
    }
    ComplexMatrix out(rows_, cols_);
    for (std::size_t i = 0; i < re_.size(); ++i) {
        out.re_[i] = re_[i] - other.re_[i];
        out.im_[i] = im_[i] - other.im_[i];
    }
    return out;
}

ComplexMatrix ComplexMatrix::scaled(double s) const {
    ComplexMatrix out(rows_, cols_);
    for (std::size_t i = 0; i < re_.size(); ++i) {
        out.re_[i] = re_[i] * s;
        out.im_[i] = im_[i] * s;
    }
    return out;
}

ComplexMatrix ComplexMatrix::hermitian() const {
    ComplexMatrix out(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t j = 0; j < cols_; ++j) {
            out.re(j, i) = re(i, j);
            out.im(j, i) = -im(i, j);
        }
    }
    return out;
}

double ComplexMatrix::frobenius_norm_sq() const {
    double s = 0.0;
    for (std::size_t i = 0; i < re_.size(); ++i) s += re_[i] * re_[i] + im_[i] * im_[i];
    return s;
}

double ComplexMatrix::frobenius_norm() const { return std::sqrt(frobenius_norm_sq()); }

bool ComplexMatrix::bitwise_equal(const ComplexMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && re_ == other.re_ && im_ == other.im_;
}

ComplexMatrix SvdTriple::sigma_matrix(std::size_t rows, std::size_t cols) const {
    ComplexMatrix m(rows, cols);
    const std::size_t k = std::min({rows, cols, s.size()});
    for (std::size_t i = 0; i < k; ++i) m.re(i, i) = s[i];
    return m;
}

ComplexMatrix sample_complex_gaussian(std::size_t rows, std::size_t cols, double variance,
                                      Rng& rng) {
    if (variance < 0.0) {
        throw DomainError("complex gaussian: variance must be nonnegative, got " +
                          std::to_string(variance));
    }
    ComplexMatrix m(rows, cols);
    if (variance == 0.0) return m;
    const double part_std = std::sqrt(variance / 2.0);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.re_data()[i] = rng.gaussian() * part_std;
        m.im_data()[i] = rng.gaussian() * part_std;
    }
    return m;
}

namespace {

// One-sided Jacobi on a tall-or-square matrix (rows >= cols). Orthogonalizes
// column pairs of the working copy W; accumulated rotations form V. At
// convergence W = U * diag(S).
struct JacobiResult {
    ComplexMatrix w;  // rows x cols, columns orthogonal
    ComplexMatrix v;  // cols x cols, unitary
};

JacobiResult one_sided_jacobi(const ComplexMatrix& a) {
    const std::size_t m = a.rows(), n = a.cols();
    JacobiResult r{a, ComplexMatrix::identity(n)};
    ComplexMatrix& w = r.w;
    ComplexMatrix& v = r.v;

    constexpr int kMaxSweeps = 64;
    constexpr double kTol = 1e-15;

    const double scale = a.frobenius_norm();
    if (scale == 0.0) return r;  // zero matrix: W = 0, V = I

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double max_off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                // Gram entries of the (p, q) column pair.
                double app = 0.0, aqq = 0.0, cr = 0.0, ci = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double pr = w.re(i, p), pi = w.im(i, p);
                    const double qr = w.re(i, q), qi = w.im(i, q);
                    app += pr * pr + pi * pi;
                    aqq += qr * qr + qi * qi;
                    cr += pr * qr + pi * qi;   // Re(w_p^H w_q)
                    ci += pr * qi - pi * qr;   // Im(w_p^H w_q)
                }
                const double cabs = std::hypot(cr, ci);
                const double denom = std::sqrt(app * aqq);
                if (denom > 0.0) max_off = std::max(max_off, cabs / denom);
                if (cabs <= kTol * denom || cabs == 0.0) continue;

                // Phase-align the q column so the pair Gram matrix becomes
                // real symmetric, then apply a real Givens rotation.
                const double phr = cr / cabs, phi = ci / cabs;  // e^{i psi}
                const double tau = (aqq - app) / (2.0 * cabs);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;

                auto rotate = [&](ComplexMatrix& mat, std::size_t rows) {
                    for (std::size_t i = 0; i < rows; ++i) {
                        const double pr = mat.re(i, p), pi2 = mat.im(i, p);
                        // q column pre-multiplied by e^{-i psi} so the pair
                        // Gram matrix is real
                        const double qr0 = mat.re(i, q), qi0 = mat.im(i, q);
                        const double qr = phr * qr0 + phi * qi0;
                        const double qi = phr * qi0 - phi * qr0;
                        mat.re(i, p) = cs * pr - sn * qr;
                        mat.im(i, p) = cs * pi2 - sn * qi;
                        mat.re(i, q) = sn * pr + cs * qr;
                        mat.im(i, q) = sn * pi2 + cs * qi;
                    }
                };
                rotate(w, m);
                rotate(v, n);
            }
        }
        if (max_off <= kTol) return r;
    }

    // Residual report: largest remaining normalized column correlation.
    double worst = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
            double app = 0.0, aqq = 0.0, cr = 0.0, ci = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                app += w.re(i, p) * w.re(i, p) + w.im(i, p) * w.im(i, p);
                aqq += w.re(i, q) * w.re(i, q) + w.im(i, q) * w.im(i, q);
                cr += w.re(i, p) * w.re(i, q) + w.im(i, p) * w.im(i, q);
                ci += w.re(i, p) * w.im(i, q) - w.im(i, p) * w.re(i, q);
            }
            if (app * aqq > 0.0) worst = std::max(worst, std::hypot(cr, ci) / std::sqrt(app * aqq));
        }
    }
    throw NumericError("svd: Jacobi sweeps did not converge; residual off-diagonal " +
                       std::to_string(worst));
}

SvdTriple svd_tall(const ComplexMatrix& h) {
    const std::size_t m = h.rows(), n = h.cols();
    JacobiResult jr = one_sided_jacobi(h);

    // Column norms are the singular values.
    std::vector<double> sig(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            s += jr.w.re(i, j) * jr.w.re(i, j) + jr.w.im(i, j) * jr.w.im(i, j);
        }
        sig[j] = std::sqrt(s);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sig[a] > sig[b]; });

    SvdTriple out;
    out.u = ComplexMatrix(m, m);
    out.v = ComplexMatrix(n, n);
    out.s.resize(n);

    const double smax = sig.empty() ? 0.0 : sig[order[0]];
    const double rank_tol = smax * 1e-13;

    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t j = order[jj];
        out.s[jj] = sig[j];
        for (std::size_t i = 0; i < n; ++i) {
            out.v.re(i, jj) = jr.v.re(i, j);
            out.v.im(i, jj) = jr.v.im(i, j);
        }
        if (sig[j] > rank_tol && sig[j] > 0.0) {
            const double inv = 1.0 / sig[j];
            for (std::size_t i = 0; i < m; ++i) {
                out.u.re(i, jj) = jr.w.re(i, j) * inv;
                out.u.im(i, jj) = jr.w.im(i, j) * inv;
            }
        }
    }

    // Complete U to a full unitary basis: fill rank-deficient and m > n
    // columns by Gram-Schmidt over the standard basis.
    auto col_norm_sq = [&](const ComplexMatrix& mat, std::size_t j) {
        double s = 0.0;
        for (std::size_t i = 0; i < mat.rows(); ++i) {
            s += mat.re(i, j) * mat.re(i, j) + mat.im(i, j) * mat.im(i, j);
        }
        return s;
    };
    std::size_t basis_cursor = 0;
    for (std::size_t j = 0; j < m; ++j) {
        if (j < n && col_norm_sq(out.u, j) > 0.25) continue;  // already filled
        // Try standard basis vectors until one survives orthogonalization.
        while (true) {
            if (basis_cursor >= m) {
                throw NumericError("svd: failed to complete unitary basis for U");
            }
            std::vector<double> cr(m, 0.0), ci(m, 0.0);
            cr[basis_cursor++] = 1.0;
            for (std::size_t k = 0; k < m; ++k) {
                if (k == j) continue;
                if (k < n && col_norm_sq(out.u, k) <= 0.25) continue;
                if (k >= n && k > j) continue;  // not yet filled
                // proj = u_k^H c
                double pr = 0.0, pi = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    pr += out.u.re(i, k) * cr[i] + out.u.im(i, k) * ci[i];
                    pi += out.u.re(i, k) * ci[i] - out.u.im(i, k) * cr[i];
                }
                for (std::size_t i = 0; i < m; ++i) {
                    cr[i] -= pr * out.u.re(i, k) - pi * out.u.im(i, k);
                    ci[i] -= pr * out.u.im(i, k) + pi * out.u.re(i, k);
                }
            }
            double nrm = 0.0;
            for (std::size_t i = 0; i < m; ++i) nrm += cr[i] * cr[i] + ci[i] * ci[i];
            nrm = std::sqrt(nrm);
            if (nrm > 1e-6) {
                for (std::size_t i = 0; i < m; ++i) {
                    out.u.re(i, j) = cr[i] / nrm;
                    out.u.im(i, j) = ci[i] / nrm;
                }
                break;
            }
        }
    }
    out.s.resize(std::min(m, n));
    return out;
}

void fix_phases(SvdTriple& t) {
    const std::size_t n = t.v.rows();
    const std::size_t m = t.u.rows();
    const std::size_t k = std::min(n, m);
    for (std::size_t j = 0; j < k; ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double mag = std::hypot(t.v.re(i, j), t.v.im(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (best <= 0.0) continue;
        // Multiply columns u_j and v_j by e^{-i angle} so v[arg, j] lands on
        // the positive real axis; u sigma v^H is unchanged.
        const double pr = t.v.re(arg, j) / best, pi = t.v.im(arg, j) / best;
        auto rotate_col = [&](ComplexMatrix& mat, std::size_t rows) {
            for (std::size_t i = 0; i < rows; ++i) {
                const double xr = mat.re(i, j), xi = mat.im(i, j);
                mat.re(i, j) = xr * pr + xi * pi;
                mat.im(i, j) = xi * pr - xr * pi;
            }
        };
        rotate_col(t.v, n);
        rotate_col(t.u, m);
    }
}

SvdTriple compute_svd(const ComplexMatrix& h) {
    for (double v : h.re_data()) {
        if (!std::isfinite(v)) throw DomainError("svd: matrix has non-finite entries");
    }
    for (double v : h.im_data()) {
        if (!std::isfinite(v)) throw DomainError("svd: matrix has non-finite entries");
    }
    SvdTriple out;
    if (h.rows() >= h.cols()) {
        out = svd_tall(h);
    } else {
        // svd(H^H) = (V, S, U) of H.
        SvdTriple t = svd_tall(h.hermitian());
        out.u = t.v;
        out.s = t.s;
        out.v = t.u;
    }
    fix_phases(out);
    return out;
}

}  // namespace

std::shared_ptr<const SvdTriple> svd(const ComplexMatrix& h) {
    if (!h.svd_cache_) {
        h.svd_cache_ = std::make_shared<const SvdTriple>(compute_svd(h));
    }
    return h.svd_cache_;
}

}  // namespace jscc
