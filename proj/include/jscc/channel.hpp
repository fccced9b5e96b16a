#pragma once

// Rayleigh MIMO channel machinery: sampling, estimation-error injection, SVD
// precoding / equalization, power normalization, and the real<->complex
// bridge that lets the autodiff engine differentiate through the channel.
// The channel itself is a constant linear map per realization; gradients flow
// to the transmitted features only.

#include <cstdint>

#include "jscc/complex_matrix.hpp"
#include "jscc/rng.hpp"
#include "jscc/tensor.hpp"

namespace jscc {

// One transmission's worth of channel state.
struct ChannelRealization {
    ComplexMatrix h_p;    // physical channel, n_rx x n_tx
    ComplexMatrix h_e;    // estimation error
    ComplexMatrix h_est;  // h_p + h_e (bitwise h_p when sigma_e_sq == 0)
    double sigma_e_sq = 0.0;
    double sigma_n_sq = 0.0;
    double snr_db = 0.0;
    std::uint64_t seed = 0;
};

// i.i.d. CN(0,1) entries.
ComplexMatrix sample_rayleigh(std::size_t n_rx, std::size_t n_tx, Rng& rng);

// H_est = H_p + H_e with H_e ~ CN(0, sigma_e_sq). sigma_e_sq == 0 copies H_p
// bitwise.
ChannelRealization inject_estimation_error(const ComplexMatrix& h_p, double sigma_e_sq,
                                           Rng& rng);

// Full realization from a single seed: independent sub-streams for H_p, H_e
// and the per-transmission noise, so e.g. forcing sigma_e_sq to zero does not
// shift the noise sequence.
ChannelRealization make_realization(std::size_t n_rx, std::size_t n_tx, double sigma_e_sq,
                                    double snr_db, std::uint64_t seed);

// Noise matrix for one transmission of the given realization; derived from
// realization.seed so paired conditions see identical noise.
ComplexMatrix realization_noise(const ChannelRealization& r, std::size_t d);

double snr_to_noise_var(double snr_db, double signal_power);

// z * sqrt(rows*cols) / ||z||_F: mean per-symbol power exactly 1.
ComplexMatrix power_normalize(const ComplexMatrix& z);

// z = V * z_c
ComplexMatrix precode(const ComplexMatrix& z_c, const ComplexMatrix& v);

// z_hat = H_p * z + N, N ~ CN(0, sigma_n_sq)
ComplexMatrix transmit(const ComplexMatrix& z, const ComplexMatrix& h_p, double sigma_n_sq,
                       Rng& rng);

// U_est^H * z_hat
ComplexMatrix equalize(const ComplexMatrix& z_hat, const ComplexMatrix& u_est);

// ---------------------------------------------------------------------------
// real <-> complex bridge and differentiable channel ops
// ---------------------------------------------------------------------------

// Bridge layout: an (n, 2d) real tensor holds an (n, d) complex matrix with
// real parts in the first d columns and imaginary parts in the last d.

template <typename S>
Tensor<S> bridge_from_complex(const ComplexMatrix& z, bool requires_grad = false) {
    const std::size_t n = z.rows(), d = z.cols();
    std::vector<S> data(n * 2 * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            data[i * 2 * d + j] = static_cast<S>(z.re(i, j));
            data[i * 2 * d + d + j] = static_cast<S>(z.im(i, j));
        }
    }
    return Tensor<S>::from_data({n, 2 * d}, std::move(data), requires_grad);
}

template <typename S>
ComplexMatrix bridge_to_complex(const Tensor<S>& x) {
    if (x.rank() != 2 || x.dim(1) % 2 != 0) {
        throw ShapeError("bridge: expected (n, 2d) tensor, got " + shape_str(x.shape()));
    }
    const std::size_t n = x.dim(0), d = x.dim(1) / 2;
    ComplexMatrix z(n, d);
    const S* p = x.values().data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            z.re(i, j) = static_cast<double>(p[i * 2 * d + j]);
            z.im(i, j) = static_cast<double>(p[i * 2 * d + d + j]);
        }
    }
    return z;
}

// Left-multiplication of a bridge tensor by a constant complex matrix:
// (P + iQ)(A + iB) = (PA - QB) + i(QA + PB). Composed from matmul/slice ops,
// so the adjoint (multiplication by M^H) falls out of the graph.
template <typename S>
Tensor<S> complex_left_multiply(const ComplexMatrix& m, const Tensor<S>& x) {
    if (x.rank() != 2 || x.dim(1) % 2 != 0) {
        throw ShapeError("complex_left_multiply: expected (n, 2d) bridge tensor, got " +
                         shape_str(x.shape()));
    }
    const std::size_t n = x.dim(0), d = x.dim(1) / 2;
    if (m.cols() != n) {
        throw ShapeError("complex_left_multiply: matrix (" + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ") vs signal rows " + std::to_string(n));
    }
    std::vector<S> pr(m.rows() * m.cols()), qi(m.rows() * m.cols());
    for (std::size_t i = 0; i < m.rows() * m.cols(); ++i) {
        pr[i] = static_cast<S>(m.re_data()[i]);
        qi[i] = static_cast<S>(m.im_data()[i]);
    }
    Tensor<S> p = Tensor<S>::from_data({m.rows(), m.cols()}, std::move(pr));
    Tensor<S> q = Tensor<S>::from_data({m.rows(), m.cols()}, std::move(qi));
    Tensor<S> a = slice_cols(x, 0, d);
    Tensor<S> b = slice_cols(x, d, 2 * d);
    Tensor<S> re = sub(matmul(p, a), matmul(q, b));
    Tensor<S> im = add(matmul(q, a), matmul(p, b));
    return concat_cols(re, im);
}

// Differentiable power normalization on a bridge tensor: the output carries
// exactly rows*cols complex symbols of unit mean power.
template <typename S>
Tensor<S> power_normalize_bridge(const Tensor<S>& x) {
    if (x.rank() != 2 || x.dim(1) % 2 != 0) {
        throw ShapeError("power_normalize: expected (n, 2d) bridge tensor, got " +
                         shape_str(x.shape()));
    }
    const double symbols = static_cast<double>(x.dim(0)) * (static_cast<double>(x.dim(1)) / 2.0);
    Tensor<S> energy = sum(mul(x, x));
    if (energy.item() <= S(0)) {
        throw DomainError("power_normalize: all-zero input is degenerate");
    }
    // scale = sqrt(symbols / energy)
    Tensor<S> s = sqrt(scale(exp(neg(log(energy))), symbols));
    return mul(x, s);
}

// z_hat = H_p * z + N with N constant (frozen noise). Differentiable in z.
template <typename S>
Tensor<S> transmit_bridge(const Tensor<S>& z, const ComplexMatrix& h_p,
                          const ComplexMatrix& noise) {
    Tensor<S> propagated = complex_left_multiply(h_p, z);
    return add(propagated, bridge_from_complex<S>(noise));
}

}  // namespace jscc
