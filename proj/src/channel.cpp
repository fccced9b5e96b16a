#include "jscc/channel.hpp"

#include <cmath>
#include <string>

namespace jscc {

ComplexMatrix sample_rayleigh(std::size_t n_rx, std::size_t n_tx, Rng& rng) {
    if (n_rx == 0 || n_tx == 0) throw DomainError("sample_rayleigh: dimensions must be positive");
    return sample_complex_gaussian(n_rx, n_tx, 1.0, rng);
}

ChannelRealization inject_estimation_error(const ComplexMatrix& h_p, double sigma_e_sq,
                                           Rng& rng) {
    if (sigma_e_sq < 0.0) {
        throw DomainError("inject_estimation_error: sigma_e_sq must be nonnegative, got " +
                          std::to_string(sigma_e_sq));
    }
    ChannelRealization r;
    r.h_p = h_p;
    r.sigma_e_sq = sigma_e_sq;
    if (sigma_e_sq == 0.0) {
        r.h_e = ComplexMatrix(h_p.rows(), h_p.cols());
        r.h_est = h_p;  // bitwise, shares the SVD cache
    } else {
        r.h_e = sample_complex_gaussian(h_p.rows(), h_p.cols(), sigma_e_sq, rng);
        r.h_est = h_p + r.h_e;
    }
    return r;
}

ChannelRealization make_realization(std::size_t n_rx, std::size_t n_tx, double sigma_e_sq,
                                    double snr_db, std::uint64_t seed) {
    Rng rng_hp(derive_seed(seed, "channel.h_p"));
    Rng rng_he(derive_seed(seed, "channel.h_e"));
    ComplexMatrix h_p = sample_rayleigh(n_rx, n_tx, rng_hp);
    ChannelRealization r = inject_estimation_error(h_p, sigma_e_sq, rng_he);
    r.snr_db = snr_db;
    r.sigma_n_sq = snr_to_noise_var(snr_db, 1.0);
    r.seed = seed;
    return r;
}

ComplexMatrix realization_noise(const ChannelRealization& r, std::size_t d) {
    Rng rng(derive_seed(r.seed, "channel.noise"));
    return sample_complex_gaussian(r.h_p.rows(), d, r.sigma_n_sq, rng);
}

double snr_to_noise_var(double snr_db, double signal_power) {
    if (signal_power <= 0.0) {
        throw DomainError("snr_to_noise_var: signal power must be positive");
    }
    return signal_power / std::pow(10.0, snr_db / 10.0);
}

ComplexMatrix power_normalize(const ComplexMatrix& z) {
    const double norm = z.frobenius_norm();
    if (norm == 0.0) throw DomainError("power_normalize: all-zero input is degenerate");
    const double target = std::sqrt(static_cast<double>(z.rows() * z.cols()));
    return z.scaled(target / norm);
}

ComplexMatrix precode(const ComplexMatrix& z_c, const ComplexMatrix& v) {
    return v * z_c;
}

ComplexMatrix transmit(const ComplexMatrix& z, const ComplexMatrix& h_p, double sigma_n_sq,
                       Rng& rng) {
    if (sigma_n_sq < 0.0) {
        throw DomainError("transmit: noise variance must be nonnegative, got " +
                          std::to_string(sigma_n_sq));
    }
    ComplexMatrix out = h_p * z;
    if (sigma_n_sq > 0.0) {
        out = out + sample_complex_gaussian(out.rows(), out.cols(), sigma_n_sq, rng);
    }
    return out;
}

ComplexMatrix equalize(const ComplexMatrix& z_hat, const ComplexMatrix& u_est) {
    return u_est.hermitian() * z_hat;
}

}  // namespace jscc
