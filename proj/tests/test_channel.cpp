#include <doctest.h>

#include <cmath>

#include "jscc/channel.hpp"
#include "jscc/complex_matrix.hpp"
#include "jscc/rng.hpp"
#include "jscc/tensor.hpp"

using namespace jscc;
using T = Tensor<double>;

namespace {

double reconstruction_residual(const ComplexMatrix& h, const SvdTriple& t) {
    ComplexMatrix rebuilt = t.u * t.sigma_matrix(h.rows(), h.cols()) * t.v.hermitian();
    return (rebuilt - h).frobenius_norm() / std::max(h.frobenius_norm(), 1e-300);
}

double unitarity_residual(const ComplexMatrix& u) {
    ComplexMatrix g = u.hermitian() * u;
    return (g - ComplexMatrix::identity(u.cols())).frobenius_norm();
}

}  // namespace

// ---------------------------------------------------------------------------
// SVD
// ---------------------------------------------------------------------------

TEST_CASE("svd of identity") {
    auto t = svd(ComplexMatrix::identity(2));
    CHECK(t->s.size() == 2);
    CHECK(t->s[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t->s[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd of diag(3,1) sorted descending") {
    ComplexMatrix h(2, 2);
    h.re(0, 0) = 3.0;
    h.re(1, 1) = 1.0;
    auto t = svd(h);
    CHECK(t->s[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(t->s[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd of [[0,2],[1,0]] reconstructs below 1e-10") {
    ComplexMatrix h(2, 2);
    h.re(0, 1) = 2.0;
    h.re(1, 0) = 1.0;
    auto t = svd(h);
    CHECK(t->s[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(t->s[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(reconstruction_residual(h, *t) < 1e-10);
}

TEST_CASE("svd invariants on random square and rectangular matrices") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        for (auto [m, n] : {std::pair<std::size_t, std::size_t>{16, 16}, {8, 16}, {16, 8}, {4, 4}}) {
            Rng rng(derive_seed(1000, "svd", seed, m, n));
            ComplexMatrix h = sample_rayleigh(m, n, rng);
            auto t = svd(h);
            CHECK(t->s.size() == std::min(m, n));
            for (std::size_t i = 0; i + 1 < t->s.size(); ++i) CHECK(t->s[i] >= t->s[i + 1]);
            for (double s : t->s) CHECK(s >= 0.0);
            CHECK(unitarity_residual(t->u) < 1e-10);
            CHECK(unitarity_residual(t->v) < 1e-10);
            CHECK(reconstruction_residual(h, *t) < 1e-10);
        }
    }
}

TEST_CASE("svd cache survives matrix copies") {
    Rng rng(4);
    ComplexMatrix h = sample_rayleigh(4, 4, rng);
    auto t1 = svd(h);
    ComplexMatrix copy = h;
    auto t2 = svd(copy);
    CHECK(t1.get() == t2.get());
}

TEST_CASE("svd phase convention is deterministic") {
    Rng rng(8);
    ComplexMatrix h = sample_rayleigh(4, 4, rng);
    const SvdTriple t1 = *svd(h);
    ComplexMatrix fresh = h;  // copy shares cache; rebuild to force recompute
    ComplexMatrix rebuilt(4, 4);
    rebuilt.re_data() = fresh.re_data();
    rebuilt.im_data() = fresh.im_data();
    const SvdTriple t2 = *svd(rebuilt);
    CHECK(t1.v.re_data() == t2.v.re_data());
    CHECK(t1.v.im_data() == t2.v.im_data());
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

TEST_CASE("rayleigh entries have unit mean power over 1e5 draws") {
    Rng rng(123);
    double power = 0.0, mean_re = 0.0;
    const int draws = 400;  // 400 * 256 = 102400 entries
    for (int k = 0; k < draws; ++k) {
        ComplexMatrix h = sample_rayleigh(16, 16, rng);
        for (std::size_t i = 0; i < h.size(); ++i) {
            power += h.re_data()[i] * h.re_data()[i] + h.im_data()[i] * h.im_data()[i];
            mean_re += h.re_data()[i];
        }
    }
    const double n = draws * 256.0;
    CHECK(std::fabs(power / n - 1.0) < 0.01);
    // 3 sigma band for the mean of n samples with per-part variance 1/2
    CHECK(std::fabs(mean_re / n) < 3.0 * std::sqrt(0.5 / n));
}

TEST_CASE("fixed seed reproduces the channel bitwise") {
    Rng a(55), b(55);
    ComplexMatrix ha = sample_rayleigh(8, 8, a);
    ComplexMatrix hb = sample_rayleigh(8, 8, b);
    CHECK(ha.bitwise_equal(hb));
}

TEST_CASE("estimation error statistics at sigma_e_sq = 0.05") {
    Rng rng(321);
    ComplexMatrix h = sample_rayleigh(16, 16, rng);
    double power = 0.0, re_var = 0.0, im_var = 0.0;
    const int draws = 400;
    for (int k = 0; k < draws; ++k) {
        ChannelRealization r = inject_estimation_error(h, 0.05, rng);
        for (std::size_t i = 0; i < r.h_e.size(); ++i) {
            const double er = r.h_e.re_data()[i], ei = r.h_e.im_data()[i];
            power += er * er + ei * ei;
            re_var += er * er;
            im_var += ei * ei;
        }
    }
    const double n = draws * 256.0;
    CHECK(std::fabs(power / n - 0.05) < 0.0005);
    CHECK(std::fabs(re_var / n - 0.025) < 0.0005);
    CHECK(std::fabs(im_var / n - 0.025) < 0.0005);
}

TEST_CASE("zero estimation error copies the channel bitwise") {
    Rng rng(11);
    ComplexMatrix h = sample_rayleigh(16, 16, rng);
    ChannelRealization r = inject_estimation_error(h, 0.0, rng);
    CHECK(r.h_est.bitwise_equal(h));
    CHECK(r.h_e.frobenius_norm() == 0.0);
}

TEST_CASE("negative variance is rejected") {
    Rng rng(1);
    ComplexMatrix h = sample_rayleigh(2, 2, rng);
    CHECK_THROWS_AS(inject_estimation_error(h, -0.1, rng), DomainError);
    ComplexMatrix z(2, 2);
    CHECK_THROWS_AS(transmit(z, h, -1.0, rng), DomainError);
}

// ---------------------------------------------------------------------------
// power normalization / precoding / equalization
// ---------------------------------------------------------------------------

TEST_CASE("power normalize keeps an already-unit-power input") {
    ComplexMatrix z(16, 16);
    for (std::size_t i = 0; i < z.size(); ++i) z.re_data()[i] = 1.0;
    ComplexMatrix out = power_normalize(z);
    for (std::size_t i = 0; i < z.size(); ++i) {
        CHECK(out.re_data()[i] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(out.im_data()[i] == doctest::Approx(0.0));
    }
}

TEST_CASE("power normalize is scale invariant") {
    Rng rng(77);
    ComplexMatrix z = sample_complex_gaussian(4, 8, 1.0, rng);
    ComplexMatrix a = power_normalize(z);
    ComplexMatrix b = power_normalize(z.scaled(7.0));
    CHECK((a - b).frobenius_norm() < 1e-12);
}

TEST_CASE("power normalize hits the exact symbol budget") {
    Rng rng(78);
    ComplexMatrix z = sample_complex_gaussian(16, 16, 2.7, rng);
    ComplexMatrix out = power_normalize(z);
    CHECK(std::fabs(out.frobenius_norm_sq() - 256.0) < 1e-9);
    ComplexMatrix zero(3, 3);
    CHECK_THROWS_AS(power_normalize(zero), DomainError);
}

TEST_CASE("precode with identity leaves the signal unchanged") {
    Rng rng(79);
    ComplexMatrix z = sample_complex_gaussian(4, 2, 1.0, rng);
    ComplexMatrix out = precode(z, ComplexMatrix::identity(4));
    CHECK((out - z).frobenius_norm() == 0.0);
}

TEST_CASE("precoding preserves norm and round-trips") {
    Rng rng(80);
    ComplexMatrix h = sample_rayleigh(8, 8, rng);
    auto t = svd(h);
    ComplexMatrix z = sample_complex_gaussian(8, 4, 1.0, rng);
    ComplexMatrix pre = precode(z, t->v);
    CHECK(std::fabs(pre.frobenius_norm() - z.frobenius_norm()) < 1e-9);
    ComplexMatrix back = t->v.hermitian() * pre;
    CHECK((back - z).frobenius_norm() < 1e-9);
}

TEST_CASE("noiseless identity channel is transparent") {
    Rng rng(81);
    ComplexMatrix z = sample_complex_gaussian(4, 4, 1.0, rng);
    ComplexMatrix out = transmit(z, ComplexMatrix::identity(4), 0.0, rng);
    CHECK((out - z).frobenius_norm() == 0.0);
}

TEST_CASE("zero signal exposes the noise power") {
    Rng rng(82);
    ComplexMatrix z(16, 64);
    const double sigma = 0.5;
    double power = 0.0;
    int total = 0;
    ComplexMatrix h = ComplexMatrix::identity(16);
    for (int k = 0; k < 100; ++k) {
        ComplexMatrix out = transmit(z, h, sigma, rng);
        power += out.frobenius_norm_sq();
        total += static_cast<int>(out.size());
    }
    CHECK(std::fabs(power / total - sigma) < 0.01 * sigma);
}

TEST_CASE("equalized noise keeps its power under a unitary") {
    Rng rng(83);
    ComplexMatrix h = sample_rayleigh(16, 16, rng);
    auto t = svd(h);
    const double sigma = 0.25;
    double power = 0.0;
    int total = 0;
    ComplexMatrix z(16, 16);
    for (int k = 0; k < 160; ++k) {
        ComplexMatrix out = equalize(transmit(z, h, sigma, rng), t->u);
        power += out.frobenius_norm_sq();
        total += static_cast<int>(out.size());
    }
    CHECK(std::fabs(power / total - sigma) < 0.01 * sigma);
}

TEST_CASE("perfect CSI zero-noise equalization equals diag(S) z_C") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(2000, "eq", seed));
        ComplexMatrix h = sample_rayleigh(16, 16, rng);
        ComplexMatrix z_c = sample_complex_gaussian(16, 8, 1.0, rng);
        auto t = svd(h);
        ComplexMatrix received = equalize(transmit(precode(z_c, t->v), h, 0.0, rng), t->u);
        ComplexMatrix expected = t->sigma_matrix(16, 16) * z_c;
        CHECK((received - expected).frobenius_norm() < 1e-8);
    }
}

TEST_CASE("imperfect CSI pipeline equals the composed effective map") {
    Rng zrng(99);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ChannelRealization r = make_realization(16, 16, 0.05, 10.0, derive_seed(3000, "eff", seed));
        auto est = svd(r.h_est);
        auto p = svd(r.h_p);
        ComplexMatrix z_c = sample_complex_gaussian(16, 4, 1.0, zrng);
        Rng noiseless(0);
        ComplexMatrix through =
            equalize(transmit(precode(z_c, est->v), r.h_p, 0.0, noiseless), est->u);
        // U_est^H U_p diag(S_p) V_p^H V_est z_C
        ComplexMatrix effective = est->u.hermitian() * p->u * p->sigma_matrix(16, 16) *
                                  p->v.hermitian() * est->v;
        CHECK((through - effective * z_c).frobenius_norm() < 1e-8);
    }
}

TEST_CASE("zero estimation error collapses the effective map to diag(S)") {
    ChannelRealization r = make_realization(16, 16, 0.0, 10.0, 42);
    auto est = svd(r.h_est);
    auto p = svd(r.h_p);
    ComplexMatrix effective =
        est->u.hermitian() * p->u * p->sigma_matrix(16, 16) * p->v.hermitian() * est->v;
    double off_mass = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
        for (std::size_t j = 0; j < 16; ++j) {
            if (i == j) continue;
            off_mass += effective.re(i, j) * effective.re(i, j) +
                        effective.im(i, j) * effective.im(i, j);
        }
    }
    CHECK(std::sqrt(off_mass) < 1e-8);
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(effective.re(i, i) == doctest::Approx(p->s[i]).epsilon(1e-10));
    }
}

// ---------------------------------------------------------------------------
// snr conversion
// ---------------------------------------------------------------------------

TEST_CASE("snr to noise variance") {
    CHECK(snr_to_noise_var(0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(snr_to_noise_var(10.0, 1.0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(snr_to_noise_var(-6.0, 1.0) == doctest::Approx(std::pow(10.0, 0.6)).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// real <-> complex bridge
// ---------------------------------------------------------------------------

TEST_CASE("bridge definition and round trip") {
    ComplexMatrix z(1, 1);
    z.set(0, 0, {1.0, 2.0});
    T b = bridge_from_complex<double>(z);
    CHECK(b.values() == std::vector<double>{1.0, 2.0});
    Rng rng(5);
    ComplexMatrix w = sample_complex_gaussian(4, 3, 1.0, rng);
    ComplexMatrix back = bridge_to_complex(bridge_from_complex<double>(w));
    CHECK(back.bitwise_equal(w));
}

TEST_CASE("bridge rejects odd widths") {
    T odd = T::zeros({2, 3});
    CHECK_THROWS_AS(bridge_to_complex(odd), ShapeError);
}

TEST_CASE("gradient of |z|^2 through the bridge") {
    Rng rng(6);
    T x = T::randn({4, 6}, rng);
    auto f = [](const std::vector<T>& in) { return sum(mul(in[0], in[0])); };
    CHECK(grad_check<double>(f, {x}).max_rel_err < 1e-5);
}

TEST_CASE("complex left multiply matches the complex-domain product") {
    Rng rng(7);
    ComplexMatrix m = sample_complex_gaussian(5, 4, 1.0, rng);
    ComplexMatrix z = sample_complex_gaussian(4, 3, 1.0, rng);
    T zt = bridge_from_complex<double>(z);
    ComplexMatrix via_tensor = bridge_to_complex(complex_left_multiply(m, zt));
    CHECK(((m * z) - via_tensor).frobenius_norm() < 1e-12);
}

TEST_CASE("transmit gradient with frozen noise") {
    ChannelRealization r = make_realization(4, 4, 0.02, 5.0, 17);
    ComplexMatrix noise = realization_noise(r, 3);
    Rng rng(33);
    T z = T::randn({4, 6}, rng);
    auto f = [&](const std::vector<T>& in) {
        T out = transmit_bridge(in[0], r.h_p, noise);
        return sum(mul(out, out));
    };
    CHECK(grad_check<double>(f, {z}).max_rel_err < 1e-5);
}

TEST_CASE("power normalize bridge gradient and budget") {
    Rng rng(34);
    T z = T::randn({4, 8}, rng);
    T out = power_normalize_bridge(z);
    double e = 0.0;
    for (double v : out.values()) e += v * v;
    CHECK(std::fabs(e - 16.0) < 1e-9);  // 4 antennas x 4 symbols
    // total power is scale invariant, so probe the gradient with a
    // functional that is not
    auto f = [](const std::vector<T>& in) {
        T o = power_normalize_bridge(in[0]);
        return sum(mul(o, scale(sigmoid(o), 1.3)));
    };
    CHECK(grad_check<double>(f, {z}).max_rel_err < 1e-4);
    T zero = T::zeros({2, 4});
    CHECK_THROWS_AS(power_normalize_bridge(zero), DomainError);
}

TEST_CASE("realizations are reproducible bitwise from their seed") {
    ChannelRealization a = make_realization(16, 16, 0.03, 7.0, 909);
    ChannelRealization b = make_realization(16, 16, 0.03, 7.0, 909);
    CHECK(a.h_p.bitwise_equal(b.h_p));
    CHECK(a.h_e.bitwise_equal(b.h_e));
    CHECK(a.h_est.bitwise_equal(b.h_est));
    CHECK(realization_noise(a, 8).bitwise_equal(realization_noise(b, 8)));
    // forcing sigma_e to zero leaves the noise stream untouched
    ChannelRealization c = make_realization(16, 16, 0.0, 7.0, 909);
    CHECK(c.h_p.bitwise_equal(a.h_p));
    CHECK(realization_noise(c, 8).bitwise_equal(realization_noise(a, 8)));
}
