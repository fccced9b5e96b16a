#include <doctest.h>

#include <cmath>
#include <vector>

#include "jscc/channel.hpp"
#include "jscc/model.hpp"
#include "jscc/rng.hpp"
#include "jscc/tensor.hpp"

using namespace jscc;
using T = Tensor<double>;

namespace {

ModelConfig mini_config() {
    ModelConfig cfg;
    cfg.n_tx = 4;
    cfg.n_rx = 4;
    cfg.d = 2;
    cfg.d_prime = 8;
    cfg.n_blocks = 2;
    cfg.heads = 2;
    cfg.c = 1;
    cfg.h = 8;
    cfg.w = 8;
    cfg.c_prime = 8;
    cfg.base_width = 4;
    cfg.snr_hidden = 4;
    return cfg;
}

T random_image(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    return T::uniform({cfg.c, cfg.h, cfg.w}, rng, 0.0, 1.0);
}

double bridge_power(const T& z) {
    double e = 0.0;
    for (double v : z.values()) e += v * v;
    return e / (static_cast<double>(z.dim(0)) * (static_cast<double>(z.dim(1)) / 2.0));
}

}  // namespace

TEST_CASE("config validation") {
    ModelConfig cfg = mini_config();
    cfg.d_prime = 6;  // not divisible by heads=2? it is; pick 7
    cfg.d_prime = 7;
    CHECK_THROWS_AS(Model<double>(cfg, 1), ConfigError);
    cfg = mini_config();
    cfg.h = 12;
    CHECK_THROWS_AS(Model<double>(cfg, 1), ConfigError);
    cfg = mini_config();
    cfg.compression_ratio = 1.0 / 8.0;  // n_tx*d = 8, c*h*w = 64 -> ok
    CHECK_NOTHROW(Model<double>(cfg, 1));
    cfg.compression_ratio = 1.0 / 12.0;
    CHECK_THROWS_AS(Model<double>(cfg, 1), ConfigError);
}

TEST_CASE("shape contracts across the antenna grid") {
    for (std::size_t n_tx : {4, 8, 16}) {
        for (std::size_t n_rx : {4, 8, 16}) {
            ModelConfig cfg = mini_config();
            cfg.n_tx = n_tx;
            cfg.n_rx = n_rx;
            Model<double> model(cfg, derive_seed(1, "grid", n_tx, n_rx));
            ChannelRealization r =
                make_realization(n_rx, n_tx, 0.05, 5.0, derive_seed(2, "grid", n_tx, n_rx));
            ComplexMatrix noise = realization_noise(r, cfg.d);
            T x = random_image(cfg, 3);
            auto out = model.forward(x, r, noise, Variant::kHana);
            CHECK(out.x_hat.shape() == Shape{cfg.c, cfg.h, cfg.w});
            CHECK(out.z_c.shape() == Shape{n_tx, 2 * cfg.d});
            CHECK(out.z_s.shape() == Shape{cfg.c_prime, cfg.h_prime(), cfg.w_prime()});
            CHECK(out.z_s_hat.shape() == Shape{cfg.c_prime, cfg.h_prime(), cfg.w_prime()});
            CHECK(bridge_power(out.z_c) == doctest::Approx(1.0).epsilon(1e-9));
            for (double v : out.x_hat.values()) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }
}

TEST_CASE("semantic encode validates range and reacts to snr") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 7, InitMode::kFullyRandom);
    T bad = T::full({cfg.c, cfg.h, cfg.w}, 1.5);
    CHECK_THROWS_AS(model.semantic_encode(bad, 5.0), DomainError);

    T x = random_image(cfg, 11);
    T a = model.semantic_encode(x, 1.0);
    T b = model.semantic_encode(x, 9.0);
    CHECK(a.shape() == Shape{cfg.c_prime, cfg.h_prime(), cfg.w_prime()});
    double diff = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        diff = std::max(diff, std::fabs(a.values()[i] - b.values()[i]));
    }
    CHECK(diff > 1e-8);  // modulation is active
}

TEST_CASE("semantic encoder gradient check") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 13, InitMode::kFullyRandom);
    Rng rng(5);
    T x = T::uniform({cfg.c, cfg.h, cfg.w}, rng, 0.05, 0.95);
    auto f = [&](const std::vector<T>& in) {
        T z = model.semantic_encode(in[0], 5.0);
        return mean(mul(z, z));
    };
    CHECK(grad_check<double>(f, {x}).max_rel_err < 1e-4);
}

TEST_CASE("snr modulation is the identity at standard init") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 17, InitMode::kStandard);
    Rng rng(6);
    T tokens = T::randn({cfg.h_prime() * cfg.w_prime(), cfg.c_prime}, rng);
    T out = model.snr_modulate(tokens, 3.0, Side::kTx);
    CHECK(out.shape() == tokens.shape());
    CHECK(out.values() == tokens.values());
}

TEST_CASE("snr modulation routes gradients to features and its parameters") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 19, InitMode::kFullyRandom);
    Rng rng(7);
    T tokens = T::randn({cfg.h_prime() * cfg.w_prime(), cfg.c_prime}, rng, 1.0, true);
    model.store().unfreeze_all();
    T out = model.snr_modulate(tokens, 7.0, Side::kRx);
    backward(mean(mul(out, out)));
    CHECK(tokens.has_grad());
    auto nonzero = [](const std::vector<double>& g) {
        for (double v : g) {
            if (v != 0.0) return true;
        }
        return false;
    };
    CHECK(nonzero(tokens.grad()));
    CHECK(nonzero(model.store().get("dec.snr.fc1.w").grad()));
    CHECK(nonzero(model.store().get("dec.snr.fc2.w").grad()));
}

TEST_CASE("channel encoder 1 shape and linearity probe") {
    ModelConfig cfg = mini_config();
    cfg.n_tx = 16;
    cfg.n_rx = 16;
    cfg.channel_activations = false;
    Model<double> model(cfg, 23);
    // zero the bias so the probe sees a purely linear map
    auto& bias = model.store().get("chenc1.b").mutable_values();
    std::fill(bias.begin(), bias.end(), 0.0);

    Rng rng(8);
    T z_s = T::randn({cfg.c_prime, cfg.h_prime(), cfg.w_prime()}, rng);
    T t1 = model.channel_encode_1(z_s);
    CHECK(t1.shape() == Shape{16, cfg.d_prime});
    T t2 = model.channel_encode_1(scale(z_s, 2.0).detach());
    for (std::size_t i = 0; i < t1.numel(); ++i) {
        CHECK(t2.values()[i] == doctest::Approx(2.0 * t1.values()[i]).epsilon(1e-12));
    }
}

TEST_CASE("csi token basics") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 29);  // standard init: csi bias is zero
    ComplexMatrix zero(cfg.n_rx, cfg.n_tx);
    T tok = model.csi_tokenize(zero, Side::kTx);
    CHECK(tok.shape() == Shape{1, cfg.d_prime});
    for (double v : tok.values()) CHECK(v == 0.0);

    // width stays d' across antenna counts
    ModelConfig wide = mini_config();
    wide.n_tx = 8;
    wide.n_rx = 16;
    Model<double> big(wide, 31);
    ComplexMatrix z2(16, 8);
    CHECK(big.csi_tokenize(z2, Side::kRx).shape() == Shape{1, wide.d_prime});

    // token reacts to the estimation error
    ChannelRealization r = make_realization(cfg.n_rx, cfg.n_tx, 0.1, 5.0, 77);
    T tp = model.csi_tokenize(r.h_p, Side::kTx);
    T te = model.csi_tokenize(r.h_est, Side::kTx);
    double diff = 0.0;
    for (std::size_t i = 0; i < tp.numel(); ++i) {
        diff = std::max(diff, std::fabs(tp.values()[i] - te.values()[i]));
    }
    CHECK(diff > 1e-12);
}

TEST_CASE("adaptor is the identity at standard init and keeps shape") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 37, InitMode::kStandard);
    ChannelRealization r = make_realization(cfg.n_rx, cfg.n_tx, 0.05, 5.0, 41);
    Rng rng(9);
    T tokens = T::randn({cfg.n_tx, cfg.d_prime}, rng);
    T out = model.cma_apply(tokens, r.h_est, Side::kTx);
    CHECK(out.shape() == tokens.shape());
    CHECK(out.values() == tokens.values());

    T wrong = T::randn({cfg.n_tx + 1, cfg.d_prime}, rng);
    CHECK_THROWS_AS(model.cma_apply(wrong, r.h_est, Side::kTx), ShapeError);
}

TEST_CASE("adaptor gradient check through 6 blocks at d'=16, n=4") {
    ModelConfig cfg = mini_config();
    cfg.d_prime = 16;
    cfg.n_blocks = 6;
    Model<double> model(cfg, 43, InitMode::kFullyRandom);
    ChannelRealization r = make_realization(cfg.n_rx, cfg.n_tx, 0.05, 5.0, 47);
    Rng rng(10);
    T tokens = T::randn({cfg.n_tx, cfg.d_prime}, rng);
    auto f = [&](const std::vector<T>& in) {
        T out = model.cma_apply(in[0], r.h_est, Side::kRx);
        return mean(mul(out, out));
    };
    CHECK(grad_check<double>(f, {tokens}).max_rel_err < 1e-4);
}

TEST_CASE("channel encoder 2 normalizes power") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 53);
    Rng rng(11);
    T t = T::randn({cfg.n_tx, cfg.d_prime}, rng);
    T z = model.channel_encode_2(t);
    CHECK(z.shape() == Shape{cfg.n_tx, 2 * cfg.d});
    CHECK(bridge_power(z) == doctest::Approx(1.0).epsilon(1e-9));

    auto f = [&](const std::vector<T>& in) {
        T out = model.channel_encode_2(in[0]);
        return sum(mul(out, scale(sigmoid(out), 0.7)));
    };
    CHECK(grad_check<double>(f, {t}).max_rel_err < 1e-4);
}

TEST_CASE("channel decode shapes for both variants") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 59);
    ChannelRealization r = make_realization(cfg.n_rx, cfg.n_tx, 0.05, 5.0, 61);
    Rng rng(12);
    T z_hat = T::randn({cfg.n_rx, 2 * cfg.d}, rng);
    for (Variant v : {Variant::kHana, Variant::kNoAdaptor}) {
        T out = model.channel_decode(z_hat, r.h_est, v);
        CHECK(out.shape() == Shape{cfg.c_prime, cfg.h_prime(), cfg.w_prime()});
    }
}

TEST_CASE("channel decode gradient check") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 67, InitMode::kFullyRandom);
    ChannelRealization r = make_realization(cfg.n_rx, cfg.n_tx, 0.05, 5.0, 71);
    Rng rng(13);
    T z_hat = T::randn({cfg.n_rx, 2 * cfg.d}, rng);
    auto f = [&](const std::vector<T>& in) {
        T out = model.channel_decode(in[0], r.h_est, Variant::kHana);
        return mean(mul(out, out));
    };
    CHECK(grad_check<double>(f, {z_hat}).max_rel_err < 1e-4);
}

TEST_CASE("semantic decode clamps to [0,1]") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 73, InitMode::kFullyRandom);
    Rng rng(14);
    T z = T::randn({cfg.c_prime, cfg.h_prime(), cfg.w_prime()}, rng, 3.0);
    T x = model.semantic_decode(z, 5.0);
    CHECK(x.shape() == Shape{cfg.c, cfg.h, cfg.w});
    for (double v : x.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    auto f = [&](const std::vector<T>& in) {
        T out = model.semantic_decode(in[0], 5.0);
        return mean(mul(out, out));
    };
    CHECK(grad_check<double>(f, {scale(z, 0.1).detach()}).max_rel_err < 1e-4);
}

TEST_CASE("standard-init HANA forward equals NO_ADAPTOR forward exactly") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 79, InitMode::kStandard);
    ChannelRealization r = make_realization(cfg.n_rx, cfg.n_tx, 0.0, 20.0, 83);
    r.sigma_n_sq = 0.0;  // zero-noise variant of the realization
    ComplexMatrix silent(cfg.n_rx, cfg.d);
    T x = random_image(cfg, 15);
    auto hana = model.forward(x, r, silent, Variant::kHana);
    auto plain = model.forward(x, r, silent, Variant::kNoAdaptor);
    CHECK(hana.x_hat.values() == plain.x_hat.values());
    CHECK(hana.z_c.values() == plain.z_c.values());
}

TEST_CASE("noise level changes the reconstruction") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 89, InitMode::kFullyRandom);
    ChannelRealization r = make_realization(cfg.n_rx, cfg.n_tx, 0.05, 0.0, 97);
    ComplexMatrix noise = realization_noise(r, cfg.d);
    T x = random_image(cfg, 16);
    auto noisy = model.forward(x, r, noise, Variant::kHana);

    ChannelRealization quiet = r;
    quiet.sigma_n_sq = 0.0;
    ComplexMatrix silent(cfg.n_rx, cfg.d);
    auto clean = model.forward(x, quiet, silent, Variant::kHana);
    double diff = 0.0;
    for (std::size_t i = 0; i < noisy.x_hat.numel(); ++i) {
        diff = std::max(diff, std::fabs(noisy.x_hat.values()[i] - clean.x_hat.values()[i]));
    }
    CHECK(diff > 1e-12);
}

TEST_CASE("full forward-backward matches finite differences on every parameter") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 101, InitMode::kFullyRandom);
    ChannelRealization r = make_realization(cfg.n_rx, cfg.n_tx, 0.05, 5.0, 103);
    ComplexMatrix noise = realization_noise(r, cfg.d);
    T x = random_image(cfg, 17);
    T target = random_image(cfg, 18);

    // grad_check drives the store parameters directly as inputs
    std::vector<T> params;
    for (const auto& e : model.store().entries()) params.push_back(e.tensor);
    auto f = [&](const std::vector<T>&) {
        auto out = model.forward(x, r, noise, Variant::kHana);
        return mean(abs(sub(out.x_hat, target)));
    };
    auto rep = grad_check<double>(f, params, 1e-6);
    INFO("worst parameter: " << model.store().entries()[rep.worst_input].name
                             << " idx " << rep.worst_index << " analytic " << rep.analytic
                             << " numeric " << rep.numeric);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("no dead parameters under the HANA variant") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 107, InitMode::kFullyRandom);
    model.store().unfreeze_all();
    // snr != 5 so the modulation nets see a nonzero input
    for (int item = 0; item < 2; ++item) {
        ChannelRealization r =
            make_realization(cfg.n_rx, cfg.n_tx, 0.05, 7.0, derive_seed(109, "dead", item));
        ComplexMatrix noise = realization_noise(r, cfg.d);
        T x = random_image(cfg, 200 + item);
        T target = random_image(cfg, 300 + item);
        auto out = model.forward(x, r, noise, Variant::kHana);
        backward(mean(abs(sub(out.x_hat, target))));
    }
    for (const auto& e : model.store().entries()) {
        bool any = false;
        REQUIRE(e.tensor.has_grad());
        for (double g : e.tensor.grad()) {
            if (g != 0.0) {
                any = true;
                break;
            }
        }
        INFO("parameter " << e.name);
        CHECK(any);
    }
}

TEST_CASE("parameter store freeze bookkeeping") {
    ModelConfig cfg = mini_config();
    Model<double> model(cfg, 113);
    auto& store = model.store();
    CHECK_THROWS_AS(store.create("chenc1.w", "channel_enc", T::zeros({1})), ConfigError);
    store.set_group_frozen("semantic_enc", true);
    CHECK(store.group_frozen("semantic_enc"));
    CHECK_FALSE(store.get("enc.patch.w").requires_grad());
    CHECK(store.get("chenc1.w").requires_grad() == false);  // nothing unfrozen yet
    store.unfreeze_all();
    CHECK(store.get("enc.patch.w").requires_grad());
}
