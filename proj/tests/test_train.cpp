#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "jscc/dataset.hpp"
#include "jscc/losses.hpp"
#include "jscc/model.hpp"
#include "jscc/optim.hpp"
#include "jscc/train.hpp"

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

TrainConfig smoke_config(Stage stage, std::size_t steps, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.stage = stage;
    cfg.steps = steps;
    cfg.batch_size = 4;
    cfg.seed = seed;
    return cfg;
}

std::vector<double> snapshot_group(const ParameterStore<double>& store,
                                   const std::string& group) {
    std::vector<double> out;
    for (const auto& e : store.entries()) {
        if (e.group != group) continue;
        out.insert(out.end(), e.tensor.values().begin(), e.tensor.values().end());
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

TEST_CASE("l1 loss basics") {
    Rng rng(1);
    T x = T::uniform({2, 3}, rng, 0.0, 1.0);
    CHECK(l1_loss(x, x).item() == 0.0);
    T shifted = add(x, T::full({2, 3}, 0.5)).detach();
    CHECK(l1_loss(shifted, x).item() == doctest::Approx(0.5).epsilon(1e-12));
    T wrong = T::zeros({3, 2});
    CHECK_THROWS_AS(l1_loss(x, wrong), ShapeError);
}

TEST_CASE("l1 gradient is sign/count away from zeros") {
    T x_hat = T::from_data({4}, {0.9, 0.1, 0.7, 0.2}, true);
    T x = T::from_data({4}, {0.5, 0.5, 0.5, 0.5});
    backward(l1_loss(x_hat, x));
    const std::vector<double> expect{0.25, -0.25, 0.25, -0.25};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(x_hat.grad()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
    auto f = [&x](const std::vector<T>& in) { return l1_loss(in[0], x); };
    T probe = T::from_data({4}, {0.9, 0.1, 0.7, 0.2});
    CHECK(grad_check<double>(f, {probe}).max_rel_err < 1e-5);
}

TEST_CASE("kd loss with identical features equals the l1 component") {
    Rng rng(2);
    T x = T::uniform({2, 4}, rng, 0.0, 1.0);
    T x_hat = T::uniform({2, 4}, rng, 0.0, 1.0);
    FeaturePair<double> feats{T::randn({4, 4}, rng), T::randn({2, 2, 2}, rng)};
    auto parts = kd_loss(x_hat, x, feats, feats, 1.0);
    CHECK(std::fabs(parts.kl) < 1e-12);
    CHECK(parts.total.item() == doctest::Approx(l1_loss(x_hat, x).item()).epsilon(1e-15));
}

TEST_CASE("kd loss with beta=0 is the l1 loss") {
    Rng rng(3);
    T x = T::uniform({2, 4}, rng, 0.0, 1.0);
    T x_hat = T::uniform({2, 4}, rng, 0.0, 1.0);
    FeaturePair<double> st{T::randn({4, 4}, rng), T::randn({8}, rng)};
    FeaturePair<double> tc{T::randn({4, 4}, rng), T::randn({8}, rng)};
    auto parts = kd_loss(x_hat, x, st, tc, 0.0);
    CHECK(parts.kl == 0.0);
    CHECK(parts.total.item() == l1_loss(x_hat, x).item());
}

TEST_CASE("kl term against direct evaluation on a 2-element feature") {
    // softmax([1,2]) vs softmax([2,1]) share the same log-sum-exp, so
    // KL = p2 - p1 evaluated directly.
    const double p1 = std::exp(1.0) / (std::exp(1.0) + std::exp(2.0));
    const double p2 = 1.0 - p1;
    const double expected = p1 * std::log(p1 / p2) + p2 * std::log(p2 / p1);
    T st = T::from_data({2}, {1.0, 2.0});
    T tc = T::from_data({2}, {2.0, 1.0});
    CHECK(kl_softmax(st, tc).item() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(kl_softmax(st, tc).item() == doctest::Approx(p2 - p1).epsilon(1e-12));
}

TEST_CASE("kl operand order follows the configured direction") {
    Rng rng(4);
    T x = T::uniform({2, 2}, rng, 0.0, 1.0);
    FeaturePair<double> st{T::from_data({2}, {1.0, 3.0}), T::from_data({2}, {0.5, 0.25})};
    FeaturePair<double> tc{T::from_data({2}, {3.0, 1.0}), T::from_data({2}, {0.25, 0.5})};
    auto student_first = kd_loss(x, x, st, tc, 1.0, false);
    auto teacher_first = kd_loss(x, x, st, tc, 1.0, true);
    const double kl_st = kl_softmax(st.z_c, tc.z_c).item() +
                         kl_softmax(st.z_s_hat, tc.z_s_hat).item();
    const double kl_tc = kl_softmax(tc.z_c, st.z_c).item() +
                         kl_softmax(tc.z_s_hat, st.z_s_hat).item();
    CHECK(student_first.kl == doctest::Approx(kl_st).epsilon(1e-12));
    CHECK(teacher_first.kl == doctest::Approx(kl_tc).epsilon(1e-12));
}

TEST_CASE("kd loss gradients flow through the student only") {
    Rng rng(5);
    T x = T::uniform({2, 2}, rng, 0.0, 1.0);
    T x_hat = T::uniform({2, 2}, rng, 0.0, 1.0);
    x_hat.set_requires_grad(true);
    FeaturePair<double> st{T::randn({6}, rng, 1.0, true), T::randn({6}, rng, 1.0, true)};
    FeaturePair<double> tc{T::randn({6}, rng), T::randn({6}, rng)};
    auto parts = kd_loss(x_hat, x, st, tc, 2.0);
    backward(parts.total);
    CHECK(st.z_c.has_grad());
    CHECK(st.z_s_hat.has_grad());
    CHECK_FALSE(tc.z_c.has_grad());
    CHECK_FALSE(tc.z_s_hat.has_grad());

    auto f = [&](const std::vector<T>& in) {
        FeaturePair<double> s2{in[0], in[1]};
        return kd_loss(in[2], x, s2, tc, 2.0).total;
    };
    CHECK(grad_check<double>(f, {st.z_c.detach(), st.z_s_hat.detach(), x_hat.detach()})
              .max_rel_err < 1e-4);
}

// ---------------------------------------------------------------------------
// schedule and optimizer
// ---------------------------------------------------------------------------

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(0, 100, 1e-3) == doctest::Approx(1e-3).epsilon(1e-15));
    CHECK(cosine_lr(100, 100, 1e-3) == doctest::Approx(0.0));
    CHECK(cosine_lr(50, 100, 1e-3) == doctest::Approx(5e-4).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_lr(101, 100, 1e-3), ContractError);
}

TEST_CASE("adam first step moves by almost exactly lr against the gradient sign") {
    ParameterStore<double> store;
    Rng rng(6);
    T p = store.create("p", "g", T::randn({8}, rng));
    store.set_group_frozen("g", false);
    const std::vector<double> before = p.values();
    backward(sum(mul(p, T::from_data({8}, {3, -2, 1, -1, 0.5, -0.5, 4, -4}))));
    Adam<double> opt;
    opt.step(store, 1e-3, 0.0);
    for (std::size_t i = 0; i < 8; ++i) {
        const double g = std::vector<double>{3, -2, 1, -1, 0.5, -0.5, 4, -4}[i];
        const double expected = before[i] - 1e-3 * g / (std::fabs(g) + 1e-8);
        CHECK(p.values()[i] == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("adam leaves zero-gradient and frozen parameters unchanged") {
    ParameterStore<double> store;
    Rng rng(7);
    T live = store.create("live", "warm", T::randn({4}, rng));
    T frozen = store.create("ice", "cold", T::randn({4}, rng));
    store.set_group_frozen("warm", false);
    store.set_group_frozen("cold", true);

    // zero gradient on the live parameter
    backward(sum(mul(live, T::zeros({4}))));
    // a would-be gradient on the frozen one (graph built before freezing)
    store.set_group_frozen("cold", false);
    backward(sum(frozen));
    store.set_group_frozen("cold", true);

    const auto live_before = live.values();
    const auto ice_before = frozen.values();
    Adam<double> opt;
    opt.step(store, 1e-2, 0.0);
    CHECK(live.values() == live_before);
    CHECK(frozen.values() == ice_before);
}

// ---------------------------------------------------------------------------
// training stages
// ---------------------------------------------------------------------------

TEST_CASE("stage1 freezes the semantic codecs and moves the adaptor") {
    ModelConfig mc = mini_config();
    Model<double> model(mc, 11);
    ProceduralSource data({mc.c, mc.h, mc.w}, 21);

    const auto enc_before = snapshot_group(model.store(), "semantic_enc");
    const auto dec_before = snapshot_group(model.store(), "semantic_dec");
    const auto adaptor_before = snapshot_group(model.store(), "adaptor_tx");
    const auto chenc_before = snapshot_group(model.store(), "channel_enc");

    run_training(model, nullptr, smoke_config(Stage::kStage1, 3, 31), data);

    CHECK(snapshot_group(model.store(), "semantic_enc") == enc_before);
    CHECK(snapshot_group(model.store(), "semantic_dec") == dec_before);
    CHECK(snapshot_group(model.store(), "adaptor_tx") != adaptor_before);
    CHECK(snapshot_group(model.store(), "channel_enc") != chenc_before);
}

TEST_CASE("pretrain is deterministic given the seed") {
    ModelConfig mc = mini_config();
    ProceduralSource data({mc.c, mc.h, mc.w}, 22);
    Model<double> a(mc, 12);
    Model<double> b(mc, 12);
    run_training(a, nullptr, smoke_config(Stage::kPretrain, 5, 33), data);
    run_training(b, nullptr, smoke_config(Stage::kPretrain, 5, 33), data);
    CHECK(a.store().bitwise_equal(b.store()));
}

TEST_CASE("pretrained parameters transfer into a fresh student without conflicts") {
    ModelConfig mc = mini_config();
    ProceduralSource data({mc.c, mc.h, mc.w}, 23);
    Model<double> donor(mc, 13);
    run_training(donor, nullptr, smoke_config(Stage::kPretrain, 3, 35), data);
    Model<double> student(mc, 14);
    CHECK_NOTHROW(student.store().copy_all_from(donor.store()));
    CHECK(student.store().bitwise_equal(donor.store()));
}

TEST_CASE("training loss decreases over a 500-step smoke run") {
    ModelConfig mc = mini_config();
    Model<double> model(mc, 15);
    ProceduralSource data({mc.c, mc.h, mc.w}, 24);
    TrainConfig cfg = smoke_config(Stage::kPretrain, 500, 37);
    cfg.batch_size = 4;
    TrainLog log = run_training(model, nullptr, cfg, data);
    const double early = log.mean_loss(0, 50);
    const double late = log.mean_loss(450, 500);
    INFO("early " << early << " late " << late);
    CHECK(late < 0.9 * early);
}

TEST_CASE("stage2 leaves the teacher untouched and moves the student") {
    ModelConfig mc = mini_config();
    ProceduralSource data({mc.c, mc.h, mc.w}, 25);

    Model<double> teacher(mc, 16);
    run_training(teacher, nullptr, smoke_config(Stage::kTeacher, 3, 41), data);
    teacher.store().freeze_all();
    Model<double> snapshot(mc, 16);
    snapshot.store().copy_all_from(teacher.store());

    Model<double> student(mc, 17);
    TrainLog log = run_training(student, &teacher, smoke_config(Stage::kStage2, 4, 43), data);

    CHECK(teacher.store().bitwise_equal(snapshot.store()));
    CHECK_FALSE(student.store().bitwise_equal(teacher.store()));
    for (const auto& rec : log.records) CHECK(std::isfinite(rec.kl));
}

TEST_CASE("stage2 with beta=0 runs exactly like unfrozen stage1 training") {
    ModelConfig mc = mini_config();
    ProceduralSource data({mc.c, mc.h, mc.w}, 26);

    Model<double> a(mc, 18);
    Model<double> b(mc, 18);

    TrainConfig cfg2 = smoke_config(Stage::kStage2, 4, 47);
    cfg2.beta = 0.0;
    TrainLog la = run_training(a, nullptr, cfg2, data);

    // unfrozen stage-1 traits with the doubled batch, same seed
    StageTraits traits{Variant::kHana, false, false, false, true};
    TrainConfig cfg1 = smoke_config(Stage::kStage1, 4, 47);
    TrainLog lb = run_training(b, nullptr, cfg1, data, nullptr, &traits);

    REQUIRE(la.records.size() == lb.records.size());
    for (std::size_t i = 0; i < la.records.size(); ++i) {
        CHECK(la.records[i].loss == lb.records[i].loss);
    }
    CHECK(a.store().bitwise_equal(b.store()));
}

TEST_CASE("teacher model trains with perfect csi") {
    ModelConfig mc = mini_config();
    ProceduralSource data({mc.c, mc.h, mc.w}, 27);
    Model<double> teacher(mc, 19);
    TrainLog log = run_training(teacher, nullptr, smoke_config(Stage::kTeacher, 3, 49), data);
    CHECK(log.records.size() == 3);
    // freeze contract for downstream use
    teacher.store().freeze_all();
    for (const auto& e : teacher.store().entries()) {
        CHECK_FALSE(e.tensor.requires_grad());
    }
}

TEST_CASE("non-finite loss raises a training error naming the step") {
    ModelConfig mc = mini_config();
    Model<double> model(mc, 20);
    auto& w = model.store().get("chenc1.w").mutable_values();
    w[0] = std::numeric_limits<double>::quiet_NaN();
    ProceduralSource data({mc.c, mc.h, mc.w}, 28);
    try {
        run_training(model, nullptr, smoke_config(Stage::kPretrain, 2, 51), data);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    }
}

TEST_CASE("training log lines are machine parseable") {
    ModelConfig mc = mini_config();
    Model<double> model(mc, 21);
    ProceduralSource data({mc.c, mc.h, mc.w}, 29);
    std::ostringstream out;
    run_training(model, nullptr, smoke_config(Stage::kStage1, 2, 53), data, &out);
    std::istringstream in(out.str());
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        CHECK(line.find("step=") == 0);
        CHECK(line.find("stage=stage1") != std::string::npos);
        CHECK(line.find("loss=") != std::string::npos);
        CHECK(line.find("l1=") != std::string::npos);
        CHECK(line.find("kl=") != std::string::npos);
        CHECK(line.find("lr=") != std::string::npos);
        CHECK(line.find("seed=53") != std::string::npos);
        ++lines;
    }
    CHECK(lines == 2);
}
