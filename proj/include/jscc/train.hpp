#pragma once

// Two-stage training. Stage-I fine-tunes the channel codecs and adaptor with
// frozen semantic codecs under imperfect CSI; Stage-II distills from a
// perfect-CSI teacher with every parameter tunable. The baseline pretrain and
// the teacher run reuse the same step loop with different traits.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "jscc/dataset.hpp"
#include "jscc/losses.hpp"
#include "jscc/model.hpp"
#include "jscc/optim.hpp"

namespace jscc {

enum class Stage { kPretrain, kTeacher, kNaiveFinetune, kStage1, kStage2 };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::kPretrain: return "pretrain";
        case Stage::kTeacher: return "teacher";
        case Stage::kNaiveFinetune: return "naive_ft";
        case Stage::kStage1: return "stage1";
        case Stage::kStage2: return "stage2";
    }
    return "?";
}

inline Stage stage_from_string(const std::string& s) {
    for (Stage st : {Stage::kPretrain, Stage::kTeacher, Stage::kNaiveFinetune, Stage::kStage1,
                     Stage::kStage2}) {
        if (s == stage_name(st)) return st;
    }
    throw ConfigError("unknown stage '" + s + "'");
}

struct StageTraits {
    Variant variant;
    bool freeze_semantic;
    bool distill;
    bool perfect_csi;
    bool double_batch;
};

inline StageTraits stage_traits(Stage s) {
    switch (s) {
        case Stage::kPretrain: return {Variant::kNoAdaptor, false, false, false, false};
        case Stage::kTeacher: return {Variant::kHana, true, false, true, false};
        case Stage::kNaiveFinetune: return {Variant::kNoAdaptor, true, false, false, false};
        case Stage::kStage1: return {Variant::kHana, true, false, false, false};
        case Stage::kStage2: return {Variant::kHana, false, true, false, true};
    }
    throw ConfigError("unknown stage");
}

struct TrainConfig {
    Stage stage = Stage::kPretrain;
    std::vector<double> snr_set_db{1, 3, 5, 7, 9};
    double sigma_e_sq_low = 0.01;
    double sigma_e_sq_high = 0.1;
    double beta = 1.0;
    std::size_t batch_size = 32;  // Stage-II uses twice this
    std::size_t steps = 1000;
    double lr = 1e-3;
    double clip_norm = 1.0;
    bool kd_teacher_first = false;  // Eq-order ablation; default is student-first
    std::uint64_t seed = 0;

    void validate() const {
        if (beta < 0.0) throw ConfigError("beta must be nonnegative");
        if (sigma_e_sq_low < 0.0 || sigma_e_sq_high < sigma_e_sq_low) {
            throw ConfigError("sigma_e_sq range must satisfy 0 <= low <= high");
        }
        if (snr_set_db.empty()) throw ConfigError("snr_set_db must not be empty");
        if (batch_size == 0 || steps == 0) throw ConfigError("batch_size/steps must be positive");
    }
};

struct StepRecord {
    std::size_t step;
    double loss, l1, kl, lr;
};

struct TrainLog {
    std::string stage;
    std::uint64_t seed = 0;
    std::vector<StepRecord> records;

    double mean_loss(std::size_t from, std::size_t to) const {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t i = from; i < to && i < records.size(); ++i) {
            s += records[i].loss;
            ++n;
        }
        return n ? s / static_cast<double>(n) : 0.0;
    }
};

// Teacher-side realization: same physical channel, same noise stream, but the
// estimate is exact.
inline ChannelRealization perfect_csi_view(const ChannelRealization& r) {
    ChannelRealization t;
    t.h_p = r.h_p;
    t.h_e = ComplexMatrix(r.h_p.rows(), r.h_p.cols());
    t.h_est = r.h_p;  // copy shares the SVD cache with r.h_p
    t.sigma_e_sq = 0.0;
    t.sigma_n_sq = r.sigma_n_sq;
    t.snr_db = r.snr_db;
    t.seed = r.seed;
    return t;
}

template <typename S>
Tensor<S> image_tensor(const std::vector<double>& px, const ImageDims& d) {
    std::vector<S> data(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) data[i] = static_cast<S>(px[i]);
    return Tensor<S>::from_data({d.c, d.h, d.w}, std::move(data));
}

// One full stage. The teacher pointer is required (and only read) when the
// stage distills; it runs the same batch over the same physical channel and
// noise with perfect CSI. traits_override substitutes the stage's derived
// traits (used by the beta=0 equivalence test).
template <typename S>
TrainLog run_training(Model<S>& model, std::type_identity_t<const Model<S>*> teacher,
                      const TrainConfig& cfg, const DataSource& data,
                      std::ostream* log_out = nullptr,
                      const StageTraits* traits_override = nullptr) {
    cfg.validate();
    const StageTraits traits = traits_override ? *traits_override : stage_traits(cfg.stage);
    if (traits.distill && cfg.beta > 0.0 && teacher == nullptr) {
        throw ContractError("stage2 requires a teacher model");
    }
    const ModelConfig& mc = model.config();

    auto& store = model.store();
    store.unfreeze_all();
    if (traits.freeze_semantic) {
        store.set_group_frozen("semantic_enc", true);
        store.set_group_frozen("semantic_dec", true);
    }

    const std::size_t batch = traits.double_batch ? 2 * cfg.batch_size : cfg.batch_size;
    const bool use_teacher = traits.distill && cfg.beta > 0.0;

    Adam<S> opt;
    TrainLog log;
    log.stage = stage_name(cfg.stage);
    log.seed = cfg.seed;

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Rng rng_step(derive_seed(cfg.seed, "train.step", step));
        const double snr_db = cfg.snr_set_db[rng_step.below(cfg.snr_set_db.size())];
        const double sigma_e_sq =
            traits.perfect_csi ? 0.0 : rng_step.uniform(cfg.sigma_e_sq_low, cfg.sigma_e_sq_high);

        store.zero_grads();
        double loss_sum = 0.0, l1_sum = 0.0, kl_sum = 0.0;
        try {
            for (std::size_t item = 0; item < batch; ++item) {
                Rng rng_data(derive_seed(cfg.seed, "train.data", step, item));
                const std::uint64_t idx =
                    data.size() ? rng_data.below(data.size()) : rng_data.next_u64();
                Tensor<S> x = image_tensor<S>(data.image(idx), data.dims());

                ChannelRealization r =
                    make_realization(mc.n_rx, mc.n_tx, sigma_e_sq, snr_db,
                                     derive_seed(cfg.seed, "train.chan", step, item));
                ComplexMatrix noise = realization_noise(r, mc.d);

                auto out = model.forward(x, r, noise, traits.variant);
                LossParts<S> parts;
                if (use_teacher) {
                    ChannelRealization tr = perfect_csi_view(r);
                    auto tout = teacher->forward(x, tr, noise, Variant::kHana);
                    FeaturePair<S> student{out.z_c, out.z_s_hat};
                    FeaturePair<S> tfeat{tout.z_c.detach(), tout.z_s_hat.detach()};
                    parts = kd_loss(out.x_hat, x, student, tfeat, cfg.beta,
                                    cfg.kd_teacher_first);
                } else {
                    parts.total = l1_loss(out.x_hat, x);
                    parts.l1 = static_cast<double>(parts.total.item());
                    parts.kl = 0.0;
                }
                loss_sum += static_cast<double>(parts.total.item());
                l1_sum += parts.l1;
                kl_sum += parts.kl;
                backward(scale(parts.total, 1.0 / static_cast<double>(batch)));
            }
        } catch (const DomainError& e) {
            throw TrainingError("numeric failure at step " + std::to_string(step) +
                                " of stage " + log.stage + ": " + e.what());
        } catch (const NumericError& e) {
            throw TrainingError("numeric failure at step " + std::to_string(step) +
                                " of stage " + log.stage + ": " + e.what());
        }

        const double bs = static_cast<double>(batch);
        const StepRecord rec{step, loss_sum / bs, l1_sum / bs, kl_sum / bs,
                             cosine_lr(step, cfg.steps, cfg.lr)};
        if (!std::isfinite(rec.loss)) {
            throw TrainingError("non-finite loss at step " + std::to_string(step) + " of stage " +
                                log.stage);
        }
        opt.step(store, rec.lr, cfg.clip_norm);
        log.records.push_back(rec);
        if (log_out) {
            char line[192];
            std::snprintf(line, sizeof(line),
                          "step=%zu stage=%s loss=%.6f l1=%.6f kl=%.6f lr=%.8f seed=%llu",
                          step, log.stage.c_str(), rec.loss, rec.l1, rec.kl, rec.lr,
                          static_cast<unsigned long long>(cfg.seed));
            (*log_out) << line << '\n';
        }
    }
    return log;
}

}  // namespace jscc
