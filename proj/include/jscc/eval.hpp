#pragma once

// Evaluation conditions and paired grid sweeps. Every condition sees the
// identical image set and identical (H_p, H_e, N) realizations: realization
// seeds derive from (master seed, cell coordinates, item) only, never from
// the condition.

#include <cmath>
#include <ctime>
#include <memory>
#include <string>
#include <vector>

#include "jscc/config.hpp"
#include "jscc/dataset.hpp"
#include "jscc/model.hpp"
#include "jscc/parallel.hpp"
#include "jscc/report.hpp"
#include "jscc/train.hpp"

namespace jscc {

// 10 log10(MAX^2 / MSE) with MAX = 1; zero MSE capped at 100 dB.
template <typename S>
double psnr(const Tensor<S>& x, const Tensor<S>& x_hat) {
    if (x.shape() != x_hat.shape()) {
        throw ShapeError("psnr: shapes " + shape_str(x.shape()) + " and " +
                         shape_str(x_hat.shape()) + " differ");
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double d = static_cast<double>(x.values()[i]) -
                         static_cast<double>(x_hat.values()[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(x.numel());
    if (mse <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

// How a named condition drives the model: which checkpointed weights, which
// architecture path, and whether the estimate is forced perfect at eval time.
template <typename S>
struct ConditionSpec {
    std::string name;
    const Model<S>* model = nullptr;
    Variant variant = Variant::kHana;
    bool force_perfect_csi = false;
};

// PSNR of one grid cell: mean over images x realizations.
template <typename S>
double evaluate_cell(const ConditionSpec<S>& spec, const DataSource& data, double snr_db,
                     double sigma_e, std::uint64_t seed, std::uint64_t master_seed,
                     std::size_t snr_idx, std::size_t sigma_idx, std::size_t images,
                     std::size_t realizations) {
    const ModelConfig& mc = spec.model->config();
    const double sigma_e_sq = spec.force_perfect_csi ? 0.0 : sigma_e * sigma_e;
    double sum = 0.0;
    for (std::size_t img = 0; img < images; ++img) {
        Tensor<S> x = image_tensor<S>(data.image(img), data.dims());
        for (std::size_t rep = 0; rep < realizations; ++rep) {
            const std::uint64_t cell = derive_seed(master_seed, "eval.cell", seed,
                                                   snr_idx * 1024 + sigma_idx);
            const std::uint64_t rseed = derive_seed(cell, "eval.item", img, rep);
            ChannelRealization r = make_realization(mc.n_rx, mc.n_tx, sigma_e_sq, snr_db, rseed);
            ComplexMatrix noise = realization_noise(r, mc.d);
            auto out = spec.model->forward(x, r, noise, spec.variant);
            sum += psnr(x, out.x_hat);
        }
    }
    return sum / static_cast<double>(images * realizations);
}

// Full grid for one condition, appended into the report. Grid cells run in
// parallel; each writes only its own slot, so the result is independent of
// scheduling.
template <typename S>
void evaluate_condition(SweepReport& report, const ConditionSpec<S>& spec,
                        const DataSource& data, const EvalConfig& eval,
                        std::uint64_t master_seed, unsigned threads) {
    if (spec.model == nullptr) {
        throw ConfigError("condition '" + spec.name + "' has no checkpointed model");
    }
    struct Cell {
        std::size_t si, gi, ki;
    };
    std::vector<Cell> cells;
    for (std::size_t si = 0; si < eval.snr_grid.size(); ++si)
        for (std::size_t gi = 0; gi < eval.sigma_e_grid.size(); ++gi)
            for (std::size_t ki = 0; ki < eval.seeds; ++ki) cells.push_back({si, gi, ki});

    std::vector<SweepEntry> results(cells.size());
    parallel_for(cells.size(), threads, [&](std::size_t i) {
        const Cell& c = cells[i];
        SweepEntry e;
        e.condition = spec.name;
        e.snr_db = eval.snr_grid[c.si];
        e.sigma_e = eval.sigma_e_grid[c.gi];
        e.seed = c.ki;
        e.count = eval.images_per_cell * eval.realizations_per_image;
        e.psnr_db = evaluate_cell(spec, data, e.snr_db, e.sigma_e, c.ki, master_seed, c.si,
                                  c.gi, eval.images_per_cell, eval.realizations_per_image);
        results[i] = std::move(e);
    });
    report.entries.insert(report.entries.end(), results.begin(), results.end());
}

inline std::string iso_timestamp() {
    char buf[32];
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline SweepReport make_report_skeleton(const EvalConfig& eval, std::uint64_t master_seed,
                                        std::uint64_t cfg_hash) {
    SweepReport r;
    r.conditions = eval.conditions;
    r.snr_grid = eval.snr_grid;
    r.sigma_e_grid = eval.sigma_e_grid;
    for (std::uint64_t k = 0; k < eval.seeds; ++k) r.seeds.push_back(k);
    r.images_per_cell = eval.images_per_cell;
    r.realizations_per_image = eval.realizations_per_image;
    r.master_seed = master_seed;
    r.config_hash = cfg_hash;
    r.fixed_sigma_e = eval.fixed_sigma_e;
    r.fixed_snr_db = eval.fixed_snr_db;
    r.timestamp = iso_timestamp();
    return r;
}

}  // namespace jscc
