#pragma once

// Run configuration: one flat-sectioned key-value file is the complete
// record of an experiment. Parsing is strict: unknown sections or keys are
// rejected so that a config cannot silently drift from the code.

#include <cstdint>
#include <string>
#include <vector>

#include "jscc/model.hpp"
#include "jscc/train.hpp"

namespace jscc {

struct EvalConfig {
    std::vector<double> snr_grid{-6, -3, 0, 3, 6, 9, 12, 15, 18};
    std::vector<double> sigma_e_grid{0.01, 0.02, 0.03, 0.04, 0.05,
                                     0.06, 0.07, 0.08, 0.09, 0.1};
    std::vector<std::string> conditions{"PERFECT", "DIRECT", "NAIVE_FT", "HANA_NO_DISTILL",
                                        "HANA"};
    std::size_t seeds = 3;
    std::size_t images_per_cell = 64;
    std::size_t realizations_per_image = 2;
    // Axis held fixed in the companion curve files.
    double fixed_sigma_e = 0.05;
    double fixed_snr_db = 6.0;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;  // per-stage seeds/steps are derived in the pipeline
    std::vector<Stage> stages{Stage::kPretrain, Stage::kTeacher, Stage::kStage1,
                              Stage::kStage2};
    std::size_t steps_override[5] = {0, 0, 0, 0, 0};  // indexed by Stage, 0 = train.steps
    EvalConfig eval;
    std::string dataset_source = "procedural";
    std::string out_dir = "out";
    std::uint64_t master_seed = 1;
    std::string precision = "f64";  // f64 | f32

    std::size_t stage_steps(Stage s) const {
        const std::size_t o = steps_override[static_cast<std::size_t>(s)];
        return o ? o : train.steps;
    }

    void validate() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);

// FNV-1a over the canonical serialization minus the output directory, so a
// checkpoint binds to everything that shapes the experiment.
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace jscc
