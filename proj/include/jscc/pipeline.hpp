#pragma once

// Stage orchestration: PRETRAIN -> {TEACHER, NAIVE_FT, STAGE1} -> STAGE2,
// with a checkpoint and plain-text training log per stage, resumable from any
// completed stage. Stages whose dependencies are satisfied run concurrently;
// each run is internally single-threaded and seeded, so the artifacts do not
// depend on scheduling.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>

#include "jscc/checkpoint.hpp"
#include "jscc/config.hpp"
#include "jscc/eval.hpp"
#include "jscc/model.hpp"
#include "jscc/parallel.hpp"
#include "jscc/pipeline_util.hpp"
#include "jscc/train.hpp"

namespace jscc {

template <typename S>
class Pipeline {
public:
    explicit Pipeline(const RunConfig& rc)
        : rc_(rc), hash_(config_hash(rc)), force_(false) {
        rc_.validate();
    }

    void set_force(bool force) { force_ = force; }

    // Override where a stage's checkpoint lives (CLI --checkpoint).
    void set_checkpoint_stem(Stage stage, const std::string& stem) {
        stem_override_[stage] = stem;
    }

    std::string checkpoint_stem(Stage stage) const {
        auto it = stem_override_.find(stage);
        if (it != stem_override_.end()) return it->second;
        return (std::filesystem::path(rc_.out_dir) / stage_name(stage)).string();
    }

    // Trains every requested stage whose checkpoint does not already exist.
    void train(std::ostream& info) {
        std::filesystem::create_directories(rc_.out_dir);
        {
            std::ofstream rec(std::filesystem::path(rc_.out_dir) / "run_config.ini",
                              std::ios::trunc);
            rec << serialize_run_config(rc_);
        }
        const auto train_source =
            open_source(rc_.dataset_source, {rc_.model.c, rc_.model.h, rc_.model.w},
                        derive_seed(rc_.master_seed, "data.train"));

        std::vector<Stage> wave1;  // depend only on pretrain
        bool want_stage2 = false;
        bool want_pretrain = false;
        for (Stage s : rc_.stages) {
            switch (s) {
                case Stage::kPretrain: want_pretrain = true; break;
                case Stage::kStage2: want_stage2 = true; break;
                default:
                    if (std::find(wave1.begin(), wave1.end(), s) == wave1.end()) {
                        wave1.push_back(s);
                    }
                    break;
            }
        }
        const bool need_pretrain = want_pretrain || !wave1.empty() || want_stage2;
        if (need_pretrain) ensure_stage(Stage::kPretrain, *train_source, info);
        if (want_stage2) {
            // stage2 depends on stage1 and teacher
            if (std::find(wave1.begin(), wave1.end(), Stage::kStage1) == wave1.end()) {
                wave1.push_back(Stage::kStage1);
            }
            if (std::find(wave1.begin(), wave1.end(), Stage::kTeacher) == wave1.end()) {
                wave1.push_back(Stage::kTeacher);
            }
        }
        if (!wave1.empty()) {
            std::vector<std::string> notes(wave1.size());
            parallel_for(wave1.size(), hardware_threads(), [&](std::size_t i) {
                std::ostringstream local;
                ensure_stage(wave1[i], *train_source, local);
                notes[i] = local.str();
            });
            for (const auto& n : notes) info << n;
        }
        if (want_stage2) ensure_stage(Stage::kStage2, *train_source, info);
    }

    // Loads the model serving one stage's artifact, training nothing.
    std::shared_ptr<Model<S>> load_stage(Stage stage) {
        auto it = cache_.find(stage);
        if (it != cache_.end()) return it->second;
        const std::string stem = checkpoint_stem(stage);
        if (!checkpoint_exists(stem)) {
            throw IoError("missing checkpoint for stage '" + std::string(stage_name(stage)) +
                          "' (expected '" + manifest_path(stem) + "')");
        }
        auto model = make_model();
        if (load_checkpoint(model->store(), stem, hash_, force_)) {
            // hash mismatch tolerated under force; surface it once
            hash_warnings_ += std::string("warning: checkpoint '") + stem +
                              "' was produced under a different config\n";
        }
        cache_[stage] = model;
        return model;
    }

    const std::string& hash_warnings() const { return hash_warnings_; }

    // Runs every configured condition over the paired grid.
    SweepReport evaluate(std::ostream& info) {
        const auto eval_source =
            open_source(rc_.dataset_source, {rc_.model.c, rc_.model.h, rc_.model.w},
                        derive_seed(rc_.master_seed, "data.eval"));
        SweepReport report = make_report_skeleton(rc_.eval, rc_.master_seed, hash_);
        for (const auto& name : rc_.eval.conditions) {
            const ConditionBinding binding = condition_binding(name);
            ConditionSpec<S> spec;
            spec.name = name;
            spec.variant = binding.variant;
            spec.force_perfect_csi = binding.force_perfect;
            auto model = load_stage(binding.stage);
            spec.model = model.get();
            info << "evaluating condition " << name << " (stage " << stage_name(binding.stage)
                 << ")\n";
            evaluate_condition(report, spec, *eval_source, rc_.eval, rc_.master_seed,
                               hardware_threads());
        }
        return report;
    }

private:
    std::shared_ptr<Model<S>> make_model() const {
        return std::make_shared<Model<S>>(rc_.model, derive_seed(rc_.master_seed, "model.init"));
    }

    TrainConfig stage_config(Stage stage) const {
        TrainConfig cfg = rc_.train;
        cfg.stage = stage;
        cfg.steps = rc_.stage_steps(stage);
        cfg.seed = derive_seed(rc_.master_seed, "stage.seed", static_cast<std::uint64_t>(stage));
        return cfg;
    }

    // Trains (or resumes) one stage and caches its model.
    void ensure_stage(Stage stage, const DataSource& data, std::ostream& info) {
        const std::string stem = checkpoint_stem(stage);
        if (checkpoint_exists(stem)) {
            info << "stage " << stage_name(stage) << ": checkpoint present, skipping\n";
            load_stage(stage);
            return;
        }
        auto model = make_model();
        if (stage != Stage::kPretrain) {
            model->store().copy_all_from(dependency(stage)->store());
        }
        std::shared_ptr<Model<S>> teacher;
        if (stage == Stage::kStage2) {
            teacher = load_or_cached(Stage::kTeacher);
            teacher->store().freeze_all();
        }
        std::ofstream log(stem + ".log", std::ios::trunc);
        info << "stage " << stage_name(stage) << ": training " << rc_.stage_steps(stage)
             << " steps\n";
        run_training(*model, teacher.get(), stage_config(stage), data, &log);
        save_checkpoint(model->store(), stem, stage_name(stage), hash_);
        {
            std::lock_guard<std::mutex> lock(cache_mutex_);
            cache_[stage] = model;
        }
    }

    std::shared_ptr<Model<S>> dependency(Stage stage) {
        switch (stage) {
            case Stage::kTeacher:
            case Stage::kNaiveFinetune:
            case Stage::kStage1: return load_or_cached(Stage::kPretrain);
            case Stage::kStage2: return load_or_cached(Stage::kStage1);
            default: throw ContractError("pretrain has no dependency");
        }
    }

    std::shared_ptr<Model<S>> load_or_cached(Stage stage) {
        {
            std::lock_guard<std::mutex> lock(cache_mutex_);
            auto it = cache_.find(stage);
            if (it != cache_.end()) return it->second;
        }
        auto model = load_stage(stage);
        return model;
    }

    RunConfig rc_;
    std::uint64_t hash_;
    bool force_;
    std::map<Stage, std::string> stem_override_;
    std::map<Stage, std::shared_ptr<Model<S>>> cache_;
    std::mutex cache_mutex_;
    std::string hash_warnings_;
};

}  // namespace jscc
