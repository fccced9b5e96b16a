#pragma once

#include <string>

#include "jscc/error.hpp"
#include "jscc/model.hpp"
#include "jscc/train.hpp"

namespace jscc {

// Which trained artifact serves an evaluation condition, and how.
struct ConditionBinding {
    Stage stage;
    Variant variant;
    bool force_perfect;
};

inline ConditionBinding condition_binding(const std::string& name) {
    if (name == "PERFECT") return {Stage::kTeacher, Variant::kHana, true};
    if (name == "DIRECT") return {Stage::kTeacher, Variant::kHana, false};
    if (name == "NAIVE_FT") return {Stage::kNaiveFinetune, Variant::kNoAdaptor, false};
    if (name == "HANA_NO_DISTILL") return {Stage::kStage1, Variant::kHana, false};
    if (name == "HANA") return {Stage::kStage2, Variant::kHana, false};
    throw ConfigError("unknown evaluation condition '" + name + "'");
}

}  // namespace jscc
