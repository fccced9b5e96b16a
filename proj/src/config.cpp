#include "jscc/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "jscc/error.hpp"
#include "jscc/rng.hpp"

namespace jscc {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, sep)) out.push_back(trim(part));
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

struct KvDoc {
    // section -> key -> value, with consumption tracking for strictness
    std::map<std::string, std::map<std::string, std::string>> sections;
    mutable std::set<std::string> consumed;

    bool has(const std::string& sec, const std::string& key) const {
        auto s = sections.find(sec);
        return s != sections.end() && s->second.count(key) != 0;
    }

    std::string take(const std::string& sec, const std::string& key) const {
        consumed.insert(sec + "." + key);
        return sections.at(sec).at(key);
    }

    void finish() const {
        for (const auto& [sec, kv] : sections) {
            for (const auto& [key, value] : kv) {
                (void)value;
                if (!consumed.count(sec + "." + key)) {
                    throw ConfigError("unknown config key [" + sec + "] " + key);
                }
            }
        }
    }
};

KvDoc parse_kv(const std::string& text) {
    static const std::set<std::string> kKnownSections{"model", "train", "eval", "dataset",
                                                      "run"};
    KvDoc doc;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') {
                throw ConfigError("line " + std::to_string(lineno) + ": malformed section");
            }
            section = trim(t.substr(1, t.size() - 2));
            if (!kKnownSections.count(section)) {
                throw ConfigError("unknown config section [" + section + "]");
            }
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos || section.empty()) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (!doc.sections[section].emplace(key, value).second) {
            throw ConfigError("duplicate config key [" + section + "] " + key);
        }
    }
    return doc;
}

double parse_double(const std::string& v, const std::string& where) {
    // accepts plain decimals and p/q fractions (e.g. "1/12")
    const auto slash = v.find('/');
    try {
        if (slash != std::string::npos) {
            const double num = std::stod(trim(v.substr(0, slash)));
            const double den = std::stod(trim(v.substr(slash + 1)));
            if (den == 0.0) throw ConfigError(where + ": division by zero");
            return num / den;
        }
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(where + ": cannot parse number '" + v + "'");
    }
}

std::size_t parse_size(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size() || x < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
        throw ConfigError(where + ": cannot parse nonnegative integer '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return static_cast<std::uint64_t>(x);
    } catch (const std::exception&) {
        throw ConfigError(where + ": cannot parse integer '" + v + "'");
    }
}

bool parse_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(where + ": cannot parse boolean '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& v, const std::string& where) {
    std::vector<double> out;
    for (const auto& part : split(v, ',')) {
        if (part.empty()) throw ConfigError(where + ": empty list element");
        out.push_back(parse_double(part, where));
    }
    if (out.empty()) throw ConfigError(where + ": empty list");
    return out;
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (precision != "f64" && precision != "f32") {
        throw ConfigError("precision must be f64 or f32, got '" + precision + "'");
    }
    if (stages.empty()) throw ConfigError("at least one stage must be requested");
    if (eval.seeds == 0 || eval.images_per_cell == 0 || eval.realizations_per_image == 0) {
        throw ConfigError("eval seeds/images/realizations must be positive");
    }
    if (eval.snr_grid.empty() || eval.sigma_e_grid.empty()) {
        throw ConfigError("eval grids must not be empty");
    }
    for (double s : eval.sigma_e_grid) {
        if (s < 0.0) throw ConfigError("sigma_e grid values must be nonnegative");
    }
    std::set<std::string> requested(eval.conditions.begin(), eval.conditions.end());
    if (requested.size() != eval.conditions.size()) {
        throw ConfigError("duplicate eval condition");
    }
}

RunConfig parse_run_config(const std::string& text) {
    const KvDoc doc = parse_kv(text);
    RunConfig cfg;

    auto size_field = [&](const char* sec, const char* key, std::size_t& out) {
        if (doc.has(sec, key)) out = parse_size(doc.take(sec, key), std::string(sec) + "." + key);
    };
    auto dbl_field = [&](const char* sec, const char* key, double& out) {
        if (doc.has(sec, key)) out = parse_double(doc.take(sec, key), std::string(sec) + "." + key);
    };
    auto bool_field = [&](const char* sec, const char* key, bool& out) {
        if (doc.has(sec, key)) out = parse_bool(doc.take(sec, key), std::string(sec) + "." + key);
    };

    size_field("model", "n_tx", cfg.model.n_tx);
    size_field("model", "n_rx", cfg.model.n_rx);
    size_field("model", "d", cfg.model.d);
    size_field("model", "d_prime", cfg.model.d_prime);
    size_field("model", "n_blocks", cfg.model.n_blocks);
    size_field("model", "heads", cfg.model.heads);
    size_field("model", "c", cfg.model.c);
    size_field("model", "h", cfg.model.h);
    size_field("model", "w", cfg.model.w);
    size_field("model", "c_prime", cfg.model.c_prime);
    size_field("model", "base_width", cfg.model.base_width);
    size_field("model", "snr_hidden", cfg.model.snr_hidden);
    dbl_field("model", "compression_ratio", cfg.model.compression_ratio);
    bool_field("model", "channel_activations", cfg.model.channel_activations);

    size_field("train", "steps", cfg.train.steps);
    size_field("train", "batch_size", cfg.train.batch_size);
    dbl_field("train", "lr", cfg.train.lr);
    dbl_field("train", "clip_norm", cfg.train.clip_norm);
    dbl_field("train", "beta", cfg.train.beta);
    dbl_field("train", "sigma_e_sq_low", cfg.train.sigma_e_sq_low);
    dbl_field("train", "sigma_e_sq_high", cfg.train.sigma_e_sq_high);
    bool_field("train", "kd_teacher_first", cfg.train.kd_teacher_first);
    if (doc.has("train", "snr_set_db")) {
        cfg.train.snr_set_db = parse_double_list(doc.take("train", "snr_set_db"),
                                                 "train.snr_set_db");
    }
    if (doc.has("train", "stages")) {
        cfg.stages.clear();
        for (const auto& name : split(doc.take("train", "stages"), ',')) {
            cfg.stages.push_back(stage_from_string(name));
        }
    }
    for (Stage s : {Stage::kPretrain, Stage::kTeacher, Stage::kNaiveFinetune, Stage::kStage1,
                    Stage::kStage2}) {
        const std::string key = std::string("steps_") + stage_name(s);
        if (doc.has("train", key)) {
            cfg.steps_override[static_cast<std::size_t>(s)] =
                parse_size(doc.take("train", key), "train." + key);
        }
    }

    if (doc.has("eval", "snr_grid")) {
        cfg.eval.snr_grid = parse_double_list(doc.take("eval", "snr_grid"), "eval.snr_grid");
    }
    if (doc.has("eval", "sigma_e_grid")) {
        cfg.eval.sigma_e_grid =
            parse_double_list(doc.take("eval", "sigma_e_grid"), "eval.sigma_e_grid");
    }
    if (doc.has("eval", "conditions")) {
        cfg.eval.conditions.clear();
        for (const auto& name : split(doc.take("eval", "conditions"), ',')) {
            cfg.eval.conditions.push_back(name);
        }
    }
    size_field("eval", "seeds", cfg.eval.seeds);
    size_field("eval", "images_per_cell", cfg.eval.images_per_cell);
    size_field("eval", "realizations_per_image", cfg.eval.realizations_per_image);
    dbl_field("eval", "fixed_sigma_e", cfg.eval.fixed_sigma_e);
    dbl_field("eval", "fixed_snr_db", cfg.eval.fixed_snr_db);

    if (doc.has("dataset", "source")) cfg.dataset_source = doc.take("dataset", "source");

    if (doc.has("run", "out_dir")) cfg.out_dir = doc.take("run", "out_dir");
    if (doc.has("run", "master_seed")) {
        cfg.master_seed = parse_u64(doc.take("run", "master_seed"), "run.master_seed");
    }
    if (doc.has("run", "precision")) cfg.precision = doc.take("run", "precision");

    doc.finish();
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += fmt_double(v[i]);
    }
    return out;
}

}  // namespace

std::string serialize_run_config(const RunConfig& cfg) {
    std::ostringstream o;
    o << "[model]\n";
    o << "n_tx = " << cfg.model.n_tx << "\n";
    o << "n_rx = " << cfg.model.n_rx << "\n";
    o << "d = " << cfg.model.d << "\n";
    o << "d_prime = " << cfg.model.d_prime << "\n";
    o << "n_blocks = " << cfg.model.n_blocks << "\n";
    o << "heads = " << cfg.model.heads << "\n";
    o << "c = " << cfg.model.c << "\n";
    o << "h = " << cfg.model.h << "\n";
    o << "w = " << cfg.model.w << "\n";
    o << "c_prime = " << cfg.model.c_prime << "\n";
    o << "base_width = " << cfg.model.base_width << "\n";
    o << "snr_hidden = " << cfg.model.snr_hidden << "\n";
    o << "compression_ratio = " << fmt_double(cfg.model.compression_ratio) << "\n";
    o << "channel_activations = " << (cfg.model.channel_activations ? "true" : "false") << "\n";
    o << "\n[train]\n";
    o << "steps = " << cfg.train.steps << "\n";
    o << "batch_size = " << cfg.train.batch_size << "\n";
    o << "lr = " << fmt_double(cfg.train.lr) << "\n";
    o << "clip_norm = " << fmt_double(cfg.train.clip_norm) << "\n";
    o << "beta = " << fmt_double(cfg.train.beta) << "\n";
    o << "snr_set_db = " << join_doubles(cfg.train.snr_set_db) << "\n";
    o << "sigma_e_sq_low = " << fmt_double(cfg.train.sigma_e_sq_low) << "\n";
    o << "sigma_e_sq_high = " << fmt_double(cfg.train.sigma_e_sq_high) << "\n";
    o << "kd_teacher_first = " << (cfg.train.kd_teacher_first ? "true" : "false") << "\n";
    o << "stages = ";
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        if (i) o << ",";
        o << stage_name(cfg.stages[i]);
    }
    o << "\n";
    for (Stage s : {Stage::kPretrain, Stage::kTeacher, Stage::kNaiveFinetune, Stage::kStage1,
                    Stage::kStage2}) {
        o << "steps_" << stage_name(s) << " = "
          << cfg.steps_override[static_cast<std::size_t>(s)] << "\n";
    }
    o << "\n[eval]\n";
    o << "snr_grid = " << join_doubles(cfg.eval.snr_grid) << "\n";
    o << "sigma_e_grid = " << join_doubles(cfg.eval.sigma_e_grid) << "\n";
    o << "conditions = ";
    for (std::size_t i = 0; i < cfg.eval.conditions.size(); ++i) {
        if (i) o << ",";
        o << cfg.eval.conditions[i];
    }
    o << "\n";
    o << "seeds = " << cfg.eval.seeds << "\n";
    o << "images_per_cell = " << cfg.eval.images_per_cell << "\n";
    o << "realizations_per_image = " << cfg.eval.realizations_per_image << "\n";
    o << "fixed_sigma_e = " << fmt_double(cfg.eval.fixed_sigma_e) << "\n";
    o << "fixed_snr_db = " << fmt_double(cfg.eval.fixed_snr_db) << "\n";
    o << "\n[dataset]\n";
    o << "source = " << cfg.dataset_source << "\n";
    o << "\n[run]\n";
    o << "out_dir = " << cfg.out_dir << "\n";
    o << "master_seed = " << cfg.master_seed << "\n";
    o << "precision = " << cfg.precision << "\n";
    return o.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
    RunConfig canon = cfg;
    canon.out_dir = "";
    return hash_str(serialize_run_config(canon));
}

}  // namespace jscc
