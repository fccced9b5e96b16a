#include "jscc/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace jscc {

namespace {

bool close(double a, double b) { return std::fabs(a - b) < 1e-12; }

std::string fmt6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

bool SweepReport::operator==(const SweepReport& other) const {
    auto entry_eq = [](const SweepEntry& a, const SweepEntry& b) {
        return a.condition == b.condition && a.snr_db == b.snr_db && a.sigma_e == b.sigma_e &&
               a.seed == b.seed && a.psnr_db == b.psnr_db && a.count == b.count;
    };
    if (entries.size() != other.entries.size()) return false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!entry_eq(entries[i], other.entries[i])) return false;
    }
    return conditions == other.conditions && snr_grid == other.snr_grid &&
           sigma_e_grid == other.sigma_e_grid && seeds == other.seeds &&
           images_per_cell == other.images_per_cell &&
           realizations_per_image == other.realizations_per_image &&
           master_seed == other.master_seed && config_hash == other.config_hash &&
           fixed_sigma_e == other.fixed_sigma_e && fixed_snr_db == other.fixed_snr_db &&
           timestamp == other.timestamp;
}

const SweepEntry* SweepReport::find(const std::string& condition, double snr_db, double sigma_e,
                                    std::uint64_t seed) const {
    for (const auto& e : entries) {
        if (e.condition == condition && close(e.snr_db, snr_db) && close(e.sigma_e, sigma_e) &&
            e.seed == seed) {
            return &e;
        }
    }
    return nullptr;
}

double SweepReport::cell_mean(const std::string& condition, double snr_db,
                              double sigma_e) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& e : entries) {
        if (e.condition == condition && close(e.snr_db, snr_db) && close(e.sigma_e, sigma_e)) {
            sum += e.psnr_db;
            ++n;
        }
    }
    if (n == 0) throw ConfigError("report has no cell for condition '" + condition + "'");
    return sum / static_cast<double>(n);
}

double SweepReport::cell_std(const std::string& condition, double snr_db,
                             double sigma_e) const {
    const double mu = cell_mean(condition, snr_db, sigma_e);
    double ss = 0.0;
    std::size_t n = 0;
    for (const auto& e : entries) {
        if (e.condition == condition && close(e.snr_db, snr_db) && close(e.sigma_e, sigma_e)) {
            ss += (e.psnr_db - mu) * (e.psnr_db - mu);
            ++n;
        }
    }
    return n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
}

double SweepReport::seed_mean(const std::string& condition, std::uint64_t seed,
                              const std::vector<double>* sigma_subset) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& e : entries) {
        if (e.condition != condition || e.seed != seed) continue;
        if (sigma_subset) {
            bool keep = false;
            for (double s : *sigma_subset) keep = keep || close(e.sigma_e, s);
            if (!keep) continue;
        }
        sum += e.psnr_db;
        ++n;
    }
    if (n == 0) throw ConfigError("report has no entries for condition '" + condition + "'");
    return sum / static_cast<double>(n);
}

bool SweepReport::has_condition(const std::string& condition) const {
    for (const auto& e : entries) {
        if (e.condition == condition) return true;
    }
    return false;
}

void write_csv(const SweepReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write report '" + path + "'");
    out << "condition,snr_db,sigma_e,seed,psnr_db\n";
    for (const auto& e : report.entries) {
        out << e.condition << "," << fmt6(e.snr_db) << "," << fmt6(e.sigma_e) << "," << e.seed
            << "," << fmt6(e.psnr_db) << "\n";
    }
    if (!out) throw IoError("short write on report '" + path + "'");
}

void write_json(const SweepReport& report, const std::string& path) {
    nlohmann::json j;
    j["metadata"] = {{"conditions", report.conditions},
                     {"snr_grid", report.snr_grid},
                     {"sigma_e_grid", report.sigma_e_grid},
                     {"seeds", report.seeds},
                     {"images_per_cell", report.images_per_cell},
                     {"realizations_per_image", report.realizations_per_image},
                     {"master_seed", report.master_seed},
                     {"config_hash", report.config_hash},
                     {"fixed_sigma_e", report.fixed_sigma_e},
                     {"fixed_snr_db", report.fixed_snr_db},
                     {"timestamp", report.timestamp}};
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : report.entries) {
        rows.push_back({{"condition", e.condition},
                        {"snr_db", e.snr_db},
                        {"sigma_e", e.sigma_e},
                        {"seed", e.seed},
                        {"psnr_db", e.psnr_db},
                        {"count", e.count}});
    }
    j["entries"] = std::move(rows);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write report '" + path + "'");
    out << j.dump(2) << "\n";
}

SweepReport read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw IoError("malformed report '" + path + "': " + e.what());
    }
    SweepReport r;
    const auto& m = j.at("metadata");
    r.conditions = m.at("conditions").get<std::vector<std::string>>();
    r.snr_grid = m.at("snr_grid").get<std::vector<double>>();
    r.sigma_e_grid = m.at("sigma_e_grid").get<std::vector<double>>();
    r.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
    r.images_per_cell = m.at("images_per_cell").get<std::size_t>();
    r.realizations_per_image = m.at("realizations_per_image").get<std::size_t>();
    r.master_seed = m.at("master_seed").get<std::uint64_t>();
    r.config_hash = m.at("config_hash").get<std::uint64_t>();
    r.fixed_sigma_e = m.at("fixed_sigma_e").get<double>();
    r.fixed_snr_db = m.at("fixed_snr_db").get<double>();
    r.timestamp = m.at("timestamp").get<std::string>();
    for (const auto& row : j.at("entries")) {
        SweepEntry e;
        e.condition = row.at("condition").get<std::string>();
        e.snr_db = row.at("snr_db").get<double>();
        e.sigma_e = row.at("sigma_e").get<double>();
        e.seed = row.at("seed").get<std::uint64_t>();
        e.psnr_db = row.at("psnr_db").get<double>();
        e.count = row.at("count").get<std::size_t>();
        r.entries.push_back(std::move(e));
    }
    return r;
}

void write_gnuplot(const SweepReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write curve file '" + path + "'");
    out << "# PSNR vs SNR at sigma_e = " << fmt6(report.fixed_sigma_e) << "\n";
    out << "# snr_db";
    for (const auto& c : report.conditions) out << " " << c;
    out << "\n";
    for (double snr : report.snr_grid) {
        out << fmt6(snr);
        for (const auto& c : report.conditions) {
            out << " " << fmt6(report.cell_mean(c, snr, report.fixed_sigma_e));
        }
        out << "\n";
    }
    out << "\n\n# PSNR vs sigma_e at snr_db = " << fmt6(report.fixed_snr_db) << "\n";
    out << "# sigma_e";
    for (const auto& c : report.conditions) out << " " << c;
    out << "\n";
    for (double s : report.sigma_e_grid) {
        out << fmt6(s);
        for (const auto& c : report.conditions) {
            out << " " << fmt6(report.cell_mean(c, report.fixed_snr_db, s));
        }
        out << "\n";
    }
}

namespace {

TrendVerdict paired_trend(const SweepReport& report, const std::string& better,
                          const std::string& worse,
                          const std::vector<double>* sigma_subset = nullptr) {
    for (const auto& name : {better, worse}) {
        if (!report.has_condition(name)) {
            throw ConfigError("compare_trends: condition '" + name + "' missing from report");
        }
    }
    TrendVerdict v;
    v.hypothesis = better + " >= " + worse;
    double sum = 0.0;
    for (std::uint64_t seed : report.seeds) {
        const double diff =
            report.seed_mean(better, seed, sigma_subset) - report.seed_mean(worse, seed, sigma_subset);
        sum += diff;
        if (diff > 0.0) ++v.wins;
        ++v.total;
    }
    v.mean_diff = v.total ? sum / v.total : 0.0;
    v.verdict = v.mean_diff > 0.0 ? "pass" : (v.mean_diff < 0.0 ? "fail" : "inconclusive");
    return v;
}

}  // namespace

std::vector<TrendVerdict> compare_trends(const SweepReport& report) {
    std::vector<TrendVerdict> out;
    out.push_back(paired_trend(report, "PERFECT", "NAIVE_FT"));
    out.push_back(paired_trend(report, "NAIVE_FT", "DIRECT"));
    if (report.has_condition("HANA_NO_DISTILL")) {
        out.push_back(paired_trend(report, "HANA_NO_DISTILL", "NAIVE_FT", &report.sigma_e_grid));
        if (report.has_condition("HANA")) {
            out.push_back(paired_trend(report, "HANA", "HANA_NO_DISTILL"));
        }
    }
    return out;
}

std::string format_verdict_table(const std::vector<TrendVerdict>& verdicts) {
    std::ostringstream o;
    o << "hypothesis                          mean_diff_db  wins  verdict\n";
    for (const auto& v : verdicts) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-35s %+11.4f  %d/%d   %s", v.hypothesis.c_str(),
                      v.mean_diff, v.wins, v.total, v.verdict.c_str());
        o << line << "\n";
    }
    return o.str();
}

}  // namespace jscc
