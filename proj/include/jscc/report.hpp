#pragma once

// Sweep results and their serializations. A report row is the mean PSNR of
// one (condition, snr, sigma_e, seed) cell; aggregation across seeds happens
// on read. CSV and JSON mirror each other; the gnuplot companion holds the
// two fixed-axis curve tables.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "jscc/error.hpp"

namespace jscc {

struct SweepEntry {
    std::string condition;
    double snr_db = 0.0;
    double sigma_e = 0.0;
    std::uint64_t seed = 0;
    double psnr_db = 0.0;
    std::size_t count = 0;  // images x realizations behind the mean
};

struct SweepReport {
    std::vector<std::string> conditions;
    std::vector<double> snr_grid;
    std::vector<double> sigma_e_grid;
    std::vector<std::uint64_t> seeds;
    std::size_t images_per_cell = 0;
    std::size_t realizations_per_image = 0;
    std::uint64_t master_seed = 0;
    std::uint64_t config_hash = 0;
    double fixed_sigma_e = 0.0;
    double fixed_snr_db = 0.0;
    std::string timestamp;
    std::vector<SweepEntry> entries;

    bool operator==(const SweepReport& other) const;

    const SweepEntry* find(const std::string& condition, double snr_db, double sigma_e,
                           std::uint64_t seed) const;

    // Mean / std across seeds of one grid cell.
    double cell_mean(const std::string& condition, double snr_db, double sigma_e) const;
    double cell_std(const std::string& condition, double snr_db, double sigma_e) const;

    // Mean over every cell of one condition for one seed (paired comparisons
    // reduce per seed first).
    double seed_mean(const std::string& condition, std::uint64_t seed,
                     const std::vector<double>* sigma_subset = nullptr) const;

    bool has_condition(const std::string& condition) const;
};

void write_csv(const SweepReport& report, const std::string& path);
void write_json(const SweepReport& report, const std::string& path);
SweepReport read_json(const std::string& path);
void write_gnuplot(const SweepReport& report, const std::string& path);

struct TrendVerdict {
    std::string hypothesis;   // e.g. "PERFECT >= NAIVE_FT"
    double mean_diff = 0.0;   // averaged over seeds
    int wins = 0;             // seeds with a strictly positive difference
    int total = 0;
    std::string verdict;      // pass | fail | inconclusive
};

// Ordered hypotheses: (a) PERFECT >= NAIVE_FT >= DIRECT, (b) HANA_NO_DISTILL
// >= NAIVE_FT averaged over the sigma_e grid, (c) HANA >= HANA_NO_DISTILL.
// Throws ConfigError when a required condition is missing from the report.
std::vector<TrendVerdict> compare_trends(const SweepReport& report);

std::string format_verdict_table(const std::vector<TrendVerdict>& verdicts);

}  // namespace jscc
