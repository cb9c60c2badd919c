#pragma once

#include <string>
#include <vector>

namespace hml::stats {

// Accuracy of k methods over N dataset splits; higher is better.
struct ScoreTable {
    std::vector<std::string> methods;  // k names
    std::vector<std::string> datasets; // N names
    std::vector<std::vector<double>> accuracy; // N rows x k columns

    std::size_t method_count() const { return methods.size(); }
    std::size_t dataset_count() const { return datasets.size(); }

    static ScoreTable parse_csv(const std::string& text);
    static ScoreTable load_csv(const std::string& path);
};

// Per-dataset ranks (1 = best, ties averaged) and per-method average ranks.
struct RankTable {
    std::vector<std::vector<double>> ranks; // N x k
    std::vector<double> average;            // k
    std::vector<std::size_t> degenerate_rows; // rows where all methods tied
};

RankTable compute_ranks(const ScoreTable& table);

// chi^2_F = 12N / (k(k+1)) [ sum_j R_j^2 - k(k+1)^2 / 4 ]
double friedman_chi2(const RankTable& ranks);

// Iman-Davenport: F_F = (N-1) chi^2 / (N(k-1) - chi^2)
double friedman_F(double chi2, int N, int k);

// CD = q_alpha sqrt(k(k+1) / 6N), with q_alpha from the embedded two-tailed
// Bonferroni-Dunn table (alpha in {0.05, 0.10}, k in 2..10).
double bonferroni_dunn_cd(int k, int N, double alpha);

// 90th/95th percentile F critical values for the df pairs the tool supports;
// returns false when the combination is not tabulated.
bool f_critical_value(int df1, int df2, double alpha, double* out);

struct TestResult {
    RankTable ranks;
    double chi2_F = 0.0;
    double F_F = 0.0;
    int df1 = 0;
    int df2 = 0;
    double cd = 0.0;
    double q_alpha = 0.0;
    double alpha = 0.0;
    bool has_f_critical = false;
    double f_critical = 0.0;
    bool null_rejected = false; // meaningful only when has_f_critical
    // significant[a][b]: |R_a - R_b| > CD
    std::vector<std::vector<bool>> significant;
};

TestResult compare_methods(const ScoreTable& table, double alpha);

// Human-readable report and CSV exports (ranks + pairwise significance).
std::string render_report(const ScoreTable& table, const TestResult& result);
std::string render_ranks_csv(const ScoreTable& table, const TestResult& result);
std::string render_pairwise_csv(const ScoreTable& table, const TestResult& result);

} // namespace hml::stats
