#include "hml/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hml/error.hpp"
#include "hml/util.hpp"

namespace hml::stats {

ScoreTable ScoreTable::parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        fail(ErrorCode::MalformedRecord, "score table is empty");
    auto header = split(trim(line), ',');
    if (header.size() < 3)
        fail(ErrorCode::MalformedRecord, "score table needs at least two method columns");

    ScoreTable t;
    for (std::size_t i = 1; i < header.size(); ++i) t.methods.push_back(trim(header[i]));

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != header.size())
            fail(ErrorCode::MalformedRecord,
                 "line " + std::to_string(line_no) + ": expected " +
                     std::to_string(header.size()) + " fields");
        t.datasets.push_back(trim(fields[0]));
        std::vector<double> row;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            bool ok = false;
            const double v = parse_double(fields[i], &ok);
            if (!ok || !std::isfinite(v))
                fail(ErrorCode::NonFiniteValue,
                     "line " + std::to_string(line_no) + ": bad accuracy '" + fields[i] + "'");
            row.push_back(v);
        }
        t.accuracy.push_back(std::move(row));
    }
    if (t.method_count() < 2 || t.dataset_count() < 2)
        fail(ErrorCode::EmptyInput, "score table needs k >= 2 methods and N >= 2 datasets");
    return t;
}

ScoreTable ScoreTable::load_csv(const std::string& path) {
    return parse_csv(read_file(path));
}

RankTable compute_ranks(const ScoreTable& table) {
    const std::size_t N = table.dataset_count();
    const std::size_t k = table.method_count();
    RankTable r;
    r.ranks.assign(N, std::vector<double>(k, 0.0));
    r.average.assign(k, 0.0);

    for (std::size_t i = 0; i < N; ++i) {
        const auto& row = table.accuracy[i];
        std::vector<std::size_t> order(k);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
        // assign average ranks to runs of equal accuracy (rank 1 = best)
        std::size_t pos = 0;
        while (pos < k) {
            std::size_t end = pos + 1;
            while (end < k && row[order[end]] == row[order[pos]]) ++end;
            const double avg_rank = (static_cast<double>(pos + 1) + static_cast<double>(end)) / 2.0;
            for (std::size_t j = pos; j < end; ++j) r.ranks[i][order[j]] = avg_rank;
            pos = end;
        }
        if (row.end() == std::adjacent_find(row.begin(), row.end(),
                                            [](double a, double b) { return a != b; }))
            r.degenerate_rows.push_back(i);
    }
    for (std::size_t j = 0; j < k; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < N; ++i) sum += r.ranks[i][j];
        r.average[j] = sum / static_cast<double>(N);
    }
    return r;
}

double friedman_chi2(const RankTable& ranks) {
    const std::size_t N = ranks.ranks.size();
    const std::size_t k = ranks.average.size();
    double sum_sq = 0.0;
    for (const double R : ranks.average) sum_sq += R * R;
    const double kk = static_cast<double>(k);
    return 12.0 * static_cast<double>(N) / (kk * (kk + 1.0)) *
           (sum_sq - kk * (kk + 1.0) * (kk + 1.0) / 4.0);
}

double friedman_F(double chi2, int N, int k) {
    const double denom = static_cast<double>(N) * (k - 1) - chi2;
    if (!(denom > 0.0))
        fail(ErrorCode::DegenerateDenominator,
             "chi^2 = " + format_double(chi2) + " reaches N(k-1); F statistic undefined");
    return static_cast<double>(N - 1) * chi2 / denom;
}

namespace {

struct QEntry {
    int k;
    double alpha;
    double q;
};

// Two-tailed Bonferroni-Dunn critical values (Demsar 2006, Table 5(b)).
constexpr QEntry kQTable[] = {
    {2, 0.05, 1.960}, {3, 0.05, 2.241}, {4, 0.05, 2.394}, {5, 0.05, 2.498},
    {6, 0.05, 2.576}, {7, 0.05, 2.638}, {8, 0.05, 2.690}, {9, 0.05, 2.724},
    {10, 0.05, 2.773},
    {2, 0.10, 1.65},  {3, 0.10, 1.960}, {4, 0.10, 2.128}, {5, 0.10, 2.241},
    {6, 0.10, 2.326}, {7, 0.10, 2.394}, {8, 0.10, 2.450}, {9, 0.10, 2.498},
    {10, 0.10, 2.539},
};

struct FEntry {
    int df1;
    int df2;
    double alpha;
    double f;
};

// Upper critical values of the F distribution for the supported df pairs
// (df1 = k-1, df2 = (k-1)(N-1) for the comparisons this tool targets).
constexpr FEntry kFTable[] = {
    {1, 29, 0.10, 2.88},  {1, 29, 0.05, 4.18},
    {2, 14, 0.10, 2.73},  {2, 14, 0.05, 3.74},
    {3, 21, 0.10, 2.36},  {3, 21, 0.05, 3.07},
    {4, 28, 0.10, 2.157}, {4, 28, 0.05, 2.71},
    {4, 36, 0.10, 2.11},  {4, 36, 0.05, 2.63},
    {5, 35, 0.10, 2.04},  {5, 35, 0.05, 2.49},
};

} // namespace

double bonferroni_dunn_cd(int k, int N, double alpha) {
    for (const auto& e : kQTable) {
        if (e.k == k && std::abs(e.alpha - alpha) < 1e-12) {
            return e.q * std::sqrt(static_cast<double>(k) * (k + 1) / (6.0 * N));
        }
    }
    fail(ErrorCode::UnsupportedAlphaOrK,
         "no tabulated q for k = " + std::to_string(k) + ", alpha = " + format_double(alpha));
}

bool f_critical_value(int df1, int df2, double alpha, double* out) {
    for (const auto& e : kFTable) {
        if (e.df1 == df1 && e.df2 == df2 && std::abs(e.alpha - alpha) < 1e-12) {
            if (out) *out = e.f;
            return true;
        }
    }
    return false;
}

TestResult compare_methods(const ScoreTable& table, double alpha) {
    const int N = static_cast<int>(table.dataset_count());
    const int k = static_cast<int>(table.method_count());

    TestResult res;
    res.alpha = alpha;
    res.ranks = compute_ranks(table);
    res.chi2_F = friedman_chi2(res.ranks);
    res.F_F = friedman_F(res.chi2_F, N, k);
    res.df1 = k - 1;
    res.df2 = (k - 1) * (N - 1);
    res.cd = bonferroni_dunn_cd(k, N, alpha);
    for (const auto& e : kQTable)
        if (e.k == k && std::abs(e.alpha - alpha) < 1e-12) res.q_alpha = e.q;

    res.has_f_critical = f_critical_value(res.df1, res.df2, alpha, &res.f_critical);
    res.null_rejected = res.has_f_critical && res.F_F > res.f_critical;

    res.significant.assign(k, std::vector<bool>(k, false));
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b)
            res.significant[a][b] =
                a != b && std::abs(res.ranks.average[a] - res.ranks.average[b]) > res.cd;
    return res;
}

std::string render_report(const ScoreTable& table, const TestResult& r) {
    std::ostringstream out;
    const int k = static_cast<int>(table.method_count());
    out << "methods: " << k << ", datasets: " << table.dataset_count() << "\n";
    out << "average ranks (1 = best):\n";
    for (int j = 0; j < k; ++j)
        out << "  " << table.methods[j] << ": " << format_double(r.ranks.average[j]) << "\n";
    if (!r.ranks.degenerate_rows.empty()) {
        out << "note: " << r.ranks.degenerate_rows.size()
            << " dataset row(s) had all methods tied\n";
    }
    out << "friedman chi2 = " << format_double(r.chi2_F) << "\n";
    out << "iman-davenport F(" << r.df1 << ", " << r.df2 << ") = " << format_fixed(r.F_F, 4)
        << "\n";
    if (r.has_f_critical) {
        out << "F critical value at alpha = " << format_double(r.alpha) << " is "
            << format_double(r.f_critical) << " -> null hypothesis "
            << (r.null_rejected ? "rejected" : "not rejected") << "\n";
    } else {
        out << "F critical value for df (" << r.df1 << ", " << r.df2
            << ") is not tabulated; compare F manually\n";
    }
    out << "bonferroni-dunn CD (q = " << format_double(r.q_alpha) << ", alpha = "
        << format_double(r.alpha) << ") = " << format_fixed(r.cd, 4) << "\n";
    out << "pairwise |rank difference| > CD:\n";
    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            const double diff = r.ranks.average[a] - r.ranks.average[b];
            out << "  " << table.methods[a] << " vs " << table.methods[b] << ": |"
                << format_fixed(std::abs(diff), 4) << "| "
                << (r.significant[a][b] ? ">" : "<=") << " CD";
            if (r.significant[a][b]) {
                const auto& better = diff < 0 ? table.methods[a] : table.methods[b];
                out << " -> " << better << " significantly better";
            }
            out << "\n";
        }
    }
    return out.str();
}

std::string render_ranks_csv(const ScoreTable& table, const TestResult& r) {
    std::ostringstream out;
    out << "dataset";
    for (const auto& m : table.methods) out << "," << m;
    out << "\n";
    for (std::size_t i = 0; i < table.dataset_count(); ++i) {
        out << table.datasets[i];
        for (std::size_t j = 0; j < table.method_count(); ++j)
            out << "," << format_double(r.ranks.ranks[i][j]);
        out << "\n";
    }
    out << "average";
    for (const double R : r.ranks.average) out << "," << format_double(R);
    out << "\n";
    return out.str();
}

std::string render_pairwise_csv(const ScoreTable& table, const TestResult& r) {
    std::ostringstream out;
    out << "method_a,method_b,rank_diff,cd,significant,better\n";
    const int k = static_cast<int>(table.method_count());
    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            const double diff = r.ranks.average[a] - r.ranks.average[b];
            out << table.methods[a] << "," << table.methods[b] << ","
                << format_double(std::abs(diff)) << "," << format_double(r.cd) << ","
                << (r.significant[a][b] ? 1 : 0) << ",";
            if (r.significant[a][b])
                out << (diff < 0 ? table.methods[a] : table.methods[b]);
            out << "\n";
        }
    }
    return out.str();
}

} // namespace hml::stats
