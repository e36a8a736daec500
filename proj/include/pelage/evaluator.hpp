#pragma once
// Leave-one-out retrieval metrics and the comparison table.

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pelage/matcher.hpp"

namespace pelage::eval {

struct RankedRetrieval {
    std::string query;
    std::vector<std::string> ranked;     // database ids, best first
    std::vector<unsigned char> relevant;  // same identity as the query

    /// 1-based rank of the first relevant entry, 0 if none.
    [[nodiscard]] int first_relevant_rank() const {
        for (std::size_t r = 0; r < relevant.size(); ++r)
            if (relevant[r]) return static_cast<int>(r) + 1;
        return 0;
    }
};

struct LeaveOneOut {
    std::vector<RankedRetrieval> retrievals;
    std::vector<std::string> excluded;  // queries whose identity has a single image
};

/// One retrieval per query whose identity has at least two images. Ranking
/// is by descending similarity with ascending id breaking ties.
[[nodiscard]] inline LeaveOneOut leave_one_out(const match::SimilarityMatrix& matrix,
                                               const std::map<std::string, std::string>& labels) {
    const std::size_t n = matrix.size();
    std::map<std::string, int> identity_count;
    for (const auto& id : matrix.ids) {
        const auto it = labels.find(id);
        if (it == labels.end()) throw Error("leave_one_out: no identity label for '" + id + "'");
        ++identity_count[it->second];
    }
    if (labels.size() != n) throw Error("leave_one_out: labels do not match the matrix ids");

    LeaveOneOut out;
    for (std::size_t q = 0; q < n; ++q) {
        const std::string& identity = labels.at(matrix.ids[q]);
        if (identity_count[identity] < 2) {
            out.excluded.push_back(matrix.ids[q]);
            continue;
        }
        std::vector<std::size_t> db;
        for (std::size_t d = 0; d < n; ++d)
            if (d != q) db.push_back(d);
        std::sort(db.begin(), db.end(), [&](std::size_t a, std::size_t b) {
            const double sa = matrix.at(q, a), sb = matrix.at(q, b);
            if (sa != sb) return sa > sb;
            return matrix.ids[a] < matrix.ids[b];
        });
        RankedRetrieval r;
        r.query = matrix.ids[q];
        for (std::size_t d : db) {
            r.ranked.push_back(matrix.ids[d]);
            r.relevant.push_back(labels.at(matrix.ids[d]) == identity ? 1 : 0);
        }
        out.retrievals.push_back(std::move(r));
    }
    if (out.retrievals.empty()) throw Error("leave_one_out: no eligible queries");
    return out;
}

/// Percentage of queries with a relevant entry in the first k ranks.
[[nodiscard]] inline double top_k(const std::vector<RankedRetrieval>& retrievals, int k) {
    if (k < 1) throw Error("top_k: k must be >= 1");
    if (retrievals.empty()) throw Error("top_k: no retrievals");
    int hits = 0;
    for (const auto& r : retrievals) {
        const int first = r.first_relevant_rank();
        if (first > 0 && first <= k) ++hits;
    }
    return 100.0 * hits / static_cast<double>(retrievals.size());
}

/// AP = (1/R) * sum of precision@r over relevant ranks r.
[[nodiscard]] inline double average_precision(const RankedRetrieval& r) {
    int found = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < r.relevant.size(); ++i)
        if (r.relevant[i]) {
            ++found;
            sum += static_cast<double>(found) / static_cast<double>(i + 1);
        }
    return found ? sum / found : 0.0;
}

[[nodiscard]] inline double mean_average_precision(const std::vector<RankedRetrieval>& retrievals) {
    if (retrievals.empty()) throw Error("mean_average_precision: no retrievals");
    double sum = 0.0;
    for (const auto& r : retrievals) sum += average_precision(r);
    return 100.0 * sum / static_cast<double>(retrievals.size());
}

struct Comparison {
    int failures = 0;
    int improvements = 0;
};

/// Rank-1 flips between two runs over the same queries.
[[nodiscard]] inline Comparison compare_variants(const std::vector<RankedRetrieval>& original,
                                                 const std::vector<RankedRetrieval>& unwrapped) {
    std::map<std::string, bool> base;
    for (const auto& r : original) base[r.query] = r.first_relevant_rank() == 1;
    if (base.size() != unwrapped.size() || base.size() != original.size())
        throw Error("compare_variants: query sets differ");
    Comparison c;
    for (const auto& r : unwrapped) {
        const auto it = base.find(r.query);
        if (it == base.end()) throw Error("compare_variants: query sets differ ('" + r.query + "')");
        const bool now = r.first_relevant_rank() == 1;
        if (now && !it->second) ++c.improvements;
        if (!now && it->second) ++c.failures;
    }
    return c;
}

struct ReportRow {
    std::string name;
    double map = 0.0;
    double top1 = 0.0, top3 = 0.0, top5 = 0.0, top10 = 0.0;
    std::optional<int> failures;  // empty on baseline rows
    std::optional<int> improvements;
};

[[nodiscard]] inline ReportRow summarize(const std::string& name, const std::vector<RankedRetrieval>& retrievals) {
    return {name,
            mean_average_precision(retrievals),
            top_k(retrievals, 1),
            top_k(retrievals, 3),
            top_k(retrievals, 5),
            top_k(retrievals, 10),
            std::nullopt,
            std::nullopt};
}

struct QueryRecord {
    std::string query;
    std::string variant;
    int first_relevant_rank = 0;
    double average_precision = 0.0;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    int queries = 0;
    int excluded = 0;
    std::vector<QueryRecord> per_query;
};

enum class ReportFormat { csv, markdown };

[[nodiscard]] inline std::string format_percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

/// Table with columns Name, mAP, Top-1, Top-3, Top-5, Top-10, Failures, Improvements.
[[nodiscard]] inline std::string emit_report(const EvalReport& report, ReportFormat format) {
    static const char* const kColumns[] = {"Name",   "mAP",    "Top-1",    "Top-3",
                                           "Top-5",  "Top-10", "Failures", "Improvements"};
    std::vector<std::vector<std::string>> table;
    for (const auto& r : report.rows) {
        table.push_back({r.name, format_percent(r.map), format_percent(r.top1), format_percent(r.top3),
                         format_percent(r.top5), format_percent(r.top10),
                         r.failures ? std::to_string(*r.failures) : std::string(),
                         r.improvements ? std::to_string(*r.improvements) : std::string()});
    }
    std::ostringstream out;
    if (format == ReportFormat::csv) {
        auto cell = [](const std::string& s) {
            if (s.find_first_of(",\"\n") == std::string::npos) return s;
            std::string q = "\"";
            for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
            return q + "\"";
        };
        for (int c = 0; c < 8; ++c) out << (c ? "," : "") << kColumns[c];
        out << "\n";
        for (const auto& row : table) {
            for (int c = 0; c < 8; ++c) out << (c ? "," : "") << cell(row[c]);
            out << "\n";
        }
    } else {
        out << "<!-- AP = (1/R) * sum of precision@r over relevant ranks; " << report.queries
            << " queries, " << report.excluded << " single-image identities excluded -->\n";
        out << "|";
        for (const char* c : kColumns) out << " " << c << " |";
        out << "\n|---|---:|---:|---:|---:|---:|---:|---:|\n";
        for (const auto& row : table) {
            out << "|";
            for (const auto& c : row) out << " " << c << " |";
            out << "\n";
        }
    }
    return out.str();
}

/// Baseline row plus one comparison row, each from its own similarity matrix.
[[nodiscard]] inline EvalReport evaluate_variants(const match::SimilarityMatrix& original,
                                                  const match::SimilarityMatrix& unwrapped,
                                                  const std::map<std::string, std::string>& labels,
                                                  const std::string& name_prefix = "builtin") {
    const auto base = leave_one_out(original, labels);
    const auto unw = leave_one_out(unwrapped, labels);
    EvalReport report;
    report.queries = static_cast<int>(base.retrievals.size());
    report.excluded = static_cast<int>(base.excluded.size());
    report.rows.push_back(summarize(name_prefix + " - original", base.retrievals));
    ReportRow row = summarize(name_prefix + " - unwrapped", unw.retrievals);
    const Comparison c = compare_variants(base.retrievals, unw.retrievals);
    row.failures = c.failures;
    row.improvements = c.improvements;
    report.rows.push_back(row);
    for (const auto* variant : {&base, &unw}) {
        const char* name = variant == &base ? "original" : "unwrapped";
        for (const auto& r : variant->retrievals)
            report.per_query.push_back({r.query, name, r.first_relevant_rank(), average_precision(r)});
    }
    return report;
}

}  // namespace pelage::eval
