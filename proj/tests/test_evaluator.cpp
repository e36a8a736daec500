#include <gtest/gtest.h>

#include <random>

#include "pelage/evaluator.hpp"

using namespace pelage;

namespace {

match::SimilarityMatrix matrix_of(const std::vector<std::string>& ids, const std::vector<double>& v) {
    match::SimilarityMatrix m(ids);
    m.values = v;
    return m;
}

eval::RankedRetrieval retrieval(const std::string& q, std::vector<unsigned char> rel) {
    eval::RankedRetrieval r;
    r.query = q;
    for (std::size_t i = 0; i < rel.size(); ++i) r.ranked.push_back("d" + std::to_string(i));
    r.relevant = std::move(rel);
    return r;
}

// Exhaustive recomputation from the raw matrix: each database entry's rank is
// counted directly instead of sorted.
struct OracleResult {
    std::vector<double> top;  // k = 1, 3, 5, 10
    double map = 0;
    std::map<std::string, bool> rank1;
};

OracleResult oracle(const match::SimilarityMatrix& m, const std::map<std::string, std::string>& labels) {
    const std::size_t n = m.size();
    OracleResult out{{0, 0, 0, 0}, 0, {}};
    int queries = 0;
    for (std::size_t q = 0; q < n; ++q) {
        int same = 0;
        for (std::size_t d = 0; d < n; ++d)
            if (d != q && labels.at(m.ids[d]) == labels.at(m.ids[q])) ++same;
        if (same == 0) continue;
        ++queries;
        auto rank = [&](std::size_t d) {
            int r = 1;
            for (std::size_t e = 0; e < n; ++e) {
                if (e == q || e == d) continue;
                if (m.at(q, e) > m.at(q, d) || (m.at(q, e) == m.at(q, d) && m.ids[e] < m.ids[d])) ++r;
            }
            return r;
        };
        int best = 1 << 30;
        double ap = 0;
        for (std::size_t d = 0; d < n; ++d) {
            if (d == q || labels.at(m.ids[d]) != labels.at(m.ids[q])) continue;
            const int r = rank(d);
            best = std::min(best, r);
            int above = 0;
            for (std::size_t e = 0; e < n; ++e)
                if (e != q && labels.at(m.ids[e]) == labels.at(m.ids[q]) && rank(e) <= r) ++above;
            ap += double(above) / r;
        }
        out.map += ap / same;
        const int ks[] = {1, 3, 5, 10};
        for (int i = 0; i < 4; ++i) out.top[i] += best <= ks[i];
        out.rank1[m.ids[q]] = best == 1;
    }
    for (auto& t : out.top) t = 100.0 * t / queries;
    out.map = 100.0 * out.map / queries;
    return out;
}

struct Fixture {
    match::SimilarityMatrix m;
    std::map<std::string, std::string> labels;
};

Fixture random_fixture(std::mt19937_64& rng, int n, bool ties) {
    std::vector<std::string> ids;
    std::map<std::string, std::string> labels;
    std::uniform_int_distribution<int> ident(0, std::max(1, n / 3));
    for (int i = 0; i < n; ++i) {
        ids.push_back("img" + std::to_string(i));
        labels[ids.back()] = "id" + std::to_string(ident(rng));
    }
    // Guarantee one identity with two images.
    labels[ids[1]] = labels[ids[0]];
    std::uniform_real_distribution<double> u(0, 10);
    std::vector<double> v(n * n);
    for (auto& x : v) x = ties ? std::floor(u(rng) / 3) : u(rng);
    return {matrix_of(ids, v), labels};
}

}  // namespace

TEST(LeaveOneOut, TwoImagesSameIdentity) {
    const auto r = eval::leave_one_out(matrix_of({"a", "b"}, {0, 1, 1, 0}), {{"a", "x"}, {"b", "x"}});
    ASSERT_EQ(r.retrievals.size(), 2u);
    for (const auto& q : r.retrievals) {
        ASSERT_EQ(q.ranked.size(), 1u);
        EXPECT_EQ(q.relevant[0], 1);
    }
}

TEST(LeaveOneOut, SingletonExcludedButStillInDatabase) {
    const auto r = eval::leave_one_out(matrix_of({"a", "b", "c"}, {0, 1, 2, 1, 0, 3, 2, 3, 0}),
                                       {{"a", "x"}, {"b", "x"}, {"c", "y"}});
    ASSERT_EQ(r.retrievals.size(), 2u);
    ASSERT_EQ(r.excluded, std::vector<std::string>{"c"});
    EXPECT_EQ(r.retrievals[0].ranked, (std::vector<std::string>{"c", "b"}));
}

TEST(LeaveOneOut, CraftedMatrixMatchesBruteForceSort) {
    const std::vector<std::string> ids{"a", "b", "c", "d"};
    const auto m = matrix_of(ids, {0, 5, 1, 5, 2, 0, 9, 3, 4, 4, 0, 4, 7, 1, 2, 0});
    const std::map<std::string, std::string> labels{{"a", "x"}, {"b", "x"}, {"c", "y"}, {"d", "y"}};
    const auto r = eval::leave_one_out(m, labels);
    ASSERT_EQ(r.retrievals.size(), 4u);
    // Rows by hand: ties 5/5 and 4/4/4 fall back to ascending id.
    EXPECT_EQ(r.retrievals[0].ranked, (std::vector<std::string>{"b", "d", "c"}));
    EXPECT_EQ(r.retrievals[1].ranked, (std::vector<std::string>{"c", "d", "a"}));
    EXPECT_EQ(r.retrievals[2].ranked, (std::vector<std::string>{"a", "b", "d"}));
    EXPECT_EQ(r.retrievals[3].ranked, (std::vector<std::string>{"a", "c", "b"}));
    EXPECT_EQ(r.retrievals[3].relevant, (std::vector<unsigned char>{0, 1, 0}));
}

TEST(LeaveOneOut, Errors) {
    EXPECT_THROW((void)eval::leave_one_out(matrix_of({"a", "b"}, {0, 1, 1, 0}), {{"a", "x"}, {"b", "y"}}), Error);
    EXPECT_THROW((void)eval::leave_one_out(matrix_of({"a", "b"}, {0, 1, 1, 0}), {{"a", "x"}}), Error);
}

TEST(TopK, Definitions) {
    EXPECT_EQ(eval::top_k({retrieval("q", {1, 0}), retrieval("r", {1, 1})}, 1), 100.0);
    const std::vector<eval::RankedRetrieval> one{retrieval("q", {0, 0, 0, 1, 0})};
    EXPECT_EQ(eval::top_k(one, 3), 0.0);
    EXPECT_EQ(eval::top_k(one, 5), 100.0);
    EXPECT_EQ(eval::top_k(one, 50), 100.0);
    EXPECT_THROW((void)eval::top_k(one, 0), Error);
    EXPECT_THROW((void)eval::top_k({}, 1), Error);
}

TEST(TopK, RandomTwentyQueriesEqualRecount) {
    std::mt19937_64 rng(20);
    std::bernoulli_distribution b(0.2);
    std::vector<eval::RankedRetrieval> rs;
    for (int q = 0; q < 20; ++q) {
        std::vector<unsigned char> rel(15);
        for (auto& x : rel) x = b(rng);
        rel[rng() % 15] = 1;
        rs.push_back(retrieval("q" + std::to_string(q), rel));
    }
    for (int k : {1, 2, 3, 5, 10, 15}) {
        int hits = 0;
        for (const auto& r : rs) {
            bool hit = false;
            for (int i = 0; i < k; ++i) hit = hit || r.relevant[i];
            hits += hit;
        }
        EXPECT_DOUBLE_EQ(eval::top_k(rs, k), 100.0 * hits / 20.0);
    }
}

TEST(MeanAveragePrecision, Definitions) {
    EXPECT_DOUBLE_EQ(eval::mean_average_precision({retrieval("q", {1, 1})}), 100.0);
    EXPECT_DOUBLE_EQ(eval::mean_average_precision({retrieval("q", {0, 1})}), 50.0);
    // Relevant at ranks 1 and 3: (1/1 + 2/3) / 2.
    EXPECT_DOUBLE_EQ(eval::average_precision(retrieval("q", {1, 0, 1})), (1.0 + 2.0 / 3.0) / 2.0);
    EXPECT_THROW((void)eval::mean_average_precision({}), Error);
}

TEST(Oracle, SmallDatasetsMatchExhaustiveRecomputation) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + trial % 7;
        const auto f = random_fixture(rng, n, trial % 2 == 0);
        const auto expect = oracle(f.m, f.labels);
        const auto got = eval::leave_one_out(f.m, f.labels).retrievals;
        EXPECT_NEAR(eval::mean_average_precision(got), expect.map, 1e-9);
        const int ks[] = {1, 3, 5, 10};
        for (int i = 0; i < 4; ++i) EXPECT_NEAR(eval::top_k(got, ks[i]), expect.top[i], 1e-9);
        for (int k = 1; k < 10; ++k) EXPECT_LE(eval::top_k(got, k), eval::top_k(got, k + 1));

        // A second matrix over the same queries; compare flips against the oracle.
        auto g = random_fixture(rng, n, false);
        g.m.ids = f.m.ids;
        const auto expect2 = oracle(g.m, f.labels);
        const auto got2 = eval::leave_one_out(g.m, f.labels).retrievals;
        int failures = 0, improvements = 0;
        for (const auto& [q, hit] : expect.rank1) {
            const bool hit2 = expect2.rank1.at(q);
            failures += hit && !hit2;
            improvements += !hit && hit2;
        }
        const auto c = eval::compare_variants(got, got2);
        EXPECT_EQ(c.failures, failures);
        EXPECT_EQ(c.improvements, improvements);
        EXPECT_LE(c.failures + c.improvements, static_cast<int>(got.size()));
    }
}

TEST(Oracle, StrictlyIncreasingTransformLeavesMetricsUnchanged) {
    std::mt19937_64 rng(30);
    for (int trial = 0; trial < 50; ++trial) {
        const auto f = random_fixture(rng, 8, trial % 2 == 0);
        auto cubed = f.m;
        for (auto& v : cubed.values) v = v * v * v + 1;
        const auto a = eval::leave_one_out(f.m, f.labels).retrievals;
        const auto b = eval::leave_one_out(cubed, f.labels).retrievals;
        EXPECT_EQ(eval::mean_average_precision(a), eval::mean_average_precision(b));
        for (int k : {1, 3, 5, 10}) EXPECT_EQ(eval::top_k(a, k), eval::top_k(b, k));
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].ranked, b[i].ranked);
    }
}

TEST(CompareVariants, Examples) {
    const std::vector<eval::RankedRetrieval> base{retrieval("a", {1, 0}), retrieval("b", {0, 1})};
    EXPECT_EQ(eval::compare_variants(base, base).failures, 0);
    EXPECT_EQ(eval::compare_variants(base, base).improvements, 0);
    const std::vector<eval::RankedRetrieval> flip{retrieval("a", {1, 0}), retrieval("b", {1, 0})};
    EXPECT_EQ(eval::compare_variants(base, flip).failures, 0);
    EXPECT_EQ(eval::compare_variants(base, flip).improvements, 1);
    EXPECT_THROW((void)eval::compare_variants(base, {retrieval("a", {1})}), Error);
    EXPECT_THROW((void)eval::compare_variants(base, {retrieval("a", {1}), retrieval("z", {1})}), Error);
}

TEST(CompareVariants, SixQueriesTwoFlipsEachWayAndAntisymmetry) {
    // q1, q2: right -> wrong; q3, q4: wrong -> right; q5 right both; q6 wrong both.
    const std::vector<eval::RankedRetrieval> orig{retrieval("q1", {1, 0}), retrieval("q2", {1, 0}),
                                                  retrieval("q3", {0, 1}), retrieval("q4", {0, 1}),
                                                  retrieval("q5", {1, 0}), retrieval("q6", {0, 1})};
    const std::vector<eval::RankedRetrieval> unw{retrieval("q6", {0, 1}), retrieval("q1", {0, 1}),
                                                 retrieval("q2", {0, 1}), retrieval("q3", {1, 0}),
                                                 retrieval("q4", {1, 0}), retrieval("q5", {1, 1})};
    const auto c = eval::compare_variants(orig, unw);
    EXPECT_EQ(c.failures, 2);
    EXPECT_EQ(c.improvements, 2);
    const std::vector<eval::RankedRetrieval> unw2{retrieval("q1", {0, 1}), retrieval("q2", {1, 0}),
                                                  retrieval("q3", {1, 0}), retrieval("q4", {1, 0}),
                                                  retrieval("q5", {0, 1}), retrieval("q6", {1, 0})};
    const auto fwd = eval::compare_variants(orig, unw2), back = eval::compare_variants(unw2, orig);
    EXPECT_EQ(fwd.failures, back.improvements);
    EXPECT_EQ(fwd.improvements, back.failures);
    EXPECT_EQ(fwd.failures, 2);
    EXPECT_EQ(fwd.improvements, 3);
}

TEST(EmitReport, TableShapeAndFormatting) {
    eval::EvalReport r;
    r.queries = 108;
    r.excluded = 3;
    r.rows.push_back({"DISK - original", 12.7, 27.9, 40.0, 47.25, 55.55, std::nullopt, std::nullopt});
    r.rows.push_back({"DISK - unwrapped", 15.4, 33.3, 44.4, 50.0, 60.0, 9, 15});
    const auto csv = eval::emit_report(r, eval::ReportFormat::csv);
    const auto md = eval::emit_report(r, eval::ReportFormat::markdown);
    EXPECT_EQ(csv,
              "Name,mAP,Top-1,Top-3,Top-5,Top-10,Failures,Improvements\n"
              "DISK - original,12.7,27.9,40.0,47.2,55.5,,\n"
              "DISK - unwrapped,15.4,33.3,44.4,50.0,60.0,9,15\n");
    EXPECT_NE(md.find("| Name | mAP | Top-1 | Top-3 | Top-5 | Top-10 | Failures | Improvements |"), std::string::npos);
    EXPECT_NE(md.find("| DISK - original | 12.7 | 27.9 | 40.0 | 47.2 | 55.5 |  |  |"), std::string::npos);
    EXPECT_NE(md.find("| DISK - unwrapped | 15.4 | 33.3 | 44.4 | 50.0 | 60.0 | 9 | 15 |"), std::string::npos);
    EXPECT_NE(md.find("108 queries, 3 single-image"), std::string::npos);
}

TEST(EmitReport, CsvAndMarkdownCarrySameNumbers) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 100);
    eval::EvalReport r;
    for (int i = 0; i < 5; ++i) r.rows.push_back({"row" + std::to_string(i), u(rng), u(rng), u(rng), u(rng), u(rng), i, 2 * i});
    auto numbers = [](std::string s, char sep) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream in(s);
        for (std::string line; std::getline(in, line);) {
            if (line.rfind("row", line[0] == '|' ? 2 : 0) != (line[0] == '|' ? 2u : 0u)) continue;
            std::istringstream ls(line);
            while (std::getline(ls, cell, sep)) {
                cell.erase(0, cell.find_first_not_of(' '));
                cell.erase(cell.find_last_not_of(' ') + 1);
                if (!cell.empty() && cell.rfind("row", 0) != 0) out.push_back(cell);
            }
        }
        return out;
    };
    const auto a = numbers(eval::emit_report(r, eval::ReportFormat::csv), ',');
    const auto b = numbers(eval::emit_report(r, eval::ReportFormat::markdown), '|');
    EXPECT_EQ(a.size(), 35u);
    EXPECT_EQ(a, b);
}

TEST(EvaluateVariants, RowsAndPerQueryRecords) {
    const std::vector<std::string> ids{"a", "b", "c", "d", "e"};
    const std::map<std::string, std::string> labels{{"a", "x"}, {"b", "x"}, {"c", "y"}, {"d", "y"}, {"e", "z"}};
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> v(25);
    for (auto& x : v) x = u(rng);
    const auto m = matrix_of(ids, v);
    const auto rep = eval::evaluate_variants(m, m, labels, "builtin");
    ASSERT_EQ(rep.rows.size(), 2u);
    EXPECT_EQ(rep.rows[0].name, "builtin - original");
    EXPECT_EQ(rep.rows[1].name, "builtin - unwrapped");
    EXPECT_FALSE(rep.rows[0].failures.has_value());
    EXPECT_EQ(*rep.rows[1].failures, 0);
    EXPECT_EQ(*rep.rows[1].improvements, 0);
    EXPECT_EQ(rep.queries, 4);
    EXPECT_EQ(rep.excluded, 1);
    EXPECT_EQ(rep.per_query.size(), 8u);
    for (const auto& row : rep.rows)
        for (double p : {row.map, row.top1, row.top3, row.top5, row.top10}) {
            EXPECT_GE(p, 0.0);
            EXPECT_LE(p, 100.0);
        }
}
