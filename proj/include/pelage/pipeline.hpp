#pragma once
// File-to-file pipeline stages behind the command-line tool.
//
// Every stage reads a manifest, processes entries independently on a worker
// pool and writes one set of outputs per entry. A failing entry is logged
// and counted; the others still run. Log lines are emitted in manifest
// order once all workers finish, so output does not depend on scheduling.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "pelage/evaluator.hpp"
#include "pelage/geometry.hpp"
#include "pelage/io.hpp"
#include "pelage/matcher.hpp"
#include "pelage/parallel.hpp"
#include "pelage/synth.hpp"
#include "pelage/unwrapper.hpp"
#include "pelage/uv_solver.hpp"

namespace pelage::pipeline {

namespace fs = std::filesystem;

inline constexpr std::uint64_t kDefaultSeed = 20250101;

struct BatchResult {
    int succeeded = 0;
    int failed = 0;
    [[nodiscard]] int exit_code() const { return failed == 0 ? 0 : 1; }
};

namespace detail {

struct EntryLog {
    bool ok = false;
    std::string message;
};

inline BatchResult summarize(const std::vector<EntryLog>& logs, const char* stage, std::ostream& log) {
    BatchResult r;
    for (const auto& e : logs) {
        log << e.message << "\n";
        (e.ok ? r.succeeded : r.failed)++;
    }
    log << stage << ": " << r.succeeded << " succeeded, " << r.failed << " failed\n";
    return r;
}

inline void ensure_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw Error("cannot create directory " + p.string() + ": " + ec.message());
}

}  // namespace detail

// ---- synth ----

struct SynthOptions {
    synth::SurfaceSpec base;
    int individuals = 0;  // 0: a single scene named "scene"
    int poses = 0;
    synth::PoseVariation variation;
    std::uint64_t seed = kDefaultSeed;
    fs::path out;
};

inline void write_scene(const synth::SyntheticScene& scene, const std::string& id, const std::string& identity,
                        const fs::path& dir, io::Manifest& manifest) {
    const std::string image = id + "_image.png", normals = id + "_normals.png", mask = id + "_mask.png";
    io::write_rgb((dir / image).string(), scene.image);
    io::write_normal_map((dir / normals).string(), scene.normals);
    io::write_mask((dir / mask).string(), scene.mask);
    io::write_uv_field((dir / (id + "_gt.uvf")).string(), scene.gt_uv);
    manifest.entries.push_back({id, identity, image, normals, mask, std::nullopt});
}

/// Writes scene files plus manifest.json into opts.out; returns the manifest path.
inline fs::path run_synth(const SynthOptions& opts) {
    detail::ensure_dir(opts.out);
    io::Manifest manifest;
    if (opts.individuals > 0 || opts.poses > 0) {
        for (const auto& s : synth::generate_reid_set(opts.individuals, opts.poses, opts.base, opts.seed, opts.variation))
            write_scene(s.scene, s.id, s.identity, opts.out, manifest);
    } else {
        synth::SurfaceSpec spec = opts.base;
        if (spec.pattern.kind == synth::PatternKind::random_dots) {
            const double w = spec.width, h = spec.height;
            spec.pattern = synth::Pattern::random_dots(opts.seed, {-w, -h}, {4.0 * w, 3.0 * h});
        }
        const std::string identity = spec.identity_id.empty() ? "scene" : spec.identity_id;
        write_scene(synth::generate_scene(spec), "scene", identity, opts.out, manifest);
    }
    const fs::path path = opts.out / "manifest.json";
    io::write_text(path.string(), io::manifest_to_string(manifest));
    return path;
}

// ---- solve ----

enum class SolverKind { network, grid };

struct SolveOptions {
    fs::path manifest;
    fs::path out;
    SolverKind solver = SolverKind::network;
    net::CoordinateNetConfig network;
    uv::GridSolverOptions grid;
    double tau = geometry::kDefaultTau;
    int threads = 1;
};

/// Metric of the masked foreground of one manifest entry.
[[nodiscard]] inline MetricField entry_metric(const io::Manifest& m, const io::ManifestEntry& e, double tau) {
    NormalField normals = io::read_normal_map((m.base / e.normals).string());
    const MaskField mask = io::read_mask((m.base / e.mask).string());
    if (!mask.same_shape(normals)) throw Error("mask and normal map sizes differ");
    for (std::size_t i = 0; i < normals.size(); ++i)
        if (!mask.valid[i]) normals.valid[i] = 0;
    return geometry::metric_from_normals(normals, tau);
}

inline BatchResult run_solve(const SolveOptions& opts, std::ostream& log) {
    const io::Manifest manifest = io::load_manifest(opts.manifest.string());
    detail::ensure_dir(opts.out);
    std::vector<detail::EntryLog> logs(manifest.entries.size());
    parallel_for(manifest.entries.size(), opts.threads, [&](std::size_t k) {
        const auto& e = manifest.entries[k];
        try {
            const MetricField metric = entry_metric(manifest, e, opts.tau);
            uv::UVSolution sol;
            const char* name = opts.solver == SolverKind::network ? "network" : "grid";
            if (opts.solver == SolverKind::network) {
                auto res = uv::solve_uv_network(metric, opts.network);
                sol = {std::move(res.uv), std::move(res.report)};
            } else {
                sol = uv::solve_uv_grid(metric, opts.grid);
            }
            io::write_uv_field((opts.out / (e.id + ".uvf")).string(), sol.uv);
            io::write_text((opts.out / (e.id + ".solve.json")).string(),
                           io::solve_report_to_json(e.id, name, sol.report));
            logs[k] = {true, e.id + ": solved (" + std::to_string(sol.uv.valid_count()) +
                                 " pixels, residual " + std::to_string(sol.report.final_residual) + ")"};
        } catch (const std::exception& ex) {
            logs[k] = {false, e.id + ": FAILED: " + ex.what()};
        }
    });
    return detail::summarize(logs, "solve", log);
}

// ---- unwrap ----

struct UnwrapStageOptions {
    fs::path manifest;
    fs::path uv_dir;
    fs::path out;
    unwrap::UnwrapOptions unwrap;
    int threads = 1;
};

/// Writes <id>_unwrapped.png per entry and out/manifest.json referencing them.
inline BatchResult run_unwrap(const UnwrapStageOptions& opts, std::ostream& log) {
    const io::Manifest manifest = io::load_manifest(opts.manifest.string());
    detail::ensure_dir(opts.out);
    std::vector<detail::EntryLog> logs(manifest.entries.size());
    std::vector<unsigned char> done(manifest.entries.size(), 0);
    parallel_for(manifest.entries.size(), opts.threads, [&](std::size_t k) {
        const auto& e = manifest.entries[k];
        try {
            const fs::path uv_path = opts.uv_dir / (e.id + ".uvf");
            if (!fs::exists(uv_path)) throw Error("missing UV file " + uv_path.string());
            const UVField uv = io::read_uv_field(uv_path.string());
            const RgbImage image = io::read_rgb((manifest.base / e.image).string());
            if (uv.width != image.width || uv.height != image.height)
                throw Error("UV field and image sizes differ");
            const auto tex = unwrap::unwrap_image(image, uv, opts.unwrap);
            io::write_rgba((opts.out / (e.id + "_unwrapped.png")).string(), tex.to_rgba());
            const double coverage = 100.0 * static_cast<double>(tex.covered()) / static_cast<double>(tex.pixels.size());
            char buf[128];
            std::snprintf(buf, sizeof buf, ": unwrapped %dx%d, %.1f%% covered", tex.width, tex.height, coverage);
            logs[k] = {true, e.id + buf};
            done[k] = 1;
        } catch (const std::exception& ex) {
            logs[k] = {false, e.id + ": FAILED: " + ex.what()};
        }
    });
    io::Manifest out = manifest;
    out.base = opts.out;
    const fs::path out_abs = fs::absolute(opts.out);
    for (std::size_t k = 0; k < out.entries.size(); ++k) {
        auto& e = out.entries[k];
        auto rebase = [&](const fs::path& p) { return fs::relative(fs::absolute(manifest.base / p), out_abs); };
        e.image = rebase(e.image);
        e.normals = rebase(e.normals);
        e.mask = rebase(e.mask);
        if (done[k])
            e.unwrapped = fs::path(e.id + "_unwrapped.png");
        else if (e.unwrapped)
            e.unwrapped = rebase(*e.unwrapped);
    }
    io::write_text((opts.out / "manifest.json").string(), io::manifest_to_string(out));
    return detail::summarize(logs, "unwrap", log);
}

// ---- eval ----

struct EvalOptions {
    fs::path manifest;
    fs::path out;
    std::optional<fs::path> scores_original;   // external CSV, bypasses the builtin matcher
    std::optional<fs::path> scores_unwrapped;
    match::MatcherOptions matcher;
    std::string name = "builtin";
    bool diagnostics = false;
};

[[nodiscard]] inline nlohmann::ordered_json report_to_json(const eval::EvalReport& r) {
    nlohmann::ordered_json j;
    j["queries"] = r.queries;
    j["excluded"] = r.excluded;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : r.rows) {
        nlohmann::ordered_json o;
        o["name"] = row.name;
        o["mAP"] = row.map;
        o["top1"] = row.top1;
        o["top3"] = row.top3;
        o["top5"] = row.top5;
        o["top10"] = row.top10;
        o["failures"] = row.failures ? nlohmann::ordered_json(*row.failures) : nlohmann::ordered_json();
        o["improvements"] = row.improvements ? nlohmann::ordered_json(*row.improvements) : nlohmann::ordered_json();
        j["rows"].push_back(o);
    }
    j["per_query"] = nlohmann::ordered_json::array();
    for (const auto& q : r.per_query)
        j["per_query"].push_back({{"query", q.query},
                                  {"variant", q.variant},
                                  {"first_relevant_rank", q.first_relevant_rank},
                                  {"average_precision", q.average_precision}});
    return j;
}

[[nodiscard]] inline eval::EvalReport report_from_json(const nlohmann::json& j) {
    eval::EvalReport r;
    try {
        r.queries = j.at("queries").get<int>();
        r.excluded = j.at("excluded").get<int>();
        for (const auto& o : j.at("rows")) {
            eval::ReportRow row;
            row.name = o.at("name").get<std::string>();
            row.map = o.at("mAP").get<double>();
            row.top1 = o.at("top1").get<double>();
            row.top3 = o.at("top3").get<double>();
            row.top5 = o.at("top5").get<double>();
            row.top10 = o.at("top10").get<double>();
            if (o.contains("failures") && !o["failures"].is_null()) row.failures = o["failures"].get<int>();
            if (o.contains("improvements") && !o["improvements"].is_null())
                row.improvements = o["improvements"].get<int>();
            r.rows.push_back(row);
        }
        if (j.contains("per_query"))
            for (const auto& q : j["per_query"])
                r.per_query.push_back({q.at("query").get<std::string>(), q.at("variant").get<std::string>(),
                                       q.at("first_relevant_rank").get<int>(), q.at("average_precision").get<double>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed report JSON: ") + e.what());
    }
    return r;
}

struct EvalOutputs {
    eval::EvalReport report;
    match::SimilarityMatrix original;
    match::SimilarityMatrix unwrapped;
};

/// Writes report.csv, report.md, report.json and queries.json into opts.out.
inline EvalOutputs run_eval(const EvalOptions& opts, std::ostream& log) {
    const io::Manifest manifest = io::load_manifest(opts.manifest.string());
    if (manifest.entries.size() < 2) throw Error("evaluation needs at least 2 manifest entries");
    detail::ensure_dir(opts.out);
    std::vector<std::string> ids;
    std::map<std::string, std::string> labels;
    for (const auto& e : manifest.entries) {
        ids.push_back(e.id);
        labels[e.id] = e.identity;
    }

    std::vector<RgbaImage> originals, unwrapped;
    const bool need_images = !opts.scores_original || !opts.scores_unwrapped || opts.diagnostics;
    if (need_images) {
        originals.resize(ids.size());
        unwrapped.resize(ids.size());
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const auto& e = manifest.entries[k];
            if (!e.unwrapped) throw Error("manifest entry '" + e.id + "' has no unwrapped texture");
            originals[k] = synth::segmented(io::read_rgb((manifest.base / e.image).string()),
                                            io::read_mask((manifest.base / e.mask).string()));
            unwrapped[k] = io::read_rgba((manifest.base / *e.unwrapped).string());
        }
    }
    auto matrix = [&](const std::optional<fs::path>& csv, const std::vector<RgbaImage>& images) {
        return csv ? match::read_external_scores(csv->string(), ids)
                   : match::builtin_similarity(ids, images, opts.matcher);
    };
    EvalOutputs out{{}, matrix(opts.scores_original, originals), matrix(opts.scores_unwrapped, unwrapped)};
    out.report = eval::evaluate_variants(out.original, out.unwrapped, labels, opts.name);

    io::write_text((opts.out / "report.csv").string(), eval::emit_report(out.report, eval::ReportFormat::csv));
    io::write_text((opts.out / "report.md").string(), eval::emit_report(out.report, eval::ReportFormat::markdown));
    io::write_text((opts.out / "report.json").string(), report_to_json(out.report).dump(2) + "\n");
    io::write_text((opts.out / "queries.json").string(), report_to_json(out.report)["per_query"].dump(2) + "\n");

    if (opts.diagnostics) {
        const fs::path dir = opts.out / "diagnostics";
        detail::ensure_dir(dir);
        for (const auto* variant : {&originals, &unwrapped}) {
            const bool is_orig = variant == &originals;
            const auto& m = is_orig ? out.original : out.unwrapped;
            std::vector<std::vector<match::Keypoint>> kps(ids.size());
            parallel_for(ids.size(), opts.matcher.threads,
                         [&](std::size_t k) { kps[k] = match::detect_and_describe((*variant)[k], opts.matcher.detector); });
            for (std::size_t q = 0; q < ids.size(); ++q) {
                std::size_t best = q == 0 ? 1 : 0;
                for (std::size_t d = 0; d < ids.size(); ++d)
                    if (d != q && (m.at(q, d) > m.at(q, best) || (m.at(q, d) == m.at(q, best) && ids[d] < ids[best])))
                        best = d;
                const auto matches = match::match(kps[q], kps[best], opts.matcher.ratio);
                const auto img = match::draw_matches((*variant)[q], (*variant)[best], matches);
                io::write_rgb((dir / (ids[q] + (is_orig ? "_original.png" : "_unwrapped.png"))).string(), img);
            }
        }
    }
    log << eval::emit_report(out.report, eval::ReportFormat::markdown);
    return out;
}

}  // namespace pelage::pipeline
