// pelage: synthesize scenes, solve UV maps, unwrap textures, evaluate re-identification.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "pelage/pipeline.hpp"

namespace {

using namespace pelage;

struct NetFlags {
    int epochs_pretrain = -1;
    int epochs_train = -1;
    double lr = -1.0;
    int batch_size = -1;
    int hidden_width = -1;
    int fourier_bands = -1;
    double fourier_sigma = -1.0;
};

void add_net_flags(CLI::App* cmd, NetFlags& f) {
    cmd->add_option("--epochs-pretrain", f.epochs_pretrain, "identity pretraining epochs (default 100)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--epochs-train", f.epochs_train, "isometry training epochs (default 300)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--lr", f.lr, "initial isometry learning rate (default 1e-5)")->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", f.batch_size, "isometry minibatch size (default 256)")->check(CLI::PositiveNumber);
    cmd->add_option("--hidden-width", f.hidden_width, "hidden layer width (default 64)")->check(CLI::PositiveNumber);
    cmd->add_option("--fourier-bands", f.fourier_bands, "Fourier bands (default 6)")->check(CLI::PositiveNumber);
    cmd->add_option("--fourier-sigma", f.fourier_sigma, "frequency scale (default 1.0)")->check(CLI::PositiveNumber);
}

void apply(const NetFlags& f, net::CoordinateNetConfig& c) {
    if (f.epochs_pretrain >= 0) c.pretrain_epochs = f.epochs_pretrain;
    if (f.epochs_train >= 0) c.train_epochs = f.epochs_train;
    if (f.lr > 0) c.lr_initial = f.lr;
    if (f.batch_size > 0) c.batch_size = f.batch_size;
    if (f.hidden_width > 0) c.hidden_width = f.hidden_width;
    if (f.fourier_bands > 0) c.fourier_bands = f.fourier_bands;
    if (f.fourier_sigma > 0) c.fourier_sigma = f.fourier_sigma;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pelage: normal-guided texture unwrapping and re-identification evaluation"};
    app.require_subcommand(1);
    app.allow_extras(false);

    // synth
    pipeline::SynthOptions synth_opts;
    std::string kind = "cylinder", pattern = "checkerboard", synth_out;
    double cell = 8.0, pitch = 10.0, dot_radius = 2.5;
    auto* synth_cmd = app.add_subcommand("synth", "generate synthetic scenes and a manifest");
    synth_cmd->add_option("--kind", kind, "surface: flat, cylinder or sine")
        ->check(CLI::IsMember({"flat", "cylinder", "sine"}));
    synth_cmd->add_option("--width", synth_opts.base.width, "image width")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--height", synth_opts.base.height, "image height")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--radius", synth_opts.base.radius, "cylinder radius in pixels (default 0.6 * width)");
    synth_cmd->add_option("--band", synth_opts.base.band_fraction, "visible cylinder band fraction");
    synth_cmd->add_option("--amplitude", synth_opts.base.amplitude, "sine amplitude in pixels");
    synth_cmd->add_option("--wavelength", synth_opts.base.wavelength, "sine wavelength in pixels");
    synth_cmd->add_option("--pattern", pattern, "checkerboard, dots or random")
        ->check(CLI::IsMember({"checkerboard", "dots", "random"}));
    synth_cmd->add_option("--cell", cell, "checkerboard cell size")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--pitch", pitch, "dot grid pitch")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--dot-radius", dot_radius, "dot grid radius")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--individuals", synth_opts.individuals, "re-identification set: number of individuals");
    synth_cmd->add_option("--poses", synth_opts.poses, "re-identification set: poses per individual");
    std::vector<double> pose_radius;
    synth_cmd->add_option("--pose-radius", pose_radius, "re-identification set: radius factor range (min max)")
        ->expected(2);
    synth_cmd->add_option("--pose-phase", synth_opts.variation.phase, "re-identification set: max rotation (radians)");
    synth_cmd->add_option("--pose-offset", synth_opts.variation.offset, "re-identification set: max window shift");
    synth_cmd->add_option("--tau", synth_opts.base.tau, "slope clipping bound")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth_opts.seed, "random seed");
    synth_cmd->add_option("--out", synth_out, "output directory")->required();

    // solve
    pipeline::SolveOptions solve_opts;
    NetFlags solve_net;
    std::string solver = "network", solve_manifest, solve_out;
    std::uint64_t solve_seed = pipeline::kDefaultSeed;
    auto* solve_cmd = app.add_subcommand("solve", "solve an isometric UV map per manifest entry");
    solve_cmd->add_option("--manifest", solve_manifest, "dataset manifest")->required();
    solve_cmd->add_option("--out", solve_out, "output directory for .uvf and .solve.json files")->required();
    solve_cmd->add_option("--solver", solver, "network or grid")->check(CLI::IsMember({"network", "grid"}));
    solve_cmd->add_option("--seed", solve_seed, "network initialisation and shuffling seed");
    solve_cmd->add_option("--threads", solve_opts.threads, "worker threads")->check(CLI::PositiveNumber);
    solve_cmd->add_option("--tau", solve_opts.tau, "slope clipping bound")->check(CLI::PositiveNumber);
    solve_cmd->add_option("--grid-iterations", solve_opts.grid.iterations, "grid solver iterations")
        ->check(CLI::PositiveNumber);
    add_net_flags(solve_cmd, solve_net);

    // unwrap
    pipeline::UnwrapStageOptions unwrap_opts;
    std::string unwrap_manifest, unwrap_uv, unwrap_out;
    auto* unwrap_cmd = app.add_subcommand("unwrap", "rasterize unwrapped textures from solved UV maps");
    unwrap_cmd->add_option("--manifest", unwrap_manifest, "dataset manifest")->required();
    unwrap_cmd->add_option("--uv-dir", unwrap_uv, "directory holding <id>.uvf files")->required();
    unwrap_cmd->add_option("--out", unwrap_out, "output directory")->required();
    unwrap_cmd->add_option("--stride", unwrap_opts.unwrap.stride, "sample every n-th pixel")->check(CLI::PositiveNumber);
    unwrap_cmd->add_option("--max-edge-uv", unwrap_opts.unwrap.filter.max_edge_uv, "longest accepted UV edge");
    unwrap_cmd->add_option("--max-edge-source", unwrap_opts.unwrap.filter.max_source_edge_px,
                           "longest accepted source-pixel edge");
    unwrap_cmd->add_option("--width", unwrap_opts.unwrap.width, "texture width (0: one texel per UV unit)");
    unwrap_cmd->add_option("--height", unwrap_opts.unwrap.height, "texture height (0: one texel per UV unit)");
    unwrap_cmd->add_option("--threads", unwrap_opts.threads, "worker threads")->check(CLI::PositiveNumber);

    // eval
    pipeline::EvalOptions eval_opts;
    std::string eval_manifest, eval_out, scores_orig, scores_unw;
    auto* eval_cmd = app.add_subcommand("eval", "leave-one-out evaluation of original vs unwrapped textures");
    eval_cmd->add_option("--manifest", eval_manifest, "manifest with unwrapped textures")->required();
    eval_cmd->add_option("--out", eval_out, "output directory")->required();
    eval_cmd->add_option("--scores-original", scores_orig, "external score CSV for the original images");
    eval_cmd->add_option("--scores-unwrapped", scores_unw, "external score CSV for the unwrapped textures");
    eval_cmd->add_option("--ratio", eval_opts.matcher.ratio, "ratio test threshold")->check(CLI::Range(1e-9, 1.0));
    eval_cmd->add_option("--name", eval_opts.name, "row name prefix");
    eval_cmd->add_option("--threads", eval_opts.matcher.threads, "worker threads")->check(CLI::PositiveNumber);
    eval_cmd->add_flag("--diagnostics", eval_opts.diagnostics, "write match visualisations");

    // report
    std::string report_in, report_format = "markdown", report_out;
    auto* report_cmd = app.add_subcommand("report", "render an evaluation report.json as a table");
    report_cmd->add_option("--input", report_in, "report.json from eval")->required();
    report_cmd->add_option("--format", report_format, "csv or markdown")->check(CLI::IsMember({"csv", "markdown"}));
    report_cmd->add_option("--out", report_out, "output file (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) {
            auto& base = synth_opts.base;
            base.kind = kind == "flat" ? synth::SurfaceKind::flat
                        : kind == "sine" ? synth::SurfaceKind::sine_sheet
                                         : synth::SurfaceKind::cylinder;
            if (base.kind == synth::SurfaceKind::cylinder && base.radius <= 0.0) base.radius = 0.6 * base.width;
            if (pattern == "checkerboard") base.pattern = synth::Pattern::checkerboard(cell);
            else if (pattern == "dots") base.pattern = synth::Pattern::dot_grid(pitch, dot_radius);
            else base.pattern.kind = synth::PatternKind::random_dots;
            if (pose_radius.size() == 2) {
                synth_opts.variation.radius_min = pose_radius[0];
                synth_opts.variation.radius_max = pose_radius[1];
            }
            synth_opts.out = synth_out;
            const auto path = pipeline::run_synth(synth_opts);
            std::cout << "wrote " << path.string() << "\n";
            return 0;
        }
        if (*solve_cmd) {
            solve_opts.manifest = solve_manifest;
            solve_opts.out = solve_out;
            solve_opts.solver = solver == "grid" ? pipeline::SolverKind::grid : pipeline::SolverKind::network;
            solve_opts.network.seed = solve_seed;
            apply(solve_net, solve_opts.network);
            return pipeline::run_solve(solve_opts, std::cout).exit_code();
        }
        if (*unwrap_cmd) {
            unwrap_opts.manifest = unwrap_manifest;
            unwrap_opts.uv_dir = unwrap_uv;
            unwrap_opts.out = unwrap_out;
            return pipeline::run_unwrap(unwrap_opts, std::cout).exit_code();
        }
        if (*eval_cmd) {
            eval_opts.manifest = eval_manifest;
            eval_opts.out = eval_out;
            if (!scores_orig.empty()) eval_opts.scores_original = scores_orig;
            if (!scores_unw.empty()) eval_opts.scores_unwrapped = scores_unw;
            (void)pipeline::run_eval(eval_opts, std::cout);
            return 0;
        }
        if (*report_cmd) {
            std::ifstream in(report_in);
            if (!in) throw Error("cannot open report: " + report_in);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(in);
            } catch (const nlohmann::json::parse_error& e) {
                throw Error(std::string("report is not valid JSON: ") + e.what());
            }
            const auto text = eval::emit_report(pipeline::report_from_json(j),
                                                report_format == "csv" ? eval::ReportFormat::csv
                                                                       : eval::ReportFormat::markdown);
            if (report_out.empty()) std::cout << text;
            else io::write_text(report_out, text);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
