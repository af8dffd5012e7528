#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "attrscan/bundle_io.hpp"
#include "attrscan/error.hpp"
#include "attrscan/evaluation.hpp"
#include "attrscan/fixtures.hpp"
#include "attrscan/project.hpp"
#include "attrscan/server.hpp"

namespace fs = std::filesystem;
using namespace attrscan;

namespace {

struct BuildArgs {
    std::string bundle, project, config, preset;
    std::optional<std::size_t> override_k, n_neighbors, epochs;
    std::optional<double> min_dist;
    std::optional<std::uint64_t> seed;
    bool ignore_precomputed = false;
};

int cmd_build(const BuildArgs& a) {
    ProjectConfig config;
    const fs::path in_project = fs::path(a.project) / project_files::kConfig;
    if (!a.config.empty()) {
        config = load_config_file(a.config);
    } else if (fs::is_regular_file(in_project)) {
        config = load_config_file(in_project);
    }
    if (!a.preset.empty()) {
        const auto p = EmbeddingConfig::preset(a.preset);
        config.embedding.n_neighbors = p.n_neighbors;
        config.embedding.min_dist = p.min_dist;
    }
    if (a.n_neighbors) config.embedding.n_neighbors = *a.n_neighbors;
    if (a.min_dist) config.embedding.min_dist = *a.min_dist;
    if (a.epochs) config.embedding.epochs = *a.epochs;
    if (a.seed) {
        config.embedding.seed = *a.seed;
        config.slicing.seed = *a.seed;
    }
    if (a.override_k) config.slicing.override_k = *a.override_k;
    if (a.ignore_precomputed) config.use_precomputed_embedding = false;

    const auto state = build_project(a.bundle, a.project, config);
    std::cout << "samples " << state.bundle.size() << "\n"
              << "slices " << state.slices.slices.size() << "\n"
              << "converged " << (state.slices.converged ? "true" : "false") << "\n";
    if (!state.slices.incoherent_ids.empty()) {
        std::cout << "incoherent_slices " << state.slices.incoherent_ids.size() << "\n";
    }
    return 0;
}

int cmd_serve(const std::string& project, const std::string& host, int port) {
    if (const char* env = std::getenv("ATTRSCAN_PORT"); env && *env) port = std::stoi(env);
    serve(project, host, port);
    return 0;
}

int cmd_annotate(const std::string& project, std::size_t slice, const std::string& verdict, const std::string& note,
                 const std::string& author) {
    auto state = load_project(project);
    const auto a = record_annotation(state, slice, parse_verdict(verdict), note, author);
    std::cout << a.timestamp << "\tslice " << a.slice_id << "\t" << to_string(a.verdict) << "\n";
    return 0;
}

int cmd_propagate(const std::string& project) {
    auto state = load_project(project);
    const auto field = run_propagation(state);
    std::cout << "version " << field.version << "\n" << "iterations " << field.iterations << "\n";
    std::cout << "slice\tspuriousness\n";
    for (const auto& [id, p] : field.per_slice) std::cout << id << "\t" << std::fixed << std::setprecision(6) << p << "\n";
    return 0;
}

int cmd_corrupt(const std::string& project, std::optional<double> tau, const std::vector<std::size_t>& slices,
                const std::string& out, std::optional<double> sigma_z, const std::string& target,
                std::optional<std::uint64_t> seed) {
    auto state = load_project(project);
    NoiseConfig noise = state.config.noise;
    if (sigma_z) noise.sigma_z = *sigma_z;
    if (!target.empty()) noise.target = parse_noise_target(target);
    if (seed) noise.seed = *seed;
    CorruptionSelection selection{slices, tau};
    const auto r = export_corruption(state, selection, noise, out);
    if (r.selected_slices.empty()) {
        std::cerr << "warning: selection is empty; wrote an unchanged copy of the bundle\n";
    }
    std::cout << "selected_slices " << r.selected_slices.size() << "\n"
              << "corrupted_samples " << r.corrupted_samples.size() << "\n"
              << "out " << r.root.string() << "\n";
    return 0;
}

int cmd_report(const std::string& clean, const std::string& core, const std::string& spurious,
               const std::string& bundle, const std::string& labels_path, const std::string& project) {
    LabelMap labels;
    if (!labels_path.empty()) {
        labels = read_labels(labels_path);
    } else if (!bundle.empty()) {
        labels = labels_of(read_bundle(bundle));
    } else if (!project.empty()) {
        labels = labels_of(load_project(project).bundle);
    } else {
        throw Error(ErrorCode::InvalidArgument, "one of --labels, --bundle or --project is required");
    }
    const auto report = build_report(clean, core, spurious, labels);
    std::cout << format_report(report);
    if (!project.empty()) {
        std::ofstream out(fs::path(project) / project_files::kReport);
        out << to_json(report).dump(2) << "\n";
    }
    return 0;
}

int cmd_consistency(const std::string& bundle, const std::string& preset, std::size_t k,
                    std::optional<std::uint64_t> seed) {
    EmbeddingConfig config = preset.empty() ? EmbeddingConfig{} : EmbeddingConfig::preset(preset);
    if (seed) config.seed = *seed;
    const auto rows = compare_spaces(read_bundle(bundle), config, k);
    std::cout << "space\tfeature_similarity\tattribution_similarity\n";
    for (const auto& r : rows) {
        std::cout << r.space << "\t" << std::fixed << std::setprecision(6) << r.feature_similarity << "\t"
                  << r.attribution_similarity << "\n";
    }
    return 0;
}

int cmd_fixture(const std::string& kind, const std::string& out, std::size_t samples, std::uint64_t seed) {
    ValidationBundle bundle;
    if (kind == "random") {
        bundle = fixtures::random_bundle(samples, 8, 4, 4, seed, true);
    } else if (kind == "two-mode") {
        bundle = fixtures::two_mode_bundle(samples, seed).bundle;
    } else if (kind == "biased") {
        bundle = fixtures::biased_bundle(samples, seed).bundle;
    } else if (kind == "pocket") {
        bundle = fixtures::pocket_bundle(6, std::max<std::size_t>(samples / 36, 1), seed).bundle;
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown fixture kind " + kind);
    }
    write_bundle(bundle, out);
    std::cout << "wrote " << bundle.size() << " samples to " << out << "\n";
    return 0;
}

int cmd_replay(const std::string& project) {
    const auto replayed = replay_audit(project);
    if (!replayed) {
        std::cout << "no propagation recorded\n";
        return 0;
    }
    const auto state = load_project(project);
    const bool match = state.field && to_json(*state.field).at("per_point") == to_json(*replayed).at("per_point") &&
                       state.field->version == replayed->version;
    std::cout << "version " << replayed->version << "\n" << "matches_persisted " << (match ? "true" : "false") << "\n";
    return match ? 0 : 1;
}

int cmd_tile(const std::string& project, std::size_t slice, const std::string& path) {
    auto state = load_project(project);
    register_tile(state, slice, path);
    std::cout << "slice " << slice << " -> " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attribution-space slice discovery and spuriousness annotation"};
    app.require_subcommand(1);

    BuildArgs build;
    auto* b = app.add_subcommand("build", "Embed, slice and persist a project from a validation bundle");
    b->add_option("--bundle", build.bundle, "Validation bundle root")->required();
    b->add_option("--project", build.project, "Project directory to write")->required();
    b->add_option("--config", build.config, "Config JSON (defaults to <project>/config.json when present)");
    b->add_option("--preset", build.preset, "Embedding preset: celeba or waterbirds");
    b->add_option("--override-k", build.override_k, "Fixed number of K-Means clusters");
    b->add_option("--n-neighbors", build.n_neighbors);
    b->add_option("--min-dist", build.min_dist);
    b->add_option("--epochs", build.epochs);
    b->add_option("--seed", build.seed, "Seed for embedding and clustering");
    b->add_flag("--ignore-precomputed", build.ignore_precomputed, "Recompute the embedding even if the bundle has one");

    std::string project, host = "127.0.0.1";
    int port = 8080;
    auto* s = app.add_subcommand("serve", "Serve a built project over HTTP");
    s->add_option("--project", project)->required();
    s->add_option("--port", port, "Port (ATTRSCAN_PORT overrides)");
    s->add_option("--host", host);

    std::size_t slice = 0;
    std::string verdict, note, author;
    auto* an = app.add_subcommand("annotate", "Append a slice verdict to the annotation log");
    an->add_option("--project", project)->required();
    an->add_option("--slice", slice)->required();
    an->add_option("--verdict", verdict, "core or spurious")->required();
    an->add_option("--note", note);
    an->add_option("--author", author);

    auto* p = app.add_subcommand("propagate", "Spread annotations to every sample");
    p->add_option("--project", project)->required();

    std::optional<double> tau, sigma_z;
    std::vector<std::size_t> slice_ids;
    std::string out, target;
    std::optional<std::uint64_t> seed;
    auto* c = app.add_subcommand("corrupt", "Write a corrupted copy of the bundle");
    c->add_option("--project", project)->required();
    auto* tau_opt = c->add_option("--tau", tau, "Select slices with spuriousness >= tau");
    auto* slices_opt = c->add_option("--slices", slice_ids, "Explicit slice ids")->delimiter(',');
    tau_opt->excludes(slices_opt);
    c->add_option("--out", out)->required();
    c->add_option("--sigma-z", sigma_z);
    c->add_option("--target", target, "spurious_regions or core_regions");
    c->add_option("--noise-seed", seed);

    std::string clean, core, spurious, bundle, labels;
    auto* r = app.add_subcommand("report", "Clean/core/spurious accuracy and RCS from prediction files");
    r->add_option("--clean", clean)->required();
    r->add_option("--core", core)->required();
    r->add_option("--spurious", spurious)->required();
    r->add_option("--bundle", bundle);
    r->add_option("--labels", labels, "TSV of id<TAB>label");
    r->add_option("--project", project, "Take labels from the project and store report.json");

    std::string preset;
    std::size_t k = 10;
    auto* n = app.add_subcommand("consistency", "Neighbor consistency of feature vs attribution space");
    n->add_option("--bundle", bundle)->required();
    n->add_option("--preset", preset);
    n->add_option("-k,--neighbors", k);
    n->add_option("--seed", seed);

    std::string kind;
    std::size_t samples = 200;
    std::uint64_t fixture_seed = 0;
    auto* f = app.add_subcommand("fixture", "Write a synthetic validation bundle");
    f->add_option("--kind", kind, "random, two-mode, biased or pocket")->required();
    f->add_option("--out", out)->required();
    f->add_option("--samples", samples);
    f->add_option("--seed", fixture_seed);

    auto* rp = app.add_subcommand("replay", "Recompute the spuriousness field from the audit trail");
    rp->add_option("--project", project)->required();

    std::string tile_path;
    auto* t = app.add_subcommand("tile", "Register a mosaic tile image for a slice");
    t->add_option("--project", project)->required();
    t->add_option("--slice", slice)->required();
    t->add_option("--path", tile_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*b) return cmd_build(build);
        if (*s) return cmd_serve(project, host, port);
        if (*an) return cmd_annotate(project, slice, verdict, note, author);
        if (*p) return cmd_propagate(project);
        if (*c) {
            if (!tau && slice_ids.empty()) throw Error(ErrorCode::InvalidArgument, "one of --tau or --slices is required");
            return cmd_corrupt(project, tau, slice_ids, out, sigma_z, target, seed);
        }
        if (*r) return cmd_report(clean, core, spurious, bundle, labels, project);
        if (*n) return cmd_consistency(bundle, preset, k, seed);
        if (*f) return cmd_fixture(kind, out, samples, fixture_seed);
        if (*rp) return cmd_replay(project);
        if (*t) return cmd_tile(project, slice, tile_path);
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
