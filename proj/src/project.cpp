#include "attrscan/project.hpp"

#include <fstream>
#include <sstream>

#include "attrscan/attribution.hpp"
#include "attrscan/bundle_io.hpp"
#include "attrscan/error.hpp"

namespace attrscan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << text;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void append_audit(const ProjectState& state, json event) {
    std::size_t seq = 0;
    if (std::ifstream in(state.dir / project_files::kAudit); in) {
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) ++seq;
        }
    }
    event["seq"] = seq;
    std::ofstream out(state.dir / project_files::kAudit, std::ios::app);
    if (!out) throw Error(ErrorCode::Io, "cannot append audit trail");
    out << event.dump() << '\n';
}

template <typename F>
auto stage(const char* name, F&& body) {
    try {
        return body();
    } catch (const Error& e) {
        throw Error(e.code(), std::string("stage '") + name + "': " + e.what());
    }
}

json points_json(const Polygon& p) {
    json out = json::array();
    for (const auto& v : p) out.push_back({v.x, v.y});
    return out;
}

Polygon polygon_from_json(const json& j) {
    Polygon p;
    for (const auto& v : j) p.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    return p;
}

ConfusionCell cell_from_string(const std::string& s) {
    for (auto c : {ConfusionCell::TruePositive, ConfusionCell::FalsePositive, ConfusionCell::TrueNegative,
                   ConfusionCell::FalseNegative, ConfusionCell::Correct, ConfusionCell::Incorrect}) {
        if (to_string(c) == s) return c;
    }
    throw Error(ErrorCode::ParseError, "unknown confusion cell " + s);
}

Matrix vectors_matrix(const std::vector<WeightedVector>& vectors) { return rows_to_matrix(vectors); }

SpuriousnessField load_field(const fs::path& dir) { return field_from_json(read_json(dir / project_files::kSpuriousness)); }

}  // namespace

json to_json(const EmbeddingConfig& c) {
    return {{"n_neighbors", c.n_neighbors}, {"min_dist", c.min_dist}, {"n_components", c.n_components},
            {"seed", c.seed},               {"epochs", c.epochs}};
}

json to_json(const SliceConfig& c) {
    return {{"initial_k", c.initial_k},
            {"coherence_threshold", c.coherence_threshold},
            {"k_step", c.k_step},
            {"k_max", c.k_max},
            {"seed", c.seed},
            {"override_k", c.override_k ? json(*c.override_k) : json(nullptr)}};
}

json to_json(const SpreadConfig& c) {
    return {{"alpha", c.alpha},
            {"sigma_mode", c.sigma_mode == SigmaMode::Fixed ? "fixed" : "median_heuristic"},
            {"sigma", c.sigma},
            {"knn", c.knn},
            {"tol", c.tol},
            {"max_iter", c.max_iter},
            {"dense_limit", c.dense_limit}};
}

json to_json(const NoiseConfig& c) {
    return {{"sigma_z", c.sigma_z},
            {"relative_to_range", c.relative_to_range},
            {"seed", c.seed},
            {"target", std::string(to_string(c.target))}};
}

json to_json(const ProjectConfig& c) {
    return {{"embedding", to_json(c.embedding)},
            {"slicing", to_json(c.slicing)},
            {"spread", to_json(c.spread)},
            {"noise", to_json(c.noise)},
            {"use_precomputed_embedding", c.use_precomputed_embedding}};
}

ProjectConfig config_from_json(const json& j, ProjectConfig c) {
    try {
        if (j.contains("embedding")) {
            const auto& e = j["embedding"];
            if (e.contains("preset")) c.embedding = EmbeddingConfig::preset(e["preset"].get<std::string>());
            c.embedding.n_neighbors = e.value("n_neighbors", c.embedding.n_neighbors);
            c.embedding.min_dist = e.value("min_dist", c.embedding.min_dist);
            c.embedding.n_components = e.value("n_components", c.embedding.n_components);
            c.embedding.seed = e.value("seed", c.embedding.seed);
            c.embedding.epochs = e.value("epochs", c.embedding.epochs);
        }
        if (j.contains("slicing")) {
            const auto& s = j["slicing"];
            c.slicing.initial_k = s.value("initial_k", c.slicing.initial_k);
            c.slicing.coherence_threshold = s.value("coherence_threshold", c.slicing.coherence_threshold);
            c.slicing.k_step = s.value("k_step", c.slicing.k_step);
            c.slicing.k_max = s.value("k_max", c.slicing.k_max);
            c.slicing.seed = s.value("seed", c.slicing.seed);
            if (s.contains("override_k")) {
                c.slicing.override_k = s["override_k"].is_null()
                                           ? std::nullopt
                                           : std::optional<std::size_t>(s["override_k"].get<std::size_t>());
            }
        }
        if (j.contains("spread")) {
            const auto& s = j["spread"];
            c.spread.alpha = s.value("alpha", c.spread.alpha);
            if (s.contains("sigma_mode")) {
                const auto mode = s["sigma_mode"].get<std::string>();
                if (mode == "fixed") {
                    c.spread.sigma_mode = SigmaMode::Fixed;
                } else if (mode == "median_heuristic") {
                    c.spread.sigma_mode = SigmaMode::MedianHeuristic;
                } else {
                    throw Error(ErrorCode::InvalidArgument, "unknown sigma_mode " + mode);
                }
            }
            c.spread.sigma = s.value("sigma", c.spread.sigma);
            c.spread.knn = s.value("knn", c.spread.knn);
            c.spread.tol = s.value("tol", c.spread.tol);
            c.spread.max_iter = s.value("max_iter", c.spread.max_iter);
            c.spread.dense_limit = s.value("dense_limit", c.spread.dense_limit);
        }
        if (j.contains("noise")) {
            const auto& s = j["noise"];
            c.noise.sigma_z = s.value("sigma_z", c.noise.sigma_z);
            c.noise.relative_to_range = s.value("relative_to_range", c.noise.relative_to_range);
            c.noise.seed = s.value("seed", c.noise.seed);
            if (s.contains("target")) c.noise.target = parse_noise_target(s["target"].get<std::string>());
        }
        c.use_precomputed_embedding = j.value("use_precomputed_embedding", c.use_precomputed_embedding);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("config: ") + e.what());
    }
    return c;
}

ProjectConfig load_config_file(const fs::path& path, ProjectConfig base) { return config_from_json(read_json(path), base); }

json to_json(const SliceSet& set, const std::vector<std::string>& class_names, std::uint32_t positive_class) {
    json slices = json::array();
    for (const auto& s : set.slices) {
        json cells = json::object();
        for (const auto& [cell, members] : s.confusion_cells) cells[std::string(to_string(cell))] = members;
        slices.push_back({{"id", s.id},
                          {"members", s.members},
                          {"centroid_2d", {s.centroid_2d.x, s.centroid_2d.y}},
                          {"centroid_wv", s.centroid_wv},
                          {"coherence", s.coherence},
                          {"hull", points_json(s.hull.vertices)},
                          {"degenerate", s.hull.degenerate},
                          {"accuracy", s.accuracy},
                          {"mean_confidence", s.mean_confidence},
                          {"confusion_cells", cells}});
    }
    return {{"slices", slices},
            {"assignment", set.assignment},
            {"config", to_json(set.config)},
            {"converged", set.converged},
            {"incoherent_ids", set.incoherent_ids},
            {"k_trace", set.k_trace},
            {"class_names", class_names},
            {"positive_class", positive_class}};
}

SliceSet slice_set_from_json(const json& j) {
    SliceSet set;
    try {
        for (const auto& s : j.at("slices")) {
            Slice slice;
            slice.id = s.at("id").get<std::size_t>();
            slice.members = s.at("members").get<std::vector<std::size_t>>();
            slice.centroid_2d = {s.at("centroid_2d").at(0).get<double>(), s.at("centroid_2d").at(1).get<double>()};
            slice.centroid_wv = s.at("centroid_wv").get<std::vector<double>>();
            slice.coherence = s.at("coherence").get<double>();
            slice.hull.vertices = polygon_from_json(s.at("hull"));
            slice.hull.degenerate = s.at("degenerate").get<bool>();
            slice.accuracy = s.at("accuracy").get<double>();
            slice.mean_confidence = s.at("mean_confidence").get<double>();
            for (const auto& [name, members] : s.at("confusion_cells").items()) {
                slice.confusion_cells[cell_from_string(name)] = members.get<std::vector<std::size_t>>();
            }
            set.slices.push_back(std::move(slice));
        }
        set.assignment = j.at("assignment").get<std::vector<std::size_t>>();
        set.config = config_from_json(json{{"slicing", j.at("config")}}).slicing;
        set.converged = j.at("converged").get<bool>();
        set.incoherent_ids = j.at("incoherent_ids").get<std::vector<std::size_t>>();
        set.k_trace = j.at("k_trace").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("slices.json: ") + e.what());
    }
    return set;
}

json to_json(const SpuriousnessField& f) {
    json per_slice = json::object();
    for (const auto& [id, p] : f.per_slice) per_slice[std::to_string(id)] = p;
    json annotations = json::array();
    for (const auto& a : f.annotations) {
        annotations.push_back({{"timestamp", a.timestamp},
                               {"slice_id", a.slice_id},
                               {"verdict", std::string(to_string(a.verdict))},
                               {"note", a.note},
                               {"author", a.author}});
    }
    return {{"version", f.version},     {"per_point", f.per_point},   {"per_slice", per_slice},
            {"config", to_json(f.config)}, {"annotations", annotations}, {"iterations", f.iterations}};
}

SpuriousnessField field_from_json(const json& j) {
    SpuriousnessField f;
    try {
        f.version = j.at("version").get<std::uint64_t>();
        f.per_point = j.at("per_point").get<std::vector<double>>();
        for (const auto& [id, p] : j.at("per_slice").items()) f.per_slice[std::stoul(id)] = p.get<double>();
        f.config = config_from_json(json{{"spread", j.at("config")}}).spread;
        for (const auto& a : j.at("annotations")) {
            f.annotations.push_back({a.at("timestamp").get<std::string>(), a.at("slice_id").get<std::size_t>(),
                                     parse_verdict(a.at("verdict").get<std::string>()), a.at("note").get<std::string>(),
                                     a.at("author").get<std::string>()});
        }
        f.iterations = j.value("iterations", std::size_t{0});
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("spuriousness.json: ") + e.what());
    }
    return f;
}

json to_json(const EvaluationReport& r) {
    return {{"clean_acc", r.clean_acc},
            {"core_acc", r.core_acc},
            {"spurious_acc", r.spurious_acc},
            {"rcs", r.rcs},
            {"provenance", r.provenance}};
}

ProjectState build_project(const fs::path& bundle_root, const fs::path& project_dir, const ProjectConfig& config) {
    ProjectState state;
    state.dir = project_dir;
    state.bundle_root = fs::absolute(bundle_root);
    state.config = config;

    stage("config", [&] {
        config.embedding.validate();
        config.slicing.validate();
        config.spread.validate();
        config.noise.validate();
        return 0;
    });
    state.bundle = stage("bundle", [&] { return read_bundle(bundle_root); });
    state.vectors = stage("weighted-vectors", [&] { return weighted_vectors(state.bundle.attribution_samples()); });
    const Matrix vectors = to_matrix(to_tensor(vectors_matrix(state.vectors)));
    for (std::size_t i = 0; i < vectors.rows(); ++i) {
        state.vectors[i].assign(vectors.row(i).begin(), vectors.row(i).end());
    }
    state.embedding = stage("embedding", [&] {
        if (config.use_precomputed_embedding && state.bundle.embedding) {
            return precomputed_embedding(*state.bundle.embedding, config.embedding);
        }
        auto e = embed(vectors, config.embedding);
        // Slice on the coordinates as persisted so a reloaded project matches.
        e.coords = to_matrix(to_tensor(e.coords));
        return e;
    });
    state.slices = stage("slicing", [&] {
        auto set = find_slices(state.embedding.coords, state.vectors, config.slicing);
        std::vector<std::uint32_t> labels, predictions;
        std::vector<double> confidences;
        for (const auto& s : state.bundle.manifest.samples) {
            labels.push_back(s.label);
            predictions.push_back(s.prediction);
            confidences.push_back(s.confidence);
        }
        attach_slice_details(set, state.embedding.coords, labels, predictions, confidences,
                             state.bundle.manifest.positive_class, state.bundle.manifest.class_names.size());
        return set;
    });

    stage("persist", [&] {
        fs::create_directories(project_dir);
        write_json(project_dir / project_files::kConfig, to_json(config));
        write_json(project_dir / project_files::kBundleRef, {{"root", state.bundle_root.string()},
                                                            {"hash", std::to_string(bundle_hash(state.bundle))}});
        write_tensor(to_tensor(vectors), project_dir / project_files::kVectors);
        write_tensor(to_tensor(state.embedding.coords), project_dir / project_files::kEmbedding);
        write_json(project_dir / project_files::kEmbeddingInfo,
                   {{"source", state.embedding.source == EmbeddingSource::Computed ? "computed" : "precomputed"},
                    {"config", to_json(state.embedding.config)}});
        write_json(project_dir / project_files::kSlices,
                   to_json(state.slices, state.bundle.manifest.class_names, state.bundle.manifest.positive_class));
        // A rebuild invalidates slice ids, so annotation state starts over.
        for (const char* stale : {project_files::kAnnotations, project_files::kSpuriousness, project_files::kAudit}) {
            fs::remove(project_dir / stale);
        }
        return 0;
    });
    return state;
}

ProjectState load_project(const fs::path& project_dir) {
    if (!fs::is_regular_file(project_dir / project_files::kSlices)) {
        throw Error(ErrorCode::Io, project_dir.string() + " is not a built project");
    }
    ProjectState state;
    state.dir = project_dir;
    state.config = load_config_file(project_dir / project_files::kConfig);
    state.bundle_root = read_json(project_dir / project_files::kBundleRef).at("root").get<std::string>();
    state.bundle = read_bundle(state.bundle_root);
    const Matrix vectors = to_matrix(read_tensor(project_dir / project_files::kVectors));
    for (std::size_t i = 0; i < vectors.rows(); ++i) state.vectors.emplace_back(vectors.row(i).begin(), vectors.row(i).end());
    const auto info = read_json(project_dir / project_files::kEmbeddingInfo);
    state.embedding.coords = to_matrix(read_tensor(project_dir / project_files::kEmbedding));
    state.embedding.config = config_from_json(json{{"embedding", info.at("config")}}).embedding;
    state.embedding.source =
        info.at("source").get<std::string>() == "computed" ? EmbeddingSource::Computed : EmbeddingSource::Precomputed;
    state.slices = slice_set_from_json(read_json(project_dir / project_files::kSlices));
    if (state.slices.assignment.size() != state.bundle.size()) {
        throw Error(ErrorCode::ShapeMismatch, "project slices do not match the referenced bundle");
    }
    if (fs::is_regular_file(project_dir / project_files::kSpuriousness)) state.field = load_field(project_dir);
    if (fs::is_regular_file(project_dir / project_files::kTiles)) {
        const json tiles = read_json(project_dir / project_files::kTiles);
        for (const auto& [id, path] : tiles.items()) {
            state.tiles[std::stoul(id)] = path.get<std::string>();
        }
    }
    return state;
}

Annotation record_annotation(ProjectState& state, std::size_t slice_id, Verdict verdict, std::string note,
                             std::string author) {
    if (slice_id >= state.slices.slices.size()) {
        throw Error(ErrorCode::InvalidArgument, "unknown slice " + std::to_string(slice_id));
    }
    Annotation a{now_rfc3339(), slice_id, verdict, std::move(note), std::move(author)};
    append_annotation(state.annotation_log(), a);
    append_audit(state, {{"event", "annotation"},
                         {"timestamp", a.timestamp},
                         {"slice_id", a.slice_id},
                         {"verdict", std::string(to_string(a.verdict))},
                         {"note", a.note},
                         {"author", a.author}});
    return a;
}

SpuriousnessField run_propagation(ProjectState& state) {
    const auto annotations = replay_annotations(state.annotation_log());
    auto field = propagate(annotations, state.slices, state.embedding.coords, state.config.spread, state.field_version());
    write_json(state.dir / project_files::kSpuriousness, to_json(field));
    append_audit(state, {{"event", "propagate"},
                         {"timestamp", now_rfc3339()},
                         {"version", field.version},
                         {"annotation_count", annotations.size()},
                         {"spread", to_json(state.config.spread)}});
    state.field = field;
    return field;
}

CorruptionResult export_corruption(ProjectState& state, const CorruptionSelection& selection,
                                   const NoiseConfig& noise, const fs::path& out_root) {
    const SpuriousnessField* field = state.field ? &*state.field : nullptr;
    auto result = make_corrupted_bundle(state.bundle, state.slices, field, selection, noise, out_root);
    append_audit(state, {{"event", "corruption"},
                         {"timestamp", now_rfc3339()},
                         {"out", fs::absolute(out_root).string()},
                         {"selected_slices", result.selected_slices},
                         {"corrupted_samples", result.corrupted_samples.size()},
                         {"field_version", state.field_version()},
                         {"noise", to_json(noise)}});
    return result;
}

void register_tile(ProjectState& state, std::size_t slice_id, const std::string& path) {
    if (slice_id >= state.slices.slices.size()) {
        throw Error(ErrorCode::InvalidArgument, "unknown slice " + std::to_string(slice_id));
    }
    state.tiles[slice_id] = path;
    json j = json::object();
    for (const auto& [id, p] : state.tiles) j[std::to_string(id)] = p;
    write_json(state.dir / project_files::kTiles, j);
}

std::optional<SpuriousnessField> replay_audit(const fs::path& project_dir) {
    ProjectState state = load_project(project_dir);
    std::ifstream in(project_dir / project_files::kAudit);
    std::vector<Annotation> annotations;
    std::optional<SpuriousnessField> field;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto e = json::parse(line);
        const auto kind = e.at("event").get<std::string>();
        if (kind == "annotation") {
            annotations.push_back({e.at("timestamp").get<std::string>(), e.at("slice_id").get<std::size_t>(),
                                   parse_verdict(e.at("verdict").get<std::string>()), e.at("note").get<std::string>(),
                                   e.at("author").get<std::string>()});
        } else if (kind == "propagate") {
            const auto spread = config_from_json(json{{"spread", e.at("spread")}}).spread;
            field = propagate(annotations, state.slices, state.embedding.coords, spread, field ? field->version : 0);
        }
    }
    return field;
}

std::vector<SpaceConsistency> compare_spaces(const ValidationBundle& bundle, const EmbeddingConfig& config,
                                             std::size_t k_neighbors) {
    const auto samples = bundle.attribution_samples();
    std::vector<std::vector<double>> pooled;
    for (const auto& s : samples) pooled.push_back(pooled_features(s.features));
    const auto feature_space = embed(rows_to_matrix(pooled), config);
    const auto attribution_space = embed(rows_to_matrix(weighted_vectors(samples)), config);

    std::vector<SpaceConsistency> out;
    for (const auto& [name, space] : {std::pair{"feature", &feature_space}, std::pair{"attribution", &attribution_space}}) {
        const auto nc = neighbor_consistency(space->coords, samples, k_neighbors);
        out.push_back({name, nc.mean_feature_similarity, nc.mean_attribution_similarity});
    }
    return out;
}

}  // namespace attrscan
