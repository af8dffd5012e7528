#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attrscan/bundle_io.hpp"
#include "attrscan/embedding.hpp"
#include "attrscan/evaluation.hpp"
#include "attrscan/slicing.hpp"
#include "attrscan/spuriousness.hpp"
#include "json.hpp"

namespace attrscan {

// Everything a project directory records about how it was built. Serialized as
// config.json with the sections "embedding", "slicing", "spread" and "noise".
struct ProjectConfig {
    EmbeddingConfig embedding;
    SliceConfig slicing;
    SpreadConfig spread;
    NoiseConfig noise;
    bool use_precomputed_embedding = true;  // honor the bundle's embedding_path when present
};

nlohmann::json to_json(const EmbeddingConfig& c);
nlohmann::json to_json(const SliceConfig& c);
nlohmann::json to_json(const SpreadConfig& c);
nlohmann::json to_json(const NoiseConfig& c);
nlohmann::json to_json(const ProjectConfig& c);
nlohmann::json to_json(const SliceSet& s, const std::vector<std::string>& class_names, std::uint32_t positive_class);
nlohmann::json to_json(const SpuriousnessField& f);
nlohmann::json to_json(const EvaluationReport& r);

// Missing keys keep the values already in `base`.
ProjectConfig config_from_json(const nlohmann::json& j, ProjectConfig base = {});
ProjectConfig load_config_file(const std::filesystem::path& path, ProjectConfig base = {});

SliceSet slice_set_from_json(const nlohmann::json& j);
SpuriousnessField field_from_json(const nlohmann::json& j);

namespace project_files {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kBundleRef = "bundle.json";
inline constexpr const char* kVectors = "weighted_vectors.atsc";
inline constexpr const char* kEmbedding = "embedding.atsc";
inline constexpr const char* kEmbeddingInfo = "embedding.json";
inline constexpr const char* kSlices = "slices.json";
inline constexpr const char* kAnnotations = "annotations.jsonl";
inline constexpr const char* kSpuriousness = "spuriousness.json";
inline constexpr const char* kAudit = "audit.jsonl";
inline constexpr const char* kTiles = "tiles.json";
inline constexpr const char* kReport = "report.json";
}  // namespace project_files

struct ProjectState {
    std::filesystem::path dir;
    std::filesystem::path bundle_root;
    ProjectConfig config;
    ValidationBundle bundle;
    std::vector<WeightedVector> vectors;
    Embedding2D embedding;
    SliceSet slices;
    std::optional<SpuriousnessField> field;
    std::map<std::size_t, std::string> tiles;  // slice id -> tile image path

    std::uint64_t field_version() const noexcept { return field ? field->version : 0; }
    std::filesystem::path annotation_log() const { return dir / project_files::kAnnotations; }
};

// weighted vectors -> embedding -> slices -> hulls -> metrics, persisted into
// project_dir. Stage failures are rethrown with the stage name prefixed.
// Idempotent: identical inputs and seeds give byte-identical artifacts.
ProjectState build_project(const std::filesystem::path& bundle_root, const std::filesystem::path& project_dir,
                           const ProjectConfig& config);

ProjectState load_project(const std::filesystem::path& project_dir);

// Appends to the annotation log and the audit trail.
Annotation record_annotation(ProjectState& state, std::size_t slice_id, Verdict verdict, std::string note = {},
                             std::string author = {});

// Replays the annotation log, propagates, writes spuriousness.json and audits.
SpuriousnessField run_propagation(ProjectState& state);

CorruptionResult export_corruption(ProjectState& state, const CorruptionSelection& selection,
                                   const NoiseConfig& noise, const std::filesystem::path& out_root);

void register_tile(ProjectState& state, std::size_t slice_id, const std::string& path);

// Recomputes every propagation recorded in the audit trail from scratch and
// returns the last field; equals the persisted field for an untampered project.
std::optional<SpuriousnessField> replay_audit(const std::filesystem::path& project_dir);

struct SpaceConsistency {
    std::string space;
    double feature_similarity = 0.0;
    double attribution_similarity = 0.0;
};

// Neighbor consistency of the feature space (embedded pooled features) and the
// attribution space (embedded weighted vectors).
std::vector<SpaceConsistency> compare_spaces(const ValidationBundle& bundle, const EmbeddingConfig& config,
                                             std::size_t k_neighbors = 10);

}  // namespace attrscan
