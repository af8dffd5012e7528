#include <filesystem>
#include <fstream>
#include <sstream>

#include "attrscan/error.hpp"
#include "attrscan/evaluation.hpp"
#include "attrscan/fixtures.hpp"
#include "attrscan/project.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace attrscan;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ProjectConfig quick_config() {
    ProjectConfig c;
    c.embedding.epochs = 60;
    return c;
}

}  // namespace

TEST_CASE("config json round trip and partial overrides") {
    ProjectConfig c;
    c.embedding = EmbeddingConfig::preset("waterbirds");
    c.slicing.override_k = 12;
    c.spread.sigma_mode = SigmaMode::Fixed;
    c.spread.sigma = 0.5;
    c.noise.target = NoiseTarget::CoreRegions;
    const auto back = config_from_json(to_json(c));
    CHECK(back.embedding == c.embedding);
    CHECK(back.slicing == c.slicing);
    CHECK(back.spread == c.spread);
    CHECK(back.noise == c.noise);

    const auto partial = config_from_json(nlohmann::json::parse(R"({"embedding": {"preset": "celeba", "seed": 7},
                                                                     "slicing": {"coherence_threshold": 0.5}})"));
    CHECK(partial.embedding.n_neighbors == 5);
    CHECK(partial.embedding.min_dist == 0.01);
    CHECK(partial.embedding.seed == 7);
    CHECK(partial.slicing.coherence_threshold == 0.5);
    CHECK(partial.slicing.initial_k == 20);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"spread": {"sigma_mode": "guess"}})")), Error);
}

TEST_CASE("build persists a fixed number of slices and reruns byte-identically") {
    oracle::TempDir dir("project");
    write_bundle(fixtures::biased_bundle(240, 3).bundle, dir / "bundle");
    ProjectConfig c = quick_config();
    c.embedding = EmbeddingConfig::preset("celeba");
    c.embedding.epochs = 60;
    c.slicing.override_k = 50;
    const auto state = build_project(dir / "bundle", dir / "p1", c);
    CHECK(state.slices.slices.size() == 50);
    const auto loaded = load_project(dir / "p1");
    CHECK(loaded.slices.slices.size() == 50);
    CHECK(loaded.embedding.coords == state.embedding.coords);
    CHECK(loaded.config.embedding.n_neighbors == 5);

    build_project(dir / "bundle", dir / "p2", c);
    for (const char* name : {project_files::kConfig, project_files::kVectors, project_files::kEmbedding,
                             project_files::kEmbeddingInfo, project_files::kSlices}) {
        CAPTURE(name);
        CHECK(slurp(dir / "p1" / name) == slurp(dir / "p2" / name));
    }
}

TEST_CASE("stage failures carry the stage name") {
    oracle::TempDir dir("project");
    write_bundle(fixtures::random_bundle(3, 2, 2, 2, 1), dir / "tiny");
    ProjectConfig c;
    c.embedding.n_neighbors = 5;
    try {
        build_project(dir / "tiny", dir / "p", c);
        FAIL("expected a stage error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TooFewPoints);
        CHECK(std::string(e.what()).find("stage 'embedding'") != std::string::npos);
    }
    try {
        build_project(dir / "missing", dir / "p", c);
        FAIL("expected a stage error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("stage 'bundle'") != std::string::npos);
    }
}

TEST_CASE("precomputed embeddings are used when present") {
    oracle::TempDir dir("project");
    const auto planted = fixtures::pocket_bundle(4, 6, 2);
    write_bundle(planted.bundle, dir / "b");
    auto state = build_project(dir / "b", dir / "p", ProjectConfig{});
    CHECK(state.embedding.source == EmbeddingSource::Precomputed);
    CHECK(state.embedding.coords == to_matrix(*planted.bundle.embedding));

    ProjectConfig c = quick_config();
    c.use_precomputed_embedding = false;
    state = build_project(dir / "b", dir / "p", c);
    CHECK(state.embedding.source == EmbeddingSource::Computed);
}

TEST_CASE("annotation, propagation, audit replay") {
    oracle::TempDir dir("project");
    write_bundle(fixtures::biased_bundle(200, 5).bundle, dir / "b");
    auto state = build_project(dir / "b", dir / "p", quick_config());
    CHECK_THROWS_AS(run_propagation(state), Error);
    CHECK_THROWS_AS(record_annotation(state, 999, Verdict::Core), Error);

    record_annotation(state, 0, Verdict::Spurious, "background", "tester");
    auto f1 = run_propagation(state);
    CHECK(f1.version == 1);
    record_annotation(state, 1, Verdict::Core);
    auto f2 = run_propagation(state);
    CHECK(f2.version == 2);

    const auto loaded = load_project(dir / "p");
    REQUIRE(loaded.field);
    CHECK(loaded.field->version == 2);
    CHECK(loaded.field->per_point == f2.per_point);

    const auto replayed = replay_audit(dir / "p");
    REQUIRE(replayed);
    CHECK(replayed->version == 2);
    CHECK(replayed->per_point == f2.per_point);

    std::size_t events = 0;
    std::ifstream audit(dir / "p" / project_files::kAudit);
    for (std::string line; std::getline(audit, line);) ++events;
    CHECK(events == 4);

    export_corruption(state, {{}, 0.5}, NoiseConfig{}, dir / "corrupted");
    CHECK(fs::is_regular_file(dir / "corrupted" / "corruption.json"));
    std::ifstream again(dir / "p" / project_files::kAudit);
    events = 0;
    for (std::string line; std::getline(again, line);) ++events;
    CHECK(events == 5);
}

TEST_CASE("rebuilding clears annotation state") {
    oracle::TempDir dir("project");
    write_bundle(fixtures::biased_bundle(120, 5).bundle, dir / "b");
    auto state = build_project(dir / "b", dir / "p", quick_config());
    record_annotation(state, 0, Verdict::Spurious);
    run_propagation(state);
    build_project(dir / "b", dir / "p", quick_config());
    CHECK_FALSE(load_project(dir / "p").field);
    CHECK_FALSE(fs::exists(dir / "p" / project_files::kAnnotations));
}

TEST_CASE("tile registry") {
    oracle::TempDir dir("project");
    write_bundle(fixtures::biased_bundle(120, 5).bundle, dir / "b");
    auto state = build_project(dir / "b", dir / "p", quick_config());
    register_tile(state, 2, "tiles/2.png");
    CHECK(load_project(dir / "p").tiles.at(2) == "tiles/2.png");
    CHECK_THROWS_AS(register_tile(state, 500, "x.png"), Error);
}

TEST_CASE("attribution space dominates feature space on the two-mode fixture") {
    const auto planted = fixtures::two_mode_bundle(200, 1);
    EmbeddingConfig c;
    c.epochs = 100;
    const auto rows = compare_spaces(planted.bundle, c, 10);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].space == "feature");
    CHECK(rows[1].space == "attribution");
    CHECK(rows[1].attribution_similarity > rows[0].attribution_similarity);
}

TEST_CASE("report line for exact table accuracies") {
    EvaluationReport r;
    r.clean_acc = 0.9808225;
    r.core_acc = 0.9816278;
    r.spurious_acc = 0.9601852;
    r.rcs = rcs(r.core_acc, r.spurious_acc);
    CHECK(format_report(r).find("rcs 0.368512\n") != std::string::npos);
    CHECK(format_report(r).find("clean_acc 0.98082") != std::string::npos);
}
