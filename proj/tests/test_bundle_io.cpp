#include <filesystem>
#include <fstream>

#include "attrscan/bundle_io.hpp"
#include "attrscan/error.hpp"
#include "attrscan/fixtures.hpp"
#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"

using namespace attrscan;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an attrscan::Error");
    return ErrorCode::Io;
}

}  // namespace

TEST_CASE("tensor file layout for a 2x2 matrix") {
    oracle::TempDir dir("tensor");
    const Tensor t{{2, 2}, {1, 2, 3, 4}};
    write_tensor(t, dir / "m.atsc");
    CHECK(fs::file_size(dir / "m.atsc") == 48);

    std::ifstream in(dir / "m.atsc", std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "ATSC");
    CHECK(bytes[4] == 1);   // version
    CHECK(bytes[8] == 1);   // float32
    CHECK(bytes[12] == 2);  // ndim
    CHECK(bytes[16] == 2);
    CHECK(bytes[24] == 2);
    // 1.0f little-endian
    CHECK(bytes[32] == 0x00);
    CHECK(bytes[35] == 0x3f);
    CHECK(bytes[34] == 0x80);
}

TEST_CASE("tensor round trip") {
    oracle::TempDir dir("tensor");
    const Tensor t{{3, 2, 4}, std::vector<float>(24)};
    Tensor u = t;
    for (std::size_t i = 0; i < u.values.size(); ++i) u.values[i] = static_cast<float>(i) * 0.5f - 3.0f;
    write_tensor(u, dir / "t.atsc");
    CHECK(read_tensor(dir / "t.atsc") == u);
    CHECK(decode_tensor(encode_tensor(u)) == u);
}

TEST_CASE("tensor errors") {
    CHECK(code_of([] { encode_tensor(Tensor{{0}, {}}); }) == ErrorCode::ZeroDimension);
    CHECK(code_of([] { encode_tensor(Tensor{{2, 2}, {1, 2, 3}}); }) == ErrorCode::ShapeMismatch);
    auto bytes = encode_tensor(Tensor{{2}, {1, 2}});
    auto bad = bytes;
    bad[0] = 'X';
    CHECK(code_of([&] { decode_tensor(bad); }) == ErrorCode::BadMagic);
    bad = bytes;
    bad[4] = 9;
    CHECK(code_of([&] { decode_tensor(bad); }) == ErrorCode::BadHeader);
    bad = bytes;
    bad.pop_back();
    CHECK(code_of([&] { decode_tensor(bad); }) == ErrorCode::BadHeader);
    bad = bytes;
    bad[12] = 4;
    CHECK(code_of([&] { decode_tensor(bad); }) == ErrorCode::BadHeader);
}

TEST_CASE("fixture bundle reads back as attribution samples") {
    oracle::TempDir dir("bundle");
    const auto bundle = fixtures::random_bundle(8, 4, 2, 2, 7);
    write_bundle(bundle, dir / "b");
    const auto back = read_bundle(dir / "b");
    CHECK(back.size() == 8);
    CHECK(back.attribution_samples().size() == 8);
    CHECK(back.feature_shape() == FeatureShape{4, 2, 2});
    CHECK(back == bundle);
    CHECK(bundle_hash(back) == bundle_hash(bundle));
}

TEST_CASE("bundle without images round trips with the field absent") {
    oracle::TempDir dir("bundle");
    const auto bundle = fixtures::random_bundle(4, 3, 2, 2, 1, false);
    write_bundle(bundle, dir / "b");
    const auto j = nlohmann::json::parse(std::ifstream(dir / "b" / "manifest.json"));
    for (const auto& s : j["samples"]) CHECK_FALSE(s.contains("image_path"));
    const auto back = read_bundle(dir / "b");
    CHECK_FALSE(back.has_images());
    for (const auto& s : back.manifest.samples) CHECK_FALSE(s.image_path.has_value());
    CHECK(back == bundle);
}

TEST_CASE("bundle with images round trips") {
    oracle::TempDir dir("bundle");
    const auto bundle = fixtures::random_bundle(3, 3, 2, 2, 1, true);
    write_bundle(bundle, dir / "b");
    const auto back = read_bundle(dir / "b");
    CHECK(back.has_images());
    CHECK(back == bundle);
}

TEST_CASE("dangling tensor path") {
    oracle::TempDir dir("bundle");
    write_bundle(fixtures::random_bundle(3, 2, 2, 2, 1), dir / "b");
    fs::remove(dir / "b" / default_attribution_path("s00001"));
    CHECK(code_of([&] { read_bundle(dir / "b"); }) == ErrorCode::DanglingPath);
}

TEST_CASE("mixed feature shapes are rejected") {
    oracle::TempDir dir("bundle");
    auto bundle = fixtures::random_bundle(2, 4, 2, 2, 1);
    write_bundle(bundle, dir / "b");
    write_tensor(Tensor{{4, 3, 3}, std::vector<float>(36, 1.0f)}, dir / "b" / default_feature_path("s00001"));
    CHECK(code_of([&] { read_bundle(dir / "b"); }) == ErrorCode::ShapeMismatch);

    bundle.features[1] = Tensor{{4, 3, 3}, std::vector<float>(36, 1.0f)};
    CHECK(code_of([&] { validate_bundle(bundle); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("manifest problems") {
    oracle::TempDir dir("bundle");
    CHECK(code_of([&] { read_bundle(dir / "nothing"); }) == ErrorCode::MissingManifest);

    write_bundle(fixtures::random_bundle(2, 2, 2, 2, 1), dir / "b");
    auto j = nlohmann::json::parse(std::ifstream(dir / "b" / "manifest.json"));
    j["samples"][0]["label"] = 7;
    std::ofstream(dir / "b" / "manifest.json") << j.dump();
    CHECK(code_of([&] { read_bundle(dir / "b"); }) == ErrorCode::BadManifest);

    std::ofstream(dir / "b" / "manifest.json") << "{not json";
    CHECK(code_of([&] { read_bundle(dir / "b"); }) == ErrorCode::BadManifest);
}

TEST_CASE("write to a read-only location fails without leaving partial output") {
    oracle::TempDir dir("bundle");
    std::ofstream(dir / "blocker") << "regular file";
    const auto bundle = fixtures::random_bundle(2, 2, 2, 2, 1);
    CHECK(code_of([&] { write_bundle(bundle, dir / "blocker" / "b"); }) == ErrorCode::Io);
    CHECK(fs::is_regular_file(dir / "blocker"));
}

TEST_CASE("rewriting a bundle replaces it atomically") {
    oracle::TempDir dir("bundle");
    write_bundle(fixtures::random_bundle(5, 2, 2, 2, 1), dir / "b");
    const auto second = fixtures::random_bundle(3, 2, 2, 2, 2);
    write_bundle(second, dir / "b");
    CHECK(read_bundle(dir / "b") == second);
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path)) ++entries;
    CHECK(entries == 1);
}
