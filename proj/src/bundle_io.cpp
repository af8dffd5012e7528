#include "attrscan/bundle_io.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "attrscan/error.hpp"
#include "attrscan/rng.hpp"
#include "json.hpp"

namespace attrscan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kHeaderBytes = 16;

void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

void put_u64(std::vector<char>& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int b = 3; b >= 0; --b) v = (v << 8) | static_cast<unsigned char>(p[b]);
    return v;
}

std::uint64_t get_u64(const char* p) {
    std::uint64_t v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8) | static_cast<unsigned char>(p[b]);
    return v;
}

void check_dims(const std::vector<std::uint64_t>& dims, const std::string& origin) {
    if (dims.empty() || dims.size() > 3) {
        throw Error(ErrorCode::BadHeader, origin + ": ndim must be 1, 2 or 3, got " + std::to_string(dims.size()));
    }
    for (auto d : dims) {
        if (d == 0) throw Error(ErrorCode::ZeroDimension, origin + ": zero-length dimension");
    }
}

std::vector<char> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const char* data, std::size_t size) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

std::string sanitize(const std::string& id) {
    std::string out = id;
    for (char& c : out) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        if (!ok) c = '_';
    }
    return out;
}

json manifest_to_json(const Manifest& m) {
    json j;
    j["dataset_name"] = m.dataset_name;
    j["class_names"] = m.class_names;
    j["positive_class"] = m.positive_class;
    json samples = json::array();
    for (const auto& s : m.samples) {
        json r;
        r["id"] = s.id;
        r["label"] = s.label;
        r["prediction"] = s.prediction;
        r["confidence"] = s.confidence;
        r["feature_path"] = s.feature_path;
        r["attribution_path"] = s.attribution_path;
        if (s.image_path) r["image_path"] = *s.image_path;
        samples.push_back(std::move(r));
    }
    j["samples"] = std::move(samples);
    if (m.embedding_path) j["embedding_path"] = *m.embedding_path;
    return j;
}

Manifest manifest_from_json(const json& j) {
    try {
        Manifest m;
        m.dataset_name = j.at("dataset_name").get<std::string>();
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        m.positive_class = j.at("positive_class").get<std::uint32_t>();
        for (const auto& r : j.at("samples")) {
            SampleRecord s;
            s.id = r.at("id").get<std::string>();
            s.label = r.at("label").get<std::uint32_t>();
            s.prediction = r.at("prediction").get<std::uint32_t>();
            s.confidence = r.at("confidence").get<double>();
            s.feature_path = r.at("feature_path").get<std::string>();
            s.attribution_path = r.at("attribution_path").get<std::string>();
            if (r.contains("image_path") && !r["image_path"].is_null()) {
                s.image_path = r["image_path"].get<std::string>();
            }
            m.samples.push_back(std::move(s));
        }
        if (j.contains("embedding_path") && !j["embedding_path"].is_null()) {
            m.embedding_path = j["embedding_path"].get<std::string>();
        }
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadManifest, e.what());
    }
}

Tensor load_referenced(const fs::path& root, const std::string& rel) {
    const fs::path p = root / rel;
    if (!fs::is_regular_file(p)) throw Error(ErrorCode::DanglingPath, rel);
    return read_tensor(p);
}

}  // namespace

std::vector<char> encode_tensor(const Tensor& tensor) {
    check_dims(tensor.dims, "tensor");
    if (tensor.values.size() != tensor.element_count()) {
        throw Error(ErrorCode::ShapeMismatch, "value count " + std::to_string(tensor.values.size()) +
                                                  " != product of dims " + std::to_string(tensor.element_count()));
    }
    std::vector<char> out(std::begin(kTensorMagic), std::end(kTensorMagic));
    out.reserve(kHeaderBytes + 8 * tensor.dims.size() + 4 * tensor.values.size());
    put_u32(out, kTensorVersion);
    put_u32(out, kDtypeFloat32);
    put_u32(out, static_cast<std::uint32_t>(tensor.dims.size()));
    for (auto d : tensor.dims) put_u64(out, d);
    for (float v : tensor.values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        put_u32(out, bits);
    }
    return out;
}

Tensor decode_tensor(const std::vector<char>& bytes, const std::string& origin) {
    if (bytes.size() < kHeaderBytes) throw Error(ErrorCode::BadHeader, origin + ": truncated header");
    if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) throw Error(ErrorCode::BadMagic, origin);
    if (get_u32(bytes.data() + 4) != kTensorVersion) throw Error(ErrorCode::BadHeader, origin + ": unsupported version");
    if (get_u32(bytes.data() + 8) != kDtypeFloat32) throw Error(ErrorCode::BadHeader, origin + ": unsupported dtype");
    const std::uint32_t ndim = get_u32(bytes.data() + 12);
    if (ndim < 1 || ndim > 3) throw Error(ErrorCode::BadHeader, origin + ": ndim " + std::to_string(ndim));
    if (bytes.size() < kHeaderBytes + 8 * ndim) throw Error(ErrorCode::BadHeader, origin + ": truncated dims");

    Tensor t;
    for (std::uint32_t k = 0; k < ndim; ++k) t.dims.push_back(get_u64(bytes.data() + kHeaderBytes + 8 * k));
    check_dims(t.dims, origin);
    const std::size_t offset = kHeaderBytes + 8 * ndim;
    const std::size_t count = t.element_count();
    if (bytes.size() - offset != 4 * count) {
        throw Error(ErrorCode::BadHeader, origin + ": payload is " + std::to_string(bytes.size() - offset) +
                                              " bytes, expected " + std::to_string(4 * count));
    }
    t.values.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        const std::uint32_t bits = get_u32(bytes.data() + offset + 4 * k);
        std::memcpy(&t.values[k], &bits, sizeof bits);
    }
    return t;
}

void write_tensor(const Tensor& tensor, const fs::path& path) {
    const auto bytes = encode_tensor(tensor);
    write_file(path, bytes.data(), bytes.size());
}

Tensor read_tensor(const fs::path& path) { return decode_tensor(read_file(path), path.string()); }

bool ValidationBundle::has_images() const noexcept {
    if (images.empty()) return false;
    for (const auto& img : images) {
        if (!img) return false;
    }
    return true;
}

FeatureShape ValidationBundle::feature_shape() const {
    if (features.empty()) throw Error(ErrorCode::BadManifest, "bundle has no samples");
    const auto& d = features.front().dims;
    if (d.size() != 3) throw Error(ErrorCode::ShapeMismatch, "feature tensor must be 3-D");
    return {d[0], d[1], d[2]};
}

AttributionSample ValidationBundle::sample(std::size_t i) const {
    const auto& r = manifest.samples.at(i);
    return {r.id, r.label, r.prediction, r.confidence, to_feature_map(features.at(i)), to_matrix(attributions.at(i))};
}

std::vector<AttributionSample> ValidationBundle::attribution_samples() const {
    std::vector<AttributionSample> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(sample(i));
    return out;
}

void validate_bundle(const ValidationBundle& b) {
    const auto& m = b.manifest;
    const std::size_t n = m.samples.size();
    if (n == 0) throw Error(ErrorCode::BadManifest, "bundle has no samples");
    if (m.class_names.empty()) throw Error(ErrorCode::BadManifest, "class_names is empty");
    if (m.positive_class >= m.class_names.size()) throw Error(ErrorCode::BadManifest, "positive_class out of range");
    if (b.features.size() != n || b.attributions.size() != n || b.images.size() != n) {
        throw Error(ErrorCode::BadManifest, "tensor lists do not match sample count");
    }

    std::set<std::string> ids;
    const FeatureShape shape = b.feature_shape();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = m.samples[i];
        if (!ids.insert(s.id).second) throw Error(ErrorCode::BadManifest, "duplicate sample id " + s.id);
        if (s.label >= m.class_names.size() || s.prediction >= m.class_names.size()) {
            throw Error(ErrorCode::BadManifest, s.id + ": label/prediction out of range");
        }
        if (!(s.confidence >= 0.0 && s.confidence <= 1.0)) {
            throw Error(ErrorCode::BadManifest, s.id + ": confidence outside [0,1]");
        }
        const auto& f = b.features[i].dims;
        if (f.size() != 3 || FeatureShape{f[0], f[1], f[2]} != shape) {
            throw Error(ErrorCode::ShapeMismatch, s.id + ": feature shape differs from the first sample");
        }
        const auto& w = b.attributions[i].dims;
        if (w.size() != 2 || w[0] != shape.height || w[1] != shape.width) {
            throw Error(ErrorCode::ShapeMismatch, s.id + ": attribution shape must be m x n of the feature map");
        }
        if (b.images[i].has_value() != s.image_path.has_value()) {
            throw Error(ErrorCode::BadManifest, s.id + ": image tensor and image_path disagree");
        }
        if (b.images[i] && b.images[i]->dims.size() != 3) {
            throw Error(ErrorCode::ShapeMismatch, s.id + ": image must be C x H x W");
        }
    }
    if (b.embedding.has_value() != m.embedding_path.has_value()) {
        throw Error(ErrorCode::BadManifest, "embedding tensor and embedding_path disagree");
    }
    if (b.embedding) {
        const auto& e = b.embedding->dims;
        if (e.size() != 2 || e[0] != n || e[1] != 2) throw Error(ErrorCode::ShapeMismatch, "embedding must be N x 2");
    }
}

ValidationBundle read_bundle(const fs::path& root) {
    const fs::path manifest_path = root / "manifest.json";
    if (!fs::is_regular_file(manifest_path)) throw Error(ErrorCode::MissingManifest, manifest_path.string());

    json j;
    {
        std::ifstream in(manifest_path);
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::BadManifest, e.what());
        }
    }

    ValidationBundle b;
    b.manifest = manifest_from_json(j);
    for (const auto& s : b.manifest.samples) {
        b.features.push_back(load_referenced(root, s.feature_path));
        b.attributions.push_back(load_referenced(root, s.attribution_path));
        if (s.image_path) {
            b.images.emplace_back(load_referenced(root, *s.image_path));
        } else {
            b.images.emplace_back(std::nullopt);
        }
    }
    if (b.manifest.embedding_path) b.embedding = load_referenced(root, *b.manifest.embedding_path);
    validate_bundle(b);
    return b;
}

void write_bundle(const ValidationBundle& bundle, const fs::path& root) {
    validate_bundle(bundle);
    const fs::path target = fs::absolute(root);
    const std::string stamp = std::to_string(rng::mix(static_cast<std::uint64_t>(
        std::hash<std::string>{}(target.string()) ^ reinterpret_cast<std::uintptr_t>(&bundle))));
    const fs::path staging = target.parent_path() / ("." + target.filename().string() + ".tmp-" + stamp);

    try {
        fs::remove_all(staging);
        fs::create_directories(staging);
        const std::string text = manifest_to_json(bundle.manifest).dump(2) + "\n";
        write_file(staging / "manifest.json", text.data(), text.size());
        for (std::size_t i = 0; i < bundle.size(); ++i) {
            const auto& s = bundle.manifest.samples[i];
            write_tensor(bundle.features[i], staging / s.feature_path);
            write_tensor(bundle.attributions[i], staging / s.attribution_path);
            if (s.image_path) write_tensor(*bundle.images[i], staging / *s.image_path);
        }
        if (bundle.manifest.embedding_path) write_tensor(*bundle.embedding, staging / *bundle.manifest.embedding_path);

        if (fs::exists(target)) {
            const fs::path old = target.parent_path() / ("." + target.filename().string() + ".old-" + stamp);
            fs::rename(target, old);
            fs::rename(staging, target);
            fs::remove_all(old);
        } else {
            fs::rename(staging, target);
        }
    } catch (const fs::filesystem_error& e) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw Error(ErrorCode::Io, e.what());
    } catch (const Error&) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
}

std::string default_feature_path(const std::string& id) { return "tensors/" + sanitize(id) + ".features.atsc"; }
std::string default_attribution_path(const std::string& id) { return "tensors/" + sanitize(id) + ".attribution.atsc"; }
std::string default_image_path(const std::string& id) { return "images/" + sanitize(id) + ".image.atsc"; }

std::uint64_t bundle_hash(const ValidationBundle& bundle) {
    std::uint64_t h = rng::fnv1a(manifest_to_json(bundle.manifest).dump());
    auto absorb = [&h](const Tensor& t) {
        const auto bytes = encode_tensor(t);
        h = rng::key(h, rng::fnv1a(std::string_view(bytes.data(), bytes.size())));
    };
    for (std::size_t i = 0; i < bundle.size(); ++i) {
        absorb(bundle.features[i]);
        absorb(bundle.attributions[i]);
        if (bundle.images[i]) absorb(*bundle.images[i]);
    }
    if (bundle.embedding) absorb(*bundle.embedding);
    return h;
}

}  // namespace attrscan
