#include "attrscan/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

#include "attrscan/attribution.hpp"
#include "attrscan/error.hpp"
#include "attrscan/rng.hpp"
#include "json.hpp"

namespace attrscan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t file_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return rng::fnv1a(bytes);
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& where) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) throw Error(ErrorCode::ParseError, where + ": bad number '" + text + "'");
    return value;
}

double parse_double(const std::string& text, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, where + ": bad number '" + text + "'");
    }
}

}  // namespace

std::string_view to_string(NoiseTarget t) noexcept {
    return t == NoiseTarget::SpuriousRegions ? "spurious_regions" : "core_regions";
}

NoiseTarget parse_noise_target(std::string_view text) {
    if (text == "spurious_regions") return NoiseTarget::SpuriousRegions;
    if (text == "core_regions") return NoiseTarget::CoreRegions;
    throw Error(ErrorCode::InvalidArgument, "noise target must be spurious_regions or core_regions");
}

void NoiseConfig::validate() const {
    if (!(sigma_z > 0.0) || !std::isfinite(sigma_z)) throw Error(ErrorCode::InvalidArgument, "sigma_z must be > 0");
}

double absolute_sigma(const NoiseConfig& noise, double data_range) {
    noise.validate();
    if (!noise.relative_to_range) return noise.sigma_z;
    return noise.sigma_z * (data_range > 0.0 ? data_range : 1.0);
}

double noise_value(std::uint64_t seed, std::string_view sample_id, std::size_t pixel, double sigma) {
    return sigma * rng::normal(rng::key(seed, rng::fnv1a(sample_id), pixel));
}

Tensor corrupt(const Tensor& image, const Matrix& mask, const NoiseConfig& noise, std::string_view sample_id) {
    if (image.dims.size() != 3) throw Error(ErrorCode::ShapeMismatch, "image must be C x H x W");
    const std::size_t h = image.dims[1], w = image.dims[2];
    if (mask.rows() != h || mask.cols() != w) throw Error(ErrorCode::ShapeMismatch, "mask must match image H x W");
    for (double v : mask.data()) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "mask values must lie in [0, 1]");
    }
    double range = 0.0;
    if (noise.relative_to_range && !image.values.empty()) {
        const auto [lo, hi] = std::minmax_element(image.values.begin(), image.values.end());
        range = static_cast<double>(*hi) - static_cast<double>(*lo);
    }
    const double sigma = absolute_sigma(noise, range);

    Tensor out = image;
    const std::size_t plane = h * w;
    for (std::size_t k = 0; k < out.values.size(); ++k) {
        const double m = mask.data()[k % plane];
        if (m == 0.0) continue;
        out.values[k] = static_cast<float>(static_cast<double>(image.values[k]) +
                                           m * noise_value(noise.seed, sample_id, k, sigma));
    }
    return out;
}

Matrix corruption_mask(const Matrix& raw_attribution, std::size_t height, std::size_t width, NoiseTarget target) {
    Matrix m = upsample_mask(normalize_mask(raw_attribution), height, width);
    const double peak = *std::max_element(m.data().begin(), m.data().end());
    for (double& v : m.data()) {
        v = peak > 0.0 ? std::clamp(v / peak, 0.0, 1.0) : 1.0;
        if (target == NoiseTarget::CoreRegions) v = 1.0 - v;
    }
    return m;
}

CorruptionResult make_corrupted_bundle(const ValidationBundle& bundle, const SliceSet& slices,
                                       const SpuriousnessField* field, const CorruptionSelection& selection,
                                       const NoiseConfig& noise, const fs::path& out_root) {
    noise.validate();
    if (!bundle.has_images()) throw Error(ErrorCode::MissingImages, "bundle has no images to corrupt");
    if (slices.assignment.size() != bundle.size()) {
        throw Error(ErrorCode::ShapeMismatch, "slice set does not match the bundle");
    }

    CorruptionResult result;
    std::set<std::size_t> chosen(selection.slice_ids.begin(), selection.slice_ids.end());
    if (selection.tau) {
        if (field == nullptr) throw Error(ErrorCode::InvalidArgument, "tau selection needs a spuriousness field");
        for (const auto& [id, p] : field->per_slice) {
            if (p >= *selection.tau) chosen.insert(id);
        }
    }
    for (auto id : chosen) {
        if (id >= slices.slices.size()) throw Error(ErrorCode::InvalidArgument, "unknown slice " + std::to_string(id));
    }
    result.selected_slices.assign(chosen.begin(), chosen.end());

    float lo = std::numeric_limits<float>::infinity(), hi = -lo;
    for (const auto& img : bundle.images) {
        for (float v : img->values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    result.sigma_pixels = absolute_sigma(noise, static_cast<double>(hi) - static_cast<double>(lo));
    NoiseConfig resolved = noise;
    resolved.sigma_z = result.sigma_pixels;
    resolved.relative_to_range = false;

    ValidationBundle out = bundle;
    for (std::size_t i = 0; i < bundle.size(); ++i) {
        if (!chosen.contains(slices.assignment[i])) continue;
        const auto& img = *bundle.images[i];
        const Matrix mask =
            corruption_mask(to_matrix(bundle.attributions[i]), img.dims[1], img.dims[2], noise.target);
        out.images[i] = corrupt(img, mask, resolved, bundle.manifest.samples[i].id);
        result.corrupted_samples.push_back(i);
    }
    write_bundle(out, out_root);

    json provenance;
    provenance["selection"] = {{"slice_ids", result.selected_slices},
                               {"tau", selection.tau ? json(*selection.tau) : json(nullptr)},
                               {"corrupted_samples", result.corrupted_samples.size()}};
    provenance["noise"] = {{"sigma_z", noise.sigma_z},
                           {"relative_to_range", noise.relative_to_range},
                           {"sigma_pixels", result.sigma_pixels},
                           {"seed", noise.seed},
                           {"target", std::string(to_string(noise.target))}};
    provenance["source_bundle_hash"] = hex64(bundle_hash(bundle));
    std::ofstream(out_root / "corruption.json") << provenance.dump(2) << '\n';
    result.root = out_root;
    return result;
}

std::vector<Prediction> read_predictions(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    std::vector<Prediction> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const auto f = split_tabs(line);
        if (f.size() != 3) throw Error(ErrorCode::ParseError, where + ": expected 3 tab-separated fields");
        out.push_back({f[0], parse_number<std::uint32_t>(f[1], where), parse_double(f[2], where)});
    }
    return out;
}

void write_predictions(const fs::path& path, std::span<const Prediction> predictions) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    char buf[64];
    for (const auto& p : predictions) {
        std::snprintf(buf, sizeof buf, "%.6g", p.confidence);
        out << p.id << '\t' << p.predicted_class << '\t' << buf << '\n';
    }
}

LabelMap labels_of(const ValidationBundle& bundle) {
    LabelMap out;
    for (const auto& s : bundle.manifest.samples) out[s.id] = s.label;
    return out;
}

LabelMap read_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    LabelMap out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const auto f = split_tabs(line);
        if (f.size() != 2) throw Error(ErrorCode::ParseError, where + ": expected id<TAB>label");
        if (!out.emplace(f[0], parse_number<std::uint32_t>(f[1], where)).second) {
            throw Error(ErrorCode::IdMismatch, where + ": duplicate id " + f[0]);
        }
    }
    return out;
}

double accuracy_from_predictions(std::span<const Prediction> predictions, const LabelMap& labels) {
    if (labels.empty()) throw Error(ErrorCode::IdMismatch, "no labelled samples");
    std::set<std::string> seen;
    std::size_t correct = 0;
    for (const auto& p : predictions) {
        const auto it = labels.find(p.id);
        if (it == labels.end()) throw Error(ErrorCode::IdMismatch, "prediction for unknown id " + p.id);
        if (!seen.insert(p.id).second) throw Error(ErrorCode::IdMismatch, "duplicate prediction for " + p.id);
        if (it->second == p.predicted_class) ++correct;
    }
    if (seen.size() != labels.size()) {
        throw Error(ErrorCode::IdMismatch, std::to_string(labels.size() - seen.size()) + " ids have no prediction");
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double rcs(double core_accuracy, double spurious_accuracy) {
    const double mid = 0.5 * (core_accuracy + spurious_accuracy);
    const double room = std::min(mid, 1.0 - mid);
    if (room < 1e-12) return 0.0;
    return (core_accuracy - spurious_accuracy) / (2.0 * room);
}

EvaluationReport build_report(const fs::path& clean_predictions, const fs::path& core_predictions,
                              const fs::path& spurious_predictions, const LabelMap& labels) {
    EvaluationReport r;
    r.clean_acc = accuracy_from_predictions(read_predictions(clean_predictions), labels);
    r.core_acc = accuracy_from_predictions(read_predictions(core_predictions), labels);
    r.spurious_acc = accuracy_from_predictions(read_predictions(spurious_predictions), labels);
    r.rcs = rcs(r.core_acc, r.spurious_acc);
    r.provenance["clean_predictions"] = clean_predictions.string();
    r.provenance["core_predictions"] = core_predictions.string();
    r.provenance["spurious_predictions"] = spurious_predictions.string();
    r.provenance["clean_hash"] = hex64(file_hash(clean_predictions));
    r.provenance["core_hash"] = hex64(file_hash(core_predictions));
    r.provenance["spurious_hash"] = hex64(file_hash(spurious_predictions));
    r.provenance["samples"] = std::to_string(labels.size());
    return r;
}

std::string format_report(const EvaluationReport& report) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "clean_acc %.6f\ncore_acc %.6f\nspurious_acc %.6f\nrcs %.6f\n", report.clean_acc,
                  report.core_acc, report.spurious_acc, report.rcs);
    return buf;
}

}  // namespace attrscan
