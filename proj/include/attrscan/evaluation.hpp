#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attrscan/bundle_io.hpp"
#include "attrscan/slicing.hpp"
#include "attrscan/spuriousness.hpp"
#include "attrscan/tensor.hpp"

namespace attrscan {

enum class NoiseTarget { SpuriousRegions, CoreRegions };

std::string_view to_string(NoiseTarget t) noexcept;
NoiseTarget parse_noise_target(std::string_view text);

struct NoiseConfig {
    // Gaussian std. With relative_to_range it is a fraction of the image data
    // range (max - min); otherwise it is in pixel units.
    double sigma_z = 0.25;
    bool relative_to_range = true;
    std::uint64_t seed = 0;
    NoiseTarget target = NoiseTarget::SpuriousRegions;

    void validate() const;
    bool operator==(const NoiseConfig&) const = default;
};

// Resolve a relative sigma against a data range. Returns pixel units.
double absolute_sigma(const NoiseConfig& noise, double data_range);

// Noise value added at flat element index `pixel` of sample `sample_id` before
// mask weighting: z ~ N(0, sigma^2), keyed by (seed, sample id, pixel).
double noise_value(std::uint64_t seed, std::string_view sample_id, std::size_t pixel, double sigma);

// x' = x + m (.) z. `image` is C x H x W, `mask` is H x W in [0, 1] and is
// broadcast across channels.
Tensor corrupt(const Tensor& image, const Matrix& mask, const NoiseConfig& noise, std::string_view sample_id);

// Normalized attribution, upsampled to H x W, rescaled to max 1; inverted for core regions.
Matrix corruption_mask(const Matrix& raw_attribution, std::size_t height, std::size_t width, NoiseTarget target);

struct CorruptionSelection {
    std::vector<std::size_t> slice_ids;
    std::optional<double> tau;  // select slices with per_slice spuriousness >= tau
};

struct CorruptionResult {
    std::filesystem::path root;
    std::vector<std::size_t> selected_slices;
    std::vector<std::size_t> corrupted_samples;
    double sigma_pixels = 0.0;
};

// Writes a full copy of `bundle` at out_root with selected samples' images
// corrupted, plus a corruption.json provenance record.
CorruptionResult make_corrupted_bundle(const ValidationBundle& bundle, const SliceSet& slices,
                                       const SpuriousnessField* field, const CorruptionSelection& selection,
                                       const NoiseConfig& noise, const std::filesystem::path& out_root);

struct Prediction {
    std::string id;
    std::uint32_t predicted_class = 0;
    double confidence = 0.0;
    bool operator==(const Prediction&) const = default;
};

// Tab-separated `id<TAB>class<TAB>confidence`, one per line.
std::vector<Prediction> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions);

using LabelMap = std::map<std::string, std::uint32_t>;
LabelMap labels_of(const ValidationBundle& bundle);
LabelMap read_labels(const std::filesystem::path& path);  // `id<TAB>label` lines

// Fraction correct; predictions must cover exactly the labelled ids.
double accuracy_from_predictions(std::span<const Prediction> predictions, const LabelMap& labels);

// Relative core sensitivity (acc_c - acc_s) / (2 min(a, 1 - a)), a = (acc_c + acc_s) / 2.
// Zero when min(a, 1 - a) < 1e-12.
double rcs(double core_accuracy, double spurious_accuracy);

struct EvaluationReport {
    double clean_acc = 0.0;
    double core_acc = 0.0;
    double spurious_acc = 0.0;
    double rcs = 0.0;
    std::map<std::string, std::string> provenance;
};

EvaluationReport build_report(const std::filesystem::path& clean_predictions,
                              const std::filesystem::path& core_predictions,
                              const std::filesystem::path& spurious_predictions, const LabelMap& labels);

std::string format_report(const EvaluationReport& report);

}  // namespace attrscan
