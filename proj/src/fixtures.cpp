#include "attrscan/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "attrscan/error.hpp"
#include "attrscan/rng.hpp"

namespace attrscan::fixtures {

namespace {

std::string sample_id(std::size_t i) {
    std::string s = std::to_string(i);
    return "s" + std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s;
}

SampleRecord record_for(const std::string& id, std::uint32_t label, std::uint32_t prediction, double confidence,
                        bool with_image) {
    SampleRecord r;
    r.id = id;
    r.label = label;
    r.prediction = prediction;
    r.confidence = confidence;
    r.feature_path = default_feature_path(id);
    r.attribution_path = default_attribution_path(id);
    if (with_image) r.image_path = default_image_path(id);
    return r;
}

Tensor make_tensor(std::vector<std::uint64_t> dims) {
    Tensor t;
    t.dims = std::move(dims);
    t.values.assign(t.element_count(), 0.0f);
    return t;
}

void push_sample(ValidationBundle& b, SampleRecord record, Tensor features, Tensor attribution,
                 std::optional<Tensor> image) {
    b.manifest.samples.push_back(std::move(record));
    b.features.push_back(std::move(features));
    b.attributions.push_back(std::move(attribution));
    b.images.push_back(std::move(image));
}

ValidationBundle empty_bundle(std::string name) {
    ValidationBundle b;
    b.manifest.dataset_name = std::move(name);
    b.manifest.class_names = {"negative", "positive"};
    b.manifest.positive_class = 1;
    return b;
}

}  // namespace

ValidationBundle random_bundle(std::size_t samples, std::size_t channels, std::size_t height, std::size_t width,
                               std::uint64_t seed, bool with_images) {
    ValidationBundle b = empty_bundle("random");
    for (std::size_t i = 0; i < samples; ++i) {
        const std::string id = sample_id(i);
        auto f = make_tensor({channels, height, width});
        for (std::size_t k = 0; k < f.values.size(); ++k) f.values[k] = static_cast<float>(rng::normal(rng::key(seed, 1, i, k)));
        auto w = make_tensor({height, width});
        for (std::size_t k = 0; k < w.values.size(); ++k) w.values[k] = static_cast<float>(rng::uniform(rng::key(seed, 2, i, k)));
        const auto label = static_cast<std::uint32_t>(rng::below(rng::key(seed, 3, i), 2));
        const auto pred = rng::uniform(rng::key(seed, 4, i)) < 0.8 ? label : 1 - label;
        const double conf = 0.5 + 0.5 * rng::uniform(rng::key(seed, 5, i));
        std::optional<Tensor> image;
        if (with_images) {
            auto img = make_tensor({3, height * 4, width * 4});
            for (std::size_t k = 0; k < img.values.size(); ++k) img.values[k] = static_cast<float>(rng::uniform(rng::key(seed, 6, i, k)));
            image = std::move(img);
        }
        push_sample(b, record_for(id, label, pred, conf, with_images), std::move(f), std::move(w), std::move(image));
    }
    return b;
}

PlantedBundle two_mode_bundle(std::size_t samples, std::uint64_t seed) {
    constexpr std::size_t d = 8, m = 4, n = 4;
    PlantedBundle out{empty_bundle("two-mode"), {}};
    for (std::size_t i = 0; i < samples; ++i) {
        const int mode = static_cast<int>(i % 2);
        const std::size_t nuisance = rng::below(rng::key(seed, 10, i), 3);
        auto f = make_tensor({d, m, n});
        for (std::size_t c = 0; c < d; ++c) {
            for (std::size_t y = 0; y < m; ++y) {
                for (std::size_t x = 0; x < n; ++x) {
                    double v = 0.05 * rng::normal(rng::key(seed, 11, i, (c * m + y) * n + x));
                    const bool top_left = y < 2 && x < 2, bottom_right = y >= 2 && x >= 2;
                    if (c < 2 && top_left) v += 10.0;
                    if (c >= 2 && c < 4 && bottom_right) v += 10.0;
                    // Nuisance channels dominate the pooled vector, independent of mode.
                    if (c >= 4 && (c - 4) % 3 == nuisance) v += 6.0;
                    f.values[(c * m + y) * n + x] = static_cast<float>(v);
                }
            }
        }
        auto w = make_tensor({m, n});
        for (std::size_t y = 0; y < m; ++y) {
            for (std::size_t x = 0; x < n; ++x) {
                const bool hot = mode == 0 ? (y < 2 && x < 2) : (y >= 2 && x >= 2);
                w.values[y * n + x] =
                    static_cast<float>((hot ? 1.0 : 0.02) * (0.8 + 0.4 * rng::uniform(rng::key(seed, 12, i, y * n + x))));
            }
        }
        const auto label = static_cast<std::uint32_t>(mode);
        push_sample(out.bundle, record_for(sample_id(i), label, label, 0.9, false), std::move(f), std::move(w),
                    std::nullopt);
        out.group.push_back(mode);
    }
    return out;
}

PlantedBundle pocket_bundle(std::size_t grid_side, std::size_t points_per_pocket, std::uint64_t seed) {
    constexpr std::size_t d = 4, m = 2, n = 2;
    PlantedBundle out{empty_bundle("pockets"), {}};
    Tensor coords = make_tensor({grid_side * grid_side * points_per_pocket, 2});
    std::size_t row = 0;
    for (std::size_t gy = 0; gy < grid_side; ++gy) {
        for (std::size_t gx = 0; gx < grid_side; ++gx) {
            const int mode = static_cast<int>((gx + gy) % 2);
            for (std::size_t p = 0; p < points_per_pocket; ++p, ++row) {
                coords.values[2 * row] = static_cast<float>(gx + 0.01 * rng::normal(rng::key(seed, 20, row, 0)));
                coords.values[2 * row + 1] = static_cast<float>(gy + 0.01 * rng::normal(rng::key(seed, 20, row, 1)));
                // Mode 0 reads channel 0 at cell (0,0); mode 1 reads channel 1 at cell (1,1).
                auto f = make_tensor({d, m, n});
                for (std::size_t k = 0; k < f.values.size(); ++k) {
                    f.values[k] = static_cast<float>(0.01 * std::abs(rng::normal(rng::key(seed, 21, row, k))));
                }
                f.values[(0 * m + 0) * n + 0] += 1.0f;
                f.values[(1 * m + 1) * n + 1] += 1.0f;
                auto w = make_tensor({m, n});
                w.values[mode == 0 ? 0 : 3] = 1.0f;
                const auto label = static_cast<std::uint32_t>(mode);
                push_sample(out.bundle, record_for(sample_id(row), label, label, 0.8, false), std::move(f),
                            std::move(w), std::nullopt);
                out.group.push_back(mode);
            }
        }
    }
    out.bundle.embedding = std::move(coords);
    out.bundle.manifest.embedding_path = "embedding.atsc";
    return out;
}

PlantedBundle biased_bundle(std::size_t samples, std::uint64_t seed, double spurious_fraction) {
    constexpr std::size_t d = 16, m = 6, n = 6, scale = 4, h = m * scale, w = n * scale;
    PlantedBundle out{empty_bundle("biased"), {}};
    out.bundle.manifest.class_names = {"landbird", "waterbird"};
    for (std::size_t i = 0; i < samples; ++i) {
        const auto label = static_cast<std::uint32_t>(rng::below(rng::key(seed, 30, i), 2));
        const bool spurious = rng::uniform(rng::key(seed, 31, i)) < spurious_fraction;
        auto noise = [&](std::size_t stream, std::size_t k) { return rng::normal(rng::key(seed, stream, i, k)); };

        auto f = make_tensor({d, m, n});
        for (std::size_t c = 0; c < d; ++c) {
            for (std::size_t y = 0; y < m; ++y) {
                for (std::size_t x = 0; x < n; ++x) {
                    const std::size_t k = (c * m + y) * n + x;
                    const bool object = y >= 2 && y < 4 && x >= 2 && x < 4;
                    const bool corner = y < 2 && x < 2;
                    double v = 0.1 * std::abs(noise(32, k));
                    if (object && c / 2 == label) v += 3.0 + 0.2 * noise(33, k);         // object: channels 0-3
                    if (corner && c / 2 == 2 + label) v += 3.0 + 0.2 * noise(34, k);     // background: 4-7
                    f.values[k] = static_cast<float>(v);
                }
            }
        }
        auto mask = make_tensor({m, n});
        for (std::size_t y = 0; y < m; ++y) {
            for (std::size_t x = 0; x < n; ++x) {
                const bool hot = spurious ? (y < 2 && x < 2) : (y >= 2 && y < 4 && x >= 2 && x < 4);
                mask.values[y * n + x] = static_cast<float>((hot ? 1.0 : 0.03) * (0.7 + 0.6 * rng::uniform(rng::key(seed, 35, i, y * n + x))));
            }
        }
        auto img = make_tensor({1, h, w});
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const bool object = y >= 8 && y < 16 && x >= 8 && x < 16;
                const bool corner = y < 8 && x < 8;
                double v = 0.2 + 0.05 * noise(36, y * w + x);
                if (object) v = label == 1 ? 0.9 : 0.6;
                if (corner) v = label == 1 ? 0.1 : 0.4;
                img.values[y * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
        const double correct_rate = spurious ? 0.75 : 0.95;
        const auto pred = rng::uniform(rng::key(seed, 37, i)) < correct_rate ? label : 1 - label;
        const double conf = 0.55 + 0.45 * rng::uniform(rng::key(seed, 38, i));
        push_sample(out.bundle, record_for(sample_id(i), label, pred, conf, true), std::move(f), std::move(mask),
                    std::move(img));
        out.group.push_back(spurious ? 1 : 0);
    }
    return out;
}

Blobs gaussian_blobs(std::size_t per_blob, std::size_t dims, std::size_t centers, double sigma, std::uint64_t seed) {
    if (centers > dims && dims < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 dims");
    // Scaled basis vectors (pairwise distance 10), or a polygon in the first two
    // dims with neighboring centers 10 apart when there are too few dims.
    std::vector<std::vector<double>> mu(centers, std::vector<double>(dims, 0.0));
    for (std::size_t c = 0; c < centers; ++c) {
        if (centers <= dims) {
            mu[c][c] = 10.0 / std::sqrt(2.0);
        } else {
            const double radius = 5.0 / std::sin(std::numbers::pi / static_cast<double>(centers));
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(centers);
            mu[c][0] = radius * std::cos(angle);
            mu[c][1] = radius * std::sin(angle);
        }
    }
    Blobs out;
    for (std::size_t c = 0; c < centers; ++c) {
        for (std::size_t p = 0; p < per_blob; ++p) {
            std::vector<double> x(dims);
            for (std::size_t k = 0; k < dims; ++k) {
                x[k] = mu[c][k] + sigma * rng::normal(rng::key(seed, 40, c * per_blob + p, k));
            }
            out.points.push_back(std::move(x));
            out.group.push_back(static_cast<int>(c));
        }
    }
    return out;
}

}  // namespace attrscan::fixtures
