#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "attrscan/bundle_io.hpp"

// Synthetic validation bundles with planted structure, used by the test suites,
// the acceptance runner and `attrscan fixture`.
namespace attrscan::fixtures {

struct PlantedBundle {
    ValidationBundle bundle;
    std::vector<int> group;  // planted ground truth per sample (meaning depends on the generator)
};

// Random features/masks, two classes, optional images. No planted structure.
ValidationBundle random_bundle(std::size_t samples, std::size_t channels, std::size_t height, std::size_t width,
                               std::uint64_t seed, bool with_images = false);

// Two attribution modes (mass top-left vs bottom-right). Pooled features carry a
// nuisance factor unrelated to the mode, so the feature space mixes modes while
// the attribution-weighted vectors separate them. group = mode (0/1).
PlantedBundle two_mode_bundle(std::size_t samples, std::uint64_t seed);

// Checkerboard of tight 2-D pockets (precomputed embedding), each pocket pure in
// one attribution mode with orthogonal weighted vectors. Neighboring pockets
// differ, so a coarse k mixes modes and over-clustering is needed. group = mode.
PlantedBundle pocket_bundle(std::size_t grid_side, std::size_t points_per_pocket, std::uint64_t seed);

// Biased binary task with images: planted-spurious samples attend to a
// class-correlated background corner, core samples to the centered object.
// group = 1 for planted-spurious samples.
PlantedBundle biased_bundle(std::size_t samples, std::uint64_t seed, double spurious_fraction = 0.3);

// N x d Gaussian blobs: `centers` mutually 10 apart (simplex corners scaled),
// isotropic std `sigma`. With fewer dims than centers the centers sit on a
// regular polygon in the first two dims, neighbors 10 apart. group = blob index.
struct Blobs {
    std::vector<std::vector<double>> points;
    std::vector<int> group;
};
Blobs gaussian_blobs(std::size_t per_blob, std::size_t dims, std::size_t centers, double sigma, std::uint64_t seed);

}  // namespace attrscan::fixtures
