#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "attrscan/attribution.hpp"
#include "attrscan/bundle_io.hpp"
#include "attrscan/embedding.hpp"
#include "attrscan/error.hpp"
#include "attrscan/evaluation.hpp"
#include "attrscan/fixtures.hpp"
#include "attrscan/geometry.hpp"
#include "attrscan/project.hpp"
#include "attrscan/slicing.hpp"
#include "attrscan/spuriousness.hpp"

namespace py = pybind11;
using namespace attrscan;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
    return Matrix(a.shape(0), a.shape(1), std::vector<double>(a.data(), a.data() + a.size()));
}

DoubleArray from_matrix(const Matrix& m) {
    DoubleArray out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

FeatureMap to_feature_map(const DoubleArray& a) {
    if (a.ndim() != 3) throw py::value_error("expected a 3-D array (d, m, n)");
    return FeatureMap{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                      static_cast<std::size_t>(a.shape(2)), std::vector<double>(a.data(), a.data() + a.size())};
}

Tensor to_tensor(const FloatArray& a) {
    Tensor t;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) t.dims.push_back(static_cast<std::uint64_t>(a.shape(i)));
    t.values.assign(a.data(), a.data() + a.size());
    return t;
}

FloatArray from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
    FloatArray out(shape);
    std::copy(t.values.begin(), t.values.end(), out.mutable_data());
    return out;
}

std::vector<WeightedVector> rows_of(const DoubleArray& a) {
    const Matrix m = to_matrix(a);
    std::vector<WeightedVector> out;
    for (std::size_t i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).begin(), m.row(i).end());
    return out;
}

py::dict slice_dict(const Slice& s) {
    py::dict d;
    d["id"] = s.id;
    d["members"] = s.members;
    d["coherence"] = s.coherence;
    d["centroid_2d"] = py::make_tuple(s.centroid_2d.x, s.centroid_2d.y);
    d["centroid_wv"] = s.centroid_wv;
    py::list hull;
    for (const auto& v : s.hull.vertices) hull.append(py::make_tuple(v.x, v.y));
    d["hull"] = hull;
    d["degenerate"] = s.hull.degenerate;
    d["accuracy"] = s.accuracy;
    d["mean_confidence"] = s.mean_confidence;
    return d;
}

py::dict bundle_dict(const ValidationBundle& b) {
    py::dict d;
    d["dataset_name"] = b.manifest.dataset_name;
    d["class_names"] = b.manifest.class_names;
    d["positive_class"] = b.manifest.positive_class;
    py::list ids, labels, predictions, confidences;
    for (const auto& s : b.manifest.samples) {
        ids.append(s.id);
        labels.append(s.label);
        predictions.append(s.prediction);
        confidences.append(s.confidence);
    }
    d["ids"] = ids;
    d["labels"] = labels;
    d["predictions"] = predictions;
    d["confidences"] = confidences;
    py::list features, attributions;
    for (const auto& t : b.features) features.append(from_tensor(t));
    for (const auto& t : b.attributions) attributions.append(from_tensor(t));
    d["features"] = features;
    d["attributions"] = attributions;
    d["has_images"] = b.has_images();
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Attribution-space slice discovery engine";

    static py::exception<Error> error(m, "AttrscanError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(error.ptr(), (std::string(to_string(e.code())) + ": " + e.what()).c_str());
        }
    });

    m.def("read_tensor", [](const std::filesystem::path& p) { return from_tensor(read_tensor(p)); }, py::arg("path"));
    m.def("write_tensor", [](const FloatArray& a, const std::filesystem::path& p) { write_tensor(to_tensor(a), p); },
          py::arg("array"), py::arg("path"));
    m.def("read_bundle", [](const std::filesystem::path& p) { return bundle_dict(read_bundle(p)); }, py::arg("root"));
    m.def("bundle_weighted_vectors",
          [](const std::filesystem::path& p) {
              const auto b = read_bundle(p);
              return from_matrix(rows_to_matrix(weighted_vectors(b.attribution_samples())));
          },
          py::arg("root"));
    m.def("write_fixture",
          [](const std::string& kind, const std::filesystem::path& out, std::size_t samples, std::uint64_t seed) {
              fixtures::PlantedBundle planted;
              if (kind == "biased") {
                  planted = fixtures::biased_bundle(samples, seed);
              } else if (kind == "two-mode") {
                  planted = fixtures::two_mode_bundle(samples, seed);
              } else if (kind == "random") {
                  planted.bundle = fixtures::random_bundle(samples, 8, 4, 4, seed, true);
              } else {
                  throw py::value_error("unknown fixture kind " + kind);
              }
              write_bundle(planted.bundle, out);
              return planted.group;
          },
          py::arg("kind"), py::arg("out"), py::arg("samples") = 200, py::arg("seed") = 0,
          "Write a synthetic bundle; returns the planted group per sample.");

    m.def("normalize_mask", [](const DoubleArray& a) { return from_matrix(normalize_mask(to_matrix(a))); },
          py::arg("mask"));
    m.def("weighted_vector",
          [](const DoubleArray& f, const DoubleArray& mask) {
              return weighted_vector(to_feature_map(f), normalize_mask(to_matrix(mask)));
          },
          py::arg("features"), py::arg("mask"), "Mask-weighted average of a d x m x n feature map; the mask is normalized first.");
    m.def("cosine_similarity", [](const std::vector<double>& u, const std::vector<double>& v) {
        return cosine_similarity(u, v);
    });
    m.def("mask_distance", [](const DoubleArray& a, const DoubleArray& b) {
        return mask_distance(normalize_mask(to_matrix(a)), normalize_mask(to_matrix(b)));
    });
    m.def("attribution_similarity", [](const DoubleArray& a, const DoubleArray& b) {
        return attribution_similarity(normalize_mask(to_matrix(a)), normalize_mask(to_matrix(b)));
    });
    m.def("upsample_mask", [](const DoubleArray& a, std::size_t h, std::size_t w) {
        return from_matrix(upsample_mask(to_matrix(a), h, w));
    });
    m.def("slice_coherence", [](const DoubleArray& vectors) { return slice_coherence(rows_of(vectors)); });

    m.def("embed",
          [](const DoubleArray& x, std::size_t n_neighbors, double min_dist, std::uint64_t seed, std::size_t epochs) {
              EmbeddingConfig c;
              c.n_neighbors = n_neighbors;
              c.min_dist = min_dist;
              c.seed = seed;
              c.epochs = epochs;
              const Matrix in = to_matrix(x);
              py::gil_scoped_release release;
              const auto e = embed(in, c);
              py::gil_scoped_acquire acquire;
              return from_matrix(e.coords);
          },
          py::arg("x"), py::arg("n_neighbors") = 15, py::arg("min_dist") = 0.1, py::arg("seed") = 42,
          py::arg("epochs") = 200);
    m.def("trustworthiness", [](const DoubleArray& x, const DoubleArray& e, std::size_t k) {
        return trustworthiness(to_matrix(x), to_matrix(e), k);
    }, py::arg("x"), py::arg("embedding"), py::arg("k") = 10);
    m.def("fit_curve_params", &fit_curve_params, py::arg("min_dist"), py::arg("spread") = 1.0);

    m.def("kmeans_2d",
          [](const DoubleArray& coords, std::size_t k, std::uint64_t seed) {
              const auto r = kmeans_2d(to_matrix(coords), k, seed);
              return py::make_tuple(r.assignment, from_matrix(r.centroids));
          },
          py::arg("coords"), py::arg("k"), py::arg("seed") = 0);
    m.def("find_slices",
          [](const DoubleArray& coords, const DoubleArray& vectors, double threshold, std::size_t initial_k,
             std::optional<std::size_t> override_k, std::uint64_t seed) {
              SliceConfig c;
              c.coherence_threshold = threshold;
              c.initial_k = initial_k;
              c.override_k = override_k;
              c.seed = seed;
              const Matrix pts = to_matrix(coords);
              auto set = find_slices(pts, rows_of(vectors), c);
              for (auto& s : set.slices) s.hull = slice_hull(
                  [&] {
                      std::vector<Point2> p;
                      for (auto i : s.members) p.push_back({pts(i, 0), pts(i, 1)});
                      return p;
                  }(),
                  s.centroid_2d);
              py::dict d;
              py::list slices;
              for (const auto& s : set.slices) slices.append(slice_dict(s));
              d["slices"] = slices;
              d["assignment"] = set.assignment;
              d["converged"] = set.converged;
              d["k_trace"] = set.k_trace;
              d["incoherent_ids"] = set.incoherent_ids;
              return d;
          },
          py::arg("coords"), py::arg("vectors"), py::arg("coherence_threshold") = 0.8, py::arg("initial_k") = 20,
          py::arg("override_k") = py::none(), py::arg("seed") = 0);
    m.def("convex_hull", [](const std::vector<std::pair<double, double>>& pts) {
        std::vector<Point2> p;
        for (const auto& [x, y] : pts) p.push_back({x, y});
        std::vector<std::pair<double, double>> out;
        for (const auto& v : convex_hull(p)) out.emplace_back(v.x, v.y);
        return out;
    });

    m.def("spread",
          [](const DoubleArray& T, const DoubleArray& y0, double alpha, double tol, std::size_t max_iter) {
              const Matrix dense = to_matrix(T);
              SparseMatrix s;
              s.n = dense.rows();
              for (std::size_t i = 0; i < dense.rows(); ++i) {
                  for (std::size_t j = 0; j < dense.cols(); ++j) {
                      if (dense(i, j) != 0.0) {
                          s.col.push_back(j);
                          s.val.push_back(dense(i, j));
                      }
                  }
                  s.row_ptr.push_back(s.col.size());
              }
              const auto r = spread(s, to_matrix(y0), alpha, tol, max_iter);
              return py::make_tuple(from_matrix(r.labels), r.iterations, r.converged);
          },
          py::arg("transition"), py::arg("y0"), py::arg("alpha") = 0.2, py::arg("tol") = 1e-6,
          py::arg("max_iter") = 1000);
    m.def("affinity", [](const DoubleArray& coords) {
        return from_matrix(build_affinity(to_matrix(coords), SpreadConfig{}).to_dense());
    });

    m.def("rcs", &rcs, py::arg("core_accuracy"), py::arg("spurious_accuracy"));
    m.def("corrupt",
          [](const FloatArray& image, const DoubleArray& mask, double sigma_z, std::uint64_t seed,
             const std::string& sample_id, bool relative_to_range) {
              NoiseConfig n;
              n.sigma_z = sigma_z;
              n.seed = seed;
              n.relative_to_range = relative_to_range;
              return from_tensor(corrupt(to_tensor(image), to_matrix(mask), n, sample_id));
          },
          py::arg("image"), py::arg("mask"), py::arg("sigma_z") = 0.25, py::arg("seed") = 0,
          py::arg("sample_id") = "", py::arg("relative_to_range") = true);

    m.def("build_project",
          [](const std::filesystem::path& bundle, const std::filesystem::path& project, const std::string& config_json) {
              ProjectConfig c;
              if (!config_json.empty()) c = config_from_json(nlohmann::json::parse(config_json));
              const auto state = build_project(bundle, project, c);
              py::dict d;
              d["slices"] = state.slices.slices.size();
              d["converged"] = state.slices.converged;
              d["embedding"] = from_matrix(state.embedding.coords);
              d["assignment"] = state.slices.assignment;
              return d;
          },
          py::arg("bundle"), py::arg("project"), py::arg("config_json") = "");
    m.def("annotate",
          [](const std::filesystem::path& project, std::size_t slice_id, const std::string& verdict,
             const std::string& note) {
              auto state = load_project(project);
              record_annotation(state, slice_id, parse_verdict(verdict), note);
          },
          py::arg("project"), py::arg("slice_id"), py::arg("verdict"), py::arg("note") = "");
    m.def("propagate",
          [](const std::filesystem::path& project) {
              auto state = load_project(project);
              const auto f = run_propagation(state);
              py::dict d;
              d["version"] = f.version;
              d["per_point"] = f.per_point;
              d["per_slice"] = f.per_slice;
              return d;
          },
          py::arg("project"));
}
