#include "attrscan/server.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "attrscan/attribution.hpp"
#include "attrscan/error.hpp"
#include "httplib.h"

namespace attrscan {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(JobStatus s) noexcept {
    switch (s) {
        case JobStatus::Queued: return "queued";
        case JobStatus::Running: return "running";
        case JobStatus::Done: return "done";
        case JobStatus::Failed: return "failed";
    }
    return "unknown";
}

namespace {

ApiResponse error_response(int status, std::string_view code, const std::string& message) {
    return {status, {{"error", code}, {"message", message}}, {}, {}};
}

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::ParseError:
            return 400;
        case ErrorCode::NoAnnotations:
        case ErrorCode::MissingImages:
            return 409;
        default:
            return 500;
    }
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '/')) {
        if (!part.empty()) parts.push_back(part);
    }
    return parts;
}

std::optional<std::uint64_t> parse_id(const std::string& text) {
    std::uint64_t v = 0;
    const auto* end = text.data() + text.size();
    auto [p, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || p != end) return std::nullopt;
    return v;
}

std::string query_or(const ApiRequest& r, const std::string& key, std::string fallback) {
    auto it = r.query.find(key);
    return it == r.query.end() ? fallback : it->second;
}

json parse_body(const ApiRequest& r) {
    if (r.body.empty()) return json::object();
    try {
        auto j = json::parse(r.body);
        if (!j.is_object()) throw Error(ErrorCode::ParseError, "request body must be a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("request body: ") + e.what());
    }
}

json tensor_json(const Tensor& t) { return {{"dims", t.dims}, {"values", t.values}}; }

json matrix_json(const Matrix& m) {
    std::vector<double> values(m.data().begin(), m.data().end());
    return {{"dims", {m.rows(), m.cols()}}, {"values", values}};
}

json polygon_json(const Polygon& p) {
    json out = json::array();
    for (const auto& v : p) out.push_back({v.x, v.y});
    return out;
}

}  // namespace

Service::Service(const fs::path& project_dir) : state_(load_project(project_dir)) {
    if (state_.field) field_ = std::make_shared<const SpuriousnessField>(*state_.field);
    worker_ = std::thread([this] { worker_loop(); });
}

Service::~Service() {
    {
        std::lock_guard lock(jobs_mutex_);
        stopping_ = true;
    }
    jobs_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
}

std::shared_ptr<const SpuriousnessField> Service::published() const {
    std::shared_lock lock(publish_mutex_);
    return field_;
}

std::uint64_t Service::field_version() const {
    auto f = published();
    return f ? f->version : 0;
}

Job Service::job(std::uint64_t id) const {
    std::lock_guard lock(jobs_mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw Error(ErrorCode::InvalidArgument, "unknown job " + std::to_string(id));
    return it->second;
}

void Service::wait_idle() {
    std::unique_lock lock(jobs_mutex_);
    idle_cv_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

void Service::worker_loop() {
    for (;;) {
        std::pair<std::uint64_t, std::function<json()>> next;
        {
            std::unique_lock lock(jobs_mutex_);
            jobs_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
            if (queue_.empty()) return;
            next = std::move(queue_.front());
            queue_.pop_front();
            busy_ = true;
            jobs_[next.first].status = JobStatus::Running;
        }
        json result;
        std::string failure;
        try {
            result = next.second();
        } catch (const std::exception& e) {
            failure = e.what();
        }
        {
            std::lock_guard lock(jobs_mutex_);
            auto& j = jobs_[next.first];
            j.status = failure.empty() ? JobStatus::Done : JobStatus::Failed;
            j.result = std::move(result);
            j.error = std::move(failure);
            busy_ = false;
        }
        idle_cv_.notify_all();
    }
}

ApiResponse Service::submit(std::string kind, std::function<json()> work, bool wait) {
    std::uint64_t id;
    {
        std::lock_guard lock(jobs_mutex_);
        id = next_job_++;
        jobs_[id] = Job{id, kind, JobStatus::Queued, nullptr, {}};
        queue_.emplace_back(id, std::move(work));
    }
    jobs_cv_.notify_one();
    if (!wait) return {202, {{"job_id", id}, {"kind", kind}, {"status", "queued"}}, {}, {}};

    std::unique_lock lock(jobs_mutex_);
    idle_cv_.wait(lock, [&] {
        auto s = jobs_[id].status;
        return s == JobStatus::Done || s == JobStatus::Failed;
    });
    const Job& j = jobs_[id];
    if (j.status == JobStatus::Failed) return error_response(409, "job_failed", j.error);
    return {200, {{"job_id", id}, {"kind", kind}, {"status", "done"}, {"result", j.result}}, {}, {}};
}

ApiResponse Service::handle(const ApiRequest& request) {
    const auto parts = split_path(request.path);
    try {
        if (request.method == "GET") {
            if (parts.size() == 2 && parts[0] == "api") {
                if (parts[1] == "slices") return get_slices();
                if (parts[1] == "mosaic") return get_mosaic(request);
                if (parts[1] == "spuriousness") return get_spuriousness();
                if (parts[1] == "report") return get_report();
            }
            if (parts.size() >= 3 && parts[0] == "api" && parts[1] == "slices") {
                auto id = parse_id(parts[2]);
                if (!id) return error_response(400, "bad_request", "slice id must be an integer");
                if (parts.size() == 3) return get_slice(*id);
                if (parts.size() == 4 && parts[3] == "samples") return get_samples(*id, request);
            }
            if (parts.size() == 3 && parts[0] == "api" && parts[1] == "jobs") {
                auto id = parse_id(parts[2]);
                if (!id) return error_response(400, "bad_request", "job id must be an integer");
                return get_job(*id);
            }
            if (parts.size() == 2 && parts[0] == "tiles") {
                auto id = parse_id(parts[1]);
                if (!id) return error_response(400, "bad_request", "tile id must be an integer");
                return get_tile(*id);
            }
        } else if (request.method == "POST" && parts.size() >= 2 && parts[0] == "api") {
            if (parts.size() == 2 && parts[1] == "annotations") return post_annotation(request);
            if (parts.size() == 2 && parts[1] == "propagate") return post_propagate(request);
            if (parts.size() == 3 && parts[1] == "export" && parts[2] == "corruption") return post_corruption(request);
        }
        return error_response(404, "not_found", request.method + " " + request.path);
    } catch (const Error& e) {
        return error_response(status_for(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
        return error_response(400, "bad_request", e.what());
    }
}

ApiResponse Service::get_slices() const {
    auto field = published();
    json out = json::array();
    for (const auto& s : state_.slices.slices) {
        json spur = nullptr;
        if (field) {
            if (auto it = field->per_slice.find(s.id); it != field->per_slice.end()) spur = it->second;
        }
        out.push_back({{"id", s.id},
                       {"size", s.members.size()},
                       {"accuracy", s.accuracy},
                       {"mean_confidence", s.mean_confidence},
                       {"coherence", s.coherence},
                       {"spuriousness", spur}});
    }
    return {200, out, {}, {}};
}

ApiResponse Service::get_slice(std::size_t id) const {
    if (id >= state_.slices.slices.size()) return error_response(404, "not_found", "unknown slice");
    const auto& s = state_.slices.slices[id];
    auto field = published();
    json cells = json::object();
    for (const auto& [cell, members] : s.confusion_cells) cells[std::string(to_string(cell))] = members;
    std::vector<std::string> ids;
    for (auto m : s.members) ids.push_back(state_.bundle.manifest.samples[m].id);
    json spur = nullptr;
    if (field) {
        if (auto it = field->per_slice.find(id); it != field->per_slice.end()) spur = it->second;
    }
    return {200,
            {{"id", s.id},
             {"size", s.members.size()},
             {"members", s.members},
             {"sample_ids", ids},
             {"accuracy", s.accuracy},
             {"mean_confidence", s.mean_confidence},
             {"coherence", s.coherence},
             {"spuriousness", spur},
             {"centroid_2d", {s.centroid_2d.x, s.centroid_2d.y}},
             {"centroid_wv", s.centroid_wv},
             {"hull", polygon_json(s.hull.vertices)},
             {"degenerate", s.hull.degenerate},
             {"confusion_cells", cells},
             {"tile_url", state_.tiles.count(id) ? json("/tiles/" + std::to_string(id)) : json(nullptr)}},
            {},
            {}};
}

ApiResponse Service::get_samples(std::size_t id, const ApiRequest& request) const {
    if (id >= state_.slices.slices.size()) return error_response(404, "not_found", "unknown slice");
    const std::string view = query_or(request, "view", "image");
    if (view != "image" && view != "heatmap") return error_response(400, "bad_request", "view must be image or heatmap");
    if (view == "image" && !state_.bundle.has_images()) {
        return error_response(409, to_string(ErrorCode::MissingImages), "bundle has no images");
    }
    const auto offset = parse_id(query_or(request, "offset", "0"));
    const auto limit = parse_id(query_or(request, "limit", "50"));
    if (!offset || !limit) return error_response(400, "bad_request", "offset and limit must be integers");

    const auto& members = state_.slices.slices[id].members;
    json samples = json::array();
    for (std::size_t i = *offset; i < members.size() && i < *offset + *limit; ++i) {
        const std::size_t idx = members[i];
        const auto& rec = state_.bundle.manifest.samples[idx];
        json entry = {{"index", idx},
                      {"id", rec.id},
                      {"label", rec.label},
                      {"prediction", rec.prediction},
                      {"confidence", rec.confidence}};
        if (view == "image") {
            entry["image"] = tensor_json(*state_.bundle.images[idx]);
        } else {
            Matrix mask = normalize_mask(to_matrix(state_.bundle.attributions[idx]));
            if (state_.bundle.has_images()) {
                const auto& dims = state_.bundle.images[idx]->dims;
                mask = upsample_mask(mask, dims[dims.size() - 2], dims[dims.size() - 1]);
            }
            entry["heatmap"] = matrix_json(mask);
        }
        samples.push_back(std::move(entry));
    }
    return {200,
            {{"slice_id", id}, {"view", view}, {"offset", *offset}, {"total", members.size()}, {"samples", samples}},
            {},
            {}};
}

ApiResponse Service::get_mosaic(const ApiRequest& request) const {
    const std::string color = query_or(request, "color", "accuracy");
    const std::string layout = query_or(request, "layout", "combined");
    if (color != "accuracy" && color != "confidence" && color != "spuriousness") {
        return error_response(400, "bad_request", "color must be accuracy, confidence or spuriousness");
    }
    if (layout != "combined" && layout != "confusion") {
        return error_response(400, "bad_request", "layout must be combined or confusion");
    }
    auto field = published();
    const auto& m = state_.bundle.manifest;

    auto scalar = [&](const Slice& s, std::span<const std::size_t> members) -> json {
        if (color == "spuriousness") {
            if (!field) return nullptr;
            double sum = 0.0;
            for (auto i : members) sum += field->per_point[i];
            return members.empty() ? json(nullptr) : json(sum / static_cast<double>(members.size()));
        }
        if (members.size() == s.members.size()) return color == "accuracy" ? s.accuracy : s.mean_confidence;
        double sum = 0.0;
        for (auto i : members) {
            const auto& r = m.samples[i];
            sum += color == "accuracy" ? (r.label == r.prediction ? 1.0 : 0.0) : r.confidence;
        }
        return sum / static_cast<double>(members.size());
    };
    auto tile = [&](std::size_t id) -> json {
        return state_.tiles.count(id) ? json("/tiles/" + std::to_string(id)) : json(nullptr);
    };

    json body = {{"color", color}, {"layout", layout}, {"version", field ? field->version : 0}};
    if (layout == "combined") {
        json slices = json::array();
        for (const auto& s : state_.slices.slices) {
            slices.push_back({{"id", s.id},
                              {"polygon", polygon_json(s.hull.vertices)},
                              {"color", scalar(s, s.members)},
                              {"tile_url", tile(s.id)}});
        }
        body["slices"] = slices;
        return {200, body, {}, {}};
    }

    const bool binary = m.class_names.size() == 2;
    const std::uint32_t pos = m.positive_class;
    const std::uint32_t neg = 1 - std::min<std::uint32_t>(pos, 1);
    auto name = [&](std::uint32_t c) { return m.class_names[c]; };
    std::vector<std::pair<ConfusionCell, std::string>> cells;
    if (binary) {
        cells = {{ConfusionCell::TruePositive, "label: " + name(pos) + "; prediction: " + name(pos)},
                 {ConfusionCell::FalsePositive, "label: " + name(neg) + "; prediction: " + name(pos)},
                 {ConfusionCell::TrueNegative, "label: " + name(neg) + "; prediction: " + name(neg)},
                 {ConfusionCell::FalseNegative, "label: " + name(pos) + "; prediction: " + name(neg)}};
    } else {
        cells = {{ConfusionCell::Correct, "label = prediction"}, {ConfusionCell::Incorrect, "label != prediction"}};
    }
    json groups = json::array();
    for (const auto& [cell, caption] : cells) {
        json slices = json::array();
        for (const auto& s : state_.slices.slices) {
            auto it = s.confusion_cells.find(cell);
            if (it == s.confusion_cells.end() || it->second.empty()) continue;
            std::vector<Point2> pts;
            for (auto i : it->second) pts.push_back({state_.embedding.coords(i, 0), state_.embedding.coords(i, 1)});
            const Hull h = slice_hull(pts, s.centroid_2d);
            slices.push_back({{"id", s.id},
                              {"size", it->second.size()},
                              {"polygon", polygon_json(h.vertices)},
                              {"color", scalar(s, it->second)},
                              {"tile_url", tile(s.id)}});
        }
        groups.push_back({{"cell", std::string(to_string(cell))}, {"caption", caption}, {"slices", slices}});
    }
    body["cells"] = groups;
    return {200, body, {}, {}};
}

ApiResponse Service::get_spuriousness() const {
    auto field = published();
    if (!field) return {200, {{"version", 0}, {"per_slice", json::object()}, {"per_point", json::array()}}, {}, {}};
    return {200, to_json(*field), {}, {}};
}

ApiResponse Service::get_report() const {
    const fs::path p = state_.dir / project_files::kReport;
    if (!fs::is_regular_file(p)) return error_response(404, "not_found", "no report has been generated");
    std::ifstream in(p);
    return {200, json::parse(in), {}, {}};
}

ApiResponse Service::get_job(std::uint64_t id) const {
    std::lock_guard lock(jobs_mutex_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return error_response(404, "not_found", "unknown job");
    const Job& j = it->second;
    json body = {{"job_id", j.id}, {"kind", j.kind}, {"status", to_string(j.status)}};
    if (j.status == JobStatus::Done) body["result"] = j.result;
    if (j.status == JobStatus::Failed) body["error"] = j.error;
    return {200, body, {}, {}};
}

ApiResponse Service::get_tile(std::size_t id) const {
    auto it = state_.tiles.find(id);
    if (it == state_.tiles.end()) return error_response(404, "not_found", "no tile registered");
    fs::path p = it->second;
    if (p.is_relative()) p = state_.dir / p;
    std::ifstream in(p, std::ios::binary);
    if (!in) return error_response(404, "not_found", "tile file missing");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::string type = "application/octet-stream";
    if (p.extension() == ".png") type = "image/png";
    if (p.extension() == ".jpg" || p.extension() == ".jpeg") type = "image/jpeg";
    return {200, nullptr, std::move(bytes), type};
}

ApiResponse Service::post_annotation(const ApiRequest& request) {
    const json body = parse_body(request);
    if (!body.contains("slice_id") || !body.contains("verdict")) {
        return error_response(400, "bad_request", "slice_id and verdict are required");
    }
    const auto slice_id = body["slice_id"].get<std::size_t>();
    if (slice_id >= state_.slices.slices.size()) return error_response(404, "not_found", "unknown slice");
    const Verdict verdict = parse_verdict(body["verdict"].get<std::string>());

    std::lock_guard writer(writer_mutex_);
    if (body.contains("expected_version") && body["expected_version"].get<std::uint64_t>() != field_version()) {
        return error_response(409, "stale_version", "spuriousness field has moved to version " +
                                                        std::to_string(field_version()));
    }
    const auto a = record_annotation(state_, slice_id, verdict, body.value("note", std::string{}),
                                     body.value("author", std::string{}));
    return {201,
            {{"timestamp", a.timestamp},
             {"slice_id", a.slice_id},
             {"verdict", to_string(a.verdict)},
             {"note", a.note},
             {"author", a.author}},
            {},
            {}};
}

ApiResponse Service::post_propagate(const ApiRequest& request) {
    const bool wait = query_or(request, "wait", "false") == "true";
    return submit(
        "propagate",
        [this] {
            std::lock_guard writer(writer_mutex_);
            auto field = run_propagation(state_);
            {
                std::unique_lock lock(publish_mutex_);
                field_ = std::make_shared<const SpuriousnessField>(field);
            }
            return json{{"version", field.version}, {"iterations", field.iterations}};
        },
        wait);
}

ApiResponse Service::post_corruption(const ApiRequest& request) {
    const json body = parse_body(request);
    if (!body.contains("out")) return error_response(400, "bad_request", "out is required");
    CorruptionSelection selection;
    if (body.contains("tau")) selection.tau = body["tau"].get<double>();
    if (body.contains("slice_ids")) selection.slice_ids = body["slice_ids"].get<std::vector<std::size_t>>();
    if (!selection.tau && selection.slice_ids.empty()) {
        return error_response(400, "bad_request", "tau or slice_ids is required");
    }
    NoiseConfig noise = config_from_json(json{{"noise", body.value("noise", json::object())}}, state_.config).noise;
    noise.validate();
    const fs::path out = body["out"].get<std::string>();
    const bool wait = query_or(request, "wait", "false") == "true";
    return submit(
        "corruption",
        [this, selection, noise, out] {
            std::lock_guard writer(writer_mutex_);
            auto r = export_corruption(state_, selection, noise, out);
            return json{{"root", r.root.string()},
                        {"selected_slices", r.selected_slices},
                        {"corrupted_samples", r.corrupted_samples.size()},
                        {"sigma_pixels", r.sigma_pixels}};
        },
        wait);
}

struct HttpServer::Impl {
    Service& service;
    httplib::Server server;
    explicit Impl(Service& s) : service(s) {}
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        ApiRequest r{req.method, req.path, {}, req.body};
        for (const auto& [k, v] : req.params) r.query[k] = v;
        const ApiResponse a = impl_->service.handle(r);
        res.status = a.status;
        if (!a.content_type.empty()) {
            res.set_content(a.raw, a.content_type);
        } else {
            res.set_content(a.body.dump(), "application/json; charset=utf-8");
        }
    };
    impl_->server.set_socket_options([](socket_t sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
    });
    impl_->server.Get(R"(/.*)", handler);
    impl_->server.Post(R"(/.*)", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
    }
    return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

void serve(const fs::path& project_dir, const std::string& host, int port) {
    Service service(project_dir);
    HttpServer http(service);
    const int bound = http.bind(host, port);
    std::cout << "serving " << project_dir.string() << " on http://" << host << ":" << bound << std::endl;
    http.listen();
}

}  // namespace attrscan
