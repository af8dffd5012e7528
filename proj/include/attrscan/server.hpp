#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>

#include "attrscan/project.hpp"
#include "json.hpp"

namespace attrscan {

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
    std::string raw;  // non-JSON payload (tile images) when content_type is set
    std::string content_type;
};

enum class JobStatus { Queued, Running, Done, Failed };
std::string_view to_string(JobStatus s) noexcept;

struct Job {
    std::uint64_t id = 0;
    std::string kind;
    JobStatus status = JobStatus::Queued;
    nlohmann::json result;
    std::string error;
};

// Request handling for a loaded project. Reads run concurrently; annotations
// and jobs go through a single writer path. Propagation and corruption exports
// run on a worker thread and publish their results atomically by version.
class Service {
public:
    explicit Service(const std::filesystem::path& project_dir);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    ApiResponse handle(const ApiRequest& request);

    std::uint64_t field_version() const;
    Job job(std::uint64_t id) const;
    void wait_idle();

private:
    ApiResponse get_slices() const;
    ApiResponse get_slice(std::size_t id) const;
    ApiResponse get_samples(std::size_t id, const ApiRequest& request) const;
    ApiResponse get_mosaic(const ApiRequest& request) const;
    ApiResponse get_spuriousness() const;
    ApiResponse get_report() const;
    ApiResponse get_job(std::uint64_t id) const;
    ApiResponse get_tile(std::size_t id) const;
    ApiResponse post_annotation(const ApiRequest& request);
    ApiResponse post_propagate(const ApiRequest& request);
    ApiResponse post_corruption(const ApiRequest& request);

    std::shared_ptr<const SpuriousnessField> published() const;
    ApiResponse submit(std::string kind, std::function<nlohmann::json()> work, bool wait);
    void worker_loop();

    ProjectState state_;
    mutable std::shared_mutex publish_mutex_;
    std::shared_ptr<const SpuriousnessField> field_;
    std::mutex writer_mutex_;

    mutable std::mutex jobs_mutex_;
    std::condition_variable jobs_cv_;
    std::condition_variable idle_cv_;
    std::map<std::uint64_t, Job> jobs_;
    std::deque<std::pair<std::uint64_t, std::function<nlohmann::json()>>> queue_;
    std::uint64_t next_job_ = 1;
    bool busy_ = false;
    bool stopping_ = false;
    std::thread worker_;
};

// HTTP front end over a Service. Port 0 binds an ephemeral port.
class HttpServer {
public:
    explicit HttpServer(Service& service);
    ~HttpServer();

    int bind(const std::string& host, int port);  // throws Error(Io) when the port is busy
    void listen();                                 // blocks until stop()
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

void serve(const std::filesystem::path& project_dir, const std::string& host, int port);

}  // namespace attrscan
