#pragma once

// Run service behind the /api/v1 HTTP endpoints. Datasets and runs are
// keyed by content hash and persisted under a data directory; pipelines run
// on background threads and are polled through get_run.

#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "stmine/error.hpp"
#include "stmine/explain.hpp"
#include "stmine/ingest.hpp"
#include "stmine/pipeline.hpp"

namespace stmine {

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    fail("Internal", "sha256 failed");
  std::string hex;
  char buf[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

struct Response {
  int status = 200;
  nlohmann::json body;
};

inline int http_status_for(const std::string& code) {
  if (code.rfind("Unknown", 0) == 0) return 404;
  if (code == "NotReady" || code == "ExplainInFlight") return 409;
  if (code == "ProviderUnavailable") return 502;
  if (code == "Internal") return 500;
  return 400;
}

inline Response error_response(const std::string& code, const std::string& message) {
  return {http_status_for(code), {{"error", {{"code", code}, {"message", message}}}}};
}

enum class RunStatus { Pending, Mining, Clustering, Ready, Failed };

inline std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Pending: return "pending";
    case RunStatus::Mining: return "mining";
    case RunStatus::Clustering: return "clustering";
    case RunStatus::Ready: return "ready";
    case RunStatus::Failed: return "failed";
  }
  return "failed";
}

struct ServiceOptions {
  std::filesystem::path dataDir;  // empty: memory only
  std::function<std::unique_ptr<TextProvider>()> providerFactory;
  bool async = true;
};

class Service {
 public:
  explicit Service(ServiceOptions options) : options_(std::move(options)) {
    if (!options_.dataDir.empty()) load();
  }

  ~Service() {
    std::vector<std::jthread> workers;
    {
      std::lock_guard lock(mutex_);
      workers.swap(workers_);
    }
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response create_dataset(std::string csv, std::string geojson, const std::string& idProperty = "name") {
    return guarded([&]() -> Response {
      if (geojson.empty()) fail("MissingFile", "a GeoJSON regions file is required");
      auto ingest = parse_events_csv(csv, {});
      auto regions = parse_regions_geojson(geojson, idProperty);
      ingest.report.unmatchedPlaces = validate_region_coverage(ingest.events, regions);
      for (const auto& col : ingest.descriptor.columns)
        if (col != kDateColumn && col != kPlaceColumn) ingest.descriptor.attributeColumns.push_back(col);

      auto dataset = std::make_shared<Dataset>();
      dataset->id = sha256_hex(csv + '\0' + geojson);
      dataset->csv = std::move(csv);
      dataset->geojson = std::move(geojson);
      dataset->summary = {{"datasetId", dataset->id},
                          {"descriptor", to_json(ingest.descriptor)},
                          {"report", to_json(ingest.report)},
                          {"warnings", warnings_for(ingest.report)}};
      {
        std::lock_guard lock(mutex_);
        datasets_.try_emplace(dataset->id, dataset);
      }
      persist_dataset(*dataset);
      return {201, dataset->summary};
    });
  }

  Response get_dataset(const std::string& id) {
    return guarded([&]() -> Response { return {200, dataset(id)->summary}; });
  }

  Response regions(const std::string& id) {
    return guarded([&]() -> Response { return {200, nlohmann::json::parse(dataset(id)->geojson)}; });
  }

  /// Body: {"datasetId": ..., "config": {...}}. Identical dataset and config
  /// map to the same run id; a failed run is retried.
  Response create_run(const nlohmann::json& body) {
    return guarded([&]() -> Response {
      if (!body.is_object() || !body.contains("datasetId") || !body["datasetId"].is_string())
        fail("InvalidConfig", "request needs a string 'datasetId'");
      auto ds = dataset(body["datasetId"].get<std::string>());
      RunConfig config = run_config_from_json(body.value("config", nlohmann::json::object()));
      std::string runId = sha256_hex(ds->id + '\n' + to_json(config).dump());

      std::shared_ptr<Run> run;
      {
        std::lock_guard lock(mutex_);
        auto& slot = runs_[runId];
        if (slot && slot->status() != RunStatus::Failed) return {200, slot->status_json()};
        slot = std::make_shared<Run>(runId, ds->id, config);
        run = slot;
      }
      persist_run(*run);
      start(run, ds);
      return {202, run->status_json()};
    });
  }

  Response get_run(const std::string& runId) {
    return guarded([&]() -> Response { return {200, run(runId)->status_json()}; });
  }

  /// Blocks until the run is ready or failed.
  Response wait_run(const std::string& runId) {
    return guarded([&]() -> Response {
      auto r = run(runId);
      r->wait();
      return {200, r->status_json()};
    });
  }

  Response artifact(const std::string& runId) {
    return read(runId, [](const RunResult& r) { return artifact_json(r); });
  }

  Response attribute_matrix(const std::string& runId, const std::string& level, std::optional<int> cluster) {
    return read(runId, [&](const RunResult& r) { return to_json(stmine::attribute_matrix(r, level, cluster)); });
  }

  Response heatmap(const std::string& runId, const std::string& level, std::optional<int> cluster) {
    return read(runId, [&](const RunResult& r) { return heatmap_json(r, level, cluster); });
  }

  Response map(const std::string& runId, const MapSelection& selection) {
    return read(runId, [&](const RunResult& r) { return map_json(r, selection); });
  }

  Response scatter(const std::string& runId, const std::string& x, const std::string& y) {
    return read(runId, [&](const RunResult& r) { return scatter_json(r, x, y); });
  }

  /// Body: {"ruleKey": ..., "places": [...], "start": "YYYY-mm-dd", "end": "YYYY-mm-dd"}.
  Response explain(const std::string& runId, const nlohmann::json& body) {
    return guarded([&]() -> Response {
      auto r = run(runId);
      auto result = r->result();
      if (!body.is_object() || !body.contains("ruleKey") || !body["ruleKey"].is_string())
        fail("InvalidRequest", "request needs a string 'ruleKey'");
      const auto* rule = result->find_rule(body["ruleKey"].get<std::string>());
      if (!rule) fail("UnknownRule", "no rule " + body["ruleKey"].get<std::string>());

      ContextOptions options;
      options.datasetNoun = result->config.datasetNoun;
      try {
        if (body.contains("places")) options.places = body["places"].get<std::vector<std::string>>();
        if (body.contains("start")) options.start = Date::parse_or_throw(body["start"].get<std::string>(), "InvalidRequest");
        if (body.contains("end")) options.end = Date::parse_or_throw(body["end"].get<std::string>(), "InvalidRequest");
      } catch (const nlohmann::json::exception& e) {
        fail("InvalidRequest", e.what());
      }
      auto req = select_default_context(*rule, result->ruleProfiles[result->rule_position(rule)], *result->index,
                                        options);

      std::unique_lock inFlight(r->explainMutex, std::try_to_lock);
      if (!inFlight.owns_lock()) fail("ExplainInFlight", "an explanation is already running for this run");
      if (!options_.providerFactory) fail("ProviderUnavailable", "no LLM provider configured");
      auto provider = options_.providerFactory();
      if (!provider) fail("ProviderUnavailable", "no LLM provider configured");
      auto explanation = stmine::explain(req, *provider);
      return {200, {{"ruleKey", rule->key}, {"locations", req.locations}, {"hypotheses", to_json(explanation)}}};
    });
  }

 private:
  struct Dataset {
    std::string id;
    std::string csv;
    std::string geojson;
    nlohmann::json summary;
  };

  class Run {
   public:
    Run(std::string id, std::string datasetId, RunConfig config)
        : id_(std::move(id)), datasetId_(std::move(datasetId)), config_(std::move(config)) {}

    const std::string& id() const { return id_; }
    const std::string& dataset_id() const { return datasetId_; }
    const RunConfig& config() const { return config_; }

    RunStatus status() const {
      std::lock_guard lock(mutex_);
      return status_;
    }

    void set_status(RunStatus s) {
      std::lock_guard lock(mutex_);
      status_ = s;
    }

    void finish(std::shared_ptr<const RunResult> result) {
      {
        std::lock_guard lock(mutex_);
        result_ = std::move(result);
        status_ = RunStatus::Ready;
      }
      done_.notify_all();
    }

    void fail_with(std::string code, std::string message) {
      {
        std::lock_guard lock(mutex_);
        errorCode_ = std::move(code);
        error_ = std::move(message);
        status_ = RunStatus::Failed;
      }
      done_.notify_all();
    }

    void wait() {
      std::unique_lock lock(mutex_);
      done_.wait(lock, [&] { return status_ == RunStatus::Ready || status_ == RunStatus::Failed; });
    }

    std::shared_ptr<const RunResult> result() const {
      std::lock_guard lock(mutex_);
      if (status_ != RunStatus::Ready) fail("NotReady", "run " + id_ + " is " + to_string(status_));
      return result_;
    }

    nlohmann::json status_json() const {
      std::lock_guard lock(mutex_);
      nlohmann::json j{{"runId", id_}, {"datasetId", datasetId_}, {"status", to_string(status_)},
                       {"config", to_json(config_)}};
      if (status_ == RunStatus::Failed) j["error"] = {{"code", errorCode_}, {"message", error_}};
      if (status_ == RunStatus::Ready)
        j["summary"] = {{"rules", result_->rules.size()},
                        {"clusters", result_->partition.clusterCount},
                        {"slices", result_->slices.size()},
                        {"modularity", result_->partition.modularity}};
      return j;
    }

    std::mutex explainMutex;

   private:
    std::string id_;
    std::string datasetId_;
    RunConfig config_;
    mutable std::mutex mutex_;
    std::condition_variable done_;
    RunStatus status_ = RunStatus::Pending;
    std::shared_ptr<const RunResult> result_;
    std::string errorCode_;
    std::string error_;
  };

  template <class F>
  Response guarded(F&& f) {
    try {
      return f();
    } catch (const Error& e) {
      return error_response(e.code(), e.what());
    } catch (const std::exception& e) {
      return error_response("Internal", e.what());
    }
  }

  template <class F>
  Response read(const std::string& runId, F&& view) {
    return guarded([&]() -> Response { return {200, view(*run(runId)->result())}; });
  }

  std::shared_ptr<Dataset> dataset(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto it = datasets_.find(id);
    if (it == datasets_.end()) fail("UnknownDataset", "no dataset " + id);
    return it->second;
  }

  std::shared_ptr<Run> run(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto it = runs_.find(id);
    if (it == runs_.end() || !it->second) fail("UnknownRun", "no run " + id);
    return it->second;
  }

  static nlohmann::json warnings_for(const IngestReport& report) {
    nlohmann::json w = nlohmann::json::array();
    for (const auto& p : report.unmatchedPlaces)
      w.push_back({{"code", "UnmatchedPlace"}, {"place", p}, {"message", "place '" + p + "' has no region"}});
    return w;
  }

  void start(std::shared_ptr<Run> run, std::shared_ptr<Dataset> ds) {
    auto job = [this, run, ds] {
      try {
        auto result = std::make_shared<RunResult>(run_pipeline(ds->csv, ds->geojson, run->config(), [&](Stage s) {
          run->set_status(s == Stage::Mining ? RunStatus::Mining : RunStatus::Clustering);
        }));
        if (!options_.dataDir.empty()) write_file(run_path(run->id(), ".artifact.json"), artifact_json(*result).dump());
        run->finish(std::move(result));
      } catch (const Error& e) {
        run->fail_with(e.code(), e.what());
      } catch (const std::exception& e) {
        run->fail_with("Internal", e.what());
      }
      persist_run(*run);
    };
    if (!options_.async) {
      job();
      return;
    }
    std::lock_guard lock(mutex_);
    workers_.emplace_back(job);
  }

  // ---- persistence

  std::filesystem::path run_path(const std::string& id, const char* suffix) const {
    return options_.dataDir / "runs" / (id + suffix);
  }

  static void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      out << content;
      if (!out) fail("Internal", "cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

  static std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void persist_dataset(const Dataset& ds) {
    if (options_.dataDir.empty()) return;
    nlohmann::json j{{"id", ds.id}, {"csv", ds.csv}, {"geojson", ds.geojson}, {"summary", ds.summary}};
    write_file(options_.dataDir / "datasets" / (ds.id + ".json"), j.dump());
  }

  void persist_run(const Run& run) {
    if (options_.dataDir.empty()) return;
    std::lock_guard lock(persistMutex_);
    write_file(run_path(run.id(), ".json"), run.status_json().dump());
  }

  // Datasets come back verbatim; runs that were ready are recomputed, which
  // yields identical artifacts because the pipeline is deterministic.
  void load() {
    namespace fs = std::filesystem;
    if (fs::exists(options_.dataDir / "datasets"))
      for (const auto& entry : fs::directory_iterator(options_.dataDir / "datasets")) {
        if (entry.path().extension() != ".json") continue;
        auto j = nlohmann::json::parse(read_file(entry.path()), nullptr, false);
        if (j.is_discarded()) continue;
        auto ds = std::make_shared<Dataset>(Dataset{j["id"], j["csv"], j["geojson"], j["summary"]});
        datasets_.emplace(ds->id, ds);
      }
    if (!fs::exists(options_.dataDir / "runs")) return;
    for (const auto& entry : fs::directory_iterator(options_.dataDir / "runs")) {
      const auto name = entry.path().filename().string();
      if (!name.ends_with(".json") || name.ends_with(".artifact.json")) continue;
      auto j = nlohmann::json::parse(read_file(entry.path()), nullptr, false);
      if (j.is_discarded() || j.value("status", "") != "ready") continue;
      auto ds = datasets_.find(j.value("datasetId", ""));
      if (ds == datasets_.end()) continue;
      auto run = std::make_shared<Run>(j["runId"], ds->first, run_config_from_json(j["config"]));
      runs_.emplace(run->id(), run);
      start(run, ds->second);
    }
  }

  ServiceOptions options_;
  std::mutex mutex_;
  std::mutex persistMutex_;
  std::map<std::string, std::shared_ptr<Dataset>> datasets_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
  std::vector<std::jthread> workers_;
};

// ---------------------------------------------------------------------------
// HTTP binding

namespace detail {

inline void reply(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

inline std::optional<int> cluster_param(const httplib::Request& req) {
  if (!req.has_param("cluster") || req.get_param_value("cluster").empty()) return std::nullopt;
  const auto& v = req.get_param_value("cluster");
  try {
    std::size_t used = 0;
    int c = std::stoi(v, &used);
    if (used == v.size()) return c;
  } catch (const std::exception&) {
  }
  fail("UnknownCluster", "cluster id '" + v + "' is not an integer");
}

inline std::string param_or(const httplib::Request& req, const char* name, std::string fallback) {
  return req.has_param(name) ? req.get_param_value(name) : fallback;
}

inline nlohmann::json json_body(const httplib::Request& req) {
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded()) fail("InvalidRequest", "request body is not JSON");
  return j;
}

template <class F>
void handle(httplib::Response& res, F&& f) {
  try {
    reply(res, f());
  } catch (const Error& e) {
    reply(res, error_response(e.code(), e.what()));
  }
}

}  // namespace detail

/// Registers every /api/v1 endpoint on `server`.
inline void mount(httplib::Server& server, Service& service) {
  using httplib::Request;
  using httplib::Response;
  namespace d = detail;

  server.Post("/api/v1/datasets", [&](const Request& req, Response& res) {
    d::handle(res, [&] {
      if (!req.has_file("events")) fail("MissingFile", "multipart field 'events' (CSV) is required");
      std::string geojson = req.has_file("regions") ? req.get_file_value("regions").content : std::string();
      std::string idProperty = req.has_file("idProperty") ? req.get_file_value("idProperty").content : "name";
      return service.create_dataset(req.get_file_value("events").content, std::move(geojson), idProperty);
    });
  });
  server.Get("/api/v1/datasets/:id", [&](const Request& req, Response& res) {
    d::handle(res, [&] { return service.get_dataset(req.path_params.at("id")); });
  });
  server.Get("/api/v1/datasets/:id/regions", [&](const Request& req, Response& res) {
    d::handle(res, [&] { return service.regions(req.path_params.at("id")); });
  });
  server.Post("/api/v1/runs", [&](const Request& req, Response& res) {
    d::handle(res, [&] { return service.create_run(d::json_body(req)); });
  });
  server.Get("/api/v1/runs/:id", [&](const Request& req, Response& res) {
    d::handle(res, [&] { return service.get_run(req.path_params.at("id")); });
  });
  server.Get("/api/v1/runs/:id/artifact", [&](const Request& req, Response& res) {
    d::handle(res, [&] { return service.artifact(req.path_params.at("id")); });
  });
  server.Get("/api/v1/runs/:id/attributes", [&](const Request& req, Response& res) {
    d::handle(res, [&] {
      return service.attribute_matrix(req.path_params.at("id"), d::param_or(req, "level", "cluster"),
                                      d::cluster_param(req));
    });
  });
  server.Get("/api/v1/runs/:id/heatmap", [&](const Request& req, Response& res) {
    d::handle(res, [&] {
      return service.heatmap(req.path_params.at("id"), d::param_or(req, "level", "cluster"), d::cluster_param(req));
    });
  });
  server.Get("/api/v1/runs/:id/map", [&](const Request& req, Response& res) {
    d::handle(res, [&] {
      MapSelection sel;
      sel.cluster = d::cluster_param(req);
      if (req.has_param("rule") && !req.get_param_value("rule").empty()) sel.ruleKey = req.get_param_value("rule");
      std::string slices = d::param_or(req, "slices", "");
      for (std::size_t pos = 0; !slices.empty() && pos <= slices.size();) {
        auto comma = slices.find(',', pos);
        auto label = slices.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!label.empty()) sel.sliceLabels.push_back(label);
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      return service.map(req.path_params.at("id"), sel);
    });
  });
  server.Get("/api/v1/runs/:id/scatter", [&](const Request& req, Response& res) {
    d::handle(res, [&] {
      return service.scatter(req.path_params.at("id"), d::param_or(req, "x", "ruleCount"),
                             d::param_or(req, "y", "meanLift"));
    });
  });
  server.Post("/api/v1/runs/:id/explain", [&](const Request& req, Response& res) {
    d::handle(res, [&] { return service.explain(req.path_params.at("id"), d::json_body(req)); });
  });
}

}  // namespace stmine
