#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "strokediff/training.hpp"

namespace httplib {
class Server;
}

namespace strokediff {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int step_budget = 1000;  // max denoiser evaluations per request
  int max_samples = 64;    // cap on n for implicit / vectorize
  int threads = 4;

  void validate() const;
};

nlohmann::json to_json(const ServiceConfig& c);
ServiceConfig service_config_from_json(const nlohmann::json& j);

struct ModelEntry {
  std::string id;
  std::filesystem::path path;
  std::string fingerprint;
  std::shared_ptr<const Checkpoint> checkpoint;
};

// Loaded checkpoints are never mutated; handlers hold a shared_ptr for the
// duration of a request so unloading never pulls weights out from under them.
class ModelRegistry {
 public:
  enum class Lookup { kFound, kMissing, kLoading };

  void load(const std::string& id, const std::filesystem::path& path);
  // Two-phase registration; requests for an id between the calls see 503.
  void begin_load(const std::string& id);
  void finish_load(const std::string& id, const std::filesystem::path& path, Checkpoint checkpoint);
  void abort_load(const std::string& id);
  void add(const std::string& id, Checkpoint checkpoint);
  bool unload(const std::string& id);
  Lookup find(const std::string& id, ModelEntry& out) const;
  std::vector<ModelEntry> list() const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, ModelEntry> models_;
  std::set<std::string> loading_;
};

struct HttpResult {
  int status = 200;
  nlohmann::json body;
};

class Service {
 public:
  Service(ServiceConfig config, std::shared_ptr<ModelRegistry> registry);
  ~Service();

  // Transport-free dispatch, used by the HTTP handlers.
  HttpResult handle(const std::string& method, const std::string& path, const std::string& body) const;

  // Blocks until stop(). Port 0 picks a free port; see bound_port().
  void listen();
  bool bind();  // bind without serving; call listen_after_bind() next
  void listen_after_bind();
  void stop();
  int bound_port() const { return bound_port_; }
  void wait_until_ready() const;

  ModelRegistry& registry() { return *registry_; }

 private:
  void install_routes();

  ServiceConfig config_;
  std::shared_ptr<ModelRegistry> registry_;
  std::unique_ptr<httplib::Server> server_;
  int bound_port_ = 0;
};

}  // namespace strokediff
