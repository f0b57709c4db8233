#include "strokediff/service.hpp"

#include <random>
#include <regex>
#include <thread>

#include "strokediff/applications.hpp"
#include "strokediff/checkpoint.hpp"
#include "strokediff/sketch_io.hpp"

// After Eigen: glibc's resolv.h defines a _res macro that collides with Eigen parameter names.
#include <httplib.h>

namespace strokediff {

using json = nlohmann::json;

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw ConfigError("port must lie in [0, 65535]");
  if (step_budget < 1) throw ConfigError("step_budget must be >= 1");
  if (max_samples < 1) throw ConfigError("max_samples must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

json to_json(const ServiceConfig& c) {
  return {{"host", c.host},
          {"port", c.port},
          {"step_budget", c.step_budget},
          {"max_samples", c.max_samples},
          {"threads", c.threads}};
}

ServiceConfig service_config_from_json(const json& j) {
  ServiceConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "host") c.host = value.get<std::string>();
      else if (key == "port") c.port = value.get<int>();
      else if (key == "step_budget") c.step_budget = value.get<int>();
      else if (key == "max_samples") c.max_samples = value.get<int>();
      else if (key == "threads") c.threads = value.get<int>();
      else throw ConfigError("unknown service config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad service config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- registry

void ModelRegistry::begin_load(const std::string& id) {
  if (id.empty()) throw ConfigError("model id must not be empty");
  std::unique_lock lock(mutex_);
  if (models_.count(id) || loading_.count(id)) throw ConfigError("model id '" + id + "' is already registered");
  loading_.insert(id);
}

void ModelRegistry::finish_load(const std::string& id, const std::filesystem::path& path, Checkpoint checkpoint) {
  auto ckpt = std::make_shared<const Checkpoint>(std::move(checkpoint));
  ModelEntry entry{id, path, checkpoint_fingerprint(*ckpt), ckpt};
  std::unique_lock lock(mutex_);
  if (!loading_.erase(id)) throw StateError("model id '" + id + "' was not being loaded");
  models_.emplace(id, std::move(entry));
}

void ModelRegistry::abort_load(const std::string& id) {
  std::unique_lock lock(mutex_);
  loading_.erase(id);
}

void ModelRegistry::load(const std::string& id, const std::filesystem::path& path) {
  begin_load(id);
  try {
    finish_load(id, path, load_checkpoint(path));
  } catch (...) {
    abort_load(id);
    throw;
  }
}

void ModelRegistry::add(const std::string& id, Checkpoint checkpoint) {
  if (id.empty()) throw ConfigError("model id must not be empty");
  auto ckpt = std::make_shared<const Checkpoint>(std::move(checkpoint));
  std::unique_lock lock(mutex_);
  if (models_.count(id) || loading_.count(id)) throw ConfigError("model id '" + id + "' is already registered");
  models_.emplace(id, ModelEntry{id, {}, checkpoint_fingerprint(*ckpt), ckpt});
}

bool ModelRegistry::unload(const std::string& id) {
  std::unique_lock lock(mutex_);
  return models_.erase(id) > 0;
}

ModelRegistry::Lookup ModelRegistry::find(const std::string& id, ModelEntry& out) const {
  std::shared_lock lock(mutex_);
  if (loading_.count(id)) return Lookup::kLoading;
  auto it = models_.find(id);
  if (it == models_.end()) return Lookup::kMissing;
  out = it->second;
  return Lookup::kFound;
}

std::vector<ModelEntry> ModelRegistry::list() const {
  std::shared_lock lock(mutex_);
  std::vector<ModelEntry> out;
  for (const auto& [id, entry] : models_) out.push_back(entry);
  return out;
}

// ---- request helpers

namespace {

struct HttpError {
  int status;
  std::string message;
};

HttpResult error_result(int status, const std::string& message) {
  return {status, json{{"error", message}}};
}

Sketch request_sketch(const json& body, const char* key) {
  if (!body.contains(key)) throw HttpError{400, std::string("missing field '") + key + "'"};
  const json& raw = body.at(key);
  Sketch s = sketch_from_json(raw.is_object() ? raw.at("points") : raw);
  validate_sketch(s);
  if (arc_length(s) <= 0.0) throw HttpError{422, std::string("'") + key + "' has zero arc length"};
  return s;
}

std::uint64_t request_seed(const json& body) {
  if (body.contains("seed") && !body.at("seed").is_null()) return body.at("seed").get<std::uint64_t>();
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

template <typename T>
T field_or(const json& body, const char* key, T fallback) {
  if (!body.contains(key) || body.at(key).is_null()) return fallback;
  return body.at(key).get<T>();
}

json sketches_json(const std::vector<Sketch>& sketches) {
  json arr = json::array();
  for (const auto& s : sketches) arr.push_back(sketch_to_json(s));
  return arr;
}

std::string mode_name(ConditionMode m) { return to_string(m); }

}  // namespace

// ---- service

Service::Service(ServiceConfig config, std::shared_ptr<ModelRegistry> registry)
    : config_(std::move(config)), registry_(std::move(registry)), server_(std::make_unique<httplib::Server>()) {
  config_.validate();
  const int threads = config_.threads;
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  install_routes();
}

Service::~Service() { stop(); }

HttpResult Service::handle(const std::string& method, const std::string& path, const std::string& body_text) const {
  static const std::regex model_op(R"(^/models/([^/]+)/([a-z]+)$)");
  static const std::regex admin_model(R"(^/admin/models/([^/]+)$)");
  std::smatch m;
  try {
    if (method == "GET" && path == "/models") {
      json arr = json::array();
      for (const auto& e : registry_->list()) {
        const auto& model = e.checkpoint->model;
        arr.push_back({{"id", e.id},
                       {"mode", mode_name(model.mode)},
                       {"T", model.schedule.T},
                       {"latent_dim", model.latent_dim()},
                       {"train_length", model.train_length},
                       {"fingerprint", e.fingerprint}});
      }
      return {200, json{{"models", arr}}};
    }
    if (method == "GET" && path == "/health") return {200, json{{"status", "ok"}}};

    const json body = body_text.empty() ? json::object() : json::parse(body_text);
    if (!body.is_object()) throw HttpError{400, "request body must be a JSON object"};

    if (method == "POST" && path == "/admin/models") {
      const auto id = body.at("id").get<std::string>();
      const auto ckpt_path = body.at("path").get<std::string>();
      try {
        registry_->load(id, ckpt_path);
      } catch (const CheckpointError& e) {
        throw HttpError{400, e.what()};
      }
      return {201, json{{"id", id}}};
    }
    if (method == "DELETE" && std::regex_match(path, m, admin_model)) {
      if (!registry_->unload(m[1])) throw HttpError{404, "unknown model '" + m[1].str() + "'"};
      return {200, json{{"id", m[1].str()}, {"unloaded", true}}};
    }
    if (method != "POST" || !std::regex_match(path, m, model_op)) throw HttpError{404, "no route for " + method + " " + path};

    const std::string id = m[1];
    const std::string op = m[2];
    ModelEntry entry;
    switch (registry_->find(id, entry)) {
      case ModelRegistry::Lookup::kMissing: throw HttpError{404, "unknown model '" + id + "'"};
      case ModelRegistry::Lookup::kLoading: throw HttpError{503, "model '" + id + "' is loading"};
      case ModelRegistry::Lookup::kFound: break;
    }
    const DiffusionModel& model = entry.checkpoint->model;
    const int T = model.schedule.T;
    const std::uint64_t seed = request_seed(body);
    Rng rng(seed);
    auto budget = [&](int steps) {
      if (steps > config_.step_budget) {
        throw HttpError{400, "request needs " + std::to_string(steps) + " denoiser steps, budget is " +
                                 std::to_string(config_.step_budget) + "; use DDIM with fewer steps"};
      }
    };
    auto count = [&](const char* key) {
      const int n = field_or(body, key, 1);
      if (n < 1 || n > config_.max_samples) {
        throw HttpError{400, std::string("'") + key + "' must lie in [1, " + std::to_string(config_.max_samples) + "]"};
      }
      return n;
    };

    json out{{"seed", seed}, {"model", id}};
    if (op == "sample") {
      const int length = field_or(body, "length", model.train_length);
      Sketch s;
      if (body.contains("k") && !body.at("k").is_null()) {
        budget(T);
        s = abstract_sample(model, body.at("k").get<double>(), 1, length, rng).front();
      } else {
        SampleOptions o;
        o.sampler = parse_sampler(field_or<std::string>(body, "sampler", "ddim"));
        o.steps = o.sampler == SamplerKind::kDdpm ? T : field_or(body, "steps", std::min(50, T));
        budget(o.steps);
        Matrix z;
        const Matrix* zp = nullptr;
        if (model.latent_dim() > 0) {
          z = Matrix::Zero(1, model.latent_dim());
          zp = &z;
        }
        s = sample(model, 1, length, o, zp, rng).front();
      }
      out["sketch"] = sketch_to_json(s);
      // Drawing order drives the topology colour map; strokes are reported alongside.
      json order = json::array();
      for (std::size_t i = 0; i < s.size(); ++i) order.push_back(i);
      out["topology"] = order;
      out["strokes"] = stroke_index(s);
    } else if (op == "heal") {
      const Sketch s = request_sketch(body, "sketch");
      const int t_h = step_from_fraction(model.schedule, field_or(body, "th_frac", 0.2));
      budget(t_h);
      out["sketch"] = sketch_to_json(heal(model, s, t_h, rng));
    } else if (op == "implicit") {
      const Sketch s = request_sketch(body, "sketch");
      const int t_c = step_from_fraction(model.schedule, field_or(body, "tc_frac", 0.2));
      const int n = count("n");
      budget(t_c);
      out["sketches"] = sketches_json(implicit_condition(model, s, t_c, n, rng));
    } else if (op == "mix") {
      const Sketch base = request_sketch(body, "base");
      const std::string mode = field_or<std::string>(body, "mode", "latent-ddim");
      if (mode == "latent-ddim") {
        const Sketch ref = body.contains("reference") ? request_sketch(body, "reference") : base;
        const int steps = field_or(body, "steps", std::min(50, T));
        budget(steps);
        out["sketch"] = sketch_to_json(interpolate_latent(model, base, ref, field_or(body, "delta", 0.0), steps));
      } else if (mode == "ilvr") {
        const Sketch ref = request_sketch(body, "reference");
        budget(T);
        out["sketch"] = sketch_to_json(ilvr_mix(model, base, ref, field_or(body, "omega", 3), rng));
      } else {
        throw HttpError{400, "mix mode must be 'latent-ddim' or 'ilvr'"};
      }
    } else if (op == "vectorize") {
      const json& raw = body.at("points");
      PointSet p{Matrix(static_cast<Eigen::Index>(raw.size()), 2)};
      for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i].size() < 2) throw HttpError{400, "points must be [x, y] pairs"};
        p.points(i, 0) = raw[i][0].get<double>();
        p.points(i, 1) = raw[i][1].get<double>();
      }
      if (p.size() < 2) throw HttpError{422, "vectorize needs at least 2 points"};
      const int n = count("n");
      budget(T);
      out["sketches"] = sketches_json(vectorize(model, p, n, rng, field_or(body, "length", 0)));
    } else if (op == "reconstruct") {
      const Sketch s = request_sketch(body, "sketch");
      SampleOptions o;
      o.steps = field_or(body, "steps", std::min(50, T));
      budget(o.steps);
      out["sketch"] = sketch_to_json(reconstruct(model, s, field_or(body, "length_factor", 1.0), o, rng));
    } else {
      throw HttpError{404, "unknown operation '" + op + "'"};
    }
    return {200, out};
  } catch (const HttpError& e) {
    return error_result(e.status, e.message);
  } catch (const json::exception& e) {
    return error_result(400, std::string("bad request: ") + e.what());
  } catch (const ParseError& e) {
    return error_result(400, e.what());
  } catch (const ConfigError& e) {
    return error_result(400, e.what());
  } catch (const ModeError& e) {
    return error_result(400, e.what());
  } catch (const ContractError& e) {
    return error_result(400, e.what());
  } catch (const DataError& e) {
    return error_result(422, e.what());
  } catch (const PreprocessError& e) {
    return error_result(422, e.what());
  } catch (const std::exception& e) {
    return error_result(500, e.what());
  }
}

void Service::install_routes() {
  auto bridge = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResult r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server_->Get(R"(/.*)", bridge);
  server_->Post(R"(/.*)", bridge);
  server_->Delete(R"(/.*)", bridge);
}

bool Service::bind() {
  if (config_.port == 0) {
    bound_port_ = server_->bind_to_any_port(config_.host);
    return bound_port_ > 0;
  }
  if (!server_->bind_to_port(config_.host, config_.port)) return false;
  bound_port_ = config_.port;
  return true;
}

void Service::listen_after_bind() { server_->listen_after_bind(); }

void Service::listen() {
  if (!bind()) throw ConfigError("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  listen_after_bind();
}

void Service::stop() {
  if (server_) server_->stop();
}

void Service::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace strokediff
