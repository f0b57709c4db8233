#include "strokediff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "strokediff/errors.hpp"
#include "strokediff/sketch_io.hpp"

namespace strokediff {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "weight files are little-endian");

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

struct NamedStore {
  std::string prefix;
  const ad::ParameterStore* store;
};

std::vector<NamedStore> stores_of(const DiffusionModel& m) {
  std::vector<NamedStore> out{{"estimator", &m.estimator.params()}};
  if (m.sequence_encoder) out.push_back({"sequence_encoder", &m.sequence_encoder->params()});
  if (m.set_encoder) out.push_back({"set_encoder", &m.set_encoder->params()});
  return out;
}

ad::ParameterStore& mutable_store(DiffusionModel& m, const std::string& prefix) {
  if (prefix == "estimator") return m.estimator.params();
  if (prefix == "sequence_encoder" && m.sequence_encoder) return m.sequence_encoder->params();
  if (prefix == "set_encoder" && m.set_encoder) return m.set_encoder->params();
  throw CheckpointError("checkpoint names unknown component '" + prefix + "'");
}

std::vector<float> pack(const Checkpoint& c, json& index) {
  std::vector<float> blob;
  index = json::array();
  for (const auto& [prefix, store] : stores_of(c.model)) {
    for (const auto& p : store->items()) {
      index.push_back({{"component", prefix},
                       {"name", p.name},
                       {"rows", p.value.rows()},
                       {"cols", p.value.cols()},
                       {"offset", blob.size()}});
      for (Eigen::Index i = 0; i < p.value.size(); ++i) blob.push_back(static_cast<float>(p.value.data()[i]));
    }
  }
  return blob;
}

json history_to_json(const std::vector<EpochRecord>& history) {
  json out = json::array();
  for (const auto& r : history) {
    out.push_back({{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}});
  }
  return out;
}

std::vector<EpochRecord> history_from_json(const json& j) {
  std::vector<EpochRecord> out;
  for (const auto& r : j) {
    out.push_back({r.at("epoch").get<int>(), r.at("lr").get<double>(), r.at("train_loss").get<double>(),
                   r.at("val_loss").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                              : r.at("val_loss").get<double>()});
  }
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const fs::path& dir) {
  json index;
  const auto blob = pack(c, index);
  const std::size_t bytes = blob.size() * sizeof(float);
  json manifest = {
      {"version", kCheckpointVersion},
      {"dtype", "float32"},
      {"mode", to_string(c.model.mode)},
      {"epoch", c.epoch},
      {"velocity_scale", c.model.velocity_scale},
      {"train_length", c.model.train_length},
      {"schedule", schedule_to_json(c.model.schedule)},
      {"train_config", to_json(c.config)},
      {"history", history_to_json(c.history)},
      {"arrays", index},
      {"weights", {{"file", "weights.bin"}, {"bytes", bytes}, {"fnv1a", hex(fnv1a(blob.data(), bytes))}}},
  };
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CheckpointError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  write_file_atomic(dir / "weights.bin", std::string(reinterpret_cast<const char*>(blob.data()), bytes));
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::is_directory(dir) || !fs::exists(manifest_path)) {
    throw CheckpointError("no checkpoint at " + dir.string());
  }
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
  try {
    const int version = m.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
    const auto dtype = m.at("dtype").get<std::string>();
    if (dtype != "float32") throw CheckpointError("checkpoint stores " + dtype + " weights; only float32 is accepted");

    Checkpoint c;
    c.config = train_config_from_json(m.at("train_config"));
    c.epoch = m.at("epoch").get<int>();
    c.history = history_from_json(m.at("history"));
    c.model = init_model(c.config);
    c.model.schedule = schedule_from_json(m.at("schedule"));
    c.model.velocity_scale = m.at("velocity_scale").get<double>();
    c.model.train_length = m.at("train_length").get<int>();
    if (parse_condition_mode(m.at("mode").get<std::string>()) != c.model.mode) {
      throw CheckpointError("checkpoint mode disagrees with its training config");
    }

    const auto& w = m.at("weights");
    const std::string raw = read_file(dir / w.at("file").get<std::string>());
    const std::size_t expected = w.at("bytes").get<std::size_t>();
    if (raw.size() != expected || raw.size() % sizeof(float) != 0) {
      throw CheckpointError("corrupt checkpoint archive: weights.bin holds " + std::to_string(raw.size()) +
                            " bytes, manifest expects " + std::to_string(expected));
    }
    if (hex(fnv1a(raw.data(), raw.size())) != w.at("fnv1a").get<std::string>()) {
      throw CheckpointError("corrupt checkpoint archive: weight checksum mismatch");
    }
    std::vector<float> blob(raw.size() / sizeof(float));
    std::memcpy(blob.data(), raw.data(), raw.size());

    std::size_t assigned = 0;
    for (const auto& a : m.at("arrays")) {
      auto& store = mutable_store(c.model, a.at("component").get<std::string>());
      const auto name = a.at("name").get<std::string>();
      if (!store.contains(name)) throw CheckpointError("checkpoint array '" + name + "' has no matching parameter");
      auto& p = store.at(name);
      const auto rows = a.at("rows").get<Eigen::Index>();
      const auto cols = a.at("cols").get<Eigen::Index>();
      const auto offset = a.at("offset").get<std::size_t>();
      if (rows != p.value.rows() || cols != p.value.cols()) {
        throw CheckpointError("checkpoint array '" + name + "' has the wrong shape");
      }
      if (offset + static_cast<std::size_t>(rows * cols) > blob.size()) {
        throw CheckpointError("corrupt checkpoint archive: array '" + name + "' runs past the end");
      }
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = blob[offset + i];
      ++assigned;
    }
    std::size_t expected_arrays = 0;
    for (const auto& s : stores_of(c.model)) expected_arrays += s.store->size();
    if (assigned != expected_arrays) throw CheckpointError("checkpoint is missing weight arrays");
    return c;
  } catch (const json::exception& e) {
    throw CheckpointError("corrupt checkpoint manifest: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint config is invalid: " + std::string(e.what()));
  }
}

std::string checkpoint_fingerprint(const Checkpoint& c) {
  json index;
  const auto blob = pack(c, index);
  std::uint64_t h = fnv1a(blob.data(), blob.size() * sizeof(float));
  const std::string meta = schedule_to_json(c.model.schedule).dump() + to_string(c.model.mode) +
                           std::to_string(c.model.velocity_scale);
  return hex(fnv1a(meta.data(), meta.size(), h));
}

}  // namespace strokediff
