#include "strokediff/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <variant>

#include "strokediff/applications.hpp"
#include "strokediff/checkpoint.hpp"
#include "strokediff/eval.hpp"
#include "strokediff/service.hpp"
#include "strokediff/sketch_io.hpp"
#include "strokediff/svg.hpp"

namespace strokediff {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("STROKEDIFF_OUT");
  return env && *env ? env : "strokediff_out";
}

// Options of one subcommand, mirrored into JSON so a run can be replayed from
// its resolved_config.json via --config.
class OptionTable {
 public:
  using Target = std::variant<int*, double*, std::string*, std::uint64_t*, std::vector<std::string>*>;

  explicit OptionTable(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* add(const std::string& name, T& target, const std::string& help) {
    CLI::Option* opt = app_->add_option("--" + name, target, help)->capture_default_str();
    entries_.push_back({name, &target, opt});
    return opt;
  }

  void apply(const json& config) {
    for (const auto& [key, value] : config.items()) {
      if (key == "subcommand") continue;
      auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == key; });
      if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "' for " + app_->get_name());
      if (it->option->count() > 0) continue;  // command line wins
      try {
        std::visit([&](auto* p) { *p = value.get<std::remove_pointer_t<decltype(p)>>(); }, it->target);
      } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
      }
    }
  }

  json resolved() const {
    json j{{"subcommand", app_->get_name()}};
    for (const auto& e : entries_) std::visit([&](auto* p) { j[e.name] = *p; }, e.target);
    return j;
  }

 private:
  struct Entry {
    std::string name;
    Target target;
    CLI::Option* option;
  };
  CLI::App* app_;
  std::vector<Entry> entries_;
};

struct Common {
  std::string config;
  std::string out = default_out_dir();
  std::uint64_t seed = 0;
};

struct Command {
  CLI::App* app;
  OptionTable table;
  Common common;
  std::function<void(const Command&, std::ostream&)> run;

  Command(CLI::App* a) : app(a), table(a) {
    app->add_option("--config", common.config, "JSON file of option values (e.g. a resolved_config.json)");
    table.add("out", common.out, "output directory (default from STROKEDIFF_OUT)");
    table.add("seed", common.seed, "seed for all randomness");
  }

  fs::path out_dir() const { return common.out; }

  void write_resolved() const {
    write_file_atomic(out_dir() / "resolved_config.json", table.resolved().dump(2) + "\n");
  }
};

void write_sketches_with_svg(const fs::path& dir, const std::string& stem, const std::vector<Sketch>& sketches) {
  write_sketch_file(dir / (stem + ".jsonl"), sketches);
  write_file_atomic(dir / (stem + ".svg"), render_sketches_svg(sketches));
}

std::vector<Sketch> read_sketches(const std::string& path, const std::string& format) {
  if (path.empty()) throw ConfigError("an input sketch file is required");
  if (!fs::exists(path)) throw DataError("input file not found: " + path);
  auto sketches = parse_sketch_file(path, parse_sketch_format(format));
  if (sketches.empty()) throw DataError("no sketches in " + path);
  return sketches;
}

Checkpoint open_checkpoint(const std::string& path) {
  if (path.empty()) throw ConfigError("--ckpt is required");
  return load_checkpoint(path);
}

int ddim_steps(int requested, const DiffusionModel& model) {
  return requested > 0 ? requested : std::min(50, model.schedule.T);
}

std::vector<double> parse_factors(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad length factor '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("no length factors given");
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diffusion models for stroke sequences", "strokediff"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;
  auto command = [&](const std::string& name, const std::string& help) -> Command& {
    commands.push_back(std::make_unique<Command>(app.add_subcommand(name, help)));
    return *commands.back();
  };

  // gen-data
  std::string spec = "circles";
  int n_items = 100, length = 32;
  double noise = 0.0;
  {
    auto& c = command("gen-data", "generate a synthetic toy dataset");
    c.table.add("spec", spec, "lines | circles | polygons | zigzags | two-class");
    c.table.add("n", n_items, "number of sketches");
    c.table.add("length", length, "points per sketch");
    c.table.add("noise", noise, "coordinate noise std");
    c.run = [&](const Command& self, std::ostream& o) {
      ToyDatasetOptions opts{parse_toy_shape(spec), n_items, length, noise, self.common.seed};
      const auto split = generate_toy_dataset(opts);
      save_dataset(self.out_dir(), split, {"toy:" + spec, length, 1.0, self.common.seed, noise});
      self.write_resolved();
      o << "wrote " << split.total() << " sketches to " << self.out_dir().string() << "\n";
    };
  }

  // train
  std::string data_dir, mode = "none";
  TrainConfig tc;
  int latent = 32;
  {
    auto& c = command("train", "train a diffusion model on a dataset directory");
    c.table.add("data", data_dir, "dataset directory written by gen-data");
    c.table.add("epochs", tc.epochs, "training epochs");
    c.table.add("batch-size", tc.batch_size, "minibatch size");
    c.table.add("lr", tc.lr0, "initial learning rate");
    c.table.add("lr-decay", tc.lr_decay, "per-epoch learning-rate decay");
    c.table.add("weight-decay", tc.weight_decay, "AdamW weight decay");
    c.table.add("grad-clip", tc.grad_clip, "global gradient-norm clip (<= 0 disables)");
    c.table.add("mode", mode, "none | sequence | set");
    c.table.add("T", tc.T, "diffusion steps");
    c.table.add("sigma-scale", tc.sigma_scale, "DDPM reverse variance multiplier");
    c.table.add("velocity-rms", tc.velocity_rms, "target RMS of model-space velocities (<= 0 leaves them unscaled)");
    c.table.add("rate-min", tc.rate_min, "lower sampling-rate factor for per-epoch resampling");
    c.table.add("rate-max", tc.rate_max, "upper sampling-rate factor for per-epoch resampling");
    c.table.add("layers", tc.estimator.layers, "GRU layers in the noise estimator");
    c.table.add("hidden", tc.estimator.hidden, "GRU width in the noise estimator");
    c.table.add("time-dim", tc.estimator.time_dim, "time-embedding width");
    c.table.add("latent", latent, "latent code width for conditional modes");
    c.table.add("encoder-hidden", tc.sequence_encoder.hidden, "sequence-encoder GRU width");
    c.run = [&](const Command& self, std::ostream& o) {
      if (data_dir.empty()) throw ConfigError("--data is required");
      tc.seed = self.common.seed;
      tc.mode = parse_condition_mode(mode);
      tc.estimator.latent_dim = tc.mode == ConditionMode::kNone ? 0 : latent;
      tc.sequence_encoder.latent_dim = latent;
      tc.set_encoder.latent_dim = latent;
      const auto split = load_dataset(data_dir);
      const fs::path dir = self.out_dir();
      self.write_resolved();
      std::string history = "epoch,lr,train_loss,val_loss\n";
      auto on_epoch = [&](const EpochRecord& r) {
        o << "epoch " << r.epoch << " lr " << r.lr << " train " << r.train_loss << " val " << r.val_loss << "\n";
        std::ostringstream row;
        row.precision(17);
        row << r.epoch << "," << r.lr << "," << r.train_loss << "," << r.val_loss << "\n";
        history += row.str();
      };
      FitResult result;
      try {
        result = fit(split, tc, on_epoch);
      } catch (const DivergenceError& e) {
        if (e.last_finite()) save_checkpoint(*e.last_finite(), dir / "last_finite");
        throw;
      }
      save_checkpoint(result.final, dir / "checkpoint");
      save_checkpoint(result.best, dir / "best");
      write_file_atomic(dir / "history.csv", history);
      o << "checkpoint " << checkpoint_fingerprint(result.final) << " -> " << (dir / "checkpoint").string() << "\n";
    };
  }

  // Shared by the application commands.
  std::string ckpt_path, input_path, format = "stroke3-jsonl";
  auto add_model_io = [&](Command& c, bool with_input) {
    c.table.add("ckpt", ckpt_path, "checkpoint directory");
    if (with_input) {
      c.table.add("input", input_path, "input sketch file (JSONL)");
      c.table.add("format", format, "input format: stroke3-jsonl | offsets-jsonl");
    }
  };

  // sample
  int count = 8, steps = 0, sample_length = 0;
  std::string sampler = "ddim", condition_path;
  double sigma_scale = -1.0, tc_frac = 0.2;
  {
    auto& c = command("sample", "draw samples, optionally implicitly conditioned on a sketch");
    add_model_io(c, false);
    c.table.add("n", count, "number of samples");
    c.table.add("length", sample_length, "points per sample (0 = training length)");
    c.table.add("sampler", sampler, "ddim | ddpm");
    c.table.add("steps", steps, "DDIM steps (0 = min(50, T))");
    c.table.add("sigma-scale", sigma_scale, "DDPM reverse variance multiplier (< 0 = checkpoint default)");
    c.table.add("condition", condition_path, "sketch file for implicit conditioning (first sketch)");
    c.table.add("tc-frac", tc_frac, "implicit-conditioning start step as a fraction of T");
    c.run = [&](const Command& self, std::ostream& o) {
      const auto ckpt = open_checkpoint(ckpt_path);
      const auto& model = ckpt.model;
      Rng rng(self.common.seed);
      std::vector<Sketch> result;
      if (!condition_path.empty()) {
        const Sketch cond = read_sketches(condition_path, format).front();
        result = implicit_condition(model, cond, step_from_fraction(model.schedule, tc_frac), count, rng);
      } else {
        SampleOptions opts;
        opts.sampler = parse_sampler(sampler);
        opts.steps = opts.sampler == SamplerKind::kDdpm ? model.schedule.T : ddim_steps(steps, model);
        if (sigma_scale >= 0.0) opts.sigma_scale = sigma_scale;
        Matrix z;
        const Matrix* zp = nullptr;
        if (model.latent_dim() > 0) {
          z = Matrix::Zero(count, model.latent_dim());
          zp = &z;
        }
        result = sample(model, count, sample_length > 0 ? sample_length : model.train_length, opts, zp, rng);
      }
      self.write_resolved();
      write_sketches_with_svg(self.out_dir(), "samples", result);
      o << "wrote " << result.size() << " samples\n";
    };
  }

  // reconstruct
  double factor = 1.0;
  {
    auto& c = command("reconstruct", "encode sketches and decode them at a chosen length");
    add_model_io(c, true);
    c.table.add("factor", factor, "output length factor (>= 1)");
    c.table.add("steps", steps, "DDIM steps (0 = min(50, T))");
    c.run = [&](const Command& self, std::ostream& o) {
      const auto ckpt = open_checkpoint(ckpt_path);
      const auto inputs = read_sketches(input_path, format);
      Rng rng(self.common.seed);
      SampleOptions opts;
      opts.steps = ddim_steps(steps, ckpt.model);
      const auto result = reconstruct_many(ckpt.model, inputs, factor, opts, rng);
      self.write_resolved();
      write_sketches_with_svg(self.out_dir(), "reconstructions", result);
      o << "wrote " << result.size() << " reconstructions\n";
    };
  }

  // heal
  double th_frac = 0.2;
  {
    auto& c = command("heal", "project sketches back toward the learned distribution");
    add_model_io(c, true);
    c.table.add("th-frac", th_frac, "healing start step as a fraction of T");
    c.run = [&](const Command& self, std::ostream& o) {
      const auto ckpt = open_checkpoint(ckpt_path);
      const auto inputs = read_sketches(input_path, format);
      const int t_h = step_from_fraction(ckpt.model.schedule, th_frac);
      Rng rng(self.common.seed);
      std::vector<Sketch> result;
      for (const auto& s : inputs) result.push_back(heal(ckpt.model, s, t_h, rng));
      self.write_resolved();
      write_sketches_with_svg(self.out_dir(), "healed", result);
      o << "healed " << result.size() << " sketches at T_h=" << t_h << "\n";
    };
  }

  // mix
  std::string base_path, reference_path, mix_mode = "latent-ddim";
  double delta = 0.5;
  int omega = 3;
  {
    auto& c = command("mix", "latent interpolation or low-pass reference mixing");
    add_model_io(c, false);
    c.table.add("base", base_path, "base sketch file");
    c.table.add("reference", reference_path, "reference sketch file (one sketch, or one per base)");
    c.table.add("format", format, "input format: stroke3-jsonl | offsets-jsonl");
    c.table.add("mode", mix_mode, "latent-ddim | ilvr");
    c.table.add("delta", delta, "interpolation weight toward the reference");
    c.table.add("omega", omega, "low-pass window (odd)");
    c.table.add("steps", steps, "DDIM steps for latent-ddim");
    c.run = [&](const Command& self, std::ostream& o) {
      const auto ckpt = open_checkpoint(ckpt_path);
      const auto bases = read_sketches(base_path, format);
      const auto refs = read_sketches(reference_path, format);
      if (refs.size() != 1 && refs.size() != bases.size()) {
        throw ConfigError("reference file needs one sketch or one per base sketch");
      }
      Rng rng(self.common.seed);
      std::vector<Sketch> result;
      for (std::size_t i = 0; i < bases.size(); ++i) {
        const Sketch& ref = refs[refs.size() == 1 ? 0 : i];
        if (mix_mode == "latent-ddim") {
          result.push_back(interpolate_latent(ckpt.model, bases[i], ref, delta, ddim_steps(steps, ckpt.model)));
        } else if (mix_mode == "ilvr") {
          result.push_back(ilvr_mix(ckpt.model, bases[i], ref, omega, rng));
        } else {
          throw ConfigError("mix mode must be latent-ddim or ilvr");
        }
      }
      self.write_resolved();
      write_sketches_with_svg(self.out_dir(), "mixed", result);
      o << "wrote " << result.size() << " mixed sketches\n";
    };
  }

  // vectorize
  int densify = 64;
  {
    auto& c = command("vectorize", "sample stroke orders for point sets taken from sketches");
    add_model_io(c, true);
    c.table.add("n", count, "samples per input");
    c.table.add("densify", densify, "points per derived point set");
    c.table.add("length", sample_length, "points per output (0 = training length)");
    c.run = [&](const Command& self, std::ostream& o) {
      const auto ckpt = open_checkpoint(ckpt_path);
      const auto inputs = read_sketches(input_path, format);
      Rng rng(self.common.seed);
      std::vector<Sketch> result;
      for (const auto& s : inputs) {
        const PointSet p = to_point_set(s, std::max<int>(densify, static_cast<int>(s.size())));
        for (auto& v : vectorize(ckpt.model, p, count, rng, sample_length)) result.push_back(std::move(v));
      }
      self.write_resolved();
      write_sketches_with_svg(self.out_dir(), "vectorized", result);
      o << "wrote " << result.size() << " vectorizations\n";
    };
  }

  // abstract
  double k = 0.5;
  {
    auto& c = command("abstract", "sample with scaled reverse noise to control detail");
    add_model_io(c, false);
    c.table.add("k", k, "reverse-noise scale in [0, 1]");
    c.table.add("n", count, "number of samples");
    c.table.add("length", sample_length, "points per sample (0 = training length)");
    c.run = [&](const Command& self, std::ostream& o) {
      const auto ckpt = open_checkpoint(ckpt_path);
      Rng rng(self.common.seed);
      const auto result =
          abstract_sample(ckpt.model, k, count, sample_length > 0 ? sample_length : ckpt.model.train_length, rng);
      self.write_resolved();
      write_sketches_with_svg(self.out_dir(), "abstract", result);
      o << "wrote " << result.size() << " samples, energy " << abstraction_energy(result) << "\n";
    };
  }

  // eval
  std::string factors_text = "1,2,4";
  int eval_samples = 64;
  {
    auto& c = command("eval", "compute metrics for a checkpoint on a dataset's test split");
    add_model_io(c, false);
    c.table.add("data", data_dir, "dataset directory");
    c.table.add("factors", factors_text, "comma-separated length factors for the CD curve");
    c.table.add("steps", steps, "DDIM steps (0 = min(50, T))");
    c.table.add("samples", eval_samples, "unconditional samples for distribution metrics");
    c.table.add("tc-frac", tc_frac, "implicit-conditioning fraction for class consistency");
    c.run = [&](const Command& self, std::ostream& o) {
      const auto ckpt = open_checkpoint(ckpt_path);
      const auto& model = ckpt.model;
      if (data_dir.empty()) throw ConfigError("--data is required");
      const auto split = load_dataset(data_dir);
      if (split.test.empty()) throw DataError("dataset has no test split");
      const std::uint64_t seed = self.common.seed;

      MetricReport report;
      report.seed = seed;
      report.checkpoint = checkpoint_fingerprint(ckpt);
      {
        Rng rng(seed);
        report.metrics["test_loss"] = loss_simple_value(model, make_training_batch(model, split.test), rng);
      }
      if (model.mode == ConditionMode::kSequence) {
        report.cd_curve = cd_vs_rate_curve(model, split.test, parse_factors(factors_text), ddim_steps(steps, model), seed);
        for (std::size_t i = 0; i < report.cd_curve.factors.size(); ++i) {
          std::ostringstream key;
          key << "cd_factor_" << report.cd_curve.factors[i];
          report.metrics[key.str()] = report.cd_curve.mean_cd[i];
        }
        report.metrics["cd_unconditional"] = unconditional_cd(model, split.test, ddim_steps(steps, model), seed);
      }
      Rng rng(seed);
      Matrix z;
      const Matrix* zp = nullptr;
      if (model.latent_dim() > 0) {
        z = Matrix::Zero(eval_samples, model.latent_dim());
        zp = &z;
      }
      SampleOptions opts;
      opts.steps = ddim_steps(steps, model);
      const auto samples = sample(model, eval_samples, model.train_length, opts, zp, rng);
      report.metrics["abstraction_energy"] = abstraction_energy(samples);
      if (split.labeled()) {
        ClassifierConfig cc;
        cc.seed = seed;
        std::optional<ToyClassifier> clf;
        try {
          clf = train_toy_classifier(split, cc);
        } catch (const HarnessError& e) {
          report.notes.push_back(std::string("classifier metrics skipped: ") + e.what());
        }
        if (clf) {
          report.metrics["classifier_accuracy"] = clf->test_accuracy();
          if (split.test.size() >= 32 && samples.size() >= 32) {
            const auto fid = frechet_feature_distance(samples, split.test, *clf);
            report.metrics["fid"] = fid.distance;
            if (fid.jittered) report.notes.push_back("covariance jitter applied in the Frechet distance");
          } else {
            report.notes.push_back("fid skipped: needs at least 32 test items and 32 samples");
          }
          if (model.mode == ConditionMode::kNone) {
            const int t_c = step_from_fraction(model.schedule, tc_frac);
            report.metrics["class_consistency"] =
                class_consistency(model, *clf, split.test, split.test_labels, t_c, 4, seed);
          }
        }
      }
      self.write_resolved();
      write_file_atomic(self.out_dir() / "report.json", report.to_json().dump(2) + "\n");
      write_file_atomic(self.out_dir() / "report.csv", report.to_csv());
      if (!report.cd_curve.factors.empty()) {
        write_file_atomic(self.out_dir() / "cd_curve.svg", render_cd_curve_svg(report.cd_curve));
      }
      for (const auto& [name, value] : report.metrics) o << name << " " << value << "\n";
    };
  }

  // serve
  ServiceConfig service;
  std::vector<std::string> model_specs;
  {
    auto& c = command("serve", "serve checkpoints over HTTP");
    c.table.add("host", service.host, "bind address");
    c.table.add("port", service.port, "bind port");
    c.table.add("step-budget", service.step_budget, "max denoiser steps per request");
    c.table.add("max-samples", service.max_samples, "max samples per request");
    c.table.add("threads", service.threads, "worker threads");
    c.table.add("model", model_specs, "id=checkpoint_dir, repeatable");
    c.run = [&](const Command& self, std::ostream& o) {
      auto registry = std::make_shared<ModelRegistry>();
      for (const auto& m : model_specs) {
        const auto eq = m.find('=');
        if (eq == std::string::npos) throw ConfigError("--model expects id=path, got '" + m + "'");
        registry->load(m.substr(0, eq), m.substr(eq + 1));
      }
      self.write_resolved();
      Service server(service, registry);
      if (!server.bind()) throw ConfigError("cannot bind " + service.host + ":" + std::to_string(service.port));
      o << "listening on " << service.host << ":" << server.bound_port() << std::endl;
      server.listen_after_bind();
    };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    for (const auto* sub : app.get_subcommands()) err << sub->help();
    return 2;
  }

  for (auto& c : commands) {
    if (!c->app->parsed()) continue;
    try {
      if (!c->common.config.empty()) {
        json config;
        try {
          config = json::parse(read_file(c->common.config));
        } catch (const json::exception& e) {
          throw ConfigError("malformed config " + c->common.config + ": " + e.what());
        }
        if (!config.is_object()) throw ConfigError("config must be a JSON object");
        if (config.contains("subcommand") && config.at("subcommand") != c->app->get_name()) {
          throw ConfigError("config was written for '" + config.at("subcommand").get<std::string>() + "'");
        }
        c->table.apply(config);
      }
      c->run(*c, out);
      return 0;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}

}  // namespace strokediff
