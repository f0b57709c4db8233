#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "strokediff/applications.hpp"
#include "strokediff/checkpoint.hpp"
#include "strokediff/dataset.hpp"
#include "strokediff/errors.hpp"
#include "strokediff/eval.hpp"
#include "strokediff/training.hpp"

namespace py = pybind11;
using namespace strokediff;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Sketches cross the boundary as (L, 3) float arrays of x, y, pen.
Sketch sketch_from_array(const RowMatrix& a) {
  if (a.cols() != 3) throw DataError("sketch array must have shape (L, 3)");
  Sketch s;
  s.points.reserve(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    s.points.push_back({a(i, 0), a(i, 1), a(i, 2) > 0 ? kPenUp : kPenDown});
  }
  return s;
}

RowMatrix sketch_to_array(const Sketch& s) {
  RowMatrix a(static_cast<Eigen::Index>(s.size()), 3);
  for (std::size_t i = 0; i < s.size(); ++i) {
    a(i, 0) = s.points[i].x;
    a(i, 1) = s.points[i].y;
    a(i, 2) = s.points[i].pen;
  }
  return a;
}

std::vector<RowMatrix> to_arrays(const std::vector<Sketch>& v) {
  std::vector<RowMatrix> out;
  out.reserve(v.size());
  for (const auto& s : v) out.push_back(sketch_to_array(s));
  return out;
}

std::vector<Sketch> from_arrays(const std::vector<RowMatrix>& v) {
  std::vector<Sketch> out;
  out.reserve(v.size());
  for (const auto& a : v) out.push_back(sketch_from_array(a));
  return out;
}

int resolve_steps(const DiffusionModel& m, int steps) { return steps > 0 ? steps : std::min(50, m.schedule.T); }

// Thin handle around a checkpoint; every stochastic call takes its own seed.
class Model {
 public:
  explicit Model(Checkpoint c) : ckpt_(std::make_shared<Checkpoint>(std::move(c))) {}

  static Model load(const std::filesystem::path& dir) { return Model(load_checkpoint(dir)); }
  void save(const std::filesystem::path& dir) const { save_checkpoint(*ckpt_, dir); }

  const DiffusionModel& m() const { return ckpt_->model; }
  std::string mode() const { return to_string(m().mode); }
  int T() const { return m().schedule.T; }
  int latent_dim() const { return m().latent_dim(); }
  int train_length() const { return m().train_length; }
  std::string fingerprint() const { return checkpoint_fingerprint(*ckpt_); }

  std::vector<RowMatrix> sample(int n, int length, const std::string& sampler, int steps, std::uint64_t seed) const {
    SampleOptions o;
    o.sampler = parse_sampler(sampler);
    o.steps = resolve_steps(m(), steps);
    Rng rng(seed);
    Matrix z;
    const Matrix* zp = nullptr;
    if (m().mode != ConditionMode::kNone) {
      z = Matrix::Zero(n, m().latent_dim());
      zp = &z;
    }
    return to_arrays(strokediff::sample(m(), n, length > 0 ? length : m().train_length, o, zp, rng));
  }

  RowMatrix heal(const RowMatrix& sketch, double th_frac, std::uint64_t seed) const {
    Rng rng(seed);
    return sketch_to_array(
        strokediff::heal(m(), sketch_from_array(sketch), step_from_fraction(m().schedule, th_frac), rng));
  }

  std::vector<RowMatrix> implicit(const RowMatrix& sketch, double tc_frac, int n, std::uint64_t seed) const {
    Rng rng(seed);
    return to_arrays(
        implicit_condition(m(), sketch_from_array(sketch), step_from_fraction(m().schedule, tc_frac), n, rng));
  }

  RowMatrix reconstruct(const RowMatrix& sketch, double factor, int steps, std::uint64_t seed) const {
    SampleOptions o;
    o.steps = resolve_steps(m(), steps);
    Rng rng(seed);
    return sketch_to_array(strokediff::reconstruct(m(), sketch_from_array(sketch), factor, o, rng));
  }

  RowMatrix interpolate(const RowMatrix& a, const RowMatrix& b, double delta, int steps, int length) const {
    return sketch_to_array(interpolate_latent(m(), sketch_from_array(a), sketch_from_array(b), delta,
                                              resolve_steps(m(), steps), length));
  }

  RowMatrix mix(const RowMatrix& base, const RowMatrix& reference, int omega, std::uint64_t seed) const {
    Rng rng(seed);
    return sketch_to_array(ilvr_mix(m(), sketch_from_array(base), sketch_from_array(reference), omega, rng));
  }

  std::vector<RowMatrix> abstract(double k, int n, int length, std::uint64_t seed) const {
    Rng rng(seed);
    return to_arrays(abstract_sample(m(), k, n, length > 0 ? length : m().train_length, rng));
  }

  std::vector<RowMatrix> vectorize(const RowMatrix& points, int n, int length, std::uint64_t seed) const {
    if (points.cols() != 2) throw DataError("point array must have shape (N, 2)");
    Rng rng(seed);
    return to_arrays(strokediff::vectorize(m(), PointSet{points}, n, rng, length));
  }

 private:
  std::shared_ptr<const Checkpoint> ckpt_;
};

py::dict split_to_dict(const DatasetSplit& d) {
  py::dict out;
  out["train"] = to_arrays(d.train);
  out["validation"] = to_arrays(d.validation);
  out["test"] = to_arrays(d.test);
  out["train_labels"] = d.train_labels;
  out["validation_labels"] = d.validation_labels;
  out["test_labels"] = d.test_labels;
  out["class_names"] = d.class_names;
  return out;
}

}  // namespace

PYBIND11_MODULE(_strokediff, mod) {
  mod.doc() = "Diffusion models over stroke sequences";

  auto base = py::register_exception<Error>(mod, "StrokeDiffError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(mod, "ConfigError", base.ptr());
  py::register_exception<DataError>(mod, "DataError", base.ptr());
  py::register_exception<CheckpointError>(mod, "CheckpointError", base.ptr());
  py::register_exception<ModeError>(mod, "ModeError", base.ptr());

  mod.def(
      "generate_toy_dataset",
      [](const std::string& shape, int n, int length, double noise, std::uint64_t seed) {
        ToyDatasetOptions o;
        o.shape = parse_toy_shape(shape);
        o.n = n;
        o.length = length;
        o.noise = noise;
        o.seed = seed;
        return split_to_dict(generate_toy_dataset(o));
      },
      py::arg("shape") = "circles", py::arg("n") = 100, py::arg("length") = 32, py::arg("noise") = 0.0,
      py::arg("seed") = 0);

  mod.def("resample", [](const RowMatrix& s, int n) { return sketch_to_array(resample(sketch_from_array(s), n)); },
          py::arg("sketch"), py::arg("length"));
  mod.def("to_velocities", [](const RowMatrix& s) { return RowMatrix(to_velocities(sketch_from_array(s)).values); });
  mod.def(
      "chamfer_distance",
      [](const RowMatrix& a, const RowMatrix& b) { return chamfer_distance(PointSet{a}, PointSet{b}); },
      "Symmetric mean nearest-neighbour distance between (N, 2) point arrays");
  mod.def("temporal_lowpass", [](const RowMatrix& x, int omega) { return RowMatrix(temporal_lowpass(x, omega)); },
          py::arg("x"), py::arg("omega"));

  mod.def(
      "linear_schedule",
      [](int T, double sigma_scale) {
        const NoiseSchedule s = build_linear_schedule(T, sigma_scale);
        py::dict out;
        out["T"] = s.T;
        out["beta"] = s.beta;
        out["alpha"] = s.alpha;  // cumulative product
        out["beta_tilde"] = s.beta_tilde;
        return out;
      },
      py::arg("T"), py::arg("sigma_scale") = 0.8);
  mod.def(
      "forward_diffuse",
      [](const RowMatrix& v0, int t, const RowMatrix& eps, int T) {
        return RowMatrix(forward_diffuse(v0, t, eps, build_linear_schedule(T)));
      },
      py::arg("v0"), py::arg("t"), py::arg("eps"), py::arg("T"));

  py::class_<Model>(mod, "Model")
      .def_static("load", &Model::load, py::arg("path"))
      .def("save", &Model::save, py::arg("path"))
      .def_property_readonly("mode", &Model::mode)
      .def_property_readonly("T", &Model::T)
      .def_property_readonly("latent_dim", &Model::latent_dim)
      .def_property_readonly("train_length", &Model::train_length)
      .def_property_readonly("fingerprint", &Model::fingerprint)
      .def("sample", &Model::sample, py::arg("n") = 1, py::arg("length") = 0, py::arg("sampler") = "ddim",
           py::arg("steps") = 0, py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>())
      .def("heal", &Model::heal, py::arg("sketch"), py::arg("th_frac") = 0.2, py::arg("seed") = 0,
           py::call_guard<py::gil_scoped_release>())
      .def("implicit", &Model::implicit, py::arg("sketch"), py::arg("tc_frac"), py::arg("n") = 1,
           py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>())
      .def("reconstruct", &Model::reconstruct, py::arg("sketch"), py::arg("factor") = 1.0, py::arg("steps") = 0,
           py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>())
      .def("interpolate", &Model::interpolate, py::arg("first"), py::arg("second"), py::arg("delta"),
           py::arg("steps") = 0, py::arg("length") = 0, py::call_guard<py::gil_scoped_release>())
      .def("mix", &Model::mix, py::arg("base"), py::arg("reference"), py::arg("omega") = 5, py::arg("seed") = 0,
           py::call_guard<py::gil_scoped_release>())
      .def("abstract", &Model::abstract, py::arg("k"), py::arg("n") = 1, py::arg("length") = 0,
           py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>())
      .def("vectorize", &Model::vectorize, py::arg("points"), py::arg("n") = 1, py::arg("length") = 0,
           py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>());

  mod.def(
      "train",
      [](const std::vector<RowMatrix>& train, const std::vector<RowMatrix>& validation, const std::string& config_json) {
        DatasetSplit d;
        d.train = from_arrays(train);
        d.validation = from_arrays(validation);
        const TrainConfig c = train_config_from_json(nlohmann::json::parse(config_json));
        py::gil_scoped_release release;
        return Model(fit(d, c).final);
      },
      py::arg("train"), py::arg("validation"), py::arg("config_json") = "{}",
      "Fit a model; config_json uses the train_config keys of a checkpoint manifest");
}
