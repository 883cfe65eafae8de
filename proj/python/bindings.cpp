#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include <torch/torch.h>

#include "cli/app.hpp"
#include "swinvrnn/ensemble.hpp"
#include "swinvrnn/errors.hpp"
#include "swinvrnn/grid.hpp"
#include "swinvrnn/perturbation.hpp"
#include "swinvrnn/verification.hpp"

namespace py = pybind11;
using namespace swinvrnn;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Copies into an owning float64 tensor so numpy memory is never aliased.
torch::Tensor to_tensor(const F64Array& a) {
  std::vector<std::int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

py::array to_numpy(const torch::Tensor& t) {
  auto c = t.contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  if (c.scalar_type() == torch::kFloat32) {
    py::array_t<float> out(shape);
    std::memcpy(out.mutable_data(), c.data_ptr<float>(), sizeof(float) * c.numel());
    return out;
  }
  c = c.to(torch::kFloat64);
  py::array_t<double> out(shape);
  std::memcpy(out.mutable_data(), c.data_ptr<double>(), sizeof(double) * c.numel());
  return out;
}

py::dict to_dict(const KeyValueText& kv) {
  py::dict d;
  for (const auto& [k, v] : kv.items()) d[py::str(k)] = v;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Swin transformer VRNN forecasting: verification, latent Gaussians and the command-line driver";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
  py::register_exception<InvalidDistribution>(m, "InvalidDistribution", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());

  m.def(
      "latitude_weights",
      [](std::size_t n_lat, std::size_t n_lon) { return latitude_weights(GridSpec::regular(n_lat, n_lon)); },
      py::arg("n_lat"), py::arg("n_lon"), "cos(latitude) row weights of a regular grid, normalized to mean 1.");
  m.def(
      "lat_weighted_rmse",
      [](const F64Array& forecast, const F64Array& truth, const std::vector<double>& weights) {
        return lat_weighted_rmse(to_tensor(forecast), to_tensor(truth), weights);
      },
      py::arg("forecast"), py::arg("truth"), py::arg("weights"));
  m.def(
      "crps_ensemble",
      [](const F64Array& members, const F64Array& truth, const std::vector<double>& weights, bool fair) {
        return crps_ensemble(to_tensor(members), to_tensor(truth), weights, fair);
      },
      py::arg("members"), py::arg("truth"), py::arg("weights"), py::arg("fair") = false);
  m.def(
      "crps_cells",
      [](const F64Array& members, const F64Array& truth, bool fair) {
        return to_numpy(crps_cells(to_tensor(members), to_tensor(truth), fair));
      },
      py::arg("members"), py::arg("truth"), py::arg("fair") = false);
  m.def(
      "ensemble_spread",
      [](const F64Array& members, const std::vector<double>& weights) {
        return ensemble_spread(to_tensor(members), weights);
      },
      py::arg("members"), py::arg("weights"));
  m.def(
      "rank_histogram",
      [](const F64Array& members, const F64Array& truth, std::uint64_t seed) {
        return rank_histogram(to_tensor(members), to_tensor(truth), seed);
      },
      py::arg("members"), py::arg("truth"), py::arg("seed") = 0);
  m.def("rank_chi_square", &rank_chi_square, py::arg("counts"));

  m.def(
      "kl_divergence",
      [](const F64Array& mean_q, const F64Array& chol_q, const F64Array& mean_p, const F64Array& chol_p) {
        return to_numpy(kl_divergence({to_tensor(mean_q), to_tensor(chol_q)}, {to_tensor(mean_p), to_tensor(chol_p)}));
      },
      py::arg("mean_q"), py::arg("chol_q"), py::arg("mean_p"), py::arg("chol_p"),
      "KL(q || p) between per-channel Gaussians given means [..., C, k] and Cholesky factors [..., C, k, k].");
  m.def(
      "sample_latent",
      [](const F64Array& mean, const F64Array& chol, const F64Array& eps) {
        return to_numpy(sample_latent({to_tensor(mean), to_tensor(chol)}, to_tensor(eps)));
      },
      py::arg("mean"), py::arg("chol"), py::arg("eps"));

  m.def(
      "read_ensemble",
      [](const std::filesystem::path& dir) {
        KeyValueText kv;
        auto f = read_ensemble(dir, &kv);
        py::dict d;
        d["method"] = to_string(f.method);
        d["members"] = to_numpy(f.members);
        d["mean"] = to_numpy(f.mean);
        d["manifest"] = to_dict(kv);
        return d;
      },
      py::arg("dir"), "Ensemble artifact directory as a dict; members are [M, n_out, T, H, W] normalized.");
  m.def(
      "read_scores",
      [](const std::filesystem::path& path) {
        py::list rows;
        const auto table = ScoreTable::read(path);
        for (const auto& r : table.rows()) {
          py::dict d;
          d["field"] = r.field;
          d["lead_hours"] = r.lead_hours;
          d["method"] = r.method;
          d["n_members"] = r.n_members;
          d["rmse"] = r.rmse;
          d["acc"] = r.acc;
          d["crps"] = r.crps;
          d["spread"] = r.spread;
          rows.append(d);
        }
        return rows;
      },
      py::arg("path"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one command-line invocation in-process; returns (exit_code, stdout, stderr).");
}
