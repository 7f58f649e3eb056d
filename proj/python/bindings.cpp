#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "edgelam/casestudy.hpp"
#include "edgelam/cot.hpp"
#include "edgelam/error.hpp"
#include "edgelam/fedft.hpp"
#include "edgelam/moe.hpp"
#include "edgelam/netsim.hpp"
#include "edgelam/numerics.hpp"
#include "edgelam/scenario.hpp"
#include "edgelam/unlearn.hpp"

namespace py = pybind11;
using namespace edgelam;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0));
  const auto c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Vector to_vector(const Array& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-D array");
  return Vector(a.data(), a.data() + a.size());
}

Array vector_array(const Vector& v) {
  Array out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

LoraAdapter to_adapter(const py::tuple& t) {
  if (t.size() != 2) throw InputError("adapter must be an (A, B) pair");
  return LoraAdapter(to_matrix(t[0].cast<Array>()), to_matrix(t[1].cast<Array>()));
}

py::tuple from_adapter(const LoraAdapter& a) { return py::make_tuple(to_array(a.a), to_array(a.b)); }

py::dict row_dict(const BudgetRow& r) {
  py::dict d;
  d["budget"] = r.budget;
  d["device_count"] = r.device_count;
  d["handoffs"] = r.handoffs;
  d["total_memory"] = r.total_memory;
  d["total_latency"] = r.total_latency;
  d["monolithic_memory"] = r.monolithic_memory;
  d["monolithic_latency"] = r.monolithic_latency;
  d["memory_reduction"] = r.memory_reduction;
  d["latency_reduction"] = r.latency_reduction;
  d["combined_cost"] = r.combined_cost;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Edge large-model simulation core";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<RankError>(m, "RankError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<SizeError>(m, "SizeError", base.ptr());
  py::register_exception<ConstraintError>(m, "ConstraintError", base.ptr());
  py::register_exception<InfeasibleError>(m, "InfeasibleError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  py::class_<DeviceProfile>(m, "DeviceProfile")
      .def(py::init([](std::string id, double compute_rate, double memory_capacity,
                       double channel_gain, double tx_power, std::size_t local_rank) {
             DeviceProfile p{std::move(id), compute_rate, memory_capacity, channel_gain, tx_power,
                             local_rank};
             p.validate();
             return p;
           }),
           py::arg("id"), py::arg("compute_rate"), py::arg("memory_capacity") = 1e12,
           py::arg("channel_gain") = 1.0, py::arg("tx_power") = 1.0, py::arg("local_rank") = 1)
      .def_readwrite("id", &DeviceProfile::id)
      .def_readwrite("compute_rate", &DeviceProfile::compute_rate)
      .def_readwrite("memory_capacity", &DeviceProfile::memory_capacity)
      .def_readwrite("channel_gain", &DeviceProfile::channel_gain)
      .def_readwrite("tx_power", &DeviceProfile::tx_power)
      .def_readwrite("local_rank", &DeviceProfile::local_rank);

  // Channel and device costs.
  m.def("shannon_rate", &shannon_rate, py::arg("bandwidth"), py::arg("gain"), py::arg("power"),
        py::arg("noise_density"));
  m.def("comm_latency", &comm_latency, py::arg("bits"), py::arg("rate"));
  m.def("comp_latency", &comp_latency, py::arg("flops"), py::arg("compute_rate"));

  // Numerics.
  m.def("gram_schmidt", [](const std::vector<Vector>& vs, double tol) { return gram_schmidt(vs, tol); },
        py::arg("vectors"), py::arg("tol") = 1e-8);
  m.def("softmax", [](const Array& z) {
    const ProbVector p = softmax(to_vector(z));
    return vector_array(Vector(p.values().begin(), p.values().end()));
  });

  // Federated fine-tuning. Adapters travel as (A, B) tuples of arrays.
  m.def("zero_pad", [](const py::tuple& a, std::size_t r) { return from_adapter(zero_pad(to_adapter(a), r)); },
        py::arg("adapter"), py::arg("target_rank"));
  m.def("truncate", [](const py::tuple& a, std::size_t r) { return from_adapter(truncate(to_adapter(a), r)); },
        py::arg("adapter"), py::arg("target_rank"));
  m.def("aggregate_hetero",
        [](const std::vector<py::tuple>& adapters, const std::vector<double>& weights) {
          std::vector<LoraAdapter> in;
          for (const auto& t : adapters) in.push_back(to_adapter(t));
          return from_adapter(aggregate_hetero(in, weights));
        },
        py::arg("adapters"), py::arg("weights"));
  m.def("select_devices_and_bandwidth",
        [](const std::vector<DeviceProfile>& devices, double total_bandwidth,
           const std::vector<double>& upload_bits, const std::vector<double>& local_flops,
           double noise_density, double deadline, bool greedy_fallback) -> py::object {
          SelectionOptions o{noise_density, deadline, greedy_fallback};
          const auto sel = select_devices_and_bandwidth(devices, total_bandwidth, upload_bits, local_flops, o);
          if (!sel) return py::none();
          py::dict d;
          d["selected"] = sel->selected;
          d["bandwidth"] = sel->allocation.bandwidth;
          d["latency"] = sel->latency;
          return d;
        },
        py::arg("devices"), py::arg("total_bandwidth"), py::arg("upload_bits"), py::arg("local_flops"),
        py::arg("noise_density") = 1e-9, py::arg("deadline") = std::numeric_limits<double>::infinity(),
        py::arg("greedy_fallback") = false);

  // Unlearning.
  m.def("orthogonal_project",
        [](const Array& g, const std::vector<Vector>& retained) {
          return vector_array(orthogonal_project(to_vector(g), retained_subspace(retained)));
        },
        py::arg("gradient"), py::arg("retained_gradients"));
  m.def("bounded_cross_entropy",
        [](const std::vector<double>& p, std::size_t label, double delta) {
          return bounded_cross_entropy(ProbVector(p), label, delta);
        },
        py::arg("probs"), py::arg("label"), py::arg("delta"));
  m.def("add_dp_noise",
        [](const Array& g, double clip, double sigma, std::uint64_t seed) {
          return vector_array(add_dp_noise(to_vector(g), clip, sigma, seed));
        },
        py::arg("gradient"), py::arg("clip_norm"), py::arg("sigma"), py::arg("seed"));

  // Scheduling.
  m.def("gate_select", [](const std::vector<double>& s, std::size_t k) { return gate_select(s, k); },
        py::arg("scores"), py::arg("k"));
  m.def("queue_update",
        [](double q, double a, double b) { return queue_update({0, q}, a, b).backlog; },
        py::arg("backlog"), py::arg("arrival"), py::arg("service"));

  // Placement.
  py::class_<CotStep>(m, "CotStep")
      .def(py::init([](double w, double h, double s) { return CotStep{w, h, s}; }),
           py::arg("workload"), py::arg("handoff_bits") = 0.0, py::arg("shard_bytes") = 0.0)
      .def_readwrite("workload", &CotStep::workload)
      .def_readwrite("handoff_bits", &CotStep::handoff_size)
      .def_readwrite("shard_bytes", &CotStep::shard_bytes);
  py::class_<CotInstance>(m, "CotInstance")
      .def(py::init([](std::vector<CotStep> steps, std::vector<DeviceProfile> devices, const Array& gains,
                       double link_bandwidth, double noise_density) {
             CotInstance inst{{std::move(steps)}, std::move(devices), to_matrix(gains), link_bandwidth,
                              noise_density};
             inst.validate();
             return inst;
           }),
           py::arg("steps"), py::arg("devices"), py::arg("gains"), py::arg("link_bandwidth") = 1e6,
           py::arg("noise_density") = 1e-9)
      .def("placement_cost", &placement_cost, py::arg("placement"))
      .def("feasible", &placement_feasible, py::arg("placement"))
      .def("solve_exact", &solve_exact)
      .def("greedy", &greedy_placement)
      .def("solve_local_search", &solve_local_search, py::arg("seed") = 0, py::arg("iters") = 50);

  // Case study.
  py::class_<TokenBudgetModel>(m, "TokenBudgetModel")
      .def(py::init([](double n, double alpha, double beta, double rate, double gamma, double base_mem) {
             TokenBudgetModel t{n, alpha, beta, rate, gamma, base_mem};
             t.validate();
             return t;
           }),
           py::arg("total_tokens") = 512.0, py::arg("alpha_mem") = 1.0, py::arg("beta_comp") = 1.0,
           py::arg("compute_rate") = 1.0, py::arg("gamma_handoff") = 0.0, py::arg("base_mem") = 0.0)
      .def_readwrite("total_tokens", &TokenBudgetModel::total_tokens)
      .def_readwrite("gamma_handoff", &TokenBudgetModel::gamma_handoff)
      .def_readwrite("base_mem", &TokenBudgetModel::base_mem);
  m.def("casestudy_sweep",
        [](const TokenBudgetModel& model, const std::vector<double>& budgets) {
          py::list rows;
          for (const auto& r : casestudy_sweep(model, budgets)) rows.append(row_dict(r));
          return rows;
        },
        py::arg("model"), py::arg("budgets"));
  m.def("calibrate_casestudy",
        [](double mem, double lat) {
          const CalibrationResult r = calibrate_casestudy(mem, lat);
          return py::module_::import("json").attr("loads")(calibration_json(r).dump());
        },
        py::arg("memory_target") = 0.708, py::arg("latency_target") = 0.596);

  // Scenario runner.
  m.def("run_scenario",
        [](const std::filesystem::path& config, const std::filesystem::path& out,
           std::optional<std::uint64_t> seed) {
          std::ostringstream log;
          const int status = run_scenario(config, out, seed, log);
          return py::make_tuple(status, log.str());
        },
        py::arg("config"), py::arg("out_dir"), py::arg("seed") = py::none());
  m.def("validate_scenario", [](const std::filesystem::path& p) { load_scenario(p); }, py::arg("config"));
}
