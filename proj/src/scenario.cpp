#include "edgelam/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <ostream>
#include <sstream>

#include "edgelam/cot.hpp"
#include "edgelam/fedft.hpp"
#include "edgelam/moe.hpp"
#include "edgelam/rng.hpp"
#include "edgelam/unlearn.hpp"

namespace edgelam {

using nlohmann::json;

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kFedFt: return "fedft";
    case ScenarioKind::kUnlearn: return "unlearn";
    case ScenarioKind::kMoe: return "moe";
    case ScenarioKind::kCot: return "cot";
    case ScenarioKind::kCaseStudy: return "casestudy";
  }
  return "unknown";
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

namespace {

// ---------------------------------------------------------------------------
// Field access with path-qualified diagnostics.

enum class Bound { kAny, kPositive, kNonNegative, kUnitOpen, kProbability };

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ConfigError("field '" + path + "': " + what);
}

std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

std::string index_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

const json& require_object(const json& j, const std::string& path) {
  if (!j.is_object()) field_error(path.empty() ? "<root>" : path, "expected an object");
  return j;
}

double check_bound(double v, Bound b, const std::string& path) {
  switch (b) {
    case Bound::kAny: break;
    case Bound::kPositive:
      if (!(v > 0.0)) field_error(path, "must be > 0");
      break;
    case Bound::kNonNegative:
      if (!(v >= 0.0)) field_error(path, "must be >= 0");
      break;
    case Bound::kUnitOpen:
      if (!(v > 0.0 && v < 1.0)) field_error(path, "must lie in (0,1)");
      break;
    case Bound::kProbability:
      if (!(v >= 0.0 && v <= 1.0)) field_error(path, "must lie in [0,1]");
      break;
  }
  return v;
}

double as_number(const json& j, const std::string& path, Bound b = Bound::kAny) {
  if (!j.is_number()) field_error(path, "expected a number");
  return check_bound(j.get<double>(), b, path);
}

double number(const json& obj, const std::string& base, const char* key,
              std::optional<double> def, Bound b = Bound::kAny) {
  const std::string path = join_path(base, key);
  if (!obj.contains(key)) {
    if (!def) field_error(path, "missing required field");
    return *def;
  }
  return as_number(obj.at(key), path, b);
}

std::uint64_t count(const json& obj, const std::string& base, const char* key,
                    std::optional<std::uint64_t> def, std::uint64_t min = 0) {
  const std::string path = join_path(base, key);
  if (!obj.contains(key)) {
    if (!def) field_error(path, "missing required field");
    return *def;
  }
  const json& j = obj.at(key);
  if (!j.is_number_unsigned()) field_error(path, "expected a nonnegative integer");
  const auto v = j.get<std::uint64_t>();
  if (v < min) field_error(path, "must be >= " + std::to_string(min));
  return v;
}

bool boolean(const json& obj, const std::string& base, const char* key, bool def) {
  if (!obj.contains(key)) return def;
  if (!obj.at(key).is_boolean()) field_error(join_path(base, key), "expected true or false");
  return obj.at(key).get<bool>();
}

std::string string_field(const json& obj, const std::string& base, const char* key,
                         std::optional<std::string> def) {
  const std::string path = join_path(base, key);
  if (!obj.contains(key)) {
    if (!def) field_error(path, "missing required field");
    return *def;
  }
  if (!obj.at(key).is_string()) field_error(path, "expected a string");
  return obj.at(key).get<std::string>();
}

const json& array_field(const json& obj, const std::string& base, const char* key,
                        bool allow_empty = false) {
  const std::string path = join_path(base, key);
  if (!obj.contains(key)) field_error(path, "missing required field");
  const json& j = obj.at(key);
  if (!j.is_array()) field_error(path, "expected an array");
  if (!allow_empty && j.empty()) field_error(path, "must not be empty");
  return j;
}

std::vector<double> number_list(const json& obj, const std::string& base, const char* key,
                                Bound b) {
  const json& arr = array_field(obj, base, key);
  std::vector<double> out;
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.push_back(as_number(arr[i], index_path(join_path(base, key), i), b));
  return out;
}

std::size_t device_index(const std::vector<DeviceProfile>& devices, const json& j,
                         const std::string& path) {
  if (!j.is_string()) field_error(path, "expected a device id string");
  const std::string id = j.get<std::string>();
  for (std::size_t i = 0; i < devices.size(); ++i)
    if (devices[i].id == id) return i;
  field_error(path, "unknown device id '" + id + "'");
}

std::set<std::size_t> device_set(const std::vector<DeviceProfile>& devices, const json& obj,
                                  const std::string& base, const char* key) {
  std::set<std::size_t> out;
  if (!obj.contains(key)) return out;
  const json& arr = array_field(obj, base, key, true);
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.insert(device_index(devices, arr[i], index_path(join_path(base, key), i)));
  return out;
}

std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

// ---------------------------------------------------------------------------
// Kind-specific validation; each mirrors what its runner reads.

FedFtConfig fedft_config(const Scenario& sc) {
  const json& p = sc.params;
  const std::string b = "fedft";
  FedFtConfig c;
  c.rows = count(p, b, "rows", c.rows, 1);
  c.cols = count(p, b, "cols", c.cols, 1);
  c.true_rank = count(p, b, "true_rank", c.true_rank, 1);
  c.samples_per_device = count(p, b, "samples_per_device", c.samples_per_device, 1);
  c.lr = number(p, b, "lr", c.lr, Bound::kPositive);
  c.noise_std = number(p, b, "noise_std", c.noise_std, Bound::kNonNegative);
  c.init_scale = number(p, b, "init_scale", c.init_scale, Bound::kNonNegative);
  c.bits_per_param = number(p, b, "bits_per_param", c.bits_per_param, Bound::kPositive);
  c.flops_per_sample_param =
      number(p, b, "flops_per_sample_param", c.flops_per_sample_param, Bound::kNonNegative);
  c.deadline = number(p, b, "deadline_s", c.deadline, Bound::kPositive);
  c.noise_density = sc.channel.noise_density;
  if (c.true_rank > std::min(c.rows, c.cols)) field_error("fedft.true_rank", "exceeds min(rows, cols)");
  for (std::size_t i = 0; i < sc.devices.size(); ++i) {
    if (sc.devices[i].local_rank > std::min(c.rows, c.cols))
      field_error(index_path("devices", i) + ".local_rank", "exceeds min(fedft.rows, fedft.cols)");
  }
  return c;
}

struct UnlearnParams {
  UnlearnTaskConfig task;
  std::size_t pretrain_rounds = 100;
  std::size_t rounds = 100;
  double lr = 0.5;
  double delta = 0.1;
  std::set<std::size_t> opt_out;
  std::vector<double> sigmas;  // empty means no DP
  double clip_norm = 1.0;
};

UnlearnParams unlearn_params(const Scenario& sc) {
  const json& p = sc.params;
  const std::string b = "unlearn";
  UnlearnParams u;
  if (sc.devices.size() < 2) field_error("devices", "unlearn needs at least two devices");
  u.task.devices = sc.devices.size();
  u.task.features = count(p, b, "features", u.task.features, 3);
  u.task.samples_per_device = count(p, b, "samples_per_device", u.task.samples_per_device, 1);
  u.task.shared_leak = number(p, b, "shared_leak", u.task.shared_leak, Bound::kNonNegative);
  u.pretrain_rounds = count(p, b, "pretrain_rounds", u.pretrain_rounds);
  u.rounds = count(p, b, "rounds", u.rounds, 1);
  u.lr = number(p, b, "lr", u.lr, Bound::kPositive);
  u.delta = number(p, b, "delta", u.delta, Bound::kPositive);
  if (u.delta > 1.0) field_error("unlearn.delta", "must lie in (0,1]");
  u.opt_out = device_set(sc.devices, p, b, "opt_out");
  if (u.opt_out.empty()) field_error("unlearn.opt_out", "must name at least one device");
  u.task.distinct_devices =
      p.contains("distinct") ? device_set(sc.devices, p, b, "distinct") : u.opt_out;
  if (p.contains("dp")) {
    const json& dp = require_object(p.at("dp"), "unlearn.dp");
    u.clip_norm = number(dp, "unlearn.dp", "clip_norm", 1.0, Bound::kPositive);
    if (dp.contains("sigma")) {
      if (dp.at("sigma").is_array()) {
        u.sigmas = number_list(dp, "unlearn.dp", "sigma", Bound::kNonNegative);
      } else {
        u.sigmas = {number(dp, "unlearn.dp", "sigma", 0.0, Bound::kNonNegative)};
      }
    } else {
      u.sigmas = {0.0};
    }
  }
  return u;
}

struct MoeParams {
  OrchestratorConfig config;
  std::uint64_t slots = 200;
  std::vector<double> vs;
};

MoeParams moe_params(const Scenario& sc) {
  const json& p = sc.params;
  const std::string b = "moe";
  MoeParams m;
  OrchestratorConfig& c = m.config;
  c.devices = sc.devices;
  c.noise_density = sc.channel.noise_density;
  c.fading = sc.channel.fading;
  c.seed = sc.seed;
  m.slots = count(p, b, "slots", m.slots, 1);
  if (p.contains("V") && p.at("V").is_array()) {
    m.vs = number_list(p, b, "V", Bound::kNonNegative);
  } else {
    m.vs = {number(p, b, "V", 1.0, Bound::kNonNegative)};
  }
  c.top_k = count(p, b, "top_k", 1, 1);
  c.arrival_prob = number(p, b, "arrival_prob", 1.0, Bound::kProbability);
  c.tasks_per_slot = count(p, b, "tasks_per_slot", 1);
  c.link_bandwidth = number(p, b, "link_bandwidth", sc.channel.total_bandwidth, Bound::kNonNegative);
  c.w_latency = number(p, b, "w_latency", 1.0, Bound::kNonNegative);
  c.w_energy = number(p, b, "w_energy", 0.0, Bound::kNonNegative);
  c.slot_duration = number(p, b, "slot_duration", 1.0, Bound::kPositive);
  c.max_candidates = count(p, b, "max_candidates", 4096, 1);
  c.failed = device_set(sc.devices, p, b, "failed");
  const json& layers = array_field(p, b, "layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = index_path("moe.layers", l);
    if (!layers[l].is_array() || layers[l].empty()) field_error(lp, "expected a nonempty array of experts");
    std::vector<ExpertMicroservice> experts;
    for (std::size_t e = 0; e < layers[l].size(); ++e) {
      const std::string ep = index_path(lp, e);
      const json& ej = require_object(layers[l][e], ep);
      ExpertMicroservice ex;
      ex.id = string_field(ej, ep, "id", "L" + std::to_string(l) + "E" + std::to_string(e));
      ex.workload_per_call = number(ej, ep, "workload", std::nullopt, Bound::kPositive);
      ex.output_size = number(ej, ep, "output_bits", 0.0, Bound::kNonNegative);
      const json& reps = array_field(ej, ep, "replicas");
      for (std::size_t r = 0; r < reps.size(); ++r)
        ex.replicas.push_back(device_index(sc.devices, reps[r], index_path(ep + ".replicas", r)));
      experts.push_back(std::move(ex));
    }
    if (c.top_k > experts.size()) field_error("moe.top_k", "exceeds the experts in " + lp);
    c.layers.push_back(std::move(experts));
  }
  return m;
}

struct CotParams {
  CotInstance instance;
  std::string solver = "both";
  std::size_t iters = 50;
};

CotParams cot_params(const Scenario& sc) {
  const json& p = sc.params;
  const std::string b = "cot";
  CotParams c;
  c.instance.devices = sc.devices;
  c.instance.noise_density = sc.channel.noise_density;
  c.instance.link_bandwidth =
      number(p, b, "link_bandwidth", sc.channel.total_bandwidth, Bound::kNonNegative);
  const json& steps = array_field(p, b, "steps");
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const std::string sp = index_path("cot.steps", s);
    const json& sj = require_object(steps[s], sp);
    c.instance.chain.steps.push_back({number(sj, sp, "workload", std::nullopt, Bound::kNonNegative),
                                      number(sj, sp, "handoff_bits", 0.0, Bound::kNonNegative),
                                      number(sj, sp, "shard_bytes", 0.0, Bound::kNonNegative)});
  }
  const std::size_t n = sc.devices.size();
  const json& gains = array_field(p, b, "gains");
  if (gains.size() != n) field_error("cot.gains", "must have one row per device");
  std::vector<double> g;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string rp = index_path("cot.gains", i);
    if (!gains[i].is_array() || gains[i].size() != n) field_error(rp, "must have one entry per device");
    for (std::size_t j = 0; j < n; ++j)
      g.push_back(as_number(gains[i][j], index_path(rp, j), Bound::kNonNegative));
  }
  c.instance.gains = Matrix(n, n, std::move(g));
  c.solver = string_field(p, b, "solver", c.solver);
  if (c.solver != "exact" && c.solver != "local_search" && c.solver != "both")
    field_error("cot.solver", "expected exact, local_search or both");
  c.iters = count(p, b, "iters", c.iters, 1);
  return c;
}

struct CaseStudyParams {
  TokenBudgetModel model;
  std::vector<double> budgets = {64, 128, 256};
  bool calibrate = false;
  double memory_target = 0.708;
  double latency_target = 0.596;
};

CaseStudyParams casestudy_params(const Scenario& sc) {
  const json& p = sc.params;
  const std::string b = "casestudy";
  CaseStudyParams c;
  if (p.contains("model")) {
    const std::string mp = "casestudy.model";
    const json& m = require_object(p.at("model"), mp);
    c.model.total_tokens = number(m, mp, "total_tokens", c.model.total_tokens, Bound::kPositive);
    c.model.alpha_mem = number(m, mp, "alpha_mem", c.model.alpha_mem, Bound::kPositive);
    c.model.beta_comp = number(m, mp, "beta_comp", c.model.beta_comp, Bound::kPositive);
    c.model.compute_rate = number(m, mp, "compute_rate", c.model.compute_rate, Bound::kPositive);
    c.model.gamma_handoff = number(m, mp, "gamma_handoff", c.model.gamma_handoff, Bound::kNonNegative);
    c.model.base_mem = number(m, mp, "base_mem", c.model.base_mem, Bound::kNonNegative);
  }
  if (p.contains("budgets")) c.budgets = number_list(p, b, "budgets", Bound::kPositive);
  c.calibrate = boolean(p, b, "calibrate", false);
  if (p.contains("targets")) {
    const auto t = number_list(p, b, "targets", Bound::kUnitOpen);
    if (t.size() != 2) field_error("casestudy.targets", "expected [memory_reduction, latency_reduction]");
    c.memory_target = t[0];
    c.latency_target = t[1];
  }
  return c;
}

void validate_kind_block(const Scenario& sc) {
  switch (sc.kind) {
    case ScenarioKind::kFedFt:
      fedft_config(sc);
      count(sc.params, "fedft", "rounds", 50, 1);
      break;
    case ScenarioKind::kUnlearn: unlearn_params(sc); break;
    case ScenarioKind::kMoe: moe_params(sc); break;
    case ScenarioKind::kCot: cot_params(sc); break;
    case ScenarioKind::kCaseStudy: casestudy_params(sc); break;
  }
}

// ---------------------------------------------------------------------------
// Output helpers.

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << text;
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

std::string join(const std::vector<std::string>& parts, char sep = ';') {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runners.

int run_fedft(const Scenario& sc, const std::filesystem::path& out, std::ostream& log) {
  const FedFtConfig cfg = fedft_config(sc);
  const std::size_t rounds = count(sc.params, "fedft", "rounds", 50, 1);
  FedFtState state = make_synthetic_fedft(cfg, sc.devices, sc.seed);
  const double initial = global_loss(state);

  std::ostringstream csv;
  csv << "round,global_loss,round_latency_s,selected_devices,bandwidth_hz\n";
  double total_latency = 0.0;
  for (std::size_t r = 0; r < rounds; ++r) {
    auto res = fedft_round(state, sc.devices, sc.channel.total_bandwidth, cfg);
    state = std::move(res.state);
    const auto& rec = res.record;
    std::vector<std::string> bw;
    for (double b : rec.bandwidth) bw.push_back(format_number(b));
    csv << rec.round << ',' << format_number(rec.global_loss) << ','
        << format_number(rec.round_latency) << ',' << join(rec.selected_ids) << ',' << join(bw)
        << '\n';
    total_latency += rec.round_latency;
  }
  write_text(out / "fedft_rounds.csv", csv.str());
  const double final_loss = global_loss(state);
  write_json(out / "fedft_summary.json", json{{"kind", "fedft"},
                                              {"seed", sc.seed},
                                              {"rounds", rounds},
                                              {"initial_loss", initial},
                                              {"final_loss", final_loss},
                                              {"total_latency_s", total_latency}});
  log << "fedft: " << rounds << " rounds, loss " << format_number(initial) << " -> "
      << format_number(final_loss) << "\n";
  return kExitOk;
}

int run_unlearn(const Scenario& sc, const std::filesystem::path& out, std::ostream& log) {
  const UnlearnParams u = unlearn_params(sc);
  UnlearnState trained = make_synthetic_unlearn(u.task, sc.seed);
  for (std::size_t i = 0; i < sc.devices.size(); ++i) trained.ids[i] = sc.devices[i].id;
  std::vector<std::size_t> everyone(sc.devices.size());
  for (std::size_t i = 0; i < everyone.size(); ++i) everyone[i] = i;
  for (std::size_t r = 0; r < u.pretrain_rounds; ++r)
    trained = federated_descent_round(trained, everyone, u.lr, u.delta);

  UnlearnRequest request;
  request.opt_out = u.opt_out;
  for (std::size_t o : u.opt_out) request.forget_batches[o] = trained.data[o];
  const auto retained = retained_devices(trained, request);
  std::vector<LabeledData> forget;
  std::vector<std::size_t> forget_idx;
  for (const auto& [id, batch] : request.forget_batches) {
    forget_idx.push_back(forget.size());
    forget.push_back(batch);
  }
  const double pre_forget = pooled_loss(trained.global, forget, forget_idx, u.delta);

  UnlearnState baseline = trained;
  for (std::size_t r = 0; r < u.rounds; ++r)
    baseline = federated_descent_round(baseline, retained, u.lr, u.delta);
  const double baseline_retained = pooled_loss(baseline.global, baseline.data, retained, u.delta);

  std::ostringstream csv;
  csv << "round,forget_loss,retained_loss,projection_residual_norm,sigma\n";
  json runs = json::array();
  const std::vector<std::optional<double>> sigmas =
      u.sigmas.empty() ? std::vector<std::optional<double>>{std::nullopt}
                       : std::vector<std::optional<double>>(u.sigmas.begin(), u.sigmas.end());
  for (const auto& sigma : sigmas) {
    std::optional<DpConfig> dp;
    if (sigma) dp = DpConfig{u.clip_norm, *sigma, derive_seed(sc.seed, 0xD9)};
    UnlearnState st = trained;
    UnlearnRoundRecord last;
    double max_ortho = 0.0;
    for (std::size_t r = 0; r < u.rounds; ++r) {
      auto res = unlearning_round(st, request, u.lr, u.delta, dp);
      st = std::move(res.state);
      last = res.record;
      max_ortho = std::max(max_ortho, last.orthogonality_error);
      csv << (r + 1) << ',' << format_number(last.forget_loss) << ','
          << format_number(last.retained_loss) << ',' << format_number(last.projection_residual_norm)
          << ',' << format_number(last.sigma) << '\n';
    }
    runs.push_back({{"sigma", last.sigma},
                    {"final_forget_loss", last.forget_loss},
                    {"final_retained_loss", last.retained_loss},
                    {"max_orthogonality_error", max_ortho}});
  }
  write_text(out / "unlearn_rounds.csv", csv.str());
  write_json(out / "unlearn_summary.json", json{{"kind", "unlearn"},
                                                {"seed", sc.seed},
                                                {"pre_unlearning_forget_loss", pre_forget},
                                                {"baseline_retained_loss", baseline_retained},
                                                {"runs", runs}});
  log << "unlearn: forget loss before " << format_number(pre_forget) << ", " << runs.size()
      << " run(s)\n";
  return kExitOk;
}

int run_moe(const Scenario& sc, const std::filesystem::path& out, std::ostream& log) {
  MoeParams m = moe_params(sc);
  json summary = json::array();
  for (std::size_t vi = 0; vi < m.vs.size(); ++vi) {
    m.config.v = m.vs[vi];
    const OrchestrationTrace trace = orchestrate(m.config, m.slots);
    std::ostringstream csv;
    csv << "slot,assignment,slot_cost";
    for (const auto& d : sc.devices) csv << ",backlog_" << d.id;
    csv << '\n';
    for (const auto& s : trace.slots) {
      std::vector<std::string> ids;
      for (std::size_t d : s.assignment) ids.push_back(sc.devices[d].id);
      csv << s.slot << ',' << join(ids) << ',' << format_number(s.cost);
      for (double q : s.backlog_after) csv << ',' << format_number(q);
      csv << '\n';
    }
    const std::string name = "moe_trace_v" + std::to_string(vi) + ".csv";
    write_text(out / name, csv.str());
    summary.push_back({{"V", m.vs[vi]},
                       {"trace", name},
                       {"time_average_cost", trace.time_average_cost},
                       {"time_average_backlog", trace.time_average_backlog}});
  }
  write_json(out / "moe_summary.json",
             json{{"kind", "moe"}, {"seed", sc.seed}, {"slots", m.slots}, {"sweep", summary}});
  log << "moe: " << m.vs.size() << " V value(s), " << m.slots << " slots each\n";
  return kExitOk;
}

int run_cot(const Scenario& sc, const std::filesystem::path& out, std::ostream& log) {
  const CotParams c = cot_params(sc);
  c.instance.validate();
  json results = json::array();
  std::optional<double> exact_cost;
  auto placement_json = [&](const Placement& p) {
    json ids = json::array();
    for (std::size_t d : p) ids.push_back(sc.devices[d].id);
    return ids;
  };
  int status = kExitOk;
  if (c.solver == "exact" || c.solver == "both") {
    auto p = solve_exact(c.instance);
    if (!p) {
      status = kExitInfeasible;
      results.push_back({{"solver", "exact"}, {"feasible", false}});
    } else {
      exact_cost = placement_cost(c.instance, *p);
      results.push_back({{"solver", "exact"},
                         {"feasible", true},
                         {"placement", *p},
                         {"placement_ids", placement_json(*p)},
                         {"cost", *exact_cost},
                         {"gap_to_exact", 0.0}});
    }
  }
  if (c.solver == "local_search" || c.solver == "both") {
    auto p = solve_local_search(c.instance, sc.seed, c.iters);
    if (!p) {
      status = kExitInfeasible;
      results.push_back({{"solver", "local_search"}, {"feasible", false}});
    } else {
      const double cost = placement_cost(c.instance, *p);
      json r{{"solver", "local_search"},
             {"feasible", true},
             {"placement", *p},
             {"placement_ids", placement_json(*p)},
             {"cost", cost}};
      r["gap_to_exact"] = exact_cost ? json(cost / *exact_cost - 1.0) : json(nullptr);
      results.push_back(std::move(r));
    }
  }
  write_json(out / "cot_result.json", json{{"kind", "cot"}, {"seed", sc.seed}, {"results", results}});
  log << "cot: " << results.size() << " solver result(s)\n";
  return status;
}

int run_casestudy(const Scenario& sc, const std::filesystem::path& out, std::ostream& log) {
  const CaseStudyParams c = casestudy_params(sc);
  TokenBudgetModel model = c.model;
  json summary{{"kind", "casestudy"}, {"seed", sc.seed}};
  int status = kExitOk;
  if (c.calibrate) {
    const CalibrationResult cal = calibrate_casestudy(c.memory_target, c.latency_target, c.model);
    summary["calibration"] = calibration_json(cal);
    if (!cal.ok) {
      log << "casestudy: calibration failed to reach the targets within the residual bound\n";
      status = kExitInfeasible;
    }
    model = cal.model;
  }
  const auto rows = casestudy_sweep(model, c.budgets);
  std::ostringstream csv;
  write_casestudy_csv(csv, rows);
  write_text(out / "casestudy.csv", csv.str());
  json table = json::array();
  for (const auto& r : rows) {
    table.push_back({{"budget", r.budget},
                     {"device_count", r.device_count},
                     {"memory_reduction", r.memory_reduction},
                     {"latency_reduction", r.latency_reduction},
                     {"combined_cost", r.combined_cost}});
  }
  summary["table"] = table;
  write_json(out / "casestudy.json", summary);
  log << "casestudy: " << rows.size() << " budget(s)\n";
  return status;
}

}  // namespace

void write_casestudy_csv(std::ostream& os, const std::vector<BudgetRow>& rows) {
  os << "budget,device_count,handoffs,total_memory,total_latency,monolithic_memory,"
        "monolithic_latency,memory_reduction,latency_reduction,combined_cost\n";
  for (const auto& r : rows) {
    os << format_number(r.budget) << ',' << r.device_count << ',' << r.handoffs << ','
       << format_number(r.total_memory) << ',' << format_number(r.total_latency) << ','
       << format_number(r.monolithic_memory) << ',' << format_number(r.monolithic_latency) << ','
       << format_number(r.memory_reduction) << ',' << format_number(r.latency_reduction) << ','
       << format_number(r.combined_cost) << '\n';
  }
}

nlohmann::json calibration_json(const CalibrationResult& r) {
  return json{{"ok", r.ok},
              {"total_tokens", r.model.total_tokens},
              {"gamma_handoff", r.model.gamma_handoff},
              {"base_mem", r.model.base_mem},
              {"alpha_mem", r.model.alpha_mem},
              {"beta_comp", r.model.beta_comp},
              {"compute_rate", r.model.compute_rate},
              {"memory_reduction", r.memory_reduction},
              {"latency_reduction", r.latency_reduction},
              {"residual_memory", r.residual_memory},
              {"residual_latency", r.residual_latency},
              {"candidates", r.candidates}};
}

Scenario parse_scenario(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    // Keep only the parser's reason; the position is reported above.
    const std::string what = e.what();
    const auto cut = what.find(": ", what.find("column"));
    throw ConfigError("parse error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " +
                      (cut == std::string::npos ? what : what.substr(cut + 2)));
  }
  require_object(root, "");

  Scenario sc;
  const std::string kind = string_field(root, "", "kind", std::nullopt);
  static const std::map<std::string, ScenarioKind> kinds = {
      {"fedft", ScenarioKind::kFedFt}, {"unlearn", ScenarioKind::kUnlearn},
      {"moe", ScenarioKind::kMoe},     {"cot", ScenarioKind::kCot},
      {"casestudy", ScenarioKind::kCaseStudy}};
  const auto it = kinds.find(kind);
  if (it == kinds.end()) field_error("kind", "unknown experiment kind '" + kind + "'");
  sc.kind = it->second;

  if (!root.contains("seed")) field_error("seed", "missing required field");
  sc.seed = count(root, "", "seed", std::nullopt);

  if (sc.kind != ScenarioKind::kCaseStudy || root.contains("devices")) {
    const json& devs = array_field(root, "", "devices");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < devs.size(); ++i) {
      const std::string dp = index_path("devices", i);
      const json& dj = require_object(devs[i], dp);
      DeviceProfile d;
      d.id = string_field(dj, dp, "id", std::nullopt);
      if (!seen.insert(d.id).second) field_error(dp + ".id", "duplicate device id '" + d.id + "'");
      d.compute_rate = number(dj, dp, "compute_rate", std::nullopt, Bound::kPositive);
      d.memory_capacity = number(dj, dp, "memory_capacity", 1e12, Bound::kPositive);
      d.channel_gain = number(dj, dp, "channel_gain", 1.0, Bound::kNonNegative);
      d.tx_power = number(dj, dp, "tx_power", 1.0, Bound::kNonNegative);
      d.local_rank = count(dj, dp, "local_rank", 1, 1);
      sc.devices.push_back(std::move(d));
    }
  }
  if (root.contains("channel")) {
    const json& ch = require_object(root.at("channel"), "channel");
    sc.channel.total_bandwidth = number(ch, "channel", "total_bandwidth", 1e6, Bound::kPositive);
    sc.channel.noise_density = number(ch, "channel", "noise_density", 1e-9, Bound::kPositive);
    sc.channel.fading = boolean(ch, "channel", "fading", false);
  }
  const std::string block(to_string(sc.kind));
  sc.params = root.contains(block) ? require_object(root.at(block), block) : json::object();
  validate_kind_block(sc);
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_scenario(ss.str());
}

int run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir, std::ostream& log) {
  try {
    std::filesystem::create_directories(out_dir);
    switch (scenario.kind) {
      case ScenarioKind::kFedFt: return run_fedft(scenario, out_dir, log);
      case ScenarioKind::kUnlearn: return run_unlearn(scenario, out_dir, log);
      case ScenarioKind::kMoe: return run_moe(scenario, out_dir, log);
      case ScenarioKind::kCot: return run_cot(scenario, out_dir, log);
      case ScenarioKind::kCaseStudy: return run_casestudy(scenario, out_dir, log);
    }
  } catch (const InfeasibleError& e) {
    log << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const Error& e) {
    // Anything the modules reject at run time traces back to scenario values.
    log << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

int run_scenario(const std::filesystem::path& config, const std::filesystem::path& out_dir,
                 std::optional<std::uint64_t> seed_override, std::ostream& log) {
  Scenario sc;
  try {
    sc = load_scenario(config);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (seed_override) sc.seed = *seed_override;
  return run_scenario(sc, out_dir, log);
}

}  // namespace edgelam
