#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fmgl/fmgl.h"
#include "io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fmgl_cli;

namespace {

struct Deleter {
  void operator()(fmgl_covariance* p) const { fmgl_covariance_free(p); }
  void operator()(fmgl_precision* p) const { fmgl_precision_free(p); }
  void operator()(fmgl_report* p) const { fmgl_report_free(p); }
  void operator()(fmgl_partition* p) const { fmgl_partition_free(p); }
  void operator()(fmgl_truth* p) const { fmgl_truth_free(p); }
};
template <typename T>
using Handle = std::unique_ptr<T, Deleter>;

int exit_code_of(fmgl_status st) {
  switch (st) {
    case FMGL_OK: return kOk;
    case FMGL_ERR_PARAMETER: return kParameter;
    case FMGL_ERR_DATA:
    case FMGL_ERR_STRUCTURAL: return kData;
    case FMGL_ERR_NUMERICAL: return kNumerical;
    default: return kInternal;
  }
}

void check(fmgl_status st) {
  if (st != FMGL_OK) throw CliError(exit_code_of(st), fmgl_last_error());
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json manifest(const std::string& command, const std::vector<std::string>& argv,
              const std::vector<std::string>& inputs, json parameters,
              const std::vector<std::string>& outputs) {
  json m;
  m["schema_version"] = 1;
  m["command"] = command;
  m["argv"] = argv;
  m["inputs"] = inputs;
  m["parameters"] = std::move(parameters);
  m["outputs"] = outputs;
  m["version"] = fmgl_version();
  m["timestamp"] = utc_timestamp();
  return m;
}

void emit(const json& doc, const std::string& out_path) {
  if (out_path.empty())
    std::cout << doc.dump(2) << '\n';
  else
    write_text(out_path, doc.dump(2) + "\n");
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("FMGL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    throw CliError(kParameter, std::string("FMGL_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

struct Inputs {
  std::vector<std::string> files;
  bool samples = false;
  bool center = false;
};

void add_input_options(CLI::App* cmd, Inputs& in) {
  cmd->add_option("--cov", in.files, "Covariance CSV per graph, in graph order")->required();
  cmd->add_flag("--samples", in.samples, "Inputs are n x p sample matrices; S = X^T X / n");
  cmd->add_flag("--center", in.center, "Subtract column means from samples first");
}

Handle<fmgl_covariance> load_covariances(const Inputs& in) {
  const int k = static_cast<int>(in.files.size());
  std::vector<Table> tables;
  for (const auto& f : in.files) tables.push_back(read_csv(f));
  const long p = tables.front().cols;
  for (std::size_t g = 0; g < tables.size(); ++g)
    if (tables[g].cols != p)
      throw CliError(kData, in.files[g] + ": has " + std::to_string(tables[g].cols) +
                                " columns, expected " + std::to_string(p));
  fmgl_covariance* out = nullptr;
  if (in.samples) {
    std::vector<const double*> ptrs;
    std::vector<long> ns;
    for (const auto& t : tables) {
      ptrs.push_back(t.values.data());
      ns.push_back(t.rows);
    }
    check(fmgl_covariance_from_samples(ptrs.data(), ns.data(), static_cast<int>(p), k,
                                       in.center ? 1 : 0, &out));
    return Handle<fmgl_covariance>(out);
  }
  std::vector<double> packed;
  packed.reserve(static_cast<std::size_t>(k * p * p));
  for (std::size_t g = 0; g < tables.size(); ++g) {
    const Table& t = tables[g];
    if (t.rows != p) throw CliError(kData, in.files[g] + ": covariance matrix must be square");
    for (long c = 0; c < p; ++c)
      for (long r = 0; r < p; ++r) packed.push_back(t.values[static_cast<std::size_t>(r * p + c)]);
  }
  check(fmgl_covariance_create(packed.data(), static_cast<int>(p), k, 0.0, -1, &out));
  return Handle<fmgl_covariance>(out);
}

// Reads <dir>/theta_1.mtx, theta_2.mtx, ... (or truth_*.mtx) until one is missing.
Handle<fmgl_precision> load_precision_dir(const std::string& dir) {
  std::string prefix = "theta_";
  if (!fs::exists(fs::path(dir) / "theta_1.mtx")) prefix = "truth_";
  if (!fs::exists(fs::path(dir) / (prefix + "1.mtx")))
    throw CliError(kData, dir + ": no theta_1.mtx or truth_1.mtx");
  std::vector<double> packed;
  int p = 0, k = 0;
  for (;; ++k) {
    const fs::path file = fs::path(dir) / (prefix + std::to_string(k + 1) + ".mtx");
    if (!fs::exists(file)) break;
    int pk = 0;
    auto m = read_matrix_market(file.string(), pk);
    if (k > 0 && pk != p) throw CliError(kData, file.string() + ": dimension mismatch");
    p = pk;
    packed.insert(packed.end(), m.begin(), m.end());
  }
  fmgl_precision* out = nullptr;
  check(fmgl_precision_create(packed.data(), p, k, &out));
  return Handle<fmgl_precision>(out);
}

std::vector<double> matrix_of(const fmgl_precision* theta, int k) {
  const int p = fmgl_precision_dim(theta);
  std::vector<double> m(static_cast<std::size_t>(p) * static_cast<std::size_t>(p));
  check(fmgl_precision_get(theta, k, m.data()));
  return m;
}

std::vector<std::string> write_precision_dir(const fmgl_precision* theta, const fs::path& dir,
                                             const std::string& prefix) {
  std::vector<std::string> files;
  for (int k = 0; k < fmgl_precision_count(theta); ++k) {
    const auto m = matrix_of(theta, k);
    const std::string name = prefix + std::to_string(k + 1) + ".mtx";
    write_matrix_market((dir / name).string(), m.data(), fmgl_precision_dim(theta));
    files.push_back(name);
  }
  return files;
}

json partition_json(const fmgl_partition* part) {
  json blocks = json::array();
  std::map<int, int> histogram;
  for (int b = 0; b < fmgl_partition_block_count(part); ++b) {
    std::vector<int> idx(static_cast<std::size_t>(fmgl_partition_block_size(part, b)));
    check(fmgl_partition_block(part, b, idx.data()));
    for (int& i : idx) ++i;  // 1-based, as in the matrix files
    blocks.push_back(idx);
    ++histogram[static_cast<int>(idx.size())];
  }
  json hist = json::object();
  for (const auto& [size, count] : histogram) hist[std::to_string(size)] = count;
  json j;
  j["block_count"] = fmgl_partition_block_count(part);
  j["max_block_size"] = fmgl_partition_max_block_size(part);
  j["blocks"] = std::move(blocks);
  j["histogram"] = std::move(hist);
  return j;
}

// ---- generate ----

struct GenerateArgs {
  std::string kind;
  int p = 100, k = 2, l = 5;
  double nnz_factor = 10.0;
  int n_edges = 200, n_flips = 25;
  long n = 0;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> sample_seed;
  std::string out;
};

int run_generate(const GenerateArgs& a, const std::vector<std::string>& argv) {
  fmgl_truth* raw = nullptr;
  if (a.kind == "block")
    check(fmgl_generate_block(a.p, a.k, a.l, a.seed, a.nnz_factor, &raw));
  else
    check(fmgl_generate_drift(a.p, a.n_edges, a.n_flips, a.k, a.seed, &raw));
  Handle<fmgl_truth> truth(raw);
  const fmgl_precision* theta = fmgl_truth_precision(truth.get());
  const long n = a.n > 0 ? a.n : (a.kind == "block" ? 5L * a.p : 100L);
  const std::uint64_t sample_seed = a.sample_seed.value_or(a.seed + 1);
  fmgl_covariance* cov_raw = nullptr;
  check(fmgl_sample_gaussian(theta, n, sample_seed, &cov_raw));
  Handle<fmgl_covariance> cov(cov_raw);

  const fs::path dir(a.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError(kData, "cannot create " + a.out + ": " + ec.message());

  auto outputs = write_precision_dir(theta, dir, "truth_");
  const int p = fmgl_covariance_dim(cov.get());
  for (int g = 0; g < fmgl_covariance_count(cov.get()); ++g) {
    Table t{p, p, std::vector<double>(static_cast<std::size_t>(p) * static_cast<std::size_t>(p))};
    check(fmgl_covariance_get(cov.get(), g, t.values.data()));  // symmetric: layout-free
    const std::string name = "cov_" + std::to_string(g + 1) + ".csv";
    write_csv((dir / name).string(), t);
    outputs.push_back(name);
  }
  if (const fmgl_partition* part = fmgl_truth_partition(truth.get())) {
    json j = partition_json(part);
    j["schema_version"] = 1;
    write_text((dir / "partition.json").string(), j.dump(2) + "\n");
    outputs.push_back("partition.json");
  }
  json params = {{"kind", a.kind}, {"p", a.p}, {"k", a.k}, {"seed", a.seed},
                 {"sample_seed", sample_seed}, {"n", n}};
  if (a.kind == "block") {
    params["l"] = a.l;
    params["nnz_factor"] = a.nnz_factor;
  } else {
    params["n_edges"] = a.n_edges;
    params["n_flips"] = a.n_flips;
  }
  outputs.push_back("manifest.json");
  write_text((dir / "manifest.json").string(),
             manifest("generate", argv, {}, params, outputs).dump(2) + "\n");
  return kOk;
}

// ---- screen ----

struct ScreenArgs {
  Inputs in;
  std::optional<double> lambda1;
  double lambda2 = 0.0;
  std::vector<double> grid;
  std::string out;
};

int run_screen(const ScreenArgs& a) {
  if (!a.lambda1 && a.grid.empty())
    throw CliError(kParameter, "screen: give --lambda1 or --lambda1-grid");
  auto cov = load_covariances(a.in);
  auto one = [&](double l1) {
    fmgl_partition* raw = nullptr;
    check(fmgl_screen(cov.get(), l1, a.lambda2, &raw));
    Handle<fmgl_partition> part(raw);
    json j = partition_json(part.get());
    j["lambda1"] = l1;
    return j;
  };
  json doc;
  doc["schema_version"] = 1;
  doc["lambda2"] = a.lambda2;
  doc["p"] = fmgl_covariance_dim(cov.get());
  doc["k"] = fmgl_covariance_count(cov.get());
  if (!a.grid.empty()) {
    json sweep = json::array();
    for (double l1 : a.grid) {
      json j = one(l1);
      j.erase("blocks");
      sweep.push_back(std::move(j));
    }
    doc["sweep"] = std::move(sweep);
  } else {
    doc.update(one(*a.lambda1));
  }
  emit(doc, a.out);
  return kOk;
}

// ---- solve ----

struct SolveArgs {
  Inputs in;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  bool screen = false;
  std::string solver = "fmgl";
  double tol_outer = 1e-5;
  double tol_inner = 1e-6;
  int max_newton_iters = 100;
  int threads = 0;
  std::optional<double> target_objective;
  double rho = 1.0;
  int admm_max_iters = 2000;
  std::string out;
};

int run_solve(const SolveArgs& a, const std::vector<std::string>& argv) {
  auto cov = load_covariances(a.in);
  const int threads = resolve_threads(a.threads);

  fmgl_precision* theta_raw = nullptr;
  fmgl_report* report_raw = nullptr;
  fmgl_status st;
  if (a.solver == "admm") {
    fmgl_admm_config c = fmgl_admm_config_default();
    c.rho = a.rho;
    c.max_iters = a.admm_max_iters;
    if (a.target_objective) {
      c.has_target_objective = 1;
      c.target_objective = *a.target_objective;
    }
    st = fmgl_solve_admm(cov.get(), a.lambda1, a.lambda2, &c, &theta_raw, &report_raw);
  } else {
    fmgl_solver_config c = fmgl_solver_config_default();
    c.outer_tol = a.tol_outer;
    c.inner_tol = a.tol_inner;
    c.max_newton_iters = a.max_newton_iters;
    c.use_screening = a.screen ? 1 : 0;
    c.threads = threads;
    st = fmgl_solve(cov.get(), a.lambda1, a.lambda2, &c, &theta_raw, &report_raw);
  }
  const std::string message = st == FMGL_OK ? "" : fmgl_last_error();
  Handle<fmgl_precision> theta(theta_raw);
  Handle<fmgl_report> report(report_raw);
  if (st != FMGL_OK && !report) throw CliError(exit_code_of(st), message);

  const fs::path dir(a.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError(kData, "cannot create " + a.out + ": " + ec.message());

  std::vector<std::string> outputs;
  if (theta) outputs = write_precision_dir(theta.get(), dir, "theta_");
  write_text((dir / "report.json").string(), std::string(fmgl_report_json(report.get())) + "\n");
  outputs.push_back("report.json");

  json params = {{"lambda1", a.lambda1},     {"lambda2", a.lambda2},
                 {"solver", a.solver},       {"screen", a.screen},
                 {"tol_outer", a.tol_outer}, {"tol_inner", a.tol_inner},
                 {"max_newton_iters", a.max_newton_iters},
                 {"threads", threads},       {"samples", a.in.samples},
                 {"center", a.in.center}};
  if (a.solver == "admm") {
    params["rho"] = a.rho;
    params["admm_max_iters"] = a.admm_max_iters;
    if (a.target_objective) params["target_objective"] = *a.target_objective;
  }
  outputs.push_back("manifest.json");
  std::vector<std::string> inputs;
  for (const auto& f : a.in.files) inputs.push_back(fs::absolute(f).string());
  write_text((dir / "manifest.json").string(),
             manifest("solve", argv, inputs, params, outputs).dump(2) + "\n");
  if (st != FMGL_OK) throw CliError(exit_code_of(st), message);
  return kOk;
}

// ---- eval ----

struct EvalArgs {
  std::string metric;
  std::vector<std::string> solutions;
  std::string truth;
  std::string other;
  Inputs in;
  std::optional<double> lambda1;
  double lambda2 = 0.0;
  double threshold = 0.85;
  double zero_tol = 1e-8;
  std::string out;
};

int run_eval(const EvalArgs& a) {
  json doc;
  doc["schema_version"] = 1;
  doc["metric"] = a.metric;
  doc["zero_tol"] = a.zero_tol;
  if (a.metric == "accuracy") {
    if (a.solutions.size() != 1 || a.truth.empty())
      throw CliError(kParameter, "accuracy: give one --solution and --truth");
    auto est = load_precision_dir(a.solutions.front());
    auto truth_theta = load_precision_dir(a.truth);
    fmgl_truth* raw = nullptr;
    check(fmgl_truth_create(truth_theta.get(), &raw));
    Handle<fmgl_truth> truth(raw);
    double acc = 0.0;
    check(fmgl_edge_accuracy(est.get(), truth.get(), a.zero_tol, &acc));
    doc["accuracy"] = acc;
    doc["true_edges"] = fmgl_precision_edges(truth_theta.get(), 0.0);
    doc["estimated_edges"] = fmgl_precision_edges(est.get(), a.zero_tol);
  } else if (a.metric == "stable") {
    if (a.solutions.empty()) throw CliError(kParameter, "stable: give at least one --solution");
    std::vector<Handle<fmgl_precision>> sets;
    std::vector<const fmgl_precision*> ptrs;
    for (const auto& d : a.solutions) {
      sets.push_back(load_precision_dir(d));
      ptrs.push_back(sets.back().get());
    }
    std::size_t n = 0;
    check(fmgl_stable_edges(ptrs.data(), ptrs.size(), a.threshold, a.zero_tol, nullptr, 0, &n));
    std::vector<int> triples(3 * n);
    check(fmgl_stable_edges(ptrs.data(), ptrs.size(), a.threshold, a.zero_tol, triples.data(), n, &n));
    const int k = fmgl_precision_count(ptrs.front());
    std::vector<json> per_graph(static_cast<std::size_t>(k), json::array());
    for (std::size_t e = 0; e < n; ++e)
      per_graph[static_cast<std::size_t>(triples[3 * e])].push_back({triples[3 * e + 1] + 1, triples[3 * e + 2] + 1});
    json counts = json::array();
    for (const auto& g : per_graph) counts.push_back(g.size());
    doc["threshold"] = a.threshold;
    doc["replications"] = a.solutions.size();
    doc["stable_edges"] = per_graph;
    doc["counts"] = counts;
  } else {
    if (a.solutions.size() != 1 || a.other.empty())
      throw CliError(kParameter, "diff: give one --solution and --other");
    auto x = load_precision_dir(a.solutions.front());
    auto y = load_precision_dir(a.other);
    if (fmgl_precision_dim(x.get()) != fmgl_precision_dim(y.get()) ||
        fmgl_precision_count(x.get()) != fmgl_precision_count(y.get()))
      throw CliError(kData, "diff: solutions differ in shape");
    double gap = 0.0;
    for (int k = 0; k < fmgl_precision_count(x.get()); ++k) {
      const auto mx = matrix_of(x.get(), k);
      const auto my = matrix_of(y.get(), k);
      for (std::size_t i = 0; i < mx.size(); ++i) gap = std::max(gap, std::abs(mx[i] - my[i]));
    }
    doc["max_entry_gap"] = gap;
    if (!a.in.files.empty()) {
      if (!a.lambda1) throw CliError(kParameter, "diff: objective gap needs --lambda1");
      auto cov = load_covariances(a.in);
      double fx = 0.0, fy = 0.0;
      check(fmgl_objective(x.get(), cov.get(), *a.lambda1, a.lambda2, &fx));
      check(fmgl_objective(y.get(), cov.get(), *a.lambda1, a.lambda2, &fy));
      doc["objective"] = fx;
      doc["objective_other"] = fy;
      doc["objective_gap"] = std::abs(fx - fy);
    }
  }
  emit(doc, a.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Fused multiple graphical lasso: generate, screen, solve, evaluate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fmgl_version()));

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate ground truth and sample covariances");
  g->add_option("--kind", gen.kind)->required()->check(CLI::IsMember({"block", "drift"}));
  g->add_option("--p", gen.p, "Number of features")->capture_default_str();
  g->add_option("--k", gen.k, "Number of graphs")->capture_default_str();
  g->add_option("--l", gen.l, "Number of blocks (block model)")->capture_default_str();
  g->add_option("--nnz-factor", gen.nnz_factor, "Nonzeros per block = factor * p / L")->capture_default_str();
  g->add_option("--n-edges", gen.n_edges, "Edges in the first graph (drift model)")->capture_default_str();
  g->add_option("--n-flips", gen.n_flips, "Edges added and deleted per step (drift model)")->capture_default_str();
  g->add_option("--n", gen.n, "Samples per graph (default 5p for block, 100 for drift)");
  g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  g->add_option("--sample-seed", gen.sample_seed, "Sampling seed (default seed + 1)");
  g->add_option("--out", gen.out, "Output directory")->required();

  ScreenArgs scr;
  auto* s = app.add_subcommand("screen", "Report the block structure implied by the screening rule");
  add_input_options(s, scr.in);
  s->add_option("--lambda1", scr.lambda1);
  s->add_option("--lambda2", scr.lambda2)->required();
  s->add_option("--lambda1-grid", scr.grid, "Sweep: one histogram per value")->delimiter(',');
  s->add_option("--out", scr.out, "Output JSON file (default stdout)");

  SolveArgs sol;
  auto* v = app.add_subcommand("solve", "Estimate the precision matrices");
  add_input_options(v, sol.in);
  v->add_option("--lambda1", sol.lambda1)->required();
  v->add_option("--lambda2", sol.lambda2, "0 selects independent estimation")->required();
  v->add_flag("--screen,!--no-screen", sol.screen, "Split into blocks before solving");
  v->add_option("--solver", sol.solver)->check(CLI::IsMember({"fmgl", "admm"}))->capture_default_str();
  v->add_option("--tol-outer", sol.tol_outer)->capture_default_str();
  v->add_option("--tol-inner", sol.tol_inner)->capture_default_str();
  v->add_option("--max-newton-iters", sol.max_newton_iters)->capture_default_str();
  v->add_option("--threads", sol.threads, "Concurrent block solves (fallback: FMGL_THREADS)");
  v->add_option("--target-objective", sol.target_objective, "ADMM stops once F(Z) reaches this");
  v->add_option("--rho", sol.rho, "ADMM penalty")->capture_default_str();
  v->add_option("--admm-max-iters", sol.admm_max_iters)->capture_default_str();
  v->add_option("--out", sol.out, "Output directory")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Compare solutions with ground truth or each other");
  e->add_option("--metric", ev.metric)->required()->check(CLI::IsMember({"accuracy", "stable", "diff"}));
  e->add_option("--solution", ev.solutions, "Directory with theta_k.mtx (repeat for stable)")->required();
  e->add_option("--truth", ev.truth, "Directory with truth_k.mtx");
  e->add_option("--other", ev.other, "Second solution directory (diff)");
  e->add_option("--cov", ev.in.files, "Covariances for the objective gap (diff)");
  e->add_flag("--samples", ev.in.samples);
  e->add_flag("--center", ev.in.center);
  e->add_option("--lambda1", ev.lambda1);
  e->add_option("--lambda2", ev.lambda2);
  e->add_option("--threshold", ev.threshold)->capture_default_str();
  e->add_option("--zero-tol", ev.zero_tol)->capture_default_str();
  e->add_option("--out", ev.out, "Output JSON file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kParameter;
  }

  try {
    if (*g) return run_generate(gen, args);
    if (*s) return run_screen(scr);
    if (*v) return run_solve(sol, args);
    return run_eval(ev);
  } catch (const CliError& err) {
    std::cerr << "fmgl: " << err.what() << '\n';
    return err.code;
  } catch (const std::exception& err) {
    std::cerr << "fmgl: " << err.what() << '\n';
    return kInternal;
  }
}
