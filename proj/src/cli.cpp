#include "feinn/cli.hpp"

#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "feinn/report.hpp"

namespace feinn
{

namespace fs = std::filesystem;

namespace
{

std::string trim(const std::string &s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string &key, const std::string &v)
{
  std::size_t pos = 0;
  long long x = 0;
  try
  {
    x = std::stoll(v, &pos);
  }
  catch (const std::exception &)
  {
    pos = 0;
  }
  if (pos == 0 || pos != v.size())
    throw InvalidInput("config key '" + key + "': expected an integer, got '" + v + "'");
  return x;
}

double parse_double(const std::string &key, const std::string &v)
{
  std::size_t pos = 0;
  double x = 0;
  try
  {
    x = std::stod(v, &pos);
  }
  catch (const std::exception &)
  {
    pos = 0;
  }
  if (pos == 0 || pos != v.size())
    throw InvalidInput("config key '" + key + "': expected a number, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string &key, const std::string &v)
{
  if (v == "true" || v == "1" || v == "yes")
    return true;
  if (v == "false" || v == "0" || v == "no")
    return false;
  throw InvalidInput("config key '" + key + "': expected true or false, got '" + v + "'");
}

template <class T> std::vector<T> parse_list(const std::string &key, const std::string &v)
{
  std::vector<T> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');)
  {
    item = trim(item);
    if (item.empty())
      continue;
    const long long x = parse_int(key, item);
    if (x < 0)
      throw InvalidInput("config key '" + key + "': negative entry");
    out.push_back(static_cast<T>(x));
  }
  return out;
}

int to_int(const std::string &key, const std::string &v)
{
  return static_cast<int>(parse_int(key, v));
}

using Setter = std::function<void(RunConfig &, const std::string &, const std::string &)>;

const std::map<std::string, Setter> &setters()
{
  static const std::map<std::string, Setter> table = {
      {"problem", [](RunConfig &c, const std::string &, const std::string &v) { c.problem = v; }},
      {"mode", [](RunConfig &c, const std::string &, const std::string &v) { c.mode = v; }},
      {"indicator",
       [](RunConfig &c, const std::string &, const std::string &v) { c.indicator = parse_indicator(v); }},
      {"order", [](RunConfig &c, const std::string &k, const std::string &v) { c.order = to_int(k, v); }},
      {"loss",
       [](RunConfig &c, const std::string &, const std::string &v) { c.loss.mode = parse_loss_mode(v); }},
      {"norm", [](RunConfig &c, const std::string &, const std::string &v) { c.loss.norm = parse_norm(v); }},
      {"delta_r",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.delta_r = parse_double(k, v); }},
      {"delta_c",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.delta_c = parse_double(k, v); }},
      {"max_steps",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.max_steps = to_int(k, v); }},
      {"arch", [](RunConfig &c, const std::string &k, const std::string &v) { c.arch = parse_list<int>(k, v); }},
      {"seeds",
       [](RunConfig &c, const std::string &k, const std::string &v) {
         c.seeds = parse_list<std::uint64_t>(k, v);
       }},
      {"milestones",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.milestones = parse_list<int>(k, v); }},
      {"iters", [](RunConfig &c, const std::string &k, const std::string &v) { c.iters = parse_list<int>(k, v); }},
      {"fixed_iters",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.fixed_iters = to_int(k, v); }},
      {"memory", [](RunConfig &c, const std::string &k, const std::string &v) { c.memory = to_int(k, v); }},
      {"initial_refinement",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.initial_refinement = to_int(k, v); }},
      {"uniform_first",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.uniform_first = to_int(k, v); }},
      {"uniform_last",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.uniform_last = to_int(k, v); }},
      {"norm_study_iters",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.norm_study_iters = to_int(k, v); }},
      {"error_every",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.error_every = to_int(k, v); }},
      {"solution_density",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.solution_density = to_int(k, v); }},
      {"last_layer",
       [](RunConfig &c, const std::string &k, const std::string &v) { c.last_layer = parse_bool(k, v); }},
      {"out", [](RunConfig &c, const std::string &, const std::string &v) { c.out = v; }},
  };
  return table;
}

const std::vector<std::string> kModes = {"feinn_adaptive", "fem_adaptive", "fem_uniform", "norm_study",
                                         "seed_study"};

Problem make_problem(const RunConfig &c)
{
  Problem p = problem_by_name(c.problem, c.order);
  if (!c.arch.empty())
    p.arch = c.arch;
  if (!c.iters.empty())
    p.schedule = {c.milestones, c.iters};
  if (c.initial_refinement >= 0)
    p.initial_refinement = c.initial_refinement;
  return p;
}

AdaptConfig make_adapt_config(const RunConfig &c, const Problem &p)
{
  AdaptConfig a;
  a.delta_r = c.delta_r;
  a.delta_c = c.delta_c;
  a.max_steps = c.max_steps;
  a.indicator = c.indicator;
  a.order = c.order;
  a.loss = c.loss;
  a.schedule = p.schedule;
  a.fixed_iters = c.fixed_iters;
  a.optimizer.memory = c.memory;
  a.last_layer = c.last_layer;
  return a;
}

std::ofstream open_out(const fs::path &path)
{
  std::ofstream os(path);
  if (!os)
    throw Error("cannot write " + path.string());
  return os;
}

std::string step_name(const char *stem, int step, const char *ext)
{
  return std::string(stem) + "_step" + std::to_string(step) + ext;
}

AdaptHistory run_feinn(const RunConfig &c, const Problem &p, std::uint64_t seed, const fs::path &dir,
                       std::ostream &log)
{
  fs::create_directories(dir);
  AdaptConfig a = make_adapt_config(c, p);
  a.on_mesh = [&](int step, const ForestMesh &m) {
    auto os = open_out(dir / step_name("mesh", step, ".txt"));
    write_mesh(os, m);
  };
  a.on_train = [&](int step, const Mlp &, const TrainReport &rep) {
    auto os = open_out(dir / step_name("trace", step, ".csv"));
    write_trace_csv(os, rep);
    log << "seed " << seed << " step " << step << ": " << rep.iterations << " iterations, loss "
        << rep.loss_trace.back() << '\n';
  };
  if (c.solution_density > 0)
    a.on_solution = [&](int step, const FEFunction &f) {
      auto os = open_out(dir / step_name("solution", step, ".txt"));
      write_solution(os, f, c.solution_density);
    };
  FeinnResult res = adaptive_feinn(p, mlp_new(p.arch, seed), a);
  {
    auto os = open_out(dir / "history.csv");
    write_history_csv(os, res.history);
  }
  auto os = open_out(dir / "network.ckpt");
  save_checkpoint(os, res.net);
  return res.history;
}

void write_report_file(const fs::path &path, const std::vector<LabeledHistory> &h)
{
  auto os = open_out(path);
  write_report(os, h);
}

}  // namespace

void set_config_value(RunConfig &config, const std::string &key, const std::string &value)
{
  const auto it = setters().find(key);
  if (it == setters().end())
    throw InvalidInput("unknown config key '" + key + "'");
  it->second(config, key, value);
}

RunConfig parse_config(std::istream &is)
{
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line))
  {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidInput("config line " + std::to_string(lineno) + ": expected key = value");
    try
    {
      set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    catch (const InvalidInput &e)
    {
      throw InvalidInput("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

RunConfig load_config(const fs::path &path)
{
  std::ifstream is(path);
  if (!is)
    throw InvalidInput("cannot open config file " + path.string());
  return parse_config(is);
}

void apply_override(RunConfig &config, const std::string &assignment)
{
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw InvalidInput("override must look like key=value, got '" + assignment + "'");
  set_config_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void validate(const RunConfig &c)
{
  if (std::find(kModes.begin(), kModes.end(), c.mode) == kModes.end())
    throw InvalidInput("unknown mode '" + c.mode + "'");
  const auto names = problem_names();
  if (std::find(names.begin(), names.end(), c.problem) == names.end())
    throw InvalidInput("unknown problem '" + c.problem + "'");
  if (c.order < 1 || c.order > 8)
    throw InvalidInput("order must lie in [1, 8]");
  if (!(c.delta_r > 0 && c.delta_r < 1) || !(c.delta_c >= 0 && c.delta_c < 1) ||
      !(c.delta_r + c.delta_c < 1))
    throw InvalidInput("delta_r, delta_c must lie in (0,1) with delta_r + delta_c < 1");
  if (c.max_steps < 0)
    throw InvalidInput("max_steps must be non-negative");
  if (c.seeds.empty())
    throw InvalidInput("seeds must list at least one seed");
  if (!c.arch.empty() && (c.arch.size() < 2 || c.arch.front() != 2 || c.arch.back() != 1))
    throw InvalidInput("arch must start with 2 and end with 1");
  if (!c.iters.empty() && c.iters.size() != c.milestones.size() + 1)
    throw InvalidInput("iters needs exactly one more entry than milestones");
  if (c.iters.empty() && !c.milestones.empty())
    throw InvalidInput("milestones given without iters");
  if (c.memory < 1 || c.norm_study_iters < 1 || c.error_every < 1 || c.fixed_iters < 0)
    throw InvalidInput("memory, norm_study_iters and error_every must be positive");
  if (c.mode == "fem_adaptive" && c.indicator == IndicatorKind::network)
    throw InvalidInput("fem_adaptive needs indicator kelly or real");
  if (c.out.empty())
    throw InvalidInput("out must not be empty");
  if (c.solution_density < 0)
    throw InvalidInput("solution_density must be non-negative");
}

int run(const RunConfig &c, std::ostream &log)
{
  validate(c);
  const Problem p = make_problem(c);
  verify_problem(p);
  const fs::path out(c.out);
  fs::create_directories(out);

  if (c.mode == "feinn_adaptive")
  {
    const AdaptHistory h = run_feinn(c, p, c.seeds.front(), out, log);
    write_report_file(out / "report.txt", {{"feinn", h}});
  }
  else if (c.mode == "seed_study")
  {
    std::vector<AdaptHistory> runs;
    std::vector<LabeledHistory> labeled;
    for (auto seed : c.seeds)
    {
      runs.push_back(run_feinn(c, p, seed, out / ("seed_" + std::to_string(seed)), log));
      labeled.push_back({"seed_" + std::to_string(seed), runs.back()});
    }
    auto os = open_out(out / "aggregate.csv");
    write_seed_aggregate(os, runs);
    write_report_file(out / "report.txt", labeled);
  }
  else if (c.mode == "fem_adaptive")
  {
    AdaptConfig a = make_adapt_config(c, p);
    a.on_mesh = [&](int step, const ForestMesh &m) {
      auto os = open_out(out / step_name("mesh", step, ".txt"));
      write_mesh(os, m);
    };
    if (c.solution_density > 0)
      a.on_solution = [&](int step, const FEFunction &f) {
        auto os = open_out(out / step_name("solution", step, ".txt"));
        write_solution(os, f, c.solution_density);
      };
    const FemResult r = adaptive_fem(p, a);
    auto os = open_out(out / "history.csv");
    write_history_csv(os, r.history);
    write_report_file(out / "report.txt", {{"fem_adaptive", r.history}});
    log << "fem_adaptive: final mesh " << r.history.steps.back().leaves << " leaves, "
        << r.history.steps.back().dofs << " dofs\n";
  }
  else if (c.mode == "fem_uniform")
  {
    const int first = c.uniform_first >= 0 ? c.uniform_first : p.initial_refinement;
    const int last = c.uniform_last >= 0 ? c.uniform_last : first;
    const FemResult r = uniform_fem(p, c.order, first, last);
    auto os = open_out(out / "history.csv");
    write_history_csv(os, r.history);
    write_report_file(out / "report.txt", {{"fem_uniform", r.history}});
    log << "fem_uniform: " << r.history.steps.size() << " levels, final H1 error "
        << r.history.steps.back().feinn_h1 << '\n';
  }
  else if (c.mode == "norm_study")
  {
    const auto mesh = p.initial_mesh();
    const ExactSolution exact = p.exact();
    struct Variant
    {
      std::string name;
      LossConfig loss;
    };
    std::vector<Variant> variants = {{"unpreconditioned", {LossMode::discrete_l1, NormKind::L1}}};
    for (NormKind k : {NormKind::L1, NormKind::L2, NormKind::W11, NormKind::W12})
      variants.push_back({to_string(k), {LossMode::preconditioned, k}});
    for (const auto &v : variants)
    {
      const FeinnSetup setup = make_setup(mesh, c.order, p.f, p.u, v.loss);
      Mlp net = mlp_new(p.arch, c.seeds.front());
      auto err = open_out(out / ("errors_" + v.name + ".csv"));
      err << "iter,feinn_l2,feinn_h1\n";
      err.precision(17);
      Mlp probe = net;
      auto record = [&](int it, const Vector &theta) {
        probe.unflatten(theta);
        const ErrorNorms e = error_norms(interpolated_network(probe, setup), exact);
        err << it << ',' << e.l2 << ',' << e.h1 << '\n';
      };
      record(0, net.flatten());
      LbfgsOptions opts;
      opts.memory = c.memory;
      opts.max_iters = c.norm_study_iters;
      opts.on_iteration = [&](int it, const Vector &theta, double, double) {
        if (it % c.error_every == 0)
          record(it, theta);
      };
      const TrainReport rep = train(net, setup, opts);
      auto os = open_out(out / ("trace_" + v.name + ".csv"));
      write_trace_csv(os, rep);
      log << "norm_study " << v.name << ": loss " << rep.loss_trace.back() << '\n';
    }
  }
  return 0;
}

void export_mesh(const RunConfig &config, const fs::path &path)
{
  validate(config);
  const Problem p = make_problem(config);
  if (path.has_parent_path())
    fs::create_directories(path.parent_path());
  auto os = open_out(path);
  write_mesh(os, *p.initial_mesh());
}

}  // namespace feinn
