// Acceptance checks. Each invocation evaluates one criterion and prints a
// single `criterion N: PASS|FAIL|SKIP  detail` line.
//
// Criteria 4-9 share one set of expensive runs (the campaign). `--campaign`
// executes them and writes their metrics to a cache file; the criteria read
// the cache when it exists and run the campaign in-process otherwise.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "feinn/adapt.hpp"
#include "feinn/report.hpp"

using namespace feinn;

namespace
{

struct Outcome
{
  enum Status
  {
    pass,
    fail,
    skip
  } status;
  std::string detail;
};

Outcome check(bool ok, std::string detail) { return {ok ? Outcome::pass : Outcome::fail, std::move(detail)}; }

std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// Mesh with two refinement levels present: `levels` uniform, then one leaf refined.
std::shared_ptr<const ForestMesh> two_level_mesh(const Problem &p, int levels)
{
  auto m = refine_uniform(new_forest(p.coarse), levels);
  const std::vector<int> r = {m.num_leaves() / 3};
  return std::make_shared<const ForestMesh>(adapt(m, r, {}));
}

/// Balance check by geometry alone: leaves sharing an edge segment differ by at most one level.
bool balanced_by_geometry(const ForestMesh &m)
{
  for (int i = 0; i < m.num_leaves(); ++i)
    for (int j = i + 1; j < m.num_leaves(); ++j)
    {
      const Leaf &a = m.leaf(i), &b = m.leaf(j);
      if (std::abs(a.key.level - b.key.level) <= 1)
        continue;
      const double ox = std::min(a.x0 + a.hx, b.x0 + b.hx) - std::max(a.x0, b.x0);
      const double oy = std::min(a.y0 + a.hy, b.y0 + b.hy) - std::max(a.y0, b.y0);
      const double tol = 1e-12;
      if ((std::abs(ox) < tol && oy > tol) || (std::abs(oy) < tol && ox > tol))
        return false;
    }
  return true;
}

/// Every leaf whose closure contains the origin sits at the mesh's maximum level.
bool corner_at_max_level(const ForestMesh &m)
{
  int touching = 0;
  for (const Leaf &l : m.leaves())
  {
    const bool touches = l.x0 <= 0 && l.x0 + l.hx >= 0 && l.y0 <= 0 && l.y0 + l.hy >= 0;
    if (!touches)
      continue;
    ++touching;
    if (l.key.level != m.max_level())
      return false;
  }
  return touching > 0;
}

// ---------------------------------------------------------------------------
// Campaign

constexpr int kRefinePercent = 15;
constexpr int kCoarsenPercent = 1;
constexpr int kCampaignSteps = 5;
constexpr int kCampaignIters = 1500;
constexpr int kCampaignMemory = 100;
constexpr int kNormStudyIters = 300;
const std::vector<std::uint64_t> kSeeds = {1, 2, 3};

struct RunSummary
{
  std::string label;
  bool corner_at_max = false;
  int max_level = 0;
  std::vector<int> dofs;
  std::vector<double> h1;
};

struct Campaign
{
  std::vector<RunSummary> runs;
  std::vector<double> c7_unpreconditioned, c7_preconditioned;
  int adapts = 0, refine_mismatch = 0, unbalanced = 0;
  int functions = 0;
  double max_defect = 0.0;

  const RunSummary &run(const std::string &label) const
  {
    for (const auto &r : runs)
      if (r.label == label)
        return r;
    throw Error("campaign has no run '" + label + "'");
  }
};

AdaptConfig campaign_config(Campaign &c)
{
  AdaptConfig a;
  a.delta_r = kRefinePercent / 100.0;
  a.delta_c = kCoarsenPercent / 100.0;
  a.max_steps = kCampaignSteps;
  a.order = 2;
  a.on_marking = [&c](const ForestMesh &before, const Marking &m, const ForestMesh &after) {
    ++c.adapts;
    const int n = before.num_leaves();
    const int oracle = (kRefinePercent * n + 99) / 100;
    if (static_cast<int>(m.refine.size()) != oracle)
      ++c.refine_mismatch;
    if (!balanced_by_geometry(after))
      ++c.unbalanced;
  };
  a.on_solution = [&c](int, const FEFunction &f) {
    ++c.functions;
    c.max_defect = std::max(c.max_defect, continuity_defect(f));
  };
  return a;
}

RunSummary summarize(const std::string &label, const AdaptHistory &h, const ForestMesh &final_mesh)
{
  RunSummary s;
  s.label = label;
  s.corner_at_max = corner_at_max_level(final_mesh);
  s.max_level = final_mesh.max_level();
  for (const auto &r : h.steps)
  {
    s.dofs.push_back(r.dofs);
    s.h1.push_back(r.feinn_h1);
  }
  return s;
}

Campaign run_campaign(std::ostream &log)
{
  Campaign c;
  const Problem fichera = fichera_lshape();
  const auto initial = fichera.initial_mesh(2);

  // Criterion 4: uniform and adaptive Galerkin FEM.
  {
    const FemResult u = uniform_fem(fichera, 2, 2, 6);
    for (const auto &f : u.solutions)
    {
      ++c.functions;
      c.max_defect = std::max(c.max_defect, continuity_defect(f));
    }
    c.runs.push_back(summarize("fem_uniform", u.history, *u.mesh));
    AdaptConfig a = campaign_config(c);
    a.indicator = IndicatorKind::kelly;
    const FemResult r = adaptive_fem(fichera, a, initial);
    c.runs.push_back(summarize("fem_adaptive", r.history, *r.mesh));
    log << "campaign: fem done\n";
  }

  // Criteria 5 and 6: FEINN with the network and Kelly indicators, trained on
  // the preconditioned W12 loss. The unpreconditioned l1 runs are reported
  // alongside but do not decide criterion 5.
  struct Variant
  {
    std::string name;
    IndicatorKind indicator;
    LossConfig loss;
  };
  const std::vector<Variant> variants = {
      {"network", IndicatorKind::network, {LossMode::preconditioned, NormKind::W12}},
      {"kelly", IndicatorKind::kelly, {LossMode::preconditioned, NormKind::W12}},
      {"network_l1", IndicatorKind::network, {LossMode::discrete_l1, NormKind::W11}}};
  for (const auto &v : variants)
    for (auto seed : kSeeds)
    {
      AdaptConfig a = campaign_config(c);
      a.indicator = v.indicator;
      a.loss = v.loss;
      a.fixed_iters = kCampaignIters;
      a.optimizer.memory = kCampaignMemory;
      const FeinnResult r = adaptive_feinn(fichera, mlp_new(fichera.arch, seed), a, initial);
      const std::string label = "feinn_" + v.name + "_" + std::to_string(seed);
      c.runs.push_back(summarize(label, r.history, *r.mesh));
      log << "campaign: " << label << " final e_H1 " << r.history.steps.back().feinn_h1 << '\n';
    }

  // Criterion 7: preconditioned W11 against unpreconditioned training on a fixed mesh.
  {
    const Problem arc = arc_wavefront();
    const auto mesh = arc.initial_mesh();
    for (bool pre : {false, true})
    {
      const LossConfig loss{pre ? LossMode::preconditioned : LossMode::discrete_l1, NormKind::W11};
      const FeinnSetup setup = make_setup(mesh, 2, arc.f, arc.u, loss);
      Mlp net = mlp_new(arc.arch, 1);
      Mlp probe = net;
      std::vector<double> &trace = pre ? c.c7_preconditioned : c.c7_unpreconditioned;
      auto record = [&](int it, const Vector &theta) {
        probe.unflatten(theta);
        const FEFunction f = interpolated_network(probe, setup);
        trace.push_back(error_norms(f, arc.exact()).h1);
        if (it % 30 == 0)
        {
          ++c.functions;
          c.max_defect = std::max(c.max_defect, continuity_defect(f));
        }
      };
      record(0, net.flatten());
      LbfgsOptions opts;
      opts.max_iters = kNormStudyIters;
      opts.on_iteration = [&](int it, const Vector &theta, double, double) { record(it, theta); };
      train(net, setup, opts);
      log << "campaign: arc " << (pre ? "preconditioned" : "unpreconditioned") << " final e_H1 "
          << trace.back() << '\n';
    }
  }
  return c;
}

void write_vector(std::ostream &os, const std::string &key, const std::vector<double> &v)
{
  os << key << ' ' << v.size();
  for (double x : v)
    os << ' ' << x;
  os << '\n';
}

void save_campaign(const std::string &path, const Campaign &c)
{
  std::ofstream os(path);
  os.precision(17);
  os << "feinn-campaign 1\n";
  os << "marking " << c.adapts << ' ' << c.refine_mismatch << ' ' << c.unbalanced << '\n';
  os << "continuity " << c.functions << ' ' << c.max_defect << '\n';
  write_vector(os, "c7_unpreconditioned", c.c7_unpreconditioned);
  write_vector(os, "c7_preconditioned", c.c7_preconditioned);
  for (const auto &r : c.runs)
  {
    os << "run " << r.label << ' ' << r.corner_at_max << ' ' << r.max_level << ' ' << r.dofs.size();
    for (std::size_t i = 0; i < r.dofs.size(); ++i)
      os << ' ' << r.dofs[i] << ' ' << r.h1[i];
    os << '\n';
  }
  if (!os)
    throw Error("cannot write " + path);
}

bool load_campaign(const std::string &path, Campaign &c)
{
  std::ifstream is(path);
  std::string line;
  if (!std::getline(is, line) || line != "feinn-campaign 1")
    return false;
  auto read_vector = [](std::istream &ls, std::vector<double> &v) {
    std::size_t n;
    ls >> n;
    v.resize(n);
    for (auto &x : v)
      ls >> x;
  };
  while (std::getline(is, line))
  {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "marking")
      ls >> c.adapts >> c.refine_mismatch >> c.unbalanced;
    else if (key == "continuity")
      ls >> c.functions >> c.max_defect;
    else if (key == "c7_unpreconditioned")
      read_vector(ls, c.c7_unpreconditioned);
    else if (key == "c7_preconditioned")
      read_vector(ls, c.c7_preconditioned);
    else if (key == "run")
    {
      RunSummary r;
      std::size_t n;
      ls >> r.label >> r.corner_at_max >> r.max_level >> n;
      r.dofs.resize(n);
      r.h1.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        ls >> r.dofs[i] >> r.h1[i];
      c.runs.push_back(r);
    }
    if (!ls)
      return false;
  }
  return true;
}

const Campaign &campaign(const std::string &path)
{
  static Campaign c;
  static bool ready = false;
  if (!ready)
  {
    if (!load_campaign(path, c))
    {
      std::clog << "no campaign cache at " << path << ", running it now\n";
      c = run_campaign(std::clog);
      save_campaign(path, c);
    }
    ready = true;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Criteria

Outcome criterion_1()
{
  const Problem arc = arc_wavefront();
  const auto mesh = two_level_mesh(arc, 2);
  std::mt19937 rng(2024);
  double worst = 0;
  int skipped = 0;
  for (const LossConfig loss : {LossConfig{LossMode::discrete_l1, NormKind::W11},
                                LossConfig{LossMode::preconditioned, NormKind::W11},
                                LossConfig{LossMode::preconditioned, NormKind::W12}})
  {
    const FeinnSetup setup = make_setup(mesh, 2, arc.f, arc.u, loss);
    Mlp net = mlp_new(arc.arch, 7);
    Vector grad;
    network_loss(net, setup, &grad);
    const Vector theta = net.flatten();
    std::uniform_int_distribution<int> pick(0, static_cast<int>(theta.size()) - 1);
    const double h = 1e-5;
    for (int done = 0; done < 20;)
    {
      const int i = pick(rng);
      Vector tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      if (loss.mode == LossMode::discrete_l1)
      {
        // The l1 loss is smooth only while no residual entry changes sign.
        net.unflatten(tp);
        const Vector rp = spmv(false, setup.sys->A, dof_vector(net, *setup.trial)) - setup.sys->rhs;
        net.unflatten(tm);
        const Vector rm = spmv(false, setup.sys->A, dof_vector(net, *setup.trial)) - setup.sys->rhs;
        if ((rp.array() * rm.array() <= 0).any())
        {
          ++skipped;
          continue;
        }
      }
      net.unflatten(tp);
      const double fp = network_loss(net, setup, nullptr);
      net.unflatten(tm);
      const double fm = network_loss(net, setup, nullptr);
      const double fd = (fp - fm) / (2 * h);
      const double rel = std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), 1e-300});
      worst = std::max(worst, rel);
      ++done;
    }
  }
  return check(worst <= 1e-5, "max relative error " + fmt(worst) + " over 3x20 components (" +
                                  std::to_string(skipped) + " sign-change draws redrawn)");
}

Outcome criterion_2()
{
  double worst_discrete = 0, worst_pre = 0;
  for (const Problem &p : {poly_smoke(2), arc_wavefront()})
    for (int k : {1, 2})
    {
      const auto mesh = two_level_mesh(p, p.initial_refinement);
      const FEFunction pg = fem_solve(p, mesh, k, true);
      for (NormKind n : {NormKind::L1, NormKind::L2, NormKind::W11, NormKind::W12})
      {
        const FeinnSetup s = make_setup(mesh, k, p.f, p.u, {LossMode::preconditioned, n});
        const Vector u = pg.free_dofs();
        worst_pre = std::max(worst_pre, s.loss->evaluate(u, nullptr));
        if (n == NormKind::L1)
        {
          const DiscreteL1Loss d(s.sys);
          worst_discrete = std::max(worst_discrete, d.evaluate(u, nullptr) / s.sys->rhs.lpNorm<1>());
        }
      }
    }
  return check(worst_discrete <= 1e-10 && worst_pre <= 1e-8,
               "discrete loss / |f|_1 " + fmt(worst_discrete) + ", preconditioned loss " + fmt(worst_pre));
}

Outcome criterion_3()
{
  std::string detail;
  bool ok = true;
  for (int k : {1, 2, 4})
  {
    const FemResult r = uniform_fem(poly_sine(k), k, 2, 5);
    std::vector<double> h, e;
    for (std::size_t i = 0; i < r.history.steps.size(); ++i)
    {
      h.push_back(std::ldexp(1.0, -static_cast<int>(i) - 2));
      e.push_back(r.history.steps[i].feinn_h1);
    }
    const double slope = loglog_slope(h, e);
    ok = ok && std::abs(slope - k) <= 0.1 * k;
    detail += "k=" + std::to_string(k) + " slope " + fmt(slope) + "; ";
  }
  return check(ok, detail);
}

Outcome criterion_4(const Campaign &c)
{
  const RunSummary &u = c.run("fem_uniform"), &a = c.run("fem_adaptive");
  std::vector<double> ud(u.dofs.begin(), u.dofs.end());
  const double slope = loglog_slope(ud, u.h1);
  // Uniform error at the adaptive run's final dof count, interpolated in log-log.
  const double n = a.dofs.back();
  std::size_t j = 1;
  while (j + 1 < ud.size() && ud[j] < n)
    ++j;
  const double t = std::log(n / ud[j - 1]) / std::log(ud[j] / ud[j - 1]);
  const double matched = std::exp((1 - t) * std::log(u.h1[j - 1]) + t * std::log(u.h1[j]));
  const double ratio = matched / a.h1.back();
  const bool ok = ratio >= 2 && std::abs(slope + 1.0 / 3) <= 0.25 / 3;
  return check(ok, "uniform slope " + fmt(slope) + ", uniform/adaptive e_H1 at " +
                       std::to_string(a.dofs.back()) + " dofs = " + fmt(ratio));
}

Outcome criterion_5(const Campaign &c)
{
  const RunSummary &fem = c.run("fem_adaptive");
  auto ratio = [&](const std::string &prefix, int step) {
    std::vector<double> e;
    for (auto seed : kSeeds)
      e.push_back(c.run(prefix + std::to_string(seed)).h1[step]);
    return percentile(e, 0.5) / fem.h1[step];
  };
  bool ok = true;
  std::string detail, l1;
  for (int step = 2; step <= kCampaignSteps; ++step)
  {
    const double r = ratio("feinn_network_", step);
    ok = ok && r <= 2 && r >= 0.5;
    detail += " " + fmt(r);
    l1 += " " + fmt(ratio("feinn_network_l1_", step));
  }
  return check(ok, "median FEINN / adaptive FEM e_H1, steps 2-" + std::to_string(kCampaignSteps) + ":" +
                       detail + " (unpreconditioned l1, not gating:" + l1 + ")");
}

Outcome criterion_6(const Campaign &c)
{
  int good = 0, total = 0;
  for (const char *ind : {"network", "kelly"})
    for (auto seed : kSeeds)
    {
      ++total;
      good += c.run(std::string("feinn_") + ind + "_" + std::to_string(seed)).corner_at_max;
    }
  return check(good == total, std::to_string(good) + "/" + std::to_string(total) +
                                  " final meshes have the corner leaves at the maximum level");
}

Outcome criterion_7(const Campaign &c)
{
  const auto &pre = c.c7_preconditioned, &un = c.c7_unpreconditioned;
  if (pre.size() <= 150 || un.empty())
    return check(false, "training stopped early: " + std::to_string(pre.size()) + " preconditioned records");
  const double best_un = *std::min_element(un.begin(), un.end());
  return check(pre[150] < best_un, "preconditioned e_H1 at 150: " + fmt(pre[150]) +
                                       ", best unpreconditioned up to " + std::to_string(un.size() - 1) +
                                       ": " + fmt(best_un));
}

Outcome criterion_8(const Campaign &c)
{
  // The campaign's adaptive runs plus a sweep of mark() over sizes and ratios.
  int mismatch = c.refine_mismatch, checked = c.adapts;
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int n = 1; n <= 3000; n += 13)
    for (int pct = 1; pct < 50; pct += 3)
    {
      std::vector<double> z(n);
      for (auto &v : z)
        v = u(rng);
      ++checked;
      if (static_cast<int>(mark(z, pct / 100.0, 0.01).refine.size()) != (pct * n + 99) / 100)
        ++mismatch;
    }
  return check(mismatch == 0 && c.unbalanced == 0 && c.adapts > 0,
               std::to_string(checked) + " markings, " + std::to_string(mismatch) + " count mismatches; " +
                   std::to_string(c.adapts) + " adapts, " + std::to_string(c.unbalanced) + " unbalanced");
}

Outcome criterion_9(const Campaign &c)
{
  return check(c.functions > 0 && c.max_defect < 1e-12,
               std::to_string(c.functions) + " FE functions, max defect " + fmt(c.max_defect));
}

Outcome criterion_10()
{
  double prev = INFINITY;
  bool monotone = true;
  std::string detail;
  for (double m : {10.0, 20.0, 40.0, 80.0})
  {
    const auto f = tanh_hat_emulation(m);
    double sup = 0;
    const int n = 40000;
    for (int i = 0; i <= n; ++i)
    {
      const double x = -1.0 + 2.0 * i / n;
      sup = std::max(sup, std::abs(f(x) - std::max(0.0, 1 - std::abs(x))));
    }
    monotone = monotone && sup < prev;
    prev = sup;
    detail += "m=" + fmt(m) + " " + fmt(sup) + "; ";
  }
  return check(monotone, "sup distance to the hat: " + detail);
}

Outcome criterion_11()
{
  const Problem p = arc_wavefront();
  const auto mesh = std::make_shared<const ForestMesh>(refine_uniform(new_forest(p.coarse), 2));
  const FeinnSetup s = make_setup(mesh, 1, p.f, p.u, {});
  if (s.trial->num_free() != 9)
    return check(false, "expected 9 free dofs, got " + std::to_string(s.trial->num_free()));

  // One hidden neuron per free node: a steep ridge through the node along its own direction.
  Mlp net({2, 9, 1});
  for (int j = 0; j < 9; ++j)
  {
    const double phi = 0.35 * j + 0.1;
    const Point d(std::cos(phi), std::sin(phi));
    net.weight(0).row(j) = 3.0 * d.transpose();
    net.bias(0)[j] = -3.0 * d.dot(s.trial->dof_point(j));
  }
  const LastLayerReport hand = last_layer_solve(net, s);

  bool monotone = true;
  for (unsigned seed = 1; seed <= 10; ++seed)
    for (int k : {1, 2})
    {
      const FeinnSetup sk = make_setup(p.initial_mesh(), k, p.f, p.u, {});
      Mlp r = mlp_new(p.arch, seed);
      const LastLayerReport rep = last_layer_solve(r, sk);
      monotone = monotone && rep.residual_after <= rep.residual_before;
    }
  return check(hand.residual_after < 1e-8 && monotone,
               "hand-built residual " + fmt(hand.residual_after) + " (from " + fmt(hand.residual_before) +
                   "), random nets " + (monotone ? "never increased" : "increased") + " the residual");
}

Outcome criterion_12()
{
  const char *slow = std::getenv("FEINN_SLOW");
  if (!slow || std::string(slow) != "1")
    return {Outcome::skip, "set FEINN_SLOW=1 to run the full arc protocol"};
  const Problem arc = arc_wavefront();
  AdaptConfig a;
  a.order = 4;
  a.max_steps = 7;
  a.indicator = IndicatorKind::kelly;
  a.schedule = arc.schedule;
  a.on_mesh = [](int step, const ForestMesh &m) {
    std::clog << "arc step " << step << ": " << m.num_leaves() << " leaves\n";
  };
  const FeinnResult r = adaptive_feinn(arc, mlp_new(arc.arch, 1), a);
  const auto &last = r.history.steps.back();
  const bool ok = last.dofs >= 10000 && last.dofs <= 40000;
  return check(ok, "final mesh " + std::to_string(last.leaves) + " leaves, " + std::to_string(last.dofs) +
                       " free dofs, e_H1 " + fmt(last.feinn_h1));
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"acceptance checks"};
  int criterion = 0;
  bool run_only_campaign = false;
  std::string cache = "acceptance_campaign.txt";
  app.add_option("--criterion", criterion, "criterion number (1-12)")->check(CLI::Range(1, 12));
  app.add_flag("--campaign", run_only_campaign, "run the shared experiments and write the cache");
  app.add_option("--cache", cache, "campaign cache file");
  CLI11_PARSE(app, argc, argv);

  try
  {
    if (run_only_campaign)
    {
      save_campaign(cache, run_campaign(std::clog));
      std::cout << "campaign written to " << cache << '\n';
      return 0;
    }
    Outcome o{Outcome::fail, "no criterion given"};
    switch (criterion)
    {
    case 1: o = criterion_1(); break;
    case 2: o = criterion_2(); break;
    case 3: o = criterion_3(); break;
    case 4: o = criterion_4(campaign(cache)); break;
    case 5: o = criterion_5(campaign(cache)); break;
    case 6: o = criterion_6(campaign(cache)); break;
    case 7: o = criterion_7(campaign(cache)); break;
    case 8: o = criterion_8(campaign(cache)); break;
    case 9: o = criterion_9(campaign(cache)); break;
    case 10: o = criterion_10(); break;
    case 11: o = criterion_11(); break;
    case 12: o = criterion_12(); break;
    default: break;
    }
    static const char *names[] = {"PASS", "FAIL", "SKIP"};
    std::cout << "criterion " << criterion << ": " << names[o.status] << "  " << o.detail << std::endl;
    return o.status == Outcome::fail ? 1 : 0;
  }
  catch (const std::exception &e)
  {
    std::cout << "criterion " << criterion << ": FAIL  " << e.what() << std::endl;
    return 1;
  }
}
