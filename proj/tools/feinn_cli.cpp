#include <iostream>

#include <CLI11.hpp>

#include "feinn/cli.hpp"

int main(int argc, char **argv)
{
  CLI::App app{"h-adaptive finite element interpolated neural networks for 2D Poisson problems"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  long long seed = -1;
  std::vector<std::string> overrides;

  auto *run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config_path, "config file (key = value lines)")->required();
  run->add_option("--out", out_dir, "output directory (overrides `out`)");
  run->add_option("--seed", seed, "single seed (overrides `seeds`)");
  run->add_option("--override", overrides, "key=value, may be repeated");

  std::string mesh_path = "mesh.txt";
  auto *exp = app.add_subcommand("export", "write the initial mesh of the configured problem");
  exp->add_option("config", config_path, "config file")->required();
  exp->add_option("--mesh", mesh_path, "output path for the mesh");
  exp->add_option("--override", overrides, "key=value, may be repeated");

  CLI11_PARSE(app, argc, argv);

  try
  {
    feinn::RunConfig cfg = feinn::load_config(config_path);
    for (const auto &o : overrides)
      feinn::apply_override(cfg, o);
    if (!out_dir.empty())
      cfg.out = out_dir;
    if (seed >= 0)
      cfg.seeds = {static_cast<std::uint64_t>(seed)};
    if (*run)
      return feinn::run(cfg, std::cout);
    feinn::export_mesh(cfg, mesh_path);
    return 0;
  }
  catch (const feinn::InvalidInput &e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  catch (const std::exception &e)
  {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
