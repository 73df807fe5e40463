#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "feinn/adapt.hpp"

namespace feinn
{

/// Flat key = value run description. Every key is optional; see README for the list.
struct RunConfig
{
  std::string problem = "arc_wavefront";
  std::string mode = "feinn_adaptive";
  IndicatorKind indicator = IndicatorKind::kelly;
  int order = 4;
  LossConfig loss;
  double delta_r = 0.15;
  double delta_c = 0.01;
  int max_steps = 7;
  std::vector<int> arch;        // empty: problem default
  std::vector<std::uint64_t> seeds{1};
  std::vector<int> milestones;  // empty: problem default
  std::vector<int> iters;       // empty: problem default
  int fixed_iters = 0;
  int memory = 30;
  int initial_refinement = -1;  // negative: problem default
  int uniform_first = -1;       // negative: initial refinement
  int uniform_last = -1;        // negative: uniform_first
  int norm_study_iters = 300;
  int error_every = 10;
  int solution_density = 0;     // 0 disables solution export
  bool last_layer = false;
  std::string out = "out";
};

/// Sets one key; throws InvalidInput for unknown keys or malformed values.
void set_config_value(RunConfig &config, const std::string &key, const std::string &value);

/// Parses `key = value` lines; `#` starts a comment.
RunConfig parse_config(std::istream &is);
RunConfig load_config(const std::filesystem::path &path);

/// `key=value` override from the command line.
void apply_override(RunConfig &config, const std::string &assignment);

/// Cross-field checks; run() calls this before doing any work.
void validate(const RunConfig &config);

/// Runs the configured experiment and writes its artifacts under config.out.
int run(const RunConfig &config, std::ostream &log);

/// Writes the problem's initial mesh to `path`.
void export_mesh(const RunConfig &config, const std::filesystem::path &path);

}  // namespace feinn
