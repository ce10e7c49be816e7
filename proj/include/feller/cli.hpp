#pragma once

// Config-driven experiment runner behind the `feller` executable.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "feller/grid.hpp"
#include "feller/kernels.hpp"

namespace feller::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRefusal = 2;
inline constexpr int kExitVerification = 3;

struct FShape {
  std::string shape = "constant";  // constant | ramp | negative_bump
  double c = 0.0;                  // constant level, ramp plateau
  double width = 1.0;              // ramp length, bump width
  double center = 0.0;
  double depth = 0.0;
};

// constant: c; ramp: c * min(t / width, 1);
// negative_bump: -depth * exp(-((t - center) / width)^2 / 2).
GridFunction make_f(const FShape& shape, const Grid& grid);

struct BackgroundConfig {
  std::string type = "lebesgue";  // lebesgue | file
  double intensity = 1.0;
  std::filesystem::path path;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  double horizon = 5.0;
  double dt = 1e-3;
  std::size_t replications = 1;
  std::vector<double> eps;
  std::optional<double> a;
  std::optional<std::size_t> threads;
  std::optional<std::string> output_dir;

  std::vector<KernelSpec> kernels;  // one generation kernel, or one period
  std::optional<KernelSpec> rho;    // analysis kernel override
  BackgroundConfig background;
  FShape f;

  // [simulate]
  std::vector<double> simulate_t;
  bool write_points = true;
  // [riccati]
  std::vector<std::string> methods{"marching", "picard", "series"};
  double window = 0.5;
  double picard_tol = 1e-12;
  std::size_t n_terms = 60;
  double gap_tol = 1e-6;
  // [cumulants]
  std::size_t n_max = 4;
  std::vector<double> cumulant_t;
  bool moments = true;
  // [covariance]
  std::size_t stride = 10;
  double envelope_r_min = 0.1;
  double envelope_gap = 0.05;
  double envelope_c_max = 50.0;
  // [verify]
  std::vector<double> verify_t;  // default: those of 1, 2, 5 within the horizon
  double rel_tol = 0.05;
  double null_cut = 0.5;
  double null_threshold = 0.05;

  std::string source_text;  // raw file contents, hashed into the report
};

// Throws ValidationError on malformed or inconsistent input. Relative paths
// resolve against base_dir.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);
// 16 hex digits of FNV-1a over the config text and the effective seed.
std::string config_hash(const ExperimentConfig& cfg);

Grid make_grid(const ExperimentConfig& cfg);
GridMeasure make_background(const ExperimentConfig& cfg, const Grid& grid);

// [rho] if present, else the natural limit of the generation kernels, else
// the single generation kernel itself.
KernelSpec analysis_kernel(const ExperimentConfig& cfg);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::filesystem::path out_dir;
};

struct Verdict {
  std::string name;
  bool passed;
  double value;
  double tolerance;
  std::string detail;
};

struct Report {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json tables = nlohmann::json::object();
  std::vector<Verdict> verdicts;
  std::vector<std::string> warnings;
  std::vector<std::string> outputs;  // files written, relative to the output dir
  std::optional<std::string> refusal;
  std::vector<std::pair<std::string, double>> timings;  // stage, seconds
};

nlohmann::json to_json(const Report& report);
int exit_code(const Report& report);

Report cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opts);
Report cmd_riccati(const ExperimentConfig& cfg, const RunOptions& opts);
Report cmd_cumulants(const ExperimentConfig& cfg, const RunOptions& opts);
Report cmd_covariance(const ExperimentConfig& cfg, const RunOptions& opts);
Report cmd_verify_limit(const ExperimentConfig& cfg, const RunOptions& opts);

// Full command-line entry point; returns the process exit code.
int run(int argc, char** argv);

}  // namespace feller::cli
