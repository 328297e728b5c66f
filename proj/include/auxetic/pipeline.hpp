#pragma once

// Stage orchestration: every stage reads its upstream artifacts from the
// output directory, writes its own, and records a manifest.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "auxetic/ga_baseline.hpp"
#include "auxetic/inverse_design.hpp"
#include "auxetic/mechanics.hpp"
#include "auxetic/neural.hpp"
#include "auxetic/sampling.hpp"

namespace auxetic::pipeline {

struct Seeds {
  std::uint64_t pool = 1;
  std::uint64_t split = 2;
  std::uint64_t nn = 3;
  std::uint64_t inverse = 4;
  std::uint64_t ga = 5;
  std::uint64_t explain = 6;
};

struct PipelineConfig {
  Seeds seeds;
  sampling::DesignRanges ranges;
  std::size_t pool_size = 5000;
  std::size_t budget = 150;
  sampling::SplitSizes split;
  mechanics::MechanicsConfig mechanics;
  std::filesystem::path material_path;  // empty: linear material, E0 = 1000 kPa
  neural::ForwardHyper forward;
  inverse::InverseHyper inverse;
  inverse::InverseLossConfig single{1.0, 1.0, 0.0, 1};
  inverse::InverseLossConfig multi{1.0, 1.0, 0.5, 3};
  ga::GAConfig ga;
  std::size_t explain_background = 50;
  std::size_t explain_samples = 200;
  std::size_t sensitivity_grid = 100;
  std::filesystem::path output_dir = "out";
  std::size_t workers = 0;  // 0: one per hardware thread

  /// InvalidConfig on inconsistent settings or unresolvable paths.
  void validate() const;
};

/// Missing keys keep their defaults; unknown keys are rejected. Relative paths
/// resolve against base_dir.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const PipelineConfig& c);

/// Environment variable that replaces output_dir when set.
inline constexpr const char* kOutputRootEnv = "AUXETIC_OUTPUT_ROOT";

/// Artifact file names inside the output directory.
namespace files {
inline constexpr const char* kSample = "sample.json";
inline constexpr const char* kPoolCsv = "pool.csv";
inline constexpr const char* kDataset = "dataset.json";
inline constexpr const char* kDesignsCsv = "designs.csv";
inline constexpr const char* kCurvesCsv = "curves.csv";
inline constexpr const char* kForwardNu = "forward_nu.json";
inline constexpr const char* kForwardSigma = "forward_sigma.json";
inline constexpr const char* kForwardMetrics = "forward_metrics.json";
inline constexpr const char* kDesignSingle = "design_single.json";
inline constexpr const char* kDesignMulti = "design_multi.json";
inline constexpr const char* kProposals = "proposals.json";
inline constexpr const char* kGaResults = "ga_results.json";
inline constexpr const char* kExplainNu = "explain_nu.json";
inline constexpr const char* kExplainSigma = "explain_sigma.json";
inline constexpr const char* kComparisonNu = "comparison_nu.csv";
inline constexpr const char* kComparisonSigma = "comparison_sigma.csv";
inline constexpr const char* kTable1 = "table1.csv";
inline constexpr const char* kTable2 = "table2.csv";
inline constexpr const char* kR2Summary = "r2_summary.csv";
inline constexpr const char* kSummary = "summary.json";
}  // namespace files

struct ExternalDesignRequest {
  std::filesystem::path targets;  // PropertyCurves CSV
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> gamma;
  std::optional<std::size_t> n;
  std::optional<double> rescale_lambda;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, std::ostream* log = nullptr);

  const PipelineConfig& config() const noexcept { return cfg_; }
  std::filesystem::path path(const std::string& name) const { return cfg_.output_dir / name; }

  void sample();
  void label();
  void train_forward();
  void train_inverse();
  /// Proposals for every test target from the single and multi design models.
  void design();
  /// Proposal for an external target file; writes design_external.json.
  nlohmann::json design_external(const ExternalDesignRequest& req);
  void run_ga();
  void explain();
  void report();
  void all();

  mechanics::Material material() const;

 private:
  struct Stage;
  std::string read_artifact(const std::string& name) const;
  void write_artifact(Stage& st, const std::string& name, const std::string& contents) const;
  void finish(Stage& st) const;
  sampling::Dataset dataset() const;
  neural::ModelCheckpoint checkpoint(const std::string& name) const;
  void say(const std::string& line) const;

  PipelineConfig cfg_;
  std::ostream* log_;
};

}  // namespace auxetic::pipeline
