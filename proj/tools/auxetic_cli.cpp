// Command-line driver for the pipeline stages.
//
// Exit codes: 0 success, 2 validation error, 3 stage failure. Failures print
// a one-line JSON object on stderr.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "auxetic/errors.hpp"
#include "auxetic/pipeline.hpp"
#include "auxetic/serialization.hpp"

namespace {

using auxetic::ErrorKind;
using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

bool is_validation(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidGeometry:
    case ErrorKind::GridMismatch:
    case ErrorKind::LengthMismatch:
    case ErrorKind::ShapeMismatch:
      return true;
    default:
      return false;
  }
}

int fail(const std::string& stage, const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"stage", stage}, {"message", message}, {"exit_code", code}}.dump() << std::endl;
  return code;
}

auxetic::pipeline::PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  if (!fs::is_regular_file(path)) throw auxetic::Error(ErrorKind::InvalidConfig, "config file not found: " + path);
  const json j = json::parse(auxetic::serialization::read_file(path), nullptr, false);
  if (j.is_discarded()) throw auxetic::Error(ErrorKind::InvalidConfig, "config file is not valid JSON: " + path);
  return auxetic::pipeline::config_from_json(j, fs::path(path).parent_path());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Auxetic sinusoidal metastructure pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  std::string output_dir;
  std::size_t workers = 0;
  bool quiet = false;
  app.add_option("-c,--config", config_path, "Pipeline config JSON");
  app.add_option("-o,--output", output_dir, "Output directory (overridden by AUXETIC_OUTPUT_ROOT)");
  app.add_option("-w,--workers", workers, "Labelling threads (0 = all cores)");
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  auxetic::pipeline::ExternalDesignRequest req;
  std::string targets;
  std::optional<double> alpha, beta, gamma, rescale;
  std::optional<std::size_t> n;

  const char* stages[] = {"sample", "label", "train-forward", "train-inverse", "design", "ga", "explain", "report", "all"};
  for (const char* s : stages) {
    auto* sub = app.add_subcommand(s, std::string("Run the ") + s + " stage");
    if (std::string(s) == "design") {
      sub->add_option("--targets", targets, "Target curve CSV (strain,nu,sigma_kPa)");
      sub->add_option("--alpha", alpha, "Weight of the nu loss");
      sub->add_option("--beta", beta, "Weight of the sigma loss");
      sub->add_option("--gamma", gamma, "Weight of the scale-diversity loss");
      sub->add_option("--n", n, "Design groups per target")->check(CLI::PositiveNumber);
      sub->add_option("--rescale-lambda", rescale, "Rescale proposals to this wavelength (mm)");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("cli", "InvalidArguments", e.what(), kExitValidation);
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    auto cfg = load_config(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (workers != 0) cfg.workers = workers;
    auxetic::pipeline::Pipeline p(cfg, quiet ? nullptr : &std::cerr);

    if (stage == "sample") p.sample();
    else if (stage == "label") p.label();
    else if (stage == "train-forward") p.train_forward();
    else if (stage == "train-inverse") p.train_inverse();
    else if (stage == "ga") p.run_ga();
    else if (stage == "explain") p.explain();
    else if (stage == "report") p.report();
    else if (stage == "all") p.all();
    else if (stage == "design") {
      if (targets.empty()) {
        if (alpha || beta || gamma || n || rescale) {
          return fail(stage, "InvalidArguments", "loss and rescale flags require --targets", kExitValidation);
        }
        p.design();
      } else {
        req.targets = targets;
        req.alpha = alpha;
        req.beta = beta;
        req.gamma = gamma;
        req.n = n;
        req.rescale_lambda = rescale;
        std::cout << p.design_external(req).dump(2) << std::endl;
      }
    }
  } catch (const auxetic::Error& e) {
    const int code = is_validation(e.kind()) ? kExitValidation : kExitStage;
    return fail(stage, std::string(auxetic::to_string(e.kind())), e.what(), code);
  } catch (const std::exception& e) {
    return fail(stage, "Internal", e.what(), kExitStage);
  }
  return 0;
}
