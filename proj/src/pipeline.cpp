#include "auxetic/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "auxetic/csv.hpp"
#include "auxetic/explain.hpp"
#include "auxetic/serialization.hpp"

namespace auxetic::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kFormatVersion = 1;

// Which stage writes each artifact, for manifest lookups.
const std::map<std::string, std::string>& producers() {
  static const std::map<std::string, std::string> m{
      {files::kSample, "sample"},           {files::kPoolCsv, "sample"},
      {files::kDataset, "label"},           {files::kDesignsCsv, "label"},
      {files::kCurvesCsv, "label"},         {files::kForwardNu, "train-forward"},
      {files::kForwardSigma, "train-forward"}, {files::kForwardMetrics, "train-forward"},
      {files::kDesignSingle, "train-inverse"}, {files::kDesignMulti, "train-inverse"},
      {files::kProposals, "design"},        {files::kGaResults, "ga"},
      {files::kExplainNu, "explain"},       {files::kExplainSigma, "explain"},
  };
  return m;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw Error(ErrorKind::InvalidConfig, "unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read_into(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_range(const json& j, const char* key, sampling::Range& r) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2) throw Error(ErrorKind::InvalidConfig, std::string("range '") + key + "' needs [min, max]");
  r = {v[0], v[1]};
}

void read_loss(const json& j, inverse::InverseLossConfig& l, const std::string& where) {
  check_keys(j, {"alpha", "beta", "gamma", "n"}, where);
  read_into(j, "alpha", l.alpha);
  read_into(j, "beta", l.beta);
  read_into(j, "gamma", l.gamma);
  read_into(j, "n", l.N);
}

json loss_json(const inverse::InverseLossConfig& l) {
  return {{"alpha", l.alpha}, {"beta", l.beta}, {"gamma", l.gamma}, {"n", l.N}};
}

json seeds_json(const Seeds& s) {
  return {{"pool", s.pool}, {"split", s.split}, {"nn", s.nn}, {"inverse", s.inverse}, {"ga", s.ga}, {"explain", s.explain}};
}

std::string hash_of(const std::string& bytes) { return serialization::hex64(serialization::fnv1a(bytes)); }

mechanics::PropertyCurves record_target(const sampling::Record& r) { return r.curves; }

double mean_abs(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

json group_json(const inverse::GroupProposal& g) {
  return {{"lambda", g.params.lambda},
          {"t", g.params.t},
          {"A", g.params.A},
          {"valid", g.valid},
          {"mae_nu", g.mae_nu},
          {"mae_sigma_kPa", g.mae_sigma_kpa},
          {"raw", serialization::design_to_json(g.raw)}};
}

geometry::DesignParams params_of(const json& g) { return {g.at("lambda"), g.at("t"), g.at("A")}; }

std::string num(double v) { return std::isfinite(v) ? csv::format(v) : std::string(); }

}  // namespace

void PipelineConfig::validate() const {
  if (pool_size == 0 || budget == 0) throw Error(ErrorKind::InvalidConfig, "pool size and budget must be positive");
  if (budget > pool_size) throw Error(ErrorKind::InvalidConfig, "budget exceeds pool size");
  if (split.total() != budget) {
    throw Error(ErrorKind::InvalidConfig, "split sizes must add up to the sampling budget");
  }
  if (split.train == 0 || split.test == 0) throw Error(ErrorKind::InvalidConfig, "train and test splits must be nonempty");
  for (std::size_t k = 0; k < 3; ++k) {
    if (!(ranges[k].min > 0.0) || !(ranges[k].max > ranges[k].min)) {
      throw Error(ErrorKind::InvalidConfig, "design ranges must be positive and increasing");
    }
  }
  mechanics.validate();
  if (!material_path.empty() && !fs::is_regular_file(material_path)) {
    throw Error(ErrorKind::InvalidConfig, "material file not found: " + material_path.string());
  }
  single.validate();
  multi.validate();
  if (single.N != 1) throw Error(ErrorKind::InvalidConfig, "the single design model must use n = 1");
  if (multi.N < 2) throw Error(ErrorKind::InvalidConfig, "the multi design model needs n >= 2");
  ga.validate();
  if (!(forward.adam.lr > 0.0) || !(inverse.adam.lr > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning rates must be positive");
  if (forward.max_epochs == 0 || inverse.max_epochs == 0) throw Error(ErrorKind::InvalidConfig, "epoch limits must be positive");
  if (explain_background == 0 || explain_samples == 0 || sensitivity_grid < 2) {
    throw Error(ErrorKind::InvalidConfig, "explain settings must be positive (grid >= 2)");
  }
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    check_keys(j, {"seeds", "pool", "split", "mechanics", "material", "forward", "inverse", "ga", "explain",
                   "output_dir", "workers"},
               "config");
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      check_keys(s, {"pool", "split", "nn", "inverse", "ga", "explain"}, "seeds");
      read_into(s, "pool", c.seeds.pool);
      read_into(s, "split", c.seeds.split);
      read_into(s, "nn", c.seeds.nn);
      read_into(s, "inverse", c.seeds.inverse);
      read_into(s, "ga", c.seeds.ga);
      read_into(s, "explain", c.seeds.explain);
    }
    if (j.contains("pool")) {
      const auto& p = j.at("pool");
      check_keys(p, {"size", "budget", "ranges"}, "pool");
      read_into(p, "size", c.pool_size);
      read_into(p, "budget", c.budget);
      if (p.contains("ranges")) {
        const auto& r = p.at("ranges");
        check_keys(r, {"lambda", "t", "A"}, "pool.ranges");
        read_range(r, "lambda", c.ranges.lambda);
        read_range(r, "t", c.ranges.t);
        read_range(r, "A", c.ranges.A);
      }
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      check_keys(s, {"train", "val", "test"}, "split");
      read_into(s, "train", c.split.train);
      read_into(s, "val", c.split.val);
      read_into(s, "test", c.split.test);
    }
    if (j.contains("mechanics")) {
      const auto& m = j.at("mechanics");
      check_keys(m, {"t_e", "newton_tol", "max_iters", "max_bisections", "segment_fraction", "nx", "ny"}, "mechanics");
      read_into(m, "t_e", c.mechanics.t_e);
      read_into(m, "newton_tol", c.mechanics.newton_tol);
      read_into(m, "max_iters", c.mechanics.max_iters);
      read_into(m, "max_bisections", c.mechanics.max_bisections);
      read_into(m, "segment_fraction", c.mechanics.segment_fraction);
      read_into(m, "nx", c.mechanics.nx);
      read_into(m, "ny", c.mechanics.ny);
    }
    if (j.contains("material")) {
      const auto p = j.at("material").get<std::string>();
      if (!p.empty()) c.material_path = fs::path(p).is_absolute() ? fs::path(p) : base_dir / p;
    }
    if (j.contains("forward")) {
      const auto& f = j.at("forward");
      check_keys(f, {"lr", "max_epochs", "patience", "scale_copies"}, "forward");
      read_into(f, "lr", c.forward.adam.lr);
      read_into(f, "max_epochs", c.forward.max_epochs);
      read_into(f, "patience", c.forward.patience);
      read_into(f, "scale_copies", c.forward.scale_copies);
    }
    if (j.contains("inverse")) {
      const auto& f = j.at("inverse");
      check_keys(f, {"lr", "max_epochs", "patience", "single", "multi", "eps_scale", "cap"}, "inverse");
      read_into(f, "lr", c.inverse.adam.lr);
      read_into(f, "max_epochs", c.inverse.max_epochs);
      read_into(f, "patience", c.inverse.patience);
      if (f.contains("single")) read_loss(f.at("single"), c.single, "inverse.single");
      if (f.contains("multi")) read_loss(f.at("multi"), c.multi, "inverse.multi");
      double eps = c.single.eps_scale;
      double cap = c.single.cap;
      read_into(f, "eps_scale", eps);
      read_into(f, "cap", cap);
      c.single.eps_scale = c.multi.eps_scale = eps;
      c.single.cap = c.multi.cap = cap;
    }
    if (j.contains("ga")) {
      const auto& g = j.at("ga");
      check_keys(g, {"population", "bits_per_var", "tournament_size", "p_crossover", "p_mutation", "generations",
                     "elitism"},
                 "ga");
      read_into(g, "population", c.ga.population);
      read_into(g, "bits_per_var", c.ga.bits_per_var);
      read_into(g, "tournament_size", c.ga.tournament_size);
      read_into(g, "p_crossover", c.ga.p_crossover);
      read_into(g, "p_mutation", c.ga.p_mutation);
      read_into(g, "generations", c.ga.generations);
      read_into(g, "elitism", c.ga.elitism);
    }
    if (j.contains("explain")) {
      const auto& e = j.at("explain");
      check_keys(e, {"background", "samples", "grid"}, "explain");
      read_into(e, "background", c.explain_background);
      read_into(e, "samples", c.explain_samples);
      read_into(e, "grid", c.sensitivity_grid);
    }
    if (j.contains("output_dir")) {
      const fs::path p = j.at("output_dir").get<std::string>();
      c.output_dir = p.is_absolute() ? p : base_dir / p;
    }
    read_into(j, "workers", c.workers);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("bad config value: ") + e.what());
  }
  c.forward.seed = c.seeds.nn;
  c.inverse.seed = c.seeds.inverse;
  c.ga.seed = c.seeds.ga;
  c.ga.ranges = c.ranges;
  c.validate();
  return c;
}

json config_to_json(const PipelineConfig& c) {
  auto range = [](const sampling::Range& r) { return json::array({r.min, r.max}); };
  return {{"seeds", seeds_json(c.seeds)},
          {"pool",
           {{"size", c.pool_size},
            {"budget", c.budget},
            {"ranges", {{"lambda", range(c.ranges.lambda)}, {"t", range(c.ranges.t)}, {"A", range(c.ranges.A)}}}}},
          {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
          {"mechanics",
           {{"t_e", c.mechanics.t_e},
            {"newton_tol", c.mechanics.newton_tol},
            {"max_iters", c.mechanics.max_iters},
            {"max_bisections", c.mechanics.max_bisections},
            {"segment_fraction", c.mechanics.segment_fraction},
            {"nx", c.mechanics.nx},
            {"ny", c.mechanics.ny}}},
          {"material", c.material_path.string()},
          {"forward",
           {{"lr", c.forward.adam.lr},
            {"max_epochs", c.forward.max_epochs},
            {"patience", c.forward.patience},
            {"scale_copies", c.forward.scale_copies}}},
          {"inverse",
           {{"lr", c.inverse.adam.lr},
            {"max_epochs", c.inverse.max_epochs},
            {"patience", c.inverse.patience},
            {"single", loss_json(c.single)},
            {"multi", loss_json(c.multi)},
            {"eps_scale", c.single.eps_scale},
            {"cap", c.single.cap}}},
          {"ga",
           {{"population", c.ga.population},
            {"bits_per_var", c.ga.bits_per_var},
            {"tournament_size", c.ga.tournament_size},
            {"p_crossover", c.ga.p_crossover},
            {"p_mutation", c.ga.p_mutation},
            {"generations", c.ga.generations},
            {"elitism", c.ga.elitism}}},
          {"explain", {{"background", c.explain_background}, {"samples", c.explain_samples}, {"grid", c.sensitivity_grid}}},
          {"output_dir", c.output_dir.string()},
          {"workers", c.workers}};
}

struct Pipeline::Stage {
  std::string name;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  json inputs = json::object();
  json outputs = json::object();
};

Pipeline::Pipeline(PipelineConfig cfg, std::ostream* log) : cfg_(std::move(cfg)), log_(log) {
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') cfg_.output_dir = root;
  cfg_.forward.seed = cfg_.seeds.nn;
  cfg_.inverse.seed = cfg_.seeds.inverse;
  cfg_.ga.seed = cfg_.seeds.ga;
  cfg_.ga.ranges = cfg_.ranges;
  cfg_.validate();
}

void Pipeline::say(const std::string& line) const {
  if (log_) *log_ << line << std::endl;
}

mechanics::Material Pipeline::material() const {
  if (cfg_.material_path.empty()) return mechanics::Material::linear();
  std::ifstream in(cfg_.material_path);
  if (!in) throw Error(ErrorKind::Io, "cannot open material file " + cfg_.material_path.string());
  return mechanics::read_material_csv(in);
}

std::string Pipeline::read_artifact(const std::string& name) const {
  const fs::path p = path(name);
  const auto it = producers().find(name);
  const std::string producer = it == producers().end() ? "?" : it->second;
  if (!fs::is_regular_file(p)) {
    throw Error(ErrorKind::InvalidConfig, "missing artifact " + p.string() + " (run stage '" + producer + "' first)");
  }
  std::string bytes = serialization::read_file(p.string());
  const fs::path manifest = path("manifests") / (producer + ".json");
  if (fs::is_regular_file(manifest)) {
    const json m = json::parse(serialization::read_file(manifest.string()), nullptr, false);
    if (m.is_discarded() || m.value("format_version", 0) != kFormatVersion) {
      throw Error(ErrorKind::InvalidConfig, "manifest " + manifest.string() + " has an unsupported format");
    }
    if (m.contains("outputs") && m["outputs"].contains(name) && m["outputs"][name] != hash_of(bytes)) {
      throw Error(ErrorKind::InvalidConfig, "artifact " + name + " changed since stage '" + producer + "' wrote it");
    }
  }
  return bytes;
}

void Pipeline::write_artifact(Stage& st, const std::string& name, const std::string& contents) const {
  serialization::write_file(path(name).string(), contents);
  st.outputs[name] = hash_of(contents);
}

void Pipeline::finish(Stage& st) const {
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - st.start).count();
  const json m = {{"stage", st.name},
                  {"format_version", kFormatVersion},
                  {"seeds", seeds_json(cfg_.seeds)},
                  {"config_hash", hash_of(config_to_json(cfg_).dump())},
                  {"inputs", st.inputs},
                  {"outputs", st.outputs},
                  {"wall_time_s", secs}};
  fs::create_directories(path("manifests"));
  serialization::write_file((path("manifests") / (st.name + ".json")).string(), m.dump(2) + "\n");
  std::ostringstream os;
  os << "[" << st.name << "] done in " << secs << " s";
  say(os.str());
}

sampling::Dataset Pipeline::dataset() const { return sampling::dataset_from_json(read_artifact(files::kDataset)); }

neural::ModelCheckpoint Pipeline::checkpoint(const std::string& name) const {
  const std::string text = read_artifact(name);
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::Io, "checkpoint " + name + " is not valid JSON");
  return neural::checkpoint_from_json(j);
}

void Pipeline::sample() {
  Stage st{"sample"};
  fs::create_directories(cfg_.output_dir);
  sampling::PoolStats stats;
  const auto pool = sampling::generate_pool({cfg_.ranges, cfg_.pool_size, cfg_.seeds.pool}, &stats);
  const auto picks = sampling::greedy_select(pool, cfg_.budget, cfg_.ranges);
  json designs = json::array();
  std::ostringstream csv_out;
  csv_out << "index,lambda_mm,t_mm,A_mm,gap_mm\n";
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& d = pool[i];
    designs.push_back({d.lambda(), d.t(), d.A()});
    csv_out << i << ',' << csv::format(d.lambda()) << ',' << csv::format(d.t()) << ',' << csv::format(d.A()) << ','
            << csv::format(d.gap()) << '\n';
  }
  const json out = {{"format_version", kFormatVersion},
                    {"seed", cfg_.seeds.pool},
                    {"size", cfg_.pool_size},
                    {"budget", cfg_.budget},
                    {"stats", {{"draws", stats.draws}, {"rejected", stats.rejected}}},
                    {"picks", picks},
                    {"pool", designs}};
  write_artifact(st, files::kSample, out.dump() + "\n");
  write_artifact(st, files::kPoolCsv, csv_out.str());
  finish(st);
}

void Pipeline::label() {
  Stage st{"label"};
  const std::string text = read_artifact(files::kSample);
  st.inputs[files::kSample] = hash_of(text);
  const json s = json::parse(text);
  std::vector<geometry::ValidDesign> pool;
  for (const auto& p : s.at("pool")) pool.push_back(geometry::validate_design({p[0], p[1], p[2]}));
  const auto picks = s.at("picks").get<std::vector<std::size_t>>();

  sampling::LabelOptions opt;
  opt.sizes = cfg_.split;
  opt.split_seed = cfg_.seeds.split;
  opt.pool_seed = cfg_.seeds.pool;
  opt.ranges = cfg_.ranges;
  opt.workers = cfg_.workers == 0 ? std::max(1U, std::thread::hardware_concurrency()) : cfg_.workers;
  opt.log = log_;
  const auto mat = material();
  if (!cfg_.material_path.empty()) st.inputs["material"] = hash_of(serialization::read_file(cfg_.material_path.string()));
  const auto d = sampling::label_and_split(pool, picks, mat, cfg_.mechanics, opt);

  write_artifact(st, files::kDataset, sampling::dataset_to_json(d));
  std::ostringstream designs;
  sampling::write_designs_csv(d, designs);
  write_artifact(st, files::kDesignsCsv, designs.str());
  std::ostringstream curves;
  sampling::write_curves_csv(d, curves);
  write_artifact(st, files::kCurvesCsv, curves.str());
  finish(st);
}

void Pipeline::train_forward() {
  Stage st{"train-forward"};
  const auto d = dataset();
  st.inputs[files::kDataset] = hash_of(read_artifact(files::kDataset));
  json metrics = {{"format_version", kFormatVersion}, {"seed", cfg_.seeds.nn}};
  for (const auto target : {neural::Target::Nu, neural::Target::Sigma}) {
    const auto name = neural::to_string(target);
    say("[train-forward] training " + name + " surrogate");
    const auto c = neural::train_forward_model(d, target, cfg_.forward);
    write_artifact(st, target == neural::Target::Nu ? files::kForwardNu : files::kForwardSigma,
                   neural::checkpoint_to_string(c));
    json m = {{"epochs_run", c.meta.epochs_run}, {"best_epoch", c.meta.best_epoch}};
    const std::pair<const char*, const std::vector<std::size_t>*> splits[] = {
        {"train", &d.split.train}, {"val", &d.split.val}, {"test", &d.split.test}};
    for (const auto& [split, idx] : splits) {
      if (idx->empty()) continue;
      const auto r = neural::evaluate_forward(c, d, *idx, target);
      m[split] = {{"r2", r.r2}, {"mae", r.mae}};
    }
    m["mae_units"] = target == neural::Target::Nu ? "1" : "kPa";
    metrics[name] = m;
  }
  write_artifact(st, files::kForwardMetrics, metrics.dump(2) + "\n");
  finish(st);
}

void Pipeline::train_inverse() {
  Stage st{"train-inverse"};
  const auto d = dataset();
  const auto nu = checkpoint(files::kForwardNu);
  const auto sigma = checkpoint(files::kForwardSigma);
  st.inputs[files::kDataset] = hash_of(read_artifact(files::kDataset));
  st.inputs[files::kForwardNu] = hash_of(read_artifact(files::kForwardNu));
  st.inputs[files::kForwardSigma] = hash_of(read_artifact(files::kForwardSigma));
  const inverse::Surrogates s{&nu, &sigma};
  say("[train-inverse] single-design model");
  write_artifact(st, files::kDesignSingle,
                 neural::checkpoint_to_string(inverse::train_design_model(d, s, cfg_.single, cfg_.inverse)));
  say("[train-inverse] multi-design model");
  write_artifact(st, files::kDesignMulti,
                 neural::checkpoint_to_string(inverse::train_design_model(d, s, cfg_.multi, cfg_.inverse)));
  finish(st);
}

void Pipeline::design() {
  Stage st{"design"};
  const auto d = dataset();
  const auto nu = checkpoint(files::kForwardNu);
  const auto sigma = checkpoint(files::kForwardSigma);
  const auto single = checkpoint(files::kDesignSingle);
  const auto multi = checkpoint(files::kDesignMulti);
  for (const char* f : {files::kDataset, files::kForwardNu, files::kForwardSigma, files::kDesignSingle, files::kDesignMulti}) {
    st.inputs[f] = hash_of(read_artifact(f));
  }
  const inverse::Surrogates s{&nu, &sigma};
  json targets = json::array();
  for (const auto r : d.split.test) {
    const auto& rec = d.records.at(r);
    const auto target = record_target(rec);
    const auto one = inverse::propose_designs(single, s, target, rec.design.lambda());
    const auto many = inverse::propose_designs(multi, s, target, rec.design.lambda());
    json e = {{"record", r},
              {"true", serialization::design_to_json(rec.design.params())},
              {"mean_abs_sigma_kPa", mean_abs(target.sigma_kpa)},
              {"single", json::array()},
              {"multi", json::array()},
              {"multi_ratio_deviation", json::array()}};
    for (const auto& g : one.groups) e["single"].push_back(group_json(g));
    for (const auto& g : many.groups) e["multi"].push_back(group_json(g));
    for (std::size_t i = 0; i < many.groups.size(); ++i) {
      for (std::size_t j = i + 1; j < many.groups.size(); ++j) {
        Eigen::MatrixXd pair(3, 2);
        pair.col(0) << many.groups[i].raw.lambda, many.groups[i].raw.t, many.groups[i].raw.A;
        pair.col(1) << many.groups[j].raw.lambda, many.groups[j].raw.t, many.groups[j].raw.A;
        e["multi_ratio_deviation"].push_back(inverse::ratio_deviation(pair));
      }
    }
    targets.push_back(e);
  }
  const json out = {{"format_version", kFormatVersion},
                    {"seeds", seeds_json(cfg_.seeds)},
                    {"rescaled_to", "true lambda"},
                    {"single_loss", loss_json(cfg_.single)},
                    {"multi_loss", loss_json(cfg_.multi)},
                    {"targets", targets}};
  write_artifact(st, files::kProposals, out.dump(2) + "\n");
  finish(st);
}

json Pipeline::design_external(const ExternalDesignRequest& req) {
  Stage st{"design-external"};
  std::ifstream in(req.targets);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open target file " + req.targets.string());
  const auto target = mechanics::read_curves_csv(in);
  st.inputs["targets"] = hash_of(serialization::read_file(req.targets.string()));
  const auto nu = checkpoint(files::kForwardNu);
  const auto sigma = checkpoint(files::kForwardSigma);
  const inverse::Surrogates s{&nu, &sigma};
  inverse::check_grid(s.strain_grid(), target.strain_grid);

  const std::size_t n = req.n.value_or(1);
  inverse::InverseLossConfig loss = n == 1 ? cfg_.single : cfg_.multi;
  loss.N = n;
  if (n == 1) loss.gamma = 0.0;
  if (req.alpha) loss.alpha = *req.alpha;
  if (req.beta) loss.beta = *req.beta;
  if (req.gamma) loss.gamma = *req.gamma;
  loss.validate();

  // Reuse a stored design model when its loss settings match; train otherwise.
  neural::ModelCheckpoint model;
  bool reused = false;
  for (const char* f : {files::kDesignSingle, files::kDesignMulti}) {
    if (!fs::is_regular_file(path(f))) continue;
    auto c = checkpoint(f);
    const auto l = inverse::loss_config_from(c);
    if (l.N == loss.N && l.alpha == loss.alpha && l.beta == loss.beta && l.gamma == loss.gamma) {
      model = std::move(c);
      reused = true;
      st.inputs[f] = hash_of(read_artifact(f));
      break;
    }
  }
  if (!reused) {
    say("[design] training a design model for the requested loss weights");
    model = inverse::train_design_model(dataset(), s, loss, cfg_.inverse);
    write_artifact(st, "design_custom.json", neural::checkpoint_to_string(model));
  }
  const auto p = inverse::propose_designs(model, s, target, req.rescale_lambda);
  json cfg = loss_json(loss);
  cfg["targets"] = req.targets.string();
  cfg["model"] = reused ? "stored" : "design_custom.json";
  cfg["rescale_lambda"] = req.rescale_lambda ? json(*req.rescale_lambda) : json(nullptr);
  cfg["seeds"] = seeds_json(cfg_.seeds);
  const json out = inverse::proposal_to_json(p, cfg);
  write_artifact(st, "design_external.json", out.dump(2) + "\n");
  finish(st);
  return out;
}

void Pipeline::run_ga() {
  Stage st{"ga"};
  const auto d = dataset();
  const auto nu = checkpoint(files::kForwardNu);
  const auto sigma = checkpoint(files::kForwardSigma);
  for (const char* f : {files::kDataset, files::kForwardNu, files::kForwardSigma}) st.inputs[f] = hash_of(read_artifact(f));
  const inverse::Surrogates s{&nu, &sigma};
  json targets = json::array();
  for (const auto r : d.split.test) {
    const auto& rec = d.records.at(r);
    const auto target = record_target(rec);
    const auto result = ga::evolve(target, s, cfg_.ga);
    const double lam = rec.design.lambda();
    const auto best = inverse::evaluate_group(result.best.params, geometry::scale_to_lambda(result.best.params, lam), target, s);
    json e = {{"record", r},
              {"true", serialization::design_to_json(rec.design.params())},
              {"best", group_json(best)},
              {"best_fitness", result.best.fitness},
              {"top", json::array()}};
    for (const auto& ind : ga::top_distinct(result, cfg_.multi.N)) {
      e["top"].push_back(group_json(inverse::evaluate_group(ind.params, geometry::scale_to_lambda(ind.params, lam), target, s)));
    }
    targets.push_back(e);
    std::ostringstream hist;
    ga::write_history_csv(result.history, hist);
    write_artifact(st, "ga_history_r" + std::to_string(r) + ".csv", hist.str());
  }
  const json out = {{"format_version", kFormatVersion},
                    {"seed", cfg_.seeds.ga},
                    {"population", cfg_.ga.population},
                    {"generations", cfg_.ga.generations},
                    {"targets", targets}};
  write_artifact(st, files::kGaResults, out.dump(2) + "\n");
  finish(st);
}

void Pipeline::explain() {
  Stage st{"explain"};
  const auto d = dataset();
  for (const char* f : {files::kDataset, files::kForwardNu, files::kForwardSigma}) st.inputs[f] = hash_of(read_artifact(f));
  for (const auto target : {neural::Target::Nu, neural::Target::Sigma}) {
    const bool is_nu = target == neural::Target::Nu;
    const auto c = checkpoint(is_nu ? files::kForwardNu : files::kForwardSigma);
    const auto a = explain::attribute_surrogate(c, d, cfg_.explain_background, cfg_.explain_samples, cfg_.seeds.explain);
    const auto sr = explain::sensitivity_report(explain::surrogate_curves(c), cfg_.ranges, cfg_.sensitivity_grid);
    const auto rows = explain::normalized_comparison(a, sr);
    std::array<double, 3> sens{};
    for (std::size_t k = 0; k < 3; ++k) sens[k] = rows[k].sensitivity_normalized;
    const json out = {{"format_version", kFormatVersion},
                      {"model", neural::to_string(target)},
                      {"attribution", explain::attribution_to_json(a)},
                      {"sensitivity", explain::sensitivity_to_json(sr)},
                      {"rank_agreement", explain::rank_order(a.mean_abs) == explain::rank_order(sens)}};
    write_artifact(st, is_nu ? files::kExplainNu : files::kExplainSigma, out.dump(2) + "\n");
    std::ostringstream os;
    explain::write_comparison_csv(rows, os);
    write_artifact(st, is_nu ? files::kComparisonNu : files::kComparisonSigma, os.str());
  }
  finish(st);
}

void Pipeline::report() {
  Stage st{"report"};
  const json metrics = json::parse(read_artifact(files::kForwardMetrics));
  const json props = json::parse(read_artifact(files::kProposals));
  const json gar = json::parse(read_artifact(files::kGaResults));
  for (const char* f : {files::kForwardMetrics, files::kProposals, files::kGaResults}) st.inputs[f] = hash_of(read_artifact(f));
  const auto mat = material();

  // Oracle check of a proposal: label it with the lattice solver.
  auto oracle = [&](const json& g, const json& truth) -> std::pair<double, double> {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const auto p = params_of(g);
    if (!geometry::is_valid(p)) return {nan, nan};
    try {
      const auto curves = mechanics::run_tension_test(geometry::validate_design(p), mat, cfg_.mechanics).curves;
      return {neural::mae(truth.at("nu").get<std::vector<double>>(), curves.nu),
              neural::mae(truth.at("sigma_kPa").get<std::vector<double>>(), curves.sigma_kpa)};
    } catch (const Error&) {
      return {nan, nan};
    }
  };
  const auto d = dataset();
  auto truth_of = [&](std::size_t r) {
    const auto& c = d.records.at(r).curves;
    return json{{"nu", c.nu}, {"sigma_kPa", c.sigma_kpa}};
  };

  std::ostringstream t1;
  t1 << "record,true_lambda_mm,true_t_mm,true_A_mm,"
        "model_lambda_mm,model_t_mm,model_A_mm,model_mae_nu,model_mae_sigma_kPa,"
        "ga_lambda_mm,ga_t_mm,ga_A_mm,ga_mae_nu,ga_mae_sigma_kPa,"
        "model_oracle_mae_nu,model_oracle_mae_sigma_kPa,ga_oracle_mae_nu,ga_oracle_mae_sigma_kPa\n";
  double m_nu = 0, m_sigma = 0, g_nu = 0, g_sigma = 0, target_sigma = 0;
  double om_nu = 0, om_sigma = 0, og_nu = 0, og_sigma = 0;
  std::size_t n = 0, om_n = 0, og_n = 0;
  const auto& pt = props.at("targets");
  const auto& gt = gar.at("targets");
  if (pt.size() != gt.size()) throw Error(ErrorKind::InvalidConfig, "proposal and GA reports cover different targets");
  for (std::size_t i = 0; i < pt.size(); ++i) {
    const auto& p = pt[i];
    const auto& g = gt[i];
    const auto r = p.at("record").get<std::size_t>();
    const auto& tr = p.at("true");
    const auto& m = p.at("single")[0];
    const auto& b = g.at("best");
    const auto om = oracle(m, truth_of(r));
    const auto og = oracle(b, truth_of(r));
    t1 << r << ',' << num(tr.at("lambda")) << ',' << num(tr.at("t")) << ',' << num(tr.at("A")) << ','
       << num(m.at("lambda")) << ',' << num(m.at("t")) << ',' << num(m.at("A")) << ',' << num(m.at("mae_nu")) << ','
       << num(m.at("mae_sigma_kPa")) << ',' << num(b.at("lambda")) << ',' << num(b.at("t")) << ',' << num(b.at("A"))
       << ',' << num(b.at("mae_nu")) << ',' << num(b.at("mae_sigma_kPa")) << ',' << num(om.first) << ','
       << num(om.second) << ',' << num(og.first) << ',' << num(og.second) << '\n';
    m_nu += m.at("mae_nu").get<double>();
    m_sigma += m.at("mae_sigma_kPa").get<double>();
    g_nu += b.at("mae_nu").get<double>();
    g_sigma += b.at("mae_sigma_kPa").get<double>();
    target_sigma += p.at("mean_abs_sigma_kPa").get<double>();
    // Invalid or non-converging proposals are counted, not averaged.
    if (std::isfinite(om.first)) {
      om_nu += om.first;
      om_sigma += om.second;
      ++om_n;
    }
    if (std::isfinite(og.first)) {
      og_nu += og.first;
      og_sigma += og.second;
      ++og_n;
    }
    ++n;
  }
  write_artifact(st, files::kTable1, t1.str());

  std::ostringstream t2;
  t2 << "record,source,group,lambda_mm,t_mm,A_mm,valid,mae_nu,mae_sigma_kPa\n";
  double worst_multi_nu = 0.0;
  double min_deviation = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pt.size(); ++i) {
    const auto r = pt[i].at("record").get<std::size_t>();
    auto rows = [&](const json& groups, const char* source) {
      for (std::size_t k = 0; k < groups.size(); ++k) {
        const auto& g = groups[k];
        t2 << r << ',' << source << ',' << k + 1 << ',' << num(g.at("lambda")) << ',' << num(g.at("t")) << ','
           << num(g.at("A")) << ',' << (g.at("valid").get<bool>() ? 1 : 0) << ',' << num(g.at("mae_nu")) << ','
           << num(g.at("mae_sigma_kPa")) << '\n';
      }
    };
    rows(pt[i].at("multi"), "model");
    rows(gt[i].at("top"), "ga");
    for (const auto& g : pt[i].at("multi")) worst_multi_nu = std::max(worst_multi_nu, g.at("mae_nu").get<double>());
    for (const auto& v : pt[i].at("multi_ratio_deviation")) min_deviation = std::min(min_deviation, v.get<double>());
  }
  write_artifact(st, files::kTable2, t2.str());

  std::ostringstream r2;
  r2 << "model,split,r2,mae,mae_units\n";
  for (const char* model : {"nu", "sigma"}) {
    for (const char* split : {"train", "val", "test"}) {
      if (!metrics.at(model).contains(split)) continue;
      const auto& e = metrics.at(model).at(split);
      r2 << model << ',' << split << ',' << num(e.at("r2")) << ',' << num(e.at("mae")) << ','
         << metrics.at(model).at("mae_units").get<std::string>() << '\n';
    }
  }
  write_artifact(st, files::kR2Summary, r2.str());

  const double k = n == 0 ? 1.0 : static_cast<double>(n);
  json summary = {
      {"format_version", kFormatVersion},
      {"seeds", seeds_json(cfg_.seeds)},
      {"forward", {{"nu_test_r2", metrics.at("nu").at("test").at("r2")},
                   {"sigma_test_r2", metrics.at("sigma").at("test").at("r2")}}},
      {"single", {{"targets", n},
                  {"model_mean_mae_nu", m_nu / k},
                  {"model_mean_mae_sigma_kPa", m_sigma / k},
                  {"ga_mean_mae_nu", g_nu / k},
                  {"ga_mean_mae_sigma_kPa", g_sigma / k},
                  {"mean_target_abs_sigma_kPa", target_sigma / k},
                  {"model_oracle_mean_mae_nu", om_nu / std::max<double>(1.0, om_n)},
                  {"model_oracle_mean_mae_sigma_kPa", om_sigma / std::max<double>(1.0, om_n)},
                  {"model_oracle_unevaluated", n - om_n},
                  {"ga_oracle_mean_mae_nu", og_nu / std::max<double>(1.0, og_n)},
                  {"ga_oracle_mean_mae_sigma_kPa", og_sigma / std::max<double>(1.0, og_n)},
                  {"ga_oracle_unevaluated", n - og_n}}},
      {"multi", {{"n", cfg_.multi.N},
                 {"gamma", cfg_.multi.gamma},
                 {"worst_mae_nu", worst_multi_nu},
                 {"min_pair_ratio_deviation", min_deviation}}}};
  for (const char* f : {files::kExplainNu, files::kExplainSigma}) {
    if (!fs::is_regular_file(path(f))) continue;
    const json e = json::parse(read_artifact(f));
    st.inputs[f] = hash_of(read_artifact(f));
    summary["explain"][e.at("model").get<std::string>()] = {
        {"attribution_ranking", e.at("attribution").at("ranking")},
        {"sensitivity_ranking", e.at("sensitivity").at("ranking")},
        {"rank_agreement", e.at("rank_agreement")}};
  }
  write_artifact(st, files::kSummary, summary.dump(2) + "\n");
  finish(st);
}

void Pipeline::all() {
  sample();
  label();
  train_forward();
  train_inverse();
  design();
  run_ga();
  explain();
  report();
}

}  // namespace auxetic::pipeline
