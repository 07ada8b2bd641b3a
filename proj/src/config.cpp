#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "rbmchoice/param_io.hpp"
#include "rbmchoice/pipeline.hpp"
#include "text_util.hpp"

namespace rbmchoice {

namespace {

namespace pt = boost::property_tree;

/// One INI section with key lookup that tolerates dots in keys and remembers
/// which keys were consumed, so leftovers can be reported as typos.
class Section {
 public:
  Section(std::string name, const pt::ptree& tree) : name_(std::move(name)), tree_(tree) {}

  const std::string& name() const { return name_; }

  std::optional<std::string> get(const std::string& key) {
    for (const auto& [k, v] : tree_) {
      if (k == key) {
        used_.insert(key);
        return detail::trim(v.data());
      }
    }
    return std::nullopt;
  }

  std::string require(const std::string& key) {
    auto v = get(key);
    if (!v) throw ConfigError("[" + name_ + "] missing key '" + key + "'");
    return *v;
  }

  std::vector<std::pair<std::string, std::string>> entries() {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, v] : tree_) {
      used_.insert(k);
      out.emplace_back(k, detail::trim(v.data()));
    }
    return out;
  }

  double number(const std::string& key, double fallback) {
    auto v = get(key);
    if (!v) return fallback;
    auto d = detail::parse_double(*v);
    if (!d) throw ConfigError("[" + name_ + "] " + key + ": not a number: '" + *v + "'");
    return *d;
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const double d = number(key, static_cast<double>(fallback));
    if (d < 0 || d != std::floor(d)) throw ConfigError("[" + name_ + "] " + key + ": expected a non-negative integer");
    return static_cast<std::size_t>(d);
  }

  bool flag(const std::string& key, bool fallback) {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "yes" || *v == "1" || *v == "on") return true;
    if (*v == "false" || *v == "no" || *v == "0" || *v == "off") return false;
    throw ConfigError("[" + name_ + "] " + key + ": expected true or false, got '" + *v + "'");
  }

  std::vector<std::string> list(const std::string& key) {
    auto v = get(key);
    if (!v || v->empty()) return {};
    return detail::split(*v, ',');
  }

  void finish() const {
    for (const auto& [k, v] : tree_)
      if (!used_.count(k)) throw ConfigError("[" + name_ + "] unknown key '" + k + "'");
  }

 private:
  std::string name_;
  const pt::ptree& tree_;
  std::set<std::string> used_;
};

template <class F>
auto wrap(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  two_stage.crbm.seed = derive_seed(s, 1);
  two_stage.extract.seed = derive_seed(s, 2);
  two_stage.optimizer.seed = derive_seed(s, 3);
  two_stage.simulation.seed = derive_seed(s, 4);
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  {
    std::istringstream in(text);
    try {
      pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
      throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
  }
  static const std::set<std::string> known = {"data",      "alternatives", "attributes", "generic", "indicators",
                                              "measurement", "model",      "optimizer",  "crbm",    "pipeline",
                                              "synth"};
  std::vector<Section> latent_sections, binned_sections;
  std::map<std::string, Section> sections;
  for (const auto& [name, sub] : tree) {
    if (name.rfind("latent.", 0) == 0) {
      latent_sections.emplace_back(name, sub);
    } else if (name.rfind("binned.", 0) == 0) {
      binned_sections.emplace_back(name, sub);
    } else if (known.count(name)) {
      sections.emplace(name, Section(name, sub));
    } else if (!sub.data().empty() && sub.empty()) {
      throw ConfigError("config: key '" + name + "' outside any section");
    } else {
      throw ConfigError("config: unknown section [" + name + "]");
    }
  }
  static const pt::ptree empty_tree;
  auto section = [&](const std::string& name) -> Section& {
    auto it = sections.find(name);
    if (it == sections.end()) it = sections.emplace(name, Section(name, empty_tree)).first;
    return it->second;
  };

  RunConfig cfg;
  cfg.text = text;

  // Catalog
  auto& alts = section("alternatives");
  cfg.catalog.alternatives = alts.list("names");
  if (cfg.catalog.alternatives.size() < 2) throw ConfigError("[alternatives] names must list at least two alternatives");
  if (auto ref = alts.get("reference")) {
    auto i = cfg.catalog.alternative_index(*ref);
    if (!i) throw ConfigError("[alternatives] reference '" + *ref + "' is not among the names");
    cfg.catalog.reference = *i;
  } else {
    cfg.catalog.reference = cfg.catalog.alternatives.size() - 1;
  }
  std::vector<double> scales;
  for (const auto& [name, value] : section("attributes").entries()) {
    cfg.catalog.alt_specific_vars.push_back(name);
    const auto s = value.empty() ? std::optional(1.0) : detail::parse_double(value);
    if (!s || !(*s > 0)) throw ConfigError("[attributes] " + name + ": scale factor must be a positive number");
    scales.push_back(*s);
  }
  cfg.load.scale_factors = scales;
  cfg.catalog.generic_vars = section("generic").list("names");
  for (auto& b : binned_sections) {
    BinnedVariable bv;
    bv.source = b.name().substr(7);
    for (const auto& e : b.list("edges")) {
      auto d = detail::parse_double(e);
      if (!d) throw ConfigError("[" + b.name() + "] edges: not a number: '" + e + "'");
      bv.edges.push_back(*d);
    }
    bv.outputs = b.list("outputs");
    if (bv.edges.empty() || bv.outputs.size() != bv.edges.size() + 1)
      throw ConfigError("[" + b.name() + "] needs edges and one more output name than edges");
    for (const auto& o : bv.outputs)
      if (std::find(cfg.catalog.generic_vars.begin(), cfg.catalog.generic_vars.end(), o) ==
          cfg.catalog.generic_vars.end())
        cfg.catalog.generic_vars.push_back(o);
    b.finish();
    cfg.load.binned.push_back(std::move(bv));
  }
  for (const auto& [name, alt] : section("indicators").entries()) {
    if (!alt.empty() && !cfg.catalog.alternative_index(alt))
      throw ConfigError("[indicators] " + name + ": unknown alternative '" + alt + "'");
    cfg.catalog.indicator_vars.push_back({name, alt});
  }
  wrap("catalog", [&] { cfg.catalog.check(); });

  // Data
  auto& data = section("data");
  if (auto p = data.get("path"); p && !p->empty()) {
    std::filesystem::path path(*p);
    cfg.data_path = path.is_absolute() ? path : base_dir / path;
  }
  if (auto d = data.get("delimiter")) {
    if (*d == "tab" || *d == "\\t") {
      cfg.load.delimiter = '\t';
    } else if (d->size() == 1) {
      cfg.load.delimiter = (*d)[0];
    } else {
      throw ConfigError("[data] delimiter must be a single character or 'tab'");
    }
  }
  if (auto c = data.get("indicator_coding")) {
    if (*c == "binary") cfg.load.indicator_coding = IndicatorCoding::binary;
    else if (*c == "likert5") cfg.load.indicator_coding = IndicatorCoding::likert5;
    else throw ConfigError("[data] indicator_coding must be binary or likert5");
  }
  cfg.load.likert_flip = data.flag("likert_flip", false);

  // Structure
  auto& structure = cfg.two_stage.structure;
  for (auto& s : latent_sections) {
    LatentSpec l;
    l.name = s.name().substr(7);
    wrap("[" + s.name() + "]", [&] { l.function = parse_latent_function(s.get("function").value_or("sigmoid")); });
    l.inputs = s.list("inputs");
    l.loadings = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(l.inputs.size()));
    l.noise_std = s.number("noise_std", 0.0);
    l.intercept = s.number("intercept", 0.0);
    l.fix_intercept = s.flag("fix_intercept", false);
    s.finish();
    structure.latents.push_back(std::move(l));
  }
  for (const auto& [indicator, latent] : section("measurement").entries())
    structure.measurement.push_back({indicator, latent, 0.0, false});
  auto& model = section("model");
  structure.utility_generic = model.list("utility_generic");
  wrap("[model] measurement_sign",
       [&] { structure.sign = parse_measurement_sign(model.get("measurement_sign").value_or("negated")); });
  cfg.two_stage.simulation.draws = model.count("draws", cfg.two_stage.simulation.draws);
  cfg.two_stage.std_errors = model.flag("std_errors", true);
  wrap("model structure", [&] { structure.check(cfg.catalog); });

  // Optimizer
  auto& opt = section("optimizer");
  auto& o = cfg.two_stage.optimizer;
  wrap("[optimizer] method", [&] { o.method = parse_optim_method(opt.get("method").value_or("ascent_bfgs")); });
  o.tolerance = opt.number("tolerance", o.tolerance);
  o.max_iterations = static_cast<int>(opt.count("max_iterations", static_cast<std::size_t>(o.max_iterations)));
  o.ascent_iterations = static_cast<int>(opt.count("ascent_iterations", static_cast<std::size_t>(o.ascent_iterations)));
  o.initial_step = opt.number("initial_step", o.initial_step);
  o.sgd_batch_size = opt.count("sgd_batch_size", o.sgd_batch_size);
  o.sgd_learning_rate = opt.number("sgd_learning_rate", o.sgd_learning_rate);
  o.sgd_epochs = static_cast<int>(opt.count("sgd_epochs", static_cast<std::size_t>(o.sgd_epochs)));

  // C-RBM
  auto& cr = section("crbm");
  auto& t = cfg.two_stage.crbm;
  cfg.two_stage.crbm_latents = cr.count("latents", 0);
  t.batch_size = cr.count("batch_size", t.batch_size);
  t.cd_steps = cr.count("cd_steps", t.cd_steps);
  t.learning_rate = cr.number("learning_rate", t.learning_rate);
  t.lr_decay = cr.number("lr_decay", t.lr_decay);
  t.epochs = cr.count("epochs", t.epochs);
  t.divergence_bound = cr.number("divergence_bound", t.divergence_bound);
  t.trace_exact_max_latents = cr.count("trace_exact_max_latents", t.trace_exact_max_latents);
  t.measure_wall_time = cr.flag("wall_time", false);
  cfg.two_stage.crbm_init_std = cr.number("init_std", cfg.two_stage.crbm_init_std);
  wrap("[crbm] g_term", [&] { cfg.two_stage.g_term = parse_g_term(cr.get("g_term").value_or("bilinear")); });
  if (t.batch_size == 0 || t.cd_steps == 0 || t.epochs == 0 || !(t.learning_rate >= 0))
    throw ConfigError("[crbm] batch_size, cd_steps and epochs must be positive and learning_rate non-negative");

  // Pipeline
  auto& pl = section("pipeline");
  cfg.two_stage.t_threshold = pl.number("t_threshold", 1.96);
  cfg.two_stage.cold_start = pl.flag("cold_start", true);
  cfg.two_stage.extract.duplicate_cosine = pl.number("duplicate_cosine", cfg.two_stage.extract.duplicate_cosine);
  if (auto out = pl.get("out")) cfg.out_dir = *out;
  if (auto f = pl.get("formats")) {
    cfg.formats.clear();
    for (const auto& name : detail::split(*f, ','))
      wrap("[pipeline] formats", [&] { cfg.formats.push_back(parse_report_format(name)); });
  }
  const std::uint64_t seed = static_cast<std::uint64_t>(pl.count("seed", 0));

  // Synthetic data
  auto& sy = section("synth");
  auto& st = cfg.synth;
  wrap("[synth] family", [&] { st.family = parse_model_family(sy.get("family").value_or("iclv")); });
  st.n_obs = sy.count("n_obs", st.n_obs);
  st.generic_prob = sy.number("generic_prob", st.generic_prob);
  st.generic_correlation = sy.number("generic_correlation", st.generic_correlation);
  st.availability = sy.number("availability", st.availability);
  st.indicator_missing = sy.number("indicator_missing", st.indicator_missing);
  st.attr_low = sy.number("attr_low", st.attr_low);
  st.attr_high = sy.number("attr_high", st.attr_high);
  st.weight_scale = sy.number("weight_scale", st.weight_scale);
  st.truth_seed = static_cast<std::uint64_t>(sy.count("truth_seed", st.truth_seed));
  if (auto tp = sy.get("truth"); tp && !tp->empty()) {
    std::filesystem::path path(*tp);
    st.truth_path = path.is_absolute() ? path : base_dir / path;
  }

  for (auto& [name, s] : sections) s.finish();
  cfg.set_seed(seed);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  RunConfig cfg = parse_run_config(buf.str(), path.parent_path());
  cfg.source = path;
  return cfg;
}

GroundTruth truth_from_config(const RunConfig& cfg) {
  const auto& st = cfg.synth;
  GroundTruth t;
  if (st.truth_path) {
    const ParamFile f = read_param_file(*st.truth_path);
    t.catalog = cfg.catalog;
    t.family = parse_model_family(f.model);
    switch (t.family) {
      case ModelFamily::mnl: t.mnl = mnl_from_param_file(f); break;
      case ModelFamily::iclv: t.iclv = iclv_from_param_file(f); break;
      case ModelFamily::crbm: t.crbm = crbm_from_param_file(f); break;
    }
  } else {
    const std::size_t J = cfg.two_stage.crbm_latents ? cfg.two_stage.crbm_latents : cfg.structure().latents.size();
    t = random_truth(st.family, cfg.catalog, cfg.structure().zero_params(cfg.catalog), J, st.weight_scale,
                     st.truth_seed);
  }
  auto& c = t.covariates = CovariateSpec::defaults(cfg.catalog);
  c.generic_prob.setConstant(st.generic_prob);
  c.generic_correlation = st.generic_correlation;
  c.availability_prob.setConstant(st.availability);
  c.indicator_missing_prob = st.indicator_missing;
  c.attr_low.setConstant(st.attr_low);
  c.attr_high.setConstant(st.attr_high);
  t.n_obs = st.n_obs;
  t.seed = derive_seed(cfg.seed, 5);
  wrap("synthetic truth", [&] { t.check(); });
  return t;
}

SurveyDataset dataset_from_config(const RunConfig& cfg) {
  if (cfg.data_path) return load_dataset(*cfg.data_path, cfg.catalog, cfg.load);
  return generate(truth_from_config(cfg));
}

}  // namespace rbmchoice
