#include "core/config.hpp"

#include "core/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace mlmcmc {

namespace pt = boost::property_tree;

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    fail(ErrorCode::Config, "config key '" + key + "': expected a number, got '" + raw + "'");
  }
  return v;
}

std::int64_t parse_int(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc() && ptr == s.data() + s.size() && !s.empty()) return v;
  // Accept integral values written in scientific notation, e.g. 2e5.
  const double d = parse_double(key, raw);
  if (d != std::floor(d) || std::abs(d) > 9.0e18) {
    fail(ErrorCode::Config, "config key '" + key + "': expected an integer, got '" + raw + "'");
  }
  return static_cast<std::int64_t>(d);
}

std::uint64_t parse_uint(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    fail(ErrorCode::Config, "config key '" + key + "': expected a non-negative integer, got '" + raw + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string s = lower(trim(raw));
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  fail(ErrorCode::Config, "config key '" + key + "': expected true/false, got '" + raw + "'");
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

template <class E>
E parse_enum(const std::string& key, const std::string& raw, const std::map<std::string, E>& names) {
  const auto it = names.find(lower(trim(raw)));
  if (it == names.end()) {
    std::string options;
    for (const auto& [name, value] : names) options += (options.empty() ? "" : ", ") + name;
    fail(ErrorCode::Config, "config key '" + key + "': unknown value '" + raw + "' (expected one of " + options + ")");
  }
  return it->second;
}

const std::map<std::string, ExperimentType> kExperimentNames = {{"eigen_decay", ExperimentType::EigenDecay},
                                                               {"rejection_rate", ExperimentType::RejectionRate},
                                                               {"cost_variance", ExperimentType::CostVariance},
                                                               {"reconstruction", ExperimentType::Reconstruction}};
const std::map<std::string, WeightingMode> kWeightingNames = {{"select", WeightingMode::Select},
                                                             {"local_average", WeightingMode::LocalAverage}};
const std::map<std::string, DataTreatment> kTreatmentNames = {{"level_dependent", DataTreatment::LevelDependent},
                                                             {"level_independent", DataTreatment::LevelIndependent}};
const std::map<std::string, LikelihoodModel> kLikelihoodNames = {{"beam", LikelihoodModel::Beam},
                                                                {"flat", LikelihoodModel::Flat}};
const std::map<std::string, ConstitutiveLaw> kLawNames = {{"as_printed", ConstitutiveLaw::AsPrinted},
                                                         {"plane_stress", ConstitutiveLaw::PlaneStress}};

template <class E>
std::string enum_name(E value, const std::map<std::string, E>& names) {
  for (const auto& [name, v] : names) {
    if (v == value) return name;
  }
  return "unknown";
}

// Section reader that tracks which keys were consumed so unknown keys fail.
class Section {
 public:
  Section(const pt::ptree& root, const std::string& name) : name_(name) {
    if (const auto child = root.get_child_optional(name)) node_ = &*child;
  }
  bool present() const { return node_ != nullptr; }
  std::optional<std::string> get(const std::string& key) {
    seen_.insert(key);
    if (!node_) return std::nullopt;
    const auto v = node_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }
  std::string full(const std::string& key) const { return name_ + "." + key; }
  void check_unknown() const {
    if (!node_) return;
    for (const auto& [key, child] : *node_) {
      if (!seen_.count(key)) fail(ErrorCode::Config, "unknown config key '" + name_ + "." + key + "'");
    }
  }

  template <class T, class Fn>
  void read(const std::string& key, T& target, Fn parse) {
    if (auto v = get(key)) target = parse(full(key), *v);
  }
  void read(const std::string& key, double& target) { read(key, target, parse_double); }
  void read(const std::string& key, int& target) {
    if (auto v = get(key)) target = static_cast<int>(parse_int(full(key), *v));
  }
  void read(const std::string& key, std::int64_t& target) { read(key, target, parse_int); }
  void read(const std::string& key, std::uint64_t& target) { read(key, target, parse_uint); }
  void read(const std::string& key, bool& target) { read(key, target, parse_bool); }
  void read(const std::string& key, std::string& target) {
    if (auto v = get(key)) target = *v;
  }

 private:
  std::string name_;
  const pt::ptree* node_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

std::string to_string(ExperimentType t) { return enum_name(t, kExperimentNames); }
std::string to_string(WeightingMode m) { return m == WeightingMode::Identity ? "identity" : enum_name(m, kWeightingNames); }
std::string to_string(DataTreatment t) { return enum_name(t, kTreatmentNames); }
std::string to_string(LikelihoodModel m) { return enum_name(m, kLikelihoodNames); }
std::string to_string(ConstitutiveLaw law) { return enum_name(law, kLawNames); }

HierarchyConfig parse_config(const std::string& text) {
  pt::ptree root;
  try {
    std::istringstream is(text);
    pt::ini_parser::read_ini(is, root);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::Config, std::string("malformed config: ") + e.what());
  }
  static const std::set<std::string> known = {"experiment", "geometry", "matern",   "transform",     "data",
                                              "sampler",    "levels",   "cost",     "reconstruction"};
  for (const auto& [name, child] : root) {
    if (!known.count(name)) fail(ErrorCode::Config, "unknown config section [" + name + "]");
    if (child.empty() && !child.data().empty()) fail(ErrorCode::Config, "config key '" + name + "' outside a section");
  }

  HierarchyConfig c;
  {
    Section s(root, "experiment");
    s.read("type", c.experiment, [](const std::string& k, const std::string& v) { return parse_enum(k, v, kExperimentNames); });
    s.read("name", c.name);
    s.read("replicates", c.replicates);
    s.read("root_seed", c.root_seed);
    s.read("output_dir", c.output_dir);
    s.read("workers", c.workers);
    s.read("checkpoint_every", c.checkpoint_every);
    s.read("kl_cache_dir", c.kl_cache_dir);
    s.check_unknown();
  }
  {
    Section s(root, "geometry");
    s.read("length", c.geometry.length);
    s.read("height", c.geometry.height);
    s.read("poisson", c.geometry.poisson);
    s.read("density", c.geometry.density);
    s.read("load_total", c.geometry.load_total);
    s.read("e_ref", c.geometry.e_ref);
    s.read("constitutive_law", c.geometry.law,
           [](const std::string& k, const std::string& v) { return parse_enum(k, v, kLawNames); });
    s.check_unknown();
  }
  {
    Section s(root, "matern");
    s.read("variance", c.matern.variance);
    s.read("corr_length", c.matern.corr_length);
    s.read("smoothness", c.matern.smoothness);
    s.read("n_quad", c.n_quad);
    if (auto v = s.get("smoothness_sweep")) {
      c.smoothness_sweep.clear();
      for (const std::string& item : split_list(*v)) c.smoothness_sweep.push_back(parse_double(s.full("smoothness_sweep"), item));
    }
    s.read("eigen_count", c.eigen_count);
    s.read("fit_m_min", c.fit_m_min);
    s.read("fit_m_max", c.fit_m_max);
    s.check_unknown();
  }
  {
    Section s(root, "transform");
    s.read("scale", c.transform.scale);
    s.read("shape", c.transform.shape);
    s.read("floor_weight", c.transform.floor_weight);
    s.check_unknown();
  }
  {
    Section s(root, "data");
    s.read("fidelity", c.fidelity);
    s.read("weighting", c.weighting, [](const std::string& k, const std::string& v) { return parse_enum(k, v, kWeightingNames); });
    s.read("treatment", c.treatment, [](const std::string& k, const std::string& v) { return parse_enum(k, v, kTreatmentNames); });
    s.read("truth_modes", c.truth_modes);
    s.read("data_seed", c.data_seed);
    s.read("likelihood", c.likelihood, [](const std::string& k, const std::string& v) { return parse_enum(k, v, kLikelihoodNames); });
    s.check_unknown();
  }
  double default_beta = 0.2;
  {
    Section s(root, "sampler");
    s.read("coarse_chain_length", c.coarse_chain_length);
    s.read("burn_in_fraction", c.burn_in_fraction);
    s.read("pcn_beta", default_beta);
    s.read("qoi_x_min", c.qoi_region.x_min);
    s.read("qoi_x_max", c.qoi_region.x_max);
    s.read("qoi_y_min", c.qoi_region.y_min);
    s.read("qoi_y_max", c.qoi_region.y_max);
    s.check_unknown();
  }
  {
    Section s(root, "levels");
    auto list = [&](const std::string& key) -> std::optional<std::vector<std::string>> {
      if (auto v = s.get(key)) return split_list(*v);
      return std::nullopt;
    };
    const auto m = list("kl_truncation");
    const auto nx = list("nx");
    const auto ny = list("ny");
    if (!m || !nx || !ny) fail(ErrorCode::Config, "[levels] needs kl_truncation, nx and ny lists");
    const std::size_t n = m->size();
    if (nx->size() != n || ny->size() != n) fail(ErrorCode::Config, "[levels] lists must have equal lengths");
    c.levels.assign(n, LevelConfig{});
    for (std::size_t l = 0; l < n; ++l) {
      c.levels[l].kl_truncation = static_cast<int>(parse_int(s.full("kl_truncation"), (*m)[l]));
      c.levels[l].nx = static_cast<int>(parse_int(s.full("nx"), (*nx)[l]));
      c.levels[l].ny = static_cast<int>(parse_int(s.full("ny"), (*ny)[l]));
      c.levels[l].pcn_beta = default_beta;
      c.levels[l].fidelity = c.fidelity;
    }
    auto optional_list = [&](const std::string& key, auto apply) {
      const auto v = list(key);
      if (!v) return;
      if (v->size() != n) fail(ErrorCode::Config, "[levels] " + key + " must list one value per level");
      for (std::size_t l = 0; l < n; ++l) {
        if ((*v)[l] == "-" || (*v)[l].empty()) continue;
        apply(c.levels[l], s.full(key), (*v)[l]);
      }
    };
    optional_list("subsample_rate", [](LevelConfig& lc, const std::string& k, const std::string& v) {
      lc.subsample_rate = static_cast<int>(parse_int(k, v));
    });
    optional_list("pcn_beta", [](LevelConfig& lc, const std::string& k, const std::string& v) { lc.pcn_beta = parse_double(k, v); });
    optional_list("fidelity", [](LevelConfig& lc, const std::string& k, const std::string& v) { lc.fidelity = parse_double(k, v); });
    optional_list("burn_in", [](LevelConfig& lc, const std::string& k, const std::string& v) { lc.burn_in = parse_int(k, v); });
    optional_list("store_stride", [](LevelConfig& lc, const std::string& k, const std::string& v) {
      lc.store_stride = static_cast<int>(parse_int(k, v));
    });
    s.check_unknown();
  }
  {
    Section s(root, "cost");
    s.read("compare_independent", c.compare_independent);
    s.read("independent_chain_fraction", c.independent_chain_fraction);
    s.read("single_level_probe", c.single_level_probe);
    s.check_unknown();
  }
  {
    Section s(root, "reconstruction");
    s.read("gallery_size", c.gallery_size);
    s.check_unknown();
  }
  c.validate();
  return c;
}

HierarchyConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const HierarchyConfig& c) {
  std::ostringstream os;
  auto join = [](const std::vector<LevelConfig>& levels, auto field) {
    std::string out;
    for (std::size_t l = 0; l < levels.size(); ++l) out += (l ? ", " : "") + field(levels[l]);
    return out;
  };
  os << "[experiment]\n"
     << "type = " << to_string(c.experiment) << "\n"
     << "name = " << c.name << "\n"
     << "replicates = " << c.replicates << "\n"
     << "root_seed = " << c.root_seed << "\n"
     << "output_dir = " << c.output_dir << "\n"
     << "workers = " << c.workers << "\n"
     << "checkpoint_every = " << c.checkpoint_every << "\n"
     << "kl_cache_dir = " << c.kl_cache_dir << "\n\n";
  os << "[geometry]\n"
     << "length = " << fmt_double(c.geometry.length) << "\n"
     << "height = " << fmt_double(c.geometry.height) << "\n"
     << "poisson = " << fmt_double(c.geometry.poisson) << "\n"
     << "density = " << fmt_double(c.geometry.density) << "\n"
     << "load_total = " << fmt_double(c.geometry.load_total) << "\n"
     << "e_ref = " << fmt_double(c.geometry.e_ref) << "\n"
     << "constitutive_law = " << to_string(c.geometry.law) << "\n\n";
  os << "[matern]\n"
     << "variance = " << fmt_double(c.matern.variance) << "\n"
     << "corr_length = " << fmt_double(c.matern.corr_length) << "\n"
     << "smoothness = " << fmt_double(c.matern.smoothness) << "\n"
     << "n_quad = " << c.n_quad << "\n"
     << "smoothness_sweep = ";
  for (std::size_t i = 0; i < c.smoothness_sweep.size(); ++i) os << (i ? ", " : "") << fmt_double(c.smoothness_sweep[i]);
  os << "\n"
     << "eigen_count = " << c.eigen_count << "\n"
     << "fit_m_min = " << c.fit_m_min << "\n"
     << "fit_m_max = " << c.fit_m_max << "\n\n";
  os << "[transform]\n"
     << "scale = " << fmt_double(c.transform.scale) << "\n"
     << "shape = " << fmt_double(c.transform.shape) << "\n"
     << "floor_weight = " << fmt_double(c.transform.floor_weight) << "\n\n";
  os << "[data]\n"
     << "fidelity = " << fmt_double(c.fidelity) << "\n"
     << "weighting = " << to_string(c.weighting) << "\n"
     << "treatment = " << to_string(c.treatment) << "\n"
     << "truth_modes = " << c.truth_modes << "\n"
     << "data_seed = " << c.data_seed << "\n"
     << "likelihood = " << to_string(c.likelihood) << "\n\n";
  os << "[sampler]\n"
     << "coarse_chain_length = " << c.coarse_chain_length << "\n"
     << "burn_in_fraction = " << fmt_double(c.burn_in_fraction) << "\n"
     << "qoi_x_min = " << fmt_double(c.qoi_region.x_min) << "\n"
     << "qoi_x_max = " << fmt_double(c.qoi_region.x_max) << "\n"
     << "qoi_y_min = " << fmt_double(c.qoi_region.y_min) << "\n"
     << "qoi_y_max = " << fmt_double(c.qoi_region.y_max) << "\n\n";
  os << "[levels]\n"
     << "kl_truncation = " << join(c.levels, [](const LevelConfig& l) { return std::to_string(l.kl_truncation); }) << "\n"
     << "nx = " << join(c.levels, [](const LevelConfig& l) { return std::to_string(l.nx); }) << "\n"
     << "ny = " << join(c.levels, [](const LevelConfig& l) { return std::to_string(l.ny); }) << "\n"
     << "subsample_rate = " << join(c.levels, [](const LevelConfig& l) { return std::to_string(l.subsample_rate); }) << "\n"
     << "pcn_beta = " << join(c.levels, [](const LevelConfig& l) { return fmt_double(l.pcn_beta); }) << "\n"
     << "fidelity = " << join(c.levels, [](const LevelConfig& l) { return fmt_double(l.fidelity); }) << "\n"
     << "burn_in = " << join(c.levels, [](const LevelConfig& l) { return std::to_string(l.burn_in); }) << "\n"
     << "store_stride = " << join(c.levels, [](const LevelConfig& l) { return std::to_string(l.store_stride); }) << "\n\n";
  os << "[cost]\n"
     << "compare_independent = " << (c.compare_independent ? "true" : "false") << "\n"
     << "independent_chain_fraction = " << fmt_double(c.independent_chain_fraction) << "\n"
     << "single_level_probe = " << c.single_level_probe << "\n\n";
  os << "[reconstruction]\n"
     << "gallery_size = " << c.gallery_size << "\n";
  return os.str();
}

void save_config(const HierarchyConfig& config, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorCode::Io, "cannot write config " + path.string());
  os << serialize_config(config);
}

void HierarchyConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCode::Config, msg); };
  if (replicates < 1) bad("replicates must be at least 1");
  if (workers < 0) bad("workers must be non-negative");
  if (checkpoint_every < 0) bad("checkpoint_every must be non-negative");
  if (output_dir.empty()) bad("output_dir must not be empty");
  geometry.validate();
  matern.validate();
  for (double nu : smoothness_sweep) {
    if (!(nu >= 1.0)) bad("smoothness_sweep values must be at least 1");
  }
  transform.validate();
  if (n_quad < 2) bad("n_quad must be at least 2");
  if (!(fidelity > 0.0)) bad("data fidelity must be positive");
  if (coarse_chain_length < 1) bad("coarse_chain_length must be positive");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) bad("burn_in_fraction must lie in [0, 1)");
  if (!(qoi_region.x_min < qoi_region.x_max && qoi_region.y_min < qoi_region.y_max && qoi_region.x_min >= 0.0 &&
        qoi_region.x_max <= 1.0 && qoi_region.y_min >= 0.0 && qoi_region.y_max <= 1.0)) {
    bad("QoI region must be a non-empty sub-rectangle of [0, 1]^2 (fractions of length and height)");
  }
  if (!(independent_chain_fraction > 0.0 && independent_chain_fraction <= 1.0)) {
    bad("independent_chain_fraction must lie in (0, 1]");
  }
  if (single_level_probe < 1) bad("single_level_probe must be positive");
  if (gallery_size < 0) bad("gallery_size must be non-negative");

  if (experiment == ExperimentType::EigenDecay) {
    if (eigen_count < 1) bad("eigen_count must be positive");
    if (eigen_count > n_quad * n_quad) bad("eigen_count exceeds n_quad^2");
    if (!(fit_m_min >= 1 && fit_m_min < fit_m_max && fit_m_max <= eigen_count)) {
      bad("eigenvalue fit range must satisfy 1 <= fit_m_min < fit_m_max <= eigen_count");
    }
  }

  if (levels.empty()) bad("at least one level is required");
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const LevelConfig& lc = levels[l];
    const std::string tag = "level " + std::to_string(l) + ": ";
    if (lc.kl_truncation < 1) bad(tag + "kl_truncation must be positive");
    if (lc.kl_truncation > n_quad * n_quad) bad(tag + "kl_truncation exceeds n_quad^2");
    if (lc.nx < 3 || lc.nx % 3 != 0) bad(tag + "nx must be a positive multiple of 3");
    if (lc.ny < 1) bad(tag + "ny must be positive");
    if (lc.subsample_rate < 1) bad(tag + "subsample_rate must be at least 1");
    if (!(lc.pcn_beta >= 0.0 && lc.pcn_beta <= 1.0)) bad(tag + "pcn_beta must lie in [0, 1]");
    if (!(lc.fidelity > 0.0)) bad(tag + "fidelity must be positive");
    if (lc.store_stride < 1) bad(tag + "store_stride must be at least 1");
    if (l > 0) {
      const LevelConfig& prev = levels[l - 1];
      if (lc.kl_truncation <= prev.kl_truncation) bad(tag + "kl_truncation must increase strictly over levels");
      if (lc.nx % prev.nx != 0 || lc.ny % prev.ny != 0 || lc.nx / prev.nx != lc.ny / prev.ny) {
        bad(tag + "grid must refine the previous grid by an integer factor s >= 1 in both directions");
      }
    }
  }
  if (truth_modes < 0) bad("truth_modes must be non-negative");
  if (effective_truth_modes() > n_quad * n_quad) bad("truth_modes exceeds n_quad^2");
}

std::uint64_t HierarchyConfig::effective_data_seed() const {
  // Derived seeds keep the observation noise independent of the chain streams.
  return data_seed != 0 ? data_seed : root_seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL;
}

int HierarchyConfig::effective_truth_modes() const {
  if (truth_modes > 0) return truth_modes;
  return levels.empty() ? 0 : levels.back().kl_truncation;
}

std::filesystem::path HierarchyConfig::effective_kl_cache_dir() const {
  if (!kl_cache_dir.empty()) return kl_cache_dir;
  return std::filesystem::path(output_dir) / "kl_cache";
}

std::vector<double> HierarchyConfig::effective_smoothness_sweep() const {
  if (!smoothness_sweep.empty()) return smoothness_sweep;
  return {matern.smoothness};
}

SamplerSettings HierarchyConfig::sampler_settings() const {
  SamplerSettings s;
  s.coarse_chain_length = coarse_chain_length;
  s.burn_in_fraction = burn_in_fraction;
  for (const LevelConfig& lc : levels) {
    SamplerLevel sl;
    sl.dimension = lc.kl_truncation;
    sl.subsample_rate = lc.subsample_rate;
    sl.beta = lc.pcn_beta;
    sl.burn_in = lc.burn_in;
    sl.store_stride = lc.store_stride;
    s.levels.push_back(sl);
  }
  return s;
}

std::vector<LevelModelSpec> HierarchyConfig::level_specs() const {
  std::vector<LevelModelSpec> out;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    LevelModelSpec s;
    s.level = static_cast<int>(l);
    s.nx = levels[l].nx;
    s.ny = levels[l].ny;
    s.kl_truncation = levels[l].kl_truncation;
    s.fidelity = levels[l].fidelity;
    s.weighting = weighting;
    s.treatment = treatment;
    out.push_back(s);
  }
  return out;
}

std::vector<LevelGrid> HierarchyConfig::level_grids() const {
  std::vector<LevelGrid> out;
  for (const LevelConfig& lc : levels) out.push_back({lc.kl_truncation, lc.nx, lc.ny});
  return out;
}

}  // namespace mlmcmc
