#include "core/persistence.hpp"

#include "core/error.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace mlmcmc {

namespace {

static_assert(std::endian::native == std::endian::little, "packed arrays assume a little-endian host");

Json pack(const std::vector<double>& values) {
  std::vector<std::uint8_t> bytes(values.size() * sizeof(double));
  if (!values.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
  return Json::binary(std::move(bytes));
}

std::vector<double> unpack(const Json& j, const char* what) {
  if (!j.is_binary()) fail(ErrorCode::Io, std::string("chain file: field '") + what + "' is not a packed array");
  const auto& bytes = j.get_binary();
  if (bytes.size() % sizeof(double) != 0) fail(ErrorCode::Io, std::string("chain file: field '") + what + "' is truncated");
  std::vector<double> values(bytes.size() / sizeof(double));
  if (!values.empty()) std::memcpy(values.data(), bytes.data(), bytes.size());
  return values;
}

// Scalars that may be NaN or infinite are stored through their bit pattern.
std::uint64_t bits_of(double v) { return std::bit_cast<std::uint64_t>(v); }
double from_bits(const Json& j) { return std::bit_cast<double>(j.get<std::uint64_t>()); }

const Json& field(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) fail(ErrorCode::Io, std::string("chain file: missing field '") + key + "'");
  return *it;
}

}  // namespace

Json chainset_to_json(const ChainSet& chains) {
  Json levels = Json::array();
  for (const LevelChain& c : chains.levels) {
    levels.push_back({{"level", c.level},
                      {"dimension", c.dimension},
                      {"coarse_dimension", c.coarse_dimension},
                      {"store_stride", c.store_stride},
                      {"steps", c.steps},
                      {"accepted", c.accepted},
                      {"failures", c.failures},
                      {"qoi", pack(c.qoi)},
                      {"qoi_coarse", pack(c.qoi_coarse)},
                      {"samples", pack(c.samples)},
                      {"coarse_samples", pack(c.coarse_samples)},
                      {"sample_log_likelihood", pack(c.sample_log_likelihood)}});
  }
  Json costs = Json::array();
  for (const LevelCost& c : chains.costs) costs.push_back({{"seconds", c.seconds}, {"steps", c.steps}});
  return {{"format", "mlmcmc-chains"}, {"version", 1}, {"levels", levels}, {"burn_in", chains.burn_in}, {"costs", costs}};
}

ChainSet chainset_from_json(const Json& j) {
  if (j.value("format", "") != "mlmcmc-chains") fail(ErrorCode::Io, "not a chain record");
  ChainSet out;
  try {
    for (const Json& l : field(j, "levels")) {
      LevelChain c;
      c.level = field(l, "level").get<int>();
      c.dimension = field(l, "dimension").get<int>();
      c.coarse_dimension = field(l, "coarse_dimension").get<int>();
      c.store_stride = field(l, "store_stride").get<int>();
      c.steps = field(l, "steps").get<std::int64_t>();
      c.accepted = field(l, "accepted").get<std::int64_t>();
      c.failures = field(l, "failures").get<std::int64_t>();
      c.qoi = unpack(field(l, "qoi"), "qoi");
      c.qoi_coarse = unpack(field(l, "qoi_coarse"), "qoi_coarse");
      c.samples = unpack(field(l, "samples"), "samples");
      c.coarse_samples = unpack(field(l, "coarse_samples"), "coarse_samples");
      c.sample_log_likelihood = unpack(field(l, "sample_log_likelihood"), "sample_log_likelihood");
      out.levels.push_back(std::move(c));
    }
    out.burn_in = field(j, "burn_in").get<std::vector<std::int64_t>>();
    for (const Json& c : field(j, "costs")) {
      out.costs.push_back({field(c, "seconds").get<double>(), field(c, "steps").get<std::int64_t>()});
    }
  } catch (const Json::exception& e) {
    fail(ErrorCode::Io, std::string("malformed chain record: ") + e.what());
  }
  return out;
}

Json snapshot_to_json(const SamplerSnapshot& s) {
  Json states = Json::array();
  for (const ChainState& st : s.states) {
    states.push_back({{"coefficients", pack(st.coefficients)},
                      {"log_likelihood", bits_of(st.log_likelihood)},
                      {"log_likelihood_coarse", bits_of(st.log_likelihood_coarse)},
                      {"qoi", bits_of(st.qoi)},
                      {"iteration", st.iteration}});
  }
  return {{"format", "mlmcmc-snapshot"},
          {"version", 1},
          {"states", states},
          {"rng_states", s.rng_states},
          {"coarse_iterations", s.coarse_iterations},
          {"initialised", s.initialised},
          {"chains", chainset_to_json(s.chains)}};
}

SamplerSnapshot snapshot_from_json(const Json& j) {
  if (j.value("format", "") != "mlmcmc-snapshot") fail(ErrorCode::Io, "not a sampler checkpoint");
  SamplerSnapshot s;
  try {
    for (const Json& st : field(j, "states")) {
      ChainState c;
      c.coefficients = unpack(field(st, "coefficients"), "coefficients");
      c.log_likelihood = from_bits(field(st, "log_likelihood"));
      c.log_likelihood_coarse = from_bits(field(st, "log_likelihood_coarse"));
      c.qoi = from_bits(field(st, "qoi"));
      c.iteration = field(st, "iteration").get<std::int64_t>();
      s.states.push_back(std::move(c));
    }
    s.rng_states = field(j, "rng_states").get<std::vector<std::string>>();
    s.coarse_iterations = field(j, "coarse_iterations").get<std::int64_t>();
    s.initialised = field(j, "initialised").get<bool>();
    s.chains = chainset_from_json(field(j, "chains"));
  } catch (const Json::exception& e) {
    fail(ErrorCode::Io, std::string("malformed checkpoint: ") + e.what());
  }
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) fail(ErrorCode::Io, "cannot write " + tmp.string());
    os << text;
    if (!os) fail(ErrorCode::Io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_cbor(const std::filesystem::path& path, const Json& j) {
  const std::vector<std::uint8_t> bytes = Json::to_cbor(j);
  write_text(path, std::string(bytes.begin(), bytes.end()));
}

Json read_cbor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return Json::from_cbor(bytes);
  } catch (const Json::exception& e) {
    fail(ErrorCode::Io, "malformed file " + path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorCode::Io, "cannot open " + path.string());
  try {
    return Json::parse(is);
  } catch (const Json::exception& e) {
    fail(ErrorCode::Io, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double number_or_nan(const Json& j) { return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN(); }

}  // namespace mlmcmc
