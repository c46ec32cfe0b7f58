#include "core/error.hpp"
#include "core/persistence.hpp"
#include "test_helpers.hpp"

#include <filesystem>

using namespace mlmcmc;

namespace {

ChainSet sample_chains() {
  FunctionEvaluator a(1, [](std::span<const double> c) { return Evaluation{-c[0] * c[0], c[0]}; });
  FunctionEvaluator b(3, [](std::span<const double> c) { return Evaluation{-c[0] * c[0] - c[2] * c[2], c[1]}; });
  SamplerSettings s;
  s.levels = {{1, 1, 0.4, -1, 1}, {3, 2, 0.4, 5, 4}};
  s.coarse_chain_length = 500;
  return run_hierarchy({&a, &b}, s, 77);
}

}  // namespace

TEST_CASE("chain sets round-trip through CBOR bit for bit") {
  ChainSet c = sample_chains();
  c.levels[1].qoi[3] = std::numeric_limits<double>::quiet_NaN();
  c.levels[1].qoi[4] = -0.0;
  const auto dir = std::filesystem::temp_directory_path() / "mlmcmc_test_persistence";
  std::filesystem::remove_all(dir);
  write_cbor(dir / "chains.cbor", chainset_to_json(c));
  const ChainSet back = chainset_from_json(read_cbor(dir / "chains.cbor"));
  CHECK(bitwise_equal(back, c));
  CHECK(std::signbit(back.levels[1].qoi[4]));
  CHECK(std::isnan(back.levels[1].qoi[3]));
  std::filesystem::remove_all(dir);
}

TEST_CASE("sampler snapshots round-trip") {
  FunctionEvaluator a(2, [](std::span<const double> c) { return Evaluation{-c[1] * c[1], c[0]}; });
  SamplerSettings s;
  s.levels = {{2, 1, 0.3, -1, 1}};
  s.coarse_chain_length = 100;
  HierarchySampler sampler({&a}, s, 5, 0);
  sampler.advance(40);
  const SamplerSnapshot snap = sampler.snapshot();
  const SamplerSnapshot back = snapshot_from_json(Json::from_cbor(Json::to_cbor(snapshot_to_json(snap))));
  CHECK(back.coarse_iterations == 40);
  CHECK(back.rng_states == snap.rng_states);
  CHECK(bitwise_equal(back.chains, snap.chains));
  REQUIRE(back.states.size() == 1);
  CHECK(bitwise_equal(back.states[0], snap.states[0]));
}

TEST_CASE("non-finite numbers map to null and back") {
  CHECK(finite_or_null(std::numeric_limits<double>::infinity()).is_null());
  CHECK(finite_or_null(1.5) == 1.5);
  CHECK(std::isnan(number_or_nan(Json())));
  CHECK(number_or_nan(Json(2.0)) == 2.0);
}

TEST_CASE("reading a malformed document is an IO error") {
  const auto dir = std::filesystem::temp_directory_path() / "mlmcmc_test_persistence_bad";
  std::filesystem::remove_all(dir);
  write_text(dir / "bad.cbor", "not cbor");
  CHECK_THROWS_AS(read_cbor(dir / "bad.cbor"), Error);
  CHECK_THROWS_AS(read_json(dir / "missing.json"), Error);
  CHECK_THROWS_AS(chainset_from_json(Json{{"format", "something-else"}}), Error);
  std::filesystem::remove_all(dir);
}
