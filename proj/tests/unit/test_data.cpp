#include "core/data.hpp"
#include "core/error.hpp"
#include "test_helpers.hpp"

#include <filesystem>
#include <numeric>

using namespace mlmcmc;

namespace {

ObservationSet make_obs(const Mesh& finest, double fidelity, std::uint64_t seed) {
  StiffnessField truth{std::vector<double>(finest.element_count(), 1.0)};
  return synthesize_observations(finest, truth, {}, fidelity, seed);
}

}  // namespace

TEST_CASE("synthetic observations are deterministic per seed and carry the configured noise") {
  const Mesh finest = build_mesh(96, 8, {});
  const double sigma = 1e-7;
  const ObservationSet a = make_obs(finest, sigma, 11), b = make_obs(finest, sigma, 11), c = make_obs(finest, sigma, 12);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  CHECK(a.values.size() == 2 * finest.edge_node_ids.size());
  CHECK(a.noiseless == c.noiseless);
  std::vector<double> noise(a.values.size());
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = (a.values[i] - a.noiseless[i]) / sigma;
  const double n = static_cast<double>(noise.size());
  const double mean = std::accumulate(noise.begin(), noise.end(), 0.0) / n;
  double var = 0.0;
  for (double x : noise) var += (x - mean) * (x - mean);
  var /= n - 1.0;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("constant residual gives log-likelihood -c^2 / sigma^2") {
  for (std::size_t n : {1u, 7u, 390u}) {
    for (double c : {1e-9, 3e-8, 2.5}) {
      for (double sigma : {1e-8, 0.3}) {
        std::vector<double> obs(2 * n, c), model(2 * n, 0.0);
        CHECK_REL(log_likelihood_level(obs, model, n, sigma), -c * c / (sigma * sigma), 1e-12);
      }
    }
  }
  std::vector<double> obs(4, 0.0);
  CHECK(log_likelihood_level(obs, obs, 2, 1e-8) == 0.0);
  CHECK_THROWS_AS(log_likelihood_level(obs, std::vector<double>(3, 0.0), 2, 1e-8), Error);
}

TEST_CASE("select weighting picks the coinciding fine edge nodes") {
  const BeamGeometry g;
  const Mesh coarse = build_mesh(6, 2, g), finest = build_mesh(24, 8, g);
  const LevelWeighting w = make_level_weighting(coarse, finest, WeightingMode::Select, 0);
  CHECK(w.coarse_count() == coarse.edge_node_ids.size());
  CHECK(w.fine_count == finest.edge_node_ids.size());
  for (std::size_t k = 0; k < w.coarse_count(); ++k) {
    REQUIRE(w.index_map[k].size() == 1);
    const auto [fine_index, weight] = w.index_map[k][0];
    CHECK(weight == 1.0);
    CHECK(finest.node_coords[finest.edge_node_ids[fine_index]] == coarse.node_coords[coarse.edge_node_ids[k]]);
  }
  std::vector<double> obs(2 * w.fine_count);
  std::iota(obs.begin(), obs.end(), 0.0);
  const std::vector<double> r = restrict_observations(obs, w);
  for (std::size_t k = 0; k < w.coarse_count(); ++k) {
    CHECK(r[2 * k] == obs[2 * w.index_map[k][0].first]);
    CHECK(r[2 * k + 1] == obs[2 * w.index_map[k][0].first + 1]);
  }
}

TEST_CASE("local-average weighting is normalised, local and exact for linear data") {
  const BeamGeometry g;
  const Mesh coarse = build_mesh(6, 2, g), finest = build_mesh(24, 8, g);
  const LevelWeighting w = make_level_weighting(coarse, finest, WeightingMode::LocalAverage, 1);
  const double spacing = coarse.hx();
  for (std::size_t k = 0; k < w.coarse_count(); ++k) {
    const Point2 p = coarse.node_coords[coarse.edge_node_ids[k]];
    double total = 0.0;
    for (const auto& [f, weight] : w.index_map[k]) {
      const Point2 q = finest.node_coords[finest.edge_node_ids[f]];
      CHECK(q.y == p.y);
      CHECK(std::abs(q.x - p.x) < spacing);
      CHECK(weight > 0.0);
      total += weight;
    }
    CHECK_REL(total, 1.0, 1e-14);
  }
  // Interior coarse nodes see symmetric neighbourhoods, so linear data is reproduced.
  std::vector<double> obs(2 * w.fine_count);
  for (std::size_t f = 0; f < w.fine_count; ++f) {
    const Point2 q = finest.node_coords[finest.edge_node_ids[f]];
    obs[2 * f] = 2.0 * q.x + q.y;
    obs[2 * f + 1] = -q.x;
  }
  const std::vector<double> r = restrict_observations(obs, w);
  for (std::size_t k = 0; k < w.coarse_count(); ++k) {
    const Point2 p = coarse.node_coords[coarse.edge_node_ids[k]];
    if (p.x <= 0.0 || p.x >= g.length) continue;
    CHECK(std::abs(r[2 * k] - (2.0 * p.x + p.y)) < 1e-12);
    CHECK(std::abs(r[2 * k + 1] + p.x) < 1e-12);
  }
}

TEST_CASE("weighting on the finest mesh is the identity") {
  const Mesh finest = build_mesh(12, 4, {});
  const LevelWeighting w = make_level_weighting(finest, finest, WeightingMode::LocalAverage, 2);
  CHECK(w.mode == WeightingMode::Identity);
  std::vector<double> obs(2 * finest.edge_node_ids.size());
  std::iota(obs.begin(), obs.end(), 1.0);
  CHECK(restrict_observations(obs, w) == obs);
}

TEST_CASE("non-nested meshes are rejected") {
  const Mesh a = build_mesh(9, 2, {}), b = build_mesh(24, 8, {});
  CHECK_THROWS_AS(make_level_weighting(a, b, WeightingMode::Select, 0), Error);
}

TEST_CASE("observations round-trip through CSV") {
  const Mesh finest = build_mesh(12, 4, {});
  const ObservationSet a = make_obs(finest, 1e-8, 5);
  const auto dir = std::filesystem::temp_directory_path() / "mlmcmc_test_data";
  std::filesystem::remove_all(dir);
  write_observations(a, finest, dir / "observations.csv");
  const ObservationSet b = read_observations(dir / "observations.csv");
  CHECK(b.values == a.values);
  CHECK(b.finest_edge_nodes == a.finest_edge_nodes);
  CHECK(b.fidelity == a.fidelity);
  CHECK(b.seed == a.seed);
  std::filesystem::remove_all(dir);
}
