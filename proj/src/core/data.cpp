#include "core/data.hpp"

#include "core/error.hpp"
#include "core/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mlmcmc {

ObservationSet synthesize_observations(const Mesh& finest, const StiffnessField& truth, const BeamGeometry& geom,
                                       double fidelity, std::uint64_t seed) {
  if (!(fidelity > 0.0)) fail(ErrorCode::InvalidArgument, "synthesize_observations: fidelity must be positive");
  const DisplacementField disp = assemble_and_solve(finest, truth, geom);

  ObservationSet obs;
  obs.noiseless = observe_edges(finest, disp);
  obs.values = obs.noiseless;
  obs.finest_edge_nodes = finest.edge_node_ids;
  obs.fidelity = fidelity;
  obs.seed = seed;
  obs.nx = finest.nx;
  obs.ny = finest.ny;

  Rng rng(seed, 0, StreamTag::Noise);
  for (double& v : obs.values) v += fidelity * rng.normal();
  return obs;
}

LevelWeighting make_level_weighting(const Mesh& level_mesh, const Mesh& finest, WeightingMode mode, int level) {
  LevelWeighting w;
  w.level = level;
  w.fine_count = finest.edge_node_ids.size();

  const bool same_mesh = level_mesh.nx == finest.nx && level_mesh.ny == finest.ny;
  if (same_mesh) mode = WeightingMode::Identity;
  w.mode = mode;

  if (mode == WeightingMode::Identity) {
    require(same_mesh, "identity weighting needs the finest mesh");
    w.index_map.resize(w.fine_count);
    for (std::size_t k = 0; k < w.fine_count; ++k) w.index_map[k] = {{static_cast<int>(k), 1.0}};
    return w;
  }

  require(finest.nx % level_mesh.nx == 0 && finest.ny % level_mesh.ny == 0,
          "level weighting: meshes are not nested");
  require(level_mesh.length == finest.length && level_mesh.height == finest.height,
          "level weighting: meshes cover different rectangles");
  const int ratio = finest.nx / level_mesh.nx;
  const int fine_row = finest.nx + 1;    // edge nodes per edge on the finest mesh
  const int coarse_row = level_mesh.nx + 1;

  w.index_map.resize(level_mesh.edge_node_ids.size());
  for (int edge = 0; edge < 2; ++edge) {
    for (int k = 0; k < coarse_row; ++k) {
      auto& entry = w.index_map[edge * coarse_row + k];
      const int centre = k * ratio;
      if (mode == WeightingMode::Select) {
        entry = {{edge * fine_row + centre, 1.0}};
        continue;
      }
      double total = 0.0;
      for (int off = -(ratio - 1); off <= ratio - 1; ++off) {
        const int f = centre + off;
        if (f < 0 || f >= fine_row) continue;
        const double hat = 1.0 - std::abs(off) / static_cast<double>(ratio);
        entry.emplace_back(edge * fine_row + f, hat);
        total += hat;
      }
      for (auto& [idx, weight] : entry) weight /= total;
    }
  }
  return w;
}

std::vector<double> restrict_observations(std::span<const double> obs, const LevelWeighting& w) {
  require(obs.size() == 2 * w.fine_count, "restrict_observations: observation vector has the wrong length");
  std::vector<double> out(2 * w.index_map.size(), 0.0);
  for (std::size_t k = 0; k < w.index_map.size(); ++k) {
    double ux = 0.0, uy = 0.0;
    for (const auto& [idx, weight] : w.index_map[k]) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= w.fine_count) {
        fail(ErrorCode::InvalidArgument, "restrict_observations: index out of range");
      }
      ux += weight * obs[2 * idx];
      uy += weight * obs[2 * idx + 1];
    }
    out[2 * k] = ux;
    out[2 * k + 1] = uy;
  }
  return out;
}

double log_likelihood_level(std::span<const double> obs, std::span<const double> model, std::size_t n_obs,
                            double fidelity) {
  require(obs.size() == model.size(), "log_likelihood_level: length mismatch");
  require(n_obs > 0, "log_likelihood_level: number of observation points must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double r = obs[i] - model[i];
    sq += r * r;
  }
  return -sq / (2.0 * static_cast<double>(n_obs) * fidelity * fidelity);
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void write_observations(const ObservationSet& obs, const Mesh& finest, const std::filesystem::path& csv_path) {
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream os(csv_path);
  if (!os) fail(ErrorCode::Io, "cannot write " + csv_path.string());
  os << "node_id,x,y,u_x,u_y\n";
  char buf[256];
  for (std::size_t k = 0; k < obs.finest_edge_nodes.size(); ++k) {
    const int node = obs.finest_edge_nodes[k];
    const Point2 p = finest.node_coords[node];
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", node, p.x, p.y, obs.values[2 * k],
                  obs.values[2 * k + 1]);
    os << buf;
  }

  nlohmann::json side;
  side["seed"] = obs.seed;
  side["fidelity"] = obs.fidelity;
  side["mesh"] = {{"nx", finest.nx}, {"ny", finest.ny}, {"length", finest.length}, {"height", finest.height}};
  side["noiseless"] = obs.noiseless;
  side["truth_coefficients"] = obs.truth_coefficients;
  std::ofstream js(sidecar_path(csv_path));
  if (!js) fail(ErrorCode::Io, "cannot write observation sidecar for " + csv_path.string());
  js << side.dump(2) << '\n';
}

ObservationSet read_observations(const std::filesystem::path& csv_path) {
  std::ifstream is(csv_path);
  if (!is) fail(ErrorCode::Io, "cannot open " + csv_path.string());
  ObservationSet obs;
  std::string line;
  std::getline(is, line);
  if (line != "node_id,x,y,u_x,u_y") fail(ErrorCode::Io, "unexpected observation CSV header in " + csv_path.string());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    int node = 0;
    double x = 0, y = 0, ux = 0, uy = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &node, &x, &y, &ux, &uy) != 5) {
      fail(ErrorCode::Io, "malformed observation row: " + line);
    }
    obs.finest_edge_nodes.push_back(node);
    obs.values.push_back(ux);
    obs.values.push_back(uy);
  }
  std::ifstream js(sidecar_path(csv_path));
  if (!js) fail(ErrorCode::Io, "missing observation sidecar for " + csv_path.string());
  const nlohmann::json side = nlohmann::json::parse(js);
  obs.seed = side.at("seed").get<std::uint64_t>();
  obs.fidelity = side.at("fidelity").get<double>();
  obs.nx = side.at("mesh").at("nx").get<int>();
  obs.ny = side.at("mesh").at("ny").get<int>();
  obs.noiseless = side.value("noiseless", std::vector<double>{});
  obs.truth_coefficients = side.value("truth_coefficients", std::vector<double>{});
  return obs;
}

}  // namespace mlmcmc
