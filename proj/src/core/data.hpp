#pragma once

#include "core/fem.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace mlmcmc {

/// Noisy edge displacements on the finest mesh.
struct ObservationSet {
  std::vector<double> values;     // u_obs, length 2 N_L
  std::vector<double> noiseless;  // forward model output of the ground truth
  std::vector<int> finest_edge_nodes;
  double fidelity = 0.0;  // σ_F
  std::uint64_t seed = 0;
  int nx = 0;
  int ny = 0;
  std::vector<double> truth_coefficients;  // optional, diagnostics only

  std::size_t node_count() const { return finest_edge_nodes.size(); }
};

/// Solves the forward model for `truth` on the finest mesh and adds i.i.d.
/// N(0, σ_F²) noise to every scalar observation. Deterministic per seed.
ObservationSet synthesize_observations(const Mesh& finest, const StiffnessField& truth, const BeamGeometry& geom,
                                       double fidelity, std::uint64_t seed);

enum class WeightingMode { Select, LocalAverage, Identity };

/// Maps the finest-level observations to the edge nodes of a coarser level.
/// index_map[k] lists (fine edge index, weight) pairs for coarse edge node k;
/// both displacement components use the same weights.
struct LevelWeighting {
  WeightingMode mode = WeightingMode::Identity;
  int level = 0;
  std::size_t fine_count = 0;
  std::vector<std::vector<std::pair<int, double>>> index_map;

  std::size_t coarse_count() const { return index_map.size(); }
};

/// Builds W_ℓ for a level mesh nested in the finest mesh. Identity is forced
/// when the level mesh is the finest mesh. For LocalAverage, each coarse node
/// averages the fine nodes on the same edge within one coarse spacing using
/// normalised hat weights.
LevelWeighting make_level_weighting(const Mesh& level_mesh, const Mesh& finest, WeightingMode mode, int level);

std::vector<double> restrict_observations(std::span<const double> obs, const LevelWeighting& w);

/// -||obs - model||² / (2 N σ²). N is the number of observation points (edge
/// nodes), so the vectors hold 2N entries.
double log_likelihood_level(std::span<const double> obs, std::span<const double> model, std::size_t n_obs,
                            double fidelity);

/// CSV with columns node_id,x,y,u_x,u_y plus a JSON sidecar next to it.
void write_observations(const ObservationSet& obs, const Mesh& finest, const std::filesystem::path& csv_path);
ObservationSet read_observations(const std::filesystem::path& csv_path);

}  // namespace mlmcmc
