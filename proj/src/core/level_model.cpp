#include "core/level_model.hpp"

#include "core/error.hpp"

#include <chrono>

namespace mlmcmc {

BeamLevelModel::BeamLevelModel(const KLBasis& basis, const LevelModelSpec& spec, const BeamGeometry& geom,
                               const GammaTransformParams& transform, const QoiRegion& region,
                               const ObservationSet& obs, std::shared_ptr<const Mesh> finest)
    : spec_(spec), geom_(geom), transform_(transform), finest_(std::move(finest)) {
  geom_.validate();
  transform_.validate();
  if (spec_.kl_truncation < 1 || spec_.kl_truncation > basis.truncation) {
    fail(ErrorCode::Config, "level " + std::to_string(spec_.level) + ": KL truncation exceeds the basis size");
  }
  if (!(spec_.fidelity > 0.0)) fail(ErrorCode::Config, "level fidelity must be positive");
  if (finest_ == nullptr) fail(ErrorCode::InvalidArgument, "level model needs the finest mesh");
  if (obs.nx != finest_->nx || obs.ny != finest_->ny || obs.values.size() != 2 * finest_->edge_node_ids.size()) {
    fail(ErrorCode::Config, "observations do not match the finest mesh");
  }

  same_as_finest_ = spec_.nx == finest_->nx && spec_.ny == finest_->ny;
  mesh_ = same_as_finest_ ? finest_ : std::make_shared<const Mesh>(build_mesh(spec_.nx, spec_.ny, geom_));

  const std::vector<Point2> centroids = mesh_->unit_square_centroids();
  modes_ = basis.scaled_modes_at(centroids, spec_.kl_truncation);
  mean_ = basis.mean;
  qoi_elements_ = qoi_region_elements(*mesh_, region);
  if (qoi_elements_.empty()) fail(ErrorCode::Config, "QoI region contains no element centroid");

  on_finest_ = spec_.treatment == DataTreatment::LevelIndependent || same_as_finest_;
  if (on_finest_) {
    obs_level_ = obs.values;
    n_obs_ = finest_->edge_node_ids.size();
  } else {
    const LevelWeighting w = make_level_weighting(*mesh_, *finest_, spec_.weighting, spec_.level);
    obs_level_ = restrict_observations(obs.values, w);
    n_obs_ = w.coarse_count();
  }
}

void BeamLevelModel::gaussian_field_into(std::span<const double> coefficients, std::span<double> out) const {
  require(coefficients.size() >= static_cast<std::size_t>(spec_.kl_truncation),
          "level model: too few coefficients");
  require(out.size() == static_cast<std::size_t>(modes_.rows()), "level model: output size mismatch");
  Eigen::Map<const Eigen::VectorXd> c(coefficients.data(), spec_.kl_truncation);
  Eigen::Map<Eigen::VectorXd> g(out.data(), static_cast<Eigen::Index>(out.size()));
  g.noalias() = modes_ * c;
  if (mean_ != 0.0) g.array() += mean_;
}

void BeamLevelModel::stiffness_into(std::span<const double> coefficients, std::span<double> out) const {
  gaussian_field_into(coefficients, out);
  transform_field_into(out, transform_, out);
}

std::vector<double> BeamLevelModel::stiffness(std::span<const double> coefficients) const {
  std::vector<double> out(static_cast<std::size_t>(mesh_->element_count()));
  stiffness_into(coefficients, out);
  return out;
}

double BeamLevelModel::qoi_of_field(std::span<const double> stiffness) const {
  double sum = 0.0;
  for (int e : qoi_elements_) sum += stiffness[e];
  return sum / static_cast<double>(qoi_elements_.size());
}

double BeamLevelModel::qoi(std::span<const double> coefficients) const { return qoi_of_field(stiffness(coefficients)); }

double BeamLevelModel::log_likelihood_of(std::span<const double> displacement, std::vector<double>& model_obs,
                                         std::vector<double>& scratch) const {
  model_obs.resize(obs_level_.size());
  if (on_finest_ && !same_as_finest_) {
    scratch.resize(2 * static_cast<std::size_t>(finest_->node_count()));
    prolongate_into(*mesh_, displacement, *finest_, scratch);
    observe_edges_into(*finest_, scratch, model_obs);
  } else {
    observe_edges_into(*mesh_, displacement, model_obs);
  }
  return log_likelihood_level(obs_level_, model_obs, n_obs_, spec_.fidelity);
}

BeamLevelEvaluator::BeamLevelEvaluator(std::shared_ptr<const BeamLevelModel> model)
    : model_(std::move(model)), solver_(model_->mesh_ptr(), model_->geometry()) {
  stiffness_.resize(static_cast<std::size_t>(model_->mesh().element_count()));
  displacement_.resize(2 * static_cast<std::size_t>(model_->mesh().node_count()));
}

Evaluation BeamLevelEvaluator::evaluate(std::span<const double> coefficients) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  model_->stiffness_into(coefficients, stiffness_);
  Evaluation e;
  e.qoi = model_->qoi_of_field(stiffness_);
  const auto t1 = clock::now();
  solver_.solve_into(stiffness_, displacement_);
  const auto t2 = clock::now();
  e.log_likelihood = model_->log_likelihood_of(displacement_, model_obs_, scratch_);
  const auto t3 = clock::now();
  timings_.field_seconds += std::chrono::duration<double>(t1 - t0).count();
  timings_.solve_seconds += std::chrono::duration<double>(t2 - t1).count();
  timings_.likelihood_seconds += std::chrono::duration<double>(t3 - t2).count();
  ++timings_.evaluations;
  return e;
}

std::vector<std::shared_ptr<const BeamLevelModel>> build_level_models(
    const KLBasis& basis, const std::vector<LevelModelSpec>& specs, const BeamGeometry& geom,
    const GammaTransformParams& transform, const QoiRegion& region, const ObservationSet& obs) {
  if (specs.empty()) fail(ErrorCode::Config, "no levels configured");
  const LevelModelSpec& last = specs.back();
  auto finest = std::make_shared<const Mesh>(build_mesh(last.nx, last.ny, geom));
  std::vector<std::shared_ptr<const BeamLevelModel>> out;
  for (const LevelModelSpec& s : specs) {
    out.push_back(std::make_shared<const BeamLevelModel>(basis, s, geom, transform, region, obs, finest));
  }
  return out;
}

}  // namespace mlmcmc
