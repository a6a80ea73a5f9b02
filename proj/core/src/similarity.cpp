#include "fedac/similarity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "fedac/errors.hpp"

namespace fedac {

ReductionMap update_map(std::span<const ParamVector> models, int target_dim) {
  const int n = static_cast<int>(models.size());
  if (n < 2) throw insufficient_data_error("update_map: need at least 2 models");
  if (target_dim < 1) throw config_error("update_map: target dimension must be positive");
  const std::size_t dim = models[0].size();
  for (const ParamVector& m : models)
    if (m.size() != dim) throw shape_error("update_map: models differ in length");

  ReductionMap map;
  map.mean.assign(dim, 0.0);
  for (const ParamVector& m : models)
    for (std::size_t j = 0; j < dim; ++j) map.mean[j] += m.values[j];
  for (double& v : map.mean) v /= n;

  // Centered stack X is n x dim with n << dim; eigendecompose the n x n Gram
  // matrix X X^T instead of the dim x dim covariance.
  Eigen::MatrixXd centered(n, dim);
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      centered(i, j) = models[i].values[j] - map.mean[j];
  Eigen::MatrixXd gram = centered * centered.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw numeric_error("update_map: eigensolver failed");
  const Eigen::VectorXd& eigenvalues = solver.eigenvalues();  // ascending
  const double max_ev = eigenvalues(n - 1);
  const double rank_tol = 1e-12 * std::max(max_ev, 0.0);

  int budget = std::min(target_dim, n - 1);
  if (static_cast<std::size_t>(budget) > dim) budget = static_cast<int>(dim);
  std::vector<int> kept;
  for (int e = n - 1; e >= 0 && static_cast<int>(kept.size()) < budget; --e) {
    if (eigenvalues(e) > rank_tol && eigenvalues(e) > 0.0) kept.push_back(e);
  }

  map.matrix = RealMatrix(static_cast<int>(kept.size()), static_cast<int>(dim));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    // Principal direction: X^T u / sqrt(lambda), renormalized for safety.
    Eigen::VectorXd direction = centered.transpose() * solver.eigenvectors().col(kept[r]);
    const double norm = direction.norm();
    if (norm < 1e-300) throw numeric_error("update_map: zero principal direction");
    direction /= norm;

    int peak = 0;
    for (int j = 1; j < direction.size(); ++j)
      if (std::abs(direction(j)) > std::abs(direction(peak))) peak = j;
    if (direction(peak) < 0.0) direction = -direction;

    double* row = map.matrix.values.data() + r * dim;
    for (std::size_t j = 0; j < dim; ++j) row[j] = direction(static_cast<int>(j));
  }
  return map;
}

std::vector<double> reduce(const ParamVector& model, const ReductionMap& map) {
  if (static_cast<int>(model.size()) != map.model_dim())
    throw shape_error("reduce: model length " + std::to_string(model.size()) +
                      " != map width " + std::to_string(map.model_dim()));
  std::vector<double> out(map.reduced_dim(), 0.0);
  for (int r = 0; r < map.reduced_dim(); ++r) {
    const double* row = map.matrix.values.data() + static_cast<std::size_t>(r) * map.model_dim();
    double acc = 0.0;
    for (int j = 0; j < map.model_dim(); ++j) acc += row[j] * (model.values[j] - map.mean[j]);
    out[r] = acc;
  }
  return out;
}

double lrcos(const ParamVector& a, const ParamVector& b, const ReductionMap& map,
             bool* degenerate) {
  if (degenerate) *degenerate = false;
  auto ra = reduce(a, map);
  auto rb = reduce(b, map);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    dot += ra[i] * rb[i];
    na += ra[i] * ra[i];
    nb += rb[i] * rb[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double l2_distance_squared(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw shape_error("l2_distance_squared: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a.values[i] - b.values[i];
    acc += diff * diff;
  }
  return acc;
}

SimilarityMatrix similarity_matrix(std::span<const ParamVector> row_models,
                                   std::span<const ParamVector> col_models,
                                   const ReductionMap& map, int round) {
  SimilarityMatrix sim;
  sim.round = round;
  sim.values = RealMatrix(static_cast<int>(row_models.size()), static_cast<int>(col_models.size()));

  std::vector<std::vector<double>> reduced_rows, reduced_cols;
  reduced_rows.reserve(row_models.size());
  for (const ParamVector& m : row_models) reduced_rows.push_back(reduce(m, map));
  reduced_cols.reserve(col_models.size());
  for (const ParamVector& m : col_models) reduced_cols.push_back(reduce(m, map));

  auto norm_of = [](const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
  };
  std::vector<double> row_norms, col_norms;
  for (const auto& v : reduced_rows) row_norms.push_back(norm_of(v));
  for (const auto& v : reduced_cols) col_norms.push_back(norm_of(v));

  for (int i = 0; i < sim.values.rows; ++i) {
    for (int j = 0; j < sim.values.cols; ++j) {
      if (row_norms[i] < 1e-12 || col_norms[j] < 1e-12) {
        sim.values.at(i, j) = 0.0;
        continue;
      }
      double dot = 0.0;
      for (std::size_t k = 0; k < reduced_rows[i].size(); ++k)
        dot += reduced_rows[i][k] * reduced_cols[j][k];
      sim.values.at(i, j) = std::clamp(dot / (row_norms[i] * col_norms[j]), -1.0, 1.0);
    }
  }
  return sim;
}

}  // namespace fedac
