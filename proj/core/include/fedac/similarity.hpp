#pragma once

#include <span>
#include <vector>

#include "fedac/matrix.hpp"
#include "fedac/nn.hpp"

namespace fedac {

/// PCA projection fitted to a stack of models: rows are orthonormal principal
/// directions of the centered stack. Fitted sparsely (every refresh period),
/// then reused between refreshes.
struct ReductionMap {
  RealMatrix matrix;         // D' x dim
  std::vector<double> mean;  // dim, centering offset
  int created_round = 0;

  int reduced_dim() const { return matrix.rows; }
  int model_dim() const { return matrix.cols; }
};

/// Client-by-center (or client-by-client) low-rank cosine similarities.
struct SimilarityMatrix {
  RealMatrix values;
  int round = 0;
};

/// Fits the top principal directions of the model stack via the small
/// count-by-count Gram matrix. The effective dimension is
/// min(target_dim, count - 1, dim, numerical rank); each row's
/// largest-magnitude entry is made positive so the map is deterministic.
ReductionMap update_map(std::span<const ParamVector> models, int target_dim);

/// Cosine of the two models after centering and projection. A reduced vector
/// with norm below 1e-12 makes the result 0 and sets *degenerate.
double lrcos(const ParamVector& a, const ParamVector& b, const ReductionMap& map,
             bool* degenerate = nullptr);

/// Squared Euclidean distance between flat parameter vectors.
double l2_distance_squared(const ParamVector& a, const ParamVector& b);

/// Pairwise lrcos of row models against column models.
SimilarityMatrix similarity_matrix(std::span<const ParamVector> row_models,
                                   std::span<const ParamVector> col_models,
                                   const ReductionMap& map, int round);

/// Projects a model through the map: M * (x - mean).
std::vector<double> reduce(const ParamVector& model, const ReductionMap& map);

}  // namespace fedac
