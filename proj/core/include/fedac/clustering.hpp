#pragma once

#include <span>
#include <vector>

#include "fedac/data.hpp"
#include "fedac/nn.hpp"
#include "fedac/similarity.hpp"

namespace fedac {

/// One-hot client-to-cluster map, stored as a label per client.
struct Assignment {
  std::vector<int> cluster_of;  // length m, values in [0, cluster_count)
  int cluster_count = 1;

  int client_count() const { return static_cast<int>(cluster_of.size()); }
  std::vector<int> member_counts() const;
  /// The m x K one-hot matrix form.
  RealMatrix matrix() const;
  void validate() const;

  bool operator==(const Assignment&) const = default;
};

/// Cluster centers with bookkeeping of how many clients each currently holds.
struct ClusterSet {
  std::vector<ParamVector> centers;
  std::vector<int> member_counts;

  int cluster_count() const { return static_cast<int>(centers.size()); }

  bool operator==(const ClusterSet&) const = default;
};

/// Per-cluster granularity: mean member-to-center squared distance over mean
/// center-to-center squared distance. With a single cluster the denominator
/// is undefined and only splitting is considered.
struct GranularityReport {
  struct Entry {
    double dist_intra = 0.0;
    double dist_inter = 0.0;
    double g_c = 0.0;
  };
  std::vector<Entry> per_cluster;
  bool inter_defined = true;
};

struct CntResult {
  ClusterSet clusters;
  Assignment assignment;
  bool changed = false;
};

/// Assigns every client to the center with maximal lrcos; ties go to the
/// lowest cluster index.
Assignment e_step(std::span<const ParamVector> client_models, const ClusterSet& clusters,
                  const ReductionMap& map);

/// Centers become unweighted means of their members; an empty cluster keeps
/// its previous center.
ClusterSet m_step(std::span<const ParamVector> client_models, const Assignment& assignment,
                  const ClusterSet& previous);

GranularityReport granularity(std::span<const ParamVector> client_models,
                              const Assignment& assignment, const ClusterSet& clusters);

/// Cluster number tuning: granularities are computed once on the input
/// snapshot; clusters below `lower` merge into their nearest surviving
/// neighbor, clusters above `upper` split around their two farthest members
/// (one local assign/mean pass over the affected members). Any change is
/// followed by one global e_step + m_step; an untouched state comes back
/// bit-identical. K stays within [1, m].
CntResult cnt(std::span<const ParamVector> client_models, const Assignment& assignment,
              const ClusterSet& clusters, double lower, double upper, const ReductionMap& map);

/// Chance-corrected agreement between the learned assignment and the
/// generating groups.
double adjusted_rand_index(const Assignment& predicted, const GroundTruthGrouping& truth);

}  // namespace fedac
