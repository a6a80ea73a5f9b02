#include "fedac/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedac/errors.hpp"

namespace fedac {

std::vector<int> Assignment::member_counts() const {
  std::vector<int> counts(cluster_count, 0);
  for (int k : cluster_of) counts[k] += 1;
  return counts;
}

RealMatrix Assignment::matrix() const {
  RealMatrix m(client_count(), cluster_count);
  for (int i = 0; i < client_count(); ++i) m.at(i, cluster_of[i]) = 1.0;
  return m;
}

void Assignment::validate() const {
  if (cluster_count < 1) throw state_error("Assignment: cluster count must be >= 1");
  for (int k : cluster_of)
    if (k < 0 || k >= cluster_count) throw state_error("Assignment: label out of range");
}

Assignment e_step(std::span<const ParamVector> client_models, const ClusterSet& clusters,
                  const ReductionMap& map) {
  if (clusters.cluster_count() == 0) throw state_error("e_step: no clusters");
  SimilarityMatrix sim = similarity_matrix(client_models, clusters.centers, map, 0);
  Assignment out;
  out.cluster_count = clusters.cluster_count();
  out.cluster_of.resize(client_models.size());
  for (int i = 0; i < sim.values.rows; ++i) {
    int best = 0;
    for (int k = 1; k < sim.values.cols; ++k)
      if (sim.values.at(i, k) > sim.values.at(i, best)) best = k;
    out.cluster_of[i] = best;
  }
  return out;
}

ClusterSet m_step(std::span<const ParamVector> client_models, const Assignment& assignment,
                  const ClusterSet& previous) {
  assignment.validate();
  if (assignment.client_count() != static_cast<int>(client_models.size()))
    throw shape_error("m_step: assignment size != model count");
  if (previous.cluster_count() != assignment.cluster_count)
    throw shape_error("m_step: cluster count mismatch with previous set");

  ClusterSet out;
  out.member_counts = assignment.member_counts();
  out.centers.resize(assignment.cluster_count);
  for (int k = 0; k < assignment.cluster_count; ++k) {
    if (out.member_counts[k] == 0) {
      out.centers[k] = previous.centers[k];
      continue;
    }
    ParamVector mean(std::vector<double>(client_models[0].size(), 0.0),
                     client_models[0].split_index);
    for (int i = 0; i < assignment.client_count(); ++i) {
      if (assignment.cluster_of[i] != k) continue;
      for (std::size_t j = 0; j < mean.size(); ++j) mean.values[j] += client_models[i].values[j];
    }
    for (double& v : mean.values) v /= out.member_counts[k];
    out.centers[k] = std::move(mean);
  }
  return out;
}

GranularityReport granularity(std::span<const ParamVector> client_models,
                              const Assignment& assignment, const ClusterSet& clusters) {
  assignment.validate();
  const int k_count = clusters.cluster_count();
  GranularityReport report;
  report.inter_defined = k_count >= 2;
  report.per_cluster.resize(k_count);

  std::vector<int> counts = assignment.member_counts();
  for (int i = 0; i < assignment.client_count(); ++i) {
    const int k = assignment.cluster_of[i];
    report.per_cluster[k].dist_intra +=
        l2_distance_squared(client_models[i], clusters.centers[k]);
  }
  for (int k = 0; k < k_count; ++k)
    if (counts[k] > 0) report.per_cluster[k].dist_intra /= counts[k];

  for (int k = 0; k < k_count; ++k) {
    auto& entry = report.per_cluster[k];
    if (report.inter_defined) {
      // The j = k term is zero; the mean still divides by K - 1.
      for (int j = 0; j < k_count; ++j)
        entry.dist_inter += l2_distance_squared(clusters.centers[k], clusters.centers[j]);
      entry.dist_inter /= k_count - 1;
    }
    if (entry.dist_inter > 0.0)
      entry.g_c = entry.dist_intra / entry.dist_inter;
    else
      entry.g_c = entry.dist_intra > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  }
  return report;
}

namespace {

struct SplitOutcome {
  ParamVector first_center;
  ParamVector second_center;
  std::vector<char> in_second;  // parallel to the member list
};

/// Seeds two children with the farthest member pair, then one local
/// assign/mean pass over the members.
SplitOutcome split_cluster(std::span<const ParamVector> client_models,
                           std::span<const int> members, const ReductionMap& map) {
  int seed_a = members[0], seed_b = members[1];
  double best = -1.0;
  for (std::size_t x = 0; x < members.size(); ++x) {
    for (std::size_t y = x + 1; y < members.size(); ++y) {
      const double d = l2_distance_squared(client_models[members[x]], client_models[members[y]]);
      if (d > best) {
        best = d;
        seed_a = members[x];
        seed_b = members[y];
      }
    }
  }

  SplitOutcome out;
  out.in_second.assign(members.size(), 0);
  std::vector<double> sum_a(client_models[0].size(), 0.0), sum_b(client_models[0].size(), 0.0);
  int count_a = 0, count_b = 0;
  for (std::size_t x = 0; x < members.size(); ++x) {
    const ParamVector& model = client_models[members[x]];
    const double to_a = lrcos(model, client_models[seed_a], map);
    const double to_b = lrcos(model, client_models[seed_b], map);
    const bool second = to_b > to_a;  // ties stay with the first seed
    out.in_second[x] = second;
    auto& sum = second ? sum_b : sum_a;
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += model.values[j];
    (second ? count_b : count_a) += 1;
  }

  const std::size_t split = client_models[0].split_index;
  if (count_a > 0)
    for (double& v : sum_a) v /= count_a;
  else
    sum_a = client_models[seed_a].values;
  if (count_b > 0)
    for (double& v : sum_b) v /= count_b;
  else
    sum_b = client_models[seed_b].values;
  out.first_center = ParamVector(std::move(sum_a), split);
  out.second_center = ParamVector(std::move(sum_b), split);
  return out;
}

}  // namespace

CntResult cnt(std::span<const ParamVector> client_models, const Assignment& assignment,
              const ClusterSet& clusters, double lower, double upper, const ReductionMap& map) {
  if (!(lower > 0.0) || !(lower < upper)) throw config_error("cnt: need 0 < lower < upper");
  assignment.validate();
  const int m = assignment.client_count();
  const int k_in = clusters.cluster_count();

  GranularityReport snapshot = granularity(client_models, assignment, clusters);

  // Merge phase. A cluster that absorbed someone this call keeps its slot and
  // will not merge away itself (one merge per cluster per call).
  std::vector<char> alive(k_in, 1);
  std::vector<char> absorbed_into(k_in, 0);
  std::vector<int> redirect(k_in);
  for (int k = 0; k < k_in; ++k) redirect[k] = k;
  int alive_count = k_in;
  bool changed = false;

  if (snapshot.inter_defined) {
    for (int k = 0; k < k_in && alive_count > 1; ++k) {
      if (!alive[k] || absorbed_into[k]) continue;
      if (!(snapshot.per_cluster[k].g_c < lower)) continue;
      int target = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k_in; ++j) {
        if (j == k || !alive[j]) continue;
        const double d = l2_distance_squared(clusters.centers[k], clusters.centers[j]);
        if (d < best) {
          best = d;
          target = j;
        }
      }
      if (target < 0) continue;
      alive[k] = 0;
      redirect[k] = target;
      absorbed_into[target] = 1;
      --alive_count;
      changed = true;
    }
  }

  // Compact surviving clusters, preserving order, and remap members.
  std::vector<int> compact(k_in, -1);
  ClusterSet result;
  for (int k = 0; k < k_in; ++k) {
    if (!alive[k]) continue;
    compact[k] = result.cluster_count();
    result.centers.push_back(clusters.centers[k]);
  }
  Assignment labels;
  labels.cluster_of.resize(m);
  for (int i = 0; i < m; ++i) {
    int k = assignment.cluster_of[i];
    while (!alive[k]) k = redirect[k];
    labels.cluster_of[i] = compact[k];
  }
  labels.cluster_count = result.cluster_count();

  // Split phase, driven by the snapshot granularities of surviving clusters.
  // With a single cluster the ratio is undefined; any internal spread splits.
  for (int k = 0; k < k_in; ++k) {
    if (!alive[k]) continue;
    const auto& entry = snapshot.per_cluster[k];
    const bool wants_split =
        snapshot.inter_defined ? entry.g_c > upper : entry.dist_intra > 0.0;
    if (!wants_split) continue;
    if (labels.cluster_count >= m) break;

    const int slot = compact[k];
    std::vector<int> members;
    for (int i = 0; i < m; ++i)
      if (labels.cluster_of[i] == slot) members.push_back(i);
    if (members.size() < 2) continue;

    SplitOutcome outcome = split_cluster(client_models, members, map);
    if (std::count(outcome.in_second.begin(), outcome.in_second.end(), 1) == 0) continue;
    result.centers[slot] = std::move(outcome.first_center);
    const int new_slot = labels.cluster_count;
    result.centers.push_back(std::move(outcome.second_center));
    labels.cluster_count += 1;
    for (std::size_t x = 0; x < members.size(); ++x)
      if (outcome.in_second[x]) labels.cluster_of[members[x]] = new_slot;
    changed = true;
  }

  if (!changed) return {clusters, assignment, false};

  result.member_counts = labels.member_counts();
  Assignment final_assignment = e_step(client_models, result, map);
  ClusterSet final_clusters = m_step(client_models, final_assignment, result);
  return {std::move(final_clusters), std::move(final_assignment), true};
}

double adjusted_rand_index(const Assignment& predicted, const GroundTruthGrouping& truth) {
  const int m = predicted.client_count();
  if (m != static_cast<int>(truth.group_of_client.size()))
    throw shape_error("adjusted_rand_index: client counts differ");

  auto pairs = [](long long n) { return n * (n - 1) / 2.0; };
  const int kp = predicted.cluster_count;
  const int kt = truth.group_count;
  std::vector<long long> contingency(static_cast<std::size_t>(kp) * kt, 0);
  std::vector<long long> row_sums(kp, 0), col_sums(kt, 0);
  for (int i = 0; i < m; ++i) {
    contingency[static_cast<std::size_t>(predicted.cluster_of[i]) * kt +
                truth.group_of_client[i]] += 1;
    row_sums[predicted.cluster_of[i]] += 1;
    col_sums[truth.group_of_client[i]] += 1;
  }

  double index = 0.0;
  for (long long n : contingency) index += pairs(n);
  double sum_rows = 0.0, sum_cols = 0.0;
  for (long long n : row_sums) sum_rows += pairs(n);
  for (long long n : col_sums) sum_cols += pairs(n);
  const double total_pairs = pairs(m);
  const double expected = total_pairs > 0.0 ? sum_rows * sum_cols / total_pairs : 0.0;
  const double maximum = 0.5 * (sum_rows + sum_cols);

  const double numerator = index - expected;
  const double denominator = maximum - expected;
  if (denominator == 0.0) return numerator == 0.0 ? 1.0 : 0.0;
  return numerator / denominator;
}

}  // namespace fedac
