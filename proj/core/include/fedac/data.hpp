#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedac/matrix.hpp"
#include "fedac/rng.hpp"

namespace fedac {

/// A labeled sample pool: N rows of d features plus an integer class label each.
struct Dataset {
  RealMatrix features;      // N x d
  std::vector<int> labels;  // length N, values in [0, class_count)
  int class_count = 0;

  int size() const { return features.rows; }
  int dim() const { return features.cols; }
  void validate() const;
};

/// One client's slice of a Dataset: disjoint train/test index lists plus the
/// train-label histogram.
struct ClientPartition {
  int client_id = 0;
  std::vector<int> train_indices;
  std::vector<int> test_indices;
  std::vector<int> label_histogram;  // length class_count, counts train labels

  int train_size() const { return static_cast<int>(train_indices.size()); }
  int test_size() const { return static_cast<int>(test_indices.size()); }
};

/// Which latent group generated each client's data; acceptance oracle for
/// clustering quality.
struct GroundTruthGrouping {
  std::vector<int> group_of_client;
  int group_count = 0;
};

/// Output of the synthetic generator: one private dataset per client plus the
/// generating group of each client.
struct SyntheticTask {
  std::vector<Dataset> client_data;
  GroundTruthGrouping grouping;
};

/// A shared pool with per-client partitions, the form the engine consumes.
struct AssembledClients {
  Dataset pool;
  std::vector<ClientPartition> partitions;
};

/// Label-skewed partition: each client's class proportions are drawn from
/// Dirichlet(alpha), its total size uniformly from [size_min, size_max].
/// Per-class draws come from globally shuffled pools without replacement;
/// exhausted pools are reused across clients (never within one client, so
/// train/test stay disjoint). Each client is split 80/20 train/test.
std::vector<ClientPartition> dirichlet_partition(const Dataset& dataset, int client_count,
                                                 double alpha, int size_min, int size_max,
                                                 std::uint64_t seed);

/// Partition where every client holds samples from exactly
/// labels_per_client distinct classes, dealt from repeated random
/// permutations so all classes are covered when m*n >= C.
std::vector<ClientPartition> pathological_partition(const Dataset& dataset, int client_count,
                                                    int labels_per_client, int size_min,
                                                    int size_max, std::uint64_t seed);

/// Generates group_count distinct linear/softmax teachers, each a plane
/// rotation plus a label permutation of a shared base teacher scaled by
/// task_shift; clients in a group sample from the same teacher with label
/// noise. task_shift = 0 collapses all groups onto the base teacher.
SyntheticTask synthetic_clustered_task(int group_count, int clients_per_group, int input_dim,
                                       int class_count, double task_shift, double noise,
                                       int size_min, int size_max, std::uint64_t seed);

/// Concatenates per-client datasets into one pool and builds 80/20
/// partitions over each client's own contiguous range.
AssembledClients assemble_synthetic(const SyntheticTask& task, std::uint64_t seed);

/// Concatenates datasets; all must share dim and class count.
Dataset merge_datasets(std::span<const Dataset> parts);

/// KL(p~ || q~) in nats between epsilon-smoothed, renormalized histograms.
double label_kl(std::span<const double> p, std::span<const double> q, double epsilon = 1e-6);

/// Normalized train-label distribution of a partition.
std::vector<double> label_distribution(const ClientPartition& partition);

/// File format: header `d=<int>,C=<int>,N=<int>`, then N rows of d
/// comma-separated feature values followed by the integer label.
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// CSV with columns client_id,train_size,test_size,class_0..class_{C-1}.
void write_partition_report(std::ostream& out, std::span<const ClientPartition> partitions,
                            int class_count);

/// Reads back the histogram columns of a partition report.
std::vector<std::vector<int>> read_partition_histograms(std::istream& in);

}  // namespace fedac
