#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedac/clustering.hpp"
#include "fedac/data.hpp"
#include "fedac/nn.hpp"
#include "fedac/similarity.hpp"

namespace fedac {

enum class Mode { kFedac, kFedavg, kFesemShared, kClusterOnly, kGlobalOnly };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

/// Experiment hyperparameters. Modes adjust the effective values:
/// cluster_only zeroes lambda, global_only zeroes mu, fedavg zeroes both and
/// pins a single cluster whose center every sampled client adopts.
struct RunConfig {
  Mode mode = Mode::kFedac;
  int rounds = 0;
  std::uint64_t seed = 0;
  double eta = 0.01;
  double mu = 0.1;
  double lambda = 0.1;
  int k_init = 1;
  int reduction_dim = 10;
  double cnt_lower = 0.2;
  double cnt_upper = 0.8;
  double sample_fraction = 0.25;
  int local_epochs = 5;
  int batch_size = 32;
  int map_refresh_period = 100;
  int cnt_period = 10;
  int threads = 1;
  std::vector<int> hidden_sizes{32};
  Activation activation = Activation::kRelu;

  void validate(int client_count) const;
};

struct ClientState {
  int client_id = 0;
  ParamVector params;
  ClientPartition partition;
};

struct ServerState {
  int round = 0;
  std::vector<double> global_embedding;  // Phi, embedding slice
  ClusterSet clusters;
  Assignment assignment;
  ReductionMap map;
};

struct MetricsRecord {
  int round = 0;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  double mean_loss = 0.0;
  int cluster_count = 1;
  double gc_mean = 0.0;
  double gc_std = 0.0;
  double ari = 0.0;  // nan without ground truth
};

struct TraceRow {
  int round = 0;
  int cluster_count = 1;
  int cluster = 0;
  double dist_intra = 0.0;
  double dist_inter = 0.0;
  double g_c = 0.0;
  int member_count = 0;
};

struct ExperimentSetup {
  Dataset dataset;
  std::vector<ClientPartition> partitions;
  std::optional<GroundTruthGrouping> grouping;
};

struct ExperimentResult {
  std::vector<MetricsRecord> metrics;
  std::vector<TraceRow> trace;
  ServerState server;
  std::vector<ClientState> clients;
  MlpSpec spec;
};

/// The model architecture implied by data dimensions and config.
MlpSpec build_spec(const RunConfig& config, const Dataset& dataset);

/// One client's round: local_epochs batches, each followed by the
/// regularized step against the fixed center and global embedding. An empty
/// train set leaves the client untouched (warning on stderr).
ClientState local_update(const ClientState& client, const ParamVector& center,
                         std::span<const double> global_embedding, const RunConfig& config,
                         const Dataset& dataset, const MlpSpec& spec, Rng& rng);

/// Unweighted mean of the clients' embedding slices.
std::vector<double> aggregate_global_embedding(std::span<const ClientState> clients);
std::vector<double> aggregate_global_embedding(std::span<const ClientState> clients,
                                               std::span<const int> subset);

/// Initial server and client state: shared seeded init, then (except for
/// fedavg) one unregularized warm-up pass, map fit, centers seeded from
/// k_init distinct client models, and one assign/mean pass.
std::pair<ServerState, std::vector<ClientState>> initialize(const RunConfig& config,
                                                            const ExperimentSetup& setup,
                                                            const MlpSpec& spec);

struct RoundOutput {
  MetricsRecord metrics;
  std::vector<TraceRow> trace_rows;
};

/// Advances one round in place: sample, parallel local updates, embedding
/// aggregation, periodic map refresh, assign/mean pass, periodic cluster
/// number tuning, evaluation.
RoundOutput run_round(ServerState& state, std::vector<ClientState>& clients,
                      const RunConfig& config, const ExperimentSetup& setup, const MlpSpec& spec);

/// Per-client top-1 accuracy on the client's own test split (fesem_shared
/// scores the cluster center instead of the personal model) and mean train
/// cross-entropy; std is the population standard deviation.
MetricsRecord evaluate(const std::vector<ClientState>& clients, const ServerState& state,
                       const RunConfig& config, const ExperimentSetup& setup, const MlpSpec& spec);

ExperimentResult run_experiment(const RunConfig& config, const ExperimentSetup& setup);

/// Header: round,mean_acc,std_acc,mean_loss,K,gc_mean,gc_std,ari
void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> metrics);
/// Header: round,K,cluster,dist_intra,dist_inter,g_c,member_count
void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows);

}  // namespace fedac
