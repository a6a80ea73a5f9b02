#include "fedac/engine.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "fedac/csv.hpp"
#include "fedac/errors.hpp"

namespace fedac {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

/// Runs fn(0..n-1) on up to `threads` workers; any index may run on any
/// worker, so fn must not depend on execution order.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const int workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex error_lock;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_lock);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Mode overrides on top of the configured strengths.
RunConfig effective_config(const RunConfig& config) {
  RunConfig eff = config;
  switch (config.mode) {
    case Mode::kClusterOnly:
      eff.lambda = 0.0;
      break;
    case Mode::kGlobalOnly:
      eff.mu = 0.0;
      break;
    case Mode::kFedavg:
      eff.mu = 0.0;
      eff.lambda = 0.0;
      break;
    default:
      break;
  }
  return eff;
}

bool adopts_center(Mode mode) { return mode == Mode::kFedavg || mode == Mode::kFesemShared; }

std::vector<ParamVector> collect_models(const std::vector<ClientState>& clients) {
  std::vector<ParamVector> models;
  models.reserve(clients.size());
  for (const ClientState& c : clients) models.push_back(c.params);
  return models;
}

int sampled_count(double fraction, int m) {
  const int want = static_cast<int>(std::ceil(fraction * m - 1e-9));
  return std::clamp(want, 1, m);
}

}  // namespace

Mode parse_mode(const std::string& name) {
  if (name == "fedac") return Mode::kFedac;
  if (name == "fedavg") return Mode::kFedavg;
  if (name == "fesem_shared") return Mode::kFesemShared;
  if (name == "cluster_only") return Mode::kClusterOnly;
  if (name == "global_only") return Mode::kGlobalOnly;
  throw config_error("unknown mode '" + name + "'");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::kFedac: return "fedac";
    case Mode::kFedavg: return "fedavg";
    case Mode::kFesemShared: return "fesem_shared";
    case Mode::kClusterOnly: return "cluster_only";
    case Mode::kGlobalOnly: return "global_only";
  }
  throw config_error("invalid mode value");
}

void RunConfig::validate(int client_count) const {
  if (rounds < 0) throw config_error("rounds must be >= 0");
  if (!(eta > 0.0)) throw config_error("eta must be positive");
  if (mu < 0.0 || lambda < 0.0) throw config_error("mu and lambda must be non-negative");
  if (k_init < 1 || k_init > client_count)
    throw config_error("k_init must be in [1, client count]");
  if (reduction_dim < 1) throw config_error("reduction_dim must be >= 1");
  if (!(cnt_lower > 0.0) || !(cnt_lower < cnt_upper))
    throw config_error("need 0 < cnt_lower < cnt_upper");
  if (!(sample_fraction > 0.0) || sample_fraction > 1.0)
    throw config_error("sample_fraction must be in (0, 1]");
  if (local_epochs < 1) throw config_error("local_epochs must be >= 1");
  if (batch_size < 1) throw config_error("batch_size must be >= 1");
  if (map_refresh_period < 1) throw config_error("map_refresh_period must be >= 1");
  if (cnt_period < 1) throw config_error("cnt_period must be >= 1");
  if (threads < 1) throw config_error("threads must be >= 1");
  if (hidden_sizes.empty()) throw config_error("need at least one hidden layer");
  for (int h : hidden_sizes)
    if (h < 1) throw config_error("hidden layer sizes must be positive");
}

MlpSpec build_spec(const RunConfig& config, const Dataset& dataset) {
  MlpSpec spec;
  spec.layer_sizes.push_back(dataset.dim());
  spec.layer_sizes.insert(spec.layer_sizes.end(), config.hidden_sizes.begin(),
                          config.hidden_sizes.end());
  spec.layer_sizes.push_back(dataset.class_count);
  spec.activation = config.activation;
  spec.validate();
  return spec;
}

ClientState local_update(const ClientState& client, const ParamVector& center,
                         std::span<const double> global_embedding, const RunConfig& config,
                         const Dataset& dataset, const MlpSpec& spec, Rng& rng) {
  ClientState out = client;
  const std::vector<int>& train = client.partition.train_indices;
  if (train.empty()) {
    std::cerr << "warning: client " << client.client_id << " has no training data, skipped\n";
    return out;
  }
  if (adopts_center(config.mode)) out.params = center;

  const int dim = dataset.dim();
  const int batch_rows = std::min<int>(config.batch_size, static_cast<int>(train.size()));
  Batch batch;
  batch.features = RealMatrix(batch_rows, dim);
  batch.labels.resize(batch_rows);

  for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
    auto positions = sample_without_replacement(static_cast<int>(train.size()), batch_rows, rng);
    for (int r = 0; r < batch_rows; ++r) {
      const int idx = train[positions[r]];
      auto src = dataset.features.row(idx);
      std::copy(src.begin(), src.end(), batch.features.row(r).begin());
      batch.labels[r] = dataset.labels[idx];
    }
    LossAndGrad lg = loss_and_grad(spec, out.params, batch);
    out.params = regularized_step(out.params, lg.grad, center, global_embedding, config.eta,
                                  config.mu, config.lambda);
  }
  return out;
}

std::vector<double> aggregate_global_embedding(std::span<const ClientState> clients) {
  std::vector<int> all(clients.size());
  for (std::size_t i = 0; i < clients.size(); ++i) all[i] = static_cast<int>(i);
  return aggregate_global_embedding(clients, all);
}

std::vector<double> aggregate_global_embedding(std::span<const ClientState> clients,
                                               std::span<const int> subset) {
  if (subset.empty()) throw state_error("aggregate_global_embedding: no clients");
  const std::size_t split = clients[subset[0]].params.split_index;
  std::vector<double> mean(split, 0.0);
  for (int idx : subset) {
    auto emb = clients[idx].params.embedding();
    if (emb.size() != split) throw shape_error("aggregate_global_embedding: split mismatch");
    for (std::size_t j = 0; j < split; ++j) mean[j] += emb[j];
  }
  for (double& v : mean) v /= static_cast<double>(subset.size());
  return mean;
}

std::pair<ServerState, std::vector<ClientState>> initialize(const RunConfig& config,
                                                            const ExperimentSetup& setup,
                                                            const MlpSpec& spec) {
  const int m = static_cast<int>(setup.partitions.size());
  if (m < 1) throw config_error("initialize: no client partitions");
  config.validate(m);
  setup.dataset.validate();

  Rng init_rng = derive_stream(config.seed, "init");
  ParamVector w0 = init_params(spec, init_rng);

  std::vector<ClientState> clients;
  clients.reserve(m);
  for (int i = 0; i < m; ++i) clients.push_back({i, w0, setup.partitions[i]});

  ServerState state;
  state.round = 0;

  if (config.mode == Mode::kFedavg) {
    state.clusters.centers = {w0};
    state.clusters.member_counts = {m};
    state.assignment.cluster_of.assign(m, 0);
    state.assignment.cluster_count = 1;
    state.global_embedding.assign(w0.embedding().begin(), w0.embedding().end());
    return {std::move(state), std::move(clients)};
  }

  // Unregularized warm-up so client models differentiate before the first
  // map fit and center seeding.
  RunConfig warm = effective_config(config);
  warm.mu = 0.0;
  warm.lambda = 0.0;
  parallel_for(clients.size(), config.threads, [&](std::size_t i) {
    Rng rng = derive_stream(config.seed, "warmup", static_cast<std::uint64_t>(i));
    clients[i] = local_update(clients[i], w0, {}, warm, setup.dataset, spec, rng);
  });

  std::vector<ParamVector> models = collect_models(clients);
  state.map = update_map(models, config.reduction_dim);
  state.map.created_round = 0;
  state.global_embedding = aggregate_global_embedding(clients);

  Rng center_rng = derive_stream(config.seed, "center_init");
  std::vector<int> picks = sample_without_replacement(m, config.k_init, center_rng);
  std::sort(picks.begin(), picks.end());
  ClusterSet provisional;
  for (int idx : picks) provisional.centers.push_back(models[idx]);
  provisional.member_counts.assign(config.k_init, 0);

  state.assignment = e_step(models, provisional, state.map);
  state.clusters = m_step(models, state.assignment, provisional);
  return {std::move(state), std::move(clients)};
}

MetricsRecord evaluate(const std::vector<ClientState>& clients, const ServerState& state,
                       const RunConfig& config, const ExperimentSetup& setup, const MlpSpec& spec) {
  const int m = static_cast<int>(clients.size());
  MetricsRecord rec;
  rec.round = state.round;
  rec.cluster_count = state.assignment.cluster_count;
  rec.gc_mean = kNan;
  rec.gc_std = kNan;

  std::vector<double> accuracies(m, 0.0);
  double loss_sum = 0.0;
  for (int i = 0; i < m; ++i) {
    const ParamVector& model =
        config.mode == Mode::kFesemShared
            ? state.clusters.centers[state.assignment.cluster_of[i]]
            : clients[i].params;
    const ClientPartition& part = clients[i].partition;
    if (part.test_indices.empty()) throw state_error("evaluate: empty test set");

    const int dim = setup.dataset.dim();
    RealMatrix features(static_cast<int>(part.test_indices.size()), dim);
    for (std::size_t r = 0; r < part.test_indices.size(); ++r) {
      auto src = setup.dataset.features.row(part.test_indices[r]);
      std::copy(src.begin(), src.end(), features.row(static_cast<int>(r)).begin());
    }
    RealMatrix probs = forward(spec, model, features);
    int correct = 0;
    for (int r = 0; r < probs.rows; ++r) {
      int best = 0;
      for (int c = 1; c < probs.cols; ++c)
        if (probs.at(r, c) > probs.at(r, best)) best = c;
      if (best == setup.dataset.labels[part.test_indices[r]]) ++correct;
    }
    accuracies[i] = static_cast<double>(correct) / probs.rows;

    Batch train_batch;
    train_batch.features = RealMatrix(static_cast<int>(part.train_indices.size()), dim);
    train_batch.labels.resize(part.train_indices.size());
    for (std::size_t r = 0; r < part.train_indices.size(); ++r) {
      auto src = setup.dataset.features.row(part.train_indices[r]);
      std::copy(src.begin(), src.end(), train_batch.features.row(static_cast<int>(r)).begin());
      train_batch.labels[r] = setup.dataset.labels[part.train_indices[r]];
    }
    loss_sum += loss_and_grad(spec, model, train_batch).loss;
  }

  double mean = 0.0;
  for (double a : accuracies) mean += a;
  mean /= m;
  double var = 0.0;
  for (double a : accuracies) var += (a - mean) * (a - mean);
  rec.mean_acc = mean;
  rec.std_acc = std::sqrt(var / m);
  rec.mean_loss = loss_sum / m;
  rec.ari = setup.grouping ? adjusted_rand_index(state.assignment, *setup.grouping) : kNan;
  return rec;
}

RoundOutput run_round(ServerState& state, std::vector<ClientState>& clients,
                      const RunConfig& config, const ExperimentSetup& setup, const MlpSpec& spec) {
  const int m = static_cast<int>(clients.size());
  const int t = state.round;
  const RunConfig eff = effective_config(config);

  Rng sample_rng = derive_stream(config.seed, "sample", static_cast<std::uint64_t>(t));
  std::vector<int> sampled =
      sample_without_replacement(m, sampled_count(config.sample_fraction, m), sample_rng);
  std::sort(sampled.begin(), sampled.end());

  // Anchors are frozen at round start; updates for distinct clients are
  // independent and may run on any worker.
  const std::vector<double> phi = state.global_embedding;
  parallel_for(sampled.size(), config.threads, [&](std::size_t j) {
    const int i = sampled[j];
    const ParamVector& center = state.clusters.centers[state.assignment.cluster_of[i]];
    Rng rng = derive_stream(config.seed, "local", static_cast<std::uint64_t>(t),
                            static_cast<std::uint64_t>(i));
    clients[i] = local_update(clients[i], center, phi, eff, setup.dataset, spec, rng);
  });

  state.global_embedding = aggregate_global_embedding(clients, sampled);

  RoundOutput out;
  if (config.mode == Mode::kFedavg) {
    ParamVector mean(std::vector<double>(clients[0].params.size(), 0.0),
                     clients[0].params.split_index);
    for (int i : sampled)
      for (std::size_t j = 0; j < mean.size(); ++j) mean.values[j] += clients[i].params.values[j];
    for (double& v : mean.values) v /= static_cast<double>(sampled.size());
    state.clusters.centers[0] = std::move(mean);
    state.clusters.member_counts = {m};

    out.metrics = evaluate(clients, state, config, setup, spec);
    state.round += 1;
    return out;
  }

  std::vector<ParamVector> models = collect_models(clients);
  if (t % config.map_refresh_period == 0) {
    state.map = update_map(models, config.reduction_dim);
    state.map.created_round = t;
  }
  state.assignment = e_step(models, state.clusters, state.map);
  state.clusters = m_step(models, state.assignment, state.clusters);

  // Cluster tuning waits for one reduction-map refresh so early transients
  // do not trigger spurious splits.
  if (t >= config.map_refresh_period && t % config.cnt_period == 0) {
    CntResult tuned = cnt(models, state.assignment, state.clusters, config.cnt_lower,
                          config.cnt_upper, state.map);
    state.assignment = std::move(tuned.assignment);
    state.clusters = std::move(tuned.clusters);
  }

  out.metrics = evaluate(clients, state, config, setup, spec);

  GranularityReport report = granularity(models, state.assignment, state.clusters);
  const std::vector<int> counts = state.assignment.member_counts();
  for (int k = 0; k < state.clusters.cluster_count(); ++k) {
    const auto& entry = report.per_cluster[k];
    out.trace_rows.push_back({t, state.clusters.cluster_count(), k, entry.dist_intra,
                              report.inter_defined ? entry.dist_inter : kNan,
                              report.inter_defined ? entry.g_c : kNan, counts[k]});
  }
  if (report.inter_defined) {
    double mean = 0.0;
    for (const auto& e : report.per_cluster) mean += e.g_c;
    mean /= report.per_cluster.size();
    double var = 0.0;
    for (const auto& e : report.per_cluster) var += (e.g_c - mean) * (e.g_c - mean);
    out.metrics.gc_mean = mean;
    out.metrics.gc_std = std::sqrt(var / report.per_cluster.size());
  }

  state.round += 1;
  return out;
}

ExperimentResult run_experiment(const RunConfig& config, const ExperimentSetup& setup) {
  ExperimentResult result;
  result.spec = build_spec(config, setup.dataset);
  auto [server, clients] = initialize(config, setup, result.spec);
  result.server = std::move(server);
  result.clients = std::move(clients);

  for (int t = 0; t < config.rounds; ++t) {
    RoundOutput out = run_round(result.server, result.clients, config, setup, result.spec);
    result.metrics.push_back(out.metrics);
    result.trace.insert(result.trace.end(), out.trace_rows.begin(), out.trace_rows.end());
  }
  return result;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> metrics) {
  out << "round,mean_acc,std_acc,mean_loss,K,gc_mean,gc_std,ari\n";
  for (const MetricsRecord& r : metrics) {
    out << r.round << ',' << csv_double(r.mean_acc) << ',' << csv_double(r.std_acc) << ','
        << csv_double(r.mean_loss) << ',' << r.cluster_count << ',' << csv_double(r.gc_mean) << ','
        << csv_double(r.gc_std) << ',' << csv_double(r.ari) << "\n";
  }
}

void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows) {
  out << "round,K,cluster,dist_intra,dist_inter,g_c,member_count\n";
  for (const TraceRow& r : rows) {
    out << r.round << ',' << r.cluster_count << ',' << r.cluster << ','
        << csv_double(r.dist_intra) << ',' << csv_double(r.dist_inter) << ','
        << csv_double(r.g_c) << ',' << r.member_count << "\n";
  }
}

}  // namespace fedac
