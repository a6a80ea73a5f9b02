#include "fedac/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "fedac/errors.hpp"

namespace fedac {

void Dataset::validate() const {
  if (features.rows <= 0) throw shape_error("Dataset: empty");
  if (static_cast<int>(labels.size()) != features.rows)
    throw shape_error("Dataset: label count != row count");
  if (class_count <= 0) throw config_error("Dataset: class count must be positive");
  for (int y : labels)
    if (y < 0 || y >= class_count) throw shape_error("Dataset: label out of range");
  for (double v : features.values)
    if (!std::isfinite(v)) throw numeric_error("Dataset: non-finite feature");
}

namespace {

struct ClassPool {
  std::vector<int> order;  // dataset indices of one class, shuffled once
  std::size_t cursor = 0;  // global without-replacement position
};

std::vector<ClassPool> build_pools(const Dataset& dataset, std::uint64_t seed,
                                   std::string_view tag) {
  std::vector<ClassPool> pools(dataset.class_count);
  for (int i = 0; i < dataset.size(); ++i) pools[dataset.labels[i]].order.push_back(i);
  for (int c = 0; c < dataset.class_count; ++c) {
    Rng rng = derive_stream(seed, tag, static_cast<std::uint64_t>(c));
    std::shuffle(pools[c].order.begin(), pools[c].order.end(), rng);
  }
  return pools;
}

/// Draws up to `count` indices of class c not yet held by this client.
/// Consumes the global cursor first; once exhausted, rescans the class for
/// indices other clients already took. Returns the shortfall.
int draw_class(ClassPool& pool, std::vector<char>& used, int count, std::vector<int>& out) {
  while (count > 0 && pool.cursor < pool.order.size()) {
    out.push_back(pool.order[pool.cursor++]);
    used[out.back()] = 1;
    --count;
  }
  for (std::size_t p = 0; count > 0 && p < pool.order.size(); ++p) {
    if (!used[pool.order[p]]) {
      out.push_back(pool.order[p]);
      used[out.back()] = 1;
      --count;
    }
  }
  return count;
}

/// Integer counts summing to total, proportional to weights
/// (largest-remainder rounding, ties toward lower index).
std::vector<int> apportion(int total, std::span<const double> weights) {
  const int c = static_cast<int>(weights.size());
  double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> counts(c, 0);
  if (sum <= 0.0) return counts;
  std::vector<std::pair<double, int>> remainders(c);
  int assigned = 0;
  for (int i = 0; i < c; ++i) {
    double share = total * weights[i] / sum;
    counts[i] = static_cast<int>(share);
    assigned += counts[i];
    remainders[i] = {share - counts[i], i};
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (int r = 0; r < total - assigned; ++r) counts[remainders[r].second] += 1;
  return counts;
}

void check_size_range(const Dataset& dataset, int size_min, int size_max) {
  if (size_min < 2 || size_min > size_max)
    throw config_error("partition: need 2 <= size_min <= size_max");
  if (size_max > dataset.size())
    throw config_error("partition: size_max " + std::to_string(size_max) +
                       " exceeds dataset size " + std::to_string(dataset.size()));
}

/// Shuffles the client's indices and splits 80/20 (at least one test sample).
ClientPartition finish_client(int client_id, std::vector<int> indices, const Dataset& dataset,
                              Rng& rng) {
  std::shuffle(indices.begin(), indices.end(), rng);
  const int n = static_cast<int>(indices.size());
  const int test = std::max(1, n / 5);
  ClientPartition part;
  part.client_id = client_id;
  part.train_indices.assign(indices.begin(), indices.end() - test);
  part.test_indices.assign(indices.end() - test, indices.end());
  part.label_histogram.assign(dataset.class_count, 0);
  for (int idx : part.train_indices) part.label_histogram[dataset.labels[idx]] += 1;
  return part;
}

/// Spill from fully consumed classes goes only to `spill_classes`, so a
/// pathological client never leaves its dealt label set; it may end smaller
/// than its drawn allocation instead.
std::vector<int> client_indices_from_counts(const std::vector<int>& counts,
                                            std::vector<ClassPool>& pools, const Dataset& dataset,
                                            std::span<const int> spill_classes) {
  const int c = dataset.class_count;
  std::vector<char> used(dataset.size(), 0);
  std::vector<int> indices;
  int shortfall = 0;
  for (int k = 0; k < c; ++k) shortfall += draw_class(pools[k], used, counts[k], indices);
  for (std::size_t s = 0; shortfall > 0 && s < spill_classes.size(); ++s)
    shortfall = draw_class(pools[spill_classes[s]], used, shortfall, indices);
  return indices;
}

}  // namespace

std::vector<ClientPartition> dirichlet_partition(const Dataset& dataset, int client_count,
                                                 double alpha, int size_min, int size_max,
                                                 std::uint64_t seed) {
  dataset.validate();
  if (alpha <= 0.0) throw config_error("dirichlet_partition: alpha must be positive");
  if (client_count < 1) throw config_error("dirichlet_partition: need at least one client");
  check_size_range(dataset, size_min, size_max);

  const int c = dataset.class_count;
  auto pools = build_pools(dataset, seed, "dirichlet/pool");
  std::vector<char> class_present(c, 0);
  for (int k = 0; k < c; ++k) class_present[k] = !pools[k].order.empty();

  std::vector<ClientPartition> parts;
  parts.reserve(client_count);
  for (int i = 0; i < client_count; ++i) {
    Rng size_rng = derive_stream(seed, "dirichlet/size", static_cast<std::uint64_t>(i));
    const int n = std::uniform_int_distribution<int>(size_min, size_max)(size_rng);

    Rng prop_rng = derive_stream(seed, "dirichlet/prop", static_cast<std::uint64_t>(i));
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> weights(c, 0.0);
    double total = 0.0;
    for (int k = 0; k < c; ++k) {
      double g = class_present[k] ? gamma(prop_rng) : 0.0;
      weights[k] = g;
      total += g;
    }
    if (total <= 0.0) {
      // Underflow at tiny alpha: fall back to a single random present class.
      std::vector<int> present;
      for (int k = 0; k < c; ++k)
        if (class_present[k]) present.push_back(k);
      weights[present[std::uniform_int_distribution<std::size_t>(0, present.size() - 1)(prop_rng)]] =
          1.0;
    }

    std::vector<int> all_classes(c);
    std::iota(all_classes.begin(), all_classes.end(), 0);
    auto indices = client_indices_from_counts(apportion(n, weights), pools, dataset, all_classes);
    Rng split_rng = derive_stream(seed, "dirichlet/split", static_cast<std::uint64_t>(i));
    parts.push_back(finish_client(i, std::move(indices), dataset, split_rng));
  }
  return parts;
}

std::vector<ClientPartition> pathological_partition(const Dataset& dataset, int client_count,
                                                    int labels_per_client, int size_min,
                                                    int size_max, std::uint64_t seed) {
  dataset.validate();
  const int c = dataset.class_count;
  if (labels_per_client < 1 || labels_per_client > c)
    throw config_error("pathological_partition: labels_per_client must be in [1, class count]");
  if (client_count < 1) throw config_error("pathological_partition: need at least one client");
  check_size_range(dataset, size_min, size_max);

  // Deal n distinct classes per client from concatenated random permutations;
  // duplicates within a client are swapped forward, so each permutation's
  // classes all land on some client and coverage holds once m*n >= C.
  Rng deal_rng = derive_stream(seed, "pathological/classes");
  std::vector<int> sequence;
  auto extend = [&] {
    std::vector<int> perm(c);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), deal_rng);
    sequence.insert(sequence.end(), perm.begin(), perm.end());
  };
  std::size_t pos = 0;
  std::vector<std::vector<int>> client_classes(client_count);
  for (int i = 0; i < client_count; ++i) {
    auto& mine = client_classes[i];
    for (int j = 0; j < labels_per_client; ++j) {
      if (pos >= sequence.size()) extend();
      std::size_t p = pos;
      while (std::find(mine.begin(), mine.end(), sequence[p]) != mine.end()) {
        ++p;
        if (p >= sequence.size()) extend();
      }
      std::swap(sequence[pos], sequence[p]);
      mine.push_back(sequence[pos++]);
    }
  }

  auto pools = build_pools(dataset, seed, "pathological/pool");
  std::vector<ClientPartition> parts;
  parts.reserve(client_count);
  for (int i = 0; i < client_count; ++i) {
    Rng size_rng = derive_stream(seed, "pathological/size", static_cast<std::uint64_t>(i));
    const int n = std::uniform_int_distribution<int>(size_min, size_max)(size_rng);

    // Split the allocation evenly across the client's dealt classes.
    std::vector<int> counts(c, 0);
    const int base = n / labels_per_client;
    int extra = n % labels_per_client;
    for (int k : client_classes[i]) counts[k] = base + (extra-- > 0 ? 1 : 0);

    auto indices = client_indices_from_counts(counts, pools, dataset, client_classes[i]);
    Rng split_rng = derive_stream(seed, "pathological/split", static_cast<std::uint64_t>(i));
    parts.push_back(finish_client(i, std::move(indices), dataset, split_rng));
  }
  return parts;
}

namespace {

/// Applies a product of Givens rotations in disjoint coordinate planes
/// (0,1), (2,3), ...; angle magnitudes scale with task_shift.
std::vector<double> rotate(std::span<const double> x, std::span<const double> angles) {
  std::vector<double> y(x.begin(), x.end());
  for (std::size_t p = 0; p < angles.size(); ++p) {
    const double s = std::sin(angles[p]);
    const double cth = std::cos(angles[p]);
    const std::size_t i = 2 * p, j = 2 * p + 1;
    const double xi = y[i], xj = y[j];
    y[i] = cth * xi - s * xj;
    y[j] = s * xi + cth * xj;
  }
  return y;
}

}  // namespace

SyntheticTask synthetic_clustered_task(int group_count, int clients_per_group, int input_dim,
                                       int class_count, double task_shift, double noise,
                                       int size_min, int size_max, std::uint64_t seed) {
  if (group_count < 1 || clients_per_group < 1 || input_dim < 1 || class_count < 2)
    throw config_error("synthetic_clustered_task: counts and dims must be positive (C >= 2)");
  if (task_shift < 0.0 || noise < 0.0)
    throw config_error("synthetic_clustered_task: task_shift and noise must be non-negative");
  if (size_min < 2 || size_min > size_max)
    throw config_error("synthetic_clustered_task: need 2 <= size_min <= size_max");

  // Shared base teacher; each group perturbs it by an input rotation and a
  // cyclic label shift, both scaled by task_shift.
  Rng base_rng = derive_stream(seed, "synthetic/base");
  std::normal_distribution<double> normal(0.0, 1.0);
  RealMatrix w_base(class_count, input_dim);
  for (double& v : w_base.values) v = normal(base_rng);

  const int plane_count = input_dim / 2;
  std::vector<std::vector<double>> group_angles(group_count);
  std::vector<int> group_shift(group_count);
  for (int g = 0; g < group_count; ++g) {
    Rng rot_rng = derive_stream(seed, "synthetic/rot", static_cast<std::uint64_t>(g));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    group_angles[g].resize(plane_count);
    for (double& a : group_angles[g]) a = task_shift * 3.14159265358979323846 * u(rot_rng);
    group_shift[g] = static_cast<int>(std::lround(task_shift * g)) % class_count;
  }

  SyntheticTask task;
  task.grouping.group_count = group_count;
  const int m = group_count * clients_per_group;
  task.client_data.reserve(m);
  task.grouping.group_of_client.reserve(m);

  for (int i = 0; i < m; ++i) {
    const int g = i / clients_per_group;
    task.grouping.group_of_client.push_back(g);

    Rng rng = derive_stream(seed, "synthetic/client", static_cast<std::uint64_t>(i));
    const int n = std::uniform_int_distribution<int>(size_min, size_max)(rng);
    Dataset ds;
    ds.class_count = class_count;
    ds.features = RealMatrix(n, input_dim);
    ds.labels.resize(n);
    for (int r = 0; r < n; ++r) {
      auto row = ds.features.row(r);
      for (double& v : row) v = normal(rng);
      auto rotated = rotate(row, group_angles[g]);
      int best = 0;
      double best_logit = -1e300;
      for (int kls = 0; kls < class_count; ++kls) {
        double logit = noise * normal(rng);
        const double* w = w_base.values.data() + static_cast<std::size_t>(kls) * input_dim;
        for (int d = 0; d < input_dim; ++d) logit += w[d] * rotated[d];
        if (logit > best_logit) {
          best_logit = logit;
          best = kls;
        }
      }
      ds.labels[r] = (best + group_shift[g]) % class_count;
    }
    task.client_data.push_back(std::move(ds));
  }
  return task;
}

Dataset merge_datasets(std::span<const Dataset> parts) {
  if (parts.empty()) throw shape_error("merge_datasets: no datasets");
  Dataset merged;
  merged.class_count = parts.front().class_count;
  const int d = parts.front().dim();
  int total = 0;
  for (const Dataset& p : parts) {
    if (p.dim() != d || p.class_count != merged.class_count)
      throw shape_error("merge_datasets: mismatched dims or class counts");
    total += p.size();
  }
  merged.features = RealMatrix(total, d);
  merged.labels.reserve(total);
  double* dst = merged.features.values.data();
  for (const Dataset& p : parts) {
    std::copy(p.features.values.begin(), p.features.values.end(), dst);
    dst += p.features.values.size();
    merged.labels.insert(merged.labels.end(), p.labels.begin(), p.labels.end());
  }
  return merged;
}

AssembledClients assemble_synthetic(const SyntheticTask& task, std::uint64_t seed) {
  AssembledClients out;
  out.pool = merge_datasets(task.client_data);
  out.partitions.reserve(task.client_data.size());
  int offset = 0;
  for (std::size_t i = 0; i < task.client_data.size(); ++i) {
    const int n = task.client_data[i].size();
    std::vector<int> indices(n);
    std::iota(indices.begin(), indices.end(), offset);
    offset += n;
    Rng rng = derive_stream(seed, "synthetic/split", static_cast<std::uint64_t>(i));
    out.partitions.push_back(finish_client(static_cast<int>(i), std::move(indices), out.pool, rng));
  }
  return out;
}

double label_kl(std::span<const double> p, std::span<const double> q, double epsilon) {
  if (p.size() != q.size()) throw shape_error("label_kl: length mismatch");
  if (p.empty()) throw shape_error("label_kl: empty distributions");
  if (epsilon <= 0.0) throw config_error("label_kl: epsilon must be positive");
  double psum = 0.0, qsum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw config_error("label_kl: negative mass");
    psum += p[i] + epsilon;
    qsum += q[i] + epsilon;
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = (p[i] + epsilon) / psum;
    const double qi = (q[i] + epsilon) / qsum;
    kl += pi * std::log(pi / qi);
  }
  return std::max(kl, 0.0);
}

std::vector<double> label_distribution(const ClientPartition& partition) {
  std::vector<double> dist(partition.label_histogram.size(), 0.0);
  const double total = partition.train_size();
  if (total > 0)
    for (std::size_t i = 0; i < dist.size(); ++i)
      dist[i] = partition.label_histogram[i] / total;
  return dist;
}

namespace {

[[noreturn]] void parse_fail(const std::filesystem::path& path, int line, const std::string& what) {
  throw config_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view token, const std::filesystem::path& path, int line) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || end != token.data() + token.size())
    parse_fail(path, line, "bad number '" + std::string(token) + "'");
  return v;
}

int parse_int(std::string_view token, const std::filesystem::path& path, int line) {
  int v = 0;
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || end != token.data() + token.size())
    parse_fail(path, line, "bad integer '" + std::string(token) + "'");
  return v;
}

std::vector<std::string_view> split_commas(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = s.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open dataset file " + path.string());
  std::string line;
  if (!std::getline(in, line)) parse_fail(path, 1, "missing header");

  int d = 0, c = 0, n = 0;
  auto fields = split_commas(line);
  if (fields.size() != 3 || !fields[0].starts_with("d=") || !fields[1].starts_with("C=") ||
      !fields[2].starts_with("N="))
    parse_fail(path, 1, "header must be d=<int>,C=<int>,N=<int>");
  d = parse_int(fields[0].substr(2), path, 1);
  c = parse_int(fields[1].substr(2), path, 1);
  n = parse_int(fields[2].substr(2), path, 1);
  if (d < 1 || c < 1 || n < 1) parse_fail(path, 1, "header values must be positive");

  Dataset ds;
  ds.class_count = c;
  ds.features = RealMatrix(n, d);
  ds.labels.resize(n);
  for (int r = 0; r < n; ++r) {
    if (!std::getline(in, line)) parse_fail(path, r + 2, "expected " + std::to_string(n) + " rows");
    auto tokens = split_commas(line);
    if (static_cast<int>(tokens.size()) != d + 1)
      parse_fail(path, r + 2, "expected " + std::to_string(d + 1) + " fields");
    for (int j = 0; j < d; ++j) ds.features.at(r, j) = parse_double(tokens[j], path, r + 2);
    ds.labels[r] = parse_int(tokens[d], path, r + 2);
  }
  ds.validate();
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  dataset.validate();
  std::ofstream out(path);
  if (!out) throw config_error("cannot write dataset file " + path.string());
  out << "d=" << dataset.dim() << ",C=" << dataset.class_count << ",N=" << dataset.size() << "\n";
  char buf[64];
  for (int r = 0; r < dataset.size(); ++r) {
    for (double v : dataset.features.row(r)) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, end - buf);
      out.put(',');
    }
    out << dataset.labels[r] << "\n";
  }
  if (!out) throw config_error("failed writing dataset file " + path.string());
}

void write_partition_report(std::ostream& out, std::span<const ClientPartition> partitions,
                            int class_count) {
  out << "client_id,train_size,test_size";
  for (int c = 0; c < class_count; ++c) out << ",class_" << c;
  out << "\n";
  for (const ClientPartition& p : partitions) {
    out << p.client_id << ',' << p.train_size() << ',' << p.test_size();
    for (int c = 0; c < class_count; ++c) out << ',' << p.label_histogram[c];
    out << "\n";
  }
}

std::vector<std::vector<int>> read_partition_histograms(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw config_error("partition report: missing header");
  const int columns = static_cast<int>(split_commas(line).size());
  if (columns < 4) throw config_error("partition report: no histogram columns");
  std::vector<std::vector<int>> histograms;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tokens = split_commas(line);
    if (static_cast<int>(tokens.size()) != columns)
      throw config_error("partition report: ragged row at line " + std::to_string(line_no));
    std::vector<int> hist;
    for (int j = 3; j < columns; ++j) hist.push_back(parse_int(tokens[j], "partition report", line_no));
    histograms.push_back(std::move(hist));
  }
  return histograms;
}

}  // namespace fedac
