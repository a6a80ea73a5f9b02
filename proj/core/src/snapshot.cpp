#include "fedac/snapshot.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "fedac/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "snapshot layout assumes a little-endian host");

namespace fedac {

namespace {

void put_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_doubles(std::ofstream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::uint64_t get_u64(std::ifstream& in, const std::filesystem::path& path) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw state_error("snapshot: truncated file " + path.string());
  return v;
}

std::vector<double> get_doubles(std::ifstream& in, std::size_t count,
                                const std::filesystem::path& path) {
  std::vector<double> v(count);
  if (!in.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(count * sizeof(double))))
    throw state_error("snapshot: truncated file " + path.string());
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw state_error("snapshot: cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw state_error("snapshot: cannot read " + path.string());
  return in;
}

void save_models(const std::filesystem::path& path, std::span<const ParamVector> models) {
  std::ofstream out = open_out(path);
  put_u64(out, models.size());
  for (const ParamVector& m : models) {
    put_u64(out, m.size());
    put_u64(out, m.split_index);
    put_doubles(out, m.values);
  }
  if (!out) throw state_error("snapshot: write failed for " + path.string());
}

std::vector<ParamVector> load_models(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  const std::uint64_t count = get_u64(in, path);
  if (count > (1ull << 32)) throw state_error("snapshot: implausible model count in " + path.string());
  std::vector<ParamVector> models;
  models.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t len = get_u64(in, path);
    const std::uint64_t split = get_u64(in, path);
    if (len > (1ull << 40) || split >= len)
      throw state_error("snapshot: bad model header in " + path.string());
    models.emplace_back(get_doubles(in, len, path), split);
  }
  return models;
}

}  // namespace

void save_snapshot(const std::filesystem::path& dir, std::span<const ClientState> clients,
                   const ServerState& state, int class_count) {
  std::filesystem::create_directories(dir);

  std::vector<ParamVector> models;
  std::vector<ClientPartition> partitions;
  models.reserve(clients.size());
  partitions.reserve(clients.size());
  for (const ClientState& c : clients) {
    models.push_back(c.params);
    partitions.push_back(c.partition);
  }
  save_models(dir / "clients.bin", models);
  save_models(dir / "centers.bin", state.clusters.centers);

  {
    std::ofstream out = open_out(dir / "assignment.bin");
    put_u64(out, state.assignment.cluster_of.size());
    put_u64(out, static_cast<std::uint64_t>(state.assignment.cluster_count));
    for (int k : state.assignment.cluster_of) put_u64(out, static_cast<std::uint64_t>(k));
    if (!out) throw state_error("snapshot: write failed for assignment.bin");
  }
  {
    std::ofstream out = open_out(dir / "map.bin");
    put_u64(out, static_cast<std::uint64_t>(state.map.matrix.rows));
    put_u64(out, static_cast<std::uint64_t>(state.map.matrix.cols));
    put_doubles(out, state.map.matrix.values);
    put_doubles(out, state.map.mean);
    put_u64(out, static_cast<std::uint64_t>(state.map.created_round));
    if (!out) throw state_error("snapshot: write failed for map.bin");
  }
  {
    std::ofstream out(dir / "partitions.csv");
    if (!out) throw state_error("snapshot: cannot write partitions.csv");
    write_partition_report(out, partitions, class_count);
  }
}

Snapshot load_snapshot(const std::filesystem::path& dir) {
  Snapshot snap;
  snap.client_models = load_models(dir / "clients.bin");
  snap.centers = load_models(dir / "centers.bin");

  {
    const auto path = dir / "assignment.bin";
    std::ifstream in = open_in(path);
    const std::uint64_t m = get_u64(in, path);
    const std::uint64_t k = get_u64(in, path);
    if (m > (1ull << 32) || k < 1 || k > (1ull << 32))
      throw state_error("snapshot: bad assignment header");
    snap.assignment.cluster_count = static_cast<int>(k);
    snap.assignment.cluster_of.resize(m);
    for (std::uint64_t i = 0; i < m; ++i)
      snap.assignment.cluster_of[i] = static_cast<int>(get_u64(in, path));
    snap.assignment.validate();
  }
  {
    const auto path = dir / "map.bin";
    std::ifstream in = open_in(path);
    const std::uint64_t rows = get_u64(in, path);
    const std::uint64_t cols = get_u64(in, path);
    if (rows > (1ull << 20) || cols > (1ull << 40))
      throw state_error("snapshot: bad map header");
    snap.map.matrix = RealMatrix(static_cast<int>(rows), static_cast<int>(cols));
    snap.map.matrix.values = get_doubles(in, rows * cols, path);
    snap.map.mean = get_doubles(in, cols, path);
    snap.map.created_round = static_cast<int>(get_u64(in, path));
  }
  return snap;
}

}  // namespace fedac
