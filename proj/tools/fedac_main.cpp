#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "fedac/config.hpp"
#include "fedac/csv.hpp"
#include "fedac/engine.hpp"
#include "fedac/errors.hpp"
#include "fedac/snapshot.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw fedac::state_error("cannot write " + path.string());
  out << text;
  if (!out) throw fedac::state_error("failed writing " + path.string());
}

/// Runs one experiment and writes metrics, trace, resolved config, and the
/// final snapshot into the config's output directory.
fedac::ExperimentResult execute_run(const fedac::FullConfig& config) {
  fedac::ExperimentSetup setup = fedac::build_setup(config);
  fedac::ExperimentResult result = fedac::run_experiment(config.run, setup);

  const fs::path dir(config.output.dir);
  fs::create_directories(dir);
  write_text_file(dir / "config_echo.json", fedac::render_config(config));
  {
    std::ofstream out(dir / "metrics.csv");
    fedac::write_metrics_csv(out, result.metrics);
    if (!out) throw fedac::state_error("failed writing metrics.csv");
  }
  {
    std::ofstream out(dir / "cluster_trace.csv");
    fedac::write_trace_csv(out, result.trace);
    if (!out) throw fedac::state_error("failed writing cluster_trace.csv");
  }
  fedac::save_snapshot(dir / "snapshot", result.clients, result.server,
                       setup.dataset.class_count);
  return result;
}

fedac::FullConfig load_with_flags(const std::string& config_path,
                                  std::vector<std::string> overrides, const std::string& out_dir,
                                  bool seed_given, std::uint64_t seed) {
  if (seed_given) overrides.push_back("run.seed=" + std::to_string(seed));
  fedac::FullConfig config = fedac::load_config(config_path, overrides);
  if (!out_dir.empty()) config.output.dir = out_dir;
  return config;
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::string& out_dir, bool seed_given, std::uint64_t seed) {
  const fedac::FullConfig config =
      load_with_flags(config_path, overrides, out_dir, seed_given, seed);
  execute_run(config);
  std::cout << "run complete: " << config.output.dir << "\n";
  return 0;
}

fs::path resolve_snapshot_dir(const fs::path& dir) {
  if (fs::exists(dir / "snapshot" / "clients.bin")) return dir / "snapshot";
  return dir;
}

void stream_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw fedac::state_error("cannot read " + path.string());
  std::cout << in.rdbuf();
}

void print_matrix_block(const std::string& name, const fedac::RealMatrix& matrix) {
  std::cout << "# " << name << ' ' << matrix.rows << ' ' << matrix.cols << "\n";
  for (int r = 0; r < matrix.rows; ++r) {
    for (int c = 0; c < matrix.cols; ++c) {
      if (c) std::cout << ',';
      std::cout << fedac::csv_double(matrix.at(r, c));
    }
    std::cout << "\n";
  }
}

int cmd_report(const std::string& dir_arg, const std::string& kind) {
  const fs::path dir(dir_arg);
  if (kind == "partition") {
    stream_file(resolve_snapshot_dir(dir) / "partitions.csv");
    return 0;
  }
  if (kind == "clusters") {
    stream_file(dir / "cluster_trace.csv");
    return 0;
  }

  const fs::path snap_dir = resolve_snapshot_dir(dir);
  fedac::Snapshot snap = fedac::load_snapshot(snap_dir);
  const int m = static_cast<int>(snap.client_models.size());

  fedac::SimilarityMatrix lrcos_block =
      fedac::similarity_matrix(snap.client_models, snap.client_models, snap.map, 0);
  print_matrix_block("lrcos", lrcos_block.values);

  fedac::SimilarityMatrix centroid_block =
      fedac::similarity_matrix(snap.client_models, snap.centers, snap.map, 0);
  print_matrix_block("lrcos_centroid", centroid_block.values);

  fedac::RealMatrix l2(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      l2.at(i, j) = fedac::l2_distance_squared(snap.client_models[i], snap.client_models[j]);
  print_matrix_block("l2", l2);

  std::ifstream parts(snap_dir / "partitions.csv");
  if (!parts) throw fedac::state_error("cannot read partitions.csv");
  auto histograms = fedac::read_partition_histograms(parts);
  if (static_cast<int>(histograms.size()) != m)
    throw fedac::state_error("partitions.csv does not match clients.bin");
  std::vector<std::vector<double>> dists(m);
  for (int i = 0; i < m; ++i) dists[i].assign(histograms[i].begin(), histograms[i].end());
  fedac::RealMatrix kl(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) kl.at(i, j) = fedac::label_kl(dists[i], dists[j]);
  print_matrix_block("kl", kl);
  return 0;
}

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

GridAxis parse_grid_axis(const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size())
    throw fedac::config_error("grid '" + spec + "' must look like key=v1,v2,...");
  GridAxis axis;
  axis.key = spec.substr(0, eq);
  if (axis.key.find('.') == std::string::npos) axis.key = "run." + axis.key;
  std::size_t start = eq + 1;
  while (true) {
    const std::size_t comma = spec.find(',', start);
    axis.values.push_back(spec.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return axis;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == '/' || c == '\\' || c == ' ') c = '_';
  return s;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& grid_specs,
              const std::vector<std::string>& overrides, const std::string& out_dir,
              bool seed_given, std::uint64_t seed) {
  std::vector<GridAxis> axes;
  for (const std::string& spec : grid_specs) axes.push_back(parse_grid_axis(spec));
  if (axes.empty()) throw fedac::config_error("sweep needs at least one --grid axis");

  // Validate the base config up front so a broken file fails fast.
  const fedac::FullConfig base =
      load_with_flags(config_path, overrides, out_dir, seed_given, seed);
  const fs::path sweep_dir(base.output.dir);
  fs::create_directories(sweep_dir);

  std::ofstream summary(sweep_dir / "summary.csv");
  if (!summary) throw fedac::state_error("cannot write summary.csv");
  for (const GridAxis& axis : axes) summary << axis.key << ',';
  summary << "final_mean_acc,status\n";

  std::vector<std::size_t> odometer(axes.size(), 0);
  while (true) {
    std::vector<std::string> point_overrides(overrides);
    std::string label;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const std::string& value = axes[a].values[odometer[a]];
      point_overrides.push_back(axes[a].key + "=" + value);
      if (!label.empty()) label += "_";
      label += sanitize(axes[a].key + "=" + value);
    }

    std::string acc = "nan";
    std::string status = "ok";
    try {
      fedac::FullConfig config =
          load_with_flags(config_path, point_overrides, "", seed_given, seed);
      config.output.dir = (sweep_dir / label).string();
      fedac::ExperimentResult result = execute_run(config);
      if (!result.metrics.empty()) acc = fedac::csv_double(result.metrics.back().mean_acc);
    } catch (const std::exception& e) {
      std::cerr << "sweep point " << label << " failed: " << e.what() << "\n";
      status = "failed";
    }
    for (std::size_t a = 0; a < axes.size(); ++a) summary << axes[a].values[odometer[a]] << ',';
    summary << acc << ',' << status << "\n";

    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++odometer[a] < axes[a].values.size()) break;
      odometer[a] = 0;
    }
    if (a == axes.size()) break;
  }
  if (!summary) throw fedac::state_error("failed writing summary.csv");
  std::cout << "sweep complete: " << sweep_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic simulator of adaptive clustered federated learning"};
  app.require_subcommand(1);

  std::string config_path, out_dir, report_dir, report_kind;
  std::vector<std::string> overrides, grid_specs;
  std::uint64_t seed = 0;

  CLI::App* run = app.add_subcommand("run", "Execute one experiment");
  run->add_option("--config", config_path, "Config file path")->required();
  run->add_option("--set", overrides, "Override config keys (key=value, repeatable)");
  run->add_option("--out", out_dir, "Output directory (overrides output.dir)");
  CLI::Option* run_seed = run->add_option("--seed", seed, "Seed override");

  CLI::App* report = app.add_subcommand("report", "Emit a CSV report from a finished run");
  report->add_option("--dir", report_dir, "Run or snapshot directory")->required();
  report->add_option("--kind", report_kind, "Report kind")
      ->required()
      ->check(CLI::IsMember({"partition", "similarity", "clusters"}));

  CLI::App* sweep = app.add_subcommand("sweep", "Run a Cartesian hyperparameter grid");
  sweep->add_option("--config", config_path, "Config file path")->required();
  sweep->add_option("--grid", grid_specs, "Grid axis (key=v1,v2,..., repeatable)")->required();
  sweep->add_option("--set", overrides, "Override config keys (key=value, repeatable)");
  sweep->add_option("--out", out_dir, "Sweep output directory");
  CLI::Option* sweep_seed = sweep->add_option("--seed", seed, "Seed override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed())
      return cmd_run(config_path, overrides, out_dir, run_seed->count() > 0, seed);
    if (report->parsed()) return cmd_report(report_dir, report_kind);
    if (sweep->parsed())
      return cmd_sweep(config_path, grid_specs, overrides, out_dir, sweep_seed->count() > 0,
                       seed);
  } catch (const fedac::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
