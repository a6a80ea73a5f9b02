#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "fedac/engine.hpp"

namespace fedac {

/// Dataset construction options. A synthetic source keeps its ground-truth
/// grouping unless a partition section re-splits the merged pool.
struct DataConfig {
  std::string source;  // "synthetic" or "file"
  std::string path;    // file source only

  bool has_partition = false;
  std::string partition_kind = "dirichlet";  // or "pathological"
  double alpha = 0.5;
  int labels_per_client = 2;
  int clients = 30;
  int size_min = 50;
  int size_max = 350;

  int groups = 3;
  int clients_per_group = 10;
  int input_dim = 16;
  int classes = 4;
  double task_shift = 1.0;
  double noise = 0.1;
  int synthetic_size_min = 50;
  int synthetic_size_max = 350;

  bool seed_set = false;
  std::uint64_t seed = 0;  // defaults to run.seed
};

struct OutputConfig {
  std::string dir = "runs/out";
};

struct FullConfig {
  RunConfig run;
  DataConfig data;
  OutputConfig output;
};

/// Parses and validates a config file, then applies `key=value` overrides
/// (dotted paths, values parsed as JSON with plain-string fallback). Unknown
/// keys anywhere are rejected. Throws config_error with file/line context.
FullConfig load_config(const std::filesystem::path& path,
                       std::span<const std::string> overrides = {});

/// The fully resolved config as a reloadable document.
std::string render_config(const FullConfig& config);

/// Materializes the dataset, partitions, and (if available) ground truth.
ExperimentSetup build_setup(const FullConfig& config);

}  // namespace fedac
