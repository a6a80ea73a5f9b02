#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "fedac/clustering.hpp"
#include "fedac/engine.hpp"

namespace fedac {

/// Final state reloaded from disk: client models, centers, assignment, map.
struct Snapshot {
  std::vector<ParamVector> client_models;
  std::vector<ParamVector> centers;
  Assignment assignment;
  ReductionMap map;
};

/// Writes clients.bin, centers.bin, assignment.bin, map.bin and
/// partitions.csv into dir. Vectors are length-prefixed little-endian 64-bit
/// payloads: each model is (u64 length, u64 split index, length doubles).
void save_snapshot(const std::filesystem::path& dir, std::span<const ClientState> clients,
                   const ServerState& state, int class_count);

Snapshot load_snapshot(const std::filesystem::path& dir);

}  // namespace fedac
