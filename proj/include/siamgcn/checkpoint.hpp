#pragma once

#include <filesystem>
#include <string>

#include "siamgcn/model.hpp"
#include "siamgcn/spectral.hpp"

namespace siamgcn {

/// FNV-1a over the node count and the bit patterns of every adjacency
/// weight (row-major), as 16 hex digits.
std::string graph_hash(const Adjacency& adjacency);

struct Checkpoint {
  SiameseModel model;
  std::string graph_hash;
  std::uint64_t seed = 0;
  int epoch = 0;
};

/// JSON checkpoint, format "siamgcn-checkpoint" version 1. Each layer's
/// theta is flattened row-major over (f_in, f_out, k); l_scaled row-major.
/// Doubles are written in shortest round-trip form, so load(save(m)) is
/// bit-exact.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace siamgcn
