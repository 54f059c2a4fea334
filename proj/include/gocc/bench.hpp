#pragma once

#include <string>
#include <vector>

#include "gocc/common.hpp"

namespace gocc {

struct BenchEntry {
  std::string name;
  double ms = 0;
};

struct BenchReport {
  std::string preset;
  std::vector<BenchEntry> entries;
  double speedup_dense_over_culled = 0;
  double peak_rss_mb = 0;

  double entry_ms(const std::string& name) const;
  std::string to_json() const;
  std::string to_table() const;
};

// Times splatting (dense vs culled), the encoder, fusion, refinement and a
// full block on a fixed preset. Presets: "desk" (64x64x8 grid, P=512, D=32)
// and "full" (200x200x16 grid at 0.5 m, P=6400, D=128).
BenchReport run_bench(const std::string& preset, std::size_t repeats = 3);

double peak_rss_mb();

}  // namespace gocc
