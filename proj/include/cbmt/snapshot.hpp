#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cbmt {

// One named parameter or normalization buffer.
struct ParamEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
  bool is_buffer = false;  // normalization running statistics

  bool operator==(const ParamEntry&) const = default;
};

// Ordered collection of all trainable parameters and normalization buffers;
// the unit of EMA math and checkpointing.
struct ParamSnapshot {
  std::vector<ParamEntry> entries;
  int64_t step = 0;

  const ParamEntry* find(const std::string& name) const;
  std::vector<std::string> keys() const;

  bool operator==(const ParamSnapshot&) const = default;
};

// Lists keys present in exactly one of the two snapshots plus keys whose
// shapes differ; empty result means the snapshots are layout-compatible.
std::vector<std::string> snapshot_key_diff(const ParamSnapshot& a, const ParamSnapshot& b);

// Throws std::invalid_argument listing offending keys when incompatible.
void require_compatible(const ParamSnapshot& model_layout, const ParamSnapshot& checkpoint);

// Binary checkpoint file: snapshot + step + config hash.
void save_snapshot(const std::string& path, const ParamSnapshot& snap, uint64_t config_hash);
ParamSnapshot load_snapshot(const std::string& path, uint64_t* config_hash_out = nullptr);

}  // namespace cbmt
