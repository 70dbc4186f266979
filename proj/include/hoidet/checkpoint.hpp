#pragma once

// Binary checkpoint container: a magic tag, a JSON header describing the
// payload (arbitrary config plus a name -> offset/shape table), then the raw
// little-endian 64-bit floats. Round-trips are bit-exact, so saving and
// reloading a model (or an optimizer state) changes nothing.

#include <string>
#include <vector>

#include "json.hpp"

namespace hoidet {

struct CheckpointEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
};

struct Checkpoint {
  nlohmann::ordered_json config;
  std::vector<CheckpointEntry> entries;

  // index into entries, or -1 when the name is absent
  int find(const std::string& name) const;
  const CheckpointEntry& at(const std::string& name) const;  // throws IoError
};

void save_checkpoint(const std::string& path, const nlohmann::ordered_json& config,
                     const std::vector<CheckpointEntry>& entries);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hoidet
