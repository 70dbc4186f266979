#include "hoidet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "hoidet/errors.hpp"

namespace hoidet {

namespace {
constexpr char kMagic[8] = {'H', 'O', 'I', 'D', 'C', 'K', 'P', '1'};

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}
}  // namespace

int Checkpoint::find(const std::string& name) const {
  for (size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return static_cast<int>(i);
  return -1;
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
  const int i = find(name);
  if (i < 0) throw IoError("checkpoint has no entry named '" + name + "'");
  return entries[static_cast<size_t>(i)];
}

void save_checkpoint(const std::string& path, const nlohmann::ordered_json& config,
                     const std::vector<CheckpointEntry>& entries) {
  nlohmann::ordered_json table = nlohmann::ordered_json::object();
  std::int64_t offset = 0;
  for (const auto& e : entries) {
    if (static_cast<std::int64_t>(e.data.size()) != shape_numel(e.shape))
      throw IoError("entry '" + e.name + "' data does not match its shape");
    table[e.name] = {{"offset", offset}, {"shape", e.shape}};
    offset += static_cast<std::int64_t>(e.data.size());
  }
  nlohmann::ordered_json header{{"config", config}, {"params", table}, {"total", offset}};
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& e : entries)
    out.write(reinterpret_cast<const char*>(e.data.data()),
              static_cast<std::streamsize>(e.data.size() * sizeof(double)));
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file: " + path);

  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len == 0 || len > (1ull << 30)) throw IoError("corrupt checkpoint header: " + path);
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header: " + path);

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad checkpoint header json: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  ckpt.config = header.at("config");
  const std::int64_t total = header.at("total").get<std::int64_t>();
  std::vector<double> blob(static_cast<size_t>(total));
  in.read(reinterpret_cast<char*>(blob.data()),
          static_cast<std::streamsize>(blob.size() * sizeof(double)));
  if (!in) throw IoError("truncated checkpoint payload: " + path);

  for (const auto& [name, meta] : header.at("params").items()) {
    CheckpointEntry e;
    e.name = name;
    e.shape = meta.at("shape").get<std::vector<int>>();
    const std::int64_t off = meta.at("offset").get<std::int64_t>();
    const std::int64_t n = shape_numel(e.shape);
    if (off < 0 || off + n > total) throw IoError("entry '" + name + "' outside payload");
    e.data.assign(blob.begin() + off, blob.begin() + off + n);
    ckpt.entries.push_back(std::move(e));
  }
  return ckpt;
}

}  // namespace hoidet
