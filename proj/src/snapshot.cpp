#include "cbmt/snapshot.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

namespace cbmt {

namespace {
constexpr char kMagic[8] = {'C', 'B', 'M', 'T', 'C', 'K', 'P', '1'};

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
  return v;
}
}  // namespace

const ParamEntry* ParamSnapshot::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

std::vector<std::string> ParamSnapshot::keys() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.name);
  return out;
}

std::vector<std::string> snapshot_key_diff(const ParamSnapshot& a, const ParamSnapshot& b) {
  std::vector<std::string> diff;
  std::map<std::string, const ParamEntry*> bmap;
  for (const auto& e : b.entries) bmap[e.name] = &e;
  for (const auto& e : a.entries) {
    auto it = bmap.find(e.name);
    if (it == bmap.end()) {
      diff.push_back(e.name + " (missing)");
    } else if (it->second->shape != e.shape) {
      diff.push_back(e.name + " (shape mismatch)");
    }
  }
  std::map<std::string, const ParamEntry*> amap;
  for (const auto& e : a.entries) amap[e.name] = &e;
  for (const auto& e : b.entries)
    if (!amap.count(e.name)) diff.push_back(e.name + " (unexpected)");
  return diff;
}

void require_compatible(const ParamSnapshot& model_layout, const ParamSnapshot& checkpoint) {
  auto diff = snapshot_key_diff(model_layout, checkpoint);
  if (!diff.empty()) {
    std::string msg = "checkpoint/architecture mismatch:";
    for (const auto& d : diff) msg += " " + d;
    throw std::invalid_argument(msg);
  }
}

void save_snapshot(const std::string& path, const ParamSnapshot& snap, uint64_t config_hash) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write(kMagic, sizeof(kMagic));
  put<int64_t>(f, snap.step);
  put<uint64_t>(f, config_hash);
  put<uint32_t>(f, static_cast<uint32_t>(snap.entries.size()));
  for (const auto& e : snap.entries) {
    put<uint32_t>(f, static_cast<uint32_t>(e.name.size()));
    f.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<uint8_t>(f, e.is_buffer ? 1 : 0);
    put<uint32_t>(f, static_cast<uint32_t>(e.shape.size()));
    for (int d : e.shape) put<int32_t>(f, d);
    put<uint64_t>(f, e.values.size());
    f.write(reinterpret_cast<const char*>(e.values.data()),
            static_cast<std::streamsize>(e.values.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("write error on checkpoint: " + path);
}

ParamSnapshot load_snapshot(const std::string& path, uint64_t* config_hash_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || !std::equal(magic, magic + 8, kMagic))
    throw std::runtime_error("not a CBMT checkpoint: " + path);
  ParamSnapshot snap;
  snap.step = get<int64_t>(f, path);
  uint64_t hash = get<uint64_t>(f, path);
  if (config_hash_out) *config_hash_out = hash;
  uint32_t count = get<uint32_t>(f, path);
  snap.entries.resize(count);
  for (auto& e : snap.entries) {
    uint32_t name_len = get<uint32_t>(f, path);
    e.name.resize(name_len);
    f.read(e.name.data(), name_len);
    e.is_buffer = get<uint8_t>(f, path) != 0;
    uint32_t nd = get<uint32_t>(f, path);
    e.shape.resize(nd);
    for (auto& d : e.shape) d = get<int32_t>(f, path);
    uint64_t n = get<uint64_t>(f, path);
    e.values.resize(n);
    f.read(reinterpret_cast<char*>(e.values.data()),
           static_cast<std::streamsize>(n * sizeof(float)));
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  }
  return snap;
}

}  // namespace cbmt
