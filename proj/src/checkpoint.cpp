#include "dpgn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace dpgn {

namespace {

constexpr char kMagic[8] = {'D', 'P', 'G', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

std::map<std::string, Tensor> read_tensors(std::ifstream& f) {
  const auto count = read_pod<std::uint64_t>(f);
  std::map<std::string, Tensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const auto rank = read_pod<std::uint32_t>(f);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(f));
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint: truncated tensor data");
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

std::ifstream open_and_check(const std::string& path, KeyValues& manifest) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(path + ": not a dpgn checkpoint");
  const auto version = read_pod<std::uint32_t>(f);
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto manifest_len = read_pod<std::uint64_t>(f);
  std::string text(manifest_len, '\0');
  f.read(text.data(), static_cast<std::streamsize>(manifest_len));
  if (!f) throw std::runtime_error(path + ": truncated manifest");
  manifest = parse_config_text(text);
  return f;
}

}  // namespace

void save_checkpoint(DpgnModel& model, const std::string& path, const KeyValues& extras) {
  KeyValues manifest = to_kv(model.cfg);
  manifest["config_hash"] = config_hash_hex(to_kv(model.cfg));
  for (const auto& [k, v] : extras) manifest[k] = v;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path);
  f.write(kMagic, 8);
  write_pod(f, kVersion);
  const std::string text = serialize_config(manifest);
  write_pod(f, static_cast<std::uint64_t>(text.size()));
  f.write(text.data(), static_cast<std::streamsize>(text.size()));

  StateRefs state = model.state();
  write_pod(f, static_cast<std::uint64_t>(state.size()));
  for (auto& [name, tensor] : state) {
    write_pod(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(f, static_cast<std::uint32_t>(tensor->rank()));
    for (auto d : tensor->shape()) write_pod(f, static_cast<std::uint64_t>(d));
    f.write(reinterpret_cast<const char*>(tensor->data()),
            static_cast<std::streamsize>(tensor->size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

void load_checkpoint_into(DpgnModel& model, const std::string& path, KeyValues* manifest_out) {
  KeyValues manifest;
  std::ifstream f = open_and_check(path, manifest);
  auto tensors = read_tensors(f);
  for (auto& [name, dest] : model.state()) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::runtime_error("checkpoint missing tensor '" + name + "'");
    if (it->second.shape() != dest->shape())
      throw std::runtime_error("dimension mismatch for '" + name + "': checkpoint " +
                               shape_str(it->second) + " vs model " + shape_str(*dest));
    *dest = it->second;
  }
  if (manifest_out) *manifest_out = manifest;
}

DpgnModel load_checkpoint(const std::string& path, KeyValues* manifest_out) {
  KeyValues manifest = read_checkpoint_manifest(path);
  Rng rng(0);
  DpgnModel model(dpgn_config_from(manifest), rng);
  load_checkpoint_into(model, path, nullptr);
  if (manifest_out) *manifest_out = manifest;
  return model;
}

KeyValues read_checkpoint_manifest(const std::string& path) {
  KeyValues manifest;
  open_and_check(path, manifest);
  return manifest;
}

}  // namespace dpgn
