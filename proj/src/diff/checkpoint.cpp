#include "pseg/diff/checkpoint.hpp"

#include <map>

#include "../binary_io.hpp"

#include "pseg/error.hpp"

namespace pseg::diff {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'E', 'G'};

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries) {
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xFFFF) throw ShapeError("checkpoint: parameter name too long: " + e.name);
    if (e.shape.size() > 0xFF) throw ShapeError("checkpoint: rank too large for " + e.name);
    if (numel(e.shape) != e.values.size()) throw ShapeError("checkpoint: payload size mismatch for " + e.name);
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u8(static_cast<std::uint8_t>(e.shape.size()));
    for (std::size_t d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : e.values) w.f32(v);
  }
  detail::write_file(path, w.buffer());
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path), "checkpoint");
  if (r.str(4, "magic") != std::string(kMagic, 4)) throw FormatError("bad checkpoint magic", 0);
  const std::uint64_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const std::uint32_t count = r.u32("count");
  std::vector<CheckpointEntry> entries;
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointEntry e;
    const std::uint16_t len = r.u16("name length");
    e.name = r.str(len, "name");
    const std::uint8_t rank = r.u8("rank");
    for (std::uint8_t i = 0; i < rank; ++i) e.shape.push_back(r.u32("dimension"));
    const std::size_t n = numel(e.shape);
    r.need(n * 4, "payload");
    e.values.resize(n);
    for (auto& v : e.values) v = r.f32("payload");
    entries.push_back(std::move(e));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint records", r.offset());
  return entries;
}

template <typename T>
void save_parameters(const std::filesystem::path& path, const NamedParameters<T>& params) {
  std::vector<CheckpointEntry> entries;
  entries.reserve(params.size());
  for (const auto& [name, tensor] : params) {
    entries.push_back({name, tensor.shape(), {tensor.data().begin(), tensor.data().end()}});
  }
  write_checkpoint(path, entries);
}

template <typename T>
void load_parameters(const std::filesystem::path& path, NamedParameters<T>& params) {
  std::map<std::string, CheckpointEntry> by_name;
  for (auto& e : read_checkpoint(path)) by_name.emplace(e.name, std::move(e));
  if (by_name.size() != params.size()) {
    throw LookupError("checkpoint " + path.string() + " holds " + std::to_string(by_name.size()) +
                      " parameters, model expects " + std::to_string(params.size()));
  }
  for (auto& [name, tensor] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw LookupError("checkpoint " + path.string() + " lacks parameter " + name);
    if (it->second.shape != tensor.shape()) {
      throw ShapeError("checkpoint parameter " + name + " has shape " + to_string(it->second.shape) +
                       ", model expects " + to_string(tensor.shape()));
    }
    auto dst = tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second.values[i]);
  }
}

template void save_parameters(const std::filesystem::path&, const NamedParameters<float>&);
template void save_parameters(const std::filesystem::path&, const NamedParameters<double>&);
template void load_parameters(const std::filesystem::path&, NamedParameters<float>&);
template void load_parameters(const std::filesystem::path&, NamedParameters<double>&);

}  // namespace pseg::diff
