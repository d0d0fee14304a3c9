#include "pseg/tokens/tokens.hpp"

#include <cmath>
#include <unordered_set>

#include "../binary_io.hpp"
#include "pseg/error.hpp"
#include "pseg/rng.hpp"

namespace pseg::tokens {

namespace {

constexpr char kMagic[4] = {'P', 'T', 'O', 'K'};

void check_image(const diff::Tensor<float>& image) {
  const diff::Shape expected{3, kImageSide, kImageSide};
  if (!image.defined() || image.shape() != expected) {
    throw ShapeError("token extraction expects a 3x224x224 image, got " +
                     (image.defined() ? diff::to_string(image.shape()) : std::string("<none>")));
  }
  for (float v : image.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw NumericError("token extraction: image values must lie in [0, 1]");
  }
}

}  // namespace

void TokenSequence::validate() const {
  if (values.size() != kEmbedDim * kNumTokens) {
    throw ShapeError("token sequence '" + image_id + "' holds " + std::to_string(values.size()) +
                     " values, expected 1280x256");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericError("token sequence '" + image_id + "' contains non-finite values");
  }
}

TokenGrid permute_tokens(const TokenSequence& seq) {
  seq.validate();
  // Channel-major storage already places token t of channel c at offset
  // c*256 + (t/16)*16 + t%16, i.e. grid cell (c, t/16, t%16).
  return {diff::Tensor<float>::from({kEmbedDim, kGridSide, kGridSide}, seq.values)};
}

TokenSequence unpermute_tokens(const TokenGrid& grid, std::string image_id) {
  const diff::Shape expected{kEmbedDim, kGridSide, kGridSide};
  if (!grid.values.defined() || grid.values.shape() != expected) {
    throw ShapeError("token grid must be 1280x16x16");
  }
  return {std::move(image_id), {grid.values.data().begin(), grid.values.data().end()}};
}

TokenSourceSpec TokenSourceSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("token source must be stub:SEED or file:PATH, got '" + text + "'");
  const std::string kind = text.substr(0, colon);
  const std::string arg = text.substr(colon + 1);
  if (kind == "stub") {
    std::size_t used = 0;
    const unsigned long long seed = std::stoull(arg, &used);
    if (used != arg.size()) throw std::invalid_argument("invalid stub seed '" + arg + "'");
    return stub(seed);
  }
  if (kind == "file") {
    if (arg.empty()) throw std::invalid_argument("file token source needs a path");
    return file(arg);
  }
  throw std::invalid_argument("unknown token source kind '" + kind + "'");
}

std::string TokenSourceSpec::to_string() const {
  return kind == Kind::Stub ? "stub:" + std::to_string(seed) : "file:" + path.string();
}

TokenSequence StubTokenSource::extract(const diff::Tensor<float>& image, const std::string& image_id) const {
  check_image(image);
  const auto bytes = std::as_bytes(image.data());
  Rng rng(derive_seed(seed_, "stub-tokens", hash_bytes(bytes)));
  TokenSequence seq{image_id, std::vector<float>(kEmbedDim * kNumTokens)};
  for (auto& v : seq.values) {
    // 24 random bits map exactly onto floats in [-1, 1).
    v = static_cast<float>(rng.next_u64() >> 40) * 0x1.0p-23f - 1.0f;
  }
  return seq;
}

FileTokenSource::FileTokenSource(const std::filesystem::path& path) : path_(path) {
  for (auto& seq : read_tokens(path)) by_id_.emplace(seq.image_id, std::move(seq));
}

TokenSequence FileTokenSource::extract(const diff::Tensor<float>& image, const std::string& image_id) const {
  check_image(image);
  auto it = by_id_.find(image_id);
  if (it == by_id_.end()) throw LookupError("token file " + path_.string() + " has no tokens for image '" + image_id + "'");
  return it->second;
}

std::unique_ptr<TokenSource> make_token_source(const TokenSourceSpec& spec) {
  if (spec.kind == TokenSourceSpec::Kind::Stub) return std::make_unique<StubTokenSource>(spec.seed);
  return std::make_unique<FileTokenSource>(spec.path);
}

TokenSequence extract_tokens(const TokenSourceSpec& spec, const diff::Tensor<float>& image,
                             const std::string& image_id) {
  return make_token_source(spec)->extract(image, image_id);
}

void write_tokens(const std::vector<TokenSequence>& sequences, const std::filesystem::path& path) {
  std::unordered_set<std::string> ids;
  for (const auto& seq : sequences) {
    seq.validate();
    if (!ids.insert(seq.image_id).second) throw std::invalid_argument("duplicate image id '" + seq.image_id + "' in token export");
    if (seq.image_id.size() > 0xFFFF) throw std::invalid_argument("image id too long: " + seq.image_id);
  }
  detail::ByteWriter w;
  w.bytes(kMagic, 4);
  w.u32(kTokenFileVersion);
  w.u32(static_cast<std::uint32_t>(sequences.size()));
  for (const auto& seq : sequences) {
    w.u16(static_cast<std::uint16_t>(seq.image_id.size()));
    w.bytes(seq.image_id.data(), seq.image_id.size());
    w.u32(static_cast<std::uint32_t>(kEmbedDim));
    w.u32(static_cast<std::uint32_t>(kNumTokens));
    for (std::size_t t = 0; t < kNumTokens; ++t)
      for (std::size_t c = 0; c < kEmbedDim; ++c) w.f32(seq.at(c, t));
  }
  detail::write_file(path, w.buffer());
}

std::vector<TokenSequence> read_tokens(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path), "token file " + path.string());
  if (r.str(4, "magic") != std::string(kMagic, 4)) throw FormatError("bad token file magic in " + path.string(), 0);
  const auto version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kTokenFileVersion) throw FormatError("unsupported token file version " + std::to_string(version), version_at);
  const std::uint32_t count = r.u32("record count");
  std::vector<TokenSequence> out;
  std::unordered_set<std::string> ids;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto record_at = r.offset();
    TokenSequence seq;
    seq.image_id = r.str(r.u16("id length"), "image id");
    if (!ids.insert(seq.image_id).second) throw FormatError("duplicate image id '" + seq.image_id + "'", record_at);
    const auto dim_at = r.offset();
    const std::uint32_t dim = r.u32("embed dim");
    if (dim != kEmbedDim) throw FormatError("unsupported embed dim " + std::to_string(dim) + " (expected 1280)", dim_at);
    const auto count_at = r.offset();
    const std::uint32_t n = r.u32("token count");
    if (n != kNumTokens) throw FormatError("unsupported token count " + std::to_string(n) + " (expected 256)", count_at);
    r.need(std::size_t{kEmbedDim} * kNumTokens * 4, "token payload");
    seq.values.resize(kEmbedDim * kNumTokens);
    for (std::size_t t = 0; t < kNumTokens; ++t)
      for (std::size_t c = 0; c < kEmbedDim; ++c) seq.values[c * kNumTokens + t] = r.f32("token payload");
    out.push_back(std::move(seq));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after token records", r.offset());
  return out;
}

}  // namespace pseg::tokens
