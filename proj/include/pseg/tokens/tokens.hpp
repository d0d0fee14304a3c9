#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "pseg/diff/tensor.hpp"

namespace pseg::tokens {

inline constexpr std::size_t kEmbedDim = 1280;
inline constexpr std::size_t kNumTokens = 256;
inline constexpr std::size_t kGridSide = 16;
inline constexpr std::size_t kImageSide = 224;

// 1280×256 patch tokens, stored channel-major: values[c * 256 + t].
struct TokenSequence {
  std::string image_id;
  std::vector<float> values;

  float at(std::size_t channel, std::size_t token) const { return values[channel * kNumTokens + token]; }
  // Throws ShapeError / NumericError when the sequence is not 1280×256 finite.
  void validate() const;
};

// 1280×16×16 grid; token t sits at (t / 16, t % 16).
struct TokenGrid {
  diff::Tensor<float> values;
};

TokenGrid permute_tokens(const TokenSequence& seq);
TokenSequence unpermute_tokens(const TokenGrid& grid, std::string image_id);

struct TokenSourceSpec {
  enum class Kind { Stub, File };
  Kind kind = Kind::Stub;
  std::uint64_t seed = 0;
  std::filesystem::path path;

  static TokenSourceSpec stub(std::uint64_t seed) { return {Kind::Stub, seed, {}}; }
  static TokenSourceSpec file(std::filesystem::path p) { return {Kind::File, 0, std::move(p)}; }
  // "stub:SEED" or "file:PATH".
  static TokenSourceSpec parse(const std::string& text);
  std::string to_string() const;
};

class TokenSource {
 public:
  virtual ~TokenSource() = default;
  // `image` is 3×224×224 with values in [0, 1].
  virtual TokenSequence extract(const diff::Tensor<float>& image, const std::string& image_id) const = 0;
};

// Deterministic stand-in for a frozen foundation model: a SplitMix64
// counter stream keyed by (seed, hash of the image's float bytes), scaled
// to [-1, 1).
class StubTokenSource final : public TokenSource {
 public:
  explicit StubTokenSource(std::uint64_t seed) : seed_(seed) {}
  TokenSequence extract(const diff::Tensor<float>& image, const std::string& image_id) const override;

 private:
  std::uint64_t seed_;
};

// Serves tokens exported to a PTOK file, looked up by image id. The image
// itself is only shape-checked.
class FileTokenSource final : public TokenSource {
 public:
  explicit FileTokenSource(const std::filesystem::path& path);
  TokenSequence extract(const diff::Tensor<float>& image, const std::string& image_id) const override;

  bool contains(const std::string& image_id) const { return by_id_.contains(image_id); }
  std::size_t size() const { return by_id_.size(); }

 private:
  std::filesystem::path path_;
  std::unordered_map<std::string, TokenSequence> by_id_;
};

std::unique_ptr<TokenSource> make_token_source(const TokenSourceSpec& spec);

// One-shot convenience over make_token_source.
TokenSequence extract_tokens(const TokenSourceSpec& spec, const diff::Tensor<float>& image,
                             const std::string& image_id);

// PTOK: "PTOK", u32 version, u32 count; per record u16 id length, UTF-8 id,
// u32 embed dim, u32 token count, f32 payload token-major (all 1280 values
// of token 0 first). All integers little-endian.
inline constexpr std::uint32_t kTokenFileVersion = 1;

void write_tokens(const std::vector<TokenSequence>& sequences, const std::filesystem::path& path);
std::vector<TokenSequence> read_tokens(const std::filesystem::path& path);

}  // namespace pseg::tokens
