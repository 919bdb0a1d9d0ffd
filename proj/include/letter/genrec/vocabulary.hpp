#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "letter/tokenizer/identifiers.hpp"

namespace letter {

/// Token space of the generative recommender.
///
///   0, 1, 2                 begin, end, pad
///   3 + l*N + c             code c at level l (0-based level)
///   3 + L*N + k             disambiguator suffix k
///
/// Codes are tagged by level, so code 5 at level 1 and at level 2 are
/// different tokens.
class TokenVocabulary {
 public:
  static constexpr std::uint32_t kBegin = 0;
  static constexpr std::uint32_t kEnd = 1;
  static constexpr std::uint32_t kPad = 2;
  static constexpr std::uint32_t kSpecialCount = 3;

  TokenVocabulary() = default;
  TokenVocabulary(std::size_t levels, std::size_t codebook_size, std::size_t disambiguators);

  static TokenVocabulary for_identifiers(const IdentifierSet& ids);

  std::size_t levels() const noexcept { return levels_; }
  std::size_t codebook_size() const noexcept { return codebook_size_; }
  std::size_t disambiguators() const noexcept { return disambiguators_; }
  std::size_t size() const noexcept { return kSpecialCount + levels_ * codebook_size_ + disambiguators_; }
  /// Longest identifier in tokens.
  std::size_t max_identifier_length() const noexcept { return levels_ + (disambiguators_ > 0 ? 1 : 0); }

  std::uint32_t code_token(std::size_t level, std::uint32_t code) const;
  std::uint32_t disambiguator_token(std::uint32_t k) const;
  std::vector<std::uint32_t> tokens(const Identifier& id) const;
  void append_tokens(const Identifier& id, std::vector<std::uint32_t>& out) const;

  /// "<bos>", "<eos>", "<pad>", "L2:17", "D:0".
  std::string token_name(std::uint32_t token) const;

  nlohmann::json to_json() const;
  static TokenVocabulary from_json(const nlohmann::json& j);

  friend bool operator==(const TokenVocabulary&, const TokenVocabulary&) = default;

 private:
  std::size_t levels_ = 0, codebook_size_ = 0, disambiguators_ = 0;
};

}  // namespace letter
