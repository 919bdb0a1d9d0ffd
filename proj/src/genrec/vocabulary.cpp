#include "letter/genrec/vocabulary.hpp"

#include "letter/core/error.hpp"

namespace letter {

TokenVocabulary::TokenVocabulary(std::size_t levels, std::size_t codebook_size, std::size_t disambiguators)
    : levels_(levels), codebook_size_(codebook_size), disambiguators_(disambiguators) {
  if (levels == 0 || codebook_size == 0) throw ParameterError("vocabulary needs levels >= 1 and codebook_size >= 1");
}

TokenVocabulary TokenVocabulary::for_identifiers(const IdentifierSet& ids) {
  return TokenVocabulary(ids.levels(), ids.codebook_size(), ids.disambiguator_count());
}

std::uint32_t TokenVocabulary::code_token(std::size_t level, std::uint32_t code) const {
  if (level >= levels_ || code >= codebook_size_)
    throw DataError("code " + std::to_string(code) + " at level " + std::to_string(level + 1) +
                    " is outside the vocabulary");
  return static_cast<std::uint32_t>(kSpecialCount + level * codebook_size_ + code);
}

std::uint32_t TokenVocabulary::disambiguator_token(std::uint32_t k) const {
  if (k >= disambiguators_) throw DataError("disambiguator " + std::to_string(k) + " is outside the vocabulary");
  return static_cast<std::uint32_t>(kSpecialCount + levels_ * codebook_size_ + k);
}

void TokenVocabulary::append_tokens(const Identifier& id, std::vector<std::uint32_t>& out) const {
  if (id.codes.size() != levels_)
    throw DataError("identifier of item " + std::to_string(id.item) + " has " + std::to_string(id.codes.size()) +
                    " codes, vocabulary expects " + std::to_string(levels_));
  for (std::size_t l = 0; l < levels_; ++l) out.push_back(code_token(l, id.codes[l]));
  if (id.disambiguator) out.push_back(disambiguator_token(*id.disambiguator));
}

std::vector<std::uint32_t> TokenVocabulary::tokens(const Identifier& id) const {
  std::vector<std::uint32_t> out;
  out.reserve(levels_ + 1);
  append_tokens(id, out);
  return out;
}

std::string TokenVocabulary::token_name(std::uint32_t token) const {
  if (token == kBegin) return "<bos>";
  if (token == kEnd) return "<eos>";
  if (token == kPad) return "<pad>";
  if (token >= size()) throw DataError("token " + std::to_string(token) + " is outside the vocabulary");
  const std::size_t t = token - kSpecialCount;
  if (t < levels_ * codebook_size_)
    return "L" + std::to_string(t / codebook_size_ + 1) + ":" + std::to_string(t % codebook_size_);
  return "D:" + std::to_string(t - levels_ * codebook_size_);
}

nlohmann::json TokenVocabulary::to_json() const {
  return {{"levels", levels_}, {"codebook_size", codebook_size_}, {"disambiguators", disambiguators_}};
}

TokenVocabulary TokenVocabulary::from_json(const nlohmann::json& j) {
  try {
    return TokenVocabulary(j.at("levels").get<std::size_t>(), j.at("codebook_size").get<std::size_t>(),
                           j.at("disambiguators").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("vocabulary header: ") + e.what());
  }
}

}  // namespace letter
