#include "letter/genrec/examples.hpp"

#include <algorithm>

#include "letter/core/error.hpp"

namespace letter {

ExampleMode parse_example_mode(std::string_view s) {
  if (s == "sliding-window") return ExampleMode::SlidingWindow;
  if (s == "last-target") return ExampleMode::LastTarget;
  throw ParameterError("unknown example mode '" + std::string(s) + "' (expected sliding-window or last-target)");
}

std::string to_string(ExampleMode m) { return m == ExampleMode::SlidingWindow ? "sliding-window" : "last-target"; }

namespace {

void require_identifiers(const UserSequence& u, const IdentifierSet& ids) {
  for (ItemId item : u.items)
    if (!ids.contains(item))
      throw DataError("item " + std::to_string(item) + " of user " + std::to_string(u.user) + " has no identifier");
}

SequenceExample make_example(UserId user, std::span<const ItemId> seq, std::size_t t, std::size_t max_history) {
  const std::size_t begin = t > max_history ? t - max_history : 0;
  return SequenceExample{user, std::vector<ItemId>(seq.begin() + begin, seq.begin() + t), seq[t]};
}

}  // namespace

std::vector<SequenceExample> build_examples(const InteractionDataset& data, const IdentifierSet& ids,
                                            SplitPart part, const ExampleOptions& options) {
  if (options.max_history == 0) throw ParameterError("max_history must be >= 1");
  std::vector<SequenceExample> out;
  for (const UserSequence& u : data.users()) {
    require_identifiers(u, ids);
    if (u.items.size() < 3) continue;
    switch (part) {
      case SplitPart::Train: {
        const auto seq = InteractionDataset::train_items(u);
        if (seq.size() < 2) break;
        if (options.mode == ExampleMode::SlidingWindow) {
          for (std::size_t t = 1; t < seq.size(); ++t) out.push_back(make_example(u.user, seq, t, options.max_history));
        } else {
          out.push_back(make_example(u.user, seq, seq.size() - 1, options.max_history));
        }
        break;
      }
      case SplitPart::Validation: {
        const std::span<const ItemId> all(u.items);
        out.push_back(make_example(u.user, all, all.size() - 2, options.max_history));
        break;
      }
      case SplitPart::Test: {
        const std::span<const ItemId> all(u.items);
        out.push_back(make_example(u.user, all, all.size() - 1, options.max_history));
        break;
      }
    }
  }
  return out;
}

std::vector<std::uint32_t> prompt_tokens(const TokenVocabulary& vocab, const IdentifierSet& ids,
                                         std::span<const ItemId> history) {
  std::vector<std::uint32_t> out;
  out.reserve(1 + history.size() * vocab.max_identifier_length());
  out.push_back(TokenVocabulary::kBegin);
  for (ItemId item : history) vocab.append_tokens(ids.at(item), out);
  return out;
}

namespace {

void append_target(const TokenVocabulary& vocab, const Identifier& id, TokenSequence& seq) {
  const std::size_t start = seq.tokens.size();
  vocab.append_tokens(id, seq.tokens);
  for (std::size_t p = start; p < seq.tokens.size(); ++p) seq.target_positions.push_back(static_cast<std::uint32_t>(p - 1));
}

}  // namespace

TokenSequence encode_example(const TokenVocabulary& vocab, const IdentifierSet& ids, const SequenceExample& ex) {
  TokenSequence seq;
  seq.tokens = prompt_tokens(vocab, ids, ex.history);
  append_target(vocab, ids.at(ex.target), seq);
  return seq;
}

std::vector<TokenSequence> training_sequences(const InteractionDataset& data, const IdentifierSet& ids,
                                              const TokenVocabulary& vocab, const ExampleOptions& options) {
  if (options.mode == ExampleMode::LastTarget) {
    std::vector<TokenSequence> out;
    for (const auto& ex : build_examples(data, ids, SplitPart::Train, options))
      out.push_back(encode_example(vocab, ids, ex));
    return out;
  }
  if (options.max_history == 0) throw ParameterError("max_history must be >= 1");
  std::vector<TokenSequence> out;
  for (const UserSequence& u : data.users()) {
    require_identifiers(u, ids);
    if (u.items.size() < 3) continue;
    const auto seq = InteractionDataset::train_items(u);
    if (seq.size() < 2) continue;
    // Targets 1..M see their full prefix, so they share one sequence.
    const std::size_t packed = std::min(seq.size(), options.max_history + 1);
    TokenSequence shared;
    shared.tokens.push_back(TokenVocabulary::kBegin);
    vocab.append_tokens(ids.at(seq[0]), shared.tokens);
    for (std::size_t t = 1; t < packed; ++t) append_target(vocab, ids.at(seq[t]), shared);
    out.push_back(std::move(shared));
    for (std::size_t t = packed; t < seq.size(); ++t)
      out.push_back(encode_example(vocab, ids, make_example(u.user, seq, t, options.max_history)));
  }
  return out;
}

std::size_t max_sequence_length(const TokenVocabulary& vocab, std::size_t max_history) {
  return 1 + (max_history + 1) * vocab.max_identifier_length();
}

}  // namespace letter
