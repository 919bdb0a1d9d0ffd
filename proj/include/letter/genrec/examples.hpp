#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "letter/cf/interactions.hpp"
#include "letter/genrec/vocabulary.hpp"
#include "letter/tokenizer/identifiers.hpp"

namespace letter {

/// How training examples are cut from a user's training sequence.
///   SlidingWindow  one example per prefix: target s[t] for every t >= 1
///   LastTarget     one example per user: target is the last training item
enum class ExampleMode { SlidingWindow, LastTarget };

ExampleMode parse_example_mode(std::string_view s);
std::string to_string(ExampleMode m);

/// Which leave-one-out target an example predicts. Validation examples use the
/// training items as history; test examples use everything but the last item.
enum class SplitPart { Train, Validation, Test };

struct SequenceExample {
  UserId user = 0;
  std::vector<ItemId> history;  // oldest first, at most max_history items
  ItemId target = 0;

  friend bool operator==(const SequenceExample&, const SequenceExample&) = default;
};

struct ExampleOptions {
  ExampleMode mode = ExampleMode::SlidingWindow;
  std::size_t max_history = 20;
};

/// DataError when an item of a user's sequence has no identifier.
std::vector<SequenceExample> build_examples(const InteractionDataset& data, const IdentifierSet& ids,
                                            SplitPart part, const ExampleOptions& options = {});

/// A token sequence with the positions whose next-token prediction is scored:
/// for p in target_positions the model's output at p predicts tokens[p + 1].
struct TokenSequence {
  std::vector<std::uint32_t> tokens;
  std::vector<std::uint32_t> target_positions;

  std::size_t target_count() const noexcept { return target_positions.size(); }
};

/// [begin] followed by the identifier tokens of each history item.
std::vector<std::uint32_t> prompt_tokens(const TokenVocabulary& vocab, const IdentifierSet& ids,
                                         std::span<const ItemId> history);

/// Prompt followed by the target identifier; every target token is scored.
TokenSequence encode_example(const TokenVocabulary& vocab, const IdentifierSet& ids, const SequenceExample& ex);

/// Training sequences equivalent to encoding every training example
/// separately. In sliding-window mode the examples of a user whose context
/// still fits the history cap share one causal sequence; later examples are
/// encoded individually. The total target count equals the sum over examples.
std::vector<TokenSequence> training_sequences(const InteractionDataset& data, const IdentifierSet& ids,
                                              const TokenVocabulary& vocab, const ExampleOptions& options = {});

/// Longest sequence any example under `max_history` can produce.
std::size_t max_sequence_length(const TokenVocabulary& vocab, std::size_t max_history);

}  // namespace letter
