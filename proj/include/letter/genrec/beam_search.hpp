#pragma once

#include <span>
#include <vector>

#include "letter/genrec/model.hpp"
#include "letter/genrec/trie.hpp"

namespace letter {

struct ScoredItem {
  ItemId item = 0;
  double score = 0.0;  // summed token log-probabilities

  friend bool operator==(const ScoredItem&, const ScoredItem&) = default;
};

struct BeamSearchOptions {
  std::size_t beam_width = 20;
  /// Temperature of the scoring softmax. Scoring is untempered by default.
  double inference_tau = 1.0;
};

/// Beam search over Trie-valid continuations of `prompt`. Each step scores
/// every valid child of every live beam with the full-vocabulary
/// log-softmax; the best beam_width candidates survive, and those that reach
/// a leaf leave the beam as finished items. Returns up to beam_width items by
/// score descending, ties to the lower item id. ParameterError when
/// beam_width is 0.
std::vector<ScoredItem> constrained_beam_search(const RecommenderModel& model, std::span<const std::uint32_t> prompt,
                                                const IdentifierTrie& trie, const BeamSearchOptions& options = {});

/// log softmax(logits / tau), max-subtracted.
std::vector<double> log_softmax(std::span<const double> logits, double tau = 1.0);

}  // namespace letter
