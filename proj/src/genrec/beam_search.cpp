#include "letter/genrec/beam_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "letter/core/error.hpp"

namespace letter {

std::vector<double> log_softmax(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw ParameterError("temperature must be positive");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v / tau);
  double z = 0.0;
  for (double v : logits) z += std::exp(v / tau - mx);
  const double log_z = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] / tau - log_z;
  return out;
}

namespace {

struct Beam {
  IdentifierTrie::NodeId node = IdentifierTrie::kRoot;
  DecodeState state;
  double score = 0.0;
  std::vector<std::uint32_t> tokens;
};

struct Candidate {
  std::size_t parent;
  std::uint32_t token;
  IdentifierTrie::NodeId node;
  double score;
  std::vector<std::uint32_t> tokens;
};

}  // namespace

std::vector<ScoredItem> constrained_beam_search(const RecommenderModel& model, std::span<const std::uint32_t> prompt,
                                                const IdentifierTrie& trie, const BeamSearchOptions& options) {
  if (options.beam_width == 0) throw ParameterError("beam_width must be >= 1");
  if (trie.leaf_count() == 0) throw StateError("beam search over an empty catalog");
  std::vector<ScoredItem> finished;
  std::vector<Beam> beams(1);
  beams[0].state = model.begin(prompt);

  while (!beams.empty()) {
    std::vector<Candidate> pool;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const auto lp = log_softmax(beams[b].state.logits(), options.inference_tau);
      for (const auto& [tok, child] : trie.children(beams[b].node)) {
        Candidate c{b, tok, child, beams[b].score + lp[tok], beams[b].tokens};
        c.tokens.push_back(tok);
        pool.push_back(std::move(c));
      }
    }
    std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.tokens < b.tokens;
    });
    if (pool.size() > options.beam_width) pool.resize(options.beam_width);

    std::vector<Beam> next;
    for (Candidate& c : pool) {
      if (auto item = trie.item(c.node)) {
        finished.push_back({*item, c.score});
        continue;
      }
      Beam nb;
      nb.node = c.node;
      nb.state = model.extend(beams[c.parent].state, c.token);
      nb.score = c.score;
      nb.tokens = std::move(c.tokens);
      next.push_back(std::move(nb));
    }
    beams = std::move(next);
  }
  std::sort(finished.begin(), finished.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
  if (finished.size() > options.beam_width) finished.resize(options.beam_width);
  return finished;
}

}  // namespace letter
