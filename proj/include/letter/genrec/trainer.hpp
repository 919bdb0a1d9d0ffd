#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "letter/core/optim.hpp"
#include "letter/eval/metrics.hpp"
#include "letter/genrec/beam_search.hpp"
#include "letter/genrec/examples.hpp"
#include "letter/genrec/model.hpp"
#include "letter/genrec/trie.hpp"

namespace letter {

struct RecommenderTrainingConfig {
  RecommenderConfig model;
  ExampleOptions examples;
  std::size_t epochs = 50;
  std::size_t batch_size = 16;  // token sequences per optimizer step
  AdamWConfig optimizer;
  double tau = 1.0;
  std::uint64_t seed = 42;
  std::size_t eval_every = 1;
  std::size_t validation_users = 0;  // 0 = every validation user
  BeamSearchOptions beam;
  std::size_t top_k = 10;
  bool keep_best = true;  // return the weights with the best validation recall

  void validate() const;
};

/// A user's prompt and the held-out item it should produce.
struct EvalQuery {
  UserId user = 0;
  std::vector<std::uint32_t> prompt;
  ItemId target = 0;
};

std::vector<EvalQuery> make_queries(const TokenVocabulary& vocab, const IdentifierSet& ids,
                                    std::span<const SequenceExample> examples);

struct QueryResult {
  UserId user = 0;
  ItemId target = 0;
  std::vector<ScoredItem> list;
};

/// Beam search for every query; parallel across queries, output in query order.
std::vector<QueryResult> run_queries(const RecommenderModel& model, const IdentifierTrie& trie,
                                     std::span<const EvalQuery> queries, const BeamSearchOptions& beam);

RankingResult to_ranking(std::span<const QueryResult> results);

struct RecommenderEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;               // mean per scored token
  double validation_recall = 0.0;  // NaN when not evaluated this epoch
};

struct RecommenderTrainingResult {
  RecommenderModel model;
  std::vector<RecommenderEpochLog> log;
  std::size_t best_epoch = 0;  // 0: initial weights
  double best_validation_recall = 0.0;
};

/// Minibatch AdamW on the ranking-guided generation loss. Deterministic given
/// the seed. DataError when `train` is empty. With zero epochs the model is
/// returned unchanged.
RecommenderTrainingResult train_recommender(RecommenderModel model, std::span<const TokenSequence> train,
                                            std::span<const EvalQuery> validation, const IdentifierTrie& trie,
                                            const RecommenderTrainingConfig& config);

/// Builds vocabulary, trie, training sequences and validation queries from a
/// split dataset and trains a freshly initialised model.
RecommenderTrainingResult train_recommender(const InteractionDataset& data, const IdentifierSet& ids,
                                            const RecommenderTrainingConfig& config);

/// CSV `user_id,rank,item_id,score`.
void write_recommendations(const std::filesystem::path& path, std::span<const QueryResult> results);
/// CSV `epoch,loss,val_recall`.
void write_recommender_log(const std::filesystem::path& path, std::span<const RecommenderEpochLog> log);

}  // namespace letter
