#include "letter/genrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "letter/core/error.hpp"
#include "letter/core/log.hpp"
#include "letter/core/text.hpp"
#include "letter/genrec/loss.hpp"

namespace letter {

void RecommenderTrainingConfig::validate() const {
  model.validate();
  if (batch_size == 0) throw ParameterError("batch_size must be >= 1");
  if (!(tau > 0.0)) throw ParameterError("tau must be positive");
  if (eval_every == 0) throw ParameterError("eval_every must be >= 1");
  if (beam.beam_width == 0) throw ParameterError("beam_width must be >= 1");
  if (top_k == 0) throw ParameterError("top_k must be >= 1");
  if (examples.max_history == 0) throw ParameterError("max_history must be >= 1");
  if (!(optimizer.lr > 0.0)) throw ParameterError("learning rate must be positive");
}

std::vector<EvalQuery> make_queries(const TokenVocabulary& vocab, const IdentifierSet& ids,
                                    std::span<const SequenceExample> examples) {
  std::vector<EvalQuery> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({ex.user, prompt_tokens(vocab, ids, ex.history), ex.target});
  return out;
}

std::vector<QueryResult> run_queries(const RecommenderModel& model, const IdentifierTrie& trie,
                                     std::span<const EvalQuery> queries, const BeamSearchOptions& beam) {
  std::vector<QueryResult> out(queries.size());
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& q = queries[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = {q.user, q.target, constrained_beam_search(model, q.prompt, trie, beam)};
  }
  return out;
}

RankingResult to_ranking(std::span<const QueryResult> results) {
  RankingResult out;
  out.reserve(results.size());
  for (const auto& r : results) {
    RankedOutcome o{r.user, std::nullopt, r.list.size()};
    for (std::size_t i = 0; i < r.list.size(); ++i)
      if (r.list[i].item == r.target) {
        o.rank = i + 1;
        break;
      }
    out.push_back(o);
  }
  return out;
}

RecommenderTrainingResult train_recommender(RecommenderModel model, std::span<const TokenSequence> train,
                                            std::span<const EvalQuery> validation, const IdentifierTrie& trie,
                                            const RecommenderTrainingConfig& config) {
  config.validate();
  if (train.empty()) throw DataError("no training sequences for the recommender");
  RecommenderTrainingResult result;
  const SeededRng root(config.seed);
  SeededRng shuffle_rng = root.split("recommender-shuffle");

  std::vector<EvalQuery> val(validation.begin(), validation.end());
  if (config.validation_users > 0 && config.validation_users < val.size()) {
    SeededRng pick = root.split("validation-sample");
    std::vector<std::size_t> idx(val.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    pick.shuffle(idx);
    idx.resize(config.validation_users);
    std::sort(idx.begin(), idx.end());
    std::vector<EvalQuery> subset;
    for (std::size_t i : idx) subset.push_back(val[i]);
    val = std::move(subset);
  }
  auto validate_recall = [&](const RecommenderModel& m) {
    return recall_at_k(to_ranking(run_queries(m, trie, val, config.beam)), config.top_k);
  };

  AdamW opt(config.optimizer);
  auto params = model.parameters();
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TokenSequence> batch;
  bool evaluated = false;
  result.best_validation_recall = -1.0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t token_count = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      ad::Tape tape;
      auto out = model.forward_targets(tape, batch);
      if (out.targets.empty()) continue;
      ad::Var loss = ranking_generation_loss(out.logits, out.targets, config.tau);
      const double value = loss.value().item();
      if (!std::isfinite(value)) throw NumericError("recommender loss became non-finite at epoch " + std::to_string(epoch));
      loss_sum += value;
      token_count += out.targets.size();
      opt.zero_grad(params);
      tape.backward(ad::scale(loss, 1.0 / static_cast<double>(out.targets.size())));
      opt.step(params);
    }
    RecommenderEpochLog entry{epoch, loss_sum / static_cast<double>(std::max<std::size_t>(token_count, 1)),
                              std::numeric_limits<double>::quiet_NaN()};
    if (!val.empty() && (epoch % config.eval_every == 0 || epoch == config.epochs)) {
      entry.validation_recall = validate_recall(model);
      evaluated = true;
      if (entry.validation_recall > result.best_validation_recall) {
        result.best_validation_recall = entry.validation_recall;
        result.best_epoch = epoch;
        if (config.keep_best) result.model = model;
      }
    }
    log::info("recommender epoch " + std::to_string(epoch) + " loss " + text::format_double(entry.loss) +
              (std::isnan(entry.validation_recall)
                   ? std::string()
                   : " val_recall@" + std::to_string(config.top_k) + " " + text::format_double(entry.validation_recall)));
    result.log.push_back(entry);
  }
  if (!evaluated || !config.keep_best) {
    result.model = std::move(model);
    if (!evaluated) {
      result.best_epoch = config.epochs;
      result.best_validation_recall = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return result;
}

RecommenderTrainingResult train_recommender(const InteractionDataset& data, const IdentifierSet& ids,
                                            const RecommenderTrainingConfig& config) {
  config.validate();
  const TokenVocabulary vocab = TokenVocabulary::for_identifiers(ids);
  const IdentifierTrie trie = IdentifierTrie::build(vocab, ids);
  const auto sequences = training_sequences(data, ids, vocab, config.examples);
  const auto val_examples = build_examples(data, ids, SplitPart::Validation, config.examples);
  const auto queries = make_queries(vocab, ids, val_examples);
  SeededRng rng(config.seed);
  RecommenderModel model(config.model, vocab, max_sequence_length(vocab, config.examples.max_history), rng);
  return train_recommender(std::move(model), sequences, queries, trie, config);
}

void write_recommendations(const std::filesystem::path& path, std::span<const QueryResult> results) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << "user_id,rank,item_id,score\n";
  for (const auto& r : results)
    for (std::size_t i = 0; i < r.list.size(); ++i)
      os << r.user << ',' << i + 1 << ',' << r.list[i].item << ',' << text::format_double(r.list[i].score) << '\n';
  if (!os) throw DataError("failed writing " + path.string());
}

void write_recommender_log(const std::filesystem::path& path, std::span<const RecommenderEpochLog> log) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << "epoch,loss,val_recall\n";
  for (const auto& e : log)
    os << e.epoch << ',' << text::format_double(e.loss) << ','
       << (std::isnan(e.validation_recall) ? std::string() : text::format_double(e.validation_recall)) << '\n';
}

}  // namespace letter
