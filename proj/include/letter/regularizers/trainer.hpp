#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "letter/core/embedding_table.hpp"
#include "letter/core/optim.hpp"
#include "letter/regularizers/constrained_kmeans.hpp"
#include "letter/regularizers/losses.hpp"
#include "letter/tokenizer/rqvae.hpp"

namespace letter {

struct TokenizerTrainingConfig {
  RqVaeConfig model;
  double alpha = 0.02;  // collaborative weight
  double beta = 1e-4;   // diversity weight
  std::size_t clusters = 10;  // K
  std::size_t batch_size = 1024;
  std::size_t epochs = 100;
  AdamWConfig optimizer{};
  std::uint64_t seed = 42;
  ContrastiveMode contrastive_mode = ContrastiveMode::InfoNce;
  Similarity similarity = Similarity::Inner;
  bool diversity_all_levels = true;  // false: level 1 only
  std::size_t cluster_refresh_every = 100;  // epochs
  bool dead_code_restart = true;
  bool kmeans_init = true;

  /// ParameterError on an inconsistent configuration.
  void validate() const;
};

struct TokenizerEpochLog {
  std::size_t epoch = 0;
  double semantic = 0, cf = 0, diversity = 0, total = 0;  // batch means
  std::vector<double> utilization;  // per level, fraction of codes used by the catalog
  std::size_t restarted_codes = 0;
  std::size_t diversity_skipped = 0;
};

struct TokenizerTrainingResult {
  RqVae model;
  std::vector<TokenizerEpochLog> log;
  std::vector<ClusterAssignment> clusters;  // latest, per level
};

/// Trains the tokenizer on every item of `semantic` with
///   L = L_sem + alpha * L_cf + beta * L_div
/// over shuffled minibatches. `cf` must cover every item when alpha > 0
/// (DataError naming the missing items otherwise). Deterministic given
/// config.seed.
TokenizerTrainingResult train_tokenizer(const EmbeddingTable& semantic, const EmbeddingTable* cf,
                                        const TokenizerTrainingConfig& config);

/// CSV with columns epoch,L_sem,L_cf,L_div,total,util_l1..util_lL.
void write_tokenizer_log(const std::filesystem::path& path, const std::vector<TokenizerEpochLog>& log);

/// Fraction of codes at each level used by at least one item of `semantic`.
std::vector<double> code_utilization(const RqVae& model, const Tensor& semantic);

}  // namespace letter
