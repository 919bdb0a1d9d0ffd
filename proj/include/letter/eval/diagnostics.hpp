#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "letter/cf/bpr_mf.hpp"
#include "letter/cf/interactions.hpp"
#include "letter/core/embedding_table.hpp"
#include "letter/eval/metrics.hpp"
#include "letter/genrec/trainer.hpp"
#include "letter/tokenizer/codebook.hpp"
#include "letter/tokenizer/identifiers.hpp"
#include "letter/tokenizer/rqvae.hpp"

namespace letter {

/// Catalog-wide assignment counts of one codebook level.
struct CodeHistogram {
  std::size_t level = 1;             // 1-based
  std::vector<std::size_t> counts;   // per code
  std::size_t utilization = 0;       // codes with a nonzero count
  double entropy = 0.0;              // natural log, of counts / total

  /// Counts sorted descending, cut into consecutive groups of `group_size`
  /// codes, mean count per group.
  std::vector<double> grouped_frequencies(std::size_t group_size = 15) const;
};

/// ParameterError unless 1 <= level <= L.
CodeHistogram code_histogram(const IdentifierSet& ids, std::size_t level);

/// CSV `code,count`.
void write_code_histogram(const std::filesystem::path& path, const CodeHistogram& h);
/// CSV `group_index,mean_frequency`.
void write_grouped_histogram(const std::filesystem::path& path, const CodeHistogram& h, std::size_t group_size = 15);

struct PcaResult {
  Tensor coordinates;                // [n x k]
  Tensor components;                 // [k x d], unit rows
  std::vector<double> mean;          // d
  std::vector<double> eigenvalues;   // all d, descending, of the covariance X^T X / n
};

/// Centered PCA onto the top `k` components by eigendecomposition of the
/// covariance. Each component's sign is chosen so that the coordinate of
/// largest magnitude along it is positive. When the covariance rank is below
/// k, only rank-many components are returned and a warning is logged.
PcaResult pca(const Tensor& points, std::size_t k);

struct CodeEmbeddingExport {
  std::size_t level = 1;
  PcaResult pca;
  std::vector<std::size_t> counts;  // items assigned to each code
};

/// ParameterError for an invalid level or fewer than 3 codes.
CodeEmbeddingExport export_code_embedding_pca(const CodebookSet& cb, const IdentifierSet& ids, std::size_t level);
/// CSV `code,count,pc1,pc2,pc3`.
void write_code_embedding_pca(const std::filesystem::path& path, const CodeEmbeddingExport& e);

struct CfRankingOptions {
  SplitPart part = SplitPart::Test;
  /// Items the user interacted with before the target are not candidates.
  bool exclude_history = true;
};

/// Scores every catalog item by <p_u, q_i> with `items` as item table.
RankingResult cf_ranking(const BprMfModel& cf, const EmbeddingTable& items, const InteractionDataset& data,
                         const CfRankingOptions& options = {});

/// Item table of quantized embeddings zhat for every CF item. When the latent
/// width differs from the CF width the table is mapped by the least-squares
/// linear map from zhat to the CF embeddings. DataError when a CF item has
/// no semantic embedding.
EmbeddingTable quantized_item_table(const RqVae& tokenizer, const EmbeddingTable& semantic, const EmbeddingTable& cf_items);

/// The CF model's own ranking rule with zhat substituted for its item vectors.
RankingResult quantized_embedding_ranking(const RqVae& tokenizer, const EmbeddingTable& semantic, const BprMfModel& cf,
                                          const InteractionDataset& data, const CfRankingOptions& options = {});

enum class OverlapMode { Positionwise, Set };

/// Mean over pairs of the fraction of levels on which two identifiers agree
/// (Positionwise), or |codes_a ∩ codes_b| / L treating codes as sets of
/// (level-free) values (Set). DataError when a pair member has no identifier.
double code_overlap_similarity(const IdentifierSet& ids, std::span<const std::pair<ItemId, ItemId>> pairs,
                               OverlapMode mode = OverlapMode::Positionwise);

/// How often each item appears in the returned lists, counting the first
/// `top` entries of each. Ascending item id, catalog items with 0 included.
std::vector<std::pair<ItemId, std::size_t>> generation_frequency(std::span<const QueryResult> results,
                                                                 const IdentifierSet& ids, std::size_t top = 10);

}  // namespace letter
