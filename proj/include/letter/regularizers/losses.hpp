#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "letter/core/autodiff.hpp"
#include "letter/core/rng.hpp"
#include "letter/regularizers/constrained_kmeans.hpp"

namespace letter {

/// infonce: -mean log(exp(s_ii) / sum_j exp(s_ij)).
/// ratio: -mean exp(s_ii) / sum_j exp(s_ij), the ratio without the log.
enum class ContrastiveMode { InfoNce, Ratio };
/// Similarity s(a, b): raw inner product or cosine.
enum class Similarity { Inner, Cosine };

ContrastiveMode parse_contrastive_mode(const std::string& name);
std::string to_string(ContrastiveMode m);
Similarity parse_similarity(const std::string& name);
std::string to_string(Similarity s);

/// Collaborative alignment of quantized latents [B x d] with frozen CF
/// vectors [B x d], in-batch negatives. B = 1 yields 0 in infonce mode (one
/// candidate) and a logged warning; B = 0 is a ParameterError.
ad::Var cf_alignment_loss(ad::Var zhat, const Tensor& h, ContrastiveMode mode = ContrastiveMode::InfoNce,
                          Similarity similarity = Similarity::Inner);

struct DiversityLoss {
  ad::Var value;             // undefined (invalid Var) when every item was skipped
  std::size_t used = 0;      // (item, level) pairs that contributed
  std::size_t skipped = 0;   // pairs whose code sits alone in its cluster
};

/// Code-diversity contrastive loss. For level l, batch item b with code
/// c = codes[l][b]: anchor e_c, positive e_+ drawn uniformly from the other
/// members of c's cluster, negatives all codes except c. Per level the loss
/// is averaged over contributing items; the result is the mean over levels
/// that had at least one contributing item.
///   tables[l]   codebook of level l on the tape [N x d]
///   clusters[l] cluster assignment of level l's codes
DiversityLoss diversity_loss(const std::vector<ad::Var>& tables, const std::vector<std::vector<std::uint32_t>>& codes,
                             const std::vector<ClusterAssignment>& clusters, SeededRng& rng,
                             ContrastiveMode mode = ContrastiveMode::InfoNce, Similarity similarity = Similarity::Inner);

/// sem + alpha * cf + beta * div. ParameterError for negative weights.
double total_loss(double sem, double cf, double div, double alpha, double beta);
ad::Var total_loss(ad::Var sem, ad::Var cf, ad::Var div, double alpha, double beta);

}  // namespace letter
