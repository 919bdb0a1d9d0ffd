#include "letter/regularizers/losses.hpp"

#include <numeric>

#include "letter/core/error.hpp"
#include "letter/core/log.hpp"

namespace letter {

ContrastiveMode parse_contrastive_mode(const std::string& name) {
  if (name == "infonce") return ContrastiveMode::InfoNce;
  if (name == "ratio") return ContrastiveMode::Ratio;
  throw ParameterError("unknown contrastive mode '" + name + "' (expected infonce or ratio)");
}

std::string to_string(ContrastiveMode m) { return m == ContrastiveMode::InfoNce ? "infonce" : "ratio"; }

Similarity parse_similarity(const std::string& name) {
  if (name == "inner") return Similarity::Inner;
  if (name == "cosine") return Similarity::Cosine;
  throw ParameterError("unknown similarity '" + name + "' (expected inner or cosine)");
}

std::string to_string(Similarity s) { return s == Similarity::Inner ? "inner" : "cosine"; }

namespace {

// -mean over rows of log p or p at the chosen column.
ad::Var contrastive_rows(ad::Var logits, const std::vector<std::uint32_t>& targets, ContrastiveMode mode,
                         const ad::RowMask* mask) {
  ad::Var per_row = mode == ContrastiveMode::InfoNce ? ad::pick(ad::log_softmax_rows(logits, 1.0, mask), targets)
                                                     : ad::pick(ad::softmax_rows(logits, 1.0, mask), targets);
  return ad::scale(ad::sum(per_row), -1.0 / static_cast<double>(targets.size()));
}

}  // namespace

ad::Var cf_alignment_loss(ad::Var zhat, const Tensor& h, ContrastiveMode mode, Similarity similarity) {
  const Tensor& z = zhat.value();
  if (z.rank() != 2 || h.rank() != 2 || z.rows() != h.rows() || z.cols() != h.cols())
    throw DimensionError("cf_alignment_loss: quantized batch " + z.shape_string() + " vs CF batch " +
                         h.shape_string());
  const std::size_t b = z.rows();
  if (b == 0) throw ParameterError("cf_alignment_loss: empty batch");
  if (b == 1) log::warn("cf_alignment_loss with a batch of 1 has no negatives");
  ad::Tape& tape = zhat.tape();
  ad::Var left = zhat;
  ad::Var right = tape.constant(h);
  if (similarity == Similarity::Cosine) {
    left = ad::normalize_rows(left);
    right = ad::normalize_rows(right);
  }
  std::vector<std::uint32_t> diag(b);
  std::iota(diag.begin(), diag.end(), 0u);
  return contrastive_rows(ad::matmul_nt(left, right), diag, mode, nullptr);
}

DiversityLoss diversity_loss(const std::vector<ad::Var>& tables, const std::vector<std::vector<std::uint32_t>>& codes,
                             const std::vector<ClusterAssignment>& clusters, SeededRng& rng, ContrastiveMode mode,
                             Similarity similarity) {
  if (tables.size() != codes.size() || tables.size() != clusters.size())
    throw DimensionError("diversity_loss: tables, codes and clusters must cover the same levels");
  DiversityLoss out;
  std::size_t levels_used = 0;
  for (std::size_t l = 0; l < tables.size(); ++l) {
    const std::size_t n = tables[l].value().rows();
    if (clusters[l].cluster.size() != n)
      throw DimensionError("diversity_loss: cluster assignment does not match codebook size at level " +
                           std::to_string(l));
    const auto members = clusters[l].members();
    std::vector<std::uint32_t> anchors, positives;
    for (std::uint32_t c : codes[l]) {
      if (c >= n) throw DimensionError("diversity_loss: code index out of range");
      const auto& group = members[clusters[l].cluster[c]];
      if (group.size() < 2) {
        ++out.skipped;
        continue;
      }
      // Uniform over the group minus the anchor.
      auto pick = static_cast<std::size_t>(rng.below(group.size() - 1));
      if (group[pick] >= c) ++pick;
      anchors.push_back(c);
      positives.push_back(group[pick]);
    }
    if (anchors.empty()) continue;
    ad::RowMask mask(anchors.size() * n, 1);
    for (std::size_t i = 0; i < anchors.size(); ++i) mask[i * n + anchors[i]] = 0;
    ad::Var table = similarity == Similarity::Cosine ? ad::normalize_rows(tables[l]) : tables[l];
    ad::Var logits = ad::matmul_nt(ad::gather_rows(table, anchors), table);
    ad::Var level_loss = contrastive_rows(logits, positives, mode, &mask);
    out.value = levels_used == 0 ? level_loss : ad::add(out.value, level_loss);
    out.used += anchors.size();
    ++levels_used;
  }
  if (levels_used > 1) out.value = ad::scale(out.value, 1.0 / static_cast<double>(levels_used));
  return out;
}

double total_loss(double sem, double cf, double div, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw ParameterError("total_loss: alpha and beta must be nonnegative");
  return sem + alpha * cf + beta * div;
}

ad::Var total_loss(ad::Var sem, ad::Var cf, ad::Var div, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0) throw ParameterError("total_loss: alpha and beta must be nonnegative");
  ad::Var out = sem;
  if (alpha > 0.0 && cf.valid()) out = ad::add(out, ad::scale(cf, alpha));
  if (beta > 0.0 && div.valid()) out = ad::add(out, ad::scale(div, beta));
  return out;
}

}  // namespace letter
