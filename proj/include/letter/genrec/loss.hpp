#pragma once

#include <span>
#include <vector>

#include "letter/core/autodiff.hpp"
#include "letter/genrec/model.hpp"

namespace letter {

/// Sum over scored tokens of -log softmax(logits / tau)[target]. At tau = 1
/// this is plain token-level cross-entropy; tau < 1 concentrates the gradient
/// on high-scoring (hard) negatives. ParameterError unless tau > 0; DataError
/// for a target outside the vocabulary.
ad::Var ranking_generation_loss(ad::Var logits, std::span<const std::uint32_t> targets, double tau);

/// Loss of one encoded example under the model.
double ranking_generation_loss(const RecommenderModel& model, const TokenSequence& seq, double tau);

/// Weight each non-target token receives in the tempered loss gradient:
/// exp(l_v / tau) / sum_{v' != target} exp(l_v' / tau). The target entry is 0;
/// the rest sum to 1.
std::vector<double> hard_negative_weight(std::span<const double> logits, std::size_t target, double tau);

}  // namespace letter
