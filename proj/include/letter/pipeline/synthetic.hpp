#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "letter/cf/interactions.hpp"
#include "letter/core/embedding_table.hpp"

namespace letter {

/// Generator for a catalog with topic structure in the semantic vectors and
/// community structure in behavior. Each item has a semantic topic and a
/// behavior community; with probability `coupling` the community is the one
/// its topic maps to, otherwise a random one, so semantic and collaborative
/// similarity only partly agree. A semantic vector is its topic centroid plus
/// a small offset shared by its community plus item noise, so behavior is
/// weakly visible in the content.
///
/// Users like `communities_per_user` communities. A sequence starts in one of
/// them and, at every step, stays in the current community with probability
/// `stay_probability` or moves to another liked community. Within a community
/// items are drawn with Zipf weights (rank^-popularity_exponent), and the next
/// item is the successor of the previous one in that community's item order
/// with probability `successor_probability`, giving learnable sequential
/// structure.
struct SyntheticSpec {
  std::size_t items = 2000;
  std::size_t users = 2000;
  std::size_t topics = 20;
  std::size_t semantic_dim = 64;
  double topic_scale = 1.0;      // stddev of topic centroids
  double semantic_noise = 0.35;  // stddev of item offsets from the centroid
  double community_scale = 0.3;  // stddev of the per-community semantic offset
  std::size_t communities = 20;
  double coupling = 0.5;
  std::size_t communities_per_user = 2;
  double stay_probability = 0.8;
  double successor_probability = 0.5;
  double popularity_exponent = 0.3;
  std::size_t min_length = 5;
  std::size_t max_length = 16;  // lengths uniform in [min_length, max_length]
  std::uint64_t seed = 42;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are a ParameterError.
  static SyntheticSpec from_json(const nlohmann::json& j);
};

struct SyntheticData {
  EmbeddingTable semantic;
  std::vector<Interaction> interactions;
  std::vector<std::uint32_t> topic;      // per item id
  std::vector<std::uint32_t> community;  // per item id
};

/// Deterministic given spec.seed. ParameterError for an infeasible spec.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace letter
