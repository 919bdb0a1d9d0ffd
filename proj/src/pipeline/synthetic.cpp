#include "letter/pipeline/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "letter/core/error.hpp"
#include "letter/core/rng.hpp"

namespace letter {

void SyntheticSpec::validate() const {
  if (items == 0 || users == 0) throw ParameterError("synthetic spec needs items >= 1 and users >= 1");
  if (topics == 0 || topics > items) throw ParameterError("synthetic topics must be in [1, items]");
  if (communities == 0 || communities > items) throw ParameterError("synthetic communities must be in [1, items]");
  if (semantic_dim == 0) throw ParameterError("semantic_dim must be >= 1");
  if (communities_per_user == 0 || communities_per_user > communities)
    throw ParameterError("communities_per_user must be in [1, communities]");
  if (min_length < 1 || max_length < min_length) throw ParameterError("need 1 <= min_length <= max_length");
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError(std::string(name) + " must be in [0, 1]");
  };
  prob(coupling, "coupling");
  prob(stay_probability, "stay_probability");
  prob(successor_probability, "successor_probability");
  if (!(topic_scale >= 0.0) || !(semantic_noise >= 0.0) || !(community_scale >= 0.0) || !(popularity_exponent >= 0.0))
    throw ParameterError("synthetic scales must be nonnegative");
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"items", items},
          {"users", users},
          {"topics", topics},
          {"semantic_dim", semantic_dim},
          {"topic_scale", topic_scale},
          {"semantic_noise", semantic_noise},
          {"community_scale", community_scale},
          {"communities", communities},
          {"coupling", coupling},
          {"communities_per_user", communities_per_user},
          {"stay_probability", stay_probability},
          {"successor_probability", successor_probability},
          {"popularity_exponent", popularity_exponent},
          {"min_length", min_length},
          {"max_length", max_length},
          {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  const nlohmann::json defaults = s.to_json();
  for (const auto& [key, value] : j.items())
    if (!defaults.contains(key)) throw ParameterError("unknown synthetic spec key '" + key + "'");
  nlohmann::json m = defaults;
  m.update(j);
  try {
    s.items = m["items"].get<std::size_t>();
    s.users = m["users"].get<std::size_t>();
    s.topics = m["topics"].get<std::size_t>();
    s.semantic_dim = m["semantic_dim"].get<std::size_t>();
    s.topic_scale = m["topic_scale"].get<double>();
    s.semantic_noise = m["semantic_noise"].get<double>();
    s.community_scale = m["community_scale"].get<double>();
    s.communities = m["communities"].get<std::size_t>();
    s.coupling = m["coupling"].get<double>();
    s.communities_per_user = m["communities_per_user"].get<std::size_t>();
    s.stay_probability = m["stay_probability"].get<double>();
    s.successor_probability = m["successor_probability"].get<double>();
    s.popularity_exponent = m["popularity_exponent"].get<double>();
    s.min_length = m["min_length"].get<std::size_t>();
    s.max_length = m["max_length"].get<std::size_t>();
    s.seed = m["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const SeededRng root(spec.seed);
  SeededRng item_rng = root.split("items");
  SeededRng user_rng = root.split("users");
  const std::size_t n = spec.items, d = spec.semantic_dim;

  SyntheticData out;
  out.topic.resize(n);
  out.community.resize(n);
  // Topics and communities are balanced; topic t maps to community t mod C.
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i % spec.topics);
  item_rng.shuffle(order);
  for (std::size_t i = 0; i < n; ++i) {
    out.topic[i] = order[i];
    out.community[i] = item_rng.uniform() < spec.coupling
                           ? static_cast<std::uint32_t>(order[i] % spec.communities)
                           : static_cast<std::uint32_t>(item_rng.below(spec.communities));
  }

  const Tensor centroids = Tensor::normal({spec.topics, d}, spec.topic_scale, item_rng);
  const Tensor offsets = Tensor::normal({spec.communities, d}, spec.community_scale, item_rng);
  Tensor sem({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) 
      sem.at(i, j) = centroids.at(out.topic[i], j) + offsets.at(out.community[i], j) +
                     item_rng.normal(0.0, spec.semantic_noise);
  std::vector<ItemId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<ItemId>(i);
  out.semantic = EmbeddingTable(ids, sem);

  // Per community: a random item order (defines popularity rank and successor).
  std::vector<std::vector<ItemId>> members(spec.communities);
  for (std::size_t i = 0; i < n; ++i) members[out.community[i]].push_back(static_cast<ItemId>(i));
  std::vector<std::vector<double>> weights(spec.communities);
  std::vector<std::vector<std::size_t>> position(spec.communities);
  std::vector<std::size_t> slot(n, 0);
  for (std::size_t c = 0; c < spec.communities; ++c) {
    item_rng.shuffle(members[c]);
    for (std::size_t r = 0; r < members[c].size(); ++r) {
      weights[c].push_back(std::pow(static_cast<double>(r + 1), -spec.popularity_exponent));
      slot[members[c][r]] = r;
    }
  }

  for (UserId u = 0; u < spec.users; ++u) {
    std::vector<std::uint32_t> liked(spec.communities);
    for (std::size_t c = 0; c < spec.communities; ++c) liked[c] = static_cast<std::uint32_t>(c);
    user_rng.shuffle(liked);
    liked.resize(spec.communities_per_user);
    liked.erase(std::remove_if(liked.begin(), liked.end(), [&](std::uint32_t c) { return members[c].empty(); }),
                liked.end());
    if (liked.empty()) continue;
    const std::size_t len = spec.min_length + user_rng.below(spec.max_length - spec.min_length + 1);
    std::uint32_t current = liked[user_rng.below(liked.size())];
    std::optional<ItemId> prev;
    for (std::size_t t = 0; t < len; ++t) {
      bool switched = false;
      if (t > 0 && liked.size() > 1 && user_rng.uniform() >= spec.stay_probability) {
        std::uint32_t next = current;
        while (next == current) next = liked[user_rng.below(liked.size())];
        current = next;
        switched = true;
      }
      const auto& pool = members[current];
      ItemId item;
      if (prev && !switched && user_rng.uniform() < spec.successor_probability)
        item = pool[(slot[*prev] + 1) % pool.size()];
      else
        item = pool[user_rng.categorical(weights[current])];
      out.interactions.push_back({u, item, static_cast<std::int64_t>(t)});
      prev = item;
    }
  }
  return out;
}

}  // namespace letter
