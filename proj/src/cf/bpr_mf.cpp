#include "letter/cf/bpr_mf.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "letter/core/error.hpp"
#include "letter/core/kernels.hpp"

namespace letter {

std::size_t BprMfModel::user_index(UserId user) const {
  auto it = std::ranges::lower_bound(user_ids, user);
  if (it == user_ids.end() || *it != user) throw DataError("unknown user " + std::to_string(user));
  return static_cast<std::size_t>(it - user_ids.begin());
}

bool BprMfModel::has_user(UserId user) const { return std::ranges::binary_search(user_ids, user); }

namespace {

// log(1 + exp(-x)) without overflow.
double softplus_neg(double x) { return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

BprMfModel train_cf(const InteractionDataset& data, const BprConfig& config) {
  if (config.dim == 0) throw ParameterError("train_cf: d_cf must be positive");
  if (config.lr <= 0.0) throw ParameterError("train_cf: learning rate must be positive");
  if (data.empty()) throw DataError("train_cf: empty dataset");
  const SeededRng master(config.seed);
  SeededRng init = master.split("init");
  SeededRng sampler = master.split("sampling");

  const auto& items = data.items();
  const std::size_t n_items = items.size(), d = config.dim;
  auto item_index = [&](ItemId id) {
    return static_cast<std::size_t>(std::ranges::lower_bound(items, id) - items.begin());
  };

  BprMfModel model;
  Tensor P = Tensor::normal({data.users().size(), d}, config.init_stddev, init);
  Tensor Q = Tensor::normal({n_items, d}, config.init_stddev, init);

  struct Pair {
    std::uint32_t user, item;
  };
  std::vector<Pair> pairs;
  std::vector<std::unordered_set<std::uint32_t>> seen(data.users().size());
  for (std::size_t u = 0; u < data.users().size(); ++u) {
    const auto& seq = data.users()[u];
    model.user_ids.push_back(seq.user);
    for (ItemId id : seq.items) seen[u].insert(static_cast<std::uint32_t>(item_index(id)));
    if (seq.items.size() >= 3)
      for (ItemId id : InteractionDataset::train_items(seq))
        pairs.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(item_index(id))});
  }

  std::vector<double> gu(d);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    sampler.shuffle(pairs);
    double loss = 0.0;
    std::size_t updates = 0;
    for (const auto [u, i] : pairs) {
      if (seen[u].size() >= n_items) continue;
      std::uint32_t j;
      do j = static_cast<std::uint32_t>(sampler.below(n_items));
      while (seen[u].contains(j));
      double* pu = P.row(u).data();
      double* qi = Q.row(i).data();
      double* qj = Q.row(j).data();
      double x = 0.0;
      for (std::size_t k = 0; k < d; ++k) x += pu[k] * (qi[k] - qj[k]);
      loss += softplus_neg(x);
      ++updates;
      const double g = sigmoid(-x);  // -d loss / dx
      for (std::size_t k = 0; k < d; ++k) gu[k] = g * (qi[k] - qj[k]) - config.reg * pu[k];
      for (std::size_t k = 0; k < d; ++k) {
        const double p = pu[k];
        qi[k] += config.lr * (g * p - config.reg * qi[k]);
        qj[k] += config.lr * (-g * p - config.reg * qj[k]);
        pu[k] += config.lr * gu[k];
      }
    }
    const double mean = updates ? loss / static_cast<double>(updates) : 0.0;
    if (!std::isfinite(mean)) throw NumericError("train_cf: non-finite loss at epoch " + std::to_string(epoch + 1));
    model.epoch_loss.push_back(mean);
  }
  model.users = std::move(P);
  model.items = EmbeddingTable(items, Q);
  return model;
}

EmbeddingTable load_cf_embeddings(const std::filesystem::path& path) { return read_embedding_table(path); }

std::vector<std::pair<ItemId, ItemId>> nearest_cf_pairs(const EmbeddingTable& table, bool cosine) {
  const std::size_t n = table.size(), d = table.dim();
  if (n < 2) throw DataError("nearest_cf_pairs needs at least two items");
  Tensor m = table.matrix();
  if (cosine) {
    for (std::size_t i = 0; i < n; ++i) {
      auto row = m.row(i);
      double norm = 0.0;
      for (double v : row) norm += v * v;
      norm = std::max(std::sqrt(norm), 1e-12);
      for (double& v : row) v /= norm;
    }
  }
  std::vector<std::uint32_t> best(n);
  std::vector<double> score(n);
  kernels::max_inner_product_neighbor(n, d, m.data(), best.data(), score.data());
  std::vector<std::pair<ItemId, ItemId>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {table.ids()[i], table.ids()[best[i]]};
  return out;
}

}  // namespace letter
