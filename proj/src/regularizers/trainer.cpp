#include "letter/regularizers/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "letter/core/error.hpp"
#include "letter/core/text.hpp"
#include "letter/tokenizer/kmeans.hpp"

namespace letter {

void TokenizerTrainingConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0) throw ParameterError("alpha and beta must be nonnegative");
  if (model.mu < 0.0) throw ParameterError("mu must be nonnegative");
  if (batch_size == 0) throw ParameterError("batch_size must be positive");
  if (alpha > 0.0 && batch_size < 2) throw ParameterError("batch_size must be at least 2 when alpha > 0");
  if (beta > 0.0 && (clusters == 0 || clusters > model.codebook_size))
    throw ParameterError("cluster count K must be in [1, N]");
  if (cluster_refresh_every == 0) throw ParameterError("cluster_refresh_every must be positive");
  if (optimizer.lr <= 0.0) throw ParameterError("learning rate must be positive");
}

std::vector<double> code_utilization(const RqVae& model, const Tensor& semantic) {
  const BatchQuantization q = model.quantize(semantic);
  const std::size_t n_codes = model.codebooks().size();
  std::vector<double> out;
  for (std::size_t l = 0; l < q.levels; ++l) {
    std::vector<bool> used(n_codes, false);
    for (std::size_t i = 0; i < q.count; ++i) used[q.code(i, l)] = true;
    out.push_back(static_cast<double>(std::ranges::count(used, true)) / static_cast<double>(n_codes));
  }
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // A trailing singleton has no in-batch negatives; fold it into the previous batch.
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

Tensor gather(const Tensor& m, const std::vector<std::size_t>& rows) {
  Tensor out({rows.size(), m.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) std::ranges::copy(m.row(rows[i]), out.row(i).begin());
  return out;
}

std::vector<ClusterAssignment> cluster_codebooks(const RqVae& model, std::size_t k, std::size_t levels,
                                                 SeededRng& rng) {
  std::vector<ClusterAssignment> out;
  for (std::size_t l = 0; l < levels; ++l) out.push_back(constrained_kmeans(model.codebooks().level(l).value, k, rng));
  return out;
}

}  // namespace

TokenizerTrainingResult train_tokenizer(const EmbeddingTable& semantic, const EmbeddingTable* cf,
                                        const TokenizerTrainingConfig& config) {
  config.validate();
  const std::size_t n = semantic.size();
  if (n == 0) throw DataError("train_tokenizer: empty semantic table");
  RqVaeConfig model_cfg = config.model;
  if (model_cfg.input_dim == 0) model_cfg.input_dim = semantic.dim();
  if (model_cfg.input_dim != semantic.dim())
    throw DimensionError("tokenizer input_dim " + std::to_string(model_cfg.input_dim) +
                         " does not match semantic dimension " + std::to_string(semantic.dim()));

  Tensor cf_matrix;
  if (config.alpha > 0.0) {
    if (cf == nullptr) throw DataError("alpha > 0 requires CF embeddings");
    std::vector<ItemId> missing;
    for (ItemId id : semantic.ids())
      if (!cf->contains(id)) missing.push_back(id);
    if (!missing.empty()) {
      std::string list;
      for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 10); ++i)
        list += (i ? ", " : "") + std::to_string(missing[i]);
      if (missing.size() > 10) list += ", ...";
      throw DataError(std::to_string(missing.size()) + " items lack CF embeddings: " + list);
    }
    if (cf->dim() != model_cfg.latent_dim)
      throw DimensionError("CF dimension " + std::to_string(cf->dim()) + " differs from latent dimension " +
                           std::to_string(model_cfg.latent_dim));
    cf_matrix = cf->gather(semantic.ids());
  }

  const SeededRng master(config.seed);
  SeededRng init_rng = master.split("init");
  SeededRng kmeans_rng = master.split("kmeans-init");
  SeededRng shuffle_rng = master.split("shuffle");
  SeededRng diversity_rng = master.split("diversity");
  SeededRng cluster_rng = master.split("clusters");
  SeededRng restart_rng = master.split("restart");

  TokenizerTrainingResult result;
  result.model = RqVae(model_cfg, init_rng);
  RqVae& model = result.model;
  const Tensor& S = semantic.matrix();
  if (config.kmeans_init) kmeans_init_codebooks(model.encode(S), model.codebooks(), kmeans_rng);

  const std::size_t L = model_cfg.levels, N = model_cfg.codebook_size;
  const std::size_t div_levels = config.diversity_all_levels ? L : 1;
  AdamW opt(config.optimizer);
  std::vector<ad::Parameter*> params = model.parameters();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.beta > 0.0 && epoch % config.cluster_refresh_every == 0)
      result.clusters = cluster_codebooks(model, config.clusters, div_levels, cluster_rng);

    shuffle_rng.shuffle(order);
    TokenizerEpochLog entry;
    entry.epoch = epoch + 1;
    std::vector<std::vector<bool>> used(L, std::vector<bool>(N, false));
    std::vector<Tensor> last_residuals;
    const auto batches = make_batches(order, config.batch_size);
    for (const auto& rows : batches) {
      ad::Tape tape;
      RqVaeForward f = model.forward(tape, gather(S, rows));
      for (std::size_t i = 0; i < f.quant.count; ++i)
        for (std::size_t l = 0; l < L; ++l) used[l][f.quant.code(i, l)] = true;

      ad::Var cf_loss, div_loss;
      if (config.alpha > 0.0) {
        ad::Var zq = ad::straight_through(f.z, f.zhat);
        cf_loss = cf_alignment_loss(zq, gather(cf_matrix, rows), config.contrastive_mode, config.similarity);
        entry.cf += cf_loss.value().item();
      }
      if (config.beta > 0.0) {
        std::vector<ad::Var> tables(f.code_tables.begin(), f.code_tables.begin() + static_cast<std::ptrdiff_t>(div_levels));
        std::vector<std::vector<std::uint32_t>> codes;
        for (std::size_t l = 0; l < div_levels; ++l) codes.push_back(f.quant.level_codes(l));
        DiversityLoss d = diversity_loss(tables, codes, result.clusters, diversity_rng, config.contrastive_mode,
                                         config.similarity);
        entry.diversity_skipped += d.skipped;
        if (d.value.valid()) {
          div_loss = d.value;
          entry.diversity += div_loss.value().item();
        }
      }
      ad::Var loss = total_loss(f.semantic_loss, cf_loss, div_loss, config.alpha, config.beta);
      entry.semantic += f.semantic_loss.value().item();
      entry.total += loss.value().item();
      opt.zero_grad(params);
      tape.backward(loss);
      opt.step(params);
      last_residuals = std::move(f.quant.residuals);
    }
    const double nb = static_cast<double>(batches.size());
    entry.semantic /= nb;
    entry.cf /= nb;
    entry.diversity /= nb;
    entry.total /= nb;

    if (config.dead_code_restart) {
      for (std::size_t l = 0; l < L; ++l) {
        ad::Parameter& table = model.codebooks().level(l);
        const Tensor& pool = last_residuals[l];
        for (std::size_t c = 0; c < N; ++c) {
          if (used[l][c]) continue;
          const auto src = static_cast<std::size_t>(restart_rng.below(pool.rows()));
          std::ranges::copy(pool.row(src), table.value.row(c).begin());
          std::ranges::fill(table.first_moment.row(c), 0.0);
          std::ranges::fill(table.second_moment.row(c), 0.0);
          ++entry.restarted_codes;
        }
      }
    }
    entry.utilization = code_utilization(model, S);
    result.log.push_back(std::move(entry));
  }
  if (config.beta > 0.0 && result.clusters.empty())
    result.clusters = cluster_codebooks(model, config.clusters, div_levels, cluster_rng);
  return result;
}

void write_tokenizer_log(const std::filesystem::path& path, const std::vector<TokenizerEpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const std::size_t levels = log.empty() ? 0 : log.front().utilization.size();
  out << "epoch,L_sem,L_cf,L_div,total";
  for (std::size_t l = 0; l < levels; ++l) out << ",util_l" << (l + 1);
  out << '\n';
  for (const auto& e : log) {
    out << e.epoch << ',' << text::format_double(e.semantic) << ',' << text::format_double(e.cf) << ','
        << text::format_double(e.diversity) << ',' << text::format_double(e.total);
    for (double u : e.utilization) out << ',' << text::format_double(u);
    out << '\n';
  }
}

}  // namespace letter
