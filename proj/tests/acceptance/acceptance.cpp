// Acceptance suite. One PASS/FAIL line per criterion; each criterion's
// deterministic report is also written to <out>/criterion_<n>.txt and the
// pipeline runs behind criteria 8-11 are kept under <out>/runs.
//
//   letter_acceptance [--out DIR] [--criteria 1,2,...] [--seeds 5]
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "letter/core/error.hpp"
#include "letter/core/gradcheck.hpp"
#include "letter/core/log.hpp"
#include "letter/eval/metrics.hpp"
#include "letter/genrec/loss.hpp"
#include "letter/genrec/trainer.hpp"
#include "letter/pipeline/pipeline.hpp"
#include "letter/regularizers/constrained_kmeans.hpp"
#include "letter/regularizers/losses.hpp"
#include "letter/tokenizer/rqvae.hpp"

using namespace letter;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;  // deterministic; no timings
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

double sq(double x) { return x * x; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- 1

Tensor central_difference(ad::Parameter& p, const std::function<double()>& f, double h = 1e-5) {
  Tensor g(p.value.shape());
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double keep = p.value[i];
    p.value[i] = keep + h;
    const double up = f();
    p.value[i] = keep - h;
    const double down = f();
    p.value[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double relative_error(const Tensor& analytic, const Tensor& numeric) {
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-4});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

ClusterAssignment manual_clusters(std::vector<std::uint32_t> cluster, std::size_t k) {
  ClusterAssignment a;
  a.cluster = std::move(cluster);
  a.sizes.assign(k, 0);
  for (auto c : a.cluster) ++a.sizes[c];
  return a;
}

RqVaeConfig tiny_tokenizer() {
  RqVaeConfig c;
  c.input_dim = 5;
  c.latent_dim = 3;
  c.hidden = {4};
  c.levels = 3;
  c.codebook_size = 4;
  c.codebook_init_stddev = 0.5;
  return c;
}

// Full tokenizer objective sem + alpha cf + beta div, its tape gradient
// compared per parameter group with finite differences of plain
// re-evaluations where quantization is frozen at the current point:
//   codes   <- sum_l ||sg[r_{l-1}] - e_{c_l}||^2 + alpha cf(zhat(e)) + beta div(e)
//   encoder <- mu sum_l ||r_{l-1} - sg[e_{c_l}]||^2 + ||s - dec(z + sg[zhat - z])||^2 + alpha cf(z + sg[zhat - z])
//   decoder <- ||s - dec(zhat)||^2
// With alpha = beta = 0 this is the semantic loss alone.
double tokenizer_objective_error(std::uint64_t seed, double alpha, double beta) {
  SeededRng rng(seed);
  RqVaeConfig cfg = tiny_tokenizer();
  cfg.mu = 0.1 + 0.5 * rng.uniform();
  RqVae model(cfg, rng);
  const std::size_t B = 4;
  const Tensor s = Tensor::uniform({B, cfg.input_dim}, -1, 1, rng);
  const Tensor h = Tensor::uniform({B, cfg.latent_dim}, -1, 1, rng);
  const auto clusters = manual_clusters({0, 0, 1, 1}, 2);
  const std::uint64_t positive_seed = seed * 31 + 1;

  auto cf_value = [&](const Tensor& zq) {
    ad::Tape t;
    return cf_alignment_loss(t.constant(zq), h).value().item();
  };
  auto div_value = [&](const std::vector<Tensor>& tables, const std::vector<std::vector<std::uint32_t>>& codes) {
    ad::Tape t;
    std::vector<ad::Var> vars;
    for (const auto& tb : tables) vars.push_back(t.constant(tb));
    SeededRng fixed(positive_seed);
    const auto d = diversity_loss(vars, codes, std::vector<ClusterAssignment>(codes.size(), clusters), fixed);
    return d.value.valid() ? d.value.value().item() : 0.0;
  };

  ad::Tape tape;
  RqVaeForward f = model.forward(tape, s);
  std::vector<std::vector<std::uint32_t>> level_codes;
  for (std::size_t l = 0; l < cfg.levels; ++l) level_codes.push_back(f.quant.level_codes(l));
  ad::Var cf, div;
  if (alpha > 0) cf = cf_alignment_loss(ad::straight_through(f.z, f.zhat), h);
  if (beta > 0) {
    SeededRng fixed(positive_seed);
    div = diversity_loss(f.code_tables, level_codes, std::vector<ClusterAssignment>(cfg.levels, clusters), fixed).value;
  }
  for (auto* p : model.parameters()) p->zero_grad();
  tape.backward(total_loss(f.semantic_loss, cf, div, alpha, beta));

  const BatchQuantization frozen = f.quant;
  const Tensor z0 = f.z.value();
  const Tensor zhat0 = f.zhat.value();
  const double nb = static_cast<double>(B);

  auto codes_loss = [&] {
    double total = 0;
    Tensor zhat({B, cfg.latent_dim}, 0.0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < cfg.levels; ++l) {
        const auto e = model.codebooks().code(l, frozen.code(b, l));
        for (std::size_t j = 0; j < cfg.latent_dim; ++j) {
          total += sq(frozen.residuals[l].at(b, j) - e[j]);
          zhat.at(b, j) += e[j];
        }
      }
    total /= nb;
    if (alpha > 0) total += alpha * cf_value(zhat);
    if (beta > 0) {
      std::vector<Tensor> tables;
      for (std::size_t l = 0; l < cfg.levels; ++l) tables.push_back(model.codebooks().level(l).value);
      total += beta * div_value(tables, level_codes);
    }
    return total;
  };
  auto encoder_loss = [&] {
    const Tensor z = model.encode(s);
    Tensor shifted = z;
    for (std::size_t i = 0; i < z.size(); ++i) shifted[i] = z[i] + (zhat0[i] - z0[i]);
    const Tensor recon = model.decode(shifted);
    double total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) total += sq(s[i] - recon[i]);
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<double> r(z.row(b).begin(), z.row(b).end());
      for (std::size_t l = 0; l < cfg.levels; ++l) {
        const auto e = model.codebooks().code(l, frozen.code(b, l));
        for (std::size_t j = 0; j < r.size(); ++j) {
          total += cfg.mu * sq(r[j] - e[j]);
          r[j] -= e[j];
        }
      }
    }
    total /= nb;
    if (alpha > 0) total += alpha * cf_value(shifted);
    return total;
  };
  auto decoder_loss = [&] {
    const Tensor recon = model.decode(zhat0);
    double total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) total += sq(s[i] - recon[i]);
    return total / nb;
  };

  double worst = 0;
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    auto& p = model.codebooks().level(l);
    worst = std::max(worst, relative_error(p.grad, central_difference(p, codes_loss)));
  }
  std::vector<ad::Parameter*> enc, dec;
  model.encoder().collect(enc);
  model.decoder().collect(dec);
  for (auto* p : enc) worst = std::max(worst, relative_error(p->grad, central_difference(*p, encoder_loss)));
  for (auto* p : dec) worst = std::max(worst, relative_error(p->grad, central_difference(*p, decoder_loss)));
  return worst;
}

Outcome criterion_gradients() {
  constexpr int kInstances = 20;
  constexpr double kTolerance = 1e-4;
  std::map<std::string, std::pair<int, double>> tally;  // loss -> (passed, worst)
  auto record = [&](const std::string& name, double err) {
    auto& [passed, worst] = tally[name];
    if (err < kTolerance) ++passed;
    worst = std::max(worst, err);
  };

  for (int i = 0; i < kInstances; ++i) {
    const auto seed = static_cast<std::uint64_t>(100 + i);
    record("semantic", tokenizer_objective_error(seed, 0.0, 0.0));
    record("total", tokenizer_objective_error(seed, 0.02 + 0.5 * (i % 3), i % 2 ? 1e-2 : 0.3));

    SeededRng rng(200 + i);
    {
      const std::size_t B = 2 + rng.below(7), d = 2 + rng.below(5);
      ad::Parameter zq("zhat", Tensor::uniform({B, d}, -1, 1, rng));
      const Tensor h = Tensor::uniform({B, d}, -1, 1, rng);
      const auto sim = i % 2 ? Similarity::Cosine : Similarity::Inner;
      std::vector<ad::Parameter*> ps{&zq};
      record("cf_alignment",
             check_gradients([&](ad::Tape& t) { return cf_alignment_loss(t.param(zq), h, ContrastiveMode::InfoNce, sim); },
                             ps)
                 .max_relative_error);
    }
    {
      const std::size_t N = 4 + rng.below(5), d = 2 + rng.below(3);
      ad::Parameter e1("e1", Tensor::uniform({N, d}, -1, 1, rng));
      ad::Parameter e2("e2", Tensor::uniform({N, d}, -1, 1, rng));
      std::vector<std::uint32_t> cl(N);
      for (std::size_t c = 0; c < N; ++c) cl[c] = static_cast<std::uint32_t>(c % 2);
      const auto clusters = manual_clusters(cl, 2);
      std::vector<std::vector<std::uint32_t>> codes(2);
      for (auto& level : codes)
        for (int b = 0; b < 5; ++b) level.push_back(static_cast<std::uint32_t>(rng.below(N)));
      std::vector<ad::Parameter*> ps{&e1, &e2};
      const auto sim = i % 2 ? Similarity::Cosine : Similarity::Inner;
      record("diversity", check_gradients(
                              [&](ad::Tape& t) {
                                SeededRng fixed(17 + static_cast<std::uint64_t>(i));
                                return diversity_loss({t.param(e1), t.param(e2)}, codes, {clusters, clusters}, fixed,
                                                      ContrastiveMode::InfoNce, sim)
                                    .value;
                              },
                              ps)
                              .max_relative_error);
    }
    {
      const std::size_t rows = 1 + rng.below(6), V = 3 + rng.below(30);
      ad::Parameter logits("logits", Tensor::normal({rows, V}, 2.0, rng));
      std::vector<std::uint32_t> targets(rows);
      for (auto& t : targets) t = static_cast<std::uint32_t>(rng.below(V));
      const double tau = 0.5 + 1.5 * rng.uniform();
      std::vector<ad::Parameter*> ps{&logits};
      record("ranking_generation",
             check_gradients([&](ad::Tape& t) { return ranking_generation_loss(t.param(logits), targets, tau); }, ps)
                 .max_relative_error);
    }
  }

  Outcome o{true, ""};
  for (const auto& [name, pw] : tally) {
    const auto& [passed, worst] = pw;
    o.pass = o.pass && passed == kInstances;
    o.detail += name + " " + std::to_string(passed) + "/" + std::to_string(kInstances) + " worst " + fmt(worst, 3) + "; ";
  }
  return o;
}

// ---------------------------------------------------------------- 2

std::vector<std::uint32_t> linear_scan_codes(std::vector<double> r, const CodebookSet& cb) {
  std::vector<std::uint32_t> out;
  for (std::size_t l = 0; l < cb.levels(); ++l) {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::uint32_t i = 0; i < cb.size(); ++i) {
      double d = 0;
      for (std::size_t j = 0; j < r.size(); ++j) d += sq(r[j] - cb.code(l, i)[j]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    for (std::size_t j = 0; j < r.size(); ++j) r[j] -= cb.code(l, best)[j];
    out.push_back(best);
  }
  return out;
}

Outcome criterion_quantization() {
  SeededRng rng(2);
  const std::size_t n = 1000, d = 8;
  CodebookSet cb(3, 16, d, 1.0, rng);
  const Tensor z = Tensor::uniform({n, d}, -2, 2, rng);
  const BatchQuantization batch = quantize_batch(z, cb);
  std::size_t mismatches = 0;
  double telescoping = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto q = residual_quantize(z.row(i), cb);
    if (q.codes != linear_scan_codes(std::vector<double>(z.row(i).begin(), z.row(i).end()), cb)) ++mismatches;
    for (std::size_t l = 0; l < 3; ++l)
      if (batch.code(i, l) != q.codes[l]) ++mismatches;
    for (std::size_t j = 0; j < d; ++j) {
      telescoping = std::max(telescoping, std::abs(q.quantized[j] + q.residuals[3][j] - z.at(i, j)));
      telescoping = std::max(telescoping, std::abs(batch.quantized.at(i, j) + batch.residuals[3].at(i, j) - z.at(i, j)));
    }
  }
  return {mismatches == 0 && telescoping <= 1e-10,
          "mismatches " + std::to_string(mismatches) + " max |zhat + r_L - z| " + fmt(telescoping, 3)};
}

// ---------------------------------------------------------------- 3

Outcome criterion_identities() {
  SeededRng rng(3);
  double ce_err = 0, uniform_err = 0, single_err = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng.below(8), V = 2 + rng.below(60);
    const Tensor logits = Tensor::normal({rows, V}, 3.0, rng);
    std::vector<std::uint32_t> targets(rows);
    for (auto& t : targets) t = static_cast<std::uint32_t>(rng.below(V));
    double expected = 0;
    for (std::size_t i = 0; i < rows; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < V; ++v) mx = std::max(mx, logits.at(i, v));
      double z = 0;
      for (std::size_t v = 0; v < V; ++v) z += std::exp(logits.at(i, v) - mx);
      expected += mx + std::log(z) - logits.at(i, targets[i]);
    }
    ad::Tape t;
    const double got = ranking_generation_loss(t.constant(logits), targets, 1.0).value().item();
    ce_err = std::max(ce_err, std::abs(got - expected) / std::max(1.0, std::abs(expected)));

    const double tau = 0.3 + 2.0 * rng.uniform();
    const double level = rng.normal(0.0, 2.0);
    const double uni = ranking_generation_loss(t.constant(Tensor({rows, V}, level)), targets, tau).value().item();
    const double ideal = static_cast<double>(rows) * std::log(static_cast<double>(V));
    uniform_err = std::max(uniform_err, std::abs(uni - ideal) / std::max(1.0, ideal));

    const std::size_t d = 1 + rng.below(6);
    const Tensor zq = Tensor::uniform({1, d}, -3, 3, rng), h = Tensor::uniform({1, d}, -3, 3, rng);
    single_err = std::max(single_err, std::abs(cf_alignment_loss(t.constant(zq), h).value().item()));
  }
  return {ce_err <= 1e-12 && uniform_err <= 1e-12 && single_err == 0.0,
          "tau=1 vs cross-entropy " + fmt(ce_err, 3) + "; uniform vs |y|ln|V| " + fmt(uniform_err, 3) +
              "; infonce B=1 max |value| " + fmt(single_err, 3)};
}

// ---------------------------------------------------------------- 4

Outcome criterion_hard_negatives() {
  SeededRng rng(4);
  const std::size_t V = 50;
  int monotone_ok = 0, tau_ok = 0, above_mean = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> l(V);
    for (auto& x : l) x = rng.normal(0.0, 2.0);
    const std::size_t target = rng.below(V);
    const auto w06 = hard_negative_weight(l, target, 0.6);
    const auto w12 = hard_negative_weight(l, target, 1.2);

    bool monotone = true;
    for (const auto* w : {&w06, &w12})
      for (std::size_t a = 0; a < V; ++a)
        for (std::size_t b = 0; b < V; ++b)
          if (a != target && b != target && l[a] > l[b] && !((*w)[a] > (*w)[b])) monotone = false;
    monotone_ok += monotone;

    // Negatives above the softmax-weighted mean of the negative logits at tau = 0.6.
    double mean = 0;
    for (std::size_t v = 0; v < V; ++v) mean += w06[v] * l[v];
    bool case_ok = true;
    for (std::size_t v = 0; v < V; ++v)
      if (v != target && l[v] > mean) {
        ++above_mean;
        if (!(w06[v] > w12[v])) case_ok = false;
      }
    tau_ok += case_ok;
  }
  return {monotone_ok == 100 && tau_ok == 100,
          "monotone " + std::to_string(monotone_ok) + "/100; w(0.6) > w(1.2) above the mean " + std::to_string(tau_ok) +
              "/100 (" + std::to_string(above_mean) + " negatives)"};
}

// ---------------------------------------------------------------- 5

Outcome criterion_metrics() {
  const std::size_t vocab = 101;
  std::size_t checked = 0, wrong = 0, opauc_wrong = 0;
  for (std::size_t r = 1; r <= 100; ++r) {
    // The held-out item (id 0) placed at rank r of a 100-item list.
    std::vector<ItemId> list;
    for (ItemId i = 1; list.size() + 1 < r; ++i) list.push_back(i);
    list.push_back(0);
    for (ItemId i = static_cast<ItemId>(r); list.size() < 100; ++i) list.push_back(i);
    const auto rank = rank_of(list, 0);
    const std::vector<RankedOutcome> one{{0, rank, list.size()}};
    for (std::size_t k = 1; k <= 20; ++k) {
      ++checked;
      const double hit = r <= k ? 1.0 : 0.0;
      const double gain = r <= k ? 1.0 / std::log2(static_cast<double>(r) + 1.0) : 0.0;
      if (!rank || *rank != r || recall_at_k(one, k) != hit || ndcg_at_k(one, k) != gain) ++wrong;
      if (k >= 2 && (opauc_single_positive(r, k, vocab) > 0.0 ? 1.0 : 0.0) != recall_at_k(one, k)) ++opauc_wrong;
    }
  }
  return {wrong == 0 && opauc_wrong == 0, "grid " + std::to_string(checked) + " (r, K) pairs; recall/ndcg mismatches " +
                                              std::to_string(wrong) + "; opauc indicator mismatches " +
                                              std::to_string(opauc_wrong)};
}

// ---------------------------------------------------------------- 6

double sequence_log_prob(const RecommenderModel& model, const std::vector<std::uint32_t>& prompt,
                         const std::vector<std::uint32_t>& tokens) {
  std::vector<std::uint32_t> all = prompt;
  all.insert(all.end(), tokens.begin(), tokens.end());
  const Tensor logits = model.logits(all);
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t row = prompt.size() - 1 + i;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < logits.cols(); ++v) mx = std::max(mx, logits.at(row, v));
    double z = 0.0;
    for (std::size_t v = 0; v < logits.cols(); ++v) z += std::exp(logits.at(row, v) - mx);
    total += logits.at(row, tokens[i]) - mx - std::log(z);
  }
  return total;
}

Outcome criterion_trie_decoding() {
  SeededRng rng(6);
  const std::size_t items = 200, levels = 3, codebook = 6;
  std::vector<ItemId> item_ids(items);
  std::vector<std::uint32_t> codes(items * levels);
  for (std::size_t i = 0; i < items; ++i) item_ids[i] = static_cast<ItemId>(i);
  for (auto& c : codes) c = static_cast<std::uint32_t>(rng.below(codebook));
  const IdentifierSet ids = assign_identifiers(item_ids, codes, levels, codebook);
  const TokenVocabulary vocab = TokenVocabulary::for_identifiers(ids);
  const auto trie = IdentifierTrie::build(vocab, ids);
  RecommenderConfig cfg;
  cfg.layers = 2;
  cfg.width = 16;
  cfg.heads = 2;
  cfg.init_stddev = 0.3;
  SeededRng model_rng(66);
  const RecommenderModel model(cfg, vocab, 48, model_rng);

  auto random_prompt = [&] {
    std::vector<ItemId> history(1 + rng.below(5));
    for (auto& h : history) h = static_cast<ItemId>(rng.below(items));
    return prompt_tokens(vocab, ids, history);
  };

  std::size_t order_mismatches = 0, prompts = 0;
  for (int p = 0; p < 5; ++p, ++prompts) {
    const auto prompt = random_prompt();
    std::vector<ScoredItem> oracle;
    for (const auto& id : ids.all()) oracle.push_back({id.item, sequence_log_prob(model, prompt, vocab.tokens(id))});
    std::sort(oracle.begin(), oracle.end(), [](const ScoredItem& a, const ScoredItem& b) {
      return a.score != b.score ? a.score > b.score : a.item < b.item;
    });
    const auto out = constrained_beam_search(model, prompt, trie, {200, 1.0});
    if (out.size() != oracle.size()) {
      ++order_mismatches;
      continue;
    }
    for (std::size_t i = 0; i < out.size(); ++i)
      if (out[i].item != oracle[i].item || std::abs(out[i].score - oracle[i].score) > 1e-9 * std::abs(oracle[i].score))
        ++order_mismatches;
  }

  std::size_t generated = 0, outside = 0;
  const std::vector<std::size_t> widths{1, 2, 3, 5, 10, 20, 50};
  for (std::size_t q = 0; generated < 10000; ++q) {
    const auto prompt = random_prompt();
    const auto out = constrained_beam_search(model, prompt, trie, {widths[q % widths.size()], 1.0});
    for (const auto& s : out) {
      ++generated;
      if (!ids.contains(s.item) || trie.lookup(vocab.tokens(ids.at(s.item))) != s.item) ++outside;
    }
  }
  return {order_mismatches == 0 && outside == 0,
          "beam 200 vs exhaustive over " + std::to_string(prompts) + " prompts: " + std::to_string(order_mismatches) +
              " mismatches; out-of-catalog " + std::to_string(outside) + " of " + std::to_string(generated)};
}

// ---------------------------------------------------------------- 7

Outcome criterion_constrained_kmeans() {
  std::size_t bad_sizes = 0, history_up = 0, nondeterministic = 0;
  const std::size_t instances = 10;
  for (std::size_t i = 0; i < instances; ++i) {
    SeededRng data_rng(700 + i);
    const Tensor pts = Tensor::normal({256, 8}, 1.0, data_rng);
    SeededRng a_rng(i), b_rng(i);
    const auto a = constrained_kmeans(pts, 10, a_rng);
    const auto b = constrained_kmeans(pts, 10, b_rng);
    for (auto s : a.sizes)
      if (s != 25 && s != 26) ++bad_sizes;
    for (std::size_t h = 1; h < a.history.size(); ++h)
      if (a.history[h] > a.history[h - 1]) ++history_up;
    if (a.cluster != b.cluster || a.objective != b.objective || a.history != b.history ||
        !std::ranges::equal(a.centers.values(), b.centers.values()))
      ++nondeterministic;
  }
  return {bad_sizes == 0 && history_up == 0 && nondeterministic == 0,
          std::to_string(instances) + " instances (N=256, K=10): sizes outside {25,26} " + std::to_string(bad_sizes) +
              "; objective increases " + std::to_string(history_up) + "; non-identical reruns " +
              std::to_string(nondeterministic)};
}

// ---------------------------------------------------------------- 8-11

class Runs {
 public:
  explicit Runs(std::filesystem::path root) : root_(std::move(root)) {}

  static PipelineConfig config(std::uint64_t seed, const std::string& preset) {
    PipelineConfig c;
    c.seed = seed;
    c.derive_stage_seeds();
    apply_preset(c, preset);
    return c;
  }

  std::filesystem::path dir(std::uint64_t seed, const std::string& preset) const {
    return root_ / ("seed_" + std::to_string(seed)) / ("preset_" + preset);
  }

  /// Data, CF and tokenizer stages plus diagnostics; returns the summary.
  const std::map<std::string, double>& tokenizer(std::uint64_t seed, const std::string& preset) {
    const auto key = dir(seed, preset).string();
    if (auto it = diagnostics_.find(key); it != diagnostics_.end()) return it->second;
    const PipelineConfig c = config(seed, preset);
    const RunLayout run{dir(seed, preset)};
    std::filesystem::remove_all(run.dir);
    std::filesystem::create_directories(run.dir);
    write_config(run.config(), c);
    stage_data(c, run);
    stage_split(c, run);
    stage_cf(c, run);
    stage_tokenizer(c, run);
    stage_tokenize(c, run);
    return diagnostics_[key] = stage_diagnose(c, run);
  }

  /// The complete pipeline; returns its metrics.
  const std::map<std::string, double>& full(std::uint64_t seed, const std::string& preset) {
    const auto key = dir(seed, preset).string();
    if (auto it = metrics_.find(key); it != metrics_.end()) return it->second;
    const PipelineResult r = run_pipeline(config(seed, preset), dir(seed, preset));
    diagnostics_[key] = r.diagnostics;
    return metrics_[key] = r.metrics;
  }

 private:
  std::filesystem::path root_;
  std::map<std::string, std::map<std::string, double>> diagnostics_, metrics_;
};

Outcome criterion_diversity(Runs& runs, std::size_t seeds) {
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t s = 1; s <= seeds; ++s) {
    const auto base = runs.tokenizer(s, "0");
    const auto div = runs.tokenizer(s, "2");
    const bool win = div.at("entropy_l1") > base.at("entropy_l1") && div.at("utilization_l1") > base.at("utilization_l1");
    wins += win;
    detail += "seed " + std::to_string(s) + ": entropy " + fmt(base.at("entropy_l1")) + " -> " + fmt(div.at("entropy_l1")) +
              ", utilization " + fmt(base.at("utilization_l1")) + " -> " + fmt(div.at("utilization_l1")) +
              (win ? " (win)" : " (no)") + "; ";
  }
  return {wins * 5 >= 4 * seeds, std::to_string(wins) + "/" + std::to_string(seeds) + " seeds; " + detail};
}

Outcome criterion_collaborative(Runs& runs, std::size_t seeds) {
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t s = 1; s <= seeds; ++s) {
    const double base = runs.tokenizer(s, "0").at("cf_pair_overlap");
    const double cf = runs.tokenizer(s, "1").at("cf_pair_overlap");
    const bool win = cf - base >= 0.05;
    wins += win;
    detail += "seed " + std::to_string(s) + ": " + fmt(base) + " -> " + fmt(cf) + " (gain " + fmt(cf - base, 3) + ")" +
              "; ";
  }
  return {wins * 5 >= 4 * seeds, std::to_string(wins) + "/" + std::to_string(seeds) + " seeds; " + detail};
}

Outcome criterion_end_to_end(Runs& runs, std::size_t seeds) {
  std::size_t full_wins = 0, tau_wins = 0;
  std::string detail;
  for (std::uint64_t s = 1; s <= seeds; ++s) {
    const double r0 = runs.full(s, "0").at("recall@10");
    const double r3 = runs.full(s, "3").at("recall@10");
    const double r4 = runs.full(s, "4").at("recall@10");
    full_wins += r3 >= r0;
    tau_wins += r4 >= r3;
    detail += "seed " + std::to_string(s) + ": recall@10 semantic-only " + fmt(r0) + ", full " + fmt(r3) + ", tau 0.8 " +
              fmt(r4) + "; ";
  }
  return {full_wins * 5 >= 3 * seeds && tau_wins * 5 >= 3 * seeds,
          "full >= semantic-only " + std::to_string(full_wins) + "/" + std::to_string(seeds) + ", tau 0.8 >= tau 1 " +
              std::to_string(tau_wins) + "/" + std::to_string(seeds) + "; " + detail};
}

// Reruns the quick criteria and one complete pipeline (seed 1, full preset)
// and compares everything they write byte for byte.
Outcome criterion_determinism(Runs& runs, const std::filesystem::path& out,
                              const std::map<int, std::function<Outcome()>>& quick) {
  std::size_t compared = 0, differing = 0;
  std::string detail;
  for (const auto& [n, fn] : quick) {
    const Outcome a = fn(), b = fn();
    ++compared;
    if (a.detail != b.detail || a.pass != b.pass) {
      ++differing;
      detail += "criterion " + std::to_string(n) + " differs; ";
    }
  }

  runs.full(1, "3");
  const auto first = runs.dir(1, "3");
  const auto again = out / "rerun" / "seed_1" / "preset_3";
  std::filesystem::remove_all(again);
  run_pipeline(Runs::config(1, "3"), again);
  std::set<std::filesystem::path> files;
  for (const auto& root : {first, again})
    for (const auto& e : std::filesystem::recursive_directory_iterator(root))
      if (e.is_regular_file()) files.insert(std::filesystem::relative(e.path(), root));
  for (const auto& rel : files) {
    ++compared;
    if (!std::filesystem::exists(first / rel) || !std::filesystem::exists(again / rel) ||
        slurp(first / rel) != slurp(again / rel)) {
      ++differing;
      detail += rel.generic_string() + " differs; ";
    }
  }
  return {differing == 0 && files.size() >= 20,
          std::to_string(compared) + " outputs compared (" + std::to_string(files.size()) +
              " pipeline files), differing " + std::to_string(differing) + "; " + detail};
}

const char* kTitles[] = {
    "",
    "finite-difference gradients of every loss",
    "residual quantization equals the exhaustive scan",
    "loss identities",
    "hard-negative weighting",
    "metric identities",
    "trie-constrained decoding exactness",
    "constrained K-means",
    "diversity regularization raises level-1 entropy and utilization",
    "collaborative regularization raises CF-neighbour code overlap",
    "end-to-end recall direction",
    "byte-identical reruns",
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string out = "acceptance_out";
  std::vector<int> selected;
  std::size_t seeds = 5;
  app.add_option("--out", out, "Output directory")->capture_default_str();
  app.add_option("--criteria", selected, "Criteria to run (default all)")->delimiter(',')->check(CLI::Range(1, 11));
  app.add_option("--seeds", seeds, "Seeds for the pipeline criteria")->capture_default_str()->check(CLI::Range(1, 100));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty())
    for (int i = 1; i <= 11; ++i) selected.push_back(i);
  std::ranges::sort(selected);

  log::set_level(log::Level::Quiet);
  const std::filesystem::path root(out);
  std::filesystem::create_directories(root);
  Runs runs(root / "runs");

  const std::map<int, std::function<Outcome()>> quick = {
      {1, criterion_gradients},    {2, criterion_quantization},        {3, criterion_identities},
      {4, criterion_hard_negatives}, {5, criterion_metrics},           {6, criterion_trie_decoding},
      {7, criterion_constrained_kmeans},
  };

  int failures = 0;
  for (int n : selected) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      if (quick.contains(n)) o = quick.at(n)();
      else if (n == 8) o = criterion_diversity(runs, seeds);
      else if (n == 9) o = criterion_collaborative(runs, seeds);
      else if (n == 10) o = criterion_end_to_end(runs, seeds);
      else o = criterion_determinism(runs, root, quick);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::ofstream(root / ("criterion_" + std::to_string(n) + ".txt")) << (o.pass ? "PASS" : "FAIL") << '\n'
                                                                      << o.detail << '\n';
    std::cout << "criterion " << std::setw(2) << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << kTitles[n] << "  ["
              << std::fixed << std::setprecision(1) << secs << " s]" << std::defaultfloat << "\n    " << o.detail
              << std::endl;
  }
  std::cout << (selected.size() - static_cast<std::size_t>(failures)) << "/" << selected.size() << " criteria passed"
            << std::endl;
  return failures == 0 ? 0 : 1;
}
