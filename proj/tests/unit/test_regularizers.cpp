#include <algorithm>
#include <bit>
#include <span>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>

#include "doctest.h"
#include "letter/core/error.hpp"
#include "letter/core/gradcheck.hpp"
#include "letter/core/log.hpp"
#include "letter/regularizers/trainer.hpp"
#include "letter/tokenizer/kmeans.hpp"

using namespace letter;

namespace {

ClusterAssignment manual_clusters(std::vector<std::uint32_t> cluster, std::size_t k) {
  ClusterAssignment a;
  a.cluster = std::move(cluster);
  a.sizes.assign(k, 0);
  for (auto c : a.cluster) ++a.sizes[c];
  return a;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Exhaustive minimum within-cluster sum of squares over all partitions of 12
// points into three groups of four.
double best_balanced_partition(const Tensor& pts) {
  auto wcss = [&](const std::vector<std::size_t>& g) {
    std::vector<double> c(pts.cols(), 0.0);
    for (auto i : g)
      for (std::size_t j = 0; j < pts.cols(); ++j) c[j] += pts.at(i, j) / static_cast<double>(g.size());
    double s = 0;
    for (auto i : g) s += sq_dist(pts.row(i), c);
    return s;
  };
  double best = 1e300;
  const std::size_t n = 12;
  for (unsigned m1 = 0; m1 < (1u << n); ++m1) {
    if (std::popcount(m1) != 4 || !(m1 & 1u)) continue;
    const unsigned rest = ((1u << n) - 1) & ~m1;
    const unsigned low = rest & (~rest + 1);
    for (unsigned m2 = rest; m2; m2 = (m2 - 1) & rest) {
      if (std::popcount(m2) != 4 || !(m2 & low)) continue;
      const unsigned m3 = rest & ~m2;
      double total = 0;
      for (unsigned m : {m1, m2, m3}) {
        std::vector<std::size_t> g;
        for (std::size_t i = 0; i < n; ++i)
          if (m >> i & 1u) g.push_back(i);
        total += wcss(g);
      }
      best = std::min(best, total);
    }
  }
  return best;
}

struct QuietLog {
  QuietLog() { log::set_level(log::Level::Quiet); }
  ~QuietLog() { log::set_level(log::Level::Warn); }
};

}  // namespace

TEST_CASE("cf_alignment_loss") {
  SUBCASE("single-item batch is zero in infonce mode") {
    QuietLog quiet;
    ad::Tape t;
    ad::Var z = t.constant(Tensor::matrix({{0.3, -2.0}}));
    CHECK(cf_alignment_loss(z, Tensor::matrix({{1.0, 4.0}})).value().item() == 0.0);
  }
  SUBCASE("two orthogonal pairs") {
    ad::Tape t;
    ad::Var z = t.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    const Tensor h = Tensor::matrix({{1, 0}, {0, 1}});
    const double expected = std::log1p(std::exp(-1.0));
    CHECK(std::abs(cf_alignment_loss(z, h).value().item() - expected) < 1e-15);
    CHECK(std::abs(expected - 0.3133) < 1e-4);
    const double literal = -std::numbers::e / (std::numbers::e + 1.0);
    CHECK(std::abs(cf_alignment_loss(z, h, ContrastiveMode::Ratio).value().item() - literal) < 1e-15);
  }
  SUBCASE("errors") {
    ad::Tape t;
    ad::Var z = t.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    CHECK_THROWS_AS(cf_alignment_loss(z, Tensor::matrix({{1, 0, 0}, {0, 1, 0}})), DimensionError);
  }
  SUBCASE("gradients w.r.t. the quantized batch") {
    SeededRng rng(1);
    for (int instance = 0; instance < 5; ++instance) {
      ad::Parameter z("z", Tensor::uniform({6, 4}, -1, 1, rng));
      const Tensor h = Tensor::uniform({6, 4}, -1, 1, rng);
      std::vector<ad::Parameter*> ps{&z};
      for (auto mode : {ContrastiveMode::InfoNce, ContrastiveMode::Ratio})
        for (auto sim : {Similarity::Inner, Similarity::Cosine}) {
          const auto r = check_gradients([&](ad::Tape& t) { return cf_alignment_loss(t.param(z), h, mode, sim); }, ps);
          CHECK(r.max_relative_error < 1e-4);
        }
    }
  }
}

TEST_CASE("constrained_kmeans") {
  SUBCASE("K = N puts every point alone") {
    SeededRng rng(2);
    const Tensor pts = Tensor::uniform({7, 3}, -1, 1, rng);
    const auto a = constrained_kmeans(pts, 7, rng);
    CHECK(a.objective == 0.0);
    CHECK(std::ranges::all_of(a.sizes, [](std::size_t s) { return s == 1; }));
  }
  SUBCASE("square corners pair with a neighbour") {
    const Tensor pts = Tensor::matrix({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SeededRng rng(seed);
      const auto a = constrained_kmeans(pts, 2, rng);
      CHECK(a.sizes == std::vector<std::size_t>{2, 2});
      for (const auto& m : a.members()) {
        const auto p = pts.row(m[0]), q = pts.row(m[1]);
        CHECK(std::abs(p[0] - q[0]) + std::abs(p[1] - q[1]) == 1.0);
      }
    }
  }
  SUBCASE("N=12, K=3 balanced, near the exhaustive balanced optimum") {
    for (std::uint64_t seed = 3; seed < 13; ++seed) {
      SeededRng rng(seed);
      const Tensor pts = Tensor::uniform({12, 2}, -1, 1, rng);
      const auto a = constrained_kmeans(pts, 3, rng);
      CHECK(a.sizes == std::vector<std::size_t>{4, 4, 4});
      CHECK(a.objective <= best_balanced_partition(pts) * 1.05);
    }
  }
  SUBCASE("N=12, K=3 within 1.5x of unconstrained K-means") {
    SeededRng rng(3);
    const Tensor pts = Tensor::uniform({12, 2}, -1, 1, rng);
    const auto a = constrained_kmeans(pts, 3, rng);
    const auto free = kmeans(pts, 3, rng, {.max_iterations = 100, .restarts = 20});
    CHECK(a.objective <= free.objective * 1.5);
  }
  SUBCASE("N=256, K=10 sizes, monotone history, determinism") {
    SeededRng data(14);
    const Tensor pts = Tensor::normal({256, 16}, 1.0, data);
    SeededRng r1(99), r2(99);
    const auto a = constrained_kmeans(pts, 10, r1);
    const auto b = constrained_kmeans(pts, 10, r2);
    for (auto s : a.sizes) CHECK((s == 25 || s == 26));
    for (std::size_t i = 1; i < a.history.size(); ++i) CHECK(a.history[i] <= a.history[i - 1]);
    CHECK(a.cluster == b.cluster);
    CHECK(a.history == b.history);
    double direct = 0;
    for (std::size_t i = 0; i < 256; ++i)
      for (std::size_t j = 0; j < 16; ++j) direct += std::pow(pts.at(i, j) - a.centers.at(a.cluster[i], j), 2);
    CHECK(std::abs(direct - a.objective) < 1e-9);
  }
  SUBCASE("invalid K") {
    SeededRng rng(1);
    const Tensor pts = Tensor::uniform({4, 2}, -1, 1, rng);
    CHECK_THROWS_AS(constrained_kmeans(pts, 0, rng), ParameterError);
    CHECK_THROWS_AS(constrained_kmeans(pts, 5, rng), ParameterError);
  }
}

TEST_CASE("diversity_loss") {
  SUBCASE("identical codes give ln(N-1)") {
    ad::Tape t;
    Tensor codes({8, 3}, 0.4);
    ad::Var table = t.constant(codes);
    SeededRng rng(3);
    const auto clusters = manual_clusters({0, 0, 0, 0, 1, 1, 1, 1}, 2);
    const auto d = diversity_loss({table}, {{0, 5, 7, 2}}, {clusters}, rng);
    CHECK(std::abs(d.value.value().item() - std::log(7.0)) < 1e-12);
    CHECK(d.used == 4);
  }
  SUBCASE("three codes with hand-set inner products") {
    ad::Tape t;
    // <e0,e1> = 0.5, <e0,e2> = -1, <e1,e2> = 0
    ad::Var table = t.constant(Tensor::matrix({{1, 0}, {0.5, 0}, {-1, 3}}));
    SeededRng rng(4);
    const auto clusters = manual_clusters({0, 0, 1}, 2);
    const auto d = diversity_loss({table}, {{0, 1, 2}}, {clusters}, rng);
    const double l0 = -std::log(std::exp(0.5) / (std::exp(0.5) + std::exp(-1.0)));
    const double l1 = -std::log(std::exp(0.5) / (std::exp(0.5) + std::exp(-0.5)));
    CHECK(std::abs(d.value.value().item() - (l0 + l1) / 2) < 1e-14);
    CHECK(d.skipped == 1);
    const auto lit = diversity_loss({table}, {{0}}, {clusters}, rng, ContrastiveMode::Ratio);
    CHECK(std::abs(lit.value.value().item() + std::exp(-l0)) < 1e-14);
  }
  SUBCASE("positives are uniform over the rest of the cluster") {
    // Anchor 0 in a cluster {0,1,2,3}; distinct logits per positive reveal which was drawn.
    ad::Tape t;
    ad::Var table = t.constant(Tensor::matrix({{1, 0}, {1, 0}, {2, 0}, {3, 0}, {-1, 0}}));
    const auto clusters = manual_clusters({0, 0, 0, 0, 1}, 2);
    SeededRng rng(5);
    std::map<long, int> seen;
    for (int i = 0; i < 3000; ++i) {
      const double v = diversity_loss({table}, {{0}}, {clusters}, rng).value.value().item();
      ++seen[std::lround(v * 1e6)];
    }
    CHECK(seen.size() == 3);
    for (const auto& [k, c] : seen) CHECK(std::abs(c - 1000) < 120);
  }
  SUBCASE("gradients w.r.t. the code embeddings on two levels") {
    SeededRng rng(6);
    for (int instance = 0; instance < 4; ++instance) {
      ad::Parameter e1("e1", Tensor::uniform({6, 3}, -1, 1, rng));
      ad::Parameter e2("e2", Tensor::uniform({6, 3}, -1, 1, rng));
      const auto c = manual_clusters({0, 1, 0, 1, 2, 2}, 3);
      std::vector<ad::Parameter*> ps{&e1, &e2};
      for (auto mode : {ContrastiveMode::InfoNce, ContrastiveMode::Ratio})
        for (auto sim : {Similarity::Inner, Similarity::Cosine}) {
          const auto r = check_gradients(
              [&](ad::Tape& t) {
                SeededRng fixed(17);  // same positives at every evaluation
                return diversity_loss({t.param(e1), t.param(e2)}, {{0, 3, 4, 0}, {5, 1, 2}}, {c, c}, fixed, mode,
                                      sim)
                    .value;
              },
              ps);
          CHECK(r.max_relative_error < 1e-4);
        }
    }
  }
}

TEST_CASE("total_loss") {
  CHECK(total_loss(1, 2, 3, 0.5, 0.1) == doctest::Approx(2.3).epsilon(1e-15));
  CHECK(total_loss(1.75, 2, 3, 0, 0) == 1.75);
  CHECK_THROWS_AS(total_loss(1, 2, 3, -0.1, 0), ParameterError);
  CHECK_THROWS_AS(total_loss(1, 2, 3, 0, -1e-9), ParameterError);
  ad::Tape t;
  ad::Var sem = t.constant(Tensor::scalar(1)), cf = t.constant(Tensor::scalar(2)), div = t.constant(Tensor::scalar(3));
  CHECK(total_loss(sem, cf, div, 0.5, 0.1).value().item() == doctest::Approx(2.3).epsilon(1e-15));
  CHECK(total_loss(sem, cf, div, 0, 0).value().item() == 1.0);
}

TEST_CASE("combined objective gradient") {
  // Gradient of sem + alpha cf + beta div through the whole tokenizer, with
  // codes fixed, compared with finite differences of the same taped value.
  // Only parameters whose gradient path has no stop-gradient are checked:
  // the decoder (reconstruction only) under alpha, beta > 0.
  SeededRng rng(7);
  RqVaeConfig cfg;
  cfg.input_dim = 5;
  cfg.latent_dim = 3;
  cfg.hidden = {4};
  cfg.levels = 2;
  cfg.codebook_size = 4;
  cfg.codebook_init_stddev = 0.5;
  RqVae model(cfg, rng);
  const Tensor s = Tensor::uniform({5, 5}, -1, 1, rng);
  const Tensor h = Tensor::uniform({5, 3}, -1, 1, rng);
  const auto clusters = manual_clusters({0, 0, 1, 1}, 2);
  std::vector<ad::Parameter*> dec;
  model.decoder().collect(dec);
  const auto r = check_gradients(
      [&](ad::Tape& t) {
        RqVaeForward f = model.forward(t, s);
        SeededRng fixed(3);
        ad::Var cf = cf_alignment_loss(ad::straight_through(f.z, f.zhat), h);
        auto d = diversity_loss(f.code_tables, {f.quant.level_codes(0), f.quant.level_codes(1)}, {clusters, clusters},
                                fixed);
        return total_loss(f.semantic_loss, cf, d.value, 0.02, 1e-2);
      },
      dec);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("train_tokenizer") {
  SeededRng rng(8);
  const std::size_t n = 120;
  std::vector<ItemId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<ItemId>(i * 2);
  const EmbeddingTable semantic(ids, Tensor::normal({n, 8}, 1.0, rng));
  const EmbeddingTable cf(ids, Tensor::normal({n, 4}, 1.0, rng));

  TokenizerTrainingConfig cfg;
  cfg.model.latent_dim = 4;
  cfg.model.hidden = {16};
  cfg.model.levels = 2;
  cfg.model.codebook_size = 8;
  cfg.clusters = 3;
  cfg.batch_size = 32;
  cfg.epochs = 15;
  cfg.beta = 1e-2;

  SUBCASE("loss falls and runs are reproducible") {
    const auto a = train_tokenizer(semantic, &cf, cfg);
    const auto b = train_tokenizer(semantic, &cf, cfg);
    REQUIRE(a.log.size() == 15);
    CHECK(a.log.back().semantic < a.log.front().semantic);
    CHECK(a.log.back().total == b.log.back().total);
    CHECK(a.model.quantize(semantic.matrix()).codes == b.model.quantize(semantic.matrix()).codes);
    CHECK(a.clusters.size() == 2);
    for (const auto& e : a.log) {
      CHECK(std::isfinite(e.total));
      CHECK(e.utilization.size() == 2);
    }
    const auto path = std::filesystem::temp_directory_path() / "letter_tok_log.csv";
    write_tokenizer_log(path, a.log);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,L_sem,L_cf,L_div,total,util_l1,util_l2");
  }
  SUBCASE("alpha = beta = 0 trains only the semantic objective") {
    cfg.alpha = cfg.beta = 0;
    const auto a = train_tokenizer(semantic, nullptr, cfg);
    for (const auto& e : a.log) {
      CHECK(e.cf == 0.0);
      CHECK(e.diversity == 0.0);
      CHECK(e.total == e.semantic);
    }
  }
  SUBCASE("diversity randomness does not disturb the other streams") {
    cfg.epochs = 1;
    cfg.beta = 0;
    const auto a = train_tokenizer(semantic, &cf, cfg);
    cfg.beta = 1e-9;
    const auto b = train_tokenizer(semantic, &cf, cfg);
    // A different shuffle or init would move the first-epoch loss by far more.
    CHECK(std::abs(a.log[0].semantic - b.log[0].semantic) < 1e-4);
  }
  SUBCASE("missing CF items are named") {
    const EmbeddingTable partial(std::vector<ItemId>(ids.begin(), ids.end() - 2),
                                 cf.gather(std::vector<ItemId>(ids.begin(), ids.end() - 2)));
    try {
      train_tokenizer(semantic, &partial, cfg);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("236") != std::string::npos);
    }
  }
  SUBCASE("configuration errors") {
    cfg.batch_size = 1;
    CHECK_THROWS_AS(train_tokenizer(semantic, &cf, cfg), ParameterError);
    cfg.batch_size = 32;
    cfg.clusters = 9;
    CHECK_THROWS_AS(train_tokenizer(semantic, &cf, cfg), ParameterError);
  }
}
