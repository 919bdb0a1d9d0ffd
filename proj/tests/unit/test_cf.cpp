#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "letter/cf/bpr_mf.hpp"
#include "letter/core/error.hpp"

using namespace letter;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "letter_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<Interaction> random_events(SeededRng& rng, std::size_t users, std::size_t items, std::size_t max_len) {
  std::vector<Interaction> ev;
  for (UserId u = 0; u < users; ++u) {
    const std::size_t len = 1 + rng.below(max_len);
    for (std::size_t k = 0; k < len; ++k)
      ev.push_back({u * 7 + 3, static_cast<ItemId>(rng.below(items)), static_cast<std::int64_t>(rng.below(50))});
  }
  rng.shuffle(ev);
  return ev;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("interaction files and grouping") {
  const std::vector<Interaction> ev{{2, 10, 5}, {1, 11, 3}, {2, 12, 5}, {2, 13, 1}, {1, 10, 1}};
  const auto path = temp_path("events.tsv");
  write_interactions(path, ev);
  const auto back = read_interactions(path);
  REQUIRE(back.size() == 5);
  CHECK(back[3].item == 13);
  const InteractionDataset data(back);
  REQUIRE(data.users().size() == 2);
  CHECK(data.users()[0].user == 1);
  CHECK(data.users()[0].items == std::vector<ItemId>{10, 11});
  // Timestamp ties keep input order.
  CHECK(data.users()[1].items == std::vector<ItemId>{13, 10, 12});
  CHECK(data.items() == std::vector<ItemId>{10, 11, 12, 13});

  std::ofstream(temp_path("bad.tsv")) << "1\t2\t3\n4\tx\t6\n";
  try {
    read_interactions(temp_path("bad.tsv"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("load_and_split") {
  SUBCASE("a user with exactly five items") {
    std::vector<Interaction> ev;
    for (UserId u = 0; u < 5; ++u)
      for (ItemId i = 0; i < 5; ++i) ev.push_back({u, i, static_cast<std::int64_t>(i)});
    const auto data = split_interactions(ev);
    for (const auto& u : data.users()) {
      CHECK(InteractionDataset::train_items(u).size() == 3);
      CHECK(InteractionDataset::validation_target(u) == 3);
      CHECK(InteractionDataset::test_target(u) == 4);
    }
  }
  SUBCASE("removing a sparse item can cascade to a user") {
    std::vector<Interaction> ev;
    for (UserId u = 0; u < 5; ++u)
      for (ItemId i = 0; i < 5; ++i) ev.push_back({u, i, static_cast<std::int64_t>(i)});
    // User 9 has five events, one of them on item 77 which appears 4 times overall.
    for (ItemId i = 0; i < 4; ++i) ev.push_back({9, i, static_cast<std::int64_t>(i)});
    for (UserId u : {9u, 0u, 1u, 2u}) ev.push_back({u, 77, 100});
    const auto data = split_interactions(ev);
    CHECK(std::ranges::none_of(data.users(), [](const UserSequence& u) { return u.user == 9; }));
    CHECK(std::ranges::find(data.items(), 77u) == data.items().end());
  }
  SUBCASE("fixed point and split counts against a recount") {
    SeededRng rng(3);
    auto ev = random_events(rng, 300, 60, 20);
    const auto path = temp_path("random_events.tsv");
    write_interactions(path, ev);
    const auto data = load_and_split(path);
    // Independent recount: naive repeated filtering with ordered maps.
    auto kept = ev;
    for (bool changed = true; changed;) {
      std::map<UserId, int> cu;
      std::map<ItemId, int> ci;
      for (const auto& e : kept) ++cu[e.user], ++ci[e.item];
      std::vector<Interaction> next;
      for (const auto& e : kept)
        if (cu[e.user] >= 5 && ci[e.item] >= 5) next.push_back(e);
      changed = next.size() != kept.size();
      kept = next;
    }
    std::map<UserId, int> per_user;
    std::map<ItemId, int> per_item;
    for (const auto& e : kept) ++per_user[e.user], ++per_item[e.item];
    CHECK(data.interaction_count() == kept.size());
    CHECK(data.users().size() == per_user.size());
    std::size_t train = 0;
    for (const auto& u : data.users()) {
      CHECK(u.items.size() == static_cast<std::size_t>(per_user.at(u.user)));
      train += InteractionDataset::train_items(u).size();
      CHECK(std::ranges::is_sorted(u.timestamps));
    }
    CHECK(train == kept.size() - 2 * per_user.size());
    for (const auto& [item, c] : per_item) CHECK(c >= 5);
    for (const auto& [user, c] : per_user) CHECK(c >= 5);
  }
  SUBCASE("nothing left") {
    CHECK_THROWS_AS(split_interactions({{1, 1, 1}, {1, 2, 2}}), DataError);
  }
  SUBCASE("split file round trip") {
    SeededRng rng(4);
    const auto data = split_interactions(random_events(rng, 200, 40, 15));
    const auto path = temp_path("split.tsv");
    write_split_dataset(path, data);
    const auto back = read_split_dataset(path);
    REQUIRE(back.users().size() == data.users().size());
    for (std::size_t u = 0; u < data.users().size(); ++u) CHECK(back.users()[u].items == data.users()[u].items);
    std::ofstream(temp_path("bad_split.tsv")) << "1\t2\t3\ttrain\n1\t3\t4\ttest\n1\t4\t5\tvalid\n";
    CHECK_THROWS_AS(read_split_dataset(temp_path("bad_split.tsv")), FormatError);
  }
}

TEST_CASE("train_cf") {
  // Two communities: users 0..19 consume items 0..19, users 20..39 items 20..39.
  std::vector<Interaction> ev;
  SeededRng data_rng(5);
  for (UserId u = 0; u < 40; ++u) {
    const ItemId base = u < 20 ? 0 : 20;
    for (int t = 0; t < 8; ++t) ev.push_back({u, base + static_cast<ItemId>(data_rng.below(20)), t});
  }
  const InteractionDataset data(ev);
  BprConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 40;

  SUBCASE("zero epochs returns the seeded initialisation") {
    cfg.epochs = 0;
    const auto a = train_cf(data, cfg);
    const auto b = train_cf(data, cfg);
    CHECK(a.epoch_loss.empty());
    CHECK(max_abs_diff(a.items.matrix(), b.items.matrix()) == 0.0);
    cfg.epochs = 1;
    cfg.lr = 1e-12;
    const auto c = train_cf(data, cfg);
    CHECK(max_abs_diff(a.items.matrix(), c.items.matrix()) < 1e-9);
  }
  SUBCASE("communities separate, over five seeds") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      cfg.seed = seed;
      const auto m = train_cf(data, cfg);
      double within = 0, across = 0;
      int nw = 0, na = 0;
      for (ItemId a : data.items())
        for (ItemId b : data.items()) {
          if (a >= b) continue;
          const double c = cosine(m.items.vector(a), m.items.vector(b));
          if ((a < 20) == (b < 20)) within += c, ++nw;
          else across += c, ++na;
        }
      CHECK(within / nw > across / na);
      for (double l : m.epoch_loss) CHECK(std::isfinite(l));
      CHECK(m.epoch_loss.back() < m.epoch_loss.front());
    }
  }
  SUBCASE("bit-identical for identical seeds") {
    const auto a = train_cf(data, cfg);
    const auto b = train_cf(data, cfg);
    CHECK(max_abs_diff(a.items.matrix(), b.items.matrix()) == 0.0);
    CHECK(max_abs_diff(a.users, b.users) == 0.0);
    CHECK(a.items.dim() == 8);
  }
  SUBCASE("errors") {
    cfg.dim = 0;
    CHECK_THROWS_AS(train_cf(data, cfg), ParameterError);
    cfg.dim = 4;
    CHECK_THROWS_AS(train_cf(InteractionDataset{}, cfg), DataError);
  }
}

TEST_CASE("load_cf_embeddings") {
  std::ofstream out(temp_path("cf.txt"));
  out << "dim=32 count=2\n";
  for (int r = 0; r < 2; ++r) {
    out << (r + 5) << '\t';
    for (int c = 0; c < 32; ++c) out << (c ? "," : "") << 0.5 * c - r;
    out << '\n';
  }
  out.close();
  const auto t = load_cf_embeddings(temp_path("cf.txt"));
  CHECK(t.size() == 2);
  CHECK(t.dim() == 32);
  CHECK(t.vector(6)[3] == 0.5);
}

TEST_CASE("nearest_cf_pairs") {
  SUBCASE("two items pair with each other") {
    const EmbeddingTable t({4, 9}, Tensor::matrix({{1, 0}, {-1, 2}}));
    const auto p = nearest_cf_pairs(t);
    CHECK(p == std::vector<std::pair<ItemId, ItemId>>{{4, 9}, {9, 4}});
  }
  SUBCASE("three hand-set vectors") {
    // <a,b> = 2, <a,c> = 3, <b,c> = 0
    const EmbeddingTable t({1, 2, 3}, Tensor::matrix({{1, 1}, {2, 0}, {0, 3}}));
    const auto p = nearest_cf_pairs(t);
    CHECK(p == std::vector<std::pair<ItemId, ItemId>>{{1, 3}, {2, 1}, {3, 1}});
    // cosine: cos(a,b) = cos(a,c) = 1/sqrt2 -> tie to lower id 2; cos(b,c) = 0
    const auto pc = nearest_cf_pairs(t, true);
    CHECK(pc[0].second == 2);
  }
  SUBCASE("500 random items against an exhaustive scan") {
    SeededRng rng(6);
    std::vector<ItemId> ids(500);
    for (std::size_t i = 0; i < 500; ++i) ids[i] = static_cast<ItemId>(3 * i + 1);
    const EmbeddingTable t(ids, Tensor::normal({500, 16}, 1.0, rng));
    const auto p = nearest_cf_pairs(t);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < 500; ++i) {
      ItemId best = 0;
      double best_s = -1e300;
      for (std::size_t j = 0; j < 500; ++j) {
        if (i == j) continue;
        double s = 0;
        for (std::size_t k = 0; k < 16; ++k) s += t.matrix().at(i, k) * t.matrix().at(j, k);
        if (s > best_s) best_s = s, best = ids[j];
      }
      if (p[i] != std::pair<ItemId, ItemId>{ids[i], best}) ++mismatches;
    }
    CHECK(mismatches == 0);
  }
  SUBCASE("needs two items") {
    CHECK_THROWS_AS(nearest_cf_pairs(EmbeddingTable({1}, Tensor::matrix({{1.0}}))), DataError);
  }
}
