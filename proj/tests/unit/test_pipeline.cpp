#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "letter/core/error.hpp"
#include "letter/core/rng.hpp"
#include "letter/pipeline/config.hpp"
#include "letter/pipeline/pipeline.hpp"
#include "letter/pipeline/synthetic.hpp"
#include "letter/tokenizer/kmeans.hpp"

using namespace letter;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "letter_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Adjusted Rand index from the contingency table (Hubert and Arabie).
double adjusted_rand(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> joint;
  std::map<std::uint32_t, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  auto c2 = [](double n) { return n * (n - 1) / 2; };
  double index = 0, sa = 0, sb = 0;
  for (const auto& [k, n] : joint) index += c2(n);
  for (const auto& [k, n] : ra) sa += c2(n);
  for (const auto& [k, n] : rb) sb += c2(n);
  const double expected = sa * sb / c2(static_cast<double>(a.size()));
  return (index - expected) / ((sa + sb) / 2 - expected);
}

PipelineConfig tiny_config() {
  PipelineConfig c;
  auto& s = c.data.synthetic;
  s.items = 120;
  s.users = 200;
  s.topics = 4;
  s.communities = 4;
  s.semantic_dim = 16;
  c.cf.epochs = 3;
  c.tokenizer.model.levels = 2;
  c.tokenizer.model.codebook_size = 8;
  c.tokenizer.model.hidden = {16};
  c.tokenizer.clusters = 4;
  c.tokenizer.batch_size = 32;
  c.tokenizer.epochs = 4;
  c.recommender.model.width = 16;
  c.recommender.model.heads = 2;
  c.recommender.model.layers = 1;
  c.recommender.epochs = 2;
  c.recommender.batch_size = 32;
  c.recommender.validation_users = 20;
  c.recommender.beam.beam_width = 10;
  c.evaluation.ks = {5, 10};
  c.derive_stage_seeds();
  return c;
}

}  // namespace

TEST_CASE("synthetic generator: noise-free topics, block structure, determinism") {
  SyntheticSpec s;
  s.items = 300;
  s.users = 100;
  s.topics = 3;
  s.communities = 3;
  s.semantic_noise = 0.0;
  s.community_scale = 0.0;
  const SyntheticData d = generate_synthetic(s);
  for (std::size_t i = 0; i < s.items; ++i)
    for (std::size_t j = i + 1; j < s.items; ++j) {
      if (d.topic[i] != d.topic[j]) continue;
      const auto a = d.semantic.vector(static_cast<ItemId>(i)), b = d.semantic.vector(static_cast<ItemId>(j));
      REQUIRE(std::ranges::equal(a, b));
    }

  // Two topics, one community per user, full coupling: a user never mixes
  // topics, so item co-occurrence is block diagonal by topic.
  SyntheticSpec blocks;
  blocks.items = 100;
  blocks.users = 200;
  blocks.topics = 2;
  blocks.communities = 2;
  blocks.communities_per_user = 1;
  blocks.coupling = 1.0;
  const SyntheticData b = generate_synthetic(blocks);
  std::map<UserId, std::set<std::uint32_t>> topics_seen;
  for (const auto& e : b.interactions) topics_seen[e.user].insert(b.topic[e.item]);
  CHECK(topics_seen.size() == blocks.users);
  for (const auto& [u, t] : topics_seen) CHECK(t.size() == 1);

  const SyntheticData again = generate_synthetic(s);
  CHECK(std::ranges::equal(again.semantic.matrix().values(), d.semantic.matrix().values()));
  CHECK(again.interactions.size() == d.interactions.size());
  CHECK(std::ranges::equal(again.interactions, d.interactions, [](const Interaction& x, const Interaction& y) {
    return x.user == y.user && x.item == y.item && x.timestamp == y.timestamp;
  }));
}

TEST_CASE("synthetic generator: topics are recoverable from semantics at low noise") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SyntheticSpec s;
    s.items = 400;
    s.users = 50;
    s.topics = 8;
    s.semantic_dim = 16;
    s.semantic_noise = 0.2;
    s.community_scale = 0.1;
    s.seed = seed;
    const SyntheticData d = generate_synthetic(s);
    SeededRng rng(seed);
    const KMeansResult km = kmeans(d.semantic.matrix(), s.topics, rng, {.max_iterations = 100, .restarts = 5});
    CHECK(adjusted_rand(km.assignment, d.topic) > 0.9);
  }
  SyntheticSpec bad;
  bad.topics = 0;
  CHECK_THROWS_AS(generate_synthetic(bad), ParameterError);
  CHECK_THROWS_AS(SyntheticSpec::from_json({{"itemz", 3}}), ParameterError);
}

TEST_CASE("configuration: defaults, strict merge, overrides, presets") {
  const PipelineConfig d;
  CHECK(d.tokenizer.model.levels == 3);
  CHECK(d.tokenizer.model.codebook_size == 64);
  CHECK(d.tokenizer.batch_size == 256);
  CHECK(d.cf.seed == SeededRng::derive_seed(d.seed, "cf"));

  // to_json / from_json round trip is the identity on the JSON form.
  CHECK(PipelineConfig::from_json(d.to_json()).to_json() == d.to_json());
  CHECK(PipelineConfig::from_json(nlohmann::json::object()).to_json() == d.to_json());

  CHECK_THROWS_WITH_AS(PipelineConfig::from_json({{"tokenizer", {{"alpah", 0.1}}}}),
                       doctest::Contains("tokenizer.alpah"), ParameterError);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"recommender", {{"tau", 0.0}}}}), ParameterError);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"tokenizer", {{"contrastive_mode", "nope"}}}}), ParameterError);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"evaluation", {{"ks", {5, 50}}}}}), ParameterError);

  PipelineConfig c = apply_override(d, "tokenizer.epochs=7");
  CHECK(c.tokenizer.epochs == 7);
  c = apply_override(c, "recommender.example_mode=last-target");
  CHECK(c.recommender.examples.mode == ExampleMode::LastTarget);
  c = apply_override(c, "seed=9");
  CHECK(c.tokenizer.seed == SeededRng::derive_seed(9, "tokenizer"));
  CHECK_THROWS_AS(apply_override(d, "tokenizer.nope=1"), ParameterError);
  CHECK_THROWS_AS(apply_override(d, "no-equals-sign"), UsageError);

  struct Expect {
    const char* name;
    double alpha, beta, tau;
  };
  for (const Expect& e : {Expect{"0", 0, 0, 1}, Expect{"1", 0.02, 0, 1}, Expect{"2", 0, 1e-4, 1},
                          Expect{"3", 0.02, 1e-4, 1}, Expect{"4", 0.02, 1e-4, 0.8}}) {
    PipelineConfig p;
    apply_preset(p, e.name);
    CHECK(p.tokenizer.alpha == e.alpha);
    CHECK(p.tokenizer.beta == e.beta);
    CHECK(p.recommender.tau == e.tau);
  }
  PipelineConfig p;
  CHECK_THROWS_AS(apply_preset(p, "5"), ParameterError);
}

TEST_CASE("pipeline: emits every artifact and reruns byte-identically") {
  const PipelineConfig c = tiny_config();
  const auto a = temp_dir("pipe_a"), b = temp_dir("pipe_b");
  const PipelineResult ra = run_pipeline(c, a);
  run_pipeline(c, b);

  const RunLayout run{a};
  for (const auto& p : {run.config(), run.manifest(), run.interactions(), run.semantic(), run.topics(), run.split(),
                        run.cf_items(), run.cf_users(), run.cf_log(), run.tokenizer(), run.tokenizer_log(),
                        run.identifiers(), run.recommender(), run.recommender_log(), run.recommendations(),
                        run.metrics(), run.diagnostics() / "summary.csv", run.diagnostics() / "code_histogram_l1.csv",
                        run.diagnostics() / "code_groups_l1.csv", run.diagnostics() / "code_pca_l1.csv",
                        run.diagnostics() / "generation_frequency.csv"})
    CHECK_MESSAGE(std::filesystem::exists(p), p.string());

  std::size_t compared = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a);
    CHECK_MESSAGE(slurp(entry.path()) == slurp(b / rel), rel.string());
    ++compared;
  }
  CHECK(compared >= 20);
  CHECK(ra.metrics.contains("recall@10"));
  CHECK(ra.metrics.at("recall@10") >= ra.metrics.at("recall@5"));

  // The stored config reloads to the same run description.
  CHECK(PipelineConfig::load(run.config()).to_json() == c.to_json());

  // evaluate recomputes the same metrics from recommendations.csv.
  CHECK(stage_evaluate(c, run) == ra.metrics);
}

TEST_CASE("pipeline: failures name the stage") {
  PipelineConfig c = tiny_config();
  c.data.interactions = "/nonexistent/interactions.tsv";
  c.data.semantic = "/nonexistent/semantic.emb";
  const auto dir = temp_dir("pipe_err");
  try {
    run_pipeline(c, dir);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).starts_with("stage gen-data: "));
    CHECK(e.kind() == ErrorKind::Data);
  }

  // Stage functions report missing inputs.
  const auto empty = temp_dir("pipe_missing");
  CHECK_THROWS_WITH_AS(stage_tokenizer(tiny_config(), RunLayout{empty}), doctest::Contains("split"), DataError);
}
