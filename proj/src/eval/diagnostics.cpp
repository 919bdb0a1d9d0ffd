#include "letter/eval/diagnostics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "letter/core/error.hpp"
#include "letter/core/kernels.hpp"
#include "letter/core/log.hpp"
#include "letter/core/text.hpp"

namespace letter {

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  return os;
}

void check_level(std::size_t level, std::size_t levels) {
  if (level == 0 || level > levels)
    throw ParameterError("level " + std::to_string(level) + " outside [1, " + std::to_string(levels) + "]");
}

}  // namespace

std::vector<double> CodeHistogram::grouped_frequencies(std::size_t group_size) const {
  if (group_size == 0) throw ParameterError("group size must be >= 1");
  std::vector<std::size_t> sorted = counts;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::vector<double> out;
  for (std::size_t start = 0; start < sorted.size(); start += group_size) {
    const std::size_t end = std::min(sorted.size(), start + group_size);
    double s = 0.0;
    for (std::size_t i = start; i < end; ++i) s += static_cast<double>(sorted[i]);
    out.push_back(s / static_cast<double>(end - start));
  }
  return out;
}

CodeHistogram code_histogram(const IdentifierSet& ids, std::size_t level) {
  check_level(level, ids.levels());
  CodeHistogram h;
  h.level = level;
  h.counts.assign(ids.codebook_size(), 0);
  for (const Identifier& id : ids.all()) ++h.counts.at(id.codes[level - 1]);
  const double total = static_cast<double>(ids.size());
  for (std::size_t c : h.counts) {
    if (c == 0) continue;
    ++h.utilization;
    const double p = static_cast<double>(c) / total;
    h.entropy -= p * std::log(p);
  }
  return h;
}

void write_code_histogram(const std::filesystem::path& path, const CodeHistogram& h) {
  auto os = open_csv(path);
  os << "code,count\n";
  for (std::size_t c = 0; c < h.counts.size(); ++c) os << c << ',' << h.counts[c] << '\n';
}

void write_grouped_histogram(const std::filesystem::path& path, const CodeHistogram& h, std::size_t group_size) {
  auto os = open_csv(path);
  os << "group_index,mean_frequency\n";
  const auto groups = h.grouped_frequencies(group_size);
  for (std::size_t g = 0; g < groups.size(); ++g) os << g << ',' << text::format_double(groups[g]) << '\n';
}

PcaResult pca(const Tensor& points, std::size_t k) {
  const std::size_t n = points.rows(), d = points.cols();
  if (n == 0 || k == 0) throw ParameterError("pca needs points and k >= 1");
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Mat X = Eigen::Map<const Mat>(points.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mu = X.colwise().mean();
  X.rowwise() -= mu;
  const Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("covariance eigendecomposition failed");

  PcaResult r;
  r.mean.assign(mu.data(), mu.data() + d);
  // Eigen sorts ascending.
  for (Eigen::Index i = static_cast<Eigen::Index>(d) - 1; i >= 0; --i) r.eigenvalues.push_back(std::max(0.0, eig.eigenvalues()[i]));
  const double scale = std::max(r.eigenvalues.empty() ? 0.0 : r.eigenvalues[0], 1.0);
  std::size_t rank = 0;
  for (double ev : r.eigenvalues)
    if (ev > 1e-12 * scale) ++rank;
  std::size_t m = std::min(k, d);
  if (rank < m) {
    log::warn("covariance has rank " + std::to_string(rank) + "; returning " + std::to_string(rank) +
              " principal components instead of " + std::to_string(k));
    m = rank;
  }
  r.components = Tensor({m, d});
  r.coordinates = Tensor({n, m});
  for (std::size_t c = 0; c < m; ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - c));
    Eigen::VectorXd proj = X * v;
    Eigen::Index arg = 0;
    proj.cwiseAbs().maxCoeff(&arg);
    if (proj[arg] < 0) {
      v = -v;
      proj = -proj;
    }
    for (std::size_t j = 0; j < d; ++j) r.components.at(c, j) = v[static_cast<Eigen::Index>(j)];
    for (std::size_t i = 0; i < n; ++i) r.coordinates.at(i, c) = proj[static_cast<Eigen::Index>(i)];
  }
  return r;
}

CodeEmbeddingExport export_code_embedding_pca(const CodebookSet& cb, const IdentifierSet& ids, std::size_t level) {
  check_level(level, cb.levels());
  if (cb.size() < 3) throw ParameterError("PCA export needs at least 3 codes");
  if (ids.levels() != cb.levels() || ids.codebook_size() != cb.size())
    throw DimensionError("identifiers do not match the codebook shape");
  CodeEmbeddingExport e;
  e.level = level;
  e.pca = pca(cb.level(level - 1).value, 3);
  e.counts = code_histogram(ids, level).counts;
  return e;
}

void write_code_embedding_pca(const std::filesystem::path& path, const CodeEmbeddingExport& e) {
  auto os = open_csv(path);
  os << "code,count,pc1,pc2,pc3\n";
  const Tensor& C = e.pca.coordinates;
  for (std::size_t i = 0; i < C.rows(); ++i) {
    os << i << ',' << e.counts[i];
    for (std::size_t c = 0; c < 3; ++c) os << ',' << (c < C.cols() ? text::format_double(C.at(i, c)) : std::string("0"));
    os << '\n';
  }
}

RankingResult cf_ranking(const BprMfModel& cf, const EmbeddingTable& items, const InteractionDataset& data,
                         const CfRankingOptions& options) {
  if (options.part == SplitPart::Train) throw ParameterError("CF ranking evaluates the validation or test target");
  if (items.dim() != cf.users.cols())
    throw DimensionError("item table width " + std::to_string(items.dim()) + " differs from user width " +
                         std::to_string(cf.users.cols()));
  std::vector<const UserSequence*> users;
  for (const auto& u : data.users())
    if (u.items.size() >= 3) users.push_back(&u);
  if (users.empty()) throw DataError("no users to evaluate");
  RankingResult out(users.size());
  const std::size_t n = items.size(), d = items.dim();
  const auto count = static_cast<std::ptrdiff_t>(users.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ui = 0; ui < count; ++ui) {
    const UserSequence& u = *users[static_cast<std::size_t>(ui)];
    const std::size_t tpos = u.items.size() - (options.part == SplitPart::Test ? 1 : 2);
    const ItemId target = u.items[tpos];
    RankedOutcome& o = out[static_cast<std::size_t>(ui)];
    o.user = u.user;
    std::unordered_set<ItemId> excluded;
    if (options.exclude_history)
      for (std::size_t t = 0; t < tpos; ++t)
        if (u.items[t] != target) excluded.insert(u.items[t]);
    o.list_length = 0;
    for (ItemId id : items.ids())
      if (!excluded.contains(id)) ++o.list_length;
    if (!items.contains(target) || !cf.has_user(u.user)) continue;
    const double* p = cf.users.data() + cf.user_index(u.user) * d;
    const double target_score = kernels::dot(p, items.matrix().data() + items.index_of(target) * d, d);
    std::size_t above = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const ItemId id = items.ids()[i];
      if (id == target || excluded.contains(id)) continue;
      const double s = kernels::dot(p, items.matrix().data() + i * d, d);
      if (s > target_score || (s == target_score && id < target)) ++above;
    }
    o.rank = above + 1;
  }
  return out;
}

EmbeddingTable quantized_item_table(const RqVae& tokenizer, const EmbeddingTable& semantic,
                                    const EmbeddingTable& cf_items) {
  for (ItemId id : cf_items.ids())
    if (!semantic.contains(id)) throw DataError("item " + std::to_string(id) + " has no semantic embedding, so no quantized embedding");
  const Tensor S = semantic.gather(cf_items.ids());
  Tensor Z = tokenizer.quantize(S).quantized;
  if (Z.cols() == cf_items.dim()) return EmbeddingTable(cf_items.ids(), std::move(Z));

  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto n = static_cast<Eigen::Index>(Z.rows());
  Eigen::Map<const Mat> A(Z.data(), n, static_cast<Eigen::Index>(Z.cols()));
  Eigen::Map<const Mat> B(cf_items.matrix().data(), n, static_cast<Eigen::Index>(cf_items.dim()));
  const Eigen::MatrixXd W = A.colPivHouseholderQr().solve(Eigen::MatrixXd(B));
  const Mat P = A * W;
  Tensor out({Z.rows(), cf_items.dim()});
  std::copy(P.data(), P.data() + P.size(), out.data());
  return EmbeddingTable(cf_items.ids(), std::move(out));
}

RankingResult quantized_embedding_ranking(const RqVae& tokenizer, const EmbeddingTable& semantic, const BprMfModel& cf,
                                          const InteractionDataset& data, const CfRankingOptions& options) {
  return cf_ranking(cf, quantized_item_table(tokenizer, semantic, cf.items), data, options);
}

double code_overlap_similarity(const IdentifierSet& ids, std::span<const std::pair<ItemId, ItemId>> pairs,
                               OverlapMode mode) {
  if (pairs.empty()) throw DataError("no pairs to compare");
  const double L = static_cast<double>(ids.levels());
  double total = 0.0;
  for (const auto& [a, b] : pairs) {
    const auto& ca = ids.at(a).codes;
    const auto& cb = ids.at(b).codes;
    std::size_t match = 0;
    if (mode == OverlapMode::Positionwise) {
      for (std::size_t l = 0; l < ca.size(); ++l) match += ca[l] == cb[l];
    } else {
      std::vector<std::uint32_t> x = ca, y = cb;
      std::sort(x.begin(), x.end());
      std::sort(y.begin(), y.end());
      std::vector<std::uint32_t> common;
      std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(common));
      match = common.size();
    }
    total += static_cast<double>(match) / L;
  }
  return total / static_cast<double>(pairs.size());
}

std::vector<std::pair<ItemId, std::size_t>> generation_frequency(std::span<const QueryResult> results,
                                                                 const IdentifierSet& ids, std::size_t top) {
  std::vector<std::pair<ItemId, std::size_t>> out;
  std::unordered_map<ItemId, std::size_t> index;
  for (const auto& id : ids.all()) {
    index.emplace(id.item, out.size());
    out.emplace_back(id.item, 0);
  }
  for (const auto& r : results)
    for (std::size_t i = 0; i < std::min(top, r.list.size()); ++i) {
      auto it = index.find(r.list[i].item);
      if (it == index.end()) throw DataError("generated item " + std::to_string(r.list[i].item) + " is not in the catalog");
      ++out[it->second].second;
    }
  return out;
}

}  // namespace letter
