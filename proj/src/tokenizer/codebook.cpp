#include "letter/tokenizer/codebook.hpp"

#include "letter/core/error.hpp"
#include "letter/core/kernels.hpp"

namespace letter {

CodebookSet::CodebookSet(std::size_t levels, std::size_t size, std::size_t dim, double init_stddev,
                         SeededRng& rng)
    : size_(size), dim_(dim) {
  if (levels == 0 || size == 0 || dim == 0)
    throw ParameterError("CodebookSet: levels, size and dim must be positive");
  for (std::size_t l = 0; l < levels; ++l)
    codes_.emplace_back("codebook." + std::to_string(l), Tensor::normal({size, dim}, init_stddev, rng));
}

void CodebookSet::collect(std::vector<ad::Parameter*>& out) {
  for (auto& p : codes_) out.push_back(&p);
}

void CodebookSet::save(Checkpoint& ck) const {
  ck.header["codebook"] = {{"levels", levels()}, {"size", size_}, {"dim", dim_}};
  for (const auto& p : codes_) ck.tensors[p.name] = p.value;
}

CodebookSet CodebookSet::load(const Checkpoint& ck) {
  if (!ck.header.contains("codebook")) throw FormatError("checkpoint has no codebook");
  const auto& h = ck.header.at("codebook");
  CodebookSet cb;
  cb.size_ = h.at("size").get<std::size_t>();
  cb.dim_ = h.at("dim").get<std::size_t>();
  const auto levels = h.at("levels").get<std::size_t>();
  for (std::size_t l = 0; l < levels; ++l) {
    const std::string name = "codebook." + std::to_string(l);
    const Tensor& t = ck.tensor(name);
    if (t.rank() != 2 || t.rows() != cb.size_ || t.cols() != cb.dim_)
      throw FormatError("tensor '" + name + "' has shape " + t.shape_string());
    cb.codes_.emplace_back(name, t);
  }
  return cb;
}

static void require_usable(const CodebookSet& cb, std::size_t dim) {
  if (cb.levels() == 0 || cb.size() == 0) throw StateError("residual quantization with an empty codebook");
  if (dim != cb.dim())
    throw DimensionError("latent has dimension " + std::to_string(dim) + ", codebook expects " +
                         std::to_string(cb.dim()));
}

QuantizationResult residual_quantize(std::span<const double> z, const CodebookSet& cb) {
  require_usable(cb, z.size());
  const std::size_t d = cb.dim();
  QuantizationResult out;
  out.quantized.assign(d, 0.0);
  out.residuals.emplace_back(z.begin(), z.end());
  for (std::size_t l = 0; l < cb.levels(); ++l) {
    const auto& r = out.residuals.back();
    std::uint32_t best = 0;
    double best_dist = 0.0;
    kernels::nearest_center(1, cb.size(), d, r.data(), cb.level(l).value.data(), &best, &best_dist);
    const auto e = cb.code(l, best);
    std::vector<double> next(d);
    for (std::size_t j = 0; j < d; ++j) {
      next[j] = r[j] - e[j];
      out.quantized[j] += e[j];
    }
    out.codes.push_back(best);
    out.residuals.push_back(std::move(next));
  }
  return out;
}

std::vector<std::uint32_t> BatchQuantization::level_codes(std::size_t level) const {
  std::vector<std::uint32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = code(i, level);
  return out;
}

BatchQuantization quantize_batch(const Tensor& z, const CodebookSet& cb) {
  if (z.rank() != 2) throw DimensionError("quantize_batch expects a [B x d] matrix, got " + z.shape_string());
  require_usable(cb, z.cols());
  const std::size_t n = z.rows(), d = cb.dim(), L = cb.levels();
  BatchQuantization out;
  out.count = n;
  out.levels = L;
  out.codes.resize(n * L);
  out.quantized = Tensor({n, d});
  out.residuals.push_back(z);
  std::vector<std::uint32_t> idx(n);
  std::vector<double> dist(n);
  for (std::size_t l = 0; l < L; ++l) {
    const Tensor& r = out.residuals.back();
    const Tensor& codes = cb.level(l).value;
    kernels::nearest_center(n, cb.size(), d, r.data(), codes.data(), idx.data(), dist.data());
    Tensor next({n, d});
    for (std::size_t i = 0; i < n; ++i) {
      out.codes[i * L + l] = idx[i];
      const double* e = codes.data() + idx[i] * d;
      for (std::size_t j = 0; j < d; ++j) {
        next.at(i, j) = r.at(i, j) - e[j];
        out.quantized.at(i, j) += e[j];
      }
    }
    out.residuals.push_back(std::move(next));
  }
  return out;
}

}  // namespace letter
