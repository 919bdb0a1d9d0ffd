#include "letter/core/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "letter/core/error.hpp"
#include "letter/core/kernels.hpp"

namespace letter::ad {

Parameter::Parameter(std::string name_, Tensor init)
    : name(std::move(name_)),
      value(std::move(init)),
      grad(value.shape()),
      first_moment(value.shape()),
      second_moment(value.shape()) {}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.value = &n.owned;
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  Node& n = nodes_.emplace_back();
  n.value = &p.value;
  if (!p.grad.same_shape(p.value)) p.grad = Tensor(p.value.shape());
  n.grad = &p.grad;
  n.requires_grad = true;
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad) {
    n.grad_owned = Tensor(n.value->shape());
    n.grad = &n.grad_owned;
  }
  return *n.grad;
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  bool needs = false;
  for (const Var& p : parents) {
    if (&p.tape() != this) throw ContractError("operands recorded on different tapes");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  if (!value.all_finite()) throw NumericError("non-finite value produced on the gradient tape");
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.value = &n.owned;
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  const Tensor& v = value(loss.id());
  if (v.size() != 1) throw ContractError("backward requires a scalar loss, got " + v.shape_string());
  if (!nodes_[loss.id()].requires_grad) return;
  grad(loss.id())[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || !n.grad) continue;
    n.backward(*this, *n.grad);
  }
}

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + t.shape_string());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

void axpy(Tensor& dst, const Tensor& src, double alpha = 1.0) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += alpha * s[i];
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank2(A, "matmul");
  require_rank2(B, "matmul");
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) throw DimensionError("matmul: inner extents " + A.shape_string() + " x " + B.shape_string());
  Tensor out({m, n});
  kernels::gemm_nn(m, k, n, A.data(), B.data(), out.data(), false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia))  // dA = G B^T
      kernels::gemm_nt(m, n, k, g.data(), t.value(ib).data(), t.grad(ia).data(), true);
    if (t.requires_grad(ib))  // dB = A^T G
      kernels::gemm_tn(k, m, n, t.value(ia).data(), g.data(), t.grad(ib).data(), true);
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank2(A, "matmul_nt");
  require_rank2(B, "matmul_nt");
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  if (B.cols() != k) throw DimensionError("matmul_nt: inner extents " + A.shape_string() + " x " + B.shape_string() + "^T");
  Tensor out({m, n});
  kernels::gemm_nt(m, k, n, A.data(), B.data(), out.data(), false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia))  // dA = G B
      kernels::gemm_nn(m, n, k, g.data(), t.value(ib).data(), t.grad(ia).data(), true);
    if (t.requires_grad(ib))  // dB = G^T A
      kernels::gemm_tn(n, m, k, g.data(), t.value(ia).data(), t.grad(ib).data(), true);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  axpy(out, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) axpy(t.grad(ia), g);
    if (t.requires_grad(ib)) axpy(t.grad(ib), g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  axpy(out, b.value(), -1.0);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) axpy(t.grad(ia), g);
    if (t.requires_grad(ib)) axpy(t.grad(ib), g, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      const Tensor& B = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      const Tensor& A = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= c;
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {a}, [ia, c](Tape& t, const Tensor& g) { axpy(t.grad(ia), g, c); });
}

Var add_bias(Var a, Var bias) {
  const Tensor& A = a.value();
  const Tensor& b = bias.value();
  require_rank2(A, "add_bias");
  const std::size_t m = A.rows(), n = A.cols();
  if (b.size() != n) throw DimensionError("add_bias: bias " + b.shape_string() + " vs " + A.shape_string());
  Tensor out = A;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().push(std::move(out), {a, bias}, [ia, ib, m, n](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) axpy(t.grad(ia), g);
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  const std::size_t ia = a.id();
  const std::size_t self = a.tape().size();
  return a.tape().push(std::move(out), {a}, [ia, self](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    const Tensor& y = t.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var gelu(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) {
    const double x = v;
    v = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
  }
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    const Tensor& X = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = X[i];
      const double u = kGeluC * (x + 0.044715 * x * x * x);
      const double th = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
      ga[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du);
    }
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    const Tensor& X = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (X[i] > 0.0) ga[i] += g[i];
  });
}

Var stop_gradient(Var a) {
  // Recorded as a node without parents so nothing flows back.
  return a.tape().push(a.value(), {}, nullptr);
}

Var straight_through(Var input, Var output) {
  require_same_shape(input.value(), output.value(), "straight_through");
  const std::size_t ii = input.id(), io = output.id();
  return input.tape().push(output.value(), {input, output}, [ii, io](Tape& t, const Tensor& g) {
    if (t.requires_grad(ii)) axpy(t.grad(ii), g);
    if (t.requires_grad(io)) axpy(t.grad(io), g);
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return a.tape().push(Tensor::scalar(s), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    const double gv = g[0];
    for (double& v : ga.values()) v += gv;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_squares(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  const std::size_t ia = a.id();
  return a.tape().push(Tensor::scalar(s), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    const Tensor& X = t.value(ia);
    const double gv = 2.0 * g[0];
    for (std::size_t i = 0; i < X.size(); ++i) ga[i] += gv * X[i];
  });
}

Var gather_rows(Var a, std::span<const std::uint32_t> rows) {
  const Tensor& A = a.value();
  require_rank2(A, "gather_rows");
  const std::size_t n = A.cols();
  Tensor out({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= A.rows()) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(A.data() + rows[i] * n, n, out.data() + i * n);
  }
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {a}, [ia, n, idx = std::move(idx)](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double* dst = ga.data() + idx[i] * n;
      const double* src = g.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
    }
  });
}

Var pick(Var a, std::span<const std::uint32_t> cols) {
  const Tensor& A = a.value();
  require_rank2(A, "pick");
  const std::size_t m = A.rows(), n = A.cols();
  if (cols.size() != m) throw DimensionError("pick: one column per row required");
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    if (cols[i] >= n) throw DimensionError("pick: column index out of range");
    out[i] = A[i * n + cols[i]];
  }
  std::vector<std::uint32_t> idx(cols.begin(), cols.end());
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {a}, [ia, n, idx = std::move(idx)](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) ga[i * n + idx[i]] += g[i];
  });
}

namespace {

// Row-wise softmax of a/tau over allowed entries. Returns probabilities with
// masked entries set to zero, plus the per-row log normaliser.
void masked_softmax(const Tensor& A, double tau, const RowMask* mask, Tensor& probs,
                    std::vector<double>& log_norm) {
  const std::size_t m = A.rows(), n = A.cols();
  probs = Tensor({m, n});
  log_norm.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = A.data() + i * n;
    const std::uint8_t* allow = mask ? mask->data() + i * n : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (!allow || allow[j]) mx = std::max(mx, row[j] / tau);
    if (!std::isfinite(mx)) throw ParameterError("softmax: row with no allowed entries");
    double z = 0.0;
    double* p = probs.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      if (allow && !allow[j]) continue;
      p[j] = std::exp(row[j] / tau - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < n; ++j) p[j] /= z;
    log_norm[i] = mx + std::log(z);
  }
}

void check_tau(double tau) {
  if (!(tau > 0.0)) throw ParameterError("temperature must be positive");
}

void check_mask(const Tensor& A, const RowMask* mask) {
  if (mask && mask->size() != A.size()) throw DimensionError("softmax mask size mismatch");
}

}  // namespace

Tensor softmax_with_temperature(const Tensor& logits, double tau) {
  check_tau(tau);
  Tensor row = logits.rank() == 2 ? logits : logits.reshaped({1, logits.size()});
  Tensor probs;
  std::vector<double> log_norm;
  masked_softmax(row, tau, nullptr, probs, log_norm);
  return probs.reshaped(logits.shape());
}

Var softmax_rows(Var a, double tau, const RowMask* mask) {
  check_tau(tau);
  require_rank2(a.value(), "softmax_rows");
  check_mask(a.value(), mask);
  Tensor probs;
  std::vector<double> log_norm;
  masked_softmax(a.value(), tau, mask, probs, log_norm);
  const std::size_t m = probs.rows(), n = probs.cols();
  const std::size_t ia = a.id();
  const std::size_t self = a.tape().size();
  return a.tape().push(std::move(probs), {a}, [ia, self, m, n, tau](Tape& t, const Tensor& g) {
    // dA_ij = P_ij (G_ij - sum_k G_ik P_ik) / tau ; masked entries have P = 0.
    Tensor& ga = t.grad(ia);
    const Tensor& P = t.value(self);
    for (std::size_t i = 0; i < m; ++i) {
      const double* p = P.data() + i * n;
      const double* gr = g.data() + i * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += gr[j] * p[j];
      double* d = ga.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) d[j] += p[j] * (gr[j] - s) / tau;
    }
  });
}

Var log_softmax_rows(Var a, double tau, const RowMask* mask) {
  check_tau(tau);
  const Tensor& A = a.value();
  require_rank2(A, "log_softmax_rows");
  check_mask(A, mask);
  Tensor probs;
  std::vector<double> log_norm;
  masked_softmax(A, tau, mask, probs, log_norm);
  const std::size_t m = A.rows(), n = A.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (mask && !(*mask)[i * n + j]) continue;
      out[i * n + j] = A[i * n + j] / tau - log_norm[i];
    }
  auto shared_probs = std::make_shared<Tensor>(std::move(probs));
  auto shared_mask = mask ? std::make_shared<RowMask>(*mask) : nullptr;
  const std::size_t ia = a.id();
  return a.tape().push(std::move(out), {a},
                       [ia, m, n, tau, shared_probs, shared_mask](Tape& t, const Tensor& g) {
                         // dA_ij = (G_ij - P_ij sum_k G_ik) / tau over allowed entries.
                         Tensor& ga = t.grad(ia);
                         const Tensor& P = *shared_probs;
                         for (std::size_t i = 0; i < m; ++i) {
                           const std::uint8_t* allow = shared_mask ? shared_mask->data() + i * n : nullptr;
                           double s = 0.0;
                           for (std::size_t j = 0; j < n; ++j)
                             if (!allow || allow[j]) s += g[i * n + j];
                           for (std::size_t j = 0; j < n; ++j) {
                             if (allow && !allow[j]) continue;
                             ga[i * n + j] += (g[i * n + j] - P[i * n + j] * s) / tau;
                           }
                         }
                       });
}

Var cross_entropy_rows(Var logits, std::span<const std::uint32_t> targets, double tau) {
  check_tau(tau);
  const Tensor& A = logits.value();
  require_rank2(A, "cross_entropy_rows");
  const std::size_t m = A.rows(), n = A.cols();
  if (targets.size() != m) throw DimensionError("cross_entropy_rows: one target per row required");
  Tensor probs;
  std::vector<double> log_norm;
  masked_softmax(A, tau, nullptr, probs, log_norm);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] >= n) throw DataError("target token outside the vocabulary");
    loss += log_norm[i] - A[i * n + targets[i]] / tau;
  }
  auto shared_probs = std::make_shared<Tensor>(std::move(probs));
  std::vector<std::uint32_t> tgt(targets.begin(), targets.end());
  const std::size_t ia = logits.id();
  return logits.tape().push(Tensor::scalar(loss), {logits},
                            [ia, m, n, tau, shared_probs, tgt = std::move(tgt)](Tape& t, const Tensor& g) {
                              Tensor& ga = t.grad(ia);
                              const Tensor& P = *shared_probs;
                              const double gv = g[0] / tau;
                              for (std::size_t i = 0; i < m; ++i) {
                                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += gv * P[i * n + j];
                                ga[i * n + tgt[i]] -= gv;
                              }
                            });
}

Var normalize_rows(Var a, double eps) {
  const Tensor& A = a.value();
  require_rank2(A, "normalize_rows");
  const std::size_t m = A.rows(), n = A.cols();
  Tensor out({m, n});
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += A[i * n + j] * A[i * n + j];
    norms[i] = std::max(std::sqrt(ss), eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = A[i * n + j] / norms[i];
  }
  const std::size_t ia = a.id();
  Tensor y = out;
  // d(x/|x|) = (g - y <y, g>) / |x|
  return a.tape().push(std::move(out), {a}, [ia, m, n, y = std::move(y), norms = std::move(norms)](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i) {
      double yg = 0.0;
      for (std::size_t j = 0; j < n; ++j) yg += y[i * n + j] * g[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += (g[i * n + j] - y[i * n + j] * yg) / norms[i];
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& X = x.value();
  require_rank2(X, "layer_norm");
  const std::size_t m = X.rows(), n = X.cols();
  if (gamma.value().size() != n || beta.value().size() != n) throw DimensionError("layer_norm: affine size mismatch");
  auto xhat = std::make_shared<Tensor>(std::vector<std::size_t>{m, n});
  auto inv_std = std::make_shared<std::vector<double>>(m);
  Tensor out({m, n});
  const Tensor& G = gamma.value();
  const Tensor& B = beta.value();
  for (std::size_t i = 0; i < m; ++i) {
    const double* r = X.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += r[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (r[j] - mu) * (r[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (r[j] - mu) * is;
      (*xhat)[i * n + j] = h;
      out[i * n + j] = h * G[j] + B[j];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().push(std::move(out), {x, gamma, beta},
                       [ix, ig, ib, m, n, xhat, inv_std](Tape& t, const Tensor& g) {
                         const Tensor& H = *xhat;
                         if (t.requires_grad(ig)) {
                           Tensor& gg = t.grad(ig);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * H[i * n + j];
                         }
                         if (t.requires_grad(ib)) {
                           Tensor& gb = t.grad(ib);
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                         }
                         if (t.requires_grad(ix)) {
                           Tensor& gx = t.grad(ix);
                           const Tensor& Gm = t.value(ig);
                           const double inv_n = 1.0 / static_cast<double>(n);
                           for (std::size_t i = 0; i < m; ++i) {
                             double s1 = 0.0, s2 = 0.0;
                             for (std::size_t j = 0; j < n; ++j) {
                               const double dh = g[i * n + j] * Gm[j];
                               s1 += dh;
                               s2 += dh * H[i * n + j];
                             }
                             const double is = (*inv_std)[i];
                             for (std::size_t j = 0; j < n; ++j) {
                               const double dh = g[i * n + j] * Gm[j];
                               gx[i * n + j] += is * (dh - inv_n * s1 - H[i * n + j] * inv_n * s2);
                             }
                           }
                         }
                       });
}

Var causal_attention(Var qkv, std::size_t heads, std::span<const std::size_t> segment_starts) {
  const Tensor& QKV = qkv.value();
  require_rank2(QKV, "causal_attention");
  const std::size_t T = QKV.rows();
  if (heads == 0 || QKV.cols() % (3 * heads) != 0)
    throw DimensionError("causal_attention: width " + std::to_string(QKV.cols()) + " not divisible by 3*heads");
  const std::size_t D = QKV.cols() / 3;
  const std::size_t dh = D / heads;
  const std::size_t stride = 3 * D;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // Row i attends to [first[i], i]; probabilities are stored row by row.
  auto first = std::make_shared<std::vector<std::size_t>>(T, 0);
  auto offset = std::make_shared<std::vector<std::size_t>>(T + 1, 0);
  {
    std::size_t seg = 0, begin = 0;
    for (std::size_t i = 0; i < T; ++i) {
      while (seg < segment_starts.size() && segment_starts[seg] <= i) begin = segment_starts[seg++];
      (*first)[i] = begin;
      (*offset)[i + 1] = (*offset)[i] + (i - begin + 1);
    }
  }
  const std::size_t per_head = offset->back();
  auto probs = std::make_shared<std::vector<double>>(heads * per_head, 0.0);
  Tensor out({T, D});
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t qo = h * dh, ko = D + h * dh, vo = 2 * D + h * dh;
    for (std::size_t i = 0; i < T; ++i) {
      const std::size_t j0 = (*first)[i];
      double* P = probs->data() + h * per_head + (*offset)[i] - j0;  // P[j] for j in [j0, i]
      const double* q = QKV.data() + i * stride + qo;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = j0; j <= i; ++j) {
        const double s = kernels::dot(q, QKV.data() + j * stride + ko, dh) * inv_sqrt;
        P[j] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (std::size_t j = j0; j <= i; ++j) {
        P[j] = std::exp(P[j] - mx);
        z += P[j];
      }
      double* o = out.data() + i * D + h * dh;
      for (std::size_t j = j0; j <= i; ++j) {
        P[j] /= z;
        const double p = P[j];
        const double* v = QKV.data() + j * stride + vo;
        for (std::size_t c = 0; c < dh; ++c) o[c] += p * v[c];
      }
    }
  }
  const std::size_t iq = qkv.id();
  return qkv.tape().push(std::move(out), {qkv}, [iq, T, D, dh, heads, stride, inv_sqrt, per_head, first, offset,
                                                 probs](Tape& t, const Tensor& g) {
    const Tensor& QKV = t.value(iq);
    Tensor& gq = t.grad(iq);
    std::vector<double> dp(T);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t qo = h * dh, ko = D + h * dh, vo = 2 * D + h * dh;
      for (std::size_t i = 0; i < T; ++i) {
        const std::size_t j0 = (*first)[i];
        const double* P = probs->data() + h * per_head + (*offset)[i] - j0;
        const double* go = g.data() + i * D + h * dh;
        // dV_j += P_ij dO_i ; dP_ij = dO_i . V_j
        double s = 0.0;
        for (std::size_t j = j0; j <= i; ++j) {
          const double p = P[j];
          double* dv = gq.data() + j * stride + vo;
          for (std::size_t c = 0; c < dh; ++c) dv[c] += p * go[c];
          dp[j] = kernels::dot(go, QKV.data() + j * stride + vo, dh);
          s += dp[j] * p;
        }
        // dS_ij = P_ij (dP_ij - s); S = q.k / sqrt(dh)
        double* dq = gq.data() + i * stride + qo;
        const double* q = QKV.data() + i * stride + qo;
        for (std::size_t j = j0; j <= i; ++j) {
          const double ds = P[j] * (dp[j] - s) * inv_sqrt;
          if (ds == 0.0) continue;
          const double* k = QKV.data() + j * stride + ko;
          double* dk = gq.data() + j * stride + ko;
          for (std::size_t c = 0; c < dh; ++c) {
            dq[c] += ds * k[c];
            dk[c] += ds * q[c];
          }
        }
      }
    }
  });
}

}  // namespace letter::ad
