#include "labelmia/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

namespace lmia {

namespace {

bool all_finite(const std::vector<real_t>& v) {
  for (real_t x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

Tape::Id Tape::push(Tensor val, std::string tag) {
  nodes_.push_back(Node{std::move(val), {}, nullptr, nullptr, std::move(tag)});
  return static_cast<Id>(nodes_.size() - 1);
}

void Tape::check_id(Id id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw ArgumentError("tape: invalid node id");
}

Tape::Id Tape::input(Tensor t, std::string tag) { return push(std::move(t), std::move(tag)); }

Tape::Id Tape::param(Tensor& p, std::string tag) {
  Id id = push(p, tag.empty() ? std::string("param") : std::move(tag));
  node(id).external = &p;
  return id;
}

real_t Tape::scalar_value(Id id) const {
  check_id(id);
  const Tensor& t = node(id).val;
  if (t.size() != 1) throw ArgumentError("tape: node is not scalar");
  return t.values[0];
}

Tape::Id Tape::matmul(Id a, Id b) {
  check_id(a);
  check_id(b);
  const Tensor& A = node(a).val;
  const Tensor& B = node(b).val;
  if (A.shape.size() != 2 || B.shape.size() != 2 || A.cols() != B.rows())
    throw ArgumentError("matmul: incompatible shapes");
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const real_t* arow = &A.values[i * k];
    real_t* crow = &C.values[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const real_t av = arow[p];
      if (av == real_t(0)) continue;
      const real_t* brow = &B.values[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  Id out = push(std::move(C), "matmul");
  node(out).back = [out, a, b, m, k, n](Tape& t) {
    const std::vector<real_t>& gc = t.node(out).grad_;
    const Tensor& A2 = t.node(a).val;
    const Tensor& B2 = t.node(b).val;
    std::vector<real_t>& ga = t.node(a).grad_;
    std::vector<real_t>& gb = t.node(b).grad_;
    // dA = dC * B^T
    for (std::size_t i = 0; i < m; ++i) {
      const real_t* gcrow = &gc[i * n];
      real_t* garow = &ga[i * k];
      for (std::size_t p = 0; p < k; ++p) {
        const real_t* brow = &B2.values[p * n];
        real_t acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += gcrow[j] * brow[j];
        garow[p] += acc;
      }
    }
    // dB = A^T * dC
    for (std::size_t i = 0; i < m; ++i) {
      const real_t* arow = &A2.values[i * k];
      const real_t* gcrow = &gc[i * n];
      for (std::size_t p = 0; p < k; ++p) {
        const real_t av = arow[p];
        if (av == real_t(0)) continue;
        real_t* gbrow = &gb[p * n];
        for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * gcrow[j];
      }
    }
  };
  return out;
}

Tape::Id Tape::add(Id a, Id b) {
  check_id(a);
  check_id(b);
  const Tensor& A = node(a).val;
  const Tensor& B = node(b).val;
  if (!A.same_shape(B)) throw ArgumentError("add: shape mismatch");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.values[i] += B.values[i];
  Id out = push(std::move(C), "add");
  node(out).back = [out, a, b](Tape& t) {
    const std::vector<real_t>& g = t.node(out).grad_;
    std::vector<real_t>& ga = t.node(a).grad_;
    std::vector<real_t>& gb = t.node(b).grad_;
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  };
  return out;
}

Tape::Id Tape::add_rowvec(Id x, Id bias) {
  check_id(x);
  check_id(bias);
  const Tensor& X = node(x).val;
  const Tensor& B = node(bias).val;
  if (X.shape.size() != 2 || B.size() != X.cols())
    throw ArgumentError("add_rowvec: shape mismatch");
  const std::size_t n = X.rows(), d = X.cols();
  Tensor Y = X;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) Y.values[i * d + j] += B.values[j];
  Id out = push(std::move(Y), "add_rowvec");
  node(out).back = [out, x, bias, n, d](Tape& t) {
    const std::vector<real_t>& g = t.node(out).grad_;
    std::vector<real_t>& gx = t.node(x).grad_;
    std::vector<real_t>& gb = t.node(bias).grad_;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        gx[i * d + j] += g[i * d + j];
        gb[j] += g[i * d + j];
      }
  };
  return out;
}

Tape::Id Tape::scale(Id x, real_t k) {
  check_id(x);
  Tensor Y = node(x).val;
  for (real_t& v : Y.values) v *= k;
  Id out = push(std::move(Y), "scale");
  node(out).back = [out, x, k](Tape& t) {
    const std::vector<real_t>& g = t.node(out).grad_;
    std::vector<real_t>& gx = t.node(x).grad_;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += k * g[i];
  };
  return out;
}

Tape::Id Tape::relu(Id x) {
  check_id(x);
  Tensor Y = node(x).val;
  for (real_t& v : Y.values)
    if (v < real_t(0)) v = real_t(0);
  Id out = push(std::move(Y), "relu");
  node(out).back = [out, x](Tape& t) {
    const std::vector<real_t>& g = t.node(out).grad_;
    const Tensor& X = t.node(x).val;
    std::vector<real_t>& gx = t.node(x).grad_;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (X.values[i] > real_t(0)) gx[i] += g[i];
  };
  return out;
}

Tape::Id Tape::elu(Id x) {
  check_id(x);
  Tensor Y = node(x).val;
  for (real_t& v : Y.values)
    if (v < real_t(0)) v = std::expm1(v);
  Id out = push(std::move(Y), "elu");
  node(out).back = [out, x](Tape& t) {
    const std::vector<real_t>& g = t.node(out).grad_;
    const Tensor& X = t.node(x).val;
    const Tensor& Y2 = t.node(out).val;
    std::vector<real_t>& gx = t.node(x).grad_;
    for (std::size_t i = 0; i < g.size(); ++i) {
      // derivative is 1 on the positive side, exp(x) = y + 1 on the other
      real_t d = X.values[i] > real_t(0) ? real_t(1) : Y2.values[i] + real_t(1);
      gx[i] += d * g[i];
    }
  };
  return out;
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
  std::size_t rows = 0, total = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    check_id(parts[p]);
    const Tensor& T = node(parts[p]).val;
    if (T.shape.size() != 2) throw ArgumentError("concat_cols: inputs must be matrices");
    if (p == 0)
      rows = T.rows();
    else if (T.rows() != rows)
      throw ArgumentError("concat_cols: row count mismatch");
    total += T.cols();
  }
  Tensor Y = Tensor::zeros({rows, total});
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> widths;
  for (Id p : parts) {
    const Tensor& T = node(p).val;
    const std::size_t w = T.cols();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < w; ++j) Y.values[i * total + off + j] = T.values[i * w + j];
    offsets.push_back(off);
    widths.push_back(w);
    off += w;
  }
  Id out = push(std::move(Y), "concat_cols");
  std::vector<Id> srcs = parts;
  node(out).back = [out, srcs, offsets, widths, rows, total](Tape& t) {
    const std::vector<real_t>& g = t.node(out).grad_;
    for (std::size_t p = 0; p < srcs.size(); ++p) {
      std::vector<real_t>& gp = t.node(srcs[p]).grad_;
      const std::size_t w = widths[p], off2 = offsets[p];
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + off2 + j];
    }
  };
  return out;
}

Tape::Id Tape::spmm(SparseCoo s, Id x) {
  check_id(x);
  const Tensor& X = node(x).val;
  if (X.shape.size() != 2 || X.rows() != s.cols) throw ArgumentError("spmm: shape mismatch");
  const std::size_t d = X.cols();
  Tensor Y = Tensor::zeros({s.rows, d});
  for (const auto& e : s.entries) {
    const real_t* src = &X.values[static_cast<std::size_t>(e.c) * d];
    real_t* dst = &Y.values[static_cast<std::size_t>(e.r) * d];
    for (std::size_t j = 0; j < d; ++j) dst[j] += e.w * src[j];
  }
  Id out = push(std::move(Y), "spmm");
  auto mat = std::make_shared<SparseCoo>(std::move(s));
  node(out).back = [out, x, mat, d](Tape& t) {
    const std::vector<real_t>& g = t.node(out).grad_;
    std::vector<real_t>& gx = t.node(x).grad_;
    for (const auto& e : mat->entries) {
      const real_t* src = &g[static_cast<std::size_t>(e.r) * d];
      real_t* dst = &gx[static_cast<std::size_t>(e.c) * d];
      for (std::size_t j = 0; j < d; ++j) dst[j] += e.w * src[j];
    }
  };
  return out;
}

Tape::Id Tape::gat_attention(std::shared_ptr<const AttentionEdges> edges, Id h, Id att_center,
                             Id att_neighbor, real_t leaky_slope) {
  check_id(h);
  check_id(att_center);
  check_id(att_neighbor);
  if (!edges) throw ArgumentError("gat_attention: null edge structure");
  const Tensor& H = node(h).val;
  const Tensor& Ac = node(att_center).val;
  const Tensor& An = node(att_neighbor).val;
  const std::size_t n = edges->num_nodes, d = H.cols();
  if (H.rows() != n) throw ArgumentError("gat_attention: node count mismatch");
  if (Ac.size() != d || An.size() != d)
    throw ArgumentError("gat_attention: attention vector dimension mismatch");

  // per-node projections of h onto the two attention vectors
  std::vector<real_t> cs(n, 0), ns(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const real_t* row = &H.values[i * d];
    real_t a = 0, b = 0;
    for (std::size_t j = 0; j < d; ++j) {
      a += row[j] * Ac.values[j];
      b += row[j] * An.values[j];
    }
    cs[i] = a;
    ns[i] = b;
  }

  struct Cache {
    std::vector<std::vector<real_t>> alpha;  // softmax weights per node
    std::vector<std::vector<real_t>> z;      // raw scores before leaky relu
    std::vector<real_t> cs, ns;
  };
  auto cache = std::make_shared<Cache>();
  cache->alpha.resize(n);
  cache->z.resize(n);
  cache->cs = cs;
  cache->ns = ns;

  Tensor Y = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& srcs = edges->sources[i];
    const std::size_t m = srcs.size();
    std::vector<real_t> z(m), e(m);
    real_t emax = -std::numeric_limits<real_t>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
      real_t raw = cs[i] + ns[srcs[k]];
      z[k] = raw;
      e[k] = raw > real_t(0) ? raw : leaky_slope * raw;
      emax = std::max(emax, e[k]);
    }
    real_t denom = 0;
    std::vector<real_t> alpha(m);
    for (std::size_t k = 0; k < m; ++k) {
      alpha[k] = std::exp(e[k] - emax);
      denom += alpha[k];
    }
    real_t* dst = &Y.values[i * d];
    for (std::size_t k = 0; k < m; ++k) {
      alpha[k] /= denom;
      const real_t* src = &H.values[static_cast<std::size_t>(srcs[k]) * d];
      for (std::size_t j = 0; j < d; ++j) dst[j] += alpha[k] * src[j];
    }
    cache->alpha[i] = std::move(alpha);
    cache->z[i] = std::move(z);
  }

  Id out = push(std::move(Y), "gat_attention");
  node(out).back = [out, h, att_center, att_neighbor, edges, cache, leaky_slope, n, d](Tape& t) {
    const std::vector<real_t>& g = t.node(out).grad_;
    const Tensor& H2 = t.node(h).val;
    const Tensor& Ac2 = t.node(att_center).val;
    const Tensor& An2 = t.node(att_neighbor).val;
    std::vector<real_t>& gh = t.node(h).grad_;
    std::vector<real_t>& gac = t.node(att_center).grad_;
    std::vector<real_t>& gan = t.node(att_neighbor).grad_;

    std::vector<real_t> d_cs(n, 0), d_ns(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& srcs = edges->sources[i];
      const std::size_t m = srcs.size();
      const auto& alpha = cache->alpha[i];
      const auto& z = cache->z[i];
      const real_t* gy = &g[i * d];

      // d(output_i)/d(alpha_k) then back through the softmax
      std::vector<real_t> dalpha(m, 0);
      real_t inner = 0;
      for (std::size_t k = 0; k < m; ++k) {
        const real_t* src = &H2.values[static_cast<std::size_t>(srcs[k]) * d];
        real_t acc = 0;
        for (std::size_t j = 0; j < d; ++j) acc += gy[j] * src[j];
        dalpha[k] = acc;
        inner += alpha[k] * acc;
        // direct contribution through the weighted sum
        real_t* dst = &gh[static_cast<std::size_t>(srcs[k]) * d];
        for (std::size_t j = 0; j < d; ++j) dst[j] += alpha[k] * gy[j];
      }
      for (std::size_t k = 0; k < m; ++k) {
        real_t de = alpha[k] * (dalpha[k] - inner);
        real_t dz = z[k] > real_t(0) ? de : leaky_slope * de;
        d_cs[i] += dz;
        d_ns[srcs[k]] += dz;
      }
    }
    // cs = H * att_center, ns = H * att_neighbor
    for (std::size_t i = 0; i < n; ++i) {
      const real_t* row = &H2.values[i * d];
      real_t* ghrow = &gh[i * d];
      for (std::size_t j = 0; j < d; ++j) {
        ghrow[j] += d_cs[i] * Ac2.values[j] + d_ns[i] * An2.values[j];
        gac[j] += d_cs[i] * row[j];
        gan[j] += d_ns[i] * row[j];
      }
    }
  };
  return out;
}

Tape::Id Tape::batchnorm(Id x, Id gamma, Id beta, BatchNormState& state, bool training) {
  check_id(x);
  check_id(gamma);
  check_id(beta);
  const Tensor& X = node(x).val;
  const std::size_t n = X.rows(), d = X.cols();
  if (node(gamma).val.size() != d || node(beta).val.size() != d ||
      state.running_mean.size() != d)
    throw ArgumentError("batchnorm: dimension mismatch");

  const Tensor& G = node(gamma).val;
  const Tensor& B = node(beta).val;

  if (!training) {
    auto invstd = std::make_shared<std::vector<real_t>>(d);
    auto mean = std::make_shared<std::vector<real_t>>(state.running_mean);
    for (std::size_t j = 0; j < d; ++j)
      (*invstd)[j] = real_t(1) / std::sqrt(state.running_var[j] + state.eps);
    Tensor Y = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        Y.values[i * d + j] =
            G.values[j] * (X.values[i * d + j] - (*mean)[j]) * (*invstd)[j] + B.values[j];
    Id out = push(std::move(Y), "batchnorm");
    node(out).back = [out, x, gamma, beta, invstd, mean, n, d](Tape& t) {
      const std::vector<real_t>& g = t.node(out).grad_;
      const Tensor& X2 = t.node(x).val;
      const Tensor& G2 = t.node(gamma).val;
      std::vector<real_t>& gx = t.node(x).grad_;
      std::vector<real_t>& gg = t.node(gamma).grad_;
      std::vector<real_t>& gb = t.node(beta).grad_;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          const real_t gij = g[i * d + j];
          const real_t xhat = (X2.values[i * d + j] - (*mean)[j]) * (*invstd)[j];
          gx[i * d + j] += gij * G2.values[j] * (*invstd)[j];
          gg[j] += gij * xhat;
          gb[j] += gij;
        }
    };
    return out;
  }

  if (n < 2) throw NumericError("batchnorm: training mode needs at least two rows");

  struct Cache {
    std::vector<real_t> xhat;
    std::vector<real_t> invstd;
  };
  auto cache = std::make_shared<Cache>();
  cache->xhat.resize(n * d);
  cache->invstd.resize(d);

  Tensor Y = Tensor::zeros({n, d});
  for (std::size_t j = 0; j < d; ++j) {
    real_t mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += X.values[i * d + j];
    mean /= static_cast<real_t>(n);
    real_t var = 0;
    for (std::size_t i = 0; i < n; ++i) {
      real_t dz = X.values[i * d + j] - mean;
      var += dz * dz;
    }
    var /= static_cast<real_t>(n);  // biased, used for normalization
    real_t inv = real_t(1) / std::sqrt(var + state.eps);
    cache->invstd[j] = inv;
    for (std::size_t i = 0; i < n; ++i) {
      real_t xh = (X.values[i * d + j] - mean) * inv;
      cache->xhat[i * d + j] = xh;
      Y.values[i * d + j] = G.values[j] * xh + B.values[j];
    }
    // running estimate keeps the unbiased variance
    real_t unbiased = var * static_cast<real_t>(n) / static_cast<real_t>(n - 1);
    state.running_mean[j] =
        (real_t(1) - state.momentum) * state.running_mean[j] + state.momentum * mean;
    state.running_var[j] =
        (real_t(1) - state.momentum) * state.running_var[j] + state.momentum * unbiased;
  }

  Id out = push(std::move(Y), "batchnorm");
  node(out).back = [out, x, gamma, beta, cache, n, d](Tape& t) {
    const std::vector<real_t>& g = t.node(out).grad_;
    const Tensor& G2 = t.node(gamma).val;
    std::vector<real_t>& gx = t.node(x).grad_;
    std::vector<real_t>& gg = t.node(gamma).grad_;
    std::vector<real_t>& gb = t.node(beta).grad_;
    const real_t invn = real_t(1) / static_cast<real_t>(n);
    for (std::size_t j = 0; j < d; ++j) {
      real_t sum_g = 0, sum_gx = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const real_t gij = g[i * d + j];
        sum_g += gij;
        sum_gx += gij * cache->xhat[i * d + j];
      }
      gg[j] += sum_gx;
      gb[j] += sum_g;
      const real_t k = G2.values[j] * cache->invstd[j];
      for (std::size_t i = 0; i < n; ++i) {
        const real_t gij = g[i * d + j];
        gx[i * d + j] +=
            k * (gij - invn * sum_g - invn * cache->xhat[i * d + j] * sum_gx);
      }
    }
  };
  return out;
}

Tape::Id Tape::dropout(Id x, real_t rate, bool training, Rng& rng) {
  check_id(x);
  if (rate < real_t(0) || rate >= real_t(1))
    throw ArgumentError("dropout: rate must be in [0, 1)");
  const Tensor& X = node(x).val;
  if (!training || rate == real_t(0)) {
    Tensor Y = X;
    Id out = push(std::move(Y), "dropout");
    node(out).back = [out, x](Tape& t) {
      const std::vector<real_t>& g = t.node(out).grad_;
      std::vector<real_t>& gx = t.node(x).grad_;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
    return out;
  }
  const real_t keep_scale = real_t(1) / (real_t(1) - rate);
  auto mask = std::make_shared<std::vector<real_t>>(X.size());
  Tensor Y = X;
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (rng.uniform() < static_cast<double>(rate)) {
      (*mask)[i] = real_t(0);
      Y.values[i] = real_t(0);
    } else {
      (*mask)[i] = keep_scale;
      Y.values[i] *= keep_scale;
    }
  }
  Id out = push(std::move(Y), "dropout");
  node(out).back = [out, x, mask](Tape& t) {
    const std::vector<real_t>& g = t.node(out).grad_;
    std::vector<real_t>& gx = t.node(x).grad_;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += (*mask)[i] * g[i];
  };
  return out;
}

Tape::Id Tape::softmax(Id logits) {
  check_id(logits);
  Tensor Y = node(logits).val;
  softmax_rows_inplace(Y);
  Id out = push(std::move(Y), "softmax");
  const std::size_t n = node(out).val.rows(), d = node(out).val.cols();
  node(out).back = [out, logits, n, d](Tape& t) {
    const std::vector<real_t>& g = t.node(out).grad_;
    const Tensor& Y2 = t.node(out).val;
    std::vector<real_t>& gx = t.node(logits).grad_;
    for (std::size_t i = 0; i < n; ++i) {
      real_t dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += g[i * d + j] * Y2.values[i * d + j];
      for (std::size_t j = 0; j < d; ++j)
        gx[i * d + j] += Y2.values[i * d + j] * (g[i * d + j] - dot);
    }
  };
  return out;
}

Tape::Id Tape::softmax_cross_entropy(Id logits, std::vector<std::int32_t> labels) {
  check_id(logits);
  const Tensor& X = node(logits).val;
  const std::size_t n = X.rows(), c = X.cols();
  if (labels.size() != n) throw ArgumentError("softmax_cross_entropy: label count mismatch");
  for (std::int32_t y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw ArgumentError("softmax_cross_entropy: label out of range");

  auto probs = std::make_shared<Tensor>(X);
  softmax_rows_inplace(*probs);
  real_t loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    real_t p = probs->values[i * c + static_cast<std::size_t>(labels[i])];
    loss -= std::log(std::max(p, std::numeric_limits<real_t>::min()));
  }
  loss /= static_cast<real_t>(n);
  Id out = push(Tensor::scalar(loss), "softmax_cross_entropy");
  auto lab = std::make_shared<std::vector<std::int32_t>>(std::move(labels));
  node(out).back = [out, logits, probs, lab, n, c](Tape& t) {
    const real_t gs = t.node(out).grad_[0];
    std::vector<real_t>& gx = t.node(logits).grad_;
    const real_t invn = real_t(1) / static_cast<real_t>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        real_t delta = (static_cast<std::size_t>((*lab)[i]) == j) ? real_t(1) : real_t(0);
        gx[i * c + j] += gs * invn * (probs->values[i * c + j] - delta);
      }
    }
  };
  return out;
}

Tape::Id Tape::bce_with_logits(Id logits, std::vector<real_t> targets) {
  check_id(logits);
  const Tensor& X = node(logits).val;
  const std::size_t n = X.size();
  if (X.shape.size() == 2 && X.cols() != 1)
    throw ArgumentError("bce_with_logits: logits must be a column or flat vector");
  if (targets.size() != n) throw ArgumentError("bce_with_logits: target count mismatch");

  real_t loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const real_t z = X.values[i];
    // max(z,0) - z*t + log(1 + exp(-|z|))
    loss += std::max(z, real_t(0)) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  loss /= static_cast<real_t>(n);
  Id out = push(Tensor::scalar(loss), "bce_with_logits");
  auto tg = std::make_shared<std::vector<real_t>>(std::move(targets));
  node(out).back = [out, logits, tg, n](Tape& t) {
    const real_t gs = t.node(out).grad_[0];
    const Tensor& X2 = t.node(logits).val;
    std::vector<real_t>& gx = t.node(logits).grad_;
    const real_t invn = real_t(1) / static_cast<real_t>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const real_t z = X2.values[i];
      const real_t sig = real_t(1) / (real_t(1) + std::exp(-z));
      gx[i] += gs * invn * (sig - (*tg)[i]);
    }
  };
  return out;
}

Tape::Id Tape::mean_squared_error(Id x, Tensor target) {
  check_id(x);
  const Tensor& X = node(x).val;
  if (!X.same_shape(target)) throw ArgumentError("mean_squared_error: shape mismatch");
  const std::size_t n = X.size();
  real_t loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    real_t dz = X.values[i] - target.values[i];
    loss += dz * dz;
  }
  loss /= static_cast<real_t>(n);
  Id out = push(Tensor::scalar(loss), "mean_squared_error");
  auto tg = std::make_shared<Tensor>(std::move(target));
  node(out).back = [out, x, tg, n](Tape& t) {
    const real_t gs = t.node(out).grad_[0];
    const Tensor& X2 = t.node(x).val;
    std::vector<real_t>& gx = t.node(x).grad_;
    const real_t k = real_t(2) / static_cast<real_t>(n);
    for (std::size_t i = 0; i < n; ++i) gx[i] += gs * k * (X2.values[i] - tg->values[i]);
  };
  return out;
}

void Tape::backward(Id loss) {
  check_id(loss);
  if (node(loss).val.size() != 1) throw ArgumentError("backward: loss must be scalar");
  if (!std::isfinite(node(loss).val.values[0])) {
    // find the node that first went non-finite, for the error message
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!all_finite(nodes_[i].val.values)) {
        throw NumericError("non-finite loss; first non-finite value at node " +
                           std::to_string(i) + " (" + nodes_[i].tag + ")");
      }
    }
    throw NumericError("non-finite loss");
  }
  for (Node& nd : nodes_) nd.grad_.assign(nd.val.size(), real_t(0));
  node(loss).grad_[0] = real_t(1);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back(*this);
  }
  for (Node& nd : nodes_) {
    if (nd.external) {
      nd.external->ensure_grad();
      for (std::size_t i = 0; i < nd.grad_.size(); ++i) nd.external->grad[i] += nd.grad_[i];
    }
  }
}

void softmax_rows_inplace(Tensor& logits) {
  const std::size_t n = logits.rows(), d = logits.cols();
  for (std::size_t i = 0; i < n; ++i) {
    real_t* row = &logits.values[i * d];
    real_t mx = row[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    real_t denom = 0;
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = std::exp(row[j] - mx);
      denom += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) row[j] /= denom;
  }
}

std::size_t argmax_row(const real_t* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

}  // namespace lmia
