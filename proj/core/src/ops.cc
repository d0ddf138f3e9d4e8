#include "adaptvc/ops.h"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

namespace adaptvc::ops {
namespace {

using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap as_matrix(const Tensor& t) { return ConstMatMap(t.data(), t.rows(), t.cols()); }
MatMap as_matrix(Tensor& t) { return MatMap(t.data(), t.rows(), t.cols()); }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a, b);
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a matrix, got " +
                                shape_string(a.shape()));
  }
}

template <typename F>
Var unary(Var a, F&& fn, std::function<Scalar(Scalar x, Scalar y)> deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) out[i] = fn(av[i]);
  return a.tape().record(std::move(out), {a},
                         [ia = a.id(), deriv = std::move(deriv)](Tape& t, const Tensor& g) {
                           Tensor* ga = t.grad(ia);
                           if (!ga) return;
                           const Tensor& x = t.value(ia);
                           for (int64_t i = 0; i < g.size(); ++i) {
                             (*ga)[i] += g[i] * deriv(x[i], 0);
                           }
                         });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  out += b.value();
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id()](Tape& t, const Tensor& g) {
                           if (Tensor* ga = t.grad(ia)) *ga += g;
                           if (Tensor* gb = t.grad(ib)) *gb += g;
                         });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a.value(), b.value());
  const Tensor& bv = b.value();
  Tensor out = a.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id()](Tape& t, const Tensor& g) {
                           if (Tensor* ga = t.grad(ia)) *ga += g;
                           if (Tensor* gb = t.grad(ib)) {
                             for (int64_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
                           }
                         });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a.value(), b.value());
  const Tensor& bv = b.value();
  Tensor out = a.value();
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id()](Tape& t, const Tensor& g) {
                           const Tensor& av = t.value(ia);
                           const Tensor& bv = t.value(ib);
                           if (Tensor* ga = t.grad(ia)) {
                             for (int64_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
                           }
                           if (Tensor* gb = t.grad(ib)) {
                             for (int64_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
                           }
                         });
}

Var scale(Var a, Scalar s) {
  Tensor out = a.value();
  out *= s;
  return a.tape().record(std::move(out), {a}, [ia = a.id(), s](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad(ia)) {
      for (int64_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
    }
  });
}

Var add_scalar(Var a, Scalar s) {
  Tensor out = a.value();
  for (Scalar& v : out.values()) v += s;
  return a.tape().record(std::move(out), {a}, [ia = a.id()](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad(ia)) *ga += g;
  });
}

Var add_row(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("add_row", av);
  if (bv.size() != av.cols()) shape_error("add_row", av, bv);
  Tensor out = av;
  const int64_t rows = av.rows(), cols = av.cols();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) out.at(r, c) += bv[c];
  }
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id(), rows, cols](Tape& t, const Tensor& g) {
                           if (Tensor* ga = t.grad(ia)) *ga += g;
                           if (Tensor* gb = t.grad(ib)) {
                             for (int64_t r = 0; r < rows; ++r) {
                               for (int64_t c = 0; c < cols; ++c) (*gb)[c] += g.at(r, c);
                             }
                           }
                         });
}

Var mul_row(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("mul_row", av);
  if (bv.size() != av.cols()) shape_error("mul_row", av, bv);
  Tensor out = av;
  const int64_t rows = av.rows(), cols = av.cols();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) out.at(r, c) *= bv[c];
  }
  return a.tape().record(
      std::move(out), {a, b}, [ia = a.id(), ib = b.id(), rows, cols](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        if (Tensor* ga = t.grad(ia)) {
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) ga->at(r, c) += g.at(r, c) * bv[c];
          }
        }
        if (Tensor* gb = t.grad(ib)) {
          for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) (*gb)[c] += g.at(r, c) * av.at(r, c);
          }
        }
      });
}

Var silu(Var a) {
  return unary(
      a, [](Scalar x) { return x / (1.0 + std::exp(-x)); },
      [](Scalar x, Scalar) {
        const Scalar s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Var tanh(Var a) {
  return unary(
      a, [](Scalar x) { return std::tanh(x); },
      [](Scalar x, Scalar) {
        const Scalar y = std::tanh(x);
        return 1.0 - y * y;
      });
}

Var square(Var a) {
  return unary(
      a, [](Scalar x) { return x * x; }, [](Scalar x, Scalar) { return 2.0 * x; });
}

Var log(Var a, Scalar eps) {
  for (Scalar v : a.value().values()) {
    if (!(v + eps > 0)) {
      throw std::invalid_argument("log: non-positive argument " + std::to_string(v + eps));
    }
  }
  return unary(
      a, [eps](Scalar x) { return std::log(x + eps); },
      [eps](Scalar x, Scalar) { return 1.0 / (x + eps); });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("matmul", av);
  require_matrix("matmul", bv);
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out({av.rows(), bv.cols()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id()](Tape& t, const Tensor& g) {
                           if (Tensor* ga = t.grad(ia)) {
                             as_matrix(*ga).noalias() +=
                                 as_matrix(g) * as_matrix(t.value(ib)).transpose();
                           }
                           if (Tensor* gb = t.grad(ib)) {
                             as_matrix(*gb).noalias() +=
                                 as_matrix(t.value(ia)).transpose() * as_matrix(g);
                           }
                         });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix("matmul_nt", av);
  require_matrix("matmul_nt", bv);
  if (av.cols() != bv.cols()) shape_error("matmul_nt", av, bv);
  Tensor out({av.rows(), bv.rows()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv).transpose();
  return a.tape().record(std::move(out), {a, b},
                         [ia = a.id(), ib = b.id()](Tape& t, const Tensor& g) {
                           if (Tensor* ga = t.grad(ia)) {
                             as_matrix(*ga).noalias() += as_matrix(g) * as_matrix(t.value(ib));
                           }
                           if (Tensor* gb = t.grad(ib)) {
                             as_matrix(*gb).noalias() +=
                                 as_matrix(g).transpose() * as_matrix(t.value(ia));
                           }
                         });
}

Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

Var softmax(Var a, int axis) {
  const Tensor& av = a.value();
  if (av.rank() > 2) {
    throw std::invalid_argument("softmax: rank > 2 unsupported, got " +
                                shape_string(av.shape()));
  }
  if (axis < 0) axis += static_cast<int>(std::max<int64_t>(av.rank(), 1));
  // Treat rank <= 1 as a single row.
  const bool along_rows = av.rank() <= 1 || axis == 1;
  if (av.rank() == 2 && axis != 0 && axis != 1) {
    throw std::invalid_argument("softmax: axis out of range");
  }
  const int64_t rows = av.rows(), cols = av.cols();
  const int64_t outer = along_rows ? rows : cols;
  const int64_t inner = along_rows ? cols : rows;
  auto index = [=](int64_t o, int64_t i) { return along_rows ? o * cols + i : i * cols + o; };

  Tensor out(av.shape());
  for (int64_t o = 0; o < outer; ++o) {
    Scalar mx = av[index(o, 0)];
    for (int64_t i = 1; i < inner; ++i) mx = std::max(mx, av[index(o, i)]);
    Scalar total = 0;
    for (int64_t i = 0; i < inner; ++i) {
      const Scalar e = std::exp(av[index(o, i)] - mx);
      out[index(o, i)] = e;
      total += e;
    }
    for (int64_t i = 0; i < inner; ++i) out[index(o, i)] /= total;
  }
  const int out_id = static_cast<int>(a.tape().node_count());
  return a.tape().record(std::move(out), {a},
                         [ia = a.id(), out_id, outer, inner, index](Tape& t, const Tensor& g) {
                           Tensor* ga = t.grad(ia);
                           if (!ga) return;
                           const Tensor& y = t.value(out_id);
                           for (int64_t o = 0; o < outer; ++o) {
                             Scalar dot = 0;
                             for (int64_t i = 0; i < inner; ++i) {
                               dot += g[index(o, i)] * y[index(o, i)];
                             }
                             for (int64_t i = 0; i < inner; ++i) {
                               const int64_t k = index(o, i);
                               (*ga)[k] += y[k] * (g[k] - dot);
                             }
                           }
                         });
}

Var layer_norm(Var a, Scalar variance_eps) {
  const Tensor& av = a.value();
  const int64_t rows = av.rows(), cols = av.cols();
  Tensor out(av.shape());
  std::vector<Scalar> inv_std(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    auto x = av.row(r);
    Scalar m = 0;
    for (Scalar v : x) m += v;
    m /= static_cast<Scalar>(cols);
    Scalar var = 0;
    for (Scalar v : x) var += (v - m) * (v - m);
    var /= static_cast<Scalar>(cols);
    const Scalar is = 1.0 / std::sqrt(var + variance_eps);
    inv_std[static_cast<size_t>(r)] = is;
    auto y = out.row(r);
    for (int64_t c = 0; c < cols; ++c) y[c] = (x[c] - m) * is;
  }
  const int out_id = static_cast<int>(a.tape().node_count());
  return a.tape().record(
      std::move(out), {a},
      [ia = a.id(), out_id, rows, cols, inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        Tensor* ga = t.grad(ia);
        if (!ga) return;
        const Tensor& y = t.value(out_id);
        const Scalar n = static_cast<Scalar>(cols);
        for (int64_t r = 0; r < rows; ++r) {
          auto gy = g.row(r);
          auto yr = y.row(r);
          Scalar mg = 0, mgy = 0;
          for (int64_t c = 0; c < cols; ++c) {
            mg += gy[c];
            mgy += gy[c] * yr[c];
          }
          mg /= n;
          mgy /= n;
          auto gx = ga->row(r);
          const Scalar is = inv_std[static_cast<size_t>(r)];
          for (int64_t c = 0; c < cols; ++c) gx[c] += is * (gy[c] - mg - yr[c] * mgy);
        }
      });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int64_t rows = parts[0].value().rows();
  int64_t cols = 0;
  std::vector<int64_t> offsets;
  for (const Var& p : parts) {
    require_matrix("concat_cols", p.value());
    if (p.value().rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    offsets.push_back(cols);
    cols += p.value().cols();
  }
  Tensor out({rows, cols});
  for (size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (int64_t r = 0; r < rows; ++r) {
      std::copy(pv.row(r).begin(), pv.row(r).end(), out.row(r).begin() + offsets[k]);
    }
  }
  std::vector<int> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts[0].tape().record(
      std::move(out), parts, [ids, offsets, rows](Tape& t, const Tensor& g) {
        for (size_t k = 0; k < ids.size(); ++k) {
          Tensor* gp = t.grad(ids[k]);
          if (!gp) continue;
          const int64_t c = gp->cols();
          for (int64_t r = 0; r < rows; ++r) {
            auto src = g.row(r).subspan(static_cast<size_t>(offsets[k]), static_cast<size_t>(c));
            auto dst = gp->row(r);
            for (int64_t j = 0; j < c; ++j) dst[j] += src[j];
          }
        }
      });
}

Var slice_cols(Var a, int64_t begin, int64_t end) {
  const Tensor& av = a.value();
  require_matrix("slice_cols", av);
  if (begin < 0 || end > av.cols() || begin >= end) {
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") for " + shape_string(av.shape()));
  }
  const int64_t rows = av.rows();
  Tensor out({rows, end - begin});
  for (int64_t r = 0; r < rows; ++r) {
    auto src = av.row(r);
    std::copy(src.begin() + begin, src.begin() + end, out.row(r).begin());
  }
  return a.tape().record(std::move(out), {a},
                         [ia = a.id(), begin, end, rows](Tape& t, const Tensor& g) {
                           Tensor* ga = t.grad(ia);
                           if (!ga) return;
                           for (int64_t r = 0; r < rows; ++r) {
                             auto dst = ga->row(r);
                             auto src = g.row(r);
                             for (int64_t c = begin; c < end; ++c) dst[c] += src[c - begin];
                           }
                         });
}

Var slice_rows(Var a, int64_t begin, int64_t end) {
  const Tensor& av = a.value();
  require_matrix("slice_rows", av);
  if (begin < 0 || end > av.rows() || begin >= end) {
    throw std::invalid_argument("slice_rows: bad range for " + shape_string(av.shape()));
  }
  std::vector<int64_t> idx;
  for (int64_t r = begin; r < end; ++r) idx.push_back(r);
  return gather_rows(a, std::move(idx));
}

Var gather_rows(Var a, std::vector<int64_t> indices) {
  const Tensor& av = a.value();
  require_matrix("gather_rows", av);
  const int64_t cols = av.cols();
  Tensor out({static_cast<int64_t>(indices.size()), cols});
  for (size_t i = 0; i < indices.size(); ++i) {
    const int64_t r = indices[i];
    if (r < 0 || r >= av.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(r) + " out of range for " +
                              shape_string(av.shape()));
    }
    auto src = av.row(r);
    std::copy(src.begin(), src.end(), out.row(static_cast<int64_t>(i)).begin());
  }
  return a.tape().record(std::move(out), {a},
                         [ia = a.id(), indices = std::move(indices)](Tape& t, const Tensor& g) {
                           Tensor* ga = t.grad(ia);
                           if (!ga) return;
                           for (size_t i = 0; i < indices.size(); ++i) {
                             auto dst = ga->row(indices[i]);
                             auto src = g.row(static_cast<int64_t>(i));
                             for (size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                           }
                         });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(std::move(out), {a}, [ia = a.id()](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad(ia);
    if (!ga) return;
    for (int64_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

Var mean_rows(Var a) { return mean_pool_rows(a, a.value().rows()); }

Var mean_pool_rows(Var a, int64_t k) {
  const Tensor& av = a.value();
  require_matrix("mean_pool_rows", av);
  if (k <= 0 || av.rows() % k != 0) {
    throw std::invalid_argument("mean_pool_rows: " + std::to_string(av.rows()) +
                                " rows not divisible by " + std::to_string(k));
  }
  const int64_t out_rows = av.rows() / k, cols = av.cols();
  Tensor out({out_rows, cols});
  const Scalar inv = 1.0 / static_cast<Scalar>(k);
  for (int64_t r = 0; r < av.rows(); ++r) {
    auto src = av.row(r);
    auto dst = out.row(r / k);
    for (int64_t c = 0; c < cols; ++c) dst[c] += src[c] * inv;
  }
  return a.tape().record(std::move(out), {a},
                         [ia = a.id(), k, inv, cols](Tape& t, const Tensor& g) {
                           Tensor* ga = t.grad(ia);
                           if (!ga) return;
                           for (int64_t r = 0; r < ga->rows(); ++r) {
                             auto src = g.row(r / k);
                             auto dst = ga->row(r);
                             for (int64_t c = 0; c < cols; ++c) dst[c] += src[c] * inv;
                           }
                         });
}

Var im2col(Var a, int64_t kernel, int64_t stride, int64_t pad_left, int64_t pad_right,
           Padding padding) {
  const Tensor& av = a.value();
  require_matrix("im2col", av);
  const int64_t rows = av.rows(), cols = av.cols();
  const int64_t padded = rows + pad_left + pad_right;
  if (kernel <= 0 || stride <= 0 || padded < kernel) {
    throw std::invalid_argument("im2col: kernel " + std::to_string(kernel) +
                                " does not fit input " + shape_string(av.shape()));
  }
  const int64_t out_rows = (padded - kernel) / stride + 1;
  // Source row for each (output row, tap); -1 marks zero padding.
  std::vector<int64_t> src_row(static_cast<size_t>(out_rows * kernel));
  for (int64_t o = 0; o < out_rows; ++o) {
    for (int64_t k = 0; k < kernel; ++k) {
      int64_t r = o * stride + k - pad_left;
      if (r < 0 || r >= rows) {
        r = padding == Padding::kEdge ? std::clamp<int64_t>(r, 0, rows - 1) : -1;
      }
      src_row[static_cast<size_t>(o * kernel + k)] = r;
    }
  }
  Tensor out({out_rows, kernel * cols});
  for (int64_t o = 0; o < out_rows; ++o) {
    auto dst = out.row(o);
    for (int64_t k = 0; k < kernel; ++k) {
      const int64_t r = src_row[static_cast<size_t>(o * kernel + k)];
      if (r < 0) continue;
      auto src = av.row(r);
      std::copy(src.begin(), src.end(), dst.begin() + k * cols);
    }
  }
  return a.tape().record(
      std::move(out), {a},
      [ia = a.id(), src_row = std::move(src_row), out_rows, kernel, cols](Tape& t,
                                                                          const Tensor& g) {
        Tensor* ga = t.grad(ia);
        if (!ga) return;
        for (int64_t o = 0; o < out_rows; ++o) {
          auto src = g.row(o);
          for (int64_t k = 0; k < kernel; ++k) {
            const int64_t r = src_row[static_cast<size_t>(o * kernel + k)];
            if (r < 0) continue;
            auto dst = ga->row(r);
            for (int64_t c = 0; c < cols; ++c) dst[c] += src[k * cols + c];
          }
        }
      });
}

Var depthwise_conv(Var a, Var weight, Padding padding) {
  const Tensor& av = a.value();
  const Tensor& wv = weight.value();
  require_matrix("depthwise_conv", av);
  require_matrix("depthwise_conv", wv);
  if (wv.cols() != av.cols() || wv.rows() % 2 == 0) shape_error("depthwise_conv", av, wv);
  const int64_t rows = av.rows(), cols = av.cols(), kernel = wv.rows(), half = kernel / 2;
  auto source = [=](int64_t r) -> int64_t {
    if (r >= 0 && r < rows) return r;
    return padding == Padding::kEdge ? std::clamp<int64_t>(r, 0, rows - 1) : -1;
  };
  Tensor out({rows, cols});
  for (int64_t r = 0; r < rows; ++r) {
    auto dst = out.row(r);
    for (int64_t k = 0; k < kernel; ++k) {
      const int64_t s = source(r + k - half);
      if (s < 0) continue;
      auto src = av.row(s);
      auto w = wv.row(k);
      for (int64_t c = 0; c < cols; ++c) dst[c] += w[c] * src[c];
    }
  }
  return a.tape().record(std::move(out), {a, weight},
                         [ia = a.id(), iw = weight.id(), rows, cols, kernel, half,
                          source](Tape& t, const Tensor& g) {
                           const Tensor& av = t.value(ia);
                           const Tensor& wv = t.value(iw);
                           Tensor* ga = t.grad(ia);
                           Tensor* gw = t.grad(iw);
                           for (int64_t r = 0; r < rows; ++r) {
                             auto gr = g.row(r);
                             for (int64_t k = 0; k < kernel; ++k) {
                               const int64_t s = source(r + k - half);
                               if (s < 0) continue;
                               if (ga) {
                                 auto dst = ga->row(s);
                                 auto w = wv.row(k);
                                 for (int64_t c = 0; c < cols; ++c) dst[c] += w[c] * gr[c];
                               }
                               if (gw) {
                                 auto dst = gw->row(k);
                                 auto src = av.row(s);
                                 for (int64_t c = 0; c < cols; ++c) dst[c] += src[c] * gr[c];
                               }
                             }
                           }
                         });
}

Var sum(Var a) {
  Scalar total = 0;
  for (Scalar v : a.value().values()) total += v;
  return a.tape().record(Tensor::scalar(total), {a}, [ia = a.id()](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad(ia);
    if (!ga) return;
    for (Scalar& v : ga->values()) v += g[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<Scalar>(a.value().size())); }

Var sum_squares(Var a) {
  Scalar total = 0;
  for (Scalar v : a.value().values()) total += v * v;
  return a.tape().record(Tensor::scalar(total), {a}, [ia = a.id()](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad(ia);
    if (!ga) return;
    const Tensor& x = t.value(ia);
    for (int64_t i = 0; i < x.size(); ++i) (*ga)[i] += 2.0 * x[i] * g[0];
  });
}

Var mse(Var a, Var b) {
  require_same_shape("mse", a.value(), b.value());
  return scale(sum_squares(sub(a, b)), 1.0 / static_cast<Scalar>(a.value().size()));
}

Var weighted_sum(const std::vector<Var>& layers, Var weights) {
  const Tensor& wv = weights.value();
  if (layers.empty() || wv.size() != static_cast<int64_t>(layers.size())) {
    throw std::invalid_argument("weighted_sum: " + std::to_string(layers.size()) +
                                " layers vs weights of shape " + shape_string(wv.shape()));
  }
  const Tensor& first = layers[0].value();
  Tensor out(first.shape());
  for (size_t l = 0; l < layers.size(); ++l) {
    const Tensor& lv = layers[l].value();
    if (lv.shape() != first.shape()) shape_error("weighted_sum", first, lv);
    const Scalar w = wv[static_cast<int64_t>(l)];
    for (int64_t i = 0; i < lv.size(); ++i) out[i] += w * lv[i];
  }
  std::vector<Var> inputs = layers;
  inputs.push_back(weights);
  std::vector<int> ids;
  for (const Var& l : layers) ids.push_back(l.id());
  return weights.tape().record(
      std::move(out), inputs, [ids, iw = weights.id()](Tape& t, const Tensor& g) {
        const Tensor& wv = t.value(iw);
        Tensor* gw = t.grad(iw);
        for (size_t l = 0; l < ids.size(); ++l) {
          if (gw) {
            const Tensor& lv = t.value(ids[l]);
            Scalar dot = 0;
            for (int64_t i = 0; i < g.size(); ++i) dot += g[i] * lv[i];
            (*gw)[static_cast<int64_t>(l)] += dot;
          }
          if (Tensor* gl = t.grad(ids[l])) {
            const Scalar w = wv[static_cast<int64_t>(l)];
            for (int64_t i = 0; i < g.size(); ++i) (*gl)[i] += w * g[i];
          }
        }
      });
}

}  // namespace adaptvc::ops
