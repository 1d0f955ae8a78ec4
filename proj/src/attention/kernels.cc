#include "cogscreen/attention/kernels.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cogscreen/error.h"

namespace cogscreen::attn {

bool AttentionPattern::allows(int i, int j) const {
  const auto begin = cols.begin() + row_ptr[static_cast<std::size_t>(i)];
  const auto end = cols.begin() + row_ptr[static_cast<std::size_t>(i) + 1];
  return std::binary_search(begin, end, j);
}

AttentionPattern local_global_pattern(int n, int radius, std::span<const char> key_mask) {
  if (n < 0 || radius < 1) throw ConfigError("pattern needs n >= 0 and radius >= 1");
  if (!key_mask.empty() && key_mask.size() != static_cast<std::size_t>(n)) {
    throw ConfigError("key mask length does not match sequence length");
  }
  auto keep = [&](int j) { return key_mask.empty() || key_mask[static_cast<std::size_t>(j)] != 0; };
  AttentionPattern p;
  p.n = n;
  p.row_ptr.reserve(static_cast<std::size_t>(n) + 1);
  p.row_ptr.push_back(0);
  for (int i = 0; i < n; ++i) {
    if (i == 0) {
      for (int j = 0; j < n; ++j) {
        if (keep(j)) p.cols.push_back(j);
      }
    } else {
      if (keep(0) && i - radius > 0) p.cols.push_back(0);
      for (int j = std::max(0, i - radius); j <= std::min(n - 1, i + radius); ++j) {
        if (keep(j)) p.cols.push_back(j);
      }
    }
    p.row_ptr.push_back(static_cast<int>(p.cols.size()));
  }
  return p;
}

std::vector<char> dense_mask(const AttentionPattern& p) {
  const auto n = static_cast<std::size_t>(p.n);
  std::vector<char> mask(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int e = p.row_ptr[i]; e < p.row_ptr[i + 1]; ++e) {
      mask[i * n + static_cast<std::size_t>(p.cols[static_cast<std::size_t>(e)])] = 1;
    }
  }
  return mask;
}

namespace {

void check_shapes(ConstRef q, ConstRef k, ConstRef v, const AttentionPattern& p, MutRef out,
                  std::size_t probs) {
  if (q.rows() != p.n || k.rows() != p.n || v.rows() != p.n || out.rows() != p.n ||
      q.cols() != k.cols() || out.cols() != v.cols()) {
    throw ConfigError("attention operand shapes do not match the pattern");
  }
  if (probs != p.nnz()) throw ConfigError("attention probability buffer has the wrong size");
}

inline void attend_row(int i, ConstRef q, ConstRef k, ConstRef v, const AttentionPattern& p,
                       double scale, MutRef out, std::span<double> probs) {
  const int begin = p.row_ptr[static_cast<std::size_t>(i)];
  const int end = p.row_ptr[static_cast<std::size_t>(i) + 1];
  out.row(i).setZero();
  if (begin == end) return;
  double peak = -std::numeric_limits<double>::infinity();
  for (int e = begin; e < end; ++e) {
    const double s = scale * q.row(i).dot(k.row(p.cols[static_cast<std::size_t>(e)]));
    probs[static_cast<std::size_t>(e)] = s;
    peak = std::max(peak, s);
  }
  double total = 0;
  for (int e = begin; e < end; ++e) {
    auto& s = probs[static_cast<std::size_t>(e)];
    s = std::exp(s - peak);
    total += s;
  }
  for (int e = begin; e < end; ++e) {
    auto& s = probs[static_cast<std::size_t>(e)];
    s /= total;
    out.row(i) += s * v.row(p.cols[static_cast<std::size_t>(e)]);
  }
}

}  // namespace

void local_attention(ConstRef q, ConstRef k, ConstRef v, const AttentionPattern& p, double scale,
                     MutRef out, std::span<double> probs) {
  check_shapes(q, k, v, p, out, probs.size());
#pragma omp parallel for schedule(static) if (p.n >= 512)
  for (int i = 0; i < p.n; ++i) attend_row(i, q, k, v, p, scale, out, probs);
}

void local_attention_serial(ConstRef q, ConstRef k, ConstRef v, const AttentionPattern& p, double scale,
                            MutRef out, std::span<double> probs) {
  check_shapes(q, k, v, p, out, probs.size());
  for (int i = 0; i < p.n; ++i) attend_row(i, q, k, v, p, scale, out, probs);
}

void local_attention_backward(ConstRef q, ConstRef k, ConstRef v, const AttentionPattern& p,
                              double scale, std::span<const double> probs, ConstRef dout, MutRef dq,
                              MutRef dk, MutRef dv) {
  std::vector<double> ds;
  for (int i = 0; i < p.n; ++i) {
    const int begin = p.row_ptr[static_cast<std::size_t>(i)];
    const int end = p.row_ptr[static_cast<std::size_t>(i) + 1];
    ds.assign(static_cast<std::size_t>(end - begin), 0.0);
    double weighted = 0;
    for (int e = begin; e < end; ++e) {
      const int j = p.cols[static_cast<std::size_t>(e)];
      const double pe = probs[static_cast<std::size_t>(e)];
      const double dp = dout.row(i).dot(v.row(j));
      dv.row(j) += pe * dout.row(i);
      ds[static_cast<std::size_t>(e - begin)] = dp;
      weighted += pe * dp;
    }
    for (int e = begin; e < end; ++e) {
      const int j = p.cols[static_cast<std::size_t>(e)];
      const double g = scale * probs[static_cast<std::size_t>(e)] * (ds[static_cast<std::size_t>(e - begin)] - weighted);
      dq.row(i) += g * k.row(j);
      dk.row(j) += g * q.row(i);
    }
  }
}

void masked_attention_reference(ConstRef q, ConstRef k, ConstRef v, std::span<const char> mask,
                                double scale, MutRef out, MutRef probs_dense) {
  const auto n = q.rows();
  if (mask.size() != static_cast<std::size_t>(n * n)) throw ConfigError("mask size mismatch");
  const RowMatrix scores = scale * (q * k.transpose());
  probs_dense.setZero();
  for (Eigen::Index i = 0; i < n; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (mask[static_cast<std::size_t>(i * n + j)]) peak = std::max(peak, scores(i, j));
    }
    double total = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!mask[static_cast<std::size_t>(i * n + j)]) continue;
      probs_dense(i, j) = std::exp(scores(i, j) - peak);
      total += probs_dense(i, j);
    }
    if (total > 0) probs_dense.row(i) /= total;
  }
  out = probs_dense * v;
}

void full_attention(ConstRef q, ConstRef k, ConstRef v, double scale, MutRef out) {
  RowMatrix scores = scale * (q * k.transpose());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double peak = scores.row(i).maxCoeff();
    scores.row(i) = (scores.row(i).array() - peak).exp();
    scores.row(i) /= scores.row(i).sum();
  }
  out = scores * v;
}

}  // namespace cogscreen::attn
