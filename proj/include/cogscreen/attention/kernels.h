#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace cogscreen::attn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRef = Eigen::Ref<const RowMatrix>;
using MutRef = Eigen::Ref<RowMatrix>;

// Allowed (query, key) pairs in CSR form: row i may attend to
// cols[row_ptr[i] .. row_ptr[i+1]), sorted ascending.
struct AttentionPattern {
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> cols;

  std::size_t nnz() const { return cols.size(); }
  bool allows(int i, int j) const;
};

// Position 0 is the global token: it attends to every key and every query
// attends to it. Other queries see keys with |i - j| <= radius. Keys with
// key_mask[j] == false (padding) are dropped everywhere. An empty mask keeps
// all keys.
AttentionPattern local_global_pattern(int n, int radius, std::span<const char> key_mask = {});

// Dense equivalent of the pattern, for the reference kernel.
std::vector<char> dense_mask(const AttentionPattern& pattern);

// One head of scaled dot-product attention restricted to the pattern.
// q, k, v, out are n x d_head. probs receives the softmax weights aligned
// with pattern.cols. Rows with no allowed keys output zero.
void local_attention(ConstRef q, ConstRef k, ConstRef v, const AttentionPattern& pattern,
                     double scale, MutRef out, std::span<double> probs);
void local_attention_serial(ConstRef q, ConstRef k, ConstRef v, const AttentionPattern& pattern,
                            double scale, MutRef out, std::span<double> probs);

// Gradients of local_attention given its saved probabilities. Accumulates
// into dq, dk, dv.
void local_attention_backward(ConstRef q, ConstRef k, ConstRef v, const AttentionPattern& pattern,
                              double scale, std::span<const double> probs, ConstRef dout, MutRef dq,
                              MutRef dk, MutRef dv);

// Quadratic oracle: full score matrix, disallowed entries masked before the
// softmax. probs_dense is n x n with zeros outside the mask.
void masked_attention_reference(ConstRef q, ConstRef k, ConstRef v, std::span<const char> mask,
                                double scale, MutRef out, MutRef probs_dense);

// Unmasked quadratic attention, the cost baseline for benchmarks.
void full_attention(ConstRef q, ConstRef k, ConstRef v, double scale, MutRef out);

}  // namespace cogscreen::attn
