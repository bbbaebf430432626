#pragma once

#include <span>
#include <vector>

#include "llb/nn.hpp"

namespace llb::detail {

/// acts[0] is the input, acts[l + 1] the post-ReLU output of trunk layer l.
struct TrunkCache {
  std::vector<Matrix> acts;
  const Matrix& output() const { return acts.back(); }
};

TrunkCache trunk_forward(const Model& model, const Matrix& inputs);

/// Accumulates trunk gradients into `grad` given dL/d(trunk output).
void trunk_backward(const Model& model, const TrunkCache& cache, Matrix d_out, std::span<double> grad);

/// Softmax probabilities minus one-hot labels, divided by the row count;
/// i.e. dL/dlogits of the mean cross-entropy. Returns the mean loss.
double softmax_xent_backward(const Matrix& logits, std::span<const int> labels, Matrix& d_logits);

void check_finite(const Matrix& m, int layer, const char* what);

}  // namespace llb::detail
