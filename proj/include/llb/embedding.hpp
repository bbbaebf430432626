#pragma once

#include <span>

#include "llb/nn.hpp"
#include "llb/streams.hpp"

// Attribute-conditioned classification head. A class is embedded as the sum
// of the attribute-table rows of the attributes it has; an input is scored
// against each class of the task by the inner product of its trunk output
// with the class embedding (no bias, no temperature).

namespace llb {

/// descriptor [C x A] * table [A x D] -> [C x D].
Matrix embed_task(const Matrix& descriptor, std::span<const double> table, std::size_t attributes,
                  std::size_t dim);

/// Convenience overload reading the table out of a joint-embedding model.
Matrix embed_task(const Model& model, const Matrix& descriptor);

/// phi(x) * embed_task(descriptor)^T, shape [batch x C].
Matrix je_forward(const Model& model, const Batch& batch, const Matrix& descriptor);

/// Mean cross-entropy and its gradient w.r.t. trunk and attribute table.
LossGrad je_loss_and_grad(const Model& model, const Batch& batch, const Matrix& descriptor);

/// Row-wise softmax of je_forward.
Matrix je_probabilities(const Model& model, const Batch& batch, const Matrix& descriptor);

/// Test accuracy on a task using its descriptor and the current parameters.
/// Throws ConfigError for integer-descriptor models or tasks.
double zero_shot_eval(const Model& model, const TaskDataset& task);

}  // namespace llb
