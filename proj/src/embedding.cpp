#include "llb/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "llb/errors.hpp"
#include "llb/kernels.hpp"
#include "nn_detail.hpp"

namespace llb {

namespace {

void require_je(const Model& model) {
  if (model.arch().head_mode != HeadMode::joint_embedding)
    throw ConfigError("model has integer task heads; joint-embedding operation unavailable");
}

void check_descriptor(const Model& model, const Matrix& descriptor) {
  if (descriptor.cols != model.arch().attribute_count)
    throw ConfigError("descriptor has " + std::to_string(descriptor.cols) + " attribute columns, model expects " +
                      std::to_string(model.arch().attribute_count));
  if (descriptor.rows == 0) throw ConfigError("descriptor has no classes");
}

}  // namespace

Matrix embed_task(const Matrix& descriptor, std::span<const double> table, std::size_t attributes,
                  std::size_t dim) {
  if (descriptor.cols != attributes || table.size() != attributes * dim)
    throw ConfigError("embed_task: descriptor/table shape mismatch");
  Matrix out(descriptor.rows, dim);
  kernels::matmul_nn(descriptor.data, table, out.data, descriptor.rows, attributes, dim);
  return out;
}

Matrix embed_task(const Model& model, const Matrix& descriptor) {
  require_je(model);
  check_descriptor(model, descriptor);
  return embed_task(descriptor, model.view(model.attribute_table()), model.arch().attribute_count,
                    model.arch().embedding_dim());
}

Matrix je_forward(const Model& model, const Batch& batch, const Matrix& descriptor) {
  const Matrix emb = embed_task(model, descriptor);
  const auto cache = detail::trunk_forward(model, batch.inputs);
  const Matrix& phi = cache.output();
  if (phi.cols != emb.cols) throw ConfigError("trunk output width does not match embedding dimension");
  Matrix logits(phi.rows, emb.rows);
  kernels::matmul_nt(phi.data, emb.data, logits.data, phi.rows, phi.cols, emb.rows);
  return logits;
}

LossGrad je_loss_and_grad(const Model& model, const Batch& batch, const Matrix& descriptor) {
  if (batch.empty()) throw std::invalid_argument("je_loss_and_grad: empty batch");
  const Matrix emb = embed_task(model, descriptor);
  const std::size_t C = emb.rows;
  const std::size_t D = emb.cols;
  const std::size_t A = model.arch().attribute_count;
  for (int y : batch.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      throw std::invalid_argument("je_loss_and_grad: label " + std::to_string(y) + " outside descriptor classes");

  const auto cache = detail::trunk_forward(model, batch.inputs);
  const Matrix& phi = cache.output();
  const std::size_t n = phi.rows;
  Matrix logits(n, C);
  kernels::matmul_nt(phi.data, emb.data, logits.data, n, D, C);
  detail::check_finite(logits, static_cast<int>(model.trunk().size()), "logit");

  LossGrad out;
  out.grad = GradientVector(model.parameter_count());
  Matrix d_logits;
  out.loss = detail::softmax_xent_backward(logits, batch.labels, d_logits);

  // d_emb [C x D] = d_logits^T phi ; d_table [A x D] = descriptor^T d_emb
  std::vector<double> d_emb(C * D);
  kernels::matmul_tn(d_logits.data, phi.data, d_emb, C, n, D);
  const Slice table = model.attribute_table();
  kernels::matmul_tn(descriptor.data, d_emb, out.grad.span().subspan(table.offset, table.size), A, C, D);

  if (!model.trunk().empty()) {
    Matrix d_phi(n, D);
    kernels::matmul_nn(d_logits.data, emb.data, d_phi.data, n, C, D);
    detail::trunk_backward(model, cache, std::move(d_phi), out.grad.span());
  }
  return out;
}

Matrix je_probabilities(const Model& model, const Batch& batch, const Matrix& descriptor) {
  Matrix p = je_forward(model, batch, descriptor);
  for (std::size_t i = 0; i < p.rows; ++i) {
    auto row = p.row(i);
    const double m = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double& v : row) s += (v = std::exp(v - m));
    for (double& v : row) v /= s;
  }
  return p;
}

double zero_shot_eval(const Model& model, const TaskDataset& task) {
  require_je(model);
  if (!task.has_attributes()) throw ConfigError("task " + std::to_string(task.task) + " has no attribute descriptor");
  if (task.test.empty()) return 0.0;
  const Matrix& desc = task.attributes();
  std::size_t correct = 0;
  constexpr std::size_t kChunk = 512;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < task.test.size(); start += kChunk) {
    const std::size_t end = std::min(task.test.size(), start + kChunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const Batch b = task.test.gather(idx, task.task);
    const Matrix logits = je_forward(model, b, desc);
    for (std::size_t i = 0; i < b.size(); ++i) {
      auto row = logits.row(i);
      if (std::max_element(row.begin(), row.end()) - row.begin() == b.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(task.test.size());
}

}  // namespace llb
