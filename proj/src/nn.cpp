#include "llb/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "llb/embedding.hpp"
#include "llb/errors.hpp"
#include "llb/kernels.hpp"
#include "llb/rng.hpp"
#include "nn_detail.hpp"

namespace llb {

namespace {

constexpr std::size_t kMaxParameters = std::size_t{1} << 32;

std::size_t checked_mul(std::size_t a, std::size_t b) {
  std::size_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) throw ConfigError("architecture dimension overflow");
  return r;
}

std::size_t checked_add(std::size_t a, std::size_t b) {
  std::size_t r = 0;
  if (__builtin_add_overflow(a, b, &r)) throw ConfigError("architecture dimension overflow");
  return r;
}

std::size_t dense_params(std::size_t in, std::size_t out) {
  return checked_add(checked_mul(in, out), out);
}

DenseSlot place_dense(std::size_t& cursor, std::size_t in, std::size_t out) {
  DenseSlot s;
  s.in = in;
  s.out = out;
  s.weight = {cursor, in * out};
  cursor += in * out;
  s.bias = {cursor, out};
  cursor += out;
  return s;
}

// Chunk size for evaluation forwards; bounds activation memory.
constexpr std::size_t kEvalChunk = 512;

}  // namespace

std::size_t Architecture::embedding_dim() const {
  return hidden_layers.empty() ? input_dim : hidden_layers.back();
}

void Architecture::validate() const {
  if (input_dim == 0) throw ConfigError("architecture: input_dim must be >= 1");
  for (std::size_t i = 0; i < hidden_layers.size(); ++i)
    if (hidden_layers[i] == 0)
      throw ConfigError("architecture: hidden layer " + std::to_string(i) + " has zero width");
  if (head_mode == HeadMode::per_task) {
    std::set<TaskId> seen;
    for (const auto& h : heads) {
      if (h.classes == 0)
        throw ConfigError("architecture: head for task " + std::to_string(h.task) + " has zero classes");
      if (!seen.insert(h.task).second)
        throw ConfigError("architecture: duplicate head for task " + std::to_string(h.task));
      for (TaskId a : h.aliases)
        if (!seen.insert(a).second) throw ConfigError("architecture: duplicate head for task " + std::to_string(a));
    }
  } else if (attribute_count == 0) {
    throw ConfigError("architecture: joint-embedding mode needs attribute_count >= 1");
  }
  if (parameter_count() > kMaxParameters) throw ConfigError("architecture dimension overflow");
}

std::size_t Architecture::parameter_count() const {
  std::size_t total = 0;
  std::size_t in = input_dim;
  for (std::size_t w : hidden_layers) {
    total = checked_add(total, dense_params(in, w));
    in = w;
  }
  if (head_mode == HeadMode::per_task) {
    for (const auto& h : heads) total = checked_add(total, dense_params(in, h.classes));
  } else {
    total = checked_add(total, checked_mul(attribute_count, in));
  }
  return total;
}

Model::Model(Architecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  std::size_t cursor = 0;
  std::size_t in = arch_.input_dim;
  for (std::size_t w : arch_.hidden_layers) {
    trunk_.push_back(place_dense(cursor, in, w));
    in = w;
  }
  head_region_.offset = cursor;
  if (arch_.head_mode == HeadMode::per_task) {
    std::vector<HeadSpec> sorted = arch_.heads;
    std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.task < b.task; });
    for (const auto& h : sorted) {
      const DenseSlot slot = place_dense(cursor, in, h.classes);
      heads_.emplace(h.task, slot);
      for (TaskId a : h.aliases) heads_.emplace(a, slot);
    }
  } else {
    table_ = {cursor, arch_.attribute_count * in};
    cursor += table_.size;
  }
  head_region_.size = cursor - head_region_.offset;
  theta_.assign(cursor, 0.0);
}

const DenseSlot& Model::head(TaskId task) const {
  auto it = heads_.find(task);
  if (it == heads_.end()) throw MissingHeadError("no output head registered for task " + std::to_string(task));
  return it->second;
}

void Model::set_descriptor(TaskId task, Matrix descriptor) {
  if (arch_.head_mode != HeadMode::joint_embedding)
    throw ConfigError("descriptors are only used in joint-embedding mode");
  if (descriptor.cols != arch_.attribute_count)
    throw ConfigError("descriptor for task " + std::to_string(task) + " has " +
                      std::to_string(descriptor.cols) + " attribute columns, expected " +
                      std::to_string(arch_.attribute_count));
  descriptors_[task] = std::move(descriptor);
}

const Matrix& Model::descriptor(TaskId task) const {
  auto it = descriptors_.find(task);
  if (it == descriptors_.end())
    throw MissingHeadError("no descriptor registered for task " + std::to_string(task));
  return it->second;
}

Model init_model(const Architecture& arch, std::uint64_t seed) {
  Model model(arch);
  Rng rng(seed);
  auto fill = [&](Slice s, std::size_t fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& w : model.view(s)) w = dist(rng);
  };
  for (const auto& layer : model.trunk()) fill(layer.weight, layer.in);
  for (const auto& h : arch.heads) {
    const DenseSlot& head = model.head(h.task);
    fill(head.weight, head.in);
  }
  if (arch.head_mode == HeadMode::joint_embedding) fill(model.attribute_table(), arch.attribute_count);
  return model;
}

namespace detail {

void check_finite(const Matrix& m, int layer, const char* what) {
  for (double v : m.data)
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite ") + what + " at layer " + std::to_string(layer), layer);
}

TrunkCache trunk_forward(const Model& model, const Matrix& inputs) {
  if (inputs.cols != model.arch().input_dim)
    throw ConfigError("input dimension " + std::to_string(inputs.cols) + " does not match architecture (" +
                      std::to_string(model.arch().input_dim) + ")");
  TrunkCache cache;
  cache.acts.reserve(model.trunk().size() + 1);
  cache.acts.push_back(inputs);
  const std::size_t n = inputs.rows;
  int layer_index = 0;
  for (const auto& layer : model.trunk()) {
    const Matrix& x = cache.acts.back();
    Matrix z(n, layer.out);
    kernels::matmul_nt(x.data, model.view(layer.weight), z.data, n, layer.in, layer.out);
    auto bias = model.view(layer.bias);
    for (std::size_t i = 0; i < n; ++i) {
      double* zi = z.data.data() + i * layer.out;
      for (std::size_t j = 0; j < layer.out; ++j) zi[j] = std::max(0.0, zi[j] + bias[j]);
    }
    check_finite(z, layer_index, "activation");
    cache.acts.push_back(std::move(z));
    ++layer_index;
  }
  return cache;
}

void trunk_backward(const Model& model, const TrunkCache& cache, Matrix d_out, std::span<double> grad) {
  const auto& trunk = model.trunk();
  const std::size_t n = d_out.rows;
  for (std::size_t li = trunk.size(); li-- > 0;) {
    const auto& layer = trunk[li];
    const Matrix& post = cache.acts[li + 1];
    const Matrix& x = cache.acts[li];
    // ReLU derivative; the activation is zero exactly where the unit is off.
    for (std::size_t e = 0; e < d_out.data.size(); ++e)
      if (post.data[e] <= 0.0) d_out.data[e] = 0.0;

    std::vector<double> dw(layer.out * layer.in);
    kernels::matmul_tn(d_out.data, x.data, dw, layer.out, n, layer.in);
    kernels::axpy(1.0, dw, grad.subspan(layer.weight.offset, layer.weight.size));
    auto db = grad.subspan(layer.bias.offset, layer.bias.size);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < layer.out; ++j) db[j] += d_out(i, j);

    if (li == 0) break;
    Matrix d_in(n, layer.in);
    kernels::matmul_nn(d_out.data, model.view(layer.weight), d_in.data, n, layer.out, layer.in);
    check_finite(d_in, static_cast<int>(li), "gradient");
    d_out = std::move(d_in);
  }
}

double softmax_xent_backward(const Matrix& logits, std::span<const int> labels, Matrix& d_logits) {
  const std::size_t n = logits.rows;
  const std::size_t c = logits.cols;
  d_logits = Matrix(n, c);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto z = logits.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(z[j] - zmax);
    const double lse = zmax + std::log(sum);
    const int y = labels[i];
    total += lse - z[static_cast<std::size_t>(y)];
    auto d = d_logits.row(i);
    for (std::size_t j = 0; j < c; ++j) d[j] = std::exp(z[j] - lse) * inv_n;
    d[static_cast<std::size_t>(y)] -= inv_n;
  }
  const double loss = total * inv_n;
  if (!std::isfinite(loss)) throw NumericError("non-finite loss", -1);
  return loss;
}

}  // namespace detail

namespace {

void check_labels(const Batch& batch, std::size_t classes) {
  if (batch.inputs.rows != batch.labels.size())
    throw std::invalid_argument("batch: input rows do not match label count");
  for (int y : batch.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw std::invalid_argument("batch: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(classes) + ") for task " + std::to_string(batch.task));
}

Matrix head_logits(const Model& model, const DenseSlot& head, const Matrix& phi) {
  const std::size_t n = phi.rows;
  Matrix logits(n, head.out);
  kernels::matmul_nt(phi.data, model.view(head.weight), logits.data, n, head.in, head.out);
  auto bias = model.view(head.bias);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < head.out; ++j) logits(i, j) += bias[j];
  return logits;
}

LossGrad per_task_loss_and_grad(const Model& model, const Batch& batch) {
  const DenseSlot& head = model.head(batch.task);
  check_labels(batch, head.out);
  const auto cache = detail::trunk_forward(model, batch.inputs);
  const Matrix& phi = cache.output();
  const Matrix logits = head_logits(model, head, phi);
  detail::check_finite(logits, static_cast<int>(model.trunk().size()), "logit");

  LossGrad out;
  out.grad = GradientVector(model.parameter_count());
  Matrix d_logits;
  out.loss = detail::softmax_xent_backward(logits, batch.labels, d_logits);

  const std::size_t n = phi.rows;
  auto g = out.grad.span();
  kernels::matmul_tn(d_logits.data, phi.data, g.subspan(head.weight.offset, head.weight.size), head.out, n,
                     head.in);
  auto db = g.subspan(head.bias.offset, head.bias.size);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < head.out; ++j) db[j] += d_logits(i, j);

  if (!model.trunk().empty()) {
    Matrix d_phi(n, head.in);
    kernels::matmul_nn(d_logits.data, model.view(head.weight), d_phi.data, n, head.out, head.in);
    detail::trunk_backward(model, cache, std::move(d_phi), g);
  }
  return out;
}

}  // namespace

Matrix forward(const Model& model, const Batch& batch) {
  if (model.arch().head_mode == HeadMode::joint_embedding)
    return je_forward(model, batch, model.descriptor(batch.task));
  const DenseSlot& head = model.head(batch.task);
  const auto cache = detail::trunk_forward(model, batch.inputs);
  return head_logits(model, head, cache.output());
}

LossGrad loss_and_grad(const Model& model, const Batch& batch) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  if (model.arch().head_mode == HeadMode::joint_embedding)
    return je_loss_and_grad(model, batch, model.descriptor(batch.task));
  return per_task_loss_and_grad(model, batch);
}

LossGrad loss_and_grad(const Model& model, std::span<const Batch> groups) {
  std::size_t total = 0;
  for (const auto& b : groups) total += b.size();
  if (total == 0) throw std::invalid_argument("loss_and_grad: empty batch");
  LossGrad out;
  out.grad = GradientVector(model.parameter_count());
  for (const auto& b : groups) {
    if (b.empty()) continue;
    const double w = static_cast<double>(b.size()) / static_cast<double>(total);
    LossGrad part = loss_and_grad(model, b);
    out.loss += w * part.loss;
    kernels::axpy(w, part.grad.span(), out.grad.span());
  }
  return out;
}

void apply_update(Model& model, const GradientVector& grad, double lr) {
  if (grad.size() != model.parameter_count())
    throw std::invalid_argument("apply_update: gradient length does not match theta");
  for (double v : grad.values)
    if (!std::isfinite(v)) throw NumericError("non-finite gradient entry in update", -1);
  kernels::axpy(-lr, grad.span(), model.theta());
}

double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
  Matrix unused;
  return detail::softmax_xent_backward(logits, labels, unused);
}

double accuracy(const Model& model, const SampleSet& samples, TaskId task) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    const std::size_t end = std::min(samples.size(), start + kEvalChunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const Batch b = samples.gather(idx, task);
    const Matrix logits = forward(model, b);
    for (std::size_t i = 0; i < b.size(); ++i) {
      auto row = logits.row(i);
      const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      if (best == b.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double accuracy(const Model& model, const Batch& batch) {
  if (batch.empty()) return 0.0;
  std::size_t correct = 0;
  const Matrix logits = forward(model, batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto row = logits.row(i);
    if (std::max_element(row.begin(), row.end()) - row.begin() == batch.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.size());
}

}  // namespace llb
