#pragma once

#include <cstddef>

namespace llb {

struct HyperParams {
  double lr = 0.1;
  double lambda = 0.0;              // EWC regularization strength
  std::size_t memory_per_task = 250;
  std::size_t ref_batch_size = 256;
  std::size_t batch_size = 10;
  std::size_t epochs = 1;           // > 1 only on CV streams or in study mode
  std::size_t beta = 10;            // LCA horizon in minibatches
  std::size_t fisher_samples = 1000;
  bool study_mode = false;          // allows epochs > 1 on the evaluation stream

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

}  // namespace llb
