#pragma once

#include <array>
#include <memory>
#include <span>

#include "mal2gcn/gcn.hpp"

namespace mal2gcn {

// Float training state: a float copy of the weights and reusable gradient
// buffers. Block order matches ModelParams::blocks() without b_out.
class SingleStep {
 public:
  struct Result {
    double loss = 0.0;
    std::size_t correct = 0;
  };

  explicit SingleStep(const ModelParams& m);
  ~SingleStep();

  // Recasts the float weights from `m`.
  void sync(const ModelParams& m);
  // Mean loss of the batch at the float weights; gradients stay in the buffers.
  Result run(const ModelParams& m, std::span<const GraphSample* const> batch);

  std::array<std::span<float>, 5> weight_blocks();
  std::array<std::span<const float>, 5> grad_blocks() const;
  double grad_b_out() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mal2gcn
