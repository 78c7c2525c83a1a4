#pragma once

#include <cstdint>
#include <vector>

#include "microseg/tensor.hpp"

namespace microseg::kernels {

// Data-parallel inner loops of the model. Each function writes every output
// element from exactly one thread, so the OpenMP versions are bit-identical
// to the serial references regardless of thread count.

// Same-padding stride-1 convolution. weight is [C_out, C_in, k, k], k odd.
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight);
void conv2d_backward_params(const Tensor& grad_out, const Tensor& input,
                            Tensor& grad_weight, Tensor& grad_bias);

// masks: N*H*W bytes in {0,1}, row-major. Row n of the result is the mean
// feature vector over mask n; empty masks give a zero row.
Tensor masked_average_pool(const Tensor& features, const std::uint8_t* masks,
                           std::size_t n_masks);
Tensor masked_average_pool_backward(const Tensor& grad_proto, const std::uint8_t* masks,
                                    std::size_t n_masks, std::size_t channels,
                                    std::size_t height, std::size_t width);

// Scatter per-proposal logit rows [N, C_out] to per-pixel maps [C_out, H, W]
// through a disjoint mask partition.
Tensor reorganize(const Tensor& proposal_logits, const std::uint8_t* masks,
                  std::size_t height, std::size_t width);
Tensor reorganize_backward(const Tensor& grad_pixel, const std::uint8_t* masks,
                           std::size_t n_masks);

namespace serial {
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight);
void conv2d_backward_params(const Tensor& grad_out, const Tensor& input,
                            Tensor& grad_weight, Tensor& grad_bias);
Tensor masked_average_pool(const Tensor& features, const std::uint8_t* masks,
                           std::size_t n_masks);
Tensor reorganize(const Tensor& proposal_logits, const std::uint8_t* masks,
                  std::size_t height, std::size_t width);
}  // namespace serial

}  // namespace microseg::kernels
