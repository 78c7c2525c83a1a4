#include "microseg/kernels.hpp"

#include <stdexcept>

namespace microseg::kernels {

namespace {

void check_conv_shapes(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.shape.size() != 3 || weight.shape.size() != 4 || bias.shape.size() != 1)
        throw std::invalid_argument("conv2d: bad tensor ranks");
    if (weight.dim(1) != input.dim(0))
        throw std::invalid_argument("conv2d: channel mismatch");
    if (weight.dim(2) != weight.dim(3) || weight.dim(2) % 2 == 0)
        throw std::invalid_argument("conv2d: kernel must be square and odd");
    if (bias.dim(0) != weight.dim(0))
        throw std::invalid_argument("conv2d: bias size mismatch");
}

inline double conv_at(const Tensor& input, const Tensor& weight, const Tensor& bias,
                      std::size_t co, long y, long x) {
    const long h = static_cast<long>(input.dim(1));
    const long w = static_cast<long>(input.dim(2));
    const long k = static_cast<long>(weight.dim(2));
    const long r = k / 2;
    double acc = bias[co];
    for (std::size_t ci = 0; ci < input.dim(0); ++ci)
        for (long ky = 0; ky < k; ++ky) {
            const long iy = y + ky - r;
            if (iy < 0 || iy >= h) continue;
            for (long kx = 0; kx < k; ++kx) {
                const long ix = x + kx - r;
                if (ix < 0 || ix >= w) continue;
                acc += weight.at(co, ci, ky, kx) * input.at(ci, iy, ix);
            }
        }
    return acc;
}

// Transposed convolution of grad_out with weight (full correlation flip).
inline double conv_input_grad_at(const Tensor& grad_out, const Tensor& weight,
                                 std::size_t ci, long y, long x) {
    const long h = static_cast<long>(grad_out.dim(1));
    const long w = static_cast<long>(grad_out.dim(2));
    const long k = static_cast<long>(weight.dim(2));
    const long r = k / 2;
    double acc = 0.0;
    for (std::size_t co = 0; co < weight.dim(0); ++co)
        for (long ky = 0; ky < k; ++ky) {
            const long oy = y - (ky - r);
            if (oy < 0 || oy >= h) continue;
            for (long kx = 0; kx < k; ++kx) {
                const long ox = x - (kx - r);
                if (ox < 0 || ox >= w) continue;
                acc += weight.at(co, ci, ky, kx) * grad_out.at(co, oy, ox);
            }
        }
    return acc;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    check_conv_shapes(input, weight, bias);
    const std::size_t co_n = weight.dim(0), h = input.dim(1), w = input.dim(2);
    Tensor out({co_n, h, w});
#pragma omp parallel for schedule(static)
    for (long long co = 0; co < static_cast<long long>(co_n); ++co)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out.at(co, y, x) = conv_at(input, weight, bias, co, static_cast<long>(y),
                                           static_cast<long>(x));
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight) {
    const std::size_t ci_n = weight.dim(1), h = grad_out.dim(1), w = grad_out.dim(2);
    Tensor grad_in({ci_n, h, w});
#pragma omp parallel for schedule(static)
    for (long long ci = 0; ci < static_cast<long long>(ci_n); ++ci)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                grad_in.at(ci, y, x) = conv_input_grad_at(grad_out, weight, ci,
                                                          static_cast<long>(y),
                                                          static_cast<long>(x));
    return grad_in;
}

void conv2d_backward_params(const Tensor& grad_out, const Tensor& input,
                            Tensor& grad_weight, Tensor& grad_bias) {
    const long h = static_cast<long>(input.dim(1));
    const long w = static_cast<long>(input.dim(2));
    const long k = static_cast<long>(grad_weight.dim(2));
    const long r = k / 2;
    const std::size_t co_n = grad_weight.dim(0), ci_n = grad_weight.dim(1);
#pragma omp parallel for schedule(static)
    for (long long co = 0; co < static_cast<long long>(co_n); ++co) {
        double bacc = 0.0;
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x) bacc += grad_out.at(co, y, x);
        grad_bias[co] += bacc;
        for (std::size_t ci = 0; ci < ci_n; ++ci)
            for (long ky = 0; ky < k; ++ky)
                for (long kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (long y = 0; y < h; ++y) {
                        const long iy = y + ky - r;
                        if (iy < 0 || iy >= h) continue;
                        for (long x = 0; x < w; ++x) {
                            const long ix = x + kx - r;
                            if (ix < 0 || ix >= w) continue;
                            acc += grad_out.at(co, y, x) * input.at(ci, iy, ix);
                        }
                    }
                    grad_weight.at(co, ci, ky, kx) += acc;
                }
    }
}

Tensor masked_average_pool(const Tensor& features, const std::uint8_t* masks,
                           std::size_t n_masks) {
    const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
    const std::size_t q = h * w;
    Tensor proto({n_masks, c});
#pragma omp parallel for schedule(static)
    for (long long n = 0; n < static_cast<long long>(n_masks); ++n) {
        const std::uint8_t* m = masks + static_cast<std::size_t>(n) * q;
        std::size_t cnt = 0;
        for (std::size_t p = 0; p < q; ++p) cnt += m[p];
        if (cnt == 0) continue;  // zero row for empty masks
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* f = features.data.data() + ch * q;
            double acc = 0.0;
            for (std::size_t p = 0; p < q; ++p)
                if (m[p]) acc += f[p];
            proto.at(n, ch) = acc / static_cast<double>(cnt);
        }
    }
    return proto;
}

Tensor masked_average_pool_backward(const Tensor& grad_proto, const std::uint8_t* masks,
                                    std::size_t n_masks, std::size_t channels,
                                    std::size_t height, std::size_t width) {
    const std::size_t q = height * width;
    Tensor grad_feat({channels, height, width});
    // Precompute per-mask counts once.
    std::vector<double> inv_count(n_masks, 0.0);
    for (std::size_t n = 0; n < n_masks; ++n) {
        std::size_t cnt = 0;
        const std::uint8_t* m = masks + n * q;
        for (std::size_t p = 0; p < q; ++p) cnt += m[p];
        if (cnt > 0) inv_count[n] = 1.0 / static_cast<double>(cnt);
    }
#pragma omp parallel for schedule(static)
    for (long long ch = 0; ch < static_cast<long long>(channels); ++ch) {
        double* g = grad_feat.data.data() + static_cast<std::size_t>(ch) * q;
        for (std::size_t n = 0; n < n_masks; ++n) {
            const double gp = grad_proto.at(n, ch) * inv_count[n];
            if (gp == 0.0) continue;
            const std::uint8_t* m = masks + n * q;
            for (std::size_t p = 0; p < q; ++p)
                if (m[p]) g[p] += gp;
        }
    }
    return grad_feat;
}

Tensor reorganize(const Tensor& proposal_logits, const std::uint8_t* masks,
                  std::size_t height, std::size_t width) {
    const std::size_t n_masks = proposal_logits.dim(0);
    const std::size_t c_out = proposal_logits.dim(1);
    const std::size_t q = height * width;
    Tensor pixel({c_out, height, width});
#pragma omp parallel for schedule(static)
    for (long long ch = 0; ch < static_cast<long long>(c_out); ++ch) {
        double* out = pixel.data.data() + static_cast<std::size_t>(ch) * q;
        for (std::size_t n = 0; n < n_masks; ++n) {
            const double v = proposal_logits.at(n, ch);
            const std::uint8_t* m = masks + n * q;
            for (std::size_t p = 0; p < q; ++p)
                if (m[p]) out[p] = v;
        }
    }
    return pixel;
}

Tensor reorganize_backward(const Tensor& grad_pixel, const std::uint8_t* masks,
                           std::size_t n_masks) {
    const std::size_t c_out = grad_pixel.dim(0);
    const std::size_t q = grad_pixel.dim(1) * grad_pixel.dim(2);
    Tensor grad_logits({n_masks, c_out});
#pragma omp parallel for schedule(static)
    for (long long n = 0; n < static_cast<long long>(n_masks); ++n) {
        const std::uint8_t* m = masks + static_cast<std::size_t>(n) * q;
        for (std::size_t ch = 0; ch < c_out; ++ch) {
            const double* g = grad_pixel.data.data() + ch * q;
            double acc = 0.0;
            for (std::size_t p = 0; p < q; ++p)
                if (m[p]) acc += g[p];
            grad_logits.at(n, ch) = acc;
        }
    }
    return grad_logits;
}

namespace serial {

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    check_conv_shapes(input, weight, bias);
    const std::size_t co_n = weight.dim(0), h = input.dim(1), w = input.dim(2);
    Tensor out({co_n, h, w});
    for (std::size_t co = 0; co < co_n; ++co)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out.at(co, y, x) = conv_at(input, weight, bias, co, static_cast<long>(y),
                                           static_cast<long>(x));
    return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weight) {
    const std::size_t ci_n = weight.dim(1), h = grad_out.dim(1), w = grad_out.dim(2);
    Tensor grad_in({ci_n, h, w});
    for (std::size_t ci = 0; ci < ci_n; ++ci)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                grad_in.at(ci, y, x) = conv_input_grad_at(grad_out, weight, ci,
                                                          static_cast<long>(y),
                                                          static_cast<long>(x));
    return grad_in;
}

void conv2d_backward_params(const Tensor& grad_out, const Tensor& input,
                            Tensor& grad_weight, Tensor& grad_bias) {
    const long h = static_cast<long>(input.dim(1));
    const long w = static_cast<long>(input.dim(2));
    const long k = static_cast<long>(grad_weight.dim(2));
    const long r = k / 2;
    for (std::size_t co = 0; co < grad_weight.dim(0); ++co) {
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x) grad_bias[co] += grad_out.at(co, y, x);
        for (std::size_t ci = 0; ci < grad_weight.dim(1); ++ci)
            for (long ky = 0; ky < k; ++ky)
                for (long kx = 0; kx < k; ++kx) {
                    double acc = 0.0;
                    for (long y = 0; y < h; ++y) {
                        const long iy = y + ky - r;
                        if (iy < 0 || iy >= h) continue;
                        for (long x = 0; x < w; ++x) {
                            const long ix = x + kx - r;
                            if (ix < 0 || ix >= w) continue;
                            acc += grad_out.at(co, y, x) * input.at(ci, iy, ix);
                        }
                    }
                    grad_weight.at(co, ci, ky, kx) += acc;
                }
    }
}

Tensor masked_average_pool(const Tensor& features, const std::uint8_t* masks,
                           std::size_t n_masks) {
    const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
    const std::size_t q = h * w;
    Tensor proto({n_masks, c});
    for (std::size_t n = 0; n < n_masks; ++n) {
        const std::uint8_t* m = masks + n * q;
        std::size_t cnt = 0;
        for (std::size_t p = 0; p < q; ++p) cnt += m[p];
        if (cnt == 0) continue;
        for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t p = 0; p < q; ++p)
                if (m[p]) acc += features.data[ch * q + p];
            proto.at(n, ch) = acc / static_cast<double>(cnt);
        }
    }
    return proto;
}

Tensor reorganize(const Tensor& proposal_logits, const std::uint8_t* masks,
                  std::size_t height, std::size_t width) {
    const std::size_t n_masks = proposal_logits.dim(0);
    const std::size_t c_out = proposal_logits.dim(1);
    const std::size_t q = height * width;
    Tensor pixel({c_out, height, width});
    for (std::size_t ch = 0; ch < c_out; ++ch)
        for (std::size_t n = 0; n < n_masks; ++n) {
            const std::uint8_t* m = masks + n * q;
            for (std::size_t p = 0; p < q; ++p)
                if (m[p]) pixel.data[ch * q + p] = proposal_logits.at(n, ch);
        }
    return pixel;
}

}  // namespace serial

}  // namespace microseg::kernels
