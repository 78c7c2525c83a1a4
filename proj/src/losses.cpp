#include "microseg/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace microseg {

namespace {

inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// Logit-space BCE: never takes log of a sigmoid directly.
inline double bce_from_logit(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
}

}  // namespace

UnseenSplit aggregate_unseen(const Tensor& pixel_logits, int k, std::size_t seen_channels) {
    if (pixel_logits.dim(0) != seen_channels + static_cast<std::size_t>(k))
        throw std::invalid_argument("channel count != seen + K");
    const std::size_t h = pixel_logits.dim(1), w = pixel_logits.dim(2);
    const std::size_t q = h * w;
    UnseenSplit out;
    out.seen_logits = Tensor({seen_channels, h, w});
    out.unseen_map = Tensor({h, w});
    std::copy(pixel_logits.data.begin(), pixel_logits.data.begin() + seen_channels * q,
              out.seen_logits.data.begin());
    for (int s = 0; s < k; ++s) {
        const double* src = pixel_logits.data.data() + (seen_channels + s) * q;
        for (std::size_t p = 0; p < q; ++p) out.unseen_map.data[p] += src[p];
    }
    return out;
}

double bce_loss(const Tensor& pixel_logits, const RemodeledLabel& remodeled,
                const std::vector<ClassId>& seen_registry, int k, Tensor* grad_logits) {
    const std::size_t seen = seen_registry.size();
    const std::size_t q = pixel_logits.dim(1) * pixel_logits.dim(2);
    if (pixel_logits.dim(0) != seen + static_cast<std::size_t>(k))
        throw std::invalid_argument("logit channels != seen + K");
    if (remodeled.labels.size() != q) throw std::invalid_argument("label map size mismatch");
    for (double v : pixel_logits.data)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite logit in bce_loss");

    if (grad_logits) *grad_logits = Tensor(pixel_logits.shape);
    const double inv_seen_q = 1.0 / (static_cast<double>(seen) * static_cast<double>(q));
    const double inv_q = 1.0 / static_cast<double>(q);

    double term_seen = 0.0;
    for (std::size_t l = 0; l < seen; ++l) {
        const std::uint8_t cls = static_cast<std::uint8_t>(seen_registry[l]);
        const double* z = pixel_logits.data.data() + l * q;
        for (std::size_t p = 0; p < q; ++p) {
            const double y = remodeled.labels[p] == cls ? 1.0 : 0.0;
            term_seen += bce_from_logit(z[p], y);
            if (grad_logits)
                grad_logits->data[l * q + p] = (sigmoid(z[p]) - y) * inv_seen_q;
        }
    }

    double term_unseen = 0.0;
    for (std::size_t p = 0; p < q; ++p) {
        double agg = 0.0;
        for (int s = 0; s < k; ++s) agg += pixel_logits.data[(seen + s) * q + p];
        const double y = remodeled.labels[p] == kFutureLabel ? 1.0 : 0.0;
        term_unseen += bce_from_logit(agg, y);
        if (grad_logits) {
            const double g = (sigmoid(agg) - y) * inv_q;
            for (int s = 0; s < k; ++s) grad_logits->data[(seen + s) * q + p] = g;
        }
    }
    return term_seen * inv_seen_q + term_unseen * inv_q;
}

double branch_loss(int t, double bce_proposal, std::optional<double> bce_dense) {
    if (t == 1) {
        if (!bce_dense) throw std::invalid_argument("dense BCE required at step 1");
        return bce_proposal + *bce_dense;
    }
    if (bce_dense) throw std::invalid_argument("dense BCE only participates at step 1");
    return bce_proposal;
}

double contrastive_loss(const Tensor& maps, Tensor* grad_maps) {
    if (maps.shape.size() != 3) throw std::invalid_argument("expected K x H x W maps");
    const std::size_t k = maps.dim(0);
    const std::size_t q = maps.dim(1) * maps.dim(2);
    if (k < 1) throw std::invalid_argument("need K >= 1 maps");
    if (grad_maps) *grad_maps = Tensor(maps.shape);
    if (k == 1) return 0.0;

    // Unit-normalize each flattened map; zero vectors stay at zero.
    std::vector<double> norm(k, 0.0);
    std::vector<std::vector<double>> u(k, std::vector<double>(q));
    for (std::size_t i = 0; i < k; ++i) {
        double n2 = 0.0;
        const double* v = maps.data.data() + i * q;
        for (std::size_t p = 0; p < q; ++p) n2 += v[p] * v[p];
        norm[i] = std::sqrt(n2);
        const double inv = norm[i] > 0.0 ? 1.0 / norm[i] : 0.0;
        for (std::size_t p = 0; p < q; ++p) u[i][p] = v[p] * inv;
    }

    // s_ij = u_i . u_j, softmax over j per row.
    std::vector<std::vector<double>> s(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            double dot = 0.0;
            for (std::size_t p = 0; p < q; ++p) dot += u[i][p] * u[j][p];
            s[i][j] = dot;
        }

    double loss = 0.0;
    std::vector<std::vector<double>> a(k, std::vector<double>(k));
    for (std::size_t i = 0; i < k; ++i) {
        double m = s[i][0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, s[i][j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(s[i][j] - m);
        for (std::size_t j = 0; j < k; ++j) a[i][j] = std::exp(s[i][j] - m) / denom;
        loss += (std::log(denom) + m) - s[i][i];
    }
    loss /= static_cast<double>(k);

    if (grad_maps) {
        const double inv_k = 1.0 / static_cast<double>(k);
        for (std::size_t t = 0; t < k; ++t) {
            // dL/du_t = sum_j (G_tj + G_jt) u_j with G_ij = (a_ij - delta_ij)/K.
            std::vector<double> g(q, 0.0);
            for (std::size_t j = 0; j < k; ++j) {
                const double w = inv_k * ((a[t][j] - (t == j ? 1.0 : 0.0)) +
                                          (a[j][t] - (t == j ? 1.0 : 0.0)));
                if (w == 0.0) continue;
                for (std::size_t p = 0; p < q; ++p) g[p] += w * u[j][p];
            }
            if (norm[t] > 0.0) {
                double gu = 0.0;
                for (std::size_t p = 0; p < q; ++p) gu += g[p] * u[t][p];
                const double inv_n = 1.0 / norm[t];
                for (std::size_t p = 0; p < q; ++p)
                    grad_maps->data[t * q + p] = (g[p] - gu * u[t][p]) * inv_n;
            }
        }
    }
    return loss;
}

LossBreakdown total_loss(int t, double bce_proposal, std::optional<double> bce_dense,
                         double contrastive, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
    LossBreakdown b;
    b.bce_proposal = bce_proposal;
    b.bce_dense = bce_dense;
    b.contrastive = contrastive;
    b.lambda = lambda;
    b.total = branch_loss(t, bce_proposal, bce_dense) + lambda * contrastive;
    if (!std::isfinite(b.total)) throw std::runtime_error("non-finite total loss");
    return b;
}

}  // namespace microseg
