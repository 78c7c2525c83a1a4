#include "microseg/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include "microseg/kernels.hpp"

namespace microseg {

namespace {

Tensor uniform_tensor(std::vector<std::size_t> shape, double scale, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (double& v : t.data) v = dist(rng);
    return t;
}

double head_init_scale(int feature_channels) {
    return 1.0 / std::sqrt(static_cast<double>(feature_channels));
}

}  // namespace

ModelState init_model(const FeatureExtractorConfig& cfg, const std::vector<ClassId>& classes,
                      int unseen_slots, std::mt19937_64& rng) {
    if (cfg.depth < 1) throw std::invalid_argument("extractor depth must be >= 1");
    if (cfg.feature_channels < 1) throw std::invalid_argument("feature_channels must be >= 1");
    if (cfg.kernel_size % 2 == 0) throw std::invalid_argument("kernel_size must be odd");
    if (unseen_slots < 1) throw std::invalid_argument("need at least one unseen slot");
    ModelState s;
    s.cfg = cfg;
    s.registry = classes;
    s.unseen_slots = unseen_slots;
    const std::size_t c = static_cast<std::size_t>(cfg.feature_channels);
    const std::size_t k = static_cast<std::size_t>(cfg.kernel_size);
    for (int l = 0; l < cfg.depth; ++l) {
        const std::size_t in = l == 0 ? static_cast<std::size_t>(cfg.in_channels) : c;
        const double scale = 1.0 / std::sqrt(static_cast<double>(in * k * k));
        s.conv_weights.push_back(uniform_tensor({c, in, k, k}, scale, rng));
        s.conv_biases.push_back(uniform_tensor({c}, scale, rng));
    }
    const std::size_t out = s.out_channels();
    const double hs = head_init_scale(cfg.feature_channels);
    s.dense_weight = uniform_tensor({out, c}, hs, rng);
    s.dense_bias = uniform_tensor({out}, hs, rng);
    s.prop_weight = uniform_tensor({out, c}, hs, rng);
    s.prop_bias = uniform_tensor({out}, hs, rng);
    return s;
}

Tensor extract_features(const ModelState& state, const std::vector<float>& image,
                        int channels, int height, int width, FeatureTrace* trace) {
    if (channels != state.cfg.in_channels)
        throw std::invalid_argument("image channel count does not match extractor");
    if (image.size() != static_cast<std::size_t>(channels) * height * width)
        throw std::invalid_argument("image buffer size does not match its declared dims");
    Tensor x({static_cast<std::size_t>(channels), static_cast<std::size_t>(height),
              static_cast<std::size_t>(width)});
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = static_cast<double>(image[i]);
    for (std::size_t l = 0; l < state.conv_weights.size(); ++l) {
        x = kernels::conv2d_forward(x, state.conv_weights[l], state.conv_biases[l]);
        for (double& v : x.data) v = std::tanh(v);
        if (trace) trace->activations.push_back(x);
    }
    return x;
}

PrototypeMatrix masked_average_pool(const Tensor& features, const ProposalSet& proposals) {
    if (features.dim(1) != proposals.height || features.dim(2) != proposals.width)
        throw std::invalid_argument("feature/proposal spatial dims disagree");
    PrototypeMatrix pm;
    pm.values = kernels::masked_average_pool(features, proposals.masks.data(), proposals.n);
    pm.empty.resize(proposals.n);
    for (std::size_t i = 0; i < proposals.n; ++i) pm.empty[i] = proposals.empty_mask(i) ? 1 : 0;
    return pm;
}

Tensor classify_prototypes(const ModelState& state, const PrototypeMatrix& prototypes) {
    const std::size_t n = prototypes.values.dim(0);
    const std::size_t c = prototypes.values.dim(1);
    if (c != static_cast<std::size_t>(state.cfg.feature_channels))
        throw std::invalid_argument("prototype width does not match feature channels");
    const std::size_t out = state.out_channels();
    Tensor logits({n, out});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < out; ++o) {
            double acc = state.prop_bias[o];
            for (std::size_t ch = 0; ch < c; ++ch)
                acc += state.prop_weight.at(o, ch) * prototypes.values.at(i, ch);
            logits.at(i, o) = acc;
        }
    return logits;
}

Tensor reorganize(const Tensor& proposal_logits, const ProposalSet& proposals) {
    const auto verdict = validate_partition(proposals);
    if (!verdict.ok)
        throw std::invalid_argument("proposal set is not a partition: pixel (" +
                                    std::to_string(verdict.y) + "," + std::to_string(verdict.x) +
                                    ") covered " + std::to_string(verdict.coverage) + " times");
    if (proposal_logits.dim(0) != proposals.n)
        throw std::invalid_argument("logit row count != proposal count");
    return kernels::reorganize(proposal_logits, proposals.masks.data(), proposals.height,
                               proposals.width);
}

Tensor dense_predict(const ModelState& state, const Tensor& features) {
    const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
    if (c != static_cast<std::size_t>(state.cfg.feature_channels))
        throw std::invalid_argument("feature channels do not match dense head");
    const std::size_t out = state.out_channels();
    Tensor logits({out, h, w});
    const std::size_t q = h * w;
#pragma omp parallel for schedule(static)
    for (long long o = 0; o < static_cast<long long>(out); ++o)
        for (std::size_t p = 0; p < q; ++p) {
            double acc = state.dense_bias[o];
            for (std::size_t ch = 0; ch < c; ++ch)
                acc += state.dense_weight.at(o, ch) * features.data[ch * q + p];
            logits.data[static_cast<std::size_t>(o) * q + p] = acc;
        }
    return logits;
}

Tensor proposal_predict(const ModelState& state, const std::vector<float>& image, int channels,
                        int height, int width, const ProposalSet& proposals) {
    const Tensor features = extract_features(state, image, channels, height, width);
    const PrototypeMatrix pm = masked_average_pool(features, proposals);
    const Tensor logits = classify_prototypes(state, pm);
    return reorganize(logits, proposals);
}

namespace {

// Inserts rows drawn from rng into a [rows, cols] matrix / vector pair at
// position `pos`.
void insert_head_rows(Tensor& weight, Tensor& bias, std::size_t pos, std::size_t count,
                      double scale, std::mt19937_64& rng) {
    const std::size_t cols = weight.dim(1);
    Tensor new_w({weight.dim(0) + count, cols});
    Tensor new_b({bias.dim(0) + count});
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (std::size_t r = 0; r < pos; ++r) {
        for (std::size_t c = 0; c < cols; ++c) new_w.at(r, c) = weight.at(r, c);
        new_b[r] = bias[r];
    }
    for (std::size_t r = 0; r < count; ++r) {
        for (std::size_t c = 0; c < cols; ++c) new_w.at(pos + r, c) = dist(rng);
        new_b[pos + r] = dist(rng);
    }
    for (std::size_t r = pos; r < weight.dim(0); ++r) {
        for (std::size_t c = 0; c < cols; ++c) new_w.at(r + count, c) = weight.at(r, c);
        new_b[r + count] = bias[r];
    }
    weight = std::move(new_w);
    bias = std::move(new_b);
}

}  // namespace

ModelState expand_head(const ModelState& state, const std::vector<ClassId>& new_classes,
                       double init_scale, std::mt19937_64& rng) {
    ModelState out = state;
    if (new_classes.empty()) return out;
    std::set<ClassId> existing(state.registry.begin(), state.registry.end());
    for (ClassId c : new_classes)
        if (!existing.insert(c).second)
            throw std::invalid_argument("class " + std::to_string(c) + " already registered");
    const std::size_t pos = state.registry.size();
    insert_head_rows(out.dense_weight, out.dense_bias, pos, new_classes.size(), init_scale, rng);
    insert_head_rows(out.prop_weight, out.prop_bias, pos, new_classes.size(), init_scale, rng);
    out.registry.insert(out.registry.end(), new_classes.begin(), new_classes.end());
    return out;
}

ModelState freeze_extractor(ModelState state) {
    state.frozen_extractor = true;
    return state;
}

std::vector<std::uint8_t> decode_logits(const ModelState& state, const Tensor& pixel_logits,
                                        bool include_unseen) {
    const std::size_t seen = state.registry.size();
    const std::size_t k = static_cast<std::size_t>(state.unseen_slots);
    if (pixel_logits.dim(0) != seen + k)
        throw std::invalid_argument("logit channels do not match registry");
    const std::size_t q = pixel_logits.dim(1) * pixel_logits.dim(2);
    std::vector<std::uint8_t> pred(q);
    for (std::size_t p = 0; p < q; ++p) {
        std::size_t best = 0;
        double best_v = pixel_logits.data[p];
        for (std::size_t c = 1; c < seen; ++c) {
            const double v = pixel_logits.data[c * q + p];
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        if (include_unseen) {
            double cu = 0.0;
            for (std::size_t s = 0; s < k; ++s) cu += pixel_logits.data[(seen + s) * q + p];
            if (cu > best_v) {
                pred[p] = kBackground;
                continue;
            }
        }
        pred[p] = static_cast<std::uint8_t>(state.registry[best]);
    }
    return pred;
}

std::vector<std::uint8_t> inference(const ModelState& state, const std::vector<float>& image,
                                    int channels, int height, int width,
                                    const ProposalSet& proposals, bool include_unseen) {
    return decode_logits(state, proposal_predict(state, image, channels, height, width, proposals),
                         include_unseen);
}

namespace {

constexpr char kCkptMagic[4] = {'M', 'S', 'E', 'G'};
constexpr std::uint32_t kCkptVersion = 1;

void write_u32(std::ofstream& f, std::uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::ifstream& f) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

void write_tensor(std::ofstream& f, const std::string& name, const Tensor& t) {
    write_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(f, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) write_u32(f, static_cast<std::uint32_t>(d));
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

Tensor read_tensor(std::ifstream& f, std::string& name) {
    const std::uint32_t len = read_u32(f);
    name.resize(len);
    f.read(name.data(), len);
    const std::uint32_t rank = read_u32(f);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = read_u32(f);
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    return t;
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint " + path);
    f.write(kCkptMagic, 4);
    write_u32(f, kCkptVersion);
    write_u32(f, static_cast<std::uint32_t>(state.step));
    write_u32(f, static_cast<std::uint32_t>(state.registry.size()));
    write_u32(f, static_cast<std::uint32_t>(state.unseen_slots));
    write_u32(f, static_cast<std::uint32_t>(state.cfg.feature_channels));
    for (ClassId c : state.registry) write_u32(f, static_cast<std::uint32_t>(c));
    write_u32(f, static_cast<std::uint32_t>(state.cfg.in_channels));
    write_u32(f, static_cast<std::uint32_t>(state.cfg.depth));
    write_u32(f, static_cast<std::uint32_t>(state.cfg.kernel_size));
    write_u32(f, state.frozen_extractor ? 1u : 0u);
    for (std::size_t l = 0; l < state.conv_weights.size(); ++l) {
        const std::string base = "extractor.conv" + std::to_string(l);
        write_tensor(f, base + ".weight", state.conv_weights[l]);
        write_tensor(f, base + ".bias", state.conv_biases[l]);
    }
    write_tensor(f, "dense_head.weight", state.dense_weight);
    write_tensor(f, "dense_head.bias", state.dense_bias);
    write_tensor(f, "proposal_head.weight", state.prop_weight);
    write_tensor(f, "proposal_head.bias", state.prop_bias);
}

ModelState load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw std::runtime_error("bad checkpoint magic in " + path);
    if (read_u32(f) != kCkptVersion) throw std::runtime_error("unknown checkpoint version");
    ModelState s;
    s.step = static_cast<int>(read_u32(f));
    const std::uint32_t reg_len = read_u32(f);
    s.unseen_slots = static_cast<int>(read_u32(f));
    s.cfg.feature_channels = static_cast<int>(read_u32(f));
    s.registry.resize(reg_len);
    for (auto& c : s.registry) c = static_cast<ClassId>(read_u32(f));
    s.cfg.in_channels = static_cast<int>(read_u32(f));
    s.cfg.depth = static_cast<int>(read_u32(f));
    s.cfg.kernel_size = static_cast<int>(read_u32(f));
    s.frozen_extractor = read_u32(f) != 0;
    for (int l = 0; l < s.cfg.depth; ++l) {
        std::string name;
        s.conv_weights.push_back(read_tensor(f, name));
        s.conv_biases.push_back(read_tensor(f, name));
    }
    std::string name;
    s.dense_weight = read_tensor(f, name);
    s.dense_bias = read_tensor(f, name);
    s.prop_weight = read_tensor(f, name);
    s.prop_bias = read_tensor(f, name);
    if (!f) throw std::runtime_error("truncated checkpoint " + path);
    return s;
}

std::uint64_t checkpoint_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (f.read(buf, sizeof buf) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<std::uint8_t>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!f) break;
    }
    return h;
}

}  // namespace microseg
