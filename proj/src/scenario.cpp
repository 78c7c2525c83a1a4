#include "microseg/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace microseg {

std::vector<ClassId> ScenarioSpec::step_classes(int t) const {
    if (t < 1 || t > num_steps()) throw std::invalid_argument("step index out of range");
    int begin = 0;
    for (int i = 0; i + 1 < t; ++i) begin += step_sizes[i];
    return {class_order.begin() + begin, class_order.begin() + begin + step_sizes[t - 1]};
}

std::vector<ClassId> ScenarioSpec::seen_classes(int t) const {
    if (t < 1 || t > num_steps()) throw std::invalid_argument("step index out of range");
    int end = 0;
    for (int i = 0; i < t; ++i) end += step_sizes[i];
    return {class_order.begin(), class_order.begin() + end};
}

namespace {

std::vector<ClassId> default_order(int num_classes) {
    std::vector<ClassId> order(num_classes);
    for (int i = 0; i < num_classes; ++i) order[i] = i + 1;
    return order;
}

void validate_order(const std::vector<ClassId>& order, int num_classes) {
    if (static_cast<int>(order.size()) != num_classes)
        throw std::invalid_argument("class_order length != num_classes");
    std::set<ClassId> seen(order.begin(), order.end());
    if (static_cast<int>(seen.size()) != num_classes || *seen.begin() != 1 ||
        *seen.rbegin() != num_classes)
        throw std::invalid_argument("class_order must be a permutation of 1..num_classes");
}

}  // namespace

ScenarioSpec build_scenario(int num_classes, const std::string& notation, ProtocolMode mode,
                            const std::vector<ClassId>& class_order) {
    const auto dash = notation.find('-');
    if (dash == std::string::npos)
        throw std::invalid_argument("scenario notation must look like \"B-I\": " + notation);
    int base = 0, inc = 0;
    try {
        base = std::stoi(notation.substr(0, dash));
        inc = std::stoi(notation.substr(dash + 1));
    } catch (const std::exception&) {
        throw std::invalid_argument("scenario notation must look like \"B-I\": " + notation);
    }
    if (base < 1 || inc < 1) throw std::invalid_argument("notation needs B >= 1 and I >= 1");
    if (base >= num_classes)
        throw std::invalid_argument("base step B=" + std::to_string(base) +
                                    " must be < num_classes=" + std::to_string(num_classes));
    if ((num_classes - base) % inc != 0)
        throw std::invalid_argument(
            "increment I=" + std::to_string(inc) + " does not divide num_classes-B=" +
            std::to_string(num_classes - base) + " (B=" + std::to_string(base) +
            ", num_classes=" + std::to_string(num_classes) + ")");
    std::vector<int> sizes{base};
    for (int c = base; c < num_classes; c += inc) sizes.push_back(inc);
    return build_scenario_explicit(num_classes, sizes, mode, class_order);
}

ScenarioSpec build_scenario_explicit(int num_classes, const std::vector<int>& step_sizes,
                                     ProtocolMode mode, const std::vector<ClassId>& class_order) {
    if (step_sizes.empty()) throw std::invalid_argument("need at least one step");
    int total = 0;
    for (int s : step_sizes) {
        if (s < 1) throw std::invalid_argument("step sizes must be positive");
        total += s;
    }
    if (total != num_classes)
        throw std::invalid_argument("step sizes sum to " + std::to_string(total) +
                                    ", expected " + std::to_string(num_classes));
    ScenarioSpec spec;
    spec.class_order = class_order.empty() ? default_order(num_classes) : class_order;
    validate_order(spec.class_order, num_classes);
    spec.step_sizes = step_sizes;
    spec.mode = mode;
    return spec;
}

std::vector<ClassId> shuffled_class_order(int num_classes, std::uint64_t seed) {
    auto order = default_order(num_classes);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

namespace {

struct Rgb {
    float r, g, b;
};

// Distinct saturated color per class, hue-spaced around the wheel.
Rgb class_color(int cls, int num_classes) {
    const float h = 6.0f * static_cast<float>(cls - 1) / static_cast<float>(num_classes);
    const int sector = static_cast<int>(h) % 6;
    const float f = h - std::floor(h);
    switch (sector) {
        case 0: return {1.0f, f, 0.0f};
        case 1: return {1.0f - f, 1.0f, 0.0f};
        case 2: return {0.0f, 1.0f, f};
        case 3: return {0.0f, 1.0f - f, 1.0f};
        case 4: return {f, 0.0f, 1.0f};
        default: return {1.0f, 0.0f, 1.0f - f};
    }
}

void paint_shape(SegSample& s, int cls, int num_classes, std::mt19937_64& rng) {
    const int h = s.height, w = s.width;
    std::uniform_int_distribution<int> size_dist(5, std::max(6, h / 2));
    std::uniform_int_distribution<int> cy_dist(0, h - 1), cx_dist(0, w - 1);
    std::uniform_real_distribution<float> jitter(-0.08f, 0.08f);
    const int half = size_dist(rng) / 2;
    const int cy = cy_dist(rng), cx = cx_dist(rng);
    const int family = (cls - 1) % 4;
    const Rgb col = class_color(cls, num_classes);
    for (int y = std::max(0, cy - half); y <= std::min(h - 1, cy + half); ++y)
        for (int x = std::max(0, cx - half); x <= std::min(w - 1, cx + half); ++x) {
            const int dy = y - cy, dx = x - cx;
            bool inside = false;
            switch (family) {
                case 0: inside = true; break;                                   // square
                case 1: inside = dy * dy + dx * dx <= half * half; break;       // disk
                case 2: inside = std::abs(dx) <= (half - std::abs(dy)); break;  // diamond
                default:                                                        // cross
                    inside = std::abs(dx) <= half / 2 || std::abs(dy) <= half / 2;
            }
            if (!inside) continue;
            const std::size_t p = static_cast<std::size_t>(y) * w + x;
            s.mask[p] = static_cast<std::uint8_t>(cls);
            const float n0 = jitter(rng), n1 = jitter(rng), n2 = jitter(rng);
            s.image[p] = col.r + n0;
            s.image[static_cast<std::size_t>(h) * w + p] = col.g + n1;
            s.image[2ull * h * w + p] = col.b + n2;
        }
}

SegSample make_sample(int index, int forced_class, const SyntheticConfig& cfg,
                      std::mt19937_64& rng, const char* split) {
    SegSample s;
    s.channels = 3;
    s.height = cfg.height;
    s.width = cfg.width;
    s.sample_id = std::string(split) + "_" + std::to_string(index);
    const std::size_t q = static_cast<std::size_t>(cfg.height) * cfg.width;
    s.image.resize(3 * q);
    s.mask.assign(q, kBackground);
    std::uniform_real_distribution<float> bg(0.35f, 0.55f);
    for (float& v : s.image) v = bg(rng);

    std::uniform_int_distribution<int> extra_dist(0, 3);
    std::uniform_int_distribution<int> cls_dist(1, cfg.num_classes);
    const int extras = extra_dist(rng);
    for (int e = 0; e < extras; ++e) paint_shape(s, cls_dist(rng), cfg.num_classes, rng);
    // Forced class painted last so the coverage guarantee survives overlap.
    paint_shape(s, forced_class, cfg.num_classes, rng);
    return s;
}

}  // namespace

void generate_synthetic_dataset(const SyntheticConfig& cfg, std::vector<SegSample>& train,
                                std::vector<SegSample>& val) {
    if (cfg.height < 16 || cfg.width < 16)
        throw std::invalid_argument("height and width must be >= 16");
    if (cfg.num_classes < 2) throw std::invalid_argument("need at least 2 classes");
    if (cfg.num_train < 5 * cfg.num_classes)
        throw std::invalid_argument("num_train=" + std::to_string(cfg.num_train) +
                                    " cannot cover every class 5 times (need >= " +
                                    std::to_string(5 * cfg.num_classes) + ")");
    if (cfg.num_val < 2 * cfg.num_classes)
        throw std::invalid_argument("num_val=" + std::to_string(cfg.num_val) +
                                    " cannot cover every class 2 times (need >= " +
                                    std::to_string(2 * cfg.num_classes) + ")");
    train.clear();
    val.clear();
    std::mt19937_64 rng_train(cfg.seed);
    std::mt19937_64 rng_val(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    for (int i = 0; i < cfg.num_train; ++i)
        train.push_back(make_sample(i, i % cfg.num_classes + 1, cfg, rng_train, "train"));
    for (int i = 0; i < cfg.num_val; ++i)
        val.push_back(make_sample(i, i % cfg.num_classes + 1, cfg, rng_val, "val"));
}

StepDataset filter_step_dataset(const std::vector<SegSample>& dataset, const ScenarioSpec& spec,
                                int t) {
    if (t < 1 || t > spec.num_steps()) throw std::invalid_argument("step index out of range");
    const auto current = spec.step_classes(t);
    const auto seen = spec.seen_classes(t);
    const std::set<ClassId> cur(current.begin(), current.end());
    const std::set<ClassId> seen_set(seen.begin(), seen.end());

    StepDataset out;
    out.current_classes = current;
    out.seen_classes = seen;
    for (const SegSample& s : dataset) {
        bool has_current = false;
        bool all_seen = true;
        for (std::uint8_t v : s.mask) {
            if (v == kBackground) continue;
            if (cur.count(v)) has_current = true;
            if (!seen_set.count(v)) all_seen = false;
        }
        if (!has_current) continue;
        if (spec.mode == ProtocolMode::disjoint && !all_seen) continue;
        SegSample copy = s;
        for (std::uint8_t& v : copy.mask)
            if (!cur.count(v)) v = kBackground;
        out.samples.push_back(std::move(copy));
    }
    if (out.samples.empty())
        throw std::runtime_error("step " + std::to_string(t) +
                                 " has no samples under this scenario/dataset pairing");
    return out;
}

namespace {

constexpr char kMagic[4] = {'C', 'I', 'S', 'S'};

void write_header(std::ofstream& f, std::uint32_t channels, std::uint32_t h, std::uint32_t w) {
    f.write(kMagic, 4);
    f.write(reinterpret_cast<const char*>(&channels), 4);
    f.write(reinterpret_cast<const char*>(&h), 4);
    f.write(reinterpret_cast<const char*>(&w), 4);
}

void read_header(std::ifstream& f, std::uint32_t& channels, std::uint32_t& h, std::uint32_t& w,
                 const std::string& path) {
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("bad magic in " + path);
    f.read(reinterpret_cast<char*>(&channels), 4);
    f.read(reinterpret_cast<char*>(&h), 4);
    f.read(reinterpret_cast<char*>(&w), 4);
    if (!f) throw std::runtime_error("truncated header in " + path);
}

std::string sample_path(const std::string& dir, int index, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d.%s", index, ext);
    return dir + "/" + buf;
}

}  // namespace

void write_sample(const SegSample& s, const std::string& dir, int index) {
    {
        std::ofstream f(sample_path(dir, index, "img"), std::ios::binary);
        if (!f) throw std::runtime_error("cannot write sample image in " + dir);
        write_header(f, static_cast<std::uint32_t>(s.channels),
                     static_cast<std::uint32_t>(s.height), static_cast<std::uint32_t>(s.width));
        f.write(reinterpret_cast<const char*>(s.image.data()),
                static_cast<std::streamsize>(s.image.size() * sizeof(float)));
    }
    {
        std::ofstream f(sample_path(dir, index, "msk"), std::ios::binary);
        if (!f) throw std::runtime_error("cannot write sample mask in " + dir);
        write_header(f, 1, static_cast<std::uint32_t>(s.height),
                     static_cast<std::uint32_t>(s.width));
        f.write(reinterpret_cast<const char*>(s.mask.data()),
                static_cast<std::streamsize>(s.mask.size()));
    }
}

SegSample read_sample(const std::string& dir, int index) {
    SegSample s;
    {
        const std::string path = sample_path(dir, index, "img");
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("missing " + path);
        std::uint32_t c, h, w;
        read_header(f, c, h, w, path);
        s.channels = static_cast<int>(c);
        s.height = static_cast<int>(h);
        s.width = static_cast<int>(w);
        s.image.resize(static_cast<std::size_t>(c) * h * w);
        f.read(reinterpret_cast<char*>(s.image.data()),
               static_cast<std::streamsize>(s.image.size() * sizeof(float)));
        if (!f) throw std::runtime_error("truncated payload in " + path);
    }
    {
        const std::string path = sample_path(dir, index, "msk");
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("missing " + path);
        std::uint32_t c, h, w;
        read_header(f, c, h, w, path);
        if (c != 1 || static_cast<int>(h) != s.height || static_cast<int>(w) != s.width)
            throw std::runtime_error("mask header disagrees with image in " + path);
        s.mask.resize(static_cast<std::size_t>(h) * w);
        f.read(reinterpret_cast<char*>(s.mask.data()),
               static_cast<std::streamsize>(s.mask.size()));
        if (!f) throw std::runtime_error("truncated payload in " + path);
    }
    s.sample_id = std::to_string(index);
    return s;
}

void write_dataset(const std::vector<SegSample>& samples, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < samples.size(); ++i)
        write_sample(samples[i], dir, static_cast<int>(i));
}

std::vector<SegSample> read_dataset(const std::string& dir, const std::string& id_prefix) {
    std::vector<SegSample> out;
    for (int i = 0;; ++i) {
        if (!std::filesystem::exists(sample_path(dir, i, "img"))) break;
        out.push_back(read_sample(dir, i));
        out.back().sample_id = id_prefix + out.back().sample_id;
    }
    if (out.empty()) throw std::runtime_error("no samples found in " + dir);
    return out;
}

ProtocolMode parse_mode(const std::string& s) {
    if (s == "overlapped") return ProtocolMode::overlapped;
    if (s == "disjoint") return ProtocolMode::disjoint;
    throw std::invalid_argument("unknown protocol mode: " + s);
}

std::string mode_name(ProtocolMode m) {
    return m == ProtocolMode::overlapped ? "overlapped" : "disjoint";
}

ScenarioSpec read_scenario_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open scenario file " + path);
    int num_classes = -1;
    std::string notation;
    std::vector<int> step_sizes;
    ProtocolMode mode = ProtocolMode::overlapped;
    bool have_seed = false;
    std::uint64_t order_seed = 0;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("scenario file line is not key=value: " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "num_classes") {
            num_classes = std::stoi(value);
        } else if (key == "notation") {
            notation = value;
        } else if (key == "step_sizes") {
            std::stringstream ss(value);
            std::string tok;
            while (std::getline(ss, tok, ',')) step_sizes.push_back(std::stoi(tok));
        } else if (key == "mode") {
            mode = parse_mode(value);
        } else if (key == "order_seed") {
            order_seed = std::stoull(value);
            have_seed = true;
        } else {
            throw std::runtime_error("unknown scenario key: " + key);
        }
    }
    if (num_classes < 1) throw std::runtime_error("scenario file missing num_classes");
    std::vector<ClassId> order;
    if (have_seed) order = shuffled_class_order(num_classes, order_seed);
    if (!step_sizes.empty()) return build_scenario_explicit(num_classes, step_sizes, mode, order);
    if (notation.empty()) throw std::runtime_error("scenario file needs notation or step_sizes");
    return build_scenario(num_classes, notation, mode, order);
}

}  // namespace microseg
