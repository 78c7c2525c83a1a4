#include "microseg/proposals.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace microseg {

bool ProposalSet::empty_mask(std::size_t i) const {
    const std::uint8_t* m = mask(i);
    const std::size_t q = height * width;
    for (std::size_t p = 0; p < q; ++p)
        if (m[p]) return false;
    return true;
}

ProposalSet generate_grid_proposals(int height, int width, int tiles_y, int tiles_x) {
    if (tiles_y < 1 || tiles_x < 1) throw std::invalid_argument("tile counts must be positive");
    if (tiles_y > height || tiles_x > width)
        throw std::invalid_argument("more tiles than pixels along an axis");
    ProposalSet set;
    set.height = static_cast<std::size_t>(height);
    set.width = static_cast<std::size_t>(width);
    set.n = static_cast<std::size_t>(tiles_y) * tiles_x;
    set.masks.assign(set.n * set.height * set.width, 0);
    const int step_y = height / tiles_y;
    const int step_x = width / tiles_x;
    for (int ty = 0; ty < tiles_y; ++ty)
        for (int tx = 0; tx < tiles_x; ++tx) {
            const std::size_t idx = static_cast<std::size_t>(ty) * tiles_x + tx;
            // Remainder rows/columns are absorbed by the last tile per axis.
            const int y0 = ty * step_y;
            const int y1 = (ty == tiles_y - 1) ? height : (ty + 1) * step_y;
            const int x0 = tx * step_x;
            const int x1 = (tx == tiles_x - 1) ? width : (tx + 1) * step_x;
            std::uint8_t* m = set.mask(idx);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) m[static_cast<std::size_t>(y) * width + x] = 1;
        }
    return set;
}

ProposalSet generate_oracle_proposals(const std::vector<std::uint8_t>& mask, int height,
                                      int width, int max_n) {
    const std::size_t q = static_cast<std::size_t>(height) * width;
    if (mask.size() != q) throw std::invalid_argument("mask size mismatch");
    std::vector<int> comp(q, -1);
    int n_comp = 0;
    std::vector<std::size_t> stack;
    // Scan order gives components sorted by top-most, left-most first pixel.
    for (std::size_t start = 0; start < q; ++start) {
        if (comp[start] >= 0) continue;
        const std::uint8_t cls = mask[start];
        comp[start] = n_comp;
        stack.assign(1, start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const int y = static_cast<int>(p) / width;
            const int x = static_cast<int>(p) % width;
            const int dy[4] = {-1, 1, 0, 0};
            const int dx[4] = {0, 0, -1, 1};
            for (int d = 0; d < 4; ++d) {
                const int ny = y + dy[d], nx = x + dx[d];
                if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
                const std::size_t np = static_cast<std::size_t>(ny) * width + nx;
                if (comp[np] < 0 && mask[np] == cls) {
                    comp[np] = n_comp;
                    stack.push_back(np);
                }
            }
        }
        ++n_comp;
    }
    if (n_comp > max_n)
        throw std::runtime_error("mask has " + std::to_string(n_comp) +
                                 " connected components, more than max_n=" +
                                 std::to_string(max_n));
    ProposalSet set;
    set.height = static_cast<std::size_t>(height);
    set.width = static_cast<std::size_t>(width);
    set.n = static_cast<std::size_t>(n_comp);
    set.masks.assign(set.n * q, 0);
    for (std::size_t p = 0; p < q; ++p) set.masks[static_cast<std::size_t>(comp[p]) * q + p] = 1;
    return set;
}

void pad_proposals(ProposalSet& set, std::size_t fixed_n) {
    if (fixed_n < set.n)
        throw std::invalid_argument("fixed_n=" + std::to_string(fixed_n) +
                                    " below proposal count " + std::to_string(set.n));
    set.masks.resize(fixed_n * set.height * set.width, 0);
    set.n = fixed_n;
}

PartitionVerdict validate_partition(const ProposalSet& set) {
    const std::size_t q = set.height * set.width;
    for (std::size_t p = 0; p < q; ++p) {
        std::size_t cover = 0;
        for (std::size_t n = 0; n < set.n; ++n) cover += set.masks[n * q + p];
        if (cover != 1) {
            PartitionVerdict v;
            v.ok = false;
            v.y = p / set.width;
            v.x = p % set.width;
            v.coverage = cover;
            return v;
        }
    }
    return {};
}

namespace {
constexpr char kPropMagic[4] = {'P', 'R', 'O', 'P'};
}

void write_proposal_cache(const ProposalSet& set, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    const std::uint32_t n = static_cast<std::uint32_t>(set.n);
    const std::uint32_t h = static_cast<std::uint32_t>(set.height);
    const std::uint32_t w = static_cast<std::uint32_t>(set.width);
    f.write(kPropMagic, 4);
    f.write(reinterpret_cast<const char*>(&n), 4);
    f.write(reinterpret_cast<const char*>(&h), 4);
    f.write(reinterpret_cast<const char*>(&w), 4);
    const std::size_t bits = set.masks.size();
    std::vector<std::uint8_t> packed((bits + 7) / 8, 0);
    for (std::size_t i = 0; i < bits; ++i)
        if (set.masks[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    f.write(reinterpret_cast<const char*>(packed.data()),
            static_cast<std::streamsize>(packed.size()));
}

ProposalSet read_proposal_cache(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kPropMagic, 4) != 0)
        throw std::runtime_error("bad magic in " + path);
    std::uint32_t n, h, w;
    f.read(reinterpret_cast<char*>(&n), 4);
    f.read(reinterpret_cast<char*>(&h), 4);
    f.read(reinterpret_cast<char*>(&w), 4);
    if (!f) throw std::runtime_error("truncated header in " + path);
    ProposalSet set;
    set.n = n;
    set.height = h;
    set.width = w;
    const std::size_t bits = static_cast<std::size_t>(n) * h * w;
    std::vector<std::uint8_t> packed((bits + 7) / 8);
    f.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
    if (!f) throw std::runtime_error("truncated payload in " + path);
    set.masks.resize(bits);
    for (std::size_t i = 0; i < bits; ++i)
        set.masks[i] = (packed[i / 8] >> (i % 8)) & 1u;
    return set;
}

}  // namespace microseg
