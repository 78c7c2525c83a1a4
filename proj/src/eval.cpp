#include "microseg/eval.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace microseg {

ConfusionMatrix::ConfusionMatrix(std::vector<ClassId> cls) : classes(std::move(cls)) {
    counts.assign(axis() * axis(), 0);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (classes != other.classes) throw std::invalid_argument("confusion axes differ");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

void accumulate(ConfusionMatrix& conf, const std::vector<std::uint8_t>& pred,
                const std::vector<std::uint8_t>& gt) {
    if (pred.size() != gt.size()) throw std::invalid_argument("pred/gt size mismatch");
    std::map<ClassId, std::size_t> index;
    for (std::size_t i = 0; i < conf.classes.size(); ++i) index[conf.classes[i]] = i;
    const std::size_t bg = conf.classes.size();
    auto to_index = [&](std::uint8_t v) -> std::size_t {
        if (v == kBackground) return bg;
        const auto it = index.find(v);
        if (it == index.end())
            throw std::invalid_argument("label " + std::to_string(v) +
                                        " outside the evaluation axis");
        return it->second;
    };
    for (std::size_t p = 0; p < gt.size(); ++p) conf.at(to_index(gt[p]), to_index(pred[p]))++;
}

MiouReport miou(const ConfusionMatrix& conf, const std::set<ClassId>& base_classes,
                const std::set<ClassId>& novel_classes) {
    const std::set<ClassId> all_eval(conf.classes.begin(), conf.classes.end());
    std::set<ClassId> grouped;
    grouped.insert(base_classes.begin(), base_classes.end());
    for (ClassId c : novel_classes)
        if (!grouped.insert(c).second)
            throw std::invalid_argument("base and novel class sets overlap at " +
                                        std::to_string(c));
    if (grouped != all_eval)
        throw std::invalid_argument("base + novel must equal the evaluated classes");
    if (conf.classes.empty()) throw std::invalid_argument("no classes to evaluate");

    MiouReport rep;
    const std::size_t n = conf.axis();
    for (std::size_t i = 0; i < conf.classes.size(); ++i) {
        long long tp = conf.at(i, i), fp = 0, fn = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                fp += conf.at(j, i);
                fn += conf.at(i, j);
            }
        }
        if (tp + fp + fn == 0) {
            rep.undefined.insert(conf.classes[i]);
            continue;
        }
        rep.per_class_iou[conf.classes[i]] =
            static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    }
    auto group_mean = [&](const std::set<ClassId>& group) {
        double sum = 0.0;
        int cnt = 0;
        for (ClassId c : group) {
            const auto it = rep.per_class_iou.find(c);
            if (it != rep.per_class_iou.end()) {
                sum += it->second;
                ++cnt;
            }
        }
        return cnt ? sum / cnt : std::numeric_limits<double>::quiet_NaN();
    };
    rep.base_miou = group_mean(base_classes);
    rep.novel_miou = group_mean(novel_classes);
    rep.all_miou = group_mean(grouped);
    return rep;
}

std::string format_float(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

namespace {

struct RunSummary {
    std::string variant;
    std::uint64_t seed = 0;
    // step -> {base, novel, all}
    std::map<int, std::array<double, 3>> steps;
};

RunSummary read_run(const std::string& dir) {
    RunSummary rs;
    {
        std::ifstream f(dir + "/run_info.txt");
        if (!f) throw std::runtime_error("run " + dir + " is missing run_info.txt");
        std::string key, value;
        while (f >> key >> value) {
            if (key == "variant") rs.variant = value;
            if (key == "seed") rs.seed = std::stoull(value);
        }
    }
    std::ifstream f(dir + "/summary.csv");
    if (!f) throw std::runtime_error("run " + dir + " is missing summary.csv");
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string step_s, id_s, iou_s;
        std::getline(ss, step_s, ',');
        std::getline(ss, id_s, ',');
        std::getline(ss, iou_s, ',');
        const int step = std::stoi(step_s);
        const double iou = std::stod(iou_s);
        if (id_s == "base_mIoU") rs.steps[step][0] = iou;
        else if (id_s == "novel_mIoU") rs.steps[step][1] = iou;
        else if (id_s == "all_mIoU") rs.steps[step][2] = iou;
    }
    return rs;
}

}  // namespace

void emit_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    if (run_dirs.empty()) throw std::invalid_argument("need at least one run to report");
    std::filesystem::create_directories(out_dir);
    std::vector<RunSummary> runs;
    for (const std::string& dir : run_dirs) runs.push_back(read_run(dir));

    {
        std::ofstream f(out_dir + "/comparison.csv");
        f << "variant,step,base_miou,novel_miou,all_miou\n";
        for (const RunSummary& r : runs)
            for (const auto& [step, v] : r.steps)
                f << r.variant << "," << step << "," << format_float(v[0]) << ","
                  << format_float(v[1]) << "," << format_float(v[2]) << "\n";
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
        std::ofstream f(out_dir + "/" + runs[i].variant + "_seed" +
                        std::to_string(runs[i].seed) + "_curve.csv");
        f << "step,base_miou,novel_miou,all_miou\n";
        for (const auto& [step, v] : runs[i].steps)
            f << step << "," << format_float(v[0]) << "," << format_float(v[1]) << ","
              << format_float(v[2]) << "\n";
    }
    {
        std::ofstream f(out_dir + "/summary.txt");
        f << "variant            seed  step  base      novel     all\n";
        for (const RunSummary& r : runs)
            for (const auto& [step, v] : r.steps) {
                char line[160];
                std::snprintf(line, sizeof line, "%-18s %-5llu %-5d %-9s %-9s %-9s\n",
                              r.variant.c_str(),
                              static_cast<unsigned long long>(r.seed), step,
                              format_float(v[0]).c_str(), format_float(v[1]).c_str(),
                              format_float(v[2]).c_str());
                f << line;
            }
    }
}

}  // namespace microseg
