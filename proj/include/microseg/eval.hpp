#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "microseg/scenario.hpp"

namespace microseg {

// Rows are ground truth, columns prediction. The class axis is the list of
// evaluated foreground classes plus one trailing background/unseen slot.
struct ConfusionMatrix {
    std::vector<ClassId> classes;
    std::vector<long long> counts;  // (n+1) x (n+1)

    explicit ConfusionMatrix(std::vector<ClassId> cls);
    std::size_t axis() const { return classes.size() + 1; }
    long long& at(std::size_t gt, std::size_t pred) { return counts[gt * axis() + pred]; }
    long long at(std::size_t gt, std::size_t pred) const { return counts[gt * axis() + pred]; }
    void merge(const ConfusionMatrix& other);
};

void accumulate(ConfusionMatrix& conf, const std::vector<std::uint8_t>& pred,
                const std::vector<std::uint8_t>& gt);

struct MiouReport {
    std::map<ClassId, double> per_class_iou;  // defined classes only
    std::set<ClassId> undefined;              // TP+FP+FN == 0, excluded from means
    double base_miou = 0.0;                   // NaN when the group has no defined member
    double novel_miou = 0.0;
    double all_miou = 0.0;
};

// IoU(c) = TP / (TP + FP + FN); the background slot never enters a mean.
MiouReport miou(const ConfusionMatrix& conf, const std::set<ClassId>& base_classes,
                const std::set<ClassId>& novel_classes);

// Aggregates finished run directories (summary.csv + run_info.txt each) into
// a comparison CSV, per-run curve CSVs and a plain-text table.
void emit_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

// Shared float formatting for all CSV output: 6 significant digits.
std::string format_float(double v);

}  // namespace microseg
