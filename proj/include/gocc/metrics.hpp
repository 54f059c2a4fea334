#pragma once

#include <string>
#include <vector>

#include "gocc/common.hpp"

namespace gocc {

struct ConfusionTable {
  std::size_t num_classes = 0;
  std::vector<std::uint64_t> tp, fp, fn;      // per class, index 0 = empty
  std::uint64_t binary_tp = 0, binary_fp = 0, binary_fn = 0;  // occupied vs empty

  void merge(const ConfusionTable& other);
};

ConfusionTable confusion(const std::vector<std::uint16_t>& pred,
                         const std::vector<std::uint16_t>& gt, std::size_t num_classes);

// How the per-class mean treats semantic classes absent from both pred and
// gt: `present` drops them from the mean, `all` divides by C-1 regardless.
enum class MiouMode { present, all };

struct EvalResult {
  double iou = 0.0;   // occupied-vs-empty, class identity ignored
  double miou = 0.0;  // mean over non-empty classes
  std::vector<double> per_class_iou;  // NaN where undefined
  ConfusionTable counts;
};

EvalResult evaluate_counts(const ConfusionTable& counts, MiouMode mode = MiouMode::present);

EvalResult evaluate(const std::vector<std::uint16_t>& pred_labels,
                    const std::vector<std::uint16_t>& gt_labels, std::size_t num_classes,
                    MiouMode mode = MiouMode::present);

// {iou, miou, per_class: {name: iou}, counts: {...}}
std::string metrics_report_json(const EvalResult& result,
                                const std::vector<std::string>& class_names);

}  // namespace gocc
