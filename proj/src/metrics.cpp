#include "gocc/metrics.hpp"

#include <cmath>
#include <json.hpp>

namespace gocc {

void ConfusionTable::merge(const ConfusionTable& other) {
  require(num_classes == other.num_classes, "confusion table class count mismatch");
  for (std::size_t c = 0; c < num_classes; ++c) {
    tp[c] += other.tp[c];
    fp[c] += other.fp[c];
    fn[c] += other.fn[c];
  }
  binary_tp += other.binary_tp;
  binary_fp += other.binary_fp;
  binary_fn += other.binary_fn;
}

ConfusionTable confusion(const std::vector<std::uint16_t>& pred,
                         const std::vector<std::uint16_t>& gt, std::size_t num_classes) {
  require(pred.size() == gt.size(), "confusion: prediction/label size mismatch");

  const std::size_t n = pred.size();
  const std::size_t chunk = 1 << 16;
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  std::vector<ConfusionTable> partial(std::max<std::size_t>(1, n_chunks));
  for (auto& t : partial) {
    t.num_classes = num_classes;
    t.tp.assign(num_classes, 0);
    t.fp.assign(num_classes, 0);
    t.fn.assign(num_classes, 0);
  }

  parallel_for(n_chunks, [&](std::size_t ci) {
    ConfusionTable& t = partial[ci];
    const std::size_t lo = ci * chunk, hi = std::min(n, lo + chunk);
    for (std::size_t i = lo; i < hi; ++i) {
      const std::uint16_t p = pred[i], g = gt[i];
      require(p < num_classes && g < num_classes, "confusion: label out of range");
      if (p == g) {
        t.tp[p]++;
      } else {
        t.fp[p]++;
        t.fn[g]++;
      }
      const bool po = p != 0, go = g != 0;
      if (po && go) t.binary_tp++;
      if (po && !go) t.binary_fp++;
      if (!po && go) t.binary_fn++;
    }
  }, 1);

  ConfusionTable out = std::move(partial[0]);
  for (std::size_t ci = 1; ci < n_chunks; ++ci) out.merge(partial[ci]);
  return out;
}

EvalResult evaluate_counts(const ConfusionTable& counts, MiouMode mode) {
  EvalResult res;
  res.counts = counts;
  const std::uint64_t bdenom = counts.binary_tp + counts.binary_fp + counts.binary_fn;
  res.iou = bdenom == 0 ? 1.0 : double(counts.binary_tp) / double(bdenom);

  res.per_class_iou.assign(counts.num_classes, std::nan(""));
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 1; c < counts.num_classes; ++c) {
    const std::uint64_t denom = counts.tp[c] + counts.fp[c] + counts.fn[c];
    if (denom == 0) continue;  // class absent from both pred and gt
    res.per_class_iou[c] = double(counts.tp[c]) / double(denom);
    sum += res.per_class_iou[c];
    ++defined;
  }
  if (mode == MiouMode::present) {
    res.miou = defined == 0 ? 0.0 : sum / double(defined);
  } else {
    res.miou = counts.num_classes <= 1 ? 0.0 : sum / double(counts.num_classes - 1);
  }
  return res;
}

EvalResult evaluate(const std::vector<std::uint16_t>& pred_labels,
                    const std::vector<std::uint16_t>& gt_labels, std::size_t num_classes,
                    MiouMode mode) {
  return evaluate_counts(confusion(pred_labels, gt_labels, num_classes), mode);
}

std::string metrics_report_json(const EvalResult& result,
                                const std::vector<std::string>& class_names) {
  nlohmann::json j;
  j["iou"] = result.iou;
  j["miou"] = result.miou;
  nlohmann::json per;
  for (std::size_t c = 1; c < result.per_class_iou.size(); ++c) {
    const std::string name =
        c < class_names.size() ? class_names[c] : "class_" + std::to_string(c);
    if (std::isnan(result.per_class_iou[c])) {
      per[name] = nullptr;
    } else {
      per[name] = result.per_class_iou[c];
    }
  }
  j["per_class"] = per;
  nlohmann::json counts;
  counts["binary"] = {{"tp", result.counts.binary_tp},
                      {"fp", result.counts.binary_fp},
                      {"fn", result.counts.binary_fn}};
  counts["tp"] = result.counts.tp;
  counts["fp"] = result.counts.fp;
  counts["fn"] = result.counts.fn;
  j["counts"] = counts;
  return j.dump(2);
}

}  // namespace gocc
