#include "dvseg/eval.hpp"

#include <cstdio>
#include <filesystem>
#include <set>

namespace dvseg {

double jaccard(const IndexMask& pred, const IndexMask& gt, int object_id) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw DimensionError("jaccard: mask size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < gt.ids.size(); ++i) {
    const bool p = pred.ids[i] == object_id;
    const bool g = gt.ids[i] == object_id;
    inter += (p && g);
    uni += (p || g);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

EvalReport evaluate_masks(const std::vector<IndexMask>& pred, const std::vector<IndexMask>& gt) {
  if (pred.empty() || pred.size() != gt.size())
    throw ArgumentError("evaluate_masks: prediction/ground-truth frame counts differ");

  std::set<int> id_set;
  for (std::uint8_t v : gt[0].ids)
    if (v != 0) id_set.insert(v);
  if (id_set.empty()) throw ArgumentError("evaluate_masks: no annotated objects in frame 0");

  EvalReport report;
  report.frames = static_cast<int>(pred.size());
  double total = 0.0;
  for (int id : id_set) {
    ObjectSeries series;
    series.object_id = id;
    double sum = 0.0;
    for (std::size_t t = 1; t < pred.size(); ++t) {
      const double j = jaccard(pred[t], gt[t], id);
      series.per_frame.push_back(j);
      sum += j;
    }
    series.mean = series.per_frame.empty() ? 1.0 : sum / series.per_frame.size();
    total += series.mean;
    report.objects.push_back(std::move(series));
  }
  report.mean_j = total / report.objects.size();
  return report;
}

EvalReport evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir) {
  auto pred_name = [&pred_dir](int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "/%05d.pgm", i);
    return pred_dir + buf;
  };
  auto gt_name = [&gt_dir](int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "/%05d.pgm", i);
    return gt_dir + buf;
  };

  std::vector<IndexMask> pred, gt;
  int n = 0;
  while (std::filesystem::exists(pred_name(n))) ++n;
  if (n == 0) throw FormatError(pred_dir + ": no prediction masks (00000.pgm) found");
  for (int i = 0; i < n; ++i) {
    if (!std::filesystem::exists(gt_name(i)))
      throw FormatError(gt_dir + ": missing ground-truth mask for frame " + std::to_string(i));
    pred.push_back(read_pgm(pred_name(i)));
    gt.push_back(read_pgm(gt_name(i)));
  }
  return evaluate_masks(pred, gt);
}

void write_report(std::ostream& out, const EvalReport& report) {
  char buf[128];
  out << "frames " << report.frames << "\n";
  out << "objects " << report.objects.size() << "\n";
  for (const ObjectSeries& s : report.objects) {
    std::snprintf(buf, sizeof(buf), "object %d mean_j %.6f\n", s.object_id, s.mean);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean_j %.6f\n", report.mean_j);
  out << buf;
  out << "frame";
  for (const ObjectSeries& s : report.objects) out << " obj" << s.object_id;
  out << "\n";
  for (std::size_t t = 0; t < report.objects[0].per_frame.size(); ++t) {
    out << (t + 1);
    for (const ObjectSeries& s : report.objects) {
      std::snprintf(buf, sizeof(buf), " %.6f", s.per_frame[t]);
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace dvseg
