#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "dvseg/io_formats.hpp"

namespace dvseg {

// Intersection over union of the pixels labeled `object_id`; 1.0 when both
// masks are empty for that id.
double jaccard(const IndexMask& pred, const IndexMask& gt, int object_id);

struct ObjectSeries {
  int object_id = 0;
  std::vector<double> per_frame;  // frames 1..N-1
  double mean = 0.0;
};

struct EvalReport {
  int frames = 0;  // sequence length including the annotated first frame
  std::vector<ObjectSeries> objects;
  double mean_j = 0.0;  // mean over objects of the per-object frame means
};

// Frame 0 is the given annotation and is excluded from the averages.
EvalReport evaluate_masks(const std::vector<IndexMask>& pred, const std::vector<IndexMask>& gt);

// Reads NNNNN.pgm files from both directories (prediction files directly in
// pred_dir, ground truth in gt_dir) and scores frames 1..N-1.
EvalReport evaluate_dirs(const std::string& pred_dir, const std::string& gt_dir);

// Plain text table, fixed six-decimal formatting.
void write_report(std::ostream& out, const EvalReport& report);

}  // namespace dvseg
