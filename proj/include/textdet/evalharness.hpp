#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "textdet/geometry.hpp"
#include "textdet/inference.hpp"

namespace textdet {

struct GroundTruthEntry {
  Quadrilateral quad;
  std::string transcription;
  bool dont_care = false;  // transcription == "###"
};

struct GroundTruthFile {
  std::vector<GroundTruthEntry> entries;
};

/// ICDAR2015-style lines: `x1,y1,x2,y2,x3,y3,x4,y4,transcription` (clockwise
/// corners; the transcription may itself contain commas). A UTF-8 BOM and CRLF
/// endings are tolerated. Throws ParseError with the offending line number.
GroundTruthFile parse_ground_truth(std::string_view text);
std::string serialize_ground_truth(const GroundTruthFile& gt);

struct ImageEvalResult {
  int matches = 0;
  int counted_detections = 0;  // detections not absorbed by don't-care regions
  int care_ground_truths = 0;
  std::vector<std::pair<int, int>> matched_pairs;  // (detection idx, gt idx)
};

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  int total_matches = 0;
  int total_counted_detections = 0;
  int total_care_ground_truths = 0;
  std::map<std::string, ImageEvalResult> per_image;
};

/// One-to-one greedy matching by descending detection score at one IoU
/// threshold. A detection with no care match whose IoU against a "###" region
/// reaches the threshold is excluded from the precision denominator. Every
/// detection key must exist in the ground truth map (KeyMismatch otherwise).
EvalReport evaluate(const std::map<std::string, std::vector<DetectionCandidate>>& detections,
                    const std::map<std::string, GroundTruthFile>& ground_truth,
                    double iou_threshold = 0.5);

/// `key=value` lines for scripting plus the human-readable summary.
std::string report_text(const EvalReport& report);

}  // namespace textdet
