#include "textdet/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "textdet/errors.hpp"

namespace textdet {

GroundTruthFile parse_ground_truth(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  GroundTruthFile out;
  int lineno = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view line =
        nl == std::string_view::npos ? text.substr(pos) : text.substr(pos, nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    double coords[8];
    size_t field_start = 0;
    for (int f = 0; f < 8; ++f) {
      size_t comma = line.find(',', field_start);
      if (comma == std::string_view::npos) {
        throw ParseError(lineno, "expected 8 coordinates and a transcription");
      }
      std::string token(line.substr(field_start, comma - field_start));
      char* end = nullptr;
      coords[f] = std::strtod(token.c_str(), &end);
      while (end && *end == ' ') ++end;
      if (token.empty() || !end || *end != '\0') {
        throw ParseError(lineno, "non-numeric coordinate '" + token + "'");
      }
      if (!std::isfinite(coords[f])) throw ParseError(lineno, "non-finite coordinate");
      field_start = comma + 1;
    }
    GroundTruthEntry e;
    e.transcription = std::string(line.substr(field_start));
    e.dont_care = e.transcription == "###";
    for (int i = 0; i < 4; ++i) {
      e.quad.v[static_cast<size_t>(i)] = {coords[2 * i], coords[2 * i + 1]};
    }
    out.entries.push_back(std::move(e));
  }
  return out;
}

std::string serialize_ground_truth(const GroundTruthFile& gt) {
  std::ostringstream os;
  for (const GroundTruthEntry& e : gt.entries) {
    for (int i = 0; i < 4; ++i) {
      const Point2& p = e.quad.v[static_cast<size_t>(i)];
      auto emit = [&os](double v) {
        if (v == std::floor(v) && std::abs(v) < 1e15) {
          os << static_cast<long long>(v);
        } else {
          char buf[64];
          std::snprintf(buf, sizeof(buf), "%g", v);
          os << buf;
        }
        os << ',';
      };
      emit(p.x);
      emit(p.y);
    }
    os << e.transcription << '\n';
  }
  return os.str();
}

EvalReport evaluate(const std::map<std::string, std::vector<DetectionCandidate>>& detections,
                    const std::map<std::string, GroundTruthFile>& ground_truth,
                    double iou_threshold) {
  for (const auto& [key, dets] : detections) {
    if (!ground_truth.count(key)) throw KeyMismatch("detections reference unknown image " + key);
  }
  EvalReport report;
  for (const auto& [key, gt] : ground_truth) {
    ImageEvalResult res;
    std::vector<int> care_idx, dc_idx;
    for (int i = 0; i < static_cast<int>(gt.entries.size()); ++i) {
      (gt.entries[static_cast<size_t>(i)].dont_care ? dc_idx : care_idx).push_back(i);
    }
    res.care_ground_truths = static_cast<int>(care_idx.size());

    auto it = detections.find(key);
    if (it != detections.end()) {
      const std::vector<DetectionCandidate>& dets = it->second;
      std::vector<int> order(dets.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return dets[static_cast<size_t>(a)].score > dets[static_cast<size_t>(b)].score;
      });
      std::vector<bool> gt_used(gt.entries.size(), false);
      for (int di : order) {
        const DetectionCandidate& d = dets[static_cast<size_t>(di)];
        int best_gt = -1;
        double best_iou = 0.0;
        for (int gi : care_idx) {
          if (gt_used[static_cast<size_t>(gi)]) continue;
          double v = iou(d.quad, gt.entries[static_cast<size_t>(gi)].quad);
          if (v >= iou_threshold && v > best_iou) {
            best_iou = v;
            best_gt = gi;
          }
        }
        if (best_gt >= 0) {
          gt_used[static_cast<size_t>(best_gt)] = true;
          ++res.matches;
          ++res.counted_detections;
          res.matched_pairs.emplace_back(di, best_gt);
          continue;
        }
        bool in_dont_care = false;
        for (int gi : dc_idx) {
          if (iou(d.quad, gt.entries[static_cast<size_t>(gi)].quad) >= iou_threshold) {
            in_dont_care = true;
            break;
          }
        }
        if (!in_dont_care) ++res.counted_detections;  // unmatched, counts against precision
      }
    }
    report.total_matches += res.matches;
    report.total_counted_detections += res.counted_detections;
    report.total_care_ground_truths += res.care_ground_truths;
    report.per_image.emplace(key, std::move(res));
  }
  report.precision = report.total_counted_detections > 0
                         ? static_cast<double>(report.total_matches) / report.total_counted_detections
                         : 0.0;
  report.recall = report.total_care_ground_truths > 0
                      ? static_cast<double>(report.total_matches) / report.total_care_ground_truths
                      : 0.0;
  double pr = report.precision + report.recall;
  report.f_measure = pr > 0.0 ? 2.0 * report.precision * report.recall / pr : 0.0;
  return report;
}

std::string report_text(const EvalReport& report) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "matched %d of %d ground truths with %d counted detections over %zu images\n",
                report.total_matches, report.total_care_ground_truths,
                report.total_counted_detections, report.per_image.size());
  os << buf;
  std::snprintf(buf, sizeof(buf), "precision=%.4f\nrecall=%.4f\nf_measure=%.4f\n",
                report.precision, report.recall, report.f_measure);
  os << buf;
  return os.str();
}

}  // namespace textdet
