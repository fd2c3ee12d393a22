#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "textdet/postprocess.hpp"

using namespace textdet;

namespace {

DetectionCandidate box(double x0, double y0, double x1, double y1, double score) {
  return {Quadrilateral::rect(x0, y0, x1, y1), score};
}

// Bridge fixture: A and B are disjoint word boxes; C straddles the gap with
// IoU exactly 0.45 against each (18 / (20 + 38 - 18)).
const DetectionCandidate kA = box(0, 0, 10, 2, 0.9);
const DetectionCandidate kB = box(11, 0, 21, 2, 0.85);
const DetectionCandidate kBridge = box(1, 0, 20, 2, 0.6);

bool same_quad(const Quadrilateral& a, const Quadrilateral& b) {
  for (int i = 0; i < 4; ++i) {
    if (std::abs(a.v[i].x - b.v[i].x) > 1e-12 || std::abs(a.v[i].y - b.v[i].y) > 1e-12)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("traditional_nms") {
  NmsConfig cfg;
  SUBCASE("single candidate survives") {
    std::vector<DetectionCandidate> in{box(0, 0, 1, 1, 0.7)};
    auto out = traditional_nms(in, cfg);
    REQUIRE(out.size() == 1);
    CHECK(out[0].score == 0.7);
  }
  SUBCASE("identical quads keep only the higher score") {
    std::vector<DetectionCandidate> in{box(0, 0, 1, 1, 0.8), box(0, 0, 1, 1, 0.9)};
    auto out = traditional_nms(in, cfg);
    REQUIRE(out.size() == 1);
    CHECK(out[0].score == 0.9);
  }
  SUBCASE("unit squares at offsets 0, 0.2, 5 keep offsets 0 and 5") {
    std::vector<DetectionCandidate> in{box(0, 0, 1, 1, 0.9), box(0.2, 0, 1.2, 1, 0.8),
                                       box(5, 0, 6, 1, 0.7)};
    auto out = traditional_nms(in, cfg);
    REQUIRE(out.size() == 2);
    CHECK(out[0].quad.v[0].x == 0.0);
    CHECK(out[1].quad.v[0].x == 5.0);
  }
  SUBCASE("kept pairs stay below the threshold") {
    Rng rng(41);
    std::vector<DetectionCandidate> in;
    for (int i = 0; i < 60; ++i) {
      in.push_back({test::random_convex_quad(rng), rng.uniform(0.1, 1.0)});
    }
    auto out = traditional_nms(in, cfg);
    for (size_t i = 0; i < out.size(); ++i) {
      for (size_t j = i + 1; j < out.size(); ++j) {
        CHECK(iou(out[i].quad, out[j].quad) < cfg.overlap_threshold);
      }
    }
  }
}

TEST_CASE("bridge fixture IoUs are as constructed") {
  CHECK(iou(kBridge.quad, kA.quad) == doctest::Approx(0.45));
  CHECK(iou(kBridge.quad, kB.quad) == doctest::Approx(0.45));
  CHECK(iou(kA.quad, kB.quad) == 0.0);
}

TEST_CASE("recalled_nms bridge scenario") {
  std::vector<DetectionCandidate> in{kA, kB, kBridge};
  SUBCASE("threshold 0.5: all three survive and stay separate") {
    NmsConfig cfg;
    cfg.overlap_threshold = 0.5;
    auto out = recalled_nms(in, cfg);
    REQUIRE(out.size() == 3);
  }
  SUBCASE("threshold 0.4: the bridge is absorbed, A and B remain exactly") {
    NmsConfig cfg;
    cfg.overlap_threshold = 0.4;
    auto out = recalled_nms(in, cfg);
    REQUIRE(out.size() == 2);
    CHECK(same_quad(out[0].quad, kA.quad));
    CHECK(same_quad(out[1].quad, kB.quad));
    CHECK(out[0].score == 0.9);
    CHECK(out[1].score == 0.85);
  }
}

TEST_CASE("recalled_nms duplicate switch collapses in step 3") {
  // G suppresses D in step 1; E and F survive but both switch to D in step 2;
  // step 3 merges the whole chain into one detection.
  DetectionCandidate g = box(0, 0, 10, 10, 1.0);
  DetectionCandidate d = box(3, 0, 13, 10, 0.95);
  DetectionCandidate e = box(6, 0, 16, 10, 0.9);
  DetectionCandidate f{Quadrilateral::rect(3, 3, 13, 13), 0.85};
  REQUIRE(iou(g.quad, d.quad) > 0.5);
  REQUIRE(iou(e.quad, d.quad) > 0.5);
  REQUIRE(iou(f.quad, d.quad) > 0.5);
  REQUIRE(iou(e.quad, g.quad) < 0.5);
  REQUIRE(iou(f.quad, g.quad) < 0.5);
  REQUIRE(iou(e.quad, f.quad) < 0.5);
  std::vector<DetectionCandidate> in{g, d, e, f};
  NmsConfig cfg;
  auto traditional = traditional_nms(in, cfg);
  CHECK(traditional.size() == 3);  // G, E, F
  auto out = recalled_nms(in, cfg);
  REQUIRE(out.size() == 1);
  CHECK(out[0].score == 1.0);
}

TEST_CASE("recalled_nms trivial inputs") {
  NmsConfig cfg;
  CHECK(recalled_nms(std::vector<DetectionCandidate>{}, cfg).empty());
  std::vector<DetectionCandidate> one{box(0, 0, 4, 2, 0.9)};
  auto out = recalled_nms(one, cfg);
  REQUIRE(out.size() == 1);
  CHECK(same_quad(out[0].quad, one[0].quad));
}

TEST_CASE("merge_group") {
  SUBCASE("singleton unchanged") {
    std::vector<DetectionCandidate> g{box(1, 2, 3, 4, 0.6)};
    DetectionCandidate m = merge_group(g);
    CHECK(same_quad(m.quad, g[0].quad));
    CHECK(m.score == 0.6);
  }
  SUBCASE("identical quads merge to themselves") {
    std::vector<DetectionCandidate> g{box(1, 2, 3, 4, 0.6), box(1, 2, 3, 4, 0.9)};
    DetectionCandidate m = merge_group(g);
    CHECK(same_quad(m.quad, g[0].quad));
    CHECK(m.score == 0.9);
  }
  SUBCASE("equal scores average the vertices") {
    std::vector<DetectionCandidate> g{box(0, 0, 2, 2, 0.5), box(1, 0, 3, 2, 0.5)};
    DetectionCandidate m = merge_group(g);
    CHECK(m.quad.v[0].x == doctest::Approx(0.5));
    CHECK(m.quad.v[1].x == doctest::Approx(2.5));
  }
  SUBCASE("keep-max rule returns the best member") {
    std::vector<DetectionCandidate> g{box(0, 0, 2, 2, 0.5), box(1, 0, 3, 2, 0.7)};
    DetectionCandidate m = merge_group(g, NmsConfig::MergeRule::KeepMax);
    CHECK(same_quad(m.quad, g[1].quad));
  }
}

TEST_CASE("recalled_nms structural properties on random candidate sets") {
  Rng rng(42);
  NmsConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DetectionCandidate> in;
    int n = 5 + rng.uniform_int(40);
    for (int i = 0; i < n; ++i) {
      in.push_back({test::random_convex_quad(rng), rng.uniform(0.05, 1.0)});
    }
    auto trad = traditional_nms(in, cfg);
    auto rec = recalled_nms(in, cfg);
    CHECK(rec.size() <= trad.size());

    // Merge outputs stay within the convex hull of the inputs' vertices.
    double min_x = 1e30, max_x = -1e30, min_y = 1e30, max_y = -1e30;
    for (const auto& c : in) {
      for (const Point2& p : c.quad.v) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
      }
    }
    for (const auto& c : rec) {
      for (const Point2& p : c.quad.v) {
        CHECK(p.x >= min_x - 1e-9);
        CHECK(p.x <= max_x + 1e-9);
        CHECK(p.y >= min_y - 1e-9);
        CHECK(p.y <= max_y + 1e-9);
      }
    }
    // Scores never drop below every absorbed survivor.
    double best_in = 0.0;
    for (const auto& c : in) best_in = std::max(best_in, c.score);
    double best_out = 0.0;
    for (const auto& c : rec) best_out = std::max(best_out, c.score);
    CHECK(best_out == doctest::Approx(best_in));

    // Deterministic: rerunning gives the same output.
    auto rec2 = recalled_nms(in, cfg);
    REQUIRE(rec2.size() == rec.size());
    for (size_t i = 0; i < rec.size(); ++i) {
      CHECK(same_quad(rec[i].quad, rec2[i].quad));
      CHECK(rec[i].score == rec2[i].score);
    }
  }
}

TEST_CASE("step-2 outputs are elements of the original candidate set") {
  Rng rng(43);
  NmsConfig cfg;
  std::vector<DetectionCandidate> in;
  for (int i = 0; i < 30; ++i) {
    in.push_back({test::random_convex_quad(rng), rng.uniform(0.05, 1.0)});
  }
  // KeepMax merge keeps step-2/3 outputs verbatim, so each final quad must be
  // one of the inputs.
  cfg.merge_rule = NmsConfig::MergeRule::KeepMax;
  for (const auto& c : recalled_nms(in, cfg)) {
    bool found = false;
    for (const auto& b : in) found = found || same_quad(c.quad, b.quad);
    CHECK(found);
  }
}
