#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "textdet/errors.hpp"
#include "textdet/inference.hpp"

using namespace textdet;

TEST_CASE("plan_tiles") {
  DetectConfig cfg;
  SUBCASE("320x320 at scale 1 is a single tile") {
    cfg.scales = {1.0};
    auto plans = plan_tiles(320, 320, cfg);
    REQUIRE(plans.size() == 1);
    CHECK(plans[0].origin_x == 0);
    CHECK(plans[0].origin_y == 0);
  }
  SUBCASE("480x320 at scale 1 gives origins 0 and 160") {
    cfg.scales = {1.0};
    auto plans = plan_tiles(480, 320, cfg);
    REQUIRE(plans.size() == 2);
    CHECK(plans[0].origin_x == 0);
    CHECK(plans[1].origin_x == 160);
  }
  SUBCASE("640x640 at scale 1/2 is a single 320 tile") {
    cfg.scales = {0.5};
    auto plans = plan_tiles(640, 640, cfg);
    REQUIRE(plans.size() == 1);
    CHECK(plans[0].scaled_w == 320);
  }
  SUBCASE("scales below the minimum side are skipped") {
    cfg.scales = {0.03125, 1.0};
    auto plans = plan_tiles(200, 200, cfg);  // 200/32 = 6.25 < 16
    for (const TilePlan& p : plans) CHECK(p.scale == 1.0);
  }
  SUBCASE("last window clamps to the border") {
    cfg.scales = {1.0};
    auto plans = plan_tiles(500, 320, cfg);
    REQUIRE(plans.size() == 3);
    CHECK(plans[2].origin_x == 180);
  }
}

TEST_CASE("decode_candidates") {
  TilePlan plan;
  plan.scale = 1.0;
  plan.image_w = 320;
  plan.image_h = 320;
  plan.scaled_w = 320;
  plan.scaled_h = 320;
  plan.window = 320;
  DetectConfig cfg;

  Tensor cls({80, 80});
  Tensor loc({8, 80, 80});
  SUBCASE("all below threshold gives no candidates") {
    cls.fill(0.5f);
    CHECK(decode_candidates(cls, loc, plan, cfg).empty());
  }
  SUBCASE("one supra-threshold pixel decodes to the hand-mapped quad") {
    cls.at({14, 20}) = 0.9f;
    const float row[8] = {-40, -16, 60, -16, 60, 16, -40, 16};
    for (int ch = 0; ch < 8; ++ch) loc.at({ch, 14, 20}) = row[ch];
    auto cands = decode_candidates(cls, loc, plan, cfg);
    REQUIRE(cands.size() == 1);
    CHECK(cands[0].score == doctest::Approx(0.9));
    CHECK(cands[0].quad.v[0].x == doctest::Approx(40.0));
    CHECK(cands[0].quad.v[0].y == doctest::Approx(40.0));
    CHECK(cands[0].quad.v[2].x == doctest::Approx(140.0));
    CHECK(cands[0].quad.v[2].y == doctest::Approx(72.0));
  }
  SUBCASE("half-scale tiles double the coordinates on the way back") {
    TilePlan half = plan;
    half.scale = 0.5;
    half.image_w = 640;
    half.image_h = 640;
    cls.at({14, 20}) = 0.9f;
    const float row[8] = {-40, -16, 60, -16, 60, 16, -40, 16};
    for (int ch = 0; ch < 8; ++ch) loc.at({ch, 14, 20}) = row[ch];
    auto cands = decode_candidates(cls, loc, half, cfg);
    REQUIRE(cands.size() == 1);
    CHECK(cands[0].quad.v[0].x == doctest::Approx(80.0));
    CHECK(cands[0].quad.v[2].y == doctest::Approx(144.0));
  }
  SUBCASE("window origin shifts the mapping") {
    TilePlan shifted = plan;
    shifted.scaled_w = 480;
    shifted.origin_x = 160;
    cls.at({14, 20}) = 0.9f;
    const float row[8] = {-40, -16, 60, -16, 60, 16, -40, 16};
    for (int ch = 0; ch < 8; ++ch) loc.at({ch, 14, 20}) = row[ch];
    shifted.image_w = 480;
    auto cands = decode_candidates(cls, loc, shifted, cfg);
    REQUIRE(cands.size() == 1);
    CHECK(cands[0].quad.v[0].x == doctest::Approx(200.0));
  }
  SUBCASE("anchors in padding are discarded") {
    TilePlan padded = plan;
    padded.scaled_w = 100;  // right 220px of the window is zero padding
    padded.scaled_h = 100;
    padded.image_w = 100;
    padded.image_h = 100;
    cls.at({10, 30}) = 0.95f;  // anchor x = 120 >= 100
    const float row[8] = {-40, -16, 60, -16, 60, 16, -40, 16};
    for (int ch = 0; ch < 8; ++ch) loc.at({ch, 10, 30}) = row[ch];
    CHECK(decode_candidates(cls, loc, padded, cfg).empty());
  }
  SUBCASE("degenerate decoded quads are dropped") {
    cls.at({5, 5}) = 0.9f;  // loc row all zero: area 0 < 1
    CHECK(decode_candidates(cls, loc, plan, cfg).empty());
  }
}

TEST_CASE("detect_image with an injected forward") {
  // Fake model: fires on bright tiles at one fixed map pixel with a fixed
  // 100x32 box; blank tiles stay silent.
  DetectConfig cfg;
  cfg.scales = {1.0};
  TileForward fake = [](const Tensor& tile) {
    int m = tile.dim(1) / 4;
    Tensor cls({m, m});
    Tensor loc({8, m, m});
    double mean = 0.0;
    for (int64_t i = 0; i < tile.numel(); ++i) mean += tile[i];
    mean /= static_cast<double>(tile.numel());
    if (mean > 0.0) {
      cls.at({14, 20}) = 0.9f;
      const float row[8] = {-40, -16, 60, -16, 60, 16, -40, 16};
      for (int ch = 0; ch < 8; ++ch) loc.at({ch, 14, 20}) = row[ch];
    }
    return std::make_pair(cls, loc);
  };

  SUBCASE("blank image gives an empty list") {
    Image blank(480, 320, 3);  // zeros -> normalized mean -0.5
    CHECK(detect_image(fake, blank, cfg).empty());
  }
  SUBCASE("bright image fires once per tile, mapped by each tile's origin") {
    Image bright(480, 320, 3);
    std::fill(bright.pixels.begin(), bright.pixels.end(), uint8_t{255});
    auto cands = detect_image(fake, bright, cfg);
    REQUIRE(cands.size() == 2);  // origins 0 and 160
    CHECK(cands[0].quad.v[0].x == doctest::Approx(40.0));
    CHECK(cands[1].quad.v[0].x == doctest::Approx(200.0));
  }
}

TEST_CASE("candidate line format round-trips") {
  std::vector<DetectionCandidate> cands;
  cands.push_back({Quadrilateral::rect(4.25, 8.5, 104.75, 40.5), 0.8125});
  cands.push_back({Quadrilateral::rect(0, 0, 10, 5), 0.5});
  std::string text = format_candidates(cands);
  CHECK(text ==
        "4.25,8.50,104.75,8.50,104.75,40.50,4.25,40.50,0.8125\n"
        "0.00,0.00,10.00,0.00,10.00,5.00,0.00,5.00,0.5000\n");
  auto parsed = parse_candidates(text);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].score == doctest::Approx(0.8125));
  CHECK(parsed[0].quad.v[2].x == doctest::Approx(104.75));
  CHECK_THROWS_AS(parse_candidates("1,2,3\n"), ParseError);
}
