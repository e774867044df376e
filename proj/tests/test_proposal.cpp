#include <catch2/catch_amalgamated.hpp>

#include "cmfd/proposal.hpp"
#include "cmfd/tensor.hpp"
#include "reference_selection.hpp"

using namespace cmfd;

TEST_CASE("avg_score: uniform map and 2x2 checker") {
  ScoreMap s(8, 8, 0.7);
  CHECK(avg_score(s, {1, 1, 5, 4}) == Catch::Approx(0.7));

  ScoreMap c(2, 2);
  c.at(0, 0) = 0;
  c.at(0, 1) = 0;
  c.at(1, 0) = 1;
  c.at(1, 1) = 1;
  CHECK(avg_score(c, {0, 0, 2, 2}) == Catch::Approx(0.5));
}

TEST_CASE("avg_score: matches a brute-force pixel loop") {
  Rng rng(101);
  ScoreMap s(64, 64);
  for (size_t i = 0; i < s.size(); ++i) s[i] = rng.uniform();
  for (int trial = 0; trial < 50; ++trial) {
    auto b = reference::fuzz_box(64, rng);
    Box box{b[0], b[1], b[2], b[3]};
    CHECK(avg_score(s, box) == Catch::Approx(reference::ref_avg(s, b)).margin(1e-9));
  }
}

TEST_CASE("avg_score: out-of-bounds box rejected") {
  ScoreMap s(8, 8);
  CHECK_THROWS_AS(avg_score(s, Box{0, 0, 9, 3}), std::invalid_argument);
  CHECK_THROWS_AS(avg_score(s, Box{3, 3, 3, 5}), std::invalid_argument);
}

TEST_CASE("iou: identical, disjoint, partial") {
  Box a{0, 0, 10, 10}, b{5, 5, 15, 15}, c{20, 20, 30, 30};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, c) == 0.0);
  CHECK(iou(a, b) == Catch::Approx(25.0 / 175.0));
}

TEST_CASE("intersection and merge") {
  CHECK(merge_boxes({0, 0, 2, 2}, {4, 4, 6, 6}) == Box{0, 0, 6, 6});
  CHECK(intersection_area({2, 2, 4, 4}, {0, 0, 10, 10}) == 4);  // nested
  CHECK(intersection_area({0, 0, 10, 10}, {5, 5, 15, 15}) == 25);
}

TEST_CASE("select_proposals: below-threshold proposal rejected") {
  ScoreMap s(32, 32, 0.39);
  auto out = select_proposals(s, {Box{0, 0, 8, 8}});
  CHECK(out.empty());
}

TEST_CASE("select_proposals: duplicate boxes collapse to one") {
  ScoreMap s(32, 32, 0.9);
  auto out = select_proposals(s, {Box{2, 2, 10, 10}, Box{2, 2, 10, 10}});
  REQUIRE(out.size() == 1);
  CHECK(out[0] == Box{2, 2, 10, 10});
}

TEST_CASE("select_proposals: oversized proposals are pre-filtered") {
  ScoreMap s(32, 32, 0.9);
  // 24x24 = 576 >= half of 1024
  auto out = select_proposals(s, {Box{0, 0, 24, 24}, Box{0, 0, 8, 8}});
  REQUIRE(out.size() == 1);
  CHECK(out[0] == Box{0, 0, 8, 8});
}

TEST_CASE("select_proposals: empty input, empty output") {
  ScoreMap s(16, 16, 0.9);
  CHECK(select_proposals(s, {}).empty());
}

TEST_CASE("select_proposals: matches the independent transcription on fuzz") {
  Rng rng(2024);
  SelectionParams params;
  for (int trial = 0; trial < 200; ++trial) {
    ScoreMap s = reference::fuzz_score_map(64, rng);
    int n = rng.uniform_int(0, 20);
    std::vector<reference::IBox> ref_boxes;
    std::vector<Box> boxes;
    for (int i = 0; i < n; ++i) {
      auto b = reference::fuzz_box(64, rng);
      ref_boxes.push_back(b);
      boxes.push_back({b[0], b[1], b[2], b[3]});
    }
    int sweeps = 0;
    auto got = select_proposals(s, boxes, params, &sweeps);
    auto want = reference::ref_select(s, ref_boxes, params.s_t, params.iou_t,
                                      params.inter_t, params.max_area_fraction);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i] == Box{want[i][0], want[i][1], want[i][2], want[i][3]});
    }
    // postconditions
    const double half_area = 0.5 * 64 * 64;
    for (const Box& b : got) {
      CHECK(avg_score(s, b) > params.s_t);
      CHECK(double(b.area()) < half_area);
    }
    CHECK(sweeps <= std::max(n, 1));
  }
}

TEST_CASE("select_proposals: deterministic") {
  Rng rng(77);
  ScoreMap s = reference::fuzz_score_map(64, rng);
  std::vector<Box> boxes;
  for (int i = 0; i < 12; ++i) {
    auto b = reference::fuzz_box(64, rng);
    boxes.push_back({b[0], b[1], b[2], b[3]});
  }
  auto a = select_proposals(s, boxes);
  auto b = select_proposals(s, boxes);
  CHECK(a == b);
}

TEST_CASE("select_proposals: phase-2 fixed point leaves no high-intersection pair") {
  Rng rng(88);
  SelectionParams params;
  for (int trial = 0; trial < 100; ++trial) {
    ScoreMap s = reference::fuzz_score_map(64, rng);
    std::vector<Box> boxes;
    int n = rng.uniform_int(2, 16);
    for (int i = 0; i < n; ++i) {
      auto b = reference::fuzz_box(64, rng);
      boxes.push_back({b[0], b[1], b[2], b[3]});
    }
    auto out = select_proposals(s, boxes, params);
    for (size_t i = 0; i < out.size(); ++i) {
      for (size_t j = i + 1; j < out.size(); ++j) {
        double rate_i = double(intersection_area(out[i], out[j])) / double(out[i].area());
        double rate_j = double(intersection_area(out[i], out[j])) / double(out[j].area());
        CHECK_FALSE((rate_i > params.inter_t || rate_j > params.inter_t));
      }
    }
  }
}
