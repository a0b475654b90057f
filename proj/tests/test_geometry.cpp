#include "persearch/geometry.hpp"

#include <gtest/gtest.h>

#include "persearch/rng.hpp"
#include "test_support.hpp"

using namespace persearch;

namespace {

const ImageExtent kExt{100, 100};

BoundingBox random_box(Rng& rng, const ImageExtent& ext) {
  const double x0 = rng.uniform(0.0, ext.width - 2.0);
  const double y0 = rng.uniform(0.0, ext.height - 2.0);
  const double x1 = rng.uniform(x0 + 0.5, static_cast<double>(ext.width));
  const double y1 = rng.uniform(y0 + 0.5, static_cast<double>(ext.height));
  return {x0, y0, x1, y1};
}

TEST(Iou, IdenticalBoxesGiveOne) {
  const BoundingBox b{0, 0, 100, 100};
  EXPECT_DOUBLE_EQ(iou(b, b), 1.0);
}

TEST(Iou, DisjointBoxesGiveZero) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
}

TEST(Iou, TouchingBoxesGiveZero) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {10, 0, 20, 10}), 0.0);
}

TEST(Iou, HalfOverlapMatchesAreaArithmetic) {
  // intersection 50x100 = 5000, union 2*10000 - 5000 = 15000
  EXPECT_NEAR(iou({0, 0, 100, 100}, {50, 0, 150, 100}), 5000.0 / 15000.0, 1e-12);
}

TEST(Iou, DegenerateBoxIsRejected) {
  EXPECT_THROW(iou({0, 0, 0, 10}, {0, 0, 10, 10}), std::invalid_argument);
  EXPECT_THROW(iou({0, 0, 10, 10}, {5, 5, 5, 5}), std::invalid_argument);
}

TEST(Iou, SymmetricInRangeAndMatchesReference) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const BoundingBox a = random_box(rng, kExt);
    const BoundingBox b = random_box(rng, kExt);
    const double ab = iou(a, b);
    EXPECT_DOUBLE_EQ(ab, iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    EXPECT_NEAR(ab, test_support::reference_iou(a, b), 1e-12);
  }
}

TEST(ApplyAction, ShrinkWidthScalesAboutCenter) {
  const BoundingBox out =
      apply_action({10, 10, 90, 90}, Action::kShrinkWidth, kExt, 0.1);
  EXPECT_NEAR(out.x_min, 14.0, 1e-9);
  EXPECT_NEAR(out.y_min, 10.0, 1e-9);
  EXPECT_NEAR(out.x_max, 86.0, 1e-9);
  EXPECT_NEAR(out.y_max, 90.0, 1e-9);
}

TEST(ApplyAction, MoveRightShiftsByAlphaWidth) {
  const BoundingBox out =
      apply_action({0, 0, 50, 100}, Action::kMoveRight, kExt, 0.1);
  EXPECT_NEAR(out.x_min, 5.0, 1e-9);
  EXPECT_NEAR(out.x_max, 55.0, 1e-9);
  EXPECT_NEAR(out.y_min, 0.0, 1e-9);
  EXPECT_NEAR(out.y_max, 100.0, 1e-9);
}

TEST(ApplyAction, TerminateIsAnExactNoOp) {
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    const BoundingBox b = random_box(rng, kExt);
    EXPECT_EQ(apply_action(b, Action::kTerminate, kExt), b);
  }
}

TEST(ApplyAction, AlphaOutsideRangeIsRejected) {
  const BoundingBox b{10, 10, 20, 20};
  EXPECT_THROW(apply_action(b, Action::kMoveUp, kExt, 0.0), std::invalid_argument);
  EXPECT_THROW(apply_action(b, Action::kMoveUp, kExt, 0.5), std::invalid_argument);
  EXPECT_THROW(apply_action(b, Action::kMoveUp, kExt, -0.1), std::invalid_argument);
}

TEST(ApplyAction, ResultsStayValidInBoundsAndAboveMinimumSize) {
  Rng rng(17);
  const double min_frac = kDefaultMinFrac;
  for (int i = 0; i < 5000; ++i) {
    const BoundingBox b = random_box(rng, kExt);
    const Action a = action_from_index(static_cast<int>(rng.uniform_int(8)));
    const BoundingBox out = apply_action(b, a, kExt, kDefaultAlpha, min_frac);
    EXPECT_TRUE(box_valid(out));
    EXPECT_TRUE(box_inside(out, kExt));
    EXPECT_GE(out.width(), min_frac * kExt.width - 1e-9);
    EXPECT_GE(out.height(), min_frac * kExt.height - 1e-9);
  }
}

TEST(ApplyAction, ShrinkThenExpandRestoresScaledWidthAndCenter) {
  Rng rng(19);
  const ImageExtent big{1000, 1000};
  for (int i = 0; i < 500; ++i) {
    // Keep the box far from the borders so no clamping kicks in.
    const double cx = rng.uniform(400.0, 600.0);
    const double cy = rng.uniform(400.0, 600.0);
    const double w = rng.uniform(100.0, 200.0);
    const double h = rng.uniform(100.0, 200.0);
    const BoundingBox b{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
    const double alpha = rng.uniform(0.05, 0.3);
    const BoundingBox out = apply_action(
        apply_action(b, Action::kShrinkWidth, big, alpha),
        Action::kExpandWidth, big, alpha);
    EXPECT_NEAR(out.width(), w * (1.0 - alpha) * (1.0 + alpha), 1e-9);
    EXPECT_NEAR(out.center_x(), b.center_x(), 1e-9);
    EXPECT_NEAR(out.center_y(), b.center_y(), 1e-9);
  }
}

TEST(ClampBox, ShiftsAFittingBoxMinimallyInside) {
  const BoundingBox out = clamp_box({-10, 0, 40, 100}, kExt);
  EXPECT_EQ(out, (BoundingBox{0, 0, 50, 100}));
}

TEST(ClampBox, LeavesAnInsideBoxUnchanged) {
  const BoundingBox b{0, 0, 100, 100};
  EXPECT_EQ(clamp_box(b, kExt), b);
}

TEST(ClampBox, CropsAnOversizeBoxToTheImage) {
  const BoundingBox out = clamp_box({-5, -5, 105, 105}, kExt);
  EXPECT_EQ(out, (BoundingBox{0, 0, 100, 100}));
}

TEST(ClampBox, EnforcesMinimumSize) {
  const BoundingBox out = clamp_box({50, 50, 51, 51}, kExt, 0.05);
  EXPECT_GE(out.width(), 5.0 - 1e-9);
  EXPECT_GE(out.height(), 5.0 - 1e-9);
  EXPECT_NEAR(out.center_x(), 50.5, 1e-9);
  EXPECT_NEAR(out.center_y(), 50.5, 1e-9);
}

TEST(ClampBox, Idempotent) {
  Rng rng(23);
  for (int i = 0; i < 5000; ++i) {
    // Boxes deliberately allowed to stick out or be tiny.
    const double x0 = rng.uniform(-50.0, 120.0);
    const double y0 = rng.uniform(-50.0, 120.0);
    const BoundingBox b{x0, y0, x0 + rng.uniform(0.5, 200.0),
                        y0 + rng.uniform(0.5, 200.0)};
    const BoundingBox once = clamp_box(b, kExt);
    EXPECT_EQ(clamp_box(once, kExt), once) << box_to_string(b);
  }
}

TEST(BoxSerialization, RoundTripsExactly) {
  Rng rng(29);
  for (int i = 0; i < 500; ++i) {
    const BoundingBox b = random_box(rng, kExt);
    const BoundingBox back = box_from_string(box_to_string(b));
    EXPECT_EQ(back, b);
  }
  EXPECT_THROW(box_from_string("1 2 3"), std::invalid_argument);
  EXPECT_THROW(box_from_string("a b c d"), std::invalid_argument);
}

TEST(Actions, NamesAndIndicesRoundTrip) {
  for (int i = 0; i < kNumActions; ++i) {
    const Action a = action_from_index(i);
    EXPECT_EQ(action_index(a), i);
    EXPECT_EQ(action_from_name(action_name(a)), a);
  }
  EXPECT_THROW(action_from_index(9), std::out_of_range);
  EXPECT_THROW(action_from_index(-1), std::out_of_range);
  EXPECT_THROW(action_from_name("sideways"), std::invalid_argument);
  EXPECT_STREQ(action_name(Action::kShrinkWidth), "shrink-width");
  EXPECT_STREQ(action_name(Action::kTerminate), "terminate");
}

TEST(Extent, TooSmallIsRejected) {
  EXPECT_THROW(require_valid(ImageExtent{15, 100}), std::invalid_argument);
  EXPECT_THROW(require_valid(ImageExtent{100, 8}), std::invalid_argument);
  EXPECT_NO_THROW(require_valid(ImageExtent{16, 16}));
}

}  // namespace
