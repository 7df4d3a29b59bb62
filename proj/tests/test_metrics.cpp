#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "sssm/metrics.hpp"

using namespace sssm;

TEST_CASE("per_frame_accuracy: exact fractions and errors") {
  CHECK(per_frame_accuracy({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
  CHECK(per_frame_accuracy({0, 0, 0}, {1, 1, 1}) == doctest::Approx(0.0));
  CHECK(per_frame_accuracy({1, 2, 3, 4}, {1, 2, 3, 0}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(per_frame_accuracy({1}, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(per_frame_accuracy({}, {}), std::invalid_argument);
}

TEST_CASE("confusion_matrix: rows are truth, entries count frames") {
  const Eigen::MatrixXd cm =
      confusion_matrix({0, 1, 1, 0, 1}, {0, 1, 0, 0, 1}, 2);
  CHECK(cm(0, 0) == 2.0);
  CHECK(cm(0, 1) == 1.0);
  CHECK(cm(1, 0) == 0.0);
  CHECK(cm(1, 1) == 2.0);
  // Row sums equal the true class counts and the total equals the length.
  CHECK(cm.row(0).sum() == 3.0);
  CHECK(cm.row(1).sum() == 2.0);
  CHECK(cm.sum() == 5.0);
  CHECK_THROWS_AS(confusion_matrix({0}, {0, 1}, 2), std::invalid_argument);
}

TEST_CASE("segmentation_boundaries: positions of label changes") {
  CHECK(segmentation_boundaries({0, 0, 1, 1, 0}) == std::vector<int>{2, 4});
  CHECK(segmentation_boundaries({5, 5, 5}) == std::vector<int>{});
  CHECK(segmentation_boundaries({}) == std::vector<int>{});
  CHECK(segmentation_boundaries({1, 2, 3}) == std::vector<int>{1, 2});
}

TEST_CASE("boundary_offset: identical labelings score zero") {
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1, 0, 0};
  CHECK(boundary_offset(labels, labels) == doctest::Approx(0.0));
  // No boundaries at all also scores zero.
  CHECK(boundary_offset({0, 0, 0}, {0, 0, 0}) == doctest::Approx(0.0));
}

TEST_CASE("boundary_offset: uniform shift scores the shift") {
  std::vector<int> truth(100, 0), pred(100, 0);
  for (int t = 40; t < 100; ++t) truth[t] = 1;
  for (int t = 43; t < 100; ++t) pred[t] = 1;
  CHECK(boundary_offset(pred, truth) == doctest::Approx(3.0));
}

TEST_CASE("boundary_offset: unmatched boundaries cost the window") {
  std::vector<int> truth(100, 0), pred(100, 0);
  for (int t = 50; t < 100; ++t) truth[t] = 1;
  // Prediction matches the true boundary exactly but adds a spurious one far
  // away: one exact match (0) plus one spurious (window) averaged over 2.
  for (int t = 50; t < 100; ++t) pred[t] = 1;
  pred[5] = 2;
  CHECK(boundary_offset(pred, truth, 40) == doctest::Approx((0.0 + 2 * 40.0) / 3.0));
  // A prediction with no boundaries misses the true one entirely.
  CHECK(boundary_offset(std::vector<int>(100, 0), truth, 40) ==
        doctest::Approx(40.0));
  CHECK_THROWS_AS(boundary_offset({0}, {0, 1}), std::invalid_argument);
}
