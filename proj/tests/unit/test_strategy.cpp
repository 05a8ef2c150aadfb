#include <doctest.h>

#include "cvos/strategy.hpp"

using namespace cvos;

TEST_CASE("reference indices per strategy") {
  CHECK(reference_indices(RefStrategy::first, 7, 5) == std::vector<int>{0});
  CHECK(reference_indices(RefStrategy::prev, 7, 5) == std::vector<int>{6});
  CHECK(reference_indices(RefStrategy::first_prev, 7, 5) == std::vector<int>{0, 6});
  CHECK(reference_indices(RefStrategy::first_prev, 1, 5) == std::vector<int>{0});
  CHECK(reference_indices(RefStrategy::mem, 11, 5) == std::vector<int>{0, 5, 10});
  CHECK(reference_indices(RefStrategy::mem, 10, 5) == std::vector<int>{0, 5});
  CHECK(reference_indices(RefStrategy::mem, 3, 5) == std::vector<int>{0});
}

TEST_CASE("memory frames and names") {
  CHECK_FALSE(is_memory_frame(0, 5));
  CHECK(is_memory_frame(5, 5));
  CHECK_FALSE(is_memory_frame(6, 5));
  for (auto s : {RefStrategy::first, RefStrategy::prev, RefStrategy::first_prev, RefStrategy::mem}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  CHECK_THROWS(parse_strategy("nearest"));
}
